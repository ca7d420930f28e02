use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use curriflow::curriculum::Density;
use curriflow::flow::{self, FlowError, RunConfig};
use curriflow::llm::ProviderKind;
use curriflow::sim::Task;

#[derive(Parser)]
#[command(name = "curriflow", version, about = "Curriculum RL with LLM-generated curricula and reward programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy, or continue an interrupted run with --resume.
    Train {
        #[arg(long, default_value = "overtaking")]
        scenario: Task,
        #[arg(long, default_value_t = 3000)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "mock")]
        provider: ProviderKind,
        #[arg(long)]
        mock_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip the reward workflow and train on the built-in sparse program.
        #[arg(long)]
        fixed_reward: bool,
        /// Skip the curriculum workflow and train on --target-density.
        #[arg(long)]
        no_curriculum: bool,
        #[arg(long, default_value = "low")]
        target_density: Density,
        /// Reward program used if none can be generated at initialization.
        #[arg(long)]
        fallback_reward: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Continue the run in --out from its latest checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Greedy evaluation of a checkpoint with interactive traffic.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "overtaking")]
        task: Task,
        /// Repeat for several densities; all four when omitted.
        #[arg(long)]
        density: Vec<Density>,
        #[arg(long, default_value_t = 100)]
        episodes: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        decision_interval: u32,
    },
    /// Write training_curve.csv and eval_table.csv for a run.
    Export {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        /// Dump this many greedy evaluation trajectories as CSV.
        #[arg(long, default_value_t = 0)]
        trajectories: u32,
    },
}

fn run(cli: Cli) -> Result<(), FlowError> {
    match cli.command {
        Command::Train {
            scenario,
            episodes,
            seed,
            provider,
            mock_dir,
            out,
            fixed_reward,
            no_curriculum,
            target_density,
            fallback_reward,
            endpoint,
            model,
            resume,
        } => {
            let summary = if resume {
                flow::resume(&out)?
            } else {
                let mut cfg = RunConfig::new(scenario, episodes, seed, &out);
                cfg.provider.kind = provider;
                cfg.provider.mock_dir = mock_dir;
                if let Some(e) = endpoint {
                    cfg.provider.endpoint = e;
                }
                if let Some(m) = model {
                    cfg.provider.model = m;
                }
                cfg.fixed_reward = fixed_reward;
                cfg.no_curriculum = no_curriculum;
                cfg.target_density = target_density;
                if let Some(p) = fallback_reward {
                    cfg.fallback_reward = Some(std::fs::read_to_string(&p).map_err(|e| FlowError::Config(format!("{}: {e}", p.display())))?);
                }
                flow::train(cfg)?
            };
            println!("trained {} episodes with {} updates into {}", summary.episodes, summary.updates, summary.out.display());
            if let Some(r) = summary.eval {
                for c in &r.cells {
                    let (s, co, to) = c.rates();
                    println!("{:<7} S {s:5.1}  C {co:5.1}  TO {to:5.1}", c.density.name());
                }
            }
        }
        Command::Evaluate { checkpoint, task, density, episodes, out, decision_interval } => {
            let densities = if density.is_empty() { Density::ALL.to_vec() } else { density };
            let report = flow::evaluate(&checkpoint, task, &densities, episodes, decision_interval)?;
            std::fs::create_dir_all(&out)?;
            let names: Vec<&str> = densities.iter().map(|d| d.name()).collect();
            let path = out.join(format!("{}_{}.json", task.as_str(), names.join("-")));
            report.write_json(&path)?;
            for c in &report.cells {
                let (s, co, to) = c.rates();
                println!("{:<7} S {s:5.1}  C {co:5.1}  TO {to:5.1}", c.density.name());
            }
            println!("wrote {}", path.display());
        }
        Command::Export { run, window, trajectories } => {
            let s = flow::export_run(&run, window, trajectories)?;
            println!("{} ({} rows)", s.training_curve.display(), s.curve_rows);
            println!("{} ({} rows)", s.eval_table.display(), s.eval_rows);
            for p in s.trajectories {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
