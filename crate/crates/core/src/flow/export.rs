use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::{derive_seed, run_episode, EvalReport, FlowError, RunConfig, CHECKPOINT_DIR, CONFIG_SNAPSHOT, EVAL_SEED_BASE, FINAL_CHECKPOINT, LATEST_CHECKPOINT};
use crate::curriculum::{CurriculumId, Density, MotionMode};
use crate::memory::{self, EpisodeRecord};
use crate::rl::load_checkpoint;
use crate::sim::write_trajectory_csv;

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSummary {
    pub training_curve: PathBuf,
    pub curve_rows: usize,
    pub eval_table: PathBuf,
    pub eval_rows: usize,
    pub trajectories: Vec<PathBuf>,
}

/// Rows of the training curve: one per `window` consecutive episodes (the
/// last one may be partial). Component columns are the union over all
/// programs in order of first use; a window where a component never occurs
/// leaves the cell empty.
pub fn training_curve(records: &[EpisodeRecord], window: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        for k in r.components.keys() {
            if !names.contains(k) {
                names.push(k.clone());
            }
        }
    }
    let mut header = vec!["episode".to_string(), "mean_reward".to_string()];
    header.extend(names.iter().cloned());
    header.push("curriculum".into());
    let mut rows = Vec::new();
    for chunk in records.chunks(window.max(1)) {
        let n = chunk.len() as f64;
        let mut row = vec![
            chunk[chunk.len() - 1].episode.to_string(),
            (chunk.iter().map(|r| r.total_reward).sum::<f64>() / n).to_string(),
        ];
        for name in &names {
            let vals: Vec<f64> = chunk.iter().filter_map(|r| r.components.get(name).copied()).collect();
            row.push(if vals.is_empty() { String::new() } else { (vals.iter().sum::<f64>() / vals.len() as f64).to_string() });
        }
        let mut counts: IndexMap<String, usize> = IndexMap::new();
        for r in chunk {
            *counts.entry(r.curriculum.tag()).or_insert(0) += 1;
        }
        // Most frequent tag; ties go to the earliest.
        let mode = counts.iter().fold(None::<(&String, usize)>, |best, (k, &v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((k, v)),
        });
        row.push(mode.map(|(k, _)| k.clone()).unwrap_or_default());
        rows.push(row);
    }
    (header, rows)
}

fn eval_reports(run: &Path) -> Result<Vec<(String, EvalReport)>, FlowError> {
    let dir = run.join("eval");
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((stem, EvalReport::read_json(&p)?))
        })
        .collect()
}

fn write_eval_table(path: &Path, run_name: &str, reports: &[(String, EvalReport)]) -> Result<(), FlowError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["run".to_string(), "report".to_string(), "task".to_string()];
    for d in Density::ALL {
        for m in ["S", "C", "TO"] {
            header.push(format!("{}_{m}", d.name()));
        }
    }
    w.write_record(&header)?;
    for (stem, r) in reports {
        let mut row = vec![run_name.to_string(), stem.clone(), r.task.as_str().to_string()];
        for d in Density::ALL {
            match r.cell(d) {
                Some(c) => {
                    let (s, co, to) = c.rates();
                    row.extend([format!("{s:.1}"), format!("{co:.1}"), format!("{to:.1}")]);
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Greedy rollouts of the run's final (or latest) checkpoint on the first
/// `count` evaluation seeds of `density`, one CSV per episode.
pub fn dump_trajectories(run: &Path, density: Density, count: u32) -> Result<Vec<PathBuf>, FlowError> {
    let cfg = RunConfig::from_toml(&fs::read_to_string(run.join(CONFIG_SNAPSHOT))?)?;
    let ckpt_dir = run.join(CHECKPOINT_DIR);
    let ckpt = [FINAL_CHECKPOINT, LATEST_CHECKPOINT]
        .iter()
        .map(|n| ckpt_dir.join(n))
        .find(|p| p.exists())
        .ok_or_else(|| FlowError::Config(format!("{} has no checkpoint", run.display())))?;
    let state = load_checkpoint(&ckpt)?;
    let out_dir = run.join("trajectories");
    fs::create_dir_all(&out_dir)?;
    let curriculum = CurriculumId::new(density, MotionMode::Interactive);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut out = Vec::new();
    for i in 0..count as u64 {
        let seed = derive_seed(EVAL_SEED_BASE, density as u64, i);
        let run = run_episode(&cfg.scenario, curriculum, seed, None, cfg.decision_interval, true, &mut |obs| {
            state.policy.act(ndarray::ArrayView1::from(&obs[..]), true, &mut rng)
        })?;
        let path = out_dir.join(format!("{}_{}_{i:03}.csv", cfg.scenario.task.as_str(), density.name()));
        write_trajectory_csv(&path, run.trajectory.as_deref().unwrap_or_default())?;
        out.push(path);
    }
    Ok(out)
}

/// Writes `training_curve.csv` and `eval_table.csv` into the run directory.
/// `window` defaults to the run's curriculum cadence.
pub fn export_run(run: &Path, window: Option<usize>, trajectories: u32) -> Result<ExportSummary, FlowError> {
    let cfg = RunConfig::from_toml(&fs::read_to_string(run.join(CONFIG_SNAPSHOT))?)?;
    let history = memory::load(run)?;
    let window = window.unwrap_or(cfg.n_c as usize);
    let (header, rows) = training_curve(&history.episodes, window);
    let curve_path = run.join("training_curve.csv");
    let mut w = csv::Writer::from_path(&curve_path)?;
    w.write_record(&header)?;
    for r in &rows {
        w.write_record(r)?;
    }
    w.flush()?;
    let reports = eval_reports(run)?;
    let table_path = run.join("eval_table.csv");
    let name = run.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write_eval_table(&table_path, &name, &reports)?;
    let traj = if trajectories > 0 { dump_trajectories(run, cfg.target_density, trajectories)? } else { Vec::new() };
    Ok(ExportSummary {
        training_curve: curve_path,
        curve_rows: rows.len(),
        eval_table: table_path,
        eval_rows: reports.len(),
        trajectories: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::Origin;
    use crate::sim::OutcomeKind;

    fn rec(episode: u64, comps: &[(&str, f64)], d: Density) -> EpisodeRecord {
        EpisodeRecord {
            episode,
            seed: 0,
            curriculum: CurriculumId::new(d, MotionMode::Interactive),
            origin: Origin::Llm,
            outcome: OutcomeKind::Timeout,
            steps: 10,
            total_reward: comps.iter().map(|c| c.1).sum(),
            components: comps.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            reward_fingerprint: String::new(),
            lane_changes: 0,
            eval_errors: 0,
            div_by_zero_steps: 0,
        }
    }

    #[test]
    fn curve_rows_and_component_schema() {
        let mut recs: Vec<_> = (0..4).map(|e| rec(e, &[("a", 1.0)], Density::Low)).collect();
        recs.extend((4..6).map(|e| rec(e, &[("a", 3.0), ("b", 2.0)], Density::High)));
        let (h, rows) = training_curve(&recs, 2);
        assert_eq!(h, vec!["episode", "mean_reward", "a", "b", "curriculum"]);
        assert_eq!(rows.len(), 3);
        let low = CurriculumId::new(Density::Low, MotionMode::Interactive).tag();
        assert_eq!(rows[0], ["1", "1", "1", "", low.as_str()]);
        assert_eq!(rows[2][3], "2");
        assert_eq!(rows[2][1], "5");
    }
}
