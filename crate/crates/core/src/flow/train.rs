use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    derive_seed, evaluate_policy, run_episode, EvalReport, FlowError, RunConfig, Transition, BASELINE_REWARD,
    CHECKPOINT_DIR, CONFIG_SNAPSHOT, FINAL_CHECKPOINT, LATEST_CHECKPOINT, METRICS_FILE, STREAM_ENV, STREAM_INIT,
    STREAM_POLICY, STREAM_SELECT,
};
use crate::control::HEAD_SIZES;
use crate::curriculum::CurriculumWorkflow;
use crate::curriculum::{CurriculumId, CurriculumSet, MotionMode, Origin};
use crate::llm::{prompts, AgentRole, Gateway, GatewayError, PromptContext, TranscriptSink};
use crate::memory::{window_stats, EpisodeRecord, RewardEvent, RewardHistoryEntry, RunHistory, RunStore};
use crate::reward::{AccessibleVars, LintBounds, LintWarning, RewardProgram};
use crate::rl::{gae, load_checkpoint_with_meta, save_checkpoint_with_meta, Batch, TrainState, UpdateStats};
use crate::sim::OBS_DIM;

const METRICS_HEADER: &str =
    "update,episode,samples,policy_loss,value_loss,entropy,approx_kl,clip_fraction,actor_grad_norm,critic_grad_norm,restored";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub out: PathBuf,
    /// Episodes completed so far.
    pub episodes: u64,
    pub updates: u64,
    /// False when the run stopped early on request.
    pub finished: bool,
    pub eval: Option<EvalReport>,
}

#[derive(Debug, Clone)]
struct ActiveReward {
    program: RewardProgram,
    warnings: Vec<LintWarning>,
    generation: u32,
}

#[derive(Default)]
struct Buffer {
    obs: Vec<f64>,
    actions: Vec<Vec<usize>>,
    log_probs: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

impl Buffer {
    fn push_episode(&mut self, transitions: &[Transition], gamma: f64, lambda: f64) -> Result<(), FlowError> {
        let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = transitions.iter().map(|t| t.value).collect();
        // Every episode ends in a terminal outcome (timeout included).
        let (adv, ret) = gae(&rewards, &values, 0.0, gamma, lambda)?;
        for t in transitions {
            self.obs.extend_from_slice(&t.obs);
            self.actions.push(t.action.to_vec());
            self.log_probs.push(t.log_prob);
        }
        self.advantages.extend(adv);
        self.returns.extend(ret);
        Ok(())
    }

    fn take(&mut self) -> Batch {
        let b = std::mem::take(self);
        let n = b.actions.len();
        Batch {
            obs: Array2::from_shape_vec((n, OBS_DIM), b.obs).expect("rows of OBS_DIM"),
            actions: b.actions,
            old_log_probs: Array1::from(b.log_probs),
            advantages: Array1::from(b.advantages),
            returns: Array1::from(b.returns),
        }
    }
}

/// A run in progress. Built by [`train`] or [`resume`].
pub struct Trainer {
    cfg: RunConfig,
    store: RunStore,
    gateway: Option<Gateway>,
    ctx: PromptContext,
    workflow: CurriculumWorkflow,
    active: Option<ActiveReward>,
    reward_analysis: Option<String>,
    reward_steps: u32,
    bounds: LintBounds,
    state: TrainState,
    buffer: Buffer,
    updates: u64,
    next: u64,
}

fn checkpoint_dir(out: &Path) -> PathBuf {
    out.join(CHECKPOINT_DIR)
}

fn build_gateway(cfg: &RunConfig) -> Result<Option<Gateway>, FlowError> {
    if cfg.fixed_reward && cfg.no_curriculum {
        return Ok(None);
    }
    Gateway::from_config(cfg.provider.clone()).map(Some).map_err(FlowError::Config)
}

fn initial_state(cfg: &RunConfig) -> TrainState {
    TrainState::new(OBS_DIM, &cfg.hidden, &HEAD_SIZES, &cfg.ppo, derive_seed(cfg.seed, STREAM_INIT, 0))
}

/// Starts a new run in `cfg.out`.
pub fn train(cfg: RunConfig) -> Result<TrainSummary, FlowError> {
    Trainer::create(cfg)?.run(None)
}

/// Continues the run in `dir` from its latest checkpoint.
pub fn resume(dir: &Path) -> Result<TrainSummary, FlowError> {
    Trainer::open(dir)?.run(None)
}

impl Trainer {
    pub fn create(cfg: RunConfig) -> Result<Self, FlowError> {
        cfg.validate()?;
        let gateway = build_gateway(&cfg)?;
        let store = RunStore::create(&cfg.out)?;
        fs::write(cfg.out.join(CONFIG_SNAPSHOT), cfg.to_toml()?)?;
        fs::create_dir_all(checkpoint_dir(&cfg.out))?;
        fs::write(cfg.out.join(METRICS_FILE), format!("{METRICS_HEADER}\n"))?;
        let state = initial_state(&cfg);
        Ok(Self::assemble(cfg, store, gateway, state))
    }

    /// Reopens a run directory. Everything recorded after the latest
    /// checkpoint is discarded and replayed.
    pub fn open(dir: &Path) -> Result<Self, FlowError> {
        let mut cfg = RunConfig::from_toml(&fs::read_to_string(dir.join(CONFIG_SNAPSHOT))?)?;
        cfg.out = dir.to_path_buf();
        cfg.validate()?;
        let mut gateway = build_gateway(&cfg)?;
        let (mut store, _) = RunStore::open(dir)?;
        let latest = checkpoint_dir(dir).join(LATEST_CHECKPOINT);
        let (state, boundary) = if latest.exists() {
            let (state, meta) = load_checkpoint_with_meta(&latest)?;
            let episodes = meta.get("episodes").copied().unwrap_or(0.0) as u64;
            (state, episodes)
        } else {
            (initial_state(&cfg), 0)
        };
        let history = store.truncate_from(boundary)?;
        if let Some(g) = gateway.as_mut() {
            for role in AgentRole::ALL {
                let calls = history.transcripts.iter().filter(|t| t.role == role).count();
                g.provider_mut().fast_forward(role, calls);
            }
        }
        truncate_metrics(&dir.join(METRICS_FILE), boundary)?;
        let mut t = Self::assemble(cfg, store, gateway, state);
        t.restore(&history, boundary)?;
        log::info!("resuming {} at episode {boundary}", dir.display());
        Ok(t)
    }

    fn assemble(cfg: RunConfig, store: RunStore, gateway: Option<Gateway>, state: TrainState) -> Self {
        let ctx = PromptContext::new(cfg.scenario.clone());
        let workflow = CurriculumWorkflow::new(CurriculumSet::default(), cfg.epsilon);
        let bounds = LintBounds::from_scenario(&cfg.scenario);
        Self {
            cfg,
            store,
            gateway,
            ctx,
            workflow,
            active: None,
            reward_analysis: None,
            reward_steps: 0,
            bounds,
            state,
            buffer: Buffer::default(),
            updates: 0,
            next: 0,
        }
    }

    fn restore(&mut self, history: &RunHistory, boundary: u64) -> Result<(), FlowError> {
        self.workflow = CurriculumWorkflow::restore(self.workflow.set.clone(), self.cfg.epsilon, history.curriculum.clone())?;
        self.reward_steps = history.reward_events.len() as u32;
        if let Some(last) = history.reward_history().last() {
            let program = RewardProgram::parse(&last.source)?;
            let warnings = program.lint(&self.bounds);
            self.reward_analysis = Some(last.analysis.clone()).filter(|a| !a.is_empty());
            self.active = Some(ActiveReward { program, warnings, generation: last.generation });
        }
        self.updates = boundary / self.cfg.n_p;
        self.next = boundary;
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    /// Trains until the configured episode count, or stops after
    /// `halt_after` episodes have completed without finalizing.
    pub fn run(mut self, halt_after: Option<u64>) -> Result<TrainSummary, FlowError> {
        let curriculum_on = !self.cfg.no_curriculum;
        let target = CurriculumId::new(self.cfg.target_density, MotionMode::Interactive);
        for e in self.next..self.cfg.episodes {
            let mut pending = None;
            if curriculum_on && e % self.cfg.n_c == 0 {
                pending = Some(self.curriculum_step(e)?);
            }
            if e % self.cfg.n_r == 0 && (e == 0 || !self.cfg.fixed_reward) {
                self.reward_step(e)?;
            }
            let (curriculum, origin) = if curriculum_on {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, STREAM_SELECT, e));
                self.workflow.deploy(e, &mut rng)?
            } else {
                (target, Origin::Fixed)
            };
            if let Some(report) = pending {
                let d = self.workflow.record(&report, curriculum, origin)?;
                self.store.append_curriculum(&d)?;
            }
            self.run_training_episode(e, curriculum, origin)?;
            self.next = e + 1;
            if self.next.is_multiple_of(self.cfg.n_p) {
                self.update()?;
            }
            if halt_after == Some(self.next) && self.next < self.cfg.episodes {
                return Ok(self.summary(false, None));
            }
        }
        self.finish()
    }

    fn run_training_episode(&mut self, e: u64, curriculum: CurriculumId, origin: Origin) -> Result<(), FlowError> {
        let active = self.active.as_ref().expect("a reward program is active after initialization");
        let env_seed = derive_seed(self.cfg.seed, STREAM_ENV, e);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, STREAM_POLICY, e));
        let policy = &self.state.policy;
        let run = run_episode(
            &self.cfg.scenario,
            curriculum,
            env_seed,
            Some(&active.program),
            self.cfg.decision_interval,
            false,
            &mut |obs| policy.act(ndarray::ArrayView1::from(&obs[..]), false, &mut rng),
        )?;
        if run.eval_errors > 0 {
            log::warn!("episode {e}: {} reward evaluation error(s) scored as 0", run.eval_errors);
        }
        self.buffer.push_episode(&run.transitions, self.cfg.ppo.gamma, self.cfg.ppo.lambda)?;
        self.store.append_episode(&EpisodeRecord {
            episode: e,
            seed: env_seed,
            curriculum,
            origin,
            outcome: run.outcome,
            steps: run.steps,
            total_reward: run.total_reward,
            components: run.components,
            reward_fingerprint: active.program.fingerprint_hex(),
            lane_changes: run.lane_changes,
            eval_errors: run.eval_errors,
            div_by_zero_steps: run.div_by_zero_steps,
        })?;
        Ok(())
    }

    fn update(&mut self) -> Result<(), FlowError> {
        let batch = self.buffer.take();
        let stats = self.state.update(&batch, &self.cfg.ppo)?;
        if stats.restored {
            log::warn!("update at episode {}: non-finite values, parameters restored", self.next);
        }
        self.updates += 1;
        self.append_metrics(batch.len(), &stats)?;
        let dir = checkpoint_dir(&self.cfg.out);
        let meta = [("episodes", self.next as f64), ("updates", self.updates as f64)];
        save_checkpoint_with_meta(&dir.join(LATEST_CHECKPOINT), &self.state, &meta)?;
        if self.next.is_multiple_of(self.cfg.n_r) {
            save_checkpoint_with_meta(&dir.join(format!("episode_{:06}.bin", self.next)), &self.state, &meta)?;
        }
        Ok(())
    }

    fn append_metrics(&self, samples: usize, s: &UpdateStats) -> Result<(), FlowError> {
        let mut f = fs::OpenOptions::new().append(true).open(self.cfg.out.join(METRICS_FILE))?;
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.updates,
            self.next,
            samples,
            s.last.policy,
            s.last.value,
            s.last.entropy,
            s.last.approx_kl,
            s.last.clip_fraction,
            s.actor_grad_norm,
            s.critic_grad_norm,
            s.restored
        )?;
        Ok(())
    }

    fn finish(self) -> Result<TrainSummary, FlowError> {
        let dir = checkpoint_dir(&self.cfg.out);
        let meta = [("episodes", self.next as f64), ("updates", self.updates as f64)];
        save_checkpoint_with_meta(&dir.join(FINAL_CHECKPOINT), &self.state, &meta)?;
        if !self.buffer.actions.is_empty() {
            log::info!("{} samples after the last update were not trained on", self.buffer.actions.len());
        }
        let eval = if self.cfg.eval_densities.is_empty() || self.cfg.eval_episodes == 0 {
            None
        } else {
            let label = self.cfg.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let report = evaluate_policy(
                &self.state.policy,
                &self.cfg.scenario,
                &self.cfg.eval_densities,
                self.cfg.eval_episodes,
                self.cfg.decision_interval,
                &label,
            )?;
            fs::create_dir_all(self.cfg.out.join("eval"))?;
            report.write_json(&self.cfg.out.join("eval").join("final.json"))?;
            Some(report)
        };
        Ok(self.summary(true, eval))
    }

    fn summary(&self, finished: bool, eval: Option<EvalReport>) -> TrainSummary {
        TrainSummary { out: self.cfg.out.clone(), episodes: self.next, updates: self.updates, finished, eval }
    }

    fn curriculum_step(&mut self, e: u64) -> Result<crate::curriculum::StepReport, FlowError> {
        let stats = window_stats(self.store.records(), self.cfg.n_c as usize).ok();
        let program = self.active.as_ref().map(|a| (&a.program, a.warnings.as_slice()));
        let gateway = self.gateway.as_mut().expect("gateway exists when the curriculum workflow is on");
        let report = self.workflow.step(e, &self.ctx, stats.as_ref(), program, gateway, &mut self.store)?;
        if report.fallback {
            log::warn!("episode {e}: curriculum workflow failed, keeping {}", report.curriculum);
        }
        Ok(report)
    }

    fn reward_step(&mut self, e: u64) -> Result<(), FlowError> {
        let generation = self.reward_steps;
        self.reward_steps += 1;
        if self.cfg.fixed_reward {
            let program = RewardProgram::parse(BASELINE_REWARD)?;
            return self.activate(e, generation, program, "fixed baseline program".into());
        }
        let outcome = self.generate_reward(e)?;
        match (outcome, self.active.as_ref()) {
            (Ok((program, analysis)), _) => self.activate(e, generation, program, analysis),
            (Err(error), Some(active)) => {
                log::warn!("episode {e}: reward workflow failed ({error}); generation {} stays active", active.generation);
                let ev = RewardEvent::Retained { generation, episode: e, active_generation: active.generation, error };
                self.store.append_reward(&ev)?;
                Ok(())
            }
            (Err(error), None) => match self.cfg.fallback_reward.clone() {
                Some(src) => {
                    log::warn!("episode {e}: reward workflow failed ({error}); using the configured fallback program");
                    let program = RewardProgram::parse(&src)?;
                    self.activate(e, generation, program, format!("fallback program ({error})"))
                }
                None => Err(FlowError::NoInitialReward(error)),
            },
        }
    }

    /// Reflection (when a program is active), analysis, then generation.
    /// The inner error is a gateway exhaustion message.
    fn generate_reward(&mut self, e: u64) -> Result<Result<(RewardProgram, String), String>, FlowError> {
        let stats = window_stats(self.store.records(), self.cfg.n_r as usize);
        let gateway = self.gateway.as_mut().expect("gateway exists when the reward workflow is on");
        let sink: &mut dyn TranscriptSink = &mut self.store;
        let current = self.active.as_ref().map(|a| (&a.program, a.warnings.as_slice()));
        let mut feedback = None;
        if let (Some(a), Ok(stats)) = (self.active.as_ref(), stats) {
            let summary = prompts::build_reflection_summary(&stats, self.workflow.history(), Some(&a.program), &a.warnings);
            let bundle = prompts::reflection(&self.ctx, AgentRole::RewardReflection, &summary);
            feedback = Some(match gateway.complete(&bundle, e, sink) {
                Ok(text) => format!("{summary}\nReflection:\n{}", text.trim()),
                Err(GatewayError::Unavailable { .. }) => summary,
                Err(err) => return Err(err.into()),
            });
        }
        let bundle = prompts::reward_analysis(&self.ctx, current, self.reward_analysis.as_deref(), feedback.as_deref());
        let analysis = match gateway.complete(&bundle, e, sink) {
            Ok(text) => text,
            Err(GatewayError::Unavailable { last_error, .. }) => return Ok(Err(format!("analysis: {last_error}"))),
            Err(err) => return Err(err.into()),
        };
        let bundle = prompts::reward_generation(&self.ctx, &analysis, current, feedback.as_deref());
        match gateway.request(&bundle, e, sink, |text| extract_reward(text, &self.cfg.scenario)) {
            Ok(program) => Ok(Ok((program, analysis))),
            Err(GatewayError::Unavailable { last_error, .. }) => Ok(Err(format!("generation: {last_error}"))),
            Err(err) => Err(err.into()),
        }
    }

    fn activate(&mut self, e: u64, generation: u32, program: RewardProgram, analysis: String) -> Result<(), FlowError> {
        let warnings = program.lint(&self.bounds);
        for w in &warnings {
            log::warn!("reward generation {generation}: {w}");
        }
        let entry = RewardHistoryEntry {
            generation,
            source: program.source.clone(),
            fingerprint: program.fingerprint_hex(),
            start: e,
            end: None,
            lint_warnings: warnings.iter().map(ToString::to_string).collect(),
            analysis: analysis.clone(),
        };
        self.store.append_reward(&RewardEvent::Activated(entry))?;
        self.reward_analysis = Some(analysis).filter(|a| !a.is_empty());
        self.active = Some(ActiveReward { program, warnings, generation });
        Ok(())
    }
}

/// Extraction for reward-generation replies: one fenced block that parses
/// and evaluates to finite values on probe states.
pub(crate) fn extract_reward(text: &str, scenario: &crate::sim::ScenarioConfig) -> Result<RewardProgram, String> {
    let src = prompts::extract_program_block(text).map_err(|e| e.to_string())?;
    let program = RewardProgram::parse(&src).map_err(|e| format!("parse error ({}): {e}", e.kind()))?;
    let start = AccessibleVars {
        v_ego: scenario.ego_start_speed,
        v_limit: scenario.v_limit,
        dist_to_goal: scenario.destination().0,
        step: 1,
        max_steps: scenario.max_steps,
        ..AccessibleVars::default()
    };
    let done = AccessibleVars { success: true, dist_to_goal: 0.0, v_ego: scenario.v_limit, step: scenario.max_steps / 2, ..start };
    let crash = AccessibleVars { collision: true, min_gap_sv: 1.0, n_sv: 3, ..start };
    for probe in [start, done, crash] {
        program.evaluate(&probe).map_err(|e| format!("evaluation error on a probe state: {e}"))?;
    }
    Ok(program)
}

fn truncate_metrics(path: &Path, boundary: u64) -> Result<(), FlowError> {
    let Ok(text) = fs::read_to_string(path) else {
        fs::write(path, format!("{METRICS_HEADER}\n"))?;
        return Ok(());
    };
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let keep = i == 0 || line.split(',').nth(1).and_then(|v| v.parse::<u64>().ok()).is_some_and(|ep| ep <= boundary);
        if keep {
            out.push_str(line);
            out.push('\n');
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ScenarioConfig;

    #[test]
    fn extraction_reports_parse_and_probe_failures() {
        let s = ScenarioConfig::overtaking();
        assert!(extract_reward("no block", &s).unwrap_err().contains("no ```reward"));
        let bad = "```reward\ntotal = speed\n```";
        assert!(extract_reward(bad, &s).unwrap_err().contains("unknown_identifier"));
        let nan = "```reward\nr = sqrt(0 - 1 - success)\ntotal = r\n```";
        assert!(extract_reward(nan, &s).unwrap_err().contains("`r`"));
        let ok = format!("```reward\n{}```", BASELINE_REWARD);
        assert_eq!(extract_reward(&ok, &s).unwrap().component_names(), vec!["goal", "crash", "time"]);
    }
}
