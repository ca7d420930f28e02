//! Per-run persistent history: JSON-lines streams under a run directory and
//! windowed statistics over episode records.
//!
//! Layout: `episodes.jsonl`, `curriculum.jsonl`, `rewards.jsonl`,
//! `transcripts.jsonl`, plus `config.snapshot` and `checkpoints/` written by
//! the orchestrator.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumDecision, CurriculumId, Origin};
use crate::llm::{TranscriptEntry, TranscriptSink};
use crate::sim::OutcomeKind;

pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const CURRICULUM_FILE: &str = "curriculum.jsonl";
pub const REWARDS_FILE: &str = "rewards.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("no episode records")]
    EmptyStore,
    #[error("{file}:{line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub seed: u64,
    pub curriculum: CurriculumId,
    pub origin: Origin,
    pub outcome: OutcomeKind,
    pub steps: u32,
    pub total_reward: f64,
    pub components: IndexMap<String, f64>,
    pub reward_fingerprint: String,
    pub lane_changes: u32,
    /// Steps whose reward evaluated to a non-finite value (scored as 0).
    #[serde(default)]
    pub eval_errors: u32,
    /// Steps on which some component divided by zero.
    #[serde(default)]
    pub div_by_zero_steps: u32,
}

/// One activated reward program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardHistoryEntry {
    pub generation: u32,
    pub source: String,
    pub fingerprint: String,
    /// First episode trained with this program.
    pub start: u64,
    /// One past the last episode; `None` while the program is still active.
    pub end: Option<u64>,
    pub lint_warnings: Vec<String>,
    pub analysis: String,
}

/// A line of `rewards.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RewardEvent {
    /// A new program became active at `entry.start`.
    Activated(RewardHistoryEntry),
    /// The workflow step for `generation` failed; the program of
    /// `active_generation` stays active.
    Retained { generation: u32, episode: u64, active_generation: u32, error: String },
}

impl RewardEvent {
    pub fn episode(&self) -> u64 {
        match self {
            RewardEvent::Activated(e) => e.start,
            RewardEvent::Retained { episode, .. } => *episode,
        }
    }
}

/// Activation entries with `end` filled in from the following activation.
pub fn resolve_reward_history(events: &[RewardEvent]) -> Vec<RewardHistoryEntry> {
    let mut out: Vec<RewardHistoryEntry> = Vec::new();
    for ev in events {
        if let RewardEvent::Activated(e) = ev {
            if let Some(prev) = out.last_mut() {
                prev.end = Some(e.start);
            }
            let mut e = e.clone();
            e.end = None;
            out.push(e);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStats {
    pub count: usize,
    pub first_episode: u64,
    pub last_episode: u64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub mean_total: f64,
    pub mean_steps: f64,
    pub component_means: IndexMap<String, f64>,
    /// Keyed by curriculum tag, in order of first appearance.
    pub curriculum_counts: IndexMap<String, usize>,
}

/// Statistics over the last `min(window, len)` records. Components missing
/// from a record count as 0 for that record.
pub fn window_stats(records: &[EpisodeRecord], window: usize) -> Result<WindowStats, MemoryError> {
    if records.is_empty() || window == 0 {
        return Err(MemoryError::EmptyStore);
    }
    let recs = &records[records.len().saturating_sub(window)..];
    let n = recs.len() as f64;
    let count = |k: OutcomeKind| recs.iter().filter(|r| r.outcome == k).count() as f64;
    let success_rate = count(OutcomeKind::Success) / n;
    let collision_rate = count(OutcomeKind::Collision) / n;
    // Derived so the three rates always sum to exactly 1.
    let timeout_rate = 1.0 - (success_rate + collision_rate);
    let mut component_means: IndexMap<String, f64> = IndexMap::new();
    for r in recs {
        for name in r.components.keys() {
            component_means.entry(name.clone()).or_insert(0.0);
        }
    }
    for (name, mean) in component_means.iter_mut() {
        *mean = recs.iter().map(|r| r.components.get(name).copied().unwrap_or(0.0)).sum::<f64>() / n;
    }
    let mut curriculum_counts = IndexMap::new();
    for r in recs {
        *curriculum_counts.entry(r.curriculum.tag()).or_insert(0) += 1;
    }
    Ok(WindowStats {
        count: recs.len(),
        first_episode: recs[0].episode,
        last_episode: recs[recs.len() - 1].episode,
        success_rate,
        collision_rate,
        timeout_rate,
        mean_total: recs.iter().map(|r| r.total_reward).sum::<f64>() / n,
        mean_steps: recs.iter().map(|r| r.steps as f64).sum::<f64>() / n,
        component_means,
        curriculum_counts,
    })
}

/// Everything persisted for a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHistory {
    pub episodes: Vec<EpisodeRecord>,
    pub curriculum: Vec<CurriculumDecision>,
    pub reward_events: Vec<RewardEvent>,
    pub transcripts: Vec<TranscriptEntry>,
    /// Recovery notes such as dropped torn lines.
    pub warnings: Vec<String>,
}

impl RunHistory {
    pub fn reward_history(&self) -> Vec<RewardHistoryEntry> {
        resolve_reward_history(&self.reward_events)
    }

    pub fn next_episode(&self) -> u64 {
        self.episodes.last().map_or(0, |r| r.episode + 1)
    }
}

/// Reads a JSON-lines file. A final line that is unterminated or does not
/// parse is treated as torn: it is dropped, the file is truncated to the last
/// good record when `repair` is set, and a warning is returned.
fn read_jsonl<T: DeserializeOwned>(path: &Path, repair: bool, warnings: &mut Vec<String>) -> Result<Vec<T>, MemoryError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read(path)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = Vec::new();
    let mut good_len = 0usize;
    let mut start = 0usize;
    let mut line_no = 0usize;
    while start < text.len() {
        line_no += 1;
        let nl = text[start..].iter().position(|&b| b == b'\n');
        let end = nl.map_or(text.len(), |i| start + i);
        let terminated = nl.is_some();
        let line = &text[start..end];
        let parsed = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<T>(s).map_err(|e| e.to_string()));
        match parsed {
            Ok(v) if terminated => {
                out.push(v);
                good_len = end + 1;
            }
            result => {
                let is_last = !terminated || end + 1 >= text.len();
                if !is_last {
                    let message = result.err().unwrap_or_default();
                    return Err(MemoryError::Corrupt { file: name, line: line_no, message });
                }
                warnings.push(format!("{name}: dropped torn final line {line_no}"));
                log::warn!("{name}: dropped torn final line {line_no}");
                if repair {
                    OpenOptions::new().write(true).open(path)?.set_len(good_len as u64)?;
                }
                break;
            }
        }
        start = end + 1;
    }
    Ok(out)
}

fn load_impl(dir: &Path, repair: bool) -> Result<RunHistory, MemoryError> {
    let mut h = RunHistory::default();
    let mut w = Vec::new();
    h.episodes = read_jsonl(&dir.join(EPISODES_FILE), repair, &mut w)?;
    h.curriculum = read_jsonl(&dir.join(CURRICULUM_FILE), repair, &mut w)?;
    h.reward_events = read_jsonl(&dir.join(REWARDS_FILE), repair, &mut w)?;
    h.transcripts = read_jsonl(&dir.join(TRANSCRIPTS_FILE), repair, &mut w)?;
    h.warnings = w;
    Ok(h)
}

/// Reads a run directory without modifying it.
pub fn load(dir: &Path) -> Result<RunHistory, MemoryError> {
    load_impl(dir, false)
}

fn append_handle(path: &Path) -> Result<File, MemoryError> {
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}

fn write_line<T: Serialize>(file: &mut File, value: &T) -> Result<(), MemoryError> {
    let mut line = serde_json::to_string(value).map_err(|e| MemoryError::Usage(e.to_string()))?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.flush()?;
    Ok(())
}

fn rewrite_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), MemoryError> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut f = File::create(&tmp)?;
    for it in items {
        write_line(&mut f, it)?;
    }
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Single-writer handle on a run directory.
pub struct RunStore {
    dir: PathBuf,
    episodes: File,
    curriculum: File,
    rewards: File,
    transcripts: File,
    records: Vec<EpisodeRecord>,
}

impl RunStore {
    /// Starts a new run. Refuses a directory that already holds episodes.
    pub fn create(dir: &Path) -> Result<Self, MemoryError> {
        fs::create_dir_all(dir)?;
        let ep = dir.join(EPISODES_FILE);
        if ep.exists() && fs::metadata(&ep)?.len() > 0 {
            return Err(MemoryError::Usage(format!("{} already contains a run", dir.display())));
        }
        for f in [EPISODES_FILE, CURRICULUM_FILE, REWARDS_FILE, TRANSCRIPTS_FILE] {
            File::create(dir.join(f))?;
        }
        Self::attach(dir, Vec::new())
    }

    /// Reopens an existing run for appending, repairing torn final lines.
    pub fn open(dir: &Path) -> Result<(Self, RunHistory), MemoryError> {
        let history = load_impl(dir, true)?;
        let store = Self::attach(dir, history.episodes.clone())?;
        Ok((store, history))
    }

    fn attach(dir: &Path, records: Vec<EpisodeRecord>) -> Result<Self, MemoryError> {
        Ok(Self {
            dir: dir.to_path_buf(),
            episodes: append_handle(&dir.join(EPISODES_FILE))?,
            curriculum: append_handle(&dir.join(CURRICULUM_FILE))?,
            rewards: append_handle(&dir.join(REWARDS_FILE))?,
            transcripts: append_handle(&dir.join(TRANSCRIPTS_FILE))?,
            records,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn next_episode(&self) -> u64 {
        self.records.last().map_or(0, |r| r.episode + 1)
    }

    pub fn append_episode(&mut self, record: &EpisodeRecord) -> Result<(), MemoryError> {
        if let Some(last) = self.records.last() {
            if record.episode <= last.episode {
                return Err(MemoryError::Usage(format!(
                    "episode {} appended after episode {}",
                    record.episode, last.episode
                )));
            }
        }
        write_line(&mut self.episodes, record)?;
        self.records.push(record.clone());
        Ok(())
    }

    pub fn append_curriculum(&mut self, decision: &CurriculumDecision) -> Result<(), MemoryError> {
        write_line(&mut self.curriculum, decision)
    }

    pub fn append_reward(&mut self, event: &RewardEvent) -> Result<(), MemoryError> {
        write_line(&mut self.rewards, event)
    }

    pub fn window_stats(&self, window: usize) -> Result<WindowStats, MemoryError> {
        window_stats(&self.records, window)
    }

    /// Drops everything recorded at or after `episode` so that a resumed run
    /// can replay from that boundary.
    pub fn truncate_from(&mut self, episode: u64) -> Result<RunHistory, MemoryError> {
        let mut h = load_impl(&self.dir, true)?;
        h.episodes.retain(|r| r.episode < episode);
        h.curriculum.retain(|d| d.episode < episode);
        h.reward_events.retain(|e| e.episode() < episode);
        h.transcripts.retain(|t| t.episode < episode);
        rewrite_jsonl(&self.dir.join(EPISODES_FILE), &h.episodes)?;
        rewrite_jsonl(&self.dir.join(CURRICULUM_FILE), &h.curriculum)?;
        rewrite_jsonl(&self.dir.join(REWARDS_FILE), &h.reward_events)?;
        rewrite_jsonl(&self.dir.join(TRANSCRIPTS_FILE), &h.transcripts)?;
        *self = Self::attach(&self.dir, h.episodes.clone())?;
        Ok(h)
    }
}

impl TranscriptSink for RunStore {
    fn record(&mut self, entry: TranscriptEntry) -> std::io::Result<()> {
        write_line(&mut self.transcripts, &entry).map_err(|e| match e {
            MemoryError::Io(io) => io,
            other => std::io::Error::other(other.to_string()),
        })
    }
}
