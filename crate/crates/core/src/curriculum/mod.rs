//! The two-layer curriculum set, epsilon-curriculum selection and the
//! decoder for curriculum-agent responses.

mod workflow;

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use workflow::{CurriculumWorkflow, StepReport};

pub const N_TD_MAX: u8 = 3;
pub const N_MM_MAX: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Density {
    Empty = 0,
    Low = 1,
    Medium = 2,
    High = 3,
}

impl Density {
    pub const ALL: [Density; 4] = [Density::Empty, Density::Low, Density::Medium, Density::High];

    pub fn name(&self) -> &'static str {
        match self {
            Density::Empty => "empty",
            Density::Low => "low",
            Density::Medium => "medium",
            Density::High => "high",
        }
    }
}

impl From<Density> for u8 {
    fn from(d: Density) -> u8 {
        d as u8
    }
}

impl TryFrom<u8> for Density {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Density::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| format!("density {v} outside 0..={N_TD_MAX}"))
    }
}

impl std::str::FromStr for Density {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Density::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown density `{s}` (expected empty|low|medium|high)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum MotionMode {
    Stationary = 0,
    ConstantVelocity = 1,
    Interactive = 2,
}

impl MotionMode {
    pub const ALL: [MotionMode; 3] = [
        MotionMode::Stationary,
        MotionMode::ConstantVelocity,
        MotionMode::Interactive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MotionMode::Stationary => "stationary",
            MotionMode::ConstantVelocity => "constant_velocity",
            MotionMode::Interactive => "interactive",
        }
    }
}

impl From<MotionMode> for u8 {
    fn from(m: MotionMode) -> u8 {
        m as u8
    }
}

impl TryFrom<u8> for MotionMode {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        MotionMode::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| format!("motion mode {v} outside 0..={N_MM_MAX}"))
    }
}

/// A member of the curriculum set: (traffic density, SV motion mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CurriculumId {
    pub density: Density,
    pub mode: MotionMode,
}

impl CurriculumId {
    pub const fn new(density: Density, mode: MotionMode) -> Self {
        Self { density, mode }
    }

    pub fn from_indices(density: i64, mode: i64) -> Result<Self, CurriculumError> {
        let d = u8::try_from(density).ok().and_then(|d| Density::try_from(d).ok());
        let m = u8::try_from(mode).ok().and_then(|m| MotionMode::try_from(m).ok());
        match (d, m) {
            (Some(density), Some(mode)) => Ok(Self { density, mode }),
            _ => Err(CurriculumError::OutOfRange { density, mode }),
        }
    }

    pub fn easiest() -> Self {
        Self::new(Density::Empty, MotionMode::Stationary)
    }

    /// Degenerate members (empty road) configure the same environment for every mode.
    pub fn is_degenerate(&self) -> bool {
        self.density == Density::Empty
    }

    pub fn tag(&self) -> String {
        format!("<curriculum density={} mode={}/>", self.density as u8, self.mode as u8)
    }
}

impl fmt::Display for CurriculumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}={}, {}={})",
            self.density as u8,
            self.density.name(),
            self.mode as u8,
            self.mode.name()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CurriculumError {
    #[error("missing curriculum tag: expected exactly one `<curriculum density=D mode=M/>`")]
    MissingTag,
    #[error("duplicate curriculum tags: found {0}, expected exactly one")]
    DuplicateTag(usize),
    #[error("non-integer curriculum field `{field}`: `{value}`")]
    NonInteger { field: &'static str, value: String },
    #[error("curriculum (density={density}, mode={mode}) is not in the curriculum set (density 0..={max_d}, mode 0..={max_m})", max_d = N_TD_MAX, max_m = N_MM_MAX)]
    OutOfRange { density: i64, mode: i64 },
    #[error("usage error: {0}")]
    Usage(String),
}

impl CurriculumError {
    pub fn kind(&self) -> &'static str {
        match self {
            CurriculumError::MissingTag => "missing_tag",
            CurriculumError::DuplicateTag(_) => "duplicate_tag",
            CurriculumError::NonInteger { .. } => "non_integer",
            CurriculumError::OutOfRange { .. } => "out_of_range",
            CurriculumError::Usage(_) => "usage",
        }
    }
}

/// All `(density, mode)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurriculumSet {
    members: Vec<CurriculumId>,
}

impl Default for CurriculumSet {
    fn default() -> Self {
        let members = Density::ALL
            .into_iter()
            .flat_map(|d| MotionMode::ALL.into_iter().map(move |m| CurriculumId::new(d, m)))
            .collect();
        Self { members }
    }
}

impl CurriculumSet {
    pub fn members(&self) -> &[CurriculumId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: &CurriculumId) -> bool {
        self.members.contains(id)
    }

    /// Uniform member.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CurriculumId {
        self.members[rng.random_range(0..self.members.len())]
    }
}

/// Linear decay from `start` to `end` over `decay_fraction` of the planned episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub total_episodes: u64,
    pub decay_fraction: f64,
}

impl EpsilonSchedule {
    pub fn new(total_episodes: u64) -> Self {
        Self {
            start: 0.3,
            end: 0.0,
            total_episodes,
            decay_fraction: 0.8,
        }
    }

    pub fn constant(eps: f64) -> Self {
        Self {
            start: eps,
            end: eps,
            total_episodes: 1,
            decay_fraction: 1.0,
        }
    }

    pub fn at(&self, episode: u64) -> f64 {
        let horizon = (self.total_episodes as f64 * self.decay_fraction).max(1.0);
        let t = (episode as f64 / horizon).min(1.0);
        (self.start + (self.end - self.start) * t).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Llm,
    Random,
    /// Curriculum workflow disabled; the target configuration is used throughout.
    Fixed,
}

impl Origin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::Llm => "llm",
            Origin::Random => "random",
            Origin::Fixed => "fixed",
        }
    }
}

/// Epsilon-curriculum selection: the agent's choice with probability `1 - eps`,
/// otherwise a uniform member of the set.
pub fn select<R: Rng + ?Sized>(
    set: &CurriculumSet,
    c_llm: CurriculumId,
    eps: f64,
    rng: &mut R,
) -> Result<(CurriculumId, Origin), CurriculumError> {
    if !set.contains(&c_llm) {
        return Err(CurriculumError::Usage(format!("{c_llm} is not a member of the set")));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(CurriculumError::Usage(format!("epsilon {eps} outside [0, 1]")));
    }
    // Always consume one draw so the stream does not depend on eps.
    let u: f64 = rng.random();
    if u < eps {
        Ok((set.sample(rng), Origin::Random))
    } else {
        Ok((c_llm, Origin::Llm))
    }
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<curriculum\s+density\s*=\s*([^\s/>]+)\s+mode\s*=\s*([^\s/>]+)\s*/>").unwrap())
}

fn loose_tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<curriculum\b").unwrap())
}

/// Extracts the single `<curriculum density=D mode=M/>` tag from an agent response.
pub fn decode_curriculum(response: &str) -> Result<CurriculumId, CurriculumError> {
    let loose = loose_tag_regex().find_iter(response).count();
    let caps: Vec<_> = tag_regex().captures_iter(response).collect();
    if loose > 1 {
        return Err(CurriculumError::DuplicateTag(loose));
    }
    let Some(cap) = caps.first() else {
        return Err(CurriculumError::MissingTag);
    };
    let parse = |field: &'static str, raw: &str| {
        let raw = raw.trim_matches(|c| c == '"' || c == '\'');
        raw.parse::<i64>().map_err(|_| CurriculumError::NonInteger {
            field,
            value: raw.to_string(),
        })
    };
    let density = parse("density", &cap[1])?;
    let mode = parse("mode", &cap[2])?;
    CurriculumId::from_indices(density, mode)
}

/// One curriculum-workflow decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumDecision {
    pub episode: u64,
    /// The agent's selection (or the retained one after a fallback).
    pub curriculum: CurriculumId,
    /// What the epsilon draw deployed at this episode.
    pub deployed: CurriculumId,
    pub origin: Origin,
    pub rationale: String,
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurriculumHistory {
    decisions: Vec<CurriculumDecision>,
}

impl CurriculumHistory {
    pub fn from_decisions(decisions: Vec<CurriculumDecision>) -> Result<Self, CurriculumError> {
        let mut h = Self::default();
        for d in decisions {
            h.push(d)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, d: CurriculumDecision) -> Result<(), CurriculumError> {
        if let Some(last) = self.decisions.last() {
            if d.episode <= last.episode {
                return Err(CurriculumError::Usage(format!(
                    "history episode {} does not follow {}",
                    d.episode, last.episode
                )));
            }
        }
        self.decisions.push(d);
        Ok(())
    }

    pub fn decisions(&self) -> &[CurriculumDecision] {
        &self.decisions
    }

    pub fn last(&self) -> Option<&CurriculumDecision> {
        self.decisions.last()
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    /// Compact `e=100: (1=low, 2=interactive) [llm]` lines for the most recent decisions.
    pub fn excerpt(&self, last_n: usize) -> String {
        let skip = self.decisions.len().saturating_sub(last_n);
        self.decisions[skip..]
            .iter()
            .map(|d| {
                format!(
                    "e={}: selected {} deployed {} [{}]",
                    d.episode,
                    d.curriculum,
                    d.deployed,
                    d.origin.as_str()
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}
