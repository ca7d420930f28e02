//! The curriculum agent loop: reflection, analysis, then generation.

use rand::Rng;

use super::{
    decode_curriculum, select, CurriculumDecision, CurriculumError, CurriculumHistory, CurriculumId, CurriculumSet,
    EpsilonSchedule, Origin,
};
use crate::llm::{prompts, build_reflection_summary, AgentRole, Gateway, GatewayError, PromptContext, TranscriptSink};
use crate::memory::WindowStats;
use crate::reward::{LintWarning, RewardProgram};

/// Outcome of one workflow step, before the epsilon draw.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub episode: u64,
    /// The agent's choice, or the retained curriculum after a failure.
    pub curriculum: CurriculumId,
    pub analysis: String,
    pub fallback: bool,
    pub error: Option<String>,
}

/// Owns the curriculum history and the most recent agent choice.
#[derive(Debug, Clone)]
pub struct CurriculumWorkflow {
    pub set: CurriculumSet,
    pub schedule: EpsilonSchedule,
    history: CurriculumHistory,
    current: Option<CurriculumId>,
    analysis: Option<String>,
}

impl CurriculumWorkflow {
    pub fn new(set: CurriculumSet, schedule: EpsilonSchedule) -> Self {
        Self { set, schedule, history: CurriculumHistory::default(), current: None, analysis: None }
    }

    /// Rebuilds the workflow from persisted decisions.
    pub fn restore(set: CurriculumSet, schedule: EpsilonSchedule, decisions: Vec<CurriculumDecision>) -> Result<Self, CurriculumError> {
        let history = CurriculumHistory::from_decisions(decisions)?;
        let current = history.last().map(|d| d.curriculum);
        let analysis = history.last().map(|d| d.rationale.clone()).filter(|s| !s.is_empty());
        Ok(Self { set, schedule, history, current, analysis })
    }

    pub fn history(&self) -> &CurriculumHistory {
        &self.history
    }

    /// Most recent agent choice; the easiest curriculum before initialization.
    pub fn current(&self) -> CurriculumId {
        self.current.unwrap_or_else(CurriculumId::easiest)
    }

    /// Runs one step at `episode`. With no history this is initialization
    /// (analysis then generation, no reflection). Gateway exhaustion in any
    /// stage keeps the previous curriculum; only transcript I/O errors are
    /// returned as errors.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        episode: u64,
        ctx: &PromptContext,
        stats: Option<&WindowStats>,
        program: Option<(&RewardProgram, &[LintWarning])>,
        gateway: &mut Gateway,
        sink: &mut dyn TranscriptSink,
    ) -> Result<StepReport, GatewayError> {
        let feedback = match stats {
            Some(stats) if !self.history.is_empty() => {
                let (p, w) = program.map_or((None, &[][..]), |(p, w)| (Some(p), w));
                let summary = build_reflection_summary(stats, &self.history, p, w);
                let bundle = prompts::reflection(ctx, AgentRole::CurriculumReflection, &summary);
                match gateway.complete(&bundle, episode, sink) {
                    Ok(text) => Some(format!("{summary}\nReflection:\n{}", text.trim())),
                    Err(GatewayError::Unavailable { .. }) => Some(summary),
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };

        let bundle = prompts::curriculum_analysis(ctx, &self.history, self.analysis.as_deref(), feedback.as_deref());
        let analysis = match gateway.complete(&bundle, episode, sink) {
            Ok(text) => text,
            Err(GatewayError::Unavailable { last_error, .. }) => return Ok(self.fallback(episode, format!("analysis: {last_error}"))),
            Err(e) => return Err(e),
        };

        let bundle = prompts::curriculum_generation(ctx, &self.history, &analysis, feedback.as_deref());
        let set = self.set.clone();
        let decoded = gateway.request(&bundle, episode, sink, |text| {
            let c = decode_curriculum(text).map_err(|e| e.to_string())?;
            if set.contains(&c) {
                Ok(c)
            } else {
                Err(format!("{c} is not in the curriculum set"))
            }
        });
        match decoded {
            Ok(c) => {
                self.current = Some(c);
                self.analysis = Some(analysis.clone());
                Ok(StepReport { episode, curriculum: c, analysis, fallback: false, error: None })
            }
            Err(GatewayError::Unavailable { last_error, .. }) => Ok(self.fallback(episode, format!("generation: {last_error}"))),
            Err(e) => Err(e),
        }
    }

    fn fallback(&mut self, episode: u64, error: String) -> StepReport {
        let kept = self.current();
        log::warn!("curriculum step at episode {episode} failed ({error}); keeping {kept}");
        self.current = Some(kept);
        StepReport {
            episode,
            curriculum: kept,
            analysis: self.analysis.clone().unwrap_or_default(),
            fallback: true,
            error: Some(error),
        }
    }

    /// Epsilon-curriculum draw for one episode against the latest choice.
    pub fn deploy<R: Rng + ?Sized>(&self, episode: u64, rng: &mut R) -> Result<(CurriculumId, Origin), CurriculumError> {
        select(&self.set, self.current(), self.schedule.at(episode), rng)
    }

    /// Appends the decision for `report`, tagged with the draw made for its first episode.
    pub fn record(&mut self, report: &StepReport, deployed: CurriculumId, origin: Origin) -> Result<CurriculumDecision, CurriculumError> {
        let d = CurriculumDecision {
            episode: report.episode,
            curriculum: report.curriculum,
            deployed,
            origin,
            rationale: report.analysis.clone(),
            fallback: report.fallback,
        };
        self.history.push(d.clone())?;
        Ok(d)
    }
}
