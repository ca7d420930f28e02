//! Prompt templates. Rendering is a pure function of its inputs.

use std::fmt::Write as _;

use super::{AgentRole, PromptBundle};
use crate::curriculum::{CurriculumHistory, CurriculumSet};
use crate::memory::WindowStats;
use crate::reward::{AccessibleVars, LintWarning, RewardProgram};
use crate::sim::{ScenarioConfig, Task};

/// Scenario facts shared by every prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub scenario: ScenarioConfig,
    pub set: CurriculumSet,
}

impl PromptContext {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self { scenario, set: CurriculumSet::default() }
    }

    pub fn descriptor(&self) -> String {
        build_context_descriptor(&self.scenario, &self.set)
    }
}

pub fn build_context_descriptor(scenario: &ScenarioConfig, set: &CurriculumSet) -> String {
    let s = scenario;
    let mut out = String::from("# Training task\n");
    match s.task {
        Task::Overtaking => {
            let _ = writeln!(
                out,
                "Overtaking on a straight {}-lane highway ({} m long, lanes {} m wide, speed limit {} m/s). \
                 The ego vehicle starts in lane {} and must pass the slower vehicles ahead, then reach the goal \
                 region x in [{}, {}] m travelling near a lane centre, without collisions and within {} steps of {} s.",
                s.lane_count, s.road_length, s.lane_width, s.v_limit, s.start_lane, s.goal_region.x_min, s.goal_region.x_max,
                s.max_steps, s.dt
            );
        }
        Task::Merging => {
            let zone = s.merge_zone.unwrap_or([0.0, 0.0]);
            let _ = writeln!(
                out,
                "Merging from an on-ramp onto a {}-lane highway ({} m long, lanes {} m wide, speed limit {} m/s). \
                 The ego vehicle starts on the ramp (lane {}) and may only move onto the main road inside the \
                 merge zone x in [{}, {}] m. It must reach lane {} in the goal region x in [{}, {}] m without \
                 collisions and within {} steps of {} s.",
                s.lane_count - 1, s.road_length, s.lane_width, s.v_limit, s.start_lane, zone[0], zone[1], s.target_lane,
                s.goal_region.x_min, s.goal_region.x_max, s.max_steps, s.dt
            );
        }
    }
    out.push_str("\nLanes are numbered from 0 (leftmost). x grows along the road.\n");
    out.push_str("\n# Curriculum set\nEach curriculum is a pair (traffic density, motion mode of surrounding vehicles):\n");
    out.push_str("- density: 0 = empty, 1 = low, 2 = medium, 3 = high\n");
    out.push_str("- mode: 0 = stationary, 1 = constant velocity, 2 = interactive (car-following and lane-changing drivers)\n");
    let members: Vec<String> = set.members().iter().map(|c| format!("({}, {})", c.density as u8, c.mode as u8)).collect();
    let _ = writeln!(out, "Members: {}", members.join(" "));
    out.push_str("With density 0 the motion mode has no effect.\n");
    out.push_str("\n# Variables available to reward programs\n");
    out.push_str(&AccessibleVars::schema_table());
    out.push_str(
        "\n# Objectives\nThe policy chooses a waypoint, a target speed and a lane action every decision step. \
         Training should maximise the success rate on the target traffic density while avoiding collisions and timeouts. \
         Curricula should progress from easy to hard as competence grows.\n",
    );
    out
}

const CURRICULUM_TAG_FORMAT: &str = "End your reply with exactly one selection tag on its own line:\n\
<curriculum density=D mode=M/>\nwhere D is 0-3 and M is 0-2.";

const REWARD_FORMAT: &str = "Reply with exactly one fenced code block tagged `reward` containing the program:\n\
```reward\n<component> = <expression>\n...\ntotal = <expression>\n```\n\
Statements are `name = expr`, one per line, and the last must be `total = expr`. Expressions use numbers, the \
variables listed above, earlier component names, + - * /, unary -, comparisons (< <= > >= ==) yielding 0 or 1, \
`if c then a else b`, and abs, min, max, clip(x, lo, hi), exp, tanh, sqrt. `#` starts a comment. No other syntax is accepted.";

fn charter(role: AgentRole) -> &'static str {
    match role {
        AgentRole::CurriculumAnalysis => "You are the curriculum analysis agent. Assess the current training progress and reason about which curriculum should be trained next.",
        AgentRole::CurriculumGeneration => "You are the curriculum generation agent. Choose the next training curriculum from the curriculum set.",
        AgentRole::CurriculumReflection => "You are the curriculum reflection agent. Summarise what the curriculum history and training statistics say about the learning progress.",
        AgentRole::RewardAnalysis => "You are the reward analysis agent. Identify the sub-rewards that matter for this task and diagnose problems with the current reward program.",
        AgentRole::RewardGeneration => "You are the reward generation agent. Write a reward program in the reward language described below.",
        AgentRole::RewardReflection => "You are the reward reflection agent. Explain how each reward component influenced the training outcome and what should change.",
    }
}

fn system(ctx: &PromptContext, role: AgentRole) -> String {
    format!("{}\n\n{}", charter(role), ctx.descriptor())
}

fn section(out: &mut String, title: &str, body: &str) {
    let _ = write!(out, "## {title}\n{}\n\n", body.trim_end());
}

fn history_text(history: &CurriculumHistory) -> String {
    if history.is_empty() {
        "(none yet)".into()
    } else {
        history.excerpt(20)
    }
}

pub fn curriculum_analysis(ctx: &PromptContext, history: &CurriculumHistory, previous: Option<&str>, feedback: Option<&str>) -> PromptBundle {
    let mut user = String::new();
    section(&mut user, "Curriculum history", &history_text(history));
    if let Some(p) = previous {
        section(&mut user, "Previous analysis", p);
    }
    if let Some(f) = feedback {
        section(&mut user, "Feedback", f);
    }
    user.push_str("Analyse the learning progress and recommend the difficulty of the next curriculum.");
    PromptBundle {
        role: AgentRole::CurriculumAnalysis,
        system: system(ctx, AgentRole::CurriculumAnalysis),
        user,
        output_schema: "Free-form analysis text.".into(),
    }
}

pub fn curriculum_generation(ctx: &PromptContext, history: &CurriculumHistory, analysis: &str, feedback: Option<&str>) -> PromptBundle {
    let mut user = String::new();
    section(&mut user, "Analysis", analysis);
    section(&mut user, "Curriculum history", &history_text(history));
    if let Some(f) = feedback {
        section(&mut user, "Feedback", f);
    }
    user.push_str("Select the curriculum for the next training period.");
    PromptBundle {
        role: AgentRole::CurriculumGeneration,
        system: system(ctx, AgentRole::CurriculumGeneration),
        user,
        output_schema: CURRICULUM_TAG_FORMAT.into(),
    }
}

pub fn reflection(ctx: &PromptContext, role: AgentRole, summary: &str) -> PromptBundle {
    let mut user = String::new();
    section(&mut user, "Training summary", summary);
    user.push_str("Write concise feedback for the analysis and generation agents.");
    PromptBundle { role, system: system(ctx, role), user, output_schema: "Free-form feedback text.".into() }
}

fn program_text(program: &RewardProgram, warnings: &[LintWarning]) -> String {
    let mut s = format!("```reward\n{}\n```\n", program.source.trim_end());
    if !warnings.is_empty() {
        s.push_str("Lint warnings:\n");
        for w in warnings {
            let _ = writeln!(s, "{w}");
        }
    }
    s
}

pub fn reward_analysis(
    ctx: &PromptContext,
    current: Option<(&RewardProgram, &[LintWarning])>,
    previous: Option<&str>,
    feedback: Option<&str>,
) -> PromptBundle {
    let mut user = String::new();
    if let Some((p, w)) = current {
        section(&mut user, "Current reward program", &program_text(p, w));
    }
    if let Some(p) = previous {
        section(&mut user, "Previous analysis", p);
    }
    if let Some(f) = feedback {
        section(&mut user, "Feedback", f);
    }
    user.push_str("List the sub-rewards this task needs, with their purpose and relative scale.");
    PromptBundle {
        role: AgentRole::RewardAnalysis,
        system: system(ctx, AgentRole::RewardAnalysis),
        user,
        output_schema: "Free-form analysis text.".into(),
    }
}

pub fn reward_generation(
    ctx: &PromptContext,
    analysis: &str,
    current: Option<(&RewardProgram, &[LintWarning])>,
    feedback: Option<&str>,
) -> PromptBundle {
    let mut user = String::new();
    section(&mut user, "Analysis", analysis);
    if let Some((p, w)) = current {
        section(&mut user, "Current reward program", &program_text(p, w));
    }
    if let Some(f) = feedback {
        section(&mut user, "Feedback", f);
    }
    user.push_str("Write the reward program.");
    PromptBundle {
        role: AgentRole::RewardGeneration,
        system: system(ctx, AgentRole::RewardGeneration),
        user,
        output_schema: REWARD_FORMAT.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no ```reward fenced block found")]
    Missing,
    #[error("expected one ```reward fenced block, found {0}")]
    Multiple(usize),
    #[error("```reward block is not closed")]
    Unclosed,
}

/// Inner text of the single fenced block tagged `reward`.
pub fn extract_program_block(response: &str) -> Result<String, ExtractError> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in response.lines() {
        let trimmed = line.trim();
        match current.as_mut() {
            None => {
                if let Some(info) = trimmed.strip_prefix("```") {
                    if info.trim() == "reward" {
                        current = Some(Vec::new());
                    }
                }
            }
            Some(lines) => {
                if trimmed == "```" {
                    blocks.push(lines.join("\n"));
                    current = None;
                } else {
                    lines.push(line);
                }
            }
        }
    }
    if current.is_some() {
        return Err(ExtractError::Unclosed);
    }
    match blocks.len() {
        0 => Err(ExtractError::Missing),
        1 => Ok(blocks.pop().unwrap()),
        n => Err(ExtractError::Multiple(n)),
    }
}

fn pct(rate: f64) -> String {
    format!("{:.1}%", rate * 100.0)
}

/// Deterministic feedback text for the reflection agents.
pub fn build_reflection_summary(
    stats: &WindowStats,
    history: &CurriculumHistory,
    program: Option<&RewardProgram>,
    warnings: &[LintWarning],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Window: episodes {}..={} ({} episodes)", stats.first_episode, stats.last_episode, stats.count);
    let _ = writeln!(out, "success rate: {}", pct(stats.success_rate));
    let _ = writeln!(out, "collision rate: {}", pct(stats.collision_rate));
    let _ = writeln!(out, "timeout rate: {}", pct(stats.timeout_rate));
    let _ = writeln!(out, "mean total reward: {:.4}", stats.mean_total);
    let _ = writeln!(out, "mean episode length: {:.1} steps", stats.mean_steps);
    out.push_str("component means:\n");
    for (name, mean) in &stats.component_means {
        let _ = writeln!(out, "  {name}: {mean:.4}");
    }
    out.push_str("curriculum counts:\n");
    for (tag, n) in &stats.curriculum_counts {
        let _ = writeln!(out, "  {tag}: {n}");
    }
    out.push_str("recent curriculum sequence:\n");
    out.push_str(&history_text(history));
    out.push('\n');
    if let Some(p) = program {
        let _ = writeln!(out, "active reward program ({}):", p.fingerprint_hex());
        let _ = writeln!(out, "```reward\n{}\n```", p.source.trim_end());
        if warnings.is_empty() {
            out.push_str("lint warnings: none\n");
        } else {
            out.push_str("lint warnings:\n");
            for w in warnings {
                let _ = writeln!(out, "{w}");
            }
        }
    }
    out
}
