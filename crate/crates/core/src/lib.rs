//! Curriculum reinforcement learning driven by LLM agents that pick the
//! training curriculum and write the reward program, on a built-in 2D
//! driving simulator.

pub mod control;
pub mod curriculum;
pub mod llm;
pub mod memory;
pub mod reward;
pub mod rl;
pub mod flow;
pub mod sim;
