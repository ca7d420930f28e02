#![allow(dead_code)]

pub mod reward_fuzz;
pub mod reward_oracle;
