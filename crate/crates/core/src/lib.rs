pub mod adaptive;
pub mod constraints;
pub mod harness;
pub mod motif;
pub mod parallel;
pub mod runner;
pub mod workflow;
pub mod mcts;
