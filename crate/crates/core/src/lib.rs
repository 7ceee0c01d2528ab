//! Deterministic web-navigation environments for training and evaluating
//! agents that act on HTML through `click` and `type` commands.
//!
//! The crate is layered bottom-up: [`dom`] and [`actions`] define states and
//! commands, [`render`] turns states into frames, [`tasks`] generates
//! episodes, [`env`] runs them, [`robustness`] perturbs and composes them,
//! [`datagen`] records demonstrations and [`eval`] scores policies.

pub mod actions;
pub mod datagen;
pub mod dom;
pub mod env;
pub mod eval;
pub mod render;
pub mod rng;
pub mod robustness;
pub mod tasks;
