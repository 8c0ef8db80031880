//! Capacitated facility location for electric-vehicle charging stations.
//!
//! The crate generates synthetic urban instances, builds the single-period
//! and multi-period location models as backend-neutral MILPs, solves them,
//! and evaluates how a single-period deployment copes with demand that
//! varies over the day.
//!
//! A typical run: [`instgen::generate_instance`], then
//! [`solution::solve_instance`] for each model, then
//! [`solution::Solution::evaluate`]. [`batch::run_batch`] does the same over
//! a grid of instances and weights.

pub mod batch;
pub mod domain;
pub mod evaluator;
pub mod formulation;
pub mod instgen;
pub mod milp;
pub mod mp;
pub mod oracle;
pub mod solution;
pub mod sp;
