//! Adaptive two-stage grid hardening: network data, DistFlow dispatch,
//! hazard scenario trees, cost tables and the hardening MILP.

pub mod cost_model;
pub mod distflow;
pub mod hardening;
pub mod network;
pub mod scenario_tree;
pub mod study;
