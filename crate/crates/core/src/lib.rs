//! Bit-exact software model of a parametric fixed-point Takagi-Sugeno
//! Fuzzy-PI controller datapath.
//!
//! The crate models the controller the way the silicon would compute it:
//! every signal is a fixed-point word of a specific width, every arithmetic
//! node quantizes and saturates exactly once, and the defuzzification divide
//! runs in IEEE 754 single precision. A double-precision reference engine,
//! a 3-DOF manipulator plant and fitted synthesis cost models round out the
//! validation tooling.
//!
//! Module map:
//! - [`fixedpoint`] — formats, quantization, saturating arithmetic
//! - [`membership`] — fuzzification (trapezoid/triangle/LUT memberships)
//! - [`inference`] — rule evaluation, adder trees, defuzzification, the
//!   one-shot and pipelined executors
//! - [`controller`] — the full Fuzzy-PI loop (input processing, inference,
//!   saturated integration)
//! - [`oracle`] — double-precision reference engine and MSE sweeps
//! - [`plant`] — 3-link manipulator dynamics and closed-loop simulation
//! - [`costmodel`] — fitted LUT/throughput planes and dynamic-power ratios
//! - [`config`] — file-format schema and shipped defaults

pub mod config;
pub mod controller;
pub mod costmodel;
pub mod fixedpoint;
pub mod inference;
pub mod membership;
pub mod oracle;
pub mod plant;

pub use controller::{Controller, ControllerConfig, ExecMode};
pub use fixedpoint::{FixedFormat, FixedPointError, FixedValue, RoundingMode};
pub use inference::{FimFormats, FimStatus, PipelineState, RuleBase};
pub use membership::{MembershipBank, MembershipKind, MembershipSpec};
