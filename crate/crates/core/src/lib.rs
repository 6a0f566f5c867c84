// SPDX-License-Identifier: MIT OR Apache-2.0

//! Active localization of multiple change points of a piecewise-constant
//! function observed through noisy point queries.
//!
//! The pipeline ([`lcp::localize`]) runs a doubling schedule over four
//! subroutines: multiscale detection ([`detect`]), adaptive jump estimation
//! ([`jumps`]), binary search with backtracking ([`shb`]) and a two-sample
//! certificate ([`verify`]). [`complexity`] computes the instance difficulty
//! functionals and lower bounds, [`baseline`] holds comparison strategies and
//! [`harness`] runs seeded Monte-Carlo sweeps.

#![forbid(unsafe_code)]

pub mod baseline;
pub mod complexity;
pub mod detect;
pub mod environment;
pub mod error;
pub mod harness;
pub mod jumps;
pub mod lcp;
pub mod shb;
pub mod verify;

pub use complexity::{profile, ComplexityProfile};
pub use detect::{depth_schedule, detect_intervals, DetectionConfig, DetectionResult};
pub use environment::{Environment, InstanceFile, Interval, NoiseModel, StepFunction};
pub use error::{CpError, Result};
pub use harness::{run_experiment, score_success, ExperimentSpec, SweepResult};
pub use jumps::{acceptance_threshold, estimate_jumps, top_n, JumpEstimate, JumpEstimationResult};
pub use lcp::{allocation, localize, LcpConfig, RunReport, RunStatus, StageLedger};
pub use shb::{shb, ShbOutcome};
pub use verify::{verify_cp, VerifyOutcome};
