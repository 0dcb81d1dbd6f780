//! Generalized two-stage approximate top-k selection.
//!
//! Stage 1 splits an array of `N` scores into `B` strided buckets (element `i`
//! lands in bucket `i mod B`) and keeps the top `K'` entries of every bucket
//! with a branch-free bubble insertion. Stage 2 sorts the `B * K'` survivors
//! and returns the first `K`.
//!
//! Around the kernel the crate provides:
//!
//! - [`recall`]: exact expected recall under random placement, Monte-Carlo
//!   estimation over the hypergeometric bucket occupancy, and the closed-form
//!   bucket-count bounds for `K' = 1`.
//! - [`planner`]: choosing `(K', B)` for a recall target under a lane-width
//!   constraint, and reduction-factor grids against the `K' = 1` baseline.
//! - [`perf`]: a max-of-subsystems runtime model with ridge-point helpers and a
//!   registry of accelerator profiles.
//! - [`mips`]: maximum inner-product search with the first stage fused into a
//!   blocked score computation.
//! - [`dataset`]: the `ATKV` binary matrix format, synthetic inputs and CSV
//!   result records.
//!
//! Batch-level work runs on rayon when the `parallel` feature is enabled (the
//! default); see [`Exec`].

pub mod bench;
pub mod dataset;
mod error;
mod exec;
pub mod hypergeom;
pub mod mips;
mod params;
pub mod perf;
pub mod planner;
pub mod recall;
pub mod simulate;
pub mod topk;

pub use error::{Error, Result};
pub use exec::Exec;
pub use params::{AlgoParams, DEFAULT_LANE_MULTIPLE};
pub use recall::{RecallEstimate, RecallMethod};
pub use topk::{approx_top_k, exact_top_k, measure_recall, stage1_partial_reduce, TopKResult};
