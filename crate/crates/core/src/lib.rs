//! Profile-guided, multi-agent optimization loop for CUDA kernels.
//!
//! A planner proposes one incremental optimization per round, a coder
//! implements it, a compiler agent produces the build command, and the
//! candidate is compiled, run against the task harness, profiled and
//! classified. Failing candidates go through a bounded debug loop; the best
//! valid candidate by complexity-weighted speedup is kept.

pub mod agents;
pub mod evaluation;
pub mod parallel;
pub mod pipeline;
pub mod profile;
pub mod report;
pub mod sample;
pub mod task;
pub mod toolchain;
