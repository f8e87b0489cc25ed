//! Annealed adversarial training for small dense classifiers, plus the
//! optimal-control machinery to analyze annealing schedules.
//!
//! The pieces:
//!
//! - [`tensor`] / [`tape`]: dense tensors with reverse-mode differentiation
//!   with respect to both parameters and inputs;
//! - [`models`]: dense relu classifiers, their loss/gradient entry points,
//!   and a flat binary parameter format;
//! - [`inner_max`]: the PGD inner maximizer (sign-gradient ascent with
//!   epsilon-ball and domain clipping);
//! - [`schedules`]: annealing schedules mapping outer progress to the inner
//!   step count and step size under a fixed movement budget;
//! - [`trainer`]: the min-max training loop with SGD and a metrics ledger;
//! - [`control_toy`]: the 1-D control problem with a closed-form optimal
//!   schedule and a numerical maximum-principle check;
//! - [`criteria`]: the schedule-optimality gap C and the FOSC baseline;
//! - [`attacks`]: PGD-K robustness evaluation;
//! - [`landscape`]: loss-surface and trajectory projections for plotting;
//! - [`data_io`]: IDX parsing, synthetic blobs, deterministic subsetting.
//!
//! Core numerics are generic over the scalar type through [`Real`]; every
//! public type defaults its scalar parameter to `f64`, and `*32` aliases are
//! provided for single precision.

pub mod attacks;
pub mod control_toy;
pub mod criteria;
pub mod data_io;
pub mod error;
pub mod inner_max;
pub mod landscape;
pub mod models;
pub mod scalar;
pub mod schedules;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use attacks::{evaluate_robust, AttackInit, AttackSpec, RobustReport};
pub use control_toy::{
    integrate_flow, solve_pmp, toy_drift, toy_hamiltonian, toy_inner_exact, toy_loss,
    toy_optimal_alpha, toy_optimal_k, toy_robust_loss, verify_pmp, PmpRow, PmpVerification,
    ToyConfig, ToyState,
};
pub use criteria::{criterion_c, fosc, CandidateEval, CandidateSet, CriterionReport};
pub use data_io::{load_mnist_idx, save_idx, subset, synth_gaussians, Dataset};
pub use error::{Error, Result};
pub use inner_max::{pgd_perturb, pgd_perturb_traced, AdvBatch, InnerObjective, PgdInit, PgdOutcome};
pub use landscape::{
    compute_axes, compute_axes_with, loss_grid, project_trajectory, AxesOptions, ProjectionAxes,
};
pub use models::{
    accuracy, forward_logits, init_params, loss_and_grads, per_example_losses, predict, Grads,
    MlpSpec, Params, Wrt,
};
pub use scalar::Real;
pub use schedules::{ScheduleSpec, ScheduleVariant};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
pub use trainer::{lr_at, metrics_to_csv, sgd_step, train, MetricsRow, TrainConfig};

/// Single-precision aliases; the default scalar everywhere is `f64`.
pub type Tensor32 = tensor::Tensor<f32>;
pub type Params32 = models::Params<f32>;
pub type Dataset32 = data_io::Dataset<f32>;
pub type AdvBatch32 = inner_max::AdvBatch<f32>;
pub type ScheduleSpec32 = schedules::ScheduleSpec<f32>;
pub type ToyConfig32 = control_toy::ToyConfig<f32>;

/// Caps the global worker pool used for candidate, chunk, and grid-row
/// parallelism. Call once, before other work; later calls are ignored.
/// Results never depend on the thread count: parallel loops write by index.
pub fn configure_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build_global();
}
