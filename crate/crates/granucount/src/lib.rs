//! Procedural multi-grained counting dataset generator and benchmark harness.
//!
//! The crate builds small, fully deterministic counting datasets end to end:
//!
//! - [`taxonomy`]: the semantic hierarchy (super-category > category >
//!   instance type > attributes) and a procedural asset bank.
//! - [`splits`]: leakage-controlled Train / TestA / TestB partitions of
//!   assets, categories, and backgrounds.
//! - [`levels`]: the five granularity levels as recipe generators,
//!   validators, and query emitters.
//! - [`profiles`]: configuration-driven synthesis hyperparameters.
//! - [`scene`]: non-overlap object placement and constrained camera sampling.
//! - [`render`]: a deterministic z-buffered rasterizer producing RGB,
//!   instance-ID maps, and per-instance annotations (point, 2D/3D box, mask).
//! - [`qa`]: the pluggable edit-filter quality loop with a reference
//!   perturbation editor and visual inspector.
//! - [`eval`]: MAE/RMSE scoring with level weighting, prompt templates, and
//!   reference predictors.
//! - [`pipeline`]: batch generation, validation, statistics, and scoring
//!   over an on-disk dataset layout.
//!
//! Every public entry point is a pure function of its inputs and seeds;
//! identical arguments produce byte-identical outputs regardless of thread
//! count. See the `examples/` directory for one runnable example per major
//! capability.

pub mod error;
pub mod eval;
pub mod levels;
pub mod math;
pub mod pipeline;
pub mod profiles;
pub mod qa;
pub mod render;
pub mod rng;
pub mod scene;
pub mod splits;
pub mod taxonomy;

pub use error::Error;

/// Hard per-image instance cap. Scene composition, placement, and validation
/// all enforce it; instance-ID maps are 16-bit so the cap is also what keeps
/// every id representable in one channel.
pub const MAX_INSTANCES: usize = 250;
