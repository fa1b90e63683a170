//! Reduced-rank matrix autoregressions (RRMAR) in pseudo-structural form.
//!
//! `Y_t = Σ_j U1 U3_jᵀ Y_{t-j} U4_j U2ᵀ + E_t` with `vec(E_t) ~ N(0, Σ2 ⊗ Σ1)`. The left null
//! spaces of the row and column loadings, normalized as `δ = [I; δ*]` and `γ = [I; γ*]`, are
//! the linear combinations free of serial correlation. This crate estimates them by maximum
//! likelihood, reports their co-movement equations with standard errors, selects ranks and
//! lags by information criteria, and runs simulation studies.
//!
//! ```
//! use rand::SeedableRng;
//! use rrmar::{fit, simulate_dgp, DgpSpec, Dims, FitConfig};
//!
//! let truth = Dims::new(3, 4, 1, 1, 1)?;
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let (_, series) = simulate_dgp(&DgpSpec::new(truth, 200), &mut rng)?;
//! let result = fit(&series, truth, &FitConfig::default().with_budget(10, 3))?;
//! assert!(result.se_delta.iter().all(|s| s.is_finite()));
//! # Ok::<(), rrmar::Error>(())
//! ```

pub mod config;
pub mod error;
pub mod estimate;
pub mod io;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod report;
pub mod select;
pub mod simulate;
pub mod stats;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use estimate::{confidence_intervals, fit, fit_from, Block, FitConfig, FitResult, InitMode};
pub use io::{export_long, ingest, DatasetSpec, Transform};
pub use likelihood::{loglik_direct, Likelihood, ThetaLayout};
pub use linalg::Mat;
pub use model::{pseudo_to_reduced, rrmar_to_pseudo, Dims, MatrixSeries, PseudoStructParams, RRMarParams};
pub use montecarlo::{run_experiment, Design, ExperimentResult, ExperimentSpec};
pub use report::{comovement_report, ComovementReport};
pub use select::{information_criterion, phi, select_ranks, Criterion, SelectionConfig, SelectionGrid};
pub use simulate::{draw_dgp, simulate_dgp, simulate_series, DgpSpec};
