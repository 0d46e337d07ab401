//! Random factor models built on covariance-preserving random projections.
//!
//! A random factor model represents a centered data panel `X` (observations in
//! rows, series in columns) through the projection `PX = a BᵀB X`, where `B` is
//! a random `k×d` matrix and `a` a normalization constant chosen so that sample
//! covariances are preserved in expectation. The crate provides:
//!
//! - [`stats`]: sample statistics (mean, covariance, correlation, log-returns),
//! - [`panel`]: the data-panel type with centering/standardization,
//! - [`projection`]: the six projection-matrix distributions and their
//!   normalization constants,
//! - [`rfm`]: projection, factor/loading decomposition, and the equity-direction
//!   random loading variant,
//! - [`pca`]: the SVD-based baseline factor model,
//! - [`theory`]: closed-form moment laws for the projected statistics and a
//!   Monte Carlo validator for them,
//! - [`experiments`]: ensemble error-funnel experiments comparing the random
//!   factor models with the PCA baseline on real or synthetic panels.
//!
//! ```
//! use rfm_core::experiments::{generate_synthetic_panel, SyntheticKind};
//! use rfm_core::{projection::ProjectionSpec, rfm, Family};
//!
//! let panel = generate_synthetic_panel(&SyntheticKind::IidGaussian, 60, 8, 7)?;
//! let spec = ProjectionSpec::new(Family::Gaussian, 10, panel.d(), 42)?;
//! let model = rfm::decompose(&panel, &spec)?;
//! // X = F L^T + residual, with F independent of the data
//! let rebuilt = model.reconstruction() + &model.residual;
//! assert!(rebuilt
//!     .iter()
//!     .zip(panel.values())
//!     .all(|(a, b)| (a - b).abs() < 1e-10));
//! # Ok::<(), rfm_core::Error>(())
//! ```

pub mod error;
pub mod experiments;
pub mod panel;
pub mod pca;
pub mod projection;
pub mod rfm;
pub mod stats;
pub mod theory;

pub use error::Error;
pub use panel::{DataPanel, Preprocessing};
pub use pca::PcaDecomposition;
pub use projection::{DistributionMoments, Family, ProjectionSpec};
pub use rfm::{RandomLoadingDecomposition, RfmDecomposition, ScaleMode};
pub use theory::{MomentPrediction, TheoryReport, Verdict};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
