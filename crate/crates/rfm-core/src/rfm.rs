//! The random factor model: `PX = a BᵀB X`, its factorization into factors and
//! loadings, the deterministic residual, and the equity-direction random
//! loading variant `XQ = a X RᵀR`.

use crate::panel::{DataPanel, Preprocessing};
use crate::projection::{
    covariance_scale, derive_seed, distribution_moments, draw_projection, factor_scale, Family,
    ProjectionSpec,
};
use crate::stats::Moments;
use crate::{Error, Result};
use ndarray::Array2;

/// Choice of the scalar `a` in `P = a BᵀB`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    /// `E[C_{Pu,Pv}] = C_{u,v}`: the model default everywhere.
    CovariancePreserving,
    /// `E[PX] = X`. This normalization over-estimates sample variance, with
    /// `E[σ²_{Px}] = (1 + d/k) σ²_x` for the gaussian family; it exists so
    /// the theory validator can demonstrate exactly that.
    MeanPreserving,
}

impl ScaleMode {
    pub fn scale(self, family: Family, k: usize, d: usize) -> f64 {
        match self {
            ScaleMode::CovariancePreserving => covariance_scale(family, k, d),
            ScaleMode::MeanPreserving => match family {
                // E[BᵀB] = I for unit columns, (k/d)·I for unit rows.
                Family::ColumnNormalizedGaussian => 1.0,
                Family::RowNormalizedGaussian => d as f64 / k as f64,
                _ => {
                    let m = distribution_moments(family).expect("element-iid family");
                    1.0 / (m.c2 * k as f64)
                }
            },
        }
    }
}

fn check_panel_spec(panel: &DataPanel, spec: &ProjectionSpec) -> Result<()> {
    if spec.d != panel.d() {
        return Err(Error::DimensionMismatch {
            expected: panel.d(),
            actual: spec.d,
        });
    }
    if panel.preprocessing() == Preprocessing::Raw {
        return Err(Error::UncenteredPanel);
    }
    Ok(())
}

/// Project a centered panel: `PX = a Bᵀ(B X)`.
///
/// The product is evaluated as two rectangular multiplications, `k×d · d×N`
/// followed by `d×k · k×N`, so the `d×d` matrix `BᵀB` is never materialized
/// and the cost stays `O(kdN)`.
pub fn project(panel: &DataPanel, spec: &ProjectionSpec) -> Result<Array2<f64>> {
    project_with_mode(panel, spec, ScaleMode::CovariancePreserving)
}

/// [`project`] with an explicit scale mode.
pub fn project_with_mode(
    panel: &DataPanel,
    spec: &ProjectionSpec,
    mode: ScaleMode,
) -> Result<Array2<f64>> {
    check_panel_spec(panel, spec)?;
    let b = draw_projection(spec);
    let a = mode.scale(spec.family, spec.k, spec.d);
    let mut bx = b.dot(panel.values());
    bx.mapv_inplace(|v| v * a);
    Ok(b.t().dot(&bx))
}

/// One realized random factor model of a panel.
#[derive(Debug, Clone)]
pub struct RfmDecomposition {
    /// Random factor time-series `F = a′Bᵀ`, `d×k`. Independent of the data.
    pub factors: Array2<f64>,
    /// Factor loadings `L = (a/a′) XᵀBᵀ`, `N×k`.
    pub loadings: Array2<f64>,
    /// Residual `ε* = X − FLᵀ`, `d×N`.
    pub residual: Array2<f64>,
    pub spec: ProjectionSpec,
    /// Covariance-preserving scale `a`.
    pub covariance_scale: f64,
    /// Factor normalization `a′ = 1/√d`.
    pub factor_scale: f64,
}

impl RfmDecomposition {
    /// `FLᵀ`, which equals `PX = a BᵀB X` exactly by construction.
    pub fn reconstruction(&self) -> Array2<f64> {
        self.factors.dot(&self.loadings.t())
    }
}

/// Factor/loading decomposition of a centered panel under one realized `B`.
pub fn decompose(panel: &DataPanel, spec: &ProjectionSpec) -> Result<RfmDecomposition> {
    check_panel_spec(panel, spec)?;
    let b = draw_projection(spec);
    let a = covariance_scale(spec.family, spec.k, spec.d);
    let a_prime = factor_scale(spec.d);

    let factors = b.t().mapv(|v| v * a_prime);
    // L = (a/a') X^T B^T = (a/a') (B X)^T
    let bx = b.dot(panel.values());
    let loadings = bx.t().mapv(|v| v * (a / a_prime));
    let residual = panel.values() - &factors.dot(&loadings.t());
    Ok(RfmDecomposition {
        factors,
        loadings,
        residual,
        spec: *spec,
        covariance_scale: a,
        factor_scale: a_prime,
    })
}

/// The equity-direction variant: loadings come from a random `k×N` matrix `R`
/// and the projection acts from the right, `XQ = a X RᵀR`.
#[derive(Debug, Clone)]
pub struct RandomLoadingDecomposition {
    /// `a′ X Rᵀ`, `d×k`.
    pub factors: Array2<f64>,
    /// `(a/a′) Rᵀ`, `N×k`.
    pub loadings: Array2<f64>,
    /// The realized random matrix `R`, `k×N`.
    pub projection_matrix: Array2<f64>,
    /// `XQ = a X RᵀR`, `d×N`.
    pub projected: Array2<f64>,
}

/// Project in the series direction. Every moment law of the time-series model
/// carries over with `d` replaced by `N`, which is how the normalization is
/// chosen here; `spec.d` must therefore equal the panel's series count (and
/// may be 1, unlike the observation direction).
pub fn random_loading_project(
    panel: &DataPanel,
    spec: &ProjectionSpec,
) -> Result<RandomLoadingDecomposition> {
    if spec.d != panel.n_series() {
        return Err(Error::DimensionMismatch {
            expected: panel.n_series(),
            actual: spec.d,
        });
    }
    let r = draw_projection(spec);
    let a = covariance_scale(spec.family, spec.k, spec.d);
    let a_prime = factor_scale(spec.d);

    let xr = panel.values().dot(&r.t());
    let mut projected = xr.dot(&r);
    projected.mapv_inplace(|v| v * a);
    let factors = xr.mapv(|v| v * a_prime);
    let loadings = r.t().mapv(|v| v * (a / a_prime));
    Ok(RandomLoadingDecomposition {
        factors,
        loadings,
        projection_matrix: r,
        projected,
    })
}

/// Pooled empirical statistics of the factor Gram matrix `Σ_m F_{mj} F_{mj′}`
/// over an ensemble of independent factor draws.
#[derive(Debug, Clone, Copy)]
pub struct GramStats {
    /// Entries with `j = j′`.
    pub diag: Moments,
    /// Entries with `j ≠ j′` (upper triangle).
    pub offdiag: Moments,
}

/// Draw `trials` independent factor matrices `F = a′Bᵀ` from `spec` (seeds
/// derived per trial) and pool the Gram-entry statistics.
///
/// For the gaussian family with `a′ = 1/√d` the diagonal entries concentrate
/// around 1 with variance `2/d` and the off-diagonal entries around 0 with
/// variance `1/d`.
pub fn factor_gram_stats(spec: &ProjectionSpec, a_prime: f64, trials: usize) -> Result<GramStats> {
    if trials < 100 {
        return Err(Error::InvalidParameter(format!(
            "factor gram statistics need at least 100 trials, got {trials}"
        )));
    }
    let scale = a_prime * a_prime;
    let mut diag = Moments::new();
    let mut offdiag = Moments::new();
    for t in 0..trials {
        let b = draw_projection(&spec.with_seed(derive_seed(spec.seed, t as u64)));
        let gram = b.dot(&b.t());
        for j in 0..spec.k {
            diag.push(scale * gram[[j, j]]);
            for j2 in (j + 1)..spec.k {
                offdiag.push(scale * gram[[j, j2]]);
            }
        }
    }
    Ok(GramStats { diag, offdiag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_centered_panel(d: usize, n: usize, seed: u64) -> DataPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = Array2::from_shape_fn((d, n), |_| rng.random::<f64>() * 2.0 - 1.0);
        DataPanel::new(values).unwrap().center()
    }

    fn gspec(k: usize, d: usize, seed: u64) -> ProjectionSpec {
        ProjectionSpec::new(Family::Gaussian, k, d, seed).unwrap()
    }

    #[test]
    fn decomposition_reconstructs_projection() {
        let panel = random_centered_panel(30, 5, 1);
        for family in Family::ALL {
            let spec = ProjectionSpec::new(family, 7, 30, 2).unwrap();
            let px = project(&panel, &spec).unwrap();
            let dec = decompose(&panel, &spec).unwrap();
            let rec = dec.reconstruction();
            let scale = px.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in px.iter().zip(rec.iter()) {
                assert!((a - b).abs() <= 1e-10 * scale, "{family}: {a} vs {b}");
            }
            // X = F L^T + eps*
            let back = &rec + &dec.residual;
            for (a, b) in panel.values().iter().zip(back.iter()) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn zero_panel_projects_to_zero() {
        let panel = DataPanel::new(Array2::zeros((10, 3))).unwrap().center();
        let spec = gspec(4, 10, 9);
        let px = project(&panel, &spec).unwrap();
        assert!(px.iter().all(|&v| v == 0.0));
        let dec = decompose(&panel, &spec).unwrap();
        assert!(dec.residual.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_is_linear_for_fixed_b() {
        let x = random_centered_panel(20, 4, 3);
        let y = random_centered_panel(20, 4, 4);
        let spec = gspec(6, 20, 5);
        let (alpha, beta) = (2.5, -0.75);
        let combo = DataPanel::from_parts(
            alpha * x.values() + beta * y.values(),
            Preprocessing::Centered,
        );
        let lhs = project(&combo, &spec).unwrap();
        let rhs = alpha * &project(&x, &spec).unwrap() + beta * &project(&y, &spec).unwrap();
        let scale = lhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn preconditions_are_enforced() {
        let raw = DataPanel::new(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let spec = gspec(2, 3, 0);
        assert_eq!(project(&raw, &spec), Err(Error::UncenteredPanel));
        let centered = raw.center();
        let bad = gspec(2, 4, 0);
        assert!(matches!(
            project(&centered, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn factor_columns_have_unit_expected_squared_norm() {
        // E[sum_m F_mj^2] = a'^2 d = 1; mean over 10^4 draws within
        // 3 sqrt(2/d)/100 of 1 (pooling over columns only tightens this).
        let spec = gspec(10, 100, 21);
        let stats = factor_gram_stats(&spec, factor_scale(100), 10_000).unwrap();
        let tol = 3.0 * (2.0 / 100.0f64).sqrt() / 100.0;
        assert!(
            (stats.diag.mean() - 1.0).abs() <= tol,
            "mean {} tol {tol}",
            stats.diag.mean()
        );
    }

    #[test]
    fn gram_stats_k1_has_no_offdiagonal() {
        let spec = gspec(1, 50, 2);
        let stats = factor_gram_stats(&spec, factor_scale(50), 200).unwrap();
        assert_eq!(stats.offdiag.count(), 0);
        assert_eq!(stats.diag.count(), 200);
        assert!(factor_gram_stats(&spec, factor_scale(50), 99).is_err());
    }

    #[test]
    fn coordinate_mean_matches_shrinkage_factor() {
        // d = 4, u = (1,-1,1,-1), k = 4: E[(Pu)_1] = sqrt(4/8) u_1.
        let u = array![[1.0], [-1.0], [1.0], [-1.0]];
        let panel = DataPanel::from_parts(u, Preprocessing::Centered);
        let trials = 100_000u64;
        let mut acc = Moments::new();
        for t in 0..trials {
            let spec = gspec(4, 4, derive_seed(77, t));
            let px = project(&panel, &spec).unwrap();
            acc.push(px[[0, 0]]);
        }
        let expect = (4.0f64 / 8.0).sqrt();
        let z = (acc.mean() - expect) / acc.se_mean();
        assert!(z.abs() <= 3.0, "mean {} expect {expect} z {z}", acc.mean());
    }

    #[test]
    fn coordinate_mean_approaches_value_as_k_grows() {
        let u = array![[1.0], [-1.0], [1.0], [-1.0]];
        let panel = DataPanel::from_parts(u, Preprocessing::Centered);
        let mut gaps = Vec::new();
        for k in [40, 400] {
            let mut acc = Moments::new();
            for t in 0..1000u64 {
                let spec = gspec(k, 4, derive_seed(123, t));
                acc.push(project(&panel, &spec).unwrap()[[0, 0]]);
            }
            gaps.push((acc.mean() - 1.0).abs());
        }
        assert!(gaps[1] < gaps[0], "gaps {gaps:?}");
    }

    #[test]
    fn column_statistics_are_preserved_on_average() {
        // One zero-mean column u: E[mu_Pu] = 0 (4 SE), E[sigma^2_Pu] =
        // sigma_u^2 (3 SE), and Jensen: mean sigma_Pu <= sigma_u + 2 SE.
        let d = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut u: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mu = crate::stats::sample_mean(&u).unwrap();
        u.iter_mut().for_each(|v| *v -= mu);
        let sigma = crate::stats::sample_std(&u).unwrap();
        let panel = DataPanel::from_parts(
            Array2::from_shape_vec((d, 1), u).unwrap(),
            Preprocessing::Centered,
        );

        let mut means = Moments::new();
        let mut vars = Moments::new();
        let mut stds = Moments::new();
        for t in 0..10_000u64 {
            let spec = gspec(5, d, derive_seed(31, t));
            let px = project(&panel, &spec).unwrap();
            let col: Vec<f64> = px.column(0).to_vec();
            means.push(crate::stats::sample_mean(&col).unwrap());
            let v = crate::stats::sample_var(&col).unwrap();
            vars.push(v);
            stds.push(v.sqrt());
        }
        assert!(means.mean().abs() <= 4.0 * means.se_mean());
        let z = (vars.mean() - sigma * sigma) / vars.se_mean();
        assert!(z.abs() <= 3.0, "z {z}");
        assert!(stds.mean() - sigma <= 2.0 * stds.se_mean());
    }

    #[test]
    fn factors_orthogonal_to_residual_on_average() {
        let panel = random_centered_panel(30, 3, 40);
        let mut acc = Moments::new();
        for t in 0..10_000u64 {
            let spec = gspec(4, 30, derive_seed(55, t));
            let dec = decompose(&panel, &spec).unwrap();
            let inner = dec.factors.t().dot(&dec.residual);
            acc.push(inner[[0, 0]]);
        }
        assert!(
            acc.mean().abs() <= 4.0 * acc.se_mean(),
            "mean {} se {}",
            acc.mean(),
            acc.se_mean()
        );
    }

    #[test]
    fn random_loading_reconstructs_and_handles_zero() {
        let panel = random_centered_panel(12, 6, 60);
        let spec = gspec(3, 6, 61);
        let dec = random_loading_project(&panel, &spec).unwrap();
        let rec = dec.factors.dot(&dec.loadings.t());
        for (a, b) in dec.projected.iter().zip(rec.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }

        let zero = DataPanel::new(Array2::zeros((12, 6))).unwrap().center();
        let dec = random_loading_project(&zero, &spec).unwrap();
        assert!(dec.projected.iter().all(|&v| v == 0.0));

        let wrong = gspec(3, 5, 61);
        assert!(random_loading_project(&panel, &wrong).is_err());
    }

    #[test]
    fn random_loading_moments_transfer_with_n_for_d() {
        // The coordinate law E[(Pu)_m] = a k u_m applies to rows of X under
        // the series-direction projection, with N in place of d.
        let n = 4usize;
        let panel = random_centered_panel(6, n, 90);
        let a = covariance_scale(Family::Gaussian, 2, n);
        let mut acc = Moments::new();
        for t in 0..40_000u64 {
            let spec = ProjectionSpec {
                family: Family::Gaussian,
                k: 2,
                d: n,
                seed: derive_seed(91, t),
            };
            let dec = random_loading_project(&panel, &spec).unwrap();
            acc.push(dec.projected[[0, 0]]);
        }
        let expect = a * 2.0 * panel.values()[[0, 0]];
        let z = (acc.mean() - expect) / acc.se_mean();
        assert!(z.abs() <= 4.0, "mean {} expect {expect} z {z}", acc.mean());
    }

    #[test]
    fn random_loading_scalar_case() {
        // N = 1, k = 1: XQ = a r^2 X with r the single drawn element.
        let panel = random_centered_panel(10, 1, 70);
        let spec = ProjectionSpec {
            family: Family::Gaussian,
            k: 1,
            d: 1,
            seed: 71,
        };
        let dec = random_loading_project(&panel, &spec).unwrap();
        let r = draw_projection(&spec)[[0, 0]];
        let a = covariance_scale(Family::Gaussian, 1, 1);
        for (got, x) in dec.projected.iter().zip(panel.values().iter()) {
            assert_relative_eq!(*got, a * r * r * x, max_relative = 1e-12);
        }
    }

    #[test]
    fn mean_preserving_scale_reproduces_data_on_average() {
        // a = 1/k: E[PX] = X for the gaussian family.
        let u = array![[0.8], [-0.3], [-0.9], [0.4]];
        let panel = DataPanel::new(u).unwrap().center();
        let x00 = panel.values()[[0, 0]];
        let mut acc = Moments::new();
        for t in 0..40_000u64 {
            let spec = gspec(6, 4, derive_seed(301, t));
            let px = project_with_mode(&panel, &spec, ScaleMode::MeanPreserving).unwrap();
            acc.push(px[[0, 0]]);
        }
        let z = (acc.mean() - x00) / acc.se_mean();
        assert!(z.abs() <= 4.0, "mean {} target {x00} z {z}", acc.mean());
    }
}
