//! Closed-form moment laws for randomly projected vectors and a Monte Carlo
//! validator that checks every one of them.
//!
//! For a `k×d` matrix `B` with i.i.d. `N(0,1)` elements and `P = a BᵀB`, the
//! projected coordinates and sample covariance obey, for zero-mean `u`, `v`:
//!
//! - `E[(Pu)_m] = a k u_m` and `E[μ_{Pu}] = 0`,
//! - `Var((Pu)_m) = a² k (u_m² + |u|²)`,
//! - `E[C_{Pu,Pv}] = a² k (d+k) C_{u,v}`,
//! - an exact polynomial for `Var(C_{Pu,Pv})` and the simpler bound
//!   `8 a⁴ k (k+d)² σ_u² σ_v²` (valid for `d ≥ 4`), which via Chebyshev gives
//!   `P[|C_{Pu,Pv} − C_{u,v}| ≥ b] ≤ 8 σ_u² σ_v² / (k b²)` at the
//!   covariance-preserving scale `a = 1/√(k(k+d))`.
//!
//! For element-i.i.d. non-gaussian matrices the same laws hold with an overall
//! scale `c₂` and an excess-kurtosis correction `b₄`; for the column- and
//! row-normalized gaussian families this module carries exact first/second
//! coordinate moments and exact `E[C]`, while the variance of `C` is only
//! compared against the gaussian form at the matching effective scale (an
//! advisory check, reported as WARN rather than FAIL).

use crate::panel::DataPanel;
use crate::projection::{
    derive_seed, distribution_moments, factor_scale, fill_projection, Family, ProjectionSpec,
};
use crate::rfm::ScaleMode;
use crate::stats::{compensated_sum, Moments};
use crate::{Error, Result};
use rayon::prelude::*;

/// Closed-form predictions for one `(u, v, k, a)` configuration.
#[derive(Debug, Clone)]
pub struct MomentPrediction {
    /// `E[(Pu)_m]` for every coordinate `m`.
    pub mean_pu: Vec<f64>,
    /// `Var((Pu)_m)` for every coordinate `m`.
    pub var_pu: Vec<f64>,
    /// `E[C_{Pu,Pv}]`.
    pub mean_c: f64,
    /// Exact `Var(C_{Pu,Pv})`; available for gaussian projections only.
    pub var_c_exact: Option<f64>,
    /// `8 a⁴ k (k+d)² σ_u² σ_v²`; dominates `var_c_exact` for `d ≥ 4`.
    pub var_c_bound: Option<f64>,
}

impl MomentPrediction {
    /// Chebyshev tail bound `min(1, Var-bound / b²)` on
    /// `P[|C_{Pu,Pv} − E[C]| ≥ b]`. At the covariance-preserving scale this
    /// equals `min(1, 8 σ_u² σ_v² / (k b²))`.
    pub fn tail_bound(&self, b: f64) -> Result<f64> {
        if b <= 0.0 || b.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "tail bound needs b > 0, got {b}"
            )));
        }
        let vb = self.var_c_bound.ok_or_else(|| {
            Error::InvalidParameter("no covariance variance bound for this family".into())
        })?;
        Ok((vb / (b * b)).min(1.0))
    }
}

fn require_zero_mean(x: &[f64]) -> Result<()> {
    let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean = compensated_sum(x.iter().copied()) / x.len() as f64;
    if mean.abs() > 1e-10 * max_abs.max(f64::MIN_POSITIVE) {
        return Err(Error::NonZeroMean);
    }
    Ok(())
}

struct PairGeometry {
    d: usize,
    norm2_u: f64,
    norm2_v: f64,
    dot: f64,
    c_uv: f64,
    sigma2_u: f64,
    sigma2_v: f64,
}

fn pair_geometry(u: &[f64], v: &[f64]) -> Result<PairGeometry> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let d = u.len();
    if d < 2 {
        return Err(Error::DegenerateSample {
            required: 2,
            actual: d,
        });
    }
    require_zero_mean(u)?;
    require_zero_mean(v)?;
    let norm2_u = compensated_sum(u.iter().map(|x| x * x));
    let norm2_v = compensated_sum(v.iter().map(|x| x * x));
    let dot = compensated_sum(u.iter().zip(v).map(|(&a, &b)| a * b));
    let dm1 = (d - 1) as f64;
    Ok(PairGeometry {
        d,
        norm2_u,
        norm2_v,
        dot,
        c_uv: dot / dm1,
        sigma2_u: norm2_u / dm1,
        sigma2_v: norm2_v / dm1,
    })
}

/// The exact variance polynomial for `C_{Pu,Pv}` under gaussian projections.
fn var_c_polynomial(g: &PairGeometry, k: usize, a: f64) -> f64 {
    let (kf, df) = (k as f64, g.d as f64);
    let coef_norm = 4.0 * kf * kf + df * df + 5.0 * df * kf + 5.0 * kf + 3.0 * df + 6.0;
    let coef_dot = 4.0 * kf * kf + df * df + 5.0 * df * kf + 15.0 * kf + 9.0 * df + 10.0;
    let dm1 = df - 1.0;
    a.powi(4) / (dm1 * dm1) * kf * (coef_norm * g.norm2_u * g.norm2_v + coef_dot * g.dot * g.dot)
}

/// Moment laws for gaussian projection matrices at an arbitrary scale `a`.
///
/// Requires zero-mean `u` and `v` of equal length `d ≥ 2`; the variance
/// formulas additionally assume `d ≥ 4` for the bound to dominate.
pub fn predict_moments(u: &[f64], v: &[f64], k: usize, a: f64) -> Result<MomentPrediction> {
    let g = pair_geometry(u, v)?;
    let (kf, df) = (k as f64, g.d as f64);
    let a2 = a * a;
    let mean_pu = u.iter().map(|&um| a * kf * um).collect();
    let var_pu = u.iter().map(|&um| a2 * kf * (um * um + g.norm2_u)).collect();
    let mean_c = a2 * kf * (df + kf) * g.c_uv;
    let var_c_exact = var_c_polynomial(&g, k, a);
    let var_c_bound = 8.0 * a2 * a2 * kf * (kf + df) * (kf + df) * g.sigma2_u * g.sigma2_v;
    Ok(MomentPrediction {
        mean_pu,
        var_pu,
        mean_c,
        var_c_exact: Some(var_c_exact),
        var_c_bound: Some(var_c_bound),
    })
}

/// Chebyshev bound `min(1, 8 σ_u² σ_v² / (k b²))` on the probability that the
/// projected covariance misses `C_{u,v}` by at least `b`, at the
/// covariance-preserving scale.
///
/// In relative form, `b = ε σ_u σ_v` gives `8/(k ε²)`: the bound is
/// informative only for `ε > k^{-1/2}`.
pub fn chebyshev_tail(sigma_u: f64, sigma_v: f64, k: usize, b: f64) -> Result<f64> {
    if b <= 0.0 || b.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "tail bound needs b > 0, got {b}"
        )));
    }
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let s2 = sigma_u * sigma_u * sigma_v * sigma_v;
    Ok((8.0 * s2 / (k as f64 * b * b)).min(1.0))
}

/// Moment laws for element-i.i.d. projections with element variance `c₂` and
/// excess kurtosis `b₄`. Reduces exactly to [`predict_moments`] at
/// `c₂ = 1`, `b₄ = 0`. No closed variance of `C` is carried here.
pub fn nongaussian_predictions(
    u: &[f64],
    v: &[f64],
    k: usize,
    a: f64,
    c2: f64,
    b4: f64,
) -> Result<MomentPrediction> {
    let g = pair_geometry(u, v)?;
    let (kf, df) = (k as f64, g.d as f64);
    let a2 = a * a;
    let mean_pu = u.iter().map(|&um| c2 * a * kf * um).collect();
    let var_pu = u
        .iter()
        .map(|&um| c2 * c2 * a2 * kf * (g.norm2_u + (1.0 + b4) * um * um))
        .collect();
    let mean_c = c2 * c2 * a2 * kf * (df + kf + b4 * (1.0 - 1.0 / df)) * g.c_uv;
    Ok(MomentPrediction {
        mean_pu,
        var_pu,
        mean_c,
        var_c_exact: None,
        var_c_bound: None,
    })
}

/// Exact coordinate laws for the two normalized-gaussian families.
///
/// Columns of `B` being unit vectors in `R^k` (or rows in `R^d`) makes these
/// first and second moments exact consequences of uniform-sphere moments:
/// `E[r_a r_b] = δ_{ab}/n` and
/// `E[r_a r_b r_c r_e] = (δ_{ab}δ_{ce} + δ_{ac}δ_{be} + δ_{ae}δ_{bc})/(n(n+2))`
/// on the unit sphere of `R^n`.
fn normalized_predictions(
    family: Family,
    u: &[f64],
    v: &[f64],
    k: usize,
    a: f64,
) -> Result<MomentPrediction> {
    let g = pair_geometry(u, v)?;
    let (kf, df) = (k as f64, g.d as f64);
    let a2 = a * a;
    match family {
        Family::ColumnNormalizedGaussian => {
            let mean_pu = u.iter().map(|&um| a * um).collect();
            let var_pu = u
                .iter()
                .map(|&um| a2 * (g.norm2_u - um * um) / kf)
                .collect();
            let mean_c = a2 * g.c_uv * (df + kf - 2.0 + 2.0 / df) / kf;
            Ok(MomentPrediction {
                mean_pu,
                var_pu,
                mean_c,
                var_c_exact: None,
                var_c_bound: None,
            })
        }
        Family::RowNormalizedGaussian => {
            let mean_pu = u.iter().map(|&um| a * kf / df * um).collect();
            let var_pu = u
                .iter()
                .map(|&um| {
                    a2 * kf
                        * ((g.norm2_u + 2.0 * um * um) / (df * (df + 2.0)) - um * um / (df * df))
                })
                .collect();
            let mean_c = a2 * kf * g.c_uv * (df + kf - 1.0 - df / (df + 2.0)) / (df * df);
            Ok(MomentPrediction {
                mean_pu,
                var_pu,
                mean_c,
                var_c_exact: None,
                var_c_bound: None,
            })
        }
        _ => Err(Error::InvalidParameter(
            "normalized_predictions applies to the normalized families only".into(),
        )),
    }
}

/// Family-appropriate moment laws at scale `a`.
pub fn family_predictions(
    family: Family,
    u: &[f64],
    v: &[f64],
    k: usize,
    a: f64,
) -> Result<MomentPrediction> {
    match family {
        Family::Gaussian => predict_moments(u, v, k, a),
        Family::ColumnNormalizedGaussian | Family::RowNormalizedGaussian => {
            normalized_predictions(family, u, v, k, a)
        }
        _ => {
            let m = distribution_moments(family)?;
            nongaussian_predictions(u, v, k, a, m.c2, m.b4)
        }
    }
}

/// Validation verdict of one report row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Outside the band, but the comparison is advisory (no exact law).
    Warn,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Warn => "WARN",
            Verdict::Fail => "FAIL",
        })
    }
}

/// One closed-form-vs-Monte-Carlo comparison.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub quantity: String,
    pub closed_form: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub verdict: Verdict,
}

/// Side-by-side closed-form vs Monte Carlo moment estimates.
#[derive(Debug, Clone)]
pub struct TheoryReport {
    pub family: Family,
    pub k: usize,
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    pub scale: f64,
    pub rows: Vec<ReportRow>,
}

impl TheoryReport {
    /// True when no row carries a FAIL verdict (WARN rows do not fail a run).
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn row(&self, quantity: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }

    /// CSV table: `quantity,closed_form,estimate,std_error,z,verdict`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,closed_form,estimate,std_error,z,verdict\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.quantity, r.closed_form, r.estimate, r.std_error, r.z, r.verdict
            ));
        }
        out
    }
}

/// Knobs for [`monte_carlo_validate_with`].
#[derive(Debug, Clone)]
pub struct McOptions {
    pub scale_mode: ScaleMode,
    /// Absolute deviations `b` at which tail exceedance is checked.
    pub b_grid: Vec<f64>,
    /// Also accumulate factor-Gram statistics (costs `O(k²d)` per trial).
    pub include_gram: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            scale_mode: ScaleMode::CovariancePreserving,
            b_grid: vec![0.05, 0.1, 0.2, 0.5],
            include_gram: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Strictness {
    Strict,
    Advisory,
}

fn moment_row(
    quantity: impl Into<String>,
    closed: f64,
    estimate: f64,
    se: f64,
    class: Strictness,
) -> ReportRow {
    let z = if se > 0.0 {
        (estimate - closed) / se
    } else if (estimate - closed).abs() <= 1e-12 * closed.abs().max(1.0) {
        // degenerate estimator (e.g. coin-flip Gram diagonals are constant):
        // equality up to rounding counts as agreement
        0.0
    } else {
        f64::INFINITY
    };
    let verdict = if z.abs() <= 4.0 {
        Verdict::Pass
    } else if class == Strictness::Strict {
        Verdict::Fail
    } else {
        Verdict::Warn
    };
    ReportRow {
        quantity: quantity.into(),
        closed_form: closed,
        estimate,
        std_error: se,
        z,
        verdict,
    }
}

fn upper_bound_row(
    quantity: impl Into<String>,
    bound: f64,
    estimate: f64,
    se: f64,
    slack_se: f64,
    class: Strictness,
) -> ReportRow {
    let z = if se > 0.0 {
        (estimate - bound) / se
    } else if estimate <= bound {
        0.0
    } else {
        f64::INFINITY
    };
    let verdict = if estimate <= bound + slack_se * se {
        Verdict::Pass
    } else if class == Strictness::Strict {
        Verdict::Fail
    } else {
        Verdict::Warn
    };
    ReportRow {
        quantity: quantity.into(),
        closed_form: bound,
        estimate,
        std_error: se,
        z,
        verdict,
    }
}

/// Per-block Monte Carlo accumulator.
struct Partial {
    pu_at: Vec<Moments>,
    mu_pu: Moments,
    sigma2_pu: Moments,
    sigma_pu: Moments,
    c: Moments,
    exceed: Vec<u64>,
    gram_diag: Moments,
    gram_offdiag: Moments,
}

impl Partial {
    fn new(n_coords: usize, n_b: usize) -> Self {
        Self {
            pu_at: vec![Moments::new(); n_coords],
            mu_pu: Moments::new(),
            sigma2_pu: Moments::new(),
            sigma_pu: Moments::new(),
            c: Moments::new(),
            exceed: vec![0; n_b],
            gram_diag: Moments::new(),
            gram_offdiag: Moments::new(),
        }
    }

    fn merge(&mut self, other: &Partial) {
        for (a, b) in self.pu_at.iter_mut().zip(&other.pu_at) {
            a.merge(b);
        }
        self.mu_pu.merge(&other.mu_pu);
        self.sigma2_pu.merge(&other.sigma2_pu);
        self.sigma_pu.merge(&other.sigma_pu);
        self.c.merge(&other.c);
        for (a, b) in self.exceed.iter_mut().zip(&other.exceed) {
            *a += b;
        }
        self.gram_diag.merge(&other.gram_diag);
        self.gram_offdiag.merge(&other.gram_offdiag);
    }
}

/// Validate every applicable closed-form law by simulation, with default
/// options (covariance-preserving scale, the standard `b` grid, Gram checks).
pub fn monte_carlo_validate(
    u: &[f64],
    v: &[f64],
    spec: &ProjectionSpec,
    trials: usize,
) -> Result<TheoryReport> {
    monte_carlo_validate_with(u, v, spec, trials, &McOptions::default())
}

/// Draw `trials` independent projection matrices, accumulate the empirical
/// moments of `(Pu)_m` (at `m = 1`, the argmax of `|u|`, and `m = d`), of
/// `μ_{Pu}`, `σ²_{Pu}`, `σ_{Pu}`, of `C_{Pu,Pv}` and its tail exceedance on a
/// `b` grid, and of the factor Gram entries, then compare each against its
/// closed form.
///
/// Moment rows pass at `|z| ≤ 4`; tail rows are one-sided with a
/// `4·√(p(1−p)/n)` binomial slack; the Jensen volatility row is one-sided at
/// two standard errors. Rows whose law is exact for the requested family are
/// strict (FAIL on miss); approximate transfers are advisory (WARN on miss).
/// A failing comparison is a verdict in the report, never an error.
pub fn monte_carlo_validate_with(
    u: &[f64],
    v: &[f64],
    spec: &ProjectionSpec,
    trials: usize,
    opts: &McOptions,
) -> Result<TheoryReport> {
    if trials < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo validation needs at least 10^4 trials, got {trials}"
        )));
    }
    if u.len() != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            actual: u.len(),
        });
    }
    let g = pair_geometry(u, v)?;
    let (k, d) = (spec.k, spec.d);
    let a = opts.scale_mode.scale(spec.family, k, d);
    let a_prime = factor_scale(d);
    let pred = family_predictions(spec.family, u, v, k, a)?;

    // Gaussian-equivalent prediction at the effective element scale, used for
    // the Var(C) comparison and the Chebyshev bound. Exact for the gaussian
    // family; advisory elsewhere.
    let c2_eff = match spec.family {
        Family::ColumnNormalizedGaussian => 1.0 / k as f64,
        Family::RowNormalizedGaussian => 1.0 / d as f64,
        f => distribution_moments(f)?.c2,
    };
    let gauss_pred = predict_moments(u, v, k, a * c2_eff)?;

    // Coordinate checks at the first coordinate, the argmax of |u|, and the
    // last coordinate; deduplicated when they coincide.
    let argmax = u
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut coords = vec![0, argmax, d - 1];
    coords.sort_unstable();
    coords.dedup();

    // Coordinate first/second moments and E[C] are exact for all six
    // families (sphere moments handle the normalized ones).
    let strict = Strictness::Strict;

    let block = 4096usize;
    let n_blocks = trials.div_ceil(block);
    let mean_c_law = pred.mean_c;
    let b_grid = &opts.b_grid;
    // Gram rows exist only for element-i.i.d. families; skip the O(k²d)
    // accumulation otherwise.
    let include_gram = opts.include_gram && spec.family.is_element_iid();

    let partials: Vec<Partial> = (0..n_blocks)
        .into_par_iter()
        .map(|bi| {
            let lo = bi * block;
            let hi = ((bi + 1) * block).min(trials);
            let mut p = Partial::new(coords.len(), b_grid.len());
            let mut bbuf = vec![0.0f64; k * d];
            let mut yu = vec![0.0f64; k];
            let mut yv = vec![0.0f64; k];
            let mut pu = vec![0.0f64; d];
            let mut pv = vec![0.0f64; d];
            for t in lo..hi {
                let tspec = spec.with_seed(derive_seed(spec.seed, t as u64));
                fill_projection(&tspec, &mut bbuf);
                for j in 0..k {
                    let row = &bbuf[j * d..(j + 1) * d];
                    let mut su = 0.0;
                    let mut sv = 0.0;
                    for m in 0..d {
                        su += row[m] * u[m];
                        sv += row[m] * v[m];
                    }
                    yu[j] = su;
                    yv[j] = sv;
                }
                pu.iter_mut().for_each(|x| *x = 0.0);
                pv.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..k {
                    let row = &bbuf[j * d..(j + 1) * d];
                    let (cu, cv) = (yu[j], yv[j]);
                    for m in 0..d {
                        pu[m] += cu * row[m];
                        pv[m] += cv * row[m];
                    }
                }
                pu.iter_mut().for_each(|x| *x *= a);
                pv.iter_mut().for_each(|x| *x *= a);

                for (slot, &m) in coords.iter().enumerate() {
                    p.pu_at[slot].push(pu[m]);
                }
                let mu_u: f64 = pu.iter().sum::<f64>() / d as f64;
                let mu_v: f64 = pv.iter().sum::<f64>() / d as f64;
                let mut suu = 0.0;
                let mut suv = 0.0;
                for m in 0..d {
                    let du = pu[m] - mu_u;
                    suu += du * du;
                    suv += du * (pv[m] - mu_v);
                }
                let dm1 = (d - 1) as f64;
                let var_pu_sample = suu / dm1;
                let c_sample = suv / dm1;
                p.mu_pu.push(mu_u);
                p.sigma2_pu.push(var_pu_sample);
                p.sigma_pu.push(var_pu_sample.sqrt());
                p.c.push(c_sample);
                for (slot, &b) in b_grid.iter().enumerate() {
                    if (c_sample - mean_c_law).abs() >= b {
                        p.exceed[slot] += 1;
                    }
                }
                if include_gram {
                    let g2 = a_prime * a_prime;
                    for j in 0..k {
                        let row_j = &bbuf[j * d..(j + 1) * d];
                        let diag: f64 = row_j.iter().map(|x| x * x).sum();
                        p.gram_diag.push(g2 * diag);
                        for j2 in (j + 1)..k {
                            let row_j2 = &bbuf[j2 * d..(j2 + 1) * d];
                            let mut s = 0.0;
                            for m in 0..d {
                                s += row_j[m] * row_j2[m];
                            }
                            p.gram_offdiag.push(g2 * s);
                        }
                    }
                }
            }
            p
        })
        .collect();

    let mut acc = Partial::new(coords.len(), b_grid.len());
    for p in &partials {
        acc.merge(p);
    }

    let mut rows = Vec::new();
    for (slot, &m) in coords.iter().enumerate() {
        rows.push(moment_row(
            format!("mean_pu_m{}", m + 1),
            pred.mean_pu[m],
            acc.pu_at[slot].mean(),
            acc.pu_at[slot].se_mean(),
            strict,
        ));
        rows.push(moment_row(
            format!("var_pu_m{}", m + 1),
            pred.var_pu[m],
            acc.pu_at[slot].variance(),
            acc.pu_at[slot].se_variance(),
            strict,
        ));
    }
    rows.push(moment_row(
        "mean_mu_pu",
        0.0,
        acc.mu_pu.mean(),
        acc.mu_pu.se_mean(),
        strict,
    ));
    rows.push(moment_row(
        "mean_c_law",
        pred.mean_c,
        acc.c.mean(),
        acc.c.se_mean(),
        strict,
    ));
    // Preservation targets: these hold only at the covariance-preserving
    // scale, so running under another scale mode makes them fail; that is
    // the point. For the normalized families the preserving scale is itself
    // approximate, hence advisory.
    let preserved_class = if spec.family.is_element_iid() {
        Strictness::Strict
    } else {
        Strictness::Advisory
    };
    rows.push(moment_row(
        "mean_c_preserved",
        g.c_uv,
        acc.c.mean(),
        acc.c.se_mean(),
        preserved_class,
    ));
    rows.push(moment_row(
        "mean_var_pu_preserved",
        g.sigma2_u,
        acc.sigma2_pu.mean(),
        acc.sigma2_pu.se_mean(),
        preserved_class,
    ));
    let var_c_class = if spec.family == Family::Gaussian {
        Strictness::Strict
    } else {
        Strictness::Advisory
    };
    rows.push(moment_row(
        "var_c",
        gauss_pred.var_c_exact.expect("gaussian prediction"),
        acc.c.variance(),
        acc.c.se_variance(),
        var_c_class,
    ));
    // Jensen: E[sigma_Pu] <= sigma_u whenever E[sigma^2_Pu] = sigma_u^2.
    if opts.scale_mode == ScaleMode::CovariancePreserving {
        rows.push(upper_bound_row(
            "mean_std_pu_jensen",
            g.sigma2_u.sqrt(),
            acc.sigma_pu.mean(),
            acc.sigma_pu.se_mean(),
            2.0,
            preserved_class,
        ));
    }
    let n = trials as f64;
    for (slot, &b) in b_grid.iter().enumerate() {
        let bound = gauss_pred.tail_bound(b)?;
        let p_hat = acc.exceed[slot] as f64 / n;
        let se = (p_hat * (1.0 - p_hat) / n).sqrt();
        rows.push(upper_bound_row(
            format!("exceedance_b{b}"),
            bound,
            p_hat,
            se,
            4.0,
            var_c_class,
        ));
    }
    if include_gram {
        let m = distribution_moments(spec.family)?;
        // E[G_jj] = a'^2 d c2; Var(G_jj) = a'^4 d (E[B^4] - c2^2) = c2^2 (2+b4)/d
        // at a' = 1/sqrt(d); off-diagonal: mean 0, variance c2^2/d.
        rows.push(moment_row(
            "gram_diag_mean",
            m.c2,
            acc.gram_diag.mean(),
            acc.gram_diag.se_mean(),
            Strictness::Strict,
        ));
        rows.push(moment_row(
            "gram_diag_var",
            m.c2 * m.c2 * (2.0 + m.b4) / d as f64,
            acc.gram_diag.variance(),
            acc.gram_diag.se_variance(),
            Strictness::Strict,
        ));
        if k > 1 {
            rows.push(moment_row(
                "gram_offdiag_mean",
                0.0,
                acc.gram_offdiag.mean(),
                acc.gram_offdiag.se_mean(),
                Strictness::Strict,
            ));
            rows.push(moment_row(
                "gram_offdiag_var",
                m.c2 * m.c2 / d as f64,
                acc.gram_offdiag.variance(),
                acc.gram_offdiag.se_variance(),
                Strictness::Strict,
            ));
        }
    }

    Ok(TheoryReport {
        family: spec.family,
        k,
        d,
        trials,
        seed: spec.seed,
        scale: a,
        rows,
    })
}

/// A deterministic zero-mean, unit-variance vector pair for validator runs:
/// two independent standard-normal draws, exactly centered and rescaled.
pub fn standardized_pair(d: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |d: usize| -> Vec<f64> {
        let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mu = compensated_sum(x.iter().copied()) / d as f64;
        x.iter_mut().for_each(|v| *v -= mu);
        let resid = compensated_sum(x.iter().copied()) / d as f64;
        x.iter_mut().for_each(|v| *v -= resid);
        let var = compensated_sum(x.iter().map(|v| v * v)) / (d - 1) as f64;
        let s = 1.0 / var.sqrt();
        x.iter_mut().for_each(|v| *v *= s);
        x
    };
    (draw(d), draw(d))
}

/// Columns `(b, c)` of a centered panel as a validator input pair.
pub fn panel_pair(panel: &DataPanel, b: usize, c: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = panel.n_series();
    if b >= n || c >= n {
        return Err(Error::InvalidParameter(format!(
            "pair ({b}, {c}) out of range for {n} series"
        )));
    }
    let u = panel.column(b).to_vec();
    let v = panel.column(c).to_vec();
    require_zero_mean(&u)?;
    require_zero_mean(&v)?;
    Ok((u, v))
}
