//! Ensemble experiments: error funnels for time-series reproduction,
//! volatility, correlation and covariance, comparing random factor models
//! against the PCA baseline, with market-factor removal and the six-family
//! universality comparison.
//!
//! A funnel pools an error metric over (pairs × ensemble members) for each
//! factor count, and reports the median with the 25th/75th percentiles.

use crate::panel::{DataPanel, Preprocessing};
use crate::pca::{pca_decompose, remove_market_factor};
use crate::projection::{ensemble_seed, Family, ProjectionSpec};
use crate::rfm;
use crate::stats;
use crate::{Error, Result};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::collections::HashSet;

/// Error metrics reported by the funnel experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Rmse,
    VolatilityError,
    CorrError,
    CorrAbsError,
    CovError,
    CovAbsError,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Rmse,
        Metric::VolatilityError,
        Metric::CorrError,
        Metric::CorrAbsError,
        Metric::CovError,
        Metric::CovAbsError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::VolatilityError => "volatility_error",
            Metric::CorrError => "corr_error",
            Metric::CorrAbsError => "corr_abs_error",
            Metric::CovError => "cov_error",
            Metric::CovAbsError => "cov_abs_error",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric `{name}`")))
    }

    fn needs_pairs(self) -> bool {
        matches!(
            self,
            Metric::CorrError | Metric::CorrAbsError | Metric::CovError | Metric::CovAbsError
        )
    }

    /// Correlation and covariance errors go to CSV in percentage points.
    fn csv_scale(self) -> f64 {
        if self.needs_pairs() {
            100.0
        } else {
            1.0
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which series pairs enter the correlation/covariance funnels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSample {
    All,
    /// A seeded random sample of this many distinct pairs.
    Sample(usize),
}

/// How percentiles are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// One distribution per k, pooled over pairs × ensemble members.
    Pooled,
    /// Per-model medians first, percentiles across models.
    PerModel,
}

/// Configuration of a funnel experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub k_grid: Vec<usize>,
    /// Number of independent factor-model realizations per k.
    pub ensemble_size: usize,
    pub families: Vec<Family>,
    pub pair_sample: PairSample,
    pub metrics: Vec<Metric>,
    /// Also run the experiment on the market-factor-reduced panel.
    pub remove_market: bool,
    pub base_seed: u64,
    pub pooling: Pooling,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() || self.k_grid.iter().any(|&k| k < 1) {
            return Err(Error::InvalidParameter(
                "k_grid must be non-empty with every k >= 1".into(),
            ));
        }
        if self.ensemble_size < 1 {
            return Err(Error::InvalidParameter("ensemble_size must be >= 1".into()));
        }
        if self.families.is_empty() {
            return Err(Error::InvalidParameter("families must be non-empty".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidParameter("metrics must be non-empty".into()));
        }
        if self.pair_sample == PairSample::Sample(0) {
            return Err(Error::InvalidParameter("pair_sample must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k_grid: vec![10, 50, 100],
            ensemble_size: 1000,
            families: vec![Family::Gaussian],
            pair_sample: PairSample::Sample(20_000),
            metrics: vec![Metric::CorrError, Metric::CorrAbsError],
            remove_market: false,
            base_seed: 0,
            pooling: Pooling::Pooled,
        }
    }
}

/// One row of a funnel table.
#[derive(Debug, Clone, PartialEq)]
pub struct FunnelRow {
    pub k: usize,
    /// Family name, or `"pca"` for the baseline rows.
    pub family: String,
    pub metric: Metric,
    /// True when the row comes from a market-factor-reduced panel.
    pub reduced: bool,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub n_samples: usize,
    pub n_skipped: usize,
}

/// Root-mean-square error over all `d·N` entries.
pub fn reconstruction_rmse(x: &Array2<f64>, xhat: &Array2<f64>) -> Result<f64> {
    if x.dim() != xhat.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: xhat.len(),
        });
    }
    let sum: f64 = x
        .iter()
        .zip(xhat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / x.len() as f64).sqrt())
}

/// Signed and absolute correlation error of one pair:
/// `corr(X̂_b, X̂_c) − corr(X_b, X_c)`.
///
/// Zero variance in either matrix's columns makes the pair undefined; callers
/// skip such pairs and tally them.
pub fn corr_error(x: &Array2<f64>, xhat: &Array2<f64>, b: usize, c: usize) -> Result<(f64, f64)> {
    let data = stats::correlation(&x.column(b).to_vec(), &x.column(c).to_vec())?;
    let model = stats::correlation(&xhat.column(b).to_vec(), &xhat.column(c).to_vec())?;
    let err = model - data;
    Ok((err, err.abs()))
}

/// Signed and absolute covariance error of one pair.
pub fn cov_error(x: &Array2<f64>, xhat: &Array2<f64>, b: usize, c: usize) -> Result<(f64, f64)> {
    let data = stats::sample_cov(&x.column(b).to_vec(), &x.column(c).to_vec())?;
    let model = stats::sample_cov(&xhat.column(b).to_vec(), &xhat.column(c).to_vec())?;
    let err = model - data;
    Ok((err, err.abs()))
}

/// Signed volatility error of one series: `σ_{X̂_b} − σ_{X_b}`. On a
/// standardized panel `σ_{X_b} = 1`, so this is also the relative error.
pub fn volatility_error(x: &Array2<f64>, xhat: &Array2<f64>, b: usize) -> Result<f64> {
    let data = stats::sample_std(&x.column(b).to_vec())?;
    let model = stats::sample_std(&xhat.column(b).to_vec())?;
    Ok(model - data)
}

/// Linear-interpolation percentile (inclusive, R-7) of a sorted slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Per-column summary of a matrix.
struct ColumnSummary {
    stds: Vec<f64>,
    zero_var: Vec<bool>,
    /// Column-centered copy of the matrix.
    centered: Array2<f64>,
}

fn summarize_columns(x: &Array2<f64>) -> ColumnSummary {
    let d = x.nrows();
    let mut centered = x.clone();
    crate::panel::center_columns(&mut centered);
    let mut stds = Vec::with_capacity(x.ncols());
    let mut zero_var = Vec::with_capacity(x.ncols());
    for col in centered.columns() {
        let ss: f64 = col.iter().map(|v| v * v).sum();
        let var = ss / (d - 1) as f64;
        stds.push(var.sqrt());
        zero_var.push(var <= 0.0);
    }
    ColumnSummary {
        stds,
        zero_var,
        centered,
    }
}

/// Sample covariance matrix from a column-centered matrix.
fn cov_matrix(summary: &ColumnSummary) -> Array2<f64> {
    let d = summary.centered.nrows() as f64;
    let mut cov = summary.centered.t().dot(&summary.centered);
    cov.mapv_inplace(|v| v / (d - 1.0));
    cov
}

fn sample_pairs(n: usize, sample: PairSample, seed: u64) -> Vec<(usize, usize)> {
    let total = n * (n - 1) / 2;
    let want = match sample {
        PairSample::All => total,
        PairSample::Sample(m) => m.min(total),
    };
    if want == total {
        let mut pairs = Vec::with_capacity(total);
        for b in 0..n {
            for c in (b + 1)..n {
                pairs.push((b, c));
            }
        }
        return pairs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(want);
    let mut pairs = Vec::with_capacity(want);
    while pairs.len() < want {
        let b = rng.random_range(0..n);
        let c = rng.random_range(0..n);
        if b == c {
            continue;
        }
        let pair = (b.min(c), b.max(c));
        if seen.insert(pair) {
            pairs.push(pair);
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Error samples extracted from one reconstruction.
struct ModelSamples {
    rmse: f64,
    vol: Vec<f64>,
    /// Signed correlation errors per sampled pair; NaN marks a skipped pair.
    corr_err: Vec<f64>,
    cov_err: Vec<f64>,
    skipped: usize,
}

struct MetricFlags {
    rmse: bool,
    vol: bool,
    pairs: bool,
}

fn model_samples(
    base: &ColumnSummary,
    base_cov: &Array2<f64>,
    x: &Array2<f64>,
    xhat: &Array2<f64>,
    pairs: &[(usize, usize)],
    flags: &MetricFlags,
) -> ModelSamples {
    let rmse = if flags.rmse {
        reconstruction_rmse(x, xhat).expect("shapes agree")
    } else {
        0.0
    };
    if !(flags.vol || flags.pairs) {
        return ModelSamples {
            rmse,
            vol: Vec::new(),
            corr_err: Vec::new(),
            cov_err: Vec::new(),
            skipped: 0,
        };
    }
    let model = summarize_columns(xhat);
    let vol = if flags.vol {
        base.stds
            .iter()
            .zip(&model.stds)
            .map(|(sb, sm)| sm - sb)
            .collect()
    } else {
        Vec::new()
    };
    let (corr_err, cov_err, skipped) = if flags.pairs {
        let (d, n) = xhat.dim();
        let dm1 = (d - 1) as f64;
        // Sparse pair samples take direct inner products over contiguous
        // series; dense pair sets amortize better through one matrix product.
        let dense = pairs.len() * 8 >= n * n;
        let model_cov = if dense { Some(cov_matrix(&model)) } else { None };
        let series_major = if dense {
            None
        } else {
            let mut t = vec![0.0f64; n * d];
            for (idx, col) in model.centered.columns().into_iter().enumerate() {
                for (m, &v) in col.iter().enumerate() {
                    t[idx * d + m] = v;
                }
            }
            Some(t)
        };
        let mut corr = Vec::with_capacity(pairs.len());
        let mut cov = Vec::with_capacity(pairs.len());
        let mut skipped = 0usize;
        for &(b, c) in pairs {
            if base.zero_var[b] || base.zero_var[c] || model.zero_var[b] || model.zero_var[c] {
                corr.push(f64::NAN);
                cov.push(f64::NAN);
                skipped += 1;
                continue;
            }
            let model_cov_bc = match (&model_cov, &series_major) {
                (Some(mc), _) => mc[[b, c]],
                (None, Some(t)) => {
                    let rb = &t[b * d..(b + 1) * d];
                    let rc = &t[c * d..(c + 1) * d];
                    rb.iter().zip(rc).map(|(x, y)| x * y).sum::<f64>() / dm1
                }
                (None, None) => unreachable!(),
            };
            let data_corr = base_cov[[b, c]] / (base.stds[b] * base.stds[c]);
            let model_corr = model_cov_bc / (model.stds[b] * model.stds[c]);
            corr.push(model_corr - data_corr);
            cov.push(model_cov_bc - base_cov[[b, c]]);
        }
        (corr, cov, skipped)
    } else {
        (Vec::new(), Vec::new(), 0)
    };
    ModelSamples {
        rmse,
        vol,
        corr_err,
        cov_err,
        skipped,
    }
}

fn pooled_rows(
    k: usize,
    family: &str,
    reduced: bool,
    metrics: &[Metric],
    pooling: Pooling,
    members: &[ModelSamples],
) -> Vec<FunnelRow> {
    let mut rows = Vec::with_capacity(metrics.len());
    let total_skipped: usize = members.iter().map(|m| m.skipped).sum();
    for &metric in metrics {
        let per_member: Vec<Vec<f64>> = members
            .iter()
            .map(|m| match metric {
                Metric::Rmse => vec![m.rmse],
                Metric::VolatilityError => m.vol.clone(),
                Metric::CorrError => {
                    m.corr_err.iter().copied().filter(|v| !v.is_nan()).collect()
                }
                Metric::CorrAbsError => m
                    .corr_err
                    .iter()
                    .filter(|v| !v.is_nan())
                    .map(|v| v.abs())
                    .collect(),
                Metric::CovError => m.cov_err.iter().copied().filter(|v| !v.is_nan()).collect(),
                Metric::CovAbsError => m
                    .cov_err
                    .iter()
                    .filter(|v| !v.is_nan())
                    .map(|v| v.abs())
                    .collect(),
            })
            .collect();
        let pooled: Vec<f64> = match pooling {
            Pooling::Pooled => per_member.into_iter().flatten().collect(),
            Pooling::PerModel => per_member
                .into_iter()
                .filter(|v| !v.is_empty())
                .map(|mut v| {
                    v.sort_unstable_by(f64::total_cmp);
                    percentile(&v, 0.5)
                })
                .collect(),
        };
        let n_samples = pooled.len();
        let mut sorted = pooled;
        sorted.sort_unstable_by(f64::total_cmp);
        let n_skipped = if metric.needs_pairs() { total_skipped } else { 0 };
        rows.push(FunnelRow {
            k,
            family: family.to_string(),
            metric,
            reduced,
            median: percentile(&sorted, 0.5),
            p25: percentile(&sorted, 0.25),
            p75: percentile(&sorted, 0.75),
            n_samples,
            n_skipped,
        });
    }
    rows
}

fn run_funnel_tagged(
    panel: &DataPanel,
    config: &ExperimentConfig,
    reduced: bool,
) -> Result<Vec<FunnelRow>> {
    config.validate()?;
    if panel.preprocessing() == Preprocessing::Raw {
        return Err(Error::UncenteredPanel);
    }
    let x = panel.values();
    let n = panel.n_series();
    let flags = MetricFlags {
        rmse: config.metrics.contains(&Metric::Rmse),
        vol: config.metrics.contains(&Metric::VolatilityError),
        pairs: config.metrics.iter().any(|m| m.needs_pairs()),
    };
    let base = summarize_columns(x);
    let base_cov = cov_matrix(&base);
    let pairs = if flags.pairs && n >= 2 {
        sample_pairs(n, config.pair_sample, config.base_seed)
    } else {
        Vec::new()
    };

    // PCA is deterministic: decomposed once, truncated per k.
    let pca = pca_decompose(panel)?;

    let mut rows = Vec::new();
    for &k in &config.k_grid {
        for &family in &config.families {
            let members: Vec<ModelSamples> = (0..config.ensemble_size)
                .into_par_iter()
                .map(|trial| {
                    let seed = ensemble_seed(config.base_seed, k, family.name(), trial as u64);
                    let spec = ProjectionSpec {
                        family,
                        k,
                        d: panel.d(),
                        seed,
                    };
                    let xhat = rfm::project(panel, &spec).expect("checked preconditions");
                    model_samples(&base, &base_cov, x, &xhat, &pairs, &flags)
                })
                .collect();
            rows.extend(pooled_rows(
                k,
                family.name(),
                reduced,
                &config.metrics,
                config.pooling,
                &members,
            ));
        }
        // The PCA baseline has no ensemble: percentiles are over pairs (or
        // columns) of the single deterministic reconstruction. Factor counts
        // beyond the SVD rank have no PCA counterpart and are skipped.
        if k <= pca.rank() {
            let xhat = pca.reconstruction(k)?;
            let member = model_samples(&base, &base_cov, x, &xhat, &pairs, &flags);
            rows.extend(pooled_rows(
                k,
                "pca",
                reduced,
                &config.metrics,
                Pooling::Pooled,
                &[member],
            ));
        }
    }
    Ok(rows)
}

/// Run the funnel experiment on a centered (usually standardized) panel: for
/// each `k` and family, draw `ensemble_size` models with seeds
/// `base_seed ⊕ hash(k, family, trial)`, reconstruct, pool the configured
/// metrics, and append the deterministic PCA rows.
pub fn run_funnel(panel: &DataPanel, config: &ExperimentConfig) -> Result<Vec<FunnelRow>> {
    run_funnel_tagged(panel, config, false)
}

/// [`run_funnel`] on the market-factor-reduced panel; rows carry
/// `reduced = true`.
pub fn reduced_data_experiment(
    panel: &DataPanel,
    config: &ExperimentConfig,
) -> Result<Vec<FunnelRow>> {
    let reduced = remove_market_factor(panel)?;
    run_funnel_tagged(&reduced, config, true)
}

/// One family's median absolute correlation error at one k, relative to the
/// gaussian family.
#[derive(Debug, Clone, PartialEq)]
pub struct UniversalityRow {
    pub k: usize,
    pub family: String,
    pub median_abs_corr_error: f64,
    /// `|median − median_gaussian| / median_gaussian`.
    pub relative_to_gaussian: f64,
    pub within_band: bool,
    /// The column-normalized family is out of scope below k = 5, where it is
    /// known to deviate from the rest.
    pub in_scope: bool,
}

/// Comparison table across all six families.
#[derive(Debug, Clone)]
pub struct UniversalityTable {
    pub rows: Vec<UniversalityRow>,
    /// Relative tolerance of the agreement band.
    pub band: f64,
}

impl UniversalityTable {
    /// True when every in-scope row sits within the band.
    pub fn all_within_band(&self) -> bool {
        self.rows.iter().all(|r| !r.in_scope || r.within_band)
    }

    /// CSV table:
    /// `k,family,median_abs_corr_error,relative_to_gaussian,within_band,in_scope`.
    /// The median is in percentage points.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,family,median_abs_corr_error,relative_to_gaussian,within_band,in_scope\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.k,
                r.family,
                100.0 * r.median_abs_corr_error,
                r.relative_to_gaussian,
                r.within_band,
                r.in_scope
            ));
        }
        out
    }
}

const UNIVERSALITY_BAND: f64 = 0.20;

/// Compare the six families' median absolute correlation errors against the
/// gaussian baseline; in-scope medians must agree within 20% relative for the
/// table to count as universal.
pub fn universality_compare(
    panel: &DataPanel,
    config: &ExperimentConfig,
) -> Result<UniversalityTable> {
    for family in Family::ALL {
        if !config.families.contains(&family) {
            return Err(Error::InvalidParameter(format!(
                "universality comparison needs all six families; missing `{family}`"
            )));
        }
    }
    let mut funnel_config = config.clone();
    funnel_config.metrics = vec![Metric::CorrAbsError];
    let rows = run_funnel(panel, &funnel_config)?;

    let median_of = |k: usize, family: &str| -> Option<f64> {
        rows.iter()
            .find(|r| r.k == k && r.family == family)
            .map(|r| r.median)
    };
    let mut out = Vec::new();
    for &k in &config.k_grid {
        let gauss = median_of(k, Family::Gaussian.name())
            .ok_or_else(|| Error::InvalidParameter("missing gaussian baseline row".into()))?;
        for &family in &config.families {
            let med = median_of(k, family.name()).expect("row emitted per family");
            let relative = (med - gauss).abs() / gauss;
            out.push(UniversalityRow {
                k,
                family: family.name().to_string(),
                median_abs_corr_error: med,
                relative_to_gaussian: relative,
                within_band: relative <= UNIVERSALITY_BAND,
                in_scope: family != Family::ColumnNormalizedGaussian || k >= 5,
            });
        }
    }
    Ok(UniversalityTable {
        rows: out,
        band: UNIVERSALITY_BAND,
    })
}

/// Synthetic panel generators.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticKind {
    /// Entries i.i.d. `N(0,1)`.
    IidGaussian,
    /// `x_{tb} = β_b f_t + noise·η_{tb}` with `β_b ~ U(beta_min, beta_max)`.
    OneFactor {
        beta_min: f64,
        beta_max: f64,
        noise_scale: f64,
    },
    /// Sum of `factors` independent one-factor terms plus noise.
    MultiFactor {
        factors: usize,
        beta_min: f64,
        beta_max: f64,
        noise_scale: f64,
    },
}

/// Generate and standardize a synthetic panel.
pub fn generate_synthetic_panel(
    kind: &SyntheticKind,
    d: usize,
    n: usize,
    seed: u64,
) -> Result<DataPanel> {
    if d < 2 || n < 1 {
        return Err(Error::InvalidParameter(format!(
            "panel dimensions d={d}, N={n} out of range"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = match kind {
        SyntheticKind::IidGaussian => {
            Array2::from_shape_fn((d, n), |_| StandardNormal.sample(&mut rng))
        }
        SyntheticKind::OneFactor {
            beta_min,
            beta_max,
            noise_scale,
        } => factor_panel(&mut rng, d, n, 1, *beta_min, *beta_max, *noise_scale)?,
        SyntheticKind::MultiFactor {
            factors,
            beta_min,
            beta_max,
            noise_scale,
        } => {
            if *factors < 1 {
                return Err(Error::InvalidParameter(
                    "multi_factor needs at least one factor".into(),
                ));
            }
            factor_panel(&mut rng, d, n, *factors, *beta_min, *beta_max, *noise_scale)?
        }
    };
    DataPanel::new(values)?.standardize()
}

fn factor_panel(
    rng: &mut ChaCha8Rng,
    d: usize,
    n: usize,
    factors: usize,
    beta_min: f64,
    beta_max: f64,
    noise_scale: f64,
) -> Result<Array2<f64>> {
    if !(beta_min.is_finite() && beta_max.is_finite()) || beta_min > beta_max {
        return Err(Error::InvalidParameter(format!(
            "invalid beta range [{beta_min}, {beta_max}]"
        )));
    }
    if noise_scale < 0.0 || noise_scale.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "noise scale must be non-negative, got {noise_scale}"
        )));
    }
    let betas = Array2::from_shape_fn((n, factors), |_| {
        beta_min + (beta_max - beta_min) * rng.random::<f64>()
    });
    let factor_series = Array2::from_shape_fn((d, factors), |_| StandardNormal.sample(rng));
    let mut values = factor_series.dot(&betas.t());
    if noise_scale > 0.0 {
        for v in values.iter_mut() {
            let eta: f64 = StandardNormal.sample(rng);
            *v += noise_scale * eta;
        }
    }
    Ok(values)
}

/// CSV table of funnel rows:
/// `k,family,metric,reduced,median,p25,p75,n_samples,n_skipped`.
///
/// Correlation and covariance errors are converted to percentage points (×100)
/// in this output; RMSE and volatility stay in natural units.
pub fn funnel_rows_to_csv(rows: &[FunnelRow]) -> String {
    let mut out = String::from("k,family,metric,reduced,median,p25,p75,n_samples,n_skipped\n");
    for r in rows {
        let s = r.metric.csv_scale();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.k,
            r.family,
            r.metric,
            r.reduced,
            s * r.median,
            s * r.p25,
            s * r.p75,
            r.n_samples,
            r.n_skipped
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            k_grid: vec![2, 10],
            ensemble_size: 20,
            families: vec![Family::Gaussian],
            pair_sample: PairSample::All,
            metrics: Metric::ALL.to_vec(),
            remove_market: false,
            base_seed: 11,
            pooling: Pooling::Pooled,
        }
    }

    #[test]
    fn rmse_examples() {
        let x = Array2::zeros((2, 2));
        assert_eq!(reconstruction_rmse(&x, &x).unwrap(), 0.0);
        let ones = Array2::from_elem((3, 5), 1.0);
        assert_eq!(
            reconstruction_rmse(&Array2::zeros((3, 5)), &ones).unwrap(),
            1.0
        );
        let xhat = array![[1.0, 0.0], [0.0, 1.0]];
        assert_relative_eq!(
            reconstruction_rmse(&x, &xhat).unwrap(),
            (2.0f64 / 4.0).sqrt(),
            max_relative = 1e-15
        );
        assert!(reconstruction_rmse(&x, &ones).is_err());
    }

    #[test]
    fn corr_error_examples() {
        let x = array![[1.0, 1.0], [2.0, 2.0], [4.0, 4.0]];
        assert_eq!(corr_error(&x, &x, 0, 1).unwrap(), (0.0, 0.0));
        // anti-correlated model vs perfectly correlated data: error -2
        let xhat = array![[1.0, -1.0], [2.0, -2.0], [4.0, -4.0]];
        let (err, abs) = corr_error(&x, &xhat, 0, 1).unwrap();
        assert_relative_eq!(err, -2.0, max_relative = 1e-12);
        assert_relative_eq!(abs, 2.0, max_relative = 1e-12);
        // zero-variance model column: undefined
        let degenerate = array![[1.0, 0.0], [2.0, 0.0], [4.0, 0.0]];
        assert!(corr_error(&x, &degenerate, 0, 1).is_err());
    }

    #[test]
    fn volatility_error_examples() {
        let x = array![[1.0], [-1.0], [2.0], [-2.0]];
        assert_eq!(volatility_error(&x, &x, 0).unwrap(), 0.0);
        let doubled = x.mapv(|v| 2.0 * v);
        let sigma = stats::sample_std(&x.column(0).to_vec()).unwrap();
        assert_relative_eq!(
            volatility_error(&x, &doubled, 0).unwrap(),
            sigma,
            max_relative = 1e-12
        );
    }

    #[test]
    fn percentile_is_r7() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.5), 2.5);
        assert_eq!(percentile(&xs, 0.25), 1.75);
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 1.0), 4.0);
        assert!(percentile(&[], 0.5).is_nan());
        assert_eq!(percentile(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn batch_errors_match_reference_ops() {
        let panel = generate_synthetic_panel(
            &SyntheticKind::OneFactor {
                beta_min: 0.5,
                beta_max: 1.5,
                noise_scale: 1.0,
            },
            40,
            8,
            3,
        )
        .unwrap();
        let spec = ProjectionSpec::new(Family::Gaussian, 3, 40, 5).unwrap();
        let xhat = rfm::project(&panel, &spec).unwrap();
        let x = panel.values();
        let base = summarize_columns(x);
        let base_cov = cov_matrix(&base);
        let pairs = sample_pairs(8, PairSample::All, 0);
        let flags = MetricFlags {
            rmse: true,
            vol: true,
            pairs: true,
        };
        let samples = model_samples(&base, &base_cov, x, &xhat, &pairs, &flags);
        for (i, &(b, c)) in pairs.iter().enumerate() {
            let (expect_corr, _) = corr_error(x, &xhat, b, c).unwrap();
            let (expect_cov, _) = cov_error(x, &xhat, b, c).unwrap();
            assert_relative_eq!(samples.corr_err[i], expect_corr, max_relative = 1e-9);
            assert_relative_eq!(samples.cov_err[i], expect_cov, max_relative = 1e-9);
        }
        for b in 0..8 {
            assert_relative_eq!(
                samples.vol[b],
                volatility_error(x, &xhat, b).unwrap(),
                max_relative = 1e-9
            );
        }
        assert_relative_eq!(
            samples.rmse,
            reconstruction_rmse(x, &xhat).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn sparse_pair_path_matches_reference_ops() {
        // 40 of 435 possible pairs: takes the direct inner-product route
        let panel = generate_synthetic_panel(&SyntheticKind::IidGaussian, 50, 30, 5).unwrap();
        let spec = ProjectionSpec::new(Family::Gaussian, 4, 50, 6).unwrap();
        let xhat = rfm::project(&panel, &spec).unwrap();
        let x = panel.values();
        let base = summarize_columns(x);
        let base_cov = cov_matrix(&base);
        let pairs = sample_pairs(30, PairSample::Sample(40), 1);
        assert!(pairs.len() * 8 < 30 * 30);
        let flags = MetricFlags {
            rmse: false,
            vol: false,
            pairs: true,
        };
        let samples = model_samples(&base, &base_cov, x, &xhat, &pairs, &flags);
        for (i, &(b, c)) in pairs.iter().enumerate() {
            let (expect_corr, _) = corr_error(x, &xhat, b, c).unwrap();
            let (expect_cov, _) = cov_error(x, &xhat, b, c).unwrap();
            assert_relative_eq!(samples.corr_err[i], expect_corr, max_relative = 1e-9);
            assert_relative_eq!(samples.cov_err[i], expect_cov, max_relative = 1e-9);
        }
    }

    #[test]
    fn pair_sampling_is_deterministic_and_distinct() {
        let a = sample_pairs(50, PairSample::Sample(200), 9);
        let b = sample_pairs(50, PairSample::Sample(200), 9);
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        let set: HashSet<_> = a.iter().collect();
        assert_eq!(set.len(), 200);
        assert!(a.iter().all(|&(x, y)| x < y && y < 50));
        // requesting more pairs than exist degrades to all
        assert_eq!(sample_pairs(5, PairSample::Sample(100), 1).len(), 10);
    }

    #[test]
    fn funnel_smoke_and_determinism() {
        let panel = generate_synthetic_panel(&SyntheticKind::IidGaussian, 30, 8, 17).unwrap();
        let config = small_config();
        let rows = run_funnel(&panel, &config).unwrap();
        // one row per metric per (k, family); pca rows only where k fits the
        // SVD rank (here min(d, N) = 8, so k = 10 has no pca rows)
        let rank = 8;
        let expected: usize = config
            .k_grid
            .iter()
            .map(|&k| {
                let fams = config.families.len() + usize::from(k <= rank);
                fams * config.metrics.len()
            })
            .sum();
        assert_eq!(rows.len(), expected);
        for r in &rows {
            if r.n_samples > 0 {
                assert!(r.p25 <= r.median && r.median <= r.p75, "{r:?}");
            }
        }
        let again = run_funnel(&panel, &config).unwrap();
        assert_eq!(funnel_rows_to_csv(&rows), funnel_rows_to_csv(&again));
    }

    #[test]
    fn pca_rows_vanish_at_full_rank() {
        let panel = generate_synthetic_panel(&SyntheticKind::IidGaussian, 20, 6, 2).unwrap();
        let mut config = small_config();
        config.k_grid = vec![6];
        let rows = run_funnel(&panel, &config).unwrap();
        for r in rows.iter().filter(|r| r.family == "pca") {
            assert!(
                r.median.abs() <= 1e-8 && r.p25.abs() <= 1e-8 && r.p75.abs() <= 1e-8,
                "{r:?}"
            );
        }
    }

    #[test]
    fn rfm_noise_persists_at_k_equals_d_but_shrinks_from_k10() {
        let panel = generate_synthetic_panel(
            &SyntheticKind::OneFactor {
                beta_min: 0.5,
                beta_max: 1.5,
                noise_scale: 1.0,
            },
            60,
            10,
            23,
        )
        .unwrap();
        let config = ExperimentConfig {
            k_grid: vec![10, 60],
            ensemble_size: 60,
            families: vec![Family::Gaussian],
            pair_sample: PairSample::All,
            metrics: vec![Metric::CorrAbsError],
            remove_market: false,
            base_seed: 5,
            pooling: Pooling::Pooled,
        };
        let rows = run_funnel(&panel, &config).unwrap();
        let med = |k: usize| {
            rows.iter()
                .find(|r| r.k == k && r.family == "gaussian")
                .unwrap()
                .median
        };
        assert!(med(60) > 0.0, "noise persists even at k = d");
        assert!(med(60) < med(10), "larger k is more accurate");
    }

    #[test]
    fn signed_median_corr_error_shrinks_with_k_on_iid_panels() {
        let panel = generate_synthetic_panel(&SyntheticKind::IidGaussian, 500, 12, 59).unwrap();
        let config = ExperimentConfig {
            k_grid: vec![10, 200],
            ensemble_size: 40,
            families: vec![Family::Gaussian],
            pair_sample: PairSample::All,
            metrics: vec![Metric::CorrError],
            remove_market: false,
            base_seed: 13,
            pooling: Pooling::Pooled,
        };
        let rows = run_funnel(&panel, &config).unwrap();
        let med = |k: usize| {
            rows.iter()
                .find(|r| r.k == k && r.family == "gaussian")
                .unwrap()
                .median
        };
        assert!(
            med(200).abs() < med(10).abs(),
            "median k=200 {} vs k=10 {}",
            med(200),
            med(10)
        );
    }

    #[test]
    fn volatility_error_is_small_and_shrinks_with_k() {
        let panel = generate_synthetic_panel(&SyntheticKind::IidGaussian, 300, 40, 19).unwrap();
        let config = ExperimentConfig {
            k_grid: vec![10, 80],
            ensemble_size: 30,
            families: vec![Family::Gaussian],
            pair_sample: PairSample::All,
            metrics: vec![Metric::VolatilityError],
            remove_market: false,
            base_seed: 2,
            pooling: Pooling::Pooled,
        };
        let rows = run_funnel(&panel, &config).unwrap();
        let med_abs = |k: usize| {
            let r = rows
                .iter()
                .find(|r| r.k == k && r.family == "gaussian")
                .unwrap();
            r.median.abs().max(r.p25.abs()).max(r.p75.abs())
        };
        // volatility is reproduced to within a few percent already at small
        // k, and the error keeps shrinking
        assert!(med_abs(10) < 0.2, "{}", med_abs(10));
        assert!(med_abs(80) < med_abs(10));
    }

    #[test]
    fn iqr_shrinks_along_the_grid() {
        let panel = generate_synthetic_panel(&SyntheticKind::IidGaussian, 50, 8, 29).unwrap();
        let config = ExperimentConfig {
            k_grid: vec![5, 20, 80],
            ensemble_size: 40,
            families: vec![Family::Gaussian],
            pair_sample: PairSample::All,
            metrics: vec![Metric::CorrError],
            remove_market: false,
            base_seed: 6,
            pooling: Pooling::Pooled,
        };
        let rows = run_funnel(&panel, &config).unwrap();
        let iqr: Vec<f64> = config
            .k_grid
            .iter()
            .map(|&k| {
                let r = rows
                    .iter()
                    .find(|r| r.k == k && r.family == "gaussian")
                    .unwrap();
                r.p75 - r.p25
            })
            .collect();
        // non-increasing, allowing one inversion for sampling noise
        let inversions = iqr.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(inversions <= 1, "iqr {iqr:?}");
    }

    #[test]
    fn synthetic_iid_pairwise_correlations_scale_as_inverse_sqrt_d() {
        let panel = generate_synthetic_panel(&SyntheticKind::IidGaussian, 2000, 50, 31).unwrap();
        let base = summarize_columns(panel.values());
        let cov = cov_matrix(&base);
        let mut sum = 0.0;
        let mut count = 0usize;
        for b in 0..50 {
            for c in (b + 1)..50 {
                sum += (cov[[b, c]] / (base.stds[b] * base.stds[c])).abs();
                count += 1;
            }
        }
        let mean_abs = sum / count as f64;
        // sampling theory: E|rho| = sqrt(2/(pi d)) ~ 0.018; the acceptance
        // band is a factor of two around 0.022
        assert!(
            mean_abs > 0.011 && mean_abs < 0.044,
            "mean |corr| = {mean_abs}"
        );
    }

    #[test]
    fn one_factor_zero_noise_is_rank_one() {
        let panel = generate_synthetic_panel(
            &SyntheticKind::OneFactor {
                beta_min: 0.5,
                beta_max: 1.5,
                noise_scale: 0.0,
            },
            30,
            5,
            37,
        )
        .unwrap();
        let dec = pca_decompose(&panel).unwrap();
        assert!(dec.singular_values[1] <= 1e-10 * dec.singular_values[0]);
    }

    #[test]
    fn synthetic_generation_is_seeded_and_validated() {
        let kind = SyntheticKind::MultiFactor {
            factors: 3,
            beta_min: 0.2,
            beta_max: 1.0,
            noise_scale: 0.5,
        };
        let a = generate_synthetic_panel(&kind, 25, 6, 41).unwrap();
        let b = generate_synthetic_panel(&kind, 25, 6, 41).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.preprocessing(), Preprocessing::Standardized);

        assert!(generate_synthetic_panel(
            &SyntheticKind::OneFactor {
                beta_min: 2.0,
                beta_max: 1.0,
                noise_scale: 1.0
            },
            20,
            4,
            0
        )
        .is_err());
        assert!(generate_synthetic_panel(
            &SyntheticKind::MultiFactor {
                factors: 0,
                beta_min: 0.0,
                beta_max: 1.0,
                noise_scale: 1.0
            },
            20,
            4,
            0
        )
        .is_err());
        assert!(generate_synthetic_panel(&SyntheticKind::IidGaussian, 1, 4, 0).is_err());
    }

    #[test]
    fn reduced_experiment_tags_rows_and_degrades_gracefully() {
        let panel = generate_synthetic_panel(
            &SyntheticKind::OneFactor {
                beta_min: 0.8,
                beta_max: 1.2,
                noise_scale: 0.8,
            },
            40,
            6,
            47,
        )
        .unwrap();
        let mut config = small_config();
        config.k_grid = vec![3];
        let rows = reduced_data_experiment(&panel, &config).unwrap();
        assert!(rows.iter().all(|r| r.reduced));

        // rank-1 panel: the reduced panel is numerically zero, every pair is
        // skipped, and rows report the skip tally instead of failing
        let rank1 = generate_synthetic_panel(
            &SyntheticKind::OneFactor {
                beta_min: 1.0,
                beta_max: 1.0,
                noise_scale: 0.0,
            },
            40,
            6,
            49,
        )
        .unwrap();
        let rows = reduced_data_experiment(&rank1, &config).unwrap();
        let corr_rows: Vec<_> = rows
            .iter()
            .filter(|r| r.metric == Metric::CorrError && r.family == "gaussian")
            .collect();
        assert!(!corr_rows.is_empty());
        for r in corr_rows {
            assert_eq!(r.n_samples, 0);
            assert!(r.n_skipped > 0);
            assert!(r.median.is_nan());
        }
    }

    #[test]
    fn universality_requires_all_families_and_is_deterministic() {
        let panel = generate_synthetic_panel(&SyntheticKind::IidGaussian, 40, 8, 53).unwrap();
        let config = ExperimentConfig {
            k_grid: vec![10],
            ensemble_size: 30,
            families: Family::ALL.to_vec(),
            pair_sample: PairSample::All,
            metrics: vec![Metric::CorrAbsError],
            remove_market: false,
            base_seed: 7,
            pooling: Pooling::Pooled,
        };
        let table = universality_compare(&panel, &config).unwrap();
        assert_eq!(table.rows.len(), 6);
        let again = universality_compare(&panel, &config).unwrap();
        assert_eq!(table.to_csv(), again.to_csv());

        let mut missing = config.clone();
        missing.families = vec![Family::Gaussian];
        assert!(universality_compare(&panel, &missing).is_err());
    }

    #[test]
    fn config_validation() {
        let mut config = small_config();
        config.k_grid.clear();
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.ensemble_size = 0;
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.pair_sample = PairSample::Sample(0);
        assert!(config.validate().is_err());
    }
}
