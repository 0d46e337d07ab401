//! PCA baseline via the singular value decomposition.
//!
//! `X = P_L D P_Rᵀ` is computed directly on the centered data matrix with a
//! one-sided Jacobi iteration (thin SVD, no Gram matrix) and truncated to the
//! leading `k` components, which by Eckart–Young is the best rank-`k`
//! Frobenius approximation. Every decomposition is verified (orthonormal
//! factors, faithful reconstruction) before it is returned, so a numerical
//! failure surfaces as an explicit error rather than silent garbage.

use crate::panel::{center_columns, DataPanel, Preprocessing};
use crate::{Error, Result};
use ndarray::Array2;

/// Thin SVD of a centered panel with `r = min(d, N)` components.
///
/// Deterministic across runs: components are sorted by descending singular
/// value (ties keep solver order) and each right-singular vector is oriented
/// so its largest-magnitude element is positive.
#[derive(Debug, Clone)]
pub struct PcaDecomposition {
    /// Left singular vectors, `d×r`, orthonormal columns.
    pub left_vectors: Array2<f64>,
    /// Singular values, non-negative and non-increasing.
    pub singular_values: Vec<f64>,
    /// Right singular vectors, `N×r`, orthonormal columns.
    pub right_vectors: Array2<f64>,
}

impl PcaDecomposition {
    /// Number of components, `min(d, N)`.
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Factors `F⁽ᵏ⁾ = P_L⁽ᵏ⁾ D⁽ᵏ⁾` (`d×k`) and loadings `L⁽ᵏ⁾ = P_R⁽ᵏ⁾`
    /// (`N×k`) of the leading `k` components.
    pub fn truncate(&self, k: usize) -> Result<(Array2<f64>, Array2<f64>)> {
        if k < 1 || k > self.rank() {
            return Err(Error::FactorOutOfRange {
                k,
                max: self.rank(),
            });
        }
        let d = self.left_vectors.nrows();
        let n = self.right_vectors.nrows();
        let mut factors = Array2::zeros((d, k));
        for j in 0..k {
            let s = self.singular_values[j];
            for m in 0..d {
                factors[[m, j]] = self.left_vectors[[m, j]] * s;
            }
        }
        let mut loadings = Array2::zeros((n, k));
        for j in 0..k {
            for b in 0..n {
                loadings[[b, j]] = self.right_vectors[[b, j]];
            }
        }
        Ok((factors, loadings))
    }

    /// Rank-`k` reconstruction `F⁽ᵏ⁾ (L⁽ᵏ⁾)ᵀ`.
    pub fn reconstruction(&self, k: usize) -> Result<Array2<f64>> {
        let (f, l) = self.truncate(k)?;
        Ok(f.dot(&l.t()))
    }
}

/// Column-major working storage for the Jacobi sweeps.
struct ColMajor {
    data: Vec<f64>,
    rows: usize,
}

impl ColMajor {
    fn from_array(x: &Array2<f64>) -> Self {
        let (rows, cols) = x.dim();
        let mut data = vec![0.0; rows * cols];
        for j in 0..cols {
            for i in 0..rows {
                data[j * rows + i] = x[[i, j]];
            }
        }
        Self { data, rows }
    }

    fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            data[j * n + j] = 1.0;
        }
        Self { data, rows: n }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Apply the rotation `(a_p, a_q) <- (c a_p - s a_q, s a_p + c a_q)`.
    fn rotate(&mut self, p: usize, q: usize, c: f64, s: f64) {
        debug_assert!(p < q);
        let (left, right) = self.data.split_at_mut(q * self.rows);
        let cp = &mut left[p * self.rows..(p + 1) * self.rows];
        let cq = &mut right[..self.rows];
        for (ap, aq) in cp.iter_mut().zip(cq.iter_mut()) {
            let (x, y) = (*ap, *aq);
            *ap = c * x - s * y;
            *aq = s * x + c * y;
        }
    }
}

/// One-sided Jacobi SVD: rotate column pairs of `A` until mutually orthogonal,
/// accumulating the rotations in `V`; then `σ_j = |A_j|` and `U_j = A_j/σ_j`.
///
/// Chosen over bidiagonalization because it stays exact on rank-deficient
/// input (columns of a rank-1 panel are already mutually parallel) and keeps
/// high relative accuracy on small singular values.
fn jacobi_svd(x: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>, Array2<f64>)> {
    const REL_TOL: f64 = 1e-15;
    const MAX_SWEEPS: usize = 64;
    let (d, n) = x.dim();
    let mut a = ColMajor::from_array(x);
    let mut v = ColMajor::identity(n);

    // Columns whose squared norm falls this far below the matrix norm are
    // numerically zero; rotating them further only chases rounding noise
    // (centered wide panels always produce at least one such column).
    let fro2: f64 = x.iter().map(|v| v * v).sum();
    let floor = fro2 * 1e-32;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                {
                    let cp = a.col(p);
                    let cq = a.col(q);
                    for m in 0..d {
                        alpha += cp[m] * cp[m];
                        beta += cq[m] * cq[m];
                        gamma += cp[m] * cq[m];
                    }
                }
                if alpha <= floor || beta <= floor {
                    continue;
                }
                if gamma == 0.0 || gamma.abs() <= REL_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                a.rotate(p, q, c, s);
                v.rotate(p, q, c, s);
                rotated = true;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdFailed);
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| a.col(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let r = d.min(n);

    let null_tol = fro2.sqrt() * 1e-14;
    let mut left = Array2::zeros((d, r));
    let mut right = Array2::zeros((n, r));
    let mut values = Vec::with_capacity(r);
    let mut null_slots = Vec::new();
    for (out_j, &src_j) in order.iter().take(r).enumerate() {
        let sigma = norms[src_j];
        values.push(sigma);
        for b in 0..n {
            right[[b, out_j]] = v.col(src_j)[b];
        }
        if sigma > null_tol {
            let col = a.col(src_j);
            for m in 0..d {
                left[[m, out_j]] = col[m] / sigma;
            }
        } else {
            null_slots.push(out_j);
        }
    }
    // Zero singular values leave their left vectors unconstrained; complete
    // them to an orthonormal set from standard basis vectors so the factor
    // matrix keeps orthonormal columns.
    for &slot in &null_slots {
        let mut filled = false;
        for basis in 0..d {
            let mut cand = vec![0.0; d];
            cand[basis] = 1.0;
            // Unfilled null slots are still zero columns and project to zero.
            for j in 0..r {
                if j == slot {
                    continue;
                }
                let proj: f64 = (0..d).map(|m| left[[m, j]] * cand[m]).sum();
                for m in 0..d {
                    cand[m] -= proj * left[[m, j]];
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for m in 0..d {
                    left[[m, slot]] = cand[m] / norm;
                }
                filled = true;
                break;
            }
        }
        if !filled {
            return Err(Error::SvdFailed);
        }
    }
    Ok((left, values, right))
}

fn max_abs_offdiag_gram(m: &Array2<f64>) -> f64 {
    let gram = m.t().dot(m);
    let r = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[[i, j]] - target).abs());
        }
    }
    worst
}

/// Singular value decomposition of a centered panel.
pub fn pca_decompose(panel: &DataPanel) -> Result<PcaDecomposition> {
    if panel.preprocessing() == Preprocessing::Raw {
        return Err(Error::UncenteredPanel);
    }
    let x = panel.values();
    let (left_raw, values, right_raw) = jacobi_svd(x)?;
    let r = values.len();
    let (d, n) = x.dim();

    // Deterministic orientation: largest-magnitude element of each right
    // vector is made positive; the paired left vector flips with it.
    let mut left = left_raw;
    let mut right = right_raw;
    for j in 0..r {
        let mut max_idx = 0;
        let mut max_abs = 0.0f64;
        for b in 0..n {
            let v = right[[b, j]].abs();
            if v > max_abs {
                max_abs = v;
                max_idx = b;
            }
        }
        if right[[max_idx, j]] < 0.0 {
            for b in 0..n {
                right[[b, j]] = -right[[b, j]];
            }
            for m in 0..d {
                left[[m, j]] = -left[[m, j]];
            }
        }
    }

    let dec = PcaDecomposition {
        left_vectors: left,
        singular_values: values,
        right_vectors: right,
    };

    // Consistency gate: orthonormal factors and faithful reconstruction, so
    // bad numerics can never escape as a plausible-looking decomposition.
    if max_abs_offdiag_gram(&dec.left_vectors) > 1e-10
        || max_abs_offdiag_gram(&dec.right_vectors) > 1e-10
    {
        return Err(Error::SvdFailed);
    }
    let rec = dec.reconstruction(r)?;
    let norm_x = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let err = rec
        .iter()
        .zip(x.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if err > 1e-8 * norm_x.max(f64::MIN_POSITIVE) {
        return Err(Error::SvdFailed);
    }
    Ok(dec)
}

/// Subtract the leading principal component (the market factor in an equity
/// panel) and return the re-centered remainder.
///
/// A rank-1 SVD term of a centered matrix has centered columns, so centering
/// is preserved up to rounding; this is checked, not assumed, and the rounding
/// residual is removed.
pub fn remove_market_factor(panel: &DataPanel) -> Result<DataPanel> {
    let dec = pca_decompose(panel)?;
    let market = dec.reconstruction(1)?;
    let mut reduced = panel.values() - &market;
    // Column means are compared against the input's scale: a rank-1 panel
    // reduces to pure rounding noise, which is still perfectly acceptable.
    let max_abs = panel.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // Residual columns indistinguishable from zero at working precision are
    // zeroed outright, so downstream statistics treat them as degenerate
    // rather than as data.
    let zero_tol = max_abs * 1e-12;
    for mut col in reduced.columns_mut() {
        if col.iter().all(|v| v.abs() <= zero_tol) {
            col.fill(0.0);
        }
    }
    for col in reduced.columns() {
        let mean = col.sum() / col.len() as f64;
        if mean.abs() > 1e-10 * max_abs.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidParameter(format!(
                "market-factor removal left a column mean of {mean:e}"
            )));
        }
    }
    center_columns(&mut reduced);
    Ok(DataPanel::from_parts(reduced, Preprocessing::Centered))
}
