//! PCA, canonical correlation analysis, and the Wilks's lambda significance
//! test used to compare connectome representations.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::ErrorKind;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("K={k} out of range; need 1 <= K <= min(n-1, d) = {max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("data is degenerate (no variation after centering)")]
    DegenerateData,
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need n > max(p, q); got n={n}, p={p}, q={q}")]
    TooFewSamples { n: usize, p: usize, q: usize },
    #[error("covariance matrix is singular and ridge is 0")]
    SingularCovariance,
    #[error("lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("zero-variance input to a correlation")]
    ZeroVariance,
}

impl StatsError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            StatsError::SingularCovariance | StatsError::DegenerateData => ErrorKind::Computation,
            _ => ErrorKind::Validation,
        }
    }
}

/// Fitted PCA: centered top-K principal axes of the training data.
#[derive(Debug, Clone)]
pub struct PcaModel {
    column_means: DVector<f64>,
    /// d x K, orthonormal columns.
    axes: DMatrix<f64>,
    /// K singular values of the centered data matrix, decreasing.
    singular_values: Vec<f64>,
    n: usize,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.axes.ncols()
    }

    pub fn d(&self) -> usize {
        self.axes.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column_means(&self) -> &DVector<f64> {
        &self.column_means
    }

    /// Principal axes as columns (d x K).
    pub fn axes(&self) -> &DMatrix<f64> {
        &self.axes
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }
}

/// Orient a set of columns so each column's largest-magnitude entry is
/// positive; deterministic across platforms.
fn orient_columns(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[(best, j)] < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Eigen-decompose a symmetric matrix and return (eigenvalues, eigenvectors)
/// sorted by decreasing eigenvalue, ties broken by original index.
fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    });
    (values, vectors)
}

/// Fit PCA with internal centering. Uses the d x d covariance eigenproblem
/// when d <= n and the n x n Gram trick otherwise.
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<PcaModel, StatsError> {
    let (n, d) = (x.nrows(), x.ncols());
    let max_k = d.min(n.saturating_sub(1));
    if k == 0 || k > max_k {
        return Err(StatsError::KOutOfRange { k, max: max_k });
    }
    let means = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let mut centered = x.clone();
    for j in 0..d {
        let m = means[j];
        for i in 0..n {
            centered[(i, j)] -= m;
        }
    }
    let scale = centered.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Err(StatsError::DegenerateData);
    }

    let (mut axes, sigma) = if d <= n {
        let cov = centered.transpose() * &centered;
        let (values, vectors) = sorted_symmetric_eigen(cov);
        let axes = vectors.columns(0, k).into_owned();
        let sigma: Vec<f64> = values[..k].iter().map(|&v| v.max(0.0).sqrt()).collect();
        (axes, sigma)
    } else {
        let gram = &centered * centered.transpose();
        let (values, vectors) = sorted_symmetric_eigen(gram);
        let mut axes = DMatrix::zeros(d, k);
        let mut sigma = Vec::with_capacity(k);
        for j in 0..k {
            let lambda = values[j];
            if lambda <= 0.0 || lambda <= f64::EPSILON * values[0].max(0.0) {
                return Err(StatsError::DegenerateData);
            }
            let s = lambda.sqrt();
            let v = centered.transpose() * vectors.column(j) / s;
            axes.set_column(j, &v);
            sigma.push(s);
        }
        (axes, sigma)
    };
    orient_columns(&mut axes);
    Ok(PcaModel {
        column_means: means,
        axes,
        singular_values: sigma,
        n,
    })
}

/// Project data onto the fitted axes: `scores = (X - mean) V`.
pub fn pca_transform(model: &PcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>, StatsError> {
    if x.ncols() != model.d() {
        return Err(StatsError::DimensionMismatch {
            expected: model.d(),
            got: x.ncols(),
        });
    }
    let mut centered = x.clone();
    for j in 0..x.ncols() {
        let m = model.column_means[j];
        for i in 0..x.nrows() {
            centered[(i, j)] -= m;
        }
    }
    Ok(centered * &model.axes)
}

/// Fitted CCA: paired loadings and decreasing canonical correlations.
#[derive(Debug, Clone)]
pub struct CcaModel {
    /// p x m feature loadings, one canonical pair per column.
    x_loadings: DMatrix<f64>,
    /// q x m outcome loadings.
    y_loadings: DMatrix<f64>,
    /// m canonical correlations in [0,1], decreasing.
    correlations: Vec<f64>,
}

impl CcaModel {
    pub fn m(&self) -> usize {
        self.correlations.len()
    }

    pub fn x_loadings(&self) -> &DMatrix<f64> {
        &self.x_loadings
    }

    pub fn y_loadings(&self) -> &DMatrix<f64> {
        &self.y_loadings
    }

    pub fn correlations(&self) -> &[f64] {
        &self.correlations
    }
}

/// Inverse square root of a symmetric positive semi-definite matrix via
/// eigendecomposition, with eigenvalues clamped to at least `floor`.
fn inv_sqrt_sym(m: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let (values, vectors) = sorted_symmetric_eigen(m);
    let inv: Vec<f64> = values.iter().map(|&l| 1.0 / l.max(floor).sqrt()).collect();
    let mut scaled = vectors.clone();
    for j in 0..scaled.ncols() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= inv[j];
        }
    }
    scaled * vectors.transpose()
}

const EIGENVALUE_FLOOR: f64 = 1e-10;

/// Default ridge added to both covariance blocks on standardized data.
pub const DEFAULT_CCA_RIDGE: f64 = 1e-8;

/// Fit CCA by whitening the cross-covariance: the singular values of
/// `inv_sqrt(Sxx) Sxy inv_sqrt(Syy)` are the canonical correlations and the
/// loadings are the back-transformed singular vectors. Each pair is oriented
/// so the largest-magnitude outcome loading is positive.
pub fn cca_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<CcaModel, StatsError> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(StatsError::LengthMismatch { a: n, b: y.nrows() });
    }
    let (p, q) = (x.ncols(), y.ncols());
    if n <= p.max(q) {
        return Err(StatsError::TooFewSamples { n, p, q });
    }
    let center = |m: &DMatrix<f64>| {
        let mut c = m.clone();
        for j in 0..c.ncols() {
            let mean = c.column(j).sum() / n as f64;
            for i in 0..n {
                c[(i, j)] -= mean;
            }
        }
        c
    };
    let xc = center(x);
    let yc = center(y);
    let denom = (n - 1) as f64;
    let mut sxx = xc.transpose() * &xc / denom;
    let mut syy = yc.transpose() * &yc / denom;
    let sxy = xc.transpose() * &yc / denom;
    if ridge == 0.0 {
        for s in [&sxx, &syy] {
            let (values, _) = sorted_symmetric_eigen(s.clone());
            let max = values.first().copied().unwrap_or(0.0);
            if values.last().copied().unwrap_or(0.0) <= 1e-10 * max.max(1.0) {
                return Err(StatsError::SingularCovariance);
            }
        }
    } else {
        for j in 0..p {
            sxx[(j, j)] += ridge;
        }
        for j in 0..q {
            syy[(j, j)] += ridge;
        }
    }
    let wx = inv_sqrt_sym(sxx, EIGENVALUE_FLOOR);
    let wy = inv_sqrt_sym(syy, EIGENVALUE_FLOOR);
    let whitened = &wx * sxy * &wy;

    let svd = whitened.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let m = p.min(q).min(svd.singular_values.len());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut x_loadings = DMatrix::zeros(p, m);
    let mut y_loadings = DMatrix::zeros(q, m);
    let mut correlations = Vec::with_capacity(m);
    for (col, &idx) in order.iter().enumerate() {
        correlations.push(svd.singular_values[idx].clamp(0.0, 1.0));
        let a = &wx * u.column(idx);
        let b = &wy * vt.row(idx).transpose();
        x_loadings.set_column(col, &a);
        y_loadings.set_column(col, &b);
    }
    // Orient each pair jointly; flipping both sides preserves the correlation.
    for j in 0..m {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..q {
            let a = y_loadings[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if y_loadings[(best, j)] < 0.0 {
            for i in 0..q {
                y_loadings[(i, j)] = -y_loadings[(i, j)];
            }
            for i in 0..p {
                x_loadings[(i, j)] = -x_loadings[(i, j)];
            }
        }
    }
    Ok(CcaModel {
        x_loadings,
        y_loadings,
        correlations,
    })
}

/// One row of a Wilks's lambda table.
#[derive(Debug, Clone, PartialEq)]
pub struct WilksRow {
    /// 1-based index of the first canonical pair included in the product.
    pub k: usize,
    pub lambda: f64,
    /// Bartlett's chi-square statistic.
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// Set when a canonical correlation of 1 makes the statistic infinite.
    pub degenerate: bool,
}

/// Wilks's lambda test from raw canonical correlations:
/// `lambda_k = prod_{i>=k} (1 - rho_i^2)`, with Bartlett's approximation
/// `-(n - 1 - (p+q+1)/2) ln(lambda_k)` referred to a chi-square with
/// `(p-k+1)(q-k+1)` degrees of freedom.
pub fn wilks_from_correlations(rho: &[f64], n: usize, p: usize, q: usize) -> Vec<WilksRow> {
    let multiplier = n as f64 - 1.0 - (p + q + 1) as f64 / 2.0;
    let m = rho.len();
    let mut rows = Vec::with_capacity(m);
    for k in 1..=m {
        let lambda: f64 = rho[k - 1..].iter().map(|r| 1.0 - r * r).product();
        let df = (p - k + 1) * (q - k + 1);
        if lambda <= 0.0 {
            rows.push(WilksRow {
                k,
                lambda,
                statistic: f64::INFINITY,
                degrees_of_freedom: df,
                p_value: 0.0,
                degenerate: true,
            });
            continue;
        }
        let statistic = -multiplier * lambda.ln();
        let chi = ChiSquared::new(df as f64).expect("positive dof");
        let p_value = chi.sf(statistic).clamp(0.0, 1.0);
        rows.push(WilksRow {
            k,
            lambda,
            statistic,
            degrees_of_freedom: df,
            p_value,
            degenerate: false,
        });
    }
    rows
}

/// Wilks's lambda table for a fitted CCA.
pub fn wilks_test(model: &CcaModel, n: usize, p: usize, q: usize) -> Vec<WilksRow> {
    wilks_from_correlations(model.correlations(), n, p, q)
}

/// Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(num / (va.sqrt() * vb.sqrt()))
}

/// Pearson correlation of every outcome column with a variate. Columns must
/// be fully observed; impute beforehand.
pub fn trait_correlations(
    variate: &DVector<f64>,
    y: &DMatrix<f64>,
) -> Result<Vec<f64>, StatsError> {
    if y.nrows() != variate.len() {
        return Err(StatsError::LengthMismatch {
            a: variate.len(),
            b: y.nrows(),
        });
    }
    let v: Vec<f64> = variate.iter().copied().collect();
    (0..y.ncols())
        .map(|j| {
            let col: Vec<f64> = y.column(j).iter().copied().collect();
            pearson(&v, &col)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
    }

    fn standardize_cols(x: &mut DMatrix<f64>) {
        let n = x.nrows();
        for j in 0..x.ncols() {
            let mean = x.column(j).sum() / n as f64;
            let var = x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (n as f64 - 1.0);
            let sd = var.sqrt();
            for i in 0..n {
                x[(i, j)] = (x[(i, j)] - mean) / sd;
            }
        }
    }

    #[test]
    fn rank_one_data_reconstructs_exactly_with_k1() {
        let dir = [0.5, -1.0, 2.0];
        let n = 40;
        let x = DMatrix::from_fn(n, 3, |i, j| {
            let t: f64 = (i as f64) / 7.0 - 2.0;
            t * dir[j]
        });
        let model = pca_fit(&x, 1).unwrap();
        let scores = pca_transform(&model, &x).unwrap();
        let recon = scores * model.axes().transpose();
        for i in 0..n {
            for j in 0..3 {
                let mean = model.column_means()[j];
                assert_abs_diff_eq!(recon[(i, j)] + mean, x[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn full_rank_pca_reconstructs_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = randn(&mut rng, 30, 6);
        let model = pca_fit(&x, 6).unwrap();
        let scores = pca_transform(&model, &x).unwrap();
        let recon = scores * model.axes().transpose();
        for i in 0..30 {
            for j in 0..6 {
                assert_abs_diff_eq!(
                    recon[(i, j)] + model.column_means()[j],
                    x[(i, j)],
                    epsilon = 1e-8
                );
            }
        }
    }

    #[test]
    fn axes_are_orthonormal_both_routes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Tall case (d <= n) and wide case (d > n, Gram trick).
        for (n, d, k) in [(50, 8, 8), (20, 60, 10)] {
            let x = randn(&mut rng, n, d);
            let model = pca_fit(&x, k).unwrap();
            let gram = model.axes().transpose() * model.axes();
            for i in 0..k {
                for j in 0..k {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(gram[(i, j)], expected, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn score_variance_matches_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200;
        let x = randn(&mut rng, n, 5);
        let model = pca_fit(&x, 5).unwrap();
        let scores = pca_transform(&model, &x).unwrap();
        for j in 0..5 {
            let col = scores.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let expected = model.singular_values()[j].powi(2) / (n as f64 - 1.0);
            assert_abs_diff_eq!(var, expected, epsilon = 1e-8 * expected.max(1.0));
        }
    }

    #[test]
    fn scores_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = randn(&mut rng, 100, 4);
        let model = pca_fit(&x, 4).unwrap();
        let scores = pca_transform(&model, &x).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let dot: f64 = scores.column(i).dot(&scores.column(j));
                assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn zero_row_transforms_to_negated_mean_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = randn(&mut rng, 25, 3);
        let model = pca_fit(&x, 2).unwrap();
        let zero = DMatrix::zeros(1, 3);
        let score = pca_transform(&model, &zero).unwrap();
        let expected = -model.column_means().transpose() * model.axes();
        for j in 0..2 {
            assert_abs_diff_eq!(score[(0, j)], expected[(0, j)], epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruction_error_nonincreasing_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = randn(&mut rng, 40, 8);
        let mut previous = f64::INFINITY;
        for k in 1..=8 {
            let model = pca_fit(&x, k).unwrap();
            let scores = pca_transform(&model, &x).unwrap();
            let recon = scores * model.axes().transpose();
            let mut err = 0.0;
            for i in 0..40 {
                for j in 0..8 {
                    let centered = x[(i, j)] - model.column_means()[j];
                    err += (recon[(i, j)] - centered).powi(2);
                }
            }
            assert!(err <= previous + 1e-9);
            previous = err;
        }
    }

    #[test]
    fn pca_rejects_bad_k_and_degenerate_data() {
        let x = DMatrix::zeros(10, 3);
        assert!(matches!(pca_fit(&x, 2), Err(StatsError::DegenerateData)));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = randn(&mut rng, 5, 10);
        assert!(matches!(pca_fit(&x, 5), Err(StatsError::KOutOfRange { .. })));
    }

    #[test]
    fn cca_of_identical_blocks_is_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut x = randn(&mut rng, 120, 4);
        standardize_cols(&mut x);
        let model = cca_fit(&x, &x, 0.0).unwrap();
        for &r in model.correlations() {
            assert_abs_diff_eq!(r, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn one_dimensional_cca_is_pearson() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 300;
        let x = randn(&mut rng, n, 1);
        let y = DMatrix::from_fn(n, 1, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            0.6 * x[(i, 0)] + 0.8 * e
        });
        let model = cca_fit(&x, &y, 0.0).unwrap();
        let xcol: Vec<f64> = x.column(0).iter().copied().collect();
        let ycol: Vec<f64> = y.column(0).iter().copied().collect();
        let r = pearson(&xcol, &ycol).unwrap().abs();
        assert_abs_diff_eq!(model.correlations()[0], r, epsilon = 1e-10);
    }

    #[test]
    fn independent_noise_has_small_leading_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 2000;
        let x = randn(&mut rng, n, 5);
        let y = randn(&mut rng, n, 5);
        let model = cca_fit(&x, &y, 0.0).unwrap();
        assert!(model.correlations()[0] < 0.3);
    }

    #[test]
    fn canonical_variates_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 400;
        let mut x = randn(&mut rng, n, 6);
        let mut y = randn(&mut rng, n, 4);
        for i in 0..n {
            y[(i, 0)] += 0.7 * x[(i, 0)];
            y[(i, 1)] -= 0.4 * x[(i, 1)];
        }
        standardize_cols(&mut x);
        standardize_cols(&mut y);
        let model = cca_fit(&x, &y, 0.0).unwrap();
        let r = &x * model.x_loadings();
        let s = &y * model.y_loadings();
        for a in 0..model.m() {
            for b in (a + 1)..model.m() {
                let dot = r.column(a).dot(&r.column(b));
                assert!(dot.abs() / (r.column(a).norm() * r.column(b).norm()) < 1e-8);
                let dot = s.column(a).dot(&s.column(b));
                assert!(dot.abs() / (s.column(a).norm() * s.column(b).norm()) < 1e-8);
            }
        }
    }

    #[test]
    fn correlations_invariant_under_invertible_reparameterization() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 500;
        let mut x = randn(&mut rng, n, 4);
        let mut y = randn(&mut rng, n, 3);
        for i in 0..n {
            y[(i, 2)] += 0.5 * x[(i, 1)];
        }
        standardize_cols(&mut x);
        standardize_cols(&mut y);
        let base = cca_fit(&x, &y, 0.0).unwrap();
        let t = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.3, 0.0, -0.2, //
                0.0, 1.5, 0.1, 0.0, //
                0.2, 0.0, 0.9, 0.4, //
                0.0, 0.0, 0.0, 1.2,
            ],
        );
        let xt = &x * &t;
        let transformed = cca_fit(&xt, &y, 0.0).unwrap();
        for (a, b) in base.correlations().iter().zip(transformed.correlations()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn singular_covariance_errors_without_ridge_and_fits_with_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 100;
        let base = randn(&mut rng, n, 2);
        // Third column is an exact copy: singular covariance.
        let x = DMatrix::from_fn(n, 3, |i, j| if j < 2 { base[(i, j)] } else { base[(i, 0)] });
        let y = randn(&mut rng, n, 2);
        assert!(matches!(
            cca_fit(&x, &y, 0.0),
            Err(StatsError::SingularCovariance)
        ));
        assert!(cca_fit(&x, &y, DEFAULT_CCA_RIDGE).is_ok());
    }

    #[test]
    fn wilks_all_zero_correlations() {
        let rows = wilks_from_correlations(&[0.0, 0.0, 0.0], 100, 3, 3);
        assert_abs_diff_eq!(rows[0].lambda, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rows[0].statistic, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rows[0].p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wilks_planted_strong_pair_is_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 1000;
        let (p, q) = (5, 5);
        let mut x = randn(&mut rng, n, p);
        let mut y = randn(&mut rng, n, q);
        for i in 0..n {
            let latent: f64 = StandardNormal.sample(&mut rng);
            x[(i, 0)] = latent + 0.5 * x[(i, 0)];
            y[(i, 0)] = latent + 0.5 * y[(i, 0)];
        }
        standardize_cols(&mut x);
        standardize_cols(&mut y);
        let model = cca_fit(&x, &y, 0.0).unwrap();
        assert!(model.correlations()[0] > 0.6);
        let rows = wilks_test(&model, n, p, q);
        assert!(rows[0].p_value < 0.05);
    }

    #[test]
    fn wilks_monotone_in_correlations() {
        let weak = wilks_from_correlations(&[0.3, 0.1], 200, 2, 2);
        let strong = wilks_from_correlations(&[0.6, 0.1], 200, 2, 2);
        assert!(strong[0].lambda < weak[0].lambda);
        assert!(strong[0].p_value < weak[0].p_value);
        for rows in [&weak, &strong] {
            assert!(rows[0].lambda > 0.0 && rows[0].lambda <= 1.0);
            assert!((0.0..=1.0).contains(&rows[0].p_value));
        }
    }

    #[test]
    fn wilks_degenerate_correlation_flags() {
        let rows = wilks_from_correlations(&[1.0, 0.2], 50, 2, 2);
        assert!(rows[0].degenerate);
        assert_eq!(rows[0].p_value, 0.0);
        assert!(rows[0].statistic.is_infinite());
    }

    #[test]
    fn trait_correlation_extremes() {
        let n = 64;
        let variate = DVector::from_fn(n, |i, _| (i as f64).sin() + 0.01 * i as f64);
        let y = DMatrix::from_fn(n, 2, |i, j| if j == 0 { variate[i] } else { -variate[i] });
        let r = trait_correlations(&variate, &y).unwrap();
        assert_abs_diff_eq!(r[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn trait_correlation_rejects_constant_trait() {
        let variate = DVector::from_fn(10, |i, _| i as f64);
        let y = DMatrix::from_element(10, 1, 3.0);
        assert!(matches!(
            trait_correlations(&variate, &y),
            Err(StatsError::ZeroVariance)
        ));
    }

    #[test]
    fn planted_desirability_blocks_separate_in_sign() {
        // Two trait blocks load with opposite signs on a shared latent; their
        // correlations with the first canonical variate separate by sign.
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let n = 800;
        let mut x = randn(&mut rng, n, 3);
        let mut y = DMatrix::zeros(n, 6);
        for i in 0..n {
            let latent: f64 = x[(i, 0)];
            for j in 0..3 {
                let e: f64 = StandardNormal.sample(&mut rng);
                y[(i, j)] = latent + 0.8 * e;
            }
            for j in 3..6 {
                let e: f64 = StandardNormal.sample(&mut rng);
                y[(i, j)] = -latent + 0.8 * e;
            }
        }
        standardize_cols(&mut x);
        standardize_cols(&mut y);
        let model = cca_fit(&x, &y, 0.0).unwrap();
        let variates = &x * model.x_loadings();
        let first = DVector::from_fn(n, |i, _| variates[(i, 0)]);
        let corr = trait_correlations(&first, &y).unwrap();
        let desirable: f64 = corr[..3].iter().sum::<f64>() / 3.0;
        let undesirable: f64 = corr[3..].iter().sum::<f64>() / 3.0;
        assert!(
            desirable * undesirable < 0.0,
            "blocks should separate: {corr:?}"
        );
        assert!((desirable - undesirable).abs() > 1.0);
    }

    #[test]
    fn cca_too_few_samples_is_rejected() {
        let x = DMatrix::zeros(5, 6);
        let y = DMatrix::zeros(5, 2);
        assert!(matches!(
            cca_fit(&x, &y, 0.0),
            Err(StatsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn rng_range_smoke() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mean: f64 =
            (0..10_000).map(|_| rng.random_range(0.0..1.0)).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02);
    }
}
