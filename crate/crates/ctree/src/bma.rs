//! Bayesian model averaging over all-subsets linear regression with a Zellner
//! g-prior and a uniform model prior, plus the coefficient back-projection
//! from principal-component space to original features.
//!
//! The model space is enumerated in Gray-code order so that consecutive
//! models differ by one feature; the triangular factor of the active Gram
//! block is updated by O(k^2) column additions and Givens-rotation removals,
//! turning the 2^p sweep from O(2^p p^3) into O(2^p p^2). The space is cut
//! into fixed-size contiguous segments processed in parallel and merged in
//! segment order, so results are bit-identical for any thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::derive_seed;
use crate::stats::PcaModel;
use crate::ErrorKind;

#[derive(Debug, Error)]
pub enum BmaError {
    #[error("p={0} features; full enumeration is capped at p <= 25")]
    TooManyFeatures(usize),
    #[error("need at least 2 rows")]
    TooFewRows,
    #[error("outcome has no variation")]
    DegenerateOutcome,
    #[error("g must be positive, got {0}")]
    BadG(f64),
    #[error("rows differ: X has {x_rows}, y has {y_rows}")]
    RowMismatch { x_rows: usize, y_rows: usize },
    #[error("theta has {got} entries but the PCA model keeps {expected} components")]
    ThetaLength { got: usize, expected: usize },
    #[error("asked for {m} connections but only {d} exist")]
    TooManyConnections { m: usize, d: usize },
    #[error("labels ({labels}) and coefficients ({coefs}) differ in length")]
    LabelMismatch { labels: usize, coefs: usize },
}

impl BmaError {
    pub fn kind(&self) -> ErrorKind {
        ErrorKind::Validation
    }
}

/// Fixed seed for the interval draws; posterior intervals are reproducible
/// across runs and platforms by construction.
const INTERVAL_SEED: u64 = 0x62_6d_61_2d_63_69;
const INTERVAL_DRAWS: usize = 10_000;
const SEGMENT_BITS: u32 = 14;

/// Result of a full-enumeration model average.
#[derive(Debug, Clone)]
pub struct BmaResult {
    /// Posterior probability that each feature appears in the model.
    pub inclusion_prob: Vec<f64>,
    /// Model-averaged posterior-mean coefficients (g/(1+g) shrinkage).
    pub avg_coef: Vec<f64>,
    /// 2.5% bound of the mixture posterior per coefficient.
    pub interval_low: Vec<f64>,
    /// 97.5% bound of the mixture posterior per coefficient.
    pub interval_high: Vec<f64>,
    /// Number of models visited (2^p).
    pub models_enumerated: u64,
    /// Models skipped as rank-deficient (weight zero).
    pub models_skipped: u64,
    /// Log of the posterior normalizer, up to the model-independent constant.
    pub log_normalizer: f64,
}

/// Incremental all-subsets engine state: upper-triangular factor `R` of the
/// active Gram block (insertion order) and `z = R^-T X_a^T y`, so that
/// `RSS = y^T y - z^T z`. A linearly dependent added column is carried as a
/// phantom orthonormal dummy (zero projection, unit diagonal, zero z) so the
/// factor stays exact for the independent columns; every model containing a
/// phantom is skipped with weight zero.
struct SubsetState<'a> {
    gram: &'a DMatrix<f64>,
    xty: &'a DVector<f64>,
    active: Vec<usize>,
    degenerate: Vec<bool>,
    r: DMatrix<f64>,
    z: Vec<f64>,
}

impl<'a> SubsetState<'a> {
    fn new(gram: &'a DMatrix<f64>, xty: &'a DVector<f64>) -> Self {
        let p = gram.nrows();
        Self {
            gram,
            xty,
            active: Vec::with_capacity(p),
            degenerate: Vec::with_capacity(p),
            r: DMatrix::zeros(p, p),
            z: Vec::with_capacity(p),
        }
    }

    fn k(&self) -> usize {
        self.active.len()
    }

    fn has_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    fn add(&mut self, feature: usize) {
        let k = self.k();
        // Solve R^T w = rhs by forward substitution; phantom rows contribute
        // zero cross products.
        let mut w = vec![0.0f64; k];
        for m in 0..k {
            let rhs = if self.degenerate[m] {
                0.0
            } else {
                self.gram[(self.active[m], feature)]
            };
            let mut acc = rhs;
            for t in 0..m {
                acc -= self.r[(t, m)] * w[t];
            }
            w[m] = acc / self.r[(m, m)];
        }
        let gcc = self.gram[(feature, feature)];
        let diag2 = gcc - w.iter().map(|v| v * v).sum::<f64>();
        let tolerance = 1e-10 * gcc.max(f64::MIN_POSITIVE);
        if diag2 <= tolerance {
            // Dependent column: phantom dummy.
            for t in 0..k {
                self.r[(t, k)] = 0.0;
            }
            self.r[(k, k)] = 1.0;
            self.z.push(0.0);
            self.active.push(feature);
            self.degenerate.push(true);
            return;
        }
        let diag = diag2.sqrt();
        for (t, &value) in w.iter().enumerate() {
            self.r[(t, k)] = value;
        }
        self.r[(k, k)] = diag;
        let mut zc = self.xty[feature];
        for t in 0..k {
            zc -= w[t] * self.z[t];
        }
        self.z.push(zc / diag);
        self.active.push(feature);
        self.degenerate.push(false);
    }

    fn remove(&mut self, feature: usize) {
        let k = self.k();
        let i = self
            .active
            .iter()
            .position(|&f| f == feature)
            .expect("feature is active");
        // Shift columns left; column `col` then has one subdiagonal entry.
        for col in i..k - 1 {
            for row in 0..=(col + 1) {
                self.r[(row, col)] = self.r[(row, col + 1)];
            }
        }
        // Givens rotations restore the triangle; the same rotations apply to z.
        for j in i..k - 1 {
            let a = self.r[(j, j)];
            let b = self.r[(j + 1, j)];
            if b != 0.0 {
                let h = a.hypot(b);
                let (c, s) = (a / h, b / h);
                for col in j..k - 1 {
                    let x = self.r[(j, col)];
                    let y = self.r[(j + 1, col)];
                    self.r[(j, col)] = c * x + s * y;
                    self.r[(j + 1, col)] = -s * x + c * y;
                }
                let x = self.z[j];
                let y = self.z[j + 1];
                self.z[j] = c * x + s * y;
                self.z[j + 1] = -s * x + c * y;
            }
            if self.r[(j, j)] < 0.0 {
                for col in j..k - 1 {
                    self.r[(j, col)] = -self.r[(j, col)];
                }
                self.z[j] = -self.z[j];
            }
        }
        self.z.pop();
        self.active.remove(i);
        self.degenerate.remove(i);
    }

    fn explained_sum_of_squares(&self) -> f64 {
        self.z.iter().map(|v| v * v).sum()
    }

    /// OLS coefficients of the active model by back substitution, written
    /// into feature slots of `out` (callers zero it first).
    fn beta_into(&self, out: &mut [f64]) {
        let k = self.k();
        let mut beta = vec![0.0f64; k];
        for m in (0..k).rev() {
            let mut acc = self.z[m];
            for t in (m + 1)..k {
                acc -= self.r[(m, t)] * beta[t];
            }
            beta[m] = acc / self.r[(m, m)];
        }
        for (m, &feature) in self.active.iter().enumerate() {
            out[feature] = beta[m];
        }
    }

    fn rebuild(&mut self, mask: u64, p: usize) {
        self.active.clear();
        self.degenerate.clear();
        self.z.clear();
        for feature in 0..p {
            if mask & (1 << feature) != 0 {
                self.add(feature);
            }
        }
    }
}

fn gray_code(index: u64) -> u64 {
    index ^ (index >> 1)
}

/// Zellner g-prior log marginal likelihood, up to a model-independent
/// constant: `(n-1-k)/2 ln(1+g) - (n-1)/2 ln(1 + g (1 - R^2))`.
fn log_marginal(n: usize, k: usize, g: f64, r2: f64) -> f64 {
    let nm1 = (n - 1) as f64;
    0.5 * (nm1 - k as f64) * (1.0 + g).ln() - 0.5 * nm1 * (1.0 + g * (1.0 - r2)).ln()
}

struct SegmentSums {
    max_log: f64,
    sum: f64,
    inclusion: Vec<f64>,
    coef: Vec<f64>,
    skipped: u64,
}

struct Problem {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    n: usize,
    p: usize,
    g: f64,
}

fn center_problem(x: &DMatrix<f64>, y: &DVector<f64>, g: f64) -> Result<Problem, BmaError> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(BmaError::RowMismatch {
            x_rows: n,
            y_rows: y.len(),
        });
    }
    if p > 25 {
        return Err(BmaError::TooManyFeatures(p));
    }
    if n < 2 {
        return Err(BmaError::TooFewRows);
    }
    if g.is_nan() || g <= 0.0 {
        return Err(BmaError::BadG(g));
    }
    let mut xc = x.clone();
    for j in 0..p {
        let mean = xc.column(j).sum() / n as f64;
        for i in 0..n {
            xc[(i, j)] -= mean;
        }
    }
    let y_mean = y.sum() / n as f64;
    let yc = y.map(|v| v - y_mean);
    let yty = yc.dot(&yc);
    if yty <= 0.0 {
        return Err(BmaError::DegenerateOutcome);
    }
    Ok(Problem {
        gram: xc.transpose() * &xc,
        xty: xc.transpose() * yc,
        yty,
        n,
        p,
        g,
    })
}

/// Walk one contiguous Gray-code segment, invoking the visitor with
/// `(mask, k, skipped, log_marginal, state)` for every model.
fn walk_segment<F>(problem: &Problem, start: u64, end: u64, visitor: &mut F)
where
    F: FnMut(u64, usize, bool, f64, &SubsetState),
{
    let mut state = SubsetState::new(&problem.gram, &problem.xty);
    let mut mask = gray_code(start);
    state.rebuild(mask, problem.p);
    for index in start..end {
        if index != start {
            let flip = gray_code(index) ^ mask;
            let feature = flip.trailing_zeros() as usize;
            if mask & flip != 0 {
                state.remove(feature);
            } else {
                state.add(feature);
            }
            mask = gray_code(index);
        }
        let skipped = state.has_degenerate();
        let r2 = (state.explained_sum_of_squares() / problem.yty).clamp(0.0, 1.0);
        let logm = log_marginal(problem.n, state.k(), problem.g, r2);
        visitor(mask, state.k(), skipped, logm, &state);
    }
}

fn segment_bounds(p: usize) -> Vec<(u64, u64)> {
    let total: u64 = 1 << p;
    let seg_size: u64 = 1 << SEGMENT_BITS.min(p as u32);
    (0..total.div_ceil(seg_size))
        .map(|s| (s * seg_size, ((s + 1) * seg_size).min(total)))
        .collect()
}

/// Full-enumeration Bayesian model averaging under the Zellner g-prior with a
/// uniform prior over the 2^p models. X and y are centered internally; the
/// unit-information choice is `g = n`.
pub fn bma_fit(x: &DMatrix<f64>, y: &DVector<f64>, g: f64) -> Result<BmaResult, BmaError> {
    let problem = center_problem(x, y, g)?;
    let p = problem.p;
    let shrink = g / (1.0 + g);
    let bounds = segment_bounds(p);

    let segments: Vec<SegmentSums> = bounds
        .par_iter()
        .map(|&(start, end)| {
            let mut sums = SegmentSums {
                max_log: f64::NEG_INFINITY,
                sum: 0.0,
                inclusion: vec![0.0; p],
                coef: vec![0.0; p],
                skipped: 0,
            };
            let mut beta = vec![0.0f64; p];
            walk_segment(&problem, start, end, &mut |mask, _k, skipped, logm, state| {
                if skipped {
                    sums.skipped += 1;
                    return;
                }
                if logm > sums.max_log {
                    // Rescale the running sums to the new reference.
                    let scale = (sums.max_log - logm).exp();
                    sums.sum *= scale;
                    for v in sums.inclusion.iter_mut().chain(sums.coef.iter_mut()) {
                        *v *= scale;
                    }
                    sums.max_log = logm;
                }
                let weight = (logm - sums.max_log).exp();
                sums.sum += weight;
                if mask != 0 {
                    beta.iter_mut().for_each(|b| *b = 0.0);
                    state.beta_into(&mut beta);
                    for feature in 0..p {
                        if mask & (1 << feature) != 0 {
                            sums.inclusion[feature] += weight;
                            sums.coef[feature] += weight * shrink * beta[feature];
                        }
                    }
                }
            });
            sums
        })
        .collect();

    // Deterministic merge in segment order.
    let global_max = segments
        .iter()
        .map(|s| s.max_log)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut normalizer = 0.0f64;
    let mut inclusion = vec![0.0f64; p];
    let mut coef = vec![0.0f64; p];
    let mut skipped = 0u64;
    for segment in &segments {
        let scale = (segment.max_log - global_max).exp();
        normalizer += scale * segment.sum;
        for j in 0..p {
            inclusion[j] += scale * segment.inclusion[j];
            coef[j] += scale * segment.coef[j];
        }
        skipped += segment.skipped;
    }
    for j in 0..p {
        inclusion[j] /= normalizer;
        coef[j] /= normalizer;
    }
    let log_normalizer = global_max + normalizer.ln();

    // Segment masses for the sampling pass.
    let masses: Vec<f64> = segments
        .iter()
        .map(|s| (s.max_log - global_max).exp() * s.sum / normalizer)
        .collect();
    let (interval_low, interval_high) =
        credible_intervals(&problem, shrink, &bounds, &masses, log_normalizer, global_max)?;

    Ok(BmaResult {
        inclusion_prob: inclusion,
        avg_coef: coef,
        interval_low,
        interval_high,
        models_enumerated: 1u64 << p,
        models_skipped: skipped,
        log_normalizer,
    })
}

/// Draw from the mixture of conditional posteriors by walking the enumeration
/// a second time against sorted uniform thresholds, then sampling
/// `beta | model` from its normal-inverse-gamma conditional.
fn credible_intervals(
    problem: &Problem,
    shrink: f64,
    bounds: &[(u64, u64)],
    segment_masses: &[f64],
    log_normalizer: f64,
    _global_max: f64,
) -> Result<(Vec<f64>, Vec<f64>), BmaError> {
    let p = problem.p;
    let mut rng = ChaCha8Rng::seed_from_u64(INTERVAL_SEED);
    let mut thresholds: Vec<f64> = (0..INTERVAL_DRAWS).map(|_| rng.random::<f64>()).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Cumulative mass offsets per segment.
    let mut offsets = Vec::with_capacity(bounds.len() + 1);
    let mut acc = 0.0f64;
    for &mass in segment_masses {
        offsets.push(acc);
        acc += mass;
    }
    offsets.push(acc);

    // Assign each sorted threshold to a model mask.
    let assignments: Vec<Vec<(usize, u64)>> = bounds
        .par_iter()
        .enumerate()
        .map(|(s, &(start, end))| {
            let lo = offsets[s];
            let hi = offsets[s + 1];
            let first = thresholds.partition_point(|&t| t < lo);
            let last = thresholds.partition_point(|&t| t < hi);
            let mut found = Vec::with_capacity(last - first);
            if first == last {
                return found;
            }
            let mut cursor = first;
            let mut cumulative = lo;
            walk_segment(problem, start, end, &mut |mask, _k, skipped, logm, _state| {
                if skipped || cursor >= last {
                    return;
                }
                cumulative += (logm - log_normalizer).exp();
                while cursor < last && thresholds[cursor] < cumulative {
                    found.push((cursor, mask));
                    cursor += 1;
                }
            });
            // Rounding at the segment edge: park leftovers on the last model
            // of the segment.
            let last_mask = gray_code(end - 1);
            while cursor < last {
                found.push((cursor, last_mask));
                cursor += 1;
            }
            found
        })
        .collect();

    let mut draw_models = vec![0u64; INTERVAL_DRAWS];
    let mut assigned = vec![false; INTERVAL_DRAWS];
    for segment in assignments {
        for (draw, mask) in segment {
            draw_models[draw] = mask;
            assigned[draw] = true;
        }
    }
    for i in 0..INTERVAL_DRAWS {
        if !assigned[i] {
            // Threshold fell beyond the accumulated mass (float rounding at
            // the upper edge); use the full model.
            draw_models[i] = (1u64 << p) - 1;
        }
    }

    // Per-model conditional pieces, cached by mask.
    struct ModelPieces {
        features: Vec<usize>,
        beta_hat: Vec<f64>,
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        ig_scale: f64,
    }
    let mut cache: std::collections::HashMap<u64, ModelPieces> = std::collections::HashMap::new();
    let nm1 = (problem.n - 1) as f64;
    let gamma = Gamma::new(nm1 / 2.0, 1.0).expect("valid shape");

    let mut draws = vec![vec![0.0f64; INTERVAL_DRAWS]; p];
    for (draw_idx, &mask) in draw_models.iter().enumerate() {
        let mut draw_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(INTERVAL_SEED, &[1, draw_idx as u64]));
        if mask == 0 {
            continue;
        }
        let pieces = cache.entry(mask).or_insert_with(|| {
            let features: Vec<usize> =
                (0..p).filter(|&j| mask & (1 << j) != 0).collect();
            let k = features.len();
            let sub_gram =
                DMatrix::from_fn(k, k, |a, b| problem.gram[(features[a], features[b])]);
            let sub_xty = DVector::from_fn(k, |a, _| problem.xty[features[a]]);
            let chol = sub_gram
                .cholesky()
                .expect("sampled models are full rank");
            let beta = chol.solve(&sub_xty);
            let r2 = (sub_xty.dot(&beta) / problem.yty).clamp(0.0, 1.0);
            let ig_scale = problem.yty * (1.0 - shrink * r2) / 2.0;
            ModelPieces {
                features,
                beta_hat: beta.iter().copied().collect(),
                chol,
                ig_scale,
            }
        });
        let k = pieces.features.len();
        let sigma2 = pieces.ig_scale / gamma.sample(&mut draw_rng);
        let xi = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut draw_rng));
        // v = L^-T xi gives covariance (X^T X)^-1.
        let v = pieces.chol.l().transpose().solve_upper_triangular(&xi).expect("triangular solve");
        let scale = (sigma2 * shrink).sqrt();
        for (a, &feature) in pieces.features.iter().enumerate() {
            draws[feature][draw_idx] = shrink * pieces.beta_hat[a] + scale * v[a];
        }
    }

    let mut low = Vec::with_capacity(p);
    let mut high = Vec::with_capacity(p);
    for feature_draws in draws.iter_mut() {
        feature_draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = |q: f64| ((INTERVAL_DRAWS - 1) as f64 * q).round() as usize;
        low.push(feature_draws[idx(0.025)]);
        high.push(feature_draws[idx(0.975)]);
    }
    Ok((low, high))
}

/// Log marginal likelihood of every model, indexed by feature bitmask; for
/// small p only. Skipped (rank-deficient) models report NEG_INFINITY.
pub fn model_log_marginals(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    g: f64,
) -> Result<Vec<f64>, BmaError> {
    let problem = center_problem(x, y, g)?;
    if problem.p > 20 {
        return Err(BmaError::TooManyFeatures(problem.p));
    }
    let total = 1u64 << problem.p;
    let mut out = vec![f64::NEG_INFINITY; total as usize];
    walk_segment(&problem, 0, total, &mut |mask, _k, skipped, logm, _state| {
        if !skipped {
            out[mask as usize] = logm;
        }
    });
    Ok(out)
}

/// A feature whose posterior inclusion probability clears the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportantFeature {
    pub index: usize,
    pub inclusion_prob: f64,
    pub avg_coef: f64,
    pub interval_low: f64,
    pub interval_high: f64,
}

/// Features with inclusion probability strictly above `threshold`
/// (the selection rule value is 0.75).
pub fn important_features(result: &BmaResult, threshold: f64) -> Vec<ImportantFeature> {
    (0..result.inclusion_prob.len())
        .filter(|&j| result.inclusion_prob[j] > threshold)
        .map(|j| ImportantFeature {
            index: j,
            inclusion_prob: result.inclusion_prob[j],
            avg_coef: result.avg_coef[j],
            interval_low: result.interval_low[j],
            interval_high: result.interval_high[j],
        })
        .collect()
}

/// Least-norm back-projection of component-space coefficients to the original
/// feature space: `beta = V_K theta`, the generalized inverse with zero
/// component orthogonal to the retained axes.
pub fn backproject(theta: &DVector<f64>, pca: &PcaModel) -> Result<DVector<f64>, BmaError> {
    if theta.len() != pca.k() {
        return Err(BmaError::ThetaLength {
            got: theta.len(),
            expected: pca.k(),
        });
    }
    Ok(pca.axes() * theta)
}

/// The `m` connections with the largest absolute coefficient, ties broken by
/// label order.
pub fn top_connections(
    beta: &[f64],
    labels: &[String],
    m: usize,
) -> Result<Vec<(String, f64)>, BmaError> {
    if labels.len() != beta.len() {
        return Err(BmaError::LabelMismatch {
            labels: labels.len(),
            coefs: beta.len(),
        });
    }
    if m > beta.len() {
        return Err(BmaError::TooManyConnections { m, d: beta.len() });
    }
    let mut order: Vec<usize> = (0..beta.len()).collect();
    order.sort_by(|&a, &b| {
        beta[b]
            .abs()
            .partial_cmp(&beta[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(labels[a].cmp(&labels[b]))
    });
    Ok(order[..m]
        .iter()
        .map(|&j| (labels[j].clone(), beta[j]))
        .collect())
}
