//! Gaussian-process regression with a squared-exponential kernel plus
//! observation noise. Hyperparameters (lengthscale, signal, noise) start from
//! the median pairwise distance heuristic and are tuned by maximizing the log
//! marginal likelihood with a multi-start Nelder-Mead search.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Predictor, RegressionError, Regressor};
use crate::derive_seed;

/// Search-budget knobs for the hyperparameter optimization.
#[derive(Debug, Clone)]
pub struct GpParams {
    pub starts: usize,
    pub evals_per_start: usize,
}

impl Default for GpParams {
    fn default() -> Self {
        Self {
            starts: 16,
            evals_per_start: 200,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GpRegressor {
    pub params: GpParams,
}

/// log-space hyperparameters: (ln lengthscale, ln signal sd, ln noise sd).
type LogParams = [f64; 3];

fn squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for c in 0..x.ncols() {
                let diff = x[(i, c)] - x[(j, c)];
                s += diff * diff;
            }
            d2[(i, j)] = s;
            d2[(j, i)] = s;
        }
    }
    d2
}

fn median_pairwise_distance(d2: &DMatrix<f64>) -> f64 {
    let n = d2.nrows();
    let mut distances: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            distances.push(d2[(i, j)].sqrt());
        }
    }
    if distances.is_empty() {
        return 1.0;
    }
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = distances[distances.len() / 2];
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

fn kernel_matrix(d2: &DMatrix<f64>, theta: &LogParams) -> DMatrix<f64> {
    let lengthscale2 = (2.0 * theta[0]).exp();
    let signal2 = (2.0 * theta[1]).exp();
    let noise2 = (2.0 * theta[2]).exp();
    let n = d2.nrows();
    let mut k = DMatrix::from_fn(n, n, |i, j| signal2 * (-d2[(i, j)] / (2.0 * lengthscale2)).exp());
    for i in 0..n {
        k[(i, i)] += noise2;
    }
    k
}

/// Cholesky with jitter escalation 1e-8 -> 1e-4 (relative to the mean
/// diagonal), then failure.
fn robust_cholesky(
    mut k: DMatrix<f64>,
) -> Result<Cholesky<f64, Dyn>, RegressionError> {
    let n = k.nrows();
    let diag_scale = (0..n).map(|i| k[(i, i)]).sum::<f64>() / n as f64;
    let mut jitter = 0.0f64;
    loop {
        let attempt = k.clone().cholesky();
        if let Some(chol) = attempt {
            return Ok(chol);
        }
        jitter = if jitter == 0.0 { 1e-8 } else { jitter * 100.0 };
        if jitter > 1e-4 {
            return Err(RegressionError::KernelNotPositiveDefinite);
        }
        for i in 0..n {
            k[(i, i)] += jitter * diag_scale;
        }
    }
}

/// Negative log marginal likelihood; +inf when the kernel cannot be
/// factorized.
fn negative_lml(d2: &DMatrix<f64>, y: &DVector<f64>, theta: &LogParams) -> f64 {
    let n = y.len() as f64;
    let k = kernel_matrix(d2, theta);
    let Some(chol) = k.cholesky() else {
        return f64::INFINITY;
    };
    let alpha = chol.solve(y);
    let log_det: f64 = (0..y.len()).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
    0.5 * y.dot(&alpha) + log_det + 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Nelder-Mead in three dimensions under a fixed evaluation budget.
fn nelder_mead<F: FnMut(&LogParams) -> f64>(
    start: LogParams,
    mut objective: F,
    budget: usize,
) -> (LogParams, f64) {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;
    let mut evals = 0usize;
    let mut eval = |p: &LogParams, evals: &mut usize| {
        *evals += 1;
        objective(p)
    };

    let mut simplex: Vec<(LogParams, f64)> = Vec::with_capacity(4);
    let f0 = eval(&start, &mut evals);
    simplex.push((start, f0));
    for d in 0..3 {
        let mut p = start;
        p[d] += 0.5;
        let f = eval(&p, &mut evals);
        simplex.push((p, f));
    }

    while evals < budget {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0];
        let worst = simplex[3];
        let second_worst = simplex[2];
        let mut centroid = [0.0; 3];
        for point in &simplex[..3] {
            for d in 0..3 {
                centroid[d] += point.0[d] / 3.0;
            }
        }
        let reflect = |c: &[f64; 3], w: &LogParams, coeff: f64| {
            let mut p = [0.0; 3];
            for d in 0..3 {
                p[d] = c[d] + coeff * (c[d] - w[d]);
            }
            p
        };
        let xr = reflect(&centroid, &worst.0, ALPHA);
        let fr = eval(&xr, &mut evals);
        if fr < best.1 {
            let xe = reflect(&centroid, &worst.0, GAMMA);
            let fe = eval(&xe, &mut evals);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < second_worst.1 {
            simplex[3] = (xr, fr);
        } else {
            let xc = reflect(&centroid, &worst.0, -RHO);
            let fc = eval(&xc, &mut evals);
            if fc < worst.1 {
                simplex[3] = (xc, fc);
            } else {
                // Shrink toward the best point.
                for idx in 1..4 {
                    let mut p = [0.0; 3];
                    for d in 0..3 {
                        p[d] = best.0[d] + SIGMA * (simplex[idx].0[d] - best.0[d]);
                    }
                    let f = eval(&p, &mut evals);
                    simplex[idx] = (p, f);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex[0]
}

struct GpPredictor {
    train_x: DMatrix<f64>,
    alpha: DVector<f64>,
    y_mean: f64,
    theta: LogParams,
}

impl Predictor for GpPredictor {
    fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let lengthscale2 = (2.0 * self.theta[0]).exp();
        let signal2 = (2.0 * self.theta[1]).exp();
        let n_train = self.train_x.nrows();
        DVector::from_fn(x.nrows(), |i, _| {
            let mut acc = 0.0;
            for t in 0..n_train {
                let mut d2 = 0.0;
                for c in 0..x.ncols() {
                    let diff = x[(i, c)] - self.train_x[(t, c)];
                    d2 += diff * diff;
                }
                acc += signal2 * (-d2 / (2.0 * lengthscale2)).exp() * self.alpha[t];
            }
            acc + self.y_mean
        })
    }
}

impl Regressor for GpRegressor {
    fn name(&self) -> &str {
        "gp"
    }

    fn fit(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        seed: u64,
    ) -> Result<Box<dyn Predictor>, RegressionError> {
        let n = y.len();
        if n == 0 {
            return Err(RegressionError::EmptyTraining);
        }
        let y_mean = y.sum() / n as f64;
        let yc = y.map(|v| v - y_mean);
        let d2 = squared_distances(x);

        let sd_y = {
            let var = yc.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0).max(1.0);
            var.sqrt().max(1e-8)
        };
        let init: LogParams = [
            median_pairwise_distance(&d2).ln(),
            sd_y.ln(),
            (0.1 * sd_y).ln(),
        ];

        let mut best: (LogParams, f64) = (init, f64::INFINITY);
        for start_idx in 0..self.params.starts {
            let start = if start_idx == 0 {
                init
            } else {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[start_idx as u64]));
                let mut p = init;
                for d in p.iter_mut() {
                    *d += rng.random_range(-1.5..1.5);
                }
                p
            };
            let (theta, value) = nelder_mead(
                start,
                |t| negative_lml(&d2, &yc, t),
                self.params.evals_per_start,
            );
            if value < best.1 {
                best = (theta, value);
            }
        }

        let theta = best.0;
        let k = kernel_matrix(&d2, &theta);
        let chol = robust_cholesky(k)?;
        let alpha = chol.solve(&yc);
        Ok(Box::new(GpPredictor {
            train_x: x.clone(),
            alpha,
            y_mean,
            theta,
        }))
    }
}
