//! Cross-validated prediction harness comparing connectome representations:
//! seeded k-fold splits, a mean baseline, linear/ridge regression, Gaussian
//! process regression, and scale-free evaluation metrics (prediction-outcome
//! correlation and percent MSE improvement over the baseline).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::derive_seed;
use crate::ErrorKind;

mod gp;

pub use gp::{GpParams, GpRegressor};

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("need folds >= 2, got {0}")]
    BadFolds(usize),
    #[error("need repeats >= 1")]
    BadRepeats,
    #[error("n={n} is smaller than the number of folds {folds}")]
    TooFewSubjects { n: usize, folds: usize },
    #[error("empty training set")]
    EmptyTraining,
    #[error("normal equations are singular with ridge = 0")]
    SingularNormalEquations,
    #[error("kernel matrix is not positive definite even after jitter escalation")]
    KernelNotPositiveDefinite,
    #[error("representation `{representation}` has {got} rows, expected {expected}")]
    RowMismatch {
        representation: String,
        got: usize,
        expected: usize,
    },
    #[error("trait `{0}` has fewer observed subjects than folds")]
    TraitTooSparse(String),
}

impl RegressionError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            RegressionError::SingularNormalEquations
            | RegressionError::KernelNotPositiveDefinite => ErrorKind::Computation,
            _ => ErrorKind::Validation,
        }
    }
}

/// Cross-validation layout: `folds`-fold, repeated `repeats` times.
#[derive(Debug, Clone)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 10,
            seed: 0,
        }
    }
}

/// Seeded fold assignments: one vector per repeat, entry `i` giving the fold
/// of subject `i`. Folds differ in size by at most one.
pub fn kfold_split(n: usize, config: &CvConfig) -> Result<Vec<Vec<usize>>, RegressionError> {
    if config.folds < 2 {
        return Err(RegressionError::BadFolds(config.folds));
    }
    if config.repeats < 1 {
        return Err(RegressionError::BadRepeats);
    }
    if n < config.folds {
        return Err(RegressionError::TooFewSubjects {
            n,
            folds: config.folds,
        });
    }
    let mut all = Vec::with_capacity(config.repeats);
    for repeat in 0..config.repeats {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            &[0x6b666f6c64, repeat as u64],
        ));
        let mut order: Vec<usize> = (0..n).collect();
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut assignment = vec![0usize; n];
        let base = n / config.folds;
        let extra = n % config.folds;
        let mut cursor = 0;
        for fold in 0..config.folds {
            let size = base + usize::from(fold < extra);
            for &subject in &order[cursor..cursor + size] {
                assignment[subject] = fold;
            }
            cursor += size;
        }
        all.push(assignment);
    }
    Ok(all)
}

/// A fitted model ready to predict.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &DMatrix<f64>) -> DVector<f64>;
}

/// The fit/predict contract the harness accepts; external models plug in by
/// implementing it.
pub trait Regressor: Send + Sync {
    fn name(&self) -> &str;
    fn fit(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        seed: u64,
    ) -> Result<Box<dyn Predictor>, RegressionError>;
}

struct ConstantPredictor(f64);

impl Predictor for ConstantPredictor {
    fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_element(x.nrows(), self.0)
    }
}

/// Baseline model: predicts the training-outcome mean everywhere.
#[derive(Debug, Clone, Default)]
pub struct BaselineMean;

impl Regressor for BaselineMean {
    fn name(&self) -> &str {
        "baseline"
    }

    fn fit(
        &self,
        _x: &DMatrix<f64>,
        y: &DVector<f64>,
        _seed: u64,
    ) -> Result<Box<dyn Predictor>, RegressionError> {
        if y.is_empty() {
            return Err(RegressionError::EmptyTraining);
        }
        Ok(Box::new(ConstantPredictor(y.sum() / y.len() as f64)))
    }
}

/// Convenience free function mirroring the baseline contract.
pub fn baseline_mean(train_y: &DVector<f64>) -> Result<Box<dyn Predictor>, RegressionError> {
    BaselineMean.fit(&DMatrix::zeros(train_y.len(), 0), train_y, 0)
}

struct LinearPredictor {
    intercept: f64,
    coefficients: DVector<f64>,
}

impl Predictor for LinearPredictor {
    fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut out = x * &self.coefficients;
        out.add_scalar_mut(self.intercept);
        out
    }
}

/// Least-squares regression, optionally ridge-penalized. Features and outcome
/// are centered internally; the penalty applies to the slopes only.
#[derive(Debug, Clone)]
pub struct LinearRegressor {
    pub ridge: f64,
}

impl LinearRegressor {
    pub fn least_squares() -> Self {
        Self { ridge: 0.0 }
    }

    pub fn with_ridge(ridge: f64) -> Self {
        Self { ridge }
    }
}

impl Regressor for LinearRegressor {
    fn name(&self) -> &str {
        if self.ridge == 0.0 {
            "linear"
        } else {
            "ridge"
        }
    }

    fn fit(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        _seed: u64,
    ) -> Result<Box<dyn Predictor>, RegressionError> {
        let (n, d) = (x.nrows(), x.ncols());
        if n == 0 {
            return Err(RegressionError::EmptyTraining);
        }
        let x_means = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
        let y_mean = y.sum() / n as f64;
        let mut xc = x.clone();
        for j in 0..d {
            let m = x_means[j];
            for i in 0..n {
                xc[(i, j)] -= m;
            }
        }
        let yc = y.map(|v| v - y_mean);
        let mut gram = xc.transpose() * &xc;
        for j in 0..d {
            gram[(j, j)] += self.ridge;
        }
        let rhs = xc.transpose() * yc;
        let coefficients = match gram.cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => {
                if self.ridge == 0.0 {
                    return Err(RegressionError::SingularNormalEquations);
                }
                // Ridge-regularized Gram matrices are positive definite up to
                // conditioning; fall back to full-pivot LU.
                gram = xc.transpose() * &xc;
                for j in 0..d {
                    gram[(j, j)] += self.ridge;
                }
                gram.full_piv_lu()
                    .solve(&rhs)
                    .ok_or(RegressionError::SingularNormalEquations)?
            }
        };
        let intercept = y_mean - x_means.dot(&coefficients);
        Ok(Box::new(LinearPredictor {
            intercept,
            coefficients,
        }))
    }
}

/// Convenience free function mirroring the linear-fit contract.
pub fn fit_linear(
    train_x: &DMatrix<f64>,
    train_y: &DVector<f64>,
    ridge: f64,
) -> Result<Box<dyn Predictor>, RegressionError> {
    LinearRegressor { ridge }.fit(train_x, train_y, 0)
}

/// One evaluated (representation, regressor, trait) combination; metrics are
/// means and standard deviations over repeats of pooled out-of-fold
/// predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub representation: String,
    pub regressor: String,
    pub trait_name: String,
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub correlation_mean: f64,
    pub correlation_sd: f64,
    pub improvement_mean: f64,
    pub improvement_sd: f64,
}

/// Full evaluation report, row order deterministic in
/// (representation, regressor, trait) input order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Report CSV:
    /// `representation,regressor,trait,corr_mean,corr_sd,mse_impr_mean,mse_impr_sd`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("representation,regressor,trait,corr_mean,corr_sd,mse_impr_mean,mse_impr_sd\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.representation,
                r.regressor,
                r.trait_name,
                r.correlation_mean,
                r.correlation_sd,
                r.improvement_mean,
                r.improvement_sd
            ));
        }
        out
    }

    pub fn row(&self, representation: &str, regressor: &str, trait_name: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| {
            r.representation == representation
                && r.regressor == regressor
                && r.trait_name == trait_name
        })
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / truth.len() as f64
}

fn correlation_or_zero(pred: &[f64], truth: &[f64]) -> f64 {
    crate::stats::pearson(pred, truth).unwrap_or(0.0)
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Per-repeat pooled out-of-fold metrics for one model on one trait subset.
struct RepeatMetrics {
    mse: Vec<f64>,
    correlation: Vec<f64>,
}

fn run_model(
    regressor: &dyn Regressor,
    x: &DMatrix<f64>,
    y: &[f64],
    assignments: &[Vec<usize>],
    folds: usize,
    task_seed: u64,
) -> Result<RepeatMetrics, RegressionError> {
    let n = y.len();
    let mut metrics = RepeatMetrics {
        mse: Vec::with_capacity(assignments.len()),
        correlation: Vec::with_capacity(assignments.len()),
    };
    for (repeat, assignment) in assignments.iter().enumerate() {
        let mut pooled = vec![0.0f64; n];
        for fold in 0..folds {
            let train_rows: Vec<usize> =
                (0..n).filter(|&i| assignment[i] != fold).collect();
            let test_rows: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
            let train_x = select_rows(x, &train_rows);
            let train_y = DVector::from_fn(train_rows.len(), |i, _| y[train_rows[i]]);
            let seed = derive_seed(task_seed, &[repeat as u64, fold as u64]);
            let model = regressor.fit(&train_x, &train_y, seed)?;
            let test_x = select_rows(x, &test_rows);
            let predictions = model.predict(&test_x);
            for (k, &row) in test_rows.iter().enumerate() {
                pooled[row] = predictions[k];
            }
        }
        metrics.mse.push(mse(&pooled, y));
        metrics.correlation.push(correlation_or_zero(&pooled, y));
    }
    Ok(metrics)
}

/// Evaluate every (representation, regressor, trait) combination with pooled
/// out-of-fold predictions per repeat. Subjects missing a trait are dropped
/// for that trait only. A `baseline` row is always included per
/// representation and trait; percent improvement is measured against it
/// within the same repeat.
pub fn evaluate(
    representations: &[(String, DMatrix<f64>)],
    traits: &DMatrix<f64>,
    trait_labels: &[String],
    regressors: &[&dyn Regressor],
    config: &CvConfig,
) -> Result<EvalReport, RegressionError> {
    let n = traits.nrows();
    for (name, m) in representations {
        if m.nrows() != n {
            return Err(RegressionError::RowMismatch {
                representation: name.clone(),
                got: m.nrows(),
                expected: n,
            });
        }
    }

    // (representation index, trait index) tasks, parallel, merged in order.
    let tasks: Vec<(usize, usize)> = (0..representations.len())
        .flat_map(|r| (0..trait_labels.len()).map(move |t| (r, t)))
        .collect();

    let task_rows: Vec<Result<Vec<EvalRow>, RegressionError>> = tasks
        .par_iter()
        .map(|&(rep_idx, trait_idx)| {
            let (rep_name, features) = &representations[rep_idx];
            let trait_name = &trait_labels[trait_idx];
            let observed: Vec<usize> = (0..n)
                .filter(|&i| !traits[(i, trait_idx)].is_nan())
                .collect();
            if observed.len() < config.folds {
                return Err(RegressionError::TraitTooSparse(trait_name.clone()));
            }
            let y: Vec<f64> = observed.iter().map(|&i| traits[(i, trait_idx)]).collect();
            let x = select_rows(features, &observed);
            let assignments = kfold_split(observed.len(), config)?;

            let baseline = BaselineMean;
            let base_seed = derive_seed(config.seed, &[rep_idx as u64, trait_idx as u64]);
            let base_metrics =
                run_model(&baseline, &x, &y, &assignments, config.folds, base_seed)?;

            let mut rows = Vec::new();
            // The baseline's improvement over itself is identically zero.
            let improvements = vec![0.0f64; base_metrics.mse.len()];
            let (mse_mean, mse_sd) = mean_sd(&base_metrics.mse);
            let (corr_mean, corr_sd) = mean_sd(&base_metrics.correlation);
            let (impr_mean, impr_sd) = mean_sd(&improvements);
            rows.push(EvalRow {
                representation: rep_name.clone(),
                regressor: "baseline".into(),
                trait_name: trait_name.clone(),
                mse_mean,
                mse_sd,
                correlation_mean: corr_mean,
                correlation_sd: corr_sd,
                improvement_mean: impr_mean,
                improvement_sd: impr_sd,
            });

            for (model_idx, regressor) in regressors.iter().enumerate() {
                let seed = derive_seed(base_seed, &[1 + model_idx as u64]);
                let metrics = run_model(*regressor, &x, &y, &assignments, config.folds, seed)?;
                let improvements: Vec<f64> = metrics
                    .mse
                    .iter()
                    .zip(&base_metrics.mse)
                    .map(|(&m, &b)| 100.0 * (b - m) / b)
                    .collect();
                let (mse_mean, mse_sd) = mean_sd(&metrics.mse);
                let (corr_mean, corr_sd) = mean_sd(&metrics.correlation);
                let (impr_mean, impr_sd) = mean_sd(&improvements);
                rows.push(EvalRow {
                    representation: rep_name.clone(),
                    regressor: regressor.name().to_string(),
                    trait_name: trait_name.clone(),
                    mse_mean,
                    mse_sd,
                    correlation_mean: corr_mean,
                    correlation_sd: corr_sd,
                    improvement_mean: impr_mean,
                    improvement_sd: impr_sd,
                });
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::new();
    for result in task_rows {
        rows.extend(result?);
    }
    Ok(EvalReport { rows })
}
