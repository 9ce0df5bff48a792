//! Incremental radial-basis network mapping BER to (PSNR, DFR).
//!
//! Inputs are taken as log10(ber), with ber below 1e-12 pinned to 1e-12, and
//! clamped to the training range at evaluation time.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::video::{simulate_gops, GopModel, VideoSample};

/// Smallest BER distinguished by the input transform.
pub const BER_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("degenerate training data: all samples share ber = {0}")]
    Degenerate(f64),
    #[error("invalid fit option: {0}")]
    InvalidOption(String),
    #[error("sample {index} is invalid: {reason}")]
    InvalidSample { index: usize, reason: String },
    #[error("least-squares solve failed: {0}")]
    Solve(String),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format: {0}")]
    Format(#[from] serde_json::Error),
}

pub fn ber_feature(ber: f64) -> f64 {
    ber.max(BER_FLOOR).log10()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Basis half-width at half-maximum, in decades of BER.
    pub spread: f64,
    pub mse_goal: f64,
    pub max_neurons: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            spread: 1.0,
            mse_goal: 1e-3,
            max_neurons: 25,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: Option<u64>,
    pub mse_goal: f64,
    pub max_neurons: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityEstimator {
    /// Basis centers in log10(ber).
    pub centers: Vec<f64>,
    pub spread: f64,
    /// Output weights per center, `[psnr, dfr]`.
    pub weights: Vec<[f64; 2]>,
    pub bias: [f64; 2],
    /// Training input range in log10(ber); inputs are clamped into it.
    pub input_range: [f64; 2],
    pub meta: TrainingMeta,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub psnr: f64,
    pub dfr: f64,
}

impl QualityEstimator {
    /// Estimator that ignores BER and always predicts `(psnr, dfr)`.
    pub fn constant(psnr: f64, dfr: f64) -> Self {
        QualityEstimator {
            centers: vec![],
            spread: 1.0,
            weights: vec![],
            bias: [psnr, dfr],
            input_range: [BER_FLOOR.log10(), 0.0],
            meta: TrainingMeta::default(),
        }
    }

    pub fn neuron_count(&self) -> usize {
        self.centers.len()
    }

    fn raw(&self, x: f64) -> [f64; 2] {
        let x = x.clamp(self.input_range[0], self.input_range[1]);
        let mut out = self.bias;
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let phi = basis(x, *c, self.spread);
            out[0] += w[0] * phi;
            out[1] += w[1] * phi;
        }
        out
    }

    pub fn estimate(&self, ber: f64) -> Prediction {
        let [psnr, dfr] = self.raw(ber_feature(ber));
        Prediction {
            psnr: psnr.max(0.0),
            dfr: dfr.clamp(0.0, 1.0),
        }
    }

    /// Mean squared error over samples and both outputs, unclamped.
    pub fn mse(&self, samples: &[VideoSample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let total: f64 = samples
            .iter()
            .map(|s| {
                let [p, d] = self.raw(ber_feature(s.ber));
                (p - s.psnr).powi(2) + (d - s.dfr).powi(2)
            })
            .sum();
        total / (2.0 * samples.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimator serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, EstimatorError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), EstimatorError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EstimatorError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Gaussian with value 0.5 at distance `spread` from the center.
fn basis(x: f64, c: f64, spread: f64) -> f64 {
    let d = (x - c) / spread;
    (-std::f64::consts::LN_2 * d * d).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitStep {
    pub neurons: usize,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
}

fn check_inputs(samples: &[VideoSample], opts: &FitOptions) -> Result<(), EstimatorError> {
    if samples.len() < 2 {
        return Err(EstimatorError::TooFewSamples(samples.len()));
    }
    if !(opts.spread > 0.0 && opts.spread.is_finite()) {
        return Err(EstimatorError::InvalidOption(format!("spread {}", opts.spread)));
    }
    if !(opts.mse_goal >= 0.0) {
        return Err(EstimatorError::InvalidOption(format!("mse_goal {}", opts.mse_goal)));
    }
    for (index, s) in samples.iter().enumerate() {
        let reason = if !(0.0..=0.5).contains(&s.ber) {
            "ber outside [0, 0.5]"
        } else if !(0.0..=1.0).contains(&s.dfr) {
            "dfr outside [0, 1]"
        } else if !s.psnr.is_finite() {
            "psnr not finite"
        } else {
            continue;
        };
        return Err(EstimatorError::InvalidSample {
            index,
            reason: reason.to_string(),
        });
    }
    let x0 = ber_feature(samples[0].ber);
    if samples.iter().all(|s| ber_feature(s.ber) == x0) {
        return Err(EstimatorError::Degenerate(samples[0].ber));
    }
    Ok(())
}

/// Least squares with minimum-norm fallback for rank-deficient designs.
fn solve_lstsq(h: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimatorError> {
    let svd = h.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * (h.nrows().max(h.ncols()) as f64) * f64::EPSILON;
    svd.solve(y, eps).map_err(|e| EstimatorError::Solve(e.to_string()))
}

/// Fits on `samples`, adding one neuron at a time at the sample with the
/// largest residual. Returns the model and the training-MSE curve, starting
/// with the bias-only model.
pub fn fit_estimator(
    samples: &[VideoSample],
    opts: &FitOptions,
) -> Result<(QualityEstimator, Vec<FitStep>), EstimatorError> {
    fit_with_holdout(samples, &[], opts)
}

/// As [`fit_estimator`], also recording held-out MSE at every step when
/// `test` is non-empty.
pub fn fit_with_holdout(
    train: &[VideoSample],
    test: &[VideoSample],
    opts: &FitOptions,
) -> Result<(QualityEstimator, Vec<FitStep>), EstimatorError> {
    check_inputs(train, opts)?;
    let xs: Vec<f64> = train.iter().map(|s| ber_feature(s.ber)).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = train.len();
    let y = DMatrix::from_fn(n, 2, |r, c| if c == 0 { train[r].psnr } else { train[r].dfr });

    let mut model = QualityEstimator {
        centers: vec![],
        spread: opts.spread,
        weights: vec![],
        bias: [0.0; 2],
        input_range: [lo, hi],
        meta: TrainingMeta {
            seed: None,
            mse_goal: opts.mse_goal,
            max_neurons: opts.max_neurons,
            train_samples: n,
            test_samples: test.len(),
            train_mse: 0.0,
            test_mse: None,
        },
    };
    let mut used = vec![false; n];
    let mut steps = Vec::new();
    let mut prev_w: Option<DMatrix<f64>> = None;

    loop {
        let m = model.centers.len();
        let h = DMatrix::from_fn(n, m + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                basis(xs[r], model.centers[c - 1], opts.spread)
            }
        });
        let mut w = solve_lstsq(&h, &y)?;
        let mut resid = &y - &h * &w;
        if let Some(prev) = &prev_w {
            // the previous solution padded with a zero weight is feasible here;
            // keep it if truncation in the SVD solve did worse
            let padded = prev.clone().insert_row(m, 0.0);
            let r2 = &y - &h * &padded;
            if r2.norm_squared() < resid.norm_squared() {
                w = padded;
                resid = r2;
            }
        }
        model.bias = [w[(0, 0)], w[(0, 1)]];
        model.weights = (1..=m).map(|i| [w[(i, 0)], w[(i, 1)]]).collect();

        let row_err = DVector::from_fn(n, |r, _| resid[(r, 0)].powi(2) + resid[(r, 1)].powi(2));
        let train_mse = row_err.sum() / (2.0 * n as f64);
        prev_w = Some(w);
        let test_mse = (!test.is_empty()).then(|| model.mse(test));
        log::debug!("rbf neurons={m} train_mse={train_mse:.3e}");
        steps.push(FitStep {
            neurons: m,
            train_mse,
            test_mse,
        });
        model.meta.train_mse = train_mse;
        model.meta.test_mse = test_mse;

        if train_mse <= opts.mse_goal || m >= opts.max_neurons {
            break;
        }
        // next center: unused sample with the largest residual, lowest index on ties
        let next = (0..n)
            .filter(|&i| !used[i] && !model.centers.contains(&xs[i]))
            .fold(None::<usize>, |best, i| match best {
                Some(b) if row_err[b] >= row_err[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = next else { break };
        used[i] = true;
        model.centers.push(xs[i]);
    }
    Ok((model, steps))
}

/// `count` BER values log-spaced over [lo, hi].
pub fn ber_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

/// Ground truth over a BER grid; point `i` uses seed `seed + i`.
pub fn build_dataset(gop: &GopModel, bers: &[f64], gops_per_point: usize, seed: u64) -> Vec<VideoSample> {
    bers.iter()
        .enumerate()
        .map(|(i, &ber)| {
            let s = simulate_gops(gop, ber, gops_per_point, seed.wrapping_add(i as u64));
            VideoSample {
                ber,
                psnr: s.psnr,
                dfr: s.dfr,
            }
        })
        .collect()
}

/// Seeded shuffle, first two thirds (rounded) for training.
pub fn split_dataset(samples: &[VideoSample], seed: u64) -> (Vec<VideoSample>, Vec<VideoSample>) {
    let mut v = samples.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (2 * v.len()).div_ceil(3);
    let test = v.split_off(n_train);
    (v, test)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingPlan {
    pub ber_min: f64,
    pub ber_max: f64,
    pub ber_points: usize,
    pub gops_per_point: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for TrainingPlan {
    fn default() -> Self {
        TrainingPlan {
            ber_min: 1e-9,
            ber_max: 1e-3,
            ber_points: 25,
            gops_per_point: 10_000,
            seed: 1,
            fit: FitOptions::default(),
        }
    }
}

pub struct TrainingOutcome {
    pub model: QualityEstimator,
    pub steps: Vec<FitStep>,
    pub dataset: Vec<VideoSample>,
    pub train: Vec<VideoSample>,
    pub test: Vec<VideoSample>,
}

/// Ground truth, split, and fit in one call.
pub fn train_estimator(gop: &GopModel, plan: &TrainingPlan) -> Result<TrainingOutcome, EstimatorError> {
    if !(plan.ber_min > 0.0 && plan.ber_min < plan.ber_max && plan.ber_max <= 0.5) {
        return Err(EstimatorError::InvalidOption(format!(
            "ber range [{}, {}]",
            plan.ber_min, plan.ber_max
        )));
    }
    let bers = ber_grid(plan.ber_min, plan.ber_max, plan.ber_points);
    let dataset = build_dataset(gop, &bers, plan.gops_per_point.max(1), plan.seed);
    let (train, test) = split_dataset(&dataset, plan.seed);
    let (mut model, steps) = fit_with_holdout(&train, &test, &plan.fit)?;
    model.meta.seed = Some(plan.seed);
    Ok(TrainingOutcome {
        model,
        steps,
        dataset,
        train,
        test,
    })
}

pub fn dataset_csv(samples: &[VideoSample]) -> String {
    let mut out = String::from("ber,psnr,dfr\n");
    for s in samples {
        out.push_str(&format!("{:e},{},{}\n", s.ber, s.psnr, s.dfr));
    }
    out
}
