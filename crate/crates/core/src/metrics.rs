//! Throughput, channel loading and predictor error, plus aggregation across
//! Monte-Carlo realizations.

use serde::Serialize;

use crate::engine::{FrameResult, PlanSummary};
use crate::traffic::BacklogState;
use crate::{Error, Result, UseMode};

/// Success channels over all channels; `None` when the frame had no channels.
pub fn normalized_throughput(result: &FrameResult) -> Option<f64> {
    let l = result.plan.total();
    (l > 0).then(|| (result.served_u + result.served_m) as f64 / l as f64)
}

/// One mode's success channels over all channels of the frame.
///
/// The two modes sum to [`normalized_throughput`].
pub fn mode_throughput(result: &FrameResult, mode: UseMode) -> Option<f64> {
    let l = result.plan.total();
    (l > 0).then(|| result.served(mode) as f64 / l as f64)
}

/// Active devices per channel for each mode; `None` for a mode without channels.
pub fn channel_loading(backlog: &BacklogState, plan: PlanSummary) -> (Option<f64>, Option<f64>) {
    let cl = |mode: UseMode| {
        let l = plan.get(mode);
        (l > 0).then(|| backlog.active(mode) as f64 / l as f64)
    };
    (cl(UseMode::Urllc), cl(UseMode::Mmtc))
}

/// Mean of `((prediction - truth) / population)^2`.
pub fn predictor_mse(predictions: &[u64], truths: &[u64], population: u64) -> Result<f64> {
    if population == 0 {
        return Err(Error::config("population", "must be positive"));
    }
    Ok(raw_mse(predictions, truths)? / (population as f64).powi(2))
}

/// Mean squared error in device counts.
pub fn raw_mse(predictions: &[u64], truths: &[u64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("prediction sequence"));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// The per-frame quantities reported for each realization.
///
/// Undefined samples (no channels) are stored as NaN and skipped when averaging.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub eta: f64,
    pub cl_u: f64,
    pub cl_m: f64,
    pub served_u: f64,
    pub served_m: f64,
    pub backlog_u: f64,
    pub backlog_m: f64,
    pub l_u: f64,
    pub l_m: f64,
    pub collisions_u: f64,
    pub collisions_m: f64,
    pub eta_u: f64,
}

impl FrameMetrics {
    pub fn from_result(r: &FrameResult) -> Self {
        let (cl_u, cl_m) = channel_loading(&r.backlog, r.plan);
        Self {
            eta: normalized_throughput(r).unwrap_or(f64::NAN),
            cl_u: cl_u.unwrap_or(f64::NAN),
            cl_m: cl_m.unwrap_or(f64::NAN),
            served_u: r.served_u as f64,
            served_m: r.served_m as f64,
            backlog_u: r.backlog.active_u as f64,
            backlog_m: r.backlog.active_m as f64,
            l_u: r.plan.l_u as f64,
            l_m: r.plan.l_m as f64,
            collisions_u: r.observation.urllc.collision as f64,
            collisions_m: r.observation.mmtc.collision as f64,
            eta_u: mode_throughput(r, UseMode::Urllc).unwrap_or(f64::NAN),
        }
    }

    pub fn values(&self) -> [f64; 12] {
        [
            self.eta,
            self.cl_u,
            self.cl_m,
            self.served_u,
            self.served_m,
            self.backlog_u,
            self.backlog_m,
            self.l_u,
            self.l_m,
            self.collisions_u,
            self.collisions_m,
            self.eta_u,
        ]
    }

    fn from_values(v: [f64; 12]) -> Self {
        Self {
            eta: v[0],
            cl_u: v[1],
            cl_m: v[2],
            served_u: v[3],
            served_m: v[4],
            backlog_u: v[5],
            backlog_m: v[6],
            l_u: v[7],
            l_m: v[8],
            collisions_u: v[9],
            collisions_m: v[10],
            eta_u: v[11],
        }
    }
}

/// Mean and standard error of the finite entries of `xs`.
///
/// No finite entries gives NaN for both; a single entry has standard error 0.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let vals: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    let n = vals.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-frame metrics of every realization, `[realization][frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSeries {
    runs: Vec<Vec<FrameMetrics>>,
}

/// Mean and standard error of each metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: FrameMetrics,
    pub se: FrameMetrics,
}

impl MetricSeries {
    pub fn new(runs: Vec<Vec<FrameMetrics>>) -> Result<Self> {
        let Some(first) = runs.first() else {
            return Err(Error::Empty("realization set"));
        };
        let frames = first.len();
        if frames == 0 {
            return Err(Error::Empty("frame sequence"));
        }
        if runs.iter().any(|r| r.len() != frames) {
            return Err(Error::Shape("realizations differ in frame count".into()));
        }
        Ok(Self { runs })
    }

    pub fn realizations(&self) -> usize {
        self.runs.len()
    }

    pub fn frames(&self) -> usize {
        self.runs[0].len()
    }

    pub fn runs(&self) -> &[Vec<FrameMetrics>] {
        &self.runs
    }

    fn aggregate(samples: &[FrameMetrics]) -> Aggregate {
        let mut mean = [0.0; 12];
        let mut se = [0.0; 12];
        for k in 0..12 {
            let col: Vec<f64> = samples.iter().map(|m| m.values()[k]).collect();
            (mean[k], se[k]) = mean_se(&col);
        }
        Aggregate {
            mean: FrameMetrics::from_values(mean),
            se: FrameMetrics::from_values(se),
        }
    }

    /// Across-realization mean and standard error at every frame.
    pub fn per_frame(&self) -> Vec<Aggregate> {
        (0..self.frames())
            .map(|t| {
                let col: Vec<FrameMetrics> = self.runs.iter().map(|r| r[t]).collect();
                Self::aggregate(&col)
            })
            .collect()
    }

    /// First frame of the steady-state window covering the last `fraction` of frames.
    pub fn steady_start(&self, fraction: f64) -> usize {
        let frames = self.frames();
        let len = ((frames as f64 * fraction.clamp(0.0, 1.0)).round() as usize).clamp(1, frames);
        frames - len
    }

    /// Time average of each realization over the steady-state window, then
    /// mean and standard error of those averages across realizations.
    pub fn steady_state(&self, fraction: f64) -> Aggregate {
        let start = self.steady_start(fraction);
        let per_run: Vec<FrameMetrics> = self
            .runs
            .iter()
            .map(|r| Self::aggregate(&r[start..]).mean)
            .collect();
        Self::aggregate(&per_run)
    }
}

/// Default steady-state window: the final 20% of frames.
pub const STEADY_STATE_FRACTION: f64 = 0.2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{Observation, PredictionResult, Triplet};

    fn frame(served_u: u64, served_m: u64, l_u: usize, l_m: usize) -> FrameResult {
        FrameResult {
            frame_index: 0,
            backlog: BacklogState {
                active_u: 5,
                active_m: 98,
                ..Default::default()
            },
            prediction: PredictionResult::default(),
            plan: PlanSummary { l_u, l_m },
            observation: Observation {
                frame_index: 0,
                urllc: Triplet {
                    success: served_u,
                    collision: 0,
                    idle: l_u as u64 - served_u,
                },
                mmtc: Triplet {
                    success: served_m,
                    collision: 0,
                    idle: l_m as u64 - served_m,
                },
            },
            served_u,
            served_m,
            backlog_after: BacklogState::default(),
            acb_stats: Vec::new(),
            starved_u: false,
            starved_m: false,
        }
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(normalized_throughput(&frame(5, 49, 5, 49)), Some(1.0));
        assert_eq!(normalized_throughput(&frame(2, 25, 5, 49)), Some(0.5));
        assert_eq!(normalized_throughput(&frame(0, 0, 0, 0)), None);
        let f = frame(2, 25, 5, 49);
        let sum = mode_throughput(&f, UseMode::Urllc).unwrap() + mode_throughput(&f, UseMode::Mmtc).unwrap();
        assert!((sum - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loading_examples() {
        let b = BacklogState {
            active_u: 5,
            active_m: 98,
            ..Default::default()
        };
        assert_eq!(channel_loading(&b, PlanSummary { l_u: 5, l_m: 49 }), (Some(1.0), Some(2.0)));
        assert_eq!(channel_loading(&b, PlanSummary { l_u: 0, l_m: 49 }).0, None);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(predictor_mse(&[3, 4, 5], &[3, 4, 5], 100).unwrap(), 0.0);
        let b = 40u64;
        let mse = predictor_mse(&[0; 6], &[b; 6], 1000).unwrap();
        assert!((mse - (40.0f64 / 1000.0).powi(2)).abs() < 1e-15);
        assert_eq!(raw_mse(&[0; 6], &[b; 6]).unwrap(), 1600.0);
        assert!(predictor_mse(&[], &[], 10).is_err());
        assert!(predictor_mse(&[1], &[1, 2], 10).is_err());
    }

    #[test]
    fn mean_se_basics() {
        assert_eq!(mean_se(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, f64::NAN]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_se(&[f64::NAN]).0.is_nan());
    }

    #[test]
    fn aggregation_is_order_invariant() {
        let a = FrameMetrics::from_result(&frame(1, 10, 5, 49));
        let b = FrameMetrics::from_result(&frame(3, 20, 5, 49));
        let s1 = MetricSeries::new(vec![vec![a, b], vec![b, a]]).unwrap();
        let s2 = MetricSeries::new(vec![vec![b, a], vec![a, b]]).unwrap();
        assert_eq!(s1.per_frame(), s2.per_frame());
        assert_eq!(s1.steady_state(1.0), s2.steady_state(1.0));
        assert!(s1.per_frame()[0].se.eta >= 0.0);
    }

    #[test]
    fn steady_window() {
        let a = FrameMetrics::from_result(&frame(1, 10, 5, 49));
        let s = MetricSeries::new(vec![vec![a; 10]]).unwrap();
        assert_eq!(s.steady_start(0.2), 8);
        assert_eq!(s.steady_start(0.0), 9);
        assert_eq!(s.steady_start(1.0), 0);
    }
}
