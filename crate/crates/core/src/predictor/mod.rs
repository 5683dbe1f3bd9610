//! Backlog estimation from channel observations.
//!
//! The base station never sees the backlog directly. It sees, per use mode,
//! how many channels ended in success, collision and idle states. Three
//! estimators are provided: a per-class LSTM regressor, a moment-inversion
//! baseline on the idle fraction, and a ground-truth oracle.

mod lstm;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use lstm::{dataset_mse, lstm_train, LstmModel, TrainOptions, TrainReport, TrainingSample, INPUT_SIZE};

use crate::traffic::BacklogState;
use crate::{Error, Result, UseMode};

/// Success/collision/idle channel counts of one use mode in one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub success: u64,
    pub collision: u64,
    pub idle: u64,
}

impl Triplet {
    pub fn channels(&self) -> u64 {
        self.success + self.collision + self.idle
    }

    /// Fractions of the frame's channels in each state; zeros when there were no channels.
    pub fn normalized(&self) -> [f64; INPUT_SIZE] {
        let l = self.channels();
        if l == 0 {
            return [0.0; INPUT_SIZE];
        }
        let l = l as f64;
        [
            self.success as f64 / l,
            self.collision as f64 / l,
            self.idle as f64 / l,
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub frame_index: u64,
    pub urllc: Triplet,
    pub mmtc: Triplet,
}

impl Observation {
    pub fn triplet(&self, mode: UseMode) -> &Triplet {
        match mode {
            UseMode::Urllc => &self.urllc,
            UseMode::Mmtc => &self.mmtc,
        }
    }
}

/// The last `capacity` observations, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationHistory {
    capacity: usize,
    window: VecDeque<Observation>,
}

impl ObservationHistory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("predictor.window", "must be at least 1"));
        }
        Ok(Self {
            capacity,
            window: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn last(&self) -> Option<&Observation> {
        self.window.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.window.iter()
    }

    /// Append `obs`, evicting the oldest entry when full.
    pub fn record_observation(&mut self, obs: Observation) -> Result<()> {
        if let Some(last) = self.window.back() {
            if obs.frame_index <= last.frame_index {
                return Err(Error::OutOfOrder {
                    last: last.frame_index,
                    got: obs.frame_index,
                });
            }
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(obs);
        Ok(())
    }

    /// Per-frame normalized triplets of one mode, oldest first.
    pub fn normalized_window(&self, mode: UseMode) -> Vec<[f64; INPUT_SIZE]> {
        self.window.iter().map(|o| o.triplet(mode).normalized()).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PredictionResult {
    pub k_hat_u: u64,
    pub k_hat_m: u64,
}

impl PredictionResult {
    pub fn total(&self) -> u64 {
        self.k_hat_u + self.k_hat_m
    }

    pub fn get(&self, mode: UseMode) -> u64 {
        match mode {
            UseMode::Urllc => self.k_hat_u,
            UseMode::Mmtc => self.k_hat_m,
        }
    }
}

/// The pair of independently trained class models.
#[derive(Clone, Debug, PartialEq)]
pub struct BacklogModels {
    pub urllc: LstmModel,
    pub mmtc: LstmModel,
}

impl BacklogModels {
    pub fn model(&self, mode: UseMode) -> &LstmModel {
        match mode {
            UseMode::Urllc => &self.urllc,
            UseMode::Mmtc => &self.mmtc,
        }
    }

    /// Store both models in one file: the URLLC model followed by the mMTC model.
    pub fn to_text(&self) -> String {
        let mut out = self.urllc.to_text();
        out.push_str(&self.mmtc.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let urllc = LstmModel::read_from(&mut lines)?;
        let mmtc = LstmModel::read_from(&mut lines)?;
        Ok(Self { urllc, mmtc })
    }
}

/// Denormalize a model output into an integer device count within `[0, population]`.
pub fn denormalize(output: f64, population: u64) -> u64 {
    if !output.is_finite() || output <= 0.0 {
        return 0;
    }
    let n = (output.min(1.0) * population as f64).round() as u64;
    n.min(population)
}

/// Run each class model over its history window.
pub fn predict_backlog(
    models: &BacklogModels,
    hist_u: &ObservationHistory,
    hist_m: &ObservationHistory,
) -> Result<PredictionResult> {
    let estimate = |mode: UseMode, hist: &ObservationHistory| -> Result<u64> {
        if hist.is_empty() {
            return Err(Error::Empty("observation history"));
        }
        let model = models.model(mode);
        let y = model.predict_normalized(&hist.normalized_window(mode))?;
        Ok(denormalize(y, model.population()))
    };
    Ok(PredictionResult {
        k_hat_u: estimate(UseMode::Urllc, hist_u)?,
        k_hat_m: estimate(UseMode::Mmtc, hist_m)?,
    })
}

/// Ground-truth backlog, available only inside the simulator.
pub fn perfect_predict(state: &BacklogState) -> PredictionResult {
    PredictionResult {
        k_hat_u: state.active_u,
        k_hat_m: state.active_m,
    }
}

/// Invert the idle fraction of one frame.
///
/// With `L` channels and `n` devices picking uniformly, the expected idle
/// fraction is `(1 - 1/L)^n`, so `n = ln(idle) / ln(1 - 1/L)`. No idle channel
/// at all maps to the population cap.
pub fn naive_estimate(triplet: &Triplet, population: u64) -> u64 {
    let l = triplet.channels();
    if l == 0 || triplet.idle == l {
        return 0;
    }
    if triplet.idle == 0 || l == 1 {
        return population;
    }
    let idle = triplet.idle as f64 / l as f64;
    let n = idle.ln() / (1.0 - 1.0 / l as f64).ln();
    (n.round().max(0.0) as u64).min(population)
}

/// Moment-inversion estimate from the newest observation in `hist`.
pub fn naive_predict(hist: &ObservationHistory, k_u: u64, k_m: u64) -> Result<PredictionResult> {
    let last = hist.last().ok_or(Error::Empty("observation history"))?;
    Ok(PredictionResult {
        k_hat_u: naive_estimate(&last.urllc, k_u),
        k_hat_m: naive_estimate(&last.mmtc, k_m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(t: u64, idle_m: u64) -> Observation {
        Observation {
            frame_index: t,
            urllc: Triplet {
                success: 1,
                collision: 0,
                idle: 4,
            },
            mmtc: Triplet {
                success: 0,
                collision: 49 - idle_m,
                idle: idle_m,
            },
        }
    }

    #[test]
    fn record_first() {
        let mut h = ObservationHistory::new(10).unwrap();
        h.record_observation(obs(0, 1)).unwrap();
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn record_evicts_oldest() {
        let mut h = ObservationHistory::new(10).unwrap();
        for t in 0..11 {
            h.record_observation(obs(t, 1)).unwrap();
        }
        assert_eq!(h.len(), 10);
        assert_eq!(h.iter().next().unwrap().frame_index, 1);
        assert_eq!(h.last().unwrap().frame_index, 10);
    }

    #[test]
    fn record_rejects_regression() {
        let mut h = ObservationHistory::new(3).unwrap();
        h.record_observation(obs(5, 1)).unwrap();
        assert!(matches!(
            h.record_observation(obs(5, 1)),
            Err(Error::OutOfOrder { last: 5, got: 5 })
        ));
        assert!(h.record_observation(obs(2, 1)).is_err());
    }

    #[test]
    fn perfect_is_identity() {
        let s = BacklogState {
            active_u: 5,
            active_m: 120,
            ..Default::default()
        };
        assert_eq!(
            perfect_predict(&s),
            PredictionResult {
                k_hat_u: 5,
                k_hat_m: 120
            }
        );
        assert_eq!(perfect_predict(&BacklogState::default()), PredictionResult::default());
    }

    #[test]
    fn naive_all_idle() {
        let t = Triplet {
            success: 0,
            collision: 0,
            idle: 54,
        };
        assert_eq!(naive_estimate(&t, 1000), 0);
    }

    #[test]
    fn naive_inverts_expected_idle_fraction() {
        // idle fraction (1 - 1/54)^54 = 0.3645 -> 19.68 of 54 channels; with
        // integer idle counts check the inversion on a 5400-channel frame
        let l = 5400u64;
        let idle = ((1.0 - 1.0 / 54.0f64).powi(54) * l as f64).round() as u64;
        let est = {
            let frac = idle as f64 / l as f64;
            frac.ln() / (1.0 - 1.0 / 54.0f64).ln()
        };
        assert!((est - 54.0).abs() < 0.1, "{est}");
        // and on 54 channels the nearest idle count still maps back near 54
        let t = Triplet {
            success: 20,
            collision: 14,
            idle: 20,
        };
        let n = naive_estimate(&t, 1000);
        assert!((52..=56).contains(&n), "{n}");
    }

    #[test]
    fn naive_no_idle_caps() {
        let t = Triplet {
            success: 4,
            collision: 50,
            idle: 0,
        };
        assert_eq!(naive_estimate(&t, 777), 777);
    }

    #[test]
    fn denormalize_clamps() {
        assert_eq!(denormalize(1.2, 1000), 1000);
        assert_eq!(denormalize(-0.3, 1000), 0);
        assert_eq!(denormalize(f64::NAN, 1000), 0);
        assert_eq!(denormalize(0.0124, 1000), 12);
    }
}
