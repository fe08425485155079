//! Token sequences fed to the forecaster.

use super::TIME_SLOTS;
use crate::error::{Error, Result};
use crate::timeseries::{time_features, TimeSeries};

/// One sequence: scaled history with its mask, and slot-layout time
/// features for history plus horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqTokens {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    /// `(history_len + horizon) x TIME_SLOTS`
    pub features: Vec<f64>,
    pub history_len: usize,
    pub horizon: usize,
}

impl SeqTokens {
    /// Tokens for a (scaled) history and a forecast horizon. Missing
    /// values must be marked in the mask.
    pub fn from_history(history: &TimeSeries, horizon: usize) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::InvalidInput("empty history".into()));
        }
        let features = time_features(history.start, history.freq, history.len(), horizon)?.to_slots();
        Self::new(history.values.clone(), history.mask.clone(), features, horizon)
    }

    pub fn new(values: Vec<f64>, mask: Vec<bool>, features: Vec<f64>, horizon: usize) -> Result<Self> {
        let history_len = values.len();
        if mask.len() != history_len || features.len() != (history_len + horizon) * TIME_SLOTS {
            return Err(Error::InvalidInput("token sequence shapes disagree".into()));
        }
        if values.iter().zip(&mask).any(|(v, m)| *m && !v.is_finite()) {
            return Err(Error::NonFinite("observed history value".into()));
        }
        Ok(Self {
            values,
            mask,
            features,
            history_len,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.history_len + self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sequences of possibly different lengths. The padded view is
/// `max_len` tokens per row with a validity mask; computation only ever
/// touches valid positions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenBatch {
    pub seqs: Vec<SeqTokens>,
}

impl TokenBatch {
    pub fn new(seqs: Vec<SeqTokens>) -> Self {
        Self { seqs }
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.seqs.iter().map(SeqTokens::len).max().unwrap_or(0)
    }

    /// Right-padded validity mask, one row per sequence.
    pub fn validity(&self) -> Vec<Vec<bool>> {
        let n = self.max_len();
        self.seqs.iter().map(|s| (0..n).map(|t| t < s.len()).collect()).collect()
    }
}
