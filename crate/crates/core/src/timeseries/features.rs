use chrono::{Datelike, NaiveDateTime, Timelike};

use super::{FreqUnit, Frequency};
use crate::error::{Error, Result};

/// Calendar feature kinds. Every value is normalized as
/// `value / (cardinality - 1) - 0.5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimeFeature {
    SecondOfMinute,
    MinuteOfHour,
    HourOfDay,
    DayOfWeek,
    DayOfMonth,
    DayOfYear,
    WeekOfYear,
    MonthOfYear,
    Index,
}

impl TimeFeature {
    /// Global slot order used by the model's time projection.
    pub const SLOTS: [TimeFeature; 9] = [
        TimeFeature::SecondOfMinute,
        TimeFeature::MinuteOfHour,
        TimeFeature::HourOfDay,
        TimeFeature::DayOfWeek,
        TimeFeature::DayOfMonth,
        TimeFeature::DayOfYear,
        TimeFeature::WeekOfYear,
        TimeFeature::MonthOfYear,
        TimeFeature::Index,
    ];

    pub fn slot(self) -> usize {
        self as usize
    }

    /// Feature set for a frequency granularity.
    pub fn for_frequency(freq: Frequency) -> &'static [TimeFeature] {
        use TimeFeature::*;
        match freq.unit {
            FreqUnit::Seconds | FreqUnit::Minutes | FreqUnit::Hours => &[
                SecondOfMinute,
                MinuteOfHour,
                HourOfDay,
                DayOfWeek,
                DayOfMonth,
                DayOfYear,
            ],
            FreqUnit::Days => &[DayOfWeek, DayOfMonth, DayOfYear],
            FreqUnit::Weeks => &[WeekOfYear],
            FreqUnit::Months => &[MonthOfYear],
            FreqUnit::Quarters | FreqUnit::Years => &[Index],
        }
    }

    fn value(self, ts: &NaiveDateTime, row: usize, rows: usize) -> f64 {
        let (v, card) = match self {
            TimeFeature::SecondOfMinute => (ts.second() as f64, 60.0),
            TimeFeature::MinuteOfHour => (ts.minute() as f64, 60.0),
            TimeFeature::HourOfDay => (ts.hour() as f64, 24.0),
            TimeFeature::DayOfWeek => (ts.weekday().num_days_from_monday() as f64, 7.0),
            TimeFeature::DayOfMonth => (ts.day0() as f64, 31.0),
            TimeFeature::DayOfYear => (ts.ordinal0() as f64, 366.0),
            TimeFeature::WeekOfYear => ((ts.iso_week().week() - 1) as f64, 53.0),
            TimeFeature::MonthOfYear => (ts.month0() as f64, 12.0),
            TimeFeature::Index => (row as f64, rows.max(2) as f64),
        };
        v / (card - 1.0) - 0.5
    }
}

/// Row-major `(history + horizon) x kinds.len()` feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFeatureMatrix {
    pub kinds: Vec<TimeFeature>,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl TimeFeatureMatrix {
    pub fn cols(&self) -> usize {
        self.kinds.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, row: usize, kind: TimeFeature) -> Option<f64> {
        let col = self.kinds.iter().position(|&k| k == kind)?;
        Some(self.data[row * self.cols() + col])
    }

    /// Scatter into the fixed global slot layout (`TimeFeature::SLOTS`);
    /// absent features are zero.
    pub fn to_slots(&self) -> Vec<f64> {
        let n = TimeFeature::SLOTS.len();
        let mut out = vec![0.0; self.rows * n];
        for r in 0..self.rows {
            for (c, k) in self.kinds.iter().enumerate() {
                out[r * n + k.slot()] = self.data[r * self.cols() + c];
            }
        }
        out
    }

    /// Rows `[from, to)` as a new matrix.
    pub fn slice_rows(&self, from: usize, to: usize) -> Self {
        let c = self.cols();
        Self {
            kinds: self.kinds.clone(),
            rows: to - from,
            data: self.data[from * c..to * c].to_vec(),
        }
    }
}

/// Calendar features for `history_len + horizon` steps starting at `start`.
pub fn time_features(
    start: NaiveDateTime,
    freq: Frequency,
    history_len: usize,
    horizon: usize,
) -> Result<TimeFeatureMatrix> {
    let rows = history_len + horizon;
    if rows == 0 {
        return Err(Error::InvalidInput(
            "time features need at least one row".into(),
        ));
    }
    let kinds = TimeFeature::for_frequency(freq).to_vec();
    let mut data = Vec::with_capacity(rows * kinds.len());
    for r in 0..rows {
        let ts = freq.advance(start, r)?;
        for k in &kinds {
            data.push(k.value(&ts, r, rows));
        }
    }
    Ok(TimeFeatureMatrix { kinds, rows, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::default_start;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    #[test]
    fn hour_of_day_at_monday_midnight() {
        let m = time_features(default_start(), Frequency::HOURLY, 1, 0).unwrap();
        assert_eq!(m.rows, 1);
        assert_eq!(m.get(0, TimeFeature::HourOfDay), Some(-0.5));
        assert_eq!(m.get(0, TimeFeature::DayOfWeek), Some(-0.5));
    }

    #[test]
    fn rows_cover_history_and_horizon() {
        let m = time_features(default_start(), Frequency::DAILY, 3, 2).unwrap();
        assert_eq!(m.rows, 5);
        assert_eq!(m.cols(), 3);
        // Day of week walks Monday..Friday.
        let dow: Vec<f64> = (0..5).map(|r| m.get(r, TimeFeature::DayOfWeek).unwrap()).collect();
        for (i, v) in dow.iter().enumerate() {
            assert!((v - (i as f64 / 6.0 - 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_request_is_rejected() {
        assert!(time_features(default_start(), Frequency::HOURLY, 0, 0).is_err());
    }

    #[test]
    fn end_of_range_hits_upper_bound() {
        let ts = NaiveDate::from_ymd_opt(2020, 12, 31)
            .unwrap()
            .and_hms_opt(23, 59, 59)
            .unwrap();
        let f: Frequency = "S".parse().unwrap();
        let m = time_features(ts, f, 1, 0).unwrap();
        for k in [
            TimeFeature::SecondOfMinute,
            TimeFeature::MinuteOfHour,
            TimeFeature::HourOfDay,
            TimeFeature::DayOfYear,
        ] {
            assert_eq!(m.get(0, k), Some(0.5), "{k:?}");
        }
    }

    proptest! {
        #[test]
        fn entries_are_bounded(
            days in 0i64..20_000,
            secs in 0i64..86_400,
            unit in 0u8..8,
            mult in 1u32..30,
            hist in 0usize..40,
            hor in 1usize..20,
        ) {
            let start = default_start() + chrono::Duration::days(days) + chrono::Duration::seconds(secs);
            let freq = Frequency::new(FreqUnit::from_code(unit).unwrap(), mult).unwrap();
            let m = time_features(start, freq, hist, hor).unwrap();
            prop_assert_eq!(m.rows, hist + hor);
            prop_assert!(m.data.iter().all(|v| (-0.5..=0.5).contains(v)));
            let again = time_features(start, freq, hist, hor).unwrap();
            prop_assert_eq!(m, again);
        }
    }
}
