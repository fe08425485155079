//! Canonical univariate series representation shared by every other module.

mod dataset;
mod features;
mod scaler;

pub use dataset::{read_dataset, write_dataset, DatasetFormat};
pub use features::{time_features, TimeFeature, TimeFeatureMatrix};
pub use scaler::{Scaler, ScalerKind};

use std::fmt;
use std::str::FromStr;

use chrono::{Duration, Months, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FreqUnit {
    Seconds,
    Minutes,
    Hours,
    Days,
    Weeks,
    Months,
    Quarters,
    Years,
}

impl FreqUnit {
    pub const ALL: [FreqUnit; 8] = [
        FreqUnit::Seconds,
        FreqUnit::Minutes,
        FreqUnit::Hours,
        FreqUnit::Days,
        FreqUnit::Weeks,
        FreqUnit::Months,
        FreqUnit::Quarters,
        FreqUnit::Years,
    ];

    fn symbol(self) -> &'static str {
        match self {
            FreqUnit::Seconds => "S",
            FreqUnit::Minutes => "T",
            FreqUnit::Hours => "H",
            FreqUnit::Days => "D",
            FreqUnit::Weeks => "W",
            FreqUnit::Months => "M",
            FreqUnit::Quarters => "Q",
            FreqUnit::Years => "A",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    fn seconds(self) -> Option<i64> {
        match self {
            FreqUnit::Seconds => Some(1),
            FreqUnit::Minutes => Some(60),
            FreqUnit::Hours => Some(3600),
            FreqUnit::Days => Some(86_400),
            FreqUnit::Weeks => Some(7 * 86_400),
            _ => None,
        }
    }

    /// True for units strictly finer than one day.
    pub fn is_sub_daily(self) -> bool {
        matches!(self, FreqUnit::Seconds | FreqUnit::Minutes | FreqUnit::Hours)
    }
}

/// Sampling frequency: a calendar unit times a positive multiple (`15T`, `H`, `10S`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Frequency {
    pub unit: FreqUnit,
    pub multiple: u32,
}

impl Frequency {
    pub fn new(unit: FreqUnit, multiple: u32) -> Result<Self> {
        if multiple == 0 {
            return Err(Error::InvalidInput("frequency multiple must be >= 1".into()));
        }
        Ok(Self { unit, multiple })
    }

    pub const fn of(unit: FreqUnit) -> Self {
        Self { unit, multiple: 1 }
    }

    pub const HOURLY: Frequency = Frequency::of(FreqUnit::Hours);
    pub const DAILY: Frequency = Frequency::of(FreqUnit::Days);

    /// Seasonal period used by the seasonal-naive baseline and the MASE
    /// denominator. Callers cap it at the available history.
    pub fn seasonal_period(&self) -> usize {
        let m = self.multiple as usize;
        let per = |cycle: usize| (cycle / m).max(1);
        match self.unit {
            FreqUnit::Seconds => per(86_400),
            FreqUnit::Minutes => per(1_440),
            FreqUnit::Hours => per(24),
            FreqUnit::Days => per(7),
            FreqUnit::Weeks => per(52),
            FreqUnit::Months => per(12),
            FreqUnit::Quarters => per(4),
            FreqUnit::Years => 1,
        }
    }

    /// Timestamp of step `steps` after `start`.
    pub fn advance(&self, start: NaiveDateTime, steps: usize) -> Result<NaiveDateTime> {
        let overflow = || Error::TimeOverflow { steps };
        let n = (steps as i64)
            .checked_mul(self.multiple as i64)
            .ok_or_else(overflow)?;
        match self.unit.seconds() {
            Some(s) => {
                let secs = n.checked_mul(s).ok_or_else(overflow)?;
                let d = Duration::try_seconds(secs).ok_or_else(overflow)?;
                start.checked_add_signed(d).ok_or_else(overflow)
            }
            None => {
                let months = match self.unit {
                    FreqUnit::Months => n,
                    FreqUnit::Quarters => n.checked_mul(3).ok_or_else(overflow)?,
                    _ => n.checked_mul(12).ok_or_else(overflow)?,
                };
                let months = u32::try_from(months).map_err(|_| overflow())?;
                start
                    .checked_add_months(Months::new(months))
                    .ok_or_else(overflow)
            }
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.multiple != 1 {
            write!(f, "{}", self.multiple)?;
        }
        f.write_str(self.unit.symbol())
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let multiple = if num.is_empty() {
            1
        } else {
            num.parse::<u32>()
                .map_err(|_| Error::InvalidInput(format!("bad frequency multiple in {s:?}")))?
        };
        let unit = match unit {
            "S" | "s" => FreqUnit::Seconds,
            "T" | "min" => FreqUnit::Minutes,
            "H" | "h" => FreqUnit::Hours,
            "D" => FreqUnit::Days,
            "W" | "W-SUN" => FreqUnit::Weeks,
            "M" | "MS" | "ME" => FreqUnit::Months,
            "Q" | "QS" | "QE" => FreqUnit::Quarters,
            "A" | "Y" | "YE" | "AS" => FreqUnit::Years,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown frequency unit {other:?} in {s:?}"
                )))
            }
        };
        Frequency::new(unit, multiple)
    }
}

impl Serialize for Frequency {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Frequency {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Default start used by generators: 2020-01-06 00:00 (a Monday).
pub fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2020, 1, 6)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid constant date")
}

/// A univariate series with an explicit observation mask.
///
/// Missing positions hold `0.0` in `values` and must never be read as data.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub start: NaiveDateTime,
    pub freq: Frequency,
    pub id: String,
    pub provenance: String,
}

impl TimeSeries {
    /// Fully observed series. Fails on non-finite values.
    pub fn new(values: Vec<f64>, start: NaiveDateTime, freq: Frequency) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::with_mask(values, mask, start, freq)
    }

    pub fn with_mask(
        mut values: Vec<f64>,
        mask: Vec<bool>,
        start: NaiveDateTime,
        freq: Frequency,
    ) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::InvalidInput(format!(
                "values ({}) and mask ({}) lengths differ",
                values.len(),
                mask.len()
            )));
        }
        for (i, (v, &m)) in values.iter_mut().zip(&mask).enumerate() {
            if !m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::NonFinite(format!("series value at index {i}")));
            }
        }
        Ok(Self {
            values,
            mask,
            start,
            freq,
            id: String::new(),
            provenance: String::new(),
        })
    }

    /// Builds a series from a generator output using the default start.
    pub fn from_values(values: Vec<f64>, freq: Frequency) -> Result<Self> {
        Self::new(values, default_start(), freq)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observed(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .collect()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        1.0 - self.observed_count() as f64 / self.len() as f64
    }

    /// Same metadata, new values (all observed).
    /// Same metadata with new values. The mask is kept when the length is
    /// unchanged (missing positions are zeroed), otherwise all observed.
    pub fn replace_values(&self, mut values: Vec<f64>) -> Self {
        let n = values.len();
        let mask = if n == self.len() {
            for (v, m) in values.iter_mut().zip(&self.mask) {
                if !m {
                    *v = 0.0;
                }
            }
            self.mask.clone()
        } else {
            vec![true; n]
        };
        Self {
            values,
            mask,
            start: self.start,
            freq: self.freq,
            id: self.id.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Contiguous window `[from, from + len)`, rebasing the start timestamp.
    pub fn window(&self, from: usize, len: usize) -> Result<Self> {
        let start = self.freq.advance(self.start, from)?;
        Ok(Self {
            values: self.values[from..from + len].to_vec(),
            mask: self.mask[from..from + len].to_vec(),
            start,
            freq: self.freq,
            id: self.id.clone(),
            provenance: self.provenance.clone(),
        })
    }

    pub fn timestamps(&self) -> Result<Vec<NaiveDateTime>> {
        (0..self.len())
            .map(|i| self.freq.advance(self.start, i))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seasonal_periods() {
        let p = |s: &str| s.parse::<Frequency>().unwrap().seasonal_period();
        assert_eq!(p("H"), 24);
        assert_eq!(p("D"), 7);
        assert_eq!(p("W"), 52);
        assert_eq!(p("M"), 12);
        assert_eq!(p("Q"), 4);
        assert_eq!(p("A"), 1);
        assert_eq!(p("15T"), 96);
        assert_eq!(p("5T"), 288);
        assert_eq!(p("10S"), 8640);
    }

    #[test]
    fn frequency_strings_round_trip() {
        for s in ["15T", "H", "D", "W", "M", "Q", "A", "10S", "5T"] {
            let f: Frequency = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("0H".parse::<Frequency>().is_err());
        assert!("X".parse::<Frequency>().is_err());
    }

    #[test]
    fn calendar_advance() {
        let start = NaiveDate::from_ymd_opt(2021, 1, 31)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let m = Frequency::of(FreqUnit::Months);
        assert_eq!(
            m.advance(start, 1).unwrap().date(),
            NaiveDate::from_ymd_opt(2021, 2, 28).unwrap()
        );
        let q15: Frequency = "15T".parse().unwrap();
        assert_eq!(
            q15.advance(start, 4).unwrap(),
            start + Duration::hours(1)
        );
        assert!(matches!(
            Frequency::of(FreqUnit::Years).advance(start, usize::MAX / 2),
            Err(Error::TimeOverflow { .. })
        ));
    }

    #[test]
    fn mask_and_values_must_agree() {
        let r = TimeSeries::with_mask(vec![1.0], vec![true, false], default_start(), Frequency::HOURLY);
        assert!(r.is_err());
        let r = TimeSeries::new(vec![f64::INFINITY], default_start(), Frequency::HOURLY);
        assert!(r.is_err());
        // Non-finite payload at a missing position is zeroed, not rejected.
        let s = TimeSeries::with_mask(
            vec![1.0, f64::NAN],
            vec![true, false],
            default_start(),
            Frequency::HOURLY,
        )
        .unwrap();
        assert_eq!(s.values, vec![1.0, 0.0]);
        assert_eq!(s.observed(), vec![1.0]);
    }
}
