//! Forecast metrics, the seasonal-naive baseline, normalized reports and
//! the missing-value robustness sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::nan_inject;
use crate::error::{Error, Result};
use crate::model::network::pinball;
use crate::model::Model;
use crate::seed;
use crate::timeseries::TimeSeries;

/// One forecasting problem: a history, the values that followed it, and the
/// seasonal period used by the baseline and by MASE.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTask {
    pub id: String,
    pub history: TimeSeries,
    /// Non-finite entries are treated as missing.
    pub target: Vec<f64>,
    pub season: usize,
}

impl EvalTask {
    pub fn new(id: impl Into<String>, history: TimeSeries, target: Vec<f64>, season: usize) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::InvalidInput("task target must be nonempty".into()));
        }
        if season == 0 {
            return Err(Error::InvalidInput("season must be >= 1".into()));
        }
        Ok(Self {
            id: id.into(),
            history,
            target,
            season,
        })
    }

    /// Splits a series into history and the trailing `horizon` values.
    pub fn split(series: &TimeSeries, horizon: usize, season: usize) -> Result<Self> {
        if horizon == 0 || horizon >= series.len() {
            return Err(Error::InvalidInput(format!(
                "horizon {horizon} does not fit a series of length {}",
                series.len()
            )));
        }
        let cut = series.len() - horizon;
        let history = series.window(0, cut)?;
        let target = (cut..series.len())
            .map(|t| if series.mask[t] { series.values[t] } else { f64::NAN })
            .collect();
        Self::new(series.id.clone(), history, target, season)
    }

    pub fn horizon(&self) -> usize {
        self.target.len()
    }
}

/// `y[T+k] = y[T+k - m season]` for the smallest `m` that lands on an
/// observed history value; the last observed value when no such `m` exists.
pub fn seasonal_naive_forecast(history: &TimeSeries, season: usize, horizon: usize) -> Result<Vec<f64>> {
    let season = season.max(1);
    let last = (0..history.len())
        .rev()
        .find(|&i| history.mask[i])
        .map(|i| history.values[i])
        .ok_or(Error::EmptyObserved)?;
    let n = history.len();
    Ok((0..horizon)
        .map(|k| {
            let mut idx = n + k;
            while idx >= season {
                idx -= season;
                if idx < n && history.mask[idx] {
                    return history.values[idx];
                }
            }
            last
        })
        .collect())
}

/// In-sample MAE of the seasonal-naive rule over observed pairs.
pub fn seasonal_scale(history: &TimeSeries, season: usize) -> Result<f64> {
    let season = season.max(1);
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in season..history.len() {
        if history.mask[t] && history.mask[t - season] {
            sum += (history.values[t] - history.values[t - season]).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput(format!(
            "history has no observed pair at seasonal lag {season}"
        )));
    }
    let scale = sum / count as f64;
    if scale == 0.0 {
        return Err(Error::DegenerateSeasonalHistory);
    }
    Ok(scale)
}

/// Mean absolute error over finite targets divided by the seasonal scale.
pub fn mase(forecast: &[f64], target: &[f64], history: &TimeSeries, season: usize) -> Result<f64> {
    if forecast.len() != target.len() {
        return Err(Error::InvalidInput("forecast and target lengths differ".into()));
    }
    let scale = seasonal_scale(history, season)?;
    let (sum, n) = forecast
        .iter()
        .zip(target)
        .filter(|(_, y)| y.is_finite())
        .fold((0.0, 0usize), |(s, n), (f, y)| (s + (y - f).abs(), n + 1));
    if n == 0 {
        return Err(Error::InvalidInput("target has no finite values".into()));
    }
    Ok(sum / n as f64 / scale)
}

/// Summed quantile loss `(2/|Q|) sum_q rho_q` and summed `|y|` over the
/// finite targets of one forecast, plus the number of such targets.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuantileLossSum {
    pub loss: f64,
    pub abs_target: f64,
    pub count: usize,
}

pub fn quantile_loss_sum(pred: &[Vec<f64>], target: &[f64], quantiles: &[f64]) -> Result<QuantileLossSum> {
    if quantiles.is_empty() {
        return Err(Error::InvalidInput("quantile set is empty".into()));
    }
    if pred.len() != target.len() {
        return Err(Error::InvalidInput("prediction and target lengths differ".into()));
    }
    let mut out = QuantileLossSum::default();
    let w = 2.0 / quantiles.len() as f64;
    for (row, &y) in pred.iter().zip(target) {
        if row.len() != quantiles.len() {
            return Err(Error::InvalidInput("prediction row does not match the quantile set".into()));
        }
        if !y.is_finite() {
            continue;
        }
        out.loss += w * quantiles.iter().zip(row).map(|(q, p)| pinball(*q, y, *p)).sum::<f64>();
        out.abs_target += y.abs();
        out.count += 1;
    }
    Ok(out)
}

/// Mean over the horizon of `(2/|Q|) sum_q rho_q(y - y_q)`. Rows are
/// sorted before scoring.
pub fn crps_from_quantiles(pred: &[Vec<f64>], target: &[f64], quantiles: &[f64]) -> Result<f64> {
    let sorted: Vec<Vec<f64>> = pred
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.sort_by(|a, b| a.total_cmp(b));
            r
        })
        .collect();
    let s = quantile_loss_sum(&sorted, target, quantiles)?;
    if s.count == 0 {
        return Err(Error::InvalidInput("target has no finite values".into()));
    }
    Ok(s.loss / s.count as f64)
}

/// Anything that turns a task into quantile forecasts (`horizon` rows of
/// `quantiles().len()` values, in the data scale).
pub trait Forecaster: Sync {
    fn name(&self) -> String;
    fn quantiles(&self) -> &[f64];
    fn forecast(&self, task: &EvalTask) -> Result<Vec<Vec<f64>>>;
}

/// Point forecast from [`seasonal_naive_forecast`] repeated across every
/// quantile level.
#[derive(Clone, Debug, PartialEq)]
pub struct SeasonalNaive {
    pub quantiles: Vec<f64>,
}

impl Forecaster for SeasonalNaive {
    fn name(&self) -> String {
        "seasonal_naive".into()
    }

    fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    fn forecast(&self, task: &EvalTask) -> Result<Vec<Vec<f64>>> {
        let point = seasonal_naive_forecast(&task.history, task.season, task.horizon())?;
        Ok(point.into_iter().map(|v| vec![v; self.quantiles.len()]).collect())
    }
}

impl Forecaster for Model {
    fn name(&self) -> String {
        "model".into()
    }

    fn quantiles(&self) -> &[f64] {
        &self.config.quantiles
    }

    fn forecast(&self, task: &EvalTask) -> Result<Vec<Vec<f64>>> {
        Ok(self.predict(&task.history, task.horizon())?.values)
    }
}

/// Precomputed forecasts keyed by task id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StoredForecasts {
    pub quantiles: Vec<f64>,
    pub by_task: BTreeMap<String, Vec<Vec<f64>>>,
}

impl Forecaster for StoredForecasts {
    fn name(&self) -> String {
        "predictions".into()
    }

    fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    fn forecast(&self, task: &EvalTask) -> Result<Vec<Vec<f64>>> {
        let rows = self
            .by_task
            .get(&task.id)
            .ok_or_else(|| Error::InvalidInput(format!("no prediction for task '{}'", task.id)))?;
        if rows.len() != task.horizon() {
            return Err(Error::InvalidInput(format!(
                "prediction for task '{}' has {} steps, target has {}",
                task.id,
                rows.len(),
                task.horizon()
            )));
        }
        Ok(rows.clone())
    }
}

/// One JSON-Lines record of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub task_id: String,
    pub horizon: usize,
    pub quantiles: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskMetrics {
    pub id: String,
    pub season: usize,
    pub horizon: usize,
    pub crps: Option<f64>,
    pub mase: Option<f64>,
    pub loss: QuantileLossSum,
    pub error: Option<String>,
}

/// Dataset-level scores: CRPS is the summed quantile loss over the summed
/// `|y|`; MASE is the mean of per-task values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub crps: f64,
    pub mase: f64,
    pub tasks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub forecaster: String,
    pub tasks: Vec<TaskMetrics>,
    pub aggregate: Aggregate,
    pub baseline: Aggregate,
    /// `aggregate / baseline`, computed over tasks both scored.
    pub normalized: Aggregate,
}

fn score_task(f: &dyn Forecaster, task: &EvalTask) -> TaskMetrics {
    let mut m = TaskMetrics {
        id: task.id.clone(),
        season: task.season,
        horizon: task.horizon(),
        crps: None,
        mase: None,
        loss: QuantileLossSum::default(),
        error: None,
    };
    let pred = match f.forecast(task) {
        Ok(p) => p,
        Err(e) => {
            m.error = Some(e.to_string());
            return m;
        }
    };
    if pred.len() != task.horizon() || pred.iter().any(|r| r.len() != f.quantiles().len()) {
        m.error = Some("forecast shape does not match horizon and quantile set".into());
        return m;
    }
    let sorted: Vec<Vec<f64>> = pred
        .into_iter()
        .map(|mut r| {
            r.sort_by(|a, b| a.total_cmp(b));
            r
        })
        .collect();
    match quantile_loss_sum(&sorted, &task.target, f.quantiles()) {
        Ok(s) if s.count > 0 => {
            m.crps = Some(s.loss / s.count as f64);
            m.loss = s;
        }
        Ok(_) => m.error = Some("target has no finite values".into()),
        Err(e) => m.error = Some(e.to_string()),
    }
    let median = median_column(f.quantiles());
    let point: Vec<f64> = sorted.iter().map(|r| r[median]).collect();
    match mase(&point, &task.target, &task.history, task.season) {
        Ok(v) => m.mase = Some(v),
        Err(e) => {
            if m.error.is_none() {
                m.error = Some(e.to_string());
            }
        }
    }
    m
}

fn median_column(quantiles: &[f64]) -> usize {
    quantiles
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()))
        .map_or(0, |(j, _)| j)
}

/// Scores every task; results keep task order regardless of thread count.
pub fn score_tasks(f: &dyn Forecaster, tasks: &[EvalTask]) -> Vec<TaskMetrics> {
    tasks.par_iter().map(|t| score_task(f, t)).collect()
}

fn aggregate(rows: &[&TaskMetrics]) -> Aggregate {
    let mut loss = 0.0;
    let mut abs = 0.0;
    let mut mase_sum = 0.0;
    let mut mase_n = 0usize;
    let mut crps_mean = 0.0;
    let mut n = 0usize;
    for r in rows {
        if let Some(c) = r.crps {
            loss += r.loss.loss;
            abs += r.loss.abs_target;
            crps_mean += c;
            n += 1;
        }
        if let Some(m) = r.mase {
            mase_sum += m;
            mase_n += 1;
        }
    }
    let crps = if abs > 0.0 {
        loss / abs
    } else if n > 0 {
        crps_mean / n as f64
    } else {
        f64::NAN
    };
    Aggregate {
        crps,
        mase: if mase_n > 0 { mase_sum / mase_n as f64 } else { f64::NAN },
        tasks: n,
    }
}

/// Scores `f` and the seasonal-naive baseline on the same tasks.
pub fn evaluate(f: &dyn Forecaster, tasks: &[EvalTask]) -> Result<MetricReport> {
    if tasks.is_empty() {
        return Err(Error::InvalidInput("no evaluation tasks".into()));
    }
    let rows = score_tasks(f, tasks);
    let naive = SeasonalNaive {
        quantiles: f.quantiles().to_vec(),
    };
    let base_rows = score_tasks(&naive, tasks);
    Ok(report_from_rows(f.name(), rows, &base_rows))
}

fn report_from_rows(name: String, rows: Vec<TaskMetrics>, base_rows: &[TaskMetrics]) -> MetricReport {
    let all: Vec<&TaskMetrics> = rows.iter().collect();
    let agg = aggregate(&all);
    let base_all: Vec<&TaskMetrics> = base_rows.iter().collect();
    let baseline = aggregate(&base_all);
    // Pair up tasks both forecasters scored.
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y) in rows.iter().zip(base_rows) {
        let crps_ok = x.crps.is_some() && y.crps.is_some();
        let mase_ok = x.mase.is_some() && y.mase.is_some();
        if crps_ok || mase_ok {
            let keep = |r: &TaskMetrics| TaskMetrics {
                crps: r.crps.filter(|_| crps_ok),
                mase: r.mase.filter(|_| mase_ok),
                ..r.clone()
            };
            a.push(keep(x));
            b.push(keep(y));
        }
    }
    let pa = aggregate(&a.iter().collect::<Vec<_>>());
    let pb = aggregate(&b.iter().collect::<Vec<_>>());
    MetricReport {
        forecaster: name,
        tasks: rows,
        aggregate: agg,
        baseline,
        normalized: Aggregate {
            crps: pa.crps / pb.crps,
            mase: pa.mase / pb.mase,
            tasks: pa.tasks,
        },
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// `task_id,season,horizon,crps,mase` per task, then an aggregate row.
pub fn report_csv(r: &MetricReport) -> String {
    let mut s = String::from("task_id,season,horizon,crps,mase\n");
    for t in &r.tasks {
        let _ = writeln!(s, "{},{},{},{},{}", csv_field(&t.id), t.season, t.horizon, opt(t.crps), opt(t.mase));
    }
    let _ = writeln!(s, "aggregate,,,{},{}", r.aggregate.crps, r.aggregate.mase);
    s
}

/// One row per dataset with raw, baseline and normalized scores.
pub fn normalized_csv(rows: &[(String, MetricReport)]) -> String {
    let mut s = String::from("dataset,forecaster,tasks,crps,mase,baseline_crps,baseline_mase,crps_normalized,mase_normalized\n");
    for (name, r) in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(name),
            r.forecaster,
            r.tasks.len(),
            r.aggregate.crps,
            r.aggregate.mase,
            r.baseline.crps,
            r.baseline.mase,
            r.normalized.crps,
            r.normalized.mase
        );
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Failed tasks with their messages.
pub fn failures(r: &MetricReport) -> Vec<(&str, &str)> {
    r.tasks
        .iter()
        .filter_map(|t| t.error.as_deref().map(|e| (t.id.as_str(), e)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub fraction: f64,
    pub crps: f64,
    pub crps_normalized: f64,
    /// Realized share of missing history values.
    pub missing: f64,
}

/// Aggregate CRPS with a share `fraction` of every history replaced by
/// missing values, relative to the clean histories. Each fraction uses its
/// own fixed random stream.
pub fn nan_robustness_curve(f: &dyn Forecaster, tasks: &[EvalTask], fractions: &[f64], seed_value: u64) -> Result<Vec<CurvePoint>> {
    if tasks.is_empty() {
        return Err(Error::InvalidInput("no evaluation tasks".into()));
    }
    if let Some(bad) = fractions.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("fraction {bad} is outside [0, 1)")));
    }
    let clean_crps = |ts: &[EvalTask]| {
        let rows = score_tasks(f, ts);
        aggregate(&rows.iter().collect::<Vec<_>>()).crps
    };
    let reference = clean_crps(tasks);
    fractions
        .iter()
        .map(|&p| {
            let (crps, missing) = if p == 0.0 {
                (reference, 0.0)
            } else {
                let stream = format!("nan-sweep/{:016x}", p.to_bits());
                let injected = tasks
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let mut rng = seed::rng_for(seed_value, &stream, i as u64);
                        let inj = nan_inject(&t.history, &mut rng, p, 0.0, 1.0, None)?;
                        Ok((EvalTask { history: inj.series, ..t.clone() }, inj.missing_fraction))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let missing = injected.iter().map(|(_, m)| m).sum::<f64>() / injected.len() as f64;
                let ts: Vec<EvalTask> = injected.into_iter().map(|(t, _)| t).collect();
                (clean_crps(&ts), missing)
            };
            Ok(CurvePoint {
                fraction: p,
                crps,
                crps_normalized: crps / reference,
                missing,
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("fraction,crps,crps_normalized\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.fraction, p.crps, p.crps_normalized);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::Frequency;
    use proptest::prelude::*;

    fn series(v: &[f64]) -> TimeSeries {
        TimeSeries::from_values(v.to_vec(), Frequency::DAILY).unwrap()
    }

    #[test]
    fn seasonal_naive_examples() {
        assert_eq!(seasonal_naive_forecast(&series(&[1.0, 2.0, 3.0, 4.0]), 2, 3).unwrap(), vec![3.0, 4.0, 3.0]);
        assert_eq!(seasonal_naive_forecast(&series(&[1.0, 2.0, 5.0]), 1, 4).unwrap(), vec![5.0; 4]);
        assert!(seasonal_naive_forecast(&series(&[1.0]), 3, 0).unwrap().is_empty());
        assert_eq!(seasonal_naive_forecast(&series(&[1.0, 2.0]), 5, 2).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn seasonal_naive_skips_missing() {
        let h = TimeSeries::with_mask(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![true, true, false, true],
            crate::timeseries::default_start(),
            Frequency::DAILY,
        )
        .unwrap();
        assert_eq!(seasonal_naive_forecast(&h, 2, 1).unwrap(), vec![1.0]);
        let empty = TimeSeries::with_mask(vec![0.0; 3], vec![false; 3], crate::timeseries::default_start(), Frequency::DAILY).unwrap();
        assert!(matches!(seasonal_naive_forecast(&empty, 1, 1), Err(Error::EmptyObserved)));
    }

    #[test]
    fn mase_examples() {
        let h = series(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(mase(&[2.0, 4.0], &[3.0, 3.0], &h, 2).unwrap(), 1.0);
        assert_eq!(mase(&[3.0, 3.0], &[3.0, 3.0], &h, 2).unwrap(), 0.0);
        assert!(matches!(
            mase(&[1.0], &[1.0], &series(&[1.0; 4]), 2),
            Err(Error::DegenerateSeasonalHistory)
        ));
    }

    #[test]
    fn crps_examples() {
        assert_eq!(crps_from_quantiles(&[vec![0.0]], &[1.0], &[0.5]).unwrap(), 1.0);
        let q: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        // Oracle: (2/9) * sum of q for an all-zero forecast of 1.
        let oracle = 2.0 / 9.0 * q.iter().sum::<f64>();
        let got = crps_from_quantiles(&[vec![0.0; 9]], &[1.0], &q).unwrap();
        assert!((got - oracle).abs() < 1e-15 && (got - 1.0).abs() < 1e-15);
        assert_eq!(crps_from_quantiles(&[vec![2.0; 9]], &[2.0], &q).unwrap(), 0.0);
    }

    fn tasks(n: usize) -> Vec<EvalTask> {
        (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..40).map(|t| ((t * (i + 2)) % 7) as f64 + 0.1 * t as f64).collect();
                EvalTask::split(&series(&v).with_id(format!("t{i}")), 6, 7).unwrap()
            })
            .collect()
    }

    #[test]
    fn baseline_against_itself_is_one() {
        let naive = SeasonalNaive { quantiles: vec![0.1, 0.5, 0.9] };
        let r = evaluate(&naive, &tasks(5)).unwrap();
        assert_eq!(r.normalized.crps, 1.0);
        assert_eq!(r.normalized.mase, 1.0);
        assert_eq!(r.tasks.len(), 5);
    }

    #[test]
    fn oracle_predictions_score_zero() {
        let ts = tasks(4);
        let q = vec![0.1, 0.5, 0.9];
        let by_task = ts.iter().map(|t| (t.id.clone(), t.target.iter().map(|y| vec![*y; 3]).collect())).collect();
        let r = evaluate(&StoredForecasts { quantiles: q, by_task }, &ts).unwrap();
        assert!(r.tasks.iter().all(|t| t.crps == Some(0.0) && t.mase == Some(0.0)));
        assert_eq!(r.aggregate.crps, 0.0);
    }

    #[test]
    fn failures_are_recorded() {
        let ts = tasks(3);
        let mut by_task = BTreeMap::new();
        by_task.insert("t0".to_string(), vec![vec![0.0]; 6]);
        let r = evaluate(&StoredForecasts { quantiles: vec![0.5], by_task }, &ts).unwrap();
        assert_eq!(failures(&r).len(), 2);
        assert!(r.tasks[0].crps.is_some());
    }

    #[test]
    fn report_csv_shape() {
        let naive = SeasonalNaive { quantiles: vec![0.5] };
        let r = evaluate(&naive, &tasks(3)).unwrap();
        let csv = report_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "task_id,season,horizon,crps,mase");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("aggregate,,,"));
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 5));
        let n = normalized_csv(&[("toy".into(), r)]);
        assert!(n.lines().nth(1).unwrap().ends_with(",1,1"));
    }

    #[test]
    fn nan_curve_contracts() {
        let naive = SeasonalNaive { quantiles: vec![0.1, 0.5, 0.9] };
        let ts = tasks(6);
        let c = nan_robustness_curve(&naive, &ts, &[0.0, 0.3, 0.6], 4).unwrap();
        assert_eq!(c[0].crps_normalized, 1.0);
        assert_eq!(c.iter().map(|p| p.fraction).collect::<Vec<_>>(), vec![0.0, 0.3, 0.6]);
        assert!(c[2].missing > c[1].missing);
        assert_eq!(c, nan_robustness_curve(&naive, &ts, &[0.0, 0.3, 0.6], 4).unwrap());
        assert!(nan_robustness_curve(&naive, &ts, &[1.0], 4).is_err());
        assert_eq!(curve_csv(&c).lines().next().unwrap(), "fraction,crps,crps_normalized");
    }

    proptest! {
        #[test]
        fn median_crps_is_mae(pred in prop::collection::vec(-50.0f64..50.0, 1..20), shift in -5.0f64..5.0) {
            let target: Vec<f64> = pred.iter().enumerate().map(|(i, p)| p + (i as f64 - 3.0) * shift).collect();
            let rows: Vec<Vec<f64>> = pred.iter().map(|p| vec![*p]).collect();
            let crps = crps_from_quantiles(&rows, &target, &[0.5]).unwrap();
            let mae = pred.iter().zip(&target).map(|(p, y)| (p - y).abs()).sum::<f64>() / pred.len() as f64;
            prop_assert!((crps - mae).abs() <= 1e-12 * (1.0 + mae));
        }

        #[test]
        fn crps_shift_invariant(pred in prop::collection::vec(-10.0f64..10.0, 3), y in -10.0f64..10.0, c in -100.0f64..100.0) {
            let q = [0.1, 0.5, 0.9];
            let a = crps_from_quantiles(&[pred.clone()], &[y], &q).unwrap();
            let shifted: Vec<f64> = pred.iter().map(|p| p + c).collect();
            let b = crps_from_quantiles(&[shifted], &[y + c], &q).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
        }

        #[test]
        fn mase_scale_invariant(hist in prop::collection::vec(-10.0f64..10.0, 6..30), c in 0.01f64..100.0) {
            let season = 2;
            let h = series(&hist);
            prop_assume!(seasonal_scale(&h, season).is_ok());
            let f = [hist[0], hist[1]];
            let y = [hist[2] + 1.0, hist[3] - 1.0];
            let a = mase(&f, &y, &h, season).unwrap();
            let hs = series(&hist.iter().map(|v| v * c).collect::<Vec<_>>());
            let b = mase(&[f[0] * c, f[1] * c], &[y[0] * c, y[1] * c], &hs, season).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }
}
