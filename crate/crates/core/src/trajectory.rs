//! Time-stamped gap trajectories and the metrics computed over them.
//!
//! A solver run is recorded as a sequence of `(time, gap)` events. Folding the
//! raw events gives the incumbent (best-so-far) trajectory, a right-continuous
//! step function on `[0, T]`. All metrics below integrate that step function
//! exactly; no interpolation other than piecewise-constant is ever applied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default numerical floor applied before taking logarithms of a gap.
pub const DEFAULT_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("negative or non-finite time {0}")]
    BadTime(f64),
    #[error("negative or non-finite gap {0}")]
    BadGap(f64),
    #[error("first trace point must be at time 0, got {0}")]
    FirstNotAtZero(f64),
    #[error("trace times decrease at index {0}")]
    Unordered(usize),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("floor must be positive and finite, got {0}")]
    BadFloor(f64),
    #[error("trace horizon {trace} differs from metric horizon {metric}")]
    HorizonMismatch { trace: f64, metric: f64 },
    #[error("invalid incumbent trace: {0}")]
    NotIncumbent(&'static str),
}

/// One recorded event: elapsed seconds and the relative gap (a fraction, not percent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    #[serde(rename = "t")]
    pub time: f64,
    pub gap: f64,
}

impl TracePoint {
    pub fn new(time: f64, gap: f64) -> Result<Self, TraceError> {
        let p = Self { time, gap };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<(), TraceError> {
        if !self.time.is_finite() || self.time < 0.0 {
            return Err(TraceError::BadTime(self.time));
        }
        if !self.gap.is_finite() || self.gap < 0.0 {
            return Err(TraceError::BadGap(self.gap));
        }
        Ok(())
    }
}

/// Metric parameters: the log floor and the evaluation horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    floor: f64,
    horizon: f64,
}

impl MetricConfig {
    pub fn new(floor: f64, horizon: f64) -> Result<Self, TraceError> {
        if !(floor.is_finite() && floor > 0.0) {
            return Err(TraceError::BadFloor(floor));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(TraceError::BadHorizon(horizon));
        }
        Ok(Self { floor, horizon })
    }

    pub fn with_horizon(horizon: f64) -> Result<Self, TraceError> {
        Self::new(DEFAULT_FLOOR, horizon)
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Monotone best-so-far trajectory over `[0, horizon]`.
///
/// Points have strictly increasing times starting at 0 and strictly decreasing
/// gaps; the last value holds until the horizon. `end_time` is when the run
/// actually stopped, which may be before the horizon (or slightly after it when
/// the final pass overran the budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncumbentTrace {
    points: Vec<TracePoint>,
    horizon: f64,
    end_time: f64,
}

impl IncumbentTrace {
    /// Rebuilds a trace from already-folded parts, validating every invariant.
    pub fn from_parts(
        points: Vec<TracePoint>,
        horizon: f64,
        end_time: f64,
    ) -> Result<Self, TraceError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(TraceError::BadHorizon(horizon));
        }
        if !end_time.is_finite() || end_time < 0.0 {
            return Err(TraceError::BadTime(end_time));
        }
        let first = points.first().ok_or(TraceError::Empty)?;
        if first.time != 0.0 {
            return Err(TraceError::FirstNotAtZero(first.time));
        }
        for (i, w) in points.windows(2).enumerate() {
            w[1].check()?;
            if w[1].time <= w[0].time {
                return Err(TraceError::Unordered(i + 1));
            }
            if w[1].gap >= w[0].gap {
                return Err(TraceError::NotIncumbent("gaps must strictly decrease"));
            }
        }
        first.check()?;
        if points.last().map(|p| p.time > horizon).unwrap_or(false) {
            return Err(TraceError::NotIncumbent("point beyond horizon"));
        }
        Ok(Self {
            points,
            horizon,
            end_time,
        })
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn initial_gap(&self) -> f64 {
        self.points[0].gap
    }

    pub fn final_gap(&self) -> f64 {
        self.points[self.points.len() - 1].gap
    }

    /// `ℓ(0)`, the floored log of the initial gap.
    pub fn initial_log_residual(&self, floor: f64) -> f64 {
        self.initial_gap().max(floor).ln()
    }

    /// Incumbent gap in effect at time `t` (right-continuous).
    pub fn gap_at(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.time <= t);
        self.points[idx.saturating_sub(1)].gap
    }

    /// Segment iterator: `(gap, duration)` for each constant piece on `[0, T]`.
    fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| {
            let start = self.points[i].time;
            let end = if i + 1 < n {
                self.points[i + 1].time
            } else {
                self.horizon
            };
            (self.points[i].gap, end - start)
        })
    }

    fn check_horizon(&self, cfg: &MetricConfig) -> Result<(), TraceError> {
        if self.horizon != cfg.horizon {
            return Err(TraceError::HorizonMismatch {
                trace: self.horizon,
                metric: cfg.horizon,
            });
        }
        Ok(())
    }

    /// Same incumbent evaluated under a different horizon. Points beyond the new
    /// horizon are dropped; the last surviving value extends to it.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self, TraceError> {
        fold_incumbent(&self.points, horizon).map(|mut t| {
            t.end_time = self.end_time;
            t
        })
    }
}

/// Serialized trace file: points plus the horizon and floor they were scored with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub points: Vec<TracePoint>,
    pub horizon: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<f64>,
}

impl TraceFile {
    pub fn from_trace(trace: &IncumbentTrace, cfg: &MetricConfig) -> Self {
        Self {
            points: trace.points.clone(),
            horizon: trace.horizon,
            delta: cfg.floor,
            end_time: Some(trace.end_time),
        }
    }

    pub fn into_trace(self) -> Result<(IncumbentTrace, MetricConfig), TraceError> {
        let cfg = MetricConfig::new(self.delta, self.horizon)?;
        let end = self
            .end_time
            .unwrap_or_else(|| self.points.last().map(|p| p.time).unwrap_or(0.0));
        let trace = IncumbentTrace::from_parts(self.points, self.horizon, end)?;
        Ok((trace, cfg))
    }
}

/// Folds raw run events into the incumbent trajectory over `[0, horizon]`.
///
/// Only strict improvements of the running minimum survive. Two events at the
/// same timestamp collapse into the later (better) one. Events after the
/// horizon lie outside the evaluation window and are ignored.
pub fn fold_incumbent(raw: &[TracePoint], horizon: f64) -> Result<IncumbentTrace, TraceError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(TraceError::BadHorizon(horizon));
    }
    let first = raw.first().ok_or(TraceError::Empty)?;
    for p in raw {
        p.check()?;
    }
    if first.time != 0.0 {
        return Err(TraceError::FirstNotAtZero(first.time));
    }
    if let Some(i) = raw.windows(2).position(|w| w[1].time < w[0].time) {
        return Err(TraceError::Unordered(i + 1));
    }

    let mut points = vec![*first];
    for p in &raw[1..] {
        if p.time > horizon {
            break;
        }
        let last = points.last_mut().expect("non-empty");
        if p.gap < last.gap {
            if p.time == last.time {
                last.gap = p.gap;
            } else {
                points.push(*p);
            }
        }
    }
    let end_time = raw[raw.len() - 1].time;
    Ok(IncumbentTrace {
        points,
        horizon,
        end_time,
    })
}

/// `ln(max(gap, δ))`.
pub fn log_residual(gap: f64, cfg: &MetricConfig) -> Result<f64, TraceError> {
    if !gap.is_finite() || gap < 0.0 {
        return Err(TraceError::BadGap(gap));
    }
    Ok(gap.max(cfg.floor).ln())
}

fn floored_ln(gap: f64, floor: f64) -> f64 {
    gap.max(floor).ln()
}

/// Time-averaged log-residual `Ĵ(T)` over the piecewise-constant incumbent.
pub fn time_avg_log_residual(trace: &IncumbentTrace, cfg: &MetricConfig) -> Result<f64, TraceError> {
    trace.check_horizon(cfg)?;
    let integral: f64 = trace
        .segments()
        .map(|(gap, dt)| floored_ln(gap, cfg.floor) * dt)
        .sum();
    Ok(integral / cfg.horizon)
}

/// Trajectory-aware decay rate anchored at the trace's own first point.
pub fn tldr(trace: &IncumbentTrace, cfg: &MetricConfig) -> Result<f64, TraceError> {
    let anchor = trace.initial_log_residual(cfg.floor);
    tldr_anchored(trace, cfg, anchor)
}

/// Decay rate `(2/T)(ℓ₀ − Ĵ(T))` with an externally supplied `ℓ₀`.
///
/// Evaluated as `(2/T²) Σ (ℓ₀ − ℓᵢ) Δτᵢ`, a sum of non-negative terms whenever
/// `ℓ₀` is at least the first log-residual, so the result cannot dip below zero
/// through rounding.
pub fn tldr_anchored(
    trace: &IncumbentTrace,
    cfg: &MetricConfig,
    anchor: f64,
) -> Result<f64, TraceError> {
    trace.check_horizon(cfg)?;
    let t = cfg.horizon;
    let excess: f64 = trace
        .segments()
        .map(|(gap, dt)| (anchor - floored_ln(gap, cfg.floor)) * dt)
        .sum();
    Ok(2.0 * excess / (t * t))
}

/// Log-residual of the incumbent at the horizon.
pub fn terminal_log_residual(trace: &IncumbentTrace, cfg: &MetricConfig) -> Result<f64, TraceError> {
    trace.check_horizon(cfg)?;
    Ok(floored_ln(trace.final_gap(), cfg.floor))
}

/// Comparison metrics used when studying alternatives to the decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltMetrics {
    /// Actual run end time in seconds.
    pub terminal_time: f64,
    /// First time the incumbent reaches a tenth of its initial gap, or `T`.
    pub time_to_10pct: f64,
    /// `(1/T) ∫ gap dτ` in linear space.
    pub linear_auc: f64,
}

pub fn alt_metrics(trace: &IncumbentTrace, cfg: &MetricConfig) -> Result<AltMetrics, TraceError> {
    trace.check_horizon(cfg)?;
    let threshold = 0.1 * trace.initial_gap();
    let time_to_10pct = trace
        .points
        .iter()
        .find(|p| p.gap <= threshold)
        .map(|p| p.time)
        .unwrap_or(cfg.horizon);
    let area: f64 = trace.segments().map(|(gap, dt)| gap * dt).sum();
    Ok(AltMetrics {
        terminal_time: trace.end_time,
        time_to_10pct,
        linear_auc: area / cfg.horizon,
    })
}

/// Every metric of one trace, as consumed by evaluation and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub terminal_log_residual: f64,
    pub time_avg_log_residual: f64,
    pub tldr: f64,
    pub alt: AltMetrics,
    /// The initial construction was already optimal; the decay rate is 0 by convention.
    pub solved_at_start: bool,
}

pub fn summarize(trace: &IncumbentTrace, cfg: &MetricConfig) -> Result<TraceSummary, TraceError> {
    Ok(TraceSummary {
        terminal_log_residual: terminal_log_residual(trace, cfg)?,
        time_avg_log_residual: time_avg_log_residual(trace, cfg)?,
        tldr: tldr(trace, cfg)?,
        alt: alt_metrics(trace, cfg)?,
        solved_at_start: trace.initial_gap() == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<TracePoint> {
        v.iter().map(|&(t, g)| TracePoint::new(t, g).unwrap()).collect()
    }

    fn pairs(trace: &IncumbentTrace) -> Vec<(f64, f64)> {
        trace.points().iter().map(|p| (p.time, p.gap)).collect()
    }

    #[test]
    fn fold_keeps_running_minimum() {
        let tr = fold_incumbent(&pts(&[(0.0, 1.0), (1.0, 1.2), (2.0, 0.5), (3.0, 0.7)]), 10.0).unwrap();
        assert_eq!(pairs(&tr), vec![(0.0, 1.0), (2.0, 0.5)]);
        assert_eq!(tr.end_time(), 3.0);
        assert_eq!(tr.gap_at(9.9), 0.5);
    }

    #[test]
    fn fold_single_point_and_ties() {
        let tr = fold_incumbent(&pts(&[(0.0, 0.3)]), 5.0).unwrap();
        assert_eq!(pairs(&tr), vec![(0.0, 0.3)]);
        assert_eq!(tr.gap_at(5.0), 0.3);

        let tr = fold_incumbent(&pts(&[(0.0, 1.0), (1.0, 0.9), (2.0, 0.9)]), 5.0).unwrap();
        assert_eq!(pairs(&tr), vec![(0.0, 1.0), (1.0, 0.9)]);
    }

    #[test]
    fn fold_rejects_bad_input() {
        assert_eq!(fold_incumbent(&[], 1.0), Err(TraceError::Empty));
        let raw = vec![TracePoint { time: 1.0, gap: 0.5 }];
        assert_eq!(fold_incumbent(&raw, 2.0), Err(TraceError::FirstNotAtZero(1.0)));
        let raw = vec![TracePoint { time: 0.0, gap: 0.5 }, TracePoint { time: -1.0, gap: 0.1 }];
        assert_eq!(fold_incumbent(&raw, 2.0), Err(TraceError::BadTime(-1.0)));
        assert!(TracePoint::new(0.0, -0.1).is_err());
        let raw = pts(&[(0.0, 1.0), (2.0, 0.5), (1.0, 0.2)]);
        assert_eq!(fold_incumbent(&raw, 5.0), Err(TraceError::Unordered(2)));
    }

    #[test]
    fn fold_ignores_events_past_horizon() {
        let tr = fold_incumbent(&pts(&[(0.0, 1.0), (1.0, 0.5), (4.0, 0.1)]), 3.0).unwrap();
        assert_eq!(pairs(&tr), vec![(0.0, 1.0), (1.0, 0.5)]);
        assert_eq!(tr.end_time(), 4.0);
    }

    #[test]
    fn log_residual_examples() {
        let cfg = MetricConfig::with_horizon(1.0).unwrap();
        assert_abs_diff_eq!(log_residual(0.1, &cfg).unwrap(), -std::f64::consts::LN_10, epsilon = 1e-12);
        assert_abs_diff_eq!(log_residual(0.0, &cfg).unwrap(), -20.72327, epsilon = 1e-5);
        assert_eq!(log_residual(1.0, &cfg).unwrap(), 0.0);
        assert!(log_residual(-0.5, &cfg).is_err());
    }

    #[test]
    fn time_average_examples() {
        let cfg = MetricConfig::with_horizon(10.0).unwrap();
        let tr = fold_incumbent(&pts(&[(0.0, 0.1)]), 10.0).unwrap();
        assert_abs_diff_eq!(time_avg_log_residual(&tr, &cfg).unwrap(), 0.1f64.ln(), epsilon = 1e-12);

        let tr = fold_incumbent(&pts(&[(0.0, 0.1), (5.0, 0.01)]), 10.0).unwrap();
        assert_abs_diff_eq!(time_avg_log_residual(&tr, &cfg).unwrap(), -3.4538776, epsilon = 1e-6);

        let tr = fold_incumbent(&pts(&[(0.0, 1.0), (10.0, 0.5)]), 10.0).unwrap();
        assert_abs_diff_eq!(time_avg_log_residual(&tr, &cfg).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tldr_examples() {
        let cfg = MetricConfig::with_horizon(10.0).unwrap();
        let flat = fold_incumbent(&pts(&[(0.0, 0.1)]), 10.0).unwrap();
        assert_eq!(tldr(&flat, &cfg).unwrap(), 0.0);

        let two = fold_incumbent(&pts(&[(0.0, 0.1), (5.0, 0.01)]), 10.0).unwrap();
        assert_abs_diff_eq!(tldr(&two, &cfg).unwrap(), 0.2302585, epsilon = 1e-6);

        // dense exact-log-linear trace: bias of the left-endpoint rule is k/N
        let (k, n) = (0.5, 20_000usize);
        let raw: Vec<_> = (0..n)
            .map(|i| {
                let t = 10.0 * i as f64 / n as f64;
                TracePoint::new(t, (-k * t).exp()).unwrap()
            })
            .collect();
        let tr = fold_incumbent(&raw, 10.0).unwrap();
        assert_abs_diff_eq!(tldr(&tr, &cfg).unwrap(), k * (1.0 - 1.0 / n as f64), epsilon = 1e-9);
    }

    #[test]
    fn terminal_examples() {
        let cfg = MetricConfig::with_horizon(10.0).unwrap();
        let tr = fold_incumbent(&pts(&[(0.0, 1.0), (2.0, 0.5)]), 10.0).unwrap();
        assert_abs_diff_eq!(terminal_log_residual(&tr, &cfg).unwrap(), -std::f64::consts::LN_2, epsilon = 1e-12);
        let tr = fold_incumbent(&pts(&[(0.0, 1.0), (2.0, 0.0)]), 10.0).unwrap();
        assert_eq!(terminal_log_residual(&tr, &cfg).unwrap(), DEFAULT_FLOOR.ln());
        let cfg3 = MetricConfig::with_horizon(3.0).unwrap();
        let tr = fold_incumbent(&pts(&[(0.0, 0.2)]), 3.0).unwrap();
        assert_eq!(terminal_log_residual(&tr, &cfg3).unwrap(), 0.2f64.ln());
    }

    #[test]
    fn alt_metric_examples() {
        let cfg = MetricConfig::with_horizon(10.0).unwrap();
        let tr = fold_incumbent(&pts(&[(0.0, 1.0), (1.0, 0.5), (3.0, 0.09), (4.0, 0.09)]), 10.0).unwrap();
        let m = alt_metrics(&tr, &cfg).unwrap();
        assert_eq!(m.time_to_10pct, 3.0);
        assert_eq!(m.terminal_time, 4.0);

        let tr = fold_incumbent(&pts(&[(0.0, 0.5)]), 10.0).unwrap();
        let m = alt_metrics(&tr, &cfg).unwrap();
        assert_abs_diff_eq!(m.linear_auc, 0.5, epsilon = 1e-15);
        assert_eq!(m.time_to_10pct, 10.0);
    }

    #[test]
    fn horizon_mismatch_is_reported() {
        let tr = fold_incumbent(&pts(&[(0.0, 0.5)]), 10.0).unwrap();
        let cfg = MetricConfig::with_horizon(5.0).unwrap();
        assert!(matches!(tldr(&tr, &cfg), Err(TraceError::HorizonMismatch { .. })));
    }

    #[test]
    fn solved_at_start_gives_zero_rate() {
        let cfg = MetricConfig::with_horizon(2.0).unwrap();
        let tr = fold_incumbent(&pts(&[(0.0, 0.0)]), 2.0).unwrap();
        let s = summarize(&tr, &cfg).unwrap();
        assert!(s.solved_at_start);
        assert_eq!(s.tldr, 0.0);
        assert!(s.time_avg_log_residual.is_finite());
    }

    #[test]
    fn trace_file_round_trip_is_bit_exact() {
        let cfg = MetricConfig::new(1e-9, 7.3).unwrap();
        let raw = pts(&[(0.0, 0.123456789012345), (0.1 + 0.2, 0.0987654321), (1.0 / 3.0, 1e-12)]);
        let tr = fold_incumbent(&raw, 7.3).unwrap();
        let json = serde_json::to_string(&TraceFile::from_trace(&tr, &cfg)).unwrap();
        let (back, back_cfg) = serde_json::from_str::<TraceFile>(&json).unwrap().into_trace().unwrap();
        assert_eq!(back, tr);
        assert_eq!(back_cfg, cfg);
        for (a, b) in back.points().iter().zip(tr.points()) {
            assert_eq!(a.time.to_bits(), b.time.to_bits());
            assert_eq!(a.gap.to_bits(), b.gap.to_bits());
        }
    }

    fn raw_trace() -> impl Strategy<Value = (Vec<TracePoint>, f64)> {
        (prop::collection::vec((0.0f64..1.0, 0.0f64..2.0), 1..40), 0.5f64..20.0).prop_map(
            |(steps, horizon)| {
                let mut t = 0.0;
                let mut out = Vec::with_capacity(steps.len());
                for (i, (dt, gap)) in steps.into_iter().enumerate() {
                    if i > 0 {
                        t += dt * horizon / 40.0;
                    }
                    out.push(TracePoint { time: t, gap });
                }
                (out, horizon)
            },
        )
    }

    proptest! {
        #[test]
        fn fold_is_monotone_and_idempotent((raw, horizon) in raw_trace()) {
            let tr = fold_incumbent(&raw, horizon).unwrap();
            for w in tr.points().windows(2) {
                prop_assert!(w[1].gap < w[0].gap);
                prop_assert!(w[1].time > w[0].time);
            }
            let again = fold_incumbent(tr.points(), horizon).unwrap();
            prop_assert_eq!(again.points(), tr.points());
        }

        #[test]
        fn rate_is_finite_and_non_negative((raw, horizon) in raw_trace()) {
            let cfg = MetricConfig::with_horizon(horizon).unwrap();
            let tr = fold_incumbent(&raw, horizon).unwrap();
            let k = tldr(&tr, &cfg).unwrap();
            prop_assert!(k.is_finite() && k >= 0.0);
            prop_assert!(time_avg_log_residual(&tr, &cfg).unwrap().is_finite());
        }

        #[test]
        fn redundant_points_do_not_change_metrics((raw, horizon) in raw_trace(), frac in 0.0f64..1.0) {
            let cfg = MetricConfig::with_horizon(horizon).unwrap();
            let tr = fold_incumbent(&raw, horizon).unwrap();
            // duplicate the incumbent value at an intermediate time
            let mut padded = raw.clone();
            let t_last = raw.last().unwrap().time;
            let t_mid = frac * t_last;
            let idx = padded.partition_point(|p| p.time <= t_mid);
            if idx > 0 {
                let g = raw[..idx].iter().map(|p| p.gap).fold(f64::INFINITY, f64::min);
                padded.insert(idx, TracePoint { time: t_mid, gap: g });
            }
            let tr2 = fold_incumbent(&padded, horizon).unwrap();
            prop_assert_eq!(time_avg_log_residual(&tr, &cfg).unwrap(), time_avg_log_residual(&tr2, &cfg).unwrap());
            prop_assert_eq!(tldr(&tr, &cfg).unwrap(), tldr(&tr2, &cfg).unwrap());
        }
    }
}
