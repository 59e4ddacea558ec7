//! Trajectory diagnostics: per-iteration top-logit statistics, their
//! aggregation over runs, plateau summaries, and the two-class saturation
//! curve. Everything is emitted as plot-ready CSV with shortest round-trip
//! float formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::two_class_prob;
use crate::tensor::Tensor;

/// Up to this many of the largest non-target logits enter the margin mean.
/// Degrades to `N - 1` below 21 classes.
pub const MARGIN_TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub target_logit: f32,
    /// Largest non-target logit.
    pub nt1_logit: f32,
    /// Second-largest non-target logit.
    pub nt2_logit: f32,
    /// `z_target - mean(top-K non-target logits)`, K = min(20, N-1).
    pub margin: f32,
}

/// Per-iteration logit statistics of one attack run. Rows are re-ranked
/// every iteration: the tracked non-target classes are whichever currently
/// hold the largest logits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    rows: Vec<TrajectoryRow>,
}

impl TrajectoryRecord {
    pub fn new() -> Self {
        TrajectoryRecord { rows: Vec::new() }
    }

    pub fn rows(&self) -> &[TrajectoryRow] {
        &self.rows
    }

    /// Appends one row computed from the current logits. Needs at least
    /// three classes (two non-target logits are reported) and strictly
    /// increasing iteration indices.
    pub fn record_iteration(&mut self, iter: usize, logits: &Tensor, target: usize) -> Result<()> {
        let n = logits.len();
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "trajectory rows need at least 3 classes, got {n}"
            )));
        }
        if target >= n {
            return Err(Error::InvalidArgument(format!(
                "target {target} out of range for {n} classes"
            )));
        }
        if let Some(last) = self.rows.last() {
            if iter <= last.iter {
                return Err(Error::InvalidArgument(format!(
                    "iteration {iter} does not increase past {}",
                    last.iter
                )));
            }
        }
        let mut non_target: Vec<f32> = logits
            .data()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(_, &v)| v)
            .collect();
        non_target.sort_by(|a, b| b.partial_cmp(a).expect("finite logits"));
        let k = MARGIN_TOP_K.min(n - 1);
        let mean_top: f32 = non_target[..k].iter().sum::<f32>() / k as f32;
        self.rows.push(TrajectoryRow {
            iter,
            target_logit: logits.data()[target],
            nt1_logit: non_target[0],
            nt2_logit: non_target[1],
            margin: logits.data()[target] - mean_top,
        });
        Ok(())
    }
}

/// Column means of aligned trajectory records.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTrajectory {
    pub iters: Vec<usize>,
    pub target_logit: Vec<f32>,
    pub nt1_logit: Vec<f32>,
    pub nt2_logit: Vec<f32>,
    pub margin: Vec<f32>,
    pub samples: usize,
}

impl AggregateTrajectory {
    pub fn len(&self) -> usize {
        self.iters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iters.is_empty()
    }
}

/// Arithmetic mean per column per iteration. All records must share the
/// same iteration schedule.
pub fn aggregate(records: &[TrajectoryRecord]) -> Result<AggregateTrajectory> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("no trajectory records to aggregate".into()))?;
    let schedule: Vec<usize> = first.rows().iter().map(|r| r.iter).collect();
    for (i, rec) in records.iter().enumerate() {
        let this: Vec<usize> = rec.rows().iter().map(|r| r.iter).collect();
        if this != schedule {
            return Err(Error::InvalidArgument(format!(
                "record {i} does not share the aggregation schedule"
            )));
        }
    }
    let rows = schedule.len();
    let inv = 1.0 / records.len() as f32;
    let mut out = AggregateTrajectory {
        iters: schedule,
        target_logit: vec![0.0; rows],
        nt1_logit: vec![0.0; rows],
        nt2_logit: vec![0.0; rows],
        margin: vec![0.0; rows],
        samples: records.len(),
    };
    for rec in records {
        for (i, row) in rec.rows().iter().enumerate() {
            out.target_logit[i] += row.target_logit * inv;
            out.nt1_logit[i] += row.nt1_logit * inv;
            out.nt2_logit[i] += row.nt2_logit * inv;
            out.margin[i] += row.margin * inv;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationSummary {
    pub peak_margin: f32,
    pub final_margin: f32,
    /// Least-squares slope of the margin over the final third of iterations.
    pub plateau_slope: f32,
}

/// Least-squares slope of `ys` against the iteration indices `xs`.
pub fn least_squares_slope(xs: &[usize], ys: &[f32]) -> f32 {
    let n = xs.len() as f64;
    let mx = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    let my = ys.iter().map(|&y| f64::from(y)).sum::<f64>() / n;
    let mut cov = 0.0f64;
    let mut var = 0.0f64;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x as f64 - mx;
        cov += dx * (f64::from(y) - my);
        var += dx * dx;
    }
    if var == 0.0 {
        0.0
    } else {
        (cov / var) as f32
    }
}

/// Margin plateau statistics of an aggregated trajectory. Requires at least
/// 50 recorded iterations.
pub fn saturation_summary(agg: &AggregateTrajectory) -> Result<SaturationSummary> {
    let rows = agg.len();
    if rows < 50 {
        return Err(Error::InvalidArgument(format!(
            "saturation summary needs at least 50 iterations, got {rows}"
        )));
    }
    let peak = agg.margin.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let start = rows - rows / 3;
    let plateau_slope = least_squares_slope(&agg.iters[start..], &agg.margin[start..]);
    Ok(SaturationSummary {
        peak_margin: peak,
        final_margin: *agg.margin.last().unwrap(),
        plateau_slope,
    })
}

/// Evaluates the two-class probabilities over a grid of margins.
pub fn saturation_curve(margins: &[f32]) -> Vec<(f32, f32, f32)> {
    margins
        .iter()
        .map(|&m| {
            let (p_t, p_nt) = two_class_prob(m);
            (m, p_t, p_nt)
        })
        .collect()
}

pub const TRAJECTORY_CSV_HEADER: &str = "iter,target_logit,nt1_logit,nt2_logit,margin";
pub const CURVE_CSV_HEADER: &str = "margin,p_t,p_nt";

/// Renders an aggregated trajectory as CSV text. Rust's float `Display` is
/// the shortest representation that round-trips, which is the precision
/// contract for these files.
pub fn trajectory_csv(agg: &AggregateTrajectory) -> String {
    let mut out = String::from(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for i in 0..agg.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            agg.iters[i], agg.target_logit[i], agg.nt1_logit[i], agg.nt2_logit[i], agg.margin[i]
        );
    }
    out
}

pub fn curve_csv(rows: &[(f32, f32, f32)]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for (m, p_t, p_nt) in rows {
        let _ = writeln!(out, "{m},{p_t},{p_nt}");
    }
    out
}

pub fn write_trajectory_csv(agg: &AggregateTrajectory, path: &Path) -> Result<()> {
    fs::write(path, trajectory_csv(agg))?;
    Ok(())
}

pub fn write_curve_csv(rows: &[(f32, f32, f32)], path: &Path) -> Result<()> {
    fs::write(path, curve_csv(rows))?;
    Ok(())
}
