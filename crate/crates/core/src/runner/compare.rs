//! Deviation report between two trajectories.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::output::{read_stream, RunMetadata};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamDeviation {
    pub name: String,
    pub points: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub tolerance: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub streams: Vec<StreamDeviation>,
}

impl CompareReport {
    pub fn pass(&self) -> bool {
        self.streams.iter().all(|s| s.pass)
    }
}

/// Piecewise-linear value of `rows` (sorted by `t`) at `t`.
fn interpolate(rows: &[(f64, f64)], t: f64) -> f64 {
    let k = rows.partition_point(|&(s, _)| s < t);
    if k == 0 {
        return rows[0].1;
    }
    if k == rows.len() {
        return rows[k - 1].1;
    }
    let (t0, v0) = rows[k - 1];
    let (t1, v1) = rows[k];
    if t1 == t {
        return v1;
    }
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Compares named streams. On the overlapping time range the sparser of the
/// two series provides the grid and the denser one is interpolated onto it.
pub fn compare(
    a: &BTreeMap<String, Vec<(f64, f64)>>,
    b: &BTreeMap<String, Vec<(f64, f64)>>,
    tolerance: f64,
) -> Result<CompareReport> {
    let common: Vec<&String> = a.keys().filter(|k| b.contains_key(*k)).collect();
    if common.is_empty() {
        return Err(Error::invalid("the runs share no observables"));
    }
    let mut streams = Vec::new();
    let (mut lo_all, mut hi_all) = (f64::NEG_INFINITY, f64::INFINITY);
    for name in common {
        let (ra, rb) = (&a[name], &b[name]);
        if ra.is_empty() || rb.is_empty() {
            return Err(Error::invalid(format!("stream `{name}` is empty")));
        }
        let lo = ra[0].0.max(rb[0].0);
        let hi = ra[ra.len() - 1].0.min(rb[rb.len() - 1].0);
        if lo > hi {
            return Err(Error::invalid(format!("stream `{name}`: time ranges do not overlap")));
        }
        lo_all = lo_all.max(lo);
        hi_all = hi_all.min(hi);
        let in_range = |r: &[(f64, f64)]| r.iter().filter(|&&(t, _)| t >= lo && t <= hi).count();
        let (grid, other) = if in_range(ra) <= in_range(rb) { (ra, rb) } else { (rb, ra) };
        let devs: Vec<f64> = grid
            .iter()
            .filter(|&&(t, _)| t >= lo && t <= hi)
            .map(|&(t, v)| (v - interpolate(other, t)).abs())
            .collect();
        let max_abs = devs.iter().copied().fold(0.0, f64::max);
        let mean_abs = devs.iter().sum::<f64>() / devs.len() as f64;
        let nan = devs.iter().any(|d| d.is_nan());
        streams.push(StreamDeviation {
            name: name.clone(),
            points: devs.len(),
            max_abs: if nan { f64::NAN } else { max_abs },
            mean_abs,
            pass: !nan && max_abs <= tolerance,
        });
    }
    Ok(CompareReport {
        tolerance,
        t_start: lo_all,
        t_end: hi_all,
        streams,
    })
}

/// Reads every stream listed in each run's metadata and compares them.
pub fn compare_dirs(a: &Path, b: &Path, tolerance: f64) -> Result<CompareReport> {
    let load = |dir: &Path| -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
        RunMetadata::read(dir)?
            .streams
            .into_iter()
            .map(|s| {
                let rows = read_stream(&dir.join(format!("{s}.csv")))?;
                Ok((s, rows))
            })
            .collect()
    };
    compare(&load(a)?, &load(b)?, tolerance)
}
