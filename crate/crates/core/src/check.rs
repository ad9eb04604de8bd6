//! Check reports, verdicts and grids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model_spaces::{ModelSpace, Offset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// A deliberately violated hypothesis produced the violation it should.
    ExpectedFailConfirmed,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::ExpectedFailConfirmed => "expected_fail_confirmed",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Per-point data of a check, for plotting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Outcome of one inequality check. `slack = rhs − lhs`, divided by the
/// normalization named in `params.slack_scale`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub params: BTreeMap<String, Value>,
    pub grid: String,
    pub min_slack: f64,
    pub worst_point: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
    #[serde(skip)]
    pub trace: Trace,
}

impl PartialEq for CheckReport {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.params == other.params
            && self.grid == other.grid
            && self.min_slack.to_bits() == other.min_slack.to_bits()
            && self.worst_point == other.worst_point
            && self.tolerance.to_bits() == other.tolerance.to_bits()
            && self.verdict == other.verdict
    }
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Pass | Verdict::ExpectedFailConfirmed)
    }
}

/// Accumulates grid points into a [`CheckReport`].
#[derive(Debug, Clone)]
pub struct CheckBuilder {
    name: String,
    params: BTreeMap<String, Value>,
    grid: String,
    tolerance: f64,
    coords: Vec<String>,
    rows: Vec<Vec<f64>>,
    min_slack: Option<f64>,
    worst: Vec<f64>,
    excluded: usize,
    nonfinite: usize,
}

impl CheckBuilder {
    /// `coords` names the grid coordinates recorded with each point.
    pub fn new(name: impl Into<String>, coords: &[&str], tolerance: f64) -> Self {
        CheckBuilder {
            name: name.into(),
            params: BTreeMap::new(),
            grid: String::new(),
            tolerance,
            coords: coords.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            min_slack: None,
            worst: Vec::new(),
            excluded: 0,
            nonfinite: 0,
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.set_param(key, value);
        self
    }

    pub fn set_param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.params.insert(key.to_string(), v);
    }

    pub fn space(self, space: &ModelSpace) -> Self {
        self.param("space", space.to_string())
    }

    pub fn grid(mut self, desc: impl Into<String>) -> Self {
        self.grid = desc.into();
        self
    }

    /// Records a point with `slack = (rhs − lhs) / scale`.
    pub fn record(&mut self, coords: &[f64], lhs: f64, rhs: f64, scale: f64) {
        self.record_slack(coords, lhs, rhs, (rhs - lhs) / scale);
    }

    pub fn record_slack(&mut self, coords: &[f64], lhs: f64, rhs: f64, slack: f64) {
        debug_assert_eq!(coords.len(), self.coords.len());
        let mut row = coords.to_vec();
        row.extend([lhs, rhs, slack]);
        self.rows.push(row);
        if !slack.is_finite() {
            self.nonfinite += 1;
            return;
        }
        if self.min_slack.map_or(true, |m| slack < m) {
            self.min_slack = Some(slack);
            self.worst = coords.to_vec();
        }
    }

    /// Counts a grid point skipped because its inputs were not accurate
    /// enough for the tolerance.
    pub fn exclude(&mut self) {
        self.excluded += 1;
    }

    pub fn min_slack(&self) -> Option<f64> {
        self.min_slack
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn assemble(mut self, verdict: Verdict) -> CheckReport {
        if self.excluded > 0 {
            self.set_param("excluded_points", self.excluded);
        }
        if self.nonfinite > 0 {
            self.set_param("nonfinite_points", self.nonfinite);
        }
        let worst_point = self.coords.iter().cloned().zip(self.worst.iter().copied()).collect();
        let mut columns = self.coords.clone();
        columns.extend(["lhs", "rhs", "slack"].map(String::from));
        CheckReport {
            name: self.name,
            params: self.params,
            grid: self.grid,
            min_slack: self.min_slack.unwrap_or(0.0),
            worst_point,
            tolerance: self.tolerance,
            verdict,
            trace: Trace { columns, rows: self.rows },
        }
    }

    /// Pass iff every point has `slack ≥ −tolerance`.
    pub fn finish(self) -> CheckReport {
        let verdict = match self.min_slack {
            _ if self.nonfinite > 0 => Verdict::Fail,
            None => Verdict::Inconclusive,
            Some(m) if m >= -self.tolerance => Verdict::Pass,
            Some(_) => Verdict::Fail,
        };
        self.assemble(verdict)
    }

    /// Pass iff every slack is strictly positive; the tolerance is ignored.
    pub fn finish_strict(self) -> CheckReport {
        let verdict = match self.min_slack {
            _ if self.nonfinite > 0 => Verdict::Fail,
            None => Verdict::Inconclusive,
            Some(m) if m > 0.0 => Verdict::Pass,
            Some(_) => Verdict::Fail,
        };
        self.assemble(verdict)
    }

    /// For checks run with a deliberately false hypothesis: confirmed iff a
    /// point with `slack < −threshold` was found, inconclusive otherwise.
    pub fn finish_expected_fail(mut self, threshold: f64) -> CheckReport {
        self.set_param("expected_fail_threshold", threshold);
        let verdict = match self.min_slack {
            Some(m) if m < -threshold => Verdict::ExpectedFailConfirmed,
            _ => Verdict::Inconclusive,
        };
        self.assemble(verdict)
    }

    /// A report for a check that could not be evaluated.
    pub fn failed(mut self, err: &crate::Error) -> CheckReport {
        self.set_param("error", err.to_string());
        self.assemble(Verdict::Fail)
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect();
    // Pin the endpoints exactly.
    if n > 0 {
        v[0] = a;
    }
    if n > 1 {
        v[n - 1] = b;
    }
    v
}

/// Probe points at distance up to `r_max` from the base point: along a
/// geodesic on the radial models, along an axis and the main diagonal on a
/// torus of dimension at least two. Returns `(distance, offset)` pairs.
pub fn probe_offsets(space: &ModelSpace, r_max: f64, count: usize) -> Vec<(f64, Offset)> {
    match space {
        ModelSpace::Torus { periods } if periods.len() > 1 => {
            let half = count / 2;
            let axis_max = (0.5 * periods[0]).min(r_max);
            let mut out: Vec<(f64, Offset)> = linspace(0.0, axis_max, count - half)
                .into_iter()
                .map(|r| {
                    let mut v = vec![0.0; periods.len()];
                    v[0] = r;
                    (r, Offset::Displacement(v))
                })
                .collect();
            let diag = space.diameter().expect("torus is compact").min(r_max);
            let dir: Vec<f64> = {
                let norm = crate::model_spaces::norm(periods);
                periods.iter().map(|l| l / norm).collect()
            };
            out.extend(
                linspace(0.0, diag, half + 1)
                    .into_iter()
                    .skip(1)
                    .map(|r| (r, Offset::Displacement(dir.iter().map(|d| d * r).collect()))),
            );
            out
        }
        _ => linspace(0.0, r_max, count).into_iter().map(|r| (r, Offset::Radial(r))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_verdicts() {
        let mut b = CheckBuilder::new("demo", &["r"], 1e-8);
        b.record(&[0.0], 1.0, 1.0, 1.0);
        b.record(&[1.0], 1.0, 1.0 - 5e-9, 1.0);
        let r = b.finish();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.worst_point["r"], 1.0);
        assert_eq!(r.trace.rows.len(), 2);

        let mut b = CheckBuilder::new("demo", &["r"], 1e-8);
        b.record(&[0.0], 1.0, 0.9, 1.0);
        assert_eq!(b.clone().finish().verdict, Verdict::Fail);
        assert_eq!(b.clone().finish_expected_fail(1e-3).verdict, Verdict::ExpectedFailConfirmed);
        assert_eq!(b.finish_expected_fail(0.5).verdict, Verdict::Inconclusive);
    }

    #[test]
    fn nonfinite_points_fail() {
        let mut b = CheckBuilder::new("demo", &["r"], 1e-8);
        b.record(&[0.0], 1.0, 2.0, 1.0);
        b.record(&[1.0], f64::NAN, 2.0, 1.0);
        let r = b.finish();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.params["nonfinite_points"], 1);
        assert!(r.min_slack.is_finite());
    }

    #[test]
    fn grids() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        let g = logspace(1e-2, 10.0, 4);
        assert_eq!(g[0], 1e-2);
        assert_eq!(g[3], 10.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn torus_probes_reach_the_diameter() {
        let t = ModelSpace::torus(vec![1.0, 1.0]).unwrap();
        let p = probe_offsets(&t, 10.0, 20);
        assert_eq!(p.len(), 20);
        let far = p.iter().map(|x| x.0).fold(0.0, f64::max);
        assert!((far - t.diameter().unwrap()).abs() < 1e-15);
    }
}
