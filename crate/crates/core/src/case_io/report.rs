//! Report documents.
//!
//! A [`Report`] is a flat record of one command's result in MW and $/hr.
//! Numbers are rounded to six significant digits before emission so that
//! equal inputs give byte-identical documents.

use std::fmt::Write as _;

use serde::Serialize;

use crate::alpha::AlphaBounds;
use crate::dispatch::{Cause, Dispatch};
use crate::grid::Grid;
use crate::scalar::Scalar;

pub const SIGNIFICANT_DIGITS: usize = 6;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let r: f64 = s.parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then(|| round_sig(x))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AlphaBoundsReport {
    pub star: Option<f64>,
    pub beta: Option<f64>,
    pub gamma_beta: Option<f64>,
    pub hat: Option<f64>,
    pub max: Option<f64>,
}

impl AlphaBoundsReport {
    pub fn is_empty(&self) -> bool {
        *self == AlphaBoundsReport::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub case: String,
    pub algorithm: String,
    pub alpha: Option<f64>,
    pub cost_dollars_per_hr: Option<f64>,
    pub iterations: Option<usize>,
    pub feasible: bool,
    pub alpha_bounds: AlphaBoundsReport,
    /// Generator outputs in MW.
    pub dispatch: Vec<f64>,
    /// Line flows in MW.
    pub flows: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(case: impl Into<String>, algorithm: impl Into<String>) -> Self {
        Report {
            case: case.into(),
            algorithm: algorithm.into(),
            alpha: None,
            cost_dollars_per_hr: None,
            iterations: None,
            feasible: true,
            alpha_bounds: AlphaBoundsReport::default(),
            dispatch: Vec::new(),
            flows: Vec::new(),
            verdict: None,
            eta: None,
            notes: Vec::new(),
        }
    }

    pub fn from_dispatch<T: Scalar>(grid: &Grid<T>, d: &Dispatch<T>, alpha: Option<f64>) -> Self {
        let base = grid.base_mva().as_f64();
        let mut r = Report::new(grid.name(), d.algorithm.label());
        r.alpha = alpha.map(round_sig);
        r.cost_dollars_per_hr = d.cost.and_then(|c| finite(c.as_f64()));
        r.iterations = Some(d.iterations);
        r.feasible = d.feasible;
        r.dispatch = d.pg.iter().map(|p| round_sig(p.as_f64() * base)).collect();
        r.flows = d.flows.iter().map(|f| round_sig(f.as_f64() * base)).collect();
        let lines = grid.lines();
        r.notes = d
            .causes
            .iter()
            .map(|c| match *c {
                Cause::Balance => "infeasible: generation cannot balance demand".to_string(),
                Cause::Line(k) => format!("infeasible: line {}-{}", grid.bus_ids()[lines[k].from], grid.bus_ids()[lines[k].to]),
                Cause::Generator(g) => format!("infeasible: generator {g} reserve interval"),
            })
            .collect();
        r
    }

    pub fn with_alpha_bounds<T: Scalar>(mut self, b: &AlphaBounds<T>) -> Self {
        self.alpha_bounds = AlphaBoundsReport {
            star: finite(b.star.as_f64()),
            beta: finite(b.beta.alpha.as_f64()),
            gamma_beta: finite(b.gamma_beta.alpha.as_f64()),
            hat: finite(b.hat.as_f64()),
            max: b.max.as_ref().and_then(|m| finite(m.alpha.as_f64())),
        };
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `key = value` lines; absent values print as `null`.
    pub fn to_text(&self) -> String {
        fn opt<V: std::fmt::Display>(v: &Option<V>) -> String {
            v.as_ref().map_or_else(|| "null".to_string(), |v| v.to_string())
        }
        fn list(v: &[f64]) -> String {
            let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            format!("[{}]", items.join(", "))
        }
        let mut s = String::new();
        let _ = writeln!(s, "case = {:?}", self.case);
        let _ = writeln!(s, "algorithm = {:?}", self.algorithm);
        let _ = writeln!(s, "alpha = {}", opt(&self.alpha));
        let _ = writeln!(s, "cost_dollars_per_hr = {}", opt(&self.cost_dollars_per_hr));
        let _ = writeln!(s, "iterations = {}", opt(&self.iterations));
        let _ = writeln!(s, "feasible = {}", self.feasible);
        let b = &self.alpha_bounds;
        let _ = writeln!(
            s,
            "alpha_bounds = {{ star = {}, beta = {}, gamma_beta = {}, hat = {}, max = {} }}",
            opt(&b.star),
            opt(&b.beta),
            opt(&b.gamma_beta),
            opt(&b.hat),
            opt(&b.max)
        );
        let _ = writeln!(s, "dispatch = {}", list(&self.dispatch));
        let _ = writeln!(s, "flows = {}", list(&self.flows));
        if let Some(v) = &self.verdict {
            let _ = writeln!(s, "verdict = {v:?}");
        }
        if let Some(e) = self.eta {
            let _ = writeln!(s, "eta = {e}");
        }
        for n in &self.notes {
            let _ = writeln!(s, "note = {n:?}");
        }
        s
    }
}
