//! Case files, capacity synthesis, attack-bound files and reports.
//!
//! Two case formats are accepted: the MATPOWER `.m` subset used by the
//! standard test systems, and a TOML document with the same fields. All
//! quantities in [`RawCase`] are in the file's units (MW, per-unit
//! reactance); conversion to per-unit power happens in [`crate::grid`].

mod bounds;
mod builtin;
mod matpower;
mod native;
pub mod report;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bounds::{parse_attack_bounds, AttackFile};
pub use builtin::{builtin_case, builtin_names, builtin_text, load_case};
pub use native::to_native;

#[derive(Debug, Error, PartialEq)]
pub enum CaseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing table `{0}`")]
    MissingTable(&'static str),
    #[error("{what} references unknown bus {bus}")]
    DanglingBus { what: String, bus: u32 },
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("branch {index} has nonpositive reactance {x}")]
    NonPositiveReactance { index: usize, x: f64 },
    #[error("generator {index} has p_min {pmin} above p_max {pmax}")]
    InvalidGenLimits { index: usize, pmin: f64, pmax: f64 },
    #[error("generator {index}: {msg}")]
    UnsupportedCost { index: usize, msg: String },
    #[error("invalid case document: {0}")]
    Native(String),
    #[error("capacity synthesis needs base flows")]
    MissingBaseFlows,
    #[error("expected {expected} base flows, got {got}")]
    BaseFlowLength { expected: usize, got: usize },
    #[error("branch {0} has no rating and the capacity rule is `given`")]
    MissingRate(usize),
    #[error("capacity factor must be positive, got {0}")]
    InvalidFactor(f64),
    #[error("attack bounds: {0}")]
    Bounds(String),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawBus {
    pub id: u32,
    pub pd_mw: f64,
    /// Reference bus of the case (MATPOWER bus type 3).
    #[serde(default)]
    pub slack: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawGen {
    pub bus: u32,
    pub pmax_mw: f64,
    pub pmin_mw: f64,
    /// Polynomial cost coefficients, highest degree first, in $/hr for an
    /// output in MW.
    pub cost: Vec<f64>,
    /// Scheduled output in the case file; used for base flows.
    #[serde(default)]
    pub pg_mw: f64,
    #[serde(default = "in_service")]
    pub in_service: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawBranch {
    pub from: u32,
    pub to: u32,
    pub x_pu: f64,
    /// Thermal rating; `inf` for unlimited, absent if the file gives none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_mw: Option<f64>,
    #[serde(default = "in_service")]
    pub in_service: bool,
}

fn in_service() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawCase {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub base_mva: f64,
    #[serde(rename = "bus")]
    pub buses: Vec<RawBus>,
    #[serde(rename = "gen", default)]
    pub generators: Vec<RawGen>,
    #[serde(rename = "branch", default)]
    pub branches: Vec<RawBranch>,
}

impl RawGen {
    /// `(c2, c1, c0)` of the cost polynomial in MW.
    pub fn quadratic(&self) -> (f64, f64, f64) {
        let mut c = [0.0; 3];
        for (slot, &v) in c.iter_mut().rev().zip(self.cost.iter().rev()) {
            *slot = v;
        }
        (c[0], c[1], c[2])
    }
}

impl RawCase {
    pub fn active_branches(&self) -> impl Iterator<Item = &RawBranch> {
        self.branches.iter().filter(|b| b.in_service)
    }

    pub fn active_generators(&self) -> impl Iterator<Item = &RawGen> {
        self.generators.iter().filter(|g| g.in_service)
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let mut ids = HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(CaseError::DuplicateBus(b.id));
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            if !ids.contains(&g.bus) {
                return Err(CaseError::DanglingBus { what: format!("generator {i}"), bus: g.bus });
            }
            if g.pmin_mw > g.pmax_mw {
                return Err(CaseError::InvalidGenLimits { index: i, pmin: g.pmin_mw, pmax: g.pmax_mw });
            }
            if g.cost.len() > 3 {
                return Err(CaseError::UnsupportedCost {
                    index: i,
                    msg: format!("polynomial of degree {} (at most 2 supported)", g.cost.len() - 1),
                });
            }
        }
        for (i, br) in self.branches.iter().enumerate() {
            for bus in [br.from, br.to] {
                if !ids.contains(&bus) {
                    return Err(CaseError::DanglingBus { what: format!("branch {i}"), bus });
                }
            }
            if !(br.x_pu > 0.0) {
                return Err(CaseError::NonPositiveReactance { index: i, x: br.x_pu });
            }
        }
        Ok(())
    }
}

/// Parses either accepted case format. MATPOWER files are recognized by
/// their `mpc.` assignments.
pub fn parse_case(text: &str) -> Result<RawCase, CaseError> {
    let case = if text.contains("mpc.") { matpower::parse(text)? } else { native::parse(text)? };
    case.validate()?;
    Ok(case)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapacityRule {
    Given,
    /// `f̄ = max(factor·|f†|, median|f†|)`.
    FractionMedian(f64),
    /// `f̄ = factor·max|f†|` on every line.
    UniformMax(f64),
}

impl CapacityRule {
    pub const FRACTION_MEDIAN: CapacityRule = CapacityRule::FractionMedian(1.2);
    pub const UNIFORM_MAX: CapacityRule = CapacityRule::UniformMax(1.1);

    pub fn label(&self) -> &'static str {
        match self {
            CapacityRule::Given => "given",
            CapacityRule::FractionMedian(_) => "fraction-median",
            CapacityRule::UniformMax(_) => "uniform-max",
        }
    }
}

impl FromStr for CapacityRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "given" => Ok(CapacityRule::Given),
            "fraction-median" | "f" => Ok(CapacityRule::FRACTION_MEDIAN),
            "uniform-max" | "u" => Ok(CapacityRule::UNIFORM_MAX),
            other => Err(format!("unknown capacity rule `{other}`")),
        }
    }
}

impl fmt::Display for CapacityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Line capacities in MW for every in-service branch.
///
/// `base_flows` are the MW flows under forecast demand, one per in-service
/// branch; they are required by every rule except `Given`.
pub fn synthesize_capacities(
    case: &RawCase,
    rule: CapacityRule,
    base_flows: Option<&[f64]>,
) -> Result<Vec<f64>, CaseError> {
    let m = case.active_branches().count();
    let abs = |flows: Option<&[f64]>| -> Result<Vec<f64>, CaseError> {
        let f = flows.ok_or(CaseError::MissingBaseFlows)?;
        if f.len() != m {
            return Err(CaseError::BaseFlowLength { expected: m, got: f.len() });
        }
        Ok(f.iter().map(|x| x.abs()).collect())
    };
    match rule {
        CapacityRule::Given => case
            .active_branches()
            .enumerate()
            .map(|(i, b)| b.rate_mw.ok_or(CaseError::MissingRate(i)))
            .collect(),
        CapacityRule::FractionMedian(k) => {
            if !(k > 0.0) {
                return Err(CaseError::InvalidFactor(k));
            }
            let a = abs(base_flows)?;
            let med = median(&a);
            Ok(a.iter().map(|&x| (k * x).max(med)).collect())
        }
        CapacityRule::UniformMax(k) => {
            if !(k > 0.0) {
                return Err(CaseError::InvalidFactor(k));
            }
            let a = abs(base_flows)?;
            let top = a.iter().copied().fold(0.0, f64::max);
            Ok(vec![k * top; m])
        }
    }
}
