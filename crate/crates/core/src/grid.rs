//! Network model and DC power flow.
//!
//! Powers are per-unit on the case MVA base. Line flows follow `f = B p`
//! with `B = Y Dᵀ A⁺`, where `D` is the bus-line incidence, `Y` the diagonal
//! of line susceptances `1/x` and `A⁺` the pseudo-inverse of the weighted
//! Laplacian `A = D Y Dᵀ`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::case_io::{synthesize_capacities, CapacityRule, CaseError, RawCase};
use crate::linalg::{Lu, Mat};
use crate::scalar::Scalar;

/// Injection imbalance accepted by [`dc_power_flow`].
pub const BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid has no buses")]
    Empty,
    #[error("grid is disconnected into {} components: {components:?}", components.len())]
    Disconnected { components: Vec<Vec<u32>> },
    #[error("reduced admittance matrix is singular")]
    Singular,
    #[error("injections sum to {mismatch}, not zero")]
    Unbalanced { mismatch: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Case(#[from] CaseError),
}

/// Generation cost `c2·p² + c1·p + c0` in $/hr for `p` in per-unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostPoly<T> {
    pub c2: T,
    pub c1: T,
    pub c0: T,
}

impl<T: Scalar> CostPoly<T> {
    pub fn linear(c1: T) -> Self {
        CostPoly { c2: T::zero(), c1, c0: T::zero() }
    }

    pub fn eval(&self, p: T) -> T {
        (self.c2 * p + self.c1) * p + self.c0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line<T> {
    pub from: usize,
    pub to: usize,
    pub x: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Generator<T> {
    pub bus: usize,
    pub pmin: T,
    pub pmax: T,
    pub cost: CostPoly<T>,
    /// Output scheduled in the case file.
    pub scheduled: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    name: String,
    base_mva: T,
    bus_ids: Vec<u32>,
    demand: Vec<T>,
    lines: Vec<Line<T>>,
    gens: Vec<Generator<T>>,
    caps: Vec<T>,
    slack: usize,
}

impl<T: Scalar> Grid<T> {
    /// Assembles a grid from per-unit data. Buses are indexed `0..n` and
    /// labelled by `bus_ids`.
    pub fn new(
        name: impl Into<String>,
        base_mva: T,
        bus_ids: Vec<u32>,
        demand: Vec<T>,
        lines: Vec<Line<T>>,
        gens: Vec<Generator<T>>,
        caps: Vec<T>,
    ) -> Result<Self, GridError> {
        let n = bus_ids.len();
        if n == 0 {
            return Err(GridError::Empty);
        }
        if demand.len() != n {
            return Err(GridError::Invalid(format!("{} demands for {n} buses", demand.len())));
        }
        if caps.len() != lines.len() {
            return Err(GridError::Invalid(format!("{} capacities for {} lines", caps.len(), lines.len())));
        }
        for (k, l) in lines.iter().enumerate() {
            if l.from >= n || l.to >= n || l.from == l.to {
                return Err(GridError::Invalid(format!("line {k} has bad endpoints")));
            }
            if !(l.x > T::zero()) {
                return Err(GridError::Invalid(format!("line {k} has nonpositive reactance")));
            }
        }
        for (g, gen) in gens.iter().enumerate() {
            if gen.bus >= n || !(gen.pmin <= gen.pmax) {
                return Err(GridError::Invalid(format!("generator {g} has bad bus or limits")));
            }
        }
        if caps.iter().any(|c| c.is_nan() || *c < T::zero()) {
            return Err(GridError::Invalid("negative line capacity".into()));
        }
        Ok(Grid { name: name.into(), base_mva, bus_ids, demand, lines, gens, caps, slack: 0 })
    }

    /// Builds the in-service network of a parsed case with the file's line
    /// ratings (unrated lines are unlimited).
    pub fn from_raw(raw: &RawCase) -> Result<Self, GridError> {
        raw.validate()?;
        let base = T::lit(raw.base_mva);
        let index: HashMap<u32, usize> = raw.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let bus_ids = raw.buses.iter().map(|b| b.id).collect();
        let demand = raw.buses.iter().map(|b| T::lit(b.pd_mw) / base).collect();
        let mut lines = Vec::new();
        let mut caps = Vec::new();
        for br in raw.active_branches() {
            lines.push(Line { from: index[&br.from], to: index[&br.to], x: T::lit(br.x_pu) });
            caps.push(br.rate_mw.map_or(T::infinity(), |r| T::lit(r) / base));
        }
        let mut gens = Vec::new();
        for g in raw.active_generators() {
            let (c2, c1, c0) = g.quadratic();
            gens.push(Generator {
                bus: index[&g.bus],
                pmin: T::lit(g.pmin_mw) / base,
                pmax: T::lit(g.pmax_mw) / base,
                cost: CostPoly { c2: T::lit(c2) * base * base, c1: T::lit(c1) * base, c0: T::lit(c0) },
                scheduled: T::lit(g.pg_mw) / base,
            });
        }
        let name = raw.name.clone().unwrap_or_default();
        let mut grid = Grid::new(name, base, bus_ids, demand, lines, gens, caps)?;
        grid.slack = raw.buses.iter().position(|b| b.slack).unwrap_or(0);
        Ok(grid)
    }

    /// Builds the in-service network with capacities from `rule`, taking
    /// base flows from the capacity-proportional dispatch.
    pub fn from_case(raw: &RawCase, rule: CapacityRule) -> Result<Self, GridError> {
        Self::from_case_with(raw, rule, BaseDispatch::default())
    }

    pub fn from_case_with(raw: &RawCase, rule: CapacityRule, dispatch: BaseDispatch) -> Result<Self, GridError> {
        let grid = Self::from_raw(raw)?;
        if rule == CapacityRule::Given {
            let caps = synthesize_capacities(raw, rule, None)?;
            return grid.with_caps_mw(&caps);
        }
        let mat = FlowMatrices::new(&grid)?;
        let base = grid.base_mva.as_f64();
        let flows: Vec<f64> = base_flows(&grid, &mat, dispatch).iter().map(|f| f.as_f64() * base).collect();
        let caps = synthesize_capacities(raw, rule, Some(&flows))?;
        grid.with_caps_mw(&caps)
    }

    pub fn with_caps(mut self, caps: Vec<T>) -> Result<Self, GridError> {
        if caps.len() != self.lines.len() || caps.iter().any(|c| c.is_nan() || *c < T::zero()) {
            return Err(GridError::Invalid("capacity vector does not match the lines".into()));
        }
        self.caps = caps;
        Ok(self)
    }

    pub fn with_caps_mw(self, caps_mw: &[f64]) -> Result<Self, GridError> {
        let base = self.base_mva;
        let caps = caps_mw.iter().map(|&c| T::lit(c) / base).collect();
        self.with_caps(caps)
    }

    pub fn with_demand(mut self, demand: Vec<T>) -> Result<Self, GridError> {
        if demand.len() != self.n() {
            return Err(GridError::Invalid("demand vector does not match the buses".into()));
        }
        self.demand = demand;
        Ok(self)
    }

    pub fn with_slack(mut self, bus: usize) -> Self {
        assert!(bus < self.n());
        self.slack = bus;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn m(&self) -> usize {
        self.lines.len()
    }

    pub fn num_gens(&self) -> usize {
        self.gens.len()
    }

    pub fn base_mva(&self) -> T {
        self.base_mva
    }

    pub fn bus_ids(&self) -> &[u32] {
        &self.bus_ids
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }

    pub fn demand(&self) -> &[T] {
        &self.demand
    }

    pub fn lines(&self) -> &[Line<T>] {
        &self.lines
    }

    pub fn generators(&self) -> &[Generator<T>] {
        &self.gens
    }

    pub fn caps(&self) -> &[T] {
        &self.caps
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn total_demand(&self) -> T {
        crate::scalar::sum(&self.demand)
    }

    pub fn pmin(&self) -> Vec<T> {
        self.gens.iter().map(|g| g.pmin).collect()
    }

    pub fn pmax(&self) -> Vec<T> {
        self.gens.iter().map(|g| g.pmax).collect()
    }

    /// Per-bus sum of generator outputs.
    pub fn gen_to_bus(&self, pg: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n()];
        for (g, &p) in self.gens.iter().zip(pg) {
            out[g.bus] = out[g.bus] + p;
        }
        out
    }

    /// Net injection `G p_g − p_d`.
    pub fn injection(&self, pg: &[T], demand: &[T]) -> Vec<T> {
        let mut p = self.gen_to_bus(pg);
        for (pi, &d) in p.iter_mut().zip(demand) {
            *pi = *pi - d;
        }
        p
    }

    /// Connected components as lists of bus ids.
    pub fn components(&self) -> Vec<Vec<u32>> {
        let n = self.n();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(self.bus_ids[u]);
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }
}

/// Network matrices of a grid.
#[derive(Clone, Debug)]
pub struct FlowMatrices<T> {
    /// Bus-line incidence, `n × m`, `+1` at the sending end.
    pub d: Mat<T>,
    /// Line susceptances `1/x`.
    pub y: Vec<T>,
    /// Weighted Laplacian `D Y Dᵀ`.
    pub a: Mat<T>,
    pub a_plus: Mat<T>,
    /// Shift factors `Y Dᵀ A⁺`, `m × n`.
    pub b: Mat<T>,
    /// `B G`, flows per unit output of each generator, `m × n_g`.
    pub bg: Mat<T>,
}

impl<T: Scalar> FlowMatrices<T> {
    pub fn new(grid: &Grid<T>) -> Result<Self, GridError> {
        build_matrices(grid)
    }

    /// Flow on line `k` for injections `p`, without the balance check.
    pub fn line_flow(&self, k: usize, p: &[T]) -> T {
        crate::scalar::dot(self.b.row(k), p)
    }

    pub fn flows(&self, p: &[T]) -> Vec<T> {
        self.b.matvec(p)
    }
}

/// Builds `D`, `Y`, `A`, `A⁺` and `B`.
///
/// `A⁺` comes from inverting the Laplacian with the slack row and column
/// removed, embedding the inverse back with a zero row and column, and
/// projecting both sides onto the complement of the all-ones vector.
pub fn build_matrices<T: Scalar>(grid: &Grid<T>) -> Result<FlowMatrices<T>, GridError> {
    let comps = grid.components();
    if comps.len() > 1 {
        return Err(GridError::Disconnected { components: comps });
    }
    let (n, m) = (grid.n(), grid.m());
    let mut d = Mat::zeros(n, m);
    let mut y = Vec::with_capacity(m);
    for (k, l) in grid.lines().iter().enumerate() {
        d[(l.from, k)] = T::one();
        d[(l.to, k)] = -T::one();
        y.push(T::one() / l.x);
    }
    let mut a = Mat::zeros(n, n);
    for (l, &yk) in grid.lines().iter().zip(&y) {
        let (i, j) = (l.from, l.to);
        a[(i, i)] = a[(i, i)] + yk;
        a[(j, j)] = a[(j, j)] + yk;
        a[(i, j)] = a[(i, j)] - yk;
        a[(j, i)] = a[(j, i)] - yk;
    }

    let r = grid.slack();
    let keep: Vec<usize> = (0..n).filter(|&i| i != r).collect();
    let mut x = Mat::zeros(n, n);
    if n > 1 {
        let mut red = Mat::zeros(n - 1, n - 1);
        for (ri, &i) in keep.iter().enumerate() {
            for (rj, &j) in keep.iter().enumerate() {
                red[(ri, rj)] = a[(i, j)];
            }
        }
        let inv = Lu::factor(&red).ok_or(GridError::Singular)?.inverse();
        for (ri, &i) in keep.iter().enumerate() {
            for (rj, &j) in keep.iter().enumerate() {
                x[(i, j)] = inv[(ri, rj)];
            }
        }
    }
    let a_plus = center(&x);

    // Dᵀ annihilates the all-ones vector, so Y Dᵀ A⁺ = Y Dᵀ X J.
    let mut b = Mat::zeros(m, n);
    for (k, l) in grid.lines().iter().enumerate() {
        for j in 0..n {
            b[(k, j)] = y[k] * (a_plus[(l.from, j)] - a_plus[(l.to, j)]);
        }
    }
    let ng = grid.num_gens();
    let mut bg = Mat::zeros(m, ng);
    for k in 0..m {
        for (g, gen) in grid.generators().iter().enumerate() {
            bg[(k, g)] = b[(k, gen.bus)];
        }
    }
    Ok(FlowMatrices { d, y, a, a_plus, b, bg })
}

/// `J X J` with `J = I − 11ᵀ/n`.
fn center<T: Scalar>(x: &Mat<T>) -> Mat<T> {
    let n = x.rows();
    let nf = T::lit(n as f64);
    let row_mean: Vec<T> = (0..n).map(|i| crate::scalar::sum(x.row(i)) / nf).collect();
    let mut col_mean = vec![T::zero(); n];
    for i in 0..n {
        for j in 0..n {
            col_mean[j] = col_mean[j] + x[(i, j)];
        }
    }
    for c in col_mean.iter_mut() {
        *c = *c / nf;
    }
    let all_mean = crate::scalar::sum(&row_mean) / nf;
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = x[(i, j)] - row_mean[i] - col_mean[j] + all_mean;
        }
    }
    out
}

/// Line flows for a balanced injection vector.
pub fn dc_power_flow<T: Scalar>(mat: &FlowMatrices<T>, p: &[T]) -> Result<Vec<T>, GridError> {
    let mismatch = crate::scalar::sum(p);
    if mismatch.abs() > T::tol(BALANCE_TOL) {
        return Err(GridError::Unbalanced { mismatch: mismatch.as_f64() });
    }
    Ok(mat.flows(p))
}

/// Generation meeting forecast demand from which base flows are taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BaseDispatch {
    /// Each generator supplies demand in proportion to its `p_max`.
    #[default]
    Proportional,
    /// The case's scheduled outputs, the slack bus absorbing any mismatch.
    Scheduled,
}

impl fmt::Display for BaseDispatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseDispatch::Proportional => "proportional",
            BaseDispatch::Scheduled => "scheduled",
        })
    }
}

impl std::str::FromStr for BaseDispatch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "proportional" => Ok(BaseDispatch::Proportional),
            "scheduled" => Ok(BaseDispatch::Scheduled),
            _ => Err(format!("unknown base dispatch {s:?}; expected proportional or scheduled")),
        }
    }
}

/// Generator outputs under `dispatch`. A grid without capacity falls back
/// to the scheduled outputs.
pub fn base_dispatch<T: Scalar>(grid: &Grid<T>, dispatch: BaseDispatch) -> Vec<T> {
    let cap = crate::scalar::sum(&grid.pmax());
    match dispatch {
        BaseDispatch::Proportional if cap > T::zero() => {
            let total = grid.total_demand();
            grid.generators().iter().map(|g| g.pmax / cap * total).collect()
        }
        _ => grid.generators().iter().map(|g| g.scheduled).collect(),
    }
}

/// Flows under forecast demand with generation from `dispatch`, the slack
/// bus absorbing any mismatch.
pub fn base_flows<T: Scalar>(grid: &Grid<T>, mat: &FlowMatrices<T>, dispatch: BaseDispatch) -> Vec<T> {
    let mut p = grid.injection(&base_dispatch(grid, dispatch), grid.demand());
    let mismatch = crate::scalar::sum(&p);
    p[grid.slack()] = p[grid.slack()] - mismatch;
    mat.flows(&p)
}
