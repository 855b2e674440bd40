//! Economic dispatch: plain DC-OPF and the attack-robust variants.

use std::fmt;

use thiserror::Error;

use crate::cost::{linearize_cost, CostError, PwlCost, DEFAULT_SEGMENTS};
use crate::grid::{FlowMatrices, Grid};
use crate::lp::{self, Bounds, LinearProgram, LpError, LpStatus, Relation, Sense};
use crate::primary::{
    flow_change_upper_bound, max_flow_change_linear, max_flow_change_saturated, reserve_limits, AttackBounds,
    DroopModel, PrimaryError,
};
use crate::scalar::Scalar;

/// A line is violated when `f̄ < |f| + Δf − VIOLATION_TOL`.
pub const VIOLATION_TOL: f64 = 1e-7;

pub const DEFAULT_MAX_ITERS: usize = 50;

/// Default grid step of [`UpdateRule::Discrete`], per-unit.
pub const DEFAULT_GRID_STEP: f64 = 0.01;

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("generator {gen}: {source}")]
    Cost { gen: usize, source: CostError },
    #[error("{got} line capacities for {expected} lines")]
    CapsLength { expected: usize, got: usize },
    #[error("IMMUNE did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("OPF ended {0:?}")]
    LpStatus(LpStatus),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Primary(#[from] PrimaryError),
}

/// Cap update applied to violated lines in IMMUNE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateRule {
    /// `c = f̄ − Δf`.
    Exact,
    /// `c = s·(f̄ − Δf)`.
    Scale(f64),
    /// `c = ⌊f̄ − Δf⌋` on a grid of the given step.
    Discrete(f64),
}

impl UpdateRule {
    fn apply<T: Scalar>(self, margin: T) -> T {
        match self {
            UpdateRule::Exact => margin,
            UpdateRule::Scale(s) => T::lit(s) * margin,
            UpdateRule::Discrete(step) => {
                let step = T::lit(step);
                (margin / step).floor() * step
            }
        }
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateRule::Exact => write!(f, "exact"),
            UpdateRule::Scale(s) => write!(f, "{s}"),
            UpdateRule::Discrete(_) => write!(f, "discrete"),
        }
    }
}

impl std::str::FromStr for UpdateRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" | "1" | "1.0" => Ok(UpdateRule::Exact),
            "discrete" => Ok(UpdateRule::Discrete(DEFAULT_GRID_STEP)),
            _ => match s.strip_prefix("scale-").unwrap_or(s).parse::<f64>() {
                Ok(v) if v > 0.0 && v < 1.0 => Ok(UpdateRule::Scale(v)),
                _ => Err(format!("unknown update rule {s:?}; expected exact, discrete or a factor in (0, 1)")),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    Opf,
    Safe,
    Conservative,
    Immune(UpdateRule),
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Algorithm::Opf => "opf".into(),
            Algorithm::Safe => "safe".into(),
            Algorithm::Conservative => "conservative".into(),
            Algorithm::Immune(UpdateRule::Exact) => "immune".into(),
            Algorithm::Immune(rule) => format!("immune-{rule}"),
        }
    }
}

/// What made a dispatch problem infeasible.
#[derive(Clone, Debug, PartialEq)]
pub enum Cause {
    /// Supply cannot meet demand within the generator limits.
    Balance,
    /// Effective capacity is negative or binds in the infeasibility proof.
    Line(usize),
    /// The reserve-tightened output interval is empty.
    Generator(usize),
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cause::Balance => write!(f, "power balance"),
            Cause::Line(k) => write!(f, "line {k}"),
            Cause::Generator(g) => write!(f, "generator {g}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dispatch<T> {
    pub algorithm: Algorithm,
    pub feasible: bool,
    /// Per-generator output; empty when infeasible.
    pub pg: Vec<T>,
    /// Per-line flow; empty when infeasible.
    pub flows: Vec<T>,
    /// Total polynomial cost in $/hr.
    pub cost: Option<T>,
    pub iterations: usize,
    /// Capacities imposed in the final OPF.
    pub caps: Vec<T>,
    pub causes: Vec<Cause>,
}

impl<T: Scalar> Dispatch<T> {
    fn infeasible(algorithm: Algorithm, caps: Vec<T>, causes: Vec<Cause>) -> Self {
        Dispatch { algorithm, feasible: false, pg: Vec::new(), flows: Vec::new(), cost: None, iterations: 1, caps, causes }
    }

    /// Per-bus generation.
    pub fn bus_generation(&self, grid: &Grid<T>) -> Vec<T> {
        grid.gen_to_bus(&self.pg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpfOptions {
    /// Linear pieces per generator cost.
    pub segments: usize,
}

impl Default for OpfOptions {
    fn default() -> Self {
        OpfOptions { segments: DEFAULT_SEGMENTS }
    }
}

fn linearized<T: Scalar>(grid: &Grid<T>, segments: usize) -> Result<Vec<PwlCost<T>>, DispatchError> {
    grid.generators()
        .iter()
        .enumerate()
        .map(|(g, gen)| linearize_cost(&gen.cost, gen.pmin, gen.pmax, segments).map_err(|source| DispatchError::Cost { gen: g, source }))
        .collect()
}

/// Minimum-cost dispatch for `demand` under `|f| ≤ caps`, with optional
/// per-generator output limits replacing the generator's own.
pub fn solve_opf<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    demand: &[T],
    caps: &[T],
    limits: Option<&[(T, T)]>,
    opts: &OpfOptions,
) -> Result<Dispatch<T>, DispatchError> {
    if caps.len() != grid.m() {
        return Err(DispatchError::CapsLength { expected: grid.m(), got: caps.len() });
    }
    let ng = grid.num_gens();
    let pwl = linearized(grid, opts.segments)?;
    let own: Vec<(T, T)> = grid.generators().iter().map(|g| (g.pmin, g.pmax)).collect();
    let limits = limits.unwrap_or(&own);

    // pg_i = lo_i + Σ_j s_ij with each piece clipped to [lo_i, hi_i].
    let mut lp = LinearProgram::new(Sense::Minimize);
    let mut pieces: Vec<Vec<usize>> = vec![Vec::new(); ng];
    for i in 0..ng {
        let (lo, hi) = limits[i];
        for (w, &slope) in pwl[i].breakpoints.windows(2).zip(&pwl[i].slopes) {
            let width = hi.min(w[1]) - lo.max(w[0]);
            if width > T::zero() {
                pieces[i].push(lp.add_var(Bounds::new(T::zero(), width), slope));
            }
        }
    }
    let lo_sum: T = limits.iter().map(|l| l.0).sum();
    let total = crate::scalar::sum(demand);
    let all: Vec<(usize, T)> = pieces.iter().flatten().map(|&v| (v, T::one())).collect();
    lp.add_row(all, Relation::Eq, total - lo_sum);

    let lo: Vec<T> = limits.iter().map(|l| l.0).collect();
    let p0 = grid.injection(&lo, demand);
    let mut line_rows = Vec::new();
    for k in 0..grid.m() {
        if caps[k].is_infinite() {
            continue;
        }
        let coeffs: Vec<(usize, T)> = (0..ng)
            .flat_map(|i| pieces[i].iter().map(move |&v| (v, i)))
            .map(|(v, i)| (v, mat.bg[(k, i)]))
            .filter(|(_, c)| *c != T::zero())
            .collect();
        let offset = mat.line_flow(k, &p0);
        let r = lp.add_row(coeffs.clone(), Relation::Le, caps[k] - offset);
        lp.add_row(coeffs, Relation::Ge, -caps[k] - offset);
        line_rows.push((r, k));
    }

    let result = lp::solve(&lp)?;
    match result.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            let mut causes = Vec::new();
            for &row in &result.infeasible_rows {
                let cause = if row == 0 {
                    Cause::Balance
                } else {
                    let (_, k) = line_rows[(row - 1) / 2];
                    Cause::Line(k)
                };
                if !causes.contains(&cause) {
                    causes.push(cause);
                }
            }
            return Ok(Dispatch::infeasible(Algorithm::Opf, caps.to_vec(), causes));
        }
        other => return Err(DispatchError::LpStatus(other)),
    }
    let pg: Vec<T> = (0..ng)
        .map(|i| {
            let extra: T = pieces[i].iter().map(|&v| result.x[v]).sum();
            (lo[i] + extra).max(limits[i].0).min(limits[i].1)
        })
        .collect();
    let flows = mat.flows(&grid.injection(&pg, demand));
    let cost = grid.generators().iter().zip(&pg).map(|(g, &p)| g.cost.eval(p)).sum();
    Ok(Dispatch {
        algorithm: Algorithm::Opf,
        feasible: true,
        pg,
        flows,
        cost: Some(cost),
        iterations: 1,
        caps: caps.to_vec(),
        causes: Vec::new(),
    })
}

/// OPF at forecast demand under the grid's own capacities.
pub fn plain_opf<T: Scalar>(grid: &Grid<T>, mat: &FlowMatrices<T>, opts: &OpfOptions) -> Result<Dispatch<T>, DispatchError> {
    solve_opf(grid, mat, grid.demand(), grid.caps(), None, opts)
}

fn negative_caps<T: Scalar>(caps: &[T]) -> Vec<Cause> {
    (0..caps.len()).filter(|&k| caps[k] < T::zero()).map(Cause::Line).collect()
}

/// Robust OPF tightening every line by its worst unsaturated flow change
/// and reserving each generator's droop share of the largest attack.
pub fn safe_dispatch<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    model: &DroopModel<T>,
    bounds: &AttackBounds<T>,
    opts: &OpfOptions,
) -> Result<Dispatch<T>, DispatchError> {
    let df = max_flow_change_linear(grid, mat, model, bounds);
    let caps: Vec<T> = grid.caps().iter().zip(&df).map(|(&c, &d)| c - d).collect();
    let mut causes = negative_caps(&caps);
    let limits = match reserve_limits(grid, model, bounds) {
        Ok(l) => Some(l),
        Err(PrimaryError::EmptyReserve { gens }) => {
            causes.extend(gens.into_iter().map(Cause::Generator));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut d = match limits {
        Some(l) if causes.is_empty() => solve_opf(grid, mat, grid.demand(), &caps, Some(&l), opts)?,
        _ => Dispatch::infeasible(Algorithm::Opf, caps, causes),
    };
    d.algorithm = Algorithm::Safe;
    Ok(d)
}

/// OPF under capacities tightened by the dispatch-independent bound `Δf̂`.
pub fn conservative_dispatch<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    bounds: &AttackBounds<T>,
    opts: &OpfOptions,
) -> Result<Dispatch<T>, DispatchError> {
    let ub = flow_change_upper_bound(grid, mat, bounds)?;
    let caps: Vec<T> = grid.caps().iter().zip(&ub).map(|(&c, &d)| c - d).collect();
    let causes = negative_caps(&caps);
    let mut d = if causes.is_empty() {
        solve_opf(grid, mat, grid.demand(), &caps, None, opts)?
    } else {
        Dispatch::infeasible(Algorithm::Opf, caps, causes)
    };
    d.algorithm = Algorithm::Conservative;
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImmuneOptions {
    pub rule: UpdateRule,
    pub max_iters: usize,
    pub opf: OpfOptions,
}

impl Default for ImmuneOptions {
    fn default() -> Self {
        ImmuneOptions { rule: UpdateRule::Exact, max_iters: DEFAULT_MAX_ITERS, opf: OpfOptions::default() }
    }
}

/// Capacities imposed at each IMMUNE iteration, and the per-line floor
/// `f̄ − Δf̂` they never go below.
#[derive(Clone, Debug, PartialEq)]
pub struct ImmuneTrace<T> {
    pub caps: Vec<Vec<T>>,
    pub floor: Vec<T>,
}

/// Iterates OPF and worst-case saturated flow changes, tightening violated
/// lines until the dispatch withstands every attack within `bounds`.
pub fn immune<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    model: &DroopModel<T>,
    bounds: &AttackBounds<T>,
    opts: &ImmuneOptions,
) -> Result<Dispatch<T>, DispatchError> {
    immune_traced(grid, mat, model, bounds, opts).map(|(d, _)| d)
}

pub fn immune_traced<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    model: &DroopModel<T>,
    bounds: &AttackBounds<T>,
    opts: &ImmuneOptions,
) -> Result<(Dispatch<T>, ImmuneTrace<T>), DispatchError> {
    let fbar = grid.caps();
    let ub = flow_change_upper_bound(grid, mat, bounds)?;
    let floor: Vec<T> = fbar.iter().zip(&ub).map(|(&c, &d)| c - d).collect();
    let mut trace = ImmuneTrace { caps: Vec::new(), floor };
    let mut caps = fbar.to_vec();
    let tol = T::tol(VIOLATION_TOL);
    let algorithm = Algorithm::Immune(opts.rule);
    for it in 1..=opts.max_iters.max(1) {
        trace.caps.push(caps.clone());
        let mut d = solve_opf(grid, mat, grid.demand(), &caps, None, &opts.opf)?;
        d.algorithm = algorithm;
        d.iterations = it;
        if !d.feasible {
            return Ok((d, trace));
        }
        let change = max_flow_change_saturated(grid, mat, model, &d.pg, bounds)?;
        let violated: Vec<usize> = (0..grid.m())
            .filter(|&k| fbar[k].is_finite() && fbar[k] < d.flows[k].abs() + change.effective[k] - tol)
            .collect();
        if violated.is_empty() {
            return Ok((d, trace));
        }
        for k in violated {
            let proposed = opts.rule.apply(fbar[k] - change.effective[k]).max(trace.floor[k]);
            caps[k] = caps[k].min(proposed);
        }
    }
    Err(DispatchError::NotConverged { iterations: opts.max_iters.max(1) })
}
