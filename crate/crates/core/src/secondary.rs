//! Secondary controllability: whether every demand in an envelope can be
//! served within generator limits and line capacities, by exhaustive
//! extreme-point checks or by synthesizing a predetermined controller.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{FlowMatrices, Grid};
use crate::lp::{self, Bounds, LinearProgram, LpError, LpStatus, Relation, Sense};
use crate::scalar::Scalar;

/// Shortfalls and reliability factors within this of their threshold count
/// as met.
pub const VERDICT_TOL: f64 = 1e-6;

/// Default cap on enumerated demand buses.
pub const DEFAULT_BRUTEFORCE_LIMIT: usize = 25;

const MAX_CUT_ROUNDS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum SecondaryError {
    #[error("envelope has {got} entries for {expected} buses")]
    EnvelopeLength { expected: usize, got: usize },
    #[error("envelope bound at bus index {0} is not finite or has lower > upper")]
    InvalidEnvelope(usize),
    #[error("{buses} demand buses exceed the enumeration limit of {limit}; use a controller method instead")]
    TooManyBuses { buses: usize, limit: usize },
    #[error("controller violates its definition: {0}")]
    Conditions(String),
    #[error("demand at bus index {0} lies outside the envelope")]
    OutsideEnvelope(usize),
    #[error("auxiliary LP ended {0:?}")]
    LpStatus(LpStatus),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Per-bus reachable demand interval `[p̲_d, p̄_d]` in per-unit.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandEnvelope<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Scalar> DemandEnvelope<T> {
    pub fn new(grid: &Grid<T>, lo: Vec<T>, hi: Vec<T>) -> Result<Self, SecondaryError> {
        for v in [&lo, &hi] {
            if v.len() != grid.n() {
                return Err(SecondaryError::EnvelopeLength { expected: grid.n(), got: v.len() });
            }
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i])) {
            return Err(SecondaryError::InvalidEnvelope(i));
        }
        Ok(DemandEnvelope { lo, hi })
    }

    /// `(1−α)p_d† ≤ p_d ≤ (1+α)p_d†`, clipped so no demand changes sign.
    pub fn from_alpha(grid: &Grid<T>, alpha: T) -> Self {
        let (lo, hi) = grid
            .demand()
            .iter()
            .map(|&d| {
                let far = (T::one() + alpha) * d;
                let near = (T::one() - alpha) * d;
                if d >= T::zero() { (near.max(T::zero()), far) } else { (far, near.min(T::zero())) }
            })
            .unzip();
        DemandEnvelope { lo, hi }
    }

    pub fn point(demand: &[T]) -> Self {
        DemandEnvelope { lo: demand.to_vec(), hi: demand.to_vec() }
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn mid(&self) -> Vec<T> {
        let two = T::lit(2.0);
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| (a + b) / two).collect()
    }

    pub fn half(&self) -> Vec<T> {
        let two = T::lit(2.0);
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| (b - a) / two).collect()
    }

    /// Buses whose demand can vary.
    pub fn varying(&self) -> Vec<usize> {
        (0..self.lo.len()).filter(|&i| self.lo[i] < self.hi[i]).collect()
    }

    /// Extreme demand with `varying[j]` at its upper end when bit `j` of
    /// `mask` is set.
    pub fn extreme(&self, varying: &[usize], mask: u64) -> Vec<T> {
        let mut d = self.lo.clone();
        for (j, &i) in varying.iter().enumerate() {
            if mask >> j & 1 == 1 {
                d[i] = self.hi[i];
            }
        }
        d
    }
}

/// Optimal shortfall for one demand vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Shortfall<T> {
    /// `1ᵀq`; infinite when no dispatch exists even with extra supply.
    pub total: T,
    pub q: Vec<T>,
    pub pg: Vec<T>,
}

impl<T: Scalar> Shortfall<T> {
    pub fn servable(&self) -> bool {
        self.total <= T::tol(VERDICT_TOL)
    }
}

/// Least extra supply `q ≥ 0` that makes `demand` servable within generator
/// limits and line capacities.
pub fn min_shortfall<T: Scalar>(grid: &Grid<T>, mat: &FlowMatrices<T>, demand: &[T]) -> Result<Shortfall<T>, SecondaryError> {
    let ng = grid.num_gens();
    let n = grid.n();
    let mut lp = LinearProgram::new(Sense::Minimize);
    for g in grid.generators() {
        lp.add_var(Bounds::new(g.pmin, g.pmax), T::zero());
    }
    let q0 = lp.add_vars(n, Bounds::nonneg(), T::one());
    let all: Vec<(usize, T)> = (0..ng + n).map(|j| (j, T::one())).collect();
    lp.add_row(all, Relation::Eq, crate::scalar::sum(demand));
    for k in 0..grid.m() {
        let cap = grid.caps()[k];
        if cap.is_infinite() {
            continue;
        }
        let mut coeffs: Vec<(usize, T)> = (0..ng).map(|g| (g, mat.bg[(k, g)])).collect();
        coeffs.extend((0..n).map(|i| (q0 + i, mat.b[(k, i)])));
        coeffs.retain(|c| c.1 != T::zero());
        let offset = mat.line_flow(k, demand);
        lp.add_row(coeffs.clone(), Relation::Le, cap + offset);
        lp.add_row(coeffs, Relation::Ge, -cap + offset);
    }
    let r = lp::solve(&lp)?;
    match r.status {
        LpStatus::Optimal => Ok(Shortfall {
            total: r.objective_value.max(T::zero()),
            q: r.x[q0..q0 + n].to_vec(),
            pg: r.x[..ng].to_vec(),
        }),
        LpStatus::Infeasible => Ok(Shortfall { total: T::infinity(), q: Vec::new(), pg: Vec::new() }),
        other => Err(SecondaryError::LpStatus(other)),
    }
}

/// Outcome of checking a set of extreme demands.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityResult<T> {
    pub controllable: bool,
    /// Largest shortfall over the checked demands.
    pub shortfall: T,
    /// Per-bus extra supply at the worst demand.
    pub q: Vec<T>,
    /// Worst demand; `None` when controllable.
    pub witness: Option<Vec<T>>,
    /// Number of demand vectors checked.
    pub checked: usize,
    /// Set when only part of the extreme points was examined.
    pub approximate: bool,
}

fn enumerate<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    env: &DemandEnvelope<T>,
    varying: &[usize],
) -> Result<FeasibilityResult<T>, SecondaryError> {
    let count = 1u64 << varying.len();
    // Gray-code order: consecutive demands differ at one bus.
    let worst = (0..count)
        .into_par_iter()
        .map(|i| {
            let mask = i ^ (i >> 1);
            min_shortfall(grid, mat, &env.extreme(varying, mask)).map(|s| (i, mask, s))
        })
        .try_reduce_with(|a, b| {
            let b_worse = b.2.total > a.2.total || (b.2.total == a.2.total && b.0 < a.0);
            Ok(if b_worse { b } else { a })
        })
        .expect("at least one extreme point")?;
    let (_, mask, s) = worst;
    let controllable = s.servable();
    Ok(FeasibilityResult {
        controllable,
        shortfall: s.total,
        q: s.q,
        witness: (!controllable).then(|| env.extreme(varying, mask)),
        checked: count as usize,
        approximate: false,
    })
}

/// Exact check over all `2^d` extreme demands of the `d` varying buses.
pub fn verify_bruteforce<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    env: &DemandEnvelope<T>,
    limit: usize,
) -> Result<FeasibilityResult<T>, SecondaryError> {
    let varying = env.varying();
    if varying.len() > limit.min(62) {
        return Err(SecondaryError::TooManyBuses { buses: varying.len(), limit });
    }
    enumerate(grid, mat, env, &varying)
}

/// Enumerates only the `k` buses with the widest intervals, holding the
/// rest at their upper ends. A positive answer is not a proof.
pub fn verify_top_k<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    env: &DemandEnvelope<T>,
    k: usize,
) -> Result<FeasibilityResult<T>, SecondaryError> {
    let mut varying = env.varying();
    let half = env.half();
    varying.sort_by(|&a, &b| half[b].partial_cmp(&half[a]).expect("finite").then(a.cmp(&b)));
    let rest: Vec<usize> = varying.split_off(k.min(varying.len()));
    let mut lo = env.lo.clone();
    for &i in &rest {
        lo[i] = env.hi[i];
    }
    let fixed = DemandEnvelope { lo, hi: env.hi.clone() };
    varying.sort_unstable();
    let mut r = enumerate(grid, mat, &fixed, &varying)?;
    r.approximate = !rest.is_empty();
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    /// `p_g = (1ᵀp_d)·β`.
    Beta,
    /// `p_g = (1ᵀmid)·γ + (1ᵀ(p_d − mid))·β`.
    GammaBeta,
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::Beta => "beta",
            ControllerKind::GammaBeta => "gamma-beta",
        }
    }
}

/// Predetermined controller, with per-generator participation vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerSpec<T> {
    pub kind: ControllerKind,
    pub beta: Vec<T>,
    /// Equal to `beta` for [`ControllerKind::Beta`].
    pub gamma: Vec<T>,
    /// Worst-case loading relative to capacity, `max_k |f_k|_max / f̄_k`.
    pub eta: T,
}

impl<T: Scalar> ControllerSpec<T> {
    pub fn beta(beta: Vec<T>) -> Self {
        ControllerSpec { kind: ControllerKind::Beta, gamma: beta.clone(), beta, eta: T::nan() }
    }

    pub fn gamma_beta(gamma: Vec<T>, beta: Vec<T>) -> Self {
        ControllerSpec { kind: ControllerKind::GammaBeta, beta, gamma, eta: T::nan() }
    }

    pub fn reliable(&self) -> bool {
        self.eta <= T::one() + T::tol(VERDICT_TOL)
    }
}

fn condition_tol<T: Scalar>(scale: T) -> T {
    T::tol(VERDICT_TOL) * (T::one() + scale.abs())
}

/// Checks nonnegativity, normalization and that the controller keeps
/// every generator within its limits over the whole envelope.
pub fn check_conditions<T: Scalar>(grid: &Grid<T>, spec: &ControllerSpec<T>, env: &DemandEnvelope<T>) -> Result<(), SecondaryError> {
    let ng = grid.num_gens();
    if spec.beta.len() != ng || spec.gamma.len() != ng {
        return Err(SecondaryError::Conditions(format!("participation vectors need {ng} entries")));
    }
    for (name, v) in [("beta", &spec.beta), ("gamma", &spec.gamma)] {
        if v.iter().any(|&x| x < -condition_tol(T::zero())) {
            return Err(SecondaryError::Conditions(format!("{name} has a negative entry")));
        }
        if (crate::scalar::sum(v) - T::one()).abs() > condition_tol(T::one()) {
            return Err(SecondaryError::Conditions(format!("{name} does not sum to one")));
        }
    }
    let mid = crate::scalar::sum(&env.mid());
    let half = crate::scalar::sum(&env.half());
    for (g, gen) in grid.generators().iter().enumerate() {
        let base = mid * spec.gamma[g];
        let swing = half * spec.beta[g];
        if base + swing > gen.pmax + condition_tol(gen.pmax) || base - swing < gen.pmin - condition_tol(gen.pmin) {
            return Err(SecondaryError::Conditions(format!("generator {g} leaves its limits")));
        }
    }
    Ok(())
}

/// Generator outputs the controller assigns to `demand`.
pub fn apply_controller<T: Scalar>(
    grid: &Grid<T>,
    spec: &ControllerSpec<T>,
    env: &DemandEnvelope<T>,
    demand: &[T],
) -> Result<Vec<T>, SecondaryError> {
    check_conditions(grid, spec, env)?;
    for (i, &d) in demand.iter().enumerate() {
        if d < env.lo[i] - condition_tol(d) || d > env.hi[i] + condition_tol(d) {
            return Err(SecondaryError::OutsideEnvelope(i));
        }
    }
    let mid = env.mid();
    let base = crate::scalar::sum(&mid);
    let dev: T = demand.iter().zip(&mid).map(|(&d, &m)| d - m).sum();
    Ok((0..grid.num_gens()).map(|g| base * spec.gamma[g] + dev * spec.beta[g]).collect())
}

/// Largest `|f_k|` the controller produces anywhere in the envelope.
pub fn controller_max_flows<T: Scalar>(grid: &Grid<T>, mat: &FlowMatrices<T>, spec: &ControllerSpec<T>, env: &DemandEnvelope<T>) -> Vec<T> {
    let mid = env.mid();
    let half = env.half();
    let total_mid = crate::scalar::sum(&mid);
    let varying = env.varying();
    (0..grid.m())
        .map(|k| {
            let g = mat.bg.row(k);
            let a_gamma = crate::scalar::dot(g, &spec.gamma);
            let a_beta = crate::scalar::dot(g, &spec.beta);
            let centre = (a_gamma * total_mid - mat.line_flow(k, &mid)).abs();
            let swing: T = varying.iter().map(|&i| half[i] * (a_beta - mat.b[(k, i)]).abs()).sum();
            centre + swing
        })
        .collect()
}

/// `max_k |f_k|_max / f̄_k` over lines with finite capacity.
pub fn reliability<T: Scalar>(grid: &Grid<T>, flows: &[T]) -> T {
    grid.caps()
        .iter()
        .zip(flows)
        .filter(|(c, _)| c.is_finite())
        .map(|(&c, &f)| if c > T::zero() { f / c } else if f > T::zero() { T::infinity() } else { T::zero() })
        .fold(T::zero(), T::max)
}

/// How the absolute values in the synthesis LP are linearized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Formulation {
    /// One auxiliary variable per line and demand bus.
    Direct,
    /// `Σ_i h_i|a − B_ki|` as a convex function of `a`, added piece by
    /// piece while violated.
    #[default]
    CutGeneration,
}

/// Pieces of `φ(a) = Σ_i h_i |a − b_i|`, one per interval between sorted
/// breakpoints, as `(slope, intercept)`.
fn abs_sum_pieces<T: Scalar>(points: &[(T, T)]) -> (Vec<T>, Vec<(T, T)>) {
    let mut pts: Vec<(T, T)> = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    let total_h: T = pts.iter().map(|p| p.1).sum();
    let total_hb: T = pts.iter().map(|p| p.1 * p.0).sum();
    let mut pieces = Vec::with_capacity(pts.len() + 1);
    let (mut left_h, mut left_hb) = (T::zero(), T::zero());
    pieces.push((-total_h, total_hb));
    for &(b, h) in &pts {
        left_h = left_h + h;
        left_hb = left_hb + h * b;
        pieces.push((left_h - (total_h - left_h), (total_hb - left_hb) - left_hb));
    }
    (pts.iter().map(|p| p.0).collect(), pieces)
}

fn piece_at<T: Scalar>(breaks: &[T], a: T) -> usize {
    breaks.iter().filter(|&&b| b <= a).count()
}

struct SynthesisLp<T> {
    lp: LinearProgram<T>,
    beta0: usize,
    gamma0: usize,
    eta: usize,
    a0: usize,
    t0: usize,
}

/// Lines with finite capacity and the data their flow bound needs.
struct LineTerms<T> {
    lines: Vec<usize>,
    breaks: Vec<Vec<T>>,
    pieces: Vec<Vec<(T, T)>>,
}

fn line_terms<T: Scalar>(grid: &Grid<T>, mat: &FlowMatrices<T>, env: &DemandEnvelope<T>) -> LineTerms<T> {
    let half = env.half();
    let varying = env.varying();
    let lines: Vec<usize> = (0..grid.m()).filter(|&k| grid.caps()[k].is_finite()).collect();
    let (breaks, pieces) = lines
        .iter()
        .map(|&k| abs_sum_pieces(&varying.iter().map(|&i| (mat.b[(k, i)], half[i])).collect::<Vec<_>>()))
        .unzip();
    LineTerms { lines, breaks, pieces }
}

fn build_synthesis<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    env: &DemandEnvelope<T>,
    kind: ControllerKind,
    terms: &LineTerms<T>,
    cuts: Option<&[Vec<usize>]>,
) -> SynthesisLp<T> {
    let ng = grid.num_gens();
    let mid = env.mid();
    let half = env.half();
    let total_mid = crate::scalar::sum(&mid);
    let total_half = crate::scalar::sum(&half);
    let mut lp = LinearProgram::new(Sense::Minimize);
    let beta0 = lp.add_vars(ng, Bounds::nonneg(), T::zero());
    let gamma0 = match kind {
        ControllerKind::Beta => beta0,
        ControllerKind::GammaBeta => lp.add_vars(ng, Bounds::nonneg(), T::zero()),
    };
    let eta = lp.add_var(Bounds::nonneg(), T::one());
    lp.add_row((0..ng).map(|g| (beta0 + g, T::one())).collect(), Relation::Eq, T::one());
    if kind == ControllerKind::GammaBeta {
        lp.add_row((0..ng).map(|g| (gamma0 + g, T::one())).collect(), Relation::Eq, T::one());
    }
    for (g, gen) in grid.generators().iter().enumerate() {
        let (gv, bv) = (gamma0 + g, beta0 + g);
        let up = if gv == bv { vec![(bv, total_mid + total_half)] } else { vec![(gv, total_mid), (bv, total_half)] };
        let down = if gv == bv { vec![(bv, total_mid - total_half)] } else { vec![(gv, total_mid), (bv, -total_half)] };
        lp.add_row(up, Relation::Le, gen.pmax);
        lp.add_row(down, Relation::Ge, gen.pmin);
    }

    let a0 = lp.num_vars();
    let t0 = a0 + terms.lines.len();
    let varying = env.varying();
    if cuts.is_some() {
        lp.add_vars(terms.lines.len(), Bounds::free(), T::zero());
        lp.add_vars(terms.lines.len(), Bounds::free(), T::zero());
    }
    for (j, &k) in terms.lines.iter().enumerate() {
        let row = mat.bg.row(k);
        let centre_expr: Vec<(usize, T)> = (0..ng).map(|g| (gamma0 + g, row[g] * total_mid)).collect();
        let centre = lp.add_abs(&centre_expr, -mat.line_flow(k, &mid));
        let a_expr: Vec<(usize, T)> = (0..ng).map(|g| (beta0 + g, row[g])).collect();
        let mut bound = vec![(centre, T::one()), (eta, -grid.caps()[k])];
        match cuts {
            Some(cuts) => {
                let (a, t) = (a0 + j, t0 + j);
                let mut def = a_expr;
                def.push((a, -T::one()));
                lp.add_row(def, Relation::Eq, T::zero());
                for &p in &cuts[j] {
                    let (slope, intercept) = terms.pieces[j][p];
                    lp.add_row(vec![(t, T::one()), (a, -slope)], Relation::Ge, intercept);
                }
                bound.push((t, T::one()));
            }
            None => {
                for &i in &varying {
                    if half[i] == T::zero() {
                        continue;
                    }
                    let u = lp.add_abs(&a_expr, -mat.b[(k, i)]);
                    bound.push((u, half[i]));
                }
            }
        }
        lp.add_row(bound, Relation::Le, T::zero());
    }
    SynthesisLp { lp, beta0, gamma0, eta, a0, t0 }
}

/// Controller minimizing the worst-case loading `η` over the envelope.
/// Returns `None` when no controller keeps the generators within limits.
pub fn synthesize<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    env: &DemandEnvelope<T>,
    kind: ControllerKind,
    formulation: Formulation,
) -> Result<Option<ControllerSpec<T>>, SecondaryError> {
    let ng = grid.num_gens();
    let terms = line_terms(grid, mat, env);
    let mut cuts: Vec<Vec<usize>> = match formulation {
        Formulation::Direct => Vec::new(),
        Formulation::CutGeneration => terms.pieces.iter().map(|p| vec![0, p.len() - 1]).collect(),
    };
    for _ in 0..MAX_CUT_ROUNDS {
        let cut_ref = (formulation == Formulation::CutGeneration).then_some(cuts.as_slice());
        let s = build_synthesis(grid, mat, env, kind, &terms, cut_ref);
        let r = lp::solve(&s.lp)?;
        match r.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Ok(None),
            other => return Err(SecondaryError::LpStatus(other)),
        }
        let mut added = false;
        if formulation == Formulation::CutGeneration {
            for j in 0..terms.lines.len() {
                let a = r.x[s.a0 + j];
                let t = r.x[s.t0 + j];
                let p = piece_at(&terms.breaks[j], a);
                let (slope, intercept) = terms.pieces[j][p];
                let phi = slope * a + intercept;
                if phi > t + T::tol(1e-9) * (T::one() + phi.abs()) && !cuts[j].contains(&p) {
                    cuts[j].push(p);
                    added = true;
                }
            }
        }
        if !added {
            let clean = |v: &[T]| -> Vec<T> {
                let v: Vec<T> = v.iter().map(|&x| x.max(T::zero())).collect();
                let total = crate::scalar::sum(&v);
                v.into_iter().map(|x| x / total).collect()
            };
            let beta = clean(&r.x[s.beta0..s.beta0 + ng]);
            let gamma = clean(&r.x[s.gamma0..s.gamma0 + ng]);
            let mut spec = ControllerSpec { kind, beta, gamma, eta: r.x[s.eta] };
            spec.eta = reliability(grid, &controller_max_flows(grid, mat, &spec, env));
            return Ok(Some(spec));
        }
    }
    Err(SecondaryError::LpStatus(LpStatus::Unbounded))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Controllable,
    Uncontrollable,
    /// No reliable controller was found; the grid may still be controllable.
    Inconclusive,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Controllable => "controllable",
            Verdict::Uncontrollable => "uncontrollable",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}
