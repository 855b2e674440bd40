//! Bounds on the largest `α` for which every demand in
//! `(1−α)p_d† ≤ p_d ≤ (1+α)p_d†` is servable.

use thiserror::Error;

use crate::grid::{FlowMatrices, Grid};
use crate::lp::{self, Bounds, LinearProgram, LpError, LpStatus, Relation, Sense};
use crate::scalar::Scalar;
use crate::secondary::{
    min_shortfall, synthesize, verify_bruteforce, ControllerKind, ControllerSpec, DemandEnvelope, Formulation,
    SecondaryError, VERDICT_TOL,
};

/// Default cap on demand buses for exact `α^max`.
pub const DEFAULT_EXACT_LIMIT: usize = 14;

/// Non-improving iterations before the step size is halved.
const STALL_LIMIT: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum AlphaError {
    #[error("forecast demand is zero everywhere")]
    NoDemand,
    #[error("step size must be positive and finite")]
    InvalidLambda,
    #[error("auxiliary LP ended {0:?}")]
    LpStatus(LpStatus),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Secondary(#[from] SecondaryError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterConfig {
    pub lambda: f64,
    pub stop_delta: f64,
    pub max_iters: usize,
    pub formulation: Formulation,
}

impl Default for IterConfig {
    fn default() -> Self {
        IterConfig { lambda: 1.1, stop_delta: 1e-3, max_iters: 100, formulation: Formulation::default() }
    }
}

/// `α̂` with the dispatch that attains it.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperBound<T> {
    pub alpha: T,
    pub pg: Vec<T>,
}

fn max_alpha_lp<T: Scalar>(grid: &Grid<T>, mat: &FlowMatrices<T>, sign: T) -> Result<UpperBound<T>, AlphaError> {
    let ng = grid.num_gens();
    let demand = grid.demand();
    let total = grid.total_demand();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let a = lp.add_var(Bounds::nonneg(), T::one());
    let pg0 = lp.num_vars();
    for g in grid.generators() {
        lp.add_var(Bounds::new(g.pmin, g.pmax), T::zero());
    }
    // Demand is (1 + sign·α)·p_d†.
    let mut bal: Vec<(usize, T)> = (0..ng).map(|g| (pg0 + g, T::one())).collect();
    bal.push((a, -sign * total));
    lp.add_row(bal, Relation::Eq, total);
    if sign < T::zero() {
        lp.bounds[a] = Bounds::new(T::zero(), T::one());
    }
    for k in 0..grid.m() {
        let cap = grid.caps()[k];
        if cap.is_infinite() {
            continue;
        }
        let bd = mat.line_flow(k, demand);
        let mut row: Vec<(usize, T)> = (0..ng).map(|g| (pg0 + g, mat.bg[(k, g)])).collect();
        row.push((a, -sign * bd));
        lp.add_row(row.clone(), Relation::Le, cap + bd);
        lp.add_row(row, Relation::Ge, -cap + bd);
    }
    let r = lp::solve(&lp)?;
    match r.status {
        LpStatus::Optimal => Ok(UpperBound { alpha: r.x[a], pg: r.x[pg0..pg0 + ng].to_vec() }),
        LpStatus::Unbounded => Ok(UpperBound { alpha: T::infinity(), pg: Vec::new() }),
        LpStatus::Infeasible => Ok(UpperBound { alpha: T::zero(), pg: Vec::new() }),
    }
}

/// Largest `α` at which the uniformly scaled demand `(1+α)p_d†` is still
/// servable. With `mirrored`, the scaled-down demand `(1−α)p_d†` must be
/// servable too.
pub fn alpha_upper_bound<T: Scalar>(grid: &Grid<T>, mat: &FlowMatrices<T>, mirrored: bool) -> Result<UpperBound<T>, AlphaError> {
    if grid.demand().iter().all(|&d| d == T::zero()) {
        return Err(AlphaError::NoDemand);
    }
    let up = max_alpha_lp(grid, mat, T::one())?;
    if !mirrored {
        return Ok(up);
    }
    let down = max_alpha_lp(grid, mat, -T::one())?;
    Ok(if down.alpha < up.alpha { down } else { up })
}

/// Envelope midpoint and half-width as affine functions of `α` on one side
/// of `α = 1`, where clipping at zero demand sets in.
fn envelope_affine<T: Scalar>(d: T, beyond_one: bool) -> ((T, T), (T, T)) {
    let half = T::lit(0.5);
    if beyond_one {
        ((half * d, half * d), (half * d.abs(), half * d.abs()))
    } else {
        ((d, T::zero()), (T::zero(), d.abs()))
    }
}

fn fixed_beta_lp<T: Scalar>(grid: &Grid<T>, mat: &FlowMatrices<T>, beta: &[T], beyond_one: bool) -> Result<Option<T>, AlphaError> {
    let n = grid.n();
    let terms: Vec<_> = grid.demand().iter().map(|&d| envelope_affine(d, beyond_one)).collect();
    let mid0: Vec<T> = terms.iter().map(|t| t.0 .0).collect();
    let mid1: Vec<T> = terms.iter().map(|t| t.0 .1).collect();
    let (m0, m1) = (crate::scalar::sum(&mid0), crate::scalar::sum(&mid1));
    let h0: T = terms.iter().map(|t| t.1 .0).sum();
    let h1: T = terms.iter().map(|t| t.1 .1).sum();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let a = if beyond_one {
        lp.add_var(Bounds::new(T::one(), T::infinity()), T::one())
    } else {
        lp.add_var(Bounds::new(T::zero(), T::one()), T::one())
    };
    for (g, gen) in grid.generators().iter().enumerate() {
        // Output spans (Σmid ± Σhalf)·β over the envelope.
        let b = beta[g];
        lp.add_row(vec![(a, (m1 + h1) * b)], Relation::Le, gen.pmax - (m0 + h0) * b);
        lp.add_row(vec![(a, (m1 - h1) * b)], Relation::Ge, gen.pmin - (m0 - h0) * b);
    }
    for k in 0..grid.m() {
        let cap = grid.caps()[k];
        if cap.is_infinite() {
            continue;
        }
        let ab = crate::scalar::dot(mat.bg.row(k), beta);
        let c0 = ab * m0 - mat.line_flow(k, &mid0);
        let c1 = ab * m1 - mat.line_flow(k, &mid1);
        let w: Vec<T> = (0..n).map(|i| (ab - mat.b[(k, i)]).abs()).collect();
        let s0: T = (0..n).map(|i| terms[i].1 .0 * w[i]).sum();
        let s1: T = (0..n).map(|i| terms[i].1 .1 * w[i]).sum();
        lp.add_row(vec![(a, c1 + s1)], Relation::Le, cap - c0 - s0);
        lp.add_row(vec![(a, s1 - c1)], Relation::Le, cap + c0 - s0);
    }
    let r = lp::solve(&lp)?;
    match r.status {
        LpStatus::Optimal => Ok(Some(r.x[a])),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Ok(Some(T::infinity())),
    }
}

/// Largest `α` for which the controller `β = p_g*/‖p_g*‖₁`, built from the
/// dispatch attaining `α̂`, is reliable.
pub fn alpha_lower_bound_fixed_beta<T: Scalar>(grid: &Grid<T>, mat: &FlowMatrices<T>, upper: &UpperBound<T>) -> Result<T, AlphaError> {
    let norm: T = upper.pg.iter().map(|p| p.abs()).sum();
    if !(norm > T::zero()) {
        return Ok(T::zero());
    }
    let beta: Vec<T> = upper.pg.iter().map(|&p| p / norm).collect();
    match fixed_beta_lp(grid, mat, &beta, false)? {
        None => Ok(T::zero()),
        Some(a) if a >= T::one() => Ok(fixed_beta_lp(grid, mat, &beta, true)?.unwrap_or(a)),
        Some(a) => Ok(a),
    }
}

/// Iterative lower bound and its certifying controller.
#[derive(Clone, Debug, PartialEq)]
pub struct IterativeBound<T> {
    /// Largest `α` whose synthesized controller is reliable.
    pub alpha: T,
    pub controller: Option<ControllerSpec<T>>,
    /// Step-size iterations before polishing.
    pub iterations: usize,
    /// Extra synthesis calls spent narrowing the bracket.
    pub polish_probes: usize,
    /// Step size at termination after any halving.
    pub lambda: f64,
    /// `(α, η)` at each step-size iteration.
    pub history: Vec<(T, T)>,
    /// Set when `max_iters` ran out before the step fell below `stop_delta`.
    pub hit_iteration_limit: bool,
}

fn eta_at<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    kind: ControllerKind,
    alpha: T,
    formulation: Formulation,
) -> Result<(T, Option<ControllerSpec<T>>), AlphaError> {
    let env = DemandEnvelope::from_alpha(grid, alpha);
    Ok(match synthesize(grid, mat, &env, kind, formulation)? {
        Some(spec) => (spec.eta, Some(spec)),
        None => (T::infinity(), None),
    })
}

fn certified<T: Scalar>(eta: T) -> bool {
    eta <= T::one() + T::tol(VERDICT_TOL)
}

/// Step-size search `α ← α + λ(1 − η)` starting from `α̂`, clamped to
/// `[0, α̂]`, returning the largest certified iterate. `seed` is a known
/// certified value. When synthesis is infeasible the iterate moves halfway
/// back to the best certified value; `λ` is halved after three iterations
/// without improvement in `|1 − η|`. A final bisection narrows the bracket
/// between the best certified and the smallest failing `α` to `stop_delta`.
pub fn alpha_lower_bound_iterative<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    kind: ControllerKind,
    alpha_hat: T,
    seed: T,
    cfg: &IterConfig,
) -> Result<IterativeBound<T>, AlphaError> {
    if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
        return Err(AlphaError::InvalidLambda);
    }
    let stop = T::lit(cfg.stop_delta);
    let hat = if alpha_hat.is_finite() { alpha_hat } else { T::one() };
    let mut lambda = cfg.lambda;
    let mut best = seed.max(T::zero()).min(hat);
    let mut best_spec = None;
    let mut fail = T::infinity();
    let mut alpha = hat;
    let mut history = Vec::new();
    let mut prev_err = T::infinity();
    let mut stall = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let (eta, spec) = eta_at(grid, mat, kind, alpha, cfg.formulation)?;
        history.push((alpha, eta));
        if certified(eta) {
            if alpha >= best {
                best = alpha;
                best_spec = spec;
            }
        } else {
            fail = fail.min(alpha);
        }
        let err = (T::one() - eta).abs();
        if err >= prev_err {
            stall += 1;
        } else {
            stall = 0;
        }
        prev_err = prev_err.min(err);
        if stall >= STALL_LIMIT {
            lambda /= 2.0;
            stall = 0;
        }
        let next = if eta.is_finite() { alpha + T::lit(lambda) * (T::one() - eta) } else { (best + alpha) / T::lit(2.0) };
        let next = next.max(T::zero()).min(hat);
        if (next - alpha).abs() <= stop {
            converged = true;
            break;
        }
        alpha = next;
    }

    let mut polish_probes = 0;
    let mut hi = fail.min(hat);
    if best_spec.is_none() {
        let (eta, spec) = eta_at(grid, mat, kind, best, cfg.formulation)?;
        polish_probes += 1;
        if certified(eta) {
            best_spec = spec;
        } else {
            hi = hi.min(best);
            best = T::zero();
        }
    }
    while hi - best > stop {
        let mid = (best + hi) / T::lit(2.0);
        let (eta, spec) = eta_at(grid, mat, kind, mid, cfg.formulation)?;
        polish_probes += 1;
        if certified(eta) {
            best = mid;
            best_spec = spec;
        } else {
            hi = mid;
        }
    }
    Ok(IterativeBound {
        alpha: best,
        controller: best_spec,
        iterations,
        polish_probes,
        lambda,
        history,
        hit_iteration_limit: !converged,
    })
}

/// Bisection for the exact threshold between a controllable `lo` and `hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactBound<T> {
    /// Largest `α` verified controllable.
    pub alpha: T,
    /// Smallest `α` verified uncontrollable; `None` if `α̂` was controllable.
    pub refuted: Option<T>,
    pub probes: usize,
}

/// Exact `α^max` by bisection on `[lo, α̂]`, deciding each probe by
/// extreme-point enumeration. `lo` must be a known controllable value.
pub fn alpha_max_bruteforce<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    lo: T,
    alpha_hat: T,
    tol: T,
    limit: usize,
) -> Result<ExactBound<T>, AlphaError> {
    let controllable = |a: T| -> Result<bool, AlphaError> {
        Ok(verify_bruteforce(grid, mat, &DemandEnvelope::from_alpha(grid, a), limit)?.controllable)
    };
    let mut probes = 1;
    if controllable(alpha_hat)? {
        return Ok(ExactBound { alpha: alpha_hat, refuted: None, probes });
    }
    let (mut lo, mut hi) = (lo.max(T::zero()).min(alpha_hat), alpha_hat);
    while hi - lo > tol {
        let mid = (lo + hi) / T::lit(2.0);
        probes += 1;
        if controllable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ExactBound { alpha: lo, refuted: Some(hi), probes })
}

/// An unservable extreme demand.
#[derive(Clone, Debug, PartialEq)]
pub struct Refutation<T> {
    pub line: usize,
    pub sign: i8,
    pub demand: Vec<T>,
    pub shortfall: T,
}

/// Searches for an unservable extreme demand aligned with one line: for
/// line `k` and sign `s`, each bus sits at its upper end exactly when
/// `s·B_ki < 0`. Returns the first hit in line order.
pub fn refute_line_directed<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    env: &DemandEnvelope<T>,
) -> Result<Option<Refutation<T>>, AlphaError> {
    for k in 0..grid.m() {
        if grid.caps()[k].is_infinite() {
            continue;
        }
        for sign in [1i8, -1] {
            let s = T::lit(sign as f64);
            let demand: Vec<T> = (0..grid.n())
                .map(|i| if s * mat.b[(k, i)] < T::zero() { env.hi()[i] } else { env.lo()[i] })
                .collect();
            let short = min_shortfall(grid, mat, &demand)?;
            if !short.servable() {
                return Ok(Some(Refutation { line: k, sign, demand, shortfall: short.total }));
            }
        }
    }
    Ok(None)
}

/// All bounds for one case.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaBounds<T> {
    pub hat: T,
    pub star: T,
    pub beta: IterativeBound<T>,
    pub gamma_beta: IterativeBound<T>,
    pub max: Option<ExactBound<T>>,
}

impl<T: Scalar> AlphaBounds<T> {
    /// Whether `α* ≤ α^(β) ≤ α^(γ,β) ≤ α̂` holds within `slack`.
    pub fn chain_holds(&self, slack: T) -> bool {
        self.star <= self.beta.alpha + slack
            && self.beta.alpha <= self.gamma_beta.alpha + slack
            && self.gamma_beta.alpha <= self.hat + slack
    }
}

/// Computes `α̂`, `α*`, `α^(β)`, `α^(γ,β)`, and `α^max` when `exact_limit`
/// is given.
pub fn alpha_bounds<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    cfg: &IterConfig,
    mirrored: bool,
    exact_limit: Option<usize>,
) -> Result<AlphaBounds<T>, AlphaError> {
    let upper = alpha_upper_bound(grid, mat, mirrored)?;
    let star = alpha_lower_bound_fixed_beta(grid, mat, &upper)?.min(upper.alpha);
    let beta = alpha_lower_bound_iterative(grid, mat, ControllerKind::Beta, upper.alpha, star, cfg)?;
    let gamma_beta = alpha_lower_bound_iterative(grid, mat, ControllerKind::GammaBeta, upper.alpha, beta.alpha, cfg)?;
    let max = match exact_limit {
        Some(limit) => Some(alpha_max_bruteforce(grid, mat, gamma_beta.alpha, upper.alpha, T::lit(cfg.stop_delta), limit)?),
        None => None,
    };
    Ok(AlphaBounds { hat: upper.alpha, star, beta, gamma_beta, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::{builtin_case, CapacityRule};

    fn fixture(name: &str) -> (Grid<f64>, FlowMatrices<f64>) {
        let g = Grid::from_case(&builtin_case(name).unwrap(), CapacityRule::Given).unwrap();
        let m = FlowMatrices::new(&g).unwrap();
        (g, m)
    }

    #[test]
    fn capacity_limited_upper_bound() {
        let (g, m) = fixture("tri3");
        let ub = alpha_upper_bound(&g, &m, false).unwrap();
        assert!((ub.alpha - 0.5).abs() < 1e-9);
        let (eta, _) = eta_at(&g, &m, ControllerKind::Beta, 0.5, Formulation::default()).unwrap();
        assert!(eta.abs() < 1e-12);
    }

    #[test]
    fn upper_bound_is_tight() {
        let (g, m) = fixture("ring5");
        let ub = alpha_upper_bound(&g, &m, false).unwrap();
        let at = |a: f64| {
            let d: Vec<f64> = g.demand().iter().map(|x| x * (1.0 + a)).collect();
            min_shortfall(&g, &m, &d).unwrap().total
        };
        assert!(at(ub.alpha) < 1e-7);
        assert!(at(ub.alpha + 1e-3) > 0.0);
    }

    #[test]
    fn chain_on_fixtures() {
        for name in ["tri3", "ring5", "mixed4"] {
            let (g, m) = fixture(name);
            let b = alpha_bounds(&g, &m, &IterConfig::default(), false, Some(8)).unwrap();
            assert!(b.chain_holds(1e-6), "{name}: {b:?}");
            let exact = b.max.unwrap();
            assert!(b.gamma_beta.alpha <= exact.alpha + 1e-6 && exact.alpha <= b.hat + 1e-6, "{name}");
        }
    }

    #[test]
    fn returned_bound_is_certified() {
        let (g, m) = fixture("ring5");
        let ub = alpha_upper_bound(&g, &m, false).unwrap();
        for kind in [ControllerKind::Beta, ControllerKind::GammaBeta] {
            let b = alpha_lower_bound_iterative(&g, &m, kind, ub.alpha, 0.0, &IterConfig::default()).unwrap();
            let (eta, _) = eta_at(&g, &m, kind, b.alpha, Formulation::default()).unwrap();
            assert!(eta <= 1.0 + 1e-6);
            assert!(b.controller.unwrap().reliable());
        }
    }

    #[test]
    fn line_directed_refutation_on_mixed_fixture() {
        let (g, m) = fixture("mixed4");
        let r = refute_line_directed(&g, &m, &DemandEnvelope::from_alpha(&g, 1.0)).unwrap().unwrap();
        assert_eq!(r.line, 1);
        assert!(r.shortfall > 0.3);
    }
}
