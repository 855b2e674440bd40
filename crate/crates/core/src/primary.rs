//! Primary (droop) response to demand changes and the worst-case line-flow
//! changes it can cause.
//!
//! Generator `i` picks up a share `(1/R_i) / Σ 1/R` of a demand change
//! until it reaches its limit; saturated generators drop out and the rest
//! re-share. Attacks are box-bounded per bus, `|Δp_d| ≤ Δp̄_d`.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{FlowMatrices, Grid};
use crate::lp::{self, Bounds, LinearProgram, LpError, LpStatus, Relation, Sense};
use crate::scalar::Scalar;

/// Slack allowed when checking a dispatch against generator limits or an
/// attack against available headroom.
pub const LIMIT_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PrimaryError {
    #[error("droop vector has {got} entries for {expected} generators")]
    DroopLength { expected: usize, got: usize },
    #[error("droop coefficients must be nonnegative with a positive sum")]
    InvalidDroop,
    #[error("attack bounds have {got} entries for {expected} buses")]
    BoundsLength { expected: usize, got: usize },
    #[error("attack bounds must be finite and nonnegative")]
    InvalidBounds,
    #[error("reserve interval is empty for generators {gens:?}")]
    EmptyReserve { gens: Vec<usize> },
    #[error("demand change {requested} exceeds the {available} available to primary control")]
    Shortfall { requested: f64, available: f64 },
    #[error("generator {0} is dispatched outside its limits")]
    OutsideLimits(usize),
    #[error("auxiliary LP ended {0:?}")]
    LpStatus(LpStatus),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Inverse droop `1/R` per generator.
#[derive(Clone, Debug, PartialEq)]
pub struct DroopModel<T> {
    inv_r: Vec<T>,
}

impl<T: Scalar> DroopModel<T> {
    pub fn new(grid: &Grid<T>, inv_r: Vec<T>) -> Result<Self, PrimaryError> {
        if inv_r.len() != grid.num_gens() {
            return Err(PrimaryError::DroopLength { expected: grid.num_gens(), got: inv_r.len() });
        }
        let total = crate::scalar::sum(&inv_r);
        if inv_r.iter().any(|r| !(r.is_finite() && *r >= T::zero())) || !(total > T::zero()) {
            return Err(PrimaryError::InvalidDroop);
        }
        Ok(DroopModel { inv_r })
    }

    /// Sharing proportional to generator capacity.
    pub fn proportional(grid: &Grid<T>) -> Result<Self, PrimaryError> {
        Self::new(grid, grid.pmax().into_iter().map(|p| p.max(T::zero())).collect())
    }

    pub fn inv_r(&self) -> &[T] {
        &self.inv_r
    }

    /// `(1/R_i) / Σ 1/R` per generator.
    pub fn shares(&self) -> Vec<T> {
        let total = crate::scalar::sum(&self.inv_r);
        self.inv_r.iter().map(|&r| r / total).collect()
    }
}

/// Per-bus response vector `v`: bus `j` supplies `v_j` of every unit of
/// extra demand. The response to extra demand at bus `i` is `w_i = v − e_i`.
pub fn droop_vectors<T: Scalar>(grid: &Grid<T>, model: &DroopModel<T>) -> Vec<T> {
    grid.gen_to_bus(&model.shares())
}

/// Per-bus symmetric attack limits `Δp̄_d` in per-unit.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackBounds<T> {
    delta: Vec<T>,
}

impl<T: Scalar> AttackBounds<T> {
    pub fn new(grid: &Grid<T>, delta: Vec<T>) -> Result<Self, PrimaryError> {
        if delta.len() != grid.n() {
            return Err(PrimaryError::BoundsLength { expected: grid.n(), got: delta.len() });
        }
        if delta.iter().any(|d| !(d.is_finite() && *d >= T::zero())) {
            return Err(PrimaryError::InvalidBounds);
        }
        Ok(AttackBounds { delta })
    }

    /// `Δp̄_d = α·|p_d†|`.
    pub fn from_alpha(grid: &Grid<T>, alpha: T) -> Self {
        AttackBounds { delta: grid.demand().iter().map(|d| alpha * d.abs()).collect() }
    }

    pub fn zero(grid: &Grid<T>) -> Self {
        AttackBounds { delta: vec![T::zero(); grid.n()] }
    }

    pub fn delta(&self) -> &[T] {
        &self.delta
    }

    /// Largest total demand change `S̄ = Σ Δp̄_d`.
    pub fn total(&self) -> T {
        crate::scalar::sum(&self.delta)
    }

    pub fn is_zero(&self) -> bool {
        self.delta.iter().all(|&d| d == T::zero())
    }

    /// Buses an attacker can move.
    pub fn support(&self) -> Vec<usize> {
        (0..self.delta.len()).filter(|&i| self.delta[i] > T::zero()).collect()
    }
}

/// Worst-case flow change per line ignoring generator limits:
/// `Σ_l Δp̄_l |B_k w_l|`.
pub fn max_flow_change_linear<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    model: &DroopModel<T>,
    bounds: &AttackBounds<T>,
) -> Vec<T> {
    let v = droop_vectors(grid, model);
    let support = bounds.support();
    (0..grid.m())
        .map(|k| {
            let bv = mat.line_flow(k, &v);
            support.iter().map(|&l| bounds.delta[l] * (bv - mat.b[(k, l)]).abs()).sum()
        })
        .collect()
}

/// Generator limits leaving room for the droop share of the largest total
/// attack in both directions.
pub fn reserve_limits<T: Scalar>(
    grid: &Grid<T>,
    model: &DroopModel<T>,
    bounds: &AttackBounds<T>,
) -> Result<Vec<(T, T)>, PrimaryError> {
    let s = bounds.total();
    let limits: Vec<(T, T)> = grid
        .generators()
        .iter()
        .zip(model.shares())
        .map(|(g, share)| (g.pmin + share * s, g.pmax - share * s))
        .collect();
    let empty: Vec<usize> = (0..limits.len()).filter(|&g| limits[g].0 > limits[g].1).collect();
    if empty.is_empty() {
        Ok(limits)
    } else {
        Err(PrimaryError::EmptyReserve { gens: empty })
    }
}

/// One piece of the piecewise-affine droop response: for total change `s`
/// in `[s_lo, s_hi]`, generator `l` adds `constant[l] + slope[l]·s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SatRegion<T> {
    pub s_lo: T,
    pub s_hi: T,
    pub constant: Vec<T>,
    pub slope: Vec<T>,
}

/// Saturation thresholds of the droop response for given headrooms.
///
/// With `t_i = R_i·h_i` sorted ascending, generators saturate in that
/// order; generator `(j)` saturates when the total change reaches
/// `S_j = Σ_{l≤j} h_(l) + t_(j)·Σ_{l>j} 1/R_(l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaturationProfile<T> {
    pub order: Vec<usize>,
    pub t: Vec<T>,
    pub thresholds: Vec<T>,
    pub regions: Vec<SatRegion<T>>,
    pub capacity: T,
}

impl<T: Scalar> SaturationProfile<T> {
    /// `headroom` and `inv_r` are per generator; generators with zero
    /// `1/R` never respond. Negative headroom is treated as zero.
    pub fn new(headroom: &[T], inv_r: &[T]) -> Self {
        let ng = headroom.len();
        let h: Vec<T> = headroom.iter().map(|&x| x.max(T::zero())).collect();
        let t: Vec<T> = (0..ng)
            .map(|i| if inv_r[i] > T::zero() { h[i] / inv_r[i] } else { T::infinity() })
            .collect();
        let mut order: Vec<usize> = (0..ng).filter(|&i| inv_r[i] > T::zero()).collect();
        order.sort_by(|&a, &b| t[a].partial_cmp(&t[b]).expect("finite thresholds"));
        let capacity: T = order.iter().map(|&i| h[i]).sum();

        let mut thresholds = Vec::with_capacity(order.len());
        let mut regions = Vec::with_capacity(order.len());
        let mut sat_sum = T::zero();
        let mut s_lo = T::zero();
        for z in 0..order.len() {
            let active = &order[z..];
            let r_act: T = active.iter().map(|&i| inv_r[i]).sum();
            let s_hi = if z + 1 == order.len() { capacity } else { sat_sum + t[order[z]] * r_act };
            let s_hi = s_hi.max(s_lo);
            let mut constant = vec![T::zero(); ng];
            let mut slope = vec![T::zero(); ng];
            for &i in &order[..z] {
                constant[i] = h[i];
            }
            for &i in active {
                slope[i] = inv_r[i] / r_act;
                constant[i] = -slope[i] * sat_sum;
            }
            regions.push(SatRegion { s_lo, s_hi, constant, slope });
            thresholds.push(s_hi);
            sat_sum = sat_sum + h[order[z]];
            s_lo = s_hi;
        }
        SaturationProfile { order, t, thresholds, regions, capacity }
    }

    /// Output increase of every generator for a total change `s ≥ 0`.
    pub fn response(&self, s: T) -> Result<Vec<T>, PrimaryError> {
        let ng = self.t.len();
        if s <= T::zero() {
            return Ok(vec![T::zero(); ng]);
        }
        if s > self.capacity + T::tol(LIMIT_TOL) || self.regions.is_empty() {
            return Err(PrimaryError::Shortfall { requested: s.as_f64(), available: self.capacity.as_f64() });
        }
        let s = s.min(self.capacity);
        let region = self.regions.iter().find(|r| s <= r.s_hi).unwrap_or_else(|| self.regions.last().expect("regions"));
        Ok((0..ng).map(|l| region.constant[l] + region.slope[l] * s).collect())
    }
}

fn headroom<T: Scalar>(grid: &Grid<T>, pg: &[T]) -> Vec<T> {
    grid.generators().iter().zip(pg).map(|(g, &p)| g.pmax - p).collect()
}

fn footroom<T: Scalar>(grid: &Grid<T>, pg: &[T]) -> Vec<T> {
    grid.generators().iter().zip(pg).map(|(g, &p)| p - g.pmin).collect()
}

fn check_dispatch<T: Scalar>(grid: &Grid<T>, pg: &[T]) -> Result<(), PrimaryError> {
    let tol = T::tol(LIMIT_TOL);
    for (i, (g, &p)) in grid.generators().iter().zip(pg).enumerate() {
        if p < g.pmin - tol || p > g.pmax + tol {
            return Err(PrimaryError::OutsideLimits(i));
        }
    }
    Ok(())
}

/// Output increase of every generator when total demand rises by `s`
/// from dispatch `pg`.
pub fn saturation_response<T: Scalar>(
    grid: &Grid<T>,
    model: &DroopModel<T>,
    pg: &[T],
    s: T,
) -> Result<Vec<T>, PrimaryError> {
    SaturationProfile::new(&headroom(grid, pg), model.inv_r()).response(s)
}

/// Generator outputs after the droop response to demand change `delta_pd`
/// (either sign) from dispatch `pg`.
pub fn respond<T: Scalar>(
    grid: &Grid<T>,
    model: &DroopModel<T>,
    pg: &[T],
    delta_pd: &[T],
) -> Result<Vec<T>, PrimaryError> {
    let s = crate::scalar::sum(delta_pd);
    let change = if s >= T::zero() {
        SaturationProfile::new(&headroom(grid, pg), model.inv_r()).response(s)?
    } else {
        let down = SaturationProfile::new(&footroom(grid, pg), model.inv_r()).response(-s)?;
        down.into_iter().map(|x| -x).collect()
    };
    Ok(pg.iter().zip(change).map(|(&p, c)| p + c).collect())
}

/// Worst-case flow changes per line under saturating droop response.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowChange<T> {
    /// Pre-attack flows.
    pub base: Vec<T>,
    /// Largest increase of the signed flow.
    pub increase: Vec<T>,
    /// Largest decrease of the signed flow.
    pub decrease: Vec<T>,
    /// Largest growth of `|f|` past its pre-attack value, counting flows
    /// that reverse: `max(Δ_along, Δ_against − 2|f|)`.
    pub effective: Vec<T>,
}

impl<T: Scalar> FlowChange<T> {
    /// Largest post-attack `|f_k|`.
    pub fn worst_abs(&self, k: usize) -> T {
        (self.base[k] + self.increase[k]).abs().max((self.base[k] - self.decrease[k]).abs())
    }
}

/// Box-constrained maximization of `c·y` over the attacked buses with
/// `s_lo ≤ 1ᵀy ≤ s_hi`. Returns `None` if the slab misses the box.
fn region_lp<T: Scalar>(c: &[T], delta: &[T], s_lo: T, s_hi: T) -> Result<Option<T>, PrimaryError> {
    let mut lp = LinearProgram::new(Sense::Maximize);
    for (&ci, &d) in c.iter().zip(delta) {
        lp.add_var(Bounds::new(-d, d), ci);
    }
    let all: Vec<(usize, T)> = (0..c.len()).map(|j| (j, T::one())).collect();
    lp.add_row(all.clone(), Relation::Ge, s_lo);
    lp.add_row(all, Relation::Le, s_hi);
    let r = lp::solve(&lp)?;
    match r.status {
        LpStatus::Optimal => Ok(Some(r.objective_value)),
        LpStatus::Infeasible => Ok(None),
        other => Err(PrimaryError::LpStatus(other)),
    }
}

/// Largest signed increase and decrease of flow `k` over all attacks, one
/// LP per saturation region and direction of the total change.
fn line_extremes<T: Scalar>(
    mat: &FlowMatrices<T>,
    k: usize,
    profiles: &[(T, SaturationProfile<T>)],
    support: &[usize],
    delta: &[T],
) -> Result<(T, T), PrimaryError> {
    let g = mat.bg.row(k);
    let bk: Vec<T> = support.iter().map(|&i| mat.b[(k, i)]).collect();
    let mut up = T::zero();
    let mut down = T::zero();
    for (dir, profile) in profiles {
        for region in &profile.regions {
            let s_hi = region.s_hi.min(profile.capacity);
            if region.s_lo > s_hi {
                continue;
            }
            // With y = dir·Δp_d, the flow change is
            // dir·(g·(constant + slope·1ᵀy) − B_k·y).
            let gs = crate::scalar::dot(g, &region.slope);
            let gc = crate::scalar::dot(g, &region.constant);
            let c: Vec<T> = bk.iter().map(|&b| *dir * (gs - b)).collect();
            let neg: Vec<T> = c.iter().map(|&x| -x).collect();
            if let Some(v) = region_lp(&c, delta, region.s_lo, s_hi)? {
                up = up.max(v + *dir * gc);
            }
            if let Some(v) = region_lp(&neg, delta, region.s_lo, s_hi)? {
                down = down.max(v - *dir * gc);
            }
        }
    }
    Ok((up, down))
}

/// Worst-case flow changes at dispatch `pg`, covering both demand increases
/// (saturation at upper limits) and decreases (saturation at lower limits).
pub fn max_flow_change_saturated<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    model: &DroopModel<T>,
    pg: &[T],
    bounds: &AttackBounds<T>,
) -> Result<FlowChange<T>, PrimaryError> {
    check_dispatch(grid, pg)?;
    let base = mat.flows(&grid.injection(pg, grid.demand()));
    let support = bounds.support();
    let delta: Vec<T> = support.iter().map(|&i| bounds.delta[i]).collect();
    let profiles = [
        (T::one(), SaturationProfile::new(&headroom(grid, pg), model.inv_r())),
        (-T::one(), SaturationProfile::new(&footroom(grid, pg), model.inv_r())),
    ];
    let extremes: Vec<(T, T)> = (0..grid.m())
        .into_par_iter()
        .map(|k| line_extremes(mat, k, &profiles, &support, &delta))
        .collect::<Result<_, _>>()?;
    let (increase, decrease): (Vec<T>, Vec<T>) = extremes.into_iter().unzip();
    let two = T::lit(2.0);
    let effective = (0..grid.m())
        .map(|k| {
            let f = base[k];
            let (along, against) = if f >= T::zero() { (increase[k], decrease[k]) } else { (decrease[k], increase[k]) };
            along.max(against - two * f.abs()).max(T::zero())
        })
        .collect();
    Ok(FlowChange { base, increase, decrease, effective })
}

/// Dispatch-independent upper bound `Δf̂` on every line's flow change: the
/// dispatch itself is a variable, constrained only by balance and limits.
pub fn flow_change_upper_bound<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    bounds: &AttackBounds<T>,
) -> Result<Vec<T>, PrimaryError> {
    let support = bounds.support();
    (0..grid.m())
        .into_par_iter()
        .map(|k| {
            let mut best = T::zero();
            for dir in [T::one(), -T::one()] {
                for sign in [T::one(), -T::one()] {
                    let lp = upper_bound_lp(grid, mat, bounds, &support, k, dir, sign);
                    let r = lp::solve(&lp)?;
                    match r.status {
                        LpStatus::Optimal => best = best.max(r.objective_value),
                        other => return Err(PrimaryError::LpStatus(other)),
                    }
                }
            }
            Ok(best)
        })
        .collect()
}

fn upper_bound_lp<T: Scalar>(
    grid: &Grid<T>,
    mat: &FlowMatrices<T>,
    bounds: &AttackBounds<T>,
    support: &[usize],
    k: usize,
    dir: T,
    sign: T,
) -> LinearProgram<T> {
    let ng = grid.num_gens();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let pg0 = lp.num_vars();
    for g in grid.generators() {
        lp.add_var(Bounds::new(g.pmin, g.pmax), T::zero());
    }
    let dp0 = lp.num_vars();
    for &i in support {
        lp.add_var(Bounds::new(-bounds.delta[i], bounds.delta[i]), -sign * mat.b[(k, i)]);
    }
    let dg0 = lp.num_vars();
    for g in 0..ng {
        let b = if dir > T::zero() { Bounds::nonneg() } else { Bounds::new(T::neg_infinity(), T::zero()) };
        lp.add_var(b, sign * mat.bg[(k, g)]);
    }
    lp.add_row((0..ng).map(|g| (pg0 + g, T::one())).collect(), Relation::Eq, grid.total_demand());
    let mut bal: Vec<(usize, T)> = (0..ng).map(|g| (dg0 + g, T::one())).collect();
    bal.extend((0..support.len()).map(|j| (dp0 + j, -T::one())));
    lp.add_row(bal, Relation::Eq, T::zero());
    let total: Vec<(usize, T)> = (0..support.len()).map(|j| (dp0 + j, dir)).collect();
    lp.add_row(total, Relation::Ge, T::zero());
    for (g, gen) in grid.generators().iter().enumerate() {
        let row = vec![(pg0 + g, T::one()), (dg0 + g, T::one())];
        if dir > T::zero() {
            lp.add_row(row, Relation::Le, gen.pmax);
        } else {
            lp.add_row(row, Relation::Ge, gen.pmin);
        }
    }
    lp
}
