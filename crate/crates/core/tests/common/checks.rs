//! Seeded oracle comparisons shared by the oracle tests and the acceptance
//! run. Each returns the number of instances compared.

use super::{corners, exact_saturated_change, ramp, random_grid, scheduled, simulated_change};
use madshield::grid::{FlowMatrices, Grid};
use madshield::primary::{
    droop_vectors, max_flow_change_linear, max_flow_change_saturated, saturation_response, AttackBounds, DroopModel,
};
use madshield::secondary::{
    apply_controller, controller_max_flows, synthesize, verify_bruteforce, ControllerKind, DemandEnvelope, Formulation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<usize, String>;

fn random_bounds(rng: &mut ChaCha8Rng, grid: &Grid<f64>, d: usize, scale: f64) -> AttackBounds<f64> {
    let mut delta = vec![0.0; grid.n()];
    let mut buses: Vec<usize> = (0..grid.n()).collect();
    for j in 0..d.min(grid.n()) {
        let pick = rng.gen_range(j..buses.len());
        buses.swap(j, pick);
        delta[buses[j]] = rng.gen_range(0.01..1.0) * scale;
    }
    AttackBounds::new(grid, delta).unwrap()
}

/// Linear worst-case flow change against all sign patterns, `d ≤ 12`.
pub fn linear_vs_signs(seed: u64, instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let n = rng.gen_range(4..14);
        let ng = rng.gen_range(1..4);
        let grid = random_grid(&mut rng, n, ng, 1.5);
        let mat = FlowMatrices::new(&grid).unwrap();
        let model = DroopModel::proportional(&grid).unwrap();
        let d = rng.gen_range(1..13);
        let bounds = random_bounds(&mut rng, &grid, d, 0.3);
        let v = droop_vectors(&grid, &model);
        let got = max_flow_change_linear(&grid, &mat, &model, &bounds);
        let support = bounds.support();
        for k in 0..grid.m() {
            let brute = corners(&support, bounds.delta(), grid.n())
                .map(|dp| {
                    let s: f64 = dp.iter().sum();
                    let inj: Vec<f64> = v.iter().zip(&dp).map(|(vi, d)| vi * s - d).collect();
                    mat.line_flow(k, &inj).abs()
                })
                .fold(0.0, f64::max);
            if (got[k] - brute).abs() >= 1e-8 {
                return Err(format!("line {k}: {} vs {brute}", got[k]));
            }
        }
    }
    Ok(instances)
}

/// Saturated worst-case flow change against attack simulation, `d ≤ 8`.
pub fn saturated_vs_simulation(seed: u64, instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    let mut saturating = 0;
    for _ in 0..instances {
        let n = rng.gen_range(4..10);
        let ng = rng.gen_range(2..4);
        let grid = random_grid(&mut rng, n, ng, 1.5);
        let mat = FlowMatrices::new(&grid).unwrap();
        let model = DroopModel::proportional(&grid).unwrap();
        let pg = scheduled(&grid);
        let d = rng.gen_range(1..9);
        let bounds = random_bounds(&mut rng, &grid, d, 0.4);
        let Ok(fc) = max_flow_change_saturated(&grid, &mat, &model, &pg, &bounds) else { continue };
        compared += 1;
        let headroom = grid.generators().iter().zip(&pg).map(|(g, p)| g.pmax - p).fold(f64::INFINITY, f64::min);
        if bounds.total() * model.shares().iter().cloned().fold(0.0, f64::max) > headroom {
            saturating += 1;
        }
        let support = bounds.support();
        for k in 0..grid.m() {
            let up = exact_saturated_change(&grid, &mat, &model, &pg, &bounds, k, 1.0);
            let down = exact_saturated_change(&grid, &mat, &model, &pg, &bounds, k, -1.0);
            if (fc.increase[k] - up).abs() >= 1e-6 || (fc.decrease[k] - down).abs() >= 1e-6 {
                return Err(format!("line {k}: ({}, {}) vs ({up}, {down})", fc.increase[k], fc.decrease[k]));
            }
            for dp in corners(&support, bounds.delta(), grid.n()) {
                if let Some(c) = simulated_change(&grid, &mat, &model, &pg, &dp, k) {
                    if c > fc.increase[k] + 1e-6 || -c > fc.decrease[k] + 1e-6 {
                        return Err(format!("line {k}: corner change {c} exceeds the bound"));
                    }
                }
            }
        }
    }
    if saturating * 5 < instances {
        return Err(format!("only {saturating} instances saturate"));
    }
    Ok(compared)
}

/// Closed-form saturating response against the event-driven ramp.
pub fn response_vs_ramp(seed: u64, instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let n = rng.gen_range(3..8);
        let ng = rng.gen_range(1..5);
        let grid = random_grid(&mut rng, n, ng, 1.5);
        let model = DroopModel::proportional(&grid).unwrap();
        let pg = scheduled(&grid);
        let h: Vec<f64> = grid.generators().iter().zip(&pg).map(|(g, p)| g.pmax - p).collect();
        let cap: f64 = h.iter().sum();
        let s = rng.gen_range(0.0..1.0) * cap;
        let got = saturation_response(&grid, &model, &pg, s).map_err(|e| e.to_string())?;
        let want = ramp(&h, model.inv_r(), s);
        if got.iter().zip(&want).any(|(a, b)| (a - b).abs() >= 1e-9) {
            return Err(format!("{got:?} vs {want:?}"));
        }
    }
    Ok(instances)
}

/// Closed-form controller flow extremes against extreme-demand
/// enumeration, `d ≤ 10`.
pub fn controller_flows_vs_enumeration(seed: u64, instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for _ in 0..instances {
        let n = rng.gen_range(4..12);
        let ng = rng.gen_range(1..4);
        let grid = random_grid(&mut rng, n, ng, 3.0);
        let mat = FlowMatrices::new(&grid).unwrap();
        let env = DemandEnvelope::from_alpha(&grid, rng.gen_range(0.01..0.3));
        if env.varying().len() > 10 {
            continue;
        }
        let kind = if rng.gen::<bool>() { ControllerKind::Beta } else { ControllerKind::GammaBeta };
        let Some(spec) = synthesize(&grid, &mat, &env, kind, Formulation::default()).map_err(|e| e.to_string())? else { continue };
        let got = controller_max_flows(&grid, &mat, &spec, &env);
        let varying = env.varying();
        let mut best = vec![0.0f64; grid.m()];
        for mask in 0u64..1 << varying.len() {
            let demand = env.extreme(&varying, mask);
            let pg = apply_controller(&grid, &spec, &env, &demand).map_err(|e| e.to_string())?;
            let flows = mat.flows(&grid.injection(&pg, &demand));
            for k in 0..grid.m() {
                best[k] = best[k].max(flows[k].abs());
            }
        }
        if let Some(k) = (0..grid.m()).find(|&k| (got[k] - best[k]).abs() >= 1e-8) {
            return Err(format!("line {k}: {} vs {}", got[k], best[k]));
        }
        checked += 1;
    }
    Ok(checked)
}

/// Every reliable controller on `grids` random grids must be confirmed
/// by exhaustive verification. Returns the number of reliable controllers.
pub fn reliable_implies_controllable(seed: u64, grids: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reliable = 0;
    for _ in 0..grids {
        let n = rng.gen_range(4..9);
        let (ng, slack) = (rng.gen_range(1..4), rng.gen_range(1.1..3.0));
        let grid = random_grid(&mut rng, n, ng, slack);
        let mat = FlowMatrices::new(&grid).unwrap();
        let env = DemandEnvelope::from_alpha(&grid, rng.gen_range(0.01..0.5));
        for kind in [ControllerKind::Beta, ControllerKind::GammaBeta] {
            let Some(spec) = synthesize(&grid, &mat, &env, kind, Formulation::default()).map_err(|e| e.to_string())? else { continue };
            if spec.reliable() {
                reliable += 1;
                let r = verify_bruteforce(&grid, &mat, &env, 16).map_err(|e| e.to_string())?;
                if !r.controllable {
                    return Err(format!("eta {} but shortfall {}", spec.eta, r.shortfall));
                }
            }
        }
    }
    Ok(reliable)
}
