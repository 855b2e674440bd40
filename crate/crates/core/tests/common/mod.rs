#![allow(dead_code)]

pub mod checks;

use madshield::grid::{base_flows, BaseDispatch, CostPoly, FlowMatrices, Generator, Grid, Line};
use madshield::primary::{respond, AttackBounds, DroopModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Connected random grid: a random spanning tree plus a few chords, `ng`
/// generators on distinct buses with scheduled outputs strictly inside their
/// limits, demand on the remaining buses balancing the schedule, and
/// capacities `slack·|f†| + 0.05`.
pub fn random_grid(rng: &mut ChaCha8Rng, n: usize, ng: usize, slack: f64) -> Grid<f64> {
    let mut lines = Vec::new();
    for i in 1..n {
        lines.push(Line { from: rng.gen_range(0..i), to: i, x: rng.gen_range(0.05..1.0) });
    }
    for _ in 0..n / 2 {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            lines.push(Line { from: a, to: b, x: rng.gen_range(0.05..1.0) });
        }
    }
    let ng = ng.min(n - 1).max(1);
    let gens: Vec<Generator<f64>> = (0..ng)
        .map(|g| {
            let pmax = rng.gen_range(0.5..2.0);
            let pmin = rng.gen_range(0.0..0.2) * pmax;
            Generator {
                bus: g,
                pmin,
                pmax,
                cost: CostPoly { c2: rng.gen_range(0.0..0.5), c1: rng.gen_range(0.5..3.0), c0: 0.0 },
                scheduled: pmin + rng.gen_range(0.2..0.8) * (pmax - pmin),
            }
        })
        .collect();
    let total: f64 = gens.iter().map(|g| g.scheduled).sum();
    let mut weights = vec![0.0; n];
    for w in weights.iter_mut().skip(ng) {
        *w = rng.gen_range(0.2..1.0);
    }
    let wsum: f64 = weights.iter().sum();
    let demand: Vec<f64> = weights.iter().map(|w| total * w / wsum).collect();
    let m = lines.len();
    let grid = Grid::new("random", 1.0, (1..=n as u32).collect(), demand, lines, gens, vec![f64::INFINITY; m]).unwrap();
    let mat = FlowMatrices::new(&grid).unwrap();
    let caps = base_flows(&grid, &mat, BaseDispatch::Scheduled).iter().map(|f| slack * f.abs() + 0.05).collect();
    grid.with_caps(caps).unwrap()
}

pub fn scheduled(grid: &Grid<f64>) -> Vec<f64> {
    grid.generators().iter().map(|g| g.scheduled).collect()
}

/// Event-driven ramp: generators share `s` in proportion to `r` until each
/// reaches its headroom `h`.
pub fn ramp(h: &[f64], r: &[f64], s: f64) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    let mut active: Vec<usize> = (0..h.len()).filter(|&i| r[i] > 0.0 && h[i] > 0.0).collect();
    let mut left = s;
    while left > 1e-15 && !active.is_empty() {
        let rs: f64 = active.iter().map(|&i| r[i]).sum();
        let (first, tau) = active
            .iter()
            .map(|&i| (i, (h[i] - out[i]) * rs / r[i]))
            .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let step = tau.min(left);
        for &i in &active {
            out[i] += step * r[i] / rs;
        }
        left -= step;
        if tau <= step {
            out[first] = h[first];
            active.retain(|&i| i != first);
        }
    }
    out
}

/// Signed change of flow `k` after attack `dp` (per bus) with saturating
/// droop response from `pg`, or `None` when the response falls short.
pub fn simulated_change(grid: &Grid<f64>, mat: &FlowMatrices<f64>, model: &DroopModel<f64>, pg: &[f64], dp: &[f64], k: usize) -> Option<f64> {
    let after = respond(grid, model, pg, dp).ok()?;
    let dg: Vec<f64> = after.iter().zip(pg).map(|(a, b)| a - b).collect();
    let inj: Vec<f64> = grid.gen_to_bus(&dg).iter().zip(dp).map(|(g, d)| g - d).collect();
    Some(mat.line_flow(k, &inj))
}

/// Exact worst signed increase (`sign = 1`) or decrease (`sign = -1`) of
/// flow `k` by scanning total-change values where either the droop
/// response or the best box allocation of a given total changes slope.
pub fn exact_saturated_change(
    grid: &Grid<f64>,
    mat: &FlowMatrices<f64>,
    model: &DroopModel<f64>,
    pg: &[f64],
    bounds: &AttackBounds<f64>,
    k: usize,
    sign: f64,
) -> f64 {
    let support = bounds.support();
    let delta: Vec<f64> = support.iter().map(|&i| bounds.delta()[i]).collect();
    let reach: f64 = delta.iter().sum();
    // For a fixed total, the demand part -sign·B_k·Δp is a fractional
    // knapsack: raise buses from -δ in order of decreasing weight.
    let w: Vec<f64> = support.iter().map(|&i| -sign * mat.b[(k, i)]).collect();
    let mut order: Vec<usize> = (0..support.len()).collect();
    order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap());
    let allocate = |s: f64| -> Vec<f64> {
        let mut y: Vec<f64> = delta.iter().map(|d| -d).collect();
        let mut left = s + reach;
        for &j in &order {
            let step = left.min(2.0 * delta[j]).max(0.0);
            y[j] += step;
            left -= step;
        }
        let mut dp = vec![0.0; grid.n()];
        for (j, &i) in support.iter().enumerate() {
            dp[i] = y[j];
        }
        dp
    };
    let mut candidates = vec![-reach, 0.0, reach];
    let mut acc = -reach;
    for &j in &order {
        acc += 2.0 * delta[j];
        candidates.push(acc);
    }
    let inv_r = model.inv_r();
    let gens = grid.generators();
    for dir in [1.0, -1.0] {
        let room: Vec<f64> = gens.iter().zip(pg).map(|(g, &p)| if dir > 0.0 { g.pmax - p } else { p - g.pmin }).collect();
        // Saturation points of the ramp: totals at which a generator fills.
        let mut t: Vec<(f64, usize)> = (0..gens.len()).filter(|&g| inv_r[g] > 0.0).map(|g| (room[g] / inv_r[g], g)).collect();
        t.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for j in 0..t.len() {
            let filled: f64 = t[..j].iter().map(|&(_, g)| room[g].max(0.0)).sum();
            let rest: f64 = t[j..].iter().map(|&(_, g)| inv_r[g]).sum();
            candidates.push(dir * (filled + t[j].0.max(0.0) * rest));
        }
    }
    candidates
        .into_iter()
        .filter(|&s| s.abs() <= reach + 1e-12)
        .filter_map(|s| simulated_change(grid, mat, model, pg, &allocate(s.clamp(-reach, reach)), k))
        .map(|c| sign * c)
        .fold(0.0, f64::max)
}

/// All `2^d` sign patterns over `support`.
pub fn corners<'a>(support: &'a [usize], delta: &'a [f64], n: usize) -> impl Iterator<Item = Vec<f64>> + 'a {
    (0u64..1 << support.len()).map(move |mask| {
        let mut dp = vec![0.0; n];
        for (j, &i) in support.iter().enumerate() {
            dp[i] = if mask >> j & 1 == 1 { delta[i] } else { -delta[i] };
        }
        dp
    })
}

/// Lines pushed past `f̄ + tol` by `samples` uniform attacks plus up to
/// `2^corner_bits` extreme corners, each followed by the saturating droop
/// response. Attacks the generators cannot absorb are skipped.
pub fn certificate_violations(
    grid: &Grid<f64>,
    mat: &FlowMatrices<f64>,
    model: &DroopModel<f64>,
    pg: &[f64],
    bounds: &AttackBounds<f64>,
    samples: usize,
    corner_bits: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let n = grid.n();
    let delta = bounds.delta();
    let mut support = bounds.support();
    support.sort_by(|&a, &b| delta[b].partial_cmp(&delta[a]).unwrap());
    let mut attacks: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..n).map(|i| if delta[i] > 0.0 { rng.gen_range(-delta[i]..=delta[i]) } else { 0.0 }).collect())
        .collect();
    let bits = support.len().min(corner_bits);
    for mask in 0u64..1 << bits {
        let mut dp = vec![0.0; n];
        for (j, &i) in support.iter().enumerate() {
            // Buses beyond the enumerated ones take a random sign.
            let up = if j < bits { mask >> j & 1 == 1 } else { rng.gen::<bool>() };
            dp[i] = if up { delta[i] } else { -delta[i] };
        }
        attacks.push(dp);
    }
    let caps = grid.caps();
    let mut violations = 0;
    for dp in attacks {
        let Ok(after) = respond(grid, model, pg, &dp) else { continue };
        let demand: Vec<f64> = grid.demand().iter().zip(&dp).map(|(d, x)| d + x).collect();
        let flows = mat.flows(&grid.injection(&after, &demand));
        violations += flows.iter().zip(caps).filter(|(f, c)| f.abs() > **c + 1e-6).count();
    }
    violations
}

/// Net power leaving each bus over its lines.
pub fn net_outflow(grid: &Grid<f64>, flows: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.n()];
    for (line, f) in grid.lines().iter().zip(flows) {
        out[line.from] += f;
        out[line.to] -= f;
    }
    out
}
