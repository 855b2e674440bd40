mod common;

use common::{certificate_violations, net_outflow, random_grid, scheduled};
use madshield::alpha::{alpha_bounds, alpha_max_bruteforce, alpha_upper_bound, IterConfig};
use madshield::case_io::{builtin_case, CapacityRule};
use madshield::dispatch::{conservative_dispatch, immune_traced, safe_dispatch, ImmuneOptions, OpfOptions, UpdateRule};
use madshield::grid::{FlowMatrices, Grid};
use madshield::primary::{flow_change_upper_bound, max_flow_change_saturated, AttackBounds, DroopModel};
use madshield::secondary::{min_shortfall, verify_bruteforce, DemandEnvelope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> (Grid<f64>, FlowMatrices<f64>) {
    let g = Grid::from_case(&builtin_case(name).unwrap(), CapacityRule::Given).unwrap();
    let m = FlowMatrices::new(&g).unwrap();
    (g, m)
}

#[test]
fn flows_conserve_power_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let n = rng.gen_range(2..50);
        let grid = random_grid(&mut rng, n, 3, 1.5);
        let mat = FlowMatrices::new(&grid).unwrap();
        let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = p.iter().sum::<f64>() / n as f64;
        p.iter_mut().for_each(|x| *x -= mean);
        let out = net_outflow(&grid, &mat.flows(&p));
        for (a, b) in out.iter().zip(&p) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn upper_bound_dominates_saturated_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let n = rng.gen_range(4..10);
        let grid = random_grid(&mut rng, n, 3, 1.5);
        let mat = FlowMatrices::new(&grid).unwrap();
        let model = DroopModel::proportional(&grid).unwrap();
        let bounds = AttackBounds::from_alpha(&grid, rng.gen_range(0.05..0.4));
        let ub = flow_change_upper_bound(&grid, &mat, &bounds).unwrap();
        let gens = grid.generators();
        let lo: f64 = gens.iter().map(|g| g.pmin).sum();
        let hi: f64 = gens.iter().map(|g| g.pmax).sum();
        let t = (grid.total_demand() - lo) / (hi - lo);
        let even: Vec<f64> = gens.iter().map(|g| g.pmin + t * (g.pmax - g.pmin)).collect();
        for pg in [scheduled(&grid), even] {
            let Ok(fc) = max_flow_change_saturated(&grid, &mat, &model, &pg, &bounds) else { continue };
            for k in 0..grid.m() {
                assert!(ub[k] + 1e-7 >= fc.increase[k].max(fc.decrease[k]), "line {k}: {} < {:?}", ub[k], (fc.increase[k], fc.decrease[k]));
            }
        }
    }
}

#[test]
fn immune_caps_shrink_and_respect_the_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut runs = 0;
    for i in 0..30 {
        let (grid, mat) = if i == 0 {
            fixture("ring5")
        } else {
            let n = rng.gen_range(4..10);
            let slack = rng.gen_range(1.1..2.0);
            let g = random_grid(&mut rng, n, 3, slack);
            let m = FlowMatrices::new(&g).unwrap();
            (g, m)
        };
        let model = DroopModel::proportional(&grid).unwrap();
        let bounds = AttackBounds::from_alpha(&grid, rng.gen_range(0.02..0.3));
        for rule in [UpdateRule::Exact, UpdateRule::Scale(0.9), UpdateRule::Discrete(0.01)] {
            let opts = ImmuneOptions { rule, ..ImmuneOptions::default() };
            let Ok((_, trace)) = immune_traced(&grid, &mat, &model, &bounds, &opts) else { continue };
            runs += 1;
            for w in trace.caps.windows(2) {
                assert!(w[1].iter().zip(&w[0]).all(|(a, b)| *a <= *b + 1e-12));
            }
            for caps in &trace.caps {
                assert!(caps.iter().zip(&trace.floor).all(|(c, f)| *c >= *f - 1e-9));
            }
        }
    }
    assert!(runs > 20);
}

#[test]
fn robust_dispatches_survive_sampled_attacks() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut certified = 0;
    for i in 0..25 {
        let (grid, mat) = if i == 0 {
            fixture("ring5")
        } else {
            let n = rng.gen_range(4..9);
            let slack = rng.gen_range(1.2..2.5);
            let g = random_grid(&mut rng, n, 3, slack);
            let m = FlowMatrices::new(&g).unwrap();
            (g, m)
        };
        let model = DroopModel::proportional(&grid).unwrap();
        let bounds = AttackBounds::from_alpha(&grid, rng.gen_range(0.02..0.2));
        let opf = OpfOptions::default();
        let dispatches = [
            safe_dispatch(&grid, &mat, &model, &bounds, &opf).unwrap(),
            conservative_dispatch(&grid, &mat, &bounds, &opf).unwrap(),
            immune_traced(&grid, &mat, &model, &bounds, &ImmuneOptions::default()).map(|r| r.0).unwrap(),
        ];
        for d in dispatches.iter().filter(|d| d.feasible) {
            certified += 1;
            let v = certificate_violations(&grid, &mat, &model, &d.pg, &bounds, 200, 8, &mut rng);
            assert_eq!(v, 0, "{} on instance {i}", d.algorithm.label());
        }
    }
    assert!(certified > 20);
}

#[test]
fn bound_chain_on_fixtures() {
    for name in ["tri3", "mixed4", "ring5"] {
        let (g, m) = fixture(name);
        let b = alpha_bounds(&g, &m, &IterConfig::default(), false, Some(14)).unwrap();
        assert!(b.chain_holds(1e-6), "{name}: {:?}", (b.star, b.beta.alpha, b.gamma_beta.alpha, b.hat));
        let max = b.max.unwrap().alpha;
        assert!(b.gamma_beta.alpha <= max + 1e-6 && max <= b.hat + 1e-6);
    }
}

#[test]
fn upper_bound_is_tight() {
    for name in ["ring5", "mixed4"] {
        let (g, m) = fixture(name);
        let hat = alpha_upper_bound(&g, &m, false).unwrap().alpha;
        let demand: Vec<f64> = g.demand().iter().map(|d| (1.0 + hat + 1e-3) * d).collect();
        assert!(min_shortfall(&g, &m, &demand).unwrap().total > 0.0, "{name}");
        let demand: Vec<f64> = g.demand().iter().map(|d| (1.0 + hat - 1e-3) * d).collect();
        assert!(min_shortfall(&g, &m, &demand).unwrap().total < 1e-9, "{name}");
    }
}

#[test]
fn controllability_is_monotone_in_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for name in ["mixed4", "ring5"] {
        let (g, m) = fixture(name);
        for _ in 0..10 {
            let a = rng.gen_range(0.0..1.5);
            let b = rng.gen_range(0.0..a);
            let hi = verify_bruteforce(&g, &m, &DemandEnvelope::from_alpha(&g, a), 16).unwrap();
            if hi.controllable {
                assert!(verify_bruteforce(&g, &m, &DemandEnvelope::from_alpha(&g, b), 16).unwrap().controllable);
            }
        }
    }
}

#[test]
fn exact_alpha_max_matches_dense_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let mut compared = 0;
    for _ in 0..8 {
        let grid = random_grid(&mut rng, 5, 2, 1.3);
        let mat = FlowMatrices::new(&grid).unwrap();
        let Ok(ub) = alpha_upper_bound(&grid, &mat, false) else { continue };
        if !ub.alpha.is_finite() {
            continue;
        }
        let exact = alpha_max_bruteforce(&grid, &mat, 0.0, ub.alpha, 1e-4, 14).unwrap();
        let mut sweep = 0.0;
        let mut a = 0.0;
        while a <= ub.alpha {
            if !verify_bruteforce(&grid, &mat, &DemandEnvelope::from_alpha(&grid, a), 14).unwrap().controllable {
                break;
            }
            sweep = a;
            a += 1e-3;
        }
        assert!((exact.alpha - sweep).abs() <= 1e-3 + 1e-4, "{} vs {sweep}", exact.alpha);
        compared += 1;
    }
    assert!(compared >= 4);
}
