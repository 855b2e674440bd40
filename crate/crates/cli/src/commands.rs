use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use madshield::alpha::{alpha_bounds, IterConfig};
use madshield::case_io::report::{round_sig, Report};
use madshield::case_io::{load_case, parse_attack_bounds, to_native, AttackFile, RawCase};
use madshield::dispatch::{conservative_dispatch, immune, plain_opf, safe_dispatch, Dispatch, ImmuneOptions, OpfOptions};
use madshield::grid::{base_dispatch, base_flows, FlowMatrices, Grid};
use madshield::primary::{max_flow_change_saturated, AttackBounds, DroopModel};
use madshield::secondary::{
    controller_max_flows, min_shortfall, synthesize, verify_bruteforce, verify_top_k, ControllerKind, DemandEnvelope,
    FeasibilityResult, Formulation, VERDICT_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Cli, Command, Format, Global, Method};

const EXIT_OK: u8 = 0;
const EXIT_INFEASIBLE: u8 = 2;

struct Loaded {
    raw: RawCase,
    grid: Grid<f64>,
    mat: FlowMatrices<f64>,
}

fn load(g: &Global) -> Result<Loaded> {
    let name = g.case.as_deref().context("--case is required")?;
    let raw = load_case(name).with_context(|| format!("loading case `{name}`"))?;
    let grid = Grid::from_case_with(&raw, g.cap_rule, g.base_dispatch).context("building grid")?;
    let mat = FlowMatrices::new(&grid).context("building flow matrices")?;
    Ok(Loaded { raw, grid, mat })
}

fn bus_position(grid: &Grid<f64>, id: u32) -> Result<usize> {
    grid.bus_index(id).with_context(|| format!("bounds file references unknown bus {id}"))
}

fn attack_file(g: &Global) -> Result<Option<AttackFile>> {
    match &g.bounds_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(Some(parse_attack_bounds(&text)?))
        }
        None => Ok(None),
    }
}

/// Per-bus deviation limits; an envelope row contributes its larger reach
/// from the forecast.
fn attack_bounds(g: &Global, grid: &Grid<f64>) -> Result<AttackBounds<f64>> {
    let base = grid.base_mva();
    match attack_file(g)? {
        None => Ok(AttackBounds::from_alpha(grid, g.alpha.context("one of --alpha or --bounds-file is required")?)),
        Some(AttackFile::Delta(rows)) => {
            let mut delta = vec![0.0; grid.n()];
            for (id, d) in rows {
                delta[bus_position(grid, id)?] = d / base;
            }
            Ok(AttackBounds::new(grid, delta)?)
        }
        Some(AttackFile::Envelope(rows)) => {
            let mut delta = vec![0.0; grid.n()];
            for (id, lo, hi) in rows {
                let i = bus_position(grid, id)?;
                let d = grid.demand()[i];
                delta[i] = (hi / base - d).max(d - lo / base).max(0.0);
            }
            Ok(AttackBounds::new(grid, delta)?)
        }
    }
}

fn envelope(g: &Global, grid: &Grid<f64>) -> Result<DemandEnvelope<f64>> {
    let base = grid.base_mva();
    let d = grid.demand();
    match attack_file(g)? {
        None => Ok(DemandEnvelope::from_alpha(grid, g.alpha.context("one of --alpha or --bounds-file is required")?)),
        Some(AttackFile::Delta(rows)) => {
            let (mut lo, mut hi) = (d.to_vec(), d.to_vec());
            for (id, delta) in rows {
                let i = bus_position(grid, id)?;
                lo[i] = d[i] - delta / base;
                hi[i] = d[i] + delta / base;
            }
            Ok(DemandEnvelope::new(grid, lo, hi)?)
        }
        Some(AttackFile::Envelope(rows)) => {
            let (mut lo, mut hi) = (d.to_vec(), d.to_vec());
            for (id, a, b) in rows {
                let i = bus_position(grid, id)?;
                lo[i] = a / base;
                hi[i] = b / base;
            }
            Ok(DemandEnvelope::new(grid, lo, hi)?)
        }
    }
}

fn emit(g: &Global, text: String) -> Result<()> {
    match &g.output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(g: &Global, r: &Report) -> String {
    match g.format {
        Format::Json => r.to_json(),
        Format::Text => r.to_text(),
    }
}

fn dispatch_report(g: &Global, l: &Loaded, d: &Dispatch<f64>) -> Result<u8> {
    let r = Report::from_dispatch(&l.grid, d, g.alpha);
    emit(g, render(g, &r))?;
    Ok(if d.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}

pub fn run(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    if let Some(n) = g.parallel {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    if let Some(dir) = &g.debug_lp {
        madshield::lp::enable_debug_dump(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    if let Some(a) = g.alpha {
        if !(a >= 0.0 && a.is_finite()) {
            bail!("--alpha must be a nonnegative number, got {a}");
        }
    }
    let opf = OpfOptions { segments: g.cost_segments as usize };
    match &cli.command {
        Command::Parse => {
            let l = load(g)?;
            let text = match g.format {
                Format::Text => to_native(&l.raw),
                Format::Json => serde_json::to_string_pretty(&l.raw)? + "\n",
            };
            emit(g, text)?;
            Ok(EXIT_OK)
        }
        Command::Flow => cmd_flow(g, &load(g)?),
        Command::Opf => {
            let l = load(g)?;
            let d = plain_opf(&l.grid, &l.mat, &opf)?;
            dispatch_report(g, &l, &d)
        }
        Command::Safe => {
            let l = load(g)?;
            let bounds = attack_bounds(g, &l.grid)?;
            let model = DroopModel::proportional(&l.grid)?;
            let d = safe_dispatch(&l.grid, &l.mat, &model, &bounds, &opf)?;
            dispatch_report(g, &l, &d)
        }
        Command::Conservative => {
            let l = load(g)?;
            let bounds = attack_bounds(g, &l.grid)?;
            let d = conservative_dispatch(&l.grid, &l.mat, &bounds, &opf)?;
            dispatch_report(g, &l, &d)
        }
        Command::Immune => {
            let l = load(g)?;
            let bounds = attack_bounds(g, &l.grid)?;
            let model = DroopModel::proportional(&l.grid)?;
            let opts = ImmuneOptions { rule: g.update_rule, max_iters: g.max_iters, opf };
            let d = immune(&l.grid, &l.mat, &model, &bounds, &opts)?;
            dispatch_report(g, &l, &d)
        }
        Command::VerifySecondary { method, limit, top_k, samples } => {
            cmd_verify(g, &load(g)?, *method, *limit, *top_k, *samples)
        }
        Command::AlphaBounds { exact_max, exact_limit, mirrored } => {
            cmd_alpha_bounds(g, &load(g)?, exact_max.then_some(*exact_limit), *mirrored)
        }
    }
}

fn cmd_flow(g: &Global, l: &Loaded) -> Result<u8> {
    let base = l.grid.base_mva();
    let pg = base_dispatch(&l.grid, g.base_dispatch);
    let flows = base_flows(&l.grid, &l.mat, g.base_dispatch);
    let mut r = Report::new(l.grid.name(), "flow");
    r.alpha = g.alpha;
    r.dispatch = pg.iter().map(|p| round_sig(p * base)).collect();
    r.flows = flows.iter().map(|f| round_sig(f * base)).collect();
    r.iterations = None;
    let change = if g.alpha.is_some() || g.bounds_file.is_some() {
        let bounds = attack_bounds(g, &l.grid)?;
        let model = DroopModel::proportional(&l.grid)?;
        Some(max_flow_change_saturated(&l.grid, &l.mat, &model, &pg, &bounds)?)
    } else {
        None
    };
    for (k, line) in l.grid.lines().iter().enumerate() {
        let ids = l.grid.bus_ids();
        let cap = l.grid.caps()[k] * base;
        let mut note = format!("line {}-{}: cap {}", ids[line.from], ids[line.to], round_sig(cap));
        if let Some(c) = &change {
            let _ = write!(note, ", worst change {}", round_sig(c.effective[k] * base));
        }
        r.notes.push(note);
    }
    r.feasible = flows.iter().zip(l.grid.caps()).all(|(f, c)| f.abs() <= *c + 1e-9);
    emit(g, render(g, &r))?;
    Ok(if r.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}

/// Seeded random extreme points of the envelope.
fn verify_sampled(l: &Loaded, env: &DemandEnvelope<f64>, samples: usize, seed: u64) -> Result<FeasibilityResult<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for _ in 0..samples {
        let d: Vec<f64> = env.lo().iter().zip(env.hi()).map(|(&a, &b)| if rng.gen::<bool>() { b } else { a }).collect();
        let s = min_shortfall(&l.grid, &l.mat, &d)?;
        if worst.as_ref().map_or(true, |w| s.total > w.0) {
            worst = Some((s.total, s.q, d));
        }
    }
    let (shortfall, q, d) = worst.unwrap_or((0.0, vec![0.0; l.grid.n()], env.lo().to_vec()));
    let controllable = shortfall <= VERDICT_TOL;
    Ok(FeasibilityResult { controllable, shortfall, q, witness: (!controllable).then_some(d), checked: samples, approximate: true })
}

fn cmd_verify(g: &Global, l: &Loaded, method: Method, limit: usize, top_k: usize, samples: usize) -> Result<u8> {
    let env = envelope(g, &l.grid)?;
    let base = l.grid.base_mva();
    let mut r = Report::new(l.grid.name(), format!("verify-{}", method_label(method)));
    r.alpha = g.alpha.map(round_sig);
    let enumerated = match method {
        Method::Bruteforce => Some(verify_bruteforce(&l.grid, &l.mat, &env, limit)?),
        Method::TopK => Some(verify_top_k(&l.grid, &l.mat, &env, top_k)?),
        Method::Sample => Some(verify_sampled(l, &env, samples, g.seed)?),
        Method::Beta | Method::GammaBeta => None,
    };
    let uncontrollable = if let Some(res) = enumerated {
        r.iterations = Some(res.checked);
        r.verdict = Some(
            match (res.controllable, res.approximate) {
                (false, _) => "uncontrollable",
                (true, false) => "controllable",
                (true, true) => "inconclusive",
            }
            .to_string(),
        );
        if res.approximate {
            r.notes.push(format!("approximate: {} extreme points checked", res.checked));
        }
        if let Some(w) = &res.witness {
            let w: Vec<String> = w.iter().map(|x| round_sig(x * base).to_string()).collect();
            r.notes.push(format!("worst demand [{}] MW, shortfall {} MW", w.join(", "), round_sig(res.shortfall * base)));
        }
        !res.controllable
    } else {
        let kind = if method == Method::Beta { ControllerKind::Beta } else { ControllerKind::GammaBeta };
        match synthesize(&l.grid, &l.mat, &env, kind, Formulation::default())? {
            Some(spec) => {
                r.eta = Some(round_sig(spec.eta));
                let reliable = spec.reliable();
                r.verdict = Some(if reliable { "controllable" } else { "inconclusive" }.to_string());
                r.dispatch = spec.beta.iter().map(|b| round_sig(*b)).collect();
                r.flows = controller_max_flows(&l.grid, &l.mat, &spec, &env).iter().map(|f| round_sig(f * base)).collect();
                r.notes.push("dispatch lists the participation factors beta; flows are worst-case magnitudes".into());
                if kind == ControllerKind::GammaBeta {
                    let gamma: Vec<String> = spec.gamma.iter().map(|x| round_sig(*x).to_string()).collect();
                    r.notes.push(format!("gamma [{}]", gamma.join(", ")));
                }
                if reliable && spec.eta > 1.0 {
                    r.notes.push("eta within tolerance of 1".into());
                }
            }
            None => {
                r.verdict = Some("inconclusive".into());
                r.notes.push("no controller meets the generator conditions".into());
            }
        }
        false
    };
    r.feasible = r.verdict.as_deref() == Some("controllable");
    emit(g, render(g, &r))?;
    Ok(if uncontrollable { EXIT_INFEASIBLE } else { EXIT_OK })
}

fn method_label(m: Method) -> &'static str {
    match m {
        Method::Bruteforce => "bruteforce",
        Method::Beta => "beta",
        Method::GammaBeta => "gamma-beta",
        Method::TopK => "top-k",
        Method::Sample => "sample",
    }
}

fn cmd_alpha_bounds(g: &Global, l: &Loaded, exact_limit: Option<usize>, mirrored: bool) -> Result<u8> {
    let cfg = IterConfig { lambda: g.lambda, stop_delta: g.stop_delta, ..IterConfig::default() };
    let b = alpha_bounds(&l.grid, &l.mat, &cfg, mirrored, exact_limit)?;
    let mut r = Report::new(l.grid.name(), "alpha-bounds").with_alpha_bounds(&b);
    r.iterations = Some(b.beta.iterations + b.gamma_beta.iterations);
    for (label, it) in [("beta", &b.beta), ("gamma-beta", &b.gamma_beta)] {
        r.notes.push(format!(
            "{label}: {} iterations, {} polish probes, final lambda {}{}",
            it.iterations,
            it.polish_probes,
            round_sig(it.lambda),
            if it.hit_iteration_limit { ", iteration limit reached" } else { "" }
        ));
    }
    if let Some(m) = &b.max {
        r.notes.push(format!("exact search: {} probes", m.probes));
    }
    let text = match g.format {
        Format::Json => r.to_json(),
        Format::Text => {
            let ab = &r.alpha_bounds;
            let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
            let mut s = String::new();
            let _ = writeln!(s, "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8}", "case", "a*", "a(b)", "a(g,b)", "a^", "amax");
            let _ = writeln!(
                s,
                "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8}",
                r.case,
                cell(ab.star),
                cell(ab.beta),
                cell(ab.gamma_beta),
                cell(ab.hat),
                cell(ab.max)
            );
            s.push('\n');
            s + &r.to_text()
        }
    };
    emit(g, text)?;
    Ok(EXIT_OK)
}
