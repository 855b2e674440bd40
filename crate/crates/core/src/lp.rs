//! Linear programming: problem representation and a dense bounded-variable
//! primal simplex.
//!
//! Every constraint row `a·x (<=|=|>=) b` gets a slack `s` with
//! `a·x + s = b`, so the working problem is `[A I] (x, s) = b` with simple
//! bounds on all columns. Rows whose slack cannot absorb the initial
//! residual get an artificial column and phase 1 minimizes their sum.
//!
//! Pricing is Dantzig's rule; after a run of degenerate pivots the solver
//! switches to Bland's rule until it makes progress again. The ratio test is
//! a two-pass Harris test that also considers bound flips of the entering
//! column.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use thiserror::Error;

use crate::linalg::{Lu, Mat};
use crate::scalar::Scalar;

pub const FEAS_TOL: f64 = 1e-6;
pub const PIVOT_TOL: f64 = 1e-7;
const OPT_TOL: f64 = 1e-9;
const DRIFT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// Simple bounds on a variable. Infinite ends are stored as IEEE
/// infinities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Bounds<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Bounds { lo, hi }
    }

    pub fn free() -> Self {
        Bounds { lo: T::neg_infinity(), hi: T::infinity() }
    }

    pub fn nonneg() -> Self {
        Bounds { lo: T::zero(), hi: T::infinity() }
    }

    pub fn fixed(v: T) -> Self {
        Bounds { lo: v, hi: v }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<(usize, T)>,
    pub relation: Relation,
    pub rhs: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram<T> {
    pub sense: Sense,
    pub objective: Vec<T>,
    pub bounds: Vec<Bounds<T>>,
    pub rows: Vec<Constraint<T>>,
    pub names: Vec<Option<String>>,
    /// Epigraph variables introduced by [`LinearProgram::add_abs`], with the
    /// indices of the two rows that define each of them.
    abs_vars: Vec<(usize, [usize; 2])>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpResult<T> {
    pub status: LpStatus,
    /// Primal solution; empty unless `status` is `Optimal`.
    pub x: Vec<T>,
    pub objective_value: T,
    /// For `Infeasible`, the rows that still carried a positive artificial
    /// at the end of phase 1.
    pub infeasible_rows: Vec<usize>,
}

impl<T: Scalar> LpResult<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("absolute-value variable {var} is used where its epigraph relaxation is not tight")]
    AbsNotTight { var: usize },
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            objective: Vec::new(),
            bounds: Vec::new(),
            rows: Vec::new(),
            names: Vec::new(),
            abs_vars: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, bounds: Bounds<T>, cost: T) -> usize {
        self.objective.push(cost);
        self.bounds.push(bounds);
        self.names.push(None);
        self.objective.len() - 1
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, bounds: Bounds<T>, cost: T) -> usize {
        let j = self.add_var(bounds, cost);
        self.names[j] = Some(name.into());
        j
    }

    /// Adds `count` variables sharing the same bounds and cost, returning
    /// the index of the first.
    pub fn add_vars(&mut self, count: usize, bounds: Bounds<T>, cost: T) -> usize {
        let first = self.num_vars();
        for _ in 0..count {
            self.add_var(bounds, cost);
        }
        first
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, T)>, relation: Relation, rhs: T) -> usize {
        self.rows.push(Constraint { coeffs, relation, rhs });
        self.rows.len() - 1
    }

    /// Introduces `u >= |expr + constant|` as two rows and returns `u`.
    ///
    /// The relaxation `u >= ±expr` only equals `|expr|` at an optimum when
    /// `u` is pushed down by the rest of the program. [`solve`] rejects
    /// programs where `u` appears with the wrong sign in the objective or in
    /// any other row.
    pub fn add_abs(&mut self, expr: &[(usize, T)], constant: T) -> usize {
        let u = self.add_var(Bounds::nonneg(), T::zero());
        let mut pos = vec![(u, T::one())];
        let mut neg = vec![(u, T::one())];
        for &(j, a) in expr {
            pos.push((j, -a));
            neg.push((j, a));
        }
        let r1 = self.add_row(pos, Relation::Ge, constant);
        let r2 = self.add_row(neg, Relation::Ge, -constant);
        self.abs_vars.push((u, [r1, r2]));
        u
    }

    /// Linearizes a batch of absolute-value expressions, see
    /// [`LinearProgram::add_abs`].
    pub fn abs_linearize(&mut self, exprs: &[(Vec<(usize, T)>, T)]) -> Vec<usize> {
        exprs.iter().map(|(e, c)| self.add_abs(e, *c)).collect()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n || self.names.len() != n {
            return Err(LpError::Malformed("objective, bounds and names differ in length".into()));
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if b.lo.is_nan() || b.hi.is_nan() || b.lo > b.hi || b.lo == T::infinity() || b.hi == T::neg_infinity() {
                return Err(LpError::Malformed(format!("variable {j} has invalid bounds")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has a non-finite rhs")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Malformed(format!("row {i} references variable {j} of {n}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        self.check_abs_tightness()
    }

    fn check_abs_tightness(&self) -> Result<(), LpError> {
        for &(u, defining) in &self.abs_vars {
            let c = self.objective[u];
            let wrong_obj = match self.sense {
                Sense::Minimize => c < T::zero(),
                Sense::Maximize => c > T::zero(),
            };
            if wrong_obj || self.bounds[u].hi != T::infinity() {
                return Err(LpError::AbsNotTight { var: u });
            }
            for (i, row) in self.rows.iter().enumerate() {
                if defining.contains(&i) {
                    continue;
                }
                for &(j, a) in &row.coeffs {
                    if j != u || a == T::zero() {
                        continue;
                    }
                    let ok = match row.relation {
                        Relation::Le => a > T::zero(),
                        Relation::Ge => a < T::zero(),
                        Relation::Eq => false,
                    };
                    if !ok {
                        return Err(LpError::AbsNotTight { var: u });
                    }
                }
            }
        }
        Ok(())
    }

    /// Value of the objective at `x`.
    pub fn objective_at(&self, x: &[T]) -> T {
        crate::scalar::dot(&self.objective, x)
    }

    /// Largest violation of rows or bounds at `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (b, &v) in self.bounds.iter().zip(x) {
            worst = worst.max(b.lo - v).max(v - b.hi);
        }
        for row in &self.rows {
            let ax: T = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match row.relation {
                Relation::Le => ax - row.rhs,
                Relation::Ge => row.rhs - ax,
                Relation::Eq => (ax - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    fn var_name(&self, j: usize) -> String {
        match &self.names[j] {
            Some(s) => s.clone(),
            None => format!("x{j}"),
        }
    }

    /// Renders the program in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let term = |out: &mut String, first: bool, a: T, name: &str| {
            let sign = if a < T::zero() { "-" } else if first { "" } else { "+" };
            let _ = write!(out, " {sign} {} {name}", a.abs());
        };
        out.push_str(match self.sense {
            Sense::Minimize => "Minimize\n obj:",
            Sense::Maximize => "Maximize\n obj:",
        });
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != T::zero() {
                term(&mut out, first, c, &self.var_name(j));
                first = false;
            }
        }
        if first {
            out.push_str(" 0 x0");
        }
        out.push_str("\nSubject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " c{i}:");
            let mut first = true;
            for &(j, a) in &row.coeffs {
                term(&mut out, first, a, &self.var_name(j));
                first = false;
            }
            if first {
                out.push_str(" 0 x0");
            }
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {rel} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (j, b) in self.bounds.iter().enumerate() {
            let name = self.var_name(j);
            match (b.lo.is_finite(), b.hi.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {name} free");
                }
                (true, false) => {
                    let _ = writeln!(out, " {name} >= {}", b.lo);
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {name} <= {}", b.hi);
                }
                (true, true) => {
                    let _ = writeln!(out, " {} <= {name} <= {}", b.lo, b.hi);
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Nonbasic {
    Lower,
    Upper,
    Free,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Simplex<T> {
    t: Mat<T>,
    beta: Vec<T>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
    state: Vec<Nonbasic>,
    val: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
    d: Vec<T>,
    iters: usize,
    max_iters: usize,
}

impl<T: Scalar> Simplex<T> {
    fn cols(&self) -> usize {
        self.lo.len()
    }

    fn price(&mut self, cost: &[T]) {
        let m = self.basis.len();
        for j in 0..self.cols() {
            let mut dj = cost[j];
            for i in 0..m {
                let cb = cost[self.basis[i]];
                if cb != T::zero() {
                    dj = dj - cb * self.t[(i, j)];
                }
            }
            self.d[j] = dj;
        }
    }

    fn entering(&self, bland: bool) -> Option<(usize, T)> {
        let tol = T::tol(OPT_TOL);
        let mut best: Option<(usize, T, T)> = None;
        for j in 0..self.cols() {
            if self.row_of[j].is_some() || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = match self.state[j] {
                Nonbasic::Lower if dj < -tol => T::one(),
                Nonbasic::Upper if dj > tol => -T::one(),
                Nonbasic::Free if dj.abs() > tol => -dj.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, s)| dj.abs() > s) {
                best = Some((j, dir, dj.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Largest step the basic variable in row `i` allows, or `None` if it
    /// does not move towards a finite bound. `relax` widens the bounds.
    fn row_limit(&self, i: usize, a: T, relax: T) -> Option<T> {
        let piv = T::tol(PIVOT_TOL);
        let b = self.basis[i];
        if a > piv && self.lo[b].is_finite() {
            Some((self.beta[i] - self.lo[b] + relax) / a)
        } else if a < -piv && self.hi[b].is_finite() {
            Some((self.hi[b] - self.beta[i] + relax) / -a)
        } else {
            None
        }
    }

    /// Returns `(row, step)`; `row == None` means a bound flip of the entering
    /// variable, `step == inf` means unbounded.
    fn ratio(&self, j: usize, dir: T, bland: bool) -> (Option<usize>, T) {
        let m = self.basis.len();
        let relax = T::tol(DRIFT_TOL);
        let flip = self.hi[j] - self.lo[j];
        let mut theta = flip;
        for i in 0..m {
            let a = self.t[(i, j)] * dir;
            if let Some(l) = self.row_limit(i, a, relax) {
                theta = theta.min(l);
            }
        }
        if theta == T::infinity() {
            return (None, theta);
        }
        let mut pick: Option<(usize, T)> = None;
        for i in 0..m {
            let a = self.t[(i, j)] * dir;
            let Some(l) = self.row_limit(i, a, T::zero()) else { continue };
            if l > theta {
                continue;
            }
            let better = match pick {
                None => true,
                Some((p, _)) if bland => self.basis[i] < self.basis[p],
                Some((p, _)) => a.abs() > (self.t[(p, j)]).abs(),
            };
            if better {
                pick = Some((i, l.max(T::zero())));
            }
        }
        match pick {
            Some((i, l)) if l < flip => (Some(i), l),
            _ => (None, flip),
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let m = self.basis.len();
        let ncols = self.cols();
        let p = self.t[(r, j)];
        for v in self.t.row_mut(r) {
            *v = *v / p;
        }
        self.t[(r, j)] = T::one();
        let prow: Vec<T> = self.t.row(r).to_vec();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = self.t[(i, j)];
            if f == T::zero() {
                continue;
            }
            let row = self.t.row_mut(i);
            for c in 0..ncols {
                if prow[c] != T::zero() {
                    row[c] = row[c] - f * prow[c];
                }
            }
            row[j] = T::zero();
        }
        let dj = self.d[j];
        if dj != T::zero() {
            for c in 0..ncols {
                self.d[c] = self.d[c] - dj * prow[c];
            }
            self.d[j] = T::zero();
        }
        let leaving = self.basis[r];
        self.row_of[leaving] = None;
        self.basis[r] = j;
        self.row_of[j] = Some(r);
    }

    fn run(&mut self, cost: &[T]) -> Result<PhaseEnd, LpError> {
        self.price(cost);
        let mut degenerate = 0usize;
        loop {
            if self.iters >= self.max_iters {
                return Err(LpError::IterationLimit(self.max_iters));
            }
            self.iters += 1;
            let bland = degenerate >= DEGENERATE_RUN;
            let Some((j, dir)) = self.entering(bland) else {
                return Ok(PhaseEnd::Optimal);
            };
            let (row, step) = self.ratio(j, dir, bland);
            if step == T::infinity() {
                return Ok(PhaseEnd::Unbounded);
            }
            if step <= T::epsilon() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for i in 0..self.basis.len() {
                let a = self.t[(i, j)];
                if a != T::zero() {
                    self.beta[i] = self.beta[i] - dir * step * a;
                }
            }
            match row {
                None => {
                    let (state, v) = if dir > T::zero() {
                        (Nonbasic::Upper, self.hi[j])
                    } else {
                        (Nonbasic::Lower, self.lo[j])
                    };
                    self.state[j] = state;
                    self.val[j] = v;
                }
                Some(r) => {
                    let leaving = self.basis[r];
                    let a = self.t[(r, j)] * dir;
                    let (state, v) = if a > T::zero() {
                        (Nonbasic::Lower, self.lo[leaving])
                    } else {
                        (Nonbasic::Upper, self.hi[leaving])
                    };
                    self.state[leaving] = state;
                    self.val[leaving] = v;
                    let entering_val = self.val[j] + dir * step;
                    self.pivot(r, j);
                    self.beta[r] = entering_val;
                }
            }
        }
    }

    fn value(&self, j: usize) -> T {
        match self.row_of[j] {
            Some(r) => self.beta[r],
            None => self.val[j],
        }
    }
}

fn initial_state<T: Scalar>(lo: T, hi: T) -> (Nonbasic, T) {
    if lo.is_finite() {
        (Nonbasic::Lower, lo)
    } else if hi.is_finite() {
        (Nonbasic::Upper, hi)
    } else {
        (Nonbasic::Free, T::zero())
    }
}

/// Solves `lp` with the dense reference simplex.
static DUMP_DIR: OnceLock<PathBuf> = OnceLock::new();
static DUMP_COUNT: AtomicUsize = AtomicUsize::new(0);

/// Writes every subsequently solved program to `dir/lp_NNNNNN.lp`.
/// Only the first call in a process takes effect.
pub fn enable_debug_dump(dir: impl Into<PathBuf>) -> std::io::Result<()> {
    let dir = dir.into();
    std::fs::create_dir_all(&dir)?;
    let _ = DUMP_DIR.set(dir);
    Ok(())
}

fn dump<T: Scalar>(lp: &LinearProgram<T>) {
    if let Some(dir) = DUMP_DIR.get() {
        let i = DUMP_COUNT.fetch_add(1, Ordering::Relaxed);
        let _ = std::fs::write(dir.join(format!("lp_{i:06}.lp")), lp.to_lp_format());
    }
}

pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpResult<T>, LpError> {
    lp.validate()?;
    dump(lp);
    let n = lp.num_vars();
    let m = lp.rows.len();

    let mut lo = Vec::with_capacity(n + 2 * m);
    let mut hi = Vec::with_capacity(n + 2 * m);
    for b in &lp.bounds {
        lo.push(b.lo);
        hi.push(b.hi);
    }
    for row in &lp.rows {
        let (l, h) = match row.relation {
            Relation::Le => (T::zero(), T::infinity()),
            Relation::Ge => (T::neg_infinity(), T::zero()),
            Relation::Eq => (T::zero(), T::zero()),
        };
        lo.push(l);
        hi.push(h);
    }

    let mut state = Vec::with_capacity(n + 2 * m);
    let mut val = Vec::with_capacity(n + 2 * m);
    for j in 0..n {
        let (s, v) = initial_state(lo[j], hi[j]);
        state.push(s);
        val.push(v);
    }

    // Residual each slack must absorb with structurals at their start values.
    let mut resid = Vec::with_capacity(m);
    for row in &lp.rows {
        let ax: T = row.coeffs.iter().map(|&(j, a)| a * val[j]).sum();
        resid.push(row.rhs - ax);
    }
    let mut art_rows = Vec::new();
    let mut art_sign = Vec::new();
    for i in 0..m {
        let (l, h) = (lo[n + i], hi[n + i]);
        if resid[i] < l || resid[i] > h {
            art_rows.push(i);
        }
    }
    let n_art = art_rows.len();
    let ncols = n + m + n_art;
    let mut t = Mat::zeros(m, ncols);
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            t[(i, j)] = t[(i, j)] + a;
        }
        t[(i, n + i)] = T::one();
    }
    let mut beta = resid.clone();
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut row_of = vec![None; ncols];
    for i in 0..m {
        row_of[n + i] = Some(i);
    }
    // Slack columns start basic; rows needing an artificial get it basic
    // instead and the slack moves to its nearest bound.
    state.extend(std::iter::repeat_n(Nonbasic::Lower, m + n_art));
    val.extend(std::iter::repeat_n(T::zero(), m + n_art));
    for (k, &i) in art_rows.iter().enumerate() {
        let s = n + i;
        let clamped = resid[i].max(lo[s]).min(hi[s]);
        let (st, v) = if clamped == lo[s] { (Nonbasic::Lower, lo[s]) } else { (Nonbasic::Upper, hi[s]) };
        state[s] = st;
        val[s] = v;
        row_of[s] = None;
        let sign = (resid[i] - clamped).signum();
        art_sign.push(sign);
        let a = n + m + k;
        t[(i, a)] = sign;
        // Put the row in terms of the artificial as basic variable.
        for v in t.row_mut(i) {
            *v = *v * sign;
        }
        beta[i] = (resid[i] - clamped) * sign;
        basis[i] = a;
        row_of[a] = Some(i);
        lo.push(T::zero());
        hi.push(T::infinity());
    }

    let mut sx = Simplex {
        t,
        beta,
        basis,
        row_of,
        state,
        val,
        lo,
        hi,
        d: vec![T::zero(); ncols],
        iters: 0,
        max_iters: 50_000 + 50 * (m + ncols),
    };

    if n_art > 0 {
        let mut cost1 = vec![T::zero(); ncols];
        for c in cost1.iter_mut().skip(n + m) {
            *c = T::one();
        }
        match sx.run(&cost1)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => return Err(LpError::Numerical("phase 1 reported unbounded".into())),
        }
        let infeas: T = (0..n_art).map(|k| sx.value(n + m + k)).sum();
        let scale = T::one() + crate::scalar::max_abs(&resid);
        if infeas > T::tol(FEAS_TOL) * scale {
            let rows = (0..n_art)
                .filter(|&k| sx.value(n + m + k) > T::tol(FEAS_TOL))
                .map(|k| art_rows[k])
                .collect();
            return Ok(LpResult {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective_value: T::nan(),
                infeasible_rows: rows,
            });
        }
        for k in 0..n_art {
            let a = n + m + k;
            sx.hi[a] = T::zero();
            if sx.row_of[a].is_none() {
                sx.state[a] = Nonbasic::Lower;
                sx.val[a] = T::zero();
            }
        }
        drive_out_artificials(&mut sx, n + m);
    }

    let sign = match lp.sense {
        Sense::Minimize => T::one(),
        Sense::Maximize => -T::one(),
    };
    let mut cost2 = vec![T::zero(); ncols];
    for j in 0..n {
        cost2[j] = sign * lp.objective[j];
    }
    if let PhaseEnd::Unbounded = sx.run(&cost2)? {
        return Ok(LpResult {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective_value: sign * T::neg_infinity(),
            infeasible_rows: Vec::new(),
        });
    }

    refine(&mut sx, lp, n, m)?;
    let x: Vec<T> = (0..n).map(|j| sx.value(j)).collect();
    let viol = lp.max_violation(&x);
    let rhs_scale = T::one() + lp.rows.iter().fold(T::zero(), |a, r| a.max(r.rhs.abs()));
    if viol > T::tol(FEAS_TOL) * rhs_scale {
        return Err(LpError::Numerical(format!("solution violates constraints by {viol}")));
    }
    Ok(LpResult { objective_value: lp.objective_at(&x), x, status: LpStatus::Optimal, infeasible_rows: Vec::new() })
}

/// Pivots zero-valued basic artificials out of the basis where the row
/// allows it; rows that cannot be pivoted are redundant and keep a fixed
/// artificial.
fn drive_out_artificials<T: Scalar>(sx: &mut Simplex<T>, first_art: usize) {
    for r in 0..sx.basis.len() {
        if sx.basis[r] < first_art {
            continue;
        }
        let mut best: Option<(usize, T)> = None;
        for j in 0..first_art {
            if sx.row_of[j].is_some() || sx.lo[j] == sx.hi[j] {
                continue;
            }
            let a = sx.t[(r, j)].abs();
            if a > T::tol(1e-7) && best.is_none_or(|(_, b)| a > b) {
                best = Some((j, a));
            }
        }
        if let Some((j, _)) = best {
            let delta = sx.beta[r] / sx.t[(r, j)];
            for i in 0..sx.basis.len() {
                let a = sx.t[(i, j)];
                if a != T::zero() {
                    sx.beta[i] = sx.beta[i] - a * delta;
                }
            }
            let leaving = sx.basis[r];
            sx.state[leaving] = Nonbasic::Lower;
            sx.val[leaving] = T::zero();
            let entering_val = sx.val[j] + delta;
            sx.pivot(r, j);
            sx.beta[r] = entering_val;
        }
    }
}

/// Recomputes the basic values from the original rows when accumulated
/// roundoff in the tableau has made them drift.
fn refine<T: Scalar>(sx: &mut Simplex<T>, lp: &LinearProgram<T>, n: usize, m: usize) -> Result<(), LpError> {
    if m == 0 {
        return Ok(());
    }
    let col = |j: usize, i: usize| -> T {
        if j < n {
            lp.rows[i].coeffs.iter().filter(|&&(c, _)| c == j).map(|&(_, a)| a).sum()
        } else if j < n + m {
            if j - n == i { T::one() } else { T::zero() }
        } else {
            T::zero()
        }
    };
    let x: Vec<T> = (0..n + m).map(|j| sx.value(j)).collect();
    let mut worst = T::zero();
    for (i, row) in lp.rows.iter().enumerate() {
        let ax: T = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
        worst = worst.max((ax + x[n + i] - row.rhs).abs());
    }
    if worst <= T::tol(DRIFT_TOL) {
        return Ok(());
    }
    // Artificials left basic sit on redundant rows at value zero.
    let mut bm = Mat::zeros(m, m);
    let mut rhs: Vec<T> = lp.rows.iter().map(|r| r.rhs).collect();
    for j in 0..n + m {
        if sx.row_of[j].is_some() {
            continue;
        }
        let v = sx.val[j];
        if v == T::zero() {
            continue;
        }
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = *r - col(j, i) * v;
        }
    }
    if sx.basis.iter().any(|&b| b >= n + m) {
        // The refined system would be singular; keep the tableau values.
        return Ok(());
    }
    for (k, &b) in sx.basis.iter().enumerate() {
        for i in 0..m {
            bm[(i, k)] = col(b, i);
        }
    }
    let lu = Lu::factor(&bm).ok_or_else(|| LpError::Numerical("singular basis during refinement".into()))?;
    let xb = lu.solve(&rhs);
    for (k, v) in xb.into_iter().enumerate() {
        sx.beta[k] = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lp1(sense: Sense) -> LinearProgram<f64> {
        let mut lp = LinearProgram::new(sense);
        lp.add_var(Bounds::nonneg(), 1.0);
        lp
    }

    #[test]
    fn bounded_max() {
        let mut lp = lp1(Sense::Maximize);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 1.0);
        let r = solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::<f64>::new(Sense::Minimize);
        lp.add_var(Bounds::free(), 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 2.0);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 1.0);
        let r = solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
        assert!(!r.infeasible_rows.is_empty());
    }

    #[test]
    fn unbounded_objective() {
        let lp = lp1(Sense::Maximize);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn abs_of_fixed_value() {
        let mut lp = LinearProgram::<f64>::new(Sense::Minimize);
        let x = lp.add_var(Bounds::free(), 0.0);
        lp.add_row(vec![(x, 1.0)], Relation::Eq, -3.0);
        let u = lp.add_abs(&[(x, 1.0)], 0.0);
        lp.objective[u] = 1.0;
        let r = solve(&lp).unwrap();
        assert!((r.objective_value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn abs_of_free_variable_is_zero() {
        let mut lp = LinearProgram::<f64>::new(Sense::Minimize);
        let x = lp.add_var(Bounds::free(), 0.0);
        let u = lp.add_abs(&[(x, 1.0)], 0.0);
        lp.objective[u] = 1.0;
        let r = solve(&lp).unwrap();
        assert!(r.objective_value.abs() < 1e-12);
        assert!(r.x[x].abs() < 1e-12);
    }

    #[test]
    fn abs_in_wrong_position_is_rejected() {
        let mut lp = LinearProgram::<f64>::new(Sense::Maximize);
        let x = lp.add_var(Bounds::new(-1.0, 1.0), 0.0);
        let u = lp.add_abs(&[(x, 1.0)], 0.0);
        lp.objective[u] = 1.0;
        assert_eq!(solve(&lp), Err(LpError::AbsNotTight { var: u }));

        let mut lp = LinearProgram::<f64>::new(Sense::Minimize);
        let x = lp.add_var(Bounds::new(-1.0, 1.0), 0.0);
        let u = lp.add_abs(&[(x, 1.0)], 0.0);
        lp.add_row(vec![(u, 1.0)], Relation::Ge, 0.5);
        assert_eq!(solve(&lp), Err(LpError::AbsNotTight { var: u }));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance.
        let mut lp = LinearProgram::<f64>::new(Sense::Minimize);
        for c in [-0.75, 150.0, -0.02, 6.0] {
            lp.add_var(Bounds::nonneg(), c);
        }
        lp.add_row(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0);
        lp.add_row(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0);
        lp.add_row(vec![(2, 1.0)], Relation::Le, 1.0);
        let r = solve(&lp).unwrap();
        assert!((r.objective_value + 0.05).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ranges() {
        // min x + 2y, x + y = 3, x <= 2, y in [0, 5]
        let mut lp = LinearProgram::<f64>::new(Sense::Minimize);
        let x = lp.add_var(Bounds::new(0.0, 2.0), 1.0);
        let y = lp.add_var(Bounds::new(0.0, 5.0), 2.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Relation::Eq, 3.0);
        let r = solve(&lp).unwrap();
        assert!((r.x[x] - 2.0).abs() < 1e-12 && (r.x[y] - 1.0).abs() < 1e-12);
        assert!((r.objective_value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_precision_solves() {
        let mut lp = LinearProgram::<f32>::new(Sense::Maximize);
        let x = lp.add_var(Bounds::nonneg(), 3.0);
        let y = lp.add_var(Bounds::nonneg(), 2.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        lp.add_row(vec![(x, 1.0), (y, 3.0)], Relation::Le, 6.0);
        lp.add_row(vec![(x, 1.0)], Relation::Le, 3.0);
        let r = solve(&lp).unwrap();
        assert!((r.objective_value - 11.0).abs() < 1e-4);
    }

    #[test]
    fn lp_text_dump_lists_every_row() {
        let mut lp = LinearProgram::<f64>::new(Sense::Maximize);
        let x = lp.add_named_var("alpha", Bounds::free(), 1.0);
        lp.add_row(vec![(x, 2.0)], Relation::Le, 1.0);
        let s = lp.to_lp_format();
        assert!(s.starts_with("Maximize"));
        assert!(s.contains("c0:  2 alpha <= 1"));
        assert!(s.contains("alpha free"));
    }

    /// `min c·x, A x >= b, x >= 0` and its dual `max b·y, Aᵀy <= c, y >= 0`.
    fn primal_dual(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> (LinearProgram<f64>, LinearProgram<f64>) {
        let (m, n) = (a.len(), c.len());
        let mut p = LinearProgram::<f64>::new(Sense::Minimize);
        for &cj in c {
            p.add_var(Bounds::nonneg(), cj);
        }
        for i in 0..m {
            p.add_row((0..n).map(|j| (j, a[i][j])).collect(), Relation::Ge, b[i]);
        }
        let mut d = LinearProgram::<f64>::new(Sense::Maximize);
        for &bi in b {
            d.add_var(Bounds::nonneg(), bi);
        }
        for j in 0..n {
            d.add_row((0..m).map(|i| (i, a[i][j])).collect(), Relation::Le, c[j]);
        }
        (p, d)
    }

    proptest! {
        #[test]
        fn strong_duality_holds(
            m in 1usize..6,
            n in 1usize..6,
            seed in proptest::collection::vec(0.0f64..1.0, 72),
        ) {
            let a: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| 0.1 + seed[i * 6 + j]).collect()).collect();
            let b: Vec<f64> = (0..m).map(|i| seed[36 + i] * 4.0 - 1.0).collect();
            let c: Vec<f64> = (0..n).map(|j| 0.2 + seed[48 + j]).collect();
            let (p, d) = primal_dual(&a, &b, &c);
            let rp = solve(&p).unwrap();
            let rd = solve(&d).unwrap();
            prop_assert_eq!(rp.status, LpStatus::Optimal);
            prop_assert_eq!(rd.status, LpStatus::Optimal);
            prop_assert!((rp.objective_value - rd.objective_value).abs() < 1e-6);
            prop_assert!(p.max_violation(&rp.x) < 1e-9);
        }

        #[test]
        fn abs_objective_matches_grid_search(
            w1 in -2.0f64..2.0, w2 in -2.0f64..2.0, k in -1.0f64..1.0,
            l1 in 0.0f64..1.0, l2 in 0.0f64..1.0, c in -1.0f64..1.0,
        ) {
            // min |w1 x + w2 y + c| + l1 |x - k| + l2 |y| over the unit box.
            let mut lp = LinearProgram::<f64>::new(Sense::Minimize);
            let x = lp.add_var(Bounds::new(-1.0, 1.0), 0.0);
            let y = lp.add_var(Bounds::new(-1.0, 1.0), 0.0);
            let u = lp.abs_linearize(&[
                (vec![(x, w1), (y, w2)], c),
                (vec![(x, 1.0)], -k),
                (vec![(y, 1.0)], 0.0),
            ]);
            lp.objective[u[0]] = 1.0;
            lp.objective[u[1]] = l1;
            lp.objective[u[2]] = l2;
            let r = solve(&lp).unwrap();
            let f = |x: f64, y: f64| (w1 * x + w2 * y + c).abs() + l1 * (x - k).abs() + l2 * y.abs();
            let steps = 200;
            let mut best = f64::INFINITY;
            for i in 0..=steps {
                for j in 0..=steps {
                    let gx = -1.0 + 2.0 * i as f64 / steps as f64;
                    let gy = -1.0 + 2.0 * j as f64 / steps as f64;
                    best = best.min(f(gx, gy));
                }
            }
            prop_assert!(r.objective_value <= best + 1e-9);
            prop_assert!(r.objective_value >= best - 0.03 * (w1.abs() + w2.abs() + l1 + l2));
            prop_assert!((f(r.x[x], r.x[y]) - r.objective_value).abs() < 1e-9);
        }
    }
}
