//! Primal-dual interior point solver (Mehrotra predictor-corrector).
//!
//! The program is presolved (fixed variables substituted, singleton rows turned into bounds),
//! brought to the form `min cᵀx, Ax = b, 0 ≤ x ≤ u` with slack columns for ranged rows,
//! equilibrated, and solved through the normal equations `A Θ Aᵀ Δy = rhs`. The normal matrix
//! is factored with an envelope Cholesky, which is cheap when rows are emitted in time
//! order: a row then only couples with rows of neighbouring steps.

use super::program::LinearProgram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    /// Relative primal, dual and gap tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub status: IpmStatus,
    /// Values of every original variable (meaningless unless optimal).
    pub x: Vec<f64>,
    pub iterations: usize,
}

pub fn solve(lp: &LinearProgram, opts: &IpmOptions) -> Result<IpmResult> {
    let pre = match presolve(lp)? {
        Some(p) => p,
        None => {
            return Ok(IpmResult {
                status: IpmStatus::Infeasible,
                x: vec![0.0; lp.num_vars()],
                iterations: 0,
            })
        }
    };
    let std = StandardForm::new(lp, &pre);
    let mut x = pre.fixed_values(lp);
    if std.cols.is_empty() {
        return Ok(IpmResult {
            status: IpmStatus::Optimal,
            x,
            iterations: 0,
        });
    }
    // a breakdown near a degenerate vertex looks like infeasibility; the regularised run
    // settles it at the price of slower final convergence
    let first = mehrotra(&std, opts, 0.0);
    let (xs, iterations, status) = match first {
        Ok(r) if r.2 != IpmStatus::Infeasible => r,
        first => match (mehrotra(&std, opts, PRIMAL_REG), first) {
            (Ok((x, k, status)), Ok((_, k0, _))) => (x, k0 + k, status),
            (Ok(r), Err(_)) => r,
            (Err(_), first) => first?,
        },
    };
    std.recover(&xs, &mut x);
    for j in 0..x.len() {
        x[j] = x[j].clamp(pre.lower[j], pre.upper[j]);
    }
    Ok(IpmResult { status, x, iterations })
}

struct Presolved {
    lower: Vec<f64>,
    upper: Vec<f64>,
    fixed: Vec<bool>,
    active_rows: Vec<bool>,
}

impl Presolved {
    fn fixed_values(&self, lp: &LinearProgram) -> Vec<f64> {
        (0..lp.num_vars())
            .map(|j| if self.fixed[j] { self.lower[j] } else { 0.0 })
            .collect()
    }
}

fn feas_tol(v: f64) -> f64 {
    1e-9 * v.abs().max(1.0)
}

// Returns None when presolve proves infeasibility.
fn presolve(lp: &LinearProgram) -> Result<Option<Presolved>> {
    let n = lp.num_vars();
    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    let mut fixed = vec![false; n];
    for j in 0..n {
        if lower[j] > upper[j] + feas_tol(upper[j]) {
            return Ok(None);
        }
        if !(lower[j] < upper[j]) {
            let v = if lower[j].is_finite() { lower[j] } else { upper[j] };
            if !v.is_finite() {
                return Err(Error::Solver(format!("variable {} has no finite value", lp.names[j])));
            }
            lower[j] = v;
            upper[j] = v;
            fixed[j] = true;
        }
    }
    let mut active_rows = vec![true; lp.num_rows()];
    loop {
        let mut changed = false;
        for (i, row) in lp.rows.iter().enumerate() {
            if !active_rows[i] {
                continue;
            }
            let mut constant = 0.0;
            let mut free_terms = 0;
            let mut single = (0, 0.0);
            for &(j, a) in &row.coefs {
                if a == 0.0 {
                    continue;
                }
                if fixed[j] {
                    constant += a * lower[j];
                } else {
                    free_terms += 1;
                    single = (j, a);
                }
            }
            match free_terms {
                0 => {
                    let tol = feas_tol(row.lo.abs().max(row.hi.abs()).min(constant.abs().max(1.0)));
                    if constant < row.lo - tol || constant > row.hi + tol {
                        return Ok(None);
                    }
                    active_rows[i] = false;
                    changed = true;
                }
                1 => {
                    let (j, a) = single;
                    let (mut lo, mut hi) = ((row.lo - constant) / a, (row.hi - constant) / a);
                    if a < 0.0 {
                        std::mem::swap(&mut lo, &mut hi);
                    }
                    lower[j] = lower[j].max(lo);
                    upper[j] = upper[j].min(hi);
                    let tol = feas_tol(lower[j].abs().max(upper[j].abs()).min(1e12));
                    if lower[j] > upper[j] + tol {
                        return Ok(None);
                    }
                    if upper[j] - lower[j] <= tol {
                        let v = 0.5 * (lower[j] + upper[j]);
                        lower[j] = v;
                        upper[j] = v;
                        fixed[j] = true;
                    }
                    active_rows[i] = false;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Some(Presolved {
        lower,
        upper,
        fixed,
        active_rows,
    }))
}

// How a standard-form column maps back: original variable (or row slack) = shift + sign·x.
#[derive(Clone, Copy)]
enum Origin {
    Var(usize),
    Slack,
}

struct Column {
    origin: Origin,
    sign: f64,
    shift: f64,
    cost: f64,
    upper: f64,
    entries: Vec<(usize, f64)>,
}

struct StandardForm {
    m: usize,
    cols: Vec<Column>,
    b: Vec<f64>,
}

impl StandardForm {
    fn new(lp: &LinearProgram, pre: &Presolved) -> Self {
        let n = lp.num_vars();
        let mut col_of = vec![Vec::new(); n];
        let mut cols: Vec<Column> = Vec::new();
        let push_bounded = |origin: Origin, lo: f64, hi: f64, cost: f64, cols: &mut Vec<Column>| -> Vec<usize> {
            let mut ids = Vec::new();
            let mut add = |sign: f64, shift: f64, upper: f64| {
                cols.push(Column {
                    origin,
                    sign,
                    shift,
                    cost: sign * cost,
                    upper,
                    entries: Vec::new(),
                });
                ids.push(cols.len() - 1);
            };
            match (lo.is_finite(), hi.is_finite()) {
                (true, _) => add(1.0, lo, hi - lo),
                (false, true) => add(-1.0, hi, f64::INFINITY),
                (false, false) => {
                    add(1.0, 0.0, f64::INFINITY);
                    add(-1.0, 0.0, f64::INFINITY);
                }
            }
            ids
        };
        for j in 0..n {
            if !pre.fixed[j] {
                col_of[j] = push_bounded(Origin::Var(j), pre.lower[j], pre.upper[j], lp.cost[j], &mut cols);
            }
        }
        let mut b = Vec::new();
        let mut m = 0;
        for (i, row) in lp.rows.iter().enumerate() {
            if !pre.active_rows[i] {
                continue;
            }
            let mut rhs = 0.0;
            for &(j, a) in &row.coefs {
                if a == 0.0 {
                    continue;
                }
                if pre.fixed[j] {
                    rhs -= a * pre.lower[j];
                } else {
                    for &c in &col_of[j] {
                        let col = &mut cols[c];
                        rhs -= a * col.shift;
                        col.entries.push((m, a * col.sign));
                    }
                }
            }
            // ranged or one-sided rows: Σ a x − v = 0 with v ∈ [lo, hi] shifted by the constant
            if row.lo != row.hi {
                let ids = push_bounded(Origin::Slack, row.lo + rhs, row.hi + rhs, 0.0, &mut cols);
                let mut total = 0.0;
                for c in ids {
                    let col = &mut cols[c];
                    total -= col.shift;
                    col.entries.push((m, -col.sign));
                }
                b.push(-total);
            } else {
                b.push(row.lo + rhs);
            }
            m += 1;
        }
        Self { m, cols, b }
    }

    fn recover(&self, xs: &[f64], x: &mut [f64]) {
        let mut touched = vec![false; x.len()];
        for (col, v) in self.cols.iter().zip(xs) {
            if let Origin::Var(j) = col.origin {
                if !touched[j] {
                    x[j] = col.shift;
                    touched[j] = true;
                }
                x[j] += col.sign * v;
            }
        }
    }
}

/// Sparse matrix in column-major form with a row-major mirror.
struct Sparse {
    m: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Sparse {
    fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.col_ptr.len() - 1 {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                    out[self.row_idx[p]] += self.vals[p] * xj;
                }
            }
        }
    }

    fn mul_t(&self, y: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                s += self.vals[p] * y[self.row_idx[p]];
            }
            *o = s;
        }
    }
}

/// Envelope (profile) storage of the lower triangle of a symmetric matrix.
struct Envelope {
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
    diag_scale: Vec<f64>,
}

impl Envelope {
    fn new(a: &Sparse) -> Self {
        let m = a.m;
        let mut first: Vec<usize> = (0..m).collect();
        for j in 0..a.col_ptr.len() - 1 {
            let rows = &a.row_idx[a.col_ptr[j]..a.col_ptr[j + 1]];
            if let Some(&lo) = rows.iter().min() {
                for &i in rows {
                    first[i] = first[i].min(lo);
                }
            }
        }
        let mut start = Vec::with_capacity(m + 1);
        let mut total = 0;
        for i in 0..m {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        Self {
            first,
            start,
            vals: vec![0.0; total],
            diag_scale: vec![0.0; m],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.start[i] + j - self.first[i]
    }

    fn assemble(&mut self, a: &Sparse, theta: &[f64], reg: f64) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..theta.len() {
            let range = a.col_ptr[j]..a.col_ptr[j + 1];
            for p in range.clone() {
                let (i, ai) = (a.row_idx[p], a.vals[p]);
                let w = theta[j] * ai;
                for q in range.clone() {
                    let k = a.row_idx[q];
                    if k <= i {
                        let idx = self.idx(i, k);
                        self.vals[idx] += w * a.vals[q];
                    }
                }
            }
        }
        for i in 0..self.first.len() {
            let d = self.idx(i, i);
            self.diag_scale[i] = self.vals[d];
            self.vals[d] += reg * self.vals[d].abs() + 1e-14;
        }
    }

    /// In-place Cholesky. Pivots that vanish relative to their original diagonal are replaced
    /// by a huge value, which pins the matching component of the solution to zero.
    fn factor(&mut self) {
        let m = self.first.len();
        for i in 0..m {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                let sj = self.start[j];
                let ri = &self.vals[si + lo - fi..si + j - fi];
                let rj = &self.vals[sj + lo - fj..sj + j - fj];
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let ljj = self.vals[sj + j - fj];
                let v = (self.vals[si + j - fi] - dot) / ljj;
                self.vals[si + j - fi] = v;
            }
            let row = &self.vals[si..si + i - fi];
            let dot: f64 = row.iter().map(|a| a * a).sum();
            let d = self.vals[si + i - fi] - dot;
            let floor = 1e-30 * self.diag_scale[i].abs().max(1e-300);
            self.vals[si + i - fi] = if d > floor { d.sqrt() } else { 1e128 };
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let m = self.first.len();
        for i in 0..m {
            let fi = self.first[i];
            let si = self.start[i];
            let row = &self.vals[si..si + i - fi];
            let dot: f64 = row.iter().zip(&rhs[fi..i]).map(|(a, b)| a * b).sum();
            rhs[i] = (rhs[i] - dot) / self.vals[si + i - fi];
        }
        for i in (0..m).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let xi = rhs[i] / self.vals[si + i - fi];
            rhs[i] = xi;
            for (k, l) in (fi..i).zip(&self.vals[si..si + i - fi]) {
                rhs[k] -= l * xi;
            }
        }
    }
}

struct Scaled {
    a: Sparse,
    b: Vec<f64>,
    c: Vec<f64>,
    u: Vec<f64>,
    col_scale: Vec<f64>,
}

// Ruiz equilibration of rows and columns followed by scalar scaling of the cost and of the
// right-hand side magnitude.
fn scale(std: &StandardForm) -> Scaled {
    let m = std.m;
    let n = std.cols.len();
    let mut col_ptr = vec![0];
    let mut row_idx = Vec::new();
    let mut vals = Vec::new();
    for col in &std.cols {
        for &(i, v) in &col.entries {
            row_idx.push(i);
            vals.push(v);
        }
        col_ptr.push(row_idx.len());
    }
    let mut a = Sparse {
        m,
        col_ptr,
        row_idx,
        vals,
    };
    let mut rs = vec![1.0; m];
    let mut cs = vec![1.0; n];
    for _ in 0..12 {
        let mut rmax = vec![0.0f64; m];
        let mut cmax = vec![0.0f64; n];
        for j in 0..n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let v = a.vals[p].abs();
                rmax[a.row_idx[p]] = rmax[a.row_idx[p]].max(v);
                cmax[j] = cmax[j].max(v);
            }
        }
        let rf: Vec<f64> = rmax.iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        let cf: Vec<f64> = cmax.iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        for j in 0..n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                a.vals[p] *= rf[a.row_idx[p]] * cf[j];
            }
        }
        for i in 0..m {
            rs[i] *= rf[i];
        }
        for j in 0..n {
            cs[j] *= cf[j];
        }
    }
    let mut b: Vec<f64> = std.b.iter().zip(&rs).map(|(b, r)| b * r).collect();
    let mut c: Vec<f64> = std.cols.iter().zip(&cs).map(|(col, s)| col.cost * s).collect();
    let mut u: Vec<f64> = std.cols.iter().zip(&cs).map(|(col, s)| col.upper / s).collect();
    let cmag = c.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
    let bmag = b
        .iter()
        .chain(u.iter().filter(|v| v.is_finite()))
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    let cfac = 1.0 / cmag.clamp(1e-8, 1e8);
    let bfac = 1.0 / bmag.clamp(1e-8, 1e8);
    c.iter_mut().for_each(|v| *v *= cfac);
    b.iter_mut().for_each(|v| *v *= bfac);
    u.iter_mut().for_each(|v| *v *= bfac);
    Scaled {
        a,
        b,
        c,
        u,
        col_scale: cs.iter().map(|s| s / bfac).collect(),
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

fn max_step(v: &[f64], dv: &[f64], mask: Option<&[bool]>) -> f64 {
    let mut alpha = f64::INFINITY;
    for j in 0..v.len() {
        if mask.is_some_and(|m| !m[j]) {
            continue;
        }
        if dv[j] < 0.0 {
            alpha = alpha.min(-v[j] / dv[j]);
        }
    }
    alpha
}

struct Iterate {
    x: Vec<f64>,
    w: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    dw: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
}

/// Accuracy at which the best iterate seen is accepted when the iteration later breaks down.
const NEAR_OPTIMAL: f64 = 1e-7;

/// Proximal term added to every `Θ⁻¹` entry of the scaled program on the second attempt.
/// Keeps the normal matrix solvable once the iterates approach a degenerate vertex.
const PRIMAL_REG: f64 = 1e-6;

fn mehrotra(std: &StandardForm, opts: &IpmOptions, primal_reg: f64) -> Result<(Vec<f64>, usize, IpmStatus)> {
    let sc = scale(std);
    let (m, n) = (std.m, std.cols.len());
    let a = &sc.a;
    let bounded: Vec<bool> = sc.u.iter().map(|u| u.is_finite()).collect();
    let nb = bounded.iter().filter(|b| **b).count();
    let mut env = Envelope::new(a);

    let mut it = initial_point(&sc, &bounded, &mut env);
    let bnorm = norm_inf(&sc.b).max(norm_inf(&sc.u.iter().map(|u| if u.is_finite() { *u } else { 0.0 }).collect::<Vec<_>>()));
    let cnorm = norm_inf(&sc.c);

    let mut rp = vec![0.0; m];
    let mut rd = vec![0.0; n];
    let mut ru = vec![0.0; n];
    let mut aty = vec![0.0; n];
    let mut best_pinf = f64::INFINITY;
    let mut stalled = 0;
    let mut best = (f64::INFINITY, Vec::new());
    for iter in 0..opts.max_iterations {
        a.mul(&it.x, &mut rp);
        for i in 0..m {
            rp[i] = sc.b[i] - rp[i];
        }
        a.mul_t(&it.y, &mut aty);
        for j in 0..n {
            rd[j] = sc.c[j] - aty[j] - it.z[j] + if bounded[j] { it.s[j] } else { 0.0 };
            ru[j] = if bounded[j] { sc.u[j] - it.x[j] - it.w[j] } else { 0.0 };
        }
        let pobj: f64 = sc.c.iter().zip(&it.x).map(|(c, x)| c * x).sum();
        let dobj: f64 = sc.b.iter().zip(&it.y).map(|(b, y)| b * y).sum::<f64>()
            - (0..n).filter(|&j| bounded[j]).map(|j| sc.u[j] * it.s[j]).sum::<f64>();
        let pinf = norm_inf(&rp).max(norm_inf(&ru)) / (1.0 + bnorm);
        let dinf = norm_inf(&rd) / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        let merit = pinf.max(dinf).max(gap);
        if merit < opts.tolerance {
            return Ok((unscale(&sc, &it.x), iter, IpmStatus::Optimal));
        }
        if merit < best.0 {
            best = (merit, it.x.clone());
        }
        // a primal residual that stops shrinking while the iterates run off signals
        // infeasibility
        if pinf < 0.5 * best_pinf {
            best_pinf = pinf;
            stalled = 0;
        } else {
            stalled += 1;
        }
        let xnorm = norm_inf(&it.x).max(norm_inf(&it.y));
        // iterates running off along a feasible ray with a falling objective
        if xnorm > 1e30 && pinf * (1.0 + bnorm) < 1e-6 * norm_inf(&it.x) && pobj < 0.0 {
            return Ok((unscale(&sc, &it.x), iter, IpmStatus::Unbounded));
        }
        if (stalled > 30 && pinf > 1e-6) || xnorm > 1e30 {
            if best.0 < NEAR_OPTIMAL {
                return Ok((unscale(&sc, &best.1), iter, IpmStatus::Optimal));
            }
            return Ok((unscale(&sc, &it.x), iter, IpmStatus::Infeasible));
        }

        let mu = (dot(&it.x, &it.z) + (0..n).filter(|&j| bounded[j]).map(|j| it.w[j] * it.s[j]).sum::<f64>())
            / (n + nb) as f64;
        let theta: Vec<f64> = (0..n)
            .map(|j| {
                let d = it.z[j] / it.x[j] + if bounded[j] { it.s[j] / it.w[j] } else { 0.0 };
                1.0 / (d + primal_reg).max(1e-300)
            })
            .collect();
        env.assemble(a, &theta, 1e-12);
        env.factor();

        let rxz: Vec<f64> = (0..n).map(|j| -it.x[j] * it.z[j]).collect();
        let rws: Vec<f64> = (0..n).map(|j| if bounded[j] { -it.w[j] * it.s[j] } else { 0.0 }).collect();
        let aff = direction(a, &env, &theta, &it, &bounded, &rp, &rd, &ru, &rxz, &rws);
        let (ap, ad) = step_lengths(&it, &aff, &bounded, 1.0);
        let mut mu_aff = 0.0;
        for j in 0..n {
            mu_aff += (it.x[j] + ap * aff.dx[j]) * (it.z[j] + ad * aff.dz[j]);
            if bounded[j] {
                mu_aff += (it.w[j] + ap * aff.dw[j]) * (it.s[j] + ad * aff.ds[j]);
            }
        }
        mu_aff /= (n + nb) as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        let rxz: Vec<f64> = (0..n)
            .map(|j| sigma * mu - it.x[j] * it.z[j] - aff.dx[j] * aff.dz[j])
            .collect();
        let rws: Vec<f64> = (0..n)
            .map(|j| {
                if bounded[j] {
                    sigma * mu - it.w[j] * it.s[j] - aff.dw[j] * aff.ds[j]
                } else {
                    0.0
                }
            })
            .collect();
        let dir = direction(a, &env, &theta, &it, &bounded, &rp, &rd, &ru, &rxz, &rws);
        let (ap, ad) = step_lengths(&it, &dir, &bounded, 0.9995);
        for j in 0..n {
            it.x[j] += ap * dir.dx[j];
            it.z[j] += ad * dir.dz[j];
            if bounded[j] {
                it.w[j] += ap * dir.dw[j];
                it.s[j] += ad * dir.ds[j];
            }
        }
        for i in 0..m {
            it.y[i] += ad * dir.dy[i];
        }
    }
    if best.0 < NEAR_OPTIMAL {
        return Ok((unscale(&sc, &best.1), opts.max_iterations, IpmStatus::Optimal));
    }
    Err(Error::Solver(format!(
        "interior point method did not converge in {} iterations",
        opts.max_iterations
    )))
}

fn unscale(sc: &Scaled, x: &[f64]) -> Vec<f64> {
    x.iter().zip(&sc.col_scale).map(|(x, s)| x * s).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn step_lengths(it: &Iterate, d: &Direction, bounded: &[bool], frac: f64) -> (f64, f64) {
    let ap = max_step(&it.x, &d.dx, None).min(max_step(&it.w, &d.dw, Some(bounded)));
    let ad = max_step(&it.z, &d.dz, None).min(max_step(&it.s, &d.ds, Some(bounded)));
    ((frac * ap).min(1.0), (frac * ad).min(1.0))
}

#[allow(clippy::too_many_arguments)]
fn direction(
    a: &Sparse,
    env: &Envelope,
    theta: &[f64],
    it: &Iterate,
    bounded: &[bool],
    rp: &[f64],
    rd: &[f64],
    ru: &[f64],
    rxz: &[f64],
    rws: &[f64],
) -> Direction {
    let n = theta.len();
    let g: Vec<f64> = (0..n)
        .map(|j| {
            let mut g = rd[j] - rxz[j] / it.x[j];
            if bounded[j] {
                g += (rws[j] - it.s[j] * ru[j]) / it.w[j];
            }
            g
        })
        .collect();
    let tg: Vec<f64> = (0..n).map(|j| theta[j] * g[j]).collect();
    let mut rhs = vec![0.0; a.m];
    a.mul(&tg, &mut rhs);
    for (r, p) in rhs.iter_mut().zip(rp) {
        *r += p;
    }
    let dy = solve_refined(a, env, theta, &rhs);
    let mut aty = vec![0.0; n];
    a.mul_t(&dy, &mut aty);
    let dx: Vec<f64> = (0..n).map(|j| theta[j] * (aty[j] - g[j])).collect();
    let dz: Vec<f64> = (0..n).map(|j| (rxz[j] - it.z[j] * dx[j]) / it.x[j]).collect();
    let dw: Vec<f64> = (0..n).map(|j| if bounded[j] { ru[j] - dx[j] } else { 0.0 }).collect();
    let ds: Vec<f64> = (0..n)
        .map(|j| if bounded[j] { (rws[j] - it.s[j] * dw[j]) / it.w[j] } else { 0.0 })
        .collect();
    Direction { dx, dw, dy, dz, ds }
}

// Iterative refinement against the unregularised normal matrix, until the residual stops
// shrinking.
fn solve_refined(a: &Sparse, env: &Envelope, theta: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut sol = rhs.to_vec();
    env.solve(&mut sol);
    let n = theta.len();
    let mut tmp = vec![0.0; n];
    let mut res = vec![0.0; a.m];
    let mut last = f64::INFINITY;
    for _ in 0..8 {
        a.mul_t(&sol, &mut tmp);
        for j in 0..n {
            tmp[j] *= theta[j];
        }
        a.mul(&tmp, &mut res);
        for i in 0..a.m {
            res[i] = rhs[i] - res[i];
        }
        let r = norm_inf(&res);
        if r >= 0.5 * last || r <= 1e-15 * norm_inf(rhs) {
            break;
        }
        last = r;
        env.solve(&mut res);
        for i in 0..a.m {
            sol[i] += res[i];
        }
    }
    sol
}

// Mehrotra's starting point, pushed inside the box when a variable has an upper bound.
fn initial_point(sc: &Scaled, bounded: &[bool], env: &mut Envelope) -> Iterate {
    let (m, n) = (sc.a.m, sc.c.len());
    let ones = vec![1.0; n];
    env.assemble(&sc.a, &ones, 1e-8);
    env.factor();
    let mut y0 = sc.b.clone();
    env.solve(&mut y0);
    let mut x = vec![0.0; n];
    sc.a.mul_t(&y0, &mut x);
    let mut ac = vec![0.0; m];
    sc.a.mul(&sc.c, &mut ac);
    env.solve(&mut ac);
    let y = ac;
    let mut z = vec![0.0; n];
    sc.a.mul_t(&y, &mut z);
    for j in 0..n {
        z[j] = sc.c[j] - z[j];
    }
    let dx = (-1.5 * x.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0);
    let dz = (-1.5 * z.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0);
    let mut s = vec![0.0; n];
    for j in 0..n {
        x[j] += dx;
        if bounded[j] {
            s[j] = (-z[j]).max(0.0);
            z[j] = z[j].max(0.0);
        }
        z[j] += dz;
    }
    let xz = dot(&x, &z).max(1e-8);
    let px = 0.5 * xz / z.iter().sum::<f64>().max(1e-8);
    let pz = 0.5 * xz / x.iter().sum::<f64>().max(1e-8);
    let mut w = vec![0.0; n];
    for j in 0..n {
        x[j] = (x[j] + px).max(1e-4);
        z[j] = (z[j] + pz).max(1e-4);
        if bounded[j] {
            let u = sc.u[j];
            if x[j] >= 0.9 * u {
                x[j] = 0.5 * u;
            }
            w[j] = u - x[j];
            s[j] = (s[j] + pz).max(1e-4);
        }
    }
    Iterate { x, w, y, z, s }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp2() -> LinearProgram {
        // min −x − 2y  s.t. x + y ≤ 4, x − y ≥ −2, 0 ≤ x ≤ 3, 0 ≤ y ≤ 5 → (1, 3), −7
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x".into(), -1.0, 0.0, 3.0);
        let y = lp.add_var("y".into(), -2.0, 0.0, 5.0);
        lp.add_row("c1".into(), vec![(x, 1.0), (y, 1.0)], f64::NEG_INFINITY, 4.0);
        lp.add_row("c2".into(), vec![(x, 1.0), (y, -1.0)], -2.0, f64::INFINITY);
        lp
    }

    #[test]
    fn solves_small_program() {
        let lp = lp2();
        let r = solve(&lp, &IpmOptions::default()).unwrap();
        assert_eq!(r.status, IpmStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-7 && (r.x[1] - 3.0).abs() < 1e-7, "{:?}", r.x);
        assert!((lp.objective(&r.x) + 7.0).abs() < 1e-8);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x + y with x − y = 1, x free, y ≥ −2 → y = −2, x = −1
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x".into(), 1.0, f64::NEG_INFINITY, f64::INFINITY);
        let y = lp.add_var("y".into(), 1.0, -2.0, f64::INFINITY);
        lp.add_row("e".into(), vec![(x, 1.0), (y, -1.0)], 1.0, 1.0);
        lp.add_row("r".into(), vec![(x, 1.0), (y, 1.0)], -100.0, 100.0);
        let r = solve(&lp, &IpmOptions::default()).unwrap();
        assert_eq!(r.status, IpmStatus::Optimal);
        assert!((r.x[0] + 1.0).abs() < 1e-7 && (r.x[1] + 2.0).abs() < 1e-7, "{:?}", r.x);
    }

    #[test]
    fn presolve_detects_conflicting_singletons() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x".into(), 1.0, 0.0, 1.0);
        lp.add_row("a".into(), vec![(x, 2.0)], 4.0, 4.0);
        assert_eq!(solve(&lp, &IpmOptions::default()).unwrap().status, IpmStatus::Infeasible);
    }

    #[test]
    fn detects_infeasible_coupled_rows() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x".into(), 1.0, 0.0, 1.0);
        let y = lp.add_var("y".into(), 1.0, 0.0, 1.0);
        lp.add_row("a".into(), vec![(x, 1.0), (y, 1.0)], 3.0, f64::INFINITY);
        lp.add_row("b".into(), vec![(x, 1.0), (y, -1.0)], -0.5, 0.5);
        assert_eq!(solve(&lp, &IpmOptions::default()).unwrap().status, IpmStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded_objective() {
        // min −x with x − y = 1 and both unbounded above
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x".into(), -1.0, 0.0, f64::INFINITY);
        let y = lp.add_var("y".into(), 0.0, 0.0, f64::INFINITY);
        lp.add_row("a".into(), vec![(x, 1.0), (y, -1.0)], 1.0, 1.0);
        assert_eq!(solve(&lp, &IpmOptions::default()).unwrap().status, IpmStatus::Unbounded);
    }

    #[test]
    fn fixed_variables_are_substituted() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x".into(), 1.0, 2.0, 2.0);
        let y = lp.add_var("y".into(), 1.0, 0.0, 10.0);
        lp.add_row("a".into(), vec![(x, 1.0), (y, 1.0)], 5.0, f64::INFINITY);
        let r = solve(&lp, &IpmOptions::default()).unwrap();
        assert_eq!(r.x[0], 2.0);
        assert!((r.x[1] - 3.0).abs() < 1e-9);
    }
}
