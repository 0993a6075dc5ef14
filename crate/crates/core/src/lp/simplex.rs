//! Dense two-phase simplex with a deterministic anti-cycling pivot rule.
//!
//! Free variables are split into positive parts, rows are normalized to
//! non-negative right-hand sides, and artificials are introduced only where a
//! slack cannot seed the basis. The default pivot rule is largest reduced
//! cost; after a stall of two times the row count the solver switches to
//! Bland's rule, which guarantees termination. Identical input yields
//! identical output.


use alloc::vec;
use alloc::vec::Vec;

use super::{LinExpr, LpError, LpModel, LpSolution, LpStatus, Relation, Sense, SolveConfig, VarId};

/// Entries smaller than this never serve as pivots.
const PIVOT_TOL: f64 = 1e-7;
/// Row-operation factors below this are skipped.
const ELIM_TOL: f64 = 1e-12;
/// Residual ceiling after post-solve refinement.
const RESIDUAL_LIMIT: f64 = 1e-6;

/// How an original variable maps onto standardized non-negative columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + z[col]`.
    Shifted { col: usize, offset: f64 },
    /// `x = z[pos] - z[neg]`.
    Split { pos: usize, neg: usize },
}

struct Standardized {
    var_map: Vec<VarMap>,
    /// Structural column count.
    n_struct: usize,
    /// Sparse rows over structural columns, sign-normalized to rhs >= 0.
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    relations: Vec<Relation>,
    /// +1 if the row kept its orientation, -1 if it was negated.
    row_sign: Vec<f64>,
    /// Index into the original constraint list, or `None` for bound rows.
    row_origin: Vec<Option<usize>>,
    /// Objective over structural columns (minimization).
    cost: Vec<f64>,
    /// Constant part of the objective after shifts (minimization).
    cost_const: f64,
    /// -1 when the original sense was maximize.
    sense_factor: f64,
}

fn standardize(model: &LpModel, dual_of_bounds: bool) -> Result<Standardized, LpError> {
    let _ = dual_of_bounds;
    let mut var_map = Vec::with_capacity(model.variables.len());
    let mut n_struct = 0usize;
    for (i, v) in model.variables.iter().enumerate() {
        match (v.lower, v.upper) {
            (Some(l), u) => {
                if l < 0.0 || u.is_some_and(|u| u < l) {
                    return Err(LpError::BadBounds { variable: i });
                }
                var_map.push(VarMap::Shifted { col: n_struct, offset: l });
                n_struct += 1;
            }
            (None, _) => {
                var_map.push(VarMap::Split {
                    pos: n_struct,
                    neg: n_struct + 1,
                });
                n_struct += 2;
            }
        }
    }

    let expand = |expr: &super::LinExpr,
                  rows: &mut Vec<(usize, f64)>,
                  shift_acc: &mut f64|
     -> Result<(), LpError> {
        for (id, coef) in expr.terms() {
            if id.0 >= var_map.len() {
                return Err(LpError::UndeclaredVariable { index: id.0 });
            }
            match var_map[id.0] {
                VarMap::Shifted { col, offset } => {
                    rows.push((col, coef));
                    *shift_acc += coef * offset;
                }
                VarMap::Split { pos, neg } => {
                    rows.push((pos, coef));
                    rows.push((neg, -coef));
                }
            }
        }
        Ok(())
    };

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut relations = Vec::new();
    let mut row_sign = Vec::new();
    let mut row_origin = Vec::new();

    for (ci, c) in model.constraints.iter().enumerate() {
        let mut coeffs = Vec::new();
        let mut shift = 0.0;
        expand(&c.expr, &mut coeffs, &mut shift)?;
        coeffs.sort_unstable_by_key(|&(col, _)| col);
        let mut b = c.rhs - c.expr.constant_part() - shift;
        let mut rel = c.relation;
        let mut sign = 1.0;
        if b < 0.0 {
            for e in &mut coeffs {
                e.1 = -e.1;
            }
            b = -b;
            sign = -1.0;
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rows.push(coeffs);
        rhs.push(b);
        relations.push(rel);
        row_sign.push(sign);
        row_origin.push(Some(ci));
    }

    // Upper bounds become explicit rows over the standardized columns.
    for (i, v) in model.variables.iter().enumerate() {
        if let Some(u) = v.upper {
            let (coeffs, b) = match var_map[i] {
                VarMap::Shifted { col, offset } => (vec![(col, 1.0)], u - offset),
                VarMap::Split { pos, neg } => (vec![(pos, 1.0), (neg, -1.0)], u),
            };
            if b < 0.0 {
                // Only reachable for free variables with a negative upper
                // bound: -x_pos + x_neg >= -u.
                rows.push(coeffs.iter().map(|&(c, v)| (c, -v)).collect());
                rhs.push(-b);
                relations.push(Relation::Ge);
                row_sign.push(-1.0);
            } else {
                rows.push(coeffs);
                rhs.push(b);
                relations.push(Relation::Le);
                row_sign.push(1.0);
            }
            row_origin.push(None);
        }
    }

    let sense_factor = match model.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; n_struct];
    let mut cost_const = model.objective.constant_part();
    for (id, coef) in model.objective.terms() {
        if id.0 >= var_map.len() {
            return Err(LpError::UndeclaredVariable { index: id.0 });
        }
        match var_map[id.0] {
            VarMap::Shifted { col, offset } => {
                cost[col] += sense_factor * coef;
                cost_const += coef * offset;
            }
            VarMap::Split { pos, neg } => {
                cost[pos] += sense_factor * coef;
                cost[neg] -= sense_factor * coef;
            }
        }
    }

    Ok(Standardized {
        var_map,
        n_struct,
        rows,
        rhs,
        relations,
        row_sign,
        row_origin,
        cost,
        cost_const,
        sense_factor,
    })
}

struct Tableau {
    data: Vec<f64>,
    width: usize,
    m: usize,
    ncols: usize,
    basis: Vec<usize>,
    art_start: usize,
    obj_row: usize,
    phase1_row: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.width + c] = v;
    }

    fn pivot(&mut self, pr: usize, pc: usize, scratch: &mut Vec<f64>) -> f64 {
        let w = self.width;
        let piv = self.at(pr, pc);
        scratch.clear();
        scratch.extend_from_slice(&self.data[pr * w..(pr + 1) * w]);
        let mut row_max = 0.0f64;
        for v in scratch.iter_mut() {
            *v /= piv;
            row_max = row_max.max(v.abs());
        }
        scratch[pc] = 1.0;
        self.data[pr * w..(pr + 1) * w].copy_from_slice(scratch);

        let total_rows = self.phase1_row + 1;
        for r in 0..total_rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f.abs() <= ELIM_TOL {
                if f != 0.0 {
                    self.set(r, pc, 0.0);
                }
                continue;
            }
            let row = &mut self.data[r * w..(r + 1) * w];
            for (x, &p) in row.iter_mut().zip(scratch.iter()) {
                *x -= f * p;
            }
            row[pc] = 0.0;
        }
        // Rounding can push a degenerate right-hand side a hair negative;
        // snapping it back keeps later ratio tests sound.
        let rhs = self.ncols;
        for r in 0..self.m {
            let v = self.at(r, rhs);
            if v < 0.0 && v > -1e-9 {
                self.set(r, rhs, 0.0);
            }
        }
        self.basis[pr] = pc;
        row_max
    }
}

fn build_tableau(std: &Standardized) -> Tableau {
    let m = std.rows.len();
    let n_slack = std
        .relations
        .iter()
        .filter(|r| !matches!(r, Relation::Eq))
        .count();
    let n_art = std
        .relations
        .iter()
        .filter(|r| !matches!(r, Relation::Le))
        .count();
    let slack_start = std.n_struct;
    let art_start = slack_start + n_slack;
    let ncols = art_start + n_art;
    let width = ncols + 1;
    let obj_row = m;
    let phase1_row = m + 1;
    let mut t = Tableau {
        data: vec![0.0; (m + 2) * width],
        width,
        m,
        ncols,
        basis: vec![usize::MAX; m],
        art_start,
        obj_row,
        phase1_row,
    };

    let mut slack_idx = slack_start;
    let mut art_idx = art_start;
    for r in 0..m {
        for &(c, v) in &std.rows[r] {
            let cur = t.at(r, c);
            t.set(r, c, cur + v);
        }
        t.set(r, ncols, std.rhs[r]);
        match std.relations[r] {
            Relation::Le => {
                t.set(r, slack_idx, 1.0);
                t.basis[r] = slack_idx;
                slack_idx += 1;
            }
            Relation::Ge => {
                t.set(r, slack_idx, -1.0);
                slack_idx += 1;
                t.set(r, art_idx, 1.0);
                t.basis[r] = art_idx;
                art_idx += 1;
            }
            Relation::Eq => {
                t.set(r, art_idx, 1.0);
                t.basis[r] = art_idx;
                art_idx += 1;
            }
        }
    }

    // Phase-2 reduced costs: basis costs are all zero initially.
    for (c, &v) in std.cost.iter().enumerate() {
        t.set(obj_row, c, v);
    }

    // Phase-1 reduced costs: unit cost on artificials, priced out against the
    // artificial starting basis.
    for r in 0..m {
        if t.basis[r] >= art_start {
            for c in 0..width {
                let v = t.at(phase1_row, c) - t.at(r, c);
                t.set(phase1_row, c, v);
            }
        }
    }
    for a in art_start..ncols {
        t.set(phase1_row, a, 0.0);
    }

    t
}

/// Original column data for rebuilding the tableau from a basis.
struct RefactorCtx {
    /// Per tableau column: sparse (row, value) entries of the original
    /// standardized matrix, slacks and artificials included.
    col_entries: Vec<Vec<(u32, f64)>>,
    rhs: Vec<f64>,
    /// Phase-2 cost per tableau column.
    obj_cost: Vec<f64>,
}

/// Rebuilds the tableau body, right-hand side, and both cost rows from the
/// current basis, clearing accumulated pivot error. Returns false on a
/// numerically singular basis.
fn refactorize(t: &mut Tableau, ctx: &RefactorCtx, run_cost: &[f64]) -> bool {
    let m = t.m;
    // Dense basis inverse via Gauss-Jordan with partial pivoting.
    let mut binv = vec![0.0f64; m * m];
    for r in 0..m {
        binv[r * m + r] = 1.0;
    }
    let mut bmat = vec![0.0f64; m * m];
    for (r, &bc) in t.basis.iter().enumerate() {
        for &(row, v) in &ctx.col_entries[bc] {
            bmat[row as usize * m + r] = v;
        }
    }
    for col in 0..m {
        let (prow, mag) = (col..m)
            .map(|r| (r, bmat[r * m + col].abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= 1e-12 {
            return false;
        }
        if prow != col {
            for c in 0..m {
                bmat.swap(prow * m + c, col * m + c);
                binv.swap(prow * m + c, col * m + c);
            }
        }
        let inv_p = 1.0 / bmat[col * m + col];
        for c in 0..m {
            bmat[col * m + c] *= inv_p;
            binv[col * m + c] *= inv_p;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = bmat[r * m + col];
            if f == 0.0 {
                continue;
            }
            for c in 0..m {
                bmat[r * m + c] -= f * bmat[col * m + c];
                binv[r * m + c] -= f * binv[col * m + c];
            }
        }
    }

    // Body: each tableau column is the basis inverse applied to the sparse
    // original column.
    let w = t.width;
    t.data[..(m + 2) * w].fill(0.0);
    for (j, entries) in ctx.col_entries.iter().enumerate() {
        for &(row, v) in entries {
            let q = row as usize;
            for r in 0..m {
                t.data[r * w + j] += binv[r * m + q] * v;
            }
        }
    }
    for r in 0..m {
        let mut acc = 0.0;
        for (q, &b) in ctx.rhs.iter().enumerate() {
            if b != 0.0 {
                acc += binv[r * m + q] * b;
            }
        }
        t.data[r * w + t.ncols] = acc.max(0.0);
    }
    // Snap basis columns to exact unit vectors.
    for (r, &bc) in t.basis.iter().enumerate() {
        for rr in 0..m {
            t.data[rr * w + bc] = 0.0;
        }
        t.data[r * w + bc] = 1.0;
    }
    // Reprice both cost rows against the rebuilt body.
    let reprice = |t: &mut Tableau, row_idx: usize, costs: &[f64]| {
        for c in 0..t.ncols {
            t.data[row_idx * w + c] = costs.get(c).copied().unwrap_or(0.0);
        }
        t.data[row_idx * w + t.ncols] = 0.0;
        for r in 0..m {
            let cb = costs.get(t.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for c in 0..w {
                    let delta = cb * t.data[r * w + c];
                    t.data[row_idx * w + c] -= delta;
                }
            }
        }
        for r in 0..m {
            let bc = t.basis[r];
            t.data[row_idx * w + bc] = 0.0;
        }
    };
    let obj_row = t.obj_row;
    let phase1_row = t.phase1_row;
    let obj_cost = ctx.obj_cost.clone();
    reprice(t, obj_row, &obj_cost);
    if !core::ptr::eq(run_cost.as_ptr(), ctx.obj_cost.as_ptr()) {
        reprice(t, phase1_row, run_cost);
    }
    true
}

enum RunOutcome {
    Converged,
    Unbounded,
    IterationLimit,
}

fn run_simplex(
    t: &mut Tableau,
    ctx: &RefactorCtx,
    run_cost: &[f64],
    cost_row: usize,
    allow_art: bool,
    opt_tol: f64,
    target: Option<f64>,
    iter_budget: &mut usize,
) -> RunOutcome {
    let mut since_refactor = 0usize;
    let entering_limit = if allow_art { t.ncols } else { t.art_start };
    let mut scratch = Vec::with_capacity(t.width);
    let mut bland = false;
    let mut stall = 0usize;
    let stall_limit = 4 * t.m + 40;
    let mut last_obj = -t.at(cost_row, t.ncols);
    // Devex reference weights for the pricing rule.
    let mut weights = vec![1.0f64; entering_limit];
    // Rounding dust can pin reduced costs a shade below the tolerance
    // without any progress; a bounded escalation breaks those plateaus at
    // a quantified optimality cost.
    let mut working_tol = opt_tol;

    loop {
        if *iter_budget == 0 {
            return RunOutcome::IterationLimit;
        }
        if let Some(target) = target {
            if -t.at(cost_row, t.ncols) <= target {
                return RunOutcome::Converged;
            }
        }

        // Entering column: Devex-weighted reduced costs, plain smallest-index
        // with a negative reduced cost while in anti-cycling mode.
        let mut pc = None;
        if bland {
            for c in 0..entering_limit {
                if t.at(cost_row, c) < -working_tol {
                    pc = Some(c);
                    break;
                }
            }
        } else {
            let mut best = 0.0f64;
            for c in 0..entering_limit {
                let rc = t.at(cost_row, c);
                if rc < -working_tol {
                    let score = rc * rc / weights[c];
                    if score > best {
                        best = score;
                        pc = Some(c);
                    }
                }
            }
        }
        let Some(pc) = pc else {
            return RunOutcome::Converged;
        };

        // Leaving row: two-pass ratio test. Pivots must be large both
        // absolutely and relative to their column, or the basis drifts
        // toward singularity; among rows within a sliver of the minimum
        // ratio the strongest pivot wins (smallest basic index under
        // Bland's rule). Degenerate rows may carry tolerance-level negative
        // values; clamping keeps ratios from going negative.
        let col_max = (0..t.m).fold(0.0f64, |acc, r| acc.max(t.at(r, pc)));
        let piv_tol = PIVOT_TOL.max(1e-8 * col_max);
        let mut theta = f64::INFINITY;
        for r in 0..t.m {
            let a = t.at(r, pc);
            if a > piv_tol {
                theta = theta.min(t.at(r, t.ncols).max(0.0) / a);
            }
        }
        let mut pr: Option<usize> = None;
        if theta.is_finite() {
            let window = theta + 1e-9 * (1.0 + theta);
            let mut best_piv = 0.0f64;
            let mut best_key = usize::MAX;
            for r in 0..t.m {
                let a = t.at(r, pc);
                if a <= piv_tol {
                    continue;
                }
                let ratio = t.at(r, t.ncols).max(0.0) / a;
                if ratio > window {
                    continue;
                }
                let better = if bland {
                    t.basis[r] < best_key
                } else {
                    a > best_piv
                };
                if better {
                    pr = Some(r);
                    best_piv = a;
                    best_key = t.basis[r];
                }
            }
        }
        let Some(pr) = pr else {
            // Verify against a clean rebuild: accumulated error can starve a
            // column of pivot candidates.
            if since_refactor > 0 && refactorize(t, ctx, run_cost) {
                since_refactor = 0;
                for wgt in weights.iter_mut() {
                    *wgt = 1.0;
                }
                continue;
            }
            return RunOutcome::Unbounded;
        };

        // Devex update from the pre-pivot row (Forrest-Goldfarb reference
        // framework, reset when the weights blow up).
        if !bland {
            let alpha_q = t.at(pr, pc);
            let gamma = (weights[pc] / (alpha_q * alpha_q)).max(1.0);
            let mut overflow = false;
            let base = pr * t.width;
            for (c, w) in weights.iter_mut().enumerate() {
                let alpha = t.data[base + c];
                if alpha != 0.0 {
                    let cand = alpha * alpha * gamma;
                    if cand > *w {
                        *w = cand;
                    }
                    if *w > 1e12 {
                        overflow = true;
                    }
                }
            }
            weights[pc] = gamma.max(1.0);
            if overflow {
                for w in weights.iter_mut() {
                    *w = 1.0;
                }
            }
        }

        let row_max = t.pivot(pr, pc, &mut scratch);
        *iter_budget -= 1;
        since_refactor += 1;
        if row_max > 1e8 || since_refactor >= 3000 {
            if refactorize(t, ctx, run_cost) {
                since_refactor = 0;
                for wgt in weights.iter_mut() {
                    *wgt = 1.0;
                }
            }
        }

        let obj = -t.at(cost_row, t.ncols);
        if (last_obj - obj).abs() <= 1e-12 * (1.0 + obj.abs()) {
            stall += 1;
            if stall > stall_limit {
                bland = true;
            }
            if stall > 2 * stall_limit && working_tol < 1e-7 {
                working_tol *= 10.0;
                stall = stall_limit + 1;
            }
            // A persistent zero-progress plateau at the tolerance ceiling is
            // numerically stuck; accept the incumbent and let the post-solve
            // residual checks judge it.
            if stall > 6 * stall_limit {
                return RunOutcome::Converged;
            }
        } else {
            stall = 0;
            bland = false;
            working_tol = opt_tol;
        }
        last_obj = obj;
    }
}

/// Solves the reduced `k x k` system left after eliminating unit basic
/// columns, recovering exact basic values (`transpose = false`) or row duals
/// (`transpose = true`).
fn basis_solve(
    std: &Standardized,
    t: &Tableau,
    slack_cols: &[(usize, f64)],
    transpose: bool,
    rhs_full: &[f64],
    cost_of_col: &dyn Fn(usize) -> f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = t.m;
    // Unit basics: slack, surplus and artificial columns touch one row each.
    let mut covered: Vec<Option<(usize, f64)>> = vec![None; m];
    let mut struct_basics = Vec::new();
    for (r, &bc) in t.basis.iter().enumerate() {
        if bc >= std.n_struct {
            let (row, sign) = slack_cols[bc - std.n_struct];
            if covered[row].is_some() {
                return None;
            }
            covered[row] = Some((r, sign));
        } else {
            struct_basics.push((r, bc));
        }
    }
    let free_rows: Vec<usize> = (0..m).filter(|&r| covered[r].is_none()).collect();
    let k = free_rows.len();
    if k != struct_basics.len() {
        return None;
    }
    let row_pos: alloc::collections::BTreeMap<usize, usize> =
        free_rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();

    // Dense k x k core over structural basic columns and uncovered rows.
    let mut mat = vec![0.0f64; k * k];
    for (j, &(_, col)) in struct_basics.iter().enumerate() {
        for &(r, v) in column_entries(std, col).iter() {
            if let Some(&i) = row_pos.get(&r) {
                if transpose {
                    mat[j * k + i] = v;
                } else {
                    mat[i * k + j] = v;
                }
            }
        }
    }
    let mut vec_rhs = vec![0.0f64; k];
    if transpose {
        for (j, &(_, col)) in struct_basics.iter().enumerate() {
            vec_rhs[j] = cost_of_col(col);
        }
    } else {
        for (i, &r) in free_rows.iter().enumerate() {
            vec_rhs[i] = rhs_full[r];
        }
    }

    let sol = dense_solve(&mut mat, &mut vec_rhs, k)?;

    if transpose {
        // Duals: zero on covered rows, solved values on free rows.
        let mut y = vec![0.0; m];
        for (i, &r) in free_rows.iter().enumerate() {
            y[r] = sol[i];
        }
        Some((y, Vec::new()))
    } else {
        // Structural basic values plus the unit basics by substitution.
        let mut z = vec![0.0; t.ncols];
        for (j, &(_, col)) in struct_basics.iter().enumerate() {
            z[col] = sol[j];
        }
        for (row, &cov) in covered.iter().enumerate() {
            let Some((r, sign)) = cov else { continue };
            let mut acc = rhs_full[row];
            for (j, &(_, col)) in struct_basics.iter().enumerate() {
                let a = column_entries(std, col)
                    .iter()
                    .find(|&&(rr, _)| rr == row)
                    .map_or(0.0, |&(_, v)| v);
                acc -= a * sol[j];
            }
            z[t.basis[r]] = sign * acc;
        }
        Some((z, Vec::new()))
    }
}

fn column_entries(std: &Standardized, col: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (r, row) in std.rows.iter().enumerate() {
        for &(c, v) in row {
            if c == col {
                out.push((r, v));
            }
        }
    }
    out
}

fn dense_solve(mat: &mut [f64], rhs: &mut [f64], k: usize) -> Option<Vec<f64>> {
    let mut perm: Vec<usize> = (0..k).collect();
    for col in 0..k {
        let (best, mag) = (col..k)
            .map(|r| (r, mat[perm[r] * k + col].abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= 1e-13 {
            return None;
        }
        perm.swap(col, best);
        let prow = perm[col];
        let pval = mat[prow * k + col];
        for r in (col + 1)..k {
            let row = perm[r];
            let f = mat[row * k + col] / pval;
            if f == 0.0 {
                continue;
            }
            for c in col..k {
                mat[row * k + c] -= f * mat[prow * k + c];
            }
            rhs[row] -= f * rhs[prow];
        }
    }
    let mut x = vec![0.0; k];
    for col in (0..k).rev() {
        let row = perm[col];
        let mut acc = rhs[row];
        for c in (col + 1)..k {
            acc -= mat[row * k + c] * x[c];
        }
        x[col] = acc / mat[row * k + col];
    }
    Some(x)
}

fn extract_values(std: &Standardized, z: &[f64]) -> Vec<f64> {
    std.var_map
        .iter()
        .map(|vm| match *vm {
            VarMap::Shifted { col, offset } => offset + z[col],
            VarMap::Split { pos, neg } => z[pos] - z[neg],
        })
        .collect()
}

fn model_residual(model: &LpModel, values: &[f64], feas_tol: f64) -> f64 {
    let mut worst = 0.0f64;
    for c in &model.constraints {
        let lhs = c.expr.evaluate(values);
        let violation = match c.relation {
            Relation::Le => lhs - c.rhs,
            Relation::Ge => c.rhs - lhs,
            Relation::Eq => (lhs - c.rhs).abs(),
        };
        worst = worst.max(violation);
    }
    for (v, &x) in model.variables.iter().zip(values.iter()) {
        if let Some(l) = v.lower {
            worst = worst.max(l - x);
        }
        if let Some(u) = v.upper {
            worst = worst.max(x - u);
        }
    }
    let _ = feas_tol;
    worst.max(0.0)
}

/// Two-phase simplex entry point; see the module docs for the contract.
pub fn solve_lp(model: &LpModel, config: &SolveConfig) -> Result<LpSolution, LpError> {
    let std = standardize(model, false)?;
    let mut t = build_tableau(&std);

    // Slack/surplus and artificial column shapes for basis reconstruction.
    let mut slack_cols = Vec::with_capacity(t.ncols - std.n_struct);
    for (r, rel) in std.relations.iter().enumerate() {
        match rel {
            Relation::Le => slack_cols.push((r, 1.0)),
            Relation::Ge => slack_cols.push((r, -1.0)),
            Relation::Eq => {}
        }
    }
    for (r, rel) in std.relations.iter().enumerate() {
        if !matches!(rel, Relation::Le) {
            slack_cols.push((r, 1.0));
        }
    }

    let scale = std.rhs.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let mut iter_budget = 50_000 + 30 * (t.m + t.ncols);
    let total_budget = iter_budget;

    // Original columns for basis-driven rebuilds of the tableau.
    let mut col_entries: Vec<Vec<(u32, f64)>> = vec![Vec::new(); t.ncols];
    for (r, row) in std.rows.iter().enumerate() {
        for &(c, v) in row {
            col_entries[c].push((r as u32, v));
        }
    }
    for (offset, &(row, sign)) in slack_cols.iter().enumerate() {
        col_entries[std.n_struct + offset].push((row as u32, sign));
    }
    let mut obj_cost = std.cost.clone();
    obj_cost.resize(t.ncols, 0.0);
    let ctx = RefactorCtx {
        col_entries,
        rhs: std.rhs.clone(),
        obj_cost,
    };
    let mut phase1_cost = vec![0.0f64; t.ncols];
    for c in t.art_start..t.ncols {
        phase1_cost[c] = 1.0;
    }

    // Phase 1.
    let phase1_row = t.phase1_row;
    let obj_row = t.obj_row;
    let has_artificials = t.ncols > t.art_start;
    if has_artificials {
        let p1_target = config.feasibility_tol.max(1e-9) * (1.0 + scale);
        match run_simplex(
            &mut t,
            &ctx,
            &phase1_cost,
            phase1_row,
            false,
            config.optimality_tol,
            Some(p1_target),
            &mut iter_budget,
        ) {
            RunOutcome::Converged => {}
            RunOutcome::Unbounded => {
                return Err(LpError::NumericalFailure { residual: f64::NAN })
            }
            RunOutcome::IterationLimit => {
                return Err(LpError::IterationLimit {
                    iterations: total_budget,
                })
            }
        }
        let infeasibility = -t.at(t.phase1_row, t.ncols);
        if infeasibility > config.feasibility_tol.max(1e-9) * (1.0 + scale) * 10.0 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                values: Vec::new(),
                objective: 0.0,
                max_residual: infeasibility,
                duals: Vec::new(),
                iterations: total_budget - iter_budget,
            });
        }
        // Pivot surviving artificials out of the basis where possible,
        // preferring strong positive pivots so basic values stay valid.
        let mut scratch = Vec::with_capacity(t.width);
        for r in 0..t.m {
            if t.basis[r] >= t.art_start {
                let mut best: Option<(usize, f64)> = None;
                for c in 0..t.art_start {
                    let a = t.at(r, c);
                    if a.abs() <= 1e-7 {
                        continue;
                    }
                    let score = if a > 0.0 { a } else { a.abs() * 1e-3 };
                    if best.map_or(true, |(_, s)| score > s) {
                        best = Some((c, score));
                    }
                }
                if let Some((pc, _)) = best {
                    let _ = t.pivot(r, pc, &mut scratch);
                }
            }
        }
    }

    // Phase 2, preceded by a deterministically cost-perturbed round that
    // steers around the degenerate plateaus these corner-generated programs
    // produce; the true cost row is maintained through every pivot, so the
    // cleanup run afterwards settles the exact objective.
    {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut noise = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            1.0 + (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let perturbed: Vec<f64> = (0..t.ncols)
            .map(|c| {
                if c < std.n_struct {
                    let base = std.cost[c];
                    base + 1e-7 * (1.0 + base.abs()) * noise()
                } else {
                    0.0
                }
            })
            .collect();
        let rhs_col = t.ncols;
        for c in 0..t.ncols {
            t.set(phase1_row, c, perturbed.get(c).copied().unwrap_or(0.0));
        }
        t.set(phase1_row, rhs_col, 0.0);
        for r in 0..t.m {
            let cb = perturbed.get(t.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for c in 0..t.width {
                    let v = t.at(phase1_row, c) - cb * t.at(r, c);
                    t.set(phase1_row, c, v);
                }
            }
        }
        for r in 0..t.m {
            let bc = t.basis[r];
            t.set(phase1_row, bc, 0.0);
        }
        match run_simplex(
            &mut t,
            &ctx,
            &perturbed,
            phase1_row,
            false,
            config.optimality_tol,
            None,
            &mut iter_budget,
        ) {
            RunOutcome::Converged | RunOutcome::Unbounded => {}
            RunOutcome::IterationLimit => {
                return Err(LpError::IterationLimit {
                    iterations: total_budget,
                })
            }
        }
    }
    match run_simplex(
        &mut t,
        &ctx,
        &ctx.obj_cost.clone(),
        obj_row,
        false,
        config.optimality_tol,
        None,
        &mut iter_budget,
    ) {
        RunOutcome::Converged => {}
        RunOutcome::Unbounded => {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                values: Vec::new(),
                objective: match model.sense {
                    Sense::Minimize => f64::NEG_INFINITY,
                    Sense::Maximize => f64::INFINITY,
                },
                max_residual: 0.0,
                duals: Vec::new(),
                iterations: total_budget - iter_budget,
            })
        }
        RunOutcome::IterationLimit => {
            return Err(LpError::IterationLimit {
                iterations: total_budget,
            })
        }
    }

    // Solution from the tableau, refined through an exact basis solve when
    // the raw residual is not comfortably small.
    let mut z = vec![0.0; t.ncols];
    for r in 0..t.m {
        z[t.basis[r]] = t.at(r, t.ncols);
    }
    let mut values = extract_values(&std, &z);
    let mut residual = model_residual(model, &values, config.feasibility_tol);
    if residual > 0.25 * RESIDUAL_LIMIT {
        if let Some((z_exact, _)) =
            basis_solve(&std, &t, &slack_cols, false, &std.rhs, &|_| 0.0)
        {
            let refined = extract_values(&std, &z_exact);
            let refined_residual = model_residual(model, &refined, config.feasibility_tol);
            if refined_residual < residual {
                values = refined;
                residual = refined_residual;
            }
        }
    }
    if residual > RESIDUAL_LIMIT * (1.0 + scale) {
        return Err(LpError::NumericalFailure { residual });
    }

    // Duals on the original constraint rows.
    let cost_of = |col: usize| std.cost.get(col).copied().unwrap_or(0.0);
    let duals_std = basis_solve(&std, &t, &slack_cols, true, &std.rhs, &cost_of)
        .map(|(y, _)| y)
        .unwrap_or_default();
    let mut duals = vec![0.0; model.constraints.len()];
    if !duals_std.is_empty() {
        for (r, origin) in std.row_origin.iter().enumerate() {
            if let Some(ci) = origin {
                duals[*ci] = std.sense_factor * std.row_sign[r] * duals_std[r];
            }
        }
    }

    let objective = model
        .objective
        .terms()
        .map(|(id, c)| c * values[id.0])
        .sum::<f64>()
        + model.objective.constant_part();
    let _ = std.cost_const;

    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective,
        max_residual: residual,
        duals,
        iterations: total_budget - iter_budget,
    })
}

/// Solves `min c'x : Ax <= b` with free variables through its dual
/// `min b'z : A'z = -c, z >= 0`, which this tableau handles natively (no
/// free-variable split, one row per primal variable). The optimal primal
/// point is read off the dual multipliers; statuses map back through LP
/// duality, with the bounded primal objective ruling out the unbounded case.
///
/// Requires every constraint to be `<=` and every variable free; models in
/// any other shape fall back to the primal solve.
pub fn solve_lp_dual_form(model: &LpModel, config: &SolveConfig) -> Result<LpSolution, LpError> {
    let clean_form = model
        .variables
        .iter()
        .all(|v| v.lower.is_none() && v.upper.is_none())
        && model
            .constraints
            .iter()
            .all(|c| matches!(c.relation, Relation::Le));
    if !clean_form {
        return solve_lp(model, config);
    }

    let nvars = model.variables.len();
    let sense_factor = match model.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    // Duplicate primal rows collapse to one dual column.
    let mut seen: alloc::collections::BTreeMap<Vec<u64>, usize> = alloc::collections::BTreeMap::new();
    let mut kept_rows: Vec<usize> = Vec::new();
    for (ci, c) in model.constraints.iter().enumerate() {
        let mut key: Vec<u64> = Vec::new();
        key.push((c.rhs - c.expr.constant_part()).to_bits());
        for (id, coef) in c.expr.terms() {
            key.push(id.0 as u64);
            key.push(coef.to_bits());
        }
        if !seen.contains_key(&key) {
            seen.insert(key, ci);
            kept_rows.push(ci);
        }
    }

    let mut dual = LpModel::new(Sense::Minimize);
    let mut dual_obj = LinExpr::new();
    let zvars: Vec<VarId> = kept_rows
        .iter()
        .map(|&ci| {
            let c = &model.constraints[ci];
            let z = dual.add_nonneg(alloc::format!("z{ci}"));
            dual_obj.add_term(z, c.rhs - c.expr.constant_part());
            z
        })
        .collect();
    let mut rows: Vec<LinExpr> = vec![LinExpr::new(); nvars];
    for (pos, &ci) in kept_rows.iter().enumerate() {
        for (id, coef) in model.constraints[ci].expr.terms() {
            rows[id.0].add_term(zvars[pos], coef);
        }
    }
    let mut neg_cost = vec![0.0f64; nvars];
    for (id, coef) in model.objective.terms() {
        neg_cost[id.0] -= sense_factor * coef;
    }
    for (v, row) in rows.into_iter().enumerate() {
        dual.add_constraint(alloc::format!("v{v}"), row, Relation::Eq, neg_cost[v]);
    }
    dual.set_objective(dual_obj, Sense::Minimize);

    let dual_solution = solve_lp(&dual, config)?;
    match dual_solution.status {
        LpStatus::Optimal => {}
        // An unbounded or infeasible dual of a bounded-objective primal
        // means the primal is infeasible.
        LpStatus::Unbounded | LpStatus::Infeasible => {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                values: Vec::new(),
                objective: 0.0,
                max_residual: 0.0,
                duals: Vec::new(),
                iterations: dual_solution.iterations,
            });
        }
    }

    let values = dual_solution.duals.clone();
    let residual = model_residual(model, &values, config.feasibility_tol);
    let scale = model
        .constraints
        .iter()
        .fold(1.0f64, |a, c| a.max((c.rhs - c.expr.constant_part()).abs()));
    if values.len() != nvars || residual > RESIDUAL_LIMIT * (1.0 + scale) {
        return Err(LpError::NumericalFailure { residual });
    }
    let objective = model
        .objective
        .terms()
        .map(|(id, c)| c * values[id.0])
        .sum::<f64>()
        + model.objective.constant_part();

    let mut duals = vec![0.0; model.constraints.len()];
    for (pos, &ci) in kept_rows.iter().enumerate() {
        duals[ci] = -sense_factor * dual_solution.values[zvars[pos].0];
    }

    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective,
        max_residual: residual,
        duals,
        iterations: dual_solution.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn cfg() -> SolveConfig {
        SolveConfig::default()
    }

    #[test]
    fn minimizes_against_a_lower_constraint() {
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_nonneg("x".to_string());
        m.add_constraint("c0".to_string(), LinExpr::var(x), Relation::Ge, 2.0);
        m.set_objective(LinExpr::var(x), Sense::Minimize);
        let s = solve_lp(&m, &cfg()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] - 2.0).abs() < 1e-9);
        assert!((s.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasibility() {
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_nonneg("x".to_string());
        m.add_constraint("c0".to_string(), LinExpr::var(x), Relation::Le, -1.0);
        m.set_objective(LinExpr::var(x), Sense::Minimize);
        let s = solve_lp(&m, &cfg()).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        let mut m = LpModel::new(Sense::Maximize);
        let x = m.add_nonneg("x".to_string());
        m.set_objective(LinExpr::var(x), Sense::Maximize);
        let s = solve_lp(&m, &cfg()).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn empty_model_is_trivially_optimal() {
        let m = LpModel::new(Sense::Minimize);
        let s = solve_lp(&m, &cfg()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn solves_a_small_degenerate_program() {
        // min -x - y  s.t. x + y <= 1, x <= 1, y <= 1
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_var("x".to_string(), Some(0.0), Some(1.0));
        let y = m.add_var("y".to_string(), Some(0.0), Some(1.0));
        let mut e = LinExpr::new();
        e.add_term(x, 1.0).add_term(y, 1.0);
        m.add_constraint("cap".to_string(), e.clone(), Relation::Le, 1.0);
        let mut obj = LinExpr::new();
        obj.add_term(x, -1.0).add_term(y, -1.0);
        m.set_objective(obj, Sense::Minimize);
        let s = solve_lp(&m, &cfg()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn free_variables_reach_negative_optima() {
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_free("x".to_string());
        m.add_constraint("lb".to_string(), LinExpr::var(x), Relation::Ge, -5.0);
        m.set_objective(LinExpr::var(x), Sense::Minimize);
        let s = solve_lp(&m, &cfg()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] + 5.0).abs() < 1e-9);
    }

    #[test]
    fn equalities_are_honored() {
        // min x + y  s.t. x + y = 2, x - y = 0
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_free("x".to_string());
        let y = m.add_free("y".to_string());
        let mut sum = LinExpr::new();
        sum.add_term(x, 1.0).add_term(y, 1.0);
        let mut diff = LinExpr::new();
        diff.add_term(x, 1.0).add_term(y, -1.0);
        m.add_constraint("s".to_string(), sum.clone(), Relation::Eq, 2.0);
        m.add_constraint("d".to_string(), diff, Relation::Eq, 0.0);
        m.set_objective(sum, Sense::Minimize);
        let s = solve_lp(&m, &cfg()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] - 1.0).abs() < 1e-9);
        assert!((s.values[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_across_runs() {
        let mut m = LpModel::new(Sense::Minimize);
        let vars: Vec<_> = (0..6)
            .map(|i| m.add_nonneg(alloc::format!("x{i}")))
            .collect();
        for r in 0..4 {
            let mut e = LinExpr::new();
            for (i, &v) in vars.iter().enumerate() {
                e.add_term(v, ((i + r) % 3) as f64 + 0.5);
            }
            m.add_constraint(alloc::format!("c{r}"), e, Relation::Ge, (r + 1) as f64);
        }
        let mut obj = LinExpr::new();
        for (i, &v) in vars.iter().enumerate() {
            obj.add_term(v, 1.0 + i as f64 * 0.25);
        }
        m.set_objective(obj, Sense::Minimize);
        let a = solve_lp(&m, &cfg()).unwrap();
        let b = solve_lp(&m, &cfg()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn objective_scaling_preserves_the_argmin() {
        let mut build = |s: f64| {
            let mut m = LpModel::new(Sense::Minimize);
            let x = m.add_nonneg("x".to_string());
            let y = m.add_nonneg("y".to_string());
            let mut e = LinExpr::new();
            e.add_term(x, 1.0).add_term(y, 2.0);
            m.add_constraint("c".to_string(), e, Relation::Ge, 3.0);
            let mut obj = LinExpr::new();
            obj.add_term(x, 2.0 * s).add_term(y, 3.0 * s);
            m.set_objective(obj, Sense::Minimize);
            solve_lp(&m, &cfg()).unwrap()
        };
        let base = build(1.0);
        let scaled = build(7.5);
        assert_eq!(base.values, scaled.values);
        assert!((scaled.objective - 7.5 * base.objective).abs() < 1e-9);
    }

    #[test]
    fn duals_match_the_primal_objective() {
        // min 3x + 2y s.t. x + y >= 4, x - y <= 2, x,y >= 0.
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_nonneg("x".to_string());
        let y = m.add_nonneg("y".to_string());
        let mut a = LinExpr::new();
        a.add_term(x, 1.0).add_term(y, 1.0);
        let mut b = LinExpr::new();
        b.add_term(x, 1.0).add_term(y, -1.0);
        m.add_constraint("r0".to_string(), a, Relation::Ge, 4.0);
        m.add_constraint("r1".to_string(), b, Relation::Le, 2.0);
        let mut obj = LinExpr::new();
        obj.add_term(x, 3.0).add_term(y, 2.0);
        m.set_objective(obj, Sense::Minimize);
        let s = solve_lp(&m, &cfg()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        let dual_obj = 4.0 * s.duals[0] + 2.0 * s.duals[1];
        assert!((dual_obj - s.objective).abs() < 1e-6);
        assert!(s.duals[0] >= -1e-9);
        assert!(s.duals[1] <= 1e-9);
    }

    #[test]
    fn lp_export_round_trips_key_tokens() {
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_nonneg("load[k=0]".to_string());
        let f = m.add_free("gain".to_string());
        let mut e = LinExpr::new();
        e.add_term(x, 1.0).add_term(f, -2.0);
        m.add_constraint("bal".to_string(), e.clone(), Relation::Eq, 1.0);
        m.set_objective(e, Sense::Minimize);
        let text = m.to_lp_format();
        assert!(text.contains("Minimize"));
        assert!(text.contains("Subject To"));
        assert!(text.contains("gain free"));
        assert!(text.contains("End"));
    }
}
