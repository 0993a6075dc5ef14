//! The reduced finite linear programs for the error bounds and the
//! comparison bounds.
//!
//! Perturbation terms are linearized exactly: with the bias bounds
//! constrained non-negative, `max{Δ·B, -Δ·A}` equals `Δ·B` when `Δ > 0` and
//! `-Δ·A` when `Δ < 0`, so the sign of the parameter picks the dominant
//! branch and no relaxation enters. Bias-recursion constraints are generated
//! per refinement cell and reduced to corner evaluations; where a flow arc
//! shifts a cell across component boundaries, the cell is split into
//! sub-boxes on which the shifted component is constant, keeping the
//! reduction exact.
//!
//! Only the bias pairs reachable from the active perturbation through the
//! flow arcs can influence the bound; pairs outside that dependency closure
//! are dropped together with their constraints, which leaves the optimum
//! unchanged and shrinks the programs considerably.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::flow::{FlowError, FlowSolution};
use crate::lattice::{breakpoint_grid, LatticeBox, Refinement, Step};
use crate::linfunc::{corner_reduce_on_box, CLinearFn};
use crate::lp::{
    solve_lp_dual_form, LinExpr, LpError, LpModel, LpStatus, Relation, Sense, SolveConfig, VarId,
};
use crate::measure::{GeometricStationaryMeasure, MeasureError};
use crate::walk::{delta, PerturbationDelta, RandomWalkSpec, WalkError};

/// Certificate-replay violation ceiling.
pub const REPLAY_TOL: f64 = 1e-8;

/// Which optimization problem to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Minimize the perturbed value plus the error budget: an upper bound.
    UpperError,
    /// Maximize the perturbed value minus the error budget: a lower bound.
    LowerError,
    /// One-sided comparison giving an upper bound directly.
    ComparisonUpper,
    /// One-sided comparison giving a lower bound directly.
    ComparisonLower,
}

impl BoundKind {
    pub const ALL: [BoundKind; 4] = [
        BoundKind::UpperError,
        BoundKind::LowerError,
        BoundKind::ComparisonUpper,
        BoundKind::ComparisonLower,
    ];

    fn has_gain(self) -> bool {
        matches!(self, BoundKind::UpperError | BoundKind::LowerError)
    }

    fn has_family_one(self) -> bool {
        !matches!(self, BoundKind::ComparisonUpper)
    }

    fn has_family_two(self) -> bool {
        !matches!(self, BoundKind::ComparisonLower)
    }

    pub fn is_upper(self) -> bool {
        matches!(self, BoundKind::UpperError | BoundKind::ComparisonUpper)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundKind::UpperError => write!(f, "upper"),
            BoundKind::LowerError => write!(f, "lower"),
            BoundKind::ComparisonUpper => write!(f, "cmp-upper"),
            BoundKind::ComparisonLower => write!(f, "cmp-lower"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundError {
    Walk(WalkError),
    Measure(MeasureError),
    Flow(FlowError),
    Lp(LpError),
    /// A cell/step pair required by the constraint generator has no solved
    /// flow attached.
    MissingFlow { cell: usize, step: Step },
    /// The performance function is not indexed by the model partition.
    BadPerformanceFn { components: usize, expected: usize },
}

impl fmt::Display for BoundError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundError::Walk(e) => write!(f, "{e}"),
            BoundError::Measure(e) => write!(f, "{e}"),
            BoundError::Flow(e) => write!(f, "{e}"),
            BoundError::Lp(e) => write!(f, "{e}"),
            BoundError::MissingFlow { cell, step } => {
                write!(f, "no flow solution for cell {cell}, step {step:?}")
            }
            BoundError::BadPerformanceFn { components, expected } => write!(
                f,
                "performance function has {components} component rows, expected {expected}"
            ),
        }
    }
}

impl core::error::Error for BoundError {}

impl From<WalkError> for BoundError {
    fn from(e: WalkError) -> Self {
        BoundError::Walk(e)
    }
}

impl From<MeasureError> for BoundError {
    fn from(e: MeasureError) -> Self {
        BoundError::Measure(e)
    }
}

impl From<LpError> for BoundError {
    fn from(e: LpError) -> Self {
        BoundError::Lp(e)
    }
}

/// Everything a bound problem needs; the measure must be normalized.
#[derive(Clone, Copy)]
pub struct BoundInputs<'a> {
    pub refinement: &'a Refinement,
    pub walk: &'a RandomWalkSpec,
    pub perturbed: &'a RandomWalkSpec,
    pub measure: &'a GeometricStationaryMeasure,
    pub performance: &'a CLinearFn,
    pub flows: &'a FlowSolution,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundConfig {
    pub lp: SolveConfig,
    /// Declared non-negativity of the performance function; enables clamping
    /// a negative lower bound to zero.
    pub f_nonneg: bool,
    /// Restrict bias variables to the dependency closure of the active
    /// perturbation. Sound and optimum-preserving; disable to generate the
    /// full variable set.
    pub prune: bool,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            lp: SolveConfig::default(),
            f_nonneg: true,
            prune: true,
        }
    }
}

/// Optimal certificate: the coefficient tables of the solved functions.
/// Bias tables cover the dependency closure of the active perturbation.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub fbar: CLinearFn,
    pub gain: CLinearFn,
    /// `B_u` coefficient rows per (component, step).
    pub bias_upper: BTreeMap<(usize, Step), Vec<f64>>,
    /// `A_u` coefficient rows per (component, step).
    pub bias_lower: BTreeMap<(usize, Step), Vec<f64>>,
}

/// Outcome of one bound problem. `value` is meaningful only when `status`
/// is optimal; a negative lower bound is clamped to zero when the
/// performance function is declared non-negative, with `clamped` set.
#[derive(Debug, Clone)]
pub struct BoundResult {
    pub kind: BoundKind,
    pub status: LpStatus,
    pub value: f64,
    pub clamped: bool,
    pub certificate: Option<Certificate>,
    pub decision_vars: usize,
    pub constraints: usize,
    /// Max violation when replaying the generated constraints against the
    /// certificate; at most [`REPLAY_TOL`] for accepted solutions.
    pub replay_violation: f64,
}

impl BoundResult {
    pub fn status_token(&self) -> &'static str {
        if self.clamped {
            "CLAMPED"
        } else {
            match self.status {
                LpStatus::Optimal => "OPTIMAL",
                LpStatus::Infeasible => "INFEASIBLE",
                LpStatus::Unbounded => "UNBOUNDED",
            }
        }
    }

    /// Structured text report of the result and its certificate.
    pub fn report(&self) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "kind: {}", self.kind);
        let _ = writeln!(out, "status: {}", self.status_token());
        if self.status == LpStatus::Optimal {
            let _ = writeln!(out, "value: {:.12e}", self.value);
            let _ = writeln!(
                out,
                "lp size: {} variables, {} constraints",
                self.decision_vars, self.constraints
            );
            let _ = writeln!(out, "replay violation: {:.3e}", self.replay_violation);
        }
        if let Some(cert) = &self.certificate {
            for (k, row) in cert.fbar.rows().iter().enumerate() {
                let _ = writeln!(out, "fbar[C{k}]: {row:?}");
            }
            for (k, row) in cert.gain.rows().iter().enumerate() {
                let _ = writeln!(out, "gain[C{k}]: {row:?}");
            }
            for ((k, u), row) in &cert.bias_upper {
                let _ = writeln!(out, "bias_upper[C{k},{u:?}]: {row:?}");
            }
            for ((k, u), row) in &cert.bias_lower {
                let _ = writeln!(out, "bias_lower[C{k},{u:?}]: {row:?}");
            }
        }
        out
    }
}

fn step_code(u: &[i64]) -> String {
    let mut s = String::new();
    for &x in u {
        match x {
            -2 => s.push_str("n2"),
            -1 => s.push_str("n1"),
            0 => s.push('z'),
            1 => s.push_str("p1"),
            _ => s.push_str("p2"),
        }
    }
    s
}

/// The assembled LP plus the bookkeeping needed to read a certificate back.
pub struct BoundLp {
    pub model: LpModel,
    dim: usize,
    components: usize,
    fbar: Vec<Vec<VarId>>,
    gain: Option<Vec<Vec<VarId>>>,
    bias_upper: BTreeMap<(usize, Step), Vec<VarId>>,
    bias_lower: BTreeMap<(usize, Step), Vec<VarId>>,
}

/// Components whose boxes intersect `cell` shifted by `d`.
fn shifted_components(refinement: &Refinement, j: usize, d: &[i64]) -> Vec<usize> {
    let shifted = refinement.cell(j).shifted(d);
    refinement
        .partition()
        .components()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.intersects(&shifted))
        .map(|(k, _)| k)
        .collect()
}

/// Bias pairs referenced by the recursion rows of `(j, u)`: one pair per
/// positive flow arc and per component its node overlaps.
fn arc_references(
    inputs: &BoundInputs<'_>,
    j: usize,
    u: &[i64],
) -> Result<Vec<(usize, Step)>, BoundError> {
    let sub = inputs
        .flows
        .get(j, u)
        .ok_or_else(|| BoundError::MissingFlow {
            cell: j,
            step: u.to_vec(),
        })?;
    let mut refs = BTreeSet::new();
    for (arc, &phi) in sub.problem.arcs.iter().zip(sub.phi.iter()) {
        if phi == 0.0 {
            continue;
        }
        let d = &sub.problem.nodes[arc.from];
        for k in shifted_components(inputs.refinement, j, d) {
            refs.insert((k, arc.step.clone()));
        }
    }
    Ok(refs.into_iter().collect())
}

/// Transitive closure of bias pairs under arc references, starting from the
/// seed pairs.
fn dependency_closure(
    inputs: &BoundInputs<'_>,
    seeds: BTreeSet<(usize, Step)>,
) -> Result<BTreeSet<(usize, Step)>, BoundError> {
    let refinement = inputs.refinement;
    let mut kept = seeds.clone();
    let mut queue: Vec<(usize, Step)> = seeds.into_iter().collect();
    while let Some((k, u)) = queue.pop() {
        for j in 0..refinement.len() {
            if refinement.parent(j) != k {
                continue;
            }
            for pair in arc_references(inputs, j, &u)? {
                if kept.insert(pair.clone()) {
                    queue.push(pair);
                }
            }
        }
    }
    Ok(kept)
}

/// Splits a cell into sub-boxes on which the component of `n + d` is
/// constant for every offset in `offsets`.
fn split_cell(
    refinement: &Refinement,
    j: usize,
    offsets: &[&Step],
) -> Vec<LatticeBox> {
    let cell = refinement.cell(j);
    let dim = cell.dim();
    let grid = breakpoint_grid(refinement.partition().components(), dim);
    let mut cut_sets: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); dim];
    for d in offsets {
        for i in 0..dim {
            for &bp in &grid[i] {
                let x = bp - d[i];
                let lo = cell.lower()[i];
                let hi = cell.upper()[i];
                if x > lo && hi.map_or(true, |h| x <= h) {
                    cut_sets[i].insert(x);
                }
            }
        }
    }
    // Per-dimension pieces between consecutive cuts.
    let mut pieces: Vec<Vec<(i64, Option<i64>)>> = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut points: Vec<i64> = cut_sets[i].iter().copied().collect();
        points.push(cell.lower()[i]);
        points.sort_unstable();
        points.dedup();
        let mut dim_pieces = Vec::new();
        for (t, &a) in points.iter().enumerate() {
            let end = match points.get(t + 1) {
                Some(&next) => Some(next - 1),
                None => cell.upper()[i],
            };
            dim_pieces.push((a, end));
        }
        pieces.push(dim_pieces);
    }
    let mut out = Vec::new();
    let mut index = vec![0usize; dim];
    loop {
        let lower: Vec<i64> = (0..dim).map(|i| pieces[i][index[i]].0).collect();
        let upper: Vec<Option<i64>> = (0..dim).map(|i| pieces[i][index[i]].1).collect();
        out.push(LatticeBox::new(lower, upper).expect("sub-box intervals are valid"));
        let mut i = dim;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            index[i] += 1;
            if index[i] < pieces[i].len() {
                break;
            }
            index[i] = 0;
            if i == 0 {
                return out;
            }
        }
    }
}

/// Adds `coef * H(n + d)` to an affine row, where `H` is the symbolic
/// component-linear function given by `vars` on component `k_d`.
fn add_shifted_symbolic(row: &mut [LinExpr], vars: &[VarId], d: &[i64], coef: f64) {
    row[0].add_term(vars[0], coef);
    for (i, &di) in d.iter().enumerate() {
        if di != 0 {
            row[0].add_term(vars[i + 1], coef * di as f64);
        }
    }
    for (i, &v) in vars.iter().enumerate().skip(1) {
        row[i].add_term(v, coef);
    }
}

/// Adds `coef * F(n + d)` for the numeric function row `f_row`.
fn add_shifted_numeric(row: &mut [LinExpr], f_row: &[f64], d: &[i64], coef: f64) {
    let mut constant = f_row[0];
    for (i, &di) in d.iter().enumerate() {
        constant += f_row[i + 1] * di as f64;
    }
    row[0].add_const(coef * constant);
    for (i, &c) in f_row.iter().enumerate().skip(1) {
        row[i].add_const(coef * c);
    }
}

/// Assembles the finite LP for one bound kind.
pub fn build_bound_lp(
    kind: BoundKind,
    inputs: &BoundInputs<'_>,
    config: &BoundConfig,
) -> Result<BoundLp, BoundError> {
    let partition = inputs.refinement.partition();
    let dim = partition.dim();
    let components = partition.len();
    if inputs.performance.components() != components {
        return Err(BoundError::BadPerformanceFn {
            components: inputs.performance.components(),
            expected: components,
        });
    }
    let deltas = delta(inputs.walk, inputs.perturbed)?;

    // Seed the bias closures by the sign resolution each family performs.
    let mut upper_seeds: BTreeSet<(usize, Step)> = BTreeSet::new();
    let mut lower_seeds: BTreeSet<(usize, Step)> = BTreeSet::new();
    for k in 0..components {
        for (u, &d) in deltas.row(k) {
            if d == 0.0 || u.iter().all(|&x| x == 0) {
                continue;
            }
            if kind.has_family_one() {
                if d > 0.0 {
                    upper_seeds.insert((k, u.clone()));
                } else {
                    lower_seeds.insert((k, u.clone()));
                }
            }
            if kind.has_family_two() {
                if d > 0.0 {
                    lower_seeds.insert((k, u.clone()));
                } else {
                    upper_seeds.insert((k, u.clone()));
                }
            }
        }
    }
    let (b_kept, a_kept) = if config.prune {
        (
            dependency_closure(inputs, upper_seeds)?,
            dependency_closure(inputs, lower_seeds)?,
        )
    } else {
        let mut all = BTreeSet::new();
        for k in 0..components {
            for u in partition.neighborhood(k) {
                if u.iter().any(|&x| x != 0) {
                    all.insert((k, u.clone()));
                }
            }
        }
        (all.clone(), all)
    };

    let mut model = LpModel::new(Sense::Minimize);
    let fbar: Vec<Vec<VarId>> = (0..components)
        .map(|k| {
            (0..=dim)
                .map(|i| model.add_free(format!("fbar_k{k}_i{i}")))
                .collect()
        })
        .collect();
    let gain: Option<Vec<Vec<VarId>>> = kind.has_gain().then(|| {
        (0..components)
            .map(|k| {
                (0..=dim)
                    .map(|i| model.add_free(format!("g_k{k}_i{i}")))
                    .collect()
            })
            .collect()
    });
    let mut bias_upper: BTreeMap<(usize, Step), Vec<VarId>> = BTreeMap::new();
    for (k, u) in &b_kept {
        let vars = (0..=dim)
            .map(|i| model.add_free(format!("b_k{k}_{}_i{i}", step_code(u))))
            .collect();
        bias_upper.insert((*k, u.clone()), vars);
    }
    let mut bias_lower: BTreeMap<(usize, Step), Vec<VarId>> = BTreeMap::new();
    for (k, u) in &a_kept {
        let vars = (0..=dim)
            .map(|i| model.add_free(format!("a_k{k}_{}_i{i}", step_code(u))))
            .collect();
        bias_lower.insert((*k, u.clone()), vars);
    }

    let add_reduced = |model: &mut LpModel, name: &str, row: &[LinExpr], cell: &LatticeBox| {
        for (ci, expr) in corner_reduce_on_box(row, cell).into_iter().enumerate() {
            model.add_constraint(format!("{name}_c{ci}"), expr, Relation::Le, 0.0);
        }
    };

    // Perturbation families on each component: the sign of Δ picks the
    // dominant branch of the max terms exactly.
    for k in 0..components {
        let comp_box = partition.component(k).clone();
        if kind.has_family_one() {
            let mut row = vec![LinExpr::new(); dim + 1];
            for (i, &v) in fbar[k].iter().enumerate() {
                row[i].add_term(v, 1.0);
            }
            add_shifted_numeric(&mut row, inputs.performance.row(k), &vec![0; dim], -1.0);
            for (u, &d) in deltas.row(k) {
                if d == 0.0 || u.iter().all(|&x| x == 0) {
                    continue;
                }
                if d > 0.0 {
                    let vars = &bias_upper[&(k, u.clone())];
                    for (i, &v) in vars.iter().enumerate() {
                        row[i].add_term(v, d);
                    }
                } else {
                    let vars = &bias_lower[&(k, u.clone())];
                    for (i, &v) in vars.iter().enumerate() {
                        row[i].add_term(v, -d);
                    }
                }
            }
            if let Some(gain) = &gain {
                for (i, &v) in gain[k].iter().enumerate() {
                    row[i].add_term(v, -1.0);
                }
            }
            add_reduced(&mut model, &format!("pert1_k{k}"), &row, &comp_box);
        }
        if kind.has_family_two() {
            let mut row = vec![LinExpr::new(); dim + 1];
            for (i, &v) in fbar[k].iter().enumerate() {
                row[i].add_term(v, -1.0);
            }
            add_shifted_numeric(&mut row, inputs.performance.row(k), &vec![0; dim], 1.0);
            for (u, &d) in deltas.row(k) {
                if d == 0.0 || u.iter().all(|&x| x == 0) {
                    continue;
                }
                if d > 0.0 {
                    let vars = &bias_lower[&(k, u.clone())];
                    for (i, &v) in vars.iter().enumerate() {
                        row[i].add_term(v, d);
                    }
                } else {
                    let vars = &bias_upper[&(k, u.clone())];
                    for (i, &v) in vars.iter().enumerate() {
                        row[i].add_term(v, -d);
                    }
                }
            }
            if let Some(gain) = &gain {
                for (i, &v) in gain[k].iter().enumerate() {
                    row[i].add_term(v, -1.0);
                }
            }
            add_reduced(&mut model, &format!("pert2_k{k}"), &row, &comp_box);
        }

        // Pointwise non-negativity of the component-linear functions.
        let mut neg_fbar = vec![LinExpr::new(); dim + 1];
        for (i, &v) in fbar[k].iter().enumerate() {
            neg_fbar[i].add_term(v, -1.0);
        }
        add_reduced(&mut model, &format!("fbar_nonneg_k{k}"), &neg_fbar, &comp_box);
        if let Some(gain) = &gain {
            let mut neg_gain = vec![LinExpr::new(); dim + 1];
            for (i, &v) in gain[k].iter().enumerate() {
                neg_gain[i].add_term(v, -1.0);
            }
            add_reduced(&mut model, &format!("g_nonneg_k{k}"), &neg_gain, &comp_box);
        }
    }
    for ((k, u), vars) in &bias_upper {
        let mut row = vec![LinExpr::new(); dim + 1];
        for (i, &v) in vars.iter().enumerate() {
            row[i].add_term(v, -1.0);
        }
        add_reduced(
            &mut model,
            &format!("b_nonneg_k{k}_{}", step_code(u)),
            &row,
            partition.component(*k),
        );
    }
    for ((k, u), vars) in &bias_lower {
        let mut row = vec![LinExpr::new(); dim + 1];
        for (i, &v) in vars.iter().enumerate() {
            row[i].add_term(v, -1.0);
        }
        add_reduced(
            &mut model,
            &format!("a_nonneg_k{k}_{}", step_code(u)),
            &row,
            partition.component(*k),
        );
    }

    // Bias recursion families per cell and kept step.
    for j in 0..inputs.refinement.len() {
        let k = inputs.refinement.parent(j);
        for u in inputs.refinement.neighborhood(j).to_vec() {
            if u.iter().all(|&x| x == 0) {
                continue;
            }
            let in_b = b_kept.contains(&(k, u.clone()));
            let in_a = a_kept.contains(&(k, u.clone()));
            if !in_b && !in_a {
                continue;
            }
            let sub = inputs
                .flows
                .get(j, &u)
                .ok_or_else(|| BoundError::MissingFlow {
                    cell: j,
                    step: u.clone(),
                })?;
            let k_shift = inputs
                .refinement
                .neighbor_component(j, &u)
                .expect("step admissible from cell");
            let used: Vec<(&Step, &Step, f64)> = sub
                .problem
                .arcs
                .iter()
                .zip(sub.phi.iter())
                .filter(|(_, &phi)| phi > 0.0)
                .map(|(arc, &phi)| (&sub.problem.nodes[arc.from], &arc.step, phi))
                .collect();
            let offsets: Vec<&Step> = {
                let mut set = BTreeSet::new();
                for (d, _, _) in &used {
                    set.insert(*d);
                }
                set.into_iter().collect()
            };
            let sub_boxes = split_cell(inputs.refinement, j, &offsets);
            for (sbi, sb) in sub_boxes.iter().enumerate() {
                // Component of n + d is constant per sub-box.
                let locate_shift = |d: &Step| {
                    let probe: Vec<i64> =
                        sb.lower().iter().zip(d.iter()).map(|(&a, &b)| a + b).collect();
                    partition.locate(&probe)
                };
                if in_b {
                    let mut row = vec![LinExpr::new(); dim + 1];
                    add_shifted_numeric(&mut row, inputs.performance.row(k_shift), &u, 1.0);
                    add_shifted_numeric(
                        &mut row,
                        inputs.performance.row(k),
                        &vec![0; dim],
                        -1.0,
                    );
                    for (d, v, phi) in &used {
                        let k_d = locate_shift(d);
                        let vars = &bias_upper[&(k_d, (*v).clone())];
                        add_shifted_symbolic(&mut row, vars, d, *phi);
                    }
                    let own = &bias_upper[&(k, u.clone())];
                    for (i, &vv) in own.iter().enumerate() {
                        row[i].add_term(vv, -1.0);
                    }
                    add_reduced(
                        &mut model,
                        &format!("rec_b_j{j}_{}_s{sbi}", step_code(&u)),
                        &row,
                        sb,
                    );
                }
                if in_a {
                    let mut row = vec![LinExpr::new(); dim + 1];
                    add_shifted_numeric(&mut row, inputs.performance.row(k_shift), &u, -1.0);
                    add_shifted_numeric(
                        &mut row,
                        inputs.performance.row(k),
                        &vec![0; dim],
                        1.0,
                    );
                    for (d, v, phi) in &used {
                        let k_d = locate_shift(d);
                        let vars = &bias_lower[&(k_d, (*v).clone())];
                        add_shifted_symbolic(&mut row, vars, d, *phi);
                    }
                    let own = &bias_lower[&(k, u.clone())];
                    for (i, &vv) in own.iter().enumerate() {
                        row[i].add_term(vv, -1.0);
                    }
                    add_reduced(
                        &mut model,
                        &format!("rec_a_j{j}_{}_s{sbi}", step_code(&u)),
                        &row,
                        sb,
                    );
                }
            }
        }
    }

    // Objective from the closed-form component moments.
    let mut objective = LinExpr::new();
    let mut sense = Sense::Minimize;
    for k in 0..components {
        let moments = inputs.measure.component_moments(partition, k)?;
        let weight = |i: usize| if i == 0 { moments.mass } else { moments.first[i - 1] };
        match kind {
            BoundKind::UpperError => {
                for i in 0..=dim {
                    objective.add_term(fbar[k][i], weight(i));
                    objective.add_term(gain.as_ref().unwrap()[k][i], weight(i));
                }
            }
            BoundKind::LowerError => {
                sense = Sense::Maximize;
                for i in 0..=dim {
                    objective.add_term(fbar[k][i], weight(i));
                    objective.add_term(gain.as_ref().unwrap()[k][i], -weight(i));
                }
            }
            BoundKind::ComparisonUpper => {
                for i in 0..=dim {
                    objective.add_term(fbar[k][i], weight(i));
                }
            }
            BoundKind::ComparisonLower => {
                sense = Sense::Maximize;
                for i in 0..=dim {
                    objective.add_term(fbar[k][i], weight(i));
                }
            }
        }
    }
    model.set_objective(objective, sense);

    Ok(BoundLp {
        model,
        dim,
        components,
        fbar,
        gain,
        bias_upper,
        bias_lower,
    })
}

/// Builds and solves one bound problem and replays the certificate.
pub fn solve_bound(
    kind: BoundKind,
    inputs: &BoundInputs<'_>,
    config: &BoundConfig,
) -> Result<BoundResult, BoundError> {
    let lp = build_bound_lp(kind, inputs, config)?;
    let solution = solve_lp_dual_form(&lp.model, &config.lp)?;
    let decision_vars = lp.model.num_vars();
    let constraints = lp.model.num_constraints();

    if solution.status != LpStatus::Optimal {
        return Ok(BoundResult {
            kind,
            status: solution.status,
            value: f64::NAN,
            clamped: false,
            certificate: None,
            decision_vars,
            constraints,
            replay_violation: f64::NAN,
        });
    }

    let read_rows = |vars: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
        vars.iter()
            .map(|row| row.iter().map(|v| solution.values[v.0]).collect())
            .collect()
    };
    let fbar = CLinearFn::new(read_rows(&lp.fbar));
    let gain = match &lp.gain {
        Some(g) => CLinearFn::new(read_rows(g)),
        None => CLinearFn::zero(lp.components, lp.dim),
    };
    let read_bias = |table: &BTreeMap<(usize, Step), Vec<VarId>>| {
        table
            .iter()
            .map(|((k, u), vars)| {
                (
                    (*k, u.clone()),
                    vars.iter().map(|v| solution.values[v.0]).collect(),
                )
            })
            .collect()
    };
    let certificate = Certificate {
        fbar,
        gain,
        bias_upper: read_bias(&lp.bias_upper),
        bias_lower: read_bias(&lp.bias_lower),
    };

    // Replay: every generated corner constraint must hold at the optimum.
    let replay_violation = lp
        .model
        .constraints
        .iter()
        .map(|c| c.expr.evaluate(&solution.values) - c.rhs)
        .fold(0.0f64, f64::max);

    let mut value = solution.objective;
    let mut clamped = false;
    if kind == BoundKind::LowerError && config.f_nonneg && value < 0.0 {
        value = 0.0;
        clamped = true;
    }

    Ok(BoundResult {
        kind,
        status: LpStatus::Optimal,
        value,
        clamped,
        certificate: Some(certificate),
        decision_vars,
        constraints,
        replay_violation,
    })
}

/// All four bound problems on one model.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub upper: BoundResult,
    pub lower: BoundResult,
    pub cmp_upper: BoundResult,
    pub cmp_lower: BoundResult,
}

impl Sandwich {
    /// Tightest available upper bound across the optimal problems.
    pub fn best_upper(&self) -> Option<f64> {
        [&self.upper, &self.cmp_upper]
            .into_iter()
            .filter(|r| r.status == LpStatus::Optimal)
            .map(|r| r.value)
            .min_by(f64::total_cmp)
    }

    /// Tightest available lower bound across the optimal problems.
    pub fn best_lower(&self) -> Option<f64> {
        [&self.lower, &self.cmp_lower]
            .into_iter()
            .filter(|r| r.status == LpStatus::Optimal)
            .map(|r| r.value)
            .max_by(f64::total_cmp)
    }

    pub fn results(&self) -> [&BoundResult; 4] {
        [&self.upper, &self.lower, &self.cmp_upper, &self.cmp_lower]
    }
}

/// Runs all four bound kinds and returns the bundle.
pub fn sandwich(inputs: &BoundInputs<'_>, config: &BoundConfig) -> Result<Sandwich, BoundError> {
    Ok(Sandwich {
        upper: solve_bound(BoundKind::UpperError, inputs, config)?,
        lower: solve_bound(BoundKind::LowerError, inputs, config)?,
        cmp_upper: solve_bound(BoundKind::ComparisonUpper, inputs, config)?,
        cmp_lower: solve_bound(BoundKind::ComparisonLower, inputs, config)?,
    })
}

/// Re-derives `Δ` and evaluates the two perturbation families of a
/// certificate pointwise at the given states, independently of the LP rows.
/// Returns the max violation; bias bounds must cover the active pairs.
pub fn pointwise_family_check(
    inputs: &BoundInputs<'_>,
    certificate: &Certificate,
    states: &[Vec<i64>],
) -> Result<f64, BoundError> {
    let partition = inputs.refinement.partition();
    let deltas: PerturbationDelta = delta(inputs.walk, inputs.perturbed)?;
    let mut worst = f64::NEG_INFINITY;
    for n in states {
        let k = partition.locate(n);
        let fbar = certificate.fbar.evaluate_on(k, n);
        let f = inputs.performance.evaluate_on(k, n);
        let g = certificate.gain.evaluate_on(k, n);
        let mut width_one = 0.0;
        let mut width_two = 0.0;
        for (u, &d) in deltas.row(k) {
            if d == 0.0 || u.iter().all(|&x| x == 0) {
                continue;
            }
            let eval = |table: &BTreeMap<(usize, Step), Vec<f64>>| -> f64 {
                let row = &table[&(k, u.clone())];
                row[0]
                    + row[1..]
                        .iter()
                        .zip(n.iter())
                        .map(|(&c, &x)| c * x as f64)
                        .sum::<f64>()
            };
            if d > 0.0 {
                width_one += d * eval(&certificate.bias_upper);
                width_two += d * eval(&certificate.bias_lower);
            } else {
                width_one += -d * eval(&certificate.bias_lower);
                width_two += -d * eval(&certificate.bias_upper);
            }
        }
        worst = worst.max(fbar - f + width_one - g);
        worst = worst.max(f - fbar + width_two - g);
    }
    Ok(worst)
}
