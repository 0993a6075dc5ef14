//! Per-(cell, step) flow problems whose solutions realize the bias-term
//! recursion: the demand at node `d` is the difference between the
//! probability rows of the shifted and unshifted state, and a feasible
//! non-negative flow balancing those demands yields coefficients that expand
//! a horizon-`t+1` bias as a combination of horizon-`t` biases.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::lattice::{Refinement, Step};
use crate::lp::{solve_lp, LinExpr, LpError, LpModel, LpStatus, Relation, Sense, SolveConfig};
use crate::walk::RandomWalkSpec;

/// Node-balance residual ceiling for accepted flow solutions.
pub const BALANCE_TOL: f64 = 1e-9;

/// Directed arc in a flow problem: `step` applied at node `from` lands on
/// node `to`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowArc {
    pub from: usize,
    pub step: Step,
    pub to: usize,
}

/// The transportation problem for one `(cell, step)` pair.
///
/// Nodes are the offsets `N_{j,u} = N_j ∪ (u + N_{c(j,u)})`. Arcs keep to
/// steps admissible from every state of the shifted cell, so the expanded
/// flow never references a bias term outside the orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProblem {
    pub cell: usize,
    pub step: Step,
    pub nodes: Vec<Step>,
    pub demand: Vec<f64>,
    pub arcs: Vec<FlowArc>,
}

impl FlowProblem {
    /// Text table of nodes, demands, and arcs for debugging.
    pub fn table(&self) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "flow problem: cell {} step {:?}", self.cell, self.step);
        for (i, node) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "  node {i} at {:?}: demand {:+.12e}", node, self.demand[i]);
        }
        for arc in &self.arcs {
            let _ = writeln!(out, "  arc {} --{:?}--> {}", arc.from, arc.step, arc.to);
        }
        out
    }
}

/// Solved flow for one `(cell, step)` pair.
#[derive(Debug, Clone)]
pub struct SubFlow {
    pub problem: FlowProblem,
    /// One value per arc of `problem.arcs`, all non-negative.
    pub phi: Vec<f64>,
    pub total: f64,
    pub balance_residual: f64,
}

/// Optional per-arc objective weights; the default weighs every arc one.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowConfig {
    pub arc_weight: Option<fn(d: &[i64], v: &[i64]) -> f64>,
    pub lp: SolveConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowError {
    StepNotAllowed { cell: usize, step: Step },
    /// An infeasible subproblem; feasibility is guaranteed for valid inputs,
    /// so this signals an implementation bug rather than a model property.
    Internal { cell: usize, step: Step, status: LpStatus },
    Numerical { cell: usize, step: Step, source: LpError },
    BalanceResidual { cell: usize, step: Step, residual: f64 },
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::StepNotAllowed { cell, step } => {
                write!(f, "step {step:?} is not admissible from cell {cell}")
            }
            FlowError::Internal { cell, step, status } => write!(
                f,
                "internal error: flow subproblem (cell {cell}, step {step:?}) returned {status}"
            ),
            FlowError::Numerical { cell, step, source } => write!(
                f,
                "flow subproblem (cell {cell}, step {step:?}) failed numerically: {source}"
            ),
            FlowError::BalanceResidual { cell, step, residual } => write!(
                f,
                "flow subproblem (cell {cell}, step {step:?}) has balance residual {residual:e}"
            ),
        }
    }
}

impl core::error::Error for FlowError {}

/// All flows of a walk on a refinement, indexed by cell and step.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    per_cell: Vec<BTreeMap<Step, SubFlow>>,
    variable_count: usize,
}

impl FlowSolution {
    pub fn cells(&self) -> usize {
        self.per_cell.len()
    }

    pub fn get(&self, j: usize, u: &[i64]) -> Option<&SubFlow> {
        self.per_cell[j].get(u)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Step, &SubFlow)> {
        self.per_cell
            .iter()
            .enumerate()
            .flat_map(|(j, m)| m.iter().map(move |(u, s)| (j, u, s)))
    }

    /// Total number of flow variables generated across all subproblems.
    pub fn variable_count(&self) -> usize {
        self.variable_count
    }

    pub fn subproblem_count(&self) -> usize {
        self.per_cell.iter().map(|m| m.len()).sum()
    }
}

/// Steps admissible from every state of cell `j` shifted by `d`: dimension
/// `i` admits `-1` iff `L_{j,i} + d_i >= 1`. Where the component of `n + d`
/// is constant over the cell this equals that component's neighborhood.
fn safe_steps(cell_lower: &[i64], d: &[i64]) -> Vec<Step> {
    let choices: Vec<Vec<i64>> = cell_lower
        .iter()
        .zip(d.iter())
        .map(|(&lo, &off)| {
            if lo + off >= 1 {
                vec![-1, 0, 1]
            } else {
                vec![0, 1]
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut cur = vec![0i64; cell_lower.len()];
    fn rec(choices: &[Vec<i64>], i: usize, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if i == choices.len() {
            out.push(cur.clone());
            return;
        }
        for &v in &choices[i] {
            cur[i] = v;
            rec(choices, i + 1, cur, out);
        }
    }
    rec(&choices, 0, &mut cur, &mut out);
    out
}

/// Builds the flow problem for cell `j` and step `u ∈ N_j \ {0}`.
pub fn build_flow_problem(
    refinement: &Refinement,
    walk: &RandomWalkSpec,
    j: usize,
    u: &[i64],
) -> Result<FlowProblem, FlowError> {
    if u.iter().all(|&x| x == 0) {
        return Err(FlowError::StepNotAllowed {
            cell: j,
            step: u.to_vec(),
        });
    }
    let k_shift = refinement
        .neighbor_component(j, u)
        .map_err(|_| FlowError::StepNotAllowed {
            cell: j,
            step: u.to_vec(),
        })?;
    let k_home = refinement.parent(j);
    let partition = refinement.partition();

    let mut nodes: Vec<Step> = refinement.neighborhood(j).to_vec();
    for v in partition.neighborhood(k_shift) {
        let d: Step = u.iter().zip(v.iter()).map(|(&a, &b)| a + b).collect();
        nodes.push(d);
    }
    nodes.sort_unstable();
    nodes.dedup();

    let law = walk.law();
    let demand: Vec<f64> = nodes
        .iter()
        .map(|d| {
            let rel: Step = d.iter().zip(u.iter()).map(|(&a, &b)| a - b).collect();
            law.prob(k_shift, &rel) - law.prob(k_home, d)
        })
        .collect();
    debug_assert!(demand.iter().sum::<f64>().abs() < 1e-12);

    let index: BTreeMap<&Step, usize> = nodes.iter().zip(0..).collect();
    let lower = refinement.cell(j).lower();
    let mut arcs = Vec::new();
    for (ni, d) in nodes.iter().enumerate() {
        for v in safe_steps(lower, d) {
            if v.iter().all(|&x| x == 0) {
                continue;
            }
            let target: Step = d.iter().zip(v.iter()).map(|(&a, &b)| a + b).collect();
            if let Some(&ti) = index.get(&target) {
                arcs.push(FlowArc {
                    from: ni,
                    step: v,
                    to: ti,
                });
            }
        }
    }

    Ok(FlowProblem {
        cell: j,
        step: u.to_vec(),
        nodes,
        demand,
        arcs,
    })
}

/// Solves one flow problem: minimize the weighted flow total subject to node
/// balance `inflow - outflow = demand` with non-negative flows.
pub fn solve_flow_problem(
    problem: FlowProblem,
    config: &FlowConfig,
) -> Result<SubFlow, FlowError> {
    let mut model = LpModel::new(Sense::Minimize);
    let mut objective = LinExpr::new();
    let vars: Vec<_> = problem
        .arcs
        .iter()
        .enumerate()
        .map(|(i, arc)| {
            let id = model.add_nonneg(format!("phi{i}"));
            let w = config
                .arc_weight
                .map_or(1.0, |f| f(&problem.nodes[arc.from], &arc.step));
            objective.add_term(id, w);
            id
        })
        .collect();
    for (ni, &dem) in problem.demand.iter().enumerate() {
        let mut balance = LinExpr::new();
        for (ai, arc) in problem.arcs.iter().enumerate() {
            if arc.to == ni {
                balance.add_term(vars[ai], 1.0);
            }
            if arc.from == ni {
                balance.add_term(vars[ai], -1.0);
            }
        }
        model.add_constraint(format!("node{ni}"), balance, Relation::Eq, dem);
    }
    model.set_objective(objective, Sense::Minimize);

    let solution = solve_lp(&model, &config.lp).map_err(|source| FlowError::Numerical {
        cell: problem.cell,
        step: problem.step.clone(),
        source,
    })?;
    if solution.status != LpStatus::Optimal {
        return Err(FlowError::Internal {
            cell: problem.cell,
            step: problem.step.clone(),
            status: solution.status,
        });
    }
    let phi = solution.values;
    let mut residual = 0.0f64;
    for (ni, &dem) in problem.demand.iter().enumerate() {
        let mut net = -dem;
        for (ai, arc) in problem.arcs.iter().enumerate() {
            if arc.to == ni {
                net += phi[ai];
            }
            if arc.from == ni {
                net -= phi[ai];
            }
        }
        residual = residual.max(net.abs());
    }
    if residual > BALANCE_TOL {
        return Err(FlowError::BalanceResidual {
            cell: problem.cell,
            step: problem.step.clone(),
            residual,
        });
    }
    Ok(SubFlow {
        total: phi.iter().sum(),
        phi,
        balance_residual: residual,
        problem,
    })
}

/// Solves every `(cell, step)` subproblem. Identical subproblems (same nodes,
/// demands, arcs, weights) are solved once and shared.
pub fn solve_all_flows(
    refinement: &Refinement,
    walk: &RandomWalkSpec,
    config: &FlowConfig,
) -> Result<FlowSolution, FlowError> {
    let mut per_cell: Vec<BTreeMap<Step, SubFlow>> = vec![BTreeMap::new(); refinement.len()];
    let mut cache: BTreeMap<Vec<u64>, SubFlow> = BTreeMap::new();
    let mut variable_count = 0usize;
    for j in 0..refinement.len() {
        let steps: Vec<Step> = refinement
            .neighborhood(j)
            .iter()
            .filter(|u| u.iter().any(|&x| x != 0))
            .cloned()
            .collect();
        for u in steps {
            let problem = build_flow_problem(refinement, walk, j, &u)?;
            variable_count += problem.arcs.len();
            let key = signature(&problem, config);
            let solved = if let Some(hit) = cache.get(&key) {
                SubFlow {
                    problem,
                    phi: hit.phi.clone(),
                    total: hit.total,
                    balance_residual: hit.balance_residual,
                }
            } else {
                let solved = solve_flow_problem(problem, config)?;
                cache.insert(key, solved.clone());
                solved
            };
            per_cell[j].insert(u, solved);
        }
    }
    Ok(FlowSolution {
        per_cell,
        variable_count,
    })
}

/// Structural signature of a subproblem, independent of its cell index.
fn signature(problem: &FlowProblem, config: &FlowConfig) -> Vec<u64> {
    let mut key = Vec::new();
    for n in &problem.nodes {
        for &x in n {
            key.push(x as u64);
        }
        key.push(u64::MAX);
    }
    for d in &problem.demand {
        key.push(d.to_bits());
    }
    for arc in &problem.arcs {
        key.push(arc.from as u64);
        key.push(arc.to as u64);
        for &x in &arc.step {
            key.push(x as u64);
        }
        let w = config
            .arc_weight
            .map_or(1.0, |f| f(&problem.nodes[arc.from], &arc.step));
        key.push(w.to_bits());
    }
    key
}

/// `φ(n, u, m, v)`: the stored coefficient when both `m` and `m + v` lie in
/// the local window around `n`, zero otherwise (including `v = 0`).
pub fn phi_lookup(
    solution: &FlowSolution,
    refinement: &Refinement,
    n: &[i64],
    u: &[i64],
    m: &[i64],
    v: &[i64],
) -> f64 {
    let j = refinement.locate_cell(n);
    let Some(sub) = solution.get(j, u) else {
        return 0.0;
    };
    let d: Step = m.iter().zip(n.iter()).map(|(&a, &b)| a - b).collect();
    let Ok(from) = sub.problem.nodes.binary_search(&d) else {
        return 0.0;
    };
    let target: Step = d.iter().zip(v.iter()).map(|(&a, &b)| a + b).collect();
    if sub.problem.nodes.binary_search(&target).is_err() {
        return 0.0;
    }
    sub.problem
        .arcs
        .iter()
        .zip(sub.phi.iter())
        .find(|(arc, _)| arc.from == from && arc.step == v)
        .map_or(0.0, |(_, &phi)| phi)
}
