//! Exact desk-scale ground truth: truncated-chain stationary distributions
//! (allowing transient states around a single absorbing communicating class),
//! exact performance values, the cumulative-reward and bias recursions, and
//! runtime verification of the flow identity and the reward inequality that
//! ultimately justifies every bound.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::flow::{phi_lookup, FlowSolution};
use crate::lattice::{Partition, Refinement};
use crate::linfunc::CLinearFn;
use crate::measure::GeometricStationaryMeasure;
use crate::walk::{PerturbationDelta, RandomWalkSpec};

/// Stationary residual target for the truncated-chain solve.
pub const STATIONARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    /// The positive-transition digraph has more than one closed class.
    MultipleAbsorbingClasses { count: usize },
    /// Power iteration failed to reach the residual target.
    NonConvergence { residual: f64 },
    DimensionMismatch,
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::MultipleAbsorbingClasses { count } => {
                write!(f, "chain has {count} absorbing communicating classes, expected one")
            }
            OracleError::NonConvergence { residual } => {
                write!(f, "stationary solve stalled at residual {residual:e}")
            }
            OracleError::DimensionMismatch => write!(f, "cap vector dimension mismatch"),
        }
    }
}

impl core::error::Error for OracleError {}

/// Finite restriction of a walk to the box `[0, cap_1] x ... x [0, cap_M]`,
/// with outgoing mass of steps leaving the box redirected to the self-loop.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    caps: Vec<i64>,
    strides: Vec<usize>,
    states: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl TruncatedChain {
    pub fn new(walk: &RandomWalkSpec, caps: &[i64]) -> Result<Self, OracleError> {
        let partition = walk.partition();
        if caps.len() != partition.dim() {
            return Err(OracleError::DimensionMismatch);
        }
        let dim = caps.len();
        let mut strides = vec![0usize; dim];
        let mut states = 1usize;
        for d in (0..dim).rev() {
            strides[d] = states;
            states *= (caps[d] + 1) as usize;
        }
        let mut rows = Vec::with_capacity(states);
        let mut n = vec![0i64; dim];
        for idx in 0..states {
            let mut rem = idx;
            for d in 0..dim {
                n[d] = (rem / strides[d]) as i64;
                rem %= strides[d];
            }
            let k = partition.locate(&n);
            let mut row: BTreeMap<u32, f64> = BTreeMap::new();
            for (u, &p) in walk.law().row(k) {
                if p == 0.0 {
                    continue;
                }
                let mut target = idx as i64;
                let mut inside = true;
                for d in 0..dim {
                    let x = n[d] + u[d];
                    if x < 0 || x > caps[d] {
                        inside = false;
                        break;
                    }
                    target += u[d] * strides[d] as i64;
                }
                let slot = if inside { target as u32 } else { idx as u32 };
                *row.entry(slot).or_insert(0.0) += p;
            }
            rows.push(row.into_iter().collect());
        }
        Ok(TruncatedChain {
            caps: caps.to_vec(),
            strides,
            states,
            rows,
        })
    }

    /// Builds a chain directly from sparse rows; rows must be stochastic.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let states = rows.len();
        TruncatedChain {
            caps: vec![states as i64 - 1],
            strides: vec![1],
            states,
            rows,
        }
    }

    pub fn caps(&self) -> &[i64] {
        &self.caps
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn index(&self, n: &[i64]) -> usize {
        n.iter()
            .zip(self.strides.iter())
            .map(|(&x, &s)| x as usize * s)
            .sum()
    }

    pub fn state(&self, idx: usize) -> Vec<i64> {
        let mut rem = idx;
        self.strides
            .iter()
            .map(|&s| {
                let x = (rem / s) as i64;
                rem %= s;
                x
            })
            .collect()
    }

    pub fn row(&self, idx: usize) -> &[(u32, f64)] {
        &self.rows[idx]
    }

    /// True when every coordinate is at least `margin` away from its cap.
    pub fn is_interior(&self, n: &[i64], margin: i64) -> bool {
        n.iter()
            .zip(self.caps.iter())
            .all(|(&x, &c)| x >= 0 && x <= c - margin)
    }

    /// `y = x P` (distribution step).
    fn distribute(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (s, row) in self.rows.iter().enumerate() {
            let mass = x[s];
            if mass == 0.0 {
                continue;
            }
            for &(t, p) in row {
                y[t as usize] += mass * p;
            }
        }
    }

    /// `y = P x` (value step).
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (s, row) in self.rows.iter().enumerate() {
            y[s] = row.iter().map(|&(t, p)| p * x[t as usize]).sum();
        }
    }
}

/// Strongly connected components of the positive-transition digraph,
/// iterative Tarjan. Returns a component id per state and the count.
fn strongly_connected_components(chain: &TruncatedChain) -> (Vec<usize>, usize) {
    let n = chain.states;
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0usize;
    let mut comp_count = 0usize;

    // Explicit DFS stack of (node, edge cursor).
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut cursor)) = call.last_mut() {
            let row = &chain.rows[v];
            if *cursor < row.len() {
                let (w, p) = row[*cursor];
                *cursor += 1;
                let w = w as usize;
                if p <= 0.0 || w == v {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp[w] = comp_count;
                        if w == v {
                            break;
                        }
                    }
                    comp_count += 1;
                }
            }
        }
    }
    (comp, comp_count)
}

/// The unique absorbing communicating class, as a sorted state list.
pub fn absorbing_class(chain: &TruncatedChain) -> Result<Vec<usize>, OracleError> {
    let (comp, count) = strongly_connected_components(chain);
    let mut closed = vec![true; count];
    for (s, row) in chain.rows.iter().enumerate() {
        for &(t, p) in row {
            if p > 0.0 && comp[t as usize] != comp[s] {
                closed[comp[s]] = false;
            }
        }
    }
    let closed_ids: Vec<usize> = (0..count).filter(|&c| closed[c]).collect();
    if closed_ids.len() != 1 {
        return Err(OracleError::MultipleAbsorbingClasses {
            count: closed_ids.len(),
        });
    }
    let id = closed_ids[0];
    Ok((0..chain.states).filter(|&s| comp[s] == id).collect())
}

/// Stationary distribution of the truncated chain: supported on the
/// absorbing class, zero on transient states, balance residual within
/// [`STATIONARY_TOL`].
pub fn stationary_exact(chain: &TruncatedChain) -> Result<Vec<f64>, OracleError> {
    let class = absorbing_class(chain)?;
    let mut pi = vec![0.0f64; chain.states];
    if class.len() == 1 {
        pi[class[0]] = 1.0;
        return Ok(pi);
    }

    // Restricted chain over the class.
    let pos: BTreeMap<usize, usize> = class.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let m = class.len();
    let rows: Vec<Vec<(u32, f64)>> = class
        .iter()
        .map(|&s| {
            chain.rows[s]
                .iter()
                .map(|&(t, p)| (pos[&(t as usize)] as u32, p))
                .collect()
        })
        .collect();
    let sub = TruncatedChain::from_rows(rows);

    // Power iteration on the spectral shift (P - gI)/(1 - g); negative g
    // acts as damping and guards against periodic classes.
    let min_diag = (0..m)
        .map(|s| {
            sub.rows[s]
                .iter()
                .find(|&&(t, _)| t as usize == s)
                .map_or(0.0, |&(_, p)| p)
        })
        .fold(f64::INFINITY, f64::min);
    let gamma = if min_diag > 1e-3 { min_diag * 0.999 } else { -1.0 };

    let mut v = vec![1.0 / m as f64; m];
    let mut w = vec![0.0f64; m];
    let mut residual = f64::INFINITY;
    let max_iters = 400_000usize;
    let mut iter = 0usize;
    while iter < max_iters {
        for _ in 0..32 {
            sub.distribute(&v, &mut w);
            let scale = 1.0 / (1.0 - gamma);
            let mut total = 0.0;
            for (vi, wi) in v.iter_mut().zip(w.iter()) {
                *vi = (wi - gamma * *vi) * scale;
                total += *vi;
            }
            let norm = 1.0 / total;
            for vi in v.iter_mut() {
                *vi *= norm;
            }
            iter += 1;
        }
        sub.distribute(&v, &mut w);
        residual = v
            .iter()
            .zip(w.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= STATIONARY_TOL {
            break;
        }
    }
    if residual > STATIONARY_TOL {
        return Err(OracleError::NonConvergence { residual });
    }
    for (i, &s) in class.iter().enumerate() {
        pi[s] = v[i];
    }
    Ok(pi)
}

/// `Σ_n π(n) F(n)` over the truncated state space.
pub fn exact_performance(
    chain: &TruncatedChain,
    pi: &[f64],
    partition: &Partition,
    f: &CLinearFn,
) -> f64 {
    pi.iter()
        .enumerate()
        .filter(|(_, &p)| p != 0.0)
        .map(|(idx, &p)| p * f.evaluate(partition, &chain.state(idx)))
        .sum()
}

/// Expected cumulative reward vectors `F^t` of a chain, advanced one horizon
/// at a time: `F^0 = 0`, `F^{t+1} = F + P F^t`.
#[derive(Debug, Clone)]
pub struct RewardTrace {
    reward: Vec<f64>,
    pub t: usize,
    pub values: Vec<f64>,
    scratch: Vec<f64>,
}

impl RewardTrace {
    pub fn new(chain: &TruncatedChain, partition: &Partition, f: &CLinearFn) -> Self {
        let reward: Vec<f64> = (0..chain.state_count())
            .map(|idx| f.evaluate(partition, &chain.state(idx)))
            .collect();
        let states = reward.len();
        RewardTrace {
            reward,
            t: 0,
            values: vec![0.0; states],
            scratch: vec![0.0; states],
        }
    }

    pub fn advance(&mut self, chain: &TruncatedChain) {
        chain.apply(&self.values, &mut self.scratch);
        for ((v, &s), &r) in self
            .values
            .iter_mut()
            .zip(self.scratch.iter())
            .zip(self.reward.iter())
        {
            *v = r + s;
        }
        self.t += 1;
    }

    /// `D^t(n, m) = F^t(m) - F^t(n)`.
    pub fn bias(&self, n_idx: usize, m_idx: usize) -> f64 {
        self.values[m_idx] - self.values[n_idx]
    }

    /// One-step lookahead `F^{t+1}(n)` without advancing the trace.
    pub fn lookahead(&self, chain: &TruncatedChain, idx: usize) -> f64 {
        self.reward[idx]
            + chain.rows[idx]
                .iter()
                .map(|&(m, p)| p * self.values[m as usize])
                .sum::<f64>()
    }
}

/// Runs the recursion for `t` horizons.
pub fn iterate_rewards(
    chain: &TruncatedChain,
    partition: &Partition,
    f: &CLinearFn,
    t: usize,
) -> RewardTrace {
    let mut trace = RewardTrace::new(chain, partition, f);
    for _ in 0..t {
        trace.advance(chain);
    }
    trace
}

/// Residual of the bias recursion at `(n, u)` and the trace's current
/// horizon: compares `D^{t+1}(n, n+u)` against
/// `F(n+u) - F(n) + Σ φ(n,u,m,v) D^t(m, m+v)`.
#[allow(clippy::too_many_arguments)]
pub fn check_flow_identity(
    flows: &FlowSolution,
    refinement: &Refinement,
    chain: &TruncatedChain,
    partition: &Partition,
    f: &CLinearFn,
    trace: &RewardTrace,
    n: &[i64],
    u: &[i64],
) -> f64 {
    let n_idx = chain.index(n);
    let shifted: Vec<i64> = n.iter().zip(u.iter()).map(|(&a, &b)| a + b).collect();
    let u_idx = chain.index(&shifted);
    let lhs = trace.lookahead(chain, u_idx) - trace.lookahead(chain, n_idx);

    let mut rhs = f.evaluate(partition, &shifted) - f.evaluate(partition, n);
    let j = refinement.locate_cell(n);
    if let Some(sub) = flows.get(j, u) {
        for (arc, &phi) in sub.problem.arcs.iter().zip(sub.phi.iter()) {
            if phi == 0.0 {
                continue;
            }
            let m: Vec<i64> = n
                .iter()
                .zip(sub.problem.nodes[arc.from].iter())
                .map(|(&a, &b)| a + b)
                .collect();
            let mv: Vec<i64> = m.iter().zip(arc.step.iter()).map(|(&a, &b)| a + b).collect();
            debug_assert_eq!(phi, phi_lookup(flows, refinement, n, u, &m, &arc.step));
            rhs += phi * trace.bias(chain.index(&m), chain.index(&mv));
        }
    }
    (lhs - rhs).abs()
}

/// Outcome of the reward-inequality check; both violations should be at
/// noise level for a valid certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInequalityReport {
    /// Max over horizons of `|pibar . (Fbar^t - F^t)| - t . pibar . G`.
    pub max_aggregate_violation: f64,
    /// Max over sampled states and horizons of
    /// `|Fbar(n) - F(n) + sum_u Delta D^t(n, n+u)| - G(n)`.
    pub max_pointwise_violation: f64,
}

/// Verifies the inequality chain behind the error bound on truncated chains:
/// aggregate over all horizons up to `t_max`, pointwise on `sample_states`.
#[allow(clippy::too_many_arguments)]
pub fn check_reward_inequality(
    original: &TruncatedChain,
    perturbed: &TruncatedChain,
    partition: &Partition,
    measure: &GeometricStationaryMeasure,
    delta: &PerturbationDelta,
    f: &CLinearFn,
    fbar: &CLinearFn,
    gain: &CLinearFn,
    sample_states: &[Vec<i64>],
    t_max: usize,
) -> RewardInequalityReport {
    let states = original.state_count();
    let pibar: Vec<f64> = (0..states)
        .map(|idx| measure.point_mass(partition, &original.state(idx)))
        .collect();
    let pibar_dot_g: f64 = (0..states)
        .map(|idx| pibar[idx] * gain.evaluate(partition, &original.state(idx)))
        .sum();

    let mut trace_f = RewardTrace::new(original, partition, f);
    let mut trace_fbar = RewardTrace::new(perturbed, partition, fbar);
    let mut max_aggregate: f64 = f64::NEG_INFINITY;
    let mut max_pointwise: f64 = f64::NEG_INFINITY;

    for t in 1..=t_max {
        // Pointwise condition at horizon t-1 (biases of the original chain).
        for n in sample_states {
            let k = partition.locate(n);
            let n_idx = original.index(n);
            let mut lhs = fbar.evaluate_on(k, n) - f.evaluate_on(k, n);
            for (u, &d) in delta.row(k) {
                if d == 0.0 || u.iter().all(|&x| x == 0) {
                    continue;
                }
                let m: Vec<i64> = n.iter().zip(u.iter()).map(|(&a, &b)| a + b).collect();
                lhs += d * trace_f.bias(n_idx, original.index(&m));
            }
            max_pointwise = max_pointwise.max(lhs.abs() - gain.evaluate_on(k, n));
        }

        trace_f.advance(original);
        trace_fbar.advance(perturbed);
        let gap: f64 = (0..states)
            .map(|idx| pibar[idx] * (trace_fbar.values[idx] - trace_f.values[idx]))
            .sum();
        max_aggregate = max_aggregate.max(gap.abs() - t as f64 * pibar_dot_g);
    }

    RewardInequalityReport {
        max_aggregate_violation: max_aggregate,
        max_pointwise_violation: max_pointwise,
    }
}

/// Caps making the geometric tail of the measure negligible: in each
/// dimension, the largest finite box bound plus two, or the point where the
/// largest ratio's tail drops below `tol`, whichever is larger.
pub fn suggest_caps(
    partition: &Partition,
    measure: &GeometricStationaryMeasure,
    tol: f64,
) -> Vec<i64> {
    (0..partition.dim())
        .map(|d| {
            let mut cap = 4i64;
            for b in partition.components() {
                if let Some(u) = b.upper()[d] {
                    cap = cap.max(u + 2);
                }
            }
            let mut rho_max: f64 = 0.0;
            for k in 0..partition.len() {
                if partition.component(k).upper()[d].is_none() {
                    rho_max = rho_max.max(measure.ratios(k)[d]);
                }
            }
            if rho_max > 0.0 {
                let target = tol * (1.0 - rho_max);
                let mut tail = 1.0f64;
                let mut reach = 0i64;
                while tail > target && reach < 4000 {
                    tail *= rho_max;
                    reach += 1;
                }
                cap = cap.max(reach);
            }
            cap
        })
        .collect()
}
