//! Linear program container, affine expressions over decision variables, a
//! deterministic built-in two-phase simplex, and a pluggable backend contract.

mod simplex;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use simplex::{solve_lp, solve_lp_dual_form};

/// Identifier of a declared LP variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// Affine expression `constant + Σ coef · var`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    terms: BTreeMap<usize, f64>,
    constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(id: VarId) -> Self {
        let mut e = LinExpr::new();
        e.add_term(id, 1.0);
        e
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.terms.iter().map(|(&i, &c)| (VarId(i), c))
    }

    pub fn add_const(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, id: VarId, coef: f64) -> &mut Self {
        if coef != 0.0 {
            let slot = self.terms.entry(id.0).or_insert(0.0);
            *slot += coef;
            if *slot == 0.0 {
                self.terms.remove(&id.0);
            }
        }
        self
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, other: &LinExpr, factor: f64) -> &mut Self {
        if factor == 0.0 {
            return self;
        }
        self.constant += factor * other.constant;
        for (&i, &c) in &other.terms {
            self.add_term(VarId(i), factor * c);
        }
        self
    }

    pub fn scaled(&self, factor: f64) -> LinExpr {
        let mut out = LinExpr::new();
        out.add_scaled(self, factor);
        out
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|(&i, &c)| c * values[i])
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Le => write!(f, "<="),
            Relation::Eq => write!(f, "="),
            Relation::Ge => write!(f, ">="),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A declared variable. `lower = None` means free; a finite lower bound must
/// be non-negative. An optional finite upper bound may be set either way.
#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Linear constraint `expr (<=|=|>=) rhs`. Constant parts of `expr` are folded
/// into the right-hand side at standardization time.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub expr: LinExpr,
    pub relation: Relation,
    pub rhs: f64,
}

/// Language-agnostic LP container.
#[derive(Debug, Clone, Default)]
pub struct LpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: LinExpr,
    pub sense: Sense,
}

impl Default for Sense {
    fn default() -> Self {
        Sense::Minimize
    }
}

impl LpModel {
    pub fn new(sense: Sense) -> Self {
        LpModel {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: LinExpr::new(),
            sense,
        }
    }

    pub fn add_var(&mut self, name: String, lower: Option<f64>, upper: Option<f64>) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable { name, lower, upper });
        id
    }

    /// Non-negative variable, the common case.
    pub fn add_nonneg(&mut self, name: String) -> VarId {
        self.add_var(name, Some(0.0), None)
    }

    /// Free variable.
    pub fn add_free(&mut self, name: String) -> VarId {
        self.add_var(name, None, None)
    }

    pub fn add_constraint(&mut self, name: String, expr: LinExpr, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            name,
            expr,
            relation,
            rhs,
        });
    }

    pub fn set_objective(&mut self, expr: LinExpr, sense: Sense) {
        self.objective = expr;
        self.sense = sense;
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Industry-standard LP interchange text for external debugging.
    pub fn to_lp_format(&self) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}",
            match self.sense {
                Sense::Minimize => "Minimize",
                Sense::Maximize => "Maximize",
            }
        );
        let _ = write!(out, " obj:");
        write_expr(&mut out, &self.objective, self);
        let _ = writeln!(out);
        let _ = writeln!(out, "Subject To");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " {}:", sanitize(&c.name, i));
            write_expr(&mut out, &c.expr, self);
            let _ = writeln!(out, " {} {}", c.relation, c.rhs - c.expr.constant_part());
        }
        let _ = writeln!(out, "Bounds");
        for (i, v) in self.variables.iter().enumerate() {
            let name = sanitize(&v.name, i);
            match (v.lower, v.upper) {
                (None, None) => {
                    let _ = writeln!(out, " {name} free");
                }
                (None, Some(u)) => {
                    let _ = writeln!(out, " -inf <= {name} <= {u}");
                }
                (Some(l), None) => {
                    let _ = writeln!(out, " {l} <= {name}");
                }
                (Some(l), Some(u)) => {
                    let _ = writeln!(out, " {l} <= {name} <= {u}");
                }
            }
        }
        let _ = writeln!(out, "End");
        out
    }
}

fn write_expr(out: &mut String, expr: &LinExpr, model: &LpModel) {
    use core::fmt::Write;
    let mut first = true;
    for (id, coef) in expr.terms() {
        let name = sanitize(&model.variables[id.0].name, id.0);
        if first {
            let _ = write!(out, " {coef} {name}");
            first = false;
        } else if coef < 0.0 {
            let _ = write!(out, " - {} {name}", -coef);
        } else {
            let _ = write!(out, " + {coef} {name}");
        }
    }
    if first {
        let _ = write!(out, " 0");
    }
}

fn sanitize(name: &str, index: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        alloc::format!("n{index}_{cleaned}")
    } else {
        cleaned
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpStatus::Optimal => write!(f, "OPTIMAL"),
            LpStatus::Infeasible => write!(f, "INFEASIBLE"),
            LpStatus::Unbounded => write!(f, "UNBOUNDED"),
        }
    }
}

/// Solver output. `values` and `duals` are empty unless `status` is Optimal.
///
/// Dual sign convention for a minimization: `duals[r] <= 0` for `<=` rows,
/// `>= 0` for `>=` rows, free for equalities, and the dual objective
/// `Σ duals[r]·rhs[r] + Σ reduced-cost·bound` matches the primal objective.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub max_residual: f64,
    pub duals: Vec<f64>,
    pub iterations: usize,
}

/// Solver tolerances; defaults match the artifact-wide contract.
#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    /// Residual above `1e-6` after post-solve refinement.
    NumericalFailure { residual: f64 },
    /// Pivot limit exhausted; indicates a solver defect, reported rather than
    /// looping forever.
    IterationLimit { iterations: usize },
    /// Expression references a variable that was never declared.
    UndeclaredVariable { index: usize },
    /// Declared bounds are inconsistent (lower negative or above upper).
    BadBounds { variable: usize },
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::NumericalFailure { residual } => {
                write!(f, "numerical failure: residual {residual:e} after refinement")
            }
            LpError::IterationLimit { iterations } => {
                write!(f, "pivot limit reached after {iterations} iterations")
            }
            LpError::UndeclaredVariable { index } => {
                write!(f, "expression references undeclared variable {index}")
            }
            LpError::BadBounds { variable } => {
                write!(f, "variable {variable} has inconsistent bounds")
            }
        }
    }
}

impl core::error::Error for LpError {}

/// Contract for external solver adapters: same status taxonomy and
/// post-conditions as [`solve_lp`], objectives within `1e-6` of the built-in
/// solver on the shipped test suite.
pub trait LpBackend {
    fn name(&self) -> &str;
    fn solve(&self, model: &LpModel, config: &SolveConfig) -> Result<LpSolution, BackendError>;
}

#[derive(Debug, Clone)]
pub enum BackendError {
    /// The adapter's solver is not present; callers fall back to the
    /// built-in simplex.
    AdapterUnavailable { reason: String },
    Solve(LpError),
    Protocol { message: String },
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendError::AdapterUnavailable { reason } => {
                write!(f, "adapter unavailable: {reason}")
            }
            BackendError::Solve(e) => write!(f, "{e}"),
            BackendError::Protocol { message } => write!(f, "adapter protocol error: {message}"),
        }
    }
}

impl core::error::Error for BackendError {}

/// The built-in solver exposed through the backend contract.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinBackend;

impl LpBackend for BuiltinBackend {
    fn name(&self) -> &str {
        "builtin"
    }

    fn solve(&self, model: &LpModel, config: &SolveConfig) -> Result<LpSolution, BackendError> {
        solve_lp(model, config).map_err(BackendError::Solve)
    }
}
