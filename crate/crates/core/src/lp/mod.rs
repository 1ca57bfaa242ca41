//! Dense linear programming with exact dual extraction.
//!
//! The solver is a two-phase primal simplex over a dense tableau. It is built
//! for desk-scale problems where determinism and auditable duals matter more
//! than raw speed: repeated solves of the same problem produce bit-identical
//! results, and every accepted solution is certified against feasibility,
//! duality-gap and complementary-slackness tolerances before it is returned.
//!
//! Beyond plain solves, the module computes the lexicographically minimal
//! dual vector for a caller-chosen ordering of constraints. Ties among dual
//! optima are resolved by a sequence of auxiliary LPs over the dual
//! polyhedron with the dual objective pinned to the optimal value.

mod simplex;

use std::fmt;

use crate::tol;

/// Where a labeled row lives in the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Equality,
    Inequality,
}

/// A single linear constraint with a caller-supplied label.
///
/// Labels are opaque tags; they exist so callers can retrieve the dual of a
/// specific row after the solve. They must be unique across the problem.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coefficients: Vec<f64>,
    pub rhs: f64,
    pub label: String,
}

/// A linear program in the form
///
/// ```text
///   minimize    c . x
///   subject to  a_i . x  =  b_i   (equalities,   dual y_i free)
///               g_k . x  <= h_k   (inequalities, dual mu_k >= 0)
///               lower_j <= x_j <= upper_j
/// ```
///
/// Infinite bounds are expressed with `f64::INFINITY` / `NEG_INFINITY`.
/// Dual sign convention: `y_i` is the sensitivity of the optimal objective
/// to `b_i`, and `mu_k >= 0` is minus the sensitivity to `h_k`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<LinearConstraint>,
    pub inequalities: Vec<LinearConstraint>,
}

impl LpProblem {
    /// New problem with zero objective and default bounds `[0, +inf)`.
    pub fn new(num_vars: usize) -> Self {
        LpProblem {
            num_vars,
            objective: vec![0.0; num_vars],
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn free_var(&mut self, var: usize) {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY);
    }

    pub fn add_equality(&mut self, coefficients: Vec<f64>, rhs: f64, label: impl Into<String>) {
        self.equalities.push(LinearConstraint {
            coefficients,
            rhs,
            label: label.into(),
        });
    }

    pub fn add_inequality(&mut self, coefficients: Vec<f64>, rhs: f64, label: impl Into<String>) {
        self.inequalities.push(LinearConstraint {
            coefficients,
            rhs,
            label: label.into(),
        });
    }

    /// Dense coefficient row from sparse (index, value) pairs.
    pub fn row_from_sparse(&self, entries: &[(usize, f64)]) -> Vec<f64> {
        let mut row = vec![0.0; self.num_vars];
        for &(j, v) in entries {
            row[j] += v;
        }
        row
    }

    /// Locate a labeled row.
    pub fn find_label(&self, label: &str) -> Option<(RowKind, usize)> {
        if let Some(i) = self.equalities.iter().position(|c| c.label == label) {
            return Some((RowKind::Equality, i));
        }
        self.inequalities
            .iter()
            .position(|c| c.label == label)
            .map(|i| (RowKind::Inequality, i))
    }

    pub fn validate(&self) -> Result<(), LpError> {
        if self.objective.len() != self.num_vars
            || self.lower.len() != self.num_vars
            || self.upper.len() != self.num_vars
        {
            return Err(LpError::Malformed(
                "objective/bound vectors do not match num_vars".into(),
            ));
        }
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(LpError::Malformed(format!(
                    "objective coefficient {j} is not finite"
                )));
            }
        }
        for j in 0..self.num_vars {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {j} has invalid bounds")));
            }
            if lo > hi {
                return Err(LpError::Malformed(format!(
                    "variable {j} has lower bound {lo} above upper bound {hi}"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for row in self.equalities.iter().chain(self.inequalities.iter()) {
            if row.coefficients.len() != self.num_vars {
                return Err(LpError::Malformed(format!(
                    "row '{}' has {} coefficients, expected {}",
                    row.label,
                    row.coefficients.len(),
                    self.num_vars
                )));
            }
            if row.coefficients.iter().any(|a| !a.is_finite()) || !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!(
                    "row '{}' contains a non-finite value",
                    row.label
                )));
            }
            if !seen.insert(row.label.as_str()) {
                return Err(LpError::Malformed(format!(
                    "duplicate constraint label '{}'",
                    row.label
                )));
            }
        }
        Ok(())
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
            LpStatus::Optimal => write!(f, "optimal"),
            LpStatus::Infeasible => write!(f, "infeasible"),
            LpStatus::Unbounded => write!(f, "unbounded"),
        }
    }
}

/// Solve outcome. Primal and dual vectors are meaningful only when
/// `status == Optimal`; for the other statuses they are empty.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual per equality row, in row order.
    pub duals_eq: Vec<f64>,
    /// One dual per inequality row, in row order; nonnegative.
    pub duals_ineq: Vec<f64>,
    /// Stationarity residual per variable: `c - A'y + G'mu`. Equals the
    /// bound multiplier `lambda_lower - lambda_upper` at optimality.
    pub reduced_costs: Vec<f64>,
    /// True when the optimal basis proves the primal optimum is unique.
    pub(crate) primal_unique: bool,
    /// True when the optimal basis is nondegenerate, which proves the dual
    /// optimum is unique.
    pub(crate) dual_unique: bool,
}

impl LpSolution {
    /// Dual value of a labeled row.
    pub fn dual(&self, problem: &LpProblem, label: &str) -> Option<f64> {
        match problem.find_label(label)? {
            (RowKind::Equality, i) => self.duals_eq.get(i).copied(),
            (RowKind::Inequality, i) => self.duals_ineq.get(i).copied(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Pivot cap across both simplex phases.
    pub max_iterations: usize,
    /// Entries at or below this magnitude are treated as zero when pivoting.
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub cs_tol: f64,
    /// Tolerance for dual floor checks during lexicographic refinement.
    pub pin_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 1_000_000,
            pivot_tol: tol::PIVOT,
            feas_tol: tol::FEAS,
            gap_tol: tol::GAP,
            cs_tol: tol::CS,
            pin_tol: tol::PIN,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("iteration cap reached before optimality")]
    IterationLimit,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("operation requires an optimal solve, got status {0}")]
    NotOptimal(LpStatus),
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

/// Residuals of a solution against its problem, in the original space.
#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    /// Max violation of equalities, inequalities and variable bounds.
    pub primal_residual: f64,
    /// Max violation of dual feasibility (mu sign, bound multiplier signs).
    pub dual_residual: f64,
    /// |primal objective - dual objective|.
    pub duality_gap: f64,
    /// Max complementary-slackness product.
    pub cs_residual: f64,
}

/// Compute the optimality certificate of `sol` for `problem`.
pub fn solution_certificate(problem: &LpProblem, sol: &LpSolution) -> Certificate {
    let x = &sol.x;
    let mut primal: f64 = 0.0;
    let mut cs: f64 = 0.0;
    for row in &problem.equalities {
        let v: f64 = row
            .coefficients
            .iter()
            .zip(x.iter())
            .map(|(a, xi)| a * xi)
            .sum();
        primal = primal.max((v - row.rhs).abs());
    }
    for (k, row) in problem.inequalities.iter().enumerate() {
        let v: f64 = row
            .coefficients
            .iter()
            .zip(x.iter())
            .map(|(a, xi)| a * xi)
            .sum();
        primal = primal.max(v - row.rhs);
        cs = cs.max(sol.duals_ineq[k] * (row.rhs - v).abs());
    }
    let mut dual: f64 = 0.0;
    for &m in &sol.duals_ineq {
        dual = dual.max(-m);
    }
    // Stationarity residual rho_j plays the role of the bound multiplier
    // pair: rho = lambda_lower - lambda_upper.
    let mut dual_obj: f64 = 0.0;
    for (i, row) in problem.equalities.iter().enumerate() {
        dual_obj += sol.duals_eq[i] * row.rhs;
    }
    for (k, row) in problem.inequalities.iter().enumerate() {
        dual_obj -= sol.duals_ineq[k] * row.rhs;
    }
    for j in 0..problem.num_vars {
        let rho = sol.reduced_costs[j];
        let (lo, hi) = (problem.lower[j], problem.upper[j]);
        primal = primal.max(lo - x[j]).max(x[j] - hi);
        if lo.is_finite() {
            let lam = rho.max(0.0);
            dual_obj += lam * lo;
            cs = cs.max(lam * (x[j] - lo).abs());
        } else {
            dual = dual.max(rho);
        }
        if hi.is_finite() {
            let lam = (-rho).max(0.0);
            dual_obj -= lam * hi;
            cs = cs.max(lam * (hi - x[j]).abs());
        } else {
            dual = dual.max(-rho);
        }
    }
    let primal_obj: f64 = problem
        .objective
        .iter()
        .zip(x.iter())
        .map(|(c, xi)| c * xi)
        .sum();
    Certificate {
        primal_residual: primal,
        dual_residual: dual,
        duality_gap: (primal_obj - dual_obj).abs(),
        cs_residual: cs,
    }
}

/// Solve `problem` to proven optimality, infeasibility or unboundedness.
///
/// An `Optimal` result has passed the feasibility, duality-gap and
/// complementary-slackness certificate at the configured tolerances; a
/// solution that cannot be certified is reported as an error rather than
/// returned silently.
pub fn solve_lp(problem: &LpProblem, options: &SolverOptions) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let sol = simplex::solve(problem, options)?;
    if sol.status == LpStatus::Optimal {
        let cert = solution_certificate(problem, &sol);
        if cert.primal_residual > options.feas_tol
            || cert.dual_residual > options.feas_tol
            || cert.duality_gap > options.gap_tol * (1.0 + sol.objective.abs())
            || cert.cs_residual > options.cs_tol * (1.0 + sol.objective.abs())
        {
            return Err(LpError::Numerical(format!(
                "certificate rejected: primal {:.3e}, dual {:.3e}, gap {:.3e}, cs {:.3e}",
                cert.primal_residual, cert.dual_residual, cert.duality_gap, cert.cs_residual
            )));
        }
    }
    Ok(sol)
}

/// Full dual vector consistent with the lexicographic minimum over the
/// requested coordinates.
#[derive(Debug, Clone)]
pub struct LexDuals {
    /// The base optimal solve of the problem.
    pub base: LpSolution,
    /// Dual per equality row, consistent with the lexicographic choice.
    pub duals_eq: Vec<f64>,
    /// Dual per inequality row, consistent with the lexicographic choice.
    pub duals_ineq: Vec<f64>,
    /// The minimized values, one per requested label, in request order.
    pub minima: Vec<f64>,
}

/// Lexicographically minimal dual values for `labels`, each coordinate
/// bounded below by `floor`.
///
/// The problem is solved once; among all dual-optimal vectors the first
/// labeled coordinate is minimized, pinned, then the second, and so on. The
/// result is deterministic even when the dual optimum is not unique.
pub fn lex_min_duals(
    problem: &LpProblem,
    labels: &[&str],
    floor: f64,
    options: &SolverOptions,
) -> Result<Vec<f64>, LpError> {
    lex_min_dual_solution(problem, labels, floor, options).map(|d| d.minima)
}

/// As [`lex_min_duals`], but returns the complete dual vector from the final
/// refinement stage so that callers can read off the duals of every other
/// row consistently with the lexicographic choice.
pub fn lex_min_dual_solution(
    problem: &LpProblem,
    labels: &[&str],
    floor: f64,
    options: &SolverOptions,
) -> Result<LexDuals, LpError> {
    problem.validate()?;
    let base = simplex::solve(problem, options)?;
    if base.status != LpStatus::Optimal {
        return Err(LpError::NotOptimal(base.status));
    }
    let mut targets = Vec::with_capacity(labels.len());
    for label in labels {
        let loc = problem
            .find_label(label)
            .ok_or_else(|| LpError::Malformed(format!("unknown constraint label '{label}'")))?;
        targets.push(loc);
    }

    if base.dual_unique {
        // The dual optimum is a single point; the lexicographic minimum is
        // that point, provided it clears the floor.
        let read = |&(kind, i): &(RowKind, usize)| match kind {
            RowKind::Equality => base.duals_eq[i],
            RowKind::Inequality => base.duals_ineq[i],
        };
        if targets.iter().all(|t| read(t) >= floor - options.pin_tol) {
            let minima = targets.iter().map(read).collect();
            let duals_eq = base.duals_eq.clone();
            let duals_ineq = base.duals_ineq.clone();
            return Ok(LexDuals {
                base,
                duals_eq,
                duals_ineq,
                minima,
            });
        }
        return Err(LpError::Internal(
            "unique dual vector lies below the requested floor".into(),
        ));
    }

    refine_duals(problem, &base, &targets, floor, options)
}

/// Sequential minimization over the dual-optimal polyhedron.
fn refine_duals(
    problem: &LpProblem,
    base: &LpSolution,
    targets: &[(RowKind, usize)],
    floor: f64,
    options: &SolverOptions,
) -> Result<LexDuals, LpError> {
    let ne = problem.equalities.len();
    let ni = problem.inequalities.len();
    let n = problem.num_vars;

    // Aux variables: y per equality (free unless targeted), mu per
    // inequality, one multiplier per finite bound.
    let y0 = 0;
    let mu0 = ne;
    let mut ncols = ne + ni;
    let mut lam_lo = vec![None; n];
    let mut lam_hi = vec![None; n];
    for j in 0..n {
        if problem.lower[j].is_finite() {
            lam_lo[j] = Some(ncols);
            ncols += 1;
        }
        if problem.upper[j].is_finite() {
            lam_hi[j] = Some(ncols);
            ncols += 1;
        }
    }

    let mut aux = LpProblem::new(ncols);
    for i in 0..ne {
        aux.free_var(y0 + i);
    }
    for t in targets {
        match *t {
            (RowKind::Equality, i) => aux.set_bounds(y0 + i, floor, f64::INFINITY),
            (RowKind::Inequality, k) => aux.set_bounds(mu0 + k, floor.max(0.0), f64::INFINITY),
        }
    }

    // Stationarity: A'y - G'mu + lam_lo - lam_hi = c, one row per variable.
    for j in 0..n {
        let mut row = vec![0.0; ncols];
        for (i, eq) in problem.equalities.iter().enumerate() {
            row[y0 + i] = eq.coefficients[j];
        }
        for (k, iq) in problem.inequalities.iter().enumerate() {
            row[mu0 + k] = -iq.coefficients[j];
        }
        if let Some(c) = lam_lo[j] {
            row[c] = 1.0;
        }
        if let Some(c) = lam_hi[j] {
            row[c] = -1.0;
        }
        aux.add_equality(row, problem.objective[j], format!("stat:{j}"));
    }

    // Dual objective pinned to the optimal value. An equality keeps later
    // stages from trading earlier coordinates against the pin slack.
    let mut obj_row = vec![0.0; ncols];
    for (i, eq) in problem.equalities.iter().enumerate() {
        obj_row[y0 + i] = eq.rhs;
    }
    for (k, iq) in problem.inequalities.iter().enumerate() {
        obj_row[mu0 + k] = -iq.rhs;
    }
    for j in 0..n {
        if let Some(c) = lam_lo[j] {
            obj_row[c] = problem.lower[j];
        }
        if let Some(c) = lam_hi[j] {
            obj_row[c] = -problem.upper[j];
        }
    }
    aux.add_equality(obj_row, base.objective, "pin:obj");

    let mut minima = Vec::with_capacity(targets.len());
    let mut last: Option<LpSolution> = None;
    for (stage, t) in targets.iter().enumerate() {
        let col = match *t {
            (RowKind::Equality, i) => y0 + i,
            (RowKind::Inequality, k) => mu0 + k,
        };
        aux.objective = vec![0.0; ncols];
        aux.objective[col] = 1.0;
        let sol = solve_lp(&aux, options).map_err(|e| {
            LpError::Internal(format!("lexicographic stage {stage} failed: {e}"))
        })?;
        if sol.status != LpStatus::Optimal {
            return Err(LpError::Internal(format!(
                "lexicographic stage {stage} is {}; the dual polyhedron should be nonempty and floored",
                sol.status
            )));
        }
        let v = sol.x[col];
        minima.push(v);
        let mut pin = vec![0.0; ncols];
        pin[col] = 1.0;
        aux.add_equality(pin, v, format!("pin:{stage}"));
        last = Some(sol);
    }

    let (duals_eq, duals_ineq) = match &last {
        Some(sol) => (
            sol.x[y0..y0 + ne].to_vec(),
            sol.x[mu0..mu0 + ni].to_vec(),
        ),
        None => (base.duals_eq.clone(), base.duals_ineq.clone()),
    };
    Ok(LexDuals {
        base: base.clone(),
        duals_eq,
        duals_ineq,
        minima,
    })
}
