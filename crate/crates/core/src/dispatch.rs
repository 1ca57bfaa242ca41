//! Dispatch compilation, solving, pricing, and verification.
//!
//! A dispatch problem minimizes reported generation cost subject to nodal
//! power balance under the DC flow model and line capacity limits. The
//! objective comes either from true cost curves (economic dispatch) or from
//! submitted bids. Smooth quadratic costs are compiled to piecewise-linear
//! segments so the whole problem stays an LP.
//!
//! Both the optimal dispatch and its prices can be non-unique. The engine
//! resolves both deterministically: among optimal dispatches it
//! lexicographically maximizes generator totals in scenario order, and among
//! optimal prices it lexicographically minimizes the nodal prices in node
//! order, bounded below at zero. Repeated solves are bit-identical.

use serde::Serialize;

use crate::lp::{
    lex_min_dual_solution, solve_lp, LpError, LpProblem, LpSolution, LpStatus, SolverOptions,
};
use crate::model::{Bid, ModelError, Piece, Scenario};
use crate::tol;

/// Objective source for a dispatch solve.
#[derive(Debug, Clone, Copy)]
pub enum CostBasis<'a> {
    /// True cost curves from the scenario.
    TrueCost,
    /// One submitted bid per generator, in generator order.
    Bids(&'a [Bid]),
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum DispatchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dispatch is infeasible: {0}")]
    Infeasible(String),
    #[error("dispatch objective is unbounded below")]
    Unbounded,
    #[error("solver failure: {0}")]
    Solver(#[from] LpError),
}

/// One line with its flow and the multipliers of both direction limits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineFlow {
    pub from: String,
    pub to: String,
    /// Signed MW from `from` to `to`.
    pub flow: f64,
    pub capacity: f64,
    /// Multiplier on the from->to capacity limit.
    pub mu_forward: f64,
    /// Multiplier on the to->from capacity limit.
    pub mu_reverse: f64,
}

/// A solved dispatch with quantities, angles, flows, and prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchResult {
    /// Generation per generator, MW.
    pub x: Vec<f64>,
    /// Bid-based solves only: `(x_p, x_q)` per generator with
    /// `x = x_p + x_q` and `x_p <= s`.
    pub x_split: Option<Vec<(f64, f64)>>,
    /// Phase angle per node, radians; the first node is the reference at 0.
    pub theta: Vec<f64>,
    pub flows: Vec<LineFlow>,
    /// Locational price per node, $/MWh.
    pub pi: Vec<f64>,
    /// Optimal value of the compiled objective (equals reported cost of `x`).
    pub objective: f64,
}

/// Worst KKT residual per condition family for a dispatch result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    /// Price outside the marginal-cost subgradient at the dispatched output.
    pub generator_stationarity: f64,
    /// Nodal imbalance of price differences against congestion multipliers.
    pub network_stationarity: f64,
    /// Balance, flow-limit, and sign violations.
    pub primal_feasibility: f64,
    /// Negative congestion multipliers.
    pub dual_feasibility: f64,
    /// Multiplier mass on slack line capacity.
    pub complementary_slackness: f64,
    pub max_residual: f64,
    pub ok: bool,
}

/// Binding-line verdict for a dispatch result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CongestionReport {
    pub congestion_free: bool,
    /// Directed pairs whose flow is within `binding_tol` of capacity.
    pub binding: Vec<(String, String)>,
    pub binding_tol: f64,
}

/// Compiled LP with the maps needed to read a solution back out.
struct Compiled {
    problem: LpProblem,
    /// Column range of each generator's cost segments.
    gen_cols: Vec<(usize, usize)>,
    /// The segment pieces backing those columns.
    gen_pieces: Vec<Vec<Piece>>,
    /// Column of each node's angle after the first, which is substituted
    /// out as the reference.
    theta_cols: Vec<Option<usize>>,
}

fn compile(scenario: &Scenario, basis: CostBasis<'_>, excluded: Option<usize>) -> Compiled {
    let num_nodes = scenario.nodes.len();
    let num_gens = scenario.generators.len();
    let span = scenario.total_demand();

    let mut gen_pieces: Vec<Vec<Piece>> = match basis {
        CostBasis::TrueCost => scenario
            .generators
            .iter()
            .map(|g| g.cost.pieces(span))
            .collect(),
        CostBasis::Bids(bids) => bids.iter().map(Bid::pieces).collect(),
    };
    if let Some(g) = excluded {
        // Canonical stub: the counterfactual without a generator must not
        // depend on that generator's own bid, bit for bit.
        gen_pieces[g] = vec![Piece {
            slope: 0.0,
            width: 0.0,
        }];
    }

    let mut gen_cols = Vec::with_capacity(num_gens);
    let mut ncols = 0usize;
    for pieces in &gen_pieces {
        gen_cols.push((ncols, ncols + pieces.len()));
        ncols += pieces.len();
    }
    let mut theta_cols = vec![None; num_nodes];
    for i in 1..num_nodes {
        theta_cols[i] = Some(ncols);
        ncols += 1;
    }

    let mut p = LpProblem::new(ncols);
    for (g, pieces) in gen_pieces.iter().enumerate() {
        let (start, _) = gen_cols[g];
        for (k, piece) in pieces.iter().enumerate() {
            p.set_bounds(start + k, 0.0, piece.width);
            p.set_cost(start + k, piece.slope);
        }
    }
    for i in 1..num_nodes {
        p.free_var(theta_cols[i].unwrap());
    }

    // Balance per node: generation minus demand equals net flow out.
    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_nodes];
    for g in 0..num_gens {
        let (start, end) = gen_cols[g];
        let node = scenario.generator_node(g);
        for col in start..end {
            balance[node].push((col, 1.0));
        }
    }
    wire_network(&mut p, scenario, &theta_cols, balance);

    Compiled {
        problem: p,
        gen_cols,
        gen_pieces,
        theta_cols,
    }
}

/// Add the rows shared by every network LP: one balance equality per node
/// (rhs is its fixed demand), seeded with the given injection columns and
/// completed with angle terms, plus a capacity inequality per line
/// direction.
pub(crate) fn wire_network(
    p: &mut LpProblem,
    scenario: &Scenario,
    theta_cols: &[Option<usize>],
    mut balance: Vec<Vec<(usize, f64)>>,
) {
    for l in &scenario.lines {
        let a = scenario.node_index(&l.from).unwrap();
        let b = scenario.node_index(&l.to).unwrap();
        if let Some(c) = theta_cols[a] {
            balance[a].push((c, -l.admittance));
            balance[b].push((c, l.admittance));
        }
        if let Some(c) = theta_cols[b] {
            balance[a].push((c, l.admittance));
            balance[b].push((c, -l.admittance));
        }
    }
    for (i, entries) in balance.iter().enumerate() {
        let row = p.row_from_sparse(entries);
        p.add_equality(row, scenario.nodes[i].demand, format!("balance:{i}"));
    }

    for l in &scenario.lines {
        let a = scenario.node_index(&l.from).unwrap();
        let b = scenario.node_index(&l.to).unwrap();
        let mut fwd: Vec<(usize, f64)> = Vec::new();
        if let Some(c) = theta_cols[a] {
            fwd.push((c, l.admittance));
        }
        if let Some(c) = theta_cols[b] {
            fwd.push((c, -l.admittance));
        }
        let fwd_row = p.row_from_sparse(&fwd);
        let rev_row: Vec<f64> = fwd_row.iter().map(|v| -v).collect();
        p.add_inequality(fwd_row, l.capacity, format!("flow:{a}:{b}"));
        p.add_inequality(rev_row, l.capacity, format!("flow:{b}:{a}"));
    }
}

/// Recover per-line flows and congestion duals from a solved network LP.
pub(crate) fn read_flows(
    scenario: &Scenario,
    problem: &LpProblem,
    theta: &[f64],
    duals_ineq: &[f64],
) -> Vec<LineFlow> {
    let mut flows = Vec::with_capacity(scenario.lines.len());
    for l in &scenario.lines {
        let a = scenario.node_index(&l.from).unwrap();
        let b = scenario.node_index(&l.to).unwrap();
        let dual_of = |label: String| -> f64 {
            match problem.find_label(&label) {
                Some((_, k)) => duals_ineq[k],
                None => 0.0,
            }
        };
        flows.push(LineFlow {
            from: l.from.clone(),
            to: l.to.clone(),
            flow: l.admittance * (theta[a] - theta[b]),
            capacity: l.capacity,
            mu_forward: dual_of(format!("flow:{a}:{b}")),
            mu_reverse: dual_of(format!("flow:{b}:{a}")),
        });
    }
    flows
}

/// Balance duals refined to the lexicographically smallest nonnegative
/// point of the optimal dual face, in node order. Skipped when the base
/// dual solution is already unique.
pub(crate) fn refine_prices(
    problem: &LpProblem,
    base: &LpSolution,
    num_nodes: usize,
    options: &SolverOptions,
) -> Result<(Vec<f64>, Vec<f64>), LpError> {
    if base.dual_unique {
        return Ok((base.duals_eq.clone(), base.duals_ineq.clone()));
    }
    let labels: Vec<String> = (0..num_nodes).map(|i| format!("balance:{i}")).collect();
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let lex = lex_min_dual_solution(problem, &label_refs, 0.0, options)?;
    Ok((lex.duals_eq, lex.duals_ineq))
}

/// Among optimal solutions, lexicographically maximize the column total of
/// each range in order. Empty ranges are skipped. Returns the refined
/// primal vector.
pub(crate) fn lex_max_primal(
    problem: &LpProblem,
    ranges: &[(usize, usize)],
    objective_value: f64,
    options: &SolverOptions,
) -> Result<Vec<f64>, LpError> {
    let mut aux = problem.clone();
    let pin = aux.objective.clone();
    // Equality pins hold every decided stage exactly, so later stages
    // cannot trade earlier totals against pin slack.
    aux.add_equality(pin, objective_value, "pin:obj");
    let mut last: Option<LpSolution> = None;
    for (k, &(start, end)) in ranges.iter().enumerate() {
        if start == end {
            continue;
        }
        aux.objective = vec![0.0; aux.num_vars];
        for col in start..end {
            aux.objective[col] = -1.0;
        }
        let sol = solve_lp(&aux, options)?;
        if sol.status != LpStatus::Optimal {
            return Err(LpError::Internal(format!(
                "tie-break stage {k} is {}",
                sol.status
            )));
        }
        let total: f64 = sol.x[start..end].iter().sum();
        let mut row = vec![0.0; aux.num_vars];
        for col in start..end {
            row[col] = 1.0;
        }
        aux.add_equality(row, total, format!("pin:x:{k}"));
        last = Some(sol);
    }
    match last {
        Some(sol) => Ok(sol.x),
        None => {
            aux.objective = vec![0.0; aux.num_vars];
            Ok(solve_lp(&aux, options)?.x)
        }
    }
}

/// Shared solve pipeline: compile, solve, tie-break primal and dual sides.
fn solve_dispatch(
    scenario: &Scenario,
    basis: CostBasis<'_>,
    excluded: Option<usize>,
    need_prices: bool,
) -> Result<DispatchResult, DispatchError> {
    scenario.validate()?;
    if let CostBasis::Bids(bids) = basis {
        scenario.validate_bids(bids)?;
    }
    let options = SolverOptions::default();
    let compiled = compile(scenario, basis, excluded);
    let base = solve_lp(&compiled.problem, &options)?;
    match base.status {
        LpStatus::Infeasible => {
            return Err(DispatchError::Infeasible(diagnose_infeasibility(
                scenario, &compiled, &options,
            )));
        }
        LpStatus::Unbounded => return Err(DispatchError::Unbounded),
        LpStatus::Optimal => {}
    }

    let x_cols = if base.primal_unique || compiled.gen_cols.is_empty() {
        base.x.clone()
    } else {
        lex_max_primal(&compiled.problem, &compiled.gen_cols, base.objective, &options)?
    };

    let num_gens = compiled.gen_cols.len();
    let mut x = vec![0.0; num_gens];
    for (g, &(start, end)) in compiled.gen_cols.iter().enumerate() {
        x[g] = x_cols[start..end].iter().sum::<f64>().max(0.0);
    }
    if let Some(g) = excluded {
        x[g] = 0.0;
    }

    let (duals_eq, duals_ineq) = if need_prices {
        refine_prices(&compiled.problem, &base, scenario.nodes.len(), &options)?
    } else {
        (base.duals_eq.clone(), base.duals_ineq.clone())
    };

    let theta: Vec<f64> = compiled
        .theta_cols
        .iter()
        .map(|c| c.map_or(0.0, |col| x_cols[col]))
        .collect();

    let flows = read_flows(scenario, &compiled.problem, &theta, &duals_ineq);

    let x_split = match basis {
        CostBasis::TrueCost => None,
        CostBasis::Bids(bids) => Some(
            bids.iter()
                .zip(x.iter())
                .map(|(bid, &xi)| {
                    // The cheap segment fills first; re-pack deterministically
                    // in case equal prices left the split arbitrary.
                    let xp = xi.min(bid.s);
                    (xp, xi - xp)
                })
                .collect(),
        ),
    };

    let objective = match basis {
        CostBasis::TrueCost => x
            .iter()
            .zip(compiled.gen_pieces.iter())
            .map(|(&xi, pieces)| piece_cost(pieces, xi))
            .sum(),
        CostBasis::Bids(bids) => bids.iter().zip(x.iter()).map(|(b, &xi)| b.cost(xi)).sum(),
    };

    Ok(DispatchResult {
        x,
        x_split,
        theta,
        flows,
        pi: duals_eq,
        objective,
    })
}

/// Minimize total true cost over feasible dispatches.
pub fn solve_economic_dispatch(scenario: &Scenario) -> Result<DispatchResult, DispatchError> {
    solve_dispatch(scenario, CostBasis::TrueCost, None, true)
}

/// Minimize total reported cost under `bids`, one per generator.
pub fn solve_bid_dispatch(
    scenario: &Scenario,
    bids: &[Bid],
) -> Result<DispatchResult, DispatchError> {
    solve_dispatch(scenario, CostBasis::Bids(bids), None, true)
}

/// Bid dispatch with one generator excluded (forced to zero output) and no
/// price refinement; used for settlement re-solves where only quantities
/// and the objective matter.
pub(crate) fn solve_bid_dispatch_excluding(
    scenario: &Scenario,
    bids: &[Bid],
    excluded: usize,
) -> Result<DispatchResult, DispatchError> {
    solve_dispatch(scenario, CostBasis::Bids(bids), Some(excluded), false)
}

/// Bid dispatch without the price refinement pass, for payoff evaluations
/// that never read prices.
pub(crate) fn solve_bid_dispatch_quantities(
    scenario: &Scenario,
    bids: &[Bid],
) -> Result<DispatchResult, DispatchError> {
    solve_dispatch(scenario, CostBasis::Bids(bids), None, false)
}

/// Find per-node shortfalls explaining an infeasible dispatch: relax every
/// balance row with slack in both directions and minimize total slack.
fn diagnose_infeasibility(
    scenario: &Scenario,
    compiled: &Compiled,
    options: &SolverOptions,
) -> String {
    let num_nodes = scenario.nodes.len();
    let mut relaxed = compiled.problem.clone();
    let base_cols = relaxed.num_vars;
    let total = base_cols + 2 * num_nodes;
    relaxed.num_vars = total;
    relaxed.objective.resize(total, 0.0);
    relaxed.lower.resize(total, 0.0);
    relaxed.upper.resize(total, f64::INFINITY);
    for row in relaxed
        .equalities
        .iter_mut()
        .chain(relaxed.inequalities.iter_mut())
    {
        row.coefficients.resize(total, 0.0);
    }
    for i in 0..num_nodes {
        let short = base_cols + 2 * i;
        let spill = short + 1;
        relaxed.objective[short] = 1.0;
        relaxed.objective[spill] = 1.0;
        // Shortage adds phantom supply; spill absorbs phantom demand.
        relaxed.equalities[i].coefficients[short] = 1.0;
        relaxed.equalities[i].coefficients[spill] = -1.0;
    }
    for col in 0..base_cols {
        relaxed.objective[col] = 0.0;
    }
    match solve_lp(&relaxed, options) {
        Ok(sol) if sol.status == LpStatus::Optimal => {
            let mut parts = Vec::new();
            for i in 0..num_nodes {
                let short = sol.x[base_cols + 2 * i];
                let spill = sol.x[base_cols + 2 * i + 1];
                if short > 1e-6 {
                    parts.push(format!(
                        "node '{}' is short {short:.6} MW given line limits",
                        scenario.nodes[i].id
                    ));
                }
                if spill > 1e-6 {
                    parts.push(format!(
                        "node '{}' cannot absorb {spill:.6} MW",
                        scenario.nodes[i].id
                    ));
                }
            }
            if parts.is_empty() {
                "no feasible dispatch; slack diagnosis found no nodal imbalance (line limits \
                 conflict internally)"
                    .into()
            } else {
                parts.join("; ")
            }
        }
        _ => "no feasible dispatch; slack diagnosis failed to solve".into(),
    }
}

/// Cost of `x` under a compiled piece stack (segments fill in order).
fn piece_cost(pieces: &[Piece], x: f64) -> f64 {
    let mut left = x.max(0.0);
    let mut cost = 0.0;
    for piece in pieces {
        let take = left.min(piece.width);
        cost += piece.slope * take;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    cost
}

/// Slope of the piece whose interval contains `target`.
fn slope_at(pieces: &[Piece], target: f64) -> f64 {
    let mut acc = 0.0;
    for piece in pieces {
        acc += piece.width;
        if target < acc {
            return piece.slope;
        }
    }
    pieces.last().map_or(0.0, |p| p.slope)
}

/// Slopes just below and above `x` on a compiled piece stack. Points within
/// the snap distance of a breakpoint are treated as sitting exactly on it.
fn piece_derivatives(pieces: &[Piece], x: f64) -> (f64, f64) {
    let x = x.max(0.0);
    let snap = 1e-7;
    let right = slope_at(pieces, x + snap);
    let left = if x <= snap {
        slope_at(pieces, 0.0)
    } else {
        slope_at(pieces, x - snap)
    };
    (left, right)
}

/// Check the optimality conditions of `result` for the given objective
/// basis, reporting the worst residual per family.
pub fn verify_kkt(scenario: &Scenario, basis: CostBasis<'_>, result: &DispatchResult) -> KktReport {
    let span = scenario.total_demand();
    let pieces: Vec<Vec<Piece>> = match basis {
        CostBasis::TrueCost => scenario
            .generators
            .iter()
            .map(|g| g.cost.pieces(span))
            .collect(),
        CostBasis::Bids(bids) => bids.iter().map(Bid::pieces).collect(),
    };

    let mut gen_stationarity: f64 = 0.0;
    for (g, stack) in pieces.iter().enumerate() {
        let node = scenario.generator_node(g);
        let pi = result.pi[node];
        let x = result.x[g];
        let (left, right) = piece_derivatives(stack, x);
        // Price above the right slope means profitable expansion was left
        // on the table; price below the left slope with positive output
        // means the last unit ran at a loss.
        gen_stationarity = gen_stationarity
            .max(pi - right)
            .max(x * (left - pi).max(0.0));
    }

    let num_nodes = scenario.nodes.len();
    let index = |id: &str| scenario.node_index(id).unwrap();
    let mut net = vec![0.0; num_nodes];
    for lf in &result.flows {
        let a = index(&lf.from);
        let b = index(&lf.to);
        let l = scenario
            .lines
            .iter()
            .find(|l| l.from == lf.from && l.to == lf.to)
            .unwrap();
        let y = l.admittance;
        net[a] += y * (result.pi[a] - result.pi[b] + lf.mu_forward - lf.mu_reverse);
        net[b] += y * (result.pi[b] - result.pi[a] + lf.mu_reverse - lf.mu_forward);
    }
    let network_stationarity = net.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut primal: f64 = 0.0;
    let mut injections = vec![0.0; num_nodes];
    for (g, &xg) in result.x.iter().enumerate() {
        primal = primal.max(-xg);
        injections[scenario.generator_node(g)] += xg;
    }
    for lf in &result.flows {
        let a = index(&lf.from);
        let b = index(&lf.to);
        injections[a] -= lf.flow;
        injections[b] += lf.flow;
        primal = primal.max(lf.flow.abs() - lf.capacity);
    }
    for (i, inj) in injections.iter().enumerate() {
        primal = primal.max((inj - scenario.nodes[i].demand).abs());
    }
    if let Some(split) = &result.x_split {
        if let CostBasis::Bids(bids) = basis {
            for ((xp, xq), bid) in split.iter().zip(bids.iter()) {
                primal = primal.max(xp - bid.s).max(-xp).max(-xq);
            }
        }
    }

    let mut dual: f64 = 0.0;
    let mut cs: f64 = 0.0;
    for lf in &result.flows {
        dual = dual.max(-lf.mu_forward).max(-lf.mu_reverse);
        cs = cs
            .max(lf.mu_forward * (lf.capacity - lf.flow).abs())
            .max(lf.mu_reverse * (lf.capacity + lf.flow).abs());
    }

    let max_residual = gen_stationarity
        .max(network_stationarity)
        .max(primal)
        .max(dual)
        .max(cs);
    KktReport {
        generator_stationarity: gen_stationarity,
        network_stationarity,
        primal_feasibility: primal,
        dual_feasibility: dual,
        complementary_slackness: cs,
        max_residual,
        ok: max_residual <= tol::KKT,
    }
}

/// True iff no directed line limit is binding at `binding_tol`.
pub fn check_congestion_free(result: &DispatchResult) -> CongestionReport {
    let mut binding = Vec::new();
    for lf in &result.flows {
        if lf.flow >= lf.capacity - tol::BINDING {
            binding.push((lf.from.clone(), lf.to.clone()));
        }
        if -lf.flow >= lf.capacity - tol::BINDING {
            binding.push((lf.to.clone(), lf.from.clone()));
        }
    }
    CongestionReport {
        congestion_free: binding.is_empty(),
        binding,
        binding_tol: tol::BINDING,
    }
}

/// Settlement payoffs under locational prices: each generator earns its
/// nodal price on every unit, minus its true cost.
pub fn lmp_payoffs(scenario: &Scenario, result: &DispatchResult) -> Vec<f64> {
    result
        .x
        .iter()
        .enumerate()
        .map(|(g, &xg)| {
            let pi = result.pi[scenario.generator_node(g)];
            pi * xg - scenario.generators[g].cost.cost(xg)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests;
