//! Two-sided market clearing with elastic demand.
//!
//! Consumers join the market with concave demand bids and the clearing
//! maximizes reported surplus: bid value of consumption minus bid cost of
//! generation, subject to the same DC flow network as one-sided dispatch.
//! Fixed nodal demand and elastic consumers can coexist; a scenario with no
//! consumers clears exactly like a bid dispatch.
//!
//! Ties are resolved like the one-sided engine: among optimal clearings,
//! generator totals are lexicographically maximized in scenario order, then
//! consumer totals; prices are the lexicographically smallest nonnegative
//! point of the optimal dual face. An uncapped consumer whose bid tail
//! exceeds every marginal cost makes the surplus unbounded; that is
//! reported, not patched.
//!
//! The strategic instruments of the one-sided game carry over with
//! consumers as additional players: grid best responses, epsilon
//! equilibrium verification, and round-robin dynamics, under either
//! settlement rule. A consumer's payoff is its true value of what it
//! receives minus what it pays.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dispatch::{lex_max_primal, read_flows, refine_prices, wire_network, LineFlow};
use crate::game::{
    axis, candidates_for, price_axis_for, BidGrid, DynamicsOutcome, GameError, Mechanism,
};
use crate::lp::{solve_lp, LpError, LpProblem, LpStatus, SolverOptions};
use crate::model::{
    check_assumption1, Bid, Consumer, ConsumerBid, ModelError, Piece, Scenario, Valuation,
};
use crate::tol;

#[derive(Debug, Clone, thiserror::Error)]
pub enum DoubleSidedError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("two-sided clearing is infeasible: {0}")]
    Infeasible(String),
    #[error("reported surplus is unbounded: {0}")]
    Unbounded(String),
    #[error("participant cannot be excluded: {0}")]
    Pivotal(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("solver failure: {0}")]
    Solver(#[from] LpError),
}

/// A cleared two-sided market.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleSidedResult {
    /// Generation per generator, MW.
    pub x: Vec<f64>,
    /// Consumption per consumer, MW.
    pub y: Vec<f64>,
    /// Phase angle per node; the first node is the reference at 0.
    pub theta: Vec<f64>,
    pub flows: Vec<LineFlow>,
    /// Locational price per node, $/MWh.
    pub pi: Vec<f64>,
    /// Reported surplus: bid value of `y` minus bid cost of `x`.
    pub surplus: f64,
}

/// Settlement payoffs at locational prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleSidedPayoffs {
    /// Per generator: price revenue minus true cost.
    pub generators: Vec<f64>,
    /// Per consumer: true value minus price charge.
    pub consumers: Vec<f64>,
}

/// One exclusion outcome, kept so a settlement can be audited.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleSidedExclusion {
    pub participant: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Second-price settlement of a two-sided clearing.
///
/// Each side is priced by its externality: a generator is paid what its
/// presence saves the rest of the market, a consumer is charged what its
/// presence costs the rest. The two sides need not net out; `budget` is the
/// operator's position and a negative value is a deficit the mechanism
/// must fund.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleSidedSettlement {
    pub result: DoubleSidedResult,
    /// Payment to each generator. Never negative.
    pub generator_payments: Vec<f64>,
    /// Charge to each consumer. Negative when removing the consumer would
    /// hurt the others, which congestion makes possible.
    pub consumer_charges: Vec<f64>,
    /// Payment minus true cost, per generator.
    pub generator_payoffs: Vec<f64>,
    /// True value minus charge, per consumer.
    pub consumer_payoffs: Vec<f64>,
    /// Charges collected minus payments made; negative is a deficit.
    pub budget: f64,
    /// Exclusion clearings, generators first then consumers.
    pub exclusions: Vec<DoubleSidedExclusion>,
}

/// One strategic participant of a two-sided market, by side and index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoSidedPlayer {
    Generator(usize),
    Consumer(usize),
}

struct CompiledTwoSided {
    problem: LpProblem,
    gen_cols: Vec<(usize, usize)>,
    con_cols: Vec<(usize, usize)>,
    theta_cols: Vec<Option<usize>>,
}

/// Truncate cumulative piece width to a consumption cap.
fn clip_pieces(mut pieces: Vec<Piece>, cap: Option<f64>) -> Vec<Piece> {
    let Some(cap) = cap else {
        return pieces;
    };
    let mut remaining = cap;
    let mut out = Vec::with_capacity(pieces.len());
    for p in pieces.drain(..) {
        if remaining <= 0.0 {
            break;
        }
        let width = p.width.min(remaining);
        remaining -= width;
        out.push(Piece {
            slope: p.slope,
            width,
        });
    }
    out
}

fn compile_two_sided(
    scenario: &Scenario,
    gen_bids: &[Bid],
    con_bids: &[ConsumerBid],
    excluded: Option<TwoSidedPlayer>,
) -> CompiledTwoSided {
    let num_nodes = scenario.nodes.len();

    let mut gen_pieces: Vec<Vec<Piece>> = gen_bids.iter().map(Bid::pieces).collect();
    let mut con_pieces: Vec<Vec<Piece>> = con_bids
        .iter()
        .zip(&scenario.consumers)
        .map(|(bid, c)| clip_pieces(bid.pieces(), c.cap))
        .collect();
    // Canonical stub: the counterfactual without a participant must not
    // depend on that participant's own bid, bit for bit.
    match excluded {
        Some(TwoSidedPlayer::Generator(g)) => {
            gen_pieces[g] = vec![Piece {
                slope: 0.0,
                width: 0.0,
            }];
        }
        Some(TwoSidedPlayer::Consumer(m)) => {
            con_pieces[m] = vec![Piece {
                slope: 0.0,
                width: 0.0,
            }];
        }
        None => {}
    }

    let mut ncols = 0usize;
    let mut gen_cols = Vec::with_capacity(gen_pieces.len());
    for pieces in &gen_pieces {
        gen_cols.push((ncols, ncols + pieces.len()));
        ncols += pieces.len();
    }
    let mut con_cols = Vec::with_capacity(con_pieces.len());
    for pieces in &con_pieces {
        con_cols.push((ncols, ncols + pieces.len()));
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
    // Consumption earns its bid value, so its segments enter negated:
    // minimizing cost minus value maximizes reported surplus.
    for (m, pieces) in con_pieces.iter().enumerate() {
        let (start, _) = con_cols[m];
        for (k, piece) in pieces.iter().enumerate() {
            p.set_bounds(start + k, 0.0, piece.width);
            p.set_cost(start + k, -piece.slope);
        }
    }
    for i in 1..num_nodes {
        p.free_var(theta_cols[i].unwrap());
    }

    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_nodes];
    for g in 0..gen_pieces.len() {
        let (start, end) = gen_cols[g];
        let node = scenario.generator_node(g);
        for col in start..end {
            balance[node].push((col, 1.0));
        }
    }
    for m in 0..con_pieces.len() {
        let (start, end) = con_cols[m];
        let node = scenario.consumer_node(m);
        for col in start..end {
            balance[node].push((col, -1.0));
        }
    }
    wire_network(&mut p, scenario, &theta_cols, balance);

    CompiledTwoSided {
        problem: p,
        gen_cols,
        con_cols,
        theta_cols,
    }
}

fn unbounded_report(scenario: &Scenario, con_bids: &[ConsumerBid]) -> String {
    let suspects: Vec<&str> = scenario
        .consumers
        .iter()
        .zip(con_bids)
        .filter(|(c, b)| c.cap.is_none() && b.w > 0.0)
        .map(|(c, _)| c.id.as_str())
        .collect();
    if suspects.is_empty() {
        "no finite optimum".into()
    } else {
        format!(
            "uncapped consumers whose bid tail undercuts no supply limit: {}",
            suspects.join(", ")
        )
    }
}

fn solve_two_sided(
    scenario: &Scenario,
    gen_bids: &[Bid],
    con_bids: &[ConsumerBid],
    excluded: Option<TwoSidedPlayer>,
    need_prices: bool,
) -> Result<DoubleSidedResult, DoubleSidedError> {
    scenario.validate()?;
    scenario.validate_bids(gen_bids)?;
    scenario.validate_consumer_bids(con_bids)?;
    let options = SolverOptions::default();
    let compiled = compile_two_sided(scenario, gen_bids, con_bids, excluded);
    let base = solve_lp(&compiled.problem, &options)?;
    match base.status {
        LpStatus::Infeasible => {
            return Err(DoubleSidedError::Infeasible(
                "fixed demand cannot be served under the line limits".into(),
            ));
        }
        LpStatus::Unbounded => {
            return Err(DoubleSidedError::Unbounded(unbounded_report(
                scenario, con_bids,
            )));
        }
        LpStatus::Optimal => {}
    }

    let x_cols = if base.primal_unique {
        base.x.clone()
    } else {
        let ranges: Vec<(usize, usize)> = compiled
            .gen_cols
            .iter()
            .chain(&compiled.con_cols)
            .copied()
            .collect();
        lex_max_primal(&compiled.problem, &ranges, base.objective, &options)?
    };

    let mut x = vec![0.0; gen_bids.len()];
    for (g, &(start, end)) in compiled.gen_cols.iter().enumerate() {
        x[g] = x_cols[start..end].iter().sum::<f64>().max(0.0);
    }
    let mut y = vec![0.0; con_bids.len()];
    for (m, &(start, end)) in compiled.con_cols.iter().enumerate() {
        y[m] = x_cols[start..end].iter().sum::<f64>().max(0.0);
    }
    match excluded {
        Some(TwoSidedPlayer::Generator(g)) => x[g] = 0.0,
        Some(TwoSidedPlayer::Consumer(m)) => y[m] = 0.0,
        None => {}
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

    let value: f64 = con_bids.iter().zip(&y).map(|(b, &ym)| b.value(ym)).sum();
    let cost: f64 = gen_bids.iter().zip(&x).map(|(b, &xg)| b.cost(xg)).sum();

    Ok(DoubleSidedResult {
        x,
        y,
        theta,
        flows,
        pi: duals_eq,
        surplus: value - cost,
    })
}

/// Clear a two-sided market: maximize reported surplus over feasible
/// production, consumption, and flows.
pub fn solve_double_sided(
    scenario: &Scenario,
    gen_bids: &[Bid],
    consumer_bids: &[ConsumerBid],
) -> Result<DoubleSidedResult, DoubleSidedError> {
    solve_two_sided(scenario, gen_bids, consumer_bids, None, true)
}

/// Payoffs of a two-sided clearing when everyone settles at the locational
/// price: generators earn it, consumers pay it.
pub fn lmp_payoffs_double_sided(
    scenario: &Scenario,
    result: &DoubleSidedResult,
) -> DoubleSidedPayoffs {
    let generators = (0..scenario.generators.len())
        .map(|g| {
            let pi = result.pi[scenario.generator_node(g)];
            pi * result.x[g] - scenario.generators[g].cost.cost(result.x[g])
        })
        .collect();
    let consumers = (0..scenario.consumers.len())
        .map(|m| {
            let pi = result.pi[scenario.consumer_node(m)];
            scenario.consumers[m].valuation.value(result.y[m]) - pi * result.y[m]
        })
        .collect();
    DoubleSidedPayoffs {
        generators,
        consumers,
    }
}

fn participant_id(scenario: &Scenario, who: TwoSidedPlayer) -> &str {
    match who {
        TwoSidedPlayer::Generator(g) => &scenario.generators[g].id,
        TwoSidedPlayer::Consumer(m) => &scenario.consumers[m].id,
    }
}

/// Reported surplus of everyone except `skip` at a given clearing.
fn others_surplus(
    gen_bids: &[Bid],
    con_bids: &[ConsumerBid],
    x: &[f64],
    y: &[f64],
    skip: TwoSidedPlayer,
) -> f64 {
    let value: f64 = con_bids
        .iter()
        .zip(y)
        .enumerate()
        .filter(|(m, _)| skip != TwoSidedPlayer::Consumer(*m))
        .map(|(_, (b, &ym))| b.value(ym))
        .sum();
    let cost: f64 = gen_bids
        .iter()
        .zip(x)
        .enumerate()
        .filter(|(n, _)| skip != TwoSidedPlayer::Generator(*n))
        .map(|(_, (b, &xn))| b.cost(xn))
        .sum();
    value - cost
}

/// Second-price settlement of a two-sided market: each participant's
/// transfer is its externality on the others' reported surplus.
///
/// Requires every generator to be excludable with the fixed demand still
/// servable; consumers are always excludable. The settlement does not
/// balance in general. See [`DoubleSidedSettlement::budget`].
pub fn pnsp_settle_double_sided(
    scenario: &Scenario,
    gen_bids: &[Bid],
    consumer_bids: &[ConsumerBid],
) -> Result<DoubleSidedSettlement, DoubleSidedError> {
    scenario.validate()?;
    scenario.validate_bids(gen_bids)?;
    scenario.validate_consumer_bids(consumer_bids)?;
    let report = check_assumption1(scenario)?;
    if !report.holds {
        return Err(DoubleSidedError::Pivotal(report.pivotal.join(", ")));
    }

    let main = solve_two_sided(scenario, gen_bids, consumer_bids, None, true)?;

    let participants: Vec<TwoSidedPlayer> = (0..gen_bids.len())
        .map(TwoSidedPlayer::Generator)
        .chain((0..consumer_bids.len()).map(TwoSidedPlayer::Consumer))
        .collect();
    let excluded_runs: Vec<DoubleSidedResult> = participants
        .par_iter()
        .map(|&who| {
            solve_two_sided(scenario, gen_bids, consumer_bids, Some(who), false).map_err(|e| {
                match e {
                    DoubleSidedError::Infeasible(_) => {
                        DoubleSidedError::Pivotal(participant_id(scenario, who).to_string())
                    }
                    other => other,
                }
            })
        })
        .collect::<Result<_, _>>()?;

    let mut generator_payments = Vec::with_capacity(gen_bids.len());
    let mut consumer_charges = Vec::with_capacity(consumer_bids.len());
    let mut exclusions = Vec::with_capacity(participants.len());
    for (&who, excl) in participants.iter().zip(&excluded_runs) {
        let with_present = others_surplus(gen_bids, consumer_bids, &main.x, &main.y, who);
        let without = others_surplus(gen_bids, consumer_bids, &excl.x, &excl.y, who);
        match who {
            TwoSidedPlayer::Generator(_) => {
                let payment = with_present - without;
                // The exclusion clearing extended with zero output for the
                // missing generator is feasible for the full market, so
                // its presence cannot lower the others' surplus.
                debug_assert!(payment >= -1e-9, "generator payment is negative");
                generator_payments.push(payment);
            }
            TwoSidedPlayer::Consumer(_) => {
                consumer_charges.push(without - with_present);
            }
        }
        exclusions.push(DoubleSidedExclusion {
            participant: participant_id(scenario, who).to_string(),
            x: excl.x.clone(),
            y: excl.y.clone(),
        });
    }

    let generator_payoffs: Vec<f64> = generator_payments
        .iter()
        .enumerate()
        .map(|(g, &w)| w - scenario.generators[g].cost.cost(main.x[g]))
        .collect();
    let consumer_payoffs: Vec<f64> = consumer_charges
        .iter()
        .enumerate()
        .map(|(m, &charge)| scenario.consumers[m].valuation.value(main.y[m]) - charge)
        .collect();
    let budget =
        consumer_charges.iter().sum::<f64>() - generator_payments.iter().sum::<f64>();

    Ok(DoubleSidedSettlement {
        result: main,
        generator_payments,
        consumer_charges,
        generator_payoffs,
        consumer_payoffs,
        budget,
        exclusions,
    })
}

/// Rewrite fixed nodal demand as elastic consumers too steep to ever shed
/// load: one consumer per loaded node, valued well above every marginal
/// cost up to exactly the old demand and zero beyond. Full consumption is
/// then always efficient, so the two-sided clearing reproduces the
/// one-sided dispatch and prices. Returns the rewritten scenario and the
/// truthful bid per consumer.
pub fn elastic_twin(scenario: &Scenario) -> Result<(Scenario, Vec<ConsumerBid>), ModelError> {
    scenario.validate()?;
    if !scenario.consumers.is_empty() {
        return Err(ModelError::Invalid(
            "scenario already has consumers; demand twins would mix with them".into(),
        ));
    }
    let max_slope = scenario.max_marginal_cost();
    let steep = if max_slope > 0.0 { 10.0 * max_slope } else { 10.0 };

    let mut twin = scenario.clone();
    let mut bids = Vec::new();
    for node in twin.nodes.iter_mut() {
        if node.demand > 0.0 {
            let d = node.demand;
            twin.consumers.push(Consumer {
                id: format!("load:{}", node.id),
                node: node.id.clone(),
                valuation: Valuation::PiecewiseLinear {
                    points: vec![[0.0, 0.0], [d, steep * d], [d + 1.0, steep * d]],
                },
                cap: None,
            });
            bids.push(ConsumerBid {
                r: steep,
                t: d,
                w: 0.0,
            });
            node.demand = 0.0;
        }
    }
    twin.validate()?;
    Ok((twin, bids))
}

/// A bid on either side of the market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerBid {
    Supply(Bid),
    Demand(ConsumerBid),
}

/// Outcome of a grid search for one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSidedBestResponse {
    pub bid: PlayerBid,
    pub payoff: f64,
    /// The chosen bid prices at the top of the grid; a larger ceiling might
    /// do strictly better.
    pub at_price_ceiling: bool,
}

/// Equilibrium verdict for a two-sided bid profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TwoSidedVerdict {
    /// No grid deviation improves any single payoff by more than epsilon.
    /// Gains are best-response payoff minus current payoff per player,
    /// generators first then consumers; they can be negative when the
    /// profile sits off the grid.
    GridEpsilonNe { gains: Vec<f64> },
    /// Some deviation gains more than epsilon; replaying `deviation` for
    /// `player` reproduces `gain`.
    Refuted {
        player: TwoSidedPlayer,
        deviation: PlayerBid,
        gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSidedEquilibriumReport {
    pub epsilon: f64,
    /// Payoff per player under the profile as given, generators first then
    /// consumers.
    pub payoffs: Vec<f64>,
    pub verdict: TwoSidedVerdict,
}

impl TwoSidedEquilibriumReport {
    pub fn is_equilibrium(&self) -> bool {
        matches!(self.verdict, TwoSidedVerdict::GridEpsilonNe { .. })
    }
}

fn check_player(scenario: &Scenario, player: TwoSidedPlayer) -> Result<(), DoubleSidedError> {
    let ok = match player {
        TwoSidedPlayer::Generator(g) => g < scenario.generators.len(),
        TwoSidedPlayer::Consumer(m) => m < scenario.consumers.len(),
    };
    if ok {
        Ok(())
    } else {
        Err(GameError::Grid(format!(
            "player {player:?} out of range for {} generators and {} consumers",
            scenario.generators.len(),
            scenario.consumers.len()
        ))
        .into())
    }
}

/// Demand-bid candidates for one consumer against the current profile, with
/// the resolved price ceiling.
///
/// Price candidates come from the shared price axis, with every supply bid
/// price and every rival demand bid price critical. Saturation candidates
/// `t` are the positive quantity-axis points; the quantity ceiling falls
/// back from the grid to the consumer's cap, then its current saturation,
/// then total fixed demand, then one unit. Candidates are the null bid plus
/// every single-price bid `(r, t, 0)`; tailed bids `(r, t, w)` with
/// `0 < w < r` are enumerated only for capped consumers, where no tail can
/// unbound the surplus.
fn consumer_candidates(
    grid: &BidGrid,
    scenario: &Scenario,
    gen_bids: &[Bid],
    con_bids: &[ConsumerBid],
    player: usize,
) -> Result<(Vec<ConsumerBid>, f64), GameError> {
    let mut critical: Vec<f64> = Vec::new();
    for b in gen_bids {
        critical.push(b.p);
        critical.push(b.q);
    }
    for (m, b) in con_bids.iter().enumerate() {
        if m != player {
            critical.push(b.r);
            critical.push(b.w);
        }
    }
    let (prices, ceiling) = price_axis_for(grid, &critical, scenario.bid_cap)?;

    let cap = scenario.consumers[player].cap;
    let q_ceiling = grid.quantity_ceiling.or(cap).unwrap_or_else(|| {
        let own = con_bids[player].t;
        let fixed = scenario.total_demand();
        if own > 0.0 {
            own
        } else if fixed > 0.0 {
            fixed
        } else {
            1.0
        }
    });
    let quantities: Vec<f64> = if q_ceiling > 0.0 {
        axis(grid.quantity_step.unwrap_or(q_ceiling), q_ceiling)
            .into_iter()
            .filter(|&t| t > 0.0)
            .collect()
    } else {
        Vec::new()
    };

    let mut out = vec![ConsumerBid {
        r: 0.0,
        t: 0.0,
        w: 0.0,
    }];
    for &r in prices.iter().filter(|&&r| r > 0.0) {
        for &t in &quantities {
            out.push(ConsumerBid { r, t, w: 0.0 });
        }
    }
    if !grid.linear_only && cap.is_some() {
        for (i, &w) in prices.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            for &r in &prices[i + 1..] {
                for &t in &quantities {
                    out.push(ConsumerBid { r, t, w });
                }
            }
        }
    }
    Ok((out, ceiling))
}

/// Payoff of one candidate bid for one participant, with everyone else
/// fixed.
enum TwoSidedPayoffEval {
    Lmp,
    /// Others' reported surplus in the counterfactual without the player.
    /// The counterfactual ignores the player's own bid, so it is solved
    /// once and shared across every candidate.
    Pnsp { others_without: f64 },
}

impl TwoSidedPayoffEval {
    fn prepare(
        mech: Mechanism,
        scenario: &Scenario,
        gen_bids: &[Bid],
        con_bids: &[ConsumerBid],
        player: TwoSidedPlayer,
    ) -> Result<Self, DoubleSidedError> {
        match mech {
            Mechanism::Lmp => Ok(TwoSidedPayoffEval::Lmp),
            Mechanism::Pnsp => {
                let excl = solve_two_sided(scenario, gen_bids, con_bids, Some(player), false)
                    .map_err(|e| match e {
                        DoubleSidedError::Infeasible(_) => DoubleSidedError::Pivotal(
                            participant_id(scenario, player).to_string(),
                        ),
                        other => other,
                    })?;
                Ok(TwoSidedPayoffEval::Pnsp {
                    others_without: others_surplus(gen_bids, con_bids, &excl.x, &excl.y, player),
                })
            }
        }
    }

    fn payoff(
        &self,
        scenario: &Scenario,
        gen_profile: &[Bid],
        con_profile: &[ConsumerBid],
        player: TwoSidedPlayer,
    ) -> Result<f64, DoubleSidedError> {
        match self {
            TwoSidedPayoffEval::Lmp => {
                let r = solve_two_sided(scenario, gen_profile, con_profile, None, true)?;
                Ok(match player {
                    TwoSidedPlayer::Generator(g) => {
                        let pi = r.pi[scenario.generator_node(g)];
                        pi * r.x[g] - scenario.generators[g].cost.cost(r.x[g])
                    }
                    TwoSidedPlayer::Consumer(m) => {
                        let pi = r.pi[scenario.consumer_node(m)];
                        scenario.consumers[m].valuation.value(r.y[m]) - pi * r.y[m]
                    }
                })
            }
            TwoSidedPayoffEval::Pnsp { others_without } => {
                let r = solve_two_sided(scenario, gen_profile, con_profile, None, false)?;
                let with_present = others_surplus(gen_profile, con_profile, &r.x, &r.y, player);
                Ok(match player {
                    TwoSidedPlayer::Generator(g) => {
                        (with_present - others_without)
                            - scenario.generators[g].cost.cost(r.x[g])
                    }
                    TwoSidedPlayer::Consumer(m) => {
                        scenario.consumers[m].valuation.value(r.y[m])
                            - (others_without - with_present)
                    }
                })
            }
        }
    }
}

/// Lexicographically smallest candidate within the relative tie band of the
/// best payoff; returns its index. Keys are the bid components in their
/// natural order.
fn pick_in_band(payoffs: &[f64], keys: &[(f64, f64, f64)]) -> usize {
    let best = payoffs.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let band = best - 1e-9 * (1.0 + best.abs());
    let mut pick = 0usize;
    let mut picked = false;
    for (i, &k) in keys.iter().enumerate() {
        if payoffs[i] >= band && (!picked || k < keys[pick]) {
            pick = i;
            picked = true;
        }
    }
    pick
}

/// Grid bid maximizing one participant's payoff with every other bid held
/// fixed, on either side of the market.
///
/// A generator searches its supply-bid grid with every demand-bid price
/// added as a critical value; a consumer searches the demand candidates of
/// [`consumer_candidates`]. Ties within a relative 1e-9 band resolve to the
/// lexicographically smallest bid, keeping search results reproducible.
pub fn best_response_two_sided(
    scenario: &Scenario,
    gen_bids: &[Bid],
    consumer_bids: &[ConsumerBid],
    player: TwoSidedPlayer,
    mech: Mechanism,
    grid: &BidGrid,
) -> Result<TwoSidedBestResponse, DoubleSidedError> {
    scenario.validate()?;
    scenario.validate_bids(gen_bids)?;
    scenario.validate_consumer_bids(consumer_bids)?;
    check_player(scenario, player)?;
    let eval = TwoSidedPayoffEval::prepare(mech, scenario, gen_bids, consumer_bids, player)?;
    match player {
        TwoSidedPlayer::Generator(g) => {
            let extra: Vec<f64> = consumer_bids.iter().flat_map(|b| [b.r, b.w]).collect();
            let candidates = candidates_for(grid, scenario, gen_bids, g, &extra)?;
            let payoffs: Vec<f64> = candidates
                .bids
                .par_iter()
                .map(|cand| {
                    let mut profile = gen_bids.to_vec();
                    profile[g] = *cand;
                    eval.payoff(scenario, &profile, consumer_bids, player)
                })
                .collect::<Result<_, _>>()?;
            let keys: Vec<(f64, f64, f64)> =
                candidates.bids.iter().map(|b| (b.p, b.s, b.q)).collect();
            let pick = pick_in_band(&payoffs, &keys);
            let bid = candidates.bids[pick];
            Ok(TwoSidedBestResponse {
                bid: PlayerBid::Supply(bid),
                payoff: payoffs[pick],
                at_price_ceiling: bid.q >= candidates.price_ceiling - 1e-12,
            })
        }
        TwoSidedPlayer::Consumer(m) => {
            let (candidates, price_ceiling) =
                consumer_candidates(grid, scenario, gen_bids, consumer_bids, m)?;
            let payoffs: Vec<f64> = candidates
                .par_iter()
                .map(|cand| {
                    let mut profile = consumer_bids.to_vec();
                    profile[m] = *cand;
                    eval.payoff(scenario, gen_bids, &profile, player)
                })
                .collect::<Result<_, _>>()?;
            let keys: Vec<(f64, f64, f64)> =
                candidates.iter().map(|b| (b.r, b.t, b.w)).collect();
            let pick = pick_in_band(&payoffs, &keys);
            let bid = candidates[pick];
            Ok(TwoSidedBestResponse {
                bid: PlayerBid::Demand(bid),
                payoff: payoffs[pick],
                at_price_ceiling: bid.r >= price_ceiling - 1e-12,
            })
        }
    }
}

/// Payoffs under the profile as given, generators first then consumers.
fn current_payoffs_two_sided(
    scenario: &Scenario,
    gen_bids: &[Bid],
    consumer_bids: &[ConsumerBid],
    mech: Mechanism,
) -> Result<Vec<f64>, DoubleSidedError> {
    match mech {
        Mechanism::Lmp => {
            let r = solve_two_sided(scenario, gen_bids, consumer_bids, None, true)?;
            let p = lmp_payoffs_double_sided(scenario, &r);
            Ok(p.generators.into_iter().chain(p.consumers).collect())
        }
        Mechanism::Pnsp => {
            let s = pnsp_settle_double_sided(scenario, gen_bids, consumer_bids)?;
            Ok(s.generator_payoffs
                .into_iter()
                .chain(s.consumer_payoffs)
                .collect())
        }
    }
}

fn all_players(scenario: &Scenario) -> Vec<TwoSidedPlayer> {
    (0..scenario.generators.len())
        .map(TwoSidedPlayer::Generator)
        .chain((0..scenario.consumers.len()).map(TwoSidedPlayer::Consumer))
        .collect()
}

/// Check a two-sided profile for unilateral grid deviations gaining more
/// than `epsilon`, generators first then consumers. Stops at the first
/// refuting player; the witness replays.
pub fn verify_epsilon_ne_two_sided(
    scenario: &Scenario,
    gen_bids: &[Bid],
    consumer_bids: &[ConsumerBid],
    mech: Mechanism,
    grid: &BidGrid,
    epsilon: f64,
) -> Result<TwoSidedEquilibriumReport, DoubleSidedError> {
    let payoffs = current_payoffs_two_sided(scenario, gen_bids, consumer_bids, mech)?;
    let players = all_players(scenario);
    let mut gains = Vec::with_capacity(players.len());
    for (i, &player) in players.iter().enumerate() {
        let br = best_response_two_sided(scenario, gen_bids, consumer_bids, player, mech, grid)?;
        let gain = br.payoff - payoffs[i];
        if gain > epsilon {
            return Ok(TwoSidedEquilibriumReport {
                epsilon,
                payoffs,
                verdict: TwoSidedVerdict::Refuted {
                    player,
                    deviation: br.bid,
                    gain,
                },
            });
        }
        gains.push(gain);
    }
    Ok(TwoSidedEquilibriumReport {
        epsilon,
        payoffs,
        verdict: TwoSidedVerdict::GridEpsilonNe { gains },
    })
}

/// One player-turn of the dynamics: the bid in force after the turn and the
/// payoff it earned at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSidedTrajectoryStep {
    pub round: usize,
    pub player: TwoSidedPlayer,
    pub bid: PlayerBid,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSidedDynamicsReport {
    pub outcome: DynamicsOutcome,
    pub rounds: usize,
    /// Profile in force when the dynamics stopped.
    pub gen_bids: Vec<Bid>,
    pub consumer_bids: Vec<ConsumerBid>,
    pub trajectory: Vec<TwoSidedTrajectoryStep>,
}

fn two_sided_profile_key(gen_bids: &[Bid], con_bids: &[ConsumerBid]) -> Vec<u64> {
    gen_bids
        .iter()
        .flat_map(|b| [b.p.to_bits(), b.s.to_bits(), b.q.to_bits()])
        .chain(
            con_bids
                .iter()
                .flat_map(|b| [b.r.to_bits(), b.t.to_bits(), b.w.to_bits()]),
        )
        .collect()
}

/// Round-robin best-response dynamics over both sides, generators in index
/// order then consumers.
///
/// Each turn the player adopts its best response when that gains more than
/// the default epsilon, else keeps its bid. Halts on a full round without
/// adoptions (fixed point), on an exact revisit of an end-of-round profile
/// (cycle; the dynamics are deterministic, so the future repeats), or at
/// `max_rounds`.
pub fn best_response_dynamics_two_sided(
    scenario: &Scenario,
    init_gen: &[Bid],
    init_consumer: &[ConsumerBid],
    mech: Mechanism,
    grid: &BidGrid,
    max_rounds: usize,
) -> Result<TwoSidedDynamicsReport, DoubleSidedError> {
    scenario.validate()?;
    scenario.validate_bids(init_gen)?;
    scenario.validate_consumer_bids(init_consumer)?;
    let mut gen_bids = init_gen.to_vec();
    let mut con_bids = init_consumer.to_vec();
    let players = all_players(scenario);
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    seen.insert(two_sided_profile_key(&gen_bids, &con_bids), 0);
    let mut trajectory = Vec::new();
    for round in 1..=max_rounds {
        let mut moved = false;
        for (i, &player) in players.iter().enumerate() {
            let payoffs = current_payoffs_two_sided(scenario, &gen_bids, &con_bids, mech)?;
            let br =
                best_response_two_sided(scenario, &gen_bids, &con_bids, player, mech, grid)?;
            let (bid, payoff) = if br.payoff > payoffs[i] + tol::EPSILON {
                moved = true;
                match (player, br.bid) {
                    (TwoSidedPlayer::Generator(g), PlayerBid::Supply(b)) => gen_bids[g] = b,
                    (TwoSidedPlayer::Consumer(m), PlayerBid::Demand(b)) => con_bids[m] = b,
                    _ => unreachable!("a best response stays on its player's side"),
                }
                (br.bid, br.payoff)
            } else {
                let keep = match player {
                    TwoSidedPlayer::Generator(g) => PlayerBid::Supply(gen_bids[g]),
                    TwoSidedPlayer::Consumer(m) => PlayerBid::Demand(con_bids[m]),
                };
                (keep, payoffs[i])
            };
            trajectory.push(TwoSidedTrajectoryStep {
                round,
                player,
                bid,
                payoff,
            });
        }
        if !moved {
            return Ok(TwoSidedDynamicsReport {
                outcome: DynamicsOutcome::FixedPoint { round },
                rounds: round,
                gen_bids,
                consumer_bids: con_bids,
                trajectory,
            });
        }
        let key = two_sided_profile_key(&gen_bids, &con_bids);
        if let Some(&first) = seen.get(&key) {
            return Ok(TwoSidedDynamicsReport {
                outcome: DynamicsOutcome::Cycle {
                    first_seen_round: first,
                    period: round - first,
                },
                rounds: round,
                gen_bids,
                consumer_bids: con_bids,
                trajectory,
            });
        }
        seen.insert(key, round);
    }
    Ok(TwoSidedDynamicsReport {
        outcome: DynamicsOutcome::RoundLimit,
        rounds: max_rounds,
        gen_bids,
        consumer_bids: con_bids,
        trajectory,
    })
}
