//! Strategic bidding instruments.
//!
//! Generators submit two-segment supply bids; the market clears by bid
//! dispatch and pays under one of two settlement rules. This module treats
//! the result as a game: best responses over a finite bid grid, epsilon
//! equilibrium verification with replayable refutation witnesses,
//! round-robin best-response dynamics with cycle detection, constructive
//! equilibrium profiles for the two settings where efficient equilibria are
//! guaranteed, empirical price-of-anarchy ratios, and factories for three
//! small networks that exercise each phenomenon.
//!
//! A grid verdict is evidence about the continuous game, not proof: the
//! verifier reports a *grid* epsilon equilibrium, meaning no candidate on
//! the given grid improves any single payoff by more than epsilon.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dispatch::{
    check_congestion_free, lmp_payoffs, solve_bid_dispatch, solve_bid_dispatch_quantities,
    solve_economic_dispatch, DispatchError, DispatchResult,
};
use crate::model::{
    check_assumption1, check_monopoly_free, Bid, CostFunction, Generator, Line, ModelError, Node,
    Scenario,
};
use crate::pnsp::{exclusion_cost_without, others_reported_cost, pnsp_settle, PnspError};
use crate::tol;

#[derive(Debug, Clone, Error)]
pub enum GameError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// A constructive profile did not reproduce the optimal cost.
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("no profile verified as an equilibrium: {0}")]
    NoVerifiedProfiles(String),
    #[error("invalid example parameters: {0}")]
    ExampleParams(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Settlement(#[from] PnspError),
}

/// Settlement rule defining generator payoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mechanism {
    /// Pay nodal price times quantity; payoff is revenue minus true cost.
    Lmp,
    /// Exclusion payments; payoff is the payment minus true cost.
    Pnsp,
}

impl Mechanism {
    /// Per-generator payoffs and the dispatch they settle.
    pub fn evaluate(
        self,
        scenario: &Scenario,
        bids: &[Bid],
    ) -> Result<(Vec<f64>, DispatchResult), GameError> {
        match self {
            Mechanism::Lmp => {
                let dispatch = solve_bid_dispatch(scenario, bids)?;
                let payoffs = lmp_payoffs(scenario, &dispatch);
                Ok((payoffs, dispatch))
            }
            Mechanism::Pnsp => {
                let settled = pnsp_settle(scenario, bids)?;
                Ok((settled.payoffs, settled.dispatch))
            }
        }
    }
}

/// Finite bid candidate space for search and verification.
///
/// Price candidates are the multiples of `price_step` from zero through the
/// ceiling, plus the ceiling itself. With `augment_critical` set they also
/// include every rival bid price and every true marginal-cost slope, each
/// alone and one micro-step down and up; undercutting arguments turn on
/// prices just below a rival's, and a uniform grid misses them.
///
/// Candidate bids are the linear bids `(v, 0, v)` for each price `v` plus,
/// when the quantity grid has interior points, every `(p, s, q)` with
/// `p < q` and `0 < s <` total demand. Combinations whose cost curve
/// duplicates a linear bid on the feasible range (`s = 0`, `s >=` total
/// demand, or `p = q`) are left out rather than listed twice, so the
/// lexicographic tie-break is over distinct curves. With the default
/// quantity step there are no interior quantities and the candidates are
/// exactly the linear bids.
///
/// Grids generated from zero nest under price-step halving: every coarse
/// candidate survives refinement, so the best-response payoff never drops.
#[derive(Debug, Clone, Serialize)]
pub struct BidGrid {
    pub price_step: f64,
    /// Top candidate price. Defaults to the scenario bid cap when set, else
    /// one unit above every rival price and true marginal slope.
    pub price_ceiling: Option<f64>,
    /// Spacing of quantity breakpoints; defaults to the quantity ceiling.
    pub quantity_step: Option<f64>,
    /// Top breakpoint; defaults to total demand.
    pub quantity_ceiling: Option<f64>,
    pub augment_critical: bool,
    /// Keep only linear bids even when the quantity grid has interior
    /// points; scans over profile space stay two-dimensional per player.
    pub linear_only: bool,
}

impl BidGrid {
    pub fn new(price_step: f64) -> Self {
        BidGrid {
            price_step,
            price_ceiling: None,
            quantity_step: None,
            quantity_ceiling: None,
            augment_critical: true,
            linear_only: false,
        }
    }

    /// Same grid with the price step halved; candidates strictly grow.
    pub fn halved(&self) -> Self {
        let mut g = self.clone();
        g.price_step /= 2.0;
        g
    }
}

/// Outcome of a grid search for one player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponse {
    pub bid: Bid,
    pub payoff: f64,
    /// The chosen bid prices at the top of the grid; a larger ceiling might
    /// do strictly better (a monopolist's markup is unbounded without a
    /// cap).
    pub at_price_ceiling: bool,
}

/// Equilibrium verdict for a bid profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EquilibriumVerdict {
    /// No grid deviation improves any single payoff by more than epsilon.
    /// Gains are best-response payoff minus current payoff per generator;
    /// they can be negative when the profile sits off the grid.
    GridEpsilonNe { gains: Vec<f64> },
    /// Some deviation gains more than epsilon; replaying `deviation` for
    /// `player` reproduces `gain`.
    Refuted { player: usize, deviation: Bid, gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub epsilon: f64,
    /// Payoff per generator under the profile as given.
    pub payoffs: Vec<f64>,
    pub verdict: EquilibriumVerdict,
}

impl EquilibriumReport {
    pub fn is_equilibrium(&self) -> bool {
        matches!(self.verdict, EquilibriumVerdict::GridEpsilonNe { .. })
    }
}

/// Price candidates resolved against a scenario and a rival profile.
pub(crate) struct Candidates {
    pub(crate) bids: Vec<Bid>,
    pub(crate) price_ceiling: f64,
}

/// Evenly spaced values from zero through `ceiling`, ceiling included.
pub(crate) fn axis(step: f64, ceiling: f64) -> Vec<f64> {
    let count = (ceiling / step + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=count).map(|k| (k as f64 * step).min(ceiling)).collect();
    if ceiling - out[out.len() - 1] > 1e-12 {
        out.push(ceiling);
    }
    out.dedup();
    out
}

pub(crate) fn validate_grid(grid: &BidGrid) -> Result<(), GameError> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(grid.price_step) {
        return Err(GameError::Grid("price step must be positive".into()));
    }
    for (value, name) in [
        (grid.price_ceiling, "price ceiling"),
        (grid.quantity_step, "quantity step"),
        (grid.quantity_ceiling, "quantity ceiling"),
    ] {
        if let Some(v) = value {
            if !positive(v) {
                return Err(GameError::Grid(format!("{name} must be positive")));
            }
        }
    }
    Ok(())
}

/// Price values of the grid resolved against critical prices, with the
/// resolved ceiling. The ceiling falls back from the grid to `cap` to one
/// unit above the largest critical price.
pub(crate) fn price_axis_for(
    grid: &BidGrid,
    critical: &[f64],
    cap: Option<f64>,
) -> Result<(Vec<f64>, f64), GameError> {
    validate_grid(grid)?;
    let ceiling = grid
        .price_ceiling
        .or(cap)
        .unwrap_or_else(|| critical.iter().fold(0.0_f64, |a, &v| a.max(v)) + 1.0);
    let mut prices = axis(grid.price_step, ceiling);
    if grid.augment_critical {
        for &v in critical {
            for cand in [v - tol::PRICE_MICRO_STEP, v, v + tol::PRICE_MICRO_STEP] {
                if (0.0..=ceiling).contains(&cand) {
                    prices.push(cand);
                }
            }
        }
    }
    prices.sort_by(f64::total_cmp);
    prices.dedup();
    Ok((prices, ceiling))
}

pub(crate) fn candidates_for(
    grid: &BidGrid,
    scenario: &Scenario,
    bids: &[Bid],
    player: usize,
    extra_critical: &[f64],
) -> Result<Candidates, GameError> {
    let span = scenario.total_demand();
    // Critical prices: every rival bid price and every true marginal slope
    // the dispatch objective can take.
    let mut critical: Vec<f64> = Vec::new();
    for g in &scenario.generators {
        for piece in g.cost.pieces(span.max(1.0)) {
            critical.push(piece.slope);
        }
    }
    for (m, b) in bids.iter().enumerate() {
        if m != player {
            critical.push(b.p);
            critical.push(b.q);
        }
    }
    critical.extend_from_slice(extra_critical);

    let (prices, ceiling) = price_axis_for(grid, &critical, scenario.bid_cap)?;

    let mut out: Vec<Bid> = prices.iter().map(|&v| Bid::linear(v)).collect();
    if !grid.linear_only {
        let q_ceiling = grid.quantity_ceiling.unwrap_or(span);
        let q_step = grid.quantity_step.unwrap_or(q_ceiling);
        let quantities: Vec<f64> = if q_ceiling > 0.0 {
            axis(q_step, q_ceiling)
                .into_iter()
                .filter(|&s| s > 0.0 && s < span)
                .collect()
        } else {
            Vec::new()
        };
        for (i, &p) in prices.iter().enumerate() {
            for &q in &prices[i + 1..] {
                for &s in &quantities {
                    out.push(Bid { p, s, q });
                }
            }
        }
    }
    Ok(Candidates {
        bids: out,
        price_ceiling: ceiling,
    })
}

/// Payoff of one candidate bid for one player, with rivals fixed.
enum PayoffEval {
    Lmp,
    /// Others' reported cost in the counterfactual without the player. The
    /// counterfactual ignores the player's own bid, so it is solved once
    /// and shared across every candidate.
    Pnsp { excluded_cost: f64 },
}

impl PayoffEval {
    fn prepare(
        mech: Mechanism,
        scenario: &Scenario,
        bids: &[Bid],
        player: usize,
    ) -> Result<Self, GameError> {
        match mech {
            Mechanism::Lmp => Ok(PayoffEval::Lmp),
            Mechanism::Pnsp => Ok(PayoffEval::Pnsp {
                excluded_cost: exclusion_cost_without(scenario, bids, player)?,
            }),
        }
    }

    fn payoff(&self, scenario: &Scenario, profile: &[Bid], player: usize) -> Result<f64, GameError> {
        match self {
            PayoffEval::Lmp => {
                let dispatch = solve_bid_dispatch(scenario, profile)?;
                Ok(lmp_payoffs(scenario, &dispatch)[player])
            }
            PayoffEval::Pnsp { excluded_cost } => {
                let dispatch = solve_bid_dispatch_quantities(scenario, profile)?;
                let payment = excluded_cost - others_reported_cost(profile, &dispatch.x, player);
                Ok(payment - scenario.generators[player].cost.cost(dispatch.x[player]))
            }
        }
    }
}

/// Grid bid maximizing `player`'s payoff with the other bids held fixed.
///
/// Candidates within a relative 1e-9 band of the best payoff count as tied;
/// the lexicographically smallest `(p, s, q)` among them wins, which keeps
/// search results and dynamics reproducible.
pub fn best_response(
    scenario: &Scenario,
    bids: &[Bid],
    player: usize,
    mech: Mechanism,
    grid: &BidGrid,
) -> Result<BestResponse, GameError> {
    scenario.validate()?;
    scenario.validate_bids(bids)?;
    if player >= scenario.generators.len() {
        return Err(GameError::Grid(format!(
            "player {player} out of range for {} generators",
            scenario.generators.len()
        )));
    }
    let candidates = candidates_for(grid, scenario, bids, player, &[])?;
    let eval = PayoffEval::prepare(mech, scenario, bids, player)?;
    let payoffs: Vec<f64> = candidates
        .bids
        .par_iter()
        .map(|candidate| {
            let mut profile = bids.to_vec();
            profile[player] = *candidate;
            eval.payoff(scenario, &profile, player)
        })
        .collect::<Result<_, _>>()?;

    let best = payoffs.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let band = best - 1e-9 * (1.0 + best.abs());
    let mut pick = 0usize;
    let mut picked = false;
    for (i, bid) in candidates.bids.iter().enumerate() {
        if payoffs[i] >= band && (!picked || lex_less(bid, &candidates.bids[pick])) {
            pick = i;
            picked = true;
        }
    }
    let bid = candidates.bids[pick];
    Ok(BestResponse {
        bid,
        payoff: payoffs[pick],
        at_price_ceiling: bid.q >= candidates.price_ceiling - 1e-12,
    })
}

fn lex_less(a: &Bid, b: &Bid) -> bool {
    (a.p, a.s, a.q) < (b.p, b.s, b.q)
}

/// Check a profile for unilateral grid deviations gaining more than
/// `epsilon`. Stops at the first refuting player; the witness replays.
pub fn verify_epsilon_ne(
    scenario: &Scenario,
    bids: &[Bid],
    mech: Mechanism,
    grid: &BidGrid,
    epsilon: f64,
) -> Result<EquilibriumReport, GameError> {
    let (payoffs, _) = mech.evaluate(scenario, bids)?;
    let mut gains = Vec::with_capacity(bids.len());
    for player in 0..bids.len() {
        let br = best_response(scenario, bids, player, mech, grid)?;
        let gain = br.payoff - payoffs[player];
        if gain > epsilon {
            return Ok(EquilibriumReport {
                epsilon,
                payoffs,
                verdict: EquilibriumVerdict::Refuted {
                    player,
                    deviation: br.bid,
                    gain,
                },
            });
        }
        gains.push(gain);
    }
    Ok(EquilibriumReport {
        epsilon,
        payoffs,
        verdict: EquilibriumVerdict::GridEpsilonNe { gains },
    })
}

/// One player-turn of the dynamics: the bid in force after the turn and the
/// payoff it earned at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub round: usize,
    pub generator: usize,
    pub bid: Bid,
    pub payoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DynamicsOutcome {
    /// A full round passed with no gain above epsilon: the profile is a
    /// grid epsilon equilibrium.
    FixedPoint { round: usize },
    /// The profile after `first_seen_round + period` rounds matched the one
    /// after `first_seen_round` bit for bit; the dynamics loop forever.
    Cycle { first_seen_round: usize, period: usize },
    RoundLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsReport {
    pub outcome: DynamicsOutcome,
    pub rounds: usize,
    /// Profile in force when the dynamics stopped.
    pub bids: Vec<Bid>,
    pub trajectory: Vec<TrajectoryStep>,
}

/// Round-robin best-response dynamics in generator index order.
///
/// Each turn the player adopts its best response when that gains more than
/// the default epsilon, else keeps its bid. Halts on a full round without
/// adoptions (fixed point), on an exact revisit of an end-of-round profile
/// (cycle; the dynamics are deterministic, so the future repeats), or at
/// `max_rounds`.
pub fn best_response_dynamics(
    scenario: &Scenario,
    init: &[Bid],
    mech: Mechanism,
    grid: &BidGrid,
    max_rounds: usize,
) -> Result<DynamicsReport, GameError> {
    scenario.validate()?;
    scenario.validate_bids(init)?;
    let mut bids = init.to_vec();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    seen.insert(profile_key(&bids), 0);
    let mut trajectory = Vec::new();
    for round in 1..=max_rounds {
        let mut moved = false;
        for player in 0..bids.len() {
            let (payoffs, _) = mech.evaluate(scenario, &bids)?;
            let br = best_response(scenario, &bids, player, mech, grid)?;
            let (bid, payoff) = if br.payoff > payoffs[player] + tol::EPSILON {
                moved = true;
                bids[player] = br.bid;
                (br.bid, br.payoff)
            } else {
                (bids[player], payoffs[player])
            };
            trajectory.push(TrajectoryStep {
                round,
                generator: player,
                bid,
                payoff,
            });
        }
        if !moved {
            return Ok(DynamicsReport {
                outcome: DynamicsOutcome::FixedPoint { round },
                rounds: round,
                bids,
                trajectory,
            });
        }
        let key = profile_key(&bids);
        if let Some(&first) = seen.get(&key) {
            return Ok(DynamicsReport {
                outcome: DynamicsOutcome::Cycle {
                    first_seen_round: first,
                    period: round - first,
                },
                rounds: round,
                bids,
                trajectory,
            });
        }
        seen.insert(key, round);
    }
    Ok(DynamicsReport {
        outcome: DynamicsOutcome::RoundLimit,
        rounds: max_rounds,
        bids,
        trajectory,
    })
}

fn profile_key(bids: &[Bid]) -> Vec<u64> {
    bids.iter()
        .flat_map(|b| [b.p.to_bits(), b.s.to_bits(), b.q.to_bits()])
        .collect()
}

/// Equilibrium profile for scenarios whose optimal dispatch leaves every
/// line strictly within its limit: all generators bid linear at the uniform
/// optimal price. Requires every generator to be excludable, so nobody can
/// corner the market instead.
pub fn construct_ne_congestion_free(scenario: &Scenario) -> Result<Vec<Bid>, GameError> {
    scenario.validate()?;
    let optimum = solve_economic_dispatch(scenario)?;
    let congestion = check_congestion_free(&optimum);
    if !congestion.congestion_free {
        let binding: Vec<String> = congestion
            .binding
            .iter()
            .map(|(a, b)| format!("{a}->{b}"))
            .collect();
        return Err(GameError::Precondition(format!(
            "lines at their limit in the optimal dispatch: {}",
            binding.join(", ")
        )));
    }
    let feasibility = check_assumption1(scenario)?;
    if !feasibility.holds {
        return Err(GameError::Precondition(format!(
            "no feasible dispatch without {}",
            feasibility.pivotal.join(", ")
        )));
    }
    let price = optimum.pi[0];
    if let Some(cap) = scenario.bid_cap {
        if price > cap {
            return Err(GameError::Construction(format!(
                "bid cap {cap} is below the uniform price {price}"
            )));
        }
    }
    let bids = vec![Bid::linear(price); scenario.generators.len()];
    confirm_efficient(scenario, &bids, &optimum)?;
    Ok(bids)
}

/// Equilibrium profile for scenarios where every node hosts at least two
/// generators: each generator bids linear at its node's optimal price.
pub fn construct_ne_monopoly_free(scenario: &Scenario) -> Result<Vec<Bid>, GameError> {
    scenario.validate()?;
    let competition = check_monopoly_free(scenario);
    if !competition.holds {
        return Err(GameError::Precondition(format!(
            "nodes with fewer than two generators: {}",
            competition.thin_nodes.join(", ")
        )));
    }
    let optimum = solve_economic_dispatch(scenario)?;
    let bids: Vec<Bid> = (0..scenario.generators.len())
        .map(|g| Bid::linear(optimum.pi[scenario.generator_node(g)]))
        .collect();
    if let Some(cap) = scenario.bid_cap {
        for bid in &bids {
            if bid.p > cap {
                return Err(GameError::Construction(format!(
                    "bid cap {cap} is below the nodal price {}",
                    bid.p
                )));
            }
        }
    }
    confirm_efficient(scenario, &bids, &optimum)?;
    Ok(bids)
}

/// A constructed profile must clear to the optimal true cost; anything else
/// means the scenario broke the construction's assumptions.
fn confirm_efficient(
    scenario: &Scenario,
    bids: &[Bid],
    optimum: &DispatchResult,
) -> Result<(), GameError> {
    let cleared = solve_bid_dispatch(scenario, bids)?;
    let got = scenario.true_cost(&cleared.x);
    let want = scenario.true_cost(&optimum.x);
    if (got - want).abs() > tol::GAP * (1.0 + want.abs()) {
        return Err(GameError::Construction(format!(
            "constructed bids clear to true cost {got}, optimum is {want}"
        )));
    }
    Ok(())
}

/// One verified profile's contribution to the price of anarchy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoaEntry {
    /// Index into the submitted profile list.
    pub profile: usize,
    pub true_cost: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoaExclusion {
    pub profile: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoaReport {
    /// Worst verified equilibrium true cost over the optimal true cost; a
    /// lower bound on the game's price of anarchy.
    pub ratio: f64,
    pub optimal_cost: f64,
    pub verified: Vec<PoaEntry>,
    pub excluded: Vec<PoaExclusion>,
}

/// Worst-equilibrium true cost over optimal true cost.
///
/// Each submitted profile is verified first; profiles that fail are
/// excluded with a notice rather than polluting the ratio.
pub fn price_of_anarchy(
    scenario: &Scenario,
    profiles: &[Vec<Bid>],
    mech: Mechanism,
    grid: &BidGrid,
    epsilon: f64,
) -> Result<PoaReport, GameError> {
    scenario.validate()?;
    let optimum = solve_economic_dispatch(scenario)?;
    let optimal_cost = scenario.true_cost(&optimum.x);
    if optimal_cost <= 0.0 {
        return Err(GameError::Precondition(
            "optimal cost is zero; the ratio is undefined".into(),
        ));
    }
    let mut verified = Vec::new();
    let mut excluded = Vec::new();
    for (k, profile) in profiles.iter().enumerate() {
        match verify_epsilon_ne(scenario, profile, mech, grid, epsilon) {
            Ok(report) => match report.verdict {
                EquilibriumVerdict::GridEpsilonNe { .. } => {
                    let cleared = solve_bid_dispatch(scenario, profile)?;
                    let true_cost = scenario.true_cost(&cleared.x);
                    verified.push(PoaEntry {
                        profile: k,
                        true_cost,
                        ratio: true_cost / optimal_cost,
                    });
                }
                EquilibriumVerdict::Refuted { player, gain, .. } => {
                    excluded.push(PoaExclusion {
                        profile: k,
                        reason: format!(
                            "refuted: {} gains {gain}",
                            scenario.generators[player].id
                        ),
                    });
                }
            },
            Err(e) => excluded.push(PoaExclusion {
                profile: k,
                reason: e.to_string(),
            }),
        }
    }
    if verified.is_empty() {
        return Err(GameError::NoVerifiedProfiles(
            "every submitted profile was refuted or failed to evaluate".into(),
        ));
    }
    let ratio = verified.iter().fold(f64::NEG_INFINITY, |a, e| a.max(e.ratio));
    Ok(PoaReport {
        ratio,
        optimal_cost,
        verified,
        excluded,
    })
}

/// The three bundled study networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ExampleKind {
    /// Two nodes, one congested line, one generator each side. The demand
    /// node's generator is captive for the overflow, and under a bid cap no
    /// stable profile exists: undercut until matching is unprofitable, then
    /// relent to the cap.
    CongestedDuopoly {
        capacity: f64,
        demand: f64,
        cheap_cost: f64,
        dear_cost: f64,
        bid_cap: f64,
    },
    /// Three nodes in a chain with rising costs toward the demand end and
    /// both lines congested at the optimum.
    CongestedChain {
        near_capacity: f64,
        far_capacity: f64,
        demand: f64,
        costs: [f64; 4],
    },
    /// Two nodes with two generators each and demand twice the line limit.
    /// Efficient equilibria exist, but so does one whose cost is (k+1)/2
    /// times the optimum.
    PairedDuopoly { k: f64, capacity: f64 },
}

/// A known equilibrium profile with its outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeReference {
    pub bids: Vec<Bid>,
    pub x: Vec<f64>,
    pub pi: Vec<f64>,
}

/// A bundled scenario with its reference outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleBundle {
    pub scenario: Scenario,
    /// Cost-minimizing dispatch.
    pub efficient_x: Vec<f64>,
    /// Nodal prices at the optimum.
    pub efficient_pi: Vec<f64>,
    /// A known equilibrium, for kinds that have one.
    pub ne: Option<NeReference>,
}

/// Build one of the bundled study networks, refusing parameters that break
/// its defining inequalities.
pub fn build_example(kind: ExampleKind) -> Result<ExampleBundle, GameError> {
    let bundle = match kind {
        ExampleKind::CongestedDuopoly {
            capacity,
            demand,
            cheap_cost,
            dear_cost,
            bid_cap,
        } => {
            require(capacity > 0.0, "capacity must be positive")?;
            require(demand > capacity, "demand must exceed the line capacity")?;
            require(cheap_cost >= 0.0, "costs must be nonnegative")?;
            require(
                cheap_cost < dear_cost,
                "the exporting generator must be cheaper",
            )?;
            require(bid_cap > dear_cost, "the bid cap must exceed the dear cost")?;
            let scenario = two_node_scenario(
                [0.0, demand],
                capacity,
                vec![
                    ("g1", "n1", cheap_cost),
                    ("g2", "n2", dear_cost),
                ],
                Some(bid_cap),
            );
            ExampleBundle {
                scenario,
                efficient_x: vec![capacity, demand - capacity],
                efficient_pi: vec![cheap_cost, dear_cost],
                ne: None,
            }
        }
        ExampleKind::CongestedChain {
            near_capacity,
            far_capacity,
            demand,
            costs,
        } => {
            require(near_capacity > 0.0, "capacities must be positive")?;
            require(
                far_capacity > near_capacity,
                "the far line must outsize the near line",
            )?;
            require(demand > far_capacity, "demand must exceed the far capacity")?;
            require(costs[0] >= 0.0, "costs must be nonnegative")?;
            require(
                costs.windows(2).all(|w| w[0] < w[1]),
                "costs must increase strictly along the chain",
            )?;
            let scenario = Scenario {
                nodes: vec![
                    node("n1", 0.0),
                    node("n2", 0.0),
                    node("n3", demand),
                ],
                lines: vec![
                    line("n1", "n2", near_capacity),
                    line("n2", "n3", far_capacity),
                ],
                generators: vec![
                    generator("g1", "n1", costs[0]),
                    generator("g2", "n2", costs[1]),
                    generator("g3", "n3", costs[2]),
                    generator("g4", "n3", costs[3]),
                ],
                consumers: Vec::new(),
                bid_cap: None,
            };
            ExampleBundle {
                scenario,
                efficient_x: vec![
                    near_capacity,
                    far_capacity - near_capacity,
                    demand - far_capacity,
                    0.0,
                ],
                efficient_pi: vec![costs[0], costs[1], costs[2]],
                ne: None,
            }
        }
        ExampleKind::PairedDuopoly { k, capacity } => {
            require(k > 1.0, "k must exceed 1")?;
            require(capacity > 0.0, "capacity must be positive")?;
            let scenario = two_node_scenario(
                [2.0 * capacity, 0.0],
                capacity,
                vec![
                    ("g1", "n1", 1.0),
                    ("g2", "n2", k),
                    ("g3", "n2", k),
                    ("g4", "n1", 2.0 * k),
                ],
                None,
            );
            let ne_bids = vec![
                Bid::linear(2.0 * k),
                Bid::linear(k),
                Bid::linear(k),
                Bid::linear(2.0 * k),
            ];
            ExampleBundle {
                scenario,
                efficient_x: vec![2.0 * capacity, 0.0, 0.0, 0.0],
                efficient_pi: vec![1.0, 1.0],
                ne: Some(NeReference {
                    bids: ne_bids,
                    x: vec![capacity, capacity, 0.0, 0.0],
                    pi: vec![2.0 * k, k],
                }),
            }
        }
    };
    bundle
        .scenario
        .validate()
        .map_err(|e| GameError::ExampleParams(e.to_string()))?;
    Ok(bundle)
}

fn require(ok: bool, what: &str) -> Result<(), GameError> {
    if ok {
        Ok(())
    } else {
        Err(GameError::ExampleParams(what.into()))
    }
}

fn node(id: &str, demand: f64) -> Node {
    Node {
        id: id.into(),
        demand,
    }
}

fn line(from: &str, to: &str, capacity: f64) -> Line {
    Line {
        from: from.into(),
        to: to.into(),
        admittance: 1.0,
        capacity,
    }
}

fn generator(id: &str, node: &str, slope: f64) -> Generator {
    Generator {
        id: id.into(),
        node: node.into(),
        cost: CostFunction::Linear { a: slope },
    }
}

fn two_node_scenario(
    demands: [f64; 2],
    capacity: f64,
    gens: Vec<(&str, &str, f64)>,
    bid_cap: Option<f64>,
) -> Scenario {
    Scenario {
        nodes: vec![node("n1", demands[0]), node("n2", demands[1])],
        lines: vec![line("n1", "n2", capacity)],
        generators: gens
            .into_iter()
            .map(|(id, at, slope)| generator(id, at, slope))
            .collect(),
        consumers: Vec::new(),
        bid_cap,
    }
}
