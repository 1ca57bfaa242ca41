//! Exclusion-payment settlement.
//!
//! The dispatch rule is the ordinary bid dispatch; the money flow changes.
//! Instead of nodal price times quantity, each generator is paid what its
//! presence saves everyone else: solve the dispatch once more with the
//! generator held at zero, and pay it the others' reported cost in that
//! counterfactual minus their reported cost in the actual dispatch. The
//! payment is nonnegative whenever the actual dispatch is optimal, a
//! generator the others never needed earns zero, and the counterfactual is
//! independent of the generator's own bid.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dispatch::{
    solve_bid_dispatch, solve_bid_dispatch_excluding, solve_economic_dispatch, DispatchError,
    DispatchResult,
};
use crate::model::{check_assumption1, Bid, ModelError, Scenario};
use crate::tol;

#[derive(Debug, Clone, Error)]
pub enum PnspError {
    /// Payments are defined through exclusion re-solves; a generator whose
    /// removal leaves no feasible dispatch has no well-defined payment.
    #[error("settlement undefined: no feasible dispatch without {0}")]
    Pivotal(String),
    /// The efficient-bid construction could not reproduce the optimal cost,
    /// or a bid cap sits below a generator's marginal cost.
    #[error("construction failed: {0}")]
    Construction(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

/// One counterfactual dispatch, kept so payments can be audited.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    /// Generator forced to zero output.
    pub generator: String,
    /// Dispatch of the others; the excluded generator's entry is zero.
    pub x: Vec<f64>,
    /// Reported cost of that dispatch.
    pub objective: f64,
}

/// A settled bid profile: dispatch, counterfactuals, payments, payoffs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PnspSettlement {
    pub dispatch: DispatchResult,
    /// One entry per generator, in generator order.
    pub exclusions: Vec<Exclusion>,
    /// Others' reported cost without the generator minus with it.
    pub payments: Vec<f64>,
    /// Payment minus the generator's true cost at its dispatched output.
    pub payoffs: Vec<f64>,
    /// Sum of payments; the scheme does not say who funds it.
    pub total_payment: f64,
}

/// Settle a bid profile under exclusion payments.
///
/// Solves the bid dispatch plus one re-solve per generator with that
/// generator held at zero. Refused when some generator cannot be excluded
/// feasibly, since its payment would be meaningless.
pub fn pnsp_settle(scenario: &Scenario, bids: &[Bid]) -> Result<PnspSettlement, PnspError> {
    scenario.validate()?;
    scenario.validate_bids(bids)?;
    let feasibility = check_assumption1(scenario)?;
    if !feasibility.holds {
        return Err(PnspError::Pivotal(feasibility.pivotal.join(", ")));
    }
    let dispatch = solve_bid_dispatch(scenario, bids)?;
    let exclusions = solve_exclusions(scenario, bids)?;

    let num = scenario.generators.len();
    let mut payments = Vec::with_capacity(num);
    let mut payoffs = Vec::with_capacity(num);
    for n in 0..num {
        let w = others_reported_cost(bids, &exclusions[n].x, n)
            - others_reported_cost(bids, &dispatch.x, n);
        payments.push(w);
        payoffs.push(w - scenario.generators[n].cost.cost(dispatch.x[n]));
    }
    let total_payment = payments.iter().sum();
    Ok(PnspSettlement {
        dispatch,
        exclusions,
        payments,
        payoffs,
        total_payment,
    })
}

/// One exclusion re-solve per generator; independent, so they run in
/// parallel and collect back in generator order.
fn solve_exclusions(scenario: &Scenario, bids: &[Bid]) -> Result<Vec<Exclusion>, PnspError> {
    (0..scenario.generators.len())
        .into_par_iter()
        .map(|n| {
            let sol = solve_bid_dispatch_excluding(scenario, bids, n).map_err(|e| match e {
                DispatchError::Infeasible(_) => {
                    PnspError::Pivotal(scenario.generators[n].id.clone())
                }
                other => PnspError::Dispatch(other),
            })?;
            debug_assert_eq!(sol.x[n], 0.0);
            Ok(Exclusion {
                generator: scenario.generators[n].id.clone(),
                x: sol.x,
                objective: sol.objective,
            })
        })
        .collect()
}

/// Reported cost of everyone except `skip` at dispatch `x`.
pub(crate) fn others_reported_cost(bids: &[Bid], x: &[f64], skip: usize) -> f64 {
    bids.iter()
        .zip(x)
        .enumerate()
        .filter(|(m, _)| *m != skip)
        .map(|(_, (b, &q))| b.cost(q))
        .sum()
}

/// Exclusion re-solve for one generator, exposed for payoff search: the
/// counterfactual without generator `n` does not depend on `n`'s own bid.
pub(crate) fn exclusion_cost_without(
    scenario: &Scenario,
    bids: &[Bid],
    n: usize,
) -> Result<f64, PnspError> {
    let sol = solve_bid_dispatch_excluding(scenario, bids, n).map_err(|e| match e {
        DispatchError::Infeasible(_) => PnspError::Pivotal(scenario.generators[n].id.clone()),
        other => PnspError::Dispatch(other),
    })?;
    Ok(others_reported_cost(bids, &sol.x, n))
}

/// Bids that make the cost-minimizing dispatch an equilibrium of the
/// exclusion-payment game: each generator offers its optimal output at its
/// marginal cost there and prices further output visibly steeper.
///
/// For generator n with optimal output x*: p is the cost slope just below
/// x* (so the bid reproduces the true cost of x* exactly), s is x*, and q is
/// the slope just above x* or p plus a unit gap, whichever is larger. With a
/// bid cap, q clamps to the cap; a cap below p is refused.
pub fn construct_pnsp_efficient_bids(scenario: &Scenario) -> Result<Vec<Bid>, PnspError> {
    scenario.validate()?;
    let feasibility = check_assumption1(scenario)?;
    if !feasibility.holds {
        return Err(PnspError::Pivotal(feasibility.pivotal.join(", ")));
    }
    let optimum = solve_economic_dispatch(scenario)?;

    let mut bids = Vec::with_capacity(scenario.generators.len());
    for (g, gen) in scenario.generators.iter().enumerate() {
        let x = optimum.x[g];
        let p = gen.cost.left_derivative(x);
        let mut q = gen.cost.right_derivative(x).max(p + tol::Q_GAP);
        if let Some(cap) = scenario.bid_cap {
            if p > cap {
                return Err(PnspError::Construction(format!(
                    "bid cap {cap} is below the marginal cost {p} of {}",
                    gen.id
                )));
            }
            q = q.min(cap);
        }
        bids.push(Bid { p, s: x, q });
    }

    let check = solve_bid_dispatch(scenario, &bids)?;
    let true_cost = scenario.true_cost(&check.x);
    let optimal_cost = scenario.true_cost(&optimum.x);
    if (true_cost - optimal_cost).abs() > tol::GAP * (1.0 + optimal_cost.abs()) {
        return Err(PnspError::Construction(format!(
            "constructed bids dispatch to true cost {true_cost}, optimum is {optimal_cost}"
        )));
    }
    Ok(bids)
}

#[cfg(test)]
mod tests;
