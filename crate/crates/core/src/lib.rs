//! Market clearing for DC power networks at desk scale.
//!
//! The crate models a single-shot wholesale electricity market: an operator
//! collects supply bids, clears the network by linear programming, and pays
//! participants under one of two settlement rules (locational marginal
//! pricing, or a second-price rule based on exclusion re-solves). On top of
//! the clearing engine sit game-theoretic instruments: grid best responses,
//! equilibrium verification, best-response dynamics, equilibrium
//! constructions for uncongested and competitive networks, and price of
//! anarchy computation.
//!
//! Everything is deterministic: repeated runs on identical inputs produce
//! identical bytes. All quantities are in MW, prices in $/MWh, line
//! admittances in per-unit.

pub mod dispatch;
pub mod double_sided;
pub mod game;
pub mod lp;
pub mod model;
pub mod pnsp;
pub mod report;
pub mod tol;

pub use dispatch::{
    check_congestion_free, lmp_payoffs, solve_bid_dispatch, solve_economic_dispatch, verify_kkt,
    CongestionReport, CostBasis, DispatchError, DispatchResult, KktReport, LineFlow,
};
pub use double_sided::{
    best_response_dynamics_two_sided, best_response_two_sided, elastic_twin,
    lmp_payoffs_double_sided, pnsp_settle_double_sided, solve_double_sided,
    verify_epsilon_ne_two_sided, DoubleSidedError, DoubleSidedExclusion, DoubleSidedPayoffs,
    DoubleSidedResult, DoubleSidedSettlement, PlayerBid, TwoSidedBestResponse,
    TwoSidedDynamicsReport, TwoSidedEquilibriumReport, TwoSidedPlayer, TwoSidedTrajectoryStep,
    TwoSidedVerdict,
};
pub use game::{
    best_response, best_response_dynamics, build_example, construct_ne_congestion_free,
    construct_ne_monopoly_free, price_of_anarchy, verify_epsilon_ne, BestResponse, BidGrid,
    DynamicsOutcome, DynamicsReport, EquilibriumReport, EquilibriumVerdict, ExampleBundle,
    ExampleKind, GameError, Mechanism, NeReference, PoaEntry, PoaExclusion, PoaReport,
    TrajectoryStep,
};
pub use lp::{lex_min_duals, solve_lp, LpError, LpProblem, LpSolution, LpStatus, SolverOptions};
pub use model::{
    check_assumption1, check_monopoly_free, load_bid_profile, load_scenario, Assumption1Report,
    Bid, Consumer, ConsumerBid, CostFunction, Generator, Line, ModelError, MonopolyReport, Node,
    Scenario, Valuation,
};
pub use pnsp::{construct_pnsp_efficient_bids, pnsp_settle, PnspError, PnspSettlement};
pub use report::{
    dispatch_csv, double_sided_csv, double_sided_settlement_csv, settlement_csv, trajectory_csv,
    two_sided_trajectory_csv, ToleranceBlock,
};
