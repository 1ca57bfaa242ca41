//! Tabular renderings and the tolerance block for archived reports.
//!
//! JSON output serializes the result types directly; the helpers here
//! cover what a front end needs beyond that: CSV tables for results that
//! are naturally tabular, and a snapshot of the numeric tolerances so
//! archived results are self-describing. Tables are emitted in scenario
//! order and floats in shortest round-trip form, so equal results render
//! byte-identical.

use serde::Serialize;

use crate::dispatch::DispatchResult;
use crate::double_sided::{
    DoubleSidedPayoffs, DoubleSidedResult, DoubleSidedSettlement, PlayerBid, TwoSidedPlayer,
    TwoSidedTrajectoryStep,
};
use crate::game::TrajectoryStep;
use crate::model::Scenario;
use crate::pnsp::PnspSettlement;
use crate::tol;

/// The numeric tolerances in force when a report was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceBlock {
    pub feasibility: f64,
    pub duality_gap: f64,
    pub complementary_slackness: f64,
    pub pivot: f64,
    pub dual_pin: f64,
    pub binding_line: f64,
    pub kkt: f64,
    pub epsilon: f64,
    pub price_micro_step: f64,
    pub quantity_gap: f64,
}

impl ToleranceBlock {
    pub fn current() -> Self {
        ToleranceBlock {
            feasibility: tol::FEAS,
            duality_gap: tol::GAP,
            complementary_slackness: tol::CS,
            pivot: tol::PIVOT,
            dual_pin: tol::PIN,
            binding_line: tol::BINDING,
            kkt: tol::KKT,
            epsilon: tol::EPSILON,
            price_micro_step: tol::PRICE_MICRO_STEP,
            quantity_gap: tol::Q_GAP,
        }
    }
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for row in rows {
        w.write_record(row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf8")
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn node_rows(scenario: &Scenario, pi: &[f64]) -> Vec<Vec<String>> {
    scenario
        .nodes
        .iter()
        .zip(pi)
        .map(|(n, &price)| vec![n.id.clone(), num(n.demand), num(price)])
        .collect()
}

fn line_rows(flows: &[crate::dispatch::LineFlow]) -> Vec<Vec<String>> {
    flows
        .iter()
        .map(|f| {
            vec![
                format!("{}->{}", f.from, f.to),
                num(f.flow),
                num(f.capacity),
                num(f.mu_forward),
                num(f.mu_reverse),
            ]
        })
        .collect()
}

fn generator_rows(scenario: &Scenario, x: &[f64], pi: &[f64], payoffs: &[f64]) -> Vec<Vec<String>> {
    (0..scenario.generators.len())
        .map(|g| {
            let node = scenario.generator_node(g);
            vec![
                scenario.generators[g].id.clone(),
                scenario.nodes[node].id.clone(),
                num(x[g]),
                num(pi[node]),
                num(payoffs[g]),
            ]
        })
        .collect()
}

fn consumer_rows(scenario: &Scenario, y: &[f64], pi: &[f64], payoffs: &[f64]) -> Vec<Vec<String>> {
    (0..scenario.consumers.len())
        .map(|m| {
            let node = scenario.consumer_node(m);
            vec![
                scenario.consumers[m].id.clone(),
                scenario.nodes[node].id.clone(),
                num(y[m]),
                num(pi[node]),
                num(payoffs[m]),
            ]
        })
        .collect()
}

const NODE_HEADER: [&str; 3] = ["node", "demand", "pi"];
const GENERATOR_HEADER: [&str; 5] = ["generator", "node", "x", "pi", "payoff"];
const CONSUMER_HEADER: [&str; 5] = ["consumer", "node", "y", "pi", "payoff"];
const LINE_HEADER: [&str; 5] = ["line", "flow", "capacity", "mu_forward", "mu_reverse"];

/// Node, generator, and line tables of a dispatch, blank-line separated.
pub fn dispatch_csv(scenario: &Scenario, result: &DispatchResult, payoffs: &[f64]) -> String {
    [
        table(&NODE_HEADER, &node_rows(scenario, &result.pi)),
        table(
            &GENERATOR_HEADER,
            &generator_rows(scenario, &result.x, &result.pi, payoffs),
        ),
        table(&LINE_HEADER, &line_rows(&result.flows)),
    ]
    .join("\n")
}

/// The dispatch tables extended with consumer rows.
pub fn double_sided_csv(
    scenario: &Scenario,
    result: &DoubleSidedResult,
    payoffs: &DoubleSidedPayoffs,
) -> String {
    [
        table(&NODE_HEADER, &node_rows(scenario, &result.pi)),
        table(
            &GENERATOR_HEADER,
            &generator_rows(scenario, &result.x, &result.pi, &payoffs.generators),
        ),
        table(
            &CONSUMER_HEADER,
            &consumer_rows(scenario, &result.y, &result.pi, &payoffs.consumers),
        ),
        table(&LINE_HEADER, &line_rows(&result.flows)),
    ]
    .join("\n")
}

/// Settlement table of exclusion payments, with the total as a footer
/// section.
pub fn settlement_csv(scenario: &Scenario, settled: &PnspSettlement) -> String {
    let rows: Vec<Vec<String>> = (0..scenario.generators.len())
        .map(|g| {
            vec![
                scenario.generators[g].id.clone(),
                num(settled.dispatch.x[g]),
                num(settled.payments[g]),
                num(settled.payoffs[g]),
            ]
        })
        .collect();
    [
        table(&["generator", "x", "payment", "payoff"], &rows),
        table(&["total_payment"], &[vec![num(settled.total_payment)]]),
    ]
    .join("\n")
}

/// Two-sided settlement table. `transfer` is the payment to a supply row
/// and the charge to a demand row; `budget` is charges minus payments.
pub fn double_sided_settlement_csv(
    scenario: &Scenario,
    settled: &DoubleSidedSettlement,
) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    for g in 0..scenario.generators.len() {
        rows.push(vec![
            scenario.generators[g].id.clone(),
            "supply".into(),
            num(settled.result.x[g]),
            num(settled.generator_payments[g]),
            num(settled.generator_payoffs[g]),
        ]);
    }
    for m in 0..scenario.consumers.len() {
        rows.push(vec![
            scenario.consumers[m].id.clone(),
            "demand".into(),
            num(settled.result.y[m]),
            num(settled.consumer_charges[m]),
            num(settled.consumer_payoffs[m]),
        ]);
    }
    [
        table(
            &["participant", "side", "quantity", "transfer", "payoff"],
            &rows,
        ),
        table(&["budget"], &[vec![num(settled.budget)]]),
    ]
    .join("\n")
}

/// One row per player turn of a dynamics run.
pub fn trajectory_csv(scenario: &Scenario, steps: &[TrajectoryStep]) -> String {
    let rows: Vec<Vec<String>> = steps
        .iter()
        .map(|s| {
            vec![
                s.round.to_string(),
                scenario.generators[s.generator].id.clone(),
                num(s.bid.p),
                num(s.bid.s),
                num(s.bid.q),
                num(s.payoff),
            ]
        })
        .collect();
    table(&["round", "generator", "p", "s", "q", "payoff"], &rows)
}

/// One row per player turn of a two-sided dynamics run. Both bid shapes
/// share the column layout: first-segment slope, breakpoint, second-segment
/// slope.
pub fn two_sided_trajectory_csv(scenario: &Scenario, steps: &[TwoSidedTrajectoryStep]) -> String {
    let rows: Vec<Vec<String>> = steps
        .iter()
        .map(|s| {
            let (id, side) = match s.player {
                TwoSidedPlayer::Generator(g) => (scenario.generators[g].id.clone(), "supply"),
                TwoSidedPlayer::Consumer(m) => (scenario.consumers[m].id.clone(), "demand"),
            };
            let (a, b, c) = match s.bid {
                PlayerBid::Supply(bid) => (bid.p, bid.s, bid.q),
                PlayerBid::Demand(bid) => (bid.r, bid.t, bid.w),
            };
            vec![
                s.round.to_string(),
                id,
                side.into(),
                num(a),
                num(b),
                num(c),
                num(s.payoff),
            ]
        })
        .collect();
    table(
        &[
            "round",
            "player",
            "side",
            "first_slope",
            "breakpoint",
            "second_slope",
            "payoff",
        ],
        &rows,
    )
}
