use super::*;
use crate::model::load_scenario;
use crate::model::tests::{TWO_NODE_CONGESTED, TWO_NODE_PAIRED};

pub(crate) const THREE_NODE_PATH: &str = r#"{
  "nodes": [
    {"id": "n1", "demand": 0.0},
    {"id": "n2", "demand": 0.0},
    {"id": "n3", "demand": 3.0}
  ],
  "lines": [
    {"from": "n1", "to": "n2", "admittance": 1.0, "capacity": 1.0},
    {"from": "n2", "to": "n3", "admittance": 1.0, "capacity": 2.0}
  ],
  "generators": [
    {"id": "g1", "node": "n1", "cost": {"kind": "linear", "params": {"a": 1.0}}},
    {"id": "g2", "node": "n2", "cost": {"kind": "linear", "params": {"a": 2.0}}},
    {"id": "g3", "node": "n3", "cost": {"kind": "linear", "params": {"a": 3.0}}},
    {"id": "g4", "node": "n3", "cost": {"kind": "linear", "params": {"a": 4.0}}}
  ]
}"#;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-8
}

#[test]
fn congested_two_node_dispatch_splits_at_the_line_limit() {
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let r = solve_economic_dispatch(&s).unwrap();
    assert!(close(r.x[0], 1.0) && close(r.x[1], 1.0), "x = {:?}", r.x);
    assert!(close(r.objective, 3.0));
    assert!(close(r.pi[0], 1.0) && close(r.pi[1], 2.0), "pi = {:?}", r.pi);
    assert_eq!(r.theta[0], 0.0);
    // The single line runs at capacity toward the demand node; its
    // multiplier carries the price gap.
    assert!(close(r.flows[0].flow, 1.0));
    assert!(close(r.flows[0].mu_forward, 1.0));
    assert!(close(r.flows[0].mu_reverse, 0.0));
    assert!(!check_congestion_free(&r).congestion_free);
}

#[test]
fn raising_capacity_uncongests_and_unifies_prices() {
    let text = TWO_NODE_CONGESTED.replace("\"capacity\": 1.0", "\"capacity\": 10.0");
    let s = load_scenario(&text).unwrap();
    let r = solve_economic_dispatch(&s).unwrap();
    assert!(close(r.x[0], 2.0) && close(r.x[1], 0.0), "x = {:?}", r.x);
    assert!(close(r.pi[0], 1.0) && close(r.pi[1], 1.0), "pi = {:?}", r.pi);
    let report = check_congestion_free(&r);
    assert!(report.congestion_free, "binding: {:?}", report.binding);
}

#[test]
fn three_node_path_stacks_generators_in_merit_order() {
    let s = load_scenario(THREE_NODE_PATH).unwrap();
    let r = solve_economic_dispatch(&s).unwrap();
    let want = [1.0, 1.0, 1.0, 0.0];
    for (g, w) in want.iter().enumerate() {
        assert!(close(r.x[g], *w), "x = {:?}", r.x);
    }
    assert!(close(r.objective, 6.0));
    assert!(
        close(r.pi[0], 1.0) && close(r.pi[1], 2.0) && close(r.pi[2], 3.0),
        "pi = {:?}",
        r.pi
    );
    let kkt = verify_kkt(&s, CostBasis::TrueCost, &r);
    assert!(kkt.ok, "{kkt:?}");
}

#[test]
fn paired_two_node_dispatch_serves_demand_locally() {
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    let r = solve_economic_dispatch(&s).unwrap();
    let want = [2.0, 0.0, 0.0, 0.0];
    for (g, w) in want.iter().enumerate() {
        assert!(close(r.x[g], *w), "x = {:?}", r.x);
    }
    assert!(close(r.objective, 2.0));
    // The line is slack, so network stationarity forces equal prices.
    assert!(close(r.pi[0], 1.0) && close(r.pi[1], 1.0), "pi = {:?}", r.pi);
    assert!(check_congestion_free(&r).congestion_free);
}

#[test]
fn bid_dispatch_reproduces_truthful_linear_outcome() {
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let bids = [Bid::linear(1.0), Bid::linear(2.0)];
    let r = solve_bid_dispatch(&s, &bids).unwrap();
    assert!(close(r.x[0], 1.0) && close(r.x[1], 1.0));
    assert!(close(r.pi[0], 1.0) && close(r.pi[1], 2.0));
    let kkt = verify_kkt(&s, CostBasis::Bids(&bids), &r);
    assert!(kkt.ok, "{kkt:?}");
}

#[test]
fn tied_bid_dispatch_breaks_ties_toward_earlier_generators() {
    // Both nodes tie internally (20, 20) and (10, 10); the tie-break hands
    // production to the earlier generator at each node.
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    let bids = [
        Bid::linear(20.0),
        Bid::linear(10.0),
        Bid::linear(10.0),
        Bid::linear(20.0),
    ];
    let r = solve_bid_dispatch(&s, &bids).unwrap();
    let want = [1.0, 1.0, 0.0, 0.0];
    for (g, w) in want.iter().enumerate() {
        assert!(close(r.x[g], *w), "x = {:?}", r.x);
    }
    assert!(close(r.pi[0], 20.0) && close(r.pi[1], 10.0), "pi = {:?}", r.pi);
    assert!(close(r.objective, 30.0));
    let kkt = verify_kkt(&s, CostBasis::Bids(&bids), &r);
    assert!(kkt.ok, "{kkt:?}");
}

#[test]
fn lex_passes_are_bit_deterministic() {
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    let bids = [
        Bid::linear(20.0),
        Bid::linear(10.0),
        Bid::linear(10.0),
        Bid::linear(20.0),
    ];
    let a = solve_bid_dispatch(&s, &bids).unwrap();
    let b = solve_bid_dispatch(&s, &bids).unwrap();
    for (u, v) in a.x.iter().zip(b.x.iter()) {
        assert_eq!(u.to_bits(), v.to_bits());
    }
    for (u, v) in a.pi.iter().zip(b.pi.iter()) {
        assert_eq!(u.to_bits(), v.to_bits());
    }
}

#[test]
fn zero_bids_clear_at_zero_cost() {
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let bids = [Bid::linear(0.0), Bid::linear(0.0)];
    let r = solve_bid_dispatch(&s, &bids).unwrap();
    assert!(close(r.objective, 0.0));
    let total: f64 = r.x.iter().sum();
    assert!(close(total, 2.0));
}

#[test]
fn two_segment_bids_fill_the_cheap_segment_first() {
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let bids = [
        Bid { p: 1.0, s: 0.5, q: 3.0 },
        Bid { p: 2.0, s: 2.0, q: 2.0 },
    ];
    let r = solve_bid_dispatch(&s, &bids).unwrap();
    let split = r.x_split.as_ref().unwrap();
    for ((xp, xq), bid) in split.iter().zip(bids.iter()) {
        assert!(*xp <= bid.s + 1e-10);
        assert!(*xp >= 0.0 && *xq >= 0.0);
        if *xq > 1e-8 {
            assert!(*xp >= bid.s - 1e-8, "cheap segment must fill first");
        }
    }
    let kkt = verify_kkt(&s, CostBasis::Bids(&bids), &r);
    assert!(kkt.ok, "{kkt:?}");
}

#[test]
fn tampered_prices_fail_generator_stationarity() {
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let mut r = solve_economic_dispatch(&s).unwrap();
    r.pi = vec![1.0, 1.0];
    // Zero out the line multiplier so only the generator family trips.
    for f in &mut r.flows {
        f.mu_forward = 0.0;
        f.mu_reverse = 0.0;
    }
    let kkt = verify_kkt(&s, CostBasis::TrueCost, &r);
    assert!(!kkt.ok);
    assert!((kkt.generator_stationarity - 1.0).abs() < 1e-9, "{kkt:?}");
}

#[test]
fn payoffs_use_true_costs_at_nodal_prices() {
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    let bids = [
        Bid::linear(20.0),
        Bid::linear(10.0),
        Bid::linear(10.0),
        Bid::linear(20.0),
    ];
    let r = solve_bid_dispatch(&s, &bids).unwrap();
    let u = lmp_payoffs(&s, &r);
    // Gen 1 sells 1 MW at 20 against true cost 1.
    assert!(close(u[0], 19.0), "u = {u:?}");
    // Gen 2 sells at its own true marginal cost.
    assert!(close(u[1], 0.0));
    // Idle generators earn nothing.
    assert!(close(u[2], 0.0) && close(u[3], 0.0));
}

#[test]
fn infeasible_dispatch_names_the_short_node() {
    let text = r#"{
      "nodes": [{"id": "n1", "demand": 0.0}, {"id": "hungry", "demand": 5.0}],
      "lines": [{"from": "n1", "to": "hungry", "admittance": 1.0, "capacity": 1.0}],
      "generators": [
        {"id": "g1", "node": "n1", "cost": {"kind": "linear", "params": {"a": 1.0}}}
      ]
    }"#;
    let s = load_scenario(text).unwrap();
    let err = solve_economic_dispatch(&s).unwrap_err();
    match err {
        DispatchError::Infeasible(detail) => {
            assert!(detail.contains("hungry"), "detail: {detail}");
        }
        other => panic!("expected infeasibility, got {other}"),
    }
}

#[test]
fn quadratic_costs_dispatch_through_linearization() {
    let text = r#"{
      "nodes": [{"id": "n1", "demand": 4.0}],
      "lines": [],
      "generators": [
        {"id": "ga", "node": "n1", "cost": {"kind": "quadratic", "params": {"a": 1.0, "b": 0.5}}},
        {"id": "gb", "node": "n1", "cost": {"kind": "quadratic", "params": {"a": 1.0, "b": 0.5}}}
      ]
    }"#;
    let s = load_scenario(text).unwrap();
    let r = solve_economic_dispatch(&s).unwrap();
    // Identical convex curves split the load evenly; marginal cost at the
    // split prices the node.
    assert!((r.x[0] - 2.0).abs() < 1e-6, "x = {:?}", r.x);
    assert!((r.x[1] - 2.0).abs() < 1e-6);
    assert!((r.pi[0] - 3.0).abs() < 0.05, "pi = {:?}", r.pi);
    let kkt = verify_kkt(&s, CostBasis::TrueCost, &r);
    assert!(kkt.ok, "{kkt:?}");
}

#[test]
fn capacity_increase_never_raises_the_objective() {
    let base = load_scenario(THREE_NODE_PATH).unwrap();
    let mut last = f64::INFINITY;
    for cap in [1.0, 1.5, 2.0, 3.0, 10.0] {
        let mut s = base.clone();
        s.lines[0].capacity = cap;
        let r = solve_economic_dispatch(&s).unwrap();
        assert!(
            r.objective <= last + 1e-9,
            "objective rose from {last} to {} at cap {cap}",
            r.objective
        );
        last = r.objective;
    }
}

#[test]
fn piece_derivative_intervals_straddle_breakpoints() {
    let bid = Bid { p: 2.0, s: 1.0, q: 5.0 };
    let pieces = bid.pieces();
    assert_eq!(piece_derivatives(&pieces, 0.5), (2.0, 2.0));
    assert_eq!(piece_derivatives(&pieces, 1.0), (2.0, 5.0));
    assert_eq!(piece_derivatives(&pieces, 2.0), (5.0, 5.0));
    assert_eq!(piece_derivatives(&pieces, 0.0), (2.0, 2.0));
}

#[test]
fn excluded_generator_stays_at_zero() {
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    let bids = [
        Bid::linear(1.0),
        Bid::linear(10.0),
        Bid::linear(10.0),
        Bid::linear(20.0),
    ];
    let r = solve_bid_dispatch_excluding(&s, &bids, 0).unwrap();
    assert_eq!(r.x[0], 0.0);
    // Without the cheap generator, the import line saturates and the rest
    // falls to the expensive local unit.
    assert!(close(r.x[3], 1.0), "x = {:?}", r.x);
    assert!(close(r.x[1], 1.0), "x = {:?}", r.x);
}
