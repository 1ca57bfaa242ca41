use super::*;
use crate::dispatch::tests::THREE_NODE_PATH;
use crate::model::load_scenario;
use crate::model::tests::{TWO_NODE_CONGESTED, TWO_NODE_PAIRED};

const ONE_NODE_DUO: &str = r#"{
  "nodes": [{"id": "n1", "demand": 1.0}],
  "lines": [],
  "generators": [
    {"id": "g1", "node": "n1", "cost": {"kind": "linear", "params": {"a": 1.0}}},
    {"id": "g2", "node": "n1", "cost": {"kind": "linear", "params": {"a": 2.0}}}
  ]
}"#;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-8
}

#[test]
fn winner_is_paid_the_displaced_rival_cost() {
    let s = load_scenario(ONE_NODE_DUO).unwrap();
    let bids = vec![Bid::linear(1.0), Bid::linear(2.0)];
    let settled = pnsp_settle(&s, &bids).unwrap();
    assert!(close(settled.dispatch.x[0], 1.0) && close(settled.dispatch.x[1], 0.0));
    // Without g1 the rival serves the unit at its bid of 2.
    assert!(close(settled.exclusions[0].x[1], 1.0));
    assert!(close(settled.payments[0], 2.0));
    assert!(close(settled.payoffs[0], 1.0));
    // g2 changes nothing for the others: zero payment, zero payoff.
    assert!(close(settled.payments[1], 0.0));
    assert!(close(settled.payoffs[1], 0.0));
    assert!(close(settled.total_payment, 2.0));
}

#[test]
fn every_exclusion_zeroes_its_own_generator() {
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    let bids = vec![
        Bid { p: 3.0, s: 1.0, q: 7.0 },
        Bid::linear(12.0),
        Bid { p: 9.0, s: 0.5, q: 15.0 },
        Bid::linear(21.0),
    ];
    let settled = pnsp_settle(&s, &bids).unwrap();
    for (n, ex) in settled.exclusions.iter().enumerate() {
        assert_eq!(ex.x[n], 0.0, "exclusion {n} kept its generator on");
        assert_eq!(ex.generator, s.generators[n].id);
    }
}

#[test]
fn payments_are_nonnegative_and_audit_reproduces_them() {
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    let bids = vec![
        Bid { p: 2.0, s: 1.5, q: 30.0 },
        Bid::linear(11.0),
        Bid::linear(10.5),
        Bid { p: 19.0, s: 1.0, q: 25.0 },
    ];
    let settled = pnsp_settle(&s, &bids).unwrap();
    for n in 0..s.generators.len() {
        assert!(
            settled.payments[n] >= -1e-9,
            "payment {n} = {}",
            settled.payments[n]
        );
        let recomputed = others_reported_cost(&bids, &settled.exclusions[n].x, n)
            - others_reported_cost(&bids, &settled.dispatch.x, n);
        assert_eq!(recomputed.to_bits(), settled.payments[n].to_bits());
    }
}

#[test]
fn settlement_refuses_when_a_generator_cannot_be_excluded() {
    // The import line carries at most 1 of the 2 MW demand, so the local
    // generator is indispensable.
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let bids = vec![Bid::linear(1.0), Bid::linear(2.0)];
    let err = pnsp_settle(&s, &bids).unwrap_err();
    match err {
        PnspError::Pivotal(who) => assert!(who.contains("g2"), "named {who}"),
        other => panic!("expected pivotal refusal, got {other}"),
    }
}

#[test]
fn constructed_bids_price_marginal_cost_at_the_optimum() {
    let s = load_scenario(THREE_NODE_PATH).unwrap();
    let bids = construct_pnsp_efficient_bids(&s).unwrap();
    let expect = [
        (1.0, 1.0, 2.0),
        (2.0, 1.0, 3.0),
        (3.0, 1.0, 4.0),
        (4.0, 0.0, 5.0),
    ];
    for (bid, (p, s_, q)) in bids.iter().zip(expect) {
        assert!(close(bid.p, p) && close(bid.s, s_) && close(bid.q, q), "{bid:?}");
    }
    let dispatched = solve_bid_dispatch(&s, &bids).unwrap();
    let true_cost: f64 = s
        .generators
        .iter()
        .zip(dispatched.x.iter())
        .map(|(g, &x)| g.cost.cost(x))
        .sum();
    assert!(close(true_cost, 6.0));
}

#[test]
fn constructed_bids_stay_efficient_on_the_paired_network() {
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    let bids = construct_pnsp_efficient_bids(&s).unwrap();
    assert!(close(bids[0].p, 1.0) && close(bids[0].s, 2.0) && close(bids[0].q, 2.0));
    assert!(close(bids[1].p, 10.0) && close(bids[1].s, 0.0) && close(bids[1].q, 11.0));
    let settled = pnsp_settle(&s, &bids).unwrap();
    assert!(close(settled.dispatch.x[0], 2.0));
    assert!(close(settled.dispatch.objective, 2.0));
    // Payment for g1: without it, one unit imports at 11 and one comes from
    // the local backstop at 21.
    assert!(close(settled.payments[0], 32.0));
    assert!(close(settled.payoffs[0], 30.0));
}

#[test]
fn construction_refuses_a_cap_below_marginal_cost() {
    // Add a cap below the dearest slope (20).
    let with_cap = TWO_NODE_PAIRED.replace("]\n}", "],\n  \"bid_cap\": 15.0\n}");
    let s = load_scenario(&with_cap).unwrap();
    assert_eq!(s.bid_cap, Some(15.0));
    let err = construct_pnsp_efficient_bids(&s).unwrap_err();
    assert!(matches!(err, PnspError::Construction(_)), "{err}");
}

#[test]
fn exclusion_cost_ignores_the_players_own_bid() {
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    let mut bids = vec![
        Bid::linear(5.0),
        Bid::linear(10.0),
        Bid::linear(10.0),
        Bid::linear(20.0),
    ];
    let before = exclusion_cost_without(&s, &bids, 0).unwrap();
    bids[0] = Bid { p: 0.5, s: 1.0, q: 99.0 };
    let after = exclusion_cost_without(&s, &bids, 0).unwrap();
    assert_eq!(before.to_bits(), after.to_bits());
}
