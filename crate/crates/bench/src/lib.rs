//! Fixture builders shared by the benchmark targets.

use gridclear_core::{load_scenario, Bid, LpProblem, Scenario};

/// Six-node ring with a chord, eight generators over all three cost shapes,
/// and demand at four nodes. Line capacities leave every single-generator
/// exclusion feasible, so settlement benchmarks run without refusal.
pub fn ring_scenario() -> Scenario {
    load_scenario(
        r#"{
          "nodes": [
            {"id": "n1", "demand": 2.0},
            {"id": "n2", "demand": 1.0},
            {"id": "n3", "demand": 0.0},
            {"id": "n4", "demand": 3.0},
            {"id": "n5", "demand": 1.0},
            {"id": "n6", "demand": 2.0}
          ],
          "lines": [
            {"from": "n1", "to": "n2", "admittance": 1.0, "capacity": 6.0},
            {"from": "n2", "to": "n3", "admittance": 1.0, "capacity": 6.0},
            {"from": "n3", "to": "n4", "admittance": 1.0, "capacity": 6.0},
            {"from": "n4", "to": "n5", "admittance": 1.0, "capacity": 6.0},
            {"from": "n5", "to": "n6", "admittance": 1.0, "capacity": 6.0},
            {"from": "n6", "to": "n1", "admittance": 1.0, "capacity": 6.0},
            {"from": "n2", "to": "n5", "admittance": 2.0, "capacity": 4.0}
          ],
          "generators": [
            {"id": "g1", "node": "n1", "cost": {"kind": "linear", "params": {"a": 1.0}}},
            {"id": "g2", "node": "n1", "cost": {"kind": "quadratic", "params": {"a": 0.5, "b": 0.25}}},
            {"id": "g3", "node": "n2", "cost": {"kind": "linear", "params": {"a": 2.0}}},
            {"id": "g4", "node": "n3", "cost": {"kind": "piecewise_linear", "params": {"points": [[0.0, 0.0], [2.0, 3.0], [5.0, 12.0]]}}},
            {"id": "g5", "node": "n4", "cost": {"kind": "linear", "params": {"a": 3.0}}},
            {"id": "g6", "node": "n4", "cost": {"kind": "quadratic", "params": {"a": 1.0, "b": 0.5}}},
            {"id": "g7", "node": "n5", "cost": {"kind": "linear", "params": {"a": 2.5}}},
            {"id": "g8", "node": "n6", "cost": {"kind": "piecewise_linear", "params": {"points": [[0.0, 0.0], [1.0, 2.0], [3.0, 8.0]]}}}
          ],
          "bid_cap": 50.0
        }"#,
    )
    .expect("fixture scenario is valid")
}

/// One linear bid per ring generator, spread over distinct prices.
pub fn ring_bids() -> Vec<Bid> {
    [1.5, 1.0, 2.5, 2.0, 3.5, 2.0, 3.0, 2.75]
        .into_iter()
        .map(Bid::linear)
        .collect()
}

/// Transportation-style LP: twelve shipment variables, six balance
/// equalities, capacity inequalities on every variable pair.
pub fn transport_lp() -> LpProblem {
    let sources = 3;
    let sinks = 4;
    let mut lp = LpProblem::new(sources * sinks);
    let supply = [5.0, 7.0, 4.0];
    let demand = [3.0, 5.0, 4.0, 4.0];
    let cost = [
        [4.0, 7.0, 3.0, 8.0],
        [6.0, 2.0, 5.0, 4.0],
        [3.0, 6.0, 7.0, 2.0],
    ];
    for s in 0..sources {
        for d in 0..sinks {
            lp.set_cost(s * sinks + d, cost[s][d]);
        }
    }
    for (s, &cap) in supply.iter().enumerate() {
        let mut row = vec![0.0; sources * sinks];
        for d in 0..sinks {
            row[s * sinks + d] = 1.0;
        }
        lp.add_inequality(row, cap, format!("supply:{s}"));
    }
    for (d, &need) in demand.iter().enumerate() {
        let mut row = vec![0.0; sources * sinks];
        for s in 0..sources {
            row[s * sinks + d] = 1.0;
        }
        lp.add_equality(row, need, format!("demand:{d}"));
    }
    for s in 0..sources {
        for d in 0..sinks {
            let mut row = vec![0.0; sources * sinks];
            row[s * sinks + d] = 1.0;
            lp.add_inequality(row, 4.5, format!("edge:{s}:{d}"));
        }
    }
    lp
}
