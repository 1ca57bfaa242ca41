use super::*;
use proptest::prelude::*;

pub(crate) const TWO_NODE_CONGESTED: &str = r#"{
  "nodes": [{"id": "n1", "demand": 0.0}, {"id": "n2", "demand": 2.0}],
  "lines": [{"from": "n1", "to": "n2", "admittance": 1.0, "capacity": 1.0}],
  "generators": [
    {"id": "g1", "node": "n1", "cost": {"kind": "linear", "params": {"a": 1.0}}},
    {"id": "g2", "node": "n2", "cost": {"kind": "linear", "params": {"a": 2.0}}}
  ],
  "bid_cap": 10.0
}"#;

pub(crate) const TWO_NODE_PAIRED: &str = r#"{
  "nodes": [{"id": "n1", "demand": 2.0}, {"id": "n2", "demand": 0.0}],
  "lines": [{"from": "n1", "to": "n2", "admittance": 1.0, "capacity": 1.0}],
  "generators": [
    {"id": "g1", "node": "n1", "cost": {"kind": "linear", "params": {"a": 1.0}}},
    {"id": "g2", "node": "n2", "cost": {"kind": "linear", "params": {"a": 10.0}}},
    {"id": "g3", "node": "n2", "cost": {"kind": "linear", "params": {"a": 10.0}}},
    {"id": "g4", "node": "n1", "cost": {"kind": "linear", "params": {"a": 20.0}}}
  ]
}"#;

#[test]
fn scenario_round_trips_through_json() {
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let text = serde_json::to_string(&s).unwrap();
    let again = load_scenario(&text).unwrap();
    assert_eq!(s, again);
}

#[test]
fn negative_demand_is_rejected() {
    let text = TWO_NODE_CONGESTED.replace("\"demand\": 2.0", "\"demand\": -1.0");
    let err = load_scenario(&text).unwrap_err();
    assert!(matches!(err, ModelError::Invalid(_)), "{err}");
}

#[test]
fn disconnected_graph_is_rejected() {
    let text = r#"{
      "nodes": [{"id": "a", "demand": 0.0}, {"id": "b", "demand": 1.0}],
      "lines": [],
      "generators": [
        {"id": "g1", "node": "a", "cost": {"kind": "linear", "params": {"a": 1.0}}},
        {"id": "g2", "node": "b", "cost": {"kind": "linear", "params": {"a": 1.0}}}
      ]
    }"#;
    assert!(matches!(
        load_scenario(text).unwrap_err(),
        ModelError::Invalid(_)
    ));
}

#[test]
fn duplicate_line_is_rejected() {
    let text = r#"{
      "nodes": [{"id": "a", "demand": 0.0}, {"id": "b", "demand": 1.0}],
      "lines": [
        {"from": "a", "to": "b", "admittance": 1.0, "capacity": 1.0},
        {"from": "b", "to": "a", "admittance": 2.0, "capacity": 1.0}
      ],
      "generators": [
        {"id": "g1", "node": "a", "cost": {"kind": "linear", "params": {"a": 1.0}}},
        {"id": "g2", "node": "b", "cost": {"kind": "linear", "params": {"a": 1.0}}}
      ]
    }"#;
    assert!(matches!(
        load_scenario(text).unwrap_err(),
        ModelError::Invalid(_)
    ));
}

#[test]
fn concave_cost_polyline_is_rejected() {
    let bad = CostFunction::PiecewiseLinear {
        points: vec![[0.0, 0.0], [1.0, 5.0], [2.0, 6.0]],
    };
    assert!(bad.validate().is_err());
    let good = CostFunction::PiecewiseLinear {
        points: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 5.0]],
    };
    assert!(good.validate().is_ok());
}

#[test]
fn bid_cost_matches_the_two_segment_formula() {
    let bid = Bid { p: 2.0, s: 1.0, q: 5.0 };
    assert_eq!(bid.cost(1.0), 2.0);
    assert_eq!(bid.cost(2.0), 7.0);
    let flat = Bid { p: 3.0, s: 0.0, q: 3.0 };
    assert_eq!(flat.cost(4.0), 12.0);
}

#[test]
fn bid_validation_enforces_ordering_and_cap() {
    assert!(Bid { p: 2.0, s: 1.0, q: 1.0 }.validate(None).is_err());
    assert!(Bid { p: -1.0, s: 0.0, q: 1.0 }.validate(None).is_err());
    assert!(Bid { p: 1.0, s: 0.0, q: 11.0 }.validate(Some(10.0)).is_err());
    assert!(Bid { p: 1.0, s: 0.0, q: 10.0 }.validate(Some(10.0)).is_ok());
}

proptest! {
    #[test]
    fn bid_cost_is_convex_and_zero_at_zero(
        p in 0.0..50.0f64,
        extra in 0.0..50.0f64,
        s in 0.0..20.0f64,
        x1 in 0.0..40.0f64,
        dx in 1e-6..40.0f64,
    ) {
        let bid = Bid { p, s, q: p + extra };
        prop_assert!(bid.cost(0.0).abs() < 1e-12);
        // Chord slopes never decrease as the interval moves right.
        let x2 = x1 + dx;
        let x3 = x2 + dx;
        let s1 = (bid.cost(x2) - bid.cost(x1)) / dx;
        let s2 = (bid.cost(x3) - bid.cost(x2)) / dx;
        prop_assert!(s2 >= s1 - 1e-9);
    }

    #[test]
    fn consumer_bid_value_is_concave(
        w in 0.0..30.0f64,
        extra in 0.0..30.0f64,
        t in 0.0..20.0f64,
        x1 in 0.0..40.0f64,
        dx in 1e-6..40.0f64,
    ) {
        let bid = ConsumerBid { r: w + extra, t, w };
        prop_assert!(bid.value(0.0).abs() < 1e-12);
        let x2 = x1 + dx;
        let x3 = x2 + dx;
        let s1 = (bid.value(x2) - bid.value(x1)) / dx;
        let s2 = (bid.value(x3) - bid.value(x2)) / dx;
        prop_assert!(s2 <= s1 + 1e-9);
    }
}

#[test]
fn quadratic_pieces_reproduce_the_curve_at_grid_points() {
    let cost = CostFunction::Quadratic { a: 1.0, b: 0.5 };
    let span = 8.0;
    let pieces = cost.pieces(span);
    assert_eq!(pieces.len(), QUAD_SEGMENTS + 1);
    let step = span / QUAD_SEGMENTS as f64;
    let mut acc = 0.0;
    for (k, piece) in pieces[..QUAD_SEGMENTS].iter().enumerate() {
        acc += piece.slope * piece.width;
        let t = (k + 1) as f64 * step;
        assert!(
            (acc - cost.cost(t)).abs() < 1e-9,
            "chord sum diverged at t={t}: {acc} vs {}",
            cost.cost(t)
        );
    }
    // Convex compilation: slopes never decrease.
    for w in pieces.windows(2) {
        assert!(w[1].slope >= w[0].slope - 1e-12);
    }
}

#[test]
fn quadratic_valuation_plateaus_at_its_peak() {
    let v = Valuation::Quadratic { r: 4.0, d: 1.0 };
    // Peak at y = 2 with value 4; beyond it the curve must not decline.
    assert!((v.value(2.0) - 4.0).abs() < 1e-12);
    assert!((v.value(3.0) - 4.0).abs() < 1e-12);
    assert!((v.value(1.0) - 3.0).abs() < 1e-12);
}

#[test]
fn polyline_derivatives_split_at_the_kink() {
    let cost = CostFunction::PiecewiseLinear {
        points: vec![[0.0, 0.0], [2.0, 2.0], [4.0, 6.0]],
    };
    assert_eq!(cost.left_derivative(2.0), 1.0);
    assert_eq!(cost.right_derivative(2.0), 2.0);
    assert_eq!(cost.left_derivative(0.0), 1.0);
    assert_eq!(cost.right_derivative(5.0), 2.0);
    assert_eq!(cost.cost(5.0), 8.0);
}

#[test]
fn monopoly_check_requires_two_generators_everywhere() {
    let paired = load_scenario(TWO_NODE_PAIRED).unwrap();
    assert!(check_monopoly_free(&paired).holds);

    let single = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let report = check_monopoly_free(&single);
    assert!(!report.holds);
    assert_eq!(report.thin_nodes, vec!["n1".to_string(), "n2".to_string()]);
}

#[test]
fn exclusion_feasibility_flags_the_pivotal_generator() {
    // Demand of 2 behind a capacity-1 line: the local generator is pivotal.
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let report = check_assumption1(&s).unwrap();
    assert!(!report.holds);
    assert_eq!(report.pivotal, vec!["g2".to_string()]);

    let paired = load_scenario(TWO_NODE_PAIRED).unwrap();
    let report = check_assumption1(&paired).unwrap();
    assert!(report.holds, "pivotal: {:?}", report.pivotal);
}

#[test]
fn sole_supplier_on_one_node_is_pivotal() {
    let text = r#"{
      "nodes": [{"id": "n1", "demand": 1.0}],
      "lines": [],
      "generators": [
        {"id": "g1", "node": "n1", "cost": {"kind": "linear", "params": {"a": 1.0}}}
      ]
    }"#;
    let s = load_scenario(text).unwrap();
    let report = check_assumption1(&s).unwrap();
    assert!(!report.holds);
    assert_eq!(report.pivotal, vec!["g1".to_string()]);
}

#[test]
fn paired_generators_imply_exclusion_feasibility() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let n = rng.gen_range(2..=4usize);
        let mut nodes = Vec::new();
        let mut generators = Vec::new();
        for i in 0..n {
            nodes.push(Node {
                id: format!("n{i}"),
                demand: rng.gen_range(0.0..5.0),
            });
            for dup in 0..2 {
                generators.push(Generator {
                    id: format!("g{i}_{dup}"),
                    node: format!("n{i}"),
                    cost: CostFunction::Linear {
                        a: rng.gen_range(1.0..10.0),
                    },
                });
            }
        }
        // A path keeps the graph connected; generous capacities.
        let lines = (1..n)
            .map(|i| Line {
                from: format!("n{}", i - 1),
                to: format!("n{i}"),
                admittance: 1.0,
                capacity: 100.0,
            })
            .collect();
        let s = Scenario {
            nodes,
            lines,
            generators,
            consumers: Vec::new(),
            bid_cap: None,
        };
        s.validate().unwrap();
        assert!(check_monopoly_free(&s).holds);
        let report = check_assumption1(&s).unwrap();
        assert!(report.holds, "pivotal: {:?}", report.pivotal);
    }
}

#[test]
fn helper_lookups_resolve_positions() {
    let s = load_scenario(TWO_NODE_PAIRED).unwrap();
    assert_eq!(s.node_index("n2"), Some(1));
    assert_eq!(s.generator_index("g3"), Some(2));
    assert_eq!(s.generator_node(3), 0);
    assert_eq!(s.generators_by_node(), vec![vec![0, 3], vec![1, 2]]);
    assert_eq!(s.total_demand(), 2.0);
    assert_eq!(s.max_marginal_cost(), 20.0);
}

const TINY_MARKET: &str = r#"{
  "nodes": [{"id": "n1", "demand": 0.0}],
  "lines": [],
  "generators": [
    {"id": "g1", "node": "n1", "cost": {"kind": "linear", "params": {"a": 1.0}}}
  ],
  "consumers": [
    {"id": "c1", "node": "n1", "valuation": {"kind": "linear", "params": {"r": 5.0}}}
  ]
}"#;

#[test]
fn bid_document_array_fills_defaults_in_scenario_order() {
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let (bids, consumer_bids) = load_bid_profile(
        r#"[
          {"generator": "g2", "p": 2.0},
          {"generator": "g1", "p": 1.0, "s": 0.5, "q": 3.0}
        ]"#,
        &s,
    )
    .unwrap();
    assert_eq!(
        bids,
        vec![
            Bid { p: 1.0, s: 0.5, q: 3.0 },
            Bid { p: 2.0, s: 0.0, q: 2.0 },
        ]
    );
    assert!(consumer_bids.is_empty());
}

#[test]
fn bid_document_object_carries_both_sides() {
    let s = load_scenario(TINY_MARKET).unwrap();
    let (bids, consumer_bids) = load_bid_profile(
        r#"{
          "generators": [{"generator": "g1", "p": 1.0}],
          "consumers": [{"consumer": "c1", "r": 5.0, "t": 3.0}]
        }"#,
        &s,
    )
    .unwrap();
    assert_eq!(bids, vec![Bid { p: 1.0, s: 0.0, q: 1.0 }]);
    assert_eq!(consumer_bids, vec![ConsumerBid { r: 5.0, t: 3.0, w: 0.0 }]);
}

#[test]
fn bid_document_refuses_unknown_duplicate_and_missing_ids() {
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    for (text, needle) in [
        (r#"[{"generator": "gX", "p": 1.0}, {"generator": "g2", "p": 1.0}]"#, "no generator 'gX'"),
        (r#"[{"generator": "g1", "p": 1.0}, {"generator": "g1", "p": 2.0}]"#, "duplicate bid for generator 'g1'"),
        (r#"[{"generator": "g1", "p": 1.0}]"#, "no bid for generator 'g2'"),
    ] {
        let err = load_bid_profile(text, &s).unwrap_err();
        assert!(matches!(err, ModelError::InvalidBid(_)), "{err}");
        assert!(err.to_string().contains(needle), "{err}");
    }
}

#[test]
fn bid_document_entries_are_validated_against_the_scenario() {
    let s = load_scenario(TWO_NODE_CONGESTED).unwrap();
    let inverted = r#"[{"generator": "g1", "p": 3.0, "q": 1.0}, {"generator": "g2", "p": 2.0}]"#;
    assert!(load_bid_profile(inverted, &s).is_err());
    let above_cap = r#"[{"generator": "g1", "p": 11.0}, {"generator": "g2", "p": 2.0}]"#;
    assert!(load_bid_profile(above_cap, &s).is_err());
}

#[test]
fn bid_document_array_shape_cannot_cover_consumers() {
    let s = load_scenario(TINY_MARKET).unwrap();
    let err = load_bid_profile(r#"[{"generator": "g1", "p": 1.0}]"#, &s).unwrap_err();
    assert!(err.to_string().contains("no bid for consumer 'c1'"), "{err}");
}
