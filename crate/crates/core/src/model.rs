//! Network scenarios, cost curves, bids, and structural market conditions.
//!
//! A [`Scenario`] is the immutable input to everything else: nodes with
//! inelastic demand, lines with admittance and capacity, generators with true
//! cost curves, and optionally elastic consumers with valuation curves.
//! Scenarios load from JSON and are fully validated at load time so the
//! solvers can assume well-formed data.
//!
//! Units are fixed throughout: power in MW, prices in $/MWh, admittance in
//! per-unit.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::lp::{solve_lp, LpProblem, LpStatus, SolverOptions};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ModelError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid bid: {0}")]
    InvalidBid(String),
    #[error("structural check failed to solve: {0}")]
    Solver(String),
}

/// One linear-cost piece of a compiled curve. `width` may be infinite for
/// the final piece.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Piece {
    pub slope: f64,
    pub width: f64,
}

/// Segment count used when a smooth quadratic curve is compiled to
/// piecewise-linear form for the dispatch LP.
pub(crate) const QUAD_SEGMENTS: usize = 64;

/// True generation cost, convex and nondecreasing with `c(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum CostFunction {
    /// `c(x) = a x`
    Linear { a: f64 },
    /// `c(x) = a x + b x^2` with `b >= 0`
    Quadratic { a: f64, b: f64 },
    /// Convex polyline through `points` (first point must be the origin);
    /// extended beyond the last point with its final slope.
    PiecewiseLinear { points: Vec<[f64; 2]> },
}

impl CostFunction {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            CostFunction::Linear { a } => {
                if !a.is_finite() || *a < 0.0 {
                    return Err(ModelError::Invalid(format!(
                        "linear cost slope must be finite and nonnegative, got {a}"
                    )));
                }
            }
            CostFunction::Quadratic { a, b } => {
                if !a.is_finite() || !b.is_finite() || *a < 0.0 || *b < 0.0 {
                    return Err(ModelError::Invalid(format!(
                        "quadratic cost needs finite a >= 0 and b >= 0, got a={a}, b={b}"
                    )));
                }
            }
            CostFunction::PiecewiseLinear { points } => {
                validate_polyline(points, Monotone::NonDecreasing)
                    .map_err(|m| ModelError::Invalid(format!("piecewise cost: {m}")))?;
            }
        }
        Ok(())
    }

    pub fn cost(&self, x: f64) -> f64 {
        debug_assert!(x >= -1e-9, "cost evaluated at negative quantity {x}");
        let x = x.max(0.0);
        match self {
            CostFunction::Linear { a } => a * x,
            CostFunction::Quadratic { a, b } => a * x + b * x * x,
            CostFunction::PiecewiseLinear { points } => eval_polyline(points, x),
        }
    }

    /// Slope just below `x` (at 0, the slope just above).
    pub fn left_derivative(&self, x: f64) -> f64 {
        match self {
            CostFunction::Linear { a } => *a,
            CostFunction::Quadratic { a, b } => a + 2.0 * b * x.max(0.0),
            CostFunction::PiecewiseLinear { points } => polyline_slope(points, x, Side::Left),
        }
    }

    /// Slope just above `x`.
    pub fn right_derivative(&self, x: f64) -> f64 {
        match self {
            CostFunction::Linear { a } => *a,
            CostFunction::Quadratic { a, b } => a + 2.0 * b * x.max(0.0),
            CostFunction::PiecewiseLinear { points } => polyline_slope(points, x, Side::Right),
        }
    }

    /// Compile to linear pieces covering at least `[0, span]`, with slopes
    /// nondecreasing so independent segment variables fill in order.
    pub(crate) fn pieces(&self, span: f64) -> Vec<Piece> {
        match self {
            CostFunction::Linear { a } => vec![Piece {
                slope: *a,
                width: f64::INFINITY,
            }],
            CostFunction::Quadratic { a, b } => {
                if *b == 0.0 {
                    return vec![Piece {
                        slope: *a,
                        width: f64::INFINITY,
                    }];
                }
                let span = span.max(1e-9);
                let step = span / QUAD_SEGMENTS as f64;
                let mut out = Vec::with_capacity(QUAD_SEGMENTS + 1);
                for k in 0..QUAD_SEGMENTS {
                    let t0 = k as f64 * step;
                    let t1 = t0 + step;
                    // Chord slope of a x + b x^2 between t0 and t1.
                    out.push(Piece {
                        slope: a + b * (t0 + t1),
                        width: step,
                    });
                }
                // Guard piece so rounding past the span cannot lose
                // feasibility; its slope continues the curve's right edge.
                out.push(Piece {
                    slope: a + 2.0 * b * span,
                    width: f64::INFINITY,
                });
                out
            }
            CostFunction::PiecewiseLinear { points } => {
                let mut out = Vec::with_capacity(points.len());
                for w in points.windows(2) {
                    out.push(Piece {
                        slope: (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]),
                        width: w[1][0] - w[0][0],
                    });
                }
                let tail = polyline_slope(points, points[points.len() - 1][0], Side::Right);
                out.push(Piece {
                    slope: tail,
                    width: f64::INFINITY,
                });
                out
            }
        }
    }
}

/// True consumption value, concave and nondecreasing with `v(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Valuation {
    /// `v(y) = r y`
    Linear { r: f64 },
    /// `v(y) = r y - d y^2` with `d >= 0`; flat past its peak `r / 2d`.
    Quadratic { r: f64, d: f64 },
    /// Concave polyline through `points` (first point must be the origin);
    /// extended beyond the last point with its final slope.
    PiecewiseLinear { points: Vec<[f64; 2]> },
}

impl Valuation {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Valuation::Linear { r } => {
                if !r.is_finite() || *r < 0.0 {
                    return Err(ModelError::Invalid(format!(
                        "linear valuation slope must be finite and nonnegative, got {r}"
                    )));
                }
            }
            Valuation::Quadratic { r, d } => {
                if !r.is_finite() || !d.is_finite() || *r < 0.0 || *d < 0.0 {
                    return Err(ModelError::Invalid(format!(
                        "quadratic valuation needs finite r >= 0 and d >= 0, got r={r}, d={d}"
                    )));
                }
            }
            Valuation::PiecewiseLinear { points } => {
                validate_polyline(points, Monotone::NonIncreasing)
                    .map_err(|m| ModelError::Invalid(format!("piecewise valuation: {m}")))?;
            }
        }
        Ok(())
    }

    pub fn value(&self, y: f64) -> f64 {
        debug_assert!(y >= -1e-9, "valuation evaluated at negative quantity {y}");
        let y = y.max(0.0);
        match self {
            Valuation::Linear { r } => r * y,
            Valuation::Quadratic { r, d } => {
                if *d == 0.0 {
                    r * y
                } else {
                    // Nondecreasing: the curve plateaus at its vertex.
                    let peak = r / (2.0 * d);
                    let y = y.min(peak);
                    r * y - d * y * y
                }
            }
            Valuation::PiecewiseLinear { points } => eval_polyline(points, y),
        }
    }

    /// Marginal value at zero consumption, the curve's steepest slope.
    pub fn initial_slope(&self) -> f64 {
        match self {
            Valuation::Linear { r } => *r,
            Valuation::Quadratic { r, .. } => *r,
            Valuation::PiecewiseLinear { points } => polyline_slope(points, 0.0, Side::Right),
        }
    }

}

enum Monotone {
    NonDecreasing,
    NonIncreasing,
}

enum Side {
    Left,
    Right,
}

fn validate_polyline(points: &[[f64; 2]], direction: Monotone) -> Result<(), String> {
    if points.len() < 2 {
        return Err("needs at least two points".into());
    }
    if points[0] != [0.0, 0.0] {
        return Err("first point must be [0, 0]".into());
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err("points must be finite".into());
    }
    let mut prev_slope: Option<f64> = None;
    for w in points.windows(2) {
        let dx = w[1][0] - w[0][0];
        if dx <= 0.0 {
            return Err(format!("x must be strictly increasing, got step {dx}"));
        }
        let slope = (w[1][1] - w[0][1]) / dx;
        if slope < 0.0 {
            return Err(format!("slopes must be nonnegative, got {slope}"));
        }
        if let Some(p) = prev_slope {
            let ok = match direction {
                Monotone::NonDecreasing => slope >= p - 1e-12,
                Monotone::NonIncreasing => slope <= p + 1e-12,
            };
            if !ok {
                return Err(format!(
                    "slopes must be {} (got {p} then {slope})",
                    match direction {
                        Monotone::NonDecreasing => "nondecreasing",
                        Monotone::NonIncreasing => "nonincreasing",
                    }
                ));
            }
        }
        prev_slope = Some(slope);
    }
    Ok(())
}

fn eval_polyline(points: &[[f64; 2]], x: f64) -> f64 {
    let last = points[points.len() - 1];
    if x >= last[0] {
        let slope = polyline_slope(points, last[0], Side::Right);
        return last[1] + slope * (x - last[0]);
    }
    for w in points.windows(2) {
        if x <= w[1][0] {
            let slope = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
            return w[0][1] + slope * (x - w[0][0]);
        }
    }
    unreachable!("polyline evaluation fell off both ends");
}

fn polyline_slope(points: &[[f64; 2]], x: f64, side: Side) -> f64 {
    let segs: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]))
        .collect();
    let last = points[points.len() - 1][0];
    if x >= last {
        return segs[segs.len() - 1];
    }
    for (k, w) in points.windows(2).enumerate() {
        let inside = match side {
            // The left slope at a breakpoint belongs to the segment ending
            // there; the right slope to the one starting there.
            Side::Left => x > w[0][0] && x <= w[1][0],
            Side::Right => x >= w[0][0] && x < w[1][0],
        };
        if inside {
            return segs[k];
        }
    }
    // Only x = 0 queried from the left remains.
    segs[0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: String,
    pub to: String,
    pub admittance: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: String,
    pub node: String,
    pub cost: CostFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Consumer {
    pub id: String,
    pub node: String,
    pub valuation: Valuation,
    /// Optional hard consumption cap in MW.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

/// A supply bid: price `p` up to the breakpoint `s`, price `q >= p` beyond.
///
/// The reported cost curve is `p x` for `x <= s` and `q x + (p - q) s`
/// above, which is convex and zero at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bid {
    pub p: f64,
    pub s: f64,
    pub q: f64,
}

impl Bid {
    pub fn linear(p: f64) -> Self {
        Bid { p, s: 0.0, q: p }
    }

    pub fn validate(&self, cap: Option<f64>) -> Result<(), ModelError> {
        let Bid { p, s, q } = *self;
        if !p.is_finite() || !s.is_finite() || !q.is_finite() {
            return Err(ModelError::InvalidBid(format!(
                "bid components must be finite, got ({p}, {s}, {q})"
            )));
        }
        if p < 0.0 || s < 0.0 || q < p {
            return Err(ModelError::InvalidBid(format!(
                "bid must satisfy 0 <= p <= q and s >= 0, got ({p}, {s}, {q})"
            )));
        }
        if let Some(cap) = cap {
            if q > cap + 1e-12 {
                return Err(ModelError::InvalidBid(format!(
                    "bid price q = {q} exceeds the scenario cap {cap}"
                )));
            }
        }
        Ok(())
    }

    /// Reported cost of producing `x`.
    pub fn cost(&self, x: f64) -> f64 {
        debug_assert!(x >= -1e-9, "bid cost evaluated at negative quantity {x}");
        let x = x.max(0.0);
        if x <= self.s {
            self.p * x
        } else {
            self.q * x + (self.p - self.q) * self.s
        }
    }

    pub(crate) fn pieces(&self) -> Vec<Piece> {
        if self.s > 0.0 && self.q > self.p {
            vec![
                Piece {
                    slope: self.p,
                    width: self.s,
                },
                Piece {
                    slope: self.q,
                    width: f64::INFINITY,
                },
            ]
        } else {
            // s = 0 or p = q: a single line through the origin.
            vec![Piece {
                slope: if self.s > 0.0 { self.p } else { self.q },
                width: f64::INFINITY,
            }]
        }
    }
}

/// A demand bid: marginal value `r` up to the breakpoint `t`, then
/// `w <= r` beyond. Concave counterpart of [`Bid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumerBid {
    pub r: f64,
    pub t: f64,
    pub w: f64,
}

impl ConsumerBid {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ConsumerBid { r, t, w } = *self;
        if !r.is_finite() || !t.is_finite() || !w.is_finite() {
            return Err(ModelError::InvalidBid(format!(
                "consumer bid components must be finite, got ({r}, {t}, {w})"
            )));
        }
        if w < 0.0 || r < w || t < 0.0 {
            return Err(ModelError::InvalidBid(format!(
                "consumer bid must satisfy 0 <= w <= r and t >= 0, got ({r}, {t}, {w})"
            )));
        }
        Ok(())
    }

    /// Reported value of consuming `y`.
    pub fn value(&self, y: f64) -> f64 {
        debug_assert!(y >= -1e-9);
        let y = y.max(0.0);
        if y <= self.t {
            self.r * y
        } else {
            self.w * y + (self.r - self.w) * self.t
        }
    }

    pub(crate) fn pieces(&self) -> Vec<Piece> {
        let mut out = Vec::with_capacity(2);
        if self.t > 0.0 {
            out.push(Piece {
                slope: self.r,
                width: self.t,
            });
        }
        if self.w > 0.0 {
            out.push(Piece {
                slope: self.w,
                width: f64::INFINITY,
            });
        }
        out
    }
}

/// A complete market scenario. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub consumers: Vec<Consumer>,
    /// Optional ceiling on bid prices (both p and q).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid_cap: Option<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.nodes.is_empty() {
            return Err(ModelError::Invalid("scenario has no nodes".into()));
        }
        let mut node_ids = HashSet::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                return Err(ModelError::Invalid("node id must be nonempty".into()));
            }
            if !node_ids.insert(n.id.as_str()) {
                return Err(ModelError::Invalid(format!("duplicate node id '{}'", n.id)));
            }
            if !n.demand.is_finite() || n.demand < 0.0 {
                return Err(ModelError::Invalid(format!(
                    "node '{}' demand must be finite and nonnegative, got {}",
                    n.id, n.demand
                )));
            }
        }
        let mut pairs = HashSet::new();
        for l in &self.lines {
            if l.from == l.to {
                return Err(ModelError::Invalid(format!(
                    "line '{}'-'{}' connects a node to itself",
                    l.from, l.to
                )));
            }
            for end in [&l.from, &l.to] {
                if !node_ids.contains(end.as_str()) {
                    return Err(ModelError::Invalid(format!(
                        "line endpoint '{end}' is not a node"
                    )));
                }
            }
            let key = if l.from <= l.to {
                (l.from.clone(), l.to.clone())
            } else {
                (l.to.clone(), l.from.clone())
            };
            if !pairs.insert(key) {
                return Err(ModelError::Invalid(format!(
                    "duplicate line between '{}' and '{}'",
                    l.from, l.to
                )));
            }
            if !l.admittance.is_finite() || l.admittance <= 0.0 {
                return Err(ModelError::Invalid(format!(
                    "line '{}'-'{}' admittance must be positive, got {}",
                    l.from, l.to, l.admittance
                )));
            }
            if !l.capacity.is_finite() || l.capacity <= 0.0 {
                return Err(ModelError::Invalid(format!(
                    "line '{}'-'{}' capacity must be positive, got {}",
                    l.from, l.to, l.capacity
                )));
            }
        }
        let mut gen_ids = HashSet::new();
        for g in &self.generators {
            if !gen_ids.insert(g.id.as_str()) {
                return Err(ModelError::Invalid(format!(
                    "duplicate generator id '{}'",
                    g.id
                )));
            }
            if !node_ids.contains(g.node.as_str()) {
                return Err(ModelError::Invalid(format!(
                    "generator '{}' references unknown node '{}'",
                    g.id, g.node
                )));
            }
            g.cost.validate()?;
        }
        let mut consumer_ids = HashSet::new();
        for c in &self.consumers {
            if !consumer_ids.insert(c.id.as_str()) || gen_ids.contains(c.id.as_str()) {
                return Err(ModelError::Invalid(format!(
                    "consumer id '{}' is not unique",
                    c.id
                )));
            }
            if !node_ids.contains(c.node.as_str()) {
                return Err(ModelError::Invalid(format!(
                    "consumer '{}' references unknown node '{}'",
                    c.id, c.node
                )));
            }
            c.valuation.validate()?;
            if let Some(cap) = c.cap {
                if !cap.is_finite() || cap < 0.0 {
                    return Err(ModelError::Invalid(format!(
                        "consumer '{}' cap must be finite and nonnegative",
                        c.id
                    )));
                }
            }
        }
        if let Some(cap) = self.bid_cap {
            if !cap.is_finite() || cap <= 0.0 {
                return Err(ModelError::Invalid(format!(
                    "bid cap must be positive, got {cap}"
                )));
            }
        }
        if !self.connected() {
            return Err(ModelError::Invalid(
                "the network graph is not connected".into(),
            ));
        }
        Ok(())
    }

    fn connected(&self) -> bool {
        if self.nodes.len() <= 1 {
            return true;
        }
        let index = self.node_positions();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for l in &self.lines {
            let a = index[l.from.as_str()];
            let b = index[l.to.as_str()];
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn node_positions(&self) -> HashMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn generator_index(&self, id: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }

    /// Node position of generator `g`.
    pub fn generator_node(&self, g: usize) -> usize {
        self.node_index(&self.generators[g].node)
            .expect("validated scenario has resolvable generator nodes")
    }

    /// Node position of consumer `m`.
    pub fn consumer_node(&self, m: usize) -> usize {
        self.node_index(&self.consumers[m].node)
            .expect("validated scenario has resolvable consumer nodes")
    }

    /// Generator positions grouped by node position.
    pub fn generators_by_node(&self) -> Vec<Vec<usize>> {
        let mut by_node = vec![Vec::new(); self.nodes.len()];
        for g in 0..self.generators.len() {
            by_node[self.generator_node(g)].push(g);
        }
        by_node
    }

    pub fn total_demand(&self) -> f64 {
        self.nodes.iter().map(|n| n.demand).sum()
    }

    /// Total true cost of a dispatch, one output per generator.
    pub fn true_cost(&self, x: &[f64]) -> f64 {
        self.generators
            .iter()
            .zip(x)
            .map(|(g, &xi)| g.cost.cost(xi))
            .sum()
    }

    /// Steepest true marginal cost across generators, evaluated out to the
    /// total demand. Used for grid ceilings and consumer reductions.
    pub fn max_marginal_cost(&self) -> f64 {
        let span = self.total_demand();
        self.generators
            .iter()
            .map(|g| g.cost.right_derivative(span))
            .fold(0.0, f64::max)
    }

    /// Validate one bid per generator against the scenario cap.
    pub fn validate_bids(&self, bids: &[Bid]) -> Result<(), ModelError> {
        if bids.len() != self.generators.len() {
            return Err(ModelError::InvalidBid(format!(
                "expected {} bids, got {}",
                self.generators.len(),
                bids.len()
            )));
        }
        for (g, bid) in bids.iter().enumerate() {
            bid.validate(self.bid_cap).map_err(|e| {
                ModelError::InvalidBid(format!("generator '{}': {e}", self.generators[g].id))
            })?;
        }
        Ok(())
    }

    /// Validate one demand bid per consumer.
    pub fn validate_consumer_bids(&self, bids: &[ConsumerBid]) -> Result<(), ModelError> {
        if bids.len() != self.consumers.len() {
            return Err(ModelError::InvalidBid(format!(
                "expected {} consumer bids, got {}",
                self.consumers.len(),
                bids.len()
            )));
        }
        for (m, bid) in bids.iter().enumerate() {
            bid.validate().map_err(|e| {
                ModelError::InvalidBid(format!("consumer '{}': {e}", self.consumers[m].id))
            })?;
        }
        Ok(())
    }
}

/// Parse and validate a scenario document (JSON).
pub fn load_scenario(text: &str) -> Result<Scenario, ModelError> {
    let scenario: Scenario =
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupplyEntry {
    generator: String,
    p: f64,
    #[serde(default)]
    s: f64,
    q: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandEntry {
    consumer: String,
    r: f64,
    t: f64,
    #[serde(default)]
    w: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BidDocument {
    Supply(Vec<SupplyEntry>),
    TwoSided {
        #[serde(default)]
        generators: Vec<SupplyEntry>,
        #[serde(default)]
        consumers: Vec<DemandEntry>,
    },
}

fn place_entries<E, B>(
    entries: Vec<E>,
    side: &str,
    names: &[&str],
    key: impl Fn(&E) -> String,
    build: impl Fn(E) -> B,
) -> Result<Vec<B>, ModelError> {
    let mut slots: Vec<Option<B>> = names.iter().map(|_| None).collect();
    for entry in entries {
        let name = key(&entry);
        let i = names
            .iter()
            .position(|&n| n == name)
            .ok_or_else(|| ModelError::InvalidBid(format!("no {side} '{name}' in the scenario")))?;
        if slots[i].is_some() {
            return Err(ModelError::InvalidBid(format!(
                "duplicate bid for {side} '{name}'"
            )));
        }
        slots[i] = Some(build(entry));
    }
    slots
        .into_iter()
        .zip(names)
        .map(|(slot, name)| {
            slot.ok_or_else(|| ModelError::InvalidBid(format!("no bid for {side} '{name}'")))
        })
        .collect()
}

/// Parse a bid document (JSON) against a scenario.
///
/// Two shapes are accepted: a plain array of supply entries
/// `{"generator": id, "p": .., "s": .., "q": ..}` where `s` defaults to 0
/// and `q` to `p`, or an object `{"generators": [..], "consumers":
/// [{"consumer": id, "r": .., "t": .., "w": ..}]}` where `w` defaults
/// to 0. Entries may come in any order but must cover every scenario
/// participant exactly once. Bids are returned in scenario order and
/// validated against the scenario's price cap.
pub fn load_bid_profile(
    text: &str,
    scenario: &Scenario,
) -> Result<(Vec<Bid>, Vec<ConsumerBid>), ModelError> {
    let document: BidDocument =
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let (supply, demand) = match document {
        BidDocument::Supply(entries) => (entries, Vec::new()),
        BidDocument::TwoSided {
            generators,
            consumers,
        } => (generators, consumers),
    };
    let gen_names: Vec<&str> = scenario.generators.iter().map(|g| g.id.as_str()).collect();
    let con_names: Vec<&str> = scenario.consumers.iter().map(|c| c.id.as_str()).collect();
    let bids = place_entries(
        supply,
        "generator",
        &gen_names,
        |e| e.generator.clone(),
        |e| Bid {
            p: e.p,
            s: e.s,
            q: e.q.unwrap_or(e.p),
        },
    )?;
    let consumer_bids = place_entries(
        demand,
        "consumer",
        &con_names,
        |e| e.consumer.clone(),
        |e| ConsumerBid {
            r: e.r,
            t: e.t,
            w: e.w,
        },
    )?;
    scenario.validate_bids(&bids)?;
    scenario.validate_consumer_bids(&consumer_bids)?;
    Ok((bids, consumer_bids))
}

/// Verdict of the exclusion-feasibility condition: dispatch must stay
/// feasible when any single generator is removed from the market.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption1Report {
    pub holds: bool,
    /// Generators whose exclusion leaves no feasible dispatch.
    pub pivotal: Vec<String>,
}

/// For each generator, solve a feasibility problem with that generator
/// forced to zero output; the condition holds when every one is feasible.
pub fn check_assumption1(scenario: &Scenario) -> Result<Assumption1Report, ModelError> {
    let mut pivotal = Vec::new();
    for g in 0..scenario.generators.len() {
        if !exclusion_feasible(scenario, g)? {
            pivotal.push(scenario.generators[g].id.clone());
        }
    }
    Ok(Assumption1Report {
        holds: pivotal.is_empty(),
        pivotal,
    })
}

fn exclusion_feasible(scenario: &Scenario, excluded: usize) -> Result<bool, ModelError> {
    let num_nodes = scenario.nodes.len();
    let num_gens = scenario.generators.len();
    // Variables: one output per generator, then one angle per node after the
    // first (the first node's angle is the reference, fixed at zero).
    let mut p = LpProblem::new(num_gens + num_nodes.saturating_sub(1));
    for g in 0..num_gens {
        if g == excluded {
            p.set_bounds(g, 0.0, 0.0);
        }
    }
    for i in 1..num_nodes {
        p.free_var(num_gens + i - 1);
    }
    let theta_col = |i: usize| -> Option<usize> {
        if i == 0 {
            None
        } else {
            Some(num_gens + i - 1)
        }
    };

    let index = scenario.node_positions();
    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_nodes];
    for g in 0..num_gens {
        balance[scenario.generator_node(g)].push((g, 1.0));
    }
    for l in &scenario.lines {
        let a = index[l.from.as_str()];
        let b = index[l.to.as_str()];
        // Flow a -> b is Y (theta_a - theta_b); it leaves a and enters b.
        if let Some(c) = theta_col(a) {
            balance[a].push((c, -l.admittance));
            balance[b].push((c, l.admittance));
        }
        if let Some(c) = theta_col(b) {
            balance[a].push((c, l.admittance));
            balance[b].push((c, -l.admittance));
        }
    }
    for (i, entries) in balance.iter().enumerate() {
        let row = p.row_from_sparse(entries);
        p.add_equality(row, scenario.nodes[i].demand, format!("balance:{i}"));
    }
    for l in &scenario.lines {
        let a = index[l.from.as_str()];
        let b = index[l.to.as_str()];
        let mut fwd: Vec<(usize, f64)> = Vec::new();
        if let Some(c) = theta_col(a) {
            fwd.push((c, l.admittance));
        }
        if let Some(c) = theta_col(b) {
            fwd.push((c, -l.admittance));
        }
        let fwd_row = p.row_from_sparse(&fwd);
        let rev_row: Vec<f64> = fwd_row.iter().map(|v| -v).collect();
        p.add_inequality(fwd_row, l.capacity, format!("flow:{a}:{b}"));
        p.add_inequality(rev_row, l.capacity, format!("flow:{b}:{a}"));
    }

    let sol = solve_lp(&p, &SolverOptions::default())
        .map_err(|e| ModelError::Solver(e.to_string()))?;
    Ok(sol.status == LpStatus::Optimal)
}

/// Verdict of the competition condition: at least two generators at every
/// node, demand-only nodes included.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonopolyReport {
    pub holds: bool,
    /// Nodes with fewer than two generators.
    pub thin_nodes: Vec<String>,
}

pub fn check_monopoly_free(scenario: &Scenario) -> MonopolyReport {
    let by_node = scenario.generators_by_node();
    let thin_nodes: Vec<String> = scenario
        .nodes
        .iter()
        .zip(by_node.iter())
        .filter(|(_, gens)| gens.len() < 2)
        .map(|(n, _)| n.id.clone())
        .collect();
    MonopolyReport {
        holds: thin_nodes.is_empty(),
        thin_nodes,
    }
}

#[cfg(test)]
pub(crate) mod tests;
