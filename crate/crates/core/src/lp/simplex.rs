//! Two-phase dense tableau simplex.
//!
//! Standardization shifts every finitely-bounded variable to `[0, inf)`,
//! splits free variables, turns finite upper bounds into internal rows, and
//! flips rows until every right-hand side is nonnegative. Phase 1 minimizes
//! the sum of one artificial variable per row; phase 2 minimizes the real
//! objective with artificials barred from entering. The artificial columns
//! carry the basis inverse, so duals are read from the maintained objective
//! row at the end.
//!
//! Pivoting uses the most-negative reduced cost with a permanent switch to
//! Bland's rule after a stall, which keeps the method finite on degenerate
//! problems while staying fast on the common path.

use super::{LpError, LpProblem, LpSolution, LpStatus, SolverOptions};

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = shift + x'
    Shifted { col: usize, shift: f64 },
    /// x = shift - x'
    Negated { col: usize, shift: f64 },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
}

struct Standard {
    /// Structural columns: mapped variables then one slack per
    /// inequality-like row.
    n: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    var_map: Vec<VarMap>,
    row_sign: Vec<f64>,
    num_eq: usize,
    num_ineq: usize,
}

fn standardize(p: &LpProblem) -> Standard {
    let mut var_map = Vec::with_capacity(p.num_vars);
    let mut nv = 0usize;
    let mut ub_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..p.num_vars {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        if lo.is_finite() {
            var_map.push(VarMap::Shifted { col: nv, shift: lo });
            if hi.is_finite() {
                ub_rows.push((nv, hi - lo));
            }
            nv += 1;
        } else if hi.is_finite() {
            var_map.push(VarMap::Negated { col: nv, shift: hi });
            nv += 1;
        } else {
            var_map.push(VarMap::Split { pos: nv, neg: nv + 1 });
            nv += 2;
        }
    }

    let num_eq = p.equalities.len();
    let num_ineq = p.inequalities.len();
    let m = num_eq + num_ineq + ub_rows.len();
    let n = nv + num_ineq + ub_rows.len();

    let mut a = vec![0.0; m * n];
    let mut b = vec![0.0; m];
    let mut row_sign = vec![1.0; m];

    let fill = |r: usize, coeffs: &[f64], rhs: f64, a: &mut [f64], b: &mut [f64]| {
        let row = &mut a[r * n..(r + 1) * n];
        let mut adj = rhs;
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            match var_map[j] {
                VarMap::Shifted { col, shift } => {
                    row[col] += c;
                    adj -= c * shift;
                }
                VarMap::Negated { col, shift } => {
                    row[col] -= c;
                    adj -= c * shift;
                }
                VarMap::Split { pos, neg } => {
                    row[pos] += c;
                    row[neg] -= c;
                }
            }
        }
        b[r] = adj;
    };

    for (i, eq) in p.equalities.iter().enumerate() {
        fill(i, &eq.coefficients, eq.rhs, &mut a, &mut b);
    }
    for (k, iq) in p.inequalities.iter().enumerate() {
        let r = num_eq + k;
        fill(r, &iq.coefficients, iq.rhs, &mut a, &mut b);
        a[r * n + nv + k] = 1.0;
    }
    for (t, &(col, width)) in ub_rows.iter().enumerate() {
        let r = num_eq + num_ineq + t;
        a[r * n + col] = 1.0;
        a[r * n + nv + num_ineq + t] = 1.0;
        b[r] = width;
    }

    for r in 0..m {
        if b[r] < 0.0 {
            row_sign[r] = -1.0;
            b[r] = -b[r];
            for v in &mut a[r * n..(r + 1) * n] {
                *v = -*v;
            }
        }
    }

    let mut cost = vec![0.0; n];
    for (j, &c) in p.objective.iter().enumerate() {
        match var_map[j] {
            VarMap::Shifted { col, .. } => cost[col] += c,
            VarMap::Negated { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    Standard {
        n,
        m,
        a,
        b,
        cost,
        var_map,
        row_sign,
        num_eq,
        num_ineq,
    }
}

struct Tableau {
    /// Structural column count.
    n: usize,
    m: usize,
    /// Row stride: n structural + m artificial + rhs.
    w: usize,
    /// (m + 2) rows: constraints, phase-2 objective, phase-1 objective.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(s: &Standard) -> Self {
        let (n, m) = (s.n, s.m);
        let w = n + m + 1;
        let mut t = vec![0.0; (m + 2) * w];
        for r in 0..m {
            t[r * w..r * w + n].copy_from_slice(&s.a[r * n..(r + 1) * n]);
            t[r * w + n + r] = 1.0;
            t[r * w + w - 1] = s.b[r];
        }
        let obj2 = m * w;
        t[obj2..obj2 + n].copy_from_slice(&s.cost);
        let obj1 = (m + 1) * w;
        for j in 0..n {
            let mut col_sum = 0.0;
            for r in 0..m {
                col_sum += s.a[r * n + j];
            }
            t[obj1 + j] = -col_sum;
        }
        let b_sum: f64 = s.b.iter().sum();
        t[obj1 + w - 1] = -b_sum;
        Tableau {
            n,
            m,
            w,
            t,
            basis: (n..n + m).collect(),
        }
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.t[r * self.w + self.w - 1]
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.w;
        let inv = 1.0 / self.t[r * w + q];
        for c in 0..w {
            self.t[r * w + c] *= inv;
        }
        self.t[r * w + q] = 1.0;
        let (pre, rest) = self.t.split_at_mut(r * w);
        let (prow, post) = rest.split_at_mut(w);
        let apply = |chunk: &mut [f64]| {
            for row in chunk.chunks_exact_mut(w) {
                let f = row[q];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(prow.iter()) {
                        *v -= f * p;
                    }
                    row[q] = 0.0;
                }
            }
        };
        apply(pre);
        apply(post);
        self.basis[r] = q;
    }

    /// Entering column for the objective in `obj_row`, scanning `limit`
    /// columns. Dantzig rule by default, first-index Bland when asked.
    fn entering(&self, obj_row: usize, limit: usize, bland: bool, enter_tol: f64) -> Option<usize> {
        let row = &self.t[obj_row * self.w..obj_row * self.w + limit];
        if bland {
            row.iter().position(|&rc| rc < -enter_tol)
        } else {
            let mut best = (-enter_tol, None);
            for (j, &rc) in row.iter().enumerate() {
                if rc < best.0 {
                    best = (rc, Some(j));
                }
            }
            best.1
        }
    }

    /// Ratio test. Ties prefer the smaller basis variable, which together
    /// with Bland entering prevents cycling. Rows holding an artificial at
    /// zero admit a pivot on a negative entry so artificials get forced out.
    fn leaving(&self, q: usize, pivot_tol: f64) -> Option<usize> {
        let mut best: Option<(f64, usize, usize)> = None;
        for r in 0..self.m {
            let a = self.t[r * self.w + q];
            let rhs = self.rhs(r);
            let ratio = if a > pivot_tol {
                rhs.max(0.0) / a
            } else if self.basis[r] >= self.n && a < -pivot_tol && rhs.abs() <= 1e-9 {
                0.0
            } else {
                continue;
            };
            let key = (ratio, self.basis[r], r);
            match best {
                None => best = Some(key),
                Some(cur) if ratio < cur.0 - 1e-12 => best = Some(key),
                Some(cur) if (ratio - cur.0).abs() <= 1e-12 && self.basis[r] < cur.1 => {
                    best = Some(key)
                }
                _ => {}
            }
        }
        best.map(|(_, _, r)| r)
    }
}

struct PhaseOutcome {
    optimal: bool,
}

fn run_phase(
    tab: &mut Tableau,
    obj_row: usize,
    limit: usize,
    iterations: &mut usize,
    options: &SolverOptions,
) -> Result<PhaseOutcome, LpError> {
    let enter_tol = options.pivot_tol * 10.0;
    let mut bland = false;
    let mut stall = 0usize;
    let mut last_obj = f64::INFINITY;
    loop {
        let Some(q) = tab.entering(obj_row, limit, bland, enter_tol) else {
            return Ok(PhaseOutcome { optimal: true });
        };
        let Some(r) = tab.leaving(q, options.pivot_tol) else {
            return Ok(PhaseOutcome { optimal: false });
        };
        tab.pivot(r, q);
        *iterations += 1;
        if *iterations > options.max_iterations {
            return Err(LpError::IterationLimit);
        }
        let obj = -tab.t[obj_row * tab.w + tab.w - 1];
        if obj < last_obj - 1e-12 {
            last_obj = obj;
            stall = 0;
        } else {
            stall += 1;
            if stall > 64 {
                bland = true;
            }
        }
    }
}

pub(super) fn solve(p: &LpProblem, options: &SolverOptions) -> Result<LpSolution, LpError> {
    let s = standardize(p);
    let mut tab = Tableau::new(&s);
    let mut iterations = 0usize;

    let phase1 = run_phase(&mut tab, s.m + 1, s.n + s.m, &mut iterations, options)?;
    if !phase1.optimal {
        return Err(LpError::Internal(
            "phase 1 reported an unbounded direction".into(),
        ));
    }
    let b_scale = 1.0 + s.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let infeas = -tab.t[(s.m + 1) * tab.w + tab.w - 1];
    if infeas > options.feas_tol * b_scale {
        return Ok(empty_solution(p, LpStatus::Infeasible));
    }
    // Pivot artificials out of the basis where a structural column allows it;
    // rows that stay artificial-basic are redundant and harmless at zero.
    for r in 0..s.m {
        if tab.basis[r] >= s.n {
            let q = (0..s.n)
                .find(|&j| tab.t[r * tab.w + j].abs() > options.pivot_tol * 100.0);
            if let Some(q) = q {
                tab.pivot(r, q);
            }
        }
    }

    let phase2 = run_phase(&mut tab, s.m, s.n, &mut iterations, options)?;
    if !phase2.optimal {
        return Ok(empty_solution(p, LpStatus::Unbounded));
    }

    Ok(extract(p, &s, &tab))
}

fn empty_solution(p: &LpProblem, status: LpStatus) -> LpSolution {
    LpSolution {
        status,
        x: Vec::new(),
        objective: match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::NAN,
        },
        duals_eq: Vec::new(),
        duals_ineq: Vec::new(),
        reduced_costs: vec![0.0; p.num_vars],
        primal_unique: false,
        dual_unique: false,
    }
}

fn extract(p: &LpProblem, s: &Standard, tab: &Tableau) -> LpSolution {
    let w = tab.w;
    let mut x_std = vec![0.0; s.n];
    for r in 0..s.m {
        if tab.basis[r] < s.n {
            x_std[tab.basis[r]] = tab.rhs(r);
        }
    }
    let mut x = vec![0.0; p.num_vars];
    for (j, vm) in s.var_map.iter().enumerate() {
        x[j] = match *vm {
            VarMap::Shifted { col, shift } => shift + x_std[col],
            VarMap::Negated { col, shift } => shift - x_std[col],
            VarMap::Split { pos, neg } => x_std[pos] - x_std[neg],
        };
    }

    let obj2 = s.m * w;
    let y_std: Vec<f64> = (0..s.m).map(|r| -tab.t[obj2 + s.n + r]).collect();
    let duals_eq: Vec<f64> = (0..s.num_eq).map(|i| s.row_sign[i] * y_std[i]).collect();
    let duals_ineq: Vec<f64> = (0..s.num_ineq)
        .map(|k| {
            let r = s.num_eq + k;
            -s.row_sign[r] * y_std[r]
        })
        .collect();

    let mut reduced = p.objective.clone();
    for (i, eq) in p.equalities.iter().enumerate() {
        let y = duals_eq[i];
        if y != 0.0 {
            for (rj, a) in reduced.iter_mut().zip(eq.coefficients.iter()) {
                *rj -= y * a;
            }
        }
    }
    for (k, iq) in p.inequalities.iter().enumerate() {
        let mu = duals_ineq[k];
        if mu != 0.0 {
            for (rj, g) in reduced.iter_mut().zip(iq.coefficients.iter()) {
                *rj += mu * g;
            }
        }
    }

    let objective = p
        .objective
        .iter()
        .zip(x.iter())
        .map(|(c, xi)| c * xi)
        .sum();

    // Basis-derived uniqueness flags used to skip tie-breaking passes.
    let degen_tol = 1e-9;
    let mut in_basis = vec![false; s.n];
    let mut dual_unique = true;
    for r in 0..s.m {
        if tab.basis[r] >= s.n {
            dual_unique = false;
        } else {
            in_basis[tab.basis[r]] = true;
            if tab.rhs(r) <= degen_tol {
                dual_unique = false;
            }
        }
    }
    let mut twin = vec![usize::MAX; s.n];
    for vm in &s.var_map {
        if let VarMap::Split { pos, neg } = *vm {
            twin[pos] = neg;
            twin[neg] = pos;
        }
    }
    let mut primal_unique = true;
    for j in 0..s.n {
        if in_basis[j] {
            continue;
        }
        if tab.t[obj2 + j] > degen_tol {
            continue;
        }
        // The twin column of a basic split half is a null direction of the
        // original variables, not an alternative optimum.
        if twin[j] != usize::MAX && in_basis[twin[j]] {
            continue;
        }
        primal_unique = false;
        break;
    }

    LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals_eq,
        duals_ineq,
        reduced_costs: reduced,
        primal_unique,
        dual_unique,
    }
}
