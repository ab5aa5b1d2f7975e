//! Exact linear programming over the no-signaling polytope.
//!
//! [`solve`] is a dense two-phase simplex over big rationals with Bland's
//! rule. Every answer carries a certificate that is re-checked exactly: a
//! primal point and dual vector for optima, a Farkas vector for infeasible
//! programs, a ray for unbounded ones.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};

use crate::behavior::{check_no_signaling, ns_equalities, Behavior, OutcomeTriple, Prob};
use crate::bell::bell_score;
use crate::joint::SettingTriple;
use crate::strategy::{Outcome, PartyId};

type Q = BigRational;

fn q(n: i64) -> Q {
    Q::from_integer(n.into())
}

/// `sum coeffs . x = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, Q)>,
    pub rhs: Q,
}

/// Minimize `objective . x` subject to equality rows and `x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub var_names: Vec<String>,
    pub objective: Vec<Q>,
    pub rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(var_names: Vec<String>) -> Self {
        let n = var_names.len();
        LinearProgram { var_names, objective: vec![Q::zero(); n], rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn add_row(&mut self, name: impl Into<String>, coeffs: Vec<(usize, Q)>, rhs: Q) {
        let n = self.num_vars();
        assert!(coeffs.iter().all(|(j, _)| *j < n), "coefficient index out of range");
        self.rows.push(Constraint { name: name.into(), coeffs, rhs });
    }

    fn dense_row(&self, r: &Constraint) -> Vec<Q> {
        let mut row = vec![Q::zero(); self.num_vars()];
        for (j, v) in &r.coeffs {
            row[*j] += v.clone();
        }
        row
    }

    pub fn objective_value(&self, x: &[Q]) -> Q {
        dot(&self.objective, x)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "variables": self.var_names,
            "objective": self.objective.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "constraints": self.rows.iter().map(|r| json!({
                "name": r.name,
                "coeffs": r.coeffs.iter().map(|(j, v)| json!([j, v.to_string()])).collect::<Vec<_>>(),
                "rhs": r.rhs.to_string(),
            })).collect::<Vec<_>>(),
        })
    }
}

fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).fold(Q::zero(), |acc, (x, y)| acc + x * y)
}

/// An optimum with its exactly checked certificates.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub value: Q,
    pub primal: Vec<Q>,
    /// One multiplier per constraint row.
    pub dual: Vec<Q>,
}

impl LpSolution {
    /// `Ax = b`, `x >= 0`, `A^T y <= c` and `b . y = c . x`.
    pub fn verify(&self, lp: &LinearProgram) -> Result<(), String> {
        if self.primal.iter().any(|v| v.is_negative()) {
            return Err("primal point has a negative entry".into());
        }
        for r in &lp.rows {
            if dot(&lp.dense_row(r), &self.primal) != r.rhs {
                return Err(format!("primal point violates {}", r.name));
            }
        }
        let mut aty = vec![Q::zero(); lp.num_vars()];
        for (r, y) in lp.rows.iter().zip(&self.dual) {
            for (j, v) in &r.coeffs {
                aty[*j] += v * y;
            }
        }
        if let Some(j) = (0..lp.num_vars()).find(|&j| aty[j] > lp.objective[j]) {
            return Err(format!("dual infeasible at {}", lp.var_names[j]));
        }
        let dual_value = lp.rows.iter().zip(&self.dual).fold(Q::zero(), |a, (r, y)| a + &r.rhs * y);
        let primal_value = lp.objective_value(&self.primal);
        if dual_value != primal_value || primal_value != self.value {
            return Err(format!("duality gap: primal {primal_value}, dual {dual_value}"));
        }
        Ok(())
    }

    pub fn to_json(&self, lp: &LinearProgram) -> Value {
        let primal: serde_json::Map<String, Value> = lp
            .var_names
            .iter()
            .zip(&self.primal)
            .filter(|(_, v)| !v.is_zero())
            .map(|(n, v)| (n.clone(), Value::String(v.to_string())))
            .collect();
        let dual: serde_json::Map<String, Value> = lp
            .rows
            .iter()
            .zip(&self.dual)
            .filter(|(_, v)| !v.is_zero())
            .map(|(r, v)| (r.name.clone(), Value::String(v.to_string())))
            .collect();
        json!({ "value": self.value.to_string(), "primal": primal, "dual": dual })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    /// `y . b > 0` while `A^T y <= 0`.
    #[error("infeasible (Farkas certificate over {} rows)", farkas.len())]
    Infeasible { farkas: Vec<Q> },
    /// Feasible `point` and direction `ray` with `A ray = 0`, `ray >= 0`,
    /// `c . ray < 0`.
    #[error("unbounded")]
    Unbounded { point: Vec<Q>, ray: Vec<Q> },
    #[error("certificate check failed: {0}")]
    Certificate(String),
}

struct Tableau {
    /// Rows of `[A | I | b]` after pivoting.
    t: Vec<Vec<Q>>,
    basis: Vec<usize>,
    /// Original row index of each tableau row.
    origin: Vec<usize>,
    n: usize,
    m: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.n + self.m
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.t[r][col].clone();
        for v in self.t[r].iter_mut() {
            *v /= &p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        self.basis[r] = col;
    }

    fn reduced_costs(&self, cost: &[Q], allowed: usize) -> Vec<Q> {
        (0..allowed)
            .map(|j| {
                let z = self.t.iter().zip(&self.basis).fold(Q::zero(), |a, (row, &b)| a + &cost[b] * &row[j]);
                &cost[j] - z
            })
            .collect()
    }

    /// Bland's rule on columns `0..allowed`. Returns the entering column
    /// that proves unboundedness, if any.
    fn optimize(&mut self, cost: &[Q], allowed: usize) -> Option<usize> {
        loop {
            let rc = self.reduced_costs(cost, allowed);
            let col = (0..allowed).find(|&j| rc[j].is_negative())?;
            let rhs = self.rhs();
            let mut best: Option<(Q, usize, usize)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[col].is_positive() {
                    let ratio = &row[rhs] / &row[col];
                    let better = match &best {
                        None => true,
                        Some((r, _, b)) => ratio < *r || (ratio == *r && self.basis[i] < *b),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            match best {
                Some((_, r, _)) => self.pivot(r, col),
                None => return Some(col),
            }
        }
    }

    fn primal(&self) -> Vec<Q> {
        let mut x = vec![Q::zero(); self.n];
        for (row, &b) in self.t.iter().zip(&self.basis) {
            if b < self.n {
                x[b] = row[self.rhs()].clone();
            }
        }
        x
    }

    /// `y = c_B^T B^-1`, read off the identity block.
    fn dual(&self, cost: &[Q]) -> Vec<Q> {
        (0..self.m)
            .map(|i| {
                self.t.iter().zip(&self.basis).fold(Q::zero(), |a, (row, &b)| a + &cost[b] * &row[self.n + i])
            })
            .collect()
    }
}

/// Solves `lp` exactly and verifies the returned certificate.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    let m = lp.rows.len();
    let mut sign = vec![q(1); m];
    let mut t = Vec::with_capacity(m);
    for (i, r) in lp.rows.iter().enumerate() {
        let mut row = lp.dense_row(r);
        let mut rhs = r.rhs.clone();
        if rhs.is_negative() {
            sign[i] = q(-1);
            row.iter_mut().for_each(|v| *v = -v.clone());
            rhs = -rhs;
        }
        row.extend((0..m).map(|k| if k == i { Q::one() } else { Q::zero() }));
        row.push(rhs);
        t.push(row);
    }
    let mut tab = Tableau { t, basis: (n..n + m).collect(), origin: (0..m).collect(), n, m };

    let mut phase1 = vec![Q::zero(); n + m];
    phase1[n..].iter_mut().for_each(|v| *v = Q::one());
    let unbounded = tab.optimize(&phase1, n + m);
    debug_assert!(unbounded.is_none(), "phase one is bounded below by zero");
    let infeasibility = tab.t.iter().zip(&tab.basis).fold(Q::zero(), |a, (row, &b)| a + &phase1[b] * &row[n + m]);
    if infeasibility.is_positive() {
        let y = tab.dual(&phase1);
        let farkas: Vec<Q> = y.iter().zip(&sign).map(|(v, s)| v * s).collect();
        verify_farkas(lp, &farkas).map_err(LpError::Certificate)?;
        return Err(LpError::Infeasible { farkas });
    }

    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= n {
            match (0..n).find(|&j| !tab.t[r][j].is_zero()) {
                Some(col) => tab.pivot(r, col),
                None => {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                    tab.origin.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }

    let mut cost = lp.objective.clone();
    cost.extend((0..m).map(|_| Q::zero()));
    if let Some(col) = tab.optimize(&cost, n) {
        let point = tab.primal();
        let mut ray = vec![Q::zero(); n];
        ray[col] = Q::one();
        for (row, &b) in tab.t.iter().zip(&tab.basis) {
            ray[b] = -row[col].clone();
        }
        verify_ray(lp, &point, &ray).map_err(LpError::Certificate)?;
        return Err(LpError::Unbounded { point, ray });
    }
    let primal = tab.primal();
    let y = tab.dual(&cost);
    let dual: Vec<Q> = y.iter().zip(&sign).map(|(v, s)| v * s).collect();
    let value = lp.objective_value(&primal);
    let solution = LpSolution { value, primal, dual };
    solution.verify(lp).map_err(LpError::Certificate)?;
    Ok(solution)
}

fn verify_farkas(lp: &LinearProgram, y: &[Q]) -> Result<(), String> {
    let mut aty = vec![Q::zero(); lp.num_vars()];
    for (r, yi) in lp.rows.iter().zip(y) {
        for (j, v) in &r.coeffs {
            aty[*j] += v * yi;
        }
    }
    if aty.iter().any(|v| v.is_positive()) {
        return Err("Farkas vector has A^T y > 0 somewhere".into());
    }
    let by = lp.rows.iter().zip(y).fold(Q::zero(), |a, (r, yi)| a + &r.rhs * yi);
    if !by.is_positive() {
        return Err("Farkas vector has b . y <= 0".into());
    }
    Ok(())
}

fn verify_ray(lp: &LinearProgram, point: &[Q], ray: &[Q]) -> Result<(), String> {
    if ray.iter().chain(point).any(|v| v.is_negative()) {
        return Err("ray or point has a negative entry".into());
    }
    for r in &lp.rows {
        let row = lp.dense_row(r);
        if dot(&row, point) != r.rhs || !dot(&row, ray).is_zero() {
            return Err(format!("ray certificate fails {}", r.name));
        }
    }
    if !lp.objective_value(ray).is_negative() {
        return Err("ray does not decrease the objective".into());
    }
    Ok(())
}

/// Variable index of `P(outcome | settings)`.
pub fn var(settings: SettingTriple, outcome: OutcomeTriple) -> usize {
    settings.index() * 8 + outcome.index()
}

fn cells_where<F: Fn(OutcomeTriple) -> bool>(settings: SettingTriple, pred: F, coeff: &Q) -> Vec<(usize, Q)> {
    OutcomeTriple::all().filter(|o| pred(*o)).map(|o| (var(settings, o), coeff.clone())).collect()
}

/// Normalization plus the full no-signaling system, zero objective.
pub fn ns_polytope() -> LinearProgram {
    let names = SettingTriple::all()
        .flat_map(|s| OutcomeTriple::all().map(move |o| format!("{s}|{o}")))
        .collect();
    let mut lp = LinearProgram::new(names);
    for s in SettingTriple::all() {
        lp.add_row(format!("normalization at {s}"), cells_where(s, |_| true, &q(1)), q(1));
    }
    for e in ns_equalities() {
        let mut coeffs: Vec<(usize, Q)> = e.lhs.iter().map(|(s, o)| (var(*s, *o), q(1))).collect();
        coeffs.extend(e.rhs.iter().map(|(s, o)| (var(*s, *o), q(-1))));
        lp.add_row(e.name, coeffs, Q::zero());
    }
    lp
}

/// `P(A!=B|abc') + P(A!=B|ab'c') + P(even|a'bc') + P(odd|a'b'c')`, minimized
/// over no-signaling behaviors, optionally with Alice's output at `a` fixed.
pub fn fixed_output_program(fixed: Option<Outcome>) -> LinearProgram {
    let mut lp = ns_polytope();
    let one = q(1);
    let mut obj = Vec::new();
    for y in [false, true] {
        obj.extend(cells_where(SettingTriple::new(false, y, true), |o| o.a != o.b, &one));
    }
    obj.extend(cells_where(SettingTriple::new(true, false, true), |o| o.plus_count() % 2 == 0, &one));
    obj.extend(cells_where(SettingTriple::new(true, true, true), |o| o.plus_count() % 2 == 1, &one));
    for (j, v) in obj {
        lp.objective[j] += v;
    }
    if let Some(k) = fixed {
        for yz in 0..4 {
            let s = SettingTriple::new(false, yz & 2 != 0, yz & 1 != 0);
            lp.add_row(format!("Alice outputs {k} at {s}"), cells_where(s, |o| o.a == k, &one), q(1));
        }
    }
    lp
}

pub fn fixed_output_bound(fixed: Outcome) -> Result<LpSolution, LpError> {
    solve(&fixed_output_program(Some(fixed)))
}

/// `E(F)` as a linear objective over behaviors.
pub fn expected_f_program() -> LinearProgram {
    let mut lp = ns_polytope();
    for s in SettingTriple::all() {
        for o in OutcomeTriple::all() {
            lp.objective[var(s, o)] = Q::new(bell_score(o, s).into(), 8.into());
        }
    }
    lp
}

/// Minimum of `E(F)` over the no-signaling polytope.
pub fn min_expected_f_over_ns() -> Result<LpSolution, LpError> {
    solve(&expected_f_program())
}

/// The 64 primal entries as an exact behavior.
pub fn solution_behavior(solution: &LpSolution) -> Behavior<Q> {
    Behavior::from_fn(|s, o| solution.primal[var(s, o)].clone()).expect("primal point is normalized")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub violations: Vec<String>,
}

/// Direct substitution into the no-signaling system.
pub fn ns_membership<T: Prob>(behavior: &Behavior<T>) -> Membership {
    let report = check_no_signaling(behavior);
    Membership { member: report.passes(), violations: report.violations.iter().map(|v| v.to_string()).collect() }
}

/// One inequality `lhs <= sum(rhs)` between cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CellInequality {
    pub lhs: (SettingTriple, OutcomeTriple),
    pub rhs: [(SettingTriple, OutcomeTriple); 3],
}

impl fmt::Display for CellInequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |(s, o): &(SettingTriple, OutcomeTriple)| format!("P({o}|{s})");
        let rhs: Vec<String> = self.rhs.iter().map(cell).collect();
        write!(f, "{} <= {}", cell(&self.lhs), rhs.join(" + "))
    }
}

/// The two cell chains behind the fixed-output bound, for Alice fixed to
/// `k`. The chains for `0` exchange `0` and `+` on Alice and Charlie.
pub fn fixed_output_chains(k: Outcome) -> [CellInequality; 2] {
    let cell = |s: &str, o: &str| -> (SettingTriple, OutcomeTriple) {
        let s: SettingTriple = s.parse().expect("setting literal");
        let mut o: OutcomeTriple = o.parse().expect("outcome literal");
        if k == Outcome::Zero {
            o.a = o.a.flipped();
            o.c = o.c.flipped();
        }
        (s, o)
    };
    [
        CellInequality {
            lhs: cell("ab'c'", "+++"),
            rhs: [cell("a'b'c'", "+++"), cell("a'bc'", "0++"), cell("abc'", "+0+")],
        },
        CellInequality {
            lhs: cell("ab'c'", "++0"),
            rhs: [cell("a'bc'", "++0"), cell("abc'", "+00"), cell("a'b'c'", "0+0")],
        },
    ]
}

/// Checks both chains on a behavior; returns the failing ones.
pub fn check_fixed_output_chains<T: Prob>(b: &Behavior<T>, k: Outcome) -> Vec<String> {
    fixed_output_chains(k)
        .into_iter()
        .filter(|c| {
            let rhs = c.rhs.iter().fold(T::zero(), |a, (s, o)| a + b.p(*s, *o).clone());
            let lhs = b.p(c.lhs.0, c.lhs.1).clone();
            !(lhs <= rhs || lhs.approx_eq(&rhs))
        })
        .map(|c| c.to_string())
        .collect()
}

/// `P(A = k | a y z) = 1` for every `y, z`.
pub fn alice_fixed_at_a<T: Prob>(b: &Behavior<T>, k: Outcome) -> bool {
    (0..4).all(|yz| {
        let s = SettingTriple::new(false, yz & 2 != 0, yz & 1 != 0);
        b.marginal(s, &[PartyId::Alice], &[k]).approx_eq(&T::one())
    })
}
