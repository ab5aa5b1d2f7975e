//! The tripartite Bell functional `F`, its expectation under uniform settings,
//! and the GHZ-based quantum behavior that pushes it below the network bound
//! of `1/8`.

use crate::behavior::{check_no_signaling, Behavior, FloatBehavior, OutcomeTriple, Prob};
use crate::dyadic::Dyadic;
use crate::joint::SettingTriple;
use crate::strategy::{Outcome, PartyId};

/// Scores by setting row (`abc`, `abc'`, ..., `a'b'c'`) and outcome column
/// (`+++`, `++0`, `+0+`, `+00`, `0++`, `0+0`, `00+`, `000`).
pub const SCORE_TABLE: [[u8; 8]; 8] = [
    [0, 2, 0, 2, 2, 0, 2, 0],
    [0, 0, 1, 1, 1, 1, 0, 0],
    [0, 2, 0, 2, 2, 0, 2, 0],
    [0, 0, 1, 1, 1, 1, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 1, 0, 1, 0, 0, 1],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [1, 0, 0, 1, 0, 1, 1, 0],
];

/// Predicate describing where a row of [`SCORE_TABLE`] is nonzero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NonzeroCondition {
    AliceDiffersFromCharlie,
    AliceDiffersFromBob,
    EvenPlusCount,
    OddPlusCount,
    Never,
}

impl NonzeroCondition {
    pub fn holds(self, o: OutcomeTriple) -> bool {
        match self {
            NonzeroCondition::AliceDiffersFromCharlie => o.a != o.c,
            NonzeroCondition::AliceDiffersFromBob => o.a != o.b,
            NonzeroCondition::EvenPlusCount => o.plus_count().is_multiple_of(2),
            NonzeroCondition::OddPlusCount => o.plus_count() % 2 == 1,
            NonzeroCondition::Never => false,
        }
    }
}

pub fn row_condition(settings: SettingTriple) -> NonzeroCondition {
    match (settings.x, settings.y, settings.z) {
        (false, _, false) => NonzeroCondition::AliceDiffersFromCharlie,
        (false, _, true) => NonzeroCondition::AliceDiffersFromBob,
        (true, false, true) => NonzeroCondition::EvenPlusCount,
        (true, true, true) => NonzeroCondition::OddPlusCount,
        (true, _, false) => NonzeroCondition::Never,
    }
}

pub fn bell_score(outcome: OutcomeTriple, settings: SettingTriple) -> u32 {
    SCORE_TABLE[settings.index()][7 - outcome.index()] as u32
}

/// The network bound on `E(F)`.
pub fn bound<T: Prob>() -> T {
    T::ratio(1, 8)
}

/// `(1/8) * sum over settings and outcomes of P * score`.
pub fn direct_expectation<T: Prob>(b: &Behavior<T>) -> T {
    let mut total = T::zero();
    for s in SettingTriple::all() {
        for o in OutcomeTriple::all() {
            let score = bell_score(o, s);
            if score > 0 {
                total = total + T::ratio(score as i64, 1) * b.p(s, o).clone();
            }
        }
    }
    total * T::ratio(1, 8)
}

/// The compact form, assembled from marginals taken at different remote
/// settings than the direct sum reads them from. It agrees with
/// [`direct_expectation`] on every no-signaling behavior.
pub fn compact_form<T: Prob>(b: &Behavior<T>) -> T {
    let st = |x, y, z| SettingTriple::new(x, y, z);
    let a_ne_c = b.prob_where(st(false, true, false), |o| o.a != o.c);
    let a_ne_b_b = b.prob_where(st(false, false, false), |o| o.a != o.b);
    let a_ne_b_b2 = b.prob_where(st(false, true, false), |o| o.a != o.b);
    let parity = |y: bool| b.prob_where(st(true, y, true), move |o| (o.plus_count() % 2 == 1) == y);
    (T::ratio(4, 1) * a_ne_c + a_ne_b_b + a_ne_b_b2 + parity(false) + parity(true)) * T::ratio(1, 8)
}

/// `E(F)` under uniform settings. On no-signaling behaviors the compact form
/// is evaluated as well and must agree.
pub fn expected_f<T: Prob>(b: &Behavior<T>) -> T {
    let direct = direct_expectation(b);
    if check_no_signaling(b).passes() {
        let compact = compact_form(b);
        assert!(
            direct.approx_eq(&compact),
            "direct {} and compact {} forms disagree",
            direct.render(),
            compact.render()
        );
    }
    direct
}

/// `E(F)` from support-point counts, each point weighing `2^-total_bits`.
pub fn expected_f_counts(counts: &[[u64; 8]; 8], total_bits: usize) -> Dyadic {
    Dyadic::new(score_sum(counts), total_bits as u32 + 3)
}

pub fn score_sum(counts: &[[u64; 8]; 8]) -> u64 {
    SettingTriple::all()
        .flat_map(|s| OutcomeTriple::all().map(move |o| (s, o)))
        .map(|(s, o)| bell_score(o, s) as u64 * counts[s.index()][o.index()])
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityCheck<T: Prob> {
    pub value: T,
    pub satisfies_bound: bool,
    /// `|value - 1/8|`.
    pub margin: T,
    pub tight: bool,
}

pub fn check_inequality<T: Prob>(b: &Behavior<T>) -> InequalityCheck<T> {
    let value = expected_f(b);
    let eighth: T = bound();
    let tight = value.approx_eq(&eighth);
    let satisfies_bound = tight || value > eighth;
    let margin = if value > eighth { value.clone() - eighth } else { eighth - value.clone() };
    InequalityCheck { value, satisfies_bound, margin, tight }
}

/// `C = cos^2(pi/8) / 4` and `S = sin^2(pi/8) / 4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantumModel {
    pub c: f64,
    pub s: f64,
}

impl Default for QuantumModel {
    fn default() -> Self {
        let t = std::f64::consts::FRAC_PI_8;
        QuantumModel { c: t.cos().powi(2) / 4.0, s: t.sin().powi(2) / 4.0 }
    }
}

impl QuantumModel {
    /// Rows in setting order, columns `+++` to `000`.
    pub fn closed_form_rows(&self) -> [[f64; 8]; 8] {
        let (c, s) = (self.c, self.s);
        let zz = [2.0 * c, 0.0, 2.0 * s, 0.0, 0.0, 2.0 * s, 0.0, 2.0 * c];
        let zx = [c, c, s, s, s, s, c, c];
        let xz = [c, s, s, c, c, s, s, c];
        [zz, zx, zz, zx, xz, [c, s, s, c, s, c, c, s], xz, [s, c, c, s, c, s, s, c]]
    }

    pub fn closed_form(&self) -> FloatBehavior {
        let rows = self.closed_form_rows();
        Behavior::from_fn(|st, o| rows[st.index()][7 - o.index()]).expect("rows sum to one")
    }

    /// `E(F) = 2S`.
    pub fn expectation(&self) -> f64 {
        2.0 * self.s
    }
}

type Mat2 = [[f64; 2]; 2];

/// Projector onto the `+` (eigenvalue +1) or `0` (eigenvalue -1) outcome.
fn projector(party: PartyId, primed: bool, outcome: Outcome) -> Mat2 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let z: Mat2 = [[1.0, 0.0], [0.0, -1.0]];
    let x: Mat2 = [[0.0, 1.0], [1.0, 0.0]];
    let observable = match (party, primed) {
        (PartyId::Bob, false) => [[r, r], [r, -r]],
        (PartyId::Bob, true) => [[r, -r], [-r, -r]],
        (_, false) => z,
        (_, true) => x,
    };
    let sign = if outcome == Outcome::Plus { 1.0 } else { -1.0 };
    let mut p = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            p[i][j] = ((i == j) as u8 as f64 + sign * observable[i][j]) / 2.0;
        }
    }
    p
}

/// `<psi| P_A x P_B x P_C |psi>` for the GHZ state, in an explicit
/// eight-dimensional representation.
pub fn qubit_oracle(settings: SettingTriple, outcome: OutcomeTriple) -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = [0.0; 8];
    psi[0] = r;
    psi[7] = r;
    let ps = PartyId::ALL.map(|p| projector(p, settings.get(p), outcome.get(p)));
    let mut total = 0.0;
    for row in 0..8 {
        for col in 0..8 {
            let mut m = 1.0;
            for (k, p) in ps.iter().enumerate() {
                let shift = 2 - k;
                m *= p[(row >> shift) & 1][(col >> shift) & 1];
            }
            total += psi[row] * m * psi[col];
        }
    }
    total
}

/// The quantum behavior, cross-checked cell by cell against
/// [`qubit_oracle`].
pub fn quantum_behavior() -> FloatBehavior {
    let b = QuantumModel::default().closed_form();
    for s in SettingTriple::all() {
        for o in OutcomeTriple::all() {
            let oracle = qubit_oracle(s, o);
            assert!((b.p(s, o) - oracle).abs() <= 1e-12, "{s}|{o}: table {} vs oracle {oracle}", b.p(s, o));
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{induced_behavior, ExactBehavior};
    use crate::strategy::{sample_random_network, BoxCounts, NetworkStrategy};
    use num_rational::BigRational;

    fn o(s: &str) -> OutcomeTriple {
        s.parse().unwrap()
    }

    fn st(s: &str) -> SettingTriple {
        s.parse().unwrap()
    }

    #[test]
    fn score_examples() {
        assert_eq!(bell_score(o("++0"), st("abc")), 2);
        assert_eq!(bell_score(o("+++"), st("abc")), 0);
        assert_eq!(bell_score(o("+00"), st("a'b'c'")), 1);
    }

    #[test]
    fn table_matches_conditions() {
        for s in SettingTriple::all() {
            let cond = row_condition(s);
            let weight = match cond {
                NonzeroCondition::AliceDiffersFromCharlie => 2,
                NonzeroCondition::Never => 0,
                _ => 1,
            };
            for out in OutcomeTriple::all() {
                let expected = if cond.holds(out) { weight } else { 0 };
                assert_eq!(bell_score(out, s), expected, "{s}|{out}");
            }
        }
    }

    #[test]
    fn trivial_behaviors_hit_the_bound() {
        for out in ["+++", "000"] {
            let b = ExactBehavior::deterministic(o(out));
            let check = check_inequality(&b);
            assert_eq!(check.value, BigRational::ratio(1, 8));
            assert!(check.satisfies_bound && check.tight);
            assert_eq!(check.margin, BigRational::ratio(0, 1));
        }
    }

    #[test]
    fn quantum_values() {
        let q = quantum_behavior();
        let m = QuantumModel::default();
        assert!((m.c + m.s - 0.25).abs() < 1e-15);
        assert!((q.p(st("abc"), o("+++")) - 0.4267767).abs() < 1e-7);
        assert_eq!(*q.p(st("abc"), o("++0")), 0.0);
        let check = check_inequality(&q);
        let expected = (std::f64::consts::FRAC_PI_8.sin().powi(2)) / 2.0;
        assert!((check.value - expected).abs() < 1e-12);
        assert!((check.value - 0.0732233).abs() < 1e-7);
        assert!(!check.satisfies_bound);
        assert!((check.margin - 0.0517767).abs() < 1e-7);
        assert!(check_no_signaling(&q).passes());
        assert!((compact_form(&q) - direct_expectation(&q)).abs() < 1e-12);
    }

    #[test]
    fn oracle_spot_check() {
        // (c + s)^2 / 8 with c = cos(pi/8), s = sin(pi/8).
        let t = std::f64::consts::FRAC_PI_8;
        let by_hand = (t.cos() + t.sin()).powi(2) / 8.0;
        assert!((qubit_oracle(st("a'bc'"), o("+++")) - by_hand).abs() < 1e-12);
        assert!((qubit_oracle(st("a'bc'"), o("+++")) - QuantumModel::default().c).abs() < 1e-12);
    }

    #[test]
    fn networks_respect_the_bound() {
        for seed in 0..300 {
            let counts = BoxCounts::uniform(1 + (seed % 2) as usize);
            let b = induced_behavior(&sample_random_network(counts, seed).unwrap()).unwrap();
            let check = check_inequality(&b);
            assert!(check.satisfies_bound, "seed {seed}: {}", check.value);
        }
    }

    #[test]
    fn counts_route_agrees() {
        let n = sample_random_network(BoxCounts::uniform(1), 3).unwrap();
        let net = n.compile().unwrap();
        let counts = crate::behavior::induced_counts(&net, crate::joint::PartyOrdering::ABC);
        let exact = expected_f(&induced_behavior(&n).unwrap());
        assert_eq!(expected_f_counts(&counts, 3).to_rational(), exact);
        let t = NetworkStrategy::trivial(BoxCounts::uniform(1), Outcome::Plus).compile().unwrap();
        let tc = crate::behavior::induced_counts(&t, crate::joint::PartyOrdering::ABC);
        assert_eq!(expected_f_counts(&tc, 3), Dyadic::new(1, 3));
    }

    #[test]
    fn expectation_is_affine() {
        let p1 = induced_behavior(&sample_random_network(BoxCounts::uniform(1), 1).unwrap()).unwrap();
        let p2 = induced_behavior(&sample_random_network(BoxCounts::uniform(1), 2).unwrap()).unwrap();
        for (n, d) in [(1, 3), (2, 7), (5, 9)] {
            let l = BigRational::ratio(n, d);
            let mixed = expected_f(&p1.mix(&p2, l.clone()));
            let expected = l.clone() * expected_f(&p1) + (BigRational::ratio(1, 1) - l) * expected_f(&p2);
            assert_eq!(mixed, expected);
        }
    }
}
