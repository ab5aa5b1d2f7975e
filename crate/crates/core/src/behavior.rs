//! Observable behaviors `P(ABC|XYZ)`, the no-signaling audit and a sequential
//! Monte Carlo sampler.
//!
//! A behavior is an 8 x 8 table indexed by setting (`4x + 2y + z`) and
//! outcome (`4A + 2B + C`, with `+` as 1). Exact behaviors use big rationals,
//! float behaviors use `f64` and compare within [`FLOAT_TOLERANCE`].

use std::fmt;
use std::io;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::boxes::{Bit, BoxQuery};
use crate::joint::{for_each_realization, Links, PartyOrdering, SettingTriple};
use crate::strategy::{CompiledNetwork, DecisionNode, NetworkStrategy, Outcome, PartyId, StrategyError};

pub const FLOAT_TOLERANCE: f64 = 1e-12;

/// Name of the generator behind [`simulate_rounds`], recorded in metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3), stream = chunk index";

/// Rounds per independently seeded chunk.
pub const CHUNK_ROUNDS: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Exact,
    Float,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Float => "float",
        })
    }
}

/// Probability arithmetic shared by exact and float behaviors.
pub trait Prob:
    Clone
    + fmt::Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + Zero
    + One
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + 'static
{
    const MODE: Mode;
    fn ratio(num: i64, den: u64) -> Self;
    /// Exact equality, or agreement within [`FLOAT_TOLERANCE`].
    fn approx_eq(&self, other: &Self) -> bool;
    fn is_negative_prob(&self) -> bool;
    fn to_f64(&self) -> f64;
    /// Fraction `p/q` in exact mode, 7 significant digits otherwise.
    fn render(&self) -> String;
    fn to_json(&self) -> Value;
    fn from_json(v: &Value) -> Result<Self, BehaviorError>;
}

impl Prob for BigRational {
    const MODE: Mode = Mode::Exact;

    fn ratio(num: i64, den: u64) -> Self {
        BigRational::new(num.into(), den.into())
    }

    fn approx_eq(&self, other: &Self) -> bool {
        self == other
    }

    fn is_negative_prob(&self) -> bool {
        self.is_negative()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn render(&self) -> String {
        self.to_string()
    }

    fn to_json(&self) -> Value {
        Value::String(self.to_string())
    }

    fn from_json(v: &Value) -> Result<Self, BehaviorError> {
        match v {
            Value::String(s) => parse_rational(s),
            Value::Number(n) if n.is_u64() => Ok(BigRational::from_integer(n.as_u64().unwrap().into())),
            _ => Err(BehaviorError::Parse(format!("exact probability must be a \"p/q\" string, got {v}"))),
        }
    }
}

/// Parses `p/q` or an integer.
pub fn parse_rational(s: &str) -> Result<BigRational, BehaviorError> {
    BigRational::from_str(s.trim()).map_err(|_| BehaviorError::Parse(format!("bad fraction {s:?}")))
}

impl Prob for f64 {
    const MODE: Mode = Mode::Float;

    fn ratio(num: i64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self - other).abs() <= FLOAT_TOLERANCE
    }

    fn is_negative_prob(&self) -> bool {
        *self < -FLOAT_TOLERANCE
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn render(&self) -> String {
        format_sig(*self, 7)
    }

    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self).map(Value::Number).unwrap_or(Value::Null)
    }

    fn from_json(v: &Value) -> Result<Self, BehaviorError> {
        match v {
            Value::Number(n) => Ok(n.as_f64().expect("json numbers are finite")),
            Value::String(s) => s.parse().map_err(|_| BehaviorError::Parse(format!("bad number {s:?}"))),
            _ => Err(BehaviorError::Parse(format!("float probability expected, got {v}"))),
        }
    }
}

/// Decimal with `digits` significant digits.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Outcomes of Alice, Bob and Charlie.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutcomeTriple {
    pub a: Outcome,
    pub b: Outcome,
    pub c: Outcome,
}

impl OutcomeTriple {
    pub fn new(a: Outcome, b: Outcome, c: Outcome) -> Self {
        OutcomeTriple { a, b, c }
    }

    /// `4A + 2B + C`.
    pub fn index(&self) -> usize {
        (self.a.bit() as usize) << 2 | (self.b.bit() as usize) << 1 | self.c.bit() as usize
    }

    pub fn from_index(i: usize) -> Self {
        OutcomeTriple::new(
            Outcome::from_bit(i & 4 != 0),
            Outcome::from_bit(i & 2 != 0),
            Outcome::from_bit(i & 1 != 0),
        )
    }

    pub fn all() -> impl Iterator<Item = OutcomeTriple> {
        (0..8).map(OutcomeTriple::from_index)
    }

    /// Column order of printed tables: `+++`, `++0`, ..., `000`.
    pub fn table_order() -> [OutcomeTriple; 8] {
        std::array::from_fn(|col| OutcomeTriple::from_index(7 - col))
    }

    pub fn get(&self, p: PartyId) -> Outcome {
        match p {
            PartyId::Alice => self.a,
            PartyId::Bob => self.b,
            PartyId::Charlie => self.c,
        }
    }

    /// Number of `+` symbols.
    pub fn plus_count(&self) -> u32 {
        self.index().count_ones()
    }
}

impl fmt::Display for OutcomeTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.a, self.b, self.c)
    }
}

impl FromStr for OutcomeTriple {
    type Err = BehaviorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let o: Vec<Outcome> = s.chars().filter_map(Outcome::from_symbol).collect();
        if o.len() != 3 || s.chars().count() != 3 {
            return Err(BehaviorError::Parse(format!("bad outcome triple {s:?}")));
        }
        Ok(OutcomeTriple::new(o[0], o[1], o[2]))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BehaviorError {
    #[error("P({outcome}|{settings}) is negative")]
    Negative { settings: SettingTriple, outcome: OutcomeTriple },
    #[error("row {settings} sums to {sum}, not 1")]
    NotNormalized { settings: SettingTriple, sum: String },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("rounds must be positive")]
    ZeroRounds,
    #[error("setting {0} was never drawn")]
    UnobservedSetting(SettingTriple),
    #[error("{0}")]
    Parse(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// `table[setting index][outcome index]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Behavior<T: Prob> {
    table: [[T; 8]; 8],
}

pub type ExactBehavior = Behavior<BigRational>;
pub type FloatBehavior = Behavior<f64>;

impl<T: Prob> Behavior<T> {
    /// Checks non-negativity and per-row normalization.
    pub fn new(table: [[T; 8]; 8]) -> Result<Self, BehaviorError> {
        for (s, row) in table.iter().enumerate() {
            let settings = SettingTriple::from_index(s);
            if let Some(o) = row.iter().position(|p| p.is_negative_prob()) {
                return Err(BehaviorError::Negative { settings, outcome: OutcomeTriple::from_index(o) });
            }
            let sum = row.iter().cloned().fold(T::zero(), |a, b| a + b);
            if !sum.approx_eq(&T::one()) {
                return Err(BehaviorError::NotNormalized { settings, sum: sum.render() });
            }
        }
        Ok(Behavior { table })
    }

    pub fn from_fn<F: FnMut(SettingTriple, OutcomeTriple) -> T>(mut f: F) -> Result<Self, BehaviorError> {
        let table = std::array::from_fn(|s| {
            std::array::from_fn(|o| f(SettingTriple::from_index(s), OutcomeTriple::from_index(o)))
        });
        Self::new(table)
    }

    /// Every setting outputs `outcome` with certainty.
    pub fn deterministic(outcome: OutcomeTriple) -> Self {
        Self::from_fn(|_, o| if o == outcome { T::one() } else { T::zero() }).expect("normalized")
    }

    pub fn mode(&self) -> Mode {
        T::MODE
    }

    pub fn table(&self) -> &[[T; 8]; 8] {
        &self.table
    }

    pub fn p(&self, settings: SettingTriple, outcome: OutcomeTriple) -> &T {
        &self.table[settings.index()][outcome.index()]
    }

    /// Total probability of outcomes satisfying `pred` at `settings`.
    pub fn prob_where<F: Fn(OutcomeTriple) -> bool>(&self, settings: SettingTriple, pred: F) -> T {
        OutcomeTriple::all()
            .filter(|o| pred(*o))
            .fold(T::zero(), |acc, o| acc + self.p(settings, o).clone())
    }

    /// `P(outcome restricted to parties | settings)`.
    pub fn marginal(&self, settings: SettingTriple, parties: &[PartyId], outcomes: &[Outcome]) -> T {
        self.prob_where(settings, |o| parties.iter().zip(outcomes).all(|(p, v)| o.get(*p) == *v))
    }

    pub fn to_float(&self) -> FloatBehavior {
        Behavior { table: std::array::from_fn(|s| std::array::from_fn(|o| self.table[s][o].to_f64())) }
    }

    /// Cellwise agreement (exact or within tolerance).
    pub fn approx_eq(&self, other: &Self) -> bool {
        self.table.iter().flatten().zip(other.table.iter().flatten()).all(|(a, b)| a.approx_eq(b))
    }

    /// Mixture `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Self, lambda: T) -> Self {
        let mu = T::one() - lambda.clone();
        Behavior {
            table: std::array::from_fn(|s| {
                std::array::from_fn(|o| lambda.clone() * self.table[s][o].clone() + mu.clone() * other.table[s][o].clone())
            }),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut probs = Map::new();
        for s in SettingTriple::all() {
            for o in OutcomeTriple::all() {
                probs.insert(format!("{s}|{o}"), self.p(s, o).to_json());
            }
        }
        let mut root = Map::new();
        root.insert("mode".into(), Value::String(T::MODE.to_string()));
        root.insert("probabilities".into(), Value::Object(probs));
        Value::Object(root)
    }

    fn from_json_value(v: &Value) -> Result<Self, BehaviorError> {
        let probs = v
            .get("probabilities")
            .and_then(Value::as_object)
            .ok_or_else(|| BehaviorError::Parse("missing \"probabilities\" object".into()))?;
        if probs.len() != 64 {
            return Err(BehaviorError::Parse(format!("expected 64 entries, found {}", probs.len())));
        }
        let mut table: [[Option<T>; 8]; 8] = Default::default();
        for (key, value) in probs {
            let (s, o) = key
                .split_once('|')
                .ok_or_else(|| BehaviorError::Parse(format!("bad key {key:?}")))?;
            let s: SettingTriple = s.parse().map_err(|e| BehaviorError::Parse(format!("{e}")))?;
            let o: OutcomeTriple = o.parse()?;
            table[s.index()][o.index()] = Some(T::from_json(value)?);
        }
        let mut missing = None;
        let table = std::array::from_fn(|s| {
            std::array::from_fn(|o| {
                table[s][o].take().unwrap_or_else(|| {
                    missing = Some((s, o));
                    T::zero()
                })
            })
        });
        if let Some((s, o)) = missing {
            return Err(BehaviorError::Parse(format!(
                "missing entry {}|{}",
                SettingTriple::from_index(s),
                OutcomeTriple::from_index(o)
            )));
        }
        Self::new(table)
    }

    /// Rows in setting order, columns `+++` to `000`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), BehaviorError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["settings".to_string()];
        header.extend(OutcomeTriple::table_order().iter().map(|o| o.to_string()));
        wtr.write_record(&header)?;
        for s in SettingTriple::all() {
            let mut row = vec![s.to_string()];
            row.extend(OutcomeTriple::table_order().iter().map(|o| self.p(s, *o).render()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Text table in the same layout as [`Behavior::write_csv`].
    pub fn render_table(&self) -> String {
        let cells: Vec<Vec<String>> = SettingTriple::all()
            .map(|s| OutcomeTriple::table_order().iter().map(|o| self.p(s, *o).render()).collect())
            .collect();
        let width = cells.iter().flatten().map(|c| c.len()).max().unwrap_or(1).max(3);
        let mut out = format!("{:<7}", "");
        for o in OutcomeTriple::table_order() {
            out += &format!(" {:>width$}", o.to_string());
        }
        out.push('\n');
        for (s, row) in SettingTriple::all().zip(&cells) {
            out += &format!("{:<7}", s.to_string());
            for c in row {
                out += &format!(" {c:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

/// A behavior read from disk in whichever mode it declares.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyBehavior {
    Exact(Box<ExactBehavior>),
    Float(Box<FloatBehavior>),
}

impl AnyBehavior {
    pub fn from_json(text: &str) -> Result<Self, BehaviorError> {
        let v: Value = serde_json::from_str(text)?;
        match v.get("mode").and_then(Value::as_str) {
            Some("exact") => Ok(AnyBehavior::Exact(Box::new(ExactBehavior::from_json_value(&v)?))),
            Some("float") => Ok(AnyBehavior::Float(Box::new(FloatBehavior::from_json_value(&v)?))),
            other => Err(BehaviorError::Parse(format!("mode must be \"exact\" or \"float\", got {other:?}"))),
        }
    }

    pub fn to_float(&self) -> FloatBehavior {
        match self {
            AnyBehavior::Exact(b) => b.to_float(),
            AnyBehavior::Float(b) => (**b).clone(),
        }
    }
}

/// Outcome counts over the `2^counts.total()` equally weighted support
/// points of each setting.
pub fn induced_counts(net: &CompiledNetwork, ordering: PartyOrdering) -> [[u64; 8]; 8] {
    let links = Links::new(&net.counts);
    let mut table = [[0u64; 8]; 8];
    for settings in SettingTriple::all() {
        let row = &mut table[settings.index()];
        for_each_realization(net, &links, settings, ordering, |r| {
            let o = outcome_of(net, settings, &r.outputs);
            row[o.index()] += 1;
        });
    }
    table
}

fn outcome_of(net: &CompiledNetwork, settings: SettingTriple, words: &[u32; 3]) -> OutcomeTriple {
    let [a, b, c] = PartyId::ALL.map(|p| net.party(p).output(words[p.index()], settings.get(p)));
    OutcomeTriple::new(a, b, c)
}

pub fn counts_to_behavior(counts: &[[u64; 8]; 8], total_bits: usize) -> ExactBehavior {
    let den = BigRational::from_integer(num_bigint::BigInt::from(1u8) << total_bits);
    Behavior::from_fn(|s, o| BigRational::from_integer(counts[s.index()][o.index()].into()) / den.clone())
        .expect("support weights sum to one")
}

/// Exact behavior induced by a network.
pub fn induced_behavior(network: &NetworkStrategy) -> Result<ExactBehavior, BehaviorError> {
    induced_behavior_with(network, PartyOrdering::ABC)
}

pub fn induced_behavior_with(network: &NetworkStrategy, ordering: PartyOrdering) -> Result<ExactBehavior, BehaviorError> {
    let net = network.compile()?;
    Ok(induced_behavior_compiled(&net, ordering))
}

pub fn induced_behavior_compiled(net: &CompiledNetwork, ordering: PartyOrdering) -> ExactBehavior {
    counts_to_behavior(&induced_counts(net, ordering), net.counts.total())
}

/// Frequency tallies from [`simulate_rounds`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Empirical {
    pub rounds: u64,
    pub seed: u64,
    pub ordering: PartyOrdering,
    pub counts: [[u64; 8]; 8],
}

impl Empirical {
    pub fn setting_total(&self, settings: SettingTriple) -> u64 {
        self.counts[settings.index()].iter().sum()
    }

    /// Conditional frequencies; fails if some setting was never drawn.
    pub fn to_behavior(&self) -> Result<FloatBehavior, BehaviorError> {
        for s in SettingTriple::all() {
            if self.setting_total(s) == 0 {
                return Err(BehaviorError::UnobservedSetting(s));
            }
        }
        Behavior::from_fn(|s, o| self.counts[s.index()][o.index()] as f64 / self.setting_total(s) as f64)
    }

    /// Binomial standard error of a cell given its true probability.
    pub fn standard_error(&self, settings: SettingTriple, p: f64) -> f64 {
        (p * (1.0 - p) / self.setting_total(settings) as f64).sqrt()
    }
}

struct Sampler<'a> {
    network: &'a NetworkStrategy,
    partners: [Vec<(usize, usize)>; 3],
}

impl Sampler<'_> {
    /// One round: every party walks its tree in turn; a box output is drawn
    /// fresh unless its counterpart half has already been measured.
    fn round<R: Rng>(&self, ordering: PartyOrdering, settings: SettingTriple, rng: &mut R) -> OutcomeTriple {
        let counts = &self.network.counts;
        let mut state: [Vec<Option<(Bit, Bit)>>; 3] = PartyId::ALL.map(|p| vec![None; counts.owned(p)]);
        let mut outcome = [Outcome::Zero; 3];
        for p in ordering.sequence {
            let strategy = self.network.party(p);
            let setting = settings.get(p);
            let mut node: Option<&DecisionNode> = strategy.trees[setting as usize].as_ref();
            let mut word = 0u32;
            while let Some(n) = node {
                let i = counts.local_index(p, n.target).expect("validated");
                let (q, j) = self.partners[p.index()][i];
                let other = state[q][j];
                let query = BoxQuery {
                    own_input: n.input,
                    counterpart_input: other.is_some_and(|(_, inp)| inp),
                    counterpart_output: other.map(|(out, _)| out),
                };
                let output = query.forced_output().unwrap_or_else(|| rng.gen());
                state[p.index()][i] = Some((output, n.input));
                word |= (output as u32) << i;
                node = n.child(output);
            }
            outcome[p.index()] =
                strategy.output(counts.owned(p), word, setting).expect("validated");
        }
        OutcomeTriple::new(outcome[0], outcome[1], outcome[2])
    }
}

/// Samples `rounds` rounds with uniformly drawn settings. Rounds are split
/// into chunks of [`CHUNK_ROUNDS`], chunk `k` using stream `k` of a ChaCha8
/// generator seeded with `seed`, so results do not depend on thread count.
pub fn simulate_rounds(
    network: &NetworkStrategy,
    ordering: PartyOrdering,
    rounds: u64,
    seed: u64,
) -> Result<Empirical, BehaviorError> {
    if rounds == 0 {
        return Err(BehaviorError::ZeroRounds);
    }
    let report = network.validate();
    if !report.is_valid() {
        return Err(StrategyError::Invalid(report).into());
    }
    let counts = network.counts;
    let sampler = Sampler {
        network,
        partners: PartyId::ALL.map(|p| {
            (0..counts.owned(p)).map(|i| {
                let (q, j) = counts.partner(p, i);
                (q.index(), j)
            })
            .collect()
        }),
    };
    let chunks = rounds.div_ceil(CHUNK_ROUNDS);
    let tallies = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let n = CHUNK_ROUNDS.min(rounds - k * CHUNK_ROUNDS);
            let mut t = [[0u64; 8]; 8];
            for _ in 0..n {
                let settings = SettingTriple::from_index(rng.gen_range(0..8));
                let o = sampler.round(ordering, settings, &mut rng);
                t[settings.index()][o.index()] += 1;
            }
            t
        })
        .reduce(
            || [[0u64; 8]; 8],
            |mut a, b| {
                for s in 0..8 {
                    for o in 0..8 {
                        a[s][o] += b[s][o];
                    }
                }
                a
            },
        );
    Ok(Empirical { rounds, seed, ordering, counts: tallies })
}

/// One no-signaling equality: the sum of `lhs` cells equals the sum of
/// `rhs` cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NsEquality {
    pub name: String,
    pub lhs: Vec<(SettingTriple, OutcomeTriple)>,
    pub rhs: Vec<(SettingTriple, OutcomeTriple)>,
}

fn cells(settings: SettingTriple, parties: &[PartyId], outcomes: &[Outcome]) -> Vec<(SettingTriple, OutcomeTriple)> {
    OutcomeTriple::all()
        .filter(|o| parties.iter().zip(outcomes).all(|(p, v)| o.get(*p) == *v))
        .map(|o| (settings, o))
        .collect()
}

fn setting_label(p: PartyId, bit: Bit) -> String {
    format!("{}{}", p.symbol().to_ascii_lowercase(), if bit { "'" } else { "" })
}

/// The full no-signaling system for three parties with binary settings and
/// outcomes: every two-party marginal is independent of the remaining
/// setting (48 equalities), and every one-party marginal is independent of
/// the two remote settings (36 equalities, each remote pair compared to the
/// unprimed pair).
pub fn ns_equalities() -> Vec<NsEquality> {
    let mut out = Vec::new();
    let pairs = [
        [PartyId::Alice, PartyId::Bob],
        [PartyId::Alice, PartyId::Charlie],
        [PartyId::Bob, PartyId::Charlie],
    ];
    for pair in pairs {
        let third = PartyId::ALL.into_iter().find(|p| !pair.contains(p)).unwrap();
        for sp in 0..4usize {
            let (s0, s1) = (sp & 2 != 0, sp & 1 != 0);
            let base = SettingTriple::default().with(pair[0], s0).with(pair[1], s1);
            for op in 0..4usize {
                let outs = [Outcome::from_bit(op & 2 != 0), Outcome::from_bit(op & 1 != 0)];
                let name = format!(
                    "P({}{}={}{} | {}{}) independent of {}'s setting",
                    pair[0].symbol(),
                    pair[1].symbol(),
                    outs[0],
                    outs[1],
                    setting_label(pair[0], s0),
                    setting_label(pair[1], s1),
                    third
                );
                out.push(NsEquality {
                    name,
                    lhs: cells(base.with(third, false), &pair, &outs),
                    rhs: cells(base.with(third, true), &pair, &outs),
                });
            }
        }
    }
    for p in PartyId::ALL {
        let [q, r] = p.others();
        for s in [false, true] {
            for o in Outcome::ALL {
                let base = SettingTriple::default().with(p, s);
                for remote in 1..4usize {
                    let (sq, sr) = (remote & 2 != 0, remote & 1 != 0);
                    let name = format!(
                        "P({}={o} | {}) same under {}{} and {}{}",
                        p.symbol(),
                        setting_label(p, s),
                        setting_label(q, sq),
                        setting_label(r, sr),
                        setting_label(q, false),
                        setting_label(r, false)
                    );
                    out.push(NsEquality {
                        name,
                        lhs: cells(base.with(q, sq).with(r, sr), &[p], &[o]),
                        rhs: cells(base, &[p], &[o]),
                    });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct NsViolation {
    pub equality: String,
    pub lhs: String,
    pub rhs: String,
}

impl fmt::Display for NsViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} vs {}", self.equality, self.lhs, self.rhs)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NsReport {
    pub checked: usize,
    pub violations: Vec<NsViolation>,
}

impl NsReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits every equality of [`ns_equalities`], exactly or within tolerance.
pub fn check_no_signaling<T: Prob>(behavior: &Behavior<T>) -> NsReport {
    let eqs = ns_equalities();
    let sum = |cells: &[(SettingTriple, OutcomeTriple)]| {
        cells.iter().fold(T::zero(), |acc, (s, o)| acc + behavior.p(*s, *o).clone())
    };
    let violations = eqs
        .iter()
        .filter_map(|e| {
            let (l, r) = (sum(&e.lhs), sum(&e.rhs));
            (!l.approx_eq(&r)).then(|| NsViolation { equality: e.name.clone(), lhs: l.render(), rhs: r.render() })
        })
        .collect();
    NsReport { checked: eqs.len(), violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{sample_random_network, BoxCounts, PartyStrategy};

    fn q(n: i64, d: u64) -> BigRational {
        BigRational::ratio(n, d)
    }

    #[test]
    fn outcome_indexing() {
        assert_eq!("+0+".parse::<OutcomeTriple>().unwrap().index(), 5);
        assert_eq!(OutcomeTriple::table_order()[0].to_string(), "+++");
        assert_eq!(OutcomeTriple::table_order()[7].to_string(), "000");
        assert_eq!(OutcomeTriple::table_order()[1].to_string(), "++0");
        assert!("+x0".parse::<OutcomeTriple>().is_err());
    }

    #[test]
    fn formatting() {
        assert_eq!(format_sig(0.0732233047, 7), "0.07322330");
        assert_eq!(format_sig(0.4267766953, 7), "0.4267767");
        assert_eq!(q(7, 64).render(), "7/64");
        assert_eq!(q(8, 8).render(), "1");
    }

    #[test]
    fn trivial_behaviors() {
        for outcome in Outcome::ALL {
            let n = NetworkStrategy::trivial(BoxCounts::uniform(1), outcome);
            let b = induced_behavior(&n).unwrap();
            let all = OutcomeTriple::new(outcome, outcome, outcome);
            assert_eq!(b, ExactBehavior::deterministic(all));
        }
    }

    #[test]
    fn rejects_bad_tables() {
        let mut t: [[f64; 8]; 8] = [[0.125; 8]; 8];
        t[3][0] = -0.1;
        assert!(matches!(FloatBehavior::new(t), Err(BehaviorError::Negative { .. })));
        t[3][0] = 0.2;
        assert!(matches!(FloatBehavior::new(t), Err(BehaviorError::NotNormalized { .. })));
    }

    #[test]
    fn ns_system_size() {
        let eqs = ns_equalities();
        assert_eq!(eqs.len(), 84);
        assert_eq!(eqs.iter().filter(|e| e.lhs.len() == 2).count(), 48);
        assert_eq!(eqs.iter().filter(|e| e.lhs.len() == 4).count(), 36);
    }

    #[test]
    fn induced_behaviors_are_no_signaling() {
        for seed in 0..200 {
            let counts = BoxCounts::new(1 + (seed % 2) as usize, 1, 1 + (seed % 3) as usize);
            let n = sample_random_network(counts, seed).unwrap();
            let b = induced_behavior(&n).unwrap();
            let r = check_no_signaling(&b);
            assert!(r.passes(), "{:?}", r.violations);
        }
    }

    #[test]
    fn signaling_fixture_is_named() {
        // A copies Bob's setting.
        let b = ExactBehavior::from_fn(|s, o| {
            let want = OutcomeTriple::new(Outcome::from_bit(s.y), Outcome::Zero, Outcome::Zero);
            if o == want {
                q(1, 1)
            } else {
                q(0, 1)
            }
        })
        .unwrap();
        let r = check_no_signaling(&b);
        assert!(!r.passes());
        assert!(r
            .violations
            .iter()
            .any(|v| v.equality == "P(A=+ | a) same under b'c and bc"), "{:?}", r.violations);
    }

    #[test]
    fn orderings_agree() {
        let n = sample_random_network(BoxCounts::uniform(2), 5).unwrap();
        let reference = induced_behavior(&n).unwrap();
        for ordering in PartyOrdering::all() {
            assert_eq!(induced_behavior_with(&n, ordering).unwrap(), reference);
        }
    }

    #[test]
    fn alice_marginal_ignores_other_strategies() {
        let counts = BoxCounts::uniform(1);
        let base = sample_random_network(counts, 1).unwrap();
        let reference = induced_behavior(&base).unwrap();
        for seed in 100..150 {
            let other = sample_random_network(counts, seed).unwrap();
            let mut n = base.clone();
            n.parties[1] = other.parties[1].clone();
            n.parties[2] = other.parties[2].clone();
            let b = induced_behavior(&n).unwrap();
            for s in SettingTriple::all() {
                for o in Outcome::ALL {
                    assert_eq!(
                        b.marginal(s, &[PartyId::Alice], &[o]),
                        reference.marginal(s, &[PartyId::Alice], &[o])
                    );
                }
            }
        }
    }

    #[test]
    fn bob_charlie_marginal_ignores_alice() {
        let counts = BoxCounts::new(2, 1, 1);
        let base = sample_random_network(counts, 2).unwrap();
        let reference = induced_behavior(&base).unwrap();
        let mut n = base.clone();
        n.parties[0] = PartyStrategy::trivial(PartyId::Alice, &counts, Outcome::Plus);
        let b = induced_behavior(&n).unwrap();
        let bc = [PartyId::Bob, PartyId::Charlie];
        for s in SettingTriple::all() {
            for ob in Outcome::ALL {
                for oc in Outcome::ALL {
                    assert_eq!(b.marginal(s, &bc, &[ob, oc]), reference.marginal(s, &bc, &[ob, oc]));
                }
            }
        }
    }

    #[test]
    fn json_and_csv_round_trip() {
        let n = sample_random_network(BoxCounts::uniform(1), 9).unwrap();
        let b = induced_behavior(&n).unwrap();
        let text = b.to_json().to_string();
        assert!(text.contains("\"ab'c|+0+\""));
        assert_eq!(AnyBehavior::from_json(&text).unwrap(), AnyBehavior::Exact(Box::new(b.clone())));
        let f = b.to_float();
        let back = AnyBehavior::from_json(&f.to_json().to_string()).unwrap();
        assert!(back.to_float().approx_eq(&f));
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        assert!(csv.starts_with("settings,+++,++0,+0+,+00,0++,0+0,00+,000\nabc,"));
        assert_eq!(csv.lines().count(), 9);
    }

    #[test]
    fn simulation_basics() {
        let n = NetworkStrategy::trivial(BoxCounts::uniform(1), Outcome::Plus);
        let e = simulate_rounds(&n, PartyOrdering::ABC, 1000, 4).unwrap();
        let b = e.to_behavior().unwrap();
        for s in SettingTriple::all() {
            assert_eq!(*b.p(s, "+++".parse().unwrap()), 1.0);
        }
        assert!(matches!(simulate_rounds(&n, PartyOrdering::ABC, 0, 4), Err(BehaviorError::ZeroRounds)));
        let again = simulate_rounds(&n, PartyOrdering::CAB, 1000, 4).unwrap();
        assert_eq!(e.counts.iter().map(|r| r.iter().sum::<u64>()).collect::<Vec<_>>(),
                   again.counts.iter().map(|r| r.iter().sum::<u64>()).collect::<Vec<_>>());
    }

    #[test]
    fn simulation_matches_exact() {
        let n = sample_random_network(BoxCounts::uniform(1), 21).unwrap();
        let exact = induced_behavior(&n).unwrap().to_float();
        let e = simulate_rounds(&n, PartyOrdering::CAB, 200_000, 8).unwrap();
        let emp = e.to_behavior().unwrap();
        for s in SettingTriple::all() {
            for o in OutcomeTriple::all() {
                let p = *exact.p(s, o);
                let se = e.standard_error(s, p).max(1e-9);
                assert!((emp.p(s, o) - p).abs() <= 5.0 * se, "{s}|{o}: {} vs {p}", emp.p(s, o));
            }
        }
    }

    #[test]
    fn mixtures_stay_normalized() {
        let a = ExactBehavior::deterministic("+++".parse().unwrap());
        let b = ExactBehavior::deterministic("000".parse().unwrap());
        let m = a.mix(&b, q(1, 3));
        assert_eq!(*m.p(SettingTriple::default(), "+++".parse().unwrap()), q(1, 3));
        assert!(ExactBehavior::new(m.table().clone()).is_ok());
    }
}
