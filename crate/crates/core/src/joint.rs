//! The joint distribution of every box output, for a fixed setting triple.
//!
//! Parties are walked one after another. The first party's outputs are all
//! free, the second party's outputs on boxes shared with the third are free,
//! and everything else is forced by the PR relation. Each completed
//! assignment therefore has weight `2^-(n_ab + n_ac + n_bc)`, and the result
//! does not depend on which ordering was used.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;

use crate::boxes::{pr_determined_output, Bit};
use crate::dyadic::Dyadic;
use crate::strategy::{BitStr, BoxCounts, CompiledNetwork, NetworkStrategy, PartyId, StrategyError, MAX_OWNED_BOXES};

/// Alice's, Bob's and Charlie's settings; `true` is the primed setting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SettingTriple {
    pub x: Bit,
    pub y: Bit,
    pub z: Bit,
}

impl SettingTriple {
    pub fn new(x: Bit, y: Bit, z: Bit) -> Self {
        SettingTriple { x, y, z }
    }

    /// `4x + 2y + z`.
    pub fn index(&self) -> usize {
        (self.x as usize) << 2 | (self.y as usize) << 1 | self.z as usize
    }

    pub fn from_index(i: usize) -> Self {
        SettingTriple::new(i & 4 != 0, i & 2 != 0, i & 1 != 0)
    }

    pub fn all() -> impl Iterator<Item = SettingTriple> {
        (0..8).map(SettingTriple::from_index)
    }

    pub fn get(&self, p: PartyId) -> Bit {
        match p {
            PartyId::Alice => self.x,
            PartyId::Bob => self.y,
            PartyId::Charlie => self.z,
        }
    }

    pub fn with(mut self, p: PartyId, value: Bit) -> Self {
        match p {
            PartyId::Alice => self.x = value,
            PartyId::Bob => self.y = value,
            PartyId::Charlie => self.z = value,
        }
        self
    }
}

impl fmt::Display for SettingTriple {
    /// Symbolic form such as `ab'c`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, primed) in [('a', self.x), ('b', self.y), ('c', self.z)] {
            write!(f, "{c}{}", if primed { "'" } else { "" })?;
        }
        Ok(())
    }
}

impl FromStr for SettingTriple {
    type Err = JointError;
    /// Accepts the symbolic form (`ab'c`) or three bits (`010`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || JointError::Parse(format!("bad setting triple {s:?}"));
        let s = s.trim();
        if s.len() == 3 && s.chars().all(|c| c == '0' || c == '1') {
            let b: Vec<bool> = s.chars().map(|c| c == '1').collect();
            return Ok(SettingTriple::new(b[0], b[1], b[2]));
        }
        let mut bits = Vec::new();
        let mut chars = s.chars().peekable();
        for expected in ['a', 'b', 'c'] {
            if chars.next() != Some(expected) {
                return Err(bad());
            }
            let primed = chars.peek() == Some(&'\'');
            if primed {
                chars.next();
            }
            bits.push(primed);
        }
        if chars.next().is_some() {
            return Err(bad());
        }
        Ok(SettingTriple::new(bits[0], bits[1], bits[2]))
    }
}

/// Order in which parties are walked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PartyOrdering {
    pub sequence: [PartyId; 3],
}

impl PartyOrdering {
    pub const ABC: PartyOrdering =
        PartyOrdering { sequence: [PartyId::Alice, PartyId::Bob, PartyId::Charlie] };
    pub const CAB: PartyOrdering =
        PartyOrdering { sequence: [PartyId::Charlie, PartyId::Alice, PartyId::Bob] };

    pub fn new(sequence: [PartyId; 3]) -> Result<Self, JointError> {
        let distinct: BTreeSet<PartyId> = sequence.iter().copied().collect();
        if distinct.len() != 3 {
            return Err(JointError::Parse(format!("{sequence:?} is not a permutation")));
        }
        Ok(PartyOrdering { sequence })
    }

    pub fn all() -> [PartyOrdering; 6] {
        use PartyId::*;
        [
            [Alice, Bob, Charlie],
            [Alice, Charlie, Bob],
            [Bob, Alice, Charlie],
            [Bob, Charlie, Alice],
            [Charlie, Alice, Bob],
            [Charlie, Bob, Alice],
        ]
        .map(|sequence| PartyOrdering { sequence })
    }
}

impl Default for PartyOrdering {
    fn default() -> Self {
        Self::ABC
    }
}

impl fmt::Display for PartyOrdering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.sequence {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for PartyOrdering {
    type Err = JointError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parties: Vec<PartyId> = s
            .trim()
            .chars()
            .map(|c| PartyId::from_symbol(c).ok_or_else(|| JointError::Parse(format!("bad ordering {s:?}"))))
            .collect::<Result<_, _>>()?;
        let sequence: [PartyId; 3] =
            parties.try_into().map_err(|_| JointError::Parse(format!("bad ordering {s:?}")))?;
        PartyOrdering::new(sequence)
    }
}

/// One of the six per-party strings, named owner first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    AB,
    AC,
    BA,
    BC,
    CA,
    CB,
}

impl Slot {
    pub const ALL: [Slot; 6] = [Slot::AB, Slot::AC, Slot::BA, Slot::BC, Slot::CA, Slot::CB];

    pub fn owner(self) -> PartyId {
        match self {
            Slot::AB | Slot::AC => PartyId::Alice,
            Slot::BA | Slot::BC => PartyId::Bob,
            Slot::CA | Slot::CB => PartyId::Charlie,
        }
    }

    pub fn counterpart(self) -> PartyId {
        match self {
            Slot::BA | Slot::CA => PartyId::Alice,
            Slot::AB | Slot::CB => PartyId::Bob,
            Slot::AC | Slot::BC => PartyId::Charlie,
        }
    }

    /// Column name, e.g. `a_b`.
    pub fn name(self) -> &'static str {
        match self {
            Slot::AB => "a_b",
            Slot::AC => "a_c",
            Slot::BA => "b_a",
            Slot::BC => "b_c",
            Slot::CA => "c_a",
            Slot::CB => "c_b",
        }
    }

    pub fn len(self, counts: &BoxCounts) -> usize {
        counts.pair(self.owner(), self.counterpart())
    }

    /// First local bit of this string within the owner's word.
    pub fn offset(self, counts: &BoxCounts) -> usize {
        let owner = self.owner();
        if owner.others()[0] == self.counterpart() {
            0
        } else {
            counts.pair(owner, owner.others()[0])
        }
    }
}

/// Outputs of every box at every party. `words[p]` holds party `p`'s outputs
/// with bit `i` for local box `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FullAssignment {
    pub words: [u32; 3],
}

impl FullAssignment {
    pub fn word(&self, p: PartyId) -> u32 {
        self.words[p.index()]
    }

    pub fn slot(&self, slot: Slot, counts: &BoxCounts) -> BitStr {
        let w = self.words[slot.owner().index()] >> slot.offset(counts);
        BitStr::new(w, slot.len(counts))
    }

    /// Builds an assignment from the six strings in [`Slot::ALL`] order.
    pub fn from_slots(counts: &BoxCounts, strings: [BitStr; 6]) -> Result<Self, JointError> {
        let mut words = [0u32; 3];
        for (slot, s) in Slot::ALL.into_iter().zip(strings) {
            if s.len() != slot.len(counts) {
                return Err(JointError::Parse(format!(
                    "{} = {s} should have {} bits",
                    slot.name(),
                    slot.len(counts)
                )));
            }
            words[slot.owner().index()] |= s.bits() << slot.offset(counts);
        }
        Ok(FullAssignment { words })
    }

    pub fn display(&self, counts: &BoxCounts) -> String {
        Slot::ALL
            .iter()
            .map(|s| format!("{}={}", s.name(), self.slot(*s, counts)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Exact distribution of box outputs at one setting triple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointDistribution {
    pub counts: BoxCounts,
    pub settings: SettingTriple,
    pub support: BTreeMap<FullAssignment, Dyadic>,
}

#[derive(Debug, thiserror::Error)]
pub enum JointError {
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Parse(String),
}

#[derive(Clone, Copy)]
struct Link {
    party: u8,
    local: u8,
    index: u8,
}

/// For each party and local box: the counterpart, its local index, and the
/// box index within the pair.
pub(crate) struct Links {
    links: [[Link; MAX_OWNED_BOXES]; 3],
}

impl Links {
    pub(crate) fn new(counts: &BoxCounts) -> Self {
        let mut links = [[Link { party: 0, local: 0, index: 0 }; MAX_OWNED_BOXES]; 3];
        for p in PartyId::ALL {
            for (i, link) in links[p.index()].iter_mut().enumerate().take(counts.owned(p)) {
                let (q, j) = counts.partner(p, i);
                *link =
                    Link { party: q.index() as u8, local: j as u8, index: counts.box_at(p, i).index as u8 };
            }
        }
        Links { links }
    }
}

/// Outputs and inputs of every box along one consistent walk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Realization {
    pub outputs: [u32; 3],
    pub inputs: [u32; 3],
}

/// Walks the three parties in order. `first_word` is the first party's full
/// output word; bit `k` of `shared_free` is the second party's output on
/// box `k` shared with the third.
pub(crate) fn realize(
    net: &CompiledNetwork,
    links: &Links,
    settings: SettingTriple,
    ordering: PartyOrdering,
    first_word: u32,
    shared_free: u32,
) -> Realization {
    let mut r = Realization::default();
    let mut done = [false; 3];
    for (pos, p) in ordering.sequence.into_iter().enumerate() {
        let pi = p.index();
        let tree = &net.parties[pi].trees[settings.get(p) as usize];
        let (outs, ins) = tree.walk_with(|i, input| {
            let l = links.links[pi][i];
            let q = l.party as usize;
            if done[q] {
                let co = (r.outputs[q] >> l.local) & 1 == 1;
                let ci = (r.inputs[q] >> l.local) & 1 == 1;
                pr_determined_output(co, input, ci)
            } else if pos == 0 {
                (first_word >> i) & 1 == 1
            } else {
                (shared_free >> l.index) & 1 == 1
            }
        });
        r.outputs[pi] = outs;
        r.inputs[pi] = ins;
        done[pi] = true;
    }
    r
}

/// Calls `f` on every support point. Each has weight `2^-counts.total()`.
pub(crate) fn for_each_realization<F: FnMut(Realization)>(
    net: &CompiledNetwork,
    links: &Links,
    settings: SettingTriple,
    ordering: PartyOrdering,
    mut f: F,
) {
    let [p1, p2, p3] = ordering.sequence;
    let first_bits = net.counts.owned(p1);
    let shared_bits = net.counts.pair(p2, p3);
    for first in 0..1u32 << first_bits {
        for shared in 0..1u32 << shared_bits {
            f(realize(net, links, settings, ordering, first, shared));
        }
    }
}

/// Free-bit count above which enumeration is split across threads.
const PARALLEL_BITS: usize = 12;

pub fn build_joint(
    network: &NetworkStrategy,
    settings: SettingTriple,
    ordering: PartyOrdering,
) -> Result<JointDistribution, JointError> {
    Ok(build_joint_compiled(&network.compile()?, settings, ordering))
}

pub fn build_joint_compiled(
    net: &CompiledNetwork,
    settings: SettingTriple,
    ordering: PartyOrdering,
) -> JointDistribution {
    let counts = net.counts;
    let links = Links::new(&counts);
    let weight = Dyadic::pow2_inv(counts.total() as u32);
    let [p1, p2, p3] = ordering.sequence;
    let shared_bits = counts.pair(p2, p3);
    let block = |first: u32| -> Vec<FullAssignment> {
        (0..1u32 << shared_bits)
            .map(|shared| FullAssignment { words: realize(net, &links, settings, ordering, first, shared).outputs })
            .collect()
    };
    let firsts = 0..1u32 << counts.owned(p1);
    let points: Vec<FullAssignment> = if counts.total() >= PARALLEL_BITS {
        firsts.into_par_iter().flat_map_iter(block).collect()
    } else {
        firsts.flat_map(block).collect()
    };
    let mut support = BTreeMap::new();
    for point in points {
        let prev = support.insert(point, weight);
        assert!(prev.is_none(), "distinct free strings produced the same assignment");
    }
    JointDistribution { counts, settings, support }
}

/// Alice's outputs on the boxes shared with Charlie, as fixed by Alice's and
/// Charlie's trees once `a_b`, `c_a` and `c_b` are known.
pub fn a_c_function(
    network: &NetworkStrategy,
    a_b: BitStr,
    c_a: BitStr,
    c_b: BitStr,
    x: Bit,
    z: Bit,
) -> Result<BitStr, JointError> {
    let net = network.compile()?;
    let counts = net.counts;
    for (slot, s) in [(Slot::AB, a_b), (Slot::CA, c_a), (Slot::CB, c_b)] {
        if s.len() != slot.len(&counts) {
            return Err(JointError::Parse(format!("{} should have {} bits", slot.name(), slot.len(&counts))));
        }
    }
    Ok(a_c_compiled(&net, &Links::new(&counts), a_b.bits(), c_a.bits() | c_b.bits() << counts.ac, x, z))
}

pub(crate) fn a_c_compiled(net: &CompiledNetwork, links: &Links, a_b: u32, charlie_word: u32, x: Bit, z: Bit) -> BitStr {
    let r = realize(net, links, SettingTriple::new(x, false, z), PartyOrdering::CAB, charlie_word, a_b);
    let a = FullAssignment { words: r.outputs };
    a.slot(Slot::AC, &net.counts)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingCounterexample {
    pub reference: PartyOrdering,
    pub other: PartyOrdering,
    pub assignment: FullAssignment,
    pub reference_probability: Dyadic,
    pub other_probability: Dyadic,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingReport {
    pub identical: bool,
    pub orderings_checked: usize,
    pub counterexample: Option<OrderingCounterexample>,
}

pub fn check_ordering_invariance(
    network: &NetworkStrategy,
    settings: SettingTriple,
) -> Result<OrderingReport, JointError> {
    Ok(check_ordering_invariance_compiled(&network.compile()?, settings))
}

pub fn check_ordering_invariance_compiled(net: &CompiledNetwork, settings: SettingTriple) -> OrderingReport {
    let orderings = PartyOrdering::all();
    let reference = build_joint_compiled(net, settings, orderings[0]);
    for other in &orderings[1..] {
        let joint = build_joint_compiled(net, settings, *other);
        if joint.support != reference.support {
            let keys: BTreeSet<&FullAssignment> =
                reference.support.keys().chain(joint.support.keys()).collect();
            let assignment = **keys
                .iter()
                .find(|k| reference.support.get(k) != joint.support.get(k))
                .expect("maps differ");
            return OrderingReport {
                identical: false,
                orderings_checked: 6,
                counterexample: Some(OrderingCounterexample {
                    reference: orderings[0],
                    other: *other,
                    assignment,
                    reference_probability: reference.support.get(&assignment).copied().unwrap_or_default(),
                    other_probability: joint.support.get(&assignment).copied().unwrap_or_default(),
                }),
            };
        }
    }
    OrderingReport { identical: true, orderings_checked: 6, counterexample: None }
}

/// Exact marginal over `slots`; keys list the strings in the order given.
pub fn marginal(joint: &JointDistribution, slots: &[Slot]) -> BTreeMap<Vec<BitStr>, Dyadic> {
    assert!(!slots.is_empty(), "marginal needs at least one slot");
    let mut out: BTreeMap<Vec<BitStr>, Dyadic> = BTreeMap::new();
    for (a, p) in &joint.support {
        let key: Vec<BitStr> = slots.iter().map(|s| a.slot(*s, &joint.counts)).collect();
        *out.entry(key).or_default() += *p;
    }
    out
}

/// A law the joint distribution must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JointLaw {
    Normalization,
    SupportWeight,
    SupportSize,
    CharlieUniformity,
    ThreeStringUniformity,
    ThreeStringIndependence,
    BobDeterminism,
}

impl JointLaw {
    pub fn name(self) -> &'static str {
        match self {
            JointLaw::Normalization => "normalization",
            JointLaw::SupportWeight => "support weight",
            JointLaw::SupportSize => "support size",
            JointLaw::CharlieUniformity => "uniformity of (c_a, c_b)",
            JointLaw::ThreeStringUniformity => "uniformity of (a_b, c_a, c_b)",
            JointLaw::ThreeStringIndependence => "independence of a_b from (c_a, c_b)",
            JointLaw::BobDeterminism => "determinism of (b_a, b_c, a_c)",
        }
    }
}

impl fmt::Display for JointLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointViolation {
    pub law: JointLaw,
    pub detail: String,
}

impl fmt::Display for JointViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.law, self.detail)
    }
}

fn check_uniform(
    m: &BTreeMap<Vec<BitStr>, Dyadic>,
    lens: &[usize],
    law: JointLaw,
    out: &mut Vec<JointViolation>,
) {
    let bits: usize = lens.iter().sum();
    let expected = Dyadic::pow2_inv(bits as u32);
    let all_present = m.len() == 1usize << bits;
    let bad = m.iter().find(|(_, p)| **p != expected);
    if let Some((k, p)) = bad {
        let key: Vec<String> = k.iter().map(|s| s.to_string()).collect();
        out.push(JointViolation { law, detail: format!("P({}) = {p}, expected {expected}", key.join(",")) });
    } else if !all_present {
        out.push(JointViolation { law, detail: format!("{} of {} values present", m.len(), 1usize << bits) });
    }
}

/// Audits every structural law of the joint distribution exactly.
pub fn audit_laws(joint: &JointDistribution) -> Vec<JointViolation> {
    let c = &joint.counts;
    let total = c.total();
    let mut out = Vec::new();
    let sum: Dyadic = joint.support.values().sum();
    if sum != Dyadic::ONE {
        out.push(JointViolation { law: JointLaw::Normalization, detail: format!("total probability {sum}") });
    }
    let weight = Dyadic::pow2_inv(total as u32);
    if let Some((a, p)) = joint.support.iter().find(|(_, p)| **p != weight) {
        out.push(JointViolation {
            law: JointLaw::SupportWeight,
            detail: format!("{} has probability {p}, expected {weight}", a.display(c)),
        });
    }
    if joint.support.len() != 1usize << total {
        out.push(JointViolation {
            law: JointLaw::SupportSize,
            detail: format!("{} points, expected {}", joint.support.len(), 1usize << total),
        });
    }
    if c.ac + c.bc > 0 {
        let m = marginal(joint, &[Slot::CA, Slot::CB]);
        check_uniform(&m, &[c.ac, c.bc], JointLaw::CharlieUniformity, &mut out);
    }
    if c.ab + c.ac + c.bc > 0 {
        let three = marginal(joint, &[Slot::AB, Slot::CA, Slot::CB]);
        check_uniform(&three, &[c.ab, c.ac, c.bc], JointLaw::ThreeStringUniformity, &mut out);
        let a_b = marginal(joint, &[Slot::AB]);
        let cc = marginal(joint, &[Slot::CA, Slot::CB]);
        let mismatch = a_b.iter().flat_map(|(ka, pa)| cc.iter().map(move |(kc, pc)| (ka, pa, kc, pc))).find(
            |(ka, pa, kc, pc)| {
                let key = [ka[0], kc[0], kc[1]];
                three.get(&key[..]).copied().unwrap_or_default() != **pa * **pc
            },
        );
        if let Some((ka, _, kc, _)) = mismatch {
            out.push(JointViolation {
                law: JointLaw::ThreeStringIndependence,
                detail: format!("P(a_b={}, c_a={}, c_b={}) is not the product of marginals", ka[0], kc[0], kc[1]),
            });
        }
    }
    type Strings = (BitStr, BitStr, BitStr);
    let mut seen: BTreeMap<Strings, BTreeSet<Strings>> = BTreeMap::new();
    for a in joint.support.keys() {
        seen.entry((a.slot(Slot::AB, c), a.slot(Slot::CA, c), a.slot(Slot::CB, c)))
            .or_default()
            .insert((a.slot(Slot::BA, c), a.slot(Slot::BC, c), a.slot(Slot::AC, c)));
    }
    if let Some(((ab, ca, cb), rest)) = seen.iter().find(|(_, v)| v.len() > 1) {
        out.push(JointViolation {
            law: JointLaw::BobDeterminism,
            detail: format!("a_b={ab} c_a={ca} c_b={cb} admits {} completions", rest.len()),
        });
    }
    out
}

impl JointDistribution {
    pub fn total(&self) -> Dyadic {
        self.support.values().sum()
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), JointError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = Slot::ALL.iter().map(|s| s.name()).collect();
        header.push("probability");
        wtr.write_record(&header)?;
        for (a, p) in &self.support {
            let mut row: Vec<String> = Slot::ALL.iter().map(|s| a.slot(*s, &self.counts).to_string()).collect();
            row.push(p.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a dump written by [`JointDistribution::write_csv`]. Counts are
    /// inferred from string lengths; no law is enforced on load.
    pub fn read_csv<R: io::Read>(r: R, settings: SettingTriple) -> Result<Self, JointError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let expected: Vec<&str> = Slot::ALL.iter().map(|s| s.name()).chain(["probability"]).collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(JointError::Parse(format!("expected columns {}", expected.join(","))));
        }
        let mut counts: Option<BoxCounts> = None;
        let mut support = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let strings: Vec<BitStr> =
                (0..6).map(|i| record[i].parse::<BitStr>()).collect::<Result<_, _>>()?;
            let row_counts = BoxCounts::new(strings[0].len(), strings[1].len(), strings[3].len());
            let c = *counts.get_or_insert(row_counts);
            if c != row_counts {
                return Err(JointError::Parse("inconsistent string lengths".to_string()));
            }
            let a = FullAssignment::from_slots(&c, strings.try_into().expect("six strings"))?;
            let p: Dyadic = record[6].parse().map_err(|e| JointError::Parse(format!("{e}")))?;
            if support.insert(a, p).is_some() {
                return Err(JointError::Parse(format!("duplicate row {}", a.display(&c))));
            }
        }
        let counts = counts.unwrap_or_default();
        Ok(JointDistribution { counts, settings, support })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{sample_random_network, Outcome};

    fn bs(s: &str) -> BitStr {
        s.parse().unwrap()
    }

    #[test]
    fn setting_symbols() {
        for i in 0..8 {
            let s = SettingTriple::from_index(i);
            assert_eq!(s.index(), i);
            assert_eq!(s.to_string().parse::<SettingTriple>().unwrap(), s);
        }
        assert_eq!(SettingTriple::from_index(2).to_string(), "ab'c");
        assert_eq!("101".parse::<SettingTriple>().unwrap().to_string(), "a'bc'");
        assert!("abd".parse::<SettingTriple>().is_err());
        assert_eq!("CAB".parse::<PartyOrdering>().unwrap(), PartyOrdering::CAB);
        assert!("AAB".parse::<PartyOrdering>().is_err());
    }

    #[test]
    fn trivial_joint_pairs_outputs() {
        let counts = BoxCounts::uniform(1);
        let n = NetworkStrategy::trivial(counts, Outcome::Plus);
        for s in SettingTriple::all() {
            let j = build_joint(&n, s, PartyOrdering::ABC).unwrap();
            assert_eq!(j.support.len(), 8);
            for (a, p) in &j.support {
                assert_eq!(*p, Dyadic::new(1, 3));
                assert_eq!(a.slot(Slot::AC, &counts), a.slot(Slot::CA, &counts));
                assert_eq!(a.slot(Slot::BA, &counts), a.slot(Slot::AB, &counts));
                assert_eq!(a.slot(Slot::BC, &counts), a.slot(Slot::CB, &counts));
            }
        }
    }

    #[test]
    fn empty_network_has_one_point() {
        let n = NetworkStrategy::trivial(BoxCounts::uniform(0), Outcome::Zero);
        let j = build_joint(&n, SettingTriple::default(), PartyOrdering::ABC).unwrap();
        assert_eq!(j.support.len(), 1);
        assert_eq!(j.support.values().next(), Some(&Dyadic::ONE));
    }

    #[test]
    fn unit_count_support_weights() {
        for seed in 0..100 {
            let n = sample_random_network(BoxCounts::uniform(1), seed).unwrap();
            for s in SettingTriple::all() {
                let j = build_joint(&n, s, PartyOrdering::ABC).unwrap();
                assert_eq!(j.support.len(), 8);
                assert!(j.support.values().all(|p| *p == Dyadic::new(1, 3)));
                assert!(audit_laws(&j).is_empty());
            }
        }
    }

    #[test]
    fn laws_hold_at_mixed_counts() {
        for seed in 0..60 {
            let counts = BoxCounts::new(1 + (seed % 2) as usize, 2, (seed % 3) as usize);
            let n = sample_random_network(counts, seed).unwrap();
            for s in SettingTriple::all() {
                let j = build_joint(&n, s, PartyOrdering::ABC).unwrap();
                let v = audit_laws(&j);
                assert!(v.is_empty(), "{v:?}");
            }
        }
    }

    #[test]
    fn trivial_a_c_copies_c_a() {
        let n = NetworkStrategy::trivial(BoxCounts::uniform(2), Outcome::Plus);
        for w in 0..16u32 {
            let c_a = BitStr::new(w, 2);
            let got = a_c_function(&n, bs("10"), c_a, BitStr::new(w >> 2, 2), true, false).unwrap();
            assert_eq!(got, c_a);
        }
        let n = NetworkStrategy::trivial(BoxCounts::new(1, 0, 1), Outcome::Plus);
        let got = a_c_function(&n, bs("1"), BitStr::empty(), bs("0"), false, false).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn a_c_matches_joint_projection() {
        let counts = BoxCounts::uniform(1);
        for seed in 0..50 {
            let n = sample_random_network(counts, seed).unwrap();
            for s in SettingTriple::all() {
                let j = build_joint(&n, s, PartyOrdering::CAB).unwrap();
                for a in j.support.keys() {
                    let got = a_c_function(
                        &n,
                        a.slot(Slot::AB, &counts),
                        a.slot(Slot::CA, &counts),
                        a.slot(Slot::CB, &counts),
                        s.x,
                        s.z,
                    )
                    .unwrap();
                    assert_eq!(got, a.slot(Slot::AC, &counts));
                }
            }
        }
    }

    #[test]
    fn ordering_invariance_unit_counts() {
        for seed in 0..100 {
            let n = sample_random_network(BoxCounts::uniform(1), seed).unwrap();
            for s in SettingTriple::all() {
                let r = check_ordering_invariance(&n, s).unwrap();
                assert!(r.identical, "seed {seed}: {:?}", r.counterexample);
            }
        }
    }

    #[test]
    fn ordering_invariance_double_counts() {
        for seed in 0..20 {
            let n = sample_random_network(BoxCounts::uniform(2), seed).unwrap();
            for s in SettingTriple::all() {
                assert!(check_ordering_invariance(&n, s).unwrap().identical);
            }
        }
    }

    #[test]
    fn trivial_is_ordering_invariant() {
        let n = NetworkStrategy::trivial(BoxCounts::new(2, 1, 3), Outcome::Zero);
        assert!(check_ordering_invariance(&n, SettingTriple::from_index(5)).unwrap().identical);
    }

    #[test]
    fn marginals() {
        let counts = BoxCounts::uniform(2);
        let n = sample_random_network(counts, 3).unwrap();
        let j = build_joint(&n, SettingTriple::from_index(6), PartyOrdering::ABC).unwrap();
        let m = marginal(&j, &[Slot::CA, Slot::CB]);
        assert_eq!(m.len(), 16);
        assert!(m.values().all(|p| *p == Dyadic::new(1, 4)));
        let m = marginal(&j, &[Slot::AB, Slot::CA, Slot::CB]);
        assert_eq!(m.len(), 64);
        assert!(m.values().all(|p| *p == Dyadic::new(1, 6)));
        let full = marginal(&j, &Slot::ALL);
        assert_eq!(full.len(), j.support.len());
        for (a, p) in &j.support {
            let key: Vec<BitStr> = Slot::ALL.iter().map(|s| a.slot(*s, &counts)).collect();
            assert_eq!(full[&key], *p);
        }
    }

    #[test]
    fn csv_round_trip_and_corruption() {
        let counts = BoxCounts::new(1, 2, 1);
        let n = sample_random_network(counts, 11).unwrap();
        let s = SettingTriple::from_index(3);
        let j = build_joint(&n, s, PartyOrdering::ABC).unwrap();
        let mut buf = Vec::new();
        j.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("a_b,a_c,b_a,b_c,c_a,c_b,probability"));
        let back = JointDistribution::read_csv(text.as_bytes(), s).unwrap();
        assert_eq!(back, j);

        let mut corrupted = j.clone();
        let first = *corrupted.support.keys().next().unwrap();
        let half = Dyadic::new(1, counts.total() as u32 + 1);
        corrupted.support.insert(first, half);
        let mut split = first;
        split.words[1] ^= 1;
        corrupted.support.insert(split, half);
        let laws: BTreeSet<JointLaw> = audit_laws(&corrupted).into_iter().map(|v| v.law).collect();
        assert!(laws.contains(&JointLaw::BobDeterminism), "{laws:?}");
        assert!(laws.contains(&JointLaw::SupportWeight));
        assert!(!laws.contains(&JointLaw::Normalization));
        assert!(!laws.contains(&JointLaw::ThreeStringUniformity));
    }
}
