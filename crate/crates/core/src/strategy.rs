//! Party wirings: decision trees over owned boxes plus final output tables.
//!
//! # Box ordering
//!
//! Each party owns the boxes it shares with its two counterparts. Boxes are
//! numbered locally counterpart-first in party order (Alice, Bob, Charlie),
//! then by index. Alice's boxes are `B:0..n_ab` followed by `C:0..n_ac`,
//! Bob's are `A:0..n_ab` then `C:0..n_bc`, Charlie's `A:0..n_ac` then
//! `B:0..n_bc`.
//!
//! An assignment of outputs to a party's boxes is a word whose bit `i` is the
//! output of local box `i`. As a string it is written first box first
//! (most significant position on the left), so `"10"` for Alice at
//! counts `(1,1,1)` means `B:0 = 1`, `C:0 = 0`.
//!
//! # Symbols
//!
//! Settings map unprimed to `0` and primed to `1`. Outcomes map `0` to bit 0
//! and `+` to bit 1, so an even number of `+` is the same as zero parity.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::boxes::Bit;

/// Largest number of boxes one party may own; output tables hold
/// `2^owned * 2` rows.
pub const MAX_OWNED_BOXES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyId {
    Alice,
    Bob,
    Charlie,
}

impl PartyId {
    pub const ALL: [PartyId; 3] = [PartyId::Alice, PartyId::Bob, PartyId::Charlie];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            PartyId::Alice => 'A',
            PartyId::Bob => 'B',
            PartyId::Charlie => 'C',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(PartyId::Alice),
            'B' => Some(PartyId::Bob),
            'C' => Some(PartyId::Charlie),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartyId::Alice => "alice",
            PartyId::Bob => "bob",
            PartyId::Charlie => "charlie",
        }
    }

    /// The two other parties, in party order.
    pub fn others(self) -> [PartyId; 2] {
        match self {
            PartyId::Alice => [PartyId::Bob, PartyId::Charlie],
            PartyId::Bob => [PartyId::Alice, PartyId::Charlie],
            PartyId::Charlie => [PartyId::Alice, PartyId::Bob],
        }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartyId::Alice => "Alice",
            PartyId::Bob => "Bob",
            PartyId::Charlie => "Charlie",
        })
    }
}

/// Observed outcome symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Zero,
    Plus,
}

impl Outcome {
    pub const ALL: [Outcome; 2] = [Outcome::Zero, Outcome::Plus];

    pub fn bit(self) -> Bit {
        self == Outcome::Plus
    }

    pub fn from_bit(bit: Bit) -> Self {
        if bit {
            Outcome::Plus
        } else {
            Outcome::Zero
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Outcome::Zero => '0',
            Outcome::Plus => '+',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '0' => Some(Outcome::Zero),
            '+' => Some(Outcome::Plus),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        Self::from_bit(!self.bit())
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut chars = s.chars();
        match (chars.next().and_then(Outcome::from_symbol), chars.next()) {
            (Some(o), None) => Ok(o),
            _ => Err(serde::de::Error::custom(format!("bad outcome symbol {s:?}"))),
        }
    }
}

/// Per-pair box counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxCounts {
    pub ab: usize,
    pub ac: usize,
    pub bc: usize,
}

impl BoxCounts {
    pub fn new(ab: usize, ac: usize, bc: usize) -> Self {
        BoxCounts { ab, ac, bc }
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(n, n, n)
    }

    /// Boxes shared by two distinct parties.
    pub fn pair(&self, p: PartyId, q: PartyId) -> usize {
        use PartyId::*;
        match (p, q) {
            (Alice, Bob) | (Bob, Alice) => self.ab,
            (Alice, Charlie) | (Charlie, Alice) => self.ac,
            (Bob, Charlie) | (Charlie, Bob) => self.bc,
            _ => 0,
        }
    }

    pub fn owned(&self, p: PartyId) -> usize {
        let [q, r] = p.others();
        self.pair(p, q) + self.pair(p, r)
    }

    pub fn total(&self) -> usize {
        self.ab + self.ac + self.bc
    }

    pub fn check_cap(&self) -> Result<(), StrategyError> {
        for p in PartyId::ALL {
            let owned = self.owned(p);
            if owned > MAX_OWNED_BOXES {
                return Err(StrategyError::TooManyBoxes { party: p, owned });
            }
        }
        Ok(())
    }

    /// Local index of `target` among `owner`'s boxes.
    pub fn local_index(&self, owner: PartyId, target: BoxRef) -> Option<usize> {
        let [first, second] = owner.others();
        if target.index >= self.pair(owner, target.counterpart) {
            return None;
        }
        if target.counterpart == first {
            Some(target.index)
        } else if target.counterpart == second {
            Some(self.pair(owner, first) + target.index)
        } else {
            None
        }
    }

    pub fn box_at(&self, owner: PartyId, local: usize) -> BoxRef {
        let [first, second] = owner.others();
        let n_first = self.pair(owner, first);
        if local < n_first {
            BoxRef { counterpart: first, index: local }
        } else {
            BoxRef { counterpart: second, index: local - n_first }
        }
    }

    /// The counterpart and its local index for `owner`'s local box.
    pub fn partner(&self, owner: PartyId, local: usize) -> (PartyId, usize) {
        let b = self.box_at(owner, local);
        let back = BoxRef { counterpart: owner, index: b.index };
        let idx = self.local_index(b.counterpart, back).expect("box counts are symmetric");
        (b.counterpart, idx)
    }
}

impl fmt::Display for BoxCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.ab, self.ac, self.bc)
    }
}

impl FromStr for BoxCounts {
    type Err = StrategyError;
    /// Accepts `n` or `ab,ac,bc`, with optional parentheses.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StrategyError::Parse(format!("bad box counts {s:?}"));
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts: Vec<usize> = inner
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [n] => Ok(Self::uniform(*n)),
            [ab, ac, bc] => Ok(Self::new(*ab, *ac, *bc)),
            _ => Err(bad()),
        }
    }
}

/// A box as seen from its owner: which counterpart, which index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxRef {
    pub counterpart: PartyId,
    pub index: usize,
}

impl BoxRef {
    pub fn new(counterpart: PartyId, index: usize) -> Self {
        BoxRef { counterpart, index }
    }
}

impl fmt::Display for BoxRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.counterpart.symbol(), self.index)
    }
}

impl FromStr for BoxRef {
    type Err = StrategyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StrategyError::Parse(format!("bad box reference {s:?}"));
        let (party, index) = s.split_once(':').ok_or_else(bad)?;
        let mut chars = party.chars();
        let counterpart = match (chars.next(), chars.next()) {
            (Some(c), None) => PartyId::from_symbol(c).ok_or_else(bad)?,
            _ => return Err(bad()),
        };
        let index = index.parse().map_err(|_| bad())?;
        Ok(BoxRef { counterpart, index })
    }
}

impl Serialize for BoxRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BoxRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A fixed-length bit string; character `i` is bit `i` of the word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct BitStr {
    bits: u32,
    len: u8,
}

impl BitStr {
    pub fn new(bits: u32, len: usize) -> Self {
        assert!(len <= 32);
        let mask = if len == 32 { u32::MAX } else { (1u32 << len) - 1 };
        BitStr { bits: bits & mask, len: len as u8 }
    }

    pub fn empty() -> Self {
        BitStr::default()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Bit {
        (self.bits >> i) & 1 == 1
    }

    /// All strings of length `len`, in increasing word order.
    pub fn all(len: usize) -> impl Iterator<Item = BitStr> {
        (0..1u32 << len).map(move |w| BitStr::new(w, len))
    }
}

impl Ord for BitStr {
    /// Lexicographic on the written string.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.to_string().cmp(&other.to_string())
    }
}

impl PartialOrd for BitStr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BitStr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitStr {
    type Err = StrategyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() > 32 {
            return Err(StrategyError::Parse(format!("bit string too long: {s:?}")));
        }
        let mut bits = 0u32;
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << i,
                _ => return Err(StrategyError::Parse(format!("bad bit string {s:?}"))),
            }
        }
        Ok(BitStr::new(bits, s.len()))
    }
}

mod bit01 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*b as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(serde::de::Error::custom(format!("bit must be 0 or 1, got {v}"))),
        }
    }
}

/// One query in a decision tree. A `None` child is a leaf.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionNode {
    #[serde(rename = "box")]
    pub target: BoxRef,
    #[serde(with = "bit01")]
    pub input: Bit,
    pub on0: Option<Box<DecisionNode>>,
    pub on1: Option<Box<DecisionNode>>,
}

impl DecisionNode {
    pub fn leaf(target: BoxRef, input: Bit) -> Self {
        DecisionNode { target, input, on0: None, on1: None }
    }

    pub fn child(&self, output: Bit) -> Option<&DecisionNode> {
        if output {
            self.on1.as_deref()
        } else {
            self.on0.as_deref()
        }
    }

    /// A chain visiting `order` in sequence with the given inputs, identical
    /// on both branches.
    pub fn chain(order: &[(BoxRef, Bit)]) -> Option<DecisionNode> {
        let ((target, input), rest) = order.split_first()?;
        let next = DecisionNode::chain(rest).map(Box::new);
        Some(DecisionNode { target: *target, input: *input, on0: next.clone(), on1: next })
    }

    pub fn node_count(&self) -> usize {
        1 + self.on0.as_ref().map_or(0, |n| n.node_count())
            + self.on1.as_ref().map_or(0, |n| n.node_count())
    }
}

/// A party's wiring: one tree per own setting and an extensional output table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PartyStrategy {
    pub trees: [Option<DecisionNode>; 2],
    /// Indexed by `setting * 2^owned + assignment word`. `None` marks a
    /// missing row; validation rejects tables with holes.
    pub output_table: Vec<Option<Outcome>>,
}

impl PartyStrategy {
    pub fn table_len(owned: usize) -> usize {
        2 << owned
    }

    pub fn row_index(owned: usize, word: u32, setting: Bit) -> usize {
        ((setting as usize) << owned) | word as usize
    }

    /// Fixed box order, input 0 everywhere, constant outcome.
    pub fn trivial(owner: PartyId, counts: &BoxCounts, outcome: Outcome) -> Self {
        let owned = counts.owned(owner);
        let order: Vec<(BoxRef, Bit)> =
            (0..owned).map(|i| (counts.box_at(owner, i), false)).collect();
        let tree = DecisionNode::chain(&order);
        PartyStrategy {
            trees: [tree.clone(), tree],
            output_table: vec![Some(outcome); Self::table_len(owned)],
        }
    }

    pub fn output(&self, owned: usize, word: u32, setting: Bit) -> Option<Outcome> {
        self.output_table.get(Self::row_index(owned, word, setting)).copied().flatten()
    }

    pub fn set_output(&mut self, owned: usize, word: u32, setting: Bit, outcome: Outcome) {
        self.output_table[Self::row_index(owned, word, setting)] = Some(outcome);
    }
}

/// The complete network: counts and one strategy per party.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NetworkStrategy {
    pub counts: BoxCounts,
    pub parties: [PartyStrategy; 3],
}

impl NetworkStrategy {
    pub fn new(counts: BoxCounts, alice: PartyStrategy, bob: PartyStrategy, charlie: PartyStrategy) -> Self {
        NetworkStrategy { counts, parties: [alice, bob, charlie] }
    }

    /// Every party outputs `outcome` regardless of its boxes.
    pub fn trivial(counts: BoxCounts, outcome: Outcome) -> Self {
        NetworkStrategy {
            counts,
            parties: PartyId::ALL.map(|p| PartyStrategy::trivial(p, &counts, outcome)),
        }
    }

    pub fn party(&self, p: PartyId) -> &PartyStrategy {
        &self.parties[p.index()]
    }

    pub fn party_mut(&mut self, p: PartyId) -> &mut PartyStrategy {
        &mut self.parties[p.index()]
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Validates and flattens the trees for fast walking.
    pub fn compile(&self) -> Result<CompiledNetwork, StrategyError> {
        let report = self.validate();
        if !report.is_valid() {
            return Err(StrategyError::Invalid(report));
        }
        let parties = PartyId::ALL.map(|p| {
            let s = self.party(p);
            CompiledParty {
                owned: self.counts.owned(p),
                trees: [0, 1].map(|x| CompiledTree::compile(s.trees[x].as_ref(), p, &self.counts)),
                table: s.output_table.iter().map(|o| o.expect("validated")).collect(),
            }
        });
        Ok(CompiledNetwork { counts: self.counts, parties })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategy serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, StrategyError> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StrategyError {
    #[error("{party} owns {owned} boxes; at most {MAX_OWNED_BOXES} are supported")]
    TooManyBoxes { party: PartyId, owned: usize },
    #[error("invalid network: {0}")]
    Invalid(ValidationReport),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("{0}")]
    Parse(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One query made while walking a tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub target: BoxRef,
    pub input: Bit,
    pub output: Bit,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub steps: Vec<Step>,
}

impl Transcript {
    /// Input word: bit `i` is the input fed to local box `i`.
    pub fn input_word(&self, owner: PartyId, counts: &BoxCounts) -> u32 {
        self.steps.iter().fold(0, |acc, s| {
            let i = counts.local_index(owner, s.target).expect("walked boxes are in range");
            acc | ((s.input as u32) << i)
        })
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .steps
            .iter()
            .map(|s| format!("{} input {} -> {}", s.target, s.input as u8, s.output as u8))
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// Follows the unique path consistent with `assignment` (bit `i` is the output
/// of local box `i`).
pub fn walk(
    tree: Option<&DecisionNode>,
    owner: PartyId,
    counts: &BoxCounts,
    assignment: u32,
) -> Result<Transcript, StrategyError> {
    let owned = counts.owned(owner);
    let mut visited = 0u32;
    let mut steps = Vec::with_capacity(owned);
    let mut node = tree;
    while let Some(n) = node {
        let i = counts.local_index(owner, n.target).ok_or_else(|| {
            StrategyError::MalformedTree(format!("{owner} has no box {}", n.target))
        })?;
        if visited & (1 << i) != 0 {
            return Err(StrategyError::MalformedTree(format!("repeated box {}", n.target)));
        }
        visited |= 1 << i;
        let output = (assignment >> i) & 1 == 1;
        steps.push(Step { target: n.target, input: n.input, output });
        node = n.child(output);
    }
    if steps.len() != owned {
        return Err(StrategyError::MalformedTree(format!(
            "missing child after {} of {owned} boxes",
            steps.len()
        )));
    }
    Ok(Transcript { steps })
}

const LEAF: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct FlatNode {
    local: u8,
    input: bool,
    next: [u32; 2],
}

/// A validated tree flattened into an array; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompiledTree {
    nodes: Vec<FlatNode>,
}

impl CompiledTree {
    fn compile(tree: Option<&DecisionNode>, owner: PartyId, counts: &BoxCounts) -> Self {
        fn push(n: &DecisionNode, owner: PartyId, counts: &BoxCounts, out: &mut Vec<FlatNode>) -> u32 {
            let idx = out.len();
            let local = counts.local_index(owner, n.target).expect("validated") as u8;
            out.push(FlatNode { local, input: n.input, next: [LEAF, LEAF] });
            for (k, child) in [n.on0.as_deref(), n.on1.as_deref()].into_iter().enumerate() {
                if let Some(c) = child {
                    let ci = push(c, owner, counts, out);
                    out[idx].next[k] = ci;
                }
            }
            idx as u32
        }
        let mut nodes = Vec::new();
        if let Some(root) = tree {
            push(root, owner, counts, &mut nodes);
        }
        CompiledTree { nodes }
    }

    /// Walks the tree, asking `output(local, input)` for each queried box's
    /// output. Returns `(output word, input word)`.
    #[inline]
    pub fn walk_with<F: FnMut(usize, Bit) -> Bit>(&self, mut output: F) -> (u32, u32) {
        let mut outs = 0u32;
        let mut ins = 0u32;
        let mut at = if self.nodes.is_empty() { LEAF } else { 0 };
        while at != LEAF {
            let n = self.nodes[at as usize];
            let o = output(n.local as usize, n.input);
            outs |= (o as u32) << n.local;
            ins |= (n.input as u32) << n.local;
            at = n.next[o as usize];
        }
        (outs, ins)
    }

    /// Input word used when the party's outputs are `assignment`.
    pub fn inputs_for(&self, assignment: u32) -> u32 {
        self.walk_with(|i, _| (assignment >> i) & 1 == 1).1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompiledParty {
    pub owned: usize,
    pub trees: [CompiledTree; 2],
    table: Vec<Outcome>,
}

impl CompiledParty {
    #[inline]
    pub fn output(&self, word: u32, setting: Bit) -> Outcome {
        self.table[PartyStrategy::row_index(self.owned, word, setting)]
    }
}

/// A validated network ready for enumeration and sampling.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompiledNetwork {
    pub counts: BoxCounts,
    pub parties: [CompiledParty; 3],
}

impl CompiledNetwork {
    pub fn party(&self, p: PartyId) -> &CompiledParty {
        &self.parties[p.index()]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    TooManyBoxes { party: PartyId, owned: usize },
    MissingTree { party: PartyId, setting: Bit },
    UnexpectedTree { party: PartyId, setting: Bit },
    OutOfRange { party: PartyId, setting: Bit, path: String, target: BoxRef },
    RepeatedBox { party: PartyId, setting: Bit, path: String, target: BoxRef },
    MissingChild { party: PartyId, setting: Bit, path: String },
    TableSize { party: PartyId, expected: usize, found: usize },
    PartialOutputTable { party: PartyId, missing: usize, first: (String, Bit) },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = |p: &str| if p.is_empty() { "root".to_string() } else { format!("path {p}") };
        match self {
            Violation::TooManyBoxes { party, owned } => {
                write!(f, "{party}: {owned} boxes exceeds cap of {MAX_OWNED_BOXES}")
            }
            Violation::MissingTree { party, setting } => {
                write!(f, "{party} setting {}: missing tree", *setting as u8)
            }
            Violation::UnexpectedTree { party, setting } => {
                write!(f, "{party} setting {}: tree present but party owns no boxes", *setting as u8)
            }
            Violation::OutOfRange { party, setting, path: p, target } => write!(
                f,
                "{party} setting {} at {}: out-of-range index {target}",
                *setting as u8,
                path(p)
            ),
            Violation::RepeatedBox { party, setting, path: p, target } => write!(
                f,
                "{party} setting {} at {}: repeated box {target}",
                *setting as u8,
                path(p)
            ),
            Violation::MissingChild { party, setting, path: p } => {
                write!(f, "{party} setting {} at {}: missing child", *setting as u8, path(p))
            }
            Violation::TableSize { party, expected, found } => {
                write!(f, "{party}: output table has {found} rows, expected {expected}")
            }
            Violation::PartialOutputTable { party, missing, first } => write!(
                f,
                "{party}: partial output table ({missing} rows missing, first [{:?}, {}])",
                first.0, first.1 as u8
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("valid");
        }
        let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&lines.join("\n"))
    }
}

fn check_tree(
    node: Option<&DecisionNode>,
    party: PartyId,
    setting: Bit,
    counts: &BoxCounts,
    visited: u32,
    path: &mut String,
    out: &mut Vec<Violation>,
) {
    let owned = counts.owned(party);
    let Some(n) = node else {
        if visited.count_ones() as usize != owned {
            out.push(Violation::MissingChild { party, setting, path: path.clone() });
        }
        return;
    };
    let Some(i) = counts.local_index(party, n.target) else {
        out.push(Violation::OutOfRange { party, setting, path: path.clone(), target: n.target });
        return;
    };
    if visited & (1 << i) != 0 {
        out.push(Violation::RepeatedBox { party, setting, path: path.clone(), target: n.target });
        return;
    }
    for (bit, child) in [('0', n.on0.as_deref()), ('1', n.on1.as_deref())] {
        path.push(bit);
        check_tree(child, party, setting, counts, visited | (1 << i), path, out);
        path.pop();
    }
}

/// Checks every tree and table against the counts.
pub fn validate(network: &NetworkStrategy) -> ValidationReport {
    let counts = &network.counts;
    let mut violations = Vec::new();
    for party in PartyId::ALL {
        let owned = counts.owned(party);
        if owned > MAX_OWNED_BOXES {
            violations.push(Violation::TooManyBoxes { party, owned });
            continue;
        }
        let s = network.party(party);
        for setting in [false, true] {
            match (&s.trees[setting as usize], owned) {
                (None, 0) => {}
                (None, _) => violations.push(Violation::MissingTree { party, setting }),
                (Some(_), 0) => violations.push(Violation::UnexpectedTree { party, setting }),
                (Some(root), _) => {
                    check_tree(Some(root), party, setting, counts, 0, &mut String::new(), &mut violations)
                }
            }
        }
        let expected = PartyStrategy::table_len(owned);
        if s.output_table.len() != expected {
            violations.push(Violation::TableSize { party, expected, found: s.output_table.len() });
            continue;
        }
        let missing: Vec<usize> =
            (0..expected).filter(|&r| s.output_table[r].is_none()).collect();
        if let Some(&r) = missing.first() {
            let word = (r & ((1 << owned) - 1)) as u32;
            let setting = r >> owned == 1;
            violations.push(Violation::PartialOutputTable {
                party,
                missing: missing.len(),
                first: (BitStr::new(word, owned).to_string(), setting),
            });
        }
    }
    ValidationReport { violations }
}

/// Random tree over `remaining`; each node picks an unvisited box and input
/// uniformly.
pub fn sample_tree<R: Rng>(remaining: &mut Vec<BoxRef>, rng: &mut R) -> Option<DecisionNode> {
    if remaining.is_empty() {
        return None;
    }
    let k = rng.gen_range(0..remaining.len());
    let target = remaining.swap_remove(k);
    let input = rng.gen::<bool>();
    let on0 = sample_tree(&mut remaining.clone(), rng).map(Box::new);
    let on1 = sample_tree(remaining, rng).map(Box::new);
    Some(DecisionNode { target, input, on0, on1 })
}

/// Random party strategy: each node picks an unvisited box and an input
/// uniformly; every output row is a fair coin.
pub fn sample_party<R: Rng>(owner: PartyId, counts: &BoxCounts, rng: &mut R) -> PartyStrategy {
    let owned = counts.owned(owner);
    let boxes: Vec<BoxRef> = (0..owned).map(|i| counts.box_at(owner, i)).collect();
    let trees = [0, 1].map(|_| sample_tree(&mut boxes.clone(), rng));
    let output_table = (0..PartyStrategy::table_len(owned))
        .map(|_| Some(Outcome::from_bit(rng.gen())))
        .collect();
    PartyStrategy { trees, output_table }
}

/// Random well-formed network, reproducible from `seed` (ChaCha8).
pub fn sample_random_network(counts: BoxCounts, seed: u64) -> Result<NetworkStrategy, StrategyError> {
    counts.check_cap()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_network_with(counts, &mut rng))
}

pub fn sample_network_with<R: Rng>(counts: BoxCounts, rng: &mut R) -> NetworkStrategy {
    NetworkStrategy { counts, parties: PartyId::ALL.map(|p| sample_party(p, &counts, rng)) }
}

#[derive(Serialize, Deserialize)]
struct PartyDto {
    trees: [Option<DecisionNode>; 2],
    output_table: Vec<(String, u8, Outcome)>,
}

#[derive(Serialize, Deserialize)]
struct NetworkDto {
    counts: BoxCounts,
    alice: PartyDto,
    bob: PartyDto,
    charlie: PartyDto,
}

impl PartyDto {
    fn from_party(s: &PartyStrategy, owned: usize) -> Self {
        let output_table = s
            .output_table
            .iter()
            .enumerate()
            .filter_map(|(r, o)| {
                let word = (r & ((1 << owned) - 1)) as u32;
                let setting = (r >> owned) as u8;
                o.map(|o| (BitStr::new(word, owned).to_string(), setting, o))
            })
            .collect();
        PartyDto { trees: s.trees.clone(), output_table }
    }

    fn into_party(self, party: PartyId, owned: usize) -> Result<PartyStrategy, String> {
        let mut table = vec![None; PartyStrategy::table_len(owned)];
        for (bits, setting, outcome) in self.output_table {
            let word: BitStr = bits.parse().map_err(|e: StrategyError| e.to_string())?;
            if word.len() != owned {
                return Err(format!("{party}: row {bits:?} should have {owned} bits"));
            }
            if setting > 1 {
                return Err(format!("{party}: setting {setting} is not 0 or 1"));
            }
            let r = PartyStrategy::row_index(owned, word.bits(), setting == 1);
            if table[r].replace(outcome).is_some() {
                return Err(format!("{party}: duplicate row [{bits:?}, {setting}]"));
            }
        }
        Ok(PartyStrategy { trees: self.trees, output_table: table })
    }
}

impl Serialize for NetworkStrategy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let c = &self.counts;
        let [alice, bob, charlie] =
            PartyId::ALL.map(|p| PartyDto::from_party(self.party(p), c.owned(p)));
        NetworkDto { counts: *c, alice, bob, charlie }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for NetworkStrategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let dto = NetworkDto::deserialize(d)?;
        let counts = dto.counts;
        counts.check_cap().map_err(D::Error::custom)?;
        let build = |p: PartyId, dto: PartyDto| dto.into_party(p, counts.owned(p)).map_err(D::Error::custom);
        Ok(NetworkStrategy {
            counts,
            parties: [
                build(PartyId::Alice, dto.alice)?,
                build(PartyId::Bob, dto.bob)?,
                build(PartyId::Charlie, dto.charlie)?,
            ],
        })
    }
}
