//! Searching strategy space for networks with small `E(F)`.
//!
//! Three modes:
//!
//! * **Exhaustive** at counts `(1,1,1)`. Per-setting half strategies are
//!   collapsed to canonical forms (192 per party and setting), and `E(F)` is
//!   decomposed into pair and triple terms so that the minimum over all
//!   canonical networks is found exactly.
//! * **Random**: independent uniformly sampled networks.
//! * **Local search**: strict-improvement hill climbing with restarts.
//!
//! Every value is compared exactly against `1/8`; anything below it is an
//! error carrying the offending network.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::behavior::{induced_behavior, induced_counts};
use crate::bell::{expected_f, expected_f_counts};
use crate::dyadic::Dyadic;
use crate::joint::PartyOrdering;
use crate::strategy::{
    sample_network_with, sample_tree, BoxCounts, BoxRef, DecisionNode, NetworkStrategy, Outcome, PartyId,
    PartyStrategy, StrategyError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMode {
    Exhaustive,
    Random,
    LocalSearch { from_trivial: bool },
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchMode::Exhaustive => f.write_str("exhaustive"),
            SearchMode::Random => f.write_str("random"),
            SearchMode::LocalSearch { from_trivial: true } => f.write_str("local-search (from trivial)"),
            SearchMode::LocalSearch { from_trivial: false } => f.write_str("local-search"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchConfig {
    pub counts: BoxCounts,
    pub mode: SearchMode,
    /// Networks to evaluate in random and local-search modes.
    pub budget: u64,
    pub seed: u64,
    pub symmetry_reduction: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("E(F) = {value} < 1/8 for network:\n{network}")]
    BoundViolated { value: Dyadic, network: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub mode: SearchMode,
    pub best_value: Dyadic,
    pub best_network: NetworkStrategy,
    /// Exhaustive: per (Alice at a', Charlie at c') pair, the best value
    /// reachable. Other modes: the value of every evaluated network.
    pub histogram: BTreeMap<Dyadic, u64>,
    pub evaluated: u64,
    pub budget_exhausted: bool,
    pub exhaustive: bool,
    pub label: String,
    pub stats: BTreeMap<String, u64>,
}

impl SearchResult {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("value,count\n");
        for (v, c) in &self.histogram {
            out += &format!("{v},{c}\n");
        }
        out
    }
}

fn guard(value: Dyadic, network: &NetworkStrategy) -> Result<(), SearchError> {
    if value < Dyadic::new(1, 3) {
        return Err(SearchError::BoundViolated { value, network: network.to_json() });
    }
    Ok(())
}

/// Exact `E(F)` of a network; violations of the bound are errors.
pub fn evaluate(network: &NetworkStrategy) -> Result<Dyadic, SearchError> {
    let net = network.compile()?;
    let value = expected_f_counts(&induced_counts(&net, PartyOrdering::ABC), net.counts.total());
    guard(value, network)?;
    Ok(value)
}

/// For each setting and each assignment of the party's own outputs, the
/// inputs it feeds to its boxes and its final outcome. Equal forms induce
/// identical behavior in every network; the converse need not hold.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm {
    pub per_setting: [Vec<(u32, Outcome)>; 2],
}

pub fn canonicalize(strategy: &PartyStrategy, owner: PartyId, counts: &BoxCounts) -> Result<CanonicalForm, SearchError> {
    let mut network = NetworkStrategy::trivial(*counts, Outcome::Plus);
    *network.party_mut(owner) = strategy.clone();
    let net = network.compile()?;
    let party = net.party(owner);
    let per_setting = [false, true].map(|x| {
        (0..1u32 << party.owned)
            .map(|w| (party.trees[x as usize].inputs_for(w), party.output(w, x)))
            .collect()
    });
    Ok(CanonicalForm { per_setting })
}

/// One party's strategy at one setting when it owns exactly two boxes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HalfStrategy {
    pub tree: DecisionNode,
    pub table: [Outcome; 4],
    /// Input word for each output word.
    pub inputs: [u8; 4],
}

fn two_box_trees(owner: PartyId, counts: &BoxCounts) -> Vec<DecisionNode> {
    let boxes = [counts.box_at(owner, 0), counts.box_at(owner, 1)];
    let mut trees = Vec::new();
    for root in 0..2 {
        for root_input in [false, true] {
            for i0 in [false, true] {
                for i1 in [false, true] {
                    let other = boxes[1 - root];
                    trees.push(DecisionNode {
                        target: boxes[root],
                        input: root_input,
                        on0: Some(Box::new(DecisionNode::leaf(other, i0))),
                        on1: Some(Box::new(DecisionNode::leaf(other, i1))),
                    });
                }
            }
        }
    }
    trees
}

fn input_map(tree: &DecisionNode, owner: PartyId, counts: &BoxCounts) -> [u8; 4] {
    std::array::from_fn(|w| {
        crate::strategy::walk(Some(tree), owner, counts, w as u32)
            .expect("enumerated trees are valid")
            .input_word(owner, counts) as u8
    })
}

/// All half strategies of `owner` at counts `(1,1,1)`: raw (256) or one
/// representative per canonical form (192).
pub fn half_strategies(owner: PartyId, reduce: bool) -> Vec<HalfStrategy> {
    let counts = BoxCounts::uniform(1);
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for tree in two_box_trees(owner, &counts) {
        let inputs = input_map(&tree, owner, &counts);
        for t in 0..16u8 {
            let table = std::array::from_fn(|w| Outcome::from_bit((t >> w) & 1 == 1));
            if reduce && !seen.insert((inputs, t)) {
                continue;
            }
            out.push(HalfStrategy { tree: tree.clone(), table, inputs });
        }
    }
    out
}

/// Outcome index (`4A + 2B + C`) at each of the 8 support points when the
/// parties use these half strategies, found by solving the PR constraints
/// for the forced outputs rather than by walking trees.
fn support_outcomes(a: &HalfStrategy, b: &HalfStrategy, c: &HalfStrategy) -> [u8; 8] {
    let mut out = [0u8; 8];
    for (k, slot) in out.iter_mut().enumerate() {
        let wa = (k & 3) as u8;
        let b1 = (k >> 2) as u8 & 1;
        let ia = a.inputs[wa as usize];
        let (a0, a1, ia0, ia1) = (wa & 1, wa >> 1, ia & 1, ia >> 1);
        let wb = (0..2u8)
            .map(|b0| b0 | b1 << 1)
            .find(|&wb| (wb & 1) == a0 ^ (ia0 & b.inputs[wb as usize] & 1))
            .expect("wiring forces a unique completion");
        let ib = b.inputs[wb as usize];
        let wc = (0..4u8)
            .find(|&wc| {
                let ic = c.inputs[wc as usize];
                (wc & 1) == a1 ^ (ia1 & ic & 1) && (wc >> 1) == b1 ^ ((ib >> 1) & (ic >> 1))
            })
            .expect("wiring forces a unique completion");
        *slot = (a.table[wa as usize].bit() as u8) << 2
            | (b.table[wb as usize].bit() as u8) << 1
            | c.table[wc as usize].bit() as u8;
    }
    out
}

fn count_where(o: &[u8; 8], pred: impl Fn(u8) -> bool) -> u8 {
    o.iter().filter(|v| pred(**v)).count() as u8
}

fn build_network(halves: [[&HalfStrategy; 2]; 3]) -> NetworkStrategy {
    let counts = BoxCounts::uniform(1);
    let parties = halves.map(|[h0, h1]| {
        let mut table = vec![None; 8];
        for w in 0..4 {
            table[w] = Some(h0.table[w]);
            table[4 + w] = Some(h1.table[w]);
        }
        PartyStrategy { trees: [Some(h0.tree.clone()), Some(h1.tree.clone())], output_table: table }
    });
    NetworkStrategy { counts, parties }
}

/// Exact minimum of `E(F)` over canonical networks at counts `(1,1,1)`.
///
/// With every support point weighing `1/8` at each setting,
///
/// `64 E(F) = 4 M(A_a, C_c) + N(A_a, B_b) + N(A_a, B_b') + Even(A_a', B_b, C_c') + 8 - Even(A_a', B_b', C_c')`
///
/// where `M` counts `A != C`, `N` counts
/// `A != B` and `Even` counts an even number of `+`. `M` does not depend on
/// Bob and `N` not on Charlie, so both are tabulated with a fixed third
/// party. The minimum over `C_c` and over each of Bob's halves is then taken
/// in closed form.
fn exhaustive(reduce: bool) -> Result<SearchResult, SearchError> {
    let ha = half_strategies(PartyId::Alice, reduce);
    let hb = half_strategies(PartyId::Bob, reduce);
    let hc = half_strategies(PartyId::Charlie, reduce);
    let (na, nb, nc) = (ha.len(), hb.len(), hc.len());

    let m: Vec<Vec<u8>> = ha
        .iter()
        .map(|a| hc.iter().map(|c| count_where(&support_outcomes(a, &hb[0], c), |o| (o >> 2) != (o & 1))).collect())
        .collect();
    let n: Vec<Vec<u8>> = ha
        .iter()
        .map(|a| hb.iter().map(|b| count_where(&support_outcomes(a, b, &hc[0]), |o| (o >> 2) != ((o >> 1) & 1))).collect())
        .collect();
    let even: Vec<u8> = (0..na * nb * nc)
        .into_par_iter()
        .map(|i| {
            let (a, b, c) = (i / (nb * nc), (i / nc) % nb, i % nc);
            count_where(&support_outcomes(&ha[a], &hb[b], &hc[c]), |o| o.count_ones() % 2 == 0)
        })
        .collect();

    // Alice's a-halves that agree on every tabulated term are interchangeable.
    let mut a_classes: HashMap<(u8, Vec<u8>), usize> = HashMap::new();
    for (i, row) in n.iter().enumerate() {
        let best_m = *m[i].iter().min().expect("nonempty");
        a_classes.entry((best_m, row.clone())).or_insert(i);
    }
    let mut a_reps: Vec<(usize, u8)> = a_classes.iter().map(|((bm, _), &i)| (i, *bm)).collect();
    a_reps.sort();

    // Likewise for (Alice at a', Charlie at c') pairs with equal Even slices.
    let mut e_classes: HashMap<Vec<u8>, (usize, usize, u64)> = HashMap::new();
    for a2 in 0..na {
        for c2 in 0..nc {
            let e: Vec<u8> = (0..nb).map(|b| even[(a2 * nb + b) * nc + c2]).collect();
            e_classes.entry(e).or_insert((a2, c2, 0)).2 += 1;
        }
    }
    let mut e_list: Vec<(Vec<u8>, (usize, usize, u64))> = e_classes.into_iter().collect();
    e_list.sort_by_key(|(_, (a2, c2, _))| (*a2, *c2));

    let per_pair: Vec<(i32, [usize; 4], u64)> = e_list
        .par_iter()
        .map(|(e, (a2, c2, weight))| {
            let mut best = (i32::MAX, [0usize; 4]);
            for &(a, bm) in &a_reps {
                let (mut v1, mut b1) = (i32::MAX, 0);
                let (mut v2, mut b2) = (i32::MAX, 0);
                for b in 0..nb {
                    let (nv, ev) = (n[a][b] as i32, e[b] as i32);
                    if nv + ev < v1 {
                        (v1, b1) = (nv + ev, b);
                    }
                    if nv - ev < v2 {
                        (v2, b2) = (nv - ev, b);
                    }
                }
                let v = 4 * bm as i32 + v1 + v2 + 8;
                if v < best.0 {
                    best = (v, [a, b1, b2, *a2 * nc + *c2]);
                }
            }
            (best.0, best.1, *weight)
        })
        .collect();

    let mut histogram = BTreeMap::new();
    for (v, _, w) in &per_pair {
        *histogram.entry(Dyadic::new(*v as u64, 6)).or_insert(0) += w;
    }
    let (best64, idx, _) = *per_pair.iter().min_by_key(|(v, i, _)| (*v, *i)).expect("nonempty");
    let [a, b1, b2, pair] = idx;
    let (a2, c2) = (pair / nc, pair % nc);
    let c1 = (0..nc).min_by_key(|&c| m[a][c]).expect("nonempty");
    let network = build_network([[&ha[a], &ha[a2]], [&hb[b1], &hb[b2]], [&hc[c1], &hc[c2]]]);

    let best_value = Dyadic::new(best64 as u64, 6);
    let recheck = expected_f(&induced_behavior(&network).map_err(|e| SearchError::Config(e.to_string()))?);
    if recheck != best_value.to_rational() {
        return Err(SearchError::Config(format!(
            "decomposed minimum {best_value} disagrees with the rebuilt network's E(F) = {recheck}"
        )));
    }
    guard(best_value, &network)?;

    let per_party = (na * na) as u64;
    let raw = 256u64 * 256;
    let stats = BTreeMap::from([
        ("raw_strategies_per_party".to_string(), raw),
        ("canonical_strategies_per_party".to_string(), per_party),
        ("half_strategies_per_setting".to_string(), na as u64),
        ("alice_a_classes".to_string(), a_reps.len() as u64),
        ("primed_pair_classes".to_string(), e_list.len() as u64),
    ]);
    Ok(SearchResult {
        mode: SearchMode::Exhaustive,
        best_value,
        best_network: network,
        histogram,
        evaluated: (na * nc + na * nb + na * nb * nc) as u64,
        budget_exhausted: false,
        exhaustive: true,
        label: if reduce { "exhaustive over canonical forms".into() } else { "exhaustive over raw strategies".into() },
        stats,
    })
}

fn chunk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_search(config: &SearchConfig) -> Result<SearchResult, SearchError> {
    config.counts.check_cap()?;
    let values: Vec<(Dyadic, u64)> = (0..config.budget)
        .into_par_iter()
        .map(|i| {
            let n = sample_network_with(config.counts, &mut chunk_rng(config.seed, i));
            evaluate(&n).map(|v| (v, i))
        })
        .collect::<Result<_, _>>()?;
    let mut histogram = BTreeMap::new();
    for (v, _) in &values {
        *histogram.entry(*v).or_insert(0) += 1;
    }
    let (best_value, best_i) = values.iter().copied().min().unwrap_or((Dyadic::ONE, 0));
    let best_network = sample_network_with(config.counts, &mut chunk_rng(config.seed, best_i));
    Ok(SearchResult {
        mode: config.mode,
        best_value,
        best_network,
        histogram,
        evaluated: config.budget,
        budget_exhausted: true,
        exhaustive: false,
        label: "best of random samples".into(),
        stats: BTreeMap::new(),
    })
}

fn node_paths(node: &DecisionNode, path: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
    out.push(path.clone());
    for (bit, child) in [(false, node.on0.as_deref()), (true, node.on1.as_deref())] {
        if let Some(c) = child {
            path.push(bit);
            node_paths(c, path, out);
            path.pop();
        }
    }
}

/// The node at `path` and the boxes queried above it.
fn node_at<'a>(mut node: &'a mut DecisionNode, path: &[bool]) -> (&'a mut DecisionNode, Vec<BoxRef>) {
    let mut above = Vec::new();
    for &bit in path {
        above.push(node.target);
        node = if bit { node.on1.as_deref_mut() } else { node.on0.as_deref_mut() }.expect("path exists");
    }
    (node, above)
}

/// One random local move: flip an output row, flip a node's input, swap a
/// node's subtrees, or resample the subtree rooted at a node.
fn mutate<R: Rng>(network: &NetworkStrategy, rng: &mut R) -> NetworkStrategy {
    let mut n = network.clone();
    let counts = n.counts;
    let owners: Vec<PartyId> = PartyId::ALL.into_iter().filter(|p| counts.owned(*p) > 0).collect();
    let p = if owners.is_empty() { PartyId::Alice } else { owners[rng.gen_range(0..owners.len())] };
    let owned = counts.owned(p);
    let party = n.party_mut(p);
    let kind = if owned == 0 { 0 } else { rng.gen_range(0..4) };
    if kind == 0 {
        let r = rng.gen_range(0..party.output_table.len());
        party.output_table[r] = party.output_table[r].map(Outcome::flipped);
        return n;
    }
    let x = rng.gen_range(0..2);
    let root = party.trees[x].as_mut().expect("party owns boxes");
    let mut paths = Vec::new();
    node_paths(root, &mut Vec::new(), &mut paths);
    let path = &paths[rng.gen_range(0..paths.len())];
    let (node, above) = node_at(root, path);
    match kind {
        1 => node.input = !node.input,
        2 => std::mem::swap(&mut node.on0, &mut node.on1),
        _ => {
            let mut remaining: Vec<BoxRef> =
                (0..owned).map(|i| counts.box_at(p, i)).filter(|b| !above.contains(b)).collect();
            *node = sample_tree(&mut remaining, rng).expect("at least the node's own box remains");
        }
    }
    n
}

/// Moves tried without improvement before restarting from a random network.
const PLATEAU: u64 = 200;

fn local_search(config: &SearchConfig, from_trivial: bool) -> Result<SearchResult, SearchError> {
    config.counts.check_cap()?;
    let mut rng = chunk_rng(config.seed, 0);
    let start = |rng: &mut ChaCha8Rng, first: bool| {
        if first && from_trivial {
            NetworkStrategy::trivial(config.counts, Outcome::Plus)
        } else {
            sample_network_with(config.counts, rng)
        }
    };
    let mut current = start(&mut rng, true);
    let mut current_value = evaluate(&current)?;
    let mut best = (current_value, current.clone());
    let mut histogram = BTreeMap::from([(current_value, 1u64)]);
    let mut stale = 0;
    let mut restarts = 0;
    for _ in 1..config.budget.max(1) {
        let candidate = if stale >= PLATEAU {
            stale = 0;
            restarts += 1;
            current_value = Dyadic::ONE;
            start(&mut rng, false)
        } else {
            mutate(&current, &mut rng)
        };
        debug_assert!(candidate.validate().is_valid());
        let v = evaluate(&candidate)?;
        *histogram.entry(v).or_insert(0) += 1;
        if v < current_value {
            current = candidate;
            current_value = v;
            stale = 0;
            if v < best.0 {
                best = (v, current.clone());
            }
        } else {
            stale += 1;
        }
    }
    Ok(SearchResult {
        mode: config.mode,
        best_value: best.0,
        best_network: best.1,
        histogram,
        evaluated: config.budget.max(1),
        budget_exhausted: true,
        exhaustive: false,
        label: "best found by local search".into(),
        stats: BTreeMap::from([("restarts".to_string(), restarts)]),
    })
}

/// Searches for the smallest `E(F)` as configured; any value below `1/8`
/// is returned as [`SearchError::BoundViolated`].
pub fn minimize_ef(config: &SearchConfig) -> Result<SearchResult, SearchError> {
    match config.mode {
        SearchMode::Exhaustive => {
            if config.counts != BoxCounts::uniform(1) {
                return Err(SearchError::Config("exhaustive mode needs counts (1,1,1)".into()));
            }
            if !config.symmetry_reduction {
                return Err(SearchError::Config("exhaustive mode needs symmetry reduction".into()));
            }
            exhaustive(true)
        }
        SearchMode::Random => random_search(config),
        SearchMode::LocalSearch { from_trivial } => local_search(config, from_trivial),
    }
}
