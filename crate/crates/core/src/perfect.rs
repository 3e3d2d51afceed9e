//! Balanced words and the perfect norm on derived subgroups.
//!
//! A word is balanced when every generator's exponent sum vanishes. The perfect
//! norm of `g ∈ [G,G]` is the least length of a balanced word evaluating to `g`.
//! Searches run BFS over `(element, exponent vector)` states; a state at depth `ℓ`
//! survives only while `Σ|v_s| ≤ budget − ℓ`, since each remaining letter can
//! repair at most one unit of imbalance.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Group, GroupHandle, Letter};
use crate::cayley::{distances_from, Enumeration};

#[derive(Debug, Error)]
pub enum PerfectNormError {
    #[error("element is not in the derived subgroup")]
    NotInDerived,
    #[error("no balanced word of length ≤ {budget} represents the element")]
    BeyondBudget { budget: u32 },
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Signed letter counts, one per generator.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExponentVector(pub Vec<i64>);

impl ExponentVector {
    pub fn is_balanced(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn l1(&self) -> i64 {
        self.0.iter().map(|v| v.abs()).sum()
    }
}

pub fn exponent_vector(word: &[Letter], generator_count: usize) -> ExponentVector {
    let mut v = vec![0i64; generator_count];
    for l in word {
        v[l.generator as usize] += if l.inverse { -1 } else { 1 };
    }
    ExponentVector(v)
}

const MAX_GENERATORS: usize = 16;

fn pack_shift(v: u128, generator: u16, delta: i8) -> u128 {
    let shift = 8 * generator as u32;
    let cur = ((v >> shift) & 0xff) as u8 as i8;
    let next = (cur + delta) as u8 as u128;
    (v & !(0xffu128 << shift)) | (next << shift)
}

fn packed_l1(v: u128, generator_count: usize) -> u32 {
    (0..generator_count).map(|g| (((v >> (8 * g)) & 0xff) as u8 as i8).unsigned_abs() as u32).sum()
}

/// Result of a balanced-word search for one target.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedWord {
    pub length: u32,
    pub word: Vec<Letter>,
}

/// Shortest balanced words from the identity to every target, up to `budget`.
///
/// `step` applies a letter on the right; `target_of` maps an element to its
/// target slot. Returns one entry per slot (`None` when beyond budget).
pub fn balanced_search<E, S, T>(
    identity: E,
    generator_count: usize,
    budget: u32,
    target_count: usize,
    step: S,
    target_of: T,
) -> Result<Vec<Option<BalancedWord>>, PerfectNormError>
where
    E: Clone + Eq + Hash,
    S: Fn(&E, Letter) -> E,
    T: Fn(&E) -> Option<usize>,
{
    if generator_count == 0 || generator_count > MAX_GENERATORS {
        return Err(PerfectNormError::Usage(format!("balanced search supports 1..={MAX_GENERATORS} generators")));
    }
    if budget > 126 {
        return Err(PerfectNormError::Usage("budget above 126 is not supported".into()));
    }
    let letters: Vec<Letter> = (0..generator_count).flat_map(|g| [Letter::new(g, false), Letter::new(g, true)]).collect();
    let mut found: Vec<Option<BalancedWord>> = vec![None; target_count];
    let mut remaining = target_count;
    let mut states: Vec<(E, u128)> = vec![(identity.clone(), 0)];
    let mut parent: Vec<(u32, u16)> = vec![(u32::MAX, 0)];
    let mut seen: HashMap<(E, u128), ()> = HashMap::new();
    seen.insert((identity, 0), ());

    let trace = |idx: usize, parent: &[(u32, u16)]| -> Vec<Letter> {
        let mut w = Vec::new();
        let mut i = idx;
        while parent[i].0 != u32::MAX {
            w.push(Letter::from_label(parent[i].1));
            i = parent[i].0 as usize;
        }
        w.reverse();
        w
    };

    if let Some(t) = target_of(&states[0].0) {
        found[t] = Some(BalancedWord { length: 0, word: Vec::new() });
        remaining -= 1;
    }
    let mut layer = 0..1usize;
    let mut depth = 0u32;
    while remaining > 0 && depth < budget && !layer.is_empty() {
        depth += 1;
        let start = states.len();
        for idx in layer.clone() {
            for &l in &letters {
                let delta = if l.inverse { -1 } else { 1 };
                let v = pack_shift(states[idx].1, l.generator, delta);
                if packed_l1(v, generator_count) > budget - depth {
                    continue;
                }
                let e = step(&states[idx].0, l);
                let key = (e, v);
                if seen.contains_key(&key) {
                    continue;
                }
                seen.insert(key.clone(), ());
                states.push(key);
                parent.push((idx as u32, l.label()));
                let new = states.len() - 1;
                if v == 0 {
                    if let Some(t) = target_of(&states[new].0) {
                        if found[t].is_none() {
                            found[t] = Some(BalancedWord { length: depth, word: trace(new, &parent) });
                            remaining -= 1;
                        }
                    }
                }
            }
        }
        layer = start..states.len();
    }
    Ok(found)
}

/// The normal closure of the generator commutators, as sorted element indices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivedSubgroup {
    pub members: Vec<usize>,
    pub group_order: usize,
    pub is_perfect: bool,
}

impl DerivedSubgroup {
    pub fn contains(&self, idx: usize) -> bool {
        self.members.binary_search(&idx).is_ok()
    }

    pub fn order(&self) -> usize {
        self.members.len()
    }
}

pub fn derived_subgroup<G: Group>(e: &Enumeration<G>) -> DerivedSubgroup {
    let n = e.order();
    let gens: Vec<usize> = (0..e.handle().generator_count())
        .map(|g| e.graph.step(0, Letter::new(g, false).label()).unwrap() as usize)
        .collect();
    let gen_inv: Vec<usize> = gens.iter().map(|&g| e.inv_index(g)).collect();
    let mut comms: Vec<usize> = Vec::new();
    for i in 0..gens.len() {
        for j in 0..gens.len() {
            let c = e.mul_index(e.mul_index(gen_inv[i], gen_inv[j]), e.mul_index(gens[i], gens[j]));
            if c != 0 && !comms.contains(&c) {
                comms.push(c);
            }
        }
    }
    let mut inside = vec![false; n];
    inside[0] = true;
    let mut queue = vec![0usize];
    while let Some(x) = queue.pop() {
        let push = |y: usize, inside: &mut Vec<bool>, queue: &mut Vec<usize>| {
            if !inside[y] {
                inside[y] = true;
                queue.push(y);
            }
        };
        for &c in &comms {
            push(e.mul_index(x, c), &mut inside, &mut queue);
        }
        for (k, &s) in gens.iter().enumerate() {
            push(e.mul_index(e.mul_index(gen_inv[k], x), s), &mut inside, &mut queue);
        }
    }
    let members: Vec<usize> = (0..n).filter(|&i| inside[i]).collect();
    DerivedSubgroup { is_perfect: members.len() == n, members, group_order: n }
}

/// Word and perfect norms over an enumerated derived subgroup.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerfectNormTable {
    pub budget: u32,
    /// `(element index, word norm, perfect norm or None beyond budget)`.
    pub rows: Vec<(usize, u32, Option<u32>)>,
    #[serde(skip)]
    pub witnesses: Vec<Option<Vec<Letter>>>,
}

impl PerfectNormTable {
    pub fn get(&self, idx: usize) -> Option<&(usize, u32, Option<u32>)> {
        self.rows.binary_search_by_key(&idx, |r| r.0).ok().map(|i| &self.rows[i])
    }

    pub fn unresolved(&self) -> usize {
        self.rows.iter().filter(|r| r.2.is_none()).count()
    }

    /// CSV with header `element,word_norm,perfect_norm`; unresolved norms are written as `>budget`.
    pub fn write_csv<G: Group>(&self, e: &Enumeration<G>, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "element,word_norm,perfect_norm")?;
        for &(i, w, p) in &self.rows {
            let p = p.map_or(format!(">{}", self.budget), |p| p.to_string());
            writeln!(out, "{},{},{}", hex::encode(e.graph.encoding(i)), w, p)?;
        }
        Ok(())
    }
}

fn enumerated_search<G: Group>(e: &Enumeration<G>, budget: u32, slot: &[Option<usize>], count: usize) -> Result<Vec<Option<BalancedWord>>, PerfectNormError> {
    balanced_search(
        0u32,
        e.handle().generator_count(),
        budget,
        count,
        |&v, l| e.graph.step(v as usize, l.label()).unwrap(),
        |&v| slot[v as usize],
    )
}

pub fn perfect_norm_table<G: Group>(e: &Enumeration<G>, derived: &DerivedSubgroup, budget: u32) -> Result<PerfectNormTable, PerfectNormError> {
    let mut slot = vec![None; e.order()];
    for (k, &m) in derived.members.iter().enumerate() {
        slot[m] = Some(k);
    }
    let found = enumerated_search(e, budget, &slot, derived.order())?;
    let dist = distances_from(&e.graph, 0);
    let rows = derived.members.iter().zip(&found).map(|(&m, f)| (m, dist[m], f.as_ref().map(|b| b.length))).collect();
    let witnesses = found.into_iter().map(|f| f.map(|b| b.word)).collect();
    Ok(PerfectNormTable { budget, rows, witnesses })
}

/// Perfect norm of one enumerated element, with its witness word.
pub fn perfect_norm<G: Group>(e: &Enumeration<G>, derived: &DerivedSubgroup, g: usize, budget: u32) -> Result<BalancedWord, PerfectNormError> {
    if !derived.contains(g) {
        return Err(PerfectNormError::NotInDerived);
    }
    let mut slot = vec![None; e.order()];
    slot[g] = Some(0);
    enumerated_search(e, budget, &slot, 1)?.pop().flatten().ok_or(PerfectNormError::BeyondBudget { budget })
}

/// Perfect norms of arbitrary elements of a group too large to enumerate.
pub fn perfect_norms_unenumerated<G: Group>(handle: &GroupHandle<G>, targets: &[G::Elem], budget: u32) -> Result<Vec<Option<BalancedWord>>, PerfectNormError> {
    let carrier = handle.carrier();
    let mut slot: HashMap<G::Elem, usize> = HashMap::new();
    for (k, t) in targets.iter().enumerate() {
        slot.entry(t.clone()).or_insert(k);
    }
    let found = balanced_search(
        carrier.identity(),
        handle.generator_count(),
        budget,
        slot.len(),
        |x, l| carrier.mul(x, handle.letter_elem(l)),
        |x| slot.get(x).copied(),
    )?;
    Ok(targets.iter().map(|t| found[slot[t]].clone()).collect())
}

/// `J`: the longest among shortest balanced words representing each generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JConstant {
    pub j: u32,
    pub per_generator: Vec<(String, u32, Vec<Letter>)>,
}

pub fn compute_j<G: Group>(e: &Enumeration<G>, derived: &DerivedSubgroup, cap: u32) -> Result<JConstant, PerfectNormError> {
    let mut per_generator = Vec::new();
    for (k, name) in e.handle().names().into_iter().enumerate() {
        let g = e.graph.step(0, Letter::new(k, false).label()).unwrap() as usize;
        let b = perfect_norm(e, derived, g, cap)?;
        per_generator.push((name, b.length, b.word));
    }
    let j = per_generator.iter().map(|p| p.1).max().unwrap_or(0);
    Ok(JConstant { j, per_generator })
}
