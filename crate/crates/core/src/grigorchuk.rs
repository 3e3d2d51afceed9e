//! The first Grigorchuk group `⟨a,b,c,d⟩` acting on the binary tree by
//! `a = swap`, `b = (a,c)`, `c = (a,d)`, `d = (1,b)`, and its Schreier graph on the
//! orbit of `1^∞`.
//!
//! A ray is stored as a finite prefix with trailing ones stripped, standing for
//! `u·1^∞`; the marked rays are `x_i = 0^i 1^∞`.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{CarrierKind, Group};
use crate::cayley::GrowthFunction;

pub const A: u8 = 0;
pub const B: u8 = 1;
pub const C: u8 = 2;
pub const D: u8 = 3;
const ID: u8 = 4;
const NAMES: [char; 4] = ['a', 'b', 'c', 'd'];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrigError {
    #[error("cannot parse word {0:?}")]
    Parse(String),
    #[error("equality needs level {needed} but the level budget is {budget}")]
    Undecided { needed: u32, budget: u32 },
    #[error("equality oracles disagree on {0}")]
    OracleDisagreement(String),
    #[error("{property} not verified within index cap {cap}")]
    NotVerifiedWithinCap { property: &'static str, cap: usize },
    #[error("no witness of length ≤ {budget}")]
    NoWitness { budget: usize },
    #[error("usage error: {0}")]
    Usage(String),
}

/// Product in the Klein group `{1,b,c,d}`.
fn klein(x: u8, y: u8) -> u8 {
    match (x, y) {
        (ID, z) | (z, ID) => z,
        _ if x == y => ID,
        _ => B + C + D - x - y,
    }
}

/// A reduced word: `a`-letters alternate with letters from `{b,c,d}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GrigWord(Vec<u8>);

impl GrigWord {
    pub fn identity() -> Self {
        GrigWord(Vec::new())
    }

    pub fn generator(g: u8) -> Self {
        GrigWord(vec![g])
    }

    pub fn reduce(letters: impl IntoIterator<Item = u8>) -> Self {
        let mut out: Vec<u8> = Vec::new();
        for l in letters {
            match (l, out.last().copied()) {
                (A, Some(A)) => {
                    out.pop();
                }
                (A, _) => out.push(A),
                (x, Some(y)) if y != A => {
                    out.pop();
                    let z = klein(x, y);
                    if z != ID {
                        out.push(z);
                    }
                }
                (x, _) => out.push(x),
            }
        }
        GrigWord(out)
    }

    pub fn parse(s: &str) -> Result<Self, GrigError> {
        let mut letters = Vec::new();
        for ch in s.chars().filter(|c| !c.is_whitespace() && *c != '1') {
            match NAMES.iter().position(|&n| n == ch) {
                Some(g) => letters.push(g as u8),
                None => return Err(GrigError::Parse(s.into())),
            }
        }
        Ok(Self::reduce(letters))
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mul(&self, other: &GrigWord) -> GrigWord {
        Self::reduce(self.0.iter().chain(&other.0).copied())
    }

    /// Every generator is an involution, so inversion is reversal.
    pub fn inverse(&self) -> GrigWord {
        GrigWord(self.0.iter().rev().copied().collect())
    }

    /// Parity of the root permutation and the two first-level sections.
    pub fn decompose(&self) -> (bool, GrigWord, GrigWord) {
        let mut swapped = false;
        let mut s0 = Vec::with_capacity(self.0.len() / 2 + 1);
        let mut s1 = Vec::with_capacity(self.0.len() / 2 + 1);
        for &l in &self.0 {
            if l == A {
                swapped = !swapped;
                continue;
            }
            let (on0, on1) = match l {
                B => (A, C),
                C => (A, D),
                _ => (ID, B),
            };
            // The section at the vertex that currently sits over the letter.
            let (top0, top1) = if swapped { (on1, on0) } else { (on0, on1) };
            if top0 != ID {
                s0.push(top0);
            }
            if top1 != ID {
                s1.push(top1);
            }
        }
        (swapped, Self::reduce(s0), Self::reduce(s1))
    }
}

impl fmt::Display for GrigWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for &l in &self.0 {
            write!(f, "{}", NAMES[l as usize])?;
        }
        Ok(())
    }
}

/// A point `u·1^∞` of the orbit of `1^∞`, with `u` empty or ending in 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ray(Vec<u8>);

impl Ray {
    pub fn new(prefix: &[u8]) -> Self {
        let mut v = prefix.to_vec();
        while v.last() == Some(&1) {
            v.pop();
        }
        Ray(v)
    }

    /// `x_i = 0^i 1^∞`.
    pub fn marked(i: usize) -> Self {
        Ray(vec![0; i])
    }

    pub fn prefix(&self) -> &[u8] {
        &self.0
    }

    /// `Some(i)` when this ray is `x_i`.
    pub fn marked_index(&self) -> Option<usize> {
        self.0.iter().all(|&b| b == 0).then_some(self.0.len())
    }
}

impl fmt::Display for Ray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{b}")?;
        }
        write!(f, "1^∞")
    }
}

/// `x · g` for a single generator.
pub fn act_on_ray(g: u8, x: &Ray) -> Ray {
    let mut out = x.0.clone();
    let mut state = g;
    for bit in out.iter_mut() {
        state = match state {
            ID => break,
            A => {
                *bit ^= 1;
                ID
            }
            B => {
                if *bit == 0 {
                    A
                } else {
                    C
                }
            }
            C => {
                if *bit == 0 {
                    A
                } else {
                    D
                }
            }
            _ => {
                if *bit == 0 {
                    ID
                } else {
                    B
                }
            }
        };
    }
    if state == A {
        out.push(0);
    }
    Ray::new(&out)
}

pub fn act_word(w: &GrigWord, x: &Ray) -> Ray {
    w.0.iter().fold(x.clone(), |r, &g| act_on_ray(g, &r))
}

/// Generator permutations of the `2^k` level-`k` vertices (bit `p` of a vertex
/// index is the letter at depth `p`).
pub fn level_generators(k: u32) -> [Vec<u32>; 4] {
    let n = 1usize << k;
    let mut out: [Vec<u32>; 4] = Default::default();
    for (g, perm) in out.iter_mut().enumerate() {
        *perm = (0..n as u32)
            .map(|v| {
                let bits: Vec<u8> = (0..k).map(|p| ((v >> p) & 1) as u8).collect();
                let mut state = g as u8;
                let mut bits2 = bits.clone();
                for bit in bits2.iter_mut() {
                    state = match state {
                        ID => break,
                        A => {
                            *bit ^= 1;
                            ID
                        }
                        B => [A, C][*bit as usize],
                        C => [A, D][*bit as usize],
                        _ => [ID, B][*bit as usize],
                    };
                }
                bits2.iter().enumerate().map(|(p, &b)| (b as u32) << p).sum()
            })
            .collect();
    }
    out
}

/// The action of `w` on level `k`, as an image table (right action).
pub fn level_action(w: &GrigWord, k: u32, gens: &[Vec<u32>; 4]) -> Vec<u32> {
    let n = 1usize << k;
    (0..n as u32).map(|v| w.0.iter().fold(v, |x, &g| gens[g as usize][x as usize])).collect()
}

/// Number of halvings `n ↦ ⌈n/2⌉` needed to reach length ≤ 1.
fn halvings(mut n: usize) -> u32 {
    let mut j = 0;
    while n > 1 {
        n = n.div_ceil(2);
        j += 1;
    }
    j
}

/// A level at which every nontrivial reduced word of length ≤ `n` acts nontrivially.
///
/// Sections of a reduced word of length `n` have length `≤ ⌈n/2⌉`, so after
/// `halvings(n)` levels every section is a single generator or trivial, and a
/// nontrivial generator moves some vertex within three further levels.
pub fn complete_level(n: usize) -> u32 {
    if n == 0 {
        0
    } else {
        halvings(n) + 3
    }
}

/// Triviality by the contracting recursion alone.
pub fn trivial_by_recursion(w: &GrigWord) -> bool {
    match w.len() {
        0 => true,
        1 => false,
        _ => {
            let (swap, s0, s1) = w.decompose();
            !swap && trivial_by_recursion(&s0) && trivial_by_recursion(&s1)
        }
    }
}

/// Triviality by the level-`k` action alone (sound for "nontrivial"; complete when
/// `k ≥ complete_level(|w|)`).
pub fn trivial_on_level(w: &GrigWord, k: u32) -> bool {
    let gens = level_generators(k);
    level_action(w, k, &gens).iter().enumerate().all(|(v, &x)| v as u32 == x)
}

/// Equality with both oracles and a memo table.
pub struct GrigEquality {
    level_budget: u32,
    gens: Mutex<HashMap<u32, Arc<[Vec<u32>; 4]>>>,
    memo: Mutex<HashMap<GrigWord, bool>>,
}

impl GrigEquality {
    pub fn new(level_budget: u32) -> Self {
        GrigEquality { level_budget, gens: Mutex::new(HashMap::new()), memo: Mutex::new(HashMap::new()) }
    }

    fn gens(&self, k: u32) -> Arc<[Vec<u32>; 4]> {
        self.gens.lock().unwrap().entry(k).or_insert_with(|| Arc::new(level_generators(k))).clone()
    }

    pub fn is_trivial(&self, w: &GrigWord) -> Result<bool, GrigError> {
        if let Some(&t) = self.memo.lock().unwrap().get(w) {
            return Ok(t);
        }
        let k = complete_level(w.len());
        if k > self.level_budget {
            return Err(GrigError::Undecided { needed: k, budget: self.level_budget });
        }
        let gens = self.gens(k);
        let by_level = level_action(w, k, &gens).iter().enumerate().all(|(v, &x)| v as u32 == x);
        let by_recursion = trivial_by_recursion(w);
        if by_level != by_recursion {
            return Err(GrigError::OracleDisagreement(w.to_string()));
        }
        self.memo.lock().unwrap().insert(w.clone(), by_level);
        Ok(by_level)
    }

    pub fn equal(&self, w1: &GrigWord, w2: &GrigWord) -> Result<bool, GrigError> {
        self.is_trivial(&w1.mul(&w2.inverse()))
    }
}

pub fn grig_equal(w1: &GrigWord, w2: &GrigWord, level_budget: u32) -> Result<bool, GrigError> {
    GrigEquality::new(level_budget).equal(w1, w2)
}

/// Grigorchuk elements as a carrier: a representative word plus the action on a
/// fixed level, which is the identity key. Faithful on words of length
/// `≤ 2^(level−3)`; callers choose `level` from the radius they need.
#[derive(Clone, Debug)]
pub struct GrigCarrier {
    level: u32,
    gens: Arc<[Vec<u32>; 4]>,
}

#[derive(Clone, Debug)]
pub struct GrigElem {
    pub word: GrigWord,
    key: Vec<u16>,
}

impl PartialEq for GrigElem {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for GrigElem {}
impl std::hash::Hash for GrigElem {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key.hash(state)
    }
}

impl GrigCarrier {
    /// Levels above 16 are not supported (keys are stored as `u16`).
    pub fn new(level: u32) -> Self {
        assert!(level <= 16, "Grigorchuk carrier level {level} exceeds 16");
        GrigCarrier { level, gens: Arc::new(level_generators(level)) }
    }

    /// A carrier whose keys separate all elements of length `≤ radius`.
    pub fn for_radius(radius: usize) -> Self {
        Self::new(complete_level(2 * radius).max(1))
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn elem(&self, w: &GrigWord) -> GrigElem {
        GrigElem { key: level_action(w, self.level, &self.gens).into_iter().map(|x| x as u16).collect(), word: w.clone() }
    }

    pub fn generator(&self, g: u8) -> GrigElem {
        GrigElem { key: self.gens[g as usize].iter().map(|&x| x as u16).collect(), word: GrigWord::generator(g) }
    }
}

impl Group for GrigCarrier {
    type Elem = GrigElem;

    fn identity(&self) -> GrigElem {
        GrigElem { word: GrigWord::identity(), key: (0..1u32 << self.level).map(|x| x as u16).collect() }
    }

    fn mul(&self, a: &GrigElem, b: &GrigElem) -> GrigElem {
        GrigElem { word: a.word.mul(&b.word), key: a.key.iter().map(|&x| b.key[x as usize]).collect() }
    }

    fn inv(&self, a: &GrigElem) -> GrigElem {
        let mut key = vec![0u16; a.key.len()];
        for (i, &x) in a.key.iter().enumerate() {
            key[x as usize] = i as u16;
        }
        GrigElem { word: a.word.inverse(), key }
    }

    fn encode(&self, a: &GrigElem, out: &mut Vec<u8>) {
        for &x in &a.key {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn kind(&self) -> CarrierKind {
        CarrierKind::GrigorchukWord
    }

    fn describe(&self) -> String {
        format!("Grigorchuk(level {})", self.level)
    }
}

/// Ball sizes of the group in `{a,b,c,d}`, keyed by a provably faithful level action.
pub fn grig_growth(radius: usize) -> GrowthFunction {
    let carrier = GrigCarrier::for_radius(radius);
    let gens: Vec<GrigElem> = (0..4).map(|g| carrier.generator(g)).collect();
    let mut seen: HashMap<Vec<u16>, ()> = HashMap::new();
    let id = carrier.identity();
    seen.insert(id.key.clone(), ());
    let mut frontier = vec![id];
    let mut sizes = vec![1u64];
    for _ in 0..radius {
        let mut next = Vec::new();
        for x in &frontier {
            for g in &gens {
                let y = carrier.mul(x, g);
                if !seen.contains_key(&y.key) {
                    seen.insert(y.key.clone(), ());
                    next.push(y);
                }
            }
        }
        sizes.push(sizes.last().unwrap() + next.len() as u64);
        frontier = next;
    }
    GrowthFunction { sizes }
}

/// A radius-`R` ball of the Schreier graph, numbered in BFS order from the base
/// with labels explored in the order `a, b, c, d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchreierBall {
    pub base: Ray,
    pub radius: u32,
    pub vertices: Vec<Ray>,
    pub dist: Vec<u32>,
    /// `adj[v][s]`: the index of `v·s`, recorded for vertices at distance `< R`
    /// (the edges a path of length `≤ R` from the base can traverse).
    pub adj: Vec<[Option<u32>; 4]>,
}

impl SchreierBall {
    pub fn index_of(&self, x: &Ray) -> Option<usize> {
        self.vertices.iter().position(|v| v == x)
    }

    pub fn contains(&self, x: &Ray) -> bool {
        self.index_of(x).is_some()
    }

    /// Canonical form of the rooted labeled ball; equal forms mean the balls are
    /// isomorphic by a label- and base-preserving map.
    pub fn canonical_form(&self) -> Vec<[Option<u32>; 4]> {
        self.adj.clone()
    }

    /// Undirected labeled edge list in DOT syntax.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph schreier {\n");
        for (v, x) in self.vertices.iter().enumerate() {
            s.push_str(&format!("  v{v} [label=\"{x}\" dist={}];\n", self.dist[v]));
        }
        for (v, row) in self.adj.iter().enumerate() {
            for (g, t) in row.iter().enumerate() {
                if let Some(t) = *t {
                    if t as usize >= v {
                        s.push_str(&format!("  v{v} -- v{t} [label={}];\n", NAMES[g]));
                    }
                }
            }
        }
        s.push_str("}\n");
        s
    }
}

pub fn schreier_ball(base: &Ray, radius: u32) -> SchreierBall {
    let mut index: HashMap<Ray, u32> = HashMap::new();
    let mut vertices = vec![base.clone()];
    let mut dist = vec![0u32];
    index.insert(base.clone(), 0);
    let mut queue = VecDeque::from([0u32]);
    let mut out_edges: Vec<[Ray; 4]> = Vec::new();
    while let Some(v) = queue.pop_front() {
        let x = vertices[v as usize].clone();
        let imgs: [Ray; 4] = std::array::from_fn(|g| act_on_ray(g as u8, &x));
        if dist[v as usize] < radius {
            for y in &imgs {
                if !index.contains_key(y) {
                    index.insert(y.clone(), vertices.len() as u32);
                    vertices.push(y.clone());
                    dist.push(dist[v as usize] + 1);
                    queue.push_back(vertices.len() as u32 - 1);
                }
            }
        }
        out_edges.push(imgs);
    }
    let adj = out_edges
        .iter()
        .enumerate()
        .map(|(v, imgs)| std::array::from_fn(|g| if dist[v] < radius { index.get(&imgs[g]).copied() } else { None }))
        .collect();
    SchreierBall { base: base.clone(), radius, vertices, dist, adj }
}

/// Exact Schreier distance, searched up to `max_radius`.
pub fn schreier_distance(x: &Ray, y: &Ray, max_radius: u32) -> Option<u32> {
    let ball = schreier_ball(x, max_radius);
    ball.index_of(y).map(|i| ball.dist[i])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceProperties {
    pub radius: u32,
    pub cap: usize,
    /// Least `N` with `d(x_i, x_j) ≥ R` for all distinct `i, j ∈ [N, cap]`.
    pub spreading: usize,
    /// Least `N` with equal labeled `R`-balls at all `x_i`, `i ∈ [N, cap]`.
    pub stabilizing: usize,
    /// Closest pairs `(i, j, d)` with `d < R` that force the spreading index.
    pub near_pairs: Vec<(usize, usize, u32)>,
    pub ball_size: usize,
}

/// Verifies spreading and local stabilization of `x_i = 0^i 1^∞` for `i ≤ cap`.
pub fn check_sequence_properties(radius: u32, cap: usize) -> Result<SequenceProperties, GrigError> {
    if cap < 1 {
        return Err(GrigError::Usage("index cap must be at least 1".into()));
    }
    let mut near_pairs = Vec::new();
    let mut spreading = 0usize;
    if radius > 0 {
        for i in 0..=cap {
            let ball = schreier_ball(&Ray::marked(i), radius - 1);
            for (v, x) in ball.vertices.iter().enumerate() {
                if let Some(j) = x.marked_index() {
                    if j > i && j <= cap {
                        near_pairs.push((i, j, ball.dist[v]));
                        spreading = spreading.max(i + 1);
                    }
                }
            }
        }
    }
    let forms: Vec<_> = (0..=cap).map(|i| schreier_ball(&Ray::marked(i), radius).canonical_form()).collect();
    let mut stabilizing = 0;
    for i in 0..cap {
        if forms[i] != forms[i + 1] {
            stabilizing = i + 1;
        }
    }
    if spreading >= cap {
        return Err(GrigError::NotVerifiedWithinCap { property: "spreading", cap });
    }
    if stabilizing >= cap {
        return Err(GrigError::NotVerifiedWithinCap { property: "local stabilization", cap });
    }
    Ok(SequenceProperties { radius, cap, spreading, stabilizing, near_pairs, ball_size: forms[cap].len() })
}

/// Whether `g` sends `x_i` to `x_j` while moving no other marked `x_k` onto a
/// different marked `x_l` (fixed marked points are allowed).
pub fn is_rectifier(w: &GrigWord, i: usize, j: usize, marked: &[usize]) -> bool {
    if act_word(w, &Ray::marked(i)) != Ray::marked(j) {
        return false;
    }
    marked.iter().filter(|&&k| k != i).all(|&k| match act_word(w, &Ray::marked(k)).marked_index() {
        Some(l) => l == k || !marked.contains(&l),
        None => true,
    })
}

/// Shortest rectifying word, by BFS over the images of the marked rays.
pub fn find_rectifier(i: usize, j: usize, marked: &[usize], max_length: usize, state_budget: usize) -> Result<GrigWord, GrigError> {
    let mut pts: Vec<usize> = marked.to_vec();
    if !pts.contains(&i) {
        pts.push(i);
    }
    pts.sort_unstable();
    pts.dedup();
    let pi = pts.iter().position(|&k| k == i).unwrap();
    let marked_set: Vec<usize> = marked.to_vec();
    let done = |imgs: &[Ray]| -> bool {
        if imgs[pi] != Ray::marked(j) {
            return false;
        }
        pts.iter().zip(imgs).all(|(&k, y)| {
            k == i
                || match y.marked_index() {
                    Some(l) => l == k || !marked_set.contains(&l),
                    None => true,
                }
        })
    };
    let start: Vec<Ray> = pts.iter().map(|&k| Ray::marked(k)).collect();
    if done(&start) {
        return Ok(GrigWord::identity());
    }
    let mut parent: HashMap<Vec<Ray>, (Vec<Ray>, u8)> = HashMap::new();
    let mut frontier = vec![start.clone()];
    parent.insert(start.clone(), (Vec::new(), ID));
    for _ in 0..max_length {
        let mut next = Vec::new();
        for s in &frontier {
            for g in 0..4u8 {
                let t: Vec<Ray> = s.iter().map(|x| act_on_ray(g, x)).collect();
                if parent.contains_key(&t) {
                    continue;
                }
                parent.insert(t.clone(), (s.clone(), g));
                if done(&t) {
                    let mut letters = Vec::new();
                    let mut cur = t;
                    while cur != start {
                        let (p, g) = parent[&cur].clone();
                        letters.push(g);
                        cur = p;
                    }
                    letters.reverse();
                    let w = GrigWord::reduce(letters);
                    debug_assert!(is_rectifier(&w, i, j, marked));
                    return Ok(w);
                }
                next.push(t);
            }
            if parent.len() > state_budget {
                return Err(GrigError::NoWitness { budget: max_length });
            }
        }
        frontier = next;
    }
    Err(GrigError::NoWitness { budget: max_length })
}
