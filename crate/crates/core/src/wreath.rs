//! `W = ⟨G, f⟩ ≤ B^X ⋊ G` over the Grigorchuk action on the orbit of `1^∞`, with
//! `B` a finite product of factors `H_i` and an order-adjusting cyclic factor.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{CarrierKind, Group, Letter};
use crate::cayley::Enumeration;
use crate::grigorchuk::{act_word, find_rectifier, schreier_ball, GrigCarrier, GrigElem, GrigError, GrigWord, Ray, A, B, C, D};
use crate::perfect::{balanced_search, BalancedWord, PerfectNormError};

/// Largest factor order stored as a multiplication table.
pub const MAX_FACTOR_ORDER: usize = 4096;

#[derive(Debug, Error)]
pub enum WreathError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("index cap {cap} reached while choosing n({position})")]
    Unresolved { position: usize, cap: usize },
    #[error("ball enumeration exceeded {0} elements")]
    Budget(usize),
    #[error("no rectifier for x_{from} → x_{to}: {source}")]
    Rectifier { from: usize, to: usize, source: GrigError },
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Perfect(#[from] PerfectNormError),
    #[error(transparent)]
    Grig(#[from] GrigError),
}

/// A finite group stored by its multiplication table; element 0 is the identity.
#[derive(Clone, Debug)]
pub struct Factor {
    pub name: String,
    table: Vec<u32>,
    inv: Vec<u32>,
    order: usize,
    pub generators: Vec<u32>,
    pub generator_names: Vec<String>,
}

impl Factor {
    pub fn from_enumeration<G: Group>(name: &str, e: &Enumeration<G>) -> Result<Self, WreathError> {
        let n = e.order();
        if n > MAX_FACTOR_ORDER {
            return Err(WreathError::Usage(format!("factor {name} has order {n} > {MAX_FACTOR_ORDER}")));
        }
        let mut table = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                table.push(e.mul_index(a, b) as u32);
            }
        }
        let inv = (0..n).map(|a| e.inv_index(a) as u32).collect();
        let generators = (0..e.handle().generator_count()).map(|g| e.graph.step(0, 2 * g as u16).unwrap()).collect();
        Ok(Factor { name: name.to_string(), table, inv, order: n, generators, generator_names: e.handle().names() })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        self.table[a as usize * self.order + b as usize]
    }

    pub fn inv(&self, a: u32) -> u32 {
        self.inv[a as usize]
    }

    pub fn commutator(&self, a: u32, b: u32) -> u32 {
        self.mul(self.mul(self.inv(a), self.inv(b)), self.mul(a, b))
    }

    pub fn element_order(&self, a: u32) -> u64 {
        let mut x = a;
        let mut k = 1;
        while x != 0 {
            x = self.mul(x, a);
            k += 1;
        }
        k
    }

    pub fn eval(&self, word: &[Letter]) -> u32 {
        word.iter().fold(0, |acc, l| {
            let g = self.generators[l.generator as usize];
            self.mul(acc, if l.inverse { self.inv(g) } else { g })
        })
    }

    /// The derived subgroup, as the closure of conjugates of generator commutators.
    pub fn derived_members(&self) -> Vec<u32> {
        let mut gens: HashSet<u32> = HashSet::new();
        for &s in &self.generators {
            for &t in &self.generators {
                gens.insert(self.commutator(s, t));
            }
        }
        let mut members: HashSet<u32> = HashSet::from([0]);
        let mut queue: VecDeque<u32> = VecDeque::from([0]);
        while let Some(x) = queue.pop_front() {
            let mut next: Vec<u32> = gens.iter().map(|&c| self.mul(x, c)).collect();
            for &s in &self.generators {
                next.push(self.mul(self.mul(self.inv(s), x), s));
            }
            for y in next {
                if members.insert(y) {
                    queue.push_back(y);
                }
            }
        }
        let mut v: Vec<u32> = members.into_iter().collect();
        v.sort_unstable();
        v
    }

    /// Shortest balanced words for every element, up to `budget`.
    pub fn perfect_norms(&self, budget: u32) -> Result<Vec<Option<BalancedWord>>, WreathError> {
        Ok(balanced_search(
            0u32,
            self.generators.len(),
            budget,
            self.order,
            |&x, l| {
                let g = self.generators[l.generator as usize];
                self.mul(x, if l.inverse { self.inv(g) } else { g })
            },
            |&x| Some(x as usize),
        )?)
    }
}

/// `B = H_1 × ⋯ × H_k × C_N`.
#[derive(Clone, Debug)]
pub struct BGroup {
    pub factors: Vec<Factor>,
    pub z_order: u64,
}

/// An element of `B`: one entry per factor, then the exponent of `z`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BElem(pub Vec<u32>);

impl BGroup {
    pub fn identity(&self) -> BElem {
        BElem(vec![0; self.factors.len() + 1])
    }

    pub fn is_identity(&self, x: &BElem) -> bool {
        x.0.iter().all(|&v| v == 0)
    }

    pub fn mul(&self, x: &BElem, y: &BElem) -> BElem {
        let k = self.factors.len();
        let mut out: Vec<u32> = self.factors.iter().enumerate().map(|(i, h)| h.mul(x.0[i], y.0[i])).collect();
        out.push(((x.0[k] as u64 + y.0[k] as u64) % self.z_order) as u32);
        BElem(out)
    }

    pub fn inv(&self, x: &BElem) -> BElem {
        let k = self.factors.len();
        let mut out: Vec<u32> = self.factors.iter().enumerate().map(|(i, h)| h.inv(x.0[i])).collect();
        out.push(((self.z_order - x.0[k] as u64) % self.z_order) as u32);
        BElem(out)
    }

    /// The element of `B` with `h` in factor `i` and nothing else.
    pub fn in_factor(&self, i: usize, h: u32) -> BElem {
        let mut v = self.identity();
        v.0[i] = h;
        v
    }

    pub fn commutator(&self, x: &BElem, y: &BElem) -> BElem {
        self.mul(&self.mul(&self.inv(x), &self.inv(y)), &self.mul(x, y))
    }
}

/// A finitely supported function `X → B`; identity values are never stored.
pub type SupportedFunction = BTreeMap<Ray, BElem>;

/// `(f, g)` with `g` keyed by its action on a level fixed by the carrier.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WElement {
    pub fun: SupportedFunction,
    pub g: GrigElem,
}

impl WElement {
    pub fn is_base(&self) -> bool {
        self.g.word.is_empty()
    }
}

/// The unrestricted wreath product `B^X ⋊ G` restricted to finitely supported functions.
#[derive(Clone, Debug)]
pub struct WGroup {
    pub b: Arc<BGroup>,
    pub carrier: GrigCarrier,
}

impl WGroup {
    pub fn new(b: Arc<BGroup>, carrier: GrigCarrier) -> Self {
        WGroup { b, carrier }
    }

    pub fn from_g(&self, w: &GrigWord) -> WElement {
        WElement { fun: SupportedFunction::new(), g: self.carrier.elem(w) }
    }

    pub fn from_fun(&self, fun: SupportedFunction) -> WElement {
        let fun = fun.into_iter().filter(|(_, v)| !self.b.is_identity(v)).collect();
        WElement { fun, g: self.carrier.identity() }
    }

    pub fn delta(&self, x: Ray, v: BElem) -> WElement {
        self.from_fun(SupportedFunction::from([(x, v)]))
    }

    /// `f^g = g⁻¹ f g`, the function `x ↦ f(x·g⁻¹)`.
    pub fn conjugate_by(&self, u: &WElement, g: &GrigWord) -> WElement {
        let h = self.from_g(g);
        self.mul(&self.mul(&self.inv(&h), u), &h)
    }

    /// Exact equality of the `G`-parts through both Grigorchuk oracles.
    pub fn equal_exact(&self, u: &WElement, v: &WElement, level_budget: u32) -> Result<bool, GrigError> {
        Ok(u.fun == v.fun && crate::grigorchuk::grig_equal(&u.g.word, &v.g.word, level_budget)?)
    }
}

impl Group for WGroup {
    type Elem = WElement;

    fn identity(&self) -> WElement {
        WElement { fun: SupportedFunction::new(), g: self.carrier.identity() }
    }

    /// `(f,g)(f′,g′) = (x ↦ f(x)·f′(x·g), gg′)`.
    fn mul(&self, u: &WElement, v: &WElement) -> WElement {
        let mut fun = u.fun.clone();
        let gi = u.g.word.inverse();
        for (y, val) in &v.fun {
            let x = act_word(&gi, y);
            let cur = fun.get(&x).cloned().unwrap_or_else(|| self.b.identity());
            let prod = self.b.mul(&cur, val);
            if self.b.is_identity(&prod) {
                fun.remove(&x);
            } else {
                fun.insert(x, prod);
            }
        }
        WElement { fun, g: self.carrier.mul(&u.g, &v.g) }
    }

    /// `(f,g)⁻¹ = (x ↦ f(x·g⁻¹)⁻¹, g⁻¹)`.
    fn inv(&self, u: &WElement) -> WElement {
        let fun = u.fun.iter().map(|(y, val)| (act_word(&u.g.word, y), self.b.inv(val))).collect();
        WElement { fun, g: self.carrier.inv(&u.g) }
    }

    fn encode(&self, u: &WElement, out: &mut Vec<u8>) {
        out.extend_from_slice(&(u.fun.len() as u32).to_le_bytes());
        for (x, v) in &u.fun {
            out.extend_from_slice(&(x.prefix().len() as u32).to_le_bytes());
            out.extend_from_slice(x.prefix());
            for &e in &v.0 {
                out.extend_from_slice(&e.to_le_bytes());
            }
        }
        self.carrier.encode(&u.g, out);
    }

    fn kind(&self) -> CarrierKind {
        CarrierKind::Wreath
    }

    fn describe(&self) -> String {
        let names: Vec<&str> = self.b.factors.iter().map(|f| f.name.as_str()).collect();
        format!("W[{}; Z{}; {}]", names.join(","), self.b.z_order, self.carrier.describe())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub name: String,
    pub order: usize,
    pub generators: Vec<String>,
    pub generator_orders: Vec<u64>,
}

/// `b_position = t_{factor,generator}·z`, placed at `x_{n(position)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub position: usize,
    pub factor: usize,
    pub generator: usize,
}

/// Why `n` was chosen: the pairs closer than `m` that force it, and the index from
/// which labeled `m`-balls agree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NChoice {
    pub position: usize,
    pub m: u32,
    pub n: usize,
    pub blocking_pairs: Vec<(usize, usize, u32)>,
    pub stable_from: usize,
    pub cap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub factors: Vec<FactorSummary>,
    pub z_order: u64,
    pub assignment: Vec<Assignment>,
    pub n: Vec<usize>,
    pub m: Vec<u32>,
    pub eps: Vec<f64>,
    pub n_choices: Vec<NChoice>,
}

impl PlacementPlan {
    pub fn positions(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_placed(&self) -> bool {
        self.n.len() == self.assignment.len()
    }
}

/// Default decay targets `ε_i = 1 + 2^{−i}`, `i ≥ 1`.
pub fn default_eps(count: usize) -> Vec<f64> {
    (1..=count).map(|i| 1.0 + 0.5f64.powi(i as i32)).collect()
}

fn lcm(a: u64, b: u64) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// A plan together with the factor tables it refers to.
#[derive(Clone, Debug)]
pub struct WreathSystem {
    pub b: Arc<BGroup>,
    pub plan: PlacementPlan,
}

/// Assigns every generator of every factor a position and sizes `Z = C_N`, `N` the
/// lcm of all generator orders.
pub fn configure_plan(factors: Vec<Factor>, eps: Option<Vec<f64>>) -> Result<WreathSystem, WreathError> {
    if factors.is_empty() {
        return Err(WreathError::Usage("empty factor selection".into()));
    }
    let mut summaries = Vec::new();
    let mut assignment = Vec::new();
    let mut n_lcm = 1u64;
    for (i, h) in factors.iter().enumerate() {
        let orders: Vec<u64> = h.generators.iter().map(|&g| h.element_order(g)).collect();
        for (j, &o) in orders.iter().enumerate() {
            n_lcm = lcm(n_lcm, o);
            assignment.push(Assignment { position: assignment.len(), factor: i, generator: j });
        }
        summaries.push(FactorSummary { name: h.name.clone(), order: h.order(), generators: h.generator_names.clone(), generator_orders: orders });
    }
    let count = assignment.len();
    let eps = eps.unwrap_or_else(|| default_eps(count));
    if eps.len() < count {
        return Err(WreathError::Usage(format!("{} decay targets for {count} positions", eps.len())));
    }
    let b = Arc::new(BGroup { factors, z_order: n_lcm });
    let plan = PlacementPlan { factors: summaries, z_order: n_lcm, assignment, n: Vec::new(), m: Vec::new(), eps, n_choices: Vec::new() };
    let sys = WreathSystem { b, plan };
    for l in 0..count {
        let v = sys.b_value(l);
        let o = (1..=n_lcm).find(|&k| {
            let mut x = sys.b.identity();
            for _ in 0..k {
                x = sys.b.mul(&x, &v);
            }
            sys.b.is_identity(&x)
        });
        if o != Some(n_lcm) {
            return Err(WreathError::Check(format!("b_{l}·z does not have order {n_lcm}")));
        }
    }
    Ok(sys)
}

/// Pairs `(j, k)` with `j < k ≤ cap` and `d(x_j, x_k) < m`.
pub fn near_pairs(m: u32, cap: usize) -> Vec<(usize, usize, u32)> {
    let mut out = Vec::new();
    if m == 0 {
        return out;
    }
    for j in 0..=cap {
        let ball = schreier_ball(&Ray::marked(j), m - 1);
        for (v, x) in ball.vertices.iter().enumerate() {
            if let Some(k) = x.marked_index() {
                if k > j && k <= cap {
                    out.push((j, k, ball.dist[v]));
                }
            }
        }
    }
    out
}

/// Least `N` such that the labeled `m`-balls at `x_k` agree for all `k ∈ [N, cap]`.
pub fn stable_from(m: u32, cap: usize) -> usize {
    let forms: Vec<_> = (0..=cap).map(|i| schreier_ball(&Ray::marked(i), m).canonical_form()).collect();
    (0..cap).rev().find(|&i| forms[i] != forms[i + 1]).map_or(0, |i| i + 1)
}

/// Least `n > prev` with `d(x_j, x_k) ≥ m` whenever `j ≠ k`, `k ≥ n`, and with the
/// `m`-balls at `x_n` and every later `x_j` equal (all indices checked up to `cap`).
pub fn choose_n(position: usize, m: u32, prev: Option<usize>, cap: usize) -> Result<NChoice, WreathError> {
    let pairs = near_pairs(m, cap);
    let by_distance = pairs.iter().map(|&(_, k, _)| k + 1).max().unwrap_or(0);
    let stable = stable_from(m, cap);
    let n = prev.map_or(0, |p| p + 1).max(by_distance).max(stable);
    if n >= cap {
        return Err(WreathError::Unresolved { position, cap });
    }
    let blocking_pairs = pairs.into_iter().filter(|&(_, k, _)| k + 1 == by_distance).collect();
    Ok(NChoice { position, m, n, blocking_pairs, stable_from: stable, cap })
}

impl WreathSystem {
    /// Chooses `n(1) < n(2) < …` for nondecreasing radii `m`.
    pub fn place_by_radii(&mut self, m: &[u32], cap: usize) -> Result<(), WreathError> {
        if m.len() != self.plan.positions() {
            return Err(WreathError::Usage(format!("{} radii for {} positions", m.len(), self.plan.positions())));
        }
        if m.windows(2).any(|w| w[0] > w[1]) {
            return Err(WreathError::Usage("radii must be nondecreasing".into()));
        }
        let mut prev = None;
        let mut choices = Vec::new();
        for (l, &mi) in m.iter().enumerate() {
            let c = choose_n(l, mi, prev, cap)?;
            prev = Some(c.n);
            choices.push(c);
        }
        self.plan.n = choices.iter().map(|c| c.n).collect();
        self.plan.m = m.to_vec();
        self.plan.n_choices = choices;
        Ok(())
    }

    /// Places the generators at explicit indices, bypassing the selection rule.
    pub fn place_at(&mut self, n: Vec<usize>, m: Vec<u32>) -> Result<(), WreathError> {
        if n.len() != self.plan.positions() || m.len() != n.len() {
            return Err(WreathError::Usage("one index and one radius per position".into()));
        }
        if n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(WreathError::Usage("indices must be strictly increasing".into()));
        }
        self.plan.n = n;
        self.plan.m = m;
        self.plan.n_choices.clear();
        Ok(())
    }

    fn require_placed(&self) -> Result<(), WreathError> {
        if self.plan.is_placed() {
            Ok(())
        } else {
            Err(WreathError::Usage("plan has no placement".into()))
        }
    }

    /// `b_l = t_{i,j}·z`.
    pub fn b_value(&self, l: usize) -> BElem {
        let a = &self.plan.assignment[l];
        let mut v = self.b.in_factor(a.factor, self.b.factors[a.factor].generators[a.generator]);
        *v.0.last_mut().unwrap() = 1 % self.b.z_order as u32;
        v
    }

    /// `f_i`: `b_l` at `x_{n(l)}` for the first `i` positions.
    pub fn f_prefix(&self, w: &WGroup, i: usize) -> WElement {
        w.from_fun((0..i).map(|l| (Ray::marked(self.plan.n[l]), self.b_value(l))).collect())
    }

    pub fn group(&self, radius: usize) -> WGroup {
        WGroup::new(self.b.clone(), GrigCarrier::for_radius(radius.max(1)))
    }

    /// Generators of `W_i`: `a, b, c, d, f_i` and, when `N > 2`, `f_i⁻¹`.
    pub fn generators(&self, w: &WGroup, i: usize) -> Vec<(String, WElement)> {
        let mut gens: Vec<(String, WElement)> =
            [("a", A), ("b", B), ("c", C), ("d", D)].iter().map(|&(n, g)| (n.to_string(), w.from_g(&GrigWord::generator(g)))).collect();
        let f = self.f_prefix(w, i);
        if self.b.z_order > 2 {
            gens.push(("f^-1".into(), w.inv(&f)));
        }
        gens.insert(4, ("f".into(), f));
        gens
    }

    /// The length of a word in `W` letters `a, b, c, d, f^{±1}`.
    pub fn w_length_of_conjugate(g: &GrigWord) -> usize {
        1 + 2 * g.len()
    }
}

/// A labeled ball of `W_i` in BFS order with generator-ordered expansion.
#[derive(Clone, Debug)]
pub struct WBall {
    pub radius: u32,
    pub elements: Vec<WElement>,
    pub dist: Vec<u32>,
    /// Per vertex, the neighbor index for each generator; only vertices inside
    /// the open ball record edges.
    pub edges: Vec<Vec<u32>>,
    pub parent: Vec<(u32, u8)>,
    pub generator_names: Vec<String>,
}

impl WBall {
    pub fn growth(&self) -> Vec<u64> {
        let mut v = vec![0u64; self.radius as usize + 1];
        for &d in &self.dist {
            v[d as usize] += 1;
        }
        for r in 1..v.len() {
            v[r] += v[r - 1];
        }
        v
    }

    pub fn word(&self, mut v: usize) -> String {
        let mut letters = Vec::new();
        while self.parent[v].0 != u32::MAX {
            letters.push(self.generator_names[self.parent[v].1 as usize].clone());
            v = self.parent[v].0 as usize;
        }
        letters.reverse();
        if letters.is_empty() {
            "1".into()
        } else {
            letters.join(" ")
        }
    }

    pub fn index_of(&self, u: &WElement) -> Option<usize> {
        self.elements.iter().position(|x| x == u)
    }
}

pub fn w_ball(w: &WGroup, gens: &[(String, WElement)], radius: u32, budget: usize) -> Result<WBall, WreathError> {
    let mut index: HashMap<WElement, u32> = HashMap::new();
    let mut elements = vec![w.identity()];
    let mut dist = vec![0u32];
    let mut parent = vec![(u32::MAX, 0u8)];
    let mut edges: Vec<Vec<u32>> = Vec::new();
    index.insert(w.identity(), 0);
    let mut head = 0;
    while head < elements.len() {
        if dist[head] >= radius {
            edges.push(Vec::new());
            head += 1;
            continue;
        }
        let mut row = Vec::with_capacity(gens.len());
        for (k, (_, s)) in gens.iter().enumerate() {
            let y = w.mul(&elements[head], s);
            let id = match index.get(&y) {
                Some(&id) => id,
                None => {
                    if elements.len() >= budget {
                        return Err(WreathError::Budget(budget));
                    }
                    let id = elements.len() as u32;
                    index.insert(y.clone(), id);
                    elements.push(y);
                    dist.push(dist[head] + 1);
                    parent.push((head as u32, k as u8));
                    id
                }
            };
            row.push(id);
        }
        edges.push(row);
        head += 1;
    }
    Ok(WBall { radius, elements, dist, edges, parent, generator_names: gens.iter().map(|(n, _)| n.clone()).collect() })
}

pub fn w_ball_of(sys: &WreathSystem, i: usize, radius: u32, budget: usize) -> Result<WBall, WreathError> {
    sys.require_placed()?;
    let w = sys.group(radius as usize);
    let gens = sys.generators(&w, i);
    w_ball(&w, &gens, radius, budget)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceReport {
    pub i: usize,
    pub radius: u32,
    pub coincide: bool,
    pub sizes: (usize, usize),
    /// Vertex `k` of one ball corresponds to vertex `k` of the other; listed by
    /// its geodesic word when the balls coincide.
    pub bijection: Vec<String>,
    pub first_mismatch: Option<String>,
}

/// Compares the labeled radius-`R` balls of `W_i` and `W_{i+1}` under `f_i ↔ f_{i+1}`.
pub fn verify_ball_coincidence(sys: &WreathSystem, i: usize, radius: u32, budget: usize) -> Result<CoincidenceReport, WreathError> {
    if i + 1 > sys.plan.positions() {
        return Err(WreathError::Usage(format!("W_{} is not defined by the plan", i + 1)));
    }
    let left = w_ball_of(sys, i, radius, budget)?;
    let right = w_ball_of(sys, i + 1, radius, budget)?;
    let mismatch = (0..left.elements.len().max(right.elements.len())).find(|&v| {
        v >= left.elements.len() || v >= right.elements.len() || left.edges[v] != right.edges[v] || left.dist[v] != right.dist[v]
    });
    let coincide = mismatch.is_none();
    Ok(CoincidenceReport {
        i,
        radius,
        coincide,
        sizes: (left.elements.len(), right.elements.len()),
        bijection: if coincide { (0..left.elements.len()).map(|v| left.word(v)).collect() } else { Vec::new() },
        first_mismatch: mismatch.map(|v| if v < left.elements.len() { left.word(v) } else { right.word(v) }),
    })
}

/// Records how a generator is moved onto the base ray.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectifierRecord {
    pub position: usize,
    pub from: usize,
    pub to: usize,
    pub word: String,
}

pub fn rectifier_for(sys: &WreathSystem, position: usize, base: usize, max_length: usize, state_budget: usize) -> Result<(GrigWord, RectifierRecord), WreathError> {
    sys.require_placed()?;
    let from = sys.plan.n[position];
    let word = if from == base {
        GrigWord::identity()
    } else {
        find_rectifier(from, base, &sys.plan.n, max_length, state_budget).map_err(|source| WreathError::Rectifier { from, to: base, source })?
    };
    let rec = RectifierRecord { position, from, to: base, word: word.to_string() };
    Ok((word, rec))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutatorWitness {
    pub i: usize,
    pub j: usize,
    pub base: usize,
    pub rectifiers: (RectifierRecord, RectifierRecord),
    /// `[b_i, b_j]` as factor entries (the `z` exponent is always 0).
    pub value: BElem,
}

/// `[f^{g_i}, f^{g_j}]` with `g_i, g_j` moving `x_{n(i)}, x_{n(j)}` to `x_base`;
/// checked to equal `[b_i, b_j]` at `x_base` with trivial `G`-part.
pub fn commutator_witness(sys: &WreathSystem, i: usize, j: usize, base: usize, max_length: usize, state_budget: usize) -> Result<(CommutatorWitness, WElement), WreathError> {
    let (gi, ri) = rectifier_for(sys, i, base, max_length, state_budget)?;
    let (gj, rj) = rectifier_for(sys, j, base, max_length, state_budget)?;
    let radius = 2 * (gi.len() + gj.len() + 1);
    let w = sys.group(radius);
    let f = sys.f_prefix(&w, sys.plan.positions());
    let c = w.commutator(&w.conjugate_by(&f, &gi), &w.conjugate_by(&f, &gj));
    let value = sys.b.commutator(&sys.b_value(i), &sys.b_value(j));
    let expected = w.delta(Ray::marked(base), value.clone());
    if !w.equal_exact(&c, &expected, 24)? {
        return Err(WreathError::Check(format!("[f^g_{i}, f^g_{j}] is not supported at x_{base} alone")));
    }
    Ok((CommutatorWitness { i, j, base, rectifiers: (ri, rj), value }, c))
}

/// `Ψ_s`: letters `t_{s,j}` become `f^{g_j}` with `x_{n(l_j)}·g_j = x_base`.
#[derive(Clone, Debug)]
pub struct PsiMap {
    pub factor: usize,
    pub base: usize,
    pub rectifiers: Vec<GrigWord>,
    pub records: Vec<RectifierRecord>,
    pub l_prime: usize,
    images: Vec<WElement>,
    w: WGroup,
}

impl PsiMap {
    pub fn group(&self) -> &WGroup {
        &self.w
    }

    /// Bound `2L′ + 1` on the length of each letter's image.
    pub fn letter_bound(&self) -> usize {
        2 * self.l_prime + 1
    }
}

/// Builds `Ψ_s` with base ray `x_{n(l)}` for the last position `l` of factor `s`.
pub fn build_psi(sys: &WreathSystem, s: usize, max_length: usize, state_budget: usize) -> Result<PsiMap, WreathError> {
    sys.require_placed()?;
    let positions: Vec<usize> = sys.plan.assignment.iter().filter(|a| a.factor == s).map(|a| a.position).collect();
    let Some(&last) = positions.last() else {
        return Err(WreathError::Usage(format!("factor {s} is not in the plan")));
    };
    let base = sys.plan.n[last];
    let mut rectifiers = Vec::new();
    let mut records = Vec::new();
    for &l in &positions {
        let (g, r) = rectifier_for(sys, l, base, max_length, state_budget)?;
        rectifiers.push(g);
        records.push(r);
    }
    let l_prime = rectifiers.iter().map(|g| g.len()).max().unwrap_or(0);
    let w = sys.group(4 * (2 * l_prime + 1));
    let f = sys.f_prefix(&w, sys.plan.positions());
    let images = rectifiers.iter().map(|g| w.conjugate_by(&f, g)).collect();
    Ok(PsiMap { factor: s, base, rectifiers, records, l_prime, images, w })
}

/// `Ψ(word)`, checked to be the delta function at the base ray with the value of
/// the word in the factor.
pub fn psi_imbed(sys: &WreathSystem, psi: &PsiMap, word: &[Letter]) -> Result<WElement, WreathError> {
    let w = &psi.w;
    let img = word.iter().fold(w.identity(), |acc, l| {
        let x = &psi.images[l.generator as usize];
        w.mul(&acc, &if l.inverse { w.inv(x) } else { x.clone() })
    });
    let h = sys.b.factors[psi.factor].eval(word);
    let expected = w.delta(Ray::marked(psi.base), sys.b.in_factor(psi.factor, h));
    if !w.equal_exact(&img, &expected, 24)? {
        return Err(WreathError::Check("Ψ(h) is not the delta function at the base ray".into()));
    }
    Ok(img)
}

/// `Ψ(h)` for a factor element through a shortest balanced word.
pub fn psi_of(sys: &WreathSystem, psi: &PsiMap, h: u32, budget: u32) -> Result<(BalancedWord, WElement), WreathError> {
    let norms = sys.b.factors[psi.factor].perfect_norms(budget)?;
    let bw = norms[h as usize].clone().ok_or(PerfectNormError::BeyondBudget { budget })?;
    let img = psi_imbed(sys, psi, &bw.word)?;
    Ok((bw, img))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLipschitzRow {
    pub element: u32,
    pub perfect_norm: u32,
    /// `None` when `Ψ(h)` lies outside the explored ball.
    pub w_norm: Option<u32>,
    pub upper_bound: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLipschitzReport {
    pub factor: usize,
    pub radius: u32,
    pub l_prime: usize,
    pub rows: Vec<BiLipschitzRow>,
    /// Least and greatest `‖Ψ(h)‖_W / ‖h‖_perfect` over resolved rows.
    pub k: Option<f64>,
    pub l: Option<f64>,
    pub partial: bool,
}

/// Measures `‖Ψ(h)‖_W` for all nontrivial `h ∈ [H_s, H_s]` by BFS in `W` up to
/// `radius`, checking `‖h‖_perfect ≤ ‖Ψ(h)‖_W ≤ (2L′+1)‖h‖_perfect`.
pub fn measure_bilipschitz(sys: &WreathSystem, psi: &PsiMap, radius: u32, budget: usize, perfect_budget: u32) -> Result<BiLipschitzReport, WreathError> {
    let factor = &sys.b.factors[psi.factor];
    let norms = factor.perfect_norms(perfect_budget)?;
    let ball = w_ball_of(sys, sys.plan.positions(), radius, budget)?;
    let w = sys.group(radius as usize);
    let mut rows = Vec::new();
    let mut partial = false;
    for h in factor.derived_members().into_iter().filter(|&h| h != 0) {
        let Some(bw) = &norms[h as usize] else {
            partial = true;
            continue;
        };
        let p = bw.length;
        let upper = psi.letter_bound() as u32 * p;
        let target = w.delta(Ray::marked(psi.base), sys.b.in_factor(psi.factor, h));
        let w_norm = ball.index_of(&target).map(|v| ball.dist[v]);
        match w_norm {
            Some(d) if d < p || d > upper => {
                return Err(WreathError::Check(format!("‖Ψ(h)‖_W = {d} outside [{p}, {upper}] for element {h}")));
            }
            None if upper <= radius => {
                return Err(WreathError::Check(format!("Ψ(h) for element {h} not within its explicit length {upper}")));
            }
            None if p > radius + 1 => partial = true,
            _ => {}
        }
        rows.push(BiLipschitzRow { element: h, perfect_norm: p, w_norm, upper_bound: upper });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.w_norm.map(|d| d as f64 / r.perfect_norm as f64)).collect();
    let k = ratios.iter().cloned().reduce(f64::min);
    let l = ratios.iter().cloned().reduce(f64::max);
    partial |= rows.iter().any(|r| r.w_norm.is_none());
    Ok(BiLipschitzReport { factor: psi.factor, radius, l_prime: psi.l_prime, rows, k, l, partial })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthM {
    pub i: usize,
    pub eps: f64,
    pub m: Option<u32>,
    pub growth: Vec<u64>,
}

/// The Grigorchuk ball with generator steps, for compact growth counts.
struct GrigIndex {
    words: Vec<GrigWord>,
    step: Vec<[u32; 4]>,
}

fn grig_index(radius: u32) -> GrigIndex {
    let carrier = GrigCarrier::for_radius(radius as usize);
    let gens: Vec<GrigElem> = (0..4).map(|g| carrier.generator(g)).collect();
    let mut index: HashMap<GrigElem, u32> = HashMap::from([(carrier.identity(), 0)]);
    let mut elems = vec![carrier.identity()];
    let mut dist = vec![0u32];
    let mut step = Vec::new();
    let mut head = 0;
    while head < elems.len() {
        let mut row = [u32::MAX; 4];
        if dist[head] < radius {
            for (k, s) in gens.iter().enumerate() {
                let y = carrier.mul(&elems[head], s);
                let next = elems.len() as u32;
                let id = *index.entry(y.clone()).or_insert(next);
                if id == next {
                    elems.push(y);
                    dist.push(dist[head] + 1);
                }
                row[k] = id;
            }
        }
        step.push(row);
        head += 1;
    }
    GrigIndex { words: elems.into_iter().map(|e| e.word).collect(), step }
}

fn pack(g: u32, fun: &SupportedFunction) -> Box<[u8]> {
    let mut out = g.to_le_bytes().to_vec();
    for (x, v) in fun {
        out.extend_from_slice(&(x.prefix().len() as u16).to_le_bytes());
        out.extend_from_slice(x.prefix());
        for &e in &v.0 {
            out.extend_from_slice(&e.to_le_bytes());
        }
    }
    out.into_boxed_slice()
}

fn unpack(bytes: &[u8], width: usize) -> (u32, SupportedFunction) {
    let g = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    let mut fun = SupportedFunction::new();
    let mut pos = 4;
    while pos < bytes.len() {
        let len = u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
        pos += 2;
        let ray = Ray::new(&bytes[pos..pos + len]);
        pos += len;
        let v = (0..width).map(|k| u32::from_le_bytes(bytes[pos + 4 * k..pos + 4 * k + 4].try_into().unwrap())).collect();
        pos += 4 * width;
        fun.insert(ray, BElem(v));
    }
    (g, fun)
}

/// Least `m ≥ 1` with `v_i(m) ≤ ε^m`, or the growth prefix when none is found
/// within `radius_budget` or `ball_budget` elements.
///
/// Spheres are generated layer by layer: with a symmetric generating set the
/// neighbors of sphere `r` lie in spheres `r−1`, `r`, `r+1`, so only three
/// spheres are kept, in a packed encoding.
pub fn growth_and_m(sys: &WreathSystem, i: usize, eps: f64, radius_budget: u32, ball_budget: usize) -> Result<GrowthM, WreathError> {
    sys.require_placed()?;
    let index = grig_index(radius_budget.max(1));
    let b = &sys.b;
    let width = b.factors.len() + 1;
    let f: Vec<(Ray, BElem)> = (0..i).map(|l| (Ray::marked(sys.plan.n[l]), sys.b_value(l))).collect();
    let f_inv: Vec<(Ray, BElem)> = f.iter().map(|(x, v)| (x.clone(), b.inv(v))).collect();
    let mut f_letters = vec![f.clone()];
    if b.z_order > 2 {
        f_letters.push(f_inv);
    }
    let times_f = |g: u32, fun: &SupportedFunction, letter: &[(Ray, BElem)]| -> SupportedFunction {
        let gi = index.words[g as usize].inverse();
        let mut out = fun.clone();
        for (y, v) in letter {
            let x = act_word(&gi, y);
            let prod = b.mul(out.get(&x).unwrap_or(&b.identity()), v);
            if b.is_identity(&prod) {
                out.remove(&x);
            } else {
                out.insert(x, prod);
            }
        }
        out
    };
    let mut prev: HashSet<Box<[u8]>> = HashSet::new();
    let mut cur: HashSet<Box<[u8]>> = HashSet::from([pack(0, &SupportedFunction::new())]);
    let mut total = 1u64;
    let mut growth = vec![1u64];
    for r in 1..=radius_budget {
        let mut next: HashSet<Box<[u8]>> = HashSet::new();
        for bytes in &cur {
            let (g, fun) = unpack(bytes, width);
            let mut push = |y: Box<[u8]>| {
                if !prev.contains(&y) && !cur.contains(&y) {
                    next.insert(y);
                }
            };
            for k in 0..4 {
                push(pack(index.step[g as usize][k], &fun));
            }
            for letter in &f_letters {
                push(pack(g, &times_f(g, &fun, letter)));
            }
            if total as usize + next.len() > ball_budget {
                return Ok(GrowthM { i, eps, m: None, growth });
            }
        }
        total += next.len() as u64;
        growth.push(total);
        if total as f64 <= eps.powi(r as i32) {
            return Ok(GrowthM { i, eps, m: Some(r), growth });
        }
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(GrowthM { i, eps, m: None, growth })
}

/// Everything recorded about a plan, for JSON output.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PlanReport {
    pub plan: Option<PlacementPlan>,
    pub rectifiers: Vec<RectifierRecord>,
    pub l_prime: Option<usize>,
    pub coincidence: Vec<CoincidenceReport>,
    pub witnesses: Vec<CommutatorWitness>,
    pub bilipschitz: Vec<BiLipschitzReport>,
    pub growth: Vec<GrowthM>,
}

impl PlanReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plan report serializes")
    }
}

impl fmt::Display for BElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{GroupHandle, PermGroup, Permutation};
    use crate::cayley::bfs_closure;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cyclic(name: &str, n: usize) -> Factor {
        let h = GroupHandle::new(PermGroup::new(n), vec![("t".into(), Permutation::rotation(n, 1))]);
        Factor::from_enumeration(name, &bfs_closure(&h, 100).unwrap()).unwrap()
    }

    fn s3() -> Factor {
        let h = GroupHandle::new(
            PermGroup::new(3),
            vec![
                ("s".into(), Permutation::from_cycles(3, &[&[0, 1]]).unwrap()),
                ("r".into(), Permutation::from_cycles(3, &[&[0, 1, 2]]).unwrap()),
            ],
        );
        Factor::from_enumeration("S3", &bfs_closure(&h, 100).unwrap()).unwrap()
    }

    fn random_element(w: &WGroup, gens: &[(String, WElement)], len: usize, rng: &mut ChaCha8Rng) -> WElement {
        (0..len).fold(w.identity(), |acc, _| w.mul(&acc, &gens[rng.gen_range(0..gens.len())].1))
    }

    #[test]
    fn plan_orders_and_assignment() {
        let sys = configure_plan(vec![cyclic("C2", 2)], None).unwrap();
        assert_eq!(sys.plan.z_order, 2);
        let sys = configure_plan(vec![cyclic("C2", 2), cyclic("C3", 3)], None).unwrap();
        assert_eq!(sys.plan.z_order, 6);
        let sys = configure_plan(vec![s3(), cyclic("C2", 2)], None).unwrap();
        let mut seen = HashSet::new();
        for a in &sys.plan.assignment {
            assert!(seen.insert((a.factor, a.generator)));
        }
        assert_eq!(seen.len(), 3);
        assert!(matches!(configure_plan(vec![], None), Err(WreathError::Usage(_))));
    }

    #[test]
    fn wreath_law() {
        let mut sys = configure_plan(vec![cyclic("C2", 2), cyclic("C2'", 2)], None).unwrap();
        sys.place_at(vec![1, 3], vec![0, 0]).unwrap();
        let w = sys.group(12);
        let gens = sys.generators(&w, 2);
        let f = &gens[4].1;
        assert_eq!(w.mul(f, f), w.identity());
        assert_eq!(w.mul(&w.identity(), f), *f);
        // Conjugation moves the support by the action of g.
        let g = GrigWord::parse("abad").unwrap();
        let fg = w.conjugate_by(f, &g);
        let moved: HashSet<Ray> = f.fun.keys().map(|x| act_word(&g, x)).collect();
        assert_eq!(fg.fun.keys().cloned().collect::<HashSet<_>>(), moved);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = random_element(&w, &gens, 4, &mut rng);
            let y = random_element(&w, &gens, 4, &mut rng);
            let z = random_element(&w, &gens, 4, &mut rng);
            assert_eq!(w.mul(&w.mul(&x, &y), &z), w.mul(&x, &w.mul(&y, &z)));
            assert_eq!(w.mul(&x, &w.inv(&x)), w.identity());
        }
    }

    #[test]
    fn n_selection() {
        assert_eq!(choose_n(0, 0, Some(3), 16).unwrap().n, 4);
        let mut last = 0;
        for m in 0..5 {
            let c = choose_n(0, m, None, 32).unwrap();
            assert!(c.n >= last);
            last = c.n;
            for &(j, k, _) in &near_pairs(m, 32) {
                assert!(j.max(k) < c.n);
            }
        }
    }

    #[test]
    fn coincidence_and_negative_control() {
        for m in [2u32, 3] {
            let mut sys = configure_plan(vec![cyclic("H1", 2), cyclic("H2", 2)], None).unwrap();
            sys.place_by_radii(&[m, m], 64).unwrap();
            for r in 0..=m {
                let rep = verify_ball_coincidence(&sys, 1, r, 1_000_000).unwrap();
                assert!(rep.coincide, "m = {m}, r = {r}: {rep:?}");
            }
        }
        let mut bad = configure_plan(vec![cyclic("H1", 2), cyclic("H2", 2)], None).unwrap();
        bad.place_at(vec![0, 1], vec![2, 2]).unwrap();
        assert!(!verify_ball_coincidence(&bad, 1, 2, 100_000).unwrap().coincide);
    }

    #[test]
    fn s3_commutator_witness_and_psi() {
        let mut sys = configure_plan(vec![s3()], None).unwrap();
        sys.place_by_radii(&[1, 1], 64).unwrap();
        let base = sys.plan.n[1];
        let (wit, c) = commutator_witness(&sys, 0, 1, base, 30, 1_000_000).unwrap();
        assert!(c.is_base());
        let h = &sys.b.factors[0];
        assert_eq!(wit.value.0[0], h.commutator(h.generators[0], h.generators[1]));
        let psi = build_psi(&sys, 0, 30, 1_000_000).unwrap();
        let w = psi.group().clone();
        assert_eq!(psi_imbed(&sys, &psi, &[]).unwrap(), w.identity());
        let derived = h.derived_members();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = derived[rng.gen_range(0..derived.len())];
            let b = derived[rng.gen_range(0..derived.len())];
            let (_, pa) = psi_of(&sys, &psi, a, 12).unwrap();
            let (_, pb) = psi_of(&sys, &psi, b, 12).unwrap();
            let (_, pab) = psi_of(&sys, &psi, h.mul(a, b), 12).unwrap();
            assert_eq!(w.mul(&pa, &pb), pab);
        }
    }

    #[test]
    fn growth_bound() {
        let mut sys = configure_plan(vec![cyclic("C2", 2)], None).unwrap();
        sys.place_by_radii(&[1], 64).unwrap();
        let g = growth_and_m(&sys, 1, 100.0, 4, 100_000).unwrap();
        assert_eq!(g.m, Some(1));
        assert_eq!(g.growth, vec![1, 6]);
        // Layered counts agree with a full ball enumeration.
        let layered = growth_and_m(&sys, 1, 1.0, 7, 1_000_000).unwrap();
        assert_eq!(layered.m, None);
        assert_eq!(layered.growth, w_ball_of(&sys, 1, 7, 1_000_000).unwrap().growth());
        assert_eq!(layered.growth[..5], [1, 6, 19, 53, 132]);
        let mut s3sys = configure_plan(vec![s3()], None).unwrap();
        s3sys.place_by_radii(&[1, 1], 64).unwrap();
        let layered = growth_and_m(&s3sys, 2, 1.0, 5, 1_000_000).unwrap();
        assert_eq!(layered.growth, w_ball_of(&s3sys, 2, 5, 1_000_000).unwrap().growth());
        let capped = growth_and_m(&sys, 1, 1.0, 20, 1000).unwrap();
        assert!(capped.growth.len() < 20 && capped.m.is_none());
    }
}
