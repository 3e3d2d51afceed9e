//! Imbedding a finite group `G = ⟨S⟩` into the derived subgroup of a wreath
//! product `H = ⟨t_s, r⟩ ≤ Q ≀ C_{2m}`, with `Q` a finite quotient of `G ∗ ℤ` that is
//! faithful on a ball, and the perfect-norm sandwich of the imbedding.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Group, GroupHandle, PermGroup, Permutation, Wreath, WreathElem};
use crate::cayley::{bfs_closure, distances_from, CayleyError, Enumeration};
use crate::perfect::{perfect_norms_unenumerated, PerfectNormError};

#[derive(Debug, Error)]
pub enum ImbedError {
    #[error("free product ball exceeds {0} normal forms")]
    BallBudget(usize),
    #[error("no ball-faithful quotient found after {attempts} attempts (largest degree {degree})")]
    SearchFailed { attempts: usize, degree: usize },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("imbedding check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Cayley(#[from] CayleyError),
    #[error(transparent)]
    Perfect(#[from] PerfectNormError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A syllable of a normal form in `G ∗ ℤ`: a non-identity element of `G` (by
/// enumeration index) or a nonzero power of `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Syllable {
    G(u32),
    X(i32),
}

/// An alternating product of syllables, with length `Σ ‖g‖_S + |e|`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FreeProductWord {
    pub length: u32,
    pub syllables: Vec<Syllable>,
}

struct BallWalk<'a> {
    norms: &'a [u32],
    radius: u32,
}

impl BallWalk<'_> {
    /// Visits every normal form of length ≤ radius (depth first); `visit` returns
    /// false to abort.
    fn walk<S: Clone>(&self, state: S, extend: &dyn Fn(&S, Syllable) -> S, visit: &mut dyn FnMut(&S, &[Syllable], u32) -> bool) -> bool {
        let mut stack: Vec<Syllable> = Vec::new();
        if !visit(&state, &stack, 0) {
            return false;
        }
        self.rec(&state, 0, &mut stack, extend, visit)
    }

    fn rec<S: Clone>(
        &self,
        state: &S,
        used: u32,
        stack: &mut Vec<Syllable>,
        extend: &dyn Fn(&S, Syllable) -> S,
        visit: &mut dyn FnMut(&S, &[Syllable], u32) -> bool,
    ) -> bool {
        let left = self.radius - used;
        let last_g = matches!(stack.last(), Some(Syllable::G(_)));
        let last_x = matches!(stack.last(), Some(Syllable::X(_)));
        if !last_g {
            for (g, &n) in self.norms.iter().enumerate().skip(1) {
                if n == 0 || n > left {
                    continue;
                }
                let syl = Syllable::G(g as u32);
                let next = extend(state, syl);
                stack.push(syl);
                let ok = visit(&next, stack, used + n) && self.rec(&next, used + n, stack, extend, visit);
                stack.pop();
                if !ok {
                    return false;
                }
            }
        }
        if !last_x {
            for e in 1..=left as i32 {
                for syl in [Syllable::X(e), Syllable::X(-e)] {
                    let next = extend(state, syl);
                    stack.push(syl);
                    let ok = visit(&next, stack, used + e as u32) && self.rec(&next, used + e as u32, stack, extend, visit);
                    stack.pop();
                    if !ok {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn word_norms<G: Group>(e: &Enumeration<G>) -> Vec<u32> {
    distances_from(&e.graph, 0)
}

/// All normal forms of length ≤ `radius`, sorted by (length, syllables).
pub fn free_product_ball<G: Group>(e: &Enumeration<G>, radius: u32, budget: usize) -> Result<Vec<FreeProductWord>, ImbedError> {
    let norms = word_norms(e);
    let walk = BallWalk { norms: &norms, radius };
    let mut out = Vec::new();
    let complete = walk.walk(
        (),
        &|_, _| (),
        &mut |_, syl, len| {
            out.push(FreeProductWord { length: len, syllables: syl.to_vec() });
            out.len() <= budget
        },
    );
    if !complete {
        return Err(ImbedError::BallBudget(budget));
    }
    out.sort();
    Ok(out)
}

/// Number of normal forms of length ≤ `radius`, without materializing them.
pub fn free_product_ball_size<G: Group>(e: &Enumeration<G>, radius: u32) -> u64 {
    let norms = word_norms(e);
    let walk = BallWalk { norms: &norms, radius };
    let mut count = 0u64;
    walk.walk((), &|_, _| (), &mut |_, _, _| {
        count += 1;
        true
    });
    count
}

/// A homomorphism `G ∗ ℤ → Sym(k)`: `G` acts by copies of its right regular
/// representation, `x` by an arbitrary permutation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuotientCandidate {
    pub degree: usize,
    /// Image of every element of `G`, by enumeration index.
    pub g_images: Vec<Permutation>,
    pub x_image: Permutation,
    /// Radius on which injectivity was verified.
    pub radius: u32,
    pub ball_size: u64,
    pub attempts: usize,
}

impl QuotientCandidate {
    pub fn s_image<G: Group>(&self, e: &Enumeration<G>, generator: usize) -> &Permutation {
        &self.g_images[e.graph.step(0, 2 * generator as u16).unwrap() as usize]
    }
}

/// Right regular representation of `G`, repeated on `copies` blocks.
pub fn regular_images<G: Group>(e: &Enumeration<G>, copies: usize) -> Vec<Permutation> {
    let n = e.order();
    (0..n)
        .map(|g| {
            let mut images = Vec::with_capacity(n * copies);
            for block in 0..copies {
                for p in 0..n {
                    images.push((block * n + e.mul_index(p, g)) as u32);
                }
            }
            Permutation::from_images(images).expect("regular representation is a bijection")
        })
        .collect()
}

fn perm_hash(p: &Permutation) -> u64 {
    let mut h = DefaultHasher::new();
    p.images().hash(&mut h);
    h.finish()
}

/// Whether the candidate separates all normal forms of length ≤ `radius`.
///
/// Images are compared by 64-bit hash; a hash collision counts as a failure, so
/// a `true` answer is exact.
pub fn injective_on_ball<G: Group>(e: &Enumeration<G>, g_images: &[Permutation], x: &Permutation, radius: u32) -> (bool, u64) {
    let norms = word_norms(e);
    let walk = BallWalk { norms: &norms, radius };
    let powers: Vec<Permutation> = {
        let g = PermGroup::new(x.degree());
        (-(radius as i64)..=radius as i64).map(|k| g.pow(x, k)).collect()
    };
    let mut seen: HashSet<u64> = HashSet::new();
    let ok = walk.walk(
        Permutation::identity(x.degree()),
        &|p, syl| match syl {
            Syllable::G(g) => p.mul_unchecked(&g_images[g as usize]),
            Syllable::X(k) => p.mul_unchecked(&powers[(k + radius as i32) as usize]),
        },
        &mut |p, _, _| seen.insert(perm_hash(p)),
    );
    (ok, seen.len() as u64)
}

/// Evaluates a normal form by spelling each `G`-syllable as a geodesic word in
/// the generators and composing generator images one letter at a time.
pub fn evaluate_by_letters<G: Group>(e: &Enumeration<G>, cand: &QuotientCandidate, w: &FreeProductWord) -> Permutation {
    let dist = word_norms(e);
    let mut p = Permutation::identity(cand.degree);
    let xi = cand.x_image.inverse();
    for syl in &w.syllables {
        match *syl {
            Syllable::G(g) => {
                // Walk back to the identity along decreasing distance, then replay.
                let mut letters = Vec::new();
                let mut v = g as usize;
                while v != 0 {
                    let (label, prev) = e
                        .handle()
                        .letters()
                        .iter()
                        .map(|l| (l.label(), e.graph.step(v, l.inverted().label()).unwrap() as usize))
                        .find(|&(_, u)| dist[u] + 1 == dist[v])
                        .unwrap();
                    letters.push(label);
                    v = prev;
                }
                letters.reverse();
                for label in letters {
                    let l = crate::algebra::Letter::from_label(label);
                    let s = cand.s_image(e, l.generator as usize);
                    p = p.mul_unchecked(&if l.inverse { s.inverse() } else { s.clone() });
                }
            }
            Syllable::X(k) => {
                for _ in 0..k.unsigned_abs() {
                    p = p.mul_unchecked(if k > 0 { &cand.x_image } else { &xi });
                }
            }
        }
    }
    p
}

#[derive(Clone, Debug)]
pub struct QuotientSearch {
    /// Degree multipliers of `|G|`.
    pub schedule: Vec<usize>,
    pub attempts_per_degree: usize,
    pub seed: u64,
}

impl Default for QuotientSearch {
    fn default() -> Self {
        QuotientSearch { schedule: vec![2, 4, 8, 16], attempts_per_degree: 200, seed: 0 }
    }
}

/// Randomized search for `Q` injective on the radius-`(2m+1)` ball of `G ∗ ℤ`.
pub fn find_ball_faithful_quotient<G: Group>(e: &Enumeration<G>, m: u32, search: &QuotientSearch) -> Result<QuotientCandidate, ImbedError> {
    if m == 0 {
        return Err(ImbedError::Usage("m must be at least 1".into()));
    }
    let n = e.order();
    let radius = 2 * m + 1;
    let mut attempts = 0;
    let mut degree = 0;
    for &mult in &search.schedule {
        degree = n * mult;
        let g_images = regular_images(e, mult);
        for attempt in 0..search.attempts_per_degree {
            attempts += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(search.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((degree as u64) << 32) ^ attempt as u64);
            let mut images: Vec<u32> = (0..degree as u32).collect();
            images.shuffle(&mut rng);
            let x = Permutation::from_images(images).unwrap();
            // Cheap radii first: most bad candidates collide early.
            let mut ok = true;
            let mut size = 0;
            for r in [3.min(radius), radius.div_ceil(2), radius] {
                let (good, s) = injective_on_ball(e, &g_images, &x, r);
                size = s;
                if !good {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok(QuotientCandidate { degree, g_images, x_image: x, radius, ball_size: size, attempts });
            }
        }
    }
    Err(ImbedError::SearchFailed { attempts, degree })
}

/// `H = ⟨t_s, r⟩ ≤ Q ≀ C_{2m}` together with the imbedding `ι`.
#[derive(Clone, Debug)]
pub struct WreathHost {
    pub m: usize,
    pub quotient: QuotientCandidate,
    pub handle: GroupHandle<Wreath<PermGroup>>,
    /// `ι(g)` for every element of `G`, by enumeration index.
    pub iota: Vec<WreathElem<Permutation>>,
}

impl WreathHost {
    pub fn carrier(&self) -> &Wreath<PermGroup> {
        self.handle.carrier()
    }

    /// Index of `r` among the generators of `H` (after all `t_s`).
    pub fn r_index(&self) -> usize {
        self.handle.generator_count() - 1
    }
}

fn conj(g: &Permutation, x: &Permutation, xi: &Permutation) -> Permutation {
    xi.mul_unchecked(g).mul_unchecked(x)
}

pub fn build_wreath_host<G: Group>(e: &Enumeration<G>, quotient: QuotientCandidate) -> Result<WreathHost, ImbedError> {
    let m = e.order();
    let k = quotient.degree;
    let q = PermGroup::new(k);
    let w = Wreath::new(q.clone(), 2 * m);
    let x = &quotient.x_image;
    let xi = x.inverse();
    let mut gens: Vec<(String, WreathElem<Permutation>)> = Vec::new();
    for (gi, name) in e.handle().names().into_iter().enumerate() {
        let s = quotient.s_image(e, gi).clone();
        let sx = conj(&s, x, &xi);
        let mut base = Vec::with_capacity(2 * m);
        for p in 0..m as i64 {
            base.push(q.pow(&s, p));
        }
        for p in 0..m as i64 {
            base.push(q.pow(&sx, p));
        }
        gens.push((format!("t_{name}"), w.base_element(base).map_err(|err| ImbedError::Check(err.to_string()))?));
    }
    let r = w.top_element(Permutation::rotation(2 * m, -1)).map_err(|err| ImbedError::Check(err.to_string()))?;
    gens.push(("r".into(), r));
    let iota = quotient
        .g_images
        .iter()
        .map(|g| {
            let gx = conj(g, x, &xi);
            let base = (0..2 * m).map(|p| if p < m { g.clone() } else { gx.clone() }).collect();
            w.base_element(base).unwrap()
        })
        .collect();
    let handle = GroupHandle::new(w, gens);
    let host = WreathHost { m, quotient, handle, iota };
    check_host(e, &host)?;
    Ok(host)
}

/// `ι(s) = [t_s, r]`, and `ι` is an injective homomorphism on all of `G`.
pub fn check_host<G: Group>(e: &Enumeration<G>, host: &WreathHost) -> Result<(), ImbedError> {
    let w = host.carrier();
    let r = &host.handle.generators()[host.r_index()].elem;
    for gi in 0..e.handle().generator_count() {
        let s = e.graph.step(0, 2 * gi as u16).unwrap() as usize;
        let t = &host.handle.generators()[gi].elem;
        if w.commutator(t, r) != host.iota[s] {
            return Err(ImbedError::Check(format!("ι(s{gi}) ≠ [t_s, r]")));
        }
    }
    if !w.is_identity(&host.iota[0]) {
        return Err(ImbedError::Check("ι(1) is not the identity".into()));
    }
    let mut seen = HashSet::new();
    for a in 0..e.order() {
        if !seen.insert(&host.iota[a]) {
            return Err(ImbedError::Check("ι is not injective".into()));
        }
        for b in 0..e.order() {
            if w.mul(&host.iota[a], &host.iota[b]) != host.iota[e.mul_index(a, b)] {
                return Err(ImbedError::Check(format!("ι is not multiplicative at ({a}, {b})")));
            }
        }
    }
    Ok(())
}

/// Attempts to enumerate `H`; returns its order or the size reached.
pub fn host_order(host: &WreathHost, budget: usize) -> Result<usize, usize> {
    match bfs_closure(&host.handle, budget) {
        Ok(h) => Ok(h.order()),
        Err(CayleyError::PartialClosure { enumerated, .. }) => Err(enumerated),
        Err(_) => Err(0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub element: usize,
    pub word: String,
    pub word_norm: u32,
    pub perfect_norm: Option<u32>,
    /// `2‖g‖ ≤ ‖ι(g)‖_perfect`; `None` when the norm is unknown.
    pub lower_ok: Option<bool>,
    pub upper_ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichReport {
    pub group_order: usize,
    pub m: usize,
    pub degree: usize,
    pub verification_radius: u32,
    pub ball_size: u64,
    /// Exact `|H|` when enumerated, otherwise the number of elements reached.
    pub host_order: Option<usize>,
    pub host_order_lower_bound: usize,
    pub budget: u32,
    pub rows: Vec<SandwichRow>,
    pub lower_violations: Vec<usize>,
}

impl SandwichReport {
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "element,word_norm,perfect_norm,lower_ok,upper_ok")?;
        for r in &self.rows {
            let p = r.perfect_norm.map_or(format!(">{}", self.budget), |p| p.to_string());
            let lo = r.lower_ok.map_or("unknown".to_string(), |b| b.to_string());
            writeln!(out, "{},{},{},{},{}", r.word, r.word_norm, p, lo, r.upper_ok)?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "group_order": self.group_order,
            "m": self.m,
            "degree": self.degree,
            "verification_radius": self.verification_radius,
            "ball_size": self.ball_size,
            "host_order": self.host_order,
            "host_order_lower_bound": self.host_order_lower_bound,
            "perfect_norm_budget": self.budget,
            "lower_violations": self.lower_violations,
            "upper_violations": self.rows.iter().filter(|r| !r.upper_ok).count(),
        })
    }
}

/// Perfect norms of `ι(g)` for every `g`, against `2‖g‖ ≤ ‖ι(g)‖ ≤ 4‖g‖`.
///
/// The upper bound is a hard check; lower-bound violations are listed.
pub fn verify_sandwich<G: Group>(e: &Enumeration<G>, host: &WreathHost, budget: u32, host_budget: usize) -> Result<SandwichReport, ImbedError> {
    let norms = word_norms(e);
    let found = perfect_norms_unenumerated(&host.handle, &host.iota, budget)?;
    let mut rows = Vec::new();
    let mut lower_violations = Vec::new();
    for (g, f) in found.iter().enumerate() {
        let wn = norms[g];
        let pn = f.as_ref().map(|b| b.length);
        let upper_ok = pn.is_some_and(|p| p <= 4 * wn);
        if !upper_ok && 4 * wn <= budget {
            return Err(ImbedError::Check(format!("‖ι(g)‖_perfect > 4‖g‖ for element {g}")));
        }
        let lower_ok = pn.map(|p| p >= 2 * wn);
        if lower_ok == Some(false) {
            lower_violations.push(g);
        }
        rows.push(SandwichRow { element: g, word: element_word(e, g), word_norm: wn, perfect_norm: pn, lower_ok, upper_ok });
    }
    let (host_order, lower) = match host_order(host, host_budget) {
        Ok(n) => (Some(n), n),
        Err(n) => (None, n),
    };
    Ok(SandwichReport {
        group_order: e.order(),
        m: host.m,
        degree: host.quotient.degree,
        verification_radius: host.quotient.radius,
        ball_size: host.quotient.ball_size,
        host_order,
        host_order_lower_bound: lower,
        budget,
        rows,
        lower_violations,
    })
}

/// A geodesic word for an enumerated element, as text.
pub fn element_word<G: Group>(e: &Enumeration<G>, g: usize) -> String {
    let dist = word_norms(e);
    let mut letters = Vec::new();
    let mut v = g;
    while v != 0 {
        let l = e.handle().letters().into_iter().find(|l| dist[e.graph.step(v, l.inverted().label()).unwrap() as usize] + 1 == dist[v]).unwrap();
        letters.push(l);
        v = e.graph.step(v, l.inverted().label()).unwrap() as usize;
    }
    letters.reverse();
    e.handle().word_string(&letters)
}
