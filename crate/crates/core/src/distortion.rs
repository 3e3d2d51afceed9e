//! Distortion of Euclidean embeddings of finite metrics, the Poincaré far-pair
//! witness on graphs with a spectral gap, and a least-distortion optimizer.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cayley::{distance_histogram, distances_from, CayleyError, CayleyGraph, UNREACHED};
use crate::expander::{poincare_table, CertificateRow};

#[derive(Debug, Error)]
pub enum DistortionError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("Poincaré guarantee violated at t = {t}: best image distance {best} > bound {bound}")]
    GuaranteeViolated { t: u32, best: f64, bound: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Cayley(#[from] CayleyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A finite metric space on `0..n` as a dense distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetric {
    n: usize,
    d: Vec<f64>,
}

impl FiniteMetric {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self, DistortionError> {
        if d.len() != n * n {
            return Err(DistortionError::Domain(format!("{} entries for {n} points", d.len())));
        }
        let m = FiniteMetric { n, d };
        for i in 0..n {
            if m.get(i, i) != 0.0 {
                return Err(DistortionError::Domain(format!("d({i},{i}) ≠ 0")));
            }
            for j in 0..n {
                let v = m.get(i, j);
                if !v.is_finite() || (v - m.get(j, i)).abs() > 1e-12 {
                    return Err(DistortionError::Domain(format!("d({i},{j}) is not symmetric and finite")));
                }
                if i != j && v <= 0.0 {
                    return Err(DistortionError::Domain(format!("points {i} and {j} coincide")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if m.get(i, k) > m.get(i, j) + m.get(j, k) + 1e-9 {
                        return Err(DistortionError::Domain(format!("triangle inequality fails at ({i},{j},{k})")));
                    }
                }
            }
        }
        Ok(m)
    }

    /// The shortest-path metric of a connected graph.
    pub fn from_graph(graph: &CayleyGraph) -> Result<Self, DistortionError> {
        let n = graph.vertex_count();
        let mut d = Vec::with_capacity(n * n);
        for x in 0..n {
            let row = distances_from(graph, x);
            if row.contains(&UNREACHED) {
                return Err(CayleyError::Disconnected.into());
            }
            d.extend(row.into_iter().map(|v| v as f64));
        }
        FiniteMetric::new(n, d)
    }

    pub fn path(n: usize) -> Self {
        FiniteMetric { n, d: (0..n * n).map(|k| (k / n).abs_diff(k % n) as f64).collect() }
    }

    pub fn uniform(n: usize) -> Self {
        FiniteMetric { n, d: (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect() }
    }

    pub fn cycle(n: usize) -> Self {
        FiniteMetric {
            n,
            d: (0..n * n)
                .map(|k| {
                    let a = (k / n).abs_diff(k % n);
                    a.min(n - a) as f64
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn scaled(&self, s: f64) -> Self {
        FiniteMetric { n: self.n, d: self.d.iter().map(|v| v * s).collect() }
    }
}

/// Coordinates of `n` points in `ℝ^dim`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub n: usize,
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl Embedding {
    pub fn new(n: usize, dim: usize, coords: Vec<f64>) -> Result<Self, DistortionError> {
        if dim == 0 || coords.len() != n * dim || coords.iter().any(|c| !c.is_finite()) {
            return Err(DistortionError::Domain("embedding needs dim ≥ 1 and n·dim finite coordinates".into()));
        }
        Ok(Embedding { n, dim, coords })
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.point(i).iter().zip(self.point(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Embedding { n: self.n, dim: self.dim, coords: self.coords.iter().map(|c| c * s).collect() }
    }

    /// Header line `n dim`, then one whitespace-separated row per point.
    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.n, self.dim)?;
        for i in 0..self.n {
            let row: Vec<String> = self.point(i).iter().map(|c| format!("{c:.17e}")).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read(input: impl BufRead) -> Result<Self, DistortionError> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| DistortionError::Parse("missing header".into()))??;
        let dims: Vec<usize> = header.split_whitespace().map(|s| s.parse().map_err(|_| DistortionError::Parse(format!("bad header {header:?}")))).collect::<Result<_, _>>()?;
        let [n, dim] = dims[..] else {
            return Err(DistortionError::Parse(format!("bad header {header:?}")));
        };
        let mut coords = Vec::with_capacity(n * dim);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for s in line.split_whitespace() {
                coords.push(s.parse::<f64>().map_err(|_| DistortionError::Parse(format!("bad coordinate {s:?}")))?);
            }
        }
        Embedding::new(n, dim, coords)
    }
}

/// `ρ_Φ` at each achieved distance, plus the Lipschitz constant of `Φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionProfile {
    pub thresholds: Vec<f64>,
    pub rho: Vec<f64>,
    pub lipschitz: f64,
}

impl DistortionProfile {
    pub fn at(&self, t: f64) -> Option<f64> {
        let k = self.thresholds.iter().position(|&s| s >= t)?;
        Some(self.rho[k])
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "t,rho")?;
        for (t, r) in self.thresholds.iter().zip(&self.rho) {
            writeln!(out, "{t},{r}")?;
        }
        Ok(())
    }
}

/// Largest ratio of image distance to source distance.
pub fn lipschitz_constant(metric: &FiniteMetric, phi: &Embedding) -> f64 {
    let mut l = 0.0f64;
    for i in 0..metric.len() {
        for j in i + 1..metric.len() {
            l = l.max(phi.dist(i, j) / metric.get(i, j));
        }
    }
    l
}

/// `ρ_Φ(t) = min{ d(Φy, Φy′) : d(y, y′) ≥ t }` at every achieved `t`; with
/// `normalize`, `Φ` is first divided by its Lipschitz constant (a constant map
/// stays constant and its profile is zero).
pub fn distortion_profile(metric: &FiniteMetric, phi: &Embedding, normalize: bool) -> Result<DistortionProfile, DistortionError> {
    if phi.n != metric.len() {
        return Err(DistortionError::Domain(format!("embedding has {} points, metric {}", phi.n, metric.len())));
    }
    let lip = lipschitz_constant(metric, phi);
    let scale = if normalize && lip > 0.0 { 1.0 / lip } else { 1.0 };
    let mut by_distance: Vec<(f64, f64)> = Vec::new();
    for i in 0..metric.len() {
        for j in i + 1..metric.len() {
            by_distance.push((metric.get(i, j), phi.dist(i, j) * scale));
        }
    }
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut thresholds: Vec<f64> = Vec::new();
    let mut mins: Vec<f64> = Vec::new();
    for (t, img) in by_distance {
        if thresholds.last().is_some_and(|&s| (s - t).abs() <= 1e-12 * t.max(1.0)) {
            let last = mins.last_mut().unwrap();
            *last = last.min(img);
        } else {
            thresholds.push(t);
            mins.push(img);
        }
    }
    let mut rho = mins.clone();
    for k in (0..rho.len().saturating_sub(1)).rev() {
        rho[k] = rho[k].min(rho[k + 1]);
    }
    Ok(DistortionProfile { thresholds, rho, lipschitz: lip * scale })
}

/// Profile of a vertex map on a connected graph with its word metric, over the
/// pairs whose first point is in `sources` (every vertex when empty). On a
/// proper subset the values are upper estimates of `ρ_Φ`. The Lipschitz
/// constant is exact: it is attained on an edge.
pub fn graph_profile(graph: &CayleyGraph, phi: &Embedding, sources: &[usize], normalize: bool) -> Result<DistortionProfile, DistortionError> {
    let n = graph.vertex_count();
    if phi.n != n {
        return Err(DistortionError::Domain(format!("embedding has {} points, graph {n}", phi.n)));
    }
    let mut lip = 0.0f64;
    for v in 0..n {
        for &w in graph.neighbors(v) {
            lip = lip.max(phi.dist(v, w as usize));
        }
    }
    let scale = if normalize && lip > 0.0 { 1.0 / lip } else { 1.0 };
    let all: Vec<usize>;
    let sources = if sources.is_empty() {
        all = (0..n).collect();
        &all[..]
    } else {
        sources
    };
    let mut mins: Vec<f64> = Vec::new();
    for &x in sources {
        for (y, &d) in distances_from(graph, x).iter().enumerate() {
            if d == UNREACHED {
                return Err(CayleyError::Disconnected.into());
            }
            if d == 0 {
                continue;
            }
            if mins.len() < d as usize {
                mins.resize(d as usize, f64::INFINITY);
            }
            let m = &mut mins[d as usize - 1];
            *m = m.min(phi.dist(x, y) * scale);
        }
    }
    let thresholds: Vec<f64> = (1..=mins.len()).map(|t| t as f64).filter(|&t| mins[t as usize - 1].is_finite()).collect();
    let mut rho: Vec<f64> = mins.into_iter().filter(|m| m.is_finite()).collect();
    for k in (0..rho.len().saturating_sub(1)).rev() {
        rho[k] = rho[k].min(rho[k + 1]);
    }
    Ok(DistortionProfile { thresholds, rho, lipschitz: lip * scale })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Better,
    Worse,
    Neither,
}

/// Tail comparison of a profile against `ρ` on achieved thresholds `≤ horizon`.
///
/// This is finite-horizon evidence: the verdict is `Worse` (`ρ_Φ < ρ`) or
/// `Better` (`ρ_Φ ≥ ρ`) when that relation holds on a tail covering at least
/// half of the thresholds, otherwise `Neither`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub verdict: Comparison,
    /// Start of the tail on which the final relation holds.
    pub tail_from: f64,
    pub last_below: Option<f64>,
    pub last_at_or_above: Option<f64>,
    pub horizon: f64,
}

pub fn compare_profiles(profile: &DistortionProfile, rho: impl Fn(f64) -> f64, horizon: f64) -> ProfileComparison {
    let points: Vec<(f64, bool)> =
        profile.thresholds.iter().zip(&profile.rho).filter(|(&t, _)| t <= horizon).map(|(&t, &r)| (t, r < rho(t))).collect();
    let last_below = points.iter().rev().find(|p| p.1).map(|p| p.0);
    let last_at_or_above = points.iter().rev().find(|p| !p.1).map(|p| p.0);
    let Some(&(_, final_below)) = points.last() else {
        return ProfileComparison { verdict: Comparison::Neither, tail_from: horizon, last_below, last_at_or_above, horizon };
    };
    let start = points.iter().rposition(|p| p.1 != final_below).map_or(0, |k| k + 1);
    let tail = points.len() - start;
    let verdict = if 2 * tail < points.len() {
        Comparison::Neither
    } else if final_below {
        Comparison::Worse
    } else {
        Comparison::Better
    };
    ProfileComparison { verdict, tail_from: points[start].0, last_below, last_at_or_above, horizon }
}

/// Spectral data a graph needs for the far-pair bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareData {
    pub d_reg: usize,
    pub lambda1: f64,
    pub table: Vec<CertificateRow>,
    pub lower_bound: f64,
}

impl PoincareData {
    pub fn new(graph: &CayleyGraph, lambda1: f64) -> Result<Self, DistortionError> {
        if lambda1 <= 0.0 {
            return Err(DistortionError::Domain("λ1 must be positive".into()));
        }
        let hist = distance_histogram(graph)?;
        let (table, lower_bound) = poincare_table(&hist, graph.degree(), lambda1);
        Ok(PoincareData { d_reg: graph.degree(), lambda1, table, lower_bound })
    }

    pub fn m_at(&self, t: u32) -> Option<f64> {
        self.table.iter().find(|r| r.t == t).map(|r| r.m_t)
    }
}

/// `max_t t / M(t)`: no Euclidean embedding has smaller bi-Lipschitz distortion.
pub fn c2_lower_bound(data: &PoincareData) -> f64 {
    data.lower_bound
}

/// A far pair whose images are close.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareWitness {
    pub t: u32,
    pub x: usize,
    pub y: usize,
    pub distance: u32,
    pub image_distance: f64,
    pub bound: f64,
    /// Rows (source vertices) scanned before the bound was met.
    pub rows_scanned: usize,
}

/// Finds `x, y` with `d(x,y) ≥ t` and `‖Φx − Φy‖ ≤ M(t)` for a 1-Lipschitz `Φ`.
///
/// Rows are scanned in the given order (all vertices after it); within the
/// scanned rows the closest far pair is returned, and scanning stops once the
/// bound is met. Failing after every row is a hard error.
pub fn poincare_witness(
    graph: &CayleyGraph,
    data: &PoincareData,
    phi: &Embedding,
    t: u32,
    rows: &[(usize, Vec<u32>)],
) -> Result<PoincareWitness, DistortionError> {
    let bound = data.m_at(t).ok_or_else(|| DistortionError::Domain(format!("P_{t} = 0")))?;
    let mut best: Option<PoincareWitness> = None;
    let mut scanned = 0;
    let consider = |x: usize, dist: &[u32], best: &mut Option<PoincareWitness>| {
        for (y, &d) in dist.iter().enumerate() {
            if d == UNREACHED || d < t {
                continue;
            }
            let img = phi.dist(x, y);
            if best.as_ref().is_none_or(|b| img < b.image_distance) {
                *best = Some(PoincareWitness { t, x, y, distance: d, image_distance: img, bound, rows_scanned: 0 });
            }
        }
    };
    for (x, dist) in rows {
        scanned += 1;
        consider(*x, dist, &mut best);
        if best.as_ref().is_some_and(|b| b.image_distance <= bound) {
            let mut w = best.unwrap();
            w.rows_scanned = scanned;
            return Ok(w);
        }
    }
    for x in 0..graph.vertex_count() {
        scanned += 1;
        consider(x, &distances_from(graph, x), &mut best);
        if best.as_ref().is_some_and(|b| b.image_distance <= bound) {
            let mut w = best.unwrap();
            w.rows_scanned = scanned;
            return Ok(w);
        }
    }
    Err(DistortionError::GuaranteeViolated { t, best: best.map_or(f64::INFINITY, |b| b.image_distance), bound })
}

/// A seeded Fréchet embedding `x ↦ (d(x, A_j))_j / √k` with random subsets
/// `A_j` of density `2^{-(1 + j mod s)}`; each coordinate is 1-Lipschitz.
pub fn frechet_embedding(graph: &CayleyGraph, k: usize, seed: u64) -> Result<Embedding, DistortionError> {
    let n = graph.vertex_count();
    if k == 0 || n == 0 {
        return Err(DistortionError::Domain("need at least one coordinate and one vertex".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = (usize::BITS - n.leading_zeros()).max(1) as usize;
    let mut coords = vec![0.0; n * k];
    let norm = 1.0 / (k as f64).sqrt();
    for j in 0..k {
        let p = 0.5f64.powi(1 + (j % scales) as i32);
        let mut set: Vec<usize> = (0..n).filter(|_| rng.gen_bool(p)).collect();
        if set.is_empty() {
            set.push(rng.gen_range(0..n));
        }
        let dist = multi_source_distances(graph, &set);
        for x in 0..n {
            coords[x * k + j] = dist[x] as f64 * norm;
        }
    }
    Embedding::new(n, k, coords)
}

fn multi_source_distances(graph: &CayleyGraph, sources: &[usize]) -> Vec<u32> {
    let n = graph.vertex_count();
    let mut dist = vec![UNREACHED; n];
    let mut queue = std::collections::VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        for &w in graph.neighbors(v) {
            if dist[w as usize] == UNREACHED {
                dist[w as usize] = dist[v] + 1;
                queue.push_back(w as usize);
            }
        }
    }
    dist
}

/// Classical multidimensional scaling: the Gram matrix of the centered squared
/// distances, clipped to its nonnegative spectrum.
pub fn classical_mds(metric: &FiniteMetric, dim: usize) -> Embedding {
    let n = metric.len();
    let sq = DMatrix::from_fn(n, n, |i, j| metric.get(i, j).powi(2));
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let total = row_means.iter().sum::<f64>() / n as f64;
    let gram = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + total));
    gram_to_embedding(&gram, dim)
}

fn gram_to_embedding(gram: &DMatrix<f64>, dim: usize) -> Embedding {
    let n = gram.nrows();
    let eig = SymmetricEigen::new(gram.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let dim = dim.max(1);
    let mut coords = vec![0.0; n * dim];
    for (c, &k) in order.iter().take(dim).enumerate() {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        for i in 0..n {
            coords[i * dim + c] = eig.eigenvectors[(i, k)] * lam;
        }
    }
    Embedding { n, dim, coords }
}

fn gram_of(phi: &Embedding) -> DMatrix<f64> {
    DMatrix::from_fn(phi.n, phi.n, |i, j| phi.point(i).iter().zip(phi.point(j)).map(|(a, b)| a * b).sum())
}

/// Bi-Lipschitz distortion `max ratio / min ratio` of an embedding.
pub fn distortion_of(metric: &FiniteMetric, phi: &Embedding) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..metric.len() {
        for j in i + 1..metric.len() {
            let r = phi.dist(i, j) / metric.get(i, j);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[derive(Clone, Debug)]
pub struct EmbedOptions {
    pub dim: Option<usize>,
    pub tol: f64,
    /// Alternating-projection sweeps per bisection step.
    pub sweeps: usize,
    pub bisection_steps: usize,
    pub seed: u64,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions { dim: None, tol: 1e-6, sweeps: 400, bisection_steps: 40, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct EmbedResult {
    pub embedding: Embedding,
    /// Distortion of `embedding` itself, so a certified upper bound.
    pub distortion: f64,
    pub converged: bool,
    pub bisection_steps: usize,
}

/// Least-distortion Euclidean embedding by bisection on `D²`, each step an
/// alternating projection between the PSD cone and the pairwise slabs
/// `d² ≤ G_ii + G_jj − 2G_ij ≤ D²d²`, started from classical MDS.
///
/// A step counts as infeasible when the projections miss the target within
/// `sweeps`, so `converged` only says that heuristic bracket closed; the
/// returned `distortion` is always achieved by `embedding`.
pub fn min_distortion_embed(metric: &FiniteMetric, opts: &EmbedOptions) -> Result<EmbedResult, DistortionError> {
    let n = metric.len();
    if n < 2 {
        return Err(DistortionError::Domain("need at least two points".into()));
    }
    if opts.tol <= 0.0 {
        return Err(DistortionError::Domain("tolerance must be positive".into()));
    }
    let dim = opts.dim.unwrap_or(n - 1).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = classical_mds(metric, n);
    let mut best_d = distortion_of(metric, &best);
    let mut lo = 1.0f64;
    let mut steps = 0;
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    while best_d - lo > opts.tol * lo && steps < opts.bisection_steps {
        steps += 1;
        let target = (lo * best_d).sqrt().max(lo + 0.25 * opts.tol * lo);
        let mut gram = gram_of(&normalized(metric, &best));
        let mut found = None;
        let mut improved: Option<(Embedding, f64)> = None;
        for _ in 0..opts.sweeps {
            pairs.shuffle(&mut rng);
            for &(i, j) in &pairs {
                let d2 = metric.get(i, j).powi(2);
                let q = gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)];
                let c = q.clamp(d2, target * target * d2);
                if c != q {
                    let delta = (c - q) / 4.0;
                    gram[(i, i)] += delta;
                    gram[(j, j)] += delta;
                    gram[(i, j)] -= delta;
                    gram[(j, i)] -= delta;
                }
            }
            let mut eig = SymmetricEigen::new(gram.clone());
            eig.eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
            gram = eig.recompose();
            let phi = gram_to_embedding(&gram, n);
            let d = distortion_of(metric, &phi);
            if d <= target * (1.0 + 1e-12) {
                found = Some((phi, d));
                break;
            }
            if d < improved.as_ref().map_or(best_d, |p| p.1) {
                improved = Some((phi, d));
            }
        }
        match found {
            Some((phi, d)) => {
                best_d = d;
                best = phi;
            }
            None => {
                lo = target;
                if let Some((phi, d)) = improved {
                    best_d = d;
                    best = phi;
                }
            }
        }
    }
    let converged = best_d - lo <= opts.tol * lo;
    let full = normalized(metric, &best);
    let embedding = if dim >= n { full } else { gram_to_embedding(&gram_of(&full), dim) };
    let distortion = distortion_of(metric, &embedding);
    Ok(EmbedResult { embedding, distortion, converged: converged && dim + 1 >= n, bisection_steps: steps })
}

/// Rescales so the least expansion ratio is 1.
fn normalized(metric: &FiniteMetric, phi: &Embedding) -> Embedding {
    let mut lo = f64::INFINITY;
    for i in 0..metric.len() {
        for j in i + 1..metric.len() {
            lo = lo.min(phi.dist(i, j) / metric.get(i, j));
        }
    }
    if lo > 0.0 && lo.is_finite() {
        phi.scaled(1.0 / lo)
    } else {
        phi.clone()
    }
}

/// Rescales to be 1-Lipschitz (a zero map is returned unchanged).
pub fn one_lipschitz(metric: &FiniteMetric, phi: &Embedding) -> Embedding {
    let l = lipschitz_constant(metric, phi);
    if l > 0.0 {
        phi.scaled(1.0 / l)
    } else {
        phi.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::tests_support::{complete_adjacency, cycle_adjacency};

    fn cycle_graph(n: usize) -> CayleyGraph {
        CayleyGraph::from_adjacency(&cycle_adjacency(n)).unwrap()
    }

    fn complete_graph(n: usize) -> CayleyGraph {
        CayleyGraph::from_adjacency(&complete_adjacency(n)).unwrap()
    }

    fn square() -> Embedding {
        Embedding::new(4, 2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn metric_validation() {
        assert!(FiniteMetric::new(2, vec![0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(FiniteMetric::new(3, vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0]).is_err());
        assert_eq!(FiniteMetric::from_graph(&cycle_graph(4)).unwrap(), FiniteMetric::cycle(4));
    }

    #[test]
    fn profiles() {
        let path = FiniteMetric::path(5);
        let line = Embedding::new(5, 1, (0..5).map(|i| i as f64).collect()).unwrap();
        let p = distortion_profile(&path, &line, true).unwrap();
        assert_eq!(p.thresholds, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.rho, p.thresholds);
        let zero = Embedding::new(5, 1, vec![0.0; 5]).unwrap();
        let p0 = distortion_profile(&path, &zero, true).unwrap();
        assert!(p0.rho.iter().all(|&r| r == 0.0));
        let c4 = distortion_profile(&FiniteMetric::cycle(4), &square(), true).unwrap();
        assert!((c4.at(2.0).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((c4.lipschitz - 1.0).abs() < 1e-12);
    }

    #[test]
    fn comparisons() {
        let ts: Vec<f64> = (1..=20).map(|t| t as f64).collect();
        let id = DistortionProfile { thresholds: ts.clone(), rho: ts.clone(), lipschitz: 1.0 };
        assert_eq!(compare_profiles(&id, f64::sqrt, 20.0).verdict, Comparison::Better);
        let one = DistortionProfile { thresholds: ts.clone(), rho: vec![1.0; 20], lipschitz: 1.0 };
        let c = compare_profiles(&one, |t: f64| (1.0 + t).ln(), 20.0);
        assert_eq!(c.verdict, Comparison::Worse);
        assert_eq!(c.tail_from, 2.0);
        let osc = DistortionProfile { thresholds: ts.clone(), rho: ts.iter().map(|&t| if t as u32 % 2 == 0 { 10.0 } else { 0.0 }).collect(), lipschitz: 1.0 };
        let c = compare_profiles(&osc, |_| 5.0, 20.0);
        assert_eq!(c.verdict, Comparison::Neither);
        assert!(c.last_below.is_some() && c.last_at_or_above.is_some());
    }

    #[test]
    fn optimizer_exact_cases() {
        for m in [FiniteMetric::path(6), FiniteMetric::uniform(4), FiniteMetric::uniform(7)] {
            let r = min_distortion_embed(&m, &EmbedOptions::default()).unwrap();
            assert!((r.distortion - 1.0).abs() < 1e-6, "{}", r.distortion);
        }
        let r = min_distortion_embed(&FiniteMetric::cycle(4), &EmbedOptions::default()).unwrap();
        assert!((r.distortion - 2f64.sqrt()).abs() < 1e-3);
        // Symmetric oracle: the bent squares (±a,0,h), (0,±a,−h).
        let mut oracle = f64::INFINITY;
        for ia in 1..=40 {
            for ih in 0..=40 {
                let (a, h) = (ia as f64 / 20.0, ih as f64 / 20.0);
                let pts = [[a, 0.0, h], [0.0, a, -h], [-a, 0.0, h], [0.0, -a, -h]];
                let coords = pts.iter().flatten().cloned().collect();
                oracle = oracle.min(distortion_of(&FiniteMetric::cycle(4), &Embedding::new(4, 3, coords).unwrap()));
            }
        }
        assert!((oracle - r.distortion).abs() < 1e-3);
    }

    #[test]
    fn scaling_invariance() {
        let m = FiniteMetric::cycle(6);
        let base = min_distortion_embed(&m, &EmbedOptions::default()).unwrap();
        for s in [2.0, 10.0] {
            let r = min_distortion_embed(&m.scaled(s), &EmbedOptions::default()).unwrap();
            assert!((r.distortion - base.distortion).abs() < 1e-5);
            let p = distortion_profile(&m, &base.embedding, false).unwrap();
            let ps = distortion_profile(&m.scaled(s), &base.embedding.scaled(s), false).unwrap();
            for (a, b) in p.rho.iter().zip(&ps.rho) {
                assert!((a * s - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn poincare_on_small_graphs() {
        let c4 = cycle_graph(4);
        let data = PoincareData::new(&c4, 2.0).unwrap();
        let lb = c2_lower_bound(&data);
        assert!((1.0..=2f64.sqrt()).contains(&lb));
        let r = min_distortion_embed(&FiniteMetric::cycle(4), &EmbedOptions::default()).unwrap();
        assert!(lb <= r.distortion + 1e-9);

        let n = 6;
        let kn = complete_graph(n);
        let data = PoincareData::new(&kn, n as f64).unwrap();
        assert!((data.table[0].p_t - (n - 1) as f64 / n as f64).abs() < 1e-12);
        assert!(c2_lower_bound(&data) <= 1.0 + 1e-12);
        let simplex = one_lipschitz(&FiniteMetric::uniform(n), &classical_mds(&FiniteMetric::uniform(n), n));
        let w = poincare_witness(&kn, &data, &simplex, 1, &[]).unwrap();
        assert!(w.image_distance <= w.bound);
        let constant = Embedding::new(n, 1, vec![3.0; n]).unwrap();
        assert_eq!(poincare_witness(&kn, &data, &constant, 1, &[]).unwrap().image_distance, 0.0);
        for seed in 0..20 {
            let phi = frechet_embedding(&c4, 3, seed).unwrap();
            assert!(lipschitz_constant(&FiniteMetric::cycle(4), &phi) <= 1.0 + 1e-12);
            poincare_witness(&c4, &PoincareData::new(&c4, 2.0).unwrap(), &phi, 2, &[]).unwrap();
        }
    }

    #[test]
    fn graph_profile_matches_metric_profile() {
        let g = cycle_graph(7);
        let m = FiniteMetric::from_graph(&g).unwrap();
        for seed in 0..5 {
            let phi = frechet_embedding(&g, 4, seed).unwrap();
            let a = graph_profile(&g, &phi, &[], true).unwrap();
            let b = distortion_profile(&m, &phi, true).unwrap();
            assert_eq!(a.thresholds, b.thresholds);
            for (x, y) in a.rho.iter().zip(&b.rho) {
                assert!((x - y).abs() < 1e-12);
            }
            let partial = graph_profile(&g, &phi, &[0, 3], true).unwrap();
            for (x, y) in partial.rho.iter().zip(&a.rho) {
                assert!(x >= y);
            }
        }
    }

    #[test]
    fn embedding_file_round_trip() {
        let mut buf = Vec::new();
        square().write(&mut buf).unwrap();
        assert!(buf.starts_with(b"4 2\n"));
        assert_eq!(Embedding::read(&buf[..]).unwrap(), square());
        assert!(Embedding::read(&b"2 2\n1 2 3\n"[..]).is_err());
    }
}
