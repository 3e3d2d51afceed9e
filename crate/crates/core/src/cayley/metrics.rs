//! Word metric, growth and distance statistics on enumerated graphs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{CayleyError, CayleyGraph};

pub const UNREACHED: u32 = u32::MAX;

/// BFS distances from `source`; unreachable vertices get [`UNREACHED`].
pub fn distances_from(graph: &CayleyGraph, source: usize) -> Vec<u32> {
    let mut dist = vec![UNREACHED; graph.vertex_count()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source as u32);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v as usize];
        for &w in graph.neighbors(v as usize) {
            if dist[w as usize] == UNREACHED {
                dist[w as usize] = dv + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

pub fn is_connected(graph: &CayleyGraph) -> bool {
    graph.vertex_count() == 0 || distances_from(graph, 0).iter().all(|&d| d != UNREACHED)
}

pub fn word_distance(graph: &CayleyGraph, x: usize, y: usize) -> Result<u32, CayleyError> {
    graph.check_vertex(x)?;
    graph.check_vertex(y)?;
    let d = distances_from(graph, x)[y];
    if d == UNREACHED {
        Err(CayleyError::Disconnected)
    } else {
        Ok(d)
    }
}

/// Cumulative ball sizes `γ(0), …, γ(R)` around the identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthFunction {
    pub sizes: Vec<u64>,
}

impl GrowthFunction {
    pub fn radius(&self) -> usize {
        self.sizes.len().saturating_sub(1)
    }

    pub fn at(&self, r: usize) -> u64 {
        self.sizes[r.min(self.sizes.len() - 1)]
    }

    /// Sphere sizes `γ(r) − γ(r−1)`.
    pub fn spheres(&self) -> Vec<u64> {
        self.sizes.iter().enumerate().map(|(r, &g)| if r == 0 { g } else { g - self.sizes[r - 1] }).collect()
    }
}

pub fn growth_function(graph: &CayleyGraph, radius: usize) -> GrowthFunction {
    let dist = distances_from(graph, 0);
    let mut counts = vec![0u64; radius + 1];
    for d in dist {
        if d != UNREACHED && (d as usize) <= radius {
            counts[d as usize] += 1;
        }
    }
    for r in 1..=radius {
        counts[r] += counts[r - 1];
    }
    GrowthFunction { sizes: counts }
}

/// BFS spanning tree from the identity as `(vertex, parent, label)` in BFS order,
/// excluding the root.
pub fn bfs_tree(graph: &CayleyGraph) -> Vec<(u32, u32, u16)> {
    let n = graph.vertex_count();
    let mut seen = vec![false; n];
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    let mut queue = VecDeque::new();
    seen[0] = true;
    queue.push_back(0u32);
    while let Some(v) = queue.pop_front() {
        for (&w, &l) in graph.neighbors(v as usize).iter().zip(graph.edge_labels(v as usize)) {
            if !seen[w as usize] {
                seen[w as usize] = true;
                out.push((w, v, l));
                queue.push_back(w);
            }
        }
    }
    out
}

/// Left translation `v ↦ x·v` as a vertex map, computed by replaying the BFS tree
/// from `x`. Only meaningful for Cayley graphs.
pub fn translation(graph: &CayleyGraph, tree: &[(u32, u32, u16)], x: usize) -> Vec<u32> {
    let mut phi = vec![0u32; graph.vertex_count()];
    phi[0] = x as u32;
    for &(v, parent, label) in tree {
        phi[v as usize] = graph.step(phi[parent as usize] as usize, label).expect("cayley graph has every label");
    }
    phi
}

/// Number of ordered vertex pairs at each distance.
///
/// Cayley graphs use a single BFS (every vertex sees the same distance multiset);
/// other graphs fall back to one BFS per source.
pub fn distance_histogram(graph: &CayleyGraph) -> Result<Vec<u64>, CayleyError> {
    let n = graph.vertex_count();
    let mut hist: Vec<u64> = Vec::new();
    let mut add = |dist: &[u32], weight: u64| -> Result<(), CayleyError> {
        for &d in dist {
            if d == UNREACHED {
                return Err(CayleyError::Disconnected);
            }
            if hist.len() <= d as usize {
                hist.resize(d as usize + 1, 0);
            }
            hist[d as usize] += weight;
        }
        Ok(())
    };
    if graph.is_cayley() {
        add(&distances_from(graph, 0), n as u64)?;
    } else {
        for s in 0..n {
            add(&distances_from(graph, s), 1)?;
        }
    }
    Ok(hist)
}

pub fn diameter(graph: &CayleyGraph) -> Result<u32, CayleyError> {
    Ok(distance_histogram(graph)?.len().saturating_sub(1) as u32)
}

/// `P_t`: the fraction of ordered pairs `(x, y)` with `d(x, y) ≥ t`.
pub fn far_pair_fraction(graph: &CayleyGraph, t: u32) -> Result<f64, CayleyError> {
    let hist = distance_histogram(graph)?;
    Ok(far_fraction_from_histogram(&hist, t))
}

pub fn far_fraction_from_histogram(hist: &[u64], t: u32) -> f64 {
    let total: u64 = hist.iter().sum();
    let far: u64 = hist.iter().skip(t as usize).sum();
    far as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::super::{bfs_closure, tests_support::*};
    use super::*;
    use crate::algebra::{Group, Letter};
    use rand::{Rng, SeedableRng};

    #[test]
    fn cycle_metric() {
        let g = bfs_closure(&cyclic(5), 10).unwrap().graph;
        assert_eq!(word_distance(&g, 3, 3).unwrap(), 0);
        let e = bfs_closure(&cyclic(5), 10).unwrap();
        let two = e.walk(0, &[Letter::new(0, false), Letter::new(0, false)]);
        assert_eq!(word_distance(&g, 0, two).unwrap(), 2);
        assert_eq!(growth_function(&g, 2).sizes, vec![1, 3, 5]);
        assert!(word_distance(&g, 0, 9).is_err());
    }

    #[test]
    fn sl3_word_norm_of_commutator_and_first_sphere() {
        let e = bfs_closure(&sl3(2, 1), 1000).unwrap();
        let r = crate::algebra::Ring::new(2, 1).unwrap();
        let x13 = crate::algebra::elementary_matrix(1, 3, &r.one()).unwrap();
        // X13 is itself a generator in the six-generator set.
        assert_eq!(word_distance(&e.graph, 0, e.index_of(&x13).unwrap()).unwrap(), 1);
        let x12 = crate::algebra::elementary_matrix(1, 2, &r.one()).unwrap();
        let x23 = crate::algebra::elementary_matrix(2, 3, &r.one()).unwrap();
        let c = e.handle().carrier().commutator(&x12, &x23);
        assert_eq!(c, x13);
        // Six involutions give six distinct neighbours of the identity.
        assert_eq!(growth_function(&e.graph, 1).at(1), 7);
        let gf = growth_function(&e.graph, 50);
        let spheres: u64 = gf.spheres().iter().sum();
        assert_eq!(spheres, 168);
    }

    #[test]
    fn left_invariance_and_translation() {
        let e = bfs_closure(&sl3(3, 1), 10_000).unwrap();
        let g = &e.graph;
        let tree = bfs_tree(g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = g.vertex_count();
        for _ in 0..1000 {
            let (a, x, y) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            let ax = e.mul_index(a, x);
            let ay = e.mul_index(a, y);
            assert_eq!(word_distance(g, ax, ay).unwrap(), word_distance(g, x, y).unwrap());
        }
        let phi = translation(g, &tree, 17);
        for v in (0..n).step_by(97) {
            assert_eq!(phi[v] as usize, e.mul_index(17, v));
        }
    }

    #[test]
    fn triangle_inequality_and_symmetry() {
        let e = bfs_closure(&sl3(2, 1), 1000).unwrap();
        let g = &e.graph;
        let all: Vec<Vec<u32>> = (0..g.vertex_count()).map(|s| distances_from(g, s)).collect();
        for x in (0..168).step_by(5) {
            for y in 0..168 {
                assert_eq!(all[x][y], all[y][x]);
                for z in (0..168).step_by(7) {
                    assert!(all[x][z] <= all[x][y] + all[y][z]);
                }
            }
        }
    }

    #[test]
    fn far_pairs() {
        let c4 = bfs_closure(&cyclic(4), 10).unwrap().graph;
        assert_eq!(far_pair_fraction(&c4, 0).unwrap(), 1.0);
        assert_eq!(far_pair_fraction(&c4, 2).unwrap(), 0.25);
        assert_eq!(far_pair_fraction(&c4, 3).unwrap(), 0.0);
        // Same answer through the per-source path.
        let generic = CayleyGraph::from_adjacency(&cycle_adjacency(4)).unwrap();
        assert_eq!(far_pair_fraction(&generic, 2).unwrap(), 0.25);
        let e = bfs_closure(&sl3(2, 1), 1000).unwrap();
        let mut prev = 1.0;
        for t in 0..8 {
            let p = far_pair_fraction(&e.graph, t).unwrap();
            assert!(p <= prev);
            prev = p;
        }
    }
}
