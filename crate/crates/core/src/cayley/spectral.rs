//! Smallest nonzero eigenvalue `λ1` of the combinatorial Laplacian `L = d·I − A`.
//!
//! Large graphs use a restarted Lanczos iteration with full reorthogonalization on
//! the complement of the constant vector. Convergence is declared only when the
//! explicit residual `‖Lu − θu‖` is below the tolerance, which bounds `|θ − λ|`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{is_connected, CayleyError, CayleyGraph};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralData {
    pub lambda1: f64,
    pub residual: f64,
    pub iterations: usize,
    pub vertices: usize,
    pub degree: usize,
    pub method: String,
    #[serde(skip)]
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SpectralOptions {
    pub tol: f64,
    pub seed: u64,
    /// Largest basis size before a restart.
    pub krylov_dim: usize,
    /// Ritz vectors kept across a restart.
    pub keep: usize,
    /// Matrix-vector product cap; `None` means `50·√n` (at least 500).
    pub max_iterations: Option<usize>,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { tol: 1e-9, seed: 0, krylov_dim: 160, keep: 40, max_iterations: None }
    }
}

/// `y = L x`.
pub fn laplacian_apply(graph: &CayleyGraph, x: &[f64], y: &mut [f64]) {
    let d = graph.degree() as f64;
    for (v, yv) in y.iter_mut().enumerate() {
        let s: f64 = graph.neighbors(v).iter().map(|&w| x[w as usize]).sum();
        *yv = d * x[v] - s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Orthogonalizes `r` against the basis and the constants (two passes).
fn orthogonalize(r: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        remove_mean(r);
        for q in basis {
            let c = dot(q, r);
            axpy(-c, q, r);
        }
    }
}

fn check_input(graph: &CayleyGraph) -> Result<(), CayleyError> {
    if graph.vertex_count() < 2 {
        return Err(CayleyError::Usage("spectral gap needs at least two vertices".into()));
    }
    if !is_connected(graph) {
        return Err(CayleyError::Disconnected);
    }
    Ok(())
}

/// Exact `λ1` from a dense eigendecomposition; intended for `n ≤ 500`.
pub fn dense_spectral_gap(graph: &CayleyGraph) -> Result<SpectralData, CayleyError> {
    check_input(graph)?;
    let n = graph.vertex_count();
    let d = graph.degree() as f64;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for v in 0..n {
        l[(v, v)] += d;
        for &w in graph.neighbors(v) {
            l[(v, w as usize)] -= 1.0;
        }
    }
    let eig = SymmetricEigen::new(l.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let i = order[1];
    let vector: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
    let lambda1 = eig.eigenvalues[i];
    let lv = &l * DMatrix::from_column_slice(n, 1, &vector);
    let residual = lv.iter().zip(&vector).map(|(a, b)| (a - lambda1 * b).powi(2)).sum::<f64>().sqrt();
    Ok(SpectralData { lambda1, residual, iterations: 1, vertices: n, degree: graph.degree(), method: "dense".into(), vector })
}

struct Ritz {
    theta: f64,
    residual: f64,
    vector: Vec<f64>,
}

/// `λ1` by restarted Lanczos. Fails with [`CayleyError::Convergence`] carrying the
/// best estimate when the iteration cap is reached.
pub fn spectral_gap(graph: &CayleyGraph, opts: &SpectralOptions) -> Result<SpectralData, CayleyError> {
    check_input(graph)?;
    let n = graph.vertex_count();
    if n <= 2 {
        return dense_spectral_gap(graph);
    }
    let dim = opts.krylov_dim.clamp(2, n - 1);
    let keep = opts.keep.clamp(1, (dim / 2).max(1));
    let cap = opts.max_iterations.unwrap_or_else(|| ((50.0 * (n as f64).sqrt()) as usize).max(500));
    let scale = 2.0 * graph.degree() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let random_unit = |rng: &mut ChaCha8Rng, basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        for _ in 0..5 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            orthogonalize(&mut v, basis);
            let nv = norm(&v);
            if nv > 1e-8 {
                v.iter_mut().for_each(|x| *x /= nv);
                return Some(v);
            }
        }
        None
    };

    let mut q: Vec<Vec<f64>> = vec![random_unit(&mut rng, &[]).ok_or_else(|| CayleyError::Usage("degenerate start".into()))?];
    let mut lq: Vec<Vec<f64>> = Vec::new();
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0usize;
    let mut best: Option<Ritz> = None;

    loop {
        let j = q.len() - 1;
        let mut w = vec![0.0; n];
        laplacian_apply(graph, &q[j], &mut w);
        iterations += 1;
        for row in h.iter_mut() {
            row.push(0.0);
        }
        h.push(vec![0.0; j + 1]);
        for i in 0..=j {
            let c = dot(&q[i], &w);
            h[i][j] = c;
            h[j][i] = c;
        }
        let mut r = w.clone();
        lq.push(w);
        orthogonalize(&mut r, &q);
        let beta = norm(&r);

        let hm = DMatrix::from_fn(j + 1, j + 1, |a, b| h[a][b]);
        let eig = SymmetricEigen::new(hm);
        let mut order: Vec<usize> = (0..=j).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let full = q.len() == dim;
        let breakdown = beta < 1e-12 * scale;
        if full || breakdown || j % 4 == 0 || iterations >= cap {
            let y = eig.eigenvectors.column(order[0]);
            let theta = eig.eigenvalues[order[0]];
            let mut u = vec![0.0; n];
            let mut lu = vec![0.0; n];
            for i in 0..=j {
                axpy(y[i], &q[i], &mut u);
                axpy(y[i], &lq[i], &mut lu);
            }
            axpy(-theta, &u, &mut lu);
            let residual = norm(&lu);
            if best.as_ref().is_none_or(|b| residual < b.residual) {
                best = Some(Ritz { theta, residual, vector: u });
            }
            if residual <= opts.tol {
                let b = best.unwrap();
                return Ok(SpectralData {
                    lambda1: b.theta,
                    residual: b.residual,
                    iterations,
                    vertices: n,
                    degree: graph.degree(),
                    method: "lanczos".into(),
                    vector: b.vector,
                });
            }
        }
        if iterations >= cap {
            let b = best.unwrap();
            return Err(CayleyError::Convergence { best: b.theta, residual: b.residual, iterations });
        }

        let next = if breakdown {
            match random_unit(&mut rng, &q) {
                Some(v) => v,
                None => {
                    let b = best.unwrap();
                    return Err(CayleyError::Convergence { best: b.theta, residual: b.residual, iterations });
                }
            }
        } else {
            r.iter_mut().for_each(|x| *x /= beta);
            r
        };

        if full || (breakdown && q.len() + 1 > dim) {
            let mut nq = Vec::with_capacity(dim);
            let mut nlq = Vec::with_capacity(dim);
            let mut nh = vec![vec![0.0; keep]; keep];
            for (slot, &k) in order.iter().take(keep).enumerate() {
                let y = eig.eigenvectors.column(k);
                let mut u = vec![0.0; n];
                let mut lu = vec![0.0; n];
                for i in 0..=j {
                    axpy(y[i], &q[i], &mut u);
                    axpy(y[i], &lq[i], &mut lu);
                }
                nh[slot][slot] = eig.eigenvalues[k];
                nq.push(u);
                nlq.push(lu);
            }
            q = nq;
            lq = nlq;
            h = nh;
            let mut next = next;
            orthogonalize(&mut next, &q);
            let nn = norm(&next);
            next.iter_mut().for_each(|x| *x /= nn);
            q.push(next);
        } else {
            q.push(next);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{bfs_closure, tests_support::*};
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn complete_graph_gap_is_n() {
        for n in [3usize, 5, 8, 12] {
            let g = CayleyGraph::from_adjacency(&complete_adjacency(n)).unwrap();
            let s = spectral_gap(&g, &SpectralOptions::default()).unwrap();
            assert!((s.lambda1 - n as f64).abs() < 1e-9, "{n}: {}", s.lambda1);
            assert!((dense_spectral_gap(&g).unwrap().lambda1 - n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn cycle_gap() {
        for n in [4usize, 7, 30, 101] {
            let g = bfs_closure(&cyclic(n), 1000).unwrap().graph;
            let s = spectral_gap(&g, &SpectralOptions { tol: 1e-11, ..Default::default() }).unwrap();
            let expect = 2.0 - 2.0 * (2.0 * PI / n as f64).cos();
            assert!((s.lambda1 - expect).abs() < 1e-9, "{n}: {} vs {expect}", s.lambda1);
        }
    }

    #[test]
    fn lanczos_matches_dense_with_restarts() {
        let g = bfs_closure(&sl3(2, 1), 1000).unwrap().graph;
        let dense = dense_spectral_gap(&g).unwrap();
        let opts = SpectralOptions { krylov_dim: 12, keep: 4, tol: 1e-10, ..Default::default() };
        let s = spectral_gap(&g, &opts).unwrap();
        assert!((s.lambda1 - dense.lambda1).abs() < 1e-8);
        assert!(s.residual <= 1e-10);
        let mut lv = vec![0.0; g.vertex_count()];
        laplacian_apply(&g, &s.vector, &mut lv);
        let rq = dot(&s.vector, &lv) / dot(&s.vector, &s.vector);
        assert!((rq - s.lambda1).abs() < 1e-8);
    }

    #[test]
    fn disconnected_and_cap() {
        let mut adj = cycle_adjacency(3);
        adj.extend(cycle_adjacency(3).into_iter().map(|a| a.into_iter().map(|(t, l)| (t + 3, l)).collect()));
        let g = CayleyGraph::from_adjacency(&adj).unwrap();
        assert!(matches!(spectral_gap(&g, &SpectralOptions::default()), Err(CayleyError::Disconnected)));
        let big = bfs_closure(&cyclic(400), 1000).unwrap().graph;
        let opts = SpectralOptions { max_iterations: Some(5), krylov_dim: 4, keep: 2, ..Default::default() };
        match spectral_gap(&big, &opts) {
            Err(CayleyError::Convergence { iterations, best, .. }) => {
                assert_eq!(iterations, 5);
                assert!(best > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
