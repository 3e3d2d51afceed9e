use std::collections::HashMap;

use crate::algebra::{Group, GroupHandle, Letter};

use super::CayleyError;

/// A labeled regular graph in CSR form. For Cayley graphs, vertex 0 is the
/// identity, the edge in slot `label` of vertex `v` goes to `v·s` where `s` is
/// the symmetrized letter with that label, and `encodings` holds the canonical
/// element table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CayleyGraph {
    pub(crate) n: usize,
    pub(crate) degree: usize,
    pub(crate) generator_count: usize,
    pub(crate) encoding_len: usize,
    pub(crate) encodings: Vec<u8>,
    pub(crate) offsets: Vec<u64>,
    pub(crate) targets: Vec<u32>,
    pub(crate) labels: Vec<u16>,
    pub(crate) cayley: bool,
}

impl CayleyGraph {
    /// A general labeled graph; adjacency lists must all have the same length.
    /// Such graphs are not assumed vertex-transitive.
    pub fn from_adjacency(adjacency: &[Vec<(u32, u16)>]) -> Result<Self, CayleyError> {
        let n = adjacency.len();
        let degree = adjacency.first().map_or(0, |a| a.len());
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(n * degree);
        let mut labels = Vec::with_capacity(n * degree);
        offsets.push(0u64);
        for (v, adj) in adjacency.iter().enumerate() {
            if adj.len() != degree {
                return Err(CayleyError::Usage(format!("vertex {v} has degree {} but expected {degree}", adj.len())));
            }
            for &(t, l) in adj {
                if t as usize >= n {
                    return Err(CayleyError::OutOfRange(t as usize, n));
                }
                targets.push(t);
                labels.push(l);
            }
            offsets.push(targets.len() as u64);
        }
        Ok(CayleyGraph {
            n,
            degree,
            generator_count: degree.div_ceil(2),
            encoding_len: 0,
            encodings: Vec::new(),
            offsets,
            targets,
            labels,
            cayley: false,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Regularity degree, counting parallel edges and loops.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn generator_count(&self) -> usize {
        self.generator_count
    }

    /// Whether the graph was produced by group enumeration (and so is vertex-transitive
    /// with left translations as automorphisms).
    pub fn is_cayley(&self) -> bool {
        self.cayley
    }

    pub fn encoding_len(&self) -> usize {
        self.encoding_len
    }

    pub fn encoding(&self, v: usize) -> &[u8] {
        &self.encodings[v * self.encoding_len..(v + 1) * self.encoding_len]
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    pub fn edge_labels(&self, v: usize) -> &[u16] {
        &self.labels[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    /// The neighbor of `v` along the edge with the given label, if present.
    pub fn step(&self, v: usize, label: u16) -> Option<u32> {
        if self.cayley {
            return Some(self.targets[self.offsets[v] as usize + label as usize]);
        }
        self.neighbors(v).iter().zip(self.edge_labels(v)).find(|(_, &l)| l == label).map(|(&t, _)| t)
    }

    pub(crate) fn check_vertex(&self, v: usize) -> Result<(), CayleyError> {
        if v < self.n {
            Ok(())
        } else {
            Err(CayleyError::OutOfRange(v, self.n))
        }
    }
}

/// A fully enumerated finite group: its Cayley graph plus the element values.
#[derive(Clone, Debug)]
pub struct Enumeration<G: Group> {
    pub graph: CayleyGraph,
    pub elements: Vec<G::Elem>,
    index: HashMap<G::Elem, u32>,
    handle: GroupHandle<G>,
}

impl<G: Group> Enumeration<G> {
    pub fn handle(&self) -> &GroupHandle<G> {
        &self.handle
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn index_of(&self, e: &G::Elem) -> Option<usize> {
        self.index.get(e).map(|&i| i as usize)
    }

    pub fn element(&self, i: usize) -> &G::Elem {
        &self.elements[i]
    }

    /// Index of the product of two enumerated elements.
    pub fn mul_index(&self, a: usize, b: usize) -> usize {
        let c = self.handle.carrier().mul(&self.elements[a], &self.elements[b]);
        self.index[&c] as usize
    }

    pub fn inv_index(&self, a: usize) -> usize {
        let c = self.handle.carrier().inv(&self.elements[a]);
        self.index[&c] as usize
    }

    /// Index reached from `start` by the word.
    pub fn walk(&self, start: usize, word: &[Letter]) -> usize {
        word.iter().fold(start, |v, l| self.graph.step(v, l.label()).unwrap() as usize)
    }
}

/// Enumerates `⟨generators⟩` by breadth-first search over right multiplication.
///
/// Elements are ordered by (BFS layer, canonical encoding). Fails with the
/// enumerated prefix when more than `budget` elements are found.
pub fn bfs_closure<G: Group>(handle: &GroupHandle<G>, budget: usize) -> Result<Enumeration<G>, CayleyError> {
    if handle.generator_count() == 0 {
        return Err(CayleyError::Usage("generator list is empty".into()));
    }
    if budget == 0 {
        return Err(CayleyError::Usage("budget must be at least 1".into()));
    }
    let carrier = handle.carrier();
    let letters = handle.letters();
    let id = carrier.identity();
    let mut index: HashMap<G::Elem, u32> = HashMap::new();
    let mut elements: Vec<G::Elem> = vec![id.clone()];
    index.insert(id, 0);
    let mut layer_start = 0usize;
    while layer_start < elements.len() {
        let layer_end = elements.len();
        let mut fresh: Vec<(Vec<u8>, G::Elem)> = Vec::new();
        let mut pending: HashMap<G::Elem, ()> = HashMap::new();
        for v in layer_start..layer_end {
            for &l in &letters {
                let w = carrier.mul(&elements[v], handle.letter_elem(l));
                if index.contains_key(&w) || pending.contains_key(&w) {
                    continue;
                }
                pending.insert(w.clone(), ());
                fresh.push((carrier.encoding(&w), w));
                if elements.len() + fresh.len() > budget {
                    let mut prefix: Vec<Vec<u8>> = elements.iter().map(|e| carrier.encoding(e)).collect();
                    prefix.extend(fresh.into_iter().map(|(enc, _)| enc));
                    return Err(CayleyError::PartialClosure { enumerated: prefix.len(), prefix });
                }
            }
        }
        fresh.sort_by(|a, b| a.0.cmp(&b.0));
        for (_, w) in fresh {
            index.insert(w.clone(), elements.len() as u32);
            elements.push(w);
        }
        layer_start = layer_end;
    }

    let n = elements.len();
    let degree = letters.len();
    let encoding_len = carrier.encoding(&elements[0]).len();
    let mut encodings = Vec::with_capacity(n * encoding_len);
    for e in &elements {
        let before = encodings.len();
        carrier.encode(e, &mut encodings);
        if encodings.len() - before != encoding_len {
            return Err(CayleyError::Usage("carrier produced variable-length encodings".into()));
        }
    }
    let mut targets = Vec::with_capacity(n * degree);
    let mut labels = Vec::with_capacity(n * degree);
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0u64);
    for e in &elements {
        for &l in &letters {
            let w = carrier.mul(e, handle.letter_elem(l));
            targets.push(index[&w]);
            labels.push(l.label());
        }
        offsets.push(targets.len() as u64);
    }
    let graph = CayleyGraph {
        n,
        degree,
        generator_count: handle.generator_count(),
        encoding_len,
        encodings,
        offsets,
        targets,
        labels,
        cayley: true,
    };
    Ok(Enumeration { graph, elements, index, handle: handle.clone() })
}
