//! Exact arithmetic for the finite carriers used everywhere else: truncated
//! polynomial rings, `SL_3` over them, permutations, and direct/wreath products.
//!
//! All group actions are right actions. Permutation products apply the left
//! factor first and the wreath law is `(f,g)(f',g') = (x ↦ f(x)·f'(x·g), gg')`.

pub mod matrix;
pub mod perm;
pub mod product;
pub mod ring;

use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matrix::{elementary_matrix, matrix_op, Matrix3, MatrixGroup, MatrixOp};
pub use perm::{perm_compose, PermGroup, PermOp, Permutation};
pub use product::{DirectProduct, Wreath, WreathElem};
pub use ring::{ring_arith, Ring, RingElement, RingOp};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("operands live in different rings")]
    ModulusMismatch,
    #[error("{0} is not invertible")]
    NotInvertible(String),
    #[error("invalid group element: {0}")]
    InvalidElement(String),
    #[error("usage error: {0}")]
    Usage(String),
}

/// Which element universe a carrier operates on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierKind {
    Matrix,
    Permutation,
    DirectProduct,
    Wreath,
    GrigorchukWord,
    Table,
}

/// The operation contract every finite group carrier provides.
///
/// Equality of elements must agree with equality of their canonical encodings.
pub trait Group: Clone + Send + Sync {
    type Elem: Clone + Eq + Hash + Debug + Send + Sync;

    fn identity(&self) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn inv(&self, a: &Self::Elem) -> Self::Elem;
    /// Appends the stable little-endian byte encoding of `a`.
    fn encode(&self, a: &Self::Elem, out: &mut Vec<u8>);
    fn kind(&self) -> CarrierKind;
    /// A stable textual description of the carrier, used in cache keys.
    fn describe(&self) -> String;

    fn encoding(&self, a: &Self::Elem) -> Vec<u8> {
        let mut v = Vec::new();
        self.encode(a, &mut v);
        v
    }

    fn is_identity(&self, a: &Self::Elem) -> bool {
        *a == self.identity()
    }

    /// `[a, b] = a⁻¹ b⁻¹ a b`.
    fn commutator(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem {
        let ai = self.inv(a);
        let bi = self.inv(b);
        self.mul(&self.mul(&ai, &bi), &self.mul(a, b))
    }

    fn pow(&self, a: &Self::Elem, mut e: i64) -> Self::Elem {
        let mut base = if e < 0 { self.inv(a) } else { a.clone() };
        e = e.abs();
        let mut acc = self.identity();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// Order of `a`, searched up to `cap`.
    fn order_of(&self, a: &Self::Elem, cap: u64) -> Option<u64> {
        let mut x = a.clone();
        for k in 1..=cap {
            if self.is_identity(&x) {
                return Some(k);
            }
            x = self.mul(&x, a);
        }
        None
    }
}

/// One letter of a word over a generating set: generator index and sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub generator: u16,
    pub inverse: bool,
}

impl Letter {
    pub fn new(generator: usize, inverse: bool) -> Self {
        Letter { generator: generator as u16, inverse }
    }

    /// Index of this letter in the symmetrized label order `s₀, s₀⁻¹, s₁, s₁⁻¹, …`.
    pub fn label(self) -> u16 {
        self.generator * 2 + self.inverse as u16
    }

    pub fn from_label(label: u16) -> Self {
        Letter { generator: label / 2, inverse: label % 2 == 1 }
    }

    pub fn inverted(self) -> Self {
        Letter { generator: self.generator, inverse: !self.inverse }
    }
}

pub fn invert_word(word: &[Letter]) -> Vec<Letter> {
    word.iter().rev().map(|l| l.inverted()).collect()
}

#[derive(Clone, Debug)]
pub struct Generator<E> {
    pub name: String,
    pub elem: E,
}

/// A finite group presented by named generator elements over a carrier.
#[derive(Clone, Debug)]
pub struct GroupHandle<G: Group> {
    carrier: G,
    generators: Vec<Generator<G::Elem>>,
    inverses: Vec<G::Elem>,
}

impl<G: Group> GroupHandle<G> {
    pub fn new(carrier: G, generators: Vec<(String, G::Elem)>) -> Self {
        let inverses = generators.iter().map(|(_, g)| carrier.inv(g)).collect();
        let generators = generators.into_iter().map(|(name, elem)| Generator { name, elem }).collect();
        GroupHandle { carrier, generators, inverses }
    }

    pub fn carrier(&self) -> &G {
        &self.carrier
    }

    pub fn generators(&self) -> &[Generator<G::Elem>] {
        &self.generators
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.generators.iter().map(|g| g.name.clone()).collect()
    }

    /// Symmetrized letters in label order: each generator followed by its inverse.
    pub fn letters(&self) -> Vec<Letter> {
        (0..self.generators.len()).flat_map(|g| [Letter::new(g, false), Letter::new(g, true)]).collect()
    }

    pub fn letter_elem(&self, l: Letter) -> &G::Elem {
        if l.inverse {
            &self.inverses[l.generator as usize]
        } else {
            &self.generators[l.generator as usize].elem
        }
    }

    pub fn eval(&self, word: &[Letter]) -> G::Elem {
        word.iter().fold(self.carrier.identity(), |acc, &l| self.carrier.mul(&acc, self.letter_elem(l)))
    }

    pub fn word_string(&self, word: &[Letter]) -> String {
        if word.is_empty() {
            return "1".into();
        }
        word.iter()
            .map(|l| {
                let n = &self.generators[l.generator as usize].name;
                if l.inverse {
                    format!("{n}^-1")
                } else {
                    n.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Carrier description plus generator encodings; stable across runs.
    pub fn describe(&self) -> String {
        let gens: Vec<String> = self
            .generators
            .iter()
            .map(|g| format!("{}={}", g.name, hex::encode(self.carrier.encoding(&g.elem))))
            .collect();
        format!("{}<{}>", self.carrier.describe(), gens.join(","))
    }
}
