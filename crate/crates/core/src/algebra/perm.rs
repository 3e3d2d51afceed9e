use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AlgebraError, CarrierKind, Group};

/// A permutation of `{0, …, k−1}` stored as its image table.
///
/// Points are acted on from the right: `x·(a·b) = (x·a)·b`, so the product
/// `a·b` applies `a` first.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Permutation {
    images: Vec<u32>,
}

impl TryFrom<Vec<u32>> for Permutation {
    type Error = AlgebraError;

    fn try_from(images: Vec<u32>) -> Result<Self, AlgebraError> {
        Permutation::from_images(images)
    }
}

impl From<Permutation> for Vec<u32> {
    fn from(p: Permutation) -> Vec<u32> {
        p.images
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.cycle_string())
    }
}

impl Permutation {
    pub fn identity(degree: usize) -> Self {
        Permutation { images: (0..degree as u32).collect() }
    }

    pub fn from_images(images: Vec<u32>) -> Result<Self, AlgebraError> {
        let mut seen = vec![false; images.len()];
        for &x in &images {
            let x = x as usize;
            if x >= images.len() || seen[x] {
                return Err(AlgebraError::InvalidElement(format!("{images:?} is not a bijection")));
            }
            seen[x] = true;
        }
        Ok(Permutation { images })
    }

    /// Builds a permutation from disjoint cycles.
    pub fn from_cycles(degree: usize, cycles: &[&[u32]]) -> Result<Self, AlgebraError> {
        let mut images: Vec<u32> = (0..degree as u32).collect();
        for cycle in cycles {
            for (k, &x) in cycle.iter().enumerate() {
                let next = cycle[(k + 1) % cycle.len()];
                if x as usize >= degree || next as usize >= degree {
                    return Err(AlgebraError::Usage(format!("cycle point out of range for degree {degree}")));
                }
                images[x as usize] = next;
            }
        }
        Permutation::from_images(images)
    }

    /// The cyclic shift `x ↦ x + step (mod degree)`.
    pub fn rotation(degree: usize, step: i64) -> Self {
        let n = degree as i64;
        Permutation { images: (0..n).map(|x| (x + step).rem_euclid(n) as u32).collect() }
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[u32] {
        &self.images
    }

    /// The image `x·self`.
    pub fn apply(&self, x: u32) -> u32 {
        self.images[x as usize]
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &x)| i as u32 == x)
    }

    pub fn mul(&self, other: &Permutation) -> Result<Permutation, AlgebraError> {
        if self.degree() != other.degree() {
            return Err(AlgebraError::Usage(format!("degree mismatch {} vs {}", self.degree(), other.degree())));
        }
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Permutation) -> Permutation {
        Permutation { images: self.images.iter().map(|&x| other.images[x as usize]).collect() }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0u32; self.images.len()];
        for (i, &x) in self.images.iter().enumerate() {
            inv[x as usize] = i as u32;
        }
        Permutation { images: inv }
    }

    pub fn order(&self) -> u64 {
        let mut seen = vec![false; self.degree()];
        let mut order = 1u64;
        for start in 0..self.degree() {
            if seen[start] {
                continue;
            }
            let mut len = 0u64;
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                x = self.images[x] as usize;
                len += 1;
            }
            order = lcm(order, len);
        }
        order
    }

    pub fn cycle_string(&self) -> String {
        let mut seen = vec![false; self.degree()];
        let mut out = String::new();
        for start in 0..self.degree() {
            if seen[start] || self.images[start] as usize == start {
                continue;
            }
            out.push('(');
            let mut x = start;
            let mut first = true;
            while !seen[x] {
                seen[x] = true;
                if !first {
                    out.push(' ');
                }
                out.push_str(&x.to_string());
                first = false;
                x = self.images[x] as usize;
            }
            out.push(')');
        }
        if out.is_empty() {
            "()".into()
        } else {
            out
        }
    }
}

pub(crate) fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PermOp {
    Mul,
    Inv,
}

pub fn perm_compose(op: PermOp, a: &Permutation, b: Option<&Permutation>) -> Result<Permutation, AlgebraError> {
    match op {
        PermOp::Inv => Ok(a.inverse()),
        PermOp::Mul => a.mul(b.ok_or_else(|| AlgebraError::Usage("permutation product needs two operands".into()))?),
    }
}

/// The symmetric group on `degree` points as a carrier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermGroup {
    degree: usize,
}

impl PermGroup {
    pub fn new(degree: usize) -> Self {
        PermGroup { degree }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }
}

impl Group for PermGroup {
    type Elem = Permutation;

    fn identity(&self) -> Permutation {
        Permutation::identity(self.degree)
    }

    fn mul(&self, a: &Permutation, b: &Permutation) -> Permutation {
        a.mul_unchecked(b)
    }

    fn inv(&self, a: &Permutation) -> Permutation {
        a.inverse()
    }

    fn encode(&self, a: &Permutation, out: &mut Vec<u8>) {
        if self.degree <= 256 {
            out.extend(a.images.iter().map(|&x| x as u8));
        } else {
            for &x in &a.images {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }

    fn kind(&self) -> CarrierKind {
        CarrierKind::Permutation
    }

    fn describe(&self) -> String {
        format!("Sym({})", self.degree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_neutral() {
        let s = Permutation::from_cycles(4, &[&[0, 2, 3]]).unwrap();
        assert_eq!(perm_compose(PermOp::Mul, &Permutation::identity(4), Some(&s)).unwrap(), s);
    }

    #[test]
    fn transposition_product_under_right_action() {
        // x·(a·b) = b(a(x)): 0 -> 1 -> 2, 1 -> 0 -> 0, 2 -> 2 -> 1.
        let a = Permutation::from_cycles(3, &[&[0, 1]]).unwrap();
        let b = Permutation::from_cycles(3, &[&[1, 2]]).unwrap();
        let ab = perm_compose(PermOp::Mul, &a, Some(&b)).unwrap();
        assert_eq!(ab.images(), &[2, 0, 1]);
        assert_eq!(ab, Permutation::from_cycles(3, &[&[0, 2, 1]]).unwrap());
        // The opposite order gives the other 3-cycle.
        assert_eq!(b.mul(&a).unwrap(), Permutation::from_cycles(3, &[&[0, 1, 2]]).unwrap());
    }

    #[test]
    fn inverse_reverses_cycle() {
        let c = Permutation::from_cycles(3, &[&[0, 1, 2]]).unwrap();
        assert_eq!(perm_compose(PermOp::Inv, &c, None).unwrap(), Permutation::from_cycles(3, &[&[0, 2, 1]]).unwrap());
    }

    #[test]
    fn degree_mismatch_and_bad_tables() {
        let a = Permutation::identity(3);
        let b = Permutation::identity(4);
        assert!(matches!(a.mul(&b), Err(AlgebraError::Usage(_))));
        assert!(Permutation::from_images(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_images(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn orders() {
        assert_eq!(Permutation::from_cycles(5, &[&[0, 1], &[2, 3, 4]]).unwrap().order(), 6);
        assert_eq!(Permutation::rotation(7, 3).order(), 7);
        assert_eq!(Permutation::identity(2).order(), 1);
    }
}
