//! Truncated polynomial rings `F_p[t]/(t^level)` over a prime field.

use std::fmt;

use super::AlgebraError;

/// The ring `F_p[t]/(t^level)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ring {
    p: u32,
    level: u32,
}

impl Ring {
    pub fn new(p: u32, level: u32) -> Result<Self, AlgebraError> {
        if !is_prime(p) {
            return Err(AlgebraError::Usage(format!("modulus {p} is not prime")));
        }
        if p > u16::MAX as u32 {
            return Err(AlgebraError::Usage(format!("modulus {p} exceeds u16 range")));
        }
        if level == 0 {
            return Err(AlgebraError::Usage("truncation level must be >= 1".into()));
        }
        Ok(Ring { p, level })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of elements, `p^level`.
    pub fn order(&self) -> u64 {
        (self.p as u64).pow(self.level)
    }

    pub fn zero(&self) -> RingElement {
        RingElement { ring: *self, coeffs: vec![0; self.level as usize] }
    }

    pub fn one(&self) -> RingElement {
        self.constant(1)
    }

    pub fn constant(&self, c: i64) -> RingElement {
        let mut e = self.zero();
        e.coeffs[0] = c.rem_euclid(self.p as i64) as u32;
        e
    }

    /// The class of `t` (zero when `level == 1`).
    pub fn t(&self) -> RingElement {
        let mut e = self.zero();
        if self.level > 1 {
            e.coeffs[1] = 1;
        }
        e
    }

    /// Builds an element from coefficients of `t^0, t^1, ...`; missing terms are zero and
    /// terms at or beyond `t^level` are discarded.
    pub fn element(&self, coeffs: &[i64]) -> RingElement {
        let mut e = self.zero();
        for (slot, &c) in e.coeffs.iter_mut().zip(coeffs) {
            *slot = c.rem_euclid(self.p as i64) as u32;
        }
        e
    }

    /// Enumerates every element in lexicographic coefficient order.
    pub fn elements(&self) -> impl Iterator<Item = RingElement> + '_ {
        (0..self.order()).map(move |mut k| {
            let mut e = self.zero();
            for c in e.coeffs.iter_mut() {
                *c = (k % self.p as u64) as u32;
                k /= self.p as u64;
            }
            e
        })
    }

    /// Reduces the coefficient vector of a ring at a higher level to this one.
    pub fn truncate(&self, x: &RingElement) -> Result<RingElement, AlgebraError> {
        if x.ring.p != self.p || x.ring.level < self.level {
            return Err(AlgebraError::ModulusMismatch);
        }
        Ok(RingElement { ring: *self, coeffs: x.coeffs[..self.level as usize].to_vec() })
    }
}

impl fmt::Display for Ring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.level == 1 {
            write!(f, "F{}", self.p)
        } else {
            write!(f, "F{}[t]/(t^{})", self.p, self.level)
        }
    }
}

pub(crate) fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u32;
    while (d as u64) * (d as u64) <= p as u64 {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// An element of `F_p[t]/(t^level)`, stored as `level` residues.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RingElement {
    ring: Ring,
    coeffs: Vec<u32>,
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms = Vec::new();
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            terms.push(match (k, c) {
                (0, c) => format!("{c}"),
                (1, 1) => "t".to_string(),
                (1, c) => format!("{c}t"),
                (k, 1) => format!("t^{k}"),
                (k, c) => format!("{c}t^{k}"),
            });
        }
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join("+"))
        }
    }
}

impl RingElement {
    pub fn ring(&self) -> Ring {
        self.ring
    }

    pub fn coeffs(&self) -> &[u32] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    pub fn is_one(&self) -> bool {
        self.coeffs[0] == 1 && self.coeffs[1..].iter().all(|&c| c == 0)
    }

    /// Units of the local ring are exactly the elements with nonzero constant term.
    pub fn is_unit(&self) -> bool {
        self.coeffs[0] != 0
    }

    fn check(&self, other: &RingElement) -> Result<(), AlgebraError> {
        if self.ring != other.ring {
            Err(AlgebraError::ModulusMismatch)
        } else {
            Ok(())
        }
    }

    pub fn add(&self, other: &RingElement) -> Result<RingElement, AlgebraError> {
        self.check(other)?;
        Ok(self.add_unchecked(other))
    }

    pub fn sub(&self, other: &RingElement) -> Result<RingElement, AlgebraError> {
        self.check(other)?;
        Ok(self.add_unchecked(&other.neg()))
    }

    pub fn mul(&self, other: &RingElement) -> Result<RingElement, AlgebraError> {
        self.check(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub fn neg(&self) -> RingElement {
        let p = self.ring.p;
        RingElement {
            ring: self.ring,
            coeffs: self.coeffs.iter().map(|&c| (p - c) % p).collect(),
        }
    }

    /// Multiplicative inverse; fails when the constant term vanishes.
    pub fn inv(&self) -> Result<RingElement, AlgebraError> {
        if !self.is_unit() {
            return Err(AlgebraError::NotInvertible(self.to_string()));
        }
        let p = self.ring.p as u64;
        let n = self.coeffs.len();
        let a0_inv = pow_mod(self.coeffs[0] as u64, p - 2, p);
        // Solve (a * b) = 1 coefficient by coefficient.
        let mut b = vec![0u64; n];
        b[0] = a0_inv;
        for k in 1..n {
            let mut s = 0u64;
            for j in 1..=k {
                s = (s + self.coeffs[j] as u64 * b[k - j]) % p;
            }
            b[k] = (p - s) % p * a0_inv % p;
        }
        Ok(RingElement { ring: self.ring, coeffs: b.into_iter().map(|c| c as u32).collect() })
    }

    pub(crate) fn add_unchecked(&self, other: &RingElement) -> RingElement {
        let p = self.ring.p;
        RingElement {
            ring: self.ring,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| (a + b) % p).collect(),
        }
    }

    pub(crate) fn mul_unchecked(&self, other: &RingElement) -> RingElement {
        let p = self.ring.p as u64;
        let n = self.coeffs.len();
        let mut out = vec![0u64; n];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.coeffs[..n - i].iter().enumerate() {
                out[i + j] += a as u64 * b as u64;
            }
        }
        RingElement { ring: self.ring, coeffs: out.into_iter().map(|c| (c % p) as u32).collect() }
    }
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        exp >>= 1;
    }
    acc
}

/// The four ring operations behind one dispatch, for callers driven by data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RingOp {
    Add,
    Mul,
    Neg,
    Inv,
}

pub fn ring_arith(op: RingOp, a: &RingElement, b: Option<&RingElement>) -> Result<RingElement, AlgebraError> {
    let need = || b.ok_or_else(|| AlgebraError::Usage("binary ring operation needs two operands".into()));
    match op {
        RingOp::Add => a.add(need()?),
        RingOp::Mul => a.mul(need()?),
        RingOp::Neg => Ok(a.neg()),
        RingOp::Inv => a.inv(),
    }
}
