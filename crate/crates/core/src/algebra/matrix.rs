//! 3×3 matrices over `F_p[t]/(t^i)` and the group `SL_3` they form.

use std::fmt;

use super::ring::{Ring, RingElement};
use super::{AlgebraError, CarrierKind, Group};

/// A 3×3 matrix stored row-major as `9 * level` coefficients.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matrix3 {
    ring: Ring,
    data: Vec<u32>,
}

impl fmt::Debug for Matrix3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for r in 0..3 {
            if r > 0 {
                write!(f, "; ")?;
            }
            for c in 0..3 {
                if c > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.entry(r, c))?;
            }
        }
        write!(f, "]")
    }
}

impl Matrix3 {
    pub fn identity(ring: Ring) -> Self {
        let mut m = Matrix3 { ring, data: vec![0; 9 * ring.level() as usize] };
        for i in 0..3 {
            let o = m.offset(i, i);
            m.data[o] = 1;
        }
        m
    }

    pub fn from_entries(entries: [[RingElement; 3]; 3]) -> Result<Self, AlgebraError> {
        let ring = entries[0][0].ring();
        let mut m = Matrix3 { ring, data: vec![0; 9 * ring.level() as usize] };
        for (r, row) in entries.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                if e.ring() != ring {
                    return Err(AlgebraError::ModulusMismatch);
                }
                m.set(r, c, e);
            }
        }
        Ok(m)
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    fn offset(&self, r: usize, c: usize) -> usize {
        (r * 3 + c) * self.ring.level() as usize
    }

    /// Entry at zero-based row `r`, column `c`.
    pub fn entry(&self, r: usize, c: usize) -> RingElement {
        let o = self.offset(r, c);
        let coeffs: Vec<i64> = self.data[o..o + self.ring.level() as usize].iter().map(|&x| x as i64).collect();
        self.ring.element(&coeffs)
    }

    fn set(&mut self, r: usize, c: usize, e: &RingElement) {
        let o = self.offset(r, c);
        let l = self.ring.level() as usize;
        self.data[o..o + l].copy_from_slice(e.coeffs());
    }

    pub fn coefficients(&self) -> &[u32] {
        &self.data
    }

    pub fn is_identity(&self) -> bool {
        *self == Matrix3::identity(self.ring)
    }

    pub fn mul(&self, other: &Matrix3) -> Result<Matrix3, AlgebraError> {
        if self.ring != other.ring {
            return Err(AlgebraError::ModulusMismatch);
        }
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Matrix3) -> Matrix3 {
        let l = self.ring.level() as usize;
        let p = self.ring.p() as u64;
        let mut acc = vec![0u64; 9 * l];
        for r in 0..3 {
            for k in 0..3 {
                let a = &self.data[(r * 3 + k) * l..(r * 3 + k + 1) * l];
                if a.iter().all(|&x| x == 0) {
                    continue;
                }
                for c in 0..3 {
                    let b = &other.data[(k * 3 + c) * l..(k * 3 + c + 1) * l];
                    let out = &mut acc[(r * 3 + c) * l..(r * 3 + c + 1) * l];
                    for (i, &ai) in a.iter().enumerate() {
                        if ai == 0 {
                            continue;
                        }
                        for (j, &bj) in b[..l - i].iter().enumerate() {
                            out[i + j] += ai as u64 * bj as u64;
                        }
                    }
                }
            }
        }
        Matrix3 { ring: self.ring, data: acc.into_iter().map(|x| (x % p) as u32).collect() }
    }

    pub fn determinant(&self) -> RingElement {
        let e = |r, c| self.entry(r, c);
        let minor = |r0: usize, r1: usize, c0: usize, c1: usize| {
            e(r0, c0).mul_unchecked(&e(r1, c1)).sub(&e(r0, c1).mul_unchecked(&e(r1, c0))).unwrap()
        };
        let t0 = e(0, 0).mul_unchecked(&minor(1, 2, 1, 2));
        let t1 = e(0, 1).mul_unchecked(&minor(1, 2, 0, 2));
        let t2 = e(0, 2).mul_unchecked(&minor(1, 2, 0, 1));
        t0.sub(&t1).unwrap().add_unchecked(&t2)
    }

    /// Classical adjugate: transpose of the cofactor matrix.
    pub fn adjugate(&self) -> Matrix3 {
        let e = |r, c| self.entry(r, c);
        let mut out = Matrix3::identity(self.ring);
        for r in 0..3 {
            for c in 0..3 {
                let rows: Vec<usize> = (0..3).filter(|&x| x != r).collect();
                let cols: Vec<usize> = (0..3).filter(|&x| x != c).collect();
                let m = e(rows[0], cols[0])
                    .mul_unchecked(&e(rows[1], cols[1]))
                    .sub(&e(rows[0], cols[1]).mul_unchecked(&e(rows[1], cols[0])))
                    .unwrap();
                let cof = if (r + c) % 2 == 0 { m } else { m.neg() };
                out.set(c, r, &cof);
            }
        }
        out
    }

    /// Inverse via adjugate times `det^{-1}`; only defined for `det = 1`.
    pub fn inverse(&self) -> Result<Matrix3, AlgebraError> {
        let det = self.determinant();
        if !det.is_one() {
            return Err(AlgebraError::InvalidElement(format!("determinant {det} is not 1")));
        }
        Ok(self.adjugate())
    }

    /// Reduces every entry to a lower truncation level of the same prime.
    pub fn truncate(&self, ring: Ring) -> Result<Matrix3, AlgebraError> {
        let mut out = Matrix3::identity(ring);
        for r in 0..3 {
            for c in 0..3 {
                out.set(r, c, &ring.truncate(&self.entry(r, c))?);
            }
        }
        Ok(out)
    }
}

/// `X_{r,c}(P)`: the identity plus `P` at (row, col), one-based as in the usual notation.
pub fn elementary_matrix(row: usize, col: usize, value: &RingElement) -> Result<Matrix3, AlgebraError> {
    if row == col || !(1..=3).contains(&row) || !(1..=3).contains(&col) {
        return Err(AlgebraError::Usage(format!("elementary matrix needs distinct indices in 1..=3, got ({row},{col})")));
    }
    let mut m = Matrix3::identity(value.ring());
    m.set(row - 1, col - 1, value);
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixOp {
    Mul,
    Inv,
}

/// Product or inverse of `SL_3` elements; rejects operands whose determinant is not 1.
pub fn matrix_op(op: MatrixOp, a: &Matrix3, b: Option<&Matrix3>) -> Result<Matrix3, AlgebraError> {
    let check = |m: &Matrix3| {
        let d = m.determinant();
        if d.is_one() {
            Ok(())
        } else {
            Err(AlgebraError::InvalidElement(format!("determinant {d} is not 1")))
        }
    };
    check(a)?;
    match op {
        MatrixOp::Inv => a.inverse(),
        MatrixOp::Mul => {
            let b = b.ok_or_else(|| AlgebraError::Usage("matrix product needs two operands".into()))?;
            check(b)?;
            a.mul(b)
        }
    }
}

/// `SL_3` over a truncated polynomial ring, as a group carrier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixGroup {
    ring: Ring,
}

impl MatrixGroup {
    pub fn new(ring: Ring) -> Self {
        MatrixGroup { ring }
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }
}

impl Group for MatrixGroup {
    type Elem = Matrix3;

    fn identity(&self) -> Matrix3 {
        Matrix3::identity(self.ring)
    }

    fn mul(&self, a: &Matrix3, b: &Matrix3) -> Matrix3 {
        a.mul_unchecked(b)
    }

    fn inv(&self, a: &Matrix3) -> Matrix3 {
        a.adjugate()
    }

    fn encode(&self, a: &Matrix3, out: &mut Vec<u8>) {
        for &c in &a.data {
            out.extend_from_slice(&(c as u16).to_le_bytes());
        }
    }

    fn kind(&self) -> CarrierKind {
        CarrierKind::Matrix
    }

    fn describe(&self) -> String {
        format!("SL3({})", self.ring)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(p: u32, l: u32) -> Ring {
        Ring::new(p, l).unwrap()
    }

    /// Schoolbook product written independently of `mul_unchecked`.
    fn naive_mul(a: &Matrix3, b: &Matrix3) -> Matrix3 {
        let r = a.ring();
        let mut rows: Vec<[RingElement; 3]> = Vec::new();
        for i in 0..3 {
            let row: [RingElement; 3] = std::array::from_fn(|j| {
                let mut s = r.zero();
                for k in 0..3 {
                    s = s.add(&a.entry(i, k).mul(&b.entry(k, j)).unwrap()).unwrap();
                }
                s
            });
            rows.push(row);
        }
        let [r0, r1, r2]: [[RingElement; 3]; 3] = rows.try_into().unwrap();
        Matrix3::from_entries([r0, r1, r2]).unwrap()
    }

    fn commutator(a: &Matrix3, b: &Matrix3) -> Matrix3 {
        let ai = a.inverse().unwrap();
        let bi = b.inverse().unwrap();
        ai.mul(&bi).unwrap().mul(a).unwrap().mul(b).unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let r = ring(3, 2);
        let a = elementary_matrix(2, 3, &r.element(&[2, 1])).unwrap();
        let i = Matrix3::identity(r);
        assert_eq!(matrix_op(MatrixOp::Mul, &i, Some(&a)).unwrap(), a);
    }

    #[test]
    fn elementary_inverse_negates() {
        let r = ring(3, 2);
        let p = r.element(&[1, 2]);
        let x = elementary_matrix(1, 2, &p).unwrap();
        assert_eq!(matrix_op(MatrixOp::Inv, &x, None).unwrap(), elementary_matrix(1, 2, &p.neg()).unwrap());
    }

    #[test]
    fn product_matches_schoolbook_and_commutator() {
        let r = ring(2, 1);
        let one = r.one();
        let a = elementary_matrix(1, 2, &one).unwrap();
        let b = elementary_matrix(2, 3, &one).unwrap();
        let ab = a.mul(&b).unwrap();
        assert_eq!(ab, naive_mul(&a, &b));
        // [[1,1,0],[0,1,0],[0,0,1]] * [[1,0,0],[0,1,1],[0,0,1]] = [[1,1,1],[0,1,1],[0,0,1]]
        assert_eq!(ab.entry(0, 1), one);
        assert_eq!(ab.entry(1, 2), one);
        assert_eq!(ab.entry(0, 2), one);
        assert_eq!(commutator(&a, &b), elementary_matrix(1, 3, &one).unwrap());
    }

    #[test]
    fn elementary_matrix_laws() {
        let r = ring(2, 2);
        assert!(elementary_matrix(1, 2, &r.zero()).unwrap().is_identity());
        let p = r.t();
        let q = r.element(&[1, 1]);
        let lhs = elementary_matrix(1, 2, &p.add(&q).unwrap()).unwrap();
        let rhs = elementary_matrix(1, 2, &p).unwrap().mul(&elementary_matrix(1, 2, &q).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        let xt = elementary_matrix(1, 2, &r.t()).unwrap();
        assert!(!xt.is_identity());
        assert!(xt.mul(&xt).unwrap().is_identity());
        assert!(matches!(elementary_matrix(2, 2, &p), Err(AlgebraError::Usage(_))));
    }

    #[test]
    fn determinant_guard() {
        let r = ring(3, 1);
        let mut entries: [[RingElement; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { r.one() } else { r.zero() }));
        entries[0][0] = r.constant(2);
        let m = Matrix3::from_entries(entries).unwrap();
        assert!(matches!(matrix_op(MatrixOp::Inv, &m, None), Err(AlgebraError::InvalidElement(_))));
    }

    #[test]
    fn adjugate_inverse_on_random_products() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for (p, l) in [(2, 2), (3, 2), (5, 1)] {
            let r = ring(p, l);
            let elems: Vec<RingElement> = r.elements().collect();
            for _ in 0..200 {
                let mut m = Matrix3::identity(r);
                for _ in 0..6 {
                    let (row, col) = [(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)][rng.gen_range(0..6)];
                    let v = &elems[rng.gen_range(0..elems.len())];
                    m = m.mul(&elementary_matrix(row, col, v).unwrap()).unwrap();
                }
                assert!(m.determinant().is_one());
                assert!(m.mul(&m.inverse().unwrap()).unwrap().is_identity());
                assert_eq!(naive_mul(&m, &m), m.mul(&m).unwrap());
            }
        }
    }
}
