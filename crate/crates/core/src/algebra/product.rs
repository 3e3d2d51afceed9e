//! Direct and permutational wreath products of carriers.

use super::perm::Permutation;
use super::{AlgebraError, CarrierKind, Group};

/// `A × B` with componentwise multiplication.
#[derive(Clone, Debug)]
pub struct DirectProduct<A: Group, B: Group> {
    pub left: A,
    pub right: B,
}

impl<A: Group, B: Group> DirectProduct<A, B> {
    pub fn new(left: A, right: B) -> Self {
        DirectProduct { left, right }
    }
}

impl<A: Group, B: Group> Group for DirectProduct<A, B> {
    type Elem = (A::Elem, B::Elem);

    fn identity(&self) -> Self::Elem {
        (self.left.identity(), self.right.identity())
    }

    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem {
        (self.left.mul(&a.0, &b.0), self.right.mul(&a.1, &b.1))
    }

    fn inv(&self, a: &Self::Elem) -> Self::Elem {
        (self.left.inv(&a.0), self.right.inv(&a.1))
    }

    fn encode(&self, a: &Self::Elem, out: &mut Vec<u8>) {
        self.left.encode(&a.0, out);
        self.right.encode(&a.1, out);
    }

    fn kind(&self) -> CarrierKind {
        CarrierKind::DirectProduct
    }

    fn describe(&self) -> String {
        format!("({})x({})", self.left.describe(), self.right.describe())
    }
}

/// An element `(f, g)` of `B ≀ Sym(k)`: a function on `{0,…,k−1}` and a coordinate permutation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WreathElem<E> {
    pub base: Vec<E>,
    pub top: Permutation,
}

/// The permutational wreath product `B ≀_k Sym(k)` with the right-action law
/// `(f,g)(f',g') = (x ↦ f(x)·f'(x·g), gg')`.
#[derive(Clone, Debug)]
pub struct Wreath<G: Group> {
    base: G,
    degree: usize,
}

impl<G: Group> Wreath<G> {
    pub fn new(base: G, degree: usize) -> Self {
        Wreath { base, degree }
    }

    pub fn base_group(&self) -> &G {
        &self.base
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Validates that the base function lives on the declared coordinates.
    pub fn element(&self, base: Vec<G::Elem>, top: Permutation) -> Result<WreathElem<G::Elem>, AlgebraError> {
        if base.len() != self.degree || top.degree() != self.degree {
            return Err(AlgebraError::Usage(format!(
                "wreath element has {} coordinates and top degree {}, expected {}",
                base.len(),
                top.degree(),
                self.degree
            )));
        }
        Ok(WreathElem { base, top })
    }

    /// A pure base element `(f, 1)`.
    pub fn base_element(&self, base: Vec<G::Elem>) -> Result<WreathElem<G::Elem>, AlgebraError> {
        self.element(base, Permutation::identity(self.degree))
    }

    /// A pure top element `(1, g)`.
    pub fn top_element(&self, top: Permutation) -> Result<WreathElem<G::Elem>, AlgebraError> {
        self.element(vec![self.base.identity(); self.degree], top)
    }
}

impl<G: Group> Group for Wreath<G> {
    type Elem = WreathElem<G::Elem>;

    fn identity(&self) -> Self::Elem {
        WreathElem { base: vec![self.base.identity(); self.degree], top: Permutation::identity(self.degree) }
    }

    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem {
        let base = (0..self.degree)
            .map(|x| self.base.mul(&a.base[x], &b.base[a.top.apply(x as u32) as usize]))
            .collect();
        WreathElem { base, top: a.top.mul_unchecked(&b.top) }
    }

    fn inv(&self, a: &Self::Elem) -> Self::Elem {
        let top = a.top.inverse();
        let base = (0..self.degree).map(|x| self.base.inv(&a.base[top.apply(x as u32) as usize])).collect();
        WreathElem { base, top }
    }

    fn encode(&self, a: &Self::Elem, out: &mut Vec<u8>) {
        for e in &a.base {
            self.base.encode(e, out);
        }
        for &x in a.top.images() {
            out.extend_from_slice(&(x as u16).to_le_bytes());
        }
    }

    fn kind(&self) -> CarrierKind {
        CarrierKind::Wreath
    }

    fn describe(&self) -> String {
        format!("({})wr{}", self.base.describe(), self.degree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::PermGroup;

    fn c2() -> PermGroup {
        PermGroup::new(2)
    }

    fn flip() -> Permutation {
        Permutation::from_cycles(2, &[&[0, 1]]).unwrap()
    }

    #[test]
    fn identity_is_neutral_in_wreath() {
        let w = Wreath::new(c2(), 2);
        let u = w.element(vec![flip(), Permutation::identity(2)], flip()).unwrap();
        assert_eq!(w.mul(&w.identity(), &u), u);
    }

    #[test]
    fn c2_wr_c2_square() {
        // ((1,0), swap)^2 = ((1,1), id)
        let w = Wreath::new(c2(), 2);
        let u = w.element(vec![flip(), Permutation::identity(2)], flip()).unwrap();
        let sq = w.mul(&u, &u);
        assert_eq!(sq, w.element(vec![flip(), flip()], Permutation::identity(2)).unwrap());
    }

    #[test]
    fn commutator_of_base_and_top() {
        // Oracle: [(f,1),(1,g)] has base x ↦ f(x)⁻¹ f(x·g⁻¹), expanded pointwise on 3 coordinates.
        let s3 = PermGroup::new(3);
        let w = Wreath::new(s3.clone(), 3);
        let f = vec![
            Permutation::from_cycles(3, &[&[0, 1]]).unwrap(),
            Permutation::from_cycles(3, &[&[0, 1, 2]]).unwrap(),
            Permutation::from_cycles(3, &[&[1, 2]]).unwrap(),
        ];
        let g = Permutation::from_cycles(3, &[&[0, 2, 1]]).unwrap();
        let a = w.base_element(f.clone()).unwrap();
        let b = w.top_element(g.clone()).unwrap();
        let c = w.commutator(&a, &b);
        assert!(c.top.is_identity());
        let gi = g.inverse();
        for x in 0..3u32 {
            let expect = s3.mul(&s3.inv(&f[x as usize]), &f[gi.apply(x) as usize]);
            assert_eq!(c.base[x as usize], expect);
        }
    }

    #[test]
    fn out_of_domain_support_is_rejected() {
        let w = Wreath::new(c2(), 3);
        assert!(matches!(w.element(vec![flip(); 2], Permutation::identity(3)), Err(AlgebraError::Usage(_))));
        assert!(matches!(w.element(vec![flip(); 3], Permutation::identity(2)), Err(AlgebraError::Usage(_))));
    }

    #[test]
    fn direct_product_componentwise() {
        let d = DirectProduct::new(c2(), PermGroup::new(3));
        let c3 = Permutation::from_cycles(3, &[&[0, 1, 2]]).unwrap();
        let x = (flip(), c3.clone());
        let y = d.mul(&x, &x);
        assert_eq!(y, (Permutation::identity(2), c3.inverse()));
        assert_eq!(d.mul(&d.identity(), &x), x);
        assert_eq!(d.mul(&x, &d.inv(&x)), d.identity());
    }

    #[test]
    fn wreath_associativity_and_inverse_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s3 = PermGroup::new(3);
        let w = Wreath::new(s3, 4);
        let rand_perm = |rng: &mut rand_chacha::ChaCha8Rng, k: usize| {
            let mut v: Vec<u32> = (0..k as u32).collect();
            for i in (1..k).rev() {
                v.swap(i, rng.gen_range(0..=i));
            }
            Permutation::from_images(v).unwrap()
        };
        for _ in 0..10_000 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let base = (0..4).map(|_| rand_perm(rng, 3)).collect();
                w.element(base, rand_perm(rng, 4)).unwrap()
            };
            let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            assert_eq!(w.mul(&w.mul(&a, &b), &c), w.mul(&a, &w.mul(&b, &c)));
            assert_eq!(w.mul(&a, &w.inv(&a)), w.identity());
            assert_eq!(w.inv(&w.inv(&a)), a);
        }
    }
}
