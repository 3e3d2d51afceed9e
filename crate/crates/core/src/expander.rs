//! The family `H_i = SL_3(F_p[t]/(t^i))`: construction, perfectness, Steinberg
//! relations, and spectral certificates bounding Euclidean distortion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{elementary_matrix, AlgebraError, Group, GroupHandle, Matrix3, MatrixGroup, Ring};
use crate::cayley::{bfs_closure, distance_histogram, far_fraction_from_histogram, CayleyError, CayleyGraph, Enumeration, SpectralData};
use crate::perfect::derived_subgroup;

#[derive(Debug, Error)]
pub enum ExpanderError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Cayley(#[from] CayleyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenSet {
    /// The six `X_{r,c}(1)`, plus `X_{1,2}(t)` from level 2 on.
    Small,
    /// Every non-identity constant matrix, plus `X_{1,2}(t)` from level 2 on.
    Large,
}

impl GenSet {
    pub fn name(self) -> &'static str {
        match self {
            GenSet::Small => "small",
            GenSet::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "small" => Some(GenSet::Small),
            "large" => Some(GenSet::Large),
            _ => None,
        }
    }
}

/// `|SL_3(F_p[t]/(t^i))| = |SL_3(F_p)| · p^{8(i−1)}`.
pub fn sl3_order(p: u64, level: u32) -> u64 {
    let q3 = p * p * p;
    (q3 - 1) * (q3 - p) * (q3 - p * p) / (p - 1) * p.pow(8 * (level - 1))
}

const OFF_DIAGONAL: [(usize, usize); 6] = [(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)];

/// Generators of `H_i` under the chosen set, in a fixed order.
pub fn sl3_generators(p: u32, level: u32, genset: GenSet) -> Result<GroupHandle<MatrixGroup>, ExpanderError> {
    let ring = Ring::new(p, level)?;
    let mut gens: Vec<(String, Matrix3)> = Vec::new();
    match genset {
        GenSet::Small => {
            for (a, b) in OFF_DIAGONAL {
                gens.push((format!("X{a}{b}"), elementary_matrix(a, b, &ring.one())?));
            }
        }
        GenSet::Large => {
            let small = sl3_generators(p, 1, GenSet::Small)?;
            let all = bfs_closure(&small, sl3_order(p as u64, 1) as usize)?;
            let mut consts: Vec<Matrix3> = all.elements.iter().skip(1).map(|m| lift_constant(m, &ring)).collect();
            consts.sort_by_key(|m| m.coefficients().to_vec());
            for (k, m) in consts.into_iter().enumerate() {
                gens.push((format!("A{k}"), m));
            }
        }
    }
    if level > 1 {
        gens.push(("X12t".into(), elementary_matrix(1, 2, &ring.t())?));
    }
    Ok(GroupHandle::new(MatrixGroup::new(ring), gens))
}

fn lift_constant(m: &Matrix3, ring: &Ring) -> Matrix3 {
    let mut entries: Vec<_> = Vec::with_capacity(9);
    for r in 0..3 {
        for c in 0..3 {
            entries.push(ring.constant(m.entry(r, c).coeffs()[0] as i64));
        }
    }
    let e = |i: usize| entries[i].clone();
    Matrix3::from_entries([[e(0), e(1), e(2)], [e(3), e(4), e(5)], [e(6), e(7), e(8)]]).expect("constant lift keeps det 1")
}

fn check_caps(p: u32, level: u32) -> Result<(), ExpanderError> {
    let ok = matches!((p, level), (2, 1) | (2, 2) | (3, 1));
    if ok {
        Ok(())
    } else {
        Err(ExpanderError::Usage(format!("SL3 over F{p}[t]/(t^{level}) exceeds the desk-scale caps (p=2 levels ≤ 2, p=3 level 1)")))
    }
}

/// Builds and fully enumerates `H_level`.
pub fn build_sl3(p: u32, level: u32, genset: GenSet, budget: usize) -> Result<Enumeration<MatrixGroup>, ExpanderError> {
    check_caps(p, level)?;
    let h = sl3_generators(p, level, genset)?;
    Ok(bfs_closure(&h, budget)?)
}

pub fn check_perfect<G: Group>(e: &Enumeration<G>) -> bool {
    derived_subgroup(e).is_perfect
}

/// Truncates level-`i` generators to level `i−1`, closes, and compares element
/// sets with the directly built lower level.
pub fn quotient_compatible(upper: &Enumeration<MatrixGroup>, lower: &Enumeration<MatrixGroup>) -> Result<bool, ExpanderError> {
    let ring = lower.handle().carrier().ring();
    let gens: Vec<(String, Matrix3)> = upper
        .handle()
        .generators()
        .iter()
        .map(|g| Ok((g.name.clone(), g.elem.truncate(ring)?)))
        .collect::<Result<_, AlgebraError>>()?;
    let image = bfs_closure(&GroupHandle::new(MatrixGroup::new(ring), gens), lower.order() + 1)?;
    if image.order() != lower.order() {
        return Ok(false);
    }
    Ok(image.elements.iter().all(|m| lower.index_of(m).is_some()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SteinbergReport {
    pub p: u32,
    pub level: u32,
    pub trials: usize,
    pub configurations: usize,
    pub checks: usize,
    pub failures: Vec<String>,
}

/// Checks `X_ij(P+Q) = X_ij(P)X_ij(Q)` and `X_ij(PQ) = [X_ik(P), X_kj(Q)]` over every
/// ordering `{i,j,k} = {1,2,3}` on random `(P, Q)`.
pub fn steinberg_check(ring: Ring, trials: usize, seed: u64) -> Result<SteinbergReport, ExpanderError> {
    let g = MatrixGroup::new(ring);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders = [(1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1)];
    let mut failures = Vec::new();
    let mut checks = 0;
    for trial in 0..trials {
        let pc: Vec<i64> = (0..ring.level()).map(|_| rng.gen_range(0..ring.p()) as i64).collect();
        let qc: Vec<i64> = (0..ring.level()).map(|_| rng.gen_range(0..ring.p()) as i64).collect();
        let (pp, qq) = (ring.element(&pc), ring.element(&qc));
        for &(i, j, k) in &orders {
            let sum = elementary_matrix(i, j, &pp.add(&qq)?)?;
            let prod = g.mul(&elementary_matrix(i, j, &pp)?, &elementary_matrix(i, j, &qq)?);
            checks += 1;
            if sum != prod {
                failures.push(format!("trial {trial}: X{i}{j}(P+Q) with P={pc:?} Q={qc:?}"));
            }
            let lhs = elementary_matrix(i, j, &pp.mul(&qq)?)?;
            let rhs = g.commutator(&elementary_matrix(i, k, &pp)?, &elementary_matrix(k, j, &qq)?);
            checks += 1;
            if lhs != rhs {
                failures.push(format!("trial {trial}: X{i}{j}(PQ) = [X{i}{k}(P), X{k}{j}(Q)] with P={pc:?} Q={qc:?}"));
            }
        }
    }
    Ok(SteinbergReport { p: ring.p(), level: ring.level(), trials, configurations: orders.len(), checks, failures })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub t: u32,
    #[serde(rename = "P_t")]
    pub p_t: f64,
    #[serde(rename = "M_t")]
    pub m_t: f64,
}

/// Poincaré data: every 1-Lipschitz map to a Euclidean space sends some pair at
/// distance `≥ t` to within `M(t) = sqrt(d_reg / (λ1·P_t))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralCertificate {
    pub p: u32,
    pub level: u32,
    pub genset: String,
    pub n: usize,
    pub d_reg: usize,
    pub lambda1: f64,
    pub residual: f64,
    pub diameter: u32,
    /// `C = d_reg / (2 λ1)`, a bound on the mean squared image norm after centering.
    pub c: f64,
    pub table: Vec<CertificateRow>,
    pub lower_bound: f64,
}

impl SpectralCertificate {
    /// `M(t)` for the least tabulated threshold `≥ t`; `None` beyond the diameter.
    pub fn m_at(&self, t: f64) -> Option<f64> {
        self.table.iter().find(|r| r.t as f64 >= t && r.p_t > 0.0).map(|r| r.m_t)
    }

    /// `M` at half the diameter: the per-level contribution to the family constant.
    pub fn m_half_diameter(&self) -> f64 {
        self.m_at((self.diameter as f64 / 2.0).ceil()).expect("half diameter is achieved")
    }
}

pub fn poincare_table(hist: &[u64], d_reg: usize, lambda1: f64) -> (Vec<CertificateRow>, f64) {
    let mut table = Vec::new();
    let mut lower = 0.0f64;
    for t in 1..hist.len() as u32 {
        let p_t = far_fraction_from_histogram(hist, t);
        if p_t <= 0.0 {
            continue;
        }
        let m_t = (d_reg as f64 / (lambda1 * p_t)).sqrt();
        lower = lower.max(t as f64 / m_t);
        table.push(CertificateRow { t, p_t, m_t });
    }
    (table, lower)
}

pub fn certificate(graph: &CayleyGraph, spectral: &SpectralData, p: u32, level: u32, genset: &str) -> Result<SpectralCertificate, ExpanderError> {
    if spectral.lambda1 <= 0.0 {
        return Err(ExpanderError::Usage("λ1 must be positive".into()));
    }
    let hist = distance_histogram(graph)?;
    let d_reg = graph.degree();
    let (table, lower_bound) = poincare_table(&hist, d_reg, spectral.lambda1);
    Ok(SpectralCertificate {
        p,
        level,
        genset: genset.into(),
        n: graph.vertex_count(),
        d_reg,
        lambda1: spectral.lambda1,
        residual: spectral.residual,
        diameter: (hist.len() - 1) as u32,
        c: d_reg as f64 / (2.0 * spectral.lambda1),
        table,
        lower_bound,
    })
}

/// The family constant: the largest per-level `M` at half the diameter.
pub fn family_constant(certs: &[SpectralCertificate]) -> f64 {
    certs.iter().map(|c| c.m_half_diameter()).fold(0.0, f64::max)
}
