//! End-to-end runs: certificates for a family of `SL_3` groups, a toy wreath
//! plan for the bi-Lipschitz constants, the greedy selection ledger and a
//! report bundle.

pub mod config;
pub mod ledger;
pub mod report;
pub mod rho;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::algebra::{GroupHandle, PermGroup, Permutation};
use crate::cayley::{bfs_closure, cache_key, CayleyError, GraphCache, SpectralOptions};
use crate::distortion::{compare_profiles, frechet_embedding, graph_profile, DistortionError, DistortionProfile};
use crate::expander::{build_sl3, certificate, ExpanderError, GenSet};
use crate::perfect::{compute_j, derived_subgroup, PerfectNormError};
use crate::wreath::{build_psi, configure_plan, default_eps, measure_bilipschitz, verify_ball_coincidence, Factor, PlanReport, WreathError};

pub use config::Config;
pub use ledger::{select_indices, FamilyMember, Provenance, RoundConstants, SelectionLedger, Sourced};
pub use report::{LedgerDocument, ProfileRecord, ReportBundle, ReportFormat};
pub use rho::{check_rho, parse_rho, RhoError, RhoExpression};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("internal assertion failed: {0}")]
    Internal(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Rho(#[from] RhoError),
    #[error(transparent)]
    Expander(#[from] ExpanderError),
    #[error(transparent)]
    Cayley(#[from] CayleyError),
    #[error(transparent)]
    Perfect(#[from] PerfectNormError),
    #[error(transparent)]
    Wreath(#[from] WreathError),
    #[error(transparent)]
    Distortion(#[from] DistortionError),
}

impl PipelineError {
    /// 3 for configuration, precondition and I/O problems, 4 for failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Precondition(_) | PipelineError::Io { .. } | PipelineError::Rho(_) => 3,
            PipelineError::Expander(ExpanderError::Usage(_) | ExpanderError::Cayley(CayleyError::PartialClosure { .. })) | PipelineError::Cayley(CayleyError::PartialClosure { .. }) => 3,
            PipelineError::Perfect(PerfectNormError::BeyondBudget { .. }) | PipelineError::Wreath(WreathError::Budget(_) | WreathError::Unresolved { .. }) => 3,
            _ => 4,
        }
    }
}

pub const EXIT_PARTIAL: i32 = 2;

/// `C<k>` (cyclic, one generator) or `S<k>` (a transposition and a `k`-cycle).
pub fn toy_factor(name: &str) -> Result<Factor, PipelineError> {
    let bad = || PipelineError::Config(format!("unknown factor {name:?} (expected C<k> or S<k>, k ≤ 6)"));
    let k: usize = name.get(1..).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if !(2..=6).contains(&k) {
        return Err(bad());
    }
    let gens = match &name[..1] {
        "C" => vec![("t".to_string(), Permutation::rotation(k, 1))],
        "S" => vec![("s".to_string(), Permutation::from_cycles(k, &[&[0, 1]]).unwrap()), ("r".to_string(), Permutation::rotation(k, 1))],
        _ => return Err(bad()),
    };
    let e = bfs_closure(&GroupHandle::new(PermGroup::new(k), gens), 1000)?;
    Ok(Factor::from_enumeration(name, &e)?)
}

/// A family entry `sl3:p:level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FamilySpec {
    pub p: u32,
    pub level: u32,
}

impl FamilySpec {
    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts[..] {
            ["sl3", p, l] => match (p.parse(), l.parse()) {
                (Ok(p), Ok(level)) => Ok(FamilySpec { p, level }),
                _ => Err(PipelineError::Config(format!("bad family entry {s:?}"))),
            },
            _ => Err(PipelineError::Config(format!("bad family entry {s:?} (expected sl3:p:level)"))),
        }
    }

    pub fn name(&self) -> String {
        format!("sl3-p{}-l{}", self.p, self.level)
    }
}

/// A computed family member with its seeded profile.
pub struct MemberRun {
    pub member: FamilyMember,
    pub profile: DistortionProfile,
    pub record: ProfileRecord,
    pub cache_entry: Option<(String, String)>,
}

/// Builds the certificate, `J` and a Fréchet profile compared against `ρ`.
pub fn build_member(index: usize, spec: FamilySpec, cfg: &Config, rho: &RhoExpression, cache: Option<&GraphCache>) -> Result<MemberRun, PipelineError> {
    let seed: u64 = cfg.get("global.seed")?;
    let budget: usize = cfg.get("global.budget_elements")?;
    let genset = GenSet::parse(cfg.raw("pipeline.genset")).ok_or_else(|| PipelineError::Config(format!("unknown generating set {:?}", cfg.raw("pipeline.genset"))))?;
    let e = build_sl3(spec.p, spec.level, genset, budget)?;
    let g = &e.graph;
    let cache_entry = match cache {
        Some(c) => {
            let key = cache_key(e.handle(), budget);
            let path = match c.get(&key)? {
                Some(_) => c.path_for(&key),
                None => c.put(&key, g)?,
            };
            let bytes = std::fs::read(&path).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
            Some((format!("{key}.cayg"), report::sha256_hex(&bytes)))
        }
        None => None,
    };
    let opts = SpectralOptions { tol: cfg.get("global.tol")?, seed, ..Default::default() };
    let spectral = crate::cayley::spectral_gap(g, &opts)?;
    let cert = certificate(g, &spectral, spec.p, spec.level, genset.name())?;
    let derived = derived_subgroup(&e);
    if derived.order() != e.order() {
        return Err(PipelineError::Precondition(format!("{} is not perfect", spec.name())));
    }
    let j = compute_j(&e, &derived, cfg.get("pipeline.j_cap")?)?;
    let member = FamilyMember {
        index,
        name: spec.name(),
        generator_count: e.handle().generator_count(),
        j: Sourced::computed(j.j),
        certificate: cert,
    };
    let dim: usize = cfg.get("distortion.frechet_dim")?;
    let rows: usize = cfg.get("distortion.profile_rows")?;
    let member_seed = seed.wrapping_add(index as u64);
    let phi = frechet_embedding(g, dim, member_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(member_seed);
    let n = g.vertex_count();
    let mut sources: Vec<usize> = if rows >= n { (0..n).collect() } else { sample(&mut rng, n, rows).into_vec() };
    sources.sort_unstable();
    let profile = graph_profile(g, &phi, &sources, true)?;
    let raw = graph_profile(g, &phi, &sources[..1], false)?;
    let eval = |t: f64| rho.eval(t).unwrap_or(f64::NAN);
    let comparison = compare_profiles(&profile, eval, member.certificate.diameter as f64);
    let record = ProfileRecord { member: member.name.clone(), seed: member_seed, dimension: dim, rows_sampled: sources.len(), lipschitz: raw.lipschitz, comparison };
    Ok(MemberRun { member, profile, record, cache_entry })
}

/// The toy wreath plan: placement, `Ψ` for every factor, bi-Lipschitz
/// measurement and a coincidence check on the last two positions.
pub fn build_wreath_plan(cfg: &Config) -> Result<(PlanReport, usize), PipelineError> {
    let factors = cfg.raw("wreath.factors").split(',').map(|f| toy_factor(f.trim())).collect::<Result<Vec<_>, _>>()?;
    let count = factors.len();
    let mut sys = configure_plan(factors, None)?;
    let radii: Vec<u32> = cfg.list("wreath.radii")?;
    sys.place_by_radii(&radii, cfg.get("wreath.cap")?)?;
    let max_len: usize = cfg.get("wreath.rectifier_length")?;
    let states: usize = cfg.get("wreath.state_budget")?;
    let radius: u32 = cfg.get("wreath.measure_radius")?;
    let ball_budget: usize = cfg.get("wreath.ball_budget")?;
    let mut report = PlanReport::default();
    let mut l_prime = 0;
    for s in 0..count {
        let psi = build_psi(&sys, s, max_len, states)?;
        l_prime = l_prime.max(psi.l_prime);
        report.rectifiers.extend(psi.records.iter().cloned());
        report.bilipschitz.push(measure_bilipschitz(&sys, &psi, radius, ball_budget, 40)?);
    }
    let positions = sys.plan.positions();
    if positions >= 2 {
        let m = sys.plan.m[positions - 2];
        let c = verify_ball_coincidence(&sys, positions - 1, m, ball_budget)?;
        if !c.coincide {
            return Err(PipelineError::Internal(format!("balls of W_{} and W_{} differ at radius {m}", positions - 1, positions)));
        }
        report.coincidence.push(c);
    }
    report.l_prime = Some(l_prime);
    report.plan = Some(sys.plan);
    Ok((report, l_prime))
}

/// Constants for rounds `1..=count`: `ε`, `m`, `n` from the plan positions
/// (configured continuation beyond them) and the envelope `(1, 2L′ + 1)`.
pub fn round_constants(plan: &PlanReport, l_prime: usize, count: usize) -> Vec<RoundConstants> {
    let p = plan.plan.as_ref();
    let eps_default = default_eps(count);
    (0..count)
        .map(|k| {
            let placed = p.filter(|p| k < p.n.len());
            let last_m = p.and_then(|p| p.m.last().copied()).unwrap_or(1);
            let extra = p.map_or(k + 1, |p| k + 1 - p.n.len().min(k + 1)) as u32;
            RoundConstants {
                eps: match placed {
                    Some(p) => Sourced::configured(p.eps[k]),
                    None => Sourced::configured(eps_default[k]),
                },
                m: match placed {
                    Some(p) => Sourced::configured(p.m[k]),
                    None => Sourced::configured(last_m + extra),
                },
                n: placed.map(|p| Sourced::computed(p.n[k])),
                l_prime: Sourced::computed(l_prime),
                k: Sourced::envelope(1.0),
                l: Sourced::envelope((2 * l_prime + 1) as f64),
            }
        })
        .collect()
}

pub struct PipelineRun {
    pub bundle: ReportBundle,
    pub rho: RhoExpression,
}

impl PipelineRun {
    pub fn complete(&self) -> bool {
        self.bundle.document.ledger.complete
    }

    pub fn exit_code(&self) -> i32 {
        if self.complete() {
            0
        } else {
            EXIT_PARTIAL
        }
    }
}

/// Runs the whole pipeline. Family members are built concurrently; the ledger
/// is assembled afterwards in round order.
pub fn run_pipeline(cfg: &Config, cache: Option<&GraphCache>) -> Result<PipelineRun, PipelineError> {
    let rho = parse_rho(cfg.raw("pipeline.rho"))?;
    let horizon: u64 = cfg.get("pipeline.horizon")?;
    let rho_check = check_rho(&rho, horizon as f64)?;
    let rounds: usize = cfg.get("pipeline.rounds")?;
    let specs = cfg.raw("pipeline.family").split(',').map(FamilySpec::parse).collect::<Result<Vec<_>, _>>()?;
    let (plan, results) = std::thread::scope(|scope| {
        let rho = &rho;
        let handles: Vec<_> = specs.iter().enumerate().map(|(k, &spec)| scope.spawn(move || build_member(k + 1, spec, cfg, rho, cache))).collect();
        let plan = build_wreath_plan(cfg);
        let members: Vec<Result<MemberRun, PipelineError>> =
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(PipelineError::Internal("member task panicked".into())))).collect();
        (plan, members)
    });
    let (plan, l_prime) = plan?;
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let family: Vec<FamilyMember> = runs.iter().map(|r| r.member.clone()).collect();
    let constants = round_constants(&plan, l_prime, rounds + 1);
    let ledger = select_indices(&family, &rho, rounds, &constants, horizon)?;
    let failures = ledger.verify(&rho)?;
    if !failures.is_empty() {
        return Err(PipelineError::Internal(failures.join("; ")));
    }
    let mut profiles = BTreeMap::new();
    let mut records = Vec::new();
    let mut cache_map = BTreeMap::new();
    for r in runs {
        profiles.insert(r.member.name.clone(), r.profile);
        records.push(r.record);
        if let Some((k, v)) = r.cache_entry {
            cache_map.insert(k, v);
        }
    }
    let document = LedgerDocument { ledger, rho_pretty: rho.pretty(), rho_warnings: rho_check.warnings, wreath_plan: plan, profiles: records };
    let bundle = ReportBundle { snapshot: cfg.snapshot(), certificates: family, document, profiles, cache: cache_map };
    Ok(PipelineRun { bundle, rho })
}
