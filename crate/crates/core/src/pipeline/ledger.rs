//! Greedy selection of thresholds `t_i` and family indices `s(i)`.

use serde::{Deserialize, Serialize};

use super::rho::{RhoError, RhoExpression};
use super::PipelineError;
use crate::expander::SpectralCertificate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Computed,
    Configured,
    /// The guaranteed bound `(K, L) = (1, 2L′ + 1)` in place of a measurement.
    Envelope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sourced<T> {
    pub value: T,
    pub source: Provenance,
}

impl<T> Sourced<T> {
    pub fn computed(value: T) -> Self {
        Sourced { value, source: Provenance::Computed }
    }

    pub fn configured(value: T) -> Self {
        Sourced { value, source: Provenance::Configured }
    }

    pub fn envelope(value: T) -> Self {
        Sourced { value, source: Provenance::Envelope }
    }
}

/// One group of the family with its spectral certificate and `J`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyMember {
    /// 1-based family index `s`.
    pub index: usize,
    pub name: String,
    pub generator_count: usize,
    pub j: Sourced<u32>,
    pub certificate: SpectralCertificate,
}

impl FamilyMember {
    /// `J_s · M_s(t)`: the image bound for maps that are 1-Lipschitz for the
    /// perfect metric.
    pub fn guarantee(&self, t: f64) -> Option<f64> {
        self.certificate.m_at(t).map(|m| self.j.value as f64 * m)
    }

    pub fn certificate_ref(&self) -> String {
        format!("certificates/{}.json", self.name)
    }
}

/// Per-round constants, fixed before any `s(i)` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundConstants {
    pub eps: Sourced<f64>,
    pub m: Sourced<u32>,
    pub n: Option<Sourced<usize>>,
    pub l_prime: Sourced<usize>,
    pub k: Sourced<f64>,
    pub l: Sourced<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Track {
    S,
    #[serde(rename = "S'")]
    SPrime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MContribution {
    pub member: String,
    pub j: u32,
    pub half_diameter: u32,
    pub m_half_diameter: f64,
    pub product: f64,
}

/// `L_i·M < ρ(t_{i−1})`, which with `ρ` increasing yields
/// `ρ_Φ(t) ≤ L_i·M < ρ(t_{i−1}) ≤ ρ(t)` for `t_{i−1} ≤ t < t_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub l_i_times_m: f64,
    pub rho_prev: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub i: usize,
    pub track: Track,
    pub constants: RoundConstants,
    pub next_l: Sourced<f64>,
    pub t: u64,
    pub s: usize,
    pub member: String,
    pub certificate: String,
    /// `⌈t_i / K_i⌉`, the distance required in `G_s`.
    pub required_distance: u32,
    pub diameter: u32,
    /// `J_s · M_s(⌈t_i / K_i⌉)`, at most `M`.
    pub guarantee: f64,
    pub rho_t: f64,
    /// `ρ(t_i) > L_{i+1}·M`.
    pub next_bound_holds: bool,
    pub chain: Option<ChainRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionLedger {
    pub rho: String,
    pub rounds_requested: usize,
    /// Common generator count; smaller generating sets are padded with the identity.
    pub d: usize,
    pub m: Sourced<f64>,
    pub m_contributions: Vec<MContribution>,
    pub horizon: u64,
    pub choice_rule: String,
    pub rows: Vec<LedgerRow>,
    pub complete: bool,
    pub limiting_constraint: Option<String>,
}

impl SelectionLedger {
    /// Recomputes every recorded inequality from the row data.
    pub fn verify(&self, rho: &RhoExpression) -> Result<Vec<String>, RhoError> {
        let m = self.m.value;
        let mut failures = Vec::new();
        for (k, row) in self.rows.iter().enumerate() {
            let rt = rho.eval(row.t as f64)?;
            if !(rt > row.next_l.value * m) {
                failures.push(format!("row {}: rho(t) = {rt} is not > L_(i+1)·M = {}", row.i, row.next_l.value * m));
            }
            if row.guarantee > m {
                failures.push(format!("row {}: guarantee {} exceeds M = {m}", row.i, row.guarantee));
            }
            if k > 0 {
                let prev = &self.rows[k - 1];
                if row.t <= prev.t || row.s <= prev.s {
                    failures.push(format!("row {}: t or s not strictly increasing", row.i));
                }
                let rp = rho.eval(prev.t as f64)?;
                if !(row.constants.l.value * m < rp) {
                    failures.push(format!("row {}: L_i·M = {} is not < rho(t_(i-1)) = {rp}", row.i, row.constants.l.value * m));
                }
                if row.chain.as_ref().is_none_or(|c| !c.holds) {
                    failures.push(format!("row {}: chain not recorded as holding", row.i));
                }
            }
        }
        Ok(failures)
    }
}

pub const CHOICE_RULE: &str = "t_i: least integer > t_(i-1) with rho(t_i) > L_(i+1)·M; s(i): least index > s(i-1) with diameter ≥ ⌈t_i/K_i⌉ and J_s·M_s(⌈t_i/K_i⌉) ≤ M";

/// Runs `rounds` rounds of the selection; running out of thresholds or family
/// members yields a partial ledger naming the constraint.
///
/// `M = max_s J_s · M_s(⌈diam_s / 2⌉)`; `constants[i]` holds round `i + 1`.
pub fn select_indices(
    family: &[FamilyMember],
    rho: &RhoExpression,
    rounds: usize,
    constants: &[RoundConstants],
    horizon: u64,
) -> Result<SelectionLedger, PipelineError> {
    if rounds > 0 && constants.len() < rounds + 1 {
        return Err(PipelineError::Precondition(format!("{} rounds need {} rounds of constants, got {}", rounds, rounds + 1, constants.len())));
    }
    if rounds > 0 && family.len() < rounds + 1 {
        return Err(PipelineError::Precondition(format!("{} rounds need at least {} certificates, got {}", rounds, rounds + 1, family.len())));
    }
    if family.windows(2).any(|w| w[0].index >= w[1].index) {
        return Err(PipelineError::Precondition("family indices must be strictly increasing".into()));
    }
    let m_contributions: Vec<MContribution> = family
        .iter()
        .map(|f| {
            let half = f.certificate.diameter.div_ceil(2);
            let mh = f.certificate.m_half_diameter();
            MContribution { member: f.name.clone(), j: f.j.value, half_diameter: half, m_half_diameter: mh, product: f.j.value as f64 * mh }
        })
        .collect();
    let m = m_contributions.iter().map(|c| c.product).fold(0.0, f64::max);
    let d = family.iter().map(|f| f.generator_count).max().unwrap_or(0);
    let mut ledger = SelectionLedger {
        rho: rho.source.clone(),
        rounds_requested: rounds,
        d,
        m: Sourced::computed(m),
        m_contributions,
        horizon,
        choice_rule: CHOICE_RULE.into(),
        rows: Vec::new(),
        complete: false,
        limiting_constraint: None,
    };
    let mut prev_t = 0u64;
    let mut prev_s = 0usize;
    for i in 1..=rounds {
        let c = &constants[i - 1];
        let next_l = constants[i].l.clone();
        let target = next_l.value * m;
        let mut t = None;
        for cand in prev_t + 1..=horizon {
            let v = rho.eval(cand as f64)?;
            if v > target {
                t = Some((cand, v));
                break;
            }
        }
        let Some((t, rho_t)) = t else {
            ledger.limiting_constraint = Some(format!(
                "round {i}: rho(t) ≤ L_{}·M = {target} for every integer t in ({prev_t}, {horizon}]",
                i + 1
            ));
            return Ok(ledger);
        };
        let required = (t as f64 / c.k.value).ceil().max(1.0) as u32;
        let chosen = family.iter().filter(|f| f.index > prev_s).find_map(|f| {
            if f.certificate.diameter < required {
                return None;
            }
            let g = f.guarantee(required as f64)?;
            (g <= m).then_some((f, g))
        });
        let Some((member, guarantee)) = chosen else {
            let largest = family.iter().filter(|f| f.index > prev_s).map(|f| f.certificate.diameter).max();
            ledger.limiting_constraint = Some(match largest {
                None => format!("round {i}: family exhausted after index {prev_s} (t_{i} = {t})"),
                Some(dm) => format!(
                    "round {i}: no family member after index {prev_s} has diameter ≥ {required} with J·M(⌈t/K⌉) ≤ M (t_{i} = {t}, largest remaining diameter {dm})"
                ),
            });
            return Ok(ledger);
        };
        let chain = (i > 1).then(|| {
            let rho_prev = ledger.rows.last().unwrap().rho_t;
            let lm = c.l.value * m;
            ChainRecord { l_i_times_m: lm, rho_prev, holds: lm < rho_prev }
        });
        if chain.as_ref().is_some_and(|ch| !ch.holds) {
            return Err(PipelineError::Internal(format!("round {i}: L_i·M < rho(t_(i-1)) fails although t_(i-1) was chosen for it")));
        }
        ledger.rows.push(LedgerRow {
            i,
            track: if i % 2 == 1 { Track::S } else { Track::SPrime },
            constants: c.clone(),
            next_l: next_l.clone(),
            t,
            s: member.index,
            member: member.name.clone(),
            certificate: member.certificate_ref(),
            required_distance: required,
            diameter: member.certificate.diameter,
            guarantee,
            rho_t,
            next_bound_holds: rho_t > target,
            chain,
        });
        prev_t = t;
        prev_s = member.index;
    }
    ledger.complete = true;
    Ok(ledger)
}
