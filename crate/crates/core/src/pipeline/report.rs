//! The report bundle: a directory that records one pipeline run completely.
//!
//! ```text
//! config.snapshot
//! certificates/<member>.json
//! ledger.json            (ledger.csv as well in csv format)
//! profiles/<member>.csv
//! manifest.json          SHA-256 of every artifact and cached graph
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ledger::{FamilyMember, SelectionLedger};
use super::PipelineError;
use crate::distortion::{DistortionProfile, ProfileComparison};
use crate::wreath::PlanReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(ReportFormat::Json),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub member: String,
    pub seed: u64,
    pub dimension: usize,
    pub rows_sampled: usize,
    /// Lipschitz constant before the profile was normalized.
    pub lipschitz: f64,
    pub comparison: ProfileComparison,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerDocument {
    pub ledger: SelectionLedger,
    pub rho_pretty: String,
    pub rho_warnings: Vec<String>,
    pub wreath_plan: PlanReport,
    pub profiles: Vec<ProfileRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, String>,
    pub cache: BTreeMap<String, String>,
}

#[derive(Clone, Debug)]
pub struct ReportBundle {
    pub snapshot: String,
    pub certificates: Vec<FamilyMember>,
    pub document: LedgerDocument,
    pub profiles: BTreeMap<String, DistortionProfile>,
    /// Cached graph file name to SHA-256.
    pub cache: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> PipelineError + '_ {
    move |e| PipelineError::Config(format!("{}: {e}", path.display()))
}

fn json_text<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

fn profile_csv(p: &DistortionProfile) -> String {
    let mut out = String::from("t,rho\n");
    for (t, r) in p.thresholds.iter().zip(&p.rho) {
        out.push_str(&format!("{t},{r}\n"));
    }
    out
}

fn ledger_csv(l: &SelectionLedger) -> String {
    let mut out = String::from("i,track,eps,m,n,K,L,L_prime,t,s,member,M,guarantee,rho_t,next_L_times_M,chain_L_times_M,chain_rho_prev\n");
    for r in &l.rows {
        let c = &r.constants;
        let n = c.n.as_ref().map_or(String::new(), |n| n.value.to_string());
        let (cl, cr) = r.chain.as_ref().map_or((String::new(), String::new()), |ch| (ch.l_i_times_m.to_string(), ch.rho_prev.to_string()));
        let track = match r.track {
            super::ledger::Track::S => "S",
            super::ledger::Track::SPrime => "S'",
        };
        out.push_str(&format!(
            "{},{track},{},{},{n},{},{},{},{},{},{},{},{},{},{},{cl},{cr}\n",
            r.i,
            c.eps.value,
            c.m.value,
            c.k.value,
            c.l.value,
            c.l_prime.value,
            r.t,
            r.s,
            r.member,
            l.m.value,
            r.guarantee,
            r.rho_t,
            r.next_l.value * l.m.value
        ));
    }
    out
}

impl ReportBundle {
    fn files(&self, format: ReportFormat) -> Vec<(String, String)> {
        let mut files = vec![("config.snapshot".to_string(), self.snapshot.clone())];
        for c in &self.certificates {
            files.push((c.certificate_ref(), json_text(c)));
        }
        files.push(("ledger.json".into(), json_text(&self.document)));
        if format == ReportFormat::Csv {
            files.push(("ledger.csv".into(), ledger_csv(&self.document.ledger)));
        }
        for (name, p) in &self.profiles {
            files.push((format!("profiles/{name}.csv"), profile_csv(p)));
        }
        files
    }

    /// Writes the bundle; identical bundles produce identical bytes.
    pub fn write(&self, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, PipelineError> {
        let mut written = Vec::new();
        let mut manifest = Manifest { artifacts: BTreeMap::new(), cache: self.cache.clone() };
        for sub in ["certificates", "profiles"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        for (rel, text) in self.files(format) {
            let path = dir.join(&rel);
            fs::write(&path, &text).map_err(io_err(&path))?;
            manifest.artifacts.insert(rel, sha256_hex(text.as_bytes()));
            written.push(path);
        }
        let path = dir.join("manifest.json");
        fs::write(&path, json_text(&manifest)).map_err(io_err(&path))?;
        written.push(path);
        Ok(written)
    }

    /// Reads a bundle back, checking every artifact against the manifest.
    pub fn read(dir: &Path) -> Result<(Self, ReportFormat), PipelineError> {
        let read = |rel: &str| -> Result<String, PipelineError> {
            let path = dir.join(rel);
            fs::read_to_string(&path).map_err(io_err(&path))
        };
        let mpath = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_str(&read("manifest.json")?).map_err(json_err(&mpath))?;
        let mut contents = BTreeMap::new();
        for (rel, hash) in &manifest.artifacts {
            let text = read(rel)?;
            if &sha256_hex(text.as_bytes()) != hash {
                return Err(PipelineError::Config(format!("{}: hash does not match the manifest", dir.join(rel).display())));
            }
            contents.insert(rel.clone(), text);
        }
        let take = |rel: &str| contents.get(rel).cloned().ok_or_else(|| PipelineError::Config(format!("{}: missing from manifest", dir.join(rel).display())));
        let snapshot = take("config.snapshot")?;
        let lpath = dir.join("ledger.json");
        let document: LedgerDocument = serde_json::from_str(&take("ledger.json")?).map_err(json_err(&lpath))?;
        let mut certificates = Vec::new();
        let mut profiles = BTreeMap::new();
        for (rel, text) in &contents {
            if let Some(name) = rel.strip_prefix("certificates/").and_then(|r| r.strip_suffix(".json")) {
                let c: FamilyMember = serde_json::from_str(text).map_err(json_err(&dir.join(rel)))?;
                if c.name != name {
                    return Err(PipelineError::Config(format!("{}: certificate names {:?}", dir.join(rel).display(), c.name)));
                }
                certificates.push(c);
            } else if let Some(name) = rel.strip_prefix("profiles/").and_then(|r| r.strip_suffix(".csv")) {
                profiles.insert(name.to_string(), parse_profile_csv(text).map_err(|e| PipelineError::Config(format!("{}: {e}", dir.join(rel).display())))?);
            }
        }
        certificates.sort_by_key(|c| c.index);
        let format = if contents.contains_key("ledger.csv") { ReportFormat::Csv } else { ReportFormat::Json };
        Ok((ReportBundle { snapshot, certificates, document, profiles, cache: manifest.cache }, format))
    }
}

fn parse_profile_csv(text: &str) -> Result<DistortionProfile, String> {
    let mut lines = text.lines();
    if lines.next() != Some("t,rho") {
        return Err("expected header t,rho".into());
    }
    let mut thresholds = Vec::new();
    let mut rho = Vec::new();
    for line in lines {
        let (t, r) = line.split_once(',').ok_or_else(|| format!("bad row {line:?}"))?;
        thresholds.push(t.parse::<f64>().map_err(|_| format!("bad t {t:?}"))?);
        rho.push(r.parse::<f64>().map_err(|_| format!("bad rho {r:?}"))?);
    }
    Ok(DistortionProfile { thresholds, rho, lipschitz: 1.0 })
}
