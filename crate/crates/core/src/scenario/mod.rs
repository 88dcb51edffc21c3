//! Scenario files and the end-to-end pipeline.
//!
//! A scenario is a flat `key = value` file, one key per line. Relative paths
//! are resolved against the directory holding the scenario file.

mod report;
mod run;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::economics::USD_PER_UNIT;
use crate::poisoning::SelarpObjective;
use crate::strategies::StrategyKind;
use crate::topology::Asn;
use crate::Error;

pub use report::{write_outputs, ReportRows};
pub use run::{
    attack_announcements, build_matrix, load_graph, load_inputs, recompute_report, resolve_deployment, resolve_members,
    run_baseline, simulate, Inputs, RunOutput,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {0:?} given twice")]
    DuplicateKey(String),
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("conflicting keys: {0}")]
    Conflict(String),
    #[error("file for {key} not found: {}", path.display())]
    MissingFile { key: String, path: PathBuf },
}

fn invalid(key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Keys that name input files; their contents enter the scenario hash.
const FILE_KEYS: [&str; 5] = ["relationships", "attributes", "profiles", "matrix", "deployers_file"];

const KEYS: [&str; 22] = [
    "relationships",
    "attributes",
    "profiles",
    "matrix",
    "total_units",
    "resistor",
    "resistor_top_degree",
    "strategy",
    "frrp",
    "selarp",
    "selarp_objective",
    "deployers",
    "deployers_file",
    "deployment",
    "usd_ratio",
    "convergence_cap",
    "min_customers",
    "defection",
    "detection_alpha",
    "detection_psi",
    "export_rib",
    "output",
];

#[derive(Clone, Debug, PartialEq)]
pub enum ResistorSpec {
    Members(BTreeSet<Asn>),
    /// Highest-degree fraction of all ASes.
    TopDegree(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DeploymentSpec {
    None,
    Explicit(BTreeSet<Asn>),
    File(PathBuf),
    Targeted(usize),
    Global(usize),
    Ring(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub relationships: PathBuf,
    pub attributes: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub matrix: Option<PathBuf>,
    pub total_units: f64,
    pub resistor: ResistorSpec,
    pub strategy: StrategyKind,
    pub frrp: bool,
    pub selarp: bool,
    pub selarp_objective: SelarpObjective,
    pub deployment: DeploymentSpec,
    pub usd_ratio: f64,
    pub convergence_cap: Option<usize>,
    pub min_customers: usize,
    pub defection: bool,
    pub detection: Option<(f64, f64)>,
    pub export_rib: bool,
    pub output: Option<PathBuf>,
    /// Canonical key/value pairs after overrides, used for hashing.
    entries: BTreeMap<String, String>,
}

/// Splits `key = value` lines. `#` starts a comment that runs to the end of
/// the line.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>, ScenarioError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| ScenarioError::Parse {
            line: i + 1,
            message: format!("expected key = value, got {l:?}"),
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            return Err(ScenarioError::UnknownKey(k));
        }
        if out.insert(k.clone(), v).is_some() {
            return Err(ScenarioError::DuplicateKey(k));
        }
    }
    Ok(out)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ScenarioError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" | "" => Ok(false),
        _ => Err(invalid(key, format!("expected a boolean, got {v:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ScenarioError> {
    v.parse().map_err(|_| invalid(key, format!("cannot parse {v:?}")))
}

/// ASNs separated by commas or whitespace.
pub fn parse_asn_list(key: &str, v: &str) -> Result<BTreeSet<Asn>, ScenarioError> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Asn>().map_err(|e| invalid(key, e.to_string())))
        .collect()
}

fn parse_rate(key: &str, v: &str) -> Result<f64, ScenarioError> {
    let r: f64 = parse_num(key, v)?;
    if !(0.0..=1.0).contains(&r) {
        return Err(invalid(key, "must lie in [0, 1]"));
    }
    Ok(r)
}

impl Scenario {
    /// Reads a scenario file and applies `key=value` overrides on top.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, &base, overrides)
    }

    pub fn from_text(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self, Error> {
        let mut entries = parse_entries(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| invalid("--override", format!("expected key=value, got {o:?}")))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(ScenarioError::UnknownKey(k.to_string()).into());
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self::from_entries(entries, base_dir)?)
    }

    fn from_entries(entries: BTreeMap<String, String>, base: &Path) -> Result<Self, ScenarioError> {
        let get = |k: &str| entries.get(k).map(String::as_str).filter(|v| !v.is_empty());
        let path = |k: &str| -> Result<Option<PathBuf>, ScenarioError> {
            let Some(v) = get(k) else { return Ok(None) };
            let p = base.join(v);
            if !p.is_file() {
                return Err(ScenarioError::MissingFile { key: k.to_string(), path: p });
            }
            Ok(Some(p))
        };

        let relationships = path("relationships")?.ok_or(ScenarioError::Missing("relationships"))?;
        let profiles = path("profiles")?;
        let matrix = path("matrix")?;
        if profiles.is_none() && matrix.is_none() {
            return Err(ScenarioError::Missing("profiles"));
        }
        if profiles.is_some() && matrix.is_some() {
            return Err(ScenarioError::Conflict("profiles and matrix".into()));
        }
        let total_units = match get("total_units") {
            Some(v) => parse_num::<f64>("total_units", v)?,
            None => 1e9,
        };
        if !(total_units.is_finite() && total_units > 0.0) {
            return Err(invalid("total_units", "must be positive"));
        }

        let resistor = match (get("resistor"), get("resistor_top_degree")) {
            (Some(_), Some(_)) => return Err(ScenarioError::Conflict("resistor and resistor_top_degree".into())),
            (Some(v), None) => ResistorSpec::Members(parse_asn_list("resistor", v)?),
            (None, Some(v)) => {
                let f: f64 = parse_num("resistor_top_degree", v)?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(invalid("resistor_top_degree", "must lie in (0, 1]"));
                }
                ResistorSpec::TopDegree(f)
            }
            (None, None) => return Err(ScenarioError::Missing("resistor")),
        };
        let strategy = get("strategy")
            .ok_or(ScenarioError::Missing("strategy"))?
            .parse::<StrategyKind>()
            .map_err(|e| invalid("strategy", e.to_string()))?;
        let frrp = parse_bool("frrp", get("frrp").unwrap_or(""))?;
        let selarp = parse_bool("selarp", get("selarp").unwrap_or(""))?;
        if frrp && selarp {
            return Err(ScenarioError::Conflict("frrp and selarp".into()));
        }
        let selarp_objective = match get("selarp_objective").unwrap_or("units") {
            "units" => SelarpObjective::Units,
            "ip_weighted" => SelarpObjective::IpWeighted,
            v => return Err(invalid("selarp_objective", format!("expected units or ip_weighted, got {v:?}"))),
        };

        let given: Vec<&str> = ["deployers", "deployers_file", "deployment"]
            .into_iter()
            .filter(|k| get(k).is_some())
            .collect();
        if given.len() > 1 {
            return Err(ScenarioError::Conflict(given.join(" and ")));
        }
        let deployment = if let Some(v) = get("deployers") {
            DeploymentSpec::Explicit(parse_asn_list("deployers", v)?)
        } else if let Some(p) = path("deployers_file")? {
            DeploymentSpec::File(p)
        } else if let Some(v) = get("deployment") {
            parse_deployment_spec(v)?
        } else {
            DeploymentSpec::None
        };

        let usd_ratio = match get("usd_ratio") {
            Some(v) => parse_num::<f64>("usd_ratio", v)?,
            None => USD_PER_UNIT,
        };
        if !(usd_ratio.is_finite() && usd_ratio >= 0.0) {
            return Err(invalid("usd_ratio", "must be non-negative"));
        }
        let convergence_cap = get("convergence_cap").map(|v| parse_num::<usize>("convergence_cap", v)).transpose()?;
        if convergence_cap == Some(0) {
            return Err(invalid("convergence_cap", "must be at least 1"));
        }
        let min_customers = get("min_customers").map(|v| parse_num("min_customers", v)).transpose()?.unwrap_or(1);
        let detection = match (get("detection_alpha"), get("detection_psi")) {
            (Some(a), Some(p)) => Some((parse_rate("detection_alpha", a)?, parse_rate("detection_psi", p)?)),
            (None, None) => None,
            _ => return Err(ScenarioError::Conflict("detection_alpha needs detection_psi".into())),
        };

        Ok(Scenario {
            relationships,
            attributes: path("attributes")?,
            profiles,
            matrix,
            total_units,
            resistor,
            strategy,
            frrp,
            selarp,
            selarp_objective,
            deployment,
            usd_ratio,
            convergence_cap,
            min_customers,
            defection: parse_bool("defection", get("defection").unwrap_or(""))?,
            detection,
            export_rib: parse_bool("export_rib", get("export_rib").unwrap_or(""))?,
            output: get("output").map(|v| base.join(v)),
            entries,
        })
    }

    /// SHA-256 over the canonical settings and the bytes of every input file.
    /// The output location does not contribute.
    pub fn hash(&self) -> Result<String, Error> {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            if k == "output" {
                continue;
            }
            h.update(format!("{k}={v}\n").as_bytes());
        }
        for key in FILE_KEYS {
            let p = match key {
                "relationships" => Some(&self.relationships),
                "attributes" => self.attributes.as_ref(),
                "profiles" => self.profiles.as_ref(),
                "matrix" => self.matrix.as_ref(),
                _ => match &self.deployment {
                    DeploymentSpec::File(p) => Some(p),
                    _ => None,
                },
            };
            if let Some(p) = p {
                let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                h.update(format!("file:{key}:{}\n", bytes.len()).as_bytes());
                h.update(&bytes);
            }
        }
        Ok(hex::encode(h.finalize()))
    }
}

fn parse_deployment_spec(v: &str) -> Result<DeploymentSpec, ScenarioError> {
    let (mode, arg) = v
        .split_once(':')
        .ok_or_else(|| invalid("deployment", "expected targeted:N, global:N or ring:CC"))?;
    let size = || -> Result<usize, ScenarioError> {
        let n: usize = parse_num("deployment", arg.trim())?;
        if n == 0 {
            return Err(invalid("deployment", "size must be at least 1"));
        }
        Ok(n)
    };
    match mode.trim() {
        "targeted" => Ok(DeploymentSpec::Targeted(size()?)),
        "global" => Ok(DeploymentSpec::Global(size()?)),
        "ring" if !arg.trim().is_empty() => Ok(DeploymentSpec::Ring(arg.trim().to_ascii_uppercase())),
        _ => Err(invalid("deployment", format!("unknown mode {v:?}"))),
    }
}
