//! Cleanliness and the resistor strategies.
//!
//! A strategy decides where "prefer a clean path" sits in the decision
//! process of resistor members, and whether members share all best routes
//! with each other. Everyone outside the resistor runs plain BGP.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bgp::{DecisionProcess, DecisionRule, RoutingPolicy};
use crate::topology::Asn;

/// ASes hosting traffic-manipulating boxes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Deployment {
    deployers: BTreeSet<Asn>,
}

impl Deployment {
    pub fn new<I: IntoIterator<Item = Asn>>(deployers: I) -> Self {
        Deployment {
            deployers: deployers.into_iter().collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn deployers(&self) -> &BTreeSet<Asn> {
        &self.deployers
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.deployers.contains(&asn)
    }

    pub fn len(&self) -> usize {
        self.deployers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deployers.is_empty()
    }

    /// The deployment with `asn` removed, as seen when it defects.
    pub fn without(&self, asn: Asn) -> Self {
        let mut d = self.clone();
        d.deployers.remove(&asn);
        d
    }

    /// Newline-separated ASN list.
    pub fn to_text(&self) -> String {
        self.deployers.iter().map(|a| format!("{a}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, crate::topology::TopologyError> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::parse)
            .collect::<Result<BTreeSet<Asn>, _>>()
            .map(|deployers| Deployment { deployers })
    }
}

/// True iff no AS on the path, origin included, is a deployer.
pub fn classify_clean(path: &[Asn], deployment: &Deployment) -> bool {
    !path.iter().any(|a| deployment.contains(*a))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Baseline,
    OriginalRad,
    LocalPref,
    PathLength,
    Tiebreak,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Baseline,
        StrategyKind::OriginalRad,
        StrategyKind::LocalPref,
        StrategyKind::PathLength,
        StrategyKind::Tiebreak,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Baseline => "baseline",
            StrategyKind::OriginalRad => "original_rad",
            StrategyKind::LocalPref => "local_pref",
            StrategyKind::PathLength => "path_length",
            StrategyKind::Tiebreak => "tiebreak",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown strategy {0:?}")]
pub struct UnknownStrategy(String);

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "rad" && *k == StrategyKind::OriginalRad))
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

/// The decision process resistor members run under `strategy`.
pub fn build_decision_process(strategy: StrategyKind) -> DecisionProcess {
    use DecisionRule::*;
    let rules = match strategy {
        StrategyKind::Baseline => return DecisionProcess::baseline(),
        StrategyKind::OriginalRad | StrategyKind::LocalPref => {
            vec![PreferClean, LocalPreference, ShortestPath, LowestNextHop]
        }
        StrategyKind::PathLength => vec![LocalPreference, PreferClean, ShortestPath, LowestNextHop],
        StrategyKind::Tiebreak => vec![LocalPreference, ShortestPath, PreferClean, LowestNextHop],
    };
    DecisionProcess::new(rules).expect("strategy processes are well formed")
}

/// Members that share every best route with adjacent members. Only the
/// original attack does this; the other strategies keep normal export.
pub fn resistor_export_extension(strategy: StrategyKind, members: &BTreeSet<Asn>) -> BTreeSet<Asn> {
    match strategy {
        StrategyKind::OriginalRad => members.clone(),
        _ => BTreeSet::new(),
    }
}

/// Reverse-poisoning mode for inbound traffic.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum Poisoning {
    #[default]
    None,
    Frrp,
    Selarp,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("resistor has no members")]
    NoMembers,
    #[error("FRRP and SelARP are mutually exclusive")]
    ExclusivePoisoning,
    #[error("AS {0} is both a deployer and a resistor member")]
    Overlap(Asn),
}

/// A resistor coalition and how it fights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResistorConfig {
    members: BTreeSet<Asn>,
    pub strategy: StrategyKind,
    pub poisoning: Poisoning,
}

impl ResistorConfig {
    pub fn new(members: BTreeSet<Asn>, strategy: StrategyKind) -> Result<Self, ConfigError> {
        if members.is_empty() {
            return Err(ConfigError::NoMembers);
        }
        Ok(ResistorConfig {
            members,
            strategy,
            poisoning: Poisoning::None,
        })
    }

    /// Sets the poisoning flags, refusing both at once.
    pub fn with_poisoning(mut self, frrp: bool, selarp: bool) -> Result<Self, ConfigError> {
        self.poisoning = match (frrp, selarp) {
            (true, true) => return Err(ConfigError::ExclusivePoisoning),
            (true, false) => Poisoning::Frrp,
            (false, true) => Poisoning::Selarp,
            (false, false) => Poisoning::None,
        };
        Ok(self)
    }

    pub fn members(&self) -> &BTreeSet<Asn> {
        &self.members
    }

    pub fn is_member(&self, asn: Asn) -> bool {
        self.members.contains(&asn)
    }

    pub fn check_disjoint(&self, deployment: &Deployment) -> Result<(), ConfigError> {
        match self.members.iter().find(|m| deployment.contains(**m)) {
            Some(&m) => Err(ConfigError::Overlap(m)),
            None => Ok(()),
        }
    }

    /// Routing policy for the attack against `deployment`.
    pub fn policy(&self, deployment: &Deployment, max_rounds: Option<usize>) -> RoutingPolicy {
        let process = build_decision_process(self.strategy);
        let processes: BTreeMap<Asn, DecisionProcess> = if self.strategy == StrategyKind::Baseline {
            BTreeMap::new()
        } else {
            self.members.iter().map(|&m| (m, process.clone())).collect()
        };
        RoutingPolicy {
            processes,
            coalition_export: resistor_export_extension(self.strategy, &self.members),
            deployment: deployment.clone(),
            max_rounds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DecisionRule::*;

    fn a(v: u32) -> Asn {
        Asn::new(v)
    }

    #[test]
    fn cleanliness() {
        let p = [a(1), a(2), a(4)];
        assert!(classify_clean(&p, &Deployment::empty()));
        assert!(!classify_clean(&p, &Deployment::new([a(2)])));
        assert!(classify_clean(&[a(1), a(3), a(4)], &Deployment::new([a(2)])));
        // a deployer destination is never clean
        assert!(!classify_clean(&[a(1), a(3), a(4)], &Deployment::new([a(4)])));
    }

    #[test]
    fn processes() {
        assert!(!build_decision_process(StrategyKind::Baseline).has_clean_rule());
        assert_eq!(
            build_decision_process(StrategyKind::Tiebreak).rules(),
            &[LocalPreference, ShortestPath, PreferClean, LowestNextHop]
        );
        assert_eq!(
            build_decision_process(StrategyKind::PathLength).rules(),
            &[LocalPreference, PreferClean, ShortestPath, LowestNextHop]
        );
        for s in [StrategyKind::OriginalRad, StrategyKind::LocalPref] {
            assert_eq!(
                build_decision_process(s).rules(),
                &[PreferClean, LocalPreference, ShortestPath, LowestNextHop]
            );
        }
    }

    #[test]
    fn export_extension() {
        let members: BTreeSet<Asn> = [a(1), a(7)].into_iter().collect();
        assert_eq!(resistor_export_extension(StrategyKind::OriginalRad, &members), members);
        assert!(resistor_export_extension(StrategyKind::LocalPref, &members).is_empty());
        assert!(resistor_export_extension(StrategyKind::Baseline, &members).is_empty());
    }

    #[test]
    fn config_validation() {
        assert_eq!(
            ResistorConfig::new(BTreeSet::new(), StrategyKind::Tiebreak).unwrap_err(),
            ConfigError::NoMembers
        );
        let cfg = ResistorConfig::new([a(1)].into_iter().collect(), StrategyKind::PathLength).unwrap();
        assert_eq!(cfg.clone().with_poisoning(true, true).unwrap_err(), ConfigError::ExclusivePoisoning);
        assert_eq!(cfg.clone().with_poisoning(false, true).unwrap().poisoning, Poisoning::Selarp);
        assert_eq!(cfg.check_disjoint(&Deployment::new([a(1)])), Err(ConfigError::Overlap(a(1))));
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert_eq!("Original-RAD".parse::<StrategyKind>().unwrap(), StrategyKind::OriginalRad);
        assert!("nope".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn deployment_text() {
        let d = Deployment::new([a(9), a(2)]);
        assert_eq!(d.to_text(), "2\n9\n");
        assert_eq!(Deployment::parse(&d.to_text()).unwrap(), d);
    }
}
