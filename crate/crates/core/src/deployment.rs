//! Where the originator puts its boxes.
//!
//! Greedy coverage over realized baseline paths: each round picks the
//! candidate that sits on the most still-clean traffic, then marks that
//! traffic tainted.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::scalar::{self, Scalar};
use crate::strategies::Deployment;
use crate::topology::{country_border_ases, AsGraph, Asn};
use crate::traffic::FlowLedger;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeploymentError {
    #[error("deployment size must be at least 1")]
    ZeroSize,
    #[error("a targeted deployment needs resistor members")]
    NoTargets,
    #[error("unknown deployment mode {0:?}")]
    UnknownMode(String),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum DeploymentMode {
    /// Only traffic sourced by resistor members counts.
    Targeted,
    Global,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeploymentObjective {
    pub mode: DeploymentMode,
    pub size: usize,
    /// Candidates need at least this many customers.
    pub min_customers: usize,
}

impl DeploymentObjective {
    pub fn new(mode: DeploymentMode, size: usize) -> Result<Self, DeploymentError> {
        if size == 0 {
            return Err(DeploymentError::ZeroSize);
        }
        Ok(DeploymentObjective {
            mode,
            size,
            min_customers: 1,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection<S> {
    pub deployment: Deployment,
    /// Winning score of each round, in pick order.
    pub rounds: Vec<(Asn, S)>,
    /// Share of the considered traffic that ends up tainted.
    pub tainted_fraction: Option<S>,
    /// True when the pool ran dry before `size` picks.
    pub partial: bool,
}

/// Greedy selection over `baseline`'s realized paths. Resistor `members` are
/// never candidates; in targeted mode they also define which flows count.
pub fn select_deployers<S: Scalar>(
    graph: &AsGraph,
    baseline: &FlowLedger<S>,
    objective: &DeploymentObjective,
    members: &BTreeSet<Asn>,
) -> Result<Selection<S>, DeploymentError> {
    if objective.size == 0 {
        return Err(DeploymentError::ZeroSize);
    }
    if objective.mode == DeploymentMode::Targeted && members.is_empty() {
        return Err(DeploymentError::NoTargets);
    }
    let candidates: Vec<Asn> = graph
        .asns()
        .iter()
        .copied()
        .filter(|&a| !members.contains(&a) && graph.customer_count(a) >= objective.min_customers)
        .collect();
    let pos: std::collections::BTreeMap<Asn, usize> = candidates.iter().enumerate().map(|(i, &a)| (a, i)).collect();

    // each route: its weight and the candidates on it
    let mut routes: Vec<(S, Vec<usize>)> = Vec::new();
    for f in baseline.flows() {
        if objective.mode == DeploymentMode::Targeted && !members.contains(&f.src) {
            continue;
        }
        for leg in &f.legs {
            let Some(path) = &leg.path else { continue };
            let mut on: Vec<usize> = path.iter().filter_map(|a| pos.get(&a).copied()).collect();
            on.sort_unstable();
            on.dedup();
            routes.push((leg.volume.clone(), on));
        }
    }
    let total = scalar::sum(routes.iter().map(|r| r.0.clone()));
    let mut clean = vec![true; routes.len()];
    let mut chosen = BTreeSet::new();
    let mut rounds = Vec::new();
    let mut partial = false;

    while chosen.len() < objective.size {
        let mut score = vec![S::zero(); candidates.len()];
        for (r, (w, on)) in routes.iter().enumerate() {
            if clean[r] {
                for &c in on {
                    score[c] = score[c].clone() + w.clone();
                }
            }
        }
        // ties go to the lower ASN, which is the lower index
        let best = (0..candidates.len())
            .filter(|c| !chosen.contains(&candidates[*c]))
            .fold(None::<usize>, |acc, c| match acc {
                Some(b) if score[b] >= score[c] => Some(b),
                _ => Some(c),
            });
        let Some(b) = best.filter(|&b| score[b].gt_zero()) else {
            log::warn!(
                "deployment stopped after {} of {} picks: no candidate carries clean traffic",
                chosen.len(),
                objective.size
            );
            partial = true;
            break;
        };
        chosen.insert(candidates[b]);
        rounds.push((candidates[b], score[b].clone()));
        for (r, (_, on)) in routes.iter().enumerate() {
            if clean[r] && on.binary_search(&b).is_ok() {
                clean[r] = false;
            }
        }
    }
    let tainted = scalar::sum(routes.iter().zip(&clean).filter(|(_, c)| !**c).map(|(r, _)| r.0.clone()));
    Ok(Selection {
        deployment: Deployment::new(chosen),
        rounds,
        tainted_fraction: total.gt_zero().then(|| tainted / total),
        partial,
    })
}

/// Every AS in `country` with a link abroad.
pub fn ring_deployment(graph: &AsGraph, country: &str) -> Deployment {
    Deployment::new(country_border_ases(graph, country))
}
