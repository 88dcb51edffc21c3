//! Reverse poisoning of a member's inbound routes.
//!
//! Both modes split the member's parent block into two halves and announce
//! them next to the parent, so longest-prefix forwarding prefers them
//! wherever they arrive. FRRP pads the path with every deployer, which makes
//! deployers drop the route through loop detection. SelARP announces an
//! honest path but only to a greedily chosen set of neighbors.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::bgp::{converge, forward_path, AdvertiseScope, AsPath, Destination, Origination, RoutingError, RoutingPolicy};
use crate::scalar::{self, Scalar};
use crate::strategies::{classify_clean, Deployment};
use crate::topology::{AsGraph, Asn};
use crate::traffic::TrafficMatrix;

#[derive(Debug, Error)]
pub enum PoisonError {
    #[error("FRRP needs at least one known deployer")]
    EmptyDeployment,
    #[error("unknown AS {0}")]
    UnknownAs(Asn),
    #[error("reference state for AS {member} failed: {source}")]
    Reference {
        member: Asn,
        #[source]
        source: RoutingError,
    },
}

fn sub_blocks(graph: &AsGraph, member: Asn, path: AsPath, scope: AdvertiseScope) -> [Origination; 2] {
    let parent = Origination::parent(graph, member);
    parent.block.split().map(|block| Origination {
        block,
        path: path.clone(),
        scope: scope.clone(),
    })
}

/// Both halves of `member`'s block announced to everyone with the path
/// `member, deployers ascending, member`.
pub fn frrp_advertisements(graph: &AsGraph, member: Asn, deployment: &Deployment) -> Result<[Origination; 2], PoisonError> {
    if !graph.contains(member) {
        return Err(PoisonError::UnknownAs(member));
    }
    if deployment.is_empty() {
        return Err(PoisonError::EmptyDeployment);
    }
    let mut hops = vec![member];
    hops.extend(deployment.deployers().iter().copied());
    hops.push(member);
    let path = AsPath::new(hops).expect("non-empty");
    Ok(sub_blocks(graph, member, path, AdvertiseScope::All))
}

/// Both halves announced with an honest path, only to `neighbors`.
pub fn selarp_advertisements(graph: &AsGraph, member: Asn, neighbors: &BTreeSet<Asn>) -> [Origination; 2] {
    sub_blocks(graph, member, AsPath::origin_only(member), AdvertiseScope::Only(neighbors.clone()))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum SelarpObjective {
    /// Net inbound traffic units moved from tainted to clean paths.
    #[default]
    Units,
    /// Net address space (by `ip_weight`) of ASes moved from a tainted to a
    /// clean path towards the member.
    IpWeighted,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Reach {
    Clean,
    Tainted,
    Unreachable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelarpOutcome<S> {
    pub member: Asn,
    pub advertise_to: BTreeSet<Asn>,
    pub unadvertised: BTreeSet<Asn>,
    pub score: S,
    /// Rounds in which at least one candidate was evaluated.
    pub rounds: usize,
    /// Committed neighbor and score after each accepted round.
    pub history: Vec<(Asn, S)>,
    /// Candidates whose test advertisement did not converge.
    pub skipped: BTreeSet<Asn>,
}

/// Evaluates hole-punched advertisement sets for one member against the
/// attack state in which it announces only its parent block.
pub struct SelarpSearch<'g, S> {
    graph: &'g AsGraph,
    policy: RoutingPolicy,
    member: Asn,
    parent: Origination,
    sources: Vec<(Asn, S, Reach)>,
}

impl<'g, S: Scalar> SelarpSearch<'g, S> {
    pub fn new(
        graph: &'g AsGraph,
        policy: &RoutingPolicy,
        member: Asn,
        matrix: &TrafficMatrix<S>,
        objective: SelarpObjective,
    ) -> Result<Self, PoisonError> {
        if !graph.contains(member) {
            return Err(PoisonError::UnknownAs(member));
        }
        let weights: Vec<(Asn, S)> = match objective {
            SelarpObjective::Units => matrix.inbound(member),
            SelarpObjective::IpWeighted => graph
                .asns()
                .iter()
                .filter(|&&a| a != member)
                .map(|&a| (a, S::from_f64_exact(graph.attributes(a).map_or(1.0, |x| x.ip_weight))))
                .collect(),
        };
        let parent = Origination::parent(graph, member);
        let mut search = SelarpSearch {
            graph,
            policy: policy.clone(),
            member,
            parent,
            sources: weights.into_iter().map(|(a, w)| (a, w, Reach::Unreachable)).collect(),
        };
        let reference = search
            .reach(&[])
            .map_err(|source| PoisonError::Reference { member, source })?;
        for (s, r) in search.sources.iter_mut().zip(reference) {
            s.2 = r;
        }
        Ok(search)
    }

    pub fn member(&self) -> Asn {
        self.member
    }

    pub fn neighbors(&self) -> BTreeSet<Asn> {
        self.graph.neighbors(self.member).map(|(n, _)| n).collect()
    }

    /// Reachability of each weighted source with `extra` announced next to
    /// the parent.
    fn reach(&self, extra: &[Origination]) -> Result<Vec<Reach>, RoutingError> {
        let mut origs = vec![self.parent.clone()];
        origs.extend_from_slice(extra);
        let rib = converge(self.graph, &origs, &self.policy)?;
        let leaf = extra.first().map_or(self.parent.block.key.specificity, |o| o.block.key.specificity);
        let dest = Destination {
            origin: self.member,
            leaf,
        };
        Ok(self
            .sources
            .iter()
            .map(|(s, _, _)| match forward_path(&rib, *s, dest) {
                Ok(p) if classify_clean(p.as_slice(), &self.policy.deployment) => Reach::Clean,
                Ok(_) => Reach::Tainted,
                Err(_) => Reach::Unreachable,
            })
            .collect())
    }

    fn score(&self, after: &[Reach]) -> S {
        scalar::sum(self.sources.iter().zip(after).filter_map(|((_, w, before), after)| {
            match (before, after) {
                (Reach::Tainted, Reach::Clean) => Some(w.clone()),
                (Reach::Clean, Reach::Tainted) => Some(-w.clone()),
                _ => None,
            }
        }))
    }

    /// Objective with the hole-punched halves announced to `set`. The empty
    /// set is the reference and scores zero.
    pub fn objective(&self, set: &BTreeSet<Asn>) -> Result<S, RoutingError> {
        if set.is_empty() {
            return Ok(S::zero());
        }
        let [low, _] = selarp_advertisements(self.graph, self.member, set);
        Ok(self.score(&self.reach(&[low])?))
    }

    /// The same objective for the FRRP announcement.
    pub fn frrp_objective(&self) -> Result<S, crate::Error> {
        let [low, _] = frrp_advertisements(self.graph, self.member, &self.policy.deployment)?;
        Ok(self.score(&self.reach(&[low])?))
    }

    /// Greedy neighbor selection: each round test-announces to every
    /// remaining neighbor, commits the one with the largest strictly positive
    /// gain (lowest ASN on ties), and stops when no neighbor helps.
    pub fn greedy(&self) -> SelarpOutcome<S> {
        let mut advertise_to = BTreeSet::new();
        let mut unadvertised = self.neighbors();
        let mut score = S::zero();
        let mut rounds = 0;
        let mut history = Vec::new();
        let mut skipped = BTreeSet::new();
        loop {
            let candidates: Vec<Asn> = unadvertised.difference(&skipped).copied().collect();
            if candidates.is_empty() {
                break;
            }
            rounds += 1;
            let results: Vec<Result<S, RoutingError>> = candidates
                .par_iter()
                .map(|&n| {
                    let mut trial = advertise_to.clone();
                    trial.insert(n);
                    self.objective(&trial)
                })
                .collect();
            let mut best: Option<(Asn, S, S)> = None;
            for (&n, r) in candidates.iter().zip(results) {
                match r {
                    Ok(temp) => {
                        let gain = temp.clone() - score.clone();
                        let better = match &best {
                            Some((_, g, _)) => gain > *g,
                            None => gain.gt_zero(),
                        };
                        if better {
                            best = Some((n, gain, temp));
                        }
                    }
                    Err(e) => {
                        log::warn!("SelARP candidate {n} for AS {} skipped: {e}", self.member);
                        skipped.insert(n);
                    }
                }
            }
            let Some((n, _, temp)) = best else { break };
            advertise_to.insert(n);
            unadvertised.remove(&n);
            score = temp;
            history.push((n, score.clone()));
        }
        SelarpOutcome {
            member: self.member,
            advertise_to,
            unadvertised,
            score,
            rounds,
            history,
            skipped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgp::{accept_route, Advertisement};
    use crate::strategies::{ResistorConfig, StrategyKind};
    use crate::topology::fixtures::g5;
    use crate::topology::parse_as_relationships;

    fn a(v: u32) -> Asn {
        Asn::new(v)
    }

    fn set(v: &[u32]) -> BTreeSet<Asn> {
        v.iter().map(|&x| a(x)).collect()
    }

    #[test]
    fn frrp_paths() {
        let g = g5();
        let [lo, hi] = frrp_advertisements(&g, a(1), &Deployment::new([a(2)])).unwrap();
        assert_eq!(lo.path.to_string(), "1 2 1");
        assert_eq!(lo.block.weight + hi.block.weight, 1.0);
        assert_eq!(lo.scope, AdvertiseScope::All);
        let [lo, _] = frrp_advertisements(&g, a(1), &Deployment::new([a(9), a(2)])).unwrap();
        assert_eq!(lo.path.to_string(), "1 2 9 1");
        assert!(matches!(
            frrp_advertisements(&g, a(1), &Deployment::empty()),
            Err(PoisonError::EmptyDeployment)
        ));
    }

    #[test]
    fn deployers_reject_frrp_others_accept() {
        let g = g5();
        let [lo, _] = frrp_advertisements(&g, a(1), &Deployment::new([a(2)])).unwrap();
        let adv = |to: u32| {
            accept_route(
                &g,
                a(to),
                &Advertisement {
                    block: lo.block.key,
                    path: lo.path.clone(),
                    sender: a(1),
                },
            )
        };
        assert!(adv(2).is_none());
        assert!(adv(3).is_some());
    }

    fn inbound(g: &AsGraph, dst: u32, v: f64) -> TrafficMatrix<f64> {
        let mut m = TrafficMatrix::new();
        for &s in g.asns() {
            if s != a(dst) {
                m.add(s, a(dst), v).unwrap();
            }
        }
        m
    }

    #[test]
    fn single_useful_neighbor() {
        // 4 is the member; inbound from 1 goes 1 2 4 through deployer 2.
        let g = g5();
        let d = Deployment::new([a(2)]);
        let cfg = ResistorConfig::new(set(&[4]), StrategyKind::Tiebreak).unwrap();
        let mut m = TrafficMatrix::new();
        m.add(a(1), a(4), 10.0).unwrap();
        let s = SelarpSearch::new(&g, &cfg.policy(&d, None), a(4), &m, SelarpObjective::Units).unwrap();
        let out = s.greedy();
        assert_eq!(out.advertise_to, set(&[3]));
        assert_eq!(out.score, 10.0);
        assert!(out.rounds <= 2);
        assert!(out.score <= s.frrp_objective().unwrap());
    }

    #[test]
    fn no_gain_means_empty() {
        let g = g5();
        let d = Deployment::new([a(5)]);
        let cfg = ResistorConfig::new(set(&[4]), StrategyKind::Tiebreak).unwrap();
        let s = SelarpSearch::new(&g, &cfg.policy(&d, None), a(4), &inbound(&g, 4, 1.0), SelarpObjective::Units).unwrap();
        let out = s.greedy();
        assert!(out.advertise_to.is_empty());
        assert_eq!(out.rounds, 1);
        assert_eq!(out.score, 0.0);
    }

    /// Exhaustive optimum over neighbor subsets.
    fn optimum(s: &SelarpSearch<'_, f64>) -> f64 {
        let ns: Vec<Asn> = s.neighbors().into_iter().collect();
        (0u32..1 << ns.len())
            .map(|mask| {
                let sub: BTreeSet<Asn> = ns.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &n)| n).collect();
                s.objective(&sub).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn advertising_towards_a_far_deployer_can_pay() {
        // Member 1 has providers 2 and 3. Deployer 4 sits directly above 2;
        // deployer 6 sits further up behind 3, at 5's provider. Traffic from
        // 7 and 8 comes down through 4, so announcing via 3 pulls it onto
        // 5's clean side even though 3 eventually leads past 6.
        let g = parse_as_relationships(
            "2|1|-1\n3|1|-1\n4|2|-1\n5|3|-1\n6|5|-1\n4|7|-1\n4|8|-1\n5|7|-1\n6|9|-1",
        )
        .unwrap();
        let d = Deployment::new([a(4), a(6)]);
        let cfg = ResistorConfig::new(set(&[1]), StrategyKind::Tiebreak).unwrap();
        let m = inbound(&g, 1, 1.0);
        let s = SelarpSearch::new(&g, &cfg.policy(&d, None), a(1), &m, SelarpObjective::Units).unwrap();
        let out = s.greedy();
        assert_eq!(out.advertise_to, set(&[3]));
        assert_eq!(out.score, optimum(&s));
        assert!(out.score > 0.0);
    }
}
