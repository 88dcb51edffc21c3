//! Streaming route-and-account.
//!
//! Only the blocks of a flow's destination matter for forwarding it, so the
//! flows are grouped by destination and each group is routed over a rib that
//! holds just that destination's blocks. Peak memory is one origin's blocks
//! per worker rather than the whole table.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::bgp::{converge, Origination, Rib, RoutingError, RoutingPolicy};
use crate::scalar::Scalar;
use crate::topology::{AsGraph, Asn};
use crate::traffic::{route_flows, FlowLedger, FlowRecord, TrafficMatrix};
use crate::Error;

/// Every origination in one routing state, grouped by origin.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Announcements {
    by_origin: BTreeMap<Asn, Vec<Origination>>,
}

impl Announcements {
    /// Each AS announces its parent block to everyone.
    pub fn baseline(graph: &AsGraph) -> Self {
        Self::from_originations(Origination::all_parents(graph))
    }

    pub fn from_originations<I: IntoIterator<Item = Origination>>(originations: I) -> Self {
        let mut by_origin: BTreeMap<Asn, Vec<Origination>> = BTreeMap::new();
        for o in originations {
            by_origin.entry(o.block.key.origin).or_default().push(o);
        }
        Announcements { by_origin }
    }

    pub fn of(&self, origin: Asn) -> &[Origination] {
        self.by_origin.get(&origin).map_or(&[], Vec::as_slice)
    }

    /// Replaces everything `origin` announces.
    pub fn set(&mut self, origin: Asn, originations: Vec<Origination>) {
        debug_assert!(originations.iter().all(|o| o.block.key.origin == origin));
        self.by_origin.insert(origin, originations);
    }

    pub fn all(&self) -> Vec<Origination> {
        self.by_origin.values().flatten().cloned().collect()
    }
}

/// Converges every announced block at once.
pub fn converge_all<'g>(
    graph: &'g AsGraph,
    announcements: &Announcements,
    policy: &RoutingPolicy,
) -> Result<Rib<'g>, RoutingError> {
    converge(graph, &announcements.all(), policy)
}

/// Routes all flows and accounts them. Clean flags follow
/// `policy.deployment`. Non-convergence reports every failing block.
pub fn simulate_flows<S: Scalar>(
    graph: &AsGraph,
    announcements: &Announcements,
    policy: &RoutingPolicy,
    matrix: &TrafficMatrix<S>,
) -> Result<FlowLedger<S>, Error> {
    let mut by_dst: BTreeMap<Asn, Vec<(Asn, Asn, S)>> = BTreeMap::new();
    for (s, d, v) in matrix.iter() {
        by_dst.entry(d).or_default().push((s, d, v.clone()));
    }
    let groups: Vec<(Asn, Vec<(Asn, Asn, S)>)> = by_dst.into_iter().collect();
    let results: Vec<Result<Vec<FlowRecord<S>>, Error>> = groups
        .par_iter()
        .map(|(dst, flows)| {
            let rib = converge(graph, announcements.of(*dst), policy)?;
            Ok(route_flows(&rib, flows, &policy.deployment)?)
        })
        .collect();

    let mut records = Vec::with_capacity(matrix.len());
    let mut failed = Vec::new();
    let mut rounds = 0;
    for r in results {
        match r {
            Ok(mut recs) => records.append(&mut recs),
            Err(Error::Routing(RoutingError::NonConvergence { blocks, rounds: k })) => {
                failed.extend(blocks);
                rounds = k;
            }
            Err(e) => return Err(e),
        }
    }
    if !failed.is_empty() {
        return Err(RoutingError::NonConvergence { blocks: failed, rounds }.into());
    }
    Ok(FlowLedger::from_records(graph, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::{Deployment, ResistorConfig, StrategyKind};
    use crate::topology::fixtures::g5;
    use crate::traffic::account_flows;

    fn a(v: u32) -> Asn {
        Asn::new(v)
    }

    #[test]
    fn streaming_matches_full_rib() {
        let g = g5();
        let mut m: TrafficMatrix<f64> = TrafficMatrix::new();
        for s in 1..=5 {
            for d in 1..=5 {
                if s != d {
                    m.add(a(s), a(d), (s * 10 + d) as f64).unwrap();
                }
            }
        }
        let cfg = ResistorConfig::new([a(1)].into_iter().collect(), StrategyKind::Tiebreak).unwrap();
        let policy = cfg.policy(&Deployment::new([a(2)]), None);
        let ann = Announcements::baseline(&g);
        let streamed = simulate_flows(&g, &ann, &policy, &m).unwrap();
        let rib = converge_all(&g, &ann, &policy).unwrap();
        let full = account_flows(&rib, &m, &policy.deployment).unwrap();
        assert_eq!(streamed, full);
    }

    #[test]
    fn silent_origin_is_unreachable() {
        let g = g5();
        let mut ann = Announcements::baseline(&g);
        ann.set(a(4), Vec::new());
        let mut m: TrafficMatrix<f64> = TrafficMatrix::new();
        m.add(a(1), a(4), 3.0).unwrap();
        let l = simulate_flows(&g, &ann, &RoutingPolicy::baseline(), &m).unwrap();
        assert_eq!(*l.unreachable_volume(), 3.0);
    }
}
