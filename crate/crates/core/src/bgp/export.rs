use std::collections::BTreeSet;

use super::{AsPath, BlockKey, LearnedFrom, Route};
use crate::topology::{AsGraph, Asn, Relationship};

/// Export rule for one route over one edge.
///
/// `receiver_is_customer` says whether the receiving neighbor is a customer
/// of the holder; `coalition_edge` whether both ends belong to a coalition
/// that shares every best route.
pub(crate) fn may_export(learned_from: LearnedFrom, receiver_is_customer: bool, coalition_edge: bool) -> bool {
    match learned_from {
        LearnedFrom::SelfOriginated | LearnedFrom::Customer => true,
        LearnedFrom::Peer | LearnedFrom::Provider => receiver_is_customer || coalition_edge,
    }
}

/// Neighbors of `holder` that receive `route`.
///
/// Customer-learned and self-originated routes go to everyone; peer- and
/// provider-learned routes only to customers. With a coalition, members also
/// send every best route to adjacent members.
pub fn export_targets(
    graph: &AsGraph,
    route: &Route,
    holder: Asn,
    coalition: Option<&BTreeSet<Asn>>,
) -> BTreeSet<Asn> {
    let holder_in = coalition.is_some_and(|c| c.contains(&holder));
    graph
        .neighbors(holder)
        .filter(|&(n, rel)| {
            let coalition_edge = holder_in && coalition.is_some_and(|c| c.contains(&n));
            may_export(route.learned_from, rel == Relationship::CustomerOf, coalition_edge)
        })
        .map(|(n, _)| n)
        .collect()
}

/// A route as sent over the wire: the sender has already prepended itself
/// unless it is the origin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Advertisement {
    pub block: BlockKey,
    pub path: AsPath,
    pub sender: Asn,
}

/// Loop detection: rejects iff `receiver` appears anywhere in the path.
/// Returns `None` also when sender and receiver are not adjacent.
pub fn accept_route(graph: &AsGraph, receiver: Asn, adv: &Advertisement) -> Option<Route> {
    let rel = graph.relationship(adv.sender, receiver)?;
    if adv.path.contains(receiver) {
        return None;
    }
    Some(Route {
        block: adv.block,
        path: adv.path.clone(),
        next_hop: adv.sender,
        learned_from: LearnedFrom::from_relationship(rel),
    })
}
