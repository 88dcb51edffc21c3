use std::collections::BTreeMap;

use super::{AsAttributes, AsGraph, GraphBuilder, Relationship};

/// Collapses every sibling-connected component into its lowest ASN.
///
/// Edges to the outside are re-attached to the survivor. When members of a
/// component disagree about an external neighbor, the kind of the edge from
/// the lower to the higher ASN is chosen by precedence
/// `ProviderOf > CustomerOf > Peer`. Weights are summed.
pub fn alias_siblings(graph: &AsGraph) -> AsGraph {
    if !graph.has_siblings() {
        return graph.clone();
    }
    let n = graph.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for v in 0..n {
        for &(u, r) in graph.neighbors_at(v) {
            if r == Relationship::Sibling {
                let (a, b) = (find(&mut parent, u), find(&mut parent, v));
                // indices follow ASN order, so the smaller index is the lower ASN
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent[hi] = lo;
            }
        }
    }
    let rep: Vec<usize> = (0..n).map(|v| find(&mut parent, v)).collect();

    let mut merged: BTreeMap<usize, AsAttributes> = BTreeMap::new();
    for v in 0..n {
        let attrs = graph.attributes_at(v);
        match merged.get_mut(&rep[v]) {
            None => {
                merged.insert(rep[v], attrs.clone());
            }
            Some(acc) => merge_into(acc, attrs),
        }
    }

    let mut pairs: BTreeMap<(usize, usize), Relationship> = BTreeMap::new();
    for b in 0..n {
        for &(a, r) in graph.neighbors_at(b) {
            let (ra, rb) = (rep[a], rep[b]);
            if ra == rb || r == Relationship::Sibling {
                continue;
            }
            let (key, rel) = if ra < rb { ((ra, rb), r) } else { ((rb, ra), r.inverse()) };
            pairs
                .entry(key)
                .and_modify(|cur| {
                    if precedence(rel) < precedence(*cur) {
                        *cur = rel;
                    }
                })
                .or_insert(rel);
        }
    }

    let mut builder = GraphBuilder::default();
    for (r, mut attrs) in merged {
        attrs.cdn_hosts = attrs
            .cdn_hosts
            .iter()
            .map(|&h| graph.index_of(h).map_or(h, |i| graph.asn_at(rep[i])))
            .collect();
        builder.add_node(graph.asn_at(r), attrs);
    }
    for ((a, b), rel) in pairs {
        builder
            .add_edge(graph.asn_at(a), graph.asn_at(b), rel)
            .expect("pairs are unique and never self-edges");
    }
    builder.build()
}

fn precedence(r: Relationship) -> u8 {
    match r {
        Relationship::ProviderOf => 0,
        Relationship::CustomerOf => 1,
        Relationship::Peer => 2,
        Relationship::Sibling => 3,
    }
}

fn merge_into(acc: &mut AsAttributes, other: &AsAttributes) {
    if acc.country.is_none() {
        acc.country = other.country.clone();
    }
    acc.ip_weight += other.ip_weight;
    // a member without an explicit weight contributes nothing to the sum
    acc.traffic_in_weight = add_opt(acc.traffic_in_weight, other.traffic_in_weight);
    acc.traffic_out_weight = add_opt(acc.traffic_out_weight, other.traffic_out_weight);
    acc.super_as |= other.super_as;
    acc.cdn_hosts.extend(other.cdn_hosts.iter().copied());
}

fn add_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (None, None) => None,
        (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
    }
}
