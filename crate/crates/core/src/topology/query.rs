use std::collections::BTreeSet;

use super::{AsGraph, Asn, Country, Relationship, TopologyError};

/// `root` plus every AS reachable by walking provider-to-customer edges.
pub fn customer_cone(graph: &AsGraph, root: Asn) -> Result<BTreeSet<Asn>, TopologyError> {
    let start = graph.index_of(root).ok_or(TopologyError::UnknownAs(root))?;
    let mut seen = vec![false; graph.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for &(u, r) in graph.neighbors_at(v) {
            if r == Relationship::CustomerOf && !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    Ok(seen
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| graph.asn_at(i))
        .collect())
}

/// The `ceil(fraction * |ASes|)` ASes of highest degree, ties to the lower ASN.
pub fn select_coalition_top_degree(graph: &AsGraph, fraction: f64) -> BTreeSet<Asn> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must lie in (0, 1]");
    // guard against 0.3 * 10 = 3.0000000000000004 style rounding
    let want = ((fraction * graph.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut ranked: Vec<Asn> = graph.asns().to_vec();
    ranked.sort_by_key(|&a| (std::cmp::Reverse(graph.degree(a)), a));
    ranked.into_iter().take(want.min(graph.len())).collect()
}

/// ASes in `country` with at least one neighbor elsewhere. Neighbors of
/// unknown country count as foreign.
pub fn country_border_ases(graph: &AsGraph, country: &str) -> BTreeSet<Asn> {
    let target = Country::new(country);
    let in_country = |i: usize| graph.attributes_at(i).country.as_ref() == Some(&target);
    (0..graph.len())
        .filter(|&v| in_country(v) && graph.neighbors_at(v).iter().any(|&(u, _)| !in_country(u)))
        .map(|v| graph.asn_at(v))
        .collect()
}
