//! The annotated AS-relationship graph.
//!
//! Each AS is a single BGP speaker. Edges carry the business relationship,
//! stored once per direction: if `(a, b)` is [`Relationship::ProviderOf`]
//! then `(b, a)` is [`Relationship::CustomerOf`].

mod alias;
mod parse;
mod query;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use alias::alias_siblings;
pub use parse::{parse_as_relationships, parse_attributes, AttributeRecord};
pub use query::{country_border_ases, customer_cone, select_coalition_top_degree};

/// Autonomous system number. Always nonzero.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Asn(u32);

impl Asn {
    /// Panics on zero; use [`Asn::try_new`] for untrusted input.
    pub const fn new(value: u32) -> Self {
        assert!(value > 0, "ASN must be positive");
        Asn(value)
    }

    pub fn try_new(value: u32) -> Option<Self> {
        (value > 0).then_some(Asn(value))
    }

    pub const fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::str::FromStr for Asn {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .parse::<u32>()
            .ok()
            .and_then(Asn::try_new)
            .ok_or_else(|| TopologyError::InvalidAsn(s.trim().to_string()))
    }
}

/// Kind of the directed edge `(a, b)`, read as "a is ... b".
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relationship {
    ProviderOf,
    CustomerOf,
    Peer,
    Sibling,
}

impl Relationship {
    pub fn inverse(self) -> Self {
        match self {
            Relationship::ProviderOf => Relationship::CustomerOf,
            Relationship::CustomerOf => Relationship::ProviderOf,
            other => other,
        }
    }
}

/// ISO-3166 style country code, upper-cased.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Country(String);

impl Country {
    pub fn new(code: &str) -> Self {
        Country(code.trim().to_ascii_uppercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Per-AS metadata from the attribute sidecar.
#[derive(Clone, Debug, PartialEq)]
pub struct AsAttributes {
    /// `None` means unknown.
    pub country: Option<Country>,
    /// Relative address-space size.
    pub ip_weight: f64,
    /// `None` falls back to the degree/address-space heuristic in the traffic model.
    pub traffic_in_weight: Option<f64>,
    pub traffic_out_weight: Option<f64>,
    /// Large content provider.
    pub super_as: bool,
    /// Super-ASes that run a local cache node inside this AS.
    pub cdn_hosts: BTreeSet<Asn>,
}

impl Default for AsAttributes {
    fn default() -> Self {
        AsAttributes {
            country: None,
            ip_weight: 1.0,
            traffic_in_weight: None,
            traffic_out_weight: None,
            super_as: false,
            cdn_hosts: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("conflicting relationships for {a}-{b}: {first:?} vs {second:?}")]
    Conflict {
        a: Asn,
        b: Asn,
        first: Relationship,
        second: Relationship,
    },
    #[error("self-edge on AS {0}")]
    SelfEdge(Asn),
    #[error("unknown AS {0}")]
    UnknownAs(Asn),
    #[error("invalid AS number {0:?}")]
    InvalidAsn(String),
    #[error("invalid attributes for AS {asn}: {message}")]
    InvalidAttributes { asn: Asn, message: String },
}

/// Immutable AS-level topology.
#[derive(Clone, Debug, PartialEq)]
pub struct AsGraph {
    asns: Vec<Asn>,
    index: HashMap<Asn, usize>,
    attrs: Vec<AsAttributes>,
    // adj[v] = (u, kind of edge (u, v)), sorted by u's ASN.
    adj: Vec<Vec<(usize, Relationship)>>,
}

impl AsGraph {
    /// Builds a graph from undirected edge declarations. Each `(a, b, rel)`
    /// states the kind of `(a, b)`; the inverse is materialized. Repeating an
    /// edge with the same meaning is allowed, a contradicting one is not.
    pub fn from_edges<I>(edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (Asn, Asn, Relationship)>,
    {
        let mut builder = GraphBuilder::default();
        for (a, b, rel) in edges {
            builder.add_edge(a, b, rel)?;
        }
        Ok(builder.build())
    }

    pub fn len(&self) -> usize {
        self.asns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asns.is_empty()
    }

    /// All ASNs in ascending order.
    pub fn asns(&self) -> &[Asn] {
        &self.asns
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.index.contains_key(&asn)
    }

    pub fn index_of(&self, asn: Asn) -> Option<usize> {
        self.index.get(&asn).copied()
    }

    pub fn asn_at(&self, idx: usize) -> Asn {
        self.asns[idx]
    }

    pub fn attributes(&self, asn: Asn) -> Option<&AsAttributes> {
        self.index_of(asn).map(|i| &self.attrs[i])
    }

    pub(crate) fn attributes_at(&self, idx: usize) -> &AsAttributes {
        &self.attrs[idx]
    }

    /// Kind of the edge `(a, b)`, if the two are adjacent.
    pub fn relationship(&self, a: Asn, b: Asn) -> Option<Relationship> {
        let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
        self.relationship_at(ia, ib)
    }

    pub(crate) fn relationship_at(&self, a: usize, b: usize) -> Option<Relationship> {
        // adj[b] holds the kind of (a, b)
        let list = &self.adj[b];
        list.binary_search_by_key(&self.asns[a], |&(u, _)| self.asns[u])
            .ok()
            .map(|i| list[i].1)
    }

    /// Neighbors of `asn` with the kind of edge `(neighbor, asn)`, i.e. what
    /// each neighbor is to `asn`. Sorted by neighbor ASN.
    pub fn neighbors(&self, asn: Asn) -> impl Iterator<Item = (Asn, Relationship)> + '_ {
        let list = self.index_of(asn).map(|i| self.adj[i].as_slice()).unwrap_or(&[]);
        list.iter().map(move |&(u, r)| (self.asns[u], r))
    }

    pub(crate) fn neighbors_at(&self, idx: usize) -> &[(usize, Relationship)] {
        &self.adj[idx]
    }

    pub fn degree(&self, asn: Asn) -> usize {
        self.index_of(asn).map_or(0, |i| self.adj[i].len())
    }

    /// Customers of `asn`.
    pub fn customers(&self, asn: Asn) -> impl Iterator<Item = Asn> + '_ {
        self.neighbors(asn)
            .filter(|&(_, r)| r == Relationship::CustomerOf)
            .map(|(u, _)| u)
    }

    pub fn customer_count(&self, asn: Asn) -> usize {
        self.customers(asn).count()
    }

    pub fn has_siblings(&self) -> bool {
        self.adj.iter().flatten().any(|&(_, r)| r == Relationship::Sibling)
    }

    /// Every directed edge `(a, b, kind of (a, b))`, each undirected edge
    /// appearing twice.
    pub fn edges(&self) -> impl Iterator<Item = (Asn, Asn, Relationship)> + '_ {
        self.adj.iter().enumerate().flat_map(move |(b, list)| {
            list.iter().map(move |&(a, r)| (self.asns[a], self.asns[b], r))
        })
    }

    /// Replaces attributes for the listed ASes. Entries for ASes that are
    /// not in the graph are rejected.
    pub fn with_attributes<I>(mut self, records: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (Asn, AsAttributes)>,
    {
        for (asn, attrs) in records {
            let idx = self.index_of(asn).ok_or(TopologyError::UnknownAs(asn))?;
            validate_attributes(asn, &attrs)?;
            self.attrs[idx] = attrs;
        }
        Ok(self)
    }

    /// Sets one AS's country. Convenience for building test topologies.
    pub fn with_country(mut self, asn: Asn, country: &str) -> Result<Self, TopologyError> {
        let idx = self.index_of(asn).ok_or(TopologyError::UnknownAs(asn))?;
        self.attrs[idx].country = Some(Country::new(country));
        Ok(self)
    }

    /// Checks the relationship symmetry invariant.
    pub fn check_symmetry(&self) -> bool {
        self.adj.iter().enumerate().all(|(b, list)| {
            list.iter()
                .all(|&(a, r)| a != b && self.relationship_at(b, a) == Some(r.inverse()))
        })
    }
}

fn validate_attributes(asn: Asn, attrs: &AsAttributes) -> Result<(), TopologyError> {
    let bad = |message: &str| TopologyError::InvalidAttributes {
        asn,
        message: message.to_string(),
    };
    let ok = |w: f64| w.is_finite() && w >= 0.0;
    if !ok(attrs.ip_weight) {
        return Err(bad("ip_weight must be finite and nonnegative"));
    }
    for w in [attrs.traffic_in_weight, attrs.traffic_out_weight].into_iter().flatten() {
        if !ok(w) {
            return Err(bad("traffic weights must be finite and nonnegative"));
        }
    }
    if attrs.super_as && attrs.traffic_out_weight == Some(0.0) {
        return Err(bad("a super AS needs a positive outbound weight"));
    }
    Ok(())
}

#[derive(Default)]
pub(crate) struct GraphBuilder {
    edges: BTreeMap<(Asn, Asn), Relationship>,
    nodes: BTreeMap<Asn, AsAttributes>,
}

impl GraphBuilder {
    pub(crate) fn add_node(&mut self, asn: Asn, attrs: AsAttributes) {
        self.nodes.insert(asn, attrs);
    }

    pub(crate) fn add_edge(&mut self, a: Asn, b: Asn, rel: Relationship) -> Result<(), TopologyError> {
        if a == b {
            return Err(TopologyError::SelfEdge(a));
        }
        if let Some(&existing) = self.edges.get(&(a, b)) {
            if existing != rel {
                return Err(TopologyError::Conflict {
                    a,
                    b,
                    first: existing,
                    second: rel,
                });
            }
            return Ok(());
        }
        self.edges.insert((a, b), rel);
        self.edges.insert((b, a), rel.inverse());
        self.nodes.entry(a).or_default();
        self.nodes.entry(b).or_default();
        Ok(())
    }

    pub(crate) fn build(self) -> AsGraph {
        let asns: Vec<Asn> = self.nodes.keys().copied().collect();
        let index: HashMap<Asn, usize> = asns.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let attrs = self.nodes.into_values().collect();
        let mut adj = vec![Vec::new(); asns.len()];
        // BTreeMap order is by (a, b), so each adj[b] list ends up sorted by a.
        for ((a, b), rel) in self.edges {
            adj[index[&b]].push((index[&a], rel));
        }
        AsGraph {
            asns,
            index,
            attrs,
            adj,
        }
    }
}
