//! Path-vector route computation with Gao-Rexford style policy.
//!
//! Convergence is computed per address block: blocks never interact during
//! route selection, only during forwarding (longest prefix wins).

mod decision;
mod engine;
mod export;
mod forward;
mod rib;

use std::fmt;

use thiserror::Error;

use crate::topology::{AsGraph, Asn, Relationship};

pub use decision::{decide_best, DecisionProcess, DecisionRule, RankedCandidate};
pub use engine::{converge, AdvertiseScope, Origination, RoutingPolicy, DEFAULT_ROUNDS_PER_NODE};
pub use export::{accept_route, export_targets, Advertisement};
pub use forward::{forward_path, Destination, ForwardError};
pub use rib::{BlockRib, Rib};

/// Non-empty AS path, most recent prepender first and origin last.
///
/// Poisoned paths may repeat the origin after a run of inserted ASNs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AsPath(Vec<Asn>);

impl AsPath {
    pub fn new(hops: Vec<Asn>) -> Option<Self> {
        (!hops.is_empty()).then_some(AsPath(hops))
    }

    pub fn origin_only(origin: Asn) -> Self {
        AsPath(vec![origin])
    }

    pub fn as_slice(&self) -> &[Asn] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> Asn {
        self.0[0]
    }

    pub fn last(&self) -> Asn {
        self.0[self.0.len() - 1]
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.0.contains(&asn)
    }

    pub fn prepend(&self, asn: Asn) -> AsPath {
        let mut hops = Vec::with_capacity(self.0.len() + 1);
        hops.push(asn);
        hops.extend_from_slice(&self.0);
        AsPath(hops)
    }

    /// The hops up to and including the first occurrence of `origin`, which
    /// drops any poisoning appended after it.
    pub fn effective(&self, origin: Asn) -> &[Asn] {
        match self.0.iter().position(|&a| a == origin) {
            Some(i) => &self.0[..=i],
            None => &self.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Asn> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for AsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for AsPath {
    type Err = crate::topology::TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hops = s.split_whitespace().map(str::parse).collect::<Result<Vec<Asn>, _>>()?;
        AsPath::new(hops).ok_or_else(|| crate::topology::TopologyError::InvalidAsn(s.to_string()))
    }
}

/// Position of a block in the two-level address hierarchy.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Specificity {
    Parent,
    SubLow,
    SubHigh,
}

impl Specificity {
    pub fn name(self) -> &'static str {
        match self {
            Specificity::Parent => "parent",
            Specificity::SubLow => "sub_low",
            Specificity::SubHigh => "sub_high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "parent" => Some(Specificity::Parent),
            "sub_low" => Some(Specificity::SubLow),
            "sub_high" => Some(Specificity::SubHigh),
            _ => None,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockKey {
    pub origin: Asn,
    pub specificity: Specificity,
}

impl BlockKey {
    pub fn parent(origin: Asn) -> Self {
        BlockKey {
            origin,
            specificity: Specificity::Parent,
        }
    }
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.origin, self.specificity.name())
    }
}

/// A symbolic address block. Sub-blocks each carry half of their parent.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AddressBlock {
    pub key: BlockKey,
    pub weight: f64,
}

impl AddressBlock {
    pub fn parent(origin: Asn, weight: f64) -> Self {
        AddressBlock {
            key: BlockKey::parent(origin),
            weight,
        }
    }

    pub fn parent_of(graph: &AsGraph, origin: Asn) -> Self {
        let weight = graph.attributes(origin).map_or(1.0, |a| a.ip_weight);
        Self::parent(origin, weight)
    }

    /// The two halves of a parent block.
    pub fn split(&self) -> [AddressBlock; 2] {
        debug_assert_eq!(self.key.specificity, Specificity::Parent);
        let half = self.weight / 2.0;
        let sub = |specificity| AddressBlock {
            key: BlockKey {
                origin: self.key.origin,
                specificity,
            },
            weight: half,
        };
        [sub(Specificity::SubLow), sub(Specificity::SubHigh)]
    }
}

/// Where the holder learned a route, relative to itself.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LearnedFrom {
    SelfOriginated,
    Customer,
    Peer,
    Provider,
}

impl LearnedFrom {
    /// From the kind of the edge `(neighbor, holder)`.
    pub fn from_relationship(rel: Relationship) -> Self {
        match rel {
            Relationship::CustomerOf => LearnedFrom::Customer,
            Relationship::ProviderOf => LearnedFrom::Provider,
            Relationship::Peer | Relationship::Sibling => LearnedFrom::Peer,
        }
    }

    /// Customer 100, peer 90, provider 80. Only the order matters.
    pub fn local_pref(self) -> u32 {
        match self {
            LearnedFrom::SelfOriginated => 1000,
            LearnedFrom::Customer => 100,
            LearnedFrom::Peer => 90,
            LearnedFrom::Provider => 80,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LearnedFrom::SelfOriginated => "self",
            LearnedFrom::Customer => "customer",
            LearnedFrom::Peer => "peer",
            LearnedFrom::Provider => "provider",
        }
    }
}

/// A candidate path held by some AS for one block.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Route {
    pub block: BlockKey,
    /// Starts at `next_hop`, or at the origin for self-originated routes.
    pub path: AsPath,
    pub next_hop: Asn,
    pub learned_from: LearnedFrom,
}

impl Route {
    pub fn self_originated(block: BlockKey, path: AsPath) -> Self {
        Route {
            block,
            next_hop: block.origin,
            path,
            learned_from: LearnedFrom::SelfOriginated,
        }
    }

    pub fn effective_path(&self) -> &[Asn] {
        self.path.effective(self.block.origin)
    }
}

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("no convergence within {rounds} rounds for blocks {}", list(.blocks))]
    NonConvergence { blocks: Vec<BlockKey>, rounds: usize },
    #[error("graph still has sibling edges; alias them first")]
    SiblingEdges,
    #[error("unknown AS {0}")]
    UnknownAs(Asn),
    #[error("invalid decision process: {0}")]
    InvalidProcess(String),
    #[error("block {0} is originated more than once")]
    DuplicateBlock(BlockKey),
}

fn list(blocks: &[BlockKey]) -> String {
    blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ")
}

/// True iff the AS sequence (traffic direction, first hop first) climbs
/// customer-to-provider edges, crosses at most one peer edge, then only
/// descends. Unknown edges fail the check.
pub fn is_valley_free(graph: &AsGraph, hops: &[Asn]) -> bool {
    let mut descending = false;
    for w in hops.windows(2) {
        match graph.relationship(w[0], w[1]) {
            Some(Relationship::CustomerOf) if !descending => {}
            Some(Relationship::Peer) if !descending => descending = true,
            Some(Relationship::ProviderOf) => descending = true,
            _ => return false,
        }
    }
    true
}
