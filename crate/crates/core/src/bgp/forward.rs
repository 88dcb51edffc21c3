use thiserror::Error;

use super::{AsPath, BlockKey, Rib, Specificity};
use crate::topology::Asn;

/// An address inside `origin`'s space, identified by the most specific
/// block it falls in.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Destination {
    pub origin: Asn,
    pub leaf: Specificity,
}

impl Destination {
    pub fn parent(origin: Asn) -> Self {
        Destination {
            origin,
            leaf: Specificity::Parent,
        }
    }

    /// Blocks covering this address, most specific first.
    fn covering(&self) -> impl Iterator<Item = BlockKey> {
        let origin = self.origin;
        let sub = (self.leaf != Specificity::Parent).then_some(self.leaf);
        sub.into_iter().chain([Specificity::Parent]).map(move |specificity| BlockKey { origin, specificity })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForwardError {
    #[error("no route at AS {at}")]
    Unreachable { at: Asn },
    #[error("forwarding loop: {path}")]
    Loop { path: AsPath },
}

/// Walks hop by hop: each AS forwards on its own best route for the most
/// specific installed block that covers the destination.
pub fn forward_path(rib: &Rib<'_>, source: Asn, dest: Destination) -> Result<AsPath, ForwardError> {
    let graph = rib.graph();
    let mut hops = vec![source];
    let mut visited = vec![false; graph.len()];
    let mut at = source;
    loop {
        if at == dest.origin {
            return Ok(AsPath::new(hops).expect("non-empty"));
        }
        let idx = graph.index_of(at).ok_or(ForwardError::Unreachable { at })?;
        if visited[idx] {
            return Err(ForwardError::Loop {
                path: AsPath::new(hops).expect("non-empty"),
            });
        }
        visited[idx] = true;
        let next = dest
            .covering()
            .find_map(|key| rib.block(key).and_then(|b| b.best_at(idx)))
            .map(|r| r.next_hop)
            .ok_or(ForwardError::Unreachable { at })?;
        hops.push(next);
        at = next;
    }
}
