use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;

use super::decision::DecisionProcess;
use super::engine::{self, EngineCtx, Entry, Origination};
use super::{BlockKey, Route};
use crate::topology::{AsGraph, Asn};

/// Converged state of one block: each AS's selected route.
#[derive(Clone, Debug)]
pub struct BlockRib {
    origination: Origination,
    entries: Vec<Option<Entry>>,
}

impl BlockRib {
    pub(crate) fn new(origination: Origination, entries: Vec<Option<Entry>>) -> Self {
        BlockRib { origination, entries }
    }

    pub fn origination(&self) -> &Origination {
        &self.origination
    }

    pub(crate) fn entries(&self) -> &[Option<Entry>] {
        &self.entries
    }

    pub(crate) fn entry(&self, idx: usize) -> Option<&Entry> {
        self.entries[idx].as_ref()
    }

    pub(crate) fn best_at(&self, idx: usize) -> Option<&Route> {
        self.entries[idx].as_ref().map(|e| &e.route)
    }

    /// Number of ASes holding a route.
    pub fn reach(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

/// Converged routing state for a set of blocks over one graph.
#[derive(Clone, Debug)]
pub struct Rib<'g> {
    graph: &'g AsGraph,
    ctx: Arc<EngineCtx>,
    blocks: BTreeMap<BlockKey, BlockRib>,
}

impl<'g> Rib<'g> {
    pub(crate) fn new(graph: &'g AsGraph, ctx: Arc<EngineCtx>, blocks: BTreeMap<BlockKey, BlockRib>) -> Self {
        Rib { graph, ctx, blocks }
    }

    pub fn graph(&self) -> &'g AsGraph {
        self.graph
    }

    pub fn block(&self, key: BlockKey) -> Option<&BlockRib> {
        self.blocks.get(&key)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&BlockKey, &BlockRib)> {
        self.blocks.iter()
    }

    /// `holder`'s selected route for `key`.
    pub fn best(&self, holder: Asn, key: BlockKey) -> Option<&Route> {
        let idx = self.graph.index_of(holder)?;
        self.blocks.get(&key)?.best_at(idx)
    }

    /// Whether `holder`'s selected route avoids every deployer.
    pub fn best_is_clean(&self, holder: Asn, key: BlockKey) -> Option<bool> {
        let idx = self.graph.index_of(holder)?;
        self.blocks.get(&key)?.entry(idx).map(|e| e.clean)
    }

    /// The routes `holder` receives at the fixed point, one per exporting
    /// neighbor that passes loop detection.
    pub fn candidates(&self, holder: Asn, key: BlockKey) -> Vec<Route> {
        match (self.graph.index_of(holder), self.blocks.get(&key)) {
            (Some(idx), Some(block)) => engine::candidates_at(self.graph, &self.ctx, block, idx),
            _ => Vec::new(),
        }
    }

    /// The decision process `holder` runs.
    pub fn process(&self, holder: Asn) -> Option<&DecisionProcess> {
        self.graph.index_of(holder).map(|i| engine::process_at(&self.ctx, i))
    }

    pub fn is_deployer(&self, asn: Asn) -> bool {
        self.graph.index_of(asn).is_some_and(|i| engine::is_deployer_at(&self.ctx, i))
    }

    /// Every `(holder, route)` pair, by block then holder.
    pub fn routes(&self) -> impl Iterator<Item = (Asn, &Route)> + '_ {
        self.blocks.values().flat_map(move |b| {
            b.entries
                .iter()
                .enumerate()
                .filter_map(move |(i, e)| e.as_ref().map(|e| (self.graph.asn_at(i), &e.route)))
        })
    }

    /// Writes `asn,origin_asn,specificity,path,learned_from` records.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "asn,origin_asn,specificity,path,learned_from")?;
        for (holder, route) in self.routes() {
            writeln!(
                out,
                "{},{},{},{},{}",
                holder,
                route.block.origin,
                route.block.specificity.name(),
                route.path,
                route.learned_from.name()
            )?;
        }
        Ok(())
    }
}
