use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;

use super::decision::{DecisionProcess, RankedCandidate};
use super::export::may_export;
use super::rib::{BlockRib, Rib};
use super::{AddressBlock, AsPath, BlockKey, LearnedFrom, Route, RoutingError};
use crate::strategies::Deployment;
use crate::topology::{AsGraph, Asn, Relationship};

/// Round cap per node when [`RoutingPolicy::max_rounds`] is unset.
pub const DEFAULT_ROUNDS_PER_NODE: usize = 10;

/// Which neighbors the origin sends its own advertisement to.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum AdvertiseScope {
    #[default]
    All,
    Only(BTreeSet<Asn>),
}

impl AdvertiseScope {
    pub fn allows(&self, neighbor: Asn) -> bool {
        match self {
            AdvertiseScope::All => true,
            AdvertiseScope::Only(set) => set.contains(&neighbor),
        }
    }
}

/// A block announced by its origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Origination {
    pub block: AddressBlock,
    /// What the origin puts on the wire. Starts and ends with the origin.
    pub path: AsPath,
    pub scope: AdvertiseScope,
}

impl Origination {
    /// The normal announcement of an AS's own parent block.
    pub fn parent(graph: &AsGraph, origin: Asn) -> Self {
        Origination {
            block: AddressBlock::parent_of(graph, origin),
            path: AsPath::origin_only(origin),
            scope: AdvertiseScope::All,
        }
    }

    /// Parent announcements for every AS in the graph.
    pub fn all_parents(graph: &AsGraph) -> Vec<Self> {
        graph.asns().iter().map(|&a| Self::parent(graph, a)).collect()
    }
}

/// Per-AS decision processes, the coalition export extension, and the
/// deployment that defines which paths are clean.
#[derive(Clone, Debug, Default)]
pub struct RoutingPolicy {
    /// ASes not listed run [`DecisionProcess::baseline`].
    pub processes: BTreeMap<Asn, DecisionProcess>,
    /// Members send every best route to adjacent members.
    pub coalition_export: BTreeSet<Asn>,
    pub deployment: Deployment,
    /// Sweep cap; `None` means `10 * |ASes|`.
    pub max_rounds: Option<usize>,
}

impl RoutingPolicy {
    pub fn baseline() -> Self {
        Self::default()
    }
}

/// Flattened policy indexed by node.
#[derive(Debug)]
pub(crate) struct EngineCtx {
    processes: Vec<DecisionProcess>,
    process_of: Vec<usize>,
    coalition: Vec<bool>,
    deployer: Vec<bool>,
    cap: usize,
}

impl EngineCtx {
    fn new(graph: &AsGraph, policy: &RoutingPolicy) -> Result<Self, RoutingError> {
        let n = graph.len();
        let mut processes = vec![DecisionProcess::baseline()];
        let mut process_of = vec![0; n];
        for (&asn, p) in &policy.processes {
            let idx = graph.index_of(asn).ok_or(RoutingError::UnknownAs(asn))?;
            let slot = match processes.iter().position(|q| q == p) {
                Some(s) => s,
                None => {
                    processes.push(p.clone());
                    processes.len() - 1
                }
            };
            process_of[idx] = slot;
        }
        let flags = |set: &BTreeSet<Asn>| {
            let mut v = vec![false; n];
            for a in set {
                if let Some(i) = graph.index_of(*a) {
                    v[i] = true;
                }
            }
            v
        };
        Ok(EngineCtx {
            processes,
            process_of,
            coalition: flags(&policy.coalition_export),
            deployer: flags(policy.deployment.deployers()),
            cap: policy.max_rounds.unwrap_or(DEFAULT_ROUNDS_PER_NODE * n.max(1)),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Entry {
    pub(crate) route: Route,
    /// No deployer on the route's effective path.
    pub(crate) clean: bool,
}

struct View<'a> {
    next_hop: Asn,
    learned: LearnedFrom,
    len: usize,
    clean: bool,
    entry: &'a Entry,
}

impl RankedCandidate for View<'_> {
    fn learned_from(&self) -> LearnedFrom {
        self.learned
    }
    fn path_len(&self) -> usize {
        self.len
    }
    fn is_clean(&self) -> bool {
        self.clean
    }
    fn next_hop(&self) -> Asn {
        self.next_hop
    }
}

impl View<'_> {
    fn materialize(&self, block: BlockKey) -> Entry {
        let path = if self.entry.route.learned_from == LearnedFrom::SelfOriginated {
            self.entry.route.path.clone()
        } else {
            self.entry.route.path.prepend(self.next_hop)
        };
        Entry {
            route: Route {
                block,
                path,
                next_hop: self.next_hop,
                learned_from: self.learned,
            },
            clean: self.clean,
        }
    }
}

/// Routes `v` would receive given everyone else's current best.
fn candidate_views<'a>(
    graph: &AsGraph,
    ctx: &EngineCtx,
    scope: &AdvertiseScope,
    state: &'a [Option<Entry>],
    v: usize,
) -> Vec<View<'a>> {
    let me = graph.asn_at(v);
    let mut out = Vec::new();
    for &(u, kind_uv) in graph.neighbors_at(v) {
        let Some(entry) = &state[u] else { continue };
        let self_orig = entry.route.learned_from == LearnedFrom::SelfOriginated;
        let allowed = if self_orig {
            scope.allows(me)
        } else {
            let v_is_customer = kind_uv == Relationship::ProviderOf;
            may_export(entry.route.learned_from, v_is_customer, ctx.coalition[u] && ctx.coalition[v])
        };
        if !allowed || entry.route.path.contains(me) {
            continue;
        }
        let (len, clean) = if self_orig {
            (entry.route.path.len(), entry.clean)
        } else {
            (entry.route.path.len() + 1, entry.clean && !ctx.deployer[u])
        };
        out.push(View {
            next_hop: graph.asn_at(u),
            learned: LearnedFrom::from_relationship(kind_uv),
            len,
            clean,
            entry,
        });
    }
    out
}

fn evaluate(graph: &AsGraph, ctx: &EngineCtx, orig: &Origination, state: &[Option<Entry>], v: usize) -> Option<Entry> {
    let views = candidate_views(graph, ctx, &orig.scope, state, v);
    let process = &ctx.processes[ctx.process_of[v]];
    let survivors = process.survivors(&views);
    // next hops are distinct, so exactly one survives
    survivors.first().map(|&i| views[i].materialize(orig.block.key))
}

/// Rounds of in-place sweeps: dirty ASes are re-evaluated in index order and
/// each sees updates made earlier in the same sweep. Lock-step updates would
/// oscillate forever on mutually preferring neighbors; a fixed order breaks
/// the symmetry while staying deterministic.
fn converge_block(graph: &AsGraph, ctx: &EngineCtx, orig: &Origination) -> Result<Vec<Option<Entry>>, usize> {
    let n = graph.len();
    let origin = graph
        .index_of(orig.block.key.origin)
        .expect("origin validated before convergence");
    let mut state: Vec<Option<Entry>> = vec![None; n];
    state[origin] = Some(Entry {
        route: Route::self_originated(orig.block.key, orig.path.clone()),
        clean: !ctx.deployer[origin],
    });
    let mut mark = vec![false; n];
    let mut dirty = Vec::new();
    let touch = |c: usize, mark: &mut [bool], dirty: &mut Vec<usize>| {
        for &(u, _) in graph.neighbors_at(c) {
            if u != origin && !mark[u] {
                mark[u] = true;
                dirty.push(u);
            }
        }
    };
    touch(origin, &mut mark, &mut dirty);
    let mut rounds = 0;
    while !dirty.is_empty() {
        rounds += 1;
        if rounds > ctx.cap {
            return Err(rounds - 1);
        }
        let mut sweep = std::mem::take(&mut dirty);
        sweep.sort_unstable();
        for &v in &sweep {
            mark[v] = false;
        }
        for v in sweep {
            let next = evaluate(graph, ctx, orig, &state, v);
            if next != state[v] {
                state[v] = next;
                touch(v, &mut mark, &mut dirty);
            }
        }
    }
    Ok(state)
}

fn validate(graph: &AsGraph, originations: &[Origination]) -> Result<(), RoutingError> {
    if graph.has_siblings() {
        return Err(RoutingError::SiblingEdges);
    }
    let mut seen = BTreeSet::new();
    for o in originations {
        let origin = o.block.key.origin;
        if !graph.contains(origin) {
            return Err(RoutingError::UnknownAs(origin));
        }
        if o.path.first() != origin || o.path.last() != origin {
            return Err(RoutingError::InvalidProcess(format!(
                "origination path {} of block {} must start and end at the origin",
                o.path, o.block.key
            )));
        }
        if !seen.insert(o.block.key) {
            return Err(RoutingError::DuplicateBlock(o.block.key));
        }
    }
    Ok(())
}

/// Runs every block to its fixed point. Blocks converge independently and
/// in parallel; the result does not depend on thread count.
pub fn converge<'g>(
    graph: &'g AsGraph,
    originations: &[Origination],
    policy: &RoutingPolicy,
) -> Result<Rib<'g>, RoutingError> {
    validate(graph, originations)?;
    let ctx = Arc::new(EngineCtx::new(graph, policy)?);
    let results: Vec<Result<Vec<Option<Entry>>, usize>> = originations
        .par_iter()
        .map(|o| converge_block(graph, &ctx, o))
        .collect();
    let mut failed = Vec::new();
    let mut rounds = 0;
    let mut blocks = BTreeMap::new();
    for (o, r) in originations.iter().zip(results) {
        match r {
            Ok(state) => {
                blocks.insert(o.block.key, BlockRib::new(o.clone(), state));
            }
            Err(k) => {
                rounds = k;
                failed.push(o.block.key);
            }
        }
    }
    if !failed.is_empty() {
        return Err(RoutingError::NonConvergence { blocks: failed, rounds });
    }
    Ok(Rib::new(graph, ctx, blocks))
}

/// Candidates at `holder` in a converged block, as full routes.
pub(crate) fn candidates_at(graph: &AsGraph, ctx: &EngineCtx, block: &BlockRib, holder: usize) -> Vec<Route> {
    let origin = graph.index_of(block.origination().block.key.origin);
    if origin == Some(holder) {
        return block.entry(holder).map(|e| vec![e.route.clone()]).unwrap_or_default();
    }
    candidate_views(graph, ctx, &block.origination().scope, block.entries(), holder)
        .iter()
        .map(|v| v.materialize(block.origination().block.key).route)
        .collect()
}

pub(crate) fn process_at(ctx: &EngineCtx, holder: usize) -> &DecisionProcess {
    &ctx.processes[ctx.process_of[holder]]
}

pub(crate) fn is_deployer_at(ctx: &EngineCtx, idx: usize) -> bool {
    ctx.deployer[idx]
}
