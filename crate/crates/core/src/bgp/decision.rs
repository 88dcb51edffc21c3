use super::{LearnedFrom, Route, RoutingError};
use crate::topology::Asn;

/// One step of the route selection process. Each step keeps the subset of
/// candidates that is best under its criterion.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum DecisionRule {
    /// Keep clean candidates if any exist; otherwise keep everything.
    PreferClean,
    LocalPreference,
    ShortestPath,
    LowestNextHop,
}

/// What the decision process needs to know about a candidate.
pub trait RankedCandidate {
    fn learned_from(&self) -> LearnedFrom;
    fn path_len(&self) -> usize;
    fn is_clean(&self) -> bool;
    fn next_hop(&self) -> Asn;
}

/// Ordered list of decision rules.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DecisionProcess {
    rules: Vec<DecisionRule>,
}

impl DecisionProcess {
    /// Validates ordering: the next-hop tiebreak comes last, local preference
    /// precedes path length, and there is at most one clean rule.
    pub fn new(rules: Vec<DecisionRule>) -> Result<Self, RoutingError> {
        use DecisionRule::*;
        let bad = |m: &str| Err(RoutingError::InvalidProcess(m.to_string()));
        if rules.last() != Some(&LowestNextHop) {
            return bad("LowestNextHop must be the final rule");
        }
        let count = |r| rules.iter().filter(|&&x| x == r).count();
        if count(LowestNextHop) != 1 || count(LocalPreference) > 1 || count(ShortestPath) > 1 {
            return bad("rules may not repeat");
        }
        if count(PreferClean) > 1 {
            return bad("at most one clean-preference rule");
        }
        let pos = |r| rules.iter().position(|&x| x == r);
        if let (Some(lp), Some(sp)) = (pos(LocalPreference), pos(ShortestPath)) {
            if lp > sp {
                return bad("LocalPreference must precede ShortestPath");
            }
        }
        Ok(DecisionProcess { rules })
    }

    /// Plain BGP: local preference, path length, lowest next hop.
    pub fn baseline() -> Self {
        use DecisionRule::*;
        DecisionProcess {
            rules: vec![LocalPreference, ShortestPath, LowestNextHop],
        }
    }

    pub fn rules(&self) -> &[DecisionRule] {
        &self.rules
    }

    pub fn has_clean_rule(&self) -> bool {
        self.rules.contains(&DecisionRule::PreferClean)
    }

    /// Indices of the candidates surviving every rule. Never empty for a
    /// non-empty input; exactly one element when next hops are distinct.
    pub fn survivors<C: RankedCandidate>(&self, candidates: &[C]) -> Vec<usize> {
        let mut alive: Vec<usize> = (0..candidates.len()).collect();
        for rule in &self.rules {
            if alive.len() <= 1 {
                break;
            }
            match rule {
                DecisionRule::PreferClean => {
                    if alive.iter().any(|&i| candidates[i].is_clean()) {
                        alive.retain(|&i| candidates[i].is_clean());
                    }
                }
                DecisionRule::LocalPreference => {
                    keep_max(&mut alive, |i| candidates[i].learned_from().local_pref())
                }
                DecisionRule::ShortestPath => {
                    keep_max(&mut alive, |i| std::cmp::Reverse(candidates[i].path_len()))
                }
                DecisionRule::LowestNextHop => {
                    keep_max(&mut alive, |i| std::cmp::Reverse(candidates[i].next_hop()))
                }
            }
        }
        alive
    }

    pub fn select<'a, C: RankedCandidate>(&self, candidates: &'a [C]) -> Option<&'a C> {
        self.survivors(candidates).first().map(|&i| &candidates[i])
    }
}

fn keep_max<K: Ord>(alive: &mut Vec<usize>, key: impl Fn(usize) -> K) {
    if let Some(best) = alive.iter().map(|&i| key(i)).max() {
        alive.retain(|&i| key(i) == best);
    }
}

struct Judged<'a> {
    route: &'a Route,
    clean: bool,
}

impl RankedCandidate for Judged<'_> {
    fn learned_from(&self) -> LearnedFrom {
        self.route.learned_from
    }
    fn path_len(&self) -> usize {
        self.route.path.len()
    }
    fn is_clean(&self) -> bool {
        self.clean
    }
    fn next_hop(&self) -> Asn {
        self.route.next_hop
    }
}

/// Picks the best route under `process`. Returns `None` when there are no
/// candidates. Candidates that tie on every rule are ordered by path so the
/// result never depends on input order.
pub fn decide_best<'a>(
    candidates: &'a [Route],
    process: &DecisionProcess,
    clean: impl Fn(&Route) -> bool,
) -> Option<&'a Route> {
    let judged: Vec<Judged<'_>> = candidates
        .iter()
        .map(|route| Judged {
            route,
            clean: clean(route),
        })
        .collect();
    process
        .survivors(&judged)
        .into_iter()
        .map(|i| &candidates[i])
        .min_by(|a, b| a.path.cmp(&b.path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgp::{AsPath, BlockKey};
    use proptest::prelude::*;
    use DecisionRule::*;

    fn route(hops: &[u32], learned_from: LearnedFrom) -> Route {
        let path = AsPath::new(hops.iter().map(|&x| Asn::new(x)).collect()).unwrap();
        Route {
            block: BlockKey::parent(path.last()),
            next_hop: path.first(),
            path,
            learned_from,
        }
    }

    fn tiebreak() -> DecisionProcess {
        DecisionProcess::new(vec![LocalPreference, ShortestPath, PreferClean, LowestNextHop]).unwrap()
    }

    #[test]
    fn single_candidate() {
        let c = [route(&[3, 4], LearnedFrom::Peer)];
        assert_eq!(decide_best(&c, &DecisionProcess::baseline(), |_| true), Some(&c[0]));
        assert_eq!(decide_best(&[], &DecisionProcess::baseline(), |_| true), None);
    }

    #[test]
    fn g5_as1_to_block4() {
        // AS 1 hears [2,4] and [3,4] from its two providers
        let c = [route(&[3, 4], LearnedFrom::Provider), route(&[2, 4], LearnedFrom::Provider)];
        let best = decide_best(&c, &DecisionProcess::baseline(), |_| true).unwrap();
        assert_eq!(best.next_hop, Asn::new(2));
        let through_2_tainted = |r: &Route| !r.path.contains(Asn::new(2));
        let best = decide_best(&c, &tiebreak(), through_2_tainted).unwrap();
        assert_eq!(best.next_hop, Asn::new(3));
    }

    #[test]
    fn local_pref_order() {
        let c = [
            route(&[9, 5, 4], LearnedFrom::Customer),
            route(&[3, 4], LearnedFrom::Peer),
            route(&[2, 4], LearnedFrom::Provider),
        ];
        let best = decide_best(&c, &DecisionProcess::baseline(), |_| true).unwrap();
        assert_eq!(best.next_hop, Asn::new(9));
        let pref_clean = DecisionProcess::new(vec![PreferClean, LocalPreference, ShortestPath, LowestNextHop]).unwrap();
        let only_provider_clean = |r: &Route| r.learned_from == LearnedFrom::Provider;
        assert_eq!(decide_best(&c, &pref_clean, only_provider_clean).unwrap().next_hop, Asn::new(2));
        // tainted fallback: no clean candidate leaves the set untouched
        assert_eq!(decide_best(&c, &pref_clean, |_| false).unwrap().next_hop, Asn::new(9));
    }

    #[test]
    fn invalid_processes() {
        assert!(DecisionProcess::new(vec![LocalPreference, ShortestPath]).is_err());
        assert!(DecisionProcess::new(vec![ShortestPath, LocalPreference, LowestNextHop]).is_err());
        assert!(DecisionProcess::new(vec![PreferClean, LocalPreference, PreferClean, LowestNextHop]).is_err());
        assert!(DecisionProcess::new(vec![LowestNextHop, LowestNextHop]).is_err());
        assert!(DecisionProcess::new(vec![LowestNextHop]).is_ok());
    }

    fn arb_route() -> impl Strategy<Value = Route> {
        (1u32..8, proptest::collection::vec(1u32..30, 0..5), 0u8..3).prop_map(|(nh, mut rest, lf)| {
            rest.insert(0, nh);
            rest.push(99);
            let lf = [LearnedFrom::Customer, LearnedFrom::Peer, LearnedFrom::Provider][lf as usize];
            route(&rest, lf)
        })
    }

    proptest! {
        #[test]
        fn order_independent(mut cands in proptest::collection::vec(arb_route(), 1..8), seed in any::<u64>()) {
            let clean = |r: &Route| !r.path.contains(Asn::new(5));
            for process in [DecisionProcess::baseline(), tiebreak()] {
                let a = decide_best(&cands, &process, clean).cloned();
                let n = cands.len();
                cands.rotate_left((seed as usize) % n);
                cands.reverse();
                let b = decide_best(&cands, &process, clean).cloned();
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn rules_never_empty(cands in proptest::collection::vec(arb_route(), 1..8)) {
            let judged: Vec<_> = cands.iter().map(|r| Judged { route: r, clean: r.path.len() % 2 == 0 }).collect();
            for rules in [vec![PreferClean, LowestNextHop], vec![LocalPreference, LowestNextHop], vec![ShortestPath, LowestNextHop]] {
                let p = DecisionProcess::new(rules).unwrap();
                prop_assert!(!p.survivors(&judged).is_empty());
            }
        }
    }
}
