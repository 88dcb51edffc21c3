//! Cost quantities derived from pre- and post-attack ledgers.
//!
//! All functions are generic over [`Scalar`]; the `before` ledger is always
//! the baseline with clean flags classified against the attack deployment.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::{self, Scalar};
use crate::strategies::Deployment;
use crate::topology::{AsGraph, Asn, Relationship};
use crate::traffic::{FlowLeg, FlowLedger, LinkLoadStats};

/// Annual transit revenue per simulated traffic unit, in USD.
pub const USD_PER_UNIT: f64 = 1.66652e-20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconError {
    #[error("negative traffic units: {0}")]
    NegativeUnits(String),
    #[error("negative cost: {0}")]
    NegativeCost(String),
    #[error("{name} = {value} is outside [0, 1]")]
    InvalidRate { name: &'static str, value: String },
    #[error("deployer {0} is not in the ledger")]
    MissingDeployer(Asn),
}

/// Converts traffic units to USD at `usd_per_unit`.
pub fn to_usd<S: Scalar>(units: &S, usd_per_unit: &S) -> Result<S, EconError> {
    if units.is_negative() {
        return Err(EconError::NegativeUnits(units.to_string()));
    }
    Ok(units.clone() * usd_per_unit.clone())
}

/// True and false positive rates of a TMB detector.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionModel<S> {
    alpha: S,
    psi: S,
}

impl<S: Scalar> DetectionModel<S> {
    pub fn new(alpha: S, psi: S) -> Result<Self, EconError> {
        for (name, v) in [("alpha", &alpha), ("psi", &psi)] {
            if v.is_negative() || *v > S::one() || !v.is_finite_value() {
                return Err(EconError::InvalidRate {
                    name,
                    value: v.to_string(),
                });
            }
        }
        Ok(DetectionModel { alpha, psi })
    }

    pub fn alpha(&self) -> &S {
        &self.alpha
    }

    pub fn psi(&self) -> &S {
        &self.psi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionCost<S> {
    pub deployer_expected: S,
    pub nondeployer_expected: S,
    pub disincentive_margin: S,
}

/// Expected cost of a detected deployer, of a falsely accused bystander, and
/// the difference between them.
pub fn detection_adjusted_cost<S: Scalar>(cost: &S, model: &DetectionModel<S>) -> Result<DetectionCost<S>, EconError> {
    if cost.is_negative() {
        return Err(EconError::NegativeCost(cost.to_string()));
    }
    // (alpha - psi) is never zero for distinct rates, so the margin's sign is exact
    let rate_gap = model.alpha.clone() - model.psi.clone();
    Ok(DetectionCost {
        deployer_expected: model.alpha.clone() * cost.clone(),
        nondeployer_expected: model.psi.clone() * cost.clone(),
        disincentive_margin: rate_gap * cost.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeployerLoss<S> {
    pub before: S,
    pub after: S,
    /// `before - after`; negative when the deployer gained.
    pub raw: S,
    /// `raw` clamped at zero.
    pub loss: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectCost<S> {
    pub per_deployer: BTreeMap<Asn, DeployerLoss<S>>,
    /// Sum of clamped losses.
    pub total: S,
}

/// Billable units each deployer loses to the attack.
pub fn direct_deployment_cost<S: Scalar>(
    before: &FlowLedger<S>,
    after: &FlowLedger<S>,
    deployment: &Deployment,
) -> Result<DirectCost<S>, EconError> {
    let mut per_deployer = BTreeMap::new();
    for &d in deployment.deployers() {
        let b = before.billable(d).ok_or(EconError::MissingDeployer(d))?.clone();
        let a = after.billable(d).ok_or(EconError::MissingDeployer(d))?.clone();
        let raw = b.clone() - a.clone();
        per_deployer.insert(
            d,
            DeployerLoss {
                loss: raw.clamp_nonneg(),
                before: b,
                after: a,
                raw,
            },
        );
    }
    let total = scalar::sum(per_deployer.values().map(|l: &DeployerLoss<S>| l.loss.clone()));
    Ok(DirectCost { per_deployer, total })
}

/// One leaf of one flow in both ledgers.
struct LegPair<'a, S> {
    src: Asn,
    dst: Asn,
    volume: S,
    before: &'a FlowLeg<S>,
    after: &'a FlowLeg<S>,
}

/// Pairs legs of the same flow. When either side is split into sub-blocks,
/// each half is compared against whatever the other side used for it.
fn aligned<'a, S: Scalar>(before: &'a FlowLedger<S>, after: &'a FlowLedger<S>) -> Vec<LegPair<'a, S>> {
    let mut out = Vec::new();
    for fa in after.flows() {
        let Some(fb) = before.flow(fa.src, fa.dst) else { continue };
        let finer = if fb.is_split() && !fa.is_split() { fb } else { fa };
        for leg in &finer.legs {
            if let (Some(b), Some(a)) = (fb.leg_for(leg.leaf), fa.leg_for(leg.leaf)) {
                out.push(LegPair {
                    src: fa.src,
                    dst: fa.dst,
                    volume: leg.volume.clone(),
                    before: b,
                    after: a,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deflection<S> {
    /// Resistor-sourced volume on tainted paths before the attack.
    pub tainted_before: S,
    /// The part of it that is clean after.
    pub deflected: S,
    /// `None` when nothing was tainted before.
    pub deflected_fraction: Option<S>,
    pub changed_paths: usize,
    /// Mean AS-hop change over resistor-sourced legs whose path changed.
    pub mean_path_len_delta: Option<S>,
    pub inbound_tainted_before: S,
    pub inbound_deflected: S,
    /// Inbound volume clean before and tainted after.
    pub inbound_retainted: S,
    pub inbound_changed_paths: usize,
    pub inbound_path_len_delta: Option<S>,
}

struct Accum<S> {
    tainted: S,
    deflected: S,
    retainted: S,
    changed: usize,
    delta_sum: S,
}

impl<S: Scalar> Accum<S> {
    fn new() -> Self {
        Accum {
            tainted: S::zero(),
            deflected: S::zero(),
            retainted: S::zero(),
            changed: 0,
            delta_sum: S::zero(),
        }
    }

    fn add(&mut self, p: &LegPair<'_, S>) {
        let (pb, pa) = (&p.before.path, &p.after.path);
        if pb.is_some() && !p.before.clean {
            self.tainted = self.tainted.clone() + p.volume.clone();
            if p.after.clean {
                self.deflected = self.deflected.clone() + p.volume.clone();
            }
        } else if p.before.clean && pa.is_some() && !p.after.clean {
            self.retainted = self.retainted.clone() + p.volume.clone();
        }
        let (Some(pb), Some(pa)) = (pb, pa) else { return };
        if pb != pa {
            self.changed += 1;
            let delta = S::from_i64(pa.len() as i64 - pb.len() as i64).expect("small integer");
            self.delta_sum = self.delta_sum.clone() + delta;
        }
    }

    fn mean_delta(&self) -> Option<S> {
        (self.changed > 0).then(|| self.delta_sum.clone() / scalar::from_count(self.changed))
    }
}

/// Deflection and path-length effects on resistor-sourced (outbound) and
/// resistor-bound (inbound) traffic.
pub fn deflection_and_qos<S: Scalar>(
    before: &FlowLedger<S>,
    after: &FlowLedger<S>,
    members: &std::collections::BTreeSet<Asn>,
) -> Deflection<S> {
    let mut out = Accum::new();
    let mut inb = Accum::new();
    for p in aligned(before, after) {
        if members.contains(&p.src) {
            out.add(&p);
        }
        if members.contains(&p.dst) {
            inb.add(&p);
        }
    }
    Deflection {
        deflected_fraction: out.tainted.gt_zero().then(|| out.deflected.clone() / out.tainted.clone()),
        mean_path_len_delta: out.mean_delta(),
        changed_paths: out.changed,
        inbound_path_len_delta: inb.mean_delta(),
        inbound_changed_paths: inb.changed,
        tainted_before: out.tainted,
        deflected: out.deflected,
        inbound_tainted_before: inb.tainted,
        inbound_deflected: inb.deflected,
        inbound_retainted: inb.retainted,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResistorCost<S> {
    /// Volume members carry between two non-customers after the attack.
    pub transit_conversion: S,
    /// Volume members send (own or from customers) that moved off a
    /// customer-learned next hop onto a peer or provider.
    pub provider_shift: S,
    pub per_member: BTreeMap<Asn, (S, S)>,
}

/// What the attack costs the resistor members themselves.
pub fn resistor_cost<S: Scalar>(
    graph: &AsGraph,
    before: &FlowLedger<S>,
    after: &FlowLedger<S>,
    members: &std::collections::BTreeSet<Asn>,
) -> ResistorCost<S> {
    let is_customer = |m: Asn, x: Asn| graph.relationship(m, x) == Some(Relationship::ProviderOf);
    let mut per_member: BTreeMap<Asn, (S, S)> = members.iter().map(|&m| (m, (S::zero(), S::zero()))).collect();
    for p in aligned(before, after) {
        let (Some(pb), Some(pa)) = (&p.before.path, &p.after.path) else { continue };
        let (hb, ha) = (pb.as_slice(), pa.as_slice());
        for i in 0..ha.len().saturating_sub(1) {
            let m = ha[i];
            let Some(slot) = per_member.get_mut(&m) else { continue };
            let next = ha[i + 1];
            if i > 0 && !is_customer(m, ha[i - 1]) && !is_customer(m, next) {
                slot.0 = slot.0.clone() + p.volume.clone();
            }
            let entering_from_customer = i == 0 || is_customer(m, ha[i - 1]);
            if !entering_from_customer || is_customer(m, next) {
                continue;
            }
            let was_customer_route = hb
                .iter()
                .position(|&x| x == m)
                .filter(|&j| j + 1 < hb.len())
                .is_some_and(|j| is_customer(m, hb[j + 1]));
            if was_customer_route {
                slot.1 = slot.1.clone() + p.volume.clone();
            }
        }
    }
    ResistorCost {
        transit_conversion: scalar::sum(per_member.values().map(|v| v.0.clone())),
        provider_shift: scalar::sum(per_member.values().map(|v| v.1.clone())),
        per_member,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DefectionOutcome<S> {
    Gain { actual: S, counterfactual: S, gain: S },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DefectionReport<S> {
    pub per_deployer: BTreeMap<Asn, DefectionOutcome<S>>,
    /// Sum of positive gains over deployers whose counterfactual succeeded.
    pub total: S,
}

impl<S: Scalar> DefectionReport<S> {
    pub fn gain(&self, d: Asn) -> Option<&S> {
        match self.per_deployer.get(&d) {
            Some(DefectionOutcome::Gain { gain, .. }) => Some(gain),
            _ => None,
        }
    }
}

/// Single-defector opportunity cost. `counterfactual` reruns the attack
/// against a reduced deployment; runs are independent and execute in
/// parallel.
pub fn defection_cost<S, F>(
    actual: &FlowLedger<S>,
    deployment: &Deployment,
    counterfactual: F,
) -> Result<DefectionReport<S>, EconError>
where
    S: Scalar,
    F: Fn(&Deployment) -> Result<FlowLedger<S>, crate::Error> + Sync,
{
    let deployers: Vec<Asn> = deployment.deployers().iter().copied().collect();
    for &d in &deployers {
        actual.billable(d).ok_or(EconError::MissingDeployer(d))?;
    }
    let outcomes: Vec<DefectionOutcome<S>> = deployers
        .par_iter()
        .map(|&d| match counterfactual(&deployment.without(d)) {
            Ok(ledger) => {
                let a = actual.billable(d).cloned().unwrap_or_else(S::zero);
                let c = ledger.billable(d).cloned().unwrap_or_else(S::zero);
                DefectionOutcome::Gain {
                    gain: c.clone() - a.clone(),
                    actual: a,
                    counterfactual: c,
                }
            }
            Err(e) => {
                log::warn!("defection counterfactual for AS {d} failed: {e}");
                DefectionOutcome::Failed(e.to_string())
            }
        })
        .collect();
    let per_deployer: BTreeMap<Asn, DefectionOutcome<S>> = deployers.into_iter().zip(outcomes).collect();
    let total = scalar::sum(per_deployer.values().filter_map(|o| match o {
        DefectionOutcome::Gain { gain, .. } => Some(gain.clamp_nonneg()),
        DefectionOutcome::Failed(_) => None,
    }));
    Ok(DefectionReport { per_deployer, total })
}

/// Everything the originator and the resistor pay in one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct CostReport<S> {
    pub direct: DirectCost<S>,
    pub resistor: ResistorCost<S>,
    pub deflection: Deflection<S>,
    pub link_load: LinkLoadStats<S>,
    pub defection: Option<DefectionReport<S>>,
    pub usd_per_unit: S,
}

impl<S: Scalar> CostReport<S> {
    /// Direct plus defection cost, in units.
    pub fn grand_total(&self) -> S {
        let defection = self.defection.as_ref().map_or_else(S::zero, |d| d.total.clone());
        self.direct.total.clone() + defection
    }

    pub fn usd(&self, units: &S) -> S {
        units.clone() * self.usd_per_unit.clone()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use num_rational::BigRational;
    use proptest::prelude::*;

    use super::*;
    use crate::bgp::RoutingPolicy;
    use crate::scalar::ratio;
    use crate::sim::{simulate_flows, Announcements};
    use crate::strategies::{ResistorConfig, StrategyKind};
    use crate::topology::fixtures::g5;
    use crate::topology::parse_as_relationships;
    use crate::traffic::TrafficMatrix;

    fn a(v: u32) -> Asn {
        Asn::new(v)
    }

    fn set(v: &[u32]) -> BTreeSet<Asn> {
        v.iter().map(|&x| a(x)).collect()
    }

    fn one_flow(src: u32, dst: u32, v: f64) -> TrafficMatrix<f64> {
        let mut m = TrafficMatrix::new();
        m.add(a(src), a(dst), v).unwrap();
        m
    }

    fn attack(
        g: &AsGraph,
        m: &TrafficMatrix<f64>,
        members: &[u32],
        strategy: StrategyKind,
        d: &Deployment,
    ) -> (FlowLedger<f64>, FlowLedger<f64>) {
        let ann = Announcements::baseline(g);
        let mut before = simulate_flows(g, &ann, &RoutingPolicy::baseline(), m).unwrap();
        before.reclassify(d);
        let cfg = ResistorConfig::new(set(members), strategy).unwrap();
        let after = simulate_flows(g, &ann, &cfg.policy(d, None), m).unwrap();
        (before, after)
    }

    #[test]
    fn usd_conversion() {
        assert_eq!(to_usd(&0.0, &USD_PER_UNIT).unwrap(), 0.0);
        assert!((to_usd(&1e20, &USD_PER_UNIT).unwrap() - 1.66652).abs() < 1e-25);
        let big = to_usd(&2.94e29, &USD_PER_UNIT).unwrap();
        assert!((big - 4.9e9).abs() / 4.9e9 < 1e-2);
        assert!(to_usd(&-1.0, &USD_PER_UNIT).is_err());
    }

    #[test]
    fn detection_examples() {
        let m = DetectionModel::new(1.0, 0.0).unwrap();
        let c = detection_adjusted_cost(&42.0, &m).unwrap();
        assert_eq!((c.deployer_expected, c.nondeployer_expected, c.disincentive_margin), (42.0, 0.0, 42.0));
        let m = DetectionModel::new(0.3, 0.3).unwrap();
        assert_eq!(detection_adjusted_cost(&42.0, &m).unwrap().disincentive_margin, 0.0);
        let m = DetectionModel::new(ratio(4, 5), ratio(1, 10)).unwrap();
        let c = detection_adjusted_cost(&ratio(100, 1), &m).unwrap();
        assert_eq!(c.deployer_expected, ratio(80, 1));
        assert_eq!(c.nondeployer_expected, ratio(10, 1));
        assert_eq!(c.disincentive_margin, ratio(70, 1));
        assert!(DetectionModel::new(1.5, 0.0).is_err());
        assert!(detection_adjusted_cost(&-1.0, &DetectionModel::new(0.5, 0.1).unwrap()).is_err());
    }

    #[test]
    fn g5_tiebreak_golden() {
        let g = g5();
        let d = Deployment::new([a(2)]);
        let (before, after) = attack(&g, &one_flow(1, 4, 10.0), &[1], StrategyKind::Tiebreak, &d);
        let direct = direct_deployment_cost(&before, &after, &d).unwrap();
        assert_eq!(direct.per_deployer[&a(2)].loss, 20.0);
        assert_eq!(direct.total, 20.0);
        assert_eq!(after.billable(a(3)).unwrap() - before.billable(a(3)).unwrap(), 20.0);
        let defl = deflection_and_qos(&before, &after, &set(&[1]));
        assert_eq!(defl.deflected_fraction, Some(1.0));
        assert_eq!(defl.mean_path_len_delta, Some(0.0));
        let rc = resistor_cost(&g, &before, &after, &set(&[1]));
        assert_eq!((rc.transit_conversion, rc.provider_shift), (0.0, 0.0));
    }

    #[test]
    fn identical_ledgers_cost_nothing() {
        let g = g5();
        let d = Deployment::new([a(5)]);
        let (before, _) = attack(&g, &one_flow(1, 4, 10.0), &[1], StrategyKind::Tiebreak, &d);
        let direct = direct_deployment_cost(&before, &before, &d).unwrap();
        assert_eq!(direct.total, 0.0);
        assert!(direct_deployment_cost(&before, &before, &Deployment::empty()).unwrap().per_deployer.is_empty());
        assert!(matches!(
            direct_deployment_cost(&before, &before, &Deployment::new([a(99)])),
            Err(EconError::MissingDeployer(_))
        ));
        let defl = deflection_and_qos(&before, &before, &set(&[1]));
        assert_eq!(defl.deflected_fraction, None);
    }

    #[test]
    fn local_pref_pays_provider_shift() {
        // 1 reaches 4 through customer 2 (tainted) or provider 6 (clean)
        let g = parse_as_relationships("1|2|-1\n2|4|-1\n6|1|-1\n6|4|-1").unwrap();
        let d = Deployment::new([a(2)]);
        let m = one_flow(1, 4, 10.0);
        let (before, after) = attack(&g, &m, &[1], StrategyKind::LocalPref, &d);
        assert_eq!(after.flow(a(1), a(4)).unwrap().legs[0].path.as_ref().unwrap().to_string(), "1 6 4");
        let rc = resistor_cost(&g, &before, &after, &set(&[1]));
        assert_eq!(rc.provider_shift, 10.0);
        assert_eq!(rc.transit_conversion, 0.0);
        // PathLength keeps the customer route and costs nothing
        let (before, after) = attack(&g, &m, &[1], StrategyKind::PathLength, &d);
        let rc = resistor_cost(&g, &before, &after, &set(&[1]));
        assert_eq!((rc.transit_conversion, rc.provider_shift), (0.0, 0.0));
    }

    #[test]
    fn original_rad_transit_conversion() {
        // 7 and 8 are members linked as peers. 8 has a clean provider route
        // to 4; 7 only has a tainted one through its provider 2. Sharing
        // makes 8 carry 7's traffic from a peer up to its provider.
        let g = parse_as_relationships("2|7|-1\n2|4|-1\n9|8|-1\n9|4|-1\n7|8|0").unwrap();
        let d = Deployment::new([a(2)]);
        let m = one_flow(7, 4, 5.0);
        let (before, after) = attack(&g, &m, &[7, 8], StrategyKind::OriginalRad, &d);
        assert_eq!(after.flow(a(7), a(4)).unwrap().legs[0].path.as_ref().unwrap().to_string(), "7 8 9 4");
        let rc = resistor_cost(&g, &before, &after, &set(&[7, 8]));
        assert_eq!(rc.transit_conversion, 5.0);
        assert_eq!(rc.per_member[&a(8)].0, 5.0);
        // without the advertisement extension the peer route is never offered
        let (_, after) = attack(&g, &m, &[7, 8], StrategyKind::LocalPref, &d);
        assert_eq!(after.flow(a(7), a(4)).unwrap().legs[0].path.as_ref().unwrap().to_string(), "7 2 4");
    }

    #[test]
    fn defection_examples() {
        let g = g5();
        let m = one_flow(1, 4, 10.0);
        let cfg = ResistorConfig::new(set(&[1]), StrategyKind::Tiebreak).unwrap();
        let run = |d: &Deployment| simulate_flows(&g, &Announcements::baseline(&g), &cfg.policy(d, None), &m);
        let d = Deployment::new([a(2), a(3)]);
        let actual = run(&d).unwrap();
        let rep = defection_cost(&actual, &d, run).unwrap();
        assert_eq!(rep.gain(a(3)), Some(&20.0));
        assert_eq!(rep.gain(a(2)), Some(&0.0));
        assert_eq!(rep.total, 20.0);

        // a deployer on no flow path gains nothing by leaving
        let d = Deployment::new([a(2), a(5)]);
        let actual = run(&d).unwrap();
        let rep = defection_cost(&actual, &d, run).unwrap();
        assert_eq!(rep.gain(a(5)), Some(&0.0));
    }

    #[test]
    fn defection_failure_is_isolated() {
        let g = g5();
        let m = one_flow(1, 4, 10.0);
        let d = Deployment::new([a(2), a(3)]);
        let base = RoutingPolicy {
            deployment: d.clone(),
            ..Default::default()
        };
        let actual = simulate_flows(&g, &Announcements::baseline(&g), &base, &m).unwrap();
        let rep = defection_cost(&actual, &d, |dd| {
            if dd.contains(a(2)) {
                Err(crate::bgp::RoutingError::SiblingEdges.into())
            } else {
                simulate_flows(&g, &Announcements::baseline(&g), &base, &m)
            }
        })
        .unwrap();
        assert!(matches!(rep.per_deployer[&a(3)], DefectionOutcome::Failed(_)));
        assert_eq!(rep.gain(a(2)), Some(&0.0));
    }

    proptest! {
        #[test]
        fn usd_is_linear(x in 0.0f64..1e30, y in 0.0f64..1e30) {
            let lhs = to_usd(&(x + y), &USD_PER_UNIT).unwrap();
            let rhs = to_usd(&x, &USD_PER_UNIT).unwrap() + to_usd(&y, &USD_PER_UNIT).unwrap();
            prop_assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * lhs.abs());
        }

        #[test]
        fn margin_sign_matches_rates(al in 0u32..=1000, ps in 0u32..=1000, c in 1u32..1_000_000) {
            let (alpha, psi, cost) = (al as f64 / 1000.0, ps as f64 / 1000.0, c as f64);
            let out = detection_adjusted_cost(&cost, &DetectionModel::new(alpha, psi).unwrap()).unwrap();
            prop_assert_eq!(out.disincentive_margin.partial_cmp(&0.0), (alpha - psi).partial_cmp(&0.0));
            let exact = detection_adjusted_cost(
                &BigRational::from_integer(c.into()),
                &DetectionModel::new(ratio(al as i64, 1000), ratio(ps as i64, 1000)).unwrap(),
            ).unwrap();
            prop_assert_eq!(exact.disincentive_margin.clone(), exact.deployer_expected - exact.nondeployer_expected);
        }
    }
}
