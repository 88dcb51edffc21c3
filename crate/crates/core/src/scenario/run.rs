use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{invalid, DeploymentSpec, ResistorSpec, Scenario, ScenarioError};
use crate::bgp::RoutingPolicy;
use crate::deployment::{ring_deployment, select_deployers, DeploymentMode, DeploymentObjective, Selection};
use crate::economics::{
    deflection_and_qos, defection_cost, detection_adjusted_cost, direct_deployment_cost, resistor_cost, to_usd,
    CostReport, DetectionCost, DetectionModel,
};
use crate::poisoning::{frrp_advertisements, selarp_advertisements, SelarpObjective, SelarpOutcome, SelarpSearch};
use crate::scalar::Scalar;
use crate::sim::{simulate_flows, Announcements};
use crate::strategies::{Deployment, Poisoning, ResistorConfig};
use crate::topology::{
    alias_siblings, parse_as_relationships, parse_attributes, select_coalition_top_degree, AsGraph, Asn,
};
use crate::traffic::{
    build_traffic_matrix, international_transit_fraction, link_load_stats, parse_profiles, FlowLedger, TrafficMatrix,
};
use crate::Error;

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Relationship file plus optional attributes, with siblings merged.
/// Attribute rows for ASes absent from the relationship file are ignored.
pub fn load_graph(scn: &Scenario) -> Result<AsGraph, Error> {
    let mut graph = parse_as_relationships(&read(&scn.relationships)?)?;
    if let Some(p) = &scn.attributes {
        let (known, unknown): (Vec<_>, Vec<_>) = parse_attributes(&read(p)?)?
            .into_iter()
            .partition(|(a, _)| graph.contains(*a));
        if !unknown.is_empty() {
            log::warn!("ignoring attributes of {} ASes not in the topology", unknown.len());
        }
        graph = graph.with_attributes(known)?;
    }
    Ok(alias_siblings(&graph))
}

/// The traffic matrix named by the scenario: read from a file or built from
/// the region profiles.
pub fn build_matrix<S: Scalar>(scn: &Scenario, graph: &AsGraph) -> Result<TrafficMatrix<S>, Error> {
    if let Some(p) = &scn.matrix {
        let m = TrafficMatrix::<S>::parse_csv(&read(p)?)?;
        if let Some((s, d, _)) = m.iter().find(|(s, d, _)| !graph.contains(*s) || !graph.contains(*d)) {
            let missing = if graph.contains(s) { d } else { s };
            return Err(crate::traffic::TrafficError::UnknownAs(missing).into());
        }
        return Ok(m);
    }
    let profiles = parse_profiles(&read(scn.profiles.as_ref().expect("validated: profiles or matrix"))?)?;
    Ok(build_traffic_matrix(graph, &profiles, S::from_f64_exact(scn.total_units))?)
}

pub struct Inputs<S> {
    pub hash: String,
    pub graph: AsGraph,
    pub matrix: TrafficMatrix<S>,
}

pub fn load_inputs<S: Scalar>(scn: &Scenario) -> Result<Inputs<S>, Error> {
    let hash = scn.hash()?;
    let graph = load_graph(scn)?;
    let matrix = build_matrix(scn, &graph)?;
    Ok(Inputs { hash, graph, matrix })
}

fn baseline_policy(scn: &Scenario) -> RoutingPolicy {
    RoutingPolicy {
        max_rounds: scn.convergence_cap,
        ..Default::default()
    }
}

/// Routes the matrix under plain BGP.
pub fn run_baseline<S: Scalar>(scn: &Scenario, inputs: &Inputs<S>) -> Result<FlowLedger<S>, Error> {
    simulate_flows(
        &inputs.graph,
        &Announcements::baseline(&inputs.graph),
        &baseline_policy(scn),
        &inputs.matrix,
    )
}

pub fn resolve_members(scn: &Scenario, graph: &AsGraph) -> Result<BTreeSet<Asn>, Error> {
    match &scn.resistor {
        ResistorSpec::Members(m) => {
            if let Some(a) = m.iter().find(|a| !graph.contains(**a)) {
                return Err(invalid("resistor", format!("AS {a} is not in the topology (merged siblings keep the lowest ASN)")).into());
            }
            Ok(m.clone())
        }
        ResistorSpec::TopDegree(f) => Ok(select_coalition_top_degree(graph, *f)),
    }
}

/// The deployment named by the scenario. Greedy modes also return their
/// selection trace.
pub fn resolve_deployment<S: Scalar>(
    scn: &Scenario,
    graph: &AsGraph,
    baseline: &FlowLedger<S>,
    members: &BTreeSet<Asn>,
) -> Result<(Deployment, Option<Selection<S>>), Error> {
    let greedy = |mode, size| -> Result<(Deployment, Option<Selection<S>>), Error> {
        let mut obj = DeploymentObjective::new(mode, size)?;
        obj.min_customers = scn.min_customers;
        let sel = select_deployers(graph, baseline, &obj, members)?;
        Ok((sel.deployment.clone(), Some(sel)))
    };
    let explicit = |d: Deployment| -> Result<(Deployment, Option<Selection<S>>), Error> {
        if let Some(a) = d.deployers().iter().find(|a| !graph.contains(**a)) {
            return Err(invalid("deployers", format!("AS {a} is not in the topology")).into());
        }
        Ok((d, None))
    };
    match &scn.deployment {
        DeploymentSpec::None => Ok((Deployment::empty(), None)),
        DeploymentSpec::Explicit(set) => explicit(Deployment::new(set.iter().copied())),
        DeploymentSpec::File(p) => explicit(Deployment::parse(&read(p)?)?),
        DeploymentSpec::Targeted(n) => greedy(DeploymentMode::Targeted, *n),
        DeploymentSpec::Global(n) => greedy(DeploymentMode::Global, *n),
        DeploymentSpec::Ring(cc) => Ok((ring_deployment(graph, cc), None)),
    }
}

/// Announcements during the attack: parents everywhere, plus hole-punched
/// halves for members when poisoning is on. SelARP runs one independent
/// search per member.
pub fn attack_announcements<S: Scalar>(
    graph: &AsGraph,
    config: &ResistorConfig,
    policy: &RoutingPolicy,
    matrix: &TrafficMatrix<S>,
    objective: SelarpObjective,
) -> Result<(Announcements, Vec<SelarpOutcome<S>>), Error> {
    let mut ann = Announcements::baseline(graph);
    let deployment = &policy.deployment;
    match config.poisoning {
        Poisoning::None => Ok((ann, Vec::new())),
        Poisoning::Frrp if deployment.is_empty() => {
            log::warn!("FRRP requested with no deployers; announcing parent blocks only");
            Ok((ann, Vec::new()))
        }
        Poisoning::Frrp => {
            for &m in config.members() {
                let mut origs = ann.of(m).to_vec();
                origs.extend(frrp_advertisements(graph, m, deployment)?);
                ann.set(m, origs);
            }
            Ok((ann, Vec::new()))
        }
        Poisoning::Selarp => {
            let members: Vec<Asn> = config.members().iter().copied().collect();
            let outcomes = members
                .par_iter()
                .map(|&m| Ok(SelarpSearch::new(graph, policy, m, matrix, objective)?.greedy()))
                .collect::<Result<Vec<_>, Error>>()?;
            for o in &outcomes {
                if !o.advertise_to.is_empty() {
                    let mut origs = ann.of(o.member).to_vec();
                    origs.extend(selarp_advertisements(graph, o.member, &o.advertise_to));
                    ann.set(o.member, origs);
                }
            }
            Ok((ann, outcomes))
        }
    }
}

/// Everything one scenario run produces.
pub struct RunOutput<S> {
    pub hash: String,
    pub graph: AsGraph,
    pub matrix: TrafficMatrix<S>,
    pub config: ResistorConfig,
    /// Requested members that were also deployers and so left the resistor.
    pub dropped_members: BTreeSet<Asn>,
    pub deployment: Deployment,
    pub selection: Option<Selection<S>>,
    pub policy: RoutingPolicy,
    pub announcements: Announcements,
    pub selarp: Vec<SelarpOutcome<S>>,
    /// Baseline flows, classified against `deployment`.
    pub baseline: FlowLedger<S>,
    pub attack: FlowLedger<S>,
    pub cost: CostReport<S>,
    pub international: BTreeMap<Asn, S>,
    pub detection: Option<DetectionCost<S>>,
}

fn resistor_config(scn: &Scenario, members: BTreeSet<Asn>) -> Result<ResistorConfig, Error> {
    Ok(ResistorConfig::new(members, scn.strategy)?.with_poisoning(scn.frrp, scn.selarp)?)
}

/// Runs the whole pipeline: inputs, baseline, deployment, attack, costs.
pub fn simulate<S: Scalar>(scn: &Scenario) -> Result<RunOutput<S>, Error> {
    let inputs = load_inputs::<S>(scn)?;
    let mut baseline = run_baseline(scn, &inputs)?;
    let Inputs { hash, graph, matrix } = inputs;

    let requested = resolve_members(scn, &graph)?;
    let (deployment, selection) = resolve_deployment(scn, &graph, &baseline, &requested)?;
    let dropped: BTreeSet<Asn> = requested.iter().copied().filter(|a| deployment.contains(*a)).collect();
    if !dropped.is_empty() {
        log::warn!("removing deployers {dropped:?} from the resistor");
    }
    let members: BTreeSet<Asn> = requested.difference(&dropped).copied().collect();
    let config = resistor_config(scn, members)?;
    let policy = config.policy(&deployment, scn.convergence_cap);

    let (announcements, selarp) = attack_announcements(&graph, &config, &policy, &matrix, scn.selarp_objective)?;
    let attack = simulate_flows(&graph, &announcements, &policy, &matrix)?;
    baseline.reclassify(&deployment);

    let defection = if scn.defection {
        let counterfactual = |d: &Deployment| -> Result<FlowLedger<S>, Error> {
            let p = config.policy(d, scn.convergence_cap);
            let (ann, _) = attack_announcements(&graph, &config, &p, &matrix, scn.selarp_objective)?;
            simulate_flows(&graph, &ann, &p, &matrix)
        };
        Some(defection_cost(&attack, &deployment, counterfactual)?)
    } else {
        None
    };

    let usd_per_unit = S::from_f64_exact(scn.usd_ratio);
    let cost = CostReport {
        direct: direct_deployment_cost(&baseline, &attack, &deployment)?,
        resistor: resistor_cost(&graph, &baseline, &attack, config.members()),
        deflection: deflection_and_qos(&baseline, &attack, config.members()),
        link_load: link_load_stats(&baseline, &attack),
        defection,
        usd_per_unit,
    };
    let detection = detection_for(scn, &cost)?;
    let international = international_transit_fraction(&graph, &baseline);
    Ok(RunOutput {
        hash,
        graph,
        matrix,
        config,
        dropped_members: dropped,
        deployment,
        selection,
        policy,
        announcements,
        selarp,
        baseline,
        attack,
        cost,
        international,
        detection,
    })
}

fn detection_for<S: Scalar>(scn: &Scenario, cost: &CostReport<S>) -> Result<Option<DetectionCost<S>>, Error> {
    let Some((alpha, psi)) = scn.detection else { return Ok(None) };
    let model = DetectionModel::new(S::from_f64_exact(alpha), S::from_f64_exact(psi))?;
    let c = to_usd(&cost.grand_total(), &cost.usd_per_unit)?;
    Ok(Some(detection_adjusted_cost(&c, &model)?))
}

/// Recomputes the cost report from ledgers saved by an earlier run in `dir`.
/// Defection needs fresh counterfactual runs and is left out.
pub fn recompute_report<S: Scalar>(scn: &Scenario, dir: &Path) -> Result<RunOutput<S>, Error> {
    let hash = scn.hash()?;
    let graph = load_graph(scn)?;
    let deployment = Deployment::parse(&read(&dir.join("deployment.txt"))?)?;
    let requested = resolve_members(scn, &graph)?;
    let dropped: BTreeSet<Asn> = requested.iter().copied().filter(|a| deployment.contains(*a)).collect();
    let config = resistor_config(scn, requested.difference(&dropped).copied().collect())?;
    let baseline = FlowLedger::<S>::parse_csv(&graph, &read(&dir.join("flows_before.csv"))?, &deployment)?;
    let attack = FlowLedger::<S>::parse_csv(&graph, &read(&dir.join("flows_after.csv"))?, &deployment)?;
    let mut matrix = TrafficMatrix::new();
    for f in baseline.flows() {
        matrix.add(f.src, f.dst, f.volume())?;
    }
    if attack.total_volume() != baseline.total_volume() {
        return Err(ScenarioError::Conflict("saved ledgers carry different traffic totals".into()).into());
    }
    let cost = CostReport {
        direct: direct_deployment_cost(&baseline, &attack, &deployment)?,
        resistor: resistor_cost(&graph, &baseline, &attack, config.members()),
        deflection: deflection_and_qos(&baseline, &attack, config.members()),
        link_load: link_load_stats(&baseline, &attack),
        defection: None,
        usd_per_unit: S::from_f64_exact(scn.usd_ratio),
    };
    let detection = detection_for(scn, &cost)?;
    let international = international_transit_fraction(&graph, &baseline);
    let policy = config.policy(&deployment, scn.convergence_cap);
    Ok(RunOutput {
        hash,
        announcements: Announcements::baseline(&graph),
        graph,
        matrix,
        config,
        dropped_members: dropped,
        deployment,
        selection: None,
        policy,
        selarp: Vec::new(),
        baseline,
        attack,
        cost,
        international,
        detection,
    })
}
