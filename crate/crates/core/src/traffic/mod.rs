//! Two-bucket traffic model and billable accounting.
//!
//! Every AS has an inbound demand. A region-dependent fraction of it comes
//! from large content providers (bucket 2); the rest is host-to-host traffic
//! drawn from all other ASes in proportion to their outbound weight
//! (bucket 1). The matrix is then scaled to a fixed total.

mod ledger;

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::bgp::AsPath;
use crate::scalar::{self, Scalar};
use crate::topology::{AsGraph, Asn};

pub use ledger::{
    account_flows, international_transit_fraction, link_load_stats, route_flows, FlowLeg, FlowLedger, FlowRecord,
    LinkLoadStats,
};

/// Region name used when no profile matches an AS's country.
pub const DEFAULT_REGION: &str = "default";

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no traffic profile for AS {asn} and no default profile")]
    NoProfile { asn: Asn },
    #[error("profile {region}: content shares sum to {sum}, not 1")]
    Shares { region: String, sum: f64 },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("every traffic weight is zero")]
    Degenerate,
    #[error("unknown AS {0}")]
    UnknownAs(Asn),
    #[error("flow from AS {0} to itself")]
    SelfFlow(Asn),
    #[error("forwarding loop on flow {src} -> {dst}: {path}")]
    Loop { src: Asn, dst: Asn, path: AsPath },
}

fn parse_err(line: usize, message: impl Into<String>) -> TrafficError {
    TrafficError::Parse {
        line,
        message: message.into(),
    }
}

/// Content-provider mix for users in one region.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionProfile {
    /// Country code, or [`DEFAULT_REGION`].
    pub region: String,
    pub cdn_fraction: f64,
    /// Super-AS to share of this region's content traffic. Sums to 1 unless
    /// empty.
    pub shares: BTreeMap<Asn, f64>,
}

impl RegionProfile {
    pub fn new(region: &str, cdn_fraction: f64, shares: BTreeMap<Asn, f64>) -> Result<Self, TrafficError> {
        if !(0.0..=1.0).contains(&cdn_fraction) {
            return Err(TrafficError::InvalidValue(format!("cdn_fraction {cdn_fraction}")));
        }
        if let Some((a, s)) = shares.iter().find(|(_, s)| !s.is_finite() || **s < 0.0) {
            return Err(TrafficError::InvalidValue(format!("share {s} for AS {a}")));
        }
        let sum: f64 = shares.values().sum();
        if (!shares.is_empty() || cdn_fraction > 0.0) && (sum - 1.0).abs() > 1e-9 {
            return Err(TrafficError::Shares {
                region: region.to_string(),
                sum,
            });
        }
        let region = if region.eq_ignore_ascii_case(DEFAULT_REGION) {
            DEFAULT_REGION.to_string()
        } else {
            region.to_ascii_uppercase()
        };
        Ok(RegionProfile {
            region,
            cdn_fraction,
            shares,
        })
    }
}

/// Parses `region,cdn_fraction,asn:share;asn:share` lines. A leading header
/// line starting with `region` and `#` comments are skipped.
pub fn parse_profiles(text: &str) -> Result<Vec<RegionProfile>, TrafficError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') || (out.is_empty() && l.starts_with("region")) {
            continue;
        }
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err(line, "expected region,cdn_fraction,shares"));
        }
        let frac: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad cdn_fraction {:?}", fields[1])))?;
        let mut shares = BTreeMap::new();
        for item in fields.get(2).copied().unwrap_or("").split(';').filter(|s| !s.trim().is_empty()) {
            let (asn, share) = item
                .split_once(':')
                .ok_or_else(|| parse_err(line, format!("bad share {item:?}")))?;
            let asn: Asn = asn.trim().parse().map_err(|e| parse_err(line, format!("{e}")))?;
            let share: f64 = share
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad share {item:?}")))?;
            *shares.entry(asn).or_insert(0.0) += share;
        }
        let p = RegionProfile::new(fields[0], frac, shares).map_err(|e| parse_err(line, e.to_string()))?;
        if out.iter().any(|q: &RegionProfile| q.region == p.region) {
            return Err(parse_err(line, format!("duplicate region {}", p.region)));
        }
        out.push(p);
    }
    Ok(out)
}

/// Source-to-destination volumes in abstract traffic units.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficMatrix<S> {
    flows: BTreeMap<(Asn, Asn), S>,
}

impl<S> Default for TrafficMatrix<S> {
    fn default() -> Self {
        TrafficMatrix { flows: BTreeMap::new() }
    }
}

impl<S: Scalar> TrafficMatrix<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `volume` to the flow `src -> dst`.
    pub fn add(&mut self, src: Asn, dst: Asn, volume: S) -> Result<(), TrafficError> {
        if src == dst {
            return Err(TrafficError::SelfFlow(src));
        }
        if volume.is_negative() || !volume.is_finite_value() {
            return Err(TrafficError::InvalidValue(format!("volume {volume}")));
        }
        let slot = self.flows.entry((src, dst)).or_insert_with(S::zero);
        *slot = slot.clone() + volume;
        Ok(())
    }

    pub fn get(&self, src: Asn, dst: Asn) -> Option<&S> {
        self.flows.get(&(src, dst))
    }

    /// Flows in `(src, dst)` order.
    pub fn iter(&self) -> impl Iterator<Item = (Asn, Asn, &S)> {
        self.flows.iter().map(|(&(s, d), v)| (s, d, v))
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn total(&self) -> S {
        scalar::sum(self.flows.values().cloned())
    }

    /// Flows destined to `dst`, by source.
    pub fn inbound(&self, dst: Asn) -> Vec<(Asn, S)> {
        self.iter().filter(|f| f.1 == dst).map(|(s, _, v)| (s, v.clone())).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "src,dst,volume")?;
        for (s, d, v) in self.iter() {
            writeln!(out, "{s},{d},{v}")?;
        }
        Ok(())
    }

    /// Reads `src,dst,volume` lines; repeated pairs accumulate.
    pub fn parse_csv(text: &str) -> Result<Self, TrafficError> {
        let mut m = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') || l.starts_with("src") {
                continue;
            }
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(parse_err(line, "expected src,dst,volume"));
            }
            let src: Asn = f[0].parse().map_err(|e| parse_err(line, format!("{e}")))?;
            let dst: Asn = f[1].parse().map_err(|e| parse_err(line, format!("{e}")))?;
            let v: S = f[2].parse().map_err(|_| parse_err(line, format!("bad volume {:?}", f[2])))?;
            m.add(src, dst, v).map_err(|e| parse_err(line, e.to_string()))?;
        }
        Ok(m)
    }
}

/// `ln(1 + degree) * ln(1 + ip_weight)`, used for any AS whose sidecar lacks a
/// traffic weight.
pub fn fallback_weight(graph: &AsGraph, asn: Asn) -> f64 {
    let deg = graph.degree(asn) as f64;
    let ip = graph.attributes(asn).map_or(1.0, |a| a.ip_weight);
    deg.ln_1p() * ip.ln_1p()
}

fn in_weight(graph: &AsGraph, asn: Asn) -> f64 {
    graph
        .attributes(asn)
        .and_then(|a| a.traffic_in_weight)
        .unwrap_or_else(|| fallback_weight(graph, asn))
}

fn out_weight(graph: &AsGraph, asn: Asn) -> f64 {
    graph
        .attributes(asn)
        .and_then(|a| a.traffic_out_weight)
        .unwrap_or_else(|| fallback_weight(graph, asn))
}

fn profile_for<'p>(graph: &AsGraph, profiles: &'p [RegionProfile], asn: Asn) -> Result<&'p RegionProfile, TrafficError> {
    let country = graph.attributes(asn).and_then(|a| a.country.as_ref());
    country
        .and_then(|c| profiles.iter().find(|p| p.region == c.as_str()))
        .or_else(|| profiles.iter().find(|p| p.region == DEFAULT_REGION))
        .ok_or(TrafficError::NoProfile { asn })
}

/// Builds the matrix and scales it so that its volumes sum to `total_units`.
///
/// Super-ASes neither send nor receive host-to-host traffic. A content flow
/// is dropped when the destination is the super-AS itself or hosts one of
/// its cache nodes.
pub fn build_traffic_matrix<S: Scalar>(
    graph: &AsGraph,
    profiles: &[RegionProfile],
    total_units: S,
) -> Result<TrafficMatrix<S>, TrafficError> {
    if total_units.is_negative() || !total_units.is_finite_value() {
        return Err(TrafficError::InvalidValue(format!("total_units {total_units}")));
    }
    let is_super = |a: Asn| graph.attributes(a).is_some_and(|x| x.super_as);
    let outs: Vec<(Asn, S)> = graph
        .asns()
        .iter()
        .filter(|&&a| !is_super(a))
        .map(|&a| (a, S::from_f64_exact(out_weight(graph, a))))
        .collect();
    let out_total: S = scalar::sum(outs.iter().map(|(_, w)| w.clone()));

    let mut raw: TrafficMatrix<S> = TrafficMatrix::new();
    for &dst in graph.asns() {
        let profile = profile_for(graph, profiles, dst)?;
        let demand = S::from_f64_exact(in_weight(graph, dst));
        if demand.is_zero() {
            continue;
        }
        let frac = S::from_f64_exact(profile.cdn_fraction);
        let content = demand.clone() * frac.clone();
        let hosts = &graph.attributes(dst).expect("dst is in the graph").cdn_hosts;
        for (&src, share) in &profile.shares {
            if !graph.contains(src) {
                return Err(TrafficError::UnknownAs(src));
            }
            if src == dst || hosts.contains(&src) {
                continue;
            }
            raw.add(src, dst, content.clone() * S::from_f64_exact(*share))?;
        }
        if is_super(dst) {
            continue;
        }
        let h2h = demand * (S::one() - frac);
        let own = outs.iter().find(|(a, _)| *a == dst).map(|(_, w)| w.clone()).unwrap_or_else(S::zero);
        let denom = out_total.clone() - own;
        if h2h.is_zero() || !denom.gt_zero() {
            continue;
        }
        for (src, w) in &outs {
            if *src != dst && w.gt_zero() {
                raw.add(*src, dst, h2h.clone() * w.clone() / denom.clone())?;
            }
        }
    }

    let raw_total = raw.total();
    if !raw_total.gt_zero() {
        return Err(TrafficError::Degenerate);
    }
    let flows = raw
        .flows
        .into_iter()
        .filter(|(_, v)| v.gt_zero())
        .map(|(k, v)| (k, v * total_units.clone() / raw_total.clone()))
        .collect();
    Ok(TrafficMatrix { flows })
}

#[cfg(test)]
mod tests {
    use num_rational::BigRational;
    use proptest::prelude::*;

    use super::*;
    use crate::scalar::ratio;
    use crate::topology::{fixtures::g5, AsAttributes, Relationship};

    fn a(v: u32) -> Asn {
        Asn::new(v)
    }

    fn default_profile(frac: f64, shares: &[(u32, f64)]) -> Vec<RegionProfile> {
        let shares = shares.iter().map(|&(x, s)| (a(x), s)).collect();
        vec![RegionProfile::new("default", frac, shares).unwrap()]
    }

    #[test]
    fn two_ases_split_evenly() {
        let g = AsGraph::from_edges([(a(1), a(2), Relationship::Peer)]).unwrap();
        let m: TrafficMatrix<BigRational> =
            build_traffic_matrix(&g, &default_profile(0.0, &[]), BigRational::from_integer(10.into())).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.get(a(1), a(2)), Some(&ratio(5, 1)));
        assert_eq!(m.get(a(2), a(1)), Some(&ratio(5, 1)));
    }

    #[test]
    fn single_content_provider_sources_everything() {
        let g = g5()
            .with_attributes([(a(5), AsAttributes { super_as: true, traffic_out_weight: Some(1.0), ..Default::default() })])
            .unwrap();
        let m: TrafficMatrix<f64> = build_traffic_matrix(&g, &default_profile(1.0, &[(5, 1.0)]), 100.0).unwrap();
        assert!(m.iter().all(|(s, _, _)| s == a(5)));
        // 5 is never its own destination
        assert_eq!(m.len(), 4);
        assert!((m.total() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn cache_hosts_are_served_locally() {
        let mut hosts = std::collections::BTreeSet::new();
        hosts.insert(a(5));
        let g = g5()
            .with_attributes([
                (a(5), AsAttributes { super_as: true, traffic_out_weight: Some(1.0), ..Default::default() }),
                (a(1), AsAttributes { cdn_hosts: hosts, ..Default::default() }),
            ])
            .unwrap();
        let m: TrafficMatrix<f64> = build_traffic_matrix(&g, &default_profile(0.5, &[(5, 1.0)]), 10.0).unwrap();
        assert!(m.get(a(5), a(1)).is_none());
        assert!(m.get(a(5), a(4)).is_some());
        // super-ASes take no part in host-to-host traffic
        assert!(m.get(a(1), a(5)).is_none());
    }

    #[test]
    fn profile_selection() {
        let g = g5().with_country(a(1), "us").unwrap();
        let us = RegionProfile::new("us", 0.0, BTreeMap::new()).unwrap();
        assert_eq!(us.region, "US");
        let err = build_traffic_matrix::<f64>(&g, std::slice::from_ref(&us), 1.0).unwrap_err();
        assert!(matches!(err, TrafficError::NoProfile { .. }));
        let mut ps = default_profile(0.0, &[]);
        ps.push(us);
        assert!(build_traffic_matrix::<f64>(&g, &ps, 1.0).is_ok());
    }

    #[test]
    fn degenerate_weights() {
        let g = g5()
            .with_attributes(
                (1..=5).map(|x| (a(x), AsAttributes { traffic_in_weight: Some(0.0), ..Default::default() })),
            )
            .unwrap();
        assert!(matches!(
            build_traffic_matrix::<f64>(&g, &default_profile(0.0, &[]), 1.0),
            Err(TrafficError::Degenerate)
        ));
    }

    #[test]
    fn profile_parsing() {
        let ps = parse_profiles("region,cdn_fraction,shares\nUS,0.675,10:0.5;11:0.5\ndefault,0.3,10:1\n").unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0].shares[&a(11)], 0.5);
        assert!(parse_profiles("US,0.5,10:0.4").is_err());
        assert!(parse_profiles("US,1.5,10:1").is_err());
        assert!(parse_profiles("US,0.5,10:1\nus,0.5,10:1").is_err());
        // no content mix is fine without shares
        assert!(parse_profiles("EU,0").is_ok());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let g = g5();
        let m: TrafficMatrix<f64> = build_traffic_matrix(&g, &default_profile(0.0, &[]), 1000.0).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = TrafficMatrix::<f64>::parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(TrafficMatrix::<f64>::parse_csv("1,1,3").is_err());
    }

    fn relabel(g: &AsGraph, map: &BTreeMap<Asn, Asn>) -> AsGraph {
        let mut b = crate::topology::GraphBuilder::default();
        for &x in g.asns() {
            b.add_node(map[&x], g.attributes(x).unwrap().clone());
        }
        for (x, y, r) in g.edges() {
            b.add_edge(map[&x], map[&y], r).unwrap();
        }
        b.build()
    }

    proptest! {
        #[test]
        fn permutation_equivariant(perm in Just((1u32..=5).collect::<Vec<_>>()).prop_shuffle(), frac in 0.0f64..1.0) {
            let g = g5();
            let map: BTreeMap<Asn, Asn> = (1..=5).map(a).zip(perm.into_iter().map(|x| a(x + 10))).collect();
            let h = relabel(&g, &map);
            let total = BigRational::from_integer(1000.into());
            let m1: TrafficMatrix<BigRational> = build_traffic_matrix(&g, &default_profile(frac, &[(2, 0.25), (3, 0.75)]), total.clone()).unwrap();
            let shares = [(map[&a(2)].get(), 0.25), (map[&a(3)].get(), 0.75)];
            let m2: TrafficMatrix<BigRational> = build_traffic_matrix(&h, &default_profile(frac, &shares), total.clone()).unwrap();
            prop_assert_eq!(m1.len(), m2.len());
            for (s, d, v) in m1.iter() {
                prop_assert_eq!(m2.get(map[&s], map[&d]), Some(v));
            }
            prop_assert_eq!(m1.total(), total);
        }
    }
}
