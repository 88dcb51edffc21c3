use std::collections::BTreeSet;

use super::{AsAttributes, AsGraph, Asn, Country, GraphBuilder, Relationship, TopologyError};

/// Parses a CAIDA serial-1 relationship file.
///
/// Lines are `A|B|rel` with `rel` -1 (A is a provider of B), 0 (peers) or 2
/// (siblings). `#` starts a comment line. Trailing fields, such as the
/// serial-2 inference source, are ignored.
pub fn parse_as_relationships(text: &str) -> Result<AsGraph, TopologyError> {
    let mut builder = GraphBuilder::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = n + 1;
        let err = |message: String| TopologyError::Parse { line: lineno, message };
        let mut fields = line.split('|');
        let (Some(a), Some(b), Some(rel)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(format!("expected A|B|rel, got {line:?}")));
        };
        let a: Asn = a.parse().map_err(|e: TopologyError| err(e.to_string()))?;
        let b: Asn = b.parse().map_err(|e: TopologyError| err(e.to_string()))?;
        let rel = match rel.trim() {
            "-1" => Relationship::ProviderOf,
            "0" => Relationship::Peer,
            "2" => Relationship::Sibling,
            other => return Err(err(format!("unknown relationship code {other:?}"))),
        };
        if a == b {
            return Err(err(format!("self-edge on AS {a}")));
        }
        builder.add_edge(a, b, rel)?;
    }
    Ok(builder.build())
}

/// One row of the attribute sidecar.
pub type AttributeRecord = (Asn, AsAttributes);

const REQUIRED: [&str; 6] = [
    "asn",
    "country",
    "ip_weight",
    "traffic_in_weight",
    "traffic_out_weight",
    "super_as",
];

/// Parses the attribute sidecar:
/// `asn,country,ip_weight,traffic_in_weight,traffic_out_weight,super_as`
/// with a mandatory header row. Empty cells take defaults. An optional
/// `cdn_hosts` column lists, `;`-separated, the super-ASes with a cache
/// node inside the AS.
pub fn parse_attributes(text: &str) -> Result<Vec<AttributeRecord>, TopologyError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let Some((hline, header)) = lines.next() else {
        return Err(TopologyError::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    };
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    let mut pos = [0usize; 6];
    for (slot, name) in pos.iter_mut().zip(REQUIRED) {
        *slot = columns.iter().position(|c| c == name).ok_or(TopologyError::Parse {
            line: hline + 1,
            message: format!("header lacks column {name:?}"),
        })?;
    }
    let cdn_col = columns.iter().position(|c| c == "cdn_hosts");

    let mut out = Vec::new();
    for (n, raw) in lines {
        let lineno = n + 1;
        let err = |message: String| TopologyError::Parse { line: lineno, message };
        let cells: Vec<&str> = raw.split(',').map(str::trim).collect();
        let cell = |i: usize| cells.get(i).copied().unwrap_or("");
        let asn: Asn = cell(pos[0]).parse().map_err(|e: TopologyError| err(e.to_string()))?;
        let weight = |i: usize| -> Result<Option<f64>, TopologyError> {
            let c = cell(i);
            if c.is_empty() {
                return Ok(None);
            }
            let w: f64 = c.parse().map_err(|_| err(format!("bad number {c:?}")))?;
            if !w.is_finite() || w < 0.0 {
                return Err(err(format!("weight {c:?} must be finite and nonnegative")));
            }
            Ok(Some(w))
        };
        let country = match cell(pos[1]) {
            "" | "?" | "??" | "ZZ" | "zz" => None,
            c if c.eq_ignore_ascii_case("unknown") => None,
            c => Some(Country::new(c)),
        };
        let super_as = match cell(pos[5]).to_ascii_lowercase().as_str() {
            "" | "0" | "false" | "no" => false,
            "1" | "true" | "yes" => true,
            other => return Err(err(format!("bad super_as flag {other:?}"))),
        };
        let mut cdn_hosts = BTreeSet::new();
        if let Some(i) = cdn_col {
            for s in cell(i).split(';').filter(|s| !s.trim().is_empty()) {
                cdn_hosts.insert(s.parse().map_err(|e: TopologyError| err(e.to_string()))?);
            }
        }
        out.push((
            asn,
            AsAttributes {
                country,
                ip_weight: weight(pos[2])?.unwrap_or(1.0),
                traffic_in_weight: weight(pos[3])?,
                traffic_out_weight: weight(pos[4])?,
                super_as,
                cdn_hosts,
            },
        ));
    }
    Ok(out)
}
