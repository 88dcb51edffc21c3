use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{RunOutput, Scenario};
use crate::economics::DefectionOutcome;
use crate::scalar::{self, Scalar};
use crate::sim::converge_all;
use crate::Error;

/// Flat `(section, key, value)` rows, in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReportRows(pub Vec<(String, String, String)>);

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "n/a".to_string(), ToString::to_string)
}

impl ReportRows {
    fn push(&mut self, section: &str, key: impl Into<String>, value: impl Display) {
        self.0.push((section.to_string(), key.into(), value.to_string()));
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(s, k, _)| s == section && k == key)
            .map(|(_, _, v)| v.as_str())
    }

    pub fn from_run<S: Scalar>(out: &RunOutput<S>) -> Self {
        let mut r = ReportRows::default();
        let c = &out.cost;
        r.push("scenario", "hash", &out.hash);
        r.push("scenario", "ases", out.graph.len());
        r.push("scenario", "strategy", out.config.strategy.name());
        r.push("scenario", "poisoning", format!("{:?}", out.config.poisoning).to_lowercase());
        r.push("scenario", "members", out.config.members().len());
        r.push("scenario", "dropped_members", out.dropped_members.len());
        r.push("scenario", "deployers", out.deployment.len());
        r.push("scenario", "total_units", out.matrix.total());

        if let Some(sel) = &out.selection {
            r.push("deployment", "partial", sel.partial);
            r.push("deployment", "tainted_fraction", opt(&sel.tainted_fraction));
            for (i, (a, s)) in sel.rounds.iter().enumerate() {
                r.push("deployment.rounds", format!("{}", i + 1), format!("{a} {s}"));
            }
        }

        r.push("cost.direct", "total", &c.direct.total);
        r.push("cost.direct", "total_usd", c.usd(&c.direct.total));
        for (a, l) in &c.direct.per_deployer {
            r.push("cost.direct.per_deployer", a.to_string(), format!("{} {} {}", l.before, l.after, l.loss));
        }
        if let Some(d) = &c.defection {
            r.push("cost.defection", "total", &d.total);
            let failed = d
                .per_deployer
                .values()
                .filter(|o| matches!(o, DefectionOutcome::Failed(_)))
                .count();
            r.push("cost.defection", "failed", failed);
        }
        r.push("cost", "grand_total", c.grand_total());
        r.push("cost", "grand_total_usd", c.usd(&c.grand_total()));
        if let Some(d) = &out.detection {
            r.push("cost.detection", "deployer_expected", &d.deployer_expected);
            r.push("cost.detection", "nondeployer_expected", &d.nondeployer_expected);
            r.push("cost.detection", "disincentive_margin", &d.disincentive_margin);
        }

        let res = &c.resistor;
        r.push("resistor", "transit_conversion", &res.transit_conversion);
        r.push("resistor", "provider_shift", &res.provider_shift);
        for (a, (t, p)) in &res.per_member {
            r.push("resistor.per_member", a.to_string(), format!("{t} {p}"));
        }

        let d = &c.deflection;
        r.push("deflection", "tainted_before", &d.tainted_before);
        r.push("deflection", "deflected", &d.deflected);
        r.push("deflection", "deflected_fraction", opt(&d.deflected_fraction));
        r.push("deflection", "changed_paths", d.changed_paths);
        r.push("deflection", "mean_path_len_delta", opt(&d.mean_path_len_delta));
        r.push("deflection.inbound", "tainted_before", &d.inbound_tainted_before);
        r.push("deflection.inbound", "deflected", &d.inbound_deflected);
        r.push("deflection.inbound", "retainted", &d.inbound_retainted);
        r.push("deflection.inbound", "changed_paths", d.inbound_changed_paths);
        r.push("deflection.inbound", "mean_path_len_delta", opt(&d.inbound_path_len_delta));

        let l = &c.link_load;
        r.push("link_load", "increased_links", l.increased_links);
        r.push("link_load", "newly_used_links", l.newly_used_links);
        r.push("link_load", "median_increase", opt(&l.median));
        r.push("link_load", "p90_increase", opt(&l.p90));

        r.push("traffic", "delivered_before", out.baseline.delivered_volume());
        r.push("traffic", "delivered_after", out.attack.delivered_volume());
        r.push("traffic", "unreachable_before", out.baseline.unreachable_volume());
        r.push("traffic", "unreachable_after", out.attack.unreachable_volume());

        if !out.international.is_empty() {
            let third = S::one() / scalar::from_count::<S>(3);
            let over = out.international.values().filter(|f| **f > third).count();
            r.push("international", "transit_ases", out.international.len());
            r.push("international", "over_one_third", over);
            r.push(
                "international",
                "over_one_third_share",
                scalar::from_count::<S>(over) / scalar::from_count::<S>(out.international.len()),
            );
        }

        for o in &out.selarp {
            let sec = format!("selarp.{}", o.member);
            r.push(&sec, "advertise_to", o.advertise_to.len());
            r.push(&sec, "score", &o.score);
            r.push(&sec, "rounds", o.rounds);
            r.push(&sec, "skipped", o.skipped.len());
        }
        r
    }

    /// Indented text, one block per section.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut current: Option<&str> = None;
        for (sec, k, v) in &self.0 {
            if current != Some(sec.as_str()) {
                if current.is_some() {
                    s.push('\n');
                }
                s.push_str(&format!("[{sec}]\n"));
                current = Some(sec);
            }
            let depth = sec.matches('.').count() + 1;
            s.push_str(&format!("{}{k} = {v}\n", "  ".repeat(depth)));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,key,value\n");
        for (sec, k, v) in &self.0 {
            s.push_str(&format!("{sec},{k},{v}\n"));
        }
        s
    }

    /// Writes `report.txt` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("report.txt", self.to_text()), ("report.csv", self.to_csv())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Error> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes the report and every artefact of `out` into `dir`. Output is a
/// pure function of the inputs, so reruns are byte-identical.
pub fn write_outputs<S: Scalar>(out: &RunOutput<S>, scn: &Scenario, dir: &Path) -> Result<ReportRows, Error> {
    let rows = ReportRows::from_run(out);
    rows.write(dir)?;
    write_file(&dir.join("flows_before.csv"), |w| out.baseline.write_csv(w))?;
    write_file(&dir.join("flows_after.csv"), |w| out.attack.write_csv(w))?;
    write_file(&dir.join("matrix.csv"), |w| out.matrix.write_csv(w))?;
    write_file(&dir.join("deployment.txt"), |w| w.write_all(out.deployment.to_text().as_bytes()))?;
    write_file(&dir.join("transit_international.csv"), |w| {
        writeln!(w, "asn,international_fraction")?;
        for (a, f) in &out.international {
            writeln!(w, "{a},{f}")?;
        }
        Ok(())
    })?;
    if let Some(d) = &out.cost.defection {
        write_file(&dir.join("defection.csv"), |w| {
            writeln!(w, "asn,actual,counterfactual,gain,error")?;
            for (a, o) in &d.per_deployer {
                match o {
                    DefectionOutcome::Gain { actual, counterfactual, gain } => {
                        writeln!(w, "{a},{actual},{counterfactual},{gain},")?
                    }
                    DefectionOutcome::Failed(e) => writeln!(w, "{a},,,,{}", e.replace(',', ";"))?,
                }
            }
            Ok(())
        })?;
    }
    if !out.selarp.is_empty() {
        write_file(&dir.join("selarp.txt"), |w| {
            for o in &out.selarp {
                let n: Vec<String> = o.advertise_to.iter().map(ToString::to_string).collect();
                writeln!(w, "{}: {}", o.member, n.join(" "))?;
            }
            Ok(())
        })?;
    }
    if scn.export_rib {
        let rib = converge_all(&out.graph, &out.announcements, &out.policy)?;
        write_file(&dir.join("rib_after.csv"), |w| rib.write_csv(w))?;
    }
    Ok(rows)
}
