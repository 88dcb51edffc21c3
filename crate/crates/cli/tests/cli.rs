use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const G5: &str = "2|1|-1\n3|1|-1\n2|4|-1\n3|4|-1\n5|2|-1\n5|3|-1\n";

fn setup(extra: &str) -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("rel.txt"), G5).unwrap();
    fs::write(d.path().join("matrix.csv"), "src,dst,volume\n1,4,10\n").unwrap();
    let scn = format!("relationships = rel.txt\nmatrix = matrix.csv\nresistor = 1\nstrategy = tiebreak\n{extra}");
    fs::write(d.path().join("g5.scn"), scn).unwrap();
    d
}

fn radsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radsim"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> String {
    fs::read_to_string(dir.join("report.csv")).unwrap()
}

fn value(csv: &str, section: &str, key: &str) -> String {
    csv.lines()
        .find_map(|l| {
            let mut f = l.splitn(3, ',');
            (f.next() == Some(section) && f.next() == Some(key)).then(|| f.next().unwrap().to_string())
        })
        .unwrap_or_else(|| panic!("{section}.{key} missing"))
}

#[test]
fn g5_scenario_report() {
    let d = setup("deployers = 2\ndefection = true\n");
    let o = radsim(d.path(), &["simulate", "--scenario", "g5.scn", "--out", "out"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = report(&d.path().join("out"));
    assert_eq!(value(&csv, "deflection", "deflected_fraction"), "1");
    assert_eq!(value(&csv, "deflection", "mean_path_len_delta"), "0");
    assert_eq!(value(&csv, "cost.direct", "total"), "20");
    assert!(value(&csv, "scenario", "hash").len() == 64);
    let flows = fs::read_to_string(d.path().join("out/flows_after.csv")).unwrap();
    assert!(flows.contains("1 3 4"), "{flows}");
}

#[test]
fn empty_deployment_costs_nothing() {
    let d = setup("");
    let o = radsim(d.path(), &["simulate", "--scenario", "g5.scn", "--out", "out"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = report(&d.path().join("out"));
    assert_eq!(value(&csv, "cost", "grand_total"), "0");
    assert_eq!(value(&csv, "deflection", "tainted_before"), "0");
}

#[test]
fn reruns_are_byte_identical() {
    let d = setup("deployers = 2\ndefection = true\nexport_rib = true\n");
    for out in ["a", "b"] {
        let o = radsim(d.path(), &["simulate", "--scenario", "g5.scn", "--out", out, "--threads", "2"]);
        assert!(o.status.success());
    }
    let mut names: Vec<_> = fs::read_dir(d.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 7);
    for n in names {
        let a = fs::read(d.path().join("a").join(&n)).unwrap();
        let b = fs::read(d.path().join("b").join(&n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
    }
}

#[test]
fn report_recomputes_from_saved_ledgers() {
    let d = setup("deployers = 2\n");
    assert!(radsim(d.path(), &["simulate", "--scenario", "g5.scn", "--out", "out"]).status.success());
    let first = report(&d.path().join("out"));
    fs::remove_file(d.path().join("out/report.csv")).unwrap();
    let o = radsim(d.path(), &["report", "--scenario", "g5.scn", "--out", "out"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&d.path().join("out")), first);
}

#[test]
fn deploy_and_matrix_subcommands() {
    let d = setup("deployment = global:1\n");
    let o = radsim(d.path(), &["deploy", "--scenario", "g5.scn", "--out", "out"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(d.path().join("out/deployment.txt")).unwrap().trim(), "2");
    let o = radsim(d.path(), &["matrix", "--scenario", "g5.scn", "--out", "m"]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(d.path().join("m/matrix.csv")).unwrap(), "src,dst,volume\n1,4,10\n");
}

#[test]
fn exit_codes() {
    let d = setup("deployers = 2\n");
    let code = |args: &[&str]| radsim(d.path(), args).status.code().unwrap();
    // usage
    assert_eq!(code(&["simulate"]), 4);
    assert_eq!(code(&["simulate", "--scenario", "g5.scn"]), 4);
    assert_eq!(code(&["simulate", "--scenario", "g5.scn", "--out", "o", "--override", "frrp=yes", "--override", "selarp=yes"]), 4);
    // missing scenario file
    assert_eq!(code(&["simulate", "--scenario", "nope.scn", "--out", "o"]), 2);
    // round cap too small to converge
    let o = radsim(d.path(), &["simulate", "--scenario", "g5.scn", "--out", "o", "--override", "convergence_cap=1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"kind\":\"non_convergence\""));
    // a module error: unknown deployer
    fs::write(d.path().join("bad.csv"), "src,dst,volume\n1,99,10\n").unwrap();
    assert_eq!(code(&["simulate", "--scenario", "g5.scn", "--out", "o", "--override", "matrix=bad.csv"]), 1);
}
