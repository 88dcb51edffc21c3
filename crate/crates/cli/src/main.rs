//! Batch runner for scenario files.
//!
//! Exit codes: 0 success, 1 module error, 2 I/O error, 3 non-convergence,
//! 4 invalid usage or scenario.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use radsim::scenario::{self, ReportRows, Scenario};
use radsim::{Error, Units};

#[derive(Parser, Debug)]
#[command(name = "radsim", version, about = "Routing-around-deployer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Scenario file (`key = value` per line).
    #[arg(long)]
    scenario: PathBuf,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the scenario's `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reserved. The pipeline has no randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces one scenario key; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: baseline, deployment, attack, costs.
    Simulate(Common),
    /// Deployer selection only.
    Deploy(Common),
    /// Traffic matrix only.
    Matrix(Common),
    /// Recomputes costs from ledgers saved in the output directory.
    Report(Common),
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_non_convergence() => 3,
        Error::Io { .. } => 2,
        Error::Scenario(_) | Error::Config(_) => 4,
        _ => 1,
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn setup(c: &Common) -> Result<(Scenario, PathBuf), Failure> {
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if c.seed.is_some() {
        log::info!("--seed has no effect: the pipeline is deterministic");
    }
    let scn = Scenario::load(&c.scenario, &c.overrides)?;
    let out = c
        .out
        .clone()
        .or_else(|| scn.output.clone())
        .ok_or_else(|| Failure::Usage("no output directory: pass --out or set `output`".into()))?;
    Ok((scn, out))
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: PathBuf, body: String) -> Result<(), Error> {
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate(c) => {
            let (scn, out) = setup(&c)?;
            let run = scenario::simulate::<Units>(&scn)?;
            create_dir(&out)?;
            scenario::write_outputs(&run, &scn, &out)?;
            println!("{}", out.join("report.txt").display());
        }
        Command::Deploy(c) => {
            let (scn, out) = setup(&c)?;
            let inputs = scenario::load_inputs::<Units>(&scn)?;
            let baseline = scenario::run_baseline(&scn, &inputs)?;
            let members = scenario::resolve_members(&scn, &inputs.graph)?;
            let (deployment, selection) = scenario::resolve_deployment(&scn, &inputs.graph, &baseline, &members)?;
            create_dir(&out)?;
            write(out.join("deployment.txt"), deployment.to_text())?;
            let mut csv = String::from("round,asn,score\n");
            for (i, (a, s)) in selection.iter().flat_map(|s| &s.rounds).enumerate() {
                csv.push_str(&format!("{},{a},{s}\n", i + 1));
            }
            write(out.join("selection.csv"), csv)?;
            println!("{}", out.join("deployment.txt").display());
        }
        Command::Matrix(c) => {
            let (scn, out) = setup(&c)?;
            let inputs = scenario::load_inputs::<Units>(&scn)?;
            create_dir(&out)?;
            let mut buf = Vec::new();
            inputs.matrix.write_csv(&mut buf).expect("writing to memory");
            write(out.join("matrix.csv"), String::from_utf8(buf).expect("ascii csv"))?;
            println!("{}", out.join("matrix.csv").display());
        }
        Command::Report(c) => {
            let (scn, out) = setup(&c)?;
            let run = scenario::recompute_report::<Units>(&scn, &out)?;
            ReportRows::from_run(&run).write(&out)?;
            println!("{}", out.join("report.txt").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(4);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("{{\"error\":{{\"kind\":\"usage\",\"code\":4,\"message\":\"{}\"}}}}", escape(&m));
            ExitCode::from(4)
        }
        Err(Failure::Run(e)) => {
            let code = exit_code(&e);
            eprintln!(
                "{{\"error\":{{\"kind\":\"{}\",\"code\":{code},\"message\":\"{}\"}}}}",
                e.kind(),
                escape(&e.to_string())
            );
            ExitCode::from(code)
        }
    }
}
