//! Batch front door: config ingestion, persistence, subcommands.
//!
//! Exit codes: 0 success, 2 input error (bad arguments, unreadable or
//! malformed files), 3 hypothesis gate failure, 4 numerical failure on the
//! main path (singular designs, non-positive-definite limit matrices,
//! unstable moments).

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::error::Error;
use crate::estimate::estimate_bundle;
use crate::model::{derive_moment_set, validate_hypotheses, HypothesisReport, ModelSpec, MomentSet};
use crate::montecarlo::{
    run_clt_experiment, run_qsl_experiment, run_rate_experiment, ExperimentConfig, Mode,
};
use crate::simulate::simulate_tree;
use crate::theory::limit_matrices;
use crate::tree::{generation_of, Tree};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

const USAGE: &str = "\
rcbar - random coefficient bifurcating autoregressive processes:
        simulation, least-squares estimation, Monte Carlo validation

USAGE:
  rcbar simulate --config F --generations N --seed S --out tree.csv [--manifest M]
  rcbar estimate --tree tree.csv --out est.json [--manifest M]
  rcbar theory   --config F --out limits.json [--manifest M]
  rcbar mc       --config F --mode MODE --generations N --replicates R --seed S
                 --out report.json [--dump-samples samples.csv]
                 [--tol-cov T] [--ks-level L] [--manifest M]
  rcbar check    --config F

MODES: clt_theta, clt_eta, clt_zeta, clt_nu, qsl, rate

The config file is a JSON document with the model description:
  {
    \"coeff_law\": {\"kind\": \"degenerate\", \"value_x\": 0.5, \"value_y\": 0.5},
    \"noise_law\": {\"kind\": \"bivariate_gaussian\", \"mean_x\": 1.0, \"mean_y\": 1.0,
                  \"sd_x\": 1.0, \"sd_y\": 1.0, \"corr\": 0.0},
    \"initial\":   {\"kind\": \"constant\", \"value\": 1.0}
  }
`initial` may be omitted and defaults to the constant 1. Law kinds:
bivariate_gaussian, independent_uniform (lo_x/hi_x/lo_y/hi_y), degenerate.

--seed accepts decimal or 0x-prefixed hex. RCBAR_THREADS caps the worker
threads used by `mc` (default: all logical processors).

EXIT CODES: 0 success, 2 input error, 3 hypothesis gate, 4 numerical failure.
";

/// What went wrong, carrying the exit code.
#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> CliError {
        let code = match err {
            Error::InvalidLaw(_) | Error::InvalidArgument(_) => EXIT_INPUT,
            Error::HypothesisGate(_) => EXIT_HYPOTHESIS,
            Error::SingularDesign { .. }
            | Error::UnstableMoment { .. }
            | Error::NotPositiveDefinite(_)
            | Error::TooManyFailures { .. } => EXIT_NUMERICAL,
        };
        CliError { code, message: err.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Reproduction record of one invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub args: Vec<String>,
    /// Parsed config echo, when the subcommand reads one.
    pub config: Option<serde_json::Value>,
    /// Seed echo in hex, when the subcommand takes one.
    pub master_seed: Option<String>,
    pub duration_ms: u128,
    /// Output files written by this run; all exist on successful exit.
    pub outputs: Vec<String>,
}

/// Run the command line and return the process exit code.
pub fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {}", err.message);
            err.code
        }
    }
}

fn dispatch(args: &[String]) -> CliResult<()> {
    let Some(subcommand) = args.first() else {
        return Err(CliError::input(format!("missing subcommand\n\n{USAGE}")));
    };
    if subcommand == "--help" || subcommand == "-h" || subcommand == "help" {
        println!("{USAGE}");
        return Ok(());
    }
    let started = Instant::now();
    let flags = parse_flags(&args[1..])?;
    match subcommand.as_str() {
        "simulate" => cmd_simulate(args, &flags, started),
        "estimate" => cmd_estimate(args, &flags, started),
        "theory" => cmd_theory(args, &flags, started),
        "mc" => cmd_mc(args, &flags, started),
        "check" => cmd_check(&flags),
        other => Err(CliError::input(format!(
            "unknown subcommand {other:?}\n\n{USAGE}"
        ))),
    }
}

struct Flags(Vec<(String, String)>);

fn parse_flags(args: &[String]) -> CliResult<Flags> {
    let mut flags = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let Some(name) = flag.strip_prefix("--") else {
            return Err(CliError::input(format!("unexpected argument {flag:?}")));
        };
        let Some(value) = it.next() else {
            return Err(CliError::input(format!("flag --{name} needs a value")));
        };
        flags.push((name.to_string(), value.clone()));
    }
    Ok(Flags(flags))
}

impl Flags {
    fn get(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, name: &str) -> CliResult<&str> {
        self.get(name)
            .ok_or_else(|| CliError::input(format!("missing required flag --{name}")))
    }

    fn check_known(&self, known: &[&str]) -> CliResult<()> {
        for (name, _) in &self.0 {
            if !known.contains(&name.as_str()) {
                return Err(CliError::input(format!("unknown flag --{name}")));
            }
        }
        Ok(())
    }
}

/// Parse a 64-bit seed given as decimal or 0x-prefixed hex.
fn parse_seed(text: &str) -> CliResult<u64> {
    let parsed = if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16)
    } else {
        text.parse::<u64>()
    };
    parsed.map_err(|_| CliError::input(format!("invalid seed {text:?}: expected a decimal or 0x-hex 64-bit integer")))
}

fn parse_usize(flags: &Flags, name: &str) -> CliResult<usize> {
    let text = flags.require(name)?;
    text.parse::<usize>()
        .map_err(|_| CliError::input(format!("invalid value {text:?} for --{name}: expected a non-negative integer")))
}

fn parse_f64(text: &str, name: &str) -> CliResult<f64> {
    text.parse::<f64>()
        .map_err(|_| CliError::input(format!("invalid value {text:?} for --{name}: expected a number")))
}

/// Read, parse and validate a model config; prints the hypothesis report.
fn parse_config(path: &str) -> CliResult<(ModelSpec, MomentSet, HypothesisReport)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read config {path:?}: {e}")))?;
    let spec: ModelSpec = serde_json::from_str(&text).map_err(|e| {
        CliError::input(format!(
            "malformed config {path:?} at line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let spec = spec.normalized()?;
    let moments = derive_moment_set(&spec)?;
    let report = validate_hypotheses(&moments);
    print!("{}", format_report(&report));
    Ok((spec, moments, report))
}

fn format_report(report: &HypothesisReport) -> String {
    let mut out = String::new();
    for check in report.checks() {
        let _ = writeln!(
            out,
            "{:<12} {}  {}",
            check.name,
            if check.passed { "PASS" } else { "FAIL" },
            check.detail
        );
    }
    let _ = writeln!(out, "can_simulate: {}", report.can_simulate);
    let _ = writeln!(
        out,
        "theory_valid_for_consistency: {}",
        report.theory_valid_for_consistency
    );
    let _ = writeln!(out, "theory_valid_for_clt: {}", report.theory_valid_for_clt);
    out
}

fn gate(pass: bool, what: &str) -> CliResult<()> {
    if pass {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_HYPOTHESIS,
            message: format!("hypothesis gate failed for {what}; see the report above"),
        })
    }
}

fn failed_names(report: &HypothesisReport, consistency_only: bool) -> String {
    let checks = report.checks();
    let relevant: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .filter(|c| !consistency_only || c.name.starts_with("H1") || c.name == "H2" || c.name == "H3")
        .map(|c| c.name.as_str())
        .collect();
    relevant.join(", ")
}

fn write_output(path: &str, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::input(format!("cannot write {path:?}: {e}")))?;
    println!("wrote {path}");
    Ok(())
}

fn write_manifest(
    flags: &Flags,
    args: &[String],
    subcommand: &str,
    config: Option<&ModelSpec>,
    master_seed: Option<u64>,
    outputs: &[&str],
    started: Instant,
) -> CliResult<()> {
    let Some(path) = flags.get("manifest") else {
        return Ok(());
    };
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        args: args.to_vec(),
        config: config
            .map(|spec| serde_json::to_value(spec).expect("model spec serializes")),
        master_seed: master_seed.map(|s| format!("{s:#x}")),
        duration_ms: started.elapsed().as_millis(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_output(path, &format!("{body}\n"))
}

// --- tree CSV ---------------------------------------------------------------

const TREE_HEADER: &str = "node,generation,value";

fn tree_to_csv(tree: &Tree) -> String {
    let mut out = String::with_capacity(tree.node_count() * 24);
    out.push_str(TREE_HEADER);
    out.push('\n');
    for (i, v) in tree.values().iter().enumerate() {
        let node = i + 1;
        let _ = writeln!(out, "{},{},{}", node, generation_of(node).unwrap(), v);
    }
    out
}

fn tree_from_csv(path: &str, text: &str) -> CliResult<Tree> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == TREE_HEADER => {}
        Some((_, header)) => {
            return Err(CliError::input(format!(
                "{path}: expected header {TREE_HEADER:?}, found {header:?}"
            )))
        }
        None => return Err(CliError::input(format!("{path}: empty file"))),
    }
    let mut values = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(node), Some(generation), Some(value), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(CliError::input(format!(
                "{path}:{}: expected 3 comma-separated fields",
                lineno + 1
            )));
        };
        let node: usize = node.trim().parse().map_err(|_| {
            CliError::input(format!("{path}:{}: invalid node index {node:?}", lineno + 1))
        })?;
        let generation: usize = generation.trim().parse().map_err(|_| {
            CliError::input(format!(
                "{path}:{}: invalid generation {generation:?}",
                lineno + 1
            ))
        })?;
        let value: f64 = value.trim().parse().map_err(|_| {
            CliError::input(format!("{path}:{}: invalid value {value:?}", lineno + 1))
        })?;
        if node != values.len() + 1 {
            return Err(CliError::input(format!(
                "{path}:{}: node {node} out of order; expected {}",
                lineno + 1,
                values.len() + 1
            )));
        }
        let expected_gen = generation_of(node).map_err(CliError::from)?;
        if generation != expected_gen {
            return Err(CliError::input(format!(
                "{path}:{}: node {node} has generation {generation}, expected {expected_gen}",
                lineno + 1
            )));
        }
        values.push(value);
    }
    Tree::from_values(values).map_err(|e| CliError::input(format!("{path}: {e}")))
}

// --- subcommands -------------------------------------------------------------

fn cmd_simulate(args: &[String], flags: &Flags, started: Instant) -> CliResult<()> {
    flags.check_known(&["config", "generations", "seed", "out", "manifest"])?;
    let (spec, _, _) = parse_config(flags.require("config")?)?;
    let generations = parse_usize(flags, "generations")?;
    let seed = parse_seed(flags.require("seed")?)?;
    let out = flags.require("out")?;
    let tree = simulate_tree(&spec, generations, seed)?;
    write_output(out, &tree_to_csv(&tree))?;
    write_manifest(flags, args, "simulate", Some(&spec), Some(seed), &[out], started)
}

fn cmd_estimate(args: &[String], flags: &Flags, started: Instant) -> CliResult<()> {
    flags.check_known(&["tree", "out", "manifest"])?;
    let tree_path = flags.require("tree")?;
    let out = flags.require("out")?;
    let text = std::fs::read_to_string(tree_path)
        .map_err(|e| CliError::input(format!("cannot read tree {tree_path:?}: {e}")))?;
    let tree = tree_from_csv(tree_path, &text)?;
    let bundle = estimate_bundle(&tree)?;
    let body = serde_json::to_string_pretty(&bundle).expect("bundle serializes");
    write_output(out, &format!("{body}\n"))?;
    write_manifest(flags, args, "estimate", None, None, &[out], started)
}

fn cmd_theory(args: &[String], flags: &Flags, started: Instant) -> CliResult<()> {
    flags.check_known(&["config", "out", "manifest"])?;
    let (spec, moments, report) = parse_config(flags.require("config")?)?;
    let out = flags.require("out")?;
    // s_8 existence needs the full 16th-moment contraction
    if !(report.h1.passed && report.h2.passed && report.h3.passed) {
        return gate(false, &format!("theory ({})", failed_names(&report, true)));
    }
    let limits = limit_matrices(&moments)?;
    let body = serde_json::to_string_pretty(&limits).expect("limits serialize");
    write_output(out, &format!("{body}\n"))?;
    write_manifest(flags, args, "theory", Some(&spec), None, &[out], started)
}

fn clt_samples_csv(report: &crate::montecarlo::CltReport) -> String {
    let mut out = String::new();
    out.push_str("replicate");
    for c in 1..=report.dimension {
        let _ = write!(out, ",component_{c}");
    }
    out.push('\n');
    for (r, row) in report.standardized_samples.iter().enumerate() {
        let _ = write!(out, "{r}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn cmd_mc(args: &[String], flags: &Flags, started: Instant) -> CliResult<()> {
    flags.check_known(&[
        "config",
        "mode",
        "generations",
        "replicates",
        "seed",
        "out",
        "dump-samples",
        "tol-cov",
        "ks-level",
        "manifest",
    ])?;
    let (spec, _, report) = parse_config(flags.require("config")?)?;
    let mode = Mode::parse(flags.require("mode")?)?;
    let generations = parse_usize(flags, "generations")?;
    let replicates = parse_usize(flags, "replicates")?;
    let seed = parse_seed(flags.require("seed")?)?;
    let out = flags.require("out")?;

    match mode {
        Mode::CltTheta | Mode::CltEta | Mode::CltZeta | Mode::CltNu => {
            if !report.theory_valid_for_clt {
                return gate(false, &format!("mc {} ({})", mode.name(), failed_names(&report, false)));
            }
        }
        Mode::Qsl | Mode::Rate => {
            if !report.theory_valid_for_consistency {
                return gate(false, &format!("mc {} ({})", mode.name(), failed_names(&report, true)));
            }
        }
    }

    let mut cfg = ExperimentConfig::new(spec.clone(), mode, generations, replicates, seed);
    if let Some(t) = flags.get("tol-cov") {
        cfg.tol_cov = Some(parse_f64(t, "tol-cov")?);
    }
    if let Some(l) = flags.get("ks-level") {
        cfg.ks_level = Some(parse_f64(l, "ks-level")?);
    }

    let dump = flags.get("dump-samples");
    if dump.is_some() && !matches!(mode, Mode::CltTheta | Mode::CltEta | Mode::CltZeta | Mode::CltNu) {
        return Err(CliError::input(
            "--dump-samples only applies to the clt_* modes".to_string(),
        ));
    }

    let run = || -> CliResult<(String, Option<String>)> {
        match mode {
            Mode::CltTheta | Mode::CltEta | Mode::CltZeta | Mode::CltNu => {
                let report = run_clt_experiment(&cfg)?;
                let body = serde_json::to_string_pretty(&report).expect("report serializes");
                let samples = dump.map(|_| clt_samples_csv(&report));
                Ok((body, samples))
            }
            Mode::Qsl => {
                let report = run_qsl_experiment(&cfg)?;
                Ok((serde_json::to_string_pretty(&report).expect("report serializes"), None))
            }
            Mode::Rate => {
                let report = run_rate_experiment(&cfg)?;
                Ok((serde_json::to_string_pretty(&report).expect("report serializes"), None))
            }
        }
    };

    // RCBAR_THREADS caps worker parallelism; default is all logical processors
    let (body, samples) = match std::env::var("RCBAR_THREADS") {
        Ok(text) => {
            let threads: usize = text.parse().map_err(|_| {
                CliError::input(format!("invalid RCBAR_THREADS value {text:?}"))
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::input(format!("cannot build thread pool: {e}")))?;
            pool.install(run)?
        }
        Err(_) => run()?,
    };

    write_output(out, &format!("{body}\n"))?;
    let mut outputs = vec![out];
    if let (Some(path), Some(csv)) = (dump, samples) {
        write_output(path, &csv)?;
        outputs.push(path);
    }
    write_manifest(flags, args, "mc", Some(&spec), Some(seed), &outputs, started)
}

fn cmd_check(flags: &Flags) -> CliResult<()> {
    flags.check_known(&["config"])?;
    let (_, _, report) = parse_config(flags.require("config")?)?;
    gate(
        report.theory_valid_for_clt,
        &format!("check ({})", failed_names(&report, false)),
    )
}
