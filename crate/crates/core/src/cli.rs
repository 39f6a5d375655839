// SPDX-License-Identifier: Apache-2.0

//! Command-line driver: parse, extract the kernel, time, fragment,
//! schedule, cost, optionally check equivalence, and emit artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::cost::{cost_report, render_table, CostReport};
use crate::dfg::DataFlowGraph;
use crate::dsl::{emit, emit_dot, parse};
use crate::fragment::{bucket_fill, fragment, mobility, Fragmentation};
use crate::kernel::extract_kernel;
use crate::schedule::{render_text, rows, schedule, verify_schedule, Schedule};
use crate::sim::{check_equiv, EquivReport, EquivTarget, Strategy};
use crate::timing::{bit_arrivals, critical_path, cycle_bits, CriticalPath};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_COUNTEREXAMPLE: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum EmitKind {
    Transformed,
    Schedule,
    Report,
    Dot,
    Arrivals,
}

/// Bit-level fragmentation of additive dataflow designs.
#[derive(Debug, Clone, Parser)]
#[command(name = "fragsynth", version)]
pub struct RunConfig {
    /// Design file in the .dfg language.
    pub input: PathBuf,
    /// Number of clock cycles λ.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub latency: u32,
    /// Chained 1-bit additions per cycle; defaults to ⌈critical time / λ⌉.
    #[arg(long = "nbits", value_parser = clap::value_parser!(u32).range(1..))]
    pub n_bits: Option<u32>,
    /// Artifacts to produce; may be repeated.
    #[arg(long, value_enum)]
    pub emit: Vec<EmitKind>,
    /// Seed for random equivalence vectors.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Simulate the schedule against the input design.
    #[arg(long)]
    pub check_equiv: bool,
    /// Use per-op bucket filling instead of per-bit mobility.
    #[arg(long)]
    pub bucket_fill: bool,
    /// Write artifacts into this directory instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: Vec<Artifact>,
    /// Set when the equivalence check found a mismatch.
    pub counterexample: Option<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.counterexample.is_some() {
            EXIT_COUNTEREXAMPLE
        } else {
            EXIT_OK
        }
    }
}

/// Every intermediate result of one pipeline run.
pub struct Pipeline {
    pub original: DataFlowGraph,
    pub kernel: DataFlowGraph,
    pub trace: crate::kernel::LoweringTrace,
    pub critical: CriticalPath,
    pub n_bits: u32,
    pub fragmentation: Fragmentation,
    pub schedule: Schedule,
    pub costs: CostReport,
    pub equiv: Option<EquivReport>,
}

fn format_diagnostics(path: &Path, text: &str, diags: &[crate::dsl::Diagnostic]) -> String {
    let _ = text;
    diags
        .iter()
        .map(|d| format!("{}:{}:{}: {}", path.display(), d.span.line, d.span.column, d.message))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs every phase on already loaded source text.
pub fn run_pipeline(config: &RunConfig, text: &str) -> Result<Pipeline, CliError> {
    let original = parse(text).map_err(|d| CliError::new(EXIT_INPUT, format_diagnostics(&config.input, text, &d)))?;
    let (kernel, trace) = extract_kernel(&original).map_err(|e| CliError::new(EXIT_INPUT, e.to_string()))?;
    let critical = critical_path(&kernel);
    let n_bits = match config.n_bits {
        Some(n) => n,
        None => cycle_bits(critical.time, config.latency).map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))?,
    };
    let m = mobility(&kernel, n_bits, config.latency).map_err(|e| CliError::new(EXIT_INFEASIBLE, e.to_string()))?;
    let fragmentation = if config.bucket_fill { bucket_fill(&kernel, &m) } else { fragment(&kernel, &m) };
    let schedule =
        schedule(&fragmentation, config.latency, n_bits).map_err(|e| CliError::new(EXIT_INFEASIBLE, e.to_string()))?;
    if let Err(v) = verify_schedule(&schedule, &fragmentation.design) {
        return Err(CliError::new(EXIT_INFEASIBLE, format!("schedule fails verification: {v:?}")));
    }
    let costs = cost_report(&schedule, &fragmentation.design, &kernel);
    let equiv = if config.check_equiv {
        let target = EquivTarget::schedule(&schedule, &fragmentation.design);
        let report = check_equiv(&original, &target, Strategy::auto(&original, config.seed))
            .map_err(|e| CliError::new(EXIT_INPUT, e.to_string()))?;
        Some(report)
    } else {
        None
    };
    Ok(Pipeline { original, kernel, trace, critical, n_bits, fragmentation, schedule, costs, equiv })
}

#[derive(Serialize)]
struct EquivJson {
    strategy: Option<&'static str>,
    vectors: usize,
    seed: Option<u64>,
    result: &'static str,
    counterexample: Option<String>,
}

fn equiv_json(e: &Option<EquivReport>) -> EquivJson {
    match e {
        None => EquivJson { strategy: None, vectors: 0, seed: None, result: "skipped", counterexample: None },
        Some(r) => EquivJson {
            strategy: Some(r.strategy.name()),
            vectors: r.vectors,
            seed: match r.strategy {
                Strategy::Random { seed, .. } => Some(seed),
                Strategy::Exhaustive => None,
            },
            result: if r.passed() { "pass" } else { "counterexample" },
            counterexample: r.counterexample.as_ref().map(|c| c.to_string()),
        },
    }
}

pub fn report_json(p: &Pipeline, config: &RunConfig) -> serde_json::Value {
    json!({
        "design": p.original.name,
        "lambda": config.latency,
        "n_bits": p.n_bits,
        "fragmenter": if config.bucket_fill { "bucket-fill" } else { "bit-mobility" },
        "critical_path": p.critical,
        "kernel": p.trace,
        "fragments": p.fragmentation.fragments,
        "schedule": rows(&p.schedule, &p.fragmentation.design),
        "costs": p.costs,
        "equiv": equiv_json(&p.equiv),
    })
}

fn summary(p: &Pipeline, config: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "design {}: critical path {} = {}δ, λ = {}, {} chained bits per cycle",
        p.original.name,
        p.critical.ops.join(" -> "),
        p.critical.time,
        config.latency,
        p.n_bits
    );
    let _ = writeln!(s, "{} fragments", p.fragmentation.fragments.len());
    s.push('\n');
    s.push_str(&render_table(&p.costs));
    if let Some(e) = &p.equiv {
        let _ = writeln!(
            s,
            "\nequivalence ({}, {} vectors): {}",
            e.strategy.name(),
            e.vectors,
            if e.passed() { "pass" } else { "COUNTEREXAMPLE" }
        );
    }
    s
}

/// Runs the pipeline and renders the requested artifacts.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let text = fs::read_to_string(&config.input)
        .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", config.input.display())))?;
    let p = run_pipeline(config, &text)?;
    let stem = &p.original.name;
    let mut kinds = config.emit.clone();
    kinds.sort();
    kinds.dedup();
    let mut artifacts = Vec::new();
    if kinds.is_empty() {
        artifacts.push(Artifact { name: format!("{stem}.summary.txt"), content: summary(&p, config) });
    }
    for kind in kinds {
        let (name, content) = match kind {
            EmitKind::Transformed => (format!("{stem}.transformed.dfg"), emit(&p.fragmentation.design)),
            EmitKind::Schedule => (format!("{stem}.schedule.txt"), render_text(&p.schedule, &p.fragmentation.design)),
            EmitKind::Report => {
                let v = report_json(&p, config);
                (format!("{stem}.report.json"), serde_json::to_string_pretty(&v).unwrap() + "\n")
            }
            EmitKind::Dot => (format!("{stem}.dot"), emit_dot(&p.kernel)),
            EmitKind::Arrivals => {
                let rows = bit_arrivals(&p.kernel).rows(&p.kernel);
                (format!("{stem}.arrivals.json"), serde_json::to_string_pretty(&rows).unwrap() + "\n")
            }
        };
        artifacts.push(Artifact { name, content });
    }
    let counterexample = p.equiv.as_ref().and_then(|e| e.counterexample.as_ref()).map(|c| c.to_string());
    Ok(RunOutcome { artifacts, counterexample })
}

/// Writes artifacts to `out` or, without it, to stdout.
pub fn deliver(outcome: &RunOutcome, out: Option<&Path>) -> Result<String, CliError> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", dir.display())))?;
            for a in &outcome.artifacts {
                let path = dir.join(&a.name);
                fs::write(&path, &a.content).map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", path.display())))?;
            }
            Ok(String::new())
        }
        None if outcome.artifacts.len() == 1 => Ok(outcome.artifacts[0].content.clone()),
        None => Ok(outcome
            .artifacts
            .iter()
            .map(|a| format!("==> {} <==\n{}", a.name, a.content))
            .collect::<Vec<_>>()
            .join("\n")),
    }
}

/// Entry point shared by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = run(&config).and_then(|o| deliver(&o, config.out.as_deref()).map(|s| (o, s)));
    match result {
        Ok((outcome, stdout)) => {
            print!("{stdout}");
            if let Some(c) = &outcome.counterexample {
                eprintln!("equivalence check failed on:\n{c}");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
