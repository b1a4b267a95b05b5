//! `lumberjack`: optimize, check, measure, and sweep programs.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use lumberjack::corpus::{self, check_entry, CheckError, CorpusEntry, Expected, InputCase};
use lumberjack::gen::{gen_source, MAX_SIZE};
use lumberjack::interp::EvalCounters;
use lumberjack::parse::parse_args;
use lumberjack::pipeline::{run, Diagnostic, PipelineConfig, PipelineError, PipelineOutput};
use lumberjack::simplify::SimplifyOptions;
use lumberjack::{diff_check_with, parse, pretty, ParseError, Program, Verdict};
use serde_json::json;

#[derive(Parser)]
#[command(name = "lumberjack", version, about = "Deforestation by fusion-strategy inference")]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Subcommand)]
enum Mode {
    /// Print the optimized program.
    Optimize(Opts),
    /// Run original and optimized programs and compare their results.
    Check(Opts),
    /// Report evaluation counters and size before/after optimization.
    Metrics(Opts),
    /// Check every program of a corpus directory, plus a generated sweep.
    Corpus(Opts),
}

#[derive(Args, Clone)]
struct Opts {
    /// Program file (a directory in corpus mode).
    file: Option<PathBuf>,
    /// Write the main output here instead of stdout.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    step_limit: u64,
    /// Copies per duplicated definition (at least 1).
    #[arg(long, default_value_t = PipelineConfig::default().max_dup as u64, value_parser = clap::value_parser!(u64).range(1..))]
    max_dup: u64,
    #[arg(long)]
    no_dup: bool,
    #[arg(long)]
    no_float: bool,
    #[arg(long)]
    no_inline: bool,
    /// Use the generated program for this seed when no FILE is given; in
    /// corpus mode, the first seed of the sweep.
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus mode: number of generated programs to check.
    #[arg(long, default_value_t = 0)]
    sweep: u64,
    /// Size bound for generated programs.
    #[arg(long, default_value_t = MAX_SIZE)]
    size: usize,
    /// Arguments for `main`, e.g. "main 10 [1, 2]"; repeatable.
    #[arg(long = "input")]
    inputs: Vec<String>,
    #[arg(long, group = "dump")]
    dump_constraints: bool,
    #[arg(long, group = "dump")]
    dump_bounds: bool,
    #[arg(long, group = "dump")]
    dump_strategies: bool,
    #[arg(long, group = "dump")]
    dump_report: bool,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

impl Opts {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            max_dup: self.max_dup as usize,
            dup: !self.no_dup,
            simplify: SimplifyOptions { float: !self.no_float, inline: !self.no_inline },
            ..PipelineConfig::default()
        }
    }
}

enum Failure {
    Parse(String),
    Invariant(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure::Parse(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            // an ill-scoped or ill-typed input is the user's error
            PipelineError::Infer(e) => Failure::Parse(e.to_string()),
            e @ PipelineError::Invariant { .. } => Failure::Invariant(e.to_string()),
        }
    }
}

impl From<CheckError> for Failure {
    fn from(e: CheckError) -> Self {
        match e {
            CheckError::Parse(e) => e.into(),
            CheckError::Pipeline(e) => e.into(),
        }
    }
}

fn diag(level: &'static str, stage: &'static str, message: impl Into<String>) {
    eprintln!("{}", Diagnostic { level, stage, message: message.into() }.to_json());
}

fn report_diagnostics(out: &PipelineOutput) {
    for d in &out.diagnostics {
        eprintln!("{}", d.to_json());
    }
}

/// The program under test: its display name, source, and sidecar inputs.
fn load(opts: &Opts) -> Result<CorpusEntry, Failure> {
    match (&opts.file, opts.seed) {
        (Some(path), _) => {
            let source = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("program");
            let name = name.to_owned();
            let sidecar = path.with_extension("inputs");
            let inputs = if sidecar.exists() {
                let text = fs::read_to_string(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?;
                corpus::parse_inputs(&text, &sidecar).map_err(anyhow::Error::from)?
            } else {
                Vec::new()
            };
            Ok(CorpusEntry { name, source, expect: None, inputs })
        }
        (None, Some(seed)) => Ok(CorpusEntry {
            name: format!("seed{seed}"),
            source: gen_source(seed, opts.size),
            expect: None,
            inputs: Vec::new(),
        }),
        (None, None) => Err(anyhow!("no input program: give FILE or --seed").into()),
    }
}

/// Command-line inputs win over the sidecar; with neither, `main` runs bare.
fn input_lines(opts: &Opts, e: &CorpusEntry) -> Vec<String> {
    if !opts.inputs.is_empty() {
        opts.inputs.clone()
    } else if !e.inputs.is_empty() {
        e.inputs.iter().map(|c| c.args.clone()).collect()
    } else {
        vec!["main".into()]
    }
}

fn emit(opts: &Opts, text: &str) -> Result<(), Failure> {
    match &opts.output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn dumps(opts: &Opts, out: &PipelineOutput) -> Option<String> {
    if opts.dump_constraints {
        Some(out.dump_constraints())
    } else if opts.dump_bounds {
        Some(out.dump_bounds())
    } else if opts.dump_strategies {
        Some(out.dump_strategies())
    } else if opts.dump_report {
        Some(out.dump_report())
    } else {
        None
    }
}

fn cmd_optimize(opts: &Opts) -> Result<(), Failure> {
    let e = load(opts)?;
    let p = parse(&e.source)?;
    let out = run(&p, &opts.config())?;
    report_diagnostics(&out);
    if let Some(d) = dumps(opts, &out) {
        print!("{d}");
        if opts.output.is_none() {
            return Ok(());
        }
    }
    emit(opts, &pretty(&out.optimized))
}

fn cmd_check(opts: &Opts) -> Result<(), Failure> {
    let e = load(opts)?;
    let p = parse(&e.source)?;
    let out = run(&p, &opts.config())?;
    report_diagnostics(&out);
    let mut text = String::new();
    let mut unsound = false;
    for line in input_lines(opts, &e) {
        let args = parse_args(&line)?;
        let r = diff_check_with(&p, &out.optimized, &args, opts.step_limit);
        unsound |= !r.is_sound();
        if opts.json {
            text += &json!({"program": e.name, "input": line, "report": r}).to_string();
        } else {
            let verdict = match &r.verdict {
                Verdict::Equal => "Equal".to_string(),
                Verdict::OriginalDiverged => "OriginalDiverged".to_string(),
                Verdict::Mismatch { original, optimized } => format!("Mismatch (original {original}, optimized {optimized})"),
                Verdict::OptimizedDiverged { reason } => format!("OptimizedDiverged ({reason})"),
            };
            text += &format!("{line}: {verdict}");
        }
        text.push('\n');
    }
    emit(opts, &text)?;
    if unsound {
        return Err(Failure::Invariant(format!("{}: optimized program disagrees with the original", e.name)));
    }
    Ok(())
}

fn counters(c: &EvalCounters) -> serde_json::Value {
    json!({"steps": c.steps, "ctor_allocs": c.ctor_allocs, "closure_allocs": c.closure_allocs})
}

fn metrics(name: &str, line: &str, p: &Program, out: &PipelineOutput, step_limit: u64) -> Result<Option<serde_json::Value>, Failure> {
    let args = parse_args(line)?;
    let r = diff_check_with(p, &out.optimized, &args, step_limit);
    if r.verdict != Verdict::Equal {
        diag("warning", "metrics", format!("{name} `{line}`: no metrics, runs did not both finish equal"));
        return Ok(None);
    }
    Ok(Some(json!({
        "program": name,
        "input": line,
        "original": counters(&r.original),
        "optimized": counters(&r.optimized),
        "ast_nodes": {"before": p.size(), "after": out.optimized.size()},
        "fused_sites": out.report.fused_sites(),
    })))
}

fn cmd_metrics(opts: &Opts) -> Result<(), Failure> {
    let e = load(opts)?;
    let p = parse(&e.source)?;
    let out = run(&p, &opts.config())?;
    report_diagnostics(&out);
    let mut text = String::new();
    for line in input_lines(opts, &e) {
        if let Some(m) = metrics(&e.name, &line, &p, &out, opts.step_limit)? {
            text += &m.to_string();
            text.push('\n');
        }
    }
    emit(opts, &text)
}

fn cmd_corpus(opts: &Opts) -> Result<(), Failure> {
    let dir = opts.file.clone().unwrap_or_else(corpus::default_dir);
    let mut entries: Vec<(CorpusEntry, bool)> =
        corpus::load_dir(&dir).map_err(anyhow::Error::from)?.into_iter().map(|e| (e, false)).collect();
    let first = opts.seed.unwrap_or(0);
    for seed in first..first + opts.sweep {
        let e = CorpusEntry {
            name: format!("seed{seed}"),
            source: gen_source(seed, opts.size),
            expect: None,
            inputs: vec![InputCase { args: "main".into(), expected: Expected::Error }],
        };
        entries.push((e, true));
    }
    let cfg = opts.config();
    let mut text = String::new();
    let mut failed = 0usize;
    for (e, generated) in &entries {
        let (ok, detail) = match check_entry(e, &cfg, opts.step_limit) {
            Ok(o) => {
                report_diagnostics(&o.output);
                // generated programs declare no expected result
                let ok = o.golden_ok != Some(false)
                    && o.cases.iter().all(|c| (*generated || c.expected_ok) && c.diff.is_sound());
                let verdicts: Vec<_> = o.cases.iter().map(|c| &c.diff.verdict).collect();
                (ok, json!({"golden": o.golden_ok, "verdicts": verdicts, "fused_sites": o.output.report.fused_sites()}))
            }
            Err(err) => {
                let f = Failure::from(err);
                let msg = match &f {
                    Failure::Parse(m) | Failure::Invariant(m) => m.clone(),
                    Failure::Other(e) => e.to_string(),
                };
                diag("error", "corpus", format!("{}: {msg}", e.name));
                (false, json!({"error": msg}))
            }
        };
        failed += usize::from(!ok);
        if opts.json {
            text += &json!({"program": e.name, "pass": ok, "detail": detail}).to_string();
        } else {
            text += &format!("{} {}", if ok { "PASS" } else { "FAIL" }, e.name);
        }
        text.push('\n');
    }
    if !opts.json {
        text += &format!("{} of {} passed\n", entries.len() - failed, entries.len());
    }
    emit(opts, &text)?;
    if failed > 0 {
        return Err(Failure::Invariant(format!("{failed} corpus entries failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.mode {
        Mode::Optimize(o) => cmd_optimize(o),
        Mode::Check(o) => cmd_check(o),
        Mode::Metrics(o) => cmd_metrics(o),
        Mode::Corpus(o) => cmd_corpus(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Parse(m)) => {
            diag("error", "parse", m);
            ExitCode::from(1)
        }
        Err(Failure::Invariant(m)) => {
            diag("error", "invariant", m);
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            diag("error", "io", format!("{e:#}"));
            ExitCode::from(1)
        }
    }
}
