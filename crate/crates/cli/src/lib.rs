//! Command-line front end. Every subcommand writes to caller-supplied
//! streams and returns a process exit code.
//!
//! Exit codes: `0` success, `1` negative result (no exact certificate,
//! verification mismatch, solver did not reach epsilon), `2` invalid input
//! or flags, `3` failure inside a numerical or exact stage.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gramsos::bench::{run_experiment, ExperimentSpec, DESK_MAX_N};
use gramsos::exact::{verify_certificate, CertificateFile};
use gramsos::grammap::ConstraintFile;
use gramsos::pipeline::{certify_polynomial, PipelineConfig, PipelineOutcome, Stage};
use gramsos::polyalg::{fmt_rational, parse_polynomial, Polynomial};
use gramsos::solver::{solve, write_history_csv, BbRule, EigenMode, MuNorm, SolveResult, SolverConfig, Variant};
use gramsos::{BasisOption, ConstraintSystem};
use num_bigint::BigInt;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "gramsos", version, about = "Low-rank Gram matrices and exact sum-of-squares certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Certify a polynomial as a sum of squares.
    Sos(SosArgs),
    /// Run the solver on a constraint-system file.
    Solve(SolveArgs),
    /// Run a benchmark experiment.
    Bench(BenchArgs),
    /// Check a certificate file against a polynomial.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BasisKind {
    Full,
    Homogeneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BbArg {
    Bb1,
    Bb2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EigenArg {
    Full,
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Spectral,
    Frobenius,
}

#[derive(Args, Debug, Clone)]
pub struct SolverFlags {
    #[arg(long, default_value = "afpc-bb")]
    pub variant: Variant,
    /// Relative-error tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long = "mu-bar")]
    pub mu_bar: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Fixed step for mfpc.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Initial step for the BB variants.
    #[arg(long)]
    pub tau0: Option<f64>,
    #[arg(long = "tau-min")]
    pub tau_min: Option<f64>,
    #[arg(long = "tau-max")]
    pub tau_max: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub xtol: Option<f64>,
    #[arg(long = "stage-tol")]
    pub stage_tol: Option<f64>,
    /// Relative eigenvalue cutoff of the rank tracker.
    #[arg(long = "eps-rank")]
    pub eps_rank: Option<f64>,
    /// Norm of A*(b) used for the default mu schedule.
    #[arg(long = "mu-norm", value_enum)]
    pub mu_norm: Option<NormArg>,
    #[arg(long = "bb-rule", value_enum)]
    pub bb_rule: Option<BbArg>,
    #[arg(long, value_enum)]
    pub eigen: Option<EigenArg>,
    /// Single stage at mu-bar.
    #[arg(long = "no-continuation")]
    pub no_continuation: bool,
}

impl SolverFlags {
    pub fn config(&self) -> anyhow::Result<SolverConfig> {
        let mut c = SolverConfig::with_variant(self.variant);
        c.epsilon = self.eps.unwrap_or(c.epsilon);
        c.mu_1 = self.mu1;
        c.mu_bar = self.mu_bar;
        c.eta = self.eta.unwrap_or(c.eta);
        c.tau_fixed = self.tau;
        c.tau_0 = self.tau0;
        c.tau_min = self.tau_min;
        c.tau_max = self.tau_max;
        c.max_iter = self.max_iter.unwrap_or(c.max_iter);
        c.xtol = self.xtol.unwrap_or(c.xtol);
        c.stage_tol = self.stage_tol.unwrap_or(c.stage_tol);
        c.eps_rank = self.eps_rank.unwrap_or(c.eps_rank);
        c.continuation = !self.no_continuation;
        if let Some(m) = self.mu_norm {
            c.mu_norm = match m {
                NormArg::Spectral => MuNorm::Spectral,
                NormArg::Frobenius => MuNorm::Frobenius,
            };
        }
        if let Some(b) = self.bb_rule {
            c.bb_rule = match b {
                BbArg::Bb1 => BbRule::Bb1,
                BbArg::Bb2 => BbRule::Bb2,
            };
        }
        if let Some(e) = self.eigen {
            c.eigen_mode = match e {
                EigenArg::Full => EigenMode::Full,
                EigenArg::Partial => EigenMode::Partial,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
pub struct SosArgs {
    /// Polynomial such as "x1^2 + 2*x1 + 1".
    #[arg(required_unless_present = "input")]
    pub polynomial: Option<String>,
    /// Read the polynomial from a file instead.
    #[arg(long, conflicts_with = "polynomial")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, value_enum, default_value = "full")]
    pub basis: BasisKind,
    /// Factor rank; chosen from the spectrum when omitted.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Initial denominator bound for rounding (escalates up to 2^128).
    #[arg(long = "denom-bound")]
    pub denom_bound: Option<String>,
    /// Succeed when the solver meets eps even without an exact certificate.
    #[arg(long = "approx-ok")]
    pub approx_ok: bool,
    /// Certificate output file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Constraint-system JSON file.
    pub file: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Result output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Experiment spec JSON.
    #[arg(required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    /// table1-desk, table2-desk or table5-desk.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Run only this instance seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write <out>.csv and <out>.json; print CSV to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub polynomial: String,
    pub certificate: PathBuf,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let res = match &cli.command {
        Command::Sos(a) => cmd_sos(a, out, err),
        Command::Solve(a) => cmd_solve(a, out),
        Command::Bench(a) => cmd_bench(a, out, err),
        Command::Verify(a) => cmd_verify(a, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            e.downcast_ref::<Failure>().map_or(EXIT_INPUT, |f| f.code)
        }
    }
}

/// Error carrying a specific exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    msg: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for Failure {}

fn stage_failure(stage: Stage, msg: impl std::fmt::Display) -> anyhow::Error {
    let code = match stage {
        Stage::Basis | Stage::Constraints => EXIT_INPUT,
        _ => EXIT_STAGE,
    };
    anyhow!(Failure { code, msg: format!("{stage} stage: {msg}") })
}

fn read_polynomial(inline: Option<&str>, path: Option<&Path>) -> anyhow::Result<Polynomial> {
    let text = match (inline, path) {
        (Some(t), _) => t.to_string(),
        (None, Some(p)) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        (None, None) => return Err(anyhow!("no polynomial given")),
    };
    parse_polynomial(text.trim()).map_err(|e| anyhow!("parse stage: {e}"))
}

fn parse_bound(text: &str) -> anyhow::Result<BigInt> {
    let t = text.trim();
    let v = if let Some(exp) = t.strip_prefix("2^") {
        let e: u32 = exp.parse().with_context(|| format!("bad exponent in `{t}`"))?;
        BigInt::from(1) << e
    } else {
        t.parse::<BigInt>().with_context(|| format!("bad denominator bound `{t}`"))?
    };
    if v < BigInt::from(1) {
        return Err(anyhow!("denominator bound must be at least 1"));
    }
    Ok(v)
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => out.write_all(text.as_bytes()).context("writing output"),
    }
}

fn sos_summary(o: &PipelineOutcome) -> Vec<String> {
    let mut lines = vec![format!("basis: {} monomials, {} constraints", o.basis.len(), o.p)];
    if let Some(s) = &o.solve {
        lines.push(format!("solve: {} iterations, rel_err {:.3e}, rank {}", s.iterations, s.rel_err, s.rank));
    }
    if let Some(r) = &o.refine {
        lines.push(format!("refine: rank {}, theta {:.3e}, {} Gauss-Newton steps", r.factors.rank(), r.theta, r.gn_iterations));
    }
    for a in &o.attempts {
        lines.push(format!("  attempt rank {}: {}", a.rank, a.outcome));
    }
    match &o.certificate {
        Some(c) if c.exact => {
            let bound = o.denom_bound.as_ref().map_or(String::from("-"), |b| b.to_string());
            lines.push(format!("certificate: exact, {} squares, denominator bound {bound}", c.weights.len()));
            for (d, q) in c.weights.iter().zip(&c.squares) {
                lines.push(format!("  {} * ({})^2", fmt_rational(d), q));
            }
        }
        Some(c) => {
            let why = c.failure.as_ref().map_or(String::from("unknown"), |f| f.to_string());
            lines.push(format!("certificate: not exact ({why})"));
        }
        None => lines.push("certificate: none".into()),
    }
    lines
}

pub fn cmd_sos(a: &SosArgs, out: &mut dyn Write, _err: &mut dyn Write) -> anyhow::Result<i32> {
    let f = read_polynomial(a.polynomial.as_deref(), a.input.as_deref())?;
    let mut cfg = PipelineConfig { solver: a.solver.config()?, rank: a.rank, ..Default::default() };
    cfg.basis = match a.basis {
        BasisKind::Full => BasisOption::Full,
        BasisKind::Homogeneous => BasisOption::Homogeneous,
    };
    if let Some(b) = &a.denom_bound {
        cfg.denom_bound = parse_bound(b)?;
        if cfg.denom_max < cfg.denom_bound {
            cfg.denom_max = cfg.denom_bound.clone();
        }
    }
    cfg.validate()?;
    let outcome = certify_polynomial(&f, &cfg).map_err(|e| stage_failure(e.stage, &e.source))?;

    if let (Some(path), Some(cert)) = (&a.out, &outcome.certificate) {
        let text = serde_json::to_string_pretty(&cert.to_file())? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    match a.format {
        Format::Json => {
            let s = outcome.solve.as_ref();
            let doc = serde_json::json!({
                "exact": outcome.is_exact(),
                "basis_size": outcome.basis.len(),
                "constraints": outcome.p,
                "iterations": s.map(|s| s.iterations),
                "rel_err": s.map(|s| s.rel_err),
                "solver_rank": s.map(|s| s.rank),
                "theta": outcome.refine.as_ref().map(|r| r.theta),
                "rank": outcome.rank,
                "squares": outcome.certificate.as_ref().filter(|c| c.exact).map(|c| c.weights.len()),
                "certificate": outcome.certificate.as_ref().map(|c| c.to_file()),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        _ => {
            for l in sos_summary(&outcome) {
                writeln!(out, "{l}")?;
            }
        }
    }
    if outcome.is_exact() {
        return Ok(EXIT_OK);
    }
    let approx = outcome.solve.as_ref().is_some_and(|s| s.rel_err <= cfg.solver.epsilon);
    Ok(if a.approx_ok && approx { EXIT_OK } else { EXIT_NEGATIVE })
}

fn solve_json(res: &SolveResult) -> serde_json::Value {
    serde_json::json!({
        "n": res.w.n(),
        "rel_err": res.rel_err,
        "iterations": res.iterations,
        "rank": res.rank,
        "converged": res.converged,
        "fixed_point_residual": res.fixed_point_residual,
        "mu_final": res.mu_final,
        "tau_final": res.tau_final,
        "eigenvalues": res.eigenvalues,
        "w": res.w.to_rows(),
        "history": res.history,
    })
}

pub fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let cfg = a.solver.config()?;
    let text = fs::read_to_string(&a.file).with_context(|| format!("reading {}", a.file.display()))?;
    let file: ConstraintFile = serde_json::from_str(&text).with_context(|| format!("malformed constraint file {}", a.file.display()))?;
    let cs = ConstraintSystem::from_json(&file).with_context(|| format!("invalid constraint system {}", a.file.display()))?;
    let res = solve(&cs, &cfg).map_err(|e| stage_failure(Stage::Solve, e))?;
    let body = match a.format {
        Format::Json => serde_json::to_string_pretty(&solve_json(&res))? + "\n",
        Format::Csv => {
            let mut buf = Vec::new();
            write_history_csv(&mut buf, &res.history)?;
            String::from_utf8(buf)?
        }
        Format::Text => format!(
            "n {}\niterations {}\nrel_err {:.6e}\nrank {}\nconverged {}\nfixed_point_residual {:.6e}\n",
            res.w.n(),
            res.iterations,
            res.rel_err,
            res.rank,
            res.converged,
            res.fixed_point_residual
        ),
    };
    write_output(a.out.as_deref(), &body, out)?;
    Ok(if res.converged { EXIT_OK } else { EXIT_NEGATIVE })
}

/// Worker count: `--threads`, then `GRAMSOS_THREADS`, then all cores.
pub fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("GRAMSOS_THREADS").ok().and_then(|v| v.parse().ok()))
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<i32> {
    let mut spec = match (&a.spec, &a.preset) {
        (_, Some(name)) => ExperimentSpec::preset(name)?,
        (Some(path), None) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentSpec>(&text).with_context(|| format!("invalid experiment spec {}", path.display()))?
        }
        (None, None) => return Err(anyhow!("give a spec file or --preset")),
    };
    if let Some(s) = a.seed {
        spec.seeds = vec![s];
    }
    if spec.allow_large && spec.cases.iter().any(|c| c.n > DESK_MAX_N) {
        writeln!(err, "warning: sizes above {DESK_MAX_N} may take a long time")?;
    }
    let report = run_experiment(&spec, thread_count(a.threads)).map_err(|e| anyhow!(Failure { code: EXIT_INPUT, msg: e.to_string() }))?;
    for r in report.records.iter().filter_map(|r| r.error.as_ref().map(|e| (r, e))) {
        writeln!(err, "run {} n={} r={} seed={} failed: {}", r.0.variant, r.0.n, r.0.r, r.0.seed, r.1)?;
    }
    match &a.out {
        Some(prefix) => {
            let csv = prefix.with_extension("csv");
            let json = prefix.with_extension("json");
            fs::write(&csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
            fs::write(&json, report.to_json() + "\n").with_context(|| format!("writing {}", json.display()))?;
        }
        None => match a.format {
            Format::Json => writeln!(out, "{}", report.to_json())?,
            _ => write!(out, "{}", report.to_csv())?,
        },
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let f = read_polynomial(Some(&a.polynomial), None)?;
    let text = fs::read_to_string(&a.certificate).with_context(|| format!("reading {}", a.certificate.display()))?;
    let file: CertificateFile = serde_json::from_str(&text).with_context(|| format!("malformed certificate {}", a.certificate.display()))?;
    let report = verify_certificate(&f, &file)?;
    if report.exact {
        writeln!(out, "verified: exact")?;
        Ok(EXIT_OK)
    } else {
        for p in &report.problems {
            writeln!(out, "{p}")?;
        }
        Ok(EXIT_NEGATIVE)
    }
}
