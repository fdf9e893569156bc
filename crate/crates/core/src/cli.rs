//! Command-line front end. Reports are JSON lines on stdout ending with a
//! summary object; the main artifact of a command goes to `--out` when set.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::coords::{is_prime, CoordinateSystem};
use crate::delta::{Convention, DeltaRing, Variant};
use crate::error::{Error, Result};
use crate::patch::{assemble, conjugation_check, validate_bundle, verify_uniqueness, LiftFamily};
use crate::qconn::{
    cocycle_check, quasi_nilpotent, recover, stratify, transport, validate, QConnection,
    Stratification,
};
use crate::qdiff::{parse_operator, DiffOp, Membership, NablaCache};
use crate::ring::{parse_poly, q_multi_factorial, MultiIndex};
use crate::sections::{
    canonical_section, compose_sections, conjugate, generic_section, invert, is_trivial, Section,
};
use crate::suite::run_suite;

#[derive(Parser, Debug)]
#[command(name = "qweyl", version, about = "Exact q-Weyl operator engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Args, Debug, Clone)]
pub struct Opts {
    /// An odd prime, or "global".
    #[arg(long, global = true, default_value = "3")]
    pub p: String,
    /// Truncation: work modulo t^N with t = q - 1.
    #[arg(long = "N", global = true, default_value_t = 3)]
    pub trunc: u32,
    /// Degree cap for bases and tables.
    #[arg(long = "K", global = true, default_value_t = 4)]
    pub cap: u32,
    /// Number of variables for the default lifts.
    #[arg(long, global = true, default_value_t = 1)]
    pub n: usize,
    /// JSON list of coordinate systems; defaults to [standard, shift-1].
    #[arg(long, global = true)]
    pub coords: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ConventionArg::Stratification)]
    pub convention: ConventionArg,
    /// Work with 2 inverted.
    #[arg(long = "invert-2", global = true)]
    pub invert_2: bool,
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON-lines output (the default).
    #[arg(long, global = true)]
    pub json: bool,
    /// Human-readable rendering instead of JSON lines.
    #[arg(long, global = true, conflicts_with = "json")]
    pub human: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConventionArg {
    Retraction,
    Stratification,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Retraction => Convention::Retraction,
            ConventionArg::Stratification => Convention::Stratification,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionKind {
    Canonical,
    Generic,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Normal form, ∇-expansion and membership of an operator expression.
    Normalize {
        /// e.g. "nabla*x - q*x*nabla"; read from --in when absent.
        expr: Option<String>,
    },
    /// The γ-basis of the pair of the first two coordinate systems.
    GammaBasis {
        #[arg(long)]
        modified: bool,
    },
    /// The basis dual to the ∇-powers of the first coordinate system.
    DualBasis,
    /// A section between the first two coordinate systems.
    Section {
        #[arg(long, value_enum, default_value_t = SectionKind::Canonical)]
        kind: SectionKind,
    },
    /// Inverse of the section in --in.
    Invert,
    /// Conjugates the ∇-powers by the section in --in.
    Conjugate,
    /// Stratification of the connection in --in.
    Stratify,
    /// Cocycle check of the stratification in --in.
    Cocycle,
    /// Transport of {"section", "connection"} from --in.
    Transport,
    /// Glue local canonical sections of two shift lifts.
    Patch,
    /// Run every module invariant.
    VerifySuite,
}

struct Config {
    prime: Option<u32>,
    trunc: u32,
    cap: u32,
    n: usize,
    opts: Opts,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn validate_config(opts: &Opts) -> Result<Config> {
    let prime = if opts.p == "global" {
        None
    } else {
        let p: u32 = opts
            .p
            .parse()
            .map_err(|_| invalid(format!("--p must be an odd prime or \"global\", got {}", opts.p)))?;
        if p == 2 {
            return Err(Error::PrimeTwoUnsupported);
        }
        if !is_prime(p) {
            return Err(invalid(format!("--p {p} is not prime")));
        }
        Some(p)
    };
    if !(1..=16).contains(&opts.trunc) {
        return Err(invalid("--N must lie in 1..=16"));
    }
    if opts.cap > 12 {
        return Err(invalid("--K must be at most 12"));
    }
    if !(1..=4).contains(&opts.n) {
        return Err(invalid("--n must lie in 1..=4"));
    }
    Ok(Config {
        prime,
        trunc: opts.trunc,
        cap: opts.cap,
        n: opts.n,
        opts: opts.clone(),
    })
}

impl Config {
    fn p(&self) -> Result<u32> {
        self.prime
            .ok_or_else(|| invalid("this command needs a prime --p"))
    }

    fn coords(&self) -> Result<Vec<CoordinateSystem>> {
        match &self.opts.coords {
            Some(path) => {
                let list: Vec<CoordinateSystem> = read_json(path)?;
                if list.is_empty() {
                    return Err(invalid("--coords lists no coordinate systems"));
                }
                if let Some(p) = self.prime {
                    if list.iter().any(|c| c.p != p) {
                        return Err(Error::CoordinateMismatch(
                            "--coords disagrees with --p".into(),
                        ));
                    }
                }
                Ok(list)
            }
            None => {
                let p = self.prime.unwrap_or(3);
                Ok(vec![
                    CoordinateSystem::standard(p, self.n)?,
                    CoordinateSystem::shift(p, self.n, 1)?,
                ])
            }
        }
    }

    fn pair(&self) -> Result<(CoordinateSystem, CoordinateSystem)> {
        let c = self.coords()?;
        let a = c[0].clone();
        let b = c.get(1).cloned().unwrap_or_else(|| a.clone());
        Ok((a, b))
    }

    fn input_text(&self) -> Result<String> {
        let path = self
            .opts
            .input
            .as_ref()
            .ok_or_else(|| invalid("this command needs --in"))?;
        fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
    }

    fn input<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_str(&self.input_text()?).map_err(|e| Error::Parse(e.to_string()))
    }

    fn mode(&self) -> Membership {
        match self.prime {
            Some(p) => Membership::Prime(p),
            None if self.opts.invert_2 => Membership::Global(vec![2]),
            None => Membership::Global(vec![]),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

/// Collected report lines and check tallies.
struct Report {
    command: String,
    lines: Vec<Value>,
    checks: usize,
    failed: usize,
    artifact: Option<Value>,
}

impl Report {
    fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            lines: Vec::new(),
            checks: 0,
            failed: 0,
            artifact: None,
        }
    }

    fn line(&mut self, v: Value) {
        self.lines.push(v);
    }

    fn check(&mut self, name: &str, pass: bool) {
        self.checks += 1;
        if !pass {
            self.failed += 1;
        }
        self.lines.push(json!({"check": name, "pass": pass}));
    }

    fn artifact<T: Serialize>(&mut self, v: &T) {
        let v = serde_json::to_value(v).expect("artifact serializes");
        self.lines.push(json!({"artifact": v.clone()}));
        self.artifact = Some(v);
    }

    fn summary(&self) -> Value {
        json!({"summary": {
            "command": self.command,
            "checks": self.checks,
            "failed": self.failed,
            "status": if self.failed == 0 { "pass" } else { "fail" },
        }})
    }
}

fn render_human(v: &Value) -> String {
    match v {
        Value::Object(m) => m
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k}: {s}"),
                other => format!("{k}: {other}"),
            })
            .collect::<Vec<_>>()
            .join("  "),
        other => other.to_string(),
    }
}

fn cmd_normalize(cfg: &Config, expr: &Option<String>, r: &mut Report) -> Result<()> {
    let psi = cfg.coords()?[0].clone();
    let op = match expr {
        Some(e) => parse_operator(e, &psi, cfg.trunc)?,
        None => {
            let text = cfg.input_text()?;
            match serde_json::from_str::<DiffOp>(&text) {
                Ok(d) => d,
                Err(_) => parse_operator(text.trim(), &psi, cfg.trunc)?,
            }
        }
    };
    r.line(json!({"normal_form": format!("{op:?}")}));
    let mut cache = NablaCache::new(&psi, op.trunc())?;
    let exp = cache.expand(&op)?;
    let mode = cfg.mode();
    for (idx, a) in &exp {
        r.line(json!({"nabla_power": idx, "coeff": a.to_string()}));
    }
    r.check("member", exp.values().all(|a| mode.accepts(a)));
    r.artifact(&op);
    Ok(())
}

fn cmd_gamma_basis(cfg: &Config, modified: bool, r: &mut Report) -> Result<()> {
    cfg.p()?;
    let (a, b) = cfg.pair()?;
    let ring = DeltaRing::new(&a, &b, None, cfg.opts.convention.into(), cfg.trunc)?;
    r.check("delta_oracle", ring.oracle_check().is_ok());
    let variant = if modified { Variant::Modified } else { Variant::Standard };
    let basis = ring.gamma_basis(cfg.cap, variant)?;
    r.check("basis_congruences", true);
    for be in &basis {
        r.line(json!({"I": be.index, "gamma": be.body.to_string(), "scale": be.scale.to_string()}));
    }
    Ok(())
}

fn cmd_dual_basis(cfg: &Config, r: &mut Report) -> Result<()> {
    let psi = cfg.coords()?[0].clone();
    let mut cache = NablaCache::new(&psi, cfg.trunc)?;
    let idx = MultiIndex::all_up_to(psi.n, cfg.cap);
    let mut pairing_ok = true;
    let mut integral_ok = true;
    for i in &idx {
        let g = cache.dual(i)?;
        let gi = cache.dual_integral(i)?;
        integral_ok &= gi.is_integral();
        for j in &idx {
            let v = cache.power(j).pair(&g)?;
            pairing_ok &= if i == j { v.is_one() } else { v.is_zero() };
        }
        r.line(json!({
            "I": i,
            "dual": g.to_string(),
            "q_factorial": q_multi_factorial(i, cfg.trunc).to_string(),
            "integral": gi.to_string(),
        }));
    }
    r.check("pairing_is_delta", pairing_ok);
    r.check("rescaled_integral", integral_ok);
    Ok(())
}

fn cmd_section(cfg: &Config, kind: SectionKind, r: &mut Report) -> Result<()> {
    cfg.p()?;
    let (a, b) = cfg.pair()?;
    let s = match kind {
        SectionKind::Canonical => canonical_section(&a, &b, None, cfg.trunc, cfg.cap)?,
        SectionKind::Generic => generic_section(&a, &b, None, cfg.trunc, cfg.cap)?,
    };
    r.check("invariants", s.check_invariants().is_ok());
    r.check("envelope_member", crate::sections::qcrys_member(&s, cfg.cap)?);
    r.artifact(&s);
    Ok(())
}

fn cmd_invert(cfg: &Config, r: &mut Report) -> Result<()> {
    let s: Section = cfg.input()?;
    let inv = invert(&s)?;
    r.check("left_inverse", is_trivial(&compose_sections(&inv, &s)?));
    r.check("right_inverse", is_trivial(&compose_sections(&s, &inv)?));
    r.artifact(&inv);
    Ok(())
}

fn cmd_conjugate(cfg: &Config, r: &mut Report) -> Result<()> {
    let s: Section = cfg.input()?;
    let mut cache = NablaCache::new(&s.src, s.trunc())?;
    let mode = Membership::Prime(s.tgt.p);
    let mut out = Vec::new();
    for i in MultiIndex::all_up_to(s.n(), cfg.cap.min(3)) {
        let z = conjugate(&s, &cache.power(&i))?;
        let member = crate::qdiff::a_psi_member(&z, &s.tgt, &mode)?;
        r.check(&format!("conjugate_nabla_{i}_member"), member);
        out.push(json!({"I": i, "operator": z}));
    }
    r.artifact(&out);
    Ok(())
}

fn cmd_stratify(cfg: &Config, r: &mut Report) -> Result<()> {
    let m: QConnection = cfg.input()?;
    let report = validate(&m)?;
    for v in &report.violations {
        r.line(json!({"violation": v}));
    }
    r.check("valid", report.is_valid());
    let qn = quasi_nilpotent(&m)?;
    r.check("quasi_nilpotent", qn);
    if !report.is_valid() || !qn {
        return Ok(());
    }
    let e = stratify(&m, cfg.cap)?;
    r.check("cocycle", cocycle_check(&e)?);
    r.check("roundtrip", recover(&e)? == m);
    r.artifact(&e);
    Ok(())
}

fn cmd_cocycle(cfg: &Config, r: &mut Report) -> Result<()> {
    let e: Stratification = cfg.input()?;
    r.check("cocycle", cocycle_check(&e)?);
    Ok(())
}

#[derive(serde::Deserialize)]
struct TransportInput {
    section: Section,
    connection: QConnection,
}

fn cmd_transport(cfg: &Config, r: &mut Report) -> Result<()> {
    let inp: TransportInput = cfg.input()?;
    let out = transport(&inp.section, &inp.connection)?;
    r.check("valid", validate(&out)?.is_valid());
    r.artifact(&out);
    Ok(())
}

fn cmd_patch(cfg: &Config, r: &mut Report) -> Result<()> {
    if !cfg.opts.invert_2 {
        return Err(invalid("patching needs --invert-2"));
    }
    let (a, b) = cfg.pair()?;
    let (fa, fb) = (LiftFamily::from_coords(&a)?, LiftFamily::from_coords(&b)?);
    let bundle = assemble(&fa, &fb, cfg.trunc, cfg.cap)?;
    r.check("bundle_valid", validate_bundle(&bundle)?);
    r.check("conjugation", conjugation_check(&bundle.global, &fa, &fb, cfg.trunc)?);
    for l in &bundle.locals {
        let bad = DiffOp::identity(fa.n(), cfg.trunc).add(&DiffOp::term(
            MultiIndex::unit(fa.n(), 0).add(&MultiIndex::unit(fa.n(), 0)).add(&MultiIndex::zero(fa.n())),
            parse_poly(&format!("t/{}", l.p), fa.n(), 0, cfg.trunc)?,
        ));
        let detected = !verify_uniqueness(&bundle, &bad)?;
        r.check(&format!("perturbation_detected_at_{}", l.p), detected);
    }
    r.artifact(&bundle);
    Ok(())
}

fn cmd_verify_suite(cfg: &Config, r: &mut Report) -> Result<()> {
    let p = cfg.p()?;
    for res in run_suite(p, cfg.trunc, cfg.cap) {
        r.checks += 1;
        if !res.pass {
            r.failed += 1;
        }
        r.line(serde_json::to_value(&res).expect("result serializes"));
    }
    Ok(())
}

fn dispatch(cfg: &Config, cmd: &Command, r: &mut Report) -> Result<()> {
    match cmd {
        Command::Normalize { expr } => cmd_normalize(cfg, expr, r),
        Command::GammaBasis { modified } => cmd_gamma_basis(cfg, *modified, r),
        Command::DualBasis => cmd_dual_basis(cfg, r),
        Command::Section { kind } => cmd_section(cfg, *kind, r),
        Command::Invert => cmd_invert(cfg, r),
        Command::Conjugate => cmd_conjugate(cfg, r),
        Command::Stratify => cmd_stratify(cfg, r),
        Command::Cocycle => cmd_cocycle(cfg, r),
        Command::Transport => cmd_transport(cfg, r),
        Command::Patch => cmd_patch(cfg, r),
        Command::VerifySuite => cmd_verify_suite(cfg, r),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Normalize { .. } => "normalize",
        Command::GammaBasis { .. } => "gamma-basis",
        Command::DualBasis => "dual-basis",
        Command::Section { .. } => "section",
        Command::Invert => "invert",
        Command::Conjugate => "conjugate",
        Command::Stratify => "stratify",
        Command::Cocycle => "cocycle",
        Command::Transport => "transport",
        Command::Patch => "patch",
        Command::VerifySuite => "verify-suite",
    }
}

/// Exit status for an error: 2 for bad configuration or input, 1 for a
/// failed mathematical check.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::PrimeTwoUnsupported
        | Error::InvalidInput(_)
        | Error::Parse(_)
        | Error::CoordinateMismatch(_) => 2,
        Error::NotDivisible(_)
        | Error::EpsilonCapExceeded { .. }
        | Error::AssertionFailure(_)
        | Error::AssemblyInconsistent(_) => 1,
    }
}

fn error_json(kind: &str, message: &str) -> String {
    json!({"error": kind, "message": message}).to_string()
}

/// Output of one invocation.
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI on the given arguments without touching the process
/// streams (files named by `--out` are still written).
pub fn run_capture<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Outcome {
                    code: 0,
                    stdout: e.to_string(),
                    stderr: String::new(),
                },
                _ => Outcome {
                    code: 2,
                    stdout: String::new(),
                    stderr: error_json("InvalidInput", e.to_string().trim()) + "\n",
                },
            };
        }
    };
    let name = command_name(&cli.command);
    let fail = |e: Error| Outcome {
        code: exit_code(&e),
        stdout: String::new(),
        stderr: error_json(e.kind(), &e.to_string()) + "\n",
    };
    let cfg = match validate_config(&cli.opts) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let mut report = Report::new(name);
    if let Err(e) = dispatch(&cfg, &cli.command, &mut report) {
        return fail(e);
    }
    if let (Some(path), Some(art)) = (&cfg.opts.out, &report.artifact) {
        let text = serde_json::to_string_pretty(art).expect("artifact serializes") + "\n";
        if let Err(e) = fs::write(path, text) {
            return fail(invalid(format!("cannot write {}: {e}", path.display())));
        }
    }
    let summary = report.summary();
    let mut stdout = String::new();
    for v in report.lines.iter().chain(std::iter::once(&summary)) {
        if cfg.opts.human {
            stdout.push_str(&render_human(v));
        } else {
            stdout.push_str(&v.to_string());
        }
        stdout.push('\n');
    }
    Outcome {
        code: if report.failed == 0 { 0 } else { 1 },
        stdout,
        stderr: String::new(),
    }
}

/// Runs the CLI and writes to the process streams; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let out = run_capture(args);
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    out.code
}
