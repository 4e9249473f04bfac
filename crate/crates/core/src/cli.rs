//! Command-line interface. Every command prints one JSON report on stdout
//! and a short summary on stderr.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::chain::{from_graph, ReversibleChain, VertexSet};
use crate::eigenspace_enum::DEFAULT_BUDGET;
use crate::functionals::{conductance_profile_oracle, spectral_profile_oracle, SpectralProfileVariant};
use crate::functionals::{CONDUCTANCE_ORACLE_MAX_N, SPECTRAL_ORACLE_MAX_N};
use crate::spectral::{analytic_nullity, decompose, heat_trace, laplacian_heat_trace, SpectralBasis};
use crate::sse_solver::{analytic_sse, round_outcome, small_set_check, SseConfig};
use crate::walk_escape::{escape_report, verify_bound, DEFAULT_EXHAUSTIVE_CAP};
use crate::{io as graph_io, Error, Result};

const SPECTRUM_PREFIX: usize = 32;

#[derive(Debug, Parser)]
#[command(name = "markov-sse", version, about = "Spectral small-set expansion tools for Markov chains")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Include wall-clock timing in the report (makes output nondeterministic).
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectrum, analytic nullities and heat traces.
    Analyze(AnalyzeArgs),
    /// Search for a sparse low-conductance function, optionally rounded to a set.
    Sse(SseArgs),
    /// Probability that a continuous-time walk stays inside a set.
    Escape(EscapeArgs),
    /// Constructive spectral-profile bound and its rounded set.
    Profile(ProfileArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Graph file: edge list or JSON.
    pub path: PathBuf,
    /// Thresholds for nullity_eta(L).
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 0.5])]
    pub eta: Vec<f64>,
    /// Times for tr(H_t) and tr(L H_t).
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0, 10.0])]
    pub t: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SseArgs {
    /// Graph file: edge list or JSON.
    pub path: PathBuf,
    /// Nullity exponent; must lie in (0, 1/3].
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub alpha: f64,
    /// Multiplier in the nullity threshold, at least 1.
    #[arg(long, default_value_t = 1.0)]
    pub cparam: f64,
    /// Sparsity of the sought function, at most 1/2.
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    /// Conductance of the sought function, at most 1/4.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Round the witness to a set with a sweep cut.
    #[arg(long)]
    pub round: bool,
    /// Seed for the random net used when the lattice exceeds the budget.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum net size.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EscapeArgs {
    /// Graph file: edge list or JSON.
    pub path: PathBuf,
    /// Comma-separated state indices.
    #[arg(long, value_delimiter = ',', required_unless_present = "exhaustive")]
    pub set: Option<Vec<usize>>,
    /// Comma-separated times.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub t: Vec<f64>,
    /// Monte-Carlo walks per time (0 disables simulation).
    #[arg(long, default_value_t = 100_000)]
    pub walks: usize,
    /// Monte-Carlo seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Check the bound for every nonempty subset instead of one set.
    #[arg(long)]
    pub exhaustive: bool,
    /// Largest state count accepted by --exhaustive.
    #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ProfileArgs {
    /// Graph file: edge list or JSON.
    pub path: PathBuf,
    /// Eigenvalue index, at least 2.
    #[arg(long)]
    pub k: usize,
    /// Trade-off parameter, at least 3.
    #[arg(long = "A", default_value_t = 3.0)]
    #[serde(rename = "A")]
    pub a: f64,
    /// Also run the exact brute-force profiles (small inputs only).
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Serialize)]
pub struct InputSummary {
    pub n: usize,
    pub edges: usize,
    pub directed: bool,
    pub reversibilized: bool,
}

/// Top-level JSON document written to stdout.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub args: Value,
    pub input: InputSummary,
    pub spectrum: Vec<f64>,
    pub payload: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
    #[serde(skip)]
    pub summary: Vec<String>,
    /// Set when the report records a failed guarantee; the process exits with 3.
    #[serde(skip)]
    pub violation: Option<String>,
}

struct Loaded {
    input: InputSummary,
    chain: ReversibleChain,
    basis: SpectralBasis,
}

fn load(path: &std::path::Path) -> Result<Loaded> {
    let g = graph_io::read_graph(path)?;
    let (chain, reversibilized) = from_graph(&g)?.into_reversible()?;
    let basis = decompose(&chain)?;
    let input = InputSummary { n: g.n(), edges: g.edges().len(), directed: g.is_directed(), reversibilized };
    Ok(Loaded { input, chain, basis })
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn report(command: &'static str, args: Value, loaded: Loaded, payload: Value) -> RunReport {
    let spectrum = loaded.basis.lambdas().iter().take(SPECTRUM_PREFIX).copied().collect();
    RunReport {
        command,
        args,
        input: loaded.input,
        spectrum,
        payload,
        seed: None,
        timing_ms: None,
        summary: Vec::new(),
        violation: None,
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<RunReport> {
    let loaded = load(&args.path)?;
    let b = &loaded.basis;
    let nullities: Vec<Value> =
        args.eta.iter().map(|&eta| json!({ "eta": eta, "nullity": analytic_nullity(b, eta) })).collect();
    let mut traces = Vec::new();
    for &t in &args.t {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::BadRange(format!("t = {t} must be finite and nonnegative")));
        }
        traces.push(json!({
            "t": t,
            "heat_trace": heat_trace(b, t),
            "laplacian_heat_trace": laplacian_heat_trace(b, t),
        }));
    }
    let lambda_2 = if b.n() >= 2 { Some(b.lambda(2)) } else { None };
    let payload = json!({
        "pi": loaded.chain.pi().as_slice(),
        "lambda_2": lambda_2,
        "nullity": nullities,
        "heat_traces": traces,
    });
    let mut summary = vec![format!("n = {}, reversibilized = {}", loaded.input.n, loaded.input.reversibilized)];
    if let Some(l2) = lambda_2 {
        summary.push(format!("lambda_2 = {l2:.6e}"));
    }
    let mut r = report("analyze", to_value(args)?, loaded, payload);
    r.summary = summary;
    Ok(r)
}

pub fn cmd_sse(args: &SseArgs) -> Result<RunReport> {
    let cfg = SseConfig {
        alpha: args.alpha,
        c_param: args.cparam,
        delta: args.delta,
        eps: args.eps,
        b: None,
        budget: args.budget,
        seed: args.seed,
    };
    cfg.validate()?;
    let loaded = load(&args.path)?;
    let outcome = analytic_sse(&loaded.basis, &cfg)?;
    let mut summary = vec![format!(
        "branch = {:?}, mu[g] = {:.6e}, Phi[g] = {:.6e}, certified = {}",
        outcome.branch, outcome.witness.mu_g, outcome.witness.phi_g, outcome.certified
    )];
    let payload = if args.round {
        let sets = round_outcome(&loaded.chain, outcome)?;
        summary.push(format!(
            "cut: |T| = {}, pi(T) = {:.6e}, Phi[T] = {:.6e}",
            sets.cut.set.len(),
            sets.cut.measure,
            sets.cut.conductance
        ));
        json!({ "b": cfg.b(), "outcome": to_value(&sets.outcome)?, "r": sets.r, "cut": to_value(&sets.cut)? })
    } else {
        json!({ "b": cfg.b(), "outcome": to_value(&outcome)? })
    };
    let mut r = report("sse", to_value(args)?, loaded, payload);
    r.seed = Some(args.seed);
    r.summary = summary;
    Ok(r)
}

pub fn cmd_escape(args: &EscapeArgs) -> Result<RunReport> {
    let loaded = load(&args.path)?;
    let n = loaded.chain.n();
    let mut summary = Vec::new();
    let mut violation = None;
    let payload = if args.exhaustive {
        let rep = verify_bound(&loaded.chain, &args.t, args.cap)?;
        summary.push(format!(
            "{} checks over {} subsets, min slack {:.3e}, violations {}",
            rep.checks,
            rep.subsets,
            rep.min_slack,
            rep.violations.len()
        ));
        if !rep.holds {
            violation = Some(format!("{} escape-bound violations", rep.violations.len()));
        }
        to_value(&rep)?
    } else {
        let members = args.set.clone().unwrap_or_default();
        let set = VertexSet::new(n, members)?;
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut reports = Vec::new();
        for &t in &args.t {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::BadRange(format!("t = {t} must be finite and nonnegative")));
            }
            let rep = escape_report(&loaded.chain, &set, t, args.walks, args.seed)?;
            summary.push(format!(
                "t = {t}: exact {:.6e} >= bound {:.6e}{}",
                rep.exact,
                rep.bound,
                rep.mc_estimate.map_or(String::new(), |m| format!(", simulated {m:.4}"))
            ));
            if !rep.holds {
                violation = Some(format!("escape bound fails at t = {t}"));
            }
            reports.push(rep);
        }
        json!({ "set": set, "reports": to_value(&reports)? })
    };
    let mut r = report("escape", to_value(args)?, loaded, payload);
    r.seed = Some(args.seed);
    r.summary = summary;
    r.violation = violation;
    Ok(r)
}

pub fn cmd_profile(args: &ProfileArgs) -> Result<RunReport> {
    let loaded = load(&args.path)?;
    let check = small_set_check(&loaded.basis, args.k, args.a)?;
    let mut summary = vec![
        format!(
            "witness: mu = {:.6e} <= {:.6e}, Phi = {:.6e} <= {:.6e}",
            check.profile.witness.mu_g, check.profile.mu_bound, check.profile.witness.phi_g, check.profile.phi_bound
        ),
        format!(
            "cut: pi(T) = {:.6e} <= {:.6e}, Phi[T] = {:.6e} <= {:.6e}",
            check.cut.measure, check.measure_bound, check.cut.conductance, check.conductance_bound
        ),
    ];
    let mut payload = json!({ "check": to_value(&check)? });
    if args.oracle {
        let n = loaded.chain.n();
        if n > CONDUCTANCE_ORACLE_MAX_N.min(SPECTRAL_ORACLE_MAX_N) {
            return Err(Error::TooLarge { n, cap: CONDUCTANCE_ORACLE_MAX_N.min(SPECTRAL_ORACLE_MAX_N) });
        }
        let g = &check.profile.witness.g;
        let support = VertexSet::from_mask(&g.values().iter().map(|&v| v > 0.0).collect::<Vec<_>>());
        let support_r = loaded.chain.pi().mass(&support).min(1.0);
        let c = &loaded.chain;
        let oracles = json!({
            "conductance_at_measure_bound": to_value(&conductance_profile_oracle(c, check.measure_bound.min(1.0))?)?,
            "conductance_at_cut_measure": to_value(&conductance_profile_oracle(c, check.cut.measure.min(1.0))?)?,
            "support_profile_at_witness_support": to_value(&spectral_profile_oracle(c, support_r, SpectralProfileVariant::Support)?)?,
            "sparsity_profile_at_mu_bound": to_value(&spectral_profile_oracle(c, check.profile.mu_bound.min(1.0), SpectralProfileVariant::Sparsity)?)?,
        });
        summary.push("exact profiles included".into());
        payload["oracles"] = oracles;
    }
    let mut r = report("profile", to_value(args)?, loaded, payload);
    r.summary = summary;
    Ok(r)
}

pub fn run(cli: &Cli) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a)?,
        Command::Sse(a) => cmd_sse(a)?,
        Command::Escape(a) => cmd_escape(a)?,
        Command::Profile(a) => cmd_profile(a)?,
    };
    if cli.timing {
        report.timing_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(report)
}

/// JSON formatter that writes every float with 17 significant digits.
#[derive(Debug, Default, Clone, Copy)]
pub struct RoundTripFormatter;

impl serde_json::ser::Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` with sorted object keys and [`RoundTripFormatter`], so
/// that parsing the output and serializing it again is byte-identical.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, RoundTripFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        // Fails only if a pool already exists, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(&cli).and_then(|r| to_json(&r).map(|s| (r, s))) {
        Ok((report, text)) => {
            println!("{text}");
            for line in &report.summary {
                eprintln!("{line}");
            }
            match report.violation {
                Some(v) => {
                    eprintln!("error: guarantee violated: {v}");
                    3
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
