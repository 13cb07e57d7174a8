//! Command-line surface. Every command resolves a `RunConfig` (file plus
//! flag overrides), runs deterministically from the master seed, and writes
//! its artifacts in a single ordered pass: JSON summaries to stdout, CSV to
//! `--out` (or stdout for the pure-CSV commands).
//!
//! Exit codes: 0 all requested checks passed, 1 a check failed or a run
//! error surfaced, 2 configuration or usage problems.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use num::{One, Signed, Zero};
use serde::Serialize;

use crate::bitspace::{BitPrefix, BitSequence};
use crate::cocycle::{self, GeodesicTrace};
use crate::config::{MeasureConfig, OutputConfig, RunConfig};
use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::{mtp, nullsets, rng, walkstats, Rational};

pub const THREADS_ENV: &str = "LEASTDEL_THREADS";

#[derive(Parser)]
#[command(
    name = "leastdel",
    version,
    about = "Least-deletion dynamics on binary sequences: exact cocycle oracles, walk statistics, tail bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact-oracle suite: pushforward identity, transport identity,
    /// cocycle chain rule, block laws
    Verify(CommonArgs),
    /// Simulate cocycle log walks for a periodic measure; report two-sided
    /// hitting fractions per threshold
    Oscillate(CommonArgs),
    /// Simulate sparse block-coarse trajectories; report envelope decay,
    /// partial-sum growth and exact tail bounds
    Vanish(CommonArgs),
    /// Emit the per-step cocycle trace of one forward geodesic as CSV
    Trace(TraceArgs),
    /// Tabulate exact block laws (and optional hitting fractions) over a
    /// range of period lengths
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (TOML); flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every random artifact is a pure function of it
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated paths / trajectories
    #[arg(long)]
    paths: Option<u64>,
    /// Walk blocks (oscillate) or trajectory blocks (vanish)
    #[arg(long)]
    blocks: Option<u64>,
    /// Threshold level; repeat the flag for several
    #[arg(long = "threshold")]
    threshold: Vec<i64>,
    /// Cylinder depth for the exact oracles
    #[arg(long)]
    depth: Option<usize>,
    /// CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Measure override: "period:J" or "sparse"
    #[arg(long)]
    measure: Option<String>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Starting prefix, e.g. 101100
    #[arg(long)]
    prefix: Option<String>,
    /// Deletion steps to trace
    #[arg(long)]
    steps: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Smallest period length
    #[arg(long, default_value_t = 3)]
    j_min: u64,
    /// Largest period length
    #[arg(long, default_value_t = 8)]
    j_max: u64,
}

impl CommonArgs {
    /// Layered resolution: defaults, then config file, then flags.
    fn resolve(&self, fallback_measure: Option<MeasureConfig>) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let mut c = RunConfig::default();
                if let Some(m) = fallback_measure {
                    c.measure = m;
                }
                c
            }
        };
        if let Some(m) = &self.measure {
            config.measure = parse_measure_flag(m)?;
        }
        if let Some(s) = self.seed {
            config.master_seed = s;
        }
        if let Some(p) = self.paths {
            config.run.paths = p;
        }
        if let Some(b) = self.blocks {
            config.run.horizon = b;
            config.run.blocks = u32::try_from(b)
                .map_err(|_| Error::Config(format!("blocks = {b} out of range")))?;
        }
        if !self.threshold.is_empty() {
            config.run.thresholds = self.threshold.clone();
        }
        if let Some(d) = self.depth {
            config.run.depth = d;
        }
        if let Some(out) = &self.out {
            config.output.csv = Some(out.to_string_lossy().into_owned());
        }
        config.validate()?;
        Ok(config)
    }
}

fn parse_measure_flag(text: &str) -> Result<MeasureConfig> {
    if text == "sparse" {
        return Ok(MeasureConfig::sparse());
    }
    if let Some(j) = text.strip_prefix("period:") {
        let j: u64 = j
            .parse()
            .map_err(|_| Error::Config(format!("bad period length in --measure {text:?}")))?;
        return Ok(MeasureConfig::period(j));
    }
    Err(Error::Config(format!(
        "--measure takes \"period:J\" or \"sparse\", got {text:?}"
    )))
}

/// Entry point for the binary.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Testable entry point; never terminates the process.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let outcome = match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Oscillate(a) => cmd_oscillate(a),
        Command::Vanish(a) => cmd_vanish(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match outcome {
        Ok(code) => code,
        Err(Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(Error::InvalidParameter(msg)) => {
            eprintln!("parameter error: {msg}");
            2
        }
        Err(Error::CapExceeded { cap }) => {
            // machine-readable diagnostic, then the human one
            println!("{{\"error\":\"cap_exceeded\",\"cap\":{cap}}}");
            eprintln!("bit-index cap {cap} exceeded; shorten the run or raise the cap");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn init_threads() {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn write_csv_artifact(path: Option<&str>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(Path::new(p), bytes)?;
            Ok(())
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn csv_target(output: &OutputConfig) -> Option<&str> {
    output.csv.as_deref()
}

#[derive(Serialize)]
struct CheckEntry {
    case: String,
    residual: String,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    master_seed: u64,
    depth: usize,
    checks: Vec<CheckEntry>,
    all_passed: bool,
}

fn verify_families() -> Vec<(&'static str, MeasureSpec)> {
    use crate::measures::Marginal;
    use crate::ratio;
    vec![
        ("period3", MeasureSpec::period_j(3).expect("j = 3")),
        ("sparse", MeasureSpec::sparse()),
        (
            "custom",
            MeasureSpec::custom(
                vec![Marginal::from_p0(ratio(2, 7)).expect("2/7")],
                vec![
                    Marginal::from_p0(ratio(3, 5)).expect("3/5"),
                    Marginal::from_p0(ratio(1, 4)).expect("1/4"),
                ],
            )
            .expect("custom family"),
        ),
    ]
}

/// Exact residual of the single-flip pushforward identity over every index
/// n < depth and every depth-d cylinder.
fn pushforward_residual(spec: &MeasureSpec, depth: usize) -> Result<Rational> {
    let mut residual = Rational::zero();
    for c in BitPrefix::enumerate(depth) {
        for n in 0..depth as u64 {
            let check = mtp::pushforward_check(spec, n, &c)?;
            residual += (check.pushed_measure - check.weight * check.base_measure).abs();
        }
    }
    Ok(residual)
}

/// Exhaustive transport check at depth 4: every flip subset of {0,..,3}
/// against every cylinder indicator.
fn mtp_exhaustive_residual(spec: &MeasureSpec) -> Result<Rational> {
    let depth = 4usize;
    let mut residual = Rational::zero();
    for mask in 0u32..(1 << depth) {
        let gamma = mtp::FlipBijection::new(
            (0..depth as u64).filter(|n| mask >> n & 1 == 1),
        );
        for c in BitPrefix::enumerate(depth) {
            let g = mtp::SimpleFunction::indicator(&c, depth)?;
            let v = mtp::verify_mtp(spec, &gamma, &g)?;
            residual += v.residual.abs();
        }
    }
    Ok(residual)
}

/// Randomized transport cases across all families, driven by the master
/// seed; returns the summed absolute residual.
fn mtp_randomized_residual(
    families: &[(&'static str, MeasureSpec)],
    master_seed: u64,
    cases: u64,
) -> Result<Rational> {
    use crate::ratio;
    let mut residual = Rational::zero();
    let mut ctr = 0u64;
    let draw = move |ctr: &mut u64| {
        *ctr += 1;
        rng::noise(rng::split(master_seed, 0x6d74_70), *ctr)
    };
    for case in 0..cases {
        let spec = &families[(case % families.len() as u64) as usize].1;
        let depth = 2 + (draw(&mut ctr) % 7) as usize;
        let n_flips = (draw(&mut ctr) % 4) as usize;
        let mut gamma = mtp::FlipBijection::new(
            (0..n_flips).map(|_| draw(&mut ctr) % depth as u64),
        );
        if draw(&mut ctr) % 2 == 0 {
            let d = 1 + (draw(&mut ctr) % depth as u64) as usize;
            let bits: Vec<u8> = (0..d).map(|_| (draw(&mut ctr) & 1) as u8).collect();
            gamma = gamma.restricted_to(BitPrefix::new(bits)?);
        }
        let values: Vec<Rational> = (0..1usize << depth)
            .map(|_| {
                ratio(
                    draw(&mut ctr) as i64 % 17 - 8,
                    1 + (draw(&mut ctr) % 9) as i64,
                )
            })
            .collect();
        let g = mtp::SimpleFunction::new(depth, values)?;
        residual += mtp::verify_mtp(spec, &gamma, &g)?.residual.abs();
    }
    Ok(residual)
}

/// Chain-rule identity w_x(f^{k+m} x) = w_x(f^k x) w_{f^k x}(f^m (f^k x))
/// across sampled points; counts failures.
fn chain_rule_failures(
    spec: &MeasureSpec,
    master_seed: u64,
    seeds: u64,
    max_k: u64,
    max_m: u64,
) -> Result<u64> {
    let arc = Arc::new(spec.clone());
    let mut failures = 0u64;
    for s in 0..seeds {
        let x = BitSequence::new(BitPrefix::empty(), Arc::clone(&arc), rng::split(master_seed, s));
        for k in 0..=max_k {
            for m in 0..=max_m {
                if !cocycle::chain_rule_check(spec, &x, k, m)? {
                    failures += 1;
                }
            }
        }
    }
    Ok(failures)
}

fn cmd_verify(args: &CommonArgs) -> Result<i32> {
    let config = args.resolve(None)?;
    let depth = config.run.depth.min(mtp::MAX_DEPTH);
    let families = verify_families();
    let mut checks = Vec::new();
    let push = |checks: &mut Vec<CheckEntry>, case: String, residual: Rational| {
        checks.push(CheckEntry {
            case,
            pass: residual.is_zero(),
            residual: residual.to_string(),
        });
    };

    for (name, spec) in &families {
        push(
            &mut checks,
            format!("pushforward[{name}]"),
            pushforward_residual(spec, depth)?,
        );
    }
    for (name, spec) in &families {
        push(
            &mut checks,
            format!("transport_exhaustive_depth4[{name}]"),
            mtp_exhaustive_residual(spec)?,
        );
    }
    push(
        &mut checks,
        "transport_randomized[500]".into(),
        mtp_randomized_residual(&families, config.master_seed, 500)?,
    );
    for (name, spec) in &families {
        let failures = chain_rule_failures(spec, config.master_seed, 10, 6, 6)?;
        checks.push(CheckEntry {
            case: format!("chain_rule[{name}]"),
            residual: failures.to_string(),
            pass: failures == 0,
        });
    }
    for j in 3..=8u32 {
        let spec = MeasureSpec::period_j(j)?;
        let dist = walkstats::exact_block_distribution(&spec)?;
        let total = dist
            .probs
            .iter()
            .fold(Rational::zero(), |acc, p| acc + p);
        let residual = dist.mean.abs() + (total - Rational::one()).abs();
        push(&mut checks, format!("block_law_zero_mean[j={j}]"), residual);
    }

    let all_passed = checks.iter().all(|c| c.pass);
    let report = VerifyReport {
        master_seed: config.master_seed,
        depth,
        checks,
        all_passed,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(path) = &config.output.json {
        fs::write(path, json.as_bytes())?;
    }
    for c in &report.checks {
        if !c.pass {
            eprintln!("FAIL {} residual {}", c.case, c.residual);
        }
    }
    Ok(if all_passed { 0 } else { 1 })
}

#[derive(Serialize)]
struct OscillateOutput {
    /// Exact block-increment mean from full enumeration; "0" is the
    /// zero-mean certificate.
    block_mean: String,
    block_variance: String,
    report: walkstats::OscillationReport,
}

fn cmd_oscillate(args: &CommonArgs) -> Result<i32> {
    let config = args.resolve(None)?;
    let spec = config.measure.build()?;
    if spec.period().is_some_and(|j| j > 20) {
        return Err(Error::Config(
            "period too long for the exact block law (max 20)".into(),
        ));
    }
    let dist = walkstats::exact_block_distribution(&spec)
        .map_err(|e| Error::Config(format!("oscillate needs a periodic measure: {e}")))?;
    let (report, paths) = walkstats::oscillation_report(
        &spec,
        config.master_seed,
        config.run.paths,
        config.run.horizon,
        &config.run.thresholds,
    )?;
    let out = OscillateOutput {
        block_mean: dist.mean.to_string(),
        block_variance: dist.variance().to_string(),
        report,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("summary serializes"));
    if let Some(path) = csv_target(&config.output) {
        let mut bytes = Vec::new();
        walkstats::write_paths_csv(&mut bytes, &config.run.thresholds, &paths)?;
        write_csv_artifact(Some(path), &bytes)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct TailRow {
    k: u32,
    interior_length: String,
    threshold: String,
    exact_tail: Option<String>,
    log2_upper: f64,
    le_two_pow_neg_k: bool,
}

#[derive(Serialize)]
struct VanishOutput {
    /// Exact binomial tails for the small blocks, then certified exponent
    /// bounds.
    tail_table: Vec<TailRow>,
    /// Certified upper bound on the partial sum of block-tail measures.
    tail_sum_upper: String,
    /// Certified upper bound on the sum of special-index zero-marginals.
    special_zero_sum: String,
    report: nullsets::VanishingReport,
}

fn cmd_vanish(args: &CommonArgs) -> Result<i32> {
    let config = args.resolve(Some(MeasureConfig::sparse()))?;
    let spec = config.measure.build()?;
    if spec != MeasureSpec::sparse() {
        return Err(Error::Config(format!(
            "vanish needs the sparse measure, config gives {:?}",
            spec.variant_name()
        )));
    }
    let blocks = config.run.blocks;
    let conv = nullsets::BlockConvention::Open;
    let mut tail_table = Vec::new();
    for k in 1..=blocks.max(6) {
        let b = nullsets::tail_bound(k, conv)?;
        tail_table.push(TailRow {
            k,
            interior_length: b.interior_length.to_string(),
            threshold: b.threshold.to_string(),
            exact_tail: b.exact_tail.as_ref().map(Rational::to_string),
            log2_upper: b.log2_upper,
            le_two_pow_neg_k: nullsets::tail_le_2_pow_neg_k(k, conv)?,
        });
    }
    let (report, _) = nullsets::vanishing_report(
        config.master_seed,
        config.run.paths,
        blocks,
        config.run.envelope_log2,
        config.run.partial_sum_log2,
    )?;
    let claim_ok = report.claim_holds_everywhere;
    let out = VanishOutput {
        tail_table,
        tail_sum_upper: nullsets::tail_summability_report(blocks.max(6), conv)?.to_string(),
        special_zero_sum: nullsets::special_zero_certified_sum().to_string(),
        report,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("summary serializes"));
    if let Some(path) = csv_target(&config.output) {
        let mut bytes = Vec::new();
        nullsets::write_trajectories_csv(
            &mut bytes,
            config.master_seed,
            config.run.paths,
            blocks,
        )?;
        write_csv_artifact(Some(path), &bytes)?;
    }
    if !claim_ok {
        eprintln!("FAIL block-sum claim: some block exceeded its threshold with sum below 1");
    }
    Ok(if claim_ok { 0 } else { 1 })
}

fn cmd_trace(args: &TraceArgs) -> Result<i32> {
    let config = args.common.resolve(None)?;
    let spec = Arc::new(config.measure.build()?);
    let prefix_text = args
        .prefix
        .clone()
        .unwrap_or_else(|| config.run.trace_prefix.clone());
    let prefix = BitPrefix::from_str(&prefix_text)?;
    let steps = args.steps.unwrap_or(config.run.trace_steps);
    let x = BitSequence::new(prefix, Arc::clone(&spec), config.master_seed);
    let trace = GeodesicTrace::compute(&spec, &x, steps)?;
    let mut bytes = Vec::new();
    trace.write_csv(&mut bytes)?;
    write_csv_artifact(csv_target(&config.output), &bytes)?;
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let mut config = args.common.resolve(None)?;
    config.run.sweep_j_min = args.j_min;
    config.run.sweep_j_max = args.j_max;
    config.validate()?;
    let simulate = args.common.paths.map(|p| {
        let blocks = args.common.blocks.unwrap_or(10_000);
        (p, blocks)
    });

    let mut csv = String::new();
    csv.push_str("j,mean,variance,support,probs");
    if simulate.is_some() {
        for t in &config.run.thresholds {
            csv.push_str(&format!(",both_sided_at_{t}"));
        }
    }
    csv.push('\n');
    for j in config.run.sweep_j_min..=config.run.sweep_j_max {
        let j = u32::try_from(j).map_err(|_| Error::Config("period too large".into()))?;
        let spec = MeasureSpec::period_j(j)?;
        let dist = walkstats::exact_block_distribution(&spec)?;
        let support: Vec<String> = dist.support.iter().map(i64::to_string).collect();
        let probs: Vec<String> = dist.probs.iter().map(Rational::to_string).collect();
        csv.push_str(&format!(
            "{j},{},{},{},{}",
            dist.mean,
            dist.variance(),
            support.join(" "),
            probs.join(" ")
        ));
        if let Some((paths, blocks)) = simulate {
            let (report, _) = walkstats::oscillation_report(
                &spec,
                config.master_seed,
                paths,
                blocks,
                &config.run.thresholds,
            )?;
            for t in &report.thresholds {
                csv.push_str(&format!(",{}", t.both_sided_fraction));
            }
        }
        csv.push('\n');
    }
    write_csv_artifact(csv_target(&config.output), csv.as_bytes())?;
    Ok(0)
}
