//! Command-line front end for the randamp library: seeded experiment
//! orchestration with CSV/JSON report emission.
//!
//! Exit codes: 0 success, 2 module precondition violations, 64 usage
//! errors (unknown flags, malformed specs, missing required flags), 73
//! unwritable output path. Reports are deterministic: the same command
//! with the same seed produces byte-identical files.

mod parse;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use randamp::attacks::{self, DesignatedPairAttack};
use randamp::certify::{self, DeviceModel, ProtocolParams, Scenario};
use randamp::chained;
use randamp::dist::WFamily;
use randamp::ghz;
use randamp::sources::{self, SvSourceModel};
use randamp::{bounds, Error};

use parse::{fallback, parse_device, parse_grid, parse_multi, parse_rule, require, Config, DeviceSpec};
use report::{fmt_float, Table};

/// One of the three documented failure classes, carrying the message the
/// user sees on stderr.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Module(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Module(_) => 2,
            CliError::Io(_) => 73,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Module(m) | CliError::Io(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Module(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "randamp",
    version,
    about = "Randomness amplification experiments: chained correlations, bounds, certification, attacks, and multiparty parity checks"
)]
struct Cli {
    /// JSON object supplying defaults for omitted flags, keyed by flag name.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Report file; the report streams to stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report format: csv (default) or json.
    #[arg(long, global = true, value_name = "FMT")]
    format: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chained-measure values and classical limits.
    #[command(subcommand)]
    Chained(ChainedCmd),
    /// Hidden-value leakage bounds and amplification rates.
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Partially free bit streams and the extractor demonstration.
    #[command(subcommand)]
    Sources(SourcesCmd),
    /// The certification protocol and its statistics.
    #[command(subcommand)]
    Certify(CertifyCmd),
    /// The designated-pair attack and its feasibility region.
    #[command(subcommand)]
    Attacks(AttacksCmd),
    /// Multiparty parity relations and the scaling harness.
    #[command(subcommand)]
    Ghz(GhzCmd),
}

#[derive(Subcommand)]
enum ChainedCmd {
    /// Quantum chained value against its closed form per chain size.
    Value {
        /// Chain sizes: scalar, lo..hi, or comma list.
        #[arg(long = "N", value_name = "SPEC")]
        n: Option<String>,
    },
    /// Exhaustive minimum over deterministic strategies per chain size.
    ClassicalMin {
        #[arg(long = "N", value_name = "SPEC")]
        n: Option<String>,
    },
}

#[derive(Subcommand)]
enum BoundsCmd {
    /// Leakage bound on random no-signalling families.
    Check {
        /// Independent random families to generate.
        #[arg(long)]
        instances: Option<usize>,
        /// Settings per side (2 or 3).
        #[arg(long = "N", value_name = "SPEC")]
        n: Option<String>,
        /// Hidden values per family.
        #[arg(long = "w-count")]
        w_count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-form and pre-form amplification bounds on a grid.
    Amplification {
        /// Source freedom parameter: scalar or lo:hi:step grid.
        #[arg(long, value_name = "GRID")]
        epsilon: Option<String>,
        /// Chain exponents: scalar, lo..hi, or comma list.
        #[arg(long, value_name = "SPEC")]
        r: Option<String>,
    },
    /// Smallest chain exponent reaching a target bound.
    SelectR {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        target: Option<f64>,
    },
}

#[derive(Subcommand)]
enum SourcesCmd {
    /// Audited bits from one partially free stream.
    Sample {
        #[arg(long)]
        epsilon: Option<f64>,
        /// unbiased, constant:<bias>, history-parity, toward:<bits>, away:<bits>.
        #[arg(long)]
        rule: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Inner-product extraction: independent versus correlated sources.
    DemoExtractor {
        #[arg(long)]
        epsilon: Option<f64>,
        /// Bits per source block.
        #[arg(long)]
        block: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum CertifyCmd {
    /// Independent protocol runs, one row per trial.
    Run {
        /// Settings per side (a power of two).
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// honest, all-equal, attack, or custom:<family.json>.
        #[arg(long)]
        device: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        /// Round-count override; scaling claims hold at the default.
        #[arg(long = "M")]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Abort-rate estimate with a 95% Wilson interval.
    AbortRate {
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        device: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long = "M")]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Detection-scaling exponent across chain sizes.
    ExponentScan {
        /// Source freedom parameter: scalar or lo:hi:step grid.
        #[arg(long, value_name = "GRID")]
        epsilon: Option<String>,
        /// Chain sizes: scalar, lo..hi, or comma list.
        #[arg(long = "N", value_name = "SPEC")]
        n: Option<String>,
    },
}

#[derive(Subcommand)]
enum AttacksCmd {
    /// Exact and idealized observed values over a parameter grid.
    Scan {
        #[arg(long, value_name = "SPEC")]
        r: Option<String>,
        #[arg(long = "epsilon-grid", value_name = "GRID")]
        epsilon_grid: Option<String>,
    },
    /// Monte Carlo estimate of the observed value for one attack.
    Estimate {
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum GhzCmd {
    /// Parity relations per party count, with the classical maximum.
    Enumerate {
        #[arg(long = "M", value_name = "SPEC")]
        m: Option<String>,
    },
    /// Worst-case steered detection of classical strategies.
    Detect {
        #[arg(long, value_name = "GRID")]
        epsilon: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exploratory selected-bit freedom trend as parties grow.
    Conjecture {
        #[arg(long = "M", value_name = "SPEC")]
        m: Option<String>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(parse_and_dispatch(argv));
}

/// Full argv-to-exit-code path, separated from `main` for testability.
fn parse_and_dispatch(argv: Vec<String>) -> i32 {
    use clap::error::ErrorKind;
    match Cli::try_parse_from(&argv) {
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            0
        }
        Err(e) => {
            eprint!("{e}");
            64
        }
        Ok(cli) => match run(cli) {
            Ok(()) => 0,
            Err(err) => {
                eprintln!("error: {}", err.message());
                err.code()
            }
        },
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::empty(),
    };
    let out = cli
        .out
        .clone()
        .or(cfg.get_spec("out")?.map(PathBuf::from));
    let format = fallback(cli.format.clone(), cfg.get_spec("format")?, "csv".into());
    let (table, note) = match cli.command {
        Command::Chained(c) => chained_cmd(c, &cfg)?,
        Command::Bounds(c) => bounds_cmd(c, &cfg)?,
        Command::Sources(c) => sources_cmd(c, &cfg)?,
        Command::Certify(c) => certify_cmd(c, &cfg)?,
        Command::Attacks(c) => attacks_cmd(c, &cfg)?,
        Command::Ghz(c) => ghz_cmd(c, &cfg)?,
    };
    report::emit(&table, &format, out.as_deref(), note.as_deref())
}

fn signs(outputs: &[i32]) -> String {
    outputs
        .iter()
        .map(|&x| if x == 1 { '+' } else { '-' })
        .collect()
}

fn chained_cmd(cmd: ChainedCmd, cfg: &Config) -> Result<(Table, Option<String>), CliError> {
    match cmd {
        ChainedCmd::Value { n } => {
            let spec = fallback(n, cfg.get_spec("N")?, "2..8".into());
            let mut t = Table::new(&["n", "i_quantum", "closed_form", "abs_diff"]);
            for n in parse_multi(&spec)? {
                let settings = chained::ChainedSettings::new(n)?;
                let b = chained::quantum_chained_box(&settings)?;
                let value = chained::chained_value(&settings, &b)?;
                let closed = chained::quantum_closed_form(n);
                t.push(vec![
                    n.to_string(),
                    fmt_float(value),
                    fmt_float(closed),
                    fmt_float((value - closed).abs()),
                ]);
            }
            Ok((t, None))
        }
        ChainedCmd::ClassicalMin { n } => {
            let spec = fallback(n, cfg.get_spec("N")?, "2..6".into());
            let mut t = Table::new(&["n", "min_score", "witness_a", "witness_b"]);
            for n in parse_multi(&spec)? {
                let (min, witness) = chained::classical_min_chained(n)?;
                t.push(vec![
                    n.to_string(),
                    min.to_string(),
                    signs(&witness.a_outputs),
                    signs(&witness.b_outputs),
                ]);
            }
            Ok((t, None))
        }
    }
}

fn bounds_cmd(cmd: BoundsCmd, cfg: &Config) -> Result<(Table, Option<String>), CliError> {
    match cmd {
        BoundsCmd::Check {
            instances,
            n,
            w_count,
            seed,
        } => {
            let instances = fallback(instances, cfg.get_usize("instances")?, 100);
            let spec = fallback(n, cfg.get_spec("N")?, "2".into());
            let w_count = fallback(w_count, cfg.get_usize("w-count")?, 3);
            let seed = require(seed, cfg.get_u64("seed")?, "seed")?;
            let mut t =
                Table::new(&["instance", "n", "a", "b", "i_n", "q", "lhs", "rhs", "margin"]);
            for n in parse_multi(&spec)? {
                let batch = bounds::batch_random_check(n, instances, w_count, seed)?;
                for (instance, reports) in batch.iter().enumerate() {
                    for rep in reports {
                        t.push(vec![
                            instance.to_string(),
                            n.to_string(),
                            rep.a.to_string(),
                            rep.b.to_string(),
                            fmt_float(rep.i_n),
                            fmt_float(rep.q),
                            fmt_float(rep.lhs),
                            fmt_float(rep.rhs),
                            fmt_float(rep.margin),
                        ]);
                    }
                }
            }
            Ok((t, None))
        }
        BoundsCmd::Amplification { epsilon, r } => {
            let eps = parse_grid(&fallback(epsilon, cfg.get_spec("epsilon")?, "0.05".into()))?;
            let rs = parse_multi(&fallback(r, cfg.get_spec("r")?, "1..8".into()))?;
            let mut t = Table::new(&["epsilon", "r", "closed", "pre"]);
            for &e in &eps {
                for &r in &rs {
                    let b = bounds::amplification_bound(e, r as u32)?;
                    t.push(vec![
                        fmt_float(e),
                        r.to_string(),
                        fmt_float(b.closed),
                        fmt_float(b.pre),
                    ]);
                }
            }
            Ok((t, None))
        }
        BoundsCmd::SelectR { epsilon, target } => {
            let epsilon = fallback(epsilon, cfg.get_f64("epsilon")?, 0.0);
            let target = fallback(target, cfg.get_f64("target")?, 0.01);
            let r = bounds::select_r(epsilon, target)?;
            let closed = bounds::amplification_bound(epsilon, r)?.closed;
            let mut t = Table::new(&["epsilon", "target", "r", "closed"]);
            t.push(vec![
                fmt_float(epsilon),
                fmt_float(target),
                r.to_string(),
                fmt_float(closed),
            ]);
            Ok((t, None))
        }
    }
}

fn sources_cmd(cmd: SourcesCmd, cfg: &Config) -> Result<(Table, Option<String>), CliError> {
    match cmd {
        SourcesCmd::Sample {
            epsilon,
            rule,
            count,
            seed,
        } => {
            let epsilon = fallback(epsilon, cfg.get_f64("epsilon")?, 0.1);
            let rule = parse_rule(&fallback(rule, cfg.get_spec("rule")?, "unbiased".into()))?;
            let count = fallback(count, cfg.get_usize("count")?, 64);
            let seed = require(seed, cfg.get_u64("seed")?, "seed")?;
            let model = SvSourceModel::new(epsilon, rule)?;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let bits = sources::sample_bits(&model, &mut rng, count)?;
            let mut t = Table::new(&["index", "bit"]);
            for (i, bit) in bits.iter().enumerate() {
                t.push(vec![i.to_string(), bit.to_string()]);
            }
            Ok((t, None))
        }
        SourcesCmd::DemoExtractor {
            epsilon,
            block,
            trials,
            seed,
        } => {
            let epsilon = fallback(epsilon, cfg.get_f64("epsilon")?, 0.1);
            let block = fallback(block, cfg.get_usize("block")?, 64);
            let trials = fallback(trials, cfg.get_usize("trials")?, 100_000);
            let seed = require(seed, cfg.get_u64("seed")?, "seed")?;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let rep = sources::inner_product_extractor_demo(epsilon, block, trials, &mut rng)?;
            let mut t = Table::new(&["scenario", "deficit", "block_len", "trials"]);
            t.push(vec![
                "independent".into(),
                fmt_float(rep.independent_deficit),
                rep.block_len.to_string(),
                rep.trials.to_string(),
            ]);
            t.push(vec![
                "worst-case-pair".into(),
                fmt_float(rep.correlated_deficit),
                rep.block_len.to_string(),
                rep.trials.to_string(),
            ]);
            Ok((t, None))
        }
    }
}

/// Builds the device and trial scenario named by a device spec.
fn build_device(
    spec: &DeviceSpec,
    n: usize,
    epsilon: f64,
) -> Result<(DeviceModel, Scenario), CliError> {
    let unbiased = SvSourceModel::new(epsilon, sources::BiasRule::Unbiased)?;
    match spec {
        DeviceSpec::Honest => Ok((
            certify::honest_quantum_device(n)?,
            Scenario::Fixed {
                w: 0,
                source: unbiased,
            },
        )),
        DeviceSpec::AllEqual => Ok((
            certify::all_equal_device(n)?,
            Scenario::Fixed {
                w: 0,
                source: unbiased,
            },
        )),
        DeviceSpec::Attack => {
            if !n.is_power_of_two() || n < 2 {
                return Err(CliError::Module(format!(
                    "attack device needs a power-of-two chain size, got {n}"
                )));
            }
            let r = n.trailing_zeros() as usize;
            let attack = DesignatedPairAttack::build(r, epsilon)?;
            Ok((certify::attack_device(&attack)?, certify::attack_scenario(&attack)?))
        }
        DeviceSpec::Custom(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read device {}: {e}", path.display()))
            })?;
            let fam: WFamily = serde_json::from_str(&text).map_err(|e| {
                CliError::Usage(format!("malformed device {}: {e}", path.display()))
            })?;
            let device = DeviceModel::new(fam.w_values().to_vec(), fam.boxes().to_vec())?;
            let sources = vec![unbiased; device.w_values().len()];
            Ok((device, Scenario::UniformW { sources }))
        }
    }
}

fn protocol_params(n: usize, m: Option<usize>) -> Result<(ProtocolParams, Option<String>), CliError> {
    match m {
        Some(m) => {
            let note = format!(
                "warning: round count overridden to {m}; scaling claims hold at the default"
            );
            eprintln!("{note}");
            Ok((ProtocolParams::with_rounds(n, m)?, Some(note)))
        }
        None => Ok((ProtocolParams::defaults(n)?, None)),
    }
}

fn certify_cmd(cmd: CertifyCmd, cfg: &Config) -> Result<(Table, Option<String>), CliError> {
    match cmd {
        CertifyCmd::Run {
            n,
            epsilon,
            device,
            trials,
            m,
            seed,
        } => {
            let n = require(n, cfg.get_usize("N")?, "N")?;
            let epsilon = fallback(epsilon, cfg.get_f64("epsilon")?, 0.0);
            let device_name = fallback(device, cfg.get_spec("device")?, "honest".into());
            let device_spec = parse_device(&device_name)?;
            let trials = fallback(trials, cfg.get_usize("trials")?, 100);
            let seed = require(seed, cfg.get_u64("seed")?, "seed")?;
            let (params, _) = protocol_params(n, m.or(cfg.get_usize("M")?))?;
            let (device, scenario) = build_device(&device_spec, n, epsilon)?;
            let rows = certify::run_trials(&params, &device, &scenario, trials, seed)?;
            let mut t = Table::new(&[
                "trial",
                "aborted",
                "reason",
                "s_size",
                "violations",
                "final_bit",
                "w",
            ]);
            for row in rows {
                t.push(vec![
                    row.trial.to_string(),
                    row.aborted.to_string(),
                    row.reason.to_string(),
                    row.s_size.to_string(),
                    row.violations.to_string(),
                    row.final_bit.map(|b| b.to_string()).unwrap_or_default(),
                    row.w.to_string(),
                ]);
            }
            Ok((t, None))
        }
        CertifyCmd::AbortRate {
            n,
            epsilon,
            device,
            trials,
            m,
            seed,
        } => {
            let n = require(n, cfg.get_usize("N")?, "N")?;
            let epsilon = fallback(epsilon, cfg.get_f64("epsilon")?, 0.0);
            let device_name = fallback(device, cfg.get_spec("device")?, "honest".into());
            let device_spec = parse_device(&device_name)?;
            let trials = fallback(trials, cfg.get_usize("trials")?, 1000);
            let seed = require(seed, cfg.get_u64("seed")?, "seed")?;
            let (params, _) = protocol_params(n, m.or(cfg.get_usize("M")?))?;
            let (device, scenario) = build_device(&device_spec, n, epsilon)?;
            let est = certify::estimate_abort_rate(&params, &device, &scenario, trials, seed)?;
            let mut t = Table::new(&[
                "device",
                "n",
                "m",
                "trials",
                "aborts",
                "rate",
                "wilson_low",
                "wilson_high",
            ]);
            t.push(vec![
                device_name,
                n.to_string(),
                params.m().to_string(),
                est.trials.to_string(),
                est.aborts.to_string(),
                fmt_float(est.rate),
                fmt_float(est.wilson_low),
                fmt_float(est.wilson_high),
            ]);
            Ok((t, None))
        }
        CertifyCmd::ExponentScan { epsilon, n } => {
            let eps = parse_grid(&fallback(
                epsilon,
                cfg.get_spec("epsilon")?,
                "0:0.1:0.002".into(),
            ))?;
            let ns = parse_multi(&fallback(n, cfg.get_spec("N")?, "4,8,16".into()))?;
            let mut t = Table::new(&["epsilon", "n", "m", "value", "exponent", "positive"]);
            for &e in &eps {
                for row in certify::failure_exponent_scan(e, &ns)? {
                    t.push(vec![
                        fmt_float(e),
                        row.n.to_string(),
                        row.m.to_string(),
                        fmt_float(row.value),
                        fmt_float(row.exponent),
                        row.positive.to_string(),
                    ]);
                }
            }
            Ok((t, None))
        }
    }
}

fn attacks_cmd(cmd: AttacksCmd, cfg: &Config) -> Result<(Table, Option<String>), CliError> {
    match cmd {
        AttacksCmd::Scan { r, epsilon_grid } => {
            let rs = parse_multi(&fallback(r, cfg.get_spec("r")?, "1..6".into()))?;
            let eps = parse_grid(&fallback(
                epsilon_grid,
                cfg.get_spec("epsilon-grid")?,
                "0:0.25:0.005".into(),
            ))?;
            let mut t = Table::new(&["r", "epsilon", "idealized", "exact", "threshold", "feasible"]);
            for &r in &rs {
                let threshold = attacks::feasibility_threshold(r)?;
                for &e in &eps {
                    let idealized = attacks::observed_i_closed_form(r, e)?;
                    let exact = DesignatedPairAttack::build(r, e)?.observed_i_exact()?;
                    t.push(vec![
                        r.to_string(),
                        fmt_float(e),
                        fmt_float(idealized),
                        fmt_float(exact),
                        fmt_float(threshold),
                        (e < threshold).to_string(),
                    ]);
                }
            }
            Ok((t, None))
        }
        AttacksCmd::Estimate {
            r,
            epsilon,
            rounds,
            seed,
        } => {
            let r = fallback(r, cfg.get_usize("r")?, 2);
            let epsilon = fallback(epsilon, cfg.get_f64("epsilon")?, 0.1);
            let rounds = fallback(rounds, cfg.get_usize("rounds")?, 100_000);
            let seed = require(seed, cfg.get_u64("seed")?, "seed")?;
            let attack = DesignatedPairAttack::build(r, epsilon)?;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let est = attack.estimate_observed_i(rounds, &mut rng)?;
            let mut t = Table::new(&[
                "r",
                "epsilon",
                "rounds",
                "estimate",
                "sigma",
                "exact",
                "idealized",
            ]);
            t.push(vec![
                r.to_string(),
                fmt_float(epsilon),
                est.rounds.to_string(),
                fmt_float(est.value),
                fmt_float(est.sigma),
                fmt_float(attack.observed_i_exact()?),
                fmt_float(attacks::observed_i_closed_form(r, epsilon)?),
            ]);
            Ok((t, None))
        }
    }
}

fn ghz_cmd(cmd: GhzCmd, cfg: &Config) -> Result<(Table, Option<String>), CliError> {
    match cmd {
        GhzCmd::Enumerate { m } => {
            let ms = parse_multi(&fallback(m, cfg.get_spec("M")?, "3".into()))?;
            let mut t = Table::new(&["m", "index", "pattern", "parity"]);
            let mut notes = Vec::new();
            for &m in &ms {
                let rels = ghz::relations(m)?;
                for (index, rel) in rels.iter().enumerate() {
                    let pattern: String =
                        rel.pattern.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
                    t.push(vec![
                        m.to_string(),
                        index.to_string(),
                        pattern,
                        rel.parity.to_string(),
                    ]);
                }
                if m <= ghz::MAX_BOX_PARTIES {
                    let (best, _) = ghz::max_classical_satisfiable(m)?;
                    notes.push(format!(
                        "m={m}: max classical satisfiable {best} of {}",
                        rels.len()
                    ));
                }
            }
            let note = if notes.is_empty() {
                None
            } else {
                Some(notes.join("; "))
            };
            Ok((t, note))
        }
        GhzCmd::Detect {
            epsilon,
            trials,
            seed,
        } => {
            let eps = parse_grid(&fallback(epsilon, cfg.get_spec("epsilon")?, "0.4".into()))?;
            let trials = fallback(trials, cfg.get_usize("trials")?, 100_000);
            let seed = require(seed, cfg.get_u64("seed")?, "seed")?;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut t = Table::new(&[
                "epsilon",
                "bound",
                "exact_worst",
                "empirical",
                "sigma",
                "trials",
            ]);
            for &e in &eps {
                let bound = ghz::detection_probability_lower_bound(e)?;
                let (worst, witness) = ghz::worst_case_detection_exact(e)?;
                let empirical = ghz::detection_monte_carlo(&witness, e, trials, &mut rng)?;
                let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
                t.push(vec![
                    fmt_float(e),
                    fmt_float(bound),
                    fmt_float(worst),
                    fmt_float(empirical),
                    fmt_float(sigma),
                    trials.to_string(),
                ]);
            }
            Ok((t, None))
        }
        GhzCmd::Conjecture {
            m,
            epsilon,
            trials,
            seed,
        } => {
            let ms = parse_multi(&fallback(m, cfg.get_spec("M")?, "3..24".into()))?;
            let epsilon = fallback(epsilon, cfg.get_f64("epsilon")?, 0.0);
            let trials = fallback(trials, cfg.get_usize("trials")?, 10_000);
            let seed = require(seed, cfg.get_u64("seed")?, "seed")?;
            let mut t = Table::new(&[
                "m",
                "epsilon",
                "trials",
                "honest_deficit",
                "adversarial_deficit",
                "adversarial_exact",
            ]);
            for &m in &ms {
                let rep = ghz::scaling_harness(m, epsilon, trials, seed)?;
                t.push(vec![
                    rep.m.to_string(),
                    fmt_float(rep.epsilon),
                    rep.trials.to_string(),
                    fmt_float(rep.honest_deficit),
                    fmt_float(rep.adversarial_deficit),
                    fmt_float(rep.adversarial_exact),
                ]);
            }
            let note =
                Some("exploratory trend only; this harness proves nothing about all adversaries".into());
            Ok((t, note))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(args: &[&str]) -> Vec<String> {
        std::iter::once("randamp")
            .chain(args.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn unknown_flags_and_commands_exit_64() {
        assert_eq!(parse_and_dispatch(argv(&["chained", "value", "--bogus"])), 64);
        assert_eq!(parse_and_dispatch(argv(&["nonsense"])), 64);
        assert_eq!(
            parse_and_dispatch(argv(&["attacks", "scan", "--r", "1..x"])),
            64
        );
    }

    #[test]
    fn missing_seed_on_stochastic_commands_exits_64() {
        assert_eq!(parse_and_dispatch(argv(&["bounds", "check"])), 64);
        assert_eq!(
            parse_and_dispatch(argv(&["ghz", "detect", "--trials", "1000"])),
            64
        );
    }

    #[test]
    fn module_precondition_violations_exit_2() {
        // Chain sizes beyond the enumeration cap are a library error.
        assert_eq!(
            parse_and_dispatch(argv(&["chained", "classical-min", "--N", "30"])),
            2
        );
        // The amplification threshold rejects epsilon >= (3 - 2 sqrt(2))/2
        // inside select-r.
        assert_eq!(
            parse_and_dispatch(argv(&["bounds", "select-r", "--epsilon", "0.2"])),
            2
        );
    }

    #[test]
    fn unwritable_output_exits_73() {
        assert_eq!(
            parse_and_dispatch(argv(&[
                "chained",
                "value",
                "--N",
                "2",
                "--out",
                "/nonexistent-dir/report.csv",
            ])),
            73
        );
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(parse_and_dispatch(argv(&["--help"])), 0);
        assert_eq!(parse_and_dispatch(argv(&["certify", "--help"])), 0);
    }
}
