//! Command-line driver: loads channel specs, runs bounds, sweeps and
//! simulations, and emits CSV/JSON for figure reproduction.
//!
//! Every output file starts with a run-manifest header echoing the
//! subcommand, arguments, inputs, outputs, seed and tool version; rerunning
//! with identical arguments reproduces identical numeric content (only the
//! wall-clock line differs). Exit codes: 0 success, 2 validation error,
//! 3 size/budget error.

mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use statekey::bounds::{
    masking_capacity, optimize_lower_bound, optimize_secret_message, optimize_upper_bound,
    symmetric_capacity, OptimizerOptions,
};
use statekey::gaussian::{self, GaussianParams};
use statekey::onoff;
use statekey::protocol::{
    build_causal_codebooks, build_codebook, exact_leakage, exact_pairwise_key_mi,
    exact_source_key_stats, run_symmetric_causal_with, run_trials_with, DecoderMode, SimConfig,
};

use output::{CliError, CliResult, OutputSink, RunManifest};
use spec::{parse_range, DiscreteBoundsReport, SimSpec};

#[derive(Parser)]
#[command(name = "statekey", version, about = "Secret-key capacity bounds for wiretap channels with transmitter state information", long_about = None)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Typicality,
    MaxPosterior,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the Gaussian closed-form bounds over a (P, Q, Δ) grid (CSV).
    GaussianBounds {
        /// SNR axis, `start:stop:step` or a single value (dB unless --linear).
        #[arg(long = "snr-db", allow_hyphen_values = true)]
        snr_db: String,
        /// Interference axis (dB unless --linear).
        #[arg(long = "q-db", alias = "Q-db", allow_hyphen_values = true)]
        q_db: String,
        /// Eavesdropper degradation axis (dB unless --linear).
        #[arg(long = "delta-db", allow_hyphen_values = true)]
        delta_db: String,
        /// Interpret the axis values as linear powers instead of dB.
        #[arg(long)]
        linear: bool,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate all four bounds for a discrete channel JSON spec (JSON).
    DiscreteBounds {
        /// Channel spec JSON path.
        spec: PathBuf,
        /// Master seed for the optimizer restarts (required; no wall-clock seeding).
        #[arg(long)]
        seed: u64,
        /// Number of optimizer restarts.
        #[arg(long, default_value_t = 64)]
        restarts: usize,
        /// Also report the masking-only capacity (caller asserts the
        /// less-noisy premise).
        #[arg(long)]
        masking: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// On-off fading example: power-split trade-off and SNR sweep (CSV).
    Onoff {
        /// SNR for the trade-off curve (dB).
        #[arg(long = "snr-db", allow_negative_numbers = true)]
        snr_db: Option<f64>,
        /// Output CSV for the trade-off curve (fraction sweep).
        #[arg(long = "trade-out")]
        trade_out: Option<PathBuf>,
        /// SNR axis for the optimal-fraction sweep, `start:stop:step` (dB).
        #[arg(long = "sweep-db", allow_hyphen_values = true)]
        sweep_db: Option<String>,
        /// Output CSV for the optimal-fraction sweep.
        #[arg(long = "sweep-out")]
        sweep_out: Option<PathBuf>,
    },
    /// Run the random-binning key-agreement simulation (JSON report).
    Simulate {
        /// Simulation spec JSON path ({"channel": …, "policy": …}).
        #[arg(long)]
        spec: PathBuf,
        /// Block length.
        #[arg(long)]
        n: usize,
        /// Typicality slack ε.
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Monte Carlo trials.
        #[arg(long)]
        trials: usize,
        /// Master seed (required; no wall-clock seeding).
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "max-posterior")]
        decoder: DecoderArg,
        /// Also compute the exact enumeration statistics (desk scale).
        #[arg(long)]
        exact: bool,
        /// Run the causal multiplexed scheme for symmetric CSI instead.
        #[arg(long)]
        causal: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fold decomposed side information into a plain channel JSON.
    Fold {
        /// Decomposed channel spec JSON path.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match command {
        Command::GaussianBounds {
            snr_db,
            q_db,
            delta_db,
            linear,
            out,
        } => {
            let to_linear = |v: f64| if linear { v } else { gaussian::db_to_linear(v) };
            let ps = parse_range(&snr_db)?;
            let qs = parse_range(&q_db)?;
            let ds = parse_range(&delta_db)?;
            let mut points = Vec::with_capacity(ps.len() * qs.len() * ds.len());
            let mut axes_db = Vec::with_capacity(points.capacity());
            for &p in &ps {
                for &q in &qs {
                    for &d in &ds {
                        points.push(GaussianParams::new(to_linear(p), to_linear(q), to_linear(d)));
                        axes_db.push((p, q, d));
                    }
                }
            }
            let mut rows = gaussian::gap_sweep(&points)?;
            if !linear {
                // echo the requested grid values, not round-tripped ones
                for (row, &(p, q, d)) in rows.iter_mut().zip(&axes_db) {
                    row.p_db = p;
                    row.q_db = q;
                    row.delta_db = d;
                }
            }
            let manifest = RunManifest::new("gaussian-bounds", &argv, &[], &out, None);
            let mut sink = OutputSink::create(&out, &manifest)?;
            sink.line("P_dB,Q_dB,Delta_dB,R_lower_bits,R_upper_bits,gap_bits,R_secret_message_bits")?;
            for r in &rows {
                sink.line(&format!(
                    "{},{},{},{},{},{},{}",
                    fmt(r.p_db),
                    fmt(r.q_db),
                    fmt(r.delta_db),
                    fmt_opt(r.r_lower),
                    fmt(r.r_upper),
                    fmt_opt(r.gap),
                    fmt(r.r_secret_message),
                ))?;
            }
            sink.finish()
        }
        Command::DiscreteBounds {
            spec,
            seed,
            restarts,
            masking,
            out,
        } => {
            let channel = spec::load_channel(&spec)?;
            let opts = OptimizerOptions {
                seed,
                restarts,
                ..Default::default()
            };
            let (lower_policy, lower) = optimize_lower_bound(&channel, &opts)?;
            let upper = optimize_upper_bound(&channel, &opts)?;
            let (sm_policy, secret_message) = optimize_secret_message(&channel, &opts)?;
            let (sym_policy, symmetric) = symmetric_capacity(&channel, &opts)?;
            let masking_report = if masking {
                Some(masking_capacity(&channel, &opts)?)
            } else {
                None
            };
            let report = DiscreteBoundsReport::assemble(
                lower,
                &lower_policy,
                upper,
                secret_message,
                &sm_policy,
                symmetric,
                &sym_policy,
                masking_report,
            );
            let manifest =
                RunManifest::new("discrete-bounds", &argv, &[&spec], &out, Some(seed));
            output::write_json(&out, &manifest, &report)
        }
        Command::Onoff {
            snr_db,
            trade_out,
            sweep_db,
            sweep_out,
        } => {
            let mut did_something = false;
            if let Some(snr) = snr_db {
                let p = gaussian::db_to_linear(snr);
                let manifest = RunManifest::new("onoff", &argv, &[], &trade_out, None);
                let mut sink = OutputSink::create(&trade_out, &manifest)?;
                sink.line(
                    "fraction_P0,R_nodisc_bits,R_disc_bits,entropy_term_bits,wiretap_term_bits",
                )?;
                let quad = onoff::QuadratureSettings::default();
                let steps = 100usize;
                for k in 0..=steps {
                    let fraction = k as f64 / steps as f64;
                    let p0 = 2.0 * p * fraction;
                    let p1 = 2.0 * p - p0;
                    let r0 = onoff::onoff_rate_with(p0, p1, &quad)?;
                    let r1 = onoff::onoff_rate_discussion_with(p0, p1, &quad)?;
                    let ent = onoff::entropy_term(p0, p1, &quad)?;
                    let wiretap = (1.0 + p1).log2() / 8.0;
                    sink.line(&format!(
                        "{},{},{},{},{}",
                        fmt(fraction),
                        fmt(r0),
                        fmt(r1),
                        fmt(ent),
                        fmt(wiretap)
                    ))?;
                }
                sink.finish()?;
                did_something = true;
            }
            if let Some(range) = sweep_db {
                let snrs = parse_range(&range)?;
                let manifest = RunManifest::new("onoff", &argv, &[], &sweep_out, None);
                let mut sink = OutputSink::create(&sweep_out, &manifest)?;
                sink.line("SNR_dB,fraction_opt_nodisc,fraction_opt_disc")?;
                for &snr in &snrs {
                    let p = gaussian::db_to_linear(snr);
                    let a = onoff::optimize_power_split(p, false)?;
                    let b = onoff::optimize_power_split(p, true)?;
                    sink.line(&format!(
                        "{},{},{}",
                        fmt(snr),
                        fmt(a.fraction),
                        fmt(b.fraction)
                    ))?;
                }
                sink.finish()?;
                did_something = true;
            }
            if !did_something {
                return Err(CliError::validation(
                    "nothing to do: pass --snr-db (trade-off) and/or --sweep-db (fraction sweep)",
                ));
            }
            Ok(())
        }
        Command::Simulate {
            spec,
            n,
            epsilon,
            trials,
            seed,
            decoder,
            exact,
            causal,
            out,
        } => {
            let sim_spec: SimSpec = spec::load_json(&spec)?;
            let channel = sim_spec.channel.build()?;
            let policy = sim_spec.policy.build()?;
            let cfg = SimConfig {
                channel,
                policy,
                n,
                epsilon,
                trials,
                seed,
                decoder: match decoder {
                    DecoderArg::Typicality => DecoderMode::Typicality,
                    DecoderArg::MaxPosterior => DecoderMode::MaxPosterior,
                },
            };
            let manifest = RunManifest::new("simulate", &argv, &[&spec], &out, Some(seed));
            if causal {
                let cbs = build_causal_codebooks(&cfg)?;
                let mut report = run_symmetric_causal_with(&cfg, &cbs)?;
                let exact_extras = if exact {
                    let src = exact_source_key_stats(&cfg, &cbs)?;
                    let pairwise = exact_pairwise_key_mi(&cfg, &cbs)?;
                    Some((src, pairwise))
                } else {
                    None
                };
                if exact {
                    report.exact = None; // exact stats for the causal scheme live in extras
                }
                let payload = spec::CausalSimOutput {
                    report,
                    exact_source_key: exact_extras.as_ref().map(|(s, _)| *s),
                    exact_pairwise_key_mi_bits: exact_extras.map(|(_, m)| m),
                };
                output::write_json(&out, &manifest, &payload)
            } else {
                let cb = build_codebook(&cfg)?;
                let mut report = run_trials_with(&cfg, &cb)?;
                if exact {
                    report.exact = Some(exact_leakage(&cb, &cfg)?);
                }
                output::write_json(&out, &manifest, &report)
            }
        }
        Command::Fold { spec, out } => {
            let decomposed = spec::load_decomposed(&spec)?;
            let folded = decomposed.fold()?;
            let channel_spec = statekey::channel::ChannelSpec::from_channel(&folded);
            let manifest = RunManifest::new("fold", &argv, &[&spec], &out, None);
            output::write_json(&out, &manifest, &channel_spec)
        }
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => fmt(v),
        None => "nan".to_string(),
    }
}
