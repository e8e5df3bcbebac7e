//! Batch experiment driver for the Glauber-Exclusion simulation laboratory.
//!
//! Subcommands: classify, hydro, mix, dual, anticonc, regions. Output is
//! CSV for grids and series, JSON for scalar reports; every file embeds a
//! header with the config hash, master seed, and tool version. The same
//! config and seed always produce byte-identical output, regardless of the
//! worker count.

mod config;

use clap::{Args, Parser, Subcommand};
use config::{config_hash, load_model, parse_sides, parse_times};
use glaubex_core::analysis::{
    anticoncentration, estimate_mixing_time, mixing_profile, MixingParams,
};
use glaubex_core::dual::{coupling_failure_probability, estimate_survival_functions};
use glaubex_core::flip_model::Model;
use glaubex_core::graphical::{generate_marks, regions, AuxRandomness, Construction};
use glaubex_core::hydro::derived_functions;
use glaubex_core::lattice::Torus;
use glaubex_core::rng::replica_seed;
use glaubex_core::stats::mean_se;
use std::fmt::Write as _;
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "glaubex",
    version,
    about = "Simulation laboratory for the attractive Glauber-Exclusion process"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Builtin model (demasi | theta | constant) or a path to a JSON model file.
    #[arg(long, default_value = "demasi")]
    model: String,
    /// De Masi coupling constant in [0,1].
    #[arg(long)]
    gamma: Option<f64>,
    /// Asymmetric-example rate offset, > 0.
    #[arg(long)]
    theta: Option<f64>,
    /// Dimension for the constant builtin.
    #[arg(long, default_value_t = 1)]
    d: u8,
    /// Ball radius for the constant builtin.
    #[arg(long, default_value_t = 1)]
    m: usize,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Master seed; replica i uses the documented counter-based split.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the desk-scale guards on L.
    #[arg(long, default_value_t = false)]
    force_large: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Reaction polynomial, roots, and temperature regime.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Limit ODE grids: (t, rho_+, rho_-, phi, vartheta).
    Hydro {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Horizon.
        #[arg(long = "T", default_value_t = 6.0)]
        t_max: f64,
        /// Integrator step.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Output thinning: write every k-th grid node.
        #[arg(long, default_value_t = 100)]
        every: usize,
    },
    /// Mixing profile and mixing-time bracket.
    Mix {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "L", default_value_t = 64)]
        l: u32,
        /// Observation grid, comma separated.
        #[arg(long)]
        times: String,
        #[arg(long, default_value_t = 1000)]
        reps: u64,
        /// Mixing-time precision.
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        /// Skip the stationary-proxy lower estimate.
        #[arg(long, default_value_t = false)]
        no_lower: bool,
        /// Stationary-proxy samples.
        #[arg(long, default_value_t = 500)]
        n_pi: u64,
    },
    /// IBP survival functions and the coupling-success table.
    Dual {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Observation grid, comma separated.
        #[arg(long)]
        times: String,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        /// Side lengths for the coupling-failure table (comma separated;
        /// empty = skip).
        #[arg(long = "L", default_value = "")]
        l: String,
        /// Coupling horizon.
        #[arg(long = "T", default_value_t = 40.0)]
        t_max: f64,
    },
    /// IP(2) anticoncentration at an exponential time.
    Anticonc {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Side lengths, comma separated.
        #[arg(long = "L", default_value = "128,256,512")]
        l: String,
        /// Exponential rate of the observation time (defaults to twice the
        /// model's total update rate).
        #[arg(long)]
        rate: Option<f64>,
        /// Distance threshold.
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, default_value_t = 20_000)]
        reps: u64,
    },
    /// Red/blue/green region sizes over time.
    Regions {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "L", default_value_t = 64)]
        l: u32,
        /// Observation grid, comma separated.
        #[arg(long)]
        times: String,
        #[arg(long, default_value_t = 500)]
        reps: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Guard(msg)) => {
            eprintln!("guard tripped: {msg}");
            ExitCode::from(3)
        }
    }
}

enum AppError {
    Config(String),
    Guard(String),
}

impl AppError {
    fn from_msg(msg: String) -> AppError {
        if msg.contains("guard") || msg.contains("exceeded the cap") {
            AppError::Guard(msg)
        } else {
            AppError::Config(msg)
        }
    }
}

fn emit(out: &Option<String>, text: &str) -> Result<(), AppError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| AppError::Config(format!("cannot write {path}: {e}"))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn header(canonical: &str, seed: u64) -> String {
    format!(
        "# glaubex v{VERSION}\n# config_hash={:016x} seed={seed}\n# config: {canonical}\n",
        config_hash(canonical)
    )
}

fn init_workers(run: &RunArgs) -> Result<(), AppError> {
    if let Some(n) = run.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Config(e.to_string()))?;
    }
    Ok(())
}

fn get_model(args: &ModelArgs) -> Result<Model, AppError> {
    load_model(&args.model, args.gamma, args.theta, args.d, args.m).map_err(AppError::Config)
}

fn model_canonical(args: &ModelArgs) -> String {
    format!(
        "model={} gamma={:?} theta={:?} d={} m={}",
        args.model, args.gamma, args.theta, args.d, args.m
    )
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Classify { model, run } => {
            init_workers(&run)?;
            let m = get_model(&model)?;
            let canonical = format!("classify {}", model_canonical(&model));
            let roots: Vec<serde_json::Value> = m
                .regime
                .roots
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "location": r.location,
                        "tangential": r.tangential,
                    })
                })
                .collect();
            let report = serde_json::json!({
                "tool": format!("glaubex v{VERSION}"),
                "config_hash": format!("{:016x}", config_hash(&canonical)),
                "seed": run.seed,
                "regime": format!("{:?}", m.regime.regime),
                "roots": roots,
                "slope": m.regime.slope,
                "R_coeffs": m.reaction.coeffs(),
                "decomposition_summary": {
                    "q": m.dec.q(),
                    "lambda": m.dec.lambda(),
                    "rho_bar": m.dec.rho_bar(),
                    "lambda1": m.dec.rate(0),
                    "lambda2": m.dec.rate(1),
                },
            });
            emit(
                &run.out,
                &format!("{}\n", serde_json::to_string_pretty(&report).unwrap()),
            )
        }
        Command::Hydro {
            model,
            run,
            t_max,
            step,
            every,
        } => {
            init_workers(&run)?;
            let m = get_model(&model)?;
            let canonical = format!(
                "hydro {} t_max={t_max} step={step} every={every}",
                model_canonical(&model)
            );
            let d = derived_functions(&m.reaction, t_max, step)
                .map_err(|e| AppError::Config(e.to_string()))?;
            let mut text = header(&canonical, run.seed);
            text.push_str("t,rho_plus,rho_minus,phi,vartheta\n");
            for k in (0..d.phi.len()).step_by(every.max(1)) {
                writeln!(
                    text,
                    "{:.6},{:.10},{:.10},{:.10},{:.10}",
                    d.time(k),
                    d.rho_plus[k],
                    d.rho_minus[k],
                    d.phi[k],
                    d.vartheta[k]
                )
                .unwrap();
            }
            emit(&run.out, &text)
        }
        Command::Mix {
            model,
            run,
            l,
            times,
            reps,
            eps,
            no_lower,
            n_pi,
        } => {
            init_workers(&run)?;
            let m = get_model(&model)?;
            let times = parse_times(&times).map_err(AppError::Config)?;
            let torus = Torus::new(1, l).map_err(|e| AppError::Config(e.to_string()))?;
            let canonical = format!(
                "mix {} L={l} times={times:?} reps={reps} eps={eps} no_lower={no_lower} n_pi={n_pi}",
                model_canonical(&model)
            );
            let params = MixingParams {
                times,
                reps,
                compute_lower: !no_lower,
                n_pi,
                force_large: run.force_large,
                ..Default::default()
            };
            let profile = mixing_profile(&m, &torus, &params, run.seed)
                .map_err(|e| AppError::from_msg(e.to_string()))?;
            let est = estimate_mixing_time(&profile, eps);
            let mut text = header(&canonical, run.seed);
            if profile.regime_warning {
                text.push_str("# warning: model is not in the High regime\n");
            }
            text.push_str("t,d_up,d_up_lo,d_up_hi,d_low,d_low_doubled_burn,d_low_half_l1\n");
            for k in 0..profile.times.len() {
                let (dl, dl2, dl1) = if profile.d_low.is_empty() {
                    (f64::NAN, f64::NAN, f64::NAN)
                } else {
                    (
                        profile.d_low[k],
                        profile.d_low_doubled_burn[k],
                        profile.d_low_half_l1[k],
                    )
                };
                writeln!(
                    text,
                    "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    profile.times[k],
                    profile.d_up[k],
                    profile.d_up_lo[k],
                    profile.d_up_hi[k],
                    dl,
                    dl2,
                    dl1
                )
                .unwrap();
            }
            writeln!(
                text,
                "# t_mix(eps={eps}): lower_edge={:?} upper_edge={:?} upper_point={:?} bracketed={}",
                est.lower_edge, est.upper_edge, est.upper_point, est.bracketed
            )
            .unwrap();
            emit(&run.out, &text)
        }
        Command::Dual {
            model,
            run,
            times,
            reps,
            l,
            t_max,
        } => {
            init_workers(&run)?;
            let m = get_model(&model)?;
            let times = parse_times(&times).map_err(AppError::Config)?;
            let canonical = format!(
                "dual {} times={times:?} reps={reps} L={l} t_max={t_max}",
                model_canonical(&model)
            );
            let est = estimate_survival_functions(&m.dec, &times, reps, run.seed)
                .map_err(|e| AppError::from_msg(e.to_string()))?;
            let mut text = header(&canonical, run.seed);
            text.push_str("t,phi_hat,phi_se,psi_hat,psi_se,vartheta_hat,vartheta_se\n");
            for k in 0..est.times.len() {
                let (vh, vs) = est.vartheta[k].unwrap_or((f64::NAN, f64::NAN));
                writeln!(
                    text,
                    "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    est.times[k],
                    est.phi[k].0,
                    est.phi[k].1,
                    est.psi[k].0,
                    est.psi[k].1,
                    vh,
                    vs
                )
                .unwrap();
            }
            if !l.is_empty() {
                let sides = parse_sides(&l).map_err(AppError::Config)?;
                text.push_str("# coupling failure (|E| = 2, sites 0 and L/2)\n");
                text.push_str("# L,failures,undecided,reps,rate\n");
                for side in sides {
                    let torus =
                        Torus::new(1, side).map_err(|e| AppError::Config(e.to_string()))?;
                    let f = coupling_failure_probability(
                        &torus,
                        &[0, side / 2],
                        &m.dec,
                        t_max,
                        reps,
                        replica_seed(run.seed, side as u64),
                    )
                    .map_err(|e| AppError::from_msg(e.to_string()))?;
                    writeln!(
                        text,
                        "# {side},{},{},{},{:.6}",
                        f.failures,
                        f.undecided,
                        f.reps,
                        f.rate()
                    )
                    .unwrap();
                }
            }
            emit(&run.out, &text)
        }
        Command::Anticonc {
            model,
            run,
            l,
            rate,
            k,
            reps,
        } => {
            init_workers(&run)?;
            let m = get_model(&model)?;
            let sides = parse_sides(&l).map_err(AppError::Config)?;
            let theta = rate.unwrap_or(2.0 * m.dec.lambda());
            let canonical = format!(
                "anticonc {} L={sides:?} rate={theta} k={k} reps={reps}",
                model_canonical(&model)
            );
            let mut text = header(&canonical, run.seed);
            text.push_str("L,estimate,ci_lo,ci_hi\n");
            for side in sides {
                let torus = Torus::new(1, side).map_err(|e| AppError::Config(e.to_string()))?;
                let est = anticoncentration(
                    &torus,
                    (0, side / 4),
                    theta,
                    k,
                    reps,
                    replica_seed(run.seed, side as u64),
                )
                .map_err(|e| AppError::from_msg(e.to_string()))?;
                writeln!(
                    text,
                    "{side},{:.6},{:.6},{:.6}",
                    est.rate, est.ci.0, est.ci.1
                )
                .unwrap();
            }
            emit(&run.out, &text)
        }
        Command::Regions {
            model,
            run,
            l,
            times,
            reps,
        } => {
            init_workers(&run)?;
            let m = get_model(&model)?;
            let times = parse_times(&times).map_err(AppError::Config)?;
            let torus = Torus::new(1, l).map_err(|e| AppError::Config(e.to_string()))?;
            let canonical = format!(
                "regions {} L={l} times={times:?} reps={reps}",
                model_canonical(&model)
            );
            let horizon = times.last().copied().unwrap() + 1e-9;
            // Replica loop over seeds; deterministic merge by index.
            let mut reds = vec![Vec::with_capacity(reps as usize); times.len()];
            let mut blues = vec![Vec::with_capacity(reps as usize); times.len()];
            let mut greens = vec![Vec::with_capacity(reps as usize); times.len()];
            for r in 0..reps {
                let seed = replica_seed(run.seed, r);
                let ms = generate_marks(
                    &torus,
                    &m.dec,
                    Construction::Gc2,
                    horizon,
                    seed,
                    run.force_large,
                )
                .map_err(|e| AppError::from_msg(e.to_string()))?;
                let aux = AuxRandomness::new(seed);
                let snaps = regions(&ms, &aux, &m.dec, &times)
                    .map_err(|e| AppError::from_msg(e.to_string()))?;
                for (k, snap) in snaps.iter().enumerate() {
                    reds[k].push(snap.n_red as f64);
                    blues[k].push(snap.n_blue as f64);
                    greens[k].push(snap.n_green as f64);
                }
            }
            let mut text = header(&canonical, run.seed);
            text.push_str("t,red_mean,red_se,blue_mean,blue_se,green_mean,green_se\n");
            for (k, &t) in times.iter().enumerate() {
                let (rm, rs) = mean_se(&reds[k]);
                let (bm, bs) = mean_se(&blues[k]);
                let (gm, gs) = mean_se(&greens[k]);
                writeln!(
                    text,
                    "{t:.6},{rm:.4},{rs:.4},{bm:.4},{bs:.4},{gm:.4},{gs:.4}"
                )
                .unwrap();
            }
            emit(&run.out, &text)
        }
    }
}
