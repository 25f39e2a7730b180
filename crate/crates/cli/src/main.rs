use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clawsim_core::detect::{
    calibrate_constant, choose_params, claw_detect, success_profile, tiny_family, Backend,
    CostModel, DetectParams, ExactBackend, MarkRule, Restriction, DEFAULT_C, DEFAULT_P_ERR,
};
use clawsim_core::harness::{
    balanced_grid, estimate_error_rate, fit_exponent, k3_grid, run_scaling_experiment, scaling_csv,
    unbalanced_grid, ExperimentConfig, FitAxis,
};
use clawsim_core::johnson::{brute_force_spectrum, johnson_levels, JohnsonGraph, ProductChain};
use clawsim_core::search::{claw_search, k_claw_search, SearchConfig, DEFAULT_C_FINAL};
use clawsim_core::walk::DEFAULT_EDGE_CAP;
use clawsim_core::{
    deserialize_instance, make_planted_instance, serialize_instance, BackendKind, OracleMode,
    OracleSession, ProblemInstance,
};

#[derive(Parser)]
#[command(
    name = "clawsim",
    version,
    about = "Quantum-walk claw finding simulator"
)]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Standard)]
    mode: Mode,
    #[arg(long, global = true, value_enum, default_value_t = BackendArg::CostModel)]
    backend: BackendArg,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Standard,
    Comparison,
}

impl From<Mode> for OracleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Standard => OracleMode::Standard,
            Mode::Comparison => OracleMode::Comparison,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    CostModel,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Exact => BackendKind::Exact,
            BackendArg::CostModel => BackendKind::CostModel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Regime {
    Balanced,
    Unbalanced,
    K3,
}

/// Where the instance comes from: a JSON file, or a planted instance.
#[derive(Args)]
struct InstanceArgs {
    /// Instance JSON file.
    #[arg(long, conflicts_with = "sizes")]
    instance: Option<PathBuf>,
    /// Domain sizes of a planted instance, e.g. `64x256`.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long, default_value_t = 1)]
    claws: usize,
    /// Range size of a planted instance (default: 4 times the total domain size).
    #[arg(long)]
    range: Option<u64>,
}

impl InstanceArgs {
    fn load(&self, seed: u64) -> Result<ProblemInstance> {
        if let Some(path) = &self.instance {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return deserialize_instance(&text)
                .with_context(|| format!("parsing {}", path.display()));
        }
        let Some(sizes) = &self.sizes else {
            bail!("give --instance PATH or --sizes NxM");
        };
        let sizes = parse_sizes(sizes)?;
        let range = self
            .range
            .unwrap_or(4 * sizes.iter().map(|&n| n as u64).sum::<u64>());
        Ok(make_planted_instance(&sizes, self.claws, range, seed)?)
    }
}

fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    text.split('x')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("bad size `{s}` in `{text}`"))
        })
        .collect()
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted instance as JSON.
    Generate {
        #[command(flatten)]
        instance: InstanceArgs,
    },
    /// Closed-form Johnson spectrum, optionally checked by eigendecomposition.
    Spectra {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        brute: bool,
    },
    /// Exact success probability per walk length on a small instance.
    WalkProbe {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Subset sizes, e.g. `2x2` (default: chosen from the domain sizes).
        #[arg(long)]
        subsets: Option<String>,
        #[arg(long, default_value_t = DEFAULT_C)]
        c: f64,
    },
    /// Run the detector on the full domains.
    Detect {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        subsets: Option<String>,
        #[arg(long, default_value_t = DEFAULT_C)]
        c: f64,
        #[arg(long, default_value_t = DEFAULT_P_ERR)]
        p_err: f64,
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Locate a claw.
    Search {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = DEFAULT_P_ERR)]
        p_err: f64,
        #[arg(long, default_value_t = DEFAULT_C)]
        c: f64,
        #[arg(long, default_value_t = DEFAULT_C_FINAL)]
        c_final: usize,
        /// JSON-lines trace, one record per detect invocation.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Mean query counts over a size grid, with a log-log fit.
    Scaling {
        #[arg(long, value_enum, default_value_t = Regime::Balanced)]
        regime: Regime,
        /// Explicit grid, e.g. `256x256,512x512`; overrides the regime's grid.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_P_ERR)]
        p_err: f64,
        #[arg(long, default_value_t = DEFAULT_C)]
        c: f64,
        #[arg(long, default_value_t = 1)]
        c_final: usize,
    },
    /// Pick the walk-length constant on the tiny planted family.
    Calibrate {
        #[arg(long, default_value_t = 6)]
        max_side: usize,
        #[arg(long, default_value_t = 1)]
        claws: usize,
    },
    /// Monte Carlo failure rate of the search with a binomial bound.
    Errors {
        #[arg(long, default_value = "1024x1024")]
        sizes: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_P_ERR)]
        p_err: f64,
        #[arg(long, default_value_t = 1)]
        claws: usize,
        #[arg(long, default_value_t = DEFAULT_C_FINAL)]
        c_final: usize,
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}

fn params_for(instance: &ProblemInstance, subsets: Option<&str>, c: f64) -> Result<DetectParams> {
    Ok(match subsets {
        Some(s) => DetectParams::with_subset_sizes(instance.domains(), &parse_sizes(s)?, c)?,
        None => choose_params(instance.domains(), c)?,
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mode: OracleMode = cli.mode.into();
    let backend: BackendKind = cli.backend.into();
    let out = cli.out.as_deref();
    match cli.command {
        Command::Generate { instance } => {
            emit(out, &serialize_instance(&instance.load(cli.seed)?))?;
        }
        Command::Spectra { n, k, brute } => {
            let mut text = String::from("j,eigenvalue,multiplicity\n");
            for level in johnson_levels(n, k)? {
                text += &format!("{},{},{}\n", level.j, level.value, level.multiplicity);
            }
            if brute {
                let chain = ProductChain::new(vec![JohnsonGraph::new(n, k)?], 5000)?;
                let spectrum = brute_force_spectrum(&chain, 5000)?;
                eprintln!("brute-force eigenvalues: {:?}", spectrum.eigenvalues());
                eprintln!("gap: {}", spectrum.gap());
            }
            emit(out, &text)?;
        }
        Command::WalkProbe {
            instance,
            subsets,
            c,
        } => {
            let inst = instance.load(cli.seed)?;
            let params = params_for(&inst, subsets.as_deref(), c)?;
            let r = Restriction::full(inst.domains())?;
            let profile = success_profile(&inst, &r, &params, &MarkRule::Claw, DEFAULT_EDGE_CAP)?;
            let mut text = String::from("t,success_probability\n");
            for (t, p) in profile.iter().enumerate() {
                text += &format!("{},{p:.12}\n", t + 1);
            }
            eprintln!(
                "T = {}, epsilon = {:.6}, delta = {:.6}, mean success = {:.6}",
                params.t_max,
                params.epsilon,
                params.delta,
                profile.iter().sum::<f64>() / profile.len() as f64
            );
            emit(out, &text)?;
        }
        Command::Detect {
            instance,
            subsets,
            c,
            p_err,
            runs,
        } => {
            let inst = instance.load(cli.seed)?;
            let params = params_for(&inst, subsets.as_deref(), c)?;
            let r = Restriction::full(inst.domains())?;
            let engine = match backend {
                BackendKind::Exact => Backend::Exact(ExactBackend::default()),
                BackendKind::CostModel => Backend::CostModel(CostModel::new(&inst, p_err)?),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let mut session = OracleSession::new(&inst, mode);
            let mut text = String::new();
            for _ in 0..runs {
                text += &json_line(&claw_detect(&mut session, &r, &params, &engine, &mut rng)?)?;
            }
            eprintln!(
                "params: {}; formula queries {}",
                serde_json::to_string(&params)?,
                params.query_formula(mode)
            );
            emit(out, &text)?;
        }
        Command::Search {
            instance,
            p_err,
            c,
            c_final,
            trace,
        } => {
            let inst = instance.load(cli.seed)?;
            let config = SearchConfig {
                backend,
                p_err,
                edge_cap: DEFAULT_EDGE_CAP,
                c,
                c_final,
                seed: cli.seed,
            };
            let mut session = OracleSession::new(&inst, mode);
            let result = if inst.k() == 2 {
                claw_search(&mut session, &config)?
            } else {
                k_claw_search(&mut session, &config)?
            };
            if let Some(path) = trace {
                fs::write(&path, result.trace_jsonl())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let claw = clawsim_core::ClawTuple::to_signed(result.claw.as_ref(), inst.k());
            let summary = serde_json::json!({
                "claw": claw,
                "verified": result.claw.as_ref().map(|c| inst.verify(c)),
                "total_queries": result.total_queries,
                "detect_invocations": result.trace.len(),
            });
            emit(out, &(summary.to_string() + "\n"))?;
        }
        Command::Scaling {
            regime,
            grid,
            trials,
            p_err,
            c,
            c_final,
        } => {
            let (default_grid, axis) = match regime {
                Regime::Balanced => (balanced_grid(), FitAxis::SizeProduct),
                Regime::Unbalanced => (unbalanced_grid(), FitAxis::Largest),
                Regime::K3 => (k3_grid(), FitAxis::SizeProduct),
            };
            let grid = match grid {
                Some(g) => g.split(',').map(parse_sizes).collect::<Result<Vec<_>>>()?,
                None => default_grid,
            };
            let config = ExperimentConfig {
                grid,
                trials,
                seed: cli.seed,
                backend,
                mode,
                p_err,
                c,
                c_final,
                num_claws: 1,
                output: None,
            };
            let rows = run_scaling_experiment(&config)?;
            for r in &rows {
                eprintln!("{:?}: {:.1} ms", r.sizes, r.wall_time_ms);
            }
            match fit_exponent(&rows, axis, mode) {
                Ok(fit) => eprintln!("fit: {}", serde_json::to_string(&fit)?),
                Err(e) => eprintln!("fit skipped: {e}"),
            }
            emit(out, &scaling_csv(&rows))?;
        }
        Command::Calibrate { max_side, claws } => {
            let family = tiny_family(max_side, claws, cli.seed)?;
            let cal = calibrate_constant(&family, DEFAULT_EDGE_CAP)?;
            emit(out, &json_line(&cal)?)?;
        }
        Command::Errors {
            sizes,
            trials,
            p_err,
            claws,
            c_final,
            confidence,
        } => {
            let config = ExperimentConfig {
                grid: vec![parse_sizes(&sizes)?],
                trials,
                seed: cli.seed,
                backend,
                mode,
                p_err,
                c: DEFAULT_C,
                c_final,
                num_claws: claws,
                output: None,
            };
            emit(out, &json_line(&estimate_error_rate(&config, confidence)?)?)?;
        }
    }
    Ok(())
}
