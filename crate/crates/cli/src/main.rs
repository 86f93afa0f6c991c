//! `vqos`: run VQOS experiments and write CSV tables.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vqos::estimators::{circuit_count, estimate_g, GSpec, Method, ShotPlan};
use vqos::experiment::{
    evolution_records, run_layer_sweep, run_required_layers, write_records, write_required,
    Backend, ExperimentConfig, LayerSpec,
};
use vqos::{Error, ParameterVector, PauliString};

#[derive(Parser)]
#[command(
    name = "vqos",
    version,
    about = "Variational compilation of e^{-iHt} into Pauli-rotation circuits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one ansatz and tabulate infidelity against exact and Trotter evolution.
    Evolve {
        #[command(flatten)]
        common: Common,
        /// Also write the parameter trajectory here.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Also write per-step solver diagnostics here.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Infidelity at fixed times for several layer counts.
    LayerSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated evaluation times on the dt grid.
        #[arg(long, value_delimiter = ',')]
        t_targets: Option<Vec<f64>>,
    },
    /// Smallest layer counts that reach a target infidelity.
    RequiredLayers {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        t_targets: Option<Vec<f64>>,
        #[arg(long)]
        target_infidelity: Option<f64>,
        #[arg(long)]
        max_layers: Option<usize>,
        #[arg(long)]
        max_trotter_layers: Option<usize>,
    },
    /// Estimate one g_jkl on a Heisenberg ansatz with random parameters.
    EstimateG(EstimateArgs),
    /// Circuits per assembly of N and W.
    CircuitCount {
        /// Number of ansatz parameters L.
        #[arg(long)]
        params: Option<u64>,
        /// Number of Hamiltonian terms n_H.
        #[arg(long)]
        terms: Option<u64>,
        /// Derive both from a Heisenberg chain instead.
        #[arg(long)]
        sites: Option<usize>,
        #[arg(long, default_value_t = 1)]
        layers: usize,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sites: Option<usize>,
    /// One layer count, or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// `dense` or `shots`.
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    shots: Option<u64>,
    /// `indirect` or `direct`.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pauli-sum file replacing the Heisenberg model.
    #[arg(long)]
    hamiltonian: Option<PathBuf>,
    /// Gate list for one ansatz layer of a custom Hamiltonian.
    #[arg(long)]
    ansatz: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.sites {
            cfg.sites = v;
        }
        if let Some(v) = &self.layers {
            cfg.layers = if v.len() == 1 {
                LayerSpec::One(v[0])
            } else {
                LayerSpec::Many(v.clone())
            };
        }
        if let Some(v) = self.t_final {
            cfg.t_final = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.backend {
            cfg.backend = v;
        }
        if let Some(v) = self.shots {
            cfg.shots = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.hamiltonian {
            cfg.hamiltonian = Some(v.clone());
        }
        if let Some(v) = &self.ansatz {
            cfg.ansatz = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.output_path = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, default_value_t = 3)]
    sites: usize,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Lower circuit index j (0 ≤ j ≤ l).
    #[arg(long)]
    j: usize,
    /// Upper circuit index l (l ≤ L).
    #[arg(long)]
    l: usize,
    #[arg(long)]
    pj: PauliString,
    #[arg(long)]
    pk: PauliString,
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    #[arg(long, default_value = "indirect")]
    method: Method,
    /// Seeds both the random parameters and the shot sampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn output(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn evolve(
    cfg: &ExperimentConfig,
    trajectory: Option<&PathBuf>,
    diagnostics: Option<&PathBuf>,
) -> anyhow::Result<ExitCode> {
    let problem = cfg.problem()?;
    let layers = cfg.layers.counts()[0];
    let ansatz = problem.ansatz(layers)?;
    let integrator = cfg.integrator(cfg.t_final);
    let result = match cfg.backend {
        Backend::Dense => vqos::integrate(&ansatz, problem.hamiltonian(), &integrator),
        Backend::Shots => {
            let mut shots = vqos::estimators::ShotAssembler::new(ShotPlan {
                shots: cfg.shots,
                seed: cfg.seed,
                method: cfg.method,
            });
            vqos::engine::integrate_with(&ansatz, problem.hamiltonian(), &integrator, &mut shots)
        }
    };
    let (traj, aborted) = match result {
        Ok(traj) => (traj, None),
        Err(Error::IntegrationAborted { t, reason, partial }) => (*partial, Some((t, reason))),
        Err(e) => return Err(e.into()),
    };
    let rows = evolution_records(&problem, &ansatz, &traj, layers)?;
    write_records(output(cfg.output_path.as_ref())?, &rows)?;
    if let Some(p) = trajectory {
        traj.write_csv(output(Some(p))?)?;
    }
    if let Some(p) = diagnostics {
        traj.write_diagnostics_csv(output(Some(p))?)?;
    }
    match aborted {
        None => Ok(ExitCode::SUCCESS),
        Some((t, reason)) => {
            eprintln!(
                "error: integration aborted at t = {t}: {reason}; wrote {} rows",
                rows.len()
            );
            Ok(ExitCode::from(2))
        }
    }
}

fn estimate(args: &EstimateArgs) -> anyhow::Result<()> {
    let ansatz = vqos::build_heisenberg_ansatz(args.sites, args.layers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let theta = ParameterVector::random(ansatz.len(), &mut rng);
    let spec = GSpec {
        p_j: args.pj,
        p_k: args.pk,
        l: args.l,
        j: args.j,
        ansatz: &ansatz,
        theta: &theta,
    };
    let plan = ShotPlan {
        shots: args.shots,
        seed: args.seed,
        method: args.method,
    };
    let est = estimate_g(&spec, &plan)?;
    let exact = spec.exact()?;
    println!("estimate,std_error,exact");
    println!("{:.16e},{:.16e},{:.16e}", est.value, est.std_error, exact);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Evolve {
            common,
            trajectory,
            diagnostics,
        } => {
            let cfg = common.config()?;
            evolve(&cfg, trajectory.as_ref(), diagnostics.as_ref())
        }
        Command::LayerSweep { common, t_targets } => {
            let mut cfg = common.config()?;
            if let Some(t) = t_targets {
                cfg.t_targets = t;
            }
            let rows = run_layer_sweep(&cfg, &cfg.t_targets)?;
            write_records(output(cfg.output_path.as_ref())?, &rows)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::RequiredLayers {
            common,
            t_targets,
            target_infidelity,
            max_layers,
            max_trotter_layers,
        } => {
            let mut cfg = common.config()?;
            if let Some(t) = t_targets {
                cfg.t_targets = t;
            }
            if let Some(v) = target_infidelity {
                cfg.target_infidelity = v;
            }
            if let Some(v) = max_layers {
                cfg.max_layers = v;
            }
            if let Some(v) = max_trotter_layers {
                cfg.max_trotter_layers = v;
            }
            let rows = run_required_layers(&cfg, &cfg.t_targets)?;
            write_required(output(cfg.output_path.as_ref())?, &rows)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::EstimateG(args) => {
            estimate(&args)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::CircuitCount {
            params,
            terms,
            sites,
            layers,
        } => {
            let (l, n_h) = match (params, terms, sites) {
                (Some(l), Some(n_h), None) => (l, n_h),
                (None, None, Some(n)) => {
                    let h = vqos::experiment::build_heisenberg_hamiltonian(n)?;
                    (
                        vqos::build_heisenberg_ansatz(n, layers)?.len() as u64,
                        h.len() as u64,
                    )
                }
                _ => bail!("give either --params and --terms, or --sites"),
            };
            if l == 0 || n_h == 0 {
                bail!("--params and --terms must be >= 1");
            }
            let (n_count, w_count) = circuit_count(l, n_h);
            println!("params,terms,circuits_n,circuits_w");
            println!("{l},{n_h},{n_count},{w_count}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
