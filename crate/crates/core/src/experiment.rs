//! Heisenberg-chain model, experiment drivers and CSV output.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{heisenberg_layer_generators, Ansatz};
use crate::baselines::{process_infidelity, trotter_unitary, ExactPropagator};
use crate::dense::CMatrix;
use crate::engine::{
    format_float, integrate_with, DenseAssembler, IntegratorConfig, ParameterTrajectory,
};
use crate::error::{Error, Result};
use crate::estimators::{Method, ShotAssembler, ShotPlan};
use crate::pauli::{parse_term_lines, PauliString, PauliSum};

/// `H = −½ Σ X_j − ½ Σ (X_j X_{j+1} + Y_j Y_{j+1} + Z_j Z_{j+1})` on a ring.
pub fn build_heisenberg_hamiltonian(n_sites: usize) -> Result<PauliSum> {
    let terms: Vec<(f64, PauliString)> = heisenberg_trotter_groups(n_sites)?
        .into_iter()
        .flat_map(|g| g.terms().to_vec())
        .collect();
    PauliSum::from_terms(n_sites, terms)
}

/// The field, `XX`, `YY` and `ZZ` parts of the Heisenberg ring, in product-formula order.
pub fn heisenberg_trotter_groups(n_sites: usize) -> Result<Vec<PauliSum>> {
    let gens = heisenberg_layer_generators(n_sites)?;
    gens.chunks(n_sites)
        .map(|chunk| PauliSum::from_terms(n_sites, chunk.iter().map(|g| (-0.5, *g))))
        .collect()
}

/// A Hamiltonian together with its ansatz layer and product-formula grouping.
#[derive(Clone, Debug)]
pub struct Problem {
    hamiltonian: PauliSum,
    groups: Vec<PauliSum>,
    layer: Vec<PauliString>,
    exact: ExactPropagator,
}

impl Problem {
    pub fn heisenberg(n_sites: usize) -> Result<Self> {
        let hamiltonian = build_heisenberg_hamiltonian(n_sites)?;
        let exact = ExactPropagator::new(&hamiltonian)?;
        Ok(Self {
            hamiltonian,
            groups: heisenberg_trotter_groups(n_sites)?,
            layer: heisenberg_layer_generators(n_sites)?,
            exact,
        })
    }

    /// Arbitrary Hamiltonian; any identity term is dropped since it only
    /// shifts the global phase. Without an explicit `layer` the ansatz uses one
    /// gate per Hamiltonian term. Each term is its own product-formula group.
    pub fn custom(h: &PauliSum, layer: Option<Vec<PauliString>>) -> Result<Self> {
        let hamiltonian = h.without_identity();
        if hamiltonian.is_empty() {
            return Err(Error::Config(
                "hamiltonian has no non-identity terms".into(),
            ));
        }
        let n = hamiltonian.n_qubits();
        let groups = hamiltonian
            .terms()
            .iter()
            .map(|t| PauliSum::from_terms(n, [*t]))
            .collect::<Result<Vec<_>>>()?;
        let layer = layer.unwrap_or_else(|| hamiltonian.terms().iter().map(|(_, p)| *p).collect());
        if layer.is_empty() {
            return Err(Error::Config("ansatz layer is empty".into()));
        }
        let exact = ExactPropagator::new(&hamiltonian)?;
        Ok(Self {
            hamiltonian,
            groups,
            layer,
            exact,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.hamiltonian.n_qubits()
    }

    pub fn hamiltonian(&self) -> &PauliSum {
        &self.hamiltonian
    }

    pub fn trotter_groups(&self) -> &[PauliSum] {
        &self.groups
    }

    pub fn layer(&self) -> &[PauliString] {
        &self.layer
    }

    pub fn ansatz(&self, layers: usize) -> Result<Ansatz> {
        Ansatz::layered(self.n_qubits(), &self.layer, layers)
    }

    pub fn exact(&self, t: f64) -> Result<CMatrix> {
        self.exact.exact_unitary(t)
    }

    pub fn trotter_infidelity(&self, t: f64, layers: usize) -> Result<f64> {
        process_infidelity(&trotter_unitary(&self.groups, t, layers)?, &self.exact(t)?)
    }

    pub fn vqos_infidelity(
        &self,
        ansatz: &Ansatz,
        traj: &ParameterTrajectory,
        index: usize,
    ) -> Result<f64> {
        let u = ansatz.unitary(&traj.thetas[index])?;
        process_infidelity(&u, &self.exact(traj.times[index])?)
    }
}

/// Reads a gate list in the Pauli-sum text format; coefficients are ignored.
pub fn parse_gate_list(text: &str) -> Result<Vec<PauliString>> {
    Ok(parse_term_lines(text)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Dense,
    Shots,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "shots" => Ok(Self::Shots),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

/// Either a single layer count or a list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerSpec {
    One(usize),
    Many(Vec<usize>),
}

impl LayerSpec {
    pub fn counts(&self) -> Vec<usize> {
        match self {
            Self::One(l) => vec![*l],
            Self::Many(ls) => ls.clone(),
        }
    }
}

/// Experiment settings, loadable from TOML. Every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sites: usize,
    pub layers: LayerSpec,
    pub t_final: f64,
    pub dt: f64,
    pub regularization: f64,
    pub backend: Backend,
    pub shots: u64,
    pub method: Method,
    pub seed: u64,
    pub target_infidelity: f64,
    pub max_layers: usize,
    pub max_trotter_layers: usize,
    /// Evaluation times for layer sweeps and layer searches.
    pub t_targets: Vec<f64>,
    pub output_path: Option<PathBuf>,
    /// Pauli-sum file replacing the Heisenberg model.
    pub hamiltonian: Option<PathBuf>,
    /// Gate-list file for one ansatz layer (custom Hamiltonians only).
    pub ansatz: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sites: 3,
            layers: LayerSpec::One(1),
            t_final: 1.0,
            dt: 0.05,
            regularization: 1e-8,
            backend: Backend::Dense,
            shots: 10_000,
            method: Method::Indirect,
            seed: 0,
            target_infidelity: 1e-3,
            max_layers: 20,
            max_trotter_layers: 1000,
            t_targets: vec![1.0],
            output_path: None,
            hamiltonian: None,
            ansatz: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a TOML file; relative model paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.hamiltonian, &mut cfg.ansatz]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hamiltonian.is_none() && self.sites < 3 {
            return Err(Error::Config(format!(
                "sites must be >= 3, got {}",
                self.sites
            )));
        }
        if self.ansatz.is_some() && self.hamiltonian.is_none() {
            return Err(Error::Config(
                "an ansatz file needs a custom hamiltonian".into(),
            ));
        }
        let layers = self.layers.counts();
        if layers.is_empty() || layers.contains(&0) {
            return Err(Error::Config("layer counts must be >= 1".into()));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::Config(format!(
                "t_final must be > 0, got {}",
                self.t_final
            )));
        }
        if !(self.target_infidelity > 0.0 && self.target_infidelity < 1.0) {
            return Err(Error::Config(format!(
                "target_infidelity must lie in (0, 1), got {}",
                self.target_infidelity
            )));
        }
        if self.backend == Backend::Shots && self.shots == 0 {
            return Err(Error::Config("shots backend needs shots >= 1".into()));
        }
        if self.max_layers == 0 || self.max_trotter_layers == 0 {
            return Err(Error::Config("layer search caps must be >= 1".into()));
        }
        if self.t_targets.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("t_targets must be finite and >= 0".into()));
        }
        self.integrator(self.t_final).validate()
    }

    pub fn integrator(&self, t_final: f64) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            t_final,
            regularization: self.regularization,
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        match &self.hamiltonian {
            None => Problem::heisenberg(self.sites),
            Some(path) => {
                let h: PauliSum = std::fs::read_to_string(path)?.parse()?;
                let layer = match &self.ansatz {
                    Some(p) => Some(parse_gate_list(&std::fs::read_to_string(p)?)?),
                    None => None,
                };
                Problem::custom(&h, layer)
            }
        }
    }

    fn integrate(
        &self,
        problem: &Problem,
        ansatz: &Ansatz,
        t_final: f64,
    ) -> Result<ParameterTrajectory> {
        let cfg = self.integrator(t_final);
        match self.backend {
            Backend::Dense => {
                integrate_with(ansatz, problem.hamiltonian(), &cfg, &mut DenseAssembler)
            }
            Backend::Shots => {
                let mut shots = ShotAssembler::new(ShotPlan {
                    shots: self.shots,
                    seed: self.seed,
                    method: self.method,
                });
                integrate_with(ansatz, problem.hamiltonian(), &cfg, &mut shots)
            }
        }
    }
}

/// One row of every experiment CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRecord {
    pub t: f64,
    pub sites: usize,
    pub layers: usize,
    pub infidelity_vqos: f64,
    pub infidelity_trotter: f64,
}

pub const SWEEP_HEADER: [&str; 5] = [
    "t",
    "sites",
    "layers",
    "infidelity_vqos",
    "infidelity_trotter",
];

pub fn write_records<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in records {
        w.write_record([
            format_float(r.t),
            r.sites.to_string(),
            r.layers.to_string(),
            format_float(r.infidelity_vqos),
            format_float(r.infidelity_trotter),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("bad or missing field {}", i + 1),
        })
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {:?}", header),
        });
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let line = i + 2;
            Ok(SweepRecord {
                t: field(&rec, 0, line)?,
                sites: field(&rec, 1, line)?,
                layers: field(&rec, 2, line)?,
                infidelity_vqos: field(&rec, 3, line)?,
                infidelity_trotter: field(&rec, 4, line)?,
            })
        })
        .collect()
}

/// Infidelities at every point of a (possibly partial) trajectory.
pub fn evolution_records(
    problem: &Problem,
    ansatz: &Ansatz,
    traj: &ParameterTrajectory,
    layers: usize,
) -> Result<Vec<SweepRecord>> {
    (0..traj.len())
        .map(|i| {
            Ok(SweepRecord {
                t: traj.times[i],
                sites: problem.n_qubits(),
                layers,
                infidelity_vqos: problem.vqos_infidelity(ansatz, traj, i)?,
                infidelity_trotter: problem.trotter_infidelity(traj.times[i], layers)?,
            })
        })
        .collect()
}

/// Integrates to `t_final` with the first layer count and reports both
/// infidelities on the integrator grid. The Trotter baseline uses the same
/// number of layers.
///
/// On an integrator abort the error carries the partial trajectory; pass it
/// to [`evolution_records`] to recover the rows computed so far.
pub fn run_evolution(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let layers = cfg.layers.counts()[0];
    let ansatz = problem.ansatz(layers)?;
    let traj = cfg.integrate(&problem, &ansatz, cfg.t_final)?;
    evolution_records(&problem, &ansatz, &traj, layers)
}

fn target_indices(traj: &ParameterTrajectory, dt: f64, targets: &[f64]) -> Result<Vec<usize>> {
    targets
        .iter()
        .map(|&t| {
            let steps = t / dt;
            let on_grid = (steps - steps.round()).abs() <= 1e-9 * steps.max(1.0);
            on_grid
                .then(|| traj.index_of_time(t))
                .flatten()
                .ok_or_else(|| Error::Config(format!("target time {t} is not on the dt grid")))
        })
        .collect()
}

fn horizon(targets: &[f64]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Config("no target times".into()));
    }
    Ok(targets.iter().copied().fold(0.0, f64::max))
}

/// One integration per layer count, sampled at each target time.
/// Targets must lie on the `dt` grid. Rows are ordered by layer count, then target.
pub fn run_layer_sweep(cfg: &ExperimentConfig, t_targets: &[f64]) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let t_max = horizon(t_targets)?;
    let problem = cfg.problem()?;
    let cells: Vec<Result<Vec<SweepRecord>>> = cfg
        .layers
        .counts()
        .par_iter()
        .map(|&layers| {
            let ansatz = problem.ansatz(layers)?;
            let traj = cfg.integrate(&problem, &ansatz, t_max)?;
            target_indices(&traj, cfg.dt, t_targets)?
                .into_iter()
                .map(|i| {
                    Ok(SweepRecord {
                        t: traj.times[i],
                        sites: problem.n_qubits(),
                        layers,
                        infidelity_vqos: problem.vqos_infidelity(&ansatz, &traj, i)?,
                        infidelity_trotter: problem.trotter_infidelity(traj.times[i], layers)?,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for cell in cells {
        out.extend(cell?);
    }
    Ok(out)
}

/// Smallest layer counts reaching the target infidelity at one time; `None` if the cap was hit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RequiredLayers {
    pub t: f64,
    pub layers_vqos: Option<usize>,
    pub layers_trotter: Option<usize>,
}

pub const REQUIRED_HEADER: [&str; 3] = ["t", "layers_vqos", "layers_trotter"];
const NOT_REACHED: &str = "NA";

fn count_field(v: Option<usize>) -> String {
    v.map_or_else(|| NOT_REACHED.to_string(), |l| l.to_string())
}

pub fn write_required<W: Write>(out: W, rows: &[RequiredLayers]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REQUIRED_HEADER)?;
    for r in rows {
        w.write_record([
            format_float(r.t),
            count_field(r.layers_vqos),
            count_field(r.layers_trotter),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_required<R: Read>(input: R) -> Result<Vec<RequiredLayers>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(REQUIRED_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {:?}", header),
        });
    }
    let count = |rec: &csv::StringRecord, i: usize, line: usize| -> Result<Option<usize>> {
        if rec.get(i).map(str::trim) == Some(NOT_REACHED) {
            Ok(None)
        } else {
            field(rec, i, line).map(Some)
        }
    };
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let line = i + 2;
            Ok(RequiredLayers {
                t: field(&rec, 0, line)?,
                layers_vqos: count(&rec, 1, line)?,
                layers_trotter: count(&rec, 2, line)?,
            })
        })
        .collect()
}

/// VQOS infidelity at each target time for `layers` layers (one fresh integration).
pub fn vqos_infidelities_at(
    cfg: &ExperimentConfig,
    problem: &Problem,
    layers: usize,
    t_targets: &[f64],
) -> Result<Vec<f64>> {
    let t_max = horizon(t_targets)?;
    let ansatz = problem.ansatz(layers)?;
    let traj = cfg.integrate(problem, &ansatz, t_max)?;
    target_indices(&traj, cfg.dt, t_targets)?
        .into_iter()
        .map(|i| problem.vqos_infidelity(&ansatz, &traj, i))
        .collect()
}

/// Linear search from one layer upward, separately for VQOS (capped at
/// `max_layers`) and Trotter (capped at `max_trotter_layers`).
pub fn run_required_layers(cfg: &ExperimentConfig, t_grid: &[f64]) -> Result<Vec<RequiredLayers>> {
    cfg.validate()?;
    horizon(t_grid)?;
    let problem = cfg.problem()?;
    let target = cfg.target_infidelity;
    let mut vqos: Vec<Option<usize>> = vec![None; t_grid.len()];
    for layers in 1..=cfg.max_layers {
        let open: Vec<usize> = (0..t_grid.len()).filter(|&i| vqos[i].is_none()).collect();
        if open.is_empty() {
            break;
        }
        let ts: Vec<f64> = open.iter().map(|&i| t_grid[i]).collect();
        let inf = vqos_infidelities_at(cfg, &problem, layers, &ts)?;
        for (&i, v) in open.iter().zip(inf) {
            if v <= target {
                vqos[i] = Some(layers);
            }
        }
    }
    let trotter: Vec<Option<usize>> = t_grid
        .par_iter()
        .map(|&t| -> Result<Option<usize>> {
            for layers in 1..=cfg.max_trotter_layers {
                if problem.trotter_infidelity(t, layers)? <= target {
                    return Ok(Some(layers));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    Ok(t_grid
        .iter()
        .zip(vqos.into_iter().zip(trotter))
        .map(|(&t, (layers_vqos, layers_trotter))| RequiredLayers {
            t,
            layers_vqos,
            layers_trotter,
        })
        .collect())
}
