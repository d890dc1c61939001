//! JSON scenario files and their validated in-memory form.

use std::fs;
use std::path::Path;

use nalgebra::Complex;
use pcons_core::graph::{self, DirectedGraph, Network, PinningSet};
use pcons_core::sim::{AgentNonlinearity, PinningSign, Protocol, Scenario, SectorKind, SectorNonlinearity};
use pcons_core::synthesis::{feedback_gain, PiFamily, PlantModel, SynthesisConfig, Variant};
use pcons_core::{Error as CoreError, Matrix, Vector};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::gains::GainsFile;

/// Row-major matrix as written in files.
pub type Rows = Vec<Vec<f64>>;

/// Range of the uniform initial-state generator.
pub const RANDOM_INITIAL_RANGE: (f64, f64) = (0.0, 2.0);

pub fn matrix_from_rows(rows: &Rows, what: &str) -> Result<Matrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(CoreError::Dimension(format!("{what} is empty")).into());
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(CoreError::Dimension(format!(
            "{what} row {} has {} entries, row 1 has {ncols}",
            bad + 1,
            rows[bad].len()
        ))
        .into());
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Comma-separated eigenvalues such as `3,1.5+0.866i,1.5-0.866i`.
pub fn parse_spectrum(text: &str) -> Result<Vec<Complex<f64>>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<Complex<f64>>()
                .map_err(|_| CliError::Input(format!("cannot parse eigenvalue '{t}'")))
        })
        .collect()
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub plant: PlantBlock,
    pub topology: TopologyBlock,
    pub constants: ConstantsBlock,
    pub protocol: ProtocolName,
    pub gains: GainsBlock,
    pub simulation: SimulationBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantBlock {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "H")]
    pub h: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    pub beta: f64,
    pub m_l: f64,
    pub m_h: f64,
    #[serde(default)]
    pub sector: SectorSpec,
    #[serde(default)]
    pub g: GSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SectorSpec {
    #[default]
    Identity,
    /// `slope·u − ripple·u·|sin u|`.
    SineRipple { slope: f64, ripple: f64 },
    /// Piecewise linear through `(u, v)`, linear extrapolation outside.
    Table { u: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GSpec {
    #[default]
    Zero,
    Oscillating {
        rate: f64,
    },
    Linear {
        #[serde(rename = "M")]
        m: Rows,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyBlock {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Rows>,
    /// 1-based node numbers.
    pub pinned: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruct: Option<ReconstructSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSpec {
    /// Nonzero Laplacian eigenvalues.
    pub spectrum: String,
    /// Index into the matches, in enumeration order.
    #[serde(default)]
    pub pick: usize,
    #[serde(default = "default_spectrum_tol")]
    pub tol: f64,
}

fn default_spectrum_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsBlock {
    pub eta: f64,
    pub phi: f64,
    pub mu: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub s_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    FullObserver,
    DistributedObserver,
}

impl ProtocolName {
    pub fn protocol(self) -> Protocol {
        match self {
            ProtocolName::FullObserver => Protocol::FullObserver,
            ProtocolName::DistributedObserver => Protocol::DistributedObserver,
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            ProtocolName::FullObserver => Variant::Theorem1,
            ProtocolName::DistributedObserver => Variant::Theorem2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Algorithm1,
    Algorithm2,
}

impl Algorithm {
    pub fn protocol(self) -> ProtocolName {
        match self {
            Algorithm::Algorithm1 => ProtocolName::FullObserver,
            Algorithm::Algorithm2 => ProtocolName::DistributedObserver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsBlock {
    /// Synthesize before simulating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesize: Option<Algorithm>,
    /// Gain file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Rows>,
    #[serde(rename = "Pi", default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Rows>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Rows>,
    /// Half-width of the rounding interval of printed `E` entries.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub precision: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiFamilyName {
    ScaledIdentity,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBlock {
    #[serde(rename = "initial_E", default, skip_serializing_if = "Option::is_none")]
    pub initial_e: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_family: Option<PiFamilyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rounds: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinningSignName {
    #[default]
    Attractive,
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h: f64,
    #[serde(default)]
    pub seed: u64,
    pub initial: InitialSpec,
    #[serde(default)]
    pub clamp: bool,
    #[serde(default)]
    pub pinning_sign: PinningSignName,
    #[serde(default = "default_positivity_tol")]
    pub positivity_tol: f64,
    #[serde(default = "default_divergence_bound")]
    pub divergence_bound: f64,
}

fn default_positivity_tol() -> f64 {
    1e-8
}

fn default_divergence_bound() -> f64 {
    1e10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Keyword(InitialKeyword),
    Explicit(ExplicitInitial),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKeyword {
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitInitial {
    pub s0: Vec<f64>,
    pub x0: Rows,
    pub xhat0: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_metrics")]
    pub metrics: String,
    #[serde(default = "default_summary")]
    pub summary: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_gains")]
    pub gains: String,
    /// Keep every k-th integration step.
    #[serde(default = "default_decimation")]
    pub decimation: usize,
}

fn default_trajectory() -> String {
    "trajectory.csv".into()
}
fn default_metrics() -> String {
    "metrics.csv".into()
}
fn default_summary() -> String {
    "summary.txt".into()
}
fn default_report() -> String {
    "report.txt".into()
}
fn default_gains() -> String {
    "gains.json".into()
}
fn default_decimation() -> usize {
    1
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            trajectory: default_trajectory(),
            metrics: default_metrics(),
            summary: default_summary(),
            report: default_report(),
            gains: default_gains(),
            decimation: default_decimation(),
        }
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Where simulation and verification gains come from.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSource {
    Synthesize,
    Explicit(ExplicitGains),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitGains {
    pub e: Matrix,
    pub pi: Option<Matrix>,
    pub k: Matrix,
    pub sigma: Option<Matrix>,
    pub precision: f64,
}

impl ExplicitGains {
    pub fn from_file(g: &GainsFile, plant: &PlantModel, eta: f64) -> Result<Self> {
        Self::from_parts(Some(&g.e), g.pi.as_ref(), g.k.as_ref(), g.sigma.as_ref(), g.precision, plant, eta)
    }

    fn from_parts(
        e: Option<&Rows>,
        pi: Option<&Rows>,
        k: Option<&Rows>,
        sigma: Option<&Rows>,
        precision: f64,
        plant: &PlantModel,
        eta: f64,
    ) -> Result<Self> {
        let e = matrix_from_rows(e.ok_or_else(|| CliError::Input("gains need E".into()))?, "E")?;
        let pi = pi.map(|r| matrix_from_rows(r, "Pi")).transpose()?;
        let sigma = sigma.map(|r| matrix_from_rows(r, "Sigma")).transpose()?;
        let (m, p, q) = (plant.m(), plant.p(), plant.q());
        if e.shape() != (m, q) {
            return Err(CoreError::Dimension(format!("E is {}x{}, expected {m}x{q}", e.nrows(), e.ncols())).into());
        }
        for (mat, what) in [(&pi, "Pi"), (&sigma, "Sigma")] {
            if let Some(mat) = mat {
                if mat.shape() != (m, m) {
                    return Err(CoreError::Dimension(format!("{what} must be {m}x{m}")).into());
                }
            }
        }
        let k = match (k, &pi) {
            (Some(rows), _) => matrix_from_rows(rows, "K")?,
            (None, Some(pi)) => feedback_gain(pi, eta, &plant.b),
            (None, None) => return Err(CliError::Input("gains need K or Pi".into())),
        };
        if k.shape() != (p, m) {
            return Err(CoreError::Dimension(format!("K is {}x{}, expected {p}x{m}", k.nrows(), k.ncols())).into());
        }
        if !(precision >= 0.0) {
            return Err(CliError::Input(format!("precision must be non-negative, got {precision}")));
        }
        Ok(Self { e, pi, k, sigma, precision })
    }
}

/// A scenario file after every check.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub name: String,
    pub file: ScenarioFile,
    pub plant: PlantModel,
    pub network: Network,
    pub config: SynthesisConfig,
    pub protocol: Protocol,
    pub variant: Variant,
    pub sector: SectorNonlinearity,
    pub g: AgentNonlinearity,
    pub gains: GainSource,
    pub seed: u64,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file = ScenarioFile::from_json(&text, path)?;
    let stem = path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Loaded::from_file(file, &base, stem)
}

fn build_plant(p: &PlantBlock) -> Result<(PlantModel, SectorNonlinearity, AgentNonlinearity)> {
    let plant = PlantModel::new(
        matrix_from_rows(&p.a, "A")?,
        matrix_from_rows(&p.h, "H")?,
        matrix_from_rows(&p.b, "B")?,
        matrix_from_rows(&p.c, "C")?,
        p.beta,
        p.m_l,
        p.m_h,
    )?;
    let kind = match &p.sector {
        SectorSpec::Identity => SectorKind::Identity,
        SectorSpec::SineRipple { slope, ripple } => SectorKind::SineRipple { slope: *slope, ripple: *ripple },
        SectorSpec::Table { u, v } => SectorKind::Table { u: u.clone(), v: v.clone() },
    };
    let sector = SectorNonlinearity::new(kind, p.m_l, p.m_h)?;
    let g = match &p.g {
        GSpec::Zero => AgentNonlinearity::Zero,
        GSpec::Oscillating { rate } => AgentNonlinearity::Oscillating { rate: *rate },
        GSpec::Linear { m } => AgentNonlinearity::Linear(matrix_from_rows(m, "g.M")?),
    };
    Ok((plant, sector, g))
}

fn build_network(t: &TopologyBlock) -> Result<Network> {
    if t.n == 0 {
        return Err(CliError::Input("topology.n must be at least 1".into()));
    }
    let graph = match (&t.adjacency, &t.reconstruct) {
        (Some(rows), None) => {
            let adj = matrix_from_rows(rows, "adjacency")?;
            if adj.shape() != (t.n, t.n) {
                return Err(CoreError::Dimension(format!(
                    "adjacency is {}x{} but n = {}",
                    adj.nrows(),
                    adj.ncols(),
                    t.n
                ))
                .into());
            }
            DirectedGraph::new(adj)?
        }
        (None, Some(spec)) => {
            let target = parse_spectrum(&spec.spectrum)?;
            let found = graph::reconstruct_by_spectrum(t.n, &target, spec.tol)?;
            log::info!("spectrum reconstruction: {} matches", found.matches.len());
            found.matches.get(spec.pick).cloned().ok_or_else(|| {
                let nearest = found.nearest.as_ref().map_or(f64::INFINITY, |(_, d)| *d);
                CliError::Input(format!(
                    "no graph number {} among {} with spectrum {} (nearest distance {nearest:.3e})",
                    spec.pick,
                    found.matches.len(),
                    spec.spectrum
                ))
            })?
        }
        _ => return Err(CliError::Input("topology needs exactly one of adjacency or reconstruct".into())),
    };
    let mut pinned = Vec::with_capacity(t.pinned.len());
    for &node in &t.pinned {
        if node == 0 || node > t.n {
            return Err(CliError::Input(format!("pinned node {node} is outside 1..={}", t.n)));
        }
        pinned.push(node - 1);
    }
    Ok(Network::new(graph, PinningSet::new(t.n, &pinned)?)?)
}

fn build_config(c: &ConstantsBlock, search: Option<&SearchBlock>, seed: u64) -> Result<SynthesisConfig> {
    let mut cfg = SynthesisConfig::new(c.eta, c.phi, c.mu, c.delta)?;
    cfg.s_bar = c.s_bar;
    cfg.search.seed = seed;
    if let Some(s) = search {
        let sc = &mut cfg.search;
        if let Some(list) = &s.initial_e {
            sc.initial_observer_gains = list
                .iter()
                .map(|r| matrix_from_rows(r, "initial_E"))
                .collect::<Result<_>>()?;
        }
        sc.pi_init = s.pi_init.unwrap_or(sc.pi_init);
        sc.pi_min = s.pi_min.unwrap_or(sc.pi_min);
        sc.pi_max = s.pi_max.unwrap_or(sc.pi_max);
        sc.pi_grid = s.pi_grid.unwrap_or(sc.pi_grid);
        sc.e_iterations = s.e_iterations.unwrap_or(sc.e_iterations);
        sc.e_step = s.e_step.unwrap_or(sc.e_step);
        sc.max_rounds = s.max_rounds.unwrap_or(sc.max_rounds);
        if let Some(f) = s.pi_family {
            sc.pi_family = match f {
                PiFamilyName::ScaledIdentity => PiFamily::ScaledIdentity,
                PiFamilyName::Diagonal => PiFamily::Diagonal,
            };
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl Loaded {
    /// Validates `file`; relative gain-file paths resolve against `base`.
    pub fn from_file(file: ScenarioFile, base: &Path, default_name: String) -> Result<Self> {
        let (plant, sector, g) = build_plant(&file.plant)?;
        let network = build_network(&file.topology)?;
        let seed = file.simulation.seed;
        let config = build_config(&file.constants, file.gains.search.as_ref(), seed)?;
        let gb = &file.gains;
        let sources = [gb.synthesize.is_some(), gb.file.is_some(), gb.e.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(CliError::Input("gains need exactly one of synthesize, file or E".into()));
        }
        if let Some(alg) = gb.synthesize {
            if alg.protocol() != file.protocol {
                return Err(CliError::Input(format!(
                    "{alg:?} synthesizes gains for the {:?} protocol, scenario uses {:?}",
                    alg.protocol(),
                    file.protocol
                )));
            }
        }
        let gains = if gb.synthesize.is_some() {
            GainSource::Synthesize
        } else if let Some(rel) = &gb.file {
            let gf = GainsFile::read(&base.join(rel))?;
            GainSource::Explicit(ExplicitGains::from_file(&gf, &plant, config.eta)?)
        } else {
            GainSource::Explicit(ExplicitGains::from_parts(
                gb.e.as_ref(),
                gb.pi.as_ref(),
                gb.k.as_ref(),
                None,
                gb.precision,
                &plant,
                config.eta,
            )?)
        };
        if file.output.decimation == 0 {
            return Err(CliError::Input("output.decimation must be at least 1".into()));
        }
        let loaded = Self {
            name: file.name.clone().unwrap_or(default_name),
            protocol: file.protocol.protocol(),
            variant: file.protocol.variant(),
            file,
            plant,
            network,
            config,
            sector,
            g,
            gains,
            seed,
        };
        let (m, p, q) = (loaded.plant.m(), loaded.plant.p(), loaded.plant.q());
        loaded.scenario(&Matrix::zeros(m, q), &Matrix::zeros(p, m))?;
        Ok(loaded)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.config.search.seed = seed;
        self
    }

    pub fn initial_states(&self) -> Result<(Vector, Vec<Vector>, Vec<Vector>)> {
        let (m, n) = (self.plant.m(), self.network.n());
        match &self.file.simulation.initial {
            InitialSpec::Keyword(InitialKeyword::Random) => {
                let mut rng = StdRng::seed_from_u64(self.seed);
                let (lo, hi) = RANDOM_INITIAL_RANGE;
                let mut draw = || Vector::from_fn(m, |_, _| rng.random_range(lo..hi));
                let s0 = draw();
                let x0 = (0..n).map(|_| draw()).collect();
                let xhat0 = (0..n).map(|_| draw()).collect();
                Ok((s0, x0, xhat0))
            }
            InitialSpec::Explicit(init) => {
                let rows = |r: &Rows| r.iter().map(|v| Vector::from_column_slice(v)).collect::<Vec<_>>();
                Ok((Vector::from_column_slice(&init.s0), rows(&init.x0), rows(&init.xhat0)))
            }
        }
    }

    /// Closed loop with gains `e`, `k`.
    pub fn scenario(&self, e: &Matrix, k: &Matrix) -> Result<Scenario> {
        let sim = &self.file.simulation;
        let (s0, x0, xhat0) = self.initial_states()?;
        let sc = Scenario {
            plant: self.plant.clone(),
            graph: self.network.graph.clone(),
            pinning: self.network.pinning.clone(),
            protocol: self.protocol,
            pinning_sign: match sim.pinning_sign {
                PinningSignName::Attractive => PinningSign::Attractive,
                PinningSignName::AsPrinted => PinningSign::AsPrinted,
            },
            e: e.clone(),
            k: k.clone(),
            phi: self.config.phi,
            mu: self.config.mu,
            sector: self.sector.clone(),
            g: self.g.clone(),
            s0,
            x0,
            xhat0,
            horizon: sim.horizon,
            step: sim.h,
            record_every: self.file.output.decimation,
            clamp: sim.clamp,
            positivity_tol: sim.positivity_tol,
            divergence_bound: sim.divergence_bound,
        };
        sc.validate()?;
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_strings() {
        let z = parse_spectrum("3, 1.5+0.866i,1.5-0.866i").unwrap();
        assert_eq!(z, vec![Complex::new(3.0, 0.0), Complex::new(1.5, 0.866), Complex::new(1.5, -0.866)]);
        assert!(parse_spectrum("1+").is_err());
    }

    #[test]
    fn ragged_rows_are_dimension_errors() {
        let err = matrix_from_rows(&vec![vec![1.0, 2.0], vec![3.0]], "A").unwrap_err();
        assert_eq!(err.exit_code(), crate::ExitCode::Input);
    }
}
