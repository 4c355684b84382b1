//! Experiment configuration: a TOML file with dotted sections. Every field has
//! a default, so an empty file is the desk-scale benchmark.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hgesi::model::Hyperparams;
use hgesi::pipeline::{GeometryConfig, Method, MethodParams};
use hgesi::sim::{SimulationConfig, CHANNEL_SNR_GRID, SOURCE_SNR_GRID};
use hgesi::solvers::SolverOptions;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every grid cell derives its own from it.
    pub seed: u64,
    pub repetitions: usize,
    pub methods: Vec<String>,
    pub output_dir: PathBuf,
    /// Solve on data rescaled by `1/max|(LΨ)ᵀX|`.
    pub normalize_data: bool,
    pub geometry: GeometrySection,
    pub simulation: SimulationSection,
    pub grid: GridSection,
    pub proposed: ProposedSection,
    pub mne: MneSection,
    pub mce: MceSection,
    pub l21: L21Section,
    pub solver: SolverSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub subdivisions: u32,
    pub radius_mm: f64,
    pub separation_mm: f64,
    pub n_sensors: usize,
    pub sensor_gap_mm: f64,
    /// Basis width; omitted means the mesh default.
    pub basis_rho_mm: Option<f64>,
    pub basis_neighbors: usize,
    pub normalize_lead_field: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_states: usize,
    pub samples_per_state: usize,
    pub sample_rate_hz: f64,
    pub patch_radius_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub snr_channel_db: Vec<f64>,
    /// `inf` means no source-space noise.
    pub snr_source_db: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposedSection {
    pub lambda: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Read `alpha` relative to the mean squared column norm of the initial
    /// ℓ1 solution.
    pub relative_alpha: bool,
    /// One run per value, with `gamma2 = gamma1`.
    pub gamma1: Vec<f64>,
    pub k: usize,
    pub max_outer_iter: usize,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MneSection {
    /// Tikhonov weight for MNE and sLORETA; omitted means `‖L‖²_F/N_c · 1e-2`.
    pub reg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MceSection {
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L21Section {
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            repetitions: 10,
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            output_dir: PathBuf::from("results"),
            normalize_data: true,
            geometry: GeometrySection::default(),
            simulation: SimulationSection::default(),
            grid: GridSection::default(),
            proposed: ProposedSection::default(),
            mne: MneSection::default(),
            mce: MceSection::default(),
            l21: L21Section::default(),
            solver: SolverSection::default(),
        }
    }
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = GeometryConfig::default();
        GeometrySection {
            subdivisions: g.subdivisions,
            radius_mm: g.radius,
            separation_mm: g.separation,
            n_sensors: g.n_sensors,
            sensor_gap_mm: g.sensor_gap,
            basis_rho_mm: g.basis_rho,
            basis_neighbors: g.basis_neighbors,
            normalize_lead_field: g.normalize_lead_field,
        }
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        let s = SimulationConfig::default();
        SimulationSection {
            n_states: s.n_states,
            samples_per_state: s.samples_per_state,
            sample_rate_hz: s.sample_rate_hz,
            patch_radius_mm: s.patch_radius,
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            snr_channel_db: CHANNEL_SNR_GRID.to_vec(),
            snr_source_db: SOURCE_SNR_GRID.to_vec(),
        }
    }
}

impl Default for ProposedSection {
    fn default() -> Self {
        let h = Hyperparams::default();
        ProposedSection {
            lambda: h.lambda,
            beta: h.beta,
            alpha: h.alpha,
            relative_alpha: true,
            gamma1: vec![h.gamma1],
            k: h.k,
            max_outer_iter: h.max_outer_iter,
            outer_tol: h.outer_tol,
            inner_tol: h.inner.tol,
            inner_max_iter: h.inner.max_iter,
        }
    }
}

impl Default for MceSection {
    fn default() -> Self {
        MceSection {
            gamma: hgesi::baselines::DEFAULT_MCE_PENALTY,
        }
    }
}

impl Default for L21Section {
    fn default() -> Self {
        L21Section {
            mu: hgesi::baselines::DEFAULT_L21_PENALTY,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: hgesi::solvers::DEFAULT_TOL,
            max_iter: hgesi::solvers::STANDALONE_MAX_ITER,
        }
    }
}

/// One configured estimator: a method plus, for the proposed method, the
/// `γ1` it runs with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    pub gamma1: Option<f64>,
    /// Whether several `γ1` values are configured, so the label must carry it.
    pub tagged: bool,
}

impl MethodRun {
    /// Name used in CSV rows and output directories.
    pub fn label(&self) -> String {
        match (self.gamma1, self.tagged) {
            (Some(g), true) => format!("{}@gamma1={g}", self.method),
            _ => self.method.to_string(),
        }
    }
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_err(field, format!("must be a positive number, got {v}")))
    }
}

fn at_least_one(field: &str, v: usize) -> Result<(), CliError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(field_err(field, "must be at least 1"))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The file at `path`, or the defaults when no path is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("validated config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seed > i64::MAX as u64 {
            return Err(field_err("seed", format!("must be at most {}", i64::MAX)));
        }
        at_least_one("repetitions", self.repetitions)?;
        if self.methods.is_empty() {
            return Err(field_err("methods", "must name at least one method"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            m.parse::<Method>().map_err(|_| {
                field_err(
                    &format!("methods[{i}]"),
                    format!("unknown method {m:?}; expected one of proposed, mne, sloreta, mce, l21"),
                )
            })?;
            if self.methods[..i].contains(m) {
                return Err(field_err(&format!("methods[{i}]"), format!("{m:?} listed twice")));
            }
        }

        let g = &self.geometry;
        positive("geometry.radius_mm", g.radius_mm)?;
        if !(g.separation_mm > 2.0 * g.radius_mm) || !g.separation_mm.is_finite() {
            return Err(field_err(
                "geometry.separation_mm",
                format!("must exceed twice the radius, got {}", g.separation_mm),
            ));
        }
        at_least_one("geometry.n_sensors", g.n_sensors)?;
        positive("geometry.sensor_gap_mm", g.sensor_gap_mm)?;
        if let Some(rho) = g.basis_rho_mm {
            positive("geometry.basis_rho_mm", rho)?;
        }
        at_least_one("geometry.basis_neighbors", g.basis_neighbors)?;
        if g.subdivisions > 6 {
            return Err(field_err("geometry.subdivisions", "must be at most 6"));
        }

        let s = &self.simulation;
        at_least_one("simulation.n_states", s.n_states)?;
        at_least_one("simulation.samples_per_state", s.samples_per_state)?;
        positive("simulation.sample_rate_hz", s.sample_rate_hz)?;
        if !(s.patch_radius_mm >= 0.0 && s.patch_radius_mm.is_finite()) {
            return Err(field_err(
                "simulation.patch_radius_mm",
                format!("must be a non-negative number, got {}", s.patch_radius_mm),
            ));
        }

        for (name, values) in [
            ("grid.snr_channel_db", &self.grid.snr_channel_db),
            ("grid.snr_source_db", &self.grid.snr_source_db),
        ] {
            if values.is_empty() {
                return Err(field_err(name, "must list at least one value"));
            }
            for (i, v) in values.iter().enumerate() {
                if v.is_nan() || *v == f64::NEG_INFINITY {
                    return Err(field_err(&format!("{name}[{i}]"), format!("must be a number or inf, got {v}")));
                }
            }
        }

        let p = &self.proposed;
        positive("proposed.lambda", p.lambda)?;
        positive("proposed.beta", p.beta)?;
        positive("proposed.alpha", p.alpha)?;
        if p.gamma1.is_empty() {
            return Err(field_err("proposed.gamma1", "must list at least one value"));
        }
        for (i, v) in p.gamma1.iter().enumerate() {
            positive(&format!("proposed.gamma1[{i}]"), *v)?;
        }
        at_least_one("proposed.k", p.k)?;
        if p.k > self.n_times() {
            return Err(field_err(
                "proposed.k",
                format!("must not exceed the {} samples per record", self.n_times()),
            ));
        }
        positive("proposed.outer_tol", p.outer_tol)?;
        positive("proposed.inner_tol", p.inner_tol)?;
        at_least_one("proposed.inner_max_iter", p.inner_max_iter)?;

        if let Some(r) = self.mne.reg {
            positive("mne.reg", r)?;
        }
        positive("mce.gamma", self.mce.gamma)?;
        positive("l21.mu", self.l21.mu)?;
        positive("solver.tol", self.solver.tol)?;
        at_least_one("solver.max_iter", self.solver.max_iter)?;
        Ok(())
    }

    pub fn n_times(&self) -> usize {
        self.simulation.n_states * self.simulation.samples_per_state
    }

    /// Replace the method list from a comma-separated string.
    pub fn set_methods(&mut self, list: &str) -> Result<(), CliError> {
        self.methods = list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        self.validate().map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("--methods: {m}")),
            other => other,
        })
    }

    pub fn geometry_config(&self) -> GeometryConfig {
        let g = &self.geometry;
        GeometryConfig {
            subdivisions: g.subdivisions,
            radius: g.radius_mm,
            separation: g.separation_mm,
            n_sensors: g.n_sensors,
            sensor_gap: g.sensor_gap_mm,
            basis_rho: g.basis_rho_mm,
            basis_neighbors: g.basis_neighbors,
            normalize_lead_field: g.normalize_lead_field,
        }
    }

    pub fn simulation_config(&self, snr_channel_db: f64, snr_source_db: f64, seed: u64) -> SimulationConfig {
        let s = &self.simulation;
        SimulationConfig {
            n_states: s.n_states,
            samples_per_state: s.samples_per_state,
            sample_rate_hz: s.sample_rate_hz,
            snr_channel_db,
            snr_source_db,
            patch_radius: s.patch_radius_mm,
            seed,
        }
    }

    /// Solver parameters for one run; `seed` drives the landmark k-means.
    pub fn method_params(&self, gamma1: Option<f64>, seed: u64) -> MethodParams {
        let p = &self.proposed;
        let g = gamma1.unwrap_or(p.gamma1[0]);
        MethodParams {
            hyper: Hyperparams {
                lambda: p.lambda,
                beta: p.beta,
                alpha: p.alpha,
                gamma1: g,
                gamma2: g,
                k: p.k,
                max_outer_iter: p.max_outer_iter,
                outer_tol: p.outer_tol,
                inner: SolverOptions::new(p.inner_tol, p.inner_max_iter),
                seed,
            },
            mne_reg: self.mne.reg,
            mce_gamma: self.mce.gamma,
            l21_mu: self.l21.mu,
            baseline_solver: SolverOptions::new(self.solver.tol, self.solver.max_iter),
            normalize_data: self.normalize_data,
            relative_alpha: p.relative_alpha,
        }
    }

    /// Configured estimators in method-list order, the proposed method
    /// expanded over its `γ1` values.
    pub fn method_runs(&self) -> Vec<MethodRun> {
        let tagged = self.proposed.gamma1.len() > 1;
        let mut out = Vec::new();
        for name in &self.methods {
            let method: Method = name.parse().expect("validated method name");
            match method {
                Method::Proposed => out.extend(self.proposed.gamma1.iter().map(|&g| MethodRun {
                    method,
                    gamma1: Some(g),
                    tagged,
                })),
                _ => out.push(MethodRun {
                    method,
                    gamma1: None,
                    tagged: false,
                }),
            }
        }
        out
    }
}
