//! Desk-scale experiment plumbing: the two-hemisphere geometry with its lead
//! fields and basis, and a uniform entry point for every inverse method.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::baselines::{
    default_regularization, l21_solve, mce_solve, mne_solve, sloreta_solve, BaselineMethod,
    DEFAULT_L21_PENALTY, DEFAULT_MCE_PENALTY,
};
use crate::error::{Error, Result};
use crate::forward::{compose_with_basis, synth_lead_field, LeadField, SensorArray};
use crate::mesh::{build_spatial_basis, build_two_hemisphere_mesh, GeodesicTable, SpatialBasis, TriangleMesh};
use crate::metrics::{evaluate, MetricReport};
use crate::model::{fit_from, l1_inverse, to_source_space, Hyperparams, ModelState};
use crate::sim::GroundTruth;
use crate::solvers::{SolverOptions, DEFAULT_TOL, STANDALONE_MAX_ITER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Proposed,
    Baseline(BaselineMethod),
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Proposed,
        Method::Baseline(BaselineMethod::Mne),
        Method::Baseline(BaselineMethod::Sloreta),
        Method::Baseline(BaselineMethod::Mce),
        Method::Baseline(BaselineMethod::L21),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline(b) => b.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "proposed" {
            return Ok(Method::Proposed);
        }
        s.parse::<BaselineMethod>()
            .map(Method::Baseline)
            .map_err(|_| Error::invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryConfig {
    pub subdivisions: u32,
    /// Hemisphere sphere radius, mm.
    pub radius: f64,
    /// Distance between hemisphere centers, mm.
    pub separation: f64,
    pub n_sensors: usize,
    /// Clearance between the hemispheres' bounding sphere and the sensors, mm.
    pub sensor_gap: f64,
    /// Gaussian width ϱ of the spatial basis; `None` uses the mesh default.
    pub basis_rho: Option<f64>,
    pub basis_neighbors: usize,
    /// Rescale the lead field to unit mean column norm.
    pub normalize_lead_field: bool,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            subdivisions: 2,
            radius: 35.0,
            separation: 80.0,
            n_sensors: 32,
            sensor_gap: 20.0,
            basis_rho: None,
            basis_neighbors: crate::mesh::DEFAULT_NEIGHBORHOOD,
            normalize_lead_field: true,
        }
    }
}

/// Everything the solvers and metrics need about one head model.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub mesh: TriangleMesh,
    pub table: GeodesicTable,
    pub sensors: SensorArray,
    /// Physical lead field `L`.
    pub lead: LeadField,
    /// `L·Ψ`.
    pub composed: LeadField,
    pub basis: SpatialBasis,
    /// Factor applied to the raw dipole lead field (1 when not normalized).
    pub lead_scale: f64,
}

impl Geometry {
    pub fn build(cfg: &GeometryConfig) -> Result<Self> {
        let mesh = build_two_hemisphere_mesh(cfg.subdivisions, cfg.radius, cfg.separation)?;
        let sensors = SensorArray::enclosing(cfg.n_sensors, cfg.radius, cfg.separation, cfg.sensor_gap)?;
        let raw = synth_lead_field(&sensors, &mesh)?;
        let rho = cfg.basis_rho.unwrap_or_else(|| crate::mesh::default_rho(&mesh));
        let basis = build_spatial_basis(&mesh, rho, cfg.basis_neighbors)?;
        Geometry::from_parts(mesh, sensors, raw, basis, cfg.normalize_lead_field)
    }

    pub fn from_parts(
        mesh: TriangleMesh,
        sensors: SensorArray,
        lead: LeadField,
        basis: SpatialBasis,
        normalize: bool,
    ) -> Result<Self> {
        if lead.composed_with_basis() {
            return Err(Error::invalid("geometry needs the physical lead field"));
        }
        if lead.n_sources() != mesh.n_vertices() {
            return Err(Error::dim(format!(
                "lead field has {} sources, mesh has {} vertices",
                lead.n_sources(),
                mesh.n_vertices()
            )));
        }
        let (lead, lead_scale) = if normalize { lead.normalized()? } else { (lead, 1.0) };
        let composed = compose_with_basis(&lead, &basis)?;
        let table = mesh.geodesic_table();
        Ok(Geometry {
            mesh,
            table,
            sensors,
            lead,
            composed,
            basis,
            lead_scale,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodParams {
    pub hyper: Hyperparams,
    /// `None` selects the scale-aware default.
    pub mne_reg: Option<f64>,
    pub mce_gamma: f64,
    pub l21_mu: f64,
    pub baseline_solver: SolverOptions,
    /// Solve on `κX` with `κ = 1/max|(LΨ)ᵀX|` and map estimates back by
    /// `1/κ`, so penalties are relative to the data and estimates follow the
    /// units of `X`.
    pub normalize_data: bool,
    /// Read `hyper.alpha` relative to the mean squared column norm of the
    /// initial ℓ1 solution rather than as an absolute bandwidth.
    pub relative_alpha: bool,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            hyper: Hyperparams::default(),
            mne_reg: None,
            mce_gamma: DEFAULT_MCE_PENALTY,
            l21_mu: DEFAULT_L21_PENALTY,
            baseline_solver: SolverOptions::new(DEFAULT_TOL, STANDALONE_MAX_ITER),
            normalize_data: true,
            relative_alpha: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub method: Method,
    /// Physical-space sources `Ŝ`.
    pub s_hat: DMatrix<f64>,
    /// Present for the proposed method.
    pub model: Option<ModelState>,
    /// Factor the data were multiplied by before solving.
    pub data_scale: f64,
    /// Bandwidth actually used by the proposed method.
    pub alpha: Option<f64>,
    /// Some inner solve stopped short of its tolerance.
    pub solver_warning: bool,
}

/// `1/max_{j,i} |l̃_jᵀx_i|`; with data scaled by it, `γ = 2` is the smallest
/// ℓ1 weight whose solution is all zero. One for all-zero data.
pub fn data_scale(composed: &LeadField, x: &DMatrix<f64>) -> f64 {
    let m = composed.matrix().tr_mul(x).amax();
    if m > 0.0 {
        1.0 / m
    } else {
        1.0
    }
}

pub fn estimate(method: Method, geo: &Geometry, x: &DMatrix<f64>, p: &MethodParams) -> Result<Estimate> {
    if x.nrows() != geo.lead.n_sensors() {
        return Err(Error::dim(format!(
            "data have {} channels, lead field {}",
            x.nrows(),
            geo.lead.n_sensors()
        )));
    }
    let kappa = if p.normalize_data { data_scale(&geo.composed, x) } else { 1.0 };
    let scaled;
    let x = if kappa != 1.0 {
        scaled = x * kappa;
        &scaled
    } else {
        x
    };
    let mut est = estimate_raw(method, geo, x, p)?;
    if kappa != 1.0 {
        est.s_hat /= kappa;
    }
    est.data_scale = kappa;
    Ok(est)
}

fn estimate_raw(method: Method, geo: &Geometry, x: &DMatrix<f64>, p: &MethodParams) -> Result<Estimate> {
    let l = geo.lead.matrix();
    let reg = || p.mne_reg.unwrap_or_else(|| default_regularization(l));
    let mut alpha = None;
    let (s_hat, model, warn) = match method {
        Method::Proposed => {
            let mut hp = p.hyper.clone();
            hp.validate(x.ncols())?;
            let (s0, init) = l1_inverse(geo.composed.matrix(), x, hp.gamma1, &hp.inner)?;
            if p.relative_alpha {
                let m = mean_squared_column_norm(&s0);
                if m > 0.0 {
                    hp.alpha *= m;
                }
            }
            alpha = Some(hp.alpha);
            let st = fit_from(x, &geo.composed, &hp, s0)?;
            let s = to_source_space(&st, &geo.basis)?;
            let w = st.inner_warning || !init.all_converged;
            (s, Some(st), w)
        }
        Method::Baseline(BaselineMethod::Mne) => (mne_solve(l, x, reg())?, None, false),
        Method::Baseline(BaselineMethod::Sloreta) => (sloreta_solve(l, x, reg())?, None, false),
        Method::Baseline(BaselineMethod::Mce) => {
            let (s, st) = mce_solve(&geo.composed, &geo.basis, x, p.mce_gamma, &p.baseline_solver)?;
            (s, None, !st.all_converged)
        }
        Method::Baseline(BaselineMethod::L21) => {
            let (s, _, rep) = l21_solve(&geo.composed, &geo.basis, x, p.l21_mu, &p.baseline_solver)?;
            (s, None, !rep.converged)
        }
    };
    if warn {
        log::warn!("{method}: solver stopped before reaching tolerance");
    }
    Ok(Estimate {
        method,
        s_hat,
        model,
        data_scale: 1.0,
        alpha,
        solver_warning: warn,
    })
}

/// `(1/N_t) Σ_i ‖s_i‖²`.
pub fn mean_squared_column_norm(s: &DMatrix<f64>) -> f64 {
    if s.ncols() == 0 {
        return 0.0;
    }
    s.norm_squared() / s.ncols() as f64
}

pub fn score(geo: &Geometry, x: &DMatrix<f64>, est: &Estimate, truth: &GroundTruth) -> Result<MetricReport> {
    evaluate(&geo.mesh, &geo.table, x, geo.lead.matrix(), &est.s_hat, truth)
}
