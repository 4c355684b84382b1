//! Classical inverse solvers used as benchmarks: minimum norm (MNE),
//! standardized minimum norm (sLORETA), minimum current (MCE, ℓ1 on the
//! smoothed basis) and the ℓ21 mixed norm.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forward::LeadField;
use crate::mesh::SpatialBasis;
use crate::model::{l1_inverse, InnerStats};
use crate::solvers::{solve_group_l21_from, SolverOptions, SolverReport};

pub const DEFAULT_MCE_PENALTY: f64 = 0.01;
pub const DEFAULT_L21_PENALTY: f64 = 0.05;
/// Relative Tikhonov level for MNE/sLORETA: `reg = trace(LLᵀ)/N_c · 1e-2`.
pub const DEFAULT_REG_FRACTION: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaselineMethod {
    Mne,
    Sloreta,
    Mce,
    L21,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 4] = [
        BaselineMethod::Mne,
        BaselineMethod::Sloreta,
        BaselineMethod::Mce,
        BaselineMethod::L21,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Mne => "mne",
            BaselineMethod::Sloreta => "sloreta",
            BaselineMethod::Mce => "mce",
            BaselineMethod::L21 => "l21",
        }
    }

    /// MCE and ℓ21 work on `L·Ψ`; MNE and sLORETA on the raw lead field.
    pub fn uses_basis(self) -> bool {
        matches!(self, BaselineMethod::Mce | BaselineMethod::L21)
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown baseline method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Tikhonov level for MNE/sLORETA (`None` = scale-aware default), ℓ1
    /// weight for MCE, row-norm weight for ℓ21.
    pub penalty: Option<f64>,
    pub solver: SolverOptions,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod) -> Self {
        let penalty = match method {
            BaselineMethod::Mne | BaselineMethod::Sloreta => None,
            BaselineMethod::Mce => Some(DEFAULT_MCE_PENALTY),
            BaselineMethod::L21 => Some(DEFAULT_L21_PENALTY),
        };
        BaselineConfig {
            method,
            penalty,
            solver: SolverOptions::new(crate::solvers::DEFAULT_TOL, crate::solvers::STANDALONE_MAX_ITER),
        }
    }
}

/// `trace(LLᵀ)/N_c · 1e-2`.
pub fn default_regularization(l: &DMatrix<f64>) -> f64 {
    l.norm_squared() / l.nrows() as f64 * DEFAULT_REG_FRACTION
}

fn check_lx(l: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<()> {
    if l.nrows() != x.nrows() {
        return Err(Error::dim(format!(
            "lead field has {} sensors, data has {}",
            l.nrows(),
            x.nrows()
        )));
    }
    Ok(())
}

/// `M = Lᵀ(LLᵀ + reg·I)⁻¹` through a Cholesky factorization of the sensor
/// Gram matrix.
pub fn minimum_norm_operator(l: &DMatrix<f64>, reg: f64) -> Result<DMatrix<f64>> {
    if !(reg > 0.0) {
        return Err(Error::invalid(format!(
            "regularization must be positive, got {reg}"
        )));
    }
    let nc = l.nrows();
    let mut gram = l * l.transpose();
    for d in 0..nc {
        gram[(d, d)] += reg;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("LLᵀ + reg·I".into()))?;
    // M = Lᵀ G⁻¹ = (G⁻¹ L)ᵀ since G is symmetric
    Ok(chol.solve(l).transpose())
}

pub fn mne_solve(l: &DMatrix<f64>, x: &DMatrix<f64>, reg: f64) -> Result<DMatrix<f64>> {
    check_lx(l, x)?;
    Ok(minimum_norm_operator(l, reg)? * x)
}

/// Minimum-norm estimate with each row divided by the square root of the
/// matching diagonal entry of the resolution matrix `M·L`.
pub fn sloreta_solve(l: &DMatrix<f64>, x: &DMatrix<f64>, reg: f64) -> Result<DMatrix<f64>> {
    check_lx(l, x)?;
    let m = minimum_norm_operator(l, reg)?;
    let mut s = &m * x;
    for j in 0..l.ncols() {
        let d = m.row(j).dot(&l.column(j).transpose());
        if !(d > 0.0) {
            return Err(Error::Degenerate(format!(
                "resolution diagonal at source {j} is {d}"
            )));
        }
        let inv = 1.0 / d.sqrt();
        for v in s.row_mut(j).iter_mut() {
            *v *= inv;
        }
    }
    Ok(s)
}

fn check_composed(lead: &LeadField, basis: &SpatialBasis) -> Result<()> {
    if !lead.composed_with_basis() {
        return Err(Error::invalid(
            "this solver expects a lead field composed with the spatial basis",
        ));
    }
    if lead.n_sources() != basis.dim() {
        return Err(Error::dim(format!(
            "lead field has {} sources, basis has dimension {}",
            lead.n_sources(),
            basis.dim()
        )));
    }
    Ok(())
}

/// Per-column `min ‖x_i − L̃ s̃_i‖² + γ‖s̃_i‖₁`, returned as `Ψ·S̃`.
pub fn mce_solve(
    lead: &LeadField,
    basis: &SpatialBasis,
    x: &DMatrix<f64>,
    gamma: f64,
    opts: &SolverOptions,
) -> Result<(DMatrix<f64>, InnerStats)> {
    check_composed(lead, basis)?;
    let (s, stats) = l1_inverse(lead.matrix(), x, gamma, opts)?;
    Ok((basis.apply(&s)?, stats))
}

/// `min ‖X − L̃S̃‖² + μ Σ_j ‖S̃_j,:‖₂`, returned as `Ψ·S̃`. Also returns the raw
/// `S̃` so callers can inspect its row support.
pub fn l21_solve(
    lead: &LeadField,
    basis: &SpatialBasis,
    x: &DMatrix<f64>,
    mu: f64,
    opts: &SolverOptions,
) -> Result<(DMatrix<f64>, DMatrix<f64>, SolverReport)> {
    check_composed(lead, basis)?;
    check_lx(lead.matrix(), x)?;
    let (s, rep) = solve_group_l21_from(lead.matrix(), x, mu, None, opts)?;
    Ok((basis.apply(&s)?, s, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{compose_with_basis, synth_lead_field, SensorArray};
    use crate::mesh::{build_two_hemisphere_mesh, default_spatial_basis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn desk() -> (LeadField, LeadField, SpatialBasis) {
        let mesh = build_two_hemisphere_mesh(1, 35.0, 80.0).unwrap();
        let sensors = SensorArray::enclosing(16, 35.0, 80.0, 20.0).unwrap();
        let (lead, _) = synth_lead_field(&sensors, &mesh).unwrap().normalized().unwrap();
        let basis = default_spatial_basis(&mesh).unwrap();
        let composed = compose_with_basis(&lead, &basis).unwrap();
        (lead, composed, basis)
    }

    #[test]
    fn mne_orthogonal_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = rand_mat(&mut rng, 5, 5).qr().q();
        let x = rand_mat(&mut rng, 5, 3);
        let s = mne_solve(&q, &x, 1e-12).unwrap();
        assert!((s - q.transpose() * &x).amax() < 1e-10);
        assert_eq!(mne_solve(&q, &DMatrix::zeros(5, 2), 0.1).unwrap(), DMatrix::zeros(5, 2));
        assert!(mne_solve(&q, &x, 0.0).is_err());
    }

    #[test]
    fn mne_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = rand_mat(&mut rng, 6, 15);
        let x = rand_mat(&mut rng, 6, 4);
        let reg = 0.3;
        let s = mne_solve(&l, &x, reg).unwrap();
        let mut a = l.tr_mul(&l);
        for d in 0..15 {
            a[(d, d)] += reg;
        }
        let oracle = a.cholesky().unwrap().solve(&l.tr_mul(&x));
        assert!((s - oracle).amax() < 1e-8);
    }

    #[test]
    fn sloreta_zero_and_linear() {
        let (lead, _, _) = desk();
        let l = lead.matrix();
        let reg = default_regularization(l);
        let z = sloreta_solve(l, &DMatrix::zeros(l.nrows(), 3), reg).unwrap();
        assert_eq!(z.amax(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_mat(&mut rng, l.nrows(), 4);
        let a = sloreta_solve(l, &x, reg).unwrap();
        let b = sloreta_solve(l, &(&x * 2.5), reg).unwrap();
        assert!((b - a * 2.5).amax() < 1e-10);
    }

    #[test]
    fn sloreta_degenerate_lead_field() {
        let mut l = DMatrix::from_element(3, 2, 1.0);
        l.column_mut(1).fill(0.0);
        assert!(matches!(
            sloreta_solve(&l, &DMatrix::zeros(3, 1), 0.1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn sparse_baselines_zero_data_and_flags() {
        let (lead, composed, basis) = desk();
        let x = DMatrix::zeros(lead.n_sensors(), 5);
        let opts = SolverOptions::default();
        let (s, _) = mce_solve(&composed, &basis, &x, 0.01, &opts).unwrap();
        assert_eq!(s.amax(), 0.0);
        let (s, _, _) = l21_solve(&composed, &basis, &x, 0.05, &opts).unwrap();
        assert_eq!(s.amax(), 0.0);
        assert!(mce_solve(&lead, &basis, &x, 0.01, &opts).is_err());
        assert!(l21_solve(&lead, &basis, &x, 0.05, &opts).is_err());
    }

    #[test]
    fn mce_kkt_certificates() {
        let (_, composed, basis) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut st = DMatrix::zeros(composed.n_sources(), 6);
        for i in 0..6 {
            let j = rng.random_range(0..st.nrows());
            st[(j, i)] = 1.0;
        }
        let x = composed.matrix() * &st;
        let (_, stats) = mce_solve(&composed, &basis, &x, 0.01, &SolverOptions::default()).unwrap();
        assert!(stats.all_converged);
        assert!(stats.max_kkt <= 1e-8);
    }

    #[test]
    fn l21_rows_are_group_sparse() {
        let (_, composed, basis) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_mat(&mut rng, composed.n_sensors(), 8);
        let (_, raw, rep) = l21_solve(&composed, &basis, &x, 0.5, &SolverOptions::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        let zero_rows = raw.row_iter().filter(|r| r.amax() == 0.0).count();
        assert!(zero_rows > 0);
        for r in raw.row_iter() {
            let nz = r.iter().filter(|&&v| v != 0.0).count();
            assert!(nz == 0 || nz == r.len());
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in BaselineMethod::ALL {
            assert_eq!(m.name().parse::<BaselineMethod>().unwrap(), m);
        }
        assert!("dspm".parse::<BaselineMethod>().is_err());
    }
}
