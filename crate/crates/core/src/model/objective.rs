//! Soft assignments, the KDE landmark term and the joint objective.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::{Hyperparams, ModelState};

/// Entries are floored here before renormalizing so every assignment stays
/// strictly positive.
pub const ASSIGNMENT_FLOOR: f64 = 1e-300;

/// `N_t x K` soft assignment matrix: positive entries, rows summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    r: DMatrix<f64>,
}

impl Assignment {
    pub fn new(r: DMatrix<f64>) -> Result<Self> {
        for (i, row) in r.row_iter().enumerate() {
            if let Some(v) = row.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "assignment row {i} has non-positive entry {v}"
                )));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "assignment row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Assignment { r })
    }

    pub fn uniform(nt: usize, k: usize) -> Self {
        Assignment {
            r: DMatrix::from_element(nt, k, 1.0 / k as f64),
        }
    }

    /// Point masses at `labels[i]`, with [`ASSIGNMENT_FLOOR`] elsewhere.
    pub fn hard(labels: &[usize], k: usize) -> Result<Self> {
        let mut r = DMatrix::from_element(labels.len(), k, ASSIGNMENT_FLOOR);
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::IndexOutOfRange { index: l, len: k });
            }
            r[(i, l)] = 1.0;
        }
        Ok(Assignment { r })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn n_times(&self) -> usize {
        self.r.nrows()
    }

    pub fn n_landmarks(&self) -> usize {
        self.r.ncols()
    }

    /// Total weight per landmark, `1ᵀR`.
    pub fn column_sums(&self) -> Vec<f64> {
        self.r.column_iter().map(|c| c.sum()).collect()
    }
}

/// `d[i, k] = ‖s_i − c_k‖²` for columns of `S` and `C`.
pub fn squared_distances(s: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(s.ncols(), c.ncols());
    for k in 0..c.ncols() {
        let ck = c.column(k);
        for i in 0..s.ncols() {
            d[(i, k)] = s
                .column(i)
                .iter()
                .zip(ck.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        }
    }
    d
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

fn check_sc(s: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    if s.nrows() != c.nrows() {
        return Err(Error::dim(format!(
            "S has {} rows, C has {}",
            s.nrows(),
            c.nrows()
        )));
    }
    if c.ncols() == 0 {
        return Err(Error::invalid("at least one landmark is required"));
    }
    Ok(())
}

/// Closed-form minimizer over the simplex:
/// `r_ik ∝ exp(−‖s_i − c_k‖²/α)`, computed with a max shift.
pub fn update_r(s: &DMatrix<f64>, c: &DMatrix<f64>, alpha: f64) -> Result<Assignment> {
    check_alpha(alpha)?;
    check_sc(s, c)?;
    let d = squared_distances(s, c);
    let k = c.ncols();
    let mut r = DMatrix::zeros(s.ncols(), k);
    for i in 0..s.ncols() {
        let dmin = d.row(i).min();
        let mut sum = 0.0;
        for j in 0..k {
            let v = (-(d[(i, j)] - dmin) / alpha).exp().max(ASSIGNMENT_FLOOR);
            r[(i, j)] = v;
            sum += v;
        }
        for j in 0..k {
            r[(i, j)] /= sum;
        }
    }
    Ok(Assignment { r })
}

/// `g(S, C, R) = Σ_i Σ_k r_ik (‖s_i − c_k‖² + α log r_ik)`.
pub fn kde_energy(s: &DMatrix<f64>, c: &DMatrix<f64>, r: &Assignment, alpha: f64) -> Result<f64> {
    check_sc(s, c)?;
    if r.n_times() != s.ncols() || r.n_landmarks() != c.ncols() {
        return Err(Error::dim(format!(
            "R is {}x{}, expected {}x{}",
            r.n_times(),
            r.n_landmarks(),
            s.ncols(),
            c.ncols()
        )));
    }
    let d = squared_distances(s, c);
    let rm = r.matrix();
    let mut acc = 0.0;
    for i in 0..d.nrows() {
        for k in 0..d.ncols() {
            let w = rm[(i, k)];
            acc += w * (d[(i, k)] + alpha * w.ln());
        }
    }
    Ok(acc)
}

/// `g̃(S, C) = −α Σ_i log Σ_k exp(−‖s_i − c_k‖²/α)`, the value of
/// [`kde_energy`] minimized over assignments.
pub fn kde_objective(s: &DMatrix<f64>, c: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_sc(s, c)?;
    let d = squared_distances(s, c);
    let mut acc = 0.0;
    for row in d.row_iter() {
        let dmin = row.min();
        let lse: f64 = row.iter().map(|&v| (-(v - dmin) / alpha).exp()).sum::<f64>().ln();
        acc += dmin - alpha * lse;
    }
    Ok(acc)
}

/// Landmark estimate of every time point: `s_i = Σ_k r_ik c_k`, i.e. `C Rᵀ`.
pub fn denoised_signal(r: &Assignment, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if r.n_landmarks() != c.ncols() {
        return Err(Error::dim(format!(
            "R has {} landmarks, C has {}",
            r.n_landmarks(),
            c.ncols()
        )));
    }
    Ok(c * r.matrix().transpose())
}

/// The individual terms of the joint objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    pub data: f64,
    pub tree: f64,
    pub kde: f64,
    pub sparsity_sources: f64,
    pub sparsity_landmarks: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.data + self.tree + self.kde + self.sparsity_sources + self.sparsity_landmarks
    }
}

pub fn objective_terms(
    state: &ModelState,
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    hp: &Hyperparams,
) -> Result<ObjectiveTerms> {
    let (s, c) = (&state.s, &state.c);
    if l.nrows() != x.nrows() || l.ncols() != s.nrows() || s.ncols() != x.ncols() {
        return Err(Error::dim(format!(
            "X {:?}, L {:?}, S {:?} are inconsistent",
            x.shape(),
            l.shape(),
            s.shape()
        )));
    }
    if state.g.n_vertices() != c.ncols() {
        return Err(Error::dim(format!(
            "tree has {} vertices, C has {} landmarks",
            state.g.n_vertices(),
            c.ncols()
        )));
    }
    for (i, row) in state.r.matrix().row_iter().enumerate() {
        let sum = row.sum();
        if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid(format!("R row {i} is not on the simplex")));
        }
    }
    Ok(ObjectiveTerms {
        data: (x - l * s).norm_squared(),
        tree: hp.beta * state.g.total_cost(c),
        kde: hp.lambda * kde_energy(s, c, &state.r, hp.alpha)?,
        sparsity_sources: hp.gamma1 * s.iter().map(|v| v.abs()).sum::<f64>(),
        sparsity_landmarks: hp.gamma2 * c.iter().map(|v| v.abs()).sum::<f64>(),
    })
}

/// `h(S, C, G, R)`. The tree indicator contributes nothing because `G` is a
/// [`super::TreeGraph`].
pub fn objective_h(
    state: &ModelState,
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    hp: &Hyperparams,
) -> Result<f64> {
    objective_terms(state, x, l, hp).map(|t| t.total())
}
