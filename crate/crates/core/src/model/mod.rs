//! Joint estimation of sources, landmarks, landmark tree and assignments.
//!
//! The objective is
//!
//! ```text
//! h(S,C,G,R) = ‖X − LS‖²_F + (β/2) Σ_{k,k'} g_kk' ‖c_k − c_k'‖²
//!            + λ Σ_i Σ_k [r_ik ‖s_i − c_k‖² + α r_ik log r_ik]
//!            + γ1 Σ_i ‖s_i‖₁ + γ2 Σ_k ‖c_k‖₁
//! ```
//!
//! with `G` restricted to spanning trees and each row of `R` on the simplex.
//! [`fit`] minimizes it block by block (S, C, G, R), each block exactly, so
//! the recorded objective never increases.

mod kmeans;
mod objective;
mod pca;
mod tree;
mod updates;

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forward::LeadField;
use crate::mesh::SpatialBasis;
use crate::solvers::SolverOptions;

pub use kmeans::{kmeans_init, KMEANS_MAX_ITER};
pub use objective::{
    denoised_signal, kde_energy, kde_objective, objective_h, objective_terms, squared_distances,
    update_r, Assignment, ObjectiveTerms, ASSIGNMENT_FLOOR,
};
pub use pca::{project_tree_pca, TreeProjection};
pub use tree::{update_g, TreeGraph, UnionFind};
pub use updates::{
    l1_inverse, landmark_subproblem_system, landmark_system_matrix, source_subproblem_system,
    update_c, update_s, InnerStats, SourceUpdate,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub lambda: f64,
    pub beta: f64,
    /// Assignment temperature, `2σ²` of the landmark kernel.
    pub alpha: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Landmark count.
    pub k: usize,
    pub max_outer_iter: usize,
    /// Relative objective change that stops the outer loop.
    pub outer_tol: f64,
    pub inner: SolverOptions,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 3.0,
            beta: 3.0,
            alpha: 0.01,
            gamma1: 0.01,
            gamma2: 0.01,
            k: 20,
            max_outer_iter: 100,
            outer_tol: 1e-6,
            inner: SolverOptions::default(),
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self, n_times: usize) -> Result<()> {
        let pos = [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("alpha", self.alpha),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("outer_tol", self.outer_tol),
            ("inner.tol", self.inner.tol),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k == 0 || self.k > n_times {
            return Err(Error::invalid(format!(
                "landmark count {} must be in 1..={n_times}",
                self.k
            )));
        }
        Ok(())
    }
}

/// Output of [`fit`].
#[derive(Clone, Debug)]
pub struct ModelState {
    /// `N_s x N_t` sources, in the coordinates of the lead field used to fit.
    pub s: DMatrix<f64>,
    /// `N_s x K` landmarks.
    pub c: DMatrix<f64>,
    pub g: TreeGraph,
    pub r: Assignment,
    /// `h` at initialization followed by `h` after each outer cycle.
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Set when any inner ℓ1 solve stopped before reaching its tolerance.
    pub inner_warning: bool,
    pub max_inner_kkt: f64,
    /// Whether the lead field passed to [`fit`] was `L·Ψ`.
    pub basis_composed: bool,
}

impl ModelState {
    pub fn n_landmarks(&self) -> usize {
        self.c.ncols()
    }
}

/// Run alternating convex search on a lead field.
pub fn fit(x: &DMatrix<f64>, lead: &LeadField, hp: &Hyperparams) -> Result<ModelState> {
    let mut st = fit_matrix(x, lead.matrix(), hp)?;
    st.basis_composed = lead.composed_with_basis();
    Ok(st)
}

/// [`fit`] with the initial ℓ1 solution `s0` supplied by the caller, e.g. one
/// already computed by [`l1_inverse`] with the same `γ1`.
pub fn fit_from(
    x: &DMatrix<f64>,
    lead: &LeadField,
    hp: &Hyperparams,
    s0: DMatrix<f64>,
) -> Result<ModelState> {
    let mut st = fit_matrix_from(x, lead.matrix(), hp, s0, InnerStats::start())?;
    st.basis_composed = lead.composed_with_basis();
    Ok(st)
}

/// [`fit`] on a bare matrix.
///
/// Initialization: an ℓ1 inverse solve for `S`, k-means on its columns for
/// `C`, the spanning tree of `C`, and closed-form `R`. Then S → C → G → R
/// cycles until the relative objective change drops below `outer_tol`.
pub fn fit_matrix(x: &DMatrix<f64>, l: &DMatrix<f64>, hp: &Hyperparams) -> Result<ModelState> {
    if l.nrows() != x.nrows() {
        return Err(Error::dim(format!(
            "L has {} rows, X has {}",
            l.nrows(),
            x.nrows()
        )));
    }
    hp.validate(x.ncols())?;
    let (s0, init_stats) = l1_inverse(l, x, hp.gamma1, &hp.inner)?;
    fit_matrix_from(x, l, hp, s0, init_stats)
}

fn fit_matrix_from(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    hp: &Hyperparams,
    s0: DMatrix<f64>,
    init_stats: InnerStats,
) -> Result<ModelState> {
    if l.nrows() != x.nrows() || s0.shape() != (l.ncols(), x.ncols()) {
        return Err(Error::dim(format!(
            "L {:?}, X {:?}, initial S {:?}",
            l.shape(),
            x.shape(),
            s0.shape()
        )));
    }
    hp.validate(x.ncols())?;
    let c0 = kmeans_init(&s0, hp.k, hp.seed)?;
    let g0 = update_g(&c0);
    let r0 = update_r(&s0, &c0, hp.alpha)?;
    let mut state = ModelState {
        s: s0,
        c: c0,
        g: g0,
        r: r0,
        objective_trace: Vec::new(),
        outer_iterations: 0,
        converged: false,
        inner_warning: !init_stats.all_converged,
        max_inner_kkt: init_stats.max_kkt,
        basis_composed: false,
    };
    let mut h = objective_h(&state, x, l, hp)?;
    state.objective_trace.push(h);

    let source = SourceUpdate::new(x, l, hp.lambda)?;
    for n in 1..=hp.max_outer_iter {
        let (s, st_s) = source.solve(&state.c, &state.r, hp.gamma1, Some(&state.s), &hp.inner)?;
        state.s = s;
        let (c, st_c) = update_c(&state.s, &state.r, &state.g, hp, Some(&state.c))?;
        state.c = c;
        state.g = update_g(&state.c);
        state.r = update_r(&state.s, &state.c, hp.alpha)?;

        let mut stats = st_s;
        stats.merge(&st_c);
        state.inner_warning |= !stats.all_converged;
        state.max_inner_kkt = state.max_inner_kkt.max(stats.max_kkt);
        state.outer_iterations = n;

        let h_new = objective_h(&state, x, l, hp)?;
        state.objective_trace.push(h_new);
        log::debug!("outer {n}: h = {h_new:.12e} (inner kkt {:.2e})", stats.max_kkt);
        if (h - h_new).abs() <= hp.outer_tol * (1.0 + h.abs()) {
            state.converged = true;
            break;
        }
        h = h_new;
    }
    if state.inner_warning {
        log::warn!(
            "some inner solves did not reach tol {:e} (max kkt {:e})",
            hp.inner.tol,
            state.max_inner_kkt
        );
    }
    Ok(state)
}

/// `Ψ·S`: maps a fit on `L·Ψ` back to physical sources.
pub fn to_source_space(state: &ModelState, basis: &SpatialBasis) -> Result<DMatrix<f64>> {
    if !state.basis_composed {
        return Err(Error::invalid(
            "model was fit on a lead field not composed with a spatial basis",
        ));
    }
    basis.apply(&state.s)
}

/// Write `S.txt`, `C.txt`, `R.txt`, `tree.txt` and `trace.csv` into `dir`.
pub fn save_state(dir: &Path, state: &ModelState, comments: &[String]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::io::save_matrix_with_comments(dir.join("S.txt"), &state.s, comments)?;
    crate::io::save_matrix_with_comments(dir.join("C.txt"), &state.c, comments)?;
    crate::io::save_matrix_with_comments(dir.join("R.txt"), state.r.matrix(), comments)?;
    let header: String = comments.iter().map(|c| format!("# {c}\n")).collect();
    let tree_path = dir.join("tree.txt");
    fs::write(&tree_path, format!("{header}{}", state.g.to_text()))
        .map_err(|e| Error::io(&tree_path, e))?;
    let mut trace = format!("{header}iteration,h\n");
    for (i, h) in state.objective_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{h}\n"));
    }
    let trace_path = dir.join("trace.csv");
    fs::write(&trace_path, trace).map_err(|e| Error::io(&trace_path, e))
}

/// Landmarks and tree from a directory written by [`save_state`].
pub fn load_landmarks(dir: &Path) -> Result<(DMatrix<f64>, TreeGraph)> {
    let c = crate::io::load_matrix(dir.join("C.txt"))?;
    let tree_path = dir.join("tree.txt");
    let text = fs::read_to_string(&tree_path).map_err(|e| Error::io(&tree_path, e))?;
    let g = TreeGraph::from_text(&text, &tree_path)?;
    if g.n_vertices() != c.ncols() {
        return Err(Error::dim(format!(
            "tree has {} vertices but C has {} landmarks",
            g.n_vertices(),
            c.ncols()
        )));
    }
    Ok((c, g))
}

/// Parse a `trace.csv` written by [`save_state`].
pub fn load_trace(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("iteration") {
            continue;
        }
        let v = line
            .split(',')
            .nth(1)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected `iteration,h`, found {line:?}"),
            })?;
        out.push(v);
    }
    Ok(out)
}
