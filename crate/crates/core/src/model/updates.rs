//! Source and landmark block updates. Both reduce to independent ℓ1
//! problems sharing one quadratic form.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::solvers::{Gram, L1QuadSolver, SolverOptions};

use super::objective::Assignment;
use super::tree::TreeGraph;
use super::Hyperparams;

/// Aggregate of the inner solver reports of one block update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InnerStats {
    pub solves: usize,
    pub max_kkt: f64,
    pub max_iterations: usize,
    pub all_converged: bool,
}

impl InnerStats {
    pub(crate) fn start() -> Self {
        InnerStats {
            all_converged: true,
            ..Default::default()
        }
    }

    fn record(&mut self, rep: &crate::solvers::SolverReport) {
        self.solves += 1;
        self.max_kkt = self.max_kkt.max(rep.kkt_residual);
        self.max_iterations = self.max_iterations.max(rep.iterations);
        self.all_converged &= rep.converged;
    }

    pub fn merge(&mut self, other: &InnerStats) {
        self.solves += other.solves;
        self.max_kkt = self.max_kkt.max(other.max_kkt);
        self.max_iterations = self.max_iterations.max(other.max_iterations);
        self.all_converged &= other.all_converged;
    }
}

/// Per-column ℓ1 inverse solve `min ‖x_i − L s‖² + γ‖s‖₁`, each started from
/// the regularization path.
pub fn l1_inverse(
    l: &DMatrix<f64>,
    x: &DMatrix<f64>,
    gamma: f64,
    opts: &SolverOptions,
) -> Result<(DMatrix<f64>, InnerStats)> {
    if l.nrows() != x.nrows() {
        return Err(Error::dim(format!(
            "L has {} rows, X has {}",
            l.nrows(),
            x.nrows()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    let solver = L1QuadSolver::for_design(l);
    let b_all = l.tr_mul(x);
    let mut s = DMatrix::zeros(l.ncols(), x.ncols());
    let mut stats = InnerStats::start();
    for i in 0..x.ncols() {
        let b = b_all.column(i).into_owned();
        let (col, rep) = solver.solve_cold(&b, gamma, x.column(i).norm_squared(), opts);
        stats.record(&rep);
        s.set_column(i, &col);
    }
    Ok((s, stats))
}

/// Cached pieces of the source update that do not change across outer
/// iterations: the quadratic form `LᵀL + λI` and `LᵀX`.
#[derive(Clone, Debug)]
pub struct SourceUpdate {
    solver: L1QuadSolver,
    lt_x: DMatrix<f64>,
    lambda: f64,
}

impl SourceUpdate {
    pub fn new(x: &DMatrix<f64>, l: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if l.nrows() != x.nrows() {
            return Err(Error::dim(format!(
                "L has {} rows, X has {}",
                l.nrows(),
                x.nrows()
            )));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        Ok(SourceUpdate {
            solver: L1QuadSolver::new(Gram::Factored {
                f: l.clone(),
                ridge: lambda,
            }),
            lt_x: l.tr_mul(x),
            lambda,
        })
    }

    /// Right-hand sides `b_i = Lᵀx_i + λ Σ_k r_ik c_k`, as columns.
    pub fn rhs(&self, c: &DMatrix<f64>, r: &Assignment) -> DMatrix<f64> {
        &self.lt_x + c * r.matrix().transpose() * self.lambda
    }

    /// Solve the `N_t` column problems `min sᵀ(LᵀL+λI)s − 2b_iᵀs + γ1‖s‖₁`,
    /// each warm started from the matching column of `warm`.
    pub fn solve(
        &self,
        c: &DMatrix<f64>,
        r: &Assignment,
        gamma1: f64,
        warm: Option<&DMatrix<f64>>,
        opts: &SolverOptions,
    ) -> Result<(DMatrix<f64>, InnerStats)> {
        let ns = self.solver.dim();
        let nt = self.lt_x.ncols();
        if c.nrows() != ns || r.n_times() != nt || r.n_landmarks() != c.ncols() {
            return Err(Error::dim(format!(
                "C {:?} and R {}x{} do not match {ns} sources / {nt} samples",
                c.shape(),
                r.n_times(),
                r.n_landmarks()
            )));
        }
        let b_all = self.rhs(c, r);
        let mut s = DMatrix::zeros(ns, nt);
        let mut stats = InnerStats::start();
        for i in 0..nt {
            let b = b_all.column(i).into_owned();
            let x0 = warm.map(|w| w.column(i).into_owned());
            let (col, rep) = self.solver.solve(&b, gamma1, x0.as_ref(), 0.0, opts);
            stats.record(&rep);
            s.set_column(i, &col);
        }
        Ok((s, stats))
    }
}

/// The source subproblem in least-squares form: `U` with `UᵀU = LᵀL + λI`
/// (upper Cholesky factor) and `Y = U⁻ᵀ(LᵀX + λ C Rᵀ)`, so column `i` solves
/// `min ‖U s − y_i‖² + γ1‖s‖₁`.
pub fn source_subproblem_system(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &Assignment,
    lambda: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let ns = l.ncols();
    let mut q = l.tr_mul(l);
    for d in 0..ns {
        q[(d, d)] += lambda;
    }
    let chol = q
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("LᵀL + λI".into()))?;
    let lower = chol.l();
    let b = l.tr_mul(x) + c * r.matrix().transpose() * lambda;
    let y = lower
        .solve_lower_triangular(&b)
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    Ok((lower.transpose(), y))
}

pub fn update_s(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &Assignment,
    hp: &Hyperparams,
    warm: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, InnerStats)> {
    SourceUpdate::new(x, l, hp.lambda)?.solve(c, r, hp.gamma1, warm, &hp.inner)
}

/// `βP + λΛ` with `P` the tree Laplacian and `Λ = diag(1ᵀR)`.
pub fn landmark_system_matrix(
    r: &Assignment,
    g: &TreeGraph,
    beta: f64,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    let k = r.n_landmarks();
    if g.n_vertices() != k {
        return Err(Error::dim(format!(
            "tree has {} vertices, R has {k} landmarks",
            g.n_vertices()
        )));
    }
    let sums = r.column_sums();
    if let Some((j, v)) = sums.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::invalid(format!(
            "landmark {j} has non-positive total assignment {v}"
        )));
    }
    let mut m = g.laplacian() * beta;
    for (j, v) in sums.iter().enumerate() {
        m[(j, j)] += lambda * v;
    }
    Ok(m)
}

/// The landmark subproblem in least-squares form: `Vᵀ` with `VVᵀ = βP + λΛ`
/// and `Y = λ V⁻¹ Rᵀ Sᵀ`, so column `l` of `Y` gives row `l` of `C` through
/// `min ‖Vᵀ f − y_l‖² + γ2‖f‖₁`.
pub fn landmark_subproblem_system(
    s: &DMatrix<f64>,
    r: &Assignment,
    g: &TreeGraph,
    beta: f64,
    lambda: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = landmark_system_matrix(r, g, beta, lambda)?;
    let v = m
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("βP + λΛ".into()))?
        .l();
    let rhs = r.matrix().tr_mul(&s.transpose()) * lambda;
    let y = v
        .solve_lower_triangular(&rhs)
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    Ok((v.transpose(), y))
}

/// Landmark update: one `K`-dimensional ℓ1 problem per source row, all
/// sharing the form `βP + λΛ`.
pub fn update_c(
    s: &DMatrix<f64>,
    r: &Assignment,
    g: &TreeGraph,
    hp: &Hyperparams,
    warm: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, InnerStats)> {
    if r.n_times() != s.ncols() {
        return Err(Error::dim(format!(
            "R has {} rows, S has {} columns",
            r.n_times(),
            s.ncols()
        )));
    }
    let m = landmark_system_matrix(r, g, hp.beta, hp.lambda)?;
    // positive definiteness is the precondition on R and G
    if m.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("βP + λΛ".into()));
    }
    let k = r.n_landmarks();
    let ns = s.nrows();
    let solver = L1QuadSolver::new(Gram::Explicit(m));
    // row l of λ S R is the linear term of row l of C
    let b_all = (s * r.matrix()) * hp.lambda;
    let mut c = DMatrix::zeros(ns, k);
    let mut stats = InnerStats::start();
    for row in 0..ns {
        let b = b_all.row(row).transpose();
        let x0 = warm.map(|w| w.row(row).transpose());
        let (f, rep) = solver.solve(&b, hp.gamma2, x0.as_ref(), 0.0, &hp.inner);
        stats.record(&rep);
        c.set_row(row, &f.transpose());
    }
    Ok((c, stats))
}
