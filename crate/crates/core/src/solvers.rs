//! ℓ1- and ℓ21-regularized least squares with KKT certificates.
//!
//! Objectives use the `‖Ax − y‖²` convention (no ½), so the per-coordinate
//! soft threshold is `γ/2` for a unit diagonal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const STANDALONE_MAX_ITER: usize = 50_000;

#[derive(Clone, Debug)]
pub struct L1QuadProblem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub gamma: f64,
}

impl L1QuadProblem {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
        }
        if a.nrows() != y.len() {
            return Err(Error::dim(format!(
                "A has {} rows but y has length {}",
                a.nrows(),
                y.len()
            )));
        }
        Ok(L1QuadProblem { a, y, gamma })
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.y).norm_squared() + self.gamma * x.lp_norm(1)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub converged: bool,
    /// Objective after every sweep; only filled when requested.
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub track_objective: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            track_objective: false,
        }
    }
}

impl SolverOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        SolverOptions {
            tol,
            max_iter,
            track_objective: false,
        }
    }
}

/// Positive semidefinite quadratic form `Q` of an ℓ1 problem
/// `xᵀQx − 2bᵀx + c + γ‖x‖₁`.
#[derive(Clone, Debug)]
pub enum Gram {
    /// `Q` given directly.
    Explicit(DMatrix<f64>),
    /// `Q = FᵀF + ridge·I`, with `F` short and wide; coordinate updates then
    /// cost `O(rows(F))`.
    Factored { f: DMatrix<f64>, ridge: f64 },
}

impl Gram {
    pub fn dim(&self) -> usize {
        match self {
            Gram::Explicit(q) => q.ncols(),
            Gram::Factored { f, .. } => f.ncols(),
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        match self {
            Gram::Explicit(q) => (0..q.ncols()).map(|j| q[(j, j)]).collect(),
            Gram::Factored { f, ridge } => f
                .column_iter()
                .map(|c| c.norm_squared() + ridge)
                .collect(),
        }
    }

    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Gram::Explicit(q) => q * x,
            Gram::Factored { f, ridge } => f.tr_mul(&(f * x)) + x * *ridge,
        }
    }

    /// Solve `Q_AA z = rhs` on the index set `idx`; `None` when singular.
    fn solve_restricted(&self, idx: &[usize], rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let na = idx.len();
        match self {
            Gram::Explicit(q) => {
                let sub = DMatrix::from_fn(na, na, |a, b| q[(idx[a], idx[b])]);
                sub.cholesky().map(|c| c.solve(rhs))
            }
            Gram::Factored { f, ridge } => {
                if *ridge <= 0.0 && na > f.nrows() {
                    return None;
                }
                let fa = f.select_columns(idx);
                if na <= fa.nrows() || *ridge <= 0.0 {
                    let mut sub = fa.tr_mul(&fa);
                    for d in 0..na {
                        sub[(d, d)] += ridge;
                    }
                    sub.cholesky().map(|c| c.solve(rhs))
                } else {
                    // (rI + FᵀF)⁻¹v = (v − Fᵀ(rI + FFᵀ)⁻¹Fv)/r
                    let mut small = &fa * fa.transpose();
                    for d in 0..small.nrows() {
                        small[(d, d)] += ridge;
                    }
                    let chol = small.cholesky()?;
                    let t = chol.solve(&(&fa * rhs));
                    Some((rhs - fa.tr_mul(&t)) / *ridge)
                }
            }
        }
    }
}

/// Prepared ℓ1 solver for a fixed quadratic form; reuse across right-hand
/// sides `b`.
#[derive(Clone, Debug)]
pub struct L1QuadSolver {
    gram: Gram,
    diag: Vec<f64>,
}

struct CdState {
    x: DVector<f64>,
    /// `Qx − b` for explicit grams, `Fx` for factored ones.
    aux: DVector<f64>,
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

impl L1QuadSolver {
    pub fn new(gram: Gram) -> Self {
        let diag = gram.diagonal();
        L1QuadSolver { gram, diag }
    }

    /// Solver for `‖Ax − y‖²`, storing `A` in factored form.
    pub fn for_design(a: &DMatrix<f64>) -> Self {
        Self::new(Gram::Factored {
            f: a.clone(),
            ridge: 0.0,
        })
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    fn init_state(&self, x: DVector<f64>, b: &DVector<f64>) -> CdState {
        let aux = match &self.gram {
            Gram::Explicit(q) => q * &x - b,
            Gram::Factored { f, .. } => f * &x,
        };
        CdState { x, aux }
    }

    #[inline]
    fn grad(&self, st: &CdState, b: &DVector<f64>, j: usize) -> f64 {
        match &self.gram {
            Gram::Explicit(_) => st.aux[j],
            Gram::Factored { f, ridge } => {
                f.column(j).dot(&st.aux) + ridge * st.x[j] - b[j]
            }
        }
    }

    #[inline]
    fn bump(&self, st: &mut CdState, j: usize, delta: f64) {
        st.x[j] += delta;
        match &self.gram {
            Gram::Explicit(q) => st.aux.axpy(delta, &q.column(j), 1.0),
            Gram::Factored { f, .. } => st.aux.axpy(delta, &f.column(j), 1.0),
        }
    }

    /// Half-gradient `Qx − b` for every coordinate.
    fn full_grad(&self, st: &CdState, b: &DVector<f64>) -> DVector<f64> {
        match &self.gram {
            Gram::Explicit(_) => st.aux.clone(),
            Gram::Factored { f, ridge } => f.tr_mul(&st.aux) + &st.x * *ridge - b,
        }
    }

    fn objective_of(&self, st: &CdState, b: &DVector<f64>, gamma: f64, constant: f64) -> f64 {
        let quad = match &self.gram {
            // xᵀQx = xᵀ(aux + b)
            Gram::Explicit(_) => st.x.dot(&st.aux) + st.x.dot(b),
            Gram::Factored { ridge, .. } => st.aux.norm_squared() + ridge * st.x.norm_squared(),
        };
        quad - 2.0 * b.dot(&st.x) + constant + gamma * st.x.lp_norm(1)
    }

    /// Max violation of the subgradient optimality conditions.
    pub fn kkt_residual(&self, x: &DVector<f64>, b: &DVector<f64>, gamma: f64) -> f64 {
        let g = self.gram.mul(x) - b;
        kkt_from_grad(x, &g, gamma)
    }

    /// Minimize `xᵀQx − 2bᵀx + constant + γ‖x‖₁` from `x0` (zeros if `None`).
    ///
    /// Cyclic coordinate descent with active-set sweeps. Once the sign
    /// pattern stops changing the restricted linear system is solved
    /// directly and accepted if it certifies optimality.
    pub fn solve(
        &self,
        b: &DVector<f64>,
        gamma: f64,
        x0: Option<&DVector<f64>>,
        constant: f64,
        opts: &SolverOptions,
    ) -> (DVector<f64>, SolverReport) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let x = match x0 {
            Some(x0) => x0.clone(),
            None => DVector::zeros(n),
        };
        let mut st = self.init_state(x, b);
        let half = gamma / 2.0;
        let mut report = SolverReport::default();
        if opts.track_objective {
            report.history.push(self.objective_of(&st, b, gamma, constant));
        }

        // a warm start's sign pattern counts as the previous sweep's
        let mut last_signs: Option<Vec<i8>> = Some(st.x.iter().map(|&v| sign(v)).collect());
        let mut kkt = f64::INFINITY;
        for it in 1..=opts.max_iter {
            report.iterations = it;
            for j in 0..n {
                self.update_coord(&mut st, b, half, j);
            }
            // inner passes over the current support
            let active: Vec<usize> = (0..n).filter(|&j| st.x[j] != 0.0).collect();
            for _ in 0..10 {
                let mut change: f64 = 0.0;
                for &j in &active {
                    let d = self.update_coord(&mut st, b, half, j);
                    change = change.max(d.abs() * self.diag[j].sqrt());
                }
                if change <= opts.tol * 0.1 {
                    break;
                }
            }
            let g = self.full_grad(&st, b);
            kkt = kkt_from_grad(&st.x, &g, gamma);
            if opts.track_objective {
                report.history.push(self.objective_of(&st, b, gamma, constant));
            }
            if kkt <= opts.tol {
                report.converged = true;
                break;
            }
            let signs: Vec<i8> = st.x.iter().map(|&v| sign(v)).collect();
            if last_signs.as_ref() == Some(&signs) {
                if let Some((z, zk)) = self.polish(b, gamma, &signs, opts.tol) {
                    let cand = self.init_state(z, b);
                    if self.objective_of(&cand, b, gamma, constant)
                        <= self.objective_of(&st, b, gamma, constant)
                    {
                        st = cand;
                        kkt = zk;
                        if opts.track_objective {
                            report.history.push(self.objective_of(&st, b, gamma, constant));
                        }
                        report.converged = true;
                        break;
                    }
                }
            }
            last_signs = Some(signs);
        }
        report.kkt_residual = kkt;
        report.objective = self.objective_of(&st, b, gamma, constant);
        (st.x, report)
    }

    /// [`solve`](Self::solve) from the exact regularization path: the
    /// piecewise-linear solution is followed from `x = 0` at `γ/2 = max|b|`
    /// down to the target, then coordinate descent certifies the result. Falls
    /// back to a zero start if a restricted system turns singular.
    pub fn solve_cold(
        &self,
        b: &DVector<f64>,
        gamma: f64,
        constant: f64,
        opts: &SolverOptions,
    ) -> (DVector<f64>, SolverReport) {
        let start = self.homotopy(b, gamma, 8 * self.dim().max(1));
        self.solve(b, gamma, start.as_ref(), constant, opts)
    }

    fn homotopy(&self, b: &DVector<f64>, gamma: f64, max_steps: usize) -> Option<DVector<f64>> {
        let n = self.dim();
        let target = gamma / 2.0;
        let mut x = DVector::zeros(n);
        // c = b − Qx; on the path |c_j| ≤ t with equality and matching sign on the support
        let mut c = b.clone();
        let (j0, t0) = c
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
        let mut t = t0;
        if t <= target {
            return Some(x);
        }
        let mut active = vec![j0];
        let mut signs = vec![c[j0].signum()];
        let mut in_active = vec![false; n];
        in_active[j0] = true;
        let mut just_dropped = None;
        for _ in 0..max_steps {
            let wa = self.gram.solve_restricted(&active, &DVector::from_column_slice(&signs))?;
            let mut w = DVector::zeros(n);
            for (k, &j) in active.iter().enumerate() {
                w[j] = wa[k];
            }
            let a = self.gram.mul(&w);
            let floor = 1e-14 * t;
            let mut step = t - target;
            // (index, sign to add with, or 0 for a drop)
            let mut event: Option<(usize, f64)> = None;
            for j in 0..n {
                if in_active[j] {
                    if w[j] != 0.0 {
                        let d = -x[j] / w[j];
                        if d > floor && d < step {
                            step = d;
                            event = Some((j, 0.0));
                        }
                    }
                } else if Some(j) != just_dropped {
                    if a[j] < 1.0 {
                        let d = (t - c[j]) / (1.0 - a[j]);
                        if d > floor && d < step {
                            step = d;
                            event = Some((j, 1.0));
                        }
                    }
                    if a[j] > -1.0 {
                        let d = (t + c[j]) / (1.0 + a[j]);
                        if d > floor && d < step {
                            step = d;
                            event = Some((j, -1.0));
                        }
                    }
                }
            }
            x.axpy(step, &w, 1.0);
            t -= step;
            just_dropped = None;
            match event {
                None => return x.iter().all(|v| v.is_finite()).then_some(x),
                Some((j, s)) if s == 0.0 => {
                    x[j] = 0.0;
                    in_active[j] = false;
                    let k = active.iter().position(|&v| v == j)?;
                    active.remove(k);
                    signs.remove(k);
                    just_dropped = Some(j);
                }
                Some((j, s)) => {
                    in_active[j] = true;
                    active.push(j);
                    signs.push(s);
                }
            }
            if active.is_empty() {
                return None;
            }
            c = b - self.gram.mul(&x);
        }
        None
    }

    #[inline]
    fn update_coord(&self, st: &mut CdState, b: &DVector<f64>, half: f64, j: usize) -> f64 {
        let qjj = self.diag[j];
        if qjj <= 0.0 {
            let old = st.x[j];
            if old != 0.0 {
                self.bump(st, j, -old);
            }
            return -old;
        }
        let g = self.grad(st, b, j);
        let old = st.x[j];
        let new = soft(qjj * old - g, half) / qjj;
        let delta = new - old;
        if delta != 0.0 {
            self.bump(st, j, delta);
        }
        delta
    }

    fn polish(
        &self,
        b: &DVector<f64>,
        gamma: f64,
        signs: &[i8],
        tol: f64,
    ) -> Option<(DVector<f64>, f64)> {
        let idx: Vec<usize> = (0..signs.len()).filter(|&j| signs[j] != 0).collect();
        let mut z = DVector::zeros(self.dim());
        if !idx.is_empty() {
            let rhs = DVector::from_iterator(
                idx.len(),
                idx.iter().map(|&j| b[j] - gamma / 2.0 * signs[j] as f64),
            );
            let za = self.gram.solve_restricted(&idx, &rhs)?;
            for (a, &j) in idx.iter().enumerate() {
                if sign(za[a]) != signs[j] {
                    return None;
                }
                z[j] = za[a];
            }
        }
        let g = self.gram.mul(&z) - b;
        let k = kkt_from_grad(&z, &g, gamma);
        (k <= tol).then_some((z, k))
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `g` is the half-gradient `Qx − b`.
fn kkt_from_grad(x: &DVector<f64>, g: &DVector<f64>, gamma: f64) -> f64 {
    x.iter()
        .zip(g.iter())
        .map(|(&xj, &gj)| {
            let g2 = 2.0 * gj;
            if xj == 0.0 {
                (g2.abs() - gamma).max(0.0)
            } else {
                (g2 + gamma * xj.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Minimize `‖Ax − y‖² + γ‖x‖₁`. Non-convergence is reported, not raised.
pub fn solve_l1_quad(
    p: &L1QuadProblem,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, SolverReport)> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    let solver = L1QuadSolver::for_design(&p.a);
    let b = p.a.tr_mul(&p.y);
    Ok(solver.solve_cold(
        &b,
        p.gamma,
        p.y.norm_squared(),
        &SolverOptions::new(tol, max_iter),
    ))
}

/// Group KKT residual of `‖X − LS‖_F² + μ Σ_j ‖S_j,:‖₂`.
pub fn group_kkt_residual(l: &DMatrix<f64>, x: &DMatrix<f64>, s: &DMatrix<f64>, mu: f64) -> f64 {
    let grad = (l.tr_mul(&(l * s - x))) * 2.0;
    let mut worst: f64 = 0.0;
    for j in 0..s.nrows() {
        let row = s.row(j);
        let nrm = row.norm();
        let g = grad.row(j);
        let v = if nrm == 0.0 {
            (g.norm() - mu).max(0.0)
        } else {
            (g + row * (mu / nrm)).norm()
        };
        worst = worst.max(v);
    }
    worst
}

pub fn group_objective(l: &DMatrix<f64>, x: &DMatrix<f64>, s: &DMatrix<f64>, mu: f64) -> f64 {
    (x - l * s).norm_squared() + mu * s.row_iter().map(|r| r.norm()).sum::<f64>()
}

/// Minimize `‖X − LS‖_F² + μ Σ_j ‖S_j,:‖₂` by block coordinate descent over
/// rows with row-wise block soft-thresholding.
pub fn solve_group_l21(
    l: &DMatrix<f64>,
    x: &DMatrix<f64>,
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, SolverReport)> {
    solve_group_l21_from(l, x, mu, None, &SolverOptions::new(tol, max_iter))
}

/// [`solve_group_l21`] with a warm start and full options.
///
/// With more samples than sensors the problem is solved in the row space of
/// `X`: for `X = QB` with orthonormal rows `B`, the minimizer is `S'B` where
/// `S'` solves the same problem with data `Q`. Loss and row norms are
/// unchanged by the map, so the KKT residual is reported on the original
/// problem.
pub fn solve_group_l21_from(
    l: &DMatrix<f64>,
    x: &DMatrix<f64>,
    mu: f64,
    s0: Option<&DMatrix<f64>>,
    opts: &SolverOptions,
) -> Result<(DMatrix<f64>, SolverReport)> {
    if !(mu > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::invalid(format!(
            "mu ({mu}) and tol ({}) must be positive",
            opts.tol
        )));
    }
    if l.nrows() != x.nrows() {
        return Err(Error::dim(format!(
            "L has {} rows, X has {}",
            l.nrows(),
            x.nrows()
        )));
    }
    if let Some(s0) = s0 {
        if s0.shape() != (l.ncols(), x.ncols()) {
            return Err(Error::dim(format!(
                "warm start is {:?}, expected {:?}",
                s0.shape(),
                (l.ncols(), x.ncols())
            )));
        }
    }
    if x.ncols() <= x.nrows() {
        return group_bcd(l, x, mu, s0, opts);
    }
    // Xᵀ = QR, so X = Rᵀ Qᵀ with Qᵀ having orthonormal rows
    let qr = x.transpose().qr();
    let (q, r) = (qr.q(), qr.r());
    let x_red = r.transpose();
    let s0_red = s0.map(|s0| s0 * &q);
    let inner = SolverOptions {
        tol: opts.tol * 0.5,
        ..*opts
    };
    let (s_red, mut rep) = group_bcd(l, &x_red, mu, s0_red.as_ref(), &inner)?;
    let s = s_red * q.transpose();
    rep.kkt_residual = group_kkt_residual(l, x, &s, mu);
    rep.converged = rep.kkt_residual <= opts.tol;
    rep.objective = group_objective(l, x, &s, mu);
    Ok((s, rep))
}

fn group_bcd(
    l: &DMatrix<f64>,
    x: &DMatrix<f64>,
    mu: f64,
    s0: Option<&DMatrix<f64>>,
    opts: &SolverOptions,
) -> Result<(DMatrix<f64>, SolverReport)> {
    let (ns, nt) = (l.ncols(), x.ncols());
    let mut s = match s0 {
        Some(s0) => s0.clone(),
        None => DMatrix::zeros(ns, nt),
    };
    let diag: Vec<f64> = l.column_iter().map(|c| c.norm_squared()).collect();
    // residual LS − X, kept as its transpose so row updates are contiguous
    let mut rt = (l * &s - x).transpose();
    let mut report = SolverReport::default();
    let mut kkt = f64::INFINITY;

    let update_row = |j: usize, s: &mut DMatrix<f64>, rt: &mut DMatrix<f64>| -> f64 {
        let q = diag[j];
        if q <= 0.0 {
            return 0.0;
        }
        let g = &*rt * l.column(j);
        let z = s.row(j).transpose() - g / q;
        let zn = z.norm();
        let shrink = if zn > 0.0 {
            (1.0 - mu / (2.0 * q * zn)).max(0.0)
        } else {
            0.0
        };
        let new = z * shrink;
        let delta = &new - s.row(j).transpose();
        let dn = delta.amax();
        if dn != 0.0 {
            rt.ger(1.0, &delta, &l.column(j), 1.0);
            s.set_row(j, &new.transpose());
        }
        dn * q.sqrt()
    };

    for it in 1..=opts.max_iter {
        report.iterations = it;
        for j in 0..ns {
            update_row(j, &mut s, &mut rt);
        }
        let active: Vec<usize> = (0..ns).filter(|&j| s.row(j).amax() != 0.0).collect();
        for _ in 0..20 {
            let mut change: f64 = 0.0;
            for &j in &active {
                change = change.max(update_row(j, &mut s, &mut rt));
            }
            if change <= opts.tol * 1e-2 {
                break;
            }
        }
        if opts.track_objective {
            report.history.push(group_objective(l, x, &s, mu));
        }
        kkt = group_kkt_from_residual(l, &rt, &s, mu);
        if kkt <= opts.tol {
            report.converged = true;
            break;
        }
    }
    report.kkt_residual = kkt;
    report.objective = group_objective(l, x, &s, mu);
    Ok((s, report))
}

fn group_kkt_from_residual(l: &DMatrix<f64>, rt: &DMatrix<f64>, s: &DMatrix<f64>, mu: f64) -> f64 {
    // grad rows = 2 (Lᵀ R)_j = 2 (Rᵀ L)_{:, j}
    let gt = rt * l * 2.0;
    let mut worst: f64 = 0.0;
    for j in 0..s.nrows() {
        let row = s.row(j);
        let nrm = row.norm();
        let g = gt.column(j);
        let v = if nrm == 0.0 {
            (g.norm() - mu).max(0.0)
        } else {
            (g + row.transpose() * (mu / nrm)).norm()
        };
        worst = worst.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn identity_design_soft_thresholds_at_half_gamma() {
        let p = L1QuadProblem::new(
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![3.0, 0.1, -2.0]),
            1.0,
        )
        .unwrap();
        let (x, rep) = solve_l1_quad(&p, 1e-10, 100).unwrap();
        assert!(rep.converged);
        assert!((x - DVector::from_vec(vec![2.5, 0.0, -1.5])).amax() < 1e-12);
    }

    #[test]
    fn vanishing_gamma_gives_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_mat(&mut rng, 8, 4);
        let y = DVector::from_fn(8, |_, _| rng.random::<f64>());
        let p = L1QuadProblem::new(a.clone(), y.clone(), 1e-12).unwrap();
        let (x, rep) = solve_l1_quad(&p, 1e-10, 1000).unwrap();
        assert!(rep.converged);
        let ls = (a.transpose() * &a).cholesky().unwrap().solve(&a.tr_mul(&y));
        assert!((x - ls).amax() < 1e-9);
    }

    #[test]
    fn zero_data_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = L1QuadProblem::new(rand_mat(&mut rng, 5, 9), DVector::zeros(5), 0.3).unwrap();
        let (x, rep) = solve_l1_quad(&p, 1e-8, 100).unwrap();
        assert_eq!(x, DVector::zeros(9));
        assert_eq!(rep.kkt_residual, 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = rand_mat(&mut rng, 10, 30);
        let y = DVector::from_fn(10, |_, _| rng.random::<f64>());
        let b = a.tr_mul(&y);
        let (_, rep) = L1QuadSolver::for_design(&a).solve(&b, 1e-3, None, 0.0, &SolverOptions::new(1e-14, 1));
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn bad_arguments() {
        assert!(L1QuadProblem::new(DMatrix::identity(2, 2), DVector::zeros(2), 0.0).is_err());
        assert!(L1QuadProblem::new(DMatrix::identity(2, 2), DVector::zeros(3), 1.0).is_err());
        let p = L1QuadProblem::new(DMatrix::identity(2, 2), DVector::zeros(2), 1.0).unwrap();
        assert!(solve_l1_quad(&p, 0.0, 10).is_err());
    }

    #[test]
    fn explicit_and_factored_grams_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = rand_mat(&mut rng, 6, 20);
        let ridge = 0.7;
        let mut q = f.transpose() * &f;
        for d in 0..20 {
            q[(d, d)] += ridge;
        }
        let b = DVector::from_fn(20, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let opts = SolverOptions::new(1e-10, 1000);
        let (x1, r1) = L1QuadSolver::new(Gram::Explicit(q)).solve(&b, 0.4, None, 0.0, &opts);
        let (x2, r2) =
            L1QuadSolver::new(Gram::Factored { f, ridge }).solve(&b, 0.4, None, 0.0, &opts);
        assert!(r1.converged && r2.converged);
        assert!((x1 - x2).amax() < 1e-9);
    }

    #[test]
    fn path_start_matches_coordinate_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (rows, cols, ridge) in [(8, 40, 0.0), (12, 30, 0.5), (30, 10, 0.0)] {
            for _ in 0..10 {
                let f = rand_mat(&mut rng, rows, cols);
                // b in the range of Fᵀ keeps the ridge-free problems bounded
                let y = DVector::from_fn(rows, |_, _| rng.random::<f64>() * 4.0 - 2.0);
                let b = f.tr_mul(&y);
                let solver = L1QuadSolver::new(Gram::Factored { f, ridge });
                let gamma = rng.random_range(0.01..1.0);
                let start = solver.homotopy(&b, gamma, 8 * cols).expect("path completed");
                assert!(solver.kkt_residual(&start, &b, gamma) < 1e-9);
                let opts = SolverOptions::new(1e-10, 100_000);
                let (xc, rc) = solver.solve_cold(&b, gamma, 0.0, &opts);
                let (xd, rd) = solver.solve(&b, gamma, None, 0.0, &opts);
                assert!(rc.converged && rd.converged);
                assert!(rc.iterations <= 2, "{}", rc.iterations);
                assert!((xc - xd).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn path_start_above_threshold_is_zero() {
        let solver = L1QuadSolver::for_design(&DMatrix::identity(3, 3));
        let b = DVector::from_vec(vec![0.2, -0.1, 0.0]);
        assert_eq!(solver.homotopy(&b, 1.0, 10), Some(DVector::zeros(3)));
    }

    #[test]
    fn group_block_threshold_kills_small_rows() {
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.1, 3.0, 4.0, 0.0, 0.2]);
        let (s, rep) = solve_group_l21(&DMatrix::identity(3, 3), &x, 1.0, 1e-10, 100).unwrap();
        assert!(rep.converged);
        assert_eq!(s.row(0).amax(), 0.0);
        assert_eq!(s.row(2).amax(), 0.0);
        // row norm 5 shrinks by mu/2
        assert!((s[(1, 0)] - 3.0 * 4.5 / 5.0).abs() < 1e-12);
        assert!((s[(1, 1)] - 4.0 * 4.5 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn group_unpenalized_limit_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let l = rand_mat(&mut rng, 5, 5) + DMatrix::identity(5, 5) * 3.0;
        let x = rand_mat(&mut rng, 5, 3);
        let (s, rep) = solve_group_l21(&l, &x, 1e-10, 1e-9, 100_000).unwrap();
        assert!(rep.converged, "{rep:?}");
        let exact = l.clone().lu().solve(&x).unwrap();
        assert!((s - exact).amax() < 1e-8);
    }

    #[test]
    fn group_row_space_reduction_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let l = rand_mat(&mut rng, 5, 12);
        let x = rand_mat(&mut rng, 5, 40);
        let opts = SolverOptions::new(1e-10, 200_000);
        let (s, rep) = solve_group_l21_from(&l, &x, 0.3, None, &opts).unwrap();
        assert!(rep.converged, "{rep:?}");
        let (direct, drep) = group_bcd(&l, &x, 0.3, None, &opts).unwrap();
        assert!(drep.converged);
        assert!((&s - &direct).amax() < 1e-8);
        assert!((rep.objective - group_objective(&l, &x, &direct, 0.3)).abs() < 1e-9);
        for j in 0..12 {
            assert_eq!(s.row(j).amax() == 0.0, direct.row(j).amax() == 0.0);
        }
    }

    #[test]
    fn group_zero_columns_give_zero_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut l = rand_mat(&mut rng, 6, 10);
        l.column_mut(3).fill(0.0);
        l.column_mut(7).fill(0.0);
        let x = rand_mat(&mut rng, 6, 4);
        let (s, rep) = solve_group_l21(&l, &x, 0.05, 1e-8, 50_000).unwrap();
        assert!(rep.converged);
        assert_eq!(s.row(3).amax(), 0.0);
        assert_eq!(s.row(7).amax(), 0.0);
        assert!(group_kkt_residual(&l, &x, &s, 0.05) <= 1e-8);
    }
}
