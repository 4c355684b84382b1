//! Brute-force references and the property checks built on them. Shared by
//! this crate's integration tests (small counts) and the acceptance target
//! (full counts), which includes this file by path.

#![allow(dead_code)]

use std::time::Instant;

use hgesi::baselines::{default_regularization, sloreta_solve};
use hgesi::mesh::{build_two_hemisphere_mesh, Hemisphere, TriangleMesh};
use hgesi::metrics::{auc, data_fit, evaluate, localization_error, reconstruction_error, roc_auc};
use hgesi::model::{kde_energy, kde_objective, squared_distances, update_g, update_r, Assignment};
use hgesi::pipeline::{estimate, Geometry, GeometryConfig, Method, MethodParams};
use hgesi::sim::{add_noise_snr, build_ground_truth, simulate, snr_db, SimulationConfig};
use hgesi::solvers::{solve_l1_quad, L1QuadProblem, DEFAULT_TOL};
use hgesi::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one property check.
#[derive(Clone, Debug)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Check {
            pass,
            detail: detail.into(),
        }
    }

    fn failures(failures: &[String], ok: String) -> Self {
        match failures.first() {
            None => Check::new(true, ok),
            Some(f) => Check::new(false, format!("{} failure(s), first: {f}", failures.len())),
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    // sum of uniforms is close enough to Gaussian for random instances
    DMatrix::from_fn(r, c, |_, _| (0..4).map(|_| rng.random::<f64>()).sum::<f64>() - 2.0)
}

// ---------------------------------------------------------------- geodesics

const TRIPLES: [(u32, u32, u32); 4] = [(3, 4, 5), (5, 12, 13), (8, 15, 17), (7, 24, 25)];

/// Rectangular grid with spacings `(a·p, b·p)` and one random diagonal
/// (length `c·p`) per cell, so every path length is an integer and sums are
/// exact in any order.
pub fn pythagorean_grid(rng: &mut ChaCha8Rng, max_vertices: usize) -> TriangleMesh {
    let (a, b, _) = TRIPLES[rng.random_range(0..TRIPLES.len())];
    let p = rng.random_range(1..=4) as f64;
    let nx = rng.random_range(2..=20usize);
    let ny = rng.random_range(2..=(max_vertices / nx).max(2));
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push([i as f64 * a as f64 * p, j as f64 * b as f64 * p, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut faces = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if rng.random::<bool>() {
                faces.push([v00, v10, v11]);
                faces.push([v00, v11, v01]);
            } else {
                faces.push([v00, v10, v01]);
                faces.push([v10, v11, v01]);
            }
        }
    }
    let n = vertices.len();
    TriangleMesh::new(vertices, faces, vec![Hemisphere::Left; n]).expect("grid mesh")
}

pub fn floyd_warshall(mesh: &TriangleMesh) -> Vec<Vec<f64>> {
    let n = mesh.n_vertices();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, w) in mesh.edges() {
        d[a][b] = d[a][b].min(w);
        d[b][a] = d[b][a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let alt = d[i][k] + d[k][j];
                if alt < d[i][j] {
                    d[i][j] = alt;
                }
            }
        }
    }
    d
}

/// Dijkstra against Floyd–Warshall, exact equality, on `meshes` random
/// grids of at most 200 vertices.
pub fn check_geodesic_oracle(meshes: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut failures = Vec::new();
    let mut pairs = 0usize;
    for m in 0..meshes {
        let mesh = pythagorean_grid(&mut rng, 200);
        let fw = floyd_warshall(&mesh);
        let table = mesh.geodesic_table();
        for i in 0..mesh.n_vertices() {
            for j in 0..mesh.n_vertices() {
                pairs += 1;
                if table.get(i, j) != fw[i][j] {
                    failures.push(format!("mesh {m} ({i},{j}): {} vs {}", table.get(i, j), fw[i][j]));
                }
            }
        }
    }
    Check::failures(&failures, format!("{meshes} meshes, {pairs} pairs identical"))
}

// ------------------------------------------------------------ spanning tree

/// Tree encoded by a Prüfer sequence over `k` labels.
pub fn decode_prufer(seq: &[usize], k: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; k];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(k - 1);
    for &s in seq {
        let leaf = (0..k).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..k).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Sum of squared landmark distances over `edges`, in sorted edge order.
pub fn tree_cost(c: &DMatrix<f64>, edges: &[(usize, usize)]) -> f64 {
    let mut e: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    e.sort();
    e.iter()
        .map(|&(a, b)| (c.column(a) - c.column(b)).norm_squared())
        .sum()
}

/// Minimum cost over all `k^(k−2)` labelled trees, and how many attain it.
pub fn brute_force_min_tree(c: &DMatrix<f64>) -> (f64, usize) {
    let k = c.ncols();
    if k == 2 {
        return (tree_cost(c, &[(0, 1)]), 1);
    }
    let mut seq = vec![0usize; k - 2];
    let mut best = (f64::INFINITY, 0);
    loop {
        let cost = tree_cost(c, &decode_prufer(&seq, k));
        if cost < best.0 {
            best = (cost, 1);
        } else if cost == best.0 {
            best.1 += 1;
        }
        let mut pos = 0;
        loop {
            if pos == seq.len() {
                return best;
            }
            seq[pos] += 1;
            if seq[pos] < k {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}

/// Kruskal tree cost equals the enumerated minimum, exactly. Half of the
/// landmark sets have small integer coordinates, which makes ties common.
pub fn check_mst_exact(per_k: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut failures = Vec::new();
    let mut tied = 0;
    for k in 3..=6 {
        for t in 0..per_k {
            let c = if t % 2 == 0 {
                normal_matrix(&mut rng, 4, k)
            } else {
                DMatrix::from_fn(3, k, |_, _| rng.random_range(-3..=3) as f64)
            };
            let g = update_g(&c);
            let got = tree_cost(&c, g.edges());
            let (best, count) = brute_force_min_tree(&c);
            if count > 1 {
                tied += 1;
            }
            if got != best {
                failures.push(format!("K={k} set {t}: {got} vs {best}"));
            }
        }
    }
    Check::failures(
        &failures,
        format!("{} landmark sets, cost exact ({tied} with tied optima)", 4 * per_k),
    )
}

// --------------------------------------------------------------- assignment

/// `(S, C, α)` with squared distances over `α` of order ten at most, so the
/// optimal assignments stay well inside the simplex.
fn assignment_instance(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let k = rng.random_range(2..=6);
    let s = DMatrix::from_fn(5, 8, |_, _| rng.random::<f64>() - 0.5);
    let c = DMatrix::from_fn(5, k, |_, _| rng.random::<f64>() - 0.5);
    (s, c, rng.random_range(0.3..2.0))
}

/// `g̃(S,C) = g(S, C, update_R(S,C,α))`.
pub fn check_kde_identity(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for t in 0..instances {
        let k = rng.random_range(1..=8);
        let nt = rng.random_range(1..=20);
        let ns = rng.random_range(1..=10);
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let s = normal_matrix(&mut rng, ns, nt) * scale;
        let c = normal_matrix(&mut rng, ns, k) * scale;
        let alpha = 10f64.powf(rng.random_range(-2.0..1.0));
        let lhs = kde_objective(&s, &c, alpha).unwrap();
        let rhs = kde_energy(&s, &c, &update_r(&s, &c, alpha).unwrap(), alpha).unwrap();
        let rel = (lhs - rhs).abs() / (1.0 + lhs.abs());
        worst = worst.max(rel);
        if rel > 1e-8 {
            failures.push(format!("instance {t}: {lhs} vs {rhs}"));
        }
    }
    Check::failures(&failures, format!("{instances} triples, worst relative gap {worst:.1e}"))
}

fn uniform_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn row_energy(r: &[f64], d: &[f64], alpha: f64) -> f64 {
    r.iter().zip(d).map(|(&w, &di)| w * (di + alpha * w.ln())).sum()
}

/// Euclidean projection onto `{r : Σr = 1, r ≥ floor}`.
fn project_simplex(v: &[f64], floor: f64) -> Vec<f64> {
    let k = v.len();
    let mass = 1.0 - floor * k as f64;
    let mut u: Vec<f64> = v.iter().map(|x| x - floor).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - mass) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - floor - theta).max(0.0) + floor).collect()
}

/// Projected gradient with backtracking on one assignment row.
pub fn projected_gradient_row(d: &[f64], alpha: f64) -> Vec<f64> {
    let k = d.len();
    let floor = 1e-12;
    let mut r = vec![1.0 / k as f64; k];
    let mut f = row_energy(&r, d, alpha);
    let mut step = 1.0;
    for _ in 0..200_000 {
        let grad: Vec<f64> = r.iter().zip(d).map(|(&w, &di)| di + alpha * (w.ln() + 1.0)).collect();
        let mut accepted = None;
        while step > 1e-18 {
            let trial: Vec<f64> = r.iter().zip(&grad).map(|(w, g)| w - step * g).collect();
            let next = project_simplex(&trial, floor);
            let fn_ = row_energy(&next, d, alpha);
            let decrease: f64 = grad.iter().zip(r.iter().zip(&next)).map(|(g, (a, b))| g * (a - b)).sum();
            let dist2: f64 = r.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum();
            if fn_ <= f - decrease + dist2 / (2.0 * step) {
                accepted = Some((next, fn_, dist2));
                break;
            }
            step *= 0.5;
        }
        let Some((next, fn_, dist2)) = accepted else { break };
        r = next;
        f = fn_;
        step *= 2.0;
        if dist2.sqrt() < 1e-15 {
            break;
        }
    }
    r
}

/// `update_R` is no worse than 1000 random simplex points and agrees with a
/// projected-gradient solve within 1e-6.
pub fn check_assignment_optimality(instances: usize, samples: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut failures = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for t in 0..instances {
        let (s, c, alpha) = assignment_instance(&mut rng);
        let r = update_r(&s, &c, alpha).unwrap();
        let best = kde_energy(&s, &c, &r, alpha).unwrap();
        for q in 0..samples {
            let mut m = DMatrix::zeros(s.ncols(), c.ncols());
            for i in 0..s.ncols() {
                let p = uniform_simplex(&mut rng, c.ncols());
                for (k, v) in p.into_iter().enumerate() {
                    m[(i, k)] = v;
                }
            }
            let e = kde_energy(&s, &c, &Assignment::new(m).unwrap(), alpha).unwrap();
            if e < best {
                failures.push(format!("instance {t}: random point {q} has {e} < {best}"));
                break;
            }
        }
        let d = squared_distances(&s, &c);
        for i in 0..s.ncols() {
            let row: Vec<f64> = d.row(i).iter().copied().collect();
            let pg = projected_gradient_row(&row, alpha);
            let gap = pg
                .iter()
                .enumerate()
                .map(|(k, v)| (v - r.matrix()[(i, k)]).abs())
                .fold(0.0, f64::max);
            let ours: Vec<f64> = r.matrix().row(i).iter().copied().collect();
            let fdiff = row_energy(&ours, &row, alpha) - row_energy(&pg, &row, alpha);
            worst_gap = worst_gap.max(gap);
            if gap > 1e-6 || fdiff > 1e-6 {
                failures.push(format!("instance {t} row {i}: |ΔR| {gap:.2e}, Δf {fdiff:.2e}"));
            }
        }
    }
    Check::failures(
        &failures,
        format!("{instances} instances x {samples} random points; worst |R - R_pg| {worst_gap:.1e}"),
    )
}

// -------------------------------------------------------------------- lasso

/// Minimum of `‖Ax − y‖² + γ‖x‖₁` over every sign pattern in `{−,0,+}^n`.
pub fn lasso_sign_oracle(a: &DMatrix<f64>, y: &DVector<f64>, gamma: f64) -> f64 {
    let n = a.ncols();
    let problem = L1QuadProblem::new(a.clone(), y.clone(), gamma).unwrap();
    let mut best = problem.objective(&DVector::zeros(n));
    for code in 0..3usize.pow(n as u32) {
        let mut signs = vec![0i8; n];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        let idx: Vec<usize> = (0..n).filter(|&j| signs[j] != 0).collect();
        if idx.is_empty() {
            continue;
        }
        let sub = a.select_columns(&idx);
        let rhs = sub.tr_mul(y) - DVector::from_iterator(idx.len(), idx.iter().map(|&j| gamma / 2.0 * signs[j] as f64));
        let Some(chol) = sub.tr_mul(&sub).cholesky() else { continue };
        let z = chol.solve(&rhs);
        if idx.iter().enumerate().any(|(p, &j)| z[p] * signs[j] as f64 <= 0.0) {
            continue;
        }
        let mut x = DVector::zeros(n);
        for (p, &j) in idx.iter().enumerate() {
            x[j] = z[p];
        }
        best = best.min(problem.objective(&x));
    }
    best
}

/// KKT certificates on every solve, and the 6x4 sign-pattern oracle.
pub fn check_lasso(oracle_instances: usize, large_instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut failures = Vec::new();
    let mut worst_kkt: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut solves = 0;
    for t in 0..oracle_instances {
        let a = normal_matrix(&mut rng, 6, 4);
        let y = DVector::from_fn(6, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let gamma = 10f64.powf(rng.random_range(-2.0..0.7));
        let p = L1QuadProblem::new(a.clone(), y.clone(), gamma).unwrap();
        let (x, rep) = solve_l1_quad(&p, DEFAULT_TOL, 10_000).unwrap();
        solves += 1;
        let gap = (p.objective(&x) - lasso_sign_oracle(&a, &y, gamma)).abs();
        worst_gap = worst_gap.max(gap);
        worst_kkt = worst_kkt.max(rep.kkt_residual);
        if gap > 1e-8 {
            failures.push(format!("instance {t}: objective off by {gap:e}"));
        }
        if rep.kkt_residual > 1e-8 {
            failures.push(format!("instance {t}: kkt {:e}", rep.kkt_residual));
        }
    }
    for t in 0..large_instances {
        let (m, n) = (rng.random_range(5..40), rng.random_range(5..120));
        let a = normal_matrix(&mut rng, m, n);
        let y = DVector::from_fn(m, |_, _| rng.random::<f64>() - 0.5);
        let gamma = 10f64.powf(rng.random_range(-3.0..0.0));
        let p = L1QuadProblem::new(a, y, gamma).unwrap();
        let (_, rep) = solve_l1_quad(&p, DEFAULT_TOL, 10_000).unwrap();
        solves += 1;
        worst_kkt = worst_kkt.max(rep.kkt_residual);
        if rep.kkt_residual > 1e-8 {
            failures.push(format!("{m}x{n} instance {t}: kkt {:e}", rep.kkt_residual));
        }
    }
    Check::failures(
        &failures,
        format!("{solves} solves, worst kkt {worst_kkt:.1e}, worst oracle gap {worst_gap:.1e}"),
    )
}

// ------------------------------------------------------------ monotone ACS

/// Outer-loop objective never rises by more than `1e-8(1+|h|)` on random
/// desk-scale fits (324 sources, 32 sensors, 120 samples, K = 10).
pub fn check_monotone_fits(fits: usize, seed: u64) -> Check {
    let start = Instant::now();
    let geo = Geometry::build(&GeometryConfig::default()).unwrap();
    let mut rng = rng(seed);
    let mut failures = Vec::new();
    let mut cycles = 0;
    for f in 0..fits {
        let sim = SimulationConfig {
            samples_per_state: 40,
            snr_channel_db: [30.0, 20.0, 10.0][rng.random_range(0..3)],
            snr_source_db: [f64::INFINITY, 30.0, 10.0][rng.random_range(0..3)],
            seed: rng.random(),
            ..Default::default()
        };
        let (x, _) = simulate(&geo.mesh, &geo.lead, &sim).unwrap();
        let mut p = MethodParams::default();
        p.hyper.k = 10;
        p.hyper.seed = rng.random();
        let est = estimate(Method::Proposed, &geo, &x, &p).unwrap();
        let trace = est.model.unwrap().objective_trace;
        cycles += trace.len() - 1;
        for (n, w) in trace.windows(2).enumerate() {
            if w[1] > w[0] + 1e-8 * (1.0 + w[0].abs()) {
                failures.push(format!("fit {f} cycle {n}: {} -> {}", w[0], w[1]));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut c = Check::failures(&failures, format!("{fits} fits, {cycles} cycles, {secs:.1}s"));
    if c.pass && secs > 120.0 {
        c = Check::new(false, format!("monotone but took {secs:.1}s > 120s"));
    }
    c
}

// ------------------------------------------------------------------ sLORETA

/// Noiseless single dipole: the sLORETA peak is the dipole vertex.
pub fn check_sloreta_point_source(instances: usize, seed: u64) -> Check {
    let geo = Geometry::build(&GeometryConfig::default()).unwrap();
    let l = geo.lead.matrix();
    let reg = default_regularization(l);
    let mut rng = rng(seed);
    let mut failures = Vec::new();
    for t in 0..instances {
        let j = rng.random_range(0..geo.mesh.n_vertices());
        let course = DVector::from_fn(12, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let x = l.column(j) * course.transpose();
        let s = sloreta_solve(l, &x, reg).unwrap();
        let energy: Vec<f64> = s.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>() / 12.0).collect();
        let peak = (0..energy.len()).fold(0, |b, v| if energy[v] > energy[b] { v } else { b });
        let le = geo.table.get(peak, j);
        if le != 0.0 {
            failures.push(format!("instance {t}: source {j}, peak {peak}, LE {le} mm"));
        }
    }
    Check::failures(&failures, format!("{instances} point sources, LE = 0 mm on all"))
}

// ------------------------------------------------------------------ metrics

/// The worked metric examples, exactly, and SNR injection within 1e-9 dB.
pub fn check_metric_examples(seed: u64) -> Check {
    let mut failures = Vec::new();
    let mut expect = |what: &str, got: f64, want: f64| {
        if got != want {
            failures.push(format!("{what}: {got} != {want}"));
        }
    };
    let mut rng = rng(seed);

    let l = DMatrix::from_fn(4, 6, |_, _| rng.random::<f64>());
    let s = DMatrix::from_fn(6, 9, |_, _| rng.random::<f64>() - 0.5);
    let x = &l * &s;
    expect("DF exact fit", data_fit(&x, &l, &s).unwrap(), 1.0);
    // each column followed by its negative, so the running mean is exactly 0
    let half = DMatrix::from_fn(4, 5, |_, _| rng.random::<f64>() - 0.5);
    let xz = DMatrix::from_fn(4, 10, |i, t| if t % 2 == 0 { half[(i, t / 2)] } else { -half[(i, t / 2)] });
    expect("DF zero estimate, zero mean", data_fit(&xz, &l, &DMatrix::zeros(6, 10)).unwrap(), 0.0);

    expect("RE identical", reconstruction_error(&s, &s).unwrap(), 0.0);
    expect("RE zero", reconstruction_error(&DMatrix::zeros(6, 9), &s).unwrap(), 1.0);
    expect("RE doubled", reconstruction_error(&(&s * 2.0), &s).unwrap(), 1.0);

    let labels = [true, false, true, false, false];
    expect("AUC separated", roc_auc(&[5.0, 1.0, 4.0, 2.0, 3.0], &labels).unwrap(), 1.0);
    expect("AUC reversed", roc_auc(&[0.0, 9.0, 1.0, 8.0, 7.0], &labels).unwrap(), 0.0);
    expect("AUC all tied", roc_auc(&[2.5; 5], &labels).unwrap(), 0.5);

    let mesh = build_two_hemisphere_mesh(1, 35.0, 80.0).unwrap();
    let table = mesh.geodesic_table();
    let cfg = SimulationConfig {
        samples_per_state: 20,
        seed,
        ..Default::default()
    };
    let truth = build_ground_truth(&mesh, &cfg).unwrap();
    let lf = DMatrix::from_fn(8, mesh.n_vertices(), |_, _| rng.random::<f64>() - 0.5);
    let xt = &lf * &truth.s_true;
    for k in 0..truth.n_states() {
        let loc = localization_error(&mesh, &table, &truth.s_true, &truth, k).unwrap();
        expect("LE perfect left", loc.le_mm[0], 0.0);
        expect("LE perfect right", loc.le_mm[1], 0.0);
        expect("AUC perfect", auc(&truth.s_true, &truth, k).unwrap(), 1.0);

        let c = truth.states[k].centers[0];
        let &(nb, len) = mesh.neighbors(c).first().unwrap();
        let mut shifted = truth.s_true.clone();
        shifted.row_mut(nb).copy_from(&(truth.s_true.row(c) * 10.0));
        let loc = localization_error(&mesh, &table, &shifted, &truth, k).unwrap();
        expect("LE neighbor peak", loc.le_mm[0], len);
    }
    let r = evaluate(&mesh, &table, &xt, &lf, &truth.s_true, &truth).unwrap();
    expect("perfect df", r.df, 1.0);
    expect("perfect re", r.re, 0.0);
    expect("perfect le", r.le_mean_mm, 0.0);
    expect("perfect auc", r.auc, 1.0);

    let mut worst: f64 = 0.0;
    for target in [-5.0, 0.0, 3.0, 10.0, 20.0, 30.0, 60.0] {
        for rep in 0..5 {
            let sig = DMatrix::from_fn(16, 50, |_, _| rng.random::<f64>() - 0.5);
            let noisy = add_noise_snr(&sig, target, seed ^ rep).unwrap();
            let err = (snr_db(&sig, &(&noisy - &sig)) - target).abs();
            worst = worst.max(err);
            if err > 1e-9 {
                failures.push(format!("SNR {target} dB: off by {err:e}"));
            }
        }
    }
    Check::failures(&failures, format!("all worked examples exact, worst SNR error {worst:.1e} dB"))
}
