//! The five subcommands. Each takes a validated config and returns what it
//! wrote; nothing here prints.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use hgesi::io::{load_matrix, save_matrix_with_comments};
use hgesi::mesh::{build_spatial_basis, default_rho, TriangleMesh};
use hgesi::metrics::{format_snr, MetricReport, CSV_HEADER};
use hgesi::model::{load_landmarks, project_tree_pca, save_state};
use hgesi::pipeline::{estimate, score, Estimate, Geometry};
use hgesi::sim::{derive_seed, simulate, GroundTruth};
use hgesi::{forward::LeadField, forward::SensorArray, DMatrix};

use crate::config::{ExperimentConfig, MethodRun};
use crate::error::CliError;

pub const MESH_FILE: &str = "mesh.txt";
pub const SENSORS_FILE: &str = "sensors.txt";
pub const LEAD_FILE: &str = "L.txt";
pub const DATA_FILE: &str = "X.txt";
pub const INSTANCE_FILE: &str = "instance.txt";
pub const ESTIMATE_FILE: &str = "S_hat.txt";
pub const RUN_INFO_FILE: &str = "run.txt";
pub const STATE_DIR: &str = "state";
pub const RUNS_CSV: &str = "runs.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
/// Per-run rows in completion order while a benchmark is in progress.
pub const JOURNAL_CSV: &str = "runs.partial.csv";

pub const RUNS_HEADER: &str = "method,snr_c_db,snr_s_db,seed,df,re,le_mm,auc";
pub const SUMMARY_HEADER: &str = "method,snr_c_db,snr_s_db,df,re,le_mm,auc";
pub const TREE_HEADER: &str = "record,id,pc1,pc2,pc3,from,to,full_length,projected_length";

/// Config hash and seed stamped on every output file.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        Provenance {
            config_hash: cfg.hash(),
            seed,
        }
    }

    pub fn comments(&self) -> Vec<String> {
        vec![format!("config_hash {}", self.config_hash), format!("seed {}", self.seed)]
    }

    pub fn header(&self) -> String {
        self.comments().iter().map(|c| format!("# {c}\n")).collect()
    }
}

/// One (channel SNR, source SNR, repetition) point of the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub channel_index: usize,
    pub source_index: usize,
    pub repetition: usize,
    pub snr_channel_db: f64,
    pub snr_source_db: f64,
    pub seed: u64,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        format!(
            "c{}_s{}_r{}",
            format_snr(self.snr_channel_db),
            format_snr(self.snr_source_db),
            self.repetition
        )
    }
}

/// Cells in grid order: channel SNR, then source SNR, then repetition.
pub fn grid_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for (ci, &c) in cfg.grid.snr_channel_db.iter().enumerate() {
        for (si, &s) in cfg.grid.snr_source_db.iter().enumerate() {
            for rep in 0..cfg.repetitions {
                out.push(Cell {
                    channel_index: ci,
                    source_index: si,
                    repetition: rep,
                    snr_channel_db: c,
                    snr_source_db: s,
                    seed: derive_seed(cfg.seed, &[ci as u64, si as u64, rep as u64]),
                });
            }
        }
    }
    out
}

/// Seed of the landmark initialization, derived from the cell seed.
pub fn fit_seed(cell_seed: u64) -> u64 {
    derive_seed(cell_seed, &[5])
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    if jobs == 0 {
        return Err(CliError::Validation("--jobs: must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Compute(format!("thread pool: {e}")))
}

/// Simulated data for one cell, with its truth.
pub struct Instance {
    pub cell: Cell,
    pub geo: Geometry,
    pub x: DMatrix<f64>,
    pub truth: GroundTruth,
}

pub fn simulate_cell(cfg: &ExperimentConfig, geo: &Geometry, cell: Cell) -> Result<(DMatrix<f64>, GroundTruth), CliError> {
    let sim = cfg.simulation_config(cell.snr_channel_db, cell.snr_source_db, cell.seed);
    Ok(simulate(&geo.mesh, &geo.lead, &sim)?)
}

fn instance_text(cell: &Cell, prov: &Provenance) -> String {
    format!(
        "{}snr_channel_db {}\nsnr_source_db {}\nchannel_index {}\nsource_index {}\nrepetition {}\ncell_seed {}\n",
        prov.header(),
        format_snr(cell.snr_channel_db),
        format_snr(cell.snr_source_db),
        cell.channel_index,
        cell.source_index,
        cell.repetition,
        cell.seed
    )
}

fn parse_instance(text: &str, path: &Path) -> Result<Cell, CliError> {
    let mut cell = Cell {
        channel_index: 0,
        source_index: 0,
        repetition: 0,
        snr_channel_db: f64::NAN,
        snr_source_db: f64::NAN,
        seed: 0,
    };
    let mut seen = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || CliError::Io(format!("{}:{}: cannot parse {line:?}", path.display(), i + 1));
        let (key, value) = line.split_once(' ').ok_or_else(bad)?;
        let value = value.trim();
        match key {
            "snr_channel_db" => cell.snr_channel_db = value.parse().map_err(|_| bad())?,
            "snr_source_db" => cell.snr_source_db = value.parse().map_err(|_| bad())?,
            "channel_index" => cell.channel_index = value.parse().map_err(|_| bad())?,
            "source_index" => cell.source_index = value.parse().map_err(|_| bad())?,
            "repetition" => cell.repetition = value.parse().map_err(|_| bad())?,
            "cell_seed" => cell.seed = value.parse().map_err(|_| bad())?,
            _ => return Err(bad()),
        }
        seen += 1;
    }
    if seen != 6 {
        return Err(CliError::Io(format!("{}: expected 6 entries, found {seen}", path.display())));
    }
    Ok(cell)
}

/// Write one self-contained instance directory.
pub fn write_instance(
    dir: &Path,
    geo: &Geometry,
    cell: &Cell,
    x: &DMatrix<f64>,
    truth: &GroundTruth,
    prov: &Provenance,
) -> Result<(), CliError> {
    create_dir(dir)?;
    let comments = prov.comments();
    write_text(&dir.join(MESH_FILE), &format!("{}{}", prov.header(), geo.mesh.to_text()))?;
    save_matrix_with_comments(dir.join(SENSORS_FILE), &geo.sensors.to_matrix(), &comments)?;
    save_matrix_with_comments(dir.join(LEAD_FILE), geo.lead.matrix(), &comments)?;
    save_matrix_with_comments(dir.join(DATA_FILE), x, &comments)?;
    truth.save(dir, &comments)?;
    write_text(&dir.join(INSTANCE_FILE), &instance_text(cell, prov))
}

/// Read an instance directory; the basis is rebuilt from the config.
pub fn load_instance(cfg: &ExperimentConfig, dir: &Path) -> Result<Instance, CliError> {
    let info_path = dir.join(INSTANCE_FILE);
    let text = fs::read_to_string(&info_path).map_err(|e| CliError::io(&info_path, e))?;
    let cell = parse_instance(&text, &info_path)?;
    let mesh = TriangleMesh::load(dir.join(MESH_FILE))?;
    let sensors = SensorArray::from_matrix(&load_matrix(dir.join(SENSORS_FILE))?)?;
    let lead = LeadField::new(load_matrix(dir.join(LEAD_FILE))?)?;
    let rho = cfg.geometry.basis_rho_mm.unwrap_or_else(|| default_rho(&mesh));
    let basis = build_spatial_basis(&mesh, rho, cfg.geometry.basis_neighbors)?;
    // the stored lead field is already the one the data were simulated with
    let geo = Geometry::from_parts(mesh, sensors, lead, basis, false)?;
    let x = load_matrix(dir.join(DATA_FILE))?;
    let truth = GroundTruth::load(dir)?;
    Ok(Instance { cell, geo, x, truth })
}

/// `simulate`: one instance directory per grid cell under `out`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Vec<PathBuf>, CliError> {
    let geo = Geometry::build(&cfg.geometry_config())?;
    create_dir(out)?;
    let pool = thread_pool(jobs)?;
    let cells = grid_cells(cfg);
    pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let dir = out.join(cell.dir_name());
                let (x, truth) = simulate_cell(cfg, &geo, *cell)?;
                write_instance(&dir, &geo, cell, &x, &truth, &Provenance::new(cfg, cell.seed))?;
                Ok(dir)
            })
            .collect()
    })
}

pub fn run_method(cfg: &ExperimentConfig, run: &MethodRun, geo: &Geometry, x: &DMatrix<f64>, cell_seed: u64) -> Result<Estimate, CliError> {
    let params = cfg.method_params(run.gamma1, fit_seed(cell_seed));
    Ok(estimate(run.method, geo, x, &params)?)
}

fn run_info(est: &Estimate, prov: &Provenance) -> String {
    let mut s = prov.header();
    let _ = writeln!(s, "method {}", est.method);
    let _ = writeln!(s, "data_scale {}", est.data_scale);
    let _ = writeln!(s, "solver_warning {}", est.solver_warning);
    if let Some(a) = est.alpha {
        let _ = writeln!(s, "alpha {a}");
    }
    if let Some(m) = &est.model {
        let _ = writeln!(s, "outer_iterations {}", m.outer_iterations);
        let _ = writeln!(s, "converged {}", m.converged);
        let _ = writeln!(s, "max_inner_kkt {}", m.max_inner_kkt);
    }
    s
}

/// `fit`: every configured method on one instance. Results go to
/// `out/<method>/`, by default `out = <instance>/fit`.
pub fn cmd_fit(cfg: &ExperimentConfig, instance_dir: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let inst = load_instance(cfg, instance_dir)?;
    let root = out.map(Path::to_path_buf).unwrap_or_else(|| instance_dir.join("fit"));
    let prov = Provenance::new(cfg, inst.cell.seed);
    let mut written = Vec::new();
    for run in cfg.method_runs() {
        let est = run_method(cfg, &run, &inst.geo, &inst.x, inst.cell.seed)?;
        let dir = root.join(run.label());
        create_dir(&dir)?;
        save_matrix_with_comments(dir.join(ESTIMATE_FILE), &est.s_hat, &prov.comments())?;
        if let Some(state) = &est.model {
            save_state(&dir.join(STATE_DIR), state, &prov.comments())?;
        }
        write_text(&dir.join(RUN_INFO_FILE), &run_info(&est, &prov))?;
        written.push(dir);
    }
    Ok(written)
}

/// `metrics`: score the estimates under `fit_dir` against the instance truth.
/// Returns the CSV text, one [`MetricReport`] row per configured method.
pub fn cmd_metrics(cfg: &ExperimentConfig, instance_dir: &Path, fit_dir: Option<&Path>) -> Result<String, CliError> {
    let inst = load_instance(cfg, instance_dir)?;
    let root = fit_dir.map(Path::to_path_buf).unwrap_or_else(|| instance_dir.join("fit"));
    let prov = Provenance::new(cfg, inst.cell.seed);
    let mut csv = format!("{}{CSV_HEADER}\n", prov.header());
    for run in cfg.method_runs() {
        let s_hat = load_matrix(root.join(run.label()).join(ESTIMATE_FILE))?;
        let report = hgesi::metrics::evaluate(
            &inst.geo.mesh,
            &inst.geo.table,
            &inst.x,
            inst.geo.lead.matrix(),
            &s_hat,
            &inst.truth,
        )?;
        let _ = writeln!(
            csv,
            "{}",
            report.csv_row(&run.label(), inst.cell.snr_channel_db, inst.cell.snr_source_db, inst.cell.seed)
        );
    }
    Ok(csv)
}

/// Leading `# ` lines of a file, without the marker.
fn leading_comments(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .map_while(|l| l.strip_prefix('#'))
        .map(|l| l.trim().to_string())
        .collect())
}

/// `export-tree`: landmarks of a saved state projected on their first three
/// principal components, and the tree edges with full and projected lengths.
pub fn cmd_export_tree(state_dir: &Path, out: &Path) -> Result<(), CliError> {
    let (c, g) = load_landmarks(state_dir)?;
    let proj = project_tree_pca(&c, &g, 3)?;
    let mut csv: String = leading_comments(&state_dir.join("C.txt"))?
        .iter()
        .map(|l| format!("# {l}\n"))
        .collect();
    let _ = writeln!(csv, "{TREE_HEADER}");
    for k in 0..c.ncols() {
        let p = proj.coords.row(k);
        let _ = writeln!(csv, "landmark,{k},{},{},{},,,,", p[0], p[1], p[2]);
    }
    for (e, &(a, b)) in proj.edges.iter().enumerate() {
        let full = (c.column(a) - c.column(b)).norm();
        let projected = (proj.coords.row(a) - proj.coords.row(b)).norm();
        let _ = writeln!(csv, "edge,{e},,,,{a},{b},{full},{projected}");
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_text(out, &csv)
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub label: String,
    pub cell: Cell,
    pub report: MetricReport,
    pub seconds: f64,
    pub solver_warning: bool,
    /// Outer cycles and convergence of the proposed method.
    pub outer: Option<(usize, bool)>,
}

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.label,
            format_snr(self.cell.snr_channel_db),
            format_snr(self.cell.snr_source_db),
            self.cell.seed,
            self.report.df,
            self.report.re,
            self.report.le_mean_mm,
            self.report.auc
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub snr_channel_db: f64,
    pub snr_source_db: f64,
    pub df: f64,
    pub re: f64,
    pub le_mm: f64,
    pub auc: f64,
    pub runs: usize,
}

impl SummaryRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.label,
            format_snr(self.snr_channel_db),
            format_snr(self.snr_source_db),
            self.df,
            self.re,
            self.le_mm,
            self.auc
        )
    }
}

/// Arithmetic means over repetitions, per (method, SNR pair), in the order
/// the pairs and methods first appear in `runs`.
pub fn summarize(runs: &[RunRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut keys: Vec<(String, usize, usize)> = Vec::new();
    for r in runs {
        let key = (r.label.clone(), r.cell.channel_index, r.cell.source_index);
        let idx = match keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                keys.push(key);
                rows.push(SummaryRow {
                    label: r.label.clone(),
                    snr_channel_db: r.cell.snr_channel_db,
                    snr_source_db: r.cell.snr_source_db,
                    df: 0.0,
                    re: 0.0,
                    le_mm: 0.0,
                    auc: 0.0,
                    runs: 0,
                });
                rows.len() - 1
            }
        };
        let row = &mut rows[idx];
        row.df += r.report.df;
        row.re += r.report.re;
        row.le_mm += r.report.le_mean_mm;
        row.auc += r.report.auc;
        row.runs += 1;
    }
    for row in &mut rows {
        let n = row.runs as f64;
        row.df /= n;
        row.re /= n;
        row.le_mm /= n;
        row.auc /= n;
    }
    // grid order first, then method order within a pair
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&i| (keys[i].1, keys[i].2));
    order.into_iter().map(|i| rows[i].clone()).collect()
}

pub struct BenchmarkOutcome {
    /// Grid order, methods in config order within a cell.
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub runs_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub wall_seconds: f64,
}

fn evaluate_cell(cfg: &ExperimentConfig, geo: &Geometry, cell: Cell) -> Result<Vec<RunRecord>, CliError> {
    let (x, truth) = simulate_cell(cfg, geo, cell)?;
    let mut out = Vec::new();
    for run in cfg.method_runs() {
        let t = Instant::now();
        let est = run_method(cfg, &run, geo, &x, cell.seed)?;
        let seconds = t.elapsed().as_secs_f64();
        let report = score(geo, &x, &est, &truth)?;
        if est.solver_warning {
            log::warn!("{} in {}: solver stopped short of tolerance", run.label(), cell.dir_name());
        }
        out.push(RunRecord {
            label: run.label(),
            cell,
            report,
            seconds,
            solver_warning: est.solver_warning,
            outer: est.model.as_ref().map(|m| (m.outer_iterations, m.converged)),
        });
    }
    Ok(out)
}

/// `benchmark`: simulate, fit and score every grid cell with up to `jobs`
/// cells in flight. Rows are journaled as cells finish; the final CSVs are
/// written in grid order so they do not depend on `jobs`.
pub fn cmd_benchmark(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<BenchmarkOutcome, CliError> {
    let start = Instant::now();
    let geo = Geometry::build(&cfg.geometry_config())?;
    create_dir(out)?;
    let prov = Provenance::new(cfg, cfg.seed);
    let journal_path = out.join(JOURNAL_CSV);
    let file = File::create(&journal_path).map_err(|e| CliError::io(&journal_path, e))?;
    let journal = Mutex::new(BufWriter::new(file));
    {
        let mut w = journal.lock().expect("journal lock");
        write!(w, "{}{RUNS_HEADER}\n", prov.header()).map_err(|e| CliError::io(&journal_path, e))?;
        w.flush().map_err(|e| CliError::io(&journal_path, e))?;
    }

    let pool = thread_pool(jobs)?;
    let cells = grid_cells(cfg);
    let per_cell: Vec<Vec<RunRecord>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&cell| {
                let recs = evaluate_cell(cfg, &geo, cell)?;
                let mut w = journal.lock().expect("journal lock");
                for r in &recs {
                    writeln!(w, "{}", r.csv_row()).map_err(|e| CliError::io(&journal_path, e))?;
                }
                w.flush().map_err(|e| CliError::io(&journal_path, e))?;
                log::info!("{} done", cell.dir_name());
                Ok(recs)
            })
            .collect::<Result<_, CliError>>()
    })?;
    drop(journal);

    let runs: Vec<RunRecord> = per_cell.into_iter().flatten().collect();
    let summary = summarize(&runs);
    let mut runs_text = format!("{}{RUNS_HEADER}\n", prov.header());
    for r in &runs {
        let _ = writeln!(runs_text, "{}", r.csv_row());
    }
    let mut summary_text = format!("{}{SUMMARY_HEADER}\n", prov.header());
    for s in &summary {
        let _ = writeln!(summary_text, "{}", s.csv_row());
    }
    let runs_csv = out.join(RUNS_CSV);
    let summary_csv = out.join(SUMMARY_CSV);
    write_text(&runs_csv, &runs_text)?;
    write_text(&summary_csv, &summary_text)?;
    fs::remove_file(&journal_path).map_err(|e| CliError::io(&journal_path, e))?;
    Ok(BenchmarkOutcome {
        runs,
        summary,
        runs_csv,
        summary_csv,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
