//! Evaluation metrics: data fit (r²), reconstruction error, per-hemisphere
//! localization error and the ROC area of per-vertex energy against the
//! true active patches.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{GeodesicTable, Hemisphere, TriangleMesh};
use crate::sim::GroundTruth;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub df: f64,
    pub re: f64,
    pub le_left_mm: f64,
    pub le_right_mm: f64,
    pub le_mean_mm: f64,
    pub auc: f64,
    /// Some state/hemisphere had an all-zero estimate and was charged the
    /// hemisphere diameter.
    pub le_flagged: bool,
}

pub const CSV_HEADER: &str = "method,snr_channel_db,snr_source_db,seed,df,re,le_mean_mm,auc";

pub fn format_snr(db: f64) -> String {
    if db == f64::INFINITY {
        "inf".into()
    } else {
        format!("{db}")
    }
}

impl MetricReport {
    pub fn csv_row(&self, method: &str, snr_channel_db: f64, snr_source_db: f64, seed: u64) -> String {
        format!(
            "{method},{},{},{seed},{},{},{},{}",
            format_snr(snr_channel_db),
            format_snr(snr_source_db),
            self.df,
            self.re,
            self.le_mean_mm,
            self.auc
        )
    }
}

/// `|1 − E_res/E_tot|` with `E_tot` taken around the temporal mean column.
pub fn data_fit(x: &DMatrix<f64>, l: &DMatrix<f64>, s_hat: &DMatrix<f64>) -> Result<f64> {
    if l.nrows() != x.nrows() || l.ncols() != s_hat.nrows() || s_hat.ncols() != x.ncols() {
        return Err(Error::dim(format!(
            "X {}×{}, L {}×{}, S {}×{}",
            x.nrows(),
            x.ncols(),
            l.nrows(),
            l.ncols(),
            s_hat.nrows(),
            s_hat.ncols()
        )));
    }
    let mut mean = x.column_sum();
    mean /= x.ncols() as f64;
    let mut e_tot = 0.0;
    for c in x.column_iter() {
        e_tot += (c - &mean).norm_squared();
    }
    if e_tot == 0.0 {
        return Err(Error::Degenerate("data are constant over time".into()));
    }
    let e_res = (x - l * s_hat).norm_squared();
    Ok((1.0 - e_res / e_tot).abs())
}

/// `‖Ŝ − S‖_F² / ‖S‖_F²`.
pub fn reconstruction_error(s_hat: &DMatrix<f64>, s_true: &DMatrix<f64>) -> Result<f64> {
    if s_hat.shape() != s_true.shape() {
        return Err(Error::dim(format!(
            "estimate {:?} vs truth {:?}",
            s_hat.shape(),
            s_true.shape()
        )));
    }
    let d = s_true.norm_squared();
    if d == 0.0 {
        return Err(Error::Degenerate("true sources are all zero".into()));
    }
    Ok((s_hat - s_true).norm_squared() / d)
}

/// Mean of `|ŝ_v|` over the state's samples, per vertex.
pub fn state_energy(s_hat: &DMatrix<f64>, truth: &GroundTruth, state: usize) -> Result<Vec<f64>> {
    if s_hat.shape() != truth.s_true.shape() {
        return Err(Error::dim(format!(
            "estimate {:?} vs truth {:?}",
            s_hat.shape(),
            truth.s_true.shape()
        )));
    }
    let range = truth.state_range(state)?;
    let n = range.len() as f64;
    let block = s_hat.columns(range.start, range.len());
    Ok(block
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>() / n)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Localization {
    /// Indexed by `Hemisphere::index()`.
    pub le_mm: [f64; 2],
    pub peaks: [Option<usize>; 2],
}

impl Localization {
    pub fn mean(&self) -> f64 {
        0.5 * (self.le_mm[0] + self.le_mm[1])
    }

    pub fn flagged(&self) -> bool {
        self.peaks.iter().any(Option::is_none)
    }
}

/// Per hemisphere: geodesic distance from the energy peak (lowest index on
/// ties) to the true center. An all-zero hemisphere has no peak and is charged
/// the hemisphere diameter.
pub fn localization_error(
    mesh: &TriangleMesh,
    table: &GeodesicTable,
    s_hat: &DMatrix<f64>,
    truth: &GroundTruth,
    state: usize,
) -> Result<Localization> {
    if table.len() != mesh.n_vertices() || s_hat.nrows() != mesh.n_vertices() {
        return Err(Error::dim("mesh, distance table and estimate disagree on N_s"));
    }
    let energy = state_energy(s_hat, truth, state)?;
    let mut out = Localization {
        le_mm: [0.0; 2],
        peaks: [None; 2],
    };
    for h in Hemisphere::BOTH {
        let mut best: Option<(usize, f64)> = None;
        for v in mesh.hemisphere_vertices(h) {
            if energy[v] > best.map_or(0.0, |b| b.1) {
                best = Some((v, energy[v]));
            }
        }
        let center = truth.states[state].centers[h.index()];
        out.le_mm[h.index()] = match best {
            Some((v, _)) => {
                out.peaks[h.index()] = Some(v);
                table.get(v, center)
            }
            None => mesh.hemisphere_diameter(table, h),
        };
    }
    Ok(out)
}

/// Mann–Whitney ROC area with midranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&b| b).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("labels are all one class".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = n_pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

pub fn auc(s_hat: &DMatrix<f64>, truth: &GroundTruth, state: usize) -> Result<f64> {
    let scores = state_energy(s_hat, truth, state)?;
    let mut labels = vec![false; scores.len()];
    for v in truth.states[state].active_vertices() {
        labels[v] = true;
    }
    roc_auc(&scores, &labels)
}

/// DF and RE over the full record; LE and AUC averaged across states.
pub fn evaluate(
    mesh: &TriangleMesh,
    table: &GeodesicTable,
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    s_hat: &DMatrix<f64>,
    truth: &GroundTruth,
) -> Result<MetricReport> {
    let df = data_fit(x, l, s_hat)?;
    let re = reconstruction_error(s_hat, &truth.s_true)?;
    let n = truth.n_states() as f64;
    let mut report = MetricReport {
        df,
        re,
        le_left_mm: 0.0,
        le_right_mm: 0.0,
        le_mean_mm: 0.0,
        auc: 0.0,
        le_flagged: false,
    };
    for k in 0..truth.n_states() {
        let loc = localization_error(mesh, table, s_hat, truth, k)?;
        report.le_left_mm += loc.le_mm[0] / n;
        report.le_right_mm += loc.le_mm[1] / n;
        report.le_flagged |= loc.flagged();
        report.auc += auc(s_hat, truth, k)? / n;
    }
    report.le_mean_mm = 0.5 * (report.le_left_mm + report.le_right_mm);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_two_hemisphere_mesh;
    use crate::sim::{build_ground_truth, SimulationConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (TriangleMesh, GeodesicTable, GroundTruth) {
        let mesh = build_two_hemisphere_mesh(1, 35.0, 80.0).unwrap();
        let table = mesh.geodesic_table();
        let cfg = SimulationConfig {
            samples_per_state: 25,
            patch_radius: 12.0,
            seed: 4,
            ..Default::default()
        };
        let gt = build_ground_truth(&mesh, &cfg).unwrap();
        (mesh, table, gt)
    }

    #[test]
    fn data_fit_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = DMatrix::from_fn(4, 6, |_, _| rng.random::<f64>());
        let s = DMatrix::from_fn(6, 9, |_, _| rng.random::<f64>() - 0.5);
        let x = &l * &s;
        assert_eq!(data_fit(&x, &l, &s).unwrap(), 1.0);
        let mut xc = x.clone();
        let mean = xc.column_mean();
        for mut c in xc.column_iter_mut() {
            c -= &mean;
        }
        assert!(data_fit(&xc, &l, &DMatrix::zeros(6, 9)).unwrap().abs() < 1e-12);
        // loop oracle
        let sh = DMatrix::from_fn(6, 9, |_, _| rng.random::<f64>() - 0.5);
        let (mut et, mut er) = (0.0, 0.0);
        for i in 0..9 {
            for c in 0..4 {
                let xbar = (0..9).map(|t| x[(c, t)]).sum::<f64>() / 9.0;
                et += (x[(c, i)] - xbar).powi(2);
                let pred: f64 = (0..6).map(|j| l[(c, j)] * sh[(j, i)]).sum();
                er += (x[(c, i)] - pred).powi(2);
            }
        }
        assert!((data_fit(&x, &l, &sh).unwrap() - (1.0 - er / et).abs()).abs() < 1e-12);
        let constant = DMatrix::from_element(4, 9, 2.0);
        assert!(data_fit(&constant, &l, &s).is_err());
    }

    #[test]
    fn reconstruction_error_examples() {
        let s = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.0);
        assert_eq!(reconstruction_error(&s, &s).unwrap(), 0.0);
        assert_eq!(reconstruction_error(&DMatrix::zeros(3, 4), &s).unwrap(), 1.0);
        assert_eq!(reconstruction_error(&(&s * 2.0), &s).unwrap(), 1.0);
        for c in [-2.0, -0.5, 0.0, 0.3, 1.0, 3.0] {
            let re = reconstruction_error(&(&s * c), &s).unwrap();
            assert!((re - (c - 1.0f64).powi(2)).abs() < 1e-12);
        }
        assert!(reconstruction_error(&s, &DMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn auc_examples() {
        let labels = [true, false, true, false, false];
        assert_eq!(roc_auc(&[5.0, 1.0, 4.0, 2.0, 3.0], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.0, 9.0, 1.0, 8.0, 7.0], &labels).unwrap(), 0.0);
        assert_eq!(roc_auc(&[1.0; 5], &labels).unwrap(), 0.5);
        // one tie between a positive and a negative counts half
        assert_eq!(roc_auc(&[3.0, 3.0, 4.0, 1.0, 2.0], &labels).unwrap(), 5.5 / 6.0);
        assert!(roc_auc(&[1.0, 2.0], &[true, true]).is_err());
        assert!(roc_auc(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn auc_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = 30;
            let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 5.0).floor()).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            labels[0] = true;
            labels[1] = false;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if labels[i] && !labels[j] {
                        den += 1.0;
                        num += if scores[i] > scores[j] {
                            1.0
                        } else if scores[i] == scores[j] {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
            }
            assert!((roc_auc(&scores, &labels).unwrap() - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_estimator() {
        let (mesh, table, gt) = setup();
        let l = DMatrix::from_fn(8, mesh.n_vertices(), |i, j| ((i * 31 + j * 7) % 13) as f64 - 6.0);
        let x = &l * &gt.s_true;
        let r = evaluate(&mesh, &table, &x, &l, &gt.s_true, &gt).unwrap();
        assert_eq!(r.df, 1.0);
        assert_eq!(r.re, 0.0);
        assert_eq!(r.le_mean_mm, 0.0);
        assert_eq!(r.auc, 1.0);
        assert!(!r.le_flagged);
    }

    #[test]
    fn zero_estimator_charged_diameter() {
        let (mesh, table, gt) = setup();
        let z = DMatrix::zeros(gt.s_true.nrows(), gt.s_true.ncols());
        let loc = localization_error(&mesh, &table, &z, &gt, 0).unwrap();
        assert!(loc.flagged());
        assert_eq!(loc.le_mm[0], mesh.hemisphere_diameter(&table, Hemisphere::Left));
        assert_eq!(loc.le_mm[1], mesh.hemisphere_diameter(&table, Hemisphere::Right));
        assert_eq!(auc(&z, &gt, 0).unwrap(), 0.5);
        assert_eq!(reconstruction_error(&z, &gt.s_true).unwrap(), 1.0);
    }

    #[test]
    fn neighbor_peak_costs_one_edge() {
        let (mesh, table, gt) = setup();
        let c = gt.states[1].centers[0];
        let &(nb, len) = mesh.neighbors(c).first().unwrap();
        let mut s = gt.s_true.clone();
        s.row_mut(nb).copy_from(&(gt.s_true.row(c) * 10.0));
        let loc = localization_error(&mesh, &table, &s, &gt, 1).unwrap();
        assert_eq!(loc.peaks[0], Some(nb));
        assert!((loc.le_mm[0] - len).abs() < 1e-12);
        assert_eq!(loc.le_mm[1], 0.0);
    }

    #[test]
    fn localization_brute_force() {
        let (mesh, table, gt) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let s = DMatrix::from_fn(gt.s_true.nrows(), gt.s_true.ncols(), |_, _| {
                if rng.random::<f64>() < 0.05 {
                    rng.random::<f64>() - 0.5
                } else {
                    0.0
                }
            });
            for k in 0..gt.n_states() {
                let loc = localization_error(&mesh, &table, &s, &gt, k).unwrap();
                let r = gt.state_range(k).unwrap();
                for h in Hemisphere::BOTH {
                    let mut best = (usize::MAX, 0.0);
                    for v in mesh.hemisphere_vertices(h) {
                        let e: f64 = r.clone().map(|t| s[(v, t)].abs()).sum();
                        if e > best.1 {
                            best = (v, e);
                        }
                    }
                    let c = gt.states[k].centers[h.index()];
                    let expect = if best.0 == usize::MAX {
                        mesh.hemisphere_diameter(&table, h)
                    } else {
                        table.get(best.0, c)
                    };
                    assert_eq!(loc.le_mm[h.index()], expect);
                }
                let scaled = localization_error(&mesh, &table, &(&s * 3.7), &gt, k).unwrap();
                assert_eq!(scaled.le_mm, loc.le_mm);
            }
        }
    }

    #[test]
    fn csv_row_format() {
        let r = MetricReport {
            df: 0.5,
            re: 1.0,
            le_left_mm: 1.0,
            le_right_mm: 3.0,
            le_mean_mm: 2.0,
            auc: 0.75,
            le_flagged: false,
        };
        assert_eq!(
            r.csv_row("mne", 30.0, f64::INFINITY, 7),
            "mne,30,inf,7,0.5,1,2,0.75"
        );
        assert_eq!(CSV_HEADER.split(',').count(), r.csv_row("x", 1.0, 1.0, 0).split(',').count());
    }
}
