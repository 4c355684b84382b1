//! Lloyd's k-means over the columns of a matrix, used to initialize the
//! landmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const KMEANS_MAX_ITER: usize = 50;

fn sq(a: nalgebra::DVectorView<'_, f64>, b: nalgebra::DVectorView<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Centroids (as columns) of `k` clusters of the columns of `s`.
///
/// Seeding is k-means++ (D² sampling from a ChaCha8 stream seeded with
/// `seed`); an empty cluster is re-seeded with the point farthest from its
/// current centroid.
pub fn kmeans_init(s: &DMatrix<f64>, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    let n = s.ncols();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "cluster count {k} must be in 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq(s.column(i), s.column(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    if u < w {
                        pick = Some(i);
                        break;
                    }
                    u -= w;
                }
            }
            // rounding can run past the end; take the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // all remaining points coincide with a center
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, di) in d2.iter_mut().enumerate() {
            *di = di.min(sq(s.column(i), s.column(next)));
        }
    }
    let mut centers = DMatrix::zeros(s.nrows(), k);
    for (j, &i) in chosen.iter().enumerate() {
        centers.set_column(j, &s.column(i));
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let mut best = (f64::INFINITY, 0);
            for j in 0..k {
                let d = sq(s.column(i), centers.column(j));
                if d < best.0 {
                    best = (d, j);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::zeros(s.nrows(), k);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut col = sums.column_mut(labels[i]);
            col += s.column(i);
            counts[labels[i]] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers.set_column(j, &(sums.column(j) / counts[j] as f64));
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq(s.column(a), centers.column(labels[a]));
                        let db = sq(s.column(b), centers.column(labels[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap();
                centers.set_column(j, &s.column(far));
                labels[far] = j;
            }
        }
    }
    Ok(centers)
}
