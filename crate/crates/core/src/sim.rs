//! Synthetic experiment: state-switching AR(5) activity on random cortical
//! patches (one per hemisphere and state), forward projection, and noise
//! injection at a prescribed empirical SNR in source and channel space.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::forward::LeadField;
use crate::io::{load_matrix, save_matrix_with_comments};
use crate::mesh::{Hemisphere, TriangleMesh};

pub const AR_ORDER: usize = 5;
pub const AR_BURN_IN: usize = 500;
pub const POLE_RADIUS_MIN: f64 = 0.5;
pub const POLE_RADIUS_MAX: f64 = 0.95;

pub const TRUTH_MATRIX_FILE: &str = "S_true.txt";
pub const TRUTH_SIDECAR_FILE: &str = "truth.txt";

/// Channel and source SNR levels of the benchmark grid, in dB.
pub const CHANNEL_SNR_GRID: [f64; 3] = [30.0, 20.0, 10.0];
pub const SOURCE_SNR_GRID: [f64; 3] = [f64::INFINITY, 30.0, 10.0];

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub n_states: usize,
    pub samples_per_state: usize,
    pub sample_rate_hz: f64,
    pub snr_channel_db: f64,
    pub snr_source_db: f64,
    /// Geodesic patch radius in millimeters.
    pub patch_radius: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_states: 3,
            samples_per_state: 200,
            sample_rate_hz: 100.0,
            snr_channel_db: 30.0,
            snr_source_db: f64::INFINITY,
            patch_radius: 10.0,
            seed: 0,
        }
    }
}

fn check_snr(name: &str, v: f64) -> Result<()> {
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("{name} must be a real number or +inf, got {v}")));
    }
    Ok(())
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::invalid("n_states must be at least 1"));
        }
        if self.samples_per_state == 0 {
            return Err(Error::invalid("samples_per_state must be at least 1"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.patch_radius >= 0.0 && self.patch_radius.is_finite()) {
            return Err(Error::invalid(format!(
                "patch_radius must be a non-negative number, got {}",
                self.patch_radius
            )));
        }
        check_snr("snr_channel_db", self.snr_channel_db)?;
        check_snr("snr_source_db", self.snr_source_db)
    }

    pub fn n_times(&self) -> usize {
        self.n_states * self.samples_per_state
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for a labelled component: the master seed xor-ed with a hash of
/// the labels, so nearby labels give unrelated streams.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3u64;
    for &l in labels {
        h = splitmix64(h ^ l);
    }
    master ^ h
}

/// Characteristic polynomial `z⁵ + a₁z⁴ + … + a₅` of two conjugate pole
/// pairs and one real pole; returns `[a₁, …, a₅]`.
fn ar5_coefficients(rng: &mut ChaCha8Rng) -> [f64; AR_ORDER] {
    let mut poly = vec![1.0];
    let mul = |p: &[f64], q: &[f64]| {
        let mut out = vec![0.0; p.len() + q.len() - 1];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    };
    for _ in 0..2 {
        let r = rng.random_range(POLE_RADIUS_MIN..=POLE_RADIUS_MAX);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        poly = mul(&poly, &[1.0, -2.0 * r * theta.cos(), r * r]);
    }
    let r = rng.random_range(POLE_RADIUS_MIN..=POLE_RADIUS_MAX);
    let p = if rng.random::<bool>() { r } else { -r };
    poly = mul(&poly, &[1.0, -p]);
    let mut a = [0.0; AR_ORDER];
    a.copy_from_slice(&poly[1..]);
    a
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter_mut().for_each(|x| *x -= mean);
    let var = v.iter().map(|x| x * x).sum::<f64>() / n;
    if var > 0.0 {
        let inv = 1.0 / var.sqrt();
        v.iter_mut().for_each(|x| *x *= inv);
    }
}

/// Stationary AR(5) series of length `n`, standardized to zero mean and unit
/// (population) variance. A length-1 series standardizes to `[0.0]`.
pub fn gen_ar5(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("series length must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = ar5_coefficients(&mut rng);
    let total = n + AR_BURN_IN;
    let mut y = vec![0.0; total];
    for t in 0..total {
        let mut v: f64 = rng.sample(StandardNormal);
        for (k, ak) in a.iter().enumerate() {
            if t > k {
                v -= ak * y[t - k - 1];
            }
        }
        y[t] = v;
    }
    let mut out = y.split_off(AR_BURN_IN);
    standardize(&mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatePatches {
    /// Indexed by `Hemisphere::index()`.
    pub centers: [usize; 2],
    /// Patch members, sorted, center included.
    pub patches: [Vec<usize>; 2],
}

impl StatePatches {
    pub fn active_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.patches.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn hemisphere_eccentricity_max(mesh: &TriangleMesh, verts: &[usize]) -> f64 {
    verts
        .iter()
        .map(|&v| {
            mesh.distances_from(v)
                .into_iter()
                .filter(|d| d.is_finite())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn patch_around(mesh: &TriangleMesh, center: usize, radius: f64) -> Vec<usize> {
    mesh.distances_from(center)
        .iter()
        .enumerate()
        .filter(|(_, d)| **d <= radius)
        .map(|(i, _)| i)
        .collect()
}

/// One uniformly random center per hemisphere and state (distinct across
/// states) and the geodesic ball of `patch_radius` around it.
pub fn select_patches(
    mesh: &TriangleMesh,
    n_states: usize,
    patch_radius: f64,
    seed: u64,
) -> Result<Vec<StatePatches>> {
    if n_states == 0 {
        return Err(Error::invalid("n_states must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![[0usize; 2]; n_states];
    for h in Hemisphere::BOTH {
        let verts = mesh.hemisphere_vertices(h);
        if verts.len() < n_states {
            return Err(Error::invalid(format!(
                "{h} hemisphere has {} vertices, {n_states} distinct centers needed",
                verts.len()
            )));
        }
        let diameter = hemisphere_eccentricity_max(mesh, &verts);
        if patch_radius >= diameter {
            return Err(Error::invalid(format!(
                "patch radius {patch_radius} is not below the {h} hemisphere diameter {diameter}"
            )));
        }
        for (st, idx) in sample(&mut rng, verts.len(), n_states).into_iter().enumerate() {
            centers[st][h.index()] = verts[idx];
        }
    }
    Ok(centers
        .into_iter()
        .map(|c| StatePatches {
            centers: c,
            patches: [
                patch_around(mesh, c[0], patch_radius),
                patch_around(mesh, c[1], patch_radius),
            ],
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub s_true: DMatrix<f64>,
    pub states: Vec<StatePatches>,
    /// `n_states + 1` sample indices; state `k` spans `boundaries[k]..boundaries[k+1]`.
    pub boundaries: Vec<usize>,
}

impl GroundTruth {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_range(&self, state: usize) -> Result<Range<usize>> {
        if state >= self.states.len() {
            return Err(Error::IndexOutOfRange {
                index: state,
                len: self.states.len(),
            });
        }
        Ok(self.boundaries[state]..self.boundaries[state + 1])
    }

    pub fn sidecar_text(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "states {}", self.states.len());
        let b: Vec<String> = self.boundaries.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "boundaries {}", b.join(" "));
        for (k, st) in self.states.iter().enumerate() {
            for h in Hemisphere::BOTH {
                let p: Vec<String> = st.patches[h.index()].iter().map(|v| v.to_string()).collect();
                let _ = writeln!(
                    out,
                    "state {k} {h} center {} patch {}",
                    st.centers[h.index()],
                    p.join(" ")
                );
            }
        }
        out
    }

    /// Parses the sidecar and attaches `s_true`, checking that boundaries and
    /// vertex indices fit the matrix.
    pub fn from_sidecar(text: &str, s_true: DMatrix<f64>, origin: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut n_states = None;
        let mut boundaries = Vec::new();
        let mut slots: Vec<[Option<(usize, Vec<usize>)>; 2]> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = t.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| perr(line, format!("expected a non-negative integer, got {s:?}")))
            };
            match toks[0] {
                "states" if toks.len() == 2 => {
                    let n = num(toks[1])?;
                    n_states = Some(n);
                    slots = vec![[None, None]; n];
                }
                "boundaries" => {
                    boundaries = toks[1..].iter().map(|s| num(s)).collect::<Result<_>>()?;
                }
                "state" if toks.len() >= 6 && toks[3] == "center" && toks[5] == "patch" => {
                    let k = num(toks[1])?;
                    let h: Hemisphere = toks[2].parse().map_err(|_| {
                        perr(line, format!("unknown hemisphere {:?}", toks[2]))
                    })?;
                    let c = num(toks[4])?;
                    let p = toks[6..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
                    let slot = slots
                        .get_mut(k)
                        .ok_or_else(|| perr(line, format!("state {k} out of range")))?;
                    slot[h.index()] = Some((c, p));
                }
                _ => return Err(perr(line, format!("unrecognized line {t:?}"))),
            }
        }
        let n = n_states.ok_or_else(|| perr(1, "missing 'states' line".into()))?;
        if boundaries.len() != n + 1 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(perr(1, "boundaries must be n_states + 1 increasing indices".into()));
        }
        if boundaries[0] != 0 || boundaries[n] != s_true.ncols() {
            return Err(Error::dim(format!(
                "boundaries span {}..{}, S_true has {} columns",
                boundaries[0],
                boundaries[n],
                s_true.ncols()
            )));
        }
        let mut states = Vec::with_capacity(n);
        for (k, slot) in slots.into_iter().enumerate() {
            let [l, r] = slot;
            let (Some((cl, pl)), Some((cr, pr))) = (l, r) else {
                return Err(perr(1, format!("state {k} lacks a hemisphere entry")));
            };
            for &v in pl.iter().chain(&pr).chain([&cl, &cr]) {
                if v >= s_true.nrows() {
                    return Err(Error::IndexOutOfRange {
                        index: v,
                        len: s_true.nrows(),
                    });
                }
            }
            states.push(StatePatches {
                centers: [cl, cr],
                patches: [pl, pr],
            });
        }
        Ok(GroundTruth {
            s_true,
            states,
            boundaries,
        })
    }

    pub fn save(&self, dir: &Path, comments: &[String]) -> Result<()> {
        save_matrix_with_comments(dir.join(TRUTH_MATRIX_FILE), &self.s_true, comments)?;
        let p = dir.join(TRUTH_SIDECAR_FILE);
        fs::write(&p, self.sidecar_text(comments)).map_err(|e| Error::io(&p, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let s = load_matrix(dir.join(TRUTH_MATRIX_FILE))?;
        let p = dir.join(TRUTH_SIDECAR_FILE);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        GroundTruth::from_sidecar(&text, s, &p)
    }
}

pub fn build_ground_truth(mesh: &TriangleMesh, cfg: &SimulationConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let states = select_patches(mesh, cfg.n_states, cfg.patch_radius, derive_seed(cfg.seed, &[1]))?;
    let t = cfg.samples_per_state;
    let mut s = DMatrix::zeros(mesh.n_vertices(), cfg.n_times());
    for (k, st) in states.iter().enumerate() {
        for h in Hemisphere::BOTH {
            let series = gen_ar5(t, derive_seed(cfg.seed, &[2, k as u64, h.index() as u64]))?;
            let center = st.centers[h.index()];
            let dist = mesh.distances_from(center);
            for &v in &st.patches[h.index()] {
                let w = if v == center || cfg.patch_radius == 0.0 {
                    1.0
                } else {
                    (-(dist[v] / cfg.patch_radius).powi(2)).exp()
                };
                for (j, y) in series.iter().enumerate() {
                    s[(v, k * t + j)] = w * y;
                }
            }
        }
    }
    Ok(GroundTruth {
        s_true: s,
        states,
        boundaries: (0..=cfg.n_states).map(|k| k * t).collect(),
    })
}

/// `P = ‖M‖_F² / (rows·cols)`.
pub fn signal_power(m: &DMatrix<f64>) -> f64 {
    m.norm_squared() / m.len() as f64
}

/// `10·log₁₀(P_signal / P_noise)`.
pub fn snr_db(signal: &DMatrix<f64>, noise: &DMatrix<f64>) -> f64 {
    10.0 * (signal_power(signal) / signal_power(noise)).log10()
}

/// Adds Gaussian noise rescaled so the empirical SNR equals `snr_db`.
pub fn add_noise_snr(m: &DMatrix<f64>, snr_db: f64, seed: u64) -> Result<DMatrix<f64>> {
    check_snr("snr_db", snr_db)?;
    if snr_db == f64::INFINITY {
        return Ok(m.clone());
    }
    let ps = signal_power(m);
    if ps == 0.0 {
        return Err(Error::Degenerate(
            "cannot set a finite SNR on an all-zero signal".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = DMatrix::from_fn(m.nrows(), m.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let target = ps / 10f64.powf(snr_db / 10.0);
    noise *= (target / signal_power(&noise)).sqrt();
    Ok(m + noise)
}

/// Returns the channel data and the clean ground truth.
pub fn simulate(
    mesh: &TriangleMesh,
    lead: &LeadField,
    cfg: &SimulationConfig,
) -> Result<(DMatrix<f64>, GroundTruth)> {
    if lead.composed_with_basis() {
        return Err(Error::invalid(
            "simulation needs the physical lead field, not one composed with the basis",
        ));
    }
    if lead.n_sources() != mesh.n_vertices() {
        return Err(Error::dim(format!(
            "lead field has {} sources, mesh has {} vertices",
            lead.n_sources(),
            mesh.n_vertices()
        )));
    }
    let truth = build_ground_truth(mesh, cfg)?;
    let s_noisy = add_noise_snr(&truth.s_true, cfg.snr_source_db, derive_seed(cfg.seed, &[3]))?;
    let clean = lead.matrix() * s_noisy;
    let x = add_noise_snr(&clean, cfg.snr_channel_db, derive_seed(cfg.seed, &[4]))?;
    Ok((x, truth))
}
