//! Lead-field construction, composition with the spatial basis, and
//! fixed-covariance whitening.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{Hemisphere, Point3, SpatialBasis, TriangleMesh};

/// Tissue conductivity (S/m) of the homogeneous conductor.
pub const CONDUCTIVITY: f64 = 0.3;

#[derive(Clone, Debug)]
pub struct SensorArray {
    positions: Vec<Point3>,
}

impl SensorArray {
    pub fn new(positions: Vec<Point3>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("sensor array is empty"));
        }
        for (i, a) in positions.iter().enumerate() {
            for b in &positions[..i] {
                if a == b {
                    return Err(Error::invalid(format!("duplicate sensor position {a:?}")));
                }
            }
        }
        Ok(SensorArray { positions })
    }

    /// `n` sensors on a Fibonacci lattice over a sphere of `radius` mm
    /// centered at the origin.
    pub fn fibonacci_sphere(n: usize, radius: f64) -> Result<Self> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let positions = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let th = golden * i as f64;
                [radius * r * th.cos(), radius * r * th.sin(), radius * z]
            })
            .collect();
        Self::new(positions)
    }

    /// Sensor sphere enclosing both hemispheres of a two-sphere mesh with a
    /// margin of `gap` mm.
    pub fn enclosing(n: usize, hemi_radius: f64, separation: f64, gap: f64) -> Result<Self> {
        Self::fibonacci_sphere(n, separation / 2.0 + hemi_radius + gap)
    }

    /// From an `n x 3` matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() != 3 {
            return Err(Error::dim(format!(
                "sensor matrix must have 3 columns, found {}",
                m.ncols()
            )));
        }
        Self::new(
            (0..m.nrows())
                .map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
                .collect(),
        )
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 3, |i, j| self.positions[i][j])
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `N_c x N_s` forward operator; `composed_with_basis` marks `L·Ψ`.
#[derive(Clone, Debug)]
pub struct LeadField {
    matrix: DMatrix<f64>,
    composed_with_basis: bool,
}

impl LeadField {
    /// Wrap an externally supplied matrix (used as-is, no re-referencing).
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::validated(matrix, false)
    }

    fn validated(matrix: DMatrix<f64>, composed: bool) -> Result<Self> {
        if let Some(v) = matrix.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("lead field has non-finite entry {v}")));
        }
        if let Some(j) = (0..matrix.ncols()).find(|&j| matrix.column(j).iter().all(|&v| v == 0.0))
        {
            return Err(Error::Degenerate(format!("lead field column {j} is all zero")));
        }
        Ok(LeadField {
            matrix,
            composed_with_basis: composed,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn composed_with_basis(&self) -> bool {
        self.composed_with_basis
    }

    pub fn n_sensors(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.matrix.ncols()
    }

    /// Multiply every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::validated(&self.matrix * factor, self.composed_with_basis)
    }

    /// Rescale globally so the mean column 2-norm is one. Relative column
    /// gains are preserved.
    pub fn normalized(&self) -> Result<(Self, f64)> {
        let mean = self.matrix.column_iter().map(|c| c.norm()).sum::<f64>()
            / self.n_sources() as f64;
        let factor = 1.0 / mean;
        Ok((self.scaled(factor)?, factor))
    }
}

/// Potentials of unit radial dipoles at each vertex in an infinite
/// homogeneous conductor, average referenced across sensors.
///
/// `centers` gives the sphere center of each hemisphere; the dipole at a
/// vertex points away from its hemisphere's center.
pub fn synth_lead_field_with_centers(
    sensors: &SensorArray,
    mesh: &TriangleMesh,
    centers: [Point3; 2],
    orientation_sign: f64,
) -> Result<LeadField> {
    let nc = sensors.len();
    let ns = mesh.n_vertices();
    if nc == 0 || ns == 0 {
        return Err(Error::invalid("empty sensor array or mesh"));
    }
    let k = 1.0 / (4.0 * std::f64::consts::PI * CONDUCTIVITY);
    let mut l = DMatrix::zeros(nc, ns);
    for (s, src) in mesh.vertices().iter().enumerate() {
        let c = centers[mesh.hemisphere(s).index()];
        let mut q = [src[0] - c[0], src[1] - c[1], src[2] - c[2]];
        let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
        if qn == 0.0 {
            return Err(Error::Degenerate(format!(
                "vertex {s} sits at its hemisphere center; radial direction undefined"
            )));
        }
        for v in q.iter_mut() {
            *v *= orientation_sign / qn;
        }
        for (i, r) in sensors.positions().iter().enumerate() {
            let d = [r[0] - src[0], r[1] - src[1], r[2] - src[2]];
            let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if dn < 1e-6 {
                return Err(Error::Degenerate(format!(
                    "sensor {i} coincides with source vertex {s}"
                )));
            }
            l[(i, s)] = k * (q[0] * d[0] + q[1] * d[1] + q[2] * d[2]) / (dn * dn * dn);
        }
        let mean = l.column(s).mean();
        for i in 0..nc {
            l[(i, s)] -= mean;
        }
    }
    LeadField::validated(l, false)
}

/// Centroid of each hemisphere's vertices (the sphere centers for meshes
/// from [`crate::mesh::build_two_hemisphere_mesh`]).
pub fn hemisphere_centroids(mesh: &TriangleMesh) -> [Point3; 2] {
    let mut acc = [[0.0; 3]; 2];
    let mut cnt = [0usize; 2];
    for (v, h) in mesh.vertices().iter().zip(mesh.hemisphere_labels()) {
        let k = h.index();
        for d in 0..3 {
            acc[k][d] += v[d];
        }
        cnt[k] += 1;
    }
    for h in Hemisphere::BOTH {
        let k = h.index();
        if cnt[k] > 0 {
            for d in 0..3 {
                acc[k][d] /= cnt[k] as f64;
            }
        }
    }
    acc
}

/// Outward radial dipoles relative to each hemisphere's centroid.
pub fn synth_lead_field(sensors: &SensorArray, mesh: &TriangleMesh) -> Result<LeadField> {
    synth_lead_field_with_centers(sensors, mesh, hemisphere_centroids(mesh), 1.0)
}

/// `L·Ψ`, flagged as composed.
pub fn compose_with_basis(lead: &LeadField, basis: &SpatialBasis) -> Result<LeadField> {
    if lead.composed_with_basis {
        return Err(Error::invalid("lead field is already composed with a basis"));
    }
    if lead.n_sources() != basis.dim() {
        return Err(Error::dim(format!(
            "lead field has {} sources, basis has dimension {}",
            lead.n_sources(),
            basis.dim()
        )));
    }
    Ok(LeadField {
        matrix: &lead.matrix * basis.matrix(),
        composed_with_basis: true,
    })
}

/// `W = chol(Σ)⁻¹` (inverse of the lower Cholesky factor), so `W Σ Wᵀ = I`.
pub fn whitener(noise_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = noise_cov.nrows();
    if noise_cov.ncols() != n {
        return Err(Error::dim("noise covariance must be square"));
    }
    let asym = (noise_cov - noise_cov.transpose()).abs().max();
    if asym > 1e-10 * noise_cov.abs().max().max(1.0) {
        return Err(Error::invalid(format!(
            "noise covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let chol = noise_cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("noise covariance".into()))?;
    let lower = chol.l();
    let w = lower
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    Ok(w)
}

/// `W·X` with `W` from [`whitener`]. Apply the same `W` to the lead field.
pub fn whiten(x: &DMatrix<f64>, noise_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != noise_cov.nrows() {
        return Err(Error::dim(format!(
            "data has {} channels, covariance is {}x{}",
            x.nrows(),
            noise_cov.nrows(),
            noise_cov.ncols()
        )));
    }
    Ok(whitener(noise_cov)? * x)
}
