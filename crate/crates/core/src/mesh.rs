//! Two-hemisphere source space, graph geodesics and the Gaussian-kernel
//! spatial smoothing basis.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Hemisphere {
    Left,
    Right,
}

impl Hemisphere {
    pub const BOTH: [Hemisphere; 2] = [Hemisphere::Left, Hemisphere::Right];

    pub fn index(self) -> usize {
        match self {
            Hemisphere::Left => 0,
            Hemisphere::Right => 1,
        }
    }
}

impl fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hemisphere::Left => "left",
            Hemisphere::Right => "right",
        })
    }
}

impl std::str::FromStr for Hemisphere {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "left" | "L" | "l" => Ok(Hemisphere::Left),
            "right" | "R" | "r" => Ok(Hemisphere::Right),
            other => Err(format!("unknown hemisphere label {other:?}")),
        }
    }
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Triangulated source space. Edges and adjacency are derived from the faces.
#[derive(Clone, Debug)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    hemisphere: Vec<Hemisphere>,
    /// Undirected edges `(a, b, length)` with `a < b`, sorted.
    edges: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl TriangleMesh {
    /// Validates that faces are in range, edges have positive length, no edge
    /// crosses hemispheres, and each hemisphere is connected.
    pub fn new(
        vertices: Vec<Point3>,
        faces: Vec<[usize; 3]>,
        hemisphere: Vec<Hemisphere>,
    ) -> Result<Self> {
        let n = vertices.len();
        if hemisphere.len() != n {
            return Err(Error::dim(format!(
                "{} vertices but {} hemisphere labels",
                n,
                hemisphere.len()
            )));
        }
        let mut edge_set = std::collections::BTreeSet::new();
        for f in &faces {
            for &v in f {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, len: n });
                }
            }
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                if a == b {
                    return Err(Error::invalid(format!("degenerate face {f:?}")));
                }
                edge_set.insert((a.min(b), a.max(b)));
            }
        }
        let mut edges = Vec::with_capacity(edge_set.len());
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edge_set {
            if hemisphere[a] != hemisphere[b] {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) crosses hemispheres"
                )));
            }
            let len = dist(&vertices[a], &vertices[b]);
            if !(len > 0.0) {
                return Err(Error::invalid(format!("edge ({a}, {b}) has length {len}")));
            }
            edges.push((a, b, len));
            adjacency[a].push((b, len));
            adjacency[b].push((a, len));
        }
        let mesh = TriangleMesh {
            vertices,
            faces,
            hemisphere,
            edges,
            adjacency,
        };
        for h in Hemisphere::BOTH {
            let members = mesh.hemisphere_vertices(h);
            if let Some(&start) = members.first() {
                let d = mesh.distances_from(start);
                if let Some(&bad) = members.iter().find(|&&v| d[v].is_infinite()) {
                    return Err(Error::invalid(format!(
                        "{h} hemisphere is disconnected (vertex {bad} unreachable from {start})"
                    )));
                }
            }
        }
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn hemisphere(&self, i: usize) -> Hemisphere {
        self.hemisphere[i]
    }

    pub fn hemisphere_labels(&self) -> &[Hemisphere] {
        &self.hemisphere
    }

    pub fn hemisphere_vertices(&self, h: Hemisphere) -> Vec<usize> {
        (0..self.n_vertices())
            .filter(|&v| self.hemisphere[v] == h)
            .collect()
    }

    pub fn mean_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum::<f64>() / self.edges.len().max(1) as f64
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n_vertices() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_vertices(),
            });
        }
        Ok(())
    }

    /// Single-source Dijkstra over edge lengths. Unreachable vertices (the
    /// other hemisphere) are `+inf`.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let n = self.n_vertices();
        let mut d = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        d[source] = 0.0;
        heap.push(HeapItem {
            dist: 0.0,
            vertex: source,
        });
        while let Some(HeapItem { dist: du, vertex: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for &(v, w) in &self.adjacency[u] {
                let alt = du + w;
                if alt < d[v] {
                    d[v] = alt;
                    heap.push(HeapItem {
                        dist: alt,
                        vertex: v,
                    });
                }
            }
        }
        d
    }

    pub fn geodesic_distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Ok(0.0);
        }
        Ok(self.distances_from(i)[j])
    }

    /// All-pairs graph geodesics, one Dijkstra per vertex.
    pub fn geodesic_table(&self) -> GeodesicTable {
        let n = self.n_vertices();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            data.extend(self.distances_from(i));
        }
        GeodesicTable { n, data }
    }

    /// The `k` same-hemisphere vertices closest to `i` (excluding `i`),
    /// ordered by distance then index.
    pub fn nearest_geodesic_neighbors(&self, i: usize, k: usize) -> Result<Vec<usize>> {
        self.check_index(i)?;
        let d = self.distances_from(i);
        nearest_from_row(self, i, &d, k)
    }

    /// Geodesic diameter of one hemisphere.
    pub fn hemisphere_diameter(&self, table: &GeodesicTable, h: Hemisphere) -> f64 {
        let verts = self.hemisphere_vertices(h);
        let mut best: f64 = 0.0;
        for &a in &verts {
            for &b in &verts {
                best = best.max(table.get(a, b));
            }
        }
        best
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "vertices {} faces {}",
            self.vertices.len(),
            self.faces.len()
        );
        for (v, h) in self.vertices.iter().zip(&self.hemisphere) {
            let _ = writeln!(out, "{} {} {} {}", v[0], v[1], v[2], h);
        }
        for f in &self.faces {
            let _ = writeln!(out, "{} {} {}", f[0], f[1], f[2]);
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines
            .next()
            .ok_or_else(|| perr(1, "empty mesh file".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        let (nv, nf) = match toks.as_slice() {
            ["vertices", v, "faces", f] => (
                v.parse::<usize>()
                    .map_err(|e| perr(hl, format!("bad vertex count: {e}")))?,
                f.parse::<usize>()
                    .map_err(|e| perr(hl, format!("bad face count: {e}")))?,
            ),
            _ => {
                return Err(perr(
                    hl,
                    format!("expected `vertices N faces M`, found {header:?}"),
                ))
            }
        };
        let mut vertices = Vec::with_capacity(nv);
        let mut hemi = Vec::with_capacity(nv);
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nv {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| perr(0, format!("expected {nv} vertex lines")))?;
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 4 {
                return Err(perr(ln, format!("expected `x y z hemi`, found {l:?}")));
            }
            let mut p = [0.0; 3];
            for (c, tok) in p.iter_mut().zip(&t[..3]) {
                *c = tok
                    .parse()
                    .map_err(|e| perr(ln, format!("bad coordinate {tok:?}: {e}")))?;
            }
            vertices.push(p);
            hemi.push(t[3].parse::<Hemisphere>().map_err(|e| perr(ln, e))?);
        }
        for _ in 0..nf {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| perr(0, format!("expected {nf} face lines")))?;
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 3 {
                return Err(perr(ln, format!("expected `i j k`, found {l:?}")));
            }
            let mut f = [0usize; 3];
            for (c, tok) in f.iter_mut().zip(&t) {
                *c = tok
                    .parse()
                    .map_err(|e| perr(ln, format!("bad index {tok:?}: {e}")))?;
            }
            faces.push(f);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing content after faces".into()));
        }
        TriangleMesh::new(vertices, faces, hemi)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

fn nearest_from_row(mesh: &TriangleMesh, i: usize, d: &[f64], k: usize) -> Result<Vec<usize>> {
    let h = mesh.hemisphere(i);
    let mut cands: Vec<usize> = (0..mesh.n_vertices())
        .filter(|&v| v != i && mesh.hemisphere(v) == h)
        .collect();
    if k == 0 || k > cands.len() {
        return Err(Error::invalid(format!(
            "neighborhood size {k} must be in 1..={} for vertex {i}",
            cands.len()
        )));
    }
    cands.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    cands.truncate(k);
    Ok(cands)
}

#[derive(Clone, Copy, Debug)]
struct HeapItem {
    dist: f64,
    vertex: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    // min-heap on distance, then vertex index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// Dense all-pairs geodesic distances.
#[derive(Clone, Debug)]
pub struct GeodesicTable {
    n: usize,
    data: Vec<f64>,
}

impl GeodesicTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Two icospheres (one per hemisphere) centered at `(∓separation/2, 0, 0)`.
/// Each has `10·4^subdivisions + 2` vertices; left vertices come first.
pub fn build_two_hemisphere_mesh(
    subdivisions: u32,
    radius: f64,
    separation: f64,
) -> Result<TriangleMesh> {
    if !(radius > 0.0) || !(separation > 0.0) {
        return Err(Error::invalid(format!(
            "radius ({radius}) and separation ({separation}) must be positive"
        )));
    }
    if subdivisions > 6 {
        return Err(Error::invalid(format!(
            "subdivisions {subdivisions} too large for a desk-scale mesh"
        )));
    }
    let (unit_verts, unit_faces) = icosphere(subdivisions);
    let nper = unit_verts.len();
    let mut vertices = Vec::with_capacity(2 * nper);
    let mut faces = Vec::with_capacity(2 * unit_faces.len());
    let mut hemi = Vec::with_capacity(2 * nper);
    for (h, cx) in [
        (Hemisphere::Left, -separation / 2.0),
        (Hemisphere::Right, separation / 2.0),
    ] {
        let offset = vertices.len();
        for v in &unit_verts {
            vertices.push([cx + radius * v[0], radius * v[1], radius * v[2]]);
            hemi.push(h);
        }
        for f in &unit_faces {
            faces.push([f[0] + offset, f[1] + offset, f[2] + offset]);
        }
    }
    TriangleMesh::new(vertices, faces, hemi)
}

/// Unit icosphere by recursive midpoint subdivision.
pub fn icosphere(subdivisions: u32) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize(&[
                    (p[0] + q[0]) / 2.0,
                    (p[1] + q[1]) / 2.0,
                    (p[2] + q[2]) / 2.0,
                ]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    (verts, faces)
}

fn normalize(p: &Point3) -> Point3 {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Gaussian-kernel smoothing basis. Column `i` holds `ψ_i`: 1 on the
/// diagonal, `exp(-(d_ij/ρ)²)` for the `k` geodesic neighbors `j ∈ Ω_i`, 0
/// elsewhere. Stored densely; at most `k + 1` nonzeros per column.
#[derive(Clone, Debug)]
pub struct SpatialBasis {
    psi: DMatrix<f64>,
    rho: f64,
    neighborhood_size: usize,
}

impl SpatialBasis {
    pub fn identity(n: usize) -> Self {
        SpatialBasis {
            psi: DMatrix::identity(n, n),
            rho: 0.0,
            neighborhood_size: 0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn neighborhood_size(&self) -> usize {
        self.neighborhood_size
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }

    /// `Ψ · M`.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.dim() {
            return Err(Error::dim(format!(
                "basis is {n}x{n} but matrix has {} rows",
                m.nrows(),
                n = self.dim()
            )));
        }
        Ok(&self.psi * m)
    }
}

pub const DEFAULT_NEIGHBORHOOD: usize = 6;

pub fn build_spatial_basis(mesh: &TriangleMesh, rho: f64, k: usize) -> Result<SpatialBasis> {
    if !(rho > 0.0) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    let n = mesh.n_vertices();
    let mut psi = DMatrix::zeros(n, n);
    for i in 0..n {
        let d = mesh.distances_from(i);
        psi[(i, i)] = 1.0;
        for j in nearest_from_row(mesh, i, &d, k)? {
            psi[(j, i)] = (-(d[j] / rho).powi(2)).exp();
        }
    }
    Ok(SpatialBasis {
        psi,
        rho,
        neighborhood_size: k,
    })
}

/// Default smoothness as a fraction of the mean edge length. At this value
/// every column's off-diagonal mass stays below 1 on icospheres, so `Ψ` is
/// strictly diagonally dominant and invertible.
pub const DEFAULT_RHO_FRACTION: f64 = 0.7;

pub fn default_rho(mesh: &TriangleMesh) -> f64 {
    DEFAULT_RHO_FRACTION * mesh.mean_edge_length()
}

/// Basis with the default neighborhood (6) and [`default_rho`].
pub fn default_spatial_basis(mesh: &TriangleMesh) -> Result<SpatialBasis> {
    build_spatial_basis(mesh, default_rho(mesh), DEFAULT_NEIGHBORHOOD)
}
