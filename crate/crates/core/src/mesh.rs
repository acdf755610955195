//! Structured triangulations of the reference rectangle.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Top edge `y = height`, where the driving velocity is imposed.
    Lid,
    Wall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdge {
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
    pub edge: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub diameter: f64,
    /// Gradients of the barycentric coordinates `λ_0, λ_1, λ_2`.
    pub grad_lambda: [[f64; 2]; 3],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub length: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub diagonal: Diagonal,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Every distinct edge, numbered in order of first appearance.
    pub edges: Vec<[usize; 2]>,
    /// Edge numbers of the local edges `(0,1)`, `(1,2)`, `(2,0)` of each triangle.
    pub triangle_edges: Vec<[usize; 3]>,
    pub interior_edges: Vec<InteriorEdge>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub element_diameters: Vec<f64>,
}

pub const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// How grid cells are split into triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagonal {
    /// Every cell is cut from bottom-left to top-right.
    #[default]
    Uniform,
    /// Cells in the right half use the other diagonal, so the mesh is
    /// symmetric about the vertical midline when `nx` is even.
    Mirrored,
}

impl Diagonal {
    pub fn name(self) -> &'static str {
        match self {
            Diagonal::Uniform => "uniform",
            Diagonal::Mirrored => "mirrored",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Diagonal::Uniform),
            "mirrored" => Ok(Diagonal::Mirrored),
            other => Err(Error::InvalidArgument(format!("unknown diagonal `{other}`"))),
        }
    }
}

/// Builds an `nx × ny` grid on `(0,length)×(0,height)`; each cell is cut
/// along its bottom-left to top-right diagonal.
pub fn build_rect_mesh(length: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh> {
    build_rect_mesh_with(length, height, nx, ny, Diagonal::Uniform)
}

pub fn build_rect_mesh_with(length: f64, height: f64, nx: usize, ny: usize, diagonal: Diagonal) -> Result<Mesh> {
    if !(length > 0.0 && height > 0.0 && length.is_finite() && height.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rectangle dimensions must be positive, got {length} x {height}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "cell counts must be at least 1, got {nx} x {ny}"
        )));
    }
    let hx = length / nx as f64;
    let hy = height / ny as f64;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // exact endpoints so boundary tests can compare with ==
            let x = if i == nx { length } else { i as f64 * hx };
            let y = if j == ny { height } else { j as f64 * hy };
            vertices.push([x, y]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v01 = vid(i, j + 1);
            let v11 = vid(i + 1, j + 1);
            if is_anti(diagonal, i, nx) {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            } else {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
    }

    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut edge_tris: Vec<Vec<usize>> = Vec::new();
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        let mut te = [0; 3];
        for (l, [a, b]) in LOCAL_EDGES.iter().enumerate() {
            let (va, vb) = (tri[*a], tri[*b]);
            let key = (va.min(vb), va.max(vb));
            let e = *edge_index.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edge_tris.push(Vec::new());
                edges.len() - 1
            });
            edge_tris[e].push(t);
            te[l] = e;
        }
        triangle_edges.push(te);
    }

    let dist = |a: usize, b: usize| {
        let (p, q) = (vertices[a], vertices[b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    };
    let mut interior_edges = Vec::new();
    let mut boundary_edges = Vec::new();
    for (e, &[a, b]) in edges.iter().enumerate() {
        match edge_tris[e].as_slice() {
            [left, right] => interior_edges.push(InteriorEdge {
                vertices: [a, b],
                left: *left,
                right: *right,
                length: dist(a, b),
            }),
            [_] => {
                let on_top = vertices[a][1] == height && vertices[b][1] == height;
                boundary_edges.push(BoundaryEdge {
                    vertices: [a, b],
                    tag: if on_top { BoundaryTag::Lid } else { BoundaryTag::Wall },
                    edge: e,
                });
            }
            other => unreachable!("edge shared by {} triangles", other.len()),
        }
    }

    let element_diameters = triangles
        .iter()
        .map(|t| dist(t[0], t[1]).max(dist(t[1], t[2])).max(dist(t[2], t[0])))
        .collect();

    Ok(Mesh {
        length,
        height,
        nx,
        ny,
        diagonal,
        vertices,
        triangles,
        edges,
        triangle_edges,
        interior_edges,
        boundary_edges,
        element_diameters,
    })
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn max_diameter(&self) -> f64 {
        self.element_diameters.iter().fold(0.0, |m, &h| m.max(h))
    }

    pub fn element_geometry(&self, k: usize) -> Result<ElementGeometry> {
        if k >= self.triangles.len() {
            return Err(Error::OutOfRange { index: k, len: self.triangles.len() });
        }
        Ok(self.geometry_unchecked(k))
    }

    pub(crate) fn geometry_unchecked(&self, k: usize) -> ElementGeometry {
        let [p0, p1, p2] = self.triangles[k].map(|v| self.vertices[v]);
        let mut g = triangle_geometry(p0, p1, p2);
        g.diameter = self.element_diameters[k];
        g
    }

    /// Signed area of triangle `k`; positive for counterclockwise ordering.
    pub fn signed_area(&self, k: usize) -> f64 {
        let [p0, p1, p2] = self.triangles[k].map(|v| self.vertices[v]);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    /// Tag of a boundary vertex, `None` for interior vertices. Corners of
    /// the lid belong to the wall.
    pub fn vertex_tag(&self, v: usize) -> Option<BoundaryTag> {
        let [x, y] = self.vertices[v];
        let on_side = x == 0.0 || x == self.length || y == 0.0;
        if on_side {
            Some(BoundaryTag::Wall)
        } else if y == self.height {
            Some(BoundaryTag::Lid)
        } else {
            None
        }
    }

    /// Triangle containing `p` and the barycentric coordinates of `p` in it.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12 * self.length.max(self.height);
        if !(p[0] >= -tol && p[0] <= self.length + tol && p[1] >= -tol && p[1] <= self.height + tol)
        {
            return None;
        }
        let sx = (p[0] / self.length * self.nx as f64).clamp(0.0, self.nx as f64);
        let sy = (p[1] / self.height * self.ny as f64).clamp(0.0, self.ny as f64);
        let i = (sx.floor() as usize).min(self.nx - 1);
        let j = (sy.floor() as usize).min(self.ny - 1);
        let (s, t) = (sx - i as f64, sy - j as f64);
        let cell = j * self.nx + i;
        let first = if is_anti(self.diagonal, i, self.nx) { s + t <= 1.0 } else { s >= t };
        let k = if first { 2 * cell } else { 2 * cell + 1 };
        Some((k, self.barycentric(k, p)))
    }

    pub fn barycentric(&self, k: usize, p: [f64; 2]) -> [f64; 3] {
        let [p0, p1, p2] = self.triangles[k].map(|v| self.vertices[v]);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
        let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Maps barycentric coordinates of triangle `k` to a point.
    pub fn point(&self, k: usize, bary: [f64; 3]) -> [f64; 2] {
        let [p0, p1, p2] = self.triangles[k].map(|v| self.vertices[v]);
        [
            bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0],
            bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1],
        ]
    }
}

fn is_anti(diagonal: Diagonal, i: usize, nx: usize) -> bool {
    diagonal == Diagonal::Mirrored && 2 * i >= nx
}

/// Area, diameter and barycentric gradients of a single triangle.
pub fn triangle_geometry(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> ElementGeometry {
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let g1 = [(p2[1] - p0[1]) / det, -(p2[0] - p0[0]) / det];
    let g2 = [-(p1[1] - p0[1]) / det, (p1[0] - p0[0]) / det];
    let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    ElementGeometry {
        area: 0.5 * det.abs(),
        diameter: d(p0, p1).max(d(p1, p2)).max(d(p2, p0)),
        grad_lambda: [g0, g1, g2],
    }
}
