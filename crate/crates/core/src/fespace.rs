//! Lagrange finite-element spaces on a [`Mesh`].
//!
//! Scalar nodes are numbered vertices first, then edge midpoints (P2).
//! Vector spaces interleave the two components: dof `2*node + component`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, ElementGeometry, Mesh, LOCAL_EDGES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    P0,
    P1,
    P2,
}

impl Family {
    pub fn local_nodes(self) -> usize {
        match self {
            Family::P0 => 1,
            Family::P1 => 3,
            Family::P2 => 6,
        }
    }

    pub fn degree(self) -> usize {
        match self {
            Family::P0 => 0,
            Family::P1 => 1,
            Family::P2 => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FunctionSpace {
    pub mesh: Arc<Mesh>,
    pub family: Family,
    pub components: usize,
    /// Scalar node indices of each triangle.
    pub cell_nodes: Vec<Vec<usize>>,
    pub node_coords: Vec<[f64; 2]>,
    node_tags: Vec<Option<BoundaryTag>>,
}

pub fn make_space(mesh: Arc<Mesh>, family: Family, components: usize) -> Result<FunctionSpace> {
    if components != 1 && components != 2 {
        return Err(Error::InvalidArgument(format!("components must be 1 or 2, got {components}")));
    }
    if family == Family::P0 && components == 2 {
        return Err(Error::Unsupported("P0 is only available as a scalar pressure space".into()));
    }
    let (cell_nodes, node_coords, node_tags) = match family {
        Family::P0 => {
            let coords = (0..mesh.n_triangles()).map(|k| mesh.point(k, [1.0 / 3.0; 3])).collect();
            let cells = (0..mesh.n_triangles()).map(|k| vec![k]).collect();
            (cells, coords, vec![None; mesh.n_triangles()])
        }
        Family::P1 => {
            let tags = (0..mesh.n_vertices()).map(|v| mesh.vertex_tag(v)).collect();
            let cells = mesh.triangles.iter().map(|t| t.to_vec()).collect();
            (cells, mesh.vertices.clone(), tags)
        }
        Family::P2 => {
            let nv = mesh.n_vertices();
            let mut coords = mesh.vertices.clone();
            let mut tags: Vec<Option<BoundaryTag>> = (0..nv).map(|v| mesh.vertex_tag(v)).collect();
            for &[a, b] in &mesh.edges {
                let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
                coords.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                tags.push(None);
            }
            for be in &mesh.boundary_edges {
                tags[nv + be.edge] = Some(be.tag);
            }
            let cells = mesh
                .triangles
                .iter()
                .zip(&mesh.triangle_edges)
                .map(|(t, e)| vec![t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]])
                .collect();
            (cells, coords, tags)
        }
    };
    Ok(FunctionSpace { mesh, family, components, cell_nodes, node_coords, node_tags })
}

impl FunctionSpace {
    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn dof_count(&self) -> usize {
        self.n_nodes() * self.components
    }

    pub fn dof(&self, node: usize, component: usize) -> usize {
        node * self.components + component
    }

    /// Global dofs of triangle `k`, ordered node-major.
    pub fn cell_dofs(&self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cell_nodes[k].len() * self.components);
        for &n in &self.cell_nodes[k] {
            for c in 0..self.components {
                out.push(self.dof(n, c));
            }
        }
        out
    }

    pub fn node_tag(&self, node: usize) -> Option<BoundaryTag> {
        self.node_tags[node]
    }

    /// All dofs (every component) of nodes carrying `tag`.
    pub fn boundary_dofs(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut out = Vec::new();
        for (n, t) in self.node_tags.iter().enumerate() {
            if *t == Some(tag) {
                for c in 0..self.components {
                    out.push(self.dof(n, c));
                }
            }
        }
        out
    }

    /// Dofs on any part of the boundary.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.dof_count()];
        for (n, t) in self.node_tags.iter().enumerate() {
            if t.is_some() {
                for c in 0..self.components {
                    mask[self.dof(n, c)] = true;
                }
            }
        }
        mask
    }

    pub fn same_mesh(&self, other: &FunctionSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    /// Scalar basis at a barycentric point of triangle `k`.
    pub fn local_basis(&self, geom: &ElementGeometry, bary: [f64; 3]) -> LocalBasis {
        LocalBasis::new(self.family, geom, bary)
    }
}

/// Values, gradients and Hessians of the scalar shape functions of one
/// triangle at one point.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub n: usize,
    pub values: [f64; 6],
    pub grads: [[f64; 2]; 6],
    /// `[∂xx, ∂xy, ∂yy]`.
    pub hessians: [[f64; 3]; 6],
}

impl LocalBasis {
    pub fn new(family: Family, geom: &ElementGeometry, l: [f64; 3]) -> Self {
        let g = &geom.grad_lambda;
        let mut b = LocalBasis {
            n: family.local_nodes(),
            values: [0.0; 6],
            grads: [[0.0; 2]; 6],
            hessians: [[0.0; 3]; 6],
        };
        match family {
            Family::P0 => b.values[0] = 1.0,
            Family::P1 => {
                b.values[..3].copy_from_slice(&l);
                b.grads[..3].copy_from_slice(g);
            }
            Family::P2 => {
                let outer = |a: [f64; 2], c: [f64; 2]| {
                    [a[0] * c[0], 0.5 * (a[0] * c[1] + a[1] * c[0]), a[1] * c[1]]
                };
                for i in 0..3 {
                    b.values[i] = l[i] * (2.0 * l[i] - 1.0);
                    let s = 4.0 * l[i] - 1.0;
                    b.grads[i] = [s * g[i][0], s * g[i][1]];
                    b.hessians[i] = outer(g[i], g[i]).map(|v| 4.0 * v);
                }
                for (e, [i, j]) in LOCAL_EDGES.iter().copied().enumerate() {
                    b.values[3 + e] = 4.0 * l[i] * l[j];
                    b.grads[3 + e] = [
                        4.0 * (l[i] * g[j][0] + l[j] * g[i][0]),
                        4.0 * (l[i] * g[j][1] + l[j] * g[i][1]),
                    ];
                    b.hessians[3 + e] = outer(g[i], g[j]).map(|v| 8.0 * v);
                }
            }
        }
        b
    }
}

#[derive(Debug, Clone)]
pub struct FeFunction {
    pub space: Arc<FunctionSpace>,
    pub coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn new(space: Arc<FunctionSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.dof_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a space with {} dofs",
                coefficients.len(),
                space.dof_count()
            )));
        }
        Ok(Self { space, coefficients })
    }

    pub fn zeros(space: Arc<FunctionSpace>) -> Self {
        let n = space.dof_count();
        Self { space, coefficients: vec![0.0; n] }
    }

    /// Values of all components at `p`.
    pub fn eval(&self, p: [f64; 2]) -> Result<Vec<f64>> {
        let (k, bary) = self.space.mesh.locate(p).ok_or(Error::PointNotFound(p[0], p[1]))?;
        let geom = self.space.mesh.geometry_unchecked(k);
        let basis = self.space.local_basis(&geom, bary);
        let s = &self.space;
        let mut out = vec![0.0; s.components];
        for (a, &node) in s.cell_nodes[k].iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.coefficients[s.dof(node, c)] * basis.values[a];
            }
        }
        Ok(out)
    }

    /// Gradient `[∂x, ∂y]` of each component at `p`.
    pub fn eval_gradient(&self, p: [f64; 2]) -> Result<Vec<[f64; 2]>> {
        let (k, bary) = self.space.mesh.locate(p).ok_or(Error::PointNotFound(p[0], p[1]))?;
        let geom = self.space.mesh.geometry_unchecked(k);
        let basis = self.space.local_basis(&geom, bary);
        let s = &self.space;
        let mut out = vec![[0.0; 2]; s.components];
        for (a, &node) in s.cell_nodes[k].iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                let u = self.coefficients[s.dof(node, c)];
                o[0] += u * basis.grads[a][0];
                o[1] += u * basis.grads[a][1];
            }
        }
        Ok(out)
    }
}

/// Nodal interpolant of `f`, which returns one value per component.
pub fn interpolate(space: &Arc<FunctionSpace>, f: impl Fn([f64; 2]) -> Vec<f64>) -> FeFunction {
    let mut coefficients = vec![0.0; space.dof_count()];
    for (n, &p) in space.node_coords.iter().enumerate() {
        let v = f(p);
        for c in 0..space.components {
            coefficients[space.dof(n, c)] = v[c];
        }
    }
    FeFunction { space: space.clone(), coefficients }
}

/// Interpolant of the lid data: horizontal velocity `speed` on lid nodes,
/// zero on walls (lid corners included) and in the interior.
pub fn interpolate_lifting(space: &Arc<FunctionSpace>, speed: f64) -> Result<FeFunction> {
    if space.family == Family::P0 || space.components != 2 {
        return Err(Error::Unsupported("the lifting lives in a continuous vector space".into()));
    }
    let mut f = FeFunction::zeros(space.clone());
    for n in 0..space.n_nodes() {
        if space.node_tag(n) == Some(BoundaryTag::Lid) {
            f.coefficients[space.dof(n, 0)] = speed;
        }
    }
    Ok(f)
}
