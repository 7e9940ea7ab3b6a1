//! Structured P1 meshes on an interval or a rectangle, with element and
//! boundary quadrature.
//!
//! The rectangle is a polygonal surrogate for a smooth domain; no claim is
//! made that boundary-regularity results carry over to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric description of the discretized domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { lx: f64, ly: f64 },
}

impl Domain {
    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { lx, ly } => lx * ly,
        }
    }
}

/// A piece of the boundary: one node in 1D (counting measure), an edge in 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub nodes: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<Vec<usize>>,
    boundary: Vec<Facet>,
    domain: Domain,
}

/// One quadrature point with the P1 shape values of its host cell.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub nodes: [usize; 3],
    pub shape: [f64; 3],
    /// Number of active entries in `nodes`/`shape` (1, 2 or 3).
    pub len: usize,
    pub x: [f64; 2],
    pub weight: f64,
}

impl QuadPoint {
    #[inline]
    pub fn interpolate(&self, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.len {
            s += self.shape[k] * u[self.nodes[k]];
        }
        s
    }

    #[inline]
    pub fn coords(&self, dim: usize) -> &[f64] {
        &self.x[..dim]
    }
}

const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

pub fn build_interval_mesh(a: f64, b: f64, n: usize) -> Result<Mesh> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::InvalidMesh(format!(
            "interval requires a < b, got [{a}, {b}]"
        )));
    }
    if n < 3 {
        return Err(Error::InvalidMesh(format!("need at least 3 nodes, got {n}")));
    }
    let h = (b - a) / (n - 1) as f64;
    let mut nodes: Vec<[f64; 2]> = (0..n).map(|i| [a + h * i as f64, 0.0]).collect();
    nodes[n - 1][0] = b;
    let elements = (0..n - 1).map(|i| vec![i, i + 1]).collect();
    let boundary = vec![
        Facet {
            nodes: vec![0],
            weight: 1.0,
        },
        Facet {
            nodes: vec![n - 1],
            weight: 1.0,
        },
    ];
    Mesh::new(1, nodes, elements, boundary, Domain::Interval { a, b })
}

/// Structured triangulation of `[0,lx] x [0,ly]` with `nx * ny` nodes; each
/// grid cell is split along its lower-left/upper-right diagonal.
pub fn build_rectangle_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if !(lx.is_finite() && ly.is_finite()) || lx <= 0.0 || ly <= 0.0 {
        return Err(Error::InvalidMesh(format!(
            "rectangle needs positive sides, got {lx} x {ly}"
        )));
    }
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidMesh(format!(
            "rectangle needs at least 2 nodes per direction, got {nx} x {ny}"
        )));
    }
    let hx = lx / (nx - 1) as f64;
    let hy = ly / (ny - 1) as f64;
    let id = |i: usize, j: usize| j * nx + i;
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = if i == nx - 1 { lx } else { hx * i as f64 };
            let y = if j == ny - 1 { ly } else { hy * j as f64 };
            nodes.push([x, y]);
        }
    }
    let mut elements = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            elements.push(vec![p00, p10, p11]);
            elements.push(vec![p00, p11, p01]);
        }
    }
    let mut boundary = Vec::with_capacity(2 * (nx + ny - 2));
    for i in 0..nx - 1 {
        boundary.push(Facet {
            nodes: vec![id(i, 0), id(i + 1, 0)],
            weight: hx,
        });
    }
    for j in 0..ny - 1 {
        boundary.push(Facet {
            nodes: vec![id(nx - 1, j), id(nx - 1, j + 1)],
            weight: hy,
        });
    }
    for i in (0..nx - 1).rev() {
        boundary.push(Facet {
            nodes: vec![id(i + 1, ny - 1), id(i, ny - 1)],
            weight: hx,
        });
    }
    for j in (0..ny - 1).rev() {
        boundary.push(Facet {
            nodes: vec![id(0, j + 1), id(0, j)],
            weight: hy,
        });
    }
    Mesh::new(2, nodes, elements, boundary, Domain::Rectangle { lx, ly })
}

impl Mesh {
    /// Builds a mesh from raw parts and checks every structural invariant.
    pub fn new(
        dim: usize,
        nodes: Vec<[f64; 2]>,
        elements: Vec<Vec<usize>>,
        boundary: Vec<Facet>,
        domain: Domain,
    ) -> Result<Self> {
        let mesh = Mesh {
            dim,
            nodes,
            elements,
            boundary,
            domain,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMesh(m));
        if self.dim != 1 && self.dim != 2 {
            return bad(format!("dimension must be 1 or 2, got {}", self.dim));
        }
        match (self.dim, self.domain) {
            (1, Domain::Interval { .. }) | (2, Domain::Rectangle { .. }) => {}
            _ => return bad("domain kind does not match dimension".into()),
        }
        let n = self.nodes.len();
        if n < 3 {
            return bad(format!("need at least 3 nodes, got {n}"));
        }
        if self.nodes.iter().flatten().any(|c| !c.is_finite()) {
            return bad("non-finite node coordinate".into());
        }
        let per_elem = self.dim + 1;
        for (e, el) in self.elements.iter().enumerate() {
            if el.len() != per_elem {
                return bad(format!("element {e} has {} nodes, expected {per_elem}", el.len()));
            }
            if let Some(&i) = el.iter().find(|&&i| i >= n) {
                return bad(format!("element {e} references node {i} out of range"));
            }
            let m = self.element_measure(el);
            if !(m > 0.0) {
                return bad(format!("element {e} has nonpositive measure {m}"));
            }
        }
        for (k, f) in self.boundary.iter().enumerate() {
            if f.nodes.len() != self.dim {
                return bad(format!("boundary facet {k} has {} nodes", f.nodes.len()));
            }
            if f.nodes.iter().any(|&i| i >= n) {
                return bad(format!("boundary facet {k} references a node out of range"));
            }
            if !(f.weight > 0.0) || !f.weight.is_finite() {
                return bad(format!("boundary facet {k} has invalid weight {}", f.weight));
            }
        }
        // Boundary facets must coincide exactly with the once-covered faces
        // of the element complex.
        let mut faces: std::collections::BTreeMap<Vec<usize>, usize> = Default::default();
        for el in &self.elements {
            for skip in 0..el.len() {
                let mut face: Vec<usize> = el
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &i)| i)
                    .collect();
                face.sort_unstable();
                *faces.entry(face).or_default() += 1;
            }
        }
        let mut expected: Vec<Vec<usize>> = faces
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(f, _)| f)
            .collect();
        let mut declared: Vec<Vec<usize>> = self
            .boundary
            .iter()
            .map(|f| {
                let mut v = f.nodes.clone();
                v.sort_unstable();
                v
            })
            .collect();
        expected.sort();
        declared.sort();
        if expected != declared {
            return bad(format!(
                "boundary facets do not tile the boundary exactly once ({} declared, {} expected)",
                declared.len(),
                expected.len()
            ));
        }
        Ok(())
    }

    fn element_measure(&self, el: &[usize]) -> f64 {
        let p = |k: usize| self.nodes[el[k]];
        match self.dim {
            1 => p(1)[0] - p(0)[0],
            _ => {
                let (a, b, c) = (p(0), p(1), p(2));
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.dim]
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn boundary(&self) -> &[Facet] {
        &self.boundary
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn measure(&self) -> f64 {
        self.elements.iter().map(|e| self.element_measure(e)).sum()
    }

    pub fn boundary_measure(&self) -> f64 {
        self.boundary.iter().map(|f| f.weight).sum()
    }

    /// Interior quadrature: 2-point Gauss per segment, 3-point symmetric rule
    /// per triangle. Both integrate products of P1 functions exactly.
    pub fn volume_quadrature(&self) -> Vec<QuadPoint> {
        let mut out = Vec::with_capacity(self.elements.len() * (self.dim + 1));
        for el in &self.elements {
            let meas = self.element_measure(el);
            match self.dim {
                1 => {
                    let (x0, x1) = (self.nodes[el[0]][0], self.nodes[el[1]][0]);
                    for g in GAUSS2 {
                        let s = 0.5 * (1.0 + g);
                        out.push(QuadPoint {
                            nodes: [el[0], el[1], 0],
                            shape: [1.0 - s, s, 0.0],
                            len: 2,
                            x: [x0 + s * (x1 - x0), 0.0],
                            weight: 0.5 * meas,
                        });
                    }
                }
                _ => {
                    const BARY: [[f64; 3]; 3] = [
                        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
                        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
                    ];
                    for lam in BARY {
                        let mut x = [0.0; 2];
                        for k in 0..3 {
                            x[0] += lam[k] * self.nodes[el[k]][0];
                            x[1] += lam[k] * self.nodes[el[k]][1];
                        }
                        out.push(QuadPoint {
                            nodes: [el[0], el[1], el[2]],
                            shape: lam,
                            len: 3,
                            x,
                            weight: meas / 3.0,
                        });
                    }
                }
            }
        }
        out
    }

    /// Boundary quadrature: the node itself in 1D, 2-point Gauss per edge in 2D.
    pub fn boundary_quadrature(&self) -> Vec<QuadPoint> {
        let mut out = Vec::new();
        for f in &self.boundary {
            match self.dim {
                1 => out.push(QuadPoint {
                    nodes: [f.nodes[0], 0, 0],
                    shape: [1.0, 0.0, 0.0],
                    len: 1,
                    x: self.nodes[f.nodes[0]],
                    weight: f.weight,
                }),
                _ => {
                    let (p, q) = (self.nodes[f.nodes[0]], self.nodes[f.nodes[1]]);
                    for g in GAUSS2 {
                        let s = 0.5 * (1.0 + g);
                        out.push(QuadPoint {
                            nodes: [f.nodes[0], f.nodes[1], 0],
                            shape: [1.0 - s, s, 0.0],
                            len: 2,
                            x: [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])],
                            weight: 0.5 * f.weight,
                        });
                    }
                }
            }
        }
        out
    }

    /// Half-bandwidth of the node-coupling graph.
    pub fn bandwidth(&self) -> usize {
        self.elements
            .iter()
            .map(|el| {
                let lo = el.iter().min().copied().unwrap_or(0);
                let hi = el.iter().max().copied().unwrap_or(0);
                hi - lo
            })
            .max()
            .unwrap_or(0)
    }
}

/// JSON form of a mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshDescriptor {
    pub dim: usize,
    pub domain: Domain,
    pub nodes: Vec<Vec<f64>>,
    pub elements: Vec<Vec<usize>>,
    pub boundary: Vec<Facet>,
}

impl From<&Mesh> for MeshDescriptor {
    fn from(m: &Mesh) -> Self {
        MeshDescriptor {
            dim: m.dim,
            domain: m.domain,
            nodes: m.nodes.iter().map(|p| p[..m.dim].to_vec()).collect(),
            elements: m.elements.clone(),
            boundary: m.boundary.clone(),
        }
    }
}

impl TryFrom<MeshDescriptor> for Mesh {
    type Error = Error;

    fn try_from(d: MeshDescriptor) -> Result<Mesh> {
        let mut nodes = Vec::with_capacity(d.nodes.len());
        for (i, p) in d.nodes.iter().enumerate() {
            if p.len() != d.dim {
                return Err(Error::InvalidMesh(format!(
                    "node {i} has {} coordinates, expected {}",
                    p.len(),
                    d.dim
                )));
            }
            nodes.push([p[0], p.get(1).copied().unwrap_or(0.0)]);
        }
        Mesh::new(d.dim, nodes, d.elements, d.boundary, d.domain)
    }
}

impl Mesh {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MeshDescriptor::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Mesh> {
        let d: MeshDescriptor = serde_json::from_str(text)?;
        Mesh::try_from(d)
    }
}
