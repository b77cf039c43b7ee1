//! Discrete spaces: scalar Lagrange families, the H(div) families BDM1 and RT1,
//! the Stokes/Darcy element pairs and the interface trace space.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use crate::error::{invalid, Error, Result};
use crate::mesh::{CoupledMesh, EdgeTag, InterfaceEdge, MeshHierarchy, Subdomain, INTERFACE_NORMAL};
use crate::quadrature::{LineRule, TriangleRule};

/// Maximal number of local shape functions of any family.
pub const MAX_LOCAL: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScalarFamily {
    P0dc,
    P1dc,
    P1c,
    P2c,
    /// continuous P1 enriched by the cubic bubble `27 l0 l1 l2`
    P1Bubble,
}

impl ScalarFamily {
    pub fn local_dim(self) -> usize {
        match self {
            ScalarFamily::P0dc => 1,
            ScalarFamily::P1dc | ScalarFamily::P1c => 3,
            ScalarFamily::P1Bubble => 4,
            ScalarFamily::P2c => 6,
        }
    }

    pub fn degree(self) -> usize {
        match self {
            ScalarFamily::P0dc => 0,
            ScalarFamily::P1dc | ScalarFamily::P1c => 1,
            ScalarFamily::P2c => 2,
            ScalarFamily::P1Bubble => 3,
        }
    }

    pub fn is_continuous(self) -> bool {
        !matches!(self, ScalarFamily::P0dc | ScalarFamily::P1dc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FluxFamily {
    Bdm1,
    Rt1,
}

impl FluxFamily {
    pub fn name(self) -> &'static str {
        match self {
            FluxFamily::Bdm1 => "bdm1",
            FluxFamily::Rt1 => "rt1",
        }
    }

    pub fn local_dim(self) -> usize {
        match self {
            FluxFamily::Bdm1 => 6,
            FluxFamily::Rt1 => 8,
        }
    }

    /// Pressure family with `div H_h = L_h`.
    pub fn pressure_family(self) -> ScalarFamily {
        match self {
            FluxFamily::Bdm1 => ScalarFamily::P0dc,
            FluxFamily::Rt1 => ScalarFamily::P1dc,
        }
    }

    /// Continuous nodal family whose curls span the divergence-free flux
    /// fields; quadratic for both families.
    pub fn nodal_family(self) -> ScalarFamily {
        ScalarFamily::P2c
    }

    pub fn degree(self) -> usize {
        match self {
            FluxFamily::Bdm1 => 1,
            FluxFamily::Rt1 => 2,
        }
    }
}

/// Where a degree of freedom sits relative to the boundary of its subdomain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DofLocation {
    /// on the outer boundary (part of `Gamma_S` or `Gamma_D`)
    pub outer: bool,
    /// on the interface
    pub sigma: bool,
}

/// Values and gradients of the local shape functions at one point.
#[derive(Clone, Copy, Debug)]
pub struct ScalarShape {
    pub len: usize,
    pub val: [f64; MAX_LOCAL],
    pub grad: [[f64; 2]; MAX_LOCAL],
}

/// Barycentric coordinates as affine functions `l_i = c0 + c1 x + c2 y`.
#[derive(Clone, Copy, Debug)]
struct Affine {
    coef: [[f64; 3]; 3],
}

impl Affine {
    fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut coef = [[0.0; 3]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let gx = (p[j][1] - p[k][1]) / det;
            let gy = (p[k][0] - p[j][0]) / det;
            coef[i] = [-(gx * p[j][0] + gy * p[j][1]), gx, gy];
        }
        Self { coef }
    }

    fn bary(&self, x: [f64; 2]) -> [f64; 3] {
        self.coef.map(|c| c[0] + c[1] * x[0] + c[2] * x[1])
    }

    fn grads(&self) -> [[f64; 2]; 3] {
        self.coef.map(|c| [c[1], c[2]])
    }
}

/// Shape functions of a scalar family on a triangle given the barycentric
/// coordinates and their gradients.
pub fn scalar_shape(family: ScalarFamily, l: [f64; 3], g: [[f64; 2]; 3]) -> ScalarShape {
    let mut s = ScalarShape {
        len: family.local_dim(),
        val: [0.0; MAX_LOCAL],
        grad: [[0.0; 2]; MAX_LOCAL],
    };
    match family {
        ScalarFamily::P0dc => s.val[0] = 1.0,
        ScalarFamily::P1dc | ScalarFamily::P1c | ScalarFamily::P1Bubble => {
            for i in 0..3 {
                s.val[i] = l[i];
                s.grad[i] = g[i];
            }
            if family == ScalarFamily::P1Bubble {
                s.val[3] = 27.0 * l[0] * l[1] * l[2];
                for d in 0..2 {
                    s.grad[3][d] =
                        27.0 * (g[0][d] * l[1] * l[2] + l[0] * g[1][d] * l[2] + l[0] * l[1] * g[2][d]);
                }
            }
        }
        ScalarFamily::P2c => {
            for i in 0..3 {
                s.val[i] = l[i] * (2.0 * l[i] - 1.0);
                s.grad[i] = [(4.0 * l[i] - 1.0) * g[i][0], (4.0 * l[i] - 1.0) * g[i][1]];
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                s.val[3 + i] = 4.0 * l[a] * l[b];
                for d in 0..2 {
                    s.grad[3 + i][d] = 4.0 * (l[a] * g[b][d] + l[b] * g[a][d]);
                }
            }
        }
    }
    s
}

/// A scalar finite element space on the triangles of one subdomain.
///
/// Basis functions live on *host* triangles, which are either the integration
/// cells themselves or their ancestors on a coarser mesh of the hierarchy.
#[derive(Clone, Debug)]
pub struct ScalarSpace {
    family: ScalarFamily,
    subdomain: Subdomain,
    cells: Vec<usize>,
    hosts: Vec<Affine>,
    host_of: Vec<usize>,
    dofs: Vec<usize>,
    ndofs: usize,
    location: Vec<DofLocation>,
    points: Vec<[f64; 2]>,
    nodal: Vec<bool>,
    host_n: usize,
}

impl ScalarSpace {
    pub fn new(mesh: &CoupledMesh, family: ScalarFamily, subdomain: Subdomain) -> Self {
        Self::build(mesh, mesh, None, family, subdomain)
    }

    /// A space defined on `host` but integrated over the cells of `fine`;
    /// `ancestors[t]` is the host triangle containing fine triangle `t`.
    pub fn on_coarse(
        fine: &CoupledMesh,
        host: &CoupledMesh,
        ancestors: &[usize],
        family: ScalarFamily,
        subdomain: Subdomain,
    ) -> Self {
        Self::build(fine, host, Some(ancestors), family, subdomain)
    }

    fn build(
        fine: &CoupledMesh,
        host: &CoupledMesh,
        ancestors: Option<&[usize]>,
        family: ScalarFamily,
        subdomain: Subdomain,
    ) -> Self {
        let host_tris: Vec<usize> = host.triangles_in(subdomain).collect();
        let stride = family.local_dim();
        let mut host_dofs = vec![usize::MAX; host.triangles().len() * stride];
        let mut location = Vec::new();
        let mut points = Vec::new();
        let mut nodal = Vec::new();
        let outer_tag = match subdomain {
            Subdomain::Stokes => EdgeTag::GammaS,
            Subdomain::Darcy => EdgeTag::GammaD,
        };
        let centroid = |t: usize| {
            let v = host.triangles()[t].map(|i| host.vertices()[i]);
            [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0]
        };
        if family.is_continuous() {
            let on_outer = host.vertices_on(|t| t == outer_tag);
            let on_sigma = host.vertices_on(|t| t == EdgeTag::Sigma);
            let mut vnum = vec![usize::MAX; host.vertices().len()];
            let mut used: Vec<usize> = host_tris
                .iter()
                .flat_map(|&t| host.triangles()[t])
                .collect();
            used.sort_unstable();
            used.dedup();
            for v in used {
                vnum[v] = location.len();
                location.push(DofLocation {
                    outer: on_outer[v],
                    sigma: on_sigma[v],
                });
                points.push(host.vertices()[v]);
                nodal.push(true);
            }
            for &t in &host_tris {
                for k in 0..3 {
                    host_dofs[t * stride + k] = vnum[host.triangles()[t][k]];
                }
            }
            match family {
                ScalarFamily::P2c => {
                    let mut enums = vec![usize::MAX; host.edges().len()];
                    let mut used: Vec<usize> = host_tris.iter().flat_map(|&t| host.tri_edges(t)).collect();
                    used.sort_unstable();
                    used.dedup();
                    for e in used {
                        enums[e] = location.len();
                        let tag = host.edge_tag(e);
                        location.push(DofLocation {
                            outer: tag == outer_tag,
                            sigma: tag == EdgeTag::Sigma,
                        });
                        let [a, b] = host.edges()[e].map(|i| host.vertices()[i]);
                        points.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                        nodal.push(true);
                    }
                    for &t in &host_tris {
                        let te = host.tri_edges(t);
                        for k in 0..3 {
                            host_dofs[t * stride + 3 + k] = enums[te[k]];
                        }
                    }
                }
                ScalarFamily::P1Bubble => {
                    for &t in &host_tris {
                        host_dofs[t * stride + 3] = location.len();
                        location.push(DofLocation::default());
                        points.push(centroid(t));
                        nodal.push(false);
                    }
                }
                _ => {}
            }
        } else {
            for &t in &host_tris {
                for k in 0..stride {
                    host_dofs[t * stride + k] = location.len();
                    location.push(DofLocation::default());
                    points.push(if stride == 1 {
                        centroid(t)
                    } else {
                        host.vertices()[host.triangles()[t][k]]
                    });
                    nodal.push(true);
                }
            }
        }

        let cells: Vec<usize> = fine.triangles_in(subdomain).collect();
        let mut hosts = Vec::with_capacity(cells.len());
        let mut host_of = Vec::with_capacity(cells.len());
        let mut dofs = Vec::with_capacity(cells.len() * stride);
        for &t in &cells {
            let ht = ancestors.map_or(t, |a| a[t]);
            host_of.push(ht);
            hosts.push(Affine::new(host.triangles()[ht].map(|v| host.vertices()[v])));
            dofs.extend_from_slice(&host_dofs[ht * stride..(ht + 1) * stride]);
        }
        Self {
            family,
            subdomain,
            cells,
            hosts,
            host_of,
            dofs,
            ndofs: location.len(),
            location,
            points,
            nodal,
            host_n: host.n(),
        }
    }

    pub fn family(&self) -> ScalarFamily {
        self.family
    }

    pub fn subdomain(&self) -> Subdomain {
        self.subdomain
    }

    pub fn ndofs(&self) -> usize {
        self.ndofs
    }

    /// Integration cells (triangles of the fine mesh).
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Position of a fine-mesh triangle in `cells()`.
    pub fn cell_of(&self, t: usize) -> Option<usize> {
        self.cells.binary_search(&t).ok()
    }

    pub fn host_n(&self) -> usize {
        self.host_n
    }

    pub fn host_triangle(&self, c: usize) -> usize {
        self.host_of[c]
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        let s = self.family.local_dim();
        &self.dofs[c * s..(c + 1) * s]
    }

    pub fn location(&self, dof: usize) -> DofLocation {
        self.location[dof]
    }

    /// Nodal point of a dof (centroid for bubbles and constants).
    pub fn point(&self, dof: usize) -> [f64; 2] {
        self.points[dof]
    }

    /// False for dofs that are not point values (the MINI bubble).
    pub fn is_nodal(&self, dof: usize) -> bool {
        self.nodal[dof]
    }

    pub fn eval(&self, c: usize, x: [f64; 2]) -> ScalarShape {
        let h = &self.hosts[c];
        scalar_shape(self.family, h.bary(x), h.grads())
    }

    /// Dofs whose basis function vanishes on the outer boundary.
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.ndofs).filter(|&i| !self.location[i].outer).collect()
    }

    /// Dofs whose basis function vanishes on the whole subdomain boundary.
    pub fn interior_dofs(&self) -> Vec<usize> {
        (0..self.ndofs)
            .filter(|&i| !self.location[i].outer && !self.location[i].sigma)
            .collect()
    }

    /// Evaluates a finite element function at a point of cell `c`.
    pub fn value(&self, coeffs: &[f64], c: usize, x: [f64; 2]) -> f64 {
        let s = self.eval(c, x);
        self.cell_dofs(c)
            .iter()
            .enumerate()
            .map(|(k, &d)| coeffs[d] * s.val[k])
            .sum()
    }

    /// Nodal interpolation of a continuous function (bubble coefficients zero).
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.ndofs)
            .map(|i| if self.nodal[i] { f(self.points[i]) } else { 0.0 })
            .collect()
    }
}

/// Classification of H(div) degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FluxDofClass {
    Interior,
    Sigma,
    Boundary,
}

/// Values and divergences of the local flux shape functions at one point.
#[derive(Clone, Copy, Debug)]
pub struct FluxShape {
    pub len: usize,
    pub val: [[f64; 2]; MAX_LOCAL],
    pub div: [f64; MAX_LOCAL],
}

/// BDM1 or RT1 space on the Darcy triangles.
///
/// Edge degrees of freedom are the values of the normal component at the two
/// endpoints (equivalently, moments of the normal component against the dual
/// linear functions of the edge). Normals are fixed globally per edge, so
/// basis functions are built directly in physical coordinates and no sign
/// corrections are needed.
#[derive(Clone, Debug)]
pub struct FluxSpace {
    family: FluxFamily,
    cells: Vec<usize>,
    edges: Vec<usize>,
    edge_index: Vec<Option<usize>>,
    normals: Vec<[f64; 2]>,
    edge_vertices: Vec<[usize; 2]>,
    dofs: Vec<usize>,
    ndofs: usize,
    class: Vec<FluxDofClass>,
    centers: Vec<[f64; 2]>,
    scales: Vec<f64>,
    areas: Vec<f64>,
    /// coefficients of the local basis in the scaled monomial basis,
    /// `coef[c][k * MAX_LOCAL + i]` for monomial `k` and basis function `i`
    coef: Vec<[f64; MAX_LOCAL * MAX_LOCAL]>,
}

/// Scaled vector monomials `(value, div)` in `X = (x - xc) / h`, `Y = (y - yc) / h`.
fn flux_monomials(family: FluxFamily, x: [f64; 2], center: [f64; 2], h: f64) -> ([[f64; 2]; MAX_LOCAL], [f64; MAX_LOCAL]) {
    let (px, py) = ((x[0] - center[0]) / h, (x[1] - center[1]) / h);
    let mut v = [[0.0; 2]; MAX_LOCAL];
    let mut d = [0.0; MAX_LOCAL];
    v[0] = [1.0, 0.0];
    v[1] = [px, 0.0];
    d[1] = 1.0 / h;
    v[2] = [py, 0.0];
    v[3] = [0.0, 1.0];
    v[4] = [0.0, px];
    v[5] = [0.0, py];
    d[5] = 1.0 / h;
    if family == FluxFamily::Rt1 {
        v[6] = [px * px, px * py];
        d[6] = 3.0 * px / h;
        v[7] = [px * py, py * py];
        d[7] = 3.0 * py / h;
    }
    (v, d)
}

fn edge_rule() -> LineRule {
    LineRule::gauss(4)
}

impl FluxSpace {
    pub fn new(mesh: &CoupledMesh, family: FluxFamily) -> Result<Self> {
        let cells: Vec<usize> = mesh.triangles_in(Subdomain::Darcy).collect();
        let mut edge_index = vec![None; mesh.edges().len()];
        let mut edges: Vec<usize> = cells.iter().flat_map(|&t| mesh.tri_edges(t)).collect();
        edges.sort_unstable();
        edges.dedup();
        let mut normals = Vec::with_capacity(edges.len());
        let mut class = Vec::with_capacity(2 * edges.len());
        for (k, &e) in edges.iter().enumerate() {
            edge_index[e] = Some(k);
            let [a, b] = mesh.edges()[e].map(|i| mesh.vertices()[i]);
            let len = mesh.edge_length(e);
            let mut n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
            let tag = mesh.edge_tag(e);
            if tag == EdgeTag::Sigma && n[0] * INTERFACE_NORMAL[0] + n[1] * INTERFACE_NORMAL[1] < 0.0 {
                n = [-n[0], -n[1]];
            }
            normals.push(n);
            let cl = match tag {
                EdgeTag::Sigma => FluxDofClass::Sigma,
                EdgeTag::GammaD => FluxDofClass::Boundary,
                _ => FluxDofClass::Interior,
            };
            class.push(cl);
            class.push(cl);
        }
        let edge_vertices: Vec<[usize; 2]> = edges.iter().map(|&e| mesh.edges()[e]).collect();
        let nloc = family.local_dim();
        let n_edge_dofs = 2 * edges.len();
        let mut ndofs = n_edge_dofs;
        if family == FluxFamily::Rt1 {
            ndofs += 2 * cells.len();
            class.extend(std::iter::repeat(FluxDofClass::Interior).take(2 * cells.len()));
        }

        let mut space = Self {
            family,
            cells: cells.clone(),
            edges,
            edge_index,
            normals,
            edge_vertices,
            dofs: Vec::with_capacity(cells.len() * nloc),
            ndofs,
            class,
            centers: Vec::with_capacity(cells.len()),
            scales: Vec::with_capacity(cells.len()),
            areas: Vec::with_capacity(cells.len()),
            coef: Vec::with_capacity(cells.len()),
        };
        for (c, &t) in cells.iter().enumerate() {
            let te = mesh.tri_edges(t);
            for &e in &te {
                let k = space.edge_index[e].unwrap();
                space.dofs.push(2 * k);
                space.dofs.push(2 * k + 1);
            }
            if family == FluxFamily::Rt1 {
                space.dofs.push(n_edge_dofs + 2 * c);
                space.dofs.push(n_edge_dofs + 2 * c + 1);
            }
            let p = mesh.triangles()[t].map(|v| mesh.vertices()[v]);
            space.centers.push([(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]);
            space.scales.push(
                (0..3)
                    .map(|k| {
                        let (a, b) = (p[k], p[(k + 1) % 3]);
                        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                    })
                    .fold(0.0, f64::max),
            );
            space.areas.push(mesh.signed_area(t));
            space.coef.push([0.0; MAX_LOCAL * MAX_LOCAL]);
            // functional matrix D[j][k] = l_j(m_k), basis = monomials * D^{-1}
            let dmat = space.local_functionals(mesh, c, |x| {
                let (v, _) = flux_monomials(family, x, space.centers[c], space.scales[c]);
                v
            });
            let d = Mat::<f64>::from_fn(nloc, nloc, |j, k| dmat[j][k]);
            let inv = d.partial_piv_lu().inverse();
            let mut worst: f64 = 0.0;
            for j in 0..nloc {
                for i in 0..nloc {
                    let s: f64 = (0..nloc).map(|k| d[(j, k)] * inv[(k, i)]).sum();
                    worst = worst.max((s - if i == j { 1.0 } else { 0.0 }).abs());
                }
            }
            if !worst.is_finite() || worst > 1e-8 {
                return Err(Error::Construction(format!(
                    "flux degrees of freedom are not unisolvent on triangle {t}"
                )));
            }
            for k in 0..nloc {
                for i in 0..nloc {
                    space.coef[c][k * MAX_LOCAL + i] = inv[(k, i)];
                }
            }
        }
        Ok(space)
    }

    /// Applies the local degrees of freedom of cell `c` to `nloc` vector fields
    /// given by `f(x) -> [field_k(x)]`, returning `D[j][k] = l_j(field_k)`.
    fn local_functionals(
        &self,
        mesh: &CoupledMesh,
        c: usize,
        f: impl Fn([f64; 2]) -> [[f64; 2]; MAX_LOCAL],
    ) -> [[f64; MAX_LOCAL]; MAX_LOCAL] {
        let t = self.cells[c];
        let mut d = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        let line = edge_rule();
        for (j, &e) in mesh.tri_edges(t).iter().enumerate() {
            let k = self.edge_index[e].unwrap();
            let n = self.normals[k];
            let [a, b] = self.edge_vertices[k].map(|v| mesh.vertices()[v]);
            for (&s, &w) in line.points.iter().zip(&line.weights) {
                let x = [(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]];
                let vals = f(x);
                // dual functions of the endpoint values, scaled by the edge length
                let qa = 4.0 * (1.0 - s) - 2.0 * s;
                let qb = 4.0 * s - 2.0 * (1.0 - s);
                for (m, v) in vals.iter().enumerate() {
                    let vn = v[0] * n[0] + v[1] * n[1];
                    d[2 * j][m] += w * qa * vn;
                    d[2 * j + 1][m] += w * qb * vn;
                }
            }
        }
        if self.family == FluxFamily::Rt1 {
            let rule = TriangleRule::for_degree(4);
            let p = mesh.triangles()[t].map(|v| mesh.vertices()[v]);
            for (l, &w) in rule.bary.iter().zip(&rule.weights) {
                let x = [
                    l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                    l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                ];
                for (m, v) in f(x).iter().enumerate() {
                    d[6][m] += w * v[0];
                    d[7][m] += w * v[1];
                }
            }
        }
        d
    }

    /// The degrees of freedom of cell `c` applied to its own basis functions;
    /// the identity up to rounding.
    pub fn local_duality(&self, mesh: &CoupledMesh, c: usize) -> Vec<Vec<f64>> {
        let nloc = self.family.local_dim();
        let d = self.local_functionals(mesh, c, |x| {
            let s = self.eval(c, x);
            s.val
        });
        d[..nloc].iter().map(|r| r[..nloc].to_vec()).collect()
    }

    pub fn family(&self) -> FluxFamily {
        self.family
    }

    pub fn ndofs(&self) -> usize {
        self.ndofs
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        let s = self.family.local_dim();
        &self.dofs[c * s..(c + 1) * s]
    }

    pub fn cell_of(&self, t: usize) -> Option<usize> {
        self.cells.binary_search(&t).ok()
    }

    pub fn class(&self, dof: usize) -> FluxDofClass {
        self.class[dof]
    }

    pub fn dofs_of_class(&self, class: FluxDofClass) -> Vec<usize> {
        (0..self.ndofs).filter(|&i| self.class[i] == class).collect()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Global mesh edge carrying flux edge `k` (dofs `2k`, `2k + 1`).
    pub fn edge(&self, k: usize) -> usize {
        self.edges[k]
    }

    pub fn edge_index(&self, e: usize) -> Option<usize> {
        self.edge_index[e]
    }

    /// Mesh vertices of flux edge `k`; dof `2k` sits at the first one.
    pub fn edge_vertices(&self, k: usize) -> [usize; 2] {
        self.edge_vertices[k]
    }

    pub fn edge_normal(&self, k: usize) -> [f64; 2] {
        self.normals[k]
    }

    /// Dof at the given endpoint vertex of a mesh edge.
    pub fn edge_dof_at(&self, e: usize, vertex: usize) -> Option<usize> {
        let k = self.edge_index[e]?;
        let [a, b] = self.edge_vertices[k];
        if vertex == a {
            Some(2 * k)
        } else if vertex == b {
            Some(2 * k + 1)
        } else {
            None
        }
    }

    pub fn eval(&self, c: usize, x: [f64; 2]) -> FluxShape {
        let nloc = self.family.local_dim();
        let (m, dm) = flux_monomials(self.family, x, self.centers[c], self.scales[c]);
        let coef = &self.coef[c];
        let mut s = FluxShape {
            len: nloc,
            val: [[0.0; 2]; MAX_LOCAL],
            div: [0.0; MAX_LOCAL],
        };
        for k in 0..nloc {
            for i in 0..nloc {
                let a = coef[k * MAX_LOCAL + i];
                s.val[i][0] += a * m[k][0];
                s.val[i][1] += a * m[k][1];
                s.div[i] += a * dm[k];
            }
        }
        s
    }

    /// Value and divergence of a flux field at a point of cell `c`.
    pub fn value(&self, coeffs: &[f64], c: usize, x: [f64; 2]) -> ([f64; 2], f64) {
        let s = self.eval(c, x);
        let mut v = [0.0; 2];
        let mut d = 0.0;
        for (k, &g) in self.cell_dofs(c).iter().enumerate() {
            v[0] += coeffs[g] * s.val[k][0];
            v[1] += coeffs[g] * s.val[k][1];
            d += coeffs[g] * s.div[k];
        }
        (v, d)
    }

    /// Canonical interpolation: reproduces the edge moments of the normal
    /// component against linear functions and, for RT1, the cell means.
    pub fn interpolate(&self, mesh: &CoupledMesh, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.ndofs];
        let line = LineRule::gauss(8);
        for (k, &[a, b]) in self.edge_vertices.iter().enumerate() {
            let n = self.normals[k];
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            for (&s, &w) in line.points.iter().zip(&line.weights) {
                let x = [(1.0 - s) * pa[0] + s * pb[0], (1.0 - s) * pa[1] + s * pb[1]];
                let v = f(x);
                let vn = v[0] * n[0] + v[1] * n[1];
                out[2 * k] += w * (4.0 * (1.0 - s) - 2.0 * s) * vn;
                out[2 * k + 1] += w * (4.0 * s - 2.0 * (1.0 - s)) * vn;
            }
        }
        if self.family == FluxFamily::Rt1 {
            let base = 2 * self.edges.len();
            let rule = TriangleRule::for_degree(10);
            for (c, &t) in self.cells.iter().enumerate() {
                let p = mesh.triangles()[t].map(|v| mesh.vertices()[v]);
                for (l, &w) in rule.bary.iter().zip(&rule.weights) {
                    let x = [
                        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                    ];
                    let v = f(x);
                    out[base + 2 * c] += w * v[0];
                    out[base + 2 * c + 1] += w * v[1];
                }
            }
        }
        out
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        self.areas[c]
    }
}

/// The interface trace space: discontinuous linear functions on the interface
/// edges of the Darcy mesh. Coefficient `2k` is the value at the left end of
/// interface edge `k`, `2k + 1` at its right end.
#[derive(Clone, Debug)]
pub struct InterfaceTrace {
    edges: Vec<InterfaceEdge>,
    flux_dofs: Vec<[usize; 2]>,
}

impl InterfaceTrace {
    pub fn new(mesh: &CoupledMesh, flux: &FluxSpace) -> Self {
        let edges = mesh.interface_trace();
        let flux_dofs = edges
            .iter()
            .map(|ie| {
                [
                    flux.edge_dof_at(ie.edge, ie.left).unwrap(),
                    flux.edge_dof_at(ie.edge, ie.right).unwrap(),
                ]
            })
            .collect();
        Self { edges, flux_dofs }
    }

    pub fn dim(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn edges(&self) -> &[InterfaceEdge] {
        &self.edges
    }

    /// Flux dofs at the left and right ends of interface edge `k`.
    pub fn flux_dofs(&self, k: usize) -> [usize; 2] {
        self.flux_dofs[k]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementPair {
    MiniBdm1,
    P2isoP1Bdm1,
    TaylorHoodRt1,
}

impl ElementPair {
    pub const ALL: [ElementPair; 3] = [
        ElementPair::MiniBdm1,
        ElementPair::P2isoP1Bdm1,
        ElementPair::TaylorHoodRt1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ElementPair::MiniBdm1 => "mini-bdm1",
            ElementPair::P2isoP1Bdm1 => "p2isop1-bdm1",
            ElementPair::TaylorHoodRt1 => "th-rt1",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ElementPair::MiniBdm1 => "MINI-BDM(1)",
            ElementPair::P2isoP1Bdm1 => "P2isoP1-BDM(1)",
            ElementPair::TaylorHoodRt1 => "Taylor-Hood-RT(1)",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "minibdm1" | "mini" => Ok(ElementPair::MiniBdm1),
            "p2isop1bdm1" | "p2isop1" => Ok(ElementPair::P2isoP1Bdm1),
            "thrt1" | "taylorhoodrt1" | "th" | "taylorhood" => Ok(ElementPair::TaylorHoodRt1),
            _ => Err(invalid(format!("unknown element pair '{s}'"))),
        }
    }

    pub fn velocity_family(self) -> ScalarFamily {
        match self {
            ElementPair::MiniBdm1 => ScalarFamily::P1Bubble,
            ElementPair::P2isoP1Bdm1 => ScalarFamily::P1c,
            ElementPair::TaylorHoodRt1 => ScalarFamily::P2c,
        }
    }

    pub fn pressure_family(self) -> ScalarFamily {
        ScalarFamily::P1c
    }

    pub fn flux_family(self) -> FluxFamily {
        match self {
            ElementPair::TaylorHoodRt1 => FluxFamily::Rt1,
            _ => FluxFamily::Bdm1,
        }
    }

    /// True when the Stokes pressure lives on the once-coarsened mesh.
    pub fn coarse_pressure(self) -> bool {
        self == ElementPair::P2isoP1Bdm1
    }

    /// Smallest admissible mesh parameter.
    pub fn min_n(self) -> usize {
        if self.coarse_pressure() {
            4
        } else {
            2
        }
    }

    pub fn check_n(self, n: usize) -> Result<()> {
        let step = if self.coarse_pressure() { 4 } else { 2 };
        if n < self.min_n() || n % step != 0 {
            return Err(invalid(format!(
                "{} needs a mesh parameter divisible by {step} and at least {}, got {n}",
                self.title(),
                self.min_n()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for ElementPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.title())
    }
}

/// All discrete spaces of one coupled discretization.
#[derive(Clone, Debug)]
pub struct Spaces {
    pub pair: ElementPair,
    pub hierarchy: MeshHierarchy,
    /// one scalar component of the Stokes velocity; the vector space is its
    /// square with component-major numbering `c * m + i`
    pub velocity: ScalarSpace,
    pub pressure: ScalarSpace,
    pub flux: FluxSpace,
    pub darcy_pressure: ScalarSpace,
    pub trace: InterfaceTrace,
}

impl Spaces {
    pub fn new(pair: ElementPair, n: usize) -> Result<Self> {
        pair.check_n(n)?;
        let hierarchy = MeshHierarchy::new(n)?;
        let mesh = hierarchy.finest();
        let velocity = ScalarSpace::new(mesh, pair.velocity_family(), Subdomain::Stokes);
        let pressure = if pair.coarse_pressure() {
            let fine = hierarchy.levels().len() - 1;
            let anc = hierarchy.ancestors(fine, fine - 1);
            ScalarSpace::on_coarse(
                mesh,
                &hierarchy.levels()[fine - 1],
                &anc,
                pair.pressure_family(),
                Subdomain::Stokes,
            )
        } else {
            ScalarSpace::new(mesh, pair.pressure_family(), Subdomain::Stokes)
        };
        let flux = FluxSpace::new(mesh, pair.flux_family())?;
        let darcy_pressure = ScalarSpace::new(mesh, pair.flux_family().pressure_family(), Subdomain::Darcy);
        let trace = InterfaceTrace::new(mesh, &flux);
        Ok(Self {
            pair,
            hierarchy,
            velocity,
            pressure,
            flux,
            darcy_pressure,
            trace,
        })
    }

    pub fn mesh(&self) -> &CoupledMesh {
        self.hierarchy.finest()
    }

    pub fn n(&self) -> usize {
        self.mesh().n()
    }

    pub fn velocity_dofs(&self) -> usize {
        2 * self.velocity.ndofs()
    }

    /// Total number of degrees of freedom of the four fields, boundary dofs
    /// included.
    pub fn total_dofs(&self) -> usize {
        self.velocity_dofs() + self.pressure.ndofs() + self.flux.ndofs() + self.darcy_pressure.ndofs()
    }

    /// Velocity dofs (vector numbering) not fixed by the no-slip condition.
    pub fn free_velocity_dofs(&self) -> Vec<usize> {
        let m = self.velocity.ndofs();
        let comp = self.velocity.free_dofs();
        (0..2).flat_map(|c| comp.iter().map(move |&i| c * m + i)).collect()
    }
}
