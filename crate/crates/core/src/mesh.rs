//! Structured triangulations of the unit square split at `y = 1/2` into a
//! Stokes part (top) and a Darcy part (bottom).

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{invalid, Result};

/// Height of the interface line.
pub const INTERFACE_Y: f64 = 0.5;

/// Unit normal on the interface, pointing from the Stokes to the Darcy region.
pub const INTERFACE_NORMAL: [f64; 2] = [0.0, -1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subdomain {
    Stokes,
    Darcy,
}

impl Subdomain {
    pub fn tag(self) -> &'static str {
        match self {
            Subdomain::Stokes => "S",
            Subdomain::Darcy => "D",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    InteriorStokes,
    InteriorDarcy,
    /// outer boundary of the Stokes region
    GammaS,
    /// outer boundary of the Darcy region
    GammaD,
    /// interface
    Sigma,
}

impl EdgeTag {
    pub fn tag(self) -> &'static str {
        match self {
            EdgeTag::InteriorStokes => "IS",
            EdgeTag::InteriorDarcy => "ID",
            EdgeTag::GammaS => "GS",
            EdgeTag::GammaD => "GD",
            EdgeTag::Sigma => "SIGMA",
        }
    }

    pub fn is_boundary_of(self, dom: Subdomain) -> bool {
        matches!(
            (self, dom),
            (EdgeTag::GammaS, Subdomain::Stokes)
                | (EdgeTag::GammaD, Subdomain::Darcy)
                | (EdgeTag::Sigma, _)
        )
    }
}

#[derive(Clone, Debug)]
pub struct CoupledMesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    domains: Vec<Subdomain>,
    edges: Vec<[usize; 2]>,
    edge_tags: Vec<EdgeTag>,
    /// local edge `k` is opposite local vertex `k`
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<(usize, Option<usize>)>,
    edge_lookup: HashMap<[usize; 2], usize>,
    parent: Option<Vec<usize>>,
}

/// One edge of the interface with its two neighbouring triangles.
#[derive(Clone, Copy, Debug)]
pub struct InterfaceEdge {
    pub edge: usize,
    pub stokes_tri: usize,
    pub darcy_tri: usize,
    /// left endpoint (smaller x)
    pub left: usize,
    pub right: usize,
    pub length: f64,
    pub normal: [f64; 2],
}

impl CoupledMesh {
    /// Structured mesh with `n` subdivisions per unit length. Every square is
    /// split along its bottom-left to top-right diagonal.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(invalid(format!(
                "mesh subdivision must be even and at least 2, got {n}"
            )));
        }
        let np = n + 1;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        let mut domains = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            let dom = if j < n / 2 {
                Subdomain::Darcy
            } else {
                Subdomain::Stokes
            };
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
                domains.push(dom);
                domains.push(dom);
            }
        }
        Ok(Self::from_parts(n, vertices, triangles, domains, None))
    }

    fn from_parts(
        n: usize,
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        domains: Vec<Subdomain>,
        parent: Option<Vec<usize>>,
    ) -> Self {
        let mut edge_lookup: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<(usize, Option<usize>)> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = [a.min(b), a.max(b)];
                let e = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_tris.push((t, None));
                    edges.len() - 1
                });
                if edge_tris[e].0 != t {
                    edge_tris[e].1 = Some(t);
                }
                te[k] = e;
            }
            tri_edges.push(te);
        }
        let edge_tags = edge_tris
            .iter()
            .map(|&(t0, t1)| match t1 {
                None => match domains[t0] {
                    Subdomain::Stokes => EdgeTag::GammaS,
                    Subdomain::Darcy => EdgeTag::GammaD,
                },
                Some(t1) if domains[t0] != domains[t1] => EdgeTag::Sigma,
                Some(_) => match domains[t0] {
                    Subdomain::Stokes => EdgeTag::InteriorStokes,
                    Subdomain::Darcy => EdgeTag::InteriorDarcy,
                },
            })
            .collect();
        Self {
            n,
            vertices,
            triangles,
            domains,
            edges,
            edge_tags,
            tri_edges,
            edge_tris,
            edge_lookup,
            parent,
        }
    }

    /// Red refinement: every triangle is split into four through its edge
    /// midpoints. Old vertices keep their indices; the midpoint of edge `e` gets
    /// index `nv + e`. Child `4t + k` has parent `t`.
    pub fn refine_uniform(&self) -> Self {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(self.edges.iter().map(|&[a, b]| {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
        }));
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut domains = Vec::with_capacity(4 * self.triangles.len());
        let mut parent = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let te = self.tri_edges[t];
            // midpoints opposite a, b, c
            let (ma, mb, mc) = (nv + te[0], nv + te[1], nv + te[2]);
            for child in [[a, mc, mb], [mc, b, ma], [mb, ma, c], [mc, ma, mb]] {
                triangles.push(child);
                domains.push(self.domains[t]);
                parent.push(t);
            }
        }
        Self::from_parts(2 * self.n, vertices, triangles, domains, Some(parent))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh parameter reported in tables, `1/n`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn max_diameter(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                (0..3)
                    .map(|k| dist(self.vertices[tri[k]], self.vertices[tri[(k + 1) % 3]]))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn domain(&self, t: usize) -> Subdomain {
        self.domains[t]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_tag(&self, e: usize) -> EdgeTag {
        self.edge_tags[e]
    }

    pub fn tri_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    /// The (one or two) triangles adjacent to edge `e`.
    pub fn edge_triangles(&self, e: usize) -> (usize, Option<usize>) {
        self.edge_tris[e]
    }

    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&[a.min(b), a.max(b)]).copied()
    }

    pub fn parent(&self) -> Option<&[usize]> {
        self.parent.as_deref()
    }

    pub fn triangles_in(&self, dom: Subdomain) -> impl Iterator<Item = usize> + '_ {
        (0..self.triangles.len()).filter(move |&t| self.domains[t] == dom)
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    /// Flags vertices that lie on at least one edge with a tag accepted by `pred`.
    pub fn vertices_on(&self, pred: impl Fn(EdgeTag) -> bool) -> Vec<bool> {
        let mut on = vec![false; self.vertices.len()];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if pred(self.edge_tags[e]) {
                on[a] = true;
                on[b] = true;
            }
        }
        on
    }

    /// Interface edges sorted left to right, with the normal pointing into the
    /// Darcy region.
    pub fn interface_trace(&self) -> Vec<InterfaceEdge> {
        let mut out: Vec<InterfaceEdge> = self
            .edge_tags
            .iter()
            .enumerate()
            .filter(|(_, &tag)| tag == EdgeTag::Sigma)
            .map(|(e, _)| {
                let (t0, t1) = self.edge_tris[e];
                let t1 = t1.expect("interface edge has two neighbours");
                let (ts, td) = if self.domains[t0] == Subdomain::Stokes {
                    (t0, t1)
                } else {
                    (t1, t0)
                };
                let [a, b] = self.edges[e];
                let (left, right) = if self.vertices[a][0] <= self.vertices[b][0] {
                    (a, b)
                } else {
                    (b, a)
                };
                InterfaceEdge {
                    edge: e,
                    stokes_tri: ts,
                    darcy_tri: td,
                    left,
                    right,
                    length: self.edge_length(e),
                    normal: INTERFACE_NORMAL,
                }
            })
            .collect();
        out.sort_by(|p, q| {
            self.vertices[p.left][0]
                .partial_cmp(&self.vertices[q.left][0])
                .unwrap()
        });
        out
    }

    /// Plain-text dump: `v x y`, `t i j k tag`, and `e i j tag` for boundary
    /// and interface edges.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {}", v[0], v[1]);
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            let _ = writeln!(
                s,
                "t {} {} {} {}",
                tri[0],
                tri[1],
                tri[2],
                self.domains[t].tag()
            );
        }
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            let tag = self.edge_tags[e];
            if matches!(tag, EdgeTag::GammaS | EdgeTag::GammaD | EdgeTag::Sigma) {
                let _ = writeln!(s, "e {a} {b} {}", tag.tag());
            }
        }
        s
    }

    /// Vertices, edges and triangles touched by the given subdomain.
    pub fn euler_counts(&self, dom: Subdomain) -> (usize, usize, usize) {
        let mut vs = vec![false; self.vertices.len()];
        let mut es = vec![false; self.edges.len()];
        let mut nt = 0;
        for t in self.triangles_in(dom) {
            nt += 1;
            for &v in &self.triangles[t] {
                vs[v] = true;
            }
            for &e in &self.tri_edges[t] {
                es[e] = true;
            }
        }
        (
            vs.iter().filter(|&&b| b).count(),
            es.iter().filter(|&&b| b).count(),
            nt,
        )
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Nested meshes obtained by red refinement, coarsest first.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    levels: Vec<CoupledMesh>,
}

impl MeshHierarchy {
    /// Builds the finest mesh with parameter `n` by refining the coarsest even
    /// mesh reachable by halving `n`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(invalid(format!(
                "mesh subdivision must be even and at least 2, got {n}"
            )));
        }
        let mut base = n;
        while base % 4 == 0 {
            base /= 2;
        }
        let mut levels = vec![CoupledMesh::unit_square(base)?];
        while levels.last().unwrap().n() < n {
            let next = levels.last().unwrap().refine_uniform();
            levels.push(next);
        }
        Ok(Self { levels })
    }

    pub fn finest(&self) -> &CoupledMesh {
        self.levels.last().unwrap()
    }

    pub fn levels(&self) -> &[CoupledMesh] {
        &self.levels
    }

    pub fn level_of(&self, n: usize) -> Option<usize> {
        self.levels.iter().position(|m| m.n() == n)
    }

    /// For every triangle of `levels[fine]`, its ancestor in `levels[coarse]`.
    pub fn ancestors(&self, fine: usize, coarse: usize) -> Vec<usize> {
        assert!(coarse <= fine && fine < self.levels.len());
        let mut map: Vec<usize> = (0..self.levels[fine].triangles().len()).collect();
        for l in ((coarse + 1)..=fine).rev() {
            let parent = self.levels[l].parent().expect("refined level has parents");
            for m in map.iter_mut() {
                *m = parent[*m];
            }
        }
        map
    }
}
