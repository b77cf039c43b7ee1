//! Preconditioners: direct inverses, mass-matrix treatments, BPX, the nodal
//! auxiliary space (Hiptmair-Xu) preconditioner for H(div), and block
//! diagonal compositions.

use std::cell::Cell;
use std::collections::BTreeMap;

use crate::assembly::{cell_quadrature, segment_quadrature, PhysicalParams};
use crate::error::{invalid, Error, Result};
use crate::fespace::{FluxDofClass, FluxSpace, ScalarFamily, ScalarSpace};
use crate::krylov::LinearOperator;
use crate::mesh::{MeshHierarchy, Subdomain};
use crate::quadrature::TriangleRule;
use crate::sparse::{Cholesky, CsrMatrix, TripletBuilder};

/// `x -> M^-1 x` through a cached sparse Cholesky factorization.
pub struct DirectInverse {
    chol: Cholesky,
}

pub fn build_direct_inverse(m: &CsrMatrix) -> Result<DirectInverse> {
    Ok(DirectInverse {
        chol: Cholesky::new(m)?,
    })
}

impl LinearOperator for DirectInverse {
    fn dim(&self) -> usize {
        self.chol.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.chol.solve_in_place(y);
    }
}

/// Inverse of a diagonal matrix.
pub struct DiagonalInverse {
    inv: Vec<f64>,
}

impl DiagonalInverse {
    pub fn new(diag: &[f64]) -> Result<Self> {
        if let Some(d) = diag.iter().find(|&&d| d <= 0.0) {
            return Err(invalid(format!("diagonal scaling needs positive entries, found {d}")));
        }
        Ok(Self {
            inv: diag.iter().map(|d| 1.0 / d).collect(),
        })
    }
}

impl LinearOperator for DiagonalInverse {
    fn dim(&self) -> usize {
        self.inv.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.inv) {
            *yi = xi * d;
        }
    }
}

/// One symmetric Gauss-Seidel sweep from a zero initial guess,
/// `(D + U)^-1 D (D + L)^-1`.
pub struct SymmetricGaussSeidel {
    a: CsrMatrix,
    diag: Vec<f64>,
}

impl SymmetricGaussSeidel {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let diag = a.diagonal();
        if diag.iter().any(|&d| d <= 0.0) {
            return Err(invalid("Gauss-Seidel needs a positive diagonal"));
        }
        Ok(Self { a: a.clone(), diag })
    }
}

impl LinearOperator for SymmetricGaussSeidel {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut s = x[i];
            for (j, v) in self.a.row(i) {
                if j < i {
                    s -= v * y[j];
                }
            }
            y[i] = s / self.diag[i];
        }
        for i in 0..n {
            y[i] *= self.diag[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for (j, v) in self.a.row(i) {
                if j > i {
                    s -= v * y[j];
                }
            }
            y[i] = s / self.diag[i];
        }
    }
}

/// Treatment of pressure mass blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MassMode {
    /// factorized inverse
    Exact,
    /// one symmetric Gauss-Seidel sweep
    #[default]
    GaussSeidel,
}

/// Mass-matrix inverse; a diagonal mass matrix is always inverted exactly.
pub fn mass_inverse(m: &CsrMatrix, mode: MassMode) -> Result<Box<dyn LinearOperator>> {
    if m.is_diagonal() {
        return Ok(Box::new(DiagonalInverse::new(&m.diagonal())?));
    }
    Ok(match mode {
        MassMode::Exact => Box::new(build_direct_inverse(m)?),
        MassMode::GaussSeidel => Box::new(SymmetricGaussSeidel::new(m)?),
    })
}

struct BpxLevel {
    /// prolongation from the next coarser level to this one
    p: CsrMatrix,
    inv_diag: Vec<f64>,
}

/// Additive multilevel preconditioner: Jacobi on every level of a nested
/// hierarchy, exact solve on the coarsest. Level matrices are Galerkin
/// products of the fine matrix.
pub struct Bpx {
    levels: Vec<BpxLevel>,
    coarse: Cholesky,
    n: usize,
}

/// `prolongations[0]` maps the second finest level to the finest, and so on.
pub fn build_bpx(fine: &CsrMatrix, prolongations: &[CsrMatrix]) -> Result<Bpx> {
    let mut levels = Vec::with_capacity(prolongations.len());
    let mut a = fine.clone();
    for p in prolongations {
        if p.nrows() != a.nrows() {
            return Err(invalid(format!(
                "prolongation with {} rows does not fit a level of size {}",
                p.nrows(),
                a.nrows()
            )));
        }
        let d = a.diagonal();
        if d.iter().any(|&v| v <= 0.0) {
            return Err(invalid("level matrix has a nonpositive diagonal"));
        }
        levels.push(BpxLevel {
            p: p.clone(),
            inv_diag: d.iter().map(|v| 1.0 / v).collect(),
        });
        a = a.galerkin(p);
    }
    Ok(Bpx {
        levels,
        coarse: Cholesky::new(&a)?,
        n: fine.nrows(),
    })
}

impl Bpx {
    pub fn num_levels(&self) -> usize {
        self.levels.len() + 1
    }
}

impl LinearOperator for Bpx {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        // restrict the residual to every level
        let mut rs: Vec<Vec<f64>> = Vec::with_capacity(self.levels.len() + 1);
        rs.push(x.to_vec());
        for lvl in &self.levels {
            let r = lvl.p.tr_mul_vec(rs.last().unwrap());
            rs.push(r);
        }
        let mut z = rs.pop().unwrap();
        self.coarse.solve_in_place(&mut z);
        for (lvl, r) in self.levels.iter().zip(rs.iter()).rev() {
            let mut zf: Vec<f64> = r.iter().zip(&lvl.inv_diag).map(|(a, b)| a * b).collect();
            lvl.p.mul_vec_acc(1.0, &z, &mut zf);
            z = zf;
        }
        y.copy_from_slice(&z);
    }
}

/// Coefficients of coarse basis functions at the nodes of a finer space.
/// `ancestor(t)` maps a fine triangle to the coarse triangle containing it.
/// Rows of non-nodal fine dofs (bubbles) are zero.
pub fn nodal_prolongation(coarse: &ScalarSpace, fine: &ScalarSpace, ancestor: impl Fn(usize) -> usize) -> CsrMatrix {
    let mut done = vec![false; fine.ndofs()];
    let mut b = TripletBuilder::new(fine.ndofs(), coarse.ndofs());
    for (c, &t) in fine.cells().iter().enumerate() {
        let cc = coarse
            .cell_of(ancestor(t))
            .expect("coarse space covers the fine cells");
        let cd = coarse.cell_dofs(cc);
        for &d in fine.cell_dofs(c) {
            if done[d] {
                continue;
            }
            done[d] = true;
            if !fine.is_nodal(d) {
                continue;
            }
            let s = coarse.eval(cc, fine.point(d));
            for (k, &g) in cd.iter().enumerate() {
                if s.val[k].abs() > 1e-14 {
                    b.push(d, g, s.val[k]);
                }
            }
        }
    }
    b.build()
}

/// Which dofs of each nodal level are kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodalConstraint {
    /// vanish on the outer boundary of the subdomain
    OuterBoundary,
    /// vanish on the whole boundary of the subdomain
    WholeBoundary,
}

fn kept(space: &ScalarSpace, c: NodalConstraint) -> Vec<usize> {
    match c {
        NodalConstraint::OuterBoundary => space.free_dofs(),
        NodalConstraint::WholeBoundary => space.interior_dofs(),
    }
}

/// Prolongations of a nested family of nodal spaces on one subdomain: the
/// top space on the finest mesh, then continuous P1 on the same mesh (when
/// the top space is richer) and on every coarser mesh. Coarse levels without
/// any free dof are dropped. Matrices act on kept dofs only and are ordered
/// finest first.
pub fn nodal_hierarchy(
    hier: &MeshHierarchy,
    top: ScalarFamily,
    subdomain: Subdomain,
    constraint: NodalConstraint,
) -> Vec<CsrMatrix> {
    let levels = hier.levels();
    let finest = levels.len() - 1;
    let mut spaces: Vec<(usize, ScalarSpace)> = vec![(finest, ScalarSpace::new(&levels[finest], top, subdomain))];
    if top != ScalarFamily::P1c {
        spaces.push((finest, ScalarSpace::new(&levels[finest], ScalarFamily::P1c, subdomain)));
    }
    for l in (0..finest).rev() {
        spaces.push((l, ScalarSpace::new(&levels[l], ScalarFamily::P1c, subdomain)));
    }
    let mut out = Vec::new();
    for w in spaces.windows(2) {
        let ((lf, fine), (lc, coarse)) = (&w[0], &w[1]);
        let kc = kept(coarse, constraint);
        if kc.is_empty() {
            break;
        }
        let kf = kept(fine, constraint);
        let p = if lf == lc {
            nodal_prolongation(coarse, fine, |t| t)
        } else {
            let parent = levels[*lf].parent().expect("refined level");
            nodal_prolongation(coarse, fine, |t| parent[t])
        };
        out.push(p.submatrix(&kf, &kc));
    }
    out
}

/// `diag(P, P)` for the two components of a vector field.
pub fn vector_prolongation(p: &CsrMatrix) -> CsrMatrix {
    let (n, m) = (p.nrows(), p.ncols());
    let mut b = TripletBuilder::with_capacity(2 * n, 2 * m, 2 * p.nnz());
    for (i, j, v) in p.triplets() {
        b.push(i, j, v);
        b.push(n + i, m + j, v);
    }
    b.build()
}

/// Block-diagonal operator assembled from independent blocks.
pub struct BlockDiagonal {
    blocks: Vec<Box<dyn LinearOperator>>,
    offsets: Vec<usize>,
}

impl BlockDiagonal {
    pub fn new(blocks: Vec<Box<dyn LinearOperator>>) -> Self {
        let mut offsets = vec![0];
        for b in &blocks {
            offsets.push(offsets.last().unwrap() + b.dim());
        }
        Self { blocks, offsets }
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim()).collect()
    }
}

impl LinearOperator for BlockDiagonal {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (k, b) in self.blocks.iter().enumerate() {
            let r = self.offsets[k]..self.offsets[k + 1];
            b.apply(&x[r.clone()], &mut y[r]);
        }
    }
}

/// Transfer and auxiliary matrices of the nodal auxiliary space
/// preconditioner on the flux dofs with vanishing normal trace.
pub struct HxTransfer {
    /// curl of scalar nodal basis functions expanded in the flux basis
    pub curl: CsrMatrix,
    /// canonical interpolation of vector nodal functions (component-major)
    pub interpolation: CsrMatrix,
    /// diagonal of the H(div) matrix
    pub smoother_diag: Vec<f64>,
    /// scalar `stiffness + tau * mass` on the auxiliary space
    pub shifted_laplace: CsrMatrix,
    /// scalar stiffness on the auxiliary space
    pub laplace: CsrMatrix,
    pub tau: f64,
    pub nodal_family: ScalarFamily,
}

/// Builds the auxiliary space matrices. `hdiv` is the matrix
/// `A_D + D_D` restricted to `flux_dofs` (the interior flux dofs).
pub fn build_hx_transfers(
    hier: &MeshHierarchy,
    flux: &FluxSpace,
    flux_dofs: &[usize],
    hdiv: &CsrMatrix,
    divdiv: &CsrMatrix,
    params: &PhysicalParams,
) -> Result<HxTransfer> {
    let mesh = hier.finest();
    let family = flux.family().nodal_family();
    let aux = ScalarSpace::new(mesh, family, Subdomain::Darcy);
    let aux_dofs = aux.interior_dofs();
    let mut aux_index = vec![usize::MAX; aux.ndofs()];
    for (k, &d) in aux_dofs.iter().enumerate() {
        aux_index[d] = k;
    }
    let na = aux_dofs.len();
    let nf = flux_dofs.len();
    let mut curl = TripletBuilder::new(nf, na);
    let mut interp = TripletBuilder::new(nf, 2 * na);
    let n_edge_dofs = 2 * flux.num_edges();
    let rule = TriangleRule::for_degree(2 * family.degree() + 2);
    for (row, &j) in flux_dofs.iter().enumerate() {
        // aux column -> (curl entry, interpolation entries)
        let mut acc: BTreeMap<usize, (f64, [f64; 2])> = BTreeMap::new();
        let mut add = |col: usize, curl_v: f64, val: [f64; 2]| {
            let e = acc.entry(col).or_insert((0.0, [0.0; 2]));
            e.0 += curl_v;
            e.1[0] += val[0];
            e.1[1] += val[1];
        };
        if j < n_edge_dofs {
            let k = j / 2;
            let end = j % 2;
            let e = flux.edge(k);
            let (t0, t1) = mesh.edge_triangles(e);
            let t = if mesh.domain(t0) == Subdomain::Darcy { t0 } else { t1.unwrap() };
            let c = aux.cell_of(t).unwrap();
            let n = flux.edge_normal(k);
            let [a, b] = flux.edge_vertices(k).map(|v| mesh.vertices()[v]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            for (x, w) in segment_quadrature(a, b, 4) {
                let s = ((x[0] - a[0]) * (b[0] - a[0]) + (x[1] - a[1]) * (b[1] - a[1])) / (len * len);
                let q = if end == 0 {
                    4.0 * (1.0 - s) - 2.0 * s
                } else {
                    4.0 * s - 2.0 * (1.0 - s)
                } / len;
                let sh = aux.eval(c, x);
                for (l, &d) in aux.cell_dofs(c).iter().enumerate() {
                    if aux_index[d] == usize::MAX {
                        continue;
                    }
                    let g = sh.grad[l];
                    let cn = g[1] * n[0] - g[0] * n[1];
                    add(aux_index[d], w * q * cn, [w * q * sh.val[l] * n[0], w * q * sh.val[l] * n[1]]);
                }
            }
        } else {
            let cf = (j - n_edge_dofs) / 2;
            let comp = (j - n_edge_dofs) % 2;
            let t = flux.cells()[cf];
            let c = aux.cell_of(t).unwrap();
            let area = mesh.signed_area(t);
            for (x, w) in cell_quadrature(mesh, t, &rule) {
                let w = w / area;
                let sh = aux.eval(c, x);
                for (l, &d) in aux.cell_dofs(c).iter().enumerate() {
                    if aux_index[d] == usize::MAX {
                        continue;
                    }
                    let g = sh.grad[l];
                    let cv = if comp == 0 { g[1] } else { -g[0] };
                    let mut val = [0.0; 2];
                    val[comp] = w * sh.val[l];
                    add(aux_index[d], w * cv, val);
                }
            }
        }
        for (col, (cv, val)) in acc {
            if cv.abs() > 1e-14 {
                curl.push(row, col, cv);
            }
            for comp in 0..2 {
                if val[comp].abs() > 1e-14 {
                    interp.push(row, comp * na + col, val[comp]);
                }
            }
        }
    }
    let curl = curl.build();
    let interpolation = interp.build();

    // div curl = 0 up to rounding
    let dc = divdiv.matmul(&curl);
    let scale = divdiv.max_abs() * curl.max_abs();
    if dc.max_abs() > 1e-10 * scale.max(1.0) {
        return Err(Error::Construction(format!(
            "curl of nodal functions is not divergence free: residual {:e}",
            dc.max_abs()
        )));
    }

    let mut k = TripletBuilder::new(na, na);
    let mut m = TripletBuilder::new(na, na);
    for (c, &t) in aux.cells().iter().enumerate() {
        let dofs = aux.cell_dofs(c);
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let s = aux.eval(c, x);
            for (i, &di) in dofs.iter().enumerate() {
                if aux_index[di] == usize::MAX {
                    continue;
                }
                for (jj, &dj) in dofs.iter().enumerate() {
                    if aux_index[dj] == usize::MAX {
                        continue;
                    }
                    let g = s.grad[i][0] * s.grad[jj][0] + s.grad[i][1] * s.grad[jj][1];
                    k.push(aux_index[di], aux_index[dj], w * g);
                    m.push(aux_index[di], aux_index[dj], w * s.val[i] * s.val[jj]);
                }
            }
        }
    }
    let laplace = k.build();
    let mass = m.build();
    let smoother_diag = hdiv.diagonal();
    Ok(HxTransfer {
        curl,
        interpolation,
        smoother_diag,
        shifted_laplace: laplace.add(1.0, &mass, params.tau),
        laplace,
        tau: params.tau,
        nodal_family: family,
    })
}

/// How the two auxiliary elliptic problems are solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxSolver {
    Direct,
    Bpx,
}

/// `S^-1 + I L^-1 I^T + tau^-1 C (-Delta)^-1 C^T`
pub struct HxPreconditioner {
    t: HxTransfer,
    smoother: DiagonalInverse,
    shifted: Box<dyn LinearOperator>,
    laplace: Box<dyn LinearOperator>,
    aux_solves: Cell<usize>,
}

pub fn build_hx_precond(t: HxTransfer, mode: AuxSolver, hier: &MeshHierarchy) -> Result<HxPreconditioner> {
    let smoother = DiagonalInverse::new(&t.smoother_diag)?;
    let (shifted, laplace): (Box<dyn LinearOperator>, Box<dyn LinearOperator>) = match mode {
        AuxSolver::Direct => (
            Box::new(build_direct_inverse(&t.shifted_laplace)?),
            Box::new(build_direct_inverse(&t.laplace)?),
        ),
        AuxSolver::Bpx => {
            let ps = nodal_hierarchy(hier, t.nodal_family, Subdomain::Darcy, NodalConstraint::WholeBoundary);
            (
                Box::new(build_bpx(&t.shifted_laplace, &ps)?),
                Box::new(build_bpx(&t.laplace, &ps)?),
            )
        }
    };
    Ok(HxPreconditioner {
        t,
        smoother,
        shifted,
        laplace,
        aux_solves: Cell::new(0),
    })
}

impl HxPreconditioner {
    /// Number of auxiliary elliptic solves performed so far.
    pub fn aux_solves(&self) -> usize {
        self.aux_solves.get()
    }

    pub fn transfer(&self) -> &HxTransfer {
        &self.t
    }
}

impl LinearOperator for HxPreconditioner {
    fn dim(&self) -> usize {
        self.t.smoother_diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.smoother.apply(x, y);
        let na = self.t.laplace.nrows();
        // vector Laplacian, both components share one scalar operator
        let r = self.t.interpolation.tr_mul_vec(x);
        let mut z = vec![0.0; 2 * na];
        self.shifted.apply(&r[..na], &mut z[..na]);
        self.shifted.apply(&r[na..], &mut z[na..]);
        self.t.interpolation.mul_vec_acc(1.0, &z, y);
        let r = self.t.curl.tr_mul_vec(x);
        let z = self.laplace.apply_vec(&r);
        self.t.curl.mul_vec_acc(1.0 / self.t.tau, &z, y);
        self.aux_solves.set(self.aux_solves.get() + 2);
    }
}

/// Helper for tests and diagnostics: the interior flux dofs of a space.
pub fn interior_flux_dofs(flux: &FluxSpace) -> Vec<usize> {
    flux.dofs_of_class(FluxDofClass::Interior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_darcy;
    use crate::fespace::{ElementPair, Spaces};
    use crate::krylov::{lanczos, symmetry_defect};
    use rand::{Rng, SeedableRng};

    fn spd_probe(op: &dyn LinearOperator, seed: u64) -> bool {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..20).all(|_| {
            let x: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = op.apply_vec(&x);
            x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() > 0.0
        })
    }

    #[test]
    fn direct_inverse_of_diagonal() {
        let m = CsrMatrix::from_diagonal(&[2.0, 4.0]);
        let d = build_direct_inverse(&m).unwrap();
        let y = d.apply_vec(&[2.0, 4.0]);
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_seidel_is_symmetric_positive() {
        let a = CsrMatrix::from_dense(
            &[vec![4.0, 1.0, 0.0], vec![1.0, 4.0, 1.0], vec![0.0, 1.0, 4.0]],
            3,
        );
        let gs = SymmetricGaussSeidel::new(&a).unwrap();
        assert!(symmetry_defect(&gs, 5, 3) < 1e-14);
        assert!(spd_probe(&gs, 4));
    }

    #[test]
    fn single_level_bpx_is_the_direct_inverse() {
        let a = CsrMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]], 2);
        let b = build_bpx(&a, &[]).unwrap();
        let y = b.apply_vec(&[1.0, 1.0]);
        assert!((y[0] - 1.0).abs() < 1e-14 && (y[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn prolongation_reproduces_coarse_functions() {
        let hier = MeshHierarchy::new(8).unwrap();
        let ps = nodal_hierarchy(&hier, ScalarFamily::P2c, Subdomain::Darcy, NodalConstraint::WholeBoundary);
        assert_eq!(ps.len(), 2);
        // P2 -> P1 on the same mesh -> P1 on n = 4; n = 2 has no interior node
        // and is dropped
        let fine = ScalarSpace::new(hier.finest(), ScalarFamily::P1c, Subdomain::Stokes);
        let coarse = ScalarSpace::new(&hier.levels()[1], ScalarFamily::P1c, Subdomain::Stokes);
        let parent = hier.finest().parent().unwrap().to_vec();
        let p = nodal_prolongation(&coarse, &fine, |t| parent[t]);
        let lin = |x: [f64; 2]| 1.0 + 2.0 * x[0] - 3.0 * x[1];
        let fc = coarse.interpolate(lin);
        let ff = p.mul_vec(&fc);
        let exact = fine.interpolate(lin);
        assert!(ff.iter().zip(&exact).all(|(a, b)| (a - b).abs() < 1e-13));
    }

    fn hx_setup(pair: ElementPair, n: usize) -> (Spaces, CsrMatrix, HxTransfer) {
        let sp = Spaces::new(pair, n).unwrap();
        let params = PhysicalParams::default();
        let f = assemble_darcy(sp.mesh(), &sp.flux, &sp.darcy_pressure, &params);
        let dofs = interior_flux_dofs(&sp.flux);
        let hdiv = f.a.add(1.0, &f.divdiv, 1.0).submatrix(&dofs, &dofs);
        let dd = f.divdiv.submatrix(&dofs, &dofs);
        let t = build_hx_transfers(&sp.hierarchy, &sp.flux, &dofs, &hdiv, &dd, &params).unwrap();
        (sp, hdiv, t)
    }

    #[test]
    fn hx_preconditioner_is_spd_and_counts_solves() {
        for pair in [ElementPair::MiniBdm1, ElementPair::TaylorHoodRt1] {
            for mode in [AuxSolver::Direct, AuxSolver::Bpx] {
                let (sp, _, t) = hx_setup(pair, 8);
                let p = build_hx_precond(t, mode, &sp.hierarchy).unwrap();
                assert!(spd_probe(&p, 11));
                assert!(symmetry_defect(&p, 3, 12) < 1e-12);
                let before = p.aux_solves();
                let _ = p.apply_vec(&vec![1.0; p.dim()]);
                assert_eq!(p.aux_solves() - before, 2);
            }
        }
    }

    #[test]
    fn hx_condition_number_is_moderate() {
        let (sp, hdiv, t) = hx_setup(ElementPair::MiniBdm1, 8);
        let p = build_hx_precond(t, AuxSolver::Direct, &sp.hierarchy).unwrap();
        let r = lanczos(&hdiv, &p, 80, 5).unwrap();
        assert!(r.min() > 0.0);
        assert!(r.condition() < 50.0, "{}", r.condition());
    }
}
