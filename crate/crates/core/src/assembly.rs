//! Bilinear forms, interface coupling matrices and manufactured loads.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fespace::{ElementPair, FluxDofClass, FluxSpace, ScalarSpace, Spaces};
use crate::mesh::{CoupledMesh, INTERFACE_NORMAL};
use crate::quadrature::{LineRule, TriangleRule};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Quadrature degree used for right-hand sides and error norms.
pub const LOAD_DEGREE: usize = 10;

/// Gauss points per interface edge.
pub const INTERFACE_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    /// viscosity
    pub nu: f64,
    /// friction coefficient of the slip condition on the interface
    pub kappa: f64,
    /// inverse permeability, `K = I / tau`
    pub tau: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            nu: 1.0,
            kappa: 1.0,
            tau: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.kappa > 0.0 && self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "physical parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Closed-form solution of the coupled problem. Sources and the interface
/// residual are derived from the fields.
pub trait ExactSolution: Sync {
    fn stokes_velocity(&self, x: [f64; 2]) -> [f64; 2];
    /// `g[c][d] = d u_c / d x_d`
    fn stokes_velocity_grad(&self, x: [f64; 2]) -> [[f64; 2]; 2];
    fn stokes_pressure(&self, x: [f64; 2]) -> f64;
    /// `-nu * laplacian(u) + grad(p)` (the velocity is divergence free)
    fn stokes_source(&self, x: [f64; 2], params: &PhysicalParams) -> [f64; 2];
    fn darcy_pressure(&self, x: [f64; 2]) -> f64;
    fn darcy_pressure_grad(&self, x: [f64; 2]) -> [f64; 2];
    /// Laplacian of the Darcy pressure.
    fn darcy_pressure_laplacian(&self, x: [f64; 2]) -> f64;

    fn darcy_velocity(&self, x: [f64; 2], params: &PhysicalParams) -> [f64; 2] {
        let g = self.darcy_pressure_grad(x);
        [-g[0] / params.tau, -g[1] / params.tau]
    }

    fn darcy_source(&self, x: [f64; 2], params: &PhysicalParams) -> f64 {
        -self.darcy_pressure_laplacian(x) / params.tau
    }

    /// `2 nu eps(u) n - p_S n + kappa (u - (u.n) n) + p_D n` on the interface;
    /// zero when the fields satisfy the interface conditions.
    fn interface_residual(&self, x: [f64; 2], params: &PhysicalParams) -> [f64; 2] {
        let n = INTERFACE_NORMAL;
        let g = self.stokes_velocity_grad(x);
        let u = self.stokes_velocity(x);
        let eps = [
            [g[0][0], 0.5 * (g[0][1] + g[1][0])],
            [0.5 * (g[0][1] + g[1][0]), g[1][1]],
        ];
        let ps = self.stokes_pressure(x);
        let pd = self.darcy_pressure(x);
        let un = u[0] * n[0] + u[1] * n[1];
        let mut r = [0.0; 2];
        for a in 0..2 {
            let sn = eps[a][0] * n[0] + eps[a][1] * n[1];
            r[a] = 2.0 * params.nu * sn - ps * n[a] + params.kappa * (u[a] - un * n[a]) + pd * n[a];
        }
        r
    }
}

/// The trigonometric benchmark solution on the unit square.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrigonometricCase;

impl ExactSolution for TrigonometricCase {
    fn stokes_velocity(&self, x: [f64; 2]) -> [f64; 2] {
        let (s, c) = (2.0 * PI * x[0]).sin_cos();
        let (s2, c2) = (2.0 * PI * x[1]).sin_cos();
        [PI * s2 * s.powi(3), -3.0 * PI * s * s * c * (1.0 - c2)]
    }

    fn stokes_velocity_grad(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let (s, c) = (2.0 * PI * x[0]).sin_cos();
        let (s2, c2) = (2.0 * PI * x[1]).sin_cos();
        let p2 = PI * PI;
        [
            [6.0 * p2 * s2 * s * s * c, 2.0 * p2 * c2 * s.powi(3)],
            [
                -6.0 * p2 * (1.0 - c2) * (2.0 * s * c * c - s.powi(3)),
                -6.0 * p2 * s * s * c * s2,
            ],
        ]
    }

    fn stokes_pressure(&self, x: [f64; 2]) -> f64 {
        -0.25 * PI * (0.5 * PI * x[0]).cos() * (x[1] - 0.5 - (PI * (x[1] + 0.5)).cos())
    }

    fn stokes_source(&self, x: [f64; 2], params: &PhysicalParams) -> [f64; 2] {
        let (s, c) = (2.0 * PI * x[0]).sin_cos();
        let (s2, c2) = (2.0 * PI * x[1]).sin_cos();
        let p3 = PI.powi(3);
        let lap1 = p3 * s2 * (24.0 * s * c * c - 16.0 * s.powi(3));
        let lap2 = -12.0 * p3 * ((1.0 - c2) * (2.0 * c.powi(3) - 7.0 * s * s * c) + s * s * c * c2);
        let (sx, cx) = (0.5 * PI * x[0]).sin_cos();
        let bracket = x[1] - 0.5 - (PI * (x[1] + 0.5)).cos();
        let dpx = PI * PI / 8.0 * sx * bracket;
        let dpy = -0.25 * PI * cx * (1.0 + PI * (PI * (x[1] + 0.5)).sin());
        [-params.nu * lap1 + dpx, -params.nu * lap2 + dpy]
    }

    fn darcy_pressure(&self, x: [f64; 2]) -> f64 {
        let (s, c) = (2.0 * PI * x[0]).sin_cos();
        let py = 3.0 * PI * x[1] - 1.5 * (2.0 * PI * x[1]).sin();
        py * s * s * c
    }

    fn darcy_pressure_grad(&self, x: [f64; 2]) -> [f64; 2] {
        let (s, c) = (2.0 * PI * x[0]).sin_cos();
        let c2 = (2.0 * PI * x[1]).cos();
        let py = 3.0 * PI * x[1] - 1.5 * (2.0 * PI * x[1]).sin();
        let dpy = 3.0 * PI * (1.0 - c2);
        let xx = s * s * c;
        let dxx = 2.0 * PI * (2.0 * s * c * c - s.powi(3));
        [py * dxx, dpy * xx]
    }

    fn darcy_pressure_laplacian(&self, x: [f64; 2]) -> f64 {
        let (s, c) = (2.0 * PI * x[0]).sin_cos();
        let s2 = (2.0 * PI * x[1]).sin();
        let py = 3.0 * PI * x[1] - 1.5 * s2;
        let d2py = 6.0 * PI * PI * s2;
        let xx = s * s * c;
        let d2xx = 4.0 * PI * PI * (2.0 * c.powi(3) - 7.0 * s * s * c);
        py * d2xx + d2py * xx
    }
}

/// The identically zero solution.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroCase;

impl ExactSolution for ZeroCase {
    fn stokes_velocity(&self, _: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }
    fn stokes_velocity_grad(&self, _: [f64; 2]) -> [[f64; 2]; 2] {
        [[0.0; 2]; 2]
    }
    fn stokes_pressure(&self, _: [f64; 2]) -> f64 {
        0.0
    }
    fn stokes_source(&self, _: [f64; 2], _: &PhysicalParams) -> [f64; 2] {
        [0.0; 2]
    }
    fn darcy_pressure(&self, _: [f64; 2]) -> f64 {
        0.0
    }
    fn darcy_pressure_grad(&self, _: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }
    fn darcy_pressure_laplacian(&self, _: [f64; 2]) -> f64 {
        0.0
    }
}

/// Physical quadrature points `(x, weight * area)` of triangle `t`.
pub fn cell_quadrature(mesh: &CoupledMesh, t: usize, rule: &TriangleRule) -> Vec<([f64; 2], f64)> {
    let p = mesh.triangles()[t].map(|v| mesh.vertices()[v]);
    let area = mesh.signed_area(t);
    rule.bary
        .iter()
        .zip(&rule.weights)
        .map(|(l, &w)| {
            (
                [
                    l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                    l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                ],
                w * area,
            )
        })
        .collect()
}

/// Points `(x, weight * length)` on the segment from `a` to `b`.
pub fn segment_quadrature(a: [f64; 2], b: [f64; 2], npts: usize) -> Vec<([f64; 2], f64)> {
    let line = LineRule::gauss(npts);
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    line.points
        .iter()
        .zip(&line.weights)
        .map(|(&s, &w)| ([(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]], w * len))
        .collect()
}

/// Stokes blocks over the full (unconstrained) vector velocity space, with
/// component-major numbering.
#[derive(Clone, Debug)]
pub struct StokesForms {
    /// `2 nu (eps u, eps v) + kappa <u_t, v_t>` on the interface
    pub a: CsrMatrix,
    /// `(div v, q)`, pressure rows
    pub div: CsrMatrix,
    pub pressure_mass: CsrMatrix,
}

pub fn assemble_stokes(mesh: &CoupledMesh, velocity: &ScalarSpace, pressure: &ScalarSpace, params: &PhysicalParams) -> StokesForms {
    let m = velocity.ndofs();
    let np = pressure.ndofs();
    let rule = TriangleRule::for_degree(2 * velocity.family().degree() + 2);
    let nu = params.nu;
    let mut a = TripletBuilder::new(2 * m, 2 * m);
    let mut div = TripletBuilder::new(np, 2 * m);
    let mut mass = TripletBuilder::new(np, np);
    for (c, &t) in velocity.cells().iter().enumerate() {
        let vd = velocity.cell_dofs(c);
        let pc = pressure.cell_of(t).expect("pressure and velocity share cells");
        let pd = pressure.cell_dofs(pc);
        let nv = vd.len();
        let mut ka = vec![0.0; 4 * nv * nv];
        let mut kb = vec![0.0; pd.len() * 2 * nv];
        let mut km = vec![0.0; pd.len() * pd.len()];
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let su = velocity.eval(c, x);
            let sp = pressure.eval(pc, x);
            for i in 0..nv {
                let gi = su.grad[i];
                for j in 0..nv {
                    let gj = su.grad[j];
                    let gg = gi[0] * gj[0] + gi[1] * gj[1];
                    for ci in 0..2 {
                        for dj in 0..2 {
                            let mut v = gi[dj] * gj[ci];
                            if ci == dj {
                                v += gg;
                            }
                            ka[(ci * nv + i) * 2 * nv + dj * nv + j] += w * nu * v;
                        }
                    }
                }
            }
            for q in 0..pd.len() {
                for j in 0..nv {
                    for dj in 0..2 {
                        kb[q * 2 * nv + dj * nv + j] += w * su.grad[j][dj] * sp.val[q];
                    }
                }
                for r in 0..pd.len() {
                    km[q * pd.len() + r] += w * sp.val[q] * sp.val[r];
                }
            }
        }
        let gdof = |k: usize| (k / nv) * m + vd[k % nv];
        for i in 0..2 * nv {
            for j in 0..2 * nv {
                a.push(gdof(i), gdof(j), ka[i * 2 * nv + j]);
            }
        }
        for q in 0..pd.len() {
            for j in 0..2 * nv {
                div.push(pd[q], gdof(j), kb[q * 2 * nv + j]);
            }
            for r in 0..pd.len() {
                mass.push(pd[q], pd[r], km[q * pd.len() + r]);
            }
        }
    }
    // slip term: the tangential component is the x component on the interface
    for ie in mesh.interface_trace() {
        let c = velocity.cell_of(ie.stokes_tri).unwrap();
        let vd = velocity.cell_dofs(c);
        let [pa, pb] = [mesh.vertices()[ie.left], mesh.vertices()[ie.right]];
        let tang = [-ie.normal[1], ie.normal[0]];
        for (x, w) in segment_quadrature(pa, pb, INTERFACE_POINTS) {
            let s = velocity.eval(c, x);
            for (i, &gi) in vd.iter().enumerate() {
                for (j, &gj) in vd.iter().enumerate() {
                    let v = params.kappa * w * s.val[i] * s.val[j];
                    for ci in 0..2 {
                        for cj in 0..2 {
                            let tt = tang[ci] * tang[cj];
                            if tt != 0.0 {
                                a.push(ci * m + gi, cj * m + gj, v * tt);
                            }
                        }
                    }
                }
            }
        }
    }
    StokesForms {
        a: a.build(),
        div: div.build(),
        pressure_mass: mass.build(),
    }
}

/// Darcy blocks over the full flux space.
#[derive(Clone, Debug)]
pub struct DarcyForms {
    /// `tau (u, v)`
    pub a: CsrMatrix,
    /// `(div u, div v)`
    pub divdiv: CsrMatrix,
    /// `(div v, q)`, pressure rows
    pub div: CsrMatrix,
    pub pressure_mass: CsrMatrix,
}

pub fn assemble_darcy(mesh: &CoupledMesh, flux: &FluxSpace, pressure: &ScalarSpace, params: &PhysicalParams) -> DarcyForms {
    let nf = flux.ndofs();
    let nq = pressure.ndofs();
    let rule = TriangleRule::for_degree(2 * flux.family().degree() + 2);
    let mut a = TripletBuilder::new(nf, nf);
    let mut dd = TripletBuilder::new(nf, nf);
    let mut div = TripletBuilder::new(nq, nf);
    let mut mass = TripletBuilder::new(nq, nq);
    for (c, &t) in flux.cells().iter().enumerate() {
        let fd = flux.cell_dofs(c);
        let pc = pressure.cell_of(t).unwrap();
        let pd = pressure.cell_dofs(pc);
        let (nl, npl) = (fd.len(), pd.len());
        let mut ka = vec![0.0; nl * nl];
        let mut kd = vec![0.0; nl * nl];
        let mut kb = vec![0.0; npl * nl];
        let mut km = vec![0.0; npl * npl];
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let s = flux.eval(c, x);
            let sp = pressure.eval(pc, x);
            for i in 0..nl {
                for j in 0..nl {
                    ka[i * nl + j] += w * (s.val[i][0] * s.val[j][0] + s.val[i][1] * s.val[j][1]);
                    kd[i * nl + j] += w * s.div[i] * s.div[j];
                }
            }
            for q in 0..npl {
                for j in 0..nl {
                    kb[q * nl + j] += w * sp.val[q] * s.div[j];
                }
                for r in 0..npl {
                    km[q * npl + r] += w * sp.val[q] * sp.val[r];
                }
            }
        }
        for i in 0..nl {
            for j in 0..nl {
                a.push(fd[i], fd[j], params.tau * ka[i * nl + j]);
                dd.push(fd[i], fd[j], kd[i * nl + j]);
            }
        }
        for q in 0..npl {
            for j in 0..nl {
                div.push(pd[q], fd[j], kb[q * nl + j]);
            }
            for r in 0..npl {
                mass.push(pd[q], pd[r], km[q * npl + r]);
            }
        }
    }
    DarcyForms {
        a: a.build(),
        divdiv: dd.build(),
        div: div.build(),
        pressure_mass: mass.build(),
    }
}

/// Coupling matrices on the interface.
#[derive(Clone, Debug)]
pub struct InterfaceForms {
    /// mass matrix of the Darcy trace space
    pub mass: CsrMatrix,
    /// `<u_S . n, mu>` for trace basis `mu` (rows) and Stokes velocity dofs
    pub stokes_trace: CsrMatrix,
    /// flux dofs to trace coefficients (a selection)
    pub darcy_trace: CsrMatrix,
    /// L2 projection of the Stokes normal trace onto the Darcy trace space
    pub projection: CsrMatrix,
}

pub fn assemble_interface(mesh: &CoupledMesh, spaces: &Spaces) -> InterfaceForms {
    let velocity = &spaces.velocity;
    let m = velocity.ndofs();
    let trace = &spaces.trace;
    let nt = trace.dim();
    let mut mass = TripletBuilder::new(nt, nt);
    let mut st = TripletBuilder::new(nt, 2 * m);
    let mut dt = TripletBuilder::new(nt, spaces.flux.ndofs());
    let mut proj = TripletBuilder::new(nt, 2 * m);
    for (k, ie) in trace.edges().iter().enumerate() {
        let c = velocity.cell_of(ie.stokes_tri).unwrap();
        let vd = velocity.cell_dofs(c);
        let [pa, pb] = [mesh.vertices()[ie.left], mesh.vertices()[ie.right]];
        let mut qe = [[0.0; 2]; 2];
        let mut te = vec![[0.0; 2]; 2 * vd.len()];
        for (x, w) in segment_quadrature(pa, pb, INTERFACE_POINTS) {
            let s = (x[0] - pa[0]) / (pb[0] - pa[0]);
            let mu = [1.0 - s, s];
            let sh = velocity.eval(c, x);
            for a in 0..2 {
                for b in 0..2 {
                    qe[a][b] += w * mu[a] * mu[b];
                }
                for (i, _) in vd.iter().enumerate() {
                    for comp in 0..2 {
                        te[comp * vd.len() + i][a] += w * sh.val[i] * ie.normal[comp] * mu[a];
                    }
                }
            }
        }
        let det = qe[0][0] * qe[1][1] - qe[0][1] * qe[1][0];
        let qinv = [
            [qe[1][1] / det, -qe[0][1] / det],
            [-qe[1][0] / det, qe[0][0] / det],
        ];
        for a in 0..2 {
            for b in 0..2 {
                mass.push(2 * k + a, 2 * k + b, qe[a][b]);
            }
            dt.push(2 * k + a, trace.flux_dofs(k)[a], 1.0);
        }
        for (l, col) in te.iter().enumerate() {
            let g = (l / vd.len()) * m + vd[l % vd.len()];
            if col[0] == 0.0 && col[1] == 0.0 {
                continue;
            }
            for a in 0..2 {
                st.push(2 * k + a, g, col[a]);
                proj.push(2 * k + a, g, qinv[a][0] * col[0] + qinv[a][1] * col[1]);
            }
        }
    }
    InterfaceForms {
        mass: mass.build(),
        stokes_trace: st.build(),
        darcy_trace: dt.build(),
        projection: proj.build(),
    }
}

/// Right-hand sides over the full spaces.
#[derive(Clone, Debug)]
pub struct Loads {
    /// `(f_S, v) + <g, v>` on the interface, full vector velocity numbering
    pub stokes: Vec<f64>,
    /// `(f_D, q)`
    pub darcy: Vec<f64>,
    /// `int f_D` over the Darcy region
    pub darcy_source_integral: f64,
}

pub fn assemble_loads(
    mesh: &CoupledMesh,
    spaces: &Spaces,
    case: &dyn ExactSolution,
    params: &PhysicalParams,
) -> Result<Loads> {
    let velocity = &spaces.velocity;
    let m = velocity.ndofs();
    let rule = TriangleRule::for_degree(LOAD_DEGREE);
    let mut stokes = vec![0.0; 2 * m];
    for (c, &t) in velocity.cells().iter().enumerate() {
        let vd = velocity.cell_dofs(c);
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let f = case.stokes_source(x, params);
            let s = velocity.eval(c, x);
            for (i, &g) in vd.iter().enumerate() {
                stokes[g] += w * f[0] * s.val[i];
                stokes[m + g] += w * f[1] * s.val[i];
            }
        }
    }
    for ie in mesh.interface_trace() {
        let c = velocity.cell_of(ie.stokes_tri).unwrap();
        let vd = velocity.cell_dofs(c);
        let [pa, pb] = [mesh.vertices()[ie.left], mesh.vertices()[ie.right]];
        for (x, w) in segment_quadrature(pa, pb, INTERFACE_POINTS) {
            let g = case.interface_residual(x, params);
            let s = velocity.eval(c, x);
            for (i, &d) in vd.iter().enumerate() {
                stokes[d] += w * g[0] * s.val[i];
                stokes[m + d] += w * g[1] * s.val[i];
            }
        }
    }
    let pressure = &spaces.darcy_pressure;
    let mut darcy = vec![0.0; pressure.ndofs()];
    let mut total = 0.0;
    for (c, &t) in pressure.cells().iter().enumerate() {
        let pd = pressure.cell_dofs(c);
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let f = case.darcy_source(x, params);
            total += w * f;
            let s = pressure.eval(c, x);
            for (i, &g) in pd.iter().enumerate() {
                darcy[g] += w * f * s.val[i];
            }
        }
    }
    if total.abs() > 1e-10 {
        return Err(Error::InvalidCase(format!(
            "Darcy source has nonzero mean: integral = {total:e}"
        )));
    }
    Ok(Loads {
        stokes,
        darcy,
        darcy_source_integral: total,
    })
}

/// A fully assembled discretization of one benchmark instance together with
/// the blocks restricted to the constrained spaces.
pub struct CoupledSystem {
    pub spaces: Spaces,
    pub params: PhysicalParams,
    pub stokes: StokesForms,
    pub darcy: DarcyForms,
    pub interface: InterfaceForms,
    pub loads: Loads,
    /// velocity dofs not fixed by the no-slip condition
    pub velocity_free: Vec<usize>,
    /// flux dofs with zero normal trace on the whole Darcy boundary
    pub flux_interior: Vec<usize>,
    /// flux dofs on the interface, indexed like trace coefficients
    pub flux_sigma: Vec<usize>,
    /// velocity block on free dofs
    pub a_s: CsrMatrix,
    /// `-(div v, q)` on free velocity dofs
    pub b_s: CsrMatrix,
    /// interface projection on free velocity dofs
    pub r: CsrMatrix,
    /// Stokes load on free velocity dofs
    pub f_s: Vec<f64>,
}

impl CoupledSystem {
    pub fn new(pair: ElementPair, n: usize, params: PhysicalParams, case: &dyn ExactSolution) -> Result<Self> {
        params.validate()?;
        let spaces = Spaces::new(pair, n)?;
        Self::from_spaces(spaces, params, case)
    }

    pub fn from_spaces(spaces: Spaces, params: PhysicalParams, case: &dyn ExactSolution) -> Result<Self> {
        let mesh = spaces.mesh();
        let stokes = assemble_stokes(mesh, &spaces.velocity, &spaces.pressure, &params);
        let darcy = assemble_darcy(mesh, &spaces.flux, &spaces.darcy_pressure, &params);
        let interface = assemble_interface(mesh, &spaces);
        let loads = assemble_loads(mesh, &spaces, case, &params)?;
        let velocity_free = spaces.free_velocity_dofs();
        let flux_interior = spaces.flux.dofs_of_class(FluxDofClass::Interior);
        let flux_sigma: Vec<usize> = (0..spaces.trace.edges().len())
            .flat_map(|k| spaces.trace.flux_dofs(k))
            .collect();
        let a_s = stokes.a.submatrix(&velocity_free, &velocity_free);
        let all_p: Vec<usize> = (0..spaces.pressure.ndofs()).collect();
        let b_s = stokes.div.submatrix(&all_p, &velocity_free).scaled(-1.0);
        let all_t: Vec<usize> = (0..spaces.trace.dim()).collect();
        let r = interface.projection.submatrix(&all_t, &velocity_free);
        let f_s = velocity_free.iter().map(|&i| loads.stokes[i]).collect();
        Ok(Self {
            spaces,
            params,
            stokes,
            darcy,
            interface,
            loads,
            velocity_free,
            flux_interior,
            flux_sigma,
            a_s,
            b_s,
            r,
            f_s,
        })
    }

    pub fn mesh(&self) -> &CoupledMesh {
        self.spaces.mesh()
    }

    pub fn n_velocity(&self) -> usize {
        self.velocity_free.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.spaces.pressure.ndofs()
    }

    /// Expands a free-dof velocity vector to the full numbering.
    pub fn expand_velocity(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.spaces.velocity_dofs()];
        for (k, &i) in self.velocity_free.iter().enumerate() {
            full[i] = u[k];
        }
        full
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn([f64; 2]) -> f64, grad: [f64; 2], x: [f64; 2]) {
        let h = 1e-6;
        for d in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += h;
            xm[d] -= h;
            let fd = (f(xp) - f(xm)) / (2.0 * h);
            assert!(
                (fd - grad[d]).abs() <= 1e-6 * (1.0 + grad[d].abs()),
                "d={d} at {x:?}: fd {fd} vs {}",
                grad[d]
            );
        }
    }

    fn sample_points() -> Vec<[f64; 2]> {
        (0..20)
            .map(|k| {
                let t = (k as f64 + 0.5) / 20.0;
                [t, 0.5 + 0.45 * (3.7 * t).sin().abs()]
            })
            .collect()
    }

    #[test]
    fn derivatives_agree_with_finite_differences() {
        let case = TrigonometricCase;
        let p = PhysicalParams::default();
        for x in sample_points() {
            let g = case.stokes_velocity_grad(x);
            for c in 0..2 {
                fd_check(|y| case.stokes_velocity(y)[c], g[c], x);
            }
            let xd = [x[0], 1.0 - x[1]];
            fd_check(|y| case.darcy_pressure(y), case.darcy_pressure_grad(xd), xd);
            // source from second differences of the closed-form gradients
            let h = 1e-6;
            let mut lap = [0.0; 2];
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let (gp, gm) = (case.stokes_velocity_grad(xp), case.stokes_velocity_grad(xm));
                for c in 0..2 {
                    lap[c] += (gp[c][d] - gm[c][d]) / (2.0 * h);
                }
            }
            let mut gp = [0.0; 2];
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                gp[d] = (case.stokes_pressure(xp) - case.stokes_pressure(xm)) / (2.0 * h);
            }
            let f = case.stokes_source(x, &p);
            for c in 0..2 {
                let fd = -lap[c] + gp[c];
                assert!((fd - f[c]).abs() <= 1e-6 * (1.0 + f[c].abs()), "{fd} vs {}", f[c]);
            }
            let mut lp = 0.0;
            for d in 0..2 {
                let mut xp = xd;
                let mut xm = xd;
                xp[d] += h;
                xm[d] -= h;
                lp += (case.darcy_pressure_grad(xp)[d] - case.darcy_pressure_grad(xm)[d]) / (2.0 * h);
            }
            let l = case.darcy_pressure_laplacian(xd);
            assert!((lp - l).abs() <= 1e-6 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn normal_velocities_match_on_interface() {
        let case = TrigonometricCase;
        let p = PhysicalParams::default();
        for k in 0..20 {
            let x = [(k as f64 + 0.5) / 20.0, 0.5];
            let us = case.stokes_velocity(x);
            let ud = case.darcy_velocity(x, &p);
            let n = INTERFACE_NORMAL;
            let expect = 6.0 * PI * (2.0 * PI * x[0]).sin().powi(2) * (2.0 * PI * x[0]).cos();
            let a = us[0] * n[0] + us[1] * n[1];
            let b = ud[0] * n[0] + ud[1] * n[1];
            assert!((a - expect).abs() < 1e-12 && (b - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn stokes_velocity_vanishes_on_outer_boundary() {
        let case = TrigonometricCase;
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            for x in [[0.0, 0.5 + t / 2.0], [1.0, 0.5 + t / 2.0], [t, 1.0]] {
                let u = case.stokes_velocity(x);
                assert!(u[0].abs() < 1e-12 && u[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn darcy_source_has_zero_mean() {
        let spaces = Spaces::new(ElementPair::MiniBdm1, 8).unwrap();
        let l = assemble_loads(spaces.mesh(), &spaces, &TrigonometricCase, &PhysicalParams::default()).unwrap();
        assert!(l.darcy_source_integral.abs() < 1e-10);
    }

    #[test]
    fn zero_case_gives_zero_loads() {
        let spaces = Spaces::new(ElementPair::TaylorHoodRt1, 4).unwrap();
        let l = assemble_loads(spaces.mesh(), &spaces, &ZeroCase, &PhysicalParams::default()).unwrap();
        assert!(l.stokes.iter().chain(&l.darcy).all(|&v| v == 0.0));
    }

    struct ConstantSource;
    impl ExactSolution for ConstantSource {
        fn stokes_velocity(&self, _: [f64; 2]) -> [f64; 2] {
            [0.0; 2]
        }
        fn stokes_velocity_grad(&self, _: [f64; 2]) -> [[f64; 2]; 2] {
            [[0.0; 2]; 2]
        }
        fn stokes_pressure(&self, _: [f64; 2]) -> f64 {
            0.0
        }
        fn stokes_source(&self, _: [f64; 2], _: &PhysicalParams) -> [f64; 2] {
            [0.0; 2]
        }
        fn darcy_pressure(&self, _: [f64; 2]) -> f64 {
            0.0
        }
        fn darcy_pressure_grad(&self, _: [f64; 2]) -> [f64; 2] {
            [0.0; 2]
        }
        fn darcy_pressure_laplacian(&self, _: [f64; 2]) -> f64 {
            -1.0
        }
    }

    #[test]
    fn incompatible_source_is_rejected() {
        let spaces = Spaces::new(ElementPair::MiniBdm1, 4).unwrap();
        let r = assemble_loads(spaces.mesh(), &spaces, &ConstantSource, &PhysicalParams::default());
        assert!(matches!(r, Err(Error::InvalidCase(_))));
    }

    #[test]
    fn stokes_velocity_block_is_symmetric_and_matches_shear_energy() {
        let params = PhysicalParams::default();
        for pair in ElementPair::ALL {
            let sp = Spaces::new(pair, 8).unwrap();
            let f = assemble_stokes(sp.mesh(), &sp.velocity, &sp.pressure, &params);
            assert!(f.a.max_asymmetry() <= 1e-13);
            // u = (y - 1/2, 0) is interpolated exactly; its slip term vanishes
            let u1 = sp.velocity.interpolate(|x| x[1] - 0.5);
            let mut u = vec![0.0; 2 * u1.len()];
            u[..u1.len()].copy_from_slice(&u1);
            let au = f.a.mul_vec(&u);
            let e: f64 = au.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!((e - 0.5).abs() < 1e-12, "{pair}: {e}");
        }
    }

    #[test]
    fn constrained_stokes_block_is_positive_definite() {
        let sys = CoupledSystem::new(ElementPair::MiniBdm1, 4, PhysicalParams::default(), &ZeroCase).unwrap();
        let ev = sys.a_s.to_dense().self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        assert!(ev[0] > 1e-3, "{}", ev[0]);
    }

    #[test]
    fn darcy_blocks_have_expected_identities() {
        let params = PhysicalParams::default();
        for pair in [ElementPair::MiniBdm1, ElementPair::TaylorHoodRt1] {
            let sp = Spaces::new(pair, 8).unwrap();
            let mesh = sp.mesh();
            let f = assemble_darcy(mesh, &sp.flux, &sp.darcy_pressure, &params);
            assert!(f.a.max_asymmetry() <= 1e-14 && f.divdiv.max_asymmetry() <= 1e-12);
            let c = sp.flux.interpolate(mesh, |_| [0.0, 1.0]);
            let ac: f64 = f.a.mul_vec(&c).iter().zip(&c).map(|(a, b)| a * b).sum();
            assert!((ac - 0.5).abs() < 1e-13);
            // curl of a nodal function is divergence free
            let w = sp.flux.interpolate(mesh, |x| [-2.0 * x[1], 2.0 * x[0]]);
            let dw = f.divdiv.mul_vec(&w);
            assert!(dw.iter().all(|v| v.abs() < 1e-12));
            // divergence theorem on the homogeneous space
            let interior = sp.flux.dofs_of_class(FluxDofClass::Interior);
            let one = vec![1.0; sp.darcy_pressure.ndofs()];
            let bt = f.div.tr_mul_vec(&one);
            for &i in &interior {
                assert!(bt[i].abs() < 1e-13, "{}", bt[i]);
            }
        }
    }

    #[test]
    fn interface_projection_reproduces_linear_traces() {
        let sp = Spaces::new(ElementPair::MiniBdm1, 8).unwrap();
        let mesh = sp.mesh();
        let ifc = assemble_interface(mesh, &sp);
        let m = sp.velocity.ndofs();
        // constant normal trace 1: u = (0, -1)
        let mut u = vec![0.0; 2 * m];
        for v in &mut u[m..] {
            *v = -1.0;
        }
        let r = ifc.projection.mul_vec(&u);
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-13));
        // linear normal trace x(1-x) nodal interpolant is piecewise linear
        let u2 = sp.velocity.interpolate(|x| -x[0] * (1.0 - x[0]));
        u[m..].copy_from_slice(&u2);
        let r = ifc.projection.mul_vec(&u);
        for (k, ie) in sp.trace.edges().iter().enumerate() {
            let xl = mesh.vertices()[ie.left][0];
            let xr = mesh.vertices()[ie.right][0];
            assert!((r[2 * k] - xl * (1.0 - xl)).abs() < 1e-13);
            assert!((r[2 * k + 1] - xr * (1.0 - xr)).abs() < 1e-13);
        }
        assert!(ifc.mass.max_asymmetry() == 0.0);
    }
}
