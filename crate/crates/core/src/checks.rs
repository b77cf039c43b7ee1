//! Property probes on the assembled operators: flux-to-pressure symmetry,
//! H(div) structure, preconditioner definiteness, conditioning and inf-sup
//! sweeps.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{cell_quadrature, CoupledSystem, PhysicalParams, LOAD_DEGREE};
use crate::error::Result;
use crate::fespace::{ElementPair, FluxFamily, ScalarFamily, ScalarSpace, Spaces};
use crate::ftp::{CouplingOperator, DarcySubsolver, InnerMode};
use crate::krylov::{lanczos, symmetry_defect, FnOperator, LinearOperator};
use crate::mesh::{CoupledMesh, Subdomain};
use crate::precond::{
    build_direct_inverse, build_hx_precond, build_hx_transfers, mass_inverse, AuxSolver, MassMode, SymmetricGaussSeidel,
};
use crate::quadrature::{LineRule, TriangleRule};
use crate::solver::{build_stokes_precond, darcy_infsup, stokes_infsup, CoupledFields, OuterOperator, OuterPrecond};
use crate::sparse::{dot, norm2};

/// A measured quantity against a one-sided limit.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// true when `value <= limit` is required, false for `value >= limit`
    pub upper: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            upper: true,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            upper: false,
        }
    }

    pub fn passed(&self) -> bool {
        if !self.value.is_finite() {
            return false;
        }
        if self.upper {
            self.value <= self.limit
        } else {
            self.value >= self.limit
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let op = if self.upper { "<=" } else { ">=" };
        format!("{verdict} {}: {:.3e} {op} {:.1e}", self.name, self.value, self.limit)
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Smallest `<Ax, x> / (|Ax| |x|)` over random probes.
pub fn min_rayleigh(a: &dyn LinearOperator, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..probes {
        let x = random_vec(&mut rng, a.dim());
        let ax = a.apply_vec(&x);
        let scale = norm2(&ax) * norm2(&x);
        if scale > 0.0 {
            worst = worst.min(dot(&ax, &x) / scale);
        }
    }
    worst
}

/// Symmetry and semidefiniteness of the exact flux-to-pressure map.
pub fn ftp_probes(sys: &CoupledSystem, probes: usize, seed: u64) -> Result<[Check; 2]> {
    let sub = DarcySubsolver::new(sys, InnerMode::Exact)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt = sub.trace_dim();
    let mut asym: f64 = 0.0;
    let mut psd = f64::INFINITY;
    for _ in 0..probes {
        let phi = random_vec(&mut rng, nt);
        let psi = random_vec(&mut rng, nt);
        let fphi = sub.apply_ftp(&phi)?.functional;
        let fpsi = sub.apply_ftp(&psi)?.functional;
        let scale = norm2(&fphi) * norm2(&psi) + norm2(&fpsi) * norm2(&phi);
        asym = asym.max((dot(&fphi, &psi) - dot(&phi, &fpsi)).abs() / scale);
        psd = psd.min(dot(&fphi, &phi) / (norm2(&fphi) * norm2(&phi)));
    }
    Ok([
        Check::at_most("flux-to-pressure symmetry", asym, 1e-10),
        Check::at_least("flux-to-pressure semidefiniteness", psd, -1e-12),
    ])
}

/// Largest divergence of a discrete curl column, relative to the size of
/// the curl columns.
pub fn div_curl(sys: &CoupledSystem) -> Result<Check> {
    let fi = &sys.flux_interior;
    let dd = sys.darcy.divdiv.submatrix(fi, fi);
    let hdiv = sys.darcy.a.submatrix(fi, fi).add(1.0, &dd, 1.0);
    let t = build_hx_transfers(&sys.spaces.hierarchy, &sys.spaces.flux, fi, &hdiv, &dd, &sys.params)?;
    let all_p: Vec<usize> = (0..sys.spaces.darcy_pressure.ndofs()).collect();
    let div = sys.darcy.div.submatrix(&all_p, fi);
    let dc = div.matmul(&t.curl);
    let scale = div.max_abs() * t.curl.max_abs();
    Ok(Check::at_most("div of curl columns", dc.max_abs() / scale, 1e-12))
}

/// Largest jump of the normal component across interior Darcy edges for a
/// random flux field.
pub fn normal_jump(sys: &CoupledSystem, seed: u64) -> Check {
    let mesh = sys.mesh();
    let flux = &sys.spaces.flux;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = random_vec(&mut rng, flux.ndofs());
    let line = LineRule::gauss(4);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..flux.num_edges() {
        let e = flux.edge(k);
        let (t0, t1) = mesh.edge_triangles(e);
        let (Some(c0), Some(c1)) = (flux.cell_of(t0), t1.and_then(|t| flux.cell_of(t))) else {
            continue;
        };
        let [a, b] = flux.edge_vertices(k).map(|v| mesh.vertices()[v]);
        let n = flux.edge_normal(k);
        for &s in &line.points {
            let x = [(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]];
            let (v0, _) = flux.value(&coeffs, c0, x);
            let (v1, _) = flux.value(&coeffs, c1, x);
            let (n0, n1) = (v0[0] * n[0] + v0[1] * n[1], v1[0] * n[0] + v1[1] * n[1]);
            worst = worst.max((n0 - n1).abs());
            scale = scale.max(n0.abs());
        }
    }
    Check::at_most("normal jump across interior edges", worst / scale.max(1.0), 1e-12)
}

/// `(div I v - div v, q)` over the Darcy pressure basis for a cubic field,
/// relative to the size of `(div v, q)`.
pub fn commuting_interpolation(sys: &CoupledSystem) -> Check {
    let v = |x: [f64; 2]| [x[0].powi(3) + x[0] * x[1], x[0] * x[1] * x[1] - x[1].powi(3) + x[0] * x[0]];
    let div_v = |x: [f64; 2]| 3.0 * x[0] * x[0] + x[1] + 2.0 * x[0] * x[1] - 3.0 * x[1] * x[1];
    let mesh = sys.mesh();
    let sp = &sys.spaces;
    let interp = sp.flux.interpolate(mesh, v);
    let mut r = sys.darcy.div.mul_vec(&interp);
    let load = pressure_load(mesh, &sp.darcy_pressure, div_v);
    for (ri, li) in r.iter_mut().zip(&load) {
        *ri -= li;
    }
    let scale = load.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Check::at_most("commuting interpolation residual", worst / scale, 1e-12)
}

fn pressure_load(mesh: &CoupledMesh, space: &ScalarSpace, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let rule = TriangleRule::for_degree(LOAD_DEGREE);
    let mut out = vec![0.0; space.ndofs()];
    for (c, &t) in space.cells().iter().enumerate() {
        let dofs = space.cell_dofs(c);
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let s = space.eval(c, x);
            let fx = f(x);
            for (k, &d) in dofs.iter().enumerate() {
                out[d] += w * fx * s.val[k];
            }
        }
    }
    out
}

/// Distance of every local flux divergence from its L2 projection onto the
/// Darcy pressure space, relative to its norm.
pub fn divergence_inclusion(sys: &CoupledSystem) -> Check {
    let mesh = sys.mesh();
    let flux = &sys.spaces.flux;
    let pressure = &sys.spaces.darcy_pressure;
    let rule = TriangleRule::for_degree(LOAD_DEGREE);
    let mut worst: f64 = 0.0;
    for (c, &t) in flux.cells().iter().enumerate() {
        let cp = pressure.cell_of(t).expect("Darcy cell carries pressure");
        let pts = cell_quadrature(mesh, t, &rule);
        let nq = pressure.cell_dofs(cp).len();
        let nf = flux.cell_dofs(c).len();
        let mut mass = Mat::<f64>::zeros(nq, nq);
        let mut rhs = Mat::<f64>::zeros(nq, nf);
        let mut norms = vec![0.0; nf];
        for &(x, w) in &pts {
            let q = pressure.eval(cp, x);
            let f = flux.eval(c, x);
            for a in 0..nq {
                for b in 0..nq {
                    mass[(a, b)] += w * q.val[a] * q.val[b];
                }
                for i in 0..nf {
                    rhs[(a, i)] += w * q.val[a] * f.div[i];
                }
            }
            for i in 0..nf {
                norms[i] += w * f.div[i] * f.div[i];
            }
        }
        let coef = mass.partial_piv_lu().inverse() * &rhs;
        let mut res = vec![0.0; nf];
        for &(x, w) in &pts {
            let q = pressure.eval(cp, x);
            let f = flux.eval(c, x);
            for i in 0..nf {
                let proj: f64 = (0..nq).map(|a| coef[(a, i)] * q.val[a]).sum();
                res[i] += w * (f.div[i] - proj).powi(2);
            }
        }
        for i in 0..nf {
            if norms[i] > 0.0 {
                worst = worst.max((res[i] / norms[i]).sqrt());
            }
        }
    }
    Check::at_most("divergence projection residual", worst, 1e-12)
}

/// `M (u_D . n - R (u_S . n))` on the interface trace space.
pub fn mass_conservation(sys: &CoupledSystem, fields: &CoupledFields) -> Check {
    let itf = &sys.interface;
    let mut jump = itf.darcy_trace.mul_vec(&fields.flux);
    itf.projection.mul_vec_acc(-1.0, &fields.velocity, &mut jump);
    let r = itf.mass.mul_vec(&jump);
    let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Check::at_most("interface mass conservation", worst, 1e-10)
}

/// Symmetry and positivity probes of every preconditioner block.
pub fn preconditioner_probes(sys: &CoupledSystem, probes: usize, seed: u64) -> Result<Vec<Check>> {
    let fi = &sys.flux_interior;
    let dd = sys.darcy.divdiv.submatrix(fi, fi);
    let hdiv = sys.darcy.a.submatrix(fi, fi).add(1.0, &dd, 1.0);
    let hx = |mode| -> Result<Box<dyn LinearOperator>> {
        let t = build_hx_transfers(&sys.spaces.hierarchy, &sys.spaces.flux, fi, &hdiv, &dd, &sys.params)?;
        Ok(Box::new(build_hx_precond(t, mode, &sys.spaces.hierarchy)?))
    };
    let variants: Vec<(&str, Box<dyn LinearOperator>)> = vec![
        ("stokes direct", Box::new(build_stokes_precond(sys, OuterPrecond::Direct, MassMode::GaussSeidel)?)),
        ("stokes bpx", Box::new(build_stokes_precond(sys, OuterPrecond::Bpx, MassMode::GaussSeidel)?)),
        ("flux direct", Box::new(build_direct_inverse(&hdiv)?)),
        ("flux hx", hx(AuxSolver::Direct)?),
        ("flux hx-bpx", hx(AuxSolver::Bpx)?),
        ("stokes mass sweep", Box::new(SymmetricGaussSeidel::new(&sys.stokes.pressure_mass)?)),
        ("darcy mass", mass_inverse(&sys.darcy.pressure_mass, MassMode::GaussSeidel)?),
    ];
    let mut out = Vec::new();
    for (k, (name, p)) in variants.iter().enumerate() {
        let s = seed.wrapping_add(k as u64);
        out.push(Check::at_most(format!("{name} symmetry"), symmetry_defect(p.as_ref(), probes, s), 1e-10));
        out.push(Check::at_least(
            format!("{name} positivity"),
            min_rayleigh(p.as_ref(), probes, s),
            f64::MIN_POSITIVE,
        ));
    }
    Ok(out)
}

/// Every structural check on one system.
pub fn property_suite(sys: &CoupledSystem, probes: usize, seed: u64) -> Result<Vec<Check>> {
    let mut out = ftp_probes(sys, probes, seed)?.to_vec();
    out.push(div_curl(sys)?);
    out.push(normal_jump(sys, seed));
    out.push(commuting_interpolation(sys));
    out.push(divergence_inclusion(sys));
    out.extend(preconditioner_probes(sys, probes, seed)?);
    Ok(out)
}

/// Lanczos condition numbers of the preconditioned outer and inner systems.
#[derive(Clone, Copy, Debug)]
pub struct Conditioning {
    pub n: usize,
    /// outer saddle operator (exact coupling) with the direct velocity block
    pub outer_direct: f64,
    pub outer_bpx: f64,
    /// H(div) matrix with the auxiliary space preconditioner
    pub hdiv_hx: f64,
    pub hdiv_hx_bpx: f64,
}

/// `max |lambda| / min |lambda|` of `pinv * a` for nonsingular symmetric `a`,
/// from Lanczos on `a pinv a` in the `P` inner product.
pub fn indefinite_condition(a: &dyn LinearOperator, pinv: &dyn LinearOperator, steps: usize, seed: u64) -> Result<f64> {
    let sq = FnOperator::new(a.dim(), |x: &[f64], y: &mut [f64]| {
        let ax = a.apply_vec(x);
        let pax = pinv.apply_vec(&ax);
        a.apply(&pax, y);
    });
    Ok(lanczos(&sq, pinv, steps, seed)?.condition().sqrt())
}

pub fn conditioning(pair: ElementPair, n: usize, steps: usize, seed: u64) -> Result<Conditioning> {
    let sys = CoupledSystem::new(pair, n, PhysicalParams::default(), &crate::assembly::ZeroCase)?;
    let sub = DarcySubsolver::new(&sys, InnerMode::Exact)?;
    let op = OuterOperator {
        a_s: &sys.a_s,
        b_s: &sys.b_s,
        coupling: Some(CouplingOperator {
            projection: &sys.r,
            subsolver: &sub,
        }),
    };
    let pd = build_stokes_precond(&sys, OuterPrecond::Direct, MassMode::Exact)?;
    let pb = build_stokes_precond(&sys, OuterPrecond::Bpx, MassMode::Exact)?;
    let outer_direct = indefinite_condition(&op, &pd, steps, seed)?;
    let outer_bpx = indefinite_condition(&op, &pb, steps, seed)?;

    let fi = &sys.flux_interior;
    let dd = sys.darcy.divdiv.submatrix(fi, fi);
    let hdiv = sys.darcy.a.submatrix(fi, fi).add(1.0, &dd, 1.0);
    let hx_cond = |mode| -> Result<f64> {
        let t = build_hx_transfers(&sys.spaces.hierarchy, &sys.spaces.flux, fi, &hdiv, &dd, &sys.params)?;
        let p = build_hx_precond(t, mode, &sys.spaces.hierarchy)?;
        Ok(lanczos(&hdiv, &p, steps, seed)?.condition())
    };
    Ok(Conditioning {
        n,
        outer_direct,
        outer_bpx,
        hdiv_hx: hx_cond(AuxSolver::Direct)?,
        hdiv_hx_bpx: hx_cond(AuxSolver::Bpx)?,
    })
}

/// Discrete inf-sup constants of one pair over a list of mesh parameters.
#[derive(Clone, Debug)]
pub struct InfSupSweep {
    pub label: String,
    pub values: Vec<(usize, f64)>,
}

impl InfSupSweep {
    /// Smallest ratio between consecutive levels (finer over coarser).
    pub fn min_ratio(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1].1 / w[0].1)
            .fold(f64::INFINITY, f64::min)
    }

    /// First value over last value.
    pub fn decay(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(a), Some(b)) => a.1 / b.1,
            _ => f64::NAN,
        }
    }
}

/// Stokes constants of the three velocity/pressure pairs and Darcy constants
/// of the two flux families.
pub fn infsup_sweep(ns: &[usize]) -> Result<Vec<InfSupSweep>> {
    let params = PhysicalParams::default();
    let mut out = Vec::new();
    for pair in ElementPair::ALL {
        let mut values = Vec::new();
        for &n in ns {
            let sp = Spaces::new(pair, n)?;
            values.push((n, stokes_infsup(sp.mesh(), &sp.velocity, &sp.pressure, &params)?));
        }
        out.push(InfSupSweep {
            label: format!("stokes {}", pair.name()),
            values,
        });
    }
    for (family, pair) in [(FluxFamily::Bdm1, ElementPair::MiniBdm1), (FluxFamily::Rt1, ElementPair::TaylorHoodRt1)] {
        let mut values = Vec::new();
        for &n in ns {
            values.push((n, darcy_infsup(&Spaces::new(pair, n)?, &params)?));
        }
        out.push(InfSupSweep {
            label: format!("darcy {}", family.name()),
            values,
        });
    }
    Ok(out)
}

/// Equal-order continuous linear velocity and pressure: not inf-sup stable.
pub fn unstable_infsup(ns: &[usize]) -> Result<InfSupSweep> {
    let params = PhysicalParams::default();
    let mut values = Vec::new();
    for &n in ns {
        let mesh = CoupledMesh::unit_square(n)?;
        let v = ScalarSpace::new(&mesh, ScalarFamily::P1c, Subdomain::Stokes);
        let p = ScalarSpace::new(&mesh, ScalarFamily::P1c, Subdomain::Stokes);
        values.push((n, stokes_infsup(&mesh, &v, &p, &params)?));
    }
    Ok(InfSupSweep {
        label: "stokes p1-p1".into(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::TrigonometricCase;
    use crate::sparse::CsrMatrix;

    fn system(pair: ElementPair, n: usize) -> CoupledSystem {
        CoupledSystem::new(pair, n, PhysicalParams::default(), &TrigonometricCase).unwrap()
    }

    #[test]
    fn check_lines() {
        assert!(Check::at_most("a", 1.0, 2.0).passed());
        assert!(!Check::at_least("a", 1.0, 2.0).passed());
        assert!(!Check::at_most("a", f64::NAN, 2.0).passed());
        assert!(Check::at_most("x", 1e-14, 1e-12).line().starts_with("PASS x:"));
    }

    #[test]
    fn structural_checks_pass_at_n4() {
        for pair in [ElementPair::MiniBdm1, ElementPair::TaylorHoodRt1] {
            let sys = system(pair, 4);
            for c in [div_curl(&sys).unwrap(), commuting_interpolation(&sys), divergence_inclusion(&sys), normal_jump(&sys, 1)] {
                assert!(c.passed(), "{pair}: {}", c.line());
            }
        }
    }

    #[test]
    fn indefinite_condition_of_a_diagonal() {
        let a = CsrMatrix::from_diagonal(&[-4.0, -1.0, 0.5, 2.0, 8.0]);
        let id = crate::krylov::Identity(5);
        let k = indefinite_condition(&a, &id, 5, 3).unwrap();
        assert!((k - 16.0).abs() < 1e-8, "{k}");
    }
}
