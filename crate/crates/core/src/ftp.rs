//! The discrete flux-to-pressure map: Darcy solves with prescribed normal
//! flux on the interface, the resulting pressure functional, and the
//! matrix-free coupling operator on the Stokes velocity space.

use std::cell::{Cell, RefCell};

use crate::assembly::CoupledSystem;
use crate::error::{Error, Result};
use crate::krylov::{minres, LinearOperator, MinresOptions, StopRule};
use crate::precond::{
    build_direct_inverse, build_hx_precond, build_hx_transfers, mass_inverse, AuxSolver, BlockDiagonal, MassMode,
};
use crate::sparse::{dot, CsrMatrix, SparseLu, TripletBuilder};

/// Preconditioner for the flux block of the inner Darcy system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InnerPrecond {
    /// exact inverse of the H(div) matrix
    Direct,
    /// auxiliary space preconditioner with exact auxiliary solves
    Hx,
    /// auxiliary space preconditioner with BPX auxiliary solves
    HxBpx,
}

impl InnerPrecond {
    pub const ALL: [InnerPrecond; 3] = [InnerPrecond::Direct, InnerPrecond::Hx, InnerPrecond::HxBpx];

    pub fn name(self) -> &'static str {
        match self {
            InnerPrecond::Direct => "direct",
            InnerPrecond::Hx => "hx",
            InnerPrecond::HxBpx => "hx-bpx",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(InnerPrecond::Direct),
            "hx" | "hx-direct" => Ok(InnerPrecond::Hx),
            "hx-bpx" | "bpx" => Ok(InnerPrecond::HxBpx),
            other => Err(Error::InvalidArgument(format!("unknown inner preconditioner '{other}'"))),
        }
    }
}

/// How the inner Darcy saddle systems are solved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerMode {
    /// sparse LU of the system bordered by the pressure mean constraint
    Exact,
    Iterative {
        precond: InnerPrecond,
        rtol: f64,
        max_iter: usize,
        stop: StopRule,
        mass: MassMode,
    },
}

impl InnerMode {
    pub fn iterative(precond: InnerPrecond, rtol: f64) -> Self {
        InnerMode::Iterative {
            precond,
            rtol,
            max_iter: 1000,
            stop: StopRule::Preconditioned,
            mass: MassMode::GaussSeidel,
        }
    }
}

enum Backend {
    Exact(SparseLu),
    Iterative {
        matrix: CsrMatrix,
        precond: BlockDiagonal,
        opts: MinresOptions,
    },
}

/// Darcy fields on the constrained spaces.
#[derive(Clone, Debug)]
pub struct DarcyFields {
    /// flux coefficients on the dofs with zero normal trace
    pub flux_interior: Vec<f64>,
    /// pressure coefficients, zero mean
    pub pressure: Vec<f64>,
}

/// Result of one flux-to-pressure application.
#[derive(Clone, Debug)]
pub struct FtpResult {
    /// the pressure functional tested with every interface flux basis field
    pub functional: Vec<f64>,
    pub fields: DarcyFields,
    pub iterations: usize,
}

/// Inner solver for the Darcy problem with the interface flux lifted to the
/// right-hand side. Factorizations and preconditioners are built once.
pub struct DarcySubsolver {
    a_ii: CsrMatrix,
    a_is: CsrMatrix,
    a_ss: CsrMatrix,
    /// `(div v, q)` for interior flux dofs
    div_i: CsrMatrix,
    /// `(div v, q)` for interface flux dofs (trace order)
    div_s: CsrMatrix,
    /// `M 1`, the pressure mass applied to the constant
    mass_ones: Vec<f64>,
    measure: f64,
    backend: Backend,
    solves: Cell<usize>,
    iterations: Cell<usize>,
    failure: RefCell<Option<Error>>,
}

impl DarcySubsolver {
    pub fn new(sys: &CoupledSystem, mode: InnerMode) -> Result<Self> {
        let d = &sys.darcy;
        let fi = &sys.flux_interior;
        let fs = &sys.flux_sigma;
        let np = sys.spaces.darcy_pressure.ndofs();
        let all_p: Vec<usize> = (0..np).collect();
        let a_ii = d.a.submatrix(fi, fi);
        let a_is = d.a.submatrix(fi, fs);
        let a_ss = d.a.submatrix(fs, fs);
        let div_i = d.div.submatrix(&all_p, fi);
        let div_s = d.div.submatrix(&all_p, fs);
        let mass_ones = d.pressure_mass.mul_vec(&vec![1.0; np]);
        let measure: f64 = mass_ones.iter().sum();
        let ni = fi.len();
        let neg_div = div_i.scaled(-1.0);
        let backend = match mode {
            InnerMode::Exact => {
                let mut t = TripletBuilder::new(ni + np + 1, ni + np + 1);
                for (i, j, v) in a_ii.triplets() {
                    t.push(i, j, v);
                }
                for (q, j, v) in neg_div.triplets() {
                    t.push(ni + q, j, v);
                    t.push(j, ni + q, v);
                }
                for (q, &m) in mass_ones.iter().enumerate() {
                    t.push(ni + q, ni + np, m);
                    t.push(ni + np, ni + q, m);
                }
                Backend::Exact(SparseLu::new(&t.build())?)
            }
            InnerMode::Iterative {
                precond,
                rtol,
                max_iter,
                stop,
                mass,
            } => {
                let dd = d.divdiv.submatrix(fi, fi);
                let hdiv = a_ii.add(1.0, &dd, 1.0);
                let flux_block: Box<dyn LinearOperator> = match precond {
                    InnerPrecond::Direct => Box::new(build_direct_inverse(&hdiv)?),
                    InnerPrecond::Hx | InnerPrecond::HxBpx => {
                        let t = build_hx_transfers(&sys.spaces.hierarchy, &sys.spaces.flux, fi, &hdiv, &dd, &sys.params)?;
                        let aux = if precond == InnerPrecond::Hx {
                            AuxSolver::Direct
                        } else {
                            AuxSolver::Bpx
                        };
                        Box::new(build_hx_precond(t, aux, &sys.spaces.hierarchy)?)
                    }
                };
                let mass_block = mass_inverse(&d.pressure_mass, mass)?;
                Backend::Iterative {
                    matrix: crate::sparse::saddle_matrix(&a_ii, &neg_div, None),
                    precond: BlockDiagonal::new(vec![flux_block, mass_block]),
                    opts: MinresOptions { rtol, max_iter, stop },
                }
            }
        };
        Ok(Self {
            a_ii,
            a_is,
            a_ss,
            div_i,
            div_s,
            mass_ones,
            measure,
            backend,
            solves: Cell::new(0),
            iterations: Cell::new(0),
            failure: RefCell::new(None),
        })
    }

    /// Number of interface flux dofs.
    pub fn trace_dim(&self) -> usize {
        self.a_ss.nrows()
    }

    pub fn n_flux_interior(&self) -> usize {
        self.a_ii.nrows()
    }

    pub fn n_pressure(&self) -> usize {
        self.mass_ones.len()
    }

    /// Inner solves performed so far.
    pub fn solves(&self) -> usize {
        self.solves.get()
    }

    /// Total inner MINRES iterations so far (zero in exact mode).
    pub fn iterations(&self) -> usize {
        self.iterations.get()
    }

    pub fn reset_counters(&self) {
        self.solves.set(0);
        self.iterations.set(0);
    }

    /// The first inner failure since the last call, if any.
    pub fn take_failure(&self) -> Option<Error> {
        self.failure.borrow_mut().take()
    }

    /// Removes the part of a pressure right-hand side that is not orthogonal
    /// to constants.
    fn project_range(&self, g: &mut [f64]) {
        let c = g.iter().sum::<f64>() / self.measure;
        for (gi, m) in g.iter_mut().zip(&self.mass_ones) {
            *gi -= c * m;
        }
    }

    fn zero_mean(&self, p: &mut [f64]) {
        let c = dot(p, &self.mass_ones) / self.measure;
        p.iter_mut().for_each(|v| *v -= c);
    }

    /// Solves `A u - div^T p = r`, `-div u = g` on the homogeneous spaces.
    fn solve(&self, r: &[f64], g: &[f64], rtol: Option<f64>) -> Result<(DarcyFields, usize)> {
        let ni = self.a_ii.nrows();
        let np = self.mass_ones.len();
        self.solves.set(self.solves.get() + 1);
        let (mut x, its) = match &self.backend {
            Backend::Exact(lu) => {
                let mut b = Vec::with_capacity(ni + np + 1);
                b.extend_from_slice(r);
                b.extend_from_slice(g);
                b.push(0.0);
                lu.solve_in_place(&mut b);
                b.truncate(ni + np);
                (b, 0)
            }
            Backend::Iterative { matrix, precond, opts } => {
                let mut b = Vec::with_capacity(ni + np);
                b.extend_from_slice(r);
                b.extend_from_slice(g);
                self.project_range(&mut b[ni..]);
                let mut x = vec![0.0; ni + np];
                let opts = MinresOptions {
                    rtol: rtol.unwrap_or(opts.rtol),
                    ..*opts
                };
                let stats = minres(matrix, precond, &b, &mut x, &opts)?;
                self.iterations.set(self.iterations.get() + stats.iterations);
                if !stats.converged {
                    return Err(Error::SolverFailure {
                        solver: "inner MINRES",
                        iterations: stats.iterations,
                        residual: stats.relative_residual(),
                    });
                }
                (x, stats.iterations)
            }
        };
        let pressure = x.split_off(ni);
        let mut fields = DarcyFields {
            flux_interior: x,
            pressure,
        };
        self.zero_mean(&mut fields.pressure);
        Ok((fields, its))
    }

    /// `A_SI u + A_SS phi - div_S^T p` on the interface flux dofs.
    fn functional(&self, fields: &DarcyFields, phi: &[f64]) -> Vec<f64> {
        let mut f = self.a_is.tr_mul_vec(&fields.flux_interior);
        self.a_ss.mul_vec_acc(1.0, phi, &mut f);
        self.div_s.tr_mul_vec_acc(-1.0, &fields.pressure, &mut f);
        f
    }

    /// Darcy solve with normal flux `phi` on the interface (trace-ordered
    /// coefficients) and source load `source` (`(f_D, q)` per pressure basis
    /// function); returns the pressure functional on the interface. `rtol`
    /// overrides the configured inner tolerance.
    pub fn solve_with(&self, phi: &[f64], source: Option<&[f64]>, rtol: Option<f64>) -> Result<FtpResult> {
        assert_eq!(phi.len(), self.trace_dim());
        let mut r = self.a_is.mul_vec(phi);
        r.iter_mut().for_each(|v| *v = -*v);
        let mut g = self.div_s.mul_vec(phi);
        if let Some(f) = source {
            for (gi, fi) in g.iter_mut().zip(f) {
                *gi -= fi;
            }
        }
        let (fields, iterations) = self.solve(&r, &g, rtol)?;
        let functional = self.functional(&fields, phi);
        Ok(FtpResult {
            functional,
            fields,
            iterations,
        })
    }

    /// The flux-to-pressure map for interface flux `phi`.
    pub fn apply_ftp(&self, phi: &[f64]) -> Result<FtpResult> {
        self.solve_with(phi, None, None)
    }

    /// Darcy fields and pressure functional due to the source alone.
    pub fn source_residual(&self, source: &[f64], rtol: Option<f64>) -> Result<FtpResult> {
        let total: f64 = source.iter().sum();
        if total.abs() > 1e-10 {
            return Err(Error::InvalidCase(format!(
                "Darcy source has nonzero mean: integral = {total:e}"
            )));
        }
        self.solve_with(&vec![0.0; self.trace_dim()], Some(source), rtol)
    }

    /// Residual of `-div u = -f` for full Darcy fields; used in checks.
    pub fn divergence_residual(&self, fields: &DarcyFields, phi: &[f64], source: &[f64]) -> Vec<f64> {
        let mut d = self.div_i.mul_vec(&fields.flux_interior);
        self.div_s.mul_vec_acc(1.0, phi, &mut d);
        for (di, fi) in d.iter_mut().zip(source) {
            *di -= fi;
        }
        d
    }
}

/// The coupling operator `u -> R^T FtP(R u)` on free Stokes velocity dofs.
pub struct CouplingOperator<'a> {
    pub projection: &'a CsrMatrix,
    pub subsolver: &'a DarcySubsolver,
}

impl CouplingOperator<'_> {
    pub fn try_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let phi = self.projection.mul_vec(u);
        let res = self.subsolver.apply_ftp(&phi)?;
        Ok(self.projection.tr_mul_vec(&res.functional))
    }
}

impl LinearOperator for CouplingOperator<'_> {
    fn dim(&self) -> usize {
        self.projection.ncols()
    }

    /// Inner failures are recorded on the subsolver and the output is zero.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self.try_apply(x) {
            Ok(v) => y.copy_from_slice(&v),
            Err(e) => {
                let mut f = self.subsolver.failure.borrow_mut();
                if f.is_none() {
                    *f = Some(e);
                }
                y.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{PhysicalParams, TrigonometricCase};
    use crate::fespace::ElementPair;

    fn system(pair: ElementPair, n: usize) -> CoupledSystem {
        CoupledSystem::new(pair, n, PhysicalParams::default(), &TrigonometricCase).unwrap()
    }

    #[test]
    fn zero_flux_gives_zero_functional() {
        let sys = system(ElementPair::MiniBdm1, 4);
        let sub = DarcySubsolver::new(&sys, InnerMode::Exact).unwrap();
        let r = sub.apply_ftp(&vec![0.0; sub.trace_dim()]).unwrap();
        assert!(r.functional.iter().all(|v| v.abs() < 1e-14));
        assert!(r.fields.pressure.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(sub.solves(), 1);
    }

    #[test]
    fn iterative_matches_exact() {
        let sys = system(ElementPair::TaylorHoodRt1, 4);
        let exact = DarcySubsolver::new(&sys, InnerMode::Exact).unwrap();
        let phi: Vec<f64> = (0..exact.trace_dim()).map(|i| (i as f64 * 0.7).sin()).collect();
        let a = exact.apply_ftp(&phi).unwrap();
        for p in InnerPrecond::ALL {
            let it = DarcySubsolver::new(&sys, InnerMode::iterative(p, 1e-12)).unwrap();
            let b = it.apply_ftp(&phi).unwrap();
            let scale = a.functional.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in a.functional.iter().zip(&b.functional) {
                assert!((x - y).abs() < 1e-8 * scale, "{p:?}: {x} vs {y}");
            }
            assert!(b.iterations > 0);
        }
    }

    #[test]
    fn incompatible_source_is_rejected() {
        let sys = system(ElementPair::MiniBdm1, 4);
        let sub = DarcySubsolver::new(&sys, InnerMode::Exact).unwrap();
        let ones = sys.darcy.pressure_mass.mul_vec(&vec![1.0; sub.n_pressure()]);
        assert!(matches!(sub.source_residual(&ones, None), Err(Error::InvalidCase(_))));
    }
}
