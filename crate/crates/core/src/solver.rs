//! The decoupled nested solve, the monolithic reference solve, and discrete
//! inf-sup estimates.

use std::fmt;
use std::time::{Duration, Instant};

use faer::{Mat, Par, Side};

use crate::assembly::{assemble_darcy, assemble_stokes, CoupledSystem, PhysicalParams};
use crate::error::{invalid, Error, Result};
use crate::fespace::{ElementPair, FluxDofClass, FluxSpace, ScalarSpace, Spaces};
use crate::ftp::{CouplingOperator, DarcyFields, DarcySubsolver, InnerMode, InnerPrecond};
use crate::krylov::{minres, LinearOperator, MinresOptions, SolveStats, StopRule};
use crate::precond::{
    build_bpx, build_direct_inverse, mass_inverse, nodal_hierarchy, vector_prolongation, BlockDiagonal, MassMode,
    NodalConstraint,
};
use crate::mesh::{CoupledMesh, Subdomain};
use crate::sparse::{Cholesky, CsrMatrix, SparseLu, TripletBuilder};

/// Treatment of the velocity block in the outer preconditioner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OuterPrecond {
    Direct,
    Bpx,
}

impl OuterPrecond {
    pub fn name(self) -> &'static str {
        match self {
            OuterPrecond::Direct => "direct",
            OuterPrecond::Bpx => "bpx",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(OuterPrecond::Direct),
            "bpx" => Ok(OuterPrecond::Bpx),
            other => Err(invalid(format!("unknown outer preconditioner '{other}'"))),
        }
    }
}

/// Outer and inner preconditioner choice, written `outer:inner`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Combo {
    pub outer: OuterPrecond,
    pub inner: InnerPrecond,
}

impl Combo {
    pub const fn new(outer: OuterPrecond, inner: InnerPrecond) -> Self {
        Self { outer, inner }
    }

    pub const ALL: [Combo; 6] = [
        Combo::new(OuterPrecond::Direct, InnerPrecond::Direct),
        Combo::new(OuterPrecond::Direct, InnerPrecond::Hx),
        Combo::new(OuterPrecond::Direct, InnerPrecond::HxBpx),
        Combo::new(OuterPrecond::Bpx, InnerPrecond::Direct),
        Combo::new(OuterPrecond::Bpx, InnerPrecond::Hx),
        Combo::new(OuterPrecond::Bpx, InnerPrecond::HxBpx),
    ];

    pub fn parse(s: &str) -> Result<Self> {
        let (o, i) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("combo '{s}' is not of the form outer:inner")))?;
        Ok(Self::new(OuterPrecond::parse(o)?, InnerPrecond::parse(i)?))
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.outer.name(), self.inner.name())
    }
}

impl Default for Combo {
    fn default() -> Self {
        Combo::ALL[0]
    }
}

/// Starting vector of the outer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InitialGuess {
    /// Stokes problem with the interface left free (no coupling term)
    #[default]
    Stokes,
    Zero,
}

#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub pair: ElementPair,
    pub n: usize,
    pub params: PhysicalParams,
    pub combo: Combo,
    pub outer_rtol: f64,
    pub inner_rtol: f64,
    pub max_iter: usize,
    pub inner_max_iter: usize,
    pub stop: StopRule,
    pub inner_stop: StopRule,
    pub mass: MassMode,
    /// factorize the inner Darcy systems instead of iterating
    pub exact_inner: bool,
    pub initial_guess: InitialGuess,
}

impl SolveConfig {
    pub fn new(pair: ElementPair, n: usize) -> Self {
        Self {
            pair,
            n,
            params: PhysicalParams::default(),
            combo: Combo::default(),
            outer_rtol: 1e-6,
            inner_rtol: 1e-2,
            max_iter: 2000,
            inner_max_iter: 1000,
            stop: StopRule::Euclidean,
            inner_stop: StopRule::Euclidean,
            mass: MassMode::GaussSeidel,
            exact_inner: false,
            initial_guess: InitialGuess::Stokes,
        }
    }

    pub fn with_combo(mut self, combo: Combo) -> Self {
        self.combo = combo;
        self
    }

    /// Tight tolerances for comparisons against the reference solve.
    pub fn tight(mut self) -> Self {
        self.outer_rtol = 1e-10;
        self.inner_rtol = 1e-12;
        self
    }

    pub fn inner_mode(&self) -> InnerMode {
        if self.exact_inner {
            InnerMode::Exact
        } else {
            InnerMode::Iterative {
                precond: self.combo.inner,
                rtol: self.inner_rtol,
                max_iter: self.inner_max_iter,
                stop: self.inner_stop,
                mass: self.mass,
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.pair.check_n(self.n)?;
        for (name, v) in [("outer", self.outer_rtol), ("inner", self.inner_rtol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} tolerance must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Discrete solution in the full numbering of each space.
#[derive(Clone, Debug)]
pub struct CoupledFields {
    /// Stokes velocity, component-major
    pub velocity: Vec<f64>,
    pub stokes_pressure: Vec<f64>,
    pub flux: Vec<f64>,
    pub darcy_pressure: Vec<f64>,
}

impl CoupledFields {
    /// Adds one constant to both pressures.
    pub fn shift_pressures(&mut self, c: f64) {
        self.stokes_pressure.iter_mut().for_each(|p| *p += c);
        self.darcy_pressure.iter_mut().for_each(|p| *p += c);
    }

    /// The constant that makes the pressure integrate to zero over the whole
    /// square.
    pub fn global_mean_shift(&self, sys: &CoupledSystem) -> f64 {
        let int_s: f64 = sys.stokes.pressure_mass.mul_vec(&self.stokes_pressure).iter().sum();
        let int_d: f64 = sys.darcy.pressure_mass.mul_vec(&self.darcy_pressure).iter().sum();
        -(int_s + int_d)
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub fields: CoupledFields,
    /// outer MINRES statistics
    pub outer: SolveStats,
    /// iterations of the initializing Stokes solve
    pub init_iterations: usize,
    /// coupling applications during the outer iteration
    pub inner_solves: usize,
    /// inner iterations during the outer iteration
    pub inner_iterations: usize,
    pub elapsed: Duration,
}

impl SolveReport {
    pub fn outer_iterations(&self) -> usize {
        self.outer.iterations
    }

    /// Mean inner iterations per coupling application, rounded.
    pub fn mean_inner(&self) -> usize {
        if self.inner_solves == 0 {
            0
        } else {
            (self.inner_iterations as f64 / self.inner_solves as f64).round() as usize
        }
    }

    pub fn converged(&self) -> bool {
        self.outer.converged
    }
}

/// `[A_S + C_S, B^T; B, 0]` with `C_S` applied through inner Darcy solves.
pub struct OuterOperator<'a> {
    pub a_s: &'a CsrMatrix,
    pub b_s: &'a CsrMatrix,
    pub coupling: Option<CouplingOperator<'a>>,
}

impl LinearOperator for OuterOperator<'_> {
    fn dim(&self) -> usize {
        self.a_s.nrows() + self.b_s.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nu = self.a_s.nrows();
        let (u, p) = x.split_at(nu);
        let (yu, yp) = y.split_at_mut(nu);
        if let Some(c) = &self.coupling {
            c.apply(u, yu);
        } else {
            yu.iter_mut().for_each(|v| *v = 0.0);
        }
        self.a_s.mul_vec_acc(1.0, u, yu);
        self.b_s.tr_mul_vec_acc(1.0, p, yu);
        self.b_s.mul_vec_into(u, yp);
    }
}

/// Prolongations between the free velocity spaces of the hierarchy, finest
/// first.
pub fn velocity_prolongations(spaces: &Spaces) -> Vec<CsrMatrix> {
    nodal_hierarchy(
        &spaces.hierarchy,
        spaces.pair.velocity_family(),
        Subdomain::Stokes,
        NodalConstraint::OuterBoundary,
    )
    .iter()
    .map(vector_prolongation)
    .collect()
}

/// Block-diagonal outer preconditioner: velocity block inverse and the
/// pressure mass treatment.
pub fn build_stokes_precond(sys: &CoupledSystem, outer: OuterPrecond, mass: MassMode) -> Result<BlockDiagonal> {
    let vel: Box<dyn LinearOperator> = match outer {
        OuterPrecond::Direct => Box::new(build_direct_inverse(&sys.a_s)?),
        OuterPrecond::Bpx => Box::new(build_bpx(&sys.a_s, &velocity_prolongations(&sys.spaces))?),
    };
    Ok(BlockDiagonal::new(vec![vel, mass_inverse(&sys.stokes.pressure_mass, mass)?]))
}

fn assemble_fields(sys: &CoupledSystem, u: &[f64], p: &[f64], phi: &[f64], darcy: &DarcyFields) -> CoupledFields {
    let mut flux = vec![0.0; sys.spaces.flux.ndofs()];
    for (k, &d) in sys.flux_interior.iter().enumerate() {
        flux[d] = darcy.flux_interior[k];
    }
    for (k, &d) in sys.flux_sigma.iter().enumerate() {
        flux[d] = phi[k];
    }
    CoupledFields {
        velocity: sys.expand_velocity(u),
        stokes_pressure: p.to_vec(),
        flux,
        darcy_pressure: darcy.pressure.clone(),
    }
}

/// Nested solve: outer MINRES on the Stokes system modified by the coupling
/// operator, inner MINRES (or factorization) for every Darcy solve.
pub fn solve_coupled(sys: &CoupledSystem, config: &SolveConfig) -> Result<SolveReport> {
    config.validate()?;
    let start = Instant::now();
    let sub = DarcySubsolver::new(sys, config.inner_mode())?;
    // the source and recovery solves are not coupling applications and use the
    // outer tolerance
    let source = sub.source_residual(&sys.loads.darcy, Some(config.outer_rtol))?;
    let mut rhs = sys.f_s.clone();
    sys.r.tr_mul_vec_acc(-1.0, &source.functional, &mut rhs);
    let nu = sys.n_velocity();
    rhs.resize(nu + sys.n_pressure(), 0.0);

    let pinv = build_stokes_precond(sys, config.combo.outer, config.mass)?;
    let opts = MinresOptions {
        rtol: config.outer_rtol,
        max_iter: config.max_iter,
        stop: config.stop,
    };
    // initial guess: Stokes problem with a free interface
    let stokes_only = OuterOperator {
        a_s: &sys.a_s,
        b_s: &sys.b_s,
        coupling: None,
    };
    let mut x = vec![0.0; rhs.len()];
    let init_iterations = match config.initial_guess {
        InitialGuess::Stokes => minres(&stokes_only, &pinv, &rhs, &mut x, &opts)?.iterations,
        InitialGuess::Zero => 0,
    };

    let op = OuterOperator {
        a_s: &sys.a_s,
        b_s: &sys.b_s,
        coupling: Some(CouplingOperator {
            projection: &sys.r,
            subsolver: &sub,
        }),
    };
    sub.reset_counters();
    let outer = minres(&op, &pinv, &rhs, &mut x, &opts)?;
    if let Some(e) = sub.take_failure() {
        return Err(e);
    }
    let (inner_solves, inner_iterations) = (sub.solves(), sub.iterations());

    let (u, p) = x.split_at(nu);
    let phi = sys.r.mul_vec(u);
    let lifted = sub.solve_with(&phi, None, Some(config.outer_rtol))?;
    let darcy = DarcyFields {
        flux_interior: add(&source.fields.flux_interior, &lifted.fields.flux_interior),
        pressure: add(&source.fields.pressure, &lifted.fields.pressure),
    };
    Ok(SolveReport {
        fields: assemble_fields(sys, u, p, &phi, &darcy),
        outer,
        init_iterations,
        inner_solves,
        inner_iterations,
        elapsed: start.elapsed(),
    })
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// The assembled coupled system with the interface flux dofs of the Darcy
/// field replaced by the projected Stokes normal trace, bordered by the
/// Darcy pressure mean constraint. Unknowns: free velocity, Stokes pressure,
/// interior flux, Darcy pressure, multiplier.
pub struct MonolithicSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub offsets: [usize; 5],
}

pub fn assemble_monolithic(sys: &CoupledSystem) -> MonolithicSystem {
    let nu = sys.n_velocity();
    let np = sys.n_pressure();
    let ni = sys.flux_interior.len();
    let nd = sys.spaces.darcy_pressure.ndofs();
    let offsets = [0, nu, nu + np, nu + np + ni, nu + np + ni + nd];
    let dim = offsets[4] + 1;
    let d = &sys.darcy;
    let (fi, fs) = (&sys.flux_interior, &sys.flux_sigma);
    let all_d: Vec<usize> = (0..nd).collect();
    let a_ii = d.a.submatrix(fi, fi);
    let a_is = d.a.submatrix(fi, fs);
    let a_ss = d.a.submatrix(fs, fs);
    let div_i = d.div.submatrix(&all_d, fi);
    let div_s = d.div.submatrix(&all_d, fs);
    let r = &sys.r;
    let rt = r.transpose();

    let uu = sys.a_s.add(1.0, &rt.matmul(&a_ss).matmul(r), 1.0);
    let iu = a_is.matmul(r);
    let du = div_s.matmul(r).scaled(-1.0);
    let mass_ones = d.pressure_mass.mul_vec(&vec![1.0; nd]);

    let mut t = TripletBuilder::new(dim, dim);
    let mut block = |m: &CsrMatrix, ro: usize, co: usize, sym: bool| {
        for (i, j, v) in m.triplets() {
            t.push(ro + i, co + j, v);
            if sym {
                t.push(co + j, ro + i, v);
            }
        }
    };
    block(&uu, offsets[0], offsets[0], false);
    block(&sys.b_s, offsets[1], offsets[0], true);
    block(&iu, offsets[2], offsets[0], true);
    block(&du, offsets[3], offsets[0], true);
    block(&a_ii, offsets[2], offsets[2], false);
    block(&div_i.scaled(-1.0), offsets[3], offsets[2], true);
    let border = CsrMatrix::from_dense(&[mass_ones], nd);
    block(&border, offsets[4], offsets[3], true);

    let mut rhs = vec![0.0; dim];
    rhs[..nu].copy_from_slice(&sys.f_s);
    for (k, f) in sys.loads.darcy.iter().enumerate() {
        rhs[offsets[3] + k] = -f;
    }
    MonolithicSystem {
        matrix: t.build(),
        rhs,
        offsets,
    }
}

/// Reference solution by one sparse LU factorization of the monolithic
/// system, normalized like the nested solve.
pub fn solve_monolithic(sys: &CoupledSystem) -> Result<CoupledFields> {
    let mono = assemble_monolithic(sys);
    let lu = SparseLu::new(&mono.matrix)?;
    let x = lu.solve(&mono.rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("monolithic system is singular".into()));
    }
    let o = mono.offsets;
    let u = &x[o[0]..o[1]];
    let phi = sys.r.mul_vec(u);
    let darcy = DarcyFields {
        flux_interior: x[o[2]..o[3]].to_vec(),
        pressure: x[o[3]..o[4]].to_vec(),
    };
    Ok(assemble_fields(sys, u, &x[o[1]..o[2]], &phi, &darcy))
}

/// Smallest positive eigenvalue square roots of `B A^-1 B^T x = beta^2 M x`.
#[derive(Clone, Copy, Debug)]
pub struct InfSup {
    pub stokes: f64,
    pub darcy: f64,
}

/// Dense generalized singular value: the square root of the smallest
/// eigenvalue of `B A^-1 B^T` relative to `M` above `zero_tol` times the
/// largest one.
pub fn discrete_infsup(a: &CsrMatrix, b: &CsrMatrix, m: &CsrMatrix, zero_tol: f64) -> Result<f64> {
    let np = b.nrows();
    let chol = Cholesky::new(a)?;
    let bt = b.transpose();
    let mut s = Mat::<f64>::zeros(np, np);
    for q in 0..np {
        let col: Vec<f64> = (0..bt.nrows()).map(|i| bt.get(i, q)).collect();
        let z = chol.solve(&col);
        let bz = b.mul_vec(&z);
        for (i, v) in bz.into_iter().enumerate() {
            s[(i, q)] = v;
        }
    }
    let llt = m
        .to_dense()
        .llt(Side::Lower)
        .map_err(|e| Error::Factorization(format!("mass matrix is not SPD: {e:?}")))?;
    let l = llt.L().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), s.as_mut(), Par::Seq);
    let mut s = s.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), s.as_mut(), Par::Seq);
    let c = Mat::<f64>::from_fn(np, np, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let ev = c
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Construction(format!("eigenvalue solver failed: {e:?}")))?;
    let top = ev.last().copied().unwrap_or(0.0);
    ev.into_iter()
        .find(|&v| v > zero_tol * top)
        .map(f64::sqrt)
        .ok_or_else(|| Error::Construction("divergence operator vanishes".into()))
}

/// Inf-sup constant of a Stokes pair with velocities vanishing on the whole
/// boundary of the subdomain (pressure modulo constants).
pub fn stokes_infsup(
    mesh: &CoupledMesh,
    velocity: &ScalarSpace,
    pressure: &ScalarSpace,
    params: &PhysicalParams,
) -> Result<f64> {
    let forms = assemble_stokes(mesh, velocity, pressure, params);
    let m = velocity.ndofs();
    let inner = velocity.interior_dofs();
    let dofs: Vec<usize> = (0..2).flat_map(|c| inner.iter().map(move |&i| c * m + i)).collect();
    let all_p: Vec<usize> = (0..pressure.ndofs()).collect();
    discrete_infsup(
        &forms.a.submatrix(&dofs, &dofs),
        &forms.div.submatrix(&all_p, &dofs),
        &forms.pressure_mass,
        1e-9,
    )
}

/// Inf-sup constant of the Darcy pair in the H(div) norm, fluxes with zero
/// normal trace on the whole boundary, pressure modulo constants.
pub fn darcy_infsup(spaces: &Spaces, params: &PhysicalParams) -> Result<f64> {
    let flux: &FluxSpace = &spaces.flux;
    let forms = assemble_darcy(spaces.mesh(), flux, &spaces.darcy_pressure, params);
    let dofs = flux.dofs_of_class(FluxDofClass::Interior);
    let all_p: Vec<usize> = (0..spaces.darcy_pressure.ndofs()).collect();
    let hdiv = forms.a.add(1.0, &forms.divdiv, 1.0);
    discrete_infsup(
        &hdiv.submatrix(&dofs, &dofs),
        &forms.div.submatrix(&all_p, &dofs),
        &forms.pressure_mass,
        1e-9,
    )
}

pub fn estimate_infsup(spaces: &Spaces, params: &PhysicalParams) -> Result<InfSup> {
    Ok(InfSup {
        stokes: stokes_infsup(spaces.mesh(), &spaces.velocity, &spaces.pressure, params)?,
        darcy: darcy_infsup(spaces, params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{TrigonometricCase, ZeroCase};

    #[test]
    fn combo_round_trip() {
        for c in Combo::ALL {
            assert_eq!(Combo::parse(&c.to_string()).unwrap(), c);
        }
        assert!(Combo::parse("direct").is_err());
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let sys = CoupledSystem::new(ElementPair::MiniBdm1, 4, PhysicalParams::default(), &ZeroCase).unwrap();
        let r = solve_coupled(&sys, &SolveConfig::new(ElementPair::MiniBdm1, 4)).unwrap();
        assert!(r.outer_iterations() <= 1);
        assert!(r.fields.velocity.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn monolithic_matrix_is_symmetric() {
        let sys =
            CoupledSystem::new(ElementPair::TaylorHoodRt1, 4, PhysicalParams::default(), &TrigonometricCase).unwrap();
        let m = assemble_monolithic(&sys);
        assert!(m.matrix.max_asymmetry() <= 1e-12 * m.matrix.max_abs());
    }
}
