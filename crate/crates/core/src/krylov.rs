//! Preconditioned MINRES and a Lanczos estimator for extreme eigenvalues.

use std::time::{Duration, Instant};

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix};

/// A linear map `y = A x` on `R^n`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y);
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Largest relative asymmetry `|<Ax,y> - <x,Ay>|` over random probes,
/// scaled by `|Ax| |y|`.
pub fn symmetry_defect(a: &dyn LinearOperator, probes: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = a.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ax = a.apply_vec(&x);
        let ay = a.apply_vec(&y);
        let scale = norm2(&ax) * norm2(&y) + norm2(&ay) * norm2(&x);
        if scale > 0.0 {
            worst = worst.max((dot(&ax, &y) - dot(&x, &ay)).abs() / scale);
        }
    }
    worst
}

/// Which residual the stopping test measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StopRule {
    /// `|r|_{P^-1} <= rtol |r0|_{P^-1}`
    #[default]
    Preconditioned,
    /// `|r|_2 <= rtol |b|_2`
    Euclidean,
    /// both `|r|_{P^-1} <= rtol |b|_2` and `|r|_2 <= rtol |b|_2`
    Mixed,
}

impl StopRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "preconditioned" | "precond" => Ok(StopRule::Preconditioned),
            "euclidean" | "l2" => Ok(StopRule::Euclidean),
            "mixed" => Ok(StopRule::Mixed),
            other => Err(Error::InvalidArgument(format!("unknown stopping rule '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MinresOptions {
    pub rtol: f64,
    pub max_iter: usize,
    pub stop: StopRule,
}

impl Default for MinresOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            max_iter: 1000,
            stop: StopRule::Preconditioned,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    /// relative residual (in the norm of the stopping rule) after each iteration,
    /// starting with the initial one
    pub history: Vec<f64>,
    /// preconditioned residual norm estimate relative to its initial value
    pub preconditioned_residual: f64,
    /// Euclidean residual norm relative to `|b|`
    pub euclidean_residual: f64,
    pub elapsed: Duration,
}

impl SolveStats {
    pub fn relative_residual(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }
}

/// Preconditioned MINRES for a symmetric `a` and an SPD preconditioner
/// `pinv` (applied as the inverse). `x` holds the initial guess on entry.
pub fn minres(
    a: &dyn LinearOperator,
    pinv: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    opts: &MinresOptions,
) -> Result<SolveStats> {
    let start = Instant::now();
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let bnorm = norm2(b);

    // r1 = b - A x0
    let mut r1 = a.apply_vec(x);
    for i in 0..n {
        r1[i] = b[i] - r1[i];
    }
    let mut res = r1.clone();
    let mut y = pinv.apply_vec(&r1);
    let beta1sq = dot(&r1, &y);
    if beta1sq < 0.0 {
        return Err(Error::IndefinitePreconditioner(beta1sq));
    }
    let beta1 = beta1sq.sqrt();
    let euclid = |r: &[f64]| if bnorm > 0.0 { norm2(r) / bnorm } else { norm2(r) };
    let mut stats = SolveStats {
        preconditioned_residual: 1.0,
        euclidean_residual: euclid(&res),
        ..Default::default()
    };
    let bscale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let initial = match opts.stop {
        StopRule::Preconditioned => 1.0,
        StopRule::Euclidean => stats.euclidean_residual,
        StopRule::Mixed => stats.euclidean_residual.max(beta1 / bscale),
    };
    stats.history.push(if beta1 == 0.0 { 0.0 } else { initial });
    if beta1 == 0.0 || (opts.stop != StopRule::Preconditioned && initial <= opts.rtol) {
        if beta1 == 0.0 {
            stats.preconditioned_residual = 0.0;
        }
        stats.converged = true;
        stats.elapsed = start.elapsed();
        return Ok(stats);
    }

    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    // A w, A w2 for the Euclidean residual recurrence
    let mut aw = vec![0.0; n];
    let mut aw2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];

    for itn in 1..=opts.max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        a.apply(&v, &mut av);
        y.copy_from_slice(&av);
        if itn >= 2 {
            let f = beta / oldb;
            for i in 0..n {
                y[i] -= f * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for i in 0..n {
            y[i] -= f * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        pinv.apply(&r2, &mut y);
        oldb = beta;
        let bsq = dot(&r2, &y);
        if bsq < 0.0 {
            return Err(Error::IndefinitePreconditioner(bsq));
        }
        beta = bsq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            let aw1 = aw2[i];
            aw2[i] = aw[i];
            aw[i] = (av[i] - oldeps * aw1 - delta * aw2[i]) * denom;
            x[i] += phi * w[i];
            res[i] -= phi * aw[i];
        }

        stats.iterations = itn;
        stats.preconditioned_residual = phibar / beta1;
        stats.euclidean_residual = euclid(&res);
        let current = match opts.stop {
            StopRule::Preconditioned => stats.preconditioned_residual,
            StopRule::Euclidean => stats.euclidean_residual,
            StopRule::Mixed => stats.euclidean_residual.max(phibar / bscale),
        };
        stats.history.push(current);
        if current <= opts.rtol || beta == 0.0 {
            stats.converged = true;
            break;
        }
    }
    stats.elapsed = start.elapsed();
    Ok(stats)
}

/// Ritz values from a Lanczos run on `pinv * a` in the `P` inner product.
#[derive(Clone, Debug)]
pub struct RitzValues {
    pub values: Vec<f64>,
    pub steps: usize,
}

impl RitzValues {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_abs(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// `max / min` for a positive spectrum.
    pub fn condition(&self) -> f64 {
        self.max() / self.min()
    }
}

/// Lanczos with full reorthogonalization for the generalized eigenvalues of
/// `a x = lambda P x`, where `pinv` applies `P^-1`. Runs at most `steps`
/// iterations (fewer on breakdown).
pub fn lanczos(a: &dyn LinearOperator, pinv: &dyn LinearOperator, steps: usize, seed: u64) -> Result<RitzValues> {
    use rand::{Rng, SeedableRng};
    let n = a.dim();
    let steps = steps.min(n).max(1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // u_j: P-side basis, z_j = P^-1 u_j; biorthonormal u_i . z_j = delta_ij
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut zs: Vec<Vec<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut z = pinv.apply_vec(&r);
    let mut beta = dot(&r, &z);
    if beta <= 0.0 {
        return Err(Error::IndefinitePreconditioner(beta));
    }
    beta = beta.sqrt();
    let mut scale = 0.0f64;
    for j in 0..steps {
        let u: Vec<f64> = r.iter().map(|v| v / beta).collect();
        let zj: Vec<f64> = z.iter().map(|v| v / beta).collect();
        let mut w = a.apply_vec(&zj);
        let alpha = dot(&zj, &w);
        alphas.push(alpha);
        us.push(u);
        zs.push(zj);
        for _ in 0..2 {
            for (ui, zi) in us.iter().zip(&zs) {
                let c = dot(zi, &w);
                for k in 0..n {
                    w[k] -= c * ui[k];
                }
            }
        }
        z = pinv.apply_vec(&w);
        let bsq = dot(&w, &z);
        scale = scale.max(alpha.abs()).max(beta);
        if bsq < 0.0 && bsq.abs() > 1e-14 * scale * scale {
            return Err(Error::IndefinitePreconditioner(bsq));
        }
        if j + 1 == steps || bsq <= (1e-13 * scale).powi(2) {
            break;
        }
        beta = bsq.sqrt();
        betas.push(beta);
        r = w;
    }
    let m = alphas.len();
    let t = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i == j + 1 {
            betas[j]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let values = t
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Construction(format!("tridiagonal eigenvalues failed: {e:?}")))?;
    Ok(RitzValues { values, steps: m })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> CsrMatrix {
        CsrMatrix::from_diagonal(d)
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = Identity(4);
        let b = [1.0, -2.0, 3.0, 0.5];
        let mut x = vec![0.0; 4];
        let s = minres(&a, &Identity(4), &b, &mut x, &MinresOptions::default()).unwrap();
        assert!(s.converged);
        assert_eq!(s.iterations, 1);
        assert!(x.iter().zip(&b).all(|(x, b)| (x - b).abs() < 1e-14));
    }

    #[test]
    fn diagonal_system_terminates_within_dimension() {
        let a = diag(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = [1.0; 5];
        let mut x = vec![0.0; 5];
        let opts = MinresOptions {
            rtol: 1e-15,
            max_iter: 5,
            stop: StopRule::Euclidean,
        };
        let s = minres(&a, &Identity(5), &b, &mut x, &opts).unwrap();
        assert!(s.iterations <= 5);
        assert!(s.euclidean_residual <= 1e-14);
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / (i as f64 + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn indefinite_system_is_solved() {
        let a = diag(&[1.0, -1.0]);
        let mut x = vec![0.0; 2];
        let s = minres(&a, &Identity(2), &[1.0, 1.0], &mut x, &MinresOptions::default()).unwrap();
        assert!(s.converged);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_preconditioner_is_reported() {
        let a = diag(&[1.0, 2.0]);
        let p = diag(&[1.0, -3.0]);
        let mut x = vec![0.0; 2];
        let r = minres(&a, &p, &[0.1, 1.0], &mut x, &MinresOptions::default());
        assert!(matches!(r, Err(Error::IndefinitePreconditioner(_))));
    }

    #[test]
    fn lanczos_finds_extreme_eigenvalues() {
        let d: Vec<f64> = (1..=50).map(|k| k as f64).collect();
        let a = diag(&d);
        let r = lanczos(&a, &Identity(50), 50, 7).unwrap();
        assert!((r.min() - 1.0).abs() < 1e-8);
        assert!((r.max() - 50.0).abs() < 1e-8);
        // generalized problem with P = diag(d): all eigenvalues equal one
        let pinv = diag(&d.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
        let r = lanczos(&a, &pinv, 10, 7).unwrap();
        assert!((r.max() - 1.0).abs() < 1e-10 && (r.min() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn symmetry_probe_detects_asymmetry() {
        let sym = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 3.0]], 2);
        let asym = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![0.0, 3.0]], 2);
        assert!(symmetry_defect(&sym, 5, 1) < 1e-15);
        assert!(symmetry_defect(&asym, 5, 1) > 1e-3);
    }
}
