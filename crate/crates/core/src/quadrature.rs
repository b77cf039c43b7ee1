//! Gauss rules on the unit interval and on triangles.
//!
//! Triangle rules are collapsed (Duffy) products of Gauss-Legendre rules. They
//! are not symmetric, but every point lies strictly inside the triangle and a
//! rule built for degree `d` integrates every polynomial of total degree `d`
//! exactly.

use std::f64::consts::PI;

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    /// `npts`-point rule, exact for polynomials of degree `2 npts - 1`.
    pub fn gauss(npts: usize) -> Self {
        assert!(npts > 0, "a Gauss rule needs at least one point");
        let mut points = Vec::with_capacity(npts);
        let mut weights = Vec::with_capacity(npts);
        for i in 0..npts {
            // Tricomi's initial guess, refined by Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (npts as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(npts, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(npts, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points.push(0.5 * (1.0 - x));
            weights.push(0.5 * w);
        }
        Self { points, weights }
    }

    /// Smallest Gauss rule exact for the given degree.
    pub fn for_degree(degree: usize) -> Self {
        Self::gauss(degree / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Quadrature on a triangle in barycentric coordinates. Weights sum to one, so
/// integrals are `area * sum(w_q f(x_q))`.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub bary: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    degree: usize,
}

impl TriangleRule {
    pub fn for_degree(degree: usize) -> Self {
        // the collapse adds one power of (1 - s)
        let m = (degree + 3) / 2;
        let line = LineRule::gauss(m);
        let mut bary = Vec::with_capacity(m * m);
        let mut weights = Vec::with_capacity(m * m);
        for (&s, &ws) in line.points.iter().zip(&line.weights) {
            for (&t, &wt) in line.points.iter().zip(&line.weights) {
                let xi = s;
                let eta = t * (1.0 - s);
                bary.push([1.0 - xi - eta, xi, eta]);
                // reference area 1/2, Jacobian (1 - s): normalized by the area
                weights.push(2.0 * ws * wt * (1.0 - s));
            }
        }
        Self {
            bary,
            weights,
            degree,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}
