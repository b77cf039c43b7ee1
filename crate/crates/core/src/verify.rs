//! Error norms against the manufactured solution, experimental rates and
//! table output.

use std::fmt::Write as _;

use crate::assembly::{cell_quadrature, CoupledSystem, ExactSolution, LOAD_DEGREE};
use crate::quadrature::TriangleRule;
use crate::solver::{CoupledFields, SolveReport};

/// Errors of one discrete solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRecord {
    pub n: usize,
    pub h: f64,
    pub dofs: usize,
    /// H1 norm on the Stokes region
    pub u_s: f64,
    /// L2 norm on the Stokes region
    pub p_s: f64,
    /// H(div) norm on the Darcy region
    pub u_d: f64,
    /// L2 norm on the Darcy region
    pub p_d: f64,
}

impl ErrorRecord {
    pub fn values(&self) -> [f64; 4] {
        [self.u_s, self.p_s, self.u_d, self.p_d]
    }
}

pub fn compute_errors(sys: &CoupledSystem, fields: &CoupledFields, case: &dyn ExactSolution) -> ErrorRecord {
    let mesh = sys.mesh();
    let sp = &sys.spaces;
    let rule = TriangleRule::for_degree(LOAD_DEGREE);
    let params = &sys.params;
    let m = sp.velocity.ndofs();

    let mut e_u = 0.0;
    for (c, &t) in sp.velocity.cells().iter().enumerate() {
        let dofs = sp.velocity.cell_dofs(c);
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let s = sp.velocity.eval(c, x);
            let u = case.stokes_velocity(x);
            let g = case.stokes_velocity_grad(x);
            for comp in 0..2 {
                let mut v = 0.0;
                let mut gv = [0.0; 2];
                for (k, &d) in dofs.iter().enumerate() {
                    let coef = fields.velocity[comp * m + d];
                    v += coef * s.val[k];
                    gv[0] += coef * s.grad[k][0];
                    gv[1] += coef * s.grad[k][1];
                }
                e_u += w * ((u[comp] - v).powi(2) + (g[comp][0] - gv[0]).powi(2) + (g[comp][1] - gv[1]).powi(2));
            }
        }
    }

    let mut e_ps = 0.0;
    for (c, &t) in sp.pressure.cells().iter().enumerate() {
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let ph = sp.pressure.value(&fields.stokes_pressure, c, x);
            e_ps += w * (case.stokes_pressure(x) - ph).powi(2);
        }
    }

    let mut e_ud = 0.0;
    for (c, &t) in sp.flux.cells().iter().enumerate() {
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let (v, div) = sp.flux.value(&fields.flux, c, x);
            let u = case.darcy_velocity(x, params);
            let f = case.darcy_source(x, params);
            e_ud += w * ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (f - div).powi(2));
        }
    }

    let mut e_pd = 0.0;
    for (c, &t) in sp.darcy_pressure.cells().iter().enumerate() {
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let ph = sp.darcy_pressure.value(&fields.darcy_pressure, c, x);
            e_pd += w * (case.darcy_pressure(x) - ph).powi(2);
        }
    }

    ErrorRecord {
        n: sp.n(),
        h: mesh.h(),
        dofs: sp.total_dofs(),
        u_s: e_u.sqrt(),
        p_s: e_ps.sqrt(),
        u_d: e_ud.sqrt(),
        p_d: e_pd.sqrt(),
    }
}

/// Relative L2 distance of `a` from `b` in each field (Stokes velocity,
/// Stokes pressure, Darcy flux, Darcy pressure).
pub fn relative_differences(sys: &CoupledSystem, a: &CoupledFields, b: &CoupledFields) -> [f64; 4] {
    let mesh = sys.mesh();
    let sp = &sys.spaces;
    let rule = TriangleRule::for_degree(LOAD_DEGREE);
    let m = sp.velocity.ndofs();
    let mut diff = [0.0; 4];
    let mut norm = [0.0; 4];
    let mut acc = |k: usize, w: f64, x: f64, y: f64| {
        diff[k] += w * (x - y).powi(2);
        norm[k] += w * y * y;
    };
    for (c, &t) in sp.velocity.cells().iter().enumerate() {
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            for comp in 0..2 {
                let va = sp.velocity.value(&a.velocity[comp * m..(comp + 1) * m], c, x);
                let vb = sp.velocity.value(&b.velocity[comp * m..(comp + 1) * m], c, x);
                acc(0, w, va, vb);
            }
        }
    }
    for (c, &t) in sp.pressure.cells().iter().enumerate() {
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            acc(1, w, sp.pressure.value(&a.stokes_pressure, c, x), sp.pressure.value(&b.stokes_pressure, c, x));
        }
    }
    for (c, &t) in sp.flux.cells().iter().enumerate() {
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let (va, _) = sp.flux.value(&a.flux, c, x);
            let (vb, _) = sp.flux.value(&b.flux, c, x);
            acc(2, w, va[0], vb[0]);
            acc(2, w, va[1], vb[1]);
        }
    }
    for (c, &t) in sp.darcy_pressure.cells().iter().enumerate() {
        for (x, w) in cell_quadrature(mesh, t, &rule) {
            let pa = sp.darcy_pressure.value(&a.darcy_pressure, c, x);
            let pb = sp.darcy_pressure.value(&b.darcy_pressure, c, x);
            acc(3, w, pa, pb);
        }
    }
    std::array::from_fn(|k| if norm[k] > 0.0 { (diff[k] / norm[k]).sqrt() } else { diff[k].sqrt() })
}

/// Copy of `fields` with the non-nodal (bubble) velocity coefficients set to
/// zero, leaving the piecewise linear part of a MINI velocity.
pub fn without_bubbles(sys: &CoupledSystem, fields: &CoupledFields) -> CoupledFields {
    let v = &sys.spaces.velocity;
    let m = v.ndofs();
    let mut out = fields.clone();
    for d in (0..m).filter(|&d| !v.is_nodal(d)) {
        out.velocity[d] = 0.0;
        out.velocity[m + d] = 0.0;
    }
    out
}

/// `log(e / e') / log(h / h')`; `None` when either error vanishes.
pub fn rate(e: f64, e_next: f64, h: f64, h_next: f64) -> Option<f64> {
    if e <= 0.0 || e_next <= 0.0 || h == h_next {
        return None;
    }
    Some((e / e_next).ln() / (h / h_next).ln())
}

/// Rates between consecutive records; the first entry is `None`.
pub fn compute_rates(records: &[ErrorRecord]) -> Vec<Option<[Option<f64>; 4]>> {
    let mut out = vec![None; records.len()];
    for k in 1..records.len() {
        let (a, b) = (&records[k - 1], &records[k]);
        let (ea, eb) = (a.values(), b.values());
        out[k] = Some(std::array::from_fn(|i| rate(ea[i], eb[i], a.h, b.h)));
    }
    out
}

/// C-style `%.3e`: three decimals, signed exponent with at least two digits.
pub fn sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.3e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    let sign = if e < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", e.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Markdown,
}

impl Format {
    pub fn parse(s: &str) -> crate::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(crate::Error::InvalidArgument(format!("unknown format '{other}'"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

fn h_label(n: usize) -> String {
    format!("1/{n}")
}

/// Nested against monolithic solve at one mesh; `None` marks a failed solve.
#[derive(Clone, Debug)]
pub struct OracleRow {
    pub n: usize,
    pub dofs: usize,
    pub differences: Option<[f64; 4]>,
    pub outer: usize,
}

const ORACLE_HEADER: [&str; 7] = ["DOF", "h", "d(u_S)", "d(p_S)", "d(u_D)", "d(p_D)", "outer"];

pub fn oracle_table(rows: &[OracleRow], format: Format, title: &str) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.dofs.to_string(), h_label(r.n)];
            match r.differences {
                Some(d) => line.extend(d.iter().map(|v| sci(*v))),
                None => line.extend((0..4).map(|_| FAILURE_MARKER.to_string())),
            }
            line.push(r.outer.to_string());
            line
        })
        .collect();
    render(&ORACLE_HEADER.map(String::from), &cells, format, title, false)
}

/// One row of a convergence table; `None` marks a failed solve.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dofs: usize,
    pub record: Option<ErrorRecord>,
}

const CONVERGENCE_HEADER: [&str; 10] = ["DOF", "h", "e(u_S)", "r(u_S)", "e(p_S)", "r(p_S)", "e(u_D)", "r(u_D)", "e(p_D)", "r(p_D)"];

pub const FAILURE_MARKER: &str = "FAILED";

pub fn convergence_table(rows: &[ConvergenceRow], format: Format, title: &str) -> String {
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut prev: Option<ErrorRecord> = None;
    for row in rows {
        let mut line = vec![row.dofs.to_string(), h_label(row.n)];
        match &row.record {
            Some(rec) => {
                let rates = prev.map(|p| {
                    let (ep, ec) = (p.values(), rec.values());
                    std::array::from_fn::<_, 4, _>(|i| rate(ep[i], ec[i], p.h, rec.h))
                });
                for (i, e) in rec.values().iter().enumerate() {
                    line.push(sci(*e));
                    line.push(match rates {
                        Some(r) => r[i].map(|v| format!("{v:.2}")).unwrap_or_default(),
                        None => String::new(),
                    });
                }
                prev = Some(*rec);
            }
            None => {
                line.extend((0..8).map(|_| FAILURE_MARKER.to_string()));
                prev = None;
            }
        }
        cells.push(line);
    }
    render(&CONVERGENCE_HEADER.map(String::from), &cells, format, title, false)
}

/// One cell of an iteration table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationCell {
    pub outer: usize,
    pub inner: usize,
    pub converged: bool,
}

impl IterationCell {
    pub fn from_report(r: &SolveReport) -> Self {
        Self {
            outer: r.outer_iterations(),
            inner: r.mean_inner(),
            converged: r.converged(),
        }
    }

    pub fn label(&self) -> String {
        if self.converged {
            format!("{}({})", self.outer, self.inner)
        } else {
            format!("{FAILURE_MARKER} {}({})", self.outer, self.inner)
        }
    }
}

#[derive(Clone, Debug)]
pub struct IterationRow {
    pub n: usize,
    pub dofs: usize,
    /// `None` for a solve that returned an error
    pub cells: Vec<Option<IterationCell>>,
}

pub fn iteration_table(rows: &[IterationRow], combos: &[String], format: Format, title: &str) -> String {
    let mut header = vec!["DOF".to_string(), "h".to_string()];
    header.extend(combos.iter().cloned());
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.dofs.to_string(), h_label(r.n)];
            line.extend(
                r.cells
                    .iter()
                    .map(|c| c.map(|c| c.label()).unwrap_or_else(|| FAILURE_MARKER.to_string())),
            );
            line
        })
        .collect();
    render(&header, &cells, format, title, true)
}

fn render(header: &[String], rows: &[Vec<String>], format: Format, title: &str, quote_data: bool) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            let _ = writeln!(out, "{}", header.iter().map(|h| csv_field(h, false)).collect::<Vec<_>>().join(","));
            for row in rows {
                let line: Vec<String> = row
                    .iter()
                    .enumerate()
                    .map(|(i, c)| csv_field(c, quote_data && i >= 2))
                    .collect();
                let _ = writeln!(out, "{}", line.join(","));
            }
        }
        Format::Markdown => {
            if !title.is_empty() {
                let _ = writeln!(out, "### {title}\n");
            }
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for row in rows {
                let shown: Vec<&str> = row.iter().map(|c| if c.is_empty() { "-" } else { c.as_str() }).collect();
                let _ = writeln!(out, "| {} |", shown.join(" | "));
            }
        }
    }
    out
}

fn csv_field(s: &str, quote: bool) -> String {
    if quote || s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
