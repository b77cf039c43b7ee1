//! Acceptance criteria against the published convergence and iteration
//! tables. Prints one PASS/FAIL line per criterion; set
//! SDCOUPLE_ACCEPTANCE_STRICT=1 to turn a FAIL into a nonzero exit code.

use std::collections::HashMap;
use std::time::Instant;

use sdcouple::assembly::{CoupledSystem, PhysicalParams, TrigonometricCase};
use sdcouple::checks::{self, Check};
use sdcouple::fespace::ElementPair;
use sdcouple::ftp::InnerPrecond;
use sdcouple::solver::{solve_coupled, solve_monolithic, Combo, OuterPrecond, SolveConfig};
use sdcouple::verify::{compute_errors, compute_rates, relative_differences, sci, without_bubbles, ErrorRecord, IterationCell};

const NS: [usize; 4] = [8, 16, 32, 64];

struct Reference {
    /// e(u_S), e(u_D), e(p_D) at h = 1/8 and 1/16
    errors: [[f64; 3]; 2],
    rate: f64,
    outer_direct: [usize; 4],
    inner_direct: usize,
    outer_bpx: Option<[usize; 4]>,
}

fn reference(pair: ElementPair) -> Reference {
    match pair {
        ElementPair::MiniBdm1 => Reference {
            errors: [[1.86e1, 4.73e1, 1.60e-1], [1.01e1, 2.48e1, 8.10e-2]],
            rate: 1.0,
            outer_direct: [26, 32, 40, 46],
            inner_direct: 4,
            outer_bpx: Some([56, 84, 121, 144]),
        },
        ElementPair::P2isoP1Bdm1 => Reference {
            errors: [[1.86e1, 4.73e1, 1.60e-1], [1.01e1, 2.48e1, 8.11e-2]],
            rate: 1.0,
            outer_direct: [24, 30, 36, 42],
            inner_direct: 4,
            outer_bpx: Some([50, 80, 107, 130]),
        },
        ElementPair::TaylorHoodRt1 => Reference {
            errors: [[4.09, 1.48e1, 5.23e-2], [9.56e-1, 4.03, 1.35e-2]],
            rate: 2.0,
            outer_direct: [28, 34, 38, 42],
            inner_direct: 5,
            outer_bpx: None,
        },
    }
}

struct PairRun {
    records: Vec<ErrorRecord>,
    /// MINI velocity error of the piecewise linear part, h = 1/8 and 1/16
    linear_part: Vec<f64>,
    cells: HashMap<(usize, Combo), Option<IterationCell>>,
    conservation: Option<Check>,
}

fn system(pair: ElementPair, n: usize) -> CoupledSystem {
    CoupledSystem::new(pair, n, PhysicalParams::default(), &TrigonometricCase).expect("assembly")
}

fn run_pair(pair: ElementPair) -> PairRun {
    let mut out = PairRun {
        records: Vec::new(),
        linear_part: Vec::new(),
        cells: HashMap::new(),
        conservation: None,
    };
    for n in NS {
        let t = Instant::now();
        let sys = system(pair, n);
        for combo in Combo::ALL {
            let report = solve_coupled(&sys, &SolveConfig::new(pair, n).with_combo(combo));
            if let Err(e) = &report {
                println!("  {pair} n={n} {combo}: {e}");
            }
            let report = report.ok();
            if combo == Combo::default() {
                if let Some(r) = &report {
                    out.records.push(compute_errors(&sys, &r.fields, &TrigonometricCase));
                    if n <= 16 {
                        let linear = without_bubbles(&sys, &r.fields);
                        out.linear_part.push(compute_errors(&sys, &linear, &TrigonometricCase).u_s);
                    }
                    if n == NS[0] {
                        out.conservation = Some(checks::mass_conservation(&sys, &r.fields));
                    }
                }
            }
            out.cells.insert((n, combo), report.as_ref().map(IterationCell::from_report));
        }
        println!("  {pair} n={n}: six combinations solved in {:.1?}", t.elapsed());
    }
    out
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn label(c: &Option<IterationCell>) -> String {
    c.map(|c| c.label()).unwrap_or_else(|| "FAILED".into())
}

fn criterion_rates(runs: &[(ElementPair, PairRun)]) -> bool {
    let mut ok = true;
    for (pair, run) in runs {
        let target = reference(*pair).rate;
        if run.records.len() != NS.len() {
            println!("  {pair}: missing convergence rows");
            ok = false;
            continue;
        }
        let rates = compute_rates(&run.records);
        let last = rates.last().copied().flatten().expect("finest rates");
        let shown: Vec<String> = [0, 2, 3]
            .iter()
            .map(|&i| last[i].map(|r| format!("{r:.2}")).unwrap_or("n/a".into()))
            .collect();
        let pass = [0, 2, 3].iter().all(|&i| last[i].is_some_and(|r| (r - target).abs() <= 0.15));
        println!(
            "  {pair}: r(u_S) {}, r(u_D) {}, r(p_D) {} at h=1/32 -> 1/64, target {target} +- 0.15",
            shown[0], shown[1], shown[2]
        );
        ok &= pass;
    }
    ok
}

/// Within 3 %, or a deviation between 3 % and 10 % that is the same on both
/// rows (ratios within one percentage point), reported as a convention
/// difference.
fn criterion_errors(runs: &[(ElementPair, PairRun)]) -> bool {
    let mut ok = true;
    let names = ["e(u_S)", "e(u_D)", "e(p_D)"];
    for (pair, run) in runs {
        let refs = reference(*pair).errors;
        if run.records.len() < 2 {
            ok = false;
            continue;
        }
        for (q, name) in names.iter().enumerate() {
            let ratios: Vec<f64> = (0..2)
                .map(|row| {
                    let e = run.records[row];
                    let v = [e.u_s, e.u_d, e.p_d][q];
                    v / refs[row][q]
                })
                .collect();
            let within = ratios.iter().all(|r| (r - 1.0).abs() <= 0.03);
            let spread = ratios.iter().cloned().fold(f64::MIN, f64::max) - ratios.iter().cloned().fold(f64::MAX, f64::min);
            let convention = !within && ratios.iter().all(|r| (r - 1.0).abs() < 0.10) && spread <= 0.01;
            let status = if within {
                "within 3%"
            } else if convention {
                "uniform convention difference"
            } else {
                "deviates"
            };
            println!(
                "  {pair} {name}: h=1/8 {} (ref {}), h=1/16 {} (ref {}), ratios {:.3} {:.3}: {status}",
                sci(ratios[0] * refs[0][q]),
                sci(refs[0][q]),
                sci(ratios[1] * refs[1][q]),
                sci(refs[1][q]),
                ratios[0],
                ratios[1]
            );
            ok &= within || convention;
        }
        if !run.linear_part.is_empty() && *pair == ElementPair::MiniBdm1 {
            let ratios: Vec<String> = run
                .linear_part
                .iter()
                .zip(&refs)
                .map(|(v, r)| format!("{} (ratio {:.3})", sci(*v), v / r[0]))
                .collect();
            println!("  {pair} e(u_S) of the linear part without bubbles: {}", ratios.join(", "));
        }
    }
    ok
}

fn criterion_iterations(runs: &[(ElementPair, PairRun)]) -> bool {
    let mut ok = true;
    let direct = Combo::default();
    for (pair, run) in runs {
        let r = reference(*pair);
        let cells: Vec<Option<IterationCell>> = NS.iter().map(|&n| run.cells[&(n, direct)]).collect();
        let pass = cells.iter().zip(&r.outer_direct).all(|(c, &o)| {
            c.is_some_and(|c| c.converged && c.outer.abs_diff(o) <= 5 && c.inner.abs_diff(r.inner_direct) <= 2)
        });
        println!(
            "  {pair} {direct}: {} vs {:?}({}) within +-5 / +-2: {}",
            cells.iter().map(label).collect::<Vec<_>>().join(" "),
            r.outer_direct,
            r.inner_direct,
            verdict(pass)
        );
        ok &= pass;
        let Some(bpx) = r.outer_bpx else {
            println!("  {pair}: no published counts for the multilevel outer block");
            continue;
        };
        for combo in Combo::ALL.iter().filter(|c| c.outer == OuterPrecond::Bpx) {
            let cells: Vec<Option<IterationCell>> = NS.iter().map(|&n| run.cells[&(n, *combo)]).collect();
            let pass = cells.iter().zip(&bpx).all(|(c, &o)| {
                c.is_some_and(|c| c.converged && (c.outer as f64 - o as f64).abs() <= 0.2 * o as f64)
            });
            println!(
                "  {pair} {combo}: outer {} vs {:?} within 20%: {}",
                cells.iter().map(label).collect::<Vec<_>>().join(" "),
                bpx,
                verdict(pass)
            );
            ok &= pass;
        }
    }
    ok
}

fn criterion_robustness(runs: &[(ElementPair, PairRun)]) -> bool {
    let (first, last) = (NS[0], NS[NS.len() - 1]);
    let mut ok = true;
    for (pair, run) in runs {
        for combo in Combo::ALL {
            let (Some(a), Some(b)) = (run.cells[&(first, combo)], run.cells[&(last, combo)]) else {
                println!("  {pair} {combo}: failed solve");
                ok = false;
                continue;
            };
            let outer = b.outer as f64 / a.outer as f64;
            let mut line = format!("  {pair} {combo}: outer {} -> {} ratio {outer:.2} (<= 2.2)", a.outer, b.outer);
            let mut pass = outer <= 2.2 && a.converged && b.converged;
            match combo.inner {
                InnerPrecond::Hx => {
                    let inner = b.inner as f64 / a.inner as f64;
                    line += &format!(", inner {} -> {} ratio {inner:.2} (<= 1.8)", a.inner, b.inner);
                    pass &= inner <= 1.8;
                }
                InnerPrecond::HxBpx => {
                    let inner = b.inner as f64 / a.inner as f64;
                    line += &format!(", inner {} -> {} ratio {inner:.2} (not bounded)", a.inner, b.inner);
                }
                InnerPrecond::Direct => {}
            }
            println!("{line}: {}", verdict(pass));
            ok &= pass;
        }
    }
    ok
}

fn criterion_oracle() -> bool {
    let mut ok = true;
    for pair in ElementPair::ALL {
        let sys = system(pair, 8);
        let nested = solve_coupled(&sys, &SolveConfig::new(pair, 8).tight());
        let mono = solve_monolithic(&sys);
        match (nested, mono) {
            (Ok(r), Ok(m)) => {
                let d = relative_differences(&sys, &r.fields, &m);
                let pass = r.converged() && d.iter().all(|&v| v <= 1e-6);
                println!(
                    "  {pair} n=8: relative L2 differences {} {} {} {} (<= 1e-6): {}",
                    sci(d[0]),
                    sci(d[1]),
                    sci(d[2]),
                    sci(d[3]),
                    verdict(pass)
                );
                ok &= pass;
            }
            (Err(e), _) | (_, Err(e)) => {
                println!("  {pair}: {e}");
                ok = false;
            }
        }
    }
    ok
}

fn criterion_properties(runs: &[(ElementPair, PairRun)]) -> bool {
    let mut ok = true;
    for (pair, run) in runs {
        let sys = system(*pair, 8);
        let mut found = match checks::property_suite(&sys, 5, 2024) {
            Ok(c) => c,
            Err(e) => {
                println!("  {pair}: {e}");
                ok = false;
                continue;
            }
        };
        found.extend(run.conservation.clone());
        let failed: Vec<&Check> = found.iter().filter(|c| !c.passed()).collect();
        for c in &failed {
            println!("  {pair} {}", c.line());
        }
        let worst_sym = found
            .iter()
            .filter(|c| c.name.ends_with("symmetry"))
            .fold(0.0f64, |m, c| m.max(c.value));
        println!(
            "  {pair}: {} of {} probes pass, worst symmetry defect {}",
            found.len() - failed.len(),
            found.len(),
            sci(worst_sym)
        );
        ok &= failed.is_empty() && run.conservation.is_some();
    }
    ok
}

fn criterion_conditioning() -> bool {
    let mut ok = true;
    for pair in ElementPair::ALL {
        let conds: Vec<_> = match [8, 16, 32].iter().map(|&n| checks::conditioning(pair, n, 300, 11)).collect() {
            Ok(c) => c,
            Err(e) => {
                println!("  {pair}: {e}");
                ok = false;
                continue;
            }
        };
        let (a, b) = (conds[0], conds[2]);
        let outer = b.outer_direct / a.outer_direct;
        let hx = b.hdiv_hx / a.hdiv_hx;
        let pass = outer <= 1.5 && hx <= 1.5;
        println!(
            "  {pair}: outer {:.1} {:.1} {:.1} growth {outer:.2}; H(div) with auxiliary space {:.1} {:.1} {:.1} growth {hx:.2}: {}",
            conds[0].outer_direct,
            conds[1].outer_direct,
            conds[2].outer_direct,
            conds[0].hdiv_hx,
            conds[1].hdiv_hx,
            conds[2].hdiv_hx,
            verdict(pass)
        );
        println!(
            "  {pair} multilevel variants (not bounded): outer {:.1} -> {:.1}, auxiliary {:.1} -> {:.1}",
            a.outer_bpx, b.outer_bpx, a.hdiv_hx_bpx, b.hdiv_hx_bpx
        );
        ok &= pass;
    }
    ok
}

fn criterion_infsup() -> bool {
    let ns = [4, 8, 16];
    let mut ok = true;
    match checks::infsup_sweep(&ns) {
        Ok(sweeps) => {
            for s in sweeps {
                let r = s.min_ratio();
                let vals: Vec<String> = s.values.iter().map(|(_, b)| format!("{b:.4}")).collect();
                println!("  {}: {} min level ratio {r:.3} (>= 0.8)", s.label, vals.join(" "));
                ok &= r >= 0.8;
            }
        }
        Err(e) => {
            println!("  {e}");
            ok = false;
        }
    }
    match checks::unstable_infsup(&ns) {
        Ok(s) => {
            let vals: Vec<String> = s.values.iter().map(|(_, b)| format!("{b:.4}")).collect();
            println!("  {}: {} decay {:.2} (>= 2)", s.label, vals.join(" "), s.decay());
            ok &= s.decay() >= 2.0;
        }
        Err(e) => {
            println!("  {e}");
            ok = false;
        }
    }
    ok
}

fn main() {
    let start = Instant::now();
    let runs: Vec<(ElementPair, PairRun)> = ElementPair::ALL.iter().map(|&p| (p, run_pair(p))).collect();
    let mut results = Vec::new();
    let mut record = |id: usize, title: &str, ok: bool| {
        println!("{} criterion {id}: {title}", verdict(ok));
        results.push(ok);
    };
    record(1, "convergence rates at the finest pair", criterion_rates(&runs));
    record(2, "error magnitudes at h = 1/8 and 1/16", criterion_errors(&runs));
    record(3, "iteration counts", criterion_iterations(&runs));
    record(4, "h-robustness of iteration counts", criterion_robustness(&runs));
    record(5, "nested solve matches the monolithic solve", criterion_oracle());
    record(6, "operator property probes", criterion_properties(&runs));
    record(7, "condition number growth", criterion_conditioning());
    record(8, "inf-sup sweep", criterion_infsup());
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed} of {} criteria pass ({:.1?})", results.len(), start.elapsed());
    let strict = std::env::var("SDCOUPLE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
