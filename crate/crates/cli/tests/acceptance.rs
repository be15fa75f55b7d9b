//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde_json::Value;
use softsensor_core::dataset::Report;
use softsensor_core::experiments::*;
use softsensor_core::mis::{build_label_milp, con_qp, solve_fixed_labels};
use softsensor_core::optim::{solve_milp, solve_qp, MilpOptions, Status};
use softsensor_core::sis::*;

const REPLICATES: usize = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Like `f64::max` but a NaN on either side wins, so it shows up in the report.
fn worst_of(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) }
}

fn median_of(report: &Report, case: &str, method: &str) -> f64 {
    report.series["summary"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["case"] == case && r["method"] == method)
        .and_then(|r| r["median"].as_f64())
        .unwrap_or(f64::NAN)
}

fn criterion_1(report: &Report) -> Outcome {
    let tol = 0.015;
    let cells = [
        ("one_cluster", "sis_olsr", 0.028, 0.028),
        ("two_cluster", "sis_olsr", 0.064, 0.064),
        ("two_cluster", "mis_sota", 0.032, 0.032),
        ("two_cluster", "mis_con", 0.079, 0.079),
        ("two_cluster", "mis_con_lab", 0.023, 0.026),
        ("indistinct", "mis_con_lab", 0.043, 0.043),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (case, method, lo, hi) in cells {
        let m = median_of(report, case, method);
        let good = m >= lo - tol && m <= hi + tol;
        ok &= good;
        parts.push(format!("{case}/{method}={m:.4}{}", if good { "" } else { "(!)" }));
    }
    check(ok, parts.join(" "))
}

fn criterion_2(report: &Report) -> Outcome {
    let d = |m: &str| median_of(report, "desirable", m);
    let u = |m: &str| median_of(report, "undesirable", m);
    let names = ["sis_olsr", "mis_sota", "mis_con", "mis_con_lab"];
    let sota = d("mis_sota") < d("sis_olsr");
    let lab = d("mis_con_lab") < d("mis_con");
    let worst = names.iter().all(|m| *m == "mis_con" || d(m) < d("mis_con"));
    let harder = names.iter().all(|m| u(m) >= d(m));
    let medians: Vec<String> = names.iter().map(|m| format!("{m}={:.4}/{:.4}", d(m), u(m))).collect();
    check(
        sota && lab && worst && harder,
        format!("sota<olsr:{sota} lab<con:{lab} con worst:{worst} undesirable>=desirable:{harder}; desirable/undesirable {}", medians.join(" ")),
    )
}

fn criterion_3(report: &Report, sigmas: &[f64]) -> Outcome {
    let rows = report.series["noise_sweep"].as_array().unwrap();
    let med = |m: &str, s: f64| {
        rows.iter()
            .find(|r| r["method"] == m && r["sigma"].as_f64() == Some(s))
            .and_then(|r| r["median"].as_f64())
            .unwrap_or(f64::NAN)
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for m in ["sis_olsr", "mis_sota", "mis_con", "mis_con_lab"] {
        let inversions = sigmas.windows(2).filter(|w| !(med(m, w[1]) >= med(m, w[0]))).count();
        if inversions > 1 {
            ok = false;
            notes.push(format!("{m} has {inversions} inversions"));
        }
    }
    for &s in sigmas {
        let (olsr, sota, lab) = (med("sis_olsr", s), med("mis_sota", s), med("mis_con_lab", s));
        if !(sota < olsr) {
            ok = false;
            notes.push(format!("sigma={s}: sota {sota:.4} >= olsr {olsr:.4}"));
        }
        if s <= 10.0 && !(lab < olsr) {
            ok = false;
            notes.push(format!("sigma={s}: con_lab {lab:.4} >= olsr {olsr:.4}"));
        }
    }
    let line: Vec<String> = sigmas
        .iter()
        .map(|&s| format!("{s}:{:.3}/{:.3}/{:.3}/{:.3}", med("sis_olsr", s), med("mis_sota", s), med("mis_con", s), med("mis_con_lab", s)))
        .collect();
    notes.push(format!("olsr/sota/con/con_lab {}", line.join(" ")));
    check(ok, notes.join("; "))
}

fn criterion_4(reports: &[&Report]) -> Outcome {
    let (mut count, mut worst_res, mut worst_gap) = (0usize, 0f64, 0f64);
    let mut expected = 0usize;
    for r in reports {
        expected += r.sensors.iter().filter(|s| s.method == "mis_con" || s.method == "mis_con_lab").count();
        for row in r.series.get("continuity").and_then(Value::as_array).into_iter().flatten() {
            count += 1;
            worst_res = worst_of(worst_res, row["coefficient_residual"].as_f64().unwrap_or(f64::INFINITY));
            worst_gap = worst_of(worst_gap, row["boundary_gap"].as_f64().unwrap_or(f64::INFINITY));
        }
    }
    check(
        count == expected && count > 0 && worst_res <= 1e-7 && worst_gap <= 1e-6,
        format!("{count}/{expected} continuous sensors, max coefficient residual {worst_res:.2e}, max boundary gap {worst_gap:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut split = 0;
    // the first 25 are gentle and mostly single-class; the last 25 have a steep
    // kink and light penalties so that a split labeling wins
    for inst in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + inst);
        let sharp = inst >= 25;
        let n = rng.random_range(5..=10);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.0..1.0));
        let kink: f64 = rng.random_range(0.3..0.7);
        let (slope, noise, pen) = if sharp { (3.0, 0.05, 0.001..0.05) } else { (1.0, 0.1, 0.01..0.5) };
        let y = DVector::from_fn(n, |i, _| slope * (x[(i, 0)] - kink).abs() + rng.random_range(-noise..noise));
        let alpha = rng.random_range(pen.clone());
        let beta = rng.random_range(pen);
        let mut best = f64::INFINITY;
        for mask in 0u32..1 << n {
            let z: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            best = best.min(solve_fixed_labels(&x, &y, &z, alpha, beta).unwrap().objective);
        }
        let lm = build_label_milp(&x, &y, alpha, beta, 100.0, None);
        let sol = solve_milp(&lm.problem, &MilpOptions::default()).unwrap();
        let ones = (0..n).filter(|&i| sol.x[lm.z_offset() + i] > 0.5).count();
        split += usize::from(ones > 0 && ones < n);
        let diff = (sol.objective - best).abs();
        worst = worst_of(worst, diff);
        ok &= sol.status == Status::Optimal && diff <= 1e-6;
    }
    check(ok, format!("50 instances, n in 5..=10, {split} with split optima, max |MILP - enumeration| = {worst:.2e}"))
}

/// Brute-force minimum of the one-input continuity problem: least squares
/// for the model-1 line at each `(w, w0)` on a shrinking grid.
fn con_grid_min(m: &[f64], y: &[f64], z: &[bool], alpha: f64, beta: f64) -> f64 {
    let n = m.len() as f64;
    let f = |w: f64, w0: f64| {
        let t: Vec<f64> = (0..m.len()).map(|i| if z[i] { y[i] } else { y[i] + w * m[i] + w0 }).collect();
        let (mx, mt) = (m.iter().sum::<f64>() / n, t.iter().sum::<f64>() / n);
        let sxy: f64 = m.iter().zip(&t).map(|(a, b)| (a - mx) * (b - mt)).sum();
        let sxx: f64 = m.iter().map(|a| (a - mx).powi(2)).sum();
        let a1 = sxy / sxx;
        let a01 = mt - a1 * mx;
        let mut obj = alpha * w * w;
        for i in 0..m.len() {
            let v = w * m[i] + w0;
            obj += (t[i] - a1 * m[i] - a01).powi(2) + beta * (1.0 - if z[i] { v } else { -v }).max(0.0);
        }
        obj
    };
    let (mut cw, mut cw0, mut half) = (0.0f64, 0.0f64, 50.0f64);
    let mut best = f64::INFINITY;
    for _ in 0..80 {
        let step = half / 20.0;
        let (mut bw, mut bw0) = (cw, cw0);
        for i in -20..=20 {
            for j in -20..=20 {
                let (w, w0) = (cw + step * i as f64, cw0 + step * j as f64);
                let v = f(w, w0);
                if v < best {
                    best = v;
                    bw = w;
                    bw0 = w0;
                }
            }
        }
        cw = bw;
        cw0 = bw0;
        half = step * 3.0;
    }
    best
}

fn criterion_6() -> Outcome {
    let (mut worst_kkt, mut worst_excess) = (0f64, f64::NEG_INFINITY);
    let mut ok = true;
    for inst in 0..25u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + inst);
        let n = rng.random_range(5..=9);
        let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = m.iter().map(|v| (v - 0.5f64).abs() + 0.1 * rng.random_range(-1.0..1.0)).collect();
        let mut z: Vec<bool> = m.iter().map(|&v| v > 0.5).collect();
        // make sure both classes have two points for a well-posed fit
        z[0] = true;
        z[1] = true;
        z[2] = false;
        z[3] = false;
        let alpha = rng.random_range(0.01..1.0);
        let beta = rng.random_range(0.01..1.0);
        let x = DMatrix::from_column_slice(n, 1, &m);
        let (qp, constant) = con_qp(&x, &DVector::from_column_slice(&y), &z, alpha, beta);
        let sol = solve_qp(&qp, 1e-9).unwrap();
        let objective = sol.objective + constant;
        let grid = con_grid_min(&m, &y, &z, alpha, beta);
        worst_kkt = worst_of(worst_kkt, sol.kkt_residual);
        worst_excess = worst_of(worst_excess, objective - grid);
        ok &= sol.status == Status::Optimal && sol.kkt_residual <= 1e-7 && objective <= grid + 1e-5 && objective.is_finite();
    }
    check(ok, format!("25 instances, max KKT residual {worst_kkt:.2e}, max objective - grid {worst_excess:.2e}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let x = DMatrix::from_fn(60, 4, |_, _| rng.random_range(0.0..1.0));
    let y = DVector::from_fn(60, |i, _| x[(i, 0)] - 2.0 * x[(i, 3)] + 0.1 * normal(&mut rng));
    let olsr = train_olsr(&x, &y).unwrap();
    let l0 = train_lasso(&x, &y, &LassoConfig { lambda: 0.0, refit: false }).unwrap();
    let lasso_ok = (&l0.a - &olsr.a).amax() <= 1e-6 && (l0.a0 - olsr.a0).abs() <= 1e-6;
    let yc = y.add_scalar(-y.mean());
    let lam_max = (0..4).map(|j| x.column(j).add_scalar(-x.column(j).mean()).dot(&yc).abs()).fold(0.0, f64::max);
    let zero = train_lasso(&x, &y, &LassoConfig::new(lam_max * 1.01)).unwrap();
    let zero_ok = zero.a.iter().all(|&v| v == 0.0);
    let full = ComponentConfig { n_pc: 4 };
    let p_olsr = predict_linear(&olsr, &x).unwrap();
    let comp_ok = [train_pcr(&x, &y, &full).unwrap(), train_plsr(&x, &y, &full).unwrap()]
        .iter()
        .all(|m| (predict_linear(m, &x).unwrap() - &p_olsr).amax() <= 1e-8);
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let x = DMatrix::from_fn(40, 6, |_, _| rng.random_range(0.0..1.0));
        let y = DVector::from_fn(40, |i, _| 2.0 * x[(i, 1)] - 1.5 * x[(i, 4)] + 0.1 * normal(&mut rng));
        let m = train_subset_selection(&x, &y, &SubsetConfig::new(2)).unwrap();
        hits += usize::from(m.support() == vec![1, 4]);
    }
    check(
        lasso_ok && zero_ok && comp_ok && hits >= 95,
        format!("lasso(0)=olsr:{lasso_ok} zero above threshold:{zero_ok} full components=olsr:{comp_ok} subset recovery {hits}/100"),
    )
}

/// Maximum of two planes in `(x1, x2)` over two regimes separated in
/// `x1`, with two decoy inputs and a time column.
fn write_planted_csv(path: &Path, seed: u64, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "time,x1,x2,d1,d2,y").unwrap();
    for i in 0..n {
        let low = i % 2 == 0;
        let x1: f64 = if low { rng.random_range(0.0..0.4) } else { rng.random_range(0.6..1.0) };
        let x2: f64 = rng.random_range(0.0..0.5);
        let (d1, d2): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let y = if low { 1.0 + 0.5 * x1 + x2 } else { -0.25 + 3.0 * x1 + x2 } + noise.sample(&mut rng);
        writeln!(f, "{i},{x1},{x2},{d1},{d2},{y}").unwrap();
    }
}

fn softsensor(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_softsensor")).args(args).env_remove("SOURCE_DATE_EPOCH").output().unwrap()
}

fn csv_report(dir: &Path, tag: &str) -> (Vec<u8>, Option<Report>) {
    let data = dir.join("planted.csv");
    let out = dir.join(format!("csv_{tag}.json"));
    let o = softsensor(&[
        "csv-workflow",
        "--data",
        data.to_str().unwrap(),
        "--output-column",
        "y",
        "--timestamp-column",
        "time",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    if !o.status.success() {
        return (Vec::new(), None);
    }
    let bytes = std::fs::read(&out).unwrap();
    let report = serde_json::from_slice(&bytes).ok();
    (bytes, report)
}

fn criterion_8(dir: &Path) -> Outcome {
    let (_, report) = csv_report(dir, "a");
    let Some(r) = report else {
        return check(false, "csv-workflow failed");
    };
    let methods = ["sis_olsr", "sis_pcr", "sis_plsr", "sis_lasso", "sis_ref", "sis_ss1", "sis_ss2", "mis_sota", "mis_con", "mis_con_lab"];
    let missing: Vec<&str> = methods.iter().copied().filter(|m| !r.sensors.iter().any(|s| s.method == *m)).collect();
    let best = |prefix: &str| {
        r.sensors.iter().filter(|s| s.method.starts_with(prefix)).filter_map(|s| s.rmse_test).fold(f64::INFINITY, f64::min)
    };
    let (sota, sis) = (best("mis_sota"), best("sis_"));
    check(missing.is_empty() && sota < sis, format!("missing {missing:?}; best MIS_SotA {sota:.4} vs best SIS {sis:.4}"))
}

fn criterion_9(dir: &Path) -> Outcome {
    let mut same = Vec::new();
    // same output path both times: the report records its own arguments
    let (a, _) = csv_report(dir, "det");
    let (b, _) = csv_report(dir, "det");
    same.push(("csv-workflow", !a.is_empty() && a == b));
    let run = |sub: &str| {
        let out = dir.join(format!("{sub}.json"));
        let o = softsensor(&[sub, "--replicates", "2", "--seed", "11", "--out", out.to_str().unwrap()]);
        if o.status.success() { std::fs::read(out).unwrap() } else { Vec::new() }
    };
    for sub in ["illustrative", "scenario-study"] {
        let (a, b) = (run(sub), run(sub));
        same.push((sub, !a.is_empty() && a == b));
    }
    let gen = || {
        let out = dir.join("gen.csv");
        let o = softsensor(&["generate", "--case", "scenario", "--with-regime", "--seed", "4", "--out", out.to_str().unwrap()]);
        if o.status.success() { std::fs::read(out).unwrap() } else { Vec::new() }
    };
    let (a, b) = (gen(), gen());
    same.push(("generate", !a.is_empty() && a == b));
    let ok = same.iter().all(|(_, s)| *s);
    let detail: Vec<String> = same.iter().map(|(n, s)| format!("{n}:{}", if *s { "identical" } else { "DIFFERENT" })).collect();
    check(ok, detail.join(" "))
}

fn main() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    write_planted_csv(&dir.path().join("planted.csv"), 1, 300);

    let base = ExperimentSpec { replicates: REPLICATES, seed: 2024, ..ExperimentSpec::default() };
    let illustrative = run_illustrative(&base).unwrap();
    let scenario = run_scenario_study(&ExperimentSpec { kind: ExperimentKind::ScenarioStudy, ..base.clone() }).unwrap();
    let sweep_spec = ExperimentSpec { kind: ExperimentKind::NoiseSweep, ..base.clone() };
    let sweep = run_noise_sweep(&sweep_spec).unwrap();

    let results = [
        criterion_1(&illustrative),
        criterion_2(&scenario),
        criterion_3(&sweep, &sweep_spec.sigmas),
        criterion_4(&[&illustrative, &scenario, &sweep]),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(dir.path()),
        criterion_9(dir.path()),
    ];
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        println!("criterion {}: {} - {}", i + 1, if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {}/{} passed in {:.0} s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
