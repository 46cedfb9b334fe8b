//! End-to-end acceptance checks. Run with `--nocapture` to see one line per criterion.

mod common;

use std::io::Write;
use std::time::Instant;

use eigentrilat::bench::{trial_seed, DegenExperiment, NoiseExperiment, Solver, SynthConfig};
use eigentrilat::ingest::{build_problem, calibrate_pathloss, AnchorParams, BuildOptions, CalibrationRecord};
use eigentrilat::ingest::{MeasurementKind, MeasurementRecord};
use eigentrilat::smalleig::{all_eigenvalues, largest_real_eigenvalue, EigenvalueList};
use eigentrilat::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dist, fd_gradient, normal, oracle_stationary_points, random_problem};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn noiseless_recovery() -> Outcome {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let trials = 1000u64;
    let mut good = 0;
    let mut worst = 0.0f64;
    for t in 0..trials {
        let (p, x) = bench::gen_synthetic(&SynthConfig::new(3, 6, 0.0, trial_seed(101, 0, t)));
        let e = solve(&p, &opts).map(|s| s.error_to(&x)).unwrap_or(f64::INFINITY);
        worst = worst.max(e);
        if e < 1e-9 {
            good += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let rate = good as f64 / trials as f64;
    outcome(
        rate >= 0.999 && secs < 5.0,
        format!("{good}/{trials} below 1e-9 (worst {worst:.2e}), {secs:.2}s"),
    )
}

fn degenerate_sweep() -> Outcome {
    let start = Instant::now();
    let scales: Vec<f64> = (0..=8).map(|k| 10f64.powi(-k)).collect();
    let rows = DegenExperiment::new(scales.clone(), 200, 7).run(&SolverOptions::default());
    let secs = start.elapsed().as_secs_f64();
    let of = |solver: Solver| rows.iter().filter(move |r| r.solver == solver);
    let alg2_ok = of(Solver::Alg2).all(|r| r.median_error < 1e-6 && r.success_rate >= 0.995);
    let alg2_worst_rate = of(Solver::Alg2).map(|r| r.success_rate).fold(1.0, f64::min);
    let alg2_worst_med = of(Solver::Alg2).map(|r| r.median_error).fold(0.0, f64::max);
    let alg1_base = of(Solver::Alg1).find(|r| r.scale == 1.0).unwrap().median_error;
    let (peak_scale, alg1_peak) = of(Solver::Alg1)
        .map(|r| (r.scale, r.median_error))
        .fold((1.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let ratio = alg1_peak / alg1_base;
    outcome(
        alg2_ok && ratio >= 1e6 && secs < 60.0,
        format!(
            "alg2 min success {alg2_worst_rate:.3}, max median {alg2_worst_med:.2e}; \
             alg1 peak {alg1_peak:.2e} at {peak_scale:e} vs {alg1_base:.2e} at 1 (x{ratio:.1e}); {secs:.1}s"
        ),
    )
}

fn noise_accuracy() -> Outcome {
    let start = Instant::now();
    let exp = NoiseExperiment::new(vec![0.001, 0.01, 0.1], 1000, 3);
    let rows = exp.run(&SolverOptions::default());
    let secs = start.elapsed().as_secs_f64();
    let mean = |sigma: f64, solver: Solver| {
        rows.iter().find(|r| r.sigma == sigma && r.solver == solver).unwrap().mean
    };
    let mut pass = secs < 120.0;
    let mut parts = Vec::new();
    for &s in &exp.sigmas {
        let (a, ml) = (mean(s, Solver::Alg2), mean(s, Solver::Ml));
        let rel = (a - ml).abs() / ml;
        pass &= rel <= 0.05;
        parts.push(format!("sigma {s}: alg2 {a:.4} ml {ml:.4} ({:+.2}%)", 100.0 * (a - ml) / ml));
    }
    let (lin, a) = (mean(0.1, Solver::Linear), mean(0.1, Solver::Alg2));
    pass &= lin > a;
    parts.push(format!("linear {lin:.4} at 0.1"));
    outcome(pass, format!("{}; {secs:.1}s", parts.join(", ")))
}

/// Matches every point of `a` to some point of `b` within `tol`; returns the worst distance.
fn one_sided(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|x| b.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

fn optimality_oracle() -> Outcome {
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut failures = Vec::new();
    let mut worst_set = 0.0f64;
    let instances = 500;
    for k in 0..instances {
        let n = 1 + k % 2;
        let m = rng.random_range(n..=6);
        let dense = rng.random_bool(0.3);
        let p = random_problem(&mut rng, n, m, dense);

        let sol = solve(&p, &opts).unwrap();
        let best = match &sol.minimizers {
            Minimizers::Unique(x) | Minimizers::Pair(x, _) => cost_h(x, &p),
            Minimizers::Sphere(s) => cost_h(&s.representative(), &p),
            Minimizers::IllDefined => f64::NAN,
        };

        let nd = build_normal_data(&p);
        let sd = spectral_data(&nd).unwrap();
        let mut ours: Vec<Vec<f64>> = Vec::new();
        let mut continuum = false;
        for sp in stationary_points(&sd, &opts).unwrap() {
            if let StationarySet::Sphere { kernel, radius, .. } = &sp.set {
                continuum |= kernel.len() > 1 && *radius > 0.0;
            }
            ours.extend(sp.isolated().iter().map(|y| sd.to_problem_coords(y, &nd.t)));
        }
        let oracle = oracle_stationary_points(&p);

        let floor = ours.iter().chain(&oracle).map(|x| cost_h(x, &p)).fold(f64::INFINITY, f64::min);
        if !(best <= floor + 1e-9 * (1.0 + floor.abs())) {
            failures.push(format!("#{k} n={n} m={m}: cost {best:e} above stationary minimum {floor:e}"));
            continue;
        }
        if continuum {
            continue;
        }
        let scale = 1.0 + ours.iter().chain(&oracle).flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let gap = one_sided(&ours, &oracle).max(one_sided(&oracle, &ours)) / scale;
        worst_set = worst_set.max(gap);
        if gap > 1e-6 {
            failures.push(format!("#{k} n={n} m={m}: {} vs {} stationary points, gap {gap:e}", ours.len(), oracle.len()));
        }
    }
    let mut detail = format!("{instances} instances, worst set disagreement {worst_set:.2e}");
    if !failures.is_empty() {
        detail += &format!("; {} failures, first: {}", failures.len(), failures[0]);
    }
    outcome(failures.is_empty(), detail)
}

fn multiset_gap(a: &EigenvalueList, b: &EigenvalueList) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for (re, im) in a.iter() {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, (r2, i2))| (j, (re - r2).hypot(im - i2)))
            .fold((usize::MAX, f64::INFINITY), |x, y| if y.1 < x.1 { y } else { x });
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// The multiset comparison runs on instances in general position (`m ≥ n+1`).
/// With fewer senders `A` has a repeated eigenvalue that is defective in
/// `M_A`, where any backward-stable eigensolver is only accurate to `√eps`.
fn spectral_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let target = 10_000;
    let (mut total, mut general) = (0, 0);
    let (mut below_d, mut beyond, mut mismatch) = (0, 0, 0);
    let mut worst_gap = 0.0f64;
    while general < target {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=8);
        let dense = rng.random_bool(0.3);
        let p = random_problem(&mut rng, n, m, dense);
        total += 1;
        let nd = build_normal_data(&p);
        let sd = spectral_data(&nd).unwrap();
        let mm = build_m(&sd);
        let lambda = largest_real_eigenvalue(&mm, 1e-8).unwrap();
        let tol = 1e-8 * (1.0 + lambda.abs());
        if lambda < sd.dvals[0] - tol {
            below_d += 1;
        }
        let ev = all_eigenvalues(&mm).unwrap();
        if ev.iter().any(|(re, _)| re > lambda + tol) {
            beyond += 1;
        }
        if m < n + 1 {
            continue;
        }
        general += 1;
        let evd = all_eigenvalues(&build_md(&sd)).unwrap();
        let eva = all_eigenvalues(&build_ma(&nd)).unwrap();
        let gap = multiset_gap(&ev, &evd).max(multiset_gap(&ev, &eva)) / (1.0 + lambda.abs());
        worst_gap = worst_gap.max(gap);
        if gap > 1e-8 {
            mismatch += 1;
        }
    }
    outcome(
        below_d == 0 && beyond == 0 && mismatch == 0,
        format!(
            "{total} instances: lambda<D11 {below_d}, eigenvalue right of lambda {beyond}; \
             {general} in general position: multiset mismatches {mismatch} (worst {worst_gap:.2e})"
        ),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let pairs = 1000;
    let (mut worst_fd, mut worst_form) = (0.0f64, 0.0f64);
    for _ in 0..pairs {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=8);
        let dense = rng.random_bool(0.3);
        let p = random_problem(&mut rng, n, m, dense);
        let x: Vec<f64> = (0..n).map(|_| 2.0 * normal(&mut rng)).collect();
        let g = DVector::from_vec(gradient_h(&x, &p));
        let fd = DVector::from_vec(fd_gradient(|y| cost_h(y, &p), &x, 1e-6));
        worst_fd = worst_fd.max((&fd - &g).norm() / g.norm());

        let nd = build_normal_data(&p);
        let z = DVector::from_column_slice(&x) - &nd.t;
        let form = (&z * z.norm_squared() - &nd.a * &z + &nd.g) * nd.weight_total;
        worst_form = worst_form.max((&form - &g).norm() / g.norm());
    }
    outcome(
        worst_fd < 1e-5 && worst_form < 1e-10,
        format!("{pairs} pairs: finite differences {worst_fd:.2e}, reduced form {worst_form:.2e}"),
    )
}

fn known_values() -> Outcome {
    let opts = SolverOptions::default();
    let circle = TrilaterationProblem::new(
        2,
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
        vec![1.65; 4],
        WeightMatrix::Diagonal(vec![1.0 / (4.0 * 1.65 * 1.65); 4]),
    );
    let radius = match solve(&circle, &opts).unwrap().minimizers {
        Minimizers::Sphere(s) => s.radius,
        _ => f64::NAN,
    };
    let circle_ok = (radius - 0.85).abs() < 1e-9;

    let s2 = std::f64::consts::SQRT_2;
    let collinear = TrilaterationProblem::new(
        2,
        vec![vec![0.0, -1.0], vec![0.0, 0.0], vec![0.0, 1.0]],
        vec![s2, 1.0, s2],
        WeightMatrix::unit(3),
    );
    let pair_err = match solve(&collinear, &opts).unwrap().minimizers {
        Minimizers::Pair(a, b) => dist(&a, &[1.0, 0.0]).max(dist(&b, &[-1.0, 0.0])),
        _ => f64::INFINITY,
    };

    let sd = SpectralData {
        q: DMatrix::identity(1, 1),
        dvals: vec![1.0],
        b: DVector::from_element(1, -1.875),
    };
    let one = solver::solve_spectral(&sd, &opts).unwrap();
    let y = match one.minimizers {
        Minimizers::Unique(y) => y[0],
        _ => f64::NAN,
    };
    let one_ok = (one.lambda - 2.25).abs() < 1e-10 && (y - 1.5).abs() < 1e-10;
    outcome(
        circle_ok && pair_err < 1e-9 && one_ok,
        format!(
            "circle radius {radius:.12}, collinear pair error {pair_err:.1e}, 1-D lambda {:.12} y {y:.12}",
            one.lambda
        ),
    )
}

fn timing_ratios() -> Outcome {
    let rows = bench::run_timing(&[4, 10, 100], 2000, 808);
    let med = |m: usize| rows.iter().find(|r| r.m == m && r.solver == Solver::Alg2).unwrap().median_seconds;
    let (t4, t10, t100) = (med(4), med(10), med(100));
    outcome(
        t100 <= 2.0 * t4 && t10 < 1e-3,
        format!("alg2 medians m=4 {:.1}us, m=10 {:.1}us, m=100 {:.1}us (ratio {:.2})", t4 * 1e6, t10 * 1e6, t100 * 1e6, t100 / t4),
    )
}

fn ingestion_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (c0, eta) = (-38.5, 2.7);
    let rss = |d: f64, c0: f64, eta: f64| c0 - 10.0 * eta * d.log10();

    let calib: Vec<CalibrationRecord> = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&d| CalibrationRecord { distance: d, rss_dbm: rss(d, c0, eta) })
        .collect();
    let (fc0, feta) = calibrate_pathloss(&calib).unwrap();
    let calib_err = (fc0 - c0).abs().max((feta - eta).abs());

    let anchors: Vec<AnchorParams> = [[0.0, 0.0, 0.0], [8.0, 0.0, 0.5], [0.0, 6.0, 2.5], [8.0, 6.0, 0.0], [4.0, 3.0, 3.0]]
        .iter()
        .enumerate()
        .map(|(i, p)| AnchorParams { id: format!("ap{i}"), position: p.to_vec(), eta: feta, c0: fc0 })
        .collect();
    let truth = [2.5, 4.0, 1.2];
    let meas: Vec<MeasurementRecord> = anchors
        .iter()
        .map(|a| MeasurementRecord {
            anchor_id: a.id.clone(),
            kind: MeasurementKind::Rss,
            value: rss(dist(&a.position, &truth), c0, eta),
        })
        .collect();
    let p = build_problem(&meas, &anchors, &BuildOptions::default()).unwrap();
    let pos_err = solve(&p, &SolverOptions::default()).unwrap().error_to(&truth);

    // Noisy RSS, weighted vs unweighted.
    let room: Vec<AnchorParams> = (0..8)
        .map(|i| AnchorParams {
            id: format!("r{i}"),
            position: vec![rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)],
            eta: 2.0,
            c0: -40.0,
        })
        .collect();
    let trials = 500;
    let (mut sum_w, mut sum_u) = (0.0, 0.0);
    for _ in 0..trials {
        let x = [rng.random_range(2.0..18.0), rng.random_range(2.0..18.0)];
        let meas: Vec<MeasurementRecord> = room
            .iter()
            .map(|a| MeasurementRecord {
                anchor_id: a.id.clone(),
                kind: MeasurementKind::Rss,
                value: rss(dist(&a.position, &x), a.c0, a.eta) + 5.0 * normal(&mut rng),
            })
            .collect();
        for (unweighted, acc) in [(false, &mut sum_w), (true, &mut sum_u)] {
            let opts = BuildOptions { unweighted, ..BuildOptions::default() };
            let p = build_problem(&meas, &room, &opts).unwrap();
            let sol = solve(&p, &SolverOptions::default()).unwrap();
            *acc += sol.error_to(&x);
        }
    }
    let (mw, mu) = (sum_w / trials as f64, sum_u / trials as f64);
    outcome(
        calib_err < 1e-9 && pos_err < 1e-8 && mw < mu,
        format!(
            "calibration error {calib_err:.1e}, position error {pos_err:.1e}, \
             mean error weighted {mw:.3} m vs unweighted {mu:.3} m"
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("noiseless recovery", noiseless_recovery),
        ("degenerate sweep", degenerate_sweep),
        ("gaussian noise accuracy", noise_accuracy),
        ("optimality oracle", optimality_oracle),
        ("spectral invariants", spectral_invariants),
        ("gradient check", gradient_check),
        ("known values", known_values),
        ("timing ratios", timing_ratios),
        ("ingestion round trip", ingestion_round_trip),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let line = format!("criterion {} ({name}): {} | {}\n", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        // Written past the harness capture so the report shows in every run.
        let _ = std::io::stdout().lock().write_all(line.as_bytes());
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
