//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::cell::Cell;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use netopt_core::admm::{
    compute_delta_r, reference_solve, virtual_queue_update, AdmmParams, AdmmSolver,
    ReferenceOptions,
};
use netopt_core::baselines::{ProximalParams, ProximalSolver, QcaParams, QcaSolver};
use netopt_core::capacity::{EnumeratedOracle, MaxWeightOracle};
use netopt_core::driver::{fit_linear_rate, run, RunOptions, RunOutcome, SlotAlgorithm, StopRule};
use netopt_core::network::{generate_er_instance, ErParams, NetworkInstance};
use netopt_core::queue::{queue_bound_from_max, queue_step, steady_state, QueueState};
use netopt_core::routing::project_capped_simplex;
use netopt_core::scheduling::{solve_scheduling_qp, SchedulingOptions, SchedulingProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{
    capped_simplex_oracle, dense_schedule_oracle, norm, projection_stationarity,
    random_node_exclusive, ScheduleData,
};

const LINEAR_SEEDS: std::ops::Range<u64> = 0..20;
const BASELINE_SEEDS: std::ops::Range<u64> = 100..110;
/// Long enough for the last quarter of every run to sit at the optimum.
const QUEUE_HORIZON: usize = 10_000;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: usize, name: &str, pass: bool, detail: String, secs: f64) {
        if !pass {
            self.failed += 1;
        }
        println!(
            "criterion {n} [{}] {name}: {detail} ({secs:.2} s)",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn params() -> AdmmParams {
    AdmmParams::default()
}

struct LinearRun {
    seed: u64,
    inst: NetworkInstance,
    outcome: RunOutcome,
    secs_to_5000: f64,
    total_secs: f64,
}

fn linear_runs() -> Vec<LinearRun> {
    LINEAR_SEEDS
        .map(|seed| {
            let inst = generate_er_instance(&ErParams::new(10, 0.33, 3, seed)).unwrap();
            let start = Instant::now();
            let reference = reference_solve(&inst, &params(), ReferenceOptions::default()).unwrap();
            let mut solver = AdmmSolver::new(inst.clone(), params()).unwrap();
            let at_5000 = Cell::new(f64::NAN);
            let mut opts =
                RunOptions::new(QUEUE_HORIZON, StopRule::Never).with_reference(&reference);
            opts.on_slot = Some(Box::new(|alg: &dyn SlotAlgorithm| {
                if alg.slot() == 5000 {
                    at_5000.set(start.elapsed().as_secs_f64());
                }
                Ok(())
            }));
            let outcome = run(&mut solver, opts).unwrap();
            LinearRun {
                seed,
                inst,
                outcome,
                secs_to_5000: at_5000.get(),
                total_secs: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn criterion_1(report: &mut Report, runs: &[LinearRun]) {
    let start = Instant::now();
    let mut ok = 0;
    let mut misses = Vec::new();
    let mut worst_secs: f64 = 0.0;
    for r in runs {
        let reached = r.outcome.slots_to(1e-6).filter(|&t| t <= 5000);
        let pts: Vec<(usize, f64)> = r.outcome.metrics[..5000]
            .iter()
            .map(|m| (m.slot, m.rel_err))
            .collect();
        let fit = fit_linear_rate(&pts);
        worst_secs = worst_secs.max(r.secs_to_5000);
        let good = match (&reached, &fit) {
            (Some(_), Ok((slope, r2))) => *slope < 0.0 && *r2 >= 0.98 && r.secs_to_5000 < 10.0,
            _ => false,
        };
        if good {
            ok += 1;
        } else {
            misses.push(match fit {
                Ok((s, r2)) => format!(
                    "seed {}: slots {reached:?} slope {s:.3e} R² {r2:.3}",
                    r.seed
                ),
                Err(e) => format!("seed {}: slots {reached:?} fit error {e}", r.seed),
            });
        }
    }
    let detail = format!(
        "{ok}/{} instances reach 1e-6 by slot 5000 with slope < 0 and R² >= 0.98, slowest {worst_secs:.2} s{}",
        runs.len(),
        if misses.is_empty() { String::new() } else { format!("; misses: {}", misses.join(", ")) }
    );
    report.line(
        1,
        "linear convergence",
        ok == runs.len(),
        detail,
        start.elapsed().as_secs_f64(),
    );
}

fn criterion_2(report: &mut Report, runs: &[LinearRun]) {
    let start = Instant::now();
    let p = params();
    let mut failures = Vec::new();
    let mut worst_gap: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_slope: f64 = 0.0;
    let mut worst_secs: f64 = 0.0;
    for r in runs {
        let trace = &r.outcome.queues;
        let gap = r.outcome.metrics.last().unwrap().util_gap;
        let (mean, slope) = steady_state(&trace.totals);
        let peak_total = trace.totals.iter().cloned().fold(0.0, f64::max);
        let bound = queue_bound_from_max(&r.inst, r.outcome.max_abs_lambda, p.rho, p.tau);
        let within = trace.peak.iter().all(|&q| q <= bound);
        worst_gap = worst_gap.max(gap);
        worst_ratio = worst_ratio.max(peak_total / mean);
        worst_slope = worst_slope.max(slope.abs());
        worst_secs = worst_secs.max(r.total_secs);
        if !(gap <= 1e-6 && peak_total <= 2.0 * mean && slope.abs() <= 1e-6 && within) {
            failures.push(format!(
                "seed {}: gap {gap:.1e} max/steady {:.3} slope {slope:.1e} bound ok {within}",
                r.seed,
                peak_total / mean
            ));
        }
    }
    let detail = format!(
        "worst utility gap {worst_gap:.1e}, worst max/steady {worst_ratio:.3}, worst |slope| {worst_slope:.1e}, slowest {worst_secs:.2} s over {QUEUE_HORIZON} slots{}",
        if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
    );
    let pass = failures.is_empty() && worst_secs < 20.0;
    report.line(
        2,
        "optimal utility and bounded queues",
        pass,
        detail,
        start.elapsed().as_secs_f64(),
    );
}

fn criterion_3(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut worst_stat: f64 = 0.0;
    for _ in 0..10_000 {
        let d = rng.gen_range(1..=20);
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let cap = rng.gen_range(0.0..10.0);
        let (p, _) = project_capped_simplex(&v, cap);
        let o = capped_simplex_oracle(&v, cap);
        worst_stat = worst_stat.max(projection_stationarity(&v, cap, &o));
        let diff: Vec<f64> = p.iter().zip(&o).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && worst_stat <= 1e-12 && secs < 5.0;
    report.line(
        3,
        "capped-simplex projection vs oracle",
        pass,
        format!("10000 cases, max distance {worst:.1e}, oracle stationarity {worst_stat:.1e}"),
        secs,
    );
}

fn criterion_4(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_obj: f64 = 0.0;
    let mut worst_rebuild: f64 = 0.0;
    let mut problems = Vec::new();
    for case in 0..50 {
        let (g, _, set) = random_node_exclusive(&mut rng, 8);
        let d_count = rng.gen_range(1..=3);
        let data = ScheduleData::random(&mut rng, g.n_links(), d_count);
        let want = dense_schedule_oracle(&data, set.atoms(), 1e-10);
        let oracle = EnumeratedOracle::new(set.clone());
        let prob = SchedulingProblem {
            n_links: data.n_links,
            n_destinations: data.n_destinations,
            linear: &data.linear,
            anchor: &data.anchor,
            curvature: &data.curvature,
        };
        let sol = match solve_scheduling_qp(&prob, &oracle, SchedulingOptions::with_tol(1e-10)) {
            Ok(s) => s,
            Err(e) => {
                problems.push(format!("case {case}: {e}"));
                continue;
            }
        };
        worst_obj = worst_obj.max((sol.objective - want).abs());
        let mut rebuild: f64 = 0.0;
        for (l, &yl) in sol.y.iter().enumerate() {
            let y: f64 = sol.atoms.iter().zip(&sol.tau).map(|(a, t)| t * a[l]).sum();
            rebuild = rebuild.max((y - yl).abs());
        }
        worst_rebuild = worst_rebuild.max(rebuild);
        let simplex =
            sol.tau.iter().all(|&t| t >= 0.0) && (sol.tau.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        let in_gamma = sol.atoms.iter().all(|a| set.atoms().contains(a));
        if sol.oracle_calls != oracle.calls() {
            problems.push(format!(
                "case {case}: {} calls reported, {} made",
                sol.oracle_calls,
                oracle.calls()
            ));
        }
        if sol.atoms.len() > g.n_links() + 1 || !simplex || !in_gamma {
            problems.push(format!(
                "case {case}: {} atoms for {} links",
                sol.atoms.len(),
                g.n_links()
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = problems.is_empty() && worst_obj <= 1e-6 && worst_rebuild <= 1e-9 && secs < 30.0;
    report.line(
        4,
        "scheduling vs dense hull oracle",
        pass,
        format!(
            "50 instances, max objective gap {worst_obj:.1e}, max reconstruction error {worst_rebuild:.1e}{}",
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join(", ")) }
        ),
        secs,
    );
}

fn criterion_5(report: &mut Report, runs: &[LinearRun]) {
    let start = Instant::now();
    let mut worst_rise: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut checked = 0;
    let mut failures = Vec::new();
    for r in runs {
        if r.outcome.slots_to(1e-6).is_none() {
            continue;
        }
        checked += 1;
        let rise = r
            .outcome
            .metrics
            .windows(2)
            .map(|w| w[1].lyapunov - w[0].lyapunov)
            .fold(f64::NEG_INFINITY, f64::max);
        let kkt = r.outcome.metrics.last().unwrap().kkt_res;
        worst_rise = worst_rise.max(rise);
        worst_kkt = worst_kkt.max(kkt);
        if rise > 1e-9 || kkt.is_nan() || kkt > 1e-5 {
            failures.push(format!("seed {}: rise {rise:.1e} kkt {kkt:.1e}", r.seed));
        }
    }
    report.line(
        5,
        "Lyapunov descent",
        failures.is_empty() && checked > 0,
        format!(
            "{checked} converged runs, largest V increase {worst_rise:.1e}, largest final KKT residual {worst_kkt:.1e}{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
        start.elapsed().as_secs_f64(),
    );
}

fn criterion_6(report: &mut Report) {
    let start = Instant::now();
    let p = params();
    let (mut time_order, mut queue_order) = (0, 0);
    let mut rows = Vec::new();
    for seed in BASELINE_SEEDS {
        let inst = generate_er_instance(&ErParams::new(10, 0.33, 3, seed)).unwrap();
        let reference = reference_solve(&inst, &p, ReferenceOptions::default()).unwrap();
        let go = |alg: &mut dyn SlotAlgorithm| {
            let mut opts = RunOptions::new(5000, StopRule::Never).with_reference(&reference);
            opts.diagnostics = false;
            run(alg, opts).unwrap()
        };
        let admm = go(&mut AdmmSolver::new(inst.clone(), p.clone()).unwrap());
        let prox = go(&mut ProximalSolver::new(
            inst.clone(),
            ProximalParams {
                rho: p.rho,
                ..Default::default()
            },
        )
        .unwrap());
        let qca = go(&mut QcaSolver::new(
            inst.clone(),
            QcaParams {
                k: 100.0,
                ..Default::default()
            },
        )
        .unwrap());
        let t: Vec<usize> = [&admm, &prox, &qca]
            .iter()
            .map(|o| o.slots_to(1e-2).unwrap_or(usize::MAX))
            .collect();
        let q: Vec<f64> = [&admm, &prox, &qca]
            .iter()
            .map(|o| steady_state(&o.queues.totals).0)
            .collect();
        if t[0] < t[1] && t[1] < t[2] {
            time_order += 1;
        }
        if q[0] < q[1] && q[1] < q[2] {
            queue_order += 1;
        }
        let show = |v: usize| {
            if v == usize::MAX {
                "never".to_owned()
            } else {
                v.to_string()
            }
        };
        rows.push(format!(
            "seed {seed}: slots {}/{}/{} queue {:.1}/{:.1}/{:.1}",
            show(t[0]),
            show(t[1]),
            show(t[2]),
            q[0],
            q[1],
            q[2]
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = time_order >= 8 && queue_order >= 8 && secs < 60.0;
    report.line(
        6,
        "baseline trends (admm/proximal/qca)",
        pass,
        format!(
            "slots-to-1% ordered on {time_order}/10, steady queue ordered on {queue_order}/10; {}",
            rows.join(", ")
        ),
        secs,
    );
}

fn criterion_7(report: &mut Report) {
    let start = Instant::now();
    let inst = generate_er_instance(&ErParams::new(20, 0.158, 8, 0)).unwrap();
    let mut queues = Vec::new();
    let mut converged = Vec::new();
    for tau in [1.0, 1.2, 1.6] {
        let p = AdmmParams { tau, ..params() };
        let mut solver = AdmmSolver::new(inst.clone(), p.clone()).unwrap();
        let mut opts = RunOptions::new(QUEUE_HORIZON, StopRule::Never);
        opts.diagnostics = false;
        let out = run(&mut solver, opts).unwrap();
        let x = solver.state().x.clone();
        solver.step().unwrap();
        let dx: Vec<f64> = solver
            .state()
            .x
            .iter()
            .zip(&x)
            .map(|(a, b)| a - b)
            .collect();
        // same rule as the residual stop: balanced flows and settled rates
        let ok = out.metrics.last().unwrap().residual <= p.tol_residual
            && norm(&dx) / norm(&x).max(1.0) <= p.tol_x;
        converged.push(ok);
        queues.push(steady_state(&out.queues.totals).0);
    }
    let nonincreasing = queues.windows(2).all(|w| w[1] <= w[0]);
    let all = converged.iter().all(|&c| c);
    let secs = start.elapsed().as_secs_f64();
    report.line(
        7,
        "tau sensitivity",
        nonincreasing && all && secs < 30.0,
        format!(
            "{} links, steady queue at tau 1.0/1.2/1.6: {:.3}/{:.3}/{:.3}, converged {converged:?}",
            inst.n_links(),
            queues[0],
            queues[1],
            queues[2]
        ),
        secs,
    );
}

fn criterion_8(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = [0.0f64; 4];
    for seed in 0..40 {
        let inst =
            generate_er_instance(&ErParams::new(rng.gen_range(4..=9), 0.5, 3, seed)).unwrap();
        let m = inst.incidence();
        for _ in 0..25 {
            let x: Vec<f64> = (0..inst.n_flows())
                .map(|_| rng.gen_range(0.0..2.0))
                .collect();
            let r: Vec<f64> = (0..inst.n_link_vars())
                .map(|_| rng.gen_range(0.0..1.0))
                .collect();
            let r_prev: Vec<f64> = (0..inst.n_link_vars())
                .map(|_| rng.gen_range(0.0..1.0))
                .collect();
            let lambda: Vec<f64> = (0..inst.n_rows())
                .map(|_| rng.gen_range(-3.0..3.0))
                .collect();
            let (rho, tau) = (rng.gen_range(0.1..5.0), rng.gen_range(0.5..1.618));

            let got = virtual_queue_update(&inst, &lambda, &x, &r, rho, tau).unwrap();
            let want = DVector::from_vec(lambda.clone())
                - (&m.b * DVector::from_vec(x.clone()) + &m.a * DVector::from_vec(r.clone()))
                    * (rho * tau);
            worst[0] = got
                .iter()
                .zip(want.iter())
                .fold(worst[0], |w, (a, b)| w.max((a - b).abs()));

            let dr = DVector::from_iterator(r.len(), r.iter().zip(&r_prev).map(|(a, b)| a - b));
            let rows = &m.a_s * dr;
            for f in 0..inst.n_flows() {
                let d = compute_delta_r(&inst, &r, &r_prev, f).unwrap();
                worst[2] = worst[2].max((d + rows[f]).abs());
            }

            let q = QueueState {
                q: (0..inst.n_rows())
                    .map(|_| rng.gen_range(0.0..2.0))
                    .collect(),
            };
            let s = queue_step(&inst, &q, &x, &r).unwrap();
            let delivered: f64 = s.delivered.iter().sum();
            let balance = s.next.total() - (q.total() + x.iter().sum::<f64>() - delivered);
            worst[3] = worst[3].max(balance.abs());
        }
        let p = AdmmParams {
            rho: rng.gen_range(0.2..3.0),
            tau: rng.gen_range(1.0..1.618),
            ..params()
        };
        let (rho, tau) = (p.rho, p.tau);
        let mut solver = AdmmSolver::new(inst.clone(), p).unwrap();
        for _ in 0..100 {
            solver.step().unwrap();
            let s = solver.state();
            let res = norm(&inst.conservation_residual(&s.x, &s.r).unwrap());
            let dl: Vec<f64> = s
                .lambda
                .iter()
                .zip(&s.lambda_prev)
                .map(|(a, b)| a - b)
                .collect();
            worst[1] = worst[1].max((res - norm(&dl) / (rho * tau)).abs());
        }
    }
    let pass = worst.iter().all(|&w| w <= 1e-9);
    report.line(
        8,
        "algebraic identities",
        pass,
        format!(
            "dual step {:.1e}, residual vs dual change {:.1e}, Δr vs source rows {:.1e}, queue balance {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
        start.elapsed().as_secs_f64(),
    );
}

fn main() -> ExitCode {
    let mut report = Report { failed: 0 };
    let runs = linear_runs();
    criterion_1(&mut report, &runs);
    criterion_2(&mut report, &runs);
    criterion_3(&mut report);
    criterion_4(&mut report);
    criterion_5(&mut report, &runs);
    criterion_6(&mut report);
    criterion_7(&mut report);
    criterion_8(&mut report);
    if report.failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 8 criteria fail", report.failed);
        ExitCode::FAILURE
    }
}
