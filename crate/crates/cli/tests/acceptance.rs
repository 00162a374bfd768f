//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line (visible with `--nocapture`, or on failure).

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use milo_core::autodiff::{grad_check, NodeId, Tape};
use milo_core::baselines::{
    brute_force_oracle, solve_relaxation, OracleConfig, RelaxationConfig,
};
use milo_core::correction::{
    lt_correct, rc_correct, rs_round, scan_lt_max_slope, scan_rc_gradient_lipschitz,
    CorrectionConfig, Method,
};
use milo_core::net::{hidden_width_for, init_mlp, MlpSpec};
use milo_core::problems::{build_family, objective, sample_instances, violation, Family};
use milo_core::projection::{
    descent_diagnostics, k_epsilon, project, ProjectionConfig, QuadraticFeasibility,
};
use milo_core::rng::Rng;
use milo_core::training::{
    evaluate, predict_relaxed, train, Dataset, TrainingConfig, FEASIBILITY_TOLERANCE,
};
use milo_core::{Result, TensorValue};

fn report(criterion: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {status} ({detail})");
    assert!(ok, "criterion {criterion} FAIL ({detail})");
}

// --- criterion 1: gradient correctness ---

const SMOOTH_OPS: &[&str] = &[
    "add", "sub", "mul", "div", "matmul", "matvec", "transpose", "relu", "sigmoid", "sin",
    "square", "sqrt", "scale", "add_const", "sum", "mean", "pos_part_l1", "sum_axis1",
    "mean_axis0", "concat_cols", "slice_cols",
];

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> TensorValue {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform_in(lo, hi)).collect();
    TensorValue::matrix(rows, cols, data).unwrap()
}

/// Random matrix bounded away from zero, for ops with a kink or pole there.
fn random_offzero(rng: &mut Rng, rows: usize, cols: usize) -> TensorValue {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let mag = rng.uniform_in(0.2, 2.0);
            if rng.uniform() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect();
    TensorValue::matrix(rows, cols, data).unwrap()
}

fn inputs_for(kind: &str, rng: &mut Rng) -> Vec<TensorValue> {
    match kind {
        "add" | "sub" | "mul" => vec![
            random_matrix(rng, 2, 3, -2.0, 2.0),
            random_matrix(rng, 2, 3, -2.0, 2.0),
        ],
        "div" => vec![
            random_matrix(rng, 2, 3, -2.0, 2.0),
            random_offzero(rng, 2, 3),
        ],
        "matmul" => vec![
            random_matrix(rng, 2, 3, -1.5, 1.5),
            random_matrix(rng, 3, 2, -1.5, 1.5),
        ],
        "matvec" => vec![
            random_matrix(rng, 2, 3, -1.5, 1.5),
            TensorValue::vector((0..3).map(|_| rng.uniform_in(-1.5, 1.5)).collect()).unwrap(),
        ],
        "relu" | "pos_part_l1" => vec![random_offzero(rng, 2, 3)],
        "sqrt" => vec![random_matrix(rng, 2, 3, 0.5, 3.0)],
        "concat_cols" => vec![
            random_matrix(rng, 2, 2, -2.0, 2.0),
            random_matrix(rng, 2, 3, -2.0, 2.0),
        ],
        _ => vec![random_matrix(rng, 2, 3, -2.0, 2.0)],
    }
}

fn graph_for(kind: &str, tape: &mut Tape, ids: &[NodeId]) -> Result<NodeId> {
    let composite = |tape: &mut Tape, node: NodeId| {
        let s = tape.sin(node);
        Ok(tape.sum(s))
    };
    match kind {
        "add" => {
            let c = tape.add(ids[0], ids[1])?;
            composite(tape, c)
        }
        "sub" => {
            let c = tape.sub(ids[0], ids[1])?;
            composite(tape, c)
        }
        "mul" => {
            let c = tape.mul(ids[0], ids[1])?;
            composite(tape, c)
        }
        "div" => {
            let c = tape.div(ids[0], ids[1])?;
            composite(tape, c)
        }
        "matmul" => {
            let c = tape.matmul(ids[0], ids[1])?;
            composite(tape, c)
        }
        "matvec" => {
            let c = tape.matvec(ids[0], ids[1])?;
            composite(tape, c)
        }
        "transpose" => {
            let c = tape.transpose(ids[0])?;
            composite(tape, c)
        }
        "relu" => {
            let c = tape.relu(ids[0]);
            composite(tape, c)
        }
        "sigmoid" => {
            let c = tape.sigmoid(ids[0]);
            composite(tape, c)
        }
        "sin" => {
            let c = tape.sin(ids[0]);
            composite(tape, c)
        }
        "square" => {
            let c = tape.square(ids[0]);
            composite(tape, c)
        }
        "sqrt" => {
            let c = tape.sqrt(ids[0]);
            composite(tape, c)
        }
        "scale" => {
            let c = tape.scale(ids[0], 1.7);
            composite(tape, c)
        }
        "add_const" => {
            let c = tape.add_const(ids[0], 0.3);
            composite(tape, c)
        }
        "sum" => {
            let c = tape.sum(ids[0]);
            Ok(tape.square(c))
        }
        "mean" => {
            let c = tape.mean(ids[0]);
            Ok(tape.square(c))
        }
        "pos_part_l1" => {
            let c = tape.pos_part_l1(ids[0]);
            Ok(tape.square(c))
        }
        "sum_axis1" => {
            let c = tape.sum_axis1(ids[0])?;
            composite(tape, c)
        }
        "mean_axis0" => {
            let c = tape.mean_axis0(ids[0])?;
            composite(tape, c)
        }
        "concat_cols" => {
            let c = tape.concat_cols(ids[0], ids[1])?;
            composite(tape, c)
        }
        "slice_cols" => {
            let c = tape.slice_cols(ids[0], 1, 3)?;
            composite(tape, c)
        }
        other => panic!("unknown op kind {other}"),
    }
}

#[test]
fn criterion_1_gradient_correctness() {
    let t0 = Instant::now();
    let mut worst = 0.0_f64;
    for (k, kind) in SMOOTH_OPS.iter().enumerate() {
        for trial in 0..100u64 {
            let mut rng = Rng::derive(0xC1 + k as u64, trial);
            let inputs = inputs_for(kind, &mut rng);
            let err = grad_check(|tape, ids| graph_for(kind, tape, ids), &inputs, 1e-5)
                .unwrap_or(f64::INFINITY);
            if err > worst {
                worst = err;
            }
        }
    }
    let elapsed = t0.elapsed();
    report(
        "1 (gradient correctness)",
        worst <= 1e-5 && elapsed < Duration::from_secs(10),
        &format!(
            "{} ops x 100 graphs, worst rel err {worst:.2e}, {:.1}s",
            SMOOTH_OPS.len(),
            elapsed.as_secs_f64()
        ),
    );
}

// --- criterion 2: integrality ---

#[test]
fn criterion_2_integrality() {
    let t0 = Instant::now();
    let coeffs = build_family(Family::Iqp, 3, 2, 7).unwrap();
    let delta_spec = MlpSpec::delta(coeffs.n_dec() + coeffs.n_xi, 8, coeffs.n_dec()).unwrap();
    let mut ok = true;
    let mut checked = 0usize;
    for trial in 0..10_000u64 {
        let mut rng = Rng::derive(0xC2, trial);
        let instance = &sample_instances(&coeffs, 1, rng.next_u64())[0];
        let mut xbar: Vec<f64> = (0..coeffs.n_dec())
            .map(|_| rng.uniform_in(-5.0, 5.0))
            .collect();
        if trial % 10 == 0 {
            // Exercise exactly integral relaxed points too.
            for v in xbar.iter_mut() {
                *v = v.round();
            }
        }
        let delta = init_mlp(&delta_spec, rng.next_u64());
        for method in [Method::Rc, Method::Lt, Method::Rs, Method::Rl] {
            let cfg = CorrectionConfig::new(method);
            let x_z = match method {
                Method::Rc => {
                    rc_correct(&coeffs, &delta, &cfg, &xbar, instance, rng.next_u64())
                        .unwrap()
                        .xhat
                        .x_z
                }
                Method::Lt => {
                    lt_correct(&coeffs, &delta, &cfg, &xbar, instance)
                        .unwrap()
                        .xhat
                        .x_z
                }
                Method::Rs | Method::Rl => rs_round(&coeffs, &xbar).unwrap().x_z,
            };
            for (i, &z) in x_z.iter().enumerate() {
                let floor = xbar[coeffs.n_r + i].floor();
                if z.fract() != 0.0 || (z != floor && z != floor + 1.0) {
                    ok = false;
                }
                checked += 1;
            }
        }
    }
    let elapsed = t0.elapsed();
    report(
        "2 (integrality)",
        ok && elapsed < Duration::from_secs(30),
        &format!(
            "{checked} corrected entries over 10000 triples x 4 methods, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// --- criterion 3: surrogate Lipschitz bounds ---

#[test]
fn criterion_3_surrogate_lipschitz() {
    let t0 = Instant::now();
    let rc_max = scan_rc_gradient_lipschitz(1.0, -12.0, 12.0, 1e-4);
    let lt_max = scan_lt_max_slope(10.0, -1.0, 1.0, 1e-4);
    let elapsed = t0.elapsed();
    report(
        "3 (surrogate Lipschitz bounds)",
        rc_max <= 0.0962 + 1e-4
            && (lt_max - 2.5).abs() <= 1e-6
            && elapsed < Duration::from_secs(5),
        &format!(
            "RC scan max {rc_max:.6} <= 0.0962+1e-4, LT max slope {lt_max:.7}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// --- criteria 4 & 5: descent diagnostics and the iteration bound ---

fn convex_suite() -> Vec<(QuadraticFeasibility, Vec<f64>, f64)> {
    let mut rng = Rng::new(0xC4);
    (0..20)
        .map(|_| {
            let prob = QuadraticFeasibility::random(4, &mut rng);
            let x0 = prob.infeasible_start(&mut rng);
            let eta = 1.0 / prob.lipschitz_hat(prob.violation(&x0));
            (prob, x0, eta)
        })
        .collect()
}

#[test]
fn criterion_4_descent_diagnostics() {
    let t0 = Instant::now();
    let mut ok = true;
    let mut detail = String::new();
    for (i, (prob, x0, eta)) in convex_suite().iter().enumerate() {
        let (v, g) = prob.descend(x0, *eta, 1000);
        let rep = descent_diagnostics(&v, &g, *eta).unwrap();
        if !(rep.monotone && rep.bound_holds_all_k) {
            ok = false;
            detail = format!(
                "problem {i}: monotone={} bound_all_k={}",
                rep.monotone, rep.bound_holds_all_k
            );
        }
    }
    let elapsed = t0.elapsed();
    if detail.is_empty() {
        detail = format!(
            "20 problems, monotone + min-grad bound for all K<=1000, {:.1}s",
            elapsed.as_secs_f64()
        );
    }
    report(
        "4 (descent diagnostics)",
        ok && elapsed < Duration::from_secs(60),
        &detail,
    );
}

#[test]
fn criterion_5_iteration_bound() {
    let t0 = Instant::now();
    let mut ok = true;
    let mut detail = String::new();
    for (i, (prob, x0, eta)) in convex_suite().iter().enumerate() {
        let v0 = prob.violation(x0);
        for eps in [1e-1, 1e-2] {
            let bound = k_epsilon(v0, *eta, eps);
            // Stop at the first entry; only iterating to the bound without
            // an entry is a failure.
            let mut x = x0.clone();
            let mut entry = None;
            for k in 0..=bound {
                if prob.violation(&x) < eps {
                    entry = Some(k);
                    break;
                }
                let g = prob.gradient(&x);
                for (xi, gi) in x.iter_mut().zip(&g) {
                    *xi -= eta * gi;
                }
            }
            if entry.is_none() {
                ok = false;
                detail = format!("problem {i} eps {eps}: no entry within bound {bound}");
            }
        }
    }
    let elapsed = t0.elapsed();
    if detail.is_empty() {
        detail = format!(
            "20 problems x eps {{0.1, 0.01}}, first entry within ceil(2V0/(eta*eps)), {:.1}s",
            elapsed.as_secs_f64()
        );
    }
    report(
        "5 (iteration bound)",
        ok && elapsed < Duration::from_secs(60),
        &detail,
    );
}

// --- criteria 6-9: end-to-end training runs ---

struct ProjectedStats {
    feasible: usize,
    worst_iterations: usize,
    objective_mean: f64,
    mean_time_s: f64,
}

/// Projects every test instance through the learned correction and gathers
/// post-projection feasibility, worst iteration count, and mean objective.
fn projected_stats(
    coeffs: &milo_core::problems::CoefficientSet,
    test: &[milo_core::problems::ParametricInstance],
    weights: &milo_core::training::ModelWeights,
    ccfg: &CorrectionConfig,
    pcfg: &ProjectionConfig,
) -> ProjectedStats {
    let mut eval_cfg = ccfg.clone();
    eval_cfg.noise = false;
    let mut feasible = 0usize;
    let mut worst = 0usize;
    let mut obj_sum = 0.0;
    let mut time_sum = 0.0;
    for inst in test {
        let t0 = Instant::now();
        let xbar = predict_relaxed(coeffs, &weights.pi, inst).unwrap();
        let (sol, rep) = project(
            coeffs,
            weights.delta.as_ref().unwrap(),
            &eval_cfg,
            pcfg,
            &xbar,
            inst,
        )
        .unwrap();
        time_sum += t0.elapsed().as_secs_f64();
        if violation(coeffs, inst, &sol).unwrap() <= FEASIBILITY_TOLERANCE {
            feasible += 1;
        }
        worst = worst.max(rep.iterations);
        obj_sum += objective(coeffs, inst, &sol).unwrap();
    }
    ProjectedStats {
        feasible,
        worst_iterations: worst,
        objective_mean: obj_sum / test.len() as f64,
        mean_time_s: time_sum / test.len() as f64,
    }
}

#[test]
fn criterion_6_rosenbrock_end_to_end() {
    let t0 = Instant::now();
    let coeffs = build_family(Family::Rosenbrock2d, 2, 4, 0).unwrap();
    let ds = Dataset::sample(&coeffs, 8000, 1000, 100, 0);
    let hidden = 16;
    let pi = MlpSpec::pi(coeffs.n_xi, hidden, coeffs.n_dec()).unwrap();
    let delta = MlpSpec::delta(coeffs.n_dec() + coeffs.n_xi, hidden, coeffs.n_dec()).unwrap();
    let mut ok = true;
    let mut notes: Vec<String> = Vec::new();
    let mut rc_projected_mean = f64::NAN;
    for method in [Method::Rc, Method::Lt] {
        let ccfg = CorrectionConfig::new(method);
        let tcfg = TrainingConfig {
            max_epochs: 200,
            patience: 50,
            lambda: 100.0,
            ..Default::default()
        };
        let (weights, _) = train(&coeffs, &ds, &pi, Some(&delta), &ccfg, &tcfg).unwrap();
        let pre = evaluate(&coeffs, &ds.test, &weights, &ccfg, FEASIBILITY_TOLERANCE).unwrap();
        if pre.feasible_fraction < 0.90 {
            ok = false;
            notes.push(format!(
                "{method:?} pre-projection feasibility {:.0}% < 90%",
                100.0 * pre.feasible_fraction
            ));
        }
        let post = projected_stats(&coeffs, &ds.test, &weights, &ccfg, &ProjectionConfig::default());
        if post.feasible != ds.test.len() || post.worst_iterations > 1000 {
            ok = false;
            notes.push(format!(
                "{method:?} post-projection {}/{} feasible, worst {} iterations",
                post.feasible,
                ds.test.len(),
                post.worst_iterations
            ));
        }
        if method == Method::Rc {
            rc_projected_mean = post.objective_mean;
        }
    }
    // Brute-force oracle mean on the same test set, enumerating around the
    // relaxed optimum.
    let rcfg = RelaxationConfig::default();
    let ocfg = OracleConfig::default();
    let mut oracle_sum = 0.0;
    for inst in &ds.test {
        let center = solve_relaxation(&coeffs, inst, &rcfg).unwrap();
        match brute_force_oracle(&coeffs, inst, &center, &ocfg, &rcfg).unwrap() {
            Some(sol) => oracle_sum += objective(&coeffs, inst, &sol).unwrap(),
            None => {
                ok = false;
                notes.push("oracle found no feasible assignment".into());
            }
        }
    }
    let oracle_mean = oracle_sum / ds.test.len() as f64;
    if !(rc_projected_mean <= 1.5 * oracle_mean) {
        ok = false;
        notes.push(format!(
            "RC-P mean {rc_projected_mean:.3} > 1.5 x oracle mean {oracle_mean:.3}"
        ));
    }
    let elapsed = t0.elapsed();
    let detail = if notes.is_empty() {
        format!(
            "RC+LT pre>=90%, post 100%, RC-P mean {rc_projected_mean:.3} <= 1.5 x oracle {oracle_mean:.3}, {:.0}s",
            elapsed.as_secs_f64()
        )
    } else {
        notes.join("; ")
    };
    report(
        "6 (2-D Rosenbrock end-to-end)",
        ok && elapsed < Duration::from_secs(20 * 60),
        &detail,
    );
}

/// Objective value of the continuous relaxation's (non-integral) solution.
fn relaxed_objective(
    coeffs: &milo_core::problems::CoefficientSet,
    instance: &milo_core::problems::ParametricInstance,
    x: &[f64],
) -> f64 {
    use milo_core::problems::{objective_node, xi_matrix};
    let xi = xi_matrix(coeffs, std::slice::from_ref(instance)).unwrap();
    let mut tape = Tape::new();
    let node = tape.constant(TensorValue::matrix(1, x.len(), x.to_vec()).unwrap());
    let obj = objective_node(&mut tape, coeffs, &xi, node).unwrap();
    tape.value(obj).data()[0]
}

#[test]
fn criteria_7_and_9_iqp_desk_run_and_ablation() {
    let t0 = Instant::now();
    let coeffs = build_family(Family::Iqp, 20, 20, 0).unwrap();
    let ds = Dataset::sample(&coeffs, 8000, 1000, 100, 0);
    let hidden = hidden_width_for(coeffs.family, 20, 20);
    let pi = MlpSpec::pi(coeffs.n_xi, hidden, coeffs.n_dec()).unwrap();
    let delta = MlpSpec::delta(coeffs.n_dec() + coeffs.n_xi, hidden, coeffs.n_dec()).unwrap();
    let mut ok7 = true;
    let mut ok9 = true;
    let mut notes7: Vec<String> = Vec::new();
    let mut notes9: Vec<String> = Vec::new();

    let mut pre_feas = [0.0f64; 3];
    let mut obj_mean = [0.0f64; 3];
    let mut rc_post = None;
    for (slot, method) in [Method::Rc, Method::Rl, Method::Rs].into_iter().enumerate() {
        let ccfg = CorrectionConfig::new(method);
        let tcfg = TrainingConfig {
            max_epochs: 150,
            lambda: 100.0,
            ..Default::default()
        };
        let dspec = if method.uses_delta() { Some(&delta) } else { None };
        let (weights, _) = train(&coeffs, &ds, &pi, dspec, &ccfg, &tcfg).unwrap();
        let pre = evaluate(&coeffs, &ds.test, &weights, &ccfg, FEASIBILITY_TOLERANCE).unwrap();
        pre_feas[slot] = pre.feasible_fraction;
        obj_mean[slot] = pre.objective_mean;
        if method == Method::Rc {
            rc_post = Some(projected_stats(&coeffs, &ds.test, &weights, &ccfg, &ProjectionConfig::default()));
        }
    }
    let [rc_pre, rl_pre, rs_pre] = pre_feas;
    let [rc_obj, _rl_obj, rs_obj] = obj_mean;

    // Criterion 7: RC quality and speed against the continuous relaxation.
    if rc_pre < 0.85 {
        ok7 = false;
        notes7.push(format!("RC pre-projection feasibility {:.0}% < 85%", 100.0 * rc_pre));
    }
    let post = rc_post.unwrap();
    if post.feasible != ds.test.len() {
        ok7 = false;
        notes7.push(format!(
            "RC post-projection {}/{} feasible",
            post.feasible,
            ds.test.len()
        ));
    }
    let rcfg = RelaxationConfig::default();
    let relax_mean = ds
        .test
        .iter()
        .map(|inst| relaxed_objective(&coeffs, inst, &solve_relaxation(&coeffs, inst, &rcfg).unwrap()))
        .sum::<f64>()
        / ds.test.len() as f64;
    let rel_gap = (rc_obj - relax_mean) / relax_mean.abs();
    if !(rc_obj < 0.0 && rel_gap <= 0.40) {
        ok7 = false;
        notes7.push(format!(
            "RC obj mean {rc_obj:.3} vs relaxation {relax_mean:.3} (gap {:.0}%)",
            100.0 * rel_gap
        ));
    }
    if post.mean_time_s > 0.050 {
        ok7 = false;
        notes7.push(format!(
            "per-instance inference {:.4}s > 50ms",
            post.mean_time_s
        ));
    }
    let elapsed = t0.elapsed();
    let detail7 = if notes7.is_empty() {
        format!(
            "RC pre {:.0}%, post 100%, obj {rc_obj:.3} within {:.0}% of relaxation {relax_mean:.3}, {:.1}ms/inst, {:.0}s",
            100.0 * rc_pre,
            100.0 * rel_gap,
            1e3 * post.mean_time_s,
            elapsed.as_secs_f64()
        )
    } else {
        notes7.join("; ")
    };
    let ok7 = ok7 && elapsed < Duration::from_secs(30 * 60);

    // Criterion 9: ablation orderings on the same runs.


    if !(rl_pre < rc_pre) {
        ok9 = false;
        notes9.push(format!(
            "RL pre-feasibility {:.0}% not strictly below RC {:.0}%",
            100.0 * rl_pre,
            100.0 * rc_pre
        ));
    }
    // "Comparable" feasibility: within 10 percentage points of RC.
    if (rs_pre - rc_pre).abs() > 0.10 {
        ok9 = false;
        notes9.push(format!(
            "RS feasibility {:.0}% not comparable to RC {:.0}%",
            100.0 * rs_pre,
            100.0 * rc_pre
        ));
    }

    if !(rs_obj > rc_obj) {
        ok9 = false;
        notes9.push(format!(
            "RS obj mean {rs_obj:.3} not worse than RC {rc_obj:.3}"
        ));
    }
    let detail9 = if notes9.is_empty() {
        format!(
            "RL {:.0}% < RC {:.0}%; RS {:.0}% comparable, obj {rs_obj:.3} worse than RC {rc_obj:.3}",
            100.0 * rl_pre,
            100.0 * rc_pre,
            100.0 * rs_pre
        )
    } else {
        notes9.join("; ")
    };
    // Print both verdict lines before asserting so a criterion-7 failure
    // does not hide criterion 9's outcome (they share one training run).
    let line7 = format!(
        "criterion 7 (20x20 IQP desk run): {} ({detail7})",
        if ok7 { "PASS" } else { "FAIL" }
    );
    let line9 = format!(
        "criterion 9 (ablation ordering): {} ({detail9})",
        if ok9 { "PASS" } else { "FAIL" }
    );
    println!("{line7}");
    println!("{line9}");
    assert!(ok7, "{line7}");
    assert!(ok9, "{line9}");
}

#[test]
fn criterion_8_penalty_weight_trend() {
    let t0 = Instant::now();
    let coeffs = build_family(Family::Inp, 20, 20, 0).unwrap();
    let ds = Dataset::sample(&coeffs, 8000, 1000, 100, 0);
    let hidden = hidden_width_for(coeffs.family, 20, 20);
    let pi = MlpSpec::pi(coeffs.n_xi, hidden, coeffs.n_dec()).unwrap();
    let delta = MlpSpec::delta(coeffs.n_dec() + coeffs.n_xi, hidden, coeffs.n_dec()).unwrap();
    // Weak penalties leave the mapping far outside the feasible set, so the
    // projection gets a deeper iteration budget than the default.
    let pcfg = ProjectionConfig {
        max_iterations: 10_000,
        ..Default::default()
    };
    let mut ok = true;
    let mut notes: Vec<String> = Vec::new();
    let lambdas = [0.1, 10.0, 1000.0];
    let mut feas = Vec::new();
    let mut objs = Vec::new();
    for &lambda in &lambdas {
        let ccfg = CorrectionConfig::new(Method::Rc);
        let tcfg = TrainingConfig {
            max_epochs: 60,
            lambda,
            ..Default::default()
        };
        let (weights, _) = train(&coeffs, &ds, &pi, Some(&delta), &ccfg, &tcfg).unwrap();
        let pre = evaluate(&coeffs, &ds.test, &weights, &ccfg, FEASIBILITY_TOLERANCE).unwrap();
        let post = projected_stats(&coeffs, &ds.test, &weights, &ccfg, &pcfg);
        if post.feasible != ds.test.len() {
            ok = false;
            notes.push(format!(
                "lambda {lambda}: post-projection {}/{} feasible",
                post.feasible,
                ds.test.len()
            ));
        }
        feas.push(pre.feasible_fraction);
        objs.push(pre.objective_mean);
    }
    if !(feas[0] <= feas[1] && feas[1] <= feas[2]) {
        ok = false;
        notes.push(format!("feasibility not non-decreasing: {feas:?}"));
    }
    if !(objs[0] <= objs[1] && objs[1] <= objs[2]) {
        ok = false;
        notes.push(format!("objective not non-improving: {objs:?}"));
    }
    let elapsed = t0.elapsed();
    let detail = if notes.is_empty() {
        format!(
            "feasibility {:.0}%/{:.0}%/{:.0}%, obj {:.2}/{:.2}/{:.2} across lambda {{0.1,10,1000}}, post 100%, {:.0}s",
            100.0 * feas[0],
            100.0 * feas[1],
            100.0 * feas[2],
            objs[0],
            objs[1],
            objs[2],
            elapsed.as_secs_f64()
        )
    } else {
        notes.join("; ")
    };
    report(
        "8 (penalty-weight trend)",
        ok && elapsed < Duration::from_secs(45 * 60),
        &detail,
    );
}

// --- criterion 10: format round-trip and CLI reproducibility ---

fn milo_ok(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_milo"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .expect("failed to spawn milo");
    assert!(
        out.status.success(),
        "milo {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn generate_into(dir: &Path) {
    milo_ok(&[
        "generate",
        "--problem",
        "rb2d",
        "--n",
        "1",
        "--m",
        "0",
        "--seed",
        "11",
        "--train",
        "40",
        "--val",
        "10",
        "--test",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn criterion_10_round_trip_and_reproducibility() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut notes: Vec<String> = Vec::new();

    // Container write -> read -> write is bit-identical.
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    generate_into(&a);
    generate_into(&b);
    for file in ["coefficients.bin", "train.bin", "val.bin", "test.bin"] {
        let bytes = std::fs::read(a.join(file)).unwrap();
        let parsed = milo_cli::container::Container::from_bytes(&bytes).unwrap();
        if parsed.to_bytes().unwrap() != bytes {
            ok = false;
            notes.push(format!("{file} not bit-identical after read->write"));
        }
        if std::fs::read(b.join(file)).unwrap() != bytes {
            ok = false;
            notes.push(format!("{file} differs across identical generate runs"));
        }
    }

    // JSON artifacts and metrics reproducibility from identical flags+seed.
    let model = tmp.path().join("model");
    milo_ok(&[
        "train",
        "--data",
        a.to_str().unwrap(),
        "--method",
        "lt",
        "--epochs",
        "2",
        "--batch",
        "8",
        "--seed",
        "2",
        "--out",
        model.to_str().unwrap(),
    ]);
    let weights = model.join("weights.bin");
    let wb = std::fs::read(&weights).unwrap();
    let wparsed = milo_cli::container::Container::from_bytes(&wb).unwrap();
    if wparsed.to_bytes().unwrap() != wb {
        ok = false;
        notes.push("weights.bin not bit-identical after read->write".into());
    }
    for run in ["e1", "e2"] {
        milo_ok(&[
            "eval",
            "--data",
            a.to_str().unwrap(),
            "--weights",
            weights.to_str().unwrap(),
            "--method",
            "lt",
            "--project",
            "on",
            "--out",
            tmp.path().join(run).to_str().unwrap(),
        ]);
    }
    let m1 = std::fs::read(tmp.path().join("e1/metrics.json")).unwrap();
    let m2 = std::fs::read(tmp.path().join("e2/metrics.json")).unwrap();
    if m1 != m2 {
        ok = false;
        notes.push("metrics.json differs across identical eval runs".into());
    }
    let value: serde_json::Value = serde_json::from_slice(&m1).unwrap();
    let rewritten = serde_json::to_vec(&value).unwrap();
    if serde_json::from_slice::<serde_json::Value>(&rewritten).unwrap() != value {
        ok = false;
        notes.push("metrics.json does not survive JSON round-trip".into());
    }

    let elapsed = t0.elapsed();
    let detail = if notes.is_empty() {
        format!(
            "5 containers + metrics JSON bit-identical, {:.1}s",
            elapsed.as_secs_f64()
        )
    } else {
        notes.join("; ")
    };
    report(
        "10 (format round-trip)",
        ok && elapsed < Duration::from_secs(10),
        &detail,
    );
}
