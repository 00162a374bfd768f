//! Non-learning baselines: a first-order continuous-relaxation solver, the
//! round-the-relaxation baseline, and a windowed brute-force integer oracle
//! for small instances.
//!
//! The relaxation is solved by an escalating quadratic penalty: each round
//! minimizes `f/mu + ||g_+||_2^2` by gradient descent (warm-started from the
//! previous round), then `mu` grows. A short pure-violation polish pushes
//! boundary solutions the last sliver into the feasible region.

use crate::autodiff::{NodeId, Tape};
use crate::error::{CoreError, Result};
use crate::problems::{
    constraints_node, objective_node, xi_matrix, CoefficientSet, MixedIntegerSolution,
    ParametricInstance,
};
use crate::tensor::TensorValue;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationConfig {
    pub mu0: f64,
    pub growth: f64,
    pub rounds: usize,
    pub inner_steps: usize,
    pub learning_rate: f64,
    pub tolerance: f64,
    /// Number of descent starts (origin plus seeded random points); the best
    /// finisher wins. Nonconvex objectives need more than one basin probe.
    pub starts: usize,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            growth: 10.0,
            rounds: 6,
            inner_steps: 500,
            learning_rate: 0.01,
            tolerance: 1e-6,
            starts: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Half-width of the integer search window around the rounded center.
    pub window: i64,
    /// Maximum number of integer assignments to enumerate.
    pub cap: u64,
    /// Feasibility tolerance for accepting an assignment.
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            window: 2,
            cap: 1_000_000,
            tolerance: 1e-6,
        }
    }
}

/// Builds the full solution row from the free variables. Either all
/// variables are free, or the integer block is pinned to constants.
fn sol_from_free(
    tape: &mut Tape,
    free: NodeId,
    fixed_z: Option<&[f64]>,
) -> Result<NodeId> {
    match fixed_z {
        None => Ok(free),
        Some(z) => {
            let zc = tape.constant(TensorValue::matrix(1, z.len(), z.to_vec())?);
            tape.concat_cols(free, zc)
        }
    }
}

fn full_solution(free: &[f64], fixed_z: Option<&[f64]>) -> Vec<f64> {
    match fixed_z {
        None => free.to_vec(),
        Some(z) => {
            let mut out = free.to_vec();
            out.extend_from_slice(z);
            out
        }
    }
}

fn violation_at(
    coeffs: &CoefficientSet,
    xi: &TensorValue,
    sol: &[f64],
) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.constant(TensorValue::matrix(1, sol.len(), sol.to_vec())?);
    let g = constraints_node(&mut tape, coeffs, xi, s)?;
    Ok(tape.value(g).iter().map(|v| v.max(0.0)).sum())
}

/// Value and gradient of the round objective `f/mu + ||g_+||^2` over the
/// free variables.
fn penalty_value_grad(
    coeffs: &CoefficientSet,
    xi: &TensorValue,
    x: &[f64],
    fixed_z: Option<&[f64]>,
    mu: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let xin = tape.input(TensorValue::matrix(1, x.len(), x.to_vec())?);
    let sol = sol_from_free(&mut tape, xin, fixed_z)?;
    let obj = objective_node(&mut tape, coeffs, xi, sol)?;
    let obj_s = tape.sum(obj);
    let obj_scaled = tape.scale(obj_s, 1.0 / mu);
    let g = constraints_node(&mut tape, coeffs, xi, sol)?;
    let gp = tape.relu(g);
    let gp2 = tape.square(gp);
    let pen = tape.sum(gp2);
    let total = tape.add(obj_scaled, pen)?;
    let value = tape.value(total).scalar_value()?;
    let grads = tape.backward(total)?;
    Ok((value, grads.wrt(xin, &tape).data().to_vec()))
}

/// Penalty-method descent over the free variables; `fixed_z` pins the
/// integer block for the oracle's per-assignment continuous solves.
///
/// The inner minimizer is gradient descent with Barzilai-Borwein step
/// sizes, safeguarded by Armijo backtracking so poorly conditioned or
/// nonconvex objectives cannot diverge.
fn objective_at(coeffs: &CoefficientSet, xi: &TensorValue, sol: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.constant(TensorValue::matrix(1, sol.len(), sol.to_vec())?);
    let obj = objective_node(&mut tape, coeffs, xi, s)?;
    tape.value(obj).scalar_value()
}

/// Multi-start wrapper around the single-start descent. Candidates are
/// ranked feasible-first, then by objective (violation as the tie-breaker
/// when nothing reaches tolerance), so one bad basin cannot hide a better
/// one on nonconvex objectives.
fn penalized_descent(
    coeffs: &CoefficientSet,
    instance: &ParametricInstance,
    dim_free: usize,
    fixed_z: Option<&[f64]>,
    cfg: &RelaxationConfig,
) -> Result<Vec<f64>> {
    let xi = xi_matrix(coeffs, std::slice::from_ref(instance))?;
    let mut best: Option<(bool, f64, Vec<f64>)> = None;
    let mut last_err: Option<CoreError> = None;
    let mut rng = crate::rng::Rng::new(0xBA5E_11);
    // Origin first, then mirrored random pairs (s, -s): the mirror
    // guarantees both sign patterns get probed even in low dimensions.
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; dim_free]];
    while starts.len() < cfg.starts.max(1) {
        let s: Vec<f64> = (0..dim_free).map(|_| rng.uniform_in(-4.0, 4.0)).collect();
        starts.push(s.iter().map(|v| -v).collect());
        starts.push(s);
    }
    starts.truncate(cfg.starts.max(1));
    for start in starts {
        let x = match penalized_descent_from(coeffs, &xi, start, fixed_z, cfg) {
            Ok(x) => x,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let sol = full_solution(&x, fixed_z);
        let v = violation_at(coeffs, &xi, &sol)?;
        let feasible = v <= cfg.tolerance;
        let score = if feasible {
            objective_at(coeffs, &xi, &sol)?
        } else {
            v
        };
        let better = match &best {
            None => true,
            Some((bf, bs, _)) => {
                if feasible != *bf {
                    feasible
                } else {
                    score < *bs
                }
            }
        };
        if better {
            best = Some((feasible, score, x));
        }
    }
    match best {
        Some((_, _, x)) => Ok(x),
        None => Err(last_err.unwrap_or(CoreError::RelaxationDiverged)),
    }
}

fn penalized_descent_from(
    coeffs: &CoefficientSet,
    xi: &TensorValue,
    start: Vec<f64>,
    fixed_z: Option<&[f64]>,
    cfg: &RelaxationConfig,
) -> Result<Vec<f64>> {
    let dim_free = start.len();
    let mut x = start;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    for round in 0..cfg.rounds {
        let mu = cfg.mu0 * cfg.growth.powi(round as i32);
        let (mut value, mut grad) = penalty_value_grad(coeffs, &xi, &x, fixed_z, mu)?;
        if !value.is_finite() {
            return Err(CoreError::RelaxationDiverged);
        }
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for _ in 0..cfg.inner_steps {
            let grad_sq = dot(&grad, &grad);
            if grad_sq.sqrt() <= 1e-10 {
                break;
            }
            let mut alpha = match &prev {
                Some((dx, dg)) => {
                    let sy = dot(dx, dg);
                    let ss = dot(dx, dx);
                    if sy > 0.0 && ss.is_finite() && sy.is_finite() {
                        (ss / sy).clamp(1e-12, 1e8)
                    } else {
                        cfg.learning_rate
                    }
                }
                None => cfg.learning_rate,
            };
            let mut accepted = None;
            for _ in 0..50 {
                let cand: Vec<f64> =
                    x.iter().zip(&grad).map(|(xv, gv)| xv - alpha * gv).collect();
                let (cv, cg) = penalty_value_grad(coeffs, &xi, &cand, fixed_z, mu)?;
                if cv.is_finite() && cv <= value - 1e-4 * alpha * grad_sq {
                    accepted = Some((cand, cv, cg));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((cand, cv, cg)) = accepted else {
                // No acceptable step even after heavy shrinking: treat the
                // point as stationary for this round.
                break;
            };
            let dx: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
            let dg: Vec<f64> = cg.iter().zip(&grad).map(|(a, b)| a - b).collect();
            prev = Some((dx, dg));
            x = cand;
            value = cv;
            grad = cg;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::RelaxationDiverged);
        }
        if violation_at(coeffs, &xi, &full_solution(&x, fixed_z))? <= cfg.tolerance {
            break;
        }
    }
    // Pure-violation polish: penalty minimizers sit a hair outside active
    // boundaries; a few violation-descent steps push them inside.
    for _ in 0..1000 {
        let sol = full_solution(&x, fixed_z);
        if violation_at(coeffs, &xi, &sol)? == 0.0 {
            break;
        }
        let mut tape = Tape::new();
        let xin = tape.input(TensorValue::matrix(1, dim_free, x.clone())?);
        let snode = sol_from_free(&mut tape, xin, fixed_z)?;
        let g = constraints_node(&mut tape, coeffs, &xi, snode)?;
        let viol = tape.pos_part_l1(g);
        let grads = tape.backward(viol)?;
        let d = grads.wrt(xin, &tape);
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        // Step scaled to the current violation: Newton-like along the
        // violation gradient, clipped to the solver's learning rate.
        let v = tape.value(viol).scalar_value()?;
        let step = (v / (norm * norm)).min(cfg.learning_rate);
        for (xi_, gi) in x.iter_mut().zip(d.iter()) {
            *xi_ -= step * gi;
        }
    }
    Ok(x)
}

/// Approximate minimizer of the continuous relaxation (integrality ignored).
pub fn solve_relaxation(
    coeffs: &CoefficientSet,
    instance: &ParametricInstance,
    cfg: &RelaxationConfig,
) -> Result<Vec<f64>> {
    penalized_descent(coeffs, instance, coeffs.n_dec(), None, cfg)
}

/// Gradient norm of the final-round penalty objective `f/mu + ||g_+||^2` at
/// a point; the relaxation solver should leave this small.
pub fn stationarity_residual(
    coeffs: &CoefficientSet,
    instance: &ParametricInstance,
    x: &[f64],
    mu: f64,
) -> Result<f64> {
    let xi = xi_matrix(coeffs, std::slice::from_ref(instance))?;
    let mut tape = Tape::new();
    let xin = tape.input(TensorValue::matrix(1, x.len(), x.to_vec())?);
    let obj = objective_node(&mut tape, coeffs, &xi, xin)?;
    let obj_s = tape.sum(obj);
    let obj_scaled = tape.scale(obj_s, 1.0 / mu);
    let g = constraints_node(&mut tape, coeffs, &xi, xin)?;
    let gp = tape.relu(g);
    let gp2 = tape.square(gp);
    let pen = tape.sum(gp2);
    let total = tape.add(obj_scaled, pen)?;
    let grads = tape.backward(total)?;
    Ok(grads.wrt(xin, &tape).iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Round-the-relaxation baseline: nearest-integer rounding of the
/// approximate relaxation optimum.
pub fn rr_baseline(
    coeffs: &CoefficientSet,
    instance: &ParametricInstance,
    cfg: &RelaxationConfig,
) -> Result<MixedIntegerSolution> {
    let xbar = solve_relaxation(coeffs, instance, cfg)?;
    crate::correction::rs_round(coeffs, &xbar)
}

/// Exhaustive integer search in a window around the rounded center; the
/// continuous block is re-optimized per assignment. Returns the feasible
/// assignment with minimum objective (lexicographically smallest integer
/// vector on ties), or `None` if the window holds no feasible point.
pub fn brute_force_oracle(
    coeffs: &CoefficientSet,
    instance: &ParametricInstance,
    center: &[f64],
    ocfg: &OracleConfig,
    rcfg: &RelaxationConfig,
) -> Result<Option<MixedIntegerSolution>> {
    if center.len() != coeffs.n_dec() {
        return Err(CoreError::DimensionMismatch {
            context: format!(
                "oracle center has {} entries, family expects {}",
                center.len(),
                coeffs.n_dec()
            ),
        });
    }
    let n_z = coeffs.n_z;
    let width = 2 * ocfg.window as u128 + 1;
    let mut required: u128 = 1;
    for _ in 0..n_z {
        required = required.saturating_mul(width);
        if required > ocfg.cap as u128 {
            return Err(CoreError::EnumerationTooLarge {
                required,
                cap: ocfg.cap,
            });
        }
    }
    let base: Vec<f64> = center[coeffs.n_r..].iter().map(|v| v.round()).collect();
    let mut offsets = vec![-ocfg.window; n_z];
    let mut best: Option<(f64, MixedIntegerSolution)> = None;
    loop {
        let z: Vec<f64> = base
            .iter()
            .zip(&offsets)
            .map(|(b, o)| b + *o as f64)
            .collect();
        let sol = if coeffs.n_r > 0 {
            let x_r = penalized_descent(coeffs, instance, coeffs.n_r, Some(&z), rcfg)?;
            MixedIntegerSolution::new(x_r, z)?
        } else {
            MixedIntegerSolution::new(Vec::new(), z)?
        };
        let viol = crate::problems::violation(coeffs, instance, &sol)?;
        if viol <= ocfg.tolerance {
            let obj = crate::problems::objective(coeffs, instance, &sol)?;
            // Strict improvement keeps the first (lexicographically
            // smallest) assignment on ties.
            if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                best = Some((obj, sol));
            }
        }
        // Advance the odometer; most-significant digit first gives
        // lexicographic order over integer vectors.
        let mut digit = n_z;
        loop {
            if digit == 0 {
                return Ok(best.map(|(_, s)| s));
            }
            digit -= 1;
            if offsets[digit] < ocfg.window {
                offsets[digit] += 1;
                for o in offsets[digit + 1..].iter_mut() {
                    *o = -ocfg.window;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_family, sample_instances, violation, Family};

    /// 1-variable IQP with f = q/2 x^2 + p x and a single constraint
    /// a x <= b.
    fn one_var(q: f64, p: f64, a: f64, b: f64) -> (CoefficientSet, ParametricInstance) {
        let mut c = build_family(Family::Iqp, 1, 1, 0).unwrap();
        c.q = vec![q];
        c.p = vec![p];
        c.a = vec![a];
        (c, ParametricInstance { xi: vec![b] })
    }

    #[test]
    fn unconstrained_quadratic_minimum() {
        // f = (x - 1.4)^2 up to a constant: q = 2, p = -2.8; constraint
        // 0*x <= 1 is vacuous.
        let (c, inst) = one_var(2.0, -2.8, 0.0, 1.0);
        let x = solve_relaxation(&c, &inst, &RelaxationConfig::default()).unwrap();
        assert!((x[0] - 1.4).abs() <= 1e-4, "got {}", x[0]);
    }

    #[test]
    fn active_constraint_quadratic() {
        // min x^2 s.t. x >= 1, i.e. -x <= -1.
        let (c, inst) = one_var(2.0, 0.0, -1.0, -1.0);
        let x = solve_relaxation(&c, &inst, &RelaxationConfig::default()).unwrap();
        assert!((x[0] - 1.0).abs() <= 1e-3, "got {}", x[0]);
        let sol = MixedIntegerSolution::new(vec![], vec![x[0].round()]).unwrap();
        let _ = sol;
    }

    #[test]
    fn relaxation_reaches_stationarity_on_random_iqp() {
        let c = build_family(Family::Iqp, 5, 5, 2).unwrap();
        let cfg = RelaxationConfig::default();
        for inst in sample_instances(&c, 3, 7) {
            let x = solve_relaxation(&c, &inst, &cfg).unwrap();
            let mu = cfg.mu0 * cfg.growth.powi(cfg.rounds as i32 - 1);
            let r = stationarity_residual(&c, &inst, &x, mu).unwrap();
            assert!(r <= 1e-3, "residual {r}");
        }
    }

    #[test]
    fn relaxation_terminates_feasible_when_possible() {
        let c = build_family(Family::Iqp, 4, 4, 5).unwrap();
        let cfg = RelaxationConfig::default();
        for inst in sample_instances(&c, 3, 11) {
            let x = solve_relaxation(&c, &inst, &cfg).unwrap();
            let xi = xi_matrix(&c, std::slice::from_ref(&inst)).unwrap();
            let v = violation_at(&c, &xi, &x).unwrap();
            assert!(v <= cfg.tolerance, "violation {v}");
        }
    }

    #[test]
    fn rr_rounds_the_relaxation() {
        let (c, inst) = one_var(2.0, -2.8, 0.0, 1.0);
        let sol = rr_baseline(&c, &inst, &RelaxationConfig::default()).unwrap();
        assert_eq!(sol.x_z, vec![1.0]);
        // Integral relaxed optimum is a fixed point: f = (x - 1)^2 shape.
        let (c, inst) = one_var(2.0, -2.0, 0.0, 1.0);
        let sol = rr_baseline(&c, &inst, &RelaxationConfig::default()).unwrap();
        assert_eq!(sol.x_z, vec![1.0]);
    }

    #[test]
    fn oracle_enumerates_window() {
        // f = (x - 1.4)^2 - 1.96 over x in [-2, 4]: best integer x = 1.
        let (c, inst) = one_var(2.0, -2.8, 0.0, 1.0);
        let ocfg = OracleConfig {
            window: 3,
            ..Default::default()
        };
        let sol = brute_force_oracle(&c, &inst, &[1.4], &ocfg, &RelaxationConfig::default())
            .unwrap()
            .unwrap();
        assert_eq!(sol.x_z, vec![1.0]);
        let obj = crate::problems::objective(&c, &inst, &sol).unwrap();
        // (1 - 1.4)^2 = 0.16, shifted by the constant -1.96 the family
        // cannot represent.
        assert!((obj - (0.16 - 1.96)).abs() < 1e-12);
    }

    #[test]
    fn oracle_respects_feasibility_filter() {
        // Same objective, constraint x <= 0: best feasible integer is 0.
        let (c, inst) = one_var(2.0, -2.8, 1.0, 0.0);
        let ocfg = OracleConfig {
            window: 3,
            ..Default::default()
        };
        let sol = brute_force_oracle(&c, &inst, &[1.4], &ocfg, &RelaxationConfig::default())
            .unwrap()
            .unwrap();
        assert_eq!(sol.x_z, vec![0.0]);
        let obj = crate::problems::objective(&c, &inst, &sol).unwrap();
        assert!((obj - 0.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_returns_none_when_window_is_infeasible() {
        // x <= -10 but window around 0 only reaches -2.
        let (c, inst) = one_var(2.0, 0.0, 1.0, -10.0);
        let out = brute_force_oracle(
            &c,
            &inst,
            &[0.0],
            &OracleConfig::default(),
            &RelaxationConfig::default(),
        )
        .unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn oracle_rejects_oversized_windows() {
        let c = build_family(Family::Iqp, 20, 20, 0).unwrap();
        let inst = &sample_instances(&c, 1, 0)[0];
        let err = brute_force_oracle(
            &c,
            inst,
            &vec![0.0; 20],
            &OracleConfig::default(),
            &RelaxationConfig::default(),
        );
        assert!(matches!(err, Err(CoreError::EnumerationTooLarge { .. })));
    }

    #[test]
    fn oracle_reoptimizes_continuous_block() {
        // 2-D Rosenbrock: y integer fixed per assignment, x re-optimized.
        let c = build_family(Family::Rosenbrock2d, 1, 0, 0).unwrap();
        let inst = ParametricInstance {
            xi: vec![3.83, 6.04],
        };
        let sol = brute_force_oracle(
            &c,
            &inst,
            &[0.0, 3.0],
            &OracleConfig::default(),
            &RelaxationConfig::default(),
        )
        .unwrap()
        .unwrap();
        assert!(violation(&c, &inst, &sol).unwrap() <= 1e-6);
        // Feasibility forces x <= 0 and y >= b/2 = 3.02, so y >= 4 among
        // integers in the window; the objective then prefers y close to x^2.
        assert!(sol.x_r[0] <= 1e-6);
        assert!(sol.x_z[0] >= 4.0);
    }

    #[test]
    fn no_window_method_beats_the_oracle() {
        let c = build_family(Family::Iqp, 2, 2, 6).unwrap();
        let rcfg = RelaxationConfig::default();
        let ocfg = OracleConfig {
            window: 4,
            ..Default::default()
        };
        for inst in sample_instances(&c, 5, 13) {
            let xbar = solve_relaxation(&c, &inst, &rcfg).unwrap();
            let Some(oracle) = brute_force_oracle(&c, &inst, &xbar, &ocfg, &rcfg).unwrap() else {
                continue;
            };
            let oracle_obj = crate::problems::objective(&c, &inst, &oracle).unwrap();
            let rr = rr_baseline(&c, &inst, &rcfg).unwrap();
            if violation(&c, &inst, &rr).unwrap() <= 1e-6 {
                let rr_obj = crate::problems::objective(&c, &inst, &rr).unwrap();
                assert!(rr_obj >= oracle_obj - 1e-9);
            }
        }
    }
}
