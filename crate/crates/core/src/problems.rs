//! Parametric MINLP benchmark families: integer quadratic (IQP), integer
//! non-convex (INP), mixed-integer Rosenbrock (MIRB) and its 2-D
//! illustrative instance.
//!
//! Constraint convention: `g(x, xi) <= 0` means feasible; every family's
//! inequalities are normalized to left-hand minus right-hand side.

use crate::autodiff::{NodeId, Tape};
use crate::error::{CoreError, Result};
use crate::rng::Rng;
use crate::tensor::TensorValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Iqp,
    Inp,
    Mirb,
    Rosenbrock2d,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iqp" => Ok(Family::Iqp),
            "inp" => Ok(Family::Inp),
            "mirb" => Ok(Family::Mirb),
            "rb2d" | "rosenbrock2d" => Ok(Family::Rosenbrock2d),
            other => Err(CoreError::UnknownFamily(other.to_string())),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Family::Iqp => "iqp",
            Family::Inp => "inp",
            Family::Mirb => "mirb",
            Family::Rosenbrock2d => "rb2d",
        }
    }
}

/// Fixed per-family data plus dimensions. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub family: Family,
    pub n_r: usize,
    pub n_z: usize,
    pub n_c: usize,
    pub n_xi: usize,
    /// IQP/INP: diagonal of Q (length n). MIRB: the vector Q (length n).
    pub q: Vec<f64>,
    /// Linear coefficients p (length n). Empty for the 2-D Rosenbrock.
    pub p: Vec<f64>,
    /// IQP/INP: constraint matrix A, row-major (n_c x n). Otherwise empty.
    pub a: Vec<f64>,
    pub seed: u64,
}

/// The varying parameter vector of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricInstance {
    pub xi: Vec<f64>,
}

/// A solution with continuous part `x_r` and integer-valued part `x_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedIntegerSolution {
    pub x_r: Vec<f64>,
    pub x_z: Vec<f64>,
}

impl MixedIntegerSolution {
    /// Enforces the integrality invariant on `x_z` exactly.
    pub fn new(x_r: Vec<f64>, x_z: Vec<f64>) -> Result<Self> {
        for &v in &x_z {
            if v != v.round() {
                return Err(CoreError::DimensionMismatch {
                    context: format!("integer slot holds non-integral value {v}"),
                });
            }
        }
        Ok(Self { x_r, x_z })
    }

    /// Concatenated (x_r, x_z) as one flat vector.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.x_r.clone();
        out.extend_from_slice(&self.x_z);
        out
    }
}

/// Generates the fixed coefficients of a family; same seed, same bits.
pub fn build_family(family: Family, n: usize, m: usize, seed: u64) -> Result<CoefficientSet> {
    if n < 1 {
        return Err(CoreError::DimensionMismatch {
            context: "n must be at least 1".into(),
        });
    }
    match family {
        Family::Iqp | Family::Inp => {
            if m < 1 {
                return Err(CoreError::DimensionMismatch {
                    context: "m must be at least 1".into(),
                });
            }
            if family == Family::Inp && n < 2 {
                return Err(CoreError::DimensionMismatch {
                    context: "INP needs n >= 2 (the d-modification touches columns 1 and 2)".into(),
                });
            }
            let mut rq = Rng::derive(seed, 1);
            let mut rp = Rng::derive(seed, 2);
            let mut ra = Rng::derive(seed, 3);
            let q = (0..n).map(|_| rq.uniform_in(0.0, 0.01)).collect();
            let p = (0..n).map(|_| rp.uniform_in(0.0, 0.1)).collect();
            let a = (0..m * n).map(|_| ra.normal_scaled(0.0, 0.1)).collect();
            Ok(CoefficientSet {
                family,
                n_r: 0,
                n_z: n,
                n_c: m,
                n_xi: if family == Family::Iqp { m } else { 2 * m },
                q,
                p,
                a,
                seed,
            })
        }
        Family::Mirb => {
            let mut rp = Rng::derive(seed, 2);
            let mut rq = Rng::derive(seed, 1);
            let p = (0..n).map(|_| rp.normal()).collect();
            let q = (0..n).map(|_| rq.normal()).collect();
            Ok(CoefficientSet {
                family,
                n_r: n,
                n_z: n,
                n_c: 4,
                n_xi: 1 + n,
                q,
                p,
                a: Vec::new(),
                seed,
            })
        }
        Family::Rosenbrock2d => Ok(CoefficientSet {
            family,
            n_r: 1,
            n_z: 1,
            n_c: 4,
            n_xi: 2,
            q: Vec::new(),
            p: Vec::new(),
            a: Vec::new(),
            seed,
        }),
    }
}

impl CoefficientSet {
    /// Number of decision variables.
    pub fn n_dec(&self) -> usize {
        self.n_r + self.n_z
    }

    /// Splits a flat decision vector into (continuous, integer) slices.
    pub fn split(&self, flat: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (flat[..self.n_r].to_vec(), flat[self.n_r..].to_vec())
    }
}

/// Samples `count` parameter vectors from the family's distribution.
pub fn sample_instances(
    coeffs: &CoefficientSet,
    count: usize,
    seed: u64,
) -> Vec<ParametricInstance> {
    let mut rng = Rng::derive(seed, 0x5A);
    (0..count)
        .map(|_| {
            let xi = match coeffs.family {
                Family::Iqp => (0..coeffs.n_c).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
                Family::Inp => {
                    let mut xi: Vec<f64> =
                        (0..coeffs.n_c).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                    xi.extend((0..coeffs.n_c).map(|_| rng.uniform_in(-0.5, 0.5)));
                    xi
                }
                Family::Mirb => {
                    let mut xi = vec![rng.uniform_in(1.0, 8.0)];
                    xi.extend((0..coeffs.n_z).map(|_| rng.uniform_in(0.5, 4.5)));
                    xi
                }
                Family::Rosenbrock2d => {
                    vec![rng.uniform_in(0.5, 4.5), rng.uniform_in(1.0, 8.0)]
                }
            };
            ParametricInstance { xi }
        })
        .collect()
}

/// Stacks instances into a (B x n_xi) matrix for batched evaluation.
pub fn xi_matrix(coeffs: &CoefficientSet, instances: &[ParametricInstance]) -> Result<TensorValue> {
    let rows = instances.len();
    let mut data = Vec::with_capacity(rows * coeffs.n_xi);
    for inst in instances {
        if inst.xi.len() != coeffs.n_xi {
            return Err(CoreError::DimensionMismatch {
                context: format!(
                    "instance has {} parameters, family expects {}",
                    inst.xi.len(),
                    coeffs.n_xi
                ),
            });
        }
        data.extend_from_slice(&inst.xi);
    }
    TensorValue::matrix(rows, coeffs.n_xi, data)
}

fn check_sol_shape(coeffs: &CoefficientSet, tape: &Tape, sol: NodeId) -> Result<(usize, usize)> {
    let sh = tape.value(sol).shape();
    if sh.len() != 2 || sh[1] != coeffs.n_dec() {
        return Err(CoreError::DimensionMismatch {
            context: format!(
                "solution batch shape {:?} does not match {} decision variables",
                sh,
                coeffs.n_dec()
            ),
        });
    }
    Ok((sh[0], sh[1]))
}

fn xi_column(xi: &TensorValue, col: usize) -> TensorValue {
    let (rows, cols) = (xi.shape()[0], xi.shape()[1]);
    let data: Vec<f64> = (0..rows).map(|i| xi.data()[i * cols + col]).collect();
    TensorValue::matrix(rows, 1, data).unwrap()
}

fn xi_columns(xi: &TensorValue, start: usize, end: usize) -> TensorValue {
    let (rows, cols) = (xi.shape()[0], xi.shape()[1]);
    let mut data = Vec::with_capacity(rows * (end - start));
    for i in 0..rows {
        data.extend_from_slice(&xi.data()[i * cols + start..i * cols + end]);
    }
    TensorValue::matrix(rows, end - start, data).unwrap()
}

/// Per-row objective values of a solution batch, as a (B x 1) node.
pub fn objective_node(
    tape: &mut Tape,
    coeffs: &CoefficientSet,
    xi: &TensorValue,
    sol: NodeId,
) -> Result<NodeId> {
    let (rows, _) = check_sol_shape(coeffs, tape, sol)?;
    if xi.shape() != [rows, coeffs.n_xi] {
        return Err(CoreError::DimensionMismatch {
            context: format!("xi batch shape {:?} vs solution rows {rows}", xi.shape()),
        });
    }
    match coeffs.family {
        Family::Iqp | Family::Inp => {
            let q_row = tape.constant(TensorValue::vector(coeffs.q.clone())?);
            let p_row = tape.constant(TensorValue::vector(coeffs.p.clone())?);
            let x2 = tape.square(sol);
            let qx2 = tape.mul(x2, q_row)?;
            let quad_sum = tape.sum_axis1(qx2)?;
            let quad = tape.scale(quad_sum, 0.5);
            let lin_basis = if coeffs.family == Family::Inp {
                tape.sin(sol)
            } else {
                sol
            };
            let px = tape.mul(lin_basis, p_row)?;
            let lin = tape.sum_axis1(px)?;
            tape.add(quad, lin)
        }
        Family::Mirb => {
            let n = coeffs.n_r;
            let x = tape.slice_cols(sol, 0, n)?;
            let y = tape.slice_cols(sol, n, 2 * n)?;
            let a_const = tape.constant(xi_columns(xi, 1, 1 + n));
            let ax = tape.sub(a_const, x)?;
            let ax2 = tape.square(ax);
            let term1 = tape.sum_axis1(ax2)?;
            let x2 = tape.square(x);
            let yx2 = tape.sub(y, x2)?;
            let yx2_sq = tape.square(yx2);
            let term2_sum = tape.sum_axis1(yx2_sq)?;
            let term2 = tape.scale(term2_sum, 50.0);
            tape.add(term1, term2)
        }
        Family::Rosenbrock2d => {
            let x = tape.slice_cols(sol, 0, 1)?;
            let y = tape.slice_cols(sol, 1, 2)?;
            let a_const = tape.constant(xi_column(xi, 0));
            let ax = tape.sub(a_const, x)?;
            let term1 = tape.square(ax);
            let x2 = tape.square(x);
            let yx2 = tape.sub(y, x2)?;
            let yx2_sq = tape.square(yx2);
            let term2 = tape.scale(yx2_sq, 50.0);
            tape.add(term1, term2)
        }
    }
}

/// Per-row constraint values (B x n_c), `<= 0` feasible.
pub fn constraints_node(
    tape: &mut Tape,
    coeffs: &CoefficientSet,
    xi: &TensorValue,
    sol: NodeId,
) -> Result<NodeId> {
    let (rows, _) = check_sol_shape(coeffs, tape, sol)?;
    if xi.shape() != [rows, coeffs.n_xi] {
        return Err(CoreError::DimensionMismatch {
            context: format!("xi batch shape {:?} vs solution rows {rows}", xi.shape()),
        });
    }
    match coeffs.family {
        Family::Iqp | Family::Inp => {
            let m = coeffs.n_c;
            let n = coeffs.n_z;
            // A^T as an (n x m) constant so rows of the batch multiply through.
            let mut at = vec![0.0; n * m];
            for i in 0..m {
                for j in 0..n {
                    at[j * m + i] = coeffs.a[i * n + j];
                }
            }
            let at_const = tape.constant(TensorValue::matrix(n, m, at)?);
            let ax = tape.matmul(sol, at_const)?;
            let lhs = if coeffs.family == Family::Inp {
                // d shifts column 1 of A up and column 2 down: adds d*(x1 - x2).
                let d_const = tape.constant(xi_columns(xi, m, 2 * m));
                let x1 = tape.slice_cols(sol, 0, 1)?;
                let x2 = tape.slice_cols(sol, 1, 2)?;
                let diff = tape.sub(x1, x2)?;
                let dterm = tape.mul(d_const, diff)?;
                tape.add(ax, dterm)?
            } else {
                ax
            };
            let b_const = tape.constant(xi_columns(xi, 0, m));
            tape.sub(lhs, b_const)
        }
        Family::Mirb => {
            let n = coeffs.n_r;
            let x = tape.slice_cols(sol, 0, n)?;
            let y = tape.slice_cols(sol, n, 2 * n)?;
            let nb = xi_column(xi, 0).map(|b| n as f64 * b);
            let nb_half = nb.map(|v| 0.5 * v);
            // ||x||^2 <= n b
            let x2 = tape.square(x);
            let x2sum = tape.sum_axis1(x2)?;
            let nb_const = tape.constant(nb);
            let g1 = tape.sub(x2sum, nb_const)?;
            // 1^T y >= n b / 2
            let ysum = tape.sum_axis1(y)?;
            let nb_half_const = tape.constant(nb_half);
            let g2 = tape.sub(nb_half_const, ysum)?;
            // p^T x <= 0 and Q^T y <= 0
            let p_col = tape.constant(TensorValue::matrix(n, 1, coeffs.p.clone())?);
            let g3 = tape.matmul(x, p_col)?;
            let q_col = tape.constant(TensorValue::matrix(n, 1, coeffs.q.clone())?);
            let g4 = tape.matmul(y, q_col)?;
            let g12 = tape.concat_cols(g1, g2)?;
            let g123 = tape.concat_cols(g12, g3)?;
            tape.concat_cols(g123, g4)
        }
        Family::Rosenbrock2d => {
            let x = tape.slice_cols(sol, 0, 1)?;
            let y = tape.slice_cols(sol, 1, 2)?;
            let b_const = tape.constant(xi_column(xi, 1));
            let b_half_const = tape.constant(xi_column(xi, 1).map(|b| 0.5 * b));
            // y >= b/2 ; x^2 <= b ; x <= 0 ; y >= 0
            let g1 = tape.sub(b_half_const, y)?;
            let x2 = tape.square(x);
            let g2 = tape.sub(x2, b_const)?;
            let g3 = x;
            let g4 = tape.scale(y, -1.0);
            let g12 = tape.concat_cols(g1, g2)?;
            let g123 = tape.concat_cols(g12, g3)?;
            tape.concat_cols(g123, g4)
        }
    }
}

fn sol_row(coeffs: &CoefficientSet, sol: &MixedIntegerSolution) -> Result<TensorValue> {
    let flat = sol.flat();
    if flat.len() != coeffs.n_dec() {
        return Err(CoreError::DimensionMismatch {
            context: format!(
                "solution has {} entries, family expects {}",
                flat.len(),
                coeffs.n_dec()
            ),
        });
    }
    TensorValue::matrix(1, flat.len(), flat)
}

/// Objective value of one solution.
pub fn objective(
    coeffs: &CoefficientSet,
    instance: &ParametricInstance,
    sol: &MixedIntegerSolution,
) -> Result<f64> {
    let mut tape = Tape::new();
    let xi = xi_matrix(coeffs, std::slice::from_ref(instance))?;
    let s = tape.constant(sol_row(coeffs, sol)?);
    let obj = objective_node(&mut tape, coeffs, &xi, s)?;
    tape.value(obj).scalar_value()
}

/// Constraint vector of one solution, `<= 0` feasible.
pub fn constraints(
    coeffs: &CoefficientSet,
    instance: &ParametricInstance,
    sol: &MixedIntegerSolution,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let xi = xi_matrix(coeffs, std::slice::from_ref(instance))?;
    let s = tape.constant(sol_row(coeffs, sol)?);
    let g = constraints_node(&mut tape, coeffs, &xi, s)?;
    Ok(tape.value(g).data().to_vec())
}

/// L1 norm of positive constraint parts; zero exactly on feasible points.
pub fn violation(
    coeffs: &CoefficientSet,
    instance: &ParametricInstance,
    sol: &MixedIntegerSolution,
) -> Result<f64> {
    Ok(constraints(coeffs, instance, sol)?
        .iter()
        .map(|g| g.max(0.0))
        .sum())
}

/// The network input features of an instance (identity packing of xi).
pub fn feature_vector(coeffs: &CoefficientSet, instance: &ParametricInstance) -> Vec<f64> {
    debug_assert_eq!(instance.xi.len(), coeffs.n_xi);
    instance.xi.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iqp_coefficient_ranges() {
        let c = build_family(Family::Iqp, 2, 2, 7).unwrap();
        assert_eq!(c.q.len(), 2);
        assert!(c.q.iter().all(|&v| (0.0..=0.01).contains(&v)));
        assert!(c.p.iter().all(|&v| (0.0..=0.1).contains(&v)));
        assert_eq!(c.a.len(), 4);
        assert_eq!((c.n_r, c.n_z, c.n_c, c.n_xi), (0, 2, 2, 2));
    }

    #[test]
    fn mirb_dimensions() {
        let c = build_family(Family::Mirb, 2, 0, 3).unwrap();
        assert_eq!((c.p.len(), c.q.len(), c.n_c, c.n_xi), (2, 2, 4, 3));
    }

    #[test]
    fn build_family_deterministic() {
        let a = build_family(Family::Inp, 4, 3, 99).unwrap();
        let b = build_family(Family::Inp, 4, 3, 99).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.p, b.p);
        assert_eq!(a.a, b.a);
    }

    #[test]
    fn iqp_instances_in_range() {
        let c = build_family(Family::Iqp, 3, 3, 1).unwrap();
        for inst in sample_instances(&c, 50, 5) {
            assert_eq!(inst.xi.len(), 3);
            assert!(inst.xi.iter().all(|&v| (-1.0..1.0).contains(&v)));
        }
    }

    #[test]
    fn mirb_instances_in_range() {
        let c = build_family(Family::Mirb, 2, 0, 1).unwrap();
        for inst in sample_instances(&c, 50, 5) {
            assert_eq!(inst.xi.len(), 3);
            assert!((1.0..8.0).contains(&inst.xi[0]));
            assert!(inst.xi[1..].iter().all(|&v| (0.5..4.5).contains(&v)));
        }
    }

    #[test]
    fn zero_count_instances() {
        let c = build_family(Family::Iqp, 2, 2, 1).unwrap();
        assert!(sample_instances(&c, 0, 1).is_empty());
    }

    #[test]
    fn iqp_objective_zero_at_origin() {
        let c = build_family(Family::Iqp, 3, 2, 11).unwrap();
        let inst = &sample_instances(&c, 1, 0)[0];
        let sol = MixedIntegerSolution::new(vec![], vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(objective(&c, inst, &sol).unwrap(), 0.0);
    }

    #[test]
    fn mirb_objective_zero_at_exact_fit() {
        let mut c = build_family(Family::Mirb, 2, 0, 1).unwrap();
        c.p = vec![-1.0, -1.0];
        c.q = vec![-1.0, -1.0];
        let inst = ParametricInstance {
            xi: vec![4.0, 2.0, 2.0],
        };
        let sol = MixedIntegerSolution::new(vec![2.0, 2.0], vec![4.0, 4.0]).unwrap();
        assert_eq!(objective(&c, &inst, &sol).unwrap(), 0.0);
        let g = constraints(&c, &inst, &sol).unwrap();
        assert_eq!(g, vec![0.0, -4.0, -4.0, -8.0]);
        assert_eq!(violation(&c, &inst, &sol).unwrap(), 0.0);
    }

    #[test]
    fn rosenbrock2d_objective_at_origin() {
        let c = build_family(Family::Rosenbrock2d, 1, 0, 0).unwrap();
        let inst = ParametricInstance {
            xi: vec![3.83, 6.04],
        };
        let sol = MixedIntegerSolution::new(vec![0.0], vec![0.0]).unwrap();
        let obj = objective(&c, &inst, &sol).unwrap();
        assert!((obj - 14.6689).abs() < 1e-12);
    }

    #[test]
    fn iqp_constraints_at_origin_are_minus_b() {
        let c = build_family(Family::Iqp, 2, 2, 11).unwrap();
        let inst = ParametricInstance {
            xi: vec![0.3, -0.2],
        };
        let sol = MixedIntegerSolution::new(vec![], vec![0.0, 0.0]).unwrap();
        let g = constraints(&c, &inst, &sol).unwrap();
        assert_eq!(g, vec![-0.3, 0.2]);
    }

    #[test]
    fn violation_definition() {
        let c = build_family(Family::Iqp, 2, 2, 11).unwrap();
        let inst = ParametricInstance { xi: vec![-0.5, 1.0] };
        let sol = MixedIntegerSolution::new(vec![], vec![0.0, 0.0]).unwrap();
        let g = constraints(&c, &inst, &sol).unwrap();
        let expected: f64 = g.iter().map(|v| v.max(0.0)).sum();
        assert_eq!(violation(&c, &inst, &sol).unwrap(), expected);
    }

    #[test]
    fn inp_d_modification_is_d_times_x1_minus_x2() {
        let c = build_family(Family::Inp, 3, 2, 21).unwrap();
        let sol = MixedIntegerSolution::new(vec![], vec![2.0, -1.0, 3.0]).unwrap();
        let b = vec![0.1, -0.3];
        let with_d = ParametricInstance {
            xi: vec![b[0], b[1], 0.4, -0.2],
        };
        let without_d = ParametricInstance {
            xi: vec![b[0], b[1], 0.0, 0.0],
        };
        let g1 = constraints(&c, &with_d, &sol).unwrap();
        let g0 = constraints(&c, &without_d, &sol).unwrap();
        let diff = sol.x_z[0] - sol.x_z[1];
        for i in 0..2 {
            let d = with_d.xi[2 + i];
            assert!((g1[i] - g0[i] - d * diff).abs() < 1e-12);
        }
    }

    #[test]
    fn inp_with_zero_d_matches_iqp_constraint_matrix() {
        let ci = build_family(Family::Iqp, 3, 2, 21).unwrap();
        let cn = build_family(Family::Inp, 3, 2, 21).unwrap();
        assert_eq!(ci.a, cn.a);
    }

    #[test]
    fn feature_vector_is_identity_packing() {
        let c = build_family(Family::Inp, 2, 2, 0).unwrap();
        let inst = ParametricInstance {
            xi: vec![0.1, -0.4, 0.2, 0.3],
        };
        assert_eq!(feature_vector(&c, &inst), inst.xi);
        assert_eq!(c.n_xi, 4);
    }

    #[test]
    fn integrality_enforced_at_construction() {
        assert!(MixedIntegerSolution::new(vec![], vec![2.5]).is_err());
        assert!(MixedIntegerSolution::new(vec![0.5], vec![2.0]).is_ok());
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        use crate::autodiff::grad_check;
        for family in [Family::Iqp, Family::Inp, Family::Mirb] {
            let (n, m) = (3, 2);
            let c = build_family(family, n, m, 17).unwrap();
            let inst = &sample_instances(&c, 1, 4)[0];
            let xi = xi_matrix(&c, std::slice::from_ref(inst)).unwrap();
            let start = TensorValue::matrix(
                1,
                c.n_dec(),
                (0..c.n_dec()).map(|i| 0.3 + 0.2 * i as f64).collect(),
            )
            .unwrap();
            let cc = c.clone();
            let xic = xi.clone();
            let err = grad_check(
                move |tape, ids| {
                    let obj = objective_node(tape, &cc, &xic, ids[0])?;
                    Ok(tape.sum(obj))
                },
                &[start],
                1e-6,
            )
            .unwrap();
            assert!(err <= 1e-5, "{family:?}: rel err {err}");
        }
    }

    #[test]
    fn violation_iff_some_positive_constraint() {
        let mut rng = Rng::new(123);
        for family in [Family::Iqp, Family::Inp, Family::Mirb, Family::Rosenbrock2d] {
            let c = build_family(family, 3.max(2), 3, 5).unwrap();
            let instances = sample_instances(&c, 20, 9);
            for inst in &instances {
                let x_r: Vec<f64> = (0..c.n_r).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
                let x_z: Vec<f64> = (0..c.n_z)
                    .map(|_| rng.uniform_in(-3.0, 3.0).round())
                    .collect();
                let sol = MixedIntegerSolution::new(x_r, x_z).unwrap();
                let g = constraints(&c, inst, &sol).unwrap();
                let v = violation(&c, inst, &sol).unwrap();
                let max_g = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(v == 0.0, max_g <= 0.0);
            }
        }
    }
}
