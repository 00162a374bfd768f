//! Learnable integer-correction layers and their rounding baselines.
//!
//! Four methods share one interface: Rounding Classification (RC) perturbs
//! logits with Gumbel noise and thresholds a sigmoid; Learnable Threshold
//! (LT) rounds the fractional part against a predicted threshold; Rounding
//! STE (RS) rounds to nearest with a straight-through identity; Rounding
//! after Learning (RL) leaves the relaxed solution untouched during training
//! and rounds post hoc. RC/LT consume a correction network `delta` whose
//! input is the concatenation of the relaxed solution and the instance
//! parameters.

use crate::autodiff::{NodeId, Tape};
use crate::error::{CoreError, Result};
use crate::net::{ForwardMode, MlpWeights};
use crate::problems::{CoefficientSet, MixedIntegerSolution, ParametricInstance};
use crate::rng::Rng;
use crate::tensor::TensorValue;

/// The paper-reported bound on the Gumbel-sigmoid surrogate-gradient
/// Lipschitz constant at tau = 1; the exact value is 1/(6*sqrt(3)).
pub const GUMBEL_LIPSCHITZ: f64 = 0.0962;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rc,
    Lt,
    Rs,
    Rl,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Rc => "RC",
            Method::Lt => "LT",
            Method::Rs => "RS",
            Method::Rl => "RL",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RC" => Ok(Method::Rc),
            "LT" => Ok(Method::Lt),
            "RS" => Ok(Method::Rs),
            "RL" => Ok(Method::Rl),
            _ => Err(CoreError::UnknownFamily(format!("correction method {s}"))),
        }
    }

    /// Whether the method trains (and therefore needs) a correction net.
    pub fn uses_delta(&self) -> bool {
        matches!(self, Method::Rc | Method::Lt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionConfig {
    pub method: Method,
    /// Gumbel-sigmoid temperature (RC).
    pub tau: f64,
    /// Scaled-sigmoid slope (LT).
    pub beta: f64,
    /// Whether RC perturbs logits with Gumbel noise during training.
    pub noise: bool,
}

impl CorrectionConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            tau: 1.0,
            beta: 10.0,
            noise: true,
        }
    }
}

/// Concrete result of one correction call.
#[derive(Debug, Clone)]
pub struct CorrectionOutput {
    pub xhat: MixedIntegerSolution,
    /// Soft rounding values in (0, 1), one per integer variable.
    pub v: Vec<f64>,
    /// Hard rounding directions in {0, 1}.
    pub b: Vec<f64>,
}

/// Graph handles from [`correct_on_tape`].
#[derive(Debug, Clone)]
pub struct CorrectionGraph {
    /// (B x n_dec) corrected solutions.
    pub xhat: NodeId,
    /// (B x n_z) soft values; `None` for RL.
    pub v: Option<NodeId>,
    /// (B x n_z) hard directions; `None` for RL.
    pub b: Option<NodeId>,
    /// Input nodes of the delta network parameters (empty for RS/RL).
    pub delta_params: Vec<NodeId>,
}

/// Surrogate-gradient Lipschitz data for the feasibility-projection theory.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzEstimate {
    /// Bound on the surrogate layer alone: 0.0962/tau^2 (RC) or beta/4 (LT).
    pub surrogate_bound: f64,
    /// Bound on the correction-network Jacobian norm.
    pub g_delta: f64,
    /// Combined layer bound L_phi = surrogate_bound * g_delta.
    pub l_phi: f64,
}

impl LipschitzEstimate {
    /// Full violation-gradient Lipschitz constant
    /// `L = n_c_bar * (G_g * L_phi + G_phi * L_g)`.
    pub fn combined(&self, n_c_bar: f64, g_g: f64, l_g: f64, g_phi: f64) -> f64 {
        n_c_bar * (g_g * self.l_phi + g_phi * l_g)
    }
}

/// Elementwise Gumbel-sigmoid: `sigma((h + e1 - e2)/tau)`.
pub fn gumbel_sigmoid_scalar(h: f64, e1: f64, e2: f64, tau: f64) -> f64 {
    crate::autodiff::sigmoid((h + e1 - e2) / tau)
}

/// Emits the correction layer for a batch of relaxed solutions.
///
/// `noise_active` enables RC's Gumbel perturbation; callers pass the config
/// flag during training and `false` during evaluation and projection so the
/// corrected map stays deterministic there.
pub fn correct_on_tape(
    tape: &mut Tape,
    coeffs: &CoefficientSet,
    delta: Option<&mut MlpWeights>,
    config: &CorrectionConfig,
    xbar: NodeId,
    xi_features: &TensorValue,
    mode: ForwardMode,
    noise_active: bool,
    rng: &mut Rng,
) -> Result<CorrectionGraph> {
    let shape = tape.value(xbar).shape().to_vec();
    let n_dec = coeffs.n_dec();
    if shape.len() != 2 || shape[1] != n_dec {
        return Err(CoreError::DimensionMismatch {
            context: format!("relaxed batch shape {shape:?} vs {n_dec} decision variables"),
        });
    }
    let batch = shape[0];
    let (n_r, n_z) = (coeffs.n_r, coeffs.n_z);

    if config.method == Method::Rl {
        return Ok(CorrectionGraph {
            xhat: xbar,
            v: None,
            b: None,
            delta_params: Vec::new(),
        });
    }

    let x_z = tape.slice_cols(xbar, n_r, n_dec)?;
    let floor = tape.floor_ste(x_z);

    if config.method == Method::Rs {
        let frac = tape.sub(x_z, floor)?;
        let b = tape.gt_half_ste(frac);
        let xz_hat = tape.add(floor, b)?;
        let xhat = if n_r > 0 {
            let x_r = tape.slice_cols(xbar, 0, n_r)?;
            tape.concat_cols(x_r, xz_hat)?
        } else {
            xz_hat
        };
        return Ok(CorrectionGraph {
            xhat,
            v: Some(frac),
            b: Some(b),
            delta_params: Vec::new(),
        });
    }

    let delta = delta.ok_or(CoreError::UnsupportedMethod {
        method: config.method.tag(),
        context: "correction without a delta network",
    })?;
    if xi_features.shape() != [batch, coeffs.n_xi] {
        return Err(CoreError::DimensionMismatch {
            context: format!(
                "feature batch shape {:?} vs {} instance parameters",
                xi_features.shape(),
                coeffs.n_xi
            ),
        });
    }
    let xi_const = tape.constant(xi_features.clone());
    let features = tape.concat_cols(xbar, xi_const)?;
    let pass = match mode {
        ForwardMode::Train => delta.forward_train(tape, features, rng)?,
        ForwardMode::Eval => delta.forward_eval(tape, features)?,
    };
    let h = pass.output;
    if tape.value(h).shape()[1] != n_dec {
        return Err(CoreError::DimensionMismatch {
            context: format!(
                "delta output width {} vs {} decision variables",
                tape.value(h).shape()[1],
                n_dec
            ),
        });
    }
    let h_z = tape.slice_cols(h, n_r, n_dec)?;

    let (v, b) = match config.method {
        Method::Rc => {
            let logits = if noise_active {
                let eps: Vec<f64> = (0..batch * n_z).map(|_| rng.gumbel() - rng.gumbel()).collect();
                let eps = tape.constant(TensorValue::matrix(batch, n_z, eps)?);
                tape.add(h_z, eps)?
            } else {
                h_z
            };
            let z = tape.scale(logits, 1.0 / config.tau);
            let v = tape.sigmoid(z);
            let b = tape.gt_half_ste(v);
            (v, b)
        }
        Method::Lt => {
            let t = tape.sigmoid(h_z);
            let frac = tape.sub(x_z, floor)?;
            let r = tape.sub(frac, t)?;
            let scaled = tape.scale(r, config.beta);
            let v = tape.sigmoid(scaled);
            let b = tape.gt_half_ste(v);
            (v, b)
        }
        Method::Rs | Method::Rl => unreachable!(),
    };

    let xz_hat = tape.add(floor, b)?;
    let xhat = if n_r > 0 {
        let x_r = tape.slice_cols(xbar, 0, n_r)?;
        let h_r = tape.slice_cols(h, 0, n_r)?;
        let xr_hat = tape.add(x_r, h_r)?;
        tape.concat_cols(xr_hat, xz_hat)?
    } else {
        xz_hat
    };
    Ok(CorrectionGraph {
        xhat,
        v: Some(v),
        b: Some(b),
        delta_params: pass.params,
    })
}

fn single_correct(
    coeffs: &CoefficientSet,
    delta: &MlpWeights,
    config: &CorrectionConfig,
    xbar: &[f64],
    instance: &ParametricInstance,
    noise_seed: u64,
) -> Result<CorrectionOutput> {
    if xbar.len() != coeffs.n_dec() {
        return Err(CoreError::DimensionMismatch {
            context: format!(
                "relaxed solution has {} entries, family expects {}",
                xbar.len(),
                coeffs.n_dec()
            ),
        });
    }
    let mut tape = Tape::new();
    let x = tape.constant(TensorValue::matrix(1, xbar.len(), xbar.to_vec())?);
    let xi = TensorValue::matrix(1, coeffs.n_xi, instance.xi.clone())?;
    let mut rng = Rng::derive(noise_seed, 0xC0);
    let mut delta = delta.clone();
    let graph = correct_on_tape(
        &mut tape,
        coeffs,
        Some(&mut delta),
        config,
        x,
        &xi,
        ForwardMode::Eval,
        config.noise,
        &mut rng,
    )?;
    let flat = tape.value(graph.xhat).data().to_vec();
    let (x_r, x_z) = coeffs.split(&flat);
    Ok(CorrectionOutput {
        xhat: MixedIntegerSolution::new(x_r, x_z)?,
        v: tape.value(graph.v.unwrap()).data().to_vec(),
        b: tape.value(graph.b.unwrap()).data().to_vec(),
    })
}

/// Rounding Classification on one instance.
pub fn rc_correct(
    coeffs: &CoefficientSet,
    delta: &MlpWeights,
    config: &CorrectionConfig,
    xbar: &[f64],
    instance: &ParametricInstance,
    noise_seed: u64,
) -> Result<CorrectionOutput> {
    if config.method != Method::Rc {
        return Err(CoreError::UnsupportedMethod {
            method: config.method.tag(),
            context: "rc_correct",
        });
    }
    single_correct(coeffs, delta, config, xbar, instance, noise_seed)
}

/// Learnable Threshold on one instance.
pub fn lt_correct(
    coeffs: &CoefficientSet,
    delta: &MlpWeights,
    config: &CorrectionConfig,
    xbar: &[f64],
    instance: &ParametricInstance,
) -> Result<CorrectionOutput> {
    if config.method != Method::Lt {
        return Err(CoreError::UnsupportedMethod {
            method: config.method.tag(),
            context: "lt_correct",
        });
    }
    single_correct(coeffs, delta, config, xbar, instance, 0)
}

/// Nearest-integer rounding with a strict down-tie at one half.
pub fn rs_round(coeffs: &CoefficientSet, xbar: &[f64]) -> Result<MixedIntegerSolution> {
    if xbar.len() != coeffs.n_dec() {
        return Err(CoreError::DimensionMismatch {
            context: format!(
                "relaxed solution has {} entries, family expects {}",
                xbar.len(),
                coeffs.n_dec()
            ),
        });
    }
    let x_r = xbar[..coeffs.n_r].to_vec();
    let x_z = xbar[coeffs.n_r..]
        .iter()
        .map(|&x| {
            let f = x.floor();
            if x - f > 0.5 {
                f + 1.0
            } else {
                f
            }
        })
        .collect();
    MixedIntegerSolution::new(x_r, x_z)
}

/// Surrogate-gradient Lipschitz bound of the correction layer.
pub fn lipschitz_bound(config: &CorrectionConfig, g_delta: f64) -> Result<LipschitzEstimate> {
    let surrogate_bound = match config.method {
        Method::Rc => GUMBEL_LIPSCHITZ / (config.tau * config.tau),
        Method::Lt => config.beta / 4.0,
        Method::Rs | Method::Rl => {
            return Err(CoreError::UnsupportedMethod {
                method: config.method.tag(),
                context: "lipschitz_bound (no learnable surrogate)",
            })
        }
    };
    Ok(LipschitzEstimate {
        surrogate_bound,
        g_delta,
        l_phi: surrogate_bound * g_delta,
    })
}

/// Largest singular value by power iteration (50 steps, tol 1e-8).
pub fn spectral_norm(m: &TensorValue) -> f64 {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut sigma = 0.0;
    for _ in 0..50 {
        // u = M v ; w = M^T u ; sigma = |u|.
        let mut u = vec![0.0; rows];
        for i in 0..rows {
            let row = &m.data()[i * cols..(i + 1) * cols];
            u[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let norm_u = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_u == 0.0 {
            return 0.0;
        }
        let mut w = vec![0.0; cols];
        for i in 0..rows {
            let row = &m.data()[i * cols..(i + 1) * cols];
            for (wj, a) in w.iter_mut().zip(row) {
                *wj += a * u[i];
            }
        }
        let norm_w = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_w == 0.0 {
            return 0.0;
        }
        let next = norm_w / norm_u;
        let converged = (next - sigma).abs() <= 1e-8 * next.max(1.0);
        sigma = next;
        for (vj, wj) in v.iter_mut().zip(&w) {
            *vj = wj / norm_w;
        }
        if converged {
            break;
        }
    }
    sigma
}

/// Upper bound on the network Jacobian norm: the product of per-layer weight
/// spectral norms and, in EVAL mode, each batch-norm's diagonal gain.
/// ReLU and dropout-off contribute factors of one.
pub fn network_gain(weights: &MlpWeights) -> f64 {
    let mut gain = 1.0;
    for (l, layer) in weights.layers.iter().enumerate() {
        gain *= spectral_norm(&layer.w);
        if l < weights.norms.len() {
            if let Some(bn) = weights.norms[l].as_ref() {
                let factor = bn
                    .scale
                    .iter()
                    .zip(bn.running_var.iter())
                    .map(|(s, rv)| s.abs() / (rv + 1e-5).sqrt())
                    .fold(0.0, f64::max);
                gain *= factor;
            }
        }
    }
    gain
}

/// Max |d/dh of the RC surrogate gradient| over a dense scan, by central
/// differences of `g(h) = sigma(h/tau)(1 - sigma(h/tau))/tau` (noise-free).
pub fn scan_rc_gradient_lipschitz(tau: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let g = |h: f64| {
        let s = crate::autodiff::sigmoid(h / tau);
        s * (1.0 - s) / tau
    };
    let mut max = 0.0_f64;
    let n = ((hi - lo) / step).round() as usize;
    for i in 0..=n {
        let h = lo + i as f64 * step;
        let d = (g(h + step) - g(h - step)) / (2.0 * step);
        max = max.max(d.abs());
    }
    max
}

/// Max slope of the LT scaled sigmoid `sigma(beta r)` over a dense scan of
/// r; the analytic maximum is beta/4 at r = 0.
pub fn scan_lt_max_slope(beta: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let mut max = 0.0_f64;
    let n = ((hi - lo) / step).round() as usize;
    for i in 0..=n {
        let r = lo + i as f64 * step;
        let s = crate::autodiff::sigmoid(beta * r);
        max = max.max(beta * s * (1.0 - s));
    }
    max
}
