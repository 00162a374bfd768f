//! Self-supervised training of the solution mapping and correction net.
//!
//! The loss is the penalty form `mean_i [ f(x_hat_i) + lambda * ||g(x_hat_i)_+||_1 ]`
//! evaluated on the corrected output, so no solved instances are needed.
//! Optimization is AdamW with early stopping on validation loss.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::correction::{correct_on_tape, rs_round, CorrectionConfig, Method};
use crate::error::{CoreError, Result};
use crate::net::{init_mlp, ForwardMode, MlpSpec, MlpWeights};
use crate::problems::{
    constraints_node, objective_node, sample_instances, violation, xi_matrix, CoefficientSet,
    MixedIntegerSolution, ParametricInstance,
};
use crate::rng::Rng;
use crate::tensor::TensorValue;

pub const FEASIBILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda: 100.0,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
            seed: 0,
        }
    }
}

/// Train/validation/test instances drawn from independent seed streams, so
/// the splits are disjoint with probability one.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<ParametricInstance>,
    pub validation: Vec<ParametricInstance>,
    pub test: Vec<ParametricInstance>,
}

impl Dataset {
    pub fn sample(
        coeffs: &CoefficientSet,
        n_train: usize,
        n_validation: usize,
        n_test: usize,
        seed: u64,
    ) -> Self {
        Self {
            train: sample_instances(coeffs, n_train, Rng::derive(seed, 1).next_u64()),
            validation: sample_instances(coeffs, n_validation, Rng::derive(seed, 2).next_u64()),
            test: sample_instances(coeffs, n_test, Rng::derive(seed, 3).next_u64()),
        }
    }

    /// The reported experiment split: 8000 train, 1000 validation, 100 test.
    pub fn default_split(coeffs: &CoefficientSet, seed: u64) -> Self {
        Self::sample(coeffs, 8000, 1000, 100, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean objective term over the batch.
    pub objective: f64,
    /// Mean violation term over the batch (before the lambda weight).
    pub penalty: f64,
}

/// Trained weights: the solution mapping and, for RC/LT, the correction net.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    pub pi: MlpWeights,
    pub delta: Option<MlpWeights>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub objective: f64,
    pub violation: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub objective_mean: f64,
    pub objective_median: f64,
    pub feasible_fraction: f64,
    pub mean_time_s: f64,
    pub instances: Vec<InstanceRecord>,
}

/// Builds the Eq.-style penalty loss over a corrected batch; returns the
/// scalar loss node plus its numeric breakdown.
pub fn penalty_loss_node(
    tape: &mut Tape,
    coeffs: &CoefficientSet,
    xi: &TensorValue,
    xhat: NodeId,
    lambda: f64,
) -> Result<(NodeId, LossBreakdown)> {
    let batch = xi.shape()[0];
    if batch == 0 {
        return Err(CoreError::DimensionMismatch {
            context: "penalty loss over an empty batch".into(),
        });
    }
    let obj = objective_node(tape, coeffs, xi, xhat)?;
    let obj_mean = tape.mean(obj);
    let g = constraints_node(tape, coeffs, xi, xhat)?;
    let viol_total = tape.pos_part_l1(g);
    let viol_mean = tape.scale(viol_total, 1.0 / batch as f64);
    let weighted = tape.scale(viol_mean, lambda);
    let total = tape.add(obj_mean, weighted)?;
    let breakdown = LossBreakdown {
        total: tape.value(total).scalar_value()?,
        objective: tape.value(obj_mean).scalar_value()?,
        penalty: tape.value(viol_mean).scalar_value()?,
    };
    Ok((total, breakdown))
}

/// Non-differentiable convenience form of the same loss.
pub fn penalty_loss(
    coeffs: &CoefficientSet,
    batch: &[(ParametricInstance, MixedIntegerSolution)],
    lambda: f64,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(CoreError::DimensionMismatch {
            context: "penalty loss over an empty batch".into(),
        });
    }
    let m = batch.len() as f64;
    let mut obj = 0.0;
    let mut pen = 0.0;
    for (inst, sol) in batch {
        obj += crate::problems::objective(coeffs, inst, sol)? / m;
        pen += violation(coeffs, inst, sol)? / m;
    }
    Ok(LossBreakdown {
        total: obj + lambda * pen,
        objective: obj,
        penalty: pen,
    })
}

struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    fn new(lr: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            t: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    /// One decoupled-weight-decay Adam step over the aligned parameter list.
    fn step(&mut self, params: &mut [&mut TensorValue], grads: &[TensorValue]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, param) in params.iter_mut().enumerate() {
            let g = grads[k].data();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, p) in param.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *p -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *p);
            }
        }
    }
}

fn batch_loss(
    coeffs: &CoefficientSet,
    pi: &mut MlpWeights,
    delta: &mut Option<MlpWeights>,
    ccfg: &CorrectionConfig,
    tcfg: &TrainingConfig,
    instances: &[ParametricInstance],
    mode: ForwardMode,
    rng: &mut Rng,
) -> Result<(f64, Vec<TensorValue>)> {
    let xi = xi_matrix(coeffs, instances)?;
    let mut tape = Tape::new();
    let xi_in = tape.constant(xi.clone());
    let pass = match mode {
        ForwardMode::Train => pi.forward_train(&mut tape, xi_in, rng)?,
        ForwardMode::Eval => pi.forward_eval(&mut tape, xi_in)?,
    };
    let noise_active = mode == ForwardMode::Train && ccfg.noise;
    let graph = correct_on_tape(
        &mut tape,
        coeffs,
        delta.as_mut(),
        ccfg,
        pass.output,
        &xi,
        mode,
        noise_active,
        rng,
    )?;
    let (loss, breakdown) = penalty_loss_node(&mut tape, coeffs, &xi, graph.xhat, tcfg.lambda)?;
    if !breakdown.total.is_finite() {
        return Err(CoreError::TrainingDiverged { epoch: 0 });
    }
    if mode == ForwardMode::Eval {
        return Ok((breakdown.total, Vec::new()));
    }
    let grads = tape.backward(loss)?;
    let all: Vec<TensorValue> = pass
        .params
        .iter()
        .chain(graph.delta_params.iter())
        .map(|&p| grads.wrt(p, &tape))
        .collect();
    Ok((breakdown.total, all))
}

fn split_loss(
    coeffs: &CoefficientSet,
    pi: &mut MlpWeights,
    delta: &mut Option<MlpWeights>,
    ccfg: &CorrectionConfig,
    tcfg: &TrainingConfig,
    instances: &[ParametricInstance],
) -> Result<f64> {
    let mut total = 0.0;
    let mut rng = Rng::new(0); // unused in EVAL mode
    for chunk in instances.chunks(tcfg.batch_size.max(1)) {
        let (loss, _) = batch_loss(
            coeffs,
            pi,
            delta,
            ccfg,
            tcfg,
            chunk,
            ForwardMode::Eval,
            &mut rng,
        )?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / instances.len() as f64)
}

/// Trains pi (and delta for RC/LT) with AdamW on the penalty loss.
/// Returns the best-validation weights and the full loss history.
pub fn train(
    coeffs: &CoefficientSet,
    dataset: &Dataset,
    pi_spec: &MlpSpec,
    delta_spec: Option<&MlpSpec>,
    ccfg: &CorrectionConfig,
    tcfg: &TrainingConfig,
) -> Result<(ModelWeights, Vec<EpochRecord>)> {
    if dataset.train.is_empty() || dataset.validation.is_empty() {
        return Err(CoreError::DimensionMismatch {
            context: "training requires nonempty train and validation splits".into(),
        });
    }
    let mut pi = init_mlp(pi_spec, Rng::derive(tcfg.seed, 10).next_u64());
    let mut delta = if ccfg.method.uses_delta() {
        let spec = delta_spec.ok_or(CoreError::UnsupportedMethod {
            method: ccfg.method.tag(),
            context: "training without a delta spec",
        })?;
        Some(init_mlp(spec, Rng::derive(tcfg.seed, 11).next_u64()))
    } else {
        None
    };

    let sizes: Vec<usize> = pi
        .param_values_mut()
        .iter()
        .map(|t| t.len())
        .chain(
            delta
                .as_mut()
                .map(|d| d.param_values_mut().iter().map(|t| t.len()).collect::<Vec<_>>())
                .unwrap_or_default(),
        )
        .collect();
    let mut opt = AdamW::new(tcfg.learning_rate, &sizes);

    let mut history = Vec::new();
    let mut best: Option<(f64, MlpWeights, Option<MlpWeights>)> = None;
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();

    for epoch in 0..tcfg.max_epochs {
        let mut rng = Rng::derive(tcfg.seed, 1000 + epoch as u64);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(tcfg.batch_size.max(2)) {
            if chunk.len() < 2 {
                // Batch norm needs at least two rows; drop the remainder.
                continue;
            }
            let batch: Vec<ParametricInstance> =
                chunk.iter().map(|&i| dataset.train[i].clone()).collect();
            let (loss, grads) = batch_loss(
                coeffs, &mut pi, &mut delta, ccfg, tcfg, &batch, ForwardMode::Train, &mut rng,
            )
            .map_err(|e| match e {
                CoreError::TrainingDiverged { .. } => CoreError::TrainingDiverged { epoch },
                other => other,
            })?;
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(CoreError::TrainingDiverged { epoch });
            }
            let mut params = pi.param_values_mut();
            if let Some(d) = delta.as_mut() {
                params.extend(d.param_values_mut());
            }
            opt.step(&mut params, &grads);
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = epoch_loss / seen.max(1) as f64;
        let val_loss = split_loss(coeffs, &mut pi, &mut delta, ccfg, tcfg, &dataset.validation)?;
        if !val_loss.is_finite() {
            return Err(CoreError::TrainingDiverged { epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss: val_loss,
        });
        let improved = best.as_ref().map_or(true, |(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, pi.clone(), delta.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                break;
            }
        }
    }
    let (_, pi, delta) = best.expect("at least one epoch ran");
    Ok((ModelWeights { pi, delta }, history))
}

/// EVAL-mode relaxed prediction for one instance.
pub fn predict_relaxed(
    coeffs: &CoefficientSet,
    pi: &MlpWeights,
    instance: &ParametricInstance,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let xi = xi_matrix(coeffs, std::slice::from_ref(instance))?;
    let x = tape.constant(xi);
    let pass = pi.forward_eval(&mut tape, x)?;
    Ok(tape.value(pass.output).data().to_vec())
}

/// EVAL-mode corrected solution for one instance (noise disabled; RS and RL
/// round to nearest).
pub fn predict_corrected(
    coeffs: &CoefficientSet,
    weights: &ModelWeights,
    ccfg: &CorrectionConfig,
    instance: &ParametricInstance,
) -> Result<MixedIntegerSolution> {
    let xbar = predict_relaxed(coeffs, &weights.pi, instance)?;
    match ccfg.method {
        Method::Rs | Method::Rl => rs_round(coeffs, &xbar),
        Method::Rc | Method::Lt => {
            let delta = weights.delta.as_ref().ok_or(CoreError::UnsupportedMethod {
                method: ccfg.method.tag(),
                context: "evaluation without trained delta weights",
            })?;
            let mut tape = Tape::new();
            let xi = TensorValue::matrix(1, coeffs.n_xi, instance.xi.clone())?;
            let x = tape.constant(TensorValue::matrix(1, xbar.len(), xbar.clone())?);
            let mut d = delta.clone();
            let mut rng = Rng::new(0);
            let graph = correct_on_tape(
                &mut tape,
                coeffs,
                Some(&mut d),
                ccfg,
                x,
                &xi,
                ForwardMode::Eval,
                false,
                &mut rng,
            )?;
            let flat = tape.value(graph.xhat).data().to_vec();
            let (x_r, x_z) = coeffs.split(&flat);
            MixedIntegerSolution::new(x_r, x_z)
        }
    }
}

/// Aggregates per-instance records into summary metrics.
pub fn summarize(instances: Vec<InstanceRecord>, tolerance: f64) -> Metrics {
    let n = instances.len().max(1) as f64;
    let mut objs: Vec<f64> = instances.iter().map(|r| r.objective).collect();
    objs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if objs.is_empty() {
        0.0
    } else if objs.len() % 2 == 1 {
        objs[objs.len() / 2]
    } else {
        0.5 * (objs[objs.len() / 2 - 1] + objs[objs.len() / 2])
    };
    Metrics {
        objective_mean: instances.iter().map(|r| r.objective).sum::<f64>() / n,
        objective_median: median,
        feasible_fraction: instances
            .iter()
            .filter(|r| r.violation <= tolerance)
            .count() as f64
            / n,
        mean_time_s: instances.iter().map(|r| r.time_s).sum::<f64>() / n,
        instances,
    }
}

/// Runs EVAL-mode inference per test instance and aggregates metrics.
pub fn evaluate(
    coeffs: &CoefficientSet,
    testset: &[ParametricInstance],
    weights: &ModelWeights,
    ccfg: &CorrectionConfig,
    tolerance: f64,
) -> Result<Metrics> {
    let mut records = Vec::with_capacity(testset.len());
    for inst in testset {
        let t0 = Instant::now();
        let sol = predict_corrected(coeffs, weights, ccfg, inst)?;
        let time_s = t0.elapsed().as_secs_f64();
        records.push(InstanceRecord {
            objective: crate::problems::objective(coeffs, inst, &sol)?,
            violation: violation(coeffs, inst, &sol)?,
            time_s,
        });
    }
    Ok(summarize(records, tolerance))
}
