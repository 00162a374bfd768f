//! Small fully connected networks built on the autodiff tape.
//!
//! Two architectures are used: the solution mapping `pi` (five plain FC
//! layers with ReLU) and the correction net `delta` (four FC layers with
//! batch normalization and dropout 0.2). Forward passes are emitted as graph
//! nodes so gradients flow to both the inputs and every parameter.

use crate::autodiff::{NodeId, Tape};
use crate::error::{CoreError, Result};
use crate::problems::Family;
use crate::rng::Rng;
use crate::tensor::TensorValue;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Train,
    Eval,
}

/// Architecture description: widths plus the per-hidden-layer extras.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width. `k+1` entries mean `k`
    /// affine layers.
    pub widths: Vec<usize>,
    pub batch_norm: bool,
    pub dropout: f64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, batch_norm: bool, dropout: f64) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(CoreError::DimensionMismatch {
                context: format!("invalid layer widths {widths:?}"),
            });
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(CoreError::DimensionMismatch {
                context: format!("dropout rate {dropout} outside [0, 1)"),
            });
        }
        Ok(Self {
            widths,
            batch_norm,
            dropout,
        })
    }

    /// The solution mapping: five FC layers, ReLU, nothing else.
    pub fn pi(input: usize, hidden: usize, output: usize) -> Result<Self> {
        Self::new(vec![input, hidden, hidden, hidden, hidden, output], false, 0.0)
    }

    /// The correction net: four FC layers, ReLU, batch norm, dropout 0.2.
    pub fn delta(input: usize, hidden: usize, output: usize) -> Result<Self> {
        Self::new(vec![input, hidden, hidden, hidden, output], true, 0.2)
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// (out x in) weight matrix.
    pub w: TensorValue,
    /// (out) bias vector.
    pub b: TensorValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: TensorValue,
    pub shift: TensorValue,
    pub running_mean: TensorValue,
    pub running_var: TensorValue,
}

/// Concrete weights for one [`MlpSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub spec: MlpSpec,
    pub layers: Vec<DenseLayer>,
    /// One entry per hidden layer (all `Some` iff the spec enables BN).
    pub norms: Vec<Option<BatchNorm>>,
}

/// Graph handles from a forward pass: the output node plus the parameter
/// input nodes in [`MlpWeights::param_values_mut`] order.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: NodeId,
    pub params: Vec<NodeId>,
}

/// Fan-in-scaled uniform weights, zero biases, identity batch norm.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> MlpWeights {
    let mut rng = Rng::derive(seed, 0x11);
    let mut layers = Vec::with_capacity(spec.n_layers());
    let mut norms = Vec::new();
    for l in 0..spec.n_layers() {
        let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.uniform_in(-bound, bound))
            .collect();
        layers.push(DenseLayer {
            w: TensorValue::matrix(fan_out, fan_in, w).unwrap(),
            b: TensorValue::zeros(&[fan_out]),
        });
        if l + 1 < spec.n_layers() {
            norms.push(if spec.batch_norm {
                Some(BatchNorm {
                    scale: TensorValue::full(&[fan_out], 1.0),
                    shift: TensorValue::zeros(&[fan_out]),
                    running_mean: TensorValue::zeros(&[fan_out]),
                    running_var: TensorValue::full(&[fan_out], 1.0),
                })
            } else {
                None
            });
        }
    }
    MlpWeights {
        spec: spec.clone(),
        layers,
        norms,
    }
}

struct BnUpdate {
    hidden_index: usize,
    mean: Vec<f64>,
    unbiased_var: Vec<f64>,
}

impl MlpWeights {
    /// Mutable references to all trainable tensors, in the fixed order the
    /// forward pass reports its parameter nodes: per layer w, b, then the
    /// hidden layer's batch-norm scale and shift when present.
    pub fn param_values_mut(&mut self) -> Vec<&mut TensorValue> {
        let mut out = Vec::new();
        let n = self.layers.len();
        let mut norms = self.norms.iter_mut();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
            if l + 1 < n {
                if let Some(Some(bn)) = norms.next().map(|o| o.as_mut()) {
                    out.push(&mut bn.scale);
                    out.push(&mut bn.shift);
                }
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>()
            + self
                .norms
                .iter()
                .flatten()
                .map(|bn| bn.scale.len() + bn.shift.len())
                .sum::<usize>()
    }

    /// Deterministic inference-mode forward; running statistics are used for
    /// batch norm and dropout is disabled.
    pub fn forward_eval(&self, tape: &mut Tape, x: NodeId) -> Result<ForwardPass> {
        let (pass, _) = self.forward_impl(tape, x, ForwardMode::Eval, None)?;
        Ok(pass)
    }

    /// Training-mode forward: batch statistics, active dropout, and an
    /// in-place momentum update of the running statistics.
    pub fn forward_train(
        &mut self,
        tape: &mut Tape,
        x: NodeId,
        rng: &mut Rng,
    ) -> Result<ForwardPass> {
        let (pass, updates) = self.forward_impl(tape, x, ForwardMode::Train, Some(rng))?;
        for u in updates {
            let bn = self.norms[u.hidden_index].as_mut().unwrap();
            for (r, m) in bn.running_mean.data_mut().iter_mut().zip(&u.mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
            }
            for (r, v) in bn.running_var.data_mut().iter_mut().zip(&u.unbiased_var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
            }
        }
        Ok(pass)
    }

    fn forward_impl(
        &self,
        tape: &mut Tape,
        x: NodeId,
        mode: ForwardMode,
        mut rng: Option<&mut Rng>,
    ) -> Result<(ForwardPass, Vec<BnUpdate>)> {
        let in_shape = tape.value(x).shape().to_vec();
        if in_shape.len() != 2 || in_shape[1] != self.spec.widths[0] {
            return Err(CoreError::DimensionMismatch {
                context: format!(
                    "forward input shape {:?} vs input width {}",
                    in_shape, self.spec.widths[0]
                ),
            });
        }
        let batch = in_shape[0];
        if mode == ForwardMode::Train && self.spec.batch_norm && batch < 2 {
            return Err(CoreError::BatchTooSmall(batch));
        }

        let mut params = Vec::new();
        let mut updates = Vec::new();
        let mut h = x;
        let n_layers = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let w = tape.input(layer.w.clone());
            let b = tape.input(layer.b.clone());
            params.push(w);
            params.push(b);
            let wt = tape.transpose(w)?;
            let xw = tape.matmul(h, wt)?;
            h = tape.add(xw, b)?;
            if l + 1 == n_layers {
                break;
            }
            if let Some(bn) = self.norms[l].as_ref() {
                let scale = tape.input(bn.scale.clone());
                let shift = tape.input(bn.shift.clone());
                params.push(scale);
                params.push(shift);
                let normed = match mode {
                    ForwardMode::Train => {
                        let mean = tape.mean_axis0(h)?;
                        let centered = tape.sub(h, mean)?;
                        let sq = tape.square(centered);
                        let var = tape.mean_axis0(sq)?;
                        let var_eps = tape.add_const(var, BN_EPS);
                        let std = tape.sqrt(var_eps);
                        let mean_v = tape.value(mean).data().to_vec();
                        let biased = tape.value(var).data().to_vec();
                        let correction = batch as f64 / (batch as f64 - 1.0);
                        updates.push(BnUpdate {
                            hidden_index: l,
                            mean: mean_v,
                            unbiased_var: biased.iter().map(|v| v * correction).collect(),
                        });
                        tape.div(centered, std)?
                    }
                    ForwardMode::Eval => {
                        let rm = tape.constant(bn.running_mean.clone());
                        let denom = tape.constant(
                            bn.running_var.map(|v| (v + BN_EPS).sqrt()),
                        );
                        let centered = tape.sub(h, rm)?;
                        tape.div(centered, denom)?
                    }
                };
                let scaled = tape.mul(normed, scale)?;
                h = tape.add(scaled, shift)?;
            }
            h = tape.relu(h);
            if mode == ForwardMode::Train && self.spec.dropout > 0.0 {
                let rng = rng.as_deref_mut().expect("train forward needs an rng");
                let keep = 1.0 - self.spec.dropout;
                let width = self.spec.widths[l + 1];
                let mask: Vec<f64> = (0..batch * width)
                    .map(|_| if rng.uniform() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let mask = tape.constant(TensorValue::matrix(batch, width, mask)?);
                h = tape.mul(h, mask)?;
            }
        }
        Ok((ForwardPass { output: h, params }, updates))
    }
}

/// Hidden width used at a given problem scale, matching the reported
/// experiment configurations; unlisted sizes take the nearest listed one in
/// log-scale (larger wins ties).
pub fn hidden_width_for(family: Family, n: usize, _m: usize) -> usize {
    let anchors: &[(usize, usize)] = match family {
        Family::Iqp | Family::Inp => &[
            (20, 64),
            (50, 128),
            (100, 256),
            (200, 512),
            (500, 1024),
            (1000, 2048),
        ],
        Family::Mirb | Family::Rosenbrock2d => {
            &[(2, 4), (20, 16), (200, 64), (2000, 256), (10000, 1024)]
        }
    };
    let ln = (n.max(1) as f64).ln();
    let mut best = anchors[0].1;
    let mut best_d = f64::INFINITY;
    for &(size, width) in anchors {
        let d = (ln - (size as f64).ln()).abs();
        if d <= best_d {
            best_d = d;
            best = width;
        }
    }
    best
}
