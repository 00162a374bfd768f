//! Mapping between core types and on-disk containers.

use anyhow::{bail, Context, Result};
use milo_core::correction::{CorrectionConfig, Method};
use milo_core::net::{BatchNorm, DenseLayer, MlpSpec, MlpWeights};
use milo_core::problems::{CoefficientSet, Family, ParametricInstance};
use milo_core::training::{ModelWeights, TrainingConfig};
use milo_core::TensorValue;
use serde_json::{json, Value};

use crate::container::{Container, NamedArray};
use crate::manifest::RunManifest;

fn get_usize(meta: &Value, key: &str) -> Result<usize> {
    meta.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .with_context(|| format!("metadata is missing integer field {key:?}"))
}

fn expect_kind(meta: &Value, kind: &str) -> Result<()> {
    let got = meta.get("kind").and_then(Value::as_str).unwrap_or("");
    if got != kind {
        bail!("expected a {kind:?} container, found {got:?}");
    }
    Ok(())
}

// --- coefficients ---

pub fn coefficients_container(
    coeffs: &CoefficientSet,
    n: usize,
    m: usize,
    manifest: &RunManifest,
) -> Result<Container> {
    let mut c = Container::new(json!({
        "kind": "coefficients",
        "family": coeffs.family.tag(),
        "n": n,
        "m": m,
        "n_r": coeffs.n_r,
        "n_z": coeffs.n_z,
        "n_c": coeffs.n_c,
        "n_xi": coeffs.n_xi,
        "seed": coeffs.seed,
        "manifest": serde_json::to_value(manifest)?,
    }));
    c.push(NamedArray::rank1("q", coeffs.q.clone()));
    c.push(NamedArray::rank1("p", coeffs.p.clone()));
    c.push(NamedArray::rank1("a", coeffs.a.clone()));
    Ok(c)
}

/// Returns the coefficient set plus the (n, m) it was generated with.
pub fn coefficients_from(c: &Container) -> Result<(CoefficientSet, usize, usize)> {
    expect_kind(&c.metadata, "coefficients")?;
    let family = Family::parse(
        c.metadata
            .get("family")
            .and_then(Value::as_str)
            .context("metadata is missing family")?,
    )?;
    let coeffs = CoefficientSet {
        family,
        n_r: get_usize(&c.metadata, "n_r")?,
        n_z: get_usize(&c.metadata, "n_z")?,
        n_c: get_usize(&c.metadata, "n_c")?,
        n_xi: get_usize(&c.metadata, "n_xi")?,
        q: c.array("q")?.data.clone(),
        p: c.array("p")?.data.clone(),
        a: c.array("a")?.data.clone(),
        seed: c
            .metadata
            .get("seed")
            .and_then(Value::as_u64)
            .context("metadata is missing seed")?,
    };
    Ok((
        coeffs,
        get_usize(&c.metadata, "n")?,
        get_usize(&c.metadata, "m")?,
    ))
}

// --- instance sets ---

pub fn instances_container(
    split: &str,
    instances: &[ParametricInstance],
    n_xi: usize,
    manifest: &RunManifest,
) -> Result<Container> {
    let mut data = Vec::with_capacity(instances.len() * n_xi);
    for inst in instances {
        if inst.xi.len() != n_xi {
            bail!("instance has {} parameters, expected {n_xi}", inst.xi.len());
        }
        data.extend_from_slice(&inst.xi);
    }
    let mut c = Container::new(json!({
        "kind": "instances",
        "split": split,
        "count": instances.len(),
        "n_xi": n_xi,
        "manifest": serde_json::to_value(manifest)?,
    }));
    c.push(NamedArray::rank2("xi", instances.len(), n_xi, data));
    Ok(c)
}

pub fn instances_from(c: &Container) -> Result<Vec<ParametricInstance>> {
    expect_kind(&c.metadata, "instances")?;
    let n_xi = get_usize(&c.metadata, "n_xi")?;
    let xi = c.array("xi")?;
    if xi.extents.len() != 2 || xi.extents[1] as usize != n_xi {
        bail!("xi array extents {:?} do not match n_xi {n_xi}", xi.extents);
    }
    Ok(xi
        .data
        .chunks(n_xi.max(1))
        .map(|row| ParametricInstance { xi: row.to_vec() })
        .collect())
}

// --- model weights ---

fn spec_json(spec: &MlpSpec) -> Value {
    json!({
        "widths": spec.widths,
        "batch_norm": spec.batch_norm,
        "dropout": spec.dropout,
    })
}

fn spec_from(v: &Value) -> Result<MlpSpec> {
    let widths: Vec<usize> = serde_json::from_value(
        v.get("widths").context("spec missing widths")?.clone(),
    )?;
    let batch_norm = v
        .get("batch_norm")
        .and_then(Value::as_bool)
        .context("spec missing batch_norm")?;
    let dropout = v
        .get("dropout")
        .and_then(Value::as_f64)
        .context("spec missing dropout")?;
    Ok(MlpSpec::new(widths, batch_norm, dropout)?)
}

fn push_mlp(c: &mut Container, prefix: &str, w: &MlpWeights) {
    for (i, layer) in w.layers.iter().enumerate() {
        let shape = layer.w.shape().to_vec();
        c.push(NamedArray::rank2(
            &format!("{prefix}.layer{i}.w"),
            shape[0],
            shape[1],
            layer.w.data().to_vec(),
        ));
        c.push(NamedArray::rank1(
            &format!("{prefix}.layer{i}.b"),
            layer.b.data().to_vec(),
        ));
    }
    for (i, norm) in w.norms.iter().enumerate() {
        if let Some(bn) = norm {
            for (field, t) in [
                ("scale", &bn.scale),
                ("shift", &bn.shift),
                ("running_mean", &bn.running_mean),
                ("running_var", &bn.running_var),
            ] {
                c.push(NamedArray::rank1(
                    &format!("{prefix}.norm{i}.{field}"),
                    t.data().to_vec(),
                ));
            }
        }
    }
}

fn mlp_from(c: &Container, prefix: &str, spec: MlpSpec) -> Result<MlpWeights> {
    let mut layers = Vec::new();
    for i in 0..spec.n_layers() {
        let w = c.array(&format!("{prefix}.layer{i}.w"))?;
        if w.extents.len() != 2 {
            bail!("{prefix}.layer{i}.w is not a matrix");
        }
        let b = c.array(&format!("{prefix}.layer{i}.b"))?;
        layers.push(DenseLayer {
            w: TensorValue::matrix(
                w.extents[0] as usize,
                w.extents[1] as usize,
                w.data.clone(),
            )?,
            b: TensorValue::vector(b.data.clone())?,
        });
    }
    let mut norms = Vec::new();
    for i in 0..spec.n_layers().saturating_sub(1) {
        if spec.batch_norm {
            let field = |f: &str| -> Result<TensorValue> {
                Ok(TensorValue::vector(
                    c.array(&format!("{prefix}.norm{i}.{f}"))?.data.clone(),
                )?)
            };
            norms.push(Some(BatchNorm {
                scale: field("scale")?,
                shift: field("shift")?,
                running_mean: field("running_mean")?,
                running_var: field("running_var")?,
            }));
        } else {
            norms.push(None);
        }
    }
    Ok(MlpWeights {
        spec,
        layers,
        norms,
    })
}

pub fn weights_container(
    weights: &ModelWeights,
    ccfg: &CorrectionConfig,
    tcfg: &TrainingConfig,
    manifest: &RunManifest,
) -> Result<Container> {
    let mut c = Container::new(json!({
        "kind": "weights",
        "method": ccfg.method.tag(),
        "correction": {"tau": ccfg.tau, "beta": ccfg.beta, "noise": ccfg.noise},
        "training": serde_json::to_value(tcfg)?,
        "pi_spec": spec_json(&weights.pi.spec),
        "delta_spec": weights.delta.as_ref().map(|d| spec_json(&d.spec)),
        "manifest": serde_json::to_value(manifest)?,
    }));
    push_mlp(&mut c, "pi", &weights.pi);
    if let Some(delta) = &weights.delta {
        push_mlp(&mut c, "delta", delta);
    }
    Ok(c)
}

pub fn weights_from(c: &Container) -> Result<(ModelWeights, CorrectionConfig)> {
    expect_kind(&c.metadata, "weights")?;
    let method = Method::parse(
        c.metadata
            .get("method")
            .and_then(Value::as_str)
            .context("metadata is missing method")?,
    )?;
    let corr = c
        .metadata
        .get("correction")
        .context("metadata is missing correction config")?;
    let mut ccfg = CorrectionConfig::new(method);
    ccfg.tau = corr.get("tau").and_then(Value::as_f64).unwrap_or(ccfg.tau);
    ccfg.beta = corr.get("beta").and_then(Value::as_f64).unwrap_or(ccfg.beta);
    ccfg.noise = corr
        .get("noise")
        .and_then(Value::as_bool)
        .unwrap_or(ccfg.noise);
    let pi_spec = spec_from(
        c.metadata
            .get("pi_spec")
            .context("metadata is missing pi_spec")?,
    )?;
    let pi = mlp_from(c, "pi", pi_spec)?;
    let delta = match c.metadata.get("delta_spec") {
        Some(Value::Null) | None => None,
        Some(v) => Some(mlp_from(c, "delta", spec_from(v)?)?),
    };
    Ok((ModelWeights { pi, delta }, ccfg))
}
