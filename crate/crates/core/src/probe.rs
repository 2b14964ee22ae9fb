//! Gradient diagnostics: per-layer gradient norms, finite-difference
//! verification of the backward pass, and first-versus-last gradient ratios
//! through stacks of dense blocks.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{init_params, ArchSpec, BaseArch, ModelSpec};
use crate::nn::{softmax_xent, Activation, Network, Tensor};
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;

fn norm_of<T: Scalar>(tensors: &[Tensor<T>]) -> f64 {
    tensors.iter().map(|t| t.l2_norm().powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub index: usize,
    pub kind: String,
    /// Over all of the layer's parameters; 0 for layers without any.
    pub param_grad_norm: f64,
    /// Weight tensor only.
    pub weight_grad_norm: f64,
    /// Gradient arriving at the layer's output.
    pub output_grad_norm: f64,
    /// Gradient passed on to the layer's input.
    pub input_grad_norm: f64,
    pub finite: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientProfile {
    pub loss: f64,
    pub layers: Vec<LayerProfile>,
}

impl GradientProfile {
    pub fn non_finite_layers(&self) -> Vec<usize> {
        self.layers.iter().filter(|l| !l.finite).map(|l| l.index).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,kind,param_grad_norm,weight_grad_norm,output_grad_norm,input_grad_norm,finite\n");
        for l in &self.layers {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                l.index, l.kind, l.param_grad_norm, l.weight_grad_norm, l.output_grad_norm, l.input_grad_norm, l.finite
            ));
        }
        out
    }
}

/// One forward and backward pass of the cross-entropy loss on a copy of
/// `net`; the caller's network is not touched.
pub fn gradient_profile<T: Scalar>(net: &Network<T>, x: &Tensor<T>, labels: &[usize]) -> Result<GradientProfile> {
    if labels.is_empty() {
        return Err(Error::invalid("gradient profile needs a non-empty batch"));
    }
    let mut work = net.clone();
    let logits = work.forward(x)?;
    let (loss, upstream) = softmax_xent(&logits, labels)?;
    let grads = work.backward(&upstream)?;
    let mut layers = Vec::with_capacity(grads.len());
    for (i, g) in grads.iter().enumerate() {
        let output = if i + 1 < grads.len() { &grads[i + 1].input } else { &upstream };
        let finite = g.input.all_finite() && g.params.iter().all(Tensor::all_finite);
        layers.push(LayerProfile {
            index: i,
            kind: net.layers()[i].kind().to_string(),
            param_grad_norm: norm_of(&g.params),
            weight_grad_norm: g.params.first().map_or(0.0, Tensor::l2_norm),
            output_grad_norm: output.l2_norm(),
            input_grad_norm: g.input.l2_norm(),
            finite,
        });
    }
    Ok(GradientProfile { loss: loss.as_f64(), layers })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Parameter coordinates checked at most; larger networks are sampled.
    pub max_coords: usize,
    /// Relative errors use `max(|analytic|, |numeric|, floor)` as denominator.
    pub floor: f64,
    /// Also check the gradient with respect to the input batch.
    pub include_input: bool,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-5, max_coords: 10_000, floor: 1e-3, include_input: false, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Location of the largest error, e.g. `3.weight[17]` or `input[4]`.
    pub worst: Option<String>,
    pub checked: usize,
    /// Coordinates whose perturbation moved a pre-activation across a kink.
    pub skipped: usize,
    pub total_params: usize,
}

fn kink_signs<T: Scalar>(net: &Network<T>, i: usize, h: &Tensor<T>) -> Option<Vec<i8>> {
    net.layers()[i].activation().filter(|a| a.has_kink()).map(|_| {
        h.data()
            .iter()
            .map(|&v| if v > T::zero() { 1 } else if v < T::zero() { -1 } else { 0 })
            .collect()
    })
}

/// Loss from layer `start` on; `None` when a kinked activation input
/// changes sign relative to `base_signs`.
fn loss_from(
    net: &Network<f64>,
    start: usize,
    h: &Tensor<f64>,
    labels: &[usize],
    base_signs: &[Option<Vec<i8>>],
) -> Result<Option<f64>> {
    let mut crossed = false;
    let logits = net.infer_from(start, h, |i, pre| {
        if !crossed {
            if let (Some(now), Some(base)) = (kink_signs(net, i, pre), &base_signs[i]) {
                crossed = now != *base;
            }
        }
    })?;
    if crossed {
        return Ok(None);
    }
    Ok(Some(softmax_xent(&logits, labels)?.0))
}

/// Central finite differences of the mean cross-entropy against the
/// analytic backward pass. Networks with more than `max_coords` parameters
/// are checked on a seeded sample that covers every parameter tensor.
pub fn check_gradients(
    net: &Network<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if !(cfg.eps > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut work = net.clone();
    let logits = work.forward(x)?;
    let (_, upstream) = softmax_xent(&logits, labels)?;
    let grads = work.backward(&upstream)?;
    let trace = net.trace(x)?;
    let base_signs: Vec<Option<Vec<i8>>> =
        (0..net.layers().len()).map(|i| kink_signs(net, i, &trace[i])).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
        total_params: net.count_params(),
    };
    let mut record = |analytic: f64, numeric: Option<f64>, at: &dyn Fn() -> String| match numeric {
        None => report.skipped += 1,
        Some(n) => {
            report.checked += 1;
            let err = (analytic - n).abs() / analytic.abs().max(n.abs()).max(cfg.floor);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some(at());
            }
        }
    };
    let central = |plus: Option<f64>, minus: Option<f64>| match (plus, minus) {
        (Some(p), Some(m)) => Some((p - m) / (2.0 * cfg.eps)),
        _ => None,
    };

    // (layer, slot, tensor length) for every parameter tensor
    let tensors: Vec<(usize, usize, usize)> = net
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.params().iter().enumerate().map(move |(s, p)| (i, s, p.len())))
        .collect();
    let total: usize = tensors.iter().map(|t| t.2).sum();
    let mut rng = rng_for(cfg.seed, stream::PROBE, 0);
    let mut probe = net.clone();
    for (flat, &(layer, slot, len)) in tensors.iter().enumerate() {
        let coords: Vec<usize> = if total <= cfg.max_coords {
            (0..len).collect()
        } else {
            let quota = ((cfg.max_coords as f64 * len as f64 / total as f64).round() as usize).max(len.min(16)).min(len);
            let mut picked = sample(&mut rng, len, quota).into_vec();
            picked.sort_unstable();
            picked
        };
        let analytic = grads[layer].params[slot].data();
        for j in coords {
            let original = probe.layers()[layer].params()[slot].data()[j];
            let mut eval_at = |value: f64| -> Result<Option<f64>> {
                probe.params_mut()[flat].data_mut()[j] = value;
                loss_from(&probe, layer, &trace[layer], labels, &base_signs)
            };
            let plus = eval_at(original + cfg.eps)?;
            let minus = eval_at(original - cfg.eps)?;
            eval_at(original)?;
            record(analytic[j], central(plus, minus), &|| format!("{}[{j}]", crate::nn::param_name(layer, slot)));
        }
    }

    if cfg.include_input {
        let input_grad = grads.first().map(|g| g.input.clone()).unwrap_or_else(|| upstream.clone());
        let mut shifted = x.clone();
        for j in 0..x.len() {
            let original = x.data()[j];
            shifted.data_mut()[j] = original + cfg.eps;
            let plus = loss_from(net, 0, &shifted, labels, &base_signs)?;
            shifted.data_mut()[j] = original - cfg.eps;
            let minus = loss_from(net, 0, &shifted, labels, &base_signs)?;
            shifted.data_mut()[j] = original;
            record(input_grad.data()[j], central(plus, minus), &|| format!("input[{j}]"));
        }
    }
    Ok(report)
}

/// Pushes every entry of `x` to at least `min_abs` in magnitude, keeping
/// its sign (zeros become `+min_abs`).
pub fn clamp_away_from_zero(x: &Tensor<f64>, min_abs: f64) -> Tensor<f64> {
    x.map(|v| if v.abs() >= min_abs { v } else if v < 0.0 { -min_abs } else { min_abs })
}

/// Seeded batch of MNIST-shaped inputs uniform on `[0, 1)` with uniform labels.
pub fn random_batch<T: Scalar>(shape: &[usize], classes: usize, n: usize, seed: u64) -> Result<(Tensor<T>, Vec<usize>)> {
    if n == 0 || classes == 0 {
        return Err(Error::invalid("random batch needs n >= 1 and at least one class"));
    }
    let mut rng = rng_for(seed, stream::PROBE, 1);
    let len = n * shape.iter().product::<usize>();
    let data = (0..len).map(|_| T::from_f64_lossy(rng.gen::<f64>())).collect();
    let mut full = vec![n];
    full.extend_from_slice(shape);
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    Ok((Tensor::new(full, data)?, labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRatio {
    pub depth: usize,
    pub activation: Activation,
    /// Deepest over shallowest disturbing-layer weight-gradient norm.
    pub ratio: f64,
    pub shallowest_norm: Option<f64>,
    pub deepest_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSweepConfig {
    pub base: BaseArch,
    pub base_activation: Activation,
    pub batch: usize,
    pub seed: u64,
}

impl Default for DepthSweepConfig {
    fn default() -> Self {
        DepthSweepConfig { base: BaseArch::Lenet, base_activation: Activation::Abs, batch: 32, seed: 0 }
    }
}

/// Gradient-norm ratios through `depth` appended dense blocks with
/// `activation`, measured at initialization on a seeded random batch.
pub fn depth_sweep(activation: Activation, depths: &[usize], cfg: &DepthSweepConfig) -> Result<Vec<DepthRatio>> {
    let base_len = cfg.base.layers(cfg.base_activation).len();
    let (x, labels) = random_batch::<f64>(&crate::models::MNIST_INPUT, crate::models::MNIST_CLASSES, cfg.batch, cfg.seed)?;
    let mut rows = Vec::with_capacity(depths.len());
    for &depth in depths {
        if depth == 0 {
            rows.push(DepthRatio { depth, activation, ratio: 1.0, shallowest_norm: None, deepest_norm: None });
            continue;
        }
        let spec = ModelSpec::new(ArchSpec::degraded(cfg.base, depth, activation), cfg.base_activation);
        let mut net = spec.build::<f64>()?;
        init_params(&mut net, cfg.seed);
        let profile = gradient_profile(&net, &x, &labels)?;
        let bad = profile.non_finite_layers();
        if !bad.is_empty() {
            log::warn!("depth {depth}: non-finite gradients at layers {bad:?}");
        }
        let first = profile.layers[base_len].weight_grad_norm;
        let last = profile.layers[base_len + 2 * (depth - 1)].weight_grad_norm;
        rows.push(DepthRatio {
            depth,
            activation,
            ratio: last / first,
            shallowest_norm: Some(first),
            deepest_norm: Some(last),
        });
    }
    Ok(rows)
}

pub fn depth_sweep_csv(rows: &[DepthRatio]) -> String {
    let mut out = String::from("depth,activation,ratio,shallowest_norm,deepest_norm\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.depth,
            r.activation,
            r.ratio,
            opt(r.shallowest_norm),
            opt(r.deepest_norm)
        ));
    }
    out
}
