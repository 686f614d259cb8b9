//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Hidden layers use `tanh`; the output layer is affine. Weights are stored
//! as `(fan_out, fan_in)` matrices so a batch `X` of shape `(batch, fan_in)`
//! maps to `X W^T + b`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

/// Parameters of a dense MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetSnapshot", into = "NetSnapshot")]
pub struct Mlp {
    widths: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
}

/// Gradients (or any per-parameter quantity) shaped like an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlocksSnapshot", into = "BlocksSnapshot")]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Result of [`Mlp::eval_with_grad`].
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub outputs: Array2<f64>,
    pub param_grads: Option<MlpGrads>,
    pub input_grads: Option<Array2<f64>>,
}

/// Row-major JSON form of an MLP, as written in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSnapshot {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlocksSnapshot {
    weight_shapes: Vec<(usize, usize)>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::Config(format!(
            "an MLP needs at least an input and an output width, got {widths:?}"
        )));
    }
    if widths.contains(&0) {
        return Err(Error::Config(format!(
            "layer widths must be positive, got {widths:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        validate_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            let w =
                Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-bound..=bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases,
            activation: Activation::Tanh,
        })
    }

    /// All-zero network of the given shape.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            weights: widths
                .windows(2)
                .map(|p| Array2::zeros((p[1], p[0])))
                .collect(),
            biases: widths.windows(2).map(|p| Array1::zeros(p[1])).collect(),
            activation: Activation::Tanh,
        })
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::contract(
                "weights and biases must be non-empty and paired",
            ));
        }
        let mut widths = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *widths.last().unwrap() {
                return Err(Error::contract(format!(
                    "layer {l} expects fan_in {} but previous width is {}",
                    w.ncols(),
                    widths.last().unwrap()
                )));
            }
            if b.len() != w.nrows() {
                return Err(Error::contract(format!(
                    "layer {l} bias length {} does not match fan_out {}",
                    b.len(),
                    w.nrows()
                )));
            }
            widths.push(w.nrows());
        }
        validate_widths(&widths)?;
        let net = Self {
            widths,
            weights,
            biases,
            activation: Activation::Tanh,
        };
        if !net.is_finite() {
            return Err(Error::contract("MLP parameters must be finite"));
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_width() {
            return Err(Error::contract(format!(
                "input width {} does not match network input width {}",
                input.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Inputs to every layer: `acts[0]` is the input, `acts[l]` the tanh
    /// output of layer `l - 1`.
    fn layer_inputs(&self, input: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let last = self.n_layers() - 1;
        let mut acts = Vec::with_capacity(self.n_layers());
        acts.push(input.to_owned());
        for l in 0..last {
            let mut z = acts[l].dot(&self.weights[l].t());
            z += &self.biases[l];
            z.mapv_inplace(f64::tanh);
            acts.push(z);
        }
        acts
    }

    /// Backpropagates `delta = d/dz_top` down to the input, filling the
    /// gradients of layers `0..=top`.
    fn backprop(
        &self,
        acts: &[Array2<f64>],
        mut delta: Array2<f64>,
        top: usize,
        grads: &mut MlpGrads,
    ) -> Array2<f64> {
        for l in (0..=top).rev() {
            grads.weights[l] = delta.t().dot(&acts[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            let mut back = delta.dot(&self.weights[l]);
            if l > 0 {
                tanh_backward(&mut back, &acts[l]);
            }
            delta = back;
        }
        delta
    }

    fn check_upstream(upstream: &ArrayView2<f64>, dim: (usize, usize)) -> Result<()> {
        if upstream.dim() != dim {
            return Err(Error::contract(format!(
                "upstream gradient shape {:?} does not match output shape {dim:?}",
                upstream.dim()
            )));
        }
        Ok(())
    }

    /// Forward pass only.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let last = self.n_layers() - 1;
        let acts = self.layer_inputs(input);
        let mut out = acts[last].dot(&self.weights[last].t());
        out += &self.biases[last];
        Ok(out)
    }

    /// Forward pass and, when `upstream` is given, the exact gradients of
    /// `<upstream, outputs>` with respect to parameters and inputs.
    pub fn eval_with_grad(
        &self,
        input: ArrayView2<f64>,
        upstream: Option<ArrayView2<f64>>,
    ) -> Result<Evaluation> {
        let Some(upstream) = upstream else {
            return Ok(Evaluation {
                outputs: self.forward(input)?,
                param_grads: None,
                input_grads: None,
            });
        };
        let mut input_grads = None;
        let (outputs, grads) =
            self.backward_with(input, |_| Ok(upstream.to_owned()), &mut input_grads)?;
        Ok(Evaluation {
            outputs,
            param_grads: Some(grads),
            input_grads,
        })
    }

    /// One forward and one backward pass, where the upstream gradient is
    /// computed from the outputs by `upstream_of`.
    pub fn forward_backward<F>(
        &self,
        input: ArrayView2<f64>,
        upstream_of: F,
    ) -> Result<(Array2<f64>, MlpGrads)>
    where
        F: FnOnce(&Array2<f64>) -> Result<Array2<f64>>,
    {
        self.backward_with(input, upstream_of, &mut None)
    }

    fn backward_with<F>(
        &self,
        input: ArrayView2<f64>,
        upstream_of: F,
        input_grads: &mut Option<Array2<f64>>,
    ) -> Result<(Array2<f64>, MlpGrads)>
    where
        F: FnOnce(&Array2<f64>) -> Result<Array2<f64>>,
    {
        self.check_input(&input)?;
        let last = self.n_layers() - 1;
        let acts = self.layer_inputs(input);
        let mut outputs = acts[last].dot(&self.weights[last].t());
        outputs += &self.biases[last];
        let upstream = upstream_of(&outputs)?;
        Self::check_upstream(&upstream.view(), outputs.dim())?;

        let mut grads = self.zero_grads();
        *input_grads = Some(self.backprop(&acts, upstream, last, &mut grads));
        Ok((outputs, grads))
    }

    /// `f(a_i) - f(b_i)` for inputs stacked as `[a; b]`. The output bias
    /// cancels, so the last layer is applied to the difference of hidden
    /// features and the bias never enters.
    pub fn paired_difference(&self, stacked: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (acts, _) = self.paired_features(stacked)?;
        let last = self.n_layers() - 1;
        Ok(acts.1.dot(&self.weights[last].t()))
    }

    /// As [`Mlp::paired_difference`], plus the parameter gradient of
    /// `<upstream, outputs>` with the upstream computed from the outputs by
    /// `upstream_of`. The output-bias gradient is exactly zero.
    pub fn paired_forward_backward<F>(
        &self,
        stacked: ArrayView2<f64>,
        upstream_of: F,
    ) -> Result<(Array2<f64>, MlpGrads)>
    where
        F: FnOnce(&Array2<f64>) -> Result<Array2<f64>>,
    {
        let ((acts, diff), n) = self.paired_features(stacked)?;
        let last = self.n_layers() - 1;
        let outputs = diff.dot(&self.weights[last].t());
        let upstream = upstream_of(&outputs)?;
        Self::check_upstream(&upstream.view(), outputs.dim())?;

        let mut grads = self.zero_grads();
        grads.weights[last] = upstream.t().dot(&diff);
        if last > 0 {
            let half = upstream.dot(&self.weights[last]);
            let mut back = Array2::zeros((2 * n, half.ncols()));
            back.slice_mut(s![..n, ..]).assign(&half);
            back.slice_mut(s![n.., ..]).assign(&(-&half));
            tanh_backward(&mut back, &acts[last]);
            self.backprop(&acts, back, last - 1, &mut grads);
        }
        Ok((outputs, grads))
    }

    /// Layer inputs of the stacked batch, the top-feature difference and `n`.
    #[allow(clippy::type_complexity)]
    fn paired_features(
        &self,
        stacked: ArrayView2<f64>,
    ) -> Result<((Vec<Array2<f64>>, Array2<f64>), usize)> {
        self.check_input(&stacked)?;
        if !stacked.nrows().is_multiple_of(2) {
            return Err(Error::contract("paired inputs need an even number of rows"));
        }
        let n = stacked.nrows() / 2;
        let acts = self.layer_inputs(stacked);
        let top = &acts[self.n_layers() - 1];
        let diff = &top.slice(s![..n, ..]) - &top.slice(s![n.., ..]);
        Ok(((acts, diff), n))
    }

    /// Parameters flattened in block order (w0, b0, w1, b1, ...), row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten_blocks(&self.weights, &self.biases)
    }

    /// Same architecture with parameters taken from a flat vector.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.n_params() {
            return Err(Error::contract(format!(
                "flat parameter length {} does not match {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for (w, b) in out.weights.iter_mut().zip(out.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
            for v in b.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
        }
        Ok(out)
    }

    /// Names and lengths of the parameter blocks, in flat order.
    pub fn block_layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::with_capacity(2 * self.n_layers());
        for l in 0..self.n_layers() {
            out.push((format!("weights[{l}]"), self.weights[l].len()));
            out.push((format!("biases[{l}]"), self.biases[l].len()));
        }
        out
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self
                .weights
                .iter()
                .map(|w| Array2::zeros(w.dim()))
                .collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }
}

/// `back *= 1 - act^2`, the tanh derivative written in terms of its output.
fn tanh_backward(back: &mut Array2<f64>, act: &Array2<f64>) {
    Zip::from(back).and(act).for_each(|d, &a| *d *= 1.0 - a * a);
}

fn flatten_blocks(weights: &[Array2<f64>], biases: &[Array1<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in weights.iter().zip(biases) {
        out.extend(w.iter().copied());
        out.extend(b.iter().copied());
    }
    out
}

impl MlpGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        flatten_blocks(&self.weights, &self.biases)
    }

    /// `self += other`, block by block.
    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }

    /// First block holding a non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.iter().any(|v| !v.is_finite()) {
                return Some(format!("weights[{l}]"));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Some(format!("biases[{l}]"));
            }
        }
        None
    }

    fn same_shape(&self, net: &Mlp) -> bool {
        self.weights.len() == net.weights.len()
            && self
                .weights
                .iter()
                .zip(&net.weights)
                .all(|(a, b)| a.dim() == b.dim())
            && self
                .biases
                .iter()
                .zip(&net.biases)
                .all(|(a, b)| a.len() == b.len())
    }
}

impl From<Mlp> for NetSnapshot {
    fn from(net: Mlp) -> Self {
        NetSnapshot {
            widths: net.widths,
            activation: net.activation,
            weights: net
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: net.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }
}

impl TryFrom<NetSnapshot> for Mlp {
    type Error = Error;

    fn try_from(snap: NetSnapshot) -> Result<Self> {
        validate_widths(&snap.widths)?;
        let n = snap.widths.len() - 1;
        if snap.weights.len() != n || snap.biases.len() != n {
            return Err(Error::contract(format!(
                "snapshot has {} weight and {} bias blocks for {n} layers",
                snap.weights.len(),
                snap.biases.len()
            )));
        }
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for (l, (w, b)) in snap.weights.into_iter().zip(snap.biases).enumerate() {
            let shape = (snap.widths[l + 1], snap.widths[l]);
            weights.push(
                Array2::from_shape_vec(shape, w)
                    .map_err(|e| Error::contract(format!("weights[{l}]: {e}")))?,
            );
            biases.push(Array1::from(b));
        }
        let net = Mlp::from_parts(weights, biases)?;
        Ok(Mlp {
            activation: snap.activation,
            ..net
        })
    }
}

impl From<MlpGrads> for BlocksSnapshot {
    fn from(g: MlpGrads) -> Self {
        BlocksSnapshot {
            weight_shapes: g.weights.iter().map(|w| w.dim()).collect(),
            weights: g
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: g.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }
}

impl TryFrom<BlocksSnapshot> for MlpGrads {
    type Error = Error;

    fn try_from(snap: BlocksSnapshot) -> Result<Self> {
        if snap.weight_shapes.len() != snap.weights.len() || snap.weights.len() != snap.biases.len()
        {
            return Err(Error::contract("inconsistent block counts in snapshot"));
        }
        let weights = snap
            .weight_shapes
            .into_iter()
            .zip(snap.weights)
            .map(|(shape, w)| {
                Array2::from_shape_vec(shape, w).map_err(|e| Error::contract(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MlpGrads {
            weights,
            biases: snap.biases.into_iter().map(Array1::from).collect(),
        })
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if !ok {
            return Err(Error::Config(format!(
                "invalid Adam hyperparameters {self:?}"
            )));
        }
        Ok(())
    }

    /// One bias-corrected Adam update of a flat parameter slice. `step` is the
    /// 1-based index of this update.
    pub fn update_slice(
        &self,
        params: &mut [f64],
        grads: &[f64],
        m: &mut [f64],
        v: &mut [f64],
        step: u64,
    ) {
        let bc1 = 1.0 - self.beta1.powf(step as f64);
        let bc2 = 1.0 - self.beta2.powf(step as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Optimizer state: moment accumulators shaped like the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    #[serde(flatten)]
    pub config: AdamConfig,
    pub step: u64,
    pub m: MlpGrads,
    pub v: MlpGrads,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: net.zero_grads(),
            v: net.zero_grads(),
        }
    }
}

/// Applies one Adam update in place. Nothing is modified if any gradient
/// entry is non-finite.
pub fn adam_step(params: &mut Mlp, grads: &MlpGrads, state: &mut AdamState) -> Result<()> {
    if !grads.same_shape(params) || !state.m.same_shape(params) || !state.v.same_shape(params) {
        return Err(Error::contract(
            "gradient/moment shapes do not match parameters",
        ));
    }
    if let Some(block) = grads.first_non_finite() {
        return Err(Error::training(format!("non-finite gradient in {block}")));
    }
    state.step += 1;
    let step = state.step;
    let cfg = state.config;
    for l in 0..params.n_layers() {
        cfg.update_slice(
            params.weights[l].as_slice_mut().expect("standard layout"),
            grads.weights[l].as_slice().expect("standard layout"),
            state.m.weights[l].as_slice_mut().expect("standard layout"),
            state.v.weights[l].as_slice_mut().expect("standard layout"),
            step,
        );
        cfg.update_slice(
            params.biases[l].as_slice_mut().expect("standard layout"),
            grads.biases[l].as_slice().expect("standard layout"),
            state.m.biases[l].as_slice_mut().expect("standard layout"),
            state.v.biases[l].as_slice_mut().expect("standard layout"),
            step,
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub blocks: Vec<BlockError>,
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares an analytic gradient with central finite differences of `f`
/// taken at `theta` with step `h`.
pub fn compare_with_finite_differences<F>(
    f: F,
    theta: &[f64],
    analytic: &[f64],
    layout: &[(String, usize)],
    h: f64,
) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = theta.to_vec();
    let mut blocks = Vec::with_capacity(layout.len());
    let mut offset = 0;
    for (name, len) in layout {
        let mut worst: f64 = 0.0;
        for k in offset..offset + len {
            let orig = probe[k];
            probe[k] = orig + h;
            let up = f(&probe);
            probe[k] = orig - h;
            let down = f(&probe);
            probe[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[k], numeric));
        }
        blocks.push(BlockError {
            name: name.clone(),
            max_rel_error: worst,
        });
        offset += len;
    }
    GradCheckReport {
        max_rel_error: blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max),
        blocks,
    }
}

/// Finite-difference check of the gradient of `sum(outputs)` over a batch.
pub fn grad_check(params: &Mlp, input: ArrayView2<f64>) -> Result<GradCheckReport> {
    let n_out = params.output_width();
    let upstream = Array2::ones((input.nrows(), n_out));
    let eval = params.eval_with_grad(input, Some(upstream.view()))?;
    let analytic = eval.param_grads.expect("upstream supplied").to_flat();
    let theta = params.to_flat();
    let f = |flat: &[f64]| -> f64 {
        let net = params.with_flat(flat).expect("same length");
        net.forward(input).expect("checked shape").sum()
    };
    Ok(compare_with_finite_differences(
        f,
        &theta,
        &analytic,
        &params.block_layout(),
        1e-5,
    ))
}
