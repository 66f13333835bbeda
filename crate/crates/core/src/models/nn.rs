//! A small dense network with hand-written backpropagation.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => x.mapv_inplace(f64::tanh),
            Activation::Sigmoid => x.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `inputs x outputs`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Layer widths and activations, enough to rebuild an [`Mlp`] from a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub weight: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl MlpGrad {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weight.iter().zip(&self.bias) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes` lists every layer width including input and output.
    pub fn new<R: Rng>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-limit..limit));
                Dense { weight, bias: Array1::zeros(fan_out), activation: if i + 1 == n { output } else { hidden } }
            })
            .collect();
        Self { layers }
    }

    pub fn from_spec(spec: &MlpSpec, params: &[f64]) -> Option<Self> {
        if spec.sizes.len() < 2 || spec.activations.len() != spec.sizes.len() - 1 {
            return None;
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        for (i, &act) in spec.activations.iter().enumerate() {
            let (fi, fo) = (spec.sizes[i], spec.sizes[i + 1]);
            let w = params.get(offset..offset + fi * fo)?.to_vec();
            offset += fi * fo;
            let b = params.get(offset..offset + fo)?.to_vec();
            offset += fo;
            layers.push(Dense {
                weight: Array2::from_shape_vec((fi, fo), w).ok()?,
                bias: Array1::from_vec(b),
                activation: act,
            });
        }
        (offset == params.len()).then_some(Self { layers })
    }

    pub fn spec(&self) -> MlpSpec {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.bias.len()));
        MlpSpec { sizes, activations: self.layers.iter().map(|l| l.activation).collect() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").bias.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let mut offset = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in l.bias.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for l in &self.layers {
            let mut z = h.dot(&l.weight) + &l.bias;
            l.activation.apply(&mut z);
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let mut z = h.dot(&l.weight) + &l.bias;
            l.activation.apply(&mut z);
            inputs.push(h);
            h = z;
            outputs.push(h.clone());
        }
        (h, MlpCache { inputs, outputs })
    }

    /// Gradients of the loss with respect to every parameter and to the input, given `dL/d(output)`.
    pub fn backward(&self, cache: &MlpCache, grad_output: Array2<f64>) -> (MlpGrad, Array2<f64>) {
        let n = self.layers.len();
        let mut weight = Vec::with_capacity(n);
        let mut bias = Vec::with_capacity(n);
        let mut g = grad_output;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let out = &cache.outputs[i];
            let act = l.activation;
            if act != Activation::Identity {
                g.zip_mut_with(out, |gv, &y| *gv *= act.derivative_from_output(y));
            }
            weight.push(cache.inputs[i].t().dot(&g));
            bias.push(g.sum_axis(Axis(0)));
            g = g.dot(&l.weight.t());
        }
        weight.reverse();
        bias.reverse();
        (MlpGrad { weight, bias }, g)
    }

    pub fn apply_update(&mut self, grad: &MlpGrad, opt: &mut Optimizer, first_slot: usize) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            opt.update(
                first_slot + 2 * i,
                l.weight.as_slice_mut().expect("standard layout"),
                grad.weight[i].as_slice().expect("standard layout"),
            );
            opt.update(
                first_slot + 2 * i + 1,
                l.bias.as_slice_mut().expect("standard layout"),
                grad.bias[i].as_slice().expect("standard layout"),
            );
        }
    }

    /// Number of optimizer slots this network occupies.
    pub fn slot_count(&self) -> usize {
        2 * self.layers.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Fixed-step first-order optimizer. State is kept per parameter tensor ("slot").
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self { kind, lr, step: 0, first: Vec::new(), second: Vec::new() }
    }

    /// Call once before updating the slots of one step.
    pub fn begin_step(&mut self) {
        self.step = self.step.saturating_add(1);
    }

    pub fn update(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.first.len() <= slot {
                    self.first.resize(slot + 1, Vec::new());
                    self.second.resize(slot + 1, Vec::new());
                }
                if self.first[slot].len() != params.len() {
                    self.first[slot] = vec![0.0; params.len()];
                    self.second[slot] = vec![0.0; params.len()];
                }
                let (m, v) = (&mut self.first[slot], &mut self.second[slot]);
                let c1 = 1.0 - BETA1.powi(self.step.max(1));
                let c2 = 1.0 - BETA2.powi(self.step.max(1));
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    params[i] -= self.lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Mean squared error over every element, with its gradient.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let count = pred.len() as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    (loss, diff * (2.0 / count))
}

/// Concatenates column blocks with equal row counts.
pub fn hstack(parts: &[&Array2<f64>]) -> Array2<f64> {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Array2::zeros((rows, cols));
    let mut c = 0;
    for p in parts {
        out.slice_mut(s![.., c..c + p.ncols()]).assign(p);
        c += p.ncols();
    }
    out
}

pub fn rows_from(vectors: &[Vec<f64>]) -> Array2<f64> {
    let cols = vectors.first().map_or(0, |v| v.len());
    let flat: Vec<f64> = vectors.iter().flat_map(|v| v.iter().copied()).collect();
    Array2::from_shape_vec((vectors.len(), cols), flat).expect("rows of equal length")
}

/// Gathers the listed rows.
pub fn select_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-4;
pub const GRADIENT_CHECK_TOLERANCE: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely rather than relatively.
const GRADIENT_FLOOR: f64 = 1e-6;

/// Compares `analytic` with central differences of `loss` at `probes` random parameters.
///
/// `loss` must evaluate the objective at the parameter vector it is given.
/// Returns the largest relative error, or a description of the first probe
/// that exceeds the tolerance.
pub fn check_gradient<F>(base: &[f64], analytic: &[f64], probes: usize, seed: u64, mut loss: F) -> Result<f64, String>
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(base.len(), analytic.len(), "gradient length mismatch");
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, base.len(), probes.min(base.len()));
    let mut worst: f64 = 0.0;
    let mut p = base.to_vec();
    for i in picks {
        p[i] = base[i] + GRADIENT_CHECK_STEP;
        let up = loss(&p);
        p[i] = base[i] - GRADIENT_CHECK_STEP;
        let down = loss(&p);
        p[i] = base[i];
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(GRADIENT_FLOOR);
        if rel > GRADIENT_CHECK_TOLERANCE {
            loss(base);
            return Err(format!(
                "parameter {i}: analytic {} vs numeric {numeric} (relative error {rel:.2e})",
                analytic[i]
            ));
        }
        worst = worst.max(rel);
    }
    loss(base);
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Central differences over every parameter of a tiny network.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Sigmoid, &mut rng);
        let x = Array2::from_shape_simple_fn((5, 3), || rng.gen_range(-1.0..1.0));
        let t = Array2::from_shape_simple_fn((5, 2), || rng.gen_range(0.0..1.0));

        let (pred, cache) = net.forward_cached(&x);
        let (_, g) = mse_loss(&pred, &t);
        let (grad, gx) = net.backward(&cache, g);
        let analytic = grad.flatten();

        let base = net.params();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            net.set_params(&p);
            let up = mse_loss(&net.forward(&x), &t).0;
            p[i] -= 2.0 * h;
            net.set_params(&p);
            let down = mse_loss(&net.forward(&x), &t).0;
            let numeric = (up - down) / (2.0 * h);
            assert!((numeric - analytic[i]).abs() < 1e-8, "param {i}: {numeric} vs {}", analytic[i]);
        }
        net.set_params(&base);

        // input gradient
        for r in 0..5 {
            for c in 0..3 {
                let mut xp = x.clone();
                xp[[r, c]] += h;
                let up = mse_loss(&net.forward(&xp), &t).0;
                xp[[r, c]] -= 2.0 * h;
                let down = mse_loss(&net.forward(&xp), &t).0;
                assert!(((up - down) / (2.0 * h) - gx[[r, c]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn spec_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[4, 3, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let back = Mlp::from_spec(&net.spec(), &net.params()).unwrap();
        assert_eq!(back, net);
        assert!(Mlp::from_spec(&net.spec(), &net.params()[1..]).is_none());
    }

    #[test]
    fn optimizers_reduce_a_quadratic() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut opt = Optimizer::new(kind, 0.1);
            let mut p = vec![3.0, -2.0];
            for _ in 0..200 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
                opt.begin_step();
                opt.update(0, &mut p, &g);
            }
            assert!(p.iter().all(|x| x.abs() < 1e-2), "{kind:?}: {p:?}");
        }
    }

    #[test]
    fn hstack_places_blocks() {
        let a = Array2::from_elem((2, 1), 1.0);
        let b = Array2::from_elem((2, 2), 2.0);
        let m = hstack(&[&a, &b]);
        assert_eq!(m.row(0).to_vec(), vec![1.0, 2.0, 2.0]);
    }
}
