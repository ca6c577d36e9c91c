use super::params::ParamStore;
use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Slope of the leaky ReLU on the negative half-line.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    LeakyRelu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::LeakyRelu => {
                if y > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::LeakyRelu => "leaky_relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            other => Err(Error::invalid(format!("unknown activation {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputActivation {
    #[default]
    Identity,
}

/// Layer widths from input to output plus activation choices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
    hidden: Activation,
    output: OutputActivation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("an MLP needs at least an input and an output width"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid(format!("layer widths must be positive: {widths:?}")));
        }
        Ok(MlpSpec {
            widths,
            hidden,
            output: OutputActivation::Identity,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn output(&self) -> OutputActivation {
        self.output
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Activations recorded by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    prefix: String,
    store_id: u64,
    store_version: u64,
    /// Input of every layer; entry 0 is the network input.
    layer_inputs: Vec<Tensor>,
    output_shape: Vec<usize>,
}

impl ForwardCache {
    pub fn input(&self) -> &Tensor {
        &self.layer_inputs[0]
    }
}

/// A feed-forward network whose parameters live in a [`ParamStore`] under
/// `prefix`. Weights are stored `[in, out]` so a layer computes `x W + b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    spec: MlpSpec,
    prefix: String,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, spec: MlpSpec) -> Self {
        Mlp {
            spec,
            prefix: prefix.into(),
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.weight", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.bias", self.prefix)
    }

    /// Registers Glorot-uniform weights and zero biases.
    pub fn register(&self, store: &mut ParamStore, rng: &mut Rng) -> Result<()> {
        let w = self.spec.widths();
        for l in 0..self.spec.layers() {
            let (fan_in, fan_out) = (w[l], w[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.uniform_in(-limit, limit))
                .collect();
            store.insert(self.weight_name(l), Tensor::new(vec![fan_in, fan_out], data)?)?;
            store.insert(self.bias_name(l), Tensor::zeros(&[fan_out]))?;
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        input.ensure_matrix(
            &format!("{} input (layer 0)", self.prefix),
            self.spec.input_width(),
        )
    }

    fn layer_weights<'s>(&self, store: &'s ParamStore, l: usize) -> Result<(&'s Tensor, &'s Tensor)> {
        let w = store.value(&self.weight_name(l))?;
        let b = store.value(&self.bias_name(l))?;
        let (i, o) = (self.spec.widths[l], self.spec.widths[l + 1]);
        if w.shape() != [i, o] {
            return Err(Error::shape(format!("{} layer {l} weight", self.prefix), &[i, o], w.shape()));
        }
        if b.shape() != [o] {
            return Err(Error::shape(format!("{} layer {l} bias", self.prefix), &[o], b.shape()));
        }
        Ok((w, b))
    }

    fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let (rows, out) = (x.rows(), b.len());
        let mut y = Tensor::zeros(&[rows, out]);
        for r in 0..rows {
            let yr = y.row_mut(r);
            yr.copy_from_slice(b.data());
            for (i, &xi) in x.row(r).iter().enumerate() {
                if xi != 0.0 {
                    axpy(xi, w.row(i), yr);
                }
            }
        }
        y
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, store: &ParamStore, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut a = std::borrow::Cow::Borrowed(input);
        let last = self.spec.layers() - 1;
        for l in 0..=last {
            let (w, b) = self.layer_weights(store, l)?;
            let mut z = Self::affine(&a, w, b);
            if l < last {
                let act = self.spec.hidden;
                z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            a = std::borrow::Cow::Owned(z);
        }
        Ok(a.into_owned())
    }

    pub fn forward(&self, store: &ParamStore, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(input)?;
        let last = self.spec.layers() - 1;
        let mut layer_inputs = Vec::with_capacity(self.spec.layers());
        let mut a = input.clone();
        for l in 0..=last {
            let (w, b) = self.layer_weights(store, l)?;
            let mut z = Self::affine(&a, w, b);
            if l < last {
                let act = self.spec.hidden;
                z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            layer_inputs.push(std::mem::replace(&mut a, z));
        }
        let cache = ForwardCache {
            prefix: self.prefix.clone(),
            store_id: store.id(),
            store_version: store.version(),
            layer_inputs,
            output_shape: a.shape().to_vec(),
        };
        Ok((a, cache))
    }

    fn check_cache(&self, store: &ParamStore, cache: &ForwardCache, grad_out: &Tensor) -> Result<()> {
        if cache.prefix != self.prefix || cache.layer_inputs.len() != self.spec.layers() {
            return Err(Error::StaleCache(format!(
                "cache recorded for {} used with {}",
                cache.prefix, self.prefix
            )));
        }
        if cache.store_id != store.id() || cache.store_version != store.version() {
            return Err(Error::StaleCache(format!(
                "parameters of {} changed since the forward pass",
                self.prefix
            )));
        }
        if grad_out.shape() != cache.output_shape.as_slice() {
            return Err(Error::shape(
                format!("{} grad_output", self.prefix),
                &cache.output_shape,
                grad_out.shape(),
            ));
        }
        Ok(())
    }

    /// Backpropagates `grad_out`, accumulating (`+=`) parameter gradients into
    /// `store`, and returns the gradient with respect to the input.
    pub fn backward(&self, store: &mut ParamStore, cache: &ForwardCache, grad_out: &Tensor) -> Result<Tensor> {
        self.check_cache(store, cache, grad_out)?;
        let mut delta = grad_out.clone();
        for l in (0..self.spec.layers()).rev() {
            let a = &cache.layer_inputs[l];
            {
                let w_name = self.weight_name(l);
                let p = store.param_for_grad(&w_name)?;
                for r in 0..a.rows() {
                    let dr = delta.row(r);
                    for (i, &ai) in a.row(r).iter().enumerate() {
                        if ai != 0.0 {
                            axpy(ai, dr, p.grad.row_mut(i));
                        }
                    }
                }
                let b_name = self.bias_name(l);
                let p = store.param_for_grad(&b_name)?;
                for r in 0..delta.rows() {
                    axpy(1.0, delta.row(r), p.grad.data_mut());
                }
            }
            delta = self.propagate(store, l, &delta, a)?;
        }
        Ok(delta)
    }

    /// Gradient with respect to the input only; parameter gradients are untouched.
    pub fn input_gradient(&self, store: &ParamStore, cache: &ForwardCache, grad_out: &Tensor) -> Result<Tensor> {
        self.check_cache(store, cache, grad_out)?;
        let mut delta = grad_out.clone();
        for l in (0..self.spec.layers()).rev() {
            delta = self.propagate(store, l, &delta, &cache.layer_inputs[l])?;
        }
        Ok(delta)
    }

    /// Moves `delta` (gradient at layer `l`'s pre-activation output) to the
    /// gradient at the pre-activation of layer `l - 1`, or to the network
    /// input when `l == 0`.
    fn propagate(&self, store: &ParamStore, l: usize, delta: &Tensor, layer_input: &Tensor) -> Result<Tensor> {
        let w = store.value(&self.weight_name(l))?;
        let rows = delta.rows();
        let in_w = self.spec.widths[l];
        let mut g = Tensor::zeros(&[rows, in_w]);
        for r in 0..rows {
            let dr = delta.row(r);
            let gr = g.row_mut(r);
            for (i, gi) in gr.iter_mut().enumerate() {
                *gi = dot(w.row(i), dr);
            }
        }
        if l > 0 {
            let act = self.spec.hidden;
            for (gi, &y) in g.data_mut().iter_mut().zip(layer_input.data()) {
                *gi *= act.derivative_from_output(y);
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: Vec<f64>, b: Vec<f64>) -> (Mlp, ParamStore) {
        let spec = MlpSpec::new(vec![2, 2], Activation::Tanh).unwrap();
        let mlp = Mlp::new("lin", spec);
        let mut store = ParamStore::new();
        store.insert(mlp.weight_name(0), Tensor::matrix(2, 2, w).unwrap()).unwrap();
        store.insert(mlp.bias_name(0), Tensor::vector(b)).unwrap();
        (mlp, store)
    }

    #[test]
    fn identity_layer() {
        let (mlp, store) = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]);
        let x = Tensor::matrix(1, 2, vec![3.0, -1.0]).unwrap();
        let (y, _) = mlp.forward(&store, &x).unwrap();
        assert_eq!(y.data(), &[3.0, -1.0]);
    }

    #[test]
    fn scaled_layer_with_bias() {
        let (mlp, store) = linear(vec![2.0, 0.0, 0.0, 2.0], vec![1.0, 1.0]);
        let x = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        assert_eq!(mlp.predict(&store, &x).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn zero_weights_collapse_to_bias() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Tanh).unwrap();
        let mlp = Mlp::new("z", spec);
        let mut store = ParamStore::new();
        mlp.register(&mut store, &mut Rng::seed_from(0)).unwrap();
        for l in 0..2 {
            store.value_mut(&mlp.weight_name(l)).unwrap().fill(0.0);
        }
        store.value_mut(&mlp.bias_name(0)).unwrap().fill(0.5);
        store.set_value(&mlp.bias_name(1), Tensor::vector(vec![0.25, -1.0])).unwrap();
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.1, 0.2, 0.3]).unwrap();
        let y = mlp.predict(&store, &x).unwrap();
        for r in 0..2 {
            assert_eq!(y.row(r), &[0.25, -1.0]);
        }
    }

    #[test]
    fn linear_gradient_of_sum() {
        let (mlp, mut store) = linear(vec![0.3, -0.7, 1.1, 0.2], vec![0.5, -0.5]);
        let x = Tensor::matrix(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        let (y, cache) = mlp.forward(&store, &x).unwrap();
        mlp.backward(&mut store, &cache, &Tensor::filled(y.shape(), 1.0)).unwrap();
        // dL/dW[i][o] = sum over the batch of x[i]; dL/db[o] = batch size.
        let gw = store.grad(&mlp.weight_name(0)).unwrap();
        assert_eq!(gw.data(), &[0.0, 0.0, 5.5, 5.5]);
        assert_eq!(store.grad(&mlp.bias_name(0)).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn zero_grad_output_leaves_gradients() {
        let spec = MlpSpec::new(vec![2, 5, 1], Activation::LeakyRelu).unwrap();
        let mlp = Mlp::new("n", spec);
        let mut store = ParamStore::new();
        mlp.register(&mut store, &mut Rng::seed_from(3)).unwrap();
        let x = Tensor::matrix(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (y, cache) = mlp.forward(&store, &x).unwrap();
        mlp.backward(&mut store, &cache, &Tensor::zeros(y.shape())).unwrap();
        assert_eq!(store.grad_norm(), 0.0);
    }

    #[test]
    fn input_width_mismatch_names_layer() {
        let (mlp, store) = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]);
        let err = mlp.predict(&store, &Tensor::zeros(&[1, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 0") && msg.contains("[1, 2]") && msg.contains("[1, 3]"), "{msg}");
    }

    #[test]
    fn stale_cache_rejected() {
        let (mlp, mut store) = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]);
        let x = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        let (y, cache) = mlp.forward(&store, &x).unwrap();
        store.value_mut(&mlp.bias_name(0)).unwrap().fill(1.0);
        let err = mlp.backward(&mut store, &cache, &Tensor::zeros(y.shape())).unwrap_err();
        assert!(matches!(err, Error::StaleCache(_)));
    }

    #[test]
    fn cache_from_other_network_rejected() {
        let (a, store) = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]);
        let b = Mlp::new("other", a.spec().clone());
        let (y, cache) = a.forward(&store, &Tensor::zeros(&[1, 2])).unwrap();
        assert!(b.input_gradient(&store, &cache, &Tensor::zeros(y.shape())).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], Activation::Tanh).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Tanh).is_err());
        assert!(MlpSpec::new(vec![0, 1], Activation::Tanh).is_err());
    }
}
