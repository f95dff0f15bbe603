use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense network with `tanh` hidden layers and a linear output layer. Parameters live in
/// one flat vector: for each layer the `(out, in)` row-major weight matrix, then its bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        Mlp::from_params(r.sizes, r.params)
    }
}

impl From<Mlp> for MlpRepr {
    fn from(m: Mlp) -> Self {
        MlpRepr {
            sizes: m.sizes,
            params: m.params,
        }
    }
}

/// Activations saved by a batched forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `layers[0]` is the input; `layers[k]` the output of layer `k`.
    layers: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.layers.last().expect("a cache always holds the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl Mlp {
    pub fn zeros(sizes: Vec<usize>) -> Result<Self> {
        let n = Self::check_sizes(&sizes)?;
        Ok(Self {
            sizes,
            params: vec![0.0; n],
        })
    }

    /// Weights uniform in `±1/√fan_in` (the output layer additionally scaled by
    /// `output_gain`), biases zero.
    pub fn random<R: Rng + ?Sized>(sizes: Vec<usize>, output_gain: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let layers = net.layer_count();
        let mut offset = 0;
        for k in 0..layers {
            let (fan_in, fan_out) = (net.sizes[k], net.sizes[k + 1]);
            let mut bound = 1.0 / (fan_in as f64).sqrt();
            if k + 1 == layers {
                bound *= output_gain;
            }
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-1.0..=1.0) * bound;
            }
            offset += fan_out * (fan_in + 1);
        }
        Ok(net)
    }

    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let n = Self::check_sizes(&sizes)?;
        if params.len() != n {
            return Err(Error::Shape(format!(
                "layer sizes {sizes:?} need {n} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite network parameter".into()));
        }
        Ok(Self { sizes, params })
    }

    fn check_sizes(sizes: &[usize]) -> Result<usize> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(param_count(sizes))
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, k: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>, usize) {
        let offset: usize = param_count(&self.sizes[..=k]);
        let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
        let w = ArrayView2::from_shape((fan_out, fan_in), &self.params[offset..offset + fan_in * fan_out])
            .expect("layout matches sizes");
        let b = ArrayView1::from(&self.params[offset + fan_in * fan_out..offset + fan_out * (fan_in + 1)]);
        (w, b, offset)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network input has {} entries, expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut x = input.to_vec();
        let layers = self.layer_count();
        for k in 0..layers {
            let (w, b, _) = self.layer(k);
            let mut y = b.to_vec();
            for (i, row) in w.outer_iter().enumerate() {
                y[i] += row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            }
            if k + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            x = y;
        }
        Ok(x)
    }

    /// Forward pass over a `(batch, input)` matrix, keeping activations for [`Mlp::backward_cached`].
    pub fn forward_cached(&self, input: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network input has {} columns, expected {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        let layers = self.layer_count();
        let mut cache = Vec::with_capacity(layers + 1);
        cache.push(input.to_owned());
        for k in 0..layers {
            let (w, b, _) = self.layer(k);
            let mut z = cache[k].dot(&w.t());
            z += &b;
            if k + 1 < layers {
                z.mapv_inplace(f64::tanh);
            }
            cache.push(z);
        }
        Ok(ForwardCache { layers: cache })
    }

    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(input)?.layers.pop().unwrap())
    }

    /// Accumulates `∂(Σ output_grad ⊙ output)/∂params` into `grads`.
    pub fn backward_cached(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<'_, f64>,
        grads: &mut [f64],
    ) -> Result<()> {
        let out = cache.output();
        if output_grad.dim() != out.dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                output_grad.dim(),
                out.dim()
            )));
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer has the wrong length".into()));
        }
        let layers = self.layer_count();
        let mut delta = output_grad.to_owned();
        for k in (0..layers).rev() {
            let (w, _, offset) = self.layer(k);
            let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
            let input = &cache.layers[k];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            let mut gw_slot = ndarray::ArrayViewMut2::from_shape(
                (fan_out, fan_in),
                &mut grads[offset..offset + fan_in * fan_out],
            )
            .expect("layout matches sizes");
            gw_slot += &gw;
            for (g, v) in grads[offset + fan_in * fan_out..offset + fan_out * (fan_in + 1)]
                .iter_mut()
                .zip(gb.iter())
            {
                *g += v;
            }
            if k > 0 {
                let mut prev = delta.dot(&w);
                // derivative of tanh through the stored activation
                prev.zip_mut_with(input, |d, a| *d *= 1.0 - a * a);
                delta = prev;
            }
        }
        Ok(())
    }

    /// Parameter gradient of `Σ output_grad ⊙ forward(input)` over a batch.
    pub fn backward(&self, input: ArrayView2<'_, f64>, output_grad: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let cache = self.forward_cached(input)?;
        let mut grads = vec![0.0; self.params.len()];
        self.backward_cached(&cache, output_grad, &mut grads)?;
        Ok(grads)
    }
}

/// Rows of `rows` stacked into a `(n, dim)` matrix.
pub fn stack_rows(rows: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        if r.len() != dim {
            return Err(Error::Shape(format!("row has {} entries, expected {dim}", r.len())));
        }
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), dim), flat).map_err(|e| Error::Shape(e.to_string()))
}

/// Gathers the given rows of a matrix.
pub fn select_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

/// Adam optimiser over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One descent step `params −= lr · m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(vec![3, 8, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::from_params(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn linear_net_is_homogeneous_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::random(vec![3, 2], 1.0, &mut rng).unwrap();
        let a = net.forward(&[0.1, 0.2, -0.4]).unwrap();
        let b = net.forward(&[0.2, 0.4, -0.8]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::random(vec![4, 16, 16, 3], 1.0, &mut rng).unwrap();
        let x = array![[0.1, -0.2, 0.3, 0.9], [1.0, 0.0, -1.0, 0.5]];
        let batch = net.forward_batch(x.view()).unwrap();
        for (i, row) in x.outer_iter().enumerate() {
            let single = net.forward(row.as_slice().unwrap()).unwrap();
            for j in 0..3 {
                assert!((single[j] - batch[[i, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let net = Mlp::from_params(vec![2, 1], vec![0.5, -1.0, 0.2]).unwrap();
        let g = net.backward(array![[3.0, 4.0]].view(), array![[2.0]].view()).unwrap();
        assert_eq!(g, vec![6.0, 8.0, 2.0]);
        let z = net.backward(array![[3.0, 4.0]].view(), array![[0.0]].view()).unwrap();
        assert_eq!(z, vec![0.0; 3]);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let net = Mlp::zeros(vec![2, 3]).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(array![[1.0, 2.0]].view(), array![[1.0, 2.0]].view()).is_err());
        assert!(Mlp::from_params(vec![2, 3], vec![0.0; 4]).is_err());
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        let mut p = vec![1.0, -1.0];
        let mut opt = Adam::new(2, 0.1, 0.9, 0.999);
        opt.step(&mut p, &[1.0, -2.0]);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
        let mut q = vec![1.0];
        Adam::new(1, 0.0, 0.9, 0.999).step(&mut q, &[5.0]);
        assert_eq!(q, vec![1.0]);
    }
}
