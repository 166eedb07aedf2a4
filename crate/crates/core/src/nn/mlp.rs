use rand::distr::{Distribution, Uniform};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::{check_labels, softmax, softmax_into};
use crate::nn::Matrix;
use crate::rng::{derive_seed, rng_from, Rng};
use crate::scalar::Real;

/// One affine layer: `out = input * weight + bias`, `weight` is `in x out`.
///
/// Also used as the container for gradients and optimizer moments, which
/// share the parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T = f64> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: vec![T::zero(); output],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.rows(), self.weight.cols())
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn num_params(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.weight.shape() == other.weight.shape() && self.bias.len() == other.bias.len()
    }

    /// Parameter values in a fixed order: weights row-major, then bias.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.weight.as_slice().iter().chain(self.bias.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weight
            .as_mut_slice()
            .iter_mut()
            .chain(self.bias.iter_mut())
    }

    pub fn dot(&self, other: &Self) -> T {
        self.iter().zip(other.iter()).map(|(&a, &b)| a * b).sum()
    }

    /// Affine map of a batch.
    pub fn apply(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = input.matmul(&self.weight)?;
        z.add_row_vector(&self.bias)?;
        Ok(z)
    }
}

/// Which parameters [`Mlp::backward`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradScope {
    AllLayers,
    LastLayerOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Eval,
    /// Inverted dropout on hidden activations with masks drawn from `seed`.
    Train { seed: u64 },
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T = f64> {
    layer_dims: Vec<usize>,
    /// `acts[0]` is the input; `acts[l]` the post-ReLU (and post-dropout)
    /// output of hidden layer `l - 1`. The last entry is the penultimate
    /// representation fed to the output layer.
    acts: Vec<Matrix<T>>,
    /// Hidden pre-activations.
    pre: Vec<Matrix<T>>,
    /// Inverted-dropout multipliers per hidden layer (0 or `1/(1-rate)`).
    masks: Vec<Option<Matrix<T>>>,
    logits: Matrix<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn logits(&self) -> &Matrix<T> {
        &self.logits
    }

    pub fn penultimate(&self) -> &Matrix<T> {
        self.acts.last().expect("at least the input activation")
    }

    pub fn batch_size(&self) -> usize {
        self.logits.rows()
    }

    pub fn has_dropout_masks(&self) -> bool {
        self.masks.iter().any(Option::is_some)
    }
}

/// Gradients of the mean loss for the layers `first_layer..`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f64> {
    pub first_layer: usize,
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn scope(&self) -> GradScope {
        if self.first_layer == 0 {
            GradScope::AllLayers
        } else {
            GradScope::LastLayerOnly
        }
    }

    pub fn last(&self) -> &Dense<T> {
        self.layers.last().expect("gradients hold at least one layer")
    }

    pub fn flatten(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.iter().copied()).collect()
    }
}

/// Feed-forward ReLU network with a linear output layer producing logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T = f64> {
    layer_dims: Vec<usize>,
    layers: Vec<Dense<T>>,
    dropout_rate: T,
}

impl<T: Real> Mlp<T> {
    /// Builds a network with weights and biases drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(layer_dims: &[usize], dropout_rate: f64, seed: u64) -> Result<Self> {
        Self::validate_dims(layer_dims)?;
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {dropout_rate}"
            )));
        }
        let mut rng = rng_from(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let mut layer = Dense::zeros(w[0], w[1]);
                for p in layer.iter_mut() {
                    *p = T::lit(dist.sample(&mut rng));
                }
                layer
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            dropout_rate: T::lit(dropout_rate),
        })
    }

    /// Assembles a network from explicit layers.
    pub fn from_layers(layers: Vec<Dense<T>>, dropout_rate: f64) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("network needs at least one layer".into()))?;
        let mut dims = vec![first.input_dim()];
        for (l, layer) in layers.iter().enumerate() {
            if layer.input_dim() != *dims.last().unwrap() {
                return Err(Error::dim("layer chain", dims.last().unwrap(), format!("{} at layer {l}", layer.input_dim())));
            }
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::dim("bias", layer.output_dim(), layer.bias.len()));
            }
            dims.push(layer.output_dim());
        }
        Self::validate_dims(&dims)?;
        Ok(Self {
            layer_dims: dims,
            layers,
            dropout_rate: T::lit(dropout_rate),
        })
    }

    fn validate_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!(
                "layer_dims must list at least input and output widths, all positive; got {dims:?}"
            )));
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Width of the representation entering the output layer.
    pub fn feature_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 2]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn last_layer(&self) -> &Dense<T> {
        self.layers.last().unwrap()
    }

    pub fn last_layer_mut(&mut self) -> &mut Dense<T> {
        self.layers.last_mut().unwrap()
    }

    pub fn dropout_rate(&self) -> T {
        self.dropout_rate
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(Dense::iter)
    }

    fn check_input(&self, inputs: &Matrix<T>) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), inputs.cols()));
        }
        Ok(())
    }

    fn dropout_mask(&self, rows: usize, cols: usize, rng: &mut Rng) -> Option<Matrix<T>> {
        if self.dropout_rate <= T::zero() {
            return None;
        }
        let rate = self.dropout_rate.as_f64();
        let keep_scale = T::one() / (T::one() - self.dropout_rate);
        let mut m = Matrix::zeros(rows, cols);
        for x in m.as_mut_slice() {
            if rng.random::<f64>() >= rate {
                *x = keep_scale;
            }
        }
        Some(m)
    }

    pub fn forward(&self, inputs: &Matrix<T>, mode: ForwardMode) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(inputs)?;
        let mut rng = match mode {
            ForwardMode::Train { seed } => Some(rng_from(seed)),
            ForwardMode::Eval => None,
        };
        let hidden = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(hidden);
        let mut masks = Vec::with_capacity(hidden);
        acts.push(inputs.clone());
        for layer in &self.layers[..hidden] {
            let z = layer.apply(acts.last().unwrap())?;
            let mut a = z.clone();
            a.map_inplace(|x| x.max(T::zero()));
            let mask = rng
                .as_mut()
                .and_then(|r| self.dropout_mask(a.rows(), a.cols(), r));
            if let Some(m) = &mask {
                for (x, &k) in a.as_mut_slice().iter_mut().zip(m.as_slice()) {
                    *x *= k;
                }
            }
            pre.push(z);
            masks.push(mask);
            acts.push(a);
        }
        let logits = self.layers[hidden].apply(acts.last().unwrap())?;
        let cache = ForwardCache {
            layer_dims: self.layer_dims.clone(),
            acts,
            pre,
            masks,
            logits: logits.clone(),
        };
        Ok((logits, cache))
    }

    /// Eval-mode logits.
    pub fn logits(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        let feats = self.penultimate_features(inputs)?;
        self.last_layer().apply(&feats)
    }

    pub fn predict_proba(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(softmax(&self.logits(inputs)?))
    }

    pub fn predict(&self, inputs: &Matrix<T>) -> Result<Vec<usize>> {
        Ok(self.logits(inputs)?.argmax_rows())
    }

    /// Eval-mode representation entering the output layer.
    pub fn penultimate_features(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(inputs)?;
        let mut a = inputs.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            a = layer.apply(&a)?;
            a.map_inplace(|x| x.max(T::zero()));
        }
        Ok(a)
    }

    /// Gradients of the mean cross-entropy of the cached batch.
    pub fn backward(&self, cache: &ForwardCache<T>, labels: &[usize], scope: GradScope) -> Result<Gradients<T>> {
        if cache.layer_dims != self.layer_dims {
            return Err(Error::State(format!(
                "cache built for layers {:?}, model has {:?}",
                cache.layer_dims, self.layer_dims
            )));
        }
        if labels.len() != cache.batch_size() {
            return Err(Error::State(format!(
                "cache holds {} rows but {} labels were given",
                cache.batch_size(),
                labels.len()
            )));
        }
        check_labels(labels, cache.batch_size(), self.num_classes())?;

        let n = T::from_usize_exact(labels.len().max(1));
        let mut delta = softmax(&cache.logits);
        for (i, &y) in labels.iter().enumerate() {
            delta[(i, y)] -= T::one();
        }
        delta.scale(T::one() / n);

        let last = self.layers.len() - 1;
        let first_layer = match scope {
            GradScope::AllLayers => 0,
            GradScope::LastLayerOnly => last,
        };
        let mut grads = Vec::with_capacity(last + 1 - first_layer);
        for l in (first_layer..=last).rev() {
            let input = &cache.acts[l];
            grads.push(Dense {
                weight: input.t_matmul(&delta)?,
                bias: delta.sum_rows(),
            });
            if l > first_layer {
                let mut up = delta.matmul_t(&self.layers[l].weight)?;
                let pre = &cache.pre[l - 1];
                match &cache.masks[l - 1] {
                    Some(mask) => {
                        for ((d, &z), &k) in up.as_mut_slice().iter_mut().zip(pre.as_slice()).zip(mask.as_slice()) {
                            *d = if z > T::zero() { *d * k } else { T::zero() };
                        }
                    }
                    None => {
                        for (d, &z) in up.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                            if z <= T::zero() {
                                *d = T::zero();
                            }
                        }
                    }
                }
                delta = up;
            }
        }
        grads.reverse();
        Ok(Gradients {
            first_layer,
            layers: grads,
        })
    }

    /// Class probabilities from `passes` dropout-perturbed forward passes.
    ///
    /// Pass `t` uses the masks of `forward(.., Train { seed: derive_seed(seed, t) })`.
    pub fn mc_dropout_probs(&self, inputs: &Matrix<T>, passes: usize, seed: u64) -> Result<Vec<Matrix<T>>> {
        if passes == 0 {
            return Err(Error::Config("mc dropout needs at least one pass".into()));
        }
        self.check_input(inputs)?;
        let hidden = self.layers.len() - 1;
        if hidden == 0 || self.dropout_rate <= T::zero() {
            let p = self.predict_proba(inputs)?;
            return Ok(vec![p; passes]);
        }
        // The first hidden layer is deterministic; only its mask changes per pass.
        let mut first = self.layers[0].apply(inputs)?;
        first.map_inplace(|x| x.max(T::zero()));
        (0..passes)
            .map(|t| {
                let mut rng = rng_from(derive_seed(seed, t as u64));
                let mut a = first.clone();
                for l in 0..hidden {
                    if l > 0 {
                        a = self.layers[l].apply(&a)?;
                        a.map_inplace(|x| x.max(T::zero()));
                    }
                    if let Some(m) = self.dropout_mask(a.rows(), a.cols(), &mut rng) {
                        for (x, &k) in a.as_mut_slice().iter_mut().zip(m.as_slice()) {
                            *x *= k;
                        }
                    }
                }
                let z = self.layers[hidden].apply(&a)?;
                let mut p = Matrix::zeros(z.rows(), z.cols());
                for i in 0..z.rows() {
                    softmax_into(z.row(i), p.row_mut(i));
                }
                Ok(p)
            })
            .collect()
    }

    /// Hash of every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for d in &self.layer_dims {
            h = (h ^ *d as u64).wrapping_mul(0x0100_0000_01b3);
        }
        for p in self.params() {
            h = (h ^ p.bits()).wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.layer_dims == other.layer_dims
            && self.dropout_rate.bits() == other.dropout_rate.bits()
            && self.params().zip(other.params()).all(|(a, b)| a.bits() == b.bits())
    }
}

/// Frozen copy of a network's parameters.
///
/// There is no mutable access; scoring code can only read it.
#[derive(Debug, Clone)]
pub struct ModelSnapshot<T = f64> {
    model: Mlp<T>,
    fingerprint: u64,
}

impl<T: Real> ModelSnapshot<T> {
    pub fn new(model: &Mlp<T>) -> Self {
        Self {
            model: model.clone(),
            fingerprint: model.fingerprint(),
        }
    }

    pub fn model(&self) -> &Mlp<T> {
        &self.model
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Copy of the parameters as a trainable network.
    pub fn to_model(&self) -> Mlp<T> {
        self.model.clone()
    }
}

impl<T: Real> std::ops::Deref for ModelSnapshot<T> {
    type Target = Mlp<T>;
    fn deref(&self) -> &Mlp<T> {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::softmax_xent;

    fn naive_linear(x: &Matrix<f64>, l: &Dense<f64>) -> Matrix<f64> {
        let mut out = Matrix::zeros(x.rows(), l.output_dim());
        for i in 0..x.rows() {
            for j in 0..l.output_dim() {
                let mut s = l.bias[j];
                for k in 0..x.cols() {
                    s += x[(i, k)] * l.weight[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn input(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = rng_from(seed);
        let data = (0..rows * cols).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_logits() {
        let mut m = Mlp::<f64>::new(&[4, 5, 3], 0.0, 1).unwrap();
        for l in m.layers_mut() {
            l.iter_mut().for_each(|p| *p = 0.0);
        }
        let (z, _) = m.forward(&input(3, 4, 2), ForwardMode::Eval).unwrap();
        assert!(z.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_layer_maps_basis_vector() {
        let layer = Dense {
            weight: Matrix::<f64>::identity(3),
            bias: vec![0.0; 3],
        };
        let m = Mlp::from_layers(vec![layer], 0.0).unwrap();
        let e1 = Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.logits(&e1).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let m = Mlp::<f64>::new(&[6, 7, 5, 3], 0.0, 11).unwrap();
        let x = input(4, 6, 12);
        let mut a = x.clone();
        for (l, layer) in m.layers().iter().enumerate() {
            a = naive_linear(&a, layer);
            if l + 1 < m.num_layers() {
                a.map_inplace(|v| v.max(0.0));
            }
        }
        let (z, _) = m.forward(&x, ForwardMode::Eval).unwrap();
        for (p, q) in z.as_slice().iter().zip(a.as_slice()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_input_width_is_a_dimension_error() {
        let m = Mlp::<f64>::new(&[3, 2], 0.0, 0).unwrap();
        assert!(matches!(
            m.forward(&Matrix::zeros(1, 4), ForwardMode::Eval),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn one_hot_probs_give_zero_gradient() {
        // Huge logit margin makes softmax exactly one-hot in f64.
        let layer = Dense {
            weight: Matrix::from_vec(2, 2, vec![1000.0, -1000.0, 0.0, 0.0]).unwrap(),
            bias: vec![0.0, 0.0],
        };
        let m = Mlp::from_layers(vec![layer], 0.0).unwrap();
        let x = Matrix::from_vec(1, 2, vec![1.0, 0.5]).unwrap();
        let (_, cache) = m.forward(&x, ForwardMode::Eval).unwrap();
        let g = m.backward(&cache, &[0], GradScope::AllLayers).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_probs_bias_gradient_closed_form() {
        let m = Mlp::from_layers(vec![Dense::<f64>::zeros(3, 4)], 0.0).unwrap();
        let x = Matrix::from_vec(1, 3, vec![0.3, -0.2, 1.0]).unwrap();
        let (_, cache) = m.forward(&x, ForwardMode::Eval).unwrap();
        let g = m.backward(&cache, &[2], GradScope::AllLayers).unwrap();
        assert_eq!(g.last().bias, vec![0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn mismatched_cache_is_a_state_error() {
        let a = Mlp::<f64>::new(&[3, 4, 2], 0.0, 0).unwrap();
        let b = Mlp::<f64>::new(&[3, 5, 2], 0.0, 0).unwrap();
        let (_, cache) = a.forward(&input(2, 3, 0), ForwardMode::Eval).unwrap();
        assert!(matches!(b.backward(&cache, &[0, 1], GradScope::AllLayers), Err(Error::State(_))));
        assert!(matches!(a.backward(&cache, &[0], GradScope::AllLayers), Err(Error::State(_))));
    }

    #[test]
    fn last_layer_scope_is_slice_of_full_gradient() {
        let m = Mlp::<f64>::new(&[5, 6, 4], 0.0, 3).unwrap();
        let x = input(7, 5, 4);
        let labels = [0, 1, 2, 3, 0, 1, 2];
        let (_, cache) = m.forward(&x, ForwardMode::Eval).unwrap();
        let full = m.backward(&cache, &labels, GradScope::AllLayers).unwrap();
        let last = m.backward(&cache, &labels, GradScope::LastLayerOnly).unwrap();
        assert_eq!(last.layers.len(), 1);
        assert_eq!(last.scope(), GradScope::LastLayerOnly);
        for (a, b) in last.last().iter().zip(full.last().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // outer-product form: mean over rows of phi^T (p - y)
        let phi = m.penultimate_features(&x).unwrap();
        let mut d = softmax_xent(&cache.logits, &labels).unwrap().probs;
        for (i, &y) in labels.iter().enumerate() {
            d[(i, y)] -= 1.0;
        }
        let w = phi.t_matmul(&d).unwrap();
        for (a, b) in last.last().weight.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn penultimate_features_recombine_to_logits() {
        let m = Mlp::<f64>::new(&[8, 6, 3], 0.0, 9).unwrap();
        let x = input(5, 8, 10);
        let x2 = x.vstack(&x.select_rows(&[0])).unwrap();
        let f = m.penultimate_features(&x2).unwrap();
        assert_eq!(f.cols(), 6);
        assert_eq!(f.row(0), f.row(5));
        let z = m.last_layer().apply(&f).unwrap();
        let (want, _) = m.forward(&x2, ForwardMode::Eval).unwrap();
        for (a, b) in z.as_slice().iter().zip(want.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_dropout_passes_match_train_forward() {
        let m = Mlp::<f64>::new(&[4, 9, 7, 3], 0.3, 5).unwrap();
        let x = input(6, 4, 6);
        let probs = m.mc_dropout_probs(&x, 3, 42).unwrap();
        assert_eq!(probs.len(), 3);
        for (t, p) in probs.iter().enumerate() {
            let (z, _) = m.forward(&x, ForwardMode::Train { seed: derive_seed(42, t as u64) }).unwrap();
            let want = softmax(&z);
            for (a, b) in p.as_slice().iter().zip(want.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
            for r in p.row_iter() {
                assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        assert!(!probs[0].bitwise_eq(&probs[1]));
        let again = m.mc_dropout_probs(&x, 3, 42).unwrap();
        assert!(probs.iter().zip(&again).all(|(a, b)| a.bitwise_eq(b)));
    }

    #[test]
    fn mc_dropout_without_dropout_is_eval() {
        let m = Mlp::<f64>::new(&[4, 5, 3], 0.0, 5).unwrap();
        let x = input(3, 4, 6);
        let probs = m.mc_dropout_probs(&x, 4, 1).unwrap();
        let eval = m.predict_proba(&x).unwrap();
        assert!(probs.iter().all(|p| p.bitwise_eq(&eval)));
        assert!(m.mc_dropout_probs(&x, 0, 1).is_err());
    }

    #[test]
    fn inverted_dropout_scales_kept_units() {
        let m = Mlp::<f64>::new(&[3, 50, 2], 0.5, 1).unwrap();
        let (_, cache) = m.forward(&input(4, 3, 1), ForwardMode::Train { seed: 3 }).unwrap();
        assert!(cache.has_dropout_masks());
        let mask = cache.masks[0].as_ref().unwrap();
        assert!(mask.as_slice().iter().all(|&k| k == 0.0 || k == 2.0));
        let (_, eval_cache) = m.forward(&input(4, 3, 1), ForwardMode::Eval).unwrap();
        assert!(!eval_cache.has_dropout_masks());
    }

    #[test]
    fn snapshot_fingerprint_tracks_parameters() {
        let mut m = Mlp::<f64>::new(&[3, 4, 2], 0.0, 1).unwrap();
        let s = ModelSnapshot::new(&m);
        assert_eq!(s.fingerprint(), m.fingerprint());
        m.last_layer_mut().bias[0] += 1e-12;
        assert_ne!(s.fingerprint(), m.fingerprint());
        assert!(s.to_model().bitwise_eq(s.model()));
    }

    #[test]
    fn rejects_bad_dropout_rate() {
        assert!(Mlp::<f64>::new(&[3, 2], 1.0, 0).is_err());
        assert!(Mlp::<f64>::new(&[3], 0.0, 0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let m = Mlp::<f32>::new(&[3, 4, 2], 0.0, 1).unwrap();
        let x = Matrix::<f32>::from_vec(1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        let (_, cache) = m.forward(&x, ForwardMode::Eval).unwrap();
        let g = m.backward(&cache, &[1], GradScope::AllLayers).unwrap();
        assert_eq!(g.flatten().len(), m.num_params());
    }
}
