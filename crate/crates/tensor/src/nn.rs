//! Parameterised layers that register their tensors in a [`ParamStore`].

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Weight initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with std `sqrt(2 / fan_out)`, fan_out = out_channels · k · k.
    KaimingFanOut,
    /// Uniform in `±1/sqrt(fan_in)`.
    UniformFanIn,
    Zeros,
}

fn init_tensor<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, init: Init, rng: &mut R) -> Tensor<T> {
    match init {
        Init::Zeros => Tensor::zeros(shape),
        Init::KaimingFanOut => {
            let dist = Normal::new(0.0, (2.0 / fan_out as f64).sqrt()).expect("valid std");
            Tensor::from_fn(shape, |_| T::of(dist.sample(rng)))
        }
        Init::UniformFanIn => {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
            Tensor::from_fn(shape, |_| T::of(dist.sample(rng)))
        }
    }
}

/// Stride-1 square convolution with "same" padding.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        let shape = [out_channels, in_channels, kernel, kernel];
        let w = init_tensor(
            &shape,
            in_channels * kernel * kernel,
            out_channels * kernel * kernel,
            init,
            rng,
        );
        let weight = store.add(format!("{name}.weight"), w, ParamKind::Weight);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]), ParamKind::Weight));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.conv2d(x, w, b, self.kernel / 2)
    }
}

/// Per-channel batch normalisation with running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], T::one()), ParamKind::Weight),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels]), ParamKind::Weight),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), ParamKind::Buffer),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(&[channels], T::one()), ParamKind::Buffer),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    /// In training mode the batch statistics are used and the running
    /// averages updated (unbiased variance, as is conventional).
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var, training: bool) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        if training {
            let (y, stats) = g.batch_norm_train(x, gamma, beta, self.eps);
            let m = T::of(self.momentum);
            let keep = T::one() - m;
            let unbias = if stats.count > 1 {
                T::of(stats.count as f64 / (stats.count - 1) as f64)
            } else {
                T::one()
            };
            for (r, &v) in store.get_mut(self.running_mean).data_mut().iter_mut().zip(&stats.mean) {
                *r = keep * *r + m * v;
            }
            for (r, &v) in store.get_mut(self.running_var).data_mut().iter_mut().zip(&stats.var) {
                *r = keep * *r + m * v * unbias;
            }
            y
        } else {
            let mean = store.get(self.running_mean).data().to_vec();
            let var = store.get(self.running_var).data().to_vec();
            g.batch_norm_eval(x, gamma, beta, &mean, &var, self.eps)
        }
    }
}

/// Fully connected layer `y = x Wᵀ + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_features: usize,
        out_features: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let w = init_tensor(&[out_features, in_features], in_features, out_features, init, rng);
        let bias_init = match init {
            Init::Zeros => Init::Zeros,
            _ => Init::UniformFanIn,
        };
        let b = init_tensor(&[out_features], in_features, out_features, bias_init, rng);
        Self {
            weight: store.add(format!("{name}.weight"), w, ParamKind::Weight),
            bias: store.add(format!("{name}.bias"), b, ParamKind::Weight),
            in_features,
            out_features,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.linear(x, w, Some(b))
    }
}
