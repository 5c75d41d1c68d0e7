use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelError;
use crate::autodiff::{Graph, Var};
use crate::tensor::Tensor;

/// Per-item scorer: ReLU hidden layers and a single linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `(weight in×out, bias 1×out)` per layer.
    layers: Vec<(Tensor, Tensor)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input: usize,
    pub hidden: Vec<usize>,
}

impl Mlp {
    /// He-uniform weights `U(±√(6/fan_in))` from a seeded stream, zero biases.
    pub fn new(cfg: &MlpConfig, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(cfg, |fan_in, n| {
            let bound = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        })
    }

    /// All weights and biases zero.
    pub fn zeros(cfg: &MlpConfig) -> Result<Self, ModelError> {
        Self::build(cfg, |_, n| vec![0.0; n])
    }

    fn build(cfg: &MlpConfig, mut init: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self, ModelError> {
        if cfg.input == 0 || cfg.hidden.contains(&0) {
            return Err(ModelError::Config(format!(
                "layer widths must be positive: input {}, hidden {:?}",
                cfg.input, cfg.hidden
            )));
        }
        let widths: Vec<usize> = std::iter::once(cfg.input)
            .chain(cfg.hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let layers = widths
            .windows(2)
            .map(|w| {
                let weight = Tensor::matrix(w[0], w[1], init(w[0], w[0] * w[1]));
                (weight, Tensor::zeros(&[1, w[1]]))
            })
            .collect();
        Ok(Self { layers })
    }

    /// Rebuilds from explicit layers; shapes must chain and end in width 1.
    pub fn from_layers(layers: Vec<(Tensor, Tensor)>) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::Config("a model needs at least one layer".into()));
        }
        let mut width = None;
        for (w, b) in &layers {
            let [inp, out] = *w.shape() else {
                return Err(ModelError::Config(format!("weight shape {:?}", w.shape())));
            };
            if b.shape() != [1, out] || width.is_some_and(|prev| prev != inp) || inp == 0 {
                return Err(ModelError::Config(format!(
                    "layer shapes do not chain: weight {:?}, bias {:?}",
                    w.shape(),
                    b.shape()
                )));
            }
            width = Some(out);
        }
        if width != Some(1) {
            return Err(ModelError::Config("final layer must have width 1".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[(Tensor, Tensor)] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].0.shape()[0]
    }

    /// Weights and biases interleaved: `w₀, b₀, w₁, b₁, …`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|p| p.shape().to_vec()).collect()
    }

    /// Places every parameter on the tape as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params().into_iter().map(|p| g.param(p.clone())).collect()
    }

    /// Places every parameter on the tape as a constant.
    pub fn bind_constant(&self, g: &mut Graph) -> Vec<Var> {
        self.params().into_iter().map(|p| g.constant(p.clone())).collect()
    }

    /// Scores each row of an `L × m` feature matrix independently.
    pub fn score(&self, g: &mut Graph, params: &[Var], features: Var) -> Result<Var, ModelError> {
        let shape = g.shape(features).to_vec();
        let [len, m] = shape[..] else {
            return Err(ModelError::Config(format!("features must be a matrix, got {shape:?}")));
        };
        if m != self.input_width() {
            return Err(ModelError::Width {
                expected: self.input_width(),
                got: m,
            });
        }
        let ones = g.constant(Tensor::ones(&[len, 1]));
        let mut h = features;
        let last = self.layers.len() - 1;
        for (i, pair) in params.chunks(2).enumerate() {
            let z = g.matmul(h, pair[0])?;
            let bias = g.matmul(ones, pair[1])?;
            let z = g.add(z, bias)?;
            h = if i < last { g.relu(z) } else { z };
        }
        Ok(g.reshape(h, &[len])?)
    }

    /// Scores without recording gradients.
    pub fn predict(&self, features: &Tensor) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new();
        let params = self.bind_constant(&mut g);
        let x = g.constant(features.clone());
        let s = self.score(&mut g, &params, x)?;
        Ok(g.value(s).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};

    fn cfg() -> MlpConfig {
        MlpConfig {
            input: 3,
            hidden: vec![5, 4],
        }
    }

    fn features() -> Tensor {
        Tensor::matrix(
            4,
            3,
            vec![0.2, -1.0, 0.5, 1.5, 0.3, -0.7, -0.4, 0.9, 1.1, 0.0, 0.6, -1.2],
        )
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Mlp::new(&cfg(), 3).unwrap();
        assert_eq!(a, Mlp::new(&cfg(), 3).unwrap());
        assert_ne!(a, Mlp::new(&cfg(), 4).unwrap());
        for (w, b) in a.layers() {
            let bound = (6.0 / w.shape()[0] as f64).sqrt();
            assert!(w.data().iter().all(|v| v.abs() <= bound));
            assert!(b.data().iter().all(|&v| v == 0.0));
        }
        assert_eq!(
            a.param_shapes(),
            vec![vec![3, 5], vec![1, 5], vec![5, 4], vec![1, 4], vec![4, 1], vec![1, 1]]
        );
    }

    #[test]
    fn zero_weights_give_bias_composition() {
        let mut m = Mlp::zeros(&cfg()).unwrap();
        for (i, p) in m.params_mut().into_iter().enumerate() {
            if i % 2 == 1 {
                *p = p.map(|_| 0.5);
            }
        }
        // relu(0.5) feeds zero weights, so only the output bias survives
        assert_eq!(m.predict(&features()).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn item_permutation_permutes_scores() {
        let m = Mlp::new(&cfg(), 1).unwrap();
        let x = features();
        let s = m.predict(&x).unwrap();
        let order = [2, 0, 3, 1];
        let permuted: Vec<f64> = order.iter().flat_map(|&i| x.row(i).to_vec()).collect();
        let sp = m.predict(&Tensor::matrix(4, 3, permuted)).unwrap();
        for (j, &i) in order.iter().enumerate() {
            assert_eq!(sp[j], s[i]);
        }
    }

    #[test]
    fn width_mismatch_errors() {
        let m = Mlp::new(&cfg(), 1).unwrap();
        assert!(matches!(
            m.predict(&Tensor::matrix(2, 2, vec![0.0; 4])),
            Err(ModelError::Width { expected: 3, got: 2 })
        ));
        assert!(Mlp::new(
            &MlpConfig {
                input: 3,
                hidden: vec![0]
            },
            1
        )
        .is_err());
    }

    #[test]
    fn every_layer_gradient_matches_finite_differences() {
        let m = Mlp::new(&cfg(), 2).unwrap();
        let x = features();
        let w: Vec<f64> = vec![0.3, -1.2, 0.8, 0.5];
        let objective = |model: &Mlp| -> (f64, Vec<Tensor>) {
            let mut g = Graph::new();
            let params = model.bind(&mut g);
            let xv = g.constant(x.clone());
            let s = model.score(&mut g, &params, xv).unwrap();
            let wv = g.constant(Tensor::vector(w.clone()));
            let prod = g.mul(s, wv).unwrap();
            let root = g.sum(prod);
            let grads = g.backward(root).unwrap();
            (g.value(root).item(), params.iter().map(|&p| grads.wrt(p)).collect())
        };
        let analytic = objective(&m).1;
        for (pi, a) in analytic.iter().enumerate() {
            let base = m.params()[pi].data().to_vec();
            let numeric = central_difference(
                |v| {
                    let mut probe = m.clone();
                    probe.params_mut()[pi].data_mut().copy_from_slice(v);
                    objective(&probe).0
                },
                &base,
                1e-6,
            );
            let err = relative_error(a.data(), &numeric);
            assert!(err <= 1e-5, "param {pi}: {err:e}");
        }
    }
}
