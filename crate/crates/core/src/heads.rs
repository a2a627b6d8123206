//! Global pooling and the score / regression heads.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{dot, Activation, Matrix};
use crate::rng::SeededRng;

/// Column-wise mean over the node rows.
pub fn global_avg_pool(h1: &Matrix) -> Result<Vec<f64>> {
    if h1.rows() == 0 || h1.cols() == 0 {
        return Err(Error::InvalidInput("cannot pool an empty matrix".into()));
    }
    let mut g = vec![0.0; h1.cols()];
    for r in 0..h1.rows() {
        for (acc, v) in g.iter_mut().zip(h1.row(r)) {
            *acc += v;
        }
    }
    let n = h1.rows() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    Ok(g)
}

/// Broadcasts the pooled-feature gradient back to every node row.
pub fn global_avg_pool_backward(d_global: &[f64], nodes: usize) -> Matrix {
    let scale = 1.0 / nodes as f64;
    Matrix::from_fn(nodes, d_global.len(), |_, c| d_global[c] * scale)
}

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Matrix,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: Matrix::zeros(1, output),
        }
    }

    /// Uniform `±1/√in` weights, zero bias.
    pub fn init(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / libm::sqrt(input as f64);
        Self {
            weight: Matrix::from_fn(output, input, |_, _| rng.uniform(-bound, bound)),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.output_dim())
            .map(|r| dot(self.weight.row(r), x) + self.bias[(0, r)])
            .collect()
    }
}

/// Multi-layer perceptron: relu between layers, `output_activation` after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output_activation: Activation,
}

/// Layer outputs after activation; entry 0 is the input.
#[derive(Debug, Clone)]
pub struct MlpCache {
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map_or(&[], |v| v.as_slice())
    }
}

impl Mlp {
    /// Two layers `input → hidden → output`.
    pub fn two_layer(
        input: usize,
        hidden: usize,
        output: usize,
        output_activation: Activation,
        rng: &mut SeededRng,
    ) -> Self {
        Self {
            layers: vec![
                Dense::init(input, hidden, rng),
                Dense::init(hidden, output, rng),
            ],
            output_activation,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
            output_activation: self.output_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidInput("MLP has no layers".into()));
        }
        if x.len() != self.input_dim() {
            return Err(shape_err(
                "mlp",
                format!(
                    "input length {} but first layer expects {}",
                    x.len(),
                    self.input_dim()
                ),
            ));
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(shape_err(
                    "mlp",
                    format!(
                        "layer {i} emits {} but layer {} takes {}",
                        w[0].output_dim(),
                        i + 1,
                        w[1].input_dim()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .forward_cached(x)?
            .activations
            .pop()
            .unwrap_or_default())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<MlpCache> {
        self.check(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let act = if i == last {
                self.output_activation
            } else {
                Activation::Relu
            };
            let y: Vec<f64> = layer
                .forward(activations.last().expect("input pushed"))
                .into_iter()
                .map(|v| act.apply(v))
                .collect();
            activations.push(y);
        }
        Ok(MlpCache { activations })
    }

    /// Accumulates parameter gradients into `grads` (when given) and returns
    /// the gradient with respect to the input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        d_out: &[f64],
        mut grads: Option<&mut Mlp>,
    ) -> Result<Vec<f64>> {
        if d_out.len() != self.output_dim() || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::State(format!(
                "MLP backward with {} output grads and {} cached activations",
                d_out.len(),
                cache.activations.len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut delta = d_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = if i == last {
                self.output_activation
            } else {
                Activation::Relu
            };
            let y = &cache.activations[i + 1];
            for (d, &yv) in delta.iter_mut().zip(y) {
                *d *= act.derivative_from_output(yv);
            }
            let x = &cache.activations[i];
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[i];
                for (r, &dr) in delta.iter().enumerate() {
                    gl.bias[(0, r)] += dr;
                    for (gw, &xv) in gl.weight.row_mut(r).iter_mut().zip(x) {
                        *gw += dr * xv;
                    }
                }
            }
            let mut d_in = vec![0.0; layer.input_dim()];
            for (r, &dr) in delta.iter().enumerate() {
                for (di, &w) in d_in.iter_mut().zip(layer.weight.row(r)) {
                    *di += dr * w;
                }
            }
            delta = d_in;
        }
        Ok(delta)
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

/// Predicted (or target) boundary correction of a proposal: relative centre
/// shift and log length ratio.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegressionOffsets {
    pub t_c: f64,
    pub t_l: f64,
}

impl RegressionOffsets {
    pub fn new(t_c: f64, t_l: f64) -> Self {
        Self { t_c, t_l }
    }
}

/// Matching score in (−1, 1).
pub fn score_head(global: &[f64], p: &Mlp) -> Result<f64> {
    if p.output_dim() != 1 || p.output_activation != Activation::Tanh {
        return Err(shape_err(
            "score_head",
            format!(
                "needs one tanh output, got {} {}",
                p.output_dim(),
                p.output_activation.name()
            ),
        ));
    }
    Ok(p.forward(global)?[0])
}

pub fn regression_head(global: &[f64], p: &Mlp) -> Result<RegressionOffsets> {
    if p.output_dim() != 2 {
        return Err(shape_err(
            "regression_head",
            format!("needs two outputs, got {}", p.output_dim()),
        ));
    }
    let y = p.forward(global)?;
    Ok(RegressionOffsets::new(y[0], y[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, relative_error};
    use approx::assert_abs_diff_eq;

    #[test]
    fn pooling_constant_rows() {
        let v = [1.0, -2.0, 0.5];
        let m = Matrix::from_rows(&[v, v, v, v]).unwrap();
        assert_eq!(global_avg_pool(&m).unwrap(), v.to_vec());
    }

    #[test]
    fn pooling_cancels() {
        let m = Matrix::from_rows(&[[1.0, -2.0], [-1.0, 2.0]]).unwrap();
        assert_eq!(global_avg_pool(&m).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn pooling_matches_loop_mean() {
        let mut rng = SeededRng::new(2);
        let m = Matrix::from_fn(3, 4, |_, _| rng.normal());
        let g = global_avg_pool(&m).unwrap();
        for c in 0..4 {
            let mut s = 0.0;
            for r in 0..3 {
                s += m[(r, c)];
            }
            assert_abs_diff_eq!(g[c], s / 3.0, epsilon = 1e-15);
        }
    }

    fn zero_head(outputs: usize, act: Activation) -> Mlp {
        Mlp {
            layers: vec![Dense::zeros(3, 3), Dense::zeros(3, outputs)],
            output_activation: act,
        }
    }

    #[test]
    fn zero_networks() {
        let g = [0.3, -1.0, 2.0];
        assert_eq!(
            score_head(&g, &zero_head(1, Activation::Tanh)).unwrap(),
            0.0
        );
        assert_eq!(
            regression_head(&g, &zero_head(2, Activation::Identity)).unwrap(),
            RegressionOffsets::new(0.0, 0.0)
        );
    }

    #[test]
    fn score_is_strictly_bounded() {
        let mut rng = SeededRng::new(4);
        let head = Mlp::two_layer(3, 3, 1, Activation::Tanh, &mut rng);
        for _ in 0..200 {
            let g: Vec<f64> = (0..3).map(|_| rng.normal() * 3.0).collect();
            let s = score_head(&g, &head).unwrap();
            assert!(s.abs() < 1.0);
        }
    }

    fn tiny_head(outputs: usize, act: Activation) -> Mlp {
        Mlp {
            layers: vec![
                Dense {
                    weight: Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]).unwrap(),
                    bias: Matrix::row_vector(&[0.0, -1.0]),
                },
                Dense {
                    weight: Matrix::from_fn(outputs, 2, |r, c| if r == c { 1.0 } else { -0.5 }),
                    bias: Matrix::row_vector(&vec![0.25; outputs]),
                },
            ],
            output_activation: act,
        }
    }

    #[test]
    fn score_matches_manual_forward() {
        // hidden = relu([1 - 2, 0.5 + 4 - 1]) = [0, 3.5]; out = tanh(1·0 - 0.5·3.5 + 0.25)
        let s = score_head(&[1.0, 2.0], &tiny_head(1, Activation::Tanh)).unwrap();
        assert_abs_diff_eq!(s, libm::tanh(-1.5), epsilon = 1e-15);
    }

    #[test]
    fn regression_matches_manual_forward() {
        // hidden = [0, 3.5]; out = [0 - 1.75 + 0.25, 0 + 3.5 + 0.25]
        let o = regression_head(&[1.0, 2.0], &tiny_head(2, Activation::Identity)).unwrap();
        assert_abs_diff_eq!(o.t_c, -1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(o.t_l, 3.75, epsilon = 1e-15);
    }

    #[test]
    fn head_shape_errors() {
        let g = [1.0, 2.0, 3.0];
        assert!(score_head(&g, &zero_head(2, Activation::Tanh)).is_err());
        assert!(regression_head(&g, &zero_head(1, Activation::Identity)).is_err());
        assert!(score_head(&[1.0], &zero_head(1, Activation::Tanh)).is_err());
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(9);
        let head = Mlp::two_layer(4, 4, 2, Activation::Identity, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let w = [0.7, -1.3];
        let cache = head.forward_cached(&x).unwrap();
        let mut g = head.zeros_like();
        let dx = head.backward(&cache, &w, Some(&mut g)).unwrap();

        let flat: Vec<f64> = head
            .tensors()
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .collect();
        let analytic: Vec<f64> = g
            .tensors()
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .collect();
        let numeric = finite_diff_grad(
            |v| {
                let mut h = head.clone();
                let mut off = 0;
                for t in h.tensors_mut() {
                    let n = t.len();
                    t.as_mut_slice().copy_from_slice(&v[off..off + n]);
                    off += n;
                }
                dot(&h.forward(&x).unwrap(), &w)
            },
            &flat,
            1e-5,
        )
        .unwrap();
        assert!(relative_error(&analytic, &numeric) < 1e-4);

        let numeric_x = finite_diff_grad(|v| dot(&head.forward(v).unwrap(), &w), &x, 1e-5).unwrap();
        assert!(relative_error(&dx, &numeric_x) < 1e-4);
    }
}
