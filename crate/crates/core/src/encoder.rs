//! Single-layer LSTM encoder shared by query and proposal clips, plus the
//! time-axis concatenation that forms the graph's node features.

use alloc::format;
use alloc::vec;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{sigmoid, Matrix};
use crate::rng::SeededRng;

/// A clip's temporal feature matrix, `T × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub clip_id: u64,
    features: Matrix,
}

impl FeatureSequence {
    pub fn new(clip_id: u64, features: Matrix) -> Result<Self> {
        if features.rows() < 2 {
            return Err(Error::InvalidInput(format!(
                "a feature sequence needs at least 2 timesteps, got {}",
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite(format!("features of clip {clip_id}")));
        }
        Ok(Self { clip_id, features })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn timesteps(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Resamples the rows of `m` to exactly `t` rows: output row `k` sits at
/// source position `k·(L−1)/(t−1)` and linearly interpolates its two
/// neighbouring rows.
pub fn resample(m: &Matrix, t: usize) -> Result<Matrix> {
    if t < 2 {
        return Err(Error::InvalidInput(format!(
            "target length must be ≥ 2, got {t}"
        )));
    }
    let len = m.rows();
    if len == 0 {
        return Err(Error::InvalidInput("cannot resample an empty clip".into()));
    }
    let mut out = Matrix::zeros(t, m.cols());
    if len == 1 {
        for k in 0..t {
            out.row_mut(k).copy_from_slice(m.row(0));
        }
        return Ok(out);
    }
    let step = (len - 1) as f64 / (t - 1) as f64;
    for k in 0..t {
        let pos = k as f64 * step;
        let lo = (libm::floor(pos) as usize).min(len - 1);
        let hi = (lo + 1).min(len - 1);
        let frac = pos - lo as f64;
        let (a, b) = (m.row(lo), m.row(hi));
        for (o, (x, y)) in out.row_mut(k).iter_mut().zip(a.iter().zip(b)) {
            *o = x + frac * (y - x);
        }
    }
    Ok(out)
}

/// Gate weights stacked as `[input; forget; candidate; output]` blocks of
/// `hidden` rows each.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4d × d_in`
    pub w_input: Matrix,
    /// `4d × d`
    pub w_hidden: Matrix,
    /// `1 × 4d`
    pub bias: Matrix,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_input: Matrix::zeros(4 * hidden, input_dim),
            w_hidden: Matrix::zeros(4 * hidden, hidden),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }

    /// Uniform `±1/√d` weights and biases, forget-gate bias set to 1.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / libm::sqrt(hidden as f64);
        let mut p = Self::zeros(input_dim, hidden);
        for v in p
            .w_input
            .as_mut_slice()
            .iter_mut()
            .chain(p.w_hidden.as_mut_slice())
            .chain(p.bias.as_mut_slice())
        {
            *v = rng.uniform(-bound, bound);
        }
        for j in hidden..2 * hidden {
            p.bias[(0, j)] = 1.0;
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.cols()
    }
}

/// Intermediates of one forward pass, consumed by [`lstm_backward`].
#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Matrix,
    /// Activated gates per timestep, `T × 4d`.
    gates: Matrix,
    cells: Matrix,
    hidden: Matrix,
}

impl LstmCache {
    pub fn hidden(&self) -> &Matrix {
        &self.hidden
    }

    pub fn into_hidden(self) -> Matrix {
        self.hidden
    }
}

fn check_input(seq: &Matrix, p: &LstmParams) -> Result<()> {
    if seq.cols() != p.input_dim() {
        return Err(shape_err(
            "lstm_forward",
            format!(
                "input width {} but weights expect {}",
                seq.cols(),
                p.input_dim()
            ),
        ));
    }
    if seq.rows() == 0 {
        return Err(Error::InvalidInput("empty input sequence".into()));
    }
    Ok(())
}

/// Hidden state after each timestep, starting from zero hidden and cell states.
pub fn lstm_forward(seq: &FeatureSequence, p: &LstmParams) -> Result<Matrix> {
    Ok(lstm_forward_cached(seq.features(), p)?.hidden)
}

pub fn lstm_forward_cached(seq: &Matrix, p: &LstmParams) -> Result<LstmCache> {
    check_input(seq, p)?;
    let d = p.hidden();
    let steps = seq.rows();
    let pre_input = seq.matmul_t(&p.w_input)?;
    let mut gates = Matrix::zeros(steps, 4 * d);
    let mut cells = Matrix::zeros(steps, d);
    let mut hidden = Matrix::zeros(steps, d);
    let mut h_prev = vec![0.0; d];
    let mut c_prev = vec![0.0; d];
    let mut z = vec![0.0; 4 * d];
    for t in 0..steps {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj =
                pre_input[(t, j)] + p.bias[(0, j)] + crate::linalg::dot(p.w_hidden.row(j), &h_prev);
        }
        let g_row = gates.row_mut(t);
        for j in 0..d {
            g_row[j] = sigmoid(z[j]);
            g_row[d + j] = sigmoid(z[d + j]);
            g_row[2 * d + j] = libm::tanh(z[2 * d + j]);
            g_row[3 * d + j] = sigmoid(z[3 * d + j]);
        }
        for j in 0..d {
            let (i, f, g, o) = (g_row[j], g_row[d + j], g_row[2 * d + j], g_row[3 * d + j]);
            let c = f * c_prev[j] + i * g;
            cells[(t, j)] = c;
            hidden[(t, j)] = o * libm::tanh(c);
        }
        c_prev.copy_from_slice(cells.row(t));
        h_prev.copy_from_slice(hidden.row(t));
    }
    Ok(LstmCache {
        input: seq.clone(),
        gates,
        cells,
        hidden,
    })
}

/// Backpropagation through time. `d_hidden` is the loss gradient with respect
/// to every hidden output row; parameter gradients are accumulated into `grads`.
pub fn lstm_backward(
    cache: &LstmCache,
    d_hidden: &Matrix,
    p: &LstmParams,
    grads: &mut LstmParams,
) -> Result<()> {
    if d_hidden.shape() != cache.hidden.shape() {
        return Err(shape_err(
            "lstm_backward",
            format!(
                "{:?} vs hidden {:?}",
                d_hidden.shape(),
                cache.hidden.shape()
            ),
        ));
    }
    let d = p.hidden();
    let steps = cache.hidden.rows();
    let mut dh_next = vec![0.0; d];
    let mut dc_next = vec![0.0; d];
    let mut dz = vec![0.0; 4 * d];
    for t in (0..steps).rev() {
        let g_row = cache.gates.row(t);
        for j in 0..d {
            let (i, f, g, o) = (g_row[j], g_row[d + j], g_row[2 * d + j], g_row[3 * d + j]);
            let c = cache.cells[(t, j)];
            let c_prev = if t > 0 { cache.cells[(t - 1, j)] } else { 0.0 };
            let tc = libm::tanh(c);
            let dh = d_hidden[(t, j)] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[d + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * d + j] = dc * i * (1.0 - g * g);
            dz[3 * d + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let x = cache.input.row(t);
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr == 0.0 {
                continue;
            }
            grads.bias[(0, r)] += dzr;
            for (gw, &xv) in grads.w_input.row_mut(r).iter_mut().zip(x) {
                *gw += dzr * xv;
            }
            if t > 0 {
                let h_prev = cache.hidden.row(t - 1);
                for (gw, &hv) in grads.w_hidden.row_mut(r).iter_mut().zip(h_prev) {
                    *gw += dzr * hv;
                }
            }
        }
        for (k, dh) in dh_next.iter_mut().enumerate() {
            *dh = dz
                .iter()
                .enumerate()
                .map(|(r, &dzr)| dzr * p.w_hidden[(r, k)])
                .sum();
        }
    }
    Ok(())
}

/// Stacks query rows over proposal rows into the `2T × d` node feature matrix.
pub fn build_node_features(query_hidden: &Matrix, proposal_hidden: &Matrix) -> Result<Matrix> {
    if query_hidden.shape() != proposal_hidden.shape() {
        return Err(shape_err(
            "build_node_features",
            format!(
                "{:?} vs {:?}",
                query_hidden.shape(),
                proposal_hidden.shape()
            ),
        ));
    }
    query_hidden.vstack(proposal_hidden)
}

/// Splits node-feature gradients back into query and proposal halves.
pub(crate) fn split_node_grad(d_nodes: &Matrix) -> Result<(Matrix, Matrix)> {
    let t = d_nodes.rows() / 2;
    Ok((d_nodes.slice_rows(0, t)?, d_nodes.slice_rows(t, 2 * t)?))
}
