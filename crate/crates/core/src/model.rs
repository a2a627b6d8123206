//! The full network, its three parameter groups, and batched loss/gradient
//! evaluation.
//!
//! Each loss is differentiated only with respect to its own group:
//!
//! | loss        | group        | tensors                                   |
//! |-------------|--------------|-------------------------------------------|
//! | triplet     | `Triplet`    | LSTM, GCN weight, score head              |
//! | regression  | `Regression` | regression head                           |
//! | L1-sparsity | `Sparsity`   | projection `W_φ`, `b_φ`                   |
//!
//! The triplet gradient still flows *through* the projection and the cosine
//! normalisation into the LSTM, since `Â` depends on the encoded features.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{
    build_node_features, lstm_backward, lstm_forward_cached, split_node_grad, LstmCache, LstmParams,
};
use crate::error::{shape_err, Error, Result};
use crate::graph::{
    adjacency_backward, build_adjacency_cached, gcn_backward, gcn_forward_cached, project,
    project_input_backward, project_param_backward, AdjacencyCache, GcnCache, GcnParams,
    Projection, WeightedAdjacency,
};
use crate::heads::{global_avg_pool, global_avg_pool_backward, Mlp, MlpCache, RegressionOffsets};
use crate::linalg::{Activation, Matrix};
use crate::loss::{hinge_active, l1_mean, sign};
use crate::optim::Hyperparameters;
use crate::rng::{SeededRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// LSTM hidden size `d`.
    pub hidden: usize,
    /// Projection width `d¹` used for the adjacency.
    pub proj_dim: usize,
    /// GCN output width.
    pub gcn_out: usize,
    /// Hidden width of both heads.
    pub head_hidden: usize,
}

impl ModelConfig {
    pub fn with_input_dim(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: 16,
            proj_dim: 16,
            gcn_out: 16,
            head_hidden: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [
            self.input_dim,
            self.hidden,
            self.proj_dim,
            self.gcn_out,
            self.head_hidden,
        ]
        .contains(&0)
        {
            return Err(Error::InvalidInput(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Disjoint parameter partitions, one per optimiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Triplet,
    Regression,
    Sparsity,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [
        ParamGroup::Sparsity,
        ParamGroup::Triplet,
        ParamGroup::Regression,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Triplet => "triplet",
            ParamGroup::Regression => "regression",
            ParamGroup::Sparsity => "sparsity",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ParamGroup::Triplet => 0,
            ParamGroup::Regression => 1,
            ParamGroup::Sparsity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ParamGroup::Triplet),
            1 => Some(ParamGroup::Regression),
            2 => Some(ParamGroup::Sparsity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub lstm: LstmParams,
    pub projection: Projection,
    pub gcn: GcnParams,
    pub score_head: Mlp,
    pub regression_head: Mlp,
}

impl Model {
    /// Random initialisation from the `Init` sub-stream of `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::substream(seed, Stream::Init);
        Ok(Self {
            config,
            lstm: LstmParams::init(config.input_dim, config.hidden, &mut rng),
            projection: Projection::init(config.hidden, config.proj_dim, &mut rng),
            gcn: GcnParams::init(config.hidden, config.gcn_out, &mut rng),
            score_head: Mlp::two_layer(
                config.gcn_out,
                config.head_hidden,
                1,
                Activation::Tanh,
                &mut rng,
            ),
            regression_head: Mlp::two_layer(
                config.gcn_out,
                config.head_hidden,
                2,
                Activation::Identity,
                &mut rng,
            ),
        })
    }

    /// Same architecture, every tensor zero; doubles as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let c = self.config;
        Self {
            config: c,
            lstm: LstmParams::zeros(c.input_dim, c.hidden),
            projection: Projection::zeros(c.hidden, c.proj_dim),
            gcn: GcnParams::zeros(c.hidden, c.gcn_out),
            score_head: self.score_head.zeros_like(),
            regression_head: self.regression_head.zeros_like(),
        }
    }

    /// Every tensor with its group and a stable name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(ParamGroup, String, &Matrix)> {
        let mut out: Vec<(ParamGroup, String, &Matrix)> = vec![
            (
                ParamGroup::Triplet,
                "lstm.w_input".into(),
                &self.lstm.w_input,
            ),
            (
                ParamGroup::Triplet,
                "lstm.w_hidden".into(),
                &self.lstm.w_hidden,
            ),
            (ParamGroup::Triplet, "lstm.bias".into(), &self.lstm.bias),
            (ParamGroup::Triplet, "gcn.weight".into(), &self.gcn.weight),
        ];
        for (i, l) in self.score_head.layers.iter().enumerate() {
            out.push((ParamGroup::Triplet, format!("score.{i}.weight"), &l.weight));
            out.push((ParamGroup::Triplet, format!("score.{i}.bias"), &l.bias));
        }
        for (i, l) in self.regression_head.layers.iter().enumerate() {
            out.push((
                ParamGroup::Regression,
                format!("regression.{i}.weight"),
                &l.weight,
            ));
            out.push((
                ParamGroup::Regression,
                format!("regression.{i}.bias"),
                &l.bias,
            ));
        }
        out.push((
            ParamGroup::Sparsity,
            "projection.weight".into(),
            &self.projection.weight,
        ));
        out.push((
            ParamGroup::Sparsity,
            "projection.bias".into(),
            &self.projection.bias,
        ));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut Matrix)> {
        let mut out: Vec<(ParamGroup, &mut Matrix)> = vec![
            (ParamGroup::Triplet, &mut self.lstm.w_input),
            (ParamGroup::Triplet, &mut self.lstm.w_hidden),
            (ParamGroup::Triplet, &mut self.lstm.bias),
            (ParamGroup::Triplet, &mut self.gcn.weight),
        ];
        out.extend(
            self.score_head
                .tensors_mut()
                .into_iter()
                .map(|t| (ParamGroup::Triplet, t)),
        );
        out.extend(
            self.regression_head
                .tensors_mut()
                .into_iter()
                .map(|t| (ParamGroup::Regression, t)),
        );
        out.push((ParamGroup::Sparsity, &mut self.projection.weight));
        out.push((ParamGroup::Sparsity, &mut self.projection.bias));
        out
    }

    pub fn group_tensors(&self, group: ParamGroup) -> Vec<&Matrix> {
        self.named_tensors()
            .into_iter()
            .filter(|(g, _, _)| *g == group)
            .map(|(_, _, t)| t)
            .collect()
    }

    pub fn group_tensors_mut(&mut self, group: ParamGroup) -> Vec<&mut Matrix> {
        self.tensors_mut()
            .into_iter()
            .filter(|(g, _)| *g == group)
            .map(|(_, t)| t)
            .collect()
    }

    /// The group's parameters flattened in [`Model::named_tensors`] order.
    pub fn group_vector(&self, group: ParamGroup) -> Vec<f64> {
        self.group_tensors(group)
            .into_iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect()
    }

    pub fn set_group_vector(&mut self, group: ParamGroup, values: &[f64]) -> Result<()> {
        let mut tensors = self.group_tensors_mut(group);
        let total: usize = tensors.iter().map(|t| t.len()).sum();
        if total != values.len() {
            return Err(shape_err(
                "set_group_vector",
                format!(
                    "group {} has {total} values, got {}",
                    group.name(),
                    values.len()
                ),
            ));
        }
        let mut off = 0;
        for t in tensors.iter_mut() {
            let n = t.len();
            t.as_mut_slice().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Squared L2 norm of the triplet group.
    pub fn triplet_sq_norm(&self) -> f64 {
        self.group_tensors(ParamGroup::Triplet)
            .iter()
            .map(|t| t.sum_squares())
            .sum()
    }
}

/// Forward intermediates for one (query, proposal) pair.
struct PairPass {
    h0: Matrix,
    adjacency: WeightedAdjacency,
    adj_cache: AdjacencyCache,
    gcn_cache: GcnCache,
    score_cache: MlpCache,
    reg_cache: MlpCache,
}

impl PairPass {
    fn score(&self) -> f64 {
        self.score_cache.output()[0]
    }

    fn offsets(&self) -> RegressionOffsets {
        let o = self.reg_cache.output();
        RegressionOffsets::new(o[0], o[1])
    }
}

fn pair_forward(model: &Model, q_hidden: &Matrix, p_hidden: &Matrix) -> Result<PairPass> {
    let h0 = build_node_features(q_hidden, p_hidden)?;
    let phi = project(&h0, &model.projection)?;
    let (adjacency, adj_cache) = build_adjacency_cached(&phi)?;
    let gcn_cache = gcn_forward_cached(&adjacency, &h0, &model.gcn)?;
    let global = global_avg_pool(gcn_cache.output())?;
    let score_cache = model.score_head.forward_cached(&global)?;
    let reg_cache = model.regression_head.forward_cached(&global)?;
    Ok(PairPass {
        h0,
        adjacency,
        adj_cache,
        gcn_cache,
        score_cache,
        reg_cache,
    })
}

/// Result of scoring one (query, proposal) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutput {
    pub score: f64,
    pub offsets: RegressionOffsets,
    pub adjacency: WeightedAdjacency,
}

fn check_clip(model: &Model, clip: &Matrix, what: &str) -> Result<()> {
    if clip.cols() != model.config.input_dim || clip.rows() < 2 {
        return Err(shape_err(
            "score_pair",
            format!(
                "{what} clip {:?} for input width {}",
                clip.shape(),
                model.config.input_dim
            ),
        ));
    }
    Ok(())
}

/// Full forward chain for one pair of equally long clips.
pub fn score_pair(model: &Model, query: &Matrix, proposal: &Matrix) -> Result<PairOutput> {
    check_clip(model, query, "query")?;
    check_clip(model, proposal, "proposal")?;
    let q = encode(model, query)?;
    let p = encode(model, proposal)?;
    score_hidden(model, &q, &p)
}

/// As [`score_pair`] with both clips already encoded by the LSTM.
pub(crate) fn score_hidden(
    model: &Model,
    q_hidden: &Matrix,
    p_hidden: &Matrix,
) -> Result<PairOutput> {
    let pass = pair_forward(model, q_hidden, p_hidden)?;
    Ok(PairOutput {
        score: pass.score(),
        offsets: pass.offsets(),
        adjacency: pass.adjacency,
    })
}

pub(crate) fn encode(model: &Model, clip: &Matrix) -> Result<Matrix> {
    Ok(lstm_forward_cached(clip, &model.lstm)?.into_hidden())
}

/// One training example with clips already resampled to the common length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub query: Matrix,
    pub positive: Matrix,
    pub negative: Matrix,
    /// Offsets that map the positive proposal onto its ground truth.
    pub target: RegressionOffsets,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLosses {
    pub triplet: f64,
    pub regression: f64,
    pub sparsity: f64,
}

/// Per-sample forward state kept for the backward pass.
struct SamplePass {
    q: LstmCache,
    p: LstmCache,
    n: LstmCache,
    pos: PairPass,
    neg: PairPass,
}

fn sample_forward(model: &Model, s: &TrainingSample) -> Result<SamplePass> {
    for (clip, what) in [
        (&s.query, "query"),
        (&s.positive, "positive"),
        (&s.negative, "negative"),
    ] {
        check_clip(model, clip, what)?;
    }
    let q = lstm_forward_cached(&s.query, &model.lstm)?;
    let p = lstm_forward_cached(&s.positive, &model.lstm)?;
    let n = lstm_forward_cached(&s.negative, &model.lstm)?;
    let pos = pair_forward(model, q.hidden(), p.hidden())?;
    let neg = pair_forward(model, q.hidden(), n.hidden())?;
    Ok(SamplePass { q, p, n, pos, neg })
}

fn losses_from(
    model: &Model,
    batch: &[TrainingSample],
    passes: &[SamplePass],
    hp: &Hyperparameters,
) -> BatchLosses {
    let mut hinge = 0.0;
    let mut reg = 0.0;
    let mut sparsity = 0.0;
    for (s, pass) in batch.iter().zip(passes) {
        hinge += (hp.margin - pass.pos.score() + pass.neg.score()).max(0.0);
        let o = pass.pos.offsets();
        reg += libm::fabs(o.t_c - s.target.t_c) + libm::fabs(o.t_l - s.target.t_l);
        sparsity += l1_mean(pass.pos.adjacency.matrix()) + l1_mean(pass.neg.adjacency.matrix());
    }
    let n = batch.len() as f64;
    BatchLosses {
        triplet: hinge + hp.l2 * model.triplet_sq_norm(),
        regression: reg / n,
        sparsity: sparsity / (2.0 * n),
    }
}

/// The three losses on a batch: summed triplet hinge plus L2 on the triplet
/// group, mean regression error over positives, and mean L1 sparsity over
/// the 2N adjacencies.
pub fn batch_losses(
    model: &Model,
    batch: &[TrainingSample],
    hp: &Hyperparameters,
) -> Result<BatchLosses> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let passes = batch
        .iter()
        .map(|s| sample_forward(model, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses_from(model, batch, &passes, hp))
}

/// Triplet-loss backward through one pair: score head, pooling, GCN, the
/// adjacency (with the projection held fixed) and back to node features.
/// Returns gradients for the query and proposal hidden states.
fn triplet_pair_backward(
    model: &Model,
    pass: &PairPass,
    d_score: f64,
    grads: &mut Model,
) -> Result<(Matrix, Matrix)> {
    let d_global =
        model
            .score_head
            .backward(&pass.score_cache, &[d_score], Some(&mut grads.score_head))?;
    let d_h1 = global_avg_pool_backward(&d_global, pass.h0.rows());
    let (d_adj, mut d_h0) = gcn_backward(
        &pass.adjacency,
        &pass.h0,
        &pass.gcn_cache,
        &d_h1,
        &model.gcn,
        Some(&mut grads.gcn),
    )?;
    let d_phi = adjacency_backward(&pass.adj_cache, &d_adj)?;
    d_h0.add_assign(&project_input_backward(&d_phi, &model.projection)?)?;
    split_node_grad(&d_h0)
}

fn sparsity_pair_backward(pass: &PairPass, scale: f64, grads: &mut Model) -> Result<()> {
    let d_adj = pass.adjacency.matrix().map(|a| scale * sign(a));
    let d_phi = adjacency_backward(&pass.adj_cache, &d_adj)?;
    project_param_backward(&pass.h0, &d_phi, &mut grads.projection)
}

/// Losses and routed gradients for a batch. The returned gradient model holds
/// `∂L_tri/∂θ_tri`, `∂L_reg/∂θ_reg` and `∂L_sparsity/∂θ_sparsity` in the
/// respective group tensors.
pub fn batch_gradients(
    model: &Model,
    batch: &[TrainingSample],
    hp: &Hyperparameters,
) -> Result<(BatchLosses, Model)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let passes = batch
        .iter()
        .map(|s| sample_forward(model, s))
        .collect::<Result<Vec<_>>>()?;
    let losses = losses_from(model, batch, &passes, hp);
    let mut grads = model.zeros_like();
    let n = batch.len() as f64;
    let nodes = passes[0].pos.h0.rows() as f64;
    let sparsity_scale = 1.0 / (nodes * nodes * 2.0 * n);

    for (s, pass) in batch.iter().zip(&passes) {
        if hinge_active(pass.pos.score(), pass.neg.score(), hp.margin) {
            let (dq_pos, dp) = triplet_pair_backward(model, &pass.pos, -1.0, &mut grads)?;
            let (dq_neg, dn) = triplet_pair_backward(model, &pass.neg, 1.0, &mut grads)?;
            let dq = dq_pos.add(&dq_neg)?;
            lstm_backward(&pass.q, &dq, &model.lstm, &mut grads.lstm)?;
            lstm_backward(&pass.p, &dp, &model.lstm, &mut grads.lstm)?;
            lstm_backward(&pass.n, &dn, &model.lstm, &mut grads.lstm)?;
        }

        let o = pass.pos.offsets();
        let d_off = [
            sign(o.t_c - s.target.t_c) / n,
            sign(o.t_l - s.target.t_l) / n,
        ];
        model.regression_head.backward(
            &pass.pos.reg_cache,
            &d_off,
            Some(&mut grads.regression_head),
        )?;

        sparsity_pair_backward(&pass.pos, sparsity_scale, &mut grads)?;
        sparsity_pair_backward(&pass.neg, sparsity_scale, &mut grads)?;
    }

    if hp.l2 != 0.0 {
        let params = model.group_tensors(ParamGroup::Triplet);
        for (g, p) in grads
            .group_tensors_mut(ParamGroup::Triplet)
            .into_iter()
            .zip(params)
        {
            g.axpy(2.0 * hp.l2, p)?;
        }
    }
    Ok((losses, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model {
        Model::init(
            ModelConfig {
                input_dim: 3,
                hidden: 5,
                proj_dim: 3,
                gcn_out: 4,
                head_hidden: 4,
            },
            7,
        )
        .unwrap()
    }

    #[test]
    fn groups_partition_all_tensors() {
        let m = tiny();
        let total: usize = m.named_tensors().iter().map(|(_, _, t)| t.len()).sum();
        let by_group: usize = ParamGroup::ALL
            .iter()
            .map(|&g| m.group_vector(g).len())
            .sum();
        assert_eq!(total, by_group);
        let mut names: Vec<String> = m.named_tensors().into_iter().map(|(_, n, _)| n).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), m.named_tensors().len());
        assert_eq!(m.group_tensors(ParamGroup::Sparsity).len(), 2);
    }

    #[test]
    fn group_vector_round_trip() {
        let mut m = tiny();
        let v: Vec<f64> = m
            .group_vector(ParamGroup::Regression)
            .iter()
            .map(|x| x + 1.0)
            .collect();
        m.set_group_vector(ParamGroup::Regression, &v).unwrap();
        assert_eq!(m.group_vector(ParamGroup::Regression), v);
        assert!(m.set_group_vector(ParamGroup::Regression, &v[1..]).is_err());
    }

    #[test]
    fn score_pair_is_pure_and_bounded() {
        let m = tiny();
        let mut rng = SeededRng::new(3);
        let q = Matrix::from_fn(4, 3, |_, _| rng.normal());
        let p = Matrix::from_fn(4, 3, |_, _| rng.normal());
        let a = score_pair(&m, &q, &p).unwrap();
        let b = score_pair(&m, &q, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.score.abs() < 1.0);
        assert_eq!(a.adjacency.nodes(), 8);
        assert!(score_pair(&m, &q, &Matrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn empty_batches_are_rejected() {
        let m = tiny();
        assert!(batch_losses(&m, &[], &Hyperparameters::default()).is_err());
        assert!(batch_gradients(&m, &[], &Hyperparameters::default()).is_err());
    }
}
