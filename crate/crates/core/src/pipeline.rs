//! Training loop, retrieval with boundary refinement, and evaluation.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{epoch_triplets, Dataset, ProposalIndex, Split, TrainingTriplet};
use crate::encoder::resample;
use crate::error::{Error, Result};
use crate::heads::RegressionOffsets;
use crate::linalg::Matrix;
use crate::loss::encode_targets;
use crate::model::{
    batch_gradients, encode, score_hidden, BatchLosses, Model, ModelConfig, ParamGroup,
    TrainingSample,
};
use crate::optim::{Adam, Hyperparameters};
use crate::proposals::DEFAULT_THRESHOLDS;
use crate::rng::{SeededRng, Stream};
use crate::segment::{tiou, Segment};

/// tIoU thresholds reported by [`evaluate`].
pub const EVAL_THRESHOLDS: [f64; 8] = [0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// Everything a training run depends on besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hyper: Hyperparameters,
    pub model: ModelConfig,
    pub thresholds: Vec<f64>,
    /// Truncates each shuffled epoch to at most this many triplets.
    pub triplets_per_epoch: Option<usize>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(input_dim: usize, seed: u64) -> Self {
        Self {
            hyper: Hyperparameters::default(),
            model: ModelConfig::with_input_dim(input_dim),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            triplets_per_epoch: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.model.validate()?;
        if self.thresholds.is_empty() {
            return Err(Error::InvalidInput(
                "at least one grouping threshold is required".into(),
            ));
        }
        if self.triplets_per_epoch == Some(0) {
            return Err(Error::InvalidInput(
                "triplets_per_epoch must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One Adam per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub triplet: Adam,
    pub regression: Adam,
    pub sparsity: Adam,
}

impl Optimizers {
    pub fn new(model: &Model, hp: &Hyperparameters) -> Self {
        let adam = |lr, g| Adam::new(lr, hp.beta1, hp.beta2, hp.eps, &model.group_tensors(g));
        Self {
            triplet: adam(hp.lr_triplet, ParamGroup::Triplet),
            regression: adam(hp.lr_regression, ParamGroup::Regression),
            sparsity: adam(hp.lr_sparsity, ParamGroup::Sparsity),
        }
    }

    pub fn get(&self, group: ParamGroup) -> &Adam {
        match group {
            ParamGroup::Triplet => &self.triplet,
            ParamGroup::Regression => &self.regression,
            ParamGroup::Sparsity => &self.sparsity,
        }
    }

    pub fn get_mut(&mut self, group: ParamGroup) -> &mut Adam {
        match group {
            ParamGroup::Triplet => &mut self.triplet,
            ParamGroup::Regression => &mut self.regression,
            ParamGroup::Sparsity => &mut self.sparsity,
        }
    }

    /// One Adam step on `group` alone.
    pub fn step_group(
        &mut self,
        group: ParamGroup,
        model: &mut Model,
        grads: &Model,
    ) -> Result<()> {
        let g = grads.group_tensors(group);
        let mut p = model.group_tensors_mut(group);
        self.get_mut(group).step(&mut p, &g)
    }

    /// Applies the sparsity, triplet and regression steps, in that order.
    /// Groups are disjoint, so the order only matters for reproducibility.
    pub fn step(&mut self, model: &mut Model, grads: &Model) -> Result<()> {
        for group in ParamGroup::ALL {
            self.step_group(group, model, grads)?;
        }
        Ok(())
    }
}

/// Mean per-batch losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub batches: usize,
    pub triplets: usize,
    pub losses: BatchLosses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub optimizers: Optimizers,
    pub log: Vec<EpochLog>,
}

/// Resampled query clip and best-proposal clip of every video.
struct ClipCache {
    query: Vec<Matrix>,
    best: Vec<Matrix>,
}

impl ClipCache {
    fn build(dataset: &Dataset, index: &ProposalIndex, t: usize) -> Result<Self> {
        let mut query = Vec::with_capacity(dataset.videos.len());
        let mut best = Vec::with_capacity(dataset.videos.len());
        for (v, b) in dataset.videos.iter().zip(&index.best) {
            query.push(resample(&v.clip(&v.gt)?, t)?);
            best.push(resample(&v.clip(b)?, t)?);
        }
        Ok(Self { query, best })
    }

    fn sample(&self, dataset: &Dataset, t: &TrainingTriplet) -> Result<TrainingSample> {
        Ok(TrainingSample {
            query: self.query[t.query_video].clone(),
            positive: self.best[t.positive_video].clone(),
            negative: self.best[t.negative_video].clone(),
            target: encode_targets(&t.positive, &dataset.videos[t.positive_video].gt)?,
        })
    }
}

fn check_finite(losses: &BatchLosses, epoch: usize, batch: usize) -> Result<()> {
    for (name, v) in [
        ("triplet", losses.triplet),
        ("regression", losses.regression),
        ("sparsity", losses.sparsity),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "{name} loss is {v} at epoch {epoch}, batch {batch}"
            )));
        }
    }
    Ok(())
}

/// Trains from scratch on the training split. `on_epoch` sees each epoch's
/// log as soon as it completes.
pub fn train<F: FnMut(&EpochLog)>(
    dataset: &Dataset,
    cfg: &RunConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    dataset.validate()?;
    if dataset.feature_dim() != cfg.model.input_dim {
        return Err(Error::InvalidInput(format!(
            "dataset feature width {} does not match model input width {}",
            dataset.feature_dim(),
            cfg.model.input_dim
        )));
    }
    let hp = &cfg.hyper;
    let index = ProposalIndex::build(dataset, &cfg.thresholds)?;
    let clips = ClipCache::build(dataset, &index, hp.timesteps)?;
    let mut model = Model::init(cfg.model, cfg.seed)?;
    let mut optimizers = Optimizers::new(&model, hp);
    let mut rng = SeededRng::substream(cfg.seed, Stream::Shuffle);
    let mut log = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        let mut triplets = epoch_triplets(dataset, &index, &mut rng)?;
        if let Some(cap) = cfg.triplets_per_epoch {
            triplets.truncate(cap);
        }
        let mut sum = BatchLosses::default();
        let mut batches = 0;
        for (b, chunk) in triplets.chunks(hp.batch_size).enumerate() {
            let samples = chunk
                .iter()
                .map(|t| clips.sample(dataset, t))
                .collect::<Result<Vec<_>>>()?;
            let (losses, grads) = batch_gradients(&model, &samples, hp)?;
            check_finite(&losses, epoch, b)?;
            optimizers.step(&mut model, &grads)?;
            sum.triplet += losses.triplet;
            sum.regression += losses.regression;
            sum.sparsity += losses.sparsity;
            batches += 1;
        }
        let nb = batches.max(1) as f64;
        let entry = EpochLog {
            epoch,
            batches,
            triplets: triplets.len(),
            losses: BatchLosses {
                triplet: sum.triplet / nb,
                regression: sum.regression / nb,
                sparsity: sum.sparsity / nb,
            },
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome {
        model,
        optimizers,
        log,
    })
}

/// Inverts the offset encoding, `len' = len·e^(−T_l)`, `loc' = loc − T_c·len'`,
/// and clamps to `[0, video_len]`. Falls back to the clamped proposal when the
/// result is non-finite or collapses.
pub fn refine(proposal: &Segment, offsets: RegressionOffsets, video_len: f64) -> Segment {
    let len = proposal.len() * libm::exp(-offsets.t_l);
    let loc = proposal.loc() - offsets.t_c * len;
    if loc.is_finite() && len.is_finite() {
        let (s, e) = ((loc - len / 2.0).max(0.0), (loc + len / 2.0).min(video_len));
        if let Ok(seg) = Segment::new(s, e) {
            return seg;
        }
    }
    let (s, e) = (
        proposal.start().min(video_len),
        proposal.end().min(video_len),
    );
    Segment::new(s, e).unwrap_or(*proposal)
}

/// The winning proposal for one query and its refined boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub index: usize,
    pub proposal: Segment,
    pub score: f64,
    pub offsets: RegressionOffsets,
    pub refined: Segment,
    /// Score of every candidate proposal, in proposal order.
    pub scores: Vec<f64>,
}

fn pick(
    model: &Model,
    q_hidden: &Matrix,
    proposals: &[Segment],
    p_hidden: &[Matrix],
    video_len: f64,
) -> Result<Retrieval> {
    let mut best: Option<(usize, f64, RegressionOffsets)> = None;
    let mut scores = Vec::with_capacity(proposals.len());
    for (i, h) in p_hidden.iter().enumerate() {
        let out = score_hidden(model, q_hidden, h)?;
        if !out.score.is_finite() {
            return Err(Error::NonFinite(format!("score of proposal {i}")));
        }
        scores.push(out.score);
        if best.is_none_or(|(_, s, _)| out.score > s) {
            best = Some((i, out.score, out.offsets));
        }
    }
    let (index, score, offsets) = best.ok_or(Error::NoProposals)?;
    Ok(Retrieval {
        index,
        proposal: proposals[index],
        score,
        offsets,
        refined: refine(&proposals[index], offsets, video_len),
        scores,
    })
}

fn encode_proposals(
    model: &Model,
    features: &Matrix,
    proposals: &[Segment],
    t: usize,
) -> Result<Vec<Matrix>> {
    proposals
        .iter()
        .map(|p| {
            let r = p.row_range();
            let clip = features.slice_rows(r.start, r.end.min(features.rows()))?;
            encode(model, &resample(&clip, t)?)
        })
        .collect()
}

/// Scores every proposal of the reference video against the query clip and
/// returns the highest-scoring one (lowest index on ties) with refined
/// boundaries. Query and proposals are resampled to `timesteps`.
pub fn retrieve(
    model: &Model,
    query: &Matrix,
    reference: &Matrix,
    proposals: &[Segment],
    timesteps: usize,
) -> Result<Retrieval> {
    if proposals.is_empty() {
        return Err(Error::NoProposals);
    }
    let q = encode(model, &resample(query, timesteps)?)?;
    let hidden = encode_proposals(model, reference, proposals, timesteps)?;
    pick(model, &q, proposals, &hidden, reference.rows() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// Fraction of queries whose refined prediction reaches each threshold.
    pub accuracy: Vec<f64>,
    /// Expected accuracy of an unrefined uniformly random proposal pick.
    pub chance: Vec<f64>,
    pub mean_tiou: f64,
    pub queries: usize,
}

/// Runs every ordered pair of distinct same-class test videos as
/// (query, reference): the query is the ground-truth clip of the first, and
/// retrieval happens among the proposals of the second.
pub fn evaluate(model: &Model, dataset: &Dataset, cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let t = cfg.hyper.timesteps;
    let test = dataset.split_indices(Split::Test);
    let index = ProposalIndex::build(dataset, &cfg.thresholds)?;
    let mut q_hidden = Vec::with_capacity(test.len());
    let mut p_hidden = Vec::with_capacity(test.len());
    for &v in &test {
        let video = &dataset.videos[v];
        q_hidden.push(encode(model, &resample(&video.clip(&video.gt)?, t)?)?);
        p_hidden.push(encode_proposals(
            model,
            &video.features,
            &index.proposals[v],
            t,
        )?);
    }

    let thresholds = EVAL_THRESHOLDS.to_vec();
    let mut hits = alloc::vec![0usize; thresholds.len()];
    let mut chance = alloc::vec![0.0; thresholds.len()];
    let mut tiou_sum = 0.0;
    let mut queries = 0usize;
    for (qi, &q) in test.iter().enumerate() {
        for (ri, &r) in test.iter().enumerate() {
            if q == r || dataset.videos[q].class_id != dataset.videos[r].class_id {
                continue;
            }
            let video = &dataset.videos[r];
            let props = &index.proposals[r];
            let got = pick(
                model,
                &q_hidden[qi],
                props,
                &p_hidden[ri],
                video.len() as f64,
            )?;
            let iou = tiou(&got.refined, &video.gt);
            tiou_sum += iou;
            for (k, &tau) in thresholds.iter().enumerate() {
                if iou >= tau {
                    hits[k] += 1;
                }
                let good = props.iter().filter(|p| tiou(p, &video.gt) >= tau).count();
                chance[k] += good as f64 / props.len() as f64;
            }
            queries += 1;
        }
    }
    if queries == 0 {
        return Err(Error::InvalidInput(
            "test split has no same-class video pairs".into(),
        ));
    }
    let n = queries as f64;
    Ok(EvalReport {
        accuracy: hits.iter().map(|&h| h as f64 / n).collect(),
        chance: chance.iter().map(|c| c / n).collect(),
        thresholds,
        mean_tiou: tiou_sum / n,
        queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_dataset, DatasetSpec};

    #[test]
    fn refine_inverts_targets() {
        let p = Segment::new(40.0, 60.0).unwrap();
        let gt = Segment::new(40.0, 50.0).unwrap();
        let r = refine(&p, encode_targets(&p, &gt).unwrap(), 120.0);
        assert!((r.start() - 40.0).abs() < 1e-12 && (r.end() - 50.0).abs() < 1e-12);
        assert_eq!(refine(&p, RegressionOffsets::default(), 120.0), p);
    }

    #[test]
    fn refine_clamps_and_falls_back() {
        let p = Segment::new(100.0, 118.0).unwrap();
        let r = refine(&p, RegressionOffsets::new(-0.2, 0.0), 120.0);
        assert_eq!(r.end(), 120.0);
        let gone = refine(&p, RegressionOffsets::new(-50.0, 0.0), 120.0);
        assert_eq!(gone, p);
        let nan = refine(&p, RegressionOffsets::new(f64::NAN, 0.0), 120.0);
        assert_eq!(nan, p);
    }

    #[test]
    fn retrieve_needs_proposals() {
        let m = Model::init(ModelConfig::with_input_dim(3), 1).unwrap();
        let x = Matrix::zeros(10, 3);
        assert!(matches!(
            retrieve(&m, &x, &x, &[], 8),
            Err(Error::NoProposals)
        ));
    }

    #[test]
    fn retrieve_breaks_ties_towards_lowest_index() {
        let m = Model::init(ModelConfig::with_input_dim(3), 1).unwrap();
        let x = Matrix::zeros(30, 3);
        let props = [
            Segment::new(0.0, 10.0).unwrap(),
            Segment::new(10.0, 20.0).unwrap(),
        ];
        let r = retrieve(&m, &x, &x, &props, 8).unwrap();
        assert_eq!(r.scores[0], r.scores[1]);
        assert_eq!(r.index, 0);
    }

    #[test]
    fn frozen_learning_rates_leave_only_the_projection_moving() {
        let spec = DatasetSpec {
            num_classes: 3,
            videos_per_class: 3,
            test_classes: 1,
            video_len: 60,
            feature_dim: 3,
            motif_len_max: 10,
            distractors_per_video: 1,
            seed: 2,
            ..DatasetSpec::default()
        };
        let data = generate_synthetic_dataset(&spec).unwrap();
        let mut cfg = RunConfig::new(3, 4);
        cfg.hyper.epochs = 2;
        cfg.hyper.batch_size = 4;
        cfg.hyper.timesteps = 6;
        cfg.hyper.lr_triplet = 0.0;
        cfg.hyper.lr_regression = 0.0;
        let trained = train(&data, &cfg, |_| {}).unwrap().model;
        let init = Model::init(cfg.model, cfg.seed).unwrap();
        for g in [ParamGroup::Triplet, ParamGroup::Regression] {
            assert_eq!(trained.group_vector(g), init.group_vector(g));
        }
        assert_ne!(
            trained.group_vector(ParamGroup::Sparsity),
            init.group_vector(ParamGroup::Sparsity)
        );
    }

    #[test]
    fn short_training_run_is_reproducible() {
        let spec = DatasetSpec {
            num_classes: 4,
            videos_per_class: 3,
            video_len: 80,
            feature_dim: 4,
            motif_len_max: 12,
            distractors_per_video: 2,
            seed: 5,
            ..DatasetSpec::default()
        };
        let data = generate_synthetic_dataset(&spec).unwrap();
        let mut cfg = RunConfig::new(4, 11);
        cfg.hyper.epochs = 2;
        cfg.hyper.batch_size = 4;
        cfg.hyper.timesteps = 8;
        let mut seen = 0;
        let a = train(&data, &cfg, |_| seen += 1).unwrap();
        let b = train(&data, &cfg, |_| {}).unwrap();
        assert_eq!(seen, 2);
        assert_eq!(a, b);
        let report = evaluate(&a.model, &data, &cfg).unwrap();
        assert_eq!(report.queries, 2 * 3 * 2);
        assert!(report.accuracy.windows(2).all(|w| w[0] >= w[1]));
        assert!(report.chance.windows(2).all(|w| w[0] >= w[1]));
    }
}
