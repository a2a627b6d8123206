//! Deterministic synthetic videos with planted class motifs, and triplet
//! sampling over them.
//!
//! Each video is Gaussian background noise with several non-overlapping
//! motif segments. One segment carries the video's own class motif and is
//! its ground truth; the others carry motifs of different classes and act as
//! distractor actions. A motif is a fixed per-class direction scaled by a
//! half-sine envelope over the segment. Actionness is high over every motif
//! segment with linear ramps straddling the boundaries, so lower grouping
//! thresholds yield slightly wider proposals than higher ones.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::proposals::actionness_grouping;
use crate::rng::{SeededRng, Stream};
use crate::segment::{tiou, Segment};

/// Actionness level outside any action.
const ACTIONNESS_LOW: f64 = 0.05;
/// Actionness level in the interior of an action.
const ACTIONNESS_HIGH: f64 = 0.95;
/// Half-width, in timesteps, of the actionness ramp centred on each boundary.
const RAMP_HALF_WIDTH: f64 = 1.5;
/// Motif segments keep this many timesteps clear of the video edges.
const EDGE_MARGIN: usize = 2;

/// Generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub videos_per_class: usize,
    /// Number of classes held out for testing; the rest train.
    pub test_classes: usize,
    pub video_len: usize,
    pub feature_dim: usize,
    /// Motif amplitude relative to unit-variance background noise, per feature.
    pub snr: f64,
    pub motif_len_min: usize,
    pub motif_len_max: usize,
    pub distractors_per_video: usize,
    /// Minimum number of background timesteps between two motif segments.
    pub min_gap: usize,
    /// Half-width of the uniform noise added to actionness.
    pub actionness_noise: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 8,
            videos_per_class: 20,
            test_classes: 2,
            video_len: 120,
            feature_dim: 16,
            snr: 3.0,
            motif_len_min: 8,
            motif_len_max: 20,
            distractors_per_video: 3,
            min_gap: 6,
            actionness_noise: 0.1,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidInput(msg));
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.test_classes == 0 || self.num_classes - self.test_classes.min(self.num_classes) < 2
        {
            return bad(format!(
                "{} test classes out of {} leaves fewer than 2 training classes",
                self.test_classes, self.num_classes
            ));
        }
        if self.videos_per_class < 2 {
            return bad(format!(
                "need at least 2 videos per class, got {}",
                self.videos_per_class
            ));
        }
        if self.feature_dim == 0 {
            return bad("feature dimension must be positive".into());
        }
        if self.motif_len_min < 4 || self.motif_len_max < self.motif_len_min {
            return bad(format!(
                "motif lengths must satisfy 4 ≤ min ≤ max, got {}..={}",
                self.motif_len_min, self.motif_len_max
            ));
        }
        if self.video_len <= self.motif_len_max {
            return bad(format!(
                "video length {} must exceed the longest motif {}",
                self.video_len, self.motif_len_max
            ));
        }
        let k = self.distractors_per_video + 1;
        let worst = k * self.motif_len_max + (k - 1) * self.min_gap + 2 * EDGE_MARGIN;
        if worst > self.video_len {
            return bad(format!(
                "{k} motifs of up to {} steps with gap {} do not fit in {} steps",
                self.motif_len_max, self.min_gap, self.video_len
            ));
        }
        if self.num_classes < 2 && self.distractors_per_video > 0 {
            return bad("distractors need a second class".into());
        }
        if !(self.snr.is_finite() && self.snr >= 0.0) {
            return bad(format!(
                "snr must be finite and non-negative, got {}",
                self.snr
            ));
        }
        if !(0.0..0.45).contains(&self.actionness_noise) {
            return bad(format!(
                "actionness noise {} outside [0, 0.45)",
                self.actionness_noise
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    /// `video_len × feature_dim`
    pub features: Matrix,
    pub class_id: usize,
    pub gt: Segment,
    pub actionness: Vec<f64>,
}

impl SyntheticVideo {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn proposals(&self, thresholds: &[f64]) -> Result<Vec<Segment>> {
        actionness_grouping(&self.actionness, thresholds)
    }

    /// Feature rows covered by `segment`.
    pub fn clip(&self, segment: &Segment) -> Result<Matrix> {
        let r = segment.row_range();
        self.features.slice_rows(r.start, r.end.min(self.len()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub videos: Vec<SyntheticVideo>,
    pub num_classes: usize,
    pub train_classes: Vec<usize>,
    pub test_classes: Vec<usize>,
}

/// Which side of the class split to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Dataset {
    pub fn video_len(&self) -> usize {
        self.videos.first().map_or(0, SyntheticVideo::len)
    }

    pub fn feature_dim(&self) -> usize {
        self.videos.first().map_or(0, |v| v.features.cols())
    }

    pub fn classes(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train_classes,
            Split::Test => &self.test_classes,
        }
    }

    /// Indices of the videos whose class belongs to `split`, in file order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        let classes = self.classes(split);
        self.videos
            .iter()
            .enumerate()
            .filter(|(_, v)| classes.contains(&v.class_id))
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks the structural invariants of a dataset read from disk.
    pub fn validate(&self) -> Result<()> {
        let (len, dim) = (self.video_len(), self.feature_dim());
        if self.videos.is_empty() || len == 0 || dim == 0 {
            return Err(Error::InvalidInput("dataset has no videos".into()));
        }
        if self
            .train_classes
            .iter()
            .any(|c| self.test_classes.contains(c))
        {
            return Err(Error::InvalidInput("train and test classes overlap".into()));
        }
        for (i, v) in self.videos.iter().enumerate() {
            if v.features.shape() != (len, dim) || v.actionness.len() != len {
                return Err(Error::InvalidInput(format!(
                    "video {i} has inconsistent shape"
                )));
            }
            if v.class_id >= self.num_classes {
                return Err(Error::InvalidInput(format!(
                    "video {i} has class {} ≥ {}",
                    v.class_id, self.num_classes
                )));
            }
            if v.gt.end() > len as f64 {
                return Err(Error::InvalidInput(format!(
                    "video {i} ground truth exceeds its length"
                )));
            }
        }
        Ok(())
    }
}

fn unit_rms_direction(dim: usize, rng: &mut SeededRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = crate::linalg::norm2(&v);
        if norm > 1e-6 {
            let scale = libm::sqrt(dim as f64) / norm;
            return v.into_iter().map(|x| x * scale).collect();
        }
    }
}

/// Actionness weight in [0, 1] of timestep `t` for one segment: 1 inside,
/// 0 outside, linear across `±RAMP_HALF_WIDTH` of each boundary.
fn ramp_weight(t: usize, seg: &Segment) -> f64 {
    let centre = t as f64 + 0.5;
    let inside = (centre - seg.start()).min(seg.end() - centre);
    ((inside + RAMP_HALF_WIDTH) / (2.0 * RAMP_HALF_WIDTH)).clamp(0.0, 1.0)
}

/// Places `lens.len()` segments in order with at least `min_gap` between
/// neighbours, spreading the leftover slack uniformly at random.
fn place_segments(
    lens: &[usize],
    video_len: usize,
    min_gap: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Segment>> {
    let used: usize =
        lens.iter().sum::<usize>() + lens.len().saturating_sub(1) * min_gap + 2 * EDGE_MARGIN;
    let slack = video_len
        .checked_sub(used)
        .ok_or_else(|| Error::InvalidInput("motifs do not fit in the video".into()))?;
    let mut cuts: Vec<usize> = (0..lens.len()).map(|_| rng.between(0, slack)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(lens.len());
    let mut cursor = EDGE_MARGIN;
    let mut prev_cut = 0;
    for (i, (&len, &cut)) in lens.iter().zip(&cuts).enumerate() {
        cursor += cut - prev_cut;
        prev_cut = cut;
        if i > 0 {
            cursor += min_gap;
        }
        out.push(Segment::new(cursor as f64, (cursor + len) as f64)?);
        cursor += len;
    }
    Ok(out)
}

/// Generates the dataset; identical specs give identical datasets.
pub fn generate_synthetic_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = SeededRng::substream(spec.seed, Stream::Data);
    let motifs: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| unit_rms_direction(spec.feature_dim, &mut rng))
        .collect();

    let mut classes: Vec<usize> = (0..spec.num_classes).collect();
    rng.shuffle(&mut classes);
    let n_train = spec.num_classes - spec.test_classes;
    let mut train_classes = classes[..n_train].to_vec();
    let mut test_classes = classes[n_train..].to_vec();
    train_classes.sort_unstable();
    test_classes.sort_unstable();

    let mut videos = Vec::with_capacity(spec.num_classes * spec.videos_per_class);
    for class_id in 0..spec.num_classes {
        for _ in 0..spec.videos_per_class {
            videos.push(generate_video(spec, class_id, &motifs, &mut rng)?);
        }
    }
    Ok(Dataset {
        videos,
        num_classes: spec.num_classes,
        train_classes,
        test_classes,
    })
}

fn generate_video(
    spec: &DatasetSpec,
    class_id: usize,
    motifs: &[Vec<f64>],
    rng: &mut SeededRng,
) -> Result<SyntheticVideo> {
    let k = spec.distractors_per_video + 1;
    let lens: Vec<usize> = (0..k)
        .map(|_| rng.between(spec.motif_len_min, spec.motif_len_max))
        .collect();
    let segments = place_segments(&lens, spec.video_len, spec.min_gap, rng)?;
    let gt_slot = rng.below(k);
    let seg_classes: Vec<usize> = (0..k)
        .map(|i| {
            if i == gt_slot {
                class_id
            } else {
                let other = rng.below(spec.num_classes - 1);
                if other >= class_id {
                    other + 1
                } else {
                    other
                }
            }
        })
        .collect();

    let mut features = Matrix::from_fn(spec.video_len, spec.feature_dim, |_, _| rng.normal());
    for (seg, &c) in segments.iter().zip(&seg_classes) {
        let range = seg.row_range();
        for t in range {
            let phase = (t as f64 + 0.5 - seg.start()) / seg.len();
            let env = spec.snr * libm::sin(core::f64::consts::PI * phase);
            for (x, m) in features.row_mut(t).iter_mut().zip(&motifs[c]) {
                *x += env * m;
            }
        }
    }

    let actionness = (0..spec.video_len)
        .map(|t| {
            let w = segments
                .iter()
                .map(|s| ramp_weight(t, s))
                .fold(0.0, f64::max);
            let noise = rng.uniform(-spec.actionness_noise, spec.actionness_noise);
            (ACTIONNESS_LOW + (ACTIONNESS_HIGH - ACTIONNESS_LOW) * w + noise).clamp(0.0, 1.0)
        })
        .collect();

    Ok(SyntheticVideo {
        features,
        class_id,
        gt: segments[gt_slot],
        actionness,
    })
}

/// Index of the proposal with the highest tIoU against `gt` (first on ties).
pub fn best_proposal(proposals: &[Segment], gt: &Segment) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in proposals.iter().enumerate() {
        let v = tiou(p, gt);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// A training triplet by reference into the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingTriplet {
    /// The query is this video's ground-truth clip.
    pub query_video: usize,
    pub positive_video: usize,
    /// Proposal of the positive video with the highest tIoU against its ground truth.
    pub positive: Segment,
    pub negative_video: usize,
    /// Best-matching proposal of the negative video's own (different-class) action.
    pub negative: Segment,
}

/// Per-video proposals and best proposal, computed once for sampling.
#[derive(Debug, Clone)]
pub struct ProposalIndex {
    pub proposals: Vec<Vec<Segment>>,
    pub best: Vec<Segment>,
}

impl ProposalIndex {
    pub fn build(dataset: &Dataset, thresholds: &[f64]) -> Result<Self> {
        let mut proposals = Vec::with_capacity(dataset.videos.len());
        let mut best = Vec::with_capacity(dataset.videos.len());
        for (i, v) in dataset.videos.iter().enumerate() {
            let props = v.proposals(thresholds)?;
            let b = best_proposal(&props, &v.gt)
                .ok_or_else(|| Error::InvalidInput(format!("video {i} yields no proposals")))?;
            best.push(props[b]);
            proposals.push(props);
        }
        Ok(Self { proposals, best })
    }
}

struct ClassTable {
    /// videos of each class in the split, keyed by position in `classes`
    members: Vec<Vec<usize>>,
    classes: Vec<usize>,
}

impl ClassTable {
    fn new(dataset: &Dataset, split: Split) -> Result<Self> {
        let classes = dataset.classes(split).to_vec();
        let members: Vec<Vec<usize>> = classes
            .iter()
            .map(|&c| {
                dataset
                    .videos
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.class_id == c)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let usable = members.iter().filter(|m| m.len() >= 2).count();
        if classes.len() < 2 || usable == 0 || members.iter().any(|m| m.is_empty()) {
            return Err(Error::InvalidInput(
                "triplet sampling needs ≥ 2 populated classes and one with ≥ 2 videos".into(),
            ));
        }
        Ok(Self { members, classes })
    }

    fn position(&self, class_id: usize) -> usize {
        self.classes
            .iter()
            .position(|&c| c == class_id)
            .expect("class in split")
    }

    fn negative_for(&self, class_pos: usize, rng: &mut SeededRng) -> usize {
        let mut other = rng.below(self.classes.len() - 1);
        if other >= class_pos {
            other += 1;
        }
        let m = &self.members[other];
        m[rng.below(m.len())]
    }
}

/// Draws one triplet from the training split.
pub fn sample_triplet(
    dataset: &Dataset,
    index: &ProposalIndex,
    rng: &mut SeededRng,
) -> Result<TrainingTriplet> {
    let table = ClassTable::new(dataset, Split::Train)?;
    let candidates: Vec<usize> = (0..table.classes.len())
        .filter(|&c| table.members[c].len() >= 2)
        .collect();
    let class_pos = candidates[rng.below(candidates.len())];
    let members = &table.members[class_pos];
    let qi = rng.below(members.len());
    let mut pi = rng.below(members.len() - 1);
    if pi >= qi {
        pi += 1;
    }
    let (q, p) = (members[qi], members[pi]);
    let n = table.negative_for(class_pos, rng);
    Ok(TrainingTriplet {
        query_video: q,
        positive_video: p,
        positive: index.best[p],
        negative_video: n,
        negative: index.best[n],
    })
}

/// One epoch: every ordered pair of distinct same-class training videos as
/// (query, positive), each with a freshly drawn negative, in shuffled order.
pub fn epoch_triplets(
    dataset: &Dataset,
    index: &ProposalIndex,
    rng: &mut SeededRng,
) -> Result<Vec<TrainingTriplet>> {
    let table = ClassTable::new(dataset, Split::Train)?;
    let mut pairs = Vec::new();
    for members in &table.members {
        for &q in members {
            for &p in members {
                if p != q {
                    pairs.push((q, p));
                }
            }
        }
    }
    rng.shuffle(&mut pairs);
    Ok(pairs
        .into_iter()
        .map(|(q, p)| {
            let n = table.negative_for(table.position(dataset.videos[q].class_id), rng);
            TrainingTriplet {
                query_video: q,
                positive_video: p,
                positive: index.best[p],
                negative_video: n,
                negative: index.best[n],
            }
        })
        .collect())
}
