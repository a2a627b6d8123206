//! Dataset binary and its class-split manifest.
//!
//! Binary layout, all little-endian, no padding:
//!
//! ```text
//! u32 version (= 1) | u32 num_videos | u32 T_video | u32 d_in
//! per video:
//!   u32 class_id | f64 gt_start | f64 gt_end
//!   f64 × T_video            actionness
//!   f64 × T_video × d_in     features, row-major
//! ```
//!
//! The manifest is plain text next to the binary (same stem, `.manifest`):
//!
//! ```text
//! num_classes 8
//! train 0 1 2 3 4 5
//! test 6 7
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use simgcn_core::data::{Dataset, SyntheticVideo};
use simgcn_core::linalg::Matrix;
use simgcn_core::segment::Segment;

use crate::error::AppError;
use crate::wire::{Reader, Writer};

pub const DATASET_VERSION: usize = 1;

pub fn manifest_path(binary: &Path) -> PathBuf {
    binary.with_extension("manifest")
}

pub fn encode_dataset(d: &Dataset) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(DATASET_VERSION);
    w.u32(d.videos.len());
    w.u32(d.video_len());
    w.u32(d.feature_dim());
    for v in &d.videos {
        w.u32(v.class_id);
        w.f64(v.gt.start());
        w.f64(v.gt.end());
        w.f64s(&v.actionness);
        w.f64s(v.features.as_slice());
    }
    w.buf
}

pub fn encode_manifest(d: &Dataset) -> String {
    let join = |cs: &[usize]| cs.iter().map(|c| format!(" {c}")).collect::<String>();
    let mut s = String::new();
    writeln!(s, "num_classes {}", d.num_classes).unwrap();
    writeln!(s, "train{}", join(&d.train_classes)).unwrap();
    writeln!(s, "test{}", join(&d.test_classes)).unwrap();
    s
}

struct Manifest {
    num_classes: usize,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn parse_manifest(text: &str) -> Result<Manifest, AppError> {
    let bad = |m: String| AppError::Data(format!("manifest: {m}"));
    let (mut num, mut train, mut test) = (None, None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        let vals = parts
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|e| bad(format!("{line:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        match key {
            "num_classes" if vals.len() == 1 => num = Some(vals[0]),
            "train" => train = Some(vals),
            "test" => test = Some(vals),
            _ => return Err(bad(format!("unexpected line {line:?}"))),
        }
    }
    Ok(Manifest {
        num_classes: num.ok_or_else(|| bad("missing num_classes".into()))?,
        train: train.ok_or_else(|| bad("missing train line".into()))?,
        test: test.ok_or_else(|| bad("missing test line".into()))?,
    })
}

pub fn decode_dataset(bytes: &[u8], manifest: &str) -> Result<Dataset, AppError> {
    let m = parse_manifest(manifest)?;
    let mut r = Reader::new(bytes);
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(AppError::Data(format!(
            "unsupported dataset version {version}"
        )));
    }
    let n = r.u32("num_videos")?;
    let len = r.u32("T_video")?;
    let dim = r.u32("d_in")?;
    if n == 0 || len < 2 || dim == 0 {
        return Err(AppError::Data(format!(
            "degenerate header: {n} videos, T_video {len}, d_in {dim}"
        )));
    }
    let record = 4 + 16 + 8 * len * (1 + dim);
    if r.remaining() != n * record {
        return Err(AppError::Data(format!(
            "expected {} bytes of video records, found {}",
            n * record,
            r.remaining()
        )));
    }
    let mut videos = Vec::with_capacity(n);
    for i in 0..n {
        let class_id = r.u32("class_id")?;
        let (s, e) = (r.f64("gt_start")?, r.f64("gt_end")?);
        let gt = Segment::new(s, e).map_err(|err| AppError::Data(format!("video {i}: {err}")))?;
        if gt.end() > len as f64 {
            return Err(AppError::Data(format!(
                "video {i}: ground truth ends past {len}"
            )));
        }
        let actionness = r.f64s(len, "actionness")?;
        if actionness.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(AppError::Data(format!(
                "video {i}: actionness outside [0, 1]"
            )));
        }
        let features = Matrix::from_vec(len, dim, r.f64s(len * dim, "features")?)
            .map_err(|err| AppError::Data(format!("video {i}: {err}")))?;
        videos.push(SyntheticVideo {
            features,
            class_id,
            gt,
            actionness,
        });
    }
    r.finish("dataset")?;
    let d = Dataset {
        videos,
        num_classes: m.num_classes,
        train_classes: m.train,
        test_classes: m.test,
    };
    d.validate().map_err(|e| AppError::Data(e.to_string()))?;
    Ok(d)
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<(), AppError> {
    std::fs::write(path, encode_dataset(d)).map_err(|e| AppError::io(path, e))?;
    let mp = manifest_path(path);
    std::fs::write(&mp, encode_manifest(d)).map_err(|e| AppError::io(&mp, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset, AppError> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    let mp = manifest_path(path);
    let manifest = std::fs::read_to_string(&mp).map_err(|e| AppError::io(&mp, e))?;
    decode_dataset(&bytes, &manifest)
}
