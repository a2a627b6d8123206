//! Subcommand bodies. Each writes its report to `out` so tests can capture it.

use std::io::Write;
use std::path::Path;

use simgcn_core::data::{generate_synthetic_dataset, Dataset};
use simgcn_core::encoder::resample;
use simgcn_core::model::score_pair;
use simgcn_core::pipeline::{evaluate, retrieve, train, EvalReport, Retrieval};

use crate::checkpoint::{self, Checkpoint};
use crate::config::Config;
use crate::dataset_io;
use crate::error::AppError;

fn emit(out: &mut dyn Write, text: &str) -> Result<(), AppError> {
    out.write_all(text.as_bytes())
        .map_err(|e| AppError::io(Path::new("<stdout>"), e))
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config, AppError> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The dataset at `data`, or a fresh one generated from `cfg`.
pub fn dataset(cfg: &Config, data: Option<&Path>) -> Result<Dataset, AppError> {
    match data {
        Some(p) => dataset_io::read_dataset(p),
        None => Ok(generate_synthetic_dataset(&cfg.dataset_spec())?),
    }
}

pub fn gen_data(cfg: &Config, out_path: &Path, out: &mut dyn Write) -> Result<(), AppError> {
    let d = generate_synthetic_dataset(&cfg.dataset_spec())?;
    dataset_io::write_dataset(out_path, &d)?;
    emit(
        out,
        &format!(
            "wrote {} videos ({} x {}) to {}\n",
            d.videos.len(),
            d.video_len(),
            d.feature_dim(),
            out_path.display()
        ),
    )
}

pub fn train_cmd(
    cfg: &Config,
    data: &Dataset,
    ckpt: &Path,
    out: &mut dyn Write,
) -> Result<Checkpoint, AppError> {
    let run = cfg.run_config(data.feature_dim());
    emit(out, "epoch,triplet,regression,sparsity\n")?;
    let mut lines = Vec::new();
    let outcome = train(data, &run, |l| {
        lines.push(format!(
            "{},{},{},{}\n",
            l.epoch, l.losses.triplet, l.losses.regression, l.losses.sparsity
        ))
    })?;
    for l in lines {
        emit(out, &l)?;
    }
    let ck = Checkpoint {
        config: run,
        model: outcome.model,
        optimizers: outcome.optimizers,
    };
    checkpoint::save(ckpt, &ck)?;
    Ok(ck)
}

pub fn format_report(r: &EvalReport) -> String {
    let mut s = String::from("threshold,accuracy,chance_accuracy,mean_tiou\n");
    for ((t, a), c) in r.thresholds.iter().zip(&r.accuracy).zip(&r.chance) {
        s.push_str(&format!("{t},{a},{c},{}\n", r.mean_tiou));
    }
    s
}

pub fn eval_cmd(
    ck: &Checkpoint,
    data: &Dataset,
    out: &mut dyn Write,
) -> Result<EvalReport, AppError> {
    let report = evaluate(&ck.model, data, &ck.config)?;
    emit(out, &format_report(&report))?;
    Ok(report)
}

fn video_pair(data: &Dataset, query: usize, reference: usize) -> Result<(), AppError> {
    for (what, i) in [("query", query), ("reference", reference)] {
        if i >= data.videos.len() {
            return Err(AppError::Data(format!(
                "{what} index {i} out of range for {} videos",
                data.videos.len()
            )));
        }
    }
    Ok(())
}

fn retrieve_in(
    ck: &Checkpoint,
    data: &Dataset,
    query: usize,
    reference: usize,
) -> Result<Retrieval, AppError> {
    video_pair(data, query, reference)?;
    let q = &data.videos[query];
    let r = &data.videos[reference];
    let props = r.proposals(&ck.config.thresholds)?;
    Ok(retrieve(
        &ck.model,
        &q.clip(&q.gt)?,
        &r.features,
        &props,
        ck.config.hyper.timesteps,
    )?)
}

/// Scores every proposal of `reference` for the ground-truth clip of `query`.
pub fn retrieve_cmd(
    ck: &Checkpoint,
    data: &Dataset,
    query: usize,
    reference: usize,
    out: &mut dyn Write,
) -> Result<Retrieval, AppError> {
    let got = retrieve_in(ck, data, query, reference)?;
    let props = data.videos[reference].proposals(&ck.config.thresholds)?;
    let mut s = String::from("proposal,start,end,score\n");
    for (i, (p, sc)) in props.iter().zip(&got.scores).enumerate() {
        s.push_str(&format!("{i},{},{},{sc}\n", p.start(), p.end()));
    }
    s.push_str(&format!(
        "# selected {} refined {} {} ground_truth {} {}\n",
        got.index,
        got.refined.start(),
        got.refined.end(),
        data.videos[reference].gt.start(),
        data.videos[reference].gt.end()
    ));
    emit(out, &s)?;
    Ok(got)
}

/// Writes the adjacency of (query clip, proposal) as `<stem>.txt` and
/// `<stem>.png`. Without `proposal`, the retrieved one is used.
pub fn dump_adj_cmd(
    ck: &Checkpoint,
    data: &Dataset,
    query: usize,
    reference: usize,
    proposal: Option<usize>,
    stem: &Path,
    out: &mut dyn Write,
) -> Result<(), AppError> {
    video_pair(data, query, reference)?;
    let props = data.videos[reference].proposals(&ck.config.thresholds)?;
    let idx = match proposal {
        Some(i) if i < props.len() => i,
        Some(i) => {
            return Err(AppError::Data(format!(
                "proposal {i} out of range for {} proposals",
                props.len()
            )))
        }
        None => retrieve_in(ck, data, query, reference)?.index,
    };
    let t = ck.config.hyper.timesteps;
    let q = &data.videos[query];
    let r = &data.videos[reference];
    let pair = score_pair(
        &ck.model,
        &resample(&q.clip(&q.gt)?, t)?,
        &resample(&r.clip(&props[idx])?, t)?,
    )?;
    crate::adjacency_dump::write(stem, pair.adjacency.matrix())?;
    emit(
        out,
        &format!(
            "wrote {n}x{n} adjacency for proposal {idx} to {}.{{txt,png}}\n",
            stem.display(),
            n = pair.adjacency.nodes()
        ),
    )
}
