//! The training driver: an output directory holding `epoch-NNNN.ckpt`
//! checkpoints (including the untrained `epoch-0000.ckpt`) and an
//! append-only tab-separated log `train.log`, one row per SGD step.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use facerep_core::faceproc::{mirror, Manifest};
use facerep_core::trainer::{train_epoch, Dataset, LogRecord, TrainState, TrainingSchedule};
use facerep_core::{BatchExecutor, NetworkSpec, Tensor};

use crate::checkpoint::{self, Checkpoint};
use crate::error::{Error, Result};
use crate::formats::read_gray;

pub const LOG_FILE: &str = "train.log";
pub const LOG_HEADER: &str = "epoch\tstep\tsoftmax\tcontrastive\tcombined\tlr\talpha";

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch-{epoch:04}.ckpt"))
}

/// Highest-numbered checkpoint in `dir`.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<(usize, PathBuf)>> {
    if !dir.exists() {
        return Ok(None);
    }
    let mut best = None;
    for entry in fs::read_dir(dir).map_err(Error::io(dir))? {
        let entry = entry.map_err(Error::io(dir))?;
        let name = entry.file_name();
        let Some(epoch) = name
            .to_str()
            .and_then(|n| n.strip_prefix("epoch-"))
            .and_then(|n| n.strip_suffix(".ckpt"))
            .and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        if best.as_ref().is_none_or(|(e, _)| epoch > *e) {
            best = Some((epoch, entry.path()));
        }
    }
    Ok(best)
}

pub fn format_log_record(r: &LogRecord) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.epoch, r.step, r.softmax, r.contrastive, r.combined, r.lr, r.alpha
    )
}

pub fn parse_log(text: &str) -> std::result::Result<Vec<LogRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err("missing log header".into());
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            let bad = || format!("log line {}: malformed", i + 2);
            if f.len() != 7 {
                return Err(bad());
            }
            let r = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            Ok(LogRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                step: f[1].parse().map_err(|_| bad())?,
                softmax: r(2)?,
                contrastive: r(3)?,
                combined: r(4)?,
                lr: r(5)?,
                alpha: r(6)?,
            })
        })
        .collect()
}

/// Mean softmax cost of each epoch in `log`, in epoch order (NaN for an
/// epoch without records).
pub fn epoch_mean_softmax(log: &[LogRecord]) -> Vec<f64> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for r in log {
        if out.len() <= r.epoch {
            out.resize(r.epoch + 1, (0.0, 0));
        }
        out[r.epoch].0 += r.softmax;
        out[r.epoch].1 += 1;
    }
    out.into_iter().map(|(s, n)| s / n as f64).collect()
}

/// Reads every crop of an aligned manifest (paths relative to `root`),
/// flipping mirrored records, with the manifest's dense labels.
pub fn load_crops(manifest: &Manifest, root: &Path) -> Result<(Vec<Tensor>, Vec<usize>)> {
    let images = manifest
        .records()
        .iter()
        .map(|r| {
            let path = root.join(&r.path);
            let img = read_gray(&path).map_err(|source| Error::Image { path, source })?;
            let img = if r.mirrored { mirror(&img) } else { img };
            img.to_tensor().map_err(|e| Error::Data(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((images, manifest.labels()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Every log record of the run, including those kept from before a resume.
    pub log: Vec<LogRecord>,
    pub resumed_from: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriverOptions {
    pub resume: bool,
    /// Write a checkpoint after every this many epochs (the last epoch is
    /// always written).
    pub checkpoint_every: usize,
}

impl Default for DriverOptions {
    fn default() -> Self {
        Self {
            resume: false,
            checkpoint_every: 1,
        }
    }
}

fn save_state(dir: &Path, state: &TrainState, schedule: &TrainingSchedule) -> Result<()> {
    let path = checkpoint_path(dir, state.epochs_done);
    checkpoint::save(&Checkpoint::from_state(state, schedule), &path)
        .map_err(|source| Error::Checkpoint { path, source })
}

/// Trains for `schedule.epochs` epochs in total, writing checkpoints and the
/// log into `out_dir`. With `resume`, picks up from the latest checkpoint,
/// drops log rows of epochs it did not cover, and continues; the result is
/// identical to an uninterrupted run.
pub fn train_run<E: BatchExecutor>(
    images: &[Tensor],
    labels: &[usize],
    spec: &NetworkSpec,
    schedule: &TrainingSchedule,
    out_dir: &Path,
    options: DriverOptions,
    exec: &E,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    if let Some(bad) = images.iter().find(|t| t.shape() != spec.input_shape) {
        return Err(Error::Data(format!(
            "image shape {:?} does not match network input {:?}",
            bad.shape(),
            spec.input_shape
        )));
    }
    fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let log_path = out_dir.join(LOG_FILE);
    let latest = latest_checkpoint(out_dir)?;

    let (mut state, mut log, resumed_from) = match (options.resume, latest) {
        (true, Some((epoch, path))) => {
            let ck = checkpoint::load(&path).map_err(|source| Error::Checkpoint {
                path: path.clone(),
                source,
            })?;
            let (state, saved) = ck
                .into_state()
                .ok_or_else(|| Error::Data(format!("{} holds no trainer state", path.display())))?;
            if state.net.spec != *spec {
                return Err(Error::Data(format!("{}: network spec differs from this run", path.display())));
            }
            if saved != *schedule {
                return Err(Error::Data(format!("{}: schedule differs from this run", path.display())));
            }
            let text = fs::read_to_string(&log_path).map_err(Error::io(&log_path))?;
            let mut log = parse_log(&text).map_err(|e| Error::Data(format!("{}: {e}", log_path.display())))?;
            log.retain(|r| r.epoch < state.epochs_done);
            log::info!("resuming from {} (epoch {epoch})", path.display());
            (state, log, Some(epoch))
        }
        (false, Some((_, path))) => {
            return Err(Error::Data(format!(
                "{} already holds checkpoints ({}); resume or use another directory",
                out_dir.display(),
                path.display()
            )))
        }
        (_, None) => {
            let state = TrainState::new(spec, schedule)?;
            save_state(out_dir, &state, schedule)?;
            (state, Vec::new(), None)
        }
    };

    let mut text = String::from(LOG_HEADER);
    text.push('\n');
    for r in &log {
        text.push_str(&format_log_record(r));
        text.push('\n');
    }
    fs::write(&log_path, text).map_err(Error::io(&log_path))?;
    let mut file = fs::OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(Error::io(&log_path))?;

    let data = Dataset { images, labels };
    let every = options.checkpoint_every.max(1);
    while state.epochs_done < schedule.epochs {
        let records = train_epoch(&mut state, data, schedule, exec)?;
        let mut rows = String::new();
        for r in &records {
            rows.push_str(&format_log_record(r));
            rows.push('\n');
        }
        file.write_all(rows.as_bytes()).map_err(Error::io(&log_path))?;
        let n = records.len().max(1) as f64;
        log::info!(
            "epoch {}: softmax {:.4} contrastive {:.4}",
            state.epochs_done,
            records.iter().map(|r| r.softmax).sum::<f64>() / n,
            records.iter().map(|r| r.contrastive).sum::<f64>() / n
        );
        log.extend(records);
        if state.epochs_done % every == 0 || state.epochs_done == schedule.epochs {
            save_state(out_dir, &state, schedule)?;
        }
    }
    Ok(TrainOutcome {
        state,
        log,
        resumed_from,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_round_trip() {
        let r = LogRecord {
            epoch: 1,
            step: 5,
            softmax: 1.25,
            contrastive: 0.1,
            combined: 1.3,
            lr: 0.01,
            alpha: 3.2e-4,
        };
        let text = format!("{LOG_HEADER}\n{}\n", format_log_record(&r));
        assert_eq!(parse_log(&text).unwrap(), vec![r]);
        assert!(parse_log("1\t2\n").is_err());
        let e0 = LogRecord { epoch: 0, ..r };
        assert_eq!(epoch_mean_softmax(&[e0, LogRecord { softmax: 0.75, ..e0 }]), vec![1.0]);
    }

    #[test]
    fn checkpoint_names() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(latest_checkpoint(dir.path()).unwrap(), None);
        for e in [0, 2, 10] {
            fs::write(checkpoint_path(dir.path(), e), b"").unwrap();
        }
        fs::write(dir.path().join("epoch-x.ckpt"), b"").unwrap();
        assert_eq!(latest_checkpoint(dir.path()).unwrap().unwrap().0, 10);
        assert!(checkpoint_path(dir.path(), 3).ends_with("epoch-0003.ckpt"));
    }
}
