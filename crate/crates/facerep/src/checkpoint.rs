//! Binary checkpoints. All integers and reals are little-endian.
//!
//! ```text
//! magic        8 bytes  "FACEREP\0"
//! version      u32      1
//! spec         u64 length + UTF-8 network spec text
//! mode         u8       0 infer, 1 train
//! seed         u64      network seed
//! layers       u32      must equal the spec's layer count
//! per layer:   u64 dropout/initialization seed,
//!              u8 has-weights, then u64 count + count f64 weights
//! trainer      u8       0 absent, 1 present; if present:
//!              u64 epochs done, u64 length + schedule text,
//!              per layer u8 has-velocity, then u64 count + count f64
//! ```
//!
//! Weights are in row-major order of their implied shapes. Gradients are not
//! stored; loading yields zero gradients. Trailing bytes are an error.

use std::path::Path;

use facerep_core::network::{LayerState, Network};
use facerep_core::trainer::{TrainState, TrainingSchedule};
use facerep_core::{Mode, NetworkSpec, Tensor};

use crate::formats::{format_schedule, format_spec, parse_schedule, parse_spec};

pub const MAGIC: &[u8; 8] = b"FACEREP\0";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("layer {layer}: stored {actual} values, spec implies {expected}")]
    ShapeInconsistency { layer: String, expected: usize, actual: usize },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Optimizer state stored alongside the network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerSection {
    pub epochs_done: usize,
    pub schedule: TrainingSchedule,
    pub velocity: Vec<Option<Tensor>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub trainer: Option<TrainerSection>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, schedule: &TrainingSchedule) -> Self {
        Self {
            network: state.net.clone(),
            trainer: Some(TrainerSection {
                epochs_done: state.epochs_done,
                schedule: schedule.clone(),
                velocity: state.velocity.clone(),
            }),
        }
    }

    /// The training state, if the checkpoint carries one.
    pub fn into_state(self) -> Option<(TrainState, TrainingSchedule)> {
        let t = self.trainer?;
        Some((
            TrainState {
                net: self.network,
                velocity: t.velocity,
                epochs_done: t.epochs_done,
            },
            t.schedule,
        ))
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn text(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tensor(&mut self, t: Option<&Tensor>) {
        match t {
            None => self.u8(0),
            Some(t) => {
                self.u8(1);
                self.u64(t.len() as u64);
                for x in t.data() {
                    self.0.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.0.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize, CheckpointError> {
        let n = self.u64()?;
        usize::try_from(n).map_err(|_| CheckpointError::Truncated)
    }
    fn text(&mut self) -> Result<String, CheckpointError> {
        let n = self.len()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CheckpointError::Malformed("text is not UTF-8".into()))
    }
    fn flag(&mut self) -> Result<bool, CheckpointError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(CheckpointError::Malformed(format!("flag byte {b}"))),
        }
    }
    /// Reads an optional tensor whose presence and shape the spec dictates.
    fn tensor(&mut self, layer: &str, shape: Option<&[usize]>) -> Result<Option<Tensor>, CheckpointError> {
        let present = self.flag()?;
        match (present, shape) {
            (false, None) => Ok(None),
            (true, Some(shape)) => {
                let expected: usize = shape.iter().product();
                let actual = self.len()?;
                if actual != expected {
                    return Err(CheckpointError::ShapeInconsistency {
                        layer: layer.to_string(),
                        expected,
                        actual,
                    });
                }
                let bytes = self.take(actual.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
                let data = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                Ok(Some(Tensor::from_vec(shape, data).expect("count matches shape")))
            }
            (present, _) => Err(CheckpointError::ShapeInconsistency {
                layer: layer.to_string(),
                expected: shape.map_or(0, |s| s.iter().product()),
                actual: usize::from(present),
            }),
        }
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let net = &ck.network;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.text(&format_spec(&net.spec));
    w.u8(match net.mode {
        Mode::Infer => 0,
        Mode::Train => 1,
    });
    w.u64(net.seed);
    w.u32(net.states.len() as u32);
    for s in &net.states {
        w.u64(s.seed);
        w.tensor(s.weights.as_ref());
    }
    match &ck.trainer {
        None => w.u8(0),
        Some(t) => {
            w.u8(1);
            w.u64(t.epochs_done as u64);
            w.text(&format_schedule(&t.schedule));
            for v in &t.velocity {
                w.tensor(v.as_ref());
            }
        }
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) {
            CheckpointError::Truncated
        } else {
            CheckpointError::BadMagic
        });
    }
    let mut r = Reader(bytes);
    if r.take(MAGIC.len())? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let spec: NetworkSpec =
        parse_spec(&r.text()?).map_err(|e| CheckpointError::Malformed(format!("network spec: {e}")))?;
    let mode = match r.u8()? {
        0 => Mode::Infer,
        1 => Mode::Train,
        b => return Err(CheckpointError::Malformed(format!("mode byte {b}"))),
    };
    let seed = r.u64()?;
    let count = r.u32()? as usize;
    if count != spec.layers.len() {
        return Err(CheckpointError::Malformed(format!(
            "{count} layer records for {} layers",
            spec.layers.len()
        )));
    }
    let shapes: Vec<Option<Vec<usize>>> = spec.layers.iter().map(|l| l.kind.param_shape()).collect();
    let mut states = Vec::with_capacity(count);
    for (l, shape) in spec.layers.iter().zip(&shapes) {
        let layer_seed = r.u64()?;
        let weights = r.tensor(&l.name, shape.as_deref())?;
        states.push(LayerState {
            grad: weights.as_ref().map(|w| Tensor::zeros(w.shape()).expect("valid shape")),
            weights,
            seed: layer_seed,
        });
    }
    let trainer = if r.flag()? {
        let epochs_done = r.len()?;
        let schedule =
            parse_schedule(&r.text()?).map_err(|e| CheckpointError::Malformed(format!("schedule: {e}")))?;
        let velocity = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, shape)| r.tensor(&l.name, shape.as_deref()))
            .collect::<Result<_, _>>()?;
        Some(TrainerSection {
            epochs_done,
            schedule,
            velocity,
        })
    } else {
        None
    };
    if !r.0.is_empty() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", r.0.len())));
    }
    Ok(Checkpoint {
        network: Network {
            spec,
            states,
            mode,
            seed,
        },
        trainer,
    })
}

pub fn save(ck: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(ck))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}

pub fn save_network(net: &Network, path: &Path) -> Result<(), CheckpointError> {
    save(
        &Checkpoint {
            network: net.clone(),
            trainer: None,
        },
        path,
    )
}

pub fn load_network(path: &Path) -> Result<Network, CheckpointError> {
    Ok(load(path)?.network)
}
