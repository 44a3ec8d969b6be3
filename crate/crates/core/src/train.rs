//! Behaviour cloning: windowing, validation split, online augmentation,
//! Adam with per-epoch exponential LR decay, best-on-validation selection.

use crate::expert::{augment_image, AugmentConfig, Trajectory};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::model::{PolicyModel, SeqBatch, OUTPUTS};
use crate::nn::NnError;
use crate::scene::TargetColor;
use crate::simcore::ControlCommand;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad training config: {0}")]
    Config(String),
    #[error("need at least {need} trajectories, got {got}")]
    TooFewTrajectories { need: usize, got: usize },
    #[error("no training windows (trajectories shorter than the sequence length?)")]
    NoWindows,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seq_len: usize,
    pub shift: usize,
    pub stride: usize,
    pub batch_size: usize,
    pub val_split: f64,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub clip_norm: f64,
    /// Stop after this many epochs without a validation improvement; 0 disables.
    pub patience: usize,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Single-frame warm-up epochs run before sequence training.
    pub frame_epochs: usize,
    pub frame_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seq_len: 64,
            shift: 16,
            stride: 1,
            batch_size: 32,
            val_split: 0.05,
            epochs: 300,
            lr: 4.41e-4,
            lr_decay: 0.87,
            clip_norm: 5.0,
            patience: 0,
            augment: AugmentConfig::default(),
            seed: 0,
            frame_epochs: 0,
            frame_batch_size: 32,
        }
    }
}

impl TrainConfig {
    /// Schedule used at 36×64: short single-frame warm-up, then sequence
    /// training with small batches.
    pub fn desk() -> Self {
        Self {
            batch_size: 8,
            epochs: 40,
            lr: 1e-3,
            lr_decay: 0.95,
            frame_epochs: 30,
            frame_batch_size: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let pos = [
            ("seq_len", self.seq_len),
            ("shift", self.shift),
            ("stride", self.stride),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("frame_batch_size", self.frame_batch_size),
        ];
        if let Some((name, _)) = pos.iter().find(|(_, v)| *v == 0) {
            return Err(TrainError::Config(format!("{name} must be positive")));
        }
        if !(self.val_split > 0.0 && self.val_split < 1.0) {
            return Err(TrainError::Config(format!("val_split {} not in (0,1)", self.val_split)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(TrainError::Config("lr must be positive and lr_decay in (0,1]".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(TrainError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }
}

/// Sample indices of one training window within its trajectory, with the δt
/// each sample carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub traj: usize,
    pub indices: Vec<usize>,
    pub dts: Vec<f64>,
}

/// Windows start at 0, shift, 2·shift, … With stride s the window takes every
/// s-th sample and each kept sample's δt is the sum over the frames it skips.
pub fn make_windows(traj_index: usize, traj: &Trajectory, len: usize, shift: usize, stride: usize) -> Vec<Window> {
    assert!(len > 0 && shift > 0 && stride > 0);
    let span = (len - 1) * stride + 1;
    if traj.len() < span {
        log::warn!("trajectory {} has {} samples, shorter than a window ({span})", traj.meta.id, traj.len());
        return Vec::new();
    }
    (0..=traj.len() - span)
        .step_by(shift)
        .map(|start| {
            let indices: Vec<usize> = (0..len).map(|k| start + k * stride).collect();
            let dts = indices
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    if k == 0 {
                        traj.samples[i].dt
                    } else {
                        traj.samples[indices[k - 1] + 1..=i].iter().map(|s| s.dt).sum()
                    }
                })
                .collect();
            Window {
                traj: traj_index,
                indices,
                dts,
            }
        })
        .collect()
}

/// Trajectory-level split with per-colour balance. Returns (train, val)
/// index lists, each sorted.
pub fn split_validation(colors: &[TargetColor], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(TrainError::Config(format!("validation fraction {fraction} not in (0,1)")));
    }
    let n = colors.len();
    if n < 2 {
        return Err(TrainError::TooFewTrajectories { need: 2, got: n });
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let reds: Vec<usize> = (0..n).filter(|&i| colors[i] == TargetColor::Red).collect();
    let blues: Vec<usize> = (0..n).filter(|&i| colors[i] == TargetColor::Blue).collect();
    let mut red_val = ((n_val * reds.len()) as f64 / n as f64).round() as usize;
    red_val = red_val.min(reds.len()).max(n_val.saturating_sub(blues.len()));
    let blue_val = n_val - red_val;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val = Vec::with_capacity(n_val);
    for (mut group, k) in [(reds, red_val), (blues, blue_val)] {
        group.shuffle(&mut rng);
        val.extend_from_slice(&group[..k]);
    }
    val.sort_unstable();
    let train = (0..n).filter(|i| val.binary_search(i).is_err()).collect();
    Ok((train, val))
}

/// Label in network units: each component divided by its output scale.
pub fn normalize_label(cmd: &ControlCommand, s: &[f64; OUTPUTS]) -> [f64; OUTPUTS] {
    let a = cmd.to_array();
    [a[0] / s[0], a[1] / s[1], a[2] / s[2], a[3] / s[3]]
}

pub fn denormalize_output(y: &[f64; OUTPUTS], s: &[f64; OUTPUTS]) -> ControlCommand {
    ControlCommand::from_array([y[0] * s[0], y[1] * s[1], y[2] * s[2], y[3] * s[3]])
}

/// Assembles windows into a step-major batch. With `augment`, one set of
/// photometric jitter parameters is drawn per window.
pub fn assemble_batch(
    trajs: &[Trajectory],
    windows: &[&Window],
    scale: &[f64; OUTPUTS],
    augment: Option<(&AugmentConfig, &mut ChaCha8Rng)>,
) -> SeqBatch<f32> {
    let rows = windows.len();
    let steps = windows.first().map_or(0, |w| w.indices.len());
    let mut frames = vec![Vec::new(); rows * steps];
    let mut dts = vec![0.0f32; rows * steps];
    let mut labels = vec![0.0f32; rows * steps * OUTPUTS];
    let mut aug = augment;
    for (r, w) in windows.iter().enumerate() {
        assert_eq!(w.indices.len(), steps, "windows in a batch share a length");
        let seed: Option<u64> = aug.as_mut().map(|(_, rng)| rand::Rng::random(&mut **rng));
        for (t, &i) in w.indices.iter().enumerate() {
            let s = &trajs[w.traj].samples[i];
            let n = t * rows + r;
            let img = s.image.unpack();
            frames[n] = match (&aug, seed) {
                (Some((cfg, _)), Some(seed)) => {
                    // same jitter across the window
                    let mut wr = ChaCha8Rng::seed_from_u64(seed);
                    augment_image(&img, cfg, &mut wr).data
                }
                _ => img.data,
            };
            dts[n] = w.dts[t] as f32;
            let l = normalize_label(&s.label, scale);
            for k in 0..OUTPUTS {
                labels[n * OUTPUTS + k] = l[k] as f32;
            }
        }
    }
    SeqBatch {
        rows,
        steps,
        frames,
        dts,
        labels,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Window length of the phase this epoch belongs to.
    pub seq_len: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub wall_ms: u64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub train_windows: usize,
    pub val_windows: usize,
    pub batches_per_epoch: usize,
}

/// Mean validation MSE over the given windows (no augmentation).
pub fn evaluate_mse(
    model: &PolicyModel<f32>,
    trajs: &[Trajectory],
    windows: &[Window],
    batch_size: usize,
) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    let refs: Vec<&Window> = windows.iter().collect();
    for chunk in refs.chunks(batch_size) {
        let b = assemble_batch(trajs, chunk, &model.cfg.output_scale, None);
        sum += model.loss(&b)? as f64 * b.len() as f64;
        count += b.len();
    }
    Ok(if count == 0 { f64::NAN } else { sum / count as f64 })
}

/// Trains `model` in place; on return it holds the parameters of the epoch
/// with the lowest validation loss. `on_epoch` sees every log record.
///
/// With `frame_epochs > 0` a single-frame phase runs first (windows of length
/// one, state reset every sample); its best parameters seed the sequence
/// phase, which gets a fresh optimizer and LR schedule. The report covers the
/// sequence phase.
pub fn fit(
    model: &mut PolicyModel<f32>,
    trajs: &[Trajectory],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitReport, TrainError> {
    cfg.validate()?;
    if trajs.is_empty() {
        return Err(TrainError::TooFewTrajectories { need: 1, got: 0 });
    }
    let (h, w) = model.input_hw();
    if let Some(t) = trajs.iter().find(|t| t.samples.iter().any(|s| s.image.height != h || s.image.width != w)) {
        return Err(TrainError::Config(format!(
            "trajectory {} frames do not match the model input {w}x{h}",
            t.meta.id
        )));
    }
    let (train_idx, val_idx) = if trajs.len() == 1 {
        log::warn!("single trajectory: validating on the training data");
        (vec![0], vec![0])
    } else {
        let colors: Vec<TargetColor> = trajs.iter().map(|t| t.meta.color).collect();
        split_validation(&colors, cfg.val_split, cfg.seed)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7EA1_17A1);
    if cfg.frame_epochs > 0 {
        let phase = Phase {
            seq_len: 1,
            shift: 1,
            stride: 1,
            batch_size: cfg.frame_batch_size,
            epochs: cfg.frame_epochs,
        };
        run_phase(model, trajs, cfg, &phase, &train_idx, &val_idx, &mut rng, &mut on_epoch)?;
    }
    let phase = Phase {
        seq_len: cfg.seq_len,
        shift: cfg.shift,
        stride: cfg.stride,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
    };
    run_phase(model, trajs, cfg, &phase, &train_idx, &val_idx, &mut rng, &mut on_epoch)
}

struct Phase {
    seq_len: usize,
    shift: usize,
    stride: usize,
    batch_size: usize,
    epochs: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    model: &mut PolicyModel<f32>,
    trajs: &[Trajectory],
    cfg: &TrainConfig,
    phase: &Phase,
    train_idx: &[usize],
    val_idx: &[usize],
    rng: &mut ChaCha8Rng,
    on_epoch: &mut impl FnMut(&EpochLog),
) -> Result<FitReport, TrainError> {
    let windows_of = |idx: &[usize]| -> Vec<Window> {
        idx.iter()
            .flat_map(|&i| make_windows(i, &trajs[i], phase.seq_len, phase.shift, phase.stride))
            .collect()
    };
    let train_w = windows_of(train_idx);
    let val_w = windows_of(val_idx);
    if train_w.is_empty() || val_w.is_empty() {
        return Err(TrainError::NoWindows);
    }
    let batches_per_epoch = train_w.len().div_ceil(phase.batch_size);
    let mut opt = Adam::<f32>::new(
        AdamConfig {
            lr: cfg.lr,
            clip_norm: Some(cfg.clip_norm),
            ..Default::default()
        },
        model.param_count(),
    );
    let mut grad = vec![0.0f32; model.param_count()];
    let mut best = (usize::MAX, f64::INFINITY, model.params.clone());
    let mut logs = Vec::with_capacity(phase.epochs);
    let mut order: Vec<usize> = (0..train_w.len()).collect();
    for epoch in 0..phase.epochs {
        let t0 = Instant::now();
        let lr = cfg.lr_at(epoch);
        opt.cfg.lr = lr;
        order.shuffle(rng);
        let mut sum = 0.0;
        let mut frames = 0usize;
        for (bi, chunk) in order.chunks(phase.batch_size).enumerate() {
            let ws: Vec<&Window> = chunk.iter().map(|&i| &train_w[i]).collect();
            let batch = assemble_batch(trajs, &ws, &model.cfg.output_scale, Some((&cfg.augment, &mut *rng)));
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = match model.loss_and_grad(&batch, &mut grad) {
                Ok(l) => l as f64,
                Err(NnError::NonFinite(_)) => return Err(TrainError::NonFinite { epoch, batch: bi }),
                Err(e) => return Err(e.into()),
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite { epoch, batch: bi });
            }
            opt.step(&mut model.params, &grad);
            sum += loss * batch.len() as f64;
            frames += batch.len();
        }
        let train_mse = sum / frames as f64;
        let val_mse = evaluate_mse(model, trajs, &val_w, phase.batch_size)?;
        if val_mse < best.1 {
            best = (epoch, val_mse, model.params.clone());
        }
        let rec = EpochLog {
            epoch,
            seq_len: phase.seq_len,
            lr,
            train_mse,
            val_mse,
            wall_ms: t0.elapsed().as_millis() as u64,
            best_so_far: best.1,
        };
        on_epoch(&rec);
        logs.push(rec);
        if cfg.patience > 0 && epoch >= best.0 + cfg.patience {
            break;
        }
    }
    model.params = best.2;
    Ok(FitReport {
        epochs: logs,
        best_epoch: best.0,
        best_val: best.1,
        train_windows: train_w.len(),
        val_windows: val_w.len(),
        batches_per_epoch,
    })
}
