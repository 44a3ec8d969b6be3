//! Full policy: CNN features → recurrent head → 4-D normalised command.

use super::cfc::{CfcHead, CfcStepCache};
use super::cnn::{images_to_block, Cnn, CnnCache, CnnSpec};
use super::lstm::{LstmHead, LstmStepCache};
use super::ncp::{build_ncp_wiring, NcpWiring};
use super::{NnError, ParamLayout, Real};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const OUTPUTS: usize = 4;
/// Frames pushed through the CNN per GEMM block.
const CNN_CHUNK: usize = 128;
/// Roughly the largest expert command per component, so labels land in
/// about [-1, 1] with comparable spread.
pub const DEFAULT_OUTPUT_SCALE: [f64; OUTPUTS] = [1.0, 1.0, 0.25, 0.20943951023931956];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// CfC head trained on irregularly sampled data.
    Liquid,
    /// CfC head trained on a fixed frame rate.
    LiquidFixed,
    Lstm,
    /// LSTM with δt appended to its input.
    LstmDt,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Liquid => "liquid",
            Variant::LiquidFixed => "liquid-fixed",
            Variant::Lstm => "lstm",
            Variant::LstmDt => "lstm-dt",
        }
    }

    pub fn is_cfc(self) -> bool {
        matches!(self, Variant::Liquid | Variant::LiquidFixed)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "liquid" => Ok(Variant::Liquid),
            "liquid-fixed" => Ok(Variant::LiquidFixed),
            "lstm" => Ok(Variant::Lstm),
            "lstm-dt" => Ok(Variant::LstmDt),
            _ => Err(NnError::Config(format!("unknown model variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WiringMode {
    Dense,
    Ncp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub cnn: CnnSpec,
    /// CfC neurons.
    pub state_size: usize,
    /// Width of the shared CfC layer (dense wiring only).
    pub backbone_units: usize,
    pub wiring: WiringMode,
    pub ncp: NcpWiring,
    pub lstm_hidden: usize,
    /// Physical size of one network output unit (m/s, m/s, m/s, rad/s).
    pub output_scale: [f64; OUTPUTS],
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(Variant::Liquid)
    }
}

impl ModelConfig {
    pub fn desk(variant: Variant) -> Self {
        Self {
            variant,
            cnn: CnnSpec::desk(),
            state_size: 34,
            backbone_units: 98,
            wiring: WiringMode::Dense,
            ncp: NcpWiring::default(),
            lstm_hidden: 64,
            output_scale: DEFAULT_OUTPUT_SCALE,
            init_seed: 0,
        }
    }

    pub fn full(variant: Variant) -> Self {
        Self {
            cnn: CnnSpec::full(),
            lstm_hidden: 220,
            ..Self::desk(variant)
        }
    }

    /// Serialises as `key=value` lines.
    pub fn to_kv(&self) -> String {
        let (c, h, w) = self.cnn.input;
        let layers: Vec<String> = self
            .cnn
            .layers
            .iter()
            .map(|l| format!("{}:{}:{}", l.out_c, l.k, l.stride))
            .collect();
        let pool = match self.cnn.pool {
            Some((a, b)) => format!("{a}x{b}"),
            None => "none".into(),
        };
        let n = &self.ncp;
        format!(
            "variant={}\ncnn.input={c}x{h}x{w}\ncnn.layers={}\ncnn.pool={pool}\ncfc.state={}\ncfc.backbone={}\nwiring={}\n\
             ncp.inter={}\nncp.command={}\nncp.motor={}\nncp.sensory_fanout={}\nncp.inter_fanout={}\n\
             ncp.recurrent_command={}\nncp.motor_fanin={}\nncp.seed={}\nlstm.hidden={}\noutput_scale={}\ninit_seed={}\n",
            self.variant,
            layers.join(","),
            self.state_size,
            self.backbone_units,
            match self.wiring {
                WiringMode::Dense => "dense",
                WiringMode::Ncp => "ncp",
            },
            n.inter,
            n.command,
            n.motor,
            n.sensory_fanout,
            n.inter_fanout,
            n.recurrent_command,
            n.motor_fanin,
            n.seed,
            self.lstm_hidden,
            self.output_scale.map(|v| format!("{v:?}")).join(","),
            self.init_seed,
        )
    }

    /// Parses the keys written by [`ModelConfig::to_kv`]; other keys are
    /// returned untouched.
    pub fn from_kv(text: &str) -> Result<(Self, Vec<(String, String)>), NnError> {
        let bad = |k: &str, v: &str| NnError::Checkpoint(format!("bad config value {k}={v:?}"));
        let mut cfg = ModelConfig::desk(Variant::Liquid);
        let mut extra = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| NnError::Checkpoint(format!("config line without '=': {line:?}")))?;
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad(k, v));
            match k {
                "variant" => cfg.variant = v.parse()?,
                "cnn.input" => {
                    let d: Vec<usize> = v.split('x').map(num).collect::<Result<_, _>>()?;
                    if d.len() != 3 {
                        return Err(bad(k, v));
                    }
                    cfg.cnn.input = (d[0], d[1], d[2]);
                }
                "cnn.layers" => {
                    cfg.cnn.layers = v
                        .split(',')
                        .map(|l| {
                            let d: Vec<usize> = l.split(':').map(num).collect::<Result<_, _>>()?;
                            if d.len() != 3 {
                                return Err(bad(k, v));
                            }
                            Ok(super::cnn::ConvSpec { out_c: d[0], k: d[1], stride: d[2] })
                        })
                        .collect::<Result<_, _>>()?;
                }
                "cnn.pool" => {
                    cfg.cnn.pool = match v {
                        "none" => None,
                        _ => {
                            let (a, b) = v.split_once('x').ok_or_else(|| bad(k, v))?;
                            Some((num(a)?, num(b)?))
                        }
                    }
                }
                "cfc.state" => cfg.state_size = num(v)?,
                "cfc.backbone" => cfg.backbone_units = num(v)?,
                "wiring" => {
                    cfg.wiring = match v {
                        "dense" => WiringMode::Dense,
                        "ncp" => WiringMode::Ncp,
                        _ => return Err(bad(k, v)),
                    }
                }
                "ncp.inter" => cfg.ncp.inter = num(v)?,
                "ncp.command" => cfg.ncp.command = num(v)?,
                "ncp.motor" => cfg.ncp.motor = num(v)?,
                "ncp.sensory_fanout" => cfg.ncp.sensory_fanout = num(v)?,
                "ncp.inter_fanout" => cfg.ncp.inter_fanout = num(v)?,
                "ncp.recurrent_command" => cfg.ncp.recurrent_command = num(v)?,
                "ncp.motor_fanin" => cfg.ncp.motor_fanin = num(v)?,
                "ncp.seed" => cfg.ncp.seed = v.parse().map_err(|_| bad(k, v))?,
                "lstm.hidden" => cfg.lstm_hidden = num(v)?,
                "output_scale" => {
                    let v: Vec<f64> = v.split(',').map(|x| x.parse::<f64>().map_err(|_| bad(k, v))).collect::<Result<_, _>>()?;
                    if v.len() != OUTPUTS || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                        return Err(bad(k, &format!("{v:?}")));
                    }
                    cfg.output_scale.copy_from_slice(&v);
                }
                "init_seed" => cfg.init_seed = v.parse().map_err(|_| bad(k, v))?,
                _ => {
                    extra.push((k.to_string(), v.to_string()));
                    continue;
                }
            }
            seen.insert(k.to_string());
        }
        for required in ["variant", "cnn.input", "cnn.layers", "cnn.pool"] {
            if !seen.contains(required) {
                return Err(NnError::Checkpoint(format!("config blob missing {required}")));
            }
        }
        Ok((cfg, extra))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Cfc(CfcHead),
    Lstm(LstmHead),
}

#[derive(Debug, Clone)]
enum HeadCache<T> {
    Cfc(Vec<CfcStepCache<T>>),
    Lstm(Vec<LstmStepCache<T>>),
}

/// A batch of `rows` windows of `steps` frames, stored step-major
/// (frame n = t·rows + r).
#[derive(Debug, Clone)]
pub struct SeqBatch<T> {
    pub rows: usize,
    pub steps: usize,
    /// Interleaved RGB in [0,1], one entry per frame.
    pub frames: Vec<Vec<f32>>,
    pub dts: Vec<T>,
    /// Normalised labels, `[N, 4]`.
    pub labels: Vec<T>,
}

impl<T: Real> SeqBatch<T> {
    pub fn len(&self) -> usize {
        self.rows * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self) -> Result<(), NnError> {
        let n = self.len();
        if self.frames.len() != n || self.dts.len() != n || self.labels.len() != n * OUTPUTS {
            return Err(NnError::Shape {
                what: "sequence batch".into(),
                expected: vec![n, n, n * OUTPUTS],
                actual: vec![self.frames.len(), self.dts.len(), self.labels.len()],
            });
        }
        if self.dts.iter().any(|d| !d.is_finite() || *d < T::zero()) {
            return Err(NnError::NonFinite("dt"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PolicyModel<T> {
    pub cfg: ModelConfig,
    pub layout: ParamLayout,
    pub params: Vec<T>,
    pub cnn: Cnn,
    pub head: Head,
}

impl<T: Real> PolicyModel<T> {
    /// Builds the architecture with all parameters zero.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self, NnError> {
        let mut layout = ParamLayout::default();
        let cnn = Cnn::build(&cfg.cnn, &mut layout, "cnn.")?;
        let f = cnn.feat_dim;
        let head = match cfg.variant {
            Variant::Liquid | Variant::LiquidFixed => match cfg.wiring {
                WiringMode::Dense => Head::Cfc(CfcHead::build(f, cfg.state_size, cfg.backbone_units, OUTPUTS, None, &mut layout)?),
                WiringMode::Ncp => {
                    if cfg.ncp.motor != OUTPUTS {
                        return Err(NnError::Config(format!("ncp needs {OUTPUTS} motor neurons")));
                    }
                    let mask = build_ncp_wiring(&cfg.ncp, f)?;
                    Head::Cfc(CfcHead::build(f, cfg.ncp.units(), 0, OUTPUTS, Some(mask), &mut layout)?)
                }
            },
            Variant::Lstm => Head::Lstm(LstmHead::build(f, cfg.lstm_hidden, OUTPUTS, false, &mut layout)?),
            Variant::LstmDt => Head::Lstm(LstmHead::build(f, cfg.lstm_hidden, OUTPUTS, true, &mut layout)?),
        };
        Ok(Self {
            cfg: cfg.clone(),
            params: vec![T::zero(); layout.total],
            layout,
            cnn,
            head,
        })
    }

    /// Randomly initialised model, seeded by `cfg.init_seed`.
    pub fn new(cfg: &ModelConfig) -> Result<Self, NnError> {
        let mut m = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        m.cnn.init(&mut m.params, &mut rng);
        match &m.head {
            Head::Cfc(h) => h.init(&mut m.params, &mut rng),
            Head::Lstm(h) => h.init(&mut m.params, &mut rng),
        }
        Ok(m)
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn cnn_param_count(&self) -> usize {
        self.cnn.param_count()
    }

    pub fn head_param_count(&self) -> usize {
        self.layout.total - self.cnn.param_count()
    }

    pub fn input_hw(&self) -> (usize, usize) {
        (self.cfg.cnn.input.1, self.cfg.cnn.input.2)
    }

    pub fn cast<U: Real>(&self) -> PolicyModel<U> {
        PolicyModel {
            cfg: self.cfg.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|v| U::of(v.f64())).collect(),
            cnn: self.cnn.clone(),
            head: self.head.clone(),
        }
    }

    fn features(&self, frames: &[Vec<f32>]) -> Result<(Vec<T>, Vec<CnnCache<T>>), NnError> {
        let (h, w) = self.input_hw();
        let expect = 3 * h * w;
        if let Some(bad) = frames.iter().find(|f| f.len() != expect) {
            return Err(NnError::Shape {
                what: "frame".into(),
                expected: vec![h, w, 3],
                actual: vec![bad.len()],
            });
        }
        let mut feats = Vec::with_capacity(frames.len() * self.cnn.feat_dim);
        let mut caches = Vec::new();
        for chunk in frames.chunks(CNN_CHUNK) {
            let refs: Vec<&[f32]> = chunk.iter().map(|f| f.as_slice()).collect();
            let block = images_to_block::<T>(&refs, h, w);
            let (f, c) = self.cnn.forward(&self.params, block, chunk.len())?;
            feats.extend_from_slice(&f);
            caches.push(c);
        }
        Ok((feats, caches))
    }

    fn head_forward(&self, feats: &[T], dts: &[T], rows: usize, steps: usize) -> (Vec<T>, HeadCache<T>) {
        match &self.head {
            Head::Cfc(h) => {
                let (y, c) = h.forward_seq(&self.params, feats, dts, rows, steps);
                (y, HeadCache::Cfc(c))
            }
            Head::Lstm(h) => {
                let (y, c) = h.forward_seq(&self.params, feats, dts, rows, steps);
                (y, HeadCache::Lstm(c))
            }
        }
    }

    /// Per-frame outputs `[N, 4]` with zero initial state per window.
    pub fn forward_batch(&self, batch: &SeqBatch<T>) -> Result<Vec<T>, NnError> {
        batch.check()?;
        let (feats, _) = self.features(&batch.frames)?;
        Ok(self.head_forward(&feats, &batch.dts, batch.rows, batch.steps).0)
    }

    /// Mean squared error over all frames and the four outputs.
    pub fn loss(&self, batch: &SeqBatch<T>) -> Result<T, NnError> {
        let y = self.forward_batch(batch)?;
        Ok(mse(&y, &batch.labels).0)
    }

    /// Loss and its gradient (accumulated into `grad`).
    pub fn loss_and_grad(&self, batch: &SeqBatch<T>, grad: &mut [T]) -> Result<T, NnError> {
        batch.check()?;
        if grad.len() != self.params.len() {
            return Err(NnError::Shape {
                what: "gradient buffer".into(),
                expected: vec![self.params.len()],
                actual: vec![grad.len()],
            });
        }
        let (feats, cnn_caches) = self.features(&batch.frames)?;
        let (y, hc) = self.head_forward(&feats, &batch.dts, batch.rows, batch.steps);
        let (loss, dy) = mse(&y, &batch.labels);
        if !loss.is_finite() {
            return Err(NnError::NonFinite("loss"));
        }
        let dfeats = match (&self.head, &hc) {
            (Head::Cfc(h), HeadCache::Cfc(c)) => h.backward_seq(&self.params, c, &dy, grad),
            (Head::Lstm(h), HeadCache::Lstm(c)) => h.backward_seq(&self.params, c, &dy, grad),
            _ => unreachable!("cache matches head"),
        };
        let fd = self.cnn.feat_dim;
        for (i, cache) in cnn_caches.iter().enumerate() {
            let start = i * CNN_CHUNK * fd;
            self.cnn.backward(&self.params, cache, &dfeats[start..start + cache.n * fd], grad);
        }
        Ok(loss)
    }

    /// Runs one window (one sequence) and returns the per-step outputs.
    pub fn forward_sequence(&self, frames: &[Vec<f32>], dts: &[T]) -> Result<Vec<[T; OUTPUTS]>, NnError> {
        let batch = SeqBatch {
            rows: 1,
            steps: frames.len(),
            frames: frames.to_vec(),
            dts: dts.to_vec(),
            labels: vec![T::zero(); frames.len() * OUTPUTS],
        };
        let y = self.forward_batch(&batch)?;
        Ok(y.chunks_exact(OUTPUTS).map(|c| [c[0], c[1], c[2], c[3]]).collect())
    }

    pub fn runner(&self) -> PolicyRunner<'_, T> {
        let mut r = PolicyRunner {
            model: self,
            a: Vec::new(),
            b: Vec::new(),
        };
        r.reset();
        r
    }
}

/// MSE and its gradient with respect to the predictions.
pub fn mse<T: Real>(pred: &[T], labels: &[T]) -> (T, Vec<T>) {
    assert_eq!(pred.len(), labels.len());
    let n = T::of(pred.len().max(1) as f64);
    let mut loss = T::zero();
    let mut dy = Vec::with_capacity(pred.len());
    for (p, l) in pred.iter().zip(labels) {
        let d = *p - *l;
        loss = loss + d * d;
        dy.push(T::of(2.0) * d / n);
    }
    (loss / n, dy)
}

/// Stateful single-stream inference.
#[derive(Debug, Clone)]
pub struct PolicyRunner<'a, T> {
    model: &'a PolicyModel<T>,
    a: Vec<T>,
    b: Vec<T>,
}

impl<'a, T: Real> PolicyRunner<'a, T> {
    pub fn model(&self) -> &'a PolicyModel<T> {
        self.model
    }

    pub fn reset(&mut self) {
        let n = match &self.model.head {
            Head::Cfc(h) => h.state,
            Head::Lstm(h) => h.hidden,
        };
        self.a = vec![T::zero(); n];
        self.b = vec![T::zero(); n];
    }

    /// Feeds one frame (interleaved RGB in [0,1]) observed `dt` seconds after
    /// the previous one; returns the normalised command.
    pub fn step(&mut self, frame: &[f32], dt: f64) -> Result<[f64; OUTPUTS], NnError> {
        if !dt.is_finite() || dt < 0.0 || frame.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("policy input"));
        }
        let m = self.model;
        let (feat, _) = m.features(std::slice::from_ref(&frame.to_vec()))?;
        let dt = [T::of(dt)];
        let mut y = [T::zero(); OUTPUTS];
        match &m.head {
            Head::Cfc(h) => {
                let c = h.step(&m.params, &self.a, &feat, &dt, 1);
                h.readout(&m.params, &c.x, 1, &mut y);
                self.a = c.x;
            }
            Head::Lstm(h) => {
                let c = h.step(&m.params, &self.a, &self.b, &feat, &dt, 1);
                h.readout(&m.params, &c.h, 1, &mut y);
                self.a = c.h;
                self.b = c.c;
            }
        }
        Ok(y.map(|v| v.f64()))
    }
}
