//! Training-data factory: initial-pose sampling, irregular frame-interval
//! sampling, the privileged proportional expert and trajectory rollout.

use crate::scene::{bearing_to, CameraIntrinsics, Image, PackedImage, Scene, Target, TargetColor};
use crate::simcore::{run_ticks, wrap_angle, ControlCommand, QuadState, SimConfig, SimError};
use crate::splat::{Renderer, RendererKind};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const MIN_TRAJECTORY_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("bad sampling mode {0:?}: expected `irregular` or `fixed:<hz>`")]
    BadMode(String),
    #[error("bad init mode {0:?}")]
    BadInitMode(String),
    #[error("expert did not finish within {budget_s} s (phase {phase})")]
    Budget { budget_s: f64, phase: &'static str },
    #[error("trajectory too short: {len} < {min} samples")]
    TooShort { len: usize, min: usize },
    #[error("gave up after {attempts} attempts for trajectory {index}")]
    GaveUp { index: usize, attempts: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// How the initial yaw/altitude offsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Target on a lateral edge (p = lateral_prob) or a vertical edge.
    FullWindow,
    /// Same construction inside a window halved in width and height.
    HalfWindow,
    /// Target spread uniformly over the frame.
    Uniform,
    /// Target forced into one of the four corners.
    Corner,
}

impl InitMode {
    pub fn name(self) -> &'static str {
        match self {
            InitMode::FullWindow => "full-window",
            InitMode::HalfWindow => "half-window",
            InitMode::Uniform => "uniform",
            InitMode::Corner => "corner",
        }
    }
}

impl FromStr for InitMode {
    type Err = ExpertError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-window" => Ok(InitMode::FullWindow),
            "half-window" => Ok(InitMode::HalfWindow),
            "uniform" => Ok(InitMode::Uniform),
            "corner" => Ok(InitMode::Corner),
            _ => Err(ExpertError::BadInitMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    /// Largest yaw offset from the target-facing heading, radians.
    pub psi_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub lateral_prob: f64,
    pub target_altitude: f64,
    pub mode: InitMode,
    /// Vertical half-extent of the frame as a tangent (half height / focal).
    pub tan_half_vfov: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self::for_camera(&CameraIntrinsics::default(), 1.5, 2.0, 5.0)
    }
}

impl InitConfig {
    /// Window that puts the target center on the frame border: lateral edge
    /// at 0.95 of the half field of view, vertical edges at `d_min`.
    pub fn for_camera(intr: &CameraIntrinsics, target_altitude: f64, d_min: f64, d_max: f64) -> Self {
        let psi_max = 0.95 * intr.hfov / 2.0;
        let tan_v = (intr.height as f64 / 2.0) / intr.focal_px();
        let dz = 0.95 * tan_v * d_min * psi_max.cos();
        Self {
            psi_max,
            d_min,
            d_max,
            z_min: target_altitude - dz,
            z_max: target_altitude + dz,
            lateral_prob: 0.75,
            target_altitude,
            mode: InitMode::FullWindow,
            tan_half_vfov: tan_v,
        }
    }

    pub fn with_mode(mut self, mode: InitMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Draws a starting pose around a target at (0, 0, target_altitude).
pub fn sample_init<R: Rng + ?Sized>(cfg: &InitConfig, rng: &mut R) -> QuadState {
    let theta = rng.random_range(0.0..TAU);
    let d = rng.random_range(cfg.d_min..cfg.d_max);
    let (psi0, z0) = match cfg.mode {
        InitMode::FullWindow => window_offsets(cfg.psi_max, cfg.z_min, cfg.z_max, cfg.lateral_prob, rng),
        InitMode::HalfWindow => {
            let psi = (cfg.psi_max.tan() / 2.0).atan();
            let zc = cfg.target_altitude;
            let (lo, hi) = (zc + (cfg.z_min - zc) / 2.0, zc + (cfg.z_max - zc) / 2.0);
            window_offsets(psi, lo, hi, cfg.lateral_prob, rng)
        }
        InitMode::Uniform => {
            let u: f64 = rng.random_range(-1.0..1.0);
            ((u * cfg.psi_max.tan()).atan(), rng.random_range(cfg.z_min..cfg.z_max))
        }
        InitMode::Corner => {
            let sx = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let sz = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let dz = 0.95 * cfg.tan_half_vfov * d * cfg.psi_max.cos();
            (sx * cfg.psi_max, cfg.target_altitude + sz * dz)
        }
    };
    let facing = theta + PI;
    QuadState::at([d * theta.cos(), d * theta.sin(), z0], wrap_angle(facing + psi0))
}

fn window_offsets<R: Rng + ?Sized>(psi: f64, z_lo: f64, z_hi: f64, lateral_prob: f64, rng: &mut R) -> (f64, f64) {
    if rng.random_bool(lateral_prob) {
        let z = rng.random_range(z_lo..z_hi);
        (if rng.random_bool(0.5) { psi } else { -psi }, z)
    } else {
        let z = if rng.random_bool(0.5) { z_lo } else { z_hi };
        (rng.random_range(-psi..psi), z)
    }
}

/// Two-component Gaussian mixture over physics ticks, truncated by rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtSampler {
    pub alpha: f64,
    pub beta: f64,
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub k_min: u32,
    pub k_max: u32,
}

impl Default for DtSampler {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            beta: 1.0,
            mu1: 21.0,
            sigma1: 30.0,
            mu2: 196.0,
            sigma2: 100.0,
            k_min: 24,
            k_max: 240,
        }
    }
}

impl DtSampler {
    /// Draws a tick count in `[k_min, k_max]`. Each rejected draw re-picks
    /// the mixture component, so accepted counts follow the truncated
    /// mixture.
    pub fn sample_ticks<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        assert!(self.alpha > 0.0 && self.beta > 0.0 && self.k_min >= 1 && self.k_min <= self.k_max);
        let p1 = self.alpha / (self.alpha + self.beta);
        let n1 = Normal::new(self.mu1, self.sigma1).expect("sigma1 > 0");
        let n2 = Normal::new(self.mu2, self.sigma2).expect("sigma2 > 0");
        loop {
            let x = if rng.random_bool(p1) { n1.sample(rng) } else { n2.sample(rng) };
            let k = x.round();
            if k >= self.k_min as f64 && k <= self.k_max as f64 {
                return k as u32;
            }
        }
    }

    pub fn sample_dt<R: Rng + ?Sized>(&self, sim: &SimConfig, rng: &mut R) -> f64 {
        self.sample_ticks(rng) as f64 * sim.physics_dt()
    }
}

/// Frame-interval regime of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingMode {
    Irregular,
    Fixed(f64),
}

impl SamplingMode {
    pub fn ticks<R: Rng + ?Sized>(&self, sim: &SimConfig, sampler: &DtSampler, rng: &mut R) -> u32 {
        match self {
            SamplingMode::Irregular => sampler.sample_ticks(rng),
            SamplingMode::Fixed(hz) => sim.ticks_for_rate(*hz),
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingMode::Irregular => write!(f, "irregular"),
            SamplingMode::Fixed(hz) => write!(f, "fixed:{hz}"),
        }
    }
}

impl FromStr for SamplingMode {
    type Err = ExpertError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "irregular" {
            return Ok(SamplingMode::Irregular);
        }
        s.strip_prefix("fixed:")
            .and_then(|hz| hz.parse::<f64>().ok())
            .filter(|hz| hz.is_finite() && *hz > 0.0)
            .map(SamplingMode::Fixed)
            .ok_or_else(|| ExpertError::BadMode(s.to_string()))
    }
}

impl Serialize for SamplingMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SamplingMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    /// Yaw gain, 1/s.
    pub k_yaw: f64,
    /// Approach yaw-rate cap, rad/s.
    pub yaw_rate_cap: f64,
    pub k_z: f64,
    pub k_d: f64,
    pub stop_distance: f64,
    /// Forward speed fades to zero as |bearing| reaches this angle.
    pub forward_gate: f64,
    pub turn_rate: f64,
    pub turn_angle: f64,
    /// Hover-to-turn switch tolerances.
    pub switch_distance_tol: f64,
    pub switch_bearing_tol: f64,
    pub switch_elevation_tol: f64,
    /// Simulated-time budget per target, seconds.
    pub budget_s: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            k_yaw: 0.5,
            yaw_rate_cap: 6.5f64.to_radians(),
            k_z: 0.5,
            k_d: 0.25,
            stop_distance: 0.5,
            forward_gate: 22.5f64.to_radians(),
            turn_rate: 12f64.to_radians(),
            turn_angle: 90f64.to_radians(),
            switch_distance_tol: 0.05,
            switch_bearing_tol: 1f64.to_radians(),
            switch_elevation_tol: 3f64.to_radians(),
            budget_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Approach,
    Turn { start_yaw: f64 },
    Done,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Approach => "approach",
            Phase::Turn { .. } => "turn",
            Phase::Done => "done",
        }
    }
}

/// Proportional approach command toward `target`.
pub fn approach_command(cfg: &ExpertConfig, sim: &SimConfig, state: &QuadState, target: &Target) -> ControlCommand {
    let b = bearing_to(state, target);
    let horiz = b.distance * b.elevation.cos();
    let dz = b.distance * b.elevation.sin();
    let gate = (1.0 - b.bearing.abs() / cfg.forward_gate).max(0.0);
    let vmax = sim.limits.max_translation;
    let vx = (cfg.k_d * (horiz - cfg.stop_distance)).clamp(-vmax, vmax) * gate;
    let yaw_rate = (cfg.k_yaw * b.bearing).clamp(-cfg.yaw_rate_cap, cfg.yaw_rate_cap);
    sim.limits.clamp(ControlCommand::new(vx, 0.0, cfg.k_z * dz, yaw_rate))
}

pub fn turn_command(cfg: &ExpertConfig, color: TargetColor) -> ControlCommand {
    ControlCommand::new(0.0, 0.0, 0.0, color.turn_sign() * cfg.turn_rate)
}

/// Stateless command for a given phase.
pub fn expert_command(
    cfg: &ExpertConfig,
    sim: &SimConfig,
    scene: &Scene,
    state: &QuadState,
    phase: Phase,
) -> ControlCommand {
    let target = scene.active_target().expect("active target");
    match phase {
        Phase::Approach => approach_command(cfg, sim, state, target),
        Phase::Turn { .. } => turn_command(cfg, target.color),
        Phase::Done => ControlCommand::ZERO,
    }
}

/// The expert as a sampled-data controller: decides at each sample
/// instant and switches phases based on the true pose.
#[derive(Debug, Clone)]
pub struct ExpertPolicy {
    pub cfg: ExpertConfig,
    pub sim: SimConfig,
    pub phase: Phase,
}

impl ExpertPolicy {
    pub fn new(cfg: ExpertConfig, sim: SimConfig) -> Self {
        Self { cfg, sim, phase: Phase::Approach }
    }

    fn ready_to_turn(&self, state: &QuadState, target: &Target) -> bool {
        let b = bearing_to(state, target);
        (b.distance - self.cfg.stop_distance).abs() < self.cfg.switch_distance_tol
            && b.bearing.abs() < self.cfg.switch_bearing_tol
            && b.elevation.abs() < self.cfg.switch_elevation_tol
    }

    /// Advances the phase machine and returns the command to hold until the
    /// next decision. Returns `Phase::Done` once the turn sweep is complete.
    pub fn decide(&mut self, scene: &Scene, state: &QuadState) -> ControlCommand {
        let target = *scene.active_target().expect("active target");
        if let Phase::Approach = self.phase {
            if self.ready_to_turn(state, &target) {
                self.phase = Phase::Turn { start_yaw: state.yaw };
            }
        }
        if let Phase::Turn { start_yaw } = self.phase {
            let swept = wrap_angle(state.yaw - start_yaw) * target.color.turn_sign();
            if swept >= self.cfg.turn_angle - 1e-9 {
                self.phase = Phase::Done;
            }
        }
        expert_command(&self.cfg, &self.sim, scene, state, self.phase)
    }

    /// Resets for the next checkpoint.
    pub fn next_target(&mut self) {
        self.phase = Phase::Approach;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub image: PackedImage,
    pub label: ControlCommand,
    /// Seconds since the previous sample.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub id: usize,
    pub color: TargetColor,
    pub mode: SamplingMode,
    pub init_mode: InitMode,
    pub renderer: RendererKind,
    pub seed: u64,
    pub init: QuadState,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub samples: Vec<TrajectorySample>,
    /// Pose at each sample instant; empty when loaded from disk.
    pub states: Vec<QuadState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSpec {
    pub altitude: f64,
    pub radius: f64,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self { altitude: 1.5, radius: 0.15 }
    }
}

pub fn training_scene(color: TargetColor, spec: &TargetSpec) -> Scene {
    Scene::single(Target {
        position: [0.0, 0.0, spec.altitude],
        radius: spec.radius,
        color,
    })
}

/// Everything needed to roll out one expert demonstration.
#[derive(Debug, Clone)]
pub struct GenSetup<'a> {
    pub sim: &'a SimConfig,
    pub expert: &'a ExpertConfig,
    pub intr: &'a CameraIntrinsics,
    pub sampler: &'a DtSampler,
}

/// Rolls the expert closed-loop from `init` on a single-target scene.
///
/// At every sample instant the image is rendered, the expert decides, and
/// (image, command, δt since the previous sample) is recorded; the command is
/// then held for the next drawn interval. The first sample's δt is drawn
/// like any other interval.
pub fn rollout_expert<R: Rng + ?Sized>(
    setup: &GenSetup<'_>,
    scene: &Scene,
    renderer: &Renderer,
    mode: SamplingMode,
    init: QuadState,
    rng: &mut R,
) -> Result<(Vec<TrajectorySample>, Vec<QuadState>), ExpertError> {
    let mut expert = ExpertPolicy::new(*setup.expert, *setup.sim);
    let mut state = init;
    let mut samples = Vec::new();
    let mut states = Vec::new();
    let mut ticks = mode.ticks(setup.sim, setup.sampler, rng);
    let budget_ticks = (setup.expert.budget_s * setup.sim.physics_hz as f64) as u64;
    let mut elapsed: u64 = 0;
    loop {
        let cmd = expert.decide(scene, &state);
        if expert.phase == Phase::Done {
            break;
        }
        if elapsed > budget_ticks {
            return Err(ExpertError::Budget {
                budget_s: setup.expert.budget_s,
                phase: expert.phase.name(),
            });
        }
        let image = renderer.render(scene, &state, setup.intr).pack();
        samples.push(TrajectorySample {
            image,
            label: cmd,
            dt: ticks as f64 * setup.sim.physics_dt(),
        });
        states.push(state);
        ticks = mode.ticks(setup.sim, setup.sampler, rng);
        state = run_ticks(setup.sim, &state, &cmd, ticks)?;
        elapsed += ticks as u64;
    }
    Ok((samples, states))
}

/// Per-trajectory RNG seed derived from the master seed, index and attempt.
pub fn trajectory_seed(master: u64, index: usize, attempt: usize) -> u64 {
    // splitmix64 finaliser over a simple combination
    let mut z = master
        .wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((attempt as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct GenRequest<'a> {
    pub setup: GenSetup<'a>,
    pub init: &'a InitConfig,
    pub target: &'a TargetSpec,
    pub mode: SamplingMode,
    pub renderer: RendererKind,
    pub splat_style: &'a crate::splat::SplatStyle,
    pub splat_params: &'a crate::splat::SplatRenderParams,
    pub master_seed: u64,
    pub max_attempts: usize,
}

/// Generates trajectory `index`: color alternates Red/Blue by index; failed
/// or short rollouts are retried with a fresh seed.
pub fn generate_trajectory(req: &GenRequest<'_>, index: usize) -> Result<Trajectory, ExpertError> {
    use rand::SeedableRng;
    let color = if index % 2 == 0 { TargetColor::Red } else { TargetColor::Blue };
    let scene = training_scene(color, req.target);
    let renderer = Renderer::for_scene(req.renderer, &scene, req.splat_style, req.splat_params);
    for attempt in 0..req.max_attempts {
        let seed = trajectory_seed(req.master_seed, index, attempt);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let init = sample_init(req.init, &mut rng);
        match rollout_expert(&req.setup, &scene, &renderer, req.mode, init, &mut rng) {
            Ok((samples, states)) if samples.len() >= MIN_TRAJECTORY_LEN => {
                return Ok(Trajectory {
                    meta: TrajectoryMeta {
                        id: index,
                        color,
                        mode: req.mode,
                        init_mode: req.init.mode,
                        renderer: req.renderer,
                        seed,
                        init,
                    },
                    samples,
                    states,
                });
            }
            Ok((samples, _)) => log::debug!(
                "trajectory {index} attempt {attempt}: {}",
                ExpertError::TooShort { len: samples.len(), min: MIN_TRAJECTORY_LEN }
            ),
            Err(e) => log::warn!("trajectory {index} attempt {attempt} discarded: {e}"),
        }
    }
    Err(ExpertError::GaveUp { index, attempts: req.max_attempts })
}

/// Photometric jitter ranges: brightness offset ±b, contrast gain 1±c,
/// saturation gain 1±s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { brightness: 0.08, contrast: 0.15, saturation: 0.15 }
    }
}

impl AugmentConfig {
    pub const NONE: AugmentConfig = AugmentConfig { brightness: 0.0, contrast: 0.0, saturation: 0.0 };
}

#[inline]
pub fn luma(p: [f32; 3]) -> f32 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

/// Brightness offset, then contrast about the image mean, then saturation
/// about each pixel's luma; clamped to [0,1].
pub fn adjust_image(img: &Image, brightness: f32, contrast: f32, saturation: f32) -> Image {
    let mut out = img.clone();
    if brightness != 0.0 {
        for v in &mut out.data {
            *v += brightness;
        }
    }
    if contrast != 1.0 {
        let n = out.data.len().max(1) as f64;
        let mean = (out.data.iter().map(|&v| v as f64).sum::<f64>() / n) as f32;
        for v in &mut out.data {
            *v = mean + contrast * (*v - mean);
        }
    }
    if saturation != 1.0 {
        for px in out.data.chunks_exact_mut(3) {
            let y = luma([px[0], px[1], px[2]]);
            for c in px.iter_mut() {
                *c = y + saturation * (*c - y);
            }
        }
    }
    out.clamp01();
    out
}

pub fn augment_image<R: Rng + ?Sized>(img: &Image, cfg: &AugmentConfig, rng: &mut R) -> Image {
    let mut draw = |r: f32| if r > 0.0 { rng.random_range(-r..r) } else { 0.0 };
    let b = draw(cfg.brightness);
    let c = 1.0 + draw(cfg.contrast);
    let s = 1.0 + draw(cfg.saturation);
    if b == 0.0 && c == 1.0 && s == 1.0 {
        return img.clone();
    }
    adjust_image(img, b, c, s)
}
