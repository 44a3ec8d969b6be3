//! Closed-loop evaluation: rollouts at a fixed inference rate, outcome
//! classification, and the single-target / hike / shift suites.

use crate::expert::{
    sample_init, trajectory_seed, training_scene, turn_command, ExpertConfig, ExpertPolicy, InitConfig, InitMode, Phase,
    TargetSpec,
};
use crate::nn::model::{PolicyModel, PolicyRunner};
use crate::nn::NnError;
use crate::scene::{bearing_to, make_hike_scene, target_in_frame, CameraIntrinsics, HikeConfig, Image, Scene, TargetColor};
use crate::simcore::{run_ticks, wrap_angle, CommandLimits, ControlCommand, QuadState, SimConfig, SimError};
use crate::splat::{Renderer, RendererKind, SplatRenderParams, SplatStyle};
use crate::train::denormalize_output;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("inference rate {hz} Hz is not in (0, {physics_hz}] Hz")]
    Rate { hz: f64, physics_hz: u32 },
    #[error("bad eval config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    WrongTurn,
    Overshoot,
    Stuck,
    TargetLost,
    Timeout,
}

impl Outcome {
    pub const ALL: [Outcome; 6] = [
        Outcome::Success,
        Outcome::WrongTurn,
        Outcome::Overshoot,
        Outcome::Stuck,
        Outcome::TargetLost,
        Outcome::Timeout,
    ];
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Thresholds for outcome classification and attempt length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub inference_hz: f64,
    pub hover_min: f64,
    pub hover_max: f64,
    pub hover_speed: f64,
    pub hover_dwell_s: f64,
    /// Degrees per second.
    pub turn_rate_deg: f64,
    pub turn_sustain_s: f64,
    pub stuck_speed: f64,
    pub stuck_time_s: f64,
    /// Per-target budget (twice the expert's mean manoeuvre time).
    pub time_budget_s: f64,
    pub attempts: usize,
    pub courses: usize,
    pub hike_targets: usize,
    /// Initial distance to the first hike target.
    pub hike_start_distance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            inference_hz: 3.0,
            hover_min: 0.35,
            hover_max: 0.65,
            hover_speed: 0.05,
            hover_dwell_s: 1.0,
            turn_rate_deg: 10.0,
            turn_sustain_s: 2.0,
            stuck_speed: 0.01,
            stuck_time_s: 20.0,
            time_budget_s: 56.0,
            attempts: 100,
            courses: 10,
            hike_targets: 100,
            hike_start_distance: 3.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self, sim: &SimConfig) -> Result<u32, EvalError> {
        if !(self.hover_min < self.hover_max && self.hover_min >= 0.0) {
            return Err(EvalError::Config("hover band must satisfy 0 <= min < max".into()));
        }
        if !(self.time_budget_s > 0.0 && self.turn_sustain_s > 0.0 && self.turn_rate_deg > 0.0) {
            return Err(EvalError::Config("time budget, turn threshold and dwell must be positive".into()));
        }
        decision_ticks(sim, self.inference_hz)
    }
}

/// Physics ticks per decision, rounded to the nearest whole tick like the
/// data generator (9 Hz becomes 27 ticks at 240 Hz).
pub fn decision_ticks(sim: &SimConfig, hz: f64) -> Result<u32, EvalError> {
    if !(hz > 0.0 && hz.is_finite() && hz <= sim.physics_hz as f64) {
        return Err(EvalError::Rate {
            hz,
            physics_hz: sim.physics_hz,
        });
    }
    Ok(sim.ticks_for_rate(hz))
}

/// What a policy sees at a decision instant. `image` is present when the
/// policy asked for it.
pub struct Observation<'a> {
    pub image: Option<&'a Image>,
    pub dt: f64,
    pub scene: &'a Scene,
    pub state: &'a QuadState,
}

pub trait Policy {
    fn reset(&mut self);
    fn needs_image(&self) -> bool {
        true
    }
    fn act(&mut self, obs: &Observation<'_>) -> Result<ControlCommand, EvalError>;
    /// Called when the active target advances during a hike.
    fn advance(&mut self) {}
}

/// Trained network driving the vehicle from pixels and δt.
pub struct NetworkPolicy<'a> {
    runner: PolicyRunner<'a, f32>,
    limits: CommandLimits,
}

impl<'a> NetworkPolicy<'a> {
    pub fn new(model: &'a PolicyModel<f32>, limits: CommandLimits) -> Self {
        Self {
            runner: model.runner(),
            limits,
        }
    }
}

impl Policy for NetworkPolicy<'_> {
    fn reset(&mut self) {
        self.runner.reset();
    }

    fn act(&mut self, obs: &Observation<'_>) -> Result<ControlCommand, EvalError> {
        let img = obs.image.ok_or_else(|| EvalError::Config("network policy needs an image".into()))?;
        let y = self.runner.step(&img.data, obs.dt)?;
        Ok(self.limits.clamp(denormalize_output(&y, &self.runner.model().cfg.output_scale)))
    }
}

pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn reset(&mut self) {}
    fn needs_image(&self) -> bool {
        false
    }
    fn act(&mut self, _: &Observation<'_>) -> Result<ControlCommand, EvalError> {
        Ok(ControlCommand::ZERO)
    }
}

/// The privileged expert run closed-loop. On `advance` it finishes the
/// current turn sweep before approaching the next target.
pub struct ExpertDriver {
    expert: ExpertPolicy,
    carry: Option<(TargetColor, f64)>,
    last_color: Option<TargetColor>,
}

impl ExpertDriver {
    pub fn new(cfg: ExpertConfig, sim: SimConfig) -> Self {
        Self {
            expert: ExpertPolicy::new(cfg, sim),
            carry: None,
            last_color: None,
        }
    }
}

impl Policy for ExpertDriver {
    fn reset(&mut self) {
        self.expert.next_target();
        self.carry = None;
    }

    fn needs_image(&self) -> bool {
        false
    }

    fn act(&mut self, obs: &Observation<'_>) -> Result<ControlCommand, EvalError> {
        if let Some((color, start)) = self.carry {
            let swept = wrap_angle(obs.state.yaw - start) * color.turn_sign();
            if swept < self.expert.cfg.turn_angle - 1e-9 {
                return Ok(turn_command(&self.expert.cfg, color));
            }
            self.carry = None;
        }
        self.last_color = obs.scene.active_target().map(|t| t.color);
        Ok(self.expert.decide(obs.scene, obs.state))
    }

    fn advance(&mut self) {
        if let (Phase::Turn { start_yaw }, Some(c)) = (self.expert.phase, self.last_color) {
            self.carry = Some((c, start_yaw));
        }
        self.expert.next_target();
    }
}

/// Everything fixed across rollouts.
#[derive(Clone, Copy)]
pub struct Harness<'a> {
    pub sim: &'a SimConfig,
    pub intr: &'a CameraIntrinsics,
    pub eval: &'a EvalConfig,
    pub expert: &'a ExpertConfig,
    pub init: &'a InitConfig,
    pub target: &'a TargetSpec,
    pub hike: &'a HikeConfig,
    pub splat_style: &'a SplatStyle,
    pub splat_params: &'a SplatRenderParams,
}

/// Renders (if needed), queries the policy with δt = 1/rate and holds the
/// command for one decision period.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_step<P: Policy + ?Sized>(
    policy: &mut P,
    scene: &Scene,
    state: &QuadState,
    renderer: &Renderer,
    intr: &CameraIntrinsics,
    sim: &SimConfig,
    inference_hz: f64,
) -> Result<(ControlCommand, QuadState), EvalError> {
    let ticks = decision_ticks(sim, inference_hz)?;
    let image = policy.needs_image().then(|| renderer.render(scene, state, intr));
    let cmd = policy.act(&Observation {
        image: image.as_ref(),
        dt: ticks as f64 * sim.physics_dt(),
        scene,
        state,
    })?;
    let cmd = sim.limits.clamp(cmd);
    let next = run_ticks(sim, state, &cmd, ticks)?;
    Ok((cmd, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Seconds since the attempt started.
    pub t: f64,
    pub state: QuadState,
    pub command: ControlCommand,
    /// Range to the active target.
    pub distance: f64,
    pub in_frame: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub outcome: Outcome,
    pub time_s: f64,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HikeResult {
    pub completed: usize,
    pub records: Vec<OutcomeRecord>,
}

/// Incremental first-trigger classifier for one target attempt.
#[derive(Debug, Clone)]
pub struct Classifier {
    cfg: EvalConfig,
    color: TargetColor,
    seen: bool,
    hovered: bool,
    hover_since: Option<f64>,
    slow_since: Option<f64>,
    /// (sign, start time) of the current above-threshold turn.
    turn: Option<(f64, f64)>,
    /// `None` before the first sample; `Some(true)` while a turn already in
    /// progress at the start (the previous checkpoint's sweep) continues.
    inherited_turn: Option<bool>,
}

impl Classifier {
    pub fn new(cfg: &EvalConfig, color: TargetColor) -> Self {
        Self {
            cfg: *cfg,
            color,
            seen: false,
            hovered: false,
            hover_since: None,
            slow_since: None,
            turn: None,
            inherited_turn: None,
        }
    }

    pub fn hovered(&self) -> bool {
        self.hovered
    }

    /// Feeds one decision-instant sample; returns the outcome once decided.
    pub fn observe(&mut self, s: &TraceStep) -> Option<Outcome> {
        let c = &self.cfg;
        let approach = !self.hovered;
        self.seen |= s.in_frame;

        let in_band = s.distance >= c.hover_min && s.distance <= c.hover_max;
        if in_band && s.state.speed() < c.hover_speed {
            let since = *self.hover_since.get_or_insert(s.t);
            if s.t - since >= c.hover_dwell_s - 1e-9 {
                self.hovered = true;
            }
        } else {
            self.hover_since = None;
        }

        let rate = s.state.yaw_rate;
        let thr = c.turn_rate_deg.to_radians();
        let inherited = self.inherited_turn.get_or_insert(rate.abs() > thr);
        *inherited &= rate.abs() > thr;
        let sustained = if *inherited {
            None
        } else if rate.abs() > thr {
            let sign = rate.signum();
            let start = match self.turn {
                Some((sg, t0)) if sg == sign => t0,
                _ => s.t,
            };
            self.turn = Some((sign, start));
            (s.t - start >= c.turn_sustain_s - 1e-9).then_some(sign)
        } else {
            self.turn = None;
            None
        };

        if s.state.body_velocity[0] < c.stuck_speed {
            self.slow_since.get_or_insert(s.t);
        } else {
            self.slow_since = None;
        }

        let lost = approach && self.seen && !s.in_frame;
        let overshoot = approach && s.distance < c.hover_min;
        let correct = self.color.turn_sign();
        let wrong_turn = sustained.is_some_and(|sg| sg != correct);
        let success = self.hovered && sustained == Some(correct);
        let stuck = approach && self.slow_since.is_some_and(|t0| s.t - t0 > c.stuck_time_s);
        let timeout = s.t > c.time_budget_s;

        if lost {
            Some(Outcome::TargetLost)
        } else if overshoot {
            Some(Outcome::Overshoot)
        } else if wrong_turn {
            Some(Outcome::WrongTurn)
        } else if success {
            Some(Outcome::Success)
        } else if stuck {
            Some(Outcome::Stuck)
        } else if timeout {
            Some(Outcome::Timeout)
        } else {
            None
        }
    }
}

/// Classifies a recorded trace; a trace that ends undecided is a Timeout.
pub fn classify_outcome(trace: &[TraceStep], color: TargetColor, cfg: &EvalConfig) -> OutcomeRecord {
    let mut cl = Classifier::new(cfg, color);
    for (i, s) in trace.iter().enumerate() {
        if let Some(o) = cl.observe(s) {
            return OutcomeRecord {
                outcome: o,
                time_s: s.t,
                trace: trace[..=i].to_vec(),
            };
        }
    }
    OutcomeRecord {
        outcome: Outcome::Timeout,
        time_s: trace.last().map_or(0.0, |s| s.t),
        trace: trace.to_vec(),
    }
}

/// Rolls the policy against the scene's active target until classified.
/// Returns the record and the vehicle state at the end of the attempt.
pub fn run_attempt<P: Policy + ?Sized>(
    h: &Harness<'_>,
    policy: &mut P,
    scene: &Scene,
    renderer: &Renderer,
    start: QuadState,
) -> Result<(OutcomeRecord, QuadState), EvalError> {
    let hz = h.eval.inference_hz;
    let period = decision_ticks(h.sim, hz)? as f64 * h.sim.physics_dt();
    let target = *scene
        .active_target()
        .ok_or_else(|| EvalError::Config("scene has no active target".into()))?;
    let mut cl = Classifier::new(h.eval, target.color);
    let mut state = start;
    let mut trace = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * period;
        let (cmd, next) = closed_loop_step(policy, scene, &state, renderer, h.intr, h.sim, hz)?;
        let step = TraceStep {
            t,
            state,
            command: cmd,
            distance: bearing_to(&state, &target).distance,
            in_frame: target_in_frame(h.intr, &state, &target),
        };
        trace.push(step);
        if let Some(o) = cl.observe(&step) {
            return Ok((
                OutcomeRecord {
                    outcome: o,
                    time_s: t,
                    trace,
                },
                next,
            ));
        }
        state = next;
        k += 1;
    }
}

pub fn make_renderer(h: &Harness<'_>, kind: RendererKind, scene: &Scene) -> Renderer {
    Renderer::for_scene(kind, scene, h.splat_style, h.splat_params)
}

/// One single-target attempt from a sampled init.
pub fn run_single_target<P: Policy + ?Sized>(
    h: &Harness<'_>,
    policy: &mut P,
    color: TargetColor,
    kind: RendererKind,
    init_mode: InitMode,
    rng: &mut impl Rng,
) -> Result<OutcomeRecord, EvalError> {
    let scene = training_scene(color, h.target);
    let renderer = make_renderer(h, kind, &scene);
    let init = sample_init(&h.init.with_mode(init_mode), rng);
    policy.reset();
    Ok(run_attempt(h, policy, &scene, &renderer, init)?.0)
}

/// Hike over a generated course; stops at the first non-success.
pub fn run_hike<P: Policy + ?Sized>(
    h: &Harness<'_>,
    policy: &mut P,
    n_targets: usize,
    kind: RendererKind,
    course_seed: u64,
) -> Result<HikeResult, EvalError> {
    let mut scene = make_hike_scene(n_targets.max(1), course_seed, h.hike, None);
    let renderer = make_renderer(h, kind, &scene);
    let d = h.eval.hike_start_distance;
    let mut state = QuadState::at([-d, 0.0, h.hike.altitude], 0.0);
    policy.reset();
    let mut records = Vec::new();
    for k in 0..n_targets {
        scene.set_active(k).expect("index within course");
        let (rec, next) = run_attempt(h, policy, &scene, &renderer, state)?;
        let ok = rec.outcome == Outcome::Success;
        records.push(rec);
        if !ok {
            break;
        }
        policy.advance();
        state = next;
    }
    let completed = records.iter().take_while(|r| r.outcome == Outcome::Success).count();
    Ok(HikeResult { completed, records })
}

/// Per-attempt log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub model: String,
    pub suite: String,
    pub renderer: RendererKind,
    pub inference_hz: f64,
    pub attempt: usize,
    pub color: TargetColor,
    pub outcome: Outcome,
    pub time_s: f64,
}

/// Hike length on one course.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HikeLog {
    pub model: String,
    pub renderer: RendererKind,
    pub inference_hz: f64,
    pub course: usize,
    pub completed: usize,
}

/// A rollout kept for trajectory plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLog {
    pub model: String,
    pub label: String,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuccessSummary {
    pub attempts: usize,
    pub successes: usize,
    pub red_attempts: usize,
    pub red_successes: usize,
    pub blue_attempts: usize,
    pub blue_successes: usize,
    pub outcomes: BTreeMap<Outcome, usize>,
}

impl SuccessSummary {
    pub fn from_logs<'a>(logs: impl IntoIterator<Item = &'a AttemptLog>) -> Self {
        let mut s = Self::default();
        for l in logs {
            let ok = (l.outcome == Outcome::Success) as usize;
            s.attempts += 1;
            s.successes += ok;
            match l.color {
                TargetColor::Red => {
                    s.red_attempts += 1;
                    s.red_successes += ok;
                }
                TargetColor::Blue => {
                    s.blue_attempts += 1;
                    s.blue_successes += ok;
                }
            }
            *s.outcomes.entry(l.outcome).or_default() += 1;
        }
        s
    }

    fn ratio(a: usize, b: usize) -> f64 {
        if b == 0 {
            0.0
        } else {
            a as f64 / b as f64
        }
    }

    pub fn rate(&self) -> f64 {
        Self::ratio(self.successes, self.attempts)
    }

    pub fn red_rate(&self) -> f64 {
        Self::ratio(self.red_successes, self.red_attempts)
    }

    pub fn blue_rate(&self) -> f64 {
        Self::ratio(self.blue_successes, self.blue_attempts)
    }
}

/// A batch of single-target attempts; colours by fair coin, each attempt
/// with its own RNG stream. Results are independent of thread count.
#[allow(clippy::too_many_arguments)]
pub fn single_target_batch<P, F>(
    h: &Harness<'_>,
    make_policy: F,
    model_name: &str,
    suite: &str,
    kind: RendererKind,
    init_mode: InitMode,
    n: usize,
    seed: u64,
) -> Result<Vec<AttemptLog>, EvalError>
where
    P: Policy,
    F: Fn() -> P + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed, i, 0));
            let color = if rng.random_bool(0.5) { TargetColor::Red } else { TargetColor::Blue };
            let mut policy = make_policy();
            let rec = run_single_target(h, &mut policy, color, kind, init_mode, &mut rng)?;
            Ok(AttemptLog {
                model: model_name.to_string(),
                suite: suite.to_string(),
                renderer: kind,
                inference_hz: h.eval.inference_hz,
                attempt: i,
                color,
                outcome: rec.outcome,
                time_s: rec.time_s,
            })
        })
        .collect()
}

/// Hike lengths for `courses` course seeds.
pub fn hike_batch<P, F>(
    h: &Harness<'_>,
    make_policy: F,
    n_targets: usize,
    kind: RendererKind,
    courses: usize,
    seed: u64,
) -> Result<Vec<HikeResult>, EvalError>
where
    P: Policy,
    F: Fn() -> P + Sync,
{
    (0..courses)
        .into_par_iter()
        .map(|c| {
            let mut p = make_policy();
            run_hike(h, &mut p, n_targets, kind, trajectory_seed(seed, c, 1))
        })
        .collect()
}

/// One row of a suite table: model × renderer × rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub model: String,
    pub renderer: RendererKind,
    pub inference_hz: f64,
    pub attempts: usize,
    pub success_rate: f64,
    pub red_rate: f64,
    pub blue_rate: f64,
}

impl SuiteRow {
    pub fn from_logs(model: &str, renderer: RendererKind, hz: f64, logs: &[AttemptLog]) -> Self {
        let s = SuccessSummary::from_logs(logs);
        Self {
            model: model.to_string(),
            renderer,
            inference_hz: hz,
            attempts: s.attempts,
            success_rate: s.rate(),
            red_rate: s.red_rate(),
            blue_rate: s.blue_rate(),
        }
    }
}

/// Models × rates on the single-target task. Returns the attempt logs and
/// one summary row per (model, rate).
pub fn frequency_shift_suite(
    h: &Harness<'_>,
    models: &[(String, &PolicyModel<f32>)],
    rates: &[f64],
    kind: RendererKind,
    n: usize,
    seed: u64,
) -> Result<(Vec<AttemptLog>, Vec<SuiteRow>), EvalError> {
    if rates.len() < 2 {
        return Err(EvalError::Config("frequency shift needs at least two rates".into()));
    }
    let mut logs = Vec::new();
    let mut rows = Vec::new();
    for (name, m) in models {
        for &hz in rates {
            let ev = EvalConfig {
                inference_hz: hz,
                ..*h.eval
            };
            let hh = Harness { eval: &ev, ..*h };
            let l = single_target_batch(&hh, || NetworkPolicy::new(m, h.sim.limits), name, "frequency-shift", kind, InitMode::FullWindow, n, seed)?;
            rows.push(SuiteRow::from_logs(name, kind, hz, &l));
            logs.extend(l);
        }
    }
    Ok((logs, rows))
}

/// Models × renderers on the single-target task.
pub fn renderer_shift_suite(
    h: &Harness<'_>,
    models: &[(String, &PolicyModel<f32>)],
    renderers: &[RendererKind],
    n: usize,
    seed: u64,
) -> Result<(Vec<AttemptLog>, Vec<SuiteRow>), EvalError> {
    let mut logs = Vec::new();
    let mut rows = Vec::new();
    for (name, m) in models {
        for &kind in renderers {
            let l = single_target_batch(h, || NetworkPolicy::new(m, h.sim.limits), name, "renderer-shift", kind, InitMode::FullWindow, n, seed)?;
            rows.push(SuiteRow::from_logs(name, kind, h.eval.inference_hz, &l));
            logs.extend(l);
        }
    }
    Ok((logs, rows))
}

pub fn rows_to_csv(rows: &[SuiteRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "renderer", "inference_hz", "attempts", "success_rate", "red_rate", "blue_rate"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.renderer.name().to_string(),
            r.inference_hz.to_string(),
            r.attempts.to_string(),
            format!("{:.4}", r.success_rate),
            format!("{:.4}", r.red_rate),
            format!("{:.4}", r.blue_rate),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn to_json_lines<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("serialisable record"));
        out.push('\n');
    }
    out
}

/// Mean expert manoeuvre duration (approach + full turn) over `n` inits.
pub fn expert_mean_manoeuvre_s(h: &Harness<'_>, n: usize, seed: u64) -> Result<f64, EvalError> {
    let ticks = decision_ticks(h.sim, h.eval.inference_hz)?;
    let mut total = 0.0;
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed, i, 2));
        let color = if i % 2 == 0 { TargetColor::Red } else { TargetColor::Blue };
        let scene = training_scene(color, h.target);
        let mut ex = ExpertPolicy::new(*h.expert, *h.sim);
        let mut s = sample_init(h.init, &mut rng);
        let mut steps = 0u64;
        loop {
            let cmd = ex.decide(&scene, &s);
            if ex.phase == Phase::Done || steps as f64 * ticks as f64 * h.sim.physics_dt() > 10.0 * h.expert.budget_s {
                break;
            }
            s = run_ticks(h.sim, &s, &cmd, ticks)?;
            steps += 1;
        }
        total += steps as f64 * ticks as f64 * h.sim.physics_dt();
    }
    Ok(total / n.max(1) as f64)
}
