//! Kinematic quadrotor model: first-order body-velocity tracking plus yaw
//! integration, stepped at a fixed physics rate.
//!
//! The camera is gimbal-equivalent, so roll and pitch never reach the image
//! and the state carries yaw only.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite {what}: {value:?}")]
    NonFinite { what: &'static str, value: Vec<f64> },
    #[error("invalid step dt {0} (must be finite and > 0)")]
    BadDt(f64),
    #[error("duration {duration}s is not a positive multiple of the physics period 1/{physics_hz}s")]
    BadDuration { duration: f64, physics_hz: u32 },
    #[error("invalid sim config: {0}")]
    BadConfig(String),
}

/// Vehicle state in the world frame. Body axes: x forward, y left, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub position: Vec3,
    /// Radians, kept in (-π, π].
    pub yaw: f64,
    pub body_velocity: Vec3,
    pub yaw_rate: f64,
}

impl QuadState {
    pub fn at(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
            body_velocity: [0.0; 3],
            yaw_rate: 0.0,
        }
    }

    /// Always zero: the model has no tilt.
    pub fn roll(&self) -> f64 {
        0.0
    }

    pub fn pitch(&self) -> f64 {
        0.0
    }

    pub fn speed(&self) -> f64 {
        norm(self.body_velocity)
    }

    pub fn world_velocity(&self) -> Vec3 {
        body_to_world(self.yaw, self.body_velocity)
    }

    fn check_finite(&self) -> Result<(), SimError> {
        let vals = [
            self.position[0],
            self.position[1],
            self.position[2],
            self.yaw,
            self.body_velocity[0],
            self.body_velocity[1],
            self.body_velocity[2],
            self.yaw_rate,
        ];
        if vals.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SimError::NonFinite {
                what: "state",
                value: vals.to_vec(),
            })
        }
    }
}

/// Body-frame velocity command: the 4-D label/action space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub yaw_rate: f64,
}

impl ControlCommand {
    pub const ZERO: ControlCommand = ControlCommand {
        vx: 0.0,
        vy: 0.0,
        vz: 0.0,
        yaw_rate: 0.0,
    };

    pub fn new(vx: f64, vy: f64, vz: f64, yaw_rate: f64) -> Self {
        Self {
            vx,
            vy,
            vz,
            yaw_rate,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.vx, self.vy, self.vz, self.yaw_rate]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandLimits {
    /// m/s, applied independently to vx, vy, vz.
    pub max_translation: f64,
    /// rad/s.
    pub max_yaw_rate: f64,
}

impl Default for CommandLimits {
    fn default() -> Self {
        Self {
            max_translation: 2.0,
            max_yaw_rate: 30f64.to_radians(),
        }
    }
}

impl CommandLimits {
    pub fn clamp(&self, cmd: ControlCommand) -> ControlCommand {
        let t = self.max_translation;
        ControlCommand {
            vx: cmd.vx.clamp(-t, t),
            vy: cmd.vy.clamp(-t, t),
            vz: cmd.vz.clamp(-t, t),
            yaw_rate: cmd.yaw_rate.clamp(-self.max_yaw_rate, self.max_yaw_rate),
        }
    }

    pub fn contains(&self, cmd: &ControlCommand) -> bool {
        let t = self.max_translation + 1e-12;
        cmd.vx.abs() <= t
            && cmd.vy.abs() <= t
            && cmd.vz.abs() <= t
            && cmd.yaw_rate.abs() <= self.max_yaw_rate + 1e-12
    }

    /// Per-component scale used to express commands in [-1, 1].
    pub fn scales(&self) -> [f64; 4] {
        [
            self.max_translation,
            self.max_translation,
            self.max_translation,
            self.max_yaw_rate,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub physics_hz: u32,
    /// Velocity time constant in seconds; 0 means instantaneous tracking.
    pub velocity_tau: f64,
    pub limits: CommandLimits,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            physics_hz: 240,
            velocity_tau: 0.25,
            limits: CommandLimits::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.physics_hz == 0 {
            return Err(SimError::BadConfig("physics_hz must be > 0".into()));
        }
        if !(self.velocity_tau >= 0.0 && self.velocity_tau.is_finite()) {
            return Err(SimError::BadConfig(format!(
                "velocity_tau must be finite and >= 0, got {}",
                self.velocity_tau
            )));
        }
        Ok(())
    }

    pub fn physics_dt(&self) -> f64 {
        1.0 / self.physics_hz as f64
    }

    /// Number of physics ticks in `duration`, which must be a positive integer
    /// multiple of the physics period.
    pub fn ticks_for(&self, duration: f64) -> Result<u32, SimError> {
        let exact = duration * self.physics_hz as f64;
        let ticks = exact.round();
        if !duration.is_finite() || ticks < 1.0 || (exact - ticks).abs() > 1e-6 {
            return Err(SimError::BadDuration {
                duration,
                physics_hz: self.physics_hz,
            });
        }
        Ok(ticks as u32)
    }

    /// Closest whole number of physics ticks to one period at `hz`
    /// (at least one).
    pub fn ticks_for_rate(&self, hz: f64) -> u32 {
        ((self.physics_hz as f64 / hz).round() as u32).max(1)
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    // rem_euclid can return exactly 2π for tiny negative inputs
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

pub fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Rotates a body-frame vector about the vertical axis by `yaw`.
pub fn body_to_world(yaw: f64, v_body: Vec3) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    [
        c * v_body[0] - s * v_body[1],
        s * v_body[0] + c * v_body[1],
        v_body[2],
    ]
}

pub fn world_to_body(yaw: f64, v_world: Vec3) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    [
        c * v_world[0] + s * v_world[1],
        -s * v_world[0] + c * v_world[1],
        v_world[2],
    ]
}

/// Advances the state by `dt` under a held command.
///
/// Body velocity relaxes toward the command with factor `exp(-dt/τ)`; yaw
/// rate tracks instantly. Position integrates the relaxed velocity rotated
/// by the yaw at the start of the step.
pub fn step_dynamics(
    cfg: &SimConfig,
    state: &QuadState,
    cmd: &ControlCommand,
    dt: f64,
) -> Result<QuadState, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::BadDt(dt));
    }
    state.check_finite()?;
    if !cmd.is_finite() {
        return Err(SimError::NonFinite {
            what: "command",
            value: cmd.to_array().to_vec(),
        });
    }
    Ok(step_unchecked(cfg.velocity_tau, state, cmd, dt))
}

#[inline]
fn step_unchecked(tau: f64, state: &QuadState, cmd: &ControlCommand, dt: f64) -> QuadState {
    let target = [cmd.vx, cmd.vy, cmd.vz];
    let v = if tau == 0.0 {
        target
    } else {
        let decay = (-dt / tau).exp();
        let mut v = [0.0; 3];
        for i in 0..3 {
            v[i] = target[i] + (state.body_velocity[i] - target[i]) * decay;
        }
        v
    };
    let w = body_to_world(state.yaw, v);
    QuadState {
        position: [
            state.position[0] + w[0] * dt,
            state.position[1] + w[1] * dt,
            state.position[2] + w[2] * dt,
        ],
        yaw: wrap_angle(state.yaw + cmd.yaw_rate * dt),
        body_velocity: v,
        yaw_rate: cmd.yaw_rate,
    }
}

/// Holds `cmd` for a whole number of physics ticks, invoking `observe`
/// after every tick.
pub fn run_ticks_observed<F: FnMut(&QuadState)>(
    cfg: &SimConfig,
    state: &QuadState,
    cmd: &ControlCommand,
    ticks: u32,
    mut observe: F,
) -> Result<QuadState, SimError> {
    let dt = cfg.physics_dt();
    let mut s = step_dynamics(cfg, state, cmd, dt)?;
    observe(&s);
    for _ in 1..ticks {
        s = step_unchecked(cfg.velocity_tau, &s, cmd, dt);
        observe(&s);
    }
    Ok(s)
}

pub fn run_ticks(
    cfg: &SimConfig,
    state: &QuadState,
    cmd: &ControlCommand,
    ticks: u32,
) -> Result<QuadState, SimError> {
    if ticks == 0 {
        return Err(SimError::BadDuration {
            duration: 0.0,
            physics_hz: cfg.physics_hz,
        });
    }
    run_ticks_observed(cfg, state, cmd, ticks, |_| {})
}

/// Simulates `duration` seconds with the command held constant.
pub fn run_constant_command(
    cfg: &SimConfig,
    state: &QuadState,
    cmd: &ControlCommand,
    duration: f64,
) -> Result<QuadState, SimError> {
    let ticks = cfg.ticks_for(duration)?;
    run_ticks(cfg, state, cmd, ticks)
}
