//! Colored-sphere world, level pinhole camera and the analytic "plain"
//! renderer.

use crate::simcore::{dot, norm, sub, wrap_angle, QuadState, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetColor {
    Red,
    Blue,
}

impl TargetColor {
    pub fn rgb(self) -> [f32; 3] {
        match self {
            TargetColor::Red => [0.86, 0.12, 0.10],
            TargetColor::Blue => [0.10, 0.22, 0.88],
        }
    }

    /// +1 for a left (counter-clockwise) turn, -1 for right.
    pub fn turn_sign(self) -> f64 {
        match self {
            TargetColor::Red => 1.0,
            TargetColor::Blue => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetColor::Red => "red",
            TargetColor::Blue => "blue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "red" => Some(TargetColor::Red),
            "blue" => Some(TargetColor::Blue),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub position: Vec3,
    pub radius: f64,
    pub color: TargetColor,
}

/// Two-tone background split at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Background {
    pub sky: [f32; 3],
    pub ground: [f32; 3],
    /// Sharpness of the horizon blend in units of tan(elevation).
    pub sharpness: f32,
}

impl Default for Background {
    fn default() -> Self {
        Self {
            sky: [0.60, 0.62, 0.65],
            ground: [0.42, 0.41, 0.40],
            sharpness: 4.0,
        }
    }
}

impl Background {
    /// Color seen along a ray with the given tangent of elevation.
    pub fn color_at(&self, tan_elevation: f64) -> [f32; 3] {
        let t = 0.5 + 0.5 * ((self.sharpness as f64) * tan_elevation).tanh();
        let t = t as f32;
        [
            self.ground[0] + (self.sky[0] - self.ground[0]) * t,
            self.ground[1] + (self.sky[1] - self.ground[1]) * t,
            self.ground[2] + (self.sky[2] - self.ground[2]) * t,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("target radius must be > 0, got {0}")]
    BadRadius(f64),
    #[error("targets {0} and {1} share a position")]
    DuplicatePosition(usize, usize),
    #[error("active index {active} out of range for {len} targets")]
    ActiveOutOfRange { active: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    targets: Vec<Target>,
    pub background: Background,
    active: usize,
    /// How many targets past the active one are drawn.
    pub lookahead: usize,
    /// Approach heading for each target when the scene is a hike course.
    pub course_headings: Vec<f64>,
}

impl Scene {
    pub fn new(targets: Vec<Target>, background: Background) -> Result<Self, SceneError> {
        for (i, t) in targets.iter().enumerate() {
            if !(t.radius > 0.0) {
                return Err(SceneError::BadRadius(t.radius));
            }
            for (j, u) in targets.iter().enumerate().take(i) {
                if t.position == u.position {
                    return Err(SceneError::DuplicatePosition(j, i));
                }
            }
        }
        Ok(Self {
            targets,
            background,
            active: 0,
            lookahead: 1,
            course_headings: Vec::new(),
        })
    }

    pub fn single(target: Target) -> Self {
        Self::new(vec![target], Background::default()).expect("single valid target")
    }

    pub fn empty(background: Background) -> Self {
        Self {
            targets: Vec::new(),
            background,
            active: 0,
            lookahead: 1,
            course_headings: Vec::new(),
        }
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn active_target(&self) -> Option<&Target> {
        self.targets.get(self.active)
    }

    pub fn set_active(&mut self, idx: usize) -> Result<(), SceneError> {
        if idx >= self.targets.len() {
            return Err(SceneError::ActiveOutOfRange {
                active: idx,
                len: self.targets.len(),
            });
        }
        self.active = idx;
        Ok(())
    }

    /// Targets currently drawn: the previous one (still in view while the
    /// vehicle turns away), the active one and `lookahead` successors.
    pub fn visible_targets(&self) -> &[Target] {
        if self.targets.is_empty() {
            return &[];
        }
        let lo = self.active.saturating_sub(1);
        let hi = (self.active + self.lookahead).min(self.targets.len() - 1);
        &self.targets[lo..=hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, radians.
    pub hfov: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            width: 256,
            height: 144,
            hfov: 90f64.to_radians(),
        }
    }
}

impl CameraIntrinsics {
    pub fn desk() -> Self {
        Self {
            width: 64,
            height: 36,
            ..Self::default()
        }
    }

    pub fn focal_px(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.hfov / 2.0).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Half vertical field of view implied by square pixels.
    pub fn half_vfov(&self) -> f64 {
        ((self.height as f64 / 2.0) / self.focal_px()).atan()
    }

    /// Unnormalised ray through the center of pixel (col,row), in body axes
    /// (forward, left, up).
    pub fn pixel_ray_body(&self, col: usize, row: usize) -> Vec3 {
        let f = self.focal_px();
        let (cx, cy) = self.principal_point();
        [
            1.0,
            (cx - (col as f64 + 0.5)) / f,
            (cy - (row as f64 + 0.5)) / f,
        ]
    }

    /// Projects a body-frame point (forward, left, up) to pixel coordinates.
    pub fn project_body(&self, p: Vec3) -> Option<(f64, f64)> {
        if p[0] <= 1e-9 {
            return None;
        }
        let f = self.focal_px();
        let (cx, cy) = self.principal_point();
        Some((cx - f * p[1] / p[0], cy - f * p[2] / p[0]))
    }
}

/// RGB image with channel values in [0,1], row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, col: usize, row: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, col: usize, row: usize, rgb: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }

    pub fn pack(&self) -> PackedImage {
        PackedImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
        }
    }

    /// Binary PPM (P6, 8-bit).
    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pack().data)
    }
}

/// 8-bit storage form of [`Image`], as kept in datasets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl PackedImage {
    pub fn unpack(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }
}

/// Target position expressed in the level camera frame (forward, left, up).
pub fn to_camera(state: &QuadState, world: Vec3) -> Vec3 {
    let d = sub(world, state.position);
    let (s, c) = state.yaw.sin_cos();
    [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
}

/// Whether the ray hits the sphere (center `c` relative to the eye) from the
/// outside, and at what ray parameter.
#[inline]
pub fn ray_sphere_hit(dir: Vec3, c: Vec3, r: f64) -> Option<f64> {
    let a = dot(dir, dir);
    let b = dot(dir, c);
    let cc = dot(c, c) - r * r;
    if cc <= 0.0 || b <= 0.0 {
        return None;
    }
    let disc = b * b - a * cc;
    if disc < 0.0 {
        return None;
    }
    Some((b - disc.sqrt()) / a)
}

pub fn background_image(bg: &Background, intr: &CameraIntrinsics) -> Image {
    let mut img = Image::filled(intr.width, intr.height, [0.0; 3]);
    for row in 0..intr.height {
        let ray = intr.pixel_ray_body(0, row);
        let c = bg.color_at(ray[2]);
        for col in 0..intr.width {
            img.set_pixel(col, row, c);
        }
    }
    img
}

/// Renders the visible targets as flat-colored spheres over the background.
///
/// Spheres are painted far-to-near by squared tangent length
/// (|c|² − r²), which is a correct visibility order for non-intersecting
/// spheres; each is rasterised inside the projection of its camera-aligned
/// bounding cube.
pub fn render_plain(scene: &Scene, state: &QuadState, intr: &CameraIntrinsics) -> Image {
    let mut img = background_image(&scene.background, intr);
    let mut spheres: Vec<(f64, Vec3, &Target)> = scene
        .visible_targets()
        .iter()
        .map(|t| {
            let c = to_camera(state, t.position);
            (dot(c, c) - t.radius * t.radius, c, t)
        })
        .collect();
    spheres.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, c, t) in spheres {
        let Some((c0, c1, r0, r1)) = sphere_pixel_bounds(intr, c, t.radius) else {
            continue;
        };
        let rgb = t.color.rgb();
        for row in r0..r1 {
            for col in c0..c1 {
                if ray_sphere_hit(intr.pixel_ray_body(col, row), c, t.radius).is_some() {
                    img.set_pixel(col, row, rgb);
                }
            }
        }
    }
    img
}

/// Conservative pixel bounding box `[c0,c1) x [r0,r1)` of a sphere's
/// projection, or `None` when it cannot be visible.
fn sphere_pixel_bounds(
    intr: &CameraIntrinsics,
    c: Vec3,
    r: f64,
) -> Option<(usize, usize, usize, usize)> {
    if c[0] + r <= 0.0 {
        return None;
    }
    let (w, h) = (intr.width as f64, intr.height as f64);
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    if c[0] - r <= 1e-6 {
        // straddles the image plane
        u0 = 0.0;
        v0 = 0.0;
        u1 = w;
        v1 = h;
    } else {
        for dx in [-r, r] {
            for dy in [-r, r] {
                for dz in [-r, r] {
                    let (u, v) = intr
                        .project_body([c[0] + dx, c[1] + dy, c[2] + dz])
                        .expect("corner in front");
                    u0 = u0.min(u);
                    u1 = u1.max(u);
                    v0 = v0.min(v);
                    v1 = v1.max(v);
                }
            }
        }
    }
    let c0 = (u0 - 1.0).floor().max(0.0);
    let c1 = (u1 + 1.0).ceil().min(w);
    let r0 = (v0 - 1.0).floor().max(0.0);
    let r1 = (v1 + 1.0).ceil().min(h);
    if c0 >= c1 || r0 >= r1 {
        return None;
    }
    Some((c0 as usize, c1 as usize, r0 as usize, r1 as usize))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bearing {
    /// Signed horizontal angle from the camera axis, left positive.
    pub bearing: f64,
    /// Signed vertical angle, up positive.
    pub elevation: f64,
    pub distance: f64,
}

pub fn bearing_to(state: &QuadState, target: &Target) -> Bearing {
    let c = to_camera(state, target.position);
    let horiz = (c[0] * c[0] + c[1] * c[1]).sqrt();
    Bearing {
        bearing: c[1].atan2(c[0]),
        elevation: c[2].atan2(horiz),
        distance: norm(c),
    }
}

/// Error signals for the active target.
pub fn target_bearing(scene: &Scene, state: &QuadState) -> Option<Bearing> {
    scene.active_target().map(|t| bearing_to(state, t))
}

/// True when at least one pixel of the target's disk lies inside the image
/// (occlusion ignored).
pub fn target_in_frame(intr: &CameraIntrinsics, state: &QuadState, target: &Target) -> bool {
    let c = to_camera(state, target.position);
    let Some((c0, c1, r0, r1)) = sphere_pixel_bounds(intr, c, target.radius) else {
        return false;
    };
    (r0..r1).any(|row| {
        (c0..c1).any(|col| ray_sphere_hit(intr.pixel_ray_body(col, row), c, target.radius).is_some())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HikeConfig {
    /// Distance range from a stop point to the next target, meters.
    pub spacing: (f64, f64),
    pub altitude: f64,
    pub radius: f64,
    pub stop_distance: f64,
    /// Heading change per checkpoint, radians.
    pub turn_angle: f64,
}

impl Default for HikeConfig {
    fn default() -> Self {
        Self {
            spacing: (2.0, 4.0),
            altitude: 1.5,
            radius: 0.15,
            stop_distance: 0.5,
            turn_angle: FRAC_PI_2,
        }
    }
}

/// Builds a hike course. Target 0 sits at the origin and is approached
/// along +x; each subsequent target is centered in view after the correct
/// turn at the previous stop point.
pub fn make_hike_scene(
    n_targets: usize,
    seed: u64,
    cfg: &HikeConfig,
    forced_color: Option<TargetColor>,
) -> Scene {
    assert!(n_targets >= 1, "a hike needs at least one target");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets = Vec::with_capacity(n_targets);
    let mut headings = Vec::with_capacity(n_targets);
    let mut heading = 0.0f64;
    let mut pos = [0.0, 0.0, cfg.altitude];
    for k in 0..n_targets {
        let color = forced_color.unwrap_or_else(|| {
            if rng.random_bool(0.5) {
                TargetColor::Red
            } else {
                TargetColor::Blue
            }
        });
        if k > 0 {
            let prev: &Target = &targets[k - 1];
            let stop = [
                prev.position[0] - cfg.stop_distance * heading.cos(),
                prev.position[1] - cfg.stop_distance * heading.sin(),
                cfg.altitude,
            ];
            heading = wrap_angle(heading + prev.color.turn_sign() * cfg.turn_angle);
            let d = rng.random_range(cfg.spacing.0..=cfg.spacing.1);
            pos = [
                stop[0] + d * heading.cos(),
                stop[1] + d * heading.sin(),
                cfg.altitude,
            ];
        }
        targets.push(Target {
            position: pos,
            radius: cfg.radius,
            color,
        });
        headings.push(heading);
    }
    let mut scene = Scene::new(targets, Background::default()).expect("hike targets are distinct");
    scene.course_headings = headings;
    scene
}
