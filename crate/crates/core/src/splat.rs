//! 3D Gaussian splat renderer: EWA projection, global depth sort and
//! front-to-back alpha compositing.

use crate::scene::{to_camera, Background, CameraIntrinsics, Image, Scene, Target};
use crate::simcore::{QuadState, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPLAT_MAGIC: &[u8; 8] = b"SPLATS01";
const RECORD_FLOATS: usize = 14;

#[derive(Debug, Error, PartialEq)]
pub enum SplatError {
    #[error("bad magic: expected SPLATS01")]
    BadMagic,
    #[error("truncated splat file: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
}

/// Anisotropic 3D Gaussian with view-independent color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian3D {
    pub mean: Vec3,
    /// Per-axis standard deviation, meters.
    pub scale: Vec3,
    /// Unit quaternion (w, x, y, z).
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub rgb: [f32; 3],
}

impl Gaussian3D {
    pub fn isotropic(mean: Vec3, sigma: f64, opacity: f64, rgb: [f32; 3]) -> Self {
        Self {
            mean,
            scale: [sigma; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity,
            rgb,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = self.mean.iter().chain(&self.scale).chain(&self.rotation).all(|v| v.is_finite())
            && self.opacity.is_finite()
            && self.rgb.iter().all(|v| v.is_finite());
        if !finite {
            return Err("non-finite field".into());
        }
        if self.scale.iter().any(|&s| s <= 0.0) {
            return Err(format!("scale must be > 0, got {:?}", self.scale));
        }
        let qn = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > 1e-9 {
            return Err(format!("quaternion norm {qn} != 1"));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(format!("opacity {} outside [0,1]", self.opacity));
        }
        if self.rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(format!("rgb {:?} outside [0,1]", self.rgb));
        }
        Ok(())
    }

    /// World-frame covariance R·diag(scale²)·Rᵀ.
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let r = quat_to_matrix(self.rotation);
        let s2 = self.scale.map(|s| s * s);
        let mut cov = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] = (0..3).map(|k| r[i][k] * s2[k] * r[j][k]).sum();
            }
        }
        cov
    }
}

fn quat_to_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplatScene {
    pub gaussians: Vec<Gaussian3D>,
    pub background: Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplatRenderParams {
    pub alpha_max: f64,
    /// Contributions below this alpha are skipped.
    pub alpha_min: f64,
    /// Added to the diagonal of every 2D covariance, px².
    pub cov_floor: f64,
    /// Camera near plane, meters.
    pub near: f64,
}

impl Default for SplatRenderParams {
    fn default() -> Self {
        Self {
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            cov_floor: 0.3,
            near: 0.05,
        }
    }
}

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedSplat {
    pub mean2d: (f64, f64),
    /// Symmetric 2x2 covariance as (xx, xy, yy), px².
    pub cov2d: [f64; 3],
    pub depth: f64,
    /// Inverse covariance (xx, xy, yy).
    pub conic: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Culled;

/// EWA projection of a Gaussian into the level camera at `state`.
///
/// Camera axes follow the image: x right, y down, z forward.
pub fn project_gaussian(
    g: &Gaussian3D,
    state: &QuadState,
    intr: &CameraIntrinsics,
    params: &SplatRenderParams,
) -> Result<ProjectedSplat, Culled> {
    let body = to_camera(state, g.mean);
    let (x, y, z) = (-body[1], -body[2], body[0]);
    if z <= params.near {
        return Err(Culled);
    }
    let (sy, cy) = state.yaw.sin_cos();
    // world -> camera rotation rows: right, down, forward
    let w = [[sy, -cy, 0.0], [0.0, 0.0, -1.0], [cy, sy, 0.0]];
    let sigma = g.covariance();
    let mut ws = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ws[i][j] = (0..3).map(|k| w[i][k] * sigma[k][j]).sum();
        }
    }
    let mut cam = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cam[i][j] = (0..3).map(|k| ws[i][k] * w[j][k]).sum();
        }
    }
    let f = intr.focal_px();
    let j = [[f / z, 0.0, -f * x / (z * z)], [0.0, f / z, -f * y / (z * z)]];
    let mut jc = [[0.0; 3]; 2];
    for i in 0..2 {
        for k in 0..3 {
            jc[i][k] = (0..3).map(|m| j[i][m] * cam[m][k]).sum();
        }
    }
    let dot2 = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cxx = dot2(&jc[0], &j[0]) + params.cov_floor;
    let cxy = dot2(&jc[0], &j[1]);
    let cyy = dot2(&jc[1], &j[1]) + params.cov_floor;
    let det = cxx * cyy - cxy * cxy;
    if !(det > 0.0) || !det.is_finite() {
        return Err(Culled);
    }
    let (cx, cy_pp) = intr.principal_point();
    Ok(ProjectedSplat {
        mean2d: (cx + f * x / z, cy_pp + f * y / z),
        cov2d: [cxx, cxy, cyy],
        depth: z,
        conic: [cyy / det, -cxy / det, cxx / det],
    })
}

/// Opacity of a projected splat at a pixel center, or `None` when below
/// the contribution threshold.
#[inline]
pub fn splat_alpha(p: &ProjectedSplat, opacity: f64, px: f64, py: f64, params: &SplatRenderParams) -> Option<f64> {
    let dx = px - p.mean2d.0;
    let dy = py - p.mean2d.1;
    let q = p.conic[0] * dx * dx + 2.0 * p.conic[1] * dx * dy + p.conic[2] * dy * dy;
    let a = (opacity * (-0.5 * q).exp()).clamp(0.0, params.alpha_max);
    (a >= params.alpha_min).then_some(a)
}

/// Projects and stably depth-sorts (nearest first) the renderable splats.
pub fn sorted_projection(
    scene: &SplatScene,
    state: &QuadState,
    intr: &CameraIntrinsics,
    params: &SplatRenderParams,
) -> Vec<(usize, ProjectedSplat)> {
    let mut out: Vec<(usize, ProjectedSplat)> = scene
        .gaussians
        .iter()
        .enumerate()
        .filter(|(_, g)| g.opacity >= params.alpha_min)
        .filter_map(|(i, g)| project_gaussian(g, state, intr, params).ok().map(|p| (i, p)))
        .collect();
    // sort_by is stable: equal depths keep insertion order
    out.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth));
    out
}

pub fn render_splats(
    scene: &SplatScene,
    state: &QuadState,
    intr: &CameraIntrinsics,
    params: &SplatRenderParams,
) -> Image {
    let (w, h) = (intr.width, intr.height);
    let mut color = vec![[0.0f64; 3]; w * h];
    let mut trans = vec![1.0f64; w * h];
    for (idx, p) in sorted_projection(scene, state, intr, params) {
        let g = &scene.gaussians[idx];
        let q_max = 2.0 * (g.opacity.min(params.alpha_max) / params.alpha_min).ln();
        if !(q_max > 0.0) {
            continue;
        }
        let rx = (q_max * p.cov2d[0]).sqrt();
        let ry = (q_max * p.cov2d[2]).sqrt();
        let c0 = ((p.mean2d.0 - rx - 0.5).floor().max(0.0)) as usize;
        let c1 = ((p.mean2d.0 + rx + 0.5).ceil().min(w as f64)).max(0.0) as usize;
        let r0 = ((p.mean2d.1 - ry - 0.5).floor().max(0.0)) as usize;
        let r1 = ((p.mean2d.1 + ry + 0.5).ceil().min(h as f64)).max(0.0) as usize;
        let rgb = g.rgb.map(|c| c as f64);
        for row in r0..r1 {
            for col in c0..c1 {
                let Some(a) = splat_alpha(&p, g.opacity, col as f64 + 0.5, row as f64 + 0.5, params) else {
                    continue;
                };
                let i = row * w + col;
                let t = trans[i];
                for ch in 0..3 {
                    color[i][ch] += t * a * rgb[ch];
                }
                trans[i] = t * (1.0 - a);
            }
        }
    }
    let mut img = Image::filled(w, h, [0.0; 3]);
    for row in 0..h {
        let bg = scene.background.color_at(intr.pixel_ray_body(0, row)[2]);
        for col in 0..w {
            let i = row * w + col;
            let mut px = [0.0f32; 3];
            for ch in 0..3 {
                px[ch] = (color[i][ch] + trans[i] * bg[ch] as f64) as f32;
            }
            img.set_pixel(col, row, px);
        }
    }
    img.clamp01();
    img
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplatStyle {
    pub gaussians_per_target: usize,
    pub target_opacity: f64,
    /// Std-dev = factor · radius / √n.
    pub sigma_factor: f64,
    pub room_half_extent: f64,
    pub room_height: f64,
    pub room_splats: usize,
    pub room_seed: u64,
}

impl Default for SplatStyle {
    fn default() -> Self {
        Self {
            gaussians_per_target: 256,
            target_opacity: 0.9,
            sigma_factor: 2.0,
            room_half_extent: 7.0,
            room_height: 4.0,
            room_splats: 1200,
            room_seed: 5150,
        }
    }
}

/// Splat model of a target sphere: isotropic Gaussians on a shell just
/// inside its surface, pulled in by 2σ so the blurred silhouette keeps the
/// sphere's apparent size. A single Gaussian degenerates to one blob at the
/// center with σ = r/2.
pub fn sphere_to_splats(target: &Target, n: usize, seed: u64, style: &SplatStyle) -> Vec<Gaussian3D> {
    assert!(n >= 1, "need at least one Gaussian");
    let rgb = target.color.rgb();
    if n == 1 {
        return vec![Gaussian3D::isotropic(target.position, target.radius / 2.0, style.target_opacity, rgb)];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = style.sigma_factor * target.radius / (n as f64).sqrt();
    let shell = (target.radius - 2.0 * sigma).max(0.5 * target.radius);
    (0..n)
        .map(|_| {
            let dir = loop {
                let v: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if l > 1e-9 {
                    break v.map(|c| c / l);
                }
            };
            let mean = [
                target.position[0] + shell * dir[0],
                target.position[1] + shell * dir[1],
                target.position[2] + shell * dir[2],
            ];
            Gaussian3D::isotropic(mean, sigma, style.target_opacity, rgb)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f32; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(1.0)) * 6.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) as f32, (g + m) as f32, (b + m) as f32]
}

/// Cluttered room shell: flat anisotropic splats on the four walls and the
/// floor with muted random colors.
pub fn room_splats(style: &SplatStyle) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(style.room_seed);
    let l = style.room_half_extent;
    let mut out = Vec::with_capacity(style.room_splats);
    for _ in 0..style.room_splats {
        let face = rng.random_range(0..5u32);
        let (a, b) = (rng.random_range(-l..l), rng.random_range(0.0..style.room_height));
        let (mean, scale) = match face {
            0 => ([l, a, b], [0.02, 0.0, 0.0]),
            1 => ([-l, a, b], [0.02, 0.0, 0.0]),
            2 => ([a, l, b], [0.0, 0.02, 0.0]),
            3 => ([a, -l, b], [0.0, 0.02, 0.0]),
            _ => ([a, rng.random_range(-l..l), 0.0], [0.0, 0.0, 0.02]),
        };
        let size = rng.random_range(0.15..0.6);
        let scale = scale.map(|s| if s == 0.0 { size * rng.random_range(0.5..1.5) } else { s });
        let rgb = hsv_to_rgb(
            rng.random::<f64>(),
            rng.random_range(0.05..0.45),
            rng.random_range(0.25..0.8),
        );
        out.push(Gaussian3D {
            mean,
            scale,
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity: rng.random_range(0.5..0.95),
            rgb,
        });
    }
    out
}

/// Splat counterpart of a [`Scene`]: a fixed room plus one splat model per
/// target, assembled per frame from the scene's visible targets.
#[derive(Debug, Clone)]
pub struct SplatWorld {
    room: Vec<Gaussian3D>,
    targets: Vec<Vec<Gaussian3D>>,
    pub background: Background,
}

impl SplatWorld {
    pub fn build(scene: &Scene, style: &SplatStyle) -> Self {
        let targets = scene
            .targets()
            .iter()
            .enumerate()
            .map(|(i, t)| sphere_to_splats(t, style.gaussians_per_target, style.room_seed ^ (i as u64 + 1), style))
            .collect();
        Self {
            room: room_splats(style),
            targets,
            background: Background {
                sky: [0.36, 0.34, 0.31],
                ground: [0.30, 0.28, 0.26],
                sharpness: 2.0,
            },
        }
    }

    /// Splat scene for the scene's current active window.
    pub fn scene_for(&self, scene: &Scene) -> SplatScene {
        let mut gaussians = self.room.clone();
        if !scene.targets().is_empty() {
            let lo = scene.active_index().saturating_sub(1);
            let hi = (scene.active_index() + scene.lookahead).min(scene.targets().len() - 1);
            for t in &self.targets[lo..=hi] {
                gaussians.extend_from_slice(t);
            }
        }
        SplatScene {
            gaussians,
            background: self.background,
        }
    }
}

/// Which image formation model drives an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RendererKind {
    Plain,
    Splat,
}

impl RendererKind {
    pub fn name(self) -> &'static str {
        match self {
            RendererKind::Plain => "plain",
            RendererKind::Splat => "splat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plain" => Some(RendererKind::Plain),
            "splat" => Some(RendererKind::Splat),
            _ => None,
        }
    }
}

/// A renderer bound to one scene's geometry.
#[derive(Debug, Clone)]
pub enum Renderer {
    Plain,
    Splat { world: SplatWorld, params: SplatRenderParams },
}

impl Renderer {
    pub fn for_scene(kind: RendererKind, scene: &Scene, style: &SplatStyle, params: &SplatRenderParams) -> Self {
        match kind {
            RendererKind::Plain => Renderer::Plain,
            RendererKind::Splat => Renderer::Splat {
                world: SplatWorld::build(scene, style),
                params: *params,
            },
        }
    }

    pub fn kind(&self) -> RendererKind {
        match self {
            Renderer::Plain => RendererKind::Plain,
            Renderer::Splat { .. } => RendererKind::Splat,
        }
    }

    pub fn render(&self, scene: &Scene, state: &QuadState, intr: &CameraIntrinsics) -> Image {
        match self {
            Renderer::Plain => crate::scene::render_plain(scene, state, intr),
            Renderer::Splat { world, params } => render_splats(&world.scene_for(scene), state, intr, params),
        }
    }
}

/// Serialises splats as `SPLATS01`, u32 count, then little-endian f32
/// records: mean(3) scale(3) quaternion(4, wxyz) opacity(1) rgb(3).
pub fn encode_splats(gaussians: &[Gaussian3D]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + gaussians.len() * RECORD_FLOATS * 4);
    out.extend_from_slice(SPLAT_MAGIC);
    out.extend_from_slice(&(gaussians.len() as u32).to_le_bytes());
    for g in gaussians {
        let fields = g
            .mean
            .iter()
            .chain(&g.scale)
            .chain(&g.rotation)
            .copied()
            .chain([g.opacity])
            .chain(g.rgb.iter().map(|&c| c as f64));
        for v in fields {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_splats(bytes: &[u8]) -> Result<Vec<Gaussian3D>, SplatError> {
    if bytes.len() < 12 {
        if bytes.len() >= 8 && &bytes[..8] != SPLAT_MAGIC {
            return Err(SplatError::BadMagic);
        }
        return Err(SplatError::Truncated { need: 12, have: bytes.len() });
    }
    if &bytes[..8] != SPLAT_MAGIC {
        return Err(SplatError::BadMagic);
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let need = count
        .checked_mul(RECORD_FLOATS * 4)
        .and_then(|n| n.checked_add(12))
        .ok_or(SplatError::Truncated { need: usize::MAX, have: bytes.len() })?;
    if bytes.len() < need {
        return Err(SplatError::Truncated { need, have: bytes.len() });
    }
    if bytes.len() > need {
        return Err(SplatError::TrailingBytes(bytes.len() - need));
    }
    let mut out = Vec::with_capacity(count);
    for (index, rec) in bytes[12..].chunks_exact(RECORD_FLOATS * 4).enumerate() {
        let f: Vec<f64> = rec
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let q = [f[6], f[7], f[8], f[9]];
        let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(qn > 1e-6) || !qn.is_finite() {
            return Err(SplatError::BadRecord { index, reason: format!("degenerate quaternion {q:?}") });
        }
        let g = Gaussian3D {
            mean: [f[0], f[1], f[2]],
            scale: [f[3], f[4], f[5]],
            rotation: q.map(|v| v / qn),
            opacity: f[10],
            rgb: [f[11] as f32, f[12] as f32, f[13] as f32],
        };
        g.validate().map_err(|reason| SplatError::BadRecord { index, reason })?;
        out.push(g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::TargetColor;

    fn cam_at_origin() -> QuadState {
        QuadState::at([0.0, 0.0, 0.0], 0.0)
    }

    #[test]
    fn on_axis_isotropic_projection() {
        let intr = CameraIntrinsics::default();
        let params = SplatRenderParams::default();
        let g = Gaussian3D::isotropic([3.0, 0.0, 0.0], 0.1, 1.0, [1.0; 3]);
        let p = project_gaussian(&g, &cam_at_origin(), &intr, &params).unwrap();
        assert!((p.mean2d.0 - 128.0).abs() < 1e-12 && (p.mean2d.1 - 72.0).abs() < 1e-12);
        assert!((p.cov2d[0] - p.cov2d[2]).abs() < 1e-9);
        assert!(p.cov2d[1].abs() < 1e-12);
        assert!((p.depth - 3.0).abs() < 1e-12);
    }

    #[test]
    fn projected_std_scales_inversely_with_depth() {
        let intr = CameraIntrinsics::default();
        let params = SplatRenderParams { cov_floor: 0.0, ..Default::default() };
        let f = intr.focal_px();
        let sigma = 0.05;
        let std_at = |z: f64, off: f64| {
            let g = Gaussian3D::isotropic([z, off, 0.2], sigma, 1.0, [1.0; 3]);
            let p = project_gaussian(&g, &cam_at_origin(), &intr, &params).unwrap();
            p.cov2d[0].sqrt()
        };
        for z in [0.5, 1.0, 2.0, 4.0] {
            let s = std_at(z, 0.0);
            assert!((s - f * sigma / z).abs() / (f * sigma / z) < 0.05, "z={z}: {s}");
            let ratio = s / std_at(2.0 * z, 0.0);
            assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
        }
    }

    #[test]
    fn behind_camera_is_culled() {
        let intr = CameraIntrinsics::default();
        let g = Gaussian3D::isotropic([-1.0, 0.0, 0.0], 0.1, 1.0, [1.0; 3]);
        assert_eq!(project_gaussian(&g, &cam_at_origin(), &intr, &SplatRenderParams::default()), Err(Culled));
    }

    #[test]
    fn full_opacity_pixel_takes_splat_color() {
        let intr = CameraIntrinsics::desk();
        let params = SplatRenderParams { alpha_max: 1.0, ..Default::default() };
        // center pixel (32,18) has center (32.5,18.5): place the splat there
        let f = intr.focal_px();
        let z = 2.0;
        let mean = [z, -0.5 * z / f, -0.5 * z / f];
        let scene = SplatScene {
            gaussians: vec![Gaussian3D::isotropic(mean, 0.2, 1.0, [0.2, 0.7, 0.1])],
            background: Background::default(),
        };
        let img = render_splats(&scene, &cam_at_origin(), &intr, &params);
        let px = img.pixel(32, 18);
        for (a, b) in px.iter().zip([0.2f32, 0.7, 0.1]) {
            assert!((a - b).abs() < 1e-6, "{px:?}");
        }
    }

    #[test]
    fn two_half_alpha_layers() {
        let intr = CameraIntrinsics::desk();
        let params = SplatRenderParams::default();
        let f = intr.focal_px();
        let at = |z: f64| [z, -0.5 * z / f, -0.5 * z / f];
        let (c1, c2) = ([1.0f32, 0.0, 0.0], [0.0f32, 0.0, 1.0]);
        let scene = SplatScene {
            gaussians: vec![
                Gaussian3D::isotropic(at(3.0), 0.3, 0.5, c2),
                Gaussian3D::isotropic(at(2.0), 0.3, 0.5, c1),
            ],
            background: Background::default(),
        };
        let img = render_splats(&scene, &cam_at_origin(), &intr, &params);
        let bg = scene.background.color_at(intr.pixel_ray_body(32, 18)[2]);
        let px = img.pixel(32, 18);
        for ch in 0..3 {
            let expected = 0.5 * c1[ch] + 0.25 * c2[ch] + 0.25 * bg[ch];
            assert!((px[ch] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn single_gaussian_sphere_degenerate_case() {
        let t = Target { position: [1.0, 2.0, 3.0], radius: 0.4, color: TargetColor::Blue };
        let s = sphere_to_splats(&t, 1, 0, &SplatStyle::default());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean, t.position);
        assert!((s[0].scale[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sphere_splats_are_deterministic() {
        let t = Target { position: [1.0, 2.0, 3.0], radius: 0.4, color: TargetColor::Red };
        let style = SplatStyle::default();
        let a = sphere_to_splats(&t, 512, 42, &style);
        assert_eq!(a, sphere_to_splats(&t, 512, 42, &style));
        assert_ne!(a, sphere_to_splats(&t, 512, 43, &style));
        for g in &a {
            g.validate().unwrap();
            let d = crate::simcore::norm(crate::simcore::sub(g.mean, t.position));
            assert!(d < 0.4 && d > 0.3, "{d}");
        }
    }

    #[test]
    fn codec_rejects_garbage() {
        assert_eq!(decode_splats(b"NOTSPLAT\0\0\0\0"), Err(SplatError::BadMagic));
        assert!(matches!(decode_splats(b"SPLATS01\x01\0\0\0"), Err(SplatError::Truncated { .. })));
        let mut ok = encode_splats(&[Gaussian3D::isotropic([0.0; 3], 0.1, 0.5, [0.5; 3])]);
        assert_eq!(decode_splats(&ok).unwrap().len(), 1);
        ok.push(0);
        assert_eq!(decode_splats(&ok), Err(SplatError::TrailingBytes(1)));
        let mut neg = encode_splats(&[Gaussian3D::isotropic([0.0; 3], 0.1, 0.5, [0.5; 3])]);
        neg[12 + 12..12 + 16].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(decode_splats(&neg), Err(SplatError::BadRecord { index: 0, .. })));
    }

    #[test]
    fn room_splats_are_valid() {
        for g in room_splats(&SplatStyle::default()) {
            g.validate().unwrap();
        }
    }
}
