//! Convolutional backbone: valid convolutions with ReLU, optional adaptive
//! average pooling, flatten.

use super::ops::{adaptive_avg_pool, adaptive_avg_pool_backward, col2im, im2col, matmul, ConvGeom};
use super::{init_uniform, NnError, ParamLayout, Real};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnSpec {
    /// Input (channels, height, width).
    pub input: (usize, usize, usize),
    pub layers: Vec<ConvSpec>,
    /// Adaptive average pool applied to the last conv output.
    pub pool: Option<(usize, usize)>,
}

impl CnnSpec {
    /// Five-layer backbone for 144×256 frames.
    pub fn full() -> Self {
        let c = |out_c, k, stride| ConvSpec { out_c, k, stride };
        Self {
            input: (3, 144, 256),
            layers: vec![c(24, 5, 2), c(36, 5, 2), c(48, 5, 2), c(64, 3, 1), c(16, 3, 2)],
            pool: Some((2, 4)),
        }
    }

    /// Shrunk backbone for 36×64 frames.
    pub fn desk() -> Self {
        let c = |out_c, k, stride| ConvSpec { out_c, k, stride };
        Self {
            input: (3, 36, 64),
            layers: vec![c(8, 5, 2), c(16, 3, 2), c(16, 3, 1), c(8, 3, 1)],
            pool: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub geom: ConvGeom,
    pub out_c: usize,
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn {
    pub spec: CnnSpec,
    pub layers: Vec<ConvLayer>,
    pub feat_dim: usize,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CnnCache<T> {
    pub n: usize,
    /// `acts[i]` is the input of layer i; the last entry is the final
    /// post-ReLU conv output.
    pub acts: Vec<Vec<T>>,
}

impl Cnn {
    pub fn build(spec: &CnnSpec, layout: &mut ParamLayout, prefix: &str) -> Result<Self, NnError> {
        let (mut c, mut h, mut w) = spec.input;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            let geom = ConvGeom::new(c, h, w, l.k, l.stride)
                .ok_or_else(|| NnError::Config(format!("conv{i}: {}x{} kernel does not fit {h}x{w}", l.k, l.k)))?;
            let wo = layout.add(format!("{prefix}conv{i}.weight"), &[l.out_c, c, l.k, l.k]);
            let bo = layout.add(format!("{prefix}conv{i}.bias"), &[l.out_c]);
            layers.push(ConvLayer { geom, out_c: l.out_c, w: wo, b: bo });
            c = l.out_c;
            h = geom.out_h;
            w = geom.out_w;
        }
        let feat_dim = match spec.pool {
            Some((ph, pw)) => {
                if ph == 0 || pw == 0 || ph > h || pw > w {
                    return Err(NnError::Config(format!("pool {ph}x{pw} does not fit {h}x{w}")));
                }
                c * ph * pw
            }
            None => c * h * w,
        };
        Ok(Self {
            spec: spec.clone(),
            layers,
            feat_dim,
        })
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, params: &mut [T], rng: &mut R) {
        for l in &self.layers {
            let fan_in = l.geom.patch();
            init_uniform(&mut params[l.w..l.w + l.out_c * fan_in], fan_in, rng);
            init_uniform(&mut params[l.b..l.b + l.out_c], fan_in, rng);
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.out_c * l.geom.patch() + l.out_c).sum()
    }

    /// Spatial output size of each conv layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, usize)> {
        self.layers.iter().map(|l| (l.out_c, l.geom.out_h, l.geom.out_w)).collect()
    }

    pub fn input_len(&self) -> usize {
        let (c, h, w) = self.spec.input;
        c * h * w
    }

    /// Runs `n` frames given as `[C, N, H, W]`; returns features `[N, F]`.
    pub fn forward<T: Real>(&self, p: &[T], x: Vec<T>, n: usize) -> Result<(Vec<T>, CnnCache<T>), NnError> {
        if x.len() != self.input_len() * n {
            let (c, h, w) = self.spec.input;
            return Err(NnError::Shape {
                what: "cnn input".into(),
                expected: vec![c, n, h, w],
                actual: vec![x.len()],
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        let mut cols = Vec::new();
        for l in &self.layers {
            let g = &l.geom;
            let np = n * g.out_pixels();
            cols.clear();
            cols.resize(g.patch() * np, T::zero());
            im2col(g, n, acts.last().unwrap(), &mut cols);
            let mut y = vec![T::zero(); l.out_c * np];
            matmul(l.out_c, g.patch(), np, &p[l.w..], false, &cols, false, &mut y, false);
            for (co, row) in y.chunks_exact_mut(np).enumerate() {
                let b = p[l.b + co];
                for v in row {
                    *v = (*v + b).max(T::zero());
                }
            }
            acts.push(y);
        }
        let last = self.layers.last().expect("at least one conv layer");
        let (c, h, w) = (last.out_c, last.geom.out_h, last.geom.out_w);
        let out = acts.last().unwrap();
        let (pooled, ph, pw) = match self.spec.pool {
            Some((ph, pw)) => (adaptive_avg_pool(out, c * n, h, w, ph, pw), ph, pw),
            None => (out.clone(), h, w),
        };
        // [C, N, ph, pw] -> [N, C·ph·pw]
        let plane = ph * pw;
        let mut feats = vec![T::zero(); n * self.feat_dim];
        for ch in 0..c {
            for f in 0..n {
                let src = &pooled[(ch * n + f) * plane..(ch * n + f + 1) * plane];
                feats[f * self.feat_dim + ch * plane..f * self.feat_dim + (ch + 1) * plane].copy_from_slice(src);
            }
        }
        Ok((feats, CnnCache { n, acts }))
    }

    /// Accumulates parameter gradients from `dfeat` (`[N, F]`). Input
    /// gradients are not needed and not computed.
    pub fn backward<T: Real>(&self, p: &[T], cache: &CnnCache<T>, dfeat: &[T], grad: &mut [T]) {
        self.backward_impl(p, cache, dfeat, grad, false);
    }

    /// Like [`Cnn::backward`] but also returns the gradient w.r.t. the input.
    pub fn backward_with_input<T: Real>(&self, p: &[T], cache: &CnnCache<T>, dfeat: &[T], grad: &mut [T]) -> Vec<T> {
        self.backward_impl(p, cache, dfeat, grad, true).expect("input gradient requested")
    }

    fn backward_impl<T: Real>(
        &self,
        p: &[T],
        cache: &CnnCache<T>,
        dfeat: &[T],
        grad: &mut [T],
        want_input: bool,
    ) -> Option<Vec<T>> {
        let n = cache.n;
        let last = self.layers.last().unwrap();
        let (c, h, w) = (last.out_c, last.geom.out_h, last.geom.out_w);
        let (ph, pw) = self.spec.pool.unwrap_or((h, w));
        let plane = ph * pw;
        let mut dpooled = vec![T::zero(); c * n * plane];
        for ch in 0..c {
            for f in 0..n {
                dpooled[(ch * n + f) * plane..(ch * n + f + 1) * plane]
                    .copy_from_slice(&dfeat[f * self.feat_dim + ch * plane..f * self.feat_dim + (ch + 1) * plane]);
            }
        }
        let mut dy = match self.spec.pool {
            Some(_) => adaptive_avg_pool_backward(&dpooled, c * n, h, w, ph, pw),
            None => dpooled,
        };
        let mut cols = Vec::new();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let g = &l.geom;
            let np = n * g.out_pixels();
            let y = &cache.acts[i + 1];
            for (d, v) in dy.iter_mut().zip(y) {
                if *v <= T::zero() {
                    *d = T::zero();
                }
            }
            acc_row_sums(&dy, np, &mut grad[l.b..l.b + l.out_c]);
            cols.clear();
            cols.resize(g.patch() * np, T::zero());
            im2col(g, n, &cache.acts[i], &mut cols);
            // dW (out_c × patch) += dY (out_c × np) · colsᵀ
            matmul(l.out_c, np, g.patch(), &dy, false, &cols, true, &mut grad[l.w..], true);
            if i == 0 && !want_input {
                return None;
            }
            // dcols (patch × np) = Wᵀ · dY
            matmul(g.patch(), l.out_c, np, &p[l.w..], true, &dy, false, &mut cols, false);
            let mut dx = vec![T::zero(); g.in_c * n * g.in_h * g.in_w];
            col2im(g, n, &cols, &mut dx);
            dy = dx;
        }
        Some(dy)
    }
}

fn acc_row_sums<T: Real>(dy: &[T], n: usize, db: &mut [T]) {
    for (d, row) in db.iter_mut().zip(dy.chunks_exact(n)) {
        *d = *d + row.iter().copied().sum::<T>();
    }
}

/// Converts frames (each HWC interleaved u8) into a `[3, N, H, W]` block
/// scaled to [0,1].
pub fn frames_to_block<T: Real>(frames: &[&[u8]], h: usize, w: usize) -> Vec<T> {
    let n = frames.len();
    let plane = h * w;
    let mut out = vec![T::zero(); 3 * n * plane];
    let scale = T::of(1.0 / 255.0);
    for (f, px) in frames.iter().enumerate() {
        debug_assert_eq!(px.len(), 3 * plane);
        for (i, rgb) in px.chunks_exact(3).enumerate() {
            for ch in 0..3 {
                out[(ch * n + f) * plane + i] = T::of(rgb[ch] as f64) * scale;
            }
        }
    }
    out
}

/// Same as [`frames_to_block`] for float images.
pub fn images_to_block<T: Real>(frames: &[&[f32]], h: usize, w: usize) -> Vec<T> {
    let n = frames.len();
    let plane = h * w;
    let mut out = vec![T::zero(); 3 * n * plane];
    for (f, px) in frames.iter().enumerate() {
        for (i, rgb) in px.chunks_exact(3).enumerate() {
            for ch in 0..3 {
                out[(ch * n + f) * plane + i] = T::of(rgb[ch] as f64);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_backbone_shapes_and_count() {
        let mut layout = ParamLayout::default();
        let cnn = Cnn::build(&CnnSpec::full(), &mut layout, "").unwrap();
        assert_eq!(
            cnn.layer_shapes(),
            vec![(24, 70, 126), (36, 33, 61), (48, 15, 29), (64, 13, 27), (16, 6, 13)]
        );
        assert_eq!(cnn.feat_dim, 128);
        assert_eq!(cnn.param_count(), 103_652);
        assert_eq!(layout.total, 103_652);
    }

    #[test]
    fn one_by_one_conv_has_two_params() {
        let spec = CnnSpec {
            input: (1, 4, 4),
            layers: vec![ConvSpec { out_c: 1, k: 1, stride: 1 }],
            pool: None,
        };
        let mut layout = ParamLayout::default();
        assert_eq!(Cnn::build(&spec, &mut layout, "").unwrap().param_count(), 2);
    }

    #[test]
    fn rejects_wrong_input_size() {
        let mut layout = ParamLayout::default();
        let cnn = Cnn::build(&CnnSpec::desk(), &mut layout, "").unwrap();
        let p = vec![0.0f32; layout.total];
        assert!(matches!(cnn.forward(&p, vec![0.0; 10], 1), Err(NnError::Shape { .. })));
    }

    #[test]
    fn matches_direct_convolution() {
        use rand::SeedableRng;
        let spec = CnnSpec {
            input: (2, 7, 9),
            layers: vec![ConvSpec { out_c: 3, k: 3, stride: 2 }],
            pool: None,
        };
        let mut layout = ParamLayout::default();
        let cnn = Cnn::build(&spec, &mut layout, "").unwrap();
        let mut p = vec![0.0f64; layout.total];
        cnn.init(&mut p, &mut rand_chacha::ChaCha8Rng::seed_from_u64(4));
        let n = 2;
        let x: Vec<f64> = (0..2 * n * 63).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.3).collect();
        let (feats, _) = cnn.forward(&p, x.clone(), n).unwrap();
        let g = cnn.layers[0].geom;
        for f in 0..n {
            for co in 0..3 {
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        let mut s = p[cnn.layers[0].b + co];
                        for ci in 0..2 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let wv = p[cnn.layers[0].w + ((co * 2 + ci) * 3 + ky) * 3 + kx];
                                    s += wv * x[(ci * n + f) * 63 + (oy * 2 + ky) * 9 + ox * 2 + kx];
                                }
                            }
                        }
                        let got = feats[f * cnn.feat_dim + (co * g.out_h + oy) * g.out_w + ox];
                        assert!((got - s.max(0.0)).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
