//! Closed-form continuous-time cell:
//! x' = σ(−f·δt)⊙g + (1 − σ(−f·δt))⊙h with f = softplus(·), g, h = tanh(·).

use super::ncp::WiringMask;
use super::ops::{linear_forward, linear_input_grad, linear_param_grads};
use super::{init_uniform, sigmoid, softplus, NnError, ParamLayout, Real};
use rand::Rng;
use std::borrow::Cow;

/// Cell update for one component.
#[inline]
pub fn cfc_blend<T: Real>(f: T, g: T, h: T, dt: T) -> T {
    let s = sigmoid(-(f * dt));
    s * g + (T::one() - s) * h
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfcHead {
    pub input: usize,
    pub state: usize,
    /// Width of the shared tanh layer feeding the heads; 0 disables it.
    pub backbone: usize,
    pub out: usize,
    /// When set, outputs are the first `out` state components instead of a
    /// linear readout.
    pub motor_output: bool,
    pub mask: Option<WiringMask>,
    bb: Option<(usize, usize)>,
    fw: (usize, usize),
    gw: (usize, usize),
    hw: (usize, usize),
    ow: Option<(usize, usize)>,
}

/// Per-step activations for backpropagation.
#[derive(Debug, Clone)]
pub struct CfcStepCache<T> {
    pub rows: usize,
    inp: Vec<T>,
    z: Vec<T>,
    fpre: Vec<T>,
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub h: Vec<T>,
    s: Vec<T>,
    dt: Vec<T>,
    pub x: Vec<T>,
}

impl CfcHead {
    pub fn build(
        input: usize,
        state: usize,
        backbone: usize,
        out: usize,
        mask: Option<WiringMask>,
        layout: &mut ParamLayout,
    ) -> Result<Self, NnError> {
        let cat = input + state;
        if let Some(m) = &mask {
            if backbone != 0 || m.rows != state || m.cols != cat || m.sensory != input {
                return Err(NnError::Config(format!(
                    "wiring mask {}x{} incompatible with state {state}, input {input}, backbone {backbone}",
                    m.rows, m.cols
                )));
            }
            if out > state {
                return Err(NnError::Config("more motor outputs than neurons".into()));
            }
        }
        let motor_output = mask.is_some();
        let bb = (backbone > 0).then(|| {
            (
                layout.add("cfc.backbone.weight", &[backbone, cat]),
                layout.add("cfc.backbone.bias", &[backbone]),
            )
        });
        let u = if backbone > 0 { backbone } else { cat };
        let mut head = |name: &str| {
            (
                layout.add(format!("cfc.{name}.weight"), &[state, u]),
                layout.add(format!("cfc.{name}.bias"), &[state]),
            )
        };
        let fw = head("f");
        let gw = head("g");
        let hw = head("h");
        let ow = (!motor_output).then(|| {
            (
                layout.add("cfc.out.weight", &[out, state]),
                layout.add("cfc.out.bias", &[out]),
            )
        });
        Ok(Self {
            input,
            state,
            backbone,
            out,
            motor_output,
            mask,
            bb,
            fw,
            gw,
            hw,
            ow,
        })
    }

    fn u_dim(&self) -> usize {
        if self.backbone > 0 {
            self.backbone
        } else {
            self.input + self.state
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, p: &mut [T], rng: &mut R) {
        let cat = self.input + self.state;
        if let Some((w, b)) = self.bb {
            init_uniform(&mut p[w..w + self.backbone * cat], cat, rng);
            init_uniform(&mut p[b..b + self.backbone], cat, rng);
        }
        let u = self.u_dim();
        for (w, b) in [self.fw, self.gw, self.hw] {
            init_uniform(&mut p[w..w + self.state * u], u, rng);
            init_uniform(&mut p[b..b + self.state], u, rng);
            if let Some(m) = &self.mask {
                for (v, on) in p[w..w + self.state * u].iter_mut().zip(&m.bits) {
                    if !on {
                        *v = T::zero();
                    }
                }
            }
        }
        if let Some((w, b)) = self.ow {
            init_uniform(&mut p[w..w + self.out * self.state], self.state, rng);
            init_uniform(&mut p[b..b + self.out], self.state, rng);
        }
    }

    fn head_weight<'a, T: Real>(&self, p: &'a [T], w: usize) -> Cow<'a, [T]> {
        let n = self.state * self.u_dim();
        match &self.mask {
            None => Cow::Borrowed(&p[w..w + n]),
            Some(m) => Cow::Owned(
                p[w..w + n]
                    .iter()
                    .zip(&m.bits)
                    .map(|(v, on)| if *on { *v } else { T::zero() })
                    .collect(),
            ),
        }
    }

    /// One cell update for `rows` independent sequences.
    pub fn step<T: Real>(&self, p: &[T], x: &[T], feat: &[T], dt: &[T], rows: usize) -> CfcStepCache<T> {
        let ws = [self.head_weight(p, self.fw.0), self.head_weight(p, self.gw.0), self.head_weight(p, self.hw.0)];
        self.step_with(p, &ws, x, feat, dt, rows)
    }

    fn step_with<T: Real>(
        &self,
        p: &[T],
        ws: &[Cow<'_, [T]>; 3],
        x: &[T],
        feat: &[T],
        dt: &[T],
        rows: usize,
    ) -> CfcStepCache<T> {
        let (fi, s_n) = (self.input, self.state);
        let cat = fi + s_n;
        let mut inp = vec![T::zero(); rows * cat];
        for r in 0..rows {
            inp[r * cat..r * cat + fi].copy_from_slice(&feat[r * fi..(r + 1) * fi]);
            inp[r * cat + fi..(r + 1) * cat].copy_from_slice(&x[r * s_n..(r + 1) * s_n]);
        }
        let u_dim = self.u_dim();
        let z = match self.bb {
            Some((w, b)) => {
                let mut z = vec![T::zero(); rows * u_dim];
                linear_forward(&p[w..], &p[b..b + u_dim], &inp, rows, cat, u_dim, &mut z);
                z.iter_mut().for_each(|v| *v = v.tanh());
                z
            }
            None => Vec::new(),
        };
        let u: &[T] = if self.bb.is_some() { &z } else { &inp };
        let mut fpre = vec![T::zero(); rows * s_n];
        let mut g = vec![T::zero(); rows * s_n];
        let mut h = vec![T::zero(); rows * s_n];
        linear_forward(&ws[0], &p[self.fw.1..self.fw.1 + s_n], u, rows, u_dim, s_n, &mut fpre);
        linear_forward(&ws[1], &p[self.gw.1..self.gw.1 + s_n], u, rows, u_dim, s_n, &mut g);
        linear_forward(&ws[2], &p[self.hw.1..self.hw.1 + s_n], u, rows, u_dim, s_n, &mut h);
        let f: Vec<T> = fpre.iter().map(|&a| softplus(a)).collect();
        g.iter_mut().for_each(|v| *v = v.tanh());
        h.iter_mut().for_each(|v| *v = v.tanh());
        let mut s = vec![T::zero(); rows * s_n];
        let mut xn = vec![T::zero(); rows * s_n];
        for r in 0..rows {
            for j in 0..s_n {
                let i = r * s_n + j;
                s[i] = sigmoid(-(f[i] * dt[r]));
                xn[i] = s[i] * g[i] + (T::one() - s[i]) * h[i];
            }
        }
        CfcStepCache {
            rows,
            inp,
            z,
            fpre,
            f,
            g,
            h,
            s,
            dt: dt[..rows].to_vec(),
            x: xn,
        }
    }

    pub fn readout<T: Real>(&self, p: &[T], x: &[T], rows: usize, y: &mut [T]) {
        match self.ow {
            Some((w, b)) => linear_forward(&p[w..], &p[b..b + self.out], x, rows, self.state, self.out, y),
            None => {
                for r in 0..rows {
                    y[r * self.out..(r + 1) * self.out].copy_from_slice(&x[r * self.state..r * self.state + self.out]);
                }
            }
        }
    }

    /// Unrolls over `steps` × `rows` with zero initial state. `feats` is
    /// `[steps·rows, F]` ordered step-major; returns outputs `[steps·rows, out]`.
    pub fn forward_seq<T: Real>(
        &self,
        p: &[T],
        feats: &[T],
        dts: &[T],
        rows: usize,
        steps: usize,
    ) -> (Vec<T>, Vec<CfcStepCache<T>>) {
        let ws = [self.head_weight(p, self.fw.0), self.head_weight(p, self.gw.0), self.head_weight(p, self.hw.0)];
        let mut x = vec![T::zero(); rows * self.state];
        let mut y = vec![T::zero(); rows * steps * self.out];
        let mut caches = Vec::with_capacity(steps);
        for t in 0..steps {
            let c = self.step_with(
                p,
                &ws,
                &x,
                &feats[t * rows * self.input..(t + 1) * rows * self.input],
                &dts[t * rows..(t + 1) * rows],
                rows,
            );
            self.readout(p, &c.x, rows, &mut y[t * rows * self.out..(t + 1) * rows * self.out]);
            x.clone_from(&c.x);
            caches.push(c);
        }
        (y, caches)
    }

    /// Backpropagation through time. Accumulates parameter gradients into
    /// `grad` and returns d(loss)/d(feats).
    pub fn backward_seq<T: Real>(&self, p: &[T], caches: &[CfcStepCache<T>], dy: &[T], grad: &mut [T]) -> Vec<T> {
        let steps = caches.len();
        let rows = caches.first().map_or(0, |c| c.rows);
        let (fi, s_n, u_dim) = (self.input, self.state, self.u_dim());
        let cat = fi + s_n;
        let ws = [self.head_weight(p, self.fw.0), self.head_weight(p, self.gw.0), self.head_weight(p, self.hw.0)];
        let mut dfeats = vec![T::zero(); steps * rows * fi];
        let mut dx_next = vec![T::zero(); rows * s_n];
        let mut da = [vec![T::zero(); rows * s_n], vec![T::zero(); rows * s_n], vec![T::zero(); rows * s_n]];
        let mut du = vec![T::zero(); rows * u_dim];
        for t in (0..steps).rev() {
            let c = &caches[t];
            let dyt = &dy[t * rows * self.out..(t + 1) * rows * self.out];
            let mut dx = dx_next.clone();
            match self.ow {
                Some((w, b)) => {
                    let (gw, gb) = split_two(grad, w, self.out * s_n, b, self.out);
                    linear_param_grads(dyt, &c.x, rows, s_n, self.out, gw, gb);
                    linear_input_grad(&p[w..w + self.out * s_n], dyt, rows, s_n, self.out, &mut dx, true);
                }
                None => {
                    for r in 0..rows {
                        for j in 0..self.out {
                            dx[r * s_n + j] = dx[r * s_n + j] + dyt[r * self.out + j];
                        }
                    }
                }
            }
            for i in 0..rows * s_n {
                let r = i / s_n;
                let (s, g, h) = (c.s[i], c.g[i], c.h[i]);
                let dg = dx[i] * s;
                let dh = dx[i] * (T::one() - s);
                let ds = dx[i] * (g - h);
                let df = ds * (-(c.dt[r] * s * (T::one() - s)));
                da[0][i] = df * sigmoid(c.fpre[i]);
                da[1][i] = dg * (T::one() - g * g);
                da[2][i] = dh * (T::one() - h * h);
            }
            let u: &[T] = if self.bb.is_some() { &c.z } else { &c.inp };
            for (k, (w, b)) in [self.fw, self.gw, self.hw].into_iter().enumerate() {
                let (gw, gb) = split_two(grad, w, s_n * u_dim, b, s_n);
                linear_param_grads(&da[k], u, rows, u_dim, s_n, gw, gb);
                linear_input_grad(&ws[k], &da[k], rows, u_dim, s_n, &mut du, k > 0);
            }
            let dinp = match self.bb {
                Some((w, b)) => {
                    let mut dpre = du.clone();
                    for (d, z) in dpre.iter_mut().zip(&c.z) {
                        *d = *d * (T::one() - *z * *z);
                    }
                    let (gw, gb) = split_two(grad, w, u_dim * cat, b, u_dim);
                    linear_param_grads(&dpre, &c.inp, rows, cat, u_dim, gw, gb);
                    let mut dinp = vec![T::zero(); rows * cat];
                    linear_input_grad(&p[w..w + u_dim * cat], &dpre, rows, cat, u_dim, &mut dinp, false);
                    dinp
                }
                None => du.clone(),
            };
            for r in 0..rows {
                dfeats[(t * rows + r) * fi..(t * rows + r + 1) * fi].copy_from_slice(&dinp[r * cat..r * cat + fi]);
                dx_next[r * s_n..(r + 1) * s_n].copy_from_slice(&dinp[r * cat + fi..(r + 1) * cat]);
            }
        }
        if let Some(m) = &self.mask {
            for w in [self.fw.0, self.gw.0, self.hw.0] {
                for (v, on) in grad[w..w + s_n * u_dim].iter_mut().zip(&m.bits) {
                    if !on {
                        *v = T::zero();
                    }
                }
            }
        }
        dfeats
    }
}

/// Disjoint mutable views of two parameter ranges (`a` precedes `b`).
pub(crate) fn split_two<T>(buf: &mut [T], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [T], &mut [T]) {
    assert!(a + alen <= b, "ranges must be ordered and disjoint");
    let (lo, hi) = buf.split_at_mut(b);
    (&mut lo[a..a + alen], &mut hi[..blen])
}
