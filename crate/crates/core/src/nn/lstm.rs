//! LSTM head with a linear readout; optionally appends δt to the input.

use super::cfc::split_two;
use super::ops::{linear_forward, linear_input_grad, linear_param_grads};
use super::{init_uniform, sigmoid, NnError, ParamLayout, Real};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmHead {
    /// Feature width coming from the CNN.
    pub input: usize,
    pub hidden: usize,
    pub out: usize,
    pub with_dt: bool,
    w: usize,
    b: usize,
    ow: usize,
    ob: usize,
}

#[derive(Debug, Clone)]
pub struct LstmStepCache<T> {
    pub rows: usize,
    inp: Vec<T>,
    /// Gate activations i, f, g, o per row (4H).
    gates: Vec<T>,
    c_prev: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
}

impl LstmHead {
    pub fn build(input: usize, hidden: usize, out: usize, with_dt: bool, layout: &mut ParamLayout) -> Result<Self, NnError> {
        if hidden == 0 || out == 0 || input == 0 {
            return Err(NnError::Config("lstm sizes must be positive".into()));
        }
        let cat = input + with_dt as usize + hidden;
        let w = layout.add("lstm.weight", &[4 * hidden, cat]);
        let b = layout.add("lstm.bias", &[4 * hidden]);
        let ow = layout.add("lstm.out.weight", &[out, hidden]);
        let ob = layout.add("lstm.out.bias", &[out]);
        Ok(Self {
            input,
            hidden,
            out,
            with_dt,
            w,
            b,
            ow,
            ob,
        })
    }

    fn in_dim(&self) -> usize {
        self.input + self.with_dt as usize
    }

    fn cat(&self) -> usize {
        self.in_dim() + self.hidden
    }

    pub fn param_count(&self) -> usize {
        4 * (self.cat() * self.hidden + self.hidden) + self.out * self.hidden + self.out
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, p: &mut [T], rng: &mut R) {
        let (h, cat) = (self.hidden, self.cat());
        init_uniform(&mut p[self.w..self.w + 4 * h * cat], h, rng);
        init_uniform(&mut p[self.b..self.b + 4 * h], h, rng);
        // forget gate starts open
        for v in &mut p[self.b + h..self.b + 2 * h] {
            *v = *v + T::one();
        }
        init_uniform(&mut p[self.ow..self.ow + self.out * h], h, rng);
        init_uniform(&mut p[self.ob..self.ob + self.out], h, rng);
    }

    /// One update; `hc` holds (h, c) for `rows` sequences.
    pub fn step<T: Real>(&self, p: &[T], h: &[T], c: &[T], feat: &[T], dt: &[T], rows: usize) -> LstmStepCache<T> {
        let (hn, ind, cat) = (self.hidden, self.in_dim(), self.cat());
        let mut inp = vec![T::zero(); rows * cat];
        for r in 0..rows {
            let row = &mut inp[r * cat..(r + 1) * cat];
            row[..self.input].copy_from_slice(&feat[r * self.input..(r + 1) * self.input]);
            if self.with_dt {
                row[self.input] = dt[r];
            }
            row[ind..].copy_from_slice(&h[r * hn..(r + 1) * hn]);
        }
        let mut gates = vec![T::zero(); rows * 4 * hn];
        linear_forward(&p[self.w..], &p[self.b..self.b + 4 * hn], &inp, rows, cat, 4 * hn, &mut gates);
        let mut cn = vec![T::zero(); rows * hn];
        let mut hnew = vec![T::zero(); rows * hn];
        for r in 0..rows {
            let gr = &mut gates[r * 4 * hn..(r + 1) * 4 * hn];
            for j in 0..hn {
                gr[j] = sigmoid(gr[j]);
                gr[hn + j] = sigmoid(gr[hn + j]);
                gr[2 * hn + j] = gr[2 * hn + j].tanh();
                gr[3 * hn + j] = sigmoid(gr[3 * hn + j]);
                let i = r * hn + j;
                cn[i] = gr[hn + j] * c[i] + gr[j] * gr[2 * hn + j];
                hnew[i] = gr[3 * hn + j] * cn[i].tanh();
            }
        }
        LstmStepCache {
            rows,
            inp,
            gates,
            c_prev: c[..rows * hn].to_vec(),
            c: cn,
            h: hnew,
        }
    }

    pub fn readout<T: Real>(&self, p: &[T], h: &[T], rows: usize, y: &mut [T]) {
        linear_forward(&p[self.ow..], &p[self.ob..self.ob + self.out], h, rows, self.hidden, self.out, y);
    }

    pub fn forward_seq<T: Real>(
        &self,
        p: &[T],
        feats: &[T],
        dts: &[T],
        rows: usize,
        steps: usize,
    ) -> (Vec<T>, Vec<LstmStepCache<T>>) {
        let hn = self.hidden;
        let mut h = vec![T::zero(); rows * hn];
        let mut c = vec![T::zero(); rows * hn];
        let mut y = vec![T::zero(); rows * steps * self.out];
        let mut caches = Vec::with_capacity(steps);
        for t in 0..steps {
            let sc = self.step(
                p,
                &h,
                &c,
                &feats[t * rows * self.input..(t + 1) * rows * self.input],
                &dts[t * rows..(t + 1) * rows],
                rows,
            );
            self.readout(p, &sc.h, rows, &mut y[t * rows * self.out..(t + 1) * rows * self.out]);
            h.clone_from(&sc.h);
            c.clone_from(&sc.c);
            caches.push(sc);
        }
        (y, caches)
    }

    pub fn backward_seq<T: Real>(&self, p: &[T], caches: &[LstmStepCache<T>], dy: &[T], grad: &mut [T]) -> Vec<T> {
        let steps = caches.len();
        let rows = caches.first().map_or(0, |c| c.rows);
        let (hn, ind, cat) = (self.hidden, self.in_dim(), self.cat());
        let mut dfeats = vec![T::zero(); steps * rows * self.input];
        let mut dh_next = vec![T::zero(); rows * hn];
        let mut dc_next = vec![T::zero(); rows * hn];
        let mut da = vec![T::zero(); rows * 4 * hn];
        let mut dinp = vec![T::zero(); rows * cat];
        for t in (0..steps).rev() {
            let sc = &caches[t];
            let dyt = &dy[t * rows * self.out..(t + 1) * rows * self.out];
            let mut dh = dh_next.clone();
            {
                let (gw, gb) = split_two(grad, self.ow, self.out * hn, self.ob, self.out);
                linear_param_grads(dyt, &sc.h, rows, hn, self.out, gw, gb);
            }
            linear_input_grad(&p[self.ow..self.ow + self.out * hn], dyt, rows, hn, self.out, &mut dh, true);
            for r in 0..rows {
                let gr = &sc.gates[r * 4 * hn..(r + 1) * 4 * hn];
                let dar = &mut da[r * 4 * hn..(r + 1) * 4 * hn];
                for j in 0..hn {
                    let i = r * hn + j;
                    let (ig, fg, gg, og) = (gr[j], gr[hn + j], gr[2 * hn + j], gr[3 * hn + j]);
                    let tc = sc.c[i].tanh();
                    let dc = dc_next[i] + dh[i] * og * (T::one() - tc * tc);
                    dar[j] = dc * gg * ig * (T::one() - ig);
                    dar[hn + j] = dc * sc.c_prev[i] * fg * (T::one() - fg);
                    dar[2 * hn + j] = dc * ig * (T::one() - gg * gg);
                    dar[3 * hn + j] = dh[i] * tc * og * (T::one() - og);
                    dc_next[i] = dc * fg;
                }
            }
            {
                let (gw, gb) = split_two(grad, self.w, 4 * hn * cat, self.b, 4 * hn);
                linear_param_grads(&da, &sc.inp, rows, cat, 4 * hn, gw, gb);
            }
            linear_input_grad(&p[self.w..self.w + 4 * hn * cat], &da, rows, cat, 4 * hn, &mut dinp, false);
            for r in 0..rows {
                dfeats[(t * rows + r) * self.input..(t * rows + r + 1) * self.input]
                    .copy_from_slice(&dinp[r * cat..r * cat + self.input]);
                dh_next[r * hn..(r + 1) * hn].copy_from_slice(&dinp[r * cat + ind..(r + 1) * cat]);
            }
        }
        dfeats
    }
}
