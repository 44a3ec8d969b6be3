//! From-scratch differentiable stack: convolutional backbone, CfC and LSTM
//! recurrent heads, MSE loss, Adam and checkpoint I/O. Everything is generic
//! over [`Real`] so gradient checks can run in f64 while training uses f32.

pub mod adam;
pub mod cfc;
pub mod checkpoint;
pub mod cnn;
pub mod gradcheck;
pub mod lstm;
pub mod model;
pub mod ncp;
pub mod ops;

pub use adam::Adam;
pub use model::{ModelConfig, PolicyModel, SeqBatch, Variant};

use num_traits::Float;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected:?}, got {actual:?}")]
    Shape {
        what: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("infeasible wiring: {0}")]
    Wiring(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("bad model config: {0}")]
    Config(String),
}

/// Scalar type the network runs in.
pub trait Real: Float + Default + Send + Sync + std::fmt::Debug + std::fmt::Display + std::iter::Sum + 'static {
    /// C ← α·A·B + β·C with explicit row/column strides (in elements).
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite cast")
    }
}

fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
    }
}

macro_rules! impl_real {
    ($t:ty, $f:path) => {
        impl Real for $t {
            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc > 0 && csc > 0);
                assert!(a.len() >= extent(m, k, rsa, csa), "gemm: A too short");
                assert!(b.len() >= extent(k, n, rsb, csb), "gemm: B too short");
                assert!(c.len() >= extent(m, n, rsc, csc), "gemm: C too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the asserts above bound every element the kernel
                // touches inside the three slices; C does not alias A or B
                // because it is borrowed mutably.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Location of one named tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Builder for a flat parameter layout.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamLayout {
    pub specs: Vec<ParamSpec>,
    pub total: usize,
}

impl ParamLayout {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.total;
        let spec = ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        };
        self.total += spec.len();
        self.specs.push(spec);
        offset
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }
}

/// Uniform(−1/√fan_in, 1/√fan_in) initialisation for a weight/bias pair.
pub(crate) fn init_uniform<T: Real, R: Rng + ?Sized>(dst: &mut [T], fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in dst {
        *v = T::of(rng.random_range(-bound..bound));
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn softplus<T: Real>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Named tensor used for checkpoint exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::Shape {
                what: "tensor data".into(),
                expected: vec![n],
                actual: vec![data.len()],
            });
        }
        Ok(Self {
            name: name.into(),
            shape,
            data,
        })
    }
}
