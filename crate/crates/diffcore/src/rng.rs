//! Seeded, stream-separated random numbers.
//!
//! Each purpose (data draws, noise, initialization, ...) gets its own ChaCha
//! stream, so adding a draw in one place never shifts the sequence seen by
//! another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array::Array;

/// Purpose-specific stream identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Init,
    Data,
    Time,
    Noise,
    Sampling,
    Generation,
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Data => 2,
            Stream::Time => 3,
            Stream::Noise => 4,
            Stream::Sampling => 5,
            Stream::Generation => 6,
            Stream::Custom(id) => 1 << 32 | id,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        Self::from_parts(seed, stream.id())
    }

    fn from_parts(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for item `index` of this stream (a training
    /// step, a trajectory, a sample), unaffected by draws made on `self`.
    pub fn derive(&self, index: u64) -> Self {
        Self::from_parts(splitmix64(self.seed ^ splitmix64(index.wrapping_add(1))), self.stream)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal_array(&mut self, shape: &[usize]) -> Array {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.normal()).collect();
        Array::from_parts(shape.to_vec(), data)
    }

    pub fn uniform_array(&mut self, shape: &[usize], lo: f64, hi: f64) -> Array {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.uniform_range(lo, hi)).collect();
        Array::from_parts(shape.to_vec(), data)
    }
}
