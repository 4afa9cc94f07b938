//! Keyed Gaussian increment streams.
//!
//! Each stream is a ChaCha8 keystream whose key is built from
//! `(seed, refinement level, purpose)` and whose 64-bit stream id is the
//! trajectory index. Draws are standard normals obtained with the ziggurat
//! sampler of `rand_distr`. A draw depends only on the key and on its
//! position in the stream, so trajectories can be simulated in any order or
//! on any number of workers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Source of Brownian increments over a step of length `dt`.
pub trait IncrementSource {
    fn next_increment(&mut self, dt: f64) -> f64;
}

/// Separates the estimation ensembles from the fine-grid reference ensembles
/// so the two never share Brownian paths for the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Estimate,
    Reference,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Estimate => 0x6573_7469_6d61_7465,
            StreamPurpose::Reference => 0x7265_6665_7265_6e63,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianStream {
    seed: u64,
    trajectory: u64,
    level: u32,
    counter: u64,
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn keyed(seed: u64, trajectory: u64, level: u32, purpose: StreamPurpose) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&u64::from(level).to_le_bytes());
        key[16..24].copy_from_slice(&purpose.tag().to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(trajectory);
        Self {
            seed,
            trajectory,
            level,
            counter: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory(&self) -> u64 {
        self.trajectory
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of increments drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// A fresh standard normal.
    #[inline]
    pub fn next_standard(&mut self) -> f64 {
        self.counter += 1;
        StandardNormal.sample(&mut self.rng)
    }

    /// Raw keystream word; only used by the statistical tests.
    #[doc(hidden)]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

impl IncrementSource for GaussianStream {
    #[inline]
    fn next_increment(&mut self, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        self.next_standard() * dt.sqrt()
    }
}

/// Stream used by the estimators for `(seed, trajectory, level)`.
pub fn make_stream(seed: u64, trajectory: u64, level: u32) -> GaussianStream {
    GaussianStream::keyed(seed, trajectory, level, StreamPurpose::Estimate)
}

/// `next_increment` as a free function, mirroring [`make_stream`].
#[inline]
pub fn next_increment(stream: &mut GaussianStream, dt: f64) -> f64 {
    stream.next_increment(dt)
}

/// Deterministic source returning `ΔW = 0`; turns a scheme into its ODE
/// counterpart.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise {
    pub draws: u64,
}

impl IncrementSource for ZeroNoise {
    fn next_increment(&mut self, _dt: f64) -> f64 {
        self.draws += 1;
        0.0
    }
}

/// Replays a fixed list of increments, then zeros.
#[derive(Debug, Clone, Default)]
pub struct ScriptedIncrements {
    values: Vec<f64>,
    pos: usize,
}

impl ScriptedIncrements {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, pos: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl IncrementSource for ScriptedIncrements {
    fn next_increment(&mut self, _dt: f64) -> f64 {
        let v = self.values.get(self.pos).copied().unwrap_or(0.0);
        self.pos += 1;
        v
    }
}
