//! Built-in black-box functions standing in for external simulators.

use crate::cptensor::CpTensor;
use crate::polybasis::BasisFamily;
use crate::surrogate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The synthetic benchmark responses, evaluated in standardized space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkKind {
    /// Exact polynomial response from a seeded random rank-2 tensor.
    PlantedCp,
    /// Smooth non-polynomial response exp(-|xi|^2 / 2d) + 0.1 xi_1 xi_2.
    QuadExp,
    /// Affine response 1 + sum(xi_k) / d.
    Affine,
}

impl BenchmarkKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "planted-cp" => Some(BenchmarkKind::PlantedCp),
            "quad-exp" => Some(BenchmarkKind::QuadExp),
            "affine" => Some(BenchmarkKind::Affine),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkKind::PlantedCp => "planted-cp",
            BenchmarkKind::QuadExp => "quad-exp",
            BenchmarkKind::Affine => "affine",
        }
    }
}

/// Signal amplitude of the planted benchmark. Physical responses are not
/// unit scale, and a clearly-above-the-penalty amplitude keeps the default
/// regularization from drowning the signal it is supposed to recover.
const PLANTED_SCALE: f64 = 30.0;

/// The ground-truth tensor behind the planted benchmark: rank 2, order 2
/// per dimension, unit-norm columns from the given seed, with the overall
/// amplitude [`PLANTED_SCALE`] folded into the first factor.
pub fn planted_tensor(d: usize, seed: u64) -> CpTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = (0..d)
        .map(|k| {
            let mut f = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
            for r in 0..2 {
                let norm = f.column(r).norm();
                if norm > 0.0 {
                    let mut col = f.column_mut(r);
                    col /= norm;
                    if k == 0 {
                        col *= PLANTED_SCALE;
                    }
                }
            }
            f
        })
        .collect();
    CpTensor::new(factors).expect("planted factors are finite and well-shaped")
}

/// Builds the benchmark as a callable on standardized parameter vectors.
pub fn builtin_benchmark(
    kind: BenchmarkKind,
    d: usize,
    seed: u64,
) -> Box<dyn Fn(&[f64]) -> f64 + Send + Sync> {
    match kind {
        BenchmarkKind::PlantedCp => {
            let truth = planted_tensor(d, seed);
            let basis = BasisFamily::hermite(2);
            Box::new(move |xi| {
                surrogate::predict_standardized(&truth, basis, xi)
                    .expect("planted benchmark evaluation on finite input")
            })
        }
        BenchmarkKind::QuadExp => Box::new(move |xi| {
            let sq: f64 = xi.iter().map(|x| x * x).sum();
            let cross = if xi.len() >= 2 { 0.1 * xi[0] * xi[1] } else { 0.0 };
            (-sq / (2.0 * d as f64)).exp() + cross
        }),
        BenchmarkKind::Affine => {
            Box::new(move |xi| 1.0 + xi.iter().sum::<f64>() / d as f64)
        }
    }
}
