//! Random generation of the k-ones-per-column matrix model and of the
//! degree-constrained model (truncated-Poisson row counts conditioned on the
//! total, followed by a random assignment of slots to columns).

use crate::gf2::GF2Matrix;
use crate::poisson::truncated_poisson_mean;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("no admissible lambda: requested mean {mean} <= floor {floor}")]
    NoSolution { mean: f64, floor: u64 },
    #[error("degree-constrained sampler gave up after {attempts} attempts")]
    Timeout { attempts: u64 },
}

/// Parameters of the A(n, m, k) model: each column is a uniformly random
/// k-subset of the n rows, columns independent.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub seed: u64,
}

/// Poisson(lambda) conditioned on values >= floor, with mass
/// `lambda^l / (l! * f_floor(lambda))` where
/// `f_B(lambda) = e^lambda - sum_{i<B} lambda^i/i!`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TruncatedPoisson {
    pub lambda: f64,
    pub floor: u64,
}

/// SplitMix64 finalizer. Used everywhere a derived, order-independent
/// 64-bit stream seed is needed (per-column streams, per-trial seeds).
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// RNG for column `col` of the stream identified by `seed`. Streams are
/// independent of the order columns are generated in.
fn column_rng(seed: u64, col: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(col as u64 + 1)))
}

/// Uniform k-subset of [0, n) by Floyd's algorithm: exactly k draws.
pub fn sample_k_subset<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "k-subset needs k <= n");
    let mut chosen = BTreeSet::new();
    for j in (n - k)..n {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

/// Samples A(n, m, k): column j's support is a uniformly random k-subset of
/// the rows, drawn from its own split RNG stream, so output is deterministic
/// in (params) and independent of generation order.
pub fn sample_matrix(p: &ModelParams) -> GF2Matrix {
    assert!(p.k <= p.n, "model requires k <= n");
    let supports: Vec<Vec<usize>> = (0..p.m)
        .map(|j| {
            let mut rng = column_rng(p.seed, j);
            sample_k_subset(&mut rng, p.n, p.k)
        })
        .collect();
    GF2Matrix::from_column_supports(p.n, &supports)
}

impl TruncatedPoisson {
    /// Finds lambda so the conditioned mean equals `mean`, to 1e-10 relative.
    /// The mean is increasing in lambda and at least max(lambda, floor), so
    /// bisection on (0, mean] always brackets.
    pub fn with_mean(mean: f64, floor: u64) -> Result<Self, SamplerError> {
        if mean <= floor as f64 {
            return Err(SamplerError::NoSolution { mean, floor });
        }
        if floor == 0 {
            return Ok(TruncatedPoisson { lambda: mean, floor });
        }
        let mut lo = 1e-12f64;
        let mut hi = mean;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let m = truncated_poisson_mean(mid, floor);
            if (m - mean).abs() <= 1e-12 * mean {
                lo = mid;
                hi = mid;
                break;
            }
            if m < mean {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * mean {
                break;
            }
        }
        Ok(TruncatedPoisson {
            lambda: 0.5 * (lo + hi),
            floor,
        })
    }

    pub fn mean(&self) -> f64 {
        truncated_poisson_mean(self.lambda, self.floor)
    }

    /// Rejection sampling from the untruncated Poisson.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let pois = Poisson::new(self.lambda).expect("lambda > 0");
        loop {
            let v = pois.sample(rng) as u64;
            if v >= self.floor {
                return v;
            }
        }
    }
}

/// Solves for the conditioned row-count model: lambda with
/// `lambda * f_{B-1}(lambda) / f_B(lambda) = k*sigma`, B = ceil(gamma*k*sigma).
pub fn truncated_poisson_lambda(
    k: usize,
    sigma: f64,
    gamma: f64,
) -> Result<TruncatedPoisson, SamplerError> {
    assert!(gamma > 0.0 && gamma < 1.0, "gamma in (0,1)");
    let mean = k as f64 * sigma;
    let floor = (gamma * mean).ceil() as u64;
    TruncatedPoisson::with_mean(mean, floor)
}

/// Uniform sample from matrices with exactly k ones per column and every
/// row-sum >= min_row.
///
/// Row counts are drawn i.i.d. truncated-Poisson and conditioned on summing
/// to k*M by rejection; a uniform permutation of the slot labels then fills
/// the columns, and the whole draw is rejected if any column repeats a row.
pub fn sample_degree_constrained(
    n_rows: usize,
    m_cols: usize,
    k: usize,
    min_row: usize,
    seed: u64,
) -> Result<GF2Matrix, SamplerError> {
    assert!(
        n_rows * min_row <= k * m_cols,
        "min_row * N must not exceed k * M"
    );
    let total = k * m_cols;
    let sigma = m_cols as f64 / n_rows as f64;
    let dist = TruncatedPoisson::with_mean(k as f64 * sigma, min_row as u64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    let max_attempts = (1e4 * (m_cols as f64).sqrt()).ceil() as u64;
    let mut attempts = 0u64;
    'outer: loop {
        attempts += 1;
        if attempts > max_attempts {
            return Err(SamplerError::Timeout { attempts });
        }
        let counts: Vec<u64> = (0..n_rows).map(|_| dist.sample(&mut rng)).collect();
        if counts.iter().sum::<u64>() != total as u64 {
            continue;
        }
        // uniform permutation of the slot labels
        let mut slots: Vec<u32> = Vec::with_capacity(total);
        for (row, &c) in counts.iter().enumerate() {
            slots.extend(std::iter::repeat_n(row as u32, c as usize));
        }
        // Fisher-Yates
        for i in (1..slots.len()).rev() {
            let j = rng.random_range(0..=i);
            slots.swap(i, j);
        }
        let mut supports = Vec::with_capacity(m_cols);
        for chunk in slots.chunks_exact(k) {
            let sup: BTreeSet<u32> = chunk.iter().copied().collect();
            if sup.len() != k {
                continue 'outer; // a column repeated a row
            }
            supports.push(sup.into_iter().map(|v| v as usize).collect::<Vec<_>>());
        }
        return Ok(GF2Matrix::from_column_supports(n_rows, &supports));
    }
}
