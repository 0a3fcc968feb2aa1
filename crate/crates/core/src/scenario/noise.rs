//! Stochastic load variation: independent Gaussian multiplier streams per
//! feeder load, held constant between exchange samples, fully determined
//! by the scenario seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// 64-bit FNV-1a over the stream identity, mixing the run seed with the
/// feeder name and load index so every load draws from its own
/// reproducible stream regardless of how many other loads exist.
fn stream_seed(seed: u64, feeder: &str, load_index: usize) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for byte in seed
        .to_le_bytes()
        .iter()
        .chain(feeder.as_bytes())
        .chain((load_index as u64).to_le_bytes().iter())
    {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// One load's multiplier series: `n_steps` i.i.d. samples of mean 1.0 and
/// the given standard deviation, clamped at zero. `std = 0` yields all
/// ones exactly.
pub fn load_multiplier_series(
    seed: u64,
    feeder: &str,
    load_index: usize,
    std: f64,
    n_steps: usize,
) -> Vec<f64> {
    if std == 0.0 {
        return vec![1.0; n_steps];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, feeder, load_index));
    let normal = Normal::new(1.0, std).expect("validated std >= 0");
    (0..n_steps)
        .map(|_| normal.sample(&mut rng).max(0.0))
        .collect()
}

/// Multiplier rows for a whole feeder: `rows[k][i]` is load `i`'s
/// multiplier during exchange step `k`.
pub fn load_multiplier_rows(
    seed: u64,
    feeder: &str,
    n_loads: usize,
    std: f64,
    n_steps: usize,
) -> Vec<Vec<f64>> {
    let streams: Vec<Vec<f64>> = (0..n_loads)
        .map(|i| load_multiplier_series(seed, feeder, i, std, n_steps))
        .collect();
    (0..n_steps)
        .map(|k| streams.iter().map(|s| s[k]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_gives_exact_ones() {
        let series = load_multiplier_series(7, "f1", 0, 0.0, 100);
        assert!(series.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn sample_mean_stays_near_one() {
        // Standard-error bound: mean of n draws lies within 3 sigma/sqrt(n)
        // of 1.0 for all but ~0.3 % of seeds; the fixed seed keeps this
        // deterministic.
        let n = 60;
        let std = 0.02;
        let series = load_multiplier_series(42, "f1", 0, std, n);
        let mean: f64 = series.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() <= 3.0 * std / (n as f64).sqrt());
    }

    #[test]
    fn same_seed_reproduces_the_series() {
        let a = load_multiplier_series(9, "f2", 3, 0.02, 50);
        let b = load_multiplier_series(9, "f2", 3, 0.02, 50);
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ_across_loads_and_feeders() {
        let a = load_multiplier_series(9, "f2", 0, 0.02, 10);
        let b = load_multiplier_series(9, "f2", 1, 0.02, 10);
        let c = load_multiplier_series(9, "f3", 0, 0.02, 10);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rows_are_the_transpose_of_the_streams() {
        let rows = load_multiplier_rows(5, "f1", 3, 0.02, 4);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].len(), 3);
        let s1 = load_multiplier_series(5, "f1", 1, 0.02, 4);
        for k in 0..4 {
            assert_eq!(rows[k][1], s1[k]);
        }
    }
}
