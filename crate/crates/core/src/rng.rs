//! Counter-based random numbers.
//!
//! Every deviate is a pure function of `(master_seed, stream_id, draw_index)`,
//! so a draw can be reproduced without replaying the stream and parallel
//! replicas can pull from disjoint streams in any order. The generator is a
//! splitmix-style construction: a per-stream key derived by avalanche mixing,
//! then a Weyl sequence through a 64-bit finalizer. Normal deviates come from
//! the inverse CDF, which keeps them schedule-independent as well.

use crate::special::normal_quantile;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0x6A09_E667_F3BC_C909;

/// Addressable source of randomness: a master seed plus a stream index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_id,
        }
    }

    /// The same master seed, shifted to another stream.
    pub fn stream(self, stream_id: u64) -> Self {
        SeedSpec {
            master_seed: self.master_seed,
            stream_id,
        }
    }
}

/// Stafford variant 13 of the 64-bit finalizer.
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_key(spec: SeedSpec) -> u64 {
    mix64(spec.master_seed ^ mix64(spec.stream_id ^ STREAM_SALT))
}

/// Raw 64 bits at a given draw index.
pub fn u64_at(spec: SeedSpec, draw: u64) -> u64 {
    let key = stream_key(spec);
    mix64(key.wrapping_add(draw.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform deviate in the open interval (0, 1).
pub fn uniform_at(spec: SeedSpec, draw: u64) -> f64 {
    let bits = u64_at(spec, draw);
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal deviate at a given draw index.
pub fn normal_at(spec: SeedSpec, draw: u64) -> f64 {
    normal_quantile(uniform_at(spec, draw)).expect("uniform_at stays inside (0, 1)")
}

/// Sequential convenience wrapper over the stateless draws.
#[derive(Clone, Debug)]
pub struct CounterRng {
    spec: SeedSpec,
    counter: u64,
}

impl CounterRng {
    pub fn new(spec: SeedSpec) -> Self {
        CounterRng { spec, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = u64_at(self.spec, self.counter);
        self.counter += 1;
        v
    }

    pub fn uniform(&mut self) -> f64 {
        let v = uniform_at(self.spec, self.counter);
        self.counter += 1;
        v
    }

    pub fn normal(&mut self) -> f64 {
        let v = normal_at(self.spec, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform draw from [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer draw from [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_pure_functions_of_the_address() {
        let spec = SeedSpec::new(42, 7);
        let a: Vec<u64> = (0..16).map(|i| u64_at(spec, i)).collect();
        let b: Vec<u64> = (0..16).map(|i| u64_at(spec, i)).collect();
        assert_eq!(a, b);
        // Out-of-order access sees the same values.
        assert_eq!(u64_at(spec, 11), a[11]);
    }

    #[test]
    fn streams_are_distinct() {
        let base = SeedSpec::new(42, 0);
        let a: Vec<u64> = (0..8).map(|i| u64_at(base, i)).collect();
        let b: Vec<u64> = (0..8).map(|i| u64_at(base.stream(1), i)).collect();
        assert_ne!(a, b);
        let c: Vec<u64> = (0..8).map(|i| u64_at(SeedSpec::new(43, 0), i)).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_lies_strictly_inside_unit_interval() {
        let spec = SeedSpec::new(7, 3);
        for i in 0..10_000 {
            let u = uniform_at(spec, i);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn normal_moments() {
        let spec = SeedSpec::new(2024, 0);
        let n = 400_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut sum3 = 0.0;
        for i in 0..n {
            let z = normal_at(spec, i as u64);
            sum += z;
            sum2 += z * z;
            sum3 += z * z * z;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let skew = sum3 / n as f64;
        let se = 1.0 / (n as f64).sqrt();
        assert!(mean.abs() < 5.0 * se, "mean {mean}");
        assert!((var - 1.0).abs() < 5.0 * 1.5 * se, "var {var}");
        assert!(skew.abs() < 5.0 * 15.0f64.sqrt() * se, "skew {skew}");
    }

    #[test]
    fn lag_and_cross_stream_correlations_are_small() {
        let spec = SeedSpec::new(99, 1);
        let other = spec.stream(2);
        let n = 200_000usize;
        let mut lag = 0.0;
        let mut cross = 0.0;
        let mut prev = normal_at(spec, 0);
        for i in 1..n {
            let z = normal_at(spec, i as u64);
            lag += prev * z;
            prev = z;
            cross += z * normal_at(other, i as u64);
        }
        let se = 1.0 / (n as f64).sqrt();
        assert!((lag / n as f64).abs() < 5.0 * se, "lag-1 {}", lag / n as f64);
        assert!(
            (cross / n as f64).abs() < 5.0 * se,
            "cross {}",
            cross / n as f64
        );
    }

    #[test]
    fn uniform_bins_are_balanced() {
        let spec = SeedSpec::new(5, 5);
        let n = 100_000usize;
        let k = 20usize;
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let u = uniform_at(spec, i as u64);
            counts[(u * k as f64) as usize] += 1;
        }
        let expected = n as f64 / k as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 19 degrees of freedom; 5-sigma-ish ceiling.
        assert!(chi2 < 60.0, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn sequential_wrapper_matches_stateless_access() {
        let spec = SeedSpec::new(1, 2);
        let mut rng = CounterRng::new(spec);
        for i in 0..32 {
            assert_eq!(rng.next_u64(), u64_at(spec, i));
        }
    }

    #[test]
    fn golden_first_draws() {
        // Frozen regression values; a change here silently reshuffles every
        // simulation in the crate.
        let spec = SeedSpec::new(0, 0);
        let got: Vec<u64> = (0..4).map(|i| u64_at(spec, i)).collect();
        assert_eq!(
            got,
            vec![
                0x65ae880813f6f3db,
                0x46e49a57f05333ce,
                0x0f99e133617f2a90,
                0x9f711f5d685a88f3,
            ]
        );
        let other = SeedSpec::new(42, 7);
        assert_eq!(u64_at(other, 0), 0x0e387594ef5681cc);
        assert_eq!(u64_at(other, 1), 0xdce31467f6811933);
        assert!((uniform_at(spec, 0) - 3.97194387409367355e-1).abs() < 1e-16);
        assert!((normal_at(spec, 0) - -2.60615837853820032e-1).abs() < 1e-15);
    }
}
