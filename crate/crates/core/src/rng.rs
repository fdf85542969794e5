//! Counter-based pseudo random numbers.
//!
//! The generator is SplitMix64 written in counter form, so any language can
//! reproduce a stream bit-for-bit:
//!
//! ```text
//! GAMMA = 0x9E3779B97F4A7C15
//! next_u64():
//!     counter = counter + 1                      (wrapping, counter starts at 0)
//!     z = seed + counter * GAMMA                 (wrapping u64 arithmetic)
//!     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!     return z ^ (z >> 31)
//! ```
//!
//! Derived quantities:
//!
//! * `next_f64()` = `(next_u64() >> 11) * 2^-53`, uniform in `[0, 1)`.
//! * `below(n)` = high 64 bits of the 128-bit product `next_u64() * n`.
//! * `normal()` = Box-Muller cosine branch with `u1 = 1 - next_f64()` drawn
//!   first and `u2 = next_f64()` second: `sqrt(-2 ln u1) * cos(2π u2)`. The
//!   sine branch is discarded so each call consumes exactly two words.
//! * `derive(key)` = a fresh generator whose seed is `mix(seed ^ mix(key + GAMMA))`,
//!   where `mix` is the two multiply-xorshift rounds above. Used to give every
//!   sequence, run and sub-task an independent stream from one master seed.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 in counter form. See the module docs for the exact algorithm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Returns 0 when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform real in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal deviate.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Independent child stream keyed by `key`; does not advance `self`.
    pub fn derive(&self, key: u64) -> CounterRng {
        CounterRng::new(mix(self.seed ^ mix(key.wrapping_add(GAMMA))))
    }

    /// Fisher-Yates shuffle driven by `below`, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix64() {
        // Reference values of SplitMix64 seeded with 0 (the state-increment form).
        let mut rng = CounterRng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn below_stays_in_range_and_derive_is_pure() {
        let mut rng = CounterRng::new(42);
        for n in 1..50 {
            assert!(rng.below(n) < n);
        }
        let a = rng.derive(7);
        let b = rng.derive(7);
        assert_eq!(a, b);
        assert_ne!(rng.derive(8), a);
    }

    #[test]
    fn normal_moments_are_plausible() {
        let mut rng = CounterRng::new(3);
        let n = 20_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = rng.normal();
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
