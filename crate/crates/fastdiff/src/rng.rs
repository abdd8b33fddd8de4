//! Seeded pseudo-random numbers for initial data and randomized checks.
//!
//! A plain 64-bit linear congruential generator with Knuth's constants,
//! `state <- state * 6364136223846793005 + 1442695040888963407 (mod 2^64)`,
//! so that identical seeds reproduce identical data in any language. Doubles
//! take the top 53 bits of the state.

#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

pub const LCG_MULT: u64 = 6364136223846793005;
pub const LCG_INC: u64 = 1442695040888963407;

impl Lcg64 {
    pub fn new(seed: u64) -> Self {
        // one warm-up step so that seed 0 does not emit 0 first
        let mut rng = Lcg64 { state: seed };
        rng.next_u64();
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(LCG_MULT).wrapping_add(LCG_INC);
        self.state
    }

    /// Uniform double in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[-1, 1)`.
    pub fn next_signed(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_equal_seeds() {
        let mut a = Lcg64::new(42);
        let mut b = Lcg64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn doubles_in_unit_interval() {
        let mut rng = Lcg64::new(7);
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }
}
