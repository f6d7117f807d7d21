//! Seeded pseudo-random generation for reference network weights and
//! transform sampling.
//!
//! The generator is SplitMix64. Its update rule is pinned here so that a seed
//! produces the same stream in any implementation, in any language:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output = z ^ (z >> 31)
//! ```
//!
//! Floats are derived from the top 53 bits: `(output >> 11) * 2^-53`,
//! uniform in `[0, 1)`.

/// SplitMix64 generator. Construction from a seed is the entire state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in `[-s, s)`.
    pub fn symmetric(&mut self, s: f64) -> f64 {
        self.uniform(-s, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_stream() {
        // Frozen reference outputs for the documented update rule, computed
        // with an independent implementation of the same constants.
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(g.next_u64(), 0x06C4_5D18_8009_454F);
        let mut h = SplitMix64::new(0x0123_4567_89AB_CDEF);
        assert_eq!(h.next_u64(), 0x157A_3807_A48F_AA9D);
    }

    #[test]
    fn float_derivation() {
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_f64(), 0.8833108082136426);
    }

    #[test]
    fn floats_in_unit_interval() {
        let mut g = SplitMix64::new(0xDEAD_BEEF);
        for _ in 0..1000 {
            let x = g.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn seeds_diverge() {
        let mut a = SplitMix64::new(1);
        let mut b = SplitMix64::new(2);
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
