//! Seed derivation. Every stochastic component draws its seed from a master
//! seed and a tuple of indices, so results never depend on execution order.

/// Tags keeping seed streams of different pipeline stages apart.
pub mod domain {
    pub const RACING: u64 = 0x5241_4345;
    pub const EGO: u64 = 0x4547_4f00;
    pub const VERIFY: u64 = 0x5645_5249;
    pub const ENUMERATE: u64 = 0x454e_554d;
    pub const SAMPLING: u64 = 0x5341_4d50;
    pub const PROBLEM: u64 = 0x5052_4f42;
    pub const SWEEP: u64 = 0x5357_4550;
    pub const STABILITY: u64 = 0x5354_4142;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of indices into a new 64-bit seed.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_order_sensitive() {
        assert_ne!(derive(1, &[2, 3]), derive(1, &[3, 2]));
        assert_eq!(derive(1, &[2, 3]), derive(1, &[2, 3]));
        assert_ne!(derive(1, &[]), derive(2, &[]));
    }
}
