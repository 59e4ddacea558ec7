//! Seed derivation for reproducible sub-streams.

/// Mixes a base seed with two stream indices into an independent sub-seed
/// (splitmix64 finalizer). Used so datasets, training runs, and attack cells
/// each own an RNG that does not depend on evaluation order.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
