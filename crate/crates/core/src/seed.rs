//! Seed derivation for replicated experiments.

/// One step of the SplitMix64 generator: advances `state` and returns the
/// mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the run identified by `indices` (e.g. `[k_index, chi_index,
/// replicate]`) under `base`:
///
/// ```text
/// h₀ = base;   h_{j+1} = splitmix64(h_j ⊕ splitmix64(index_j))
/// ```
///
/// Depends only on the indices, never on scheduling.
pub fn derive_seed(base: u64, indices: &[u64]) -> u64 {
    let mut h = base;
    for &i in indices {
        let mut s = i;
        let mixed = splitmix64(&mut s);
        h ^= mixed;
        h = splitmix64(&mut h);
    }
    h
}
