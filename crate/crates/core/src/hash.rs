//! Seeded 64-bit avalanche mixing.
//!
//! All hashing in this crate (MinHash functions, seed derivation, file
//! fingerprints) goes through these mixers so results are identical across
//! platforms and std versions.

/// splitmix64 finalizer.
pub fn avalanche(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

/// Mix a value into a running state.
pub fn mix(state: u64, value: u64) -> u64 {
    avalanche(state ^ value.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Seeded hash of a canonical (head, relation, tail) encoding.
pub fn triple_hash(seed: u64, head: u32, relation: u32, tail: u32) -> u64 {
    let mut h = mix(seed, head as u64 | 1 << 32);
    h = mix(h, relation as u64 | 2 << 32);
    mix(h, tail as u64 | 3 << 32)
}

/// Deterministic per-index seed stream derived from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(master, index.wrapping_add(0x5851_f42d_4c95_7f2d))
}

/// Fingerprint a byte slice (used for config hashes in file headers).
pub fn fingerprint_bytes(bytes: &[u8]) -> u64 {
    let mut state = 0x6a09_e667_f3bc_c908;
    for chunk in bytes.chunks(8) {
        let mut v = [0u8; 8];
        v[..chunk.len()].copy_from_slice(chunk);
        state = mix(state, u64::from_le_bytes(v));
    }
    mix(state, bytes.len() as u64)
}
