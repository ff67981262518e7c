//! Deterministic seed derivation.
//!
//! One global `u64` scenario seed is expanded into independent per-task
//! streams with a splitmix-style generator. Derivation depends only on the
//! root seed, a domain tag, and integer indices — never on thread scheduling
//! or visit order — so parallel scans reproduce the single-threaded byte
//! stream exactly.

/// One step of the splitmix64 sequence: advances `state` and returns the
/// next output word.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a hash of a byte string, used to fold domain tags into the stream.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives an independent sub-seed from the root seed, a textual domain tag
/// (e.g. `"zone-sweep"`), and a list of integer indices (zone number, scan
/// point, repeat, …).
///
/// The derivation chains one splitmix step per component, so nearby indices
/// yield unrelated streams.
pub fn derive_seed(root: u64, domain: &str, indices: &[u64]) -> u64 {
    let mut state = root;
    let _ = splitmix64(&mut state);
    state ^= fnv1a(domain.as_bytes());
    let mut out = splitmix64(&mut state);
    for &idx in indices {
        state ^= idx.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        out = splitmix64(&mut state);
    }
    out
}
