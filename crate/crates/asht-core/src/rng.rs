//! Deterministic random streams.
//!
//! Every trial gets its own ChaCha stream keyed by
//! (master seed, instance id, policy id, replication index), so results are
//! byte-identical no matter how trials are scheduled across worker threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby keys.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes, used to fold string ids into the stream key.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn derive_key(parts: &[u64]) -> u64 {
    let mut state = 0x6C62_272E_07BB_0142;
    for p in parts {
        state ^= *p;
        splitmix64(&mut state);
    }
    state
}

fn expand_seed(key: u64) -> [u8; 32] {
    let mut state = key;
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// The 64-bit key identifying one trial's stream; recorded in trial CSVs.
pub fn trial_key(master_seed: u64, instance_id: &str, policy_id: &str, rep: u64) -> u64 {
    derive_key(&[master_seed, hash_str(instance_id), hash_str(policy_id), rep])
}

/// A fresh, independent generator for one trial.
pub fn trial_rng(master_seed: u64, instance_id: &str, policy_id: &str, rep: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(expand_seed(trial_key(
        master_seed,
        instance_id,
        policy_id,
        rep,
    )))
}

/// A named substream for non-trial uses (synthetic generation, fuzzing).
pub fn stream(label: &str, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(expand_seed(derive_key(&[hash_str(label), seed])))
}
