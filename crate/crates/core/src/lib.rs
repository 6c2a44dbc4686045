//! Dual-system long-horizon manipulation at desk scale.
//!
//! A memory-guided planner ([`planner`]) issues sub-tasks to a masked,
//! diffusion-sampled executor ([`executor`]) inside a seeded tabletop
//! simulator ([`world`]); [`bench`] runs seeded batches and ablations.

pub mod bench;
pub mod executor;
pub mod mask;
pub mod memory;
pub mod percept;
pub mod planner;
pub mod world;

use sha2::{Digest, Sha256};

/// Stable 64-bit seed derived from byte strings.
pub(crate) fn derive_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}
