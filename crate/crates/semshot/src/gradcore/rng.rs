//! Counter-based deterministic random streams.
//!
//! A stream is keyed by (seed, label). The i-th output is a pure function of
//! the key and the draw index, so two streams with the same key always agree
//! and the sequence does not depend on which other streams were consumed
//! in between. Labels are plain strings, typically paths like
//! `"train/epoch3/episode41"`.

use rand::RngCore;

/// splitmix64 finalizer; good bit mixing for counter-based generation.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes, folded with the seed.
fn stream_key(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    mix(seed ^ mix(h))
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    label: String,
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        RngStream {
            seed,
            label: label.to_owned(),
            key: stream_key(seed, label),
            counter: 0,
        }
    }

    /// Derive an independent stream under the same seed. The child label is
    /// `parent_label/suffix`, so derivation commutes with string formatting.
    pub fn substream(&self, suffix: &str) -> Self {
        RngStream::new(self.seed, &format!("{}/{}", self.label, suffix))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The i-th raw output, independent of the cursor position.
    pub fn u64_at(&self, index: u64) -> u64 {
        mix(self.key ^ mix(index.wrapping_mul(0xd1b5_4a32_d192_ed03)))
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller on two counter draws.
    pub fn next_normal(&mut self) -> f64 {
        loop {
            let u1 = self.next_f64();
            let u2 = self.next_f64();
            if u1 > 0.0 {
                let r = (-2.0 * u1.ln()).sqrt();
                return r * (std::f64::consts::TAU * u2).cos();
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let v = self.u64_at(self.counter);
        self.counter += 1;
        v
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
