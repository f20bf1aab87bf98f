//! The reference random number generator behind every stochastic transform.
//!
//! Everything reproducible in this toolkit bottoms out here: a SplitMix64
//! stream generator, Fisher–Yates shuffling, and the seed-derivation scheme
//! that keys per-item draws by (master seed, id, index) instead of execution
//! order. Golden files elsewhere in the repo assume these exact algorithms;
//! see README.md for the normative write-up.

/// SplitMix64: `state += 0x9E3779B97F4A7C15`, then finalize the new state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

/// The SplitMix64 output finalizer, also used on its own to mix seeds.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Uniform draw in `[0, n)` by rejection sampling, so every value is
    /// exactly equally likely. `n` must be nonzero.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        // 2^64 mod n; values >= 2^64 - rem would bias the modulo.
        let rem = (u64::MAX % n + 1) % n;
        if rem == 0 {
            return self.next_u64() % n;
        }
        let bound = u64::MAX - rem + 1;
        loop {
            let v = self.next_u64();
            if v < bound {
                return v % n;
            }
        }
    }

    /// Forward Fisher–Yates: for i in 0..len-1, swap i with a uniform
    /// j in [i, len).
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.next_below((n - i) as u64) as usize;
            items.swap(i, j);
        }
    }

    /// Uniform k-subset of `0..n` via the first k steps of the forward
    /// Fisher–Yates shuffle, returned sorted ascending.
    pub fn choose_prefix(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "choose_prefix: k > n");
        let mut indices: Vec<usize> = (0..n).collect();
        for i in 0..k.min(n.saturating_sub(1)) {
            let j = i + self.next_below((n - i) as u64) as usize;
            indices.swap(i, j);
        }
        let mut chosen = indices[..k].to_vec();
        chosen.sort_unstable();
        chosen
    }
}

/// Fold a string into a derived seed: FNV-1a over the bytes, then the
/// SplitMix64 finalizer over (master ^ hash).
pub fn mix_str(master: u64, s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in s.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix64(master ^ mix64(h))
}

/// Fold an index into a derived seed.
pub fn mix_index(master: u64, index: u64) -> u64 {
    mix64(master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Round half up: the `k` in "keep round(f * n) items".
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}
