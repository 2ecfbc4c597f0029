//! Deterministic random number generation.
//!
//! All randomness in this crate flows through one documented generator so
//! that shuffles, training order and parameter init are reproducible across
//! runs, platforms, and reimplementations in other languages:
//!
//! * seed expansion and hashing use splitmix64,
//! * streams are xoshiro256** (an xorshift-family generator),
//! * bounded draws use `next_u64() % n`,
//! * shuffles are Fisher–Yates from the top index down.

/// splitmix64 step: advances `state` and returns the next output word.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// xoshiro256** stream seeded from a single u64 via splitmix64.
#[derive(Debug, Clone)]
pub struct DetRng {
    s: [u64; 4],
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        DetRng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, n)`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Uniform f64 in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Hashes a tuple of byte strings and integers into a stream seed.
///
/// Each component is folded into a splitmix64 state, so
/// `stream_seed(&[a, b])` and `stream_seed(&[b, a])` differ.
pub fn stream_seed(parts: &[SeedPart<'_>]) -> u64 {
    let mut state: u64 = 0x51ab_2e4c_9a3f_77d1;
    let mut out = 0u64;
    for part in parts {
        match part {
            SeedPart::Int(v) => {
                state ^= v;
                out = splitmix64(&mut state);
            }
            SeedPart::Str(s) => {
                for chunk in s.as_bytes().chunks(8) {
                    let mut w = [0u8; 8];
                    w[..chunk.len()].copy_from_slice(chunk);
                    state ^= u64::from_le_bytes(w);
                    splitmix64(&mut state);
                }
                state ^= s.len() as u64;
                out = splitmix64(&mut state);
            }
        }
    }
    out
}

/// One component of a stream-seed tuple.
pub enum SeedPart<'a> {
    Int(u64),
    Str(&'a str),
}
