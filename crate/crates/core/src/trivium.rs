//! TRIVIUM keystream generator and the mask sources consumed by the gadgets.
//!
//! Key and IV are 10 bytes each. Bit `j` of a key is `(key[j / 8] >> (j % 8)) & 1`
//! and the 80 key bits are loaded in reverse, so state bit `s(1 + i)` holds key
//! bit `79 - i`; the IV goes into `s(94)..s(173)` the same way. Keystream bits
//! are packed least-significant-bit first into bytes. This is the eSTREAM
//! reference convention and reproduces the published test vectors.
//!
//! The 288-bit state is kept as three shift registers stored "oldest bit
//! first" in a `u128`, which lets up to 64 clockings be computed at once: the
//! nearest feedback tap sits 65 positions away from the insertion point.

use crate::error::{Error, Result};

pub const KEY_BYTES: usize = 10;
pub const IV_BYTES: usize = 10;
pub const WARM_UP_ROUNDS: u32 = 4 * 288;

pub type Key = [u8; KEY_BYTES];
pub type Iv = [u8; IV_BYTES];

const LEN_A: u32 = 93;
const LEN_B: u32 = 84;
const LEN_C: u32 = 111;

/// A source of fresh uniformly random mask bits.
pub trait MaskSource {
    /// Returns the next `n` bits (`1 <= n <= 64`); the earliest bit is bit 0.
    fn draw(&mut self, n: u32) -> Result<u64>;

    fn bit(&mut self) -> Result<bool> {
        Ok(self.draw(1)? & 1 == 1)
    }

    /// Total number of bits handed out so far.
    fn bits_drawn(&self) -> u64;
}

impl<M: MaskSource + ?Sized> MaskSource for &mut M {
    fn draw(&mut self, n: u32) -> Result<u64> {
        (**self).draw(n)
    }

    fn bits_drawn(&self) -> u64 {
        (**self).bits_drawn()
    }
}

/// TRIVIUM generator state.
#[derive(Clone, PartialEq, Eq)]
pub struct Trivium {
    a: u128,
    b: u128,
    c: u128,
    emitted: u64,
}

impl std::fmt::Debug for Trivium {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trivium")
            .field("bits_emitted", &self.emitted)
            .finish_non_exhaustive()
    }
}

#[inline]
fn tap(reg: u128, len: u32, pos: u32) -> u64 {
    // bit j of the result is register position `pos - j` (0-based)
    (reg >> (len - 1 - pos)) as u64
}

#[inline]
fn shift_in(reg: u128, len: u32, n: u32, fresh: u64) -> u128 {
    let keep = reg >> n;
    let fresh = (fresh as u128) & ((1u128 << n) - 1);
    (keep | (fresh << (len - n))) & ((1u128 << len) - 1)
}

impl Trivium {
    /// Loads key and IV and runs the 1152 warm-up clockings.
    pub fn seed(key: &Key, iv: &Iv) -> Self {
        let bit = |bytes: &[u8; 10], j: usize| ((bytes[j / 8] >> (j % 8)) & 1) as u128;
        let mut a = 0u128;
        let mut b = 0u128;
        for i in 0..80 {
            // register position i lives at u128 bit (len - 1 - i)
            a |= bit(key, 79 - i) << (LEN_A as usize - 1 - i);
            b |= bit(iv, 79 - i) << (LEN_B as usize - 1 - i);
        }
        // s286, s287, s288 = positions 108..=110 of the third register
        let c = 0b111u128;
        let mut state = Trivium { a, b, c, emitted: 0 };
        let mut left = WARM_UP_ROUNDS;
        while left > 0 {
            let n = left.min(64);
            state.clock(n);
            left -= n;
        }
        state
    }

    /// Seed for worker or trace `index` under a common base key.
    pub fn derived(base_key: &Key, index: u64) -> Self {
        let mut iv = [0u8; IV_BYTES];
        iv[..8].copy_from_slice(&index.to_le_bytes());
        Self::seed(base_key, &iv)
    }

    /// Advances `n` (1..=64) clockings and returns the produced keystream bits.
    fn clock(&mut self, n: u32) -> u64 {
        debug_assert!((1..=64).contains(&n));
        let (a, b, c) = (self.a, self.b, self.c);
        let mut t1 = tap(a, LEN_A, 65) ^ tap(a, LEN_A, 92);
        let mut t2 = tap(b, LEN_B, 68) ^ tap(b, LEN_B, 83);
        let mut t3 = tap(c, LEN_C, 65) ^ tap(c, LEN_C, 110);
        let z = t1 ^ t2 ^ t3;
        t1 ^= (tap(a, LEN_A, 90) & tap(a, LEN_A, 91)) ^ tap(b, LEN_B, 77);
        t2 ^= (tap(b, LEN_B, 81) & tap(b, LEN_B, 82)) ^ tap(c, LEN_C, 86);
        t3 ^= (tap(c, LEN_C, 108) & tap(c, LEN_C, 109)) ^ tap(a, LEN_A, 68);
        self.a = shift_in(a, LEN_A, n, t3);
        self.b = shift_in(b, LEN_B, n, t1);
        self.c = shift_in(c, LEN_C, n, t2);
        if n == 64 {
            z
        } else {
            z & ((1u64 << n) - 1)
        }
    }

    fn reserve(&mut self, n: u64) -> Result<()> {
        if u64::MAX - self.emitted < n {
            return Err(Error::OutputSpaceExhausted {
                emitted: self.emitted,
                requested: n,
            });
        }
        self.emitted += n;
        Ok(())
    }

    /// Returns `n` successive keystream bits.
    pub fn next_bits(&mut self, n: usize) -> Result<Vec<bool>> {
        self.reserve(n as u64)?;
        let mut out = Vec::with_capacity(n);
        let mut left = n;
        while left > 0 {
            let k = left.min(64) as u32;
            let z = self.clock(k);
            out.extend((0..k).map(|j| (z >> j) & 1 == 1));
            left -= k as usize;
        }
        Ok(out)
    }

    /// Fills `buf` with keystream bytes (LSB-first packing).
    pub fn fill_bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.reserve(8 * buf.len() as u64)?;
        for chunk in buf.chunks_mut(8) {
            let z = self.clock(8 * chunk.len() as u32);
            for (i, byte) in chunk.iter_mut().enumerate() {
                *byte = (z >> (8 * i)) as u8;
            }
        }
        Ok(())
    }

    pub fn bits_emitted(&self) -> u64 {
        self.emitted
    }

    /// Overrides the output counter; lets tests reach the 2^64 boundary.
    #[doc(hidden)]
    pub fn with_bits_emitted(mut self, emitted: u64) -> Self {
        self.emitted = emitted;
        self
    }

    pub fn state_is_zero(&self) -> bool {
        self.a == 0 && self.b == 0 && self.c == 0
    }
}

impl MaskSource for Trivium {
    fn draw(&mut self, n: u32) -> Result<u64> {
        assert!((1..=64).contains(&n), "draw size {n} out of range");
        self.reserve(n as u64)?;
        Ok(self.clock(n))
    }

    fn bits_drawn(&self) -> u64 {
        self.emitted
    }
}

/// Disabled PRNG: every mask is zero, which turns each gadget into its
/// unmasked equivalent.
#[derive(Debug, Default, Clone)]
pub struct ZeroMasks {
    drawn: u64,
}

impl ZeroMasks {
    pub fn new() -> Self {
        Self::default()
    }
}

impl MaskSource for ZeroMasks {
    fn draw(&mut self, n: u32) -> Result<u64> {
        self.drawn += n as u64;
        Ok(0)
    }

    fn bits_drawn(&self) -> u64 {
        self.drawn
    }
}

/// Deterministic stub replaying a fixed bit script (cyclically). Used where
/// randomness has to be swept exhaustively rather than sampled.
#[derive(Debug, Clone)]
pub struct ScriptedMasks {
    script: Vec<bool>,
    pos: usize,
    drawn: u64,
}

impl ScriptedMasks {
    pub fn new(script: Vec<bool>) -> Self {
        assert!(!script.is_empty(), "empty mask script");
        Self {
            script,
            pos: 0,
            drawn: 0,
        }
    }

    /// Script made of the low `width` bits of each word, LSB first.
    pub fn from_words(words: &[u64], width: u32) -> Self {
        let script = words
            .iter()
            .flat_map(|w| (0..width).map(move |j| (w >> j) & 1 == 1))
            .collect();
        Self::new(script)
    }
}

impl MaskSource for ScriptedMasks {
    fn draw(&mut self, n: u32) -> Result<u64> {
        let mut out = 0u64;
        for j in 0..n {
            if self.script[self.pos] {
                out |= 1 << j;
            }
            self.pos = (self.pos + 1) % self.script.len();
        }
        self.drawn += n as u64;
        Ok(out)
    }

    fn bits_drawn(&self) -> u64 {
        self.drawn
    }
}

/// Parses a 20-hex-digit key or IV; the first two digits form byte 0.
pub fn parse_hex80(text: &str) -> Result<[u8; 10]> {
    let bytes = hex::decode(text.trim())
        .map_err(|e| Error::Config(format!("bad 80-bit hex value {text:?}: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| Error::Config(format!("80-bit value must be 20 hex digits, got {text:?}")))
}
