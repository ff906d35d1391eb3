//! Two-share Boolean masking: data model, linear gadgets and the functional
//! Trichina AND.
//!
//! Share 0 carries the fresh mask in [`mask`] and in the Trichina output, and
//! [`masked_not`] inverts share 0. `unmask` recombines the shares; it exists
//! for tests and diagnostics only and must not appear on inference paths (an
//! audit test enforces this).

use crate::error::{Error, Result};

pub const MAX_WORD_WIDTH: u32 = 32;

/// A secret bit held as two Boolean shares.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MaskedBit {
    s0: bool,
    s1: bool,
}

impl MaskedBit {
    pub const fn from_shares(s0: bool, s1: bool) -> Self {
        MaskedBit { s0, s1 }
    }

    /// A public constant shared as `(0, value)`.
    pub const fn public(value: bool) -> Self {
        MaskedBit { s0: false, s1: value }
    }

    pub const fn s0(self) -> bool {
        self.s0
    }

    pub const fn s1(self) -> bool {
        self.s1
    }

    /// Test/diagnostic recombination.
    pub fn unmask(self) -> bool {
        self.s0 ^ self.s1
    }
}

/// `(r, value ^ r)`.
pub fn mask(value: bool, r: bool) -> MaskedBit {
    MaskedBit { s0: r, s1: value ^ r }
}

pub fn masked_xor(a: MaskedBit, b: MaskedBit) -> MaskedBit {
    MaskedBit {
        s0: a.s0 ^ b.s0,
        s1: a.s1 ^ b.s1,
    }
}

pub fn masked_not(a: MaskedBit) -> MaskedBit {
    MaskedBit { s0: !a.s0, s1: a.s1 }
}

/// XOR with a public bit; applied to share 0.
pub fn xor_public(a: MaskedBit, c: bool) -> MaskedBit {
    MaskedBit { s0: a.s0 ^ c, s1: a.s1 }
}

/// Functional (timing-free) Trichina AND with one fresh bit `r`.
///
/// The partial products are folded into `r` in the fixed order
/// `a0b0, a0b1, a1b0, a1b1`; output share 0 is `r` itself.
pub fn trichina_and_ref(a: MaskedBit, b: MaskedBit, r: bool) -> MaskedBit {
    let mut acc = r ^ (a.s0 & b.s0);
    acc ^= a.s0 & b.s1;
    acc ^= a.s1 & b.s0;
    acc ^= a.s1 & b.s1;
    MaskedBit { s0: r, s1: acc }
}

#[inline]
pub(crate) fn width_mask(width: u32) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1u32 << width) - 1
    }
}

/// A `width`-bit word (1..=32) held as two Boolean share vectors. The value is
/// interpreted as two's complement and all arithmetic wraps mod 2^width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MaskedWord {
    width: u32,
    s0: u32,
    s1: u32,
}

impl MaskedWord {
    pub fn from_shares(width: u32, s0: u32, s1: u32) -> Result<Self> {
        if width == 0 || width > MAX_WORD_WIDTH {
            return Err(Error::InvalidWidth(width));
        }
        let m = width_mask(width);
        Ok(MaskedWord {
            width,
            s0: s0 & m,
            s1: s1 & m,
        })
    }

    /// Public constant `(0, value)` truncated to `width` bits.
    pub fn public(width: u32, value: u32) -> Result<Self> {
        Self::from_shares(width, 0, value)
    }

    /// Builds a word from per-bit shares, bit 0 first.
    pub fn from_bits(bits: &[MaskedBit]) -> Result<Self> {
        let width = bits.len() as u32;
        let (mut s0, mut s1) = (0u32, 0u32);
        for (k, b) in bits.iter().enumerate() {
            s0 |= (b.s0 as u32) << k;
            s1 |= (b.s1 as u32) << k;
        }
        Self::from_shares(width, s0, s1)
    }

    pub const fn width(self) -> u32 {
        self.width
    }

    pub const fn s0(self) -> u32 {
        self.s0
    }

    pub const fn s1(self) -> u32 {
        self.s1
    }

    pub fn bit(self, k: u32) -> MaskedBit {
        debug_assert!(k < self.width);
        MaskedBit {
            s0: (self.s0 >> k) & 1 == 1,
            s1: (self.s1 >> k) & 1 == 1,
        }
    }

    pub fn msb(self) -> MaskedBit {
        self.bit(self.width - 1)
    }

    pub fn bits(self) -> impl Iterator<Item = MaskedBit> {
        (0..self.width).map(move |k| self.bit(k))
    }

    /// Share-wise XOR of two equally wide words.
    pub fn xor(self, other: MaskedWord) -> Result<MaskedWord> {
        if self.width != other.width {
            return Err(Error::WidthMismatch {
                left: self.width,
                right: other.width,
            });
        }
        Ok(MaskedWord {
            width: self.width,
            s0: self.s0 ^ other.s0,
            s1: self.s1 ^ other.s1,
        })
    }

    /// Two's-complement sign extension applied to each share separately.
    pub fn sign_extend(self, width: u32) -> Result<MaskedWord> {
        if width < self.width || width > MAX_WORD_WIDTH {
            return Err(Error::InvalidWidth(width));
        }
        let ext = |s: u32| {
            if (s >> (self.width - 1)) & 1 == 1 {
                s | (width_mask(width) & !width_mask(self.width))
            } else {
                s
            }
        };
        Self::from_shares(width, ext(self.s0), ext(self.s1))
    }

    /// Test/diagnostic recombination (unsigned bit pattern).
    pub fn unmask(self) -> u32 {
        self.s0 ^ self.s1
    }

    /// Test/diagnostic recombination interpreted as a signed value.
    pub fn unmask_signed(self) -> i64 {
        let v = self.unmask() as i64;
        if (v >> (self.width - 1)) & 1 == 1 {
            v - (1i64 << self.width)
        } else {
            v
        }
    }
}

/// `(r, value ^ r)` word-wise.
pub fn mask_word(value: u32, r: u32, width: u32) -> Result<MaskedWord> {
    MaskedWord::from_shares(width, r, value ^ r)
}
