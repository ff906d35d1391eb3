//! Masked full adder, ripple-carry adder-subtractor and the pipelined adder
//! unit shared by the inference engine.
//!
//! Functionally the adder is evaluated at issue time; the unit only enforces
//! the timing: a result leaves the last slice `5 * width` cycles after issue
//! and can feed a new operation one cycle later (register-file write-back).

use crate::circuit::FULL_ADDER_LATENCY;
use crate::error::{Error, Result};
use crate::masking::{masked_xor, trichina_and_ref, MaskedBit, MaskedWord};
use crate::trivium::MaskSource;

/// Fresh bits per bit position: one per Trichina gate.
pub const RANDOM_BITS_PER_BIT: u32 = 3;

pub fn masked_full_adder(a: MaskedBit, b: MaskedBit, cin: MaskedBit, r: [bool; 3]) -> (MaskedBit, MaskedBit) {
    let sum = masked_xor(masked_xor(a, b), cin);
    let d = trichina_and_ref(a, b, r[0]);
    let e = trichina_and_ref(b, cin, r[1]);
    let f = trichina_and_ref(cin, a, r[2]);
    (sum, masked_xor(masked_xor(d, e), f))
}

/// Inputs of one full-adder slice packed as `a0 a1 b0 b1 c0 c1 r0 r1 r2`
/// (bit 0 first), the port order of the slice circuit.
pub type SliceInputs = u16;

fn pack_slice(a: MaskedBit, b: MaskedBit, c: MaskedBit, r: [bool; 3]) -> SliceInputs {
    (a.s0() as u16)
        | (a.s1() as u16) << 1
        | (b.s0() as u16) << 2
        | (b.s1() as u16) << 3
        | (c.s0() as u16) << 4
        | (c.s1() as u16) << 5
        | (r[0] as u16) << 6
        | (r[1] as u16) << 7
        | (r[2] as u16) << 8
}

/// Draws the `3 * width` fresh bits of one operation; bit `3k + j` is `r_j`
/// of bit position `k`.
pub fn draw_op_randomness<M: MaskSource + ?Sized>(rand: &mut M, width: u32) -> Result<u128> {
    let n = RANDOM_BITS_PER_BIT * width;
    let lo = rand.draw(n.min(64))? as u128;
    let hi = if n > 64 { rand.draw(n - 64)? as u128 } else { 0 };
    Ok(lo | hi << 64)
}

/// Ripple-carry add/sub with explicit randomness, recording slice inputs.
///
/// For subtraction share 1 of `y` is complemented and the carry-in is the
/// trivially shared constant `(sub, 0)`.
pub fn add_sub_with(
    x: MaskedWord,
    y: MaskedWord,
    sub: bool,
    r: u128,
    mut slices: Option<&mut [SliceInputs]>,
) -> Result<MaskedWord> {
    if x.width() != y.width() {
        return Err(Error::WidthMismatch {
            left: x.width(),
            right: y.width(),
        });
    }
    let n = x.width();
    let flip = if sub { u32::MAX } else { 0 };
    let y = MaskedWord::from_shares(n, y.s0(), y.s1() ^ flip)?;
    let mut carry = MaskedBit::from_shares(sub, false);
    let (mut s0, mut s1) = (0u32, 0u32);
    for k in 0..n {
        let rk = (r >> (3 * k)) as u8;
        let rb = [rk & 1 == 1, rk & 2 == 2, rk & 4 == 4];
        let (a, b) = (x.bit(k), y.bit(k));
        if let Some(s) = slices.as_deref_mut() {
            s[k as usize] = pack_slice(a, b, carry, rb);
        }
        let (sum, cout) = masked_full_adder(a, b, carry, rb);
        s0 |= (sum.s0() as u32) << k;
        s1 |= (sum.s1() as u32) << k;
        carry = cout;
    }
    MaskedWord::from_shares(n, s0, s1)
}

/// `x + y` or `x - y` mod `2^width`, drawing `3 * width` fresh bits.
pub fn masked_add_sub<M: MaskSource + ?Sized>(x: MaskedWord, y: MaskedWord, sub: bool, rand: &mut M) -> Result<MaskedWord> {
    if x.width() != y.width() {
        return Err(Error::WidthMismatch {
            left: x.width(),
            right: y.width(),
        });
    }
    let r = draw_op_randomness(rand, x.width())?;
    add_sub_with(x, y, sub, r, None)
}

/// A result in flight inside a [`MaskedAdderUnit`].
#[derive(Clone, Copy, Debug)]
pub struct Ticket {
    id: u64,
    issued: u64,
    value: MaskedWord,
}

impl Ticket {
    /// Operation number within the unit.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    /// A value that never went through the adder (constants), usable at once.
    pub fn ready(value: MaskedWord) -> Ticket {
        Ticket {
            id: u64::MAX,
            issued: 0,
            value,
        }
    }
}

/// Everything an observer needs to reconstruct the activity of one operation.
#[derive(Clone, Debug)]
pub struct AddRecord {
    pub id: u64,
    pub cycle: u64,
    pub x: MaskedWord,
    pub y: MaskedWord,
    pub sub: bool,
    pub result: MaskedWord,
    /// Per bit position, the inputs seen by that slice.
    pub slices: Vec<SliceInputs>,
}

/// One pipelined masked ripple-carry adder: accepts an operation per cycle,
/// delivers each result `5 * width` cycles later.
#[derive(Clone, Debug)]
pub struct MaskedAdderUnit {
    width: u32,
    now: u64,
    issued: u64,
    last_issue: Option<u64>,
    bubbles: u64,
    random_bits: u64,
    trichina_gates: u64,
    issued_this_cycle: bool,
    trace: bool,
    last_record: Option<AddRecord>,
}

impl MaskedAdderUnit {
    pub fn new(width: u32) -> Result<Self> {
        if width == 0 || width > crate::masking::MAX_WORD_WIDTH {
            return Err(Error::InvalidWidth(width));
        }
        Ok(MaskedAdderUnit {
            width,
            now: 0,
            issued: 0,
            last_issue: None,
            bubbles: 0,
            random_bits: 0,
            trichina_gates: 0,
            issued_this_cycle: false,
            trace: false,
            last_record: None,
        })
    }

    /// Keep an [`AddRecord`] of the latest operation.
    pub fn set_tracing(&mut self, on: bool) {
        self.trace = on;
    }

    pub fn last_record(&self) -> Option<&AddRecord> {
        self.last_record.as_ref()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Issue-to-result latency in cycles.
    pub fn latency(&self) -> u64 {
        FULL_ADDER_LATENCY as u64 * self.width as u64
    }

    /// Current cycle.
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn ops_issued(&self) -> u64 {
        self.issued
    }

    /// Cycles in which nothing was issued.
    pub fn bubbles(&self) -> u64 {
        self.bubbles
    }

    pub fn random_bits(&self) -> u64 {
        self.random_bits
    }

    pub fn trichina_gates(&self) -> u64 {
        self.trichina_gates
    }

    /// Cycle in which the result of `t` leaves the last slice.
    pub fn emerges(&self, t: &Ticket) -> u64 {
        if t.id == u64::MAX {
            0
        } else {
            t.issued + self.latency()
        }
    }

    /// First cycle in which `t` may be used as an operand.
    pub fn available(&self, t: &Ticket) -> u64 {
        if t.id == u64::MAX {
            0
        } else {
            self.emerges(t) + 1
        }
    }

    /// Reads a result; fails if it is not yet written back.
    pub fn read(&self, t: &Ticket) -> Result<MaskedWord> {
        let available = self.available(t);
        if self.now < available {
            return Err(Error::StructuralHazard {
                cycle: self.now,
                producer: t.id,
                available,
            });
        }
        Ok(t.value)
    }

    /// Advances the clock by one cycle.
    pub fn tick(&mut self) {
        if !self.issued_this_cycle {
            self.bubbles += 1;
        }
        self.issued_this_cycle = false;
        self.now += 1;
    }

    /// Advances the clock until `cycle`, counting bubbles.
    pub fn wait_until(&mut self, cycle: u64) {
        while self.now < cycle {
            self.tick();
        }
    }

    /// Issues `x op y` in the current cycle with explicit randomness.
    pub fn issue_with(&mut self, x: MaskedWord, y: MaskedWord, sub: bool, r: u128) -> Result<Ticket> {
        if self.issued_this_cycle {
            return Err(Error::StructuralHazard {
                cycle: self.now,
                producer: self.issued.saturating_sub(1),
                available: self.now + 1,
            });
        }
        if x.width() != self.width {
            return Err(Error::WidthMismatch {
                left: self.width,
                right: x.width(),
            });
        }
        let value = if self.trace {
            let mut slices = vec![0; self.width as usize];
            let value = add_sub_with(x, y, sub, r, Some(&mut slices))?;
            self.last_record = Some(AddRecord {
                id: self.issued,
                cycle: self.now,
                x,
                y,
                sub,
                result: value,
                slices,
            });
            value
        } else {
            add_sub_with(x, y, sub, r, None)?
        };
        let t = Ticket {
            id: self.issued,
            issued: self.now,
            value,
        };
        self.issued += 1;
        self.random_bits += (RANDOM_BITS_PER_BIT * self.width) as u64;
        self.trichina_gates += 3 * self.width as u64;
        self.last_issue = Some(self.now);
        self.issued_this_cycle = true;
        Ok(t)
    }

    pub fn issue<M: MaskSource + ?Sized>(&mut self, x: MaskedWord, y: MaskedWord, sub: bool, rand: &mut M) -> Result<Ticket> {
        let r = draw_op_randomness(rand, self.width)?;
        self.issue_with(x, y, sub, r)
    }

    /// Issues with `x` taken from an earlier result, enforcing availability.
    pub fn issue_dependent<M: MaskSource + ?Sized>(
        &mut self,
        x: &Ticket,
        y: MaskedWord,
        sub: bool,
        rand: &mut M,
    ) -> Result<Ticket> {
        let xv = self.read(x)?;
        self.issue(xv, y, sub, rand)
    }

    /// Cycle count until the last issued result has left the pipeline
    /// (`last issue + latency`), or 0 if nothing was issued.
    pub fn completion_cycles(&self) -> u64 {
        self.last_issue.map_or(0, |c| c + self.latency())
    }
}

/// Streams independent operations through a fresh unit, one per cycle.
/// Returns the results and the number of cycles until the last one emerges.
pub fn pipelined_issue<M: MaskSource + ?Sized>(
    width: u32,
    ops: &[(MaskedWord, MaskedWord, bool)],
    rand: &mut M,
) -> Result<(Vec<MaskedWord>, u64)> {
    let mut unit = MaskedAdderUnit::new(width)?;
    let mut tickets = Vec::with_capacity(ops.len());
    for &(x, y, sub) in ops {
        tickets.push(unit.issue(x, y, sub, rand)?);
        unit.tick();
    }
    let cycles = unit.completion_cycles();
    unit.wait_until(cycles + 1);
    let results = tickets.iter().map(|t| unit.read(t)).collect::<Result<Vec<_>>>()?;
    Ok((results, cycles))
}
