//! Fully masked engine: every intermediate lives as a share pair, randomness
//! comes from a [`MaskSource`], and timing follows the shared pipelined adder.

use super::schedule::{adder_latency, CONTROL_CYCLES};
use super::{Image, NetworkParams, ACC_WIDTH, PIXEL_WIDTH};
use crate::arith::{masked_add_sub, AddRecord, MaskedAdderUnit, Ticket};
use crate::circuit::MUX_BIT_LATENCY;
use crate::error::Result;
use crate::masking::{masked_not, masked_xor, trichina_and_ref, width_mask, xor_public, MaskedBit, MaskedWord};
use crate::trivium::MaskSource;

/// Cycles of the registered word multiplexer after the comparison result is
/// written back (Trichina chain plus output XOR register).
pub const ARGMAX_MUX_CYCLES: u64 = MUX_BIT_LATENCY as u64;

/// Truth table of the input-layer LUT. Inputs (LSB first): `a_k`, `(-a)_k`,
/// weight, `r_k`. Outputs: bit 0 is the bypassed `r_k` (share 0), bit 1 is
/// `(w ? a_k : (-a)_k) ^ r_k` (share 1).
pub fn lut_select_table() -> [u8; 16] {
    let mut t = [0u8; 16];
    for (i, e) in t.iter_mut().enumerate() {
        let (a, na, w, r) = (i & 1 == 1, i & 2 == 2, i & 4 == 4, i & 8 == 8);
        let sel = if w { a } else { na };
        *e = (r as u8) | (((sel ^ r) as u8) << 1);
    }
    t
}

/// The masked `±pixel` operand, sign-extended to the accumulator width. `r`
/// holds one fresh bit per pixel bit.
pub fn input_contribution(pixel: u8, weight: bool, r: u32) -> MaskedWord {
    let table = lut_select_table();
    let a = pixel as u32;
    let na = a.wrapping_neg() & width_mask(PIXEL_WIDTH);
    let (mut s0, mut s1) = (0u32, 0u32);
    for k in 0..PIXEL_WIDTH {
        let idx = ((a >> k) & 1) | ((na >> k) & 1) << 1 | (weight as u32) << 2 | ((r >> k) & 1) << 3;
        let e = table[idx as usize] as u32;
        s0 |= (e & 1) << k;
        s1 |= (e >> 1) << k;
    }
    MaskedWord::from_shares(PIXEL_WIDTH, s0, s1)
        .and_then(|w| w.sign_extend(ACC_WIDTH))
        .expect("fixed widths are valid")
}

pub fn masked_input_mac<M: MaskSource + ?Sized>(pixel: u8, weight: bool, acc: MaskedWord, rand: &mut M) -> Result<MaskedWord> {
    let r = rand.draw(PIXEL_WIDTH)? as u32;
    masked_add_sub(acc, input_contribution(pixel, weight, r), false, rand)
}

/// `+1` if `XNOR(act, weight)` else `-1`, built without randomness: bit 0 is
/// the constant `(1, 0)` and every higher bit is `NOT XNOR(act, weight)`.
pub fn hidden_contribution(act: MaskedBit, weight: bool) -> MaskedWord {
    let x = xor_public(act, !weight);
    let nx = masked_not(x);
    let hi = width_mask(ACC_WIDTH) & !1;
    let s0 = 1 | if nx.s0() { hi } else { 0 };
    let s1 = if nx.s1() { hi } else { 0 };
    MaskedWord::from_shares(ACC_WIDTH, s0, s1).expect("fixed width is valid")
}

pub fn masked_hidden_mac<M: MaskSource + ?Sized>(act: MaskedBit, weight: bool, acc: MaskedWord, rand: &mut M) -> Result<MaskedWord> {
    masked_add_sub(acc, hidden_contribution(act, weight), false, rand)
}

/// Sign activation: 1 iff the sum is non-negative.
pub fn masked_activation(acc: MaskedWord) -> MaskedBit {
    masked_not(acc.msb())
}

/// Per bit: `out = old ^ TG(sel, old ^ new, r_k)`. Optionally reports the
/// inputs `sel0 sel1 d0 d1 r old0 old1` (LSB first) of each bit cell.
pub fn masked_word_mux_with(
    sel: MaskedBit,
    new: MaskedWord,
    old: MaskedWord,
    r: u32,
    mut cells: Option<&mut Vec<u8>>,
) -> Result<MaskedWord> {
    let diff = old.xor(new)?;
    let mut bits = Vec::with_capacity(old.width() as usize);
    for k in 0..old.width() {
        let d = diff.bit(k);
        let rk = (r >> k) & 1 == 1;
        if let Some(c) = cells.as_deref_mut() {
            let o = old.bit(k);
            c.push(
                (sel.s0() as u8)
                    | (sel.s1() as u8) << 1
                    | (d.s0() as u8) << 2
                    | (d.s1() as u8) << 3
                    | (rk as u8) << 4
                    | (o.s0() as u8) << 5
                    | (o.s1() as u8) << 6,
            );
        }
        bits.push(masked_xor(old.bit(k), trichina_and_ref(sel, d, rk)));
    }
    MaskedWord::from_bits(&bits)
}

pub fn masked_word_mux<M: MaskSource + ?Sized>(sel: MaskedBit, new: MaskedWord, old: MaskedWord, rand: &mut M) -> Result<MaskedWord> {
    let r = rand.draw(old.width())? as u32;
    masked_word_mux_with(sel, new, old, r, None)
}

/// Running masked maximum; ties keep the earlier index.
pub fn masked_argmax<M: MaskSource + ?Sized>(sums: &[MaskedWord], index_width: u32, rand: &mut M) -> Result<MaskedWord> {
    let mut max = sums[0];
    let mut idx = MaskedWord::public(index_width, 0)?;
    for (k, &s) in sums.iter().enumerate().skip(1) {
        let diff = masked_add_sub(max, s, true, rand)?;
        let sel = diff.msb();
        max = masked_word_mux(sel, s, max, rand)?;
        idx = masked_word_mux(sel, MaskedWord::public(index_width, k as u32)?, idx, rand)?;
    }
    Ok(idx)
}

/// One argmax multiplexer step.
#[derive(Clone, Debug)]
pub struct MuxRecord {
    /// First cycle of the multiplexer.
    pub cycle: u64,
    /// Bit-cell inputs, max word bits first, then index bits.
    pub cells: Vec<u8>,
}

/// Hooks into the masked datapath, used by the leakage recorder.
pub trait EngineObserver {
    /// Whether [`on_add`](Self::on_add) needs per-slice inputs.
    fn wants_slices(&self) -> bool {
        false
    }
    fn on_layer(&mut self, _layer: usize, _cycle: u64) {}
    /// The public pixel register is loaded for a new input-layer round.
    fn on_pixel_load(&mut self, _cycle: u64, _pixel: u8) {}
    /// An add/sub was issued; `slot` is the register-file slot of its result.
    fn on_add(&mut self, _rec: &AddRecord, _slot: usize) {}
    fn on_mux(&mut self, _rec: &MuxRecord) {}
}

pub struct NoObserver;

impl EngineObserver for NoObserver {}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LayerStats {
    pub start: u64,
    pub first_issue: u64,
    pub end: u64,
    pub issue_slots: u64,
    pub stalls: u64,
}

#[derive(Clone, Debug)]
pub struct InferenceResult {
    pub class_shares: MaskedWord,
    pub cycles: u64,
    pub random_bits: u64,
    /// Trichina gates evaluated (adders and multiplexers).
    pub trichina_gates: u64,
    pub ops: u64,
    pub layers: Vec<LayerStats>,
    pub drain: u64,
    pub argmax_cycles: u64,
    /// Output-layer sums as shares.
    pub output_sums: Vec<MaskedWord>,
}

enum LayerInputs<'a> {
    Pixels(&'a [u8]),
    Acts(Vec<Ticket>),
}

fn issue_traced<M: MaskSource + ?Sized, O: EngineObserver + ?Sized>(
    unit: &mut MaskedAdderUnit,
    x: MaskedWord,
    y: MaskedWord,
    sub: bool,
    rand: &mut M,
    obs: &mut O,
    slot: usize,
) -> Result<Ticket> {
    let t = unit.issue(x, y, sub, rand)?;
    if let Some(rec) = unit.last_record() {
        obs.on_add(rec, slot);
    }
    Ok(t)
}

/// Runs one masked inference. No share pair is ever recombined; the class is
/// returned as index shares.
pub fn masked_infer<M: MaskSource + ?Sized, O: EngineObserver + ?Sized>(
    p: &NetworkParams,
    img: &Image,
    rand: &mut M,
    obs: &mut O,
) -> Result<InferenceResult> {
    let depth = p.depth();
    let mut unit = MaskedAdderUnit::new(ACC_WIDTH)?;
    unit.set_tracing(obs.wants_slices());
    let drawn_before = rand.bits_drawn();
    let mut inputs = LayerInputs::Pixels(img.pixels());
    let mut layers = Vec::new();

    for (li, layer) in p.layers().iter().enumerate() {
        let start = unit.now();
        unit.wait_until(start + CONTROL_CYCLES);
        obs.on_layer(li, unit.now());
        let first_issue = unit.now();
        let mut acts: Vec<Option<MaskedBit>> = vec![None; layer.n_in];
        let mut finals = Vec::with_capacity(layer.n_out);

        for g0 in (0..layer.n_out).step_by(depth) {
            let g = depth.min(layer.n_out - g0);
            let mut tickets = Vec::with_capacity(g);
            for i in 0..g {
                let node = g0 + i;
                let m = rand.draw(ACC_WIDTH)? as u32;
                let x = MaskedWord::public(ACC_WIDTH, layer.biases[node] as u32)?;
                let y = MaskedWord::from_shares(ACC_WIDTH, m, m)?;
                tickets.push(issue_traced(&mut unit, x, y, false, rand, obs, node % depth)?);
                unit.tick();
            }
            for j in 0..layer.n_in {
                for (i, ticket) in tickets.iter_mut().enumerate() {
                    let node = g0 + i;
                    let w = layer.weight(node, j);
                    let mut ready = unit.available(ticket);
                    if let LayerInputs::Acts(prev) = &inputs {
                        ready = ready.max(unit.available(&prev[j]));
                    }
                    unit.wait_until(ready);
                    let y = match &inputs {
                        LayerInputs::Pixels(px) => {
                            if i == 0 {
                                obs.on_pixel_load(unit.now(), px[j]);
                            }
                            let r = rand.draw(PIXEL_WIDTH)? as u32;
                            input_contribution(px[j], w, r)
                        }
                        LayerInputs::Acts(prev) => {
                            let act = match acts[j] {
                                Some(a) => a,
                                None => {
                                    let a = masked_activation(unit.read(&prev[j])?);
                                    acts[j] = Some(a);
                                    a
                                }
                            };
                            hidden_contribution(act, w)
                        }
                    };
                    let x = unit.read(ticket)?;
                    *ticket = issue_traced(&mut unit, x, y, false, rand, obs, node % depth)?;
                    unit.tick();
                }
            }
            finals.extend(tickets);
        }
        let end = unit.now();
        let issue_slots = (layer.n_out * (layer.n_in + 1)) as u64;
        layers.push(LayerStats {
            start,
            first_issue,
            end,
            issue_slots,
            stalls: end - first_issue - issue_slots,
        });
        inputs = LayerInputs::Acts(finals);
    }

    let finals = match inputs {
        LayerInputs::Acts(t) => t,
        LayerInputs::Pixels(_) => unreachable!("validated params have layers"),
    };
    let issue_end = unit.now();
    let ready = finals.iter().map(|t| unit.available(t)).max().unwrap_or(issue_end);
    unit.wait_until(ready);
    let drain = unit.now() - issue_end;
    let sums = finals.iter().map(|t| unit.read(t)).collect::<Result<Vec<_>>>()?;

    let argmax_start = unit.now();
    let iw = p.index_width();
    let mut max = sums[0];
    let mut idx = MaskedWord::public(iw, 0)?;
    let mut mux_gates = 0u64;
    for (k, &s) in sums.iter().enumerate().skip(1) {
        let t = issue_traced(&mut unit, max, s, true, rand, obs, usize::MAX)?;
        unit.tick();
        let avail = unit.available(&t);
        unit.wait_until(avail);
        let sel = unit.read(&t)?.msb();
        let r_max = rand.draw(ACC_WIDTH)? as u32;
        let r_idx = rand.draw(iw)? as u32;
        let mut cells = obs.wants_slices().then(Vec::new);
        max = masked_word_mux_with(sel, s, max, r_max, cells.as_mut())?;
        idx = masked_word_mux_with(sel, MaskedWord::public(iw, k as u32)?, idx, r_idx, cells.as_mut())?;
        if let Some(cells) = cells {
            obs.on_mux(&MuxRecord {
                cycle: unit.now(),
                cells,
            });
        }
        mux_gates += (ACC_WIDTH + iw) as u64;
        let done = unit.now() + ARGMAX_MUX_CYCLES;
        unit.wait_until(done);
    }
    debug_assert_eq!(unit.latency(), adder_latency());

    Ok(InferenceResult {
        class_shares: idx,
        cycles: unit.now(),
        random_bits: rand.bits_drawn() - drawn_before,
        trichina_gates: unit.trichina_gates() + mux_gates,
        ops: unit.ops_issued(),
        layers,
        drain,
        argmax_cycles: unit.now() - argmax_start,
        output_sums: sums,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::{analytic_masked_cycles, unmasked_infer, TINY_DIMS};
    use crate::masking::mask_word;
    use crate::trivium::{ScriptedMasks, Trivium, ZeroMasks};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lut_operand_sweep() {
        for a in 0u32..512 {
            let pixel_like = a as u8;
            for w in [false, true] {
                for r in [0u32, 0x1ff, 0x0aa, 0x155] {
                    let c = input_contribution(pixel_like, w, r);
                    let p = pixel_like as i64;
                    assert_eq!(c.unmask_signed(), if w { p } else { -p });
                    assert_eq!(c.s0() & 0x1ff, r);
                }
            }
        }
    }

    #[test]
    fn input_mac_examples() {
        let mut z = ZeroMasks::new();
        let acc = mask_word(100, 0x3c3c3, 20).unwrap();
        assert_eq!(masked_input_mac(37, false, acc, &mut z).unwrap().unmask(), 63);
        let mut t = Trivium::seed(&[1; 10], &[2; 10]);
        for w in [false, true] {
            assert_eq!(masked_input_mac(0, w, acc, &mut t).unwrap().unmask(), 100);
        }
    }

    #[test]
    fn hidden_mac_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = Trivium::seed(&[3; 10], &[4; 10]);
        for _ in 0..1000 {
            let (act, w, m): (bool, bool, bool) = (rng.gen(), rng.gen(), rng.gen());
            let v = rng.gen_range(-5000i32..5000);
            let acc = mask_word(v as u32 & 0xfffff, rng.gen(), 20).unwrap();
            let a = crate::masking::mask(act, m);
            let out = masked_hidden_mac(a, w, acc, &mut t).unwrap();
            let expect = v + if act == w { 1 } else { -1 };
            assert_eq!(out.unmask_signed(), expect as i64);
        }
    }

    #[test]
    fn activation_sign() {
        for (v, act) in [(5i32, true), (-3, false), (0, true)] {
            let w = mask_word(v as u32 & 0xfffff, 0x12345, 20).unwrap();
            assert_eq!(masked_activation(w).unmask(), act);
        }
    }

    #[test]
    fn word_mux_exhaustive() {
        for sel in 0u8..4 {
            let s = MaskedBit::from_shares(sel & 1 == 1, sel & 2 == 2);
            for new in 0u32..16 {
                for old in 0u32..16 {
                    for r in [0u32, 0xf, 0x5] {
                        let n = mask_word(new, r ^ 0x9, 4).unwrap();
                        let o = mask_word(old, r ^ 0x6, 4).unwrap();
                        let out = masked_word_mux_with(s, n, o, r, None).unwrap();
                        assert_eq!(out.unmask(), if s.unmask() { new } else { old });
                    }
                }
            }
        }
    }

    #[test]
    fn argmax_examples_and_random() {
        let mut t = Trivium::seed(&[5; 10], &[6; 10]);
        let word = |v: i32, m: u32| mask_word(v as u32 & 0xfffff, m, 20).unwrap();
        let nine = [9, 0, 0, 0, 0, 0, 0, 0, 0, 0].map(|v| word(v, 77));
        assert_eq!(masked_argmax(&nine, 4, &mut t).unwrap().unmask(), 0);
        let ties = [3; 10].map(|v| word(v, 5));
        assert_eq!(masked_argmax(&ties, 4, &mut t).unwrap().unmask(), 0);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let vals: Vec<i32> = (0..10).map(|_| rng.gen_range(-(1 << 18)..(1 << 18))).collect();
            let words: Vec<MaskedWord> = vals.iter().map(|&v| word(v, rng.gen())).collect();
            let mut best = 0;
            for k in 1..10 {
                if vals[k] > vals[best] {
                    best = k;
                }
            }
            assert_eq!(masked_argmax(&words, 4, &mut t).unwrap().unmask() as usize, best);
        }
    }

    #[test]
    fn tiny_network_agrees_and_times() {
        let p = NetworkParams::generate(&TINY_DIMS, 101, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..5 {
            let img = Image::random(16, &mut rng);
            let mut prng = Trivium::derived(&[9; 10], i);
            let r = masked_infer(&p, &img, &mut prng, &mut NoObserver).unwrap();
            assert_eq!(r.class_shares.unmask() as usize, unmasked_infer(&p, &img).class);
            let a = analytic_masked_cycles(&TINY_DIMS, 101);
            assert_eq!(r.cycles, a.total);
            assert_eq!(r.drain, a.drain);
            assert_eq!(r.layers[0].stalls, 0);
            assert_eq!(r.layers[1].stalls, a.layers[1].stalls);
        }
    }

    #[test]
    fn zero_masks_reduce_to_plain_values() {
        let p = NetworkParams::generate(&[4, 2, 3], 2, 5).unwrap();
        let img = Image(vec![10, 200, 3, 77]);
        let r = masked_infer(&p, &img, &mut ZeroMasks::new(), &mut NoObserver).unwrap();
        let plain = unmasked_infer(&p, &img);
        for (w, &v) in r.output_sums.iter().zip(plain.sums.last().unwrap()) {
            assert_eq!(w.unmask_signed(), v as i64);
        }
        // scripted all-ones randomness is just another valid mask stream
        let mut ones = ScriptedMasks::new(vec![true]);
        let r1 = masked_infer(&p, &img, &mut ones, &mut NoObserver).unwrap();
        assert_eq!(r1.class_shares.unmask(), r.class_shares.unmask());
    }
}
