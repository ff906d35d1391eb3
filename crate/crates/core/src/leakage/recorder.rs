//! Observers that turn datapath events into per-cycle activity.

use crate::arith::AddRecord;
use crate::bnn::{EngineObserver, MuxRecord, UnmaskedObserver, ACC_WIDTH, PIXEL_WIDTH};
use crate::circuit::{Simulator, FULL_ADDER_LATENCY, MUX_BIT_LATENCY};
use crate::error::Error;
use crate::masking::width_mask;

use super::tables::WeightedTable;

/// Operand share bits `a0 a1 b0 b1` of a packed slice input.
const OPERAND_BITS: u16 = 0xF;

/// Activity of one masked inference.
///
/// Adder slice `k` sees an operation in cycles `issue + 5k .. issue + 5k + 5`;
/// the operand skew registers in front of it and the sum deskew registers
/// behind it shift the shares along, and the result is written to the
/// accumulator slot `latency` cycles after issue. Every register is clock
/// gated, so it only flips against the value of the previous operation.
pub(crate) struct MaskedRecorder<'a> {
    slice: &'a WeightedTable,
    mux: &'a WeightedTable,
    alpha_reg: f32,
    alpha_glitch: f32,
    latency: usize,
    activity: Vec<f32>,
    ramp: Vec<f32>,
    prev_slice: Vec<u16>,
    prev_sum: Vec<u8>,
    slots: Vec<(u32, u32)>,
    prev_pixel: u32,
    prev_mux: Vec<u8>,
    slice_profile: Vec<u8>,
    mux_profile: Vec<u8>,
    pub pixel_loads: Vec<u64>,
}

impl<'a> MaskedRecorder<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        slice: &'a WeightedTable,
        mux: &'a WeightedTable,
        alpha_reg: f64,
        alpha_glitch: f64,
        cycles: usize,
        depth: usize,
        slice_profile: Vec<u8>,
        mux_profile: Vec<u8>,
    ) -> Self {
        MaskedRecorder {
            slice,
            mux,
            alpha_reg: alpha_reg as f32,
            alpha_glitch: alpha_glitch as f32,
            latency: FULL_ADDER_LATENCY as usize * ACC_WIDTH as usize,
            activity: vec![0.0; cycles],
            ramp: vec![0.0; cycles + 1],
            prev_slice: vec![0; ACC_WIDTH as usize],
            prev_sum: vec![0; ACC_WIDTH as usize],
            slots: vec![(0, 0); depth + 1],
            prev_pixel: 0,
            prev_mux: vec![0; mux_profile.len()],
            slice_profile,
            mux_profile,
            pixel_loads: Vec::new(),
        }
    }

    fn add_at(&mut self, cycle: usize, v: f32) {
        if let Some(a) = self.activity.get_mut(cycle) {
            *a += v;
        }
    }

    /// Adds `v` to every cycle in `start..end`.
    fn add_range(&mut self, start: usize, end: usize, v: f32) {
        let n = self.activity.len();
        if start >= end || start >= n || v == 0.0 {
            return;
        }
        self.ramp[start] += v;
        self.ramp[end.min(n)] -= v;
    }

    pub fn finish(mut self) -> Vec<f32> {
        let mut run = 0.0f32;
        for (a, r) in self.activity.iter_mut().zip(&self.ramp) {
            run += r;
            *a += run;
        }
        self.activity
    }
}

impl EngineObserver for MaskedRecorder<'_> {
    fn wants_slices(&self) -> bool {
        true
    }

    fn on_pixel_load(&mut self, cycle: u64, pixel: u8) {
        let m = width_mask(PIXEL_WIDTH);
        let (p, q) = (self.prev_pixel, pixel as u32);
        let hd = (p ^ q).count_ones() as f32;
        // the negated operand is derived combinationally from the register
        let neg = ((p.wrapping_neg() ^ q.wrapping_neg()) & m).count_ones() as f32;
        self.add_at(cycle as usize, self.alpha_reg * hd + self.alpha_glitch * neg);
        self.prev_pixel = q;
        self.pixel_loads.push(cycle);
    }

    fn on_add(&mut self, rec: &AddRecord, slot: usize) {
        let c = rec.cycle as usize;
        let stages = FULL_ADDER_LATENCY as usize;
        let (r0, r1) = (rec.result.s0(), rec.result.s1());
        for (k, &cur) in rec.slices.iter().enumerate() {
            let prev = self.prev_slice[k];
            let p = self.slice_profile[k] as usize;
            let base = c + stages * k;
            for s in 0..stages {
                let v = self.slice.get(s, p, prev as usize, cur as usize);
                self.add_at(base + s, v);
            }
            let skew = ((prev ^ cur) & OPERAND_BITS).count_ones() as f32;
            self.add_range(c, base, self.alpha_reg * skew);
            let sum = ((r0 >> k) & 1 | ((r1 >> k) & 1) << 1) as u8;
            let deskew = (sum ^ self.prev_sum[k]).count_ones() as f32;
            self.add_range(base + stages, c + self.latency, self.alpha_reg * deskew);
            self.prev_slice[k] = cur;
            self.prev_sum[k] = sum;
        }
        let i = slot.min(self.slots.len() - 1);
        let (o0, o1) = self.slots[i];
        let hd = ((o0 ^ r0).count_ones() + (o1 ^ r1).count_ones()) as f32;
        self.slots[i] = (r0, r1);
        self.add_at(c + self.latency, self.alpha_reg * hd);
    }

    fn on_mux(&mut self, rec: &MuxRecord) {
        let c = rec.cycle as usize;
        for (i, &cur) in rec.cells.iter().enumerate() {
            let prev = self.prev_mux[i];
            let p = self.mux_profile[i] as usize;
            for s in 0..MUX_BIT_LATENCY as usize {
                let v = self.mux.get(s, p, prev as usize, cur as usize);
                self.add_at(c + s, v);
            }
            self.prev_mux[i] = cur;
        }
    }
}

/// Activity of the unmasked engine: one step of the ripple adder per add.
pub(crate) struct UnmaskedRecorder {
    sim: Simulator,
    alpha_reg: f32,
    alpha_glitch: f32,
    inputs: Vec<bool>,
    activity: Vec<f32>,
    error: Option<Error>,
}

impl UnmaskedRecorder {
    pub fn new(sim: Simulator, alpha_reg: f64, alpha_glitch: f64, cycles: usize) -> Self {
        UnmaskedRecorder {
            inputs: vec![false; sim.circuit().inputs().len()],
            sim,
            alpha_reg: alpha_reg as f32,
            alpha_glitch: alpha_glitch as f32,
            activity: vec![0.0; cycles],
            error: None,
        }
    }

    pub fn finish(self) -> crate::Result<Vec<f32>> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.activity),
        }
    }
}

impl UnmaskedObserver for UnmaskedRecorder {
    fn on_add(&mut self, cycle: u64, acc: u32, operand: u32, sub: bool) {
        if self.error.is_some() {
            return;
        }
        let n = ACC_WIDTH as usize;
        let y = if sub { !operand } else { operand };
        for k in 0..n {
            self.inputs[k] = (acc >> k) & 1 == 1;
            self.inputs[n + k] = (y >> k) & 1 == 1;
        }
        self.inputs[2 * n] = sub;
        match self.sim.step(&self.inputs) {
            Ok(t) => {
                if let Some(a) = self.activity.get_mut(cycle as usize) {
                    *a += self.alpha_reg * t.reg_hd as f32 + self.alpha_glitch * t.toggles as f32;
                }
            }
            Err(e) => self.error = Some(e),
        }
    }
}
