//! Closed-form cycle counts for both engines.
//!
//! The masked engine shares one pipelined adder between `D` interleaved node
//! accumulations. A node issues once per round; round 0 loads its bias (a
//! remasking add), round `j` adds the contribution of input `j - 1`. Within a
//! group of `g` nodes consecutive rounds start `max(g, latency + 1)` cycles
//! apart, so a full group of `D = latency + 1` nodes never stalls while a
//! smaller output group waits `latency + 1 - g` cycles per round.

use super::masked::ARGMAX_MUX_CYCLES;
use super::ACC_WIDTH;
use crate::circuit::FULL_ADDER_LATENCY;

/// Idle cycles spent on layer set-up, in both engines.
pub const CONTROL_CYCLES: u64 = 2;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LayerPlan {
    pub n_in: usize,
    pub n_out: usize,
    /// Group sizes in issue order.
    pub groups: Vec<usize>,
    /// Adds issued, including the bias round.
    pub issue_slots: u64,
    /// Cycles without an issue between the first and last issue.
    pub stalls: u64,
    /// Issue cycles of the layer (slots plus stalls), without control.
    pub cycles: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleBreakdown {
    pub control: u64,
    pub layers: Vec<LayerPlan>,
    /// Wait after the last issue until the final sums are written back.
    pub drain: u64,
    pub argmax: u64,
    pub total: u64,
}

pub fn adder_latency() -> u64 {
    FULL_ADDER_LATENCY as u64 * ACC_WIDTH as u64
}

pub fn plan_layer(n_in: usize, n_out: usize, depth: usize, latency: u64) -> LayerPlan {
    let groups: Vec<usize> = (0..n_out).step_by(depth).map(|s| depth.min(n_out - s)).collect();
    let mut cycles = 0u64;
    for &g in &groups {
        let spacing = (g as u64).max(latency + 1);
        cycles += n_in as u64 * spacing + g as u64;
    }
    let issue_slots = (n_out * (n_in + 1)) as u64;
    LayerPlan {
        n_in,
        n_out,
        groups,
        issue_slots,
        stalls: cycles - issue_slots,
        cycles,
    }
}

/// Masked engine cycle count for `dims` (input first) and interleave depth.
///
/// Assumes no layer waits on an activation from the previous layer, which
/// holds whenever the bias round of the next layer is at least one adder
/// latency long (true for both shipped topologies); the simulated engine
/// stalls instead when it does not, so a mismatch exposes such a case.
pub fn analytic_masked_cycles(dims: &[usize], depth: usize) -> CycleBreakdown {
    let lat = adder_latency();
    let layers: Vec<LayerPlan> = dims.windows(2).map(|w| plan_layer(w[0], w[1], depth, lat)).collect();
    let control = CONTROL_CYCLES * layers.len() as u64;
    let n_out = *dims.last().unwrap_or(&1) as u64;
    let argmax = n_out.saturating_sub(1) * (lat + 1 + ARGMAX_MUX_CYCLES);
    let drain = lat;
    let total = control + layers.iter().map(|l| l.cycles).sum::<u64>() + drain + argmax;
    CycleBreakdown {
        control,
        layers,
        drain,
        argmax,
        total,
    }
}

/// Baseline: one add per cycle, bias preloaded, control per layer, one
/// comparison per cycle for the argmax.
pub fn unmasked_cycles(dims: &[usize]) -> u64 {
    let adds: u64 = dims.windows(2).map(|w| (w[0] * w[1]) as u64 + CONTROL_CYCLES).sum();
    adds + dims.last().map_or(0, |&n| n.saturating_sub(1) as u64)
}
