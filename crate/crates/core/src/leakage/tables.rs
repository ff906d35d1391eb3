//! Per-transition activity of the pipelined cells, measured once with the
//! delta-cycle simulator and looked up during capture.
//!
//! A pipelined cell only moves when an operation passes through it, so the
//! activity of stage `s` is a function of the cell inputs of the previous
//! operation and of the current one. Stage 0 also depends on the arrival
//! offsets of the input ports; stages behind the first register do not.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{build_masked_full_adder, build_mux_bit_cell, Circuit, CycleTrace, Simulator, FULL_ADDER_LATENCY, MUX_BIT_LATENCY};
use crate::error::Result;

/// Arrival-offset profiles per cell; a trace draws one per cell instance.
pub const JITTER_PROFILES: usize = 4;

const PROFILE_SEED: u64 = 0x6a69_7474_6572;

/// Register flips and combinational toggles of one cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Activity {
    pub reg_hd: u32,
    pub toggles: u32,
}

impl From<CycleTrace> for Activity {
    fn from(t: CycleTrace) -> Self {
        Activity {
            reg_hd: t.reg_hd,
            toggles: t.toggles,
        }
    }
}

/// Offsets in `0..=jitter` for `ports` input ports. Profile 0 is always the
/// aligned one.
pub fn jitter_profiles(ports: usize, jitter: u32) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROFILE_SEED ^ ports as u64);
    (0..JITTER_PROFILES)
        .map(|p| (0..ports).map(|_| if p == 0 { 0 } else { rng.gen_range(0..=jitter) }).collect())
        .collect()
}

/// One circuit per jitter profile.
pub fn profiled_circuits(base: &Circuit, jitter: u32) -> Result<Vec<Arc<Circuit>>> {
    jitter_profiles(base.inputs().len(), jitter)
        .iter()
        .map(|offsets| {
            let mut c = base.clone();
            c.set_arrivals(offsets)?;
            Ok(Arc::new(c))
        })
        .collect()
}

/// `[stage][prev][cur]` activity for a cell with `bits` input ports.
#[derive(Clone, Debug)]
pub struct TransitionTable {
    bits: u32,
    stages: usize,
    /// Stage-0 tables, one per profile, then stages `1..stages`.
    tables: Vec<Vec<Activity>>,
}

impl TransitionTable {
    /// Measures every transition: settle the cell on `prev`, switch the
    /// ports to `cur`, and record `stages` cycles.
    pub fn measure(circuits: &[Arc<Circuit>], stages: usize) -> Result<Self> {
        let bits = circuits[0].inputs().len() as u32;
        let n = 1usize << bits;
        let profiles = circuits.len();
        let mut tables = vec![vec![Activity::default(); n * n]; profiles + stages - 1];
        let to_bits = |x: usize| -> Vec<bool> { (0..bits).map(|k| (x >> k) & 1 == 1).collect() };
        let inputs: Vec<Vec<bool>> = (0..n).map(to_bits).collect();
        for (pi, c) in circuits.iter().enumerate() {
            let depth = if pi == 0 { stages } else { 1 };
            for prev in 0..n {
                let mut warm = Simulator::new(Arc::clone(c));
                for _ in 0..=stages {
                    warm.step(&inputs[prev])?;
                }
                for cur in 0..n {
                    let mut sim = warm.clone();
                    for st in 0..depth {
                        let t = sim.step(&inputs[cur])?;
                        let table = if st == 0 { pi } else { profiles + st - 1 };
                        tables[table][prev * n + cur] = t.into();
                    }
                }
            }
        }
        Ok(TransitionTable { bits, stages, tables })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn get(&self, stage: usize, profile: usize, prev: usize, cur: usize) -> Activity {
        let t = if stage == 0 { profile } else { JITTER_PROFILES + stage - 1 };
        self.tables[t][(prev << self.bits) | cur]
    }

    /// Collapses the table into sample contributions for given weights.
    pub fn weighted(&self, alpha_reg: f64, alpha_glitch: f64) -> WeightedTable {
        WeightedTable {
            bits: self.bits,
            tables: self
                .tables
                .iter()
                .map(|t| {
                    t.iter()
                        .map(|a| (alpha_reg * a.reg_hd as f64 + alpha_glitch * a.toggles as f64) as f32)
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightedTable {
    bits: u32,
    tables: Vec<Vec<f32>>,
}

impl WeightedTable {
    #[inline]
    pub fn get(&self, stage: usize, profile: usize, prev: usize, cur: usize) -> f32 {
        let t = if stage == 0 { profile } else { JITTER_PROFILES + stage - 1 };
        self.tables[t][(prev << self.bits) | cur]
    }
}

/// Transition tables of the adder slice and of the multiplexer bit cell.
#[derive(Debug)]
pub struct CellTables {
    pub slice: TransitionTable,
    pub mux: TransitionTable,
}

impl CellTables {
    pub fn measure(jitter: u32) -> Result<Self> {
        let slice = profiled_circuits(&build_masked_full_adder()?, jitter)?;
        let mux = profiled_circuits(&build_mux_bit_cell()?, jitter)?;
        Ok(CellTables {
            slice: TransitionTable::measure(&slice, FULL_ADDER_LATENCY as usize)?,
            mux: TransitionTable::measure(&mux, MUX_BIT_LATENCY as usize)?,
        })
    }

    /// Measured once per jitter range and shared afterwards.
    pub fn cached(jitter: u32) -> Result<Arc<CellTables>> {
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<CellTables>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(t) = map.get(&jitter) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(CellTables::measure(jitter)?);
        map.insert(jitter, Arc::clone(&t));
        Ok(t)
    }
}
