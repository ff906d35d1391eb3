//! Synthetic power traces under the fixed-vs-random protocol.
//!
//! A sample is `alpha_reg * register_flips + alpha_glitch * toggles + noise`
//! for one clock cycle, where flips and toggles come from the delta-cycle
//! simulation of the cells the design is built from. Nothing else about the
//! computation enters a trace.
//!
//! Trace `i` is a pure function of `(seed, i)`: its class, input, jitter
//! profiles and noise come from a ChaCha stream selected by `i`, and its
//! masks from TRIVIUM keyed by a seed-derived base key with IV `i`. Captures
//! are therefore identical for any worker count.

pub mod recorder;
pub mod tables;
pub mod traceset;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bnn::{masked_infer, unmasked_infer_observed, Image, NetworkParams, ACC_WIDTH, CONTROL_CYCLES};
use crate::circuit::{build_gate_array, build_ripple_adder, CellStyle, Circuit, Simulator, REGISTERED_TRICHINA_LATENCY};
use crate::error::{Error, Result};
use crate::masking::mask;
use crate::trivium::{Key, MaskSource, Trivium, ZeroMasks, KEY_BYTES};
use crate::tvla::{MomentAccumulator, Window};

use recorder::{MaskedRecorder, UnmaskedRecorder};
use tables::{profiled_circuits, CellTables, WeightedTable, JITTER_PROFILES};
pub use traceset::{BmntReader, BmntWriter, TraceMeta, TraceSet, BMNT_MAGIC, BMNT_VERSION, FLAG_PRNG_ON};

/// Trichina cells in the gate-array experiment.
pub const GATE_ARRAY_CELLS: usize = 32;
/// Samples per gate-array trace: the cell latency plus the cycle that shows
/// the outputs.
pub const GATE_ARRAY_CYCLES: usize = REGISTERED_TRICHINA_LATENCY as usize + 1;
/// Largest supported arrival offset.
pub const MAX_JITTER: u32 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageModelConfig {
    pub alpha_reg: f64,
    pub alpha_glitch: f64,
    pub noise_sigma: f64,
    pub samples_per_cycle: u32,
    /// Input arrival offsets are drawn from `0..=jitter` delta steps.
    pub jitter: u32,
}

impl Default for LeakageModelConfig {
    fn default() -> Self {
        LeakageModelConfig {
            alpha_reg: 1.0,
            alpha_glitch: 0.5,
            noise_sigma: 2.0,
            samples_per_cycle: 1,
            jitter: 3,
        }
    }
}

impl LeakageModelConfig {
    /// Reports every violated constraint in one message.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("alpha_reg", self.alpha_reg),
            ("alpha_glitch", self.alpha_glitch),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                bad.push(format!("{name} must be finite and >= 0 (got {v})"));
            }
        }
        if self.samples_per_cycle != 1 {
            bad.push(format!("samples_per_cycle must be 1 (got {})", self.samples_per_cycle));
        }
        if self.jitter > MAX_JITTER {
            bad.push(format!("jitter must be at most {MAX_JITTER} (got {})", self.jitter));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Short SHA-256 fingerprint of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    Unmasked,
    Masked,
    GateArray,
}

impl Design {
    pub fn name(self) -> &'static str {
        match self {
            Design::Unmasked => "unmasked",
            Design::Masked => "masked",
            Design::GateArray => "gate-array",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unmasked" => Ok(Design::Unmasked),
            "masked" => Ok(Design::Masked),
            "gate-array" | "gate_array" => Ok(Design::GateArray),
            _ => Err(Error::Config(format!("unknown design {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrngMode {
    On,
    Off,
}

impl PrngMode {
    pub fn name(self) -> &'static str {
        match self {
            PrngMode::On => "on",
            PrngMode::Off => "off",
        }
    }
}

impl FromStr for PrngMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(PrngMode::On),
            "off" => Ok(PrngMode::Off),
            _ => Err(Error::Config(format!("prng mode must be on or off, got {s:?}"))),
        }
    }
}

/// TRIVIUM base key derived from a capture seed.
pub fn base_key(seed: u64) -> Key {
    let mut h = Sha256::new();
    h.update(b"bomasim trivium base key");
    h.update(seed.to_le_bytes());
    let mut k = [0u8; KEY_BYTES];
    k.copy_from_slice(&h.finalize()[..KEY_BYTES]);
    k
}

/// Merges sorted cycle indices into windows.
fn windows_from_cycles(cycles: &[u64]) -> Vec<Window> {
    let mut out: Vec<Window> = Vec::new();
    for &c in cycles {
        let c = c as usize;
        match out.last_mut() {
            Some(w) if w.end == c => w.end = c + 1,
            _ => out.push(Window { start: c, end: c + 1 }),
        }
    }
    out
}

/// A configured capture. Cheap to query per trace and shareable across
/// worker threads.
pub struct Capture {
    design: Design,
    params: Option<NetworkParams>,
    cfg: LeakageModelConfig,
    prng: PrngMode,
    seed: u64,
    key: Key,
    fixed: Image,
    n_samples: usize,
    windows: Vec<Window>,
    slice: Option<WeightedTable>,
    mux: Option<WeightedTable>,
    /// Reset simulators of the ripple adder or gate array, one per profile.
    resets: Vec<Simulator>,
    gate_style: CellStyle,
}

impl Capture {
    /// `params` is required for the two engine designs.
    pub fn new(design: Design, params: Option<&NetworkParams>, cfg: &LeakageModelConfig, prng: PrngMode, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let params = match design {
            Design::GateArray => None,
            _ => Some(
                params
                    .ok_or_else(|| Error::Config(format!("design {design} needs network parameters")))?
                    .clone(),
            ),
        };
        let mut cap = Capture {
            design,
            fixed: Image::fixed(params.as_ref().map_or(0, |p| p.input_count())),
            params,
            cfg: cfg.clone(),
            prng,
            seed,
            key: base_key(seed),
            n_samples: 0,
            windows: Vec::new(),
            slice: None,
            mux: None,
            resets: Vec::new(),
            gate_style: CellStyle::Registered,
        };
        cap.prepare(None)?;
        Ok(cap)
    }

    fn prepare(&mut self, offsets: Option<&[u32]>) -> Result<()> {
        let reset_sims = |base: Circuit, jitter: u32| -> Result<Vec<Simulator>> {
            let circuits = match offsets {
                Some(o) => {
                    let mut c = base;
                    c.set_arrivals(o)?;
                    vec![Arc::new(c)]
                }
                None => profiled_circuits(&base, jitter)?,
            };
            Ok(circuits.into_iter().map(Simulator::new).collect())
        };
        match self.design {
            Design::Masked => {
                let p = self.params.as_ref().expect("engine designs carry params");
                let t = CellTables::cached(self.cfg.jitter)?;
                self.slice = Some(t.slice.weighted(self.cfg.alpha_reg, self.cfg.alpha_glitch));
                self.mux = Some(t.mux.weighted(self.cfg.alpha_reg, self.cfg.alpha_glitch));
                // schedule and pixel loads do not depend on data or masks
                let mut probe = PixelLoads(Vec::new());
                let r = masked_infer(p, &self.fixed, &mut ZeroMasks::new(), &mut probe)?;
                self.n_samples = r.cycles as usize;
                self.windows = windows_from_cycles(&probe.0);
            }
            Design::Unmasked => {
                let p = self.params.as_ref().expect("engine designs carry params");
                self.resets = reset_sims(build_ripple_adder(ACC_WIDTH)?, self.cfg.jitter)?;
                self.n_samples = crate::bnn::unmasked_cycles(&p.dims()) as usize;
                let first = CONTROL_CYCLES as usize;
                let l0 = &p.layers()[0];
                self.windows = vec![Window {
                    start: first,
                    end: first + l0.n_in * l0.n_out,
                }];
            }
            Design::GateArray => {
                self.resets = reset_sims(build_gate_array(GATE_ARRAY_CELLS, self.gate_style)?, self.cfg.jitter)?;
                self.n_samples = GATE_ARRAY_CYCLES;
                self.windows = Vec::new();
            }
        }
        Ok(())
    }

    /// Replaces the fixed-class input (engine designs).
    pub fn with_fixed_image(mut self, img: Image) -> Result<Self> {
        if img.pixels().len() != self.fixed.pixels().len() {
            return Err(Error::ShapeMismatch {
                expected: self.fixed.pixels().len(),
                got: img.pixels().len(),
            });
        }
        self.fixed = img;
        Ok(self)
    }

    /// Gate-array cell style and, optionally, fixed arrival offsets for its
    /// `4 + GATE_ARRAY_CELLS` ports instead of random profiles.
    pub fn with_gate_array(mut self, style: CellStyle, offsets: Option<&[u32]>) -> Result<Self> {
        if self.design != Design::GateArray {
            return Err(Error::Config("gate-array options need the gate-array design".into()));
        }
        self.gate_style = style;
        self.prepare(offsets)?;
        Ok(self)
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn config(&self) -> &LeakageModelConfig {
        &self.cfg
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Input-load windows in sample indices.
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn meta(&self) -> TraceMeta {
        TraceMeta {
            design: self.design.name().into(),
            prng: self.prng.name().into(),
            seed: self.seed,
            config: self.cfg.clone(),
            config_hash: self.cfg.hash(),
            dims: self.params.as_ref().map(|p| p.dims()).unwrap_or_default(),
            depth: self.params.as_ref().map_or(0, |p| p.depth()),
            cycles: self.n_samples as u64,
            windows: self.windows.clone(),
        }
    }

    fn trace_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Class of trace `index` (0 fixed, 1 random) without simulating it.
    pub fn label(&self, index: u64) -> u8 {
        self.trace_rng(index).gen::<bool>() as u8
    }

    /// Simulates trace `index` into `out` and returns its label.
    pub fn trace(&self, index: u64, out: &mut [f32]) -> Result<u8> {
        if out.len() != self.n_samples {
            return Err(Error::ShapeMismatch {
                expected: self.n_samples,
                got: out.len(),
            });
        }
        let mut rng = self.trace_rng(index);
        let label = rng.gen::<bool>() as u8;
        let mut masks: Box<dyn MaskSource> = match self.prng {
            PrngMode::On => Box::new(Trivium::derived(&self.key, index)),
            PrngMode::Off => Box::new(ZeroMasks::new()),
        };
        let image = |rng: &mut ChaCha8Rng| match label {
            0 => self.fixed.clone(),
            _ => Image::random(self.fixed.pixels().len(), rng),
        };
        match self.design {
            Design::Masked => {
                let p = self.params.as_ref().expect("engine designs carry params");
                let img = image(&mut rng);
                let slice_profile = (0..ACC_WIDTH).map(|_| rng.gen_range(0..JITTER_PROFILES) as u8).collect();
                let mux_profile = (0..ACC_WIDTH + p.index_width())
                    .map(|_| rng.gen_range(0..JITTER_PROFILES) as u8)
                    .collect();
                let mut rec = MaskedRecorder::new(
                    self.slice.as_ref().expect("tables prepared"),
                    self.mux.as_ref().expect("tables prepared"),
                    self.cfg.alpha_reg,
                    self.cfg.alpha_glitch,
                    self.n_samples,
                    p.depth(),
                    slice_profile,
                    mux_profile,
                );
                let r = masked_infer(p, &img, masks.as_mut(), &mut rec)?;
                debug_assert_eq!(r.cycles as usize, self.n_samples);
                out.copy_from_slice(&rec.finish());
            }
            Design::Unmasked => {
                let p = self.params.as_ref().expect("engine designs carry params");
                let img = image(&mut rng);
                let sim = self.resets[rng.gen_range(0..self.resets.len())].clone();
                let mut rec = UnmaskedRecorder::new(sim, self.cfg.alpha_reg, self.cfg.alpha_glitch, self.n_samples);
                unmasked_infer_observed(p, &img, &mut rec);
                out.copy_from_slice(&rec.finish()?);
            }
            Design::GateArray => {
                let (a, b) = match label {
                    0 => (true, true),
                    _ => (rng.gen(), rng.gen()),
                };
                let ma = mask(a, masks.bit()?);
                let mb = mask(b, masks.bit()?);
                let r = masks.draw(GATE_ARRAY_CELLS as u32)?;
                let mut inputs = vec![ma.s0(), ma.s1(), mb.s0(), mb.s1()];
                inputs.extend((0..GATE_ARRAY_CELLS).map(|i| (r >> i) & 1 == 1));
                let mut sim = self.resets[rng.gen_range(0..self.resets.len())].clone();
                for o in out.iter_mut() {
                    let t = sim.step(&inputs)?;
                    *o = (self.cfg.alpha_reg * t.reg_hd as f64 + self.cfg.alpha_glitch * t.toggles as f64) as f32;
                }
            }
        }
        if self.cfg.noise_sigma > 0.0 {
            let nd = Normal::new(0.0, self.cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
            for o in out.iter_mut() {
                *o += nd.sample(&mut rng) as f32;
            }
        }
        Ok(label)
    }

    /// Runs traces `0..n` on up to `workers` threads and hands them to `f` in
    /// index order.
    pub fn for_each<F>(&self, n: u64, workers: usize, mut f: F) -> Result<()>
    where
        F: FnMut(u64, u8, &[f32]) -> Result<()>,
    {
        let workers = workers.max(1);
        let batch = 16 * workers;
        let mut bufs = vec![vec![0.0f32; self.n_samples]; batch.min(n as usize)];
        let mut labels = vec![0u8; bufs.len()];
        let mut start = 0u64;
        while start < n {
            let len = (batch as u64).min(n - start) as usize;
            let per = len.div_ceil(workers);
            std::thread::scope(|s| -> Result<()> {
                let handles: Vec<_> = bufs[..len]
                    .chunks_mut(per)
                    .zip(labels[..len].chunks_mut(per))
                    .enumerate()
                    .map(|(w, (bs, ls))| {
                        let first = start + (w * per) as u64;
                        s.spawn(move || -> Result<()> {
                            for (j, (b, l)) in bs.iter_mut().zip(ls.iter_mut()).enumerate() {
                                *l = self.trace(first + j as u64, b)?;
                            }
                            Ok(())
                        })
                    })
                    .collect();
                for h in handles {
                    h.join().expect("capture worker panicked")?;
                }
                Ok(())
            })?;
            for j in 0..len {
                f(start + j as u64, labels[j], &bufs[j])?;
            }
            start += len as u64;
        }
        Ok(())
    }

    /// Streams traces `0..n` into moment accumulators, one per worker over a
    /// contiguous index range, merged in order.
    pub fn accumulate(&self, n: u64, workers: usize, higher: bool) -> Result<MomentAccumulator> {
        let workers = (workers.max(1) as u64).min(n.max(1));
        let per = n.div_ceil(workers);
        let parts = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let range = (w * per).min(n)..((w + 1) * per).min(n);
                    s.spawn(move || -> Result<MomentAccumulator> {
                        let mut acc = MomentAccumulator::with_higher_moments(self.n_samples, higher);
                        let mut buf = vec![0.0f32; self.n_samples];
                        for i in range {
                            let l = self.trace(i, &mut buf)?;
                            acc.accumulate(&buf, l)?;
                        }
                        Ok(acc)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("capture worker panicked"))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut it = parts.into_iter();
        let mut acc = it.next().expect("at least one worker");
        for p in it {
            acc.merge(&p)?;
        }
        Ok(acc)
    }

    /// Captures traces `0..n` into memory.
    pub fn collect(&self, n: u64, workers: usize) -> Result<TraceSet> {
        let mut ts = TraceSet::new(self.n_samples, self.meta());
        self.for_each(n, workers, |_, l, x| ts.push(l, x))?;
        Ok(ts)
    }

    /// Streams traces `0..n` to a `BMNT` writer.
    pub fn write<W: std::io::Write>(&self, n: u64, workers: usize, w: W) -> Result<W> {
        let labels: Vec<u8> = (0..n).map(|i| self.label(i)).collect();
        let mut out = BmntWriter::new(w, &self.meta(), self.n_samples, &labels)?;
        self.for_each(n, workers, |_, _, x| out.write_trace(x))?;
        out.finish()
    }
}

struct PixelLoads(Vec<u64>);

impl crate::bnn::EngineObserver for PixelLoads {
    fn on_pixel_load(&mut self, cycle: u64, _pixel: u8) {
        self.0.push(cycle);
    }
}

/// One-shot capture into memory with the fixed image (engine designs) and a
/// single worker.
pub fn capture(
    design: Design,
    params: Option<&NetworkParams>,
    n: u64,
    cfg: &LeakageModelConfig,
    fixed_image: Option<&Image>,
    prng: PrngMode,
    seed: u64,
) -> Result<TraceSet> {
    let mut cap = Capture::new(design, params, cfg, prng, seed)?;
    if let Some(img) = fixed_image {
        cap = cap.with_fixed_image(img.clone())?;
    }
    cap.collect(n, 1)
}
