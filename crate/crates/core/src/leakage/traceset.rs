//! In-memory trace sets and the `BMNT` trace file.
//!
//! Layout (little endian): `"BMNT"`, `u16` version, `u32` trace count, `u32`
//! samples per trace, `u16` flags, `u32` metadata length, UTF-8 JSON metadata,
//! one `u8` label per trace, then the samples row-major as `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LeakageModelConfig;
use crate::error::{Error, Result};
use crate::tvla::{report_first_order, t_second_order_twopass, MomentAccumulator, TvlaReport, Window};

pub const BMNT_MAGIC: &[u8; 4] = b"BMNT";
pub const BMNT_VERSION: u16 = 1;
/// Flag bit set when the traces were captured with the PRNG on.
pub const FLAG_PRNG_ON: u16 = 1;
const MAX_META_LEN: u32 = 1 << 24;
/// Far above any design here; guards allocations against corrupt headers.
pub const MAX_SAMPLES: u32 = 1 << 26;
const HEADER_LEN: u64 = 4 + 2 + 4 + 4 + 2 + 4;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub design: String,
    pub prng: String,
    pub seed: u64,
    pub config: LeakageModelConfig,
    pub config_hash: String,
    /// Network dimensions, input first; empty for the gate array.
    pub dims: Vec<usize>,
    pub depth: usize,
    /// Simulated cycles per trace.
    pub cycles: u64,
    /// Input-load windows in sample indices.
    pub windows: Vec<Window>,
}

impl TraceMeta {
    fn flags(&self) -> u16 {
        if self.prng == "on" {
            FLAG_PRNG_ON
        } else {
            0
        }
    }
}

/// Labelled traces: class 0 is the fixed input, class 1 the random one.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSet {
    pub meta: TraceMeta,
    n_samples: usize,
    labels: Vec<u8>,
    samples: Vec<f32>,
}

impl TraceSet {
    pub fn new(n_samples: usize, meta: TraceMeta) -> Self {
        TraceSet {
            meta,
            n_samples,
            labels: Vec::new(),
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, label: u8, trace: &[f32]) -> Result<()> {
        if trace.len() != self.n_samples {
            return Err(Error::ShapeMismatch {
                expected: self.n_samples,
                got: trace.len(),
            });
        }
        if label > 1 {
            return Err(Error::Config(format!("label {label} is neither 0 nor 1")));
        }
        self.labels.push(label);
        self.samples.extend_from_slice(trace);
        Ok(())
    }

    pub fn n_traces(&self) -> usize {
        self.labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn trace(&self, i: usize) -> &[f32] {
        &self.samples[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f32], u8)> + Clone {
        self.labels.iter().enumerate().map(move |(i, &l)| (self.trace(i), l))
    }

    pub fn accumulator(&self, higher: bool) -> Result<MomentAccumulator> {
        let mut acc = MomentAccumulator::with_higher_moments(self.n_samples, higher);
        for (x, l) in self.iter() {
            acc.accumulate(x, l)?;
        }
        Ok(acc)
    }

    /// First-order test with the recorded input-load windows excluded.
    pub fn t_first_order(&self, threshold: f64) -> Result<TvlaReport> {
        report_first_order(&self.accumulator(false)?, threshold, &self.meta.windows)
    }

    /// Two-pass second-order test with the recorded windows excluded.
    pub fn t_second_order(&self, threshold: f64) -> Result<TvlaReport> {
        let (t, clamped, counts) = t_second_order_twopass(self.iter(), self.n_samples)?;
        Ok(TvlaReport::new(2, t, clamped, threshold, &self.meta.windows, counts))
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = BmntWriter::new(w, &self.meta, self.n_samples, &self.labels)?;
        for i in 0..self.n_traces() {
            out.write_trace(self.trace(i))?;
        }
        out.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        BmntReader::new(r)?.into_trace_set()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to memory");
        v
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        BmntReader::open(path)?.into_trace_set()
    }
}

/// Streaming `BMNT` writer. Labels go first, so they are fixed up front.
pub struct BmntWriter<W: Write> {
    w: W,
    n_samples: usize,
    remaining: usize,
    buf: Vec<u8>,
}

impl<W: Write> BmntWriter<W> {
    pub fn new(mut w: W, meta: &TraceMeta, n_samples: usize, labels: &[u8]) -> Result<Self> {
        let n_traces = u32::try_from(labels.len()).map_err(|_| Error::Format("too many traces".into()))?;
        let n_s = u32::try_from(n_samples).map_err(|_| Error::Format("too many samples".into()))?;
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Format("labels must be 0 or 1".into()));
        }
        let json = serde_json::to_vec(meta).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(BMNT_MAGIC)?;
        w.write_all(&BMNT_VERSION.to_le_bytes())?;
        w.write_all(&n_traces.to_le_bytes())?;
        w.write_all(&n_s.to_le_bytes())?;
        w.write_all(&meta.flags().to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(labels)?;
        Ok(BmntWriter {
            w,
            n_samples,
            remaining: labels.len(),
            buf: Vec::with_capacity(n_samples * 4),
        })
    }

    pub fn write_trace(&mut self, trace: &[f32]) -> Result<()> {
        if trace.len() != self.n_samples {
            return Err(Error::ShapeMismatch {
                expected: self.n_samples,
                got: trace.len(),
            });
        }
        if self.remaining == 0 {
            return Err(Error::Format("more traces than announced".into()));
        }
        self.buf.clear();
        for v in trace {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.w.write_all(&self.buf)?;
        self.remaining -= 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.remaining != 0 {
            return Err(Error::Format(format!("{} announced traces were not written", self.remaining)));
        }
        self.w.flush()?;
        Ok(self.w)
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == ErrorKind::UnexpectedEof {
        Error::Format("truncated trace file".into())
    } else {
        Error::Io(e)
    }
}

/// Streaming `BMNT` reader: header and labels up front, then one trace at a
/// time.
#[derive(Debug)]
pub struct BmntReader<R: Read> {
    r: R,
    meta: TraceMeta,
    n_samples: usize,
    labels: Vec<u8>,
    next: usize,
    buf: Vec<u8>,
    body_offset: u64,
}

impl BmntReader<BufReader<File>> {
    /// Opens a file and checks its length against the header.
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path)?;
        let len = f.metadata()?.len();
        let rd = BmntReader::new(BufReader::new(f))?;
        let expect = rd.body_offset + rd.labels.len() as u64 + rd.labels.len() as u64 * rd.n_samples as u64 * 4;
        if len != expect {
            return Err(Error::Format(format!("file is {len} bytes, header implies {expect}")));
        }
        Ok(rd)
    }
}

impl<R: Read> BmntReader<R> {
    pub fn new(mut r: R) -> Result<Self> {
        let mut head = [0u8; HEADER_LEN as usize];
        r.read_exact(&mut head).map_err(truncated)?;
        if &head[0..4] != BMNT_MAGIC {
            return Err(Error::Format("bad magic, not a BMNT trace file".into()));
        }
        let u16_at = |i: usize| u16::from_le_bytes([head[i], head[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes([head[i], head[i + 1], head[i + 2], head[i + 3]]);
        let version = u16_at(4);
        if version != BMNT_VERSION {
            return Err(Error::Format(format!("unsupported BMNT version {version}")));
        }
        let (n_traces, n_samples, flags, meta_len) = (u32_at(6), u32_at(10), u16_at(14), u32_at(16));
        if flags & !FLAG_PRNG_ON != 0 {
            return Err(Error::Format(format!("unknown flags {flags:#06x}")));
        }
        if n_samples > MAX_SAMPLES {
            return Err(Error::Format(format!("{n_samples} samples per trace is implausible")));
        }
        if meta_len > MAX_META_LEN {
            return Err(Error::Format(format!("metadata length {meta_len} is implausible")));
        }
        let mut json = vec![0u8; meta_len as usize];
        r.read_exact(&mut json).map_err(truncated)?;
        let text = std::str::from_utf8(&json).map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        let meta: TraceMeta = serde_json::from_str(text).map_err(|e| Error::Format(format!("metadata: {e}")))?;
        if meta.flags() != flags {
            return Err(Error::Format("flags disagree with metadata".into()));
        }
        // grow with the data rather than trusting the header
        let mut labels = Vec::new();
        (&mut r).take(n_traces as u64).read_to_end(&mut labels)?;
        if labels.len() != n_traces as usize {
            return Err(Error::Format("truncated trace file".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Format(format!("label {bad} is neither 0 nor 1")));
        }
        Ok(BmntReader {
            r,
            meta,
            n_samples: n_samples as usize,
            labels,
            next: 0,
            buf: Vec::new(),
            body_offset: HEADER_LEN + meta_len as u64,
        })
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_traces(&self) -> usize {
        self.labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Reads the next trace into `out`; `None` after the last one, once the
    /// input is confirmed to end there.
    pub fn next_trace(&mut self, out: &mut [f32]) -> Result<Option<u8>> {
        if out.len() != self.n_samples {
            return Err(Error::ShapeMismatch {
                expected: self.n_samples,
                got: out.len(),
            });
        }
        if self.next == self.labels.len() {
            let mut probe = [0u8; 1];
            return match self.r.read(&mut probe)? {
                0 => Ok(None),
                _ => Err(Error::Format("trailing bytes after the last trace".into())),
            };
        }
        self.buf.clear();
        (&mut self.r).take(self.n_samples as u64 * 4).read_to_end(&mut self.buf)?;
        if self.buf.len() != self.n_samples * 4 {
            return Err(Error::Format("truncated trace file".into()));
        }
        for (o, c) in out.iter_mut().zip(self.buf.chunks_exact(4)) {
            *o = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
        let l = self.labels[self.next];
        self.next += 1;
        Ok(Some(l))
    }

    pub fn into_trace_set(mut self) -> Result<TraceSet> {
        let mut ts = TraceSet::new(self.n_samples, self.meta.clone());
        let mut buf = vec![0.0f32; self.n_samples];
        while let Some(l) = self.next_trace(&mut buf)? {
            ts.push(l, &buf)?;
        }
        Ok(ts)
    }

    /// Feeds every remaining trace into an accumulator.
    pub fn accumulate(&mut self, acc: &mut MomentAccumulator) -> Result<()> {
        let mut buf = vec![0.0f32; self.n_samples];
        while let Some(l) = self.next_trace(&mut buf)? {
            acc.accumulate(&buf, l)?;
        }
        Ok(())
    }
}
