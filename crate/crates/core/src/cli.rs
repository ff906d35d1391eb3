//! Command-line front end. Flags take precedence over `BOMASIM_*` environment
//! variables, which take precedence over the defaults.
//!
//! Exit codes: 0 when every requested check holds, 1 when a check fails, 2 on
//! errors (bad arguments, unreadable files, ...).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bnn::{
    analytic_masked_cycles, check_dims, masked_infer, unmasked_cycles, unmasked_infer, Image, NetworkParams, NoObserver,
    DEFAULT_DEPTH, DEFAULT_DIMS, TINY_DIMS,
};
use crate::circuit::{
    build_trichina_cell, probe_independence, CellStyle, ProbeSpec, Simulator, REGISTERED_TRICHINA_LATENCY,
};
use crate::error::{Error, Result};
use crate::leakage::{BmntReader, BmntWriter, Capture, Design, LeakageModelConfig, PrngMode, GATE_ARRAY_CELLS};
use crate::trivium::{parse_hex80, MaskSource, Trivium, ZeroMasks, IV_BYTES};
use crate::tvla::{
    report_first_order, summary_json, write_csv, MomentAccumulator, TvlaReport, Window, DEFAULT_THRESHOLD,
};

#[derive(Parser, Debug)]
#[command(name = "bomasim", version, about = "Masked BNN accelerator model with TVLA leakage evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write deterministic pseudo-random network parameters (BMNP).
    GenParams(GenParamsArgs),
    /// Run inference on the masked and/or unmasked engine.
    Infer(InferArgs),
    /// Capture synthetic power traces (BMNT), optionally testing them on the fly.
    Capture(CaptureArgs),
    /// Fixed-vs-random Welch t-tests on a trace file.
    Ttest(TtestArgs),
    /// Trichina gate experiments: 32-cell array TVLA or a single cell probe.
    GateExp(GateExpArgs),
    /// Cycle counts, analytic and simulated.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Masked,
    Unmasked,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Prng {
    On,
    Off,
}

impl From<Prng> for PrngMode {
    fn from(p: Prng) -> Self {
        match p {
            Prng::On => PrngMode::On,
            Prng::Off => PrngMode::Off,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Unmasked,
    Masked,
    GateArray,
}

impl From<DesignArg> for Design {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Unmasked => Design::Unmasked,
            DesignArg::Masked => Design::Masked,
            DesignArg::GateArray => Design::GateArray,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Style {
    Registered,
    Unregistered,
}

impl From<Style> for CellStyle {
    fn from(s: Style) -> Self {
        match s {
            Style::Registered => CellStyle::Registered,
            Style::Unregistered => CellStyle::Unregistered,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Order {
    First,
    Second,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WindowPolicy {
    /// Exclude the input-load windows recorded with the traces.
    Recorded,
    /// Judge every sample.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Expect {
    Pass,
    Fail,
}

#[derive(Args, Debug, Clone)]
pub struct TopologyArgs {
    /// `tiny`, `default`, or comma-separated widths, input first.
    #[arg(long, env = "BOMASIM_DIMS", default_value = "tiny")]
    pub dims: String,
    /// Scheduler depth D.
    #[arg(long, env = "BOMASIM_DEPTH", default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
}

pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    match s {
        "tiny" => Ok(TINY_DIMS.to_vec()),
        "default" => Ok(DEFAULT_DIMS.to_vec()),
        _ => s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad width {x:?} in --dims")))
            })
            .collect(),
    }
}

fn parse_list(s: &str, what: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("bad value {x:?} in {what}")))
        })
        .collect()
}

#[derive(Args, Debug, Clone)]
pub struct LeakageArgs {
    #[arg(long, env = "BOMASIM_ALPHA_REG", default_value_t = 1.0)]
    pub alpha_reg: f64,
    #[arg(long, env = "BOMASIM_ALPHA_GLITCH", default_value_t = 0.5)]
    pub alpha_glitch: f64,
    #[arg(long, env = "BOMASIM_NOISE_SIGMA", default_value_t = 2.0)]
    pub noise_sigma: f64,
    /// Input arrival offsets are drawn from 0..=JITTER delta steps.
    #[arg(long, env = "BOMASIM_JITTER", default_value_t = 3)]
    pub jitter: u32,
}

impl LeakageArgs {
    pub fn config(&self) -> LeakageModelConfig {
        LeakageModelConfig {
            alpha_reg: self.alpha_reg,
            alpha_glitch: self.alpha_glitch,
            noise_sigma: self.noise_sigma,
            samples_per_cycle: 1,
            jitter: self.jitter,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenParamsArgs {
    #[command(flatten)]
    pub topo: TopologyArgs,
    #[arg(long, env = "BOMASIM_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// BMNP parameter file; without it parameters are generated from --dims.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub topo: TopologyArgs,
    #[arg(long, env = "BOMASIM_PARAM_SEED", default_value_t = 1)]
    pub param_seed: u64,
    /// Raw image file (one byte per input); default is the fixed image.
    #[arg(long, conflicts_with = "random")]
    pub image: Option<PathBuf>,
    /// Run this many random images instead of one.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, env = "BOMASIM_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    pub mode: Mode,
    #[arg(long, value_enum, env = "BOMASIM_PRNG", default_value_t = Prng::On)]
    pub prng: Prng,
    /// 80-bit TRIVIUM key in hex; derived from --seed when absent.
    #[arg(long, env = "BOMASIM_KEY")]
    pub key: Option<String>,
    #[arg(long, env = "BOMASIM_IV")]
    pub iv: Option<String>,
}

#[derive(Args, Debug)]
pub struct CaptureArgs {
    #[arg(long, value_enum)]
    pub design: DesignArg,
    #[arg(long, short = 'n', env = "BOMASIM_TRACES")]
    pub traces: u64,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub topo: TopologyArgs,
    #[arg(long, env = "BOMASIM_PARAM_SEED", default_value_t = 1)]
    pub param_seed: u64,
    #[command(flatten)]
    pub leak: LeakageArgs,
    #[arg(long, value_enum, env = "BOMASIM_PRNG", default_value_t = Prng::On)]
    pub prng: Prng,
    #[arg(long, env = "BOMASIM_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Fixed-class image file; default every pixel 0x5A.
    #[arg(long)]
    pub fixed_image: Option<PathBuf>,
    #[arg(long, env = "BOMASIM_WORKERS", default_value_t = default_workers())]
    pub workers: usize,
    /// Trace file to write.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Also run the first-order test while capturing.
    #[arg(long)]
    pub ttest: bool,
    #[arg(long, env = "BOMASIM_THRESHOLD", default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = WindowPolicy::Recorded)]
    pub windows: WindowPolicy,
    #[arg(long, value_enum, requires = "ttest")]
    pub expect: Option<Expect>,
}

#[derive(Args, Debug)]
pub struct TtestArgs {
    #[arg(long, short)]
    pub traces: PathBuf,
    #[arg(long, value_enum, default_value_t = Order::First)]
    pub order: Order,
    #[arg(long, env = "BOMASIM_THRESHOLD", default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = WindowPolicy::Recorded)]
    pub windows: WindowPolicy,
    /// Second order from running moments in one pass instead of two passes.
    #[arg(long)]
    pub one_pass: bool,
    /// Per-sample t-scores as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary; `-` for stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Verdict required of the highest requested order.
    #[arg(long, value_enum)]
    pub expect: Option<Expect>,
}

#[derive(Args, Debug)]
pub struct GateExpArgs {
    #[arg(long, value_enum, default_value_t = Style::Registered)]
    pub style: Style,
    /// Arrival offsets in delta steps, one per port (a0 a1 b0 b1 r for a
    /// single cell, a0 a1 b0 b1 r0..r31 for the array); random profiles when
    /// absent.
    #[arg(long)]
    pub offsets: Option<String>,
    /// Probe a single cell exhaustively instead of capturing traces.
    #[arg(long)]
    pub single: bool,
    #[arg(long, short = 'n', env = "BOMASIM_TRACES", default_value_t = 100_000)]
    pub traces: u64,
    #[command(flatten)]
    pub leak: LeakageArgs,
    #[arg(long, value_enum, env = "BOMASIM_PRNG", default_value_t = Prng::On)]
    pub prng: Prng,
    #[arg(long, env = "BOMASIM_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "BOMASIM_WORKERS", default_value_t = default_workers())]
    pub workers: usize,
    #[arg(long, env = "BOMASIM_THRESHOLD", default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Per-sample t-scores (array) or transient events (single cell) as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, env = "BOMASIM_DIMS", default_value = "default")]
    pub dims: String,
    #[arg(long, env = "BOMASIM_DEPTH", default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
    /// Only the closed form, no simulated inference.
    #[arg(long)]
    pub analytic_only: bool,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// A check that did not hold, as opposed to an error.
#[derive(Debug)]
pub struct CheckFailed(pub String);

pub enum Outcome {
    Ok,
    Failed(CheckFailed),
}

fn aggregate(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}

fn load_or_generate(params: &Option<PathBuf>, topo: &TopologyArgs, seed: u64) -> Result<NetworkParams> {
    match params {
        Some(p) => at(p, NetworkParams::load(p)),
        None => NetworkParams::generate(&parse_dims(&topo.dims)?, topo.depth, seed),
    }
}

/// Names the file in I/O errors.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        e => e,
    })
}

fn open_out(path: &Path) -> Result<BufWriter<File>> {
    at(path, File::create(path).map(BufWriter::new).map_err(Error::from))
}

pub fn cmd_gen_params(a: &GenParamsArgs, out: &mut dyn Write) -> Result<Outcome> {
    let dims = parse_dims(&a.topo.dims)?;
    check_dims(&dims, a.topo.depth)?;
    writeln!(out, "# gen-params seed={} dims={:?} depth={}", a.seed, dims, a.topo.depth)?;
    let p = NetworkParams::generate(&dims, a.topo.depth, a.seed)?;
    at(&a.out, p.save(&a.out))?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(Outcome::Ok)
}

fn mask_source(a: &InferArgs, index: u64) -> Result<Box<dyn MaskSource>> {
    if a.prng == Prng::Off {
        return Ok(Box::new(ZeroMasks::new()));
    }
    match &a.key {
        Some(k) => {
            let key = parse_hex80(k)?;
            let iv = match &a.iv {
                Some(v) => parse_hex80(v)?,
                None => {
                    let mut iv = [0u8; IV_BYTES];
                    iv[..8].copy_from_slice(&index.to_le_bytes());
                    iv
                }
            };
            Ok(Box::new(Trivium::seed(&key, &iv)))
        }
        None => Ok(Box::new(Trivium::derived(&crate::leakage::base_key(a.seed), index))),
    }
}

pub fn cmd_infer(a: &InferArgs, out: &mut dyn Write) -> Result<Outcome> {
    let mut problems = Vec::new();
    if a.iv.is_some() && a.key.is_none() {
        problems.push("--iv needs --key".to_string());
    }
    if a.random == Some(0) {
        problems.push("--random must be at least 1".to_string());
    }
    if let Some(k) = &a.key {
        if let Err(e) = parse_hex80(k) {
            problems.push(format!("--key: {e}"));
        }
    }
    aggregate(problems)?;
    let p = load_or_generate(&a.params, &a.topo, a.param_seed)?;
    writeln!(
        out,
        "# infer seed={} param_seed={} dims={:?} depth={} prng={:?} mode={:?}",
        a.seed,
        a.param_seed,
        p.dims(),
        p.depth(),
        a.prng,
        a.mode
    )?;
    let n_in = p.input_count();
    let images: Vec<Image> = match (a.random, &a.image) {
        (Some(n), _) => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..n).map(|_| Image::random(n_in, &mut rng)).collect()
        }
        (None, Some(path)) => vec![at(path, Image::load(path, n_in))?],
        (None, None) => vec![Image::fixed(n_in)],
    };
    let single = images.len() == 1;
    let mut agree = 0usize;
    let unmasked_total = unmasked_cycles(&p.dims());
    for (i, img) in images.iter().enumerate() {
        let plain = (a.mode != Mode::Masked).then(|| unmasked_infer(&p, img));
        let masked = if a.mode != Mode::Unmasked {
            let mut m = mask_source(a, i as u64)?;
            Some(masked_infer(&p, img, m.as_mut(), &mut NoObserver)?)
        } else {
            None
        };
        // recombining the class shares is a test-bench step, outside the engine
        let masked_class = masked.as_ref().map(|r| r.class_shares.unmask() as usize);
        if let (Some(u), Some(m)) = (&plain, masked_class) {
            if u.class == m {
                agree += 1;
            }
        }
        if single {
            if let Some(u) = &plain {
                writeln!(out, "unmasked class={} cycles={}", u.class, u.cycles)?;
            }
            if let (Some(r), Some(c)) = (&masked, masked_class) {
                writeln!(
                    out,
                    "masked class={} cycles={} ratio={:.4} random_bits={} trichina_gates={} adds={}",
                    c,
                    r.cycles,
                    r.cycles as f64 / unmasked_total as f64,
                    r.random_bits,
                    r.trichina_gates,
                    r.ops
                )?;
            }
        }
    }
    if a.mode == Mode::Both {
        writeln!(out, "agree: {agree}/{}", images.len())?;
        if agree != images.len() {
            return Ok(Outcome::Failed(CheckFailed(format!(
                "masked and unmasked classes differ on {} image(s)",
                images.len() - agree
            ))));
        }
    }
    Ok(Outcome::Ok)
}

fn windows_for(policy: WindowPolicy, recorded: &[Window]) -> Vec<Window> {
    match policy {
        WindowPolicy::Recorded => recorded.to_vec(),
        WindowPolicy::None => Vec::new(),
    }
}

fn print_report(out: &mut dyn Write, label: &str, r: &TvlaReport) -> Result<()> {
    writeln!(
        out,
        "{label}: {} max|t|={:.3} at {} (all samples {:.3}), {} exceeding, {} inside windows, n={}+{}",
        if r.passed() { "PASS" } else { "FAIL" },
        r.max_abs_t,
        r.max_index.map_or("-".to_string(), |i| i.to_string()),
        r.max_abs_t_all,
        r.exceeding.len(),
        r.excluded_exceeding.len(),
        r.n_fixed,
        r.n_random
    )?;
    Ok(())
}

fn check_expect(expect: Option<Expect>, r: &TvlaReport) -> Outcome {
    match expect {
        Some(Expect::Pass) if !r.passed() => Outcome::Failed(CheckFailed(format!("expected PASS, max|t| = {:.3}", r.max_abs_t))),
        Some(Expect::Fail) if r.passed() => Outcome::Failed(CheckFailed(format!("expected FAIL, max|t| = {:.3}", r.max_abs_t))),
        _ => Outcome::Ok,
    }
}

pub fn cmd_capture(a: &CaptureArgs, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = a.leak.config();
    let mut problems = Vec::new();
    if let Err(e) = cfg.validate() {
        problems.push(e.to_string());
    }
    if a.traces == 0 {
        problems.push("--traces must be positive".into());
    }
    if a.out.is_none() && !a.ttest {
        problems.push("nothing to do: give --out and/or --ttest".into());
    }
    if a.workers == 0 {
        problems.push("--workers must be positive".into());
    }
    if a.design == DesignArg::GateArray && (a.params.is_some() || a.fixed_image.is_some()) {
        problems.push("the gate array takes no --params or --fixed-image".into());
    }
    aggregate(problems)?;
    let design = Design::from(a.design);
    let params = match design {
        Design::GateArray => None,
        _ => Some(load_or_generate(&a.params, &a.topo, a.param_seed)?),
    };
    let mut cap = Capture::new(design, params.as_ref(), &cfg, a.prng.into(), a.seed)?;
    if let Some(path) = &a.fixed_image {
        cap = cap.with_fixed_image(at(path, Image::load(path, params.as_ref().map_or(0, |p| p.input_count())))?)?;
    }
    writeln!(
        out,
        "# capture design={} traces={} seed={} param_seed={} prng={:?} samples={} config={}",
        design,
        a.traces,
        a.seed,
        a.param_seed,
        a.prng,
        cap.n_samples(),
        cap.config().hash()
    )?;
    let mut writer = match &a.out {
        Some(path) => {
            let labels: Vec<u8> = (0..a.traces).map(|i| cap.label(i)).collect();
            Some(BmntWriter::new(open_out(path)?, &cap.meta(), cap.n_samples(), &labels)?)
        }
        None => None,
    };
    let mut acc = a.ttest.then(|| MomentAccumulator::new(cap.n_samples()));
    if writer.is_none() {
        acc = Some(cap.accumulate(a.traces, a.workers, false)?);
    } else {
        cap.for_each(a.traces, a.workers, |_, l, x| {
            if let Some(w) = writer.as_mut() {
                w.write_trace(x)?;
            }
            if let Some(acc) = acc.as_mut() {
                acc.accumulate(x, l)?;
            }
            Ok(())
        })?;
    }
    if let (Some(w), Some(path)) = (writer, &a.out) {
        w.finish()?.flush()?;
        writeln!(out, "wrote {}", path.display())?;
    }
    if let Some(acc) = acc {
        let rep = report_first_order(&acc, a.threshold, &windows_for(a.windows, cap.windows()))?;
        print_report(out, "first-order", &rep)?;
        return Ok(check_expect(a.expect, &rep));
    }
    Ok(Outcome::Ok)
}

pub fn cmd_ttest(a: &TtestArgs, out: &mut dyn Write) -> Result<Outcome> {
    let mut problems = Vec::new();
    if !(a.threshold.is_finite() && a.threshold > 0.0) {
        problems.push(format!("--threshold must be positive (got {})", a.threshold));
    }
    if a.one_pass && a.order == Order::First {
        problems.push("--one-pass only applies to second order".into());
    }
    aggregate(problems)?;
    let mut rd = at(&a.traces, BmntReader::open(&a.traces))?;
    let meta = rd.meta().clone();
    let windows = windows_for(a.windows, &meta.windows);
    writeln!(
        out,
        "# ttest file={} design={} seed={} traces={} samples={}",
        a.traces.display(),
        meta.design,
        meta.seed,
        rd.n_traces(),
        rd.n_samples()
    )?;
    let want_second = a.order != Order::First;
    let mut acc = MomentAccumulator::with_higher_moments(rd.n_samples(), want_second && a.one_pass);
    rd.accumulate(&mut acc)?;
    let first = report_first_order(&acc, a.threshold, &windows)?;
    let second = if want_second {
        let (t, clamped, counts) = if a.one_pass {
            let (t, c) = acc.t_second_order_onepass()?;
            (t, c, (acc.count(0), acc.count(1)))
        } else {
            // second pass over the file, centered by the class means
            let means = [acc.mean(0).to_vec(), acc.mean(1).to_vec()];
            let mut rd = at(&a.traces, BmntReader::open(&a.traces))?;
            let n = rd.n_samples();
            let mut sq = MomentAccumulator::new(n);
            let mut buf = vec![0.0f32; n];
            let mut y = vec![0.0f64; n];
            while let Some(l) = rd.next_trace(&mut buf)? {
                let m = &means[l as usize];
                for i in 0..n {
                    let d = buf[i] as f64 - m[i];
                    y[i] = d * d;
                }
                sq.accumulate(&y, l)?;
            }
            let (t, c) = sq.t_first_order()?;
            (t, c, (sq.count(0), sq.count(1)))
        };
        Some(TvlaReport::new(2, t, clamped, a.threshold, &windows, counts))
    } else {
        None
    };
    if a.order != Order::Second {
        print_report(out, "first-order", &first)?;
    }
    if let Some(s) = &second {
        print_report(out, "second-order", s)?;
    }
    if let Some(path) = &a.csv {
        let mut f = open_out(path)?;
        write_csv(&mut f, &first.t, second.as_ref().map(|s| s.t.as_slice()))?;
        f.flush()?;
    }
    if let Some(path) = &a.json {
        let mut reports = Vec::new();
        if a.order != Order::Second {
            reports.push(&first);
        }
        reports.extend(second.as_ref());
        let json = summary_json(&reports);
        if path.as_os_str() == "-" {
            writeln!(out, "{json}")?;
        } else {
            at(path, std::fs::write(path, json + "\n").map_err(Error::from))?;
        }
    }
    let judged = second.as_ref().unwrap_or(&first);
    Ok(check_expect(a.expect, judged))
}

pub fn cmd_gate_exp(a: &GateExpArgs, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = a.leak.config();
    let offsets = a.offsets.as_deref().map(|s| parse_list(s, "--offsets")).transpose()?;
    let mut problems = Vec::new();
    if let Err(e) = cfg.validate() {
        problems.push(e.to_string());
    }
    let ports = if a.single { 5 } else { 4 + GATE_ARRAY_CELLS };
    if let Some(o) = &offsets {
        if o.len() != ports {
            problems.push(format!("--offsets needs {ports} values, got {}", o.len()));
        }
    }
    if !a.single && a.traces < 4 {
        problems.push("--traces must be at least 4".into());
    }
    aggregate(problems)?;
    writeln!(
        out,
        "# gate-exp style={:?} single={} traces={} seed={} prng={:?} offsets={:?}",
        a.style, a.single, a.traces, a.seed, a.prng, offsets
    )?;
    if a.single {
        return single_cell(a, offsets.as_deref().unwrap_or(&[0, 0, 0, 0, 0]), out);
    }
    let cap = Capture::new(Design::GateArray, None, &cfg, a.prng.into(), a.seed)?.with_gate_array(a.style.into(), offsets.as_deref())?;
    let ts = cap.collect(a.traces, a.workers)?;
    let first = ts.t_first_order(a.threshold)?;
    let second = ts.t_second_order(a.threshold)?;
    print_report(out, "first-order", &first)?;
    print_report(out, "second-order", &second)?;
    if let Some(path) = &a.csv {
        let mut f = open_out(path)?;
        write_csv(&mut f, &first.t, Some(&second.t))?;
        f.flush()?;
    }
    Ok(Outcome::Ok)
}

/// Exhaustive probe of one cell plus the transient events for `a = b = 1`
/// with shares `a0 = 1, b0 = 1` and `r = 1`.
fn single_cell(a: &GateExpArgs, offsets: &[u32], out: &mut dyn Write) -> Result<Outcome> {
    let mut c = build_trichina_cell(a.style.into())?;
    c.set_arrivals(offsets)?;
    let spec = ProbeSpec {
        secrets: vec![(0, 1), (2, 3)],
        randoms: vec![4],
        cycles: REGISTERED_TRICHINA_LATENCY + 1,
        ..Default::default()
    };
    let rep = probe_independence(&c, &spec)?;
    writeln!(
        out,
        "probe: {} points, horizon {} deltas, {} violation(s)",
        rep.points,
        rep.horizon,
        rep.violations.len()
    )?;
    for v in &rep.violations {
        writeln!(out, "  leak on {} at cycle {} delta {}", v.name, v.cycle, v.delta)?;
    }
    let c = Arc::new(c);
    let mut sim = Simulator::new(Arc::clone(&c));
    sim.set_recording(true);
    let t = sim.step(&[true, false, true, false, true])?;
    writeln!(out, "cycle 0 from reset: reg_hd={} toggles={} settle_delta={}", t.reg_hd, t.toggles, t.settle_delta)?;
    if let Some(path) = &a.csv {
        let mut f = open_out(path)?;
        writeln!(f, "delta,wire,value")?;
        for e in sim.events() {
            writeln!(f, "{},{},{}", e.delta, c.wire_name(e.wire), e.value as u8)?;
        }
        f.flush()?;
    }
    Ok(Outcome::Ok)
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<Outcome> {
    let dims = parse_dims(&a.dims)?;
    check_dims(&dims, a.depth)?;
    writeln!(out, "# bench dims={:?} depth={}", dims, a.depth)?;
    let b = analytic_masked_cycles(&dims, a.depth);
    let u = unmasked_cycles(&dims);
    writeln!(out, "layer,n_in,n_out,groups,issue_slots,stalls,cycles")?;
    for (i, l) in b.layers.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{}",
            l.n_in,
            l.n_out,
            l.groups.len(),
            l.issue_slots,
            l.stalls,
            l.cycles
        )?;
    }
    writeln!(out, "control={} drain={} argmax={}", b.control, b.drain, b.argmax)?;
    writeln!(out, "masked_analytic={} unmasked={} ratio={:.4}", b.total, u, b.total as f64 / u as f64)?;
    if a.analytic_only {
        return Ok(Outcome::Ok);
    }
    let p = NetworkParams::generate(&dims, a.depth, 1)?;
    let img = Image::fixed(dims[0]);
    let sim = masked_infer(&p, &img, &mut ZeroMasks::new(), &mut NoObserver)?;
    let plain = unmasked_infer(&p, &img);
    writeln!(out, "masked_simulated={} unmasked_simulated={}", sim.cycles, plain.cycles)?;
    for (i, (l, s)) in b.layers.iter().zip(&sim.layers).enumerate() {
        if l.stalls != s.stalls {
            return Ok(Outcome::Failed(CheckFailed(format!(
                "layer {i}: analytic {} stalls, simulated {}",
                l.stalls, s.stalls
            ))));
        }
    }
    if sim.cycles != b.total || plain.cycles != u {
        return Ok(Outcome::Failed(CheckFailed("analytic and simulated cycle counts differ".into())));
    }
    writeln!(out, "analytic == simulated")?;
    Ok(Outcome::Ok)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Outcome> {
    match &cli.command {
        Command::GenParams(a) => cmd_gen_params(a, out),
        Command::Infer(a) => cmd_infer(a, out),
        Command::Capture(a) => cmd_capture(a, out),
        Command::Ttest(a) => cmd_ttest(a, out),
        Command::GateExp(a) => cmd_gate_exp(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::Failed(CheckFailed(msg))) => {
            let _ = out.flush();
            eprintln!("check failed: {msg}");
            1
        }
        Err(e) => {
            let _ = out.flush();
            match e {
                Error::Config(msg) => eprintln!("error: {msg}"),
                e => eprintln!("error: {e}"),
            }
            2
        }
    }
}
