// Acceptance run: one line per criterion, non-zero exit if any fails.

use std::time::Instant;

use bomasim::arith::{masked_full_adder, pipelined_issue, MaskedAdderUnit};
use bomasim::bnn::{
    analytic_masked_cycles, input_contribution, lut_select_table, masked_infer, masked_word_mux_with, unmasked_cycles,
    unmasked_infer, Image, NetworkParams, NoObserver, DEFAULT_DEPTH, DEFAULT_DIMS, TINY_DIMS,
};
use bomasim::circuit::{
    build_masked_full_adder, build_trichina_cell, probe_independence, CellStyle, ProbeSpec, FULL_ADDER_LATENCY,
    REGISTERED_TRICHINA_LATENCY,
};
use bomasim::leakage::{base_key, BmntReader, Capture, Design, LeakageModelConfig, PrngMode, TraceMeta, TraceSet};
use bomasim::masking::{mask_word, trichina_and_ref, MaskedBit};
use bomasim::trivium::{parse_hex80, MaskSource, Trivium};
use bomasim::tvla::{report_first_order, t_second_order_twopass, welch_t, MomentAccumulator, DEFAULT_THRESHOLD};
use bomasim::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<T>(r: bomasim::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn functional_equivalence() -> Check {
    let mut images = ChaCha8Rng::seed_from_u64(0xacc1);
    let mut trials = 0u64;
    for set in 0..5u64 {
        let p = e2s(NetworkParams::generate(&TINY_DIMS, DEFAULT_DEPTH, 1000 + set))?;
        for i in 0..1000u64 {
            let img = Image::random(p.input_count(), &mut images);
            let mut m = Trivium::derived(&base_key(set), i);
            let masked = e2s(masked_infer(&p, &img, &mut m, &mut NoObserver))?;
            let want = unmasked_infer(&p, &img).class;
            ensure(masked.class_shares.unmask() as usize == want, format!("tiny set {set} image {i} disagrees"))?;
            trials += 1;
        }
    }
    let mut big = 0;
    for set in 0..2u64 {
        let p = e2s(NetworkParams::generate(&DEFAULT_DIMS, DEFAULT_DEPTH, 2000 + set))?;
        for i in 0..2u64 {
            let img = Image::random(p.input_count(), &mut images);
            let mut m = Trivium::derived(&base_key(100 + set), i);
            let masked = e2s(masked_infer(&p, &img, &mut m, &mut NoObserver))?;
            let want = unmasked_infer(&p, &img).class;
            ensure(masked.class_shares.unmask() as usize == want, format!("default set {set} image {i} disagrees"))?;
            big += 1;
        }
    }
    Ok(format!("{trials}/{trials} tiny (5 parameter sets), {big}/{big} default topology"))
}

fn gadgets() -> Check {
    let bit = |x: u32, k: u32| (x >> k) & 1 == 1;
    for i in 0..32u32 {
        let a = MaskedBit::from_shares(bit(i, 0), bit(i, 1));
        let b = MaskedBit::from_shares(bit(i, 2), bit(i, 3));
        let z = trichina_and_ref(a, b, bit(i, 4));
        ensure(z.unmask() == (a.unmask() & b.unmask()), format!("Trichina case {i}"))?;
        ensure(z.s0() == bit(i, 4), "Trichina output mask")?;
    }
    for i in 0..512u32 {
        let [a, b, c] = [0, 2, 4].map(|k| MaskedBit::from_shares(bit(i, k), bit(i, k + 1)));
        let (s, co) = masked_full_adder(a, b, c, [bit(i, 6), bit(i, 7), bit(i, 8)]);
        let total = a.unmask() as u8 + b.unmask() as u8 + c.unmask() as u8;
        ensure(s.unmask() == (total & 1 == 1) && co.unmask() == (total >= 2), format!("full adder case {i}"))?;
    }
    let table = lut_select_table();
    for (i, e) in table.iter().enumerate() {
        let sel = if i & 4 != 0 { i & 1 } else { (i >> 1) & 1 };
        ensure((e & 1) ^ (e >> 1) == sel as u8, format!("LUT row {i}"))?;
    }
    for pixel in 0..=255u8 {
        for w in [false, true] {
            for r in 0..512u32 {
                let c = input_contribution(pixel, w, r);
                let want = if w { pixel as i64 } else { -(pixel as i64) };
                ensure(c.unmask_signed() == want, format!("LUT mux pixel {pixel} w {w} r {r}"))?;
            }
        }
    }
    let mut mux = 0u64;
    for sel in 0..4u32 {
        let s = MaskedBit::from_shares(bit(sel, 0), bit(sel, 1));
        for new in 0..16u32 {
            for old in 0..16u32 {
                for mn in 0..16u32 {
                    for mo in 0..16u32 {
                        for r in 0..16u32 {
                            let n = mask_word(new, mn, 4).map_err(|e| e.to_string())?;
                            let o = mask_word(old, mo, 4).map_err(|e| e.to_string())?;
                            let out = e2s(masked_word_mux_with(s, n, o, r, None))?;
                            ensure(out.unmask() == if s.unmask() { new } else { old }, "word mux")?;
                            mux += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("32 Trichina, 512 full adder, 16 LUT rows + 262144 LUT operands, {mux} word-mux cases"))
}

fn probing() -> Check {
    let spec = ProbeSpec {
        secrets: vec![(0, 1), (2, 3)],
        randoms: vec![4],
        cycles: REGISTERED_TRICHINA_LATENCY + 1,
        ..Default::default()
    };
    let base = e2s(build_trichina_cell(CellStyle::Registered))?;
    let mut configs = 0;
    for code in 0..5u32.pow(5) {
        let offsets: Vec<u32> = (0..5).map(|k| code / 5u32.pow(k) % 5).collect();
        let mut c = base.clone();
        e2s(c.set_arrivals(&offsets))?;
        let rep = e2s(probe_independence(&c, &spec))?;
        ensure(rep.is_secure(), format!("registered cell leaks with offsets {offsets:?}"))?;
        configs += 1;
    }
    let fa = e2s(build_masked_full_adder())?;
    let fa_spec = ProbeSpec {
        secrets: vec![(0, 1), (2, 3), (4, 5)],
        randoms: vec![6, 7, 8],
        cycles: FULL_ADDER_LATENCY + 1,
        ..Default::default()
    };
    let rep = e2s(probe_independence(&fa, &fa_spec))?;
    ensure(rep.is_secure(), format!("full adder: {} violations", rep.violations.len()))?;
    let mut late = e2s(build_trichina_cell(CellStyle::Unregistered))?;
    e2s(late.set_arrivals(&[0, 0, 0, 0, 3]))?;
    let rep = e2s(probe_independence(&late, &spec))?;
    ensure(!rep.is_secure(), "unregistered cell with late mask shows no leak")?;
    Ok(format!(
        "registered cell clean over {configs} offset assignments, full adder clean, late-mask cell: {} violations",
        rep.violations.len()
    ))
}

fn latency() -> Check {
    let b = analytic_masked_cycles(&DEFAULT_DIMS, DEFAULT_DEPTH);
    let u = unmasked_cycles(&DEFAULT_DIMS);
    let ratio = b.total as f64 / u as f64;
    ensure((u as f64 - 2.85e6).abs() <= 0.01 * 2.85e6, format!("unmasked {u}"))?;
    ensure((1.03..=1.05).contains(&ratio), format!("ratio {ratio:.4}"))?;
    let n = b.layers.len();
    ensure(b.layers[..n - 1].iter().all(|l| l.stalls == 0), "hidden layer stalls")?;
    let out = &b.layers[n - 1];
    // one round per input plus the bias round, D - n_out idle cycles between rounds
    let rounds = out.n_in as u64 + 1;
    ensure(
        out.stalls == (rounds - 1) * (DEFAULT_DEPTH - out.n_out) as u64,
        format!("output layer stalls {}", out.stalls),
    )?;
    let p = e2s(NetworkParams::generate(&DEFAULT_DIMS, DEFAULT_DEPTH, 1))?;
    let img = Image::fixed(DEFAULT_DIMS[0]);
    let mut m = Trivium::derived(&base_key(4), 0);
    let sim = e2s(masked_infer(&p, &img, &mut m, &mut NoObserver))?;
    ensure(sim.cycles == b.total, format!("simulated {} vs analytic {}", sim.cycles, b.total))?;
    for (a, s) in b.layers.iter().zip(&sim.layers) {
        ensure(a.stalls == s.stalls && a.issue_slots == s.issue_slots, "per-layer counts differ")?;
    }
    ensure(unmasked_infer(&p, &img).cycles == u, "unmasked simulation")?;
    Ok(format!(
        "unmasked {u}, masked {} (ratio {ratio:.4}), hidden stalls 0, output stalls {} = {} gaps x {}, analytic == simulated",
        b.total,
        out.stalls,
        rounds - 1,
        DEFAULT_DEPTH - out.n_out
    ))
}

fn adder() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut masks = Trivium::derived(&base_key(5), 0);
    let mut random_ops = |subs: bool| -> Result<(Vec<_>, Vec<u32>), String> {
        let mut ops = Vec::with_capacity(10_000);
        let mut want = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            let (x, y): (u32, u32) = (rng.gen_range(0..1 << 20), rng.gen_range(0..1 << 20));
            let sub = subs && rng.gen::<bool>();
            ops.push((e2s(mask_word(x, rng.gen(), 20))?, e2s(mask_word(y, rng.gen(), 20))?, sub));
            want.push(if sub { x.wrapping_sub(y) } else { x.wrapping_add(y) } & 0xfffff);
        }
        Ok((ops, want))
    };
    let (adds, add_want) = random_ops(false)?;
    let (mixed, mixed_want) = random_ops(true)?;
    let (res, cycles) = e2s(pipelined_issue(20, &adds, &mut masks))?;
    ensure(cycles == 10_099, format!("10^4 adds took {cycles} cycles"))?;
    let bad = res.iter().zip(&add_want).filter(|(r, w)| r.unmask() != **w).count();
    ensure(bad == 0, format!("{bad} wrong sums"))?;
    let (res, _) = e2s(pipelined_issue(20, &mixed, &mut masks))?;
    let bad = res.iter().zip(&mixed_want).filter(|(r, w)| r.unmask() != **w).count();
    ensure(bad == 0, format!("{bad} wrong add/sub results"))?;
    let unit = e2s(MaskedAdderUnit::new(20))?;
    Ok(format!("10^4 adds in {cycles} cycles (latency {}), 10^4 add/sub match mod 2^20", unit.latency()))
}

fn tvla_discrimination() -> Check {
    let p = e2s(NetworkParams::generate(&TINY_DIMS, DEFAULT_DEPTH, 1))?;
    let cfg = LeakageModelConfig::default();
    let un = e2s(Capture::new(Design::Unmasked, Some(&p), &cfg, PrngMode::Off, 6))?;
    let acc = e2s(un.accumulate(5000, workers(), false))?;
    let ru = e2s(report_first_order(&acc, DEFAULT_THRESHOLD, &[]))?;
    let masked = e2s(Capture::new(Design::Masked, Some(&p), &cfg, PrngMode::On, 6))?;
    let acc = e2s(masked.accumulate(50_000, workers(), false))?;
    let rm = e2s(report_first_order(&acc, DEFAULT_THRESHOLD, masked.windows()))?;
    let msg = format!(
        "unmasked 5000: max|t| {:.1} ({}); masked 50000: max|t| {:.2} outside {} input-load windows ({} samples over), {:.2} overall",
        ru.max_abs_t,
        if ru.passed() { "PASS" } else { "FAIL" },
        rm.max_abs_t,
        masked.windows().len(),
        rm.exceeding.len(),
        rm.max_abs_t_all
    );
    ensure(!ru.passed() && rm.passed(), msg.clone())?;
    Ok(msg)
}

fn gate_array() -> Check {
    let cfg = LeakageModelConfig {
        noise_sigma: 0.5,
        ..Default::default()
    };
    let cap = e2s(Capture::new(Design::GateArray, None, &cfg, PrngMode::On, 7))?;
    let ts = e2s(cap.collect(100_000, workers()))?;
    let first = e2s(ts.t_first_order(DEFAULT_THRESHOLD))?;
    let second = e2s(ts.t_second_order(DEFAULT_THRESHOLD))?;
    let msg = format!("first order max|t| {:.2}, second order max|t| {:.1}", first.max_abs_t, second.max_abs_t);
    ensure(first.passed() && !second.passed(), msg.clone())?;
    Ok(msg)
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn statistics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let nd = Normal::new(0.0, 1.0).unwrap();
    let m = 16;
    let set: Vec<(Vec<f32>, u8)> = (0..10_000)
        .map(|_| {
            let l = rng.gen::<bool>() as u8;
            let x = (0..m)
                .map(|j| (50.0 + j as f64 + (l as f64 * 0.3 * (j % 2) as f64) + (1.0 + l as f64 * (j % 3) as f64 * 0.2) * nd.sample(&mut rng)) as f32)
                .collect();
            (x, l)
        })
        .collect();
    let acc_of = |part: &[(Vec<f32>, u8)]| {
        let mut a = MomentAccumulator::with_higher_moments(m, true);
        for (x, l) in part {
            a.accumulate(x, *l).unwrap();
        }
        a
    };
    let whole = acc_of(&set);
    let (t1, _) = e2s(whole.t_first_order())?;
    let (s1, _) = e2s(whole.t_second_order_onepass())?;
    for j in 0..m {
        let stats = |c: u8| {
            let v: Vec<f64> = set.iter().filter(|s| s.1 == c).map(|s| s.0[j] as f64).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0), v.len() as u64)
        };
        let ((mf, vf, nf), (mr, vr, nr)) = (stats(0), stats(1));
        ensure(rel_close(t1[j], welch_t(mf, vf, nf, mr, vr, nr).0), format!("first order sample {j}"))?;
    }
    let (s2, _, _) = e2s(t_second_order_twopass(set.iter().map(|(x, l)| (x.as_slice(), *l)), m))?;
    ensure(s1.iter().zip(&s2).all(|(a, b)| rel_close(*a, *b)), "one-pass vs two-pass second order")?;

    let parts = [acc_of(&set[..3000]), acc_of(&set[3000..7100]), acc_of(&set[7100..])];
    let mut ab_c = parts[0].clone();
    e2s(ab_c.merge(&parts[1]))?;
    e2s(ab_c.merge(&parts[2]))?;
    let mut bc = parts[1].clone();
    e2s(bc.merge(&parts[2]))?;
    let mut a_bc = parts[0].clone();
    e2s(a_bc.merge(&bc))?;
    let mut cba = parts[2].clone();
    e2s(cba.merge(&parts[1]))?;
    e2s(cba.merge(&parts[0]))?;
    for acc in [&ab_c, &a_bc, &cba] {
        let (t, _) = e2s(acc.t_first_order())?;
        let (s, _) = e2s(acc.t_second_order_onepass())?;
        ensure(t.iter().zip(&t1).all(|(a, b)| rel_close(*a, *b)), "merge changed first order")?;
        ensure(s.iter().zip(&s1).all(|(a, b)| rel_close(*a, *b)), "merge changed second order")?;
    }

    let swapped: Vec<_> = set.iter().map(|(x, l)| (x.clone(), 1 - l)).collect();
    let (tsw, _) = e2s(acc_of(&swapped).t_first_order())?;
    ensure(tsw.iter().zip(&t1).all(|(a, b)| *a == -*b), "label swap is not exact negation")?;

    let mut scaled = MomentAccumulator::new(m);
    for (x, l) in &set {
        let y: Vec<f64> = x.iter().map(|&v| v as f64 * 37.5 - 1234.0).collect();
        e2s(scaled.accumulate(&y, *l))?;
    }
    let (tsc, _) = e2s(scaled.t_first_order())?;
    ensure(tsc.iter().zip(&t1).all(|(a, b)| rel_close(*a, *b)), "scale changed t")?;
    Ok("streaming = two-pass, merge order-free, label swap exact, affine invariance (1e-9, 10^4 traces)".into())
}

fn trivium() -> Check {
    let vectors = include_str!("data/trivium_vectors.txt");
    let mut n = 0;
    for line in vectors.lines().filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let mut t = Trivium::seed(&e2s(parse_hex80(f[0]))?, &e2s(parse_hex80(f[1]))?);
        let want = hex::decode(f[2]).map_err(|e| e.to_string())?;
        let mut got = vec![0u8; want.len()];
        e2s(t.fill_bytes(&mut got))?;
        ensure(got == want, format!("vector {f:?}"))?;
        n += 1;
    }
    ensure(n >= 4, "too few vectors")?;
    let mut t = Trivium::seed(&[0; 10], &[0; 10]).with_bits_emitted(u64::MAX - 8);
    e2s(t.draw(8))?;
    ensure(
        matches!(t.draw(1), Err(Error::OutputSpaceExhausted { emitted: u64::MAX, requested: 1 })),
        "no exhaustion at 2^64",
    )?;
    Ok(format!("{n} reference vectors byte-exact, OutputSpaceExhausted at the 2^64-bit bound (injected counter)"))
}

fn formats() -> Check {
    let p = e2s(NetworkParams::generate(&TINY_DIMS, DEFAULT_DEPTH, 10))?;
    let pb = p.to_bytes();
    ensure(e2s(NetworkParams::from_bytes(&pb))?.to_bytes() == pb, "BMNP round trip")?;
    let cap = e2s(Capture::new(Design::Unmasked, Some(&p), &LeakageModelConfig::default(), PrngMode::Off, 10))?;
    let ts = e2s(cap.collect(6, 1))?;
    let tb = ts.to_bytes();
    ensure(e2s(TraceSet::from_bytes(&tb))?.to_bytes() == tb, "BMNT round trip")?;
    let streamed = e2s(cap.write(6, 2, Vec::new()))?;
    ensure(streamed == tb, "streamed BMNT differs")?;

    let is_format = |r: &bomasim::Result<()>| matches!(r, Err(Error::Format(_)));
    let mut cases = 0;
    for cut in 0..pb.len() {
        ensure(is_format(&NetworkParams::from_bytes(&pb[..cut]).map(|_| ())), format!("BMNP cut at {cut}"))?;
        cases += 1;
    }
    let header = 20 + u32::from_le_bytes(tb[16..20].try_into().unwrap()) as usize + ts.n_traces();
    for cut in (0..header).chain((header..tb.len()).step_by(97)) {
        ensure(is_format(&TraceSet::from_bytes(&tb[..cut]).map(|_| ())), format!("BMNT cut at {cut}"))?;
        cases += 1;
    }
    for (at, v) in [(0usize, b'X'), (4, 7), (14, 2)] {
        let mut b = tb.clone();
        b[at] = v;
        ensure(is_format(&TraceSet::from_bytes(&b).map(|_| ())), format!("BMNT byte {at}"))?;
        let mut b = pb.clone();
        b[at.min(5)] = v;
        ensure(is_format(&NetworkParams::from_bytes(&b).map(|_| ())), format!("BMNP byte {at}"))?;
        cases += 2;
    }
    let meta = TraceMeta::default();
    let mut w = e2s(bomasim::leakage::BmntWriter::new(Vec::new(), &meta, 2, &[0, 1]))?;
    e2s(w.write_trace(&[1.0, 2.0]))?;
    ensure(w.finish().is_err(), "short write accepted")?;
    let mut rd = e2s(BmntReader::new(&tb[..]))?;
    let mut buf = vec![0.0; ts.n_samples()];
    let mut n = 0;
    while let Some(l) = e2s(rd.next_trace(&mut buf))? {
        ensure(l == ts.labels()[n] && buf == ts.trace(n), "streamed read differs")?;
        n += 1;
    }
    Ok(format!("BMNP and BMNT byte-exact, {cases} corrupted inputs rejected with format errors"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("masked/unmasked functional equivalence", functional_equivalence),
        ("exhaustive gadget correctness", gadgets),
        ("glitch-extended probing security", probing),
        ("latency reproduction", latency),
        ("pipelined adder", adder),
        ("TVLA discrimination", tvla_discrimination),
        ("gate-array experiment", gate_array),
        ("statistics correctness", statistics),
        ("TRIVIUM keystream", trivium),
        ("file formats", formats),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let r = check();
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
