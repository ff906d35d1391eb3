// Fixed-vs-random trace capture on the unmasked and masked engines, a BMNT
// round trip through a file, and first-order Welch t-tests.

use bomasim::bnn::{NetworkParams, DEFAULT_DEPTH, TINY_DIMS};
use bomasim::leakage::{BmntReader, Capture, Design, LeakageModelConfig, PrngMode};
use bomasim::tvla::{report_first_order, MomentAccumulator, DEFAULT_THRESHOLD};

pub fn run() -> bomasim::Result<()> {
    let params = NetworkParams::generate(&TINY_DIMS, DEFAULT_DEPTH, 1)?;
    let cfg = LeakageModelConfig::default();
    let n = 200;

    for (design, prng) in [(Design::Unmasked, PrngMode::On), (Design::Masked, PrngMode::Off), (Design::Masked, PrngMode::On)] {
        let cap = Capture::new(design, Some(&params), &cfg, prng, 5)?;
        let path = std::env::temp_dir().join(format!("bomasim-example-{}-{}.bmnt", design, prng.name()));
        let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        cap.write(n, 2, file)?;

        let mut rd = BmntReader::open(&path)?;
        let mut acc = MomentAccumulator::new(rd.n_samples());
        rd.accumulate(&mut acc)?;
        std::fs::remove_file(&path)?;

        let rep = report_first_order(&acc, DEFAULT_THRESHOLD, &rd.meta().windows)?;
        println!(
            "{design:>8} prng {:<3} {} traces x {} samples: max|t| = {:6.2} outside input windows, {}",
            prng.name(),
            rd.n_traces(),
            rd.n_samples(),
            rep.max_abs_t,
            if rep.passed() { "PASS" } else { "FAIL" }
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bomasim::Result<()> {
    run()
}
