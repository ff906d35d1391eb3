// 32 registered Trichina gates sharing their operand ports. First-order
// leakage stays under the threshold; the centred-square (second-order) test
// sees the secret right away.

use bomasim::circuit::CellStyle;
use bomasim::leakage::{Capture, Design, LeakageModelConfig, PrngMode};
use bomasim::tvla::DEFAULT_THRESHOLD;

pub fn run() -> bomasim::Result<()> {
    let cfg = LeakageModelConfig {
        noise_sigma: 0.5,
        ..Default::default()
    };
    let cap = Capture::new(Design::GateArray, None, &cfg, PrngMode::On, 11)?.with_gate_array(CellStyle::Registered, None)?;
    let ts = cap.collect(20_000, 2)?;
    let first = ts.t_first_order(DEFAULT_THRESHOLD)?;
    let second = ts.t_second_order(DEFAULT_THRESHOLD)?;
    println!("{} traces x {} cycles", ts.n_traces(), ts.n_samples());
    for (name, r) in [("first", &first), ("second", &second)] {
        let t: Vec<String> = r.t.iter().map(|t| format!("{t:7.2}")).collect();
        println!("{name:>6}-order t = [{}]  {}", t.join(" "), if r.passed() { "PASS" } else { "FAIL" });
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bomasim::Result<()> {
    run()
}
