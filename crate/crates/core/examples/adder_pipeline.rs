// The bit-serial pipelined masked adder: 20 slices of 5 cycles each, one new
// operation per cycle, results usable 101 cycles after issue.

use bomasim::arith::{pipelined_issue, MaskedAdderUnit};
use bomasim::leakage::base_key;
use bomasim::masking::mask_word;
use bomasim::trivium::{MaskSource, Trivium};
use bomasim::Error;

pub fn run() -> bomasim::Result<()> {
    let mut rng = Trivium::derived(&base_key(2), 0);
    let mut unit = MaskedAdderUnit::new(20)?;
    println!("latency = {} cycles", unit.latency());

    let x = mask_word(10_000, rng.draw(20)? as u32, 20)?;
    let y = mask_word(99, rng.draw(20)? as u32, 20)?;
    let t = unit.issue(x, y, false, &mut rng)?;
    unit.tick();

    // reading early is a structural hazard, not a stale value
    match unit.read(&t) {
        Err(Error::StructuralHazard { cycle, available, .. }) => {
            println!("cycle {cycle}: result not written back until cycle {available}")
        }
        other => println!("unexpected: {other:?}"),
    }
    unit.wait_until(unit.available(&t));
    println!("cycle {}: 10000 + 99 = {}", unit.now(), unit.read(&t)?.unmask());

    // a stream of independent operations keeps every slice busy
    let ops: Vec<_> = (0..1000u32)
        .map(|i| {
            let a = mask_word(i * 7, rng.draw(20)? as u32, 20)?;
            let b = mask_word(i, rng.draw(20)? as u32, 20)?;
            Ok((a, b, i % 2 == 1))
        })
        .collect::<bomasim::Result<_>>()?;
    let (out, cycles) = pipelined_issue(20, &ops, &mut rng)?;
    let ok = out
        .iter()
        .zip(0..)
        .all(|(r, i): (_, u32)| r.unmask_signed() == if i % 2 == 1 { 6 * i as i64 } else { 8 * i as i64 });
    println!("1000 streamed ops: {cycles} cycles, all correct: {ok}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> bomasim::Result<()> {
    run()
}
