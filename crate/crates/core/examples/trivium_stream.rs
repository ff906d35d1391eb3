// TRIVIUM as the mask source: keystream bytes, bit draws, and the hard stop
// at the end of the 2^64-bit output space.

use bomasim::trivium::{parse_hex80, MaskSource, Trivium};
use bomasim::Error;

pub fn run() -> bomasim::Result<()> {
    let key = parse_hex80("0f62b5085bae0154a7fa")?;
    let iv = parse_hex80("288ff65dc42b92f960c7")?;
    let mut t = Trivium::seed(&key, &iv);
    let mut ks = [0u8; 16];
    t.fill_bytes(&mut ks)?;
    println!("keystream[0..16] = {}", hex(&ks));

    // masks are consumed LSB first, a few bits at a time
    let word = t.draw(20)?;
    println!("20-bit mask word = {word:#07x}, bits drawn so far = {}", t.bits_drawn());

    let mut near_end = Trivium::seed(&key, &iv).with_bits_emitted(u64::MAX - 3);
    near_end.draw(3)?;
    match near_end.draw(1) {
        Err(Error::OutputSpaceExhausted { emitted, requested }) => {
            println!("exhausted after {emitted} bits ({requested} more requested)")
        }
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

#[allow(dead_code)]
fn main() -> bomasim::Result<()> {
    run()
}
