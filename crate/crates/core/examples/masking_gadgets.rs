// Two-share Boolean masking: linear gadgets, the Trichina AND, and a masked
// 20-bit add/sub built from masked full adders.

use bomasim::arith::masked_add_sub;
use bomasim::masking::{mask, mask_word, masked_not, masked_xor, trichina_and_ref};
use bomasim::trivium::{MaskSource, Trivium};
use bomasim::leakage::base_key;

pub fn run() -> bomasim::Result<()> {
    let mut rng = Trivium::derived(&base_key(1), 0);

    println!(" a b | a^b !a a&b | shares of a&b");
    for a in [false, true] {
        for b in [false, true] {
            let ma = mask(a, rng.bit()?);
            let mb = mask(b, rng.bit()?);
            let and = trichina_and_ref(ma, mb, rng.bit()?);
            println!(
                " {} {} |  {}   {}   {}  | ({}, {})",
                a as u8,
                b as u8,
                masked_xor(ma, mb).unmask() as u8,
                masked_not(ma).unmask() as u8,
                and.unmask() as u8,
                and.s0() as u8,
                and.s1() as u8
            );
        }
    }

    let x = mask_word(10_000, rng.draw(20)? as u32, 20)?;
    let y = mask_word(99, rng.draw(20)? as u32, 20)?;
    let before = rng.bits_drawn();
    let sum = masked_add_sub(x, y, false, &mut rng)?;
    let diff = masked_add_sub(y, x, true, &mut rng)?;
    println!(
        "10000 + 99 = {}, 99 - 10000 = {} ({} random bits per operation)",
        sum.unmask(),
        diff.unmask_signed(),
        (rng.bits_drawn() - before) / 2
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> bomasim::Result<()> {
    run()
}
