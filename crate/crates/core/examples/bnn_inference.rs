// Masked and unmasked inference on the tiny topology. The masked engine
// returns the class as index shares; recombining them here is the test
// bench's job, not the engine's.

use bomasim::bnn::{masked_infer, unmasked_infer, Image, NetworkParams, NoObserver, DEFAULT_DEPTH, TINY_DIMS};
use bomasim::leakage::base_key;
use bomasim::trivium::Trivium;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> bomasim::Result<()> {
    let params = NetworkParams::generate(&TINY_DIMS, DEFAULT_DEPTH, 42)?;
    let bytes = params.to_bytes();
    assert_eq!(NetworkParams::from_bytes(&bytes)?.to_bytes(), bytes);
    println!("params {:?}, {} bytes as BMNP", params.dims(), bytes.len());

    let mut images = ChaCha8Rng::seed_from_u64(7);
    let mut agree = 0;
    let n = 20;
    for i in 0..n {
        let img = Image::random(params.input_count(), &mut images);
        let plain = unmasked_infer(&params, &img);
        let mut masks = Trivium::derived(&base_key(7), i);
        let masked = masked_infer(&params, &img, &mut masks, &mut NoObserver)?;
        let class = masked.class_shares.unmask() as usize;
        if i < 3 {
            println!(
                "image {i}: class {} / {}, shares ({:#x}, {:#x}), output sums {:?}",
                plain.class,
                class,
                masked.class_shares.s0(),
                masked.class_shares.s1(),
                plain.sums.last().unwrap()
            );
        }
        agree += (class == plain.class) as usize;
        if i == n - 1 {
            println!(
                "masked: {} cycles, {} random bits, {} adds; unmasked: {} cycles",
                masked.cycles, masked.random_bits, masked.ops, plain.cycles
            );
        }
    }
    println!("agree: {agree}/{n}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> bomasim::Result<()> {
    run()
}
