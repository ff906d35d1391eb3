// Closed-form cycle count of the masked accelerator against a full
// simulated inference on the default topology.

use bomasim::bnn::{
    analytic_masked_cycles, masked_infer, unmasked_cycles, Image, NetworkParams, NoObserver, DEFAULT_DEPTH, DEFAULT_DIMS,
};
use bomasim::trivium::ZeroMasks;

pub fn run() -> bomasim::Result<()> {
    let b = analytic_masked_cycles(&DEFAULT_DIMS, DEFAULT_DEPTH);
    for (i, l) in b.layers.iter().enumerate() {
        println!("layer {i}: {:>4} -> {:>4}, {:>7} adds, {:>5} stall cycles", l.n_in, l.n_out, l.issue_slots, l.stalls);
    }
    let plain = unmasked_cycles(&DEFAULT_DIMS);
    println!("analytic masked {} vs unmasked {} ({:.3}x)", b.total, plain, b.total as f64 / plain as f64);

    // masks do not change the schedule, so zero masks are enough here
    let params = NetworkParams::generate(&DEFAULT_DIMS, DEFAULT_DEPTH, 1)?;
    let r = masked_infer(&params, &Image::fixed(DEFAULT_DIMS[0]), &mut ZeroMasks::new(), &mut NoObserver)?;
    println!("simulated masked {} cycles, {} adds, equal: {}", r.cycles, r.ops, r.cycles == b.total);
    Ok(())
}

#[allow(dead_code)]
fn main() -> bomasim::Result<()> {
    run()
}
