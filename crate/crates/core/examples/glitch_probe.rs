// Glitch-extended probing of a single Trichina AND. With the fresh mask
// registered in front of the gate the cell is clean for every arrival
// order; without the register a late mask lets the unmasked product
// appear on internal wires for a few delta steps.

use bomasim::circuit::{build_trichina_cell, probe_independence, CellStyle, ProbeSpec, REGISTERED_TRICHINA_LATENCY};

pub fn run() -> bomasim::Result<()> {
    // ports: a0 a1 b0 b1 r
    let spec = ProbeSpec {
        secrets: vec![(0, 1), (2, 3)],
        randoms: vec![4],
        cycles: REGISTERED_TRICHINA_LATENCY + 1,
        ..Default::default()
    };
    for (style, offsets) in [
        (CellStyle::Registered, [0, 0, 0, 0, 0]),
        (CellStyle::Registered, [0, 3, 1, 2, 4]),
        (CellStyle::Unregistered, [0, 0, 0, 0, 0]),
        (CellStyle::Unregistered, [0, 0, 0, 0, 3]),
    ] {
        let mut cell = build_trichina_cell(style)?;
        cell.set_arrivals(&offsets)?;
        let rep = probe_independence(&cell, &spec)?;
        print!("{style:?} offsets {offsets:?}: {} points, ", rep.points);
        if rep.is_secure() {
            println!("no leaking wire");
        } else {
            let first = &rep.violations[0];
            println!(
                "{} leaking point(s), first {} at cycle {} delta {}",
                rep.violations.len(),
                first.name,
                first.cycle,
                first.delta
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bomasim::Result<()> {
    run()
}
