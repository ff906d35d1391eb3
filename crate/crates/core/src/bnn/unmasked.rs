//! Plain-integer baseline engine: node-major, one add per cycle.

use super::schedule::CONTROL_CYCLES;
use super::{Image, NetworkParams, ACC_WIDTH};
use crate::masking::width_mask;

/// Sees every add of the baseline datapath (accumulator and operand as
/// 20-bit patterns).
pub trait UnmaskedObserver {
    fn on_add(&mut self, _cycle: u64, _acc: u32, _operand: u32, _sub: bool) {}
}

impl UnmaskedObserver for () {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnmaskedResult {
    pub class: usize,
    pub cycles: u64,
    /// Sums of every layer, node order.
    pub sums: Vec<Vec<i32>>,
}

fn wrap(v: i64) -> i32 {
    let m = width_mask(ACC_WIDTH) as i64;
    let u = v & m;
    if u >> (ACC_WIDTH - 1) & 1 == 1 {
        (u - (1 << ACC_WIDTH)) as i32
    } else {
        u as i32
    }
}

fn pattern(v: i32) -> u32 {
    (v as u32) & width_mask(ACC_WIDTH)
}

pub fn unmasked_infer(p: &NetworkParams, img: &Image) -> UnmaskedResult {
    unmasked_infer_observed(p, img, &mut ())
}

pub fn unmasked_sums(p: &NetworkParams, img: &Image) -> Vec<Vec<i32>> {
    unmasked_infer(p, img).sums
}

pub fn unmasked_infer_observed<O: UnmaskedObserver + ?Sized>(p: &NetworkParams, img: &Image, obs: &mut O) -> UnmaskedResult {
    let mut cycle = 0u64;
    let mut inputs: Vec<i32> = img.pixels().iter().map(|&x| x as i32).collect();
    let mut sums = Vec::new();
    let n_layers = p.layers().len();
    for (li, layer) in p.layers().iter().enumerate() {
        cycle += CONTROL_CYCLES;
        let mut out = Vec::with_capacity(layer.n_out);
        for node in 0..layer.n_out {
            let mut acc = layer.biases[node];
            for (i, &x) in inputs.iter().enumerate() {
                let w = layer.weight(node, i);
                let operand = if li == 0 {
                    if w {
                        x
                    } else {
                        -x
                    }
                } else if w == (x == 1) {
                    1
                } else {
                    -1
                };
                obs.on_add(cycle, pattern(acc), pattern(operand), false);
                acc = wrap(acc as i64 + operand as i64);
                cycle += 1;
            }
            out.push(acc);
        }
        inputs = if li + 1 < n_layers {
            out.iter().map(|&s| (s >= 0) as i32).collect()
        } else {
            Vec::new()
        };
        sums.push(out);
    }
    let last = sums.last().expect("validated params have layers");
    let mut best = 0;
    for k in 1..last.len() {
        obs.on_add(cycle, pattern(last[best]), pattern(last[k]), true);
        cycle += 1;
        if last[k] > last[best] {
            best = k;
        }
    }
    UnmaskedResult {
        class: best,
        cycles: cycle,
        sums,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::{unmasked_cycles, Layer};

    #[test]
    fn zero_image_all_plus_weights() {
        let layer0 = Layer {
            n_in: 3,
            n_out: 2,
            weights: vec![true; 6],
            biases: vec![0, 0],
        };
        let layer1 = Layer {
            n_in: 2,
            n_out: 2,
            weights: vec![true, true, false, false],
            biases: vec![0, 0],
        };
        let p = NetworkParams::new(vec![layer0, layer1], 2).unwrap();
        let r = unmasked_infer(&p, &Image(vec![0; 3]));
        assert_eq!(r.sums[0], vec![0, 0]);
        // activations are 1, so node 0 sees +2 and node 1 sees -2
        assert_eq!(r.sums[1], vec![2, -2]);
        assert_eq!(r.class, 0);
        assert_eq!(r.cycles, unmasked_cycles(&[3, 2, 2]));
    }

    #[test]
    fn ties_keep_first() {
        let l = Layer {
            n_in: 1,
            n_out: 3,
            weights: vec![true; 3],
            biases: vec![1, 5, 5],
        };
        let p = NetworkParams::new(vec![l], 1).unwrap();
        assert_eq!(unmasked_infer(&p, &Image(vec![0])).class, 1);
    }
}
