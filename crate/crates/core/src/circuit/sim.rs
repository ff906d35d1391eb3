use std::sync::Arc;

use super::{Circuit, Driver, WireId};
use crate::error::{Error, Result};

/// One transient value change inside a cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireEvent {
    pub delta: u32,
    pub wire: WireId,
    pub value: bool,
}

/// Activity summary of one simulated clock cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CycleTrace {
    /// Register bits that flip at the clock edge closing this cycle.
    pub reg_hd: u32,
    /// Value changes on gate-driven wires across all delta steps.
    pub toggles: u32,
    /// Delta step of the last change (0 for a quiet cycle).
    pub settle_delta: u32,
}

/// Delta-cycle simulation state for one circuit instance.
///
/// Register outputs switch at delta 0, each input port at its arrival offset,
/// and a gate output follows an input change after the gate's delay
/// (transport delay, so short pulses survive). The simulator starts from the
/// settled reset state: registers cleared, inputs low.
#[derive(Clone, Debug)]
pub struct Simulator {
    circuit: Arc<Circuit>,
    values: Vec<bool>,
    /// Values latched at the last clock edge, applied to q at the next delta 0.
    latched: Vec<bool>,
    wire_toggles: Vec<u32>,
    buckets: Vec<Vec<(WireId, bool)>>,
    gate_stamp: Vec<u32>,
    stamp: u32,
    dirty: Vec<usize>,
    record: bool,
    events: Vec<WireEvent>,
    cycle: u64,
}

impl Simulator {
    pub fn new(circuit: Arc<Circuit>) -> Self {
        let n_regs = circuit.registers().len();
        let values = settled_eval(&circuit, &vec![false; circuit.inputs().len()], &vec![false; n_regs]);
        Simulator {
            wire_toggles: vec![0; circuit.wires().len()],
            gate_stamp: vec![0; circuit.gates().len()],
            latched: vec![false; n_regs],
            values,
            buckets: Vec::new(),
            stamp: 0,
            dirty: Vec::new(),
            record: false,
            events: Vec::new(),
            cycle: 0,
            circuit,
        }
    }

    pub fn circuit(&self) -> &Arc<Circuit> {
        &self.circuit
    }

    /// Returns to the settled reset state.
    pub fn reset(&mut self) {
        let c = Arc::clone(&self.circuit);
        *self = Simulator {
            record: self.record,
            ..Simulator::new(c)
        };
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Keep every transient change of the next cycles in [`events`](Self::events).
    pub fn set_recording(&mut self, on: bool) {
        self.record = on;
        self.events.clear();
    }

    /// Changes recorded during the last cycle, in delta order.
    pub fn events(&self) -> &[WireEvent] {
        &self.events
    }

    /// Settled wire values at the end of the last cycle.
    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn value(&self, w: WireId) -> bool {
        self.values[w]
    }

    /// Per-wire toggle counts of the last cycle.
    pub fn wire_toggles(&self) -> &[u32] {
        &self.wire_toggles
    }

    /// Register contents that will drive q during the next cycle.
    pub fn register_state(&self) -> &[bool] {
        &self.latched
    }

    fn schedule(&mut self, t: u32, w: WireId, v: bool) {
        let t = t as usize;
        if self.buckets.len() <= t {
            self.buckets.resize_with(t + 1, Vec::new);
        }
        self.buckets[t].push((w, v));
    }

    /// Simulates one clock cycle; `inputs` is given in port order.
    pub fn step(&mut self, inputs: &[bool]) -> Result<CycleTrace> {
        let c = Arc::clone(&self.circuit);
        if inputs.len() != c.inputs().len() {
            return Err(Error::Circuit(format!(
                "{} input values for {} ports",
                inputs.len(),
                c.inputs().len()
            )));
        }
        self.wire_toggles.iter_mut().for_each(|t| *t = 0);
        self.events.clear();

        for (i, r) in c.registers().iter().enumerate() {
            if self.latched[i] != self.values[r.q] {
                self.schedule(0, r.q, self.latched[i]);
            }
        }
        for (p, &v) in c.inputs().iter().zip(inputs) {
            if self.values[p.wire] != v {
                self.schedule(p.arrival, p.wire, v);
            }
        }

        let budget = c.delta_budget() as usize;
        let mut trace = CycleTrace::default();
        let mut t = 0usize;
        while t < self.buckets.len() {
            if self.buckets[t].is_empty() {
                t += 1;
                continue;
            }
            if t > budget {
                for b in &mut self.buckets {
                    b.clear();
                }
                return Err(Error::UnsettledCircuit {
                    budget: c.delta_budget(),
                });
            }
            self.stamp = self.stamp.wrapping_add(1);
            if self.stamp == 0 {
                self.gate_stamp.iter_mut().for_each(|s| *s = 0);
                self.stamp = 1;
            }
            let bucket = std::mem::take(&mut self.buckets[t]);
            for &(w, v) in &bucket {
                if self.values[w] == v {
                    continue;
                }
                self.values[w] = v;
                let wire = &c.wires()[w];
                if let Driver::Gate(_) = wire.driver {
                    self.wire_toggles[w] += 1;
                    trace.toggles += 1;
                }
                trace.settle_delta = t as u32;
                if self.record {
                    self.events.push(WireEvent {
                        delta: t as u32,
                        wire: w,
                        value: v,
                    });
                }
                for &g in &wire.fanout {
                    if self.gate_stamp[g] != self.stamp {
                        self.gate_stamp[g] = self.stamp;
                        self.dirty.push(g);
                    }
                }
            }
            let mut bucket = bucket;
            bucket.clear();
            self.buckets[t] = bucket;

            let dirty = std::mem::take(&mut self.dirty);
            for &g in &dirty {
                let gate = &c.gates()[g];
                let (o0, o1) = gate.eval(&self.values);
                let when = t as u32 + gate.delay;
                self.schedule(when, gate.outputs[0], o0);
                if gate.outputs.len() > 1 {
                    self.schedule(when, gate.outputs[1], o1);
                }
            }
            let mut dirty = dirty;
            dirty.clear();
            self.dirty = dirty;
            t += 1;
        }

        for (i, r) in c.registers().iter().enumerate() {
            let d = self.values[r.d];
            if d != self.values[r.q] {
                trace.reg_hd += 1;
            }
            self.latched[i] = d;
        }
        self.cycle += 1;
        Ok(trace)
    }
}

/// Functional evaluation in topological order: all wire values for the given
/// input-port values and register contents, without timing.
pub fn settled_eval(c: &Circuit, inputs: &[bool], registers: &[bool]) -> Vec<bool> {
    let mut values = vec![false; c.wires().len()];
    for (p, &v) in c.inputs().iter().zip(inputs) {
        values[p.wire] = v;
    }
    for (r, &v) in c.registers().iter().zip(registers) {
        values[r.q] = v;
    }
    for &g in c.topo() {
        let gate = &c.gates()[g];
        let (o0, o1) = gate.eval(&values);
        values[gate.outputs[0]] = o0;
        if gate.outputs.len() > 1 {
            values[gate.outputs[1]] = o1;
        }
    }
    values
}

impl Circuit {
    /// Register contents after a clock edge, given settled wire values.
    pub fn latch(&self, values: &[bool]) -> Vec<bool> {
        self.registers().iter().map(|r| values[r.d]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_and_toggles_once() {
        let mut b = CircuitBuilder::new();
        let x = b.input("x");
        let y = b.input("y");
        let z = b.and(x, y);
        let c = Arc::new(b.build().unwrap());
        let mut sim = Simulator::new(c);
        let tr = sim.step(&[true, true]).unwrap();
        assert_eq!(tr.toggles, 1);
        assert!(sim.value(z));
    }

    #[test]
    fn skewed_xor_inputs_glitch() {
        let mut b = CircuitBuilder::new();
        let x = b.input_at("x", 0);
        let y = b.input_at("y", 2);
        let z = b.xor(x, y);
        let c = Arc::new(b.build().unwrap());
        let mut sim = Simulator::new(c);
        let tr = sim.step(&[true, true]).unwrap();
        assert_eq!(tr.toggles, 2);
        assert_eq!(sim.wire_toggles()[z], 2);
        assert!(!sim.value(z));
        assert_eq!(tr.settle_delta, 3);
    }

    #[test]
    fn repeated_inputs_are_quiet() {
        let mut b = CircuitBuilder::new();
        let x = b.input_at("x", 1);
        let y = b.input("y");
        let n = b.not(x);
        let z = b.xor(n, y);
        b.output("z", z);
        let c = Arc::new(b.build().unwrap());
        let mut sim = Simulator::new(c);
        sim.step(&[true, false]).unwrap();
        let tr = sim.step(&[true, false]).unwrap();
        assert_eq!((tr.toggles, tr.reg_hd), (0, 0));
    }

    #[test]
    fn loop_is_unsettled() {
        let mut b = CircuitBuilder::new();
        let x = b.input("x");
        let w = b.xor(x, x);
        let g = match b.wires[w].driver {
            Driver::Gate(g) => g,
            _ => unreachable!(),
        };
        // the xor reads its own output, so any change on x oscillates forever
        b.gates[g].inputs[1] = w;
        b.wires[w].fanout.push(g);
        let c = Arc::new(b.build_allow_loops().unwrap());
        let mut sim = Simulator::new(c);
        let err = sim.step(&[true]).unwrap_err();
        assert!(matches!(err, Error::UnsettledCircuit { budget: 64 }));
    }

    #[test]
    fn constants_settle_to_constants() {
        let mut b = CircuitBuilder::new();
        let k1 = b.constant(true);
        let k0 = b.constant(false);
        let c = b.build().unwrap();
        let v = settled_eval(&c, &[], &[]);
        assert!(v[k1] && !v[k0]);
    }

    fn random_circuit(rng: &mut ChaCha8Rng) -> Circuit {
        let mut b = CircuitBuilder::new();
        let n_in = rng.gen_range(1..6);
        let mut pool: Vec<WireId> = (0..n_in)
            .map(|i| b.input_at(&format!("i{i}"), rng.gen_range(0..4)))
            .collect();
        let mut regs = Vec::new();
        for _ in 0..rng.gen_range(1..25) {
            let pick = |rng: &mut ChaCha8Rng, pool: &[WireId]| pool[rng.gen_range(0..pool.len())];
            let w = match rng.gen_range(0..6) {
                0 => {
                    let (x, y) = (pick(rng, &pool), pick(rng, &pool));
                    b.and(x, y)
                }
                1 | 2 => {
                    let (x, y) = (pick(rng, &pool), pick(rng, &pool));
                    b.xor(x, y)
                }
                3 => {
                    let x = pick(rng, &pool);
                    b.not(x)
                }
                4 => {
                    let ins = [pick(rng, &pool), pick(rng, &pool), pick(rng, &pool), pick(rng, &pool)];
                    let mut table = [0u8; 16];
                    rng.fill(&mut table[..]);
                    table.iter_mut().for_each(|e| *e &= 3);
                    let (o0, o1) = b.lut4x2(ins, table);
                    pool.push(o1);
                    o0
                }
                _ => {
                    let x = pick(rng, &pool);
                    let q = b.register(x);
                    regs.push(q);
                    q
                }
            };
            b.set_delay(w, rng.gen_range(1..4));
            pool.push(w);
        }
        b.build().unwrap()
    }

    #[test]
    fn step_agrees_with_settled_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let c = Arc::new(random_circuit(&mut rng));
            let mut sim = Simulator::new(Arc::clone(&c));
            let mut regs = vec![false; c.registers().len()];
            for _ in 0..3 {
                let inputs: Vec<bool> = (0..c.inputs().len()).map(|_| rng.gen()).collect();
                sim.step(&inputs).unwrap();
                let expect = settled_eval(&c, &inputs, &regs);
                assert_eq!(sim.values(), &expect[..]);
                regs = c.latch(&expect);
                assert_eq!(sim.register_state(), &regs[..]);
            }
        }
    }

    #[test]
    fn deterministic_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = Arc::new(random_circuit(&mut rng));
        let inputs: Vec<Vec<bool>> = (0..8)
            .map(|_| (0..c.inputs().len()).map(|_| rng.gen()).collect())
            .collect();
        let run = || {
            let mut sim = Simulator::new(Arc::clone(&c));
            inputs.iter().map(|i| sim.step(i).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
