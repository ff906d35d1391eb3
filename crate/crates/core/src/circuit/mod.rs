//! Gate-level netlists with delta-delay timing.
//!
//! A [`Circuit`] is an immutable netlist of gates, registers and input ports.
//! Every wire has exactly one driver. Gates carry a delay in delta units and
//! input ports an arrival offset, so a [`Simulator`] can expose the transient
//! values (glitches) a wire takes inside a clock cycle before it settles.

mod cells;
mod probe;
mod sim;

pub use cells::{
    build_gate_array, build_masked_full_adder, build_mux_bit_cell, build_ripple_adder, build_trichina_cell,
    masked_full_adder_cell, trichina_cell, CellStyle, FullAdderOutputs, FullAdderPorts, TrichinaPorts,
    FULL_ADDER_LATENCY, MUX_BIT_LATENCY, REGISTERED_TRICHINA_LATENCY,
};
pub use probe::{probe_independence, ProbeReport, ProbeSpec, Violation, MAX_PROBE_BITS};
pub use sim::{settled_eval, CycleTrace, Simulator, WireEvent};

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type WireId = usize;

/// Default bound on delta steps per cycle before a circuit is declared unsettled.
pub const DEFAULT_DELTA_BUDGET: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GateKind {
    And,
    Xor,
    Not,
    /// Four inputs, two outputs; entry `i` holds output 0 in bit 0 and output 1
    /// in bit 1 for input pattern `i` (input 0 is the least significant).
    /// Evaluates atomically: one event per output, no internal transients.
    Lut4x2([u8; 16]),
    Const(bool),
}

impl GateKind {
    fn name(&self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Xor => "XOR",
            GateKind::Not => "NOT",
            GateKind::Lut4x2(_) => "LUT4x2",
            GateKind::Const(_) => "CONST",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<WireId>,
    pub outputs: Vec<WireId>,
    pub delay: u32,
}

impl Gate {
    pub(crate) fn eval(&self, values: &[bool]) -> (bool, bool) {
        let v = |i: usize| values[self.inputs[i]];
        match &self.kind {
            GateKind::And => (v(0) & v(1), false),
            GateKind::Xor => (v(0) ^ v(1), false),
            GateKind::Not => (!v(0), false),
            GateKind::Const(c) => (*c, false),
            GateKind::Lut4x2(table) => {
                let idx = (v(0) as usize) | (v(1) as usize) << 1 | (v(2) as usize) << 2 | (v(3) as usize) << 3;
                let e = table[idx];
                (e & 1 == 1, e & 2 == 2)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    Input(usize),
    Gate(usize),
    Register(usize),
}

#[derive(Clone, Debug)]
pub struct Wire {
    pub name: String,
    pub driver: Driver,
    /// Gates reading this wire.
    pub fanout: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Register {
    pub d: WireId,
    pub q: WireId,
}

#[derive(Clone, Debug)]
pub struct Port {
    pub wire: WireId,
    pub arrival: u32,
}

#[derive(Clone, Debug)]
pub struct Circuit {
    wires: Vec<Wire>,
    gates: Vec<Gate>,
    registers: Vec<Register>,
    inputs: Vec<Port>,
    outputs: Vec<(String, WireId)>,
    /// Gates in an order where every gate follows the drivers of its inputs.
    topo: Vec<usize>,
    delta_budget: u32,
}

impl Circuit {
    pub fn wires(&self) -> &[Wire] {
        &self.wires
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn inputs(&self) -> &[Port] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[(String, WireId)] {
        &self.outputs
    }

    pub fn delta_budget(&self) -> u32 {
        self.delta_budget
    }

    pub fn set_delta_budget(&mut self, budget: u32) {
        self.delta_budget = budget;
    }

    pub fn wire_name(&self, w: WireId) -> &str {
        &self.wires[w].name
    }

    pub fn find_wire(&self, name: &str) -> Option<WireId> {
        self.wires.iter().position(|w| w.name == name)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs
            .iter()
            .position(|p| self.wires[p.wire].name == name)
    }

    pub fn output(&self, name: &str) -> Option<WireId> {
        self.outputs.iter().find(|(n, _)| n == name).map(|(_, w)| *w)
    }

    /// Overrides the arrival offsets of all input ports (in port order).
    pub fn set_arrivals(&mut self, offsets: &[u32]) -> Result<()> {
        if offsets.len() != self.inputs.len() {
            return Err(Error::Circuit(format!(
                "{} arrival offsets for {} input ports",
                offsets.len(),
                self.inputs.len()
            )));
        }
        for (p, &o) in self.inputs.iter_mut().zip(offsets) {
            p.arrival = o;
        }
        Ok(())
    }

    pub(crate) fn topo(&self) -> &[usize] {
        &self.topo
    }

    /// Debug dump, one gate per line: `id kind inputs output delay`.
    pub fn netlist_dump(&self) -> String {
        let mut out = String::new();
        for (i, g) in self.gates.iter().enumerate() {
            let names = |ws: &[WireId]| {
                ws.iter()
                    .map(|&w| self.wires[w].name.as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let _ = writeln!(
                out,
                "g{i} {} {} {} {}",
                g.kind.name(),
                if g.inputs.is_empty() { "-".to_string() } else { names(&g.inputs) },
                names(&g.outputs),
                g.delay
            );
        }
        for (i, r) in self.registers.iter().enumerate() {
            let _ = writeln!(
                out,
                "r{i} DFF {} {} 0",
                self.wires[r.d].name, self.wires[r.q].name
            );
        }
        out
    }
}

/// Incremental netlist construction.
#[derive(Debug, Default)]
pub struct CircuitBuilder {
    wires: Vec<Wire>,
    gates: Vec<Gate>,
    registers: Vec<Register>,
    inputs: Vec<Port>,
    outputs: Vec<(String, WireId)>,
    default_delay: u32,
    anon: usize,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        CircuitBuilder {
            default_delay: 1,
            ..Default::default()
        }
    }

    fn new_wire(&mut self, name: Option<&str>, driver: Driver) -> WireId {
        let name = match name {
            Some(n) => n.to_string(),
            None => {
                self.anon += 1;
                format!("n{}", self.anon)
            }
        };
        self.wires.push(Wire {
            name,
            driver,
            fanout: Vec::new(),
        });
        self.wires.len() - 1
    }

    pub fn input(&mut self, name: &str) -> WireId {
        self.input_at(name, 0)
    }

    pub fn input_at(&mut self, name: &str, arrival: u32) -> WireId {
        let w = self.new_wire(Some(name), Driver::Input(self.inputs.len()));
        self.inputs.push(Port { wire: w, arrival });
        w
    }

    fn gate(&mut self, kind: GateKind, inputs: &[WireId], n_out: usize, name: Option<&str>) -> Vec<WireId> {
        let gi = self.gates.len();
        let outputs: Vec<WireId> = (0..n_out)
            .map(|k| {
                let nm = name.map(|n| if n_out == 1 { n.to_string() } else { format!("{n}.{k}") });
                self.new_wire(nm.as_deref(), Driver::Gate(gi))
            })
            .collect();
        for &w in inputs {
            self.wires[w].fanout.push(gi);
        }
        self.gates.push(Gate {
            kind,
            inputs: inputs.to_vec(),
            outputs: outputs.clone(),
            delay: self.default_delay,
        });
        outputs
    }

    pub fn and(&mut self, a: WireId, b: WireId) -> WireId {
        self.gate(GateKind::And, &[a, b], 1, None)[0]
    }

    pub fn xor(&mut self, a: WireId, b: WireId) -> WireId {
        self.gate(GateKind::Xor, &[a, b], 1, None)[0]
    }

    pub fn not(&mut self, a: WireId) -> WireId {
        self.gate(GateKind::Not, &[a], 1, None)[0]
    }

    pub fn constant(&mut self, value: bool) -> WireId {
        self.gate(GateKind::Const(value), &[], 1, None)[0]
    }

    pub fn lut4x2(&mut self, inputs: [WireId; 4], table: [u8; 16]) -> (WireId, WireId) {
        let o = self.gate(GateKind::Lut4x2(table), &inputs, 2, None);
        (o[0], o[1])
    }

    /// Names the most recently created wire `w` (for probes and dumps).
    pub fn name(&mut self, w: WireId, name: &str) -> WireId {
        self.wires[w].name = name.to_string();
        w
    }

    /// Sets the delay of the gate driving `w`.
    pub fn set_delay(&mut self, w: WireId, delay: u32) {
        if let Driver::Gate(g) = self.wires[w].driver {
            self.gates[g].delay = delay;
        }
    }

    /// A D flip-flop; returns its q wire.
    pub fn register(&mut self, d: WireId) -> WireId {
        let name = format!("{}_q", self.wires[d].name);
        let q = self.new_wire(Some(&name), Driver::Register(self.registers.len()));
        self.registers.push(Register { d, q });
        q
    }

    pub fn output(&mut self, name: &str, w: WireId) {
        self.outputs.push((name.to_string(), w));
    }

    /// Validates and freezes the netlist; rejects combinational loops.
    pub fn build(self) -> Result<Circuit> {
        self.finish(true)
    }

    /// Like [`build`](Self::build) but keeps combinational loops, which the
    /// simulator then reports as unsettled.
    pub fn build_allow_loops(self) -> Result<Circuit> {
        self.finish(false)
    }

    fn finish(self, reject_loops: bool) -> Result<Circuit> {
        for g in &self.gates {
            let arity = match g.kind {
                GateKind::And | GateKind::Xor => 2,
                GateKind::Not => 1,
                GateKind::Lut4x2(_) => 4,
                GateKind::Const(_) => 0,
            };
            if g.inputs.len() != arity {
                return Err(Error::Circuit(format!("{} gate with {} inputs", g.kind.name(), g.inputs.len())));
            }
            if g.delay == 0 {
                return Err(Error::Circuit("gate delay must be at least 1".into()));
            }
        }
        // Kahn's algorithm over gate->gate edges; registers and ports are sources.
        let n = self.gates.len();
        let mut indeg = vec![0usize; n];
        for (gi, g) in self.gates.iter().enumerate() {
            indeg[gi] = g
                .inputs
                .iter()
                .filter(|&&w| matches!(self.wires[w].driver, Driver::Gate(_)))
                .count();
        }
        let mut ready: Vec<usize> = (0..n).filter(|&g| indeg[g] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(g) = ready.pop() {
            topo.push(g);
            for &o in &self.gates[g].outputs {
                for &h in &self.wires[o].fanout {
                    indeg[h] -= 1;
                    if indeg[h] == 0 {
                        ready.push(h);
                    }
                }
            }
        }
        if topo.len() != n {
            if reject_loops {
                return Err(Error::Circuit("combinational loop without a register".into()));
            }
            // keep remaining gates in index order; settled_eval is meaningless here
            let mut seen = vec![false; n];
            for &g in &topo {
                seen[g] = true;
            }
            topo.extend((0..n).filter(|&g| !seen[g]));
        }
        Ok(Circuit {
            wires: self.wires,
            gates: self.gates,
            registers: self.registers,
            inputs: self.inputs,
            outputs: self.outputs,
            topo,
            delta_budget: DEFAULT_DELTA_BUDGET,
        })
    }
}
