use std::sync::Arc;

use super::{Circuit, Simulator, WireId};
use crate::error::{Error, Result};

/// Largest enumerable space, in bits (secrets + their masks + fresh randomness).
pub const MAX_PROBE_BITS: u32 = 20;

/// Which input ports carry what during an enumeration.
///
/// Every secret is fed as a sharing: port `.0` gets a uniform mask `m` and
/// port `.1` gets `secret ^ m`. Random ports are uniform. Public ports hold
/// the given constant; any port not listed stays low.
#[derive(Clone, Debug, Default)]
pub struct ProbeSpec {
    pub secrets: Vec<(usize, usize)>,
    pub randoms: Vec<usize>,
    pub public: Vec<(usize, bool)>,
    /// Cycles simulated from reset with the inputs held stable.
    pub cycles: u32,
}

/// A wire whose transient value distribution depends on the secrets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub wire: WireId,
    pub name: String,
    pub cycle: u32,
    pub delta: u32,
}

#[derive(Clone, Debug, Default)]
pub struct ProbeReport {
    pub points: u64,
    pub horizon: u32,
    pub violations: Vec<Violation>,
}

impl ProbeReport {
    pub fn is_secure(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Latest delta at which any wire can change: input arrival (or 0 for
/// register outputs) plus the slowest path through the gates.
fn horizon(c: &Circuit) -> u32 {
    let mut at = vec![0u32; c.wires().len()];
    for p in c.inputs() {
        at[p.wire] = p.arrival;
    }
    let mut latest = at.iter().copied().max().unwrap_or(0);
    for &g in c.topo() {
        let gate = &c.gates()[g];
        let t = gate.inputs.iter().map(|&w| at[w]).max().unwrap_or(0) + gate.delay;
        for &o in &gate.outputs {
            at[o] = t;
        }
        latest = latest.max(t);
    }
    latest
}

/// Exhaustive first-order probing check.
///
/// For every cycle, every delta step and every wire, counts how often the
/// wire is 1 over all masks and random inputs, separately for each secret
/// assignment. Since every secret assignment is paired with the same number of
/// random points, a first-order leak shows up as unequal counts.
pub fn probe_independence(c: &Circuit, spec: &ProbeSpec) -> Result<ProbeReport> {
    let n_sec = spec.secrets.len() as u32;
    let n_rand = n_sec + spec.randoms.len() as u32;
    let bits = n_sec + n_rand;
    if bits > MAX_PROBE_BITS {
        return Err(Error::SpaceTooLarge { bits });
    }
    let n_ports = c.inputs().len();
    for p in spec
        .secrets
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .chain(spec.randoms.iter().copied())
        .chain(spec.public.iter().map(|&(p, _)| p))
    {
        if p >= n_ports {
            return Err(Error::Circuit(format!("probe port {p} out of range")));
        }
    }

    let h = horizon(c) as usize + 1;
    let n_wires = c.wires().len();
    let cycles = spec.cycles.max(1) as usize;
    let slot = |cy: usize, t: usize, w: usize| (cy * h + t) * n_wires + w;
    let per_secret = cycles * h * n_wires;

    let circuit = Arc::new(c.clone());
    let mut base = Simulator::new(Arc::clone(&circuit));
    base.set_recording(true);
    let mut counts = vec![0u32; (1usize << n_sec) * per_secret];
    let mut inputs = vec![false; n_ports];
    let mut cur = vec![false; n_wires];

    for secret in 0u64..(1 << n_sec) {
        let row = &mut counts[secret as usize * per_secret..(secret as usize + 1) * per_secret];
        for rnd in 0u64..(1 << n_rand) {
            inputs.iter_mut().for_each(|v| *v = false);
            for &(p, v) in &spec.public {
                inputs[p] = v;
            }
            for (k, &(p0, p1)) in spec.secrets.iter().enumerate() {
                let s = (secret >> k) & 1 == 1;
                let m = (rnd >> k) & 1 == 1;
                inputs[p0] = m;
                inputs[p1] = s ^ m;
            }
            for (k, &p) in spec.randoms.iter().enumerate() {
                inputs[p] = (rnd >> (n_sec as usize + k)) & 1 == 1;
            }

            let mut sim = base.clone();
            for cy in 0..cycles {
                cur.copy_from_slice(sim.values());
                sim.step(&inputs)?;
                let mut ev = sim.events().iter().peekable();
                for t in 0..h {
                    while let Some(e) = ev.next_if(|e| e.delta as usize == t) {
                        cur[e.wire] = e.value;
                    }
                    for (w, &v) in cur.iter().enumerate() {
                        row[slot(cy, t, w)] += v as u32;
                    }
                }
            }
        }
    }

    let mut violations = Vec::new();
    let reference = &counts[..per_secret];
    let mut flagged = vec![false; per_secret];
    for s in 1..(1usize << n_sec) {
        let other = &counts[s * per_secret..(s + 1) * per_secret];
        for (i, (a, b)) in reference.iter().zip(other).enumerate() {
            flagged[i] |= a != b;
        }
    }
    for cy in 0..cycles {
        for t in 0..h {
            for w in 0..n_wires {
                if flagged[slot(cy, t, w)] {
                    violations.push(Violation {
                        wire: w,
                        name: c.wire_name(w).to_string(),
                        cycle: cy as u32,
                        delta: t as u32,
                    });
                }
            }
        }
    }
    Ok(ProbeReport {
        points: 1 << bits,
        horizon: h as u32,
        violations,
    })
}
