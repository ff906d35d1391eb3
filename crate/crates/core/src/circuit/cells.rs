use super::{Circuit, CircuitBuilder, WireId};
use crate::error::Result;

/// Cycles from input sampling to valid output shares of the registered cell.
pub const REGISTERED_TRICHINA_LATENCY: u32 = 4;

/// Cycles through one masked full-adder slice: the registered Trichina chain
/// plus the carry recombination register.
pub const FULL_ADDER_LATENCY: u32 = REGISTERED_TRICHINA_LATENCY + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellStyle {
    /// Plain XOR chain; glitches may combine shares.
    Unregistered,
    /// A flip-flop in front of every chain XOR except the first.
    Registered,
}

#[derive(Clone, Copy, Debug)]
pub struct TrichinaPorts {
    pub a0: WireId,
    pub a1: WireId,
    pub b0: WireId,
    pub b1: WireId,
    pub r: WireId,
}

/// Adds a Trichina AND to `b`, returning `(s0, s1)`. Internal wires are named
/// with `prefix` (`p00..p11` partial products, `z1..z4` chain values).
///
/// Registered layout, one column per cycle:
///
/// ```text
/// cycle 0        R1             R2             R3          R4
/// z1 = r^p00  -> z1,p01,p10,  -> z2,p10,p11, -> z3,p11,r -> z4,r
///                p11,r           r
/// ```
///
/// The first XOR has no flip-flop in front of it; a glitch there only
/// combines `r` with a single partial product.
pub fn trichina_cell(b: &mut CircuitBuilder, p: TrichinaPorts, style: CellStyle, prefix: &str) -> (WireId, WireId) {
    let p00 = b.and(p.a0, p.b0);
    b.name(p00, &format!("{prefix}p00"));
    let p01 = b.and(p.a0, p.b1);
    b.name(p01, &format!("{prefix}p01"));
    let p10 = b.and(p.a1, p.b0);
    b.name(p10, &format!("{prefix}p10"));
    let p11 = b.and(p.a1, p.b1);
    b.name(p11, &format!("{prefix}p11"));
    let z1 = b.xor(p.r, p00);
    b.name(z1, &format!("{prefix}z1"));

    match style {
        CellStyle::Unregistered => {
            let z2 = b.xor(z1, p01);
            b.name(z2, &format!("{prefix}z2"));
            let z3 = b.xor(z2, p10);
            b.name(z3, &format!("{prefix}z3"));
            let z4 = b.xor(z3, p11);
            b.name(z4, &format!("{prefix}z4"));
            (p.r, z4)
        }
        CellStyle::Registered => {
            let (z1, p01, p10, p11, r) = (
                b.register(z1),
                b.register(p01),
                b.register(p10),
                b.register(p11),
                b.register(p.r),
            );
            let z2 = b.xor(z1, p01);
            b.name(z2, &format!("{prefix}z2"));
            let (z2, p10, p11, r) = (b.register(z2), b.register(p10), b.register(p11), b.register(r));
            let z3 = b.xor(z2, p10);
            b.name(z3, &format!("{prefix}z3"));
            let (z3, p11, r) = (b.register(z3), b.register(p11), b.register(r));
            let z4 = b.xor(z3, p11);
            b.name(z4, &format!("{prefix}z4"));
            let (z4, r) = (b.register(z4), b.register(r));
            (r, z4)
        }
    }
}

/// Standalone cell with ports `a0 a1 b0 b1 r` and outputs `s0 s1`.
pub fn build_trichina_cell(style: CellStyle) -> Result<Circuit> {
    let mut b = CircuitBuilder::new();
    let p = TrichinaPorts {
        a0: b.input("a0"),
        a1: b.input("a1"),
        b0: b.input("b0"),
        b1: b.input("b1"),
        r: b.input("r"),
    };
    let (s0, s1) = trichina_cell(&mut b, p, style, "");
    b.output("s0", s0);
    b.output("s1", s1);
    b.build()
}

#[derive(Clone, Copy, Debug)]
pub struct FullAdderPorts {
    pub a: (WireId, WireId),
    pub b: (WireId, WireId),
    pub c: (WireId, WireId),
    pub r: [WireId; 3],
}

/// Outputs of a masked full-adder slice, all taken from the fifth register
/// stage.
#[derive(Clone, Copy, Debug)]
pub struct FullAdderOutputs {
    pub sum: (WireId, WireId),
    pub cout: (WireId, WireId),
}

/// Adds a registered masked full-adder slice.
///
/// The carry is `TG(a,b,r0) ^ TG(b,c,r1) ^ TG(c,a,r2)` recombined share by
/// share in the fifth stage; the linear sum shares are computed at once and
/// carried along the same register stages so both outputs leave together.
/// Logic in stage `s` only reads stage-`s` registers (stage 0 reads the ports).
pub fn masked_full_adder_cell(b: &mut CircuitBuilder, p: FullAdderPorts, prefix: &str) -> FullAdderOutputs {
    let tg = |b: &mut CircuitBuilder, x: (WireId, WireId), y: (WireId, WireId), r, name: &str| {
        let ports = TrichinaPorts {
            a0: x.0,
            a1: x.1,
            b0: y.0,
            b1: y.1,
            r,
        };
        trichina_cell(b, ports, CellStyle::Registered, &format!("{prefix}{name}."))
    };
    let d = tg(b, p.a, p.b, p.r[0], "d");
    let e = tg(b, p.b, p.c, p.r[1], "e");
    let f = tg(b, p.c, p.a, p.r[2], "f");

    let share_sum = |b: &mut CircuitBuilder, x, y, z, name: &str| {
        let t = b.xor(x, y);
        let s = b.xor(t, z);
        b.name(s, &format!("{prefix}{name}"));
        s
    };
    let mut s0 = share_sum(b, p.a.0, p.b.0, p.c.0, "sum0");
    let mut s1 = share_sum(b, p.a.1, p.b.1, p.c.1, "sum1");
    for _ in 0..REGISTERED_TRICHINA_LATENCY {
        s0 = b.register(s0);
        s1 = b.register(s1);
    }

    let c0 = share_sum(b, d.0, e.0, f.0, "cout0");
    let c1 = share_sum(b, d.1, e.1, f.1, "cout1");
    FullAdderOutputs {
        sum: (b.register(s0), b.register(s1)),
        cout: (b.register(c0), b.register(c1)),
    }
}

/// Standalone slice with ports `a0 a1 b0 b1 c0 c1 r0 r1 r2` and outputs
/// `sum0 sum1 cout0 cout1`.
pub fn build_masked_full_adder() -> Result<Circuit> {
    let mut b = CircuitBuilder::new();
    let names = ["a0", "a1", "b0", "b1", "c0", "c1", "r0", "r1", "r2"];
    let w: Vec<WireId> = names.iter().map(|n| b.input(n)).collect();
    let p = FullAdderPorts {
        a: (w[0], w[1]),
        b: (w[2], w[3]),
        c: (w[4], w[5]),
        r: [w[6], w[7], w[8]],
    };
    let o = masked_full_adder_cell(&mut b, p, "");
    b.output("sum0", o.sum.0);
    b.output("sum1", o.sum.1);
    b.output("cout0", o.cout.0);
    b.output("cout1", o.cout.1);
    b.build()
}

/// Unmasked `n`-bit ripple-carry adder with a registered sum.
///
/// Ports: `a0..a{n-1}`, `b0..b{n-1}`, `cin`. Outputs `s0..s{n-1}` (register
/// outputs) and `cout` (combinational).
pub fn build_ripple_adder(n: u32) -> Result<Circuit> {
    let mut b = CircuitBuilder::new();
    let a: Vec<WireId> = (0..n).map(|k| b.input(&format!("a{k}"))).collect();
    let y: Vec<WireId> = (0..n).map(|k| b.input(&format!("b{k}"))).collect();
    let mut carry = b.input("cin");
    for k in 0..n as usize {
        let axb = b.xor(a[k], y[k]);
        let s = b.xor(axb, carry);
        b.name(s, &format!("sum{k}"));
        let g = b.and(a[k], y[k]);
        let t = b.and(carry, axb);
        carry = b.xor(g, t);
        b.name(carry, &format!("carry{k}"));
        let q = b.register(s);
        b.output(&format!("s{k}"), q);
    }
    b.output("cout", carry);
    b.build()
}

/// `n` Trichina cells sharing the operand ports `a0 a1 b0 b1`, each with its
/// own randomness port `r0..r{n-1}`. Outputs `s0_i`, `s1_i` per cell.
pub fn build_gate_array(n: usize, style: CellStyle) -> Result<Circuit> {
    let mut b = CircuitBuilder::new();
    let (a0, a1, b0, b1) = (b.input("a0"), b.input("a1"), b.input("b0"), b.input("b1"));
    let rs: Vec<WireId> = (0..n).map(|i| b.input(&format!("r{i}"))).collect();
    for (i, &r) in rs.iter().enumerate() {
        let (s0, s1) = trichina_cell(&mut b, TrichinaPorts { a0, a1, b0, b1, r }, style, &format!("g{i}."));
        b.output(&format!("s0_{i}"), s0);
        b.output(&format!("s1_{i}"), s1);
    }
    b.build()
}

/// One bit of the argmax word multiplexer: `out = old ^ TG(sel, d, r)` with
/// `d = old ^ new`, registered, so the result appears after
/// [`MUX_BIT_LATENCY`] cycles.
///
/// Ports: `sel0 sel1 d0 d1 r old0 old1`. Outputs `o0 o1`.
pub fn build_mux_bit_cell() -> Result<Circuit> {
    let mut b = CircuitBuilder::new();
    let p = TrichinaPorts {
        a0: b.input("sel0"),
        a1: b.input("sel1"),
        b0: b.input("d0"),
        b1: b.input("d1"),
        r: b.input("r"),
    };
    let (mut o0, mut o1) = (b.input("old0"), b.input("old1"));
    let (s0, s1) = trichina_cell(&mut b, p, CellStyle::Registered, "");
    for _ in 0..REGISTERED_TRICHINA_LATENCY {
        o0 = b.register(o0);
        o1 = b.register(o1);
    }
    let (x0, x1) = (b.xor(o0, s0), b.xor(o1, s1));
    let (q0, q1) = (b.register(x0), b.register(x1));
    b.output("o0", q0);
    b.output("o1", q1);
    b.build()
}

pub const MUX_BIT_LATENCY: u32 = REGISTERED_TRICHINA_LATENCY + 1;
