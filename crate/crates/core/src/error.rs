use std::io;

/// Errors raised anywhere in the simulator stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("PRNG output space exhausted: {emitted} bits emitted, {requested} more requested; reseed required")]
    OutputSpaceExhausted { emitted: u64, requested: u64 },

    #[error("width mismatch: {left} bits vs {right} bits")]
    WidthMismatch { left: u32, right: u32 },

    #[error("invalid word width {0}, must be in 1..=32")]
    InvalidWidth(u32),

    #[error("circuit still active after {budget} delta steps (combinational loop or pathological delays)")]
    UnsettledCircuit { budget: u32 },

    #[error("invalid circuit: {0}")]
    Circuit(String),

    #[error("enumeration space of 2^{bits} points exceeds the 2^20 limit")]
    SpaceTooLarge { bits: u32 },

    #[error("structural hazard at cycle {cycle}: operand produced by op #{producer} is not available until cycle {available}")]
    StructuralHazard { cycle: u64, producer: u64, available: u64 },

    #[error("layer {layer}: width {width} is not a positive multiple of the scheduler depth {depth}")]
    LayerShape { layer: usize, width: usize, depth: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("class {class} has {count} traces, at least 2 are required")]
    DegenerateClass { class: u8, count: u64 },

    #[error("shape mismatch: expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
