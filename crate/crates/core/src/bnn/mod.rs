//! Binarized network parameters, the `BMNP` parameter format and the two
//! inference engines (plain baseline and fully masked).
//!
//! Weights are single bits (1 encodes +1, 0 encodes -1), activations are the
//! sign of the accumulated sum (1 iff the sum is non-negative), and every
//! accumulator is a 20-bit two's-complement word.

mod masked;
mod schedule;
mod unmasked;

pub use masked::{
    hidden_contribution, input_contribution, lut_select_table, masked_activation, masked_argmax,
    masked_hidden_mac, masked_infer, masked_input_mac, masked_word_mux, masked_word_mux_with, EngineObserver,
    InferenceResult, LayerStats, MuxRecord, NoObserver, ARGMAX_MUX_CYCLES,
};
pub use schedule::{
    adder_latency, analytic_masked_cycles, plan_layer, unmasked_cycles, CycleBreakdown, LayerPlan, CONTROL_CYCLES,
};
pub use unmasked::{unmasked_infer, unmasked_infer_observed, unmasked_sums, UnmaskedObserver, UnmaskedResult};

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Accumulator width used by every layer.
pub const ACC_WIDTH: u32 = 20;
/// Width of the signed pixel operand.
pub const PIXEL_WIDTH: u32 = 9;
/// Default interleave depth: adder latency plus one.
pub const DEFAULT_DEPTH: usize = 101;
pub const DEFAULT_DIMS: [usize; 5] = [784, 1010, 1010, 1010, 10];
/// Desk-scale topology for leakage experiments.
pub const TINY_DIMS: [usize; 3] = [16, 101, 4];

const MAGIC: &[u8; 4] = b"BMNP";
const VERSION: u16 = 1;
const BIAS_LIMIT: i32 = 1 << (ACC_WIDTH - 1);

/// Fully connected layer: `weights[o * n_in + i]` connects input `i` to node `o`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<bool>,
    pub biases: Vec<i32>,
}

impl Layer {
    pub fn weight(&self, node: usize, input: usize) -> bool {
        self.weights[node * self.n_in + input]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkParams {
    layers: Vec<Layer>,
    depth: usize,
}

impl NetworkParams {
    pub fn new(layers: Vec<Layer>, depth: usize) -> Result<Self> {
        let p = NetworkParams { layers, depth };
        p.validate()?;
        Ok(p)
    }

    /// Deterministic pseudo-random parameters: uniform weight bits and biases
    /// in `[-isqrt(n_in), isqrt(n_in)]`.
    pub fn generate(dims: &[usize], depth: usize, seed: u64) -> Result<Self> {
        check_dims(dims, depth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let weights = (0..n_in * n_out).map(|_| rng.gen()).collect();
                let b = (n_in as f64).sqrt() as i32;
                let biases = (0..n_out).map(|_| rng.gen_range(-b..=b)).collect();
                Layer {
                    n_in,
                    n_out,
                    weights,
                    biases,
                }
            })
            .collect();
        NetworkParams::new(layers, depth)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].n_in];
        d.extend(self.layers.iter().map(|l| l.n_out));
        d
    }

    pub fn input_count(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_count(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    /// Bits of the masked class index.
    pub fn index_width(&self) -> u32 {
        index_width(self.output_count())
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        check_dims(&self.dims(), self.depth)?;
        for (i, l) in self.layers.iter().enumerate() {
            if i > 0 && l.n_in != self.layers[i - 1].n_out {
                return Err(Error::Config(format!("layer {i} input width {} does not match", l.n_in)));
            }
            if l.weights.len() != l.n_in * l.n_out || l.biases.len() != l.n_out {
                return Err(Error::Config(format!("layer {i} has inconsistent weight/bias counts")));
            }
            if let Some(b) = l.biases.iter().find(|b| !(-BIAS_LIMIT..BIAS_LIMIT).contains(*b)) {
                return Err(Error::Config(format!("layer {i} bias {b} does not fit {ACC_WIDTH} bits")));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let dims = self.dims();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u16).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        w.write_all(&(self.depth as u32).to_le_bytes())?;
        for l in &self.layers {
            let mut packed = vec![0u8; l.weights.len().div_ceil(8)];
            for (i, &b) in l.weights.iter().enumerate() {
                packed[i / 8] |= (b as u8) << (i % 8);
            }
            w.write_all(&packed)?;
            for b in &l.biases {
                w.write_all(&b.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, expected BMNP".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported BMNP version {version}")));
        }
        let n_layers = r.u16()? as usize;
        if n_layers == 0 {
            return Err(Error::Format("zero layers".into()));
        }
        let dims = (0..=n_layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let depth = r.u32()? as usize;
        check_dims(&dims, depth)?;
        let mut layers = Vec::with_capacity(n_layers);
        for w in dims.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let n = n_in
                .checked_mul(n_out)
                .ok_or_else(|| Error::Format("layer size overflows".into()))?;
            let packed = r.take(n.div_ceil(8))?;
            let weights = (0..n).map(|i| (packed[i / 8] >> (i % 8)) & 1 == 1).collect();
            let biases = (0..n_out).map(|_| r.u32().map(|b| b as i32)).collect::<Result<Vec<_>>>()?;
            layers.push(Layer {
                n_in,
                n_out,
                weights,
                biases,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        NetworkParams::new(layers, depth).map_err(|e| match e {
            Error::Config(m) => Error::Format(m),
            other => other,
        })
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Every layer output except the last must be a positive multiple of `depth`.
pub fn check_dims(dims: &[usize], depth: usize) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config("need at least an input and an output dimension".into()));
    }
    if depth == 0 {
        return Err(Error::Config("scheduler depth must be positive".into()));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(Error::Config(format!("dimension {i} is zero")));
    }
    for (layer, &width) in dims[1..dims.len() - 1].iter().enumerate() {
        if width % depth != 0 {
            return Err(Error::LayerShape { layer, width, depth });
        }
    }
    Ok(())
}

/// `ceil(log2(n))`, at least 1.
pub fn index_width(n: usize) -> u32 {
    (usize::BITS - n.saturating_sub(1).leading_zeros()).max(1)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Format(format!("truncated at byte {}", self.bytes.len()))),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// One input image: `input_count` unsigned pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image(pub Vec<u8>);

impl Image {
    /// The fixed-class image: every pixel `0x5A`.
    pub fn fixed(n: usize) -> Self {
        Image(vec![0x5A; n])
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut v = vec![0u8; n];
        rng.fill(&mut v[..]);
        Image(v)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.0
    }

    /// Raw image file: exactly `n` bytes.
    pub fn load(path: &std::path::Path, n: usize) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.len() != n {
            return Err(Error::Format(format!("image has {} bytes, expected {n}", bytes.len())));
        }
        Ok(Image(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_widths() {
        assert_eq!(index_width(10), 4);
        assert_eq!(index_width(4), 2);
        assert_eq!(index_width(2), 1);
        assert_eq!(index_width(1), 1);
        assert_eq!(index_width(16), 4);
        assert_eq!(index_width(17), 5);
    }

    #[test]
    fn shape_rule() {
        assert!(check_dims(&TINY_DIMS, 101).is_ok());
        assert!(check_dims(&DEFAULT_DIMS, 101).is_ok());
        assert!(matches!(
            check_dims(&[16, 100, 4], 101),
            Err(Error::LayerShape {
                layer: 0,
                width: 100,
                depth: 101
            })
        ));
    }

    #[test]
    fn bmnp_round_trip() {
        let p = NetworkParams::generate(&[5, 6, 3], 3, 1).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"BMNP");
        assert_eq!(NetworkParams::from_bytes(&bytes).unwrap(), p);
        assert_eq!(NetworkParams::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn bmnp_errors() {
        let bytes = NetworkParams::generate(&[5, 6, 3], 3, 1).unwrap().to_bytes();
        for cut in [0, 3, 7, 20, bytes.len() - 1] {
            assert!(matches!(NetworkParams::from_bytes(&bytes[..cut]), Err(Error::Format(_))));
        }
        let mut v = bytes.clone();
        v[4] = 9;
        let msg = NetworkParams::from_bytes(&v).unwrap_err().to_string();
        assert!(msg.contains("version 9"), "{msg}");
        let mut v = bytes.clone();
        v.push(0);
        assert!(matches!(NetworkParams::from_bytes(&v), Err(Error::Format(_))));
        let mut v = bytes;
        v[0] = b'X';
        assert!(matches!(NetworkParams::from_bytes(&v), Err(Error::Format(_))));
    }
}
