//! Unbiased compression operators and bit-exact message encoding.
//!
//! The workhorse is the s-level stochastic quantizer: a vector v is sent as
//! its norm plus, per coordinate, a sign and an integer level in [0, s].
//! Level l_j = floor(s |v_j| / ‖v‖) is rounded up with probability equal to
//! the fractional remainder, which makes the decoded message an unbiased
//! estimate of v with relative variance at most omega = min(d/s^2, sqrt(d)/s).
//! The identity operator (no compression) is a first-class citizen so that
//! the uncompressed samplers share the same code path.
//!
//! Wire format (most-significant-bit first):
//! `[32-bit IEEE-754 norm][per coordinate: Elias-gamma(level+1), then one
//! sign bit (1 = negative) iff level > 0]`. Identity messages are encoded as
//! d raw 32-bit floats and accounted at 32·d bits. In memory the norm and the
//! dense payload stay in f64 so that decoding reproduces the realized
//! quantizer output exactly; the wire narrows them to f32, which is the
//! precision the bit ledger pays for.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::vector::ParamVector;

/// Which compression operator a client applies to its oracle output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuantizerSpec {
    /// Lossless pass-through; omega = 0.
    Identity,
    /// Stochastic quantizer with `s` levels (s = 2^p for "p-bit" instances).
    Stochastic { s: u32 },
}

impl QuantizerSpec {
    pub fn is_identity(&self) -> bool {
        matches!(self, QuantizerSpec::Identity)
    }
}

/// Relative-variance constant of the operator in dimension `d`:
/// min(d/s^2, sqrt(d)/s) for the stochastic quantizer, 0 for identity.
pub fn omega(spec: QuantizerSpec, d: usize) -> f64 {
    match spec {
        QuantizerSpec::Identity => 0.0,
        QuantizerSpec::Stochastic { s } => {
            let s = s as f64;
            let d = d as f64;
            (d / (s * s)).min(d.sqrt() / s)
        }
    }
}

/// The exact realized output of a compression operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CompressedMessage {
    Quantized {
        /// ‖v‖ of the quantized vector.
        norm: f64,
        /// One entry in {+1, -1} per coordinate.
        signs: Vec<i8>,
        /// One integer level in [0, s] per coordinate.
        levels: Vec<u32>,
        s: u32,
    },
    /// Lossless message from the identity operator.
    Dense(ParamVector),
}

impl CompressedMessage {
    pub fn dim(&self) -> usize {
        match self {
            CompressedMessage::Quantized { levels, .. } => levels.len(),
            CompressedMessage::Dense(v) => v.dim(),
        }
    }
}

/// Apply the compression operator to `v`, consuming one uniform per
/// coordinate from `stream` in the stochastic case. A zero vector yields the
/// all-zero message.
pub fn quantize(v: &ParamVector, spec: QuantizerSpec, stream: &mut RandomStream) -> CompressedMessage {
    match spec {
        QuantizerSpec::Identity => CompressedMessage::Dense(v.clone()),
        QuantizerSpec::Stochastic { s } => {
            let d = v.dim();
            let norm = v.norm();
            let mut signs = Vec::with_capacity(d);
            let mut levels = Vec::with_capacity(d);
            let sf = s as f64;
            for j in 0..d {
                let x = v[j];
                // sign(0) = +1, matching 1{x >= 0} - 1{x < 0}
                signs.push(if x < 0.0 { -1 } else { 1 });
                let xi = stream.uniform();
                if norm == 0.0 || x == 0.0 {
                    // zero coordinates never quantize to a nonzero level
                    levels.push(0);
                    continue;
                }
                let scaled = sf * (x.abs() / norm).min(1.0);
                let low = scaled.floor();
                // tie at the fractional part uses <=, fixed for determinism
                let bumped = xi <= scaled - low;
                let level = (low as u32 + u32::from(bumped)).min(s);
                levels.push(level);
            }
            CompressedMessage::Quantized { norm, signs, levels, s }
        }
    }
}

/// Reconstruct the realized compressed value: coordinate j is
/// norm · sign_j · level_j / s. Identity messages reproduce v bit-exactly.
pub fn decode(msg: &CompressedMessage) -> Result<ParamVector> {
    match msg {
        CompressedMessage::Dense(v) => Ok(v.clone()),
        CompressedMessage::Quantized { norm, signs, levels, s } => {
            if signs.len() != levels.len() {
                return Err(Error::Corrupt("sign/level length mismatch".into()));
            }
            let sf = *s as f64;
            let mut out = Vec::with_capacity(levels.len());
            for (&sign, &level) in signs.iter().zip(levels.iter()) {
                if level > *s {
                    return Err(Error::Corrupt(format!("level {level} exceeds s = {s}")));
                }
                out.push(norm * f64::from(sign) * (f64::from(level) / sf));
            }
            Ok(ParamVector::new(out))
        }
    }
}

/// Length in bits of the Elias-gamma code of n >= 1.
pub fn elias_gamma_len(n: u64) -> u64 {
    debug_assert!(n >= 1);
    2 * (63 - n.leading_zeros() as u64) + 1
}

/// Encoded length of a message: 32-bit norm plus, per coordinate, the
/// Elias-gamma code of level+1 and a sign bit for nonzero levels. Identity
/// messages cost 32 bits per coordinate.
pub fn bit_cost(msg: &CompressedMessage) -> u64 {
    match msg {
        CompressedMessage::Dense(v) => 32 * v.dim() as u64,
        CompressedMessage::Quantized { levels, .. } => {
            let mut bits = 32u64;
            for &level in levels {
                bits += elias_gamma_len(u64::from(level) + 1);
                if level > 0 {
                    bits += 1;
                }
            }
            bits
        }
    }
}

/// Most-significant-bit-first bit sink.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.used % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            let idx = (self.used / 8) as usize;
            self.bytes[idx] |= 1 << (7 - self.used % 8);
        }
        self.used += 1;
    }

    /// Write the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        for i in (0..width).rev() {
            self.push_bit(value >> i & 1 == 1);
        }
    }

    pub fn push_gamma(&mut self, n: u64) {
        debug_assert!(n >= 1);
        let width = 63 - n.leading_zeros() as u32;
        self.push_bits(0, width);
        self.push_bits(n, width + 1);
    }

    pub fn bit_len(&self) -> u64 {
        u64::from(self.used)
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// Most-significant-bit-first bit source.
#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        let idx = (self.pos / 8) as usize;
        if idx >= self.bytes.len() {
            return Err(Error::Corrupt("bitstream exhausted".into()));
        }
        let bit = self.bytes[idx] >> (7 - self.pos % 8) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u64> {
        let mut value = 0u64;
        for _ in 0..width {
            value = value << 1 | u64::from(self.read_bit()?);
        }
        Ok(value)
    }

    pub fn read_gamma(&mut self) -> Result<u64> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > 63 {
                return Err(Error::Corrupt("gamma code too long".into()));
            }
        }
        let rest = self.read_bits(zeros)?;
        Ok(1u64 << zeros | rest)
    }
}

/// Serialize a message into its wire bitstring (zero-padded to a byte
/// boundary). The bit length before padding is exactly [`bit_cost`].
pub fn encode_message(msg: &CompressedMessage) -> Vec<u8> {
    let mut w = BitWriter::new();
    match msg {
        CompressedMessage::Dense(v) => {
            for j in 0..v.dim() {
                w.push_bits(u64::from((v[j] as f32).to_bits()), 32);
            }
        }
        CompressedMessage::Quantized { norm, signs, levels, .. } => {
            w.push_bits(u64::from((*norm as f32).to_bits()), 32);
            for (&sign, &level) in signs.iter().zip(levels.iter()) {
                w.push_gamma(u64::from(level) + 1);
                if level > 0 {
                    w.push_bit(sign < 0);
                }
            }
        }
    }
    debug_assert_eq!(w.bit_len(), bit_cost(msg));
    w.into_bytes()
}

/// Parse a wire bitstring back into a message. The dimension and the
/// operator that produced the message must be known from context.
pub fn decode_message(bytes: &[u8], d: usize, spec: QuantizerSpec) -> Result<CompressedMessage> {
    let mut r = BitReader::new(bytes);
    match spec {
        QuantizerSpec::Identity => {
            let mut values = Vec::with_capacity(d);
            for _ in 0..d {
                values.push(f64::from(f32::from_bits(r.read_bits(32)? as u32)));
            }
            Ok(CompressedMessage::Dense(ParamVector::new(values)))
        }
        QuantizerSpec::Stochastic { s } => {
            let norm = f64::from(f32::from_bits(r.read_bits(32)? as u32));
            let mut signs = Vec::with_capacity(d);
            let mut levels = Vec::with_capacity(d);
            for _ in 0..d {
                let level64 = r.read_gamma()? - 1;
                let level = u32::try_from(level64)
                    .map_err(|_| Error::Corrupt("level overflows u32".into()))?;
                if level > s {
                    return Err(Error::Corrupt(format!("level {level} exceeds s = {s}")));
                }
                let sign = if level > 0 && r.read_bit()? { -1 } else { 1 };
                signs.push(sign);
                levels.push(level);
            }
            Ok(CompressedMessage::Quantized { norm, signs, levels, s })
        }
    }
}
