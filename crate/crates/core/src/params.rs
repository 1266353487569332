//! Homomorphic-encryption parameters shared by packing, cost model and protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial degrees accepted by the crate.
pub const SUPPORTED_DEGREES: [usize; 5] = [2048, 4096, 8192, 16384, 32768];

/// Default ciphertext modulus width, `q = 2^59`.
pub const DEFAULT_Q_BITS: u32 = 59;

/// Default share width, `p = 2^32`.
pub const DEFAULT_PLAIN_BITS: u32 = 32;

/// Ring and share parameters.
///
/// `q` and the plaintext modulus `p = 2^l` are both powers of two, so `p | q`
/// and every reduction is a mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeParams {
    /// Polynomial degree `N`.
    pub n: usize,
    /// `log2(q)`.
    pub q_bits: u32,
    /// `l`, the share bit width.
    pub plain_bits: u32,
    /// Nominal security level. Recorded only; the toy scheme claims none.
    pub lambda: u32,
}

impl HeParams {
    pub fn new(n: usize, q_bits: u32, plain_bits: u32) -> Result<Self> {
        let params = HeParams {
            n,
            q_bits,
            plain_bits,
            lambda: 128,
        };
        params.validate()?;
        Ok(params)
    }

    /// `N` with the default `q = 2^59`, `l = 32`.
    pub fn with_degree(n: usize) -> Result<Self> {
        Self::new(n, DEFAULT_Q_BITS, DEFAULT_PLAIN_BITS)
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_DEGREES.contains(&self.n) {
            return Err(Error::Params(format!("N = {} not in {:?}", self.n, SUPPORTED_DEGREES)));
        }
        if self.q_bits == 0 || self.q_bits > 64 {
            return Err(Error::Params(format!("q_bits = {} not in 1..=64", self.q_bits)));
        }
        if self.plain_bits == 0 || self.plain_bits >= self.q_bits {
            return Err(Error::Params(format!(
                "plain_bits = {} must be in 1..q_bits ({})",
                self.plain_bits, self.q_bits
            )));
        }
        Ok(())
    }

    pub fn q_mask(&self) -> u64 {
        mask(self.q_bits)
    }

    pub fn plain_mask(&self) -> u64 {
        mask(self.plain_bits)
    }

    /// Bytes on the wire for `count` coefficients packed at `q_bits` each.
    pub fn packed_bytes(&self, count: usize) -> usize {
        (count * self.q_bits as usize).div_ceil(8)
    }
}

impl Default for HeParams {
    fn default() -> Self {
        HeParams {
            n: 4096,
            q_bits: DEFAULT_Q_BITS,
            plain_bits: DEFAULT_PLAIN_BITS,
            lambda: 128,
        }
    }
}

/// Low-`bits` mask; `mask(64) == u64::MAX`.
pub fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_degree_and_widths() {
        assert!(HeParams::new(1024, 59, 32).is_err());
        assert!(HeParams::new(4096, 65, 32).is_err());
        assert!(HeParams::new(4096, 32, 32).is_err());
        assert!(HeParams::new(32768, 64, 63).is_ok());
    }

    #[test]
    fn masks() {
        assert_eq!(mask(64), u64::MAX);
        assert_eq!(mask(59), (1 << 59) - 1);
        assert_eq!(HeParams::default().plain_mask(), u32::MAX as u64);
    }

    #[test]
    fn packed_byte_count_rounds_up() {
        let p = HeParams::default();
        assert_eq!(p.packed_bytes(4096), 4096 * 59 / 8);
        assert_eq!(p.packed_bytes(1), 8);
        assert_eq!(p.packed_bytes(3), 23);
    }
}
