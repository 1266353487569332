//! Arithmetic in the negacyclic ring `Z_q[X]/(X^N + 1)` with `q = 2^bits`.
//!
//! Because `q` is a power of two, every reduction is a mask, and all
//! intermediate arithmetic can run in wrapping `u64` (which is `Z_{2^64}`, a
//! ring that `Z_q` is a quotient of). That is what makes Karatsuba with its
//! subtractions exact here without any signed bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::mask;
use crate::tensor::WordReader;

/// Below this length Karatsuba falls back to the quadratic product.
const KARATSUBA_CUTOFF: usize = 32;

/// Element of `Z_{2^bits}[X]/(X^n + 1)`; coefficient `i` multiplies `X^i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingPoly {
    n: usize,
    bits: u32,
    coeffs: Vec<u64>,
}

impl RingPoly {
    pub fn zero(n: usize, bits: u32) -> Self {
        RingPoly {
            n,
            bits,
            coeffs: vec![0; n],
        }
    }

    /// Builds a polynomial, reducing every coefficient mod `q`.
    pub fn from_coeffs(n: usize, bits: u32, mut coeffs: Vec<u64>) -> Result<Self> {
        if coeffs.len() != n {
            return Err(Error::Dimension(format!(
                "{} coefficients for degree {n}",
                coeffs.len()
            )));
        }
        if bits == 0 || bits > 64 {
            return Err(Error::Params(format!("modulus width {bits} not in 1..=64")));
        }
        let m = mask(bits);
        for c in &mut coeffs {
            *c &= m;
        }
        Ok(RingPoly { n, bits, coeffs })
    }

    /// `value * X^degree`, with `degree < n`.
    pub fn monomial(n: usize, bits: u32, degree: usize, value: u64) -> Result<Self> {
        if degree >= n {
            return Err(Error::IndexOutOfRange {
                index: degree,
                limit: n,
            });
        }
        let mut p = RingPoly::zero(n, bits);
        p.coeffs[degree] = value & mask(bits);
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modulus_bits(&self) -> u32 {
        self.bits
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<u64> {
        self.coeffs
    }

    pub fn mask(&self) -> u64 {
        mask(self.bits)
    }

    pub fn get(&self, i: usize) -> Result<u64> {
        self.coeffs.get(i).copied().ok_or(Error::IndexOutOfRange {
            index: i,
            limit: self.n,
        })
    }

    pub fn set(&mut self, i: usize, value: u64) -> Result<()> {
        let m = self.mask();
        let slot = self.coeffs.get_mut(i).ok_or(Error::IndexOutOfRange {
            index: i,
            limit: self.n,
        })?;
        *slot = value & m;
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    /// Number of nonzero coefficients.
    pub fn weight(&self) -> usize {
        self.coeffs.iter().filter(|&&c| c != 0).count()
    }

    /// Coefficient `i` as a signed value in `[-q/2, q/2)`.
    pub fn centered(&self, i: usize) -> i64 {
        centered(self.coeffs[i], self.bits)
    }

    fn check(&self, other: &RingPoly) -> Result<()> {
        if self.n != other.n || self.bits != other.bits {
            return Err(Error::RingMismatch {
                n_a: self.n,
                bits_a: self.bits,
                n_b: other.n,
                bits_b: other.bits,
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &RingPoly, f: impl Fn(u64, u64) -> u64) -> Result<RingPoly> {
        self.check(other)?;
        let m = self.mask();
        Ok(RingPoly {
            n: self.n,
            bits: self.bits,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b) & m)
                .collect(),
        })
    }

    pub fn add(&self, other: &RingPoly) -> Result<RingPoly> {
        self.zip_with(other, u64::wrapping_add)
    }

    pub fn sub(&self, other: &RingPoly) -> Result<RingPoly> {
        self.zip_with(other, u64::wrapping_sub)
    }

    pub fn neg(&self) -> RingPoly {
        let m = self.mask();
        RingPoly {
            n: self.n,
            bits: self.bits,
            coeffs: self.coeffs.iter().map(|&c| c.wrapping_neg() & m).collect(),
        }
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &RingPoly) -> Result<()> {
        self.check(other)?;
        let m = self.mask();
        for (a, &b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a = a.wrapping_add(b) & m;
        }
        Ok(())
    }

    /// Quadratic reference product, kept as the oracle for the faster paths.
    pub fn mul_schoolbook(&self, other: &RingPoly) -> Result<RingPoly> {
        self.check(other)?;
        let n = self.n;
        let mut out = vec![0u64; n];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                let p = a.wrapping_mul(b);
                let k = i + j;
                if k < n {
                    out[k] = out[k].wrapping_add(p);
                } else {
                    out[k - n] = out[k - n].wrapping_sub(p);
                }
            }
        }
        RingPoly::from_coeffs(n, self.bits, out)
    }

    pub fn mul_karatsuba(&self, other: &RingPoly) -> Result<RingPoly> {
        self.check(other)?;
        let n = self.n;
        let mut full = vec![0u64; 2 * n];
        let mut scratch = vec![0u64; 4 * n];
        karatsuba(&self.coeffs, &other.coeffs, &mut full, &mut scratch);
        let out = (0..n).map(|k| full[k].wrapping_sub(full[k + n])).collect();
        RingPoly::from_coeffs(n, self.bits, out)
    }

    /// `O(N * nnz(other))` product; the natural fit for packed weight polynomials.
    pub fn mul_sparse(&self, other: &RingPoly) -> Result<RingPoly> {
        self.check(other)?;
        let n = self.n;
        let mut out = vec![0u64; n];
        for (j, &b) in other.coeffs.iter().enumerate() {
            if b == 0 {
                continue;
            }
            let (head, tail) = self.coeffs.split_at(n - j);
            for (o, &a) in out[j..].iter_mut().zip(head) {
                *o = o.wrapping_add(a.wrapping_mul(b));
            }
            for (o, &a) in out[..j].iter_mut().zip(tail) {
                *o = o.wrapping_sub(a.wrapping_mul(b));
            }
        }
        RingPoly::from_coeffs(n, self.bits, out)
    }

    /// Negacyclic product, choosing the sparse or Karatsuba path by density.
    pub fn mul(&self, other: &RingPoly) -> Result<RingPoly> {
        self.check(other)?;
        let sparse_limit = 4 * (self.n.trailing_zeros() as usize + 1);
        if other.weight() <= sparse_limit {
            self.mul_sparse(other)
        } else if self.weight() <= sparse_limit {
            other.mul_sparse(self)
        } else {
            self.mul_karatsuba(other)
        }
    }

    /// Little-endian u64 words: `n, modulus_bits, coeffs..`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.n + 2));
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.bits as u64).to_le_bytes());
        for c in &self.coeffs {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RingPoly> {
        let mut words = WordReader::new(bytes)?;
        let n = words.next()? as usize;
        let bits = words.next()? as u32;
        if words.remaining() != n {
            return Err(Error::Format(format!(
                "header says N = {n}, found {} coefficients",
                words.remaining()
            )));
        }
        let coeffs = (0..n).map(|_| words.next()).collect::<Result<Vec<_>>>()?;
        if bits == 0 || bits > 64 || coeffs.iter().any(|&c| c & !mask(bits) != 0) {
            return Err(Error::Format(format!("coefficient exceeds 2^{bits}")));
        }
        Ok(RingPoly { n, bits, coeffs })
    }
}

/// Free-function form of [`RingPoly::mul`].
pub fn poly_mul_negacyclic(a: &RingPoly, b: &RingPoly) -> Result<RingPoly> {
    a.mul(b)
}

pub fn poly_add(a: &RingPoly, b: &RingPoly) -> Result<RingPoly> {
    a.add(b)
}

pub fn poly_sub(a: &RingPoly, b: &RingPoly) -> Result<RingPoly> {
    a.sub(b)
}

/// Signed representative of `v mod 2^bits` in `[-2^(bits-1), 2^(bits-1))`.
pub fn centered(v: u64, bits: u32) -> i64 {
    if bits >= 64 {
        return v as i64;
    }
    let half = 1u64 << (bits - 1);
    let v = v & mask(bits);
    if v >= half {
        v as i64 - (1i64 << bits)
    } else {
        v as i64
    }
}

/// Linear product `out[0..2n-1] = a * b` over `Z_{2^64}`; `out.len() >= 2n`,
/// `scratch.len() >= 4n`.
fn karatsuba(a: &[u64], b: &[u64], out: &mut [u64], scratch: &mut [u64]) {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    out[..2 * n].fill(0);
    if n <= KARATSUBA_CUTOFF || n % 2 == 1 {
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] = out[i + j].wrapping_add(x.wrapping_mul(y));
            }
        }
        return;
    }
    let h = n / 2;
    let (a0, a1) = a.split_at(h);
    let (b0, b1) = b.split_at(h);
    let (sums, rest) = scratch.split_at_mut(2 * h);
    let (mid, rest) = rest.split_at_mut(2 * h);
    {
        let (sa, sb) = sums.split_at_mut(h);
        for i in 0..h {
            sa[i] = a0[i].wrapping_add(a1[i]);
            sb[i] = b0[i].wrapping_add(b1[i]);
        }
    }
    {
        let (sa, sb) = sums.split_at(h);
        karatsuba(sa, sb, mid, rest);
    }
    {
        let (lo, hi) = out.split_at_mut(2 * h);
        karatsuba(a0, b0, lo, rest);
        karatsuba(a1, b1, hi, rest);
        for i in 0..2 * h {
            mid[i] = mid[i].wrapping_sub(lo[i]).wrapping_sub(hi[i]);
        }
    }
    for i in 0..2 * h {
        out[h + i] = out[h + i].wrapping_add(mid[i]);
    }
}

/// Packs the low `bits` of each value into a little-endian bit stream.
pub fn pack_bits(values: &[u64], bits: u32) -> Vec<u8> {
    let total = (values.len() * bits as usize).div_ceil(8);
    let mut out = vec![0u8; total];
    let m = mask(bits);
    let mut pos = 0usize;
    for &v in values {
        let mut v = v & m;
        let mut left = bits as usize;
        while left > 0 {
            let byte = pos / 8;
            let shift = pos % 8;
            let take = (8 - shift).min(left);
            out[byte] |= ((v & ((1u64 << take) - 1)) as u8) << shift;
            v >>= take;
            pos += take;
            left -= take;
        }
    }
    out
}

/// Inverse of [`pack_bits`].
pub fn unpack_bits(bytes: &[u8], bits: u32, count: usize) -> Result<Vec<u64>> {
    let need = (count * bits as usize).div_ceil(8);
    if bytes.len() < need {
        return Err(Error::Format(format!(
            "{} bytes cannot hold {count} values of {bits} bits",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut v = 0u64;
        let mut got = 0usize;
        while got < bits as usize {
            let byte = pos / 8;
            let shift = pos % 8;
            let take = (8 - shift).min(bits as usize - got);
            let chunk = (bytes[byte] >> shift) as u64 & ((1u64 << take) - 1);
            v |= chunk << got;
            got += take;
            pos += take;
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_poly(n: usize, bits: u32, rng: &mut ChaCha8Rng) -> RingPoly {
        RingPoly::from_coeffs(n, bits, (0..n).map(|_| rng.gen()).collect()).unwrap()
    }

    /// 128-bit accumulation with an explicit `% q`, independent of masking.
    #[allow(clippy::needless_range_loop)]
    fn wide_negacyclic(a: &[u64], b: &[u64], bits: u32) -> Vec<u64> {
        let n = a.len();
        let q = 1u128 << bits;
        let mut acc = vec![0u128; n];
        for i in 0..n {
            for j in 0..n {
                let p = (a[i] as u128 * b[j] as u128) % q;
                let k = (i + j) % n;
                acc[k] = if i + j < n {
                    (acc[k] + p) % q
                } else {
                    (acc[k] + q - p) % q
                };
            }
        }
        acc.into_iter().map(|v| v as u64).collect()
    }

    #[test]
    fn small_hand_case() {
        let a = RingPoly::from_coeffs(4, 59, vec![1, 1, 0, 0]).unwrap();
        let sq = a.mul_schoolbook(&a).unwrap();
        assert_eq!(sq.coeffs(), &[1, 2, 1, 0]);
        assert_eq!(poly_mul_negacyclic(&a, &a).unwrap(), sq);
    }

    #[test]
    fn negacyclic_wrap() {
        let n = 2048;
        let a = RingPoly::monomial(n, 59, n - 1, 1).unwrap();
        let x = RingPoly::monomial(n, 59, 1, 1).unwrap();
        let p = a.mul_schoolbook(&x).unwrap();
        assert_eq!(p.coeffs()[0], (1u64 << 59) - 1);
        assert!(p.coeffs()[1..].iter().all(|&c| c == 0));
        assert_eq!(a.mul(&x).unwrap(), p);
        assert_eq!(a.mul_karatsuba(&x).unwrap(), p);
    }

    #[test]
    fn karatsuba_and_sparse_match_schoolbook_at_2048() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_poly(2048, 59, &mut rng);
        let b = random_poly(2048, 59, &mut rng);
        let oracle = a.mul_schoolbook(&b).unwrap();
        assert_eq!(a.mul_karatsuba(&b).unwrap(), oracle);
        assert_eq!(a.mul_sparse(&b).unwrap(), oracle);
        assert_eq!(a.mul(&b).unwrap(), oracle);
    }

    #[test]
    fn add_sub_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_poly(64, 59, &mut rng);
        let b = random_poly(64, 59, &mut rng);
        let z = RingPoly::zero(64, 59);
        assert_eq!(a.add(&z).unwrap(), a);
        assert!(a.sub(&a).unwrap().is_zero());
        assert_eq!(a.add(&b).unwrap().sub(&b).unwrap(), a);
        assert_eq!(a.add(&a.neg()).unwrap(), z);
    }

    #[test]
    fn mismatch_is_an_error() {
        let a = RingPoly::zero(8, 59);
        let b = RingPoly::zero(16, 59);
        let c = RingPoly::zero(8, 32);
        assert!(matches!(a.add(&b), Err(Error::RingMismatch { .. })));
        assert!(matches!(a.mul(&c), Err(Error::RingMismatch { .. })));
    }

    #[test]
    fn byte_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_poly(32, 59, &mut rng);
        assert_eq!(RingPoly::from_bytes(&a.to_bytes()).unwrap(), a);
        let mut bad = a.to_bytes();
        bad[0] = 31;
        assert!(RingPoly::from_bytes(&bad).is_err());
    }

    #[test]
    fn bit_packing_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for bits in [1u32, 7, 32, 59, 64] {
            let vals: Vec<u64> = (0..37).map(|_| rng.gen::<u64>() & mask(bits)).collect();
            let packed = pack_bits(&vals, bits);
            assert_eq!(packed.len(), (37 * bits as usize).div_ceil(8));
            assert_eq!(unpack_bits(&packed, bits, 37).unwrap(), vals);
        }
    }

    #[test]
    fn centered_representative() {
        assert_eq!(centered((1 << 59) - 1, 59), -1);
        assert_eq!(centered(5, 59), 5);
        assert_eq!(centered(1 << 58, 59), -(1 << 58));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn ring_laws(seed in any::<u64>(), log_n in 1u32..7, bits in 1u32..=64) {
            let n = 1usize << log_n;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_poly(n, bits, &mut rng);
            let b = random_poly(n, bits, &mut rng);
            let c = random_poly(n, bits, &mut rng);
            prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
            let lhs = a.mul_karatsuba(&b.add(&c).unwrap()).unwrap();
            let rhs = a.mul_karatsuba(&b).unwrap().add(&a.mul_karatsuba(&c).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn mask_reduction_matches_wide_arithmetic(seed in any::<u64>(), log_n in 1u32..6, bits in 1u32..=64) {
            let n = 1usize << log_n;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_poly(n, bits, &mut rng);
            let b = random_poly(n, bits, &mut rng);
            let wide = wide_negacyclic(a.coeffs(), b.coeffs(), bits);
            prop_assert_eq!(a.mul_schoolbook(&b).unwrap().into_coeffs(), wide.clone());
            prop_assert_eq!(a.mul_karatsuba(&b).unwrap().into_coeffs(), wide);
        }
    }
}
