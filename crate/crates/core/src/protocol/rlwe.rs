//! A toy symmetric RLWE scheme with the plaintext in the low bits.
//!
//! A ciphertext `(b, a)` under secret `s` satisfies `b + a s = m + 2^l e (mod q)`
//! with `m` in `[0, 2^l)`. Because `2^l` divides `q`, decryption is
//! `(b + a s) mod 2^l` and is exact whatever `e` is. The noise budget is still
//! tracked: every ciphertext carries an upper bound on `|e|`, the bound must
//! stay below `2^(log q - l - 1)` so `e` remains uniquely recoverable, and the
//! tests check the measured noise never exceeds the tracked bound.
//!
//! The `a` half of a fresh ciphertext is expanded from a 32-byte seed, so only
//! `b` and the seed go on the wire.
//!
//! The [`Backend::Ideal`] variant runs the same code with `s = 0`, `a = 0` and
//! `e = 0`: ciphertexts are plaintexts in disguise, which makes it an oracle
//! for the protocol plumbing.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{mask, HeParams};
use crate::ring::{centered, RingPoly};

/// Centred binomial parameter of the fresh noise.
pub const NOISE_ETA: u32 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Ideal,
    #[default]
    Rlwe,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Ideal => "ideal",
            Backend::Rlwe => "rlwe",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Backend::Ideal),
            "rlwe" => Ok(Backend::Rlwe),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

/// Upper bound on `|e|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    Bounded(u64),
    /// Masked with a uniform value mod `q`; `e` is uniform and only the low
    /// `l` bits carry meaning.
    Flooded,
}

impl Noise {
    pub fn bound(&self) -> Option<u64> {
        match self {
            Noise::Bounded(b) => Some(*b),
            Noise::Flooded => None,
        }
    }

    pub fn bits(&self) -> f64 {
        match self {
            Noise::Bounded(b) => (*b as f64).max(1.0).log2(),
            Noise::Flooded => f64::INFINITY,
        }
    }

    fn map(self, f: impl FnOnce(u64) -> u64) -> Noise {
        match self {
            Noise::Bounded(b) => Noise::Bounded(f(b)),
            Noise::Flooded => Noise::Flooded,
        }
    }

    fn plus(self, other: Noise) -> Noise {
        match (self, other) {
            (Noise::Bounded(a), Noise::Bounded(b)) => Noise::Bounded(a.saturating_add(b).saturating_add(1)),
            _ => Noise::Flooded,
        }
    }
}

/// Largest admissible `|e|` exponent: `log q - l - 1`.
pub fn noise_budget_bits(params: &HeParams) -> u32 {
    params.q_bits - params.plain_bits - 1
}

/// Errors when a bounded ciphertext could have outgrown the budget.
pub fn check_budget(noise: Noise, params: &HeParams) -> Result<()> {
    let budget = noise_budget_bits(params);
    match noise {
        Noise::Bounded(b) if b >= 1u64 << budget => Err(Error::NoiseBudget {
            bound_bits: noise.bits(),
            budget_bits: budget,
        }),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    params: HeParams,
    backend: Backend,
    s: RingPoly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RlweCiphertext {
    pub b: RingPoly,
    pub a: RingPoly,
    /// Seed `a` was expanded from, for fresh ciphertexts.
    pub seed: Option<[u8; 32]>,
    pub noise: Noise,
}

/// `b + <a, s> = m + 2^l e (mod q)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LweCiphertext {
    pub a: Vec<u64>,
    pub b: u64,
    pub q_bits: u32,
    pub noise: Noise,
}

fn ternary<R: Rng + ?Sized>(params: &HeParams, rng: &mut R) -> RingPoly {
    let qm = params.q_mask();
    let coeffs = (0..params.n).map(|_| (rng.gen_range(-1i64..=1) as u64) & qm).collect();
    RingPoly::from_coeffs(params.n, params.q_bits, coeffs).expect("length is n")
}

fn cbd<R: Rng + ?Sized>(params: &HeParams, rng: &mut R) -> Vec<i64> {
    (0..params.n)
        .map(|_| {
            let bits: u32 = rng.gen();
            let a = (bits & mask(NOISE_ETA) as u32).count_ones() as i64;
            let b = ((bits >> NOISE_ETA) & mask(NOISE_ETA) as u32).count_ones() as i64;
            a - b
        })
        .collect()
}

/// The public `a` polynomial behind a seed. All zero on the ideal backend.
pub fn expand_a(params: &HeParams, backend: Backend, seed: &[u8; 32]) -> RingPoly {
    match backend {
        Backend::Ideal => RingPoly::zero(params.n, params.q_bits),
        Backend::Rlwe => {
            let mut rng = ChaCha20Rng::from_seed(*seed);
            let qm = params.q_mask();
            let coeffs = (0..params.n).map(|_| rng.next_u64() & qm).collect();
            RingPoly::from_coeffs(params.n, params.q_bits, coeffs).expect("length is n")
        }
    }
}

pub fn keygen<R: Rng + ?Sized>(params: &HeParams, backend: Backend, rng: &mut R) -> Result<SecretKey> {
    params.validate()?;
    let s = match backend {
        Backend::Ideal => RingPoly::zero(params.n, params.q_bits),
        Backend::Rlwe => ternary(params, rng),
    };
    Ok(SecretKey {
        params: *params,
        backend,
        s,
    })
}

fn check_ring(params: &HeParams, p: &RingPoly) -> Result<()> {
    if p.n() != params.n || p.modulus_bits() != params.q_bits {
        return Err(Error::RingMismatch {
            n_a: params.n,
            bits_a: params.q_bits,
            n_b: p.n(),
            bits_b: p.modulus_bits(),
        });
    }
    Ok(())
}

impl SecretKey {
    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// On the ideal backend the tracked quantity is only plaintext carry,
    /// which cannot corrupt anything, so no budget applies.
    fn check(&self, noise: Noise) -> Result<()> {
        match self.backend {
            Backend::Ideal => Ok(()),
            Backend::Rlwe => check_budget(noise, &self.params),
        }
    }

    /// Encrypts the low `l` bits of every coefficient of `m`.
    pub fn encrypt<R: Rng + ?Sized>(&self, m: &RingPoly, rng: &mut R) -> Result<RlweCiphertext> {
        check_ring(&self.params, m)?;
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let a = expand_a(&self.params, self.backend, &seed);
        let (noise, e) = match self.backend {
            Backend::Ideal => (0, vec![0; self.params.n]),
            Backend::Rlwe => (NOISE_ETA as u64, cbd(&self.params, rng)),
        };
        let l = self.params.plain_bits;
        let pm = self.params.plain_mask();
        let qm = self.params.q_mask();
        let as_ = a.mul(&self.s)?;
        let coeffs = m
            .coeffs()
            .iter()
            .zip(&e)
            .zip(as_.coeffs())
            .map(|((&mi, &ei), &asi)| ((mi & pm).wrapping_add((ei << l) as u64).wrapping_sub(asi)) & qm)
            .collect();
        Ok(RlweCiphertext {
            b: RingPoly::from_coeffs(self.params.n, self.params.q_bits, coeffs)?,
            a,
            seed: Some(seed),
            noise: Noise::Bounded(noise),
        })
    }

    /// `b + a s mod q`, the raw phase.
    pub fn phase(&self, ct: &RlweCiphertext) -> Result<RingPoly> {
        check_ring(&self.params, &ct.b)?;
        ct.b.add(&ct.a.mul(&self.s)?)
    }

    /// Low `l` bits of the phase, as a polynomial mod `2^l`. Refuses
    /// ciphertexts whose tracked noise exceeds the budget.
    pub fn decrypt(&self, ct: &RlweCiphertext) -> Result<RingPoly> {
        self.check(ct.noise)?;
        let v = self.phase(ct)?;
        let pm = self.params.plain_mask();
        let coeffs = v.coeffs().iter().map(|&c| c & pm).collect();
        RingPoly::from_coeffs(self.params.n, self.params.plain_bits, coeffs)
    }

    /// Largest `|e|` over all coefficients.
    pub fn measure_noise(&self, ct: &RlweCiphertext) -> Result<u64> {
        let v = self.phase(ct)?;
        Ok(v.coeffs().iter().map(|&c| self.noise_of(c)).max().unwrap_or(0))
    }

    fn noise_of(&self, phase: u64) -> u64 {
        let HeParams { q_bits, plain_bits, .. } = self.params;
        let low = phase & mask(plain_bits);
        ((centered(phase, q_bits) - low as i64) >> plain_bits).unsigned_abs()
    }

    pub fn lwe_phase(&self, ct: &LweCiphertext) -> Result<u64> {
        if ct.a.len() != self.params.n || ct.q_bits != self.params.q_bits {
            return Err(Error::RingMismatch {
                n_a: self.params.n,
                bits_a: self.params.q_bits,
                n_b: ct.a.len(),
                bits_b: ct.q_bits,
            });
        }
        let dot =
            ct.a.iter()
                .zip(self.s.coeffs())
                .fold(0u64, |acc, (&x, &y)| acc.wrapping_add(x.wrapping_mul(y)));
        Ok(ct.b.wrapping_add(dot) & self.params.q_mask())
    }

    pub fn lwe_decrypt(&self, ct: &LweCiphertext) -> Result<u64> {
        self.check(ct.noise)?;
        Ok(self.lwe_phase(ct)? & self.params.plain_mask())
    }

    pub fn lwe_measure_noise(&self, ct: &LweCiphertext) -> Result<u64> {
        Ok(self.noise_of(self.lwe_phase(ct)?))
    }
}

/// `ct ⊞ m`. The noise update assumes `m` has coefficients in `[0, 2^l)`, as
/// packed shares do; the carry out of the low bits costs one unit of noise.
pub fn hom_add_plain(ct: &RlweCiphertext, m: &RingPoly) -> Result<RlweCiphertext> {
    Ok(RlweCiphertext {
        b: ct.b.add(m)?,
        a: ct.a.clone(),
        seed: None,
        noise: ct.noise.map(|b| b.saturating_add(1)),
    })
}

/// `ct ⊠ w` for a plaintext `w` given mod `q`. With `m < 2^l` the product
/// `m w` carries at most `|w|_1` into the noise, so `|e'| <= |w|_1 (|e| + 1)`
/// where `|w|_1` is taken over centred coefficients.
pub fn hom_mul_plain(ct: &RlweCiphertext, w: &RingPoly) -> Result<RlweCiphertext> {
    let bits = w.modulus_bits();
    let l1 = (0..w.n())
        .map(|i| centered(w.coeffs()[i], bits).unsigned_abs())
        .fold(0u64, u64::saturating_add);
    Ok(RlweCiphertext {
        b: ct.b.mul(w)?,
        a: ct.a.mul(w)?,
        seed: None,
        noise: ct.noise.map(|b| l1.saturating_mul(b.saturating_add(1))),
    })
}

/// `ct1 ⊞ ct2`.
pub fn hom_add(x: &RlweCiphertext, y: &RlweCiphertext) -> Result<RlweCiphertext> {
    Ok(RlweCiphertext {
        b: x.b.add(&y.b)?,
        a: x.a.add(&y.a)?,
        seed: None,
        noise: x.noise.plus(y.noise),
    })
}

/// The LWE ciphertext of coefficient `idx`:
/// `a'[j] = a[idx - j]` for `j <= idx`, `-a[N + idx - j]` otherwise.
pub fn extract_lwe(ct: &RlweCiphertext, idx: usize) -> Result<LweCiphertext> {
    let n = ct.a.n();
    if idx >= n {
        return Err(Error::IndexOutOfRange { index: idx, limit: n });
    }
    let qm = ct.a.mask();
    let a = ct.a.coeffs();
    let vec = (0..n)
        .map(|j| {
            if j <= idx {
                a[idx - j]
            } else {
                a[n + idx - j].wrapping_neg() & qm
            }
        })
        .collect();
    Ok(LweCiphertext {
        a: vec,
        b: ct.b.coeffs()[idx],
        q_bits: ct.a.modulus_bits(),
        noise: ct.noise,
    })
}

/// `ct ⊟ r` for `r` mod `q`. A mask below `2^l` costs one borrow; a wider
/// mask floods the noise.
pub fn lwe_sub_scalar(ct: &LweCiphertext, r: u64, plain_bits: u32) -> LweCiphertext {
    let qm = mask(ct.q_bits);
    let noise = if r & !mask(plain_bits) == 0 {
        ct.noise.map(|b| b.saturating_add(1))
    } else {
        Noise::Flooded
    };
    LweCiphertext {
        a: ct.a.clone(),
        b: ct.b.wrapping_sub(r) & qm,
        q_bits: ct.q_bits,
        noise,
    }
}

/// Extracts the coefficients `idxs` of `ct` and subtracts `masks` from them.
///
/// Every LWE ciphertext extracted from one RLWE ciphertext has an `a` vector
/// derived from the same polynomial, so the result is the shared `ct.a` plus
/// one masked `b` per index. Equivalent to [`extract_lwe`] followed by
/// [`lwe_sub_scalar`] for each index.
pub fn extract_remask_batch(ct: &RlweCiphertext, idxs: &[usize], masks: &[u64]) -> Result<Vec<u64>> {
    if idxs.len() != masks.len() {
        return Err(Error::Dimension(format!(
            "{} indices but {} masks",
            idxs.len(),
            masks.len()
        )));
    }
    let n = ct.b.n();
    let qm = ct.b.mask();
    idxs.iter()
        .zip(masks)
        .map(|(&idx, &r)| {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, limit: n });
            }
            Ok(ct.b.coeffs()[idx].wrapping_sub(r) & qm)
        })
        .collect()
}

impl SecretKey {
    /// Decrypts a batch produced by [`extract_remask_batch`] against the
    /// shared polynomial `a`; costs one ring product for the whole batch.
    pub fn decrypt_batch(&self, a: &RingPoly, idxs: &[usize], bs: &[u64]) -> Result<Vec<u64>> {
        check_ring(&self.params, a)?;
        if idxs.len() != bs.len() {
            return Err(Error::Dimension(format!(
                "{} indices but {} values",
                idxs.len(),
                bs.len()
            )));
        }
        let as_ = a.mul(&self.s)?;
        let pm = self.params.plain_mask();
        idxs.iter()
            .zip(bs)
            .map(|(&idx, &b)| {
                let v = as_.get(idx)?;
                Ok(b.wrapping_add(v) & pm)
            })
            .collect()
    }
}
