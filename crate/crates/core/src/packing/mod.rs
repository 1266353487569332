//! Coefficient packings for convolutions over `Z_q[X]/(X^N+1)`.
//!
//! Every scheme compiles to a [`ConvPlan`]: sparse coefficient maps saying
//! which tensor element goes into which coefficient of which input or weight
//! polynomial, which products are summed into each output polynomial, and
//! which output coefficients hold which convolution outputs. The plaintext
//! evaluator, the protocol session and the cost model all consume the same
//! plan, so a layout is only ever written down once.

pub mod baseline;
pub mod falcon;
pub mod scs;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::mask;
use crate::ring::RingPoly;
use crate::tensor::{ConvDims, Tensor};

pub use baseline::{
    cheetah_plan, iron_plan, pack_cheetah_standard, pack_iron_channelwise, CheetahShape, IronShape, PackedBaseline,
};
pub use falcon::{
    extract_output_dw, extract_output_group, extract_output_split, falcon_plan, offset, pack_input_dw,
    pack_input_group, pack_weight_dw, pack_weight_group, split_weight_poly, PackingLayout, Piece,
};
pub use scs::{depthwise_patterns, greedy_scs_arrange, FilterArrangement, ZeroPattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Iron,
    Cheetah,
    FalconDw,
    FalconGroup,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Iron => "iron",
            Scheme::Cheetah => "cheetah",
            Scheme::FalconDw => "falcon_dw",
            Scheme::FalconGroup => "falcon_group",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iron" => Ok(Scheme::Iron),
            "cheetah" => Ok(Scheme::Cheetah),
            "falcon_dw" => Ok(Scheme::FalconDw),
            "falcon_group" => Ok(Scheme::FalconGroup),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

/// How weight residues mod `2^l` are embedded into `Z_q`.
///
/// Both choices agree mod `2^l`, so extracted outputs are identical. The
/// centred lift keeps small negative weights small in `Z_q`, which is what
/// bounds noise growth on the RLWE backend.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLift {
    #[default]
    Direct,
    Centered,
}

/// One output polynomial: a sum of input-by-weight products and the
/// coefficients read out of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    /// `(input polynomial, weight polynomial)` pairs summed into this output.
    pub terms: Vec<(usize, usize)>,
    /// `(coefficient, flat index into Y)`.
    pub extract: Vec<(usize, usize)>,
}

/// A fully indexed packing of one convolution. Maps are `(coefficient, flat
/// tensor index)` pairs; coefficients not listed are zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvPlan {
    pub scheme: Scheme,
    pub dims: ConvDims,
    pub n: usize,
    pub inputs: Vec<Vec<(usize, usize)>>,
    pub weights: Vec<Vec<(usize, usize)>>,
    pub outputs: Vec<OutputSpec>,
}

impl ConvPlan {
    pub fn input_poly_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn output_poly_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn mult_count(&self) -> usize {
        self.outputs.iter().map(|o| o.terms.len()).sum()
    }

    pub fn extracted_count(&self) -> usize {
        self.outputs.iter().map(|o| o.extract.len()).sum()
    }

    fn pack(n: usize, q_bits: u32, map: &[(usize, usize)], data: &[u64], lift: impl Fn(u64) -> u64) -> RingPoly {
        let mut coeffs = vec![0u64; n];
        for &(coef, src) in map {
            coeffs[coef] = lift(data[src]);
        }
        RingPoly::from_coeffs(n, q_bits, coeffs).expect("length is n")
    }

    pub fn pack_inputs(&self, x: &Tensor, q_bits: u32) -> Result<Vec<RingPoly>> {
        if x.shape() != self.dims.input_shape().as_slice() {
            return Err(Error::Dimension(format!(
                "input shape {:?}, plan expects {:?}",
                x.shape(),
                self.dims.input_shape()
            )));
        }
        Ok(self
            .inputs
            .iter()
            .map(|m| Self::pack(self.n, q_bits, m, x.data(), |v| v))
            .collect())
    }

    pub fn pack_weights(&self, w: &Tensor, q_bits: u32, lift: WeightLift) -> Result<Vec<RingPoly>> {
        if w.shape() != self.dims.weight_shape().as_slice() {
            return Err(Error::Dimension(format!(
                "weight shape {:?}, plan expects {:?}",
                w.shape(),
                self.dims.weight_shape()
            )));
        }
        let bits = w.bits();
        let qm = mask(q_bits);
        Ok(self
            .weights
            .iter()
            .map(|m| match lift {
                WeightLift::Direct => Self::pack(self.n, q_bits, m, w.data(), |v| v),
                WeightLift::Centered => Self::pack(self.n, q_bits, m, w.data(), |v| {
                    crate::ring::centered(v, bits) as u64 & qm
                }),
            })
            .collect())
    }

    /// Sums of products for every output, computed in parallel.
    pub fn multiply(&self, inputs: &[RingPoly], weights: &[RingPoly]) -> Result<Vec<RingPoly>> {
        if inputs.len() != self.inputs.len() || weights.len() != self.weights.len() {
            return Err(Error::Dimension(format!(
                "plan needs {} inputs and {} weights, got {} and {}",
                self.inputs.len(),
                self.weights.len(),
                inputs.len(),
                weights.len()
            )));
        }
        self.outputs
            .par_iter()
            .map(|o| {
                let mut acc = RingPoly::zero(inputs[0].n(), inputs[0].modulus_bits());
                for &(i, w) in &o.terms {
                    acc.add_assign(&inputs[i].mul_sparse(&weights[w])?)?;
                }
                Ok(acc)
            })
            .collect()
    }

    /// Reads every output coefficient and reduces it mod `2^bits`.
    pub fn extract(&self, outputs: &[RingPoly], bits: u32) -> Result<Tensor> {
        if outputs.len() != self.outputs.len() {
            return Err(Error::Dimension(format!(
                "{} outputs for a plan with {}",
                outputs.len(),
                self.outputs.len()
            )));
        }
        let mut y = Tensor::zeros(&self.dims.output_shape(), bits);
        let m = mask(bits);
        let data = y.data_mut();
        for (target, poly) in self.outputs.iter().zip(outputs) {
            for &(coef, dst) in &target.extract {
                data[dst] = poly.get(coef)? & m;
            }
        }
        Ok(y)
    }

    /// Pack, multiply and extract in the clear.
    pub fn evaluate_plain(&self, x: &Tensor, w: &Tensor, q_bits: u32) -> Result<Tensor> {
        let xs = self.pack_inputs(x, q_bits)?;
        let ws = self.pack_weights(w, q_bits, WeightLift::Direct)?;
        let ys = self.multiply(&xs, &ws)?;
        self.extract(&ys, x.bits())
    }

    /// Structural checks: indices in range, no coefficient written twice,
    /// every output element read exactly once, and negacyclic wrap-around
    /// confined below the lowest read coefficient of each product.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let check_map = |map: &[(usize, usize)], what: &'static str| -> Result<usize> {
            let mut seen = vec![false; n];
            let mut max = 0;
            for &(coef, _) in map {
                if coef >= n {
                    return Err(Error::Capacity {
                        what,
                        needed: coef + 1,
                        n,
                    });
                }
                if std::mem::replace(&mut seen[coef], true) {
                    return Err(Error::Geometry(format!("{what} coefficient {coef} written twice")));
                }
                max = max.max(coef);
            }
            Ok(max)
        };
        let in_max = self
            .inputs
            .iter()
            .map(|m| check_map(m, "input polynomial"))
            .collect::<Result<Vec<_>>>()?;
        let w_max = self
            .weights
            .iter()
            .map(|m| check_map(m, "weight polynomial"))
            .collect::<Result<Vec<_>>>()?;
        let mut covered = vec![false; self.dims.output_shape().iter().product()];
        for o in &self.outputs {
            check_map(&o.extract, "output polynomial")?;
            let t_min = o.extract.iter().map(|&(c, _)| c).min().unwrap_or(0);
            for &(_, dst) in &o.extract {
                if std::mem::replace(&mut covered[dst], true) {
                    return Err(Error::Geometry(format!("output element {dst} extracted twice")));
                }
            }
            for &(i, w) in &o.terms {
                let (a, b) = (
                    *in_max.get(i).ok_or(Error::IndexOutOfRange {
                        index: i,
                        limit: in_max.len(),
                    })?,
                    *w_max.get(w).ok_or(Error::IndexOutOfRange {
                        index: w,
                        limit: w_max.len(),
                    })?,
                );
                if a + b >= n && a + b - n >= t_min {
                    return Err(Error::Capacity {
                        what: "negacyclic wrap below read coefficients",
                        needed: a + b + 1,
                        n: n + t_min,
                    });
                }
            }
        }
        if let Some(pos) = covered.iter().position(|c| !c) {
            return Err(Error::Geometry(format!("output element {pos} never extracted")));
        }
        Ok(())
    }

    /// Exhaustive non-collision check. Every pair of packed input and weight
    /// coefficients is multiplied symbolically; each product landing on a read
    /// coefficient must be a genuine term of that convolution output, and
    /// every genuine term must arrive exactly once.
    pub fn check_noncollision(&self) -> Result<()> {
        let d = self.dims;
        let (h, w, r) = (d.h, d.w, d.r);
        let (oh, ow) = (d.out_h(), d.out_w());
        let per_out = d.g * r * r;
        for (oi, o) in self.outputs.iter().enumerate() {
            let mut target = vec![usize::MAX; self.n];
            for (t, &(coef, _)) in o.extract.iter().enumerate() {
                target[coef] = t;
            }
            let mut hits = vec![false; o.extract.len() * per_out];
            for &(ii, wi) in &o.terms {
                for &(wc, wsrc) in &self.weights[wi] {
                    let (kf, rest) = (wsrc / (d.g * r * r), wsrc % (d.g * r * r));
                    let (g, l, lp) = (rest / (r * r), rest / r % r, rest % r);
                    for &(xc, xsrc) in &self.inputs[ii] {
                        let idx = xc + wc;
                        if idx < self.n {
                            let t = target[idx];
                            if t == usize::MAX {
                                continue;
                            }
                            let dst = o.extract[t].1;
                            let (ko, io, jo) = (dst / (oh * ow), dst / ow % oh, dst % ow);
                            let (c, i, j) = (xsrc / (h * w), xsrc / w % h, xsrc % w);
                            let genuine = kf == ko
                                && c == d.input_channel(ko, g)
                                && i == io * d.stride + l
                                && j == jo * d.stride + lp;
                            if !genuine {
                                return Err(Error::Geometry(format!(
                                    "output {oi}: x[{xsrc}] * w[{wsrc}] collides with y[{dst}] at coefficient {idx}"
                                )));
                            }
                            let slot = t * per_out + (g * r + l) * r + lp;
                            if std::mem::replace(&mut hits[slot], true) {
                                return Err(Error::Geometry(format!("term for y[{dst}] counted twice")));
                            }
                        } else if target[idx - self.n] != usize::MAX {
                            return Err(Error::Geometry(format!(
                                "output {oi}: wrapped product lands on read coefficient {}",
                                idx - self.n
                            )));
                        }
                    }
                }
            }
            if let Some(miss) = hits.iter().position(|h| !h) {
                return Err(Error::Geometry(format!(
                    "output {oi}: term {} of y[{}] never produced",
                    miss % per_out,
                    o.extract[miss / per_out].1
                )));
            }
        }
        Ok(())
    }
}

/// Flat index of `W[k, g, l, l']`.
pub(crate) fn weight_index(d: &ConvDims, k: usize, g: usize, l: usize, lp: usize) -> usize {
    ((k * d.g + g) * d.r + l) * d.r + lp
}

/// Flat index of `X[c, i, j]` or `Y[c, i, j]` in a tensor of width `w` and height `h`.
pub(crate) fn chw_index(h: usize, w: usize, c: usize, i: usize, j: usize) -> usize {
    (c * h + i) * w + j
}
