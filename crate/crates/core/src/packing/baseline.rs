//! Baseline packings: zero-padded standard convolution and per-group im2col
//! matrix multiplication.

use serde::{Deserialize, Serialize};

use super::{chw_index, weight_index, ConvPlan, OutputSpec, Scheme, WeightLift};
use crate::error::{Error, Result};
use crate::params::HeParams;
use crate::ring::RingPoly;
use crate::tensor::{ConvDims, Tensor};

/// Block shape of the standard-convolution packing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheetahShape {
    /// Channels per input polynomial.
    pub c_x: usize,
    /// Zero-padded filters per weight polynomial.
    pub filters_per_poly: usize,
    pub n_x: usize,
}

impl CheetahShape {
    /// `C_x = min(C, floor(N/HW))`, rounded down to whole groups unless a
    /// single group (standard convolution) spans several input polynomials.
    pub fn plan(dims: &ConvDims, n: usize) -> Result<Self> {
        let hw = dims.hw();
        if hw > n {
            return Err(Error::Infeasible(format!("HW = {hw} exceeds N = {n}")));
        }
        let fit = (n / hw).min(dims.c);
        let c_x = if dims.g <= fit {
            fit / dims.g * dims.g
        } else if dims.g == dims.c {
            fit
        } else {
            return Err(Error::Infeasible(format!(
                "a group of {} channels does not fit N/HW = {}",
                dims.g,
                n / hw
            )));
        };
        Ok(CheetahShape {
            c_x,
            filters_per_poly: n / (c_x * hw),
            n_x: dims.c.div_ceil(c_x),
        })
    }
}

/// Every filter sees all `C_x` channel slots of its block; the channels it does
/// not read are zero. Filter `j` of a weight polynomial puts channel `c` at
/// slot `j C_x + C_x - 1 - c`, and its outputs sit at slot `j C_x + C_x - 1`.
pub fn cheetah_plan(dims: &ConvDims, n: usize) -> Result<ConvPlan> {
    dims.validate()?;
    let shape = CheetahShape::plan(dims, n)?;
    let (w, r, g, hw) = (dims.w, dims.r, dims.g, dims.hw());
    let (oh, ow, s) = (dims.out_h(), dims.out_w(), dims.stride);
    let o = dims.anchor();
    let c_x = shape.c_x;

    let inputs: Vec<Vec<(usize, usize)>> = (0..shape.n_x)
        .map(|b| {
            let channels = (dims.c - b * c_x).min(c_x);
            (0..channels * hw).map(|idx| (idx, b * c_x * hw + idx)).collect()
        })
        .collect();

    let blocks_of = |k: usize| {
        let lo = dims.input_channel(k, 0) / c_x;
        let hi = dims.input_channel(k, g - 1) / c_x;
        (lo, hi)
    };
    let mut chunks: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for k in 0..dims.k {
        let span = blocks_of(k);
        match chunks.last_mut() {
            Some((sp, fs)) if *sp == span && fs.len() < shape.filters_per_poly => fs.push(k),
            _ => chunks.push((span, vec![k])),
        }
    }

    let mut weights = Vec::new();
    let mut outputs = Vec::with_capacity(chunks.len());
    for ((lo, hi), filters) in chunks {
        let mut terms = Vec::with_capacity(hi - lo + 1);
        for b in lo..=hi {
            let mut wmap = Vec::new();
            for (j, &k) in filters.iter().enumerate() {
                for gi in 0..g {
                    let c = dims.input_channel(k, gi);
                    if c / c_x != b {
                        continue;
                    }
                    let base = (j * c_x + c_x - 1 - (c - b * c_x)) * hw + o;
                    for l in 0..r {
                        for lp in 0..r {
                            wmap.push((base - l * w - lp, weight_index(dims, k, gi, l, lp)));
                        }
                    }
                }
            }
            terms.push((b, weights.len()));
            weights.push(wmap);
        }
        let mut extract = Vec::with_capacity(filters.len() * oh * ow);
        for (j, &k) in filters.iter().enumerate() {
            let base = (j * c_x + c_x - 1) * hw + o;
            for io in 0..oh {
                for jo in 0..ow {
                    extract.push((base + io * s * w + jo * s, chw_index(oh, ow, k, io, jo)));
                }
            }
        }
        outputs.push(OutputSpec { terms, extract });
    }
    let plan = ConvPlan {
        scheme: Scheme::Cheetah,
        dims: *dims,
        n,
        inputs,
        weights,
        outputs,
    };
    plan.validate()?;
    Ok(plan)
}

/// Matrix shape of the per-group im2col packing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IronShape {
    /// Patch-matrix rows (output pixels) per input polynomial.
    pub rows_per_poly: usize,
    /// Inner dimension `G R^2`.
    pub inner: usize,
    /// Filters per group.
    pub cols: usize,
    pub polys_per_group: usize,
}

impl IronShape {
    pub fn plan(dims: &ConvDims, n: usize) -> Result<Self> {
        let inner = dims.g * dims.r * dims.r;
        let cols = dims.filters_per_group();
        let rows_per_poly = n / (inner * cols);
        if rows_per_poly == 0 {
            return Err(Error::Infeasible(format!(
                "one patch row needs {} coefficients but N = {n}",
                inner * cols
            )));
        }
        let rows = rows_per_poly.min(dims.out_hw());
        Ok(IronShape {
            rows_per_poly: rows,
            inner,
            cols,
            polys_per_group: dims.out_hw().div_ceil(rows),
        })
    }
}

/// Per group: patch matrix `A` (`H'W' x G R^2`) times `B` (`G R^2 x K/groups`).
/// `a[i m k + j] = A[i][j]` and `b[t m + m - 1 - j] = B[j][t]` with `m = G R^2`,
/// `k` the filter count; output `(i, t)` sits at `i m k + t m + m - 1`.
pub fn iron_plan(dims: &ConvDims, n: usize) -> Result<ConvPlan> {
    dims.validate()?;
    let shape = IronShape::plan(dims, n)?;
    let (h, w, r, g) = (dims.h, dims.w, dims.r, dims.g);
    let (oh, ow, s) = (dims.out_h(), dims.out_w(), dims.stride);
    let (m, kc) = (shape.inner, shape.cols);
    let rows = dims.out_hw();
    let mut inputs = Vec::new();
    let mut weights = Vec::with_capacity(dims.groups());
    let mut outputs = Vec::new();
    for a in 0..dims.groups() {
        let mut wmap = Vec::with_capacity(m * kc);
        for t in 0..kc {
            for gi in 0..g {
                for l in 0..r {
                    for lp in 0..r {
                        let j = (gi * r + l) * r + lp;
                        wmap.push((t * m + m - 1 - j, weight_index(dims, a * kc + t, gi, l, lp)));
                    }
                }
            }
        }
        let w_idx = weights.len();
        weights.push(wmap);
        for tile in 0..shape.polys_per_group {
            let first = tile * shape.rows_per_poly;
            let count = (rows - first).min(shape.rows_per_poly);
            let mut imap = Vec::with_capacity(count * m);
            let mut extract = Vec::with_capacity(count * kc);
            for il in 0..count {
                let (io, jo) = ((first + il) / ow, (first + il) % ow);
                for gi in 0..g {
                    for l in 0..r {
                        for lp in 0..r {
                            let j = (gi * r + l) * r + lp;
                            imap.push((il * m * kc + j, chw_index(h, w, a * g + gi, io * s + l, jo * s + lp)));
                        }
                    }
                }
                for t in 0..kc {
                    extract.push((il * m * kc + t * m + m - 1, chw_index(oh, ow, a * kc + t, io, jo)));
                }
            }
            outputs.push(OutputSpec {
                terms: vec![(inputs.len(), w_idx)],
                extract,
            });
            inputs.push(imap);
        }
    }
    let plan = ConvPlan {
        scheme: Scheme::Iron,
        dims: *dims,
        n,
        inputs,
        weights,
        outputs,
    };
    plan.validate()?;
    Ok(plan)
}

/// Packed polynomials of a baseline, ready to multiply.
#[derive(Clone, Debug)]
pub struct PackedBaseline {
    pub plan: ConvPlan,
    pub inputs: Vec<RingPoly>,
    pub weights: Vec<RingPoly>,
}

impl PackedBaseline {
    fn build(plan: ConvPlan, x: &Tensor, w: &Tensor, params: &HeParams) -> Result<Self> {
        let inputs = plan.pack_inputs(x, params.q_bits)?;
        let weights = plan.pack_weights(w, params.q_bits, WeightLift::Direct)?;
        Ok(PackedBaseline { plan, inputs, weights })
    }

    /// Multiplies and extracts `Y mod 2^l`.
    pub fn evaluate(&self, params: &HeParams) -> Result<Tensor> {
        let ys = self.plan.multiply(&self.inputs, &self.weights)?;
        self.plan.extract(&ys, params.plain_bits)
    }
}

/// Depthwise or group convolution run as a zero-padded standard convolution.
pub fn pack_cheetah_standard(x: &Tensor, w: &Tensor, dims: &ConvDims, params: &HeParams) -> Result<PackedBaseline> {
    PackedBaseline::build(cheetah_plan(dims, params.n)?, x, w, params)
}

/// One im2col matrix product per channel (or group).
pub fn pack_iron_channelwise(x: &Tensor, w: &Tensor, dims: &ConvDims, params: &HeParams) -> Result<PackedBaseline> {
    PackedBaseline::build(iron_plan(dims, params.n)?, x, w, params)
}
