//! Zero-aware dense packing for depthwise convolutions and its group extension.
//!
//! An input polynomial carries `C_x` channel units. A weight polynomial carries
//! `C_w` filters placed so that neighbouring filters share their zero channels
//! (see [`super::scs`]), which is what lets it hold roughly twice as many
//! filters as a zero-padded standard-convolution packing.
//!
//! For a group size `G` the unit is a whole group: `G^2` channel slots per unit
//! in both input and weight polynomials. `G = 1` is plain depthwise packing,
//! and every formula below reduces to it exactly.
//!
//! When `C_x = k C_w` with `k > 1`, the canonical arrangement of all `C_x`
//! filters (pairs `p` and `C_x-1-p` side by side) is cut into `k` pieces of
//! `C_w` consecutive filters. Each piece's leading zero slots are dropped so it
//! fits a polynomial of its own.

use serde::{Deserialize, Serialize};

use super::{chw_index, weight_index, ConvPlan, OutputSpec, Scheme};
use crate::error::{Error, Result};
use crate::params::HeParams;
use crate::ring::RingPoly;
use crate::tensor::{ConvDims, Tensor};

/// Channel-slot offset of filter `c'` in a weight polynomial:
/// `(C_x+2)(C_w-1-c')` for `c' >= C_w/2`, else `C_x + c'(C_x+1)`.
pub fn offset(c_prime: usize, c_x: usize, c_w: usize) -> Result<usize> {
    if c_w == 0 || c_w % 2 == 1 {
        return Err(Error::Geometry(format!("C_w = {c_w} must be even")));
    }
    if !c_x.is_multiple_of(c_w) {
        return Err(Error::Geometry(format!("C_x = {c_x} is not a multiple of C_w = {c_w}")));
    }
    if c_prime >= c_w {
        return Err(Error::IndexOutOfRange {
            index: c_prime,
            limit: c_w,
        });
    }
    Ok(if c_prime >= c_w / 2 {
        (c_x + 2) * (c_w - 1 - c_prime)
    } else {
        c_x + c_prime * (c_x + 1)
    })
}

/// One weight polynomial's worth of filters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    /// Unit slot of filter `c'`'s nonzero channel.
    pub slots: Vec<usize>,
    /// Input unit (within the block) that filter `c'` convolves.
    pub channels: Vec<usize>,
    /// Output slots the piece occupies: `max(slot + channel) + 1`.
    pub span: usize,
}

impl Piece {
    fn new(slots: Vec<usize>, channels: Vec<usize>) -> Self {
        let span = slots.iter().zip(&channels).map(|(s, c)| s + c + 1).max().unwrap_or(0);
        Piece { slots, channels, span }
    }
}

/// Planned dense packing: block sizes and per-piece filter positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingLayout {
    pub scheme: Scheme,
    /// Units per input polynomial.
    pub c_x: usize,
    /// Filter units per weight polynomial.
    pub c_w: usize,
    pub k: usize,
    pub n_x: usize,
    pub n_w: usize,
    /// Group size `G`.
    pub group: usize,
    pub n: usize,
    pub hw: usize,
    pub pieces: Vec<Piece>,
    /// Whether each piece's leading zero slots were dropped.
    pub trimmed: bool,
}

impl PackingLayout {
    /// Dense depthwise layout with `C_x` channels per input and `C_w` filters per weight polynomial.
    pub fn falcon_dw(dims: &ConvDims, n: usize, c_x: usize, c_w: usize) -> Result<Self> {
        if !dims.is_depthwise() {
            return Err(Error::Geometry("falcon_dw needs a depthwise geometry".into()));
        }
        Self::build(dims, n, c_x, c_w, true)
    }

    /// Group layout; `c_x`, `c_w` count whole groups.
    pub fn falcon_group(dims: &ConvDims, n: usize, c_x: usize, c_w: usize) -> Result<Self> {
        Self::build(dims, n, c_x, c_w, true)
    }

    /// Same as the trimmed layout but with pieces left at their positions in
    /// the full `C_x`-filter arrangement. Only fits when the full arrangement does.
    pub fn untrimmed(&self, dims: &ConvDims) -> Result<Self> {
        Self::build(dims, self.n, self.c_x, self.c_w, false)
    }

    fn build(dims: &ConvDims, n: usize, c_x: usize, c_w: usize, trim: bool) -> Result<Self> {
        dims.validate()?;
        let g = dims.g;
        if dims.k != dims.c {
            return Err(Error::Geometry(format!(
                "dense packing needs K = C, got K = {}",
                dims.k
            )));
        }
        if c_x == 0 || c_w == 0 || !c_x.is_multiple_of(c_w) {
            return Err(Error::Geometry(format!(
                "C_x = {c_x} must be a positive multiple of C_w = {c_w}"
            )));
        }
        if c_w > 1 && c_w % 2 == 1 {
            return Err(Error::Geometry(format!("C_w = {c_w} must be 1 or even")));
        }
        let hw = dims.hw();
        let unit = g * g * hw;
        if unit > n {
            return Err(Error::Infeasible(format!(
                "one unit needs G^2 HW = {unit} coefficients but N = {n}"
            )));
        }
        if c_x * unit > n {
            return Err(Error::Capacity {
                what: "input block",
                needed: c_x * unit,
                n,
            });
        }
        let k = c_x / c_w;
        let pieces: Vec<Piece> = if c_w == 1 {
            (0..c_x).map(|m| Piece::new(vec![0], vec![m])).collect()
        } else {
            let half = c_w / 2;
            (0..k)
                .map(|kappa| {
                    let p0 = kappa * half;
                    let mut slots = Vec::with_capacity(c_w);
                    let mut channels = Vec::with_capacity(c_w);
                    for cp in 0..c_w {
                        let off = offset(cp, c_x, c_w).expect("validated");
                        let (slot, ch) = if cp < half {
                            (off - p0, p0 + cp)
                        } else {
                            (off, c_x - 1 - (p0 + c_w - 1 - cp))
                        };
                        let shift = if trim { 0 } else { (c_x + 2) * p0 };
                        slots.push(slot + shift);
                        channels.push(ch);
                    }
                    Piece::new(slots, channels)
                })
                .collect()
        };
        let span = pieces.iter().map(|p| p.span).max().unwrap_or(0);
        if span * unit > n {
            return Err(Error::Capacity {
                what: "weight piece",
                needed: span * unit,
                n,
            });
        }
        let units = dims.c / g;
        Ok(PackingLayout {
            scheme: if g == 1 { Scheme::FalconDw } else { Scheme::FalconGroup },
            c_x,
            c_w,
            k,
            n_x: units.div_ceil(c_x),
            n_w: units.div_ceil(c_w),
            group: g,
            n,
            hw,
            pieces,
            trimmed: trim,
        })
    }

    /// Channel slots per unit, `G^2`.
    pub fn unit_slots(&self) -> usize {
        self.group * self.group
    }

    /// Slots in the closed-form piece length `C_x+1+(C_w/2-1)(C_x+2)`.
    pub fn closed_form_span(&self) -> usize {
        if self.c_w == 1 {
            self.c_x
        } else {
            self.c_x + 1 + (self.c_w / 2 - 1) * (self.c_x + 2)
        }
    }

    /// Fraction of weight-polynomial channel slots holding filters.
    pub fn utilization(&self) -> f64 {
        self.c_w as f64 / self.closed_form_span() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `(coefficient, unit, g2, i, j)` for every input element of a block.
    fn input_entries(&self, dims: &ConvDims) -> impl Iterator<Item = (usize, usize, usize, usize, usize)> + '_ {
        let (h, w, g, hw, gg) = (dims.h, dims.w, self.group, self.hw, self.unit_slots());
        (0..self.c_x).flat_map(move |a| {
            (0..g).flat_map(move |g2| {
                (0..h).flat_map(move |i| (0..w).map(move |j| ((a * gg + g2) * hw + i * w + j, a, g2, i, j)))
            })
        })
    }

    /// `(coefficient, c', g1, g2, l, l')` for every weight of a piece.
    fn weight_entries(&self, dims: &ConvDims, piece: usize) -> Vec<(usize, usize, usize, usize, usize, usize)> {
        let p = &self.pieces[piece];
        let (g, gg, hw, r, w) = (self.group, self.unit_slots(), self.hw, dims.r, dims.w);
        let o = dims.anchor();
        let mut out = Vec::with_capacity(p.slots.len() * g * g * r * r);
        for (cp, &s) in p.slots.iter().enumerate() {
            for g1 in 0..g {
                for g2 in 0..g {
                    let base = (s * gg + gg - 1 - g1 * g - g2) * hw + o;
                    for l in 0..r {
                        for lp in 0..r {
                            out.push((base - l * w - lp, cp, g1, g2, l, lp));
                        }
                    }
                }
            }
        }
        out
    }

    /// `(coefficient, c', g1, i', j')` for every output a piece produces.
    fn output_entries(&self, dims: &ConvDims, piece: usize) -> Vec<(usize, usize, usize, usize, usize)> {
        let p = &self.pieces[piece];
        let (g, gg, hw, w, s) = (self.group, self.unit_slots(), self.hw, dims.w, dims.stride);
        let o = dims.anchor();
        let (oh, ow) = (dims.out_h(), dims.out_w());
        let mut out = Vec::with_capacity(p.slots.len() * g * oh * ow);
        for (cp, (&slot, &ch)) in p.slots.iter().zip(&p.channels).enumerate() {
            for g1 in 0..g {
                let base = ((slot + ch) * gg + gg - 1 - g1 * g) * hw + o;
                for io in 0..oh {
                    for jo in 0..ow {
                        out.push((base + io * s * w + jo * s, cp, g1, io, jo));
                    }
                }
            }
        }
        out
    }
}

/// Whole-tensor plan: `n_x` input blocks, one weight polynomial per nonempty
/// piece of each block, and one output polynomial per weight polynomial.
/// Phantom units past `C / G` are left out of every map.
pub fn falcon_plan(dims: &ConvDims, layout: &PackingLayout) -> Result<ConvPlan> {
    if layout.group != dims.g || layout.hw != dims.hw() {
        return Err(Error::Geometry("layout was planned for different dimensions".into()));
    }
    let (h, w, g) = (dims.h, dims.w, dims.g);
    let (oh, ow) = (dims.out_h(), dims.out_w());
    let units = dims.c / g;
    let mut inputs = Vec::with_capacity(layout.n_x);
    let mut weights = Vec::new();
    let mut outputs = Vec::new();
    let weight_maps: Vec<_> = (0..layout.pieces.len())
        .map(|p| layout.weight_entries(dims, p))
        .collect();
    let output_maps: Vec<_> = (0..layout.pieces.len())
        .map(|p| layout.output_entries(dims, p))
        .collect();
    for b in 0..layout.n_x {
        let first = b * layout.c_x;
        let input: Vec<(usize, usize)> = layout
            .input_entries(dims)
            .filter(|&(_, a, ..)| first + a < units)
            .map(|(coef, a, g2, i, j)| (coef, chw_index(h, w, (first + a) * g + g2, i, j)))
            .collect();
        let in_idx = inputs.len();
        inputs.push(input);
        for (pi, piece) in layout.pieces.iter().enumerate() {
            let real = |cp: usize| first + piece.channels[cp] < units;
            if !(0..piece.channels.len()).any(real) {
                continue;
            }
            let unit_of = |cp: usize| first + piece.channels[cp];
            let wmap = weight_maps[pi]
                .iter()
                .filter(|e| real(e.1))
                .map(|&(coef, cp, g1, g2, l, lp)| (coef, weight_index(dims, unit_of(cp) * g + g1, g2, l, lp)))
                .collect();
            let extract = output_maps[pi]
                .iter()
                .filter(|e| real(e.1))
                .map(|&(coef, cp, g1, io, jo)| (coef, chw_index(oh, ow, unit_of(cp) * g + g1, io, jo)))
                .collect();
            outputs.push(OutputSpec {
                terms: vec![(in_idx, weights.len())],
                extract,
            });
            weights.push(wmap);
        }
    }
    let plan = ConvPlan {
        scheme: layout.scheme,
        dims: *dims,
        n: layout.n,
        inputs,
        weights,
        outputs,
    };
    plan.validate()?;
    Ok(plan)
}

fn block_dims(dims: &ConvDims, layout: &PackingLayout) -> Result<ConvDims> {
    let c = layout.c_x * layout.group;
    ConvDims::new(dims.h, dims.w, c, c, dims.r, layout.group, dims.stride)
}

fn check_block(t: &Tensor, shape: &[usize], what: &str) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Dimension(format!(
            "{what} shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// `x[c HW + i W + j] = X[c, i, j]` for a `C_x x H x W` block.
pub fn pack_input_dw(xblock: &Tensor, params: &HeParams) -> Result<RingPoly> {
    if xblock.shape().len() != 3 {
        return Err(Error::Dimension(format!(
            "input block must be C x H x W, got {:?}",
            xblock.shape()
        )));
    }
    if xblock.len() > params.n {
        return Err(Error::Capacity {
            what: "input block",
            needed: xblock.len(),
            n: params.n,
        });
    }
    let mut coeffs = xblock.data().to_vec();
    coeffs.resize(params.n, 0);
    RingPoly::from_coeffs(params.n, params.q_bits, coeffs)
}

/// Packs a block of `C_x G` channels (`C_x` groups) at `G^2`-slot unit stride.
pub fn pack_input_group(
    xblock: &Tensor,
    layout: &PackingLayout,
    dims: &ConvDims,
    params: &HeParams,
) -> Result<RingPoly> {
    let bd = block_dims(dims, layout)?;
    check_block(xblock, &bd.input_shape(), "input block")?;
    let mut coeffs = vec![0u64; layout.n];
    for (coef, a, g2, i, j) in layout.input_entries(dims) {
        coeffs[coef] = xblock.data()[chw_index(dims.h, dims.w, a * layout.group + g2, i, j)];
    }
    RingPoly::from_coeffs(layout.n, params.q_bits, coeffs)
}

fn pack_piece(
    wblock: &Tensor,
    layout: &PackingLayout,
    dims: &ConvDims,
    piece: usize,
    q_bits: u32,
    filter_of: impl Fn(usize) -> usize,
) -> Result<RingPoly> {
    let bd = block_dims(dims, layout)?;
    let mut coeffs = vec![0u64; layout.n];
    for (coef, cp, g1, g2, l, lp) in layout.weight_entries(dims, piece) {
        coeffs[coef] = wblock.data()[weight_index(&bd, filter_of(cp) * layout.group + g1, g2, l, lp)];
    }
    RingPoly::from_coeffs(layout.n, q_bits, coeffs)
}

/// `w[offset(c') HW + O - l W - l'] = W[c', l, l']` for a block of `C_w`
/// filters shaped `C_w x 1 x R x R`. Needs `k = 1`; see [`split_weight_poly`].
pub fn pack_weight_dw(wblock: &Tensor, layout: &PackingLayout, dims: &ConvDims, params: &HeParams) -> Result<RingPoly> {
    if layout.k != 1 {
        return Err(Error::Geometry(format!("k = {} > 1, use split_weight_poly", layout.k)));
    }
    check_block(wblock, &[layout.c_w, 1, dims.r, dims.r], "weight block")?;
    pack_piece(wblock, layout, dims, 0, params.q_bits, |cp| {
        layout.pieces[0].channels[cp]
    })
}

/// The `k` weight polynomials of a `C_x`-filter block, one per piece.
pub fn split_weight_poly(
    wblock: &Tensor,
    layout: &PackingLayout,
    dims: &ConvDims,
    params: &HeParams,
) -> Result<Vec<RingPoly>> {
    check_block(
        wblock,
        &[layout.c_x * layout.group, layout.group, dims.r, dims.r],
        "weight block",
    )?;
    (0..layout.pieces.len())
        .map(|p| {
            pack_piece(wblock, layout, dims, p, params.q_bits, |cp| {
                layout.pieces[p].channels[cp]
            })
        })
        .collect()
}

/// Group weights for a block of `C_x` groups, shaped `C_x G x G x R x R`.
/// Returns one polynomial per piece.
pub fn pack_weight_group(
    wblock: &Tensor,
    layout: &PackingLayout,
    dims: &ConvDims,
    params: &HeParams,
) -> Result<Vec<RingPoly>> {
    split_weight_poly(wblock, layout, dims, params)
}

fn extract_pieces(ys: &[RingPoly], layout: &PackingLayout, dims: &ConvDims, bits: u32) -> Result<Tensor> {
    if ys.len() != layout.pieces.len() {
        return Err(Error::Dimension(format!(
            "{} products for {} pieces",
            ys.len(),
            layout.pieces.len()
        )));
    }
    let (oh, ow, g) = (dims.out_h(), dims.out_w(), layout.group);
    let mut out = Tensor::zeros(&[layout.c_x * g, oh, ow], bits);
    let m = out.mask();
    for (p, y) in ys.iter().enumerate() {
        for (coef, cp, g1, io, jo) in layout.output_entries(dims, p) {
            let ch = layout.pieces[p].channels[cp] * g + g1;
            out.data_mut()[chw_index(oh, ow, ch, io, jo)] = y.get(coef)? & m;
        }
    }
    Ok(out)
}

/// `Y[k', i', j'] = y[(offset(k') + k') HW + O + i' s W + j' s] mod 2^l`
/// for a `k = 1` layout; returns the `C_x x H' x W'` block.
pub fn extract_output_dw(y: &RingPoly, layout: &PackingLayout, dims: &ConvDims, params: &HeParams) -> Result<Tensor> {
    if layout.k != 1 {
        return Err(Error::Geometry(format!(
            "k = {} > 1, use extract_output_split",
            layout.k
        )));
    }
    extract_pieces(std::slice::from_ref(y), layout, dims, params.plain_bits)
}

/// Reassembles the block from the `k` products of a split layout.
pub fn extract_output_split(
    ys: &[RingPoly],
    layout: &PackingLayout,
    dims: &ConvDims,
    params: &HeParams,
) -> Result<Tensor> {
    extract_pieces(ys, layout, dims, params.plain_bits)
}

/// Group outputs for one block, shaped `C_x G x H' x W'`.
pub fn extract_output_group(
    ys: &[RingPoly],
    layout: &PackingLayout,
    dims: &ConvDims,
    params: &HeParams,
) -> Result<Tensor> {
    extract_pieces(ys, layout, dims, params.plain_bits)
}
