//! Integer tensors over `Z_{2^l}` and the plaintext reference convolutions.
//!
//! Everything downstream (packings, protocol, CLI) is checked against
//! [`conv2d_reference`]. Layout is row-major with the channel as the outermost
//! convolutional axis, so element `X[c, i, j]` lives at `c*H*W + i*W + j`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::mask;

/// Geometry of a (grouped) 2-D convolution.
///
/// `g` is the number of input channels each filter sees: `g == 1, k == c`
/// is depthwise, `g == c` is a standard convolution. Padding is always
/// "valid"; callers pad inputs explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvDims {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    /// Kernel size (square).
    pub r: usize,
    /// Group size.
    pub g: usize,
    pub stride: usize,
}

impl ConvDims {
    pub fn depthwise(h: usize, w: usize, c: usize, r: usize, stride: usize) -> Result<Self> {
        Self::new(h, w, c, c, r, 1, stride)
    }

    /// Group convolution with `c / g` groups of `g` filters each.
    pub fn grouped(h: usize, w: usize, c: usize, r: usize, g: usize, stride: usize) -> Result<Self> {
        Self::new(h, w, c, c, r, g, stride)
    }

    pub fn standard(h: usize, w: usize, c: usize, k: usize, r: usize, stride: usize) -> Result<Self> {
        Self::new(h, w, c, k, r, c, stride)
    }

    pub fn new(h: usize, w: usize, c: usize, k: usize, r: usize, g: usize, stride: usize) -> Result<Self> {
        let dims = ConvDims {
            h,
            w,
            c,
            k,
            r,
            g,
            stride,
        };
        dims.validate()?;
        Ok(dims)
    }

    /// A benchmark row `(H, C, R)`: square activation of resolution `H`,
    /// same-padded to `H + R - 1`, stride 1, so the output is `H x H`.
    pub fn same_padded(h: usize, c: usize, r: usize, g: usize) -> Result<Self> {
        let side = h + r - 1;
        Self::new(side, side, c, c, r, g, 1)
    }

    pub fn validate(&self) -> Result<()> {
        let ConvDims {
            h,
            w,
            c,
            k,
            r,
            g,
            stride,
        } = *self;
        if c == 0 || k == 0 || r == 0 {
            return Err(Error::Geometry(format!("zero extent in {self:?}")));
        }
        if h < r || w < r {
            return Err(Error::Geometry(format!("input {h}x{w} smaller than kernel {r}")));
        }
        if stride == 0 || g == 0 {
            return Err(Error::Geometry("stride and group size must be >= 1".into()));
        }
        if c % g != 0 {
            return Err(Error::Geometry(format!("group size {g} does not divide C = {c}")));
        }
        if k % (c / g) != 0 {
            return Err(Error::Geometry(format!(
                "K = {k} is not a multiple of the group count {}",
                c / g
            )));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.h - self.r) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w - self.r) / self.stride + 1
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn out_hw(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn groups(&self) -> usize {
        self.c / self.g
    }

    pub fn filters_per_group(&self) -> usize {
        self.k / self.groups()
    }

    pub fn is_depthwise(&self) -> bool {
        self.g == 1 && self.k == self.c
    }

    /// `W*(R-1) + R-1`, the in-channel anchor shared by every coefficient mapping.
    pub fn anchor(&self) -> usize {
        self.w * (self.r - 1) + self.r - 1
    }

    pub fn input_shape(&self) -> Vec<usize> {
        vec![self.c, self.h, self.w]
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.k, self.g, self.r, self.r]
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.k, self.out_h(), self.out_w()]
    }

    /// Input channel seen by filter `k` at in-group position `g`.
    pub fn input_channel(&self, k: usize, g: usize) -> usize {
        (k / self.filters_per_group()) * self.g + g
    }
}

/// Dense tensor of residues modulo `2^bits`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    bits: u32,
    data: Vec<u64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize], bits: u32) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            bits,
            data: vec![0; len],
        }
    }

    pub fn from_vec(shape: &[usize], bits: u32, data: Vec<u64>) -> Result<Self> {
        let t = Tensor {
            shape: shape.to_vec(),
            bits,
            data,
        };
        t.validate()?;
        Ok(t)
    }

    /// Uniform residues in `[0, 2^bits)`.
    pub fn random<R: Rng + ?Sized>(shape: &[usize], bits: u32, rng: &mut R) -> Self {
        let m = mask(bits);
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            bits,
            data: (0..len).map(|_| rng.gen::<u64>() & m).collect(),
        }
    }

    /// Residues of signed integers drawn uniformly from `[-bound, bound]`.
    pub fn random_signed<R: Rng + ?Sized>(shape: &[usize], bits: u32, bound: i64, rng: &mut R) -> Self {
        let m = mask(bits);
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            bits,
            data: (0..len).map(|_| (rng.gen_range(-bound..=bound) as u64) & m).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 64 {
            return Err(Error::Dimension(format!("bit width {} not in 1..=64", self.bits)));
        }
        let len: usize = self.shape.iter().product();
        if len != self.data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} needs {} elements, got {}",
                self.shape,
                len,
                self.data.len()
            )));
        }
        let m = mask(self.bits);
        if let Some(pos) = self.data.iter().position(|&v| v & !m != 0) {
            return Err(Error::Dimension(format!(
                "element {pos} = {} exceeds 2^{}",
                self.data[pos], self.bits
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mask(&self) -> u64 {
        mask(self.bits)
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &extent)| {
            debug_assert!(i < extent);
            acc * extent + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> u64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: u64) {
        let off = self.offset(idx);
        self.data[off] = value & mask(self.bits);
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn check_same(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape || self.bits != other.bits {
            return Err(Error::Dimension(format!(
                "{:?}/{} vs {:?}/{}",
                self.shape, self.bits, other.shape, other.bits
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same(other)?;
        let m = self.mask();
        Ok(Tensor {
            shape: self.shape.clone(),
            bits: self.bits,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.wrapping_add(*b) & m)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same(other)?;
        let m = self.mask();
        Ok(Tensor {
            shape: self.shape.clone(),
            bits: self.bits,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.wrapping_sub(*b) & m)
                .collect(),
        })
    }

    /// Channels `[start, start + count)` of a `C x H x W` tensor. Channels past
    /// the end read as zero, which is how partial packing blocks are padded.
    pub fn channel_block(&self, start: usize, count: usize) -> Result<Tensor> {
        if self.shape.len() < 2 {
            return Err(Error::Dimension("channel_block needs rank >= 2".into()));
        }
        let per: usize = self.shape[1..].iter().product();
        let channels = self.shape[0];
        let mut shape = self.shape.clone();
        shape[0] = count;
        let mut out = Tensor::zeros(&shape, self.bits);
        let end = (start + count).min(channels);
        if start < end {
            let src = &self.data[start * per..end * per];
            out.data[..src.len()].copy_from_slice(src);
        }
        Ok(out)
    }

    /// Binary form: little-endian u64 words `rank, extents.., bits, residues..`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (2 + self.shape.len() + self.data.len()));
        out.extend_from_slice(&(self.shape.len() as u64).to_le_bytes());
        for &e in &self.shape {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.bits as u64).to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Tensor> {
        let mut words = WordReader::new(bytes)?;
        let rank = words.next()? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("tensor rank {rank} too large")));
        }
        let shape = (0..rank)
            .map(|_| words.next().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let bits = words.next()? as u32;
        let len: usize = shape.iter().product();
        if words.remaining() != len {
            return Err(Error::Format(format!(
                "expected {len} residues, found {}",
                words.remaining()
            )));
        }
        let data = (0..len).map(|_| words.next()).collect::<Result<Vec<_>>>()?;
        Tensor::from_vec(&shape, bits, data).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Tensor> {
        let t: Tensor = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }
}

pub(crate) struct WordReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> WordReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::Format(format!(
                "{} bytes is not a whole number of u64 words",
                bytes.len()
            )));
        }
        Ok(WordReader { bytes, pos: 0 })
    }

    pub(crate) fn next(&mut self) -> Result<u64> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 8)
            .ok_or_else(|| Error::Format("truncated input".into()))?;
        self.pos += 8;
        Ok(u64::from_le_bytes(chunk.try_into().expect("8-byte chunk")))
    }

    pub(crate) fn remaining(&self) -> usize {
        (self.bytes.len() - self.pos) / 8
    }
}

fn check_conv_shapes(x: &Tensor, w: &Tensor, dims: &ConvDims) -> Result<()> {
    dims.validate()?;
    if x.shape() != dims.input_shape().as_slice() {
        return Err(Error::Dimension(format!(
            "input shape {:?}, expected {:?}",
            x.shape(),
            dims.input_shape()
        )));
    }
    if w.shape() != dims.weight_shape().as_slice() {
        return Err(Error::Dimension(format!(
            "weight shape {:?}, expected {:?}",
            w.shape(),
            dims.weight_shape()
        )));
    }
    if x.bits() != w.bits() {
        return Err(Error::Dimension(format!(
            "bit widths differ: {} vs {}",
            x.bits(),
            w.bits()
        )));
    }
    Ok(())
}

/// Grouped cross-correlation with valid padding, all arithmetic mod `2^l`.
///
/// `x` is `C x H x W`, `w` is `K x G x R x R`; the result is `K x H' x W'`.
pub fn conv2d_reference(x: &Tensor, w: &Tensor, dims: &ConvDims) -> Result<Tensor> {
    check_conv_shapes(x, w, dims)?;
    let (h, wd, r, s, g) = (dims.h, dims.w, dims.r, dims.stride, dims.g);
    let (oh, ow) = (dims.out_h(), dims.out_w());
    let xd = x.data();
    let wdat = w.data();
    let mut out = Tensor::zeros(&dims.output_shape(), x.bits());
    let m = out.mask();
    for k in 0..dims.k {
        for oi in 0..oh {
            for oj in 0..ow {
                let mut acc = 0u64;
                for gi in 0..g {
                    let ch = dims.input_channel(k, gi);
                    let xbase = ch * h * wd;
                    let wbase = (k * g + gi) * r * r;
                    for l in 0..r {
                        let row = xbase + (oi * s + l) * wd + oj * s;
                        let wrow = wbase + l * r;
                        for lp in 0..r {
                            acc = acc.wrapping_add(xd[row + lp].wrapping_mul(wdat[wrow + lp]));
                        }
                    }
                }
                out.data[(k * oh + oi) * ow + oj] = acc & m;
            }
        }
    }
    Ok(out)
}

/// Expands depthwise weights `C x 1 x R x R` into the equivalent standard
/// convolution weights `C x C x R x R` with zero off-diagonal channels.
pub fn pad_depthwise_to_standard(w: &Tensor, dims: &ConvDims) -> Result<Tensor> {
    if !dims.is_depthwise() {
        return Err(Error::Geometry(
            "pad_depthwise_to_standard needs a depthwise geometry".into(),
        ));
    }
    let (c, r) = (dims.c, dims.r);
    if w.shape() != [c, 1, r, r] {
        return Err(Error::Dimension(format!(
            "weight shape {:?}, expected {:?}",
            w.shape(),
            [c, 1, r, r]
        )));
    }
    let rr = r * r;
    let mut out = Tensor::zeros(&[c, c, r, r], w.bits());
    for i in 0..c {
        let dst = (i * c + i) * rr;
        out.data[dst..dst + rr].copy_from_slice(&w.data()[i * rr..(i + 1) * rr]);
    }
    Ok(out)
}

/// Lowers one group slice `G x H x W` to the `H'W' x G R^2` patch matrix.
/// Row `i' W' + j'` lists the receptive field channel-major.
pub fn im2col(x: &Tensor, dims: &ConvDims) -> Result<Tensor> {
    let (g, h, w, r, s) = (dims.g, dims.h, dims.w, dims.r, dims.stride);
    if x.shape() != [g, h, w] {
        return Err(Error::Dimension(format!(
            "im2col input {:?}, expected {:?}",
            x.shape(),
            [g, h, w]
        )));
    }
    let (oh, ow) = (dims.out_h(), dims.out_w());
    let cols = g * r * r;
    let mut out = Tensor::zeros(&[oh * ow, cols], x.bits());
    let xd = x.data();
    for oi in 0..oh {
        for oj in 0..ow {
            let row = (oi * ow + oj) * cols;
            for gi in 0..g {
                for l in 0..r {
                    for lp in 0..r {
                        out.data[row + (gi * r + l) * r + lp] = xd[(gi * h + oi * s + l) * w + oj * s + lp];
                    }
                }
            }
        }
    }
    Ok(out)
}
