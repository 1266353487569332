//! Communication cost model and the `(C_x, C_w)` operator-tiling solver.
//!
//! Costs are layout-exact: polynomial and coefficient counts are those of the
//! executable plans in [`crate::packing`], including partial last blocks and
//! skipped all-phantom pieces. An input ciphertext costs `N q` bits and an
//! output ciphertext carrying `n` extracted coefficients costs `(N + n) q`
//! bits, each rounded up to whole bytes.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packing::{CheetahShape, IronShape};
use crate::params::HeParams;
use crate::tensor::ConvDims;

/// Bytes per reported megabyte.
pub const MB: f64 = (1u64 << 20) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    Iron,
    Cheetah,
    /// Dense packing without the tiling objective: largest input block.
    Falcon,
    /// Dense packing with the solver's tile.
    FalconTiled,
}

impl Framework {
    pub const ALL: [Framework; 4] = [
        Framework::Iron,
        Framework::Cheetah,
        Framework::Falcon,
        Framework::FalconTiled,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Framework::Iron => "iron",
            Framework::Cheetah => "cheetah",
            Framework::Falcon => "falcon",
            Framework::FalconTiled => "falcon_tiled",
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Framework::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown framework {s:?}")))
    }
}

/// A feasible `(C_x, C_w)` with objective `1/C_x + 1/C_w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileChoice {
    pub c_x: usize,
    pub c_w: usize,
    pub objective: f64,
}

impl TileChoice {
    pub fn new(c_x: usize, c_w: usize) -> Self {
        TileChoice {
            c_x,
            c_w,
            objective: 1.0 / c_x as f64 + 1.0 / c_w as f64,
        }
    }

    pub fn k(&self) -> usize {
        self.c_x / self.c_w
    }

    /// Exact comparison of objectives: `(a+b)/(ab)` cross-multiplied.
    pub fn cmp_objective(&self, other: &TileChoice) -> Ordering {
        let lhs = (self.c_x + self.c_w) as u128 * (other.c_x * other.c_w) as u128;
        let rhs = (other.c_x + other.c_w) as u128 * (self.c_x * self.c_w) as u128;
        lhs.cmp(&rhs)
    }
}

/// Tile constraints for a unit of `unit` coefficients (`G^2 HW`):
/// `C_x = k C_w`, `C_x * unit <= N`, `(C_x+2) C_w unit <= 2N + 2 unit`, and
/// `C_w` either 1 or even.
pub fn is_feasible(c_x: usize, c_w: usize, unit: usize, n: usize) -> bool {
    c_x >= 1
        && c_w >= 1
        && c_x.is_multiple_of(c_w)
        && (c_w == 1 || c_w.is_multiple_of(2))
        && c_x * unit <= n
        && (c_x + 2) * c_w * unit <= 2 * n + 2 * unit
}

fn candidates(unit: usize, n: usize) -> Result<Vec<TileChoice>> {
    if unit == 0 || unit > n {
        return Err(Error::Infeasible(format!(
            "a channel unit of {unit} coefficients does not fit N = {n}"
        )));
    }
    let max_x = n / unit;
    let mut out = Vec::new();
    for c_x in 1..=max_x {
        for c_w in 1..=c_x {
            if is_feasible(c_x, c_w, unit, n) {
                out.push(TileChoice::new(c_x, c_w));
            }
        }
    }
    Ok(out)
}

/// Minimises `1/C_x + 1/C_w` over feasible tiles for a unit of `unit`
/// coefficients; ties go to larger `C_w`, then larger `C_x`.
pub fn solve_tiling_unit(unit: usize, n: usize) -> Result<TileChoice> {
    candidates(unit, n)?
        .into_iter()
        .min_by(|a, b| a.cmp_objective(b).then(b.c_w.cmp(&a.c_w)).then(b.c_x.cmp(&a.c_x)))
        .ok_or_else(|| Error::Infeasible(format!("no tile for unit {unit} at N = {n}")))
}

/// Tile for a (group) convolution; the unit is one whole group, `G^2 HW`.
pub fn solve_tiling(dims: &ConvDims, params: &HeParams) -> Result<TileChoice> {
    solve_tiling_unit(dims.g * dims.g * dims.hw(), params.n)
}

/// Dense packing without the objective: the largest input block admitting an
/// even `C_w`, then the largest such `C_w`. Falls back to `C_w = 1`.
pub fn falcon_untiled(dims: &ConvDims, params: &HeParams) -> Result<TileChoice> {
    let all = candidates(dims.g * dims.g * dims.hw(), params.n)?;
    let key = |t: &&TileChoice| (t.c_x, t.c_w);
    all.iter()
        .filter(|t| t.c_w >= 2)
        .max_by_key(key)
        .or_else(|| all.iter().max_by_key(key))
        .copied()
        .ok_or_else(|| Error::Infeasible("no dense tile".into()))
}

/// Per-framework communication and work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub framework: Framework,
    pub dims: ConvDims,
    pub n: usize,
    pub q_bits: u32,
    pub input_poly_count: usize,
    pub output_poly_count: usize,
    /// Extracted coefficients over all output ciphertexts.
    pub output_coeffs: usize,
    pub input_bytes: usize,
    pub output_bytes: usize,
    pub poly_mult_count: usize,
    pub tile: Option<(usize, usize)>,
}

impl CostReport {
    pub fn total_bytes(&self) -> usize {
        self.input_bytes + self.output_bytes
    }

    pub fn input_mb(&self) -> f64 {
        self.input_bytes as f64 / MB
    }

    pub fn output_mb(&self) -> f64 {
        self.output_bytes as f64 / MB
    }

    pub fn total_mb(&self) -> f64 {
        self.total_bytes() as f64 / MB
    }

    /// Counts taken from an executable plan, for cross-checking the model.
    pub fn from_plan(
        framework: Framework,
        plan: &crate::packing::ConvPlan,
        params: &HeParams,
        tile: Option<(usize, usize)>,
    ) -> Self {
        let output_bytes = plan
            .outputs
            .iter()
            .map(|o| params.packed_bytes(plan.n + o.extract.len()))
            .sum();
        CostReport {
            framework,
            dims: plan.dims,
            n: plan.n,
            q_bits: params.q_bits,
            input_poly_count: plan.input_poly_count(),
            output_poly_count: plan.output_poly_count(),
            output_coeffs: plan.extracted_count(),
            input_bytes: plan.input_poly_count() * params.packed_bytes(plan.n),
            output_bytes,
            poly_mult_count: plan.mult_count(),
            tile,
        }
    }

    pub fn to_row(&self) -> CostRow {
        CostRow {
            framework: self.framework,
            h: self.dims.h,
            w: self.dims.w,
            c: self.dims.c,
            k: self.dims.k,
            r: self.dims.r,
            g: self.dims.g,
            stride: self.dims.stride,
            n: self.n,
            q_bits: self.q_bits,
            c_x: self.tile.map(|t| t.0),
            c_w: self.tile.map(|t| t.1),
            input_polys: self.input_poly_count,
            output_polys: self.output_poly_count,
            output_coeffs: self.output_coeffs,
            input_bytes: self.input_bytes,
            output_bytes: self.output_bytes,
            input_mb: self.input_mb(),
            output_mb: self.output_mb(),
            total_mb: self.total_mb(),
            mults: self.poly_mult_count,
        }
    }

    pub fn from_row(row: &CostRow) -> Result<Self> {
        let dims = ConvDims::new(row.h, row.w, row.c, row.k, row.r, row.g, row.stride)?;
        let tile = match (row.c_x, row.c_w) {
            (Some(x), Some(w)) => Some((x, w)),
            (None, None) => None,
            _ => return Err(Error::Format("c_x and c_w must both be present or absent".into())),
        };
        Ok(CostReport {
            framework: row.framework,
            dims,
            n: row.n,
            q_bits: row.q_bits,
            input_poly_count: row.input_polys,
            output_poly_count: row.output_polys,
            output_coeffs: row.output_coeffs,
            input_bytes: row.input_bytes,
            output_bytes: row.output_bytes,
            poly_mult_count: row.mults,
            tile,
        })
    }
}

/// Flat CSV form of a [`CostReport`]; the MB columns are derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub framework: Framework,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub r: usize,
    pub g: usize,
    pub stride: usize,
    pub n: usize,
    pub q_bits: u32,
    pub c_x: Option<usize>,
    pub c_w: Option<usize>,
    pub input_polys: usize,
    pub output_polys: usize,
    pub output_coeffs: usize,
    pub input_bytes: usize,
    pub output_bytes: usize,
    pub input_mb: f64,
    pub output_mb: f64,
    pub total_mb: f64,
    pub mults: usize,
}

pub fn reports_to_csv(reports: &[CostReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r.to_row())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn reports_from_csv(text: &str) -> Result<Vec<CostReport>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize::<CostRow>()
        .map(|row| CostReport::from_row(&row?))
        .collect()
}

struct Tally {
    inputs: usize,
    outputs: usize,
    coeffs: usize,
    output_bytes: usize,
    mults: usize,
}

impl Tally {
    fn new() -> Self {
        Tally {
            inputs: 0,
            outputs: 0,
            coeffs: 0,
            output_bytes: 0,
            mults: 0,
        }
    }

    /// `count` output ciphertexts of `n_out` coefficients, `terms` products each.
    fn outputs(&mut self, params: &HeParams, count: usize, n_out: usize, terms: usize) {
        self.outputs += count;
        self.coeffs += count * n_out;
        self.output_bytes += count * params.packed_bytes(params.n + n_out);
        self.mults += count * terms;
    }

    fn finish(
        self,
        framework: Framework,
        dims: &ConvDims,
        params: &HeParams,
        tile: Option<(usize, usize)>,
    ) -> CostReport {
        CostReport {
            framework,
            dims: *dims,
            n: params.n,
            q_bits: params.q_bits,
            input_poly_count: self.inputs,
            output_poly_count: self.outputs,
            output_coeffs: self.coeffs,
            input_bytes: self.inputs * params.packed_bytes(params.n),
            output_bytes: self.output_bytes,
            poly_mult_count: self.mults,
            tile,
        }
    }
}

fn iron_cost(dims: &ConvDims, params: &HeParams) -> Result<CostReport> {
    let shape = IronShape::plan(dims, params.n)?;
    let rows = dims.out_hw();
    let full = rows / shape.rows_per_poly;
    let rest = rows % shape.rows_per_poly;
    let groups = dims.groups();
    let mut t = Tally::new();
    t.inputs = groups * shape.polys_per_group;
    t.outputs(params, groups * full, shape.rows_per_poly * shape.cols, 1);
    if rest > 0 {
        t.outputs(params, groups, rest * shape.cols, 1);
    }
    Ok(t.finish(Framework::Iron, dims, params, None))
}

fn cheetah_cost(dims: &ConvDims, params: &HeParams) -> Result<CostReport> {
    let shape = CheetahShape::plan(dims, params.n)?;
    let (c_x, f, hw_out) = (shape.c_x, shape.filters_per_poly, dims.out_hw());
    let mut t = Tally::new();
    t.inputs = shape.n_x;
    if dims.g <= c_x {
        // Groups never straddle blocks: each block owns its groups' filters.
        for b in 0..shape.n_x {
            let channels = (dims.c - b * c_x).min(c_x);
            let filters = channels / dims.g * dims.filters_per_group();
            t.outputs(params, filters / f, f * hw_out, 1);
            if !filters.is_multiple_of(f) {
                t.outputs(params, 1, (filters % f) * hw_out, 1);
            }
        }
    } else {
        t.outputs(params, dims.k / f, f * hw_out, shape.n_x);
        if !dims.k.is_multiple_of(f) {
            t.outputs(params, 1, (dims.k % f) * hw_out, shape.n_x);
        }
    }
    Ok(t.finish(Framework::Cheetah, dims, params, None))
}

/// Real filters in piece `kappa` of a block holding `real` of its `c_x` units.
fn piece_real_filters(c_x: usize, c_w: usize, kappa: usize, real: usize) -> usize {
    let count = |lo: usize, hi: usize| hi.min(real).saturating_sub(lo);
    if c_w == 1 {
        return usize::from(kappa < real);
    }
    let half = c_w / 2;
    let p0 = kappa * half;
    count(p0, p0 + half) + count(c_x - p0 - half, c_x - p0)
}

fn falcon_cost(framework: Framework, dims: &ConvDims, params: &HeParams, tile: TileChoice) -> Result<CostReport> {
    let (c_x, c_w) = (tile.c_x, tile.c_w);
    let unit = dims.g * dims.g * dims.hw();
    if !is_feasible(c_x, c_w, unit, params.n) {
        return Err(Error::Infeasible(format!(
            "tile ({c_x}, {c_w}) violates the capacity constraints for a unit of {unit} at N = {}",
            params.n
        )));
    }
    if dims.k != dims.c {
        return Err(Error::Geometry("dense packing needs K = C".into()));
    }
    let units = dims.c / dims.g;
    let per_filter = dims.g * dims.out_hw();
    let n_x = units.div_ceil(c_x);
    let mut t = Tally::new();
    t.inputs = n_x;
    for b in 0..n_x {
        let real = (units - b * c_x).min(c_x);
        let pieces = if c_w == 1 { c_x } else { c_x / c_w };
        for kappa in 0..pieces {
            let filters = piece_real_filters(c_x, c_w, kappa, real);
            if filters > 0 {
                t.outputs(params, 1, filters * per_filter, 1);
            }
        }
    }
    Ok(t.finish(framework, dims, params, Some((c_x, c_w))))
}

/// Communication model for one framework. `tile` overrides the solver's choice
/// for the dense frameworks.
pub fn comm_cost(
    framework: Framework,
    dims: &ConvDims,
    params: &HeParams,
    tile: Option<TileChoice>,
) -> Result<CostReport> {
    dims.validate()?;
    params.validate()?;
    if dims.hw() > params.n {
        return Err(Error::Infeasible(format!(
            "HW = {} exceeds N = {}",
            dims.hw(),
            params.n
        )));
    }
    match framework {
        Framework::Iron => iron_cost(dims, params),
        Framework::Cheetah => cheetah_cost(dims, params),
        Framework::Falcon => {
            let t = match tile {
                Some(t) => t,
                None => falcon_untiled(dims, params)?,
            };
            falcon_cost(framework, dims, params, t)
        }
        Framework::FalconTiled => {
            let t = match tile {
                Some(t) => t,
                None => solve_tiling(dims, params)?,
            };
            falcon_cost(framework, dims, params, t)
        }
    }
}

/// The executable plan behind a framework's cost row.
pub fn plan_for(
    framework: Framework,
    dims: &ConvDims,
    params: &HeParams,
    tile: Option<TileChoice>,
) -> Result<crate::packing::ConvPlan> {
    use crate::packing::{cheetah_plan, falcon_plan, iron_plan, PackingLayout};
    match framework {
        Framework::Iron => iron_plan(dims, params.n),
        Framework::Cheetah => cheetah_plan(dims, params.n),
        Framework::Falcon | Framework::FalconTiled => {
            let t = match (tile, framework) {
                (Some(t), _) => t,
                (None, Framework::Falcon) => falcon_untiled(dims, params)?,
                (None, _) => solve_tiling(dims, params)?,
            };
            let layout = PackingLayout::falcon_group(dims, params.n, t.c_x, t.c_w)?;
            falcon_plan(dims, &layout)
        }
    }
}
