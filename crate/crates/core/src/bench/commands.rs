use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{published_mb, thread_pool, BenchConfig, BenchEntry};
use crate::error::{Error, Result};
use crate::packing::PackingLayout;
use crate::params::HeParams;
use crate::protocol::{reconstruct, run_session, share, Backend, ProtocolTranscript, SessionConfig};
use crate::tensor::{conv2d_reference, ConvDims, Tensor};
use crate::tiling::{comm_cost, falcon_untiled, plan_for, solve_tiling, CostReport, Framework, TileChoice};

/// Magnitude bound of generated weights: signed 8-bit values, which keep the
/// RLWE noise inside its budget for every layout.
pub const WEIGHT_BOUND: i64 = 127;

fn first_mismatch(got: &Tensor, want: &Tensor) -> Option<usize> {
    got.data().iter().zip(want.data()).position(|(a, b)| a != b)
}

fn random_operands(dims: &ConvDims, params: &HeParams, rng: &mut ChaCha20Rng) -> (Tensor, Tensor) {
    let x = Tensor::random(&dims.input_shape(), params.plain_bits, rng);
    let w = Tensor::random_signed(&dims.weight_shape(), params.plain_bits, WEIGHT_BOUND, rng);
    (x, w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub dims: ConvDims,
    pub n: usize,
    pub framework: Framework,
    pub backend: Backend,
    pub seed: u64,
    pub tile: Option<(usize, usize)>,
    pub outputs: usize,
    pub packing_first_mismatch: Option<usize>,
    pub protocol_first_mismatch: Option<usize>,
    pub transcript: ProtocolTranscript,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.packing_first_mismatch.is_none() && self.protocol_first_mismatch.is_none()
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            1
        }
    }
}

/// Checks the plaintext pipeline (pack, multiply, extract) and a full secure
/// session against the reference convolution on random operands.
pub fn cmd_verify(
    dims: &ConvDims,
    params: &HeParams,
    framework: Framework,
    backend: Backend,
    seed: u64,
) -> Result<VerifyReport> {
    dims.validate()?;
    params.validate()?;
    if dims.hw() > params.n {
        return Err(Error::Infeasible(format!(
            "HW = {} exceeds N = {}",
            dims.hw(),
            params.n
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (x, w) = random_operands(dims, params, &mut rng);
    let want = conv2d_reference(&x, &w, dims)?;

    let plan = plan_for(framework, dims, params, None)?;
    let plain = plan.evaluate_plain(&x, &w, params.q_bits)?;

    let (c, s) = share(&x, &mut rng);
    let mut config = SessionConfig::new(*params, backend, seed);
    config.framework = framework;
    let (yc, ys, transcript) = run_session(&config, c, s, &w, dims)?;
    let secure = reconstruct(&yc, &ys)?;

    Ok(VerifyReport {
        dims: *dims,
        n: params.n,
        framework,
        backend,
        seed,
        tile: transcript.tile,
        outputs: want.len(),
        packing_first_mismatch: first_mismatch(&plain, &want),
        protocol_first_mismatch: first_mismatch(&secure, &want),
        transcript,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileReport {
    pub dims: ConvDims,
    pub n: usize,
    pub tile: TileChoice,
    pub k: usize,
    pub n_x: usize,
    pub n_w: usize,
    pub pieces: usize,
    pub piece_span: usize,
    pub utilization: f64,
    pub untiled: TileChoice,
    pub tiled_cost: CostReport,
    pub untiled_cost: CostReport,
}

/// The solver's tile, the layout it implies, and the untiled alternative.
pub fn cmd_tile(dims: &ConvDims, params: &HeParams) -> Result<TileReport> {
    dims.validate()?;
    params.validate()?;
    let tile = solve_tiling(dims, params)?;
    let untiled = falcon_untiled(dims, params)?;
    let layout = PackingLayout::falcon_group(dims, params.n, tile.c_x, tile.c_w)?;
    Ok(TileReport {
        dims: *dims,
        n: params.n,
        tile,
        k: tile.k(),
        n_x: layout.n_x,
        n_w: layout.n_w,
        pieces: layout.pieces.len(),
        piece_span: layout.closed_form_span(),
        utilization: layout.utilization(),
        untiled,
        tiled_cost: comm_cost(Framework::FalconTiled, dims, params, Some(tile))?,
        untiled_cost: comm_cost(Framework::Falcon, dims, params, Some(untiled))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub entry: String,
    pub report: CostReport,
    /// Published figure for this entry and framework, if the entry names one.
    pub published_mb: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub entry: String,
    pub framework: Option<Framework>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    /// Entries or frameworks the model rejects as infeasible.
    pub skipped: Vec<Skipped>,
}

impl CompareReport {
    pub fn find(&self, entry: &str, framework: Framework) -> Option<&CompareRow> {
        self.rows
            .iter()
            .find(|r| r.entry == entry && r.report.framework == framework)
    }

    /// `cheetah / falcon_tiled` total communication for one entry.
    pub fn cheetah_ratio(&self, entry: &str) -> Option<f64> {
        let ch = self.find(entry, Framework::Cheetah)?;
        let ft = self.find(entry, Framework::FalconTiled)?;
        Some(ch.report.total_bytes() as f64 / ft.report.total_bytes() as f64)
    }
}

fn compare_entry(entry: &BenchEntry) -> Result<(Vec<CompareRow>, Vec<Skipped>)> {
    let label = entry.label();
    let dims = entry.conv_dims()?;
    let params = entry.params()?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    if entry.expect_reject {
        let err = comm_cost(Framework::Cheetah, &dims, &params, None)
            .err()
            .ok_or_else(|| Error::Config(format!("{label}: expected rejection but the model accepted it")))?;
        skipped.push(Skipped {
            entry: label,
            framework: None,
            reason: err.to_string(),
        });
        return Ok((rows, skipped));
    }
    for &framework in &entry.frameworks {
        match comm_cost(framework, &dims, &params, None) {
            Ok(report) => rows.push(CompareRow {
                entry: label.clone(),
                published_mb: entry
                    .published
                    .as_ref()
                    .and_then(|k| published_mb(&k.table, &k.row, framework)),
                report,
            }),
            Err(e @ (Error::Infeasible(_) | Error::Capacity { .. })) => skipped.push(Skipped {
                entry: label.clone(),
                framework: Some(framework),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok((rows, skipped))
}

/// Cost model rows for every entry and framework, in config order. Entries
/// are evaluated in parallel on a pool capped by `FALCONPACK_THREADS`.
pub fn cmd_compare(config: &BenchConfig) -> Result<CompareReport> {
    config.validate()?;
    let pool = thread_pool()?;
    let parts: Vec<_> = pool.install(|| config.entries.par_iter().map(compare_entry).collect::<Result<Vec<_>>>())?;
    let mut report = CompareReport {
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for (rows, skipped) in parts {
        report.rows.extend(rows);
        report.skipped.extend(skipped);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub pass: bool,
    pub first_mismatch: Option<usize>,
    pub transcript: ProtocolTranscript,
    pub model: CostReport,
}

impl SimulateReport {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// One secure session on random operands, with its transcript next to the
/// cost model's prediction.
pub fn cmd_simulate(
    dims: &ConvDims,
    params: &HeParams,
    framework: Framework,
    backend: Backend,
    seed: u64,
) -> Result<SimulateReport> {
    dims.validate()?;
    params.validate()?;
    let model = comm_cost(framework, dims, params, None)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (x, w) = random_operands(dims, params, &mut rng);
    let (c, s) = share(&x, &mut rng);
    let mut config = SessionConfig::new(*params, backend, seed);
    config.framework = framework;
    let (yc, ys, transcript) = run_session(&config, c, s, &w, dims)?;
    let mismatch = first_mismatch(&reconstruct(&yc, &ys)?, &conv2d_reference(&x, &w, dims)?);
    Ok(SimulateReport {
        pass: mismatch.is_none(),
        first_mismatch: mismatch,
        transcript,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_small_passes() {
        let dims = ConvDims::depthwise(5, 5, 4, 3, 1).unwrap();
        let params = HeParams::with_degree(2048).unwrap();
        for framework in Framework::ALL {
            let r = cmd_verify(&dims, &params, framework, Backend::Rlwe, 1).unwrap();
            assert!(r.pass(), "{framework:?}");
            assert_eq!(r.exit_code(), 0);
        }
    }

    #[test]
    fn verify_rejects_oversized_input() {
        let dims = ConvDims::depthwise(64, 64, 4, 3, 1).unwrap();
        let err = cmd_verify(
            &dims,
            &HeParams::with_degree(2048).unwrap(),
            Framework::FalconTiled,
            Backend::Ideal,
            1,
        )
        .unwrap_err();
        assert_eq!(super::super::exit_code(&err), 2);
    }

    #[test]
    fn tile_report_for_known_row() {
        let dims = ConvDims::same_padded(14, 576, 3, 1).unwrap();
        let r = cmd_tile(&dims, &HeParams::default()).unwrap();
        assert_eq!((r.tile.c_x, r.tile.c_w), (4, 4));
        assert_eq!(r.n_x, 144);
        assert!(r.tiled_cost.total_bytes() <= r.untiled_cost.total_bytes());
    }

    #[test]
    fn compare_keeps_config_order_and_skips_infeasible() {
        let cfg = BenchConfig::preset("groups").unwrap();
        let r = cmd_compare(&cfg).unwrap();
        let entries: Vec<&str> = r.rows.iter().map(|row| row.entry.as_str()).collect();
        let mut sorted_by_config = entries.clone();
        sorted_by_config.dedup();
        assert_eq!(sorted_by_config.len(), 4);
        assert!(r.skipped.iter().any(|s| s.framework == Some(Framework::FalconTiled)));
        let again = cmd_compare(&cfg).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn simulate_matches_model() {
        let dims = ConvDims::depthwise(6, 6, 8, 3, 1).unwrap();
        let r = cmd_simulate(
            &dims,
            &HeParams::with_degree(2048).unwrap(),
            Framework::FalconTiled,
            Backend::Ideal,
            3,
        )
        .unwrap();
        assert!(r.pass);
        assert_eq!(r.transcript.input_ciphertext_bytes, r.model.input_bytes);
        assert_eq!(r.transcript.output_ciphertext_bytes, r.model.output_bytes);
        assert_eq!(r.transcript.hom_mul_plain, r.model.poly_mult_count);
    }
}
