use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::commands::{CompareReport, SimulateReport, TileReport, VerifyReport};
use super::OutputFormat;
use crate::error::{Error, Result};
use crate::tiling::{CostReport, CostRow, Framework};

const SIM_NOTE: &str = "note: simulation-grade RLWE parameters, no security level is claimed";

/// Text output of a command in one of the supported formats.
pub trait Render {
    fn render(&self, format: OutputFormat) -> Result<String>;
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn csv_rows<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn tile_str(tile: Option<(usize, usize)>) -> String {
    tile.map(|(x, w)| format!("{x},{w}")).unwrap_or_else(|| "-".into())
}

/// Left-aligned first column, right-aligned numbers.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            width[i] = width[i].max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = width[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = width[i]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(
        width
            .iter()
            .map(|&w| "-".repeat(w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

/// One CSV line of `compare`: the entry label, the cost row and the
/// published figure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CompareCsv {
    entry: String,
    framework: Framework,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    r: usize,
    g: usize,
    stride: usize,
    n: usize,
    q_bits: u32,
    c_x: Option<usize>,
    c_w: Option<usize>,
    input_polys: usize,
    output_polys: usize,
    output_coeffs: usize,
    input_bytes: usize,
    output_bytes: usize,
    input_mb: f64,
    output_mb: f64,
    total_mb: f64,
    mults: usize,
    published_mb: Option<f64>,
}

impl CompareCsv {
    fn new(entry: &str, row: CostRow, published_mb: Option<f64>) -> Self {
        CompareCsv {
            entry: entry.to_string(),
            framework: row.framework,
            h: row.h,
            w: row.w,
            c: row.c,
            k: row.k,
            r: row.r,
            g: row.g,
            stride: row.stride,
            n: row.n,
            q_bits: row.q_bits,
            c_x: row.c_x,
            c_w: row.c_w,
            input_polys: row.input_polys,
            output_polys: row.output_polys,
            output_coeffs: row.output_coeffs,
            input_bytes: row.input_bytes,
            output_bytes: row.output_bytes,
            input_mb: row.input_mb,
            output_mb: row.output_mb,
            total_mb: row.total_mb,
            mults: row.mults,
            published_mb,
        }
    }

    fn cost_row(&self) -> CostRow {
        CostRow {
            framework: self.framework,
            h: self.h,
            w: self.w,
            c: self.c,
            k: self.k,
            r: self.r,
            g: self.g,
            stride: self.stride,
            n: self.n,
            q_bits: self.q_bits,
            c_x: self.c_x,
            c_w: self.c_w,
            input_polys: self.input_polys,
            output_polys: self.output_polys,
            output_coeffs: self.output_coeffs,
            input_bytes: self.input_bytes,
            output_bytes: self.output_bytes,
            input_mb: self.input_mb,
            output_mb: self.output_mb,
            total_mb: self.total_mb,
            mults: self.mults,
        }
    }
}

impl CompareReport {
    /// Parses the `csv` rendering back; skipped entries are not part of it.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let rows = rd
            .deserialize::<CompareCsv>()
            .map(|r| {
                let r = r?;
                Ok(super::CompareRow {
                    entry: r.entry.clone(),
                    report: CostReport::from_row(&r.cost_row())?,
                    published_mb: r.published_mb,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompareReport {
            rows,
            skipped: Vec::new(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl Render for CompareReport {
    fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => json(self),
            OutputFormat::Csv => csv_rows(
                &self
                    .rows
                    .iter()
                    .map(|r| CompareCsv::new(&r.entry, r.report.to_row(), r.published_mb))
                    .collect::<Vec<_>>(),
            ),
            OutputFormat::Table => {
                let rows: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let c = &r.report;
                        vec![
                            r.entry.clone(),
                            c.framework.as_str().to_string(),
                            tile_str(c.tile),
                            c.input_poly_count.to_string(),
                            c.output_poly_count.to_string(),
                            format!("{:.2}", c.input_mb()),
                            format!("{:.2}", c.output_mb()),
                            format!("{:.2}", c.total_mb()),
                            c.poly_mult_count.to_string(),
                            r.published_mb.map(|m| format!("{m:.2}")).unwrap_or_else(|| "-".into()),
                        ]
                    })
                    .collect();
                let mut out = table(
                    &[
                        "entry",
                        "framework",
                        "tile",
                        "in polys",
                        "out polys",
                        "in MB",
                        "out MB",
                        "total MB",
                        "mults",
                        "published MB",
                    ],
                    &rows,
                );
                let mut entries: Vec<&str> = self.rows.iter().map(|r| r.entry.as_str()).collect();
                entries.dedup();
                let ratios: Vec<String> = entries
                    .iter()
                    .filter_map(|e| {
                        let model = self.cheetah_ratio(e)?;
                        let ch = self.find(e, Framework::Cheetah)?.published_mb;
                        let ft = self.find(e, Framework::FalconTiled)?.published_mb;
                        Some(match ch.zip(ft) {
                            Some((a, b)) => format!("{e}: cheetah/falcon_tiled {model:.2} (published {:.2})\n", a / b),
                            None => format!("{e}: cheetah/falcon_tiled {model:.2}\n"),
                        })
                    })
                    .collect();
                if !ratios.is_empty() {
                    out += "\n";
                    out += &ratios.concat();
                }
                for s in &self.skipped {
                    let fw = s.framework.map(|f| f.as_str()).unwrap_or("all");
                    let _ = writeln!(out, "skipped {} [{fw}]: {}", s.entry, s.reason);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Serialize)]
struct VerifyCsv<'a> {
    framework: &'a str,
    backend: String,
    h: usize,
    w: usize,
    c: usize,
    r: usize,
    g: usize,
    n: usize,
    seed: u64,
    outputs: usize,
    packing_pass: bool,
    protocol_pass: bool,
}

impl Render for VerifyReport {
    fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => json(self),
            OutputFormat::Csv => csv_rows(&[VerifyCsv {
                framework: self.framework.as_str(),
                backend: self.backend.to_string(),
                h: self.dims.h,
                w: self.dims.w,
                c: self.dims.c,
                r: self.dims.r,
                g: self.dims.g,
                n: self.n,
                seed: self.seed,
                outputs: self.outputs,
                packing_pass: self.packing_first_mismatch.is_none(),
                protocol_pass: self.protocol_first_mismatch.is_none(),
            }]),
            OutputFormat::Table => {
                let d = &self.dims;
                let mut out = format!(
                    "verify {} on {}x{}x{} R={} G={} s={} N={} tile {} seed {}\n",
                    self.framework.as_str(),
                    d.c,
                    d.h,
                    d.w,
                    d.r,
                    d.g,
                    d.stride,
                    self.n,
                    tile_str(self.tile),
                    self.seed
                );
                let line = |what: &str, m: Option<usize>| match m {
                    None => format!("{what}: PASS ({} outputs)\n", self.outputs),
                    Some(i) => format!("{what}: FAIL (first mismatch at output {i})\n"),
                };
                out += &line("pack-multiply-extract", self.packing_first_mismatch);
                out += &line(
                    &format!("secure session [{}]", self.backend),
                    self.protocol_first_mismatch,
                );
                out += if self.pass() { "PASS\n" } else { "FAIL\n" };
                out += SIM_NOTE;
                out += "\n";
                Ok(out)
            }
        }
    }
}

impl Render for TileReport {
    fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => json(self),
            OutputFormat::Csv => csv_rows(&[self.tiled_cost.to_row(), self.untiled_cost.to_row()]),
            OutputFormat::Table => {
                let d = &self.dims;
                let mut out = format!("{}x{}x{} R={} G={} N={}\n", d.c, d.h, d.w, d.r, d.g, self.n);
                let _ = writeln!(
                    out,
                    "tile C_x={} C_w={} k={} objective {:.4}",
                    self.tile.c_x, self.tile.c_w, self.k, self.tile.objective
                );
                let _ = writeln!(
                    out,
                    "input polys {}  weight polys {}  pieces per block {}  piece span {} units  utilization {:.3}",
                    self.n_x, self.n_w, self.pieces, self.piece_span, self.utilization
                );
                let _ = writeln!(
                    out,
                    "tiled   {:>8.2} MB  (in {:.2}, out {:.2})",
                    self.tiled_cost.total_mb(),
                    self.tiled_cost.input_mb(),
                    self.tiled_cost.output_mb()
                );
                let _ = writeln!(
                    out,
                    "untiled {:>8.2} MB  (C_x={} C_w={})",
                    self.untiled_cost.total_mb(),
                    self.untiled.c_x,
                    self.untiled.c_w
                );
                Ok(out)
            }
        }
    }
}

#[derive(Serialize)]
struct SimulateCsv<'a> {
    framework: &'a str,
    backend: String,
    seed: u64,
    pass: bool,
    client_to_server_bytes: usize,
    server_to_client_bytes: usize,
    input_ciphertext_bytes: usize,
    output_ciphertext_bytes: usize,
    model_input_bytes: usize,
    model_output_bytes: usize,
    input_messages: usize,
    output_messages: usize,
    hom_mul_plain: usize,
    lwe_ciphertexts: usize,
    max_noise_bits: f64,
}

impl Render for SimulateReport {
    fn render(&self, format: OutputFormat) -> Result<String> {
        let t = &self.transcript;
        match format {
            OutputFormat::Json => json(self),
            OutputFormat::Csv => csv_rows(&[SimulateCsv {
                framework: t.framework.as_str(),
                backend: t.backend.to_string(),
                seed: t.seeds.session,
                pass: self.pass,
                client_to_server_bytes: t.client_to_server_bytes,
                server_to_client_bytes: t.server_to_client_bytes,
                input_ciphertext_bytes: t.input_ciphertext_bytes,
                output_ciphertext_bytes: t.output_ciphertext_bytes,
                model_input_bytes: self.model.input_bytes,
                model_output_bytes: self.model.output_bytes,
                input_messages: t.input_messages,
                output_messages: t.output_messages,
                hom_mul_plain: t.hom_mul_plain,
                lwe_ciphertexts: t.lwe_ciphertexts,
                max_noise_bits: t.max_noise_bits,
            }]),
            OutputFormat::Table => {
                let d = &t.dims;
                let mut out = format!(
                    "simulate {} [{}] {}x{}x{} R={} G={} N={} tile {} seed {}\n",
                    t.framework.as_str(),
                    t.backend,
                    d.c,
                    d.h,
                    d.w,
                    d.r,
                    d.g,
                    t.params.n,
                    tile_str(t.tile),
                    t.seeds.session
                );
                let rows = vec![
                    vec![
                        "client -> server".into(),
                        t.input_messages.to_string(),
                        t.client_to_server_bytes.to_string(),
                        t.input_ciphertext_bytes.to_string(),
                        self.model.input_bytes.to_string(),
                    ],
                    vec![
                        "server -> client".into(),
                        t.output_messages.to_string(),
                        t.server_to_client_bytes.to_string(),
                        t.output_ciphertext_bytes.to_string(),
                        self.model.output_bytes.to_string(),
                    ],
                ];
                out += &table(
                    &["direction", "messages", "bytes", "ciphertext bytes", "model bytes"],
                    &rows,
                );
                let _ = writeln!(
                    out,
                    "hom ops: {} add-plain, {} mul-plain, {} add; {} LWE ciphertexts",
                    t.hom_add_plain, t.hom_mul_plain, t.hom_add, t.lwe_ciphertexts
                );
                if t.backend == crate::protocol::Backend::Rlwe {
                    let _ = writeln!(
                        out,
                        "max noise bound 2^{:.1} (budget 2^{})",
                        t.max_noise_bits,
                        crate::protocol::noise_budget_bits(&t.params)
                    );
                }
                out += match self.first_mismatch {
                    None => "PASS\n".to_string(),
                    Some(i) => format!("FAIL (first mismatch at output {i})\n"),
                }
                .as_str();
                out += SIM_NOTE;
                out += "\n";
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{cmd_compare, BenchConfig};
    use super::*;

    #[test]
    fn compare_csv_and_json_round_trip() {
        let cfg = BenchConfig::preset("all").unwrap();
        let report = cmd_compare(&cfg).unwrap();
        let csv = report.render(OutputFormat::Csv).unwrap();
        let back = CompareReport::from_csv(&csv).unwrap();
        assert_eq!(back.rows, report.rows);
        let js = report.render(OutputFormat::Json).unwrap();
        assert_eq!(CompareReport::from_json(&js).unwrap(), report);
        let text = report.render(OutputFormat::Table).unwrap();
        assert!(text.contains("cheetah/falcon_tiled"));
        assert_eq!(text, cmd_compare(&cfg).unwrap().render(OutputFormat::Table).unwrap());
    }
}
