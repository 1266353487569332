//! Command implementations behind the `falconpack` binary: benchmark
//! configuration, the published reference figures, and the `verify`, `tile`,
//! `compare` and `simulate` commands.

mod commands;
mod render;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::HeParams;
use crate::tensor::ConvDims;
use crate::tiling::Framework;

pub use commands::{
    cmd_compare, cmd_simulate, cmd_tile, cmd_verify, CompareReport, CompareRow, SimulateReport, TileReport,
    VerifyReport,
};
pub use render::Render;

/// Environment variable capping worker threads for `compare`.
pub const THREADS_ENV: &str = "FALCONPACK_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format {other:?} (table, csv, json)"))),
        }
    }
}

/// How `(H, C, R)` becomes a convolution. `Same` reads `H` as the output
/// resolution of a stride-1 convolution over an `(H+R-1)`-sided padded input;
/// `Valid` reads it as the raw input side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Same,
    Valid,
}

impl FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same" => Ok(Padding::Same),
            "valid" => Ok(Padding::Valid),
            other => Err(Error::Config(format!("unknown padding {other:?} (same, valid)"))),
        }
    }
}

impl Padding {
    pub fn dims(self, h: usize, c: usize, r: usize, g: usize) -> Result<ConvDims> {
        match self {
            Padding::Same => ConvDims::same_padded(h, c, r, g),
            Padding::Valid => ConvDims::grouped(h, h, c, r, g, 1),
        }
    }
}

/// `H,C,R` as typed on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsArg {
    pub h: usize,
    pub c: usize,
    pub r: usize,
}

impl FromStr for DimsArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let nums = parts
            .iter()
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Config(format!("dims {s:?} must be three integers H,C,R")))?;
        match nums.as_slice() {
            &[h, c, r] => Ok(DimsArg { h, c, r }),
            _ => Err(Error::Config(format!("dims {s:?} must be three integers H,C,R"))),
        }
    }
}

impl fmt::Display for DimsArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.h, self.c, self.r)
    }
}

/// A reference communication figure in MB.
/// These are reference numbers from a different implementation stack; they
/// are compared by ratio only and never reported as model output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PublishedFigure {
    pub table: &'static str,
    pub row: &'static str,
    pub framework: Framework,
    pub mb: f64,
}

macro_rules! published {
    ($table:literal, $row:literal, $iron:literal, $cheetah:literal, $gp:literal, $tiled:literal) => {
        [
            PublishedFigure {
                table: $table,
                row: $row,
                framework: Framework::Iron,
                mb: $iron,
            },
            PublishedFigure {
                table: $table,
                row: $row,
                framework: Framework::Cheetah,
                mb: $cheetah,
            },
            PublishedFigure {
                table: $table,
                row: $row,
                framework: Framework::Falcon,
                mb: $gp,
            },
            PublishedFigure {
                table: $table,
                row: $row,
                framework: Framework::FalconTiled,
                mb: $tiled,
            },
        ]
    };
}

const N_SWEEP: [[PublishedFigure; 4]; 4] = [
    published!("n_sweep", "4096", 51.70, 18.94, 10.77, 8.98),
    published!("n_sweep", "8192", 102.69, 35.77, 19.12, 13.21),
    published!("n_sweep", "16384", 204.14, 70.10, 34.47, 17.45),
    published!("n_sweep", "32768", 409.35, 140.16, 71.26, 26.04),
];

const DIMS: [[PublishedFigure; 4]; 4] = [
    published!("dims", "28,192,3", 23.50, 8.71, 6.45, 6.45),
    published!("dims", "14,384,3", 34.46, 12.66, 7.22, 5.99),
    published!("dims", "14,576,3", 51.70, 18.94, 10.77, 8.98),
    published!("dims", "7,960,3", 85.29, 28.66, 14.76, 7.23),
];

/// The group-size table reports one dense-packing column; it is filed under
/// the tiled framework.
const GROUPS: [[PublishedFigure; 3]; 4] = [
    [
        PublishedFigure {
            table: "groups",
            row: "1",
            framework: Framework::Iron,
            mb: 51.70,
        },
        PublishedFigure {
            table: "groups",
            row: "1",
            framework: Framework::Cheetah,
            mb: 18.94,
        },
        PublishedFigure {
            table: "groups",
            row: "1",
            framework: Framework::FalconTiled,
            mb: 8.98,
        },
    ],
    [
        PublishedFigure {
            table: "groups",
            row: "2",
            framework: Framework::Iron,
            mb: 51.70,
        },
        PublishedFigure {
            table: "groups",
            row: "2",
            framework: Framework::Cheetah,
            mb: 18.94,
        },
        PublishedFigure {
            table: "groups",
            row: "2",
            framework: Framework::FalconTiled,
            mb: 8.98,
        },
    ],
    [
        PublishedFigure {
            table: "groups",
            row: "4",
            framework: Framework::Iron,
            mb: 68.44,
        },
        PublishedFigure {
            table: "groups",
            row: "4",
            framework: Framework::Cheetah,
            mb: 18.94,
        },
        PublishedFigure {
            table: "groups",
            row: "4",
            framework: Framework::FalconTiled,
            mb: 8.98,
        },
    ],
    [
        PublishedFigure {
            table: "groups",
            row: "8",
            framework: Framework::Iron,
            mb: 102.73,
        },
        PublishedFigure {
            table: "groups",
            row: "8",
            framework: Framework::Cheetah,
            mb: 18.94,
        },
        PublishedFigure {
            table: "groups",
            row: "8",
            framework: Framework::FalconTiled,
            mb: 8.98,
        },
    ],
];

pub fn published_figures() -> Vec<PublishedFigure> {
    N_SWEEP
        .iter()
        .flatten()
        .chain(DIMS.iter().flatten())
        .chain(GROUPS.iter().flatten())
        .copied()
        .collect()
}

pub fn published_mb(table: &str, row: &str, framework: Framework) -> Option<f64> {
    published_figures()
        .into_iter()
        .find(|f| f.table == table && f.row == row && f.framework == framework)
        .map(|f| f.mb)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedKey {
    pub table: String,
    pub row: String,
}

fn default_group() -> usize {
    1
}

fn default_frameworks() -> Vec<Framework> {
    Framework::ALL.to_vec()
}

/// One benchmark geometry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchEntry {
    #[serde(default)]
    pub label: Option<String>,
    /// `[H, C, R]`.
    pub dims: [usize; 3],
    pub n: usize,
    #[serde(default = "default_group")]
    pub group: usize,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default = "default_frameworks")]
    pub frameworks: Vec<Framework>,
    /// The entry is expected to be rejected as infeasible.
    #[serde(default)]
    pub expect_reject: bool,
    #[serde(default)]
    pub published: Option<PublishedKey>,
}

impl BenchEntry {
    pub fn new(h: usize, c: usize, r: usize, n: usize) -> Self {
        BenchEntry {
            label: None,
            dims: [h, c, r],
            n,
            group: 1,
            padding: Padding::Same,
            frameworks: default_frameworks(),
            expect_reject: false,
            published: None,
        }
    }

    fn with_published(mut self, table: &str, row: &str) -> Self {
        self.published = Some(PublishedKey {
            table: table.into(),
            row: row.into(),
        });
        self
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let [h, c, r] = self.dims;
            if self.group == 1 {
                format!("({h},{c},{r}) N={}", self.n)
            } else {
                format!("({h},{c},{r}) G={} N={}", self.group, self.n)
            }
        })
    }

    pub fn conv_dims(&self) -> Result<ConvDims> {
        let [h, c, r] = self.dims;
        self.padding.dims(h, c, r, self.group)
    }

    pub fn params(&self) -> Result<HeParams> {
        HeParams::with_degree(self.n)
    }

    /// `HW <= N`, the feasibility every framework needs.
    pub fn is_feasible(&self) -> Result<bool> {
        Ok(self.conv_dims()?.hw() <= self.n)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.frameworks.is_empty() {
            return Err(Error::Config(format!("{}: no frameworks listed", self.label())));
        }
        match (self.is_feasible()?, self.expect_reject) {
            (true, true) => Err(Error::Config(format!(
                "{}: marked expect_reject but HW <= N",
                self.label()
            ))),
            (false, false) => Err(Error::Config(format!(
                "{}: HW exceeds N; mark it expect_reject",
                self.label()
            ))),
            _ => Ok(()),
        }
    }
}

/// A list of geometries plus output settings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub entries: Vec<BenchEntry>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub format: OutputFormat,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config("config has no entries".into()));
        }
        self.entries.iter().try_for_each(BenchEntry::validate)
    }

    /// Built-in sweeps: `n-sweep`, `dims`, `groups` and `all`.
    pub fn preset(name: &str) -> Result<Self> {
        let entries = match name {
            "n-sweep" => [4096, 8192, 16384, 32768]
                .into_iter()
                .map(|n| BenchEntry::new(14, 576, 3, n).with_published("n_sweep", &n.to_string()))
                .collect(),
            "dims" => [(28, 192, 3), (14, 384, 3), (14, 576, 3), (7, 960, 3)]
                .into_iter()
                .map(|(h, c, r)| BenchEntry::new(h, c, r, 4096).with_published("dims", &format!("{h},{c},{r}")))
                .collect(),
            "groups" => [1, 2, 4, 8]
                .into_iter()
                .map(|g| {
                    let mut e = BenchEntry::new(14, 576, 3, 4096).with_published("groups", &g.to_string());
                    e.group = g;
                    e.frameworks = vec![Framework::Iron, Framework::Cheetah, Framework::FalconTiled];
                    e
                })
                .collect(),
            "all" => ["n-sweep", "dims", "groups"]
                .iter()
                .map(|p| Self::preset(p).map(|c| c.entries))
                .collect::<Result<Vec<_>>>()?
                .concat(),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?} (n-sweep, dims, groups, all)"
                )))
            }
        };
        let cfg = BenchConfig {
            entries,
            seed: 0,
            format: OutputFormat::Table,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Process exit status for an error: 2 for infeasible input, 3 for bad
/// configuration, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) | Error::Capacity { .. } => 2,
        Error::Config(_)
        | Error::Params(_)
        | Error::Dimension(_)
        | Error::Geometry(_)
        | Error::Format(_)
        | Error::Io(_) => 3,
        _ => 1,
    }
}

/// Worker pool honouring `FALCONPACK_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_arg_parses() {
        assert_eq!("14,576,3".parse::<DimsArg>().unwrap(), DimsArg { h: 14, c: 576, r: 3 });
        assert_eq!(" 7, 960 ,3".parse::<DimsArg>().unwrap().c, 960);
        assert!("14,576".parse::<DimsArg>().is_err());
        assert!("a,b,c".parse::<DimsArg>().is_err());
    }

    #[test]
    fn presets_are_valid_and_published_rows_resolve() {
        let all = BenchConfig::preset("all").unwrap();
        assert_eq!(all.entries.len(), 12);
        for e in &all.entries {
            let key = e.published.as_ref().unwrap();
            for f in &e.frameworks {
                assert!(published_mb(&key.table, &key.row, *f).is_some(), "{key:?} {f:?}");
            }
        }
        assert!(BenchConfig::preset("nope").is_err());
        assert_eq!(published_mb("n_sweep", "32768", Framework::FalconTiled), Some(26.04));
        assert_eq!(published_figures().len(), 44);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = BenchConfig::preset("dims").unwrap();
        assert_eq!(BenchConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);

        let minimal = r#"{"entries": [{"dims": [5, 4, 3], "n": 2048}]}"#;
        let cfg = BenchConfig::from_json(minimal).unwrap();
        assert_eq!(cfg.entries[0].frameworks.len(), 4);
        assert_eq!(cfg.format, OutputFormat::Table);

        let too_big = r#"{"entries": [{"dims": [64, 4, 3], "n": 2048}]}"#;
        assert!(matches!(BenchConfig::from_json(too_big), Err(Error::Config(_))));
        let marked = r#"{"entries": [{"dims": [64, 4, 3], "n": 2048, "expect_reject": true}]}"#;
        BenchConfig::from_json(marked).unwrap();
        let wrong_mark = r#"{"entries": [{"dims": [5, 4, 3], "n": 2048, "expect_reject": true}]}"#;
        assert!(BenchConfig::from_json(wrong_mark).is_err());
        assert!(BenchConfig::from_json("{").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Infeasible("x".into())), 2);
        assert_eq!(exit_code(&Error::Config("x".into())), 3);
        assert_eq!(
            exit_code(&Error::NoiseBudget {
                bound_bits: 30.0,
                budget_bits: 26
            }),
            1
        );
    }
}
