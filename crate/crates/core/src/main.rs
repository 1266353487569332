use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use falconpack::bench::{
    cmd_compare, cmd_simulate, cmd_tile, cmd_verify, exit_code, BenchConfig, DimsArg, OutputFormat, Padding, Render,
};
use falconpack::protocol::Backend;
use falconpack::tiling::Framework;
use falconpack::{ConvDims, Error, HeParams, Result};

#[derive(Parser)]
#[command(
    name = "falconpack",
    version,
    about = "Dense HE packing for depthwise and group convolutions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check packing and a secure session against the reference convolution.
    Verify {
        #[command(flatten)]
        geom: Geometry,
        #[arg(long, default_value = "falcon_tiled")]
        scheme: Framework,
        #[arg(long, default_value = "rlwe")]
        backend: Backend,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Solve for the communication-optimal (C_x, C_w) tile.
    Tile {
        #[command(flatten)]
        geom: Geometry,
        #[command(flatten)]
        out: Output,
    },
    /// Cost model table for a config file or a built-in preset.
    Compare {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// n-sweep, dims, groups or all.
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        out: Output,
    },
    /// Run one secure session and print its transcript.
    Simulate {
        #[command(flatten)]
        geom: Geometry,
        #[arg(long, default_value = "falcon_tiled")]
        scheme: Framework,
        #[arg(long, default_value = "rlwe")]
        backend: Backend,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args)]
struct Geometry {
    /// Activation resolution, channels and kernel size.
    #[arg(long, value_name = "H,C,R")]
    dims: DimsArg,
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    group: usize,
    #[arg(long, default_value = "same")]
    padding: Padding,
}

impl Geometry {
    fn resolve(&self) -> Result<(ConvDims, HeParams)> {
        let dims = self.padding.dims(self.dims.h, self.dims.c, self.dims.r, self.group)?;
        Ok((dims, HeParams::with_degree(self.n)?))
    }
}

#[derive(Args)]
struct Output {
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Output {
    fn emit(&self, report: &dyn Render, fallback: OutputFormat) -> Result<()> {
        let text = report.render(self.format.unwrap_or(fallback))?;
        match &self.out {
            Some(path) => std::fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Verify {
            geom,
            scheme,
            backend,
            seed,
            out,
        } => {
            let (dims, params) = geom.resolve()?;
            let report = cmd_verify(&dims, &params, scheme, backend, seed)?;
            out.emit(&report, OutputFormat::Table)?;
            Ok(report.exit_code())
        }
        Command::Tile { geom, out } => {
            let (dims, params) = geom.resolve()?;
            out.emit(&cmd_tile(&dims, &params)?, OutputFormat::Table)?;
            Ok(0)
        }
        Command::Compare { config, preset, out } => {
            let cfg = match (config, preset) {
                (Some(path), None) => BenchConfig::from_json(
                    &std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
                )?,
                (None, Some(name)) => BenchConfig::preset(&name)?,
                _ => return Err(Error::Config("compare needs --config FILE or --preset NAME".into())),
            };
            out.emit(&cmd_compare(&cfg)?, cfg.format)?;
            Ok(0)
        }
        Command::Simulate {
            geom,
            scheme,
            backend,
            seed,
            out,
        } => {
            let (dims, params) = geom.resolve()?;
            let report = cmd_simulate(&dims, &params, scheme, backend, seed)?;
            out.emit(&report, OutputFormat::Table)?;
            Ok(report.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
