//! Cost model rows for all frameworks on the built-in benchmark sweeps.

use falconpack::bench::{cmd_compare, BenchConfig, OutputFormat, Render};

fn main() -> falconpack::Result<()> {
    for preset in ["dims", "n-sweep"] {
        let report = cmd_compare(&BenchConfig::preset(preset)?)?;
        println!("== {preset}");
        print!("{}", report.render(OutputFormat::Table)?);
        println!();
    }
    Ok(())
}
