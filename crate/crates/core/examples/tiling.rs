//! Communication-aware tile selection across resolutions and degrees.

use falconpack::tiling::{comm_cost, falcon_untiled, solve_tiling, Framework};
use falconpack::{ConvDims, HeParams};

fn main() -> falconpack::Result<()> {
    println!(
        "{:>4} {:>6}  {:>8}  {:>9}  {:>10}  {:>10}",
        "H", "N", "tile", "objective", "tiled MB", "untiled MB"
    );
    for h in [7, 14, 28] {
        for n in [4096, 8192, 16384, 32768] {
            let dims = ConvDims::same_padded(h, 576, 3, 1)?;
            let params = HeParams::with_degree(n)?;
            let t = solve_tiling(&dims, &params)?;
            let tiled = comm_cost(Framework::FalconTiled, &dims, &params, Some(t))?;
            let untiled = comm_cost(Framework::Falcon, &dims, &params, Some(falcon_untiled(&dims, &params)?))?;
            println!(
                "{h:>4} {n:>6}  {:>8}  {:>9.4}  {:>10.2}  {:>10.2}",
                format!("({},{})", t.c_x, t.c_w),
                t.objective,
                tiled.total_mb(),
                untiled.total_mb()
            );
        }
    }
    Ok(())
}
