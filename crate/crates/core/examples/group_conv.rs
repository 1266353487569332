//! Group convolution through the dense plan for several group sizes.

use falconpack::packing::{falcon_plan, PackingLayout};
use falconpack::tensor::conv2d_reference;
use falconpack::tiling::solve_tiling;
use falconpack::{ConvDims, HeParams, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> falconpack::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (g, n) in [(1, 4096), (2, 4096), (4, 4096), (8, 16384)] {
        let dims = ConvDims::same_padded(14, 64, 3, g)?;
        let params = HeParams::with_degree(n)?;
        let tile = solve_tiling(&dims, &params)?;
        let layout = PackingLayout::falcon_group(&dims, n, tile.c_x, tile.c_w)?;
        let plan = falcon_plan(&dims, &layout)?;
        let x = Tensor::random(&dims.input_shape(), 32, &mut rng);
        let w = Tensor::random(&dims.weight_shape(), 32, &mut rng);
        let ok = plan.evaluate_plain(&x, &w, params.q_bits)? == conv2d_reference(&x, &w, &dims)?;
        println!(
            "G = {g} N = {n}: tile ({}, {}), {} input / {} output polys, correct: {ok}",
            tile.c_x,
            tile.c_w,
            plan.input_poly_count(),
            plan.output_poly_count()
        );
    }
    Ok(())
}
