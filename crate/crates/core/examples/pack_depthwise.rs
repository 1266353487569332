//! One depthwise block packed into a single input and a single weight
//! polynomial, multiplied, and read back.

use falconpack::packing::{extract_output_dw, offset, pack_input_dw, pack_weight_dw, PackingLayout};
use falconpack::tensor::conv2d_reference;
use falconpack::{ConvDims, HeParams, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> falconpack::Result<()> {
    let params = HeParams::default();
    let dims = ConvDims::depthwise(5, 5, 4, 3, 1)?;
    let layout = PackingLayout::falcon_dw(&dims, params.n, 4, 4)?;
    let offsets: Vec<usize> = (0..4).map(|c| offset(c, 4, 4)).collect::<Result<_, _>>()?;
    println!(
        "filter offsets {offsets:?}, span {} channel slots",
        layout.closed_form_span()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::random(&dims.input_shape(), 32, &mut rng);
    let w = Tensor::random(&dims.weight_shape(), 32, &mut rng);
    let xp = pack_input_dw(&x, &params)?;
    let wp = pack_weight_dw(&w, &layout, &dims, &params)?;
    println!("input poly weight {}, weight poly weight {}", xp.weight(), wp.weight());

    let y = extract_output_dw(&xp.mul(&wp)?, &layout, &dims, &params)?;
    let ok = y == conv2d_reference(&x, &w, &dims)?;
    println!("one multiplication, {} outputs, matches reference: {ok}", y.len());
    Ok(())
}
