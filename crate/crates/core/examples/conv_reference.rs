//! Reference grouped convolution mod 2^32, and the im2col view of it.

use falconpack::tensor::{conv2d_reference, im2col, pad_depthwise_to_standard};
use falconpack::{ConvDims, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> falconpack::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = ConvDims::depthwise(5, 5, 2, 3, 1)?;
    let x = Tensor::random_signed(&dims.input_shape(), 32, 3, &mut rng);
    let w = Tensor::random_signed(&dims.weight_shape(), 32, 2, &mut rng);
    let y = conv2d_reference(&x, &w, &dims)?;
    println!("depthwise {:?} * {:?} -> {:?}", x.shape(), w.shape(), y.shape());
    for k in 0..dims.k {
        println!("channel {k}:");
        for i in 0..dims.out_h() {
            let row: Vec<String> = (0..dims.out_w())
                .map(|j| format!("{:>4}", falconpack::ring::centered(y.get(&[k, i, j]), 32)))
                .collect();
            println!("  {}", row.join(""));
        }
    }

    // The same result as a standard convolution over zero-padded filters.
    let std_dims = ConvDims::standard(5, 5, 2, 2, 3, 1)?;
    let padded = pad_depthwise_to_standard(&w, &dims)?;
    assert_eq!(conv2d_reference(&x, &padded, &std_dims)?, y);
    let cols = im2col(&x, &std_dims)?;
    println!("im2col patch matrix {:?}", cols.shape());
    Ok(())
}
