//! Two-party secure depthwise convolution on the toy RLWE backend.
//!
//! The scheme is simulation-grade and claims no security level.

use falconpack::protocol::{reconstruct, secure_dwconv, share, Backend};
use falconpack::tensor::conv2d_reference;
use falconpack::{ConvDims, HeParams, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> falconpack::Result<()> {
    let params = HeParams::default();
    let dims = ConvDims::same_padded(14, 96, 3, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::random(&dims.input_shape(), 32, &mut rng);
    let w = Tensor::random_signed(&dims.weight_shape(), 32, 127, &mut rng);
    let (client, server) = share(&x, &mut rng);

    let (yc, ys, t) = secure_dwconv(&client, &server, &w, &dims, &params, Backend::Rlwe, 42)?;
    let ok = reconstruct(&yc, &ys)? == conv2d_reference(&x, &w, &dims)?;
    println!("reconstructed output matches: {ok}");
    println!(
        "client -> server {} bytes in {} messages, server -> client {} bytes in {} messages",
        t.client_to_server_bytes, t.input_messages, t.server_to_client_bytes, t.output_messages
    );
    println!(
        "{} plaintext multiplications, noise bound 2^{:.1}",
        t.hom_mul_plain, t.max_noise_bits
    );
    println!("{}", t.to_json()?);
    Ok(())
}
