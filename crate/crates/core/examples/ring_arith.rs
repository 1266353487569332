//! Negacyclic arithmetic in Z_q[X]/(X^N+1): wrap-around with sign flip, and
//! agreement of the three multiplication paths.

use falconpack::RingPoly;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> falconpack::Result<()> {
    let n = 8;
    let x7 = RingPoly::monomial(n, 59, 7, 1)?;
    let x2 = RingPoly::monomial(n, 59, 2, 3)?;
    let p = x7.mul(&x2)?;
    // X^7 * 3X^2 = 3X^9 = -3X
    println!(
        "X^7 * 3X^2 = {:?} (coefficient 1 centred: {})",
        p.coeffs(),
        p.centered(1)
    );

    let n = 2048;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dense = |rng: &mut ChaCha8Rng| RingPoly::from_coeffs(n, 59, (0..n).map(|_| rng.next_u64()).collect());
    let a = dense(&mut rng)?;
    let b = dense(&mut rng)?;
    let school = a.mul_schoolbook(&b)?;
    let kara = a.mul_karatsuba(&b)?;
    println!("N = {n}: schoolbook == karatsuba: {}", school == kara);

    let mut sparse = RingPoly::zero(n, 59);
    for i in [0, 5, 1000, 2047] {
        sparse.set(i, i as u64 + 1)?;
    }
    println!(
        "sparse path agrees: {}",
        a.mul_sparse(&sparse)? == a.mul_schoolbook(&sparse)?
    );
    Ok(())
}
