use falconpack::packing::{
    cheetah_plan, depthwise_patterns, extract_output_dw, extract_output_group, extract_output_split, falcon_plan,
    greedy_scs_arrange, iron_plan, offset, pack_cheetah_standard, pack_input_dw, pack_input_group,
    pack_iron_channelwise, pack_weight_dw, pack_weight_group, split_weight_poly, PackingLayout, ZeroPattern,
};
use falconpack::tensor::conv2d_reference;
use falconpack::tiling::{solve_tiling, solve_tiling_unit};
use falconpack::{ConvDims, Error, HeParams, RingPoly, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_pair(dims: &ConvDims, r: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    (
        Tensor::random(&dims.input_shape(), 32, r),
        Tensor::random(&dims.weight_shape(), 32, r),
    )
}

/// Length of the superstring obtained by chaining `perm` with maximal overlaps.
fn chain_len(perm: &[usize], pats: &[ZeroPattern]) -> usize {
    let total: usize = perm.iter().map(|&i| pats[i].len()).sum();
    let saved: usize = perm.windows(2).map(|w| pats[w[0]].trail.min(pats[w[1]].lead)).sum();
    total - saved
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Canonical arrangement of `c_x` filters: pair `p` holds filter `c_x-1-p`
/// at `(c_x+2) p` and filter `p` at `(c_x+2) p + c_x - p`.
fn canonical_slots(c_x: usize) -> Vec<usize> {
    let mut slot = vec![0; c_x];
    for p in 0..c_x / 2 {
        slot[c_x - 1 - p] = (c_x + 2) * p;
        slot[p] = (c_x + 2) * p + c_x - p;
    }
    if c_x % 2 == 1 {
        slot[c_x / 2] = (c_x + 2) * (c_x / 2);
    }
    slot
}

#[test]
fn offset_examples() {
    let v: Vec<_> = (0..4).map(|c| offset(c, 4, 4).unwrap()).collect();
    assert_eq!(v, [4, 9, 6, 0]);
    let v: Vec<_> = (0..4).map(|c| offset(c, 8, 4).unwrap()).collect();
    assert_eq!(v, [8, 17, 10, 0]);
    assert!(matches!(offset(0, 6, 3), Err(Error::Geometry(_))));
    assert!(matches!(offset(4, 4, 4), Err(Error::IndexOutOfRange { .. })));
}

#[test]
fn pieces_are_cuts_of_the_canonical_arrangement() {
    for (c_x, c_w) in [(4, 4), (8, 4), (8, 2), (12, 6), (12, 4), (16, 8), (6, 2)] {
        let dims = ConvDims::depthwise(3, 3, c_x, 1, 1).unwrap();
        let layout = PackingLayout::falcon_dw(&dims, 32768, c_x, c_w).unwrap();
        let full = canonical_slots(c_x);
        for (kappa, piece) in layout.pieces.iter().enumerate() {
            let start = (c_x + 2) * kappa * c_w / 2;
            for (&slot, &m) in piece.slots.iter().zip(&piece.channels) {
                assert_eq!(slot + start, full[m], "C_x {c_x} C_w {c_w} piece {kappa} filter {m}");
            }
            assert_eq!(piece.span, layout.closed_form_span());
        }
        let mut seen: Vec<usize> = layout.pieces.iter().flat_map(|p| p.channels.clone()).collect();
        seen.sort();
        assert_eq!(seen, (0..c_x).collect::<Vec<_>>());
    }
}

#[test]
fn greedy_matches_exhaustive_and_closed_form() {
    for c in 1..=7 {
        let pats = depthwise_patterns(c);
        let greedy = greedy_scs_arrange(&pats).unwrap();
        let best = permutations(c).iter().map(|p| chain_len(p, &pats)).min().unwrap();
        assert_eq!(greedy.total_slots, best, "C = {c}");
        assert!(greedy.is_valid());
        assert!(greedy.total_slots <= c * c);
        let canon = canonical_slots(c);
        let canon_len = (0..c).map(|m| canon[m] + m + 1).max().unwrap();
        assert_eq!(greedy.total_slots, canon_len, "C = {c}");
    }
    for c in [8, 10, 16, 32] {
        let greedy = greedy_scs_arrange(&depthwise_patterns(c)).unwrap();
        assert_eq!(greedy.total_slots, c + 1 + (c / 2 - 1) * (c + 2));
    }
}

#[test]
fn input_packing_formula_and_round_trip() {
    let p = HeParams::default();
    let x = Tensor::from_vec(&[1, 2, 2], 32, vec![1, 2, 3, 4]).unwrap();
    let poly = pack_input_dw(&x, &p).unwrap();
    assert_eq!(&poly.coeffs()[..5], &[1, 2, 3, 4, 0]);
    assert!(pack_input_dw(&Tensor::zeros(&[3, 5, 5], 32), &p).unwrap().is_zero());
    let x = Tensor::random(&[4, 7, 9], 32, &mut rng(1));
    let poly = pack_input_dw(&x, &p).unwrap();
    for c in 0..4 {
        for i in 0..7 {
            for j in 0..9 {
                assert_eq!(poly.coeffs()[c * 63 + i * 9 + j], x.get(&[c, i, j]));
            }
        }
    }
    let big = Tensor::zeros(&[20, 16, 16], 32);
    assert!(matches!(pack_input_dw(&big, &p), Err(Error::Capacity { .. })));
}

#[test]
fn central_block_test() {
    let p = HeParams::default();
    let dims = ConvDims::depthwise(5, 5, 4, 3, 1).unwrap();
    let layout = PackingLayout::falcon_dw(&dims, p.n, 4, 4).unwrap();
    let mut r = rng(2);
    let (x, w) = random_pair(&dims, &mut r);
    let y = pack_input_dw(&x, &p)
        .unwrap()
        .mul(&pack_weight_dw(&w, &layout, &dims, &p).unwrap())
        .unwrap();
    let got = extract_output_dw(&y, &layout, &dims, &p).unwrap();
    assert_eq!(got, conv2d_reference(&x, &w, &dims).unwrap());
    assert!(pack_weight_dw(&Tensor::zeros(w.shape(), 32), &layout, &dims, &p)
        .unwrap()
        .is_zero());
}

#[test]
fn identity_kernel_and_strided_indices() {
    let p = HeParams::default();
    let dims = ConvDims::depthwise(6, 6, 4, 1, 1).unwrap();
    let layout = PackingLayout::falcon_dw(&dims, p.n, 4, 4).unwrap();
    let x = Tensor::random(&dims.input_shape(), 32, &mut rng(3));
    let w = Tensor::from_vec(&dims.weight_shape(), 32, vec![1; 4]).unwrap();
    let y = pack_input_dw(&x, &p)
        .unwrap()
        .mul(&pack_weight_dw(&w, &layout, &dims, &p).unwrap())
        .unwrap();
    assert_eq!(extract_output_dw(&y, &layout, &dims, &p).unwrap(), x);

    let dims = ConvDims::depthwise(5, 5, 2, 3, 2).unwrap();
    assert_eq!((dims.out_h(), dims.out_w()), (2, 2));
    let layout = PackingLayout::falcon_dw(&dims, p.n, 2, 2).unwrap();
    let plan = falcon_plan(&dims, &layout).unwrap();
    let o = dims.anchor();
    assert_eq!(o, 12);
    // offset(0)=2, offset(1)=0 for C_x = C_w = 2; read at (offset+k) HW + O + 2 i' W + 2 j'.
    let mut expect = Vec::new();
    for (k, off) in [(0usize, 2usize), (1, 0)] {
        for io in 0..2 {
            for jo in 0..2 {
                expect.push(((off + k) * 25 + o + io * 10 + jo * 2, k * 4 + io * 2 + jo));
            }
        }
    }
    let mut got = plan.outputs[0].extract.clone();
    got.sort();
    expect.sort();
    assert_eq!(got, expect);
}

#[test]
fn split_covers_all_channels_and_trim_is_invisible() {
    let p = HeParams::with_degree(32768).unwrap();
    let dims = ConvDims::depthwise(6, 6, 8, 3, 1).unwrap();
    let layout = PackingLayout::falcon_dw(&dims, p.n, 8, 4).unwrap();
    assert_eq!(layout.k, 2);
    let mut r = rng(4);
    let (x, w) = random_pair(&dims, &mut r);
    let xp = pack_input_dw(&x, &p).unwrap();
    let ws = split_weight_poly(&w, &layout, &dims, &p).unwrap();
    assert_eq!(ws.len(), 2);
    let ys: Vec<RingPoly> = ws.iter().map(|wp| xp.mul(wp).unwrap()).collect();
    let want = conv2d_reference(&x, &w, &dims).unwrap();
    assert_eq!(extract_output_split(&ys, &layout, &dims, &p).unwrap(), want);

    let raw = layout.untrimmed(&dims).unwrap();
    let ws_raw = split_weight_poly(&w, &raw, &dims, &p).unwrap();
    let ys_raw: Vec<RingPoly> = ws_raw.iter().map(|wp| xp.mul(wp).unwrap()).collect();
    assert_eq!(extract_output_split(&ys_raw, &raw, &dims, &p).unwrap(), want);
    assert_ne!(ws_raw[1], ws[1]);

    // Each product reads only its own channels.
    let mut from_first = [false; 8];
    for &m in &layout.pieces[0].channels {
        from_first[m] = true;
    }
    let mut from_second = vec![false; 8];
    for &m in &layout.pieces[1].channels {
        from_second[m] = true;
    }
    assert!(from_first.iter().zip(&from_second).all(|(a, b)| a ^ b));

    let k1 = PackingLayout::falcon_dw(&dims, p.n, 4, 4).unwrap();
    let w4 = w.channel_block(0, 4).unwrap();
    let single = split_weight_poly(&w4, &k1, &dims, &p).unwrap();
    assert_eq!(single, vec![pack_weight_dw(&w4, &k1, &dims, &p).unwrap()]);
}

#[test]
fn falcon_plans_have_no_collisions() {
    let cases = [
        (5, 5, 4, 3, 1, 4096, 4, 4),
        (6, 6, 8, 3, 1, 8192, 8, 4),
        (7, 5, 12, 3, 2, 16384, 12, 6),
        (4, 4, 6, 1, 1, 2048, 6, 2),
        (9, 9, 10, 5, 1, 32768, 10, 2),
        (16, 16, 32, 3, 1, 4096, 4, 4),
        (16, 16, 32, 3, 1, 32768, 14, 14),
    ];
    for (h, w, c, r, s, n, c_x, c_w) in cases {
        let dims = ConvDims::depthwise(h, w, c, r, s).unwrap();
        let layout = PackingLayout::falcon_dw(&dims, n, c_x, c_w).unwrap();
        let plan = falcon_plan(&dims, &layout).unwrap();
        plan.check_noncollision().unwrap();
    }
}

#[test]
fn paper_rows_match_reference() {
    let p = HeParams::default();
    for (hres, c, r) in [(28, 192, 3), (14, 384, 3), (14, 576, 3), (7, 960, 3)] {
        let dims = ConvDims::same_padded(hres, c, r, 1).unwrap();
        let t = solve_tiling(&dims, &p).unwrap();
        let layout = PackingLayout::falcon_dw(&dims, p.n, t.c_x, t.c_w).unwrap();
        let plan = falcon_plan(&dims, &layout).unwrap();
        let mut r = rng(hres as u64 * 1000 + c as u64);
        let (x, w) = random_pair(&dims, &mut r);
        assert_eq!(
            plan.evaluate_plain(&x, &w, p.q_bits).unwrap(),
            conv2d_reference(&x, &w, &dims).unwrap()
        );
    }
}

#[test]
fn group_packing_matches_reference() {
    let mut r = rng(5);
    for (g, n) in [(1, 4096), (2, 4096), (4, 4096), (8, 16384)] {
        let dims = ConvDims::same_padded(14, 576, 3, g).unwrap();
        let p = HeParams::with_degree(n).unwrap();
        let t = solve_tiling(&dims, &p).unwrap();
        let layout = PackingLayout::falcon_group(&dims, n, t.c_x, t.c_w).unwrap();
        let plan = falcon_plan(&dims, &layout).unwrap();
        let (x, w) = random_pair(&dims, &mut r);
        assert_eq!(
            plan.evaluate_plain(&x, &w, p.q_bits).unwrap(),
            conv2d_reference(&x, &w, &dims).unwrap(),
            "G = {g}"
        );
    }
    // G = 8 at N = 4096: one unit is G^2 HW = 64 * 256 > N.
    assert!(solve_tiling_unit(64 * 256, 4096).is_err());
}

#[test]
fn group_block_functions() {
    let p = HeParams::with_degree(8192).unwrap();
    let dims = ConvDims::grouped(5, 5, 8, 3, 2, 1).unwrap();
    let layout = PackingLayout::falcon_group(&dims, p.n, 2, 2).unwrap();
    let mut r = rng(6);
    let bd = ConvDims::grouped(5, 5, 4, 3, 2, 1).unwrap();
    let (x, w) = random_pair(&bd, &mut r);
    let xp = pack_input_group(&x, &layout, &dims, &p).unwrap();
    let ys: Vec<RingPoly> = pack_weight_group(&w, &layout, &dims, &p)
        .unwrap()
        .iter()
        .map(|wp| xp.mul(wp).unwrap())
        .collect();
    assert_eq!(
        extract_output_group(&ys, &layout, &dims, &p).unwrap(),
        conv2d_reference(&x, &w, &bd).unwrap()
    );
    let plan = falcon_plan(&dims, &layout).unwrap();
    plan.check_noncollision().unwrap();
}

#[test]
fn group_size_one_is_bit_identical_to_depthwise() {
    let p = HeParams::default();
    let dw = ConvDims::depthwise(6, 6, 12, 3, 1).unwrap();
    let g1 = ConvDims::grouped(6, 6, 12, 3, 1, 1).unwrap();
    assert_eq!(dw, g1);
    let a = falcon_plan(&dw, &PackingLayout::falcon_dw(&dw, p.n, 8, 4).unwrap()).unwrap();
    let b = falcon_plan(&g1, &PackingLayout::falcon_group(&g1, p.n, 8, 4).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_group_equals_standard_packing() {
    let p = HeParams::default();
    let dims = ConvDims::grouped(5, 5, 3, 3, 3, 1).unwrap();
    let layout = PackingLayout::falcon_group(&dims, p.n, 1, 1).unwrap();
    let plan = falcon_plan(&dims, &layout).unwrap();
    plan.check_noncollision().unwrap();
    let mut r = rng(7);
    let (x, w) = random_pair(&dims, &mut r);
    let want = conv2d_reference(&x, &w, &dims).unwrap();
    assert_eq!(plan.evaluate_plain(&x, &w, p.q_bits).unwrap(), want);
    let cheetah = pack_cheetah_standard(&x, &w, &dims, &p).unwrap();
    assert_eq!(cheetah.evaluate(&p).unwrap(), want);
}

#[test]
fn baselines_match_reference_and_counts() {
    let p = HeParams::default();
    let mut r = rng(8);
    let dims = ConvDims::depthwise(5, 5, 4, 3, 1).unwrap();
    let (x, w) = random_pair(&dims, &mut r);
    let want = conv2d_reference(&x, &w, &dims).unwrap();

    let ch = pack_cheetah_standard(&x, &w, &dims, &p).unwrap();
    assert_eq!(ch.inputs.len(), 1);
    assert_eq!(ch.evaluate(&p).unwrap(), want);
    // Each filter occupies C_x = 4 channel slots of which 3 are zero.
    let plan = cheetah_plan(&dims, p.n).unwrap();
    plan.check_noncollision().unwrap();
    let slots_per_filter = 4;
    let nonzero_slots = plan.weights[0].len() / 9;
    let filters = plan.outputs[0].extract.len() / dims.out_hw();
    assert_eq!(filters * slots_per_filter - nonzero_slots, 3 * filters);

    let iron = pack_iron_channelwise(&x, &w, &dims, &p).unwrap();
    assert_eq!(iron.inputs.len(), 4);
    assert_eq!(iron.plan.output_poly_count(), 4);
    assert_eq!(iron.evaluate(&p).unwrap(), want);
    iron_plan(&dims, p.n).unwrap().check_noncollision().unwrap();

    for g in [2, 4] {
        let dims = ConvDims::grouped(6, 6, 8, 3, g, 1).unwrap();
        let (x, w) = random_pair(&dims, &mut r);
        let want = conv2d_reference(&x, &w, &dims).unwrap();
        for plan in [cheetah_plan(&dims, 2048).unwrap(), iron_plan(&dims, 2048).unwrap()] {
            plan.check_noncollision().unwrap();
            assert_eq!(plan.evaluate_plain(&x, &w, 59).unwrap(), want);
        }
    }
}

#[test]
fn fuzzed_geometries_match_reference() {
    let mut r = rng(9);
    for case in 0..1000 {
        let rr = [1, 3, 5][r.gen_range(0..3)];
        let h = r.gen_range(rr..=16);
        let w = r.gen_range(rr..=16);
        let c = r.gen_range(1..=64);
        let s = r.gen_range(1..=2);
        let n = [2048, 4096, 8192][r.gen_range(0..3)];
        let dims = ConvDims::depthwise(h, w, c, rr, s).unwrap();
        let p = HeParams::with_degree(n).unwrap();
        let t = solve_tiling(&dims, &p).unwrap();
        let layout = PackingLayout::falcon_dw(&dims, n, t.c_x, t.c_w).unwrap();
        let plan = falcon_plan(&dims, &layout).unwrap();
        let (x, wt) = random_pair(&dims, &mut r);
        assert_eq!(
            plan.evaluate_plain(&x, &wt, p.q_bits).unwrap(),
            conv2d_reference(&x, &wt, &dims).unwrap(),
            "case {case}: {dims:?} N={n} tile {t:?}"
        );
    }
}
