//! Property tests over randomly drawn inputs: structural invariants that
//! must hold for every admissible value, not just frozen examples.

use mgbp_core::convnet::{toy_net, Activation};
use mgbp_core::freeze::{activation_gain, freeze};
use mgbp_core::metrics::{psnr, ssim, SsimMode};
use mgbp_core::resample::{
    bicubic_kernel, box_kernel, contraction_norm, downscale, gaussian_kernel,
    multi_level_downscale, nearest_kernel, operator_matrix, upscale, OperatorDirection,
    ResampleSpec,
};
use mgbp_core::sparse::SparseOperator;
use mgbp_core::tensor::{convolve, devectorize, vectorize, BoundaryRule, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(h: usize, w: usize, c: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0))
}

fn boundary(choice: u8) -> BoundaryRule {
    match choice % 3 {
        0 => BoundaryRule::Replicate,
        1 => BoundaryRule::Reflect,
        _ => BoundaryRule::ZeroPad,
    }
}

proptest! {
    #[test]
    fn interpolation_kernels_stay_polyphase_normalized(
        s in 1usize..=5,
        a in -1.0f64..-0.1,
    ) {
        for k in [bicubic_kernel(s, a).unwrap(), nearest_kernel(s).unwrap()] {
            for sum in k.polyphase_sums(s) {
                prop_assert!((sum - 1.0).abs() <= 1e-12, "phase sum {sum}");
            }
        }
    }

    #[test]
    fn convolution_is_linear(
        seed in any::<u64>(),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        choice in any::<u8>(),
    ) {
        let rule = boundary(choice);
        let k = gaussian_kernel(0.8).unwrap();
        let x = noise(6, 5, 2, seed);
        let y = noise(6, 5, 2, seed ^ 0x9e3779b97f4a7c15);
        let mixed = convolve(&x.scale(alpha).add(&y.scale(beta)).unwrap(), &k, rule).unwrap();
        let split = convolve(&x, &k, rule)
            .unwrap()
            .scale(alpha)
            .add(&convolve(&y, &k, rule).unwrap().scale(beta))
            .unwrap();
        prop_assert!(mixed.max_abs_diff(&split).unwrap() <= 1e-10);
    }

    #[test]
    fn operator_matrices_act_like_the_tensor_operators(
        lo_h in 2usize..=4,
        lo_w in 2usize..=4,
        s in 2usize..=3,
        // Radius ceil(4 sigma) <= 3 keeps the blur inside the reflect extent
        // of the smallest drawn grid.
        sigma in 0.3f64..0.75,
        a in -1.0f64..-0.1,
        choice in any::<u8>(),
        seed in any::<u64>(),
    ) {
        let spec = ResampleSpec::new(
            s,
            gaussian_kernel(sigma).unwrap(),
            bicubic_kernel(s, a).unwrap(),
            boundary(choice),
        ).unwrap();
        let lo = noise(lo_h, lo_w, 1, seed);
        let hi = noise(lo_h * s, lo_w * s, 1, seed ^ 1);
        let d = operator_matrix(&spec, OperatorDirection::Down, hi.dims()).unwrap();
        let u = operator_matrix(&spec, OperatorDirection::Up, lo.dims()).unwrap();
        let down_gap = d.apply(&vectorize(&hi)).unwrap()
            .iter()
            .zip(vectorize(&downscale(&hi, &spec).unwrap()))
            .map(|(m, t)| (m - t).abs())
            .fold(0.0f64, f64::max);
        let up_gap = u.apply(&vectorize(&lo)).unwrap()
            .iter()
            .zip(vectorize(&upscale(&lo, &spec).unwrap()))
            .map(|(m, t)| (m - t).abs())
            .fold(0.0f64, f64::max);
        prop_assert!(down_gap <= 1e-12 && up_gap <= 1e-12, "{down_gap} {up_gap}");
    }

    #[test]
    fn average_nearest_round_trip_is_the_identity(
        h in 2usize..=5,
        w in 2usize..=5,
        s in 2usize..=3,
        seed in any::<u64>(),
    ) {
        let spec = ResampleSpec::new(
            s,
            box_kernel(s).unwrap(),
            nearest_kernel(s).unwrap(),
            BoundaryRule::Replicate,
        ).unwrap();
        let x = noise(h, w, 1, seed);
        let back = downscale(&upscale(&x, &spec).unwrap(), &spec).unwrap();
        prop_assert!(back.max_abs_diff(&x).unwrap() <= 1e-12);
    }

    #[test]
    fn multi_level_downscale_is_plain_composition(
        levels in 0usize..=3,
        seed in any::<u64>(),
    ) {
        let spec = ResampleSpec::with_defaults(2).unwrap();
        let y = noise(16, 16, 1, seed);
        let folded = multi_level_downscale(&y, &spec, levels).unwrap();
        let mut manual = y;
        for _ in 0..levels {
            manual = downscale(&manual, &spec).unwrap();
        }
        prop_assert_eq!(folded, manual);
    }

    #[test]
    fn contraction_norm_ignores_vectorization_order(
        sigma in 0.3f64..1.0,
        seed in any::<u64>(),
    ) {
        let spec = ResampleSpec::new(
            2,
            gaussian_kernel(sigma).unwrap(),
            bicubic_kernel(2, -0.5).unwrap(),
            BoundaryRule::Replicate,
        ).unwrap();
        let lo_dims = (3, 3, 1);
        let hi_dims = (6, 6, 1);
        let d = operator_matrix(&spec, OperatorDirection::Down, hi_dims).unwrap();
        let u = operator_matrix(&spec, OperatorDirection::Up, lo_dims).unwrap();
        let base = contraction_norm(&d, &u).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perm = |n: usize, rng: &mut ChaCha8Rng| {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.gen_range(0..=i));
            }
            SparseOperator::from_entries(n, n, p.into_iter().enumerate().map(|(i, j)| (i, j, 1.0)))
                .unwrap()
        };
        let p_lo = perm(9, &mut rng);
        let p_hi = perm(36, &mut rng);
        let d2 = p_lo.matmul(&d).unwrap().matmul(&p_hi.transpose()).unwrap();
        let u2 = p_hi.matmul(&u).unwrap().matmul(&p_lo.transpose()).unwrap();
        let permuted = contraction_norm(&d2, &u2).unwrap();
        prop_assert!((base - permuted).abs() <= 1e-12, "{base} vs {permuted}");
    }

    #[test]
    fn gains_take_only_the_admissible_values(
        seed in any::<u64>(),
        alpha in 0.01f64..0.9,
    ) {
        let mut z = noise(4, 4, 1, seed);
        z.set(1, 2, 0, 0.0);
        for g in activation_gain(&Activation::Relu, &z).data() {
            prop_assert!(*g == 0.0 || *g == 1.0);
        }
        for g in activation_gain(&Activation::LeakyRelu(alpha), &z).data() {
            prop_assert!(*g == alpha || *g == 1.0);
        }
        prop_assert_eq!(activation_gain(&Activation::Relu, &z).get(1, 2, 0), 1.0);
    }

    #[test]
    fn psnr_is_nonnegative_and_ssim_at_most_one(
        seed in any::<u64>(),
        offset in 0.0f64..0.5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::from_fn(6, 6, 1, |_, _, _| rng.gen_range(0.0..1.0));
        let b = Tensor::from_fn(6, 6, 1, |_, _, _| {
            (rng.gen_range(0.0..1.0) + offset).min(1.0)
        });
        let p = psnr(&a, &b).unwrap();
        let s = ssim(&a, &b, SsimMode::Global).unwrap();
        prop_assert!(p >= 0.0, "psnr {p}");
        prop_assert!(s <= 1.0, "ssim {s}");
        prop_assert_eq!(p, psnr(&b, &a).unwrap());
        prop_assert_eq!(s, ssim(&b, &a, SsimMode::Global).unwrap());
    }

    #[test]
    fn vectorization_round_trips(
        h in 1usize..=5,
        w in 1usize..=5,
        c in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let t = noise(h, w, c, seed);
        prop_assert_eq!(devectorize(&vectorize(&t), t.dims()).unwrap(), t);
    }

    #[test]
    fn sparse_text_form_round_trips(
        rows in 1usize..=8,
        cols in 1usize..=8,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<(usize, usize, f64)> = (0..rng.gen_range(0..12usize))
            .map(|_| {
                (
                    rng.gen_range(0..rows),
                    rng.gen_range(0..cols),
                    rng.gen_range(-5.0..5.0),
                )
            })
            .collect();
        let op = SparseOperator::from_entries(rows, cols, entries).unwrap();
        let back = SparseOperator::from_mgs1(&op.to_mgs1()).unwrap();
        prop_assert_eq!(back, op);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frozen_systems_are_affine(
        net_seed in 0u64..64,
        a in -1.5f64..1.5,
        b in -1.5f64..1.5,
        seed in any::<u64>(),
    ) {
        let net = toy_net(net_seed, 1, 1);
        let x = noise(8, 8, 1, seed);
        let sys = freeze(&net, &x).unwrap();
        let u = noise(8, 8, 1, seed ^ 2);
        let v = noise(8, 8, 1, seed ^ 3);
        let mixed = sys
            .frozen_forward(&u.scale(a).add(&v.scale(b)).unwrap())
            .unwrap();
        let split = sys
            .frozen_forward(&u)
            .unwrap()
            .scale(a)
            .add(&sys.frozen_forward(&v).unwrap().scale(b))
            .unwrap()
            .add(&sys.effective_residual().scale(1.0 - a - b))
            .unwrap();
        prop_assert!(mixed.max_abs_diff(&split).unwrap() <= 1e-10);
    }

    #[test]
    fn raw_tensor_files_round_trip_bit_for_bit(
        h in 1usize..=4,
        w in 1usize..=4,
        c in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.mgt");
        let t = noise(h, w, c, seed).scale(1e6);
        mgbp_core::io::write_tensor(&path, &t).unwrap();
        prop_assert_eq!(mgbp_core::io::read_tensor(&path).unwrap(), t);
    }
}
