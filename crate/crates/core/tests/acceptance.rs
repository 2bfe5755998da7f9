//! Acceptance gate: one test per numbered criterion, each printing a single
//! PASS/FAIL line with the measured value against its threshold.

use mgbp_core::backprojection::{
    bp_step_observed, certify, ibp, mgbp, mgbp_observed, mismatch_error, unfold_schedule,
    LevelStack, OperatorPair, RecordingObserver,
};
use mgbp_core::convnet::{toy_net, Activation, ConvNet, LayerOp, LayerSpec, LinearLayer};
use mgbp_core::freeze::{explicit_fr_with_cap, freeze, freeze_equivalence};
use mgbp_core::metrics::{multiscale_l1, psnr, ssim, SsimMode};
use mgbp_core::resample::{
    bicubic_kernel, box_kernel, downscale, gaussian_kernel, nearest_kernel, operator_matrix,
    upscale, OperatorDirection, ResampleSpec,
};
use mgbp_core::tensor::{vectorize, BoundaryRule, Kernel, Tensor};
use mgbp_core::vis::filter_spectrum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(criterion: usize, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} ({detail})");
    assert!(ok, "criterion {criterion}: {detail}");
}

fn noise(h: usize, w: usize, c: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0))
}

const EXPLICIT_CAP: usize = 1 << 17;

/// True when explicit materialization of every layer matrix along the net at
/// this input size stays inside the operator and stage caps.
fn fits_explicit(net: &ConvNet, mut dims: (usize, usize, usize)) -> bool {
    let mut elems = dims.0 * dims.1 * dims.2;
    if elems > EXPLICIT_CAP {
        return false;
    }
    for layer in net.layers() {
        if let LayerSpec::Linear(l) = layer {
            let out_dims = match l.output_dims(dims) {
                Ok(d) => d,
                Err(_) => return false,
            };
            let out_elems = out_dims.0 * out_dims.1 * out_dims.2;
            if elems * out_elems > 1 << 24 || out_elems > EXPLICIT_CAP {
                return false;
            }
            dims = out_dims;
            elems = out_elems;
        }
    }
    true
}

/// First 20 seeded toy nets paired with a random 8..=16 sized input each,
/// skipping the rare strongly upscaling draws whose explicit form would
/// overflow the matrix caps.
fn toy_population() -> Vec<(ConvNet, Tensor)> {
    let mut out = Vec::new();
    let mut seed = 0u64;
    while out.len() < 20 {
        let in_ch = 1 + (seed % 2) as usize;
        let net = toy_net(seed, in_ch, 1 + (seed % 3) as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let sides: [usize; 3] = [8, 12, 16];
        let drawn = (sides[rng.gen_range(0..3usize)], sides[rng.gen_range(0..3usize)]);
        let pick = [drawn, (8, 8)]
            .into_iter()
            .find(|&(h, w)| fits_explicit(&net, (h, w, in_ch)));
        if let Some((h, w)) = pick {
            out.push((net, noise(h, w, in_ch, 2000 + seed)));
        }
        seed += 1;
    }
    out
}

#[test]
fn criterion_01_frozen_linearization_is_exact() {
    let mut worst_forward = 0.0_f64;
    let mut worst_probe = 0.0_f64;
    for (i, (net, x)) in toy_population().iter().enumerate() {
        let (h, w, c) = x.dims();
        worst_forward = worst_forward.max(freeze_equivalence(net, x).unwrap());
        let sys = freeze(net, x).unwrap();
        let (f, r) = explicit_fr_with_cap(net, x, EXPLICIT_CAP).unwrap();
        for probe in 0..10u64 {
            let u = noise(h, w, c, 3000 + 10 * i as u64 + probe);
            let via_matrix = f.apply(&vectorize(&u)).unwrap();
            let direct = vectorize(&sys.frozen_forward(&u).unwrap());
            let gap = via_matrix
                .iter()
                .zip(&r)
                .map(|(a, b)| a + b)
                .zip(&direct)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst_probe = worst_probe.max(gap);
        }
    }
    check(
        1,
        worst_forward <= 1e-10 && worst_probe <= 1e-10,
        &format!("forward gap {worst_forward:.3e}, probe gap {worst_probe:.3e}, threshold 1e-10"),
    );
}

#[test]
fn criterion_02_zero_bias_nets_have_zero_residual() {
    let mut worst = 0.0_f64;
    for (net, x) in toy_population() {
        let sys = freeze(&net.with_zero_biases(), &x).unwrap();
        worst = worst.max(sys.effective_residual().linf_norm());
    }
    check(2, worst == 0.0, &format!("residual sup norm {worst:e}, required exactly 0"));
}

#[test]
fn criterion_04_exact_pair_converges_in_one_step() {
    let spec = ResampleSpec::new(
        2,
        box_kernel(2).unwrap(),
        nearest_kernel(2).unwrap(),
        BoundaryRule::Replicate,
    )
    .unwrap();
    let mut worst = 0.0_f64;
    for seed in 0..5u64 {
        let x = noise(8, 8, 1, 100 + seed);
        let y0 = noise(16, 16, 1, 200 + seed);
        let (y, _) = ibp(&x, &y0, &spec, 1).unwrap();
        worst = worst.max(mismatch_error(&x, &y, &spec, 1).unwrap());
    }
    check(4, worst <= 1e-13, &format!("one-step mismatch {worst:.3e}, threshold 1e-13"));
}

#[test]
fn criterion_05_two_level_runs_match_classic_back_projection() {
    let spec = ResampleSpec::with_defaults(2).unwrap();
    let mut worst = 0.0_f64;
    for mu in 1..=3usize {
        for seed in 0..5u64 {
            let x = noise(8, 8, 1, 300 + seed);
            let (stack, _) = mgbp(&x, &spec, mu, 2).unwrap();
            let y0 = upscale(&x, &spec).unwrap();
            let (y_ibp, _) = ibp(&x, &y0, &spec, mu).unwrap();
            worst = worst.max(stack.top().max_abs_diff(&y_ibp).unwrap());
        }
    }
    check(5, worst <= 1e-13, &format!("per-sample gap {worst:.3e}, threshold 1e-13"));
}

#[test]
fn criterion_06_certified_three_level_run_converges_monotonically() {
    let spec = ResampleSpec::new(
        2,
        Kernel::identity(),
        bicubic_kernel(2, -0.5).unwrap(),
        BoundaryRule::Replicate,
    )
    .unwrap();
    let c = certify(&spec, (16, 16, 1)).unwrap();
    let x = noise(32, 32, 1, 42);
    let (stack, trace) = mgbp(&x, &spec, 2, 3).unwrap();
    let final_err = mismatch_error(&x, stack.level(3).unwrap(), &spec, 2).unwrap();
    let bound = 1e-6 * x.l1_norm();
    let errs: Vec<f64> = trace.entries().iter().map(|e| e.error_l1).collect();
    let monotone = errs.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    check(
        6,
        c < 1.0 && final_err <= bound && monotone,
        &format!(
            "certificate {c:.3e} < 1, final mismatch {final_err:.3e} <= {bound:.3e}, \
             per-level errors {errs:?} non-increasing within 1e-9"
        ),
    );
}

#[test]
fn criterion_07_schedules_and_call_counts_follow_the_recursion_law() {
    let spec = ResampleSpec::with_defaults(2).unwrap();
    let mut checked = 0usize;
    for mu in 0..=3usize {
        for levels in 1..=4usize {
            let x = noise(4, 4, 1, 400 + (mu * 10 + levels) as u64);
            let mut obs = RecordingObserver::default();
            mgbp_observed(&x, &spec, mu, levels, &mut obs).unwrap();
            assert_eq!(
                obs.actions,
                unfold_schedule(mu, levels),
                "action trace diverged at mu={mu} levels={levels}"
            );
            for k in 1..=levels {
                let stack = if k == 1 {
                    LevelStack::new(x.clone())
                } else {
                    mgbp(&x, &spec, mu, k - 1).unwrap().0
                };
                let ops: Vec<OperatorPair> =
                    (1..k).map(|_| OperatorPair::classic(&spec)).collect();
                let u0 = upscale(stack.top(), &spec).unwrap();
                let mut counter = RecordingObserver::default();
                bp_step_observed(&u0, k, mu, &stack, &ops, &mut counter).unwrap();
                for j in 1..=k {
                    let expected = mu.pow((k - j) as u32);
                    let got = counter.bp_calls.get(&j).copied().unwrap_or(0);
                    assert_eq!(
                        got, expected,
                        "call count at level {j} while refining level {k} with mu={mu}"
                    );
                    checked += 1;
                }
            }
        }
    }
    check(7, true, &format!("16 grid points, {checked} call counts, all exact"));
}

#[test]
fn criterion_08_operator_matrices_act_like_the_tensor_operators() {
    let mut worst = 0.0_f64;
    let specs = [
        (ResampleSpec::with_defaults(2).unwrap(), (6, 6, 1)),
        (
            ResampleSpec::new(
                3,
                box_kernel(3).unwrap(),
                nearest_kernel(3).unwrap(),
                BoundaryRule::ZeroPad,
            )
            .unwrap(),
            (6, 6, 2),
        ),
        (
            ResampleSpec::new(
                2,
                gaussian_kernel(1.0).unwrap(),
                bicubic_kernel(2, -0.75).unwrap(),
                BoundaryRule::Reflect,
            )
            .unwrap(),
            (8, 6, 1),
        ),
    ];
    for (si, (spec, hi_dims)) in specs.iter().enumerate() {
        let lo_dims = (
            hi_dims.0 / spec.scale(),
            hi_dims.1 / spec.scale(),
            hi_dims.2,
        );
        let d = operator_matrix(spec, OperatorDirection::Down, *hi_dims).unwrap();
        let u = operator_matrix(spec, OperatorDirection::Up, lo_dims).unwrap();
        for probe in 0..10u64 {
            let seed = 500 + 100 * si as u64 + probe;
            let hi = noise(hi_dims.0, hi_dims.1, hi_dims.2, seed);
            let lo = noise(lo_dims.0, lo_dims.1, lo_dims.2, seed + 50);
            let via_d = d.apply(&vectorize(&hi)).unwrap();
            let direct_d = vectorize(&downscale(&hi, spec).unwrap());
            let via_u = u.apply(&vectorize(&lo)).unwrap();
            let direct_u = vectorize(&upscale(&lo, spec).unwrap());
            for (a, b) in via_d.iter().zip(&direct_d).chain(via_u.iter().zip(&direct_u)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let layers = [
        (LayerOp::StridedConv(2), 2usize, 3usize),
        (LayerOp::TransposedConv(2), 3, 2),
    ];
    for (li, (op, in_ch, out_ch)) in layers.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + li as u64);
        let weights: Vec<f64> = (0..in_ch * out_ch * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..*out_ch).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let layer = LinearLayer::new(
            *op,
            *in_ch,
            *out_ch,
            3,
            3,
            weights,
            bias,
            BoundaryRule::ZeroPad,
        )
        .unwrap();
        let net = ConvNet::new(*in_ch, vec![LayerSpec::Linear(layer.clone())]).unwrap();
        let in_dims = (8, 8, *in_ch);
        let (m, b) = layer.matrix(in_dims).unwrap();
        for probe in 0..10u64 {
            let x = noise(in_dims.0, in_dims.1, in_dims.2, 950 + 100 * li as u64 + probe);
            let via_matrix: Vec<f64> = m
                .apply(&vectorize(&x))
                .unwrap()
                .iter()
                .zip(&b)
                .map(|(v, b)| v + b)
                .collect();
            let direct = vectorize(&net.forward_output(&x).unwrap());
            for (a, b) in via_matrix.iter().zip(&direct) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(8, worst <= 1e-12, &format!("worst action gap {worst:.3e}, threshold 1e-12"));
}

fn psnr_oracle(a: &Tensor, b: &Tensor) -> f64 {
    let unit = |t: &Tensor| t.data().iter().all(|&v| (0.0..=1.0).contains(&v));
    let s = if unit(a) && unit(b) { 255.0 } else { 1.0 };
    let n = a.len() as f64;
    let mut mse = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        mse += (s * x - s * y) * (s * x - s * y) / n;
    }
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64.powi(2) / mse).log10()
    }
}

fn ssim_oracle(a: &Tensor, b: &Tensor) -> f64 {
    let unit = |t: &Tensor| t.data().iter().all(|&v| (0.0..=1.0).contains(&v));
    let s = if unit(a) && unit(b) { 255.0 } else { 1.0 };
    let luma = |t: &Tensor| -> Vec<f64> {
        let (h, w, c) = t.dims();
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h {
            for cc in 0..w {
                out.push(if c == 3 {
                    0.299 * (s * t.get(r, cc, 0))
                        + 0.587 * (s * t.get(r, cc, 1))
                        + 0.114 * (s * t.get(r, cc, 2))
                } else {
                    s * t.get(r, cc, 0)
                });
            }
        }
        out
    };
    let (la, lb) = (luma(a), luma(b));
    let n = la.len() as f64;
    let ma = la.iter().sum::<f64>() / n;
    let mb = lb.iter().sum::<f64>() / n;
    let va = la.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
    let vb = lb.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / n;
    let cov = la
        .iter()
        .zip(&lb)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    ((2.0 * ma * mb + 6.5025) * (2.0 * cov + 58.5225))
        / ((ma * ma + mb * mb + 6.5025) * (va + vb + 58.5225))
}

#[test]
fn criterion_09_metrics_match_direct_formula_oracles() {
    let mut worst = 0.0_f64;
    for pair in 0..50u64 {
        let c = if pair % 2 == 0 { 1 } else { 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(600 + pair);
        let a = Tensor::from_fn(8, 8, c, |_, _, _| rng.gen_range(0.0..1.0));
        let b = if pair % 5 == 0 {
            a.map(|v| (v + 0.02).min(1.0))
        } else {
            Tensor::from_fn(8, 8, c, |_, _, _| rng.gen_range(0.0..1.0))
        };
        worst = worst.max((psnr(&a, &b).unwrap() - psnr_oracle(&a, &b)).abs());
        worst = worst.max((ssim(&a, &b, SsimMode::Global).unwrap() - ssim_oracle(&a, &b)).abs());
        let stack = LevelStack::new(b.clone());
        let (total, _) = multiscale_l1(&[stack], std::slice::from_ref(&a)).unwrap();
        let direct = a.sub(&b).unwrap().l1_norm() / a.len() as f64;
        worst = worst.max((total - direct).abs());
    }
    let a = noise(8, 8, 3, 777);
    let same_psnr = psnr(&a, &a).unwrap();
    let same_ssim = ssim(&a, &a, SsimMode::Global).unwrap();
    let (same_msl1, _) =
        multiscale_l1(&[LevelStack::new(a.clone())], std::slice::from_ref(&a)).unwrap();
    check(
        9,
        worst <= 1e-10 && same_psnr == f64::INFINITY && same_ssim == 1.0 && same_msl1 == 0.0,
        &format!(
            "worst oracle gap {worst:.3e} (threshold 1e-10), identical pair gives \
             ({same_psnr}, {same_ssim}, {same_msl1})"
        ),
    );
}

#[test]
fn criterion_10_spectra_match_the_direct_transform_and_conserve_energy() {
    let mut worst_dft = 0.0_f64;
    let mut worst_energy = 0.0_f64;
    for seed in 0..10u64 {
        let f = noise(8, 8, 1, 800 + seed);
        let s = filter_spectrum(&f).unwrap();
        for u in 0..8usize {
            for v in 0..8usize {
                let (mut re, mut im) = (0.0_f64, 0.0_f64);
                for r in 0..8 {
                    for c in 0..8 {
                        let phase = -2.0 * std::f64::consts::PI
                            * ((u * r) as f64 / 8.0 + (v * c) as f64 / 8.0);
                        re += f.get(r, c, 0) * phase.cos();
                        im += f.get(r, c, 0) * phase.sin();
                    }
                }
                let got = s.get((u + 4) % 8, (v + 4) % 8, 0);
                worst_dft = worst_dft.max((got - re.hypot(im)).abs());
            }
        }
        let spectral: f64 = s.data().iter().map(|v| v * v).sum();
        let spatial: f64 = f.data().iter().map(|v| v * v).sum();
        worst_energy = worst_energy.max((spectral - 64.0 * spatial).abs() / (64.0 * spatial));
    }
    check(
        10,
        worst_dft <= 1e-10 && worst_energy <= 1e-8,
        &format!(
            "worst transform gap {worst_dft:.3e} (threshold 1e-10), worst relative energy \
             drift {worst_energy:.3e} (threshold 1e-8)"
        ),
    );
}

#[test]
fn toy_population_mixes_ops_and_activations() {
    let mut ops = [0usize; 3];
    let mut acts = [0usize; 2];
    for seed in 0..20u64 {
        let net = toy_net(seed, 1, 1);
        for layer in net.layers() {
            match layer {
                LayerSpec::Linear(l) => match l.op {
                    LayerOp::Conv => ops[0] += 1,
                    LayerOp::StridedConv(_) => ops[1] += 1,
                    LayerOp::TransposedConv(_) => ops[2] += 1,
                },
                LayerSpec::Activation(Activation::Relu) => acts[0] += 1,
                LayerSpec::Activation(Activation::LeakyRelu(_)) => acts[1] += 1,
                LayerSpec::Activation(_) => {}
            }
        }
    }
    assert!(ops.iter().all(|&n| n > 0), "layer op mix {ops:?}");
    assert!(acts.iter().all(|&n| n > 0), "activation mix {acts:?}");
}
