//! Acceptance gate for the command line: the certified-contraction run and
//! bit-identical reruns, plus exit-code and equivalence checks.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mgbp_core::backprojection::certify;
use mgbp_core::convnet::{load_network, save_network, ConvNet};
use mgbp_core::io::{read_tensor, write_tensor};
use mgbp_core::resample::ResampleSpec;
use mgbp_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mgbp"))
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let out = bin().args(args).current_dir(dir).output().expect("spawn");
    assert!(
        out.status.success(),
        "mgbp {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str], dir: &Path) -> i32 {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn")
        .status
        .code()
        .expect("exit code")
}

fn noise(h: usize, w: usize, c: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(h, w, c, |_, _, _| rng.gen_range(0.1..0.9))
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn criterion_03_certified_contraction_governs_the_cli_run() {
    let dir = tempfile::tempdir().unwrap();
    write_tensor(&dir.path().join("x.mgt"), &noise(8, 8, 1, 3)).unwrap();

    let analyze = run_ok(&["analyze"], dir.path());
    let lines = stdout_lines(&analyze);
    let norm_line = lines
        .iter()
        .find(|l| l.starts_with("contraction_norm="))
        .expect("norm line");
    let c: f64 = norm_line["contraction_norm=".len()..].parse().unwrap();
    assert!(lines.iter().any(|l| l == "certified=true"));

    let recomputed = certify(&ResampleSpec::with_defaults(2).unwrap(), (8, 8, 1)).unwrap();
    assert!((c - recomputed).abs() <= 1e-12, "{c} vs {recomputed}");

    run_ok(
        &[
            "upscale",
            "--input", "x.mgt",
            "--output", "y.mgt",
            "--method", "ibp",
            "--levels", "2",
            "--mu", "30",
            "--trace", "trace.csv",
            "--require-certified",
        ],
        dir.path(),
    );
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut errors = Vec::new();
    let mut ratios = Vec::new();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        errors.push(fields[2].parse::<f64>().unwrap());
        if !fields[3].is_empty() {
            ratios.push(fields[3].parse::<f64>().unwrap());
        }
    }
    assert_eq!(errors.len(), 31);
    assert_eq!(ratios.len(), 30);
    let worst_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let bound = c.powi(30) * errors[0];
    let ok = c < 1.0 && worst_ratio <= c + 1e-9 && errors[30] <= bound;
    println!(
        "criterion 3: {} (certificate {c:.6}, worst step ratio {worst_ratio:.6}, final error \
         {:.3e} <= {bound:.3e})",
        if ok { "PASS" } else { "FAIL" },
        errors[30]
    );
    assert!(ok);
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_11_reruns_are_bit_identical() {
    let base = tempfile::tempdir().unwrap();
    write_tensor(&base.path().join("x.png"), &noise(16, 16, 3, 11)).unwrap();
    write_tensor(&base.path().join("a.mgt"), &noise(8, 8, 1, 12)).unwrap();
    write_tensor(&base.path().join("b.mgt"), &noise(8, 8, 1, 13)).unwrap();
    let inputs = ["x.png", "a.mgt", "b.mgt"];

    let configs: Vec<Vec<&str>> = vec![
        vec![
            "downscale", "--input", "x.png", "--output", "down.png", "--levels", "2",
        ],
        vec![
            "upscale", "--input", "a.mgt", "--output", "up.mgt", "--method", "mgbp",
            "--levels", "3", "--mu", "2", "--trace", "trace.csv",
        ],
        vec![
            "upscale", "--input", "a.mgt", "--output", "up_ibp.png", "--method", "ibp",
            "--mu", "5",
        ],
        vec!["analyze", "--kernel-g", "gaussian:0.7", "--kernel-p", "bicubic:-0.6"],
        vec![
            "visualize", "--input", "a.mgt", "--output", "atlas", "--pixels", "2,2,0;5,3,0",
            "--spectrum", "--seed", "9",
        ],
        vec!["metrics", "--input", "a.mgt", "--input", "b.mgt"],
        vec!["unfold", "--mu", "2", "--levels", "4", "--output", "schedule.txt"],
    ];

    let mut compared = 0usize;
    for config in &configs {
        let mut snapshots = Vec::new();
        let mut stdouts = Vec::new();
        for _run in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            for name in &inputs {
                std::fs::copy(base.path().join(name), dir.path().join(name)).unwrap();
            }
            let out = run_ok(config, dir.path());
            stdouts.push(out.stdout.clone());
            let mut snap = snapshot(dir.path());
            snap.retain(|(path, _)| !inputs.iter().any(|i| Path::new(i) == path));
            snapshots.push(snap);
        }
        assert_eq!(
            stdouts[0], stdouts[1],
            "stdout differs between reruns of {config:?}"
        );
        assert_eq!(
            snapshots[0].len(),
            snapshots[1].len(),
            "file sets differ for {config:?}"
        );
        assert!(
            !snapshots[0].is_empty() || config[0] == "analyze" || config[0] == "metrics",
            "no outputs written by {config:?}"
        );
        for ((pa, ba), (pb, bb)) in snapshots[0].iter().zip(&snapshots[1]) {
            assert_eq!(pa, pb, "file names differ for {config:?}");
            assert_eq!(ba, bb, "bytes differ at {} for {config:?}", pa.display());
            compared += 1;
        }
    }
    println!(
        "criterion 11: PASS ({} configs, {compared} output files byte-identical across reruns)",
        configs.len()
    );
}

#[test]
fn usage_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    write_tensor(&dir.path().join("x.mgt"), &noise(4, 4, 1, 1)).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["downscale", "--input", "x.mgt", "--output", "o.mgt", "--scale", "1"],
        vec!["upscale", "--input", "x.mgt", "--output", "o.mgt", "--method", "sinc"],
        vec![
            "upscale", "--input", "x.mgt", "--output", "o.mgt", "--method", "ibp",
            "--levels", "3",
        ],
        vec!["upscale", "--input", "x.mgt", "--output", "o.mgt", "--kernel-g", "median"],
        vec!["upscale", "--input", "x.mgt", "--output", "o.mgt", "--kernel-g", "gaussian:wide"],
        vec!["metrics", "--input", "x.mgt"],
        vec!["visualize", "--input", "x.mgt", "--output", "a", "--pixels", "1;2"],
        vec!["unfold", "--levels", "0"],
    ];
    for case in cases {
        assert_eq!(exit_code(&case, dir.path()), 2, "case {case:?}");
    }
}

#[test]
fn uncertified_pairs_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    write_tensor(&dir.path().join("x.mgt"), &noise(8, 8, 1, 2)).unwrap();
    let analyze = ["analyze", "--kernel-g", "gaussian:1.0", "--require-certified"];
    assert_eq!(exit_code(&analyze, dir.path()), 3);
    let upscale = [
        "upscale", "--input", "x.mgt", "--output", "y.mgt", "--kernel-g", "gaussian:1.0",
        "--require-certified",
    ];
    assert_eq!(exit_code(&upscale, dir.path()), 3);
    assert!(!dir.path().join("y.mgt").exists());
}

#[test]
fn analyze_reports_the_exact_identity_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(
        &["analyze", "--kernel-g", "average", "--kernel-p", "nearest"],
        dir.path(),
    );
    let lines = stdout_lines(&out);
    assert_eq!(lines[0], "contraction_norm=0.0000000000000000e0");
    assert_eq!(lines[1], "certified=true");
}

#[test]
fn two_level_runs_agree_across_methods() {
    let dir = tempfile::tempdir().unwrap();
    write_tensor(&dir.path().join("x.mgt"), &noise(8, 8, 1, 4)).unwrap();
    for mu in ["1", "3"] {
        run_ok(
            &[
                "upscale", "--input", "x.mgt", "--output", "ibp.mgt", "--method", "ibp",
                "--mu", mu,
            ],
            dir.path(),
        );
        run_ok(
            &[
                "upscale", "--input", "x.mgt", "--output", "mg.mgt", "--method", "mgbp",
                "--levels", "2", "--mu", mu,
            ],
            dir.path(),
        );
        assert_eq!(
            std::fs::read(dir.path().join("ibp.mgt")).unwrap(),
            std::fs::read(dir.path().join("mg.mgt")).unwrap(),
            "mu {mu}"
        );
    }
}

#[test]
fn bicubic_method_is_the_mu_zero_run() {
    let dir = tempfile::tempdir().unwrap();
    write_tensor(&dir.path().join("x.mgt"), &noise(6, 6, 1, 5)).unwrap();
    run_ok(
        &["upscale", "--input", "x.mgt", "--output", "b.mgt", "--method", "bicubic"],
        dir.path(),
    );
    run_ok(
        &[
            "upscale", "--input", "x.mgt", "--output", "z.mgt", "--method", "mgbp",
            "--mu", "0",
        ],
        dir.path(),
    );
    assert_eq!(
        std::fs::read(dir.path().join("b.mgt")).unwrap(),
        std::fs::read(dir.path().join("z.mgt")).unwrap()
    );
}

#[test]
fn downscale_matches_the_library_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let x = noise(16, 16, 1, 6);
    write_tensor(&dir.path().join("x.mgt"), &x).unwrap();
    run_ok(
        &["downscale", "--input", "x.mgt", "--output", "d.mgt", "--levels", "2"],
        dir.path(),
    );
    let spec = ResampleSpec::with_defaults(2).unwrap();
    let expected = mgbp_core::resample::multi_level_downscale(&x, &spec, 2).unwrap();
    write_tensor(&dir.path().join("lib.mgt"), &expected).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("d.mgt")).unwrap(),
        std::fs::read(dir.path().join("lib.mgt")).unwrap()
    );
}

#[test]
fn unfold_prints_the_single_pass_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(&["unfold", "--mu", "1", "--levels", "3"], dir.path());
    let expected = "2 upscale\n2 downscale\n2 correct\n3 upscale\n3 downscale\n2 downscale\n\
                    2 correct\n3 correct\n";
    assert_eq!(String::from_utf8_lossy(&out.stdout), expected);
}

#[test]
fn identity_manifest_yields_a_single_bright_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let net = ConvNet::new(1, vec![]).unwrap();
    save_network(&net, &dir.path().join("id.json")).unwrap();
    assert_eq!(load_network(&dir.path().join("id.json")).unwrap().layers().len(), 0);
    write_tensor(&dir.path().join("x.mgt"), &noise(5, 5, 1, 7)).unwrap();
    run_ok(
        &[
            "visualize", "--input", "x.mgt", "--output", "atlas", "--net", "id.json",
            "--pixels", "2,3,0",
        ],
        dir.path(),
    );
    let filter = read_tensor(&dir.path().join("atlas/filter_r2_c3_ch0.png")).unwrap();
    assert_eq!(filter.get(2, 3, 0), 1.0);
    assert_eq!(filter.l1_norm(), 1.0);
    let sidecar = std::fs::read_to_string(dir.path().join("atlas/atlas.txt")).unwrap();
    let residual_line = sidecar.lines().last().unwrap();
    assert_eq!(residual_line, "residual 0.0000000000000000e0 0.0000000000000000e0");
    let residual = read_tensor(&dir.path().join("atlas/residual.png")).unwrap();
    assert_eq!(residual.linf_norm(), 0.0);
}

#[test]
fn metrics_of_identical_files_peg_the_report() {
    let dir = tempfile::tempdir().unwrap();
    write_tensor(&dir.path().join("x.mgt"), &noise(6, 6, 3, 8)).unwrap();
    let out = run_ok(&["metrics", "--input", "x.mgt", "--input", "x.mgt"], dir.path());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "psnr_db=inf\nssim=1\nmsl1=0\n"
    );
}
