//! Command line driver: downscaling, certified upscaling, operator analysis,
//! frozen-filter visualization, metrics, and schedule unfolding, all as
//! deterministic file-to-file commands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mgbp_core::backprojection::{certify, ibp, mgbp, schedule_text, unfold_schedule};
use mgbp_core::convnet::{load_network, toy_net};
use mgbp_core::freeze::freeze;
use mgbp_core::io::{read_tensor, write_atomic, write_tensor};
use mgbp_core::metrics::{multiscale_l1, MetricReport};
use mgbp_core::resample::{multi_level_downscale, upscale, ResampleSpec};
use mgbp_core::tensor::Tensor;
use mgbp_core::vis::{filter_atlas, filter_spectrum, normalize_unit, FilterView};
use mgbp_core::LevelStack;

#[derive(Parser)]
#[command(name = "mgbp", version, about = "Multigrid back-projection upscaling toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Blur and decimate an image one or more times.
    Downscale(DownscaleArgs),
    /// Upscale an image by plain interpolation, classic back-projection, or
    /// the multigrid recursion.
    Upscale(UpscaleArgs),
    /// Build the downscale/upscale operator matrices on a small grid and
    /// report the contraction certificate.
    Analyze(AnalyzeArgs),
    /// Freeze a network at an input and export its effective filter atlas.
    Visualize(VisualizeArgs),
    /// Compare two images.
    Metrics(MetricsArgs),
    /// Print the refinement schedule for a choice of mu and level count.
    Unfold(UnfoldArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Per-level scale factor.
    #[arg(long, default_value_t = 2)]
    scale: usize,
    /// Boundary rule: replicate, reflect, or zero.
    #[arg(long, default_value = "replicate")]
    boundary: String,
    /// Blur kernel: gaussian[:sigma], delta, or average.
    #[arg(long = "kernel-g", default_value = "gaussian")]
    kernel_g: String,
    /// Interpolation kernel: bicubic[:a] or nearest.
    #[arg(long = "kernel-p", default_value = "bicubic")]
    kernel_p: String,
}

#[derive(Args)]
struct DownscaleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Number of downscaling applications.
    #[arg(long, default_value_t = 1)]
    levels: usize,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct UpscaleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// bicubic, ibp, or mgbp.
    #[arg(long, default_value = "mgbp")]
    method: String,
    /// Level count; the output lives at level `levels`.
    #[arg(long, default_value_t = 2)]
    levels: usize,
    /// Refinement rounds per level; iteration count for ibp.
    #[arg(long, default_value_t = 1)]
    mu: usize,
    /// Write the convergence trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Refuse to run unless the operator pair certifies contraction < 1 on
    /// the input grid.
    #[arg(long = "require-certified", default_value_t = false)]
    require_certified: bool,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Image whose dims set the low-resolution grid; defaults to 8x8.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Exit nonzero unless the certificate is below 1.
    #[arg(long = "require-certified", default_value_t = false)]
    require_certified: bool,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct VisualizeArgs {
    /// Freezing input image.
    #[arg(long)]
    input: PathBuf,
    /// Atlas output directory.
    #[arg(long)]
    output: PathBuf,
    /// Network manifest; without it a seeded toy network is used.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Pixels to query as "r,c,ch;r,c,ch;...".
    #[arg(long, default_value = "")]
    pixels: String,
    /// Also write the frequency magnitude of each filter.
    #[arg(long, default_value_t = false)]
    spectrum: bool,
    /// Render rows of the effective filter (per-output-pixel view) instead
    /// of columns.
    #[arg(long = "row-view", default_value_t = false)]
    row_view: bool,
    /// Seed for the fallback toy network.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MetricsArgs {
    /// Image pair; pass --input twice.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct UnfoldArgs {
    #[arg(long, default_value_t = 1)]
    mu: usize,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Write the schedule here instead of printing it.
    #[arg(long)]
    output: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Contract(String),
    Fail(anyhow::Error),
}

impl From<mgbp_core::Error> for CliError {
    fn from(e: mgbp_core::Error) -> CliError {
        CliError::Fail(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Fail(e.into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() {
    let code = match run(Cli::parse()) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(CliError::Contract(m)) => {
            eprintln!("error: {m}");
            3
        }
        Err(CliError::Fail(e)) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Downscale(a) => cmd_downscale(a),
        Cmd::Upscale(a) => cmd_upscale(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Visualize(a) => cmd_visualize(a),
        Cmd::Metrics(a) => cmd_metrics(a),
        Cmd::Unfold(a) => cmd_unfold(a),
    }
}

fn build_spec(args: &SpecArgs) -> Result<ResampleSpec, CliError> {
    if args.scale < 2 {
        return Err(usage(format!("--scale must be at least 2, got {}", args.scale)));
    }
    ResampleSpec::from_names(args.scale, &args.kernel_g, &args.kernel_p, &args.boundary)
        .map_err(|e| usage(e.to_string()))
}

fn check_levels(levels: usize) -> Result<(), CliError> {
    if levels < 1 {
        return Err(usage("--levels must be at least 1"));
    }
    Ok(())
}

fn level_path(output: &Path, k: usize) -> PathBuf {
    let stem = output.file_stem().unwrap_or_default().to_string_lossy();
    let ext = output
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    output.with_file_name(format!("{stem}_level{k}{ext}"))
}

fn write_output(path: &Path, t: &Tensor) -> Result<(), CliError> {
    write_tensor(path, t)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_downscale(a: DownscaleArgs) -> Result<(), CliError> {
    check_levels(a.levels)?;
    let spec = build_spec(&a.spec)?;
    let x = read_tensor(&a.input)?;
    let y = multi_level_downscale(&x, &spec, a.levels)?;
    let (h, w, c) = x.dims();
    let (oh, ow, oc) = y.dims();
    println!("dims {h}x{w}x{c} -> {oh}x{ow}x{oc}");
    write_output(&a.output, &y)
}

fn certificate_gate(spec: &ResampleSpec, lo_dims: (usize, usize, usize)) -> Result<f64, CliError> {
    let c = certify(spec, lo_dims)?;
    if c >= 1.0 {
        return Err(CliError::Contract(format!(
            "operator pair is not certified on {}x{}x{}: contraction norm {c:.16e} >= 1",
            lo_dims.0, lo_dims.1, lo_dims.2
        )));
    }
    Ok(c)
}

fn cmd_upscale(a: UpscaleArgs) -> Result<(), CliError> {
    check_levels(a.levels)?;
    let spec = build_spec(&a.spec)?;
    let x = read_tensor(&a.input)?;
    let certified = if a.require_certified {
        Some(certificate_gate(&spec, x.dims())?)
    } else {
        None
    };
    let (stack, mut trace) = match a.method.as_str() {
        "bicubic" => mgbp(&x, &spec, 0, a.levels)?,
        "mgbp" => mgbp(&x, &spec, a.mu, a.levels)?,
        "ibp" => {
            if a.levels != 2 {
                return Err(usage(format!(
                    "--method ibp works on exactly 2 levels, got {}",
                    a.levels
                )));
            }
            let y0 = upscale(&x, &spec)?;
            let (y, trace) = ibp(&x, &y0, &spec, a.mu)?;
            let mut stack = LevelStack::new(x.clone());
            stack.push(y);
            (stack, trace)
        }
        other => {
            return Err(usage(format!(
                "unknown method {other:?} (expected bicubic, ibp, or mgbp)"
            )))
        }
    };
    if let Some(c) = certified {
        trace.set_certified_norm(c);
    }
    for k in 2..=stack.len() {
        let path = if k == stack.len() {
            a.output.clone()
        } else {
            level_path(&a.output, k)
        };
        write_output(&path, stack.level(k)?)?;
    }
    if stack.len() == 1 {
        write_output(&a.output, stack.level(1)?)?;
    }
    if let Some(trace_path) = &a.trace {
        write_atomic(trace_path, trace.to_csv().as_bytes())?;
        println!("wrote {}", trace_path.display());
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let spec = build_spec(&a.spec)?;
    let lo_dims = match &a.input {
        Some(path) => read_tensor(path)?.dims(),
        None => (8, 8, 1),
    };
    let c = certify(&spec, lo_dims)?;
    let certified = c < 1.0;
    println!("contraction_norm={c:.16e}");
    println!("certified={certified}");
    if a.require_certified && !certified {
        return Err(CliError::Contract(format!(
            "contraction norm {c:.16e} >= 1"
        )));
    }
    Ok(())
}

fn parse_pixels(text: &str) -> Result<Vec<(usize, usize, usize)>, CliError> {
    let mut out = Vec::new();
    for part in text.split(';').filter(|p| !p.trim().is_empty()) {
        let fields: Vec<&str> = part.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(usage(format!(
                "pixel {part:?} must be \"row,col,channel\""
            )));
        }
        let mut nums = [0usize; 3];
        for (slot, field) in nums.iter_mut().zip(&fields) {
            *slot = field
                .parse()
                .map_err(|_| usage(format!("pixel index {field:?} is not an integer")))?;
        }
        out.push((nums[0], nums[1], nums[2]));
    }
    Ok(out)
}

fn cmd_visualize(a: VisualizeArgs) -> Result<(), CliError> {
    let x = read_tensor(&a.input)?;
    let net = match &a.net {
        Some(path) => load_network(path)?,
        None => toy_net(a.seed, x.channels(), x.channels()),
    };
    let pixels = parse_pixels(&a.pixels)?;
    let view = if a.row_view {
        FilterView::Row
    } else {
        FilterView::Column
    };
    let sys = freeze(&net, &x)?;
    let entries = filter_atlas(&sys, &pixels, view, &a.output)?;
    for entry in &entries {
        println!("wrote {}", entry.path.display());
    }
    if a.spectrum {
        for &(r, c, ch) in &pixels {
            let filter = match view {
                FilterView::Column => sys.effective_filter((r, c, ch))?,
                FilterView::Row => sys.effective_filter_row((r, c, ch))?,
            };
            for oc in 0..filter.channels() {
                let (magnitude, _, _) = {
                    let spectrum = filter_spectrum(&filter.channel(oc)?)?;
                    normalize_unit(&spectrum)
                };
                let name = if filter.channels() == 1 {
                    format!("filter_r{r}_c{c}_ch{ch}_spectrum.png")
                } else {
                    format!("filter_r{r}_c{c}_ch{ch}_spectrum_out{oc}.png")
                };
                let path = a.output.join(name);
                write_tensor(&path, &magnitude)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> Result<(), CliError> {
    if a.inputs.len() != 2 {
        return Err(usage(format!(
            "metrics needs --input twice, got {} occurrence(s)",
            a.inputs.len()
        )));
    }
    let x = read_tensor(&a.inputs[0])?;
    let y = read_tensor(&a.inputs[1])?;
    let mut report = MetricReport::for_pair(&x, &y)?;
    let stack = LevelStack::new(y);
    let (msl1, _) = multiscale_l1(std::slice::from_ref(&stack), std::slice::from_ref(&x))?;
    report.msl1 = Some(msl1);
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_unfold(a: UnfoldArgs) -> Result<(), CliError> {
    check_levels(a.levels)?;
    let text = schedule_text(&unfold_schedule(a.mu, a.levels));
    match &a.output {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
