use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use qwio_jpeg::exec::{self, Parallelism};
use qwio_jpeg::image_io::{self, DEFAULT_PROXY_LONG_EDGE};
use qwio_jpeg::metrics;
use qwio_jpeg::quant::{self, QuantTable};
use qwio_jpeg::qwio::{self, QwioConfig};
use qwio_jpeg::rd::{self, RdReport, DEFAULT_LAMBDA};
use qwio_jpeg::selftest;
use qwio_jpeg::{Error, ImagePlane};

#[derive(Parser)]
#[command(name = "qwio-jpeg", version, about = "Learn and evaluate adaptive JPEG luminance quantization tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a table from one or more training images.
    Optimize(OptimizeArgs),
    /// Encode one image at full resolution with a stored table.
    Compress(CompressArgs),
    /// Encode images with the baseline and a stored table and report both.
    Compare(CompareArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 32)]
    population: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 15)]
    stall: usize,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    gamma: f64,
    /// Long edge of the training proxy; larger images are downscaled.
    #[arg(long, default_value_t = DEFAULT_PROXY_LONG_EDGE)]
    proxy: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Trace CSV path (default `<out>/trace.csv`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    input: PathBuf,
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the lambda stored in the table.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Optimized table to compare against the baseline.
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    heatmaps: bool,
    /// Scale heat maps so the largest error maps to 255.
    #[arg(long, requires = "heatmaps")]
    normalize_heatmaps: bool,
    #[arg(long)]
    lambda: Option<f64>,
}

fn thread_cap() -> qwio_jpeg::Result<Option<usize>> {
    match std::env::var("QWIO_THREADS") {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("QWIO_THREADS must be a non-negative integer, got {v:?}"))),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn ensure_dir(dir: &Path) -> qwio_jpeg::Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::from)
}

fn effective_lambda(flag: Option<f64>, table: &QuantTable) -> qwio_jpeg::Result<f64> {
    let lambda = flag.or(table.lambda).unwrap_or(DEFAULT_LAMBDA);
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("lambda {lambda} must be finite and >= 0")));
    }
    Ok(lambda)
}

fn psnr_text(psnr: f64) -> String {
    if psnr.is_infinite() {
        "inf".into()
    } else {
        psnr.to_string()
    }
}

fn psnr_json(psnr: f64) -> Value {
    if psnr.is_infinite() {
        json!("inf")
    } else {
        json!(psnr)
    }
}

fn optimize(args: OptimizeArgs) -> qwio_jpeg::Result<()> {
    let config = QwioConfig {
        population_n: args.population,
        max_iters: args.iters,
        stall_limit: args.stall,
        gamma: args.gamma,
        lambda: args.lambda,
        seed: args.seed,
        ..QwioConfig::default()
    };
    config.validate()?;
    if args.proxy == 0 {
        return Err(Error::InvalidConfig("proxy must be >= 1".into()));
    }

    // every input must load before anything is written
    let mut images = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let plane = image_io::load_grayscale(path)?;
        images.push(image_io::resize_to_proxy(&plane, args.proxy));
    }

    let (table, outcome) = qwio::optimize_table(images, &QuantTable::baseline(), &config)?;
    ensure_dir(&args.out)?;
    let trace_path = args.trace.unwrap_or_else(|| args.out.join("trace.csv"));
    quant::save_table(&table, args.out.join("qbest.json"))?;
    image_io::write_atomic(&trace_path, qwio::trace_csv(&outcome.history, &config).as_bytes())?;
    eprintln!(
        "best J {:.6} after {} iterations ({})",
        outcome.best.cost,
        outcome.history.len(),
        if outcome.converged { "stalled" } else { "iteration cap" }
    );
    Ok(())
}

fn report_json(input: &Path, table_path: &Path, table: &QuantTable, plane: &ImagePlane, r: &RdReport) -> Value {
    json!({
        "image": input.display().to_string(),
        "table": table_path.display().to_string(),
        "table_origin": table.origin,
        "table_seed": table.seed,
        "width": plane.width(),
        "height": plane.height(),
        "mse": r.mse,
        "psnr_db": psnr_json(r.psnr),
        "ssim": r.ssim,
        "bpp": r.bpp,
        "cost_j": r.cost_j,
        "lambda": r.lambda,
    })
}

fn compress(args: CompressArgs) -> qwio_jpeg::Result<()> {
    let table = quant::load_table(&args.table)?;
    let lambda = effective_lambda(args.lambda, &table)?;
    let plane = image_io::load_grayscale(&args.input)?;
    let (report, rt) = rd::rd_evaluate(&plane, &table, lambda, Parallelism::default())?;
    ensure_dir(&args.out)?;
    let name = stem(&args.input);
    image_io::write_grayscale(&rt.reconstructed, args.out.join(format!("{name}.recon.pgm")))?;
    let mut text = serde_json::to_string_pretty(&report_json(&args.input, &args.table, &table, &plane, &report))
        .expect("json value serializes");
    text.push('\n');
    image_io::write_atomic(&args.out.join(format!("{name}.metrics.json")), text.as_bytes())?;
    Ok(())
}

struct ImageResult {
    id: String,
    baseline: RdReport,
    optimized: RdReport,
}

fn compare_one(
    path: &Path,
    id: &str,
    baseline: &QuantTable,
    optimized: &QuantTable,
    lambda: f64,
    heatmaps: Option<(&Path, bool)>,
) -> qwio_jpeg::Result<ImageResult> {
    let plane = image_io::load_grayscale(path)?;
    let (b, b_rt) = rd::rd_evaluate(&plane, baseline, lambda, Parallelism::Sequential)?;
    let (o, o_rt) = rd::rd_evaluate(&plane, optimized, lambda, Parallelism::Sequential)?;
    if let Some((dir, normalize)) = heatmaps {
        let suffix = metrics::heatmap_suffix(normalize);
        for (kind, rt) in [("baseline", &b_rt), ("optimized", &o_rt)] {
            let map = metrics::error_heatmap(&plane, &rt.reconstructed)?;
            metrics::export_heatmap(&map, dir.join(format!("{id}.{kind}{suffix}")), normalize)?;
        }
    }
    Ok(ImageResult { id: id.to_string(), baseline: b, optimized: o })
}

fn unique_ids(inputs: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = inputs.iter().map(|p| stem(p)).collect();
    stems
        .iter()
        .enumerate()
        .map(|(k, s)| if stems.iter().filter(|t| *t == s).count() > 1 { format!("{s}_{k}") } else { s.clone() })
        .collect()
}

fn csv_row(id: &str, kind: &str, psnr: f64, ssim: Option<f64>, bpp: f64, cost_j: f64) -> String {
    let ssim = ssim.map(|v| v.to_string()).unwrap_or_default();
    format!("{id},{kind},{},{ssim},{bpp},{cost_j}\n", psnr_text(psnr))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn summary_row(kind: &str, reports: &[&RdReport]) -> String {
    let ssim = if reports.iter().all(|r| r.ssim.is_some()) {
        Some(mean(reports.iter().map(|r| r.ssim.unwrap_or_default())))
    } else {
        None
    };
    csv_row(
        "mean",
        kind,
        mean(reports.iter().map(|r| r.psnr)),
        ssim,
        mean(reports.iter().map(|r| r.bpp)),
        mean(reports.iter().map(|r| r.cost_j)),
    )
}

fn compare(args: CompareArgs) -> qwio_jpeg::Result<()> {
    let optimized = quant::load_table(&args.table)?;
    let lambda = effective_lambda(args.lambda, &optimized)?;
    let baseline = QuantTable::baseline();
    ensure_dir(&args.out)?;
    let ids = unique_ids(&args.inputs);
    let jobs: Vec<(&PathBuf, &String)> = args.inputs.iter().zip(&ids).collect();
    let heatmaps = args.heatmaps.then_some((args.out.as_path(), args.normalize_heatmaps));
    let results = exec::map(Parallelism::default(), &jobs, |(path, id)| {
        compare_one(path, id, &baseline, &optimized, lambda, heatmaps)
    });

    let mut ok = Vec::new();
    for ((path, _), result) in jobs.iter().zip(results) {
        match result {
            Ok(r) => ok.push(r),
            Err(e) => eprintln!("skipping {}: {e}", path.display()),
        }
    }
    if ok.is_empty() {
        return Err(Error::EmptyInput("no image could be compared"));
    }

    let mut csv = format!(
        "# table={} origin={} seed={} lambda={}\nimage_id,table_kind,psnr_db,ssim,bpp,cost_j\n",
        args.table.display(),
        serde_json::to_value(optimized.origin).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        optimized.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
        lambda
    );
    for r in &ok {
        for (kind, rep) in [("baseline", &r.baseline), ("optimized", &r.optimized)] {
            csv.push_str(&csv_row(&r.id, kind, rep.psnr, rep.ssim, rep.bpp, rep.cost_j));
        }
    }
    csv.push_str(&summary_row("baseline", &ok.iter().map(|r| &r.baseline).collect::<Vec<_>>()));
    csv.push_str(&summary_row("optimized", &ok.iter().map(|r| &r.optimized).collect::<Vec<_>>()));
    image_io::write_atomic(&args.out.join("compare.csv"), csv.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> qwio_jpeg::Result<u8> {
    let threads = thread_cap()?;
    match cli.command {
        Command::Optimize(a) => exec::with_thread_cap(threads, || optimize(a))?,
        Command::Compress(a) => exec::with_thread_cap(threads, || compress(a))?,
        Command::Compare(a) => exec::with_thread_cap(threads, || compare(a))?,
        Command::Selftest => {
            let checks = selftest::run(&selftest::Hooks::default());
            print!("{}", selftest::render(&checks));
            return Ok(selftest::exit_code(&checks) as u8);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
