//! `mscnn`: build datasets, train, filter YUV sequences, and report
//! quality and Bjøntegaard deltas.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use mscnn::data::{build_dataset, read_yuv, write_yuv, LumaSource, PatchSet};
use mscnn::inference::filter_sequence;
use mscnn::metrics::{bd_report, psnr, ssim, RdCurve, RdPoint, CSV_HEADER};
use mscnn::model::Mscnn;
use mscnn::network::{parameter_count, PARAMETER_COUNT_NOTE, REFERENCE_TABLE_TOTAL};
use mscnn::{checkpoint, training};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "mscnn", version, about)]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degrade the sources with the codec proxy and store patch triples.
    BuildData {
        /// Extra sources, appended to those in the config.
        #[arg(long = "source")]
        sources: Vec<PathBuf>,
    },
    /// Train one model for the configured QP.
    Train {
        /// Patch store; defaults to the configured dataset directory.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Write an initial checkpoint without training.
    Init {
        /// All-zero parameters: the filter becomes the identity.
        #[arg(long)]
        zero: bool,
        #[arg(long, default_value = "init.mscn")]
        name: String,
    },
    /// Filter the luma of a 4:2:0 sequence.
    Filter {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// File name under the output directory.
        #[arg(long)]
        output: String,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        /// Tile size; defaults to the configured patch size.
        #[arg(long)]
        patch: Option<usize>,
        /// Overlapping tiles every this many pixels, averaged on reassembly.
        #[arg(long)]
        overlap_stride: Option<usize>,
    },
    /// Per-frame and mean PSNR/SSIM of a test sequence against a reference.
    Eval {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        /// Bitrate of the test sequence; appends an RD point when given.
        #[arg(long)]
        bitrate: Option<f64>,
        /// RD curve under the output directory to append to.
        #[arg(long, default_value = "rd.csv")]
        rd_csv: String,
    },
    /// BD-rate and BD-PSNR between two RD curves.
    Bd {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Parameter count of the configured network.
    Params,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?.resolve(cli.seed, cli.out)?;
    match cli.command {
        Command::BuildData { sources } => build_data(&cfg, sources),
        Command::Train { data, init } => train(&cfg, data, init),
        Command::Init { zero, name } => init(&cfg, zero, &name),
        Command::Filter {
            checkpoint,
            input,
            output,
            width,
            height,
            patch,
            overlap_stride,
        } => {
            let patch = patch.unwrap_or(cfg.data.patch_size);
            filter(&cfg, &checkpoint, &input, &output, (width, height), patch, overlap_stride.unwrap_or(patch))
        }
        Command::Eval {
            reference,
            test,
            width,
            height,
            bitrate,
            rd_csv,
        } => eval(&cfg, &reference, &test, (width, height), bitrate, &rd_csv),
        Command::Bd { anchor, test } => bd(&cfg, &anchor, &test),
        Command::Params => params(&cfg),
    }
}

/// Rejects output names that would escape the output directory.
fn output_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    let p = Path::new(name);
    ensure!(
        p.components().all(|c| matches!(c, std::path::Component::Normal(_))),
        "output name {name:?} must be a plain relative path"
    );
    Ok(cfg.out.join(p))
}

fn is_yuv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("yuv"))
}

/// Expands directories (sorted, non-recursive) and opens every source.
fn open_sources(cfg: &RunConfig, paths: &[PathBuf]) -> Result<Vec<LumaSource>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            entries.retain(|e| e.is_file());
            entries.sort();
            files.extend(entries);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            bail!("source {} does not exist", p.display());
        }
    }
    ensure!(!files.is_empty(), "no source files found");
    files
        .iter()
        .map(|f| {
            if is_yuv(f) {
                let (Some(w), Some(h)) = (cfg.data.yuv_width, cfg.data.yuv_height) else {
                    bail!("{}: set data.yuv_width and data.yuv_height for .yuv sources", f.display());
                };
                Ok(LumaSource::open_yuv(f, w, h)?)
            } else {
                Ok(LumaSource::open_image(f)?)
            }
        })
        .collect()
}

fn build_data(cfg: &RunConfig, extra: Vec<PathBuf>) -> Result<()> {
    let paths: Vec<PathBuf> = cfg.data.sources.iter().cloned().chain(extra).collect();
    // Everything is read and built before the first write.
    let sources = open_sources(cfg, &paths)?;
    let dataset = build_dataset(&sources, &cfg.data.spec())?;
    cfg.echo()?;
    let dir = cfg.dataset_dir();
    dataset.write(&dir)?;
    println!("sources: {}", sources.len());
    for (qp, set) in &dataset.sets {
        println!("qp {qp}: {} patch triples", training::PatchSource::len(set));
    }
    println!("manifest entries: {}", dataset.manifest.len());
    if dataset.skipped_variants > 0 {
        println!("skipped {} augmented variants smaller than a patch", dataset.skipped_variants);
    }
    println!("dataset written to {}", dir.display());
    Ok(())
}

fn train(cfg: &RunConfig, data: Option<PathBuf>, init: Option<PathBuf>) -> Result<()> {
    let dir = data.unwrap_or_else(|| cfg.dataset_dir());
    let set = PatchSet::load(&dir, cfg.train.qp)?;
    let network = cfg.network.build()?;
    let model = match init {
        Some(p) => {
            let m = checkpoint::load(&p)?;
            ensure!(m.config() == &network, "{} was saved for a different network", p.display());
            m
        }
        None => Mscnn::new(network, cfg.seed)?,
    };
    ensure!(
        set.patch_size() % model.config().downsampling_factor() == 0,
        "patch size {} is not a multiple of the network's downsampling factor {}",
        set.patch_size(),
        model.config().downsampling_factor()
    );
    cfg.echo()?;
    let out = training::train(model, &set, &cfg.train, &cfg.loss, &cfg.out, |r| {
        println!(
            "epoch {:>4}  mean loss {:.6e}  lr {:.3e}{}",
            r.epoch,
            r.mean_loss,
            r.lr,
            if r.lr_dropped { "  (learning rate dropped)" } else { "" }
        );
    })?;
    println!("checkpoint: {}", out.checkpoint.display());
    println!("loss curve: {}", out.loss_curve.display());
    Ok(())
}

fn init(cfg: &RunConfig, zero: bool, name: &str) -> Result<()> {
    let network = cfg.network.build()?;
    let model = if zero { Mscnn::zeros(network)? } else { Mscnn::new(network, cfg.seed)? };
    let path = output_path(cfg, name)?;
    cfg.echo()?;
    checkpoint::save(&model, &path)?;
    println!("checkpoint: {}", path.display());
    Ok(())
}

fn filter(
    cfg: &RunConfig,
    ckpt: &Path,
    input: &Path,
    output: &str,
    (width, height): (usize, usize),
    patch: usize,
    stride: usize,
) -> Result<()> {
    let model = checkpoint::load(ckpt)?;
    let seq = read_yuv(input, width, height)?;
    let target = output_path(cfg, output)?;
    ensure!(
        target.canonicalize().ok() != input.canonicalize().ok() || !target.exists(),
        "refusing to overwrite the input"
    );
    let filtered = filter_sequence(&model, &seq, patch, stride)?;
    cfg.echo()?;
    write_yuv(&filtered, &target)?;
    println!("filtered {} frames -> {}", filtered.frames().len(), target.display());
    Ok(())
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

fn eval(
    cfg: &RunConfig,
    reference: &Path,
    test: &Path,
    (width, height): (usize, usize),
    bitrate: Option<f64>,
    rd_csv: &str,
) -> Result<()> {
    let a = read_yuv(reference, width, height)?;
    let b = read_yuv(test, width, height)?;
    ensure!(
        a.frames().len() == b.frames().len(),
        "frame counts differ: {} vs {}",
        a.frames().len(),
        b.frames().len()
    );
    let mut table = String::from("frame,psnr_db,ssim\n");
    let (mut psnr_sum, mut ssim_sum) = (0.0, 0.0);
    for (i, (fa, fb)) in a.frames().iter().zip(b.frames()).enumerate() {
        let p = psnr(&fa.y, &fb.y)?;
        let s = ssim(&fa.y, &fb.y)?;
        println!("frame {i:>4}  psnr {:>8} dB  ssim {s:.6}", fmt_db(p));
        let _ = writeln!(table, "{i},{},{s:.6}", fmt_db(p));
        psnr_sum += p;
        ssim_sum += s;
    }
    let n = a.frames().len() as f64;
    let (mean_psnr, mean_ssim) = (psnr_sum / n, ssim_sum / n);
    println!("mean        psnr {:>8} dB  ssim {mean_ssim:.6}", fmt_db(mean_psnr));
    let _ = writeln!(table, "mean,{},{mean_ssim:.6}", fmt_db(mean_psnr));
    cfg.echo()?;
    std::fs::write(cfg.out.join("eval.csv"), table)?;
    if let Some(kbps) = bitrate {
        ensure!(kbps > 0.0 && kbps.is_finite(), "bitrate must be positive");
        ensure!(mean_psnr.is_finite(), "cannot add an RD point with infinite PSNR");
        let path = output_path(cfg, rd_csv)?;
        let mut text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => format!("{CSV_HEADER}\n"),
            Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
        };
        let point = RdPoint { bitrate: kbps, quality: mean_psnr };
        let _ = writeln!(text, "{},{}", point.bitrate, point.quality);
        std::fs::write(&path, text)?;
        println!("rd point appended to {}", path.display());
    }
    Ok(())
}

fn bd(cfg: &RunConfig, anchor: &Path, test: &Path) -> Result<()> {
    let a = RdCurve::read_csv(anchor)?;
    let t = RdCurve::read_csv(test)?;
    let report = bd_report(&a, &t)?;
    println!("BD-BR   {:+.4} %", report.bd_rate);
    println!("BD-PSNR {:+.4} dB", report.bd_psnr);
    cfg.echo()?;
    std::fs::write(cfg.out.join("bd_report.toml"), report.to_string())?;
    Ok(())
}

fn params(cfg: &RunConfig) -> Result<()> {
    let network = cfg.network.build()?;
    let branch = parameter_count(&network);
    let model = Mscnn::<f32>::zeros(network)?;
    let total: usize = model.param_lens().iter().sum();
    println!("per-branch parameters: {branch}");
    println!("model parameters (two branches + gate): {total}");
    println!("published per-branch total: {REFERENCE_TABLE_TOTAL}");
    println!("note: {PARAMETER_COUNT_NOTE}");
    Ok(())
}
