//! `apr`: amplitude-phase recombination and spectral diagnostics on image files.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use apr_core::augment::{apr_pair, AprConfig, AprMode, StandardAugment};
use apr_core::dataset::{self, DatasetManifest, DEFAULT_BATCH_SIZE};
use apr_core::filters::{compose_band_pair, Band};
use apr_core::io::{
    normalize_for_display, read_image, render_log_amplitude, render_phase, resize, write_image,
};
use apr_core::metrics::{self, CorruptionTable, Prediction, ScoredRecord};
use apr_core::sensitivity::{self, DEFAULT_NORM, DEFAULT_SAMPLE_SIZE};
use apr_core::spectral::{decompose, forward_dft};
use apr_core::templates::templates_at;
use apr_core::{Error, Image, Result};

#[derive(Parser)]
#[command(
    name = "apr",
    version,
    about = "Frequency-domain image augmentation and robustness diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the log-amplitude and phase spectra of an image.
    Decompose {
        input: PathBuf,
        #[arg(long)]
        amp: PathBuf,
        #[arg(long)]
        phase: PathBuf,
    },
    /// Amplitude of one image under the phase of another.
    Swap {
        phase_src: PathBuf,
        amp_src: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// All 16 amplitude-band x phase-band compositions of one image.
    Grid {
        input: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
    /// Augment every image listed in a manifest.
    Augment(AugmentArgs),
    /// Render the four contrast templates of one DFT frequency.
    Templates {
        #[arg(long)]
        size: usize,
        #[arg(long)]
        u: usize,
        #[arg(long)]
        v: usize,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Generate Fourier basis perturbations.
    Basis(BasisArgs),
    /// Add every basis in a directory to a sample of manifest images.
    Perturb {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "basis-dir")]
        basis_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
        sample: usize,
    },
    /// Aggregate per-frequency error counts into a 33x33 heatmap.
    Heatmap {
        /// `i,j,n_total,n_wrong` records or `path,true_label,pred_label` predictions.
        #[arg(long)]
        records: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
        #[arg(long)]
        png: Option<PathBuf>,
    },
    #[command(subcommand)]
    Metrics(MetricsCommand),
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = ["p", "s", "sp"])]
    mode: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    prob: f64,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    #[arg(long = "batch-size", default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    /// Thread count; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Random flip and padded crop before recombination.
    #[arg(long = "standard-pad")]
    standard_pad: Option<usize>,
}

#[derive(Args)]
struct BasisArgs {
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    /// `HxW`, or a single number for a square.
    #[arg(long, value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = DEFAULT_NORM)]
    norm: f64,
    #[arg(
        long,
        allow_negative_numbers = true,
        requires = "j",
        conflicts_with = "all"
    )]
    i: Option<i32>,
    #[arg(long, allow_negative_numbers = true, requires = "i")]
    j: Option<i32>,
    #[arg(long, required_unless_present = "i")]
    all: bool,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Corruption errors and their mean against a reference model.
    Mce {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// AUROC of max-softmax scores, in-distribution vs OOD.
    Auroc {
        #[arg(long)]
        scores: PathBuf,
    },
    /// OSCR, plus CCR/FPR at a threshold when given.
    Oscr {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Mix phase-model and amplitude-model probabilities per record id.
    Blend {
        #[arg(long)]
        phase: PathBuf,
        #[arg(long)]
        amp: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).unwrap_or((s, s));
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad size '{s}': {e}"))
    };
    Ok((parse(h)?, parse(w)?))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Decompose { input, amp, phase } => {
            let polar = decompose(&forward_dft(&read_image(&input)?));
            write_image(&render_log_amplitude(&polar)?, &amp)?;
            write_image(&render_phase(&polar)?, &phase)
        }
        Command::Swap {
            phase_src,
            amp_src,
            output,
        } => {
            let out = apr_pair(&read_image(&phase_src)?, &read_image(&amp_src)?)?;
            write_image(&out, &output)
        }
        Command::Grid {
            input,
            output,
            size,
        } => {
            let img = resize(&read_image(&input)?, size, size)?;
            for amp_band in Band::ALL {
                for phase_band in Band::ALL {
                    let out = compose_band_pair(&img, amp_band, &img, phase_band)?;
                    let name = format!("amp-{}_phase-{}.png", amp_band.name(), phase_band.name());
                    write_image(&out, output.join(name))?;
                }
            }
            Ok(())
        }
        Command::Augment(args) => augment(args),
        Command::Templates { size, u, v, output } => {
            let set = templates_at(size, u, v)?;
            for (name, grid) in set.named() {
                write_image(
                    &Image::from_grid(grid.clone())?,
                    output.join(format!("{name}.png")),
                )?;
            }
            Ok(())
        }
        Command::Basis(args) => basis(args),
        Command::Perturb {
            manifest,
            basis_dir,
            seed,
            output,
            sample,
        } => {
            let manifest = DatasetManifest::read(&manifest)?;
            let bases = dataset::read_basis_dir(&basis_dir)?;
            let out = dataset::perturb_manifest(&manifest, &bases, seed, sample, &output)?;
            println!("wrote {} images for {} frequencies", out.len(), bases.len());
            Ok(())
        }
        Command::Heatmap {
            records,
            output,
            png,
        } => heatmap(&records, &output, png.as_deref()),
        Command::Metrics(m) => run_metrics(m),
    }
}

fn augment(args: AugmentArgs) -> Result<()> {
    let manifest = DatasetManifest::read(&args.manifest)?;
    let config = AprConfig {
        apply_probability: args.prob,
        standard: args.standard_pad.map(|crop_padding| StandardAugment {
            flip: true,
            crop_padding,
        }),
        ..AprConfig::new(args.mode.parse::<AprMode>()?, args.seed)
    };
    let go = || dataset::augment_dataset(&manifest, &config, &args.output, args.batch_size);
    let out = match args.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(go)?,
        None => go()?,
    };
    println!("wrote {} images to {}", out.len(), args.output.display());
    Ok(())
}

fn basis(args: BasisArgs) -> Result<()> {
    let (h, w) = args.size;
    let freqs: Vec<(i32, i32)> = match (args.i, args.j) {
        (Some(i), Some(j)) => vec![(i, j)],
        _ => sensitivity::all_frequencies().collect(),
    };
    for (i, j) in freqs {
        let b = sensitivity::fourier_basis(h, w, i, j, args.norm)?;
        let json = args.output.join(format!("{}.json", b.stem()));
        create(&json)?
            .write_all(b.to_json().as_bytes())
            .map_err(|e| io_err(&json, e))?;
        write_image(
            &normalize_for_display(&b.image)?,
            args.output.join(format!("{}.png", b.stem())),
        )?;
    }
    Ok(())
}

fn heatmap(records: &Path, output: &Path, png: Option<&Path>) -> Result<()> {
    let mut text = String::new();
    open(records)?
        .read_to_string(&mut text)
        .map_err(|e| io_err(records, e))?;
    let header = text.lines().next().unwrap_or("");
    let recs = if header.split(',').any(|h| h.trim() == "pred_label") {
        sensitivity::records_from_predictions(&sensitivity::read_predictions(text.as_bytes())?)?
    } else {
        sensitivity::read_records(text.as_bytes())?
    };
    let (map, report) = sensitivity::aggregate_heatmap(&recs)?;
    let mut out = create(output)?;
    map.write_csv(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| io_err(output, e))?;
    if let Some(png) = png {
        write_image(&map.to_image(), png)?;
    }
    if report.is_complete() {
        println!("complete: all {} frequencies present", recs.len());
    } else {
        let missing: Vec<String> = report
            .missing
            .iter()
            .map(|(i, j)| format!("({i},{j})"))
            .collect();
        println!(
            "incomplete: {} frequencies missing: {}",
            missing.len(),
            missing.join(" ")
        );
    }
    Ok(())
}

fn read_scores(path: &Path) -> Result<Vec<ScoredRecord>> {
    metrics::read_scores(open(path)?)
}

fn run_metrics(cmd: MetricsCommand) -> Result<()> {
    match cmd {
        MetricsCommand::Mce { table, reference } => {
            let table = CorruptionTable::from_csv(open(&table)?)?;
            let reference = CorruptionTable::from_csv(open(&reference)?)?;
            let ces = table.corruption_errors(&reference)?;
            for (name, ce) in &ces {
                println!("{name},{:.2}", ce * 100.0);
            }
            let values: Vec<f64> = ces.iter().map(|c| c.1).collect();
            println!(
                "mCE,{:.2}",
                metrics::mean_corruption_error(&values)? * 100.0
            );
        }
        MetricsCommand::Auroc { scores } => {
            let recs = read_scores(&scores)?;
            let (ood, id): (Vec<_>, Vec<_>) = recs.iter().partition(|r| r.is_ood());
            let s = |v: &[&ScoredRecord]| v.iter().map(|r| r.score()).collect::<Vec<_>>();
            println!("{}", metrics::auroc(&s(&id), &s(&ood))?);
        }
        MetricsCommand::Oscr { scores, delta } => {
            let recs = read_scores(&scores)?;
            println!("oscr,{}", metrics::oscr(&recs)?);
            if let Some(d) = delta {
                let (ccr, fpr) = metrics::ccr_fpr_at(&recs, d)?;
                println!("ccr,{ccr}\nfpr,{fpr}");
            }
        }
        MetricsCommand::Blend {
            phase,
            amp,
            lambda,
            output,
        } => {
            let amp_recs: HashMap<String, ScoredRecord> = read_scores(&amp)?
                .into_iter()
                .map(|r| (r.id.clone(), r))
                .collect();
            let probs = |r: &ScoredRecord| match &r.prediction {
                Prediction::Probabilities(p) => Ok(p.clone()),
                Prediction::Top { .. } => Err(Error::Invalid(format!(
                    "record '{}' has no probability vector",
                    r.id
                ))),
            };
            let blended = read_scores(&phase)?
                .iter()
                .map(|r| {
                    let other = amp_recs.get(&r.id).ok_or_else(|| {
                        Error::Invalid(format!("record '{}' missing from {}", r.id, amp.display()))
                    })?;
                    let mixed = metrics::blend_predictions(&probs(r)?, &probs(other)?, lambda)?;
                    ScoredRecord::with_probabilities(r.id.clone(), r.true_label, mixed)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut out = create(&output)?;
            metrics::write_prob_scores(&blended, &mut out)?;
            out.flush().map_err(|e| io_err(&output, e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("apr: {e}");
            ExitCode::from(if e.is_io() { 4 } else { 3 })
        }
    }
}
