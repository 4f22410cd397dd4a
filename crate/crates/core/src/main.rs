//! Command-line front end for the embedding pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Array2;

use voxelle::classify::SelectionResult;
use voxelle::evaluate::{holdout_evaluate, sweep, training_report, EvaluationReport, Method};
use voxelle::grid::GridDims;
use voxelle::io::{load_dataset, load_manifest, read_nifti1, read_raw_volume, write_raw_volume};
use voxelle::pipeline::{load_config, run_pipeline, synthesize_cohort, RunConfig};
use voxelle::statmap::{build_map, threshold_map, write_statmap};
use voxelle::{ClassLabel, Result, ScanVolume};

#[derive(Parser)]
#[command(
    name = "voxelle",
    version,
    about = "Spatially constrained embedding, volume selection, and group maps for 4D scans"
)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base RNG seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic cohort with planted group effects.
    Synth,
    /// Embed one scan and write its spatial modes as a raw volume.
    Embed {
        /// Scan file (.rawvol or .nii).
        scan: PathBuf,
        /// Embedding dimension.
        #[arg(long)]
        d: usize,
        /// Reduction method (overrides the config file).
        #[arg(long)]
        method: Option<Method>,
    },
    /// Sweep the dimension grid on the training partition.
    Sweep {
        manifest: PathBuf,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Leave-one-out evaluation of the training partition at fixed
    /// dimension and volume set.
    Train {
        manifest: PathBuf,
        #[arg(long)]
        d: usize,
        /// Comma-separated volume indices.
        #[arg(long, value_delimiter = ',')]
        volumes: Vec<usize>,
        #[arg(long)]
        method: Option<Method>,
    },
    /// One-shot evaluation of the holdout partition at fixed dimension
    /// and volume set.
    Eval {
        manifest: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long, value_delimiter = ',')]
        volumes: Vec<usize>,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Group-difference maps over the combined cohort at given volumes.
    Maps {
        manifest: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long, value_delimiter = ',')]
        volumes: Vec<usize>,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Full pipeline: sweep, select, train, evaluate, maps.
    Run { manifest: PathBuf },
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn read_scan(path: &PathBuf) -> Result<ScanVolume> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "nii" => read_nifti1(path),
        _ => read_raw_volume(path),
    }
}

fn print_report(report: &EvaluationReport) {
    let m = &report.metrics;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into());
    println!(
        "{}: accuracy {:.3} (chance {:.3}), sensitivity {}, specificity {}, precision {}, n = {}",
        report.partition,
        m.accuracy,
        report.chance,
        opt(m.sensitivity),
        opt(m.specificity),
        opt(m.precision),
        report.n
    );
    if let Some(hw) = &report.half_widths {
        println!("  95% half-widths: accuracy ± {:.3}", hw.accuracy);
    }
}

fn print_selection(selection: &SelectionResult, d: usize) {
    println!("chosen d = {d}");
    print!("{}", selection.to_report());
}

fn grouped_modes(
    scans: &[ScanVolume],
    method: Method,
    d: usize,
    cfg: &RunConfig,
    radius: Option<usize>,
) -> Result<(Vec<Array2<f64>>, Vec<Array2<f64>>)> {
    let modes = voxelle::evaluate::reduced_modes(scans, method, d, &cfg.embed_config(radius))?;
    let mut patients = Vec::new();
    let mut controls = Vec::new();
    for (scan, m) in scans.iter().zip(modes) {
        match scan.label {
            Some(ClassLabel::Patient) => patients.push(m),
            Some(ClassLabel::Control) => controls.push(m),
            None => {}
        }
    }
    Ok((patients, controls))
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = effective_config(cli)?;

    match &cli.command {
        Command::Synth => {
            let manifest = synthesize_cohort(&cfg, &cli.out)?;
            println!("wrote cohort manifest {}", manifest.display());
        }
        Command::Embed { scan, d, method } => {
            if let Some(m) = method {
                cfg.method = *m;
            }
            let source = read_scan(scan)?;
            let modes =
                voxelle::evaluate::reduced_modes(std::slice::from_ref(&source), cfg.method, *d, &cfg.embed_config(None))?
                    .remove(0);
            let dims = source.dims();
            let embedded_dims = GridDims::new(dims.l, dims.w, dims.h, modes.ncols())?;
            let samples: Vec<f64> = modes.iter().copied().collect();
            let out_scan = ScanVolume::new(
                embedded_dims,
                samples,
                format!("{}_modes", source.subject),
                source.label,
            )?;
            std::fs::create_dir_all(&cli.out)?;
            let out_path = cli.out.join(format!("{}_modes.rawvol", source.subject));
            write_raw_volume(&out_scan, &out_path)?;
            println!(
                "embedded {} at d = {} ({} modes) -> {}",
                source.subject,
                d,
                modes.ncols(),
                out_path.display()
            );
        }
        Command::Sweep { manifest, method } => {
            if let Some(m) = method {
                cfg.method = *m;
            }
            let manifest = load_manifest(manifest)?;
            let dataset = load_dataset(&manifest)?;
            let grid = match (&manifest.grid_override, &cfg.grid) {
                (Some(g), _) => g.clone(),
                (None, Some(g)) => g.clone(),
                (None, None) => voxelle::evaluate::d_grid(manifest.dims.t, cfg.grid_points)?,
            };
            let result = sweep(
                &dataset.training,
                cfg.method,
                &cfg.embed_config(manifest.radius),
                &grid,
            )?;
            for p in &result.points {
                match &p.selection {
                    Some(sel) => println!("d = {}: accuracy {:.6}", p.d, sel.accuracy),
                    None => println!(
                        "d = {}: failed ({})",
                        p.d,
                        p.error.as_deref().unwrap_or("unknown")
                    ),
                }
            }
            print_selection(result.chosen(), result.chosen_d);
        }
        Command::Train {
            manifest,
            d,
            volumes,
            method,
        } => {
            if let Some(m) = method {
                cfg.method = *m;
            }
            let manifest = load_manifest(manifest)?;
            let dataset = load_dataset(&manifest)?;
            let report = training_report(
                &dataset.training,
                cfg.method,
                *d,
                volumes,
                &cfg.embed_config(manifest.radius),
            )?;
            print_report(&report);
        }
        Command::Eval {
            manifest,
            d,
            volumes,
            method,
        } => {
            if let Some(m) = method {
                cfg.method = *m;
            }
            let manifest = load_manifest(manifest)?;
            let dataset = load_dataset(&manifest)?;
            let report = holdout_evaluate(
                &dataset.training,
                &dataset.holdout,
                *d,
                volumes,
                cfg.method,
                &cfg.embed_config(manifest.radius),
            )?;
            print_report(&report);
        }
        Command::Maps {
            manifest,
            d,
            volumes,
            method,
        } => {
            if let Some(m) = method {
                cfg.method = *m;
            }
            let manifest = load_manifest(manifest)?;
            let dataset = load_dataset(&manifest)?;
            let combined: Vec<ScanVolume> = dataset
                .training
                .iter()
                .chain(&dataset.holdout)
                .cloned()
                .collect();
            let (patients, controls) =
                grouped_modes(&combined, cfg.method, *d, &cfg, manifest.radius)?;
            std::fs::create_dir_all(&cli.out)?;
            let kind = if cfg.welch {
                voxelle::statmap::TtestKind::Welch
            } else {
                voxelle::statmap::TtestKind::Pooled
            };
            for &volume in volumes {
                let map = build_map(&patients, &controls, &manifest.dims, volume, kind, cfg.alpha)?;
                let (_, significant) = threshold_map(&map, cfg.alpha)?;
                let path = cli.out.join(format!("volume_{volume}.statmap"));
                write_statmap(&map, &path)?;
                println!(
                    "volume {volume}: {significant} of {} voxels significant -> {}",
                    manifest.dims.voxels(),
                    path.display()
                );
            }
        }
        Command::Run { manifest } => {
            let summary = run_pipeline(manifest, &cfg, &cli.out)?;
            println!(
                "method {}: chosen d = {}, volumes [{}]",
                summary.method,
                summary.sweep.chosen_d,
                summary
                    .selection
                    .volumes
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            print_report(&summary.training);
            print_report(&summary.holdout);
            println!("artifacts in {}", summary.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not set thread count: {e}");
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
