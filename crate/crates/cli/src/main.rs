use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pilegen_core::coco_io::{read_dataset, read_detections, write_dataset, CocoDataset};
use pilegen_core::eval::{evaluate_kind, EvalReport, IouKind};
use pilegen_core::mixer::run_mix;
use pilegen_core::pipeline::{self, GeneratorConfig, ANNOTATIONS_FILE};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "pilegen",
    version,
    about = "Synthetic piled-carcass instance segmentation data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset of annotated images.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long, env = "PILEGEN_JOBS")]
        jobs: Option<usize>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Split real data and build real+synthetic training sets.
    Mix {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        /// Synthetic image counts, one training set each.
        #[arg(long, value_delimiter = ',', default_value = "0,250,500,750,1000")]
        settings: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train, validation and test fractions of the real images.
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.2,0.6")]
        fractions: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        dets: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Both)]
        kind: Kind,
        /// Also write the metrics as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Validate an annotation file (or output directory) and print statistics.
    Inspect {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Render one scene next to its false-color instance map.
    Preview {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Bbox,
    Segm,
    Both,
}

type Res = Result<(), Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            config,
            count,
            out,
            jobs,
            seed,
            quiet,
        } => cmd_generate(&config, count, &out, jobs, seed, quiet),
        Command::Mix {
            real,
            synthetic,
            settings,
            seed,
            fractions,
            out,
        } => cmd_mix(&real, &synthetic, &settings, seed, &fractions, &out),
        Command::Evaluate {
            gt,
            dets,
            kind,
            out,
            json,
        } => cmd_evaluate(&gt, &dets, kind, out.as_deref(), json),
        Command::Inspect { path, json } => cmd_inspect(&path, json),
        Command::Preview { config, seed, out } => cmd_preview(&config, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_generate(
    config: &Path,
    count: u64,
    out: &Path,
    jobs: Option<usize>,
    seed: Option<u64>,
    quiet: bool,
) -> Res {
    let mut cfg = GeneratorConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let jobs = jobs
        .filter(|&j| j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let step = (count / 20).max(1);
    let progress = |done: u64, total: u64| {
        if !quiet && (done.is_multiple_of(step) || done == total) {
            eprintln!("rendered {done}/{total}");
        }
    };
    let outcome = pipeline::generate(&cfg, count, out, jobs, &progress)?;
    if !quiet {
        let stages: Vec<String> = outcome
            .manifest
            .timings_ms
            .iter()
            .map(|(k, v)| format!("{k} {:.1}s", v / 1e3))
            .collect();
        eprintln!("timings: {}", stages.join(", "));
    }
    let r = &outcome.report;
    let reused = outcome.manifest.images.iter().filter(|i| i.reused).count();
    println!(
        "{} images, {} annotations ({} below min area, {} fully occluded, {} reused) -> {}",
        r.images,
        r.annotations,
        r.below_min_area,
        r.fully_occluded,
        reused,
        out.join(ANNOTATIONS_FILE).display()
    );
    Ok(())
}

fn cmd_mix(
    real: &Path,
    synthetic: &Path,
    settings: &[usize],
    seed: u64,
    fractions: &[f64],
    out: &Path,
) -> Res {
    let real = read_dataset(real)?;
    let pool = read_dataset(synthetic)?;
    let fractions: [f64; 3] = fractions
        .try_into()
        .map_err(|_| "--fractions needs three values")?;
    let outcome = run_mix(&real, &pool, settings, fractions, seed)?;
    fs::create_dir_all(out)?;
    write_dataset(&outcome.val, out.join("val.json"))?;
    write_dataset(&outcome.test, out.join("test.json"))?;
    let mut reports = Vec::new();
    for (train, report) in &outcome.settings {
        write_dataset(train, out.join(format!("train_{}.json", report.setting)))?;
        println!(
            "{:<16} real {:>5}  synthetic {:>5}  total {:>5}",
            report.setting, report.train_real, report.train_synthetic, report.train_total
        );
        reports.push(report);
    }
    let summary = json!({
        "seed": seed,
        "split_fractions": fractions,
        "val_images": outcome.val.images.len(),
        "test_images": outcome.test.images.len(),
        "settings": reports,
    });
    fs::write(
        out.join("mix_summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(())
}

fn cmd_evaluate(gt: &Path, dets: &Path, kind: Kind, out: Option<&Path>, as_json: bool) -> Res {
    let gt = read_dataset(gt)?;
    let dets = read_detections(dets, &gt)?;
    let bbox = match kind {
        Kind::Bbox | Kind::Both => Some(evaluate_kind(&gt, &dets, IouKind::Bbox)?),
        Kind::Segm => None,
    };
    let segm = match kind {
        Kind::Segm | Kind::Both => Some(evaluate_kind(&gt, &dets, IouKind::Segm)?),
        Kind::Bbox => None,
    };
    let report = EvalReport::from_kinds(bbox.as_ref(), segm.as_ref());
    let mut doc = serde_json::to_value(&report)?;
    for (name, m) in [("bbox", &bbox), ("segm", &segm)] {
        if let Some(m) = m {
            doc[format!("{name}_ap_per_threshold")] = json!(m.per_threshold);
        }
    }
    doc["images"] = json!(gt.images.len());
    doc["ground_truth"] = json!(gt.annotations.len());
    doc["detections"] = json!(dets.len());
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    if let Some(path) = out {
        fs::write(path, &text)?;
    }
    if as_json {
        print!("{text}");
    } else {
        print!("{}", report.table());
    }
    Ok(())
}

fn cmd_inspect(path: &Path, as_json: bool) -> Res {
    let file = if path.is_dir() {
        path.join(ANNOTATIONS_FILE)
    } else {
        path.to_path_buf()
    };
    let d = read_dataset(&file)?;
    let stats = statistics(&d);
    if as_json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!("{}: valid", file.display());
        for (k, v) in stats.as_object().expect("object") {
            println!("  {k:<22} {v}");
        }
    }
    Ok(())
}

fn statistics(d: &CocoDataset) -> Value {
    let by_image = d.annotations_by_image();
    let per_image: Vec<usize> = d
        .images
        .iter()
        .map(|i| by_image.get(&i.id).map_or(0, Vec::len))
        .collect();
    let areas: Vec<u64> = d.annotations.iter().map(|a| a.area).collect();
    let mut histogram = BTreeMap::new();
    for &n in &per_image {
        *histogram.entry(n.to_string()).or_insert(0u64) += 1;
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let per_image_f: Vec<f64> = per_image.iter().map(|&n| n as f64).collect();
    let areas_f: Vec<f64> = areas.iter().map(|&a| a as f64).collect();
    json!({
        "images": d.images.len(),
        "annotations": d.annotations.len(),
        "categories": d.categories.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
        "instances_per_image": histogram,
        "mean_instances": mean(&per_image_f),
        "min_area": areas.iter().min(),
        "max_area": areas.iter().max(),
        "mean_area": mean(&areas_f),
    })
}

fn cmd_preview(config: &Path, seed: u64, out: &Path) -> Res {
    let cfg = GeneratorConfig::load(config)?;
    let (png, fb) = pipeline::preview(&cfg, seed)?;
    fs::write(out, png)?;
    let visible = fb
        .visible_counts()
        .iter()
        .skip(1)
        .filter(|&&n| n > 0)
        .count();
    println!("{} visible instances -> {}", visible, out.display());
    Ok(())
}
