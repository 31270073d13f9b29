//! `lumiloc`: simulate, train, augment, run the full pipeline, evaluate.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 stage failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lumiloc::config::RunConfig;
use lumiloc::geometry::default_room;
use lumiloc::localizer::{random_search, split, trial_log_csv, CoordinateFrame, TrainedLocalizer};
use lumiloc::pipeline::{self, stage_seed, STAGE_CORPUS, STAGE_GAN, STAGE_SAMPLE, STAGE_SEARCH, STAGE_SPLIT, STAGE_STRESS};
use lumiloc::spectra::{spectra_to_csv_string, strip_coordinates, Dataset, Provenance};
use lumiloc::{report, simlab, tabgan, Error};

#[derive(Parser)]
#[command(name = "lumiloc", version, about = "Visible-light spectral localization with GAN augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the measurement campaign and write the corpus CSV.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split a corpus, search hyperparameters, save the best model.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the GAN on the train split, sample, pseudo-label with a model.
    Augment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every stage and write the output directory.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a model on a labeled CSV and write report files.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Supplies the room outline for the scatter plot.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Stage(Error),
}

fn config_error(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn stage(name: &'static str) -> impl Fn(Error) -> Failure {
    move |e| match e {
        Error::Stage { .. } => Failure::Stage(e),
        other => Failure::Stage(other.in_stage(name)),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).map_err(config_error)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str, name: &'static str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Stage(Error::Io { path: path.into(), source: e }.in_stage(name)))
}

fn mkdir(path: &Path, name: &'static str) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure::Stage(Error::Io { path: path.into(), source: e }.in_stage(name)))
}

fn run(cmd: Command) -> Result<String, Failure> {
    match cmd {
        Command::Simulate { config, out, seed } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let (room, layout) = cfg.room.build().map_err(config_error)?;
            let corpus = simlab::generate_corpus(
                &room,
                &layout,
                &cfg.lamps,
                &cfg.sensor,
                &cfg.protocol,
                stage_seed(cfg.seed, STAGE_CORPUS),
            )
            .map_err(stage("simulate"))?;
            corpus.save_csv(&out).map_err(stage("simulate"))?;
            Ok(format!("samples={} rps={} out={}", corpus.len(), layout.len(), out.display()))
        }
        Command::Train { config, data, out, seed } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let (room, _) = cfg.room.build().map_err(config_error)?;
            let features = cfg.localizer.features().map_err(config_error)?;
            let corpus = Dataset::load_csv(&data).map_err(stage("load"))?;
            let mut s = split(&corpus, cfg.split, stage_seed(cfg.seed, STAGE_SPLIT)).map_err(stage("split"))?;
            s.train = pipeline::apply_stress(&s.train, &cfg.stress, stage_seed(cfg.seed, STAGE_STRESS))
                .map_err(stage("stress"))?
                .0;
            let frame = CoordinateFrame::new(room.bounding_box()).map_err(stage("train"))?;
            let found = random_search(
                &s.train,
                &s.val,
                &cfg.localizer.search,
                cfg.localizer.trials,
                frame,
                features,
                stage_seed(cfg.seed, STAGE_SEARCH),
            )
            .map_err(stage("train"))?;
            found.model.save(&out).map_err(stage("train"))?;
            let log_path = out.with_extension("trials.csv");
            write(&log_path, &trial_log_csv(&found.log), "train")?;
            let test_cm = found.model.mean_error_cm(&s.test).map_err(stage("evaluate"))?;
            Ok(format!(
                "val_cm={:.3} test_cm={:.3} best_trial={} train_rows={} out={}",
                found.model.meta.val_mean_euclidean_cm,
                test_cm,
                found.best_trial,
                s.train.len(),
                out.display()
            ))
        }
        Command::Augment { config, data, model, out, seed } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let (room, _) = cfg.room.build().map_err(config_error)?;
            if cfg.augmentation.samples == 0 {
                return Err(Failure::Usage("augmentation.samples must be >= 1 for `augment`".into()));
            }
            let corpus = Dataset::load_csv(&data).map_err(stage("load"))?;
            let localizer = TrainedLocalizer::load(&model).map_err(stage("load"))?;
            let mut s = split(&corpus, cfg.split, stage_seed(cfg.seed, STAGE_SPLIT)).map_err(stage("split"))?;
            s.train = pipeline::apply_stress(&s.train, &cfg.stress, stage_seed(cfg.seed, STAGE_STRESS))
                .map_err(stage("stress"))?
                .0;
            mkdir(&out, "augment")?;
            let gan_cfg = tabgan::GanConfig {
                seed: stage_seed(cfg.seed, STAGE_GAN),
                ..cfg.gan.clone()
            };
            let (gan, log) = tabgan::train_gan(&strip_coordinates(&s.train), &gan_cfg).map_err(stage("gan"))?;
            gan.save(out.join("gan.model.json")).map_err(stage("gan"))?;
            write(&out.join("gan.log.csv"), &log.to_csv(), "gan")?;
            let synthetic =
                tabgan::sample(&gan, cfg.augmentation.samples, stage_seed(cfg.seed, STAGE_SAMPLE)).map_err(stage("sample"))?;
            write(&out.join("synthetic.csv"), &spectra_to_csv_string(&synthetic), "sample")?;
            let (pseudo, rep) = pipeline::pseudo_label(&localizer, &room, &synthetic, cfg.augmentation.density_cell_cm)
                .map_err(stage("pseudo_label"))?;
            let pseudo_ds = Dataset::new(pseudo.clone(), Provenance::Synthetic).map_err(stage("pseudo_label"))?;
            write(&out.join("pseudo.csv"), &pseudo_ds.to_csv_string(), "pseudo_label")?;
            let mixed = pipeline::mix(&s.train, &pseudo).map_err(stage("mix"))?;
            write(&out.join("mixed.csv"), &mixed.to_csv_string(), "mix")?;
            report::heatmap_svg(&rep.density, &room, out.join("heatmap.svg")).map_err(stage("report"))?;
            Ok(format!(
                "generated={} kept={} discarded={} mixed_rows={}",
                rep.generated,
                rep.kept,
                rep.discarded_oob,
                mixed.len()
            ))
        }
        Command::Pipeline { config, out, seed } => {
            let mut cfg = load_config(config.as_deref(), seed)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let dir = cfg.output_dir.clone();
            let run = pipeline::run_pipeline(&cfg, Some(&dir)).map_err(stage("pipeline"))?;
            let r = &run.result;
            Ok(format!(
                "baseline_cm={:.3} augmented_cm={:.3} kept={} discarded={} generated={} improvement={:.4} overlaps={} out={}",
                r.baseline.test.mean_euclidean_cm,
                r.augmented.test.mean_euclidean_cm,
                r.augmentation.kept,
                r.augmentation.discarded_oob,
                r.augmentation.generated,
                r.relative_improvement,
                r.isolation_overlaps,
                dir.display()
            ))
        }
        Command::Evaluate { model, data, report: dir, config } => {
            let room = match config {
                Some(p) => load_config(Some(&p), None)?.room.build().map_err(config_error)?.0,
                None => default_room::<f64>().0,
            };
            let m = TrainedLocalizer::load(&model).map_err(stage("load"))?;
            let test = Dataset::load_csv(&data).map_err(stage("load"))?;
            let summary = report::error_summary(&m, &test).map_err(stage("evaluate"))?;
            mkdir(&dir, "report")?;
            let pairs = [("model", &summary)];
            write(&dir.join("summary.csv"), &report::summary_csv(&pairs), "report")?;
            write(&dir.join("per_rp.csv"), &report::per_rp_csv(&pairs), "report")?;
            report::scatter_svg(&m, &room, &test, dir.join("scatter.svg")).map_err(stage("report"))?;
            Ok(format!(
                "mean_euclidean_cm={:.3} median_cm={:.3} p90_cm={:.3} n={}",
                summary.mean_euclidean_cm, summary.median_cm, summary.p90_cm, summary.n
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
