//! The augmentation method end to end: baseline search, GAN training on
//! the train split, sampling, pseudo-labeling with out-of-bounds
//! filtering, mixing, a second search, and paired evaluation on the
//! untouched test split.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, StressConfig};
use crate::error::{Error, Result};
use crate::geometry::RoomPolygon;
use crate::localizer::{random_search, split, trial_log_csv, CoordinateFrame, HyperParams, Splits, TrainedLocalizer, TrialRecord};
use crate::report::{self, DensityGrid, ErrorSummary, HistogramPair};
use crate::scalar::Scalar;
use crate::simlab::generate_corpus;
use crate::spectra::{strip_coordinates, Dataset, LabeledSample, Provenance, Source, Spectrum, CHANNELS};
use crate::tabgan::{sample, train_gan, GanLog, GanModel};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// Stage indices; stage `i` is seeded with `master ^ i`. Both searches
/// share [`STAGE_SEARCH`] so they draw the same trials.
pub const STAGE_CORPUS: u64 = 0;
pub const STAGE_SPLIT: u64 = 1;
pub const STAGE_SEARCH: u64 = 2;
pub const STAGE_GAN: u64 = 3;
pub const STAGE_SAMPLE: u64 = 4;
pub const STAGE_STRESS: u64 = 5;

pub fn stage_seed(master: u64, stage: u64) -> u64 {
    master ^ stage
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub generated: usize,
    pub discarded_oob: usize,
    pub kept: usize,
    pub density: DensityGrid,
}

/// Labels each spectrum with the model's prediction and keeps those
/// landing inside the room.
pub fn pseudo_label<T: Scalar>(
    m: &TrainedLocalizer<T>,
    room: &RoomPolygon<T>,
    spectra: &[Spectrum<T>],
    cell_cm: f64,
) -> Result<(Vec<LabeledSample<T>>, AugmentationReport)> {
    let mut density = DensityGrid::new(room, cell_cm)?;
    let mut kept = Vec::new();
    for s in spectra {
        let p = m.predict(s)?;
        if room.contains(p) {
            density.add(p);
            kept.push(LabeledSample {
                spectrum: *s,
                position: p,
                rp_id: None,
                seq: kept.len(),
                source: Source::Synthetic,
            });
        }
    }
    let report = AugmentationReport {
        generated: spectra.len(),
        discarded_oob: spectra.len() - kept.len(),
        kept: kept.len(),
        density,
    };
    Ok((kept, report))
}

pub fn mix<T: Scalar>(real: &Dataset<T>, pseudo: &[LabeledSample<T>]) -> Result<Dataset<T>> {
    let mut rows = real.samples().to_vec();
    rows.extend(pseudo.iter().map(|s| LabeledSample {
        source: Source::Synthetic,
        ..s.clone()
    }));
    Dataset::new(rows, Provenance::SyntheticMixed)
}

/// Drops `drop_fraction` (rounded) of each reference point's samples
/// inside the stress region. Returns the reduced set and the drop count.
pub fn apply_stress(train: &Dataset<f64>, stress: &StressConfig, seed: u64) -> Result<(Dataset<f64>, usize)> {
    if !stress.enabled {
        return Ok((train.clone(), 0));
    }
    let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, s) in train.samples().iter().enumerate() {
        if stress.region.contains(s.position) {
            groups.entry(s.rp_id).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropped = BTreeSet::new();
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let n = (idx.len() as f64 * stress.drop_fraction).round() as usize;
        dropped.extend(idx.into_iter().take(n));
    }
    let rows = train
        .samples()
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, s)| s.clone())
        .collect();
    Ok((Dataset::new(rows, train.provenance)?, dropped.len()))
}

/// Number of test rows whose CSV row text also appears in any of the
/// given training inputs.
pub fn isolation_overlaps<T: Scalar>(test: &Dataset<T>, inputs: &[&Dataset<T>]) -> usize {
    let seen: BTreeSet<String> = inputs
        .iter()
        .flat_map(|d| d.samples().iter().map(|s| s.row_key()))
        .collect();
    test.samples().iter().filter(|s| seen.contains(&s.row_key())).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub artifact: String,
    pub test: ErrorSummary,
    pub best_trial: usize,
    pub hyperparams: HyperParams,
    pub trials: Vec<TrialRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub channel: String,
    pub tv_distance: f64,
    pub wasserstein1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub schema_version: u32,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub corpus_rows: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
    pub stress_dropped: usize,
    pub mixed_rows: usize,
    /// `generated_grid` when the RPs come from `pitch_cm`, else `explicit`.
    pub reference_layout: String,
    /// Both models are scored on this same test split.
    pub shared_test_split: bool,
    pub baseline: ModelReport,
    pub augmented: ModelReport,
    pub augmentation: AugmentationReport,
    /// `(baseline - augmented) / baseline` on mean test error.
    pub relative_improvement: f64,
    pub histogram_bins: usize,
    pub histograms: Vec<HistogramSummary>,
    pub gan_warnings: Vec<String>,
    pub isolation_overlaps: usize,
    pub config: RunConfig,
}

impl PipelineResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema_version != RESULT_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported result schema version {}",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

/// Everything a run produces, in memory.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub result: PipelineResult,
    pub room: RoomPolygon<f64>,
    pub corpus: Dataset<f64>,
    /// `train` is after the stress drop.
    pub splits: Splits<f64>,
    pub baseline: TrainedLocalizer<f64>,
    pub augmented: TrainedLocalizer<f64>,
    pub gan: Option<(GanModel<f64>, GanLog)>,
    pub synthetic: Vec<Spectrum<f64>>,
    pub pseudo: Vec<LabeledSample<f64>>,
    pub mixed: Dataset<f64>,
    pub histograms: Vec<HistogramPair>,
}

struct Sink<'a>(Option<&'a Path>);

impl Sink<'_> {
    fn put(&self, name: &str, text: &str) -> Result<()> {
        match self.0 {
            Some(dir) => report::write(dir.join(name), text),
            None => Ok(()),
        }
    }
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

/// Runs every stage. With `out` set, each artifact is written as soon as
/// its stage finishes, so a failing run leaves its earlier outputs behind.
pub fn run_pipeline(cfg: &RunConfig, out: Option<&Path>) -> Result<PipelineRun> {
    staged("config", cfg.validate())?;
    if let Some(dir) = out {
        staged("output", std::fs::create_dir_all(dir.join("report")).map_err(|e| Error::io(dir, e)))?;
    }
    let sink = Sink(out);
    let seed = |stage| stage_seed(cfg.seed, stage);
    let (room, layout) = staged("config", cfg.room.build())?;

    let corpus = staged(
        "corpus",
        match &cfg.corpus {
            Some(path) => Dataset::load_csv(path),
            None => generate_corpus(&room, &layout, &cfg.lamps, &cfg.sensor, &cfg.protocol, seed(STAGE_CORPUS)),
        },
    )?;
    staged("corpus", sink.put("corpus.csv", &corpus.to_csv_string()))?;

    let mut splits = staged("split", split(&corpus, cfg.split, seed(STAGE_SPLIT)))?;
    let (train, stress_dropped) = staged("stress", apply_stress(&splits.train, &cfg.stress, seed(STAGE_STRESS)))?;
    splits.train = train;
    let frame = staged("split", CoordinateFrame::new(room.bounding_box()))?;
    let features = staged("config", cfg.localizer.features())?;
    let search = |train: &Dataset<f64>| {
        random_search(
            train,
            &splits.val,
            &cfg.localizer.search,
            cfg.localizer.trials,
            frame,
            features,
            seed(STAGE_SEARCH),
        )
    };

    let base = staged("baseline", search(&splits.train))?;
    staged("baseline", sink.put("baseline.model.json", &base.model.to_json()))?;
    staged("baseline", sink.put("baseline.trials.csv", &trial_log_csv(&base.log)))?;

    let real_spectra = strip_coordinates(&splits.train);
    let n = cfg.augmentation.samples;
    let (gan, synthetic) = if n == 0 {
        (None, Vec::new())
    } else {
        let gan_cfg = crate::tabgan::GanConfig {
            seed: seed(STAGE_GAN),
            ..cfg.gan.clone()
        };
        let (model, log) = staged("gan", train_gan(&real_spectra, &gan_cfg))?;
        staged("gan", sink.put("gan.model.json", &model.to_json()))?;
        staged("gan", sink.put("gan.log.csv", &log.to_csv()))?;
        let synthetic = staged("sample", sample(&model, n, seed(STAGE_SAMPLE)))?;
        (Some((model, log)), synthetic)
    };
    staged("sample", sink.put("synthetic.csv", &crate::spectra::spectra_to_csv_string(&synthetic)))?;

    let (pseudo, augmentation) = staged(
        "pseudo_label",
        pseudo_label(&base.model, &room, &synthetic, cfg.augmentation.density_cell_cm),
    )?;
    let pseudo_ds = staged("pseudo_label", Dataset::new(pseudo.clone(), Provenance::Synthetic))?;
    staged("pseudo_label", sink.put("pseudo.csv", &pseudo_ds.to_csv_string()))?;

    let mixed = staged("mix", mix(&splits.train, &pseudo))?;
    staged("mix", sink.put("mixed.csv", &mixed.to_csv_string()))?;

    let aug = staged("retrain", search(&mixed))?;
    staged("retrain", sink.put("augmented.model.json", &aug.model.to_json()))?;
    staged("retrain", sink.put("augmented.trials.csv", &trial_log_csv(&aug.log)))?;

    let base_test = staged("evaluate", report::error_summary(&base.model, &splits.test))?;
    let aug_test = staged("evaluate", report::error_summary(&aug.model, &splits.test))?;
    let histograms = if synthetic.is_empty() {
        Vec::new()
    } else {
        staged(
            "evaluate",
            (0..CHANNELS)
                .map(|c| report::histogram_distance(&real_spectra, &synthetic, c, cfg.augmentation.histogram_bins))
                .collect::<Result<Vec<_>>>(),
        )?
    };
    let overlaps = isolation_overlaps(&splits.test, &[&corpus_training_view(&splits), &mixed]);

    let stage_seeds = [
        ("corpus", STAGE_CORPUS),
        ("split", STAGE_SPLIT),
        ("search", STAGE_SEARCH),
        ("gan", STAGE_GAN),
        ("sample", STAGE_SAMPLE),
        ("stress", STAGE_STRESS),
    ]
    .into_iter()
    .map(|(k, s)| (k.to_string(), seed(s)))
    .collect();
    let result = PipelineResult {
        schema_version: RESULT_SCHEMA_VERSION,
        seed: cfg.seed,
        stage_seeds,
        corpus_rows: corpus.len(),
        train_rows: splits.train.len(),
        val_rows: splits.val.len(),
        test_rows: splits.test.len(),
        stress_dropped,
        mixed_rows: mixed.len(),
        reference_layout: if cfg.room.reference_points.is_some() { "explicit" } else { "generated_grid" }.into(),
        shared_test_split: true,
        relative_improvement: (base_test.mean_euclidean_cm - aug_test.mean_euclidean_cm) / base_test.mean_euclidean_cm,
        baseline: ModelReport {
            artifact: "baseline.model.json".into(),
            test: base_test,
            best_trial: base.best_trial,
            hyperparams: base.best,
            trials: base.log,
        },
        augmented: ModelReport {
            artifact: "augmented.model.json".into(),
            test: aug_test,
            best_trial: aug.best_trial,
            hyperparams: aug.best,
            trials: aug.log,
        },
        augmentation,
        histogram_bins: cfg.augmentation.histogram_bins,
        histograms: histograms
            .iter()
            .map(|h| HistogramSummary {
                channel: h.channel.clone(),
                tv_distance: h.tv_distance,
                wasserstein1: h.wasserstein1,
            })
            .collect(),
        gan_warnings: gan.as_ref().map(|g| g.1.warnings.clone()).unwrap_or_default(),
        isolation_overlaps: overlaps,
        config: cfg.clone(),
    };
    let run = PipelineRun {
        result,
        room,
        corpus,
        splits,
        baseline: base.model,
        augmented: aug.model,
        gan,
        synthetic,
        pseudo,
        mixed,
        histograms,
    };
    if let Some(dir) = out {
        staged("report", write_report(&run, &dir.join("report")))?;
        staged("report", sink.put("result.json", &run.result.to_json()))?;
    }
    Ok(run)
}

/// Train and validation rows together: everything either search saw
/// besides the pseudo-labeled rows.
fn corpus_training_view(s: &Splits<f64>) -> Dataset<f64> {
    let mut rows = s.train.samples().to_vec();
    rows.extend_from_slice(s.val.samples());
    Dataset::new(rows, s.train.provenance).expect("rows are already valid")
}

/// `summary.csv`, `per_rp.csv`, `hist_<channel>.csv`, `scatter.svg`
/// (augmented model) and `heatmap.svg`.
pub fn write_report(run: &PipelineRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let r = &run.result;
    let pairs = [("baseline", &r.baseline.test), ("augmented", &r.augmented.test)];
    let mut summary = report::summary_csv(&pairs);
    for (k, v) in [
        ("generated", r.augmentation.generated as f64),
        ("kept", r.augmentation.kept as f64),
        ("discarded_oob", r.augmentation.discarded_oob as f64),
        ("relative_improvement", r.relative_improvement),
        ("histogram_bins", r.histogram_bins as f64),
    ] {
        summary.push_str(&format!("{k},{v}\n"));
    }
    report::write(dir.join("summary.csv"), &summary)?;
    report::write(dir.join("per_rp.csv"), &report::per_rp_csv(&pairs))?;
    for h in &run.histograms {
        report::write(dir.join(format!("hist_{}.csv", h.channel)), &h.to_csv())?;
    }
    report::scatter_svg(&run.augmented, &run.room, &run.splits.test, dir.join("scatter.svg"))?;
    report::heatmap_svg(&r.augmentation.density, &run.room, dir.join("heatmap.svg"))
}
