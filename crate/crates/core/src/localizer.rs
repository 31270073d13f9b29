//! Supervised position regressor: feature scaling, stratified splitting,
//! minibatch training with early stopping, and seeded random search.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Position};
use crate::nn::{adam_step, mse_loss, Activation, AdamConfig, AdamState, Cache, DenseNet, Gradients, Mode, OutputActivation};
use crate::scalar::Scalar;
use crate::spectra::{Dataset, LabeledSample, Spectrum, CHANNELS};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-channel min-max scaling fitted on the training split. Channels
/// with `max == min`, and channels switched off in `enabled`, map to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler<T> {
    pub min: [T; CHANNELS],
    pub max: [T; CHANNELS],
    pub enabled: [bool; CHANNELS],
}

impl<T: Scalar> FeatureScaler<T> {
    pub fn fit<'a>(spectra: impl IntoIterator<Item = &'a Spectrum<T>>, enabled: [bool; CHANNELS]) -> Result<Self> {
        let mut min = [T::infinity(); CHANNELS];
        let mut max = [T::neg_infinity(); CHANNELS];
        let mut n = 0usize;
        for s in spectra {
            n += 1;
            for (c, v) in s.channels().iter().enumerate() {
                min[c] = min[c].min(*v);
                max[c] = max[c].max(*v);
            }
        }
        if n == 0 {
            return Err(Error::InvalidArgument("cannot fit a scaler on no data".into()));
        }
        Ok(Self { min, max, enabled })
    }

    pub fn transform(&self, s: &Spectrum<T>) -> [T; CHANNELS] {
        let mut out = [T::zero(); CHANNELS];
        for c in 0..CHANNELS {
            let span = self.max[c] - self.min[c];
            if self.enabled[c] && span > T::zero() {
                out[c] = (s.get(c) - self.min[c]) / span;
            }
        }
        out
    }
}

/// Maps floor coordinates to `[0, 1]²` through the room bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateFrame<T> {
    pub min: Position<T>,
    pub max: Position<T>,
}

impl<T: Scalar> CoordinateFrame<T> {
    pub fn new(bb: BoundingBox<T>) -> Result<Self> {
        if !(bb.width() > T::zero() && bb.height() > T::zero()) {
            return Err(Error::Geometry("coordinate frame needs a non-degenerate box".into()));
        }
        Ok(Self { min: bb.min, max: bb.max })
    }

    pub fn normalize(&self, p: Position<T>) -> [T; 2] {
        [
            (p.x - self.min.x) / (self.max.x - self.min.x),
            (p.y - self.min.y) / (self.max.y - self.min.y),
        ]
    }

    pub fn denormalize(&self, u: [T; 2]) -> Position<T> {
        Position::new(
            self.min.x + u[0] * (self.max.x - self.min.x),
            self.min.y + u[1] * (self.max.y - self.min.y),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub hidden_layers: Vec<usize>,
    pub dropout_p: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            dropout_p: 0.0,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            patience: 25,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidArgument("dropout must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument("batch size, max epochs and patience must be >= 1".into()));
        }
        Ok(())
    }

    fn layers_label(&self) -> String {
        self.hidden_layers.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub hyperparams: HyperParams,
    /// Validation mean Euclidean error (cm) after each epoch.
    pub val_curve: Vec<f64>,
    pub best_epoch: usize,
    pub val_mean_euclidean_cm: f64,
    pub train_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainedLocalizer<T: Scalar> {
    pub format_version: u32,
    pub net: DenseNet<T>,
    pub scaler: FeatureScaler<T>,
    pub frame: CoordinateFrame<T>,
    pub meta: TrainingMeta,
}

impl<T: Scalar> TrainedLocalizer<T> {
    /// Eval-mode prediction in cm. May fall outside the room.
    pub fn predict(&self, s: &Spectrum<T>) -> Result<Position<T>> {
        let y = self.net.predict(&self.scaler.transform(s))?;
        let p = self.frame.denormalize([y[0], y[1]]);
        if !p.is_finite() {
            return Err(Error::NonFinite("predicted position".into()));
        }
        Ok(p)
    }

    pub fn predict_all<'a>(&self, spectra: impl IntoIterator<Item = &'a Spectrum<T>>) -> Result<Vec<Position<T>>> {
        spectra.into_iter().map(|s| self.predict(s)).collect()
    }

    /// Mean Euclidean error in cm over a labeled set.
    pub fn mean_error_cm(&self, ds: &Dataset<T>) -> Result<f64> {
        mean_error(&self.net, &self.scaler, &self.frame, ds.samples())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        if m.net.input_dim() != CHANNELS || m.net.output_dim() != 2 {
            return Err(Error::Shape("localizer network must map 11 inputs to 2 outputs".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn mean_error<T: Scalar>(
    net: &DenseNet<T>,
    scaler: &FeatureScaler<T>,
    frame: &CoordinateFrame<T>,
    samples: &[LabeledSample<T>],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("error over an empty set".into()));
    }
    let mut cache = Cache::default();
    let mut total = 0.0;
    for s in samples {
        net.forward_into(&scaler.transform(&s.spectrum), Mode::Eval, &mut cache)?;
        let y = cache.output();
        let p = frame.denormalize([y[0], y[1]]);
        total += p.distance(&s.position).f64();
    }
    Ok(total / samples.len() as f64)
}

/// Train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions {f:?} must be non-negative and sum to 1"
            )));
        }
        Ok(())
    }

    /// Per-RP allocation: floor of each share, remainders handed out
    /// train first, then val, then test (skipping zero fractions). A split
    /// with a positive fraction always receives at least one sample.
    pub fn allocate(&self, n: usize) -> [usize; 3] {
        let f = [self.train, self.val, self.test];
        let mut k = f.map(|v| (v * n as f64 + 1e-9).floor() as usize);
        let mut left = n - k.iter().sum::<usize>().min(n);
        while left > 0 {
            for i in 0..3 {
                if left > 0 && f[i] > 0.0 {
                    k[i] += 1;
                    left -= 1;
                }
            }
        }
        for i in 0..3 {
            if f[i] > 0.0 && k[i] == 0 {
                let donor = (0..3).max_by_key(|&j| (k[j], std::cmp::Reverse(j))).expect("three splits");
                if k[donor] > 1 {
                    k[donor] -= 1;
                    k[i] += 1;
                }
            }
        }
        k
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits<T: Scalar> {
    pub train: Dataset<T>,
    pub val: Dataset<T>,
    pub test: Dataset<T>,
}

/// Stratified split: each reference point's samples are shuffled and cut
/// by [`SplitFractions::allocate`], so every split covers every RP.
pub fn split<T: Scalar>(ds: &Dataset<T>, fractions: SplitFractions, seed: u64) -> Result<Splits<T>> {
    fractions.validate()?;
    let mut groups: BTreeMap<usize, Vec<&LabeledSample<T>>> = BTreeMap::new();
    for (i, s) in ds.samples().iter().enumerate() {
        let rp = s
            .rp_id
            .ok_or_else(|| Error::InvalidArgument(format!("sample {i} has no rp_id; cannot stratify")))?;
        groups.entry(rp).or_default().push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (rp, mut members) in groups {
        if members.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "reference point {rp} has {} samples; at least 3 are needed",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let [a, b, _] = fractions.allocate(members.len());
        train.extend(members[..a].iter().map(|s| (*s).clone()));
        val.extend(members[a..a + b].iter().map(|s| (*s).clone()));
        test.extend(members[a + b..].iter().map(|s| (*s).clone()));
    }
    Ok(Splits {
        train: Dataset::new(train, ds.provenance)?,
        val: Dataset::new(val, ds.provenance)?,
        test: Dataset::new(test, ds.provenance)?,
    })
}

/// Trains one network and returns the parameters with the lowest
/// validation error seen.
pub fn train<T: Scalar>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    hp: &HyperParams,
    frame: CoordinateFrame<T>,
    features: [bool; CHANNELS],
    seed: u64,
) -> Result<TrainedLocalizer<T>> {
    hp.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    let scaler = FeatureScaler::fit(train.spectra(), features)?;
    let inputs: Vec<[T; CHANNELS]> = train.spectra().map(|s| scaler.transform(s)).collect();
    let targets: Vec<[T; 2]> = train.samples().iter().map(|s| frame.normalize(s.position)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![CHANNELS];
    sizes.extend(&hp.hidden_layers);
    sizes.push(2);
    let dropout = vec![T::of(hp.dropout_p); hp.hidden_layers.len()];
    let mut net = DenseNet::init(&sizes, Activation::Relu, OutputActivation::Identity, &dropout, rng.next_u64())?;
    let mut adam = AdamState::new(&net, AdamConfig::with_lr(hp.lr));
    let mut grads = Gradients::zeros_like(&net);
    let mut cache = Cache::default();
    let mut order: Vec<usize> = (0..inputs.len()).collect();

    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut curve = Vec::new();
    let mut stale = 0usize;
    for epoch in 0..hp.max_epochs {
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(hp.batch_size).enumerate() {
            grads.fill_zero();
            for &i in batch {
                net.forward_into(&inputs[i], Mode::Train(rng.next_u64()), &mut cache)?;
                let (_, g) = mse_loss(cache.output(), &targets[i])?;
                net.backward_into(&cache, &g, &mut grads)?;
            }
            grads.scale(T::one() / T::of_usize(batch.len()));
            if !grads.is_finite() {
                return Err(Error::NonFinite(format!("gradient at epoch {epoch}, batch {b}")));
            }
            adam_step(&mut net, &grads, &mut adam)?;
        }
        let err = mean_error(&net, &scaler, &frame, val.samples())
            .map_err(|e| Error::NonFinite(format!("validation at epoch {epoch}: {e}")))?;
        curve.push(err);
        if err < best.0 {
            best = (err, net.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= hp.patience {
                break;
            }
        }
    }
    let (val_err, net, best_epoch) = best;
    Ok(TrainedLocalizer {
        format_version: MODEL_FORMAT_VERSION,
        net,
        scaler,
        frame,
        meta: TrainingMeta {
            seed,
            hyperparams: hp.clone(),
            val_curve: curve,
            best_epoch,
            val_mean_euclidean_cm: val_err,
            train_rows: train.len(),
        },
    })
}

/// Random-search space for [`random_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub depth_min: usize,
    pub depth_max: usize,
    pub widths: Vec<usize>,
    pub dropouts: Vec<f64>,
    pub lr_min: f64,
    pub lr_max: f64,
    pub batch_sizes: Vec<usize>,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            depth_min: 2,
            depth_max: 4,
            widths: vec![32, 64, 128, 256],
            dropouts: vec![0.0, 0.1, 0.2, 0.3],
            lr_min: 1e-4,
            lr_max: 1e-2,
            batch_sizes: vec![16, 32, 64],
            max_epochs: 500,
            patience: 25,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("search space: {m}")));
        if self.depth_min == 0 || self.depth_min > self.depth_max {
            return bad("need 1 <= depth_min <= depth_max");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be non-empty and positive");
        }
        if self.dropouts.is_empty() || self.dropouts.iter().any(|p| !(0.0..1.0).contains(p)) {
            return bad("dropouts must be non-empty and within [0, 1)");
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return bad("need 0 < lr_min <= lr_max");
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return bad("batch sizes must be non-empty and positive");
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be >= 1");
        }
        Ok(())
    }

    /// Uniform over depths, widths (per layer), dropouts and batch sizes;
    /// log-uniform over the learning rate.
    pub fn sample(&self, rng: &mut impl Rng) -> HyperParams {
        let depth = rng.random_range(self.depth_min..=self.depth_max);
        let hidden_layers = (0..depth).map(|_| self.widths[rng.random_range(0..self.widths.len())]).collect();
        let dropout_p = self.dropouts[rng.random_range(0..self.dropouts.len())];
        let (lo, hi) = (self.lr_min.ln(), self.lr_max.ln());
        let lr = if hi > lo { rng.random_range(lo..hi).exp() } else { self.lr_min };
        let batch_size = self.batch_sizes[rng.random_range(0..self.batch_sizes.len())];
        HyperParams {
            hidden_layers,
            dropout_p,
            lr,
            batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub hyperparams: HyperParams,
    pub val_err_cm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome<T: Scalar> {
    pub best: HyperParams,
    pub model: TrainedLocalizer<T>,
    pub best_trial: usize,
    pub log: Vec<TrialRecord>,
}

/// Trial log as CSV: `trial,layers,dropout,lr,batch,val_err_cm`. Failed
/// trials leave `val_err_cm` empty.
pub fn trial_log_csv(log: &[TrialRecord]) -> String {
    let mut out = String::from("trial,layers,dropout,lr,batch,val_err_cm\n");
    for r in log {
        let _ = write!(
            out,
            "{},{},{},{},{},",
            r.trial,
            r.hyperparams.layers_label(),
            r.hyperparams.dropout_p,
            r.hyperparams.lr,
            r.hyperparams.batch_size
        );
        if let Some(v) = r.val_err_cm {
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Seeded random search. Trial `i` samples its hyperparameters and its
/// training seed from the stream `seed ^ i`; the trial with the lowest
/// validation error wins, earlier trials winning ties. A failing trial is
/// logged and skipped.
pub fn random_search<T: Scalar>(
    train_set: &Dataset<T>,
    val: &Dataset<T>,
    space: &SearchSpace,
    n_trials: usize,
    frame: CoordinateFrame<T>,
    features: [bool; CHANNELS],
    seed: u64,
) -> Result<SearchOutcome<T>> {
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::InvalidArgument("random search needs at least one trial".into()));
    }
    let mut log = Vec::with_capacity(n_trials);
    let mut best: Option<(usize, TrainedLocalizer<T>)> = None;
    for trial in 0..n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial as u64);
        let hp = space.sample(&mut rng);
        let trial_seed = rng.next_u64();
        match train(train_set, val, &hp, frame, features, trial_seed) {
            Ok(model) => {
                let err = model.meta.val_mean_euclidean_cm;
                log.push(TrialRecord {
                    trial,
                    hyperparams: hp,
                    val_err_cm: Some(err),
                    error: None,
                });
                if best.as_ref().is_none_or(|(_, b)| err < b.meta.val_mean_euclidean_cm) {
                    best = Some((trial, model));
                }
            }
            Err(e) => log.push(TrialRecord {
                trial,
                hyperparams: hp,
                val_err_cm: None,
                error: Some(e.to_string()),
            }),
        }
    }
    match best {
        Some((best_trial, model)) => Ok(SearchOutcome {
            best: model.meta.hyperparams.clone(),
            model,
            best_trial,
            log,
        }),
        None => Err(Error::InvalidArgument(format!(
            "all {n_trials} search trials failed; first error: {}",
            log[0].error.as_deref().unwrap_or("?")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_room;
    use crate::simlab::{default_lamps, default_sensor, generate_corpus, Protocol};
    use crate::spectra::{Provenance, Source};

    fn frame() -> CoordinateFrame<f64> {
        CoordinateFrame::new(default_room::<f64>().0.bounding_box()).unwrap()
    }

    fn corpus(per_rp_seconds: f64) -> Dataset<f64> {
        let (room, layout) = default_room::<f64>();
        let protocol = Protocol { dwell_s: per_rp_seconds, rate_hz: 4.0 };
        generate_corpus(&room, &layout, &default_lamps(), &default_sensor(), &protocol, 5).unwrap()
    }

    #[test]
    fn split_counts_per_rp() {
        let ds = corpus(30.0);
        let s = split(&ds, SplitFractions::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (84 * 42, 18 * 42, 18 * 42));
        for part in [&s.train, &s.val, &s.test] {
            let rps: std::collections::BTreeSet<_> = part.samples().iter().map(|x| x.rp_id).collect();
            assert_eq!(rps.len(), 42);
            assert!(part.is_canonical());
        }
        assert_eq!(s, split(&ds, SplitFractions::default(), 1).unwrap());
        assert_ne!(s.train, split(&ds, SplitFractions::default(), 2).unwrap().train);

        let all = split(&ds, SplitFractions { train: 1.0, val: 0.0, test: 0.0 }, 1).unwrap();
        assert_eq!(all.train, ds);
        assert!(all.val.is_empty() && all.test.is_empty());
    }

    #[test]
    fn allocation_rule() {
        let f = SplitFractions::default();
        assert_eq!(f.allocate(120), [84, 18, 18]);
        assert_eq!(f.allocate(10), [8, 1, 1]);
        assert_eq!(f.allocate(3), [1, 1, 1]);
        let g = SplitFractions { train: 0.5, val: 0.5, test: 0.0 };
        assert_eq!(g.allocate(7), [4, 3, 0]);
    }

    #[test]
    fn split_rejects_small_groups_and_bad_fractions() {
        let ds = corpus(0.5); // 2 samples per RP
        assert!(split(&ds, SplitFractions::default(), 0).is_err());
        let ds = corpus(1.0);
        assert!(split(&ds, SplitFractions { train: 0.5, val: 0.2, test: 0.2 }, 0).is_err());
    }

    #[test]
    fn scaler_is_fit_on_train_only() {
        let ds = corpus(5.0);
        let s = split(&ds, SplitFractions::default(), 3).unwrap();
        let on_train = FeatureScaler::fit(s.train.spectra(), [true; CHANNELS]).unwrap();
        let on_more = FeatureScaler::fit(s.train.spectra().chain(s.val.spectra()), [true; CHANNELS]).unwrap();
        let model = train(&s.train, &s.val, &HyperParams { max_epochs: 2, ..Default::default() }, frame(), [true; CHANNELS], 1).unwrap();
        assert_eq!(model.scaler, on_train);
        assert_ne!(model.scaler, on_more);
    }

    #[test]
    fn scaler_edge_cases() {
        let a = Spectrum::new([5.0; CHANNELS]).unwrap();
        let mut hi = [5.0; CHANNELS];
        hi[0] = 15.0;
        let b = Spectrum::new(hi).unwrap();
        let mut enabled = [true; CHANNELS];
        enabled[1] = false;
        let sc = FeatureScaler::fit([&a, &b], enabled).unwrap();
        assert_eq!(sc.transform(&b)[0], 1.0);
        assert_eq!(sc.transform(&a)[0], 0.0);
        assert!(sc.transform(&b)[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn frame_round_trip() {
        let f = frame();
        for i in 0..=10 {
            for j in 0..=10 {
                let u = [i as f64 / 10.0, j as f64 / 10.0];
                let back = f.normalize(f.denormalize(u));
                assert!((back[0] - u[0]).abs() < 1e-12 && (back[1] - u[1]).abs() < 1e-12);
            }
        }
    }

    fn memorization_set() -> (Dataset<f64>, Position<f64>) {
        let p = Position::new(123.0, 456.0);
        let spec = Spectrum::new([1000.0; CHANNELS]).unwrap();
        let samples: Vec<_> = (0..200)
            .map(|seq| LabeledSample { spectrum: spec, position: p, rp_id: Some(0), seq, source: Source::Measured })
            .collect();
        (Dataset::new(samples, Provenance::Measured).unwrap(), p)
    }

    #[test]
    fn memorizes_a_single_point() {
        let (ds, p) = memorization_set();
        let hp = HyperParams { hidden_layers: vec![4], lr: 1e-2, batch_size: 16, max_epochs: 200, patience: 200, dropout_p: 0.0 };
        let m = train(&ds, &ds, &hp, frame(), [true; CHANNELS], 4).unwrap();
        assert!(m.meta.val_mean_euclidean_cm < 1.0, "{}", m.meta.val_mean_euclidean_cm);
        let q = m.predict(&ds.samples()[0].spectrum).unwrap();
        assert!(q.distance(&p) < 1.0);
        assert_eq!(q, m.predict(&ds.samples()[0].spectrum).unwrap());
        let again = train(&ds, &ds, &hp, frame(), [true; CHANNELS], 4).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn early_stopping_keeps_best_epoch() {
        let ds = corpus(5.0);
        let s = split(&ds, SplitFractions::default(), 3).unwrap();
        let hp = HyperParams { hidden_layers: vec![16, 16], lr: 3e-3, max_epochs: 40, patience: 5, ..Default::default() };
        let m = train(&s.train, &s.val, &hp, frame(), [true; CHANNELS], 9).unwrap();
        let min = m.meta.val_curve.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(m.meta.val_mean_euclidean_cm, min);
        assert_eq!(m.meta.val_curve[m.meta.best_epoch], min);
        assert!((m.mean_error_cm(&s.val).unwrap() - min).abs() < 1e-9);
        // batch prediction has no batch effects
        let batch = m.predict_all(s.test.spectra()).unwrap();
        for (b, x) in batch.iter().zip(s.test.spectra()) {
            assert_eq!(*b, m.predict(x).unwrap());
        }
        let json = m.to_json();
        let back = TrainedLocalizer::<f64>::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn search_behaviour() {
        let ds = corpus(2.0);
        let s = split(&ds, SplitFractions::default(), 3).unwrap();
        let space = SearchSpace { widths: vec![8, 16], max_epochs: 8, patience: 3, ..Default::default() };
        let one = random_search(&s.train, &s.val, &space, 1, frame(), [true; CHANNELS], 77).unwrap();
        assert_eq!(one.best_trial, 0);
        assert_eq!(one.log.len(), 1);
        assert_eq!(Some(one.model.meta.val_mean_euclidean_cm), one.log[0].val_err_cm);
        let four = random_search(&s.train, &s.val, &space, 4, frame(), [true; CHANNELS], 77).unwrap();
        assert!(four.model.meta.val_mean_euclidean_cm <= one.model.meta.val_mean_euclidean_cm);
        assert_eq!(four.log[0], one.log[0]);
        let again = random_search(&s.train, &s.val, &space, 4, frame(), [true; CHANNELS], 77).unwrap();
        assert_eq!(again.model, four.model);
        assert_eq!(again.log, four.log);
        let csv = trial_log_csv(&four.log);
        assert!(csv.starts_with("trial,layers,dropout,lr,batch,val_err_cm\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn sampled_hyperparams_stay_in_space() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let hp = space.sample(&mut rng);
            assert!((2..=4).contains(&hp.hidden_layers.len()));
            assert!(hp.hidden_layers.iter().all(|w| space.widths.contains(w)));
            assert!(space.dropouts.contains(&hp.dropout_p));
            assert!((1e-4..=1e-2).contains(&hp.lr));
            assert!(space.batch_sizes.contains(&hp.batch_size));
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        let ds = corpus(1.0);
        let empty = Dataset::empty(Provenance::Measured);
        assert!(train(&ds, &empty, &HyperParams::default(), frame(), [true; CHANNELS], 0).is_err());
        assert!(random_search(&ds, &ds, &SearchSpace::default(), 0, frame(), [true; CHANNELS], 0).is_err());
    }
}
