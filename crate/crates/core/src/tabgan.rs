//! Tabular GAN over coordinate-free spectra: a dense generator with tanh
//! output, a dense discriminator emitting logits, the non-saturating
//! objective, and seeded sampling back into ADC units.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, bce_with_logits, Activation, AdamConfig, AdamState, Cache, DenseNet, Gradients, Mode, OutputActivation};
use crate::scalar::Scalar;
use crate::spectra::{Spectrum, ADC_MAX, CHANNELS, CHANNEL_NAMES};

pub const GAN_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub generator_widths: Vec<usize>,
    pub discriminator_widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    /// Share of the real spectra held back to score the discriminator.
    pub heldout_fraction: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            generator_widths: vec![64, 64],
            discriminator_widths: vec![64, 64],
            epochs: 150,
            batch_size: 64,
            lr_g: 2e-4,
            lr_d: 2e-4,
            beta1: 0.5,
            heldout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidArgument("latent_dim must be >= 1".into()));
        }
        if self.generator_widths.contains(&0) || self.discriminator_widths.contains(&0) {
            return Err(Error::InvalidArgument("GAN layer widths must be >= 1".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("GAN epochs and batch size must be >= 1".into()));
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::InvalidArgument("beta1 must lie in [0, 1)".into()));
        }
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
            return Err(Error::InvalidArgument("heldout_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            ..AdamConfig::with_lr(lr)
        }
    }
}

/// Per-channel affine map of `[min, max]` onto `[-1, 1]`. A constant
/// channel maps to 0 and is restored as its constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanScaler<T> {
    pub min: [T; CHANNELS],
    pub max: [T; CHANNELS],
}

impl<T: Scalar> GanScaler<T> {
    pub fn fit(spectra: &[Spectrum<T>]) -> Result<Self> {
        if spectra.is_empty() {
            return Err(Error::InvalidArgument("cannot fit a scaler on no data".into()));
        }
        let mut min = [T::infinity(); CHANNELS];
        let mut max = [T::neg_infinity(); CHANNELS];
        for s in spectra {
            for (c, v) in s.channels().iter().enumerate() {
                min[c] = min[c].min(*v);
                max[c] = max[c].max(*v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn is_degenerate(&self, c: usize) -> bool {
        !(self.max[c] > self.min[c])
    }

    pub fn forward(&self, s: &Spectrum<T>) -> [T; CHANNELS] {
        let two = T::of(2.0);
        std::array::from_fn(|c| {
            if self.is_degenerate(c) {
                T::zero()
            } else {
                two * (s.get(c) - self.min[c]) / (self.max[c] - self.min[c]) - T::one()
            }
        })
    }

    pub fn inverse(&self, y: &[T]) -> [T; CHANNELS] {
        let half = T::of(0.5);
        std::array::from_fn(|c| {
            if self.is_degenerate(c) {
                self.min[c]
            } else {
                (y[c] + T::one()) * half * (self.max[c] - self.min[c]) + self.min[c]
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GanModel<T: Scalar> {
    pub format_version: u32,
    pub generator: DenseNet<T>,
    pub discriminator: DenseNet<T>,
    pub scaler: GanScaler<T>,
    pub config: GanConfig,
}

impl<T: Scalar> GanModel<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format_version != GAN_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported GAN format version {}",
                m.format_version
            )));
        }
        if m.generator.input_dim() != m.config.latent_dim || m.generator.output_dim() != CHANNELS {
            return Err(Error::Shape("generator must map latent_dim inputs to 11 outputs".into()));
        }
        if m.discriminator.input_dim() != CHANNELS || m.discriminator.output_dim() != 1 {
            return Err(Error::Shape("discriminator must map 11 inputs to 1 logit".into()));
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

    /// Discriminator probability that `s` is real.
    pub fn realness(&self, s: &Spectrum<T>) -> Result<T> {
        let logit = self.discriminator.predict(&self.scaler.forward(s))?[0];
        Ok(crate::nn::sigmoid(logit))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanEpoch {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Balanced accuracy over the held-back real spectra and as many
    /// fresh generator draws.
    pub d_heldout_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GanLog {
    pub epochs: Vec<GanEpoch>,
    pub warnings: Vec<String>,
}

impl GanLog {
    /// `epoch,d_loss,g_loss,d_heldout_acc`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,d_loss,g_loss,d_heldout_acc\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.d_loss, e.g_loss, e.d_heldout_acc);
        }
        out
    }
}

fn latent<T: Scalar>(rng: &mut impl Rng, dim: usize, out: &mut Vec<T>) {
    out.clear();
    out.extend((0..dim).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))));
}

/// Copies generator output, holding constant channels at their scaled
/// value 0 so they carry no signal for the discriminator.
fn pin<T: Scalar>(raw: &[T], live: &[bool; CHANNELS], out: &mut [T; CHANNELS]) {
    for c in 0..CHANNELS {
        out[c] = if live[c] { raw[c] } else { T::zero() };
    }
}

fn check_finite(loss: f64, what: &str, epoch: usize, batch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} loss at epoch {epoch}, batch {batch}")))
    }
}

pub fn train_gan<T: Scalar>(spectra: &[Spectrum<T>], cfg: &GanConfig) -> Result<(GanModel<T>, GanLog)> {
    cfg.validate()?;
    if spectra.len() < 2 * cfg.batch_size {
        return Err(Error::InvalidArgument(format!(
            "GAN training needs at least {} spectra, got {}",
            2 * cfg.batch_size,
            spectra.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scaler = GanScaler::fit(spectra)?;
    let mut log = GanLog::default();
    for c in (0..CHANNELS).filter(|&c| scaler.is_degenerate(c)) {
        log.warnings
            .push(format!("channel {} is constant ({}); regenerated as that constant", CHANNEL_NAMES[c], scaler.min[c]));
    }

    let mut rows: Vec<[T; CHANNELS]> = spectra.iter().map(|s| scaler.forward(s)).collect();
    rows.shuffle(&mut rng);
    let n_held = ((rows.len() as f64 * cfg.heldout_fraction).round() as usize).max(1);
    let held = rows.split_off(rows.len() - n_held);

    let mut g_sizes = vec![cfg.latent_dim];
    g_sizes.extend(&cfg.generator_widths);
    g_sizes.push(CHANNELS);
    let mut d_sizes = vec![CHANNELS];
    d_sizes.extend(&cfg.discriminator_widths);
    d_sizes.push(1);
    let mut gen = DenseNet::init(
        &g_sizes,
        Activation::LeakyRelu,
        OutputActivation::Tanh,
        &vec![T::zero(); cfg.generator_widths.len()],
        rng.next_u64(),
    )?;
    let mut disc = DenseNet::init(
        &d_sizes,
        Activation::LeakyRelu,
        OutputActivation::Identity,
        &vec![T::zero(); cfg.discriminator_widths.len()],
        rng.next_u64(),
    )?;
    let mut g_adam = AdamState::new(&gen, cfg.adam(cfg.lr_g));
    let mut d_adam = AdamState::new(&disc, cfg.adam(cfg.lr_d));
    let mut g_grads = Gradients::zeros_like(&gen);
    let mut d_grads = Gradients::zeros_like(&disc);
    let mut d_scratch = Gradients::zeros_like(&disc);
    let (mut g_cache, mut d_cache) = (Cache::default(), Cache::default());
    let mut z = Vec::with_capacity(cfg.latent_dim);
    let (one, zero) = (T::one(), T::zero());
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let live: [bool; CHANNELS] = std::array::from_fn(|c| !scaler.is_degenerate(c));
    let mut fake = [T::zero(); CHANNELS];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let m = batch.len();
            // discriminator step
            d_grads.fill_zero();
            let mut d_loss = T::zero();
            for &i in batch {
                disc.forward_into(&rows[i], Mode::Eval, &mut d_cache)?;
                let (l, g) = bce_with_logits(d_cache.output()[0], one)?;
                d_loss = d_loss + l;
                disc.backward_into(&d_cache, &[g], &mut d_grads)?;
            }
            for _ in 0..m {
                latent(&mut rng, cfg.latent_dim, &mut z);
                gen.forward_into(&z, Mode::Eval, &mut g_cache)?;
                pin(g_cache.output(), &live, &mut fake);
                disc.forward_into(&fake, Mode::Eval, &mut d_cache)?;
                let (l, g) = bce_with_logits(d_cache.output()[0], zero)?;
                d_loss = d_loss + l;
                disc.backward_into(&d_cache, &[g], &mut d_grads)?;
            }
            let d_loss = d_loss.f64() / (2 * m) as f64;
            check_finite(d_loss, "discriminator", epoch, b)?;
            d_grads.scale(T::one() / T::of_usize(2 * m));
            adam_step(&mut disc, &d_grads, &mut d_adam)?;

            // generator step: minimize -log D(G(z))
            g_grads.fill_zero();
            let mut g_loss = T::zero();
            for _ in 0..m {
                latent(&mut rng, cfg.latent_dim, &mut z);
                gen.forward_into(&z, Mode::Eval, &mut g_cache)?;
                pin(g_cache.output(), &live, &mut fake);
                disc.forward_into(&fake, Mode::Eval, &mut d_cache)?;
                let (l, g) = bce_with_logits(d_cache.output()[0], one)?;
                g_loss = g_loss + l;
                let mut dx = disc.backward_into(&d_cache, &[g], &mut d_scratch)?;
                for (d, on) in dx.iter_mut().zip(&live) {
                    if !on {
                        *d = T::zero();
                    }
                }
                gen.backward_into(&g_cache, &dx, &mut g_grads)?;
            }
            let g_loss = g_loss.f64() / m as f64;
            check_finite(g_loss, "generator", epoch, b)?;
            g_grads.scale(T::one() / T::of_usize(m));
            adam_step(&mut gen, &g_grads, &mut g_adam)?;

            d_sum += d_loss;
            g_sum += g_loss;
            batches += 1;
        }
        let acc = heldout_accuracy(&gen, &disc, &held, &live, cfg, epoch)?;
        log.epochs.push(GanEpoch {
            epoch,
            d_loss: d_sum / batches as f64,
            g_loss: g_sum / batches as f64,
            d_heldout_acc: acc,
        });
    }
    let model = GanModel {
        format_version: GAN_FORMAT_VERSION,
        generator: gen,
        discriminator: disc,
        scaler,
        config: cfg.clone(),
    };
    Ok((model, log))
}

fn heldout_accuracy<T: Scalar>(
    gen: &DenseNet<T>,
    disc: &DenseNet<T>,
    held: &[[T; CHANNELS]],
    live: &[bool; CHANNELS],
    cfg: &GanConfig,
    epoch: usize,
) -> Result<f64> {
    // own stream so scoring never perturbs the training draws
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).rotate_left(32) ^ 0x5eed);
    let mut z = Vec::with_capacity(cfg.latent_dim);
    let (mut real_ok, mut fake_ok) = (0usize, 0usize);
    for x in held {
        if disc.predict(x)?[0] > T::zero() {
            real_ok += 1;
        }
        latent(&mut rng, cfg.latent_dim, &mut z);
        let mut fake = [T::zero(); CHANNELS];
        pin(&gen.predict(&z)?, live, &mut fake);
        if disc.predict(&fake)?[0] < T::zero() {
            fake_ok += 1;
        }
    }
    Ok((real_ok + fake_ok) as f64 / (2 * held.len()) as f64)
}

/// Draws `n` spectra from `Normal(0, I)` latents, mapped back to ADC
/// counts, clamped and rounded.
pub fn sample<T: Scalar>(m: &GanModel<T>, n: usize, seed: u64) -> Result<Vec<Spectrum<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Vec::with_capacity(m.config.latent_dim);
    let mut cache = Cache::default();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        latent(&mut rng, m.config.latent_dim, &mut z);
        m.generator.forward_into(&z, Mode::Eval, &mut cache)?;
        let mut ch = m.scaler.inverse(cache.output());
        for v in &mut ch {
            *v = v.max(T::zero()).min(T::of(ADC_MAX)).round();
        }
        out.push(Spectrum::new(ch)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn spec(v: [f64; CHANNELS]) -> Spectrum<f64> {
        Spectrum::new(v).unwrap()
    }

    fn bimodal(n: usize, seed: u64) -> Vec<Spectrum<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 150.0).unwrap();
        (0..n)
            .map(|i| {
                let base = if i % 2 == 0 { 3000.0 } else { 9000.0 };
                spec(std::array::from_fn(|c| {
                    if c == CHANNELS - 1 {
                        250.0
                    } else {
                        (base * (1.0 + 0.1 * c as f64) + noise.sample(&mut rng)).round()
                    }
                }))
            })
            .collect()
    }

    fn small_cfg(epochs: usize) -> GanConfig {
        GanConfig {
            generator_widths: vec![32, 32],
            discriminator_widths: vec![32, 32],
            epochs,
            batch_size: 32,
            lr_g: 1e-3,
            lr_d: 1e-3,
            ..GanConfig::default()
        }
    }

    #[test]
    fn scaler_round_trip() {
        let data = bimodal(200, 1);
        let s = GanScaler::fit(&data).unwrap();
        for x in &data {
            let y = s.forward(x);
            assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
            let back = s.inverse(&y);
            for c in 0..CHANNELS {
                assert!((back[c] - x.get(c)).abs() <= 1e-9 * x.get(c).abs().max(1.0));
            }
        }
        assert!(s.is_degenerate(CHANNELS - 1));
        assert_eq!(s.inverse(&[0.7; CHANNELS])[CHANNELS - 1], 250.0);
    }

    #[test]
    fn too_few_spectra_rejected() {
        let data = bimodal(63, 1);
        let cfg = small_cfg(1);
        assert!(train_gan(&data, &cfg).is_err());
        assert!(train_gan(&bimodal(64, 1), &cfg).is_ok());
    }

    #[test]
    fn config_validation() {
        let bad = [
            GanConfig { latent_dim: 0, ..GanConfig::default() },
            GanConfig { generator_widths: vec![8, 0], ..GanConfig::default() },
            GanConfig { lr_d: 0.0, ..GanConfig::default() },
            GanConfig { heldout_fraction: 1.0, ..GanConfig::default() },
            GanConfig { beta1: 1.0, ..GanConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn deterministic_and_json_round_trip() {
        let data = bimodal(128, 2);
        let cfg = small_cfg(3);
        let (m1, l1) = train_gan(&data, &cfg).unwrap();
        let (m2, l2) = train_gan(&data, &cfg).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(m1.to_json(), m2.to_json());
        assert_eq!(GanModel::<f64>::from_json(&m1.to_json()).unwrap(), m1);
        assert_eq!(l1.epochs.len(), 3);
        assert!(l1.to_csv().starts_with("epoch,d_loss,g_loss,d_heldout_acc\n"));
        assert_eq!(l1.warnings.len(), 1);
        assert_eq!(sample(&m1, 1, 9).unwrap(), sample(&m1, 1, 9).unwrap());
    }

    #[test]
    fn samples_are_valid_integers() {
        let (m, _) = train_gan(&bimodal(128, 3), &small_cfg(2)).unwrap();
        let out = sample(&m, 500, 4).unwrap();
        assert_eq!(out.len(), 500);
        for s in &out {
            for v in s.channels() {
                assert!((0.0..=ADC_MAX).contains(v) && v.fract() == 0.0);
            }
            assert_eq!(s.get(CHANNELS - 1), 250.0);
        }
    }

    #[test]
    fn repeated_spectrum_is_reproduced() {
        let target: [f64; CHANNELS] = std::array::from_fn(|c| 1000.0 + 500.0 * c as f64);
        let mut data = vec![spec(target); 300];
        // one slightly different row keeps every channel non-degenerate
        data.push(spec(target.map(|v| v + 1.0)));
        let (m, _) = train_gan(&data, &GanConfig::default()).unwrap();
        for s in sample(&m, 200, 5).unwrap() {
            for c in 0..CHANNELS {
                let rel = (s.get(c) - target[c]).abs() / target[c];
                assert!(rel < 0.05, "channel {c}: {} vs {}", s.get(c), target[c]);
            }
        }
    }

    #[test]
    fn discriminator_neither_collapses_nor_separates() {
        let (_, log) = train_gan(&bimodal(1000, 6), &small_cfg(40)).unwrap();
        let tail = &log.epochs[log.epochs.len() - 5..];
        let acc = tail.iter().map(|e| e.d_heldout_acc).sum::<f64>() / tail.len() as f64;
        assert!(acc > 0.4 && acc < 0.75, "{acc}");
    }
}
