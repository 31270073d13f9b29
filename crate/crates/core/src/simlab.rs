//! Deterministic synthetic lab: Lambertian lamps with distinct emission
//! spectra, a noisy counting sensor, and the dwell/rate sampling protocol.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Position, ReferenceLayout, RoomPolygon};
use crate::scalar::Scalar;
use crate::spectra::{Dataset, LabeledSample, Provenance, Source, Spectrum, ADC_MAX, CHANNELS, FLICKER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct Lamp<T> {
    /// (x, y, z) in cm; z is height above the floor.
    pub pos: [T; 3],
    /// Per-channel radiant weight (counts · cm² at 1 cm). The Flicker entry
    /// is unused; see `flicker_tag`.
    pub emission: [T; CHANNELS],
    #[serde(default = "one")]
    pub lambert_order: T,
    /// Contribution to the Flicker channel, independent of distance.
    #[serde(default)]
    pub flicker_tag: T,
}

fn one<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> Lamp<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.pos.iter().all(|v| v.is_finite()) || self.pos[2] <= T::zero() {
            return Err(Error::InvalidArgument("lamp height must be finite and > 0".into()));
        }
        if !self.emission.iter().all(|v| v.is_finite() && *v >= T::zero()) {
            return Err(Error::InvalidArgument("lamp emission must be finite and >= 0".into()));
        }
        if !(self.lambert_order >= T::one()) {
            return Err(Error::InvalidArgument("lambert order must be >= 1".into()));
        }
        if !(self.flicker_tag >= T::zero()) {
            return Err(Error::InvalidArgument("flicker tag must be >= 0".into()));
        }
        Ok(())
    }

    /// Same lamp with every emission weight multiplied by `factor`
    /// (a global dimming of the lamp).
    pub fn dimmed(&self, factor: T) -> Self {
        Self {
            emission: self.emission.map(|e| e * factor),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct SensorModel<T> {
    pub height_cm: T,
    /// Relative Gaussian noise sigma.
    pub noise_rel: T,
    pub ambient: [T; CHANNELS],
    #[serde(default = "adc_max")]
    pub adc_max: T,
}

fn adc_max<T: Scalar>() -> T {
    T::of(ADC_MAX)
}

impl<T: Scalar> SensorModel<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.height_cm.is_finite() {
            return Err(Error::InvalidArgument("sensor height must be finite".into()));
        }
        if !(self.noise_rel >= T::zero() && self.noise_rel < T::one()) {
            return Err(Error::InvalidArgument("noise_rel must be in [0, 1)".into()));
        }
        if !self.ambient.iter().all(|v| v.is_finite() && *v >= T::zero()) {
            return Err(Error::InvalidArgument("ambient must be finite and >= 0".into()));
        }
        if !(self.adc_max > T::zero() && self.adc_max <= T::of(ADC_MAX)) {
            return Err(Error::InvalidArgument(format!("adc_max must be in (0, {ADC_MAX}]")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub dwell_s: f64,
    pub rate_hz: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            dwell_s: 30.0,
            rate_hz: 4.0,
        }
    }
}

impl Protocol {
    /// `dwell_s * rate_hz`, which must be a positive integer.
    pub fn samples_per_rp(&self) -> Result<usize> {
        let n = self.dwell_s * self.rate_hz;
        let r = n.round();
        if !n.is_finite() || r < 1.0 || (n - r).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "dwell_s * rate_hz = {n} is not a positive integer"
            )));
        }
        Ok(r as usize)
    }
}

/// Four ceiling lamps with distinct spectra: one over each arm of the
/// default U and two over its base.
pub fn default_lamps<T: Scalar>() -> Vec<Lamp<T>> {
    const POWER: f64 = 1.5e9;
    // F1..F8, Clear, NIR; Flicker slot unused
    let profiles: [([f64; 3], [f64; 10], f64); 4] = [
        ([100.0, 600.0, 280.0], [0.10, 0.20, 0.30, 0.45, 0.65, 0.85, 1.00, 0.80, 1.20, 0.30], 40.0),
        ([500.0, 600.0, 280.0], [0.30, 0.95, 0.70, 0.60, 0.70, 0.55, 0.40, 0.25, 1.25, 0.10], 55.0),
        ([150.0, 150.0, 280.0], [0.20, 0.55, 0.60, 0.70, 0.90, 0.70, 0.55, 0.40, 1.30, 0.20], 70.0),
        ([450.0, 150.0, 280.0], [0.45, 0.70, 0.35, 0.25, 0.35, 0.50, 0.80, 0.70, 1.15, 0.25], 85.0),
    ];
    profiles
        .iter()
        .map(|(pos, prof, tag)| {
            let mut emission = [T::zero(); CHANNELS];
            for (e, w) in emission.iter_mut().zip(prof) {
                *e = T::of(w * POWER);
            }
            Lamp {
                pos: pos.map(T::of),
                emission,
                lambert_order: T::one(),
                flicker_tag: T::of(*tag),
            }
        })
        .collect()
}

pub fn default_sensor<T: Scalar>() -> SensorModel<T> {
    let mut ambient = [T::of(20.0); CHANNELS];
    ambient[FLICKER] = T::zero();
    SensorModel {
        height_cm: T::zero(),
        noise_rel: T::of(0.05),
        ambient,
        adc_max: T::of(ADC_MAX),
    }
}

/// Noise-free reading at `p`.
///
/// Each optical channel sums `emission · cos^m(θ) · cos(θ) / d²` over lamps
/// (upward-facing receiver, downward-facing lamps) on top of the ambient
/// level. Lamps at or below the sensor plane contribute nothing. Flicker is
/// ambient plus the lamps' flicker tags.
pub fn noiseless_reading<T: Scalar>(
    lamps: &[Lamp<T>],
    sensor: &SensorModel<T>,
    p: Position<T>,
) -> Result<Spectrum<T>> {
    if lamps.is_empty() {
        return Err(Error::InvalidArgument("at least one lamp is required".into()));
    }
    if !p.is_finite() {
        return Err(Error::NonFinite("sensor position".into()));
    }
    let mut out = sensor.ambient;
    for (i, lamp) in lamps.iter().enumerate() {
        let dx = lamp.pos[0] - p.x;
        let dy = lamp.pos[1] - p.y;
        let dz = lamp.pos[2] - sensor.height_cm;
        let d2 = dx * dx + dy * dy + dz * dz;
        if d2 == T::zero() {
            return Err(Error::CoincidentLamp { lamp: i });
        }
        out[FLICKER] = out[FLICKER] + lamp.flicker_tag;
        if dz <= T::zero() {
            continue;
        }
        let cos = dz / d2.sqrt();
        let gain = cos.powf(lamp.lambert_order) * cos / d2;
        for c in (0..CHANNELS).filter(|&c| c != FLICKER) {
            out[c] = out[c] + lamp.emission[c] * gain;
        }
    }
    for v in out.iter_mut() {
        *v = v.max(T::zero()).min(sensor.adc_max);
    }
    Spectrum::new(out)
}

fn noisy<T: Scalar>(clean: &Spectrum<T>, sensor: &SensorModel<T>, rng: &mut ChaCha8Rng) -> Spectrum<T> {
    let mut ch = *clean.channels();
    for v in ch.iter_mut() {
        let eps: f64 = StandardNormal.sample(rng);
        let noisy = *v * (T::one() + sensor.noise_rel * T::of(eps));
        *v = noisy.max(T::zero()).min(sensor.adc_max).round();
    }
    Spectrum::clamped(ch)
}

/// One noisy integer-count reading; a pure function of `seed`.
pub fn sample_reading<T: Scalar>(
    lamps: &[Lamp<T>],
    sensor: &SensorModel<T>,
    p: Position<T>,
    seed: u64,
) -> Result<Spectrum<T>> {
    let clean = noiseless_reading(lamps, sensor, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(noisy(&clean, sensor, &mut rng))
}

/// Runs the sampling protocol at every reference point. RP `i` draws its
/// noise from the stream seeded with `seed ^ i`.
pub fn generate_corpus<T: Scalar>(
    room: &RoomPolygon<T>,
    layout: &ReferenceLayout<T>,
    lamps: &[Lamp<T>],
    sensor: &SensorModel<T>,
    protocol: &Protocol,
    seed: u64,
) -> Result<Dataset<T>> {
    for lamp in lamps {
        lamp.validate()?;
    }
    sensor.validate()?;
    let per_rp = protocol.samples_per_rp()?;
    let mut samples = Vec::with_capacity(layout.len() * per_rp);
    for (rp, &p) in layout.points.iter().enumerate() {
        if !room.contains(p) {
            return Err(Error::Geometry(format!("reference point {rp} lies outside the room")));
        }
        let clean = noiseless_reading(lamps, sensor, p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ rp as u64);
        for seq in 0..per_rp {
            samples.push(LabeledSample {
                spectrum: noisy(&clean, sensor, &mut rng),
                position: p,
                rp_id: Some(rp),
                seq,
                source: Source::Measured,
            });
        }
    }
    Dataset::new(samples, Provenance::Simulated)
}
