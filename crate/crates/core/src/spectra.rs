//! Spectral fingerprints, labeled datasets, canonical ordering, CSV
//! persistence and anchor-based intensity normalization.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::geometry::Position;
use crate::scalar::Scalar;

pub const CHANNELS: usize = 11;

/// Canonical channel order of a reading.
pub const CHANNEL_NAMES: [&str; CHANNELS] = [
    "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8", "Clear", "NIR", "Flicker",
];

/// Narrow-band visible channels F1..F8.
pub const F_CHANNELS: std::ops::Range<usize> = 0..8;
pub const CLEAR: usize = 8;
pub const NIR: usize = 9;
pub const FLICKER: usize = 10;

/// 16-bit ADC ceiling.
pub const ADC_MAX: f64 = 65535.0;

pub fn channel_index(name: &str) -> Option<usize> {
    CHANNEL_NAMES.iter().position(|c| *c == name)
}

/// One 11-channel sensor reading in counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", try_from = "[T; CHANNELS]", into = "[T; CHANNELS]")]
pub struct Spectrum<T: Scalar>([T; CHANNELS]);

impl<T: Scalar> TryFrom<[T; CHANNELS]> for Spectrum<T> {
    type Error = Error;

    fn try_from(c: [T; CHANNELS]) -> Result<Self> {
        Self::new(c)
    }
}

impl<T: Scalar> From<Spectrum<T>> for [T; CHANNELS] {
    fn from(s: Spectrum<T>) -> Self {
        s.0
    }
}

fn check_channel<T: Scalar>(c: usize, v: T) -> Result<()> {
    let message = if !v.is_finite() {
        format!("value {v} is not finite")
    } else if v < T::zero() {
        format!("value {v} is negative")
    } else if v > T::of(ADC_MAX) {
        format!("value {v} exceeds the ADC ceiling {ADC_MAX}")
    } else {
        return Ok(());
    };
    Err(Error::InvalidSpectrum {
        channel: CHANNEL_NAMES[c].to_string(),
        message,
    })
}

impl<T: Scalar> Spectrum<T> {
    /// Values must be finite and within `[0, 65535]`.
    pub fn new(channels: [T; CHANNELS]) -> Result<Self> {
        for (c, v) in channels.iter().enumerate() {
            check_channel(c, *v)?;
        }
        Ok(Self(channels))
    }

    pub fn from_slice(values: &[T]) -> Result<Self> {
        let arr: [T; CHANNELS] = values.try_into().map_err(|_| {
            Error::Shape(format!("spectrum needs {CHANNELS} channels, got {}", values.len()))
        })?;
        Self::new(arr)
    }

    /// Clamps each value into `[0, 65535]`; non-finite values become 0.
    pub fn clamped(mut channels: [T; CHANNELS]) -> Self {
        for v in channels.iter_mut() {
            *v = if v.is_finite() {
                v.max(T::zero()).min(T::of(ADC_MAX))
            } else {
                T::zero()
            };
        }
        Self(channels)
    }

    pub fn channels(&self) -> &[T; CHANNELS] {
        &self.0
    }

    pub fn get(&self, channel: usize) -> T {
        self.0[channel]
    }

    pub fn rounded(&self) -> Self {
        Self(self.0.map(|v| v.round()))
    }

    pub fn cast<U: Scalar>(&self) -> Spectrum<U> {
        Spectrum(self.0.map(|v| U::of(v.f64())))
    }
}

/// Where a row came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Measured,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Measured => "measured",
            Source::Synthetic => "synthetic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Measured,
    Simulated,
    Synthetic,
    /// Real rows mixed with pseudo-labeled synthetic rows; carries a
    /// per-row `source` column.
    SyntheticMixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LabeledSample<T: Scalar> {
    pub spectrum: Spectrum<T>,
    pub position: Position<T>,
    pub rp_id: Option<usize>,
    pub seq: usize,
    #[serde(default)]
    pub source: Source,
}

impl<T: Scalar> LabeledSample<T> {
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.position
            .canonical_cmp(&other.position)
            .then_with(|| self.rp_id.cmp(&other.rp_id))
            .then_with(|| self.seq.cmp(&other.seq))
            .then_with(|| self.source.cmp(&other.source))
    }

    /// Channel values and position as CSV text; identical keys mean
    /// byte-identical measurement rows regardless of bookkeeping columns.
    pub fn row_key(&self) -> String {
        let mut s = String::new();
        for v in self.spectrum.channels() {
            let _ = write!(s, "{v},");
        }
        let _ = write!(s, "{},{}", self.position.x, self.position.y);
        s
    }
}

/// Ordered collection of labeled samples, always in canonical order
/// (ascending x, y, rp_id, seq).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dataset<T: Scalar> {
    samples: Vec<LabeledSample<T>>,
    pub provenance: Provenance,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(mut samples: Vec<LabeledSample<T>>, provenance: Provenance) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !s.position.is_finite() {
                return Err(Error::NonFinite(format!("position of sample {i}")));
            }
        }
        samples.sort_by(|a, b| a.canonical_cmp(b));
        Ok(Self {
            samples,
            provenance,
        })
    }

    pub fn empty(provenance: Provenance) -> Self {
        Self {
            samples: Vec::new(),
            provenance,
        }
    }

    pub fn samples(&self) -> &[LabeledSample<T>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<LabeledSample<T>> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channel_names(&self) -> [&'static str; CHANNELS] {
        CHANNEL_NAMES
    }

    pub fn is_canonical(&self) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[0].canonical_cmp(&w[1]) != Ordering::Greater)
    }

    /// Verifies every present `rp_id` is below `rp_count`.
    pub fn check_rp_ids(&self, rp_count: usize) -> Result<()> {
        match self
            .samples
            .iter()
            .enumerate()
            .find(|(_, s)| s.rp_id.is_some_and(|r| r >= rp_count))
        {
            Some((i, s)) => Err(Error::InvalidArgument(format!(
                "sample {i} has rp_id {} but the layout has {rp_count} reference points",
                s.rp_id.unwrap_or_default()
            ))),
            None => Ok(()),
        }
    }

    pub fn spectra(&self) -> impl Iterator<Item = &Spectrum<T>> {
        self.samples.iter().map(|s| &s.spectrum)
    }

    /// Serializes to the CSV layout. The `source` column is written only for
    /// mixed datasets.
    pub fn to_csv_string(&self) -> String {
        let with_source = self.provenance == Provenance::SyntheticMixed;
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(&CHANNEL_NAMES.join(","));
        out.push_str(",x,y,rp_id,seq");
        if with_source {
            out.push_str(",source");
        }
        out.push('\n');
        for s in &self.samples {
            for v in s.spectrum.channels() {
                let _ = write!(out, "{v},");
            }
            let _ = write!(out, "{},{},", s.position.x, s.position.y);
            if let Some(r) = s.rp_id {
                let _ = write!(out, "{r}");
            }
            let _ = write!(out, ",{}", s.seq);
            if with_source {
                let _ = write!(out, ",{}", s.source.as_str());
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Parses the CSV layout. Provenance is inferred: a `source` column
    /// means mixed, an all-empty `rp_id` column means synthetic, anything
    /// else is treated as measured.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Header(e.to_string()))?
            .clone();
        let cols = Columns::from_header(&header)?;
        let mut samples = Vec::new();
        let mut any_rp = false;
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::Cell {
                row,
                column: "-".into(),
                message: e.to_string(),
            })?;
            let s = cols.parse_row::<T>(&record, row)?;
            any_rp |= s.rp_id.is_some();
            samples.push(s);
        }
        let provenance = if cols.source.is_some() {
            Provenance::SyntheticMixed
        } else if !samples.is_empty() && !any_rp {
            Provenance::Synthetic
        } else {
            Provenance::Measured
        };
        Dataset::new(samples, provenance)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

struct Columns {
    channels: [usize; CHANNELS],
    x: usize,
    y: usize,
    rp_id: Option<usize>,
    seq: Option<usize>,
    source: Option<usize>,
}

impl Columns {
    fn from_header(h: &csv::StringRecord) -> Result<Self> {
        let mut channels = [usize::MAX; CHANNELS];
        let (mut x, mut y, mut rp_id, mut seq, mut source) = (None, None, None, None, None);
        for (i, name) in h.iter().enumerate() {
            let slot = match name {
                "x" => &mut x,
                "y" => &mut y,
                "rp_id" => &mut rp_id,
                "seq" => &mut seq,
                "source" => &mut source,
                other => match channel_index(other) {
                    Some(c) => {
                        if channels[c] != usize::MAX {
                            return Err(Error::Header(format!("duplicate column `{other}`")));
                        }
                        channels[c] = i;
                        continue;
                    }
                    None => return Err(Error::Header(format!("unknown column `{other}`"))),
                },
            };
            if slot.replace(i).is_some() {
                return Err(Error::Header(format!("duplicate column `{name}`")));
            }
        }
        if let Some(c) = channels.iter().position(|&i| i == usize::MAX) {
            return Err(Error::Header(format!("missing column `{}`", CHANNEL_NAMES[c])));
        }
        Ok(Self {
            channels,
            x: x.ok_or_else(|| Error::Header("missing column `x`".into()))?,
            y: y.ok_or_else(|| Error::Header("missing column `y`".into()))?,
            rp_id,
            seq,
            source,
        })
    }

    fn parse_row<T: Scalar>(&self, rec: &csv::StringRecord, row: usize) -> Result<LabeledSample<T>> {
        let cell = |idx: usize, name: &str| -> Result<&str> {
            rec.get(idx).ok_or_else(|| Error::Cell {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })
        };
        let num = |idx: usize, name: &str| -> Result<T> {
            let text = cell(idx, name)?.trim();
            let v: T = text.parse().map_err(|_| Error::Cell {
                row,
                column: name.to_string(),
                message: format!("`{text}` is not a number"),
            })?;
            Ok(v)
        };
        let mut channels = [T::zero(); CHANNELS];
        for (c, &idx) in self.channels.iter().enumerate() {
            let v = num(idx, CHANNEL_NAMES[c])?;
            check_channel(c, v).map_err(|e| Error::Cell {
                row,
                column: CHANNEL_NAMES[c].to_string(),
                message: match e {
                    Error::InvalidSpectrum { message, .. } => message,
                    other => other.to_string(),
                },
            })?;
            channels[c] = v;
        }
        let x = num(self.x, "x")?;
        let y = num(self.y, "y")?;
        for (v, name) in [(x, "x"), (y, "y")] {
            if !v.is_finite() {
                return Err(Error::Cell {
                    row,
                    column: name.into(),
                    message: format!("value {v} is not finite"),
                });
            }
        }
        let int = |idx: usize, name: &str| -> Result<Option<usize>> {
            let text = cell(idx, name)?.trim();
            if text.is_empty() {
                return Ok(None);
            }
            text.parse().map(Some).map_err(|_| Error::Cell {
                row,
                column: name.to_string(),
                message: format!("`{text}` is not a non-negative integer"),
            })
        };
        let rp_id = match self.rp_id {
            Some(i) => int(i, "rp_id")?,
            None => None,
        };
        let seq = match self.seq {
            Some(i) => int(i, "seq")?.ok_or_else(|| Error::Cell {
                row,
                column: "seq".into(),
                message: "empty cell".into(),
            })?,
            None => row - 1,
        };
        let source = match self.source {
            Some(i) => match cell(i, "source")?.trim() {
                "measured" => Source::Measured,
                "synthetic" => Source::Synthetic,
                other => {
                    return Err(Error::Cell {
                        row,
                        column: "source".into(),
                        message: format!("unknown source `{other}`"),
                    })
                }
            },
            None => Source::Measured,
        };
        Ok(LabeledSample {
            spectrum: Spectrum(channels),
            position: Position::new(x, y),
            rp_id,
            seq,
            source,
        })
    }
}

/// Coordinate-free CSV: the 11 channel columns only.
pub fn spectra_to_csv_string<T: Scalar>(spectra: &[Spectrum<T>]) -> String {
    let mut out = CHANNEL_NAMES.join(",");
    out.push('\n');
    for s in spectra {
        let row: Vec<String> = s.channels().iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn save_spectra_csv<T: Scalar>(spectra: &[Spectrum<T>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, spectra_to_csv_string(spectra)).map_err(|e| Error::io(path, e))
}

pub fn load_spectra_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<Spectrum<T>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let header = rdr.headers().map_err(|e| Error::Header(e.to_string()))?.clone();
    if header.iter().ne(CHANNEL_NAMES.iter().copied()) {
        return Err(Error::Header(format!(
            "expected `{}`",
            CHANNEL_NAMES.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Cell {
            row,
            column: "-".into(),
            message: e.to_string(),
        })?;
        let mut channels = [T::zero(); CHANNELS];
        for (c, text) in rec.iter().enumerate() {
            let cell_err = |message: String| Error::Cell {
                row,
                column: CHANNEL_NAMES[c].to_string(),
                message,
            };
            let v: T = text
                .trim()
                .parse()
                .map_err(|_| cell_err(format!("`{text}` is not a number")))?;
            check_channel(c, v).map_err(|e| cell_err(e.to_string()))?;
            channels[c] = v;
        }
        out.push(Spectrum(channels));
    }
    Ok(out)
}

/// Drops positions, keeping the spectra in canonical order.
pub fn strip_coordinates<T: Scalar>(ds: &Dataset<T>) -> Vec<Spectrum<T>> {
    ds.spectra().copied().collect()
}

/// Channel-wise arithmetic mean.
pub fn mean_spectrum<T: Scalar>(spectra: &[Spectrum<T>]) -> Result<Spectrum<T>> {
    if spectra.is_empty() {
        return Err(Error::InvalidArgument("mean of an empty spectrum list".into()));
    }
    let n = T::of_usize(spectra.len());
    let mut acc = [T::zero(); CHANNELS];
    for s in spectra {
        for (a, v) in acc.iter_mut().zip(s.channels()) {
            *a = *a + *v;
        }
    }
    Ok(Spectrum(acc.map(|a| a / n)))
}

/// Cosine distance `1 - cos(a, b)` over the F1..F8 channels; 0 when either
/// side is all zero. Lies in `[0, 2]`, though non-negative readings keep it
/// within `[0, 1]`.
pub fn pattern_distinctness<T: Scalar>(a: &Spectrum<T>, b: &Spectrum<T>) -> T {
    let fa = &a.channels()[F_CHANNELS];
    let fb = &b.channels()[F_CHANNELS];
    let na = fa.iter().map(|v| *v * *v).sum::<T>().sqrt();
    let nb = fb.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    let dot: T = fa.iter().zip(fb).map(|(x, y)| *x * *y).sum();
    let cos = (dot / (na * nb)).max(-T::one()).min(T::one());
    (T::one() - cos).max(T::zero())
}

/// Rescales every sample by per-channel ratios `anchor_ref / anchor_now`.
/// Flicker is a modulation detector rather than an intensity and passes
/// through unscaled.
pub fn normalize_to_anchor<T: Scalar>(
    ds: &Dataset<T>,
    anchor_ref: &Spectrum<T>,
    anchor_now: &Spectrum<T>,
) -> Result<Dataset<T>> {
    let mut ratio = [T::one(); CHANNELS];
    for c in (0..CHANNELS).filter(|&c| c != FLICKER) {
        let now = anchor_now.get(c);
        if now <= T::zero() {
            return Err(Error::InvalidArgument(format!(
                "anchor channel {} is zero; cannot form a ratio",
                CHANNEL_NAMES[c]
            )));
        }
        ratio[c] = anchor_ref.get(c) / now;
    }
    let mut samples = Vec::with_capacity(ds.len());
    for s in ds.samples() {
        let mut ch = *s.spectrum.channels();
        for (v, r) in ch.iter_mut().zip(&ratio) {
            *v = *v * *r;
        }
        let spectrum = Spectrum::new(ch)?;
        samples.push(LabeledSample {
            spectrum,
            ..s.clone()
        });
    }
    Ok(Dataset {
        samples,
        provenance: ds.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(v: [f64; CHANNELS]) -> Spectrum<f64> {
        Spectrum::new(v).unwrap()
    }

    fn sample(x: f64, y: f64, rp: Option<usize>, seq: usize, base: f64) -> LabeledSample<f64> {
        LabeledSample {
            spectrum: spec([base; CHANNELS]),
            position: Position::new(x, y),
            rp_id: rp,
            seq,
            source: Source::Measured,
        }
    }

    #[test]
    fn spectrum_invariants() {
        let mut v = [1.0; CHANNELS];
        assert!(Spectrum::new(v).is_ok());
        v[3] = -3.0;
        assert!(matches!(Spectrum::new(v), Err(Error::InvalidSpectrum { ref channel, .. }) if channel == "F4"));
        v[3] = 65536.0;
        assert!(Spectrum::new(v).is_err());
        v[3] = f64::NAN;
        assert!(Spectrum::new(v).is_err());
        assert!(Spectrum::<f64>::from_slice(&[1.0; 10]).is_err());
        let c = Spectrum::clamped([-1.0, 70000.0, f64::INFINITY, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&c.channels()[..4], &[0.0, 65535.0, 0.0, 5.0]);
    }

    #[test]
    fn dataset_is_sorted_canonically() {
        let ds = Dataset::new(
            vec![
                sample(100.0, 50.0, Some(2), 1, 1.0),
                sample(50.0, 60.0, Some(1), 0, 1.0),
                sample(100.0, 50.0, Some(2), 0, 1.0),
                sample(50.0, 10.0, Some(0), 0, 1.0),
            ],
            Provenance::Measured,
        )
        .unwrap();
        let keys: Vec<_> = ds.samples().iter().map(|s| (s.rp_id, s.seq)).collect();
        assert_eq!(keys, vec![(Some(0), 0), (Some(1), 0), (Some(2), 0), (Some(2), 1)]);
        assert!(ds.is_canonical());
        let again = Dataset::new(ds.samples().to_vec(), ds.provenance).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn csv_layout_for_one_sample() {
        let ds = Dataset::new(vec![sample(0.0, 0.0, Some(0), 0, 7.0)], Provenance::Measured).unwrap();
        let text = ds.to_csv_string();
        let lines: Vec<&str> = text.split_terminator('\n').collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "F1,F2,F3,F4,F5,F6,F7,F8,Clear,NIR,Flicker,x,y,rp_id,seq");
        assert_eq!(lines[0].split(',').count(), 15);
        assert_eq!(lines[1], "7,7,7,7,7,7,7,7,7,7,7,0,0,0,0");
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let ds = Dataset::<f64>::empty(Provenance::Measured);
        assert_eq!(ds.to_csv_string(), "F1,F2,F3,F4,F5,F6,F7,F8,Clear,NIR,Flicker,x,y,rp_id,seq\n");
        let back = Dataset::<f64>::read_csv(ds.to_csv_string().as_bytes()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn load_sorts_rows() {
        let text = "F1,F2,F3,F4,F5,F6,F7,F8,Clear,NIR,Flicker,x,y,rp_id,seq\n\
                    1,1,1,1,1,1,1,1,1,1,1,200,10,1,0\n\
                    2,2,2,2,2,2,2,2,2,2,2,100,10,0,1\n\
                    3,3,3,3,3,3,3,3,3,3,3,100,10,0,0\n";
        let ds = Dataset::<f64>::read_csv(text.as_bytes()).unwrap();
        let firsts: Vec<f64> = ds.spectra().map(|s| s.get(0)).collect();
        assert_eq!(firsts, vec![3.0, 2.0, 1.0]);
        assert_eq!(ds.provenance, Provenance::Measured);
    }

    #[test]
    fn load_errors_name_row_and_column() {
        let text = "F1,F2,F3,F4,F5,F6,F7,F8,Clear,NIR,Flicker,x,y,rp_id,seq\n\
                    1,1,1,1,1,1,1,1,1,1,1,200,10,1,0\n\
                    1,1,-3,1,1,1,1,1,1,1,1,200,10,1,1\n";
        match Dataset::<f64>::read_csv(text.as_bytes()) {
            Err(Error::Cell { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "F3")),
            other => panic!("unexpected {other:?}"),
        }
        let text = "F1,F2,F3,F4,F5,F6,F7,F8,Clear,NIR,Flicker,x,y,seq\n1,1,1,1,1,1,1,1,abc,1,1,0,0,0\n";
        match Dataset::<f64>::read_csv(text.as_bytes()) {
            Err(Error::Cell { row, column, .. }) => assert_eq!((row, column.as_str()), (1, "Clear")),
            other => panic!("unexpected {other:?}"),
        }
        let text = "F1,F2,F3,F4,F5,F6,F7,F8,Clear,NIR,Flicker,x,y,z\n";
        assert!(matches!(Dataset::<f64>::read_csv(text.as_bytes()), Err(Error::Header(_))));
        let text = "F1,F2,F3,F4,F5,F6,F7,F8,Clear,NIR,x,y\n";
        assert!(matches!(Dataset::<f64>::read_csv(text.as_bytes()), Err(Error::Header(m)) if m.contains("Flicker")));
        let text = "F1,F2,F3,F4,F5,F6,F7,F8,Clear,NIR,Flicker,x,y\n1,1,1,1,1,1,1,1,1,1,inf,0,0\n";
        assert!(Dataset::<f64>::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn synthetic_rows_have_empty_rp_id() {
        let ds = Dataset::new(vec![sample(10.5, 20.25, None, 3, 2.0)], Provenance::Synthetic).unwrap();
        let text = ds.to_csv_string();
        assert!(text.lines().nth(1).unwrap().ends_with(",10.5,20.25,,3"));
        let back = Dataset::<f64>::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn mixed_round_trip_keeps_source() {
        let mut s = sample(1.0, 2.0, None, 0, 4.0);
        s.source = Source::Synthetic;
        let ds = Dataset::new(vec![s, sample(1.0, 2.0, Some(0), 0, 4.0)], Provenance::SyntheticMixed).unwrap();
        let text = ds.to_csv_string();
        assert!(text.starts_with("F1,F2,F3,F4,F5,F6,F7,F8,Clear,NIR,Flicker,x,y,rp_id,seq,source\n"));
        let back = Dataset::<f64>::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn spectra_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let v = vec![spec([1.5; CHANNELS]), spec([0.0; CHANNELS])];
        save_spectra_csv(&v, &path).unwrap();
        assert_eq!(load_spectra_csv::<f64>(&path).unwrap(), v);
    }

    #[test]
    fn strip_and_mean() {
        let ds = Dataset::new(
            vec![sample(0.0, 0.0, Some(0), 0, 100.0), sample(0.0, 0.0, Some(0), 1, 300.0)],
            Provenance::Measured,
        )
        .unwrap();
        let s = strip_coordinates(&ds);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0], ds.samples()[0].spectrum);
        assert_eq!(mean_spectrum(&s).unwrap().get(CLEAR), 200.0);
        assert!(strip_coordinates(&Dataset::<f64>::empty(Provenance::Measured)).is_empty());
        assert!(mean_spectrum::<f64>(&[]).is_err());
        let same = vec![spec([3.25; CHANNELS]); 100];
        assert_eq!(mean_spectrum(&same).unwrap(), same[0]);
    }

    #[test]
    fn distinctness_examples() {
        let a = spec([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 0.0, 0.0]);
        assert!(pattern_distinctness(&a, &a).abs() < 1e-15);
        let mut e1 = [0.0; CHANNELS];
        e1[0] = 1.0;
        let mut e2 = [0.0; CHANNELS];
        e2[1] = 1.0;
        e2[CLEAR] = 5.0; // non-F channels are ignored
        assert_eq!(pattern_distinctness(&spec(e1), &spec(e2)), 1.0);
        assert_eq!(pattern_distinctness(&spec([0.0; CHANNELS]), &a), 0.0);
    }

    #[test]
    fn anchor_normalization() {
        let ds = Dataset::new(
            vec![sample(0.0, 0.0, Some(0), 0, 10.0), sample(5.0, 0.0, Some(1), 0, 20.0)],
            Provenance::Measured,
        )
        .unwrap();
        let anchor = spec([50.0; CHANNELS]);
        assert_eq!(normalize_to_anchor(&ds, &anchor, &anchor).unwrap(), ds);

        let half = spec([25.0; CHANNELS]);
        let out = normalize_to_anchor(&ds, &anchor, &half).unwrap();
        for (o, i) in out.samples().iter().zip(ds.samples()) {
            for c in 0..CHANNELS {
                let expect = if c == FLICKER { i.spectrum.get(c) } else { 2.0 * i.spectrum.get(c) };
                assert_eq!(o.spectrum.get(c), expect);
            }
        }

        let mut zero = [25.0; CHANNELS];
        zero[NIR] = 0.0;
        assert!(normalize_to_anchor(&ds, &anchor, &spec(zero)).is_err());
        // zero flicker in the anchor is fine: flicker is not scaled
        let mut zf = [50.0; CHANNELS];
        zf[FLICKER] = 0.0;
        assert!(normalize_to_anchor(&ds, &anchor, &spec(zf)).is_ok());

        let huge = spec([65535.0; CHANNELS]);
        let tiny = spec([1.0; CHANNELS]);
        assert!(normalize_to_anchor(&ds, &huge, &tiny).is_err());
    }

    fn arb_spectrum() -> impl Strategy<Value = Spectrum<f64>> {
        prop::array::uniform11(0.0f64..65535.0).prop_map(|a| Spectrum::new(a).unwrap())
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset<f64>> {
        prop::collection::vec(
            (arb_spectrum(), -100.0f64..900.0, -100.0f64..900.0, prop::option::of(0usize..42), 0usize..200),
            0..30,
        )
        .prop_map(|rows| {
            let samples = rows
                .into_iter()
                .map(|(spectrum, x, y, rp_id, seq)| LabeledSample {
                    spectrum,
                    position: Position::new(x, y),
                    rp_id,
                    seq,
                    source: Source::Measured,
                })
                .collect();
            Dataset::new(samples, Provenance::Measured).unwrap()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_byte_stable(ds in arb_dataset()) {
            let text = ds.to_csv_string();
            let back = Dataset::<f64>::read_csv(text.as_bytes()).unwrap();
            prop_assert_eq!(back.samples(), ds.samples());
            prop_assert_eq!(back.to_csv_string(), text);
        }

        #[test]
        fn canonical_sort_is_idempotent(ds in arb_dataset()) {
            prop_assert!(ds.is_canonical());
            let again = Dataset::new(ds.samples().to_vec(), ds.provenance).unwrap();
            prop_assert_eq!(again, ds);
        }

        #[test]
        fn mean_is_permutation_invariant(mut v in prop::collection::vec(arb_spectrum(), 1..20), k in 0usize..20) {
            let m1 = mean_spectrum(&v).unwrap();
            let len = v.len();
            v.rotate_left(k % len);
            v.reverse();
            let m2 = mean_spectrum(&v).unwrap();
            for c in 0..CHANNELS {
                prop_assert!((m1.get(c) - m2.get(c)).abs() <= 1e-9 * m1.get(c).max(1.0));
            }
        }

        #[test]
        fn distinctness_symmetric_and_bounded(a in arb_spectrum(), b in arb_spectrum()) {
            let d1 = pattern_distinctness(&a, &b);
            let d2 = pattern_distinctness(&b, &a);
            prop_assert_eq!(d1, d2);
            prop_assert!((0.0..=2.0).contains(&d1));
        }

        #[test]
        fn identical_anchors_are_identity(ds in arb_dataset(), anchor in arb_spectrum()) {
            prop_assume!(anchor.channels().iter().all(|v| *v > 0.0));
            prop_assert_eq!(normalize_to_anchor(&ds, &anchor, &anchor).unwrap(), ds);
        }
    }
}
