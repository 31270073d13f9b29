//! Run configuration: one JSON document, every field defaulted, unknown
//! keys rejected, errors located by JSON pointer.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

use crate::error::{Error, Result};
use crate::geometry::{default_room_vertices, Position, ReferenceLayout, RoomPolygon, DEFAULT_PITCH_CM};
use crate::localizer::{SearchSpace, SplitFractions};
use crate::simlab::{default_lamps, default_sensor, Lamp, Protocol, SensorModel};
use crate::spectra::{channel_index, CHANNELS};
use crate::tabgan::GanConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomConfig {
    pub vertices: Vec<Position<f64>>,
    /// Grid pitch for reference points when `reference_points` is absent.
    pub pitch_cm: [f64; 2],
    pub reference_points: Option<Vec<Position<f64>>>,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self {
            vertices: default_room_vertices(),
            pitch_cm: [DEFAULT_PITCH_CM.0, DEFAULT_PITCH_CM.1],
            reference_points: None,
        }
    }
}

impl RoomConfig {
    pub fn build(&self) -> Result<(RoomPolygon<f64>, ReferenceLayout<f64>)> {
        let room = RoomPolygon::new(self.vertices.clone()).map_err(|e| at("/room/vertices", e))?;
        let layout = match &self.reference_points {
            Some(points) => ReferenceLayout::explicit(&room, points.clone()).map_err(|e| at("/room/reference_points", e))?,
            None => ReferenceLayout::grid(&room, self.pitch_cm[0], self.pitch_cm[1]).map_err(|e| at("/room/pitch_cm", e))?,
        };
        Ok((room, layout))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizerConfig {
    pub search: SearchSpace,
    pub trials: usize,
    /// Channel names withheld from the regressor.
    pub disabled_channels: Vec<String>,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            search: SearchSpace::default(),
            trials: 20,
            disabled_channels: Vec::new(),
        }
    }
}

impl LocalizerConfig {
    pub fn features(&self) -> Result<[bool; CHANNELS]> {
        let mut on = [true; CHANNELS];
        for (i, name) in self.disabled_channels.iter().enumerate() {
            let c = channel_index(name).ok_or_else(|| Error::Config {
                pointer: format!("/localizer/disabled_channels/{i}"),
                message: format!("unknown channel `{name}`"),
            })?;
            on[c] = false;
        }
        Ok(on)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    /// Synthetic spectra drawn from the GAN; 0 skips the GAN entirely.
    pub samples: usize,
    pub density_cell_cm: f64,
    pub histogram_bins: usize,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            samples: 6000,
            density_cell_cm: 25.0,
            histogram_bins: crate::report::DEFAULT_BINS,
        }
    }
}

/// Axis-aligned region, bounds inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn contains(&self, p: Position<f64>) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }
}

/// Drops a share of the training samples inside `region` before any
/// model is trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StressConfig {
    pub enabled: bool,
    pub drop_fraction: f64,
    pub region: Region,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            drop_fraction: 0.5,
            // west arm of the default U
            region: Region {
                x_min: 0.0,
                x_max: 200.0,
                y_min: 300.0,
                y_max: 800.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub room: RoomConfig,
    pub lamps: Vec<Lamp<f64>>,
    pub sensor: SensorModel<f64>,
    pub protocol: Protocol,
    /// Measured corpus CSV; when absent the corpus is simulated.
    pub corpus: Option<PathBuf>,
    pub split: SplitFractions,
    pub localizer: LocalizerConfig,
    /// `gan.seed` is replaced by the stage seed inside the pipeline.
    pub gan: GanConfig,
    pub augmentation: AugmentationConfig,
    pub stress: StressConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            room: RoomConfig::default(),
            lamps: default_lamps(),
            sensor: default_sensor(),
            protocol: Protocol::default(),
            corpus: None,
            split: SplitFractions::default(),
            localizer: LocalizerConfig::default(),
            gan: GanConfig::default(),
            augmentation: AugmentationConfig::default(),
            stress: StressConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn at(pointer: &str, e: Error) -> Error {
    Error::Config {
        pointer: pointer.to_string(),
        message: e.to_string(),
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl RunConfig {
    /// Parses and validates. Every failure is an [`Error::Config`].
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            pointer: pointer(e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.room.build()?;
        if self.corpus.is_none() {
            if self.lamps.is_empty() {
                return Err(at("/lamps", Error::InvalidArgument("at least one lamp is needed".into())));
            }
            for (i, l) in self.lamps.iter().enumerate() {
                l.validate().map_err(|e| at(&format!("/lamps/{i}"), e))?;
            }
            self.sensor.validate().map_err(|e| at("/sensor", e))?;
            self.protocol.samples_per_rp().map_err(|e| at("/protocol", e))?;
        }
        self.split.validate().map_err(|e| at("/split", e))?;
        self.localizer.search.validate().map_err(|e| at("/localizer/search", e))?;
        if self.localizer.trials == 0 {
            return Err(at("/localizer/trials", Error::InvalidArgument("at least one trial".into())));
        }
        self.localizer.features()?;
        self.gan.validate().map_err(|e| at("/gan", e))?;
        let aug = &self.augmentation;
        if !(aug.density_cell_cm > 0.0 && aug.density_cell_cm.is_finite()) {
            return Err(at("/augmentation/density_cell_cm", Error::InvalidArgument("must be > 0".into())));
        }
        if aug.histogram_bins == 0 {
            return Err(at("/augmentation/histogram_bins", Error::InvalidArgument("must be >= 1".into())));
        }
        if !(0.0..=1.0).contains(&self.stress.drop_fraction) {
            return Err(at("/stress/drop_fraction", Error::InvalidArgument("must lie in [0, 1]".into())));
        }
        let r = &self.stress.region;
        if !(r.x_min <= r.x_max && r.y_min <= r.y_max) {
            return Err(at("/stress/region", Error::InvalidArgument("min bounds exceed max bounds".into())));
        }
        Ok(())
    }
}
