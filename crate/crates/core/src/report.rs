//! Evaluation metrics and report artifacts: error summaries, real vs
//! synthetic histograms, and deterministic SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Position, RoomPolygon};
use crate::localizer::TrainedLocalizer;
use crate::scalar::Scalar;
use crate::spectra::{Dataset, Spectrum, CHANNELS, CHANNEL_NAMES};

pub const DEFAULT_BINS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpError {
    pub rp_id: usize,
    pub mean_cm: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean_euclidean_cm: f64,
    pub median_cm: f64,
    pub p90_cm: f64,
    /// Only samples carrying an `rp_id` are grouped here.
    pub per_rp: Vec<RpError>,
    pub n: usize,
}

/// Percentile with linear interpolation between order statistics at rank
/// `q * (n - 1)`. `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Aggregates per-sample errors (cm) with their reference point ids.
pub fn summarize_errors(errors: &[f64], rp_ids: &[Option<usize>]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("error summary of an empty set".into()));
    }
    if errors.len() != rp_ids.len() {
        return Err(Error::Shape(format!("{} errors but {} rp ids", errors.len(), rp_ids.len())));
    }
    if let Some(i) = errors.iter().position(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::NonFinite(format!("error value {} at sample {i}", errors[i])));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (e, rp) in errors.iter().zip(rp_ids) {
        if let Some(rp) = rp {
            let g = groups.entry(*rp).or_default();
            g.0 += e;
            g.1 += 1;
        }
    }
    Ok(ErrorSummary {
        mean_euclidean_cm: errors.iter().sum::<f64>() / errors.len() as f64,
        median_cm: percentile(&sorted, 0.5),
        p90_cm: percentile(&sorted, 0.9),
        per_rp: groups
            .into_iter()
            .map(|(rp_id, (sum, n))| RpError {
                rp_id,
                mean_cm: sum / n as f64,
                n,
            })
            .collect(),
        n: errors.len(),
    })
}

pub fn error_summary<T: Scalar>(m: &TrainedLocalizer<T>, test: &Dataset<T>) -> Result<ErrorSummary> {
    let (errors, rp_ids) = per_sample_errors(m, test)?;
    summarize_errors(&errors, &rp_ids)
}

fn per_sample_errors<T: Scalar>(m: &TrainedLocalizer<T>, test: &Dataset<T>) -> Result<(Vec<f64>, Vec<Option<usize>>)> {
    let mut errors = Vec::with_capacity(test.len());
    for s in test.samples() {
        errors.push(m.predict(&s.spectrum)?.distance(&s.position).f64());
    }
    Ok((errors, test.samples().iter().map(|s| s.rp_id).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub channel: String,
    pub edges: Vec<f64>,
    pub real: Vec<u64>,
    pub synth: Vec<u64>,
    pub tv_distance: f64,
    /// Earth-mover distance in ADC counts, from the raw values.
    pub wasserstein1: f64,
}

/// Bins both samples of one channel over their combined range.
pub fn histogram_distance<T: Scalar>(
    real: &[Spectrum<T>],
    synth: &[Spectrum<T>],
    channel: usize,
    bins: usize,
) -> Result<HistogramPair> {
    if real.is_empty() || synth.is_empty() {
        return Err(Error::InvalidArgument("histograms need non-empty inputs".into()));
    }
    if channel >= CHANNELS || bins == 0 {
        return Err(Error::InvalidArgument(format!("channel {channel} / bins {bins} out of range")));
    }
    let a: Vec<f64> = real.iter().map(|s| s.get(channel).f64()).collect();
    let b: Vec<f64> = synth.iter().map(|s| s.get(channel).f64()).collect();
    let lo = a.iter().chain(&b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(&b).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let bin = |v: f64| {
        if hi > lo {
            (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let count = |vals: &[f64]| {
        let mut c = vec![0u64; bins];
        for v in vals {
            c[bin(*v)] += 1;
        }
        c
    };
    let (rc, sc) = (count(&a), count(&b));
    let tv = 0.5
        * rc.iter()
            .zip(&sc)
            .map(|(r, s)| (*r as f64 / a.len() as f64 - *s as f64 / b.len() as f64).abs())
            .sum::<f64>();
    Ok(HistogramPair {
        channel: CHANNEL_NAMES[channel].to_string(),
        edges,
        real: rc,
        synth: sc,
        tv_distance: tv.min(1.0),
        wasserstein1: wasserstein1(&a, &b),
    })
}

/// `∫ |F_a - F_b|` over the merged support of two empirical samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = 0.0;
    let mut prev = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    total
}

impl HistogramPair {
    /// `bin_lo,bin_hi,real,synth`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,real,synth\n");
        for i in 0..self.real.len() {
            let _ = writeln!(out, "{},{},{},{}", self.edges[i], self.edges[i + 1], self.real[i], self.synth[i]);
        }
        out
    }
}

/// Counts of points per square cell over a room's bounding box; `counts`
/// is row-major with row 0 at the smallest `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub cell_cm: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cols: usize,
    pub rows: usize,
    pub counts: Vec<u64>,
}

impl DensityGrid {
    pub fn new<T: Scalar>(room: &RoomPolygon<T>, cell_cm: f64) -> Result<Self> {
        if !(cell_cm > 0.0 && cell_cm.is_finite()) {
            return Err(Error::InvalidArgument("density cell size must be > 0".into()));
        }
        let bb = room.bounding_box();
        let cols = ((bb.width().f64() / cell_cm).ceil() as usize).max(1);
        let rows = ((bb.height().f64() / cell_cm).ceil() as usize).max(1);
        Ok(Self {
            cell_cm,
            origin_x: bb.min.x.f64(),
            origin_y: bb.min.y.f64(),
            cols,
            rows,
            counts: vec![0; cols * rows],
        })
    }

    /// Points outside the grid are clamped onto its border cells.
    pub fn add<T: Scalar>(&mut self, p: Position<T>) {
        let cell = |v: f64, o: f64, n: usize| (((v - o) / self.cell_cm).floor().max(0.0) as usize).min(n - 1);
        let c = cell(p.x.f64(), self.origin_x, self.cols);
        let r = cell(p.y.f64(), self.origin_y, self.rows);
        self.counts[r * self.cols + c] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

const MARGIN: f64 = 20.0;

struct Canvas {
    min_x: f64,
    max_y: f64,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new<T: Scalar>(room: &RoomPolygon<T>, extra_right: f64) -> Self {
        let bb = room.bounding_box();
        Self {
            min_x: bb.min.x.f64(),
            max_y: bb.max.y.f64(),
            width: bb.width().f64() + 2.0 * MARGIN + extra_right,
            height: bb.height().f64() + 2.0 * MARGIN,
        }
    }

    /// Room cm to SVG px (1 px per cm, y up).
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (x - self.min_x + MARGIN, self.max_y - y + MARGIN)
    }

    fn open(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            w = self.width,
            h = self.height
        )
    }

    fn outline<T: Scalar>(&self, room: &RoomPolygon<T>) -> String {
        let pts: Vec<String> = room
            .vertices()
            .iter()
            .map(|v| {
                let (x, y) = self.map(v.x.f64(), v.y.f64());
                format!("{x:.2},{y:.2}")
            })
            .collect();
        format!(
            "<polygon points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        )
    }
}

/// Truth (blue) vs prediction (red) with a gray segment per pair.
pub fn scatter_svg_string<T: Scalar>(room: &RoomPolygon<T>, truth: &[Position<T>], pred: &[Position<T>]) -> Result<String> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} truths but {} predictions", truth.len(), pred.len())));
    }
    let cv = Canvas::new(room, 0.0);
    let mut out = cv.open();
    out.push_str(&cv.outline(room));
    let pts: Vec<_> = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| (cv.map(t.x.f64(), t.y.f64()), cv.map(p.x.f64(), p.y.f64())))
        .collect();
    for ((tx, ty), (px, py)) in &pts {
        let _ = writeln!(
            out,
            "<line x1=\"{tx:.2}\" y1=\"{ty:.2}\" x2=\"{px:.2}\" y2=\"{py:.2}\" stroke=\"#999999\" stroke-width=\"0.5\"/>"
        );
    }
    for ((tx, ty), _) in &pts {
        let _ = writeln!(out, "<circle cx=\"{tx:.2}\" cy=\"{ty:.2}\" r=\"3\" fill=\"blue\"/>");
    }
    for (_, (px, py)) in &pts {
        let _ = writeln!(out, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2\" fill=\"red\"/>");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn scatter_svg<T: Scalar>(
    m: &TrainedLocalizer<T>,
    room: &RoomPolygon<T>,
    test: &Dataset<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let truth: Vec<_> = test.samples().iter().map(|s| s.position).collect();
    let pred = m.predict_all(test.spectra())?;
    write(path, &scatter_svg_string(room, &truth, &pred)?)
}

/// Linear ramp from white at 0 to `#b2182b` at the grid maximum.
pub fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mix = |hi: f64| (255.0 + (hi - 255.0) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(178.0), mix(24.0), mix(43.0))
}

/// Density grid cells under the room outline, with a five-step legend.
pub fn heatmap_svg_string<T: Scalar>(grid: &DensityGrid, room: &RoomPolygon<T>) -> String {
    let legend_w = 110.0;
    let cv = Canvas::new(room, legend_w);
    let max = grid.counts.iter().copied().max().unwrap_or(0);
    let scale = |c: u64| if max == 0 { 0.0 } else { c as f64 / max as f64 };
    let mut out = cv.open();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let x0 = grid.origin_x + c as f64 * grid.cell_cm;
            let y1 = grid.origin_y + (r + 1) as f64 * grid.cell_cm;
            let (x, y) = cv.map(x0, y1);
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{s:.2}\" height=\"{s:.2}\" fill=\"{}\"/>",
                ramp(scale(grid.counts[r * grid.cols + c])),
                s = grid.cell_cm
            );
        }
    }
    out.push_str(&cv.outline(room));
    let lx = cv.width - legend_w + 10.0;
    let _ = writeln!(out, "<text x=\"{lx:.2}\" y=\"{:.2}\" font-size=\"12\">count</text>", MARGIN);
    for k in 0..5 {
        let t = k as f64 / 4.0;
        let y = MARGIN + 10.0 + 22.0 * k as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.2}\" y=\"{y:.2}\" width=\"18\" height=\"18\" fill=\"{}\" stroke=\"black\" stroke-width=\"0.5\"/>",
            ramp(t)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{:.0}</text>",
            lx + 24.0,
            y + 14.0,
            t * max as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn heatmap_svg<T: Scalar>(grid: &DensityGrid, room: &RoomPolygon<T>, path: impl AsRef<Path>) -> Result<()> {
    write(path, &heatmap_svg_string(grid, room))
}

/// `metric,value` rows, metrics prefixed by each summary's label.
pub fn summary_csv(summaries: &[(&str, &ErrorSummary)]) -> String {
    let mut out = String::from("metric,value\n");
    for (label, s) in summaries {
        let _ = writeln!(out, "{label}_mean_cm,{}", s.mean_euclidean_cm);
        let _ = writeln!(out, "{label}_median_cm,{}", s.median_cm);
        let _ = writeln!(out, "{label}_p90_cm,{}", s.p90_cm);
        let _ = writeln!(out, "{label}_n,{}", s.n);
    }
    out
}

/// `rp_id,<label>_cm,...` over the union of reference points.
pub fn per_rp_csv(summaries: &[(&str, &ErrorSummary)]) -> String {
    let mut out = String::from("rp_id");
    for (label, _) in summaries {
        let _ = write!(out, ",{label}_cm");
    }
    out.push('\n');
    let mut rows: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (k, (_, s)) in summaries.iter().enumerate() {
        for r in &s.per_rp {
            rows.entry(r.rp_id).or_insert_with(|| vec![None; summaries.len()])[k] = Some(r.mean_cm);
        }
    }
    for (rp, vals) in rows {
        let _ = write!(out, "{rp}");
        for v in vals {
            out.push(',');
            if let Some(v) = v {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

pub(crate) fn write(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
