//! Text artifacts: datasets, model checkpoints, REM dumps and particle
//! trajectories.
//!
//! Floating-point values are written with 17 significant digits, so every
//! file reads back bit-for-bit. Lines starting with `#` are comments; writers
//! put a provenance line (`# mtl-lab config=<hash> seed=<n>`) first.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mtl_core::datasets::{Dataset, Normalizer, Sample};
use mtl_core::mlp::{Head, Layer, Mlp, Model};
use mtl_core::particlesim::TrajectoryPoint;
use mtl_core::reml::RadioMap;
use mtl_core::{Area, Point2, PropagationParams, SensorLayout};

use crate::error::{LabError, Result};

/// Provenance written at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn line(&self) -> String {
        format!("# mtl-lab config={} seed={}", self.config_hash, self.seed)
    }
}

/// 17 significant digits.
pub fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv17(values: &[f64]) -> String {
    values.iter().map(|v| f17(*v)).collect::<Vec<_>>().join(",")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(LabError::Missing(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

/// Line cursor that skips comments and reports 1-based line numbers.
struct Cursor<'a> {
    path: PathBuf,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Cursor<'a> {
    fn new(path: &Path, text: &'a str) -> Self {
        Self { path: path.to_path_buf(), lines: text.lines().enumerate().peekable(), last: 0 }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.lines.by_ref() {
            self.last = i + 1;
            if !l.trim_start().starts_with('#') {
                return Some((i + 1, l.trim_end()));
            }
        }
        None
    }

    fn err(&self, line: usize, message: impl Into<String>) -> LabError {
        LabError::Parse { path: self.path.clone(), line, message: message.into() }
    }

    /// The next line, or an error naming the missing section.
    fn expect(&mut self, section: &str) -> Result<(usize, &'a str)> {
        let last = self.last;
        self.next().ok_or_else(|| self.err(last + 1, format!("unexpected end of file: missing {section}")))
    }

    fn parse<T: FromStr>(&self, line: usize, what: &str, raw: &str) -> Result<T> {
        raw.trim().parse().map_err(|_| self.err(line, format!("invalid {what} `{}`", raw.trim())))
    }

    fn finite(&self, line: usize, what: &str, raw: &str) -> Result<f64> {
        let v: f64 = self.parse(line, what, raw)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(line, format!("non-finite {what}")))
        }
    }

    fn floats(&self, line: usize, what: &str, raw: &str) -> Result<Vec<f64>> {
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',').map(|s| self.finite(line, what, s)).collect()
    }

    fn header(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (no, l) = self.expect(&format!("header `{key}=`"))?;
        match l.split_once('=') {
            Some((k, v)) if k.trim() == key => Ok((no, v.trim())),
            _ => Err(self.err(no, format!("expected header `{key}=`, found `{l}`"))),
        }
    }
}

fn format_area(a: Area) -> String {
    format!("{}x{}", f17(a.width), f17(a.height))
}

fn parse_area(c: &Cursor<'_>, line: usize, raw: &str) -> Result<Area> {
    let (w, h) = raw.split_once('x').ok_or_else(|| c.err(line, "area must be <w>x<h>"))?;
    Area::new(c.finite(line, "area width", w)?, c.finite(line, "area height", h)?)
        .map_err(|e| c.err(line, e.to_string()))
}

/// Serializes a dataset: header, sensor block, blank line, one record per
/// sample as `nt;P_1,...,P_Ns;x1,y1,...`.
pub fn dataset_to_text(ds: &Dataset, stamp: &Stamp) -> String {
    let p = &ds.params;
    let mut s = String::new();
    let _ = writeln!(s, "{}", stamp.line());
    let _ = writeln!(s, "ns={}", ds.layout.len());
    let _ = writeln!(s, "area={}", format_area(ds.layout.area()));
    let _ = writeln!(s, "beta={}", f17(p.path_loss_exponent));
    let _ = writeln!(s, "sigma2={}", f17(p.shadow_variance_db));
    let _ = writeln!(s, "dc={}", f17(p.decorrelation_distance));
    let _ = writeln!(s, "p0={}", f17(p.ref_power_db));
    let _ = writeln!(s, "d0={}", f17(p.ref_distance));
    for v in ds.layout.positions() {
        let _ = writeln!(s, "{} {}", f17(v.x), f17(v.y));
    }
    s.push('\n');
    for smp in &ds.samples {
        let coords: Vec<f64> = smp.coords.iter().flat_map(|c| [c.x, c.y]).collect();
        let _ = writeln!(s, "{};{};{}", smp.tx_count(), csv17(&smp.rss), csv17(&coords));
    }
    s
}

pub fn dataset_from_text(path: &Path, text: &str) -> Result<Dataset> {
    let mut c = Cursor::new(path, text);
    let (l, v) = c.header("ns")?;
    let ns: usize = c.parse(l, "sensor count", v)?;
    let (l, v) = c.header("area")?;
    let area = parse_area(&c, l, v)?;
    let mut num = |key: &str| -> Result<f64> {
        let (l, v) = c.header(key)?;
        c.finite(l, key, v)
    };
    let params = PropagationParams {
        path_loss_exponent: num("beta")?,
        shadow_variance_db: num("sigma2")?,
        decorrelation_distance: num("dc")?,
        ref_power_db: num("p0")?,
        ref_distance: num("d0")?,
    };
    let mut sensors = Vec::with_capacity(ns);
    let block_start = c.last + 1;
    loop {
        let (no, l) = c.expect("blank line after the sensor block")?;
        if l.trim().is_empty() {
            break;
        }
        let mut it = l.split_whitespace();
        let (Some(x), Some(y), None) = (it.next(), it.next(), it.next()) else {
            return Err(c.err(no, "sensor line must be `x y`"));
        };
        sensors.push(Point2::new(c.finite(no, "sensor x", x)?, c.finite(no, "sensor y", y)?));
    }
    if sensors.len() != ns {
        return Err(c.err(block_start, format!("header says ns={ns} but the sensor block has {} lines", sensors.len())));
    }
    let layout = SensorLayout::new(sensors, area).map_err(|e| c.err(block_start, e.to_string()))?;
    params.validate().map_err(|e| c.err(1, e.to_string()))?;

    let mut samples = Vec::new();
    while let Some((no, l)) = c.next() {
        if l.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = l.split(';').collect();
        if parts.len() != 3 {
            return Err(c.err(no, "record must be `nt;P_1,...;x1,y1,...`"));
        }
        let nt: usize = c.parse(no, "transmitter count", parts[0])?;
        let rss = c.floats(no, "rss value", parts[1])?;
        if rss.len() != ns {
            return Err(c.err(no, format!("expected {ns} rss values, found {}", rss.len())));
        }
        let xy = c.floats(no, "coordinate", parts[2])?;
        if nt == 0 || xy.len() != 2 * nt {
            return Err(c.err(no, format!("nt={nt} needs {} coordinates, found {}", 2 * nt, xy.len())));
        }
        let coords = xy.chunks_exact(2).map(|p| Point2::new(p[0], p[1])).collect();
        samples.push(Sample { rss, coords });
    }
    Ok(Dataset { layout, params, samples })
}

pub fn write_dataset(path: &Path, ds: &Dataset, stamp: &Stamp) -> Result<()> {
    write_text(path, &dataset_to_text(ds, stamp))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_text(path, &read_text(path)?)
}

/// Checkpoint: `dims=`, `head=`, `norm=<w>x<h>;<means>;<stds>`, then per
/// layer its weight rows (one line per input unit) and a bias line.
pub fn model_to_text(model: &Model, stamp: &Stamp) -> String {
    let mut s = String::new();
    let dims: Vec<String> = model.net.dims().iter().map(ToString::to_string).collect();
    let n = &model.norm;
    let _ = writeln!(s, "{}", stamp.line());
    let _ = writeln!(s, "dims={}", dims.join(","));
    let _ = writeln!(s, "head={}", model.net.head().as_str());
    let _ = writeln!(s, "norm={};{};{}", format_area(n.area), csv17(&n.mean), csv17(&n.std));
    for layer in model.net.layers() {
        for row in layer.weights.chunks_exact(layer.outputs) {
            let _ = writeln!(s, "{}", csv17(row));
        }
        let _ = writeln!(s, "{}", csv17(&layer.biases));
    }
    s
}

pub fn model_from_text(path: &Path, text: &str) -> Result<Model> {
    let mut c = Cursor::new(path, text);
    let (l, v) = c.header("dims")?;
    let dims: Vec<usize> = v.split(',').map(|d| c.parse(l, "layer width", d)).collect::<Result<_>>()?;
    if dims.len() < 2 || dims.contains(&0) {
        return Err(c.err(l, "dims need at least two positive widths"));
    }
    let (l, v) = c.header("head")?;
    let head: Head = v.parse().map_err(|e: mtl_core::Error| c.err(l, e.to_string()))?;
    let (l, v) = c.header("norm")?;
    let parts: Vec<&str> = v.split(';').collect();
    if parts.len() != 3 {
        return Err(c.err(l, "norm must be `<w>x<h>;<means>;<stds>`"));
    }
    let norm = Normalizer {
        area: parse_area(&c, l, parts[0])?,
        mean: c.floats(l, "feature mean", parts[1])?,
        std: c.floats(l, "feature std", parts[2])?,
    };
    if norm.mean.len() != dims[0] || norm.std.len() != dims[0] {
        return Err(c.err(l, format!("norm needs {} means and stds", dims[0])));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let mut layer = Layer::zeros(w[0], w[1]);
        for i in 0..w[0] {
            let (no, line) = c.expect("weight rows")?;
            let row = c.floats(no, "weight", line)?;
            if row.len() != w[1] {
                return Err(c.err(no, format!("expected {} weights, found {}", w[1], row.len())));
            }
            layer.weights[i * w[1]..(i + 1) * w[1]].copy_from_slice(&row);
        }
        let (no, line) = c.expect("bias row")?;
        layer.biases = c.floats(no, "bias", line)?;
        if layer.biases.len() != w[1] {
            return Err(c.err(no, format!("expected {} biases, found {}", w[1], layer.biases.len())));
        }
        layers.push(layer);
    }
    if let Some((no, _)) = c.next() {
        return Err(c.err(no, "trailing data after the last layer"));
    }
    let net = Mlp::from_layers(layers, head).map_err(|e| c.err(1, e.to_string()))?;
    Ok(Model { net, norm })
}

pub fn write_model(path: &Path, model: &Model, stamp: &Stamp) -> Result<()> {
    write_text(path, &model_to_text(model, stamp))
}

pub fn read_model(path: &Path) -> Result<Model> {
    model_from_text(path, &read_text(path)?)
}

/// `rem R=<r> w=<Pw> h=<Ph>` followed by `Pw` rows of `Ph` dB values; row
/// `i` is the pixel column at `x = (i + ½)R`.
pub fn rem_to_text(rem: &RadioMap, stamp: &Stamp) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", stamp.line());
    let _ = writeln!(s, "rem R={} w={} h={}", rem.resolution(), rem.width_px(), rem.height_px());
    for row in rem.values().chunks_exact(rem.height_px()) {
        let line: Vec<String> = row.iter().map(|v| f17(*v)).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn rem_from_text(path: &Path, text: &str) -> Result<RadioMap> {
    let mut c = Cursor::new(path, text);
    let (no, head) = c.expect("rem header")?;
    let mut fields = head.split_whitespace();
    if fields.next() != Some("rem") {
        return Err(c.err(no, "expected `rem R=<r> w=<Pw> h=<Ph>`"));
    }
    let mut get = |key: &str| -> Result<&str> {
        fields
            .next()
            .and_then(|f| f.strip_prefix(key))
            .ok_or_else(|| c.err(no, format!("missing `{key}` in rem header")))
    };
    let (r, w, h) = (get("R=")?, get("w=")?, get("h=")?);
    let resolution = c.finite(no, "resolution", r)?;
    let (w, h): (usize, usize) = (c.parse(no, "width", w)?, c.parse(no, "height", h)?);
    let mut values = Vec::with_capacity(w * h);
    for _ in 0..w {
        let (no, line) = c.expect("rem rows")?;
        let row: Vec<f64> = line.split_whitespace().map(|v| c.finite(no, "rem value", v)).collect::<Result<_>>()?;
        if row.len() != h {
            return Err(c.err(no, format!("expected {h} values, found {}", row.len())));
        }
        values.extend(row);
    }
    RadioMap::from_values(values, w, h, resolution).map_err(|e| c.err(no, e.to_string()))
}

pub const TRAJECTORY_HEADER: &str = "iter,particle,x,y,movement,error_norm";

pub fn trajectory_to_csv(points: &[TrajectoryPoint], stamp: &Stamp) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", stamp.line());
    let _ = writeln!(s, "{TRAJECTORY_HEADER}");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.iteration, p.particle, p.position.x, p.position.y, p.movement, p.error_norm
        );
    }
    s
}
