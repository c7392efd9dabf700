//! Flat `key = value` experiment configuration.
//!
//! Every key is optional; an empty file yields the reference setup
//! (16 grid sensors on 20×20 m, β = 3.23, σ² = 10 dB², 3000 samples per
//! transmitter count, a 3×128 ELU network trained for 1000 epochs, ...).
//! Lines starting with `#` are comments. Unknown and duplicate keys are
//! rejected.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mtl_core::mlp::TrainConfig;
use mtl_core::particlesim::PsParams;
use mtl_core::propagation::{free_space_path_loss_db, grid_layout};
use mtl_core::{Area, PropagationParams, SensorLayout};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

/// Unit of the regression loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossUnits {
    /// Squared error in m² (targets scaled internally, error weighted back).
    SquareMeters,
    /// Squared error of the area-normalized targets.
    Normalized,
}

impl LossUnits {
    pub fn as_str(self) -> &'static str {
        match self {
            LossUnits::SquareMeters => "m2",
            LossUnits::Normalized => "normalized",
        }
    }
}

impl FromStr for LossUnits {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "m2" => Ok(LossUnits::SquareMeters),
            "normalized" => Ok(LossUnits::Normalized),
            _ => Err(format!("expected `m2` or `normalized`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,

    pub ns: usize,
    pub area: Area,
    pub tx_power_dbm: f64,
    pub frequency_hz: f64,
    pub d0: f64,
    pub beta: f64,
    pub sigma2: f64,
    pub dc: f64,

    pub nt_max: usize,
    pub train_per_count: usize,
    pub test_per_count: usize,
    pub val_fraction: f64,

    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub loss_units: LossUnits,
    pub train: TrainConfig,

    pub reml_resolution: f64,
    pub ps: PsParams,

    pub sweep_nt: usize,
    pub sweep_train_per_count: usize,
    pub sweep_test_per_count: usize,
    pub sweep_density: f64,
    pub sweep_density_ns: Vec<usize>,
    pub sweep_area_rho: Vec<f64>,

    /// REM and particle trajectories are dumped for this many test samples.
    pub dump_first: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("out"),
            ns: 16,
            area: Area::square(20.0).expect("positive side"),
            tx_power_dbm: 20.0,
            frequency_hz: 2.4e9,
            d0: 1.0,
            beta: 3.23,
            sigma2: 10.0,
            dc: 1.0,
            nt_max: 4,
            train_per_count: 3000,
            test_per_count: 3000,
            val_fraction: 0.2,
            hidden_layers: 3,
            hidden_units: 128,
            loss_units: LossUnits::SquareMeters,
            train: TrainConfig::default(),
            reml_resolution: 0.1,
            ps: PsParams::default(),
            sweep_nt: 1,
            sweep_train_per_count: 3000,
            sweep_test_per_count: 1000,
            sweep_density: 4.0,
            sweep_density_ns: vec![16, 36, 64],
            sweep_area_rho: vec![1.0, 4.0, 9.0, 16.0, 25.0],
            dump_first: 0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| LabError::config(key, format!("cannot parse `{raw}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value(key, s)).collect()
}

fn parse_area(key: &str, raw: &str) -> Result<Area> {
    let (w, h) =
        raw.split_once('x').ok_or_else(|| LabError::config(key, format!("expected <width>x<height>, got `{raw}`")))?;
    let (w, h) = (parse_value::<f64>(key, w.trim())?, parse_value::<f64>(key, h.trim())?);
    Area::new(w, h).map_err(|e| LabError::config(key, e.to_string()))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses the text of a config file on top of the defaults, then
    /// validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut seen = HashSet::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LabError::config(line, format!("line {}: expected `key = value`", no + 1)))?;
            let (key, v) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(LabError::config(key, format!("line {}: duplicate key", no + 1)));
            }
            match key {
                "seed" => c.seed = parse_value(key, v)?,
                "out" => c.out = PathBuf::from(v),
                "ns" => c.ns = parse_value(key, v)?,
                "area" => c.area = parse_area(key, v)?,
                "tx_power_dbm" => c.tx_power_dbm = parse_value(key, v)?,
                "frequency_hz" => c.frequency_hz = parse_value(key, v)?,
                "d0" => c.d0 = parse_value(key, v)?,
                "beta" => c.beta = parse_value(key, v)?,
                "sigma2" => c.sigma2 = parse_value(key, v)?,
                "dc" => c.dc = parse_value(key, v)?,
                "nt_max" => c.nt_max = parse_value(key, v)?,
                "train_per_count" => c.train_per_count = parse_value(key, v)?,
                "test_per_count" => c.test_per_count = parse_value(key, v)?,
                "val_fraction" => c.val_fraction = parse_value(key, v)?,
                "hidden_layers" => c.hidden_layers = parse_value(key, v)?,
                "hidden_units" => c.hidden_units = parse_value(key, v)?,
                "loss_units" => c.loss_units = parse_value(key, v)?,
                "lr" => c.train.learning_rate = parse_value(key, v)?,
                "batch_size" => c.train.batch_size = parse_value(key, v)?,
                "l2" => c.train.l2 = parse_value(key, v)?,
                "epochs" => c.train.epochs = parse_value(key, v)?,
                "adam_beta1" => c.train.beta1 = parse_value(key, v)?,
                "adam_beta2" => c.train.beta2 = parse_value(key, v)?,
                "adam_eps" => c.train.epsilon = parse_value(key, v)?,
                "reml_resolution" => c.reml_resolution = parse_value(key, v)?,
                "ps_max_iter" => c.ps.max_iter = parse_value(key, v)?,
                "ps_movement_tol" => c.ps.movement_tol = parse_value(key, v)?,
                "ps_power_tol" => c.ps.power_tol = parse_value(key, v)?,
                "ps_step_gain" => c.ps.step_gain = parse_value(key, v)?,
                "ps_init_radius" => c.ps.init_radius = parse_value(key, v)?,
                "sweep_nt" => c.sweep_nt = parse_value(key, v)?,
                "sweep_train_per_count" => c.sweep_train_per_count = parse_value(key, v)?,
                "sweep_test_per_count" => c.sweep_test_per_count = parse_value(key, v)?,
                "sweep_density" => c.sweep_density = parse_value(key, v)?,
                "sweep_density_ns" => c.sweep_density_ns = parse_list(key, v)?,
                "sweep_area_rho" => c.sweep_area_rho = parse_list(key, v)?,
                "dump_first" => c.dump_first = parse_value(key, v)?,
                _ => return Err(LabError::config(key, format!("line {}: unknown key", no + 1))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let p = &self.ps;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        kv("ns", self.ns.to_string());
        kv("area", format!("{}x{}", self.area.width, self.area.height));
        kv("tx_power_dbm", self.tx_power_dbm.to_string());
        kv("frequency_hz", self.frequency_hz.to_string());
        kv("d0", self.d0.to_string());
        kv("beta", self.beta.to_string());
        kv("sigma2", self.sigma2.to_string());
        kv("dc", self.dc.to_string());
        kv("nt_max", self.nt_max.to_string());
        kv("train_per_count", self.train_per_count.to_string());
        kv("test_per_count", self.test_per_count.to_string());
        kv("val_fraction", self.val_fraction.to_string());
        kv("hidden_layers", self.hidden_layers.to_string());
        kv("hidden_units", self.hidden_units.to_string());
        kv("loss_units", self.loss_units.as_str().to_string());
        kv("lr", t.learning_rate.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("l2", t.l2.to_string());
        kv("epochs", t.epochs.to_string());
        kv("adam_beta1", t.beta1.to_string());
        kv("adam_beta2", t.beta2.to_string());
        kv("adam_eps", t.epsilon.to_string());
        kv("reml_resolution", self.reml_resolution.to_string());
        kv("ps_max_iter", p.max_iter.to_string());
        kv("ps_movement_tol", p.movement_tol.to_string());
        kv("ps_power_tol", p.power_tol.to_string());
        kv("ps_step_gain", p.step_gain.to_string());
        kv("ps_init_radius", p.init_radius.to_string());
        kv("sweep_nt", self.sweep_nt.to_string());
        kv("sweep_train_per_count", self.sweep_train_per_count.to_string());
        kv("sweep_test_per_count", self.sweep_test_per_count.to_string());
        kv("sweep_density", self.sweep_density.to_string());
        kv("sweep_density_ns", join(&self.sweep_density_ns));
        kv("sweep_area_rho", join(&self.sweep_area_rho));
        kv("dump_first", self.dump_first.to_string());
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_text`] with the output
    /// directory left out, so relocating a run keeps its hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        Sha256::digest(c.to_text().as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Reference power `P0 = P_tx − FSPL(d0, f)`.
    pub fn propagation(&self) -> PropagationParams {
        PropagationParams {
            ref_power_db: self.tx_power_dbm - free_space_path_loss_db(self.d0, self.frequency_hz),
            ref_distance: self.d0,
            path_loss_exponent: self.beta,
            shadow_variance_db: self.sigma2,
            decorrelation_distance: self.dc,
        }
    }

    pub fn layout(&self) -> Result<SensorLayout> {
        grid_layout(self.ns, self.area).map_err(|e| LabError::config("ns", e.to_string()))
    }

    /// Layer widths of the count classifier.
    pub fn classifier_dims(&self) -> Vec<usize> {
        self.network_dims(self.ns, self.nt_max)
    }

    /// Layer widths of the regressor for `n_t` transmitters on `n_s` sensors.
    pub fn regressor_dims(&self, n_s: usize, n_t: usize) -> Vec<usize> {
        self.network_dims(n_s, 2 * n_t)
    }

    /// Input width, the hidden layers, then `outputs`.
    pub fn network_dims(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut d = vec![inputs];
        d.extend(std::iter::repeat_n(self.hidden_units, self.hidden_layers));
        d.push(outputs);
        d
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(LabError::config(key, msg)) };
        check(self.tx_power_dbm.is_finite(), "tx_power_dbm", "must be finite")?;
        check(self.frequency_hz > 0.0 && self.frequency_hz.is_finite(), "frequency_hz", "must be > 0")?;
        check(self.d0 > 0.0 && self.d0.is_finite(), "d0", "must be > 0")?;
        check(self.beta > 0.0 && self.beta.is_finite(), "beta", "must be > 0")?;
        check(self.sigma2 >= 0.0 && self.sigma2.is_finite(), "sigma2", "must be >= 0")?;
        check(self.dc > 0.0 && self.dc.is_finite(), "dc", "must be > 0")?;
        self.propagation().validate()?;
        self.layout()?;
        check(self.nt_max >= 1, "nt_max", "must be >= 1")?;
        check(self.val_fraction > 0.0 && self.val_fraction < 1.0, "val_fraction", "must be in (0, 1)")?;
        check(self.hidden_units >= 1, "hidden_units", "must be >= 1")?;
        check(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite(), "lr", "must be > 0")?;
        check(self.train.batch_size >= 1, "batch_size", "must be >= 1")?;
        check(self.train.l2 >= 0.0 && self.train.l2.is_finite(), "l2", "must be >= 0")?;
        check((0.0..1.0).contains(&self.train.beta1), "adam_beta1", "must be in [0, 1)")?;
        check((0.0..1.0).contains(&self.train.beta2), "adam_beta2", "must be in [0, 1)")?;
        check(self.train.epsilon > 0.0, "adam_eps", "must be > 0")?;
        check(self.reml_resolution > 0.0 && self.reml_resolution.is_finite(), "reml_resolution", "must be > 0")?;
        for (side, key) in [(self.area.width, "area"), (self.area.height, "area")] {
            let px = side / self.reml_resolution;
            check((px - px.round()).abs() < 1e-6, key, "area sides must be multiples of reml_resolution")?;
        }
        check(self.ps.movement_tol > 0.0, "ps_movement_tol", "must be > 0")?;
        check(self.ps.power_tol > 0.0, "ps_power_tol", "must be > 0")?;
        check(self.ps.step_gain > 0.0 && self.ps.step_gain.is_finite(), "ps_step_gain", "must be > 0")?;
        check(self.ps.init_radius >= 0.0 && self.ps.init_radius.is_finite(), "ps_init_radius", "must be >= 0")?;
        check((1..=self.nt_max).contains(&self.sweep_nt), "sweep_nt", "must be in 1..=nt_max")?;
        check(self.sweep_density > 0.0 && self.sweep_density.is_finite(), "sweep_density", "must be > 0")?;
        for &n in &self.sweep_density_ns {
            let r = (n as f64).sqrt().round() as usize;
            check(n >= 1 && r * r == n, "sweep_density_ns", "sensor counts must be perfect squares")?;
        }
        for &rho in &self.sweep_area_rho {
            let n = rho * self.area.size() / 100.0;
            let r = n.sqrt().round();
            check(
                rho > 0.0 && (r * r - n).abs() < 1e-9,
                "sweep_area_rho",
                "each density must give a perfect-square sensor count on the area",
            )?;
        }
        Ok(())
    }
}
