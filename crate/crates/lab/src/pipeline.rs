//! The experiment pipeline: generate, train, evaluate and sweep.
//!
//! The in-memory stages ([`generate`], [`train_models`], [`evaluate`],
//! [`sweep`]) are pure functions of the config and the seed schedule. The
//! `cmd_*` wrappers add the artifact files under the output directory:
//!
//! ```text
//! <out>/data/{train,test}.txt
//! <out>/models/{classifier,regressor_nt<k>}.txt
//! <out>/results/*.csv, rem_<i>.txt, ps_trajectory_<i>.csv
//! <out>/sweep/*.csv
//! ```

use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use mtl_core::datasets::{generate_dataset, split_train_val, Dataset, GenConfig, Normalizer, Sample};
use mtl_core::eval::{
    confusion, random_guess, rmse_matrix, sweep_points, ConfusionMatrix, ErrorSummary, SweepMode, SweepPoint,
};
use mtl_core::mlp::{predict_coordinates, predict_count, train, Head, Mlp, Model, TrainHistory};
use mtl_core::particlesim::{ps_run_traced, TrajectoryPoint};
use mtl_core::propagation::grid_layout;
use mtl_core::reml::{localize_multi, RadioMap, RemlLocalizer};
use mtl_core::{SeedSchedule, SensorLayout, TransmitterSet};

use crate::config::{ExperimentConfig, LossUnits};
use crate::error::{LabError, Result};
use crate::formats::{self, Stamp};
use crate::report;

/// Localization methods that appear in the reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Regressor for the true transmitter count.
    Dl,
    /// Classifier picks the count, then the matching regressor runs.
    DlTwoStage,
    Reml,
    Ps,
    Rg,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Dl, Method::DlTwoStage, Method::Reml, Method::Ps, Method::Rg];
    /// Methods run at every sweep point.
    pub const SWEEP: [Method; 4] = [Method::Dl, Method::Reml, Method::Ps, Method::Rg];

    pub fn label(self) -> &'static str {
        match self {
            Method::Dl => "dl",
            Method::DlTwoStage => "dl-2stage",
            Method::Reml => "reml",
            Method::Ps => "ps",
            Method::Rg => "rg",
        }
    }
}

/// Which algorithm families a command runs (`--algo`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgoSet {
    pub dl: bool,
    pub reml: bool,
    pub ps: bool,
    pub rg: bool,
}

impl AlgoSet {
    pub const ALL: AlgoSet = AlgoSet { dl: true, reml: true, ps: true, rg: true };

    pub fn runs(&self, m: Method) -> bool {
        match m {
            Method::Dl | Method::DlTwoStage => self.dl,
            Method::Reml => self.reml,
            Method::Ps => self.ps,
            Method::Rg => self.rg,
        }
    }
}

impl FromStr for AlgoSet {
    type Err = LabError;

    /// `all`, or a comma-separated subset of `dl`, `reml`, `ps`, `rg`.
    fn from_str(s: &str) -> Result<Self> {
        let mut set = AlgoSet { dl: false, reml: false, ps: false, rg: false };
        for part in s.split(',').map(str::trim) {
            match part {
                "all" => set = AlgoSet::ALL,
                "dl" => set.dl = true,
                "reml" => set.reml = true,
                "ps" => set.ps = true,
                "rg" => set.rg = true,
                _ => {
                    return Err(LabError::Usage(format!(
                        "unknown algorithm `{part}` (expected dl, reml, ps, rg or all)"
                    )))
                }
            }
        }
        Ok(set)
    }
}

/// Train and test sets on the configured deployment.
pub fn generate(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let layout = cfg.layout()?;
    let params = cfg.propagation();
    let seeds = SeedSchedule::new(cfg.seed);
    let set = |name: &str, per_count| {
        let gen = GenConfig { samples_per_count: per_count, max_tx_count: cfg.nt_max };
        generate_dataset(&layout, &params, &gen, &seeds, name)
    };
    Ok((set("dataset-train", cfg.train_per_count)?, set("dataset-test", cfg.test_per_count)?))
}

/// Trained DL models. The classifier is only needed for the two-stage
/// variant, the confusion matrix and the RMSE matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DlModels {
    pub classifier: Option<Model>,
    /// `(n_t, regressor for n_t transmitters)`.
    pub regressors: Vec<(usize, Model)>,
}

impl DlModels {
    pub fn regressor(&self, n_t: usize) -> Result<&Model> {
        self.regressors
            .iter()
            .find(|(k, _)| *k == n_t)
            .map(|(_, m)| m)
            .ok_or_else(|| LabError::Usage(format!("no regressor trained for {n_t} transmitters")))
    }

    pub fn localize_known(&self, rss: &[f64], n_t: usize) -> Result<TransmitterSet> {
        Ok(predict_coordinates(self.regressor(n_t)?, rss, n_t)?)
    }

    fn max_count(&self) -> usize {
        self.regressors.iter().map(|(k, _)| *k).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub models: DlModels,
    /// Classifier first, then the regressors by count.
    pub histories: Vec<TrainHistory>,
}

/// One model of a training job; index 0 is the classifier, `k ≥ 1` the
/// regressor for `k` transmitters.
fn fit_model(
    cfg: &ExperimentConfig,
    seeds: &SeedSchedule,
    index: usize,
    classes: usize,
    norm: &Normalizer,
    fit: &[Sample],
    val: &[Sample],
) -> Result<(Model, TrainHistory)> {
    let n_s = norm.feature_len();
    let (dims, head) = if index == 0 {
        (cfg.network_dims(n_s, classes), Head::Softmax)
    } else {
        (cfg.regressor_dims(n_s, index), Head::Linear)
    };
    let data = |samples: &[Sample]| {
        if index == 0 {
            Model::classification_data(norm, samples)
        } else {
            let mut d = Model::regression_data(norm, samples);
            if cfg.loss_units == LossUnits::Normalized {
                d.output_weights.clear();
            }
            d
        }
    };
    let mut net = Mlp::init_xavier(&dims, head, &mut seeds.stream("model-init", index as u64))?;
    let config = mtl_core::mlp::TrainConfig { seed: seeds.seed("model-shuffle", index as u64), ..cfg.train };
    let history = train(&mut net, &data(fit), &data(val), &config)?;
    Ok((Model { net, norm: norm.clone() }, history))
}

fn split(cfg: &ExperimentConfig, seeds: &SeedSchedule, ds: &Dataset) -> Result<(Dataset, Dataset)> {
    Ok(split_train_val(ds, 1.0 - cfg.val_fraction, &mut seeds.stream("split", 0))?)
}

/// Classifier plus one regressor per transmitter count, trained in parallel.
pub fn train_models(cfg: &ExperimentConfig, train_set: &Dataset) -> Result<TrainedModels> {
    let seeds = SeedSchedule::new(cfg.seed);
    let max = train_set.max_tx_count();
    if max == 0 {
        return Err(LabError::config("train_per_count", "the training set is empty"));
    }
    let (fit, val) = split(cfg, &seeds, train_set)?;
    let norm = Normalizer::fit(&fit.samples, train_set.layout.area())?;
    let jobs: Vec<(Model, TrainHistory)> = (0..=max)
        .into_par_iter()
        .map(|k| {
            let pick = |d: &Dataset| if k == 0 { d.samples.clone() } else { d.with_tx_count(k).samples };
            fit_model(cfg, &seeds, k, max, &norm, &pick(&fit), &pick(&val))
        })
        .collect::<Result<_>>()?;
    let mut jobs = jobs.into_iter();
    let (classifier, h0) = jobs.next().expect("classifier job");
    let mut histories = vec![h0];
    let mut regressors = Vec::with_capacity(max);
    for (k, (m, h)) in jobs.enumerate() {
        regressors.push((k + 1, m));
        histories.push(h);
    }
    Ok(TrainedModels { models: DlModels { classifier: Some(classifier), regressors }, histories })
}

/// Error statistics of one method on test samples with `n_t` transmitters.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub method: Method,
    pub n_t: usize,
    pub summary: ErrorSummary,
}

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub curves: Vec<Curve>,
    pub confusion: Option<ConfusionMatrix>,
    pub rmse_matrix: Option<Vec<Vec<f64>>>,
    /// REM of the first `dump_first` test samples.
    pub rems: Vec<(usize, RadioMap)>,
    /// Particle trajectories of the first `dump_first` test samples.
    pub trajectories: Vec<(usize, Vec<TrajectoryPoint>)>,
    /// Total PLM evaluations spent by PS.
    pub plm_evaluations: u64,
}

impl Evaluation {
    pub fn summary(&self, method: Method, n_t: usize) -> Option<&ErrorSummary> {
        self.curves.iter().find(|c| c.method == method && c.n_t == n_t).map(|c| &c.summary)
    }
}

#[derive(Default)]
struct Outcome {
    estimates: Vec<(Method, TransmitterSet)>,
    predicted_count: Option<usize>,
    rem: Option<RadioMap>,
    trajectory: Option<Vec<TrajectoryPoint>>,
    plm: u64,
}

struct EvalContext<'a> {
    layout: &'a SensorLayout,
    ds: &'a Dataset,
    models: Option<&'a DlModels>,
    reml: Option<RemlLocalizer>,
    cfg: &'a ExperimentConfig,
    seeds: SeedSchedule,
    algos: AlgoSet,
}

impl EvalContext<'_> {
    fn run(&self, idx: usize, s: &Sample) -> Result<Outcome> {
        let n_t = s.tx_count();
        let dump = idx < self.cfg.dump_first;
        let mut out = Outcome::default();
        if let Some(m) = self.models.filter(|_| self.algos.dl) {
            out.estimates.push((Method::Dl, m.localize_known(&s.rss, n_t)?));
            if let Some(c) = &m.classifier {
                let k = predict_count(c, &s.rss)?.0.min(m.max_count());
                out.predicted_count = Some(k);
                out.estimates.push((Method::DlTwoStage, m.localize_known(&s.rss, k)?));
            }
        }
        if let Some(loc) = &self.reml {
            let map = loc.map(self.layout, &s.rss)?;
            let est = if n_t == 1 {
                TransmitterSet::new(vec![map.argmax_pixel()])
            } else {
                localize_multi(&map, loc.min_region)
            };
            out.estimates.push((Method::Reml, est));
            if dump {
                out.rem = Some(map);
            }
        }
        if self.algos.ps {
            let mut rng = self.seeds.stream("ps-init", idx as u64);
            let mut trace = Vec::new();
            let (est, diag) = ps_run_traced(
                &s.rss,
                self.layout,
                n_t,
                &self.ds.params,
                &self.cfg.ps,
                &mut rng,
                dump.then_some(&mut trace),
            )?;
            out.plm = diag.plm_evaluations;
            out.estimates.push((Method::Ps, est));
            if dump {
                out.trajectory = Some(trace);
            }
        }
        if self.algos.rg {
            let mut rng = self.seeds.stream("rg", idx as u64);
            out.estimates.push((Method::Rg, random_guess(self.layout.area(), n_t, &mut rng)));
        }
        Ok(out)
    }
}

/// Runs the selected methods on every test sample in parallel and merges the
/// outcomes in sample order. DL methods need `models`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    seeds: SeedSchedule,
    test: &Dataset,
    models: Option<&DlModels>,
    algos: AlgoSet,
) -> Result<Evaluation> {
    if algos.dl && models.is_none() {
        return Err(LabError::Usage("DL evaluation needs trained models".into()));
    }
    test.validate()?;
    let reml = if algos.reml { Some(RemlLocalizer::from_channel(&test.params, cfg.reml_resolution)?) } else { None };
    let ctx = EvalContext { layout: &test.layout, ds: test, models, reml, cfg, seeds, algos };
    let outcomes: Vec<Outcome> =
        test.samples.par_iter().enumerate().map(|(i, s)| ctx.run(i, s)).collect::<Result<_>>()?;

    let max = test.max_tx_count();
    let mut eval = Evaluation::default();
    let two_stage = models.is_some_and(|m| m.classifier.is_some());
    let methods = Method::ALL.into_iter().filter(|m| algos.runs(*m) && (*m != Method::DlTwoStage || two_stage));
    for method in methods {
        for n_t in 1..=max {
            let mut summary = ErrorSummary::default();
            for (s, o) in test.samples.iter().zip(&outcomes).filter(|(s, _)| s.tx_count() == n_t) {
                if let Some((_, est)) = o.estimates.iter().find(|(m, _)| *m == method) {
                    summary.push(&s.transmitters(), est);
                }
            }
            eval.curves.push(Curve { method, n_t, summary });
        }
    }
    if let Some((m, c)) = models.filter(|_| algos.dl).and_then(|m| Some((m, m.classifier.as_ref()?))) {
        let classes = c.net.output_len();
        let predicted: Vec<usize> = outcomes.iter().map(|o| o.predicted_count.unwrap_or(1)).collect();
        let truth: Vec<usize> = test.samples.iter().map(Sample::tx_count).collect();
        eval.confusion = Some(confusion(&predicted, &truth, classes.max(max))?);
        let by_count: Vec<Vec<Sample>> = (1..=max).map(|k| test.with_tx_count(k).samples).collect();
        let regs: Vec<&Model> = (1..=m.max_count()).map(|n| m.regressor(n)).collect::<Result<_>>()?;
        eval.rmse_matrix =
            Some(rmse_matrix(regs.len(), &by_count, |n, s| predict_coordinates(regs[n - 1], &s.rss, n))?);
    }
    for (i, o) in outcomes.into_iter().enumerate() {
        eval.plm_evaluations += o.plm;
        if let Some(r) = o.rem {
            eval.rems.push((i, r));
        }
        if let Some(t) = o.trajectory {
            eval.trajectories.push((i, t));
        }
    }
    Ok(eval)
}

/// One sweep configuration and the error statistics of every method run.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub mode: SweepMode,
    pub point: SweepPoint,
    pub summaries: Vec<(Method, ErrorSummary)>,
}

impl SweepRow {
    pub fn summary(&self, method: Method) -> Option<&ErrorSummary> {
        self.summaries.iter().find(|(m, _)| *m == method).map(|(_, s)| s)
    }
}

/// Sweep configurations in output order, each with its index within its
/// mode.
pub fn sweep_plan(cfg: &ExperimentConfig) -> Result<Vec<(SweepMode, usize, SweepPoint)>> {
    let grid: Vec<f64> = cfg.sweep_density_ns.iter().map(|&n| n as f64).collect();
    let dens = sweep_points(SweepMode::ConstantDensity, &grid, cfg.sweep_density, cfg.area)
        .map_err(|e| LabError::config("sweep_density_ns", e.to_string()))?;
    let area = sweep_points(SweepMode::ConstantArea, &cfg.sweep_area_rho, cfg.sweep_density, cfg.area)
        .map_err(|e| LabError::config("sweep_area_rho", e.to_string()))?;
    let tag = |mode| move |(i, p)| (mode, i, p);
    Ok(dens
        .into_iter()
        .enumerate()
        .map(tag(SweepMode::ConstantDensity))
        .chain(area.into_iter().enumerate().map(tag(SweepMode::ConstantArea)))
        .collect())
}

/// Seed schedule of the `index`-th point of a sweep mode.
pub fn sweep_seeds(base: SeedSchedule, mode: SweepMode, index: usize) -> SeedSchedule {
    let name = match mode {
        SweepMode::ConstantDensity => "sweep-density",
        SweepMode::ConstantArea => "sweep-area",
    };
    base.child(name, index as u64)
}

/// Fresh data, a fresh regressor and a full evaluation for one sweep point,
/// all drawn from the point's own seed schedule.
pub fn sweep_point(
    cfg: &ExperimentConfig,
    mode: SweepMode,
    point: SweepPoint,
    seeds: SeedSchedule,
    algos: AlgoSet,
) -> Result<SweepRow> {
    let cfg = &ExperimentConfig { dump_first: 0, ..cfg.clone() };
    let layout = grid_layout(point.n_s, point.area)?;
    let params = cfg.propagation();
    let n_t = cfg.sweep_nt;
    let set = |name: &str, per_count| -> Result<Dataset> {
        let gen = GenConfig { samples_per_count: per_count, max_tx_count: n_t };
        Ok(generate_dataset(&layout, &params, &gen, &seeds, name)?.with_tx_count(n_t))
    };
    let test = set("dataset-test", cfg.sweep_test_per_count)?;
    let models = if algos.dl {
        let train_set = set("dataset-train", cfg.sweep_train_per_count)?;
        let (fit, val) = split(cfg, &seeds, &train_set)?;
        let norm = Normalizer::fit(&fit.samples, point.area)?;
        let (reg, _) = fit_model(cfg, &seeds, n_t, n_t, &norm, &fit.samples, &val.samples)?;
        Some(DlModels { classifier: None, regressors: vec![(n_t, reg)] })
    } else {
        None
    };
    let eval = evaluate(cfg, seeds, &test, models.as_ref(), algos)?;
    let summaries = Method::SWEEP.into_iter().filter_map(|m| eval.summary(m, n_t).map(|s| (m, s.clone()))).collect();
    Ok(SweepRow { mode, point, summaries })
}

/// Both density studies, points in parallel.
pub fn sweep(cfg: &ExperimentConfig, algos: AlgoSet) -> Result<Vec<SweepRow>> {
    let base = SeedSchedule::new(cfg.seed);
    sweep_plan(cfg)?
        .into_par_iter()
        .map(|(mode, i, point)| sweep_point(cfg, mode, point, sweep_seeds(base, mode, i), algos))
        .collect()
}

/// Options shared by the subcommands.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub algos: AlgoSet,
}

fn stamp(cfg: &ExperimentConfig) -> Stamp {
    Stamp { config_hash: cfg.hash(), seed: cfg.seed }
}

fn data_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.out.join("data").join(format!("{name}.txt"))
}

fn classifier_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("models").join("classifier.txt")
}

fn regressor_path(cfg: &ExperimentConfig, n_t: usize) -> PathBuf {
    cfg.out.join("models").join(format!("regressor_nt{n_t}.txt"))
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Self {
        Self { dir, written: Vec::new() }
    }

    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        formats::write_text(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

/// Writes `data/train.txt` and `data/test.txt`.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let (train_set, test_set) = generate(cfg)?;
    let st = stamp(cfg);
    let mut w = Writer::new(cfg.out.join("data"));
    w.put("train.txt", &formats::dataset_to_text(&train_set, &st))?;
    w.put("test.txt", &formats::dataset_to_text(&test_set, &st))?;
    Ok(w.written)
}

/// Trains the classifier and the regressors from `data/train.txt`. Only the
/// DL family has trainable parameters, so other `--algo` choices write
/// nothing.
pub fn cmd_train(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    if !opts.algos.dl {
        return Ok(Vec::new());
    }
    let train_set = formats::read_dataset(&data_path(cfg, "train"))?;
    let models = train_models(cfg, &train_set)?;
    let st = stamp(cfg);
    let mut written = Vec::new();
    let mut put = |path: PathBuf, model: &Model| -> Result<()> {
        formats::write_model(&path, model, &st)?;
        written.push(path);
        Ok(())
    };
    if let Some(c) = &models.models.classifier {
        put(classifier_path(cfg), c)?;
    }
    for (k, reg) in &models.models.regressors {
        put(regressor_path(cfg, *k), reg)?;
    }
    let mut w = Writer::new(cfg.out.join("models"));
    let mut hist = format!("{}\nmodel,epoch,train_loss,val_loss\n", st.line());
    for (i, h) in models.histories.iter().enumerate() {
        let name = if i == 0 { "classifier".to_string() } else { format!("regressor_nt{i}") };
        for (e, (t, v)) in h.train_loss.iter().zip(&h.val_loss).enumerate() {
            hist.push_str(&format!("{name},{},{t},{v}\n", e + 1));
        }
    }
    w.put("training_history.csv", &hist)?;
    written.extend(w.written);
    Ok(written)
}

fn load_models(cfg: &ExperimentConfig, max: usize) -> Result<DlModels> {
    let classifier = Some(formats::read_model(&classifier_path(cfg))?);
    let regressors =
        (1..=max).map(|k| Ok((k, formats::read_model(&regressor_path(cfg, k))?))).collect::<Result<_>>()?;
    Ok(DlModels { classifier, regressors })
}

/// Evaluates the selected methods on `data/test.txt` and writes the reports
/// to `results/`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let test = formats::read_dataset(&data_path(cfg, "test"))?;
    let models = if opts.algos.dl { Some(load_models(cfg, test.max_tx_count())?) } else { None };
    let eval = evaluate(cfg, SeedSchedule::new(cfg.seed), &test, models.as_ref(), opts.algos)?;
    write_evaluation(cfg, &eval)
}

pub fn write_evaluation(cfg: &ExperimentConfig, eval: &Evaluation) -> Result<Vec<PathBuf>> {
    let st = stamp(cfg);
    let mut w = Writer::new(cfg.out.join("results"));
    for c in &eval.curves {
        w.put(&format!("cdf_{}_nt{}.csv", c.method.label(), c.n_t), &report::cdf_csv(&c.summary, &st))?;
    }
    if let Some(cm) = &eval.confusion {
        w.put("confusion.csv", &report::confusion_csv(cm, &st))?;
        w.put("classification.csv", &report::classification_csv(cm, &st))?;
    }
    if let Some(m) = &eval.rmse_matrix {
        w.put("rmse_matrix.csv", &report::rmse_matrix_csv(m, &st))?;
    }
    w.put("summary.csv", &report::summary_csv(eval, &st))?;
    for (i, rem) in &eval.rems {
        w.put(&format!("rem_{i}.txt"), &formats::rem_to_text(rem, &st))?;
    }
    for (i, t) in &eval.trajectories {
        w.put(&format!("ps_trajectory_{i}.csv"), &formats::trajectory_to_csv(t, &st))?;
    }
    Ok(w.written)
}

/// Runs both density studies and writes `sweep/density_sweep.csv` plus one
/// CDF per point and method.
pub fn cmd_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let rows = sweep(cfg, opts.algos)?;
    write_sweep(cfg, &rows)
}

pub fn write_sweep(cfg: &ExperimentConfig, rows: &[SweepRow]) -> Result<Vec<PathBuf>> {
    let st = stamp(cfg);
    let mut w = Writer::new(cfg.out.join("sweep"));
    w.put("density_sweep.csv", &report::density_sweep_csv(rows, &st))?;
    for r in rows {
        for (m, s) in &r.summaries {
            let name = format!("sweep_cdf_{}_ns{}_{}.csv", report::mode_label(r.mode), r.point.n_s, m.label());
            w.put(&name, &report::cdf_csv(s, &st))?;
        }
    }
    Ok(w.written)
}
