//! Experiment orchestration: sweeps, presets, result files and predictor training.
//!
//! A sweep runs the base configuration at every combination of mMTC
//! population, ACB policy and slicer. The URLLC population and the URLLC
//! channel reservation can be tied to the mMTC population by declarative
//! coupling rules, so each preset is plain configuration data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::access::AcbPolicy;
use crate::engine::{
    realization_rng, FrameResult, Predictor, PredictorKind, SimulationConfig, Simulator, SlicerKind,
};
use crate::metrics::{predictor_mse, Aggregate, FrameMetrics, MetricSeries};
use crate::predictor::{
    denormalize, lstm_train, naive_estimate, BacklogModels, LstmModel, Observation, TrainOptions,
    TrainReport, TrainingSample, INPUT_SIZE,
};
use crate::{Error, Result, UseMode};

const FIG3: &str = r#"
name = "fig3"
acb = "gf"
predictor = "perfect"
frames = 1000
realizations = 100

[sweep]
k_m = { start = 100, stop = 1000, step = 100 }
k_u_divisor = 40
slicer = ["maxrect", "fixed:5"]
"#;

const FIG4: &str = r#"
name = "fig4"
predictor = "perfect"
frames = 1000
realizations = 100

[sweep]
k_m = { start = 1000, stop = 30000, step = 1000 }
k_u_divisor = 40
pool_total = 54
l_u_ramp = [4, 34]
acb = ["gf", "static:0.2", "static:0.4", "static:0.6", "opt-inv"]
"#;

const FIG5: &str = r#"
name = "fig5"
acb = "opt-inv"
predictor = "perfect"
slicer = "maxrect"
frames = 1000
realizations = 100

[sweep]
k_m = { start = 4000, stop = 80000, step = 4000 }
k_u_divisor = 400
"#;

pub const PRESETS: [&str; 3] = ["fig3", "fig4", "fig5"];

/// TOML source of a named preset.
pub fn preset_text(name: &str) -> Result<&'static str> {
    match name {
        "fig3" => Ok(FIG3),
        "fig4" => Ok(FIG4),
        "fig5" => Ok(FIG5),
        other => Err(Error::config(
            "preset",
            format!("unknown preset `{other}` (expected one of {})", PRESETS.join(", ")),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Axis {
    List(Vec<u64>),
    Range { start: u64, stop: u64, step: u64 },
}

impl Axis {
    fn values(&self) -> Result<Vec<u64>> {
        match self {
            Axis::List(v) => Ok(v.clone()),
            Axis::Range { start, stop, step } => {
                if *step == 0 {
                    return Err(Error::config("sweep.k_m.step", "must be positive"));
                }
                Ok((*start..=*stop).step_by(*step as usize).collect())
            }
        }
    }
}

fn axis_values<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<u64>, D::Error> {
    Axis::deserialize(d)?.values().map_err(serde::de::Error::custom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// mMTC populations, as a list or `{ start, stop, step }` (inclusive).
    #[serde(deserialize_with = "axis_values")]
    pub k_m: Vec<u64>,
    /// When set, the URLLC population is `round(k_m / k_u_divisor)`.
    #[serde(default)]
    pub k_u_divisor: Option<f64>,
    /// Total channels of a pool slicer whose URLLC share follows `l_u_ramp`.
    #[serde(default)]
    pub pool_total: Option<usize>,
    /// URLLC channels at the first and last `k_m`, interpolated linearly.
    #[serde(default)]
    pub l_u_ramp: Option<[usize; 2]>,
    #[serde(default)]
    pub acb: Vec<AcbPolicy>,
    #[serde(default)]
    pub slicer: Vec<SlicerKind>,
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if self.k_m.is_empty() {
            return Err(Error::config("sweep.k_m", "must not be empty"));
        }
        if let Some(d) = self.k_u_divisor {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::config("sweep.k_u_divisor", "must be positive"));
            }
        }
        match (self.pool_total, self.l_u_ramp) {
            (Some(total), Some([a, b])) => {
                if a > total || b > total {
                    return Err(Error::config("sweep.l_u_ramp", "must not exceed pool_total"));
                }
                if !self.slicer.is_empty() {
                    return Err(Error::config("sweep.slicer", "cannot be combined with l_u_ramp"));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::config(
                    "sweep.l_u_ramp",
                    "pool_total and l_u_ramp must be given together",
                ))
            }
        }
        for p in &self.acb {
            p.validate()?;
        }
        Ok(())
    }

    /// URLLC channels of the ramp at sweep position `i`.
    fn ramp(&self, i: usize) -> Option<usize> {
        let [a, b] = self.l_u_ramp?;
        let n = self.k_m.len();
        if n == 1 {
            return Some(a);
        }
        let x = a as f64 + (b as f64 - a as f64) * i as f64 / (n - 1) as f64;
        Some(x.round() as usize)
    }
}

/// Settings of the offline predictor training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub samples: usize,
    pub validation_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub clip_norm: f64,
    /// Frames per generated trace.
    pub trace_frames: u64,
    /// Channel layout used while collecting traces.
    pub slicer: SlicerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            validation_samples: 250,
            epochs: 100,
            learning_rate: 1e-2,
            batch_size: 1,
            hidden: 20,
            layers: 1,
            clip_norm: 1.0,
            trace_frames: 200,
            slicer: SlicerKind::Pool { l_u: 5, l_m: 49 },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("train.samples", "must be at least 1"));
        }
        if self.validation_samples == 0 {
            return Err(Error::config("train.validation_samples", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.hidden == 0 || self.layers == 0 {
            return Err(Error::config("train.hidden", "hidden size and layers must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::config("train.learning_rate", "step size and clip norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub base: SimulationConfig,
    pub sweep: Option<Sweep>,
    pub train: TrainConfig,
    /// Share of final frames averaged in the summary.
    pub steady_fraction: f64,
}

impl Scenario {
    pub fn single(name: &str, base: SimulationConfig) -> Self {
        Self {
            name: name.to_string(),
            base,
            sweep: None,
            train: TrainConfig::default(),
            steady_fraction: crate::metrics::STEADY_STATE_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.train.validate()?;
        if !(self.steady_fraction > 0.0 && self.steady_fraction <= 1.0) {
            return Err(Error::config("steady_fraction", "must be in (0, 1]"));
        }
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        for p in self.points()? {
            p.config.validate()?;
        }
        Ok(())
    }

    /// Expand the sweep into concrete configurations, ordered by policy,
    /// then slicer, then population.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![SweepPoint {
                index: 0,
                label: "base".into(),
                config: self.base.clone(),
            }]);
        };
        let policies = if sweep.acb.is_empty() {
            vec![self.base.acb]
        } else {
            sweep.acb.clone()
        };
        let slicers = if sweep.slicer.is_empty() {
            vec![self.base.slicer]
        } else {
            sweep.slicer.clone()
        };
        let mut out = Vec::new();
        for &acb in &policies {
            for &slicer in &slicers {
                for (i, &k_m) in sweep.k_m.iter().enumerate() {
                    let mut c = self.base.clone();
                    c.acb = acb;
                    c.slicer = slicer;
                    c.traffic.k_m = k_m;
                    if let Some(d) = sweep.k_u_divisor {
                        c.traffic.k_u = (k_m as f64 / d).round() as u64;
                    }
                    c.traffic.k_m_periodic = c.traffic.k_m_periodic.min(k_m);
                    if let (Some(total), Some(l_u)) = (sweep.pool_total, sweep.ramp(i)) {
                        c.slicer = SlicerKind::Pool {
                            l_u,
                            l_m: total - l_u,
                        };
                    }
                    let label = format!("{}_{}_km{}", c.acb, c.slicer, k_m)
                        .replace(':', "-");
                    out.push(SweepPoint {
                        index: out.len(),
                        label,
                        config: c,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Hex SHA-256 of the canonical JSON form of the scenario.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub label: String,
    pub config: SimulationConfig,
}

impl SweepPoint {
    pub fn file_name(&self) -> String {
        format!("{:03}_{}.csv", self.index, self.label)
    }
}

/// Header of the per-frame CSV files.
pub const FRAME_CSV_HEADER: &str =
    "frame,eta,cl_u,cl_m,served_u,served_m,backlog_u,backlog_m,L_u,L_m,collisions_u,collisions_m";

/// Metrics reported in the summary, as `(column, accessor)`.
type MetricColumn = (&'static str, fn(&FrameMetrics) -> f64);

const SUMMARY_METRICS: [MetricColumn; 12] = [
    ("eta", |m| m.eta),
    ("eta_u", |m| m.eta_u),
    ("cl_u", |m| m.cl_u),
    ("cl_m", |m| m.cl_m),
    ("served_u", |m| m.served_u),
    ("served_m", |m| m.served_m),
    ("backlog_u", |m| m.backlog_u),
    ("backlog_m", |m| m.backlog_m),
    ("L_u", |m| m.l_u),
    ("L_m", |m| m.l_m),
    ("collisions_u", |m| m.collisions_u),
    ("collisions_m", |m| m.collisions_m),
];

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

/// Per-frame means across realizations in CSV form.
pub fn frames_csv(series: &MetricSeries) -> String {
    let mut out = String::from(FRAME_CSV_HEADER);
    out.push('\n');
    for (t, agg) in series.per_frame().iter().enumerate() {
        let m = &agg.mean;
        let cols = [
            m.eta,
            m.cl_u,
            m.cl_m,
            m.served_u,
            m.served_m,
            m.backlog_u,
            m.backlog_m,
            m.l_u,
            m.l_m,
            m.collisions_u,
            m.collisions_m,
        ];
        let _ = write!(out, "{t}");
        for c in cols {
            let _ = write!(out, ",{}", num(c));
        }
        out.push('\n');
    }
    out
}

pub fn summary_header() -> String {
    let mut h = String::from("point,label,k_m,k_u,acb,slicer,predictor,frames,realizations,steady_from");
    for (name, _) in SUMMARY_METRICS {
        let _ = write!(h, ",{name},{name}_se");
    }
    h
}

fn summary_row(point: &SweepPoint, steady_from: usize, agg: &Aggregate) -> String {
    let c = &point.config;
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        point.index,
        point.label,
        c.traffic.k_m,
        c.traffic.k_u,
        c.acb,
        c.slicer,
        c.predictor,
        c.frames,
        c.realizations,
        steady_from
    );
    for (_, get) in SUMMARY_METRICS {
        let _ = write!(row, ",{},{}", num(get(&agg.mean)), num(get(&agg.se)));
    }
    row
}

/// Outcome of one sweep point.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub point: SweepPoint,
    pub series: MetricSeries,
    pub steady: Aggregate,
    pub steady_from: usize,
}

/// Run every sweep point; realizations run in parallel, results stay ordered.
pub fn execute(scenario: &Scenario) -> Result<Vec<PointResult>> {
    scenario.validate()?;
    let points = scenario.points()?;
    // models are read once and shared by every point
    let predictor = Predictor::load(&scenario.base.predictor)?;
    points
        .into_par_iter()
        .map(|point| {
            let sim = Simulator::with_predictor(point.config.clone(), predictor.clone())?;
            let series = sim.monte_carlo()?;
            let steady = series.steady_state(scenario.steady_fraction);
            let steady_from = series.steady_start(scenario.steady_fraction);
            Ok(PointResult {
                point,
                series,
                steady,
                steady_from,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    version: &'a str,
    config_hash: String,
    seed: u64,
    frames: u64,
    realizations: u64,
    steady_fraction: f64,
    scenario: &'a Scenario,
    points: Vec<ManifestPoint>,
}

#[derive(Serialize)]
struct ManifestPoint {
    index: usize,
    label: String,
    file: String,
    config_hash: String,
}

/// Apply command-line overrides to every point of the scenario.
pub fn override_run(scenario: &mut Scenario, seed: Option<u64>, realizations: Option<u64>) {
    if let Some(s) = seed {
        scenario.base.seed = s;
    }
    if let Some(r) = realizations {
        scenario.base.realizations = r;
    }
}

/// Execute a scenario and write `summary.csv`, `manifest.json` and one
/// per-frame CSV per sweep point under `frames/` in `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PointResult>> {
    let results = execute(scenario)?;
    let frames_dir = out_dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut summary = summary_header();
    summary.push('\n');
    let mut points = Vec::with_capacity(results.len());
    for r in &results {
        let file = r.point.file_name();
        write_file(&frames_dir.join(&file), &frames_csv(&r.series))?;
        summary.push_str(&summary_row(&r.point, r.steady_from, &r.steady));
        summary.push('\n');
        let json = serde_json::to_string(&r.point.config).expect("config serializes");
        points.push(ManifestPoint {
            index: r.point.index,
            label: r.point.label.clone(),
            file: format!("frames/{file}"),
            config_hash: hex::encode(Sha256::digest(json.as_bytes())),
        });
    }
    write_file(&out_dir.join("summary.csv"), &summary)?;
    let manifest = Manifest {
        name: &scenario.name,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: scenario.config_hash(),
        seed: scenario.base.seed,
        frames: scenario.base.frames,
        realizations: scenario.base.realizations,
        steady_fraction: scenario.steady_fraction,
        scenario,
        points,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out_dir.join("manifest.json"), &(json + "\n"))?;
    Ok(results)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// One labelled frame of a grant-free trace.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindow {
    /// Observations up to and including the current frame, oldest first.
    pub window: Vec<Observation>,
    /// Backlog of the following frame.
    pub next_u: u64,
    pub next_m: u64,
}

impl LabeledWindow {
    pub fn sample(&self, mode: UseMode, population: u64) -> TrainingSample {
        let window: Vec<[f64; INPUT_SIZE]> =
            self.window.iter().map(|o| o.triplet(mode).normalized()).collect();
        let next = match mode {
            UseMode::Urllc => self.next_u,
            UseMode::Mmtc => self.next_m,
        };
        TrainingSample {
            window,
            target: next as f64 / population.max(1) as f64,
        }
    }

    pub fn truth(&self, mode: UseMode) -> u64 {
        match mode {
            UseMode::Urllc => self.next_u,
            UseMode::Mmtc => self.next_m,
        }
    }
}

/// Collect `count` labelled windows from grant-free traces.
///
/// Traces use realization streams `first_stream, first_stream + 1, ...` of the
/// configured seed; only frames with a full observation window are kept.
pub fn collect_traces(
    cfg: &SimulationConfig,
    train: &TrainConfig,
    count: usize,
    first_stream: u64,
) -> Result<Vec<LabeledWindow>> {
    if count == 0 {
        return Err(Error::config("train.samples", "must be at least 1"));
    }
    let mut trace_cfg = cfg.clone();
    trace_cfg.acb = AcbPolicy::GrantFree;
    trace_cfg.slicer = train.slicer;
    trace_cfg.predictor = PredictorKind::Perfect;
    trace_cfg.frames = train.trace_frames;
    let w = cfg.window;
    if train.trace_frames < w as u64 {
        return Err(Error::config("train.trace_frames", "must be at least the window length"));
    }
    let sim = Simulator::new(trace_cfg)?;
    let mut out = Vec::with_capacity(count);
    let mut stream = first_stream;
    while out.len() < count {
        let mut rng = realization_rng(cfg.seed, stream);
        let frames: Vec<FrameResult> = sim.run(&mut rng)?;
        for t in (w - 1)..frames.len() {
            if out.len() == count {
                break;
            }
            out.push(LabeledWindow {
                window: frames[t + 1 - w..=t].iter().map(|f| f.observation).collect(),
                next_u: frames[t].backlog_after.active_u,
                next_m: frames[t].backlog_after.active_m,
            });
        }
        stream += 1;
    }
    Ok(out)
}

/// Realization stream where validation traces start, far from training streams.
pub const VALIDATION_STREAM: u64 = 1 << 40;

/// Normalized MSE of trained models and of the idle-fraction baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeScores {
    pub train_mse: f64,
    pub validation_mse: f64,
    pub naive_validation_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub models: BacklogModels,
    pub reports: [TrainReport; 2],
    /// URLLC then mMTC.
    pub scores: [ModeScores; 2],
}

/// Normalized MSE of `model` on labelled windows, after rounding to counts.
pub fn model_mse(model: &LstmModel, data: &[LabeledWindow], mode: UseMode, population: u64) -> Result<f64> {
    let mut preds = Vec::with_capacity(data.len());
    let mut truths = Vec::with_capacity(data.len());
    for d in data {
        let y = model.predict_normalized(&d.sample(mode, population).window)?;
        preds.push(denormalize(y, population));
        truths.push(d.truth(mode));
    }
    predictor_mse(&preds, &truths, population)
}

/// Normalized MSE of the idle-fraction baseline on the same windows.
pub fn naive_mse(data: &[LabeledWindow], mode: UseMode, population: u64) -> Result<f64> {
    let mut preds = Vec::with_capacity(data.len());
    let mut truths = Vec::with_capacity(data.len());
    for d in data {
        let last = d.window.last().ok_or(Error::Empty("observation window"))?;
        preds.push(naive_estimate(last.triplet(mode), population));
        truths.push(d.truth(mode));
    }
    predictor_mse(&preds, &truths, population)
}

/// Generate grant-free traces, train one model per class and score both
/// against held-out traces.
pub fn train_predictor(scenario: &Scenario) -> Result<TrainOutcome> {
    scenario.validate()?;
    let cfg = &scenario.base;
    let tc = &scenario.train;
    let train_set = collect_traces(cfg, tc, tc.samples, 0)?;
    let val_set = collect_traces(cfg, tc, tc.validation_samples, VALIDATION_STREAM)?;
    let fit = |mode: UseMode, stream: u64| -> Result<(LstmModel, TrainReport, ModeScores)> {
        let population = cfg.traffic.population(mode);
        let data: Vec<TrainingSample> = train_set.iter().map(|d| d.sample(mode, population)).collect();
        let opts = TrainOptions {
            hidden: tc.hidden,
            layers: tc.layers,
            epochs: tc.epochs,
            learning_rate: tc.learning_rate,
            batch_size: tc.batch_size,
            clip_norm: tc.clip_norm,
            population,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let (model, report) = lstm_train(&data, &opts, &mut rng)?;
        let scores = ModeScores {
            train_mse: model_mse(&model, &train_set, mode, population)?,
            validation_mse: model_mse(&model, &val_set, mode, population)?,
            naive_validation_mse: naive_mse(&val_set, mode, population)?,
        };
        Ok((model, report, scores))
    };
    let (u, m) = rayon::join(
        || fit(UseMode::Urllc, u64::MAX - 1),
        || fit(UseMode::Mmtc, u64::MAX),
    );
    let (mu, ru, su) = u?;
    let (mm, rm, sm) = m?;
    Ok(TrainOutcome {
        models: BacklogModels { urllc: mu, mmtc: mm },
        reports: [ru, rm],
        scores: [su, sm],
    })
}

/// Train and write the models to `path`.
pub fn train_to_file(scenario: &Scenario, path: &Path) -> Result<TrainOutcome> {
    let outcome = train_predictor(scenario)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_file(path, &outcome.models.to_text())?;
    Ok(outcome)
}
