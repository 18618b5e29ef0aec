use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fde, fie, random_scene, separation_deg, snr_tilde_db, SceneParams};
use crate::error::{Error, Result};
use crate::facing::{infer, InferParams};
use crate::locate::DeviceLayout;
use crate::num::median;
use crate::scene::PatternId;
use crate::simulate::record;

/// Version of the trial CSV and summary layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Trial CSV columns. `runtime_ms` is appended only when the suite records runtimes.
pub const TRIAL_CSV_HEADER: [&str; 12] = [
    "scene_id",
    "devices",
    "snr_target_db",
    "true_k",
    "chosen_k",
    "fde_deg",
    "fie",
    "loc_error_m",
    "snr_tilde_db",
    "separation_deg",
    "iterations",
    "pattern",
];

/// Separation buckets in degrees, `[lo, hi)`.
pub const SEPARATION_BUCKETS: [(f64, f64); 4] = [(0.0, 20.0), (20.0, 40.0), (40.0, 60.0), (60.0, f64::INFINITY)];

/// A grid of seeded trials: every device count times every noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub name: String,
    pub seed: u64,
    /// Trials per grid cell.
    pub trials: usize,
    pub device_counts: Vec<usize>,
    /// Target SNR~ per cell, dB; `inf` means noiseless.
    pub snr_grid_db: Vec<f64>,
    /// Template for the generated scenes; `devices` and `snr_tilde_db` are overridden per cell.
    pub scene: SceneParams,
    /// Pattern assumed by inference; defaults to the one used to simulate.
    pub infer_pattern: Option<PatternId>,
    /// Adds a wall-clock `runtime_ms` column, which makes the CSV non-reproducible.
    pub record_runtime: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self::standard(200)
    }
}

impl SuiteConfig {
    /// Order-2 reflections, absorption 0.5, 4 devices, SNR~ 30 dB, speech-like source.
    pub fn standard(trials: usize) -> Self {
        Self {
            name: "standard".into(),
            seed: 0,
            trials,
            device_counts: vec![4],
            snr_grid_db: vec![30.0],
            scene: SceneParams::default(),
            infer_pattern: None,
            record_runtime: false,
        }
    }

    /// Device counts 2, 4 and 6 at one noise level.
    pub fn device_sweep(trials: usize) -> Self {
        Self { name: "devices".into(), device_counts: vec![2, 4, 6], ..Self::standard(trials) }
    }

    /// SNR~ from 30 down to 5 dB with 4 devices.
    pub fn snr_sweep(trials: usize) -> Self {
        Self { name: "snr".into(), snr_grid_db: vec![30.0, 20.0, 10.0, 5.0], ..Self::standard(trials) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.device_counts.is_empty() || self.device_counts.iter().any(|&n| n < 2) {
            return Err(Error::InvalidInput("device_counts must be non-empty and each at least 2".into()));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidInput("snr_grid_db must be non-empty and free of NaN".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let suite: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        suite.validate()?;
        Ok(suite)
    }

    /// Trial count over the whole grid.
    pub fn len(&self) -> usize {
        self.trials * self.device_counts.len() * self.snr_grid_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scene parameters and RNG seed for trial `scene_id`.
    pub fn cell(&self, scene_id: u64) -> (SceneParams, u64) {
        let per_n = (self.trials * self.snr_grid_db.len()) as u64;
        let n = self.device_counts[(scene_id / per_n) as usize];
        let snr = self.snr_grid_db[((scene_id % per_n) / self.trials as u64) as usize];
        let params = SceneParams { devices: n, snr_tilde_db: snr.is_finite().then_some(snr), ..self.scene.clone() };
        (params, self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(scene_id))
    }
}

/// Outcome of one simulated trial. Failed inference leaves the decision fields empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub scene_id: u64,
    pub devices: usize,
    pub snr_target_db: f64,
    pub true_k: usize,
    pub chosen_k: Option<usize>,
    pub fde: Option<f64>,
    pub fie: Option<usize>,
    pub loc_error: Option<f64>,
    pub snr_tilde: f64,
    pub separation: f64,
    pub iterations: usize,
    pub pattern: String,
    pub runtime_ms: Option<f64>,
}

impl TrialResult {
    pub fn correct(&self) -> bool {
        self.chosen_k == Some(self.true_k)
    }

    fn record(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut r = vec![
            self.scene_id.to_string(),
            self.devices.to_string(),
            self.snr_target_db.to_string(),
            self.true_k.to_string(),
            opt(self.chosen_k.map(|v| v.to_string())),
            opt(self.fde.map(|v| v.to_string())),
            opt(self.fie.map(|v| v.to_string())),
            opt(self.loc_error.map(|v| v.to_string())),
            self.snr_tilde.to_string(),
            self.separation.to_string(),
            self.iterations.to_string(),
            self.pattern.clone(),
        ];
        if let Some(t) = self.runtime_ms {
            r.push(t.to_string());
        }
        r
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self> {
        fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
            let s = rec.get(i).ok_or_else(|| Error::Parse(format!("missing column {}", TRIAL_CSV_HEADER[i])))?;
            s.parse().map_err(|_| Error::Parse(format!("bad {} value {s:?}", TRIAL_CSV_HEADER[i])))
        }
        fn opt<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<Option<T>> {
            match rec.get(i) {
                Some("") => Ok(None),
                _ => field(rec, i).map(Some),
            }
        }
        Ok(Self {
            scene_id: field(rec, 0)?,
            devices: field(rec, 1)?,
            snr_target_db: field(rec, 2)?,
            true_k: field(rec, 3)?,
            chosen_k: opt(rec, 4)?,
            fde: opt(rec, 5)?,
            fie: opt(rec, 6)?,
            loc_error: opt(rec, 7)?,
            snr_tilde: field(rec, 8)?,
            separation: field(rec, 9)?,
            iterations: field(rec, 10)?,
            pattern: field(rec, 11)?,
            runtime_ms: match rec.get(12) {
                Some(s) => Some(s.parse().map_err(|_| Error::Parse(format!("bad runtime_ms value {s:?}")))?),
                None => None,
            },
        })
    }
}

/// Simulates and scores one trial of the suite.
pub fn run_trial(suite: &SuiteConfig, scene_id: u64, params: &InferParams) -> Result<TrialResult> {
    let pattern = suite.infer_pattern.unwrap_or(suite.scene.pattern);
    Ok(run_trial_patterns(suite, scene_id, params, &[pattern])?.remove(0))
}

/// One simulation and inference, scored under each assumed pattern. Only the
/// pattern match is repeated for patterns after the first.
fn run_trial_patterns(
    suite: &SuiteConfig,
    scene_id: u64,
    params: &InferParams,
    patterns: &[PatternId],
) -> Result<Vec<TrialResult>> {
    let (scene_params, seed) = suite.cell(scene_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = random_scene(&scene_params, seed, &mut rng);
    let (obs, truth) = record(&scene)?;
    let layout = DeviceLayout::from_scene(&scene);
    let user = scene.user.position;
    let k = truth.facing_device;
    let start = Instant::now();
    let decision = infer(&obs, &layout, &patterns[0].pattern(), params).ok();
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let snr_tilde = snr_tilde_db(&obs, truth.onset);
    let separation = separation_deg(&layout, user, k);
    patterns
        .iter()
        .enumerate()
        .map(|(i, pattern)| {
            let chosen = match &decision {
                None => None,
                Some(d) if i == 0 => Some(d.device_index),
                Some(d) => Some(d.rematch(&layout, &pattern.pattern(), params.exponent)?.device_index),
            };
            Ok(TrialResult {
                scene_id,
                devices: scene.devices.len(),
                snr_target_db: scene_params.snr_tilde_db.unwrap_or(f64::INFINITY),
                true_k: k,
                chosen_k: chosen,
                fde: chosen.map(|c| fde(&layout, user, k, c)),
                fie: chosen.map(|c| fie(&layout, user, k, c)),
                loc_error: decision.as_ref().map(|d| d.user_location.position.dist(user)),
                snr_tilde,
                separation,
                iterations: decision.as_ref().map_or(0, |d| d.iterations_used),
                pattern: pattern.as_str().to_string(),
                runtime_ms: (suite.record_runtime && i == 0).then_some(elapsed),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAccuracy {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub trials: usize,
    pub accuracy: Option<f64>,
}

/// Aggregate statistics, recomputable from the trial rows alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub trials: usize,
    /// Trials where inference returned an error; they count as wrong.
    pub failures: usize,
    pub accuracy: f64,
    pub median_fde_deg: Option<f64>,
    /// Share of wrong trials with FIE 1.
    pub adjacent_error_share: Option<f64>,
    pub fie_histogram: BTreeMap<usize, usize>,
    pub median_loc_error_m: Option<f64>,
    pub separation_accuracy: Vec<BucketAccuracy>,
    pub accuracy_by_devices: BTreeMap<usize, f64>,
    /// Keyed by the target SNR~ as written in the CSV.
    pub accuracy_by_snr: BTreeMap<String, f64>,
}

fn accuracy<'a>(rows: impl Iterator<Item = &'a TrialResult>) -> Option<f64> {
    let (mut n, mut ok) = (0usize, 0usize);
    for r in rows {
        n += 1;
        ok += r.correct() as usize;
    }
    (n > 0).then(|| ok as f64 / n as f64)
}

impl Summary {
    pub fn from_rows(rows: &[TrialResult]) -> Self {
        let mut fie_histogram = BTreeMap::new();
        for f in rows.iter().filter_map(|r| r.fie) {
            *fie_histogram.entry(f).or_insert(0) += 1;
        }
        let wrong: Vec<&TrialResult> = rows.iter().filter(|r| r.chosen_k.is_some() && !r.correct()).collect();
        let adjacent = wrong.iter().filter(|r| r.fie == Some(1)).count();
        let fdes: Vec<f64> = rows.iter().filter_map(|r| r.fde).collect();
        let locs: Vec<f64> = rows.iter().filter_map(|r| r.loc_error).collect();
        let separation_accuracy = SEPARATION_BUCKETS
            .iter()
            .map(|&(lo, hi)| {
                let inside = || rows.iter().filter(move |r| r.separation >= lo && r.separation < hi);
                BucketAccuracy { lo_deg: lo, hi_deg: hi, trials: inside().count(), accuracy: accuracy(inside()) }
            })
            .collect();
        let mut by_devices = BTreeMap::new();
        let mut by_snr = BTreeMap::new();
        for r in rows {
            by_devices.entry(r.devices).or_insert_with(Vec::new).push(r);
            by_snr.entry(r.snr_target_db.to_string()).or_insert_with(Vec::new).push(r);
        }
        Self {
            schema_version: SCHEMA_VERSION,
            trials: rows.len(),
            failures: rows.iter().filter(|r| r.chosen_k.is_none()).count(),
            accuracy: accuracy(rows.iter()).unwrap_or(0.0),
            median_fde_deg: median(&fdes),
            adjacent_error_share: (!wrong.is_empty()).then(|| adjacent as f64 / wrong.len() as f64),
            fie_histogram,
            median_loc_error_m: median(&locs),
            separation_accuracy,
            accuracy_by_devices: by_devices.into_iter().map(|(k, v)| (k, accuracy(v.into_iter()).unwrap())).collect(),
            accuracy_by_snr: by_snr.into_iter().map(|(k, v)| (k, accuracy(v.into_iter()).unwrap())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkResult {
    /// Sorted by `scene_id`.
    pub rows: Vec<TrialResult>,
    pub summary: Summary,
}

/// Runs every trial of the suite on up to `jobs` threads (0 = all cores).
/// Rows come back in `scene_id` order regardless of scheduling.
pub fn run_benchmark(suite: &SuiteConfig, params: &InferParams, jobs: usize) -> Result<BenchmarkResult> {
    suite.validate()?;
    let pool = pool(jobs)?;
    let mut rows = pool.install(|| {
        (0..suite.len() as u64).into_par_iter().map(|id| run_trial(suite, id, params)).collect::<Result<Vec<_>>>()
    })?;
    rows.sort_by_key(|r| r.scene_id);
    let summary = Summary::from_rows(&rows);
    Ok(BenchmarkResult { rows, summary })
}

/// Simulates each trial once and scores it under every pattern in
/// `patterns`, so differences come from the assumed pattern alone.
pub fn run_pattern_swap(
    suite: &SuiteConfig,
    params: &InferParams,
    patterns: &[PatternId],
    jobs: usize,
) -> Result<Vec<(PatternId, BenchmarkResult)>> {
    suite.validate()?;
    if patterns.is_empty() {
        return Err(Error::InvalidInput("no patterns to compare".into()));
    }
    let pool = pool(jobs)?;
    let per_trial = pool.install(|| {
        (0..suite.len() as u64)
            .into_par_iter()
            .map(|id| run_trial_patterns(suite, id, params, patterns))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(patterns
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let rows: Vec<TrialResult> = per_trial.iter().map(|t| t[i].clone()).collect();
            let summary = Summary::from_rows(&rows);
            (p, BenchmarkResult { rows, summary })
        })
        .collect())
}

pub(crate) fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

pub fn write_trials_csv(rows: &[TrialResult], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = TRIAL_CSV_HEADER.to_vec();
    if rows.iter().any(|r| r.runtime_ms.is_some()) {
        header.push("runtime_ms");
    }
    w.write_record(&header)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv(input: impl Read) -> Result<Vec<TrialResult>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().take(TRIAL_CSV_HEADER.len()).ne(TRIAL_CSV_HEADER) {
        return Err(Error::Parse(format!("unexpected trial CSV header {header:?}")));
    }
    r.records().map(|rec| TrialResult::parse(&rec?)).collect()
}

pub fn write_summary_json(summary: &Summary, out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, summary)?;
    Ok(())
}
