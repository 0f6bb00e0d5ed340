//! Seeded evaluation grid: generate initial patterns, simulate them with
//! every requested method, score the results and aggregate per-cell
//! statistics into a report.
//!
//! The grid spans initial lengths × trials × methods × novelty settings.
//! Every trial derives its own random stream from the base seed and the
//! cell coordinates, so results do not depend on execution order and any
//! single trial can be replayed from its logged seed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Method, SimulationConfig};
use crate::markov::{simulate, simulate_random_baseline, MarkovError, SimulationTrace};
use crate::metrics::{
    dtw_distance, empirical_distribution, kl_divergence, union_support, MetricError,
};
use crate::novelty::NoveltyModel;
use crate::pattern::{ClassAlphabet, ClassId, ConsumptionPattern, PatternOrigin};
use crate::rng::{derive_seed, RandomSource};
use crate::sampler::DatasetManifest;

/// Zipf-like weight exponent for class preference: weight of the r-th
/// favorite class is 1 / (r + 1)^EXPONENT.
pub const ZIPF_EXPONENT: f64 = 0.5;
/// Smallest class subset an initial pattern draws from.
pub const MIN_SUBSET: usize = 3;
/// Largest class subset an initial pattern draws from.
pub const MAX_SUBSET: usize = 10;

const INITIAL_SALT: u64 = 0x11;
const TRIAL_SALT: u64 = 0x22;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("manifest has {classes} classes; at least {needed} are needed")]
    ManifestTooSmall { classes: usize, needed: usize },
    #[error(
        "trial failed (length {length}, trial {trial}, method {method}, novelty {novelty}, \
         seed {seed}): {source}"
    )]
    Trial {
        length: usize,
        trial: usize,
        method: Method,
        novelty: bool,
        /// Seed to replay the failing trial.
        seed: u64,
        source: TrialFailure,
    },
}

#[derive(Debug, Error)]
pub enum TrialFailure {
    #[error(transparent)]
    Simulation(#[from] MarkovError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Which novelty settings a grid covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoveltySetting {
    #[default]
    Both,
    On,
    Off,
}

impl NoveltySetting {
    /// Concrete flags, novelty-off first.
    pub fn flags(self) -> Vec<bool> {
        match self {
            NoveltySetting::Both => vec![false, true],
            NoveltySetting::On => vec![true],
            NoveltySetting::Off => vec![false],
        }
    }
}

/// Full description of an evaluation grid. Serializes to the JSON config
/// format; omitted fields fall back to the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_lengths")]
    pub initial_lengths: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials_per_length: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub novelty: NoveltySetting,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_generated_length")]
    pub generated_length: usize,
}

fn default_lengths() -> Vec<usize> {
    vec![5, 10, 20, 30, 40, 50]
}

fn default_trials() -> usize {
    20
}

fn default_methods() -> Vec<Method> {
    vec![Method::Original, Method::Modified, Method::RandomBaseline]
}

fn default_generated_length() -> usize {
    SimulationConfig::DEFAULT_GENERATED_LENGTH
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            initial_lengths: default_lengths(),
            trials_per_length: default_trials(),
            methods: default_methods(),
            novelty: NoveltySetting::default(),
            seed: 0,
            generated_length: default_generated_length(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.initial_lengths.is_empty() {
            return Err(ExperimentError::InvalidSpec(
                "initial_lengths must not be empty".into(),
            ));
        }
        if let Some(&bad) = self.initial_lengths.iter().find(|&&l| l < 2) {
            return Err(ExperimentError::InvalidSpec(format!(
                "initial length {bad} is too short; transition estimation needs at least 2 events"
            )));
        }
        if self.trials_per_length < 1 {
            return Err(ExperimentError::InvalidSpec(
                "trials_per_length must be at least 1".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(ExperimentError::InvalidSpec(
                "methods must not be empty".into(),
            ));
        }
        if self.generated_length < 1 {
            return Err(ExperimentError::InvalidSpec(
                "generated_length must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One generated initial pattern with its class names and the manifest
/// classes left over as a name pool for injected novel classes.
#[derive(Debug, Clone)]
pub struct InitialPattern {
    pub length: usize,
    pub trial: usize,
    pub pattern: ConsumptionPattern,
    pub alphabet: ClassAlphabet,
    /// Manifest classes absent from the pattern, in manifest order.
    pub heldout: Vec<String>,
}

/// Draw the full set of initial patterns for a grid, one per
/// (length, trial) pair, in grid order.
///
/// Each pattern picks a uniform-size subset of manifest classes (between
/// [`MIN_SUBSET`] and [`MAX_SUBSET`], capped by the manifest), ranks them in
/// a random preference order, and assigns Zipf-like weights over that
/// ranking. Events come in two phases: first one weighted pass through the
/// whole subset without replacement (the eater samples each food in their
/// repertoire once — short patterns therefore skew toward distinct events),
/// then independent weighted draws for the remaining steps (they settle into
/// their favorites, so long patterns accumulate the skewed frequencies the
/// preference ranking implies). The pattern's alphabet contains exactly the
/// classes that actually occur, in first-appearance order.
pub fn generate_initial_patterns(
    manifest: &DatasetManifest,
    spec: &ExperimentSpec,
    rng: &RandomSource,
) -> Result<Vec<InitialPattern>, ExperimentError> {
    spec.validate()?;
    let class_names = manifest.class_names();
    if class_names.len() < 5 {
        return Err(ExperimentError::ManifestTooSmall {
            classes: class_names.len(),
            needed: 5,
        });
    }
    let mut patterns = Vec::with_capacity(spec.initial_lengths.len() * spec.trials_per_length);
    for &length in &spec.initial_lengths {
        for trial in 0..spec.trials_per_length {
            let mut r = rng.derive(&[INITIAL_SALT, length as u64, trial as u64]);
            patterns.push(draw_initial_pattern(&class_names, length, trial, &mut r));
        }
    }
    Ok(patterns)
}

fn draw_initial_pattern(
    class_names: &[&str],
    length: usize,
    trial: usize,
    rng: &mut RandomSource,
) -> InitialPattern {
    let max_subset = MAX_SUBSET.min(class_names.len());
    let subset_size = MIN_SUBSET + rng.index(max_subset - MIN_SUBSET + 1);
    let mut order: Vec<usize> = (0..class_names.len()).collect();
    rng.shuffle(&mut order);
    let subset: Vec<&str> = order[..subset_size]
        .iter()
        .map(|&i| class_names[i])
        .collect();
    let weights: Vec<f64> = (0..subset_size)
        .map(|rank| 1.0 / ((rank + 1) as f64).powf(ZIPF_EXPONENT))
        .collect();

    let mut picks: Vec<usize> = Vec::with_capacity(length);
    let mut remaining: Vec<usize> = (0..subset_size).collect();
    while picks.len() < length && !remaining.is_empty() {
        let remaining_weights: Vec<f64> = remaining.iter().map(|&i| weights[i]).collect();
        let at = rng.weighted_index(&remaining_weights);
        picks.push(remaining.swap_remove(at));
    }
    while picks.len() < length {
        picks.push(rng.weighted_index(&weights));
    }

    let mut alphabet = ClassAlphabet::new();
    let events: Vec<ClassId> = picks.iter().map(|&i| alphabet.intern(subset[i])).collect();
    let heldout = class_names
        .iter()
        .filter(|name| !alphabet.contains(name))
        .map(|name| name.to_string())
        .collect();
    InitialPattern {
        length,
        trial,
        pattern: ConsumptionPattern::new(events, PatternOrigin::Initial),
        alphabet,
        heldout,
    }
}

/// Which metric a report cell carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Dtw,
    Kl,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Dtw => "dtw",
            MetricKind::Kl => "kl",
        }
    }
}

/// Scores of a single simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub length: usize,
    pub trial: usize,
    pub method: Method,
    pub novelty: bool,
    /// Seed that replays this trial's simulation.
    pub seed: u64,
    pub dtw: f64,
    pub kl: f64,
}

/// Aggregated mean ± std for one grid cell and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub length: usize,
    pub method: Method,
    pub novelty: bool,
    pub metric: MetricKind,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Full experiment output: per-cell aggregates plus the raw trial scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub spec: ExperimentSpec,
    pub cells: Vec<ReportCell>,
    pub trials: Vec<TrialMetrics>,
}

impl MetricReport {
    /// Mean of one cell, if present.
    pub fn mean(
        &self,
        length: usize,
        method: Method,
        novelty: bool,
        metric: MetricKind,
    ) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| {
                c.length == length
                    && c.method == method
                    && c.novelty == novelty
                    && c.metric == metric
            })
            .map(|c| c.mean)
    }

    /// Deterministic CSV: fixed header, fixed row order, fixed float width.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("length,method,novelty,metric,mean,std,n\n");
        for cell in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{}",
                cell.length,
                cell.method.as_str(),
                if cell.novelty { "on" } else { "off" },
                cell.metric.as_str(),
                cell.mean,
                cell.std,
                cell.n
            );
        }
        out
    }

    /// Pretty JSON with the grid settings echoed back for replayability.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Run the whole grid single-threaded and aggregate the report.
///
/// For every (length, trial, novelty) cell the modified-method run is
/// simulated first; the random baseline then draws uniformly over that
/// run's final alphabet, so both face the same class universe. KL compares
/// the generated suffix against the initial pattern over their union
/// support; DTW aligns the initial pattern with the suffix.
pub fn run_experiment(
    spec: &ExperimentSpec,
    manifest: &DatasetManifest,
) -> Result<MetricReport, ExperimentError> {
    spec.validate()?;
    let base = RandomSource::new(spec.seed);
    let initials = generate_initial_patterns(manifest, spec, &base)?;
    let novelty_flags = spec.novelty.flags();

    let mut trials = Vec::new();
    for initial in &initials {
        for &novelty in &novelty_flags {
            // The baseline's alphabet comes from the modified run, so that
            // run is needed even when only the baseline was requested.
            let modified_seed = trial_seed(spec, initial, Method::Modified, novelty);
            let needs_modified = spec
                .methods
                .iter()
                .any(|&m| m == Method::Modified || m == Method::RandomBaseline);
            let modified_trace = if needs_modified {
                Some(
                    run_simulation(initial, Method::Modified, novelty, modified_seed, spec)
                        .map_err(|source| {
                            trial_error(initial, Method::Modified, novelty, modified_seed, source)
                        })?,
                )
            } else {
                None
            };

            for &method in &spec.methods {
                let seed = trial_seed(spec, initial, method, novelty);
                let suffix = match method {
                    Method::Modified => modified_trace
                        .as_ref()
                        .expect("modified trace prepared above")
                        .suffix_pattern(),
                    Method::Original => run_simulation(initial, method, novelty, seed, spec)
                        .map_err(|source| trial_error(initial, method, novelty, seed, source))?
                        .suffix_pattern(),
                    Method::RandomBaseline => {
                        let alphabet_size = modified_trace
                            .as_ref()
                            .expect("modified trace prepared above")
                            .alphabet
                            .len();
                        let mut rng = RandomSource::new(seed);
                        simulate_random_baseline(alphabet_size, spec.generated_length, &mut rng)
                    }
                };
                let (dtw, kl) = score(&initial.pattern, &suffix)
                    .map_err(|source| trial_error(initial, method, novelty, seed, source))?;
                trials.push(TrialMetrics {
                    length: initial.length,
                    trial: initial.trial,
                    method,
                    novelty,
                    seed,
                    dtw,
                    kl,
                });
            }
        }
    }

    let cells = aggregate(spec, &novelty_flags, &trials);
    Ok(MetricReport {
        spec: spec.clone(),
        cells,
        trials,
    })
}

fn trial_seed(
    spec: &ExperimentSpec,
    initial: &InitialPattern,
    method: Method,
    novelty: bool,
) -> u64 {
    let method_salt = match method {
        Method::Original => 1,
        Method::Modified => 2,
        Method::RandomBaseline => 3,
    };
    derive_seed(
        spec.seed,
        &[
            TRIAL_SALT,
            initial.length as u64,
            initial.trial as u64,
            method_salt,
            novelty as u64,
        ],
    )
}

fn run_simulation(
    initial: &InitialPattern,
    method: Method,
    novelty: bool,
    seed: u64,
    spec: &ExperimentSpec,
) -> Result<SimulationTrace, TrialFailure> {
    let config = SimulationConfig::new(method, seed)
        .with_length(spec.generated_length)
        .with_new_classes(novelty);
    let namer = NoveltyModel::with_name_pool(initial.heldout.clone());
    Ok(simulate(
        &initial.pattern,
        &initial.alphabet,
        &config,
        Some(namer),
    )?)
}

/// (DTW, KL) of a generated suffix against its initial pattern.
fn score(
    initial: &ConsumptionPattern,
    suffix: &ConsumptionPattern,
) -> Result<(f64, f64), TrialFailure> {
    let dtw = dtw_distance(&initial.events, &suffix.events)?.distance;
    let support = union_support(initial, suffix);
    let p = empirical_distribution(suffix, &support)?;
    let q = empirical_distribution(initial, &support)?;
    let kl = kl_divergence(&p, &q)?;
    Ok((dtw, kl))
}

fn trial_error(
    initial: &InitialPattern,
    method: Method,
    novelty: bool,
    seed: u64,
    source: TrialFailure,
) -> ExperimentError {
    ExperimentError::Trial {
        length: initial.length,
        trial: initial.trial,
        method,
        novelty,
        seed,
        source,
    }
}

fn aggregate(
    spec: &ExperimentSpec,
    novelty_flags: &[bool],
    trials: &[TrialMetrics],
) -> Vec<ReportCell> {
    let mut cells = Vec::new();
    let mut lengths = spec.initial_lengths.clone();
    lengths.sort_unstable();
    lengths.dedup();
    let mut novelty_order = novelty_flags.to_vec();
    novelty_order.sort_unstable();
    for &length in &lengths {
        for &method in &[Method::Original, Method::Modified, Method::RandomBaseline] {
            if !spec.methods.contains(&method) {
                continue;
            }
            for &novelty in &novelty_order {
                for &metric in &[MetricKind::Dtw, MetricKind::Kl] {
                    let values: Vec<f64> = trials
                        .iter()
                        .filter(|t| {
                            t.length == length && t.method == method && t.novelty == novelty
                        })
                        .map(|t| match metric {
                            MetricKind::Dtw => t.dtw,
                            MetricKind::Kl => t.kl,
                        })
                        .collect();
                    let n = values.len();
                    let mean = values.iter().sum::<f64>() / n as f64;
                    let variance =
                        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                    cells.push(ReportCell {
                        length,
                        method,
                        novelty,
                        metric,
                        mean,
                        std: variance.sqrt(),
                        n,
                    });
                }
            }
        }
    }
    cells
}
