//! Consumption-pattern simulation built on a modified Markov chain.
//!
//! The crate models sequences of consumed item classes (meals, products,
//! media — anything categorical). From a short observed pattern it estimates
//! a transition matrix, then extends the pattern step by step by propagating
//! a decision array through the matrix and taking the argmax. On top of the
//! plain chain it offers:
//!
//! * repetition and tie handling that keep generated patterns from
//!   collapsing into one repeated class ([`markov`]);
//! * probabilistic injection of never-seen classes, with matching growth of
//!   the transition matrix ([`novelty`]);
//! * sequence metrics — Hamming-cost dynamic time warping and smoothed KL
//!   divergence — for comparing generated patterns to their sources
//!   ([`metrics`]);
//! * power-iteration clustering of image embeddings and Gaussian sampling of
//!   concrete images per class, turning simulated class sequences into image
//!   timelines ([`clustering`], [`sampler`]);
//! * a seeded experiment harness sweeping initial lengths, methods and
//!   novelty settings ([`experiment`]).
//!
//! All randomness flows through [`rng::RandomSource`], so every run is
//! reproducible from a single `u64` seed.

pub mod clustering;
pub mod config;
pub mod experiment;
pub mod markov;
pub mod metrics;
pub mod novelty;
pub mod pattern;
pub mod rng;
pub mod sampler;
pub mod synthetic;

pub use clustering::{
    build_knn_graph, cluster_class, parse_assignments, parse_embeddings, pic_cluster,
    pic_embedding, ClassClusters, ClusterAssignment, ClusterError, EmbeddingSet, NeighborGraph,
    PicEmbedding, DEFAULT_ALPHA, DEFAULT_K, DEFAULT_MAX_ITERS, DEFAULT_SIGMA, DEFAULT_TOL,
};
pub use config::{Method, SimulationConfig};
pub use experiment::{
    generate_initial_patterns, run_experiment, ExperimentError, ExperimentSpec, InitialPattern,
    MetricKind, MetricReport, NoveltySetting, ReportCell, TrialMetrics,
};
pub use markov::{
    build_transition, init_decision, parse_trace_jsonl, simulate, simulate_random_baseline,
    step_modified, step_original, DecisionArray, ExpansionRecord, MarkovError, SimulationTrace,
    StepTag, TraceRecord, TransitionMatrix, TIE_RELATIVE_TOLERANCE,
};
pub use metrics::{
    dtw_distance, dtw_distance_with_path, empirical_distribution, hamming, kl_divergence,
    union_support, DtwResult, EmpiricalDistribution, MetricError, KL_SMOOTHING_EPSILON,
};
pub use novelty::{expand, trigger_new_class, NoveltyError, NoveltyModel, NoveltyState};
pub use pattern::{
    parse_pattern, pattern_to_text, ClassAlphabet, ClassId, ConsumptionPattern, PatternError,
    PatternOrigin,
};
pub use rng::{derive_seed, RandomSource};
pub use sampler::{
    fit_preference, sample_images, DatasetManifest, PreferenceProfile, SampledTimeline,
    SamplerError, TimelineEntry, FALLBACK_SIGMA,
};
