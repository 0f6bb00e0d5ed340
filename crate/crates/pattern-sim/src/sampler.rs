//! From class-level patterns to image-level timelines.
//!
//! A simulated pattern says *what* is consumed at each step; this module
//! picks *which image* stands in for it. Every class's images are grouped
//! into visual-similarity clusters, and a per-class Gaussian over cluster
//! indices models how adventurous the consumer is: the center is the
//! favorite cluster, the spread how far from it they roam. Each pattern
//! event draws a cluster index from that Gaussian (rounded and clamped),
//! then an image from the cluster — without replacement until the cluster
//! runs out, so timelines avoid showing the identical image twice.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::clustering::ClassClusters;
use crate::pattern::{ClassAlphabet, ConsumptionPattern};
use crate::rng::RandomSource;

/// Spread assigned to classes absent from the initial pattern.
pub const FALLBACK_SIGMA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("manifest has no classes")]
    EmptyManifest,
    #[error("class {0:?} has no images")]
    EmptyClass(String),
    #[error("class {class:?} lists image {id:?} more than once")]
    DuplicateImage { class: String, id: String },
    #[error("class {0:?} is not in the manifest")]
    ClassNotInManifest(String),
    #[error("class {0:?} has no cluster assignment")]
    ClassNotAssigned(String),
    #[error("initial image {id:?} of class {class:?} is not in the cluster assignment")]
    InitialImageNotAssigned { class: String, id: String },
    #[error("class {0:?} has no preference profile")]
    ClassNotProfiled(String),
    #[error("malformed manifest at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("reading manifest directory: {0}")]
    Io(#[from] std::io::Error),
}

/// Which image ids belong to which class, in a stable order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    classes: Vec<(String, Vec<String>)>,
}

impl DatasetManifest {
    pub fn new(classes: Vec<(String, Vec<String>)>) -> Result<Self, SamplerError> {
        if classes.is_empty() {
            return Err(SamplerError::EmptyManifest);
        }
        for (class, images) in &classes {
            if images.is_empty() {
                return Err(SamplerError::EmptyClass(class.clone()));
            }
            let mut seen = HashMap::new();
            for id in images {
                if seen.insert(id, ()).is_some() {
                    return Err(SamplerError::DuplicateImage {
                        class: class.clone(),
                        id: id.clone(),
                    });
                }
            }
        }
        Ok(Self { classes })
    }

    pub fn class_names(&self) -> Vec<&str> {
        self.classes.iter().map(|(c, _)| c.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn images(&self, class: &str) -> Option<&[String]> {
        self.classes
            .iter()
            .find(|(c, _)| c == class)
            .map(|(_, images)| images.as_slice())
    }

    pub fn entries(&self) -> &[(String, Vec<String>)] {
        &self.classes
    }

    /// CSV rows `class,image_id` under a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,image_id\n");
        for (class, images) in &self.classes {
            for id in images {
                let _ = writeln!(out, "{class},{id}");
            }
        }
        out
    }

    /// Parse the CSV form; classes keep first-appearance order.
    pub fn from_csv(text: &str) -> Result<Self, SamplerError> {
        let mut classes: Vec<(String, Vec<String>)> = Vec::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "class,image_id" {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 {
                return Err(SamplerError::Parse {
                    line: number + 1,
                    reason: format!("expected 2 comma-separated fields, found {}", fields.len()),
                });
            }
            match classes.iter_mut().find(|(c, _)| c == fields[0]) {
                Some((_, images)) => images.push(fields[1].to_string()),
                None => classes.push((fields[0].to_string(), vec![fields[1].to_string()])),
            }
        }
        Self::new(classes)
    }

    /// Import a Food-101-style directory: each subdirectory is a class and
    /// each file inside it an image id. Classes and ids are sorted so the
    /// result does not depend on filesystem enumeration order.
    pub fn from_directory(root: &Path) -> Result<Self, SamplerError> {
        let mut classes = Vec::new();
        let mut subdirs: Vec<_> = std::fs::read_dir(root)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|e| e.path().is_dir())
            .collect();
        subdirs.sort_by_key(|e| e.file_name());
        for dir in subdirs {
            let class = dir.file_name().to_string_lossy().into_owned();
            let mut images: Vec<String> = std::fs::read_dir(dir.path())?
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .filter(|e| e.path().is_file())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            images.sort();
            if !images.is_empty() {
                classes.push((class, images));
            }
        }
        Self::new(classes)
    }
}

/// Per-class Gaussian over cluster indices: the preferred cluster and how
/// far preference strays from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceProfile {
    per_class: Vec<(String, usize, f64)>,
}

impl PreferenceProfile {
    pub fn center(&self, class: &str) -> Option<usize> {
        self.per_class
            .iter()
            .find(|(c, _, _)| c == class)
            .map(|&(_, center, _)| center)
    }

    pub fn sigma(&self, class: &str) -> Option<f64> {
        self.per_class
            .iter()
            .find(|(c, _, _)| c == class)
            .map(|&(_, _, sigma)| sigma)
    }

    pub fn classes(&self) -> Vec<&str> {
        self.per_class.iter().map(|(c, _, _)| c.as_str()).collect()
    }
}

/// Fit one Gaussian per assigned class.
///
/// Classes with initial images get `center` = their modal cluster (ties to
/// the lower index) and `sigma` = the population standard deviation of the
/// cluster indices — zero spread when every initial image sits in one
/// cluster. Classes absent from the initial pattern get a uniformly random
/// center and [`FALLBACK_SIGMA`].
pub fn fit_preference(
    initial_images: Option<&HashMap<String, Vec<String>>>,
    assignments: &[ClassClusters],
    rng: &mut RandomSource,
) -> Result<PreferenceProfile, SamplerError> {
    let mut per_class = Vec::with_capacity(assignments.len());
    for clusters in assignments {
        let observed = initial_images
            .and_then(|m| m.get(&clusters.class))
            .filter(|ids| !ids.is_empty());
        let (center, sigma) = match observed {
            Some(ids) => {
                let mut indices = Vec::with_capacity(ids.len());
                for id in ids {
                    let cluster = clusters.cluster_of(id).ok_or_else(|| {
                        SamplerError::InitialImageNotAssigned {
                            class: clusters.class.clone(),
                            id: id.clone(),
                        }
                    })?;
                    indices.push(cluster);
                }
                (modal(&indices), population_std(&indices))
            }
            None => (rng.index(clusters.assignment.n_clusters()), FALLBACK_SIGMA),
        };
        per_class.push((clusters.class.clone(), center, sigma));
    }
    Ok(PreferenceProfile { per_class })
}

/// Most frequent value; the smaller value wins a frequency tie.
fn modal(values: &[usize]) -> usize {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    let mut best = (0usize, 0usize);
    let mut first = true;
    for &v in values {
        let count = counts[&v];
        if first || count > best.1 || (count == best.1 && v < best.0) {
            best = (v, count);
            first = false;
        }
    }
    best.0
}

fn population_std(values: &[usize]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<usize>() as f64 / n;
    let variance = values
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    variance.sqrt()
}

/// One image pick at one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineEntry {
    pub t: usize,
    pub class: String,
    pub image_id: String,
}

/// The simulated pattern with a concrete image per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledTimeline {
    pub entries: Vec<TimelineEntry>,
}

impl SampledTimeline {
    /// CSV rows `t,class,image_id` under a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,class,image_id\n");
        for entry in &self.entries {
            let _ = writeln!(out, "{},{},{}", entry.t, entry.class, entry.image_id);
        }
        out
    }
}

/// Pick an image for every event of `pattern`.
///
/// Each event draws a cluster index from its class's Gaussian (rounded to
/// the nearest integer and clamped into the valid range), then an image
/// uniformly from that cluster. Images already shown for the same class and
/// cluster are avoided until the cluster is exhausted, after which draws
/// fall back to the full cluster.
pub fn sample_images(
    pattern: &ConsumptionPattern,
    alphabet: &ClassAlphabet,
    manifest: &DatasetManifest,
    assignments: &[ClassClusters],
    profile: &PreferenceProfile,
    rng: &mut RandomSource,
) -> Result<SampledTimeline, SamplerError> {
    // Validate up front so errors do not depend on event order.
    for &class_id in &pattern.distinct_classes() {
        let name = alphabet.name(class_id);
        if manifest.images(name).is_none() {
            return Err(SamplerError::ClassNotInManifest(name.to_string()));
        }
        if !assignments.iter().any(|a| a.class == name) {
            return Err(SamplerError::ClassNotAssigned(name.to_string()));
        }
        if profile.center(name).is_none() {
            return Err(SamplerError::ClassNotProfiled(name.to_string()));
        }
    }

    // Remaining (not yet shown) images per class and cluster.
    let mut pools: HashMap<(String, usize), Vec<String>> = HashMap::new();
    let mut entries = Vec::with_capacity(pattern.len());
    for (t, &class_id) in pattern.events.iter().enumerate() {
        let class = alphabet.name(class_id);
        let clusters = assignments
            .iter()
            .find(|a| a.class == class)
            .expect("validated above");
        let n_clusters = clusters.assignment.n_clusters();
        let center = profile.center(class).expect("validated above") as f64;
        let sigma = profile.sigma(class).expect("validated above");
        let drawn = rng.normal(center, sigma).round();
        let cluster = drawn.clamp(0.0, (n_clusters - 1) as f64) as usize;

        let pool = pools
            .entry((class.to_string(), cluster))
            .or_insert_with(|| {
                clusters
                    .cluster_members(cluster)
                    .into_iter()
                    .map(String::from)
                    .collect()
            });
        let image_id = if pool.is_empty() {
            // Cluster exhausted: fall back to with-replacement draws.
            let members = clusters.cluster_members(cluster);
            members[rng.index(members.len())].to_string()
        } else {
            pool.swap_remove(rng.index(pool.len()))
        };
        entries.push(TimelineEntry {
            t,
            class: class.to_string(),
            image_id,
        });
    }
    Ok(SampledTimeline { entries })
}
