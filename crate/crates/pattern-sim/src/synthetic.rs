//! Deterministic synthetic fixtures: blob-structured embeddings and food
//! manifests. They back the test suite and let the CLI run end to end
//! without any real dataset on disk.

use crate::clustering::EmbeddingSet;
use crate::rng::RandomSource;
use crate::sampler::DatasetManifest;

/// Food-class names for generated manifests, in a fixed order.
pub const FOOD_CLASS_NAMES: &[&str] = &[
    "apple_pie",
    "bibimbap",
    "caesar_salad",
    "dumplings",
    "edamame",
    "falafel",
    "fried_rice",
    "greek_salad",
    "hamburger",
    "ice_cream",
    "lasagna",
    "miso_soup",
    "nachos",
    "omelette",
    "pad_thai",
    "pancakes",
    "pho",
    "pizza",
    "ramen",
    "risotto",
    "samosa",
    "sushi",
    "tacos",
    "waffles",
];

/// First `n` food-class names, extending with numbered variants (for
/// example `apple_pie_2`) once the base list runs out.
pub fn class_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let base = FOOD_CLASS_NAMES[i % FOOD_CLASS_NAMES.len()];
            let round = i / FOOD_CLASS_NAMES.len();
            if round == 0 {
                base.to_string()
            } else {
                format!("{base}_{}", round + 1)
            }
        })
        .collect()
}

/// Manifest of `n_classes` food classes with `images_per_class` ids each.
/// Purely structural — the ids point at no real files.
pub fn manifest(n_classes: usize, images_per_class: usize) -> DatasetManifest {
    let classes = class_names(n_classes)
        .into_iter()
        .map(|class| {
            let images = (0..images_per_class)
                .map(|i| format!("{class}_{i:04}"))
                .collect();
            (class, images)
        })
        .collect();
    DatasetManifest::new(classes).expect("non-degenerate synthetic manifest")
}

/// Gaussian blobs in `dim` dimensions, one blob per intended cluster.
///
/// Blob `b` is centered on the unit vector along axis `b`, so centers sit at
/// pairwise distance `sqrt(2)` — fourteen blob standard deviations apart at
/// the default `blob_sigma` of 0.1, comfortably separated for neighbor
/// graphs. Points are generated blob-major; the second return value is each
/// point's blob index.
///
/// Panics if `dim < n_blobs` (centers need distinct axes) or if either count
/// is zero.
pub fn blob_embeddings(
    class: &str,
    n_blobs: usize,
    points_per_blob: usize,
    dim: usize,
    blob_sigma: f64,
    rng: &mut RandomSource,
) -> (EmbeddingSet, Vec<usize>) {
    assert!(n_blobs >= 1, "need at least one blob");
    assert!(points_per_blob >= 1, "need at least one point per blob");
    assert!(dim >= n_blobs, "need dim >= n_blobs for distinct centers");
    let mut ids = Vec::with_capacity(n_blobs * points_per_blob);
    let mut vectors = Vec::with_capacity(n_blobs * points_per_blob);
    let mut truth = Vec::with_capacity(n_blobs * points_per_blob);
    for blob in 0..n_blobs {
        for point in 0..points_per_blob {
            let vector: Vec<f64> = (0..dim)
                .map(|axis| {
                    let center = if axis == blob { 1.0 } else { 0.0 };
                    rng.normal(center, blob_sigma)
                })
                .collect();
            ids.push(format!("{class}_{blob}_{point:03}"));
            vectors.push(vector);
            truth.push(blob);
        }
    }
    let set = EmbeddingSet::new(class, ids, vectors).expect("synthetic blobs are well-formed");
    (set, truth)
}
