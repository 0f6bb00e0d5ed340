//! Simulation configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// How the generated suffix is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain decision-array iteration: multiply, take the argmax, repeat.
    Original,
    /// Original plus tie randomization and repetition reset.
    Modified,
    /// Uniform independent draws over the class alphabet.
    RandomBaseline,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::Modified => "modified",
            Method::RandomBaseline => "random_baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Method::Original),
            "modified" => Ok(Method::Modified),
            "random_baseline" | "random" => Ok(Method::RandomBaseline),
            other => Err(format!(
                "unknown method {other:?} (expected original, modified, or random_baseline)"
            )),
        }
    }
}

/// Settings for one simulation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationConfig {
    /// Number of events to generate after the initial pattern.
    pub target_generated_length: usize,
    /// Whether never-seen classes may be injected during simulation.
    pub allow_new_classes: bool,
    pub method: Method,
    pub seed: u64,
}

impl SimulationConfig {
    pub const DEFAULT_GENERATED_LENGTH: usize = 100;

    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            target_generated_length: Self::DEFAULT_GENERATED_LENGTH,
            allow_new_classes: false,
            method,
            seed,
        }
    }

    pub fn with_length(mut self, length: usize) -> Self {
        self.target_generated_length = length;
        self
    }

    pub fn with_new_classes(mut self, allow: bool) -> Self {
        self.allow_new_classes = allow;
        self
    }
}
