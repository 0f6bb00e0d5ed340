//! Class alphabets and consumption patterns.
//!
//! A [`ConsumptionPattern`] is an ordered sequence of [`ClassId`]s, one event
//! per time step, indexing into a [`ClassAlphabet`]. Class identity is the
//! exact name string: no case folding and no normalization beyond trimming
//! surrounding whitespace, so manifests stay in control of naming.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("empty pattern")]
    Empty,
    #[error("class id {id} out of range for alphabet of size {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("duplicate class name {0:?}")]
    DuplicateName(String),
}

/// Index of a class in its owning [`ClassAlphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl ClassId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered set of unique class names; the index of a name is its [`ClassId`].
///
/// Appending a class never reorders existing entries, so ids handed out
/// earlier stay valid when the alphabet grows (novel-class expansion).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassAlphabet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassAlphabet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self, PatternError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut alphabet = Self::new();
        for name in names {
            let name = name.into();
            if alphabet.contains(&name) {
                return Err(PatternError::DuplicateName(name));
            }
            alphabet.push(name);
        }
        Ok(alphabet)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.index.get(name).copied().map(ClassId)
    }

    /// Name for an id; ids produced by this alphabet are always valid.
    pub fn name(&self, id: ClassId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Append a new class and return its id. Panics on duplicates; use
    /// [`ClassAlphabet::intern`] when the name may already be present.
    pub fn push(&mut self, name: impl Into<String>) -> ClassId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "class {name:?} already in alphabet"
        );
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        ClassId(id)
    }

    /// Id of `name`, appending it first if unseen.
    pub fn intern(&mut self, name: &str) -> ClassId {
        match self.index.get(name) {
            Some(&id) => ClassId(id),
            None => self.push(name),
        }
    }
}

/// Where a pattern came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternOrigin {
    Initial,
    Simulated,
    Baseline,
}

/// Ordered sequence of class events, one per time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsumptionPattern {
    pub events: Vec<ClassId>,
    pub origin: PatternOrigin,
}

impl ConsumptionPattern {
    pub fn new(events: Vec<ClassId>, origin: PatternOrigin) -> Self {
        Self { events, origin }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Distinct class ids in first-appearance order.
    pub fn distinct_classes(&self) -> Vec<ClassId> {
        let mut seen = Vec::new();
        for &id in &self.events {
            if !seen.contains(&id) {
                seen.push(id);
            }
        }
        seen
    }

    /// Errors if any event indexes outside the alphabet.
    pub fn validate_against(&self, alphabet: &ClassAlphabet) -> Result<(), PatternError> {
        for &id in &self.events {
            if id.0 >= alphabet.len() {
                return Err(PatternError::IdOutOfRange {
                    id: id.0,
                    size: alphabet.len(),
                });
            }
        }
        Ok(())
    }
}

/// Parse a pattern from text: one class name per line, or comma-separated
/// on one line (the two may be mixed). Lines starting with `#` are ignored,
/// tokens are trimmed, and unknown names are appended to `alphabet` in
/// first-appearance order. Returns a pattern with origin `Initial`.
pub fn parse_pattern(
    text: &str,
    alphabet: &mut ClassAlphabet,
) -> Result<ConsumptionPattern, PatternError> {
    let mut events = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for token in line.split(',') {
            let token = token.trim();
            if token.is_empty() {
                continue;
            }
            events.push(alphabet.intern(token));
        }
    }
    if events.is_empty() {
        return Err(PatternError::Empty);
    }
    Ok(ConsumptionPattern::new(events, PatternOrigin::Initial))
}

/// Serialize a pattern as text, one class name per line. The output re-parses
/// to an identical pattern and (when starting empty) an identical alphabet.
pub fn pattern_to_text(pattern: &ConsumptionPattern, alphabet: &ClassAlphabet) -> String {
    let mut out = String::new();
    for &id in &pattern.events {
        out.push_str(alphabet.name(id));
        out.push('\n');
    }
    out
}
