//! Novel-class injection: when a never-seen class enters the simulated
//! pattern, and how the transition matrix and decision array grow to fit it.
//!
//! The probability that the current step introduces a new class is
//!
//! ```text
//! p_new = 1/(c_new + 1) * (1/(c_total + 1)) ^ (1/(t - x_last + 1))
//! ```
//!
//! where `c_new` counts classes added after the initial pattern, `c_total` is
//! the current alphabet size, and `x_last` is the time index of the most
//! recent addition. The longer the gap since the last addition, the closer
//! the exponent gets to zero and the closer `p_new` gets to `1/(c_new + 1)`.

use thiserror::Error;

use crate::markov::{DecisionArray, TransitionMatrix};
use crate::pattern::{ClassAlphabet, ConsumptionPattern};
use crate::rng::RandomSource;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NoveltyError {
    #[error("time index {t} precedes last addition index {x_last}")]
    TimeBeforeLastAddition { t: usize, x_last: usize },
}

/// Bookkeeping for the new-class probability model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoveltyState {
    /// Classes added after the initial pattern.
    pub c_new: usize,
    /// Total classes currently in the pattern's alphabet.
    pub c_total: usize,
    /// Time index of the most recent addition; starts at the last index of
    /// the initial pattern.
    pub x_last: usize,
}

impl NoveltyState {
    pub fn new(c_new: usize, c_total: usize, x_last: usize) -> Self {
        Self {
            c_new,
            c_total,
            x_last,
        }
    }

    /// State at the start of simulation, before any addition.
    pub fn for_initial(initial: &ConsumptionPattern, alphabet: &ClassAlphabet) -> Self {
        Self {
            c_new: 0,
            c_total: alphabet.len(),
            x_last: initial.len().saturating_sub(1),
        }
    }

    /// Probability that time step `t` introduces a new class.
    pub fn new_class_probability(&self, t: usize) -> Result<f64, NoveltyError> {
        if t < self.x_last {
            return Err(NoveltyError::TimeBeforeLastAddition {
                t,
                x_last: self.x_last,
            });
        }
        let gap = (t - self.x_last) as f64;
        let base = 1.0 / (self.c_total as f64 + 1.0);
        let exponent = 1.0 / (gap + 1.0);
        Ok(1.0 / (self.c_new as f64 + 1.0) * base.powf(exponent))
    }

    /// Record that step `t` added a class, bringing the alphabet to
    /// `c_total` entries.
    pub fn record_addition(&mut self, t: usize, c_total: usize) {
        self.c_new += 1;
        self.c_total = c_total;
        self.x_last = t;
    }
}

/// True when the new-class probability beats every existing class.
pub fn trigger_new_class(p_new: f64, candidate: &DecisionArray) -> bool {
    p_new > candidate.max_value()
}

/// Grow the transition matrix and decision array by one class.
///
/// New entries are drawn uniformly from `(0, 1]`, then independently zeroed
/// with probability equal to the pre-expansion matrix's sparsity so the new
/// column stays as sparse as the rest of the matrix and does not dominate
/// later decision updates. A surviving new-column entry appended to an
/// existing row is remapped into the upper half of that row's entry range —
/// `(0.5 + 0.5·u) · row_max` — so the appended class competes at the
/// magnitude of the row's strongest transition without ever exceeding it. A
/// single-step selection therefore never flips straight to the new class on
/// the strength of one lucky draw (which would funnel every later step into
/// freshly added classes), while the accumulated weight across expansions
/// still lets a fully propagated decision vector drift toward new classes,
/// keeping the walk alternating between new and established foods. Draw
/// order is fixed: the new-column entry of each old row in row order, then
/// the new row left to right; each entry consumes one value draw and one
/// zeroing draw. An all-zero new row is redrawn. All rows are renormalized
/// to sum 1, and the returned decision array is one-hot on the new class,
/// which is the current step's choice.
pub fn expand(
    matrix: &TransitionMatrix,
    decision: &DecisionArray,
    rng: &mut RandomSource,
) -> (TransitionMatrix, DecisionArray) {
    debug_assert_eq!(decision.len(), matrix.size());
    let n = matrix.size();
    let sparsity = matrix.sparsity();
    let draw = |rng: &mut RandomSource| {
        let value = rng.unit_open_low();
        if rng.unit() < sparsity {
            0.0
        } else {
            value
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut row = matrix.row(i).to_vec();
        let scale = row.iter().cloned().fold(0.0, f64::max);
        let entry = draw(rng);
        let entry = if entry > 0.0 {
            (0.5 + 0.5 * entry) * scale
        } else {
            0.0
        };
        row.push(entry);
        rows.push(row);
    }
    loop {
        let row: Vec<f64> = (0..n + 1).map(|_| draw(rng)).collect();
        if row.iter().any(|&v| v > 0.0) {
            rows.push(row);
            break;
        }
    }
    for row in &mut rows {
        let total: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= total;
        }
    }

    let expanded = TransitionMatrix::from_rows(rows);
    let new_decision = DecisionArray::one_hot(n + 1, n);
    (expanded, new_decision)
}

/// Source of names for injected classes: a pool of held-out real class names
/// first (dataset manifests supply these), synthesized `new_class_k` names
/// once the pool runs dry.
#[derive(Debug, Clone, Default)]
pub struct NoveltyModel {
    pool: Vec<String>,
    next_pool: usize,
    next_synthetic: usize,
}

impl NoveltyModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_name_pool(pool: Vec<String>) -> Self {
        Self {
            pool,
            next_pool: 0,
            next_synthetic: 0,
        }
    }

    /// Next class name not already present in `alphabet`.
    pub fn next_name(&mut self, alphabet: &ClassAlphabet) -> String {
        while self.next_pool < self.pool.len() {
            let name = self.pool[self.next_pool].clone();
            self.next_pool += 1;
            if !alphabet.contains(&name) {
                return name;
            }
        }
        loop {
            self.next_synthetic += 1;
            let name = format!("new_class_{}", self.next_synthetic);
            if !alphabet.contains(&name) {
                return name;
            }
        }
    }
}
