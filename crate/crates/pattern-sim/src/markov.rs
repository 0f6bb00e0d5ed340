//! Markov-chain pattern generation.
//!
//! A transition matrix is estimated from the event bigrams of an initial
//! pattern, a decision array is repeatedly multiplied through it, and the
//! argmax of each product picks the next event. The `original` method does
//! exactly that and tends to collapse into a single repeated class once the
//! decision array approaches the chain's stationary distribution. The
//! `modified` method adds two escape hatches:
//!
//! * tie randomization — when several classes share the maximum probability,
//!   one of them is picked uniformly at random and the decision array is
//!   reset one-hot on it;
//! * repetition reset — a choice that would produce three identical events
//!   in a row is replaced by a uniformly random different class, again
//!   resetting the decision array one-hot.
//!
//! Both resets break the feedback loop that causes collapse, so modified
//! runs keep moving through the alphabet indefinitely.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Method, SimulationConfig};
use crate::novelty::{expand, trigger_new_class, NoveltyError, NoveltyModel, NoveltyState};
use crate::pattern::{ClassAlphabet, ClassId, ConsumptionPattern, PatternError, PatternOrigin};
use crate::rng::RandomSource;

/// Two candidate probabilities tie when `|a - b| <= TIE_RELATIVE_TOLERANCE *
/// max(1, |a|)`, with `a` the larger of the two.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MarkovError {
    #[error("initial pattern has {0} event(s); at least 2 are needed to count a transition")]
    InsufficientTransitions(usize),
    #[error("alphabet holds {alphabet_size} classes but the pattern references class id {max_id}")]
    AlphabetTooSmall { alphabet_size: usize, max_id: usize },
    #[error("decision array length {decision} does not match matrix size {matrix}")]
    DimensionMismatch { decision: usize, matrix: usize },
    #[error("random_baseline patterns come from simulate_random_baseline, not simulate")]
    BaselineMethod,
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Novelty(#[from] NoveltyError),
    #[error("malformed trace line {line}: {reason}")]
    InvalidTrace { line: usize, reason: String },
}

/// Row-stochastic transition matrix over class ids, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    data: Vec<f64>,
    n: usize,
}

impl TransitionMatrix {
    /// Build from explicit rows. Panics if the rows are not square; meant
    /// for construction sites that already guarantee shape.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "transition matrix rows must be square");
            data.extend(row);
        }
        Self { data, n }
    }

    /// Number of classes (the matrix is `size x size`).
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Fraction of entries that are exactly zero.
    pub fn sparsity(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let zeros = self.data.iter().filter(|&&v| v == 0.0).count();
        zeros as f64 / self.data.len() as f64
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Dense CSV: a header row of class names, then one probability row per
    /// class in class-id order.
    pub fn to_csv(&self, alphabet: &ClassAlphabet) -> Result<String, MarkovError> {
        if alphabet.len() != self.n {
            return Err(MarkovError::AlphabetTooSmall {
                alphabet_size: alphabet.len(),
                max_id: self.n.saturating_sub(1),
            });
        }
        let mut out = String::new();
        out.push_str(&alphabet.names().join(","));
        out.push('\n');
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Probability row vector over class ids; the argmax picks the next event.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionArray {
    probs: Vec<f64>,
}

impl DecisionArray {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    /// All mass on a single class.
    pub fn one_hot(len: usize, index: usize) -> Self {
        assert!(index < len, "one-hot index {index} out of range {len}");
        let mut probs = vec![0.0; len];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_value(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the maximum entry; the first one wins on exact equality.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.probs.iter().enumerate() {
            if v > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Indices whose entries tie with the maximum under
    /// [`TIE_RELATIVE_TOLERANCE`].
    pub fn tied_max_indices(&self) -> Vec<usize> {
        let max = self.max_value();
        let tolerance = TIE_RELATIVE_TOLERANCE * max.abs().max(1.0);
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &v)| max - v <= tolerance)
            .map(|(i, _)| i)
            .collect()
    }

    /// Row-vector times matrix: `out_j = sum_i self_i * m(i, j)`.
    pub fn multiplied_by(&self, matrix: &TransitionMatrix) -> Result<DecisionArray, MarkovError> {
        if self.len() != matrix.size() {
            return Err(MarkovError::DimensionMismatch {
                decision: self.len(),
                matrix: matrix.size(),
            });
        }
        let n = matrix.size();
        let mut out = vec![0.0; n];
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = matrix.row(i);
            for j in 0..n {
                out[j] += p * row[j];
            }
        }
        Ok(DecisionArray::from_probs(out))
    }
}

/// How a simulated step chose its event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepTag {
    /// Plain argmax of the propagated decision array.
    Normal,
    /// Several classes tied for the maximum; one was drawn at random.
    TieReset,
    /// The argmax would have made three identical events in a row; a
    /// different class was drawn instead.
    RepetitionReset,
    /// A never-seen class was injected.
    NewClass,
    /// Drawn uniformly by the random baseline.
    Baseline,
    /// Copied from the initial pattern, not generated.
    Initial,
}

impl StepTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StepTag::Normal => "normal",
            StepTag::TieReset => "tie_reset",
            StepTag::RepetitionReset => "repetition_reset",
            StepTag::NewClass => "new_class",
            StepTag::Baseline => "baseline",
            StepTag::Initial => "initial",
        }
    }
}

/// Estimate a row-stochastic transition matrix from the bigram counts of
/// `initial`. Classes that never appear as a bigram source get the
/// element-wise mean of the non-zero rows so every row stays stochastic.
pub fn build_transition(
    initial: &ConsumptionPattern,
    alphabet_size: usize,
) -> Result<TransitionMatrix, MarkovError> {
    if initial.len() < 2 {
        return Err(MarkovError::InsufficientTransitions(initial.len()));
    }
    let max_id = initial.events.iter().map(|c| c.0).max().unwrap_or(0);
    if max_id >= alphabet_size {
        return Err(MarkovError::AlphabetTooSmall {
            alphabet_size,
            max_id,
        });
    }

    let n = alphabet_size;
    let mut data = vec![0.0; n * n];
    for pair in initial.events.windows(2) {
        data[pair[0].0 * n + pair[1].0] += 1.0;
    }

    let mut zero_rows = Vec::new();
    for i in 0..n {
        let total: f64 = data[i * n..(i + 1) * n].iter().sum();
        if total == 0.0 {
            zero_rows.push(i);
        } else {
            for v in &mut data[i * n..(i + 1) * n] {
                *v /= total;
            }
        }
    }

    // At least one bigram exists, so a non-zero row always exists too.
    if !zero_rows.is_empty() {
        let observed = n - zero_rows.len();
        let mut mean = vec![0.0; n];
        for i in 0..n {
            if zero_rows.binary_search(&i).is_err() {
                for j in 0..n {
                    mean[j] += data[i * n + j];
                }
            }
        }
        for v in &mut mean {
            *v /= observed as f64;
        }
        let total: f64 = mean.iter().sum();
        for v in &mut mean {
            *v /= total;
        }
        for &i in &zero_rows {
            data[i * n..(i + 1) * n].copy_from_slice(&mean);
        }
    }

    Ok(TransitionMatrix { data, n })
}

/// Starting decision array: one-hot on the last event of the initial pattern.
pub fn init_decision(
    initial: &ConsumptionPattern,
    alphabet_size: usize,
) -> Result<DecisionArray, MarkovError> {
    let last = initial.events.last().ok_or(PatternError::Empty)?;
    if last.0 >= alphabet_size {
        return Err(MarkovError::AlphabetTooSmall {
            alphabet_size,
            max_id: last.0,
        });
    }
    Ok(DecisionArray::one_hot(alphabet_size, last.0))
}

/// One step of the original method: propagate and take the argmax.
pub fn step_original(
    decision: &DecisionArray,
    matrix: &TransitionMatrix,
) -> Result<(DecisionArray, ClassId), MarkovError> {
    let candidate = decision.multiplied_by(matrix)?;
    let choice = ClassId(candidate.argmax());
    Ok((candidate, choice))
}

/// One step of the modified method: propagate, break ties at random, and
/// veto any choice that would make three identical events in a row.
///
/// `last_two` holds the two most recent events of the pattern so far (older
/// first). The repetition check runs after tie resolution, so even a
/// randomly drawn tie winner cannot complete a three-run; the replacement
/// for a vetoed choice is drawn uniformly from the other classes (from the
/// whole alphabet only when there is just one class). Both resets return a
/// one-hot decision array on the chosen class.
pub fn step_modified(
    decision: &DecisionArray,
    matrix: &TransitionMatrix,
    last_two: (Option<ClassId>, Option<ClassId>),
    rng: &mut RandomSource,
) -> Result<(DecisionArray, ClassId, StepTag), MarkovError> {
    let candidate = decision.multiplied_by(matrix)?;
    Ok(resolve_modified(candidate, last_two, rng))
}

fn resolve_modified(
    candidate: DecisionArray,
    last_two: (Option<ClassId>, Option<ClassId>),
    rng: &mut RandomSource,
) -> (DecisionArray, ClassId, StepTag) {
    let n = candidate.len();
    let tied = candidate.tied_max_indices();
    let (prospective, tag, next_decision) = if tied.len() >= 2 {
        let pick = tied[rng.index(tied.len())];
        (pick, StepTag::TieReset, DecisionArray::one_hot(n, pick))
    } else {
        let pick = candidate.argmax();
        (pick, StepTag::Normal, candidate)
    };

    let repeats =
        matches!(last_two, (Some(a), Some(b)) if a.0 == prospective && b.0 == prospective);
    if repeats {
        let replacement = if n == 1 {
            prospective
        } else {
            let draw = rng.index(n - 1);
            if draw >= prospective {
                draw + 1
            } else {
                draw
            }
        };
        return (
            DecisionArray::one_hot(n, replacement),
            ClassId(replacement),
            StepTag::RepetitionReset,
        );
    }
    (next_decision, ClassId(prospective), tag)
}

/// One event of a [`SimulationTrace`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Absolute time index within the full pattern.
    pub t: usize,
    pub class_name: String,
    pub tag: StepTag,
}

/// One alphabet expansion during a novelty-enabled run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionRecord {
    /// Time index of the step that injected the class.
    pub t: usize,
    /// Matrix sparsity immediately before the expansion.
    pub pre_sparsity: f64,
    /// Zeroes among the new column's entries for the pre-existing rows.
    pub new_column_zeros: usize,
    /// Pre-existing row count, i.e. how many new-column entries were drawn.
    pub new_column_entries: usize,
}

/// Everything a simulation run produced: the full pattern (initial prefix
/// plus generated suffix), the possibly grown alphabet, per-step decision
/// snapshots and tags, and each transition matrix that was in force.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub pattern: ConsumptionPattern,
    pub alphabet: ClassAlphabet,
    /// Events in `pattern` that were copied from the input.
    pub initial_len: usize,
    /// Decision array after each generated step.
    pub decisions: Vec<DecisionArray>,
    /// How each generated step chose its event.
    pub tags: Vec<StepTag>,
    /// The initial matrix plus one entry per alphabet expansion.
    pub matrices: Vec<TransitionMatrix>,
    pub expansions: Vec<ExpansionRecord>,
}

impl SimulationTrace {
    /// The generated events, without the initial prefix.
    pub fn generated_suffix(&self) -> &[ClassId] {
        &self.pattern.events[self.initial_len..]
    }

    /// The generated events as a standalone pattern.
    pub fn suffix_pattern(&self) -> ConsumptionPattern {
        ConsumptionPattern::new(self.generated_suffix().to_vec(), PatternOrigin::Simulated)
    }

    pub fn final_matrix(&self) -> &TransitionMatrix {
        self.matrices.last().expect("trace always holds a matrix")
    }

    /// One JSON object per line, covering the initial prefix (tagged
    /// `initial`) and every generated event.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (t, &class) in self.pattern.events.iter().enumerate() {
            let tag = if t < self.initial_len {
                StepTag::Initial
            } else {
                self.tags[t - self.initial_len]
            };
            let record = TraceRecord {
                t,
                class_name: self.alphabet.name(class).to_string(),
                tag,
            };
            let _ = writeln!(
                out,
                "{}",
                serde_json::to_string(&record).expect("trace records serialize")
            );
        }
        out
    }
}

/// Parse a JSONL trace back into a pattern and its alphabet. Events must be
/// in time order; names are interned in order of first appearance.
pub fn parse_trace_jsonl(
    text: &str,
) -> Result<(ConsumptionPattern, ClassAlphabet, Vec<StepTag>), MarkovError> {
    let mut alphabet = ClassAlphabet::new();
    let mut events = Vec::new();
    let mut tags = Vec::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record: TraceRecord =
            serde_json::from_str(line).map_err(|e| MarkovError::InvalidTrace {
                line: number + 1,
                reason: e.to_string(),
            })?;
        if record.t != events.len() {
            return Err(MarkovError::InvalidTrace {
                line: number + 1,
                reason: format!("expected t = {}, found t = {}", events.len(), record.t),
            });
        }
        events.push(alphabet.intern(&record.class_name));
        tags.push(record.tag);
    }
    if events.is_empty() {
        return Err(PatternError::Empty.into());
    }
    let origin = if tags.iter().all(|&t| t == StepTag::Baseline) {
        PatternOrigin::Baseline
    } else {
        PatternOrigin::Simulated
    };
    Ok((ConsumptionPattern::new(events, origin), alphabet, tags))
}

/// Run the original or modified method for `config.target_generated_length`
/// steps, optionally injecting novel classes.
///
/// `namer` supplies names for injected classes; `None` falls back to
/// synthesized names. The input alphabet is copied and grown inside the
/// returned trace; the caller's alphabet is untouched.
pub fn simulate(
    initial: &ConsumptionPattern,
    alphabet: &ClassAlphabet,
    config: &SimulationConfig,
    namer: Option<NoveltyModel>,
) -> Result<SimulationTrace, MarkovError> {
    if config.method == Method::RandomBaseline {
        return Err(MarkovError::BaselineMethod);
    }
    initial.validate_against(alphabet)?;
    if initial.len() < 2 {
        return Err(MarkovError::InsufficientTransitions(initial.len()));
    }

    let mut alphabet = alphabet.clone();
    let mut rng = RandomSource::new(config.seed);
    let mut matrix = build_transition(initial, alphabet.len())?;
    let mut decision = init_decision(initial, alphabet.len())?;

    let mut events = initial.events.clone();
    let mut decisions = Vec::with_capacity(config.target_generated_length);
    let mut tags = Vec::with_capacity(config.target_generated_length);
    let mut matrices = vec![matrix.clone()];
    let mut expansions = Vec::new();
    let mut novelty = config
        .allow_new_classes
        .then(|| NoveltyState::for_initial(initial, &alphabet));
    let mut namer = namer.unwrap_or_default();

    for _ in 0..config.target_generated_length {
        let t = events.len();
        let candidate = decision.multiplied_by(&matrix)?;

        if let Some(state) = novelty.as_mut() {
            let p_new = state.new_class_probability(t)?;
            if trigger_new_class(p_new, &candidate) {
                let old_n = matrix.size();
                let pre_sparsity = matrix.sparsity();
                let (expanded, new_decision) = expand(&matrix, &candidate, &mut rng);
                let new_column_zeros = (0..old_n)
                    .filter(|&i| expanded.get(i, old_n) == 0.0)
                    .count();
                expansions.push(ExpansionRecord {
                    t,
                    pre_sparsity,
                    new_column_zeros,
                    new_column_entries: old_n,
                });
                alphabet.push(namer.next_name(&alphabet));
                state.record_addition(t, alphabet.len());
                matrix = expanded;
                decision = new_decision.clone();
                matrices.push(matrix.clone());
                events.push(ClassId(old_n));
                decisions.push(new_decision);
                tags.push(StepTag::NewClass);
                continue;
            }
        }

        let (next_decision, choice, tag) = match config.method {
            Method::Original => {
                let pick = candidate.argmax();
                (candidate, ClassId(pick), StepTag::Normal)
            }
            Method::Modified => {
                let len = events.len();
                let last_two = (Some(events[len - 2]), Some(events[len - 1]));
                resolve_modified(candidate, last_two, &mut rng)
            }
            Method::RandomBaseline => unreachable!("rejected above"),
        };
        events.push(choice);
        decisions.push(next_decision.clone());
        tags.push(tag);
        decision = next_decision;
    }

    Ok(SimulationTrace {
        pattern: ConsumptionPattern::new(events, PatternOrigin::Simulated),
        alphabet,
        initial_len: initial.len(),
        decisions,
        tags,
        matrices,
        expansions,
    })
}

/// Uniform-over-alphabet baseline pattern of `length` events.
///
/// `n_classes` must be at least 1 and `length` at least 1.
pub fn simulate_random_baseline(
    n_classes: usize,
    length: usize,
    rng: &mut RandomSource,
) -> ConsumptionPattern {
    assert!(n_classes >= 1, "baseline needs a non-empty alphabet");
    assert!(length >= 1, "baseline needs a positive length");
    let events = (0..length).map(|_| ClassId(rng.index(n_classes))).collect();
    ConsumptionPattern::new(events, PatternOrigin::Baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pattern(raw: &[usize]) -> ConsumptionPattern {
        ConsumptionPattern::new(
            raw.iter().map(|&i| ClassId(i)).collect(),
            PatternOrigin::Initial,
        )
    }

    fn alphabet(names: &[&str]) -> ClassAlphabet {
        ClassAlphabet::from_names(names.iter().copied()).unwrap()
    }

    fn longest_run(events: &[ClassId]) -> usize {
        let mut best = 0;
        let mut current = 0;
        let mut previous = None;
        for &e in events {
            if Some(e) == previous {
                current += 1;
            } else {
                current = 1;
                previous = Some(e);
            }
            best = best.max(current);
        }
        best
    }

    // --- build_transition ---

    #[test]
    fn build_alternating_pattern_gives_one_hot_rows() {
        let m = build_transition(&pattern(&[0, 1, 0, 1]), 2).unwrap();
        assert_eq!(m.row(0), &[0.0, 1.0]);
        assert_eq!(m.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn build_repairs_rows_with_no_observations() {
        // Only 0 -> 0 transitions are observed; rows 1 and 2 copy the mean
        // of the observed rows, here just row 0.
        let m = build_transition(&pattern(&[0, 0, 0]), 3).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[1.0, 0.0, 0.0]);
        assert_eq!(m.row(2), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn build_terminal_class_row_is_mean_of_observed_rows() {
        // C never transitions anywhere; its row becomes the mean of rows A
        // and B, which are [0,1,0] and [0,0,1].
        let m = build_transition(&pattern(&[0, 1, 2]), 3).unwrap();
        assert_eq!(m.row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 0.0, 1.0]);
        assert_eq!(m.row(2), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn build_counts_normalize_within_rows() {
        // From 0: three times to 1, once to 0. From 1: twice to 0, once to 1.
        let m = build_transition(&pattern(&[0, 1, 0, 0, 1, 1, 0, 1]), 2).unwrap();
        assert_eq!(m.row(0), &[0.25, 0.75]);
        assert_eq!(m.row(1), &[2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn build_rejects_short_patterns() {
        assert_eq!(
            build_transition(&pattern(&[0]), 2),
            Err(MarkovError::InsufficientTransitions(1))
        );
    }

    #[test]
    fn build_rejects_small_alphabets() {
        assert_eq!(
            build_transition(&pattern(&[0, 3]), 2),
            Err(MarkovError::AlphabetTooSmall {
                alphabet_size: 2,
                max_id: 3
            })
        );
    }

    // --- init_decision ---

    #[test]
    fn init_decision_is_one_hot_on_last_event() {
        let d = init_decision(&pattern(&[0, 1, 2, 1]), 4).unwrap();
        assert_eq!(d.probs(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn init_decision_needs_a_nonempty_pattern() {
        let empty = ConsumptionPattern::new(vec![], PatternOrigin::Initial);
        assert!(matches!(
            init_decision(&empty, 3),
            Err(MarkovError::Pattern(PatternError::Empty))
        ));
    }

    // --- decision array ---

    #[test]
    fn multiply_is_row_vector_times_matrix() {
        let m = TransitionMatrix::from_rows(vec![vec![0.25, 0.75], vec![0.5, 0.5]]);
        let d = DecisionArray::from_probs(vec![0.4, 0.6]);
        let out = d.multiplied_by(&m).unwrap();
        assert!((out.probs()[0] - (0.4 * 0.25 + 0.6 * 0.5)).abs() < 1e-15);
        assert!((out.probs()[1] - (0.4 * 0.75 + 0.6 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn multiply_checks_dimensions() {
        let m = TransitionMatrix::from_rows(vec![vec![1.0]]);
        let d = DecisionArray::from_probs(vec![0.5, 0.5]);
        assert_eq!(
            d.multiplied_by(&m),
            Err(MarkovError::DimensionMismatch {
                decision: 2,
                matrix: 1
            })
        );
    }

    #[test]
    fn argmax_prefers_first_on_exact_equality() {
        let d = DecisionArray::from_probs(vec![0.2, 0.4, 0.4]);
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn tied_indices_use_relative_tolerance() {
        let d = DecisionArray::from_probs(vec![0.5, 0.5 - 1e-13, 0.3]);
        assert_eq!(d.tied_max_indices(), vec![0, 1]);
        let d = DecisionArray::from_probs(vec![0.5, 0.5 - 1e-9, 0.3]);
        assert_eq!(d.tied_max_indices(), vec![0]);
    }

    // --- step_original ---

    #[test]
    fn original_step_follows_strongest_transition() {
        let m = build_transition(&pattern(&[0, 1, 0, 0, 1, 1, 0, 1]), 2).unwrap();
        let d = DecisionArray::one_hot(2, 0);
        let (next, choice) = step_original(&d, &m).unwrap();
        assert_eq!(choice, ClassId(1));
        assert_eq!(next.probs(), m.row(0));
    }

    #[test]
    fn original_step_breaks_exact_ties_by_first_index() {
        let m = TransitionMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let d = DecisionArray::one_hot(2, 1);
        let (_, choice) = step_original(&d, &m).unwrap();
        assert_eq!(choice, ClassId(0));
    }

    #[test]
    fn original_method_collapses_to_constant_tail() {
        // A strongly absorbing class: once the decision array mixes, class 0
        // dominates every product and the run repeats it forever.
        let initial = pattern(&[0, 0, 1, 0, 0, 1, 0, 0, 0, 2, 0]);
        let config = SimulationConfig::new(Method::Original, 7);
        let trace = simulate(&initial, &alphabet(&["a", "b", "c"]), &config, None).unwrap();
        let suffix = trace.generated_suffix();
        let tail = &suffix[50..];
        assert!(
            tail.iter().all(|&c| c == tail[0]),
            "expected a constant tail, got {:?}",
            &tail[..10]
        );
    }

    // --- step_modified ---

    #[test]
    fn modified_step_without_tie_or_repeat_is_plain_argmax() {
        let m = build_transition(&pattern(&[0, 1, 0, 0, 1, 1, 0, 1]), 2).unwrap();
        let d = DecisionArray::one_hot(2, 0);
        let mut rng = RandomSource::new(1);
        let (next, choice, tag) =
            step_modified(&d, &m, (Some(ClassId(0)), Some(ClassId(1))), &mut rng).unwrap();
        assert_eq!(tag, StepTag::Normal);
        assert_eq!(choice, ClassId(1));
        assert_eq!(next.probs(), m.row(0));
    }

    #[test]
    fn modified_step_randomizes_ties_and_resets_decision() {
        let m = TransitionMatrix::from_rows(vec![
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let d = DecisionArray::one_hot(3, 0);
        let mut seen = [false; 3];
        for seed in 0..50 {
            let mut rng = RandomSource::new(seed);
            let (next, choice, tag) = step_modified(&d, &m, (None, None), &mut rng).unwrap();
            assert_eq!(tag, StepTag::TieReset);
            assert!(choice.0 < 2, "tie winner must come from the tied set");
            seen[choice.0] = true;
            let mut expected = [0.0; 3];
            expected[choice.0] = 1.0;
            assert_eq!(next.probs(), &expected[..]);
        }
        assert!(seen[0] && seen[1], "both tied classes should win sometimes");
    }

    #[test]
    fn modified_step_vetoes_third_repeat() {
        // Class 0 absorbs: candidate argmax is 0, but the last two events
        // were already 0, so the step must pick something else.
        let m = TransitionMatrix::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ]);
        let d = DecisionArray::one_hot(3, 0);
        for seed in 0..50 {
            let mut rng = RandomSource::new(seed);
            let (next, choice, tag) =
                step_modified(&d, &m, (Some(ClassId(0)), Some(ClassId(0))), &mut rng).unwrap();
            assert_eq!(tag, StepTag::RepetitionReset);
            assert_ne!(choice, ClassId(0));
            assert_eq!(next.probs()[choice.0], 1.0);
        }
    }

    #[test]
    fn modified_step_allows_second_repeat() {
        let m = TransitionMatrix::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let d = DecisionArray::one_hot(2, 0);
        let mut rng = RandomSource::new(9);
        let (_, choice, tag) =
            step_modified(&d, &m, (Some(ClassId(1)), Some(ClassId(0))), &mut rng).unwrap();
        assert_eq!(tag, StepTag::Normal);
        assert_eq!(choice, ClassId(0));
    }

    #[test]
    fn modified_step_single_class_alphabet_cannot_avoid_repeats() {
        let m = TransitionMatrix::from_rows(vec![vec![1.0]]);
        let d = DecisionArray::one_hot(1, 0);
        let mut rng = RandomSource::new(0);
        let (_, choice, tag) =
            step_modified(&d, &m, (Some(ClassId(0)), Some(ClassId(0))), &mut rng).unwrap();
        assert_eq!(tag, StepTag::RepetitionReset);
        assert_eq!(choice, ClassId(0));
    }

    // --- simulate ---

    #[test]
    fn simulate_rejects_baseline_method() {
        let config = SimulationConfig::new(Method::RandomBaseline, 7);
        let err = simulate(&pattern(&[0, 1]), &alphabet(&["a", "b"]), &config, None).unwrap_err();
        assert_eq!(err, MarkovError::BaselineMethod);
    }

    #[test]
    fn simulate_produces_requested_length() {
        let config = SimulationConfig::new(Method::Modified, 42).with_length(25);
        let trace = simulate(
            &pattern(&[0, 1, 2, 0, 1]),
            &alphabet(&["a", "b", "c"]),
            &config,
            None,
        )
        .unwrap();
        assert_eq!(trace.generated_suffix().len(), 25);
        assert_eq!(trace.pattern.len(), 30);
        assert_eq!(trace.decisions.len(), 25);
        assert_eq!(trace.tags.len(), 25);
        assert_eq!(trace.initial_len, 5);
    }

    #[test]
    fn simulate_same_seed_same_output() {
        let config = SimulationConfig::new(Method::Modified, 1234).with_new_classes(true);
        let initial = pattern(&[0, 1, 2, 1, 0, 2]);
        let names = alphabet(&["a", "b", "c"]);
        let one = simulate(&initial, &names, &config, None).unwrap();
        let two = simulate(&initial, &names, &config, None).unwrap();
        assert_eq!(one.pattern, two.pattern);
        assert_eq!(one.tags, two.tags);
        assert_eq!(one.alphabet.names(), two.alphabet.names());
    }

    #[test]
    fn simulate_modified_never_makes_three_runs() {
        for seed in 0..20 {
            let config = SimulationConfig::new(Method::Modified, seed);
            let trace = simulate(
                &pattern(&[0, 0, 1, 0, 2, 2, 1]),
                &alphabet(&["a", "b", "c"]),
                &config,
                None,
            )
            .unwrap();
            assert!(
                longest_run(&trace.pattern.events[trace.initial_len.saturating_sub(2)..]) <= 2,
                "seed {seed} produced a three-run in the generated region"
            );
        }
    }

    #[test]
    fn simulate_novelty_grows_alphabet_and_matrix_together() {
        let config = SimulationConfig::new(Method::Modified, 7)
            .with_new_classes(true)
            .with_length(100);
        // The mixed transitions out of "b" keep the candidate maximum at
        // 0.5, low enough for the new-class probability to win eventually.
        let trace = simulate(
            &pattern(&[0, 1, 2, 0, 1, 0]),
            &alphabet(&["a", "b", "c"]),
            &config,
            None,
        )
        .unwrap();
        let added = trace.alphabet.len() - 3;
        assert_eq!(trace.expansions.len(), added);
        assert_eq!(trace.matrices.len(), added + 1);
        assert_eq!(trace.final_matrix().size(), trace.alphabet.len());
        assert_eq!(
            trace
                .tags
                .iter()
                .filter(|&&t| t == StepTag::NewClass)
                .count(),
            added
        );
        assert!(added >= 1, "a 100-step novelty run should add classes");
        for (k, expansion) in trace.expansions.iter().enumerate() {
            assert_eq!(expansion.new_column_entries, 3 + k);
        }
        // Every matrix that was in force stays row-stochastic.
        for m in &trace.matrices {
            for (i, sum) in m.row_sums().into_iter().enumerate() {
                assert!((sum - 1.0).abs() <= 1e-9, "row {i} sums to {sum}");
            }
        }
    }

    #[test]
    fn simulate_without_novelty_keeps_alphabet_fixed() {
        let config = SimulationConfig::new(Method::Modified, 5).with_length(100);
        let trace = simulate(
            &pattern(&[0, 1, 2, 0, 1, 2]),
            &alphabet(&["a", "b", "c"]),
            &config,
            None,
        )
        .unwrap();
        assert_eq!(trace.alphabet.len(), 3);
        assert!(trace.expansions.is_empty());
        assert_eq!(trace.matrices.len(), 1);
    }

    #[test]
    fn simulate_validates_pattern_against_alphabet() {
        let config = SimulationConfig::new(Method::Modified, 5);
        let err = simulate(&pattern(&[0, 7]), &alphabet(&["a", "b"]), &config, None).unwrap_err();
        assert!(matches!(err, MarkovError::Pattern(_)));
    }

    // --- baseline ---

    #[test]
    fn baseline_draws_are_roughly_uniform() {
        let mut rng = RandomSource::new(8);
        let p = simulate_random_baseline(3, 10_000, &mut rng);
        assert_eq!(p.origin, PatternOrigin::Baseline);
        let mut counts = [0usize; 3];
        for &e in &p.events {
            counts[e.0] += 1;
        }
        // Binomial(10000, 1/3) has sigma ~= 47; allow three sigma.
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - 10_000.0 / 3.0).abs() < 3.0 * 47.0 + 1.0,
                "class {i} count {c} is far from uniform"
            );
        }
    }

    #[test]
    fn baseline_uses_every_class_eventually() {
        let mut rng = RandomSource::new(3);
        let p = simulate_random_baseline(5, 200, &mut rng);
        assert_eq!(p.distinct_classes().len(), 5);
    }

    // --- trace serialization ---

    #[test]
    fn trace_jsonl_round_trips_pattern_and_tags() {
        let config = SimulationConfig::new(Method::Modified, 77)
            .with_new_classes(true)
            .with_length(40);
        let trace = simulate(
            &pattern(&[0, 1, 0, 2]),
            &alphabet(&["pizza", "sushi", "ramen"]),
            &config,
            None,
        )
        .unwrap();
        let jsonl = trace.to_jsonl();
        let (parsed, parsed_alphabet, parsed_tags) = parse_trace_jsonl(&jsonl).unwrap();
        assert_eq!(parsed.events, trace.pattern.events);
        assert_eq!(parsed_alphabet.names(), trace.alphabet.names());
        assert_eq!(&parsed_tags[..4], &[StepTag::Initial; 4]);
        assert_eq!(&parsed_tags[4..], &trace.tags[..]);
    }

    #[test]
    fn trace_jsonl_lines_are_self_describing() {
        let config = SimulationConfig::new(Method::Original, 1).with_length(2);
        let trace = simulate(&pattern(&[0, 1]), &alphabet(&["a", "b"]), &config, None).unwrap();
        let jsonl = trace.to_jsonl();
        let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
        assert_eq!(first["t"], 0);
        assert_eq!(first["class_name"], "a");
        assert_eq!(first["tag"], "initial");
    }

    #[test]
    fn parse_trace_rejects_out_of_order_records() {
        let text = "{\"t\":0,\"class_name\":\"a\",\"tag\":\"initial\"}\n{\"t\":2,\"class_name\":\"b\",\"tag\":\"normal\"}\n";
        assert!(matches!(
            parse_trace_jsonl(text),
            Err(MarkovError::InvalidTrace { line: 2, .. })
        ));
    }

    #[test]
    fn matrix_csv_has_name_header_and_probability_rows() {
        let m = build_transition(&pattern(&[0, 1, 0, 1]), 2).unwrap();
        let csv = m.to_csv(&alphabet(&["pizza", "sushi"])).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, vec!["pizza,sushi", "0,1", "1,0"]);
    }

    // --- properties ---

    proptest! {
        #[test]
        fn built_matrices_are_row_stochastic(
            raw in proptest::collection::vec(0usize..6, 2..40),
            extra in 0usize..3,
        ) {
            let max = raw.iter().copied().max().unwrap();
            let m = build_transition(&pattern(&raw), max + 1 + extra).unwrap();
            for sum in m.row_sums() {
                prop_assert!((sum - 1.0).abs() <= 1e-9);
            }
            for i in 0..m.size() {
                for j in 0..m.size() {
                    prop_assert!(m.get(i, j) >= 0.0);
                }
            }
        }

        #[test]
        fn propagation_conserves_probability_mass(
            raw in proptest::collection::vec(0usize..5, 2..30),
            steps in 1usize..120,
        ) {
            let max = raw.iter().copied().max().unwrap();
            let m = build_transition(&pattern(&raw), max + 1).unwrap();
            let mut d = init_decision(&pattern(&raw), max + 1).unwrap();
            for _ in 0..steps {
                d = d.multiplied_by(&m).unwrap();
            }
            let total: f64 = d.probs().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9, "mass drifted to {}", total);
        }

        #[test]
        fn argmax_is_invariant_under_positive_scaling(
            probs in proptest::collection::vec(0.0f64..1.0, 1..20),
            scale in 0.001f64..1000.0,
        ) {
            let d = DecisionArray::from_probs(probs.clone());
            let scaled = DecisionArray::from_probs(probs.iter().map(|v| v * scale).collect());
            prop_assert_eq!(d.argmax(), scaled.argmax());
        }

        #[test]
        fn modified_runs_never_contain_three_runs(
            raw in proptest::collection::vec(0usize..4, 2..12),
            seed in 0u64..500,
        ) {
            // A one-class alphabet has no alternative to repeat into; the
            // no-three-run guarantee needs at least two classes.
            prop_assume!(raw.iter().collect::<std::collections::HashSet<_>>().len() >= 2);
            let max = raw.iter().copied().max().unwrap();
            let names: Vec<String> = (0..max + 1).map(|i| format!("c{i}")).collect();
            let alphabet = ClassAlphabet::from_names(names).unwrap();
            let config = SimulationConfig::new(Method::Modified, seed).with_length(60);
            let trace = simulate(&pattern(&raw), &alphabet, &config, None).unwrap();
            // Runs may straddle the initial/generated boundary; only the
            // generated region plus its two-event lookback must be clean.
            let start = trace.initial_len.saturating_sub(2);
            prop_assert!(longest_run(&trace.pattern.events[start..]) <= 2);
        }
    }
}
