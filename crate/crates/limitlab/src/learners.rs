//! Executable learner models and the trace runner.
//!
//! Three learner shapes are supported. A state-driven (BMS) learner maps a
//! state and the current datum to a next state and a hypothesis, with both
//! components produced by a single partial step. An iterative learner maps
//! its previous hypothesis and the current datum to a next hypothesis. A
//! sequence learner consumes whole finite sequences; it exists to host
//! full-history constructions and only supports horizon-bounded runs.
//!
//! Traces record the learning sequence on an eventually periodic text. For
//! state-driven learners the runner stops as soon as a (state, tail-offset)
//! pair repeats, which pins down the whole infinite future; for iterative
//! learners the key is (hypothesis, tail-offset). Partiality surfaces as an
//! explicit position-tagged divergence, not as a panic.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hypspace::{Hypothesis, LearnerId};
use crate::model::{Datum, FinSeq, Text};
use crate::transforms::{MindChangeLog, VisitLog};

/// A learner step was undefined at the given input position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize)]
#[error("learner step undefined at position {position}")]
pub struct Divergence {
    pub position: usize,
}

/// Errors from running a learner over a text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error(transparent)]
    Divergence(#[from] Divergence),
    #[error("budget {budget} is too small, need at least {required} (head length + 1)")]
    BudgetTooSmall { budget: usize, required: usize },
}

/// Errors from building a step table.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("duplicate table row for state {state} on {datum}")]
    DuplicateRow { state: String, datum: String },
}

/// The trace is not from a state-driven learner.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace of `{0}` is not from a state-driven learner")]
pub struct NotBmsTrace(pub LearnerId);

/// A memory state. Plain learners use naturals; compiled learners use
/// composite values, compared and serialized structurally.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum State {
    Nat(u64),
    /// The state is a hypothesis value (used when hypotheses serve as states).
    Hyp(Box<Hypothesis>),
    /// A source state paired with the log of first-time state entries.
    WithVisit {
        base: Box<State>,
        visit: VisitLog,
    },
    /// A source state paired with the log of mind changes.
    WithMc {
        base: Box<State>,
        mc: MindChangeLog,
    },
}

impl State {
    pub fn nat(n: u64) -> State {
        State::Nat(n)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Nat(n) => write!(f, "{n}"),
            State::Hyp(h) => write!(f, "st[{h}]"),
            State::WithVisit { base, visit } => {
                write!(f, "({base};visited {})", visit.entries().len())
            }
            State::WithMc { base, mc } => write!(f, "({base};changes {})", mc.entries().len()),
        }
    }
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            State::Nat(n) => serializer.serialize_u64(*n),
            State::Hyp(h) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("hyp", h)?;
                map.end()
            }
            State::WithVisit { base, visit } => {
                let mut map = serializer.serialize_map(Some(2))?;
                map.serialize_entry("base", base)?;
                map.serialize_entry("visit", visit.entries())?;
                map.end()
            }
            State::WithMc { base, mc } => {
                let mut map = serializer.serialize_map(Some(2))?;
                map.serialize_entry("base", base)?;
                map.serialize_entry("mc", mc.entries())?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        state_from_value(&value).map_err(D::Error::custom)
    }
}

fn state_from_value(v: &serde_json::Value) -> Result<State, String> {
    match v {
        serde_json::Value::Number(n) => n
            .as_u64()
            .map(State::Nat)
            .ok_or_else(|| format!("state out of range: {n}")),
        serde_json::Value::Object(map) => {
            if map.len() == 1 && map.contains_key("hyp") {
                let h: Hypothesis =
                    serde_json::from_value(map["hyp"].clone()).map_err(|e| e.to_string())?;
                return Ok(State::Hyp(Box::new(h)));
            }
            if map.len() == 2 && map.contains_key("base") && map.contains_key("visit") {
                let base = state_from_value(&map["base"])?;
                let entries: Vec<(State, Datum)> =
                    serde_json::from_value(map["visit"].clone()).map_err(|e| e.to_string())?;
                let visit = VisitLog::from_entries(entries).map_err(|e| e.to_string())?;
                return Ok(State::WithVisit {
                    base: Box::new(base),
                    visit,
                });
            }
            if map.len() == 2 && map.contains_key("base") && map.contains_key("mc") {
                let base = state_from_value(&map["base"])?;
                let entries: Vec<(Hypothesis, Datum)> =
                    serde_json::from_value(map["mc"].clone()).map_err(|e| e.to_string())?;
                let mc = MindChangeLog::from_entries(entries).map_err(|e| e.to_string())?;
                return Ok(State::WithMc {
                    base: Box::new(base),
                    mc,
                });
            }
            Err(format!("bad state object: {v}"))
        }
        other => Err(format!("bad state: {other}")),
    }
}

/// A datum pattern in a table row: an exact datum or the fall-through `*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DatumPat {
    Exact(Datum),
    Any,
}

impl Serialize for DatumPat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            DatumPat::Exact(d) => d.serialize(serializer),
            DatumPat::Any => serializer.serialize_str("*"),
        }
    }
}

impl<'de> Deserialize<'de> for DatumPat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        if let serde_json::Value::String(s) = &value {
            if s == "*" {
                return Ok(DatumPat::Any);
            }
        }
        serde_json::from_value::<Datum>(value)
            .map(DatumPat::Exact)
            .map_err(D::Error::custom)
    }
}

/// One transition of a state-driven step table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BmsRow {
    pub state: State,
    pub datum: DatumPat,
    pub next: State,
    pub hyp: Hypothesis,
}

/// A finite step table for a state-driven learner. Exact rows take
/// precedence over `*` rows of the same state.
#[derive(Debug, Clone)]
pub struct BmsTable {
    rows: Vec<BmsRow>,
    exact: BTreeMap<(State, Datum), usize>,
    wildcard: BTreeMap<State, usize>,
}

impl BmsTable {
    pub fn new(rows: Vec<BmsRow>) -> Result<Self, TableError> {
        let mut exact = BTreeMap::new();
        let mut wildcard = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            match &row.datum {
                DatumPat::Exact(d) => {
                    if exact.insert((row.state.clone(), *d), i).is_some() {
                        return Err(TableError::DuplicateRow {
                            state: row.state.to_string(),
                            datum: d.to_string(),
                        });
                    }
                }
                DatumPat::Any => {
                    if wildcard.insert(row.state.clone(), i).is_some() {
                        return Err(TableError::DuplicateRow {
                            state: row.state.to_string(),
                            datum: "*".to_string(),
                        });
                    }
                }
            }
        }
        Ok(BmsTable {
            rows,
            exact,
            wildcard,
        })
    }

    pub fn rows(&self) -> &[BmsRow] {
        &self.rows
    }

    pub fn lookup(&self, state: &State, datum: &Datum) -> Option<&BmsRow> {
        self.exact
            .get(&(state.clone(), *datum))
            .or_else(|| self.wildcard.get(state))
            .map(|&i| &self.rows[i])
    }

    /// Distinct states mentioned anywhere in the table.
    pub fn state_count(&self) -> usize {
        let mut states = BTreeSet::new();
        for row in &self.rows {
            states.insert(&row.state);
            states.insert(&row.next);
        }
        states.len()
    }

    /// True iff some row emits the no-hypothesis marker.
    pub fn emits_none(&self) -> bool {
        self.rows.iter().any(|r| r.hyp.is_none())
    }
}

type DerivedBmsFn = dyn Fn(&State, &Datum) -> Option<(State, Hypothesis)> + Send + Sync;

enum BmsStep {
    Table(BmsTable),
    Derived {
        kind: &'static str,
        f: Arc<DerivedBmsFn>,
    },
}

/// A state-driven learner: a designated start state and a deterministic
/// partial step producing the next state and the emitted hypothesis together.
pub struct BmsLearner {
    id: LearnerId,
    start: State,
    step: BmsStep,
}

impl fmt::Debug for BmsLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.step {
            BmsStep::Table(t) => format!("table({} rows)", t.rows().len()),
            BmsStep::Derived { kind, .. } => format!("derived({kind})"),
        };
        write!(f, "BmsLearner({}, start {}, {kind})", self.id, self.start)
    }
}

impl BmsLearner {
    pub fn from_table(id: LearnerId, start: State, table: BmsTable) -> Arc<Self> {
        Arc::new(BmsLearner {
            id,
            start,
            step: BmsStep::Table(table),
        })
    }

    pub fn derived<F>(id: LearnerId, start: State, kind: &'static str, f: F) -> Arc<Self>
    where
        F: Fn(&State, &Datum) -> Option<(State, Hypothesis)> + Send + Sync + 'static,
    {
        Arc::new(BmsLearner {
            id,
            start,
            step: BmsStep::Derived {
                kind,
                f: Arc::new(f),
            },
        })
    }

    pub fn id(&self) -> &LearnerId {
        &self.id
    }

    pub fn start(&self) -> &State {
        &self.start
    }

    pub fn table(&self) -> Option<&BmsTable> {
        match &self.step {
            BmsStep::Table(t) => Some(t),
            BmsStep::Derived { .. } => None,
        }
    }

    /// One step of the partial transition map; `None` means undefined.
    pub fn step(&self, state: &State, datum: &Datum) -> Option<(State, Hypothesis)> {
        match &self.step {
            BmsStep::Table(t) => t
                .lookup(state, datum)
                .map(|r| (r.next.clone(), r.hyp.clone())),
            BmsStep::Derived { f, .. } => f(state, datum),
        }
    }
}

/// A hypothesis pattern in an iterative table row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HypPat {
    Is(Hypothesis),
    Any,
}

impl Serialize for HypPat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            HypPat::Is(h) => h.serialize(serializer),
            HypPat::Any => serializer.serialize_str("*"),
        }
    }
}

impl<'de> Deserialize<'de> for HypPat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        if let serde_json::Value::String(s) = &value {
            if s == "*" {
                return Ok(HypPat::Any);
            }
        }
        serde_json::from_value::<Hypothesis>(value)
            .map(HypPat::Is)
            .map_err(D::Error::custom)
    }
}

/// One transition of an iterative step table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterRow {
    pub from: HypPat,
    pub datum: DatumPat,
    pub hyp: Hypothesis,
}

/// A finite step table for an iterative learner. Lookup prefers exact
/// hypothesis matches over `*`, and exact datum matches over `*`.
#[derive(Debug, Clone)]
pub struct IterTable {
    rows: Vec<IterRow>,
}

impl IterTable {
    pub fn new(rows: Vec<IterRow>) -> Result<Self, TableError> {
        let mut seen = BTreeSet::new();
        for row in &rows {
            if !seen.insert((row.from.clone(), row.datum.clone())) {
                return Err(TableError::DuplicateRow {
                    state: format!("{:?}", row.from),
                    datum: format!("{:?}", row.datum),
                });
            }
        }
        Ok(IterTable { rows })
    }

    pub fn rows(&self) -> &[IterRow] {
        &self.rows
    }

    pub fn lookup(&self, from: &Hypothesis, datum: &Datum) -> Option<&IterRow> {
        let matches = |row: &&IterRow| {
            let hyp_ok = match &row.from {
                HypPat::Is(h) => h == from,
                HypPat::Any => true,
            };
            let datum_ok = match &row.datum {
                DatumPat::Exact(d) => d == datum,
                DatumPat::Any => true,
            };
            hyp_ok && datum_ok
        };
        let rank = |row: &IterRow| {
            let hyp_exact = matches!(row.from, HypPat::Is(_));
            let datum_exact = matches!(row.datum, DatumPat::Exact(_));
            match (hyp_exact, datum_exact) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            }
        };
        self.rows.iter().filter(matches).min_by_key(|r| rank(r))
    }

    pub fn emits_none(&self) -> bool {
        self.rows.iter().any(|r| r.hyp.is_none())
    }
}

type DerivedIterFn = dyn Fn(&Hypothesis, &Datum) -> Option<Hypothesis> + Send + Sync;

enum IterStep {
    Table(IterTable),
    Derived {
        kind: &'static str,
        f: Arc<DerivedIterFn>,
    },
}

/// An iterative learner: next hypothesis from previous hypothesis and datum.
pub struct IterLearner {
    id: LearnerId,
    step: IterStep,
}

impl fmt::Debug for IterLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.step {
            IterStep::Table(t) => format!("table({} rows)", t.rows().len()),
            IterStep::Derived { kind, .. } => format!("derived({kind})"),
        };
        write!(f, "IterLearner({}, {kind})", self.id)
    }
}

impl IterLearner {
    pub fn from_table(id: LearnerId, table: IterTable) -> Arc<Self> {
        Arc::new(IterLearner {
            id,
            step: IterStep::Table(table),
        })
    }

    pub fn derived<F>(id: LearnerId, kind: &'static str, f: F) -> Arc<Self>
    where
        F: Fn(&Hypothesis, &Datum) -> Option<Hypothesis> + Send + Sync + 'static,
    {
        Arc::new(IterLearner {
            id,
            step: IterStep::Derived {
                kind,
                f: Arc::new(f),
            },
        })
    }

    pub fn id(&self) -> &LearnerId {
        &self.id
    }

    pub fn table(&self) -> Option<&IterTable> {
        match &self.step {
            IterStep::Table(t) => Some(t),
            IterStep::Derived { .. } => None,
        }
    }

    pub fn step(&self, from: &Hypothesis, datum: &Datum) -> Option<Hypothesis> {
        match &self.step {
            IterStep::Table(t) => t.lookup(from, datum).map(|r| r.hyp.clone()),
            IterStep::Derived { f, .. } => f(from, datum),
        }
    }
}

type SeqFn = dyn Fn(&FinSeq) -> Result<Hypothesis, Divergence> + Send + Sync;

/// A learner on whole finite sequences. No cycle detection is possible, so
/// traces of sequence learners always end budget-exhausted.
pub struct SeqLearner {
    id: LearnerId,
    f: Arc<SeqFn>,
}

impl fmt::Debug for SeqLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SeqLearner({})", self.id)
    }
}

impl SeqLearner {
    pub fn new<F>(id: LearnerId, f: F) -> Arc<Self>
    where
        F: Fn(&FinSeq) -> Result<Hypothesis, Divergence> + Send + Sync + 'static,
    {
        Arc::new(SeqLearner { id, f: Arc::new(f) })
    }

    pub fn id(&self) -> &LearnerId {
        &self.id
    }

    pub fn output(&self, seq: &FinSeq) -> Result<Hypothesis, Divergence> {
        (self.f)(seq)
    }
}

/// Any of the three learner shapes.
#[derive(Debug, Clone)]
pub enum Learner {
    Bms(Arc<BmsLearner>),
    Iter(Arc<IterLearner>),
    Seq(Arc<SeqLearner>),
}

impl Learner {
    pub fn id(&self) -> &LearnerId {
        match self {
            Learner::Bms(m) => m.id(),
            Learner::Iter(m) => m.id(),
            Learner::Seq(m) => m.id(),
        }
    }
}

/// Folds a state-driven learner over a sequence from the given state.
/// Returns the final state and the last emitted hypothesis; the empty
/// sequence yields the start state untouched and no hypothesis.
pub fn bms_run(
    m: &BmsLearner,
    from: &State,
    seq: &FinSeq,
) -> Result<(State, Hypothesis), Divergence> {
    let mut state = from.clone();
    let mut hyp = Hypothesis::None;
    for (position, datum) in seq.iter().enumerate() {
        let (next, h) = m.step(&state, datum).ok_or(Divergence { position })?;
        state = next;
        hyp = h;
    }
    Ok((state, hyp))
}

/// Folds an iterative learner over a sequence starting from no hypothesis.
pub fn iter_run(m: &IterLearner, seq: &FinSeq) -> Result<Hypothesis, Divergence> {
    let mut hyp = Hypothesis::None;
    for (position, datum) in seq.iter().enumerate() {
        hyp = m.step(&hyp, datum).ok_or(Divergence { position })?;
    }
    Ok(hyp)
}

/// Which learner shape produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Bms,
    Iter,
    Seq,
}

/// How a trace ended: a detected cycle or budget exhaustion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleSummary {
    /// Steps `pre_len..pre_len+period` repeat forever.
    Cycle {
        pre_len: usize,
        period: usize,
    },
    BudgetExhausted,
}

impl CycleSummary {
    pub fn is_cycle(&self) -> bool {
        matches!(self, CycleSummary::Cycle { .. })
    }
}

/// One record of a learning sequence: record `time` corresponds to the
/// prefix of length `time + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub time: usize,
    pub datum: Datum,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_before: Option<State>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_after: Option<State>,
    pub hypothesis: Hypothesis,
}

/// A timestamped learning sequence with its cycle summary and, for
/// state-driven learners, the distinct states entered.
#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub learner: LearnerId,
    pub kind: LearnerKind,
    pub text: Text,
    pub budget: usize,
    pub steps: Vec<TraceStep>,
    pub cycle: CycleSummary,
    /// Distinct states entered (in order of first entry); state-driven only.
    pub visited: Vec<State>,
}

/// Verdict of the finite-state-usage question for a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StateUsage {
    Finite,
    Undetermined,
}

/// Runs a learner over a text for at most `budget` steps.
pub fn trace(learner: &Learner, text: &Text, budget: usize) -> Result<Trace, TraceError> {
    let required = text.head().len() + 1;
    if budget < required {
        return Err(TraceError::BudgetTooSmall { budget, required });
    }
    match learner {
        Learner::Bms(m) => trace_bms(m, text, budget),
        Learner::Iter(m) => trace_iter(m, text, budget),
        Learner::Seq(m) => trace_seq(m, text, budget),
    }
}

fn tail_offset(text: &Text, pos: usize) -> Option<usize> {
    let head = text.head().len();
    (pos >= head).then(|| (pos - head) % text.tail().len())
}

fn trace_bms(m: &Arc<BmsLearner>, text: &Text, budget: usize) -> Result<Trace, TraceError> {
    let mut steps = Vec::new();
    let mut state = m.start().clone();
    let mut keys: HashMap<(State, usize), usize> = HashMap::new();
    let mut visited: Vec<State> = Vec::new();
    let mut visited_set: BTreeSet<State> = BTreeSet::new();
    let mut cycle = CycleSummary::BudgetExhausted;

    for t in 0..budget {
        if let Some(off) = tail_offset(text, t) {
            if let Some(&t0) = keys.get(&(state.clone(), off)) {
                cycle = CycleSummary::Cycle {
                    pre_len: t0,
                    period: t - t0,
                };
                break;
            }
            keys.insert((state.clone(), off), t);
        }
        let datum = text.at(t);
        let (next, hyp) = m.step(&state, &datum).ok_or(Divergence { position: t })?;
        steps.push(TraceStep {
            time: t,
            datum,
            state_before: Some(state),
            state_after: Some(next.clone()),
            hypothesis: hyp,
        });
        if visited_set.insert(next.clone()) {
            visited.push(next.clone());
        }
        state = next;
    }

    Ok(Trace {
        learner: m.id().clone(),
        kind: LearnerKind::Bms,
        text: text.clone(),
        budget,
        steps,
        cycle,
        visited,
    })
}

fn trace_iter(m: &Arc<IterLearner>, text: &Text, budget: usize) -> Result<Trace, TraceError> {
    let mut steps = Vec::new();
    let mut hyp = Hypothesis::None;
    let mut keys: HashMap<(Hypothesis, usize), usize> = HashMap::new();
    let mut cycle = CycleSummary::BudgetExhausted;

    for t in 0..budget {
        if let Some(off) = tail_offset(text, t) {
            if let Some(&t0) = keys.get(&(hyp.clone(), off)) {
                cycle = CycleSummary::Cycle {
                    pre_len: t0,
                    period: t - t0,
                };
                break;
            }
            keys.insert((hyp.clone(), off), t);
        }
        let datum = text.at(t);
        let next = m.step(&hyp, &datum).ok_or(Divergence { position: t })?;
        steps.push(TraceStep {
            time: t,
            datum,
            state_before: None,
            state_after: None,
            hypothesis: next.clone(),
        });
        hyp = next;
    }

    Ok(Trace {
        learner: m.id().clone(),
        kind: LearnerKind::Iter,
        text: text.clone(),
        budget,
        steps,
        cycle,
        visited: Vec::new(),
    })
}

fn trace_seq(m: &Arc<SeqLearner>, text: &Text, budget: usize) -> Result<Trace, TraceError> {
    let mut steps = Vec::new();
    for t in 0..budget {
        let hyp = m.output(&text.expand(t + 1))?;
        steps.push(TraceStep {
            time: t,
            datum: text.at(t),
            state_before: None,
            state_after: None,
            hypothesis: hyp,
        });
    }
    Ok(Trace {
        learner: m.id().clone(),
        kind: LearnerKind::Seq,
        text: text.clone(),
        budget,
        steps,
        cycle: CycleSummary::BudgetExhausted,
        visited: Vec::new(),
    })
}

/// The set of states the trace entered, with a verdict on whether the set is
/// known to be the whole (infinite-run) set.
pub fn visited_states(tr: &Trace) -> Result<(BTreeSet<State>, StateUsage), NotBmsTrace> {
    if tr.kind != LearnerKind::Bms {
        return Err(NotBmsTrace(tr.learner.clone()));
    }
    let usage = if tr.cycle.is_cycle() {
        StateUsage::Finite
    } else {
        StateUsage::Undetermined
    };
    Ok((tr.visited.iter().cloned().collect(), usage))
}

// ---------------------------------------------------------------------------
// Learner files
// ---------------------------------------------------------------------------

/// On-disk learner description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnerFile {
    Bms {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<State>,
        rows: Vec<BmsRow>,
    },
    Iter {
        id: String,
        rows: Vec<IterRow>,
    },
}

/// Errors from loading a learner file.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot parse learner file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl LearnerFile {
    pub fn into_learner(self) -> Result<Learner, LoadError> {
        match self {
            LearnerFile::Bms { id, start, rows } => {
                let table = BmsTable::new(rows)?;
                Ok(Learner::Bms(BmsLearner::from_table(
                    LearnerId(id),
                    start.unwrap_or(State::Nat(0)),
                    table,
                )))
            }
            LearnerFile::Iter { id, rows } => {
                let table = IterTable::new(rows)?;
                Ok(Learner::Iter(IterLearner::from_table(LearnerId(id), table)))
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("learner file serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fixtures;
    use crate::model::seq;
    use proptest::prelude::*;

    fn multiples() -> Arc<BmsLearner> {
        fixtures::multiples_learner()
    }

    #[test]
    fn bms_run_empty_keeps_start_and_no_hypothesis() {
        let m = multiples();
        let (s, h) = bms_run(&m, m.start(), &FinSeq::new()).unwrap();
        assert_eq!(s, State::Nat(0));
        assert_eq!(h, Hypothesis::None);
    }

    #[test]
    fn bms_run_hand_folds() {
        let m = multiples();
        // 4 keeps state 0 answering p4, 8 likewise
        let (s, h) = bms_run(&m, m.start(), &seq(&[4, 8])).unwrap();
        assert_eq!(s, State::Nat(0));
        assert_eq!(h, Hypothesis::base("p4"));
        // 2 moves to the absorbing state answering p2
        let (s, h) = bms_run(&m, m.start(), &seq(&[4, 2])).unwrap();
        assert_eq!(s, State::Nat(1));
        assert_eq!(h, Hypothesis::base("p2"));
    }

    #[test]
    fn bms_run_divergence_is_positioned() {
        let m = multiples();
        assert_eq!(
            bms_run(&m, m.start(), &seq(&[4, 7])),
            Err(Divergence { position: 1 })
        );
    }

    #[test]
    fn iter_run_base_cases() {
        let it = fixtures::multiples_iter_learner();
        assert_eq!(iter_run(&it, &FinSeq::new()).unwrap(), Hypothesis::None);
        assert_eq!(iter_run(&it, &seq(&[4])).unwrap(), Hypothesis::base("p4"));
        assert_eq!(iter_run(&it, &seq(&[7])), Err(Divergence { position: 0 }));
    }

    #[test]
    fn trace_finds_absorbing_cycle() {
        let m = Learner::Bms(multiples());
        let text: Text = "4,2|#".parse().unwrap();
        let tr = trace(&m, &text, 64).unwrap();
        assert_eq!(
            tr.cycle,
            CycleSummary::Cycle {
                pre_len: 2,
                period: 1
            }
        );
        let last = tr.steps.last().unwrap();
        assert_eq!(last.state_after, Some(State::Nat(1)));
        assert_eq!(last.hypothesis, Hypothesis::base("p2"));
        let (states, usage) = visited_states(&tr).unwrap();
        assert_eq!(states, [State::Nat(0), State::Nat(1)].into_iter().collect());
        assert_eq!(usage, StateUsage::Finite);
    }

    #[test]
    fn trace_counter_exhausts_budget() {
        let m = Learner::Bms(fixtures::counter_learner());
        let text = Text::with_pause_tail(FinSeq::new());
        let tr = trace(&m, &text, 64).unwrap();
        assert_eq!(tr.cycle, CycleSummary::BudgetExhausted);
        let (states, usage) = visited_states(&tr).unwrap();
        assert_eq!(states.len(), 64);
        assert_eq!(usage, StateUsage::Undetermined);
    }

    #[test]
    fn trace_periodic_data_tail() {
        let m = Learner::Bms(multiples());
        let text: Text = "4|4".parse().unwrap();
        let tr = trace(&m, &text, 64).unwrap();
        assert_eq!(
            tr.cycle,
            CycleSummary::Cycle {
                pre_len: 1,
                period: 1
            }
        );
        assert!(tr
            .steps
            .iter()
            .all(|s| s.hypothesis == Hypothesis::base("p4")));
    }

    #[test]
    fn trace_pause_only_text() {
        let m = Learner::Bms(multiples());
        let text = Text::with_pause_tail(FinSeq::new());
        let tr = trace(&m, &text, 64).unwrap();
        assert_eq!(
            tr.cycle,
            CycleSummary::Cycle {
                pre_len: 0,
                period: 1
            }
        );
        let (states, _) = visited_states(&tr).unwrap();
        assert_eq!(states, [State::Nat(0)].into_iter().collect());
    }

    #[test]
    fn trace_budget_precondition() {
        let m = Learner::Bms(multiples());
        let text: Text = "4,2|#".parse().unwrap();
        assert!(matches!(
            trace(&m, &text, 2),
            Err(TraceError::BudgetTooSmall { required: 3, .. })
        ));
    }

    #[test]
    fn visited_states_rejects_iter_traces() {
        let it = Learner::Iter(fixtures::multiples_iter_learner());
        let tr = trace(&it, &"4|#".parse().unwrap(), 16).unwrap();
        assert!(visited_states(&tr).is_err());
    }

    #[test]
    fn wildcard_rows_fall_through() {
        let rows = vec![
            BmsRow {
                state: State::Nat(0),
                datum: DatumPat::Exact(Datum::Num(1)),
                next: State::Nat(1),
                hyp: Hypothesis::base("p4"),
            },
            BmsRow {
                state: State::Nat(0),
                datum: DatumPat::Any,
                next: State::Nat(0),
                hyp: Hypothesis::base("p2"),
            },
        ];
        let m = BmsLearner::from_table("w".into(), State::Nat(0), BmsTable::new(rows).unwrap());
        assert_eq!(
            m.step(&State::Nat(0), &Datum::Num(1)).unwrap().0,
            State::Nat(1)
        );
        assert_eq!(
            m.step(&State::Nat(0), &Datum::Num(9)).unwrap().0,
            State::Nat(0)
        );
        assert!(m.step(&State::Nat(1), &Datum::Num(1)).is_none());
    }

    #[test]
    fn values_are_shareable_across_tasks() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<BmsLearner>();
        assert_send_sync::<IterLearner>();
        assert_send_sync::<SeqLearner>();
        assert_send_sync::<Trace>();
        assert_send_sync::<crate::hypspace::EvalContext>();
        assert_send_sync::<crate::model::Text>();
    }

    #[test]
    fn traces_run_concurrently_over_shared_learners() {
        let m = multiples();
        let literals = ["4,2|#", "0,4,8,12,16|#", "|#", "2|2"];
        let handles: Vec<_> = literals
            .iter()
            .map(|literal| {
                let m = m.clone();
                let text: Text = literal.parse().unwrap();
                std::thread::spawn(move || trace(&Learner::Bms(m), &text, 64).unwrap())
            })
            .collect();
        for (handle, literal) in handles.into_iter().zip(literals) {
            let concurrent = handle.join().unwrap();
            let sequential =
                trace(&Learner::Bms(m.clone()), &literal.parse().unwrap(), 64).unwrap();
            assert_eq!(concurrent.steps, sequential.steps);
            assert_eq!(concurrent.cycle, sequential.cycle);
        }
    }

    #[test]
    fn duplicate_rows_rejected() {
        let row = BmsRow {
            state: State::Nat(0),
            datum: DatumPat::Exact(Datum::Num(1)),
            next: State::Nat(0),
            hyp: Hypothesis::base("p4"),
        };
        assert!(BmsTable::new(vec![row.clone(), row]).is_err());
    }

    #[test]
    fn learner_file_round_trip() {
        let text = r##"{
            "kind": "bms",
            "id": "toy",
            "rows": [
                {"state": 0, "datum": 4, "next": 0, "hyp": "p4"},
                {"state": 0, "datum": "#", "next": 0, "hyp": "p4"},
                {"state": 0, "datum": "*", "next": 1, "hyp": "?"}
            ]
        }"##;
        let file = LearnerFile::from_json(text).unwrap();
        let learner = file.clone().into_learner().unwrap();
        let Learner::Bms(m) = &learner else {
            panic!("expected bms")
        };
        assert_eq!(
            m.step(&State::Nat(0), &Datum::Num(4)).unwrap().1,
            Hypothesis::base("p4")
        );
        assert_eq!(
            m.step(&State::Nat(0), &Datum::Num(3)).unwrap().1,
            Hypothesis::None
        );
        let back = LearnerFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back.to_json(), file.to_json());
    }

    fn fixture_text_strategy() -> impl Strategy<Value = Text> {
        let datum = prop_oneof![
            3 => proptest::sample::select(vec![0u32, 2, 4, 6, 8, 12, 16]).prop_map(Datum::Num),
            1 => Just(Datum::Pause),
        ];
        (
            proptest::collection::vec(datum.clone(), 0..6),
            proptest::collection::vec(datum, 1..3),
        )
            .prop_map(|(h, t)| Text::new(FinSeq::from(h), FinSeq::from(t)).unwrap())
    }

    proptest! {
        #[test]
        fn trace_is_deterministic(text in fixture_text_strategy(), budget in 8usize..40) {
            let m = Learner::Bms(multiples());
            let budget = budget.max(text.head().len() + 1);
            let a = trace(&m, &text, budget).unwrap();
            let b = trace(&m, &text, budget).unwrap();
            prop_assert_eq!(a.steps, b.steps);
            prop_assert_eq!(a.cycle, b.cycle);
        }

        #[test]
        fn trace_hypotheses_cohere_with_runs(text in fixture_text_strategy(), budget in 8usize..40) {
            let m = multiples();
            let budget = budget.max(text.head().len() + 1);
            let tr = trace(&Learner::Bms(m.clone()), &text, budget).unwrap();
            for step in &tr.steps {
                let (state, hyp) = bms_run(&m, m.start(), &text.expand(step.time + 1)).unwrap();
                prop_assert_eq!(&hyp, &step.hypothesis);
                prop_assert_eq!(Some(state), step.state_after.clone());
            }
        }

        #[test]
        fn detected_cycles_replay(text in fixture_text_strategy(), budget in 8usize..40) {
            let m = multiples();
            let budget = budget.max(text.head().len() + 1);
            let tr = trace(&Learner::Bms(m.clone()), &text, budget).unwrap();
            if let CycleSummary::Cycle { pre_len, period } = tr.cycle {
                // replaying one more period reproduces states and hypotheses
                let mut state = m.start().clone();
                let horizon = pre_len + 2 * period;
                for t in 0..horizon {
                    let (next, hyp) = m.step(&state, &text.at(t)).unwrap();
                    if t >= pre_len {
                        let original = &tr.steps[pre_len + (t - pre_len) % period];
                        prop_assert_eq!(&hyp, &original.hypothesis);
                        prop_assert_eq!(Some(&next), original.state_after.as_ref());
                    }
                    state = next;
                }
            }
        }

        #[test]
        fn finite_verdicts_match_long_simulation(text in fixture_text_strategy(), budget in 8usize..24) {
            let m = multiples();
            let budget = budget.max(text.head().len() + 1);
            let tr = trace(&Learner::Bms(m.clone()), &text, budget).unwrap();
            if tr.cycle.is_cycle() {
                let mut state = m.start().clone();
                let mut long: BTreeSet<State> = BTreeSet::new();
                for t in 0..budget * 10 {
                    let (next, _) = m.step(&state, &text.at(t)).unwrap();
                    long.insert(next.clone());
                    state = next;
                }
                let (recorded, usage) = visited_states(&tr).unwrap();
                prop_assert_eq!(usage, StateUsage::Finite);
                prop_assert_eq!(recorded, long);
            }
        }
    }
}
