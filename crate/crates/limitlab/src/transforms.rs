//! Learner-to-learner compilers.
//!
//! Four constructions live here, each turning one learner shape into another
//! while preserving behaviour in a precise sense:
//!
//! - [`it_to_bms`]: an iterative learner becomes a state-driven one by using
//!   hypothesis values themselves as states. Outputs agree exactly on every
//!   nonempty sequence.
//! - [`bms_to_it`]: a state-driven learner becomes an iterative one. The
//!   iterative learner carries a log of first-time state entries in the pad
//!   payload of its own hypothesis, and simulates the source on an
//!   equivalent, pumped text: whenever the source would fall back into an
//!   already visited state, the data that originally led from that state to
//!   the newest one is replayed, so the tracked state is always the last
//!   first-time-visited one.
//! - [`state_decisive`]: re-packages a state-driven learner over composite
//!   (state, visit-log) states so that it never re-enters a state it has
//!   left, without changing the denotations of its conjectures.
//! - [`strongly_conservative`] and [`witness_based`]: a two-stage pipeline.
//!   The first stage wraps every conjecture in a guarded index that
//!   enumerates only while a mind change or state change remains impossible,
//!   which forces every actual mind change to be triggered by a datum
//!   outside the previous conjecture. The second stage masks data that
//!   already caused a mind change, adjoins all mind-change witnesses to
//!   every conjecture, and emits `?` on repetition, yielding a learner whose
//!   mind changes are all witness-justified.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::hypspace::{pad, Hypothesis, IndexExpr, LearnerId, Payload};
use crate::learners::{
    bms_run, BmsLearner, BmsRow, BmsTable, DatumPat, Divergence, HypPat, IterLearner, IterRow,
    IterTable, SeqLearner, State,
};
use crate::model::{Datum, FinSeq, Text};

/// Errors from the compilers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("state {0} does not occur in the visit log")]
    MissingVisitState(String),
    #[error("visit log already contains state {0}")]
    DuplicateVisitState(String),
    #[error("mind-change log already contains hypothesis {0}")]
    DuplicateMindChange(String),
    #[error("cannot decode a visit log from payload")]
    BadPayload,
    #[error("step table of `{0}` emits `?`; the iterative image cannot carry its memory through a bare `?`")]
    SourceEmitsNone(LearnerId),
    #[error("state budget {limit} exceeded while materializing a step table")]
    StateBudgetExceeded { limit: usize },
    #[error("the pumping bookkeeping did not become periodic within {budget} steps")]
    NoPeriodWithinBudget { budget: usize },
    #[error(transparent)]
    Divergence(#[from] Divergence),
}

/// Which data the replay of a visit-log path starts with.
///
/// A visit-log entry records the datum that first entered its state, so the
/// entry datum of the starting state has already been consumed by the time
/// the learner sits there; the default replays strictly later entries. The
/// literal variant replays the entry datum of the starting state as well and
/// is kept only for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathVariant {
    #[default]
    ExcludeEntryDatum,
    IncludeEntryDatum,
}

/// Ordered log of first-time state entries. The first entry is the sentinel
/// (start state, `#`); entry `k > 0` records the datum whose consumption
/// first moved the source learner into that entry's state, from the state of
/// entry `k - 1`. First coordinates are pairwise distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VisitLog(Vec<(State, Datum)>);

impl VisitLog {
    /// The log holding only the sentinel entry for the start state.
    pub fn initial(start: State) -> Self {
        VisitLog(vec![(start, Datum::Pause)])
    }

    pub fn from_entries(entries: Vec<(State, Datum)>) -> Result<Self, TransformError> {
        let mut seen = BTreeSet::new();
        for (state, _) in &entries {
            if !seen.insert(state.clone()) {
                return Err(TransformError::DuplicateVisitState(state.to_string()));
            }
        }
        Ok(VisitLog(entries))
    }

    pub fn entries(&self) -> &[(State, Datum)] {
        &self.0
    }

    /// The last first-time-visited state.
    pub fn last_state(&self) -> &State {
        &self.0.last().expect("visit log is never empty").0
    }

    pub fn contains(&self, state: &State) -> bool {
        self.0.iter().any(|(s, _)| s == state)
    }

    /// The log extended by a first visit. The new state must be fresh.
    pub fn extended(&self, state: State, datum: Datum) -> Result<Self, TransformError> {
        if self.contains(&state) {
            return Err(TransformError::DuplicateVisitState(state.to_string()));
        }
        let mut entries = self.0.clone();
        entries.push((state, datum));
        Ok(VisitLog(entries))
    }

    /// The data that walk the source learner from `from` to the last state
    /// of the log, following the recorded first-entry transitions.
    pub fn path_from(&self, from: &State, variant: PathVariant) -> Result<FinSeq, TransformError> {
        let idx = self
            .0
            .iter()
            .position(|(s, _)| s == from)
            .ok_or_else(|| TransformError::MissingVisitState(from.to_string()))?;
        let first = match variant {
            PathVariant::ExcludeEntryDatum => idx + 1,
            PathVariant::IncludeEntryDatum => idx,
        };
        Ok(self.0[first..].iter().map(|(_, d)| *d).collect())
    }

    /// Canonical payload encoding, decodable by [`VisitLog::from_payload`].
    pub fn to_payload(&self) -> Payload {
        Payload::Seq(
            self.0
                .iter()
                .map(|(s, d)| {
                    Payload::Seq(vec![
                        Payload::Str(serde_json::to_string(s).expect("state serializes")),
                        match d {
                            Datum::Num(n) => Payload::Nat(u64::from(*n)),
                            Datum::Pause => Payload::Str("#".to_string()),
                        },
                    ])
                })
                .collect(),
        )
    }

    pub fn from_payload(payload: &Payload) -> Result<Self, TransformError> {
        let Payload::Seq(items) = payload else {
            return Err(TransformError::BadPayload);
        };
        let mut entries = Vec::with_capacity(items.len());
        for item in items {
            let Payload::Seq(pair) = item else {
                return Err(TransformError::BadPayload);
            };
            let [state_part, datum_part] = pair.as_slice() else {
                return Err(TransformError::BadPayload);
            };
            let Payload::Str(state_json) = state_part else {
                return Err(TransformError::BadPayload);
            };
            let state: State =
                serde_json::from_str(state_json).map_err(|_| TransformError::BadPayload)?;
            let datum = match datum_part {
                Payload::Nat(n) => {
                    Datum::Num(u32::try_from(*n).map_err(|_| TransformError::BadPayload)?)
                }
                Payload::Str(s) if s == "#" => Datum::Pause,
                _ => return Err(TransformError::BadPayload),
            };
            entries.push((state, datum));
        }
        if entries.is_empty() {
            return Err(TransformError::BadPayload);
        }
        VisitLog::from_entries(entries)
    }
}

/// Replays the visit-log path from `from` to the last logged state, with the
/// default variant.
pub fn path_replay(v: &VisitLog, from: &State) -> Result<FinSeq, TransformError> {
    v.path_from(from, PathVariant::default())
}

/// Ordered log of mind changes: each entry pairs the hypothesis adopted with
/// the datum that triggered it. Seeded with the sentinel (`?`, `#`); first
/// coordinates are pairwise distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MindChangeLog(Vec<(Hypothesis, Datum)>);

impl MindChangeLog {
    pub fn initial() -> Self {
        MindChangeLog(vec![(Hypothesis::None, Datum::Pause)])
    }

    pub fn from_entries(entries: Vec<(Hypothesis, Datum)>) -> Result<Self, TransformError> {
        let mut seen = BTreeSet::new();
        for (h, _) in &entries {
            if !seen.insert(h.clone()) {
                return Err(TransformError::DuplicateMindChange(h.to_string()));
            }
        }
        Ok(MindChangeLog(entries))
    }

    pub fn entries(&self) -> &[(Hypothesis, Datum)] {
        &self.0
    }

    /// The most recently adopted hypothesis.
    pub fn last_hypothesis(&self) -> &Hypothesis {
        &self.0.last().expect("mind-change log is never empty").0
    }

    /// True iff `datum` already triggered some mind change (the sentinel
    /// makes every pause count, which is harmless since masking a pause is
    /// the identity).
    pub fn contains_datum(&self, datum: &Datum) -> bool {
        self.0.iter().any(|(_, d)| d == datum)
    }

    pub fn extended(&self, hyp: Hypothesis, datum: Datum) -> Result<Self, TransformError> {
        if self.0.iter().any(|(h, _)| h == &hyp) {
            return Err(TransformError::DuplicateMindChange(hyp.to_string()));
        }
        let mut entries = self.0.clone();
        entries.push((hyp, datum));
        Ok(MindChangeLog(entries))
    }

    /// The numeric mind-change witnesses.
    pub fn numeric_witnesses(&self) -> BTreeSet<u32> {
        self.0.iter().filter_map(|(_, d)| d.as_num()).collect()
    }
}

/// The simulating function of an equivalent-text construction: `at(t)` is
/// the pumped-prefix length that corresponds to the original prefix of
/// length `t`. Nondecreasing with `at(0) = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimMap(Vec<usize>);

impl SimMap {
    pub fn at(&self, t: usize) -> usize {
        self.0[t]
    }

    /// Largest `t` for which `at(t)` is defined.
    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }

    pub fn points(&self) -> &[usize] {
        &self.0
    }
}

fn derived_id(op: &str, source: &LearnerId) -> LearnerId {
    LearnerId(format!("{op}({source})"))
}

// ---------------------------------------------------------------------------
// Iterative -> state-driven
// ---------------------------------------------------------------------------

/// Re-packages an iterative learner as a state-driven one whose states are
/// its hypothesis values; the start state carries `?`. Outputs agree with
/// the source exactly, on every nonempty sequence, and divergence carries
/// over position for position.
pub fn it_to_bms(m: &Arc<IterLearner>) -> Arc<BmsLearner> {
    let source = m.clone();
    BmsLearner::derived(
        derived_id("it2bms", m.id()),
        State::Hyp(Box::new(Hypothesis::None)),
        "hypotheses as states",
        move |state, datum| {
            let State::Hyp(prev) = state else { return None };
            let next = source.step(prev, datum)?;
            Some((State::Hyp(Box::new(next.clone())), next))
        },
    )
}

// ---------------------------------------------------------------------------
// Pumping machinery shared by the state-driven compilers
// ---------------------------------------------------------------------------

/// The pump step: given the tracked state (the last entry of `visit`) and a
/// new datum `x`, returns the data block the source should actually consume
/// and the updated log. When `x` leads to a fresh state the block is just
/// `x` and the log grows; when it falls back into a visited state the block
/// is `x` followed by the replay path back to the tracked state, and the log
/// is unchanged.
fn pump(
    m: &BmsLearner,
    visit: &VisitLog,
    x: &Datum,
    variant: PathVariant,
) -> Option<Result<(FinSeq, VisitLog), TransformError>> {
    let current = visit.last_state();
    let (landed, _) = m.step(current, x)?;
    let result = if visit.contains(&landed) {
        visit.path_from(&landed, variant).map(|path| {
            let mut block = FinSeq::new();
            block.push(*x);
            block.extend_from(&path);
            (block, visit.clone())
        })
    } else {
        visit.extended(landed, *x).map(|grown| {
            let mut block = FinSeq::new();
            block.push(*x);
            (block, grown)
        })
    };
    Some(result)
}

// ---------------------------------------------------------------------------
// State-driven -> iterative
// ---------------------------------------------------------------------------

/// Compiles a state-driven learner into an iterative one.
///
/// The iterative learner's hypothesis is always the source's hypothesis on
/// the pumped sequence, padded with the current visit log; the next step
/// decodes the log from its own previous output, so the construction is
/// genuinely iterative. Table-backed sources must never emit `?`, since a
/// bare `?` carries no pad payload to decode.
pub fn bms_to_it(m: &Arc<BmsLearner>) -> Result<Arc<IterLearner>, TransformError> {
    bms_to_it_with_variant(m, PathVariant::default())
}

/// [`bms_to_it`] with an explicit path-replay variant.
pub fn bms_to_it_with_variant(
    m: &Arc<BmsLearner>,
    variant: PathVariant,
) -> Result<Arc<IterLearner>, TransformError> {
    if let Some(table) = m.table() {
        if table.emits_none() {
            return Err(TransformError::SourceEmitsNone(m.id().clone()));
        }
    }
    let source = m.clone();
    Ok(IterLearner::derived(
        derived_id("bms2it", m.id()),
        "pumped simulation with visit-log padding",
        move |prev, datum| {
            let visit = match prev {
                Hypothesis::None => VisitLog::initial(source.start().clone()),
                Hypothesis::Index(IndexExpr::Padded { payload, .. }) => {
                    VisitLog::from_payload(payload).ok()?
                }
                Hypothesis::Index(_) => return None,
            };
            let current = visit.last_state().clone();
            let (block, grown) = pump(&source, &visit, datum, variant)?.ok()?;
            let (_, hyp) = bms_run(&source, &current, &block).ok()?;
            match hyp {
                Hypothesis::None => None,
                Hypothesis::Index(e) => Some(Hypothesis::Index(pad(e, grown.to_payload()))),
            }
        },
    ))
}

/// Builds the pumped prefix of the equivalent text up to `horizon` original
/// positions, together with the simulating function. The pumped prefix
/// contains only data already observed in the original, so prefix contents
/// agree at every simulation point.
pub fn equivalent_text(
    m: &BmsLearner,
    text: &Text,
    horizon: usize,
    variant: PathVariant,
) -> Result<(FinSeq, SimMap), TransformError> {
    let mut pumped = FinSeq::new();
    let mut sims = vec![0];
    let mut visit = VisitLog::initial(m.start().clone());
    for t in 0..horizon {
        let datum = text.at(t);
        let (block, grown) =
            pump(m, &visit, &datum, variant).ok_or(Divergence { position: t })??;
        pumped.extend_from(&block);
        visit = grown;
        sims.push(pumped.len());
    }
    Ok((pumped, SimMap(sims)))
}

/// Builds the equivalent text in eventually periodic form by running the
/// pumping bookkeeping until its own configuration (tracked state, log
/// length, tail offset) repeats. Returns the periodic text together with
/// the simulating function covering the pre-period and one full period.
pub fn equivalent_text_periodic(
    m: &BmsLearner,
    text: &Text,
    budget: usize,
    variant: PathVariant,
) -> Result<(Text, SimMap), TransformError> {
    let head_len = text.head().len();
    let tail_len = text.tail().len();
    let mut visit = VisitLog::initial(m.start().clone());
    let mut blocks: Vec<FinSeq> = Vec::new();
    let mut seen: std::collections::HashMap<(State, usize, usize), usize> =
        std::collections::HashMap::new();
    let mut split = None;
    for t in 0..budget {
        if t >= head_len {
            let key = (
                visit.last_state().clone(),
                visit.entries().len(),
                (t - head_len) % tail_len,
            );
            if let Some(&t0) = seen.get(&key) {
                split = Some((t0, t));
                break;
            }
            seen.insert(key, t);
        }
        let datum = text.at(t);
        let (block, grown) =
            pump(m, &visit, &datum, variant).ok_or(Divergence { position: t })??;
        blocks.push(block);
        visit = grown;
    }
    let (t0, t1) = split.ok_or(TransformError::NoPeriodWithinBudget { budget })?;
    let mut head = FinSeq::new();
    for block in &blocks[..t0] {
        head.extend_from(block);
    }
    let mut tail = FinSeq::new();
    for block in &blocks[t0..t1] {
        tail.extend_from(block);
    }
    let mut sims = vec![0];
    let mut total = 0;
    for block in &blocks[..t1] {
        total += block.len();
        sims.push(total);
    }
    let pumped = Text::new(head, tail).expect("period blocks are nonempty");
    Ok((pumped, SimMap(sims)))
}

// ---------------------------------------------------------------------------
// State-decisive normalization
// ---------------------------------------------------------------------------

/// Re-packages a state-driven learner over composite (state, visit-log)
/// states so that it never returns to a withdrawn state. When the source
/// would fall back into a visited state, the composite state stays put and
/// the emitted hypothesis is the source's output after replaying the path
/// back to the tracked state; otherwise the log grows with the fresh state.
pub fn state_decisive(m: &Arc<BmsLearner>) -> Arc<BmsLearner> {
    let source = m.clone();
    let start = State::WithVisit {
        base: Box::new(m.start().clone()),
        visit: VisitLog::initial(m.start().clone()),
    };
    BmsLearner::derived(
        derived_id("statedec", m.id()),
        start,
        "withdrawn states never re-entered",
        move |state, datum| {
            let State::WithVisit { base, visit } = state else {
                return None;
            };
            debug_assert_eq!(base.as_ref(), visit.last_state());
            let (landed, direct_hyp) = source.step(base, datum)?;
            if visit.contains(&landed) {
                let path = visit.path_from(&landed, PathVariant::default()).ok()?;
                let mut block = FinSeq::new();
                block.push(*datum);
                block.extend_from(&path);
                let (_, hyp) = bms_run(&source, base, &block).ok()?;
                Some((state.clone(), hyp))
            } else {
                let grown = visit.extended(landed.clone(), *datum).ok()?;
                let next = State::WithVisit {
                    base: Box::new(landed),
                    visit: grown,
                };
                Some((next, direct_hyp))
            }
        },
    )
}

// ---------------------------------------------------------------------------
// Strongly conservative wrapper
// ---------------------------------------------------------------------------

/// The guard-wrapping stage: a full-history learner whose conjecture on a
/// nonempty sequence is the source's conjecture wrapped in a guarded index
/// over the source's current state.
///
/// The guarded index enumerates the inner set only while every element seen
/// so far keeps the source answering exactly that inner hypothesis and
/// state, so any datum inside the denoted set provably causes no change,
/// and every actual change is triggered by a datum outside the previous
/// conjecture's denotation. The value factors through the source's state
/// and output, which [`StronglyConservative::factorized`] exposes as a bona
/// fide state-driven learner.
pub struct StronglyConservative {
    source: Arc<BmsLearner>,
}

/// Wraps a state-driven learner in the guard construction. For its learning
/// guarantees the source should be state-decisive and strongly locking on
/// the target class; the wrapper itself is total in the source.
pub fn strongly_conservative(m: &Arc<BmsLearner>) -> StronglyConservative {
    StronglyConservative { source: m.clone() }
}

impl StronglyConservative {
    pub fn source(&self) -> &Arc<BmsLearner> {
        &self.source
    }

    fn wrap(&self, state: &State, hyp: Hypothesis) -> Hypothesis {
        match hyp {
            Hypothesis::None => Hypothesis::None,
            Hypothesis::Index(e) => Hypothesis::Index(IndexExpr::Guarded {
                learner: self.source.id().clone(),
                inner: Box::new(e),
                state: state.clone(),
            }),
        }
    }

    /// The full-history interface: `?` on the empty sequence, otherwise the
    /// wrapped conjecture.
    pub fn hypothesis(&self, seq: &FinSeq) -> Result<Hypothesis, Divergence> {
        if seq.is_empty() {
            return Ok(Hypothesis::None);
        }
        let (state, hyp) = bms_run(&self.source, self.source.start(), seq)?;
        Ok(self.wrap(&state, hyp))
    }

    /// The same learner as a sequence learner value.
    pub fn seq_learner(&self) -> Arc<SeqLearner> {
        let inner = StronglyConservative {
            source: self.source.clone(),
        };
        SeqLearner::new(derived_id("sconv", self.source.id()), move |seq| {
            inner.hypothesis(seq)
        })
    }

    /// The factorization through (state, output): a state-driven learner
    /// with the source's transition structure and wrapped conjectures.
    pub fn factorized(&self) -> Arc<BmsLearner> {
        let inner = StronglyConservative {
            source: self.source.clone(),
        };
        BmsLearner::derived(
            derived_id("sconv", self.source.id()),
            self.source.start().clone(),
            "guard-wrapped conjectures",
            move |state, datum| {
                let (next, hyp) = inner.source.step(state, datum)?;
                let wrapped = inner.wrap(&next, hyp);
                Some((next, wrapped))
            },
        )
    }
}

// ---------------------------------------------------------------------------
// Witness-based re-packaging
// ---------------------------------------------------------------------------

/// The witness stage over the guard-wrapped learner. States pair the
/// source's state with the mind-change log. A datum that already triggered
/// a mind change is treated as a pause; when the underlying guarded
/// conjecture changes, the new conjecture is emitted with all numeric
/// mind-change witnesses adjoined, and otherwise `?` is emitted as a
/// repetition marker.
pub fn witness_based(m: &Arc<BmsLearner>) -> Arc<BmsLearner> {
    let wrapped = strongly_conservative(m).factorized();
    let start = State::WithMc {
        base: Box::new(m.start().clone()),
        mc: MindChangeLog::initial(),
    };
    BmsLearner::derived(
        derived_id("wb", m.id()),
        start,
        "mind changes justified by witnesses",
        move |state, datum| {
            let State::WithMc { base, mc } = state else {
                return None;
            };
            let effective = if mc.contains_datum(datum) {
                Datum::Pause
            } else {
                *datum
            };
            let (next, hyp) = wrapped.step(base, &effective)?;
            let changed = hyp != *mc.last_hypothesis();
            let mc_next = if changed {
                mc.extended(hyp.clone(), effective).ok()?
            } else {
                mc.clone()
            };
            let out = match (&hyp, changed) {
                (Hypothesis::None, _) => Hypothesis::None,
                (Hypothesis::Index(e), true) => Hypothesis::Index(IndexExpr::Union {
                    extra: mc_next.numeric_witnesses(),
                    inner: Box::new(e.clone()),
                }),
                (Hypothesis::Index(_), false) => Hypothesis::None,
            };
            Some((
                State::WithMc {
                    base: Box::new(next),
                    mc: mc_next,
                },
                out,
            ))
        },
    )
}

// ---------------------------------------------------------------------------
// Table materialization
// ---------------------------------------------------------------------------

/// Extracts a finite step table from a state-driven learner by breadth-first
/// exploration of the states reachable over `0..=universe` and `#`.
pub fn materialize_bms(
    m: &BmsLearner,
    universe: u32,
    max_states: usize,
) -> Result<Arc<BmsLearner>, TransformError> {
    let alphabet: Vec<Datum> = (0..=universe)
        .map(Datum::Num)
        .chain(std::iter::once(Datum::Pause))
        .collect();
    let mut rows = Vec::new();
    let mut seen: BTreeSet<State> = BTreeSet::new();
    let mut queue = std::collections::VecDeque::new();
    seen.insert(m.start().clone());
    queue.push_back(m.start().clone());
    while let Some(state) = queue.pop_front() {
        for datum in &alphabet {
            if let Some((next, hyp)) = m.step(&state, datum) {
                rows.push(BmsRow {
                    state: state.clone(),
                    datum: DatumPat::Exact(*datum),
                    next: next.clone(),
                    hyp,
                });
                if seen.insert(next.clone()) {
                    if seen.len() > max_states {
                        return Err(TransformError::StateBudgetExceeded { limit: max_states });
                    }
                    queue.push_back(next);
                }
            }
        }
    }
    let table = BmsTable::new(rows).expect("materialized rows are unique");
    Ok(BmsLearner::from_table(
        m.id().clone(),
        m.start().clone(),
        table,
    ))
}

/// Extracts a finite step table from an iterative learner by breadth-first
/// exploration of the hypothesis values reachable over `0..=universe` and `#`.
pub fn materialize_iter(
    m: &IterLearner,
    universe: u32,
    max_hyps: usize,
) -> Result<Arc<IterLearner>, TransformError> {
    let alphabet: Vec<Datum> = (0..=universe)
        .map(Datum::Num)
        .chain(std::iter::once(Datum::Pause))
        .collect();
    let mut rows = Vec::new();
    let mut seen: BTreeSet<Hypothesis> = BTreeSet::new();
    let mut queue = std::collections::VecDeque::new();
    seen.insert(Hypothesis::None);
    queue.push_back(Hypothesis::None);
    while let Some(hyp) = queue.pop_front() {
        for datum in &alphabet {
            if let Some(next) = m.step(&hyp, datum) {
                rows.push(IterRow {
                    from: HypPat::Is(hyp.clone()),
                    datum: DatumPat::Exact(*datum),
                    hyp: next.clone(),
                });
                if seen.insert(next.clone()) {
                    if seen.len() > max_hyps {
                        return Err(TransformError::StateBudgetExceeded { limit: max_hyps });
                    }
                    queue.push_back(next);
                }
            }
        }
    }
    let table = IterTable::new(rows).expect("materialized rows are unique");
    Ok(IterLearner::from_table(m.id().clone(), table))
}

/// Bounded diagnostic search for a locking prefix: a sequence over the
/// language (plus pauses) after which the learner sits in a sink state
/// answering a fixed conjecture on every language element and on pauses.
/// Heuristic only; absence of a result proves nothing.
pub fn find_locking_prefix(m: &BmsLearner, lang: &BTreeSet<u32>, max_len: usize) -> Option<FinSeq> {
    let alphabet: Vec<Datum> = lang
        .iter()
        .map(|&x| Datum::Num(x))
        .chain(std::iter::once(Datum::Pause))
        .collect();
    let is_sink = |state: &State, hyp: &Hypothesis| {
        !hyp.is_none()
            && alphabet
                .iter()
                .all(|d| matches!(m.step(state, d), Some((next, h)) if next == *state && h == *hyp))
    };
    let mut frontier: Vec<(FinSeq, State)> = vec![(FinSeq::new(), m.start().clone())];
    for _ in 0..max_len {
        let mut next_frontier = Vec::new();
        for (prefix, state) in frontier {
            for datum in &alphabet {
                if let Some((next, hyp)) = m.step(&state, datum) {
                    let mut seq = prefix.clone();
                    seq.push(*datum);
                    if is_sink(&next, &hyp) {
                        return Some(seq);
                    }
                    next_frontier.push((seq, next));
                }
            }
        }
        frontier = next_frontier;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fixtures;
    use crate::learners::{iter_run, trace, CycleSummary, Learner};
    use crate::model::seq;

    fn nat(n: u64) -> State {
        State::Nat(n)
    }

    #[test]
    fn visit_log_paths() {
        let v =
            VisitLog::from_entries(vec![(nat(0), Datum::Pause), (nat(1), Datum::Num(1))]).unwrap();
        assert_eq!(path_replay(&v, &nat(1)).unwrap(), FinSeq::new());
        assert_eq!(path_replay(&v, &nat(0)).unwrap(), seq(&[1]));

        let w = VisitLog::from_entries(vec![
            (nat(0), Datum::Pause),
            (nat(1), Datum::Num(1)),
            (nat(2), Datum::Num(5)),
        ])
        .unwrap();
        assert_eq!(path_replay(&w, &nat(1)).unwrap(), seq(&[5]));
        assert_eq!(
            w.path_from(&nat(1), PathVariant::IncludeEntryDatum)
                .unwrap(),
            seq(&[1, 5])
        );
        assert!(matches!(
            path_replay(&w, &nat(7)),
            Err(TransformError::MissingVisitState(_))
        ));
    }

    #[test]
    fn visit_log_payload_round_trip() {
        let v =
            VisitLog::from_entries(vec![(nat(0), Datum::Pause), (nat(3), Datum::Num(12))]).unwrap();
        assert_eq!(VisitLog::from_payload(&v.to_payload()).unwrap(), v);
        assert!(VisitLog::from_payload(&Payload::Nat(3)).is_err());
    }

    #[test]
    fn path_variants_disagree_exactly_where_the_entry_datum_matters() {
        // 0 -1-> 1 -2-> 2, from state 1 the datum 1 also jumps to 2, and
        // from 2 the datum 2 leaves again. The exclusive replay from 1
        // reaches the last state 2; the literal variant replays the entry
        // datum of 1 first and ends somewhere else.
        let rows = vec![
            BmsRow {
                state: nat(0),
                datum: DatumPat::Exact(Datum::Num(1)),
                next: nat(1),
                hyp: Hypothesis::base("p4"),
            },
            BmsRow {
                state: nat(1),
                datum: DatumPat::Exact(Datum::Num(2)),
                next: nat(2),
                hyp: Hypothesis::base("p2"),
            },
            BmsRow {
                state: nat(1),
                datum: DatumPat::Exact(Datum::Num(1)),
                next: nat(2),
                hyp: Hypothesis::base("p2"),
            },
            BmsRow {
                state: nat(2),
                datum: DatumPat::Exact(Datum::Num(2)),
                next: nat(0),
                hyp: Hypothesis::base("p2"),
            },
        ];
        let m = BmsLearner::from_table("three".into(), nat(0), BmsTable::new(rows).unwrap());
        let v = VisitLog::from_entries(vec![
            (nat(0), Datum::Pause),
            (nat(1), Datum::Num(1)),
            (nat(2), Datum::Num(2)),
        ])
        .unwrap();

        let exclusive = v
            .path_from(&nat(1), PathVariant::ExcludeEntryDatum)
            .unwrap();
        let (end, _) = bms_run(&m, &nat(1), &exclusive).unwrap();
        assert_eq!(end, nat(2));

        let inclusive = v
            .path_from(&nat(1), PathVariant::IncludeEntryDatum)
            .unwrap();
        let (end, _) = bms_run(&m, &nat(1), &inclusive).unwrap();
        // replaying the entry datum of the starting state breaks the walk
        assert_ne!(end, nat(2));
    }

    #[test]
    fn it_to_bms_agrees_stepwise() {
        let it = fixtures::multiples_iter_learner();
        let n = it_to_bms(&it);
        assert_eq!(
            n.step(&n.start().clone(), &Datum::Num(4)).unwrap().1,
            Hypothesis::base("p4")
        );
        let (_, h) = bms_run(&n, n.start(), &seq(&[4])).unwrap();
        assert_eq!(h, iter_run(&it, &seq(&[4])).unwrap());
        // empty input: no hypothesis, start state carries `?`
        let (s, h) = bms_run(&n, n.start(), &FinSeq::new()).unwrap();
        assert_eq!(h, Hypothesis::None);
        assert_eq!(s, State::Hyp(Box::new(Hypothesis::None)));
        // the two-conjecture source compiles to exactly three states:
        // the start plus one per conjecture value
        let table = materialize_bms(&n, 16, 64).unwrap();
        assert_eq!(table.table().unwrap().state_count(), 3);
    }

    #[test]
    fn it_to_bms_exact_over_texts() {
        let it = fixtures::multiples_iter_learner();
        let n = it_to_bms(&it);
        for literal in [
            "0,4,8,12,16|#",
            "4,2|#",
            "2,4,6,8,10,12,14,16,0|#",
            "|#",
            "4|4",
        ] {
            let text: Text = literal.parse().unwrap();
            for t in 1..=24 {
                let prefix = text.expand(t);
                let lhs = bms_run(&n, n.start(), &prefix).map(|(_, h)| h);
                let rhs = iter_run(&it, &prefix);
                assert_eq!(lhs, rhs, "prefix {prefix} of {literal}");
            }
        }
    }

    #[test]
    fn bms_to_it_revisit_pumps_a_path() {
        let c = fixtures::revisit_learner();
        let it = bms_to_it(&c).unwrap();
        // after 1 the tracked state is 1 with visit [(0,#),(1,1)]
        let after_one = iter_run(&it, &seq(&[1])).unwrap();
        let Hypothesis::Index(IndexExpr::Padded { payload, .. }) = &after_one else {
            panic!("expected a padded hypothesis, got {after_one}")
        };
        let v = VisitLog::from_payload(payload).unwrap();
        assert_eq!(v.entries().len(), 2);
        assert_eq!(v.last_state(), &nat(1));

        // 2 falls back into state 0, so the block 2,1 is replayed from 1
        let after_both = iter_run(&it, &seq(&[1, 2])).unwrap();
        let (_, expected) = bms_run(&c, &nat(1), &seq(&[2, 1])).unwrap();
        let Hypothesis::Index(IndexExpr::Padded { inner, payload }) = &after_both else {
            panic!("expected a padded hypothesis")
        };
        assert_eq!(Hypothesis::Index(*inner.clone()), expected);
        // the visit log did not grow on the revisit
        assert_eq!(VisitLog::from_payload(payload).unwrap(), v);
    }

    #[test]
    fn bms_to_it_no_revisit_keeps_blocks_singleton() {
        let a = fixtures::multiples_learner();
        let it = bms_to_it(&a).unwrap();
        let h = iter_run(&it, &seq(&[4])).unwrap();
        let Hypothesis::Index(IndexExpr::Padded { inner, payload }) = &h else {
            panic!("expected a padded hypothesis")
        };
        assert_eq!(**inner, IndexExpr::Base("p4".into()));
        let v = VisitLog::from_payload(payload).unwrap();
        assert_eq!(v.entries().len(), 1); // 4 loops on the start state
        let h2 = iter_run(&it, &seq(&[4, 2])).unwrap();
        let Hypothesis::Index(IndexExpr::Padded { payload, .. }) = &h2 else {
            panic!("expected a padded hypothesis")
        };
        assert_eq!(VisitLog::from_payload(payload).unwrap().entries().len(), 2);
    }

    #[test]
    fn equivalent_text_identity_without_fallbacks() {
        let a = fixtures::multiples_learner();
        let text: Text = "4,2|#".parse().unwrap();
        let (pumped, sim) = equivalent_text(&a, &text, 4, PathVariant::default()).unwrap();
        assert_eq!(pumped, seq(&[4, 2, -1, -1]));
        assert_eq!(sim.points(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn equivalent_text_inserts_observed_data_on_fallback() {
        let c = fixtures::revisit_learner();
        let text: Text = "1,2|#".parse().unwrap();
        let (pumped, sim) = equivalent_text(&c, &text, 3, PathVariant::default()).unwrap();
        assert_eq!(pumped.restrict(3).unwrap(), seq(&[1, 2, 1]));
        assert_eq!(sim.at(2), 3);
        for t in 0..=3 {
            assert_eq!(
                text.expand(t).content(),
                pumped.restrict(sim.at(t)).unwrap().content(),
                "content mismatch at {t}"
            );
        }
    }

    #[test]
    fn equivalent_text_periodic_covers_the_cycle() {
        let c = fixtures::revisit_learner();
        let text: Text = "1,2|#".parse().unwrap();
        let (pumped, _) = equivalent_text_periodic(&c, &text, 64, PathVariant::default()).unwrap();
        assert_eq!(pumped.content(), text.content());
        // the periodic form agrees with the unrolled prefix
        let (prefix, sim) = equivalent_text(&c, &text, 10, PathVariant::default()).unwrap();
        assert_eq!(pumped.expand(sim.at(10)), prefix);
    }

    #[test]
    fn state_decisive_stays_put_on_fallback() {
        let c = fixtures::revisit_learner();
        let n = state_decisive(&c);
        let (s1, _) = bms_run(&n, n.start(), &seq(&[1])).unwrap();
        let State::WithVisit { base, visit } = &s1 else {
            panic!("composite state")
        };
        assert_eq!(base.as_ref(), &nat(1));
        assert_eq!(visit.entries().len(), 2);

        let (s2, h2) = bms_run(&n, n.start(), &seq(&[1, 2])).unwrap();
        assert_eq!(s2, s1, "fallback keeps the composite state");
        let (_, expected) = bms_run(&c, &nat(1), &seq(&[2, 1])).unwrap();
        assert_eq!(h2, expected);
    }

    #[test]
    fn state_decisive_is_transparent_without_revisits() {
        let a = fixtures::multiples_learner();
        let n = state_decisive(&a);
        for literal in ["0,4,8,12,16|#", "4,2|#", "8,12|#"] {
            let text: Text = literal.parse().unwrap();
            for t in 1..=12 {
                let prefix = text.expand(t);
                let (_, ours) = bms_run(&n, n.start(), &prefix).unwrap();
                let (_, source) = bms_run(&a, a.start(), &prefix).unwrap();
                assert_eq!(ours, source, "prefix {prefix}");
            }
        }
    }

    #[test]
    fn state_decisive_never_reenters() {
        let c = fixtures::revisit_learner();
        let n = state_decisive(&c);
        let text: Text = "1,2,1,2|#".parse().unwrap();
        let tr = trace(&Learner::Bms(n), &text, 64).unwrap();
        let mut left: BTreeSet<State> = BTreeSet::new();
        let mut current = tr.steps[0].state_before.clone().unwrap();
        for step in &tr.steps {
            let after = step.state_after.clone().unwrap();
            if after != current {
                left.insert(current.clone());
                assert!(!left.contains(&after), "re-entered {after}");
                current = after;
            }
        }
    }

    #[test]
    fn strongly_conservative_wraps_and_respects_changes() {
        let a = fixtures::multiples_learner();
        let mut ctx = fixtures::fixture_context();
        ctx.register(a.clone());
        let sc = strongly_conservative(&a);

        let h1 = sc.hypothesis(&seq(&[4])).unwrap();
        let Hypothesis::Index(expr) = &h1 else {
            panic!("expected an index")
        };
        assert_eq!(
            *expr,
            IndexExpr::Guarded {
                learner: "multiples".into(),
                inner: Box::new(IndexExpr::Base("p4".into())),
                state: nat(0),
            }
        );
        assert_eq!(ctx.semantics(expr).unwrap(), fixtures::lang_l4());

        // the mind change on 2 leaves the old denotation untouched by 2
        let h2 = sc.hypothesis(&seq(&[4, 2])).unwrap();
        assert_ne!(h2, h1);
        let Hypothesis::Index(old) = &h1 else {
            unreachable!()
        };
        assert!(!ctx.semantics(old).unwrap().contains(&2));

        assert_eq!(sc.hypothesis(&FinSeq::new()).unwrap(), Hypothesis::None);

        // factorized form agrees with the full-history interface
        let f = sc.factorized();
        for t in 1..=8 {
            let text: Text = "4,4,2,8|#".parse().unwrap();
            let prefix = text.expand(t);
            let (_, fh) = bms_run(&f, f.start(), &prefix).unwrap();
            assert_eq!(fh, sc.hypothesis(&prefix).unwrap());
        }
    }

    #[test]
    fn witness_based_masks_and_adjoins() {
        let a = fixtures::multiples_learner();
        let mut ctx = fixtures::fixture_context();
        ctx.register(a.clone());
        let n = witness_based(&a);

        // first datum adopts a conjecture with its own witness adjoined
        let (_, h1) = bms_run(&n, n.start(), &seq(&[4])).unwrap();
        let Hypothesis::Index(IndexExpr::Union { extra, .. }) = &h1 else {
            panic!("expected a union, got {h1}")
        };
        assert_eq!(extra, &[4u32].into_iter().collect());
        assert_eq!(
            ctx.semantics(h1.expr().unwrap()).unwrap(),
            fixtures::lang_l4()
        );

        // repetition is emitted as `?`
        let (_, h2) = bms_run(&n, n.start(), &seq(&[4, 8])).unwrap();
        assert_eq!(h2, Hypothesis::None);

        // the mind change on 2 carries witnesses {4, 2}
        let (_, h3) = bms_run(&n, n.start(), &seq(&[4, 2])).unwrap();
        let Hypothesis::Index(IndexExpr::Union { extra, .. }) = &h3 else {
            panic!("expected a union, got {h3}")
        };
        assert_eq!(extra, &[4u32, 2].into_iter().collect());
        assert_eq!(
            ctx.semantics(h3.expr().unwrap()).unwrap(),
            fixtures::lang_l2()
        );

        // a datum that caused a mind change is masked afterwards
        let (_, h4) = bms_run(&n, n.start(), &seq(&[4, 2, 2])).unwrap();
        assert_eq!(h4, Hypothesis::None);
        let (s4, _) = bms_run(&n, n.start(), &seq(&[4, 2, 2])).unwrap();
        let State::WithMc { mc, .. } = &s4 else {
            panic!("composite state")
        };
        assert_eq!(mc.entries().len(), 3); // sentinel + two adoptions
    }

    #[test]
    fn materialize_preserves_behaviour() {
        let a = fixtures::multiples_learner();
        let n = state_decisive(&a);
        let m = materialize_bms(&n, 16, 512).unwrap();
        for literal in ["4,2|#", "0,4,8,12,16|#", "2|2"] {
            let text: Text = literal.parse().unwrap();
            for t in 1..=10 {
                let prefix = text.expand(t);
                let lhs = bms_run(&m, m.start(), &prefix);
                let rhs = bms_run(&n, n.start(), &prefix);
                assert_eq!(lhs, rhs);
            }
        }

        let it = bms_to_it(&a).unwrap();
        let mt = materialize_iter(&it, 16, 512).unwrap();
        for t in 1..=8 {
            let text: Text = "4,2,8|#".parse().unwrap();
            let prefix = text.expand(t);
            assert_eq!(iter_run(&mt, &prefix), iter_run(&it, &prefix));
        }
    }

    #[test]
    fn materialize_guards_explosion() {
        let b = fixtures::counter_learner();
        assert!(matches!(
            materialize_bms(&b, 4, 16),
            Err(TransformError::StateBudgetExceeded { limit: 16 })
        ));
    }

    #[test]
    fn bms_to_it_rejects_none_emitting_tables() {
        let rows = vec![BmsRow {
            state: nat(0),
            datum: DatumPat::Any,
            next: nat(0),
            hyp: Hypothesis::None,
        }];
        let m = BmsLearner::from_table("mute".into(), nat(0), BmsTable::new(rows).unwrap());
        assert!(matches!(
            bms_to_it(&m),
            Err(TransformError::SourceEmitsNone(_))
        ));
    }

    #[test]
    fn locking_prefix_search_finds_sinks() {
        let a = fixtures::multiples_learner();
        let found = find_locking_prefix(&a, &fixtures::lang_l2(), 3).unwrap();
        // reaching the absorbing state requires an even non-multiple-of-4
        assert!(found
            .iter()
            .any(|d| matches!(d, Datum::Num(n) if n % 2 == 0 && n % 4 != 0)));
        let (state, _) = bms_run(&a, a.start(), &found).unwrap();
        assert_eq!(state, nat(1));
    }

    #[test]
    fn trace_of_compiled_iterative_learner_cycles() {
        let a = fixtures::multiples_learner();
        let it = bms_to_it(&a).unwrap();
        let tr = trace(&Learner::Iter(it), &"4,2|#".parse().unwrap(), 64).unwrap();
        assert!(matches!(tr.cycle, CycleSummary::Cycle { .. }));
    }
}
