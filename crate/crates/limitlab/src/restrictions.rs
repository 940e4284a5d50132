//! Verdict engines for learning restrictions over traces.
//!
//! Every restriction is a universally quantified condition on the learning
//! sequence. Quantifiers skip `?` positions; conclusions are structural
//! (identity of index expressions) for the syntactic restrictions CONV, SNU,
//! SDEC and WB, and denotational for the rest. A detected cycle pins the
//! whole infinite future, so the quantifiers are discharged by evaluating
//! over the recorded steps extended with enough replayed periods that every
//! triple of position profiles over the infinite run is realized. Traces
//! that exhausted their budget can still be refuted (a violation inside the
//! recorded window is a violation), but never confirmed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypspace::{EvalContext, EvalError, Hypothesis, IndexExpr, LearnerId};
use crate::learners::{visited_states, CycleSummary, LearnerKind, NotBmsTrace, StateUsage, Trace};
use crate::model::Text;

/// Errors from evaluating a restriction over a trace.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    NotBms(#[from] NotBmsTrace),
}

/// The checkable predicates: the ten sequence restrictions, limit
/// identification, finite state usage, and the trivial restriction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Predicate {
    #[serde(rename = "CONV")]
    Conv,
    #[serde(rename = "DEC")]
    Dec,
    #[serde(rename = "CAUT")]
    Caut,
    #[serde(rename = "WMON")]
    WMon,
    #[serde(rename = "MON")]
    Mon,
    #[serde(rename = "SMON")]
    SMon,
    #[serde(rename = "NU")]
    Nu,
    #[serde(rename = "SNU")]
    Snu,
    #[serde(rename = "SDEC")]
    SDec,
    #[serde(rename = "WB")]
    Wb,
    #[serde(rename = "EX")]
    Ex,
    #[serde(rename = "BMS_STAR")]
    BmsStar,
    #[serde(rename = "T")]
    T,
}

/// The ten restrictions quantified over the learning sequence.
pub const SEQUENCE_PREDICATES: [Predicate; 10] = [
    Predicate::Conv,
    Predicate::Dec,
    Predicate::Caut,
    Predicate::WMon,
    Predicate::Mon,
    Predicate::SMon,
    Predicate::Nu,
    Predicate::Snu,
    Predicate::SDec,
    Predicate::Wb,
];

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Predicate::Conv => "CONV",
            Predicate::Dec => "DEC",
            Predicate::Caut => "CAUT",
            Predicate::WMon => "WMON",
            Predicate::Mon => "MON",
            Predicate::SMon => "SMON",
            Predicate::Nu => "NU",
            Predicate::Snu => "SNU",
            Predicate::SDec => "SDEC",
            Predicate::Wb => "WB",
            Predicate::Ex => "EX",
            Predicate::BmsStar => "BMS_STAR",
            Predicate::T => "T",
        };
        write!(f, "{name}")
    }
}

impl FromStr for Predicate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CONV" => Ok(Predicate::Conv),
            "DEC" => Ok(Predicate::Dec),
            "CAUT" => Ok(Predicate::Caut),
            "WMON" => Ok(Predicate::WMon),
            "MON" => Ok(Predicate::Mon),
            "SMON" => Ok(Predicate::SMon),
            "NU" => Ok(Predicate::Nu),
            "SNU" => Ok(Predicate::Snu),
            "SDEC" => Ok(Predicate::SDec),
            "WB" => Ok(Predicate::Wb),
            "EX" => Ok(Predicate::Ex),
            "BMS_STAR" | "BMS*" => Ok(Predicate::BmsStar),
            "T" => Ok(Predicate::T),
            other => Err(format!("unknown predicate `{other}`")),
        }
    }
}

/// Outcome of a predicate check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Holds,
    Violated,
    Undetermined,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Outcome::Holds => "HOLDS",
            Outcome::Violated => "VIOLATED",
            Outcome::Undetermined => "UNDETERMINED",
        };
        write!(f, "{name}")
    }
}

/// A replayable violation witness. `r`, `s`, `t` index into the effective
/// (non-`?`) subsequence of the learning sequence; for two-position
/// restrictions `r == s`. `times` gives the underlying step times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub r: usize,
    pub s: usize,
    pub t: usize,
    pub times: (usize, usize, usize),
    pub exprs: Vec<IndexExpr>,
    pub semantics: Vec<BTreeSet<u32>>,
    pub detail: String,
}

/// The verdict of one predicate on one trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub predicate: Predicate,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl Verdict {
    fn holds(predicate: Predicate) -> Verdict {
        Verdict {
            predicate,
            outcome: Outcome::Holds,
            witness: None,
        }
    }

    fn undetermined(predicate: Predicate) -> Verdict {
        Verdict {
            predicate,
            outcome: Outcome::Undetermined,
            witness: None,
        }
    }

    fn violated(predicate: Predicate, witness: Witness) -> Verdict {
        Verdict {
            predicate,
            outcome: Outcome::Violated,
            witness: Some(witness),
        }
    }
}

/// The positions of the trace carrying an index, in order, paired with their
/// step times.
pub fn effective_positions(tr: &Trace) -> Vec<(usize, IndexExpr)> {
    tr.steps
        .iter()
        .filter_map(|s| s.hypothesis.expr().map(|e| (s.time, e.clone())))
        .collect()
}

/// One effective position of the (possibly extended) learning sequence.
struct Eff {
    time: usize,
    expr: Rc<IndexExpr>,
    sem: Rc<BTreeSet<u32>>,
    /// Content of the text prefix through this position.
    cnt: Rc<BTreeSet<u32>>,
}

/// The quantifier domain distilled from a trace.
struct View {
    eff: Vec<Eff>,
    full: BTreeSet<u32>,
    /// Whether the view covers the whole infinite run.
    determinate: bool,
}

fn build_view(tr: &Trace, ctx: &EvalContext) -> Result<View, CheckError> {
    let (extent, determinate) = match tr.cycle {
        // enough replayed periods that any violating triple over the
        // infinite run maps onto the window order- and profile-preserving
        CycleSummary::Cycle { pre_len, period } => (pre_len + 4 * period, true),
        CycleSummary::BudgetExhausted => (tr.steps.len(), false),
    };
    let hyp_at = |u: usize| -> &Hypothesis {
        if u < tr.steps.len() {
            &tr.steps[u].hypothesis
        } else {
            match tr.cycle {
                CycleSummary::Cycle { pre_len, period } => {
                    &tr.steps[pre_len + (u - pre_len) % period].hypothesis
                }
                CycleSummary::BudgetExhausted => unreachable!("extent is bounded by steps"),
            }
        }
    };

    let mut sem_memo: HashMap<IndexExpr, (Rc<IndexExpr>, Rc<BTreeSet<u32>>)> = HashMap::new();
    let mut eff = Vec::new();
    let mut cnt_now: BTreeSet<u32> = BTreeSet::new();
    let mut cnt_rc: Rc<BTreeSet<u32>> = Rc::new(BTreeSet::new());
    for u in 0..extent {
        if let Some(n) = tr.text.at(u).as_num() {
            if cnt_now.insert(n) {
                cnt_rc = Rc::new(cnt_now.clone());
            }
        }
        if let Some(expr) = hyp_at(u).expr() {
            let (expr_rc, sem_rc) = match sem_memo.get(expr) {
                Some(pair) => pair.clone(),
                None => {
                    let sem = Rc::new(ctx.semantics(expr)?);
                    let pair = (Rc::new(expr.clone()), sem);
                    sem_memo.insert(expr.clone(), pair.clone());
                    pair
                }
            };
            eff.push(Eff {
                time: u,
                expr: expr_rc,
                sem: sem_rc,
                cnt: cnt_rc.clone(),
            });
        }
    }
    Ok(View {
        eff,
        full: tr.text.content(),
        determinate,
    })
}

fn sets_eq(a: &Rc<BTreeSet<u32>>, b: &Rc<BTreeSet<u32>>) -> bool {
    Rc::ptr_eq(a, b) || a == b
}

fn witness_for(view: &View, idx: (usize, usize, usize), detail: String) -> Witness {
    let (r, s, t) = idx;
    let pick = |i: usize| &view.eff[i];
    Witness {
        r,
        s,
        t,
        times: (pick(r).time, pick(s).time, pick(t).time),
        exprs: vec![
            pick(r).expr.as_ref().clone(),
            pick(s).expr.as_ref().clone(),
            pick(t).expr.as_ref().clone(),
        ],
        semantics: vec![
            pick(r).sem.as_ref().clone(),
            pick(s).sem.as_ref().clone(),
            pick(t).sem.as_ref().clone(),
        ],
        detail,
    }
}

/// Searches two-position violations in lexicographic (t, s) order.
fn first_pair_violation<F>(view: &View, violates: F) -> Option<(usize, usize)>
where
    F: Fn(&Eff, &Eff) -> Option<String>,
{
    for t in 0..view.eff.len() {
        for s in 0..=t {
            if violates(&view.eff[s], &view.eff[t]).is_some() {
                return Some((s, t));
            }
        }
    }
    None
}

/// Searches three-position violations in lexicographic (t, s, r) order.
/// `strict_r` demands r < s (the witness-based shape); `strict_t` demands
/// s < t (the U-shape: the return point lies strictly after the dip; for
/// the semantic-conclusion predicates the s = t instances cannot violate,
/// so this drops nothing there).
fn first_triple_violation<F>(
    view: &View,
    strict_r: bool,
    strict_t: bool,
    violates: F,
) -> Option<(usize, usize, usize)>
where
    F: Fn(&Eff, &Eff, &Eff) -> Option<String>,
{
    for t in 0..view.eff.len() {
        let s_max = if strict_t {
            if t == 0 {
                continue;
            }
            t - 1
        } else {
            t
        };
        for s in 0..=s_max {
            let r_max = if strict_r {
                if s == 0 {
                    continue;
                }
                s - 1
            } else {
                s
            };
            for r in 0..=r_max {
                if violates(&view.eff[r], &view.eff[s], &view.eff[t]).is_some() {
                    return Some((r, s, t));
                }
            }
        }
    }
    None
}

fn check_sequence_predicate(pred: Predicate, view: &View) -> Verdict {
    let full = &view.full;
    let found: Option<(usize, usize, usize, String)> = match pred {
        Predicate::Conv => first_pair_violation(view, |e_s, e_t| {
            (e_t.cnt.is_subset(&e_s.sem) && e_s.expr != e_t.expr)
                .then(|| "prefix consistent with the earlier conjecture, yet it changed".into())
        })
        .map(|(s, t)| (s, s, t, "conservativeness".into())),
        Predicate::Caut => first_pair_violation(view, |e_s, e_t| {
            (e_t.sem.is_subset(&e_s.sem) && !sets_eq(&e_t.sem, &e_s.sem))
                .then(|| "later conjecture denotes a proper subset".into())
        })
        .map(|(s, t)| (s, s, t, "caution".into())),
        Predicate::WMon => first_pair_violation(view, |e_s, e_t| {
            (e_t.cnt.is_subset(&e_s.sem) && !e_s.sem.is_subset(&e_t.sem))
                .then(|| "consistent prefix but the denotation shrank".into())
        })
        .map(|(s, t)| (s, s, t, "weak monotonicity".into())),
        Predicate::Mon => first_pair_violation(view, |e_s, e_t| {
            let lost = e_s
                .sem
                .iter()
                .any(|x| full.contains(x) && !e_t.sem.contains(x));
            lost.then(|| "a text element left the denotation".into())
        })
        .map(|(s, t)| (s, s, t, "monotonicity on the text".into())),
        Predicate::SMon => first_pair_violation(view, |e_s, e_t| {
            (!e_s.sem.is_subset(&e_t.sem)).then(|| "denotations are not a chain".into())
        })
        .map(|(s, t)| (s, s, t, "strong monotonicity".into())),
        Predicate::Dec => first_triple_violation(view, false, true, |e_r, e_s, e_t| {
            (sets_eq(&e_r.sem, &e_t.sem) && !sets_eq(&e_r.sem, &e_s.sem))
                .then(|| "a denotation was withdrawn and re-adopted".into())
        })
        .map(|(r, s, t)| (r, s, t, "decisiveness".into())),
        Predicate::Nu => first_triple_violation(view, false, true, |e_r, e_s, e_t| {
            (e_r.sem.as_ref() == full && e_t.sem.as_ref() == full && !sets_eq(&e_r.sem, &e_s.sem))
                .then(|| "correct, semantically different, correct again".into())
        })
        .map(|(r, s, t)| (r, s, t, "non-U-shapedness".into())),
        Predicate::Snu => first_triple_violation(view, false, true, |e_r, e_s, e_t| {
            (e_r.sem.as_ref() == full && e_t.sem.as_ref() == full && e_r.expr != e_s.expr)
                .then(|| "correct, syntactically different, correct again".into())
        })
        .map(|(r, s, t)| (r, s, t, "strong non-U-shapedness".into())),
        Predicate::SDec => first_triple_violation(view, false, true, |e_r, e_s, e_t| {
            (sets_eq(&e_r.sem, &e_t.sem) && e_r.expr != e_s.expr)
                .then(|| "same denotation flanks a syntactic change".into())
        })
        .map(|(r, s, t)| (r, s, t, "strong decisiveness".into())),
        Predicate::Wb => first_triple_violation(view, true, false, |e_r, e_s, e_t| {
            if e_r.expr == e_s.expr {
                return None;
            }
            let witnessed = e_s
                .cnt
                .iter()
                .any(|x| e_t.sem.contains(x) && !e_r.sem.contains(x));
            (!witnessed).then(|| "mind change without an observed witness".into())
        })
        .map(|(r, s, t)| (r, s, t, "witness-basedness".into())),
        _ => unreachable!("not a sequence predicate"),
    };
    match found {
        Some((r, s, t, detail)) => Verdict::violated(pred, witness_for(view, (r, s, t), detail)),
        None if view.determinate => Verdict::holds(pred),
        None => Verdict::undetermined(pred),
    }
}

/// Evaluates one predicate over a trace.
pub fn check(pred: Predicate, tr: &Trace, ctx: &EvalContext) -> Result<Verdict, CheckError> {
    match pred {
        Predicate::T => Ok(Verdict::holds(Predicate::T)),
        Predicate::Ex => check_ex(tr, ctx),
        Predicate::BmsStar => check_bms_star(tr),
        _ => {
            let view = build_view(tr, ctx)?;
            Ok(check_sequence_predicate(pred, &view))
        }
    }
}

/// Limit identification: some effective position denotes exactly the text
/// content and every later effective position repeats it syntactically.
pub fn check_ex(tr: &Trace, ctx: &EvalContext) -> Result<Verdict, CheckError> {
    let view = build_view(tr, ctx)?;
    if !view.determinate {
        return Ok(Verdict::undetermined(Predicate::Ex));
    }
    // everything beyond the view repeats the cycle, so a candidate near the
    // view's end is final only if the whole cycle already agrees with it
    let cycle_exprs: Vec<&IndexExpr> = match tr.cycle {
        CycleSummary::Cycle { pre_len, period } => tr.steps[pre_len..pre_len + period]
            .iter()
            .filter_map(|s| s.hypothesis.expr())
            .collect(),
        CycleSummary::BudgetExhausted => unreachable!("determinate views come from cycles"),
    };
    let correct_then_stable = |i: usize| {
        view.eff[i].sem.as_ref() == &view.full
            && view.eff[i..].iter().all(|e| e.expr == view.eff[i].expr)
            && cycle_exprs.iter().all(|&e| *e == *view.eff[i].expr)
    };
    if let Some(_t0) = (0..view.eff.len()).find(|&i| correct_then_stable(i)) {
        return Ok(Verdict::holds(Predicate::Ex));
    }
    // violated: report either the first instability after the first correct
    // conjecture, or the absence of any correct conjecture
    let witness = match (0..view.eff.len()).find(|&i| view.eff[i].sem.as_ref() == &view.full) {
        Some(i) => {
            let j = (i..view.eff.len())
                .find(|&j| view.eff[j].expr != view.eff[i].expr)
                .unwrap_or(i);
            witness_for(&view, (i, j, j), "no correct conjecture is final".into())
        }
        None => Witness {
            r: 0,
            s: 0,
            t: 0,
            times: (0, 0, 0),
            exprs: Vec::new(),
            semantics: Vec::new(),
            detail: "no conjecture denotes the text content".into(),
        },
    };
    Ok(Verdict::violated(Predicate::Ex, witness))
}

/// Finite state usage, decided by the cycle summary.
pub fn check_bms_star(tr: &Trace) -> Result<Verdict, CheckError> {
    let (_, usage) = visited_states(tr)?;
    Ok(match usage {
        StateUsage::Finite => Verdict::holds(Predicate::BmsStar),
        StateUsage::Undetermined => Verdict::undetermined(Predicate::BmsStar),
    })
}

/// Re-evaluates the formula instance cited by a violation witness; true iff
/// the instance still violates. Only sequence predicates are replayable.
pub fn replay_witness(
    pred: Predicate,
    tr: &Trace,
    ctx: &EvalContext,
    w: &Witness,
) -> Result<bool, CheckError> {
    let view = build_view(tr, ctx)?;
    if w.t >= view.eff.len() || w.s > w.t || w.r > w.s {
        return Ok(false);
    }
    let (e_r, e_s, e_t) = (&view.eff[w.r], &view.eff[w.s], &view.eff[w.t]);
    let full = &view.full;
    Ok(match pred {
        Predicate::Conv => e_t.cnt.is_subset(&e_s.sem) && e_s.expr != e_t.expr,
        Predicate::Caut => e_t.sem.is_subset(&e_s.sem) && !sets_eq(&e_t.sem, &e_s.sem),
        Predicate::WMon => e_t.cnt.is_subset(&e_s.sem) && !e_s.sem.is_subset(&e_t.sem),
        Predicate::Mon => e_s
            .sem
            .iter()
            .any(|x| full.contains(x) && !e_t.sem.contains(x)),
        Predicate::SMon => !e_s.sem.is_subset(&e_t.sem),
        Predicate::Dec => w.s < w.t && sets_eq(&e_r.sem, &e_t.sem) && !sets_eq(&e_r.sem, &e_s.sem),
        Predicate::Nu => {
            w.s < w.t
                && e_r.sem.as_ref() == full
                && e_t.sem.as_ref() == full
                && !sets_eq(&e_r.sem, &e_s.sem)
        }
        Predicate::Snu => {
            w.s < w.t
                && e_r.sem.as_ref() == full
                && e_t.sem.as_ref() == full
                && e_r.expr != e_s.expr
        }
        Predicate::SDec => w.s < w.t && sets_eq(&e_r.sem, &e_t.sem) && e_r.expr != e_s.expr,
        Predicate::Wb => {
            w.r < w.s
                && e_r.expr != e_s.expr
                && !e_s
                    .cnt
                    .iter()
                    .any(|x| e_t.sem.contains(x) && !e_r.sem.contains(x))
        }
        _ => false,
    })
}

// ---------------------------------------------------------------------------
// Backbone implication audit
// ---------------------------------------------------------------------------

/// The implications that hold between the sequence restrictions on every
/// trace: a failure is a checker bug, never a property of the learner.
pub const BACKBONE: [(Predicate, &[Predicate]); 7] = [
    (Predicate::Conv, &[Predicate::Snu, Predicate::WMon]),
    (Predicate::SDec, &[Predicate::Dec, Predicate::Snu]),
    (
        Predicate::SMon,
        &[
            Predicate::Caut,
            Predicate::Dec,
            Predicate::Mon,
            Predicate::WMon,
        ],
    ),
    (Predicate::Dec, &[Predicate::Nu]),
    (Predicate::WMon, &[Predicate::Nu]),
    (Predicate::Snu, &[Predicate::Nu]),
    (
        Predicate::Wb,
        &[Predicate::Conv, Predicate::SDec, Predicate::Caut],
    ),
];

/// One implication failure found by the audit.
#[derive(Debug, Clone, Serialize)]
pub struct AuditViolation {
    pub trace_index: usize,
    pub learner: LearnerId,
    pub text: Text,
    pub antecedent: Predicate,
    pub consequent: Predicate,
    pub consequent_witness: Option<Witness>,
}

/// Outcome of auditing the backbone implications over a batch of traces.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub traces: usize,
    pub implications_checked: usize,
    pub violations: Vec<AuditViolation>,
}

/// Evaluates all ten sequence restrictions on each trace and asserts the
/// backbone implications, with UNDETERMINED propagating (never counting as
/// a violation).
pub fn implication_audit(traces: &[Trace], ctx: &EvalContext) -> Result<AuditReport, CheckError> {
    let mut violations = Vec::new();
    let mut implications_checked = 0;
    for (trace_index, tr) in traces.iter().enumerate() {
        let view = build_view(tr, ctx)?;
        let verdicts: BTreeMap<Predicate, Verdict> = SEQUENCE_PREDICATES
            .iter()
            .map(|&p| (p, check_sequence_predicate(p, &view)))
            .collect();
        for (antecedent, consequents) in BACKBONE {
            if verdicts[&antecedent].outcome != Outcome::Holds {
                continue;
            }
            for &consequent in consequents {
                implications_checked += 1;
                if verdicts[&consequent].outcome == Outcome::Violated {
                    violations.push(AuditViolation {
                        trace_index,
                        learner: tr.learner.clone(),
                        text: tr.text.clone(),
                        antecedent,
                        consequent,
                        consequent_witness: verdicts[&consequent].witness.clone(),
                    });
                }
            }
        }
    }
    Ok(AuditReport {
        traces: traces.len(),
        implications_checked,
        violations,
    })
}

/// Convenience: all sequence restrictions plus EX (and state usage for
/// state-driven traces) in one map.
pub fn check_all(
    tr: &Trace,
    ctx: &EvalContext,
) -> Result<BTreeMap<Predicate, Verdict>, CheckError> {
    let view = build_view(tr, ctx)?;
    let mut map: BTreeMap<Predicate, Verdict> = SEQUENCE_PREDICATES
        .iter()
        .map(|&p| (p, check_sequence_predicate(p, &view)))
        .collect();
    map.insert(Predicate::Ex, check_ex(tr, ctx)?);
    if tr.kind == LearnerKind::Bms {
        map.insert(Predicate::BmsStar, check_bms_star(tr)?);
    }
    map.insert(Predicate::T, Verdict::holds(Predicate::T));
    Ok(map)
}
