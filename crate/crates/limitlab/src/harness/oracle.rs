//! Exhaustive small-instance oracle.
//!
//! Enumerates every finite sequence over a small alphabet, runs a learner
//! over each, and evaluates every restriction by direct quantifier expansion
//! over a long enough horizon on the pause-extended text, with no cycle
//! detection anywhere. The formulas here are written independently of the
//! cycle-based checkers on purpose: the two routes must agree on the shared
//! domain, and a disagreement is a bug in one of them.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::hypspace::{EvalContext, Hypothesis, IndexExpr};
use crate::learners::{BmsLearner, State};
use crate::model::{Datum, FinSeq, Text};
use crate::restrictions::{Outcome, Predicate};

use super::HarnessError;

/// Hard cap on the number of enumerated sequences.
pub const SEQUENCE_GUARD: usize = 1_000_000;

/// Oracle run parameters.
#[derive(Debug, Clone)]
pub struct OracleParams {
    pub alphabet: Vec<u32>,
    pub max_len: usize,
    /// Distinct-state count used in the horizon bound; defaults to the
    /// table's own state count.
    pub states_hint: Option<usize>,
}

/// Per-sequence oracle record.
#[derive(Debug, Clone, Serialize)]
pub struct OracleEntry {
    pub seq: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<usize>,
    pub states: Vec<State>,
    pub hypotheses: Vec<Hypothesis>,
    pub verdicts: BTreeMap<Predicate, Outcome>,
}

/// The exhaustive verdict table.
#[derive(Debug, Clone, Serialize)]
pub struct OracleTable {
    pub sequences: usize,
    pub horizon: usize,
    pub entries: Vec<OracleEntry>,
}

fn all_sequences(alphabet: &[Datum], max_len: usize) -> Vec<FinSeq> {
    let mut out: Vec<FinSeq> = vec![FinSeq::new()];
    let mut layer: Vec<FinSeq> = vec![FinSeq::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * alphabet.len());
        for prefix in &layer {
            for &d in alphabet {
                let mut s = prefix.clone();
                s.push(d);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Horizon long enough that direct evaluation over it decides the infinite
/// run: content saturates, the state walk enters its loop, and three more
/// loop copies accommodate any triple of quantified positions.
fn horizon_for(text: &Text, states: usize) -> usize {
    let base = 2 * (text.head().len() + text.tail().len()) * (states + 1);
    let safe = text.head().len() + 5 * (states + 1) * text.tail().len();
    base.max(safe)
}

/// Runs the learner over every sequence up to `max_len` and records states,
/// hypotheses, and horizon verdicts on the pause-extended text.
pub fn brute_force_oracle(
    m: &BmsLearner,
    params: &OracleParams,
    ctx: &EvalContext,
) -> Result<OracleTable, HarnessError> {
    let alphabet: Vec<Datum> = params
        .alphabet
        .iter()
        .map(|&x| Datum::Num(x))
        .chain(std::iter::once(Datum::Pause))
        .collect();
    let k = alphabet.len();
    let mut count: usize = 1;
    let mut power: usize = 1;
    for _ in 0..params.max_len {
        power = power.saturating_mul(k);
        count = count.saturating_add(power);
    }
    if count > SEQUENCE_GUARD {
        return Err(HarnessError::ExplosionGuard {
            sequences: count,
            guard: SEQUENCE_GUARD,
        });
    }

    let states_hint = params
        .states_hint
        .or_else(|| m.table().map(|t| t.state_count()))
        .unwrap_or(8);

    let mut entries = Vec::with_capacity(count);
    let mut horizon_max = 0;
    for seq in all_sequences(&alphabet, params.max_len) {
        let text = Text::with_pause_tail(seq.clone());
        let horizon = horizon_for(&text, states_hint);
        horizon_max = horizon_max.max(horizon);
        let entry = match simulate(m, &text, horizon) {
            Err(position) => OracleEntry {
                seq: seq.to_string(),
                divergence: Some(position),
                states: Vec::new(),
                hypotheses: Vec::new(),
                verdicts: BTreeMap::new(),
            },
            Ok((states, hypotheses)) => {
                let verdicts = horizon_verdicts(&text, &states, &hypotheses, ctx)?;
                // keep only the portion covering the sequence itself in the
                // record; the verdicts used the full horizon
                OracleEntry {
                    seq: seq.to_string(),
                    divergence: None,
                    states: states[..seq.len()].to_vec(),
                    hypotheses: hypotheses[..seq.len()].to_vec(),
                    verdicts,
                }
            }
        };
        entries.push(entry);
    }
    Ok(OracleTable {
        sequences: entries.len(),
        horizon: horizon_max,
        entries,
    })
}

fn simulate(
    m: &BmsLearner,
    text: &Text,
    horizon: usize,
) -> Result<(Vec<State>, Vec<Hypothesis>), usize> {
    let mut states = Vec::with_capacity(horizon);
    let mut hyps = Vec::with_capacity(horizon);
    let mut state = m.start().clone();
    for t in 0..horizon {
        let (next, hyp) = m.step(&state, &text.at(t)).ok_or(t)?;
        states.push(next.clone());
        hyps.push(hyp);
        state = next;
    }
    Ok((states, hyps))
}

/// Direct quantifier expansion of every predicate over the given horizon
/// run. Plain nested loops over indices of the non-`?` subsequence.
pub fn horizon_verdicts(
    text: &Text,
    states: &[State],
    hypotheses: &[Hypothesis],
    ctx: &EvalContext,
) -> Result<BTreeMap<Predicate, Outcome>, HarnessError> {
    let horizon = hypotheses.len();
    let full = text.content();

    // contents of prefixes, one per step
    let mut cnt_at: Vec<BTreeSet<u32>> = Vec::with_capacity(horizon);
    let mut cnt = BTreeSet::new();
    for t in 0..horizon {
        if let Some(n) = text.at(t).as_num() {
            cnt.insert(n);
        }
        cnt_at.push(cnt.clone());
    }

    // the effective subsequence with semantics, with runs of equal
    // (expression, denotation, content) profiles capped at two copies; no
    // violating instance of any predicate here needs three positions of one
    // profile, and keeping two preserves within-run pairs
    let mut exprs: Vec<&IndexExpr> = Vec::new();
    let mut sems: Vec<BTreeSet<u32>> = Vec::new();
    let mut cnts: Vec<&BTreeSet<u32>> = Vec::new();
    let mut memo: BTreeMap<&IndexExpr, BTreeSet<u32>> = BTreeMap::new();
    let mut run_len = 0usize;
    for (t, h) in hypotheses.iter().enumerate() {
        if let Some(e) = h.expr() {
            if !memo.contains_key(e) {
                memo.insert(
                    e,
                    ctx.semantics(e)
                        .map_err(crate::restrictions::CheckError::from)?,
                );
            }
            let same_profile = exprs
                .last()
                .is_some_and(|&prev| prev == e && *cnts.last().unwrap() == &cnt_at[t]);
            run_len = if same_profile { run_len + 1 } else { 1 };
            if run_len > 2 {
                continue;
            }
            exprs.push(e);
            sems.push(memo[e].clone());
            cnts.push(&cnt_at[t]);
        }
    }
    let n = exprs.len();

    let mut out = BTreeMap::new();
    let mut put = |p: Predicate, violated: bool| {
        out.insert(
            p,
            if violated {
                Outcome::Violated
            } else {
                Outcome::Holds
            },
        );
    };

    let mut conv = false;
    let mut caut = false;
    let mut wmon = false;
    let mut mon = false;
    let mut smon = false;
    for t in 0..n {
        for s in 0..=t {
            if cnts[t].is_subset(&sems[s]) && exprs[s] != exprs[t] {
                conv = true;
            }
            if sems[t].is_subset(&sems[s]) && sems[t] != sems[s] {
                caut = true;
            }
            if cnts[t].is_subset(&sems[s]) && !sems[s].is_subset(&sems[t]) {
                wmon = true;
            }
            if sems[s]
                .iter()
                .any(|x| full.contains(x) && !sems[t].contains(x))
            {
                mon = true;
            }
            if !sems[s].is_subset(&sems[t]) {
                smon = true;
            }
        }
    }
    put(Predicate::Conv, conv);
    put(Predicate::Caut, caut);
    put(Predicate::WMon, wmon);
    put(Predicate::Mon, mon);
    put(Predicate::SMon, smon);

    let mut dec = false;
    let mut nu = false;
    let mut snu = false;
    let mut sdec = false;
    let mut wb = false;
    for t in 0..n {
        for s in 0..=t {
            for r in 0..=s {
                // the U-shaped predicates place the return point strictly
                // after the dip
                if s < t {
                    if sems[r] == sems[t] && sems[r] != sems[s] {
                        dec = true;
                    }
                    if sems[r] == full && sems[t] == full && sems[r] != sems[s] {
                        nu = true;
                    }
                    if sems[r] == full && sems[t] == full && exprs[r] != exprs[s] {
                        snu = true;
                    }
                    if sems[r] == sems[t] && exprs[r] != exprs[s] {
                        sdec = true;
                    }
                }
                if r < s
                    && exprs[r] != exprs[s]
                    && !cnts[s]
                        .iter()
                        .any(|x| sems[t].contains(x) && !sems[r].contains(x))
                {
                    wb = true;
                }
            }
        }
    }
    put(Predicate::Dec, dec);
    put(Predicate::Nu, nu);
    put(Predicate::Snu, snu);
    put(Predicate::SDec, sdec);
    put(Predicate::Wb, wb);

    // identification: a correct conjecture never syntactically abandoned.
    // candidates keep at least one full state-loop of lookahead inside the
    // horizon, so instability recurring in the loop is always observed
    let distinct_states = states.iter().collect::<BTreeSet<_>>().len();
    let lookahead = (distinct_states + 1) * text.tail().len();
    let limit = horizon.saturating_sub(lookahead);
    let ex = (0..horizon.min(limit)).any(|i| match hypotheses[i].expr() {
        None => false,
        Some(e) => {
            memo.get(e).is_some_and(|sem| *sem == full)
                && (i..horizon).all(|j| match hypotheses[j].expr() {
                    None => true,
                    Some(f) => f == e,
                })
        }
    });
    put(Predicate::Ex, !ex);

    // finite state usage: the (state, tail offset) walk repeats
    let head = text.head().len();
    let tail = text.tail().len();
    let mut seen: BTreeSet<(&State, usize)> = BTreeSet::new();
    let mut repeats = false;
    for (t, state) in states.iter().enumerate() {
        if t + 1 >= head && !seen.insert((state, (t + 1 - head) % tail)) {
            repeats = true;
            break;
        }
    }
    out.insert(
        Predicate::BmsStar,
        if repeats {
            Outcome::Holds
        } else {
            Outcome::Undetermined
        },
    );
    out.insert(Predicate::T, Outcome::Holds);

    Ok(out)
}
