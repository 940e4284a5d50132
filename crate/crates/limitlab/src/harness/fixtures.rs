//! Built-in catalog and learners used across tests, experiments, and demos.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::hypspace::{pad, Catalog, EvalContext, Hypothesis, Payload};
use crate::learners::{
    BmsLearner, BmsRow, BmsTable, DatumPat, HypPat, IterLearner, IterRow, IterTable, Learner, State,
};
use crate::model::Datum;

/// Universe bound of the built-in catalog.
pub const UNIVERSE: u32 = 16;

pub fn lang_l4() -> BTreeSet<u32> {
    (0..=UNIVERSE).filter(|x| x % 4 == 0).collect()
}

pub fn lang_l2() -> BTreeSet<u32> {
    (0..=UNIVERSE).filter(|x| x % 2 == 0).collect()
}

pub fn lang_l12() -> BTreeSet<u32> {
    [1, 2].into_iter().collect()
}

/// Catalog with the multiples languages and the two-element language used
/// by the revisit learner. All enumeration delays are zero.
pub fn fixture_catalog() -> Catalog {
    let mut c = Catalog::new(UNIVERSE);
    c.insert("p4".into(), lang_l4(), BTreeMap::new()).unwrap();
    c.insert("p2".into(), lang_l2(), BTreeMap::new()).unwrap();
    c.insert("p12".into(), lang_l12(), BTreeMap::new()).unwrap();
    c
}

/// Context over the fixture catalog with all built-in learners registered.
pub fn fixture_context() -> EvalContext {
    let mut ctx = EvalContext::new(fixture_catalog());
    ctx.register(multiples_learner());
    ctx.register(counter_learner());
    ctx.register(revisit_learner());
    ctx.register(syntactic_ushape_learner());
    ctx
}

fn nat(n: u64) -> State {
    State::Nat(n)
}

/// Two-state coarse-to-fine learner: state 0 answers `p4` on multiples of 4
/// and pauses; an even non-multiple-of-4 moves it to the absorbing state 1,
/// which answers `p2` on all evens and pauses. Undefined on odd data.
/// Strongly monotone and strongly locking on {p4, p2}.
pub fn multiples_learner() -> Arc<BmsLearner> {
    let mut rows = Vec::new();
    for x in (0..=UNIVERSE).filter(|x| x % 2 == 0) {
        if x % 4 == 0 {
            rows.push(BmsRow {
                state: nat(0),
                datum: DatumPat::Exact(Datum::Num(x)),
                next: nat(0),
                hyp: Hypothesis::base("p4"),
            });
        } else {
            rows.push(BmsRow {
                state: nat(0),
                datum: DatumPat::Exact(Datum::Num(x)),
                next: nat(1),
                hyp: Hypothesis::base("p2"),
            });
        }
        rows.push(BmsRow {
            state: nat(1),
            datum: DatumPat::Exact(Datum::Num(x)),
            next: nat(1),
            hyp: Hypothesis::base("p2"),
        });
    }
    rows.push(BmsRow {
        state: nat(0),
        datum: DatumPat::Exact(Datum::Pause),
        next: nat(0),
        hyp: Hypothesis::base("p4"),
    });
    rows.push(BmsRow {
        state: nat(1),
        datum: DatumPat::Exact(Datum::Pause),
        next: nat(1),
        hyp: Hypothesis::base("p2"),
    });
    BmsLearner::from_table("multiples".into(), nat(0), BmsTable::new(rows).unwrap())
}

/// Iterative twin of the multiples learner: the previous conjecture plays
/// the role of the state.
pub fn multiples_iter_learner() -> Arc<IterLearner> {
    let p4 = Hypothesis::base("p4");
    let p2 = Hypothesis::base("p2");
    let mut rows = Vec::new();
    for from in [HypPat::Is(Hypothesis::None), HypPat::Is(p4.clone())] {
        for x in (0..=UNIVERSE).filter(|x| x % 2 == 0) {
            rows.push(IterRow {
                from: from.clone(),
                datum: DatumPat::Exact(Datum::Num(x)),
                hyp: if x % 4 == 0 { p4.clone() } else { p2.clone() },
            });
        }
        rows.push(IterRow {
            from,
            datum: DatumPat::Exact(Datum::Pause),
            hyp: p4.clone(),
        });
    }
    for x in (0..=UNIVERSE).filter(|x| x % 2 == 0) {
        rows.push(IterRow {
            from: HypPat::Is(p2.clone()),
            datum: DatumPat::Exact(Datum::Num(x)),
            hyp: p2.clone(),
        });
    }
    rows.push(IterRow {
        from: HypPat::Is(p2.clone()),
        datum: DatumPat::Exact(Datum::Pause),
        hyp: p2,
    });
    IterLearner::from_table("multiples_it".into(), IterTable::new(rows).unwrap())
}

/// Counter learner: bumps its state on every datum and answers `p2`
/// constantly. Never settles on finitely many states on any infinite text.
pub fn counter_learner() -> Arc<BmsLearner> {
    BmsLearner::derived(
        "counter".into(),
        nat(0),
        "unbounded state counter",
        |state, _| {
            let State::Nat(n) = state else { return None };
            Some((State::Nat(n + 1), Hypothesis::base("p2")))
        },
    )
}

/// Two-state learner that walks back to its start: datum 1 moves 0 to 1,
/// datum 2 moves 1 back to 0, and every transition answers a distinct
/// padded index over `p12`. Total on {1, 2, #}.
pub fn revisit_learner() -> Arc<BmsLearner> {
    let out = |k: u64| {
        Hypothesis::Index(pad(
            crate::hypspace::IndexExpr::Base("p12".into()),
            Payload::Nat(k),
        ))
    };
    let rows = vec![
        BmsRow {
            state: nat(0),
            datum: DatumPat::Exact(Datum::Num(1)),
            next: nat(1),
            hyp: out(1),
        },
        BmsRow {
            state: nat(0),
            datum: DatumPat::Exact(Datum::Num(2)),
            next: nat(0),
            hyp: out(2),
        },
        BmsRow {
            state: nat(0),
            datum: DatumPat::Exact(Datum::Pause),
            next: nat(0),
            hyp: out(3),
        },
        BmsRow {
            state: nat(1),
            datum: DatumPat::Exact(Datum::Num(2)),
            next: nat(0),
            hyp: out(4),
        },
        BmsRow {
            state: nat(1),
            datum: DatumPat::Exact(Datum::Num(1)),
            next: nat(1),
            hyp: out(5),
        },
        BmsRow {
            state: nat(1),
            datum: DatumPat::Exact(Datum::Pause),
            next: nat(1),
            hyp: out(6),
        },
    ];
    BmsLearner::from_table("revisit".into(), nat(0), BmsTable::new(rows).unwrap())
}

/// Demo learner pinning the gap between syntactic and semantic U-shapes: it
/// answers three structurally distinct, denotationally equal indices for the
/// evens in succession, then stays on the third.
pub fn syntactic_ushape_learner() -> Arc<BmsLearner> {
    let p = Hypothesis::base("p2");
    let q = Hypothesis::Index(pad(
        crate::hypspace::IndexExpr::Base("p2".into()),
        Payload::Nat(1),
    ));
    let p_again = Hypothesis::Index(pad(
        crate::hypspace::IndexExpr::Base("p2".into()),
        Payload::Nat(2),
    ));
    let rows = vec![
        BmsRow {
            state: nat(0),
            datum: DatumPat::Any,
            next: nat(1),
            hyp: p,
        },
        BmsRow {
            state: nat(1),
            datum: DatumPat::Any,
            next: nat(2),
            hyp: q,
        },
        BmsRow {
            state: nat(2),
            datum: DatumPat::Any,
            next: nat(3),
            hyp: p_again.clone(),
        },
        BmsRow {
            state: nat(3),
            datum: DatumPat::Any,
            next: nat(3),
            hyp: p_again,
        },
    ];
    BmsLearner::from_table("snu_demo".into(), nat(0), BmsTable::new(rows).unwrap())
}

/// The canonical presentation text for the demo learner.
pub fn snu_demo_text() -> crate::model::Text {
    let head: crate::model::FinSeq = lang_l2().into_iter().map(Datum::Num).collect();
    crate::model::Text::with_pause_tail(head)
}

/// Resolves a built-in learner by name.
pub fn builtin_learner(name: &str) -> Option<Learner> {
    match name {
        "multiples" => Some(Learner::Bms(multiples_learner())),
        "counter" => Some(Learner::Bms(counter_learner())),
        "revisit" => Some(Learner::Bms(revisit_learner())),
        "snu_demo" => Some(Learner::Bms(syntactic_ushape_learner())),
        "multiples_it" => Some(Learner::Iter(multiples_iter_learner())),
        _ => None,
    }
}

/// Names of all built-in learners.
pub fn builtin_names() -> &'static [&'static str] {
    &[
        "multiples",
        "counter",
        "revisit",
        "snu_demo",
        "multiples_it",
    ]
}
