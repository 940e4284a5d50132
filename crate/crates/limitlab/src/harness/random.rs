//! Seeded random table learners and texts for corpus-scale property runs.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::hypspace::{pad, BaseId, Hypothesis, IndexExpr, Payload};
use crate::learners::{
    BmsLearner, BmsRow, BmsTable, DatumPat, HypPat, IterLearner, IterRow, IterTable, State,
};
use crate::model::{Datum, FinSeq, Text};

/// Shape of a random table learner.
#[derive(Debug, Clone)]
pub struct RandomTableParams {
    pub max_states: usize,
    pub alphabet: Vec<u32>,
    pub hyp_bases: Vec<BaseId>,
    /// Allow `?` outputs.
    pub allow_none: bool,
    /// Allow padded variants of base conjectures (syntactic variety).
    pub allow_pad: bool,
    /// Probability that a (state, datum) row is defined.
    pub totality: f64,
}

impl Default for RandomTableParams {
    fn default() -> Self {
        RandomTableParams {
            max_states: 6,
            alphabet: vec![0, 2, 4, 6, 8],
            hyp_bases: vec!["p4".into(), "p2".into()],
            allow_none: true,
            allow_pad: true,
            totality: 1.0,
        }
    }
}

fn random_hypothesis(rng: &mut ChaCha8Rng, params: &RandomTableParams) -> Hypothesis {
    if params.allow_none && rng.gen_bool(0.15) {
        return Hypothesis::None;
    }
    let base = params
        .hyp_bases
        .choose(rng)
        .expect("nonempty hypothesis pool")
        .clone();
    let expr = IndexExpr::Base(base);
    if params.allow_pad && rng.gen_bool(0.4) {
        Hypothesis::Index(pad(expr, Payload::Nat(rng.gen_range(0..3))))
    } else {
        Hypothesis::Index(expr)
    }
}

/// A random state-driven table learner over `alphabet` plus pauses.
pub fn random_bms_table(
    rng: &mut ChaCha8Rng,
    params: &RandomTableParams,
    id: &str,
) -> Arc<BmsLearner> {
    let states = rng.gen_range(1..=params.max_states) as u64;
    let mut rows = Vec::new();
    for s in 0..states {
        for datum in params
            .alphabet
            .iter()
            .map(|&x| Datum::Num(x))
            .chain(std::iter::once(Datum::Pause))
        {
            if !rng.gen_bool(params.totality) {
                continue;
            }
            rows.push(BmsRow {
                state: State::Nat(s),
                datum: DatumPat::Exact(datum),
                next: State::Nat(rng.gen_range(0..states)),
                hyp: random_hypothesis(rng, params),
            });
        }
    }
    BmsLearner::from_table(id.into(), State::Nat(0), BmsTable::new(rows).unwrap())
}

/// A random iterative table learner: the hypothesis pool doubles as the
/// state space, so every reachable conjecture has rows of its own.
pub fn random_iter_table(
    rng: &mut ChaCha8Rng,
    params: &RandomTableParams,
    id: &str,
) -> Arc<IterLearner> {
    let mut pool: Vec<Hypothesis> = Vec::new();
    let count = rng.gen_range(1..=params.max_states);
    while pool.len() < count {
        let h = random_hypothesis(rng, params);
        if !h.is_none() && !pool.contains(&h) {
            pool.push(h);
        }
    }
    let mut rows = Vec::new();
    let mut from_values = vec![Hypothesis::None];
    from_values.extend(pool.iter().cloned());
    for from in from_values {
        for datum in params
            .alphabet
            .iter()
            .map(|&x| Datum::Num(x))
            .chain(std::iter::once(Datum::Pause))
        {
            if !rng.gen_bool(params.totality) {
                continue;
            }
            rows.push(IterRow {
                from: HypPat::Is(from.clone()),
                datum: DatumPat::Exact(datum),
                hyp: pool.choose(rng).expect("nonempty pool").clone(),
            });
        }
    }
    IterLearner::from_table(id.into(), IterTable::new(rows).unwrap())
}

/// A random eventually periodic text over `alphabet` plus pauses.
pub fn random_text(
    rng: &mut ChaCha8Rng,
    alphabet: &[u32],
    max_head: usize,
    max_tail: usize,
) -> Text {
    let pick = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.2) || alphabet.is_empty() {
            Datum::Pause
        } else {
            Datum::Num(*alphabet.choose(rng).unwrap())
        }
    };
    let head_len = rng.gen_range(0..=max_head);
    let head: FinSeq = (0..head_len).map(|_| pick(rng)).collect();
    let tail_len = rng.gen_range(1..=max_tail.max(1));
    let tail: FinSeq = (0..tail_len).map(|_| pick(rng)).collect();
    Text::new(head, tail).expect("tail nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn random_learners_are_reproducible() {
        let params = RandomTableParams::default();
        let a = random_bms_table(&mut ChaCha8Rng::seed_from_u64(3), &params, "r");
        let b = random_bms_table(&mut ChaCha8Rng::seed_from_u64(3), &params, "r");
        assert_eq!(a.table().unwrap().rows(), b.table().unwrap().rows());
    }

    #[test]
    fn total_tables_are_total() {
        let params = RandomTableParams {
            allow_none: false,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..10 {
            let m = random_bms_table(&mut rng, &params, &format!("r{i}"));
            for row in m.table().unwrap().rows() {
                assert!(!row.hyp.is_none());
            }
            for s in 0..m.table().unwrap().state_count() as u64 {
                for &x in &params.alphabet {
                    assert!(m.step(&State::Nat(s), &Datum::Num(x)).is_some());
                }
                assert!(m.step(&State::Nat(s), &Datum::Pause).is_some());
            }
        }
    }

    #[test]
    fn random_texts_stay_in_alphabet() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let t = random_text(&mut rng, &[1, 2, 4], 6, 2);
            assert!(t.content().iter().all(|x| [1, 2, 4].contains(x)));
        }
    }
}
