//! Input alphabet, finite sequences, and eventually periodic texts.
//!
//! A datum is a coded word (a bounded natural number) or the pause symbol
//! `#`. A text presents a language as an infinite stream; here texts are
//! restricted to an eventually periodic shape, a finite head followed by a
//! nonempty tail repeated forever, which makes convergence and state-usage
//! questions decidable by cycle detection.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors from sequence and text handling.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("restriction point {t} is out of range for a sequence of length {len}")]
    OutOfRange { t: usize, len: usize },
    #[error("text tail must be nonempty")]
    EmptyTail,
    #[error("cannot parse `{0}` as a datum (expected a natural number or `#`)")]
    BadDatum(String),
    #[error("cannot parse text literal `{0}`")]
    BadTextLiteral(String),
}

/// One element of the input alphabet: a coded word or the pause symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Datum {
    Num(u32),
    Pause,
}

impl Datum {
    pub fn as_num(&self) -> Option<u32> {
        match self {
            Datum::Num(n) => Some(*n),
            Datum::Pause => None,
        }
    }

    pub fn is_pause(&self) -> bool {
        matches!(self, Datum::Pause)
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Num(n) => write!(f, "{n}"),
            Datum::Pause => write!(f, "#"),
        }
    }
}

impl FromStr for Datum {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "#" {
            return Ok(Datum::Pause);
        }
        s.parse::<u32>()
            .map(Datum::Num)
            .map_err(|_| ModelError::BadDatum(s.to_string()))
    }
}

impl Serialize for Datum {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Datum::Num(n) => serializer.serialize_u32(*n),
            Datum::Pause => serializer.serialize_str("#"),
        }
    }
}

impl<'de> Deserialize<'de> for Datum {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        match &value {
            serde_json::Value::Number(n) => n
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .map(Datum::Num)
                .ok_or_else(|| D::Error::custom(format!("datum out of range: {n}"))),
            serde_json::Value::String(s) => s.parse().map_err(|e: ModelError| D::Error::custom(e)),
            other => Err(D::Error::custom(format!("bad datum: {other}"))),
        }
    }
}

/// A finite sequence over the input alphabet.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FinSeq(Vec<Datum>);

impl FinSeq {
    pub fn new() -> Self {
        FinSeq(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Datum> {
        self.0.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Datum> {
        self.0.iter()
    }

    pub fn push(&mut self, d: Datum) {
        self.0.push(d);
    }

    pub fn extend_from(&mut self, other: &FinSeq) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn concat(&self, other: &FinSeq) -> FinSeq {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        FinSeq(v)
    }

    /// The first `t` elements, in order. Fails when `t` exceeds the length.
    pub fn restrict(&self, t: usize) -> Result<FinSeq, ModelError> {
        if t > self.0.len() {
            return Err(ModelError::OutOfRange {
                t,
                len: self.0.len(),
            });
        }
        Ok(FinSeq(self.0[..t].to_vec()))
    }

    /// All numeric data occurring in the sequence, pauses excluded.
    pub fn content(&self) -> BTreeSet<u32> {
        self.0.iter().filter_map(Datum::as_num).collect()
    }

    /// True iff every numeric datum belongs to `set`.
    pub fn is_consistent(&self, set: &BTreeSet<u32>) -> bool {
        self.0
            .iter()
            .filter_map(Datum::as_num)
            .all(|n| set.contains(&n))
    }
}

impl From<Vec<Datum>> for FinSeq {
    fn from(v: Vec<Datum>) -> Self {
        FinSeq(v)
    }
}

impl FromIterator<Datum> for FinSeq {
    fn from_iter<I: IntoIterator<Item = Datum>>(iter: I) -> Self {
        FinSeq(iter.into_iter().collect())
    }
}

impl fmt::Display for FinSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for d in &self.0 {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for FinSeq {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(FinSeq::new());
        }
        s.split(',').map(|item| item.parse()).collect()
    }
}

/// An eventually periodic text: a finite head followed by a nonempty tail
/// repeated forever. The literal form is `head|tail`, e.g. `4,2|#`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Text {
    head: FinSeq,
    tail: FinSeq,
}

impl Text {
    pub fn new(head: FinSeq, tail: FinSeq) -> Result<Self, ModelError> {
        if tail.is_empty() {
            return Err(ModelError::EmptyTail);
        }
        Ok(Text { head, tail })
    }

    /// A text presenting `head` once and pausing forever after.
    pub fn with_pause_tail(head: FinSeq) -> Self {
        Text {
            head,
            tail: FinSeq(vec![Datum::Pause]),
        }
    }

    pub fn head(&self) -> &FinSeq {
        &self.head
    }

    pub fn tail(&self) -> &FinSeq {
        &self.tail
    }

    /// The datum at position `pos` of the infinite stream.
    pub fn at(&self, pos: usize) -> Datum {
        if pos < self.head.len() {
            self.head.0[pos]
        } else {
            self.tail.0[(pos - self.head.len()) % self.tail.len()]
        }
    }

    /// The length-`n` prefix of the infinite stream.
    pub fn expand(&self, n: usize) -> FinSeq {
        FinSeq((0..n).map(|i| self.at(i)).collect())
    }

    /// All numeric data in the stream (head and tail combined).
    pub fn content(&self) -> BTreeSet<u32> {
        let mut c = self.head.content();
        c.extend(self.tail.content());
        c
    }

    /// A prefix length from which every prefix carries the full content.
    pub fn saturation_len(&self) -> usize {
        self.head.len() + self.tail.len()
    }
}

impl fmt::Display for Text {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.head, self.tail)
    }
}

impl FromStr for Text {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (head_s, tail_s) = match s.split_once('|') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        let head: FinSeq = head_s
            .parse()
            .map_err(|_| ModelError::BadTextLiteral(s.to_string()))?;
        match tail_s {
            None => Ok(Text::with_pause_tail(head)),
            Some(t) => {
                let tail: FinSeq = t
                    .parse()
                    .map_err(|_| ModelError::BadTextLiteral(s.to_string()))?;
                Text::new(head, tail)
            }
        }
    }
}

impl Serialize for Text {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Text {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(|e: ModelError| D::Error::custom(e))
    }
}

/// Builds a sequence from a compact notation used in tests: numbers and `#`.
pub fn seq(items: &[i64]) -> FinSeq {
    items
        .iter()
        .map(|&i| {
            if i < 0 {
                Datum::Pause
            } else {
                Datum::Num(i as u32)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[u32]) -> BTreeSet<u32> {
        xs.iter().copied().collect()
    }

    #[test]
    fn content_skips_pauses() {
        assert_eq!(seq(&[2, -1, 4]).content(), set(&[2, 4]));
        assert_eq!(seq(&[-1, -1]).content(), set(&[]));
        let t = Text::new(seq(&[1]), seq(&[-1])).unwrap();
        assert_eq!(t.content(), set(&[1]));
    }

    #[test]
    fn restrict_prefixes() {
        let s = seq(&[3, -1, 5]);
        assert_eq!(s.restrict(2).unwrap(), seq(&[3, -1]));
        assert_eq!(seq(&[3]).restrict(0).unwrap(), FinSeq::new());
        assert_eq!(s.restrict(3).unwrap(), s);
        assert_eq!(s.restrict(4), Err(ModelError::OutOfRange { t: 4, len: 3 }));
    }

    #[test]
    fn consistency_is_content_subset() {
        assert!(seq(&[2, 4]).is_consistent(&set(&[2, 4, 6])));
        assert!(!seq(&[3]).is_consistent(&set(&[2, 4])));
        assert!(seq(&[-1]).is_consistent(&set(&[])));
    }

    #[test]
    fn expand_unrolls_the_tail() {
        let t = Text::new(seq(&[1]), seq(&[-1])).unwrap();
        assert_eq!(t.expand(3), seq(&[1, -1, -1]));
        let p = Text::new(FinSeq::new(), seq(&[0, 2])).unwrap();
        assert_eq!(p.expand(5), seq(&[0, 2, 0, 2, 0]));
        let h = Text::new(seq(&[4, 2]), seq(&[-1])).unwrap();
        assert_eq!(h.expand(2), seq(&[4, 2]));
    }

    #[test]
    fn empty_tail_rejected() {
        assert_eq!(
            Text::new(seq(&[1]), FinSeq::new()),
            Err(ModelError::EmptyTail)
        );
    }

    #[test]
    fn text_literal_round_trip() {
        let t: Text = "4,2|#".parse().unwrap();
        assert_eq!(t.head(), &seq(&[4, 2]));
        assert_eq!(t.tail(), &seq(&[-1]));
        assert_eq!(t.to_string(), "4,2|#");

        let empty_head: Text = "|#".parse().unwrap();
        assert_eq!(empty_head.head(), &FinSeq::new());

        let no_bar: Text = "1,2".parse().unwrap();
        assert_eq!(no_bar.tail(), &seq(&[-1]));

        assert!("4,2|".parse::<Text>().is_err());
        assert!("x|#".parse::<Text>().is_err());
    }

    fn datum_strategy() -> impl Strategy<Value = Datum> {
        prop_oneof![
            3 => (0u32..16).prop_map(Datum::Num),
            1 => Just(Datum::Pause),
        ]
    }

    fn finseq_strategy(max_len: usize) -> impl Strategy<Value = FinSeq> {
        proptest::collection::vec(datum_strategy(), 0..=max_len).prop_map(FinSeq::from)
    }

    fn text_strategy() -> impl Strategy<Value = Text> {
        (
            finseq_strategy(6),
            proptest::collection::vec(datum_strategy(), 1..=3),
        )
            .prop_map(|(head, tail)| Text::new(head, FinSeq::from(tail)).unwrap())
    }

    proptest! {
        #[test]
        fn restriction_content_shrinks(s in finseq_strategy(10), t in 0usize..=10) {
            let t = t.min(s.len());
            let r = s.restrict(t).unwrap();
            prop_assert!(r.content().is_subset(&s.content()));
        }

        #[test]
        fn expand_prefix_coherence(tx in text_strategy(), n in 0usize..12, m in 0usize..12) {
            let (n, m) = (n.min(m), n.max(m));
            let shorter = tx.expand(n);
            let longer = tx.expand(m);
            prop_assert_eq!(longer.restrict(n).unwrap(), shorter);
        }

        #[test]
        fn expand_content_saturates(tx in text_strategy(), extra in 0usize..8) {
            let n0 = tx.saturation_len();
            prop_assert!(tx.expand(extra).content().is_subset(&tx.content()));
            prop_assert_eq!(tx.expand(n0 + extra).content(), tx.content());
        }

        #[test]
        fn consistency_matches_set_subset(s in finseq_strategy(10), lang in proptest::collection::btree_set(0u32..16, 0..8)) {
            // independent reimplementation: elementwise membership
            let direct = s.iter().filter_map(Datum::as_num).all(|n| lang.contains(&n));
            prop_assert_eq!(s.is_consistent(&lang), direct);
            prop_assert_eq!(s.is_consistent(&lang), s.content().is_subset(&lang));
        }

        #[test]
        fn text_display_parse_round_trip(tx in text_strategy()) {
            let back: Text = tx.to_string().parse().unwrap();
            prop_assert_eq!(back, tx);
        }
    }
}
