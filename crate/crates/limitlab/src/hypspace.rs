//! Finite-language catalog with staged enumeration, and the derived-index
//! algebra built on top of it.
//!
//! A catalog entry plays the role of a named recursively enumerable set: its
//! elements carry per-element delays, and the stage-`t` approximation of an
//! index contains exactly the elements that are at most `t` and whose delay
//! is at most `t`. Derived indices are built syntactically: padding attaches
//! an opaque canonical payload without changing the denoted set, unions
//! adjoin a finite set, and guarded indices enumerate their inner index only
//! while a registered learner keeps answering a fixed hypothesis and state on
//! everything enumerated so far. Structural identity of index expressions is
//! the syntactic hypothesis equality used by the checkers; `semantics`
//! decides the denoted set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::learners::{BmsLearner, State};
use crate::model::Datum;

/// Errors from catalog construction and index evaluation.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unknown base index `{0}`")]
    UnknownBase(String),
    #[error("unknown learner `{0}`")]
    UnknownLearner(String),
    #[error("element {element} of `{id}` exceeds the universe bound {universe}")]
    ElementOutOfUniverse {
        id: String,
        element: u32,
        universe: u32,
    },
    #[error("delay for {element} in `{id}` refers to a non-element")]
    DelayForNonElement { id: String, element: u32 },
    #[error("duplicate base index `{0}`")]
    DuplicateBase(String),
    #[error("reserved base index name `{0}`")]
    ReservedName(String),
}

/// Name of a catalog entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BaseId(pub String);

impl fmt::Display for BaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for BaseId {
    fn from(s: &str) -> Self {
        BaseId(s.to_string())
    }
}

/// Name of a registered learner.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LearnerId(pub String);

impl fmt::Display for LearnerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for LearnerId {
    fn from(s: &str) -> Self {
        LearnerId(s.to_string())
    }
}

/// Opaque canonical value attached by padding. Set payloads are sorted and
/// deduplicated by construction, so structural equality is decidable and
/// deterministic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Payload {
    Nat(u64),
    Str(String),
    Seq(Vec<Payload>),
    Set(BTreeSet<Payload>),
}

impl Payload {
    pub fn set_of(items: impl IntoIterator<Item = Payload>) -> Payload {
        Payload::Set(items.into_iter().collect())
    }
}

impl Serialize for Payload {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Payload::Nat(n) => serializer.serialize_u64(*n),
            Payload::Str(s) => serializer.serialize_str(s),
            Payload::Seq(items) => items.serialize(serializer),
            Payload::Set(items) => {
                use serde::ser::SerializeMap;
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("set", &items.iter().collect::<Vec<_>>())?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Payload {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        payload_from_value(&value).map_err(D::Error::custom)
    }
}

fn payload_from_value(v: &serde_json::Value) -> Result<Payload, String> {
    match v {
        serde_json::Value::Number(n) => n
            .as_u64()
            .map(Payload::Nat)
            .ok_or_else(|| format!("payload number out of range: {n}")),
        serde_json::Value::String(s) => Ok(Payload::Str(s.clone())),
        serde_json::Value::Array(items) => items
            .iter()
            .map(payload_from_value)
            .collect::<Result<Vec<_>, _>>()
            .map(Payload::Seq),
        serde_json::Value::Object(map) if map.len() == 1 && map.contains_key("set") => {
            match &map["set"] {
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(payload_from_value)
                    .collect::<Result<BTreeSet<_>, _>>()
                    .map(Payload::Set),
                other => Err(format!("bad set payload: {other}")),
            }
        }
        other => Err(format!("bad payload: {other}")),
    }
}

/// A hypothesis index: a catalog entry, or one derived from it.
///
/// Structural equality on this type is the syntactic identity used by every
/// `h_r = h_s` comparison; two structurally distinct expressions may still
/// denote the same set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IndexExpr {
    /// A catalog entry by name.
    Base(BaseId),
    /// Same denotation as `inner`, syntactically distinguished by `payload`.
    Padded {
        inner: Box<IndexExpr>,
        payload: Payload,
    },
    /// Enumerates `inner` only while `learner`, sitting in `state`, answers
    /// hypothesis `inner` and state `state` on everything enumerated so far.
    Guarded {
        learner: LearnerId,
        inner: Box<IndexExpr>,
        state: State,
    },
    /// `extra` adjoined to the denotation of `inner`.
    Union {
        extra: BTreeSet<u32>,
        inner: Box<IndexExpr>,
    },
}

impl fmt::Display for IndexExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexExpr::Base(id) => write!(f, "{id}"),
            IndexExpr::Padded { inner, .. } => write!(f, "pad({inner})"),
            IndexExpr::Guarded { learner, inner, .. } => write!(f, "guard({learner},{inner})"),
            IndexExpr::Union { extra, inner } => {
                let items: Vec<String> = extra.iter().map(u32::to_string).collect();
                write!(f, "union({{{}}},{inner})", items.join(","))
            }
        }
    }
}

impl Serialize for IndexExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            IndexExpr::Base(id) => serializer.serialize_str(&id.0),
            IndexExpr::Padded { inner, payload } => {
                #[derive(Serialize)]
                struct Pad<'a> {
                    inner: &'a IndexExpr,
                    payload: &'a Payload,
                }
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("pad", &Pad { inner, payload })?;
                map.end()
            }
            IndexExpr::Guarded {
                learner,
                inner,
                state,
            } => {
                #[derive(Serialize)]
                struct Guard<'a> {
                    learner: &'a LearnerId,
                    inner: &'a IndexExpr,
                    state: &'a State,
                }
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry(
                    "guard",
                    &Guard {
                        learner,
                        inner,
                        state,
                    },
                )?;
                map.end()
            }
            IndexExpr::Union { extra, inner } => {
                #[derive(Serialize)]
                struct Un<'a> {
                    extra: &'a BTreeSet<u32>,
                    inner: &'a IndexExpr,
                }
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("union", &Un { extra, inner })?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for IndexExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        expr_from_value(&value).map_err(D::Error::custom)
    }
}

fn expr_from_value(v: &serde_json::Value) -> Result<IndexExpr, String> {
    match v {
        serde_json::Value::String(s) if s != "?" && s != "*" => {
            Ok(IndexExpr::Base(BaseId(s.clone())))
        }
        serde_json::Value::Object(map) if map.len() == 1 => {
            let (key, body) = map.iter().next().unwrap();
            match key.as_str() {
                "pad" => {
                    let inner = body
                        .get("inner")
                        .ok_or("pad needs `inner`")
                        .and_then(|e| expr_from_value(e).map_err(|_| "bad pad inner"))?;
                    let payload = body
                        .get("payload")
                        .ok_or_else(|| "pad needs `payload`".to_string())
                        .and_then(payload_from_value)?;
                    Ok(IndexExpr::Padded {
                        inner: Box::new(inner),
                        payload,
                    })
                }
                "guard" => {
                    let learner = body
                        .get("learner")
                        .and_then(|l| l.as_str())
                        .ok_or("guard needs `learner`")?;
                    let inner = body
                        .get("inner")
                        .ok_or("guard needs `inner`")
                        .and_then(|e| expr_from_value(e).map_err(|_| "bad guard inner"))?;
                    let state: State = body
                        .get("state")
                        .ok_or_else(|| "guard needs `state`".to_string())
                        .and_then(|s| {
                            serde_json::from_value(s.clone()).map_err(|e| e.to_string())
                        })?;
                    Ok(IndexExpr::Guarded {
                        learner: LearnerId(learner.to_string()),
                        inner: Box::new(inner),
                        state,
                    })
                }
                "union" => {
                    let extra: BTreeSet<u32> = body
                        .get("extra")
                        .ok_or_else(|| "union needs `extra`".to_string())
                        .and_then(|e| {
                            serde_json::from_value(e.clone()).map_err(|e| e.to_string())
                        })?;
                    let inner = body
                        .get("inner")
                        .ok_or("union needs `inner`")
                        .and_then(|e| expr_from_value(e).map_err(|_| "bad union inner"))?;
                    Ok(IndexExpr::Union {
                        extra,
                        inner: Box::new(inner),
                    })
                }
                other => Err(format!("unknown index expression kind `{other}`")),
            }
        }
        other => Err(format!("bad index expression: {other}")),
    }
}

/// An element of the output alphabet: an index, or the no-hypothesis marker.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Hypothesis {
    /// No hypothesis (printed as `?`). Distinct from every index.
    #[default]
    None,
    Index(IndexExpr),
}

impl Hypothesis {
    pub fn base(id: &str) -> Hypothesis {
        Hypothesis::Index(IndexExpr::Base(id.into()))
    }

    pub fn expr(&self) -> Option<&IndexExpr> {
        match self {
            Hypothesis::None => None,
            Hypothesis::Index(e) => Some(e),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Hypothesis::None)
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::None => write!(f, "?"),
            Hypothesis::Index(e) => write!(f, "{e}"),
        }
    }
}

impl Serialize for Hypothesis {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Hypothesis::None => serializer.serialize_str("?"),
            Hypothesis::Index(e) => e.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for Hypothesis {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        if let serde_json::Value::String(s) = &value {
            if s == "?" {
                return Ok(Hypothesis::None);
            }
        }
        expr_from_value(&value)
            .map(Hypothesis::Index)
            .map_err(D::Error::custom)
    }
}

/// Attaches a canonical payload to an index, preserving its denotation.
/// Injective in the pair: distinct inputs give structurally distinct results.
pub fn pad(p: IndexExpr, payload: Payload) -> IndexExpr {
    IndexExpr::Padded {
        inner: Box::new(p),
        payload,
    }
}

/// One catalog entry: a finite set of elements with per-element delays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub elements: BTreeSet<u32>,
    /// Enumeration delay per element; absent means 0.
    pub delay: BTreeMap<u32, u32>,
}

impl CatalogEntry {
    fn delay_of(&self, x: u32) -> u32 {
        self.delay.get(&x).copied().unwrap_or(0)
    }

    fn max_delay(&self) -> u32 {
        self.delay.values().copied().max().unwrap_or(0)
    }
}

/// A finite catalog of named languages over `0..=universe_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    universe_max: u32,
    entries: BTreeMap<BaseId, CatalogEntry>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFileEntry {
    id: String,
    elements: Vec<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    delay: BTreeMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    universe_max: u32,
    languages: Vec<CatalogFileEntry>,
}

impl Catalog {
    pub fn new(universe_max: u32) -> Self {
        Catalog {
            universe_max,
            entries: BTreeMap::new(),
        }
    }

    pub fn universe_max(&self) -> u32 {
        self.universe_max
    }

    pub fn insert(
        &mut self,
        id: BaseId,
        elements: BTreeSet<u32>,
        delay: BTreeMap<u32, u32>,
    ) -> Result<(), EvalError> {
        if id.0 == "?" || id.0 == "*" {
            return Err(EvalError::ReservedName(id.0));
        }
        if self.entries.contains_key(&id) {
            return Err(EvalError::DuplicateBase(id.0));
        }
        if let Some(&element) = elements.iter().find(|&&x| x > self.universe_max) {
            return Err(EvalError::ElementOutOfUniverse {
                id: id.0,
                element,
                universe: self.universe_max,
            });
        }
        if let Some(&element) = delay.keys().find(|k| !elements.contains(k)) {
            return Err(EvalError::DelayForNonElement { id: id.0, element });
        }
        self.entries.insert(id, CatalogEntry { elements, delay });
        Ok(())
    }

    pub fn entry(&self, id: &BaseId) -> Option<&CatalogEntry> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &BaseId> {
        self.entries.keys()
    }

    pub fn max_delay(&self) -> u32 {
        self.entries
            .values()
            .map(CatalogEntry::max_delay)
            .max()
            .unwrap_or(0)
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: CatalogFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut catalog = Catalog::new(file.universe_max);
        for entry in file.languages {
            let delay = entry
                .delay
                .into_iter()
                .map(|(k, v)| k.parse::<u32>().map(|k| (k, v)).map_err(|e| e.to_string()))
                .collect::<Result<BTreeMap<_, _>, _>>()?;
            catalog
                .insert(
                    BaseId(entry.id),
                    entry.elements.into_iter().collect(),
                    delay,
                )
                .map_err(|e| e.to_string())?;
        }
        Ok(catalog)
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            universe_max: self.universe_max,
            languages: self
                .entries
                .iter()
                .map(|(id, entry)| CatalogFileEntry {
                    id: id.0.clone(),
                    elements: entry.elements.iter().copied().collect(),
                    delay: entry
                        .delay
                        .iter()
                        .map(|(k, v)| (k.to_string(), *v))
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }
}

/// Evaluation context: the catalog, the registry of learners referenced by
/// guarded indices, and the stage past which every enumeration is stable.
/// Immutable once populated; evaluation is pure.
#[derive(Debug, Clone)]
pub struct EvalContext {
    catalog: Catalog,
    registry: BTreeMap<LearnerId, Arc<BmsLearner>>,
    t_stab: u32,
}

impl EvalContext {
    pub fn new(catalog: Catalog) -> Self {
        let t_stab = catalog.universe_max() + catalog.max_delay();
        EvalContext {
            catalog,
            registry: BTreeMap::new(),
            t_stab,
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn t_stab(&self) -> u32 {
        self.t_stab
    }

    pub fn register(&mut self, learner: Arc<BmsLearner>) {
        self.registry.insert(learner.id().clone(), learner);
    }

    pub fn learner(&self, id: &LearnerId) -> Option<&Arc<BmsLearner>> {
        self.registry.get(id)
    }

    /// The stage-`t` approximation of the set denoted by `p`. Monotone
    /// nondecreasing in `t` and constant from `t_stab + 1` on.
    pub fn enumerate_step(&self, p: &IndexExpr, t: u32) -> Result<BTreeSet<u32>, EvalError> {
        match p {
            IndexExpr::Base(id) => {
                let entry = self
                    .catalog
                    .entry(id)
                    .ok_or_else(|| EvalError::UnknownBase(id.0.clone()))?;
                Ok(entry
                    .elements
                    .iter()
                    .copied()
                    .filter(|&x| x <= t && entry.delay_of(x) <= t)
                    .collect())
            }
            IndexExpr::Padded { inner, .. } => self.enumerate_step(inner, t),
            IndexExpr::Union { extra, inner } => {
                let mut s = self.enumerate_step(inner, t)?;
                s.extend(extra.iter().copied());
                Ok(s)
            }
            IndexExpr::Guarded {
                learner,
                inner,
                state,
            } => {
                let m = self
                    .registry
                    .get(learner)
                    .ok_or_else(|| EvalError::UnknownLearner(learner.0.clone()))?;
                let mut acc = BTreeSet::new();
                for u in 0..=t {
                    let stage = self.enumerate_step(inner, u)?;
                    if self.guard_holds(m, state, inner, &stage) {
                        acc.extend(stage);
                    }
                }
                Ok(acc)
            }
        }
    }

    /// The guard demands that on every element enumerated so far the learner
    /// answers exactly the guarded hypothesis and stays in the guarded state.
    /// An undefined step fails the guard.
    fn guard_holds(
        &self,
        m: &BmsLearner,
        state: &State,
        inner: &IndexExpr,
        stage: &BTreeSet<u32>,
    ) -> bool {
        stage.iter().all(|&x| match m.step(state, &Datum::Num(x)) {
            Some((next, Hypothesis::Index(e))) => e == *inner && next == *state,
            _ => false,
        })
    }

    /// The stabilized denotation of `p`.
    pub fn semantics(&self, p: &IndexExpr) -> Result<BTreeSet<u32>, EvalError> {
        self.enumerate_step(p, self.t_stab + 1)
    }

    /// Set equality of denotations.
    pub fn semantically_equal(&self, p: &IndexExpr, q: &IndexExpr) -> Result<bool, EvalError> {
        Ok(self.semantics(p)? == self.semantics(q)?)
    }
}
