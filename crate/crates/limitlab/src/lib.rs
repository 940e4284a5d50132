//! limitlab: a desk-scale laboratory for learning finite languages in the
//! limit with bounded memory.
//!
//! The crate models two families of memory-restricted learners as explicit
//! state machines, runs them over eventually periodic texts with cycle
//! detection, decides a collection of restrictions on the resulting learning
//! sequences, and implements compilers between learner shapes that preserve
//! behaviour in checkable ways. An exhaustive small-instance oracle
//! cross-checks the cycle-based verdicts by direct quantifier expansion.
//!
//! - [`model`]: data, finite sequences, eventually periodic texts.
//! - [`hypspace`]: the language catalog, staged enumeration, and the
//!   derived-index algebra (padding, guards, unions).
//! - [`learners`]: state-driven, iterative, and full-history learners, plus
//!   the trace runner.
//! - [`restrictions`]: verdict engines for the restriction predicates and
//!   the backbone implication audit.
//! - [`transforms`]: the learner-to-learner compilers.
//! - [`harness`]: fixtures, corpora, the brute-force oracle, and experiment
//!   orchestration behind the `limitlab` binary.

pub mod harness;
pub mod hypspace;
pub mod learners;
pub mod model;
pub mod restrictions;
pub mod transforms;

pub use hypspace::{Catalog, EvalContext, Hypothesis, IndexExpr};
pub use learners::{trace, BmsLearner, IterLearner, Learner, Trace};
pub use model::{Datum, FinSeq, Text};
pub use restrictions::{check, Outcome, Predicate, Verdict};
