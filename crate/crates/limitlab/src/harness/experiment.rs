//! Experiment configuration, orchestration, and JSON reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::hypspace::{Catalog, EvalContext};
use crate::learners::{trace, CycleSummary, Learner, LearnerFile, TraceError};
use crate::model::Text;
use crate::restrictions::{implication_audit, AuditReport, Outcome, Predicate, Verdict};
use crate::transforms;

use super::textgen::{gen_texts, TextGenParams};
use super::{fixtures, HarnessError};

/// A transform request: apply `op` to the already-loaded learner `learner`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformSpec {
    pub op: TransformOp,
    pub learner: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformOp {
    #[serde(rename = "it2bms")]
    It2Bms,
    #[serde(rename = "bms2it")]
    Bms2It,
    #[serde(rename = "statedec")]
    StateDec,
    #[serde(rename = "sconv")]
    SConv,
    #[serde(rename = "wb")]
    Wb,
}

impl std::str::FromStr for TransformOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "it2bms" => Ok(TransformOp::It2Bms),
            "bms2it" => Ok(TransformOp::Bms2It),
            "statedec" => Ok(TransformOp::StateDec),
            "sconv" => Ok(TransformOp::SConv),
            "wb" => Ok(TransformOp::Wb),
            other => Err(format!("unknown transform op `{other}`")),
        }
    }
}

/// Generator block of a config: build corpora for named catalog languages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub languages: Vec<String>,
    #[serde(default = "default_max_head")]
    pub max_head: usize,
    #[serde(default = "default_variants")]
    pub variants: usize,
}

fn default_max_head() -> usize {
    8
}

fn default_variants() -> usize {
    6
}

fn default_budget() -> usize {
    256
}

/// A full experiment description, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ExperimentConfig {
    /// Catalog file; the built-in catalog when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    /// Learner table files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learners: Vec<PathBuf>,
    /// Built-in learners by name.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub builtins: Vec<String>,
    /// Text literals.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub texts: Vec<String>,
    /// Generated corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Predicates to evaluate on every (learner, text) pair.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicates: Vec<Predicate>,
    /// Transforms applied after loading; derived learners join the run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<TransformSpec>,
    /// Outcomes asserted per predicate; a VIOLATED verdict where HOLDS is
    /// asserted fails the run.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expect: BTreeMap<Predicate, Outcome>,
    /// Whether UNDETERMINED verdicts fail asserted predicates too.
    #[serde(default)]
    pub undetermined_fails: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Verdicts for one (learner, text) pair.
#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub learner: String,
    pub text: Text,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle: Option<CycleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<usize>,
    pub verdicts: Vec<Verdict>,
}

/// Tallies over all pairs and predicates.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub pairs: usize,
    pub holds: usize,
    pub violated: usize,
    pub undetermined: usize,
    pub divergences: usize,
}

/// One failed expectation.
#[derive(Debug, Clone, Serialize)]
pub struct ExpectationFailure {
    pub learner: String,
    pub text: Text,
    pub predicate: Predicate,
    pub expected: Outcome,
    pub actual: Outcome,
}

/// The full experiment report. Serialization is byte-stable for a fixed
/// config and seed, except for the timestamp field.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub seed: u64,
    pub budget: usize,
    pub pairs: Vec<PairReport>,
    pub audit: AuditReport,
    pub summary: Summary,
    pub expectation_failures: Vec<ExpectationFailure>,
    pub ok: bool,
    pub timestamp: u64,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.ok
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn load_learner_file(path: &Path) -> Result<Learner, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let file = LearnerFile::from_json(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    file.into_learner()
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

/// Applies one transform to a loaded learner.
pub fn apply_transform(op: TransformOp, learner: &Learner) -> Result<Learner, HarnessError> {
    let wrong_shape = |need: &str| {
        HarnessError::Config(format!(
            "transform {op:?} needs a {need} source, got `{}`",
            learner.id()
        ))
    };
    match (op, learner) {
        (TransformOp::It2Bms, Learner::Iter(m)) => Ok(Learner::Bms(transforms::it_to_bms(m))),
        (TransformOp::Bms2It, Learner::Bms(m)) => Ok(Learner::Iter(
            transforms::bms_to_it(m).map_err(|e| HarnessError::Config(e.to_string()))?,
        )),
        (TransformOp::StateDec, Learner::Bms(m)) => Ok(Learner::Bms(transforms::state_decisive(m))),
        (TransformOp::SConv, Learner::Bms(m)) => Ok(Learner::Seq(
            transforms::strongly_conservative(m).seq_learner(),
        )),
        (TransformOp::Wb, Learner::Bms(m)) => Ok(Learner::Bms(transforms::witness_based(m))),
        (TransformOp::It2Bms, _) => Err(wrong_shape("iterative")),
        _ => Err(wrong_shape("state-driven")),
    }
}

/// Loads everything a config references and runs the whole matrix:
/// trace every (learner, text) pair, evaluate the requested predicates,
/// audit the backbone implications, and tally expectations.
/// `LIMITLAB_SEED` overrides the config seed when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let seed = match std::env::var("LIMITLAB_SEED") {
        Ok(s) => s
            .parse::<u64>()
            .map_err(|_| HarnessError::Config(format!("LIMITLAB_SEED is not a number: `{s}`")))?,
        Err(_) => cfg.seed,
    };

    let catalog = match &cfg.catalog {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            Catalog::from_json(&text).map_err(HarnessError::Config)?
        }
        None => fixtures::fixture_catalog(),
    };
    let mut ctx = EvalContext::new(catalog);

    let mut learners: Vec<Learner> = Vec::new();
    for path in &cfg.learners {
        learners.push(load_learner_file(path)?);
    }
    for name in &cfg.builtins {
        let learner = fixtures::builtin_learner(name)
            .ok_or_else(|| HarnessError::Config(format!("unknown builtin `{name}`")))?;
        learners.push(learner);
    }
    for learner in &learners {
        if let Learner::Bms(m) = learner {
            ctx.register(m.clone());
        }
    }
    for spec in &cfg.transforms {
        let source = learners
            .iter()
            .find(|l| l.id().0 == spec.learner)
            .cloned()
            .ok_or_else(|| {
                HarnessError::Config(format!("transform source `{}` not loaded", spec.learner))
            })?;
        let derived = apply_transform(spec.op, &source)?;
        if let Learner::Bms(m) = &derived {
            ctx.register(m.clone());
        }
        learners.push(derived);
    }

    let mut texts: Vec<Text> = Vec::new();
    for literal in &cfg.texts {
        texts.push(
            literal
                .parse()
                .map_err(|e| HarnessError::Config(format!("text `{literal}`: {e}")))?,
        );
    }
    if let Some(generate) = &cfg.generate {
        let params = TextGenParams {
            max_head: generate.max_head,
            variants: generate.variants,
        };
        for lang_id in &generate.languages {
            let entry = ctx
                .catalog()
                .entry(&lang_id.as_str().into())
                .ok_or_else(|| HarnessError::Config(format!("unknown language `{lang_id}`")))?
                .clone();
            texts.extend(gen_texts(
                &entry.elements,
                &params,
                seed,
                ctx.catalog().universe_max(),
            )?);
        }
    }

    let mut pairs = Vec::new();
    let mut summary = Summary::default();
    let mut expectation_failures = Vec::new();
    let mut audited = Vec::new();
    for learner in &learners {
        for text in &texts {
            summary.pairs += 1;
            let traced = match trace(learner, text, cfg.budget) {
                Ok(tr) => tr,
                Err(TraceError::Divergence(d)) => {
                    summary.divergences += 1;
                    pairs.push(PairReport {
                        learner: learner.id().0.clone(),
                        text: text.clone(),
                        cycle: None,
                        divergence: Some(d.position),
                        verdicts: Vec::new(),
                    });
                    continue;
                }
                Err(TraceError::BudgetTooSmall { required, .. }) => {
                    return Err(HarnessError::Config(format!(
                        "budget {} too small for text `{text}` (need {required})",
                        cfg.budget
                    )));
                }
            };
            let mut verdicts = Vec::new();
            for &p in &cfg.predicates {
                let v = crate::restrictions::check(p, &traced, &ctx)
                    .map_err(|e| HarnessError::Check(e.to_string()))?;
                match v.outcome {
                    Outcome::Holds => summary.holds += 1,
                    Outcome::Violated => summary.violated += 1,
                    Outcome::Undetermined => summary.undetermined += 1,
                }
                if let Some(&expected) = cfg.expect.get(&p) {
                    let failed = match (expected, v.outcome) {
                        (e, a) if e == a => false,
                        (_, Outcome::Undetermined) => cfg.undetermined_fails,
                        _ => true,
                    };
                    if failed {
                        expectation_failures.push(ExpectationFailure {
                            learner: learner.id().0.clone(),
                            text: text.clone(),
                            predicate: p,
                            expected,
                            actual: v.outcome,
                        });
                    }
                }
                verdicts.push(v);
            }
            pairs.push(PairReport {
                learner: learner.id().0.clone(),
                text: text.clone(),
                cycle: Some(traced.cycle),
                divergence: None,
                verdicts,
            });
            audited.push(traced);
        }
    }

    let audit =
        implication_audit(&audited, &ctx).map_err(|e| HarnessError::Check(e.to_string()))?;
    let ok = expectation_failures.is_empty() && audit.violations.is_empty();
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    Ok(Report {
        seed,
        budget: cfg.budget,
        pairs,
        audit,
        summary,
        expectation_failures,
        ok,
        timestamp,
    })
}
