use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use limitlab::harness::experiment::{
    apply_transform, run_experiment, ExperimentConfig, TransformOp,
};
use limitlab::harness::fixtures;
use limitlab::harness::oracle::{brute_force_oracle, OracleParams};
use limitlab::hypspace::{Catalog, EvalContext};
use limitlab::learners::{trace, Learner, LearnerFile};
use limitlab::model::Text;
use limitlab::restrictions::{check, Predicate};
use limitlab::transforms;

/// Laboratory for bounded-memory language learners: trace them, check
/// restrictions on their learning sequences, and compile them into one
/// another.
#[derive(Parser)]
#[command(name = "limitlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Print a human-readable table instead of JSON.
        #[arg(long)]
        summary: bool,
    },
    /// Trace one learner over one text.
    Trace {
        /// Learner file path or builtin name.
        #[arg(long)]
        learner: String,
        /// Text literal, e.g. "4,2|#".
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 256)]
        budget: usize,
        #[arg(long)]
        summary: bool,
    },
    /// Check one predicate on one (learner, text) pair.
    Check {
        /// Predicate tag (CONV, DEC, CAUT, WMON, MON, SMON, NU, SNU, SDEC,
        /// WB, EX, BMS_STAR, T).
        #[arg(long)]
        pred: String,
        #[arg(long)]
        learner: String,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 256)]
        budget: usize,
        /// Catalog file; the built-in catalog when absent.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Additional learner files to register for guarded-index
        /// evaluation (repeatable).
        #[arg(long)]
        register: Vec<PathBuf>,
        #[arg(long)]
        summary: bool,
    },
    /// Compile a learner and write the derived step table.
    Transform {
        /// One of: it2bms, bms2it, statedec, sconv, wb.
        #[arg(long)]
        op: String,
        #[arg(long)]
        learner: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// State budget for table extraction.
        #[arg(long, default_value_t = 512)]
        max_states: usize,
    },
    /// Exhaustively run a learner over all short sequences.
    Oracle {
        #[arg(long)]
        learner: String,
        /// Comma-separated numeric alphabet, e.g. "1,2".
        #[arg(long)]
        alphabet: String,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        summary: bool,
    },
}

fn load_catalog(path: &Option<PathBuf>) -> Result<Catalog> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            Catalog::from_json(&text).map_err(|e| anyhow!("{}: {e}", p.display()))
        }
        None => Ok(fixtures::fixture_catalog()),
    }
}

fn load_learner(spec: &str) -> Result<Learner> {
    if let Some(learner) = fixtures::builtin_learner(spec) {
        return Ok(learner);
    }
    let path = PathBuf::from(spec);
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("`{spec}` is neither a builtin nor a readable file"))?;
    let file = LearnerFile::from_json(&text).with_context(|| path.display().to_string())?;
    Ok(file.into_learner()?)
}

fn context_with(catalog: Catalog, learner: &Learner) -> EvalContext {
    let mut ctx = EvalContext::new(catalog);
    for name in fixtures::builtin_names() {
        if let Some(Learner::Bms(m)) = fixtures::builtin_learner(name) {
            ctx.register(m);
        }
    }
    if let Learner::Bms(m) = learner {
        ctx.register(m.clone());
    }
    ctx
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { config, summary } => {
            let text =
                std::fs::read_to_string(&config).with_context(|| config.display().to_string())?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let report = run_experiment(&cfg)?;
            if summary {
                print_run_summary(&report);
            } else {
                println!("{}", report.to_json());
            }
            Ok(if report.ok() { 0 } else { 1 })
        }
        Command::Trace {
            learner,
            text,
            budget,
            summary,
        } => {
            let learner = load_learner(&learner)?;
            let text: Text = text.parse().map_err(|e| anyhow!("{e}"))?;
            let tr = trace(&learner, &text, budget)?;
            if summary {
                println!("learner {} on {} (budget {budget})", tr.learner, tr.text);
                for step in &tr.steps {
                    let state = match (&step.state_before, &step.state_after) {
                        (Some(b), Some(a)) => format!("{b} -> {a}"),
                        _ => "-".to_string(),
                    };
                    println!(
                        "  t={:<3} {:<4} {:<16} {}",
                        step.time,
                        step.datum.to_string(),
                        state,
                        step.hypothesis
                    );
                }
                println!("  cycle: {:?}", tr.cycle);
            } else {
                println!("{}", serde_json::to_string_pretty(&tr)?);
            }
            Ok(0)
        }
        Command::Check {
            pred,
            learner,
            text,
            budget,
            catalog,
            register,
            summary,
        } => {
            let predicate: Predicate = pred.parse().map_err(|e: String| anyhow!(e))?;
            let learner = load_learner(&learner)?;
            let mut ctx = context_with(load_catalog(&catalog)?, &learner);
            for path in &register {
                if let Learner::Bms(m) = load_learner(&path.display().to_string())? {
                    ctx.register(m);
                }
            }
            let text: Text = text.parse().map_err(|e| anyhow!("{e}"))?;
            let tr = trace(&learner, &text, budget)?;
            let verdict = check(predicate, &tr, &ctx)?;
            if summary {
                println!(
                    "{} on ({}, {}): {}",
                    predicate, tr.learner, tr.text, verdict.outcome
                );
                if let Some(w) = &verdict.witness {
                    println!(
                        "  witness (r,s,t) = ({},{},{}) at times {:?}",
                        w.r, w.s, w.t, w.times
                    );
                    println!("  {}", w.detail);
                }
            } else {
                println!("{}", serde_json::to_string_pretty(&verdict)?);
            }
            Ok(match verdict.outcome {
                limitlab::Outcome::Violated => 1,
                _ => 0,
            })
        }
        Command::Transform {
            op,
            learner,
            out,
            catalog,
            max_states,
        } => {
            let op: TransformOp = op.parse().map_err(|e: String| anyhow!(e))?;
            let source = load_learner(&learner)?;
            let derived = apply_transform(op, &source)?;
            let universe = load_catalog(&catalog)?.universe_max();
            let file = materialize_to_file(&derived, &source, universe, max_states)?;
            let mut value = serde_json::to_value(&file)?;
            value.as_object_mut().unwrap().insert(
                "provenance".into(),
                serde_json::json!({
                    "op": format!("{op:?}").to_lowercase(),
                    "source": source.id().0,
                    "note": provenance_note(op),
                }),
            );
            std::fs::write(&out, serde_json::to_string_pretty(&value)?)
                .with_context(|| out.display().to_string())?;
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Oracle {
            learner,
            alphabet,
            max_len,
            catalog,
            summary,
        } => {
            let learner = load_learner(&learner)?;
            let Learner::Bms(m) = &learner else {
                bail!("the oracle runs state-driven learners only");
            };
            let ctx = context_with(load_catalog(&catalog)?, &learner);
            let alphabet: BTreeSet<u32> = alphabet
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<u32>()
                        .map_err(|e| anyhow!("alphabet: {e}"))
                })
                .collect::<Result<_>>()?;
            let params = OracleParams {
                alphabet: alphabet.into_iter().collect(),
                max_len,
                states_hint: None,
            };
            let table = brute_force_oracle(m, &params, &ctx)?;
            if summary {
                println!("{} sequences, horizon {}", table.sequences, table.horizon);
                let divergent = table
                    .entries
                    .iter()
                    .filter(|e| e.divergence.is_some())
                    .count();
                println!("  divergent: {divergent}");
            } else {
                println!("{}", serde_json::to_string_pretty(&table)?);
            }
            Ok(0)
        }
    }
}

fn materialize_to_file(
    learner: &Learner,
    source: &Learner,
    universe: u32,
    max_states: usize,
) -> Result<LearnerFile> {
    match learner {
        Learner::Bms(m) => {
            let table = transforms::materialize_bms(m, universe, max_states)?;
            Ok(LearnerFile::Bms {
                id: table.id().0.clone(),
                start: Some(table.start().clone()),
                rows: table.table().expect("materialized").rows().to_vec(),
            })
        }
        Learner::Iter(m) => {
            let table = transforms::materialize_iter(m, universe, max_states)?;
            Ok(LearnerFile::Iter {
                id: table.id().0.clone(),
                rows: table.table().expect("materialized").rows().to_vec(),
            })
        }
        Learner::Seq(_) => {
            // the full-history stage factors through states and outputs of
            // its source; export that factorization as a step table
            let Learner::Bms(src) = source else {
                bail!("`{}` is not state-driven", source.id());
            };
            let factorized: Arc<limitlab::BmsLearner> =
                transforms::strongly_conservative(src).factorized();
            let table = transforms::materialize_bms(&factorized, universe, max_states)?;
            Ok(LearnerFile::Bms {
                id: table.id().0.clone(),
                start: Some(table.start().clone()),
                rows: table.table().expect("materialized").rows().to_vec(),
            })
        }
    }
}

fn provenance_note(op: TransformOp) -> &'static str {
    match op {
        TransformOp::It2Bms => "hypotheses reused as states; outputs agree with the source exactly",
        TransformOp::Bms2It => "pumped simulation carrying the visit log in the pad payload",
        TransformOp::StateDec => {
            "composite (state, visit) states; withdrawn states never re-entered"
        }
        TransformOp::SConv => {
            "conjectures wrapped in guarded indices; mind changes leave the old denotation"
        }
        TransformOp::Wb => "mind-change data masked and witnesses adjoined to every conjecture",
    }
}

fn print_run_summary(report: &limitlab::harness::experiment::Report) {
    println!("seed {}  budget {}", report.seed, report.budget);
    println!(
        "{} pairs: {} HOLDS, {} VIOLATED, {} UNDETERMINED, {} divergences",
        report.summary.pairs,
        report.summary.holds,
        report.summary.violated,
        report.summary.undetermined,
        report.summary.divergences
    );
    for pair in &report.pairs {
        let verdicts: Vec<String> = pair
            .verdicts
            .iter()
            .map(|v| format!("{}={}", v.predicate, v.outcome))
            .collect();
        let status = match pair.divergence {
            Some(p) => format!("divergence at {p}"),
            None => verdicts.join(" "),
        };
        println!(
            "  {:<24} {:<28} {status}",
            pair.learner,
            pair.text.to_string()
        );
    }
    println!(
        "audit: {} implications checked, {} violations",
        report.audit.implications_checked,
        report.audit.violations.len()
    );
    if !report.expectation_failures.is_empty() {
        println!("expectation failures:");
        for f in &report.expectation_failures {
            println!(
                "  {} on ({}, {}): expected {}, got {}",
                f.predicate, f.learner, f.text, f.expected, f.actual
            );
        }
    }
    println!("result: {}", if report.ok() { "ok" } else { "FAILED" });
}
