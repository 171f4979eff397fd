//! The `catcast` command-line workflow.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod report;

use std::path::Path;

use anyhow::Result;

use args::{Cli, Command, Format, GlobalArgs};
use commands::{print_results, render_predictions, render_record, render_reports, render_trained};
use config::{read_config, resolve_seed, RunConfig, SEED_ENV};
use data::write_json;
use report::{Invocation, Report};

/// Process exit status of a failed run.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<commands::UsageError>().is_some() {
        2
    } else if err.downcast_ref::<commands::ReproduceMismatch>().is_some() {
        3
    } else {
        1
    }
}

fn base_config(g: &GlobalArgs) -> Result<RunConfig> {
    let (mut c, has_seed) = match &g.config {
        Some(p) => read_config(p)?,
        None => (RunConfig::default(), false),
    };
    let env = std::env::var(SEED_ENV).ok();
    c.seed = resolve_seed(g.seed, has_seed.then_some(c.seed), env.as_deref())?;
    if let Some(t) = g.threads {
        c.threads = t;
    }
    Ok(c)
}

fn init_threads(n: usize) {
    // the global pool can only be built once per process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
}

fn write_report(
    path: Option<&Path>,
    invocation: Invocation,
    config: &RunConfig,
    results: serde_json::Value,
) -> Result<()> {
    if let Some(p) = path {
        write_json(&Report::new(invocation, config.clone(), results), p)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = base_config(&cli.global)?;
    let format = cli.global.format;
    match cli.command {
        Command::Ingest(a) => {
            init_threads(config.threads);
            a.split.apply(&mut config);
            let s = commands::ingest(&config, &a)?;
            print_results(format, &s, || {
                format!(
                    "{} rows read, {} blanks, {} renamed, {} bad dates dropped, {} duplicates removed\n\
                     {} rows in range: train {}, validation {}, test {}\nwrote {}\n",
                    s.stats.input_rows,
                    s.stats.blanks_replaced,
                    s.stats.renamed,
                    s.stats.bad_dates_dropped,
                    s.stats.duplicates_removed,
                    s.rows_in_range,
                    s.train,
                    s.validation,
                    s.test,
                    a.out.display()
                )
            })
        }
        Command::Synth(a) => {
            let n = commands::synth(&a)?;
            print_results(format, &serde_json::json!({ "rows": n }), || {
                format!("wrote {n} rows to {}\n", a.out.display())
            })
        }
        Command::Train(a) => {
            init_threads(config.threads);
            a.model.apply(&mut config);
            a.training.apply(&mut config);
            a.split.apply(&mut config);
            let trained = commands::train(&config, &a.data, a.stage, &a.out)?;
            let results = serde_json::to_value(&trained)?;
            let invocation = Invocation::Train {
                data: a.data.clone(),
                stage: a.stage,
                out: a.out.clone(),
            };
            write_report(a.report.as_deref(), invocation, &config, results.clone())?;
            print_results(format, &results, || render_trained(&trained, &a.out))
        }
        Command::Evaluate(a) => {
            init_threads(config.threads);
            a.split.apply(&mut config);
            let reports = commands::evaluate(&config, &a.data, a.stage, a.mode, &a.models, a.rows)?;
            let results = serde_json::to_value(&reports)?;
            let invocation = Invocation::Evaluate {
                data: a.data.clone(),
                stage: a.stage,
                mode: a.mode,
                models: a.models.clone(),
                rows: a.rows,
            };
            write_report(a.report.as_deref(), invocation, &config, results.clone())?;
            print_results(format, &results, || render_reports(&reports))
        }
        Command::Gridsearch(a) => {
            init_threads(config.threads);
            a.split.apply(&mut config);
            if let Some(f) = a.family {
                config.search.family = f;
            }
            if let Some(k) = a.k {
                config.search.k = k;
            }
            if a.budget.is_some() {
                config.search.budget = a.budget;
            }
            if a.encoding.is_some() {
                config.model.encoding = a.encoding;
            }
            let trace =
                commands::gridsearch_to_file(
                    &config,
                    &a.data,
                    a.stage,
                    &a.trace,
                    |r| match format {
                        Format::Text => eprintln!("{}", render_record(r)),
                        Format::Machine => {}
                    },
                )?;
            let summary = commands::trace_summary(&trace);
            print_results(format, &summary, || {
                let mut s = String::new();
                for it in &trace.iterations {
                    s.push_str(&format!(
                        "iteration {}: {} of {} evaluated, best mean top1 {}\n",
                        it.iteration,
                        it.evaluated,
                        it.grid_size,
                        it.winner_mean.map_or("-".into(), |m| format!("{m:.4}"))
                    ));
                }
                s.push_str(&format!(
                    "final configuration: {}\n",
                    serde_json::to_string(&trace.final_config).unwrap()
                ));
                s
            })
        }
        Command::Predict(a) => {
            let preds = commands::predict(&a)?;
            for p in &preds {
                for name in &p.unknown_inputs {
                    eprintln!("warning: stage {} input {name} was not seen in training; treated as unknown", p.stage);
                }
            }
            print_results(format, &preds, || render_predictions(&preds))
        }
        Command::Gradcheck(a) => {
            let checks = commands::gradcheck(&config, &a)?;
            print_results(format, &checks, || {
                checks
                    .iter()
                    .map(|c| {
                        format!(
                            "stage {} ({}): max relative error {:.3e} over {} parameters (worst {}[{}])\n",
                            c.stage, c.family, c.report.max_rel_error, c.report.checked, c.report.worst_param, c.report.worst_index
                        )
                    })
                    .collect()
            })?;
            if let Some(c) = checks
                .iter()
                .find(|c| c.report.max_rel_error.is_nan() || c.report.max_rel_error >= a.tolerance)
            {
                anyhow::bail!(
                    "stage {} gradient check failed: {:.3e} exceeds {:.1e}",
                    c.stage,
                    c.report.max_rel_error,
                    a.tolerance
                );
            }
            Ok(())
        }
        Command::Reproduce(a) => {
            let (invocation, recorded_config, recorded) = commands::read_recorded(&a.report)?;
            init_threads(recorded_config.threads);
            commands::reproduce(&invocation, &recorded_config, &recorded)?;
            let name = match invocation {
                Invocation::Train { .. } => "train",
                Invocation::Evaluate { .. } => "evaluate",
                Invocation::Gridsearch { .. } => "gridsearch",
            };
            print_results(
                format,
                &serde_json::json!({ "reproduced": true, "command": name }),
                || format!("{name} results reproduced exactly\n"),
            )
        }
    }
}
