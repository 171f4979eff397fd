//! Run reports: the invocation and configuration of a run next to its results.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use catcast_core::pipeline::EvalMode;

use crate::args::StageSel;
use crate::config::RunConfig;
use crate::data::RowSet;

pub const TOOL: &str = "catcast";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command-specific arguments that are not part of [`RunConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Invocation {
    Train {
        data: PathBuf,
        stage: StageSel,
        out: PathBuf,
    },
    Evaluate {
        data: PathBuf,
        stage: StageSel,
        mode: EvalMode,
        models: Vec<PathBuf>,
        rows: RowSet,
    },
    Gridsearch {
        data: PathBuf,
        stage: u8,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    pub config: RunConfig,
    pub results: Value,
}

impl Report {
    pub fn new(invocation: Invocation, config: RunConfig, results: Value) -> Self {
        Report {
            tool: TOOL.to_owned(),
            version: VERSION.to_owned(),
            invocation,
            config,
            results,
        }
    }
}

/// One line of a grid-search trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum TraceLine {
    Header {
        tool: String,
        version: String,
        invocation: Invocation,
        config: Box<RunConfig>,
    },
    Config(catcast_core::search::ConfigRecord),
    Summary(Value),
}

/// Splits a trace into its header and the remaining lines.
pub fn parse_trace(text: &str) -> anyhow::Result<(Invocation, RunConfig, Vec<TraceLine>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or_else(|| anyhow::anyhow!("empty trace"))?;
    let TraceLine::Header {
        invocation, config, ..
    } = serde_json::from_str(first)?
    else {
        anyhow::bail!("trace does not start with a header record");
    };
    let rest = lines
        .map(serde_json::from_str)
        .collect::<Result<Vec<TraceLine>, _>>()?;
    Ok((invocation, *config, rest))
}
