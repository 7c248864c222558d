use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;
use series_rearrange::{make_escalating_blocks, make_square_blocks, Arithmetic, SeriesFile, SeriesSpec};

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BuiltIn {
    #[value(alias = "escalating-blocks", alias = "escalating_blocks")]
    Escalating,
    #[value(alias = "square_blocks", alias = "square")]
    SquareBlocks,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Float,
}

impl From<Mode> for Arithmetic {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => Arithmetic::Exact,
            Mode::Float => Arithmetic::Float,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SeriesArgs {
    /// Built-in generator.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub series: Option<BuiltIn>,
    /// Series spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Prepend a zero term so the series starts with a negative block
    /// (built-ins only; spec files carry their own `leading_zero`).
    #[arg(long, requires = "series")]
    pub leading_zero: bool,
    /// Arithmetic for the whole run [default: the spec file's, else exact].
    #[arg(long, value_enum)]
    pub arithmetic: Option<Mode>,
}

pub struct ResolvedSeries {
    pub spec: SeriesSpec,
    pub arithmetic: Arithmetic,
}

impl SeriesArgs {
    pub fn resolve(&self) -> anyhow::Result<ResolvedSeries> {
        let (spec, file_mode) = match (&self.series, &self.spec) {
            (Some(b), _) => {
                let spec = match b {
                    BuiltIn::Escalating => make_escalating_blocks(None),
                    BuiltIn::SquareBlocks => make_square_blocks(),
                };
                (spec.with_leading_zero(self.leading_zero), None)
            }
            (None, Some(path)) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                SeriesFile::from_json(&text)
                    .and_then(|f| f.to_spec().map(|s| (s, f.arithmetic)))
                    .map_err(|e| UsageError(format!("{}: {e}", path.display())))?
            }
            (None, None) => return Err(UsageError("one of --series or --spec is required".into()).into()),
        };
        let arithmetic = self.arithmetic.map(Arithmetic::from).or(file_mode).unwrap_or(Arithmetic::Exact);
        Ok(ResolvedSeries { spec, arithmetic })
    }
}

/// Everything that determines a run's output, echoed into every file.
/// Output locations are left out so that the same run written to two
/// directories produces identical bytes.
#[derive(Debug, Default, Serialize)]
pub struct RunConfig {
    pub subcommand: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arithmetic: Option<Arithmetic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i0_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_override: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub one_based: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct ProbeConfig {
    pub target: String,
    pub steps: usize,
}

impl RunConfig {
    pub fn new(subcommand: &'static str, series: &ResolvedSeries) -> Self {
        RunConfig {
            series: Some(SeriesFile::from_spec(&series.spec, series.arithmetic)),
            arithmetic: Some(series.arithmetic),
            ..RunConfig::bare(subcommand)
        }
    }

    /// A configuration that involves no series.
    pub fn bare(subcommand: &'static str) -> Self {
        RunConfig { subcommand, ..RunConfig::default() }
    }

    /// Single-line JSON for CSV header comments.
    pub fn header(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
