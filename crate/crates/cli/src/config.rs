use std::path::Path;

use anyhow::{Context, Result};
use oralscreen_core::cooccurrence::{GridOptions, Strata};
use oralscreen_core::masks::ColorThresholdConfig;
use oralscreen_core::model::BpPrecedence;
use oralscreen_core::stats::{TableEntry, TailMode};
use serde::Deserialize;

/// Settings read from `--config <json>`. Every field is optional; command
/// line flags take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub tail: Option<TailMode>,
    pub entry: Option<TableEntry>,
    pub bp_precedence: Option<BpPrecedence>,
    pub stratify: Option<Vec<Strata>>,
    pub mask: Option<ColorThresholdConfig>,
    /// Score threshold used by `seg-eval`.
    pub threshold: Option<f32>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: FileConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(mask) = &cfg.mask {
            mask.validate()
                .with_context(|| format!("mask settings in {}", path.display()))?;
        }
        Ok(cfg)
    }

    pub fn mask_config(&self) -> ColorThresholdConfig {
        self.mask.unwrap_or_default()
    }
}

/// Grid flags shared by `correlate` and `report`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct GridArgs {
    /// Significance level
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fisher alternative: two-sided, greater or less
    #[arg(long)]
    pub tail: Option<TailMode>,
    /// 2x2 layout: complement (with/without) or ratio-entry (with/group size)
    #[arg(long)]
    pub entry: Option<TableEntry>,
    /// Stratified grids to add: none, gender or age (repeatable)
    #[arg(long, value_name = "none|gender|age")]
    pub stratify: Vec<String>,
    /// Label for blood pressure readings that are both low and high
    #[arg(long, value_parser = parse_precedence)]
    pub bp_precedence: Option<BpPrecedence>,
}

fn parse_precedence(s: &str) -> Result<BpPrecedence, String> {
    match s {
        "high-first" | "high_first" => Ok(BpPrecedence::HighFirst),
        "low-first" | "low_first" => Ok(BpPrecedence::LowFirst),
        _ => Err(format!("`{s}` is not high-first/low-first")),
    }
}

pub struct ResolvedGrid {
    pub grid: GridOptions,
    pub strata: Vec<Strata>,
    pub bp_precedence: BpPrecedence,
}

impl GridArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<ResolvedGrid> {
        let defaults = GridOptions::default();
        let grid = GridOptions {
            alpha: self.alpha.or(file.alpha).unwrap_or(defaults.alpha),
            tail: self.tail.or(file.tail).unwrap_or(defaults.tail),
            entry: self.entry.or(file.entry).unwrap_or(defaults.entry),
        };
        grid.validate()?;
        let strata = if self.stratify.is_empty() {
            file.stratify.clone().unwrap_or_default()
        } else {
            let mut out = Vec::new();
            for s in &self.stratify {
                if s == "none" {
                    continue;
                }
                let parsed: Strata = s.parse()?;
                if !out.contains(&parsed) {
                    out.push(parsed);
                }
            }
            out
        };
        Ok(ResolvedGrid {
            grid,
            strata,
            bp_precedence: self
                .bp_precedence
                .or(file.bp_precedence)
                .unwrap_or_default(),
        })
    }
}
