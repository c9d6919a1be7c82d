//! TOML run configuration: top-level keys configure the relationship
//! synthesis and optional `[table1]` / `[table2]` sections configure the
//! baseline single-table generators.

use relsyn_core::baseline::BaselineConfig;
use relsyn_core::orchestrator::SynthesisConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub synthesis: SynthesisConfig,
    pub table1: Option<BaselineConfig>,
    pub table2: Option<BaselineConfig>,
}

fn take_section(
    table: &mut toml::Table,
    key: &str,
) -> Result<Option<BaselineConfig>, CliError> {
    table
        .remove(key)
        .map(|v| {
            v.try_into()
                .map_err(|e| CliError::Usage(format!("config [{key}]: {e}")))
        })
        .transpose()
}

/// Parses a full run configuration. Unknown keys anywhere are errors.
pub fn parse_config(text: &str) -> Result<CliConfig, CliError> {
    let mut table: toml::Table =
        text.parse().map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let table1 = take_section(&mut table, "table1")?;
    let table2 = take_section(&mut table, "table2")?;
    let synthesis: SynthesisConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Usage(format!("config: {e}")))?;
    Ok(CliConfig { synthesis, table1, table2 })
}

/// The subset of keys the budget planner needs; extra keys are ignored so a
/// full synthesis config works unchanged.
#[derive(Debug, Clone, Deserialize)]
pub struct BudgetKeys {
    pub eps_rel: f64,
    pub delta_rel: f64,
    #[serde(rename = "T")]
    pub iterations: usize,
    #[serde(rename = "K")]
    pub workloads_per_iteration: usize,
    pub alpha: f64,
}

pub fn parse_budget_keys(text: &str) -> Result<BudgetKeys, CliError> {
    toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
}
