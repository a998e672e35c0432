//! Comparative statics: one-parameter perturbations of a base market, solved
//! concurrently and collected into a table in input order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::solve_equilibrium;
use crate::error::{Error, Result};
use crate::firm_model::{Market, MarketParams, Tolerances, PARAM_NAMES};
use crate::regulator::{CapSearch, WelfareProblem, WelfareSpec};
use crate::stationary::Regime;

/// Keys a scenario may override besides the market parameters.
pub const WELFARE_KEYS: [&str; 3] = ["gamma", "w_exp", "capital_rate"];

/// How a scenario's cap is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Mode {
    /// The cap is the parameter `e_max`.
    FixedCap,
    /// The cap maximizes welfare under `spec`.
    WelfareMax { spec: WelfareSpec, search: CapSearch },
}

/// One row of a table: a label and single-assignment overrides of the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    #[serde(flatten)]
    pub mode: Mode,
}

impl Scenario {
    pub fn fixed(label: impl Into<String>, overrides: &[(&str, f64)]) -> Self {
        Self {
            label: label.into(),
            overrides: overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            mode: Mode::FixedCap,
        }
    }

    pub fn welfare(label: impl Into<String>, overrides: &[(&str, f64)], spec: WelfareSpec, search: CapSearch) -> Self {
        Self { mode: Mode::WelfareMax { spec, search }, ..Self::fixed(label, overrides) }
    }

    /// The overridden parameters and welfare block, validated.
    pub fn resolve(&self, base: &MarketParams) -> Result<(MarketParams, Mode)> {
        let mut params = *base;
        let mut mode = self.mode;
        for (key, &value) in &self.overrides {
            if params.set(key, value) {
                continue;
            }
            match (&mut mode, key.as_str()) {
                (Mode::WelfareMax { spec, .. }, "gamma") => spec.gamma = value,
                (Mode::WelfareMax { spec, .. }, "w_exp") => spec.w_exp = value,
                (Mode::WelfareMax { spec, .. }, "capital_rate") => spec.capital_rate = value,
                (Mode::FixedCap, k) if WELFARE_KEYS.contains(&k) => {
                    return Err(Error::Validation(format!(
                        "scenario '{}': override '{k}' only applies in welfare-max mode",
                        self.label
                    )))
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "scenario '{}': unknown override '{key}' (expected one of {} or {})",
                        self.label,
                        PARAM_NAMES.join(", "),
                        WELFARE_KEYS.join(", ")
                    )))
                }
            }
        }
        params.validate().map_err(|e| e.at(&format!("scenario '{}'", self.label)))?;
        if let Mode::WelfareMax { spec, search } = &mode {
            spec.validate()?;
            search.validate()?;
        }
        Ok((params, mode))
    }
}

/// Solved values of one row, at full precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowValues {
    pub carbon_price: f64,
    pub investment_threshold: f64,
    pub turnover_rate: f64,
    pub overall_output: f64,
    /// The cap in force: the optimum in welfare-max mode, else `e_max`.
    pub e_max: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub welfare_max: bool,
    pub result: Result<RowValues>,
}

/// Rows in input order, base first.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticsTable {
    pub rows: Vec<Row>,
}

impl StaticsTable {
    /// Whether the table carries the optimal-cap column.
    pub fn has_welfare_column(&self) -> bool {
        self.rows.iter().any(|r| r.welfare_max)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    pub fn row(&self, label: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Solve one scenario.
pub fn solve_scenario(base: &MarketParams, tol: &Tolerances, scenario: &Scenario) -> Result<RowValues> {
    let (params, mode) = scenario.resolve(base)?;
    let market = Market::with_tolerances(params, *tol)?;
    let eq = match mode {
        Mode::FixedCap => std::sync::Arc::new(solve_equilibrium(&market)?),
        Mode::WelfareMax { spec, search } => WelfareProblem::new(market).solve_optimal_cap(&search, &spec)?.equilibrium,
    };
    Ok(RowValues {
        carbon_price: eq.c_p_star,
        investment_threshold: eq.b_star,
        turnover_rate: eq.turnover,
        overall_output: eq.output(),
        e_max: eq.e_max,
        regime: eq.regime(),
    })
}

/// Solve the base market (fixed cap, labelled "base") and every scenario on a
/// pool of `workers` threads. Row failures are recorded, not propagated.
pub fn run_scenarios(
    base: &MarketParams,
    tol: &Tolerances,
    scenarios: &[Scenario],
    workers: usize,
) -> Result<StaticsTable> {
    Market::with_tolerances(*base, *tol)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("cannot start {workers} workers: {e}")))?;
    let all: Vec<Scenario> = std::iter::once(Scenario::fixed("base", &[])).chain(scenarios.iter().cloned()).collect();
    let rows = pool.install(|| {
        all.par_iter()
            .map(|s| Row {
                label: s.label.clone(),
                welfare_max: matches!(s.mode, Mode::WelfareMax { .. }),
                result: solve_scenario(base, tol, s),
            })
            .collect()
    });
    Ok(StaticsTable { rows })
}

/// Serialization formats of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Text,
}

pub const CSV_COLUMNS: [&str; 5] = ["label", "carbon_price", "investment_threshold", "turnover_rate", "overall_output"];

/// `x` rounded to 4 significant figures, printed in shortest form.
pub fn four_significant(x: f64) -> String {
    if !x.is_finite() {
        return "NA".into();
    }
    let rounded: f64 = format!("{x:.3e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn cells(row: &Row, welfare_column: bool) -> Vec<String> {
    let mut out = vec![row.label.clone()];
    match &row.result {
        Ok(v) => {
            out.extend(
                [v.carbon_price, v.investment_threshold, v.turnover_rate, v.overall_output].map(four_significant),
            );
            if welfare_column {
                out.push(four_significant(v.e_max));
            }
        }
        Err(_) => out.extend(vec!["NA".to_string(); if welfare_column { 5 } else { 4 }]),
    }
    out
}

/// Deterministic serialization of a table at 4 significant figures.
pub fn emit_table(table: &StaticsTable, format: TableFormat) -> String {
    let welfare_column = table.has_welfare_column();
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    if welfare_column {
        header.push("e_max_star");
    }
    match format {
        TableFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(&header).expect("in-memory write");
            for row in &table.rows {
                w.write_record(cells(row, welfare_column)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
        }
        TableFormat::Text => {
            let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
            lines[0].push("regime".into());
            for row in &table.rows {
                let mut c = cells(row, welfare_column);
                c.push(row.result.as_ref().map_or("NA".into(), |v| v.regime.to_string()));
                lines.push(c);
            }
            let widths: Vec<usize> =
                (0..lines[0].len()).map(|j| lines.iter().map(|l| l[j].chars().count()).max().unwrap_or(0)).collect();
            let mut out = String::new();
            for l in &lines {
                let padded: Vec<String> = l
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(j, (c, w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                writeln!(out, "{}", padded.join("  ").trim_end()).expect("writing to a String");
            }
            out
        }
    }
}
