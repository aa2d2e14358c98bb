//! Tab-separated input files.
//!
//! Summary statistics: header `variant`, then `beta_x<k>` and `se_x<k>` for
//! each exposure `k`, then `beta_y` and `se_y`. Every field must be present;
//! blank fields are errors. Trait correlations: a `K x K` numeric table with
//! an optional header row of exposure names and optional row labels.

use std::fs;
use std::path::Path;

use mvmr_me::data::check_correlation_matrix;
use mvmr_me::SummaryDataset;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Non-empty lines with their 1-based line numbers, split on tabs.
fn table_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.trim_start_matches('\u{feff}')
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i, l.split('\t').collect()))
}

fn parse_number(raw: &str, line: usize, column: &str, source: &str) -> CliResult<f64> {
    let t = raw.trim();
    if t.is_empty() {
        return Err(CliError::Input(format!("{source}: line {line}: column `{column}` is empty")));
    }
    t.parse::<f64>().map_err(|_| {
        CliError::Input(format!("{source}: line {line}: column `{column}`: cannot parse `{t}` as a number"))
    })
}

/// Summary statistics with the exposure labels taken from the header.
#[derive(Debug, Clone)]
pub struct SummaryInput {
    pub dataset: SummaryDataset,
    /// Suffixes of the `beta_x<k>` columns, in column order.
    pub exposures: Vec<String>,
}

impl SummaryInput {
    pub fn exposure_index(&self, name: &str) -> Option<usize> {
        self.exposures.iter().position(|e| e == name)
    }
}

struct Layout {
    variant: usize,
    beta_x: Vec<usize>,
    se_x: Vec<usize>,
    beta_y: usize,
    se_y: usize,
    exposures: Vec<String>,
}

fn layout(header: &[&str], source: &str) -> CliResult<Layout> {
    let names: Vec<&str> = header.iter().map(|h| h.trim()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(CliError::Input(format!("{source}: duplicate column `{n}`")));
        }
    }
    let find = |name: &str| {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| CliError::Input(format!("{source}: missing required column `{name}`")))
    };
    let variant = find("variant")?;
    let beta_y = find("beta_y")?;
    let se_y = find("se_y")?;
    let mut exposures = Vec::new();
    let mut beta_x = Vec::new();
    let mut se_x = Vec::new();
    for (i, n) in names.iter().enumerate() {
        if let Some(label) = n.strip_prefix("beta_x") {
            if label.is_empty() {
                return Err(CliError::Input(format!("{source}: column `beta_x` needs an exposure suffix")));
            }
            exposures.push(label.to_string());
            beta_x.push(i);
            se_x.push(find(&format!("se_x{label}"))?);
        }
    }
    if exposures.is_empty() {
        return Err(CliError::Input(format!("{source}: no `beta_x<k>` columns")));
    }
    for (i, n) in names.iter().enumerate() {
        let known = i == variant || i == beta_y || i == se_y || beta_x.contains(&i) || se_x.contains(&i);
        if !known {
            return Err(CliError::Input(format!("{source}: unexpected column `{n}`")));
        }
    }
    Ok(Layout {
        variant,
        beta_x,
        se_x,
        beta_y,
        se_y,
        exposures,
    })
}

pub fn parse_summary(text: &str, source: &str) -> CliResult<SummaryInput> {
    let mut lines = table_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Input(format!("{source}: empty file, header row required")))?;
    let lay = layout(&header, source)?;
    let width = header.len();
    let k = lay.exposures.len();
    let mut ids = Vec::new();
    let mut by = Vec::new();
    let mut sy = Vec::new();
    let mut bx = Vec::new();
    let mut sx = Vec::new();
    for (line, fields) in lines {
        if fields.len() != width {
            return Err(CliError::Input(format!(
                "{source}: line {line}: expected {width} fields, found {}",
                fields.len()
            )));
        }
        let id = fields[lay.variant].trim();
        if id.is_empty() {
            return Err(CliError::Input(format!("{source}: line {line}: column `variant` is empty")));
        }
        ids.push(id.to_string());
        by.push(parse_number(fields[lay.beta_y], line, "beta_y", source)?);
        sy.push(parse_number(fields[lay.se_y], line, "se_y", source)?);
        for c in 0..k {
            let label = &lay.exposures[c];
            bx.push(parse_number(fields[lay.beta_x[c]], line, &format!("beta_x{label}"), source)?);
            sx.push(parse_number(fields[lay.se_x[c]], line, &format!("se_x{label}"), source)?);
        }
    }
    let j = ids.len();
    if j == 0 {
        return Err(CliError::Input(format!("{source}: no data rows")));
    }
    let dataset = SummaryDataset::from_standard_errors(
        ids,
        DVector::from_vec(by),
        DVector::from_vec(sy),
        DMatrix::from_row_slice(j, k, &bx),
        &DMatrix::from_row_slice(j, k, &sx),
    )
    .map_err(|e| CliError::Input(format!("{source}: {e}")))?;
    Ok(SummaryInput {
        dataset,
        exposures: lay.exposures,
    })
}

pub fn read_summary(path: &Path) -> CliResult<SummaryInput> {
    parse_summary(&read_text(path)?, &path.display().to_string())
}

/// Parses a `K x K` correlation table for the given exposure labels.
pub fn parse_trait_correlation(text: &str, exposures: &[String], source: &str) -> CliResult<DMatrix<f64>> {
    let k = exposures.len();
    let mut rows: Vec<(usize, Vec<&str>)> = table_lines(text).collect();
    if rows.is_empty() {
        return Err(CliError::Input(format!("{source}: empty correlation file")));
    }
    let first_numeric = rows[0].1.iter().all(|f| f.trim().parse::<f64>().is_ok());
    if !first_numeric {
        let (_, header) = rows.remove(0);
        let names: Vec<&str> = header.iter().map(|h| h.trim()).filter(|h| !h.is_empty()).collect();
        let expected: Vec<&str> = exposures.iter().map(String::as_str).collect();
        if names != expected {
            return Err(CliError::Input(format!(
                "{source}: header {names:?} does not match exposures {expected:?}"
            )));
        }
    }
    if rows.len() != k {
        return Err(CliError::Input(format!("{source}: expected {k} rows, found {}", rows.len())));
    }
    let mut values = Vec::with_capacity(k * k);
    for (line, fields) in &rows {
        let numeric = match fields.len() {
            n if n == k => &fields[..],
            n if n == k + 1 => &fields[1..],
            n => {
                return Err(CliError::Input(format!("{source}: line {line}: expected {k} values, found {n}")));
            }
        };
        for (c, raw) in numeric.iter().enumerate() {
            values.push(parse_number(raw, *line, &format!("column {}", c + 1), source)?);
        }
    }
    let corr = DMatrix::from_row_slice(k, k, &values);
    check_correlation_matrix(&corr, k).map_err(|e| CliError::Input(format!("{source}: {e}")))?;
    Ok(corr)
}

pub fn read_trait_correlation(path: &Path, exposures: &[String]) -> CliResult<DMatrix<f64>> {
    parse_trait_correlation(&read_text(path)?, exposures, &path.display().to_string())
}

/// Effect estimates with 95% intervals, as used for mediation from
/// published results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectRow {
    pub estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Parses a table with columns `effect`, `estimate`, `ci_lower`, `ci_upper`
/// and rows `total` and `direct`. Returns `(total, direct)`.
pub fn parse_effects(text: &str, source: &str) -> CliResult<(EffectRow, EffectRow)> {
    let mut lines = table_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Input(format!("{source}: empty file, header row required")))?;
    let names: Vec<&str> = header.iter().map(|h| h.trim()).collect();
    let col = |name: &str| {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| CliError::Input(format!("{source}: missing required column `{name}`")))
    };
    let (ce, cv, cl, cu) = (col("effect")?, col("estimate")?, col("ci_lower")?, col("ci_upper")?);
    let mut total = None;
    let mut direct = None;
    for (line, fields) in lines {
        if fields.len() != names.len() {
            return Err(CliError::Input(format!(
                "{source}: line {line}: expected {} fields, found {}",
                names.len(),
                fields.len()
            )));
        }
        let row = EffectRow {
            estimate: parse_number(fields[cv], line, "estimate", source)?,
            ci_lower: parse_number(fields[cl], line, "ci_lower", source)?,
            ci_upper: parse_number(fields[cu], line, "ci_upper", source)?,
        };
        if !(row.ci_lower.is_finite() && row.ci_upper.is_finite() && row.estimate.is_finite())
            || row.ci_lower > row.ci_upper
            || row.estimate < row.ci_lower
            || row.estimate > row.ci_upper
        {
            return Err(CliError::Input(format!(
                "{source}: line {line}: malformed confidence interval ({}, {}) for estimate {}",
                row.ci_lower, row.ci_upper, row.estimate
            )));
        }
        let slot = match fields[ce].trim().to_ascii_lowercase().as_str() {
            "total" => &mut total,
            "direct" => &mut direct,
            other => {
                return Err(CliError::Input(format!(
                    "{source}: line {line}: effect must be `total` or `direct`, found `{other}`"
                )));
            }
        };
        if slot.replace(row).is_some() {
            return Err(CliError::Input(format!("{source}: line {line}: duplicate effect row")));
        }
    }
    match (total, direct) {
        (Some(t), Some(d)) => Ok((t, d)),
        (None, _) => Err(CliError::Input(format!("{source}: missing `total` row"))),
        (_, None) => Err(CliError::Input(format!("{source}: missing `direct` row"))),
    }
}
