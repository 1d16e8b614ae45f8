//! Evaluation: per-county errors, state-level aggregation, USDA comparison,
//! and plot-ready CSV emission.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Best published configuration's county-level mean squared error
/// (10 variables, 70,026 samples, 2 hidden layers). Not reproducible here —
/// it depends on a proprietary weather feed — and kept only as a
/// documentation constant for report footers.
pub const PUBLISHED_BEST_COUNTY_MSE: f64 = 191.0535;

/// One prediction joined with its observed yield.
#[derive(Debug, Clone, PartialEq)]
pub struct CountyRow {
    pub key: String,
    pub year: i32,
    pub predicted: f64,
    pub actual: f64,
    pub abs_error: f64,
}

/// One year of state-level comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRow {
    pub year: i32,
    pub predicted: f64,
    pub actual: Option<f64>,
    pub usda: Option<f64>,
}

/// How the state aggregate was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    AcreWeighted,
    Unweighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<CountyRow>,
    /// Aggregate MSE over all rows.
    pub mse: f64,
    /// Per-year MSE across counties.
    pub per_year_mse: BTreeMap<i32, f64>,
    pub state_rows: Vec<StateRow>,
    pub aggregation: Option<AggregationMode>,
}

/// Join predictions with actuals on (county, year) and compute absolute
/// errors plus aggregate and per-year MSE. Both maps must cover exactly the
/// same keys.
pub fn county_errors(
    preds: &BTreeMap<(String, i32), f64>,
    actuals: &BTreeMap<(String, i32), f64>,
) -> Result<(Vec<CountyRow>, f64, BTreeMap<i32, f64>)> {
    if preds.is_empty() {
        return Err(Error::Join("no predictions to evaluate".into()));
    }
    for key in preds.keys() {
        if !actuals.contains_key(key) {
            return Err(Error::Join(format!(
                "prediction for ({}, {}) has no actual yield",
                key.0, key.1
            )));
        }
    }
    for key in actuals.keys() {
        if !preds.contains_key(key) {
            return Err(Error::Join(format!(
                "actual yield for ({}, {}) has no prediction",
                key.0, key.1
            )));
        }
    }
    let mut rows = Vec::with_capacity(preds.len());
    let mut sq_sum = 0.0;
    let mut per_year: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    let mut abs_sum = 0.0;
    for ((key, year), &p) in preds {
        let a = actuals[&(key.clone(), *year)];
        let err = p - a;
        sq_sum += err * err;
        abs_sum += err.abs();
        let e = per_year.entry(*year).or_insert((0.0, 0));
        e.0 += err * err;
        e.1 += 1;
        rows.push(CountyRow {
            key: key.clone(),
            year: *year,
            predicted: p,
            actual: a,
            abs_error: err.abs(),
        });
    }
    let n = rows.len() as f64;
    let mse = sq_sum / n;
    // Jensen sanity check: mean of squares dominates square of means.
    let mean_abs = abs_sum / n;
    if mse + 1e-9 < mean_abs * mean_abs {
        return Err(Error::Numeric(format!(
            "MSE {mse} fell below squared mean absolute error {}",
            mean_abs * mean_abs
        )));
    }
    let per_year_mse = per_year
        .into_iter()
        .map(|(y, (s, c))| (y, s / c as f64))
        .collect();
    Ok((rows, mse, per_year_mse))
}

/// Aggregate county predictions to one state value per year. Uses a
/// harvested-acres weighted mean when weights cover every county in that
/// year, otherwise falls back to the unweighted mean (reported in the mode).
pub fn state_aggregate(
    rows: &[CountyRow],
    weights: &BTreeMap<String, f64>,
) -> Result<(BTreeMap<i32, f64>, AggregationMode)> {
    if rows.is_empty() {
        return Err(Error::Join("no rows to aggregate".into()));
    }
    let mut by_year: BTreeMap<i32, Vec<&CountyRow>> = BTreeMap::new();
    for r in rows {
        by_year.entry(r.year).or_default().push(r);
    }
    let full_coverage = rows.iter().all(|r| weights.contains_key(&r.key));
    let mode = if full_coverage && !weights.is_empty() {
        AggregationMode::AcreWeighted
    } else {
        AggregationMode::Unweighted
    };
    let mut out = BTreeMap::new();
    for (year, group) in by_year {
        let value = match mode {
            AggregationMode::AcreWeighted => {
                let wsum: f64 = group.iter().map(|r| weights[&r.key]).sum();
                if wsum <= 0.0 {
                    return Err(Error::Config(format!(
                        "harvested-acre weights for {year} sum to {wsum}"
                    )));
                }
                group
                    .iter()
                    .map(|r| weights[&r.key] * r.predicted)
                    .sum::<f64>()
                    / wsum
            }
            AggregationMode::Unweighted => {
                group.iter().map(|r| r.predicted).sum::<f64>() / group.len() as f64
            }
        };
        out.insert(year, value);
    }
    Ok((out, mode))
}

/// Reference table of state-level actual yields and USDA November
/// predictions, loaded from usda_reference.csv.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UsdaTable {
    /// year -> (actual state yield, USDA November prediction).
    pub rows: BTreeMap<i32, (f64, f64)>,
}

impl UsdaTable {
    pub fn parse_csv(path: &Path) -> Result<UsdaTable> {
        let file = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(file.clone(), io),
                other => Error::Parse {
                    file: file.clone(),
                    row: 0,
                    message: format!("{other:?}"),
                },
            })?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse {
                file: file.clone(),
                row: 0,
                message: e.to_string(),
            })?
            .clone();
        let mut idx = BTreeMap::new();
        for (i, h) in headers.iter().enumerate() {
            idx.insert(h.trim().to_string(), i);
        }
        for col in ["year", "actual", "usda_nov"] {
            if !idx.contains_key(col) {
                return Err(Error::Schema {
                    file,
                    column: col.into(),
                });
            }
        }
        let mut rows = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 2;
            let record = record.map_err(|e| Error::Parse {
                file: file.clone(),
                row,
                message: e.to_string(),
            })?;
            let get = |name: &str| record.get(idx[name]).unwrap_or("").trim().to_string();
            let year: i32 = get("year").parse().map_err(|_| Error::Parse {
                file: file.clone(),
                row,
                message: format!("bad year \"{}\"", get("year")),
            })?;
            let actual: f64 = get("actual").parse().map_err(|_| Error::Parse {
                file: file.clone(),
                row,
                message: format!("bad actual \"{}\"", get("actual")),
            })?;
            let usda: f64 = get("usda_nov").parse().map_err(|_| Error::Parse {
                file: file.clone(),
                row,
                message: format!("bad usda_nov \"{}\"", get("usda_nov")),
            })?;
            rows.insert(year, (actual, usda));
        }
        Ok(UsdaTable { rows })
    }
}

/// A state prediction set against the reference table, with signed errors.
#[derive(Debug, Clone, PartialEq)]
pub struct UsdaComparisonRow {
    pub year: i32,
    pub actual: f64,
    pub usda: f64,
    pub model: f64,
    pub usda_error: f64,
    pub model_error: f64,
}

/// Compare per-year state predictions with the reference table. Years
/// absent from the fixture are returned separately, not treated as errors.
pub fn usda_compare(
    state_preds: &BTreeMap<i32, f64>,
    reference: &UsdaTable,
) -> (Vec<UsdaComparisonRow>, Vec<i32>) {
    let mut rows = Vec::new();
    let mut uncompared = Vec::new();
    for (&year, &pred) in state_preds {
        match reference.rows.get(&year) {
            Some(&(actual, usda)) => rows.push(UsdaComparisonRow {
                year,
                actual,
                usda,
                model: pred,
                usda_error: usda - actual,
                model_error: pred - actual,
            }),
            None => uncompared.push(year),
        }
    }
    (rows, uncompared)
}

/// Assemble the full report.
pub fn build_report(
    preds: &BTreeMap<(String, i32), f64>,
    actuals: &BTreeMap<(String, i32), f64>,
    weights: &BTreeMap<String, f64>,
    reference: &UsdaTable,
) -> Result<EvalReport> {
    let (rows, mse, per_year_mse) = county_errors(preds, actuals)?;
    let (state_preds, mode) = state_aggregate(&rows, weights)?;
    let (cmp_rows, uncompared) = usda_compare(&state_preds, reference);
    let mut state_rows: Vec<StateRow> = cmp_rows
        .iter()
        .map(|r| StateRow {
            year: r.year,
            predicted: r.model,
            actual: Some(r.actual),
            usda: Some(r.usda),
        })
        .collect();
    for year in uncompared {
        state_rows.push(StateRow {
            year,
            predicted: state_preds[&year],
            actual: None,
            usda: None,
        });
    }
    state_rows.sort_by_key(|r| r.year);
    Ok(EvalReport {
        rows,
        mse,
        per_year_mse,
        state_rows,
        aggregation: Some(mode),
    })
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(content.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt4_opt(v: Option<f64>) -> String {
    v.map(fmt4).unwrap_or_default()
}

/// Emit the two plot-ready CSVs (county and state level), sorted, with
/// fixed 4-decimal formatting so re-emission is byte-identical.
pub fn emit_plot_csv(report: &EvalReport, dir: &Path) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let county_path = dir.join("county_errors.csv");
    let mut county = String::from("key,year,pred,actual,abs_err\n");
    let mut rows = report.rows.clone();
    rows.sort_by(|a, b| (&a.key, a.year).cmp(&(&b.key, b.year)));
    for r in &rows {
        county.push_str(&format!(
            "{},{},{},{},{}\n",
            r.key,
            r.year,
            fmt4(r.predicted),
            fmt4(r.actual),
            fmt4(r.abs_error)
        ));
    }
    write_file(&county_path, &county)?;

    let state_path = dir.join("state_comparison.csv");
    let mut state = String::from("year,pred,actual,usda\n");
    for r in &report.state_rows {
        state.push_str(&format!(
            "{},{},{},{}\n",
            r.year,
            fmt4(r.predicted),
            fmt4_opt(r.actual),
            fmt4_opt(r.usda)
        ));
    }
    write_file(&state_path, &state)?;
    Ok((county_path, state_path))
}
