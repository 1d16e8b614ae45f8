//! CSV ingestion for the four input families: weather, yields, soil, PDSI.
//!
//! Weather rows may be daily (empty `hour` column) or hourly (hour 0-23);
//! hourly rows are always collapsed to daily at ingestion. On an hourly row
//! `tmax_f`/`tmin_f` are the within-hour extremes, `tmean_f` the hourly mean
//! temperature, and `rain_in` the hourly total; `rain_max_in` is ignored on
//! hourly rows and reconstructed as the largest hourly total. Rows outside
//! the April 1 – October 31 window are rejected rather than dropped.
//!
//! Parsers never impute silently. Missing days are an error unless linear
//! imputation over short gaps is explicitly enabled, and every imputed day
//! is reported back to the caller.

use crate::error::{Error, Result};
use crate::types::{
    CountyMeta, DailyWeather, Date, PdsiSeries, Soil, YieldRecord, SEASON_DAYS,
    SEASON_FIRST_MONTH, SEASON_LAST_MONTH, SOIL_ATTRIBUTES,
};
use std::collections::BTreeMap;
use std::path::Path;

/// Daily weather series keyed by (county, year).
pub type WeatherMap = BTreeMap<(String, i32), Vec<DailyWeather>>;

/// Weather series per (county, year), plus the static per-county and
/// per-CRD inputs. Immutable once assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub weather: WeatherMap,
    pub yields: Vec<YieldRecord>,
    pub counties: BTreeMap<String, CountyMeta>,
    pub pdsi: BTreeMap<String, PdsiSeries>,
}

impl RawDataset {
    /// Check cross-file invariants: yields reference known counties, every
    /// county's CRD has a PDSI series, and every weather series covers the
    /// full 214-day window.
    pub fn validate(&self) -> Result<()> {
        for y in &self.yields {
            y.validate()?;
            if !self.counties.contains_key(&y.county_id) {
                return Err(Error::Coverage(format!(
                    "yield record for {} {} has no county metadata",
                    y.county_id, y.year
                )));
            }
        }
        for meta in self.counties.values() {
            meta.validate()?;
            if !self.pdsi.contains_key(&meta.crd_id) {
                return Err(Error::Coverage(format!(
                    "county {} references CRD {} with no PDSI series",
                    meta.county_id, meta.crd_id
                )));
            }
        }
        for ((county, year), days) in &self.weather {
            check_window_coverage(county, *year, days)?;
            for d in days {
                d.validate()?;
            }
        }
        Ok(())
    }
}

fn check_window_coverage(county: &str, year: i32, days: &[DailyWeather]) -> Result<()> {
    if days.len() != SEASON_DAYS {
        // Find the first missing date for the error message.
        let mut have = [false; SEASON_DAYS];
        for d in days {
            if let Some(i) = d.date.day_of_season() {
                have[i] = true;
            }
        }
        let missing = have.iter().position(|&h| !h).unwrap_or(0);
        let date = Date::from_day_of_season(year, missing)?;
        return Err(Error::Gap(format!(
            "({county}, {year}) weather is missing {date} ({} of {SEASON_DAYS} days present)",
            days.len()
        )));
    }
    for (i, d) in days.iter().enumerate() {
        if d.date.year != year || d.date.day_of_season() != Some(i) {
            return Err(Error::Gap(format!(
                "({county}, {year}) weather out of order or misdated at {}",
                d.date
            )));
        }
    }
    Ok(())
}

/// Gap handling for missing weather days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImputeMode {
    /// Any missing day is an error.
    #[default]
    None,
    /// Linearly interpolate interior gaps up to `max_gap` consecutive days.
    Linear { max_gap: usize },
}

/// A day filled in by imputation, reported so the caller can log it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedDay {
    pub county_id: String,
    pub year: i32,
    pub date: Date,
}

struct HourRow {
    tmax_f: f64,
    tmin_f: f64,
    tmean_f: f64,
    rain_in: f64,
    wind_mph: f64,
}

#[derive(Default)]
struct DayAccum {
    daily: Option<DailyWeather>,
    hourly: BTreeMap<u8, HourRow>,
}

fn parse_field<T: std::str::FromStr>(
    file: &str,
    row: usize,
    name: &str,
    raw: &str,
) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        file: file.to_string(),
        row,
        message: format!("field {name} has non-numeric value \"{raw}\""),
    })
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path.display().to_string(), io),
            other => Error::Parse {
                file: path.display().to_string(),
                row: 0,
                message: format!("{other:?}"),
            },
        })
}

fn header_index(
    file: &str,
    headers: &csv::StringRecord,
    required: &[&str],
) -> Result<BTreeMap<String, usize>> {
    let mut idx = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        idx.insert(h.trim().to_string(), i);
    }
    for col in required {
        if !idx.contains_key(*col) {
            return Err(Error::Schema {
                file: file.to_string(),
                column: (*col).to_string(),
            });
        }
    }
    Ok(idx)
}

fn get_col<'r>(record: &'r csv::StringRecord, idx: &BTreeMap<String, usize>, name: &str) -> &'r str {
    idx.get(name).and_then(|&i| record.get(i)).unwrap_or("")
}

/// Parse weather.csv with default (strict) gap handling.
pub fn parse_weather_csv(path: &Path) -> Result<WeatherMap> {
    let (map, _imputed) = parse_weather_csv_with(path, ImputeMode::None)?;
    Ok(map)
}

/// Parse weather.csv, collapsing hourly rows to daily and optionally
/// imputing short interior gaps.
pub fn parse_weather_csv_with(
    path: &Path,
    impute: ImputeMode,
) -> Result<(WeatherMap, Vec<ImputedDay>)> {
    let file = path.display().to_string();
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            file: file.clone(),
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let idx = header_index(
        &file,
        &headers,
        &[
            "county_id",
            "date",
            "hour",
            "tmax_f",
            "tmin_f",
            "tmean_f",
            "rain_in",
            "rain_max_in",
            "wind_mph",
        ],
    )?;

    let mut acc: BTreeMap<(String, i32), BTreeMap<Date, DayAccum>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after header
        let record = record.map_err(|e| Error::Parse {
            file: file.clone(),
            row,
            message: e.to_string(),
        })?;
        let county = get_col(&record, &idx, "county_id").trim().to_string();
        if county.is_empty() {
            return Err(Error::Parse {
                file: file.clone(),
                row,
                message: "empty county_id".into(),
            });
        }
        let date = Date::parse(get_col(&record, &idx, "date").trim()).map_err(|e| Error::Parse {
            file: file.clone(),
            row,
            message: e.to_string(),
        })?;
        if date.day_of_season().is_none() {
            return Err(Error::Range {
                file: file.clone(),
                row,
                message: format!("date {date} outside the April-October window"),
            });
        }
        let tmax_f = parse_field(&file, row, "tmax_f", get_col(&record, &idx, "tmax_f"))?;
        let tmin_f = parse_field(&file, row, "tmin_f", get_col(&record, &idx, "tmin_f"))?;
        let tmean_f = parse_field(&file, row, "tmean_f", get_col(&record, &idx, "tmean_f"))?;
        let rain_in = parse_field(&file, row, "rain_in", get_col(&record, &idx, "rain_in"))?;
        let rain_max_raw = get_col(&record, &idx, "rain_max_in");
        let wind_mph = parse_field(&file, row, "wind_mph", get_col(&record, &idx, "wind_mph"))?;

        let hour_raw = get_col(&record, &idx, "hour").trim().to_string();
        let day = acc
            .entry((county.clone(), date.year))
            .or_default()
            .entry(date)
            .or_default();
        if hour_raw.is_empty() {
            let rain_max_in = parse_field(&file, row, "rain_max_in", rain_max_raw)?;
            let w = DailyWeather {
                date,
                tmax_f,
                tmin_f,
                tmean_f,
                rain_in,
                rain_max_in,
                wind_mph,
            };
            if day.daily.replace(w).is_some() {
                return Err(Error::Duplicate(format!(
                    "{file} row {row}: duplicate daily row for {county} {date}"
                )));
            }
        } else {
            let hour: u8 = parse_field(&file, row, "hour", &hour_raw)?;
            if hour > 23 {
                return Err(Error::Range {
                    file: file.clone(),
                    row,
                    message: format!("hour {hour} outside 0-23"),
                });
            }
            let h = HourRow {
                tmax_f,
                tmin_f,
                tmean_f,
                rain_in,
                wind_mph,
            };
            if day.hourly.insert(hour, h).is_some() {
                return Err(Error::Duplicate(format!(
                    "{file} row {row}: duplicate hour {hour} for {county} {date}"
                )));
            }
        }
    }

    let mut out: WeatherMap = BTreeMap::new();
    let mut imputed = Vec::new();
    for ((county, year), days) in acc {
        let mut series = Vec::with_capacity(days.len());
        for (date, day) in days {
            let collapsed = match (day.daily, day.hourly.is_empty()) {
                (Some(_), false) => {
                    return Err(Error::Parse {
                        file: file.clone(),
                        row: 0,
                        message: format!(
                            "{county} {date} mixes daily and hourly rows"
                        ),
                    })
                }
                (Some(w), true) => w,
                (None, false) => collapse_hours(date, &day.hourly),
                (None, true) => unreachable!("day entry created without rows"),
            };
            collapsed.validate().map_err(|e| {
                Error::Domain(format!("{file}: {county} {date}: {e}"))
            })?;
            series.push(collapsed);
        }
        let filled = fill_gaps(&county, year, series, impute, &mut imputed)?;
        check_window_coverage(&county, year, &filled)?;
        out.insert((county, year), filled);
    }
    Ok((out, imputed))
}

/// Collapse one day's hourly rows. The rows are reduced in hour order, so
/// the result is independent of input row order.
fn collapse_hours(date: Date, hours: &BTreeMap<u8, HourRow>) -> DailyWeather {
    let mut tmax = f64::NEG_INFINITY;
    let mut tmin = f64::INFINITY;
    let mut tmean_sum = 0.0;
    let mut rain_total = 0.0;
    let mut rain_max: f64 = 0.0;
    let mut wind_sum = 0.0;
    for h in hours.values() {
        tmax = tmax.max(h.tmax_f);
        tmin = tmin.min(h.tmin_f);
        tmean_sum += h.tmean_f;
        rain_total += h.rain_in;
        rain_max = rain_max.max(h.rain_in);
        wind_sum += h.wind_mph;
    }
    let n = hours.len() as f64;
    DailyWeather {
        date,
        tmax_f: tmax,
        tmin_f: tmin,
        tmean_f: tmean_sum / n,
        rain_in: rain_total,
        rain_max_in: rain_max,
        wind_mph: wind_sum / n,
    }
}

fn fill_gaps(
    county: &str,
    year: i32,
    series: Vec<DailyWeather>,
    impute: ImputeMode,
    imputed: &mut Vec<ImputedDay>,
) -> Result<Vec<DailyWeather>> {
    let max_gap = match impute {
        ImputeMode::None => return Ok(series),
        ImputeMode::Linear { max_gap } => max_gap,
    };
    let mut slots: Vec<Option<DailyWeather>> = vec![None; SEASON_DAYS];
    for d in series {
        if let Some(i) = d.date.day_of_season() {
            slots[i] = Some(d);
        }
    }
    let mut i = 0;
    while i < SEASON_DAYS {
        if slots[i].is_some() {
            i += 1;
            continue;
        }
        let gap_start = i;
        while i < SEASON_DAYS && slots[i].is_none() {
            i += 1;
        }
        let gap_len = i - gap_start;
        let first_missing = Date::from_day_of_season(year, gap_start)?;
        if gap_start == 0 || i == SEASON_DAYS || gap_len > max_gap {
            return Err(Error::Gap(format!(
                "({county}, {year}) weather is missing {first_missing} \
                 (gap of {gap_len} days, imputation limit {max_gap})"
            )));
        }
        let before = slots[gap_start - 1].clone().unwrap();
        let after = slots[i].clone().unwrap();
        for (k, slot) in slots.iter_mut().enumerate().take(i).skip(gap_start) {
            let frac = (k - gap_start + 1) as f64 / (gap_len + 1) as f64;
            let lerp = |a: f64, b: f64| a + (b - a) * frac;
            let date = Date::from_day_of_season(year, k)?;
            *slot = Some(DailyWeather {
                date,
                tmax_f: lerp(before.tmax_f, after.tmax_f),
                tmin_f: lerp(before.tmin_f, after.tmin_f),
                tmean_f: lerp(before.tmean_f, after.tmean_f),
                rain_in: lerp(before.rain_in, after.rain_in),
                rain_max_in: lerp(before.rain_max_in, after.rain_max_in),
                wind_mph: lerp(before.wind_mph, after.wind_mph),
            });
            imputed.push(ImputedDay {
                county_id: county.to_string(),
                year,
                date,
            });
        }
    }
    Ok(slots.into_iter().map(|s| s.unwrap()).collect())
}

/// Parse yield.csv: county_id,year,yield_bu_ac.
pub fn parse_yield_csv(path: &Path) -> Result<Vec<YieldRecord>> {
    let file = path.display().to_string();
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            file: file.clone(),
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let idx = header_index(&file, &headers, &["county_id", "year", "yield_bu_ac"])?;

    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            file: file.clone(),
            row,
            message: e.to_string(),
        })?;
        let county_id = get_col(&record, &idx, "county_id").trim().to_string();
        let year: i32 = parse_field(&file, row, "year", get_col(&record, &idx, "year"))?;
        let yield_bu_ac: f64 =
            parse_field(&file, row, "yield_bu_ac", get_col(&record, &idx, "yield_bu_ac"))?;
        if !yield_bu_ac.is_finite() || yield_bu_ac <= 0.0 {
            return Err(Error::Range {
                file: file.clone(),
                row,
                message: format!("yield_bu_ac {yield_bu_ac} must be positive"),
            });
        }
        if !seen.insert((county_id.clone(), year)) {
            return Err(Error::Duplicate(format!(
                "{file} row {row}: duplicate yield record for ({county_id}, {year})"
            )));
        }
        out.push(YieldRecord {
            county_id,
            year,
            yield_bu_ac,
        });
    }
    Ok(out)
}

/// Parse soil.csv into per-county metadata. The `harvested_acres` column is
/// optional; when present, empty values mean "unknown".
pub fn parse_soil_csv(path: &Path) -> Result<BTreeMap<String, CountyMeta>> {
    let file = path.display().to_string();
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            file: file.clone(),
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let mut required: Vec<&str> = vec!["county_id", "crd_id"];
    required.extend_from_slice(&SOIL_ATTRIBUTES);
    let idx = header_index(&file, &headers, &required)?;
    let has_acres = idx.contains_key("harvested_acres");

    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            file: file.clone(),
            row,
            message: e.to_string(),
        })?;
        let county_id = get_col(&record, &idx, "county_id").trim().to_string();
        let crd_id = get_col(&record, &idx, "crd_id").trim().to_string();
        let mut soil_vals = [0.0f64; 14];
        for (k, name) in SOIL_ATTRIBUTES.iter().enumerate() {
            soil_vals[k] = parse_field(&file, row, name, get_col(&record, &idx, name))?;
        }
        let soil = Soil {
            ffd: soil_vals[0],
            sandtotal: soil_vals[1],
            silttotal: soil_vals[2],
            claytotal: soil_vals[3],
            om: soil_vals[4],
            bulk_density: soil_vals[5],
            lep: soil_vals[6],
            caco3: soil_vals[7],
            ec: soil_vals[8],
            soc0_150: soil_vals[9],
            rootznaws: soil_vals[10],
            droughty: soil_vals[11],
            sand: soil_vals[12],
            share_cropland: soil_vals[13],
        };
        let harvested_acres = if has_acres {
            let raw = get_col(&record, &idx, "harvested_acres").trim().to_string();
            if raw.is_empty() {
                None
            } else {
                Some(parse_field(&file, row, "harvested_acres", &raw)?)
            }
        } else {
            None
        };
        let meta = CountyMeta {
            county_id: county_id.clone(),
            crd_id,
            soil,
            harvested_acres,
        };
        meta.validate().map_err(|e| Error::Range {
            file: file.clone(),
            row,
            message: e.to_string(),
        })?;
        if out.insert(county_id.clone(), meta).is_some() {
            return Err(Error::Duplicate(format!(
                "{file} row {row}: duplicate soil row for county {county_id}"
            )));
        }
    }
    Ok(out)
}

/// Parse pdsi.csv: crd_id,year,month,pdsi. Months April-October must be
/// present for every (CRD, year) that appears at all.
pub fn parse_pdsi_csv(path: &Path) -> Result<BTreeMap<String, PdsiSeries>> {
    let file = path.display().to_string();
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            file: file.clone(),
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let idx = header_index(&file, &headers, &["crd_id", "year", "month", "pdsi"])?;

    let mut out: BTreeMap<String, PdsiSeries> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            file: file.clone(),
            row,
            message: e.to_string(),
        })?;
        let crd_id = get_col(&record, &idx, "crd_id").trim().to_string();
        let year: i32 = parse_field(&file, row, "year", get_col(&record, &idx, "year"))?;
        let month: u8 = parse_field(&file, row, "month", get_col(&record, &idx, "month"))?;
        if !(1..=12).contains(&month) {
            return Err(Error::Range {
                file: file.clone(),
                row,
                message: format!("month {month} outside 1-12"),
            });
        }
        let pdsi: f64 = parse_field(&file, row, "pdsi", get_col(&record, &idx, "pdsi"))?;
        let series = out
            .entry(crd_id.clone())
            .or_insert_with(|| PdsiSeries::new(crd_id.clone()));
        if series.get(year, month).is_some() {
            return Err(Error::Duplicate(format!(
                "{file} row {row}: duplicate PDSI value for ({crd_id}, {year}, {month})"
            )));
        }
        series.insert(year, month, pdsi).map_err(|e| Error::Range {
            file: file.clone(),
            row,
            message: e.to_string(),
        })?;
    }

    for series in out.values() {
        let years: std::collections::BTreeSet<i32> =
            series.values.keys().map(|&(y, _)| y).collect();
        for year in years {
            for month in SEASON_FIRST_MONTH..=SEASON_LAST_MONTH {
                if series.get(year, month).is_none() {
                    return Err(Error::Gap(format!(
                        "PDSI series {} is missing {year}-{month:02}",
                        series.crd_id
                    )));
                }
            }
        }
    }
    Ok(out)
}

/// Parse crd_map.csv: county_id,crd_id.
pub fn parse_crd_map_csv(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = path.display().to_string();
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            file: file.clone(),
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let idx = header_index(&file, &headers, &["county_id", "crd_id"])?;
    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            file: file.clone(),
            row,
            message: e.to_string(),
        })?;
        let county = get_col(&record, &idx, "county_id").trim().to_string();
        let crd = get_col(&record, &idx, "crd_id").trim().to_string();
        if county.is_empty() || crd.is_empty() {
            return Err(Error::Parse {
                file: file.clone(),
                row,
                message: "empty county_id or crd_id".into(),
            });
        }
        if let Some(prev) = out.insert(county.clone(), crd.clone()) {
            if prev != crd {
                return Err(Error::Plan(format!(
                    "{file} row {row}: county {county} mapped to both {prev} and {crd}"
                )));
            }
        }
    }
    Ok(out)
}
