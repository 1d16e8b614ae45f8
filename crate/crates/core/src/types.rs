//! Domain types shared by the whole pipeline: calendar, weather, soil,
//! yields, and samples.

use crate::error::{Error, Result};
use crate::tensor::FeatureMatrix;
use std::collections::BTreeMap;
use std::fmt;

/// Days in the April 1 – October 31 growing season.
pub const SEASON_DAYS: usize = 214;

/// First growing-season month (April).
pub const SEASON_FIRST_MONTH: u8 = 4;

/// Last growing-season month (October).
pub const SEASON_LAST_MONTH: u8 = 10;

/// Day counts of April..October. Sums to 214.
pub const SEASON_MONTH_LENGTHS: [usize; 7] = [30, 31, 30, 31, 31, 30, 31];

/// Day index at which each season month starts: April 1 is index 0,
/// May 1 is 30, ..., October 1 is 183.
pub const SEASON_MONTH_STARTS: [usize; 7] = [0, 30, 61, 91, 122, 153, 183];

/// Day-index window covering July (July 1–31 from an April 1 origin).
pub const JULY_WINDOW: std::ops::RangeInclusive<usize> = 91..=121;

/// Calendar date. Only the growing-season arithmetic is specialised; validity
/// checks cover the full year so out-of-window rows are rejected cleanly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Date> {
        if !(1..=12).contains(&month) {
            return Err(Error::Domain(format!("month {month} out of range")));
        }
        if day < 1 || u32::from(day) > days_in_month(year, month) {
            return Err(Error::Domain(format!(
                "day {day} invalid for {year}-{month:02}"
            )));
        }
        Ok(Date { year, month, day })
    }

    /// Parse `YYYY-MM-DD`.
    pub fn parse(s: &str) -> Result<Date> {
        let mut parts = s.splitn(3, '-');
        let (y, m, d) = match (parts.next(), parts.next(), parts.next()) {
            (Some(y), Some(m), Some(d)) => (y, m, d),
            _ => return Err(Error::Domain(format!("malformed date \"{s}\""))),
        };
        let year: i32 = y
            .parse()
            .map_err(|_| Error::Domain(format!("malformed date \"{s}\"")))?;
        let month: u8 = m
            .parse()
            .map_err(|_| Error::Domain(format!("malformed date \"{s}\"")))?;
        let day: u8 = d
            .parse()
            .map_err(|_| Error::Domain(format!("malformed date \"{s}\"")))?;
        Date::new(year, month, day)
    }

    /// 0-based index within the April 1 – October 31 window, or None when the
    /// date falls outside the growing season.
    pub fn day_of_season(&self) -> Option<usize> {
        if self.month < SEASON_FIRST_MONTH || self.month > SEASON_LAST_MONTH {
            return None;
        }
        let month_idx = (self.month - SEASON_FIRST_MONTH) as usize;
        Some(SEASON_MONTH_STARTS[month_idx] + (self.day as usize - 1))
    }

    /// Inverse of [`day_of_season`](Self::day_of_season).
    pub fn from_day_of_season(year: i32, index: usize) -> Result<Date> {
        if index >= SEASON_DAYS {
            return Err(Error::Domain(format!(
                "season day index {index} out of range 0..{SEASON_DAYS}"
            )));
        }
        let mut month_idx = 0;
        while month_idx + 1 < SEASON_MONTH_STARTS.len() && SEASON_MONTH_STARTS[month_idx + 1] <= index
        {
            month_idx += 1;
        }
        let day = index - SEASON_MONTH_STARTS[month_idx] + 1;
        Date::new(year, SEASON_FIRST_MONTH + month_idx as u8, day as u8)
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

pub fn days_in_month(year: i32, month: u8) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

/// One county-day of weather observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyWeather {
    pub date: Date,
    pub tmax_f: f64,
    pub tmin_f: f64,
    pub tmean_f: f64,
    /// Daily total rainfall, inches.
    pub rain_in: f64,
    /// Maximum hourly rainfall within the day, inches.
    pub rain_max_in: f64,
    /// Daily mean wind speed, mph.
    pub wind_mph: f64,
}

impl DailyWeather {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tmax_f,
            self.tmin_f,
            self.tmean_f,
            self.rain_in,
            self.rain_max_in,
            self.wind_mph,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite weather value on {}",
                self.date
            )));
        }
        if self.tmin_f > self.tmean_f || self.tmean_f > self.tmax_f {
            return Err(Error::Domain(format!(
                "temperatures on {} violate tmin <= tmean <= tmax ({}, {}, {})",
                self.date, self.tmin_f, self.tmean_f, self.tmax_f
            )));
        }
        if self.rain_in < 0.0 || self.rain_max_in < 0.0 {
            return Err(Error::Domain(format!(
                "negative rainfall on {}",
                self.date
            )));
        }
        if self.rain_max_in > self.rain_in {
            return Err(Error::Domain(format!(
                "rain_max_in {} exceeds rain_in {} on {}",
                self.rain_max_in, self.rain_in, self.date
            )));
        }
        if self.wind_mph < 0.0 {
            return Err(Error::Domain(format!("negative wind on {}", self.date)));
        }
        Ok(())
    }
}

/// The 14 soil attribute columns, in soil.csv order.
pub const SOIL_ATTRIBUTES: [&str; 14] = [
    "ffd",
    "sandtotal",
    "silttotal",
    "claytotal",
    "om",
    "bulkDensity",
    "lep",
    "caco3",
    "ec",
    "soc0_150",
    "rootznaws",
    "droughty",
    "sand",
    "share_cropland",
];

/// Per-county soil attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Soil {
    pub ffd: f64,
    pub sandtotal: f64,
    pub silttotal: f64,
    pub claytotal: f64,
    pub om: f64,
    pub bulk_density: f64,
    pub lep: f64,
    pub caco3: f64,
    pub ec: f64,
    pub soc0_150: f64,
    /// Root zone available water storage, mm.
    pub rootznaws: f64,
    /// Drought vulnerability indicator, in [0, 1].
    pub droughty: f64,
    pub sand: f64,
    /// Cropland share of the county, in [0, 1].
    pub share_cropland: f64,
}

impl Soil {
    /// Look up an attribute by its soil.csv column name.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "ffd" => self.ffd,
            "sandtotal" => self.sandtotal,
            "silttotal" => self.silttotal,
            "claytotal" => self.claytotal,
            "om" => self.om,
            "bulkDensity" => self.bulk_density,
            "lep" => self.lep,
            "caco3" => self.caco3,
            "ec" => self.ec,
            "soc0_150" => self.soc0_150,
            "rootznaws" => self.rootznaws,
            "droughty" => self.droughty,
            "sand" => self.sand,
            "share_cropland" => self.share_cropland,
            _ => return None,
        })
    }

    pub fn values_in_order(&self) -> [f64; 14] {
        [
            self.ffd,
            self.sandtotal,
            self.silttotal,
            self.claytotal,
            self.om,
            self.bulk_density,
            self.lep,
            self.caco3,
            self.ec,
            self.soc0_150,
            self.rootznaws,
            self.droughty,
            self.sand,
            self.share_cropland,
        ]
    }
}

/// County identity, CRD membership, soil attributes, and optional acreage.
#[derive(Debug, Clone, PartialEq)]
pub struct CountyMeta {
    pub county_id: String,
    pub crd_id: String,
    pub soil: Soil,
    /// Harvested acres, used as state-aggregation weight when present.
    pub harvested_acres: Option<f64>,
}

impl CountyMeta {
    pub fn validate(&self) -> Result<()> {
        let vals = self.soil.values_in_order();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite soil value for county {}",
                self.county_id
            )));
        }
        if !(0.0..=1.0).contains(&self.soil.droughty) {
            return Err(Error::Domain(format!(
                "droughty {} for county {} outside [0, 1]",
                self.soil.droughty, self.county_id
            )));
        }
        if !(0.0..=1.0).contains(&self.soil.share_cropland) {
            return Err(Error::Domain(format!(
                "share_cropland {} for county {} outside [0, 1]",
                self.soil.share_cropland, self.county_id
            )));
        }
        if self.soil.rootznaws < 0.0 {
            return Err(Error::Domain(format!(
                "rootznaws {} for county {} negative",
                self.soil.rootznaws, self.county_id
            )));
        }
        if let Some(a) = self.harvested_acres {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::Domain(format!(
                    "harvested_acres {a} for county {} invalid",
                    self.county_id
                )));
            }
        }
        Ok(())
    }
}

/// Monthly PDSI values for one Crop Reporting District.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PdsiSeries {
    pub crd_id: String,
    /// (year, month) -> PDSI value in [-10, +10].
    pub values: BTreeMap<(i32, u8), f64>,
}

impl PdsiSeries {
    pub fn new(crd_id: impl Into<String>) -> PdsiSeries {
        PdsiSeries {
            crd_id: crd_id.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, year: i32, month: u8, value: f64) -> Result<()> {
        if !value.is_finite() || !(-10.0..=10.0).contains(&value) {
            return Err(Error::Domain(format!(
                "PDSI {value} for {} {year}-{month:02} outside [-10, 10]",
                self.crd_id
            )));
        }
        self.values.insert((year, month), value);
        Ok(())
    }

    pub fn get(&self, year: i32, month: u8) -> Option<f64> {
        self.values.get(&(year, month)).copied()
    }
}

/// One observed county yield.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldRecord {
    pub county_id: String,
    pub year: i32,
    pub yield_bu_ac: f64,
}

impl YieldRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.yield_bu_ac.is_finite() || self.yield_bu_ac <= 0.0 {
            return Err(Error::Domain(format!(
                "yield {} for {} {} must be positive",
                self.yield_bu_ac, self.county_id, self.year
            )));
        }
        Ok(())
    }
}

/// One training or evaluation record: a feature matrix over the season plus
/// the de-trended target yield. `key` is a county id, or for combination
/// samples the sorted county ids joined with '+'.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub key: String,
    pub year: i32,
    pub features: FeatureMatrix,
    pub target_adjusted: f64,
}

impl Sample {
    pub fn new(
        key: impl Into<String>,
        year: i32,
        features: FeatureMatrix,
        target_adjusted: f64,
    ) -> Result<Sample> {
        let key = key.into();
        if !target_adjusted.is_finite() || target_adjusted <= 0.0 {
            return Err(Error::Domain(format!(
                "adjusted target {target_adjusted} for {key} {year} must be positive"
            )));
        }
        if !features.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite feature value in sample {key} {year}"
            )));
        }
        Ok(Sample {
            key,
            year,
            features,
            target_adjusted,
        })
    }

    /// Combination samples average several counties and never correspond to a
    /// single real county.
    pub fn is_combination(&self) -> bool {
        self.key.contains('+')
    }
}
