//! Yield de-trending.
//!
//! Corn yields rise over time through genetic gain, so historical yields are
//! adjusted to a common base year before training and predictions are mapped
//! back to the harvest year's own terms afterwards. Two schemes are
//! supported: a geometric 1.5%/year rate, and constant per-year gains of
//! 2.5 bu/ac before 2000 and 4.67 bu/ac from 2000 on. The year-to-year
//! increment from y to y+1 uses the pre-2000 gain when y < 2000.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default geometric rate per year.
pub const DEFAULT_RATE: f64 = 0.015;
/// Default constant gain per year before 2000, bu/ac.
pub const DEFAULT_GAIN_PRE_2000: f64 = 2.5;
/// Default constant gain per year from 2000 on, bu/ac.
pub const DEFAULT_GAIN_POST_2000: f64 = 4.67;

/// Trend removal scheme, fixed to a base year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrendModel {
    Percentage { base_year: i32, rate: f64 },
    Constant {
        base_year: i32,
        gain_pre_2000: f64,
        gain_post_2000: f64,
    },
}

impl TrendModel {
    /// Geometric scheme at the published 1.5%/year rate.
    pub fn percentage(base_year: i32) -> TrendModel {
        TrendModel::Percentage {
            base_year,
            rate: DEFAULT_RATE,
        }
    }

    /// Constant-gain scheme at the published 2.5 / 4.67 bu/ac/year gains.
    pub fn constant(base_year: i32) -> TrendModel {
        TrendModel::Constant {
            base_year,
            gain_pre_2000: DEFAULT_GAIN_PRE_2000,
            gain_post_2000: DEFAULT_GAIN_POST_2000,
        }
    }

    pub fn base_year(&self) -> i32 {
        match *self {
            TrendModel::Percentage { base_year, .. } => base_year,
            TrendModel::Constant { base_year, .. } => base_year,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TrendModel::Percentage { rate, .. } => {
                if !rate.is_finite() || rate <= 0.0 {
                    return Err(Error::Config(format!("trend rate {rate} must be positive")));
                }
            }
            TrendModel::Constant {
                gain_pre_2000,
                gain_post_2000,
                ..
            } => {
                if !gain_pre_2000.is_finite() || gain_pre_2000 <= 0.0 {
                    return Err(Error::Config(format!(
                        "pre-2000 gain {gain_pre_2000} must be positive"
                    )));
                }
                if !gain_post_2000.is_finite() || gain_post_2000 <= 0.0 {
                    return Err(Error::Config(format!(
                        "post-2000 gain {gain_post_2000} must be positive"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_year(&self, year: i32) -> Result<()> {
        if year > self.base_year() {
            return Err(Error::Domain(format!(
                "year {year} is after base year {}; future years are not adjusted",
                self.base_year()
            )));
        }
        Ok(())
    }

    /// Sum of constant gains from `year` up to (excluding) the base year.
    fn constant_offset(year: i32, base_year: i32, pre: f64, post: f64) -> f64 {
        let mut total = 0.0;
        for y in year..base_year {
            total += if y < 2000 { pre } else { post };
        }
        total
    }

    /// Bring a historical yield up to the base year.
    pub fn adjust(&self, yield_bu_ac: f64, year: i32) -> Result<f64> {
        self.check_year(year)?;
        Ok(match *self {
            TrendModel::Percentage { base_year, rate } => {
                yield_bu_ac * (1.0 + rate).powi(base_year - year)
            }
            TrendModel::Constant {
                base_year,
                gain_pre_2000,
                gain_post_2000,
            } => yield_bu_ac + Self::constant_offset(year, base_year, gain_pre_2000, gain_post_2000),
        })
    }

    /// Map an adjusted value back into year `year`'s own terms.
    pub fn invert(&self, adjusted: f64, year: i32) -> Result<f64> {
        self.check_year(year)?;
        Ok(match *self {
            TrendModel::Percentage { base_year, rate } => {
                adjusted / (1.0 + rate).powi(base_year - year)
            }
            TrendModel::Constant {
                base_year,
                gain_pre_2000,
                gain_post_2000,
            } => adjusted - Self::constant_offset(year, base_year, gain_pre_2000, gain_post_2000),
        })
    }
}
