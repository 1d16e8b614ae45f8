//! Flat key=value run configuration with flag overrides.
//!
//! One config file drives every subcommand; `--set key=value` overrides
//! individual entries. Lines starting with '#' are comments.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use yieldcast::{Error, Result};

pub const TRUNCATION_POINTS: [usize; 4] = [122, 153, 183, 214];

#[derive(Debug, Clone)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected key=value, got \"{line}\"",
                    path.display(),
                    i + 1
                )));
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut config = RunConfig { map };
        for o in overrides {
            let Some((k, v)) = o.split_once('=') else {
                return Err(Error::Config(format!(
                    "--set expects key=value, got \"{o}\""
                )));
            };
            config.map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(config)
    }

    pub fn opt(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.opt(key)
            .ok_or_else(|| Error::Config(format!("missing config key \"{key}\"")))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.str(key)?))
    }

    pub fn opt_path(&self, key: &str) -> Option<PathBuf> {
        self.opt(key).map(PathBuf::from)
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str, raw: &str) -> Result<T> {
        raw.parse().map_err(|_| {
            Error::Config(format!("config key \"{key}\" has invalid value \"{raw}\""))
        })
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.opt(key) {
            Some(raw) => self.parse_as(key, raw),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.opt(key) {
            Some(raw) => self.parse_as(key, raw),
            None => Ok(default),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.opt(key) {
            Some(raw) => self.parse_as(key, raw),
            None => Ok(default),
        }
    }

    pub fn i32_required(&self, key: &str) -> Result<i32> {
        let raw = self.str(key)?;
        self.parse_as(key, raw)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.opt(key) {
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(other) => Err(Error::Config(format!(
                "config key \"{key}\" expects true/false, got \"{other}\""
            ))),
            None => Ok(default),
        }
    }

    /// "1980-2012" style inclusive year range.
    pub fn years_or(&self, key: &str, default: RangeInclusive<i32>) -> Result<RangeInclusive<i32>> {
        let Some(raw) = self.opt(key) else {
            return Ok(default);
        };
        let Some((a, b)) = raw.split_once('-') else {
            return Err(Error::Config(format!(
                "config key \"{key}\" expects YYYY-YYYY, got \"{raw}\""
            )));
        };
        let lo: i32 = self.parse_as(key, a.trim())?;
        let hi: i32 = self.parse_as(key, b.trim())?;
        if lo > hi {
            return Err(Error::Config(format!(
                "config key \"{key}\" range {lo}-{hi} is inverted"
            )));
        }
        Ok(lo..=hi)
    }

    /// Comma-separated usize list, e.g. hidden_grid = 8,16,32.
    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.opt(key) {
            Some(raw) => raw
                .split(',')
                .map(|s| self.parse_as(key, s.trim()))
                .collect(),
            None => Ok(default.to_vec()),
        }
    }

    /// 'x'-separated per-layer hidden sizes, e.g. hidden = 16x8.
    pub fn hidden_sizes_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.opt(key) {
            Some(raw) => raw
                .split('x')
                .map(|s| self.parse_as(key, s.trim()))
                .collect(),
            None => Ok(default.to_vec()),
        }
    }

    pub fn train_years(&self) -> Result<RangeInclusive<i32>> {
        self.years_or("train_years", 1980..=2012)
    }

    pub fn test_years(&self) -> Result<RangeInclusive<i32>> {
        self.years_or("test_years", 2013..=2016)
    }

    pub fn truncate_t(&self) -> Result<usize> {
        let t = self.usize_or("truncate_t", 214)?;
        if !TRUNCATION_POINTS.contains(&t) {
            return Err(Error::Config(format!(
                "truncate_t {t} must be one of {TRUNCATION_POINTS:?}"
            )));
        }
        Ok(t)
    }

    pub fn trend_model(&self) -> Result<yieldcast::detrend::TrendModel> {
        let base_year = self.i32_required("base_year")?;
        match self.str("trend")? {
            "percentage" => Ok(yieldcast::detrend::TrendModel::percentage(base_year)),
            "constant" => Ok(yieldcast::detrend::TrendModel::constant(base_year)),
            other => Err(Error::Config(format!(
                "trend \"{other}\" must be percentage or constant"
            ))),
        }
    }

    pub fn feature_set(&self) -> Result<yieldcast::features::FeatureSet> {
        yieldcast::features::FeatureSet::parse(self.opt("features").unwrap_or("best10"))
    }

    pub fn augment_mode(&self) -> Result<Option<yieldcast::augment::AugmentMode>> {
        match self.opt("augment").unwrap_or("none") {
            "none" => Ok(None),
            "pairs" => Ok(Some(yieldcast::augment::AugmentMode::PairsOnly)),
            "pairs3" => Ok(Some(yieldcast::augment::AugmentMode::PairsAndTriples)),
            other => Err(Error::Config(format!(
                "augment \"{other}\" must be none, pairs, or pairs3"
            ))),
        }
    }

    pub fn impute_mode(&self) -> Result<yieldcast::ingest::ImputeMode> {
        match self.opt("impute").unwrap_or("none") {
            "none" => Ok(yieldcast::ingest::ImputeMode::None),
            "linear" => Ok(yieldcast::ingest::ImputeMode::Linear { max_gap: 3 }),
            other => Err(Error::Config(format!(
                "impute \"{other}\" must be none or linear"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let train = self.train_years()?;
        let test = self.test_years()?;
        if train.contains(test.start()) || train.contains(test.end()) || test.contains(train.start())
        {
            return Err(Error::Config(format!(
                "test years {}-{} overlap train years {}-{}",
                test.start(),
                test.end(),
                train.start(),
                train.end()
            )));
        }
        self.truncate_t()?;
        Ok(())
    }

    /// Canonical sorted key=value dump, used for hashing and manifests.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// FNV-1a 64-bit hash of the canonical dump.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}
