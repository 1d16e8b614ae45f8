//! Fully synthetic datasets for desk-scale verification.
//!
//! Real county weather feeds are proprietary, so verification runs on
//! generated data with a known ground truth:
//!
//! ```text
//! yield = intercept + per_gdd * sum(GDD) + per_rain * sum(rain)
//!         - per_heat_day * #(days with tmax >= heat_threshold_f)
//!         + trend(year) + noise(sigma)
//! ```
//!
//! `trend(year)` is either zero or the negated constant-gain offset, so the
//! constant trend model removes it exactly. Generation is deterministic per
//! seed, and the writers emit CSVs that parse back to an identical dataset.

use crate::detrend::{DEFAULT_GAIN_POST_2000, DEFAULT_GAIN_PRE_2000};
use crate::error::{Error, Result};
use crate::features::gdd;
use crate::ingest::RawDataset;
use crate::types::{
    CountyMeta, DailyWeather, Date, PdsiSeries, Soil, YieldRecord, SEASON_DAYS,
    SEASON_FIRST_MONTH, SEASON_LAST_MONTH,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Embedded year trend of the synthetic ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthTrend {
    /// No year trend; targets need no de-trending.
    None,
    /// The constant-gain trend (2.5 bu/ac/yr before 2000, 4.67 after),
    /// anchored so the final generated year has zero offset.
    ConstantGain,
}

/// Ground-truth coefficients, returned alongside the dataset so learnability
/// tests can reconstruct the noiseless target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthCoeffs {
    pub intercept: f64,
    pub per_gdd: f64,
    pub per_rain_in: f64,
    pub per_heat_day: f64,
    pub heat_threshold_f: f64,
}

impl Default for TruthCoeffs {
    fn default() -> Self {
        TruthCoeffs {
            intercept: 30.0,
            per_gdd: 0.05,
            per_rain_in: 1.2,
            per_heat_day: 1.0,
            heat_threshold_f: 95.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub crds: usize,
    pub counties_per_crd: usize,
    pub start_year: i32,
    pub years: usize,
    pub coeffs: TruthCoeffs,
    pub trend: SynthTrend,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // Mirrors the verification scale: 9 CRDs x 11 counties x 37 years
        // (33 train + 4 test).
        SynthConfig {
            crds: 9,
            counties_per_crd: 11,
            start_year: 1980,
            years: 37,
            coeffs: TruthCoeffs::default(),
            trend: SynthTrend::ConstantGain,
            noise_sigma: 3.0,
        }
    }
}

/// The generated dataset plus everything needed to reconstruct its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub coeffs: TruthCoeffs,
    pub trend: SynthTrend,
    pub noise_sigma: f64,
    /// Base year of the embedded trend (last generated year).
    pub trend_base_year: i32,
}

impl SynthTruth {
    /// Noiseless, trend-free target for a county-year given its weather.
    pub fn noiseless_target(&self, days: &[DailyWeather]) -> f64 {
        let c = &self.coeffs;
        let mut gdd_sum = 0.0;
        let mut rain_sum = 0.0;
        let mut heat_days = 0.0;
        for d in days {
            gdd_sum += gdd(d.tmax_f, d.tmin_f).expect("generated weather is consistent");
            rain_sum += d.rain_in;
            if d.tmax_f >= c.heat_threshold_f {
                heat_days += 1.0;
            }
        }
        c.intercept + c.per_gdd * gdd_sum + c.per_rain_in * rain_sum - c.per_heat_day * heat_days
    }

    /// Trend offset added to year `year`'s yields (zero or negative).
    pub fn trend_offset(&self, year: i32) -> f64 {
        match self.trend {
            SynthTrend::None => 0.0,
            SynthTrend::ConstantGain => {
                let mut total = 0.0;
                for y in year..self.trend_base_year {
                    total += if y < 2000 {
                        DEFAULT_GAIN_PRE_2000
                    } else {
                        DEFAULT_GAIN_POST_2000
                    };
                }
                -total
            }
        }
    }
}

/// Standard normal via Box-Muller; deterministic for a seeded rng.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<(RawDataset, SynthTruth)> {
    if config.crds == 0 || config.counties_per_crd == 0 || config.years == 0 {
        return Err(Error::Config(format!(
            "degenerate synthetic layout: {} CRDs x {} counties x {} years",
            config.crds, config.counties_per_crd, config.years
        )));
    }
    if !config.noise_sigma.is_finite() || config.noise_sigma < 0.0 {
        return Err(Error::Config(format!(
            "noise sigma {} must be non-negative",
            config.noise_sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = SynthTruth {
        coeffs: config.coeffs,
        trend: config.trend,
        noise_sigma: config.noise_sigma,
        trend_base_year: config.start_year + config.years as i32 - 1,
    };

    let mut counties = BTreeMap::new();
    let mut pdsi = BTreeMap::new();
    let mut weather = BTreeMap::new();
    let mut yields = Vec::new();

    // Soil and CRD layout first, in a fixed order.
    let mut county_ids: Vec<(String, String)> = Vec::new();
    for c in 0..config.crds {
        let crd_id = format!("CRD{:02}", c + 1);
        for k in 0..config.counties_per_crd {
            let county_id = format!("C{:02}{:02}", c + 1, k + 1);
            county_ids.push((county_id, crd_id.clone()));
        }
    }
    for (county_id, crd_id) in &county_ids {
        let soil = Soil {
            ffd: rng.gen_range(140.0..175.0),
            sandtotal: rng.gen_range(10.0..60.0),
            silttotal: rng.gen_range(20.0..60.0),
            claytotal: rng.gen_range(15.0..35.0),
            om: rng.gen_range(1.0..6.0),
            bulk_density: rng.gen_range(1.1..1.6),
            lep: rng.gen_range(1.0..8.0),
            caco3: rng.gen_range(0.0..15.0),
            ec: rng.gen_range(0.0..1.5),
            soc0_150: rng.gen_range(40.0..120.0),
            rootznaws: rng.gen_range(150.0..320.0),
            droughty: if rng.gen_bool(0.35) { 1.0 } else { 0.0 },
            sand: rng.gen_range(10.0..60.0),
            share_cropland: rng.gen_range(0.4..0.95),
        };
        counties.insert(
            county_id.clone(),
            CountyMeta {
                county_id: county_id.clone(),
                crd_id: crd_id.clone(),
                soil,
                harvested_acres: Some((rng.gen_range(30.0_f64..140.0) * 1000.0).round()),
            },
        );
    }

    // PDSI per CRD: a clamped random walk across season months.
    for c in 0..config.crds {
        let crd_id = format!("CRD{:02}", c + 1);
        let mut series = PdsiSeries::new(crd_id.clone());
        for y in 0..config.years {
            let year = config.start_year + y as i32;
            let mut v: f64 = rng.gen_range(-3.0..3.0);
            for month in SEASON_FIRST_MONTH..=SEASON_LAST_MONTH {
                v = (v + rng.gen_range(-1.0..1.0)).clamp(-6.0, 6.0);
                series.insert(year, month, v)?;
            }
        }
        pdsi.insert(crd_id, series);
    }

    // Weather and yields, county-major then year-major.
    for (county_id, _crd_id) in &county_ids {
        for y in 0..config.years {
            let year = config.start_year + y as i32;
            // Year-level anomalies make season totals vary enough to learn from.
            let temp_offset = rng.gen_range(-2.0..2.0);
            let rain_scale = rng.gen_range(0.75..1.35);
            let mut days = Vec::with_capacity(SEASON_DAYS);
            for t in 0..SEASON_DAYS {
                let date = Date::from_day_of_season(year, t)?;
                let seasonal =
                    50.0 + 26.0 * (std::f64::consts::PI * t as f64 / (SEASON_DAYS - 1) as f64).sin();
                let tmean = seasonal + temp_offset + rng.gen_range(-6.0..6.0);
                let tmax = tmean + rng.gen_range(4.0..14.0);
                let tmin = tmean - rng.gen_range(4.0..14.0);
                let rain = if rng.gen_bool(0.35) {
                    rain_scale * rng.gen_range(0.05..1.2)
                } else {
                    0.0
                };
                let rain_max = if rain > 0.0 {
                    rain * rng.gen_range(0.3..1.0)
                } else {
                    0.0
                };
                days.push(DailyWeather {
                    date,
                    tmax_f: tmax,
                    tmin_f: tmin,
                    tmean_f: tmean,
                    rain_in: rain,
                    rain_max_in: rain_max,
                    wind_mph: rng.gen_range(2.0..18.0),
                });
            }
            let noise = if config.noise_sigma > 0.0 {
                config.noise_sigma * gauss(&mut rng)
            } else {
                // Keep the rng stream aligned so sigma only scales the noise.
                let _ = gauss(&mut rng);
                0.0
            };
            let value = truth.noiseless_target(&days) + truth.trend_offset(year) + noise;
            if value <= 0.0 {
                return Err(Error::Config(format!(
                    "synthetic yield {value:.2} for {county_id} {year} not positive; \
                     raise the intercept or lower the trend span"
                )));
            }
            yields.push(YieldRecord {
                county_id: county_id.clone(),
                year,
                yield_bu_ac: value,
            });
            weather.insert((county_id.clone(), year), days);
        }
    }

    let dataset = RawDataset {
        weather,
        yields,
        counties,
        pdsi,
    };
    dataset.validate()?;
    Ok((dataset, truth))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(std::io::BufWriter::new(f))
}

fn finish(mut w: std::io::BufWriter<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write weather in daily format. `{}`-formatting of f64 round-trips
/// exactly, which the serialize/parse identity relies on.
pub fn write_weather_csv(
    weather: &crate::ingest::WeatherMap,
    path: &Path,
) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(w, "county_id,date,hour,tmax_f,tmin_f,tmean_f,rain_in,rain_max_in,wind_mph")
        .map_err(io_err)?;
    for ((county, _year), days) in weather {
        for d in days {
            writeln!(
                w,
                "{county},{},,{},{},{},{},{},{}",
                d.date, d.tmax_f, d.tmin_f, d.tmean_f, d.rain_in, d.rain_max_in, d.wind_mph
            )
            .map_err(io_err)?;
        }
    }
    finish(w, path)
}

pub fn write_yield_csv(yields: &[YieldRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(w, "county_id,year,yield_bu_ac").map_err(io_err)?;
    for y in yields {
        writeln!(w, "{},{},{}", y.county_id, y.year, y.yield_bu_ac).map_err(io_err)?;
    }
    finish(w, path)
}

pub fn write_soil_csv(counties: &BTreeMap<String, CountyMeta>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(
        w,
        "county_id,crd_id,{},harvested_acres",
        crate::types::SOIL_ATTRIBUTES.join(",")
    )
    .map_err(io_err)?;
    for meta in counties.values() {
        let vals: Vec<String> = meta
            .soil
            .values_in_order()
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        let acres = meta
            .harvested_acres
            .map(|a| format!("{a}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{acres}",
            meta.county_id,
            meta.crd_id,
            vals.join(",")
        )
        .map_err(io_err)?;
    }
    finish(w, path)
}

pub fn write_pdsi_csv(pdsi: &BTreeMap<String, PdsiSeries>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(w, "crd_id,year,month,pdsi").map_err(io_err)?;
    for series in pdsi.values() {
        for (&(year, month), &v) in &series.values {
            writeln!(w, "{},{year},{month},{v}", series.crd_id).map_err(io_err)?;
        }
    }
    finish(w, path)
}

pub fn write_crd_map_csv(counties: &BTreeMap<String, CountyMeta>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(w, "county_id,crd_id").map_err(io_err)?;
    for meta in counties.values() {
        writeln!(w, "{},{}", meta.county_id, meta.crd_id).map_err(io_err)?;
    }
    finish(w, path)
}

/// Write all five CSVs (weather, yield, soil, pdsi, crd_map) into `dir`.
pub fn write_dataset_csvs(dataset: &RawDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_weather_csv(&dataset.weather, &dir.join("weather.csv"))?;
    write_yield_csv(&dataset.yields, &dir.join("yield.csv"))?;
    write_soil_csv(&dataset.counties, &dir.join("soil.csv"))?;
    write_pdsi_csv(&dataset.pdsi, &dir.join("pdsi.csv"))?;
    write_crd_map_csv(&dataset.counties, &dir.join("crd_map.csv"))?;
    Ok(())
}
