//! Feature engineering: per-day derived variables, monthly and constant
//! broadcasts, cumulative series, interactions, and the assembly of samples
//! into the training tensor.
//!
//! All features live on the 214-day April-October time axis. Monthly PDSI is
//! repeated for the number of days in each month; per-county constants are
//! repeated 214 times; July scalars are computed over day indices 91..=121
//! (July 1-31 from the April 1 origin) and broadcast as constants.

use crate::detrend::TrendModel;
use crate::error::{Error, Result};
use crate::ingest::RawDataset;
use crate::tensor::{FeatureMatrix, FeatureTensor};
use crate::types::{
    DailyWeather, PdsiSeries, Sample, JULY_WINDOW, SEASON_DAYS, SEASON_FIRST_MONTH,
    SEASON_MONTH_LENGTHS,
};
use std::ops::Range;

/// Growing degree days for one day, °F-days.
///
/// The daily max is capped at 86°F and the daily min floored at 50°F (and
/// capped at 86°F); the base temperature is 50°F. The clamped average can
/// fall below the base on cold days, so the result is floored at zero per
/// standard agronomic practice.
pub fn gdd(tmax_f: f64, tmin_f: f64) -> Result<f64> {
    if !tmax_f.is_finite() || !tmin_f.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite temperatures ({tmax_f}, {tmin_f})"
        )));
    }
    if tmin_f > tmax_f {
        return Err(Error::Domain(format!(
            "tmin {tmin_f} exceeds tmax {tmax_f}"
        )));
    }
    let tx = tmax_f.min(86.0);
    let tn = tmin_f.clamp(50.0, 86.0);
    Ok(((tx + tn) / 2.0 - 50.0).max(0.0))
}

/// Inclusive prefix sums: out[t] = sum of in[0..=t].
pub fn cumulative(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut total = 0.0;
    for &v in series {
        total += v;
        out.push(total);
    }
    out
}

/// Repeat monthly PDSI values for the number of days in each month,
/// producing the 214-day vector.
pub fn broadcast_pdsi(series: &PdsiSeries, year: i32) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(SEASON_DAYS);
    for (i, &len) in SEASON_MONTH_LENGTHS.iter().enumerate() {
        let month = SEASON_FIRST_MONTH + i as u8;
        let v = series.get(year, month).ok_or_else(|| {
            Error::Gap(format!(
                "PDSI series {} is missing {year}-{month:02}",
                series.crd_id
            ))
        })?;
        out.extend(std::iter::repeat_n(v, len));
    }
    Ok(out)
}

/// 214 copies of a per-county constant.
pub fn broadcast_constant(v: f64) -> Result<Vec<f64>> {
    if !v.is_finite() {
        return Err(Error::Numeric(format!("non-finite constant {v}")));
    }
    Ok(vec![v; SEASON_DAYS])
}

/// Element-wise product of two day vectors.
pub fn interaction(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "interaction length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

/// The 28 candidate input variables. String ids match the soil.csv column
/// names where the value comes straight from that column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureId {
    Tmax,
    Tmin,
    Tmean,
    Rain,
    RainMax,
    Wind,
    Pdsi,
    CumGdd,
    CumRain,
    JulyRain,
    JulyTmax,
    /// Corn-acre share; sourced from the share_cropland column (the source
    /// data carries a single ratio for both concepts).
    AcreShare,
    TmaxXDroughty,
    TmaxXPdsi,
    Ffd,
    SandTotal,
    SiltTotal,
    ClayTotal,
    Om,
    BulkDensity,
    Lep,
    Caco3,
    Ec,
    Soc0_150,
    Rootznaws,
    Droughty,
    Sand,
    ShareCropland,
}

impl FeatureId {
    pub fn as_str(&self) -> &'static str {
        use FeatureId::*;
        match self {
            Tmax => "tmax",
            Tmin => "tmin",
            Tmean => "tmean",
            Rain => "rain",
            RainMax => "rain_max",
            Wind => "wind",
            Pdsi => "pdsi",
            CumGdd => "cum_gdd",
            CumRain => "cum_rain",
            JulyRain => "july_rain",
            JulyTmax => "july_tmax",
            AcreShare => "acre_share",
            TmaxXDroughty => "tmax_x_droughty",
            TmaxXPdsi => "tmax_x_pdsi",
            Ffd => "ffd",
            SandTotal => "sandtotal",
            SiltTotal => "silttotal",
            ClayTotal => "claytotal",
            Om => "om",
            BulkDensity => "bulkDensity",
            Lep => "lep",
            Caco3 => "caco3",
            Ec => "ec",
            Soc0_150 => "soc0_150",
            Rootznaws => "rootznaws",
            Droughty => "droughty",
            Sand => "sand",
            ShareCropland => "share_cropland",
        }
    }

    /// For features read straight off a soil column, the column name.
    fn soil_column(&self) -> Option<&'static str> {
        use FeatureId::*;
        match self {
            Ffd | SandTotal | SiltTotal | ClayTotal | Om | BulkDensity | Lep | Caco3 | Ec
            | Soc0_150 | Rootznaws | Droughty | Sand | ShareCropland => Some(self.as_str()),
            AcreShare => Some("share_cropland"),
            _ => None,
        }
    }
}

/// All 28 candidates: the 14 weather-derived variables first, then the 14
/// soil attributes in soil.csv column order.
pub const ALL_FEATURES: [FeatureId; 28] = {
    use FeatureId::*;
    [
        Tmax,
        Tmin,
        Tmean,
        Rain,
        RainMax,
        Wind,
        Pdsi,
        CumGdd,
        CumRain,
        JulyRain,
        JulyTmax,
        AcreShare,
        TmaxXDroughty,
        TmaxXPdsi,
        Ffd,
        SandTotal,
        SiltTotal,
        ClayTotal,
        Om,
        BulkDensity,
        Lep,
        Caco3,
        Ec,
        Soc0_150,
        Rootznaws,
        Droughty,
        Sand,
        ShareCropland,
    ]
};

/// A named, ordered list of feature generators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSet {
    pub name: String,
    pub ids: Vec<FeatureId>,
}

impl FeatureSet {
    /// The ten selected input variables.
    pub fn best10() -> FeatureSet {
        use FeatureId::*;
        FeatureSet {
            name: "best10".into(),
            ids: vec![
                Tmean, Tmax, Tmin, Rain, Wind, Pdsi, Rootznaws, Droughty, CumGdd, CumRain,
            ],
        }
    }

    /// The fifteen-variable set kept after correlation pruning.
    pub fn set15() -> FeatureSet {
        use FeatureId::*;
        FeatureSet {
            name: "set15".into(),
            ids: vec![
                Tmean, Rain, Wind, Pdsi, Rootznaws, Droughty, CumGdd, AcreShare, Ffd, ClayTotal,
                Om, Ec, RainMax, JulyRain, JulyTmax,
            ],
        }
    }

    /// All variables except the twelve soil attributes other than rootznaws
    /// and droughty. Resolved as: the twelve excluded columns are the
    /// Fig.-style soil list minus rootznaws/droughty; acre_share stays
    /// because it describes planting intensity, not soil quality.
    pub fn set16() -> FeatureSet {
        use FeatureId::*;
        let excluded = [
            Ffd, SandTotal, SiltTotal, ClayTotal, Om, BulkDensity, Lep, Caco3, Ec, Soc0_150,
            Sand, ShareCropland,
        ];
        FeatureSet {
            name: "set16".into(),
            ids: ALL_FEATURES
                .iter()
                .copied()
                .filter(|f| !excluded.contains(f))
                .collect(),
        }
    }

    /// Every candidate variable.
    pub fn all28() -> FeatureSet {
        FeatureSet {
            name: "all28".into(),
            ids: ALL_FEATURES.to_vec(),
        }
    }

    pub fn parse(name: &str) -> Result<FeatureSet> {
        match name {
            "best10" => Ok(Self::best10()),
            "set15" => Ok(Self::set15()),
            "set16" => Ok(Self::set16()),
            "all28" => Ok(Self::all28()),
            other => Err(Error::Config(format!(
                "unknown feature set \"{other}\" (expected best10, set15, set16, or all28)"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.ids.iter().map(|f| f.as_str().to_string()).collect()
    }
}

/// Per-county-year context from which any feature row can be generated.
struct DayContext<'a> {
    days: &'a [DailyWeather],
    pdsi_vec: Vec<f64>,
    meta: &'a crate::types::CountyMeta,
}

impl DayContext<'_> {
    fn weather_vec(&self, pick: impl Fn(&DailyWeather) -> f64) -> Vec<f64> {
        self.days.iter().map(pick).collect()
    }

    fn row(&self, id: FeatureId) -> Result<Vec<f64>> {
        use FeatureId::*;
        if let Some(col) = id.soil_column() {
            let v = self.meta.soil.get(col).ok_or_else(|| {
                Error::Config(format!("unknown soil column {col}"))
            })?;
            return broadcast_constant(v);
        }
        Ok(match id {
            Tmax => self.weather_vec(|d| d.tmax_f),
            Tmin => self.weather_vec(|d| d.tmin_f),
            Tmean => self.weather_vec(|d| d.tmean_f),
            Rain => self.weather_vec(|d| d.rain_in),
            RainMax => self.weather_vec(|d| d.rain_max_in),
            Wind => self.weather_vec(|d| d.wind_mph),
            Pdsi => self.pdsi_vec.clone(),
            CumGdd => {
                let mut daily = Vec::with_capacity(self.days.len());
                for d in self.days {
                    daily.push(gdd(d.tmax_f, d.tmin_f)?);
                }
                cumulative(&daily)
            }
            CumRain => cumulative(&self.weather_vec(|d| d.rain_in)),
            JulyRain => {
                let total: f64 = self.days[july_range()].iter().map(|d| d.rain_in).sum();
                broadcast_constant(total)?
            }
            JulyTmax => {
                let max = self.days[july_range()]
                    .iter()
                    .map(|d| d.tmax_f)
                    .fold(f64::NEG_INFINITY, f64::max);
                broadcast_constant(max)?
            }
            TmaxXDroughty => {
                let tmax = self.weather_vec(|d| d.tmax_f);
                let droughty = broadcast_constant(self.meta.soil.droughty)?;
                interaction(&tmax, &droughty)?
            }
            TmaxXPdsi => {
                let tmax = self.weather_vec(|d| d.tmax_f);
                interaction(&tmax, &self.pdsi_vec)?
            }
            _ => unreachable!("soil features handled above"),
        })
    }
}

fn july_range() -> Range<usize> {
    *JULY_WINDOW.start()..*JULY_WINDOW.end() + 1
}

/// Build one sample per (county, year) with a yield record inside `years`.
/// Targets are de-trended with `trend`; output is sorted by (county, year).
pub fn build_samples(
    raw: &RawDataset,
    trend: &TrendModel,
    fs: &FeatureSet,
    years: std::ops::RangeInclusive<i32>,
) -> Result<Vec<Sample>> {
    if fs.is_empty() {
        return Err(Error::Config("feature set is empty".into()));
    }
    let mut records: Vec<&crate::types::YieldRecord> = raw
        .yields
        .iter()
        .filter(|y| years.contains(&y.year))
        .collect();
    records.sort_by(|a, b| (&a.county_id, a.year).cmp(&(&b.county_id, b.year)));

    let mut samples = Vec::with_capacity(records.len());
    for rec in records {
        let days = raw
            .weather
            .get(&(rec.county_id.clone(), rec.year))
            .ok_or_else(|| {
                Error::Coverage(format!(
                    "({}, {}) has a yield record but no weather",
                    rec.county_id, rec.year
                ))
            })?;
        let meta = raw.counties.get(&rec.county_id).ok_or_else(|| {
            Error::Coverage(format!("county {} has no metadata", rec.county_id))
        })?;
        let pdsi_series = raw.pdsi.get(&meta.crd_id).ok_or_else(|| {
            Error::Coverage(format!("CRD {} has no PDSI series", meta.crd_id))
        })?;
        let ctx = DayContext {
            days,
            pdsi_vec: broadcast_pdsi(pdsi_series, rec.year)?,
            meta,
        };
        let mut rows = Vec::with_capacity(fs.len());
        for &id in &fs.ids {
            rows.push(ctx.row(id)?);
        }
        let features = FeatureMatrix::from_rows(&rows)?;
        let target = trend.adjust(rec.yield_bu_ac, rec.year)?;
        samples.push(Sample::new(rec.county_id.clone(), rec.year, features, target)?);
    }
    Ok(samples)
}

/// Pack samples into the N x F x T tensor plus the aligned target vector.
pub fn to_tensor(samples: &[Sample], fs: &FeatureSet) -> Result<(FeatureTensor, Vec<f64>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Shape("cannot build a tensor from zero samples".into()))?;
    let f = first.features.features();
    let t = first.features.time_len();
    if f != fs.len() {
        return Err(Error::Shape(format!(
            "samples have {f} features but feature set {} has {}",
            fs.name,
            fs.len()
        )));
    }
    for s in samples {
        if s.features.features() != f || s.features.time_len() != t {
            return Err(Error::Shape(format!(
                "sample {} {} has shape {}x{}, expected {f}x{t}",
                s.key,
                s.year,
                s.features.features(),
                s.features.time_len()
            )));
        }
    }
    let mut tensor = FeatureTensor::new(f, t, samples.len())?;
    tensor.set_feature_names(fs.names())?;
    let mut targets = Vec::with_capacity(samples.len());
    for (n, s) in samples.iter().enumerate() {
        tensor.sample_mut(n).copy_from_slice(s.features.as_slice());
        targets.push(s.target_adjusted);
    }
    Ok((tensor, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SynthConfig, SynthTrend, TruthCoeffs};
    use crate::types::{Date, SEASON_MONTH_STARTS};
    use proptest::prelude::*;

    #[test]
    fn gdd_reference_points() {
        assert_eq!(gdd(86.0, 50.0).unwrap(), 18.0);
        assert_eq!(gdd(50.0, 50.0).unwrap(), 0.0);
        assert_eq!(gdd(95.0, 70.0).unwrap(), 28.0); // upper clamp engaged
        assert_eq!(gdd(45.0, 40.0).unwrap(), 0.0); // floor engaged
        assert!(gdd(60.0, 70.0).is_err());
        assert!(gdd(f64::NAN, 50.0).is_err());
    }

    #[test]
    fn cumulative_basics() {
        assert_eq!(cumulative(&[1.0, 2.0, 3.0]), vec![1.0, 3.0, 6.0]);
        assert_eq!(cumulative(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn cumulative_gdd_is_monotone() {
        let mut daily = Vec::new();
        for t in 0..SEASON_DAYS {
            let tmax = 60.0 + (t % 40) as f64;
            let tmin = tmax - 20.0;
            daily.push(gdd(tmax, tmin).unwrap());
        }
        let cum = cumulative(&daily);
        assert_eq!(cum.len(), SEASON_DAYS);
        for w in cum.windows(2) {
            assert!(w[1] >= w[0]);
        }
        // Last element equals a plain independent sum.
        let total: f64 = daily.iter().sum();
        assert!((cum[SEASON_DAYS - 1] - total).abs() < 1e-9);
    }

    #[test]
    fn pdsi_broadcast_boundaries() {
        let mut s = PdsiSeries::new("IA-10");
        for m in 4..=10 {
            s.insert(2013, m, if m == 4 { -2.0 } else { 1.0 }).unwrap();
        }
        let v = broadcast_pdsi(&s, 2013).unwrap();
        assert_eq!(v.len(), SEASON_DAYS);
        assert!(v[..30].iter().all(|&x| x == -2.0));
        assert!(v[30..].iter().all(|&x| x == 1.0));

        // Distinct month values change exactly at the documented boundaries.
        let mut s = PdsiSeries::new("IA-10");
        for (i, m) in (4..=10).enumerate() {
            s.insert(2013, m, i as f64).unwrap();
        }
        let v = broadcast_pdsi(&s, 2013).unwrap();
        for (i, &start) in SEASON_MONTH_STARTS.iter().enumerate() {
            assert_eq!(v[start], i as f64);
            if start > 0 {
                assert_eq!(v[start - 1], i as f64 - 1.0);
            }
        }

        // All-zero months give all-zero days.
        let mut s = PdsiSeries::new("IA-10");
        for m in 4..=10 {
            s.insert(2013, m, 0.0).unwrap();
        }
        assert!(broadcast_pdsi(&s, 2013).unwrap().iter().all(|&x| x == 0.0));

        // Missing month is a gap error.
        let mut s = PdsiSeries::new("IA-10");
        for m in [4, 5, 6, 8, 9, 10] {
            s.insert(2013, m, 0.0).unwrap();
        }
        assert!(broadcast_pdsi(&s, 2013).is_err());
    }

    #[test]
    fn constant_broadcast() {
        let v = broadcast_constant(280.0).unwrap();
        assert_eq!(v.len(), SEASON_DAYS);
        assert!(v.iter().all(|&x| x == 280.0));
        assert!(broadcast_constant(f64::INFINITY).is_err());
    }

    #[test]
    fn interaction_identities() {
        let tmax = vec![90.0, 80.0, 70.0];
        assert_eq!(interaction(&tmax, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(interaction(&tmax, &[1.0; 3]).unwrap(), tmax);
        assert!(interaction(&tmax, &[1.0; 2]).is_err());
    }

    #[test]
    fn feature_set_sizes_and_names() {
        assert_eq!(FeatureSet::best10().len(), 10);
        assert_eq!(FeatureSet::set15().len(), 15);
        assert_eq!(FeatureSet::set16().len(), 16);
        assert_eq!(FeatureSet::all28().len(), 28);
        let best = FeatureSet::best10();
        assert_eq!(
            best.names(),
            vec![
                "tmean", "tmax", "tmin", "rain", "wind", "pdsi", "rootznaws", "droughty",
                "cum_gdd", "cum_rain"
            ]
        );
        // Ids are unique within each set.
        for fs in [
            FeatureSet::best10(),
            FeatureSet::set15(),
            FeatureSet::set16(),
            FeatureSet::all28(),
        ] {
            let mut names = fs.names();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), fs.len(), "duplicate id in {}", fs.name);
        }
        assert!(FeatureSet::parse("best11").is_err());
    }

    #[test]
    fn set16_excludes_soil_quality_only() {
        let fs = FeatureSet::set16();
        let names = fs.names();
        assert!(names.contains(&"rootznaws".to_string()));
        assert!(names.contains(&"droughty".to_string()));
        assert!(names.contains(&"acre_share".to_string()));
        assert!(!names.contains(&"om".to_string()));
        assert!(!names.contains(&"share_cropland".to_string()));
    }

    fn tiny_dataset() -> (RawDataset, TrendModel) {
        let cfg = SynthConfig {
            crds: 1,
            counties_per_crd: 1,
            start_year: 2013,
            years: 1,
            coeffs: TruthCoeffs::default(),
            trend: SynthTrend::None,
            noise_sigma: 0.0,
        };
        let (data, _) = generate_synthetic(&cfg, 5).unwrap();
        (data, TrendModel::percentage(2013))
    }

    #[test]
    fn build_single_sample() {
        let (data, trend) = tiny_dataset();
        let samples =
            build_samples(&data, &trend, &FeatureSet::best10(), 2013..=2013).unwrap();
        assert_eq!(samples.len(), 1);
        let s = &samples[0];
        assert_eq!(s.features.features(), 10);
        assert_eq!(s.features.time_len(), SEASON_DAYS);
        // Feature rows line up with direct recomputation.
        let days = &data.weather[&(s.key.clone(), 2013)];
        for (t, d) in days.iter().enumerate() {
            assert_eq!(s.features.get(0, t), d.tmean_f);
            assert_eq!(s.features.get(1, t), d.tmax_f);
            assert_eq!(s.features.get(3, t), d.rain_in);
        }
        // droughty row is constant.
        let droughty = data.counties[&s.key].soil.droughty;
        assert!(s.features.row(7).iter().all(|&v| v == droughty));
        // cum_rain last element equals season total.
        let total: f64 = days.iter().map(|d| d.rain_in).sum();
        assert!((s.features.get(9, SEASON_DAYS - 1) - total).abs() < 1e-9);
    }

    #[test]
    fn build_reports_missing_weather() {
        let (mut data, trend) = tiny_dataset();
        data.weather.clear();
        let err = build_samples(&data, &trend, &FeatureSet::best10(), 2013..=2013).unwrap_err();
        assert!(matches!(err, Error::Coverage(_)));
    }

    #[test]
    fn build_orders_by_county_then_year() {
        let cfg = SynthConfig {
            crds: 2,
            counties_per_crd: 2,
            start_year: 2010,
            years: 3,
            coeffs: TruthCoeffs::default(),
            trend: SynthTrend::None,
            noise_sigma: 1.0,
        };
        let (data, _) = generate_synthetic(&cfg, 9).unwrap();
        let trend = TrendModel::percentage(2012);
        let samples = build_samples(&data, &trend, &FeatureSet::best10(), 2010..=2012).unwrap();
        assert_eq!(samples.len(), 12);
        let keys: Vec<(String, i32)> = samples.iter().map(|s| (s.key.clone(), s.year)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn july_scalars_cover_day_91_to_121() {
        let (data, trend) = tiny_dataset();
        let fs = FeatureSet {
            name: "july".into(),
            ids: vec![FeatureId::JulyRain, FeatureId::JulyTmax],
        };
        let samples = build_samples(&data, &trend, &fs, 2013..=2013).unwrap();
        let s = &samples[0];
        let days = &data.weather[&(s.key.clone(), 2013)];
        assert_eq!(Date::from_day_of_season(2013, 91).unwrap().month, 7);
        assert_eq!(Date::from_day_of_season(2013, 121).unwrap().day, 31);
        let rain: f64 = days[91..=121].iter().map(|d| d.rain_in).sum();
        let tmax = days[91..=121]
            .iter()
            .map(|d| d.tmax_f)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(s.features.row(0).iter().all(|&v| (v - rain).abs() < 1e-12));
        assert!(s.features.row(1).iter().all(|&v| v == tmax));
    }

    #[test]
    fn tensor_matches_naive_assembly() {
        let cfg = SynthConfig {
            crds: 2,
            counties_per_crd: 3,
            start_year: 2010,
            years: 2,
            coeffs: TruthCoeffs::default(),
            trend: SynthTrend::None,
            noise_sigma: 1.0,
        };
        let (data, _) = generate_synthetic(&cfg, 13).unwrap();
        let trend = TrendModel::percentage(2011);
        let fs = FeatureSet::best10();
        let samples = build_samples(&data, &trend, &fs, 2010..=2011).unwrap();
        let (tensor, targets) = to_tensor(&samples, &fs).unwrap();
        assert_eq!(tensor.samples(), samples.len());
        assert_eq!(targets.len(), samples.len());
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let n = rng.gen_range(0..samples.len());
            let f = rng.gen_range(0..fs.len());
            let t = rng.gen_range(0..SEASON_DAYS);
            assert_eq!(tensor.get(n, f, t), samples[n].features.get(f, t));
        }
        for (n, s) in samples.iter().enumerate() {
            assert_eq!(targets[n], s.target_adjusted);
        }
    }

    #[test]
    fn tensor_rejects_mixed_shapes() {
        let (data, trend) = tiny_dataset();
        let fs = FeatureSet::best10();
        let mut samples = build_samples(&data, &trend, &fs, 2013..=2013).unwrap();
        let mut clone = samples[0].clone();
        clone.features = clone.features.truncate_time(100).unwrap();
        samples.push(clone);
        assert!(to_tensor(&samples, &fs).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn gdd_stays_in_bounds(
            tmin in -30.0f64..110.0,
            spread in 0.0f64..40.0,
        ) {
            // Both temps clamp into [50, 86], so the largest possible value
            // is (86 + 86)/2 - 50 = 36 and the smallest is the floor at 0.
            let v = gdd(tmin + spread, tmin).unwrap();
            prop_assert!((0.0..=36.0).contains(&v));
        }

        #[test]
        fn cumulative_monotone_for_nonnegative(xs in proptest::collection::vec(0.0f64..100.0, 1..50)) {
            let c = cumulative(&xs);
            prop_assert_eq!(c.len(), xs.len());
            for w in c.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            let total: f64 = xs.iter().sum();
            prop_assert!((c[c.len()-1] - total).abs() < 1e-9);
        }
    }
}
