//! Subcommand implementations. Every command reads one [`RunConfig`],
//! writes its artifacts under `out_dir`, and returns the artifact paths for
//! the manifest.

use crate::config::RunConfig;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use yieldcast::augment::{augment_dataset, AugmentPlan};
use yieldcast::error::{Error, Result};
use yieldcast::features::{build_samples, to_tensor, FeatureSet};
use yieldcast::ingest::{self, RawDataset};
use yieldcast::lstm::SeqView;
use yieldcast::persist;
use yieldcast::select::{mrmr_rank, FeatureSummary, SelectConfig, SummaryStat};
use yieldcast::synth::{generate_synthetic, write_dataset_csvs, SynthConfig, SynthTrend};
use yieldcast::train::{
    random_search, render_trial_log, split_validation, train_model, Hyperparams, SearchSpace,
    TrainData,
};
use yieldcast::types::Sample;

fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.path("out_dir")?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(content.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parse the four input families and assemble a validated dataset.
pub fn load_raw(config: &RunConfig) -> Result<RawDataset> {
    let impute = config.impute_mode()?;
    let (weather, imputed) =
        ingest::parse_weather_csv_with(&config.path("weather_csv")?, impute)?;
    for day in &imputed {
        eprintln!(
            "imputed: linearly filled {} for ({}, {})",
            day.date, day.county_id, day.year
        );
    }
    let yields = ingest::parse_yield_csv(&config.path("yield_csv")?)?;
    let counties = ingest::parse_soil_csv(&config.path("soil_csv")?)?;
    let pdsi = ingest::parse_pdsi_csv(&config.path("pdsi_csv")?)?;
    let raw = RawDataset {
        weather,
        yields,
        counties,
        pdsi,
    };
    raw.validate()?;
    Ok(raw)
}

pub fn cmd_synth(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(config)?;
    let synth_config = SynthConfig {
        crds: config.usize_or("synth_crds", 9)?,
        counties_per_crd: config.usize_or("synth_counties_per_crd", 11)?,
        start_year: config.u64_or("synth_start_year", 1980)? as i32,
        years: config.usize_or("synth_years", 37)?,
        coeffs: Default::default(),
        trend: match config.opt("synth_trend").unwrap_or("constant") {
            "constant" => SynthTrend::ConstantGain,
            "none" => SynthTrend::None,
            other => {
                return Err(Error::Config(format!(
                    "synth_trend \"{other}\" must be constant or none"
                )))
            }
        },
        noise_sigma: config.f64_or("synth_sigma", 3.0)?,
    };
    let seed = config.u64_or("seed", 42)?;
    let (dataset, truth) = generate_synthetic(&synth_config, seed)?;
    write_dataset_csvs(&dataset, &dir)?;
    let truth_txt = format!(
        "intercept={}\nper_gdd={}\nper_rain_in={}\nper_heat_day={}\nheat_threshold_f={}\n\
         noise_sigma={}\ntrend_base_year={}\n",
        truth.coeffs.intercept,
        truth.coeffs.per_gdd,
        truth.coeffs.per_rain_in,
        truth.coeffs.per_heat_day,
        truth.coeffs.heat_threshold_f,
        truth.noise_sigma,
        truth.trend_base_year,
    );
    write_text(&dir.join("truth.txt"), &truth_txt)?;
    println!(
        "synth: {} counties x {} years -> {} yield records under {}",
        dataset.counties.len(),
        synth_config.years,
        dataset.yields.len(),
        dir.display()
    );
    Ok([
        "weather.csv",
        "yield.csv",
        "soil.csv",
        "pdsi.csv",
        "crd_map.csv",
        "truth.txt",
    ]
    .iter()
    .map(|f| dir.join(f))
    .collect())
}

pub fn cmd_ingest(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let raw = load_raw(config)?;
    let county_years = raw.weather.len();
    let years: std::collections::BTreeSet<i32> =
        raw.yields.iter().map(|y| y.year).collect();
    println!(
        "ingest: {} counties, {} CRDs, {} yield records over {} years, \
         {county_years} county-year weather series (all 214 days)",
        raw.counties.len(),
        raw.pdsi.len(),
        raw.yields.len(),
        years.len()
    );
    Ok(vec![])
}

pub fn cmd_featurize(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let dir = out_dir(config)?;
    let raw = load_raw(config)?;
    let trend = config.trend_model()?;
    trend.validate()?;
    let fs = config.feature_set()?;
    let train_years = config.train_years()?;
    let test_years = config.test_years()?;

    let mut train = build_samples(&raw, &trend, &fs, train_years)?;
    let test = build_samples(&raw, &trend, &fs, test_years)?;

    if let Some(mode) = config.augment_mode()? {
        let county_map = ingest::parse_crd_map_csv(&config.path("crd_map_csv")?)?;
        let plan = AugmentPlan::from_county_map(mode, &county_map);
        let strict = config.bool_or("augment_strict", false)?;
        let originals = train.len();
        let (augmented, skipped) = augment_dataset(&train, &plan, strict)?;
        for name in &skipped {
            eprintln!("augment: skipped combination {name} (missing county-year)");
        }
        println!(
            "featurize: augmented {originals} training samples to {}",
            augmented.len()
        );
        train = augmented;
    }

    let names = fs.names();
    let train_path = dir.join("train.yldt");
    let test_path = dir.join("test.yldt");
    persist::save_samples(&train, &fs.name, &names, &train_path)?;
    persist::save_samples(&test, &fs.name, &names, &test_path)?;
    println!(
        "featurize: {} train samples, {} test samples ({} features x {} days)",
        train.len(),
        test.len(),
        fs.len(),
        yieldcast::SEASON_DAYS
    );
    Ok(vec![train_path, test_path])
}

pub fn cmd_select(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(config)?;
    let cache = persist::load_samples(&dir.join("train.yldt"))?;
    // Selection statistics come from real counties; combination samples are
    // CRD-level averages and would inflate within-district dependence.
    let originals: Vec<Sample> = cache
        .samples
        .iter()
        .filter(|s| !s.is_combination())
        .cloned()
        .collect();
    let summary =
        FeatureSummary::from_samples(&originals, &cache.feature_names, SummaryStat::Mean)?;
    let ranked = mrmr_rank(&summary, summary.n_features(), &SelectConfig::default())?;
    let mut csv = String::from("rank,feature,score\n");
    for (i, r) in ranked.iter().enumerate() {
        csv.push_str(&format!("{},{},{:.6}\n", i + 1, r.name, r.score));
    }
    let path = dir.join("selection.csv");
    write_text(&path, &csv)?;
    println!("select: ranked {} features into {}", ranked.len(), path.display());
    Ok(vec![path])
}

fn load_train_data(config: &RunConfig) -> Result<(TrainData, FeatureSet, usize)> {
    let dir = out_dir(config)?;
    let cache = persist::load_samples(&dir.join("train.yldt"))?;
    let fs = FeatureSet::parse(&cache.feature_set)?;
    let t = config.truncate_t()?;
    let (tensor, targets) = to_tensor(&cache.samples, &fs)?;
    let tensor = tensor.truncate_time(t)?;
    let val_frac = config.f64_or("val_frac", 0.1)?;
    let seed = config.u64_or("seed", 42)?;
    let (train_idx, val_idx) = split_validation(&cache.samples, val_frac, seed)?;
    Ok((
        TrainData {
            tensor,
            targets,
            train_idx,
            val_idx,
        },
        fs,
        t,
    ))
}

fn hyperparams_from_config(config: &RunConfig) -> Result<Hyperparams> {
    let hp = Hyperparams {
        learning_rate: config.f64_or("lr", 0.01)?,
        hidden_sizes: config.hidden_sizes_or("hidden", &[32])?,
        dropout_rate: config.f64_or("dropout", 0.0)?,
        batch_size: config.usize_or("batch_size", 64)?,
        max_epochs: config.usize_or("max_epochs", 500)?,
        patience: config.usize_or("patience", 10)?,
        seed: config.u64_or("seed", 42)?,
    };
    hp.validate()?;
    Ok(hp)
}

pub fn cmd_train(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let dir = out_dir(config)?;
    let (data, fs, t) = load_train_data(config)?;
    let hp = hyperparams_from_config(config)?;
    let trend = config.trend_model()?;
    let report = train_model(&data, &hp)?;

    let mut log = String::from("epoch,train_mse,val_mse\n");
    for (i, e) in report.epochs.iter().enumerate() {
        log.push_str(&format!("{},{},{}\n", i, e.train_mse, e.val_mse));
    }
    let log_path = dir.join("training_log.csv");
    write_text(&log_path, &log)?;

    let ckpt_path = dir.join("checkpoint.yldc");
    persist::save_checkpoint(&report.model, &trend, &fs.name, Some(&hp), &ckpt_path)?;
    println!(
        "train: T={t}, best epoch {} of {}, validation MSE {:.4} -> {}",
        report.best_epoch,
        report.epochs.len(),
        report.best_val_mse,
        ckpt_path.display()
    );
    Ok(vec![log_path, ckpt_path])
}

pub fn cmd_search(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let dir = out_dir(config)?;
    let (data, fs, t) = load_train_data(config)?;
    let space = SearchSpace {
        learning_rate_range: (1e-4, 1e-1),
        layer_choices: vec![1, 2],
        hidden_grid: config.usize_list_or("hidden_grid", &[16, 32, 64, 128])?,
        dropout_choices: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        batch_size: config.usize_or("batch_size", 64)?,
        max_epochs: config.usize_or("max_epochs", 500)?,
        patience: config.usize_or("patience", 10)?,
    };
    let trials = config.usize_or("trials", 30)?;
    let seed = config.u64_or("seed", 42)?;
    let jobs = config.usize_or("jobs", 1)?;
    let timings = config.bool_or("timings", false)?;
    let trend = config.trend_model()?;

    let result = random_search(&space, trials, seed, &data, jobs)?;
    let log_path = dir.join("trial_log.csv");
    write_text(&log_path, &render_trial_log(&result, timings))?;
    let ckpt_path = dir.join("search_best.yldc");
    persist::save_checkpoint(
        &result.best_report.model,
        &trend,
        &fs.name,
        Some(&result.best_hp),
        &ckpt_path,
    )?;
    println!(
        "search: T={t}, {} trials, best trial {} (lr {:.5}, hidden {:?}, dropout {}), \
         validation MSE {:.4}",
        trials,
        result.best_trial,
        result.best_hp.learning_rate,
        result.best_hp.hidden_sizes,
        result.best_hp.dropout_rate,
        result.best_report.best_val_mse
    );
    Ok(vec![log_path, ckpt_path])
}

fn month_to_t(month: &str) -> Result<usize> {
    match month {
        "aug" => Ok(122),
        "sep" => Ok(153),
        "oct" => Ok(183),
        "final" => Ok(214),
        other => Err(Error::Config(format!(
            "month \"{other}\" must be aug, sep, oct, or final"
        ))),
    }
}

pub fn cmd_predict(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let dir = out_dir(config)?;
    let ckpt_path = config
        .opt_path("model")
        .unwrap_or_else(|| dir.join("checkpoint.yldc"));
    let ckpt = persist::load_checkpoint(&ckpt_path)?;
    let t = match config.opt("month") {
        Some(month) => month_to_t(month)?,
        None => config.truncate_t()?,
    };
    let raw = load_raw(config)?;
    let fs = FeatureSet::parse(&ckpt.feature_set)?;
    let test_years = config.test_years()?;
    for year in [*test_years.start(), *test_years.end()] {
        if year > ckpt.trend.base_year() {
            return Err(Error::Config(format!(
                "test year {year} is after the checkpoint's base year {}; \
                 re-train with base_year >= {year} so predictions can be \
                 mapped back to harvest terms",
                ckpt.trend.base_year()
            )));
        }
    }
    let samples = build_samples(&raw, &ckpt.trend, &fs, test_years)?;
    let (tensor, _targets) = to_tensor(&samples, &fs)?;
    let tensor = tensor.truncate_time(t)?;

    let mut csv = String::from("county_id,year,pred_adjusted,pred_bu_ac\n");
    for (n, s) in samples.iter().enumerate() {
        let adjusted = ckpt.model.predict(SeqView::from_tensor(&tensor, n))?;
        let harvest = ckpt.trend.invert(adjusted, s.year)?;
        csv.push_str(&format!("{},{},{},{}\n", s.key, s.year, adjusted, harvest));
    }
    let path = dir.join("predictions.csv");
    write_text(&path, &csv)?;
    println!(
        "predict: {} county-years at T={t} -> {}",
        samples.len(),
        path.display()
    );
    Ok(vec![path])
}

fn parse_predictions(path: &Path) -> Result<Vec<(String, i32, f64, f64)>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "county_id,year,pred_adjusted,pred_bu_ac" {
                return Err(Error::Schema {
                    file: path.display().to_string(),
                    column: "county_id,year,pred_adjusted,pred_bu_ac".into(),
                });
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                file: path.display().to_string(),
                row: i + 1,
                message: format!("expected 4 fields, got {}", parts.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                file: path.display().to_string(),
                row: i + 1,
                message: format!("bad number \"{s}\""),
            })
        };
        out.push((
            parts[0].to_string(),
            parts[1].parse().map_err(|_| Error::Parse {
                file: path.display().to_string(),
                row: i + 1,
                message: format!("bad year \"{}\"", parts[1]),
            })?,
            parse_f(parts[2])?,
            parse_f(parts[3])?,
        ));
    }
    Ok(out)
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(config)?;
    let pred_path = config
        .opt_path("predictions")
        .unwrap_or_else(|| dir.join("predictions.csv"));
    let predictions = parse_predictions(&pred_path)?;
    if predictions.is_empty() {
        return Err(Error::Join(format!(
            "{} holds no prediction rows",
            pred_path.display()
        )));
    }
    let yields = ingest::parse_yield_csv(&config.path("yield_csv")?)?;
    let counties = ingest::parse_soil_csv(&config.path("soil_csv")?)?;
    let trend = config.trend_model()?;

    let years: std::collections::BTreeSet<i32> = predictions.iter().map(|p| p.1).collect();
    let mut actual_harvest: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for y in &yields {
        if years.contains(&y.year) {
            actual_harvest.insert((y.county_id.clone(), y.year), y.yield_bu_ac);
        }
    }
    let mut preds_harvest: BTreeMap<(String, i32), f64> = BTreeMap::new();
    let mut preds_adjusted: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for (county, year, adj, harvest) in &predictions {
        preds_harvest.insert((county.clone(), *year), *harvest);
        preds_adjusted.insert((county.clone(), *year), *adj);
    }
    let mut actual_adjusted: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for ((county, year), v) in &actual_harvest {
        actual_adjusted.insert((county.clone(), *year), trend.adjust(*v, *year)?);
    }

    let weights: BTreeMap<String, f64> = counties
        .values()
        .filter_map(|m| m.harvested_acres.map(|a| (m.county_id.clone(), a)))
        .collect();
    let reference = match config.opt_path("usda_csv") {
        Some(p) => yieldcast::eval::UsdaTable::parse_csv(&p)?,
        None => yieldcast::eval::UsdaTable::default(),
    };

    let report = yieldcast::eval::build_report(&preds_harvest, &actual_harvest, &weights, &reference)?;
    let (_, adjusted_mse, _) = yieldcast::eval::county_errors(&preds_adjusted, &actual_adjusted)?;
    let (county_csv, state_csv) = yieldcast::eval::emit_plot_csv(&report, &dir)?;

    let mut summary = String::new();
    summary.push_str(&format!("county_mse_harvest={:.4}\n", report.mse));
    summary.push_str(&format!("county_mse_adjusted={:.4}\n", adjusted_mse));
    summary.push_str(&format!(
        "aggregation={}\n",
        match report.aggregation {
            Some(yieldcast::eval::AggregationMode::AcreWeighted) => "acre_weighted",
            Some(yieldcast::eval::AggregationMode::Unweighted) => "unweighted",
            None => "none",
        }
    ));
    for (year, mse) in &report.per_year_mse {
        summary.push_str(&format!("year_{year}_mse={mse:.4}\n"));
    }
    for row in &report.state_rows {
        summary.push_str(&format!(
            "state_{}={:.4} actual={} usda={}\n",
            row.year,
            row.predicted,
            row.actual.map(|v| format!("{v:.4}")).unwrap_or_default(),
            row.usda.map(|v| format!("{v:.4}")).unwrap_or_default(),
        ));
    }
    let summary_path = dir.join("summary.txt");
    write_text(&summary_path, &summary)?;
    println!(
        "evaluate: {} rows, harvest-space MSE {:.4}, adjusted-space MSE {:.4}",
        report.rows.len(),
        report.mse,
        adjusted_mse
    );
    Ok(vec![county_csv, state_csv, summary_path])
}
