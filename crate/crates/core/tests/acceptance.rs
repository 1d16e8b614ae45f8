//! Acceptance suite. Each test prints one pass/fail line; run with
//! `cargo test -p yieldcast --test acceptance -- --nocapture` to see them.
//!
//! The determinism criterion for the `search` command lives in the CLI
//! crate's own acceptance target, next to the binary it exercises.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;
use yieldcast::augment::{augment_dataset, enumerate_combos, AugmentMode, AugmentPlan};
use yieldcast::detrend::TrendModel;
use yieldcast::features::{broadcast_pdsi, build_samples, gdd, to_tensor, FeatureSet};
use yieldcast::ingest::{parse_crd_map_csv, RawDataset};
use yieldcast::lstm::{LstmLayout, LstmModel, Mode, NormStats, SeqView};
use yieldcast::persist;
use yieldcast::select::{mrmr_rank, mutual_information, FeatureSummary, SelectConfig};
use yieldcast::synth::{generate_synthetic, SynthConfig, SynthTrend};
use yieldcast::tensor::FeatureMatrix;
use yieldcast::train::{
    grad_check, random_search, split_validation, train_model, Hyperparams, SearchSpace, TrainData,
};
use yieldcast::types::{Sample, SEASON_DAYS, SEASON_MONTH_STARTS};

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn pass(criterion: &str, detail: String) {
    println!("[PASS] {criterion}: {detail}");
}

/// The verification-scale synthetic dataset shared by the heavy criteria:
/// 9 CRDs x 11 counties x 37 years (train 1980-2012, test 2013-2016),
/// constant-gain trend, noise sigma 3.
struct SharedData {
    samples_train: Vec<Sample>,
    samples_test: Vec<Sample>,
    fs: FeatureSet,
}

fn shared_data() -> &'static SharedData {
    static DATA: OnceLock<SharedData> = OnceLock::new();
    DATA.get_or_init(|| {
        let config = SynthConfig {
            crds: 9,
            counties_per_crd: 11,
            start_year: 1980,
            years: 37,
            coeffs: Default::default(),
            trend: SynthTrend::ConstantGain,
            noise_sigma: 3.0,
        };
        let (raw, _truth) = generate_synthetic(&config, 20240501).unwrap();
        let trend = TrendModel::constant(2016);
        let fs = FeatureSet::best10();
        let samples_train = build_samples(&raw, &trend, &fs, 1980..=2012).unwrap();
        let samples_test = build_samples(&raw, &trend, &fs, 2013..=2016).unwrap();
        assert_eq!(samples_train.len(), 3267);
        assert_eq!(samples_test.len(), 99 * 4);
        SharedData {
            samples_train,
            samples_test,
            fs,
        }
    })
}

/// Serializes the two training-heavy criteria so they do not oversubscribe
/// the machine when the test harness runs them on separate threads.
fn heavy_lock() -> &'static Mutex<()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
}

#[test]
fn criterion_1_gradient_oracle() {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for seed in 0..10u64 {
        let layers = if seed % 2 == 0 { vec![4] } else { vec![4, 4] };
        let layout = LstmLayout::new(3, layers, 0.0).unwrap();
        let report = grad_check(layout, seed, 1e-5, 1e-5).unwrap();
        assert!(
            report.pass,
            "criterion 1: seed {seed} max rel err {} in {}",
            report.max_rel_err, report.worst_block
        );
        worst = worst.max(report.max_rel_err);
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 30,
        "criterion 1: runtime {elapsed:?} exceeds 30 s"
    );
    pass(
        "criterion 1 (gradient oracle)",
        format!("10 models, max rel err {worst:.2e} < 1e-5, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_2_gdd_unit_suite() {
    assert_eq!(gdd(86.0, 50.0).unwrap(), 18.0);
    assert_eq!(gdd(50.0, 50.0).unwrap(), 0.0);
    assert_eq!(gdd(95.0, 70.0).unwrap(), 28.0);
    assert_eq!(gdd(45.0, 40.0).unwrap(), 0.0);
    pass(
        "criterion 2 (GDD unit suite)",
        "(86,50)=18 (50,50)=0 (95,70)=28 (45,40)=0, exact".into(),
    );
}

#[test]
fn criterion_3_detrend_round_trip() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let models = [TrendModel::percentage(2013), TrendModel::constant(2013)];
    let mut worst = 0.0_f64;
    for _ in 0..10_000 {
        let y = rng.gen_range(50.0..250.0);
        let year = rng.gen_range(1980..=2013);
        for m in &models {
            let back = m.invert(m.adjust(y, year).unwrap(), year).unwrap();
            worst = worst.max((back - y).abs());
        }
    }
    assert!(worst <= 1e-9, "criterion 3: worst round-trip error {worst:e}");
    let boundary = TrendModel::constant(2013).adjust(150.0, 1998).unwrap();
    assert_eq!(boundary, 215.71, "criterion 3: constant boundary example");
    pass(
        "criterion 3 (de-trend round trip)",
        format!("20,000 round trips, worst |err| {worst:.2e}; 1998 -> 215.71 exact"),
    );
}

#[test]
fn criterion_4_augmentation_counting() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);

    // 50 random CRD maps: library count equals brute-force enumeration.
    for trial in 0..50 {
        let n_crds = rng.gen_range(1..6usize);
        let mut county_map = BTreeMap::new();
        let mut counter = 0;
        for c in 0..n_crds {
            for _ in 0..rng.gen_range(1..8usize) {
                counter += 1;
                county_map.insert(format!("K{counter:03}"), format!("CRD{c}"));
            }
        }
        let mode = if trial % 2 == 0 {
            AugmentMode::PairsOnly
        } else {
            AugmentMode::PairsAndTriples
        };
        let plan = AugmentPlan::from_county_map(mode, &county_map);
        let years = rng.gen_range(1..4i32);
        let samples: Vec<Sample> = county_map
            .keys()
            .flat_map(|k| {
                (0..years).map(|y| {
                    Sample::new(k.clone(), 2000 + y, FeatureMatrix::zeros(1, 1), 100.0).unwrap()
                })
            })
            .collect();
        let (augmented, skipped) = augment_dataset(&samples, &plan, true).unwrap();
        assert!(skipped.is_empty());

        // Brute force: enumerate subsets directly per CRD.
        let mut brute = 0usize;
        let mut per_crd: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (k, crd) in &county_map {
            per_crd.entry(crd).or_default().push(k);
        }
        for counties in per_crd.values() {
            let n = counties.len();
            for i in 0..n {
                for j in i + 1..n {
                    brute += 1;
                    if mode == AugmentMode::PairsAndTriples {
                        brute += n - j - 1;
                    }
                }
            }
        }
        assert_eq!(
            augmented.len(),
            samples.len() + brute * years as usize,
            "criterion 4: trial {trial}"
        );
    }

    // True Iowa map: totals must reproduce the published sample counts.
    let county_map = parse_crd_map_csv(&fixture("iowa_crd_map.csv")).unwrap();
    assert_eq!(county_map.len(), 99);
    let years: Vec<i32> = (1980..=2012).collect();
    assert_eq!(years.len(), 33);
    let originals: Vec<Sample> = county_map
        .keys()
        .flat_map(|k| {
            years.iter().map(|&y| {
                Sample::new(k.clone(), y, FeatureMatrix::zeros(1, 1), 100.0).unwrap()
            })
        })
        .collect();
    assert_eq!(originals.len(), 3267);

    let pairs_plan = AugmentPlan::from_county_map(AugmentMode::PairsOnly, &county_map);
    let (pairs, _) = augment_dataset(&originals, &pairs_plan, true).unwrap();
    assert_eq!(pairs.len(), 19_734, "criterion 4: pairs-only total");

    let full_plan = AugmentPlan::from_county_map(AugmentMode::PairsAndTriples, &county_map);
    let (full, _) = augment_dataset(&originals, &full_plan, true).unwrap();
    assert_eq!(full.len(), 70_026, "criterion 4: pairs+triples total");

    // Cross-check the per-year combination counts as well.
    assert_eq!(enumerate_combos(&pairs_plan).unwrap().len(), 499);
    assert_eq!(enumerate_combos(&full_plan).unwrap().len(), 2023);

    pass(
        "criterion 4 (augmentation counting)",
        "50 random maps match brute force; Iowa map gives 19,734 and 70,026".into(),
    );
}

#[test]
fn criterion_5_tensor_assembly() {
    use rand::{Rng, SeedableRng};

    // PDSI broadcast changes value exactly at the month-start day indices.
    let mut series = yieldcast::PdsiSeries::new("CRD01");
    for (i, m) in (4..=10u8).enumerate() {
        series.insert(2001, m, i as f64 - 3.0).unwrap();
    }
    let v = broadcast_pdsi(&series, 2001).unwrap();
    assert_eq!(SEASON_MONTH_STARTS, [0, 30, 61, 91, 122, 153, 183]);
    let mut boundaries = vec![0usize];
    for t in 1..SEASON_DAYS {
        if v[t] != v[t - 1] {
            boundaries.push(t);
        }
    }
    assert_eq!(boundaries, SEASON_MONTH_STARTS.to_vec());

    // 100 samples: random probes against a naive per-sample assembler that
    // recomputes every cell from the raw inputs.
    let config = SynthConfig {
        crds: 2,
        counties_per_crd: 5,
        start_year: 2001,
        years: 10,
        coeffs: Default::default(),
        trend: SynthTrend::None,
        noise_sigma: 1.0,
    };
    let (raw, _) = generate_synthetic(&config, 5).unwrap();
    let trend = TrendModel::percentage(2010);
    let fs = FeatureSet::best10();
    let samples = build_samples(&raw, &trend, &fs, 2001..=2010).unwrap();
    assert_eq!(samples.len(), 100);
    let (tensor, targets) = to_tensor(&samples, &fs).unwrap();

    let naive_cell = |raw: &RawDataset, key: &str, year: i32, f: usize, t: usize| -> f64 {
        let days = &raw.weather[&(key.to_string(), year)];
        let meta = &raw.counties[key];
        let pdsi = broadcast_pdsi(&raw.pdsi[&meta.crd_id], year).unwrap();
        match f {
            0 => days[t].tmean_f,
            1 => days[t].tmax_f,
            2 => days[t].tmin_f,
            3 => days[t].rain_in,
            4 => days[t].wind_mph,
            5 => pdsi[t],
            6 => meta.soil.rootznaws,
            7 => meta.soil.droughty,
            8 => (0..=t).map(|k| gdd(days[k].tmax_f, days[k].tmin_f).unwrap()).sum(),
            9 => (0..=t).map(|k| days[k].rain_in).sum(),
            _ => unreachable!(),
        }
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
    for _ in 0..500 {
        let n = rng.gen_range(0..samples.len());
        let f = rng.gen_range(0..10);
        let t = rng.gen_range(0..SEASON_DAYS);
        let expect = naive_cell(&raw, &samples[n].key, samples[n].year, f, t);
        let got = tensor.get(n, f, t);
        assert!(
            (got - expect).abs() < 1e-9,
            "criterion 5: cell ({n},{f},{t}) = {got}, naive {expect}"
        );
    }
    // Constants really repeat 214 times.
    for n in [0usize, 50, 99] {
        let first = tensor.get(n, 6, 0);
        for t in 0..SEASON_DAYS {
            assert_eq!(tensor.get(n, 6, t), first);
        }
    }
    assert_eq!(targets.len(), 100);
    pass(
        "criterion 5 (tensor assembly)",
        "PDSI boundaries at {0,30,61,91,122,153,183}; 500 probes match naive assembler".into(),
    );
}

fn adjusted_test_mse(model: &LstmModel, data: &SharedData, t_len: usize) -> f64 {
    let (test_tensor, test_targets) = to_tensor(&data.samples_test, &data.fs).unwrap();
    let test_tensor = test_tensor.truncate_time(t_len).unwrap();
    let preds: Vec<f64> = (0..test_tensor.samples())
        .map(|n| model.predict(SeqView::from_tensor(&test_tensor, n)).unwrap())
        .collect();
    yieldcast::train::mse(&preds, &test_targets).unwrap()
}

fn baseline_mse(data: &SharedData) -> f64 {
    let train_mean = data
        .samples_train
        .iter()
        .map(|s| s.target_adjusted)
        .sum::<f64>()
        / data.samples_train.len() as f64;
    let sq: f64 = data
        .samples_test
        .iter()
        .map(|s| (s.target_adjusted - train_mean) * (s.target_adjusted - train_mean))
        .sum();
    sq / data.samples_test.len() as f64
}

#[test]
fn criterion_6_synthetic_learnability() {
    let data = shared_data();
    let _guard = heavy_lock().lock().unwrap();
    let start = Instant::now();

    let (tensor, targets) = to_tensor(&data.samples_train, &data.fs).unwrap();
    let (train_idx, val_idx) = split_validation(&data.samples_train, 0.1, 42).unwrap();
    let train_data = TrainData {
        tensor,
        targets,
        train_idx,
        val_idx,
    };
    let space = SearchSpace {
        learning_rate_range: (1e-4, 1e-1),
        layer_choices: vec![1, 2],
        hidden_grid: vec![8, 12],
        dropout_choices: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        batch_size: 64,
        max_epochs: 8,
        patience: 2,
    };
    let result = random_search(&space, 30, 42, &train_data, 2).unwrap();
    let test_mse = adjusted_test_mse(&result.best_report.model, data, SEASON_DAYS);
    let baseline = baseline_mse(data);
    let elapsed = start.elapsed();

    assert!(
        test_mse <= 0.5 * baseline,
        "criterion 6: test MSE {test_mse:.2} vs 50% baseline {:.2}",
        0.5 * baseline
    );
    assert!(
        elapsed.as_secs() < 600,
        "criterion 6: runtime {elapsed:?} exceeds 10 min"
    );
    pass(
        "criterion 6 (synthetic learnability)",
        format!(
            "30 trials, best trial {} -> test MSE {test_mse:.2} vs baseline {baseline:.2} \
             ({:.0}%), {elapsed:.1?}",
            result.best_trial,
            100.0 * test_mse / baseline
        ),
    );
}

#[test]
fn criterion_7_early_prediction_monotonicity_soft() {
    let data = shared_data();
    let _guard = heavy_lock().lock().unwrap();

    let (tensor, targets) = to_tensor(&data.samples_train, &data.fs).unwrap();
    let runs: Vec<(u64, usize)> = (0..10u64).flat_map(|s| [(s, 214usize), (s, 122)]).collect();
    let results: Vec<Mutex<Option<(u64, usize, f64)>>> =
        runs.iter().map(|_| Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..2 {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= runs.len() {
                    break;
                }
                let (seed, t_len) = runs[i];
                let (train_idx, val_idx) =
                    split_validation(&data.samples_train, 0.1, seed).unwrap();
                let train_data = TrainData {
                    tensor: tensor.truncate_time(t_len).unwrap(),
                    targets: targets.clone(),
                    train_idx,
                    val_idx,
                };
                let hp = Hyperparams {
                    learning_rate: 0.05,
                    hidden_sizes: vec![8],
                    dropout_rate: 0.0,
                    batch_size: 64,
                    max_epochs: 8,
                    patience: 8,
                    seed,
                };
                let report = train_model(&train_data, &hp).unwrap();
                let mse = adjusted_test_mse(&report.model, data, t_len);
                *results[i].lock().unwrap() = Some((seed, t_len, mse));
            });
        }
    });

    let mut by_seed: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for slot in results {
        let (seed, t_len, mse) = slot.into_inner().unwrap().unwrap();
        let e = by_seed.entry(seed).or_insert((0.0, 0.0));
        if t_len == 214 {
            e.0 = mse;
        } else {
            e.1 = mse;
        }
    }
    let wins = by_seed.values().filter(|(full, early)| full <= early).count();
    // Soft check: logged, not asserted. Later data should usually help.
    let verdict = if wins >= 8 { "PASS" } else { "SOFT-FAIL" };
    println!(
        "[{verdict}] criterion 7 (early-prediction monotonicity, soft): \
         T=214 beat T=122 in {wins}/10 seeded runs {:?}",
        by_seed
            .values()
            .map(|(f, e)| format!("{f:.0} vs {e:.0}"))
            .collect::<Vec<_>>()
    );
}

#[test]
fn paper_scale_augmented_tensor_shape() {
    // 3,267 originals under the true Iowa map expand to 70,026 samples and
    // pack into the 10 x 214 x 70,026 tensor.
    let county_map = parse_crd_map_csv(&fixture("iowa_crd_map.csv")).unwrap();
    let fs = FeatureSet::best10();
    let originals: Vec<Sample> = county_map
        .keys()
        .flat_map(|k| {
            (1980..=2012).map(|y| {
                Sample::new(
                    k.clone(),
                    y,
                    FeatureMatrix::zeros(fs.len(), SEASON_DAYS),
                    100.0,
                )
                .unwrap()
            })
        })
        .collect();
    let plan = AugmentPlan::from_county_map(AugmentMode::PairsAndTriples, &county_map);
    let (augmented, _) = augment_dataset(&originals, &plan, true).unwrap();
    let (tensor, targets) = to_tensor(&augmented, &fs).unwrap();
    assert_eq!(
        (tensor.features(), tensor.time_len(), tensor.samples()),
        (10, 214, 70_026)
    );
    assert_eq!(targets.len(), 70_026);
    pass(
        "paper-scale tensor",
        "Iowa augmentation packs into 10 x 214 x 70,026".into(),
    );
}

#[test]
fn criterion_8_mrmr_sanity() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let n = 1_000;
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(50.0..250.0)).collect();
    let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let copy = y.clone();
    let dup = y.clone();

    // Target copy ranks first.
    let s = FeatureSummary {
        columns: vec![noise.clone(), copy.clone()],
        names: vec!["noise".into(), "copy".into()],
        target: y.clone(),
    };
    let ranked = mrmr_rank(&s, 2, &SelectConfig::default()).unwrap();
    assert_eq!(ranked[0].name, "copy");

    // A duplicated feature is demoted by the redundancy penalty: with
    // {copy, dup, noise} the duplicate cannot rank first, and its greedy
    // score collapses from full relevance to (nearly) zero.
    let s = FeatureSummary {
        columns: vec![copy.clone(), dup, noise],
        names: vec!["copy".into(), "dup".into(), "noise".into()],
        target: y.clone(),
    };
    let ranked = mrmr_rank(&s, 3, &SelectConfig::default()).unwrap();
    assert_eq!(ranked[0].name, "copy");
    let dup_pos = ranked.iter().position(|r| r.name == "dup").unwrap();
    assert!(dup_pos >= 1, "criterion 8: duplicate ranked first");
    let dup_relevance = mutual_information(&s.columns[1], &s.target, 10).unwrap();
    assert!(
        ranked[dup_pos].score < 0.5 * dup_relevance,
        "criterion 8: duplicate score {} not penalised vs relevance {dup_relevance}",
        ranked[dup_pos].score
    );

    // Three-feature greedy equals the exhaustive application of the rule.
    let cfg = SelectConfig::default();
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let w = rng.gen_range(0.0..1.0);
            y.iter().map(|v| w * v + rng.gen_range(-60.0..60.0)).collect()
        })
        .collect();
    let names = ["f0", "f1", "f2"];
    let s = FeatureSummary {
        columns: cols.clone(),
        names: names.iter().map(|s| s.to_string()).collect(),
        target: y.clone(),
    };
    let got: Vec<String> = mrmr_rank(&s, 3, &cfg)
        .unwrap()
        .into_iter()
        .map(|r| r.name)
        .collect();
    let mi = |a: &[f64], b: &[f64]| mutual_information(a, b, cfg.bins).unwrap();
    let rel: Vec<f64> = cols.iter().map(|c| mi(c, &y)).collect();
    let first = (0..3)
        .max_by(|&a, &b| rel[a].partial_cmp(&rel[b]).unwrap().then(names[b].cmp(names[a])))
        .unwrap();
    let remaining: Vec<usize> = (0..3).filter(|&i| i != first).collect();
    let second = *remaining
        .iter()
        .max_by(|&&a, &&b| {
            let sa = rel[a] - mi(&cols[a], &cols[first]);
            let sb = rel[b] - mi(&cols[b], &cols[first]);
            sa.partial_cmp(&sb).unwrap().then(names[b].cmp(names[a]))
        })
        .unwrap();
    let third = *remaining.iter().find(|&&i| i != second).unwrap();
    let expect: Vec<String> = [first, second, third]
        .iter()
        .map(|&i| names[i].to_string())
        .collect();
    assert_eq!(got, expect);

    pass(
        "criterion 8 (mRMR sanity)",
        "target copy first; duplicate demoted; greedy equals exhaustive oracle".into(),
    );
}

#[test]
fn criterion_9_checkpoint_round_trip() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let layout = LstmLayout::new(10, vec![12, 8], 0.3).unwrap();
    let mut model = LstmModel::init(layout, 99).unwrap();
    model
        .set_norm_stats(NormStats {
            mean: (0..10).map(|_| rng.gen_range(-50.0..300.0)).collect(),
            std: (0..10).map(|_| rng.gen_range(0.1..80.0)).collect(),
        })
        .unwrap();
    let trend = TrendModel::percentage(2016);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.yldc");
    persist::save_checkpoint(&model, &trend, "best10", None, &path).unwrap();
    let loaded = persist::load_checkpoint(&path).unwrap();

    // Bit-identical parameters.
    assert_eq!(model.params().len(), loaded.model.params().len());
    for (a, b) in model.params().iter().zip(loaded.model.params()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    // Bit-identical predictions on 100 random inputs.
    for case in 0..100u64 {
        let mut m = FeatureMatrix::zeros(10, 20);
        for f in 0..10 {
            for t in 0..20 {
                m.set(f, t, rng.gen_range(-100.0..400.0));
            }
        }
        let a = model.forward(SeqView::from_matrix(&m), Mode::Infer, case).unwrap().0;
        let b = loaded
            .model
            .forward(SeqView::from_matrix(&m), Mode::Infer, case)
            .unwrap()
            .0;
        assert_eq!(a.to_bits(), b.to_bits(), "criterion 9: case {case}");
    }
    pass(
        "criterion 9 (checkpoint round trip)",
        "parameters and 100 predictions bit-identical after save/load".into(),
    );
}
