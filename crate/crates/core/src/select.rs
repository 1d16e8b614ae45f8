//! Feature selection: histogram mutual information, greedy mRMR ranking,
//! and correlation pruning.
//!
//! Selection operates on one scalar per sample per feature (the season mean
//! by default, configurable to sum or max), since mutual information needs
//! scalar variables. Binning is equal-frequency with 10 bins by default;
//! bin assignment depends only on value order, so positive rescaling of a
//! feature leaves every score unchanged.

use crate::error::{Error, Result};
use crate::types::Sample;

/// Minimum sample count for selection to be meaningful.
pub const MIN_SELECTION_SAMPLES: usize = 30;

/// Default histogram bin count.
pub const DEFAULT_BINS: usize = 10;

/// Default |Pearson r| threshold for pruning.
pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.9;

/// How a feature's day series is reduced to one scalar per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SummaryStat {
    #[default]
    Mean,
    Sum,
    Max,
}

impl SummaryStat {
    fn apply(&self, row: &[f64]) -> f64 {
        match self {
            SummaryStat::Mean => row.iter().sum::<f64>() / row.len() as f64,
            SummaryStat::Sum => row.iter().sum(),
            SummaryStat::Max => row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
        }
    }
}

/// Per-sample scalar summaries: an N x F matrix, feature names, and the
/// target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSummary {
    /// columns[f][n] is feature f's summary for sample n.
    pub columns: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub target: Vec<f64>,
}

impl FeatureSummary {
    pub fn from_samples(samples: &[Sample], names: &[String], stat: SummaryStat) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Config("no samples for selection".into()))?;
        let f = first.features.features();
        if names.len() != f {
            return Err(Error::Shape(format!(
                "{} names for {f} features",
                names.len()
            )));
        }
        let mut columns = vec![Vec::with_capacity(samples.len()); f];
        let mut target = Vec::with_capacity(samples.len());
        for s in samples {
            if s.features.features() != f {
                return Err(Error::Shape("samples have mixed feature counts".into()));
            }
            for (fi, col) in columns.iter_mut().enumerate() {
                col.push(stat.apply(s.features.row(fi)));
            }
            target.push(s.target_adjusted);
        }
        Ok(FeatureSummary {
            columns,
            names: names.to_vec(),
            target,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

/// Equal-frequency bin index per value. Edges sit at the k*N/bins order
/// statistics; assignment compares values against edges, so it is invariant
/// under any strictly increasing transform of the data.
fn bin_assignments(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins).map(|k| sorted[k * n / bins]).collect();
    x.iter()
        .map(|&v| edges.partition_point(|&e| e <= v))
        .collect()
}

/// Histogram mutual information estimate in nats, with equal-frequency
/// binning. A constant vector occupies a single bin, giving zero.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "mutual information length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < bins * bins {
        return Err(Error::Config(format!(
            "need at least bins^2 = {} samples for {bins} bins, got {n}",
            bins * bins
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in MI input".into()));
    }
    let bx = bin_assignments(x, bins);
    let by = bin_assignments(y, bins);
    let mut joint = vec![0usize; bins * bins];
    let mut mx = vec![0usize; bins];
    let mut my = vec![0usize; bins];
    for (&i, &j) in bx.iter().zip(&by) {
        joint[i * bins + j] += 1;
        mx[i] += 1;
        my[j] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / nf;
            let px = mx[i] as f64 / nf;
            let py = my[j] as f64 / nf;
            mi += pxy * (pxy / (px * py)).ln();
        }
    }
    Ok(mi.max(0.0))
}

/// Configuration shared by the ranking operations.
#[derive(Debug, Clone, Copy)]
pub struct SelectConfig {
    pub bins: usize,
    pub correlation_threshold: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            bins: DEFAULT_BINS,
            correlation_threshold: DEFAULT_CORRELATION_THRESHOLD,
        }
    }
}

fn check_summary(summary: &FeatureSummary) -> Result<()> {
    if summary.n_samples() < MIN_SELECTION_SAMPLES {
        return Err(Error::Config(format!(
            "selection needs at least {MIN_SELECTION_SAMPLES} samples, got {}",
            summary.n_samples()
        )));
    }
    Ok(())
}

/// A ranked feature with its greedy mRMR score (relevance for the first
/// pick, relevance minus mean redundancy afterwards).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeature {
    pub name: String,
    pub score: f64,
}

/// Greedy minimum-redundancy maximum-relevance ranking of the top `k`
/// features. Ties break toward the lexicographically smaller name.
pub fn mrmr_rank(
    summary: &FeatureSummary,
    k: usize,
    config: &SelectConfig,
) -> Result<Vec<RankedFeature>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    check_summary(summary)?;
    let f = summary.n_features();
    if k > f {
        return Err(Error::Config(format!(
            "cannot rank {k} features out of {f}"
        )));
    }

    let relevance: Vec<f64> = summary
        .columns
        .iter()
        .map(|col| mutual_information(col, &summary.target, config.bins))
        .collect::<Result<_>>()?;

    // Candidate order: by name, so strict-greater comparisons break ties
    // toward the smaller name.
    let mut by_name: Vec<usize> = (0..f).collect();
    by_name.sort_by(|&a, &b| summary.names[a].cmp(&summary.names[b]));

    let mut pairwise: Vec<Option<f64>> = vec![None; f * f];
    let mut pair_mi = |a: usize, b: usize, cols: &[Vec<f64>]| -> Result<f64> {
        let key = a.min(b) * f + a.max(b);
        if let Some(v) = pairwise[key] {
            return Ok(v);
        }
        let v = mutual_information(&cols[a], &cols[b], config.bins)?;
        pairwise[key] = Some(v);
        Ok(v)
    };

    let mut selected: Vec<RankedFeature> = Vec::with_capacity(k);
    let mut selected_idx: Vec<usize> = Vec::with_capacity(k);
    let mut remaining: Vec<usize> = by_name.clone();

    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for &cand in &remaining {
            let score = if selected_idx.is_empty() {
                relevance[cand]
            } else {
                let mut redundancy = 0.0;
                for &s in &selected_idx {
                    redundancy += pair_mi(cand, s, &summary.columns)?;
                }
                relevance[cand] - redundancy / selected_idx.len() as f64
            };
            match best {
                Some((_, b)) if score <= b => {}
                _ => best = Some((cand, score)),
            }
        }
        let (idx, score) = best.expect("remaining non-empty while selected < k <= f");
        selected.push(RankedFeature {
            name: summary.names[idx].clone(),
            score,
        });
        selected_idx.push(idx);
        remaining.retain(|&r| r != idx);
    }
    Ok(selected)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0; // constant feature: treat as uncorrelated
    }
    sxy / (sxx * syy).sqrt()
}

/// Drop the less-relevant member of every feature pair whose |Pearson r|
/// exceeds the threshold.
///
/// Greedy rule, deterministic in the input values only: repeatedly take the
/// over-threshold pair with the largest |r| (ties toward the smaller name
/// pair) and drop its member with the lower MI against the target (ties drop
/// the lexicographically larger name). Survivors keep their input order.
pub fn correlation_prune(
    summary: &FeatureSummary,
    config: &SelectConfig,
) -> Result<Vec<String>> {
    check_summary(summary)?;
    let threshold = config.correlation_threshold;
    if !(0.0..1.0).contains(&threshold) || threshold == 0.0 {
        return Err(Error::Config(format!(
            "correlation threshold {threshold} must be in (0, 1)"
        )));
    }
    let f = summary.n_features();
    let relevance: Vec<f64> = summary
        .columns
        .iter()
        .map(|col| mutual_information(col, &summary.target, config.bins))
        .collect::<Result<_>>()?;

    let mut corr = vec![0.0; f * f];
    for a in 0..f {
        for b in a + 1..f {
            let r = pearson(&summary.columns[a], &summary.columns[b]).abs();
            corr[a * f + b] = r;
        }
    }

    let mut alive = vec![true; f];
    loop {
        let mut worst: Option<(usize, usize, f64)> = None;
        for a in 0..f {
            if !alive[a] {
                continue;
            }
            for b in a + 1..f {
                if !alive[b] {
                    continue;
                }
                let r = corr[a * f + b];
                if r <= threshold {
                    continue;
                }
                let better = match worst {
                    None => true,
                    Some((wa, wb, wr)) => {
                        r > wr
                            || (r == wr
                                && (summary.names[a].as_str(), summary.names[b].as_str())
                                    < (summary.names[wa].as_str(), summary.names[wb].as_str()))
                    }
                };
                if better {
                    worst = Some((a, b, r));
                }
            }
        }
        let Some((a, b, _)) = worst else { break };
        let drop = if relevance[a] < relevance[b] {
            a
        } else if relevance[b] < relevance[a] {
            b
        } else if summary.names[a] > summary.names[b] {
            a
        } else {
            b
        };
        alive[drop] = false;
    }
    Ok((0..f)
        .filter(|&i| alive[i])
        .map(|i| summary.names[i].clone())
        .collect())
}
