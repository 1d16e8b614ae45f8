//! Combination-based data augmentation.
//!
//! New training samples are created by averaging the features and targets of
//! two (or three) counties from the same Crop Reporting District within one
//! year. Combination keys are the sorted county ids joined with '+', and the
//! synthetic samples are for training only; they are never evaluated as
//! real counties.

use crate::error::{Error, Result};
use crate::types::Sample;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    PairsOnly,
    PairsAndTriples,
}

/// Which counties may be combined, grouped by CRD.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    pub mode: AugmentMode,
    /// crd_id -> sorted county ids.
    pub crd_map: BTreeMap<String, Vec<String>>,
}

impl AugmentPlan {
    /// Build from a county -> CRD mapping (the crd_map.csv layout).
    pub fn from_county_map(
        mode: AugmentMode,
        county_to_crd: &BTreeMap<String, String>,
    ) -> AugmentPlan {
        let mut crd_map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (county, crd) in county_to_crd {
            crd_map.entry(crd.clone()).or_default().push(county.clone());
        }
        for counties in crd_map.values_mut() {
            counties.sort();
        }
        AugmentPlan { mode, crd_map }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (crd, counties) in &self.crd_map {
            for county in counties {
                if !seen.insert(county.clone()) {
                    return Err(Error::Plan(format!(
                        "county {county} appears in more than one CRD (second: {crd})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Expected number of combination samples per year.
    pub fn combos_per_year(&self) -> usize {
        self.crd_map
            .values()
            .map(|c| {
                let n = c.len();
                let pairs = if n >= 2 { n * (n - 1) / 2 } else { 0 };
                let triples = if n >= 3 { n * (n - 1) * (n - 2) / 6 } else { 0 };
                match self.mode {
                    AugmentMode::PairsOnly => pairs,
                    AugmentMode::PairsAndTriples => pairs + triples,
                }
            })
            .sum()
    }
}

/// All size-2 (and size-3) county subsets within each CRD, in deterministic
/// order: CRDs sorted, subsets in lexicographic order within each CRD.
pub fn enumerate_combos(plan: &AugmentPlan) -> Result<Vec<Vec<String>>> {
    plan.validate()?;
    let mut out = Vec::new();
    for counties in plan.crd_map.values() {
        let n = counties.len();
        for i in 0..n {
            for j in i + 1..n {
                out.push(vec![counties[i].clone(), counties[j].clone()]);
            }
        }
        if plan.mode == AugmentMode::PairsAndTriples {
            for i in 0..n {
                for j in i + 1..n {
                    for k in j + 1..n {
                        out.push(vec![
                            counties[i].clone(),
                            counties[j].clone(),
                            counties[k].clone(),
                        ]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Element-wise mean of 2 or 3 same-year samples. The key is the sorted
/// county ids joined with '+'.
pub fn average_samples(samples: &[&Sample]) -> Result<Sample> {
    if samples.len() < 2 || samples.len() > 3 {
        return Err(Error::Combination(format!(
            "can only combine 2 or 3 samples, got {}",
            samples.len()
        )));
    }
    let year = samples[0].year;
    let f = samples[0].features.features();
    let t = samples[0].features.time_len();
    for s in &samples[1..] {
        if s.year != year {
            return Err(Error::Combination(format!(
                "mixed years {year} and {} in combination",
                s.year
            )));
        }
        if s.features.features() != f || s.features.time_len() != t {
            return Err(Error::Combination(format!(
                "mixed shapes {f}x{t} and {}x{} in combination",
                s.features.features(),
                s.features.time_len()
            )));
        }
    }
    let inv = 1.0 / samples.len() as f64;
    let mut features = crate::tensor::FeatureMatrix::zeros(f, t);
    for fi in 0..f {
        for ti in 0..t {
            let sum: f64 = samples.iter().map(|s| s.features.get(fi, ti)).sum();
            features.set(fi, ti, sum * inv);
        }
    }
    let target = samples.iter().map(|s| s.target_adjusted).sum::<f64>() * inv;
    let mut keys: Vec<&str> = samples.iter().map(|s| s.key.as_str()).collect();
    keys.sort();
    Sample::new(keys.join("+"), year, features, target)
}

/// Originals plus all combination samples for every year present.
///
/// With `strict`, a combination that references a missing (county, year)
/// sample is an error; otherwise it is skipped and reported in the returned
/// skip list so the caller can log it.
pub fn augment_dataset(
    samples: &[Sample],
    plan: &AugmentPlan,
    strict: bool,
) -> Result<(Vec<Sample>, Vec<String>)> {
    let combos = enumerate_combos(plan)?;
    let mut by_key: BTreeMap<(&str, i32), &Sample> = BTreeMap::new();
    let mut years: BTreeSet<i32> = BTreeSet::new();
    for s in samples {
        by_key.insert((s.key.as_str(), s.year), s);
        years.insert(s.year);
    }
    let mut out: Vec<Sample> = samples.to_vec();
    let mut skipped = Vec::new();
    for &year in &years {
        for combo in &combos {
            let members: Option<Vec<&Sample>> = combo
                .iter()
                .map(|c| by_key.get(&(c.as_str(), year)).copied())
                .collect();
            match members {
                Some(members) => out.push(average_samples(&members)?),
                None => {
                    let name = format!("{}@{year}", combo.join("+"));
                    if strict {
                        return Err(Error::Coverage(format!(
                            "combination {name} requires a missing county-year sample"
                        )));
                    }
                    skipped.push(name);
                }
            }
        }
    }
    Ok((out, skipped))
}
