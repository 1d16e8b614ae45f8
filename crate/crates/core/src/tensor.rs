//! Dense feature containers.
//!
//! [`FeatureTensor`] is the training container: N samples by F features by T
//! days, stored row-major with n outermost and t innermost so each sample's
//! series is one contiguous block for the LSTM scan. Production tensors use
//! T in {122, 153, 183, 214}; the container itself accepts any positive
//! shape so small shapes remain testable.

use crate::error::{Error, Result};

/// One sample's F x T feature block, t contiguous per feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    features: usize,
    time_len: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(features: usize, time_len: usize) -> FeatureMatrix {
        FeatureMatrix {
            features,
            time_len,
            data: vec![0.0; features * time_len],
        }
    }

    /// Build from per-feature rows, each of length `time_len`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<FeatureMatrix> {
        if rows.is_empty() {
            return Err(Error::Shape("feature matrix needs at least one row".into()));
        }
        let time_len = rows[0].len();
        if time_len == 0 {
            return Err(Error::Shape("feature rows must be non-empty".into()));
        }
        if rows.iter().any(|r| r.len() != time_len) {
            return Err(Error::Shape("feature rows have mixed lengths".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * time_len);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            features: rows.len(),
            time_len,
            data,
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn time_len(&self) -> usize {
        self.time_len
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize) -> f64 {
        assert!(f < self.features && t < self.time_len, "index out of range");
        self.data[f * self.time_len + t]
    }

    #[inline]
    pub fn set(&mut self, f: usize, t: usize, v: f64) {
        assert!(f < self.features && t < self.time_len, "index out of range");
        self.data[f * self.time_len + t] = v;
    }

    /// Feature row `f` as a slice over time.
    pub fn row(&self, f: usize) -> &[f64] {
        assert!(f < self.features, "feature index out of range");
        &self.data[f * self.time_len..(f + 1) * self.time_len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Keep only time indices [0, new_t).
    pub fn truncate_time(&self, new_t: usize) -> Result<FeatureMatrix> {
        if new_t == 0 || new_t > self.time_len {
            return Err(Error::Shape(format!(
                "cannot truncate time axis {} to {}",
                self.time_len, new_t
            )));
        }
        let mut data = Vec::with_capacity(self.features * new_t);
        for f in 0..self.features {
            let start = f * self.time_len;
            data.extend_from_slice(&self.data[start..start + new_t]);
        }
        Ok(FeatureMatrix {
            features: self.features,
            time_len: new_t,
            data,
        })
    }
}

/// N x F x T tensor of feature sequences plus feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    features: usize,
    time_len: usize,
    samples: usize,
    data: Vec<f64>,
    feature_names: Vec<String>,
}

impl FeatureTensor {
    /// Zero-filled tensor. Feature names start as empty placeholders.
    pub fn new(features: usize, time_len: usize, samples: usize) -> Result<FeatureTensor> {
        if features == 0 || time_len == 0 || samples == 0 {
            return Err(Error::Shape(format!(
                "tensor dimensions must be positive, got {features} x {time_len} x {samples}"
            )));
        }
        Ok(FeatureTensor {
            features,
            time_len,
            samples,
            data: vec![0.0; features * time_len * samples],
            feature_names: vec![String::new(); features],
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn time_len(&self) -> usize {
        self.time_len
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn set_feature_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.features {
            return Err(Error::Shape(format!(
                "{} names for {} features",
                names.len(),
                self.features
            )));
        }
        self.feature_names = names;
        Ok(())
    }

    #[inline]
    fn index(&self, n: usize, f: usize, t: usize) -> usize {
        assert!(
            n < self.samples && f < self.features && t < self.time_len,
            "tensor index out of range"
        );
        (n * self.features + f) * self.time_len + t
    }

    #[inline]
    pub fn get(&self, n: usize, f: usize, t: usize) -> f64 {
        self.data[self.index(n, f, t)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, f: usize, t: usize, v: f64) {
        let i = self.index(n, f, t);
        self.data[i] = v;
    }

    /// Sample n's contiguous F x T block.
    pub fn sample(&self, n: usize) -> &[f64] {
        assert!(n < self.samples, "sample index out of range");
        let block = self.features * self.time_len;
        &self.data[n * block..(n + 1) * block]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        assert!(n < self.samples, "sample index out of range");
        let block = self.features * self.time_len;
        &mut self.data[n * block..(n + 1) * block]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keep only time indices [0, new_t). Cumulative features are prefix
    /// sums, so truncation preserves their meaning and nothing is recomputed.
    pub fn truncate_time(&self, new_t: usize) -> Result<FeatureTensor> {
        if new_t == 0 {
            return Err(Error::Shape("cannot truncate time axis to 0".into()));
        }
        if new_t > self.time_len {
            return Err(Error::Shape(format!(
                "cannot truncate time axis {} to {}",
                self.time_len, new_t
            )));
        }
        let mut out = FeatureTensor::new(self.features, new_t, self.samples)?;
        out.feature_names = self.feature_names.clone();
        for n in 0..self.samples {
            for f in 0..self.features {
                let src = (n * self.features + f) * self.time_len;
                let dst = (n * self.features + f) * new_t;
                out.data[dst..dst + new_t].copy_from_slice(&self.data[src..src + new_t]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn new_zero_filled() {
        let t = FeatureTensor::new(10, 214, 1).unwrap();
        assert_eq!(t.as_slice().len(), 2140);
        assert!(t.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(t.feature_names().len(), 10);
        assert!(t.feature_names().iter().all(|n| n.is_empty()));
    }

    #[test]
    fn new_single_cell() {
        let t = FeatureTensor::new(1, 1, 1).unwrap();
        assert_eq!(t.as_slice(), &[0.0]);
    }

    #[test]
    fn new_paper_scale_allocates() {
        // 10 x 214 x 70,026 cells; zero pages stay untouched until read.
        let t = FeatureTensor::new(10, 214, 70_026).unwrap();
        assert_eq!(t.as_slice().len(), 10 * 214 * 70_026);
        assert_eq!(t.get(70_025, 9, 213), 0.0);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(FeatureTensor::new(0, 214, 1).is_err());
        assert!(FeatureTensor::new(10, 0, 1).is_err());
        assert!(FeatureTensor::new(10, 214, 0).is_err());
    }

    #[test]
    fn truncate_identity_and_errors() {
        let mut t = FeatureTensor::new(2, 214, 3).unwrap();
        t.set(1, 1, 213, 4.5);
        let same = t.truncate_time(214).unwrap();
        assert_eq!(same, t);
        assert!(t.truncate_time(0).is_err());
        assert!(t.truncate_time(215).is_err());
    }

    #[test]
    fn truncate_keeps_prefix() {
        // New length 122 keeps exactly April 30 + May 31 + June 30 + July 31 days.
        assert_eq!(30 + 31 + 30 + 31, 122);
        let mut t = FeatureTensor::new(1, 214, 1).unwrap();
        for day in 0..214 {
            t.set(0, 0, day, day as f64);
        }
        let cut = t.truncate_time(122).unwrap();
        assert_eq!(cut.time_len(), 122);
        for day in 0..122 {
            assert_eq!(cut.get(0, 0, day), day as f64);
        }
        // August-truncation keeps through Aug 31.
        let aug = t.truncate_time(153).unwrap();
        assert_eq!(aug.get(0, 0, 152), 152.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn roundtrip_read_after_write(
            f in 1usize..6,
            t_len in 1usize..20,
            n in 1usize..6,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut tensor = FeatureTensor::new(f, t_len, n).unwrap();
            let mut expect = vec![];
            for _ in 0..32 {
                let (ni, fi, ti) = (rng.gen_range(0..n), rng.gen_range(0..f), rng.gen_range(0..t_len));
                let v: f64 = rng.gen_range(-1e6..1e6);
                tensor.set(ni, fi, ti, v);
                expect.push((ni, fi, ti, v));
            }
            // Later writes win; replay to know the final value per cell.
            let mut last = std::collections::HashMap::new();
            for (ni, fi, ti, v) in expect {
                last.insert((ni, fi, ti), v);
            }
            for ((ni, fi, ti), v) in last {
                prop_assert_eq!(tensor.get(ni, fi, ti), v);
            }
        }

        #[test]
        fn truncate_composes(
            t_len in 2usize..30,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut tensor = FeatureTensor::new(3, t_len, 2).unwrap();
            for n in 0..2 {
                for f in 0..3 {
                    for t in 0..t_len {
                        tensor.set(n, f, t, rng.gen_range(-10.0..10.0));
                    }
                }
            }
            let a = rng.gen_range(1..=t_len);
            let b = rng.gen_range(1..=a);
            let two_step = tensor.truncate_time(a).unwrap().truncate_time(b).unwrap();
            let one_step = tensor.truncate_time(b).unwrap();
            prop_assert_eq!(two_step, one_step);
        }
    }
}
