//! Binary persistence: self-contained model checkpoints (`.yldc`) and the
//! featurized-sample cache (`.yldt`).
//!
//! Checkpoint layout, byte by byte:
//!
//! ```text
//! magic    4 bytes  "YLDC"
//! version  u16 LE
//! hdr_len  u32 LE
//! header   hdr_len bytes of JSON: feature_set, trend, layout, hyperparams
//! n_blocks u32 LE
//! block*   name_len u16 LE, name bytes,
//!          rows u32 LE, cols u32 LE,
//!          rows*cols f64 LE
//! ```
//!
//! Parameter blocks are written in model order followed by `norm.mean` and
//! `norm.std`. Writing is deterministic for identical inputs and files are
//! replaced atomically (write temp, then rename). Round trips are bit-exact:
//! a loaded model predicts identically to the saved one.

use crate::detrend::TrendModel;
use crate::error::{Error, Result};
use crate::lstm::{LstmLayout, LstmModel, NormStats};
use crate::tensor::FeatureMatrix;
use crate::train::Hyperparams;
use crate::types::Sample;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"YLDC";
pub const SAMPLES_MAGIC: [u8; 4] = *b"YLDT";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    feature_set: String,
    trend: TrendModel,
    layout: LstmLayout,
    hyperparams: Option<Hyperparams>,
}

/// A loaded checkpoint: everything needed to predict, nothing external.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: LstmModel,
    pub trend: TrendModel,
    pub feature_set: String,
    pub hyperparams: Option<Hyperparams>,
}

fn push_block(out: &mut Vec<u8>, name: &str, rows: usize, cols: usize, data: &[f64]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a checkpoint to bytes.
pub fn checkpoint_to_bytes(
    model: &LstmModel,
    trend: &TrendModel,
    feature_set: &str,
    hyperparams: Option<&Hyperparams>,
) -> Result<Vec<u8>> {
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric(
            "cannot checkpoint a model with non-finite parameters".into(),
        ));
    }
    trend.validate()?;
    let header = CheckpointHeader {
        feature_set: feature_set.to_string(),
        trend: trend.clone(),
        layout: model.layout().clone(),
        hyperparams: hyperparams.cloned(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Format(format!("header: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);

    let n_blocks = model.blocks().len() + 2;
    out.extend_from_slice(&(n_blocks as u32).to_le_bytes());
    for b in model.blocks() {
        let data = &model.params()[b.offset..b.offset + b.len()];
        push_block(&mut out, &b.name, b.rows, b.cols, data);
    }
    let norm = model.norm_stats();
    push_block(&mut out, "norm.mean", 1, norm.mean.len(), &norm.mean);
    push_block(&mut out, "norm.std", 1, norm.std.len(), &norm.std);
    Ok(out)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated(format!(
                "file ends inside {what} (need {n} bytes at offset {})",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn read_block(r: &mut ByteReader) -> Result<(String, usize, usize, Vec<f64>)> {
    let name_len = r.u16("block name length")? as usize;
    let name = String::from_utf8(r.take(name_len, "block name")?.to_vec())
        .map_err(|_| Error::Format("block name is not UTF-8".into()))?;
    let rows = r.u32("block rows")? as usize;
    let cols = r.u32("block cols")? as usize;
    let data = r.f64s(rows * cols, &format!("block {name} data"))?;
    Ok((name, rows, cols, data))
}

/// Deserialize a checkpoint from bytes.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected \"YLDC\""
        )));
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let hdr_len = r.u32("header length")? as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(hdr_len, "header")?)
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    header.layout.validate()?;
    header.trend.validate()?;

    let n_blocks = r.u32("block count")? as usize;
    let template = LstmModel::zeros(header.layout.clone())?;
    let expected = template.blocks();
    if n_blocks != expected.len() + 2 {
        return Err(Error::Shape(format!(
            "checkpoint has {n_blocks} blocks, layout needs {}",
            expected.len() + 2
        )));
    }
    let mut params = vec![0.0; template.param_count()];
    for exp in expected {
        let (name, rows, cols, data) = read_block(&mut r)?;
        if name != exp.name || rows != exp.rows || cols != exp.cols {
            return Err(Error::Shape(format!(
                "block {name} ({rows}x{cols}) does not match declared layout \
                 block {} ({}x{})",
                exp.name, exp.rows, exp.cols
            )));
        }
        params[exp.offset..exp.offset + exp.len()].copy_from_slice(&data);
    }
    let f = header.layout.input_features;
    let (name, rows, cols, mean) = read_block(&mut r)?;
    if name != "norm.mean" || rows != 1 || cols != f {
        return Err(Error::Shape(format!("unexpected block {name} ({rows}x{cols})")));
    }
    let (name, rows, cols, std) = read_block(&mut r)?;
    if name != "norm.std" || rows != 1 || cols != f {
        return Err(Error::Shape(format!("unexpected block {name} ({rows}x{cols})")));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last block",
            bytes.len() - r.pos
        )));
    }
    let model = LstmModel::from_parts(header.layout, params, NormStats { mean, std })?;
    Ok(Checkpoint {
        model,
        trend: header.trend,
        feature_set: header.feature_set,
        hyperparams: header.hyperparams,
    })
}

/// Write bytes atomically: temp file in the same directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut f =
            std::fs::File::create(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        f.write_all(bytes)
            .map_err(|e| Error::io(tmp.display().to_string(), e))?;
        f.sync_all()
            .map_err(|e| Error::io(tmp.display().to_string(), e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn save_checkpoint(
    model: &LstmModel,
    trend: &TrendModel,
    feature_set: &str,
    hyperparams: Option<&Hyperparams>,
    path: &Path,
) -> Result<()> {
    let bytes = checkpoint_to_bytes(model, trend, feature_set, hyperparams)?;
    write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    checkpoint_from_bytes(&bytes)
}

#[derive(Debug, Serialize, Deserialize)]
struct SamplesHeader {
    feature_set: String,
    feature_names: Vec<String>,
    keys: Vec<String>,
    years: Vec<i32>,
    features: usize,
    time_len: usize,
}

/// A loaded sample cache.
#[derive(Debug, Clone)]
pub struct SampleCache {
    pub feature_set: String,
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample>,
}

/// Serialize featurized samples: same framing as checkpoints with a "YLDT"
/// magic, then per sample one f64 target followed by its feature matrix.
pub fn samples_to_bytes(
    samples: &[Sample],
    feature_set: &str,
    feature_names: &[String],
) -> Result<Vec<u8>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Shape("cannot cache zero samples".into()))?;
    let f = first.features.features();
    let t = first.features.time_len();
    if feature_names.len() != f {
        return Err(Error::Shape(format!(
            "{} names for {f} features",
            feature_names.len()
        )));
    }
    for s in samples {
        if s.features.features() != f || s.features.time_len() != t {
            return Err(Error::Shape(format!(
                "sample {} {} has a different shape",
                s.key, s.year
            )));
        }
    }
    let header = SamplesHeader {
        feature_set: feature_set.to_string(),
        feature_names: feature_names.to_vec(),
        keys: samples.iter().map(|s| s.key.clone()).collect(),
        years: samples.iter().map(|s| s.year).collect(),
        features: f,
        time_len: t,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Format(format!("header: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(&SAMPLES_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.target_adjusted.to_le_bytes());
        for v in s.features.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn samples_from_bytes(bytes: &[u8]) -> Result<SampleCache> {
    let mut r = ByteReader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != SAMPLES_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected \"YLDT\""
        )));
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let hdr_len = r.u32("header length")? as usize;
    let header: SamplesHeader = serde_json::from_slice(r.take(hdr_len, "header")?)
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    let n = r.u32("sample count")? as usize;
    if header.keys.len() != n || header.years.len() != n {
        return Err(Error::Shape(format!(
            "header lists {} keys / {} years for {n} samples",
            header.keys.len(),
            header.years.len()
        )));
    }
    let block = header.features * header.time_len;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let target = r.f64s(1, "target")?[0];
        let data = r.f64s(block, "sample data")?;
        let rows: Vec<Vec<f64>> = data
            .chunks_exact(header.time_len)
            .map(|c| c.to_vec())
            .collect();
        let features = FeatureMatrix::from_rows(&rows)?;
        samples.push(Sample::new(
            header.keys[i].clone(),
            header.years[i],
            features,
            target,
        )?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last sample",
            bytes.len() - r.pos
        )));
    }
    Ok(SampleCache {
        feature_set: header.feature_set,
        feature_names: header.feature_names,
        samples,
    })
}

pub fn save_samples(
    samples: &[Sample],
    feature_set: &str,
    feature_names: &[String],
    path: &Path,
) -> Result<()> {
    let bytes = samples_to_bytes(samples, feature_set, feature_names)?;
    write_atomic(path, &bytes)
}

pub fn load_samples(path: &Path) -> Result<SampleCache> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    samples_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{Mode, SeqView};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model_with_stats(seed: u64) -> LstmModel {
        let layout = LstmLayout::new(4, vec![5, 3], 0.2).unwrap();
        let mut model = LstmModel::init(layout, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        model
            .set_norm_stats(NormStats {
                mean: (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                std: (0..4).map(|_| rng.gen_range(0.5..4.0)).collect(),
            })
            .unwrap();
        model
    }

    fn hp() -> Hyperparams {
        Hyperparams {
            learning_rate: 0.0123,
            hidden_sizes: vec![5, 3],
            dropout_rate: 0.2,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 42,
        }
    }

    #[test]
    fn save_is_deterministic() {
        let model = model_with_stats(1);
        let trend = TrendModel::percentage(2016);
        let a = checkpoint_to_bytes(&model, &trend, "best10", Some(&hp())).unwrap();
        let b = checkpoint_to_bytes(&model, &trend, "best10", Some(&hp())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = model_with_stats(2);
        let trend = TrendModel::constant(2016);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.yldc");
        save_checkpoint(&model, &trend, "best10", Some(&hp()), &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.model.params(), model.params());
        assert_eq!(loaded.model.norm_stats(), model.norm_stats());
        assert_eq!(loaded.trend, trend);
        assert_eq!(loaded.feature_set, "best10");
        assert_eq!(loaded.hyperparams, Some(hp()));

        // Bit-identical predictions on random inputs, both modes.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..100u64 {
            let mut m = FeatureMatrix::zeros(4, 9);
            for f in 0..4 {
                for t in 0..9 {
                    m.set(f, t, rng.gen_range(-10.0..10.0));
                }
            }
            let a = model
                .forward(SeqView::from_matrix(&m), Mode::Train, case)
                .unwrap()
                .0;
            let b = loaded
                .model
                .forward(SeqView::from_matrix(&m), Mode::Train, case)
                .unwrap()
                .0;
            assert!(a.to_bits() == b.to_bits());
        }
    }

    #[test]
    fn corrupted_magic_rejected() {
        let model = model_with_stats(4);
        let trend = TrendModel::percentage(2016);
        let mut bytes = checkpoint_to_bytes(&model, &trend, "best10", None).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            checkpoint_from_bytes(&bytes).unwrap_err(),
            Error::Format(_)
        ));
    }

    #[test]
    fn unknown_version_rejected() {
        let model = model_with_stats(5);
        let trend = TrendModel::percentage(2016);
        let mut bytes = checkpoint_to_bytes(&model, &trend, "best10", None).unwrap();
        bytes[4] = 0xFF;
        bytes[5] = 0xFF;
        match checkpoint_from_bytes(&bytes).unwrap_err() {
            Error::Version { found, .. } => assert_eq!(found, 0xFFFF),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let model = model_with_stats(6);
        let trend = TrendModel::percentage(2016);
        let bytes = checkpoint_to_bytes(&model, &trend, "best10", None).unwrap();
        let cut = &bytes[..bytes.len() - 9];
        assert!(matches!(
            checkpoint_from_bytes(cut).unwrap_err(),
            Error::Truncated(_)
        ));
        // Cutting inside the fixed prelude is also a truncation error.
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..3]).unwrap_err(),
            Error::Truncated(_)
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let model = model_with_stats(7);
        let trend = TrendModel::percentage(2016);
        let bytes = checkpoint_to_bytes(&model, &trend, "best10", None).unwrap();
        // The first block starts right after the prelude; its rows field
        // sits after the name. Corrupt it.
        let hdr_len =
            u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let block_start = 10 + hdr_len + 4;
        let name_len =
            u16::from_le_bytes(bytes[block_start..block_start + 2].try_into().unwrap()) as usize;
        let rows_at = block_start + 2 + name_len;
        let mut bad = bytes.clone();
        bad[rows_at] = bad[rows_at].wrapping_add(1);
        let err = checkpoint_from_bytes(&bad).unwrap_err();
        assert!(
            matches!(err, Error::Shape(_) | Error::Truncated(_)),
            "got {err:?}"
        );
    }

    #[test]
    fn nonfinite_model_refused() {
        let mut model = model_with_stats(8);
        model.params_mut()[0] = f64::NAN;
        let trend = TrendModel::percentage(2016);
        assert!(checkpoint_to_bytes(&model, &trend, "best10", None).is_err());
    }

    #[test]
    fn sample_cache_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let names: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
        let samples: Vec<Sample> = (0..5)
            .map(|i| {
                let mut m = FeatureMatrix::zeros(3, 7);
                for f in 0..3 {
                    for t in 0..7 {
                        m.set(f, t, rng.gen_range(-4.0..4.0));
                    }
                }
                Sample::new(format!("K{i:02}"), 2000 + i, m, rng.gen_range(80.0..220.0))
                    .unwrap()
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.yldt");
        save_samples(&samples, "best10", &names, &path).unwrap();
        let cache = load_samples(&path).unwrap();
        assert_eq!(cache.feature_set, "best10");
        assert_eq!(cache.feature_names, names);
        assert_eq!(cache.samples, samples);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'Z';
        assert!(samples_from_bytes(&bytes).is_err());
    }
}
