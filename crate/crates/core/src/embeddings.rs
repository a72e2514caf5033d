//! Embedding spaces: `.vec` text I/O, normalization, gold dictionaries and
//! synthetic benchmark pairs with a planted correspondence.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, random_orthogonal, random_rotation, LinearMap, Mat, Vector};
use crate::transform::{CpdMode, SimilarityTransform};

/// Vocabulary in frequency order paired with one embedding row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Mat,
}

impl EmbeddingSpace {
    pub fn new(vocab: Vec<String>, matrix: Mat) -> Result<Self> {
        if vocab.is_empty() || matrix.ncols() == 0 {
            return Err(Error::Contract("embedding space must be non-empty".into()));
        }
        if vocab.len() != matrix.nrows() {
            return Err(Error::Contract(format!(
                "{} tokens for {} embedding rows",
                vocab.len(),
                matrix.nrows()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding matrix".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, token) in vocab.iter().enumerate() {
            if index.insert(token.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate token {token:?}")));
            }
        }
        Ok(EmbeddingSpace { vocab, index, matrix })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat {
        self.matrix
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Same vocabulary with a replacement matrix of the same row count.
    pub fn with_matrix(&self, matrix: Mat) -> Result<Self> {
        EmbeddingSpace::new(self.vocab.clone(), matrix)
    }

    /// Keeps the `n` most frequent rows.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        EmbeddingSpace::new(
            self.vocab[..n].to_vec(),
            self.matrix.rows(0, n).into_owned(),
        )
    }
}

/// A loaded `.vec` file plus the number of duplicate-token rows that were
/// dropped (first occurrence wins).
#[derive(Debug, Clone)]
pub struct LoadedVec {
    pub space: EmbeddingSpace,
    pub duplicates: usize,
}

/// Reads at most `max_vocab` distinct tokens from a `.vec` text file, in file
/// order. The header `N D` fixes the row count and the dimension.
pub fn load_vec(path: impl AsRef<Path>, max_vocab: usize) -> Result<LoadedVec> {
    let path = path.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if max_vocab == 0 {
        return Err(Error::Config("max_vocab must be at least 1".into()));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_count = |s: &str| s.parse::<usize>().ok();
    let (rows, dim) = match fields.as_slice() {
        [n, d] => match (parse_count(n), parse_count(d)) {
            (Some(n), Some(d)) if d > 0 => (n, d),
            _ => return Err(parse_err(1, format!("malformed header {header:?}"))),
        },
        _ => return Err(parse_err(1, format!("malformed header {header:?}"))),
    };

    let capacity = rows.min(max_vocab);
    let mut vocab: Vec<String> = Vec::with_capacity(capacity);
    let mut seen: HashMap<String, ()> = HashMap::with_capacity(capacity);
    let mut values: Vec<f64> = Vec::with_capacity(capacity * dim);
    let mut duplicates = 0;
    let mut read = 0;

    while read < rows && vocab.len() < max_vocab {
        let line_no = read + 2;
        let line = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(parse_err(
                    line_no,
                    format!("header declares {rows} rows but the file ends after {read}"),
                ))
            }
        };
        read += 1;
        let mut fields = line.split_whitespace();
        let token = fields
            .next()
            .ok_or_else(|| parse_err(line_no, "empty line".into()))?;
        if token.chars().any(char::is_whitespace) {
            return Err(parse_err(line_no, format!("token {token:?} contains whitespace")));
        }
        let start = values.len();
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line_no, format!("malformed float {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        let found = values.len() - start;
        if found != dim {
            return Err(parse_err(
                line_no,
                format!("expected {dim} values after token {token:?}, found {found}"),
            ));
        }
        if seen.insert(token.to_string(), ()).is_some() {
            duplicates += 1;
            values.truncate(start);
            continue;
        }
        vocab.push(token.to_string());
    }
    if vocab.is_empty() {
        return Err(parse_err(1, "file contains no embeddings".into()));
    }
    if duplicates > 0 {
        log::warn!("{}: skipped {duplicates} duplicate tokens", path.display());
    }
    let matrix = Mat::from_row_slice(vocab.len(), dim, &values);
    Ok(LoadedVec {
        space: EmbeddingSpace::new(vocab, matrix)?,
        duplicates,
    })
}

/// Writes a `.vec` file. Values are printed with `precision` decimal places;
/// from 17 upwards the shortest exactly round-tripping representation is
/// used instead.
pub fn save_vec(space: &EmbeddingSpace, path: impl AsRef<Path>, precision: usize) -> Result<()> {
    write_vec_rows(space.vocab(), space.matrix(), path, precision)
}

pub(crate) fn write_vec_rows(
    labels: &[String],
    matrix: &Mat,
    path: impl AsRef<Path>,
    precision: usize,
) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Contract("refusing to write an empty vocabulary".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {}", matrix.nrows(), matrix.ncols())?;
    for (token, row) in labels.iter().zip(matrix.row_iter()) {
        out.write_all(token.as_bytes())?;
        for v in row.iter() {
            if precision >= 17 {
                write!(out, " {v}")?;
            } else {
                write!(out, " {v:.precision$}")?;
            }
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    /// Scale rows back to unit length after centering.
    pub renormalize: bool,
}

/// Writes a linear map as a `.vec` file with rows labelled `row0`, `row1`, ...
pub fn save_map(map: &LinearMap, path: impl AsRef<Path>, precision: usize) -> Result<()> {
    let labels: Vec<String> = (0..map.dim()).map(|i| format!("row{i}")).collect();
    write_vec_rows(&labels, map.matrix(), path, precision)
}

/// Reads a square linear map written by [`save_map`]; labels are ignored.
pub fn load_map(path: impl AsRef<Path>) -> Result<LinearMap> {
    let m = load_vec(path.as_ref(), usize::MAX)?.space.into_matrix();
    if m.nrows() != m.ncols() {
        return Err(Error::Contract(format!(
            "{}: a linear map must be square, got {}x{}",
            path.as_ref().display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(LinearMap(m))
}

/// Unit-length rows, then zero-mean columns.
pub fn normalize(space: &EmbeddingSpace, options: NormalizeOptions) -> Result<EmbeddingSpace> {
    let mut m = space.matrix().clone();
    if let Some(i) = normalize_rows(&mut m) {
        return Err(Error::ZeroNorm {
            token: space.vocab()[i].clone(),
        });
    }
    center_columns(&mut m);
    if options.renormalize {
        if let Some(i) = normalize_rows(&mut m) {
            return Err(Error::ZeroNorm {
                token: space.vocab()[i].clone(),
            });
        }
    }
    space.with_matrix(m)
}

/// Scales rows to unit L2 norm in place; returns the first zero row, if any.
pub fn normalize_rows(m: &mut Mat) -> Option<usize> {
    for (i, mut row) in m.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm == 0.0 {
            return Some(i);
        }
        row /= norm;
    }
    None
}

pub fn center_columns(m: &mut Mat) {
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
}

/// Bilingual gold dictionary; a source token may have several translations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldDictionary {
    sources: Vec<String>,
    targets: HashMap<String, Vec<String>>,
}

impl GoldDictionary {
    pub fn from_pairs<I, S, T>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut dict = GoldDictionary::default();
        for (s, t) in pairs {
            dict.insert(s.into(), t.into());
        }
        dict
    }

    pub fn insert(&mut self, source: String, target: String) {
        match self.targets.get_mut(&source) {
            Some(list) => {
                if !list.contains(&target) {
                    list.push(target);
                }
            }
            None => {
                self.sources.push(source.clone());
                self.targets.insert(source, vec![target]);
            }
        }
    }

    /// Source tokens in first-appearance order.
    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn translations(&self, source: &str) -> &[String] {
        self.targets.get(source).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut dict = GoldDictionary::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            match (fields.next(), fields.next(), fields.next()) {
                (Some(s), Some(t), None) => dict.insert(s.to_string(), t.to_string()),
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("expected two tokens, got {line:?}"),
                    })
                }
            }
        }
        Ok(dict)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for s in &self.sources {
            for t in &self.targets[s] {
                writeln!(out, "{s}\t{t}")?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Orthogonal,
    Similarity,
    Affine,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(SynthKind::Orthogonal),
            "similarity" => Ok(SynthKind::Similarity),
            "affine" => Ok(SynthKind::Affine),
            other => Err(Error::Config(format!(
                "unknown synthetic kind {other:?} (expected orthogonal, similarity or affine)"
            ))),
        }
    }
}

/// The map that produced the target rows from the source rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Planted {
    /// `y = x Q`.
    Orthogonal(LinearMap),
    /// `y = s L x + t` in column form.
    Transform(SimilarityTransform),
}

impl Planted {
    pub fn apply(&self, x: &Mat) -> Mat {
        match self {
            Planted::Orthogonal(q) => q.apply(x),
            Planted::Transform(t) => t.apply(x),
        }
    }

    pub fn record(&self) -> PlantedRecord {
        match self {
            Planted::Orthogonal(q) => PlantedRecord {
                kind: SynthKind::Orthogonal,
                r: q.matrix().transpose().as_slice().to_vec(),
                s: 1.0,
                t: vec![0.0; q.dim()],
            },
            Planted::Transform(t) => PlantedRecord {
                kind: match t.mode {
                    CpdMode::Similarity => SynthKind::Similarity,
                    CpdMode::Affine => SynthKind::Affine,
                },
                r: t.linear.transpose().as_slice().to_vec(),
                s: t.scale,
                t: t.translation.as_slice().to_vec(),
            },
        }
    }
}

/// JSON form of a planted map. For `orthogonal` rows map as `y = x R`; for
/// the other kinds columns map as `y = s R x + t`. `R` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRecord {
    pub kind: SynthKind,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub s: f64,
    pub t: Vec<f64>,
}

impl PlantedRecord {
    pub fn planted(&self) -> Result<Planted> {
        let d = self.t.len();
        if self.r.len() != d * d {
            return Err(Error::Contract(format!(
                "planted record has {} linear entries for dimension {d}",
                self.r.len()
            )));
        }
        let linear = Mat::from_row_slice(d, d, &self.r);
        let mode = match self.kind {
            SynthKind::Orthogonal => return Ok(Planted::Orthogonal(LinearMap(linear))),
            SynthKind::Similarity => CpdMode::Similarity,
            SynthKind::Affine => CpdMode::Affine,
        };
        Ok(Planted::Transform(SimilarityTransform {
            mode,
            linear,
            scale: self.s,
            translation: Vector::from_column_slice(&self.t),
        }))
    }
}

/// Synthetic source/target pair with known correspondence.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub source: EmbeddingSpace,
    pub target: EmbeddingSpace,
    /// `gold[i]` is the target row of source row `i`.
    pub gold: Vec<usize>,
    pub planted: Planted,
    pub noise_sigma: f64,
}

impl SynthPair {
    pub fn gold_dictionary(&self) -> GoldDictionary {
        GoldDictionary::from_pairs(
            self.gold
                .iter()
                .enumerate()
                .map(|(i, &j)| (self.source.vocab()[i].clone(), self.target.vocab()[j].clone())),
        )
    }
}

/// Clustered source cloud, planted map, additive isotropic noise and a
/// seeded row shuffle of the target.
///
/// Each cluster has a random mean and an anisotropic covariance with a
/// decaying spectrum, and cluster sizes are uneven, so the cloud has no
/// rotational symmetry to hide the planted map.
pub fn synth_pair(
    n: usize,
    d: usize,
    noise_sigma: f64,
    seed: u64,
    kind: SynthKind,
    clusters: usize,
) -> Result<SynthPair> {
    if d < 2 || n < d {
        return Err(Error::Config(format!(
            "synthetic pair needs n >= d >= 2, got n={n}, d={d}"
        )));
    }
    if clusters == 0 {
        return Err(Error::Config("at least one cluster is required".into()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Config(format!("noise must be non-negative, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let planted = match kind {
        SynthKind::Orthogonal => Planted::Orthogonal(LinearMap(random_orthogonal(d, &mut rng))),
        SynthKind::Similarity => Planted::Transform(SimilarityTransform {
            mode: CpdMode::Similarity,
            linear: random_rotation(d, &mut rng),
            scale: rng.random_range(0.5..2.0),
            translation: gaussian_matrix(d, 1, &mut rng).column(0) * 0.5,
        }),
        SynthKind::Affine => {
            let left = random_rotation(d, &mut rng);
            let right = random_rotation(d, &mut rng);
            let spectrum = Vector::from_fn(d, |_, _| rng.random_range(0.5..1.5));
            Planted::Transform(SimilarityTransform {
                mode: CpdMode::Affine,
                linear: left * Mat::from_diagonal(&spectrum) * right,
                scale: 1.0,
                translation: gaussian_matrix(d, 1, &mut rng).column(0) * 0.5,
            })
        }
    };

    let mean_scale = 1.0 / (d as f64).sqrt();
    let means = gaussian_matrix(clusters, d, &mut rng) * mean_scale;
    let spreads: Vec<Mat> = (0..clusters)
        .map(|_| {
            let basis = random_orthogonal(d, &mut rng);
            let decay = Vector::from_fn(d, |j, _| 0.6 / ((j + 1) as f64).sqrt());
            basis * Mat::from_diagonal(&decay) * mean_scale
        })
        .collect();
    let weights: Vec<f64> = (0..clusters).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = weights.iter().sum();

    let mut source = Mat::zeros(n, d);
    for i in 0..n {
        let mut pick = rng.random_range(0.0..total);
        let mut c = 0;
        while c + 1 < clusters && pick >= weights[c] {
            pick -= weights[c];
            c += 1;
        }
        let z = Vector::from_fn(d, |_, _| rng.sample(StandardNormal));
        let point = means.row(c).transpose() + &spreads[c] * z;
        source.set_row(i, &point.transpose());
    }

    let mut mapped = planted.apply(&source);
    if noise_sigma > 0.0 {
        mapped += gaussian_matrix(n, d, &mut rng) * noise_sigma;
    }
    let mut gold: Vec<usize> = (0..n).collect();
    gold.shuffle(&mut rng);
    let mut target = Mat::zeros(n, d);
    for (i, &j) in gold.iter().enumerate() {
        target.set_row(j, &mapped.row(i));
    }

    let width = n.to_string().len();
    let source_vocab = (0..n).map(|i| format!("s{i:0width$}")).collect();
    let target_vocab = (0..n).map(|j| format!("t{j:0width$}")).collect();
    Ok(SynthPair {
        source: EmbeddingSpace::new(source_vocab, source)?,
        target: EmbeddingSpace::new(target_vocab, target)?,
        gold,
        planted,
        noise_sigma,
    })
}
