//! Cosine and CSLS retrieval, bidirectional dictionary induction, the
//! unsupervised selection criterion and gold-dictionary precision.
//!
//! CSLS between a row `a` of one set and a row `b` of the other is
//! `2 cos(a, b) − r_A(a) − r_B(b)`, where `r_A(a)` is the mean cosine of `a`
//! to its `k` nearest rows of the other set (and symmetrically for `r_B`).
//!
//! All scans run over row blocks in ascending order; ties are broken towards
//! the lower index, so results do not depend on the block size.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingSpace, GoldDictionary};
use crate::error::{Error, Result};
use crate::numerics::{LinearMap, Mat};

const ROW_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CslsParams {
    /// Neighborhood size of the penalty terms.
    pub k: usize,
    /// Only this many most frequent rows of each side take part in
    /// induction and model selection.
    pub candidate_limit: usize,
}

impl Default for CslsParams {
    fn default() -> Self {
        CslsParams {
            k: 10,
            candidate_limit: 25_000,
        }
    }
}

impl CslsParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("CSLS k must be at least 1".into()));
        }
        if self.candidate_limit == 0 {
            return Err(Error::Config("candidate limit must be at least 1".into()));
        }
        Ok(())
    }
}

/// Copy of `m` with unit rows; zero rows stay zero.
pub fn unit_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// Bounded list ordered by descending value, then ascending index.
#[derive(Debug, Clone)]
struct TopK {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    /// Candidates must arrive in ascending index order.
    #[inline]
    fn push(&mut self, value: f64, index: usize) {
        if self.items.len() == self.k {
            if value <= self.items[self.k - 1].0 {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&(v, _)| v >= value);
        self.items.insert(pos, (value, index));
    }

    fn mean(&self) -> f64 {
        self.items.iter().map(|&(v, _)| v).sum::<f64>() / self.items.len() as f64
    }

    fn into_pairs(self) -> Vec<(usize, f64)> {
        self.items.into_iter().map(|(v, i)| (i, v)).collect()
    }
}

fn check_dims(a: &Mat, b: &Mat) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(Error::Contract(format!(
            "dimension mismatch: {} vs {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

fn blocks(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n)
        .step_by(ROW_BLOCK)
        .map(move |start| (start, ROW_BLOCK.min(n - start)))
}

/// Exact top-`k` targets by cosine for every query row.
pub fn cosine_topk(queries: &Mat, targets: &Mat, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    check_dims(queries, targets)?;
    if k == 0 || k > targets.nrows() {
        return Err(Error::Config(format!(
            "k = {k} must lie in [1, {}]",
            targets.nrows()
        )));
    }
    let q = unit_rows(queries);
    let t_t = unit_rows(targets).transpose();
    let mut out = Vec::with_capacity(q.nrows());
    for (start, len) in blocks(q.nrows()) {
        let sims = q.rows(start, len) * &t_t;
        for r in 0..len {
            let mut top = TopK::new(k);
            for (j, &v) in sims.row(r).iter().enumerate() {
                top.push(v, j);
            }
            out.push(top.into_pairs());
        }
    }
    Ok(out)
}

/// CSLS between the rows of two sets, with cached penalty terms.
#[derive(Debug, Clone)]
pub struct Csls {
    a: Mat,
    b_t: Mat,
    r_a: Vec<f64>,
    r_b: Vec<f64>,
}

impl Csls {
    pub fn new(a: &Mat, b: &Mat, k: usize) -> Result<Self> {
        check_dims(a, b)?;
        if a.nrows() == 0 || b.nrows() == 0 {
            return Err(Error::Contract("CSLS needs non-empty sets".into()));
        }
        if k == 0 || k > b.nrows() || k > a.nrows() {
            return Err(Error::Config(format!(
                "CSLS k = {k} exceeds the set sizes ({} and {})",
                a.nrows(),
                b.nrows()
            )));
        }
        let a = unit_rows(a);
        let b_t = unit_rows(b).transpose();
        let m = b_t.ncols();
        let mut r_a = Vec::with_capacity(a.nrows());
        let mut col_tops = vec![TopK::new(k); m];
        for (start, len) in blocks(a.nrows()) {
            let sims = a.rows(start, len) * &b_t;
            for r in 0..len {
                let mut top = TopK::new(k);
                for j in 0..m {
                    let v = sims[(r, j)];
                    top.push(v, j);
                    col_tops[j].push(v, start + r);
                }
                r_a.push(top.mean());
            }
        }
        let r_b = col_tops.iter().map(TopK::mean).collect();
        Ok(Csls { a, b_t, r_a, r_b })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.b_t.ncols()
    }

    /// Mean top-k cosine of each row of the first set.
    pub fn penalty_a(&self) -> &[f64] {
        &self.r_a
    }

    /// Mean top-k cosine of each row of the second set.
    pub fn penalty_b(&self) -> &[f64] {
        &self.r_b
    }

    /// Cosines of rows `start..start+len` against every row of the second set.
    pub fn cosine_block(&self, start: usize, len: usize) -> Mat {
        self.a.rows(start, len) * &self.b_t
    }

    /// CSLS scores of rows `start..start+len`.
    pub fn score_block(&self, start: usize, len: usize) -> Mat {
        let mut block = self.cosine_block(start, len);
        for j in 0..block.ncols() {
            let rb = self.r_b[j];
            for r in 0..len {
                block[(r, j)] = 2.0 * block[(r, j)] - self.r_a[start + r] - rb;
            }
        }
        block
    }

    /// Full score matrix; intended for small sets.
    pub fn scores(&self) -> Mat {
        self.score_block(0, self.rows())
    }

    /// CSLS argmax of every row of the first set.
    pub fn retrieve(&self) -> Vec<usize> {
        self.topk(1)
            .into_iter()
            .map(|top| top[0].0)
            .collect()
    }

    /// Top-`k` by CSLS for every row of the first set.
    pub fn topk(&self, k: usize) -> Vec<Vec<(usize, f64)>> {
        let all: Vec<usize> = (0..self.rows()).collect();
        self.topk_rows(&all, k)
    }

    /// Top-`k` by CSLS for selected rows of the first set.
    pub fn topk_rows(&self, rows: &[usize], k: usize) -> Vec<Vec<(usize, f64)>> {
        let k = k.min(self.cols()).max(1);
        rows.iter()
            .map(|&i| {
                let block = self.score_block(i, 1);
                let mut top = TopK::new(k);
                for (j, &v) in block.row(0).iter().enumerate() {
                    top.push(v, j);
                }
                top.into_pairs()
            })
            .collect()
    }
}

/// Source and target rows together with their images under the forward
/// (`fx`, in the target frame) and backward (`gy`, in the source frame) maps.
#[derive(Debug, Clone, Copy)]
pub struct Views<'a> {
    pub x: &'a Mat,
    pub y: &'a Mat,
    pub fx: &'a Mat,
    pub gy: &'a Mat,
}

impl<'a> Views<'a> {
    pub fn new(x: &'a Mat, y: &'a Mat, fx: &'a Mat, gy: &'a Mat) -> Result<Self> {
        if fx.nrows() != x.nrows() || gy.nrows() != y.nrows() {
            return Err(Error::Contract("mapped views must keep the row counts".into()));
        }
        check_dims(fx, y)?;
        check_dims(x, gy)?;
        Ok(Views { x, y, fx, gy })
    }
}

/// Mapped images of `x` and `y` under linear maps.
pub fn map_views(x: &Mat, y: &Mat, forward: &LinearMap, backward: &LinearMap) -> (Mat, Mat) {
    (forward.apply(x), backward.apply(y))
}

/// `σₙₘ = CSLS(f(xₙ), yₘ) + CSLS(xₙ, g(yₘ))` over the candidate-limited sets.
#[derive(Debug, Clone)]
pub struct BidirectionalCsls {
    forward: Csls,
    backward: Csls,
}

impl BidirectionalCsls {
    pub fn new(views: &Views<'_>, params: &CslsParams) -> Result<Self> {
        params.validate()?;
        let n = views.x.nrows().min(params.candidate_limit);
        let m = views.y.nrows().min(params.candidate_limit);
        let forward = Csls::new(
            &views.fx.rows(0, n).into_owned(),
            &views.y.rows(0, m).into_owned(),
            params.k,
        )?;
        let backward = Csls::new(
            &views.x.rows(0, n).into_owned(),
            &views.gy.rows(0, m).into_owned(),
            params.k,
        )?;
        Ok(BidirectionalCsls { forward, backward })
    }

    pub fn rows(&self) -> usize {
        self.forward.rows()
    }

    pub fn cols(&self) -> usize {
        self.forward.cols()
    }

    pub fn forward(&self) -> &Csls {
        &self.forward
    }

    pub fn backward(&self) -> &Csls {
        &self.backward
    }

    /// Full σ matrix; intended for small sets.
    pub fn scores(&self) -> Mat {
        self.forward.scores() + self.backward.scores()
    }

    /// Single pass over σ collecting row and column maxima.
    pub fn scan(&self) -> SigmaScan {
        let (n, m) = (self.rows(), self.cols());
        let mut rows = Vec::with_capacity(n);
        let mut cols = vec![
            ColumnBest {
                row: usize::MAX,
                sigma: f64::NEG_INFINITY
            };
            m
        ];
        for (start, len) in blocks(n) {
            let cos_f = self.forward.cosine_block(start, len);
            let cos_b = self.backward.cosine_block(start, len);
            for r in 0..len {
                let i = start + r;
                let base = -self.forward.r_a[i] - self.backward.r_a[i];
                let mut best = RowBest {
                    col: 0,
                    sigma: f64::NEG_INFINITY,
                    cos_forward: 0.0,
                    cos_backward: 0.0,
                };
                for j in 0..m {
                    let (cf, cb) = (cos_f[(r, j)], cos_b[(r, j)]);
                    let sigma = 2.0 * cf - self.forward.r_b[j] + 2.0 * cb - self.backward.r_b[j]
                        + base;
                    if sigma > best.sigma {
                        best = RowBest {
                            col: j,
                            sigma,
                            cos_forward: cf,
                            cos_backward: cb,
                        };
                    }
                    if sigma > cols[j].sigma {
                        cols[j] = ColumnBest { row: i, sigma };
                    }
                }
                rows.push(best);
            }
        }
        SigmaScan { rows, cols }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowBest {
    pub col: usize,
    pub sigma: f64,
    pub cos_forward: f64,
    pub cos_backward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnBest {
    pub row: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct SigmaScan {
    pub rows: Vec<RowBest>,
    pub cols: Vec<ColumnBest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictPair {
    pub src: usize,
    pub tgt: usize,
    pub score: f64,
}

/// Induced translation pairs, sorted by descending score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedDictionary {
    pairs: Vec<DictPair>,
}

impl SeedDictionary {
    /// Sorts by descending score (ties by source, then target index) and
    /// drops repeated `(src, tgt)` pairs, keeping the best-scored one.
    pub fn from_pairs(mut pairs: Vec<DictPair>) -> Self {
        pairs.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.src.cmp(&b.src))
                .then(a.tgt.cmp(&b.tgt))
        });
        let mut seen = std::collections::HashSet::new();
        pairs.retain(|p| seen.insert((p.src, p.tgt)));
        SeedDictionary { pairs }
    }

    pub fn pairs(&self) -> &[DictPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.src).collect()
    }

    pub fn targets(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.tgt).collect()
    }

    /// Fraction of pairs that agree with a known permutation.
    pub fn accuracy_against(&self, gold: &[usize]) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        let hits = self
            .pairs
            .iter()
            .filter(|p| gold.get(p.src) == Some(&p.tgt))
            .count();
        hits as f64 / self.pairs.len() as f64
    }

    /// Writes `source\ttarget\tscore` lines.
    pub fn write_tsv(
        &self,
        source_vocab: &[String],
        target_vocab: &[String],
        path: impl AsRef<Path>,
    ) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for p in &self.pairs {
            let (Some(s), Some(t)) = (source_vocab.get(p.src), target_vocab.get(p.tgt)) else {
                return Err(Error::Contract(format!(
                    "dictionary pair ({}, {}) is outside the vocabularies",
                    p.src, p.tgt
                )));
            };
            writeln!(out, "{s}\t{t}\t{}", p.score)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Induced dictionary plus a flag raised when no mutual pair was found.
#[derive(Debug, Clone)]
pub struct Induction {
    pub dictionary: SeedDictionary,
    pub empty: bool,
}

/// Mutual nearest neighbours under the bidirectional σ, restricted to the
/// `candidate_limit` most frequent rows of each side.
pub fn induce_dictionary(views: &Views<'_>, params: &CslsParams) -> Result<Induction> {
    let sigma = BidirectionalCsls::new(views, params)?;
    Ok(induce_from(&sigma))
}

pub fn induce_from(sigma: &BidirectionalCsls) -> Induction {
    let scan = sigma.scan();
    let pairs: Vec<DictPair> = scan
        .rows
        .iter()
        .enumerate()
        .filter(|(n, best)| scan.cols[best.col].row == *n)
        .map(|(n, best)| DictPair {
            src: n,
            tgt: best.col,
            score: best.sigma,
        })
        .collect();
    let dictionary = SeedDictionary::from_pairs(pairs);
    let empty = dictionary.is_empty();
    if empty {
        log::warn!("dictionary induction produced no mutual nearest neighbours");
    }
    Induction { dictionary, empty }
}

/// Mean over the candidate source rows of `½[cos(f(xₙ), yₘ) + cos(xₙ, g(yₘ))]`
/// where `m` is the σ-argmax translation of `n`.
pub fn selection_criterion(views: &Views<'_>, params: &CslsParams) -> Result<f64> {
    let sigma = BidirectionalCsls::new(views, params)?;
    Ok(criterion_from(&sigma))
}

pub fn criterion_from(sigma: &BidirectionalCsls) -> f64 {
    let scan = sigma.scan();
    let total: f64 = scan
        .rows
        .iter()
        .map(|b| 0.5 * (b.cos_forward + b.cos_backward))
        .sum();
    total / scan.rows.len() as f64
}

/// Both quantities from a single σ pass.
pub fn induce_and_score(views: &Views<'_>, params: &CslsParams) -> Result<(Induction, f64)> {
    let sigma = BidirectionalCsls::new(views, params)?;
    Ok((induce_from(&sigma), criterion_from(&sigma)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAtK {
    pub k: usize,
    pub precision: f64,
    pub hits: usize,
    /// Gold source tokens considered (including out-of-vocabulary ones).
    pub total: usize,
    /// Gold source tokens with no prediction; counted as misses.
    pub oov: usize,
}

/// Fraction of gold source tokens whose top-`k` predictions contain a gold
/// translation.
pub fn evaluate_p_at_k(
    predictions: &HashMap<String, Vec<String>>,
    gold: &GoldDictionary,
    k: usize,
) -> Result<PrecisionAtK> {
    if gold.is_empty() {
        return Err(Error::Contract("gold dictionary is empty".into()));
    }
    if k == 0 {
        return Err(Error::Config("precision@k needs k >= 1".into()));
    }
    let mut hits = 0;
    let mut oov = 0;
    for source in gold.sources() {
        let Some(ranked) = predictions.get(source) else {
            oov += 1;
            continue;
        };
        let expected = gold.translations(source);
        if ranked.iter().take(k).any(|t| expected.contains(t)) {
            hits += 1;
        }
    }
    Ok(PrecisionAtK {
        k,
        precision: hits as f64 / gold.len() as f64,
        hits,
        total: gold.len(),
        oov,
    })
}

/// Ranked CSLS translations (over the full vocabularies) for every gold
/// source token present in `source`.
pub fn predict_translations(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    gold: &GoldDictionary,
    csls_k: usize,
    top: usize,
) -> Result<HashMap<String, Vec<String>>> {
    let csls = Csls::new(source.matrix(), target.matrix(), csls_k)?;
    let (tokens, rows): (Vec<&String>, Vec<usize>) = gold
        .sources()
        .iter()
        .filter_map(|s| source.index_of(s).map(|i| (s, i)))
        .unzip();
    let ranked = csls.topk_rows(&rows, top);
    Ok(tokens
        .into_iter()
        .zip(ranked)
        .map(|(s, list)| {
            (
                s.clone(),
                list.into_iter()
                    .map(|(j, _)| target.vocab()[j].clone())
                    .collect(),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(data: &[&[f64]]) -> Mat {
        let cols = data[0].len();
        Mat::from_row_iterator(data.len(), cols, data.iter().flat_map(|r| r.iter().copied()))
    }

    #[test]
    fn cosine_topk_simple() {
        let q = rows(&[&[1.0, 0.0]]);
        let t = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let top = cosine_topk(&q, &t, 1).unwrap();
        assert_eq!(top[0][0].0, 0);
        assert!((top[0][0].1 - 1.0).abs() < 1e-15);
        let top = cosine_topk(&rows(&[&[0.0, 1.0]]), &rows(&[&[1.0, 0.0]]), 1).unwrap();
        assert_eq!(top[0][0].1, 0.0);
    }

    #[test]
    fn cosine_topk_ties_prefer_lower_index() {
        let q = rows(&[&[1.0, 0.0]]);
        let t = rows(&[&[0.0, 1.0], &[2.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]]);
        let top = cosine_topk(&q, &t, 3).unwrap();
        let idx: Vec<usize> = top[0].iter().map(|p| p.0).collect();
        assert_eq!(idx, vec![1, 2, 3]);
    }

    #[test]
    fn cosine_topk_rejects_large_k() {
        let q = rows(&[&[1.0, 0.0]]);
        assert!(matches!(cosine_topk(&q, &q, 2), Err(Error::Config(_))));
    }

    #[test]
    fn csls_singleton_is_zero() {
        let a = rows(&[&[0.6, 0.8]]);
        let csls = Csls::new(&a, &a, 1).unwrap();
        assert!(csls.scores()[(0, 0)].abs() < 1e-15);
        assert!(matches!(Csls::new(&a, &a, 2), Err(Error::Config(_))));
    }

    #[test]
    fn csls_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = gaussian_matrix(30, 5, &mut rng);
        let b = gaussian_matrix(40, 5, &mut rng);
        let base = Csls::new(&a, &b, 4).unwrap().retrieve();
        let scaled = Csls::new(&(&a * 3.5), &(&b * 0.2), 4).unwrap().retrieve();
        assert_eq!(base, scaled);
    }

    #[test]
    fn identity_maps_give_identity_dictionary() {
        let x = gaussian_matrix(25, 6, &mut ChaCha8Rng::seed_from_u64(1));
        let views = Views::new(&x, &x, &x, &x).unwrap();
        let params = CslsParams {
            k: 3,
            candidate_limit: 20,
        };
        let induced = induce_dictionary(&views, &params).unwrap();
        assert!(!induced.empty);
        assert_eq!(induced.dictionary.len(), 20);
        assert!(induced.dictionary.pairs().iter().all(|p| p.src == p.tgt));
        let c = selection_criterion(&views, &params).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_diagonal_is_row_maximum_for_identical_sets() {
        let x = gaussian_matrix(12, 4, &mut ChaCha8Rng::seed_from_u64(2));
        let views = Views::new(&x, &x, &x, &x).unwrap();
        let sigma = BidirectionalCsls::new(
            &views,
            &CslsParams {
                k: 2,
                candidate_limit: 100,
            },
        )
        .unwrap()
        .scores();
        for n in 0..12 {
            for m in 0..12 {
                assert!(sigma[(n, n)] >= sigma[(n, m)]);
            }
        }
    }

    #[test]
    fn dictionary_sorting_and_dedup() {
        let dict = SeedDictionary::from_pairs(vec![
            DictPair { src: 1, tgt: 2, score: 0.5 },
            DictPair { src: 0, tgt: 0, score: 0.9 },
            DictPair { src: 1, tgt: 2, score: 0.1 },
            DictPair { src: 3, tgt: 1, score: 0.5 },
        ]);
        let order: Vec<(usize, usize)> = dict.pairs().iter().map(|p| (p.src, p.tgt)).collect();
        assert_eq!(order, vec![(0, 0), (1, 2), (3, 1)]);
        assert!((dict.accuracy_against(&[0, 1, 2, 3]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn precision_examples() {
        let gold = GoldDictionary::from_pairs((0..10).map(|i| (format!("s{i}"), format!("t{i}"))));
        let perfect: HashMap<String, Vec<String>> = (0..10)
            .map(|i| (format!("s{i}"), vec![format!("t{i}")]))
            .collect();
        assert_eq!(evaluate_p_at_k(&perfect, &gold, 1).unwrap().precision, 1.0);

        let half: HashMap<String, Vec<String>> = (0..10)
            .map(|i| {
                let guess = if i % 2 == 0 { format!("t{i}") } else { "nope".into() };
                (format!("s{i}"), vec![guess, format!("t{i}")])
            })
            .collect();
        let p1 = evaluate_p_at_k(&half, &gold, 1).unwrap();
        let p2 = evaluate_p_at_k(&half, &gold, 2).unwrap();
        assert_eq!(p1.precision, 0.5);
        assert_eq!(p2.precision, 1.0);
    }

    #[test]
    fn precision_counts_oov() {
        let gold = GoldDictionary::from_pairs([("a", "x"), ("b", "y"), ("zz", "w")]);
        let preds: HashMap<String, Vec<String>> =
            [("a".to_string(), vec!["x".to_string()]), ("b".to_string(), vec!["q".to_string()])]
                .into_iter()
                .collect();
        let p = evaluate_p_at_k(&preds, &gold, 1).unwrap();
        assert_eq!(p.oov, 1);
        assert_eq!(p.hits, 1);
        assert!((p.precision - 1.0 / 3.0).abs() < 1e-15);
        assert!(evaluate_p_at_k(&preds, &GoldDictionary::default(), 1).is_err());
    }

    #[test]
    fn tsv_output() {
        let dir = tempfile::tempdir().unwrap();
        let dict = SeedDictionary::from_pairs(vec![
            DictPair { src: 0, tgt: 1, score: 0.25 },
            DictPair { src: 1, tgt: 0, score: 0.75 },
        ]);
        let path = dir.path().join("d.tsv");
        let vocab = |p: &str| vec![format!("{p}0"), format!("{p}1")];
        dict.write_tsv(&vocab("s"), &vocab("t"), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "s1\tt0\t0.75\ns0\tt1\t0.25\n");
        assert!(dict.write_tsv(&vocab("s")[..1], &vocab("t"), &path).is_err());
    }
}
