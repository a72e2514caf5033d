//! Align → (Correspond → Transform)* → Generate.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{save_checkpoint, train_align, AlignConfig, AlignOutcome};
use crate::correspond::{correspond, procrustes_solve, RefineMode};
use crate::embeddings::{write_vec_rows, EmbeddingSpace, GoldDictionary};
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_p_at_k, induce_and_score, predict_translations, CslsParams, SeedDictionary, Views,
};
use crate::numerics::{LinearMap, Mat};
use crate::transform::{apply_transform_stage, CpdConfig, TransformRecord};

/// Where the first pair of maps comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initialization {
    Adversarial,
    Identity,
    /// Maps handed to [`run_actg`] by the caller.
    Provided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub init: Initialization,
    pub align: AlignConfig,
    pub csls: CslsParams,
    pub cpd: CpdConfig,
    pub max_refine_iters: usize,
    pub refine: RefineMode,
    pub correspond: bool,
    pub transform: bool,
    /// Re-run Correspond on the input spaces every iteration instead of on
    /// the previous iterate.
    pub correspond_from_original: bool,
    /// Wall-clock timings make reports non-reproducible, so they are opt-in.
    pub record_timings: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            init: Initialization::Adversarial,
            align: AlignConfig::default(),
            csls: CslsParams::default(),
            cpd: CpdConfig::default(),
            max_refine_iters: 10,
            refine: RefineMode::Symmetric,
            correspond: true,
            transform: true,
            correspond_from_original: false,
            record_timings: false,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_refine_iters == 0 {
            return Err(Error::Config("max_refine_iters must be at least 1".into()));
        }
        self.csls.validate()?;
        self.cpd.validate()?;
        if self.init == Initialization::Adversarial {
            self.align.validate()?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON form; ties artifacts to the run that made them.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

/// Stops once the criterion has been below the best-so-far for `patience`
/// consecutive observations. NaN never becomes the best.
#[derive(Debug, Clone)]
pub struct StopRule {
    patience: usize,
    best: Option<(usize, f64)>,
    below: usize,
}

impl StopRule {
    pub fn new(patience: usize) -> Self {
        StopRule {
            patience,
            best: None,
            below: 0,
        }
    }

    /// Records `criterion` for `iteration`; returns true when the loop should stop.
    pub fn observe(&mut self, iteration: usize, criterion: f64) -> bool {
        match self.best {
            Some((_, best)) if !(criterion > best) => self.below += 1,
            None if criterion.is_nan() => self.below += 1,
            _ => {
                self.best = Some((iteration, criterion));
                self.below = 0;
            }
        }
        self.below >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::new(2)
    }
}

#[derive(Debug, Clone)]
pub struct Driven<S> {
    pub best: S,
    pub best_iteration: usize,
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Runs `step` for iterations 1..=max_iters under [`StopRule`], keeping the
/// best-criterion state (iteration 0 is `initial`). `step` returning `None`
/// ends the loop with a warning.
pub fn drive<S: Clone>(
    initial: S,
    initial_criterion: f64,
    max_iters: usize,
    mut step: impl FnMut(usize, &S) -> Result<Option<(S, f64)>>,
) -> Result<Driven<S>> {
    let mut rule = StopRule::default();
    rule.observe(0, initial_criterion);
    let mut trace = vec![initial_criterion];
    let mut warnings = Vec::new();
    let mut best = initial.clone();
    let mut current = initial;
    for t in 1..=max_iters {
        let Some((next, criterion)) = step(t, &current).map_err(|e| Error::Iteration {
            iteration: t,
            source: Box::new(e),
        })?
        else {
            warnings.push(format!(
                "iteration {t}: induced dictionary is empty, keeping iterate {}",
                t - 1
            ));
            break;
        };
        trace.push(criterion);
        let stop = rule.observe(t, criterion);
        if rule.best().is_some_and(|(i, _)| i == t) {
            best = next.clone();
        }
        current = next;
        if stop {
            log::info!("criterion below best for two iterations, stopping after {t}");
            break;
        }
    }
    let best_iteration = rule.best().map_or(0, |(i, _)| i);
    Ok(Driven {
        best,
        best_iteration,
        trace,
        warnings,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub align: Option<f64>,
    pub correspond: Option<f64>,
    pub transform: Option<f64>,
    /// Dictionary induction and criterion, computed together.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `None` when the criterion was NaN.
    pub criterion: Option<f64>,
    /// Size of the dictionary induced from this iterate.
    pub dict_size: usize,
    pub timings: Option<StageTimings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub epoch: usize,
    pub criterion: Option<f64>,
    pub dis_accuracy: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignSummary {
    pub selected_epoch: usize,
    pub checkpoints: Vec<CheckpointSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    /// Entry 0 is the initial (Align) iterate.
    pub iterations: Vec<IterationRecord>,
    pub chosen_iteration: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_at_5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oov_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub align: Option<AlignSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
struct Iterate {
    x: Mat,
    y: Mat,
    fx: Mat,
    gy: Mat,
    dictionary: SeedDictionary,
    transforms: Option<(TransformRecord, TransformRecord)>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Source rows in the target frame.
    pub x_final: Mat,
    pub y_final: Mat,
    pub dictionary: SeedDictionary,
    /// Dictionary induced right after Align.
    pub initial_dictionary: SeedDictionary,
    /// Forward and backward CPD fits of the chosen iterate.
    pub transforms: Option<(TransformRecord, TransformRecord)>,
    pub align: Option<AlignOutcome>,
    pub report: PipelineReport,
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn score(it: &Iterate, csls: &CslsParams) -> Result<(SeedDictionary, f64)> {
    let views = Views::new(&it.x, &it.y, &it.fx, &it.gy)?;
    let (induction, criterion) = induce_and_score(&views, csls)?;
    Ok((induction.dictionary, criterion))
}

/// One Correspond + Transform pass seeded by `prev.dictionary`.
fn refine(
    prev: &Iterate,
    originals: (&Mat, &Mat),
    config: &PipelineConfig,
    timings: &mut StageTimings,
) -> Result<Iterate> {
    let (base_x, base_y) = if config.correspond_from_original {
        originals
    } else {
        (&prev.x, &prev.y)
    };
    let start = Instant::now();
    let (x_c, y_c) = if !config.correspond {
        (prev.fx.clone(), prev.y.clone())
    } else {
        match config.refine {
            RefineMode::Symmetric => {
                let out = correspond(base_x, base_y, &prev.dictionary)?;
                (out.x_c, out.y_c)
            }
            RefineMode::Procrustes => {
                let w = procrustes_solve(base_x, base_y, &prev.dictionary)?;
                (w.apply(base_x), base_y.clone())
            }
        }
    };
    if config.correspond {
        timings.correspond = Some(secs(start));
    }
    let start = Instant::now();
    let next = if config.transform {
        let stage = apply_transform_stage(&x_c, &y_c, &config.cpd)?;
        timings.transform = Some(secs(start));
        Iterate {
            transforms: Some((
                TransformRecord::from_fit(&stage.forward),
                TransformRecord::from_fit(&stage.backward),
            )),
            fx: stage.x_t,
            gy: stage.y_t,
            x: x_c,
            y: y_c,
            dictionary: SeedDictionary::default(),
        }
    } else {
        Iterate {
            fx: x_c.clone(),
            gy: y_c.clone(),
            x: x_c,
            y: y_c,
            dictionary: SeedDictionary::default(),
            transforms: None,
        }
    };
    Ok(next)
}

/// Runs the whole chain on normalized spaces of equal dimension. `provided`
/// supplies `(F, G)` when `config.init` is [`Initialization::Provided`].
pub fn run_actg(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    config: &PipelineConfig,
    provided: Option<(LinearMap, LinearMap)>,
) -> Result<PipelineOutput> {
    config.validate()?;
    if src.dim() != tgt.dim() {
        return Err(Error::Contract(format!(
            "source dimension {} differs from target dimension {}",
            src.dim(),
            tgt.dim()
        )));
    }
    let mut config = config.clone();
    config.align.seed = config.seed;
    let (x, y) = (src.matrix(), tgt.matrix());
    let d = src.dim();
    let mut warnings = Vec::new();

    let start = Instant::now();
    let mut align = None;
    let (f, g) = match (config.init, provided) {
        (Initialization::Provided, Some((f, g))) => {
            if f.dim() != d || g.dim() != d {
                return Err(Error::Contract(format!("provided maps must be {d}×{d}")));
            }
            (f, g)
        }
        (Initialization::Provided, None) => {
            return Err(Error::Config("provided initialization needs maps".into()))
        }
        (_, Some(_)) => {
            return Err(Error::Config(
                "maps were provided but the initialization is not 'provided'".into(),
            ))
        }
        (Initialization::Identity, None) => (LinearMap::identity(d), LinearMap::identity(d)),
        (Initialization::Adversarial, None) => {
            let out = train_align(x, y, &config.align, &config.csls)?;
            warnings.extend(out.warnings.iter().cloned());
            let maps = (out.forward.clone(), out.backward.clone());
            align = Some(out);
            maps
        }
    };
    let align_secs = secs(start);

    let start = Instant::now();
    let mut initial = Iterate {
        fx: f.apply(x),
        gy: g.apply(y),
        x: x.clone(),
        y: y.clone(),
        dictionary: SeedDictionary::default(),
        transforms: None,
    };
    let (dictionary, c0) = score(&initial, &config.csls)?;
    initial.dictionary = dictionary;
    let initial_dictionary = initial.dictionary.clone();
    let mut records = vec![IterationRecord {
        iteration: 0,
        criterion: c0.is_finite().then_some(c0),
        dict_size: initial.dictionary.len(),
        timings: config.record_timings.then(|| StageTimings {
            align: Some(align_secs),
            score: secs(start),
            ..StageTimings::default()
        }),
    }];
    log::info!(
        "initial criterion {c0:.5}, dictionary of {}",
        initial.dictionary.len()
    );

    let refining = config.correspond || config.transform;
    let max_iters = if refining { config.max_refine_iters } else { 0 };
    let driven = drive(initial, c0, max_iters, |t, prev| {
        if prev.dictionary.is_empty() {
            return Ok(None);
        }
        let mut timings = StageTimings::default();
        let mut next = refine(prev, (x, y), &config, &mut timings)?;
        let start = Instant::now();
        let (dictionary, criterion) = score(&next, &config.csls)?;
        timings.score = secs(start);
        next.dictionary = dictionary;
        log::info!(
            "iteration {t}: criterion {criterion:.5}, dictionary of {}",
            next.dictionary.len()
        );
        records.push(IterationRecord {
            iteration: t,
            criterion: criterion.is_finite().then_some(criterion),
            dict_size: next.dictionary.len(),
            timings: config.record_timings.then_some(timings),
        });
        Ok(Some((next, criterion)))
    })?;
    warnings.extend(driven.warnings);

    let best = driven.best;
    let report = PipelineReport {
        align: align.as_ref().map(|a| AlignSummary {
            selected_epoch: a.checkpoints[a.selected].epoch,
            checkpoints: a
                .checkpoints
                .iter()
                .map(|c| CheckpointSummary {
                    epoch: c.epoch,
                    criterion: c.criterion.is_finite().then_some(c.criterion),
                    dis_accuracy: [c.dis_accuracy.0, c.dis_accuracy.1],
                })
                .collect(),
        }),
        config,
        iterations: records,
        chosen_iteration: driven.best_iteration,
        p_at_1: None,
        p_at_5: None,
        oov_count: None,
        warnings,
    };
    Ok(PipelineOutput {
        x_final: best.fx,
        y_final: best.y,
        dictionary: best.dictionary,
        initial_dictionary,
        transforms: best.transforms,
        align,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub oov: usize,
}

/// P@1 and P@5 of CSLS retrieval from the mapped source rows over the whole
/// target vocabulary.
pub fn evaluate_output(
    out: &PipelineOutput,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    gold: &GoldDictionary,
) -> Result<Evaluation> {
    let mapped_src = src.with_matrix(out.x_final.clone())?;
    let mapped_tgt = tgt.with_matrix(out.y_final.clone())?;
    let k = out.report.config.csls.k.min(mapped_src.len()).min(mapped_tgt.len());
    let top = 5.min(mapped_tgt.len());
    let predictions = predict_translations(&mapped_src, &mapped_tgt, gold, k, top)?;
    let p1 = evaluate_p_at_k(&predictions, gold, 1)?;
    let p5 = evaluate_p_at_k(&predictions, gold, 5)?;
    Ok(Evaluation {
        p_at_1: p1.precision,
        p_at_5: p5.precision,
        oov: p1.oov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputOptions {
    /// Digits after the decimal point in .vec files; 17 or more writes the
    /// shortest round-trip form.
    pub precision: usize,
    pub write_checkpoints: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions {
            precision: 6,
            write_checkpoints: true,
        }
    }
}

/// Writes `src_mapped.vec`, `tgt_mapped.vec`, `dictionary.tsv`,
/// `report.json`, the CPD transforms of the chosen iterate and any Align
/// checkpoints into `dir`. Adds P@1/P@5 to the report when `gold` is given.
pub fn generate_output(
    out: &PipelineOutput,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    gold: Option<&GoldDictionary>,
    dir: &Path,
    options: OutputOptions,
) -> Result<PipelineReport> {
    std::fs::create_dir_all(dir)?;
    let mut report = out.report.clone();
    if let Some(gold) = gold {
        let eval = evaluate_output(out, src, tgt, gold)?;
        report.p_at_1 = Some(eval.p_at_1);
        report.p_at_5 = Some(eval.p_at_5);
        report.oov_count = Some(eval.oov);
        if eval.oov > 0 {
            report.warnings.push(format!(
                "{} gold source tokens are missing from the source vocabulary",
                eval.oov
            ));
        }
    }

    write_vec_rows(src.vocab(), &out.x_final, &dir.join("src_mapped.vec"), options.precision)?;
    write_vec_rows(tgt.vocab(), &out.y_final, &dir.join("tgt_mapped.vec"), options.precision)?;
    out.dictionary
        .write_tsv(src.vocab(), tgt.vocab(), dir.join("dictionary.tsv"))?;
    if let Some((fwd, bwd)) = &out.transforms {
        for (name, rec) in [("transform_forward.json", fwd), ("transform_backward.json", bwd)] {
            let mut text = serde_json::to_string_pretty(rec)?;
            text.push('\n');
            std::fs::write(dir.join(name), text)?;
        }
    }
    if let (Some(align), true) = (&out.align, options.write_checkpoints) {
        let hash = report.config.hash()?;
        let ck_dir = dir.join("checkpoints");
        std::fs::create_dir_all(&ck_dir)?;
        for ck in &align.checkpoints {
            save_checkpoint(ck, &ck_dir, &hash, options.precision)?;
        }
    }
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    Ok(report)
}
