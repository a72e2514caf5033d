use std::path::{Path, PathBuf};

use anyhow::Context;
use wordreg::align::{AlignConfig, CheckpointPolicy};
use wordreg::embeddings::{
    load_map, load_vec, normalize, save_vec, synth_pair, EmbeddingSpace, GoldDictionary,
    NormalizeOptions,
};
use wordreg::metrics::{
    evaluate_p_at_k, induce_dictionary, map_views, predict_translations, CslsParams, Views,
};
use wordreg::numerics::LinearMap;
use wordreg::pipeline::{
    generate_output, run_actg, Initialization, OutputOptions, PipelineConfig, PipelineOutput,
};
use wordreg::transform::CpdConfig;

use crate::settings::{usage, Settings};
use crate::{AlignArgs, EvalArgs, InduceArgs, SynthArgs};

pub fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let kind = a.kind.parse()?;
    let pair = synth_pair(a.n, a.dim, a.noise, a.seed, kind, a.clusters)?;
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    save_vec(&pair.source, dir.join("src.vec"), 17)?;
    save_vec(&pair.target, dir.join("tgt.vec"), 17)?;
    pair.gold_dictionary().save(dir.join("gold.tsv"))?;
    let mut json = serde_json::to_string_pretty(&pair.planted.record())?;
    json.push('\n');
    std::fs::write(dir.join("planted.json"), json)?;
    log::info!("wrote {} pairs of dimension {} to {}", a.n, a.dim, dir.display());
    Ok(())
}

const ALIGN_KEYS: &[&str] = &[
    "src",
    "tgt",
    "out-dir",
    "gold",
    "max-vocab",
    "lambda-cyc",
    "beta-orth",
    "disc-vocab",
    "dropout",
    "dis-hidden",
    "epochs",
    "iters-per-epoch",
    "batch-size",
    "learning-rate",
    "objective",
    "csls-k",
    "induce-limit",
    "cpd-points",
    "cpd-w",
    "cpd-mode",
    "cpd-max-iter",
    "refine",
    "max-refine-iters",
    "skip-gan",
    "init-forward",
    "init-backward",
    "checkpoint",
    "no-correspond",
    "no-transform",
    "correspond-from-original",
    "seed",
    "seeds",
    "precision",
    "timings",
    "no-checkpoints",
];

fn load_space(path: &Path, max_vocab: usize) -> anyhow::Result<EmbeddingSpace> {
    let loaded = load_vec(path, max_vocab).with_context(|| format!("loading {}", path.display()))?;
    if loaded.duplicates > 0 {
        log::warn!("{}: dropped {} duplicate tokens", path.display(), loaded.duplicates);
    }
    Ok(loaded.space)
}

fn parse_widths(text: &str) -> anyhow::Result<Vec<usize>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| usage(format!("bad --dis-hidden entry {s:?}: {e}")))
        })
        .collect()
}

/// Resolved `align` invocation.
struct AlignPlan {
    src: PathBuf,
    tgt: PathBuf,
    out_dir: PathBuf,
    gold: Option<PathBuf>,
    max_vocab: usize,
    maps: Option<(PathBuf, PathBuf)>,
    config: PipelineConfig,
    seeds: usize,
    output: OutputOptions,
}

fn plan_align(a: &AlignArgs) -> anyhow::Result<AlignPlan> {
    let s = Settings::load(a.config.as_deref(), ALIGN_KEYS)?;
    let defaults = PipelineConfig::default();
    let align_defaults = AlignConfig::default();

    let skip_gan = s.switch(a.skip_gan, "skip-gan")?;
    let checkpoint: Option<CheckpointPolicy> = s.get(a.checkpoint.clone(), "checkpoint")?
        .map(|c: String| c.parse())
        .transpose()?;
    let init_forward = s.get(a.init_forward.clone(), "init-forward")?;
    let init_backward = s.get(a.init_backward.clone(), "init-backward")?;
    let maps = match (init_forward, init_backward) {
        (Some(f), Some(g)) => Some((f, g)),
        (None, None) => None,
        _ => return Err(usage("--init-forward and --init-backward must be given together")),
    };
    let export_epoch = matches!(checkpoint, Some(CheckpointPolicy::Epoch(_)));
    if skip_gan && export_epoch {
        return Err(usage("--skip-gan conflicts with --checkpoint epoch:N (no Align checkpoints exist)"));
    }
    if maps.is_some() && (skip_gan || export_epoch) {
        return Err(usage("--init-forward/--init-backward conflict with --skip-gan and --checkpoint epoch:N"));
    }

    let dis_hidden = match s.get::<String>(a.dis_hidden.clone(), "dis-hidden")? {
        Some(text) => parse_widths(&text)?,
        None => align_defaults.dis_hidden.clone(),
    };
    let align = AlignConfig {
        lambda_cyc: s.or(a.lambda_cyc, "lambda-cyc", align_defaults.lambda_cyc)?,
        beta_orth: s.or(a.beta_orth, "beta-orth", align_defaults.beta_orth)?,
        discriminator_vocab_limit: s.or(
            a.disc_vocab,
            "disc-vocab",
            align_defaults.discriminator_vocab_limit,
        )?,
        dis_dropout: s.or(a.dropout, "dropout", align_defaults.dis_dropout)?,
        dis_hidden,
        epochs: s.or(a.epochs, "epochs", align_defaults.epochs)?,
        iters_per_epoch: s.or(a.iters_per_epoch, "iters-per-epoch", align_defaults.iters_per_epoch)?,
        batch_size: s.or(a.batch_size, "batch-size", align_defaults.batch_size)?,
        learning_rate: s.or(a.learning_rate, "learning-rate", align_defaults.learning_rate)?,
        objective: match s.get::<String>(a.objective.clone(), "objective")? {
            Some(o) => o.parse()?,
            None => align_defaults.objective,
        },
        checkpoint: checkpoint.unwrap_or(align_defaults.checkpoint),
        ..align_defaults
    };
    let cpd_defaults = CpdConfig::default();
    let cpd = CpdConfig {
        point_limit: s.or(a.cpd_points, "cpd-points", cpd_defaults.point_limit)?,
        outlier_weight: s.or(a.cpd_w, "cpd-w", cpd_defaults.outlier_weight)?,
        max_iter: s.or(a.cpd_max_iter, "cpd-max-iter", cpd_defaults.max_iter)?,
        mode: match s.get::<String>(a.cpd_mode.clone(), "cpd-mode")? {
            Some(m) => m.parse()?,
            None => cpd_defaults.mode,
        },
        ..cpd_defaults
    };
    let csls = CslsParams {
        k: s.or(a.csls_k, "csls-k", defaults.csls.k)?,
        candidate_limit: s.or(a.induce_limit, "induce-limit", defaults.csls.candidate_limit)?,
    };
    let init = if maps.is_some() {
        Initialization::Provided
    } else if skip_gan {
        Initialization::Identity
    } else {
        Initialization::Adversarial
    };
    let config = PipelineConfig {
        init,
        align,
        csls,
        cpd,
        max_refine_iters: s.or(a.max_refine_iters, "max-refine-iters", defaults.max_refine_iters)?,
        refine: match s.get::<String>(a.refine.clone(), "refine")? {
            Some(r) => r.parse()?,
            None => defaults.refine,
        },
        correspond: !s.switch(a.no_correspond, "no-correspond")?,
        transform: !s.switch(a.no_transform, "no-transform")?,
        correspond_from_original: s.switch(a.correspond_from_original, "correspond-from-original")?,
        record_timings: s.switch(a.timings, "timings")?,
        seed: s.or(a.seed, "seed", defaults.seed)?,
    };
    config.validate()?;

    let seeds = s.or(a.seeds, "seeds", 1)?;
    if seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let out_defaults = OutputOptions::default();
    Ok(AlignPlan {
        src: s.required(a.src.clone(), "src")?,
        tgt: s.required(a.tgt.clone(), "tgt")?,
        out_dir: s.required(a.out_dir.clone(), "out-dir")?,
        gold: s.get(a.gold.clone(), "gold")?,
        max_vocab: s.or(a.max_vocab, "max-vocab", 200_000)?,
        maps,
        config,
        seeds,
        output: OutputOptions {
            precision: s.or(a.precision, "precision", out_defaults.precision)?,
            write_checkpoints: !s.switch(a.no_checkpoints, "no-checkpoints")?,
        },
    })
}

fn chosen_criterion(out: &PipelineOutput) -> f64 {
    let r = &out.report;
    r.iterations
        .iter()
        .find(|it| it.iteration == r.chosen_iteration)
        .and_then(|it| it.criterion)
        .unwrap_or(f64::NEG_INFINITY)
}

pub fn align(a: &AlignArgs) -> anyhow::Result<()> {
    let plan = plan_align(a)?;
    let opts = NormalizeOptions::default();
    let src = normalize(&load_space(&plan.src, plan.max_vocab)?, opts)?;
    let tgt = normalize(&load_space(&plan.tgt, plan.max_vocab)?, opts)?;
    let gold = plan.gold.as_deref().map(GoldDictionary::load).transpose()?;
    let maps = match &plan.maps {
        Some((f, g)) => Some((
            load_map(f).with_context(|| format!("loading {}", f.display()))?,
            load_map(g).with_context(|| format!("loading {}", g.display()))?,
        )),
        None => None,
    };

    let mut best: Option<PipelineOutput> = None;
    for offset in 0..plan.seeds as u64 {
        let mut config = plan.config.clone();
        config.seed = plan.config.seed + offset;
        let out = run_actg(&src, &tgt, &config, maps.clone())
            .with_context(|| format!("pipeline with seed {}", config.seed))?;
        let c = chosen_criterion(&out);
        if plan.seeds > 1 {
            log::info!("seed {}: criterion {c:.5}", config.seed);
        }
        if best.as_ref().is_none_or(|b| c > chosen_criterion(b)) {
            best = Some(out);
        }
    }
    let mut out = best.expect("at least one seed ran");
    if plan.seeds > 1 {
        out.report.warnings.push(format!(
            "best of {} seeds starting at {}; chose seed {}",
            plan.seeds, plan.config.seed, out.report.config.seed
        ));
    }
    let report = generate_output(&out, &src, &tgt, gold.as_ref(), &plan.out_dir, plan.output)?;
    if let (Some(p1), Some(p5)) = (report.p_at_1, report.p_at_5) {
        log::info!("P@1 {p1:.4}, P@5 {p5:.4}");
    }
    log::info!("wrote {}", plan.out_dir.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let ks: Vec<usize> = a
        .at
        .split(',')
        .map(|k| k.trim().parse().map_err(|e| usage(format!("bad --at entry {k:?}: {e}"))))
        .collect::<anyhow::Result<_>>()?;
    if ks.iter().any(|&k| k == 0) {
        return Err(usage("--at values must be at least 1"));
    }
    let src = load_space(&a.src_mapped, a.max_vocab)?;
    let tgt = load_space(&a.tgt, a.max_vocab)?;
    let gold = GoldDictionary::load(&a.gold)?;
    let top = ks.iter().copied().max().unwrap_or(1).min(tgt.len());
    let k = a.csls_k.min(src.len()).min(tgt.len());
    let predictions = predict_translations(&src, &tgt, &gold, k, top)?;
    let mut oov = 0;
    for k in ks {
        let p = evaluate_p_at_k(&predictions, &gold, k)?;
        println!("P@{k}\t{:.6}", p.precision);
        oov = p.oov;
    }
    println!("oov\t{oov}");
    Ok(())
}

pub fn induce(a: &InduceArgs) -> anyhow::Result<()> {
    let src = load_space(&a.src, a.max_vocab)?;
    let tgt = load_space(&a.tgt, a.max_vocab)?;
    let d = src.dim();
    let forward = a.forward.as_deref().map(load_map).transpose()?.unwrap_or(LinearMap::identity(d));
    let backward = a.backward.as_deref().map(load_map).transpose()?.unwrap_or(LinearMap::identity(d));
    let (fx, gy) = map_views(src.matrix(), tgt.matrix(), &forward, &backward);
    let views = Views::new(src.matrix(), tgt.matrix(), &fx, &gy)?;
    let params = CslsParams {
        k: a.csls_k,
        candidate_limit: a.limit,
    };
    let induction = induce_dictionary(&views, &params)?;
    induction
        .dictionary
        .write_tsv(src.vocab(), tgt.vocab(), &a.out)?;
    log::info!("wrote {} pairs to {}", induction.dictionary.len(), a.out.display());
    Ok(())
}
