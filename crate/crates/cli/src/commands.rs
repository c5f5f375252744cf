use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;

use divrank::baselines::{self, default_lambda_grid};
use divrank::features::{extract_features, Channel, FeatureConfig};
use divrank::io::{self, Dataset, ModelFile, ModelMetadata, Run, RunEntry, Table};
use divrank::model::ScoreTable;
use divrank::synth::{self, SynthConfig};
use divrank::trainer::{self, default_c_grid, TrainConfig};
use divrank::{greedy, metrics, Error, Measure, MeasureParams, QueryInstance, Ranking};

use crate::args::*;
use crate::config::Config;
use crate::output::Outputs;

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn measure_params(flags: &MeasureFlags, cfg: &Config) -> Result<MeasureParams> {
    let mut p = MeasureParams::default();
    if let Some(m) = &cfg.measure {
        p.measure = m.parse()?;
    }
    if let Some(m) = flags.measure {
        p.measure = match m {
            MeasureArg::ErrIa => Measure::ErrIa,
            MeasureArg::AlphaNdcg => Measure::AlphaNdcg,
            MeasureArg::Nrbp => Measure::Nrbp,
        };
    }
    p.alpha = flags.alpha.or(cfg.alpha).unwrap_or(p.alpha);
    p.beta = flags.beta.or(cfg.beta).unwrap_or(p.beta);
    p.cutoff = flags.cutoff.or(cfg.cutoff).unwrap_or(p.cutoff);
    p.validate()?;
    Ok(p)
}

fn train_config(flags: &TrainFlags, measure: MeasureParams, cfg: &Config) -> Result<TrainConfig> {
    let mut t = TrainConfig {
        measure,
        ..TrainConfig::default()
    };
    t.c = flags.c.or(cfg.c).unwrap_or(t.c);
    t.epsilon = flags.epsilon.or(cfg.epsilon).unwrap_or(t.epsilon);
    t.max_outer_iters = flags.max_iters.or(cfg.max_iters).unwrap_or(t.max_outer_iters);
    t.validate()?;
    Ok(t)
}

fn load(path: &Path) -> Result<Dataset> {
    Ok(io::load_dataset(path)?)
}

fn write_run_file(outputs: &mut Outputs, path: &Path, run: &Run) -> Result<()> {
    outputs.write_with(path, |w| Ok(io::write_run(w, run)?))
}

pub fn synth(a: &SynthArgs, cfg: &Config) -> Result<()> {
    let d = SynthConfig::default();
    let sc = SynthConfig {
        num_queries: a.queries.unwrap_or(d.num_queries),
        docs_per_query: a.docs.unwrap_or(d.docs_per_query),
        num_subtopics: a.subtopics.unwrap_or(d.num_subtopics),
        noise: a.noise.unwrap_or(d.noise),
        signal: a.signal.unwrap_or(d.signal),
        redundancy: a.redundancy.unwrap_or(d.redundancy),
        raw_fields: a.raw_fields,
        seed: a.seed.or(cfg.seed).unwrap_or(d.seed),
        ..d
    };
    let ds = synth::generate(&sc)?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut outputs = Outputs::new();
    for (name, queries) in [("train", ds.train), ("validation", ds.validation), ("test", ds.test)] {
        let data = Dataset::new(ds.channels.clone(), queries);
        let path = a.out_dir.join(format!("{name}.jsonl"));
        outputs.write_with(&path, |w| Ok(io::write_dataset(w, &data)?))?;
        println!("{}\t{} queries", path.display(), data.queries.len());
    }
    outputs.commit()
}

pub fn feature_extract(a: &FeatureArgs, cfg: &Config) -> Result<()> {
    let mut ds = load(&a.dataset)?;
    if ds.queries.iter().all(|q| q.docs.iter().all(|d| d.meta.is_empty())) {
        bail!(Error::InvalidParameter(format!(
            "{} has no raw document fields to extract features from",
            a.dataset.display()
        )));
    }
    let mut fc = FeatureConfig::default();
    if let Some(names) = &a.channels {
        fc.channels = names.iter().map(|s| s.trim().parse()).collect::<divrank::Result<_>>()?;
    }
    fc.top_t = a.top_t.or(cfg.top_t).unwrap_or(fc.top_t);
    fc.plsa.num_topics = a.topics.or(cfg.topics).unwrap_or(fc.plsa.num_topics);
    fc.plsa.seed = a.seed.or(cfg.seed).unwrap_or(fc.plsa.seed);
    fc.plsa_per_query = a.plsa_per_query;
    extract_features(&mut ds.queries, &fc)?;
    let out = Dataset::new(divrank::features::channel_names(&fc.channels), ds.queries);
    let mut outputs = Outputs::new();
    outputs.write_with(&a.out, |w| Ok(io::write_dataset(w, &out)?))?;
    outputs.commit()?;
    println!("{}\t{} queries\tchannels {}", a.out.display(), out.queries.len(), out.manifest.channels.join(","));
    Ok(())
}

pub fn build_targets(a: &TargetArgs, cfg: &Config) -> Result<()> {
    let ds = load(&a.dataset)?;
    let params = measure_params(&a.measure, cfg)?;
    let built: Vec<Option<(Vec<RunEntry>, f64)>> = ds
        .queries
        .par_iter()
        .map(|q| {
            let target = match greedy::build_target(q, &params) {
                Ok(t) => t,
                Err(Error::DegenerateQuery { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut state = metrics::CascadeState::new(&q.judgments, q.num_docs());
            let gains = target
                .iter()
                .map(|&d| state.push(d, &q.judgments, &params))
                .collect::<divrank::Result<Vec<f64>>>()?;
            Ok(Some((io::entries_for(q, &target, &gains), state.score())))
        })
        .collect::<divrank::Result<_>>()?;
    let mut run = Run::new();
    let mut ideal = Table::new(["query_id", &format!("ideal_raw_{}", params.measure)]);
    for (q, b) in ds.queries.iter().zip(built) {
        match b {
            Some((entries, score)) => {
                run.insert(q.query_id.clone(), entries);
                ideal.push([q.query_id.clone(), format!("{score}")]);
            }
            None => warn!("query {} has no relevant documents; skipped", q.query_id),
        }
    }
    let mut outputs = Outputs::new();
    write_run_file(&mut outputs, &a.out, &run)?;
    if let Some(p) = &a.ideal_out {
        outputs.write(p, ideal.to_tsv().as_bytes())?;
    }
    outputs.commit()?;
    println!("{}\t{} targets ({} @{})", a.out.display(), run.len(), params.measure, params.cutoff);
    Ok(())
}

fn examples<'a>(ds: &'a Dataset, params: &MeasureParams) -> Result<Vec<trainer::TrainingExample<'a>>> {
    let (examples, skipped) = trainer::prepare_examples(&ds.queries, params)?;
    if !skipped.is_empty() {
        warn!("{} queries without relevant documents skipped: {}", skipped.len(), skipped.join(","));
    }
    if examples.is_empty() {
        bail!(Error::InvalidParameter("no usable training queries".into()));
    }
    Ok(examples)
}

fn model_file(ds: &Dataset, tc: &TrainConfig, weights: divrank::WeightVector) -> Result<ModelFile> {
    let mut md = ModelMetadata::for_manifest(&ds.manifest, tc.measure);
    md.train_config = Some(*tc);
    md.dataset_hash = Some(ds.hash());
    Ok(ModelFile::new(weights, md)?)
}

pub fn train(a: &TrainArgs, cfg: &Config) -> Result<()> {
    let ds = load(&a.dataset)?;
    let params = measure_params(&a.measure, cfg)?;
    let tc = train_config(&a.train, params, cfg)?;
    let ex = examples(&ds, &params)?;
    let outcome = trainer::cutting_plane_train_with(&ex, &tc, |r| {
        info!("iteration {}: objective {:.6} constraints {} added {} loss {:.4}", r.iteration, r.objective, r.constraints, r.added, r.mean_loss);
    })?;
    let loss = trainer::mean_training_loss(&outcome.weights, &ex, &params)?;
    let model = model_file(&ds, &tc, outcome.weights)?;
    let mut outputs = Outputs::new();
    outputs.write(&a.out, io::write_model(&model)?.as_bytes())?;
    if let Some(log) = &a.log {
        outputs.write_with(log, |w| Ok(io::write_jsonl(w, &outcome.stats.iterations)?))?;
    }
    outputs.commit()?;
    let s = &outcome.stats;
    println!(
        "{}\tC={}\titerations={}\tconstraints={}\tobjective={}\ttrain_loss={}{}",
        a.out.display(),
        tc.c,
        s.outer_iterations,
        s.active_constraints,
        fmt(s.final_objective),
        fmt(loss),
        if s.truncated { "\ttruncated" } else { "" }
    );
    Ok(())
}

/// Run entries scored by each document's marginal discriminant gain.
fn scored_prediction(table: &ScoreTable, q: &QueryInstance, k: usize) -> Vec<RunEntry> {
    let ranking = divrank::model::predict_with_table(table, k);
    let gains: Vec<f64> = ranking
        .iter()
        .enumerate()
        .map(|(pos, &d)| {
            table.relevance[d] + ranking.as_slice()[..pos].iter().map(|&p| table.pair(d, p)).sum::<f64>()
        })
        .collect();
    io::entries_for(q, &ranking, &gains)
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let ds = load(&a.dataset)?;
    let model = io::load_model(&a.model)?;
    model.check_compatible(&ds.manifest)?;
    let k = a.cutoff.unwrap_or(model.metadata.measure.cutoff);
    if k == 0 {
        bail!(Error::InvalidParameter("cutoff must be >= 1".into()));
    }
    let entries: Vec<Vec<RunEntry>> = ds
        .queries
        .par_iter()
        .map(|q| Ok(scored_prediction(&ScoreTable::new(&model.weights, q)?, q, k)))
        .collect::<divrank::Result<_>>()?;
    let run: Run = ds.queries.iter().map(|q| q.query_id.clone()).zip(entries).collect();
    let mut outputs = Outputs::new();
    write_run_file(&mut outputs, &a.out, &run)?;
    outputs.commit()?;
    println!("{}\t{} queries ranked to depth {k}", a.out.display(), run.len());
    Ok(())
}

const EVAL_MEASURES: [Measure; 3] = [Measure::AlphaNdcg, Measure::ErrIa, Measure::Nrbp];

/// Per-query row of evaluate; `None` when the query has no relevant
/// documents.
fn evaluate_query(q: &QueryInstance, ranking: &Ranking, base: &MeasureParams) -> Result<Option<Vec<f64>>> {
    if !q.judgments.has_relevant() {
        return Ok(None);
    }
    let mut row = Vec::with_capacity(5);
    for m in EVAL_MEASURES {
        let p = MeasureParams { measure: m, ..*base };
        row.push(metrics::dcem(ranking, q, &p)?);
    }
    row.push(metrics::precision_ia(ranking, &q.judgments, base.cutoff));
    row.push(metrics::subtopic_recall(ranking, &q.judgments, base.cutoff));
    Ok(Some(row))
}

pub fn evaluate(a: &EvaluateArgs, cfg: &Config) -> Result<()> {
    let mut ds = load(&a.dataset)?;
    let params = measure_params(&a.measure, cfg)?;
    if let Some(path) = &a.qrels {
        let qrels = io::parse_diversity_qrels(path)?;
        for q in &mut ds.queries {
            let ids: Vec<&str> = q.docs.iter().map(|d| d.doc_id.as_str()).collect();
            q.judgments = match qrels.get(&q.query_id) {
                Some(t) => t.judgments(&ids),
                None => divrank::SubtopicJudgments::uniform(Vec::new()),
            };
        }
    }
    let run = io::load_run(&a.run)?;
    if let Some(unknown) = run.keys().find(|k| ds.queries.iter().all(|q| &q.query_id != *k)) {
        bail!(Error::InvalidRanking(format!("run query {unknown} is not in the dataset")));
    }
    let k = params.cutoff;
    let mut table = Table::new(vec![
        "query_id".to_owned(),
        format!("alpha-ndcg@{k}"),
        format!("err-ia@{k}"),
        format!("nrbp@{k}"),
        format!("precision-ia@{k}"),
        format!("subtopic-recall@{k}"),
    ]);
    let mut sums = [0.0; 5];
    let mut used = 0usize;
    for q in &ds.queries {
        let ranking = match run.get(&q.query_id) {
            Some(entries) => io::ranking_for(q, entries)?,
            None => Ranking::empty(),
        };
        match evaluate_query(q, &ranking, &params)? {
            Some(row) => {
                for (s, v) in sums.iter_mut().zip(&row) {
                    *s += v;
                }
                used += 1;
                table.push(std::iter::once(q.query_id.clone()).chain(row.iter().map(|&v| fmt(v))));
            }
            None => table.push(std::iter::once(q.query_id.clone()).chain(std::iter::repeat_n("NA".to_owned(), 5))),
        }
    }
    if used == 0 {
        bail!(Error::InvalidParameter("no query with relevant documents to evaluate".into()));
    }
    table.push(std::iter::once("mean".to_owned()).chain(sums.iter().map(|s| fmt(s / used as f64))));
    if let Some(out) = &a.out {
        let mut outputs = Outputs::new();
        outputs.write(out, table.to_tsv().as_bytes())?;
        outputs.commit()?;
    }
    print!("{table}");
    Ok(())
}

fn mmr_channel(ds: &Dataset, name: Option<&str>) -> Result<usize> {
    let channels = &ds.manifest.channels;
    match name {
        Some(n) => channels
            .iter()
            .position(|c| c == n)
            .ok_or_else(|| anyhow!(Error::InvalidParameter(format!("dataset has no channel `{n}`")))),
        None => Ok(channels
            .iter()
            .position(|c| c == Channel::Text.name())
            .unwrap_or(baselines::DEFAULT_MMR_CHANNEL.min(channels.len().saturating_sub(1)))),
    }
}

pub fn baseline(a: &BaselineArgs, cfg: &Config) -> Result<()> {
    let ds = load(&a.dataset)?;
    let params = measure_params(&a.measure, cfg)?;
    let k = params.cutoff;
    let mut outputs = Outputs::new();
    let run: Run = match a.method {
        BaselineMethod::Relevance => ds
            .queries
            .iter()
            .map(|q| {
                let scores = baselines::relevance_scores(q);
                let r = baselines::relevance_rank(&scores, k);
                let s: Vec<f64> = r.iter().map(|&d| scores[d]).collect();
                (q.query_id.clone(), io::entries_for(q, &r, &s))
            })
            .collect(),
        BaselineMethod::Mmr => {
            if ds.manifest.channels.is_empty() {
                bail!(Error::InvalidParameter("MMR needs at least one pairwise channel".into()));
            }
            let channel = mmr_channel(&ds, a.channel.as_deref())?;
            let lambda = match (a.lambda, &a.tune_on) {
                (Some(l), _) => l,
                (None, Some(path)) => {
                    let tune = load(path)?;
                    if tune.manifest.channels != ds.manifest.channels {
                        bail!(Error::Compatibility("tuning and target datasets use different channels".into()));
                    }
                    let grid = a.lambda_grid.clone().or(cfg.lambda_grid.clone()).unwrap_or_else(default_lambda_grid);
                    let t = baselines::tune_lambda(&tune.queries, &grid, channel, &params)?;
                    let mut table = Table::new(["lambda".to_owned(), format!("{}@{k}", params.measure)]);
                    for (l, m) in &t.grid {
                        table.push([format!("{l}"), m.map_or("NA".to_owned(), fmt)]);
                    }
                    if let Some(p) = &a.report {
                        outputs.write(p, table.to_tsv().as_bytes())?;
                    }
                    print!("{table}");
                    t.lambda
                }
                (None, None) => bail!(Error::InvalidParameter("MMR needs --lambda or --tune-on".into())),
            };
            println!("lambda\t{lambda}\tchannel\t{}", ds.manifest.channels[channel]);
            let entries: Vec<Vec<RunEntry>> = ds
                .queries
                .par_iter()
                .map(|q| {
                    let r = baselines::mmr_rank_query(q, lambda, channel, k)?;
                    let scores = baselines::relevance_scores(q);
                    let s: Vec<f64> = r.iter().map(|&d| scores[d]).collect();
                    Ok(io::entries_for(q, &r, &s))
                })
                .collect::<divrank::Result<_>>()?;
            ds.queries.iter().map(|q| q.query_id.clone()).zip(entries).collect()
        }
    };
    write_run_file(&mut outputs, &a.out, &run)?;
    outputs.commit()?;
    println!("{}\t{} queries", a.out.display(), run.len());
    Ok(())
}

pub fn sweep_c(a: &SweepArgs, cfg: &Config) -> Result<()> {
    let train = load(&a.train)?;
    let valid = load(&a.validation)?;
    if train.manifest.channels != valid.manifest.channels || train.manifest.relevance_dim != valid.manifest.relevance_dim {
        bail!(Error::Compatibility("train and validation datasets have different layouts".into()));
    }
    let params = measure_params(&a.measure, cfg)?;
    let tc = train_config(&a.train_flags, params, cfg)?;
    let grid = a.c_grid.clone().unwrap_or_else(default_c_grid);
    let ex = examples(&train, &params)?;
    let report = trainer::c_sweep(&ex, &valid.queries, &grid, &tc)?;
    let mut table = Table::new(vec![
        "c".to_owned(),
        "train_loss".to_owned(),
        format!("validation_{}@{}", params.measure, params.cutoff),
        "iterations".to_owned(),
        "truncated".to_owned(),
        "selected".to_owned(),
    ]);
    for (i, r) in report.rows.iter().enumerate() {
        table.push([
            format!("{:e}", r.c),
            fmt(r.train_loss),
            r.validation_score.map_or("NA".to_owned(), fmt),
            r.outer_iterations.to_string(),
            r.truncated.to_string(),
            (i == report.best_index).to_string(),
        ]);
    }
    let mut outputs = Outputs::new();
    outputs.write(&a.out, table.to_tsv().as_bytes())?;
    if let Some(path) = &a.model_out {
        let (row, w) = report.best();
        let model = model_file(&train, &TrainConfig { c: row.c, ..tc }, w.clone())?;
        outputs.write(path, io::write_model(&model)?.as_bytes())?;
    }
    outputs.commit()?;
    print!("{table}");
    Ok(())
}
