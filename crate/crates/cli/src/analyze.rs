//! `onedatum analyze ...`: reports written under `RUN/reports/`.

use std::path::{Path, PathBuf};

use onedatum::data::cifar::Split;
use onedatum::data::{InputSource, LabeledData};
use onedatum::distillery::eval::argmax_rows;
use onedatum::lens::{self, plot, FeatureMatrix, Gist, GistConfig, Histogram, TsneConfig};
use onedatum::modelzoo::{load_checkpoint, Model};
use onedatum::run::RunDir;
use onedatum::{Error, Result};
use serde_json::{json, Value};

use crate::datasets::{load_labeled, Domain, Generated};
use crate::jobs::infer_domain;
use crate::manifest::read_manifest;

/// Options shared by the analysis commands; unset paths default to what the
/// run's manifest recorded.
#[derive(Debug, Clone, Default)]
pub struct AnalyzeOpts {
    pub run: PathBuf,
    pub model: Option<PathBuf>,
    pub model_b: Option<PathBuf>,
    pub teacher: Option<PathBuf>,
    pub patches: Option<PathBuf>,
    pub dataset: Option<String>,
    pub limit: Option<usize>,
    pub temperature: Option<f64>,
    pub bins: Option<usize>,
    pub size: Option<usize>,
    pub seed: u64,
    pub download: bool,
}

struct Ctx {
    run: RunDir,
    recorded: Value,
    opts: AnalyzeOpts,
}

impl Ctx {
    fn new(opts: AnalyzeOpts) -> Result<Self> {
        let run = RunDir::open(&opts.run)?;
        let recorded = if run.manifest().exists() { read_manifest(&run.manifest())?.config } else { json!({}) };
        Ok(Self { run, recorded, opts })
    }

    fn recorded_path(&self, key: &str) -> Option<PathBuf> {
        self.recorded.get(key).and_then(Value::as_str).map(PathBuf::from)
    }

    fn model_path(&self) -> PathBuf {
        self.opts.model.clone().unwrap_or_else(|| self.run.best_checkpoint())
    }

    fn teacher_path(&self) -> Result<PathBuf> {
        self.opts
            .teacher
            .clone()
            .or_else(|| self.recorded_path("teacher"))
            .or_else(|| self.recorded_path("model"))
            .ok_or_else(|| Error::Config("no teacher recorded for this run; pass --teacher".into()))
    }

    fn patches(&self) -> Result<Generated> {
        let dir = self
            .opts
            .patches
            .clone()
            .or_else(|| self.recorded_path("patches"))
            .ok_or_else(|| Error::Config("no patch dataset recorded for this run; pass --patches".into()))?;
        Generated::open(&dir)
    }

    fn domain(&self) -> Result<Domain> {
        if let Some(d) = self.opts.dataset.as_deref().or_else(|| self.recorded.get("dataset").and_then(Value::as_str)) {
            return Domain::parse(d);
        }
        infer_domain(None, &self.model_path())
    }

    fn eval(&self, domain: Domain, limit: Option<usize>) -> Result<LabeledData> {
        load_labeled(&crate::data_root(), domain, Split::Test, limit, self.opts.download)
    }

    fn temperature(&self) -> f64 {
        self.opts
            .temperature
            .or_else(|| self.recorded.pointer("/distill/temperature").and_then(Value::as_f64))
            .unwrap_or(8.0)
    }

    fn report(&self, name: &str) -> PathBuf {
        self.run.reports().join(name)
    }
}

fn load_model(path: &Path) -> Result<Model> {
    if !path.exists() {
        return Err(Error::MissingPrerequisite(format!("checkpoint {} not found", path.display())));
    }
    Ok(load_checkpoint(path)?.model)
}

fn probe(src: &dyn InputSource, n: usize) -> Result<tch::Tensor> {
    let idx: Vec<usize> = (0..n.min(src.len())).collect();
    src.batch(&idx, None)
}

/// Confidence histograms of the run's model on patches and, when available,
/// on the evaluation set.
pub fn confidence(opts: AnalyzeOpts) -> Result<Value> {
    let ctx = Ctx::new(opts)?;
    let model = load_model(&ctx.model_path())?;
    let domain = ctx.domain()?;
    let limit = ctx.opts.limit.or(Some(5000));
    let bins = ctx.opts.bins.unwrap_or(50);
    let tau = ctx.temperature();
    let patches = ctx.patches()?.source(domain, limit)?;
    let (hp, cp) = lens::confidence_histogram(&model, patches.as_ref(), tau, bins, 500)?;
    let eval = ctx.eval(domain, limit).ok();
    let he = match &eval {
        Some(e) => Some(lens::confidence_histogram(&model, e.source.as_ref(), tau, bins, 500)?),
        None => None,
    };
    let mut rows = lens::histogram_rows(&hp);
    for (i, r) in rows.iter_mut().enumerate() {
        r.push(he.as_ref().map_or("-".into(), |h| h.0.counts[i].to_string()));
    }
    lens::write_table(&ctx.report("confidence.tsv"), &["bin_lo", "bin_hi", "patches", "eval"], &rows)?;
    let mut series: Vec<&Histogram> = vec![&hp];
    if let Some(h) = &he {
        series.push(&h.0);
    }
    plot::render_histograms(&series, &ctx.report("confidence.png"))?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(json!({
        "temperature": tau,
        "patches": { "count": cp.len(), "mean": mean(&cp) },
        "eval": he.as_ref().map(|(_, c)| json!({ "count": c.len(), "mean": mean(c) })),
    }))
}

/// CKA heatmap between two models (default: teacher vs the run's model) on
/// evaluation images, or patches when no evaluation set is available.
pub fn cka(opts: AnalyzeOpts) -> Result<Value> {
    let ctx = Ctx::new(opts)?;
    let a = load_model(&ctx.opts.model_b.clone().map_or_else(|| ctx.teacher_path(), Ok)?)?;
    let b = load_model(&ctx.model_path())?;
    let domain = ctx.domain()?;
    let limit = ctx.opts.limit.unwrap_or(500);
    let x = match ctx.eval(domain, Some(limit)) {
        Ok(e) => probe(e.source.as_ref(), limit)?,
        Err(_) => probe(ctx.patches()?.source(domain, Some(limit))?.as_ref(), limit)?,
    };
    let m = lens::cka_heatmap(&a, &b, &x)?;
    let rows: Vec<Vec<String>> = m
        .iter()
        .zip(a.tap_names())
        .map(|(r, name)| std::iter::once(name).chain(r.iter().map(|v| format!("{v:.6}"))).collect())
        .collect();
    let mut header = vec!["layer".to_string()];
    header.extend(b.tap_names());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    lens::write_table(&ctx.report("cka.tsv"), &header, &rows)?;
    plot::render_heatmap(&m, &ctx.report("cka.png"))?;
    let diag: Vec<f64> = (0..m.len().min(m[0].len())).map(|i| m[i][i]).collect();
    Ok(json!({ "shape": [m.len(), m[0].len()], "diagonal": diag, "probe": x.size()[0] }))
}

/// Pairwise GIST distances over the first `limit` patches.
pub fn gist(opts: AnalyzeOpts) -> Result<Value> {
    let ctx = Ctx::new(opts)?;
    let g = ctx.patches()?;
    let images = g.images()?;
    let n = ctx.opts.limit.unwrap_or(1000).min(images.count);
    if n < 2 {
        return Err(Error::precondition("GIST histogram needs at least 2 images"));
    }
    let size = ctx.opts.size.unwrap_or(256);
    let gist = Gist::new(GistConfig { size, ..GistConfig::default() })?;
    use rayon::prelude::*;
    let descs: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| gist.describe_u8(images.record(i), images.height, images.width, images.channels))
        .collect::<Result<_>>()?;
    let (h, d) = lens::gist_distance_histogram(&descs, ctx.opts.bins.unwrap_or(50))?;
    lens::write_table(&ctx.report("gist_hist.tsv"), &["bin_lo", "bin_hi", "count"], &lens::histogram_rows(&h))?;
    plot::render_histograms(&[&h], &ctx.report("gist_hist.png"))?;
    let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(json!({ "images": n, "pairs": d.len(), "min": lo, "max": hi, "modes": h.mode_count(0.05, 0.1) }))
}

fn last_features(model: &Model, x: &tch::Tensor) -> Result<FeatureMatrix> {
    lens::layer_features(model, x)?
        .pop()
        .ok_or_else(|| Error::precondition("model exposes no feature taps"))
}

/// Joint 2-D t-SNE of the run's model features on patches and evaluation
/// images.
pub fn embed(opts: AnalyzeOpts) -> Result<Value> {
    let ctx = Ctx::new(opts)?;
    let model = load_model(&ctx.model_path())?;
    let domain = ctx.domain()?;
    let limit = ctx.opts.limit.unwrap_or(500);
    let xp = probe(ctx.patches()?.source(domain, Some(limit))?.as_ref(), limit)?;
    let mut feats = vec![last_features(&model, &xp)?];
    let mut groups = vec![0usize; xp.size()[0] as usize];
    let mut labels = argmax_rows(&tch::no_grad(|| model.forward(&xp, false)))?;
    if let Ok(e) = ctx.eval(domain, Some(limit)) {
        let xe = probe(e.source.as_ref(), limit)?;
        feats.push(last_features(&model, &xe)?);
        groups.extend(std::iter::repeat_n(1, e.len()));
        labels.extend(e.labels.iter().copied());
    }
    let rows: Vec<Vec<f64>> = feats.iter().flat_map(|f| f.data.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>()).collect();
    let y = lens::embed_2d(&rows, ctx.opts.seed, &TsneConfig::default())?;
    let table: Vec<Vec<String>> = y
        .iter()
        .zip(&groups)
        .zip(&labels)
        .map(|((p, g), l)| vec![format!("{:.6}", p[0]), format!("{:.6}", p[1]), if *g == 0 { "patch" } else { "eval" }.into(), l.to_string()])
        .collect();
    lens::write_table(&ctx.report("embed.tsv"), &["x", "y", "group", "label"], &table)?;
    plot::render_scatter(&y, &groups, &ctx.report("embed.png"))?;
    Ok(json!({ "points": y.len(), "layer": feats[0].layer }))
}

/// Per-class accuracy curves against teacher top-1 frequency on the
/// training patches.
pub fn perclass(opts: AnalyzeOpts) -> Result<Value> {
    let ctx = Ctx::new(opts)?;
    let records = ctx.run.read_epochs()?;
    let teacher = load_model(&ctx.teacher_path()?)?;
    let domain = ctx.domain()?;
    let train_limit = ctx.recorded.get("train_limit").and_then(Value::as_u64).map(|v| v as usize);
    let src = ctx.patches()?.source(domain, ctx.opts.limit.or(train_limit))?;
    let freq = lens::teacher_frequency(&teacher, src.as_ref(), Some(ctx.opts.seed), 500)?;
    let names = ctx.eval(domain, Some(1)).map(|e| e.class_names).unwrap_or_default();
    let report = lens::per_class_report(&records, freq, names)?;
    let rows: Vec<Vec<String>> = (0..report.frequency.len())
        .map(|c| {
            let mut r = vec![report.class_names[c].clone(), report.frequency[c].to_string()];
            r.extend(report.curves[c].iter().map(|v| format!("{v:.4}")));
            r
        })
        .collect();
    let mut header = vec!["class".to_string(), "teacher_top1_count".to_string()];
    header.extend(report.epochs.iter().map(|e| format!("epoch{e}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    lens::write_table(&ctx.report("perclass.tsv"), &header, &rows)?;
    let pts: Vec<[f64; 2]> = report.scatter().into_iter().map(|(f, a)| [f, a]).collect();
    plot::render_scatter(&pts, &vec![0; pts.len()], &ctx.report("perclass_scatter.png"))?;
    Ok(serde_json::to_value(&report)?)
}
