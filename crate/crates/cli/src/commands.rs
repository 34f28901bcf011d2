use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use holocrowd::eval::{
    ablation, bench_throughput, clip_cv_protocol, roc_svg, umn_protocol, write_folds_csv, write_report_csv,
    write_roc_csv, CvOptions, CvResult, EvalReport, LabeledClip, Protocol, RocCurve, Split, UmnOptions,
};
use holocrowd::features::{read_features_csv, write_features_csv, FeatureKind, FeatureTable};
use holocrowd::frame_io::{open_sequence, Frame, FrameFormat};
use holocrowd::models::{check_dimensionality, Detector, DetectorKind, GmmModel, Label, ModelFile, SvmModel};
use holocrowd::pipeline::{features_from_tracklets, track_sequence, PipelineConfig};
use holocrowd::seed::derive_seed;
use holocrowd::synth::{
    read_corpus, read_labels, recipe, render, simulate, write_corpus, Corpus, CORPUS_FILE, CORPUS_FRAME_FORMAT,
    FRAMES_DIR, LABELS_FILE, TRUTH_TRACKLETS_FILE,
};
use holocrowd::tracker::{read_tracklets, write_tracklets, NoiseFilter};
use holocrowd::{par, Execution, RunConfig};
use sha2::{Digest, Sha256};

use crate::{Cli, Command, CvArgs, FeatureSelect, TrainArgs, UsageError};

/// Tracklets written by `track` inside each corpus clip.
const TRACKLETS_FILE: &str = "tracklets.jsonl";
/// Features written by `features` inside each corpus clip.
const FEATURES_FILE: &str = "features.csv";

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    header: Vec<String>,
    exec: Execution,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some((r, c)) = cli.grid {
            cfg.grid_rows = r;
            cfg.grid_cols = c;
        }
        cfg.validate()?;
        let digest = Sha256::digest(cfg.to_kv_string().as_bytes());
        let hash: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        let header = vec![format!(
            "holocrowd {} config={hash} seed={}",
            env!("CARGO_PKG_VERSION"),
            cli.seed
        )];
        Ok(Self {
            cfg,
            seed: cli.seed,
            header,
            exec: Execution::best_available(),
        })
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig::new(self.cfg.clone())
    }

    fn filter(&self) -> NoiseFilter {
        NoiseFilter {
            min_len: self.cfg.min_tracklet_len,
            static_std: self.cfg.static_std_threshold,
        }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(|e| holocrowd::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufReader::new(f))
}

fn is_corpus(path: &Path) -> bool {
    path.join(CORPUS_FILE).is_file()
}

fn required_out(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref()
        .ok_or_else(|| usage("--out is required unless the input is a corpus directory"))
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx::new(cli)?;
    match &cli.command {
        Command::Synth { recipe: r, out } => synth(&ctx, *r, out),
        Command::Track { input, out, format } => track(&ctx, input, out, *format),
        Command::Features {
            input,
            out,
            truth,
            select,
        } => features(&ctx, input, out, *truth, select),
        Command::TrainGmm { train, train_frames } => train_model(&ctx, train, DetectorKind::Gmm, *train_frames),
        Command::TrainSvm { train } => train_model(&ctx, train, DetectorKind::Svm, None),
        Command::Score { model, features, out } => score(model, features, out, &ctx),
        Command::EvalUmn {
            corpus,
            out,
            train_frames,
            select,
        } => eval_umn(&ctx, corpus, out, *train_frames, select),
        Command::EvalCv { cv, select } => eval_cv(&ctx, cv, select),
        Command::Ablate { cv } => ablate(&ctx, cv),
        Command::Bench {
            input,
            recipe: r,
            format,
            parallel,
            out,
        } => bench(&ctx, input.as_deref(), *r, *format, *parallel, out.as_deref()),
    }
}

fn synth(ctx: &Ctx, r: holocrowd::synth::Recipe, out: &Path) -> Result<()> {
    let clips = recipe(r, ctx.seed);
    let c = write_corpus(out, &clips, &ctx.header, &ctx.filter(), ctx.cfg.reseed_interval, ctx.exec)?;
    println!("wrote {} clips to {}", c.entries.len(), out.display());
    Ok(())
}

fn dims(cfg: &RunConfig) -> Option<(usize, usize)> {
    cfg.frame_width.zip(cfg.frame_height)
}

fn track_one(ctx: &Ctx, frames: &Path, format: FrameFormat, out: &Path, exec: Execution) -> Result<usize> {
    let stream = open_sequence(frames, format, dims(&ctx.cfg))?;
    let (meta, kept) = track_sequence(stream, &ctx.pipeline().with_exec(exec))?;
    let mut w = create(out)?;
    write_tracklets(&mut w, &ctx.header, &meta, &kept)?;
    w.flush()?;
    Ok(kept.len())
}

fn track(ctx: &Ctx, input: &Path, out: &Option<PathBuf>, format: FrameFormat) -> Result<()> {
    if is_corpus(input) {
        let corpus = read_corpus(input)?;
        let counts = par::map(ctx.exec, &corpus.entries, |e| {
            let dir = corpus.clip_dir(e);
            track_one(ctx, &dir.join(FRAMES_DIR), CORPUS_FRAME_FORMAT, &dir.join(TRACKLETS_FILE), Execution::Sequential)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        println!(
            "tracked {} clips, {} tracklets kept",
            counts.len(),
            counts.iter().sum::<usize>()
        );
        return Ok(());
    }
    let n = track_one(ctx, input, format, required_out(out)?, ctx.exec)?;
    println!("{n} tracklets kept");
    Ok(())
}

fn features_one(ctx: &Ctx, tracklets: &Path, out: &Path, kinds: &[FeatureKind]) -> Result<usize> {
    let (meta, tracklets) = read_tracklets(open(tracklets)?)?;
    let rows = features_from_tracklets(&meta, &tracklets, &ctx.cfg);
    let mut w = create(out)?;
    write_features_csv(&mut w, &ctx.header, kinds, &rows)?;
    w.flush()?;
    Ok(rows.len())
}

fn features(ctx: &Ctx, input: &Path, out: &Option<PathBuf>, truth: bool, select: &FeatureSelect) -> Result<()> {
    let kinds = kept_features(select, &FeatureKind::ALL)?;
    if is_corpus(input) {
        let corpus = read_corpus(input)?;
        let source = if truth { TRUTH_TRACKLETS_FILE } else { TRACKLETS_FILE };
        let frames = par::map(ctx.exec, &corpus.entries, |e| {
            let dir = corpus.clip_dir(e);
            features_one(ctx, &dir.join(source), &dir.join(FEATURES_FILE), &kinds)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        println!("featurized {} clips, {} frames", frames.len(), frames.iter().sum::<usize>());
        return Ok(());
    }
    if truth {
        return Err(usage("--truth applies only to corpus directories"));
    }
    let n = features_one(ctx, input, required_out(out)?, &kinds)?;
    println!("{n} frames");
    Ok(())
}

fn kept_features(select: &FeatureSelect, available: &[FeatureKind]) -> Result<Vec<FeatureKind>> {
    let kinds = select.kept(available);
    if kinds.is_empty() {
        return Err(usage("every feature was excluded"));
    }
    Ok(kinds)
}

/// Feature table and per-frame labels of every corpus clip.
fn load_clips(corpus: &Corpus) -> Result<Vec<(LabeledClip, Vec<FeatureKind>)>> {
    corpus
        .entries
        .iter()
        .map(|e| {
            let dir = corpus.clip_dir(e);
            let p = dir.join(FEATURES_FILE);
            if !p.is_file() {
                return Err(holocrowd::Error::InsufficientData(format!(
                    "{} is missing; run `holocrowd features` on the corpus first",
                    p.display()
                ))
                .into());
            }
            let table = read_features_csv(open(&p)?)?;
            let frame_labels = read_labels(&dir.join(LABELS_FILE))?;
            if frame_labels.len() != table.rows.len() {
                return Err(holocrowd::Error::InsufficientData(format!(
                    "clip {}: {} labels for {} feature rows",
                    e.clip,
                    frame_labels.len(),
                    table.rows.len()
                ))
                .into());
            }
            let clip = LabeledClip {
                name: e.clip.clone(),
                scene: e.scene.clone(),
                label: e.label,
                frames: table.rows,
                frame_labels,
            };
            Ok((clip, table.features))
        })
        .collect()
}

fn require_columns(have: &[FeatureKind], want: &[FeatureKind]) -> Result<()> {
    if let Some(f) = want.iter().find(|f| !have.contains(f)) {
        return Err(holocrowd::Error::Dimensionality {
            expected: want.len(),
            got: have.len(),
        })
        .with_context(|| format!("feature {} is not in the input", f.name()));
    }
    Ok(())
}

/// Corpus clips and the features they share after exclusions.
fn corpus_clips(path: &Path, select: &FeatureSelect) -> Result<(Vec<LabeledClip>, Vec<FeatureKind>)> {
    let corpus = read_corpus(path)?;
    let loaded = load_clips(&corpus)?;
    let first = loaded.first().map(|(_, c)| c.clone()).unwrap_or_default();
    let kinds = kept_features(select, &first)?;
    let mut out = Vec::new();
    for (clip, cols) in loaded {
        require_columns(&cols, &kinds)?;
        out.push(clip);
    }
    Ok((out, kinds))
}

fn train_model(ctx: &Ctx, args: &TrainArgs, kind: DetectorKind, train_frames: Option<usize>) -> Result<()> {
    let (labelled, kinds): (Vec<(holocrowd::FeatureVector, Label)>, _) = if is_corpus(&args.features) {
        if args.labels.is_some() {
            return Err(usage("--labels applies only to a single feature file"));
        }
        let (clips, kinds) = corpus_clips(&args.features, &args.select)?;
        let rows = clips
            .into_iter()
            .flat_map(|c| {
                let n = train_frames.unwrap_or(c.frames.len()).min(c.frames.len());
                c.frames.into_iter().zip(c.frame_labels).take(n).collect::<Vec<_>>()
            })
            .collect();
        (rows, kinds)
    } else {
        let table = read_features_csv(open(&args.features)?)?;
        let kinds = kept_features(&args.select, &table.features)?;
        let labels = match &args.labels {
            Some(p) => read_labels(p)?,
            None if kind == DetectorKind::Svm => return Err(usage("train-svm on a feature file needs --labels")),
            None => vec![Label::Normal; table.rows.len()],
        };
        if labels.len() != table.rows.len() {
            return Err(holocrowd::Error::InsufficientData(format!(
                "{} labels for {} feature rows",
                labels.len(),
                table.rows.len()
            ))
            .into());
        }
        let n = train_frames.unwrap_or(table.rows.len());
        (table.rows.into_iter().zip(labels).take(n).collect(), kinds)
    };
    let detector = match kind {
        DetectorKind::Gmm => {
            let normal: Vec<_> = labelled.iter().filter(|(_, l)| !l.is_abnormal()).map(|(v, _)| *v).collect();
            let seed = derive_seed(ctx.seed, &[0x67]);
            let m = GmmModel::fit(&normal, &kinds, ctx.cfg.gmm_component_range.clone(), seed, ctx.exec)?;
            println!(
                "gmm: {} components, threshold {:.4}",
                m.chosen_components, m.threshold.threshold
            );
            Detector::Gmm(m)
        }
        DetectorKind::Svm => {
            let m = SvmModel::fit(&labelled, &kinds, ctx.cfg.svm_c, None, ctx.exec)?;
            println!("svm: {} support vectors, gamma {:.4}", m.support_vectors.len(), m.gamma);
            Detector::Svm(m)
        }
    };
    let mut w = create(&args.out)?;
    ModelFile::new(detector, ctx.header.clone()).write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_scores(mut w: impl Write, header: &[String], detector: &Detector, table: &FeatureTable) -> Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    writeln!(w, "frame,score,label")?;
    for v in &table.rows {
        match detector.score(v) {
            Some(s) => writeln!(w, "{},{s},{}", v.frame, detector.classify_frame(v))?,
            None => writeln!(w, "{},,", v.frame)?,
        }
    }
    Ok(())
}

fn score(model: &Path, features: &Path, out: &Option<PathBuf>, ctx: &Ctx) -> Result<()> {
    let m = ModelFile::read(open(model)?)?;
    let table = read_features_csv(open(features)?)?;
    check_dimensionality(&m.detector, &table.features)
        .with_context(|| format!("{} does not match {}", features.display(), model.display()))?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            write_scores(&mut w, &ctx.header, &m.detector, &table)?;
            w.flush()?;
        }
        None => write_scores(io::stdout().lock(), &ctx.header, &m.detector, &table)?,
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(&dir.join(name))?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn eval_umn(ctx: &Ctx, corpus: &Path, out: &Path, train_frames: usize, select: &FeatureSelect) -> Result<()> {
    let (clips, kinds) = corpus_clips(corpus, select)?;
    let opts = UmnOptions {
        train_frames,
        features: kinds,
        component_range: ctx.cfg.gmm_component_range.clone(),
        seed: ctx.seed,
        exec: ctx.exec,
    };
    let single = umn_protocol(&clips, Split::SingleScene, &opts)?;
    let cross = umn_protocol(&clips, Split::CrossScene, &opts)?;

    let mut rep = EvalReport::new(Protocol::FrameRoc);
    rep.detector = Some(DetectorKind::Gmm);
    rep.auc = Some(single.pooled.auc);
    rep.push("cross_scene_auc", cross.pooled.auc);
    rep.push("single_scene_mean_scene_auc", single.mean_scene_auc());
    rep.push("cross_scene_mean_scene_auc", cross.mean_scene_auc());
    for r in [&single, &cross] {
        for s in &r.scenes {
            rep.push(format!("{}_{}_auc", r.split.name(), s.scene), s.roc.auc);
            rep.push(format!("{}_{}_components", r.split.name(), s.scene), s.chosen_components);
        }
    }
    rep.push("excluded_frames", single.excluded_frames());

    let mut curves: Vec<(String, &RocCurve)> = vec![
        (Split::SingleScene.name().into(), &single.pooled),
        (Split::CrossScene.name().into(), &cross.pooled),
    ];
    for s in &single.scenes {
        curves.push((format!("{}/{}", Split::SingleScene.name(), s.scene), &s.roc));
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_file(out, "report.csv", |w| Ok(write_report_csv(w, &ctx.header, &rep)?))?;
    write_file(out, "roc.csv", |w| Ok(write_roc_csv(w, &ctx.header, &curves)?))?;
    write_file(out, "roc.svg", |w| Ok(w.write_all(roc_svg(&curves).as_bytes())?))?;
    print!("{rep}");
    Ok(())
}

fn cv_options(ctx: &Ctx, args: &CvArgs, features: Vec<FeatureKind>) -> Result<CvOptions> {
    if args.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    Ok(CvOptions {
        folds: args.folds,
        detector: args.detector,
        features,
        seed: ctx.seed,
        svm_c: ctx.cfg.svm_c,
        svm_gamma: None,
        component_range: ctx.cfg.gmm_component_range.clone(),
        exec: ctx.exec,
    })
}

fn cv_report(args: &CvArgs, r: &CvResult) -> EvalReport {
    let mut rep = EvalReport::new(Protocol::ClipCv);
    rep.detector = Some(args.detector);
    rep.fold_accuracies = r.fold_accuracies.clone();
    rep.mean_accuracy = Some(r.mean_accuracy);
    rep.ci_half_width = Some(r.ci_half_width);
    rep.push("refolds", r.refolds);
    rep
}

fn write_predictions(w: &mut impl Write, header: &[String], clips: &[LabeledClip], r: &CvResult) -> Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    writeln!(w, "clip,truth,predicted,fold")?;
    for ((c, p), f) in clips.iter().zip(&r.predictions).zip(&r.assignment) {
        writeln!(w, "{},{},{p},{}", c.name, c.label, f + 1)?;
    }
    Ok(())
}

fn eval_cv(ctx: &Ctx, args: &CvArgs, select: &FeatureSelect) -> Result<()> {
    let (clips, kinds) = corpus_clips(&args.corpus, select)?;
    let r = clip_cv_protocol(&clips, &cv_options(ctx, args, kinds)?)?;
    let rep = cv_report(args, &r);
    let out = &args.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_file(out, "report.csv", |w| Ok(write_report_csv(w, &ctx.header, &rep)?))?;
    write_file(out, "folds.csv", |w| Ok(write_folds_csv(w, &ctx.header, &r.fold_accuracies)?))?;
    write_file(out, "predictions.csv", |w| write_predictions(w, &ctx.header, &clips, &r))?;
    print!("{rep}");
    Ok(())
}

fn ablate(ctx: &Ctx, args: &CvArgs) -> Result<()> {
    let (clips, kinds) = corpus_clips(&args.corpus, &FeatureSelect { exclude: Vec::new() })?;
    let opts = cv_options(ctx, args, kinds)?;
    let full = clip_cv_protocol(&clips, &opts)?;
    let mut rep = cv_report(args, &full);
    for (f, r) in ablation(&clips, &opts)? {
        rep.push(format!("drop_without_{}", f.name()), full.mean_accuracy - r.mean_accuracy);
        rep.ablation.push((f, r.mean_accuracy));
    }
    let out = &args.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_file(out, "report.csv", |w| Ok(write_report_csv(w, &ctx.header, &rep)?))?;
    print!("{rep}");
    Ok(())
}

fn bench(
    ctx: &Ctx,
    input: Option<&Path>,
    r: holocrowd::synth::Recipe,
    format: FrameFormat,
    parallel: bool,
    out: Option<&Path>,
) -> Result<()> {
    let exec = if parallel { Execution::best_available() } else { Execution::Sequential };
    let sequences: Vec<Vec<Frame>> = match input {
        Some(p) => vec![open_sequence(p, format, dims(&ctx.cfg))?.collect::<holocrowd::Result<_>>()?],
        None => {
            // render clips until enough frames are timed
            let mut seqs = Vec::new();
            let mut timed = 0;
            for clip in recipe(r, ctx.seed) {
                let sim = simulate(&clip.spec)?;
                let frames: Vec<Frame> = render(&sim).collect::<holocrowd::Result<_>>()?;
                timed += frames.len().saturating_sub(holocrowd::eval::BENCH_WARMUP_FRAMES);
                seqs.push(frames);
                if timed >= 2 * holocrowd::eval::MIN_TIMED_FRAMES {
                    break;
                }
            }
            seqs
        }
    };
    let res = bench_throughput(&sequences, &ctx.pipeline().with_exec(exec), None)?;
    let mut rep = EvalReport::new(Protocol::Throughput);
    rep.fps = Some(res.fps);
    rep.push("timed_frames", res.timed_frames);
    rep.push("seconds", format!("{:.3}", res.seconds));
    rep.push("mean_tracked_points", format!("{:.1}", res.mean_tracked_points));
    rep.push("execution", if exec.is_parallel() { "parallel" } else { "sequential" });
    if let Some(p) = out {
        let mut w = create(p)?;
        write_report_csv(&mut w, &ctx.header, &rep)?;
        w.flush()?;
    }
    println!("fps {:.2}", res.fps);
    print!("{rep}");
    Ok(())
}
