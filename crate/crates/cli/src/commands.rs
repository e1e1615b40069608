use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use scgfm::diagnostics::{bench_sliced, rewire_diagnostic, sgw_correlation, surrogate_vs_barycenter, SurrogateOptions};
use scgfm::embed::{embed_graphs, read_binary, read_jsonl, write_binary, write_jsonl, EmbeddingRecord};
use scgfm::eval::{dominant_component, evaluate_few_shot, fisher_ratio, isometry_study, EmbeddingLayout, EpisodeConfig, LabeledPool};
use scgfm::graph::to_mm_space;
use scgfm::ot::{EntropicOptions, GwSolver, SliceSet, DEFAULT_EMBED_DIM};
use scgfm::stats::STAT_DIM;
use scgfm::trainer::{grad_check, pretrain_with, Checkpoint};

use crate::args::*;
use crate::data;
use crate::output::{create, json_line, write_jsonl as write_rows};

fn load_checkpoint(args: &CheckpointArgs) -> Result<(Checkpoint, GwSolver)> {
    let ckpt = Checkpoint::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let mut solver = ckpt.config.gw_solver()?;
    if let Some(kind) = args.solver {
        solver.kind = kind;
    }
    Ok((ckpt, solver))
}

fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let records = if path.extension().is_some_and(|e| e == "bin") {
        read_binary(path)
    } else {
        read_jsonl(path)
    };
    records.with_context(|| format!("reading {}", path.display()))
}

pub fn pretrain(args: PretrainArgs) -> Result<ExitCode> {
    let cfg = args.train.resolve()?;
    let corpus = data::load(&args.data)?;
    let metrics_path = args.metrics.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".metrics.jsonl");
        p.into()
    });
    let mut metrics = create(&metrics_path)?;
    let mut write_error = None;
    let ckpt = pretrain_with(&corpus, &cfg, |rec, _, secs| {
        let row = json!({
            "epoch": rec.epoch, "gw": rec.gw, "rec": rec.rec, "div": rec.div, "total": rec.total, "seconds": secs,
        });
        if let Err(e) = json_line(&mut metrics, &row).and_then(|_| Ok(metrics.flush()?)) {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e.context(format!("writing {}", metrics_path.display())));
    }
    ckpt.save(&args.out)?;
    match ckpt.log.last() {
        Some(last) => println!(
            "trained {} graphs for {} epochs: gw {:.6} rec {:.6} div {:.6} total {:.6}",
            corpus.len(),
            ckpt.log.len(),
            last.gw,
            last.rec,
            last.div,
            last.total
        ),
        None => println!("wrote untrained checkpoint (0 epochs)"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn embed(args: EmbedArgs) -> Result<ExitCode> {
    let (ckpt, solver) = load_checkpoint(&args.ckpt)?;
    let graphs = data::load(&args.data)?;
    let embeddings = embed_graphs(&graphs, &ckpt, &solver)?;
    let records: Vec<EmbeddingRecord> = graphs.iter().zip(&embeddings).map(|(g, e)| EmbeddingRecord::new(g, e)).collect();
    match args.output_format {
        EmbeddingFormat::Jsonl => write_jsonl(&args.out, &records)?,
        EmbeddingFormat::Bin => write_binary(&args.out, &records)?,
    }
    println!("embedded {} graphs into {} dimensions", records.len(), records[0].z.len());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(args: EvalArgs) -> Result<ExitCode> {
    let records = read_embeddings(&args.input.embeddings)?;
    let pool = LabeledPool::from_records(&records)?;
    let cfg = EpisodeConfig {
        n_way: args.ways,
        k_shot: args.shots,
        queries: args.queries,
        runs: args.runs,
        seed: args.seed,
        standardize: !args.no_standardize,
    };
    let report = evaluate_few_shot(&pool, &cfg)?;
    if !report.excluded_classes.is_empty() {
        eprintln!(
            "warning: classes {:?} have fewer than {} items and were excluded",
            report.excluded_classes,
            args.shots + args.queries
        );
    }
    let dataset = args.dataset.clone().unwrap_or_else(|| {
        args.input
            .embeddings
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
    });
    let mut rows: Vec<serde_json::Value> = report
        .runs
        .iter()
        .map(|r| {
            json!({
                "task": args.task, "dataset": dataset, "n_way": r.n_way, "k_shot": r.k_shot,
                "run": r.run, "accuracy": r.accuracy, "standardize": r.standardize,
            })
        })
        .collect();
    rows.push(json!({
        "task": args.task, "dataset": dataset, "n_way": cfg.n_way, "k_shot": cfg.k_shot,
        "runs": report.runs.len(), "mean": report.mean, "std": report.std, "standardize": cfg.standardize,
    }));
    match &args.out {
        Some(path) => {
            write_rows(path, &rows)?;
            println!("accuracy {:.4} ± {:.4} over {} runs", report.mean, report.std, report.runs.len());
        }
        None => {
            let mut out = std::io::stdout().lock();
            for r in &rows {
                json_line(&mut out, r)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn diagnose(d: Diagnose) -> Result<ExitCode> {
    match d {
        Diagnose::Isometry(a) => isometry(a),
        Diagnose::SgwCorr(a) => sgw_corr(a),
        Diagnose::Surrogate(a) => surrogate(a),
        Diagnose::Rewire(a) => rewire(a),
        Diagnose::Fisher(a) => fisher(a),
        Diagnose::Gradcheck(a) => gradcheck(a),
        Diagnose::Bench(a) => bench(a),
    }
}

fn isometry(a: IsometryArgs) -> Result<ExitCode> {
    let (ckpt, solver) = load_checkpoint(&a.ckpt)?;
    let graphs = data::load(&a.data)?;
    let reference = GwSolver::entropic(EntropicOptions::default().with_epsilon(ckpt.config.epsilon));
    let report = isometry_study(&graphs, &ckpt, &solver, &reference, a.pairs, a.seed)?;
    let mut w = create(&a.out)?;
    writeln!(w, "i,j,gw_distance,latent_distance")?;
    for p in &report.pairs {
        writeln!(w, "{},{},{:e},{:e}", p.i, p.j, p.gw_distance, p.latent_distance)?;
    }
    w.flush()?;
    println!(
        "{}",
        json!({"pairs": report.pairs.len(), "rho": report.rho, "p_value": report.p_value, "t_test_p_value": report.t_test_p_value})
    );
    Ok(ExitCode::SUCCESS)
}

fn sgw_corr(a: SgwCorrArgs) -> Result<ExitCode> {
    let graphs = data::load(&a.data)?;
    let spaces = graphs.iter().map(to_mm_space).collect::<scgfm::Result<Vec<_>>>()?;
    let slices = SliceSet::new(a.slices, DEFAULT_EMBED_DIM, a.seed)?;
    let corr = sgw_correlation(&spaces, a.pairs, &slices, &EntropicOptions::default().with_epsilon(a.epsilon), a.seed)?;
    let mut w = create(&a.out)?;
    writeln!(w, "i,j,sliced,entropic")?;
    for p in &corr.pairs {
        writeln!(w, "{},{},{:e},{:e}", p.i, p.j, p.sliced, p.entropic)?;
    }
    w.flush()?;
    println!("{}", json!({"pairs": corr.pairs.len(), "rho": corr.rho}));
    Ok(ExitCode::SUCCESS)
}

fn surrogate(a: SurrogateArgs) -> Result<ExitCode> {
    let (ckpt, solver) = load_checkpoint(&a.ckpt)?;
    let graphs = data::load(&a.data)?;
    let spaces = graphs.iter().take(a.graphs).map(to_mm_space).collect::<scgfm::Result<Vec<_>>>()?;
    let opts = SurrogateOptions {
        coordinates: solver.clone(),
        barycenter: EntropicOptions::default().with_epsilon(ckpt.config.epsilon),
        iterations: a.iterations,
        slices: (*solver.slices).clone(),
    };
    let report = surrogate_vs_barycenter(&spaces, &ckpt.dictionary, &opts)?;
    let mut w = create(&a.out)?;
    for r in &report.rows {
        json_line(&mut w, r)?;
    }
    let summary = json!({
        "summary": true,
        "surrogate_mean_error": report.surrogate_mean_error,
        "barycenter_mean_error": report.barycenter_mean_error,
        "surrogate_mean_secs": report.surrogate_mean_secs,
        "barycenter_mean_secs": report.barycenter_mean_secs,
    });
    json_line(&mut w, &summary)?;
    w.flush()?;
    println!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn rewire(a: RewireArgs) -> Result<ExitCode> {
    let (ckpt, solver) = load_checkpoint(&a.ckpt)?;
    let graphs = data::load(&a.data)?;
    if let Some(bad) = a.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        bail!("rewiring probability {bad} outside [0, 1]");
    }
    let rows = rewire_diagnostic(&graphs, &ckpt, &solver, &a.epsilons, a.seed)?;
    write_rows(&a.out, &rows)?;
    for r in &rows {
        println!("epsilon {:.3}: cosine distance {:.6}, l2 {:.6}", r.epsilon, r.mean_cosine_distance, r.mean_l2_distance);
    }
    Ok(ExitCode::SUCCESS)
}

fn fisher(a: FisherArgs) -> Result<ExitCode> {
    let ckpt = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let records = read_embeddings(&a.input.embeddings)?;
    let pool = LabeledPool::from_records(&records)?;
    let k = ckpt.dictionary.k();
    let width = pool.vectors.ncols();
    let features = width
        .checked_sub(k + STAT_DIM)
        .ok_or_else(|| anyhow!("embeddings have {width} dimensions, fewer than K + statistics = {}", k + STAT_DIM))?;
    let layout = EmbeddingLayout {
        k,
        stats: STAT_DIM,
        features,
    };
    let (dominant, ratios) = dominant_component(&pool, layout)?;
    let mut rows: Vec<serde_json::Value> = ratios
        .iter()
        .map(|(c, r)| json!({"component": c.name(), "ratio": r, "dominant": *c == dominant}))
        .collect();
    let full = fisher_ratio(&pool, layout, scgfm::eval::Component::Full)?;
    rows.push(json!({"component": "full", "ratio": full, "dominant": false}));
    write_rows(&a.out, &rows)?;
    for r in &rows {
        println!("{r}");
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let cfg = a.train.resolve()?;
    let report = grad_check(&cfg, a.check_seed)?;
    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    for c in &report.components {
        eprintln!(
            "{:<12} {:>5} parameters  max rel err {:.2e}  (tol {:.0e})  {}",
            c.component,
            c.parameters,
            c.max_rel_error,
            c.tolerance,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn bench(a: BenchArgs) -> Result<ExitCode> {
    let slices = SliceSet::new(a.slices, DEFAULT_EMBED_DIM, a.seed)?;
    let rows = bench_sliced(&a.sizes, a.degree, a.m, &slices, a.reps, a.seed)?;
    let mut w = create(&a.out)?;
    writeln!(w, "n,edges,seconds,ratio")?;
    for r in &rows {
        let ratio = r.ratio.map_or_else(String::new, |v| format!("{v:.4}"));
        writeln!(w, "{},{},{:.6},{ratio}", r.n, r.edges, r.seconds)?;
        println!("n {:>6}  edges {:>7}  {:.4}s  {ratio}", r.n, r.edges, r.seconds);
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}
