//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dsi_core::data::{
    generate_synthetic_corpus, load_corpus, load_queries, CorpusFormat, Manifest, RunConfig, RunDir,
};
use dsi_core::eval::plot::{hits_curve_svg, loss_curve_svg, sweep_svg};
use dsi_core::eval::{
    evaluate_bm25, evaluate_doctquery, evaluate_model, generate, run_dsi, run_dsi_qg, run_dsi_s, run_qg, sweep_n,
    EvalReport, StageResult, Workspace,
};
use dsi_core::model::{BeamOptions, Seq2SeqModel};
use dsi_core::text::Vocabulary;
use dsi_core::train::{
    build_dsi_dataset, build_dsi_s_dataset, build_qg_dataset, read_generated, write_dataset, write_generated,
    TracePoint, TrainTrace, TrainingExample,
};

use crate::settings::ConfigBuilder;
use crate::{Cli, Command, GlobalArgs, TrainFlags};

/// Writes through a `.partial` sibling and renames on success, so a failed
/// stage never leaves a truncated artifact under the final name.
fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = PathBuf::from(format!("{}.partial", path.display()));
    let result = (|| -> Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e).with_context(|| format!("writing {}", path.display()))
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn train_overrides(mut b: ConfigBuilder, section: &str, flags: &TrainFlags) -> Result<ConfigBuilder> {
    let key = |k: &str| format!("{section}.{k}");
    if let Some(v) = flags.total_steps {
        b = b.set(&key("total_steps"), v as i64)?;
    }
    if let Some(v) = flags.batch_size {
        b = b.set(&key("batch_size"), v as i64)?;
    }
    if let Some(v) = flags.lr {
        b = b.set(&key("lr"), v)?;
    }
    if let Some(v) = flags.warmup_steps {
        b = b.set(&key("warmup_steps"), v as i64)?;
    }
    if let Some(v) = flags.eval_every {
        b = b.set(&key("eval_every"), v as i64)?;
    }
    if let Some(v) = flags.early_stop_patience {
        b = b.set(&key("early_stop_patience"), v as i64)?;
    }
    Ok(b)
}

fn build_config(global: &GlobalArgs, command: &Command, run_root: &Path) -> Result<RunConfig> {
    let mut b = ConfigBuilder::reference()?;
    let run_config = run_root.join("config.toml");
    if let Some(path) = &global.config {
        b = b.file(path)?;
    } else if run_config.exists() {
        b = b.file(&run_config)?;
    }
    for s in &global.sets {
        b = b.assign(s)?;
    }
    if let Some(seed) = global.seed {
        b = b.set("seed", seed as i64)?;
    }
    b = match command {
        Command::Synth {
            num_docs,
            mismatch_strength,
            languages,
            synth_seed,
        } => {
            if let Some(v) = num_docs {
                b = b.set("synth.num_docs", *v as i64)?;
            }
            if let Some(v) = mismatch_strength {
                b = b.set("synth.mismatch_strength", *v)?;
            }
            if let Some(v) = languages {
                let list: Vec<toml::Value> = v.iter().filter(|s| !s.is_empty()).map(|s| s.clone().into()).collect();
                b = b.set("synth.languages", list)?;
            }
            if let Some(v) = synth_seed {
                b = b.set("synth.seed", *v as i64)?;
            }
            b
        }
        Command::TrainDsi(f) => train_overrides(b, "train_dsi", f)?,
        Command::TrainDsiS(f) => train_overrides(b, "train_dsi", f)?,
        Command::TrainQg(f) => train_overrides(b, "train_qg", f)?,
        Command::TrainDsiQg { train, .. } | Command::SweepN { train, .. } => train_overrides(b, "train_dsi_qg", train)?,
        Command::Genq { n, k } => {
            if let Some(v) = n {
                b = b.set("genq.n", *v as i64)?;
            }
            if let Some(v) = k {
                b = b.set("genq.k", *v as i64)?;
            }
            b
        }
        Command::Retrieve { beam_width, .. } | Command::Eval { beam_width, .. } => match beam_width {
            Some(v) => b.set("eval.beam_width", *v as i64)?,
            None => b,
        },
        Command::BenchBm25 { k1, b: bb, .. } => {
            if let Some(v) = k1 {
                b = b.set("bm25.k1", *v)?;
            }
            if let Some(v) = bb {
                b = b.set("bm25.b", *v)?;
            }
            b
        }
        Command::Report => b,
    };
    Ok(b.build()?)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth { .. } => "synth",
        Command::TrainDsi(_) => "train-dsi",
        Command::TrainDsiS(_) => "train-dsi-s",
        Command::TrainQg(_) => "train-qg",
        Command::Genq { .. } => "genq",
        Command::TrainDsiQg { .. } => "train-dsi-qg",
        Command::Retrieve { .. } => "retrieve",
        Command::Eval { .. } => "eval",
        Command::SweepN { .. } => "sweep-n",
        Command::BenchBm25 { .. } => "bench-bm25",
        Command::Report => "report",
    }
}

/// State shared by every stage of one invocation.
struct Stage {
    run: RunDir,
    config: RunConfig,
    manifest: Manifest,
    corpus_path: PathBuf,
    format: CorpusFormat,
}

impl Stage {
    fn workspace(&mut self) -> Result<Workspace> {
        let corpus = load_corpus(&self.corpus_path, self.format)
            .with_context(|| format!("loading corpus from {}", self.corpus_path.display()))?;
        self.manifest.add_input(&self.corpus_path)?;
        let vocab_path = self.run.checkpoints().join("vocab.txt");
        let ws = if vocab_path.exists() {
            let vocab = Vocabulary::read(BufReader::new(File::open(&vocab_path)?))?;
            self.manifest.add_input(&vocab_path)?;
            Workspace::with_vocab(corpus, vocab, &self.config)?
        } else {
            let ws = Workspace::new(corpus, &self.config)?;
            write_atomic(&vocab_path, |w| Ok(ws.vocab.write(w)?))?;
            ws
        };
        Ok(ws)
    }

    fn seed(&mut self, stage: &str) -> u64 {
        let s = self.config.stage_seed(stage);
        self.manifest.seed(stage, s);
        s
    }

    fn checkpoint_path(&self, model: &str) -> PathBuf {
        let p = Path::new(model);
        if p.extension().is_some() || p.components().count() > 1 {
            p.to_path_buf()
        } else {
            self.run.checkpoints().join(format!("{model}.ckpt"))
        }
    }

    fn load_model(&mut self, model: &str) -> Result<Seq2SeqModel> {
        let path = self.checkpoint_path(model);
        if !path.is_file() {
            bail!("checkpoint {} not found", path.display());
        }
        let m = Seq2SeqModel::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        self.manifest.add_input(&path)?;
        Ok(m)
    }

    fn generated_path(&self, n: usize) -> PathBuf {
        self.run.datasets().join(format!("generated_n{n}.jsonl"))
    }

    fn write_dataset(&self, name: &str, data: &[TrainingExample]) -> Result<()> {
        write_atomic(&self.run.datasets().join(format!("{name}.jsonl")), |w| Ok(write_dataset(w, data)?))
    }

    fn write_trace(&self, name: &str, trace: &TrainTrace) -> Result<()> {
        write_atomic(&self.run.reports().join(format!("{name}.trace.csv")), |w| Ok(trace.write_csv(w)?))?;
        let labelled = [(name.to_string(), trace)];
        write_text(&self.run.plots().join(format!("{name}.loss.svg")), &loss_curve_svg(&labelled))?;
        if trace.points.iter().any(|p| p.dev_hits_at_10.is_some()) {
            write_text(&self.run.plots().join(format!("{name}.hits.svg")), &hits_curve_svg(&labelled))?;
        }
        Ok(())
    }

    fn write_report(&self, name: &str, report: &EvalReport) -> Result<()> {
        write_atomic(&self.run.reports().join(format!("{name}.eval.csv")), |w| Ok(report.write_csv(w)?))?;
        write_atomic(&self.run.reports().join(format!("{name}.summary.json")), |w| {
            Ok(report.write_json_summary(w)?)
        })?;
        println!(
            "{name}: Hits@1 {:.4}  Hits@10 {:.4}  ({} queries)",
            report.hits_at_1,
            report.hits_at_10,
            report.rows.len()
        );
        Ok(())
    }

    fn finish_training(&self, name: &str, result: &StageResult) -> Result<()> {
        let ckpt = self.run.checkpoints().join(format!("{name}.ckpt"));
        result.model.save(&ckpt).with_context(|| format!("saving {}", ckpt.display()))?;
        self.write_trace(name, &result.trace)?;
        self.write_report(name, &result.report)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let name = command_name(&cli.command);
    let run = RunDir::open(&cli.global.runs_dir, &cli.global.run_id)?;
    let config = build_config(&cli.global, &cli.command, run.root())?;
    let format = CorpusFormat::parse(&cli.global.format).context("unknown corpus format")?;
    let corpus_path = cli.global.corpus.clone().unwrap_or_else(|| run.root().join("corpus"));
    let manifest = Manifest::new(&cli.global.run_id, name, serde_json::to_value(&config)?);
    let mut stage = Stage {
        run,
        config,
        manifest,
        corpus_path,
        format,
    };
    dispatch(&mut stage, cli.command)?;
    let path = stage.run.manifest_path(name);
    stage.manifest.write(&path)?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

fn dispatch(stage: &mut Stage, command: Command) -> Result<()> {
    match command {
        Command::Synth { .. } => synth(stage),
        Command::TrainDsi(_) => train_docid(stage, "dsi"),
        Command::TrainDsiS(_) => train_docid(stage, "dsi-s"),
        Command::TrainQg(_) => train_qg(stage),
        Command::Genq { .. } => genq(stage),
        Command::TrainDsiQg { n, queries, .. } => train_dsi_qg(stage, n, queries),
        Command::Retrieve { model, query, queries, .. } => retrieve(stage, &model, query, queries),
        Command::Eval { model, queries, .. } => eval(stage, &model, queries),
        Command::SweepN { ns, .. } => sweep(stage, &ns),
        Command::BenchBm25 { n, .. } => bench_bm25(stage, n),
        Command::Report => report(stage),
    }
}

fn synth(stage: &mut Stage) -> Result<()> {
    let corpus = generate_synthetic_corpus(&stage.config.synth)?;
    stage.manifest.seed("synth", stage.config.synth.seed);
    corpus.save(&stage.corpus_path, stage.format)?;
    write_text(&stage.run.root().join("config.toml"), &stage.config.to_toml_string()?)?;
    println!(
        "corpus {}: {} documents, {} train queries, {} dev queries -> {}",
        corpus.id,
        corpus.documents.len(),
        corpus.train_queries.len(),
        corpus.dev_queries.len(),
        stage.corpus_path.display()
    );
    Ok(())
}

fn train_docid(stage: &mut Stage, name: &str) -> Result<()> {
    let ws = stage.workspace()?;
    let seed = stage.seed(&format!("train-{name}"));
    let result = if name == "dsi" {
        stage.write_dataset(name, &build_dsi_dataset(&ws.corpus.documents, &ws.vocab, &ws.limits)?)?;
        run_dsi(&ws, &stage.config, seed)?
    } else {
        let data = build_dsi_s_dataset(&ws.corpus.documents, &ws.corpus.train_queries, &ws.vocab, &ws.limits)?;
        stage.write_dataset(name, &data)?;
        run_dsi_s(&ws, &stage.config, seed)?
    };
    stage.finish_training(name, &result)
}

fn train_qg(stage: &mut Stage) -> Result<()> {
    let ws = stage.workspace()?;
    let seed = stage.seed("train-qg");
    let data = build_qg_dataset(&ws.corpus.documents, &ws.corpus.train_queries, &ws.vocab, &ws.limits)?;
    stage.write_dataset("qg", &data)?;
    let (model, trace) = run_qg(&ws, &stage.config, seed)?;
    let ckpt = stage.run.checkpoints().join("qg.ckpt");
    model.save(&ckpt)?;
    stage.write_trace("qg", &trace)?;
    if let Some(p) = trace.final_point() {
        println!("qg: final train loss {:.4} after {} steps", p.train_loss, p.step);
    }
    Ok(())
}

fn genq(stage: &mut Stage) -> Result<()> {
    let ws = stage.workspace()?;
    let qg = stage.load_model("qg")?;
    let (n, k) = (stage.config.genq.n, stage.config.genq.k);
    let seed = stage.seed("genq");
    let generated = generate(&ws, &qg, n, k, seed)?;
    let path = stage.generated_path(n);
    write_atomic(&path, |w| Ok(write_generated(w, &generated)?))?;
    println!("generated {} queries (n={n}, k={k}) -> {}", generated.len(), path.display());
    Ok(())
}

fn train_dsi_qg(stage: &mut Stage, n: Option<usize>, queries: Option<PathBuf>) -> Result<()> {
    let n = n.unwrap_or(stage.config.genq.n);
    let path = queries.unwrap_or_else(|| stage.generated_path(n));
    if !path.is_file() {
        bail!("generated queries {} not found; run `genq --n {n}` first", path.display());
    }
    let generated = read_generated(BufReader::new(File::open(&path)?))?;
    stage.manifest.add_input(&path)?;
    let ws = stage.workspace()?;
    let seed = stage.seed("train-dsi-qg");
    let result = run_dsi_qg(&ws, &stage.config, &generated, Some(n), seed)?;
    stage.finish_training(&format!("dsi-qg-n{n}"), &result)
}

fn retrieve(stage: &mut Stage, model_name: &str, mut texts: Vec<String>, file: Option<PathBuf>) -> Result<()> {
    if let Some(path) = &file {
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                texts.push(line);
            }
        }
        stage.manifest.add_input(path)?;
    }
    let model = stage.load_model(model_name)?;
    let ws = stage.workspace()?;
    let beam = BeamOptions::new(stage.config.eval.beam_width);
    let mut lines = Vec::new();
    for text in &texts {
        let tokens = ws.vocab.tokenize(text, ws.limits.truncate_len);
        let ranked = model.beam_search_docids(&tokens, &ws.trie, beam)?;
        let results: Vec<_> = ranked
            .entries()
            .iter()
            .map(|e| serde_json::json!({"docid": e.docid, "score": e.score}))
            .collect();
        let line = serde_json::to_string(&serde_json::json!({"query": text, "results": results}))?;
        println!("{line}");
        lines.push(line);
    }
    let stem = Path::new(model_name).file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    write_text(&stage.run.reports().join(format!("retrieve.{stem}.jsonl")), &(lines.join("\n") + "\n"))
}

fn eval(stage: &mut Stage, model_name: &str, queries: Option<PathBuf>) -> Result<()> {
    // load everything first so a failure leaves no report behind
    let model = stage.load_model(model_name)?;
    let ws = stage.workspace()?;
    let eval_queries = match &queries {
        Some(path) => {
            let q = load_queries(path, stage.format)?;
            stage.manifest.add_input(path)?;
            ws.eval_queries(&q)
        }
        None => ws.dev_queries.clone(),
    };
    let stem = Path::new(model_name).file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
    let meta = ws.meta(&stem, None, stage.config.seed);
    let report = evaluate_model(&model, &ws.trie, &eval_queries, stage.config.eval.beam_width, meta)?;
    stage.write_report(&stem, &report)
}

fn sweep(stage: &mut Stage, ns: &[usize]) -> Result<()> {
    let ws = stage.workspace()?;
    let qg = stage.load_model("qg")?;
    let seed = stage.seed("sweep-n");
    let result = sweep_n(&ws, &qg, ns, &stage.config, seed)?;
    write_atomic(&stage.run.reports().join("sweep.csv"), |w| Ok(result.write_csv(w)?))?;
    write_text(&stage.run.plots().join("sweep.svg"), &sweep_svg(&result))?;
    let labelled: Vec<(String, &TrainTrace)> =
        result.rows.iter().zip(&result.traces).map(|(r, t)| (format!("n={}", r.n), t)).collect();
    write_text(&stage.run.plots().join("sweep.hits.svg"), &hits_curve_svg(&labelled))?;
    write_text(&stage.run.plots().join("sweep.loss.svg"), &loss_curve_svg(&labelled))?;
    println!("{:>4} {:>8} {:>8} {:>10}", "n", "Hits@1", "Hits@10", "generated");
    for r in &result.rows {
        println!("{:>4} {:>8.4} {:>8.4} {:>10}", r.n, r.hits_at_1, r.hits_at_10, r.num_generated);
    }
    Ok(())
}

fn bench_bm25(stage: &mut Stage, n: Option<usize>) -> Result<()> {
    let ws = stage.workspace()?;
    let report = evaluate_bm25(&ws, &stage.config, &ws.corpus.documents, "bm25")?;
    stage.write_report("bm25", &report)?;
    let n = n.unwrap_or(stage.config.genq.n);
    let path = stage.generated_path(n);
    if path.is_file() {
        let generated = read_generated(BufReader::new(File::open(&path)?))?;
        stage.manifest.add_input(&path)?;
        let report = evaluate_doctquery(&ws, &stage.config, &generated)?;
        stage.write_report(&format!("doctquery-n{n}"), &report)?;
    } else {
        eprintln!("no generated queries at {}; skipping docTquery", path.display());
    }
    Ok(())
}

fn sorted_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(suffix)))
        .collect();
    out.sort();
    Ok(out)
}

fn report(stage: &mut Stage) -> Result<()> {
    let reports = stage.run.reports();
    let mut rows = Vec::new();
    for path in sorted_files(&reports, ".summary.json")? {
        let v: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(&path)?))
            .with_context(|| format!("parsing {}", path.display()))?;
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default().trim_end_matches(".summary.json");
        rows.push((
            name.to_string(),
            v["hits_at_1"].as_f64().unwrap_or(f64::NAN),
            v["hits_at_10"].as_f64().unwrap_or(f64::NAN),
            v["num_queries"].as_u64().unwrap_or(0),
        ));
        stage.manifest.add_input(&path)?;
    }
    write_atomic(&reports.join("summary.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "hits_at_1", "hits_at_10", "num_queries"])?;
        for (name, h1, h10, nq) in &rows {
            out.write_record([name.clone(), h1.to_string(), h10.to_string(), nq.to_string()])?;
        }
        out.flush()?;
        Ok(())
    })?;
    println!("{:<20} {:>8} {:>8} {:>8}", "model", "Hits@1", "Hits@10", "queries");
    for (name, h1, h10, nq) in &rows {
        println!("{name:<20} {h1:>8.4} {h10:>8.4} {nq:>8}");
    }

    let mut traces = Vec::new();
    for path in sorted_files(&reports, ".trace.csv")? {
        let mut reader = csv::Reader::from_path(&path)?;
        let points = reader
            .deserialize::<TracePoint>()
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("parsing {}", path.display()))?;
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default().trim_end_matches(".trace.csv");
        traces.push((
            name.to_string(),
            TrainTrace {
                points,
                stopped_early: false,
            },
        ));
    }
    if !traces.is_empty() {
        let labelled: Vec<(String, &TrainTrace)> = traces.iter().map(|(n, t)| (n.clone(), t)).collect();
        write_text(&stage.run.plots().join("learning_curves.svg"), &hits_curve_svg(&labelled))?;
        write_text(&stage.run.plots().join("loss_curves.svg"), &loss_curve_svg(&labelled))?;
    }
    Ok(())
}
