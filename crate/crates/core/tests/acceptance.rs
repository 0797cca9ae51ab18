//! Acceptance runner. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.
//!
//! The retrieval experiments (criteria 3 and 5 to 9) share one set of
//! trained models on the reference synthetic corpus, built once up front.


use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use dsi_core::data::{generate_synthetic_corpus, load_documents, CorpusFormat, Manifest, RunConfig, SyntheticSpec};
use dsi_core::eval::{
    bm25_score, evaluate_bm25, evaluate_doctquery, evaluate_model, generate, hits_at_k, hits_at_k_any, retrieve_all,
    run_dsi, run_dsi_qg, run_qg, sweep_n, Bm25Params, InvertedIndex, RankedList, StageResult, SweepResult,
    Workspace,
};
use dsi_core::model::{
    beam_search_docids, sample_top_k, sample_top_k_traced, top_k_distribution, BeamOptions, ModelConfig,
    ModelError, NextTokenLogProbs, Seq2SeqModel,
};
use dsi_core::seeds::stage_seed;
use dsi_core::text::{encode_docid, DocidTrie, Query, TokenId, EOS};
use dsi_core::train::{build_dsi_qg_dataset, train};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];
const SWEEP: [usize; 4] = [1, 2, 4, 8];

type Outcome = Result<String, String>;

fn log(msg: &str) {
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{msg}");
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn elapsed(t: Instant) -> String {
    format!("{:.1}s", t.elapsed().as_secs_f64())
}

// ---------------------------------------------------------------------------
// shared experiments

struct SeedRun {
    dsi: StageResult,
    sweep: SweepResult,
    cross_dsi: StageResult,
    cross_dsi_qg: StageResult,
    generated_n8: Vec<Query>,
}

struct Experiments {
    config: RunConfig,
    mono: Workspace,
    cross: Workspace,
    runs: Vec<SeedRun>,
    duration: Duration,
}

fn run_experiments() -> Result<Experiments, String> {
    let start = Instant::now();
    let config = RunConfig::reference();
    let err = |e: dsi_core::eval::EvalError| e.to_string();
    let mono_corpus = generate_synthetic_corpus(&SyntheticSpec::reference()).map_err(|e| e.to_string())?;
    let cross_corpus =
        generate_synthetic_corpus(&SyntheticSpec::reference_cross_lingual()).map_err(|e| e.to_string())?;
    let mono = Workspace::new(mono_corpus, &config).map_err(err)?;
    let cross = Workspace::new(cross_corpus, &config).map_err(err)?;
    let mut runs = Vec::new();
    for seed in SEEDS {
        let t = Instant::now();
        let dsi = run_dsi(&mono, &config, seed).map_err(err)?;
        log(&format!("  seed {seed}: DSI Hits@10 {:.2} ({})", dsi.report.hits_at_10, elapsed(t)));
        let t = Instant::now();
        let (qg, _) = run_qg(&mono, &config, seed).map_err(err)?;
        log(&format!("  seed {seed}: query generator trained ({})", elapsed(t)));
        let t = Instant::now();
        let sweep = sweep_n(&mono, &qg, &SWEEP, &config, seed).map_err(err)?;
        let row_text: Vec<String> = sweep.rows.iter().map(|r| format!("n={}:{:.2}", r.n, r.hits_at_10)).collect();
        log(&format!("  seed {seed}: DSI-QG Hits@10 {} ({})", row_text.join(" "), elapsed(t)));
        let generated_n8 = generate(&mono, &qg, 8, config.genq.k, stage_seed(seed, "genq")).map_err(err)?;

        let t = Instant::now();
        let cross_dsi = run_dsi(&cross, &config, seed).map_err(err)?;
        let (cross_qg, _) = run_qg(&cross, &config, seed).map_err(err)?;
        let cross_gen = generate(&cross, &cross_qg, 8, config.genq.k, stage_seed(seed, "genq")).map_err(err)?;
        let cross_dsi_qg = run_dsi_qg(&cross, &config, &cross_gen, Some(8), seed).map_err(err)?;
        log(&format!(
            "  seed {seed}: cross-lingual DSI {:.2}, DSI-QG n=8 {:.2} ({})",
            cross_dsi.report.hits_at_10,
            cross_dsi_qg.report.hits_at_10,
            elapsed(t)
        ));
        runs.push(SeedRun {
            dsi,
            sweep,
            cross_dsi,
            cross_dsi_qg,
            generated_n8,
        });
    }
    Ok(Experiments {
        config,
        mono,
        cross,
        runs,
        duration: start.elapsed(),
    })
}

impl Experiments {
    fn sweep_hits(&self, n: usize) -> Vec<f64> {
        self.runs
            .iter()
            .map(|r| r.sweep.rows.iter().find(|row| row.n == n).expect("swept n").hits_at_10)
            .collect()
    }

    fn final_trace_hits(&self, n: usize) -> Vec<f64> {
        self.runs
            .iter()
            .map(|r| {
                let i = r.sweep.rows.iter().position(|row| row.n == n).expect("swept n");
                r.sweep.traces[i]
                    .final_point()
                    .and_then(|p| p.dev_hits_at_10)
                    .expect("dev metric recorded")
            })
            .collect()
    }

    fn dsi_hits(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.dsi.report.hits_at_10).collect()
    }
}

// ---------------------------------------------------------------------------
// criteria

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut checks = gradcheck::op_checks();
    checks.push(("seq2seq loss".into(), gradcheck::seq2seq_check()));
    let count = checks.len();
    for (name, r) in checks {
        match r {
            Ok(w) => worst = worst.max(w),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    if !failures.is_empty() {
        return Err(failures.join("; "));
    }
    if secs >= 120.0 {
        return Err(format!("took {secs:.1}s, limit 120s"));
    }
    Ok(format!(
        "{count} checks x {} probes, worst rel err {worst:.2e} < {:e}, {secs:.1}s",
        gradcheck::PROBES,
        gradcheck::TOL
    ))
}

fn exhaustive_ranking(dist: &dyn NextTokenLogProbs, trie: &DocidTrie) -> Vec<(u32, f64)> {
    let mut out = Vec::new();
    for docid in trie.docids() {
        let path = encode_docid(docid, trie.width()).unwrap();
        let mut p = 1.0f64;
        for m in 0..path.len() {
            let prefix = path[..m].to_vec();
            let lp = dist.next_log_probs(std::slice::from_ref(&prefix)).unwrap().remove(0);
            let z: f64 = trie.allowed_next(&prefix).iter().map(|&t| lp[t as usize].exp()).sum();
            p *= lp[path[m] as usize].exp() / z;
        }
        out.push((docid, p));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

fn small_model_config(vocab: usize) -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        d_model: 16,
        num_heads: 2,
        d_ff: 32,
        vocab_size: vocab,
        max_src_len: 12,
        max_tgt_len: 8,
        dropout_rate: 0.1,
    }
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut max_gap = 0.0f64;
    for case in 0..20 {
        let size = rng.gen_range(1..=50);
        let width = rng.gen_range(2..=3);
        let pool: Vec<u32> = (0..10u32.pow(width as u32)).collect();
        let docids: Vec<u32> = pool.choose_multiple(&mut rng, size).copied().collect();
        let trie = DocidTrie::build(docids.iter().copied(), width).map_err(|e| e.to_string())?;
        let model = Seq2SeqModel::new(small_model_config(40), rng.gen()).map_err(|e| e.to_string())?;
        let query: Vec<TokenId> = (0..rng.gen_range(1..8)).map(|_| rng.gen_range(14..40)).collect();
        let enc = model.encode_source(&query).map_err(|e| e.to_string())?;
        let oracle = exhaustive_ranking(&enc, &trie);
        let width_extra = rng.gen_range(0..3);
        let got = beam_search_docids(&enc, &trie, BeamOptions::new(size + width_extra)).map_err(|e| e.to_string())?;
        let got_ids: Vec<u32> = got.docids().collect();
        let want_ids: Vec<u32> = oracle.iter().map(|o| o.0).collect();
        if got_ids != want_ids {
            return Err(format!("corpus {case} ({size} docids): beam {got_ids:?} vs oracle {want_ids:?}"));
        }
        for (g, o) in got.entries().iter().zip(&oracle) {
            max_gap = max_gap.max((g.score - o.1).abs());
        }
        if max_gap > 1e-9 {
            return Err(format!("corpus {case}: probability gap {max_gap:e}"));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    if secs >= 300.0 {
        return Err(format!("took {secs:.1}s, limit 300s"));
    }
    Ok(format!("20 corpora, identical rankings, max prob gap {max_gap:.1e}, {secs:.1}s"))
}

fn criterion_3(exp: &Experiments) -> Outcome {
    let ws = &exp.mono;
    let model = &exp.runs[0].dsi.model;
    let corpus: HashSet<u32> = ws.corpus.docids().into_iter().collect();
    let mut queries: Vec<Query> = ws.corpus.train_queries.clone();
    queries.extend(ws.corpus.dev_queries.iter().cloned());
    queries.extend(exp.runs[0].generated_n8.iter().cloned());
    queries.truncate(1000);
    let eval = ws.eval_queries(&queries);
    let rankings = retrieve_all(model, &ws.trie, &eval, BeamOptions::new(exp.config.eval.beam_width))
        .map_err(|e| e.to_string())?;
    let returned: usize = rankings.iter().map(RankedList::len).sum();
    let invalid = rankings.iter().flat_map(|r| r.docids()).filter(|d| !corpus.contains(d)).count();
    if rankings.len() != 1000 {
        return Err(format!("only {} retrievals", rankings.len()));
    }
    if invalid > 0 {
        return Err(format!("{invalid} of {returned} returned docids are not in the corpus"));
    }
    Ok(format!("1000 retrievals, {returned} docids returned, all in corpus"))
}

/// The same next-token distribution after every prefix.
struct Fixed(Vec<f64>);

impl NextTokenLogProbs for Fixed {
    fn next_log_probs(&self, prefixes: &[Vec<TokenId>]) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(prefixes.iter().map(|_| self.0.iter().map(|p| p.ln()).collect()).collect())
    }
}

fn criterion_4() -> Outcome {
    const SAMPLES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    // token 2 is EOS, so keep it out of every top-k set
    let cases: Vec<(Vec<f64>, usize)> = vec![
        (vec![0.0, 0.0, 0.0, 0.5, 0.2, 0.15, 0.1, 0.05], 3),
        (vec![0.0, 0.0, 0.0, 0.3, 0.3, 0.2, 0.1, 0.05, 0.05], 4),
        (
            {
                let mut raw: Vec<f64> = (0..30).map(|i| if i < 3 { 0.0 } else { rng.gen_range(0.01..1.0) }).collect();
                let z: f64 = raw.iter().sum();
                raw.iter_mut().for_each(|p| *p /= z);
                raw
            },
            10,
        ),
        (vec![0.0, 0.0, 0.0, 0.9, 0.1], 1),
    ];
    for (ci, (probs, k)) in cases.iter().enumerate() {
        let probs: Vec<f64> = probs.iter().map(|&p| if p == 0.0 { 1e-300 } else { p }).collect();
        let dist = Fixed(probs.clone());
        let lp: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        let support = top_k_distribution(&lp, *k);
        let mut counts: HashMap<TokenId, usize> = HashMap::new();
        for _ in 0..SAMPLES {
            let s = sample_top_k(&dist, *k, 1, &mut rng).map_err(|e| e.to_string())?;
            let tok = s.first().copied().unwrap_or(EOS);
            if !support.iter().any(|&(t, _)| t == tok) {
                return Err(format!("case {ci}: sampled token {tok} outside the top-{k} set"));
            }
            *counts.entry(tok).or_default() += 1;
        }
        for &(tok, p) in &support {
            let freq = *counts.get(&tok).unwrap_or(&0) as f64 / SAMPLES as f64;
            let gap = (freq - p).abs();
            worst = worst.max(gap);
            if gap > 0.02 {
                return Err(format!("case {ci}: token {tok} frequency {freq:.4} vs {p:.4}"));
            }
        }
    }
    // per-step support on a real model over multi-step generations
    let model = Seq2SeqModel::new(small_model_config(40), 5).map_err(|e| e.to_string())?;
    let mut steps = 0;
    for i in 0..200u64 {
        let prompt: Vec<TokenId> = (0..4).map(|j| 14 + ((i * 7 + j * 3) % 26) as TokenId).collect();
        let enc = model.encode_source(&prompt).map_err(|e| e.to_string())?;
        let mut supports = Vec::new();
        let mut srng = ChaCha8Rng::seed_from_u64(i);
        let out = sample_top_k_traced(&enc, 5, 7, &mut srng, Some(&mut supports)).map_err(|e| e.to_string())?;
        for (tok, sup) in out.iter().zip(&supports) {
            if sup.len() != 5 || !sup.contains(tok) {
                return Err(format!("prompt {i}: token {tok} not in step support {sup:?}"));
            }
        }
        steps += supports.len();
    }
    Ok(format!(
        "{} fixed distributions x {SAMPLES} samples, max freq gap {worst:.4} <= 0.02; {steps} model steps in top-k",
        cases.len()
    ))
}

fn criterion_5(exp: &Experiments) -> Outcome {
    let t = Instant::now();
    let ws = &exp.mono;
    let generated = &exp.runs[0].generated_n8;
    let mut config = exp.config.clone();
    config.train_dsi_qg.total_steps = 8000;
    config.train_dsi_qg.eval_every = 8000;
    let data = build_dsi_qg_dataset(generated, None, &ws.vocab, &ws.limits).map_err(|e| e.to_string())?;
    let seed = SEEDS[0];
    let mut model =
        Seq2SeqModel::new(ws.docid_model_config(&config), stage_seed(seed, "init")).map_err(|e| e.to_string())?;
    train(&mut model, &data, &config.train_dsi_qg.with_seed(seed), None).map_err(|e| e.to_string())?;
    let own = ws.eval_queries(generated);
    let report = evaluate_model(&model, &ws.trie, &own, 10, ws.meta("dsi-qg", Some(8), seed)).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let detail = format!(
        "Hits@1 {:.3} on {} own training queries after {} steps, {secs:.0}s",
        report.hits_at_1,
        own.len(),
        config.train_dsi_qg.total_steps
    );
    if report.hits_at_1 >= 0.95 && config.train_dsi_qg.total_steps <= 20_000 && secs < 1200.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6(exp: &Experiments) -> Outcome {
    let dsi = median(&exp.dsi_hits());
    let qg = median(&exp.sweep_hits(8));
    let cross_dsi = median(&exp.runs.iter().map(|r| r.cross_dsi.report.hits_at_10).collect::<Vec<_>>());
    let cross_qg = median(&exp.runs.iter().map(|r| r.cross_dsi_qg.report.hits_at_10).collect::<Vec<_>>());
    let (mono_gap, cross_gap) = (qg - dsi, cross_qg - cross_dsi);
    let secs = exp.duration.as_secs_f64();
    let detail = format!(
        "median Hits@10 mono DSI {dsi:.2} vs DSI-QG(n=8) {qg:.2} (gap {mono_gap:+.2}); cross-lingual DSI {cross_dsi:.2} vs DSI-QG {cross_qg:.2} (gap {cross_gap:+.2}); experiments {:.0} min",
        secs / 60.0
    );
    if qg >= dsi + 0.20 && cross_gap >= mono_gap && secs < 3600.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7(exp: &Experiments) -> Outcome {
    let medians: Vec<(usize, f64)> = SWEEP.iter().map(|&n| (n, median(&exp.sweep_hits(n)))).collect();
    let dsi = median(&exp.dsi_hits());
    let at = |n: usize| medians.iter().find(|m| m.0 == n).unwrap().1;
    let table: Vec<String> = medians.iter().map(|(n, h)| format!("n={n}:{h:.2}")).collect();
    let detail = format!("median Hits@10 {} vs DSI {dsi:.2}", table.join(" "));
    if at(8) >= at(1) && at(1) >= dsi {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8(exp: &Experiments) -> Outcome {
    let finals: Vec<(usize, f64)> = SWEEP.iter().map(|&n| (n, median(&exp.final_trace_hits(n)))).collect();
    let base = finals[0].1;
    let table: Vec<String> = finals.iter().map(|(n, h)| format!("n={n}:{h:.2}")).collect();
    let points = exp.runs[0].sweep.traces[0].points.len();
    let detail = format!("final traced Hits@10 (3-seed median) {} over {points} eval points", table.join(" "));
    if finals.iter().skip(1).all(|&(_, h)| h >= base) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9(exp: &Experiments) -> Outcome {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/bm25_toy.jsonl");
    let docs = load_documents(std::path::Path::new(fixture), CorpusFormat::Jsonl).map_err(|e| e.to_string())?;
    let index = InvertedIndex::build(&docs).map_err(|e| e.to_string())?;
    let params = Bm25Params::default();
    // hand counts: lengths 6, 3, 4 (avgdl 13/3); df(the)=2, df(cat)=1, df(sat)=2
    let (k1, b, n, avgdl) = (0.9f64, 0.4f64, 3.0f64, 13.0f64 / 3.0);
    let idf = |df: f64| ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
    let w = |tf: f64, dl: f64, df: f64| idf(df) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    let query: Vec<String> = ["the", "cat", "sat"].iter().map(|s| s.to_string()).collect();
    let expected = [
        w(2.0, 6.0, 2.0) + w(1.0, 6.0, 1.0) + w(1.0, 6.0, 2.0),
        w(1.0, 3.0, 2.0) + w(1.0, 3.0, 2.0),
        0.0,
    ];
    let mut worst = 0.0f64;
    for (docid, want) in expected.iter().enumerate() {
        let got = bm25_score(&query, docid as u32, &index, params);
        worst = worst.max((got - want).abs());
    }
    if worst > 1e-6 {
        return Err(format!("toy BM25 scores differ from hand computation by {worst:e}"));
    }
    let bm25 = evaluate_bm25(&exp.mono, &exp.config, &exp.mono.corpus.documents, "bm25").map_err(|e| e.to_string())?;
    let expanded = evaluate_doctquery(&exp.mono, &exp.config, &exp.runs[0].generated_n8).map_err(|e| e.to_string())?;
    let cross_bm25 =
        evaluate_bm25(&exp.cross, &exp.config, &exp.cross.corpus.documents, "bm25").map_err(|e| e.to_string())?;
    let detail = format!(
        "toy scores within {worst:.1e}; Hits@10 BM25 {:.2} vs docTquery {:.2} (cross-lingual BM25 {:.2})",
        bm25.hits_at_10, expanded.hits_at_10, cross_bm25.hits_at_10
    );
    if expanded.hits_at_10 >= bm25.hits_at_10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut checks = 0;
    for case in 0..1000 {
        let len = rng.gen_range(0..30);
        let mut ids: Vec<u32> = (0..60).collect();
        ids.shuffle(&mut rng);
        ids.truncate(len);
        let scored: Vec<(u32, f64)> = ids.iter().map(|&d| (d, rng.gen_range(0..5) as f64)).collect();
        let ranked = RankedList::from_scores(scored);
        let list: Vec<u32> = ranked.docids().collect();
        let golds: Vec<u32> = (0..rng.gen_range(1..3)).map(|_| rng.gen_range(0..60)).collect();
        for k in 1..=12 {
            // brute force: walk the list position by position
            let mut brute_single = false;
            let mut brute_any = false;
            let mut pos = 0;
            while pos < list.len() && pos < k {
                if list[pos] == golds[0] {
                    brute_single = true;
                }
                if golds.contains(&list[pos]) {
                    brute_any = true;
                }
                pos += 1;
            }
            if hits_at_k(&ranked, golds[0], k) != brute_single || hits_at_k_any(&ranked, &golds, k) != brute_any {
                return Err(format!("case {case}, k={k}: disagreement on {list:?} gold {golds:?}"));
            }
            checks += 1;
        }
    }
    Ok(format!("1000 random ranked lists, {checks} (list, k) checks agree"))
}

/// A complete small pipeline whose outputs must not depend on anything but
/// the manifest. Returns the manifest, both traces and the report, serialized.
fn determinism_run(config: &RunConfig) -> Result<[String; 4], String> {
    let err = |e: dsi_core::eval::EvalError| e.to_string();
    let corpus = generate_synthetic_corpus(&config.synth).map_err(|e| e.to_string())?;
    let ws = Workspace::new(corpus, config).map_err(err)?;
    let (qg, qg_trace) = run_qg(&ws, config, config.stage_seed("train-qg")).map_err(err)?;
    let generated = generate(&ws, &qg, config.genq.n, config.genq.k, config.stage_seed("genq")).map_err(err)?;
    let result =
        run_dsi_qg(&ws, config, &generated, Some(config.genq.n), config.stage_seed("train-dsi-qg")).map_err(err)?;
    let mut manifest = Manifest::new("determinism", "pipeline", serde_json::to_value(config).unwrap());
    for stage in ["train-qg", "genq", "train-dsi-qg"] {
        manifest.seed(stage, config.stage_seed(stage));
    }
    // Debug formatting of floats round-trips exactly, so string equality is bit equality
    Ok([
        serde_json::to_string(&manifest).unwrap(),
        format!("{:?}", qg_trace),
        format!("{:?}", result.trace),
        format!("{:?}", result.report),
    ])
}

fn criterion_11() -> Outcome {
    let mut config = RunConfig::reference();
    config.synth = SyntheticSpec {
        num_docs: 20,
        ..SyntheticSpec::reference()
    };
    config.train_qg.total_steps = 150;
    config.train_qg.eval_every = 50;
    config.train_dsi_qg.total_steps = 150;
    config.train_dsi_qg.eval_every = 50;
    config.genq.n = 2;
    let a = determinism_run(&config)?;
    let b = determinism_run(&config)?;
    for (i, what) in ["manifests", "query generator traces", "DSI-QG traces", "eval reports"].iter().enumerate() {
        if a[i] != b[i] {
            return Err(format!("{what} differ between runs"));
        }
    }
    Ok("two runs from one config: manifests, loss traces and EvalReport are bit-identical".into())
}

// ---------------------------------------------------------------------------

fn run(id: usize, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.clone()),
        Err(d) => ("FAIL", d.clone()),
    };
    println!("[{tag}] criterion {id:>2} {title}: {detail} [{}]", elapsed(t));
    outcome.is_ok()
}

fn main() {
    // cargo passes harness flags such as --nocapture or test filters; none apply
    let start = Instant::now();
    let mut passed = BTreeSet::new();
    let mut failed = BTreeSet::new();
    let mut record = |id: usize, ok: bool| {
        if ok {
            passed.insert(id);
        } else {
            failed.insert(id);
        }
    };

    record(1, run(1, "gradient correctness", criterion_1));
    record(2, run(2, "beam search equals exhaustive enumeration", criterion_2));
    record(4, run(4, "top-k sampler law", criterion_4));
    record(10, run(10, "Hits@k metric oracle", criterion_10));
    record(11, run(11, "determinism", criterion_11));

    log("building reference experiments (3 seeds, mono-lingual and cross-lingual)...");
    let experiments = catch_unwind(run_experiments).unwrap_or_else(|_| Err("experiment setup panicked".into()));
    match &experiments {
        Ok(exp) => {
            record(3, run(3, "decoding validity", || criterion_3(exp)));
            record(5, run(5, "memorization capacity", || criterion_5(exp)));
            record(6, run(6, "mismatch phenomenon", || criterion_6(exp)));
            record(7, run(7, "Hits@10 versus n", || criterion_7(exp)));
            record(8, run(8, "learning-curve endpoints", || criterion_8(exp)));
            record(9, run(9, "BM25 and docTquery", || criterion_9(exp)));
        }
        Err(e) => {
            for (id, title) in [
                (3, "decoding validity"),
                (5, "memorization capacity"),
                (6, "mismatch phenomenon"),
                (7, "Hits@10 versus n"),
                (8, "learning-curve endpoints"),
                (9, "BM25 and docTquery"),
            ] {
                println!("[FAIL] criterion {id:>2} {title}: experiments failed: {e}");
                record(id, false);
            }
        }
    }

    println!(
        "acceptance: {} passed, {} failed {:?} in {:.1} min",
        passed.len(),
        failed.len(),
        failed,
        start.elapsed().as_secs_f64() / 60.0
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
