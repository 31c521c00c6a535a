use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use warmline_core::classifiers::{
    train_task, write_confusion_csv, write_metrics_table, ClassifierBundle, LabeledExample, Metrics, ThresholdPolicy,
    TrainConfig,
};
use warmline_core::corpus::{
    corpus_stats, curate_reference_set, deidentify_corpus, filter_by_length, read_corpus_file, strip_logistics,
    CurationConfig, CurationJudges, ReferenceKind,
};
use warmline_core::dialogue::{respond, Clock, DialogueContext, FixedClock, SystemClock};
use warmline_core::evaluation::{
    evaluate_engine, reference_row, DialogueSource, EvalJudges, EvaluationReport, HashedContextEmbedder,
    TokenEmbedder,
};
use warmline_core::features::{IdentityTranslator, LexicalParaphraser, RoundTripTranslator};
use warmline_core::generative::{
    fine_tune, prepare_training_pairs, Base, Checkpoint, Decoding, FineTuneConfig, GenerativeEngine, Stage, TinyLm,
    TinyLmConfig, TrainingSequence,
};
use warmline_core::judge::{PatternJudge, SentenceJudge};
use warmline_core::{synth, Corpus, Detectors, Engine, ReferenceSet, ResponsePools, Session, SessionState, TaskName};
use warmline_service::{AppState, Backend, FileStore};

use crate::config::Config;
use crate::StageArg;

fn seed(cfg: &Config) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn out_dir(cfg: &Config, fallback: &str) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(fallback));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    corpus.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    let outcome = read_corpus_file(path).with_context(|| format!("reading corpus {}", path.display()))?;
    if !outcome.rejects.is_empty() {
        tracing::warn!(path = %path.display(), rejects = outcome.rejects.len(), "skipped malformed records");
    }
    Ok(outcome.corpus)
}

/// Trained empathy head when the bundle has one, the phrase patterns otherwise.
fn empathy_judge(bundle: Option<&ClassifierBundle>) -> Box<dyn SentenceJudge> {
    match bundle.and_then(|b| b.judge(TaskName::Empathy)) {
        Some(j) => Box::new(j),
        None => Box::new(PatternJudge::empathy()),
    }
}

pub fn synth(cfg: &Config, pairs: usize, per_task: usize, reference: usize) -> Result<()> {
    let out = out_dir(cfg, "synth-out")?;
    let seed = seed(cfg);
    let corpus = synth::dialogue_corpus(pairs, 0.3, seed);
    write_corpus(&out.join("corpus.jsonl"), &corpus)?;

    let labels = out.join("labels");
    fs::create_dir_all(&labels)?;
    for (i, task) in TaskName::ALL.iter().enumerate() {
        let examples = synth::labeled_examples(*task, per_task, 0.3, seed.wrapping_add(i as u64 + 1));
        let mut w = BufWriter::new(File::create(labels.join(format!("{}.jsonl", task.file_stem())))?);
        for e in &examples {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }

    let refset = synth::reference_set(reference, ReferenceKind::Gold, seed);
    fs::write(out.join("refset.json"), refset.to_json()?)?;
    println!(
        "{}",
        json!({ "out": out, "conversations": corpus.len(), "tasks": TaskName::ALL.len(), "reference_pairs": refset.len() })
    );
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Gazetteer {
    persons: Vec<String>,
    places: Vec<String>,
    orgs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct PrepStats {
    parsed: warmline_core::corpus::CorpusStats,
    rejected_records: usize,
    length_filtered: warmline_core::corpus::CorpusStats,
    min_turns: usize,
    min_words: usize,
    stripped: warmline_core::corpus::CorpusStats,
    turns_before: usize,
    turns_retained: usize,
    retention_ratio: f64,
    filter_failures: usize,
    reference_pairs: Option<usize>,
}

pub fn prep(cfg: &Config, corpus_path: &Path, reference: Option<usize>, reference_kind: &str) -> Result<()> {
    let out = out_dir(cfg, "prep-out")?;
    let parsed = read_corpus_file(corpus_path).with_context(|| format!("reading corpus {}", corpus_path.display()))?;
    fs::write(out.join("rejects.txt"), parsed.rejects_report())?;

    let gazetteer: Gazetteer = match &cfg.data.gazetteer {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading gazetteer {}", p.display()))?)
            .with_context(|| format!("parsing gazetteer {}", p.display()))?,
        None => Gazetteer::default(),
    };
    let tagger = warmline_core::corpus::PatternTagger::new(&gazetteer.persons, &gazetteer.places, &gazetteer.orgs)?;
    let deidentified = deidentify_corpus(&parsed.corpus, &tagger)?;
    let long_enough = filter_by_length(&deidentified, cfg.data.min_turns, cfg.data.min_words)?;
    let logistics = PatternJudge::logistics();
    let stripped = strip_logistics(&long_enough, &logistics, &PatternJudge::coordination())?;
    write_corpus(&out.join("prepped.jsonl"), &long_enough)?;
    write_corpus(&out.join("filtered.jsonl"), &stripped.corpus)?;

    let mut reference_pairs = None;
    if let Some(n) = reference {
        let kind: ReferenceKind = reference_kind.parse()?;
        let bundle = cfg.bundle()?;
        let detectors = cfg.detectors()?;
        let severe = move |s: &str| -> warmline_core::Result<bool> { Ok(detectors.detect(s)?.severe) };
        let empathy = empathy_judge(bundle.as_ref());
        let advice = PatternJudge::advice();
        let refset = curate_reference_set(
            &long_enough,
            &CurationConfig {
                n,
                kind,
                seed: seed(cfg),
                gold_responders: cfg.data.gold_responders.iter().cloned().collect::<HashSet<_>>(),
            },
            &CurationJudges {
                empathy: empathy.as_ref(),
                severe: &severe,
                logistics: &logistics,
                advice: &advice,
            },
        )?;
        fs::write(out.join("refset.json"), refset.to_json()?)?;
        reference_pairs = Some(refset.len());
    }

    let stats = PrepStats {
        parsed: corpus_stats(&parsed.corpus),
        rejected_records: parsed.rejects.len(),
        length_filtered: corpus_stats(&long_enough),
        min_turns: cfg.data.min_turns,
        min_words: cfg.data.min_words,
        stripped: corpus_stats(&stripped.corpus),
        turns_before: stripped.turns_before,
        turns_retained: stripped.turns_retained,
        retention_ratio: stripped.retention_ratio,
        filter_failures: stripped.filter_failures,
        reference_pairs,
    };
    write_json(&out.join("stats.json"), &stats)?;
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

fn parse_tasks(names: &[String]) -> Result<Vec<TaskName>> {
    if names.iter().any(|n| n == "all") {
        return Ok(TaskName::ALL.to_vec());
    }
    let mut tasks = Vec::new();
    for n in names {
        for part in n.split(',').filter(|p| !p.is_empty()) {
            let t: TaskName = part.parse()?;
            if !tasks.contains(&t) {
                tasks.push(t);
            }
        }
    }
    Ok(tasks)
}

fn read_examples(path: &Path) -> Result<Vec<LabeledExample>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn train(cfg: &Config, task_names: &[String], data: &Path) -> Result<()> {
    let tasks = parse_tasks(task_names)?;
    let out = out_dir(cfg, "train-out")?;
    let featurizer = cfg.featurizer()?;
    let mut config = TrainConfig {
        folds: cfg.train.folds,
        seed: seed(cfg),
        balance: cfg.train.balance,
        balance_ratio: cfg.train.balance_ratio,
        threshold_policy: ThresholdPolicy::MaxRecallAtPrecision {
            floor: cfg.train.precision_floor,
        },
        ..TrainConfig::default()
    };
    config.forest.n_trees = cfg.train.trees;
    let paraphraser = LexicalParaphraser::default();
    let translator: &dyn RoundTripTranslator = if config.balance { &paraphraser } else { &IdentityTranslator };

    let mut heads = Vec::new();
    let mut metrics: BTreeMap<TaskName, Metrics> = BTreeMap::new();
    for task in &tasks {
        let path = data.join(format!("{}.jsonl", task.file_stem()));
        let examples = read_examples(&path)?;
        tracing::info!(%task, examples = examples.len(), "training");
        let (head, m) = train_task(*task, &examples, &featurizer, &config, translator)
            .with_context(|| format!("training {task}"))?;
        heads.push(head);
        metrics.insert(*task, m);
    }

    write_json(&out.join("metrics.json"), &metrics)?;
    let rows: Vec<(TaskName, &Metrics)> = metrics.iter().map(|(t, m)| (*t, m)).collect();
    write_confusion_csv(BufWriter::new(File::create(out.join("confusion.csv"))?), &rows)?;
    let mut table = Vec::new();
    write_metrics_table(&mut table, &rows)?;
    fs::write(out.join("metrics.txt"), &table)?;
    std::io::stdout().write_all(&table)?;

    if tasks.contains(&TaskName::Severe) {
        let bundle = ClassifierBundle::new(featurizer, heads)?;
        bundle.save(&out.join("bundle"))?;
        eprintln!("bundle {} written to {}", bundle.manifest_hash(), out.join("bundle").display());
    } else {
        let dir = out.join("heads");
        fs::create_dir_all(&dir)?;
        for h in &heads {
            write_json(&dir.join(format!("{}.json", h.task.file_stem())), h)?;
        }
        tracing::warn!("no severe head trained; wrote standalone heads instead of a deployable bundle");
    }
    Ok(())
}

fn sequences(corpus: &Corpus, turns: usize) -> Result<Vec<TrainingSequence>> {
    let seqs = prepare_training_pairs(corpus, turns);
    if seqs.is_empty() {
        bail!("corpus yields no (context, responder turn) training pairs");
    }
    Ok(seqs)
}

fn pretrained(texts: &[String], seed: u64) -> Result<TinyLm> {
    Ok(TinyLm::new(texts, TinyLmConfig::default(), seed)?)
}

fn tune_config(cfg: &Config, stage: Stage) -> FineTuneConfig {
    let mut c = FineTuneConfig::new(stage);
    c.epochs = cfg.generative.epochs;
    c.learning_rate = cfg.generative.learning_rate;
    c.seed = seed(cfg);
    c
}

pub fn finetune(
    cfg: &Config,
    stage: StageArg,
    corpus: Option<&Path>,
    filtered: Option<&Path>,
    base_checkpoint: Option<&Path>,
) -> Result<()> {
    let out = out_dir(cfg, "finetune-out")?;
    let turns = cfg.generative.context_turns;
    let full = corpus.map(read_corpus).transpose()?;
    let filtered = match (filtered, &full) {
        (Some(p), _) => Some(read_corpus(p)?),
        (None, Some(c)) => Some(strip_logistics(c, &PatternJudge::logistics(), &PatternJudge::coordination())?.corpus),
        (None, None) => None,
    };
    let mut summary = serde_json::Map::new();

    let stage1 = match stage {
        StageArg::Stage1 | StageArg::Both => {
            let Some(full) = &full else {
                bail!("stage 1 needs --corpus");
            };
            let seqs = sequences(full, turns)?;
            let mut vocab: Vec<String> = seqs.iter().map(|s| s.to_text()).collect();
            if let Some(f) = &filtered {
                vocab.extend(prepare_training_pairs(f, turns).iter().map(|s| s.to_text()));
            }
            let ck = fine_tune(
                Base::Pretrained(pretrained(&vocab, seed(cfg))?),
                &seqs,
                &tune_config(cfg, Stage::Stage1Full),
            )?;
            ck.save(&out.join("stage1"))?;
            summary.insert("stage1".into(), serde_json::to_value(&ck.manifest)?);
            Some(ck)
        }
        StageArg::Stage2 => None,
    };

    if matches!(stage, StageArg::Stage2 | StageArg::Both) {
        let Some(filtered) = &filtered else {
            bail!("stage 2 needs --filtered or --corpus");
        };
        let seqs = sequences(filtered, turns)?;
        let loaded = base_checkpoint
            .map(|p| Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display())))
            .transpose()?;
        let base = match (&stage1, &loaded) {
            (Some(ck), _) | (None, Some(ck)) => Base::Checkpoint(ck),
            (None, None) => {
                let vocab: Vec<String> = seqs.iter().map(|s| s.to_text()).collect();
                Base::Pretrained(pretrained(&vocab, seed(cfg))?)
            }
        };
        let ck = fine_tune(base, &seqs, &tune_config(cfg, Stage::Stage2Filtered))
            .context("stage 2 must start from a stage-1 checkpoint (pass --base-checkpoint)")?;
        ck.save(&out.join("stage2"))?;
        summary.insert("stage2".into(), serde_json::to_value(&ck.manifest)?);
    }

    write_json(&out.join("finetune.json"), &summary)?;
    println!("{}", serde_json::Value::Object(summary));
    Ok(())
}

fn generator(cfg: &Config, pools: &ResponsePools) -> Result<Option<Arc<GenerativeEngine>>> {
    let Some(dir) = &cfg.generative.checkpoint else {
        return Ok(None);
    };
    let ck = Checkpoint::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    let g = &cfg.generative;
    let engine = GenerativeEngine::from_checkpoint(&ck, pools.generic_empathy.clone())?
        .with_decoding(Decoding {
            max_new_tokens: g.max_new_tokens,
            temperature: g.temperature,
            top_p: g.top_p,
            seed: seed(cfg),
        })
        .with_dedupe(g.dedupe)
        .with_capacity(g.capacity)
        .with_context_turns(g.context_turns);
    Ok(Some(Arc::new(engine)))
}

pub fn eval(cfg: &Config, engine_names: &[String], refset: &Path, refset_kind: &str) -> Result<()> {
    let engines: Vec<Engine> = engine_names
        .iter()
        .filter(|n| !n.is_empty())
        .map(|n| n.parse::<Engine>())
        .collect::<warmline_core::Result<_>>()?;
    if engines.is_empty() {
        bail!("no engines given");
    }
    let reference = ReferenceSet::read(refset, refset_kind.parse()?)
        .with_context(|| format!("reading reference set {}", refset.display()))?;
    let out = out_dir(cfg, "eval-out")?;
    let bundle = cfg.bundle()?;
    let detectors = cfg.detectors()?;
    let pools = cfg.pools()?;
    let generator = generator(cfg, &pools)?;
    if engines.contains(&Engine::Generative) && generator.is_none() {
        bail!("engine `generative` needs --checkpoint or generative.checkpoint");
    }
    let clock = FixedClock::default();
    let empathy = empathy_judge(bundle.as_ref());
    let embedder = HashedContextEmbedder::new(cfg.eval.embedder_dim);
    let judges = EvalJudges {
        empathy: empathy.as_ref(),
        embedder: &embedder,
        rescale_baseline: cfg.eval.rescale_baseline,
    };

    let mut report = EvaluationReport::new(
        judges.mode(),
        embedder.name(),
        format!("{} ({}, {} pairs)", refset.display(), reference.kind, reference.len()),
    );
    report.push_reference(reference_row(&reference, empathy.as_ref())?);
    for engine in engines {
        let mut ctx = DialogueContext::new(detectors.as_ref(), &pools, &clock)
            .with_max_label_replies(cfg.dialogue.max_label_replies);
        if let Some(g) = &generator {
            ctx = ctx.with_generator(g.as_ref());
        }
        let source = DialogueSource {
            engine,
            ctx,
            seed: seed(cfg),
        };
        let (row, pairs) = evaluate_engine(&source, &reference, &judges)?;
        if row.failed > 0 {
            tracing::warn!(engine = %engine.as_str(), failed = row.failed, "some pairs produced no scorable reply");
        }
        report.push_engine(row, pairs);
    }

    fs::write(out.join("report.json"), report.to_json()?)?;
    let table = report.to_table();
    fs::write(out.join("report.txt"), &table)?;
    report.write_pairs_csv(BufWriter::new(File::create(out.join("pairs.csv"))?))?;
    print!("{table}");
    Ok(())
}

pub fn serve(cfg: &Config) -> Result<()> {
    let addr: SocketAddr = cfg
        .service
        .bind
        .parse()
        .with_context(|| format!("bad bind address `{}`", cfg.service.bind))?;
    let default_engine: Engine = cfg.dialogue.default_engine.parse()?;
    let pools = cfg.pools()?;
    let generator = generator(cfg, &pools)?;
    let mut backend = Backend::new(cfg.detectors()?, Arc::new(pools)).with_max_label_replies(cfg.dialogue.max_label_replies);
    if let Some(g) = generator {
        backend = backend.with_generator(g);
    }
    let store = FileStore::open(&cfg.service.data_dir)
        .with_context(|| format!("opening session store {}", cfg.service.data_dir.display()))?;
    let state = Arc::new(AppState::new(backend, Arc::new(store)).with_default_engine(default_engine));
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(warmline_service::serve(addr, state))?;
    Ok(())
}

pub fn chat(cfg: &Config, engine: &str, text: &str) -> Result<()> {
    let engine: Engine = engine.parse()?;
    let pools = cfg.pools()?;
    let detectors = cfg.detectors()?;
    let generator = generator(cfg, &pools)?;
    if engine == Engine::Generative && generator.is_none() {
        bail!("engine `generative` needs --checkpoint or generative.checkpoint");
    }
    let clock = SystemClock;
    let mut ctx = DialogueContext::new(detectors.as_ref(), &pools, &clock)
        .with_max_label_replies(cfg.dialogue.max_label_replies);
    if let Some(g) = &generator {
        ctx = ctx.with_generator(g.as_ref());
    }
    let mut session = Session::new("cli", engine, seed(cfg), clock.now());
    let reply = respond(&mut session, text, &ctx)?;
    let escalated = session.state == SessionState::Escalated && reply.is_escalation();
    println!(
        "{}",
        json!({
            "text": reply.text(),
            "reply": reply,
            "state": session.state,
            "flagged": session.flagged,
            "safety": escalated.then_some("escalated"),
        })
    );
    Ok(())
}
