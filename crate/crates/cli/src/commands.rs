use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};

use kgic_core::backend::{load_fixtures, BackendClient, MockServer, RemoteTokenScorer};
use kgic_core::genlp::{build_trie, BeamOptions, FieldMask, MockScorer, NameTrie, TokenScorer, Vocabulary};
use kgic_core::graph::fingerprint_hex;
use kgic_core::ingest::{load_dataset, stratified_split};
use kgic_core::kge::{
    hits_at_k, load_checkpoint, mean_rank, rank_all, save_checkpoint, train, Checkpoint, EmbeddingTable, KnownTails,
    ModelKind, RankingMode,
};
use kgic_core::pipeline::{
    ablate, ablation_table, ablation_tsv, build_predictor, complete, eval_ic, eval_properties, fit_threshold,
    generate_candidates, score_heads, write_predictions_tsv, CandidatePair, CompletionOutcome, EvalReport,
    Fingerprints, GenerativeLinkPredictor, KgeLinkPredictor, LinkPredictor, StageOneMethod, DEFAULT_KS,
};
use kgic_core::props::{default_threshold_grid, select_properties, write_selected_tsv, PropertyPredictor, Prf};
use kgic_core::{EntityId, KnowledgeGraph, SplitSet, Triple};

use crate::config::{RunConfig, StageTwoMethod};
use crate::{CliError, Command, Common, MockServerArgs};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest(&resolve(&a.common)?)?,
        Command::Split(a) => split(&resolve(&a.common)?)?,
        Command::TrainKge(a) => {
            let cfg = resolve(&a.common)?;
            let model = kge_model(&cfg)?;
            train_kge(&cfg, model)?
        }
        Command::EvalLp(a) => {
            let cfg = resolve(&a.common)?;
            let model = kge_model(&cfg)?;
            eval_lp(&cfg, model, a.raw)?
        }
        Command::PredictProps(a) => predict_props(&resolve(&a.common)?)?,
        Command::EvalPp(a) => eval_pp(&resolve(&a.common)?)?,
        Command::RunIc(a) => run_ic(&resolve(&a.common)?)?,
        Command::EvalIc(a) => {
            let cfg = resolve(&a.common)?;
            let path = a.predictions.unwrap_or_else(|| cfg.output_dir.join(PREDICTIONS_FILE));
            eval_ic_cmd(&cfg, &path)?
        }
        Command::Ablate(a) => ablate_cmd(&resolve(&a.common)?)?,
        Command::MockServer(a) => mock_server(a)?,
    }
    Ok(())
}

const PREDICTIONS_FILE: &str = "ic-predictions.json";

/// Config file, then `KGIC_BACKEND`, then flags. Any failure here is a
/// usage error.
pub fn resolve(c: &Common) -> Result<RunConfig, CliError> {
    resolve_inner(c).map_err(CliError::Usage)
}

fn resolve_inner(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    if !c.triples.is_empty() {
        cfg.dataset.triples = c.triples.clone();
    }
    if let Some(m) = &c.metadata {
        cfg.dataset.metadata = Some(m.clone());
    }
    if let Some(r) = &c.type_relation {
        cfg.dataset.type_relation = Some(r.clone());
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(r) = &c.ratios {
        let r: kgic_core::ingest::SplitRatios = r.parse()?;
        cfg.dataset.split = [r.train, r.valid, r.test];
    }
    if let Some(o) = &c.output_dir {
        cfg.output_dir = o.clone();
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    if let Some(m) = &c.method {
        cfg.stage_one.method = m.parse()?;
    }
    if let Some(m) = &c.link_method {
        cfg.stage_two.method = m.parse()?;
    }
    if let Some(t) = c.threshold {
        cfg.stage_one.threshold = Some(t);
    }
    if let Some(b) = &c.backend {
        cfg.backend.transport = Some(b.clone());
    }
    if let Some(d) = c.dim {
        cfg.kge.dim = d;
    }
    if let Some(e) = c.epochs {
        cfg.kge.epochs = e;
    }
    cfg.mask.types |= c.mask_types;
    cfg.mask.description |= c.mask_description;
    cfg.validate()?;
    Ok(cfg)
}

fn kge_model(cfg: &RunConfig) -> Result<ModelKind, CliError> {
    cfg.stage_two.method.kge_model().ok_or_else(|| {
        CliError::Usage(anyhow!(
            "--link-method must be transe or rotate here, not {}",
            cfg.stage_two.method
        ))
    })
}

struct Experiment {
    graph: KnowledgeGraph,
    split: SplitSet,
    fingerprint: u64,
}

impl Experiment {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let graph = load_dataset(&cfg.dataset_config()?).context("loading dataset")?;
        let split = stratified_split(&graph, cfg.split_ratios()?, cfg.seed)?;
        let fingerprint = split.fingerprint();
        info!(
            "split {}: {}/{}/{}",
            fingerprint_hex(fingerprint),
            split.train.len(),
            split.valid.len(),
            split.test.len()
        );
        Ok(Self {
            graph,
            split,
            fingerprint,
        })
    }

    fn triples(&self, part: &[usize]) -> Vec<Triple> {
        part.iter().map(|&i| self.graph.triple(i)).collect()
    }

    fn test_heads(&self) -> Vec<EntityId> {
        SplitSet::heads(&self.graph, &self.split.test)
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    Ok(cfg.output_dir.join(name))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn config_echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn ingest(cfg: &RunConfig) -> Result<()> {
    let graph = load_dataset(&cfg.dataset_config()?).context("loading dataset")?;
    let path = out_path(cfg, "graph.json")?;
    graph.save(BufWriter::new(File::create(&path)?))?;
    println!(
        "entities: {}, relations: {}, facts: {}",
        graph.num_entities(),
        graph.num_relations(),
        graph.num_triples()
    );
    Ok(())
}

fn split(cfg: &RunConfig) -> Result<()> {
    let exp = Experiment::load(cfg)?;
    write_json(&out_path(cfg, "split.json")?, &exp.split)?;
    println!(
        "train: {}, valid: {}, test: {}",
        exp.split.train.len(),
        exp.split.valid.len(),
        exp.split.test.len()
    );
    println!("fingerprint: {}", fingerprint_hex(exp.fingerprint));
    Ok(())
}

fn checkpoint_path(cfg: &RunConfig, model: ModelKind) -> Result<PathBuf> {
    out_path(cfg, &format!("kge-{model}.bin"))
}

fn train_and_save(cfg: &RunConfig, exp: &Experiment, model: ModelKind) -> Result<(Checkpoint, Vec<f64>)> {
    let kcfg = cfg.kge_config(model);
    let outcome = train(
        &kcfg,
        exp.graph.num_entities(),
        exp.graph.num_relations(),
        &exp.triples(&exp.split.train),
    )?;
    let ckpt = Checkpoint {
        table: outcome.table,
        seed: cfg.seed,
        split_fingerprint: exp.fingerprint,
    };
    let path = checkpoint_path(cfg, model)?;
    save_checkpoint(BufWriter::new(File::create(&path)?), &ckpt)?;
    Ok((ckpt, outcome.epoch_losses))
}

fn train_kge(cfg: &RunConfig, model: ModelKind) -> Result<()> {
    let exp = Experiment::load(cfg)?;
    let (_, losses) = train_and_save(cfg, &exp, model)?;
    println!(
        "model: {model}, epochs: {}, final loss: {:.6}",
        losses.len(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    println!("checkpoint: {}", checkpoint_path(cfg, model)?.display());
    Ok(())
}

/// Loads the model's checkpoint; it must come from the current split.
fn load_table(cfg: &RunConfig, exp: &Experiment, model: ModelKind, train_if_missing: bool) -> Result<EmbeddingTable> {
    let path = checkpoint_path(cfg, model)?;
    if !path.exists() {
        if train_if_missing {
            info!("no checkpoint at {}; training", path.display());
            return Ok(train_and_save(cfg, exp, model)?.0.table);
        }
        bail!("no checkpoint at {}; run train-kge first", path.display());
    }
    let ckpt = load_checkpoint(BufReader::new(File::open(&path)?)).with_context(|| format!("reading {}", path.display()))?;
    if ckpt.split_fingerprint != exp.fingerprint {
        return Err(kgic_core::Error::Leakage(format!(
            "split fingerprint mismatch: checkpoint {} was trained on {}, current split is {}",
            path.display(),
            fingerprint_hex(ckpt.split_fingerprint),
            fingerprint_hex(exp.fingerprint)
        ))
        .into());
    }
    if ckpt.table.num_entities != exp.graph.num_entities() || ckpt.table.num_relations != exp.graph.num_relations() {
        bail!("checkpoint shape does not match the dataset");
    }
    Ok(ckpt.table)
}

#[derive(Serialize)]
struct LpReport {
    model: String,
    ranking: RankingMode,
    test_triples: usize,
    hits: Vec<(usize, f64)>,
    mean_rank: f64,
    split_fingerprint: String,
    config: serde_json::Value,
}

fn eval_lp(cfg: &RunConfig, model: ModelKind, raw: bool) -> Result<()> {
    let exp = Experiment::load(cfg)?;
    let table = load_table(cfg, &exp, model, false)?;
    let test = exp.triples(&exp.split.test);
    let known = KnownTails::from_triples(exp.graph.triples());
    let ranking = if raw { RankingMode::Raw } else { RankingMode::Filtered };
    let ranks = rank_all(&table, &test, (!raw).then_some(&known), cfg.jobs);
    let report = LpReport {
        model: model.to_string(),
        ranking,
        test_triples: test.len(),
        hits: DEFAULT_KS
            .iter()
            .map(|&k| Ok((k, hits_at_k(&ranks, k)?)))
            .collect::<kgic_core::Result<_>>()?,
        mean_rank: mean_rank(&ranks)?,
        split_fingerprint: fingerprint_hex(exp.fingerprint),
        config: config_echo(cfg),
    };
    for (k, h) in &report.hits {
        println!("hits@{k}: {h:.4}");
    }
    println!("mean rank: {:.2}", report.mean_rank);
    write_json(&out_path(cfg, &format!("eval-lp-{model}.json"))?, &report)?;
    Ok(())
}

fn connect(cfg: &RunConfig) -> Result<BackendClient> {
    Ok(BackendClient::connect(cfg.backend_config()?).context("connecting to backend")?)
}

fn stage_one<'g>(cfg: &RunConfig, exp: &'g Experiment, mask: FieldMask) -> Result<Box<dyn PropertyPredictor + 'g>> {
    let client = match cfg.stage_one.method {
        StageOneMethod::Remote => Some(connect(cfg)?),
        _ => None,
    };
    Ok(build_predictor(
        cfg.stage_one.method,
        &exp.graph,
        &exp.split,
        &cfg.stage_one_options(mask),
        client,
    )?)
}

fn threshold(cfg: &RunConfig, exp: &Experiment, predictor: &dyn PropertyPredictor) -> Result<f64> {
    match cfg.stage_one.threshold {
        Some(t) => Ok(t),
        None => Ok(fit_threshold(predictor, &exp.graph, &exp.split, &default_threshold_grid(), cfg.jobs)?),
    }
}

fn predict_props(cfg: &RunConfig) -> Result<()> {
    let exp = Experiment::load(cfg)?;
    let predictor = stage_one(cfg, &exp, cfg.mask)?;
    let t = threshold(cfg, &exp, predictor.as_ref())?;
    let heads = exp.test_heads();
    let scores = score_heads(predictor.as_ref(), &heads, cfg.jobs)?;
    let selected: Vec<(EntityId, Vec<bool>)> = heads
        .iter()
        .zip(&scores)
        .map(|(&h, s)| (h, select_properties(s, t)))
        .collect();
    let path = out_path(cfg, &format!("props-{}.tsv", cfg.stage_one.method))?;
    write_selected_tsv(BufWriter::new(File::create(&path)?), &exp.graph, &selected)?;
    let n: usize = selected.iter().map(|(_, v)| v.iter().filter(|&&b| b).count()).sum();
    println!("method: {}, threshold: {t:.2}", cfg.stage_one.method);
    println!("heads: {}, selected pairs: {n}", heads.len());
    println!("selections: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct PpReport {
    method: String,
    threshold: f64,
    test: Prf,
    split_fingerprint: String,
    config: serde_json::Value,
}

fn eval_pp(cfg: &RunConfig) -> Result<()> {
    let exp = Experiment::load(cfg)?;
    let predictor = stage_one(cfg, &exp, cfg.mask)?;
    let t = threshold(cfg, &exp, predictor.as_ref())?;
    let prf = eval_properties(predictor.as_ref(), &exp.graph, &exp.split.test, t, cfg.jobs)?;
    println!("method: {}, threshold: {t:.2}", cfg.stage_one.method);
    println!(
        "precision: {:.4}, recall: {:.4}, f1: {:.4}",
        prf.precision, prf.recall, prf.f1
    );
    let report = PpReport {
        method: cfg.stage_one.method.to_string(),
        threshold: t,
        test: prf,
        split_fingerprint: fingerprint_hex(exp.fingerprint),
        config: config_echo(cfg),
    };
    write_json(&out_path(cfg, &format!("eval-pp-{}.json", cfg.stage_one.method))?, &report)?;
    Ok(())
}

/// Owned stage-two resources; the borrowing predictor is built per use.
enum StageTwo {
    Kge(EmbeddingTable),
    Generative {
        scorer: Box<dyn TokenScorer>,
        trie: NameTrie,
        max_len: usize,
    },
}

fn stage_two(cfg: &RunConfig, exp: &Experiment) -> Result<StageTwo> {
    let method = cfg.stage_two.method;
    if let Some(model) = method.kge_model() {
        return Ok(StageTwo::Kge(load_table(cfg, exp, model, true)?));
    }
    let scorer: Box<dyn TokenScorer> = match method {
        StageTwoMethod::GenerativeLocalMock => {
            let vocab = Vocabulary::char_level(exp.graph.entity_labels().iter().map(String::as_str))?;
            Box::new(MockScorer::new(vocab))
        }
        _ => Box::new(RemoteTokenScorer::new(connect(cfg)?)?),
    };
    let trie = build_trie(
        exp.graph
            .entity_ids()
            .map(|e| (e, exp.graph.entity_label(e))),
        scorer.vocabulary(),
    )?;
    let max_len = cfg.stage_two.max_len.unwrap_or(trie.depth() + 1);
    Ok(StageTwo::Generative {
        scorer,
        trie,
        max_len,
    })
}

fn run_pairs(
    cfg: &RunConfig,
    exp: &Experiment,
    two: &StageTwo,
    pairs: &[CandidatePair],
    mask: FieldMask,
) -> CompletionOutcome {
    let mut known_parts = exp.split.train.clone();
    known_parts.extend_from_slice(&exp.split.valid);
    let known = KnownTails::from_triples(&exp.triples(&known_parts));
    let exclude = cfg.stage_two.exclude_known.then_some(&known);
    let k = cfg.stage_two.k_max;
    match two {
        StageTwo::Kge(table) => {
            let p = KgeLinkPredictor { table, exclude };
            complete(&p as &dyn LinkPredictor, pairs, k, cfg.jobs)
        }
        StageTwo::Generative {
            scorer,
            trie,
            max_len,
        } => {
            let p = GenerativeLinkPredictor {
                graph: &exp.graph,
                scorer: scorer.as_ref(),
                trie,
                mask,
                beam: BeamOptions::new(cfg.stage_two.beam_width, *max_len),
                exclude,
            };
            complete(&p as &dyn LinkPredictor, pairs, k, cfg.jobs)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IcArtifact {
    config: RunConfig,
    fingerprints: Fingerprints,
    threshold: f64,
    property_prediction: Option<Prf>,
    pairs: Vec<CandidatePair>,
    outcome: CompletionOutcome,
}

fn run_ic(cfg: &RunConfig) -> Result<()> {
    let exp = Experiment::load(cfg)?;
    let predictor = stage_one(cfg, &exp, cfg.mask)?;
    let t = threshold(cfg, &exp, predictor.as_ref())?;
    let prf = eval_properties(predictor.as_ref(), &exp.graph, &exp.split.test, t, cfg.jobs)?;
    let pairs = generate_candidates(predictor.as_ref(), &exp.test_heads(), t, cfg.jobs)?;
    let two = stage_two(cfg, &exp)?;
    let outcome = run_pairs(cfg, &exp, &two, &pairs, cfg.mask);
    let tsv = out_path(cfg, "ic-predictions.tsv")?;
    write_predictions_tsv(BufWriter::new(File::create(&tsv)?), &exp.graph, &outcome.predictions)?;
    println!(
        "pairs: {}, completed: {}, failed: {}",
        pairs.len(),
        outcome.predictions.len(),
        outcome.failures.len()
    );
    let artifact = IcArtifact {
        config: cfg.clone(),
        fingerprints: Fingerprints::same(exp.fingerprint),
        threshold: t,
        property_prediction: Some(prf),
        pairs,
        outcome,
    };
    let path = out_path(cfg, PREDICTIONS_FILE)?;
    write_json(&path, &artifact)?;
    println!("predictions: {}", path.display());
    Ok(())
}

fn write_report(cfg: &RunConfig, stem: &str, report: &EvalReport) -> Result<()> {
    write_text(&out_path(cfg, &format!("{stem}.json"))?, &(report.to_json() + "\n"))?;
    write_text(&out_path(cfg, &format!("{stem}.txt"))?, &report.to_text())?;
    write_text(&out_path(cfg, &format!("{stem}.tsv"))?, &report.to_tsv())?;
    Ok(())
}

fn eval_ic_cmd(cfg: &RunConfig, predictions: &Path) -> Result<()> {
    let exp = Experiment::load(cfg)?;
    let file = File::open(predictions).with_context(|| format!("opening {}", predictions.display()))?;
    let art: IcArtifact = serde_json::from_reader(BufReader::new(file)).context("parsing predictions")?;
    let fps = Fingerprints {
        split: exp.fingerprint,
        ..art.fingerprints
    };
    let gold = exp.triples(&exp.split.test);
    let mut report = eval_ic(&art.pairs, &art.outcome, &gold, &DEFAULT_KS, fps)?;
    report.property_prediction = art.property_prediction;
    report.config = config_echo(&art.config);
    write_report(cfg, "ic-report", &report)?;
    print!("{}", report.to_text());
    Ok(())
}

fn ablate_cmd(cfg: &RunConfig) -> Result<()> {
    let exp = Experiment::load(cfg)?;
    // one threshold for every row, tuned without masks
    let t = {
        let base = stage_one(cfg, &exp, FieldMask::NONE)?;
        threshold(cfg, &exp, base.as_ref())?
    };
    let two = stage_two(cfg, &exp)?;
    let gold = exp.triples(&exp.split.test);
    let heads = exp.test_heads();
    let rows = ablate(&FieldMask::all(), |mask| {
        let predictor = stage_one(cfg, &exp, mask).map_err(|e| kgic_core::Error::InvalidArgument(format!("{e:#}")))?;
        let prf = eval_properties(predictor.as_ref(), &exp.graph, &exp.split.test, t, cfg.jobs)?;
        let pairs = generate_candidates(predictor.as_ref(), &heads, t, cfg.jobs)?;
        let outcome = run_pairs(cfg, &exp, &two, &pairs, mask);
        let mut report = eval_ic(&pairs, &outcome, &gold, &DEFAULT_KS, Fingerprints::same(exp.fingerprint))?;
        report.property_prediction = Some(prf);
        let mut echo = cfg.clone();
        echo.mask = mask;
        report.config = config_echo(&echo);
        Ok(report)
    })?;
    let table = ablation_table(&rows);
    write_text(&out_path(cfg, "ablation.txt")?, &table)?;
    write_text(&out_path(cfg, "ablation.tsv")?, &ablation_tsv(&rows))?;
    write_json(&out_path(cfg, "ablation.json")?, &rows)?;
    println!("threshold: {t:.2}");
    print!("{table}");
    Ok(())
}

fn mock_server(a: MockServerArgs) -> Result<()> {
    let split = |s: &str| -> Vec<String> {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(str::to_owned)
            .collect()
    };
    let vocab = Vocabulary::new(split(&a.vocab))?;
    let mut server = MockServer::with_scorer(Arc::new(MockScorer::new(vocab)), split(&a.relations));
    if let Some(path) = &a.fixtures {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        server = server.fixtures(load_fixtures(BufReader::new(f))?);
    }
    if a.silent {
        server = server.silent();
    }
    if let Some(addr) = &a.tcp {
        let listener = TcpListener::bind(addr)?;
        println!("listening on {}", listener.local_addr()?);
        io::stdout().flush()?;
        server.serve_listener(listener);
        return Ok(());
    }
    if !a.stdio {
        bail!("mock-server needs --stdio or --tcp");
    }
    let stdin = io::stdin();
    let stdout = io::stdout();
    server.serve(stdin.lock(), stdout.lock())?;
    Ok(())
}
