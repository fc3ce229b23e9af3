use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use interaction_core::checkpoint::Checkpoint;
use interaction_core::concvae::Direction;
use interaction_core::corpus::{
    encode_corpus, load_quadruplets, synth_corpus, EncodedExample, Label, Quadruplet, Split, SynthOptions, Vocabulary,
};
use interaction_core::evaluate::{build_report, evaluate, RunResult};
use interaction_core::metrics::{correct_at_k, load_annotations};
use interaction_core::scalar::Scalar;
use interaction_core::train::{train, EpochLog};
use interaction_core::{Architecture, ModelKind};
use serde_json::json;

use crate::config::{Dtype, Profile, RunConfig};
use crate::models::{load_model, load_vocab, read_pairs, text, with_model, EncodedPair};

fn emit(out: &mut impl Write, value: &serde_json::Value) -> Result<()> {
    writeln!(out, "{value}").context("writing output")
}

fn quad_json(q: &Quadruplet, split: Split) -> serde_json::Value {
    let mut v = json!({
        "premise": q.premise.join(" "),
        "hypothesis": q.hypothesis.join(" "),
        "label": q.label.word(),
    });
    match split {
        Split::Train => v["explanation"] = q.explanations[0].join(" ").into(),
        Split::Val | Split::Test => {
            for (i, e) in q.explanations.iter().enumerate() {
                v[format!("explanation_{}", i + 1)] = e.join(" ").into();
            }
        }
    }
    v
}

pub fn synth(n: usize, seed: u64, split: Split, artifacts: f64, out: Option<&Path>) -> Result<()> {
    if n == 0 {
        bail!("--n must be at least 1");
    }
    if !(0.0..=1.0).contains(&artifacts) {
        bail!("--artifacts must lie in [0, 1]");
    }
    let corpus = synth_corpus(n, seed, &SynthOptions::new(split).with_artifacts(artifacts));
    let mut text = String::new();
    for q in &corpus {
        text.push_str(&quad_json(q, split).to_string());
        text.push('\n');
    }
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing output"),
    }
}

fn load_split(cfg: &RunConfig, path: &Path, split: Split) -> Result<Vec<Quadruplet>> {
    let loaded = load_quadruplets(path, split, &cfg.schema(split)).with_context(|| format!("loading {}", path.display()))?;
    for r in &loaded.rejected {
        eprintln!("{}: record {} rejected: {}", path.display(), r.record, r.message);
    }
    Ok(loaded.records)
}

/// Seeds from `--seeds`, else `RUN_SEED`, else the config.
fn resolve_seeds(cfg: &RunConfig, flag: Option<Vec<u64>>) -> Result<Vec<u64>> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("RUN_SEED") {
        Ok(v) => Ok(vec![v.trim().parse().with_context(|| format!("RUN_SEED={v:?} is not an integer"))?]),
        Err(_) => Ok(cfg.training.seeds.clone()),
    }
}

pub fn train_cmd(config: &Path, kind: ModelKind, run_dir: &Path, seeds: Option<Vec<u64>>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    cfg.training.seeds = resolve_seeds(&cfg, seeds)?;
    cfg.validate()?;
    let train_path = cfg.data.train.clone().context("data.train is not set")?;
    let train_q = load_split(&cfg, &train_path, Split::Train)?;
    let val_q = match &cfg.data.val {
        Some(p) => Some(load_split(&cfg, p, Split::Val)?),
        None => None,
    };
    let vocab = Vocabulary::build(&train_q, cfg.data.min_freq)?;

    fs::create_dir_all(run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    let vocab_path = run_dir.join("vocab.txt");
    if vocab_path.exists() {
        let existing = load_vocab(&vocab_path)?;
        if existing.hash() != vocab.hash() {
            bail!(
                "{} was built from different training data; use a fresh run directory",
                vocab_path.display()
            );
        }
    } else {
        vocab.save(&vocab_path)?;
    }
    let kind_dir = run_dir.join(kind.name());
    fs::create_dir_all(&kind_dir).with_context(|| format!("creating {}", kind_dir.display()))?;
    let echo = kind_dir.join("config.toml");
    fs::write(&echo, cfg.to_toml()?).with_context(|| format!("writing {}", echo.display()))?;

    let train_set = encode_corpus(&train_q, &vocab, cfg.data.max_len);
    let val_set = val_q.map(|v| encode_corpus(&v, &vocab, cfg.data.max_len));
    let arch = cfg.architecture(kind, vocab.len())?;
    let mut stdout = std::io::stdout().lock();
    for &seed in &cfg.training.seeds {
        let dir = kind_dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let run = SeedRun {
            cfg: &cfg,
            arch: arch.clone(),
            vocab_hash: vocab.hash(),
            train_set: &train_set,
            val_set: val_set.as_deref(),
            seed,
            dir: &dir,
        };
        let (best_epoch, best_loss) = match cfg.training.dtype {
            Dtype::F32 => run.execute::<f32>()?,
            Dtype::F64 => run.execute::<f64>()?,
        };
        emit(
            &mut stdout,
            &json!({
                "model": kind.name(),
                "seed": seed,
                "checkpoint": dir.join("best.ckpt"),
                "best_epoch": best_epoch,
                "best_loss": best_loss,
                "log": dir.join("train_log.jsonl"),
            }),
        )?;
    }
    Ok(())
}

struct SeedRun<'a> {
    cfg: &'a RunConfig,
    arch: Architecture,
    vocab_hash: String,
    train_set: &'a [EncodedExample],
    val_set: Option<&'a [EncodedExample]>,
    seed: u64,
    dir: &'a Path,
}

impl SeedRun<'_> {
    fn execute<T: Scalar>(&self) -> Result<(usize, f64)> {
        let log_path = self.dir.join("train_log.jsonl");
        let mut log = std::io::BufWriter::new(
            fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
        );
        let mut write_err = None;
        let out = train::<T>(
            self.arch.clone(),
            self.train_set,
            self.val_set,
            &self.cfg.train_config(),
            self.seed,
            |l: &EpochLog| {
                let line = serde_json::to_string(l).expect("log line serializes");
                eprintln!("{line}");
                if let Err(e) = writeln!(log, "{line}") {
                    write_err.get_or_insert(e);
                }
            },
        )?;
        if let Some(e) = write_err {
            return Err(e).context("writing training log");
        }
        log.flush().context("writing training log")?;
        let best = Checkpoint {
            arch: self.arch.clone(),
            vocab_hash: self.vocab_hash.clone(),
            seed: Some(self.seed),
            params: out.best,
            optimizer: None,
        };
        best.save(self.dir.join("best.ckpt"))?;
        let last = Checkpoint {
            arch: self.arch.clone(),
            vocab_hash: self.vocab_hash.clone(),
            seed: Some(self.seed),
            params: out.model.params,
            optimizer: Some(out.optimizer),
        };
        last.save(self.dir.join("last.ckpt"))?;
        Ok((out.best_epoch, out.best_loss))
    }
}

pub struct EvalArgs {
    pub checkpoints: Vec<PathBuf>,
    pub vocab: PathBuf,
    pub data: PathBuf,
    pub split: Split,
    pub config: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn eval_cmd(args: EvalArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::for_profile(Profile::Paper),
    };
    let vocab = load_vocab(&args.vocab)?;
    let records = load_split(&cfg, &args.data, args.split)?;
    let examples = encode_corpus(&records, &vocab, cfg.data.max_len);
    let opts = cfg.eval_options();
    let annotations = match args.annotations.as_ref().or(cfg.eval.annotations.as_ref()) {
        Some(p) => Some(load_annotations(p)?),
        None => None,
    };
    let mut runs = Vec::with_capacity(args.checkpoints.len());
    for (i, path) in args.checkpoints.iter().enumerate() {
        let (model, seed) = load_model(path, &vocab)?;
        let kind = model.kind();
        eprintln!("evaluating {} ({kind})", path.display());
        let eval = with_model!(&model, m => evaluate(m, &examples, &opts))?;
        let correct_at_100 = match &annotations {
            Some(a) if kind.generates() => Some(correct_at_k(a, cfg.eval.correct_k)?),
            _ => None,
        };
        runs.push(RunResult {
            kind,
            seed: seed.unwrap_or(i as u64),
            checkpoint: path.display().to_string(),
            eval,
            correct_at_100,
        });
    }
    let hash = args.config.as_ref().map(|_| cfg.hash()).transpose()?;
    let report = build_report(&runs, &opts, hash);
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing output"),
    }
}

pub struct InferArgs {
    pub checkpoint: PathBuf,
    pub vocab: PathBuf,
    pub input: Option<PathBuf>,
    pub max_len: usize,
}

fn open_inference(args: &InferArgs) -> Result<(crate::models::AnyModel, Vocabulary, Vec<EncodedPair>)> {
    let vocab = load_vocab(&args.vocab)?;
    let (model, _) = load_model(&args.checkpoint, &vocab)?;
    let max_pos = with_model!(&model, m => m.arch.model.max_pos);
    let pairs = read_pairs(args.input.as_deref(), &vocab, args.max_len.min(max_pos))?;
    Ok((model, vocab, pairs))
}

fn line_ctx(i: usize) -> impl Fn() -> String {
    move || format!("input record {}", i + 1)
}

pub fn generate(args: InferArgs) -> Result<()> {
    let (model, vocab, pairs) = open_inference(&args)?;
    if !model.kind().generates() {
        bail!("{} does not generate explanations", model.kind());
    }
    let mut stdout = std::io::stdout().lock();
    for (i, p) in pairs.iter().enumerate() {
        let pred = with_model!(&model, m => m.predict(p.premise.as_deref(), p.hypothesis.as_deref(), args.max_len))
            .with_context(line_ctx(i))?;
        let mut v = json!({
            "index": i,
            "explanation": text(&vocab, pred.explanation.as_deref().unwrap_or_default()),
        });
        if let Some(l) = pred.label.and_then(Label::from_id) {
            v["label"] = l.word().into();
        }
        emit(&mut stdout, &v)?;
    }
    Ok(())
}

pub fn classify(args: InferArgs) -> Result<()> {
    let (model, _, pairs) = open_inference(&args)?;
    if !model.kind().classifies() {
        bail!("{} does not predict labels", model.kind());
    }
    let mut stdout = std::io::stdout().lock();
    for (i, p) in pairs.iter().enumerate() {
        let pred = with_model!(&model, m => m.predict(p.premise.as_deref(), p.hypothesis.as_deref(), args.max_len))
            .with_context(line_ctx(i))?;
        let label = pred.label.and_then(Label::from_id).expect("classifier yields a label");
        emit(&mut stdout, &json!({ "index": i, "label": label.word() }))?;
    }
    Ok(())
}

pub fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "diagonal" => Ok(Direction::Diagonal),
        d => d
            .parse()
            .map(Direction::Dimension)
            .map_err(|_| format!("expected `diagonal` or a dimension index, got `{d}`")),
    }
}

pub fn interpolate(args: InferArgs, ks: &[f64], direction: Direction, dedupe: bool) -> Result<()> {
    let (model, vocab, pairs) = open_inference(&args)?;
    if !model.kind().is_latent() {
        bail!("{} has no latent space to interpolate", model.kind());
    }
    let mut stdout = std::io::stdout().lock();
    for (i, p) in pairs.iter().enumerate() {
        let hypothesis = p
            .hypothesis
            .as_deref()
            .ok_or(interaction_core::Error::MissingInput("hypothesis"))
            .with_context(line_ctx(i))?;
        let premise = p
            .premise
            .as_deref()
            .ok_or(interaction_core::Error::MissingInput("premise"))
            .with_context(line_ctx(i))?;
        let outs = with_model!(&model, m => m.interpolate(premise, hypothesis, ks, direction, args.max_len))
            .with_context(line_ctx(i))?
            .expect("latent model");
        let label = match model.kind().classifies() {
            true => with_model!(&model, m => m.predict(Some(premise), Some(hypothesis), args.max_len))
                .with_context(line_ctx(i))?
                .label
                .and_then(Label::from_id)
                .map(Label::word),
            false => None,
        };
        let mut seen = std::collections::HashSet::new();
        for (k, ids) in ks.iter().zip(outs) {
            if dedupe && !seen.insert(ids.clone()) {
                continue;
            }
            emit(
                &mut stdout,
                &json!({
                    "index": i,
                    "premise": p.raw.premise,
                    "hypothesis": p.raw.hypothesis,
                    "label": label,
                    "k": k,
                    "explanation": text(&vocab, &ids),
                }),
            )?;
        }
    }
    Ok(())
}

pub fn params(
    kinds: &[ModelKind],
    config: Option<&Path>,
    profile: Option<Profile>,
    vocab_size: Option<usize>,
    vocab: Option<&Path>,
) -> Result<()> {
    let cfg = match (config, profile) {
        (Some(p), None) => RunConfig::load(p)?,
        (None, p) => RunConfig::for_profile(p.unwrap_or(Profile::Paper)),
        (Some(_), Some(_)) => bail!("give either --config or --profile"),
    };
    let v = match (vocab_size, vocab) {
        (Some(n), None) => n,
        (None, Some(p)) => load_vocab(p)?.len(),
        _ => bail!("give exactly one of --vocab-size or --vocab"),
    };
    let mut stdout = std::io::stdout().lock();
    for &kind in kinds {
        let arch = cfg.architecture(kind, v)?;
        emit(
            &mut stdout,
            &json!({ "model": kind.name(), "vocab_size": v, "params": arch.param_count() }),
        )?;
    }
    Ok(())
}
