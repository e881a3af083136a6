//! `unimrp`: train, parse, evaluate, convert, split and ensemble.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser as ClapParser, Subcommand};
use thiserror::Error;
use unimrp::eds::{generate_abstract_nodes, ConversionRuleSet};
use unimrp::encoder::{ContextualEmbeddings, StaticEmbeddings};
use unimrp::evaluator::{evaluate, EvalOptions};
use unimrp::graph::{read_companion, read_mrp, validate_graph, write_mrp, Companion};
use unimrp::model::Embeddings;
use unimrp::parallel::{self, Execution};
use unimrp::trainer::ensemble::{ensemble_predict, Member};
use unimrp::trainer::{
    build_ensemble, fine_tune_all, load_bundle, predict_corpus, split_dataset, train_multitask, train_single,
    EnsembleMember, TrainConfig,
};
use unimrp::{Corpus, Framework, MrpGraph};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] unimrp::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(ClapParser, Debug)]
#[command(name = "unimrp", version, about = "Graph-based meaning representation parser")]
struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Inputs {
    /// Companion token file.
    #[arg(long)]
    companion: PathBuf,
    /// Static word vectors (`word v1 ... vd` per line).
    #[arg(long = "static")]
    statics: Option<PathBuf>,
    /// Contextual vectors (JSON lines).
    #[arg(long)]
    contextual: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; writes checkpoints, metrics and the model bundle.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training graphs (MRP JSON lines).
        #[arg(long)]
        graphs: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated frameworks, e.g. `dm,psd`.
        #[arg(long)]
        framework: Option<String>,
        /// Train every framework jointly.
        #[arg(long)]
        multitask: bool,
        /// After multi-task training, fine-tune each framework.
        #[arg(long, requires = "multitask")]
        fine_tune: bool,
        /// Run name; the run directory is `<out>/<name>`.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Predict graphs for every companion sentence.
    Parse {
        /// Model bundle directory.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        framework: Option<String>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold graphs.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        framework: Option<String>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Write the JSON report here; the table always goes to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert DM graphs to EDS.
    Convert {
        /// DM graphs.
        #[arg(long)]
        pred: PathBuf,
        /// Model bundle with an EDS head; without it only rules apply and
        /// abstract nodes stay unanchored.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        companion: Option<PathBuf>,
        #[arg(long = "static")]
        statics: Option<PathBuf>,
        #[arg(long)]
        contextual: Option<PathBuf>,
        /// Conversion rules (JSON) used when no model is given.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write training and validation manifests.
    Split {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        companion: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedily ensemble trained models on held-out gold graphs.
    Ensemble {
        /// Candidate model bundles (repeat the flag).
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// Held-out gold graphs used for selection.
        #[arg(long)]
        gold: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        framework: String,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Directory for the ensemble spec and its predictions.
        #[arg(long)]
        out: PathBuf,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn read_graphs(path: &Path) -> Result<Vec<MrpGraph>> {
    Ok(read_mrp(open(path)?)?)
}

fn read_tokens(path: &Path) -> Result<Companion> {
    Ok(read_companion(open(path)?)?)
}

fn read_embeddings(statics: Option<&Path>, contextual: Option<&Path>, seed: u64) -> Result<Embeddings> {
    let statics = match statics {
        Some(p) => Some(StaticEmbeddings::read(open(p)?, seed)?),
        None => None,
    };
    let contextual = match contextual {
        Some(p) => Some(ContextualEmbeddings::read(open(p)?)?),
        None => None,
    };
    Ok(Embeddings { statics, contextual })
}

fn frameworks(arg: Option<&str>) -> Result<Option<Vec<Framework>>> {
    arg.map(|s| Framework::parse_list(s).map_err(|e| CliError::Usage(e.to_string())))
        .transpose()
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| CliError::File {
                path: p.to_path_buf(),
                source,
            })?;
            Ok(TrainConfig::from_toml(&text)?)
        }
        None => Ok(TrainConfig::default()),
    }
}

/// Graphs that fail validation abort the write.
fn write_valid(path: &Path, graphs: &[MrpGraph]) -> Result<()> {
    for g in graphs {
        let v = validate_graph(g);
        if !v.is_empty() {
            return Err(CliError::Run(unimrp::Error::Validation {
                id: g.id.clone(),
                message: v.join("; "),
            }));
        }
    }
    let mut w = create(path)?;
    write_mrp(graphs, &mut w)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    config: Option<&Path>,
    graphs: &Path,
    inputs: &Inputs,
    framework: Option<&str>,
    multitask: bool,
    fine_tune: bool,
    name: Option<String>,
    seed: Option<u64>,
    scale: Option<f64>,
    jobs: Option<usize>,
    out: &Path,
) -> Result<()> {
    let fws = frameworks(framework)?;
    let mut cfg = load_config(config)?;
    if let Some(n) = name {
        cfg.name = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = scale {
        cfg.scale = s;
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    if !multitask && fws.is_none() {
        return Err(CliError::Usage("train needs --framework or --multitask".into()));
    }
    let mut corpus = Corpus::assemble(read_tokens(&inputs.companion)?, read_graphs(graphs)?)?;
    if let Some(keep) = &fws {
        for s in &mut corpus.sentences {
            s.graphs.retain(|fw, _| keep.contains(fw));
        }
    }
    let emb = read_embeddings(inputs.statics.as_deref(), inputs.contextual.as_deref(), cfg.seed)?;
    let dir = out.join(&cfg.name);
    fs::create_dir_all(&dir).map_err(|source| CliError::File {
        path: dir.clone(),
        source,
    })?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    let split = split_dataset(&corpus, &cfg.split, cfg.scale, cfg.seed)?;
    write_text(&dir.join("split.json"), &split.to_json())?;
    let train_set = split.train_sentences(&corpus);
    let validation = split.validation_i_sentences(&corpus);
    log::info!("{} training and {} validation sentences", train_set.len(), validation.len());
    let model = parallel::with_jobs(cfg.jobs, || -> unimrp::Result<_> {
        if multitask {
            let m = train_multitask(&train_set, &validation, &emb, &cfg, Some(&dir))?;
            if fine_tune {
                return fine_tune_all(&m, &train_set, &validation, &emb, &cfg, Some(&dir));
            }
            Ok(m)
        } else {
            train_single(fws.as_deref().unwrap_or_default(), &train_set, &validation, &emb, &cfg, Some(&dir))
        }
    })?;
    model.save(&dir.join("model"))?;
    let selected: BTreeMap<&str, usize> = model.best.iter().map(|(k, c)| (k.as_str(), c.epoch)).collect();
    let summary = serde_json::json!({ "name": cfg.name, "seed": cfg.seed, "best_epochs": selected });
    write_text(&dir.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))?;
    println!("model written to {}", dir.join("model").display());
    Ok(())
}

fn parse(model: &Path, inputs: &Inputs, framework: Option<&str>, jobs: usize, out: &Path) -> Result<()> {
    let requested = frameworks(framework)?;
    let (parser, stores) = load_bundle(model)?;
    let fws = requested.unwrap_or_else(|| parser.frameworks.clone());
    for fw in &fws {
        if !parser.has(*fw) {
            return Err(CliError::Usage(format!("model has no {fw} head")));
        }
    }
    let corpus = Corpus::assemble(read_tokens(&inputs.companion)?, Vec::new())?;
    let seed = 0;
    let emb = read_embeddings(inputs.statics.as_deref(), inputs.contextual.as_deref(), seed)?;
    let graphs = parallel::with_jobs(jobs, || {
        predict_corpus(&parser, &stores, &corpus.sentences, &emb, &fws, Execution::from_jobs(jobs))
    })?;
    write_valid(out, &graphs)
}

fn evaluate_cmd(gold: &Path, pred: &Path, framework: Option<&str>, jobs: usize, out: Option<&Path>) -> Result<()> {
    let keep = frameworks(framework)?;
    let mut gold = read_graphs(gold)?;
    let mut pred = read_graphs(pred)?;
    if let Some(keep) = keep {
        gold.retain(|g| keep.contains(&g.framework));
        pred.retain(|g| keep.contains(&g.framework));
    }
    let report = parallel::with_jobs(jobs, || evaluate(&gold, &pred, EvalOptions::default(), Execution::from_jobs(jobs)))?;
    print!("{}", report.to_table());
    if let Some(p) = out {
        write_text(p, &report.to_json())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn convert(
    pred: &Path,
    model: Option<&Path>,
    companion: Option<&Path>,
    statics: Option<&Path>,
    contextual: Option<&Path>,
    rules: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let dm: Vec<MrpGraph> = read_graphs(pred)?.into_iter().filter(|g| g.framework == Framework::Dm).collect();
    let graphs = match model {
        Some(m) => {
            let (parser, stores) = load_bundle(m)?;
            let companion = companion.ok_or_else(|| CliError::Usage("--model needs --companion".into()))?;
            let corpus = Corpus::assemble(read_tokens(companion)?, Vec::new())?;
            let emb = read_embeddings(statics, contextual, 0)?;
            let store = stores
                .get(&Framework::Eds)
                .ok_or_else(|| CliError::Usage("model has no EDS parameters".into()))?;
            let by_id: BTreeMap<&str, &unimrp::Sentence> = corpus.sentences.iter().map(|s| (s.id.as_str(), s)).collect();
            let mut out = Vec::with_capacity(dm.len());
            for g in &dm {
                let s = by_id.get(g.id.as_str()).ok_or_else(|| {
                    CliError::Run(unimrp::Error::Alignment {
                        id: g.id.clone(),
                        message: "no companion tokens".into(),
                    })
                })?;
                let features = parser.features(s, &emb)?;
                out.push(parser.predict_eds(store, s, &features, g)?);
            }
            out
        }
        None => {
            let rules = match rules {
                Some(p) => ConversionRuleSet::read(open(p)?)?,
                None => ConversionRuleSet::default(),
            };
            dm.iter().map(|g| generate_abstract_nodes(g, &rules, None).graph).collect()
        }
    };
    write_valid(out, &graphs)
}

fn split(
    config: Option<&Path>,
    graphs: &Path,
    companion: &Path,
    seed: Option<u64>,
    scale: Option<f64>,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    let corpus = Corpus::assemble(read_tokens(companion)?, read_graphs(graphs)?)?;
    let split = split_dataset(&corpus, &cfg.split, scale.unwrap_or(cfg.scale), seed.unwrap_or(cfg.seed))?;
    write_text(&out.join("split.json"), &split.to_json())?;
    for (part, ids) in [("train", &split.train)] {
        write_text(&out.join(format!("{part}.ids")), &ids.iter().map(|i| format!("{i}\n")).collect::<String>())?;
    }
    for (fw, ids) in &split.validation_i {
        write_text(&out.join(format!("validation-i.{fw}.ids")), &ids.iter().map(|i| format!("{i}\n")).collect::<String>())?;
    }
    for (fw, ids) in &split.validation_ii {
        write_text(&out.join(format!("validation-ii.{fw}.ids")), &ids.iter().map(|i| format!("{i}\n")).collect::<String>())?;
    }
    Ok(())
}

fn f1_of(gold: &[MrpGraph], pred: &[MrpGraph], fw: Framework, exec: Execution) -> unimrp::Result<f64> {
    let report = evaluate(gold, pred, EvalOptions::default(), exec)?;
    Ok(report.framework(fw).map_or(0.0, |f| f.all.f1))
}

fn ensemble(models: &[PathBuf], gold: &Path, inputs: &Inputs, framework: &str, jobs: usize, out: &Path) -> Result<()> {
    let fw = match Framework::parse_list(framework).map_err(|e| CliError::Usage(e.to_string()))?.as_slice() {
        [fw] => *fw,
        _ => return Err(CliError::Usage("ensemble takes exactly one framework".into())),
    };
    let gold: Vec<MrpGraph> = read_graphs(gold)?.into_iter().filter(|g| g.framework == fw).collect();
    let corpus = Corpus::assemble(read_tokens(&inputs.companion)?, Vec::new())?;
    let ids: std::collections::BTreeSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    let sentences: Vec<unimrp::Sentence> = corpus.sentences.iter().filter(|s| ids.contains(s.id.as_str())).cloned().collect();
    let emb = read_embeddings(inputs.statics.as_deref(), inputs.contextual.as_deref(), 0)?;
    let bundles = models.iter().map(|m| load_bundle(m)).collect::<unimrp::Result<Vec<_>>>()?;
    let exec = Execution::from_jobs(jobs);
    let members: Vec<Member> = bundles.iter().map(|(p, s)| Member { parser: p, stores: s }).collect();
    let predict = |idx: &[usize]| -> unimrp::Result<Vec<MrpGraph>> {
        let chosen: Vec<Member> = idx.iter().map(|&i| Member { parser: members[i].parser, stores: members[i].stores }).collect();
        parallel::with_jobs(jobs, || ensemble_predict(&chosen, &sentences, &emb, fw, exec))
    };
    let mut candidates = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let f1 = f1_of(&gold, &predict(&[i])?, fw, exec)?;
        log::info!("{}: F1 {f1:.4}", m.display());
        candidates.push(EnsembleMember {
            name: m.display().to_string(),
            f1,
        });
    }
    let spec = build_ensemble(&candidates, fw, |idx| {
        f1_of(&gold, &predict(idx)?, fw, exec)
    })?;
    let chosen: Vec<usize> = spec
        .members
        .iter()
        .map(|n| candidates.iter().position(|c| &c.name == n).expect("selected from candidates"))
        .collect();
    let graphs = predict(&chosen)?;
    write_text(&out.join("ensemble.json"), &(serde_json::to_string_pretty(&spec).expect("json") + "\n"))?;
    write_valid(&out.join("predictions.mrp"), &graphs)?;
    println!("{} members, F1 {:.4}", spec.members.len(), spec.f1);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            graphs,
            inputs,
            framework,
            multitask,
            fine_tune,
            name,
            seed,
            scale,
            jobs,
            out,
        } => train(
            config.as_deref(),
            &graphs,
            &inputs,
            framework.as_deref(),
            multitask,
            fine_tune,
            name,
            seed,
            scale,
            jobs,
            &out,
        ),
        Command::Parse {
            model,
            inputs,
            framework,
            jobs,
            out,
        } => parse(&model, &inputs, framework.as_deref(), jobs, &out),
        Command::Evaluate {
            gold,
            pred,
            framework,
            jobs,
            out,
        } => evaluate_cmd(&gold, &pred, framework.as_deref(), jobs, out.as_deref()),
        Command::Convert {
            pred,
            model,
            companion,
            statics,
            contextual,
            rules,
            out,
        } => convert(
            &pred,
            model.as_deref(),
            companion.as_deref(),
            statics.as_deref(),
            contextual.as_deref(),
            rules.as_deref(),
            &out,
        ),
        Command::Split {
            config,
            graphs,
            companion,
            seed,
            scale,
            out,
        } => split(config.as_deref(), &graphs, &companion, seed, scale, &out),
        Command::Ensemble {
            models,
            gold,
            inputs,
            framework,
            jobs,
            out,
        } => ensemble(&models, &gold, &inputs, &framework, jobs, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
