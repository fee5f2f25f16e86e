//! `modcrf` command line: train, eval, predict, experiment, verify.
//!
//! Exit codes: 0 success, 1 verification failure, 2 config error, 3 data
//! error, 4 checkpoint error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use modcrf::config::RunConfig;
use modcrf::data::{
    generate_synthetic_corpus, load_embeddings, read_conll, write_conll, AnnotatedSentence, Annotation, Corpus, SynthSpec, Token,
};
use modcrf::eval::EvalMode;
use modcrf::experiment::{median_f1, results_table, run_experiment, ExperimentData, ExperimentSpec, Protocol};
use modcrf::labels::{LabelSpace, Scheme};
use modcrf::model::Model;
use modcrf::numeric::Archive;
use modcrf::train::{evaluate_head, train};
use modcrf::{verify, Error, Result};

#[derive(Parser)]
#[command(name = "modcrf", version, about = "Modular neural-CRF sequence labeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes a checkpoint, a per-epoch log and a manifest.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Score a checkpoint on a fully labeled CoNLL file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// full, seg or typ.
        #[arg(long, default_value = "full")]
        mode: EvalMode,
        /// Tagging scheme of the data file.
        #[arg(long, default_value = "BIO2")]
        scheme: Scheme,
    },
    /// Label a CoNLL file; every input line gets the predicted label appended.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a weak-supervision protocol and print a results table.
    Experiment {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        spec: SpecArgs,
        /// Also write the results table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle suite; exits 1 on any failure.
    Verify,
    /// Write a synthetic fully labeled corpus in CoNLL format.
    Synth {
        #[arg(long, default_value_t = 300)]
        sentences: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Lexicon domain; domains share only the type-trigger words.
        #[arg(long, default_value_t = 0)]
        domain: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value configuration file; every key has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set lr=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    variant: Option<String>,
    /// Training files, comma separated.
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    dev: Option<String>,
    #[arg(long)]
    test: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got `{kv}`")))?;
            c.set(k, v)?;
        }
        let flags = [
            ("variant", &self.variant),
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
            ("seed", &self.seed),
            ("max_epochs", &self.max_epochs),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                c.set(k, v)?;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct SpecArgs {
    /// knowledge-integration, partial-curve or domain-transfer.
    #[arg(long)]
    protocol: Protocol,
    /// Comma-separated fractions.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
    grid: Vec<f64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Kind of added partial labels (seg or typ); defaults by protocol.
    #[arg(long)]
    partial: Option<modcrf::data::Projection>,
    #[arg(long, default_value_t = 0.2)]
    full_fraction: f64,
    /// Synthetic corpus sizes, used unless `train`/`dev`/`test` are set.
    #[arg(long, default_value_t = 200)]
    pool: usize,
    #[arg(long, default_value_t = 50)]
    dev_size: usize,
    #[arg(long, default_value_t = 100)]
    test_size: usize,
    #[arg(long, default_value_t = 200)]
    ood_size: usize,
    #[arg(long, default_value_t = 7)]
    data_seed: u64,
    /// Fully labeled out-of-domain file for domain transfer.
    #[arg(long)]
    ood: Option<PathBuf>,
}

fn label_space(c: &RunConfig) -> Result<LabelSpace> {
    LabelSpace::new(c.scheme, &c.types)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("`{key}` path is not set")))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_train(config: &ConfigArgs, out: &Path) -> Result<()> {
    let c = config.resolve()?;
    let space = label_space(&c)?;
    if c.train_paths.is_empty() {
        return Err(Error::Config("`train` path is not set".into()));
    }
    let parts = c
        .train_paths
        .iter()
        .map(|p| read_conll(p, &space, None))
        .collect::<Result<Vec<_>>>()?;
    let train_corpus = Corpus::concat(&parts.iter().collect::<Vec<_>>(), "train")?;
    let dev = read_conll(required(&c.dev_path, "dev")?, &space, None)?;
    let embeddings = match &c.embeddings_path {
        Some(p) => Some(load_embeddings(p, c.encoder.word_embed_dim, c.train.seed)?),
        None => None,
    };
    let vocab = modcrf::data::Vocabulary::from_corpora(&[&train_corpus]);
    let mut model = Model::new(
        c.variant,
        &c.types,
        &c.encoder,
        c.weights,
        vocab,
        embeddings.as_ref(),
        c.train.seed,
    )?;
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    write(&out.join("manifest.txt"), c.manifest())?;
    println!("epoch\tloss\tdev_f1");
    let outcome = train(&mut model, &train_corpus, &dev, &c.train, |r| println!("{r}"))?;
    write(&out.join("train.log"), outcome.log_text())?;
    model.to_archive().save(&out.join("model.ckpt"))?;
    println!(
        "best epoch {} dev F1 {:.4}; wrote {}",
        outcome.best_epoch,
        outcome.best_dev_f1,
        out.display()
    );
    if let Some(test) = &c.test_path {
        let test = read_conll(test, &space, None)?;
        let r = evaluate_head(&model, &test, EvalMode::Full)?;
        println!("test\n{r}");
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    Model::from_archive(&Archive::load(path)?)
}

fn cmd_eval(checkpoint: &Path, data: &Path, mode: EvalMode, scheme: Scheme) -> Result<()> {
    let model = load_model(checkpoint)?;
    if mode != EvalMode::Full && !model.variant().is_modular() {
        return Err(Error::Config(format!(
            "the {} variant has no {mode} head",
            model.variant()
        )));
    }
    let space = model.net.space().with_scheme(scheme);
    let corpus = read_conll(data, &space, None)?;
    if !corpus.is_fully_labeled() {
        return Err(Error::Validation(format!("{} is not fully labeled", data.display())));
    }
    let r = evaluate_head(&model, &corpus, mode)?;
    println!("{r}");
    Ok(())
}

fn cmd_predict(checkpoint: &Path, input: &Path, output: Option<&Path>) -> Result<()> {
    let model = load_model(checkpoint)?;
    let text = fs::read_to_string(input).map_err(|e| Error::Io {
        path: input.to_path_buf(),
        source: e,
    })?;
    // Sentences as runs of non-blank lines; the token is the first column.
    let mut blocks: Vec<Vec<&str>> = vec![Vec::new()];
    for line in text.lines() {
        if line.trim().is_empty() {
            if !blocks.last().expect("nonempty").is_empty() {
                blocks.push(Vec::new());
            }
        } else {
            blocks.last_mut().expect("nonempty").push(line);
        }
    }
    if blocks.last().is_some_and(|b| b.is_empty()) {
        blocks.pop();
    }
    let mut out = String::new();
    for (i, block) in blocks.iter().enumerate() {
        let tokens = block
            .iter()
            .map(|l| Token::new(l.split_whitespace().next().expect("nonblank")))
            .collect();
        let sentence = AnnotatedSentence::new(i, tokens, Annotation::Unlabeled)?;
        let labels = model.predict(&sentence)?;
        if i > 0 {
            out.push('\n');
        }
        for (line, label) in block.iter().zip(labels) {
            out.push_str(&format!("{}\t{label}\n", line.trim_end()));
        }
    }
    match output {
        Some(p) => write(p, out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn cmd_experiment(config: &ConfigArgs, args: &SpecArgs, out: Option<&Path>) -> Result<()> {
    let c = config.resolve()?;
    let mut spec = ExperimentSpec::new(args.protocol, args.grid.clone(), args.seeds.clone());
    if let Some(p) = args.partial {
        spec.partial = p;
    }
    spec.full_fraction = args.full_fraction;
    spec.validate()?;
    let data = if c.train_paths.is_empty() {
        let synth = SynthSpec {
            types: c.types.clone(),
            ..SynthSpec::default()
        };
        let ood = if args.protocol == Protocol::DomainTransfer { args.ood_size } else { 0 };
        ExperimentData::synthetic(&synth, args.pool, args.dev_size, args.test_size, ood, args.data_seed)?
    } else {
        let space = label_space(&c)?;
        let parts = c
            .train_paths
            .iter()
            .map(|p| read_conll(p, &space, None))
            .collect::<Result<Vec<_>>>()?;
        ExperimentData {
            pool: Corpus::concat(&parts.iter().collect::<Vec<_>>(), "pool")?,
            dev: read_conll(required(&c.dev_path, "dev")?, &space, None)?,
            test: read_conll(required(&c.test_path, "test")?, &space, None)?,
            out_of_domain: args.ood.as_deref().map(|p| read_conll(p, &space, None)).transpose()?,
        }
    };
    let rows = run_experiment(&spec, &data, &c)?;
    let table = results_table(&rows);
    print!("{table}");
    println!("\nfraction\tsystem\tmedian_f1");
    for (f, s, m) in median_f1(&rows) {
        println!("{f}\t{s}\t{m:.4}");
    }
    if let Some(p) = out {
        write(p, table)?;
    }
    Ok(())
}

fn cmd_synth(sentences: usize, seed: u64, domain: u64, output: &Path) -> Result<()> {
    let spec = SynthSpec {
        sentences,
        domain,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, seed)?;
    write_conll(&corpus, output)
}

fn cmd_verify() -> Result<bool> {
    let report = verify::run_all()?;
    println!("{report}");
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { config, out } => cmd_train(config, out).map(|_| true),
        Command::Eval {
            checkpoint,
            data,
            mode,
            scheme,
        } => cmd_eval(checkpoint, data, *mode, *scheme).map(|_| true),
        Command::Predict {
            checkpoint,
            input,
            output,
        } => cmd_predict(checkpoint, input, output.as_deref()).map(|_| true),
        Command::Experiment { config, spec, out } => cmd_experiment(config, spec, out.as_deref()).map(|_| true),
        Command::Verify => cmd_verify(),
        Command::Synth {
            sentences,
            seed,
            domain,
            output,
        } => cmd_synth(*sentences, *seed, *domain, output).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
