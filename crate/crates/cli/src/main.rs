use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use tablecls::config::{BackendSpec, ClusterCount, ConfigOverlay, EnsembleOverlay, NegativesOverlay, RunConfig, CONFIG_KEYS};
use tablecls::distance::MetricKind;
use tablecls::harness::{load_run_dataset, make_backends, run_experiment};
use tablecls::pipeline::Pipeline;
use tablecls::table::{estimate_tokens, serialize, to_table, FormatKind, TableFormat};

#[derive(Parser)]
#[command(name = "tablecls", version, about = "Classify multivariate time series by prompting a language model with tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the test split and write records and a report.
    Classify(RunArgs),
    /// Serialize samples as tables and estimate their token cost.
    Encode(EncodeArgs),
    /// Write the rendered prompt of one test sample without calling a backend.
    DumpPrompt(DumpArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset short code (AF, AWR, ...) or archive name.
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding <name>/<name>_TRAIN.ts or <name>_TRAIN.ts.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// JSON config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use placeholder text when no dataset card is found.
    #[arg(long, alias = "no-card")]
    allow_missing_card: bool,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// ed, sed, man or dtw.
    #[arg(long)]
    metric: Option<MetricKind>,
    /// Sakoe-Chiba window for dtw.
    #[arg(long)]
    dtw_window: Option<usize>,
    /// Number of retrieved neighbors shown in the prompt.
    #[arg(long)]
    k: Option<usize>,
    /// Number of contrastive negatives (0 disables clustering).
    #[arg(long)]
    negatives: Option<usize>,
    /// Cluster count for negatives: an integer or "classes".
    #[arg(long)]
    k_clusters: Option<ClusterCount>,
    /// dfloader, markdown, json or html.
    #[arg(long)]
    format: Option<FormatKind>,
    /// Decimal places of table values.
    #[arg(long)]
    precision: Option<usize>,
    /// Comma-separated sampling temperatures, one inference path each.
    #[arg(long, value_delimiter = ',')]
    temps: Option<Vec<f64>>,
    /// mock, http or http:<model>.
    #[arg(long)]
    backend: Option<BackendSpec>,
    #[arg(long)]
    model: Option<String>,
    /// Append the incentive sentence to every prompt.
    #[arg(long)]
    magic_words: bool,
    /// Z-normalize every channel with training statistics.
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Results root; runs go to <out>/<dataset>/<config-hash>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep records already on disk and classify only the rest.
    #[arg(long)]
    resume: bool,
    /// Save every rendered prompt under the run directory.
    #[arg(long)]
    dump_prompts: bool,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Test-split sample index; repeat for several.
    #[arg(long, default_value = "0")]
    sample: Vec<usize>,
    /// Read samples from the training split.
    #[arg(long)]
    train: bool,
    /// dfloader, markdown, json, html or all.
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long)]
    precision: Option<usize>,
    /// Write <sample>.<format>.txt files here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Test-split sample index.
    #[arg(long, default_value_t = 0)]
    sample: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn config_keys_help() -> String {
    let mut text = String::from("Config file keys (JSON, nested objects for dotted keys):\n");
    for key in CONFIG_KEYS {
        text.push_str("  ");
        text.push_str(key);
        text.push('\n');
    }
    text.push_str("\nEnvironment: TT_API_URL, TT_API_KEY, TT_MODEL, TT_DATA_DIR\n");
    text.push_str("Precedence: flags > environment > config file > dataset profile > defaults");
    text
}

impl DataArgs {
    fn overlay(&self) -> ConfigOverlay {
        ConfigOverlay {
            dataset: self.dataset.clone(),
            data_dir: self.data_dir.clone(),
            allow_missing_card: self.allow_missing_card.then_some(true),
            ..Default::default()
        }
    }

    fn resolve(&self, flags: ConfigOverlay) -> anyhow::Result<RunConfig> {
        let file = match &self.config {
            Some(path) => ConfigOverlay::from_file(path)?,
            None => ConfigOverlay::default(),
        };
        let env = ConfigOverlay::from_env();
        Ok(RunConfig::resolve(&[&file, &env, &flags])?)
    }
}

impl RunArgs {
    fn overlay(&self) -> ConfigOverlay {
        let negatives = (self.negatives.is_some() || self.k_clusters.is_some())
            .then(|| NegativesOverlay { count: self.negatives, k_clusters: self.k_clusters, ..Default::default() });
        ConfigOverlay {
            metric: self.metric,
            dtw_window: self.dtw_window,
            k: self.k,
            format: self.format,
            precision: self.precision,
            backend: self.backend.clone(),
            model: self.model.clone(),
            magic_words: self.magic_words.then_some(true),
            normalize: self.normalize.then_some(true),
            seed: self.seed,
            parallelism: self.parallelism,
            out: self.out.clone(),
            resume: self.resume.then_some(true),
            dump_prompts: self.dump_prompts.then_some(true),
            negatives,
            ensemble: self.temps.clone().map(|t| EnsembleOverlay { temperatures: Some(t), backends: None }),
            ..self.data.overlay()
        }
    }

    fn resolve(&self) -> anyhow::Result<RunConfig> {
        self.data.resolve(self.overlay())
    }
}

fn cmd_classify(args: &RunArgs) -> anyhow::Result<()> {
    let config = args.resolve()?;
    let dataset = load_run_dataset(&config)?;
    let backends = make_backends(&config, &dataset.classes, &config.run_dir())?;
    log::info!(
        "{}: metric={} k={} format={} negatives={} paths={}",
        dataset.name,
        config.metric,
        config.k,
        config.format,
        config.negatives.count,
        config.ensemble.temperatures.len() * backends.len()
    );
    let out = run_experiment(&config, &dataset, &backends)?;
    let r = &out.report;
    println!(
        "{} accuracy={:.4} macro_f1={:.4} unparsed={} n_test={} run_dir={}",
        r.dataset,
        r.accuracy,
        r.macro_f1,
        r.unparsed,
        r.n_test,
        out.run_dir.display()
    );
    Ok(())
}

fn cmd_encode(args: &EncodeArgs) -> anyhow::Result<()> {
    let kinds: Vec<FormatKind> = if args.format.eq_ignore_ascii_case("all") {
        FormatKind::ALL.to_vec()
    } else {
        vec![args.format.parse()?]
    };
    let mut flags = args.data.overlay();
    flags.precision = args.precision;
    let config = args.data.resolve(flags)?;
    let dataset = load_run_dataset(&config)?;
    let split = if args.train { &dataset.train } else { &dataset.test };
    if let Some(dir) = &args.output {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    for &index in &args.sample {
        let Some(sample) = split.get(index) else {
            bail!("sample {index} out of range (split has {} samples)", split.len());
        };
        let table = to_table(sample, &dataset.channel_names)?;
        let mut tokens = Vec::new();
        for &kind in &kinds {
            let text = serialize(&table, TableFormat::with_precision(kind, config.precision));
            tokens.push((kind, estimate_tokens(&text)));
            match &args.output {
                Some(dir) => {
                    let path = dir.join(format!("{index}.{kind}.txt"));
                    fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
                }
                None if kinds.len() > 1 => println!("== sample {index} {kind} ==\n{text}"),
                None => println!("{text}"),
            }
        }
        let summary = tokens.iter().map(|(k, n)| format!("{k}={n}")).collect::<Vec<_>>().join(" ");
        if kinds.len() > 1 {
            println!("tokens sample={index} {summary}");
        } else {
            eprintln!("tokens sample={index} {summary}");
        }
    }
    Ok(())
}

fn cmd_dump_prompt(args: &DumpArgs) -> anyhow::Result<()> {
    let config = args.run.resolve()?;
    let dataset = load_run_dataset(&config)?;
    let Some(sample) = dataset.test.get(args.sample) else {
        bail!("sample {} out of range (test split has {} samples)", args.sample, dataset.test.len());
    };
    let prompt = Pipeline::new(&config, &dataset)?.prepare(&sample.values)?;
    match &args.output {
        Some(path) => fs::write(path, &prompt.bundle.rendered).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", prompt.bundle.rendered),
    }
    eprintln!("prompt_hash={} tokens={}", prompt.bundle.hash(), estimate_tokens(&prompt.bundle.rendered));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let help = config_keys_help();
    let command = Cli::command()
        .after_help(help.clone())
        .mut_subcommand("classify", |c| c.after_help(help.clone()))
        .mut_subcommand("dump-prompt", |c| c.after_help(help.clone()));
    let cli = match Cli::from_arg_matches(&command.get_matches()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match &cli.command {
        Command::Classify(args) => cmd_classify(args),
        Command::Encode(args) => cmd_encode(args),
        Command::DumpPrompt(args) => cmd_dump_prompt(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
