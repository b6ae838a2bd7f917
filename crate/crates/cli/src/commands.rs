use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use tagforge::describe::SamplePlan;
use tagforge::eval::{run_experiment, synthetic_corpus, write_generic_csv, DatasetKind, ExperimentPlan, SyntheticSpec};
use tagforge::hitl::TopicOptions;
use tagforge::model::{load_taxonomy, save_taxonomy, Document, Taxonomy, TopicDescriptor};

use crate::settings::{RefineArgs, Settings, StrategyArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Agnews,
    Dbpedia,
    GenericCsv,
}

impl From<FormatArg> for DatasetKind {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Agnews => DatasetKind::Agnews,
            FormatArg::Dbpedia => DatasetKind::Dbpedia,
            FormatArg::GenericCsv => DatasetKind::GenericCsv,
        }
    }
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Labelled documents
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "generic-csv")]
    pub format: FormatArg,
    /// Comma-separated labels to describe, in order (default: all, by first appearance)
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// Documents sampled per label
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Taxonomy file to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ContrastArgs {
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Where to write the result (default: overwrite the input)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineCmd {
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Labelled validation documents
    #[arg(long)]
    pub validate: PathBuf,
    #[arg(long, value_enum, default_value = "generic-csv")]
    pub format: FormatArg,
    #[command(flatten)]
    pub knobs: RefineArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the refinement report (default: stdout)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["text", "file"]))]
pub struct ClassifyArgs {
    #[arg(long)]
    pub taxonomy: PathBuf,
    #[arg(long)]
    pub text: Option<String>,
    /// One document per line
    #[arg(long)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopicArgs {
    #[arg(long)]
    pub taxonomy: PathBuf,
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub description: String,
    /// Example documents, one per line
    #[arg(long)]
    pub examples: Option<PathBuf>,
    /// Skip re-contrasting the taxonomy afterwards
    #[arg(long)]
    pub no_contrast: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Experiment plan (JSON)
    #[arg(long)]
    pub plan: PathBuf,
    #[command(flatten)]
    pub knobs: RefineArgs,
    /// Where to write the report (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[command(flatten)]
    pub knobs: RefineArgs,
    /// Artifact directory
    #[arg(long, default_value = "results")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 160)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
}

fn load(path: &Path) -> Result<Taxonomy> {
    load_taxonomy(path).with_context(|| format!("loading taxonomy {}", path.display()))
}

fn save(taxonomy: &Taxonomy, path: &Path) -> Result<()> {
    save_taxonomy(taxonomy, path).with_context(|| format!("writing taxonomy {}", path.display()))
}

fn write_or_print(body: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{body}")?;
            Ok(())
        }
    }
}

fn lines_as_docs(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Document::new((i + 1).to_string(), l))
        .collect())
}

fn group_by_label(docs: Vec<Document>, wanted: &[String]) -> Result<Vec<(String, Vec<Document>)>> {
    let mut groups: Vec<(String, Vec<Document>)> = wanted.iter().map(|l| (l.clone(), Vec::new())).collect();
    for d in docs {
        let Some(label) = d.gold_label.clone() else { continue };
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(d),
            None if wanted.is_empty() => groups.push((label, vec![d])),
            None => {}
        }
    }
    if let Some((l, _)) = groups.iter().find(|(_, v)| v.is_empty()) {
        bail!("no documents with label `{l}`");
    }
    if groups.is_empty() {
        bail!("the dataset has no labelled documents");
    }
    Ok(groups)
}

pub fn bootstrap(settings: &Settings, args: BootstrapArgs) -> Result<()> {
    let docs = DatasetKind::from(args.format).load(&args.dataset)?;
    let classes = group_by_label(docs, &args.labels)?;
    let strategy = args.strategy.map_or(settings.default_strategy(), Into::into);
    let n = args.n.or(settings.default_n()).unwrap_or(20);
    let plan = SamplePlan::new(strategy, n, settings.seed().unwrap_or(0))?;
    let taxonomy = settings.engine()?.bootstrap_taxonomy(&classes, &plan)?;
    save(&taxonomy, &args.out)?;
    println!("wrote {} categories to {}", taxonomy.len(), args.out.display());
    Ok(())
}

pub fn contrast(settings: &Settings, args: ContrastArgs) -> Result<()> {
    let taxonomy = settings.engine()?.contrast_taxonomy(&load(&args.taxonomy)?)?;
    save(&taxonomy, args.out.as_ref().unwrap_or(&args.taxonomy))
}

pub fn refine(settings: &Settings, args: RefineCmd) -> Result<()> {
    let config = settings.refinement(&args.knobs)?;
    let taxonomy = load(&args.taxonomy)?;
    let docs = DatasetKind::from(args.format).load(&args.validate)?;
    let out = args.out.as_ref().unwrap_or(&args.taxonomy);
    match settings.engine()?.refine_loop(&taxonomy, &docs, &config) {
        Ok((refined, report)) => {
            save(&refined, out)?;
            let body = serde_json::to_string_pretty(&report)?;
            write_or_print(&body, args.report.as_deref())?;
            tracing::info!(
                stop_reason = ?report.stop_reason,
                iterations = report.iterations_run,
                "refinement finished"
            );
            Ok(())
        }
        Err(failure) => {
            let partial = out.with_extension("partial.json");
            save(&failure.taxonomy, &partial)?;
            if let Some(p) = &args.report {
                fs::write(p, serde_json::to_string_pretty(&failure.completed)?)?;
            }
            Err(anyhow::Error::new(failure).context(format!("partial taxonomy saved to {}", partial.display())))
        }
    }
}

pub fn classify(settings: &Settings, args: ClassifyArgs) -> Result<()> {
    let taxonomy = load(&args.taxonomy)?;
    let engine = settings.engine()?;
    let docs = match (&args.text, &args.file) {
        (Some(t), _) => vec![Document::new("1", t.as_str())],
        (None, Some(f)) => lines_as_docs(f)?,
        (None, None) => unreachable!("clap requires one input"),
    };
    let single = args.text.is_some();
    let mut out = io::stdout().lock();
    let mut failed = 0;
    for (doc, result) in docs.iter().zip(engine.classify_batch(&docs, &taxonomy)) {
        match result {
            Ok(r) if settings.verbose() => writeln!(out, "{}", serde_json::to_string(&r)?)?,
            Ok(r) if single => writeln!(out, "{}", r.predicted)?,
            Ok(r) => writeln!(out, "{}\t{}", doc.id, r.predicted)?,
            Err(e) if single => return Err(e.into()),
            Err(e) => {
                failed += 1;
                tracing::warn!(document = %doc.id, "{e}");
                writeln!(out, "{}\t{}", doc.id, tagforge::eval::UNCLASSIFIED)?;
            }
        }
    }
    if failed == docs.len() && !docs.is_empty() {
        bail!("every document failed to classify");
    }
    Ok(())
}

fn topic_options(args: &TopicArgs) -> Result<TopicOptions> {
    Ok(TopicOptions {
        run_contrast: !args.no_contrast,
        sample_docs: match &args.examples {
            Some(p) => lines_as_docs(p)?,
            None => Vec::new(),
        },
    })
}

pub fn add_topic(settings: &Settings, args: TopicArgs) -> Result<()> {
    let taxonomy = load(&args.taxonomy)?;
    let user = TopicDescriptor::new(&args.name, &args.description)?;
    let out = settings.engine()?.add_topic(&user, &taxonomy, &topic_options(&args)?)?;
    save(&out, args.out.as_ref().unwrap_or(&args.taxonomy))
}

pub fn revise_topic(settings: &Settings, args: TopicArgs) -> Result<()> {
    let taxonomy = load(&args.taxonomy)?;
    let out = settings
        .engine()?
        .revise_topic(&args.name, &args.description, &taxonomy, &topic_options(&args)?)?;
    save(&out, args.out.as_ref().unwrap_or(&args.taxonomy))
}

fn plan(settings: &Settings, path: &Path) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::load(path).with_context(|| format!("loading plan {}", path.display()))?;
    if let Some(s) = settings.seed() {
        plan.seed = s;
    }
    Ok(plan)
}

pub fn eval(settings: &Settings, args: EvalArgs) -> Result<()> {
    let plan = plan(settings, &args.plan)?;
    let config = settings.refinement(&args.knobs)?;
    let outcome = run_experiment(&settings.engine()?, &plan, &config, None)?;
    write_or_print(&outcome.report.to_json(), args.out.as_deref())
}

pub fn run(settings: &Settings, args: RunArgs) -> Result<()> {
    let plan = plan(settings, &args.plan)?;
    let config = settings.refinement(&args.knobs)?;
    let outcome = run_experiment(&settings.engine()?, &plan, &config, Some(&args.out_dir))?;
    outcome.write_artifacts(&args.out_dir)?;
    let r = &outcome.report;
    println!(
        "phase1 accuracy {:.4}, seen after unseen {:.4}, shift {:+.4}, unseen {}",
        r.phase1.overall_accuracy,
        r.seen_accuracy_after_unseen,
        r.accuracy_shift,
        r.unseen_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}")),
    );
    Ok(())
}

pub fn generate_synthetic(settings: &Settings, args: SyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        docs_per_class: args.per_class,
        noise_rate: args.noise,
        seed: settings.seed().unwrap_or(0),
        ..SyntheticSpec::default()
    };
    write_generic_csv(&synthetic_corpus(&spec), &args.out)?;
    Ok(())
}
