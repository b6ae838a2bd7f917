mod commands;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::*;
use settings::{GlobalArgs, Settings};

/// Builds and maintains LLM-written category descriptions and classifies
/// documents against them.
#[derive(Debug, Parser)]
#[command(name = "tagforge", version)]
struct Cli {
    #[command(flatten)]
    globals: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Describe each labelled class from a sample of its documents
    Bootstrap(BootstrapArgs),
    /// Rewrite all descriptions so they separate from each other
    Contrast(ContrastArgs),
    /// Validate and rewrite failing descriptions until accurate enough
    Refine(RefineCmd),
    /// Assign documents to a category
    Classify(ClassifyArgs),
    /// Add a user-described category
    AddTopic(TopicArgs),
    /// Rewrite an existing category from a new user description
    ReviseTopic(TopicArgs),
    /// Run an experiment plan and write its report
    Eval(EvalArgs),
    /// Run an experiment plan and write every artifact
    Run(RunArgs),
    /// Write a labelled synthetic corpus as CSV
    GenerateSynthetic(SyntheticArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut json_errors = cli.globals.json_errors;
    let result = Settings::resolve(cli.globals).and_then(|settings| {
        json_errors |= settings.file.json_errors.unwrap_or(false);
        init_tracing(settings.verbose());
        match cli.command {
            Command::Bootstrap(a) => bootstrap(&settings, a),
            Command::Contrast(a) => contrast(&settings, a),
            Command::Refine(a) => refine(&settings, a),
            Command::Classify(a) => classify(&settings, a),
            Command::AddTopic(a) => add_topic(&settings, a),
            Command::ReviseTopic(a) => revise_topic(&settings, a),
            Command::Eval(a) => eval(&settings, a),
            Command::Run(a) => run(&settings, a),
            Command::GenerateSynthetic(a) => generate_synthetic(&settings, a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if json_errors {
                let kind = err
                    .chain()
                    .find_map(|e| e.downcast_ref::<tagforge::Error>())
                    .map_or("Error", |e| e.kind());
                eprintln!("{}", json!({ "error": kind, "message": format!("{err:#}") }));
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::FAILURE
        }
    }
}

fn init_tracing(verbose: bool) {
    use tracing_subscriber::EnvFilter;
    let default = if verbose { "info" } else { "warn" };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}
