use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ispso_cli::config::{parse_spec, Overrides};
use ispso_cli::execute::execute;
use ispso_cli::report::{describe, read_results};
use ispso_core::fitness::{FitnessEvaluator, KnnParams, Scaling};
use ispso_core::metrics::{confusion, precision_recall_f};
use ispso_core::{load_dataset, stratified_kfold, FeatureMask, LabelColumn};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "ispso", version, about = "Wrapper feature selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every dataset/variant pair of a config file.
    Run {
        config: PathBuf,
        /// Base seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        /// Pairs executed at once.
        #[arg(long, env = "ISPSO_JOBS")]
        jobs: Option<usize>,
        #[arg(long, env = "ISPSO_OUT")]
        out: Option<PathBuf>,
    },
    /// Cross-validated accuracy of one feature subset.
    Eval {
        dataset: PathBuf,
        /// Comma-separated 1-based feature indices.
        #[arg(long, value_delimiter = ',', required = true)]
        mask: Vec<usize>,
        #[arg(long, default_value = "class")]
        label: String,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Scale::Full)]
        scale: Scale,
    },
    /// Pretty-print a results file.
    Inspect { results: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Full,
    PerFold,
    None,
}

fn label_column(s: &str) -> LabelColumn {
    s.parse::<usize>()
        .map(LabelColumn::Index)
        .unwrap_or_else(|_| LabelColumn::Name(s.to_string()))
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            runs,
            jobs,
            out,
        } => {
            let overrides = Overrides {
                seed,
                runs,
                jobs,
                output: out,
            };
            let spec = match parse_spec(&config, &overrides) {
                Ok(s) => s,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let outcome = match execute(&spec) {
                Ok(o) => o,
                Err(e) => return fail(EXIT_PARTIAL, format!("writing results: {e}")),
            };
            print!(
                "{}",
                ispso_cli::report::render(&outcome.table, ispso_cli::config::ReportFormat::Text)
            );
            println!("results in {}", spec.output.display());
            let failed = outcome.table.failures();
            if failed > 0 {
                return fail(EXIT_PARTIAL, format!("{failed} pair(s) failed"));
            }
            ExitCode::SUCCESS
        }
        Command::Eval {
            dataset,
            mask,
            label,
            folds,
            k,
            seed,
            scale,
        } => {
            let d = match load_dataset(&dataset, &label_column(&label)) {
                Ok(d) => d,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            if let Some(&bad) = mask.iter().find(|&&i| i == 0 || i > d.n_features()) {
                return fail(
                    EXIT_CONFIG,
                    format!("feature {bad} is outside 1..={}", d.n_features()),
                );
            }
            let zero_based: Vec<usize> = mask.iter().map(|i| i - 1).collect();
            let scaling = match scale {
                Scale::Full => Scaling::Full { lower: -1.0, upper: 1.0 },
                Scale::PerFold => Scaling::PerFold { lower: -1.0, upper: 1.0 },
                Scale::None => Scaling::None,
            };
            let result = (|| {
                let m = FeatureMask::from_indices(d.n_features(), &zero_based)?;
                let plan = stratified_kfold(&d, folds, seed)?;
                let params = KnnParams { k, ..KnnParams::default() };
                let ev = FitnessEvaluator::new(&d, plan, params, scaling)?;
                let fit = ev.evaluate(&m)?;
                let pred = ev.predictions(&m)?;
                let prf = precision_recall_f(&confusion(&d.labels, &pred, d.n_classes())?);
                Ok::<_, ispso_core::Error>((fit, prf))
            })();
            match result {
                Ok((fit, prf)) => {
                    println!("dataset      {}", d.name);
                    println!("features     {} of {}", fit.n_selected, d.n_features());
                    println!("accuracy     {:.4}", fit.cv_accuracy);
                    println!("precision    {:.4}", prf.precision);
                    println!("recall       {:.4}", prf.recall);
                    println!("f_measure    {:.4}", prf.f_measure);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_CONFIG, e),
            }
        }
        Command::Inspect { results } => match read_results(&results) {
            Ok(r) => {
                print!("{}", describe(&r));
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_CONFIG, e),
        },
    }
}
