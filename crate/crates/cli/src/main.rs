//! Command-line pipeline over the corpus-synthesis and evaluation library.
//!
//! One subcommand per pipeline stage: `generate`, `augment`, `anonymize`,
//! `translate`, `evaluate`, `stats`. Every command that writes an output
//! file also writes a `<out>.manifest.json` sidecar with the config
//! snapshot, input digests, and counts. All randomness flows from `--seed`;
//! two runs with identical args, inputs, and seed produce byte-identical
//! primary outputs regardless of `--jobs`.
//!
//! Exit codes: 0 ok, 1 usage, 2 input validation, 3 runtime failure.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nlidb_core::augment::{augment, AugmentationParams, ProtectedVocab};
use nlidb_core::bridge::{anonymize, BaselineTranslator, SubprocessTranslator, Translator};
use nlidb_core::db::{create_database, seed_rows_from_values, seed_with_script};
use nlidb_core::eval::{evaluate, load_benchmark};
use nlidb_core::generate::{generate, GenerationConfig};
use nlidb_core::pairs::{read_pairs, Manifest};
use nlidb_core::paraphrase::load_paraphrase_index;
use nlidb_core::schema::{build_value_index, load_schema, load_values, Schema, ValueIndex};
use nlidb_core::templates::{load_phrase_lexicon, load_templates};

#[derive(Parser)]
#[command(name = "nlidb", version, about = "Schema-driven NL-SQL corpus synthesis and evaluation")]
struct Cli {
    /// Worker threads for generation/augmentation (default: available cores)
    #[arg(long, global = true, env = "NLIDB_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Instantiate the balanced training corpus from a schema
    Generate(GenerateArgs),
    /// Expand a corpus with paraphrase and dropout duplicates
    Augment(AugmentArgs),
    /// Replace constants in NL lines with placeholder tokens
    Anonymize(AnonymizeArgs),
    /// Translate anonymized NL lines to SQL with a translator
    Translate(TranslateArgs),
    /// Run a benchmark through translate/bind/execute and score it
    Evaluate(EvaluateArgs),
    /// Reconstruct corpus counts from an output file
    Stats(StatsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, env = "NLIDB_SCHEMA")]
    schema: PathBuf,
    /// Value file for filter samples and the value index
    #[arg(long, env = "NLIDB_VALUES")]
    values: Option<PathBuf>,
    #[arg(long, env = "NLIDB_TEMPLATES")]
    templates: PathBuf,
    #[arg(long, env = "NLIDB_LEXICON")]
    lexicon: PathBuf,
    #[arg(long, env = "NLIDB_OUT")]
    out: PathBuf,
    #[arg(long, default_value_t = 0, env = "NLIDB_SEED")]
    seed: u64,
    /// Per-template retention cap before balancing
    #[arg(long, default_value_t = 500, env = "NLIDB_CAP")]
    cap: usize,
    /// Max ratio between the largest and smallest retained template
    #[arg(long, default_value_t = 2.0, env = "NLIDB_BALANCE_RATIO")]
    balance_ratio: f64,
    /// Emit concrete filter values instead of placeholder tokens
    #[arg(long, default_value_t = false)]
    concrete_values: bool,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Paraphrase file (tab-separated source/target/score)
    #[arg(long, env = "NLIDB_PPDB")]
    ppdb: PathBuf,
    #[arg(long, default_value_t = 0.0, env = "NLIDB_MIN_SCORE")]
    min_score: f64,
    #[arg(long, default_value_t = 10)]
    max_per_source: usize,
    /// Schema used to protect table/column surface words from dropout
    #[arg(long, env = "NLIDB_SCHEMA")]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3, env = "NLIDB_PARAPHRASE_PROB")]
    paraphrase_prob: f64,
    #[arg(long, default_value_t = 3, env = "NLIDB_PARAPHRASE_DUPS")]
    paraphrase_dups: usize,
    #[arg(long, default_value_t = 0.15, env = "NLIDB_DROPOUT_PROB")]
    dropout_prob: f64,
    #[arg(long, default_value_t = 1, env = "NLIDB_DROPOUT_DUPS")]
    dropout_dups: usize,
    #[arg(long, default_value_t = 3)]
    min_tokens_remaining: usize,
    #[arg(long, default_value_t = 0, env = "NLIDB_SEED")]
    seed: u64,
    #[arg(long, env = "NLIDB_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct AnonymizeArgs {
    #[arg(long, env = "NLIDB_SCHEMA")]
    schema: PathBuf,
    #[arg(long, env = "NLIDB_VALUES")]
    values: PathBuf,
    /// NL input, one query per line (default: stdin)
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// JSONL output of {anonymized, bindings, diagnostics} (default: stdout)
    #[arg(long, env = "NLIDB_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TranslateArgs {
    /// Training corpus backing the baseline translator
    #[arg(long)]
    corpus: PathBuf,
    /// `baseline` or `subprocess:<command>`
    #[arg(long, default_value = "baseline", env = "NLIDB_TRANSLATOR")]
    translator: String,
    /// Anonymized NL input, one per line (default: stdin)
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// SQL output, one per line (default: stdout)
    #[arg(long, env = "NLIDB_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Benchmark directory (per-variant .nl/.sql files) or JSONL file
    #[arg(long, env = "NLIDB_BENCHMARK")]
    benchmark: PathBuf,
    #[arg(long, env = "NLIDB_SCHEMA")]
    schema: PathBuf,
    #[arg(long, env = "NLIDB_VALUES")]
    values: PathBuf,
    /// Seed script (INSERT statements) for the benchmark database;
    /// without it, rows are synthesized from the value file
    #[arg(long, env = "NLIDB_DB")]
    db: Option<PathBuf>,
    /// `baseline` or `subprocess:<command>`
    #[arg(long, default_value = "baseline", env = "NLIDB_TRANSLATOR")]
    translator: String,
    /// Training corpus backing the baseline translator
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Machine-readable report file (default: report printed only)
    #[arg(long, env = "NLIDB_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &anyhow::Error {
        match self {
            CliError::Validation(e) | CliError::Runtime(e) => e,
        }
    }
}

fn validation<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Validation(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(runtime)
}

fn load_schema_file(path: &Path) -> Result<(Schema, String), CliError> {
    let text = read_file(path)?;
    let schema = load_schema(&text).map_err(validation)?;
    Ok((schema, text))
}

fn load_value_index_file(
    schema: &Schema,
    path: Option<&Path>,
) -> Result<(ValueIndex, Option<String>), CliError> {
    match path {
        None => Ok((ValueIndex::default(), None)),
        Some(path) => {
            let text = read_file(path)?;
            let records = load_values(&text).map_err(validation)?;
            let index = build_value_index(schema, &records).map_err(validation)?;
            Ok((index, Some(text)))
        }
    }
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn finish_manifest(mut manifest: Manifest, out: &Path, started: Instant) -> Result<(), CliError> {
    manifest.wall_time_ms = started.elapsed().as_millis();
    let path = Manifest::sidecar_path(&out.display().to_string());
    let body = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    write_output(Path::new(&path), &body)
}

fn open_input_lines(path: Option<&Path>) -> Result<Vec<String>, CliError> {
    let mut lines = Vec::new();
    match path {
        Some(path) => {
            for line in read_file(path)?.lines() {
                lines.push(line.to_string());
            }
        }
        None => {
            let stdin = std::io::stdin();
            for line in stdin.lock().lines() {
                lines.push(line.map_err(runtime)?);
            }
        }
    }
    Ok(lines)
}

fn emit_lines(path: Option<&Path>, lines: &[String]) -> Result<(), CliError> {
    let body = lines.iter().map(|l| format!("{l}\n")).collect::<String>();
    match path {
        Some(path) => write_output(path, &body),
        None => {
            std::io::stdout().write_all(body.as_bytes()).map_err(runtime)?;
            Ok(())
        }
    }
}

fn make_translator(
    spec: &str,
    corpus: Option<&Path>,
) -> Result<Box<dyn Translator>, CliError> {
    if spec == "baseline" {
        let corpus_path = corpus.ok_or_else(|| {
            validation(anyhow::anyhow!("--corpus is required for the baseline translator"))
        })?;
        let text = read_file(corpus_path)?;
        let pairs = read_pairs(text.as_bytes()).map_err(validation)?;
        Ok(Box::new(BaselineTranslator::new(&pairs).map_err(validation)?))
    } else if let Some(command) = spec.strip_prefix("subprocess:") {
        Ok(Box::new(SubprocessTranslator::spawn(command).map_err(runtime)?))
    } else {
        Err(validation(anyhow::anyhow!(
            "unknown translator `{spec}` (expected `baseline` or `subprocess:<cmd>`)"
        )))
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let (schema, schema_text) = load_schema_file(&args.schema)?;
    let (index, values_text) = load_value_index_file(&schema, args.values.as_deref())?;
    let templates_text = read_file(&args.templates)?;
    let catalog = load_templates(&templates_text).map_err(validation)?;
    let lexicon_text = read_file(&args.lexicon)?;
    let lexicon = load_phrase_lexicon(&lexicon_text).map_err(validation)?;

    let config = GenerationConfig {
        per_template_cap: args.cap,
        balance_ratio_max: args.balance_ratio,
        seed: args.seed,
        anonymize_values: !args.concrete_values,
    };
    let (pairs, report) =
        generate(&schema, &catalog.templates, &lexicon, &index, &config).map_err(validation)?;
    write_output(&args.out, &nlidb_core::pairs::pairs_to_string(&pairs))?;

    let mut manifest =
        Manifest::new("generate", serde_json::to_value(&config).map_err(runtime)?);
    manifest.record_input(&args.schema.display().to_string(), schema_text.as_bytes());
    if let (Some(path), Some(text)) = (&args.values, &values_text) {
        manifest.record_input(&path.display().to_string(), text.as_bytes());
    }
    manifest.record_input(&args.templates.display().to_string(), templates_text.as_bytes());
    manifest.record_input(&args.lexicon.display().to_string(), lexicon_text.as_bytes());
    manifest.catalog_version = Some(catalog.catalog_version.clone());
    manifest.seed = Some(args.seed);
    manifest.counts.insert("pairs".into(), pairs.len() as u64);
    manifest.counts.insert("duplicates_removed".into(), report.duplicates_removed as u64);
    for tr in &report.per_template {
        manifest.counts.insert(format!("template:{}", tr.template_id), tr.retained as u64);
        if let Some(reason) = &tr.skipped {
            eprintln!("note: {reason}");
        }
    }
    finish_manifest(manifest, &args.out, started)?;
    eprintln!("generated {} pairs -> {}", pairs.len(), args.out.display());
    Ok(())
}

fn cmd_augment(args: AugmentArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let input_text = read_file(&args.input)?;
    let pairs = read_pairs(input_text.as_bytes()).map_err(validation)?;
    let ppdb_text = read_file(&args.ppdb)?;
    let (index, load_report) =
        load_paraphrase_index(&ppdb_text, args.min_score, args.max_per_source)
            .map_err(validation)?;
    for (line, reason) in &load_report.lines_skipped {
        eprintln!("note: paraphrase file line {line} skipped: {reason}");
    }
    let protected = match &args.schema {
        Some(path) => ProtectedVocab::from_schema(&load_schema_file(path)?.0),
        None => ProtectedVocab::empty(),
    };
    let params = AugmentationParams {
        paraphrase_duplicates: args.paraphrase_dups,
        paraphrase_prob: args.paraphrase_prob,
        dropout_duplicates: args.dropout_dups,
        dropout_prob: args.dropout_prob,
        min_tokens_remaining: args.min_tokens_remaining,
        seed: args.seed,
    };
    let output = augment(&pairs, &index, &params, &protected).map_err(validation)?;
    write_output(&args.out, &nlidb_core::pairs::pairs_to_string(&output))?;

    let mut manifest = Manifest::new("augment", serde_json::to_value(&params).map_err(runtime)?);
    manifest.record_input(&args.input.display().to_string(), input_text.as_bytes());
    manifest.record_input(&args.ppdb.display().to_string(), ppdb_text.as_bytes());
    manifest.seed = Some(args.seed);
    manifest.counts.insert("input_pairs".into(), pairs.len() as u64);
    manifest.counts.insert("output_pairs".into(), output.len() as u64);
    manifest
        .counts
        .insert("paraphrase_entries".into(), load_report.entries_kept as u64);
    finish_manifest(manifest, &args.out, started)?;
    eprintln!("augmented {} -> {} pairs -> {}", pairs.len(), output.len(), args.out.display());
    Ok(())
}

fn cmd_anonymize(args: AnonymizeArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let (schema, schema_text) = load_schema_file(&args.schema)?;
    let (index, values_text) = load_value_index_file(&schema, Some(&args.values))?;
    let lines = open_input_lines(args.input.as_deref())?;
    let mut out_lines = Vec::with_capacity(lines.len());
    for line in &lines {
        let result = anonymize(line, &schema, &index);
        out_lines.push(serde_json::to_string(&result).map_err(runtime)?);
    }
    emit_lines(args.out.as_deref(), &out_lines)?;
    if let Some(out) = &args.out {
        let mut manifest = Manifest::new("anonymize", serde_json::json!({}));
        manifest.record_input(&args.schema.display().to_string(), schema_text.as_bytes());
        if let Some(text) = &values_text {
            manifest.record_input(&args.values.display().to_string(), text.as_bytes());
        }
        manifest.counts.insert("queries".into(), out_lines.len() as u64);
        finish_manifest(manifest, out, started)?;
    }
    Ok(())
}

fn cmd_translate(args: TranslateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let translator = make_translator(&args.translator, Some(&args.corpus))?;
    let lines = open_input_lines(args.input.as_deref())?;
    let mut out_lines = Vec::with_capacity(lines.len());
    for line in &lines {
        out_lines.push(translator.translate(line).map_err(runtime)?);
    }
    emit_lines(args.out.as_deref(), &out_lines)?;
    if let Some(out) = &args.out {
        let mut manifest = Manifest::new(
            "translate",
            serde_json::json!({"translator": args.translator}),
        );
        manifest.counts.insert("queries".into(), out_lines.len() as u64);
        finish_manifest(manifest, out, started)?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let (schema, schema_text) = load_schema_file(&args.schema)?;
    let (index, _values_text) = load_value_index_file(&schema, Some(&args.values))?;
    let load = load_benchmark(&args.benchmark).map_err(validation)?;
    for warning in &load.warnings {
        eprintln!("warning: {warning}");
    }
    let conn = create_database(&schema).map_err(runtime)?;
    match &args.db {
        Some(path) => {
            let script = read_file(path)?;
            seed_with_script(&conn, &script).map_err(validation)?;
        }
        None => {
            seed_rows_from_values(&conn, &schema, &index).map_err(runtime)?;
        }
    }
    let translator = make_translator(&args.translator, args.corpus.as_deref())?;
    let report = evaluate(translator.as_ref(), &load.cases, &conn, &schema, &index);
    print!("{}", report.render_table());
    if let Some(out) = &args.out {
        write_output(out, &serde_json::to_string_pretty(&report).map_err(runtime)?)?;
        let mut manifest = Manifest::new(
            "evaluate",
            serde_json::json!({"translator": args.translator, "benchmark": args.benchmark.display().to_string()}),
        );
        manifest.record_input(&args.schema.display().to_string(), schema_text.as_bytes());
        manifest.counts.insert("cases".into(), load.cases.len() as u64);
        manifest.counts.insert("correct".into(), report.overall.correct as u64);
        finish_manifest(manifest, out, started)?;
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let text = read_file(&args.input)?;
    let pairs = read_pairs(text.as_bytes()).map_err(validation)?;
    let mut by_template: std::collections::BTreeMap<&str, usize> = Default::default();
    let mut by_category: std::collections::BTreeMap<String, usize> = Default::default();
    let mut by_augmentation: std::collections::BTreeMap<String, usize> = Default::default();
    for pair in &pairs {
        *by_template.entry(pair.template_id.as_str()).or_default() += 1;
        let category = serde_json::to_value(pair.category)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *by_category.entry(category).or_default() += 1;
        let ops = if pair.augmentations.is_empty() {
            "none".to_string()
        } else {
            pair.augmentations.join("+")
        };
        *by_augmentation.entry(ops).or_default() += 1;
    }
    println!("pairs: {}", pairs.len());
    println!("templates:");
    for (id, n) in by_template {
        println!("  {id}: {n}");
    }
    println!("categories:");
    for (cat, n) in by_category {
        println!("  {cat}: {n}");
    }
    println!("augmentations:");
    for (ops, n) in by_augmentation {
        println!("  {ops}: {n}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(runtime)?;
    }
    match cli.command {
        CliCommand::Generate(args) => cmd_generate(args),
        CliCommand::Augment(args) => cmd_augment(args),
        CliCommand::Anonymize(args) => cmd_anonymize(args),
        CliCommand::Translate(args) => cmd_translate(args),
        CliCommand::Evaluate(args) => cmd_evaluate(args),
        CliCommand::Stats(args) => cmd_stats(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version through the same error path
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {:#}", e.message());
            std::process::exit(e.code());
        }
    }
}
