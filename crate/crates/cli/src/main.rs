//! `droidsift`: scan APKs for security weaknesses, personal-data flows and
//! trackers.
//!
//! Exit status: 0 no findings, 1 warnings, 2 high-severity findings or
//! confirmed flows, 3 the scan failed, 4 usage or configuration error.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use droidsift::malware::{HttpScanService, MalwareClient, MalwareConfig};
use droidsift::pii::{expand_keywords, load_embeddings, parse_word_list, KeywordDatabase, Review};
use droidsift::report::{collect_apks, render_text, run_corpus, scan, write_corpus, DataFiles, ScanConfig};

const EXIT_FAILED: u8 = 3;
const EXIT_USAGE: u8 = 4;

#[derive(Parser)]
#[command(name = "droidsift", version, about = "Static security and privacy scanner for Android APKs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan one APK and print its report.
    Scan {
        apk: PathBuf,
        #[command(flatten)]
        opts: ScanOpts,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Scan many APKs and write per-app reports plus corpus statistics.
    Corpus {
        /// APK files or directories containing them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        opts: ScanOpts,
        /// Output directory for `corpus.json` and `reports/`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Keyword database tools.
    Keywords {
        #[command(subcommand)]
        command: KeywordsCommand,
    },
}

#[derive(Subcommand)]
enum KeywordsCommand {
    /// Expand seed words with their nearest embedding neighbours.
    Build {
        /// word2vec text-format embeddings.
        #[arg(long)]
        embeddings: PathBuf,
        /// One seed per line.
        #[arg(long)]
        seeds: PathBuf,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        /// Only synonyms listed here are accepted.
        #[arg(long)]
        allow: Option<PathBuf>,
        /// Synonyms listed here are rejected.
        #[arg(long)]
        deny: Option<PathBuf>,
        /// Write the database here; the review table goes to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScanOpts {
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    sources_sinks: Option<PathBuf>,
    /// Keyword database JSON or a plain word list.
    #[arg(long)]
    keywords: Option<PathBuf>,
    #[arg(long)]
    trackers: Option<PathBuf>,
    #[arg(long)]
    entry_points: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MalwareMode::Stub)]
    malware: MalwareMode,
    /// Base URL of the malware scanning service.
    #[arg(long, env = "SCAN_ENDPOINT")]
    endpoint: Option<String>,
    /// Upload unknown APKs to the scanning service.
    #[arg(long)]
    upload: bool,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Zero timestamps and durations so equal inputs give equal output.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MalwareMode {
    Stub,
    On,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure(EXIT_USAGE, e.to_string())
    }
}

fn build_config(opts: &ScanOpts) -> Result<ScanConfig, Failure> {
    let mut config = ScanConfig::load(&DataFiles {
        rules: opts.rules.clone(),
        sources_sinks: opts.sources_sinks.clone(),
        keywords: opts.keywords.clone(),
        trackers: opts.trackers.clone(),
        entry_points: opts.entry_points.clone(),
    })?;
    if let Some(d) = opts.max_depth {
        config.max_depth = d;
    }
    config.deterministic = opts.deterministic;
    if let MalwareMode::On = opts.malware {
        let endpoint = opts
            .endpoint
            .as_deref()
            .ok_or_else(|| Failure(EXIT_USAGE, "--malware on needs --endpoint or SCAN_ENDPOINT".into()))?;
        let key = std::env::var("SCAN_API_KEY")
            .map_err(|_| Failure(EXIT_USAGE, "--malware on needs SCAN_API_KEY in the environment".into()))?;
        let service = HttpScanService::new(endpoint, &key, Duration::from_secs(opts.timeout_secs));
        config.malware = Arc::new(MalwareClient::with_service(
            Arc::new(service),
            MalwareConfig {
                upload: opts.upload,
                cache_dir: opts.cache_dir.clone(),
                ..MalwareConfig::default()
            },
        ));
    }
    Ok(config)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn run_scan(apk: &Path, opts: &ScanOpts, out: Option<&Path>, format: Format) -> Result<u8, Failure> {
    let config = build_config(opts)?;
    match scan(apk, &config) {
        Ok(report) => {
            let text = match format {
                Format::Json => report.to_json() + "\n",
                Format::Text => render_text(&report),
            };
            emit(out, &text)?;
            Ok(report.exit_code() as u8)
        }
        Err(failure) => {
            emit(out, &(failure.to_json() + "\n"))?;
            eprintln!("droidsift: {failure}");
            Ok(EXIT_FAILED)
        }
    }
}

fn run_corpus_cmd(inputs: &[PathBuf], opts: &ScanOpts, out: &Path, jobs: usize) -> Result<u8, Failure> {
    let config = build_config(opts)?;
    let paths = collect_apks(inputs)?;
    let run = run_corpus(&paths, &config, jobs)?;
    write_corpus(&run, out)?;
    let mut worst: Option<u8> = None;
    for (app, outcome) in &run.results {
        match outcome {
            Ok(r) => worst = worst.max(Some(r.exit_code() as u8)),
            Err(e) => eprintln!("droidsift: {}: {e}", app.path),
        }
    }
    println!(
        "{} scanned, {} failed, {} flows; results in {}",
        run.stats.n_apps,
        run.stats.n_failed,
        run.stats.total_flows,
        out.display()
    );
    Ok(worst.unwrap_or(EXIT_FAILED))
}

fn read_set(path: &Path) -> Result<BTreeSet<String>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    Ok(parse_word_list(&text).into_iter().collect())
}

fn review_table(db: &KeywordDatabase) -> String {
    let mut s = String::new();
    for e in &db.expansions {
        if !e.in_vocabulary {
            s += &format!("{}  (not in vocabulary)\n", e.seed);
            continue;
        }
        s += &format!("{}\n", e.seed);
        for syn in &e.synonyms {
            let mark = if syn.accepted { "+" } else { "-" };
            s += &format!("  {mark} {:<24} {:.4}\n", syn.word, syn.similarity);
        }
    }
    s
}

fn run_keywords(
    embeddings: &Path,
    seeds: &Path,
    k: usize,
    allow: Option<&Path>,
    deny: Option<&Path>,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let file = File::open(embeddings).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", embeddings.display())))?;
    let store = load_embeddings(BufReader::new(file))
        .map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", embeddings.display())))?;
    let seed_text =
        std::fs::read_to_string(seeds).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", seeds.display())))?;
    let review = Review {
        allow: allow.map(read_set).transpose()?,
        deny: deny.map(read_set).transpose()?.unwrap_or_default(),
    };
    let db = expand_keywords(&store, &parse_word_list(&seed_text), k, &review);
    for w in &db.warnings {
        eprintln!("droidsift: {}", w.message);
    }
    let json = db.to_json() + "\n";
    match out {
        Some(p) => {
            emit(Some(p), &json)?;
            emit(None, &review_table(&db))?;
        }
        None => {
            eprint!("{}", review_table(&db));
            emit(None, &json)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Scan { apk, opts, out, format } => run_scan(apk, opts, out.as_deref(), *format),
        Command::Corpus { inputs, opts, out, jobs } => run_corpus_cmd(inputs, opts, out, *jobs),
        Command::Keywords {
            command:
                KeywordsCommand::Build {
                    embeddings,
                    seeds,
                    k,
                    allow,
                    deny,
                    out,
                },
        } => run_keywords(embeddings, seeds, *k, allow.as_deref(), deny.as_deref(), out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, message)) => {
            eprintln!("droidsift: {message}");
            ExitCode::from(code)
        }
    }
}
