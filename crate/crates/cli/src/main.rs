use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use replaykit::anon::{serve, AnonymizationStore, Anonymizer, AnonymizerClient, BIND_ENV};
use replaykit::dataset::{load_dataset, load_replaypack, DatasetSource};
use replaykit::extract::{process_replaypack, ExtractionOptions, FilterSpec, LogClock};
use replaykit::fixtures::{write_replaypack, CorpusSpec};
use replaykit::mpq::MpqArchive;
use replaykit::prep;
use replaykit::protocol::LOOPS_PER_SECOND;
use replaykit::versioned::decode_versioned;

#[derive(Parser)]
#[command(
    name = "replaykit",
    version,
    about = "Replay archive extraction and dataset preparation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect MPQ archives.
    #[command(subcommand)]
    Mpq(MpqCommand),
    /// Decode a versioned-encoded blob and print it as JSON.
    Decode {
        /// Input as a hex string instead of a file.
        #[arg(long, conflicts_with = "file")]
        hex: Option<String>,
        file: Option<PathBuf>,
    },
    /// Extract every replay in a directory to JSON.
    Extract(ExtractArgs),
    /// Copy nested replays into one flat directory under content-hash names.
    Flatten {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Zip every top-level directory.
    Package {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Prefix auxiliary files with a tournament name.
    Rename {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        tournament: String,
    },
    /// Merge two JSON object files.
    MergeJson {
        a: PathBuf,
        b: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Copy processed_mapping.json files into matching output directories.
    CopyMapping {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Download the maps referenced by replays.
    DownloadMaps {
        #[arg(long = "replays", required = true, num_args = 1..)]
        replay_dirs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        base_url: String,
    },
    /// Extract every replaypack (top-level directory) under a root.
    Process(ProcessArgs),
    /// Run the whole preparation pipeline from a JSON config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Download and verify the archives listed in a manifest.
    DownloadReplaypacks {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Nickname anonymization service.
    #[command(subcommand)]
    Anonymizer(AnonymizerCommand),
    /// Validate and summarize extractor output.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Write a synthetic replaypack.
    Fixtures {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        replays: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.10)]
        corrupt_fraction: f64,
        #[arg(long, default_value_t = 0.05)]
        short_fraction: f64,
        /// Put every file directly in the output directory.
        #[arg(long)]
        flat: bool,
    },
}

#[derive(Subcommand)]
enum MpqCommand {
    /// List the files named in the archive's listfile.
    List { archive: PathBuf },
    /// Write one archived file to a path or stdout.
    Extract {
        archive: PathBuf,
        name: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnonymizerCommand {
    Serve {
        #[arg(long, env = BIND_ENV, default_value = "127.0.0.1:8089")]
        bind: String,
        /// Journal file; created if missing.
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8)]
        threads: usize,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Validate every replay JSON in a replaypack directory, or in every
    /// replaypack of a dataset root.
    Validate { dir: PathBuf },
    /// Print replaypack summaries.
    Stats { dir: PathBuf },
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    min_duration_s: Option<u64>,
    #[arg(long)]
    max_duration_s: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    player_counts: Vec<usize>,
    /// Full version strings or build numbers.
    #[arg(long, value_delimiter = ',')]
    game_versions: Vec<String>,
    #[arg(long, requires = "anonymizer")]
    anonymize: bool,
    /// host:port of the anonymizer service.
    #[arg(long = "anonymizer-addr", group = "anonymizer")]
    anonymizer_addr: Option<String>,
    /// Use an in-process store journal instead of a service.
    #[arg(long = "anonymizer-store", group = "anonymizer")]
    anonymizer_store: Option<PathBuf>,
    /// Stamp log lines with this unix time instead of the wall clock.
    #[arg(long)]
    source_date_epoch: Option<i64>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    filters: FilterArgs,
}

#[derive(Args)]
struct ProcessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    filters: FilterArgs,
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

impl FilterArgs {
    fn options(&self) -> Result<ExtractionOptions> {
        let filters = FilterSpec {
            min_duration_loops: self.min_duration_s.map(|s| s * LOOPS_PER_SECOND),
            max_duration_loops: self.max_duration_s.map(|s| s * LOOPS_PER_SECOND),
            allowed_player_counts: (!self.player_counts.is_empty())
                .then(|| self.player_counts.iter().copied().collect()),
            allowed_game_versions: (!self.game_versions.is_empty())
                .then(|| self.game_versions.iter().cloned().collect::<BTreeSet<_>>()),
        };
        let anonymizer: Option<Arc<dyn Anonymizer>> = match (
            self.anonymize,
            &self.anonymizer_addr,
            &self.anonymizer_store,
        ) {
            (false, _, _) => None,
            (true, Some(addr), _) => Some(Arc::new(AnonymizerClient::new(addr))),
            (true, None, Some(store)) => Some(Arc::new(AnonymizationStore::open(store)?)),
            (true, None, None) => {
                return Err("--anonymize needs --anonymizer-addr or --anonymizer-store".into())
            }
        };
        let clock = self
            .source_date_epoch
            .map_or(LogClock::System, LogClock::Fixed);
        Ok(ExtractionOptions {
            filters,
            anonymizer,
            clock,
        })
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Mpq(MpqCommand::List { archive }) => {
            let mut text = String::new();
            for name in MpqArchive::open_path(&archive)?.list_files()? {
                text.push_str(&name);
                text.push('\n');
            }
            write_output(None, text.as_bytes())?;
        }
        Command::Mpq(MpqCommand::Extract {
            archive,
            name,
            output,
        }) => {
            let bytes = MpqArchive::open_path(&archive)?.extract(&name)?;
            write_output(output.as_deref(), &bytes)?;
        }
        Command::Decode { hex, file } => {
            let bytes = match (hex, file) {
                (Some(text), _) => hex::decode(text.trim())?,
                (None, Some(file)) => std::fs::read(file)?,
                (None, None) => return Err("give --hex or a file".into()),
            };
            let mut text = serde_json::to_vec_pretty(&decode_versioned(&bytes)?)?;
            text.push(b'\n');
            write_output(None, &text)?;
        }
        Command::Extract(args) => {
            let report = process_replaypack(
                &args.input,
                &args.output,
                &args.filters.options()?,
                args.workers,
            )?;
            let s = &report.summary;
            println!(
                "total {} ok {} filtered {} failed {}",
                s.total_replays, s.ok, s.filtered, s.failed
            );
        }
        Command::Flatten { input, output } => {
            let report = prep::flatten_directory(&input, &output)?;
            for (path, reason) in &report.skipped {
                eprintln!("skipped {}: {reason}", path.display());
            }
            println!("flattened {} files", report.mapping.len());
        }
        Command::Package { input, output } => {
            for archive in prep::package_directories(&input, &output)? {
                println!("{}", archive.display());
            }
        }
        Command::Rename { dir, tournament } => {
            for name in prep::rename_auxiliary_files(&dir, &tournament)? {
                println!("{name}");
            }
        }
        Command::MergeJson { a, b, output } => {
            let merged = prep::merge_json(&a, &b)?;
            let mut text = serde_json::to_vec_pretty(&merged)?;
            text.push(b'\n');
            write_output(output.as_deref(), &text)?;
        }
        Command::CopyMapping { input, output } => {
            let report = prep::copy_processed_mapping(&input, &output)?;
            for name in &report.skipped {
                eprintln!("warning: {name} has no mapping file; skipped");
            }
            println!("copied {} mapping files", report.copied.len());
        }
        Command::DownloadMaps {
            replay_dirs,
            output,
            base_url,
        } => {
            let report = prep::download_maps(&replay_dirs, &output, &base_url)?;
            for (path, reason) in &report.unreadable {
                eprintln!("unreadable {}: {reason}", path.display());
            }
            for failure in &report.failed {
                eprintln!("{failure}");
            }
            println!(
                "maps referenced {} downloaded {} already present {} failed {}",
                report.referenced.len(),
                report.downloaded.len(),
                report.skipped.len(),
                report.failed.len()
            );
            if !report.failed.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Process(args) => {
            let runs = prep::process_replaypacks(
                &args.input,
                &args.output,
                args.workers,
                &args.filters.options()?,
            )?;
            let mut partial = false;
            for run in runs {
                match run.result {
                    Ok(report) => {
                        let s = report.summary;
                        println!(
                            "{}: total {} ok {} filtered {} failed {}",
                            run.name, s.total_replays, s.ok, s.filtered, s.failed
                        );
                    }
                    Err(e) => {
                        partial = true;
                        eprintln!("{}: {e}", run.name);
                    }
                }
            }
            if partial {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Pipeline { config } => {
            let report = prep::run_pipeline(&prep::PipelineConfig::load(&config)?)?;
            for step in &report.steps_skipped {
                println!("skipped {step} (already done)");
            }
            for step in &report.steps_run {
                println!("ran {step}");
            }
            for archive in report.raw_archives.iter().chain(&report.processed_archives) {
                println!("{}", archive.display());
            }
        }
        Command::DownloadReplaypacks { manifest, output } => {
            let report =
                prep::download_replaypacks(&prep::ReplaypackManifest::load(&manifest)?, &output)?;
            for path in &report.verified {
                println!("verified {}", path.display());
            }
            for path in &report.skipped {
                println!("present {}", path.display());
            }
            for failure in &report.failures {
                eprintln!("{failure}");
            }
            if !report.failures.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Anonymizer(AnonymizerCommand::Serve {
            bind,
            store,
            threads,
        }) => {
            let store = AnonymizationStore::open(&store)?;
            for warning in store.warnings() {
                eprintln!("warning: {warning}");
            }
            let handle = serve(&bind, Arc::new(store), threads)?;
            println!("listening on {}", handle.addr());
            std::io::stdout().flush()?;
            handle.join();
        }
        Command::Dataset(DatasetCommand::Validate { dir }) => {
            let packs = if dir.join("package_summary.json").exists() || has_json(&dir) {
                vec![load_replaypack(&dir)?]
            } else {
                load_dataset(&DatasetSource::Local(dir.clone()))?.replaypacks
            };
            let mut invalid = 0;
            let mut total = 0;
            for pack in &packs {
                for warning in &pack.warnings {
                    eprintln!("{}: {warning:?}", pack.name);
                }
                for (path, result) in pack.paths().iter().zip(pack.iter()) {
                    total += 1;
                    if let Err(e) = result {
                        invalid += 1;
                        eprintln!("{}: {e}", path.display());
                    }
                }
            }
            println!("{total} records, {invalid} invalid");
            if invalid > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Dataset(DatasetCommand::Stats { dir }) => {
            let packs = if has_json(&dir) {
                vec![load_replaypack(&dir)?]
            } else {
                load_dataset(&DatasetSource::Local(dir.clone()))?.replaypacks
            };
            for pack in packs {
                println!("{} ({} records)", pack.name, pack.len());
                if let Some(summary) = &pack.summary {
                    println!("{}", serde_json::to_string_pretty(summary)?);
                }
            }
        }
        Command::Fixtures {
            output,
            replays,
            seed,
            corrupt_fraction,
            short_fraction,
            flat,
        } => {
            let spec = CorpusSpec {
                replays,
                corrupt_fraction,
                short_fraction,
                seed,
                nested: !flat,
            };
            let manifest = write_replaypack(&output, &spec)?;
            println!(
                "valid {} short {} corrupt {}",
                manifest.valid, manifest.short, manifest.corrupt
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn has_json(dir: &Path) -> bool {
    std::fs::read_dir(dir)
        .map(|entries| {
            entries
                .flatten()
                .any(|e| e.path().extension().is_some_and(|x| x == "json"))
        })
        .unwrap_or(false)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        // A closed pipe (`| head`) is not an error.
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
