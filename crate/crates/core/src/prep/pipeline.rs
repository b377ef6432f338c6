use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    copy_processed_mapping, dir_name, flatten_directory, package_directories,
    rename_auxiliary_files, subdirectories, write_err, PrepError,
};
use crate::anon::{AnonymizationStore, Anonymizer, AnonymizerClient};
use crate::extract::{
    process_replaypack, ExtractError, ExtractionOptions, FilterSpec, LogClock, PackReport,
};
use crate::util::parallel_map;

/// Pipeline steps in execution order.
pub const STEPS: [&str; 6] = [
    "flatten",
    "package_raw",
    "process",
    "copy_mapping",
    "rename",
    "package_processed",
];

#[derive(Debug)]
pub struct ReplaypackRun {
    pub name: String,
    pub result: Result<PackReport, ExtractError>,
}

/// Run the extractor over every top-level directory of `input_root`, each
/// into `<output_root>/<name>`. Up to `workers` replaypacks run at once; any
/// spare workers are split among them. A failing replaypack does not stop
/// the others.
pub fn process_replaypacks(
    input_root: &Path,
    output_root: &Path,
    workers: usize,
    options: &ExtractionOptions,
) -> Result<Vec<ReplaypackRun>, PrepError> {
    let dirs = subdirectories(input_root)?;
    std::fs::create_dir_all(output_root).map_err(write_err(output_root))?;
    let workers = workers.max(1);
    let concurrent = workers.min(dirs.len()).max(1);
    let per_pack = (workers / concurrent).max(1);
    Ok(parallel_map(dirs.len(), concurrent, |i| {
        let name = dir_name(&dirs[i]);
        let result = process_replaypack(&dirs[i], &output_root.join(&name), options, per_pack);
        ReplaypackRun { name, result }
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub filters: FilterSpec,
    /// Convenience for `filters.min_duration_loops`, in game seconds.
    pub min_duration_s: Option<u64>,
    pub anonymize: bool,
    /// `host:port` of a running anonymizer service.
    pub anonymizer_addr: Option<String>,
    /// Journal of an in-process store, used when no address is given.
    pub anonymizer_store: Option<PathBuf>,
}

/// The pipeline's JSON config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// One directory per replaypack, in any nested layout.
    pub input_root: Option<PathBuf>,
    /// Intermediate trees and step markers.
    pub staging_root: Option<PathBuf>,
    /// Receives `raw/<pack>.zip` and `processed/<pack>.zip`.
    pub output_root: Option<PathBuf>,
    /// Replaypack directory name -> tournament name used as file prefix.
    /// Defaults to the directory name.
    #[serde(default)]
    pub tournament_names: BTreeMap<String, String>,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Unix time stamped on every log line instead of the wall clock, so
    /// reruns produce identical archives.
    #[serde(default)]
    pub source_date_epoch: Option<i64>,
    /// Skip steps whose completion marker exists.
    #[serde(default = "default_resume")]
    pub resume: bool,
}

fn default_workers() -> usize {
    1
}

fn default_resume() -> bool {
    true
}

impl PipelineConfig {
    pub fn new(
        input_root: impl Into<PathBuf>,
        staging_root: impl Into<PathBuf>,
        output_root: impl Into<PathBuf>,
    ) -> Self {
        Self {
            input_root: Some(input_root.into()),
            staging_root: Some(staging_root.into()),
            output_root: Some(output_root.into()),
            tournament_names: BTreeMap::new(),
            extraction: ExtractionConfig::default(),
            workers: 1,
            source_date_epoch: None,
            resume: true,
        }
    }

    pub fn parse(text: &str) -> Result<Self, PrepError> {
        serde_json::from_str(text).map_err(|e| PrepError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PrepError> {
        let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
        Self::parse(&text)
    }
}

struct Plan {
    input: PathBuf,
    staging: PathBuf,
    output: PathBuf,
    options: ExtractionOptions,
}

fn validate(config: &PipelineConfig) -> Result<Plan, PrepError> {
    let invalid = |msg: &str| PrepError::InvalidConfig(msg.to_string());
    let input = config
        .input_root
        .clone()
        .ok_or_else(|| invalid("input_root is required"))?;
    let staging = config
        .staging_root
        .clone()
        .ok_or_else(|| invalid("staging_root is required"))?;
    let output = config
        .output_root
        .clone()
        .ok_or_else(|| invalid("output_root is required"))?;
    if !input.is_dir() {
        return Err(invalid(&format!(
            "input_root {} is not a directory",
            input.display()
        )));
    }
    if config.workers == 0 {
        return Err(invalid("workers must be at least 1"));
    }
    if staging.starts_with(&input) || output.starts_with(&input) {
        return Err(invalid(
            "staging_root and output_root must lie outside input_root",
        ));
    }
    for name in config.tournament_names.values() {
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(invalid(&format!(
                "tournament name {name:?} is not a valid file prefix"
            )));
        }
    }

    let extraction = &config.extraction;
    let mut filters = extraction.filters.clone();
    if let Some(seconds) = extraction.min_duration_s {
        filters.min_duration_loops = Some(seconds * crate::protocol::LOOPS_PER_SECOND);
    }
    let anonymizer: Option<Arc<dyn Anonymizer>> = match (
        extraction.anonymize,
        &extraction.anonymizer_addr,
        &extraction.anonymizer_store,
    ) {
        (false, _, _) => None,
        (true, Some(addr), _) => Some(Arc::new(AnonymizerClient::new(addr))),
        (true, None, Some(store)) => Some(Arc::new(
            AnonymizationStore::open(store).map_err(|e| PrepError::InvalidConfig(e.to_string()))?,
        )),
        (true, None, None) => {
            return Err(invalid(
                "anonymize needs anonymizer_addr or anonymizer_store",
            ))
        }
    };
    let clock = config
        .source_date_epoch
        .map_or(LogClock::System, LogClock::Fixed);
    Ok(Plan {
        input,
        staging,
        output,
        options: ExtractionOptions {
            filters,
            anonymizer,
            clock,
        },
    })
}

#[derive(Debug, Default)]
pub struct PipelineReport {
    pub steps_run: Vec<&'static str>,
    pub steps_skipped: Vec<&'static str>,
    pub raw_archives: Vec<PathBuf>,
    pub processed_archives: Vec<PathBuf>,
    /// Present when the process step ran in this invocation.
    pub replaypacks: Vec<ReplaypackRun>,
}

fn marker(staging: &Path, step: usize) -> PathBuf {
    staging
        .join(".steps")
        .join(format!("{}-{}.done", step + 1, STEPS[step]))
}

fn reset_dir(dir: &Path) -> Result<(), PrepError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(write_err(dir))?;
    }
    std::fs::create_dir_all(dir).map_err(write_err(dir))
}

fn list_zips(dir: &Path) -> Vec<PathBuf> {
    let mut zips: Vec<PathBuf> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "zip"))
        .collect();
    zips.sort();
    zips
}

/// Flatten -> package raw -> process -> copy mapping -> rename -> package
/// processed. The config is checked in full before any step runs; a failing
/// step stops the run and leaves earlier steps' outputs for a resume.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport, PrepError> {
    let plan = validate(config)?;
    let flattened = plan.staging.join("flattened");
    let processed = plan.staging.join("processed");
    let raw_out = plan.output.join("raw");
    let processed_out = plan.output.join("processed");
    std::fs::create_dir_all(plan.staging.join(".steps")).map_err(write_err(&plan.staging))?;

    let mut report = PipelineReport::default();
    let mut rerun_from: Option<usize> = None;
    for (step, &name) in STEPS.iter().enumerate() {
        let done = marker(&plan.staging, step);
        if config.resume && rerun_from.is_none() && done.is_file() {
            report.steps_skipped.push(name);
            continue;
        }
        rerun_from.get_or_insert(step);
        // Later steps depend on this one, so their markers no longer hold.
        for later in step..STEPS.len() {
            let _ = std::fs::remove_file(marker(&plan.staging, later));
        }

        let result = match step {
            0 => reset_dir(&flattened).and_then(|_| {
                for dir in subdirectories(&plan.input)? {
                    flatten_directory(&dir, &flattened.join(dir_name(&dir)))?;
                }
                Ok(())
            }),
            1 => reset_dir(&raw_out)
                .and_then(|_| package_directories(&flattened, &raw_out).map(drop)),
            2 => reset_dir(&processed).and_then(|_| {
                let runs =
                    process_replaypacks(&flattened, &processed, config.workers, &plan.options)?;
                let failed = runs.iter().find_map(|r| {
                    r.result
                        .as_ref()
                        .err()
                        .map(|e| (r.name.clone(), e.to_string()))
                });
                report.replaypacks = runs;
                match failed {
                    Some((name, reason)) => Err(PrepError::ReplaypackFailed { name, reason }),
                    None => Ok(()),
                }
            }),
            3 => copy_processed_mapping(&flattened, &processed).map(drop),
            4 => subdirectories(&processed).and_then(|dirs| {
                for dir in dirs {
                    let name = dir_name(&dir);
                    let tournament = config.tournament_names.get(&name).unwrap_or(&name);
                    rename_auxiliary_files(&dir, tournament)?;
                }
                Ok(())
            }),
            _ => reset_dir(&processed_out)
                .and_then(|_| package_directories(&processed, &processed_out).map(drop)),
        };
        result.map_err(|e| PrepError::StepFailed {
            step: name,
            source: Box::new(e),
        })?;
        std::fs::write(&done, b"").map_err(write_err(&done))?;
        report.steps_run.push(name);
    }
    report.raw_archives = list_zips(&raw_out);
    report.processed_archives = list_zips(&processed_out);
    Ok(report)
}
