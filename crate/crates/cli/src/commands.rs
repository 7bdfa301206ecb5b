use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use p3ls_core::experiment::{
    emit_report, run_experiment_with, ExperimentConfig, ExperimentData, ExperimentError, ModelKind,
    DEFAULT_REPETITIONS, QUICK_REPETITIONS,
};
use p3ls_core::federation::TranscriptParseError;
use p3ls_core::masking::OrthogonalMethod;
use p3ls_core::simulator::{generate_dataset, read_dataset, write_dataset, SimulatorConfig, SimulatorError};
use p3ls_core::{audit_views, ProtocolTranscript};
use serde_json::json;

use crate::{AuditArgs, DatasetSource, GenArgs, RunArgs};

#[derive(Debug, thiserror::Error)]
#[error("transcript has {0} policy violation(s)")]
struct AuditFailed(usize);

/// Prints the single machine-readable failure line on stderr.
pub fn report_failure(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": message.trim_end(), "kind": kind }));
}

/// The error chain joined with ": ". Library errors already embed their
/// source in their message, so causes repeated verbatim are dropped.
pub fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|prev| prev.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

pub fn error_kind(e: &anyhow::Error) -> &'static str {
    if e.is::<AuditFailed>() {
        "audit"
    } else if e.is::<TranscriptParseError>() {
        "transcript"
    } else if e.is::<SimulatorError>() {
        "dataset"
    } else if e.is::<ExperimentError>() {
        "experiment"
    } else {
        "io"
    }
}

impl DatasetSource {
    fn config(&self) -> Result<SimulatorConfig> {
        let Some(given) = self.dataset.as_deref() else { bail!("--dataset is required") };
        let mut config = match given.parse::<u32>() {
            Ok(id) => SimulatorConfig::builtin(id)?,
            Err(_) => {
                let file = File::open(given).with_context(|| format!("opening simulator config {given}"))?;
                serde_json::from_reader(BufReader::new(file))
                    .with_context(|| format!("parsing simulator config {given}"))?
            }
        };
        if let Some(m) = self.samples {
            config.m = m;
        }
        config.validate()?;
        Ok(config)
    }

    fn label(&self) -> String {
        match self.dataset.as_deref() {
            Some(id) if id.parse::<u32>().is_ok() => format!("dataset-{id}"),
            Some(path) => Path::new(path).file_stem().map_or(path.into(), |s| s.to_string_lossy().into_owned()),
            None => "dataset".into(),
        }
    }
}

pub fn gen(args: GenArgs) -> Result<String> {
    let config = args.source.config()?;
    let data = generate_dataset(&config.stages, config.m, args.seed)?;
    let manifest = write_dataset(&data, &args.out)?;
    log::info!("wrote {} blocks to {}", manifest.blocks.len(), args.out.display());
    Ok(json!({ "out": args.out, "shapes": manifest.shapes }).to_string())
}

pub fn run(args: RunArgs) -> Result<String> {
    let data = match &args.data {
        Some(dir) => {
            let label = match args.source.dataset {
                Some(_) => args.source.label(),
                None => dir.file_name().map_or("dataset".into(), |s| s.to_string_lossy().into_owned()),
            };
            ExperimentData::from_loaded(label, read_dataset(dir)?)
        }
        None => {
            let config = args.source.config()?;
            let sim = generate_dataset(&config.stages, config.m, args.seed)?;
            ExperimentData::from_simulated(args.source.label(), &sim)
        }
    };

    let reps = match (args.reps, args.quick) {
        (Some(n), _) => n,
        (None, true) => QUICK_REPETITIONS,
        (None, false) => DEFAULT_REPETITIONS,
    };
    let mut cfg = ExperimentConfig::new(data.name.clone(), reps, args.seed);
    cfg.k_max = args.k_max;
    cfg.models = args.models;
    cfg.models.sort();
    cfg.models.dedup();
    if args.block_masks {
        cfg.mask_method = OrthogonalMethod::block_based();
    }

    if args.transcript.is_some() && !cfg.models.contains(&ModelKind::P3ls) {
        bail!("--transcript needs the p3ls model in --models");
    }

    let mut transcript = None;
    let report = run_experiment_with(&cfg, &data, &mut |index, federation| {
        if index == 0 {
            transcript = Some(federation.transcript().clone());
        }
    })?;
    let paths = emit_report(&report, &args.out)?;

    if let Some(path) = &args.transcript {
        let transcript = transcript.expect("first repetition ran the federation");
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        transcript
            .write_jsonl(&mut out)
            .and_then(|()| out.flush())
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let summary: Vec<_> =
        report.summary.iter().map(|s| json!({ "model": s.model, "mean_r2": s.mean_r2, "mean_k": s.mean_k })).collect();
    Ok(json!({ "report": paths.json, "summary_csv": paths.csv, "models": summary }).to_string())
}

pub fn audit(args: AuditArgs) -> Result<String> {
    let path = &args.transcript;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let transcript =
        ProtocolTranscript::read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    let report = audit_views(&transcript);
    let line = json!({
        "messages": transcript.len(),
        "violations": report.violations,
        "views": report.views,
    });
    if !report.passed() {
        println!("{line}");
        return Err(AuditFailed(report.violations.len()).into());
    }
    Ok(line.to_string())
}
