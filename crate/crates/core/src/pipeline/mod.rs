//! Stage-by-stage driver: each stage reads upstream artifacts from the
//! output directory, writes its own files and a manifest recording input
//! and output digests. A stage whose inputs, seed and configuration are
//! unchanged since its last run, and whose outputs are intact, is skipped.

mod artifacts;
mod config;
mod report;
mod stages;

pub use config::{PipelineConfig, MIN_REPLICATES_FOR_CLAIMS};

use crate::exec::Execution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PipelineStage {
    Ingest,
    Backcast,
    Footprints,
    Normalize,
    FitCopulas,
    GapFill,
    Underreport,
    Trend,
    Report,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 9] = [
        PipelineStage::Ingest,
        PipelineStage::Backcast,
        PipelineStage::Footprints,
        PipelineStage::Normalize,
        PipelineStage::FitCopulas,
        PipelineStage::GapFill,
        PipelineStage::Underreport,
        PipelineStage::Trend,
        PipelineStage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStage::Ingest => "ingest",
            PipelineStage::Backcast => "backcast",
            PipelineStage::Footprints => "footprints",
            PipelineStage::Normalize => "normalize",
            PipelineStage::FitCopulas => "fit-copulas",
            PipelineStage::GapFill => "gap-fill",
            PipelineStage::Underreport => "underreport",
            PipelineStage::Trend => "trend",
            PipelineStage::Report => "report",
        }
    }
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineStage {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, PipelineError> {
        PipelineStage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage `{s}`")))
    }
}

/// Parse a comma-separated stage list, keeping the given order.
pub fn parse_stages(list: &str) -> Result<Vec<PipelineStage>, PipelineError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("stage {stage}: missing input {}", path.display())]
    MissingInput { stage: PipelineStage, path: PathBuf },
    #[error("stage {stage}: {message}")]
    Stage { stage: PipelineStage, message: String },
}

impl PipelineError {
    /// 2 for a missing input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingInput { .. } => 2,
            _ => 1,
        }
    }
}

pub(crate) type StageResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub stages: Vec<PipelineStage>,
    pub seed_override: Option<u64>,
    /// Overrides the config's `parallel` flag.
    pub exec: Option<Execution>,
    /// Manifest timestamp; otherwise `SOURCE_DATE_EPOCH`, otherwise now.
    pub timestamp: Option<String>,
    /// Run stages even when their manifest says they are up to date.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seed: u64,
    pub config_sha256: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub stages: Vec<(PipelineStage, StageStatus)>,
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    use std::io::Read;
    let mut h = Sha256::new();
    let mut f = std::fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// File digest, or for a directory the digest of its sorted relative paths
/// and file digests.
pub fn digest_path(path: &Path) -> std::io::Result<String> {
    if !path.is_dir() {
        return sha256_file(path);
    }
    let mut files = Vec::new();
    files_under(path, &mut files)?;
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(path).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(sha256_file(&f)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn display(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

fn timestamp(opts: &RunOptions) -> String {
    if let Some(t) = &opts.timestamp {
        return t.clone();
    }
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0)
        });
    chrono::DateTime::from_timestamp(secs, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_default()
}

/// Shared state handed to every stage.
pub(crate) struct Ctx<'a> {
    pub cfg: &'a PipelineConfig,
    pub exec: Execution,
}

impl Ctx<'_> {
    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    /// Seed of a named random stream family, derived from the master seed.
    pub fn seed_for(&self, label: &str) -> u64 {
        use rand::Rng;
        crate::rng::StreamKey::new(self.cfg.seed, "pipeline")
            .with_str(label)
            .rng()
            .random()
    }
}

fn manifest_path(cfg: &PipelineConfig, stage: PipelineStage) -> PathBuf {
    cfg.output_dir.join("manifests").join(format!("{stage}.json"))
}

fn up_to_date(cfg: &PipelineConfig, stage: PipelineStage, inputs: &[FileDigest], seed: u64, config_sha: &str) -> bool {
    let Ok(text) = std::fs::read_to_string(manifest_path(cfg, stage)) else {
        return false;
    };
    let Ok(m) = serde_json::from_str::<Manifest>(&text) else {
        return false;
    };
    m.inputs == inputs
        && m.seed == seed
        && m.config_sha256 == config_sha
        && m.outputs.iter().all(|o| {
            sha256_file(&cfg.output_dir.join(&o.path))
                .map(|d| d == o.sha256)
                .unwrap_or(false)
        })
}

/// Run `opts.stages` in the given order.
pub fn run(config: &PipelineConfig, opts: &RunOptions) -> Result<RunSummary, PipelineError> {
    let mut cfg = config.clone();
    if let Some(s) = opts.seed_override {
        cfg.seed = s;
    }
    cfg.validate().map_err(PipelineError::Config)?;
    let exec = opts.exec.unwrap_or(if cfg.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    });
    let config_sha = {
        let text = toml::to_string(&cfg).map_err(|e| PipelineError::Config(e.to_string()))?;
        hex::encode(Sha256::digest(text.as_bytes()))
    };
    std::fs::create_dir_all(cfg.output_dir.join("manifests")).map_err(|e| PipelineError::Config(format!(
        "{}: {e}",
        cfg.output_dir.display()
    )))?;
    let ctx = Ctx { cfg: &cfg, exec };
    let mut summary = RunSummary { stages: Vec::new() };
    for &stage in &opts.stages {
        let fail = |e: &dyn fmt::Display| PipelineError::Stage {
            stage,
            message: e.to_string(),
        };
        let inputs = stages::inputs(&ctx, stage);
        let mut digests = Vec::with_capacity(inputs.len());
        for p in &inputs {
            if !p.exists() {
                return Err(PipelineError::MissingInput { stage, path: p.clone() });
            }
            digests.push(FileDigest {
                path: display(p),
                sha256: digest_path(p).map_err(|e| fail(&e))?,
            });
        }
        if !opts.force && up_to_date(&cfg, stage, &digests, cfg.seed, &config_sha) {
            log::info!("{stage}: up to date");
            summary.stages.push((stage, StageStatus::UpToDate));
            continue;
        }
        log::info!("{stage}: running");
        let written = stages::run_stage(&ctx, stage).map_err(|e| fail(&e))?;
        let mut outputs = Vec::with_capacity(written.len());
        for p in written {
            let rel = p.strip_prefix(&cfg.output_dir).unwrap_or(&p).to_path_buf();
            outputs.push(FileDigest {
                path: display(&rel),
                sha256: sha256_file(&p).map_err(|e| fail(&e))?,
            });
        }
        let manifest = Manifest {
            stage: stage.to_string(),
            inputs: digests,
            outputs,
            seed: cfg.seed,
            config_sha256: config_sha.clone(),
            timestamp: timestamp(opts),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| fail(&e))? + "\n";
        std::fs::write(manifest_path(&cfg, stage), text).map_err(|e| fail(&e))?;
        summary.stages.push((stage, StageStatus::Ran));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in PipelineStage::ALL {
            assert_eq!(s.as_str().parse::<PipelineStage>().unwrap(), s);
        }
        assert_eq!(
            parse_stages("ingest, gap-fill").unwrap(),
            vec![PipelineStage::Ingest, PipelineStage::GapFill]
        );
        assert!(parse_stages("ingest,plot").is_err());
    }

    #[test]
    fn exit_codes() {
        let missing = PipelineError::MissingInput {
            stage: PipelineStage::Trend,
            path: "x".into(),
        };
        assert_eq!(missing.exit_code(), 2);
        assert!(missing.to_string().contains("trend"));
        assert_eq!(PipelineError::Config("x".into()).exit_code(), 1);
    }
}
