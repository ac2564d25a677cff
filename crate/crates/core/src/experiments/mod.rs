//! Manifest-driven experiment runners behind the `mfgf` command line tool.
//!
//! Every command writes CSV tables and one JSON summary into the output
//! directory. Each file records the SHA-256 of the manifest and the seed, and
//! the summary carries named pass/fail verdicts.

mod commands;
pub mod manifest;
pub mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use commands::{cmd_check, cmd_cw_scan, cmd_evolve, cmd_metric, cmd_particles, cw_scan_row, CwScanRow};
pub use manifest::{CommandKind, LoadedManifest, Manifest};

use crate::error::{Error, Result};

/// Where and how a command writes its results.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub manifest_sha256: String,
}

impl RunContext {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Named verdicts; a command passes iff all of them do.
#[derive(Debug, Clone, Default, Serialize)]
#[serde(transparent)]
pub struct Verdicts(BTreeMap<String, bool>);

impl Verdicts {
    pub fn set(&mut self, name: impl Into<String>, pass: bool) {
        self.0.insert(name.into(), pass);
    }

    pub fn all_pass(&self) -> bool {
        self.0.values().all(|&v| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &bool)> {
        self.0.iter()
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: CommandKind,
    pub summary: serde_json::Value,
    pub verdicts: Verdicts,
    pub files: Vec<PathBuf>,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.verdicts.all_pass()
    }
}

/// Runs `kind` with the settings of `manifest` (optional only for `check`).
pub fn run(kind: CommandKind, manifest: Option<&LoadedManifest>, ctx: &RunContext) -> Result<Report> {
    if let Some(m) = manifest {
        if let Some(declared) = m.manifest.command {
            if declared != kind {
                return Err(Error::config(
                    "command",
                    format!("manifest is for `{}` but `{}` was requested", declared.name(), kind.name()),
                ));
            }
        }
    }
    std::fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| Error::config("out_dir", format!("cannot create {}: {e}", ctx.out_dir.display())))?;
    let need = || manifest.ok_or_else(|| Error::config("--manifest", format!("`{}` needs a manifest", kind.name())));
    match kind {
        CommandKind::Evolve => {
            let m = need()?;
            cmd_evolve(&m.model()?, m.section(&m.manifest.evolve, "evolve")?, ctx)
        }
        CommandKind::Metric => {
            let m = need()?;
            cmd_metric(&m.model()?, m.section(&m.manifest.metric, "metric")?, ctx)
        }
        CommandKind::Particles => {
            let m = need()?;
            cmd_particles(&m.model()?, m.section(&m.manifest.particles, "particles")?, ctx)
        }
        CommandKind::CwScan => {
            let m = need()?;
            cmd_cw_scan(m.section(&m.manifest.cw_scan, "cw_scan")?, ctx)
        }
        CommandKind::Check => {
            let cfg = manifest.and_then(|m| m.manifest.check.clone()).unwrap_or_default();
            cmd_check(&cfg, ctx)
        }
    }
}

pub(crate) fn summary_path(ctx: &RunContext, kind: CommandKind) -> PathBuf {
    ctx.path(&format!("{}_summary.json", kind.name().replace('-', "_")))
}

pub(crate) fn relative(p: &Path) -> String {
    p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
}
