//! Report envelopes and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use resdual::cost::{constants, FormulaConstants};
use serde::Serialize;

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "RESDUAL_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Table,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Table => "txt",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: &'a C,
    pub seed: Option<u64>,
    pub dtype: &'static str,
    pub constants: FormulaConstants,
    pub report: &'a R,
}

impl<'a, C: Serialize, R: Serialize> Envelope<'a, C, R> {
    pub fn new(
        command: &'static str,
        config: &'a C,
        seed: Option<u64>,
        dtype: &'static str,
        report: &'a R,
    ) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            seed,
            dtype,
            constants: constants(),
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Where a report goes: `--out`, else `$RESDUAL_OUT_DIR/<command>.<ext>`,
/// else stdout.
pub fn destination(
    out: Option<&Path>,
    out_dir: Option<&Path>,
    command: &str,
    format: Format,
) -> Option<PathBuf> {
    out.map(Path::to_path_buf)
        .or_else(|| out_dir.map(|d| d.join(format!("{command}.{}", format.extension()))))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("writing into {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

pub fn emit(dest: Option<PathBuf>, contents: &str) -> Result<()> {
    match dest {
        Some(p) => {
            write_atomic(&p, contents)?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{contents}"),
    }
    Ok(())
}
