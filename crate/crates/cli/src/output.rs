//! Artifact writing: atomic per-file, deterministic content.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use selfres_core::scoring::nats_to_bits;

/// Writes via a sibling temp file and rename, so readers never observe a
/// half-written artifact.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = PathBuf::from(path);
    let mut name = path
        .file_name()
        .context("artifact path needs a file name")?
        .to_os_string();
    name.push(".tmp");
    tmp.set_file_name(name);
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Which artifact representations to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Formats {
    pub fn from_flags(flags: &[String]) -> Result<Formats> {
        if flags.is_empty() {
            return Ok(Formats {
                csv: true,
                json: false,
                svg: false,
            });
        }
        let mut f = Formats {
            csv: false,
            json: false,
            svg: false,
        };
        for flag in flags {
            match flag.as_str() {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => anyhow::bail!("unknown format {other} (expected csv, json, or svg)"),
            }
        }
        Ok(f)
    }
}

/// Score formatting for display tables; artifacts always stay in nats.
pub fn display_score(value: f64, bits: bool) -> String {
    if bits {
        format!("{:.6} bits", nats_to_bits(value))
    } else {
        format!("{value:.6} nats")
    }
}
