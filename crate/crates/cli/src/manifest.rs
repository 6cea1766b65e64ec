use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written beside each output.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub created_unix: u64,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::runtime("manifest", format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Fails unless every output (and its manifest) is absent or `force` is set.
pub(crate) fn guard_outputs(outputs: &[&Path], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    for out in outputs {
        for p in [out.to_path_buf(), manifest_path(out)] {
            if p.exists() {
                return Err(CliError::runtime(
                    "output",
                    format!("{} exists; pass --force to overwrite", p.display()),
                ));
            }
        }
    }
    Ok(())
}

pub(crate) fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime("output", format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::runtime("output", format!("{}: {e}", path.display())))
}

/// Writes the manifest for `outputs[0]`, covering every listed file.
pub(crate) fn write_manifest<C: Serialize>(
    command: &str,
    seed: u64,
    config: &C,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<(), CliError> {
    let config = serde_json::to_value(config).map_err(|e| CliError::runtime("manifest", e))?;
    let canonical = serde_json::to_vec(&serde_json::json!({ "command": command, "seed": seed, "config": config }))
        .map_err(|e| CliError::runtime("manifest", e))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        seed,
        config,
        config_hash: sha256_hex(&canonical),
        inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
        outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::runtime("manifest", e))?;
    write_output(&manifest_path(outputs[0]), &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("a/b.json")), Path::new("a/b.json.manifest.json"));
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
