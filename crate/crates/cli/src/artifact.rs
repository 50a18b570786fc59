//! Provenance headers. Every artifact starts with
//! `# backchannel artifact=<kind> config_hash=<hash> seed=<seed>`.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

const PREFIX: &str = "# backchannel ";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Header {
    pub fn new(kind: &str, config_hash: &str, seed: u64) -> Self {
        Self { kind: kind.into(), config_hash: config_hash.into(), seed }
    }

    pub fn line(&self) -> String {
        format!("{PREFIX}artifact={} config_hash={} seed={}", self.kind, self.config_hash, self.seed)
    }

    pub fn parse(line: &str) -> Option<Self> {
        let rest = line.strip_prefix(PREFIX)?;
        let (mut kind, mut hash, mut seed) = (None, None, None);
        for field in rest.split_whitespace() {
            match field.split_once('=')? {
                ("artifact", v) => kind = Some(v.to_string()),
                ("config_hash", v) => hash = Some(v.to_string()),
                ("seed", v) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self { kind: kind?, config_hash: hash?, seed: seed? })
    }
}

/// File contents with the header line split off.
pub struct Artifact {
    pub header: Option<Header>,
    pub body: String,
}

pub fn write(path: &Path, header: &Header, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut text = String::with_capacity(body.len() + 96);
    text.push_str(&header.line());
    text.push('\n');
    text.push_str(body);
    if !body.ends_with('\n') {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<Artifact> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let first = text.lines().next().unwrap_or("");
    match Header::parse(first) {
        Some(header) => {
            let body = text[first.len()..].trim_start_matches(['\r', '\n']).to_string();
            Ok(Artifact { header: Some(header), body })
        }
        None => Ok(Artifact { header: None, body: text }),
    }
}

/// Fails unless every headed input carries the same config hash.
pub fn check_consistent(inputs: &[(&Path, &Option<Header>)], force: bool) -> Result<()> {
    let headed: Vec<(&Path, &Header)> = inputs.iter().filter_map(|(p, h)| h.as_ref().map(|h| (*p, h))).collect();
    let Some((p0, h0)) = headed.first() else { return Ok(()) };
    for (p, h) in &headed[1..] {
        if h.config_hash != h0.config_hash && !force {
            return Err(CliError::data(format!(
                "config hash mismatch: {} has {} but {} has {} (use --force to override)",
                p0.display(),
                h0.config_hash,
                p.display(),
                h.config_hash
            )));
        }
    }
    Ok(())
}
