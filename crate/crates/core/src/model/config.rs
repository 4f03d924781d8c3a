//! `gorconfig.txt`-style configuration: `key<TAB>value` lines, `#` comments.
//!
//! Required key `buildpath` names a contig list (`name<TAB>length` per line).
//! Optional keys: `cachedir` (default `./gorcache`), `refseqpath`,
//! `splitcount`, `workers`. Relative paths resolve against the config file's
//! directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ContigOrder;

pub const DEFAULT_CACHE_DIR: &str = "./gorcache";

#[derive(Debug, Clone)]
pub struct EngineSettings {
    /// Directory relative file references in queries resolve against.
    pub root: PathBuf,
    pub cache_dir: PathBuf,
    pub refseq_path: Option<PathBuf>,
    pub split_count: Option<usize>,
    pub workers: Option<usize>,
}

impl EngineSettings {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        EngineSettings {
            cache_dir: root.join(DEFAULT_CACHE_DIR),
            root,
            refseq_path: None,
            split_count: None,
            workers: None,
        }
    }

    pub fn worker_count(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4))
            .max(1)
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub build: Arc<ContigOrder>,
    pub settings: EngineSettings,
}

fn key_values(path: &Path, text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('\t')
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| Error::ConfigParse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected key<TAB>value, found {line:?}"),
            })?;
        out.push((i + 1, k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    Ok(out)
}

/// Reads a contig list file.
pub fn load_build(path: &Path) -> Result<ContigOrder> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut contigs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let name = parts.next().unwrap_or("").trim();
        let len = parts.next().and_then(|l| l.trim().parse::<u64>().ok());
        match (name.is_empty(), len) {
            (false, Some(l)) if l > 0 => contigs.push((name.to_string(), l)),
            _ => {
                return Err(Error::ConfigParse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected name<TAB>length, found {line:?}"),
                })
            }
        }
    }
    ContigOrder::new(contigs)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::ConfigNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let root = if root.as_os_str().is_empty() { PathBuf::from(".") } else { root };
    let mut settings = EngineSettings::new(&root);
    let mut build_path = None;
    for (line, key, value) in key_values(path, &text)? {
        let num = |v: &str| {
            v.parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| Error::ConfigParse {
                path: path.to_path_buf(),
                line,
                msg: format!("{key} must be a positive integer"),
            })
        };
        match key.as_str() {
            "buildpath" => build_path = Some(root.join(&value)),
            "cachedir" => settings.cache_dir = root.join(&value),
            "refseqpath" => settings.refseq_path = Some(root.join(&value)),
            "splitcount" => settings.split_count = Some(num(&value)?),
            "workers" => settings.workers = Some(num(&value)?),
            _ => log::warn!("{}:{line}: ignoring unknown config key '{key}'", path.display()),
        }
    }
    let build_path = build_path.ok_or_else(|| Error::ConfigParse {
        path: path.to_path_buf(),
        line: 0,
        msg: "missing required key 'buildpath'".into(),
    })?;
    let build = load_build(&build_path)?;
    Ok(Config { build: Arc::new(build), settings })
}
