//! Flat `key=value` configuration with flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bionica::{Error, Result};

pub const SEED_ENV: &str = "BIONICA_SEED";

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out",
    "in",
    "algo",
    "d",
    "k",
    "T",
    "runs",
    "stride",
    "gamma",
    "eta0",
    "eta_decay",
    "tau",
    "dyn_tol",
    "dyn_max_iter",
    "warm_start",
    "nnpca_eta0",
    "nnpca_eta_decay",
    "outer_iters",
    "y_inner_tol",
    "y_inner_max_iter",
    "images",
    "epochs",
    "write_stream",
];

/// Keys forwarded to [`bionica::nica::Hyperparams::set`].
pub const HYPER_KEYS: &[&str] = &[
    "gamma",
    "eta0",
    "eta_decay",
    "tau",
    "dyn_tol",
    "dyn_max_iter",
    "warm_start",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// File entries first, then flag overrides; later entries win.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Config::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.merge_file(&text, path)?;
        }
        cfg.merge_flags(overrides)?;
        Ok(cfg)
    }

    fn insert(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::InvalidConfig(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_owned(), value.trim().to_owned());
        Ok(())
    }

    fn merge_file(&mut self, text: &str, path: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    kind: "config",
                    path: Some(path.to_owned()),
                    line: Some(n + 1),
                    message: format!("expected key=value, got {line:?}"),
                });
            };
            self.insert(key.trim(), value)?;
        }
        Ok(())
    }

    fn merge_flags(&mut self, args: &[String]) -> Result<()> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let Some(flag) = arg.strip_prefix("--") else {
                return Err(Error::InvalidConfig(format!("expected --key, got {arg:?}")));
            };
            match flag.split_once('=') {
                Some((key, value)) => self.insert(key, value)?,
                None => {
                    let value = it
                        .next()
                        .ok_or_else(|| Error::InvalidConfig(format!("--{flag} needs a value")))?;
                    self.insert(flag, value)?;
                }
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(Error::InvalidConfig(format!(
                "{key}: expected true/false, got {v:?}"
            ))),
        }
    }

    /// `seed` key, else `$BIONICA_SEED`, else 0.
    pub fn seed(&self) -> Result<u64> {
        if let Some(v) = self.raw("seed") {
            return v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("seed: cannot parse {v:?}")));
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}: cannot parse {v:?}"))),
            Err(_) => Ok(0),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out").unwrap_or("out"))
    }

    pub fn in_dir(&self) -> Option<PathBuf> {
        self.raw("in").map(PathBuf::from)
    }
}
