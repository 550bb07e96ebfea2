use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Amp,
    Klf,
    Iplf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Amp, Method::Klf, Method::Iplf];

    /// Lower-case identifier used in CSV columns.
    pub fn id(self) -> &'static str {
        match self {
            Method::Amp => "amp",
            Method::Klf => "klf",
            Method::Iplf => "iplf",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Amp => "AMP",
            Method::Klf => "KLF",
            Method::Iplf => "IPLF",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "amp" => Ok(Method::Amp),
            "klf" => Ok(Method::Klf),
            "iplf" => Ok(Method::Iplf),
            other => Err(BenchError::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ricker,
    Lgssm,
}

impl FromStr for ModelKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ricker" => Ok(ModelKind::Ricker),
            "lgssm" => Ok(ModelKind::Lgssm),
            other => Err(BenchError::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Parse a comma-separated method list such as `amp,klf,iplf`.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(Method::from_str)
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub model: ModelKind,
    pub horizon: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    pub grid_check: bool,
    /// Worker threads; `None` defers to `BENCH_THREADS` or the rayon default.
    pub threads: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Ricker,
            horizon: 128,
            trials: 100,
            master_seed: 42,
            methods: Method::ALL.to_vec(),
            out_dir: PathBuf::from("results"),
            grid_check: false,
            threads: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(BenchError::Config("horizon must be >= 1".into()));
        }
        if self.trials < 1 {
            return Err(BenchError::Config("trials must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(BenchError::Config("at least one method is required".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(BenchError::Config(format!("method '{m}' listed twice")));
            }
        }
        if self.threads == Some(0) {
            return Err(BenchError::Config("thread count must be >= 1".into()));
        }
        Ok(())
    }
}
