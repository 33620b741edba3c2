//! Flat `key = value` run configuration. Command-line flags override file
//! values; unknown keys are rejected.

use std::path::{Path, PathBuf};

use nlswag::filter::FilterParams;

use crate::error::{Category, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodName {
    Boxcar,
    Stage1,
    Nlswag,
}

impl MethodName {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "boxcar" => Ok(Self::Boxcar),
            "stage1" => Ok(Self::Stage1),
            "nlswag" => Ok(Self::Nlswag),
            _ => Err(CliError::config(format!("unknown method `{s}` (boxcar, stage1, nlswag)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: FilterParams,
    pub method: MethodName,
    pub k: usize,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub trials: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { params: FilterParams::default(), method: MethodName::Nlswag, k: 5, seed: 1, input: None, trials: None }
    }
}

pub const KEYS: [&str; 16] = [
    "method",
    "k",
    "seed",
    "input",
    "trials",
    "search_half",
    "patch_half_stage1",
    "patch_half_stage2",
    "h1",
    "h2",
    "fringe_block",
    "fringe_fft",
    "sigma_smooth",
    "fringe_refine",
    "xi",
    "fringe_compensation",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.parse().map_err(|_| CliError::config(format!("`{key}`: cannot parse `{value}`")))
}

pub fn parse_xi(value: &str) -> CliResult<[f64; 3]> {
    let parts: Vec<f64> = value.split(',').map(|p| num::<f64>("xi", p.trim())).collect::<CliResult<_>>()?;
    <[f64; 3]>::try_from(parts).map_err(|_| CliError::config("`xi` needs three comma-separated coefficients"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let p = &mut self.params;
        match key {
            "method" => self.method = MethodName::parse(value)?,
            "k" => self.k = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "input" => self.input = Some(PathBuf::from(value)),
            "trials" => self.trials = Some(num(key, value)?),
            "search_half" => p.search_half = num(key, value)?,
            "patch_half_stage1" => p.patch_half_stage1 = num(key, value)?,
            "patch_half_stage2" => p.patch_half_stage2 = num(key, value)?,
            "h1" => p.h1 = num(key, value)?,
            "h2" => p.h2 = num(key, value)?,
            "fringe_block" => p.fringe_block = num(key, value)?,
            "fringe_fft" => p.fringe_fft = num(key, value)?,
            "sigma_smooth" => p.sigma_smooth = num(key, value)?,
            "fringe_refine" => p.fringe_refine = num(key, value)?,
            "xi" => p.xi_coeffs = if value == "auto" { None } else { Some(parse_xi(value)?) },
            "fringe_compensation" => p.fringe_compensation = num(key, value)?,
            _ => return Err(CliError::config(format!("unknown key `{key}`, expected one of {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::config(format!("line {}: {}", n + 1, e.message)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError {
                category: Category::MissingFile,
                message: format!("missing file {}", path.display()),
            });
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.params.validate()?;
        if self.k == 0 || self.k % 2 == 0 {
            return Err(CliError::config(format!("`k` must be odd and positive, got {}", self.k)));
        }
        if self.trials == Some(0) {
            return Err(CliError::config("`trials` must be at least 1"));
        }
        Ok(())
    }
}
