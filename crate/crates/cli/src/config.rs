//! Run configuration: defaults, a flat `key = value` file, and flag overrides.

use std::path::{Path, PathBuf};

use mmsc_core::allocation::{PatchGrid, RateTable};
use mmsc_core::transport::ChannelConfig;

use crate::error::CliError;

/// Channel rate used when neither a rate nor a budget is configured.
pub const DEFAULT_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub rates: RateTable,
    /// `None` means [`DEFAULT_RATE`].
    pub channel: Option<ChannelConfig>,
    pub image: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub frame: Option<PathBuf>,
    pub recon: Option<PathBuf>,
    pub recon_archive: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub toy: bool,
    pub blur_radius: usize,
    /// Channel rate fractions visited by a sweep.
    pub sweep_rates: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch_size: PatchGrid::DEFAULT_PATCH,
            rates: RateTable::default(),
            channel: None,
            image: None,
            archive: None,
            mask: None,
            frame: None,
            recon: None,
            recon_archive: None,
            corpus: None,
            out_dir: PathBuf::from("out"),
            toy: false,
            blur_radius: 0,
            sweep_rates: (0..=20).map(|i| i as f64 / 20.0).collect(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::bad(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(|v| parse_num(key, v)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "" | "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(CliError::bad(format!(
            "{key}: expected true or false, got {other:?}"
        ))),
    }
}

impl PipelineConfig {
    /// Sets one option by its flag name (without the leading dashes).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let path = || Some(PathBuf::from(value.trim()));
        match key {
            "patch-size" => self.patch_size = parse_num(key, value)?,
            "rates" => self.rates = RateTable::new(parse_list(key, value)?)?,
            "rate" => {
                let r: f64 = parse_num(key, value)?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(CliError::bad(format!("rate {r} outside [0, 1]")));
                }
                self.channel = Some(ChannelConfig::Rate(r));
            }
            "budget" => self.channel = Some(ChannelConfig::Budget(parse_num(key, value)?)),
            "image" => self.image = path(),
            "archive" => self.archive = path(),
            "mask" => self.mask = path(),
            "frame" => self.frame = path(),
            "recon" => self.recon = path(),
            "recon-archive" => self.recon_archive = path(),
            "corpus" => self.corpus = path(),
            "out-dir" => self.out_dir = PathBuf::from(value.trim()),
            "toy" => self.toy = parse_bool(key, value)?,
            "blur-radius" => self.blur_radius = parse_num(key, value)?,
            "sweep-rates" => {
                let rates: Vec<f64> = parse_list(key, value)?;
                if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                    return Err(CliError::bad(format!("sweep rate {r} outside [0, 1]")));
                }
                self.sweep_rates = rates;
            }
            other => return Err(CliError::bad(format!("unknown option {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat config text: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::bad(format!("config line {}: expected key = value", n + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn channel(&self) -> ChannelConfig {
        self.channel.unwrap_or(ChannelConfig::Rate(DEFAULT_RATE))
    }
}
