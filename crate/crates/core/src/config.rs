//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::BoundOptions;
use crate::error::{Error, Result};
use crate::latency::LatencyRates;
use crate::rate::ChannelParams;
use crate::schemes::{build, AnalyzedScheme, FrameParams, SchemeKind, SchemeSpec};
use crate::simulate::McConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl TimeGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::config("time_grid", "start and stop must be finite"));
        }
        if self.start >= self.stop {
            return Err(Error::config("time_grid.start", "must be below time_grid.stop"));
        }
        if self.points < 2 {
            return Err(Error::config("time_grid.points", "must be >= 2"));
        }
        if self.spacing == Spacing::Log && self.start <= 0.0 {
            return Err(Error::config("time_grid.start", "log spacing needs start > 0"));
        }
        Ok(())
    }

    /// Grid values; the endpoints are exactly `start` and `stop`.
    pub fn values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let last = (self.points - 1) as f64;
        let mut v: Vec<f64> = (0..self.points)
            .map(|i| {
                let frac = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.start + frac * (self.stop - self.start),
                    Spacing::Log => (self.start.ln() + frac * (self.stop / self.start).ln()).exp(),
                }
            })
            .collect();
        v[0] = self.start;
        v[self.points - 1] = self.stop;
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("time_grid.points", "too many points for the range"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            path: default_out(),
            format: OutputFormat::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub frame: FrameParams,
    pub channel: ChannelConfig,
    pub latency: LatencyRates,
    pub schemes: Vec<SchemeSpec>,
    pub time_grid: TimeGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub bounds: BoundOptions,
}

impl ExperimentConfig {
    /// Parses and validates a TOML document; `origin` labels errors.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::config(origin, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file. Relative `matrix_file` entries are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for spec in &mut config.schemes {
            if let Some(file) = &spec.matrix_file {
                if file.is_relative() {
                    spec.matrix_file = Some(base.join(file));
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.channel_params()?;
        LatencyRates::with_block_length(&self.latency, 1)?;
        self.time_grid.validate()?;
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "at least one scheme is required"));
        }
        for (i, spec) in self.schemes.iter().enumerate() {
            if spec.name.is_empty()
                || !spec
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(Error::config(
                    format!("schemes[{i}].name"),
                    "use letters, digits, '-' or '_'",
                ));
            }
            if spec.name == "comparison" {
                return Err(Error::config(format!("schemes[{i}].name"), "name is reserved"));
            }
            if self.schemes[..i].iter().any(|s| s.name == spec.name) {
                return Err(Error::config(
                    format!("schemes[{i}].name"),
                    format!("duplicate scheme name {:?}", spec.name),
                ));
            }
        }
        if let Some(mc) = &self.mc {
            mc.validate()?;
        }
        Ok(())
    }

    pub fn channel_params(&self) -> Result<ChannelParams> {
        ChannelParams::from_snr_db(self.channel.snr_db, self.frame.rate, self.frame.user_prime)
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        self.time_grid.values()
    }

    /// Builds and analyzes every scheme in config order.
    pub fn analyzed_schemes(&self) -> Result<Vec<AnalyzedScheme>> {
        let ch = self.channel_params()?;
        self.schemes
            .iter()
            .map(|spec| AnalyzedScheme::analyze(build(spec, &self.frame)?, &ch))
            .collect()
    }

    /// Identity codes `I`, `3I`, `5I` over `p' = 2, 5, 7` on eight servers at
    /// 18 dB.
    pub fn scaled_identity() -> Self {
        let prl = SchemeSpec::new(SchemeKind::Prl, Some(8));
        Self {
            frame: FrameParams { length: 504, rate: 0.5, user_prime: 2 },
            channel: ChannelConfig { snr_db: 18.0 },
            latency: LatencyRates { mu1: 50.0, mu2: 10.0, a: 1.0 },
            schemes: vec![prl.clone(), prl.clone().scaled(3, 5), prl.scaled(5, 7)],
            time_grid: TimeGrid { start: 1.0, stop: 1000.0, points: 200, spacing: Spacing::Log },
            mc: None,
            output: OutputConfig { path: PathBuf::from("out/scaled_identity"), format: OutputFormat::Csv },
            bounds: BoundOptions::default(),
        }
    }

    /// The five baseline schemes on eight servers at 7 dB.
    pub fn baselines() -> Self {
        let schemes = [
            (SchemeKind::Ss, None),
            (SchemeKind::Rpt, Some(8)),
            (SchemeKind::Prl, Some(8)),
            (SchemeKind::Spc, Some(8)),
            (SchemeKind::Nfv, None),
        ]
        .into_iter()
        .map(|(kind, n)| SchemeSpec::new(kind, n))
        .collect();
        Self {
            frame: FrameParams { length: 504, rate: 0.5, user_prime: 2 },
            channel: ChannelConfig { snr_db: 7.0 },
            latency: LatencyRates { mu1: 1.0 / 30.0, mu2: 10.0, a: 0.1 },
            schemes,
            time_grid: TimeGrid { start: 0.1, stop: 2000.0, points: 200, spacing: Spacing::Log },
            mc: None,
            output: OutputConfig { path: PathBuf::from("out/baselines"), format: OutputFormat::Csv },
            bounds: BoundOptions::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for config in [ExperimentConfig::scaled_identity(), ExperimentConfig::baselines()] {
            config.validate().unwrap();
            let text = config.to_toml().unwrap();
            let back = ExperimentConfig::from_toml_str(&text, "preset").unwrap();
            assert_eq!(back, config);
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn round_trip_with_mc_and_custom() {
        let mut config = ExperimentConfig::baselines();
        config.mc = Some(McConfig {
            trials: 100,
            seed: 4,
            noise_dim: Some(16),
            mode: crate::simulate::McMode::CorrelatedGaussianSurrogate,
        });
        let mut custom = SchemeSpec::new(SchemeKind::Custom, None);
        custom.name = "mine".into();
        custom.matrix = Some(vec![vec![1, 0, 1], vec![0, 1, 1]]);
        config.schemes.push(custom);
        let back = ExperimentConfig::from_toml_str(&config.to_toml().unwrap(), "x").unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn grid_values() {
        let g = TimeGrid { start: 1.0, stop: 1000.0, points: 4, spacing: Spacing::Log };
        let v = g.values().unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[3], 1000.0);
        assert!((v[1] - 10.0).abs() < 1e-12 && (v[2] - 100.0).abs() < 1e-10);
        let lin = TimeGrid { spacing: Spacing::Linear, ..g }.values().unwrap();
        assert_eq!(lin, vec![1.0, 334.0, 667.0, 1000.0]);
    }

    #[test]
    fn spacing_defaults_to_log() {
        let text = ExperimentConfig::baselines().to_toml().unwrap().replace("spacing = \"log\"\n", "");
        let c = ExperimentConfig::from_toml_str(&text, "x").unwrap();
        assert_eq!(c.time_grid.spacing, Spacing::Log);
    }

    fn field_error(config: &ExperimentConfig) -> String {
        match config.validate() {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn validation_names_fields() {
        let mut c = ExperimentConfig::baselines();
        c.schemes.clear();
        assert_eq!(field_error(&c), "schemes");

        let mut c = ExperimentConfig::baselines();
        c.time_grid.points = 1;
        assert_eq!(field_error(&c), "time_grid.points");

        let mut c = ExperimentConfig::baselines();
        c.time_grid.stop = c.time_grid.start;
        assert_eq!(field_error(&c), "time_grid.start");

        let mut c = ExperimentConfig::baselines();
        c.channel.snr_db = f64::NAN;
        assert_eq!(field_error(&c), "channel.snr_db");

        let mut c = ExperimentConfig::baselines();
        c.latency.mu2 = 0.0;
        assert_eq!(field_error(&c), "latency.mu2");

        let mut c = ExperimentConfig::scaled_identity();
        c.schemes[1].name = "prl".into();
        assert_eq!(field_error(&c), "schemes[1].name");

        let mut c = ExperimentConfig::scaled_identity();
        c.mc = Some(McConfig { trials: 0, seed: 0, noise_dim: None, mode: Default::default() });
        assert_eq!(field_error(&c), "mc.trials");
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = ExperimentConfig::baselines().to_toml().unwrap().replace("[channel]\n", "[channel]\nsnr = 3\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&text, "x"), Err(Error::Config { .. })));
    }
}
