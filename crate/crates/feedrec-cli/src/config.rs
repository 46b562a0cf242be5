//! Run configuration: one TOML file with `[generator]` and `[training]`
//! sections. Unknown keys are rejected; the fully resolved config is echoed
//! into every output directory so a run can be reproduced from its outputs
//! alone.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use feedrec_core::synthgen::GeneratorConfig;
use feedrec_core::trainer::TrainConfig;

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub training: TrainConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.generator.validate()?;
        cfg.training.validate()?;
        Ok(cfg)
    }

    /// Write the fully resolved configuration into an output directory.
    pub fn echo_into(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        let text = toml::to_string_pretty(self).context("serializing resolved config")?;
        std::fs::write(out_dir.join("config.resolved.toml"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_no_file() {
        let cfg = RunConfig::load(None).unwrap();
        assert_eq!(cfg.training.batch_size, 32);
        assert_eq!(cfg.generator.n_users, 1000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[training]\nlearning_rate = 0.1\nnot_a_key = 3\n").unwrap();
        assert!(RunConfig::load(Some(&path)).is_err());
        let path2 = dir.path().join("bad2.toml");
        std::fs::write(&path2, "[nonsense]\nx = 1\n").unwrap();
        assert!(RunConfig::load(Some(&path2)).is_err());
    }

    #[test]
    fn roundtrips_through_echo() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.training.learning_rate = 0.0025;
        cfg.generator.n_users = 77;
        cfg.echo_into(dir.path()).unwrap();
        let loaded = RunConfig::load(Some(&dir.path().join("config.resolved.toml"))).unwrap();
        assert_eq!(loaded, cfg);
    }
}
