//! The run configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{toy_spec, ConflictMode, DatasetBundle, ExternalGlyphs, GlyphSource, generate_with, GLYPH_CLASSES};
use crate::distill::{DistillConfig, Method};
use crate::embed::SupConConfig;
use crate::error::{Error, Result};
use crate::eval::{BenchSpec, EvalConfig, PipelineConfig};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub preset: String,
    pub conflict_ratio: f64,
    pub conflict_mode: ConflictMode,
    /// Directory of `<class>/*.png` glyph images used instead of the
    /// procedural glyphs.
    pub glyph_dir: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            preset: "color-shapes-16".into(),
            conflict_ratio: 0.05,
            conflict_mode: ConflictMode::OtherClass,
            glyph_dir: None,
        }
    }
}

impl DatasetConfig {
    pub fn bundle(&self, preset: &str, conflict_ratio: f64, seed: u64) -> Result<DatasetBundle> {
        let mut spec = toy_spec(preset, conflict_ratio, seed)?;
        spec.conflict_mode = self.conflict_mode;
        let glyphs = match &self.glyph_dir {
            Some(dir) => GlyphSource::External(ExternalGlyphs::load(dir, GLYPH_CLASSES.min(spec.classes), spec.resolution)?),
            None => GlyphSource::Procedural,
        };
        generate_with(&spec, &glyphs)
    }
}

/// Every setting of a run. Unknown keys are rejected and every key has a
/// default, so an empty file is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds dataset generation, encoder training and distillation.
    pub seed: u64,
    pub output: PathBuf,
    pub method: Method,
    pub dataset: DatasetConfig,
    pub embed: SupConConfig,
    pub distill: DistillConfig,
    pub eval: EvalConfig,
    pub bench: BenchSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: PathBuf::from("runs/default"),
            method: Method::Dm,
            dataset: DatasetConfig::default(),
            embed: SupConConfig::default(),
            distill: DistillConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
        cfg.apply_seed();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// Copies the run-level seed into the sections that consume it.
    pub fn apply_seed(&mut self) {
        self.embed.seed = self.seed;
        self.distill.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dataset.conflict_ratio > 0.0 && self.dataset.conflict_ratio < 1.0) {
            return Err(Error::ConflictRatio(self.dataset.conflict_ratio));
        }
        self.embed.validate()?;
        self.distill.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Writes the resolved config into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(RESOLVED_CONFIG), self.to_toml())?;
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            distill: self.distill.clone(),
            kde: self.distill.kde.clone().unwrap_or_default(),
            embed: self.embed.clone(),
            eval: self.eval.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = RunConfig::parse("", Path::new("x")).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("[distill]\nipcs = 3\n", Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("ipcs"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig::parse("seed = 7\n[distill.kde]\nsigma2 = 0.2\n", Path::new("x")).unwrap();
        assert_eq!(cfg.distill.seed, 7);
        assert_eq!(cfg.distill.kde.as_ref().unwrap().temperature, 0.1);
        cfg.distill.iterations = 3;
        let back = RunConfig::parse(&cfg.to_toml(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn committed_example_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
        let cfg = RunConfig::load(&path).unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn ratio_is_validated() {
        let cfg = RunConfig::parse("[dataset]\nconflict_ratio = 1.5\n", Path::new("x")).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::ConflictRatio(_))));
    }
}
