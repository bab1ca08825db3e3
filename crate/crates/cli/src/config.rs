use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taxoutlier::formats::{DatasetLimits, DEFAULT_DISAMBIGUATION_CLASS};
use taxoutlier::graph::{PruneParams, DEFAULT_PRUNE_DEPTH, DEFAULT_ROOT};
use taxoutlier::{EntityId, GeneratorConfig, LanguageProfile, LookupPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpFormat {
    /// One `EntityRecord` object per line.
    #[default]
    Simple,
    /// Decompressed Wikidata JSON dump.
    Wikidata,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dump: Option<PathBuf>,
    pub dump_format: DumpFormat,
    pub anchors: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub embeddings: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    /// Empty string disables the near-root rule.
    pub root: String,
    pub depth: u32,
    pub stop_classes: Vec<String>,
    pub disambiguation_class: String,
}

impl Default for PruneSection {
    fn default() -> Self {
        Self {
            root: DEFAULT_ROOT.into(),
            depth: DEFAULT_PRUNE_DEPTH,
            stop_classes: Vec::new(),
            disambiguation_class: DEFAULT_DISAMBIGUATION_CLASS.into(),
        }
    }
}

impl PruneSection {
    pub fn params(&self) -> PruneParams {
        PruneParams {
            root: (!self.root.is_empty()).then(|| EntityId::new(self.root.clone())),
            depth: self.depth,
            stop_classes: self.stop_classes.iter().cloned().map(EntityId::new).collect(),
        }
    }
}

/// Everything a run depends on. The digest of this value (after flag
/// overrides, without paths) goes into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub language: String,
    pub paths: Paths,
    pub generator: GeneratorConfig,
    pub prune: PruneSection,
    /// Filter settings; the built-in profile for `language` when absent.
    pub profile: Option<LanguageProfile>,
    /// Lookup settings; the language default when absent.
    pub evaluate: Option<LookupPolicy>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            language: "en".into(),
            paths: Paths::default(),
            generator: GeneratorConfig::default(),
            prune: PruneSection::default(),
            profile: None,
            evaluate: None,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub language: Option<String>,
    pub mu: Option<u32>,
    pub output: Option<PathBuf>,
}

impl PipelineConfig {
    /// Parse a TOML file. Relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut cfg.paths;
        paths.dump.as_mut().map(fix);
        paths.anchors.as_mut().map(fix);
        paths.output.as_mut().map(fix);
        paths.embeddings.iter_mut().for_each(fix);
        Ok(cfg)
    }

    /// Apply flag overrides and propagate seed and language into the
    /// generator section.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(l) = &o.language {
            self.language = l.clone();
        }
        if let Some(mu) = o.mu {
            self.generator.mu = mu;
        }
        if let Some(out) = &o.output {
            self.paths.output = Some(out.clone());
        }
        self.generator.rng_seed = self.seed;
        self.generator.language = self.language.clone();
        if let Some(p) = &mut self.profile {
            p.language = self.language.clone();
        }
        if self.language.is_empty() {
            bail!("language must not be empty");
        }
        Ok(self)
    }

    pub fn profile(&self) -> LanguageProfile {
        self.profile
            .clone()
            .unwrap_or_else(|| LanguageProfile::for_language(&self.language))
    }

    pub fn lookup(&self) -> LookupPolicy {
        self.evaluate
            .unwrap_or_else(|| LookupPolicy::for_language(&self.language))
    }

    pub fn limits(&self) -> DatasetLimits {
        let g = &self.generator;
        DatasetLimits {
            min_cluster: g.min_cluster_size,
            max_cluster: g.cluster_size,
            max_outliers: 3 * g.per_tier_outliers,
            per_tier: g.per_tier_outliers,
        }
    }

    /// SHA-256 over the canonical JSON of every setting except paths.
    pub fn digest(&self) -> String {
        let mut settings = self.clone();
        settings.paths = Paths::default();
        settings.profile = Some(self.profile());
        settings.evaluate = Some(self.lookup());
        let json = serde_json::to_vec(&settings).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_digest: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            tool: "taxoutlier",
            version: env!("CARGO_PKG_VERSION"),
            config_digest: cfg.digest(),
            seed: cfg.seed,
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# {} {} config={} seed={}",
            self.tool, self.version, self.config_digest, self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_propagate() {
        let cfg = PipelineConfig::default()
            .resolve(&Overrides {
                seed: Some(9),
                language: Some("ja".into()),
                mu: Some(5),
                output: None,
            })
            .unwrap();
        assert_eq!((cfg.generator.rng_seed, cfg.generator.mu), (9, 5));
        assert_eq!(cfg.generator.language, "ja");
        assert!(cfg.profile().cjk_mode);
    }

    #[test]
    fn digest_ignores_paths_but_not_settings() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.output = Some("x".into());
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn toml_sections_parse() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            seed = 3
            [paths]
            dump = "g.kg.jsonl"
            [generator]
            mu = 4
            [prune]
            root = ""
            stop_classes = ["Q5"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.generator.mu, 4);
        assert_eq!(cfg.generator.cluster_size, 8);
        assert!(cfg.prune.params().root.is_none());
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());
    }
}
