//! The run configuration file. Relative paths resolve against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use outfitgen_core::exemplar::SelectorText;
use outfitgen_core::pipeline::{GenerationParams, StrategyParams};
use outfitgen_core::prompt::PromptStrategy;
use outfitgen_core::rag::ChunkingConfig;
use outfitgen_core::{BackendProfile, Capability, Experiment};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub pdf: Option<PathBuf>,
    pub blog: Option<PathBuf>,
}

/// One survey stimulus: a single record for the rating experiments, or the
/// five records of one triplet for the ranking experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusSpec {
    pub id: String,
    pub style: String,
    pub occasion: String,
    #[serde(rename = "type")]
    pub wearer_type: String,
    #[serde(default)]
    pub strategy: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyConfig {
    #[serde(default)]
    pub responses: Option<PathBuf>,
    #[serde(default)]
    pub admin_token: Option<String>,
    #[serde(default)]
    pub stimuli: BTreeMap<Experiment, Vec<StimulusSpec>>,
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub vocabulary: PathBuf,
    #[serde(default)]
    pub exemplars: Option<PathBuf>,
    #[serde(default)]
    pub cot_exemplars: Option<PathBuf>,
    #[serde(default)]
    pub selector_text: SelectorText,
    #[serde(default)]
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    pub profiles: Vec<BackendProfile>,
    pub strategy: StrategyParams,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub templates: BTreeMap<PromptStrategy, PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub survey: SurveyConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.vocabulary);
        for p in [&mut self.exemplars, &mut self.cot_exemplars, &mut self.corpus.pdf, &mut self.corpus.blog]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        for p in self.templates.values_mut() {
            resolve(base, p);
        }
        resolve(base, &mut self.output_dir);
        if let Some(p) = &mut self.survey.responses {
            resolve(base, p);
        }
    }

    /// Input paths exist and every profile named by the strategy is declared
    /// with the right capability.
    pub fn validate(&self) -> Result<()> {
        let mut inputs = vec![("vocabulary", &self.vocabulary)];
        let optional = [
            ("exemplars", &self.exemplars),
            ("cot_exemplars", &self.cot_exemplars),
            ("corpus.pdf", &self.corpus.pdf),
            ("corpus.blog", &self.corpus.blog),
        ];
        inputs.extend(optional.iter().filter_map(|(n, p)| p.as_ref().map(|p| (*n, p))));
        for (name, path) in inputs {
            if !path.exists() {
                bail!("{name}: {} does not exist", path.display());
            }
        }
        for (strategy, path) in &self.templates {
            if !path.exists() {
                bail!("templates.{strategy}: {} does not exist", path.display());
            }
        }
        let s = &self.strategy;
        let wanted = [
            (Some(&s.text_profile), Capability::Text),
            (Some(&s.embed_profile), Capability::Embed),
            (Some(&s.image_profile), Capability::Image),
            (s.clip_profile.as_ref(), Capability::Embed),
        ];
        for (name, cap) in wanted {
            let Some(name) = name else { continue };
            match self.profiles.iter().find(|p| &p.name == name) {
                None => bail!("profile \"{name}\" is not declared"),
                Some(p) if p.capability != cap => {
                    bail!("profile \"{name}\" has capability {}, expected {cap}", p.capability)
                }
                Some(_) => {}
            }
        }
        if self.parallelism == 0 {
            bail!("parallelism must be at least 1");
        }
        Ok(())
    }

    pub fn records_path(&self) -> PathBuf {
        self.output_dir.join("records.jsonl")
    }

    pub fn failures_path(&self) -> PathBuf {
        self.output_dir.join("failures.jsonl")
    }

    pub fn images_dir(&self) -> PathBuf {
        self.output_dir.join("images")
    }

    pub fn chunks_path(&self, kind: &str) -> PathBuf {
        self.output_dir.join("chunks").join(format!("{kind}.jsonl"))
    }

    pub fn responses_path(&self) -> PathBuf {
        self.survey
            .responses
            .clone()
            .unwrap_or_else(|| self.output_dir.join("responses.jsonl"))
    }
}
