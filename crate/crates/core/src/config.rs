//! Pipeline configuration.
//!
//! One TOML document describes a run. Relative paths are resolved against
//! the directory holding the config file. Credentials are never stored in the
//! file; `backend.credential_env` names the variable that holds them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::annotator::{BackendPolicy, RemoteConfig};
use crate::caption::{CaptionSettings, ScheduleParams};
use crate::dataset::InstructionTemplates;
use crate::error::{Error, Result};
use crate::media::{DecoderCommand, SamplingSpec, Source};
use crate::qa::McSettings;
use crate::scene::{shorts_chain, standard_chain, CutParams, FilterRule};

pub const DEFAULT_DECODER: &str =
    "ffmpeg -nostdin -loglevel error -i {input} -vf fps={fps} {outdir}/frame_%06d.png";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub fps: f64,
    /// Decoder argv template with `{input}`, `{outdir}` and `{fps}` slots.
    pub decoder: String,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            fps: 1.0,
            decoder: DEFAULT_DECODER.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Chain used for sources without an entry in `per_source`.
    pub default_chain: String,
    /// Source name to chain name.
    pub per_source: BTreeMap<String, String>,
    /// Extra or overriding named chains. `standard` and `shorts` are built in.
    pub chains: BTreeMap<String, Vec<FilterRule>>,
    pub threshold: f64,
    pub min_scene_len: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let cut = CutParams::default();
        FilterConfig {
            default_chain: "standard".into(),
            per_source: BTreeMap::from([(Source::Vidal.name().to_string(), "shorts".to_string())]),
            chains: BTreeMap::new(),
            threshold: cut.threshold,
            min_scene_len: cut.min_scene_len,
        }
    }
}

impl FilterConfig {
    pub fn cut_params(&self) -> CutParams {
        CutParams {
            threshold: self.threshold,
            min_scene_len: self.min_scene_len,
        }
    }

    pub fn chain(&self, name: &str) -> Option<Vec<FilterRule>> {
        if let Some(c) = self.chains.get(name) {
            return Some(c.clone());
        }
        match name {
            "standard" => Some(standard_chain()),
            "shorts" => Some(shorts_chain()),
            _ => None,
        }
    }

    pub fn chain_name_for(&self, source: Source) -> &str {
        self.per_source
            .iter()
            .find(|(k, _)| k.parse::<Source>().ok() == Some(source))
            .map_or(self.default_chain.as_str(), |(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionConfig {
    pub clip_len: f64,
    pub summary_period: usize,
    pub min_tail: f64,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Directory with replacement prompt templates.
    pub prompts_dir: Option<PathBuf>,
}

impl Default for CaptionConfig {
    fn default() -> Self {
        let s = CaptionSettings::default();
        CaptionConfig {
            clip_len: s.schedule.clip_len,
            summary_period: s.schedule.summary_period,
            min_tail: s.schedule.min_tail,
            max_tokens: s.max_tokens,
            temperature: s.temperature,
            prompts_dir: None,
        }
    }
}

impl CaptionConfig {
    pub fn settings(&self) -> CaptionSettings {
        CaptionSettings {
            schedule: ScheduleParams {
                clip_len: self.clip_len,
                summary_period: self.summary_period,
                min_tail: self.min_tail,
            },
            max_tokens: self.max_tokens,
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    BagOfWords,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaConfig {
    /// Question types to request; empty means all.
    pub types: Vec<String>,
    pub dedup_threshold: f64,
    pub embedder: EmbedderKind,
    pub embed_endpoint: Option<String>,
    pub embed_model: Option<String>,
    /// Open-ended pairs per video also turned into multiple-choice.
    pub mc_per_video: usize,
    pub mc_options: usize,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Extra attempts when a response holds no parseable list.
    pub parse_retries: usize,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig {
            types: Vec::new(),
            dedup_threshold: 0.95,
            embedder: EmbedderKind::BagOfWords,
            embed_endpoint: None,
            embed_model: None,
            mc_per_video: 1,
            mc_options: 5,
            max_tokens: 2048,
            temperature: 0.7,
            parse_retries: 2,
        }
    }
}

impl QaConfig {
    pub fn mc_settings(&self, seed: u64) -> McSettings {
        McSettings {
            n_options: self.mc_options,
            seed,
            max_tokens: 512,
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Environment variable holding the API key.
    pub credential_env: String,
    pub timeout_secs: f64,
    pub policy: BackendPolicy,
    /// Log every request and response to `<output>/audit.jsonl`.
    pub audit: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model: None,
            credential_env: "VIDFORGE_API_KEY".into(),
            timeout_secs: 120.0,
            policy: BackendPolicy::default(),
            audit: true,
        }
    }
}

impl BackendConfig {
    pub fn remote_config(&self) -> Result<RemoteConfig> {
        let endpoint = self
            .endpoint
            .clone()
            .ok_or_else(|| Error::config("backend.endpoint", "required for the remote backend"))?;
        let model = self
            .model
            .clone()
            .ok_or_else(|| Error::config("backend.model", "required for the remote backend"))?;
        Ok(RemoteConfig {
            endpoint,
            model,
            api_key: std::env::var(&self.credential_env).ok(),
            policy: self.policy.clone(),
            timeout: Duration::from_secs_f64(self.timeout_secs),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub sampling: SamplingConfig,
    pub filter: FilterConfig,
    pub caption: CaptionConfig,
    pub qa: QaConfig,
    pub backend: BackendConfig,
    pub instructions: InstructionTemplates,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifest: PathBuf::from("manifest.jsonl"),
            output_dir: PathBuf::from("out"),
            seed: 0,
            workers: 4,
            sampling: SamplingConfig::default(),
            filter: FilterConfig::default(),
            caption: CaptionConfig::default(),
            qa: QaConfig::default(),
            backend: BackendConfig::default(),
            instructions: InstructionTemplates::default(),
        }
    }
}

fn toml_field(err: &toml::de::Error) -> String {
    // the message names the offending key; keep the first line
    err.message().lines().next().unwrap_or("").to_string()
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "document".into());
            Error::config(at, toml_field(&e))
        })
    }

    /// Parse, resolve relative paths against the file's directory, validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.output_dir);
        if let Some(d) = self.caption.prompts_dir.as_mut() {
            fix(d);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn sampling_spec(&self) -> Result<SamplingSpec> {
        SamplingSpec::new(self.sampling.fps)
            .map_err(|_| Error::config("sampling.fps", format!("must be > 0, got {}", self.sampling.fps)))
    }

    pub fn decoder(&self) -> Result<DecoderCommand> {
        DecoderCommand::parse(&self.sampling.decoder).map_err(|e| match e {
            Error::Config { message, .. } => Error::config("sampling.decoder", message),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        fn c(field: impl Into<String>, message: impl Into<String>) -> Error {
            Error::config(field, message)
        }
        if self.workers == 0 {
            return Err(c("workers", "must be >= 1"));
        }
        if !(self.sampling.fps > 0.0) || !self.sampling.fps.is_finite() {
            return Err(c("sampling.fps", format!("must be > 0, got {}", self.sampling.fps)));
        }
        self.decoder()?;

        let f = &self.filter;
        if !(f.threshold > 0.0) {
            return Err(c("filter.threshold", "must be > 0"));
        }
        if f.min_scene_len == 0 {
            return Err(c("filter.min_scene_len", "must be >= 1"));
        }
        if f.chain(&f.default_chain).is_none() {
            return Err(c("filter.default_chain", format!("unknown chain `{}`", f.default_chain)));
        }
        for (src, chain) in &f.per_source {
            src.parse::<Source>()
                .map_err(|_| c(format!("filter.per_source.{src}"), "unknown source"))?;
            if f.chain(chain).is_none() {
                return Err(c(format!("filter.per_source.{src}"), format!("unknown chain `{chain}`")));
            }
        }
        for (name, rules) in &f.chains {
            for (i, r) in rules.iter().enumerate() {
                r.validate()
                    .map_err(|e| c(format!("filter.chains.{name}[{i}]"), e.to_string()))?;
            }
        }

        self.caption.settings().schedule.validate()?;
        if self.caption.max_tokens == 0 {
            return Err(c("caption.max_tokens", "must be >= 1"));
        }
        if !(0.0..=2.0).contains(&self.caption.temperature) {
            return Err(c("caption.temperature", "must be in [0, 2]"));
        }

        let q = &self.qa;
        if !(q.dedup_threshold > 0.0 && q.dedup_threshold <= 1.0) {
            return Err(c("qa.dedup_threshold", format!("must be in (0, 1], got {}", q.dedup_threshold)));
        }
        if q.mc_options < 2 {
            return Err(c("qa.mc_options", "must be >= 2"));
        }
        if q.max_tokens == 0 {
            return Err(c("qa.max_tokens", "must be >= 1"));
        }
        if !(0.0..=2.0).contains(&q.temperature) {
            return Err(c("qa.temperature", "must be in [0, 2]"));
        }
        if q.embedder == EmbedderKind::Remote && q.embed_endpoint.is_none() {
            return Err(c("qa.embed_endpoint", "required for the remote embedder"));
        }
        let registry = crate::qa::QuestionRegistry::builtin();
        let all = registry.all();
        for t in &q.types {
            if crate::qa::resolve_dimension(t, &all).is_none() {
                return Err(c("qa.types", format!("unknown question type `{t}`")));
            }
        }

        let b = &self.backend;
        b.policy.validate()?;
        if !(b.timeout_secs > 0.0) {
            return Err(c("backend.timeout_secs", "must be > 0"));
        }
        if b.kind == BackendKind::Remote {
            b.remote_config()?;
        }
        self.instructions.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_fps_names_field() {
        let cfg = PipelineConfig::from_toml("[sampling]\nfps = 0\n").unwrap();
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sampling.fps"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = PipelineConfig::from_toml("[sampling]\nfsp = 1\n").unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("fsp"), "{e}");
    }

    #[test]
    fn chains_by_source() {
        let cfg = PipelineConfig::from_toml(
            r#"
            [filter.per_source]
            Charades = "strict"
            [filter.chains]
            strict = [{ kind = "min_scenes", min = 4 }]
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.filter.chain_name_for(Source::Charades), "strict");
        assert_eq!(cfg.filter.chain_name_for(Source::Ego4D), "standard");
        assert_eq!(cfg.filter.chain("strict").unwrap(), vec![FilterRule::MinScenes { min: 4 }]);
    }

    #[test]
    fn remote_needs_endpoint() {
        let cfg = PipelineConfig::from_toml("[backend]\nkind = \"remote\"\n").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "backend.endpoint"));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
