//! End-to-end orchestration: filter, caption, qa, assemble, stats.
//!
//! Every stage reads the previous stage's files from the output directory,
//! so stages can run one at a time or all together. Per-video outputs are
//! skipped when already complete, which makes an interrupted run resumable.
//!
//! ```text
//! out/
//!   filter/scenes.jsonl           scene analyses
//!   filter/verdicts.jsonl         one verdict per manifest asset
//!   filter/manifest_rejections.jsonl
//!   captions/<asset>.jsonl        appended one caption at a time
//!   qa/<asset>.jsonl              written once the video's pairs are final
//!   qa/<asset>.report.json
//!   qa/report.json
//!   dataset.jsonl
//!   stats.json, stats.txt
//!   audit.jsonl
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotator::{
    AnnotationBackend, AnnotationRequest, AuditLog, Audited, MockBackend, RemoteBackend, RequestKind,
};
use crate::caption::{Caption, CaptionPrompts, Captioner, Level};
use crate::config::{BackendKind, EmbedderKind, PipelineConfig};
use crate::dataset::{assemble, CorpusStats, InstructionRecord, StatsAccumulator};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::media::{extract_frames, load_manifest, FrameSequence, VideoAsset};
use crate::qa::{
    assemble_qa_prompt, filter_pairs, generate_mc, parse_qa_response, resolve_dimension,
    BagOfWordsEmbedder, Embedder, FilterReport, McOutcome, McSkip, QaPair, QaTemplates,
    QuestionRegistry, QuestionType, RemoteEmbedder,
};
use crate::scene::{apply_filters, detect_cuts, Candidate, FilterVerdict, SceneAnalysis};

#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub root: PathBuf,
}

impl OutputPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputPaths { root: root.into() }
    }
    pub fn scenes(&self) -> PathBuf {
        self.root.join("filter/scenes.jsonl")
    }
    pub fn verdicts(&self) -> PathBuf {
        self.root.join("filter/verdicts.jsonl")
    }
    pub fn manifest_rejections(&self) -> PathBuf {
        self.root.join("filter/manifest_rejections.jsonl")
    }
    pub fn captions(&self, asset_id: &str) -> PathBuf {
        self.root.join("captions").join(format!("{}.jsonl", file_stem(asset_id)))
    }
    pub fn qa_pairs(&self, asset_id: &str) -> PathBuf {
        self.root.join("qa").join(format!("{}.jsonl", file_stem(asset_id)))
    }
    pub fn qa_asset_report(&self, asset_id: &str) -> PathBuf {
        self.root.join("qa").join(format!("{}.report.json", file_stem(asset_id)))
    }
    pub fn qa_report(&self) -> PathBuf {
        self.root.join("qa/report.json")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }
    pub fn stats_json(&self) -> PathBuf {
        self.root.join("stats.json")
    }
    pub fn stats_txt(&self) -> PathBuf {
        self.root.join("stats.txt")
    }
    pub fn audit(&self) -> PathBuf {
        self.root.join("audit.jsonl")
    }
}

/// Asset ids are used verbatim as file names when they are plain; anything
/// else is replaced by a hash.
pub fn file_stem(asset_id: &str) -> String {
    let plain = !asset_id.is_empty()
        && !asset_id.starts_with('.')
        && asset_id.len() <= 128
        && asset_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if plain {
        asset_id.to_string()
    } else {
        format!("id-{}", &hex::encode(Sha256::digest(asset_id.as_bytes()))[..24])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub assets: usize,
    pub manifest_rejections: usize,
    pub analyzed: usize,
    pub reused_analyses: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptionSummary {
    pub videos: usize,
    pub already_complete: usize,
    pub new_captions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QaAssetReport {
    pub asset_id: String,
    pub parsed: usize,
    pub parse_failed: bool,
    pub parse_skipped: Vec<String>,
    pub filter: FilterReport,
    pub open_ended: usize,
    pub multi_choice: usize,
    pub mc_skipped: Vec<McSkip>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub videos: usize,
    pub parsed: usize,
    pub parse_failures: Vec<String>,
    pub open_ended: usize,
    pub multi_choice: usize,
    pub dropped_duplicate: usize,
    pub dropped_blacklist: usize,
    pub mc_skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssembleSummary {
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub filter: FilterSummary,
    pub caption: CaptionSummary,
    pub qa: QaReport,
    pub assemble: AssembleSummary,
    pub stats: CorpusStats,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    paths: OutputPaths,
    backend: Arc<dyn AnnotationBackend>,
    embedder: Arc<dyn Embedder>,
    caption_prompts: CaptionPrompts,
    qa_templates: QaTemplates,
    registry: QuestionRegistry,
    pool: rayon::ThreadPool,
    frames: Mutex<HashMap<String, Arc<FrameSequence>>>,
}

fn build_backend(cfg: &PipelineConfig) -> Result<Arc<dyn AnnotationBackend>> {
    Ok(match cfg.backend.kind {
        BackendKind::Mock => Arc::new(MockBackend::new(cfg.seed)),
        BackendKind::Remote => Arc::new(RemoteBackend::new(cfg.backend.remote_config()?)?),
    })
}

fn build_embedder(cfg: &PipelineConfig) -> Result<Arc<dyn Embedder>> {
    Ok(match cfg.qa.embedder {
        EmbedderKind::BagOfWords => Arc::new(BagOfWordsEmbedder),
        EmbedderKind::Remote => Arc::new(RemoteEmbedder::new(
            cfg.qa.embed_endpoint.clone().unwrap_or_default(),
            cfg.qa.embed_model.clone().unwrap_or_default(),
            std::env::var(&cfg.backend.credential_env).ok(),
        )?),
    })
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let backend = build_backend(&cfg)?;
        Pipeline::with_backend(cfg, backend)
    }

    /// Use `backend` instead of the one named in the config.
    pub fn with_backend(cfg: PipelineConfig, backend: Arc<dyn AnnotationBackend>) -> Result<Self> {
        cfg.validate()?;
        let paths = OutputPaths::new(&cfg.output_dir);
        std::fs::create_dir_all(&paths.root).map_err(|e| Error::io(&paths.root, e))?;
        let backend: Arc<dyn AnnotationBackend> = if cfg.backend.audit {
            Arc::new(Audited::new(backend, Arc::new(AuditLog::open(&paths.audit())?)))
        } else {
            backend
        };
        let caption_prompts = match &cfg.caption.prompts_dir {
            Some(dir) => CaptionPrompts::load_dir(dir)?,
            None => CaptionPrompts::default(),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?;
        Ok(Pipeline {
            embedder: build_embedder(&cfg)?,
            paths,
            backend,
            caption_prompts,
            qa_templates: QaTemplates::default(),
            registry: QuestionRegistry::builtin(),
            pool,
            frames: Mutex::new(HashMap::new()),
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn paths(&self) -> &OutputPaths {
        &self.paths
    }

    fn assets(&self) -> Result<(Vec<VideoAsset>, usize)> {
        let manifest = load_manifest(&self.cfg.manifest)?;
        let mut seen = HashSet::new();
        for a in &manifest.assets {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate asset id {} in manifest", a.id)));
            }
        }
        jsonl::write_atomic(&self.paths.manifest_rejections(), &manifest.rejections)?;
        for r in &manifest.rejections {
            log::warn!("manifest line {} ({}) rejected: {}", r.line, r.id, r.reason);
        }
        Ok((manifest.assets, manifest.rejections.len()))
    }

    /// Relative local URIs are taken relative to the manifest.
    fn resolve_uri(&self, asset: &VideoAsset) -> VideoAsset {
        let mut a = asset.clone();
        if !a.uri.contains("://") && Path::new(&a.uri).is_relative() {
            if let Some(dir) = self.cfg.manifest.parent() {
                let candidate = dir.join(&a.uri);
                if candidate.exists() {
                    a.uri = candidate.to_string_lossy().into_owned();
                }
            }
        }
        a
    }

    fn frames_for(&self, asset: &VideoAsset) -> Result<Arc<FrameSequence>> {
        if let Some(f) = self.frames.lock().unwrap().get(&asset.id) {
            return Ok(f.clone());
        }
        let seq = Arc::new(extract_frames(
            &self.resolve_uri(asset),
            &self.cfg.sampling_spec()?,
            &self.cfg.decoder()?,
        )?);
        self.frames
            .lock()
            .unwrap()
            .insert(asset.id.clone(), seq.clone());
        Ok(seq)
    }

    fn release_frames(&self, asset_id: &str) {
        self.frames.lock().unwrap().remove(asset_id);
    }

    pub fn run_filter(&self) -> Result<FilterSummary> {
        let (assets, manifest_rejections) = self.assets()?;
        let scenes_path = self.paths.scenes();
        let previous: HashMap<String, SceneAnalysis> = jsonl::read_all_or_empty(&scenes_path)?
            .into_iter()
            .map(|a: SceneAnalysis| (a.asset_id.clone(), a))
            .collect();

        let chain_names: Vec<&str> = assets
            .iter()
            .map(|a| self.cfg.filter.chain_name_for(a.source))
            .collect();
        let chains: BTreeMap<&str, _> = chain_names
            .iter()
            .map(|n| (*n, self.cfg.filter.chain(n).expect("validated chain name")))
            .collect();

        let cut = self.cfg.filter.cut_params();
        let results: Vec<Result<Option<(SceneAnalysis, bool)>>> = self.pool.install(|| {
            assets
                .par_iter()
                .zip(&chain_names)
                .map(|(a, name)| {
                    if !chains[name].iter().any(|r| r.needs_analysis()) {
                        return Ok(None);
                    }
                    if let Some(prev) = previous.get(&a.id) {
                        return Ok(Some((prev.clone(), true)));
                    }
                    let seq = self.frames_for(a)?;
                    Ok(Some((detect_cuts(&seq, &cut)?, false)))
                })
                .collect()
        });

        let mut analyses: Vec<Option<SceneAnalysis>> = Vec::with_capacity(assets.len());
        let mut failures = Vec::new();
        let (mut analyzed, mut reused) = (0, 0);
        for (a, r) in assets.iter().zip(results) {
            match r {
                Ok(Some((an, was_reused))) => {
                    if was_reused {
                        reused += 1;
                    } else {
                        analyzed += 1;
                    }
                    analyses.push(Some(an));
                }
                Ok(None) => analyses.push(None),
                Err(e) => {
                    failures.push(format!("{}: {e}", a.id));
                    analyses.push(None);
                }
            }
        }
        let persisted: Vec<&SceneAnalysis> = analyses.iter().flatten().collect();
        jsonl::write_atomic(&scenes_path, &persisted)?;
        if !failures.is_empty() {
            return Err(Error::StageFailed {
                stage: "filter".into(),
                failures,
            });
        }

        let mut verdicts: Vec<Option<FilterVerdict>> = vec![None; assets.len()];
        for (name, chain) in &chains {
            let idx: Vec<usize> = (0..assets.len()).filter(|&i| chain_names[i] == *name).collect();
            let candidates: Vec<Candidate> = idx
                .iter()
                .map(|&i| Candidate {
                    asset: &assets[i],
                    analysis: analyses[i].as_ref(),
                })
                .collect();
            for (i, v) in idx.iter().zip(apply_filters(&candidates, chain)?) {
                verdicts[*i] = Some(v);
            }
        }
        let verdicts: Vec<FilterVerdict> = verdicts.into_iter().map(|v| v.expect("every asset has a chain")).collect();
        for v in verdicts.iter().filter(|v| !v.accepted) {
            self.release_frames(&v.asset_id);
        }
        jsonl::write_atomic(&self.paths.verdicts(), &verdicts)?;
        let accepted = verdicts.iter().filter(|v| v.accepted).count();
        Ok(FilterSummary {
            assets: assets.len(),
            manifest_rejections,
            analyzed,
            reused_analyses: reused,
            accepted,
            rejected: assets.len() - accepted,
        })
    }

    /// Accepted assets in manifest order.
    pub fn accepted_assets(&self) -> Result<Vec<VideoAsset>> {
        let path = self.paths.verdicts();
        if !path.exists() {
            return Err(Error::MissingStageOutput {
                stage: "filter".into(),
                path,
            });
        }
        let verdicts: Vec<FilterVerdict> = jsonl::read_all(&path)?;
        let ok: HashSet<&str> = verdicts
            .iter()
            .filter(|v| v.accepted)
            .map(|v| v.asset_id.as_str())
            .collect();
        let manifest = load_manifest(&self.cfg.manifest)?;
        Ok(manifest
            .assets
            .into_iter()
            .filter(|a| ok.contains(a.id.as_str()))
            .collect())
    }

    /// Persisted captions of one asset, ignoring an interrupted last line.
    pub fn load_captions(&self, asset_id: &str) -> Result<Vec<Caption>> {
        let path = self.paths.captions(asset_id);
        let mut caps: Vec<Caption> = jsonl::read_all_or_empty(&path)?;
        for c in &mut caps {
            c.asset_id = asset_id.to_string();
        }
        Ok(caps)
    }

    pub fn run_caption(&self) -> Result<CaptionSummary> {
        let assets = self.accepted_assets()?;
        let settings = self.cfg.caption.settings();
        let captioner = Captioner::new(&*self.backend, &self.caption_prompts, settings);
        let results: Vec<Result<(bool, usize)>> = self.pool.install(|| {
            assets
                .par_iter()
                .map(|a| -> Result<(bool, usize)> {
                    let path = self.paths.captions(&a.id);
                    jsonl::truncate_partial_tail(&path)?;
                    let existing = self.load_captions(&a.id)?;
                    if existing.iter().any(|c| c.level == Level::Video) {
                        self.release_frames(&a.id);
                        return Ok((true, 0));
                    }
                    let frames = self.frames_for(a)?;
                    let mut written = 0;
                    let out = captioner.run(&a.id, a.duration, &frames, &existing, &mut |c| {
                        written += 1;
                        jsonl::append(&path, c)
                    });
                    self.release_frames(&a.id);
                    out.map_err(|f| f.error)?;
                    Ok((false, written))
                })
                .collect()
        });
        let mut summary = CaptionSummary {
            videos: assets.len(),
            ..Default::default()
        };
        let mut failures = Vec::new();
        for (a, r) in assets.iter().zip(results) {
            match r {
                Ok((done, n)) => {
                    summary.already_complete += done as usize;
                    summary.new_captions += n;
                }
                Err(e) => failures.push(format!("{}: {e}", a.id)),
            }
        }
        if !failures.is_empty() {
            return Err(Error::StageFailed {
                stage: "caption".into(),
                failures,
            });
        }
        Ok(summary)
    }

    fn level3(&self, asset_id: &str) -> Result<Caption> {
        self.load_captions(asset_id)?
            .into_iter()
            .find(|c| c.level == Level::Video)
            .ok_or_else(|| Error::MissingStageOutput {
                stage: "caption".into(),
                path: self.paths.captions(asset_id),
            })
    }

    fn question_types(&self) -> Vec<&QuestionType> {
        let all = self.registry.all();
        if self.cfg.qa.types.is_empty() {
            return all;
        }
        let wanted: HashSet<&str> = self
            .cfg
            .qa
            .types
            .iter()
            .filter_map(|t| resolve_dimension(t, &all).map(|q| q.name.as_str()))
            .collect();
        all.into_iter().filter(|t| wanted.contains(t.name.as_str())).collect()
    }

    fn qa_for_asset(&self, asset: &VideoAsset, types: &[&QuestionType]) -> Result<QaAssetReport> {
        let l3 = self.level3(&asset.id)?;
        let prompt = assemble_qa_prompt(&l3.text, types, &self.qa_templates)?;
        let mut report = QaAssetReport {
            asset_id: asset.id.clone(),
            ..Default::default()
        };
        let mut parsed = None;
        for attempt in 0..=self.cfg.qa.parse_retries {
            let req = AnnotationRequest {
                system: prompt.system.clone(),
                user: prompt.user.clone(),
                images: Vec::new(),
                max_tokens: self.cfg.qa.max_tokens,
                temperature: self.cfg.qa.temperature,
                tag: format!("{}/qa#{}", asset.id, attempt + 1),
                kind: RequestKind::QaGeneration,
            };
            let raw = self.backend.complete(&req)?;
            let p = parse_qa_response(&asset.id, &raw, types);
            if p.diagnostic.is_none() {
                parsed = Some(p);
                break;
            }
            log::warn!("{}: unparseable QA response (attempt {})", asset.id, attempt + 1);
        }
        let Some(parsed) = parsed else {
            report.parse_failed = true;
            jsonl::write_bytes_atomic(
                &self.paths.qa_asset_report(&asset.id),
                &serde_json::to_vec_pretty(&report)?,
            )?;
            jsonl::write_atomic::<QaPair>(&self.paths.qa_pairs(&asset.id), &[])?;
            return Ok(report);
        };
        report.parsed = parsed.pairs.len();
        report.parse_skipped = parsed.skipped;
        let (kept, filter) = filter_pairs(parsed.pairs, &*self.embedder, self.cfg.qa.dedup_threshold)?;
        report.filter = filter;
        report.open_ended = kept.len();

        let mut mc = Vec::new();
        let picks = mc_picks(self.cfg.seed, &asset.id, kept.len(), self.cfg.qa.mc_per_video);
        let settings = self.cfg.qa.mc_settings(self.cfg.seed);
        for i in picks {
            match generate_mc(&kept[i], &*self.backend, &self.qa_templates, &settings)? {
                McOutcome::Generated(p) => mc.push(p),
                McOutcome::Skipped(s) => report.mc_skipped.push(s),
            }
        }
        report.multi_choice = mc.len();
        let mut pairs = kept;
        pairs.extend(mc);
        jsonl::write_bytes_atomic(
            &self.paths.qa_asset_report(&asset.id),
            &serde_json::to_vec_pretty(&report)?,
        )?;
        // the pairs file marks the video as done, so it goes last
        jsonl::write_atomic(&self.paths.qa_pairs(&asset.id), &pairs)?;
        Ok(report)
    }

    pub fn run_qa(&self) -> Result<QaReport> {
        let assets = self.accepted_assets()?;
        let types = self.question_types();
        let results: Vec<Result<QaAssetReport>> = self.pool.install(|| {
            assets
                .par_iter()
                .map(|a| {
                    let report_path = self.paths.qa_asset_report(&a.id);
                    if self.paths.qa_pairs(&a.id).exists() && report_path.exists() {
                        let text = std::fs::read_to_string(&report_path)
                            .map_err(|e| Error::io(&report_path, e))?;
                        return Ok(serde_json::from_str(&text)?);
                    }
                    self.qa_for_asset(a, &types)
                })
                .collect()
        });
        let mut report = QaReport {
            videos: assets.len(),
            ..Default::default()
        };
        let mut failures = Vec::new();
        for (a, r) in assets.iter().zip(results) {
            match r {
                Ok(r) => {
                    report.parsed += r.parsed;
                    if r.parse_failed {
                        report.parse_failures.push(r.asset_id.clone());
                    }
                    report.open_ended += r.open_ended;
                    report.multi_choice += r.multi_choice;
                    report.dropped_duplicate += r.filter.dropped_duplicate;
                    report.dropped_blacklist += r.filter.dropped_blacklist;
                    report.mc_skipped += r.mc_skipped.len();
                }
                Err(e) => failures.push(format!("{}: {e}", a.id)),
            }
        }
        if !failures.is_empty() {
            return Err(Error::StageFailed {
                stage: "qa".into(),
                failures,
            });
        }
        jsonl::write_bytes_atomic(&self.paths.qa_report(), &serde_json::to_vec_pretty(&report)?)?;
        Ok(report)
    }

    pub fn run_assemble(&self) -> Result<AssembleSummary> {
        let assets = self.accepted_assets()?;
        let mut captions = Vec::with_capacity(assets.len());
        let mut pairs = Vec::new();
        for a in &assets {
            captions.push(self.level3(&a.id)?);
            let path = self.paths.qa_pairs(&a.id);
            if !path.exists() {
                return Err(Error::MissingStageOutput {
                    stage: "qa".into(),
                    path,
                });
            }
            pairs.extend(jsonl::read_all::<QaPair>(&path)?);
        }
        let records = self
            .pool
            .install(|| assemble(&assets, &captions, &pairs, &self.cfg.instructions))?;
        jsonl::write_atomic(&self.paths.dataset(), &records)?;
        Ok(AssembleSummary {
            records: records.len(),
        })
    }

    pub fn run_stats(&self) -> Result<CorpusStats> {
        let stats = stats_from_file(&self.paths.dataset())?;
        jsonl::write_bytes_atomic(&self.paths.stats_json(), &serde_json::to_vec_pretty(&stats)?)?;
        jsonl::write_bytes_atomic(&self.paths.stats_txt(), stats.to_table().as_bytes())?;
        Ok(stats)
    }

    pub fn run(&self) -> Result<RunSummary> {
        let filter = self.run_filter()?;
        log::info!("filter: {}/{} accepted", filter.accepted, filter.assets);
        let caption = self.run_caption()?;
        log::info!("caption: {} new captions", caption.new_captions);
        let qa = self.run_qa()?;
        log::info!("qa: {} open-ended, {} multiple-choice", qa.open_ended, qa.multi_choice);
        let assemble = self.run_assemble()?;
        let stats = self.run_stats()?;
        Ok(RunSummary {
            filter,
            caption,
            qa,
            assemble,
            stats,
        })
    }
}

/// Which open-ended pairs of a video also become multiple-choice.
pub fn mc_picks(seed: u64, asset_id: &str, available: usize, wanted: usize) -> Vec<usize> {
    let n = wanted.min(available);
    if n == 0 {
        return Vec::new();
    }
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(b"mc-pick");
    h.update(asset_id.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let mut picks = rand::seq::index::sample(&mut rng, available, n).into_vec();
    picks.sort_unstable();
    picks
}

/// Statistics of a dataset file, read one line at a time.
pub fn stats_from_file(path: &Path) -> Result<CorpusStats> {
    if !path.exists() {
        return Err(Error::MissingStageOutput {
            stage: "assemble".into(),
            path: path.to_path_buf(),
        });
    }
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut acc = StatsAccumulator::default();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: InstructionRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        acc.add(&r);
    }
    Ok(acc.finish())
}

pub fn run_pipeline(cfg: PipelineConfig) -> Result<RunSummary> {
    Pipeline::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems() {
        assert_eq!(file_stem("vid_01.a"), "vid_01.a");
        assert!(file_stem("../etc/passwd").starts_with("id-"));
        assert!(file_stem("").starts_with("id-"));
        assert_ne!(file_stem("a/b"), file_stem("a:b"));
    }

    #[test]
    fn mc_picks_are_seeded_and_bounded() {
        assert_eq!(mc_picks(1, "v", 10, 3), mc_picks(1, "v", 10, 3));
        assert_eq!(mc_picks(1, "v", 2, 5).len(), 2);
        assert!(mc_picks(1, "v", 0, 1).is_empty());
        assert!(mc_picks(1, "v", 10, 3).iter().all(|&i| i < 10));
    }
}
