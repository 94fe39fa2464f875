//! Question-answer generation from level-3 descriptions.
//!
//! One request per video asks for a pair in each of the 16 question
//! dimensions. Responses are parsed leniently, then filtered: answers that
//! open with a hedging phrase are dropped, and near-duplicate questions
//! within a video are removed by embedding cosine similarity. Surviving
//! open-ended pairs can be turned into multiple-choice pairs by asking the
//! backend for distractors.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::annotator::{AnnotationBackend, AnnotationRequest, RequestKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub caption: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionType {
    pub name: String,
    pub definition: String,
    pub exemplars: Vec<Exemplar>,
}

pub const TYPE_COUNT: usize = 16;
pub const EXEMPLARS_PER_TYPE: usize = 3;

/// The registered question dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRegistry {
    types: Vec<QuestionType>,
}

fn normalize_name(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl QuestionRegistry {
    pub fn builtin() -> Self {
        let types: Vec<QuestionType> =
            serde_json::from_str(include_str!("../prompts/question_types.json"))
                .expect("bundled question types are valid JSON");
        QuestionRegistry::new(types).expect("bundled question types are complete")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        QuestionRegistry::new(serde_json::from_str(text)?)
    }

    pub fn new(types: Vec<QuestionType>) -> Result<Self> {
        if types.len() != TYPE_COUNT {
            return Err(Error::InvalidInput(format!(
                "expected {TYPE_COUNT} question types, got {}",
                types.len()
            )));
        }
        let mut seen = HashSet::new();
        for t in &types {
            if t.exemplars.len() != EXEMPLARS_PER_TYPE {
                return Err(Error::InvalidInput(format!(
                    "question type {} has {} exemplars, expected {EXEMPLARS_PER_TYPE}",
                    t.name,
                    t.exemplars.len()
                )));
            }
            if !seen.insert(normalize_name(&t.name)) {
                return Err(Error::InvalidInput(format!("duplicate question type {}", t.name)));
            }
        }
        Ok(QuestionRegistry { types })
    }

    pub fn types(&self) -> &[QuestionType] {
        &self.types
    }

    pub fn all(&self) -> Vec<&QuestionType> {
        self.types.iter().collect()
    }

    pub fn get(&self, name: &str) -> Option<&QuestionType> {
        self.types.iter().find(|t| t.name == name)
    }
}

/// Map a free-form dimension label onto one of `types`. Punctuation and
/// case are ignored, and longer labels that extend a type name match it
/// ("Time Order Understanding" -> "Time-Order").
pub fn resolve_dimension<'a>(label: &str, types: &[&'a QuestionType]) -> Option<&'a QuestionType> {
    let key = normalize_name(label);
    if key.is_empty() {
        return None;
    }
    types
        .iter()
        .copied()
        .filter(|t| {
            let n = normalize_name(&t.name);
            key == n || key.starts_with(&n)
        })
        .max_by_key(|t| normalize_name(&t.name).len())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QaPair {
    pub asset_id: String,
    pub qtype: String,
    pub question: String,
    pub answer: String,
    /// Present only for multiple-choice pairs; exactly one entry equals `answer`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

impl QaPair {
    pub fn is_multi_choice(&self) -> bool {
        self.options.is_some()
    }

    pub fn correct_index(&self) -> Option<usize> {
        self.options
            .as_ref()?
            .iter()
            .position(|o| o == &self.answer)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(opts) = &self.options {
            if opts.len() < 2 {
                return Err(Error::InvalidInput("multiple-choice needs >= 2 options".into()));
            }
            let hits = opts.iter().filter(|o| *o == &self.answer).count();
            if hits != 1 {
                return Err(Error::InvalidInput(format!(
                    "answer must match exactly one option, matched {hits}"
                )));
            }
            let distinct: HashSet<String> = opts.iter().map(|o| option_key(o)).collect();
            if distinct.len() != opts.len() {
                return Err(Error::InvalidInput("options must be pairwise distinct".into()));
            }
        }
        Ok(())
    }
}

fn option_key(s: &str) -> String {
    s.trim().trim_end_matches('.').to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaTemplates {
    /// Must contain `{task_definitions}`.
    pub system: String,
    /// Must contain `{caption}`.
    pub user: String,
    /// Must contain `{count}`.
    pub mc_system: String,
    /// Must contain `{question}` and `{answer}`.
    pub mc_user: String,
}

impl Default for QaTemplates {
    fn default() -> Self {
        QaTemplates {
            system: include_str!("../prompts/qa_system.txt").to_string(),
            user: include_str!("../prompts/qa_user.txt").to_string(),
            mc_system: include_str!("../prompts/mc_system.txt").to_string(),
            mc_user: include_str!("../prompts/mc_user.txt").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaPrompt {
    pub system: String,
    pub user: String,
}

fn render_task_block(t: &QuestionType) -> String {
    let mut out = format!("# {}: {}\n", t.name, t.definition.trim());
    for (i, ex) in t.exemplars.iter().enumerate() {
        let n = i + 1;
        out.push_str(&format!("## caption-{n}: {}\n", ex.caption.trim()));
        out.push_str(&format!("## question-{n}: {}\n", ex.question.trim()));
        out.push_str(&format!("## answer-{n}: {}\n", ex.answer.trim()));
    }
    out
}

/// Build the system and user messages for one video's level-3 caption.
pub fn assemble_qa_prompt(
    caption: &str,
    types: &[&QuestionType],
    templates: &QaTemplates,
) -> Result<QaPrompt> {
    if types.is_empty() {
        return Err(Error::InvalidInput("at least one question type is required".into()));
    }
    let tasks: String = types.iter().map(|t| render_task_block(t)).collect();
    Ok(QaPrompt {
        system: templates
            .system
            .replace("{task_definitions}", tasks.trim_end()),
        user: templates.user.replace("{caption}", caption.trim()),
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QaParse {
    pub pairs: Vec<QaPair>,
    /// Set when no JSON list could be recovered; the video should be retried.
    pub diagnostic: Option<String>,
    /// Entries discarded during parsing, with reasons.
    pub skipped: Vec<String>,
}

/// Replace bare Python literals (`None`, `True`, `False`) outside string
/// literals with their JSON spelling.
fn pythonish_to_json(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if in_str {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            i += 1;
            continue;
        }
        if c == '"' {
            in_str = true;
            out.push(c);
            i += 1;
            continue;
        }
        let boundary_before = i == 0 || !(chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
        let mut replaced = false;
        if boundary_before {
            for (word, json) in [("None", "null"), ("True", "true"), ("False", "false")] {
                let w: Vec<char> = word.chars().collect();
                let end = i + w.len();
                if end <= chars.len()
                    && chars[i..end] == w[..]
                    && (end == chars.len() || !(chars[end].is_alphanumeric() || chars[end] == '_'))
                {
                    out.push_str(json);
                    i = end;
                    replaced = true;
                    break;
                }
            }
        }
        if !replaced {
            out.push(c);
            i += 1;
        }
    }
    out
}

fn strip_code_fence(raw: &str) -> &str {
    let Some(open) = raw.find("```") else {
        return raw;
    };
    let after = &raw[open + 3..];
    // skip a language tag such as ```json
    let body_start = after.find('\n').map_or(0, |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// The first JSON array embedded in `raw`, tolerating surrounding prose,
/// code fences and Python-style literals.
pub fn extract_json_list(raw: &str) -> Option<Vec<Value>> {
    for candidate in [strip_code_fence(raw), raw] {
        let text = pythonish_to_json(candidate);
        for (i, _) in text.match_indices('[') {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            if let Some(Ok(Value::Array(items))) = stream.next() {
                return Some(items);
            }
        }
    }
    None
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str) -> Option<&'a Value> {
    obj.iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| v)
}

fn usable_text(v: Option<&Value>) -> Option<String> {
    let s = v?.as_str()?.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("none") {
        None
    } else {
        Some(s.to_string())
    }
}

/// Parse a generation response into at most one pair per question type.
pub fn parse_qa_response(asset_id: &str, raw: &str, types: &[&QuestionType]) -> QaParse {
    let Some(items) = extract_json_list(raw) else {
        return QaParse {
            diagnostic: Some("no JSON list found in response".into()),
            ..Default::default()
        };
    };
    let mut out = QaParse::default();
    let mut used: HashSet<String> = HashSet::new();
    for (i, item) in items.iter().enumerate() {
        let Some(obj) = item.as_object() else {
            out.skipped.push(format!("entry {i}: not an object"));
            continue;
        };
        let label = field(obj, "Dimension").and_then(Value::as_str).unwrap_or("");
        let Some(qt) = resolve_dimension(label, types) else {
            out.skipped.push(format!("entry {i}: unknown dimension `{label}`"));
            continue;
        };
        let (Some(question), Some(answer)) = (
            usable_text(field(obj, "Question")),
            usable_text(field(obj, "Answer")),
        ) else {
            out.skipped.push(format!("entry {i}: {} returned None", qt.name));
            continue;
        };
        if !used.insert(qt.name.clone()) {
            out.skipped.push(format!("entry {i}: second {} pair", qt.name));
            continue;
        }
        out.pairs.push(QaPair {
            asset_id: asset_id.to_string(),
            qtype: qt.name.clone(),
            question,
            answer,
            options: None,
        });
    }
    out
}

/// Answers opening with any of these are dropped.
pub const BLACKLIST: [&str; 5] = [
    "does not specify",
    "does not mention",
    "does not specifically",
    "does not depict",
    "does not show",
];

pub fn is_blacklisted(answer: &str) -> bool {
    let a = answer.trim_start().to_lowercase();
    BLACKLIST.iter().any(|p| a.starts_with(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Duplicate,
    Blacklist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub asset_id: String,
    pub qtype: String,
    pub question: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub dropped_duplicate: usize,
    pub dropped_blacklist: usize,
    pub dropped: Vec<DroppedPair>,
}

impl FilterReport {
    fn drop(&mut self, p: &QaPair, reason: DropReason) {
        match reason {
            DropReason::Duplicate => self.dropped_duplicate += 1,
            DropReason::Blacklist => self.dropped_blacklist += 1,
        }
        self.dropped.push(DroppedPair {
            asset_id: p.asset_id.clone(),
            qtype: p.qtype.clone(),
            question: p.question.clone(),
            reason,
        });
    }

    /// Combine reports of consecutive filter passes over the same input.
    pub fn then(mut self, next: FilterReport) -> FilterReport {
        self.kept = next.kept;
        self.dropped_duplicate += next.dropped_duplicate;
        self.dropped_blacklist += next.dropped_blacklist;
        self.dropped.extend(next.dropped);
        self
    }

    /// Sum reports over disjoint inputs.
    pub fn merge(&mut self, other: FilterReport) {
        self.input += other.input;
        self.kept += other.kept;
        self.dropped_duplicate += other.dropped_duplicate;
        self.dropped_blacklist += other.dropped_blacklist;
        self.dropped.extend(other.dropped);
    }
}

pub fn blacklist_filter(pairs: Vec<QaPair>) -> (Vec<QaPair>, FilterReport) {
    let mut report = FilterReport {
        input: pairs.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(pairs.len());
    for p in pairs {
        if is_blacklisted(&p.answer) {
            report.drop(&p, DropReason::Blacklist);
        } else {
            kept.push(p);
        }
    }
    report.kept = kept.len();
    (kept, report)
}

/// Text embedding backend. Vectors are only compared within one call.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Offline embedder: L2-normalized word-count vectors over lowercased words,
/// with the vocabulary of the batch as the basis.
#[derive(Debug, Clone, Copy, Default)]
pub struct BagOfWordsEmbedder;

pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

impl Embedder for BagOfWordsEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let tokenized: Vec<Vec<String>> = texts.iter().map(|t| words(t)).collect();
        let vocab: BTreeMap<&str, usize> = tokenized
            .iter()
            .flatten()
            .map(String::as_str)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, w)| (w, i))
            .collect();
        Ok(tokenized
            .iter()
            .map(|toks| {
                let mut v = vec![0f32; vocab.len()];
                for t in toks {
                    v[vocab[t.as_str()]] += 1.0;
                }
                let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                v
            })
            .collect())
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Embedding client for an OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(endpoint: String, model: String, api_key: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Embedding(e.to_string()))?;
        Ok(RemoteEmbedder {
            endpoint,
            model,
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f32>,
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut rb = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({"model": self.model, "input": texts}));
        if let Some(k) = &self.api_key {
            rb = rb.bearer_auth(k);
        }
        let resp = rb.send().map_err(|e| Error::Embedding(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(Error::Embedding(format!("http {status}: {body}")));
        }
        let mut parsed: EmbeddingResponse =
            resp.json().map_err(|e| Error::Embedding(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(Error::Embedding(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        parsed.data.sort_by_key(|d| d.index);
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

/// Drop pairs whose question is at least `threshold` cosine-similar to an
/// earlier kept question of the same video. Output keeps input order.
pub fn dedup<E: Embedder + ?Sized>(
    pairs: Vec<QaPair>,
    embedder: &E,
    threshold: f64,
) -> Result<(Vec<QaPair>, FilterReport)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "dedup threshold must be in (0, 1], got {threshold}"
        )));
    }
    let mut report = FilterReport {
        input: pairs.len(),
        ..Default::default()
    };
    // group indices per video, in first-appearance order
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        match groups.iter_mut().find(|(a, _)| *a == p.asset_id) {
            Some((_, idx)) => idx.push(i),
            None => groups.push((p.asset_id.clone(), vec![i])),
        }
    }
    let mut keep = vec![true; pairs.len()];
    for (_, idx) in &groups {
        let texts: Vec<&str> = idx.iter().map(|&i| pairs[i].question.as_str()).collect();
        let vecs = embedder.embed(&texts)?;
        if vecs.len() != texts.len() {
            return Err(Error::Embedding(format!(
                "embedder returned {} vectors for {} texts",
                vecs.len(),
                texts.len()
            )));
        }
        let mut kept_local: Vec<usize> = Vec::new();
        for (j, &i) in idx.iter().enumerate() {
            let dup = kept_local
                .iter()
                .any(|&k| cosine(&vecs[k], &vecs[j]) >= threshold - 1e-9);
            if dup {
                keep[i] = false;
            } else {
                kept_local.push(j);
            }
        }
    }
    let mut kept = Vec::new();
    for (p, k) in pairs.into_iter().zip(keep) {
        if k {
            kept.push(p);
        } else {
            report.drop(&p, DropReason::Duplicate);
        }
    }
    report.kept = kept.len();
    Ok((kept, report))
}

/// Hedged answers first, then near-duplicate questions.
pub fn filter_pairs<E: Embedder + ?Sized>(
    pairs: Vec<QaPair>,
    embedder: &E,
    threshold: f64,
) -> Result<(Vec<QaPair>, FilterReport)> {
    let (pairs, bl) = blacklist_filter(pairs);
    let (pairs, dd) = dedup(pairs, embedder, threshold)?;
    Ok((pairs, bl.then(dd)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSkip {
    pub asset_id: String,
    pub qtype: String,
    pub question: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum McOutcome {
    Generated(QaPair),
    Skipped(McSkip),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub n_options: usize,
    pub seed: u64,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            n_options: 5,
            seed: 0,
            max_tokens: 512,
            temperature: 0.7,
        }
    }
}

/// Seeded position of the correct option among `n`.
pub fn correct_position(seed: u64, pair: &QaPair, n: usize) -> usize {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(pair.asset_id.as_bytes());
    h.update([0]);
    h.update(pair.qtype.as_bytes());
    h.update([0]);
    h.update(pair.question.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    rng.gen_range(0..n)
}

/// Turn an open-ended pair into a multiple-choice one with backend-written
/// distractors.
pub fn generate_mc<B: AnnotationBackend + ?Sized>(
    pair: &QaPair,
    backend: &B,
    templates: &QaTemplates,
    settings: &McSettings,
) -> Result<McOutcome> {
    if pair.is_multi_choice() {
        return Err(Error::InvalidInput("pair is already multiple-choice".into()));
    }
    let n = settings.n_options;
    if n < 2 {
        return Err(Error::InvalidInput("multiple-choice needs n_options >= 2".into()));
    }
    let want = n - 1;
    let req = AnnotationRequest {
        system: templates.mc_system.replace("{count}", &want.to_string()),
        user: templates
            .mc_user
            .replace("{question}", &pair.question)
            .replace("{answer}", &pair.answer),
        images: Vec::new(),
        max_tokens: settings.max_tokens,
        temperature: settings.temperature,
        tag: format!("{}/mc/{}", pair.asset_id, pair.qtype),
        kind: RequestKind::Distractors { count: want },
    };
    let raw = backend.complete(&req)?;
    let skip = |reason: String| {
        Ok(McOutcome::Skipped(McSkip {
            asset_id: pair.asset_id.clone(),
            qtype: pair.qtype.clone(),
            question: pair.question.clone(),
            reason,
        }))
    };
    let Some(items) = extract_json_list(&raw) else {
        return skip("distractor response has no JSON list".into());
    };
    let mut seen: HashSet<String> = HashSet::from([option_key(&pair.answer)]);
    let mut distractors = Vec::new();
    for item in &items {
        let Some(s) = item.as_str().map(str::trim).filter(|s| !s.is_empty()) else {
            continue;
        };
        if seen.insert(option_key(s)) {
            distractors.push(s.to_string());
        }
    }
    if distractors.len() < want {
        return skip(format!(
            "needed {want} distinct distractors, backend gave {}",
            distractors.len()
        ));
    }
    distractors.truncate(want);
    let pos = correct_position(settings.seed, pair, n);
    let mut options = distractors;
    options.insert(pos, pair.answer.clone());
    let mc = QaPair {
        options: Some(options),
        ..pair.clone()
    };
    mc.validate()?;
    Ok(McOutcome::Generated(mc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::{AnnotateError, MockBackend};

    fn pair(asset: &str, qtype: &str, q: &str, a: &str) -> QaPair {
        QaPair {
            asset_id: asset.into(),
            qtype: qtype.into(),
            question: q.into(),
            answer: a.into(),
            options: None,
        }
    }

    #[test]
    fn registry_has_sixteen_complete_types() {
        let r = QuestionRegistry::builtin();
        assert_eq!(r.types().len(), 16);
        assert!(r.types().iter().all(|t| t.exemplars.len() == 3));
        let mut short = r.types().to_vec();
        short.pop();
        assert!(QuestionRegistry::new(short).is_err());
    }

    #[test]
    fn dimension_labels_resolve() {
        let r = QuestionRegistry::builtin();
        let all = r.all();
        let name = |l: &str| resolve_dimension(l, &all).map(|t| t.name.clone());
        assert_eq!(name("temporal").as_deref(), Some("Temporal"));
        assert_eq!(name("Fine Grained Action Understanding").as_deref(), Some("Fine-Grained-Action"));
        assert_eq!(
            name("Non-Existent Actions with Existent Scene Depictions").as_deref(),
            Some("Non-Existent-Actions")
        );
        assert_eq!(name("Time Order Understanding").as_deref(), Some("Time-Order"));
        assert_eq!(name("description_scene").as_deref(), Some("Description-Scene"));
        assert_eq!(name("Description").as_deref(), None);
        assert_eq!(name("Humor").as_deref(), None);
    }

    #[test]
    fn prompt_single_type() {
        let r = QuestionRegistry::builtin();
        let t = r.get("Speed").unwrap();
        let p = assemble_qa_prompt("A cat.", &[t], &QaTemplates::default()).unwrap();
        assert_eq!(p.system.lines().filter(|l| l.starts_with("# ")).count(), 1);
        assert!(p.system.contains("# Speed: "));
        assert!(p.system.contains("## answer-3: "));
        assert!(p.user.ends_with("Description: A cat.\n"));
        assert!(assemble_qa_prompt("x", &[], &QaTemplates::default()).is_err());
    }

    fn sixteen_entries() -> String {
        let r = QuestionRegistry::builtin();
        let entries: Vec<Value> = r
            .types()
            .iter()
            .map(|t| serde_json::json!({"Dimension": t.name, "Question": format!("Q {}?", t.name), "Answer": "A."}))
            .collect();
        serde_json::to_string(&entries).unwrap()
    }

    #[test]
    fn parse_full_list() {
        let r = QuestionRegistry::builtin();
        let out = parse_qa_response("v", &sixteen_entries(), &r.all());
        assert_eq!(out.pairs.len(), 16);
        assert!(out.diagnostic.is_none());
    }

    #[test]
    fn parse_drops_none_and_keeps_first_per_type() {
        let r = QuestionRegistry::builtin();
        let raw = r#"Sure! Here you go:
```json
[{"Dimension": "Temporal", "Question": "First?", "Answer": "One."},
 {"Dimension": "Temporal", "Question": "Second?", "Answer": "Two."},
 {"Dimension": "Count", "Question": "How many?", "Answer": "None"},
 {"Dimension": "Speed", "Question": None, "Answer": None},
 {"Dimension": "Mood", "Question": "Happy?", "Answer": "Yes."}]
```
Let me know if you need more."#;
        let out = parse_qa_response("v", raw, &r.all());
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.pairs[0].question, "First?");
        assert_eq!(out.skipped.len(), 4);
    }

    #[test]
    fn parse_garbage_gives_diagnostic() {
        let r = QuestionRegistry::builtin();
        let out = parse_qa_response("v", "I cannot help with that.", &r.all());
        assert!(out.pairs.is_empty());
        assert!(out.diagnostic.is_some());
    }

    #[test]
    fn python_literals_outside_strings_only() {
        let s = r#"[{"a": None, "b": "None of them", "c": True}]"#;
        assert_eq!(
            pythonish_to_json(s),
            r#"[{"a": null, "b": "None of them", "c": true}]"#
        );
    }

    #[test]
    fn blacklist_is_prefix_only() {
        let (kept, rep) = blacklist_filter(vec![
            pair("v", "Count", "q1", "Does not mention the color."),
            pair("v", "Count", "q2", "The video does not mention the color."),
            pair("v", "Count", "q3", "A red car."),
            pair("v", "Count", "q4", "   DOES NOT SHOW any dog."),
        ]);
        assert_eq!(kept.len(), 2);
        assert_eq!(rep.dropped_blacklist, 2);
        assert_eq!(rep.kept + rep.dropped_blacklist + rep.dropped_duplicate, rep.input);
    }

    #[test]
    fn dedup_identical_and_orthogonal() {
        let e = BagOfWordsEmbedder;
        let (kept, rep) = dedup(
            vec![
                pair("v", "Temporal", "What is the man holding?", "a"),
                pair("v", "Spatial", "What is the man holding?", "b"),
            ],
            &e,
            1.0,
        )
        .unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(rep.dropped_duplicate, 1);

        let (kept, _) = dedup(
            vec![pair("v", "Temporal", "red car", "a"), pair("v", "Spatial", "blue boat", "b")],
            &e,
            0.01,
        )
        .unwrap();
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn dedup_scope_is_per_video() {
        let (kept, _) = dedup(
            vec![pair("a", "Temporal", "Same?", "x"), pair("b", "Temporal", "Same?", "x")],
            &BagOfWordsEmbedder,
            0.95,
        )
        .unwrap();
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn dedup_threshold_domain() {
        assert!(dedup(vec![], &BagOfWordsEmbedder, 0.0).is_err());
        assert!(dedup(vec![], &BagOfWordsEmbedder, 1.5).is_err());
    }

    struct FailingEmbedder;
    impl Embedder for FailingEmbedder {
        fn embed(&self, _: &[&str]) -> Result<Vec<Vec<f32>>> {
            Err(Error::Embedding("offline".into()))
        }
    }

    #[test]
    fn embedder_failure_aborts() {
        assert!(dedup(vec![pair("v", "Temporal", "q", "a")], &FailingEmbedder, 0.9).is_err());
    }

    #[test]
    fn mc_with_mock_is_deterministic() {
        let backend = MockBackend::new(11);
        let p = pair("v", "Causal", "Why does he stop?", "The light turns red.");
        let s = McSettings {
            seed: 5,
            ..Default::default()
        };
        let a = generate_mc(&p, &backend, &QaTemplates::default(), &s).unwrap();
        let b = generate_mc(&p, &backend, &QaTemplates::default(), &s).unwrap();
        assert_eq!(a, b);
        let McOutcome::Generated(mc) = a else { panic!("skipped") };
        let opts = mc.options.as_ref().unwrap();
        assert_eq!(opts.len(), 5);
        assert_eq!(mc.correct_index(), Some(correct_position(5, &p, 5)));
        mc.validate().unwrap();
    }

    #[test]
    fn mc_binary() {
        let backend = MockBackend::new(1);
        let p = pair("v", "Binary", "Is it raining?", "Yes.");
        let s = McSettings {
            n_options: 2,
            ..Default::default()
        };
        let McOutcome::Generated(mc) = generate_mc(&p, &backend, &QaTemplates::default(), &s).unwrap() else {
            panic!("skipped")
        };
        assert_eq!(mc.options.unwrap().len(), 2);
    }

    struct Fixed(&'static str);
    impl AnnotationBackend for Fixed {
        fn complete(&self, _: &AnnotationRequest) -> std::result::Result<String, AnnotateError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn mc_duplicate_distractors_skip() {
        let p = pair("v", "Speed", "How fast?", "Slowly.");
        let b = Fixed(r#"["Quickly.", "quickly", "Slowly", "At a run."]"#);
        let out = generate_mc(&p, &b, &QaTemplates::default(), &McSettings::default()).unwrap();
        assert!(matches!(out, McOutcome::Skipped(_)));
        assert!(generate_mc(
            &QaPair { options: Some(vec!["a".into(), "b".into()]), answer: "a".into(), ..p.clone() },
            &b,
            &QaTemplates::default(),
            &McSettings::default()
        )
        .is_err());
    }
}
