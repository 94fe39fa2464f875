//! Instruction records and corpus statistics.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::caption::{Caption, Level};
use crate::error::{Error, Result};
use crate::media::{Source, VideoAsset};
use crate::qa::QaPair;

pub const VIDEO_TOKEN: &str = "<video>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Caption,
    OpenEnded,
    MultiChoice,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Caption => "caption",
            Task::OpenEnded => "open_ended",
            Task::MultiChoice => "multi_choice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Human,
    Gpt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: Speaker,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub asset_id: String,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub video: String,
    pub source: Source,
    pub task: Task,
    pub conversations: Vec<Turn>,
    pub metadata: RecordMetadata,
}

impl InstructionRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("record {}: {m}", self.id)));
        if self.conversations.is_empty() || self.conversations.len() % 2 != 0 {
            return bad("conversations must be nonempty human/gpt exchanges");
        }
        for (i, t) in self.conversations.iter().enumerate() {
            let want = if i % 2 == 0 { Speaker::Human } else { Speaker::Gpt };
            if t.from != want {
                return bad("turns must alternate starting with human");
            }
        }
        if !self.conversations[0].value.starts_with(VIDEO_TOKEN) {
            return bad("first human turn must carry the video token");
        }
        if self.task == Task::Caption && self.conversations.len() != 2 {
            return bad("caption records have exactly one exchange");
        }
        Ok(())
    }

    /// The first assistant turn.
    pub fn response(&self) -> &str {
        self.conversations.get(1).map_or("", |t| t.value.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionTemplates {
    /// Caption instructions; one is chosen per video by a stable hash.
    pub caption: Vec<String>,
}

impl Default for InstructionTemplates {
    fn default() -> Self {
        InstructionTemplates {
            caption: [
                "Please describe this video.",
                "Describe what happens in this video in detail.",
                "Provide a detailed description of the video.",
                "What is happening in this video? Describe it thoroughly.",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl InstructionTemplates {
    pub fn validate(&self) -> Result<()> {
        if self.caption.is_empty() || self.caption.iter().any(|c| c.trim().is_empty()) {
            return Err(Error::config("instructions.caption", "needs at least one nonempty instruction"));
        }
        Ok(())
    }

    fn caption_for(&self, asset_id: &str) -> &str {
        let h = Sha256::digest(asset_id.as_bytes());
        let k = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
        &self.caption[(k % self.caption.len() as u64) as usize]
    }
}

fn record_id(asset_id: &str, task: Task, key: &str) -> String {
    let mut h = Sha256::new();
    for part in [asset_id, task.name(), key] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(&h.finalize()[..12])
}

pub fn option_letter(i: usize) -> char {
    (b'A' + (i % 26) as u8) as char
}

fn exchange(human: String, gpt: String) -> Vec<Turn> {
    vec![
        Turn {
            from: Speaker::Human,
            value: format!("{VIDEO_TOKEN}\n{human}"),
        },
        Turn {
            from: Speaker::Gpt,
            value: gpt,
        },
    ]
}

fn qa_record(asset: &VideoAsset, pair: &QaPair) -> Result<InstructionRecord> {
    pair.validate()?;
    let (task, human, gpt) = match (&pair.options, pair.correct_index()) {
        (Some(opts), Some(k)) => {
            let mut human = pair.question.clone();
            for (i, o) in opts.iter().enumerate() {
                let _ = write!(human, "\n{}. {o}", option_letter(i));
            }
            (Task::MultiChoice, human, format!("{}. {}", option_letter(k), pair.answer))
        }
        _ => (Task::OpenEnded, pair.question.clone(), pair.answer.clone()),
    };
    Ok(InstructionRecord {
        id: record_id(&asset.id, task, &pair.question),
        video: asset.uri.clone(),
        source: asset.source,
        task,
        conversations: exchange(human, gpt),
        metadata: RecordMetadata {
            asset_id: asset.id.clone(),
            duration: asset.duration,
            qtype: Some(pair.qtype.clone()),
        },
    })
}

/// Bind level-3 captions and QA pairs into records: per asset in `assets`
/// order, the caption record first, then the asset's pairs in input order.
/// Assets without a level-3 caption and no pairs are skipped.
pub fn assemble(
    assets: &[VideoAsset],
    captions: &[Caption],
    qa_pairs: &[QaPair],
    templates: &InstructionTemplates,
) -> Result<Vec<InstructionRecord>> {
    templates.validate()?;
    let known: HashSet<&str> = assets.iter().map(|a| a.id.as_str()).collect();
    let mut level3: HashMap<&str, &Caption> = HashMap::new();
    for c in captions.iter().filter(|c| c.level == Level::Video) {
        if !known.contains(c.asset_id.as_str()) {
            return Err(Error::DanglingAsset(format!("caption for unknown asset {}", c.asset_id)));
        }
        level3.insert(c.asset_id.as_str(), c);
    }
    let mut by_asset: HashMap<&str, Vec<&QaPair>> = HashMap::new();
    for p in qa_pairs {
        if !level3.contains_key(p.asset_id.as_str()) {
            return Err(Error::DanglingAsset(format!(
                "QA pair for asset {} which has no level-3 caption",
                p.asset_id
            )));
        }
        by_asset.entry(p.asset_id.as_str()).or_default().push(p);
    }

    let per_asset: Vec<Vec<InstructionRecord>> = assets
        .par_iter()
        .map(|asset| -> Result<Vec<InstructionRecord>> {
            let Some(cap) = level3.get(asset.id.as_str()) else {
                return Ok(Vec::new());
            };
            let mut out = vec![InstructionRecord {
                id: record_id(&asset.id, Task::Caption, ""),
                video: asset.uri.clone(),
                source: asset.source,
                task: Task::Caption,
                conversations: exchange(
                    templates.caption_for(&asset.id).to_string(),
                    cap.text.clone(),
                ),
                metadata: RecordMetadata {
                    asset_id: asset.id.clone(),
                    duration: asset.duration,
                    qtype: None,
                },
            }];
            for p in by_asset.get(asset.id.as_str()).into_iter().flatten() {
                out.push(qa_record(asset, p)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let records: Vec<InstructionRecord> = per_asset.into_iter().flatten().collect();
    let mut ids = HashSet::with_capacity(records.len());
    for r in &records {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate record id {} for asset {} ({})",
                r.id,
                r.metadata.asset_id,
                r.task.name()
            )));
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts[i]` covers `[i·bin_width, (i+1)·bin_width)`.
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bin_width: f64) -> Self {
        Histogram {
            bin_width,
            counts: Vec::new(),
        }
    }

    pub fn add(&mut self, value: f64) {
        let bin = (value.max(0.0) / self.bin_width).floor() as usize;
        if self.counts.len() <= bin {
            self.counts.resize(bin + 1, 0);
        }
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Histogram) {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskCounts {
    pub caption: u64,
    pub open_ended: u64,
    pub multi_choice: u64,
}

impl TaskCounts {
    fn bump(&mut self, task: Task) {
        match task {
            Task::Caption => self.caption += 1,
            Task::OpenEnded => self.open_ended += 1,
            Task::MultiChoice => self.multi_choice += 1,
        }
    }

    fn add(&mut self, o: &TaskCounts) {
        self.caption += o.caption;
        self.open_ended += o.open_ended;
        self.multi_choice += o.multi_choice;
    }

    pub fn total(&self) -> u64 {
        self.caption + self.open_ended + self.multi_choice
    }
}

pub const DURATION_BIN_SECS: f64 = 10.0;
pub const WORD_BIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_source: BTreeMap<Source, TaskCounts>,
    pub totals: TaskCounts,
    pub records: u64,
    pub videos: u64,
    /// Over distinct videos.
    pub duration_histogram: Histogram,
    /// Over caption records, whitespace-separated words.
    pub caption_word_histogram: Histogram,
}

impl Default for CorpusStats {
    fn default() -> Self {
        CorpusStats {
            per_source: BTreeMap::new(),
            totals: TaskCounts::default(),
            records: 0,
            videos: 0,
            duration_histogram: Histogram::new(DURATION_BIN_SECS),
            caption_word_histogram: Histogram::new(WORD_BIN),
        }
    }
}

/// Streaming accumulator behind [`compute_stats`]; shards merge with
/// [`StatsAccumulator::merge`].
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    per_source: BTreeMap<Source, TaskCounts>,
    records: u64,
    videos: HashMap<String, f64>,
    words: Histogram,
}

impl Default for Histogram {
    fn default() -> Self {
        Histogram::new(WORD_BIN)
    }
}

impl StatsAccumulator {
    pub fn add(&mut self, r: &InstructionRecord) {
        self.per_source.entry(r.source).or_default().bump(r.task);
        self.records += 1;
        if !self.videos.contains_key(&r.metadata.asset_id) {
            self.videos.insert(r.metadata.asset_id.clone(), r.metadata.duration);
        }
        if r.task == Task::Caption {
            self.words.add(r.response().split_whitespace().count() as f64);
        }
    }

    pub fn merge(&mut self, other: StatsAccumulator) {
        for (s, c) in &other.per_source {
            self.per_source.entry(*s).or_default().add(c);
        }
        self.records += other.records;
        for (k, d) in other.videos {
            self.videos.entry(k).or_insert(d);
        }
        self.words.merge(&other.words);
    }

    pub fn finish(self) -> CorpusStats {
        let mut totals = TaskCounts::default();
        for c in self.per_source.values() {
            totals.add(c);
        }
        let mut durations = Histogram::new(DURATION_BIN_SECS);
        for d in self.videos.values() {
            durations.add(*d);
        }
        CorpusStats {
            per_source: self.per_source,
            totals,
            records: self.records,
            videos: self.videos.len() as u64,
            duration_histogram: durations,
            caption_word_histogram: self.words,
        }
    }
}

pub fn compute_stats<I>(records: I) -> CorpusStats
where
    I: IntoIterator,
    I::Item: Borrow<InstructionRecord>,
{
    let mut acc = StatsAccumulator::default();
    for r in records {
        acc.add(r.borrow());
    }
    acc.finish()
}

fn histogram_lines(out: &mut String, title: &str, unit: &str, h: &Histogram) {
    let _ = writeln!(out, "\n{title}");
    for (i, c) in h.counts.iter().enumerate().filter(|(_, c)| **c > 0) {
        let lo = i as f64 * h.bin_width;
        let _ = writeln!(out, "  [{lo:>5}, {:>5}) {unit:<5} {c:>10}", lo + h.bin_width);
    }
}

impl CorpusStats {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>10} {:>12} {:>14}",
            "source", "caption", "open-ended", "multi-choice"
        );
        for (s, c) in &self.per_source {
            let _ = writeln!(
                out,
                "{:<14} {:>10} {:>12} {:>14}",
                s.name(),
                c.caption,
                c.open_ended,
                c.multi_choice
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "{:<14} {:>10} {:>12} {:>14}",
            "total", t.caption, t.open_ended, t.multi_choice
        );
        let _ = writeln!(out, "\nrecords {}  videos {}", self.records, self.videos);
        histogram_lines(&mut out, "video duration", "s", &self.duration_histogram);
        histogram_lines(&mut out, "caption length", "words", &self.caption_word_histogram);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::{ContextDigest, Interval};

    fn asset(id: &str) -> VideoAsset {
        VideoAsset {
            id: id.into(),
            source: Source::Vidal,
            uri: format!("videos/{id}.mp4"),
            duration: 42.0,
            width: 640,
            height: 480,
            view_count: None,
            category: None,
        }
    }

    fn level3(id: &str, text: &str) -> Caption {
        Caption {
            asset_id: id.into(),
            level: Level::Video,
            index: 1,
            interval: Interval::new(0.0, 42.0),
            text: text.into(),
            context_digest: ContextDigest::default(),
        }
    }

    fn pair(id: &str, q: &str, options: Option<Vec<&str>>, answer: &str) -> QaPair {
        QaPair {
            asset_id: id.into(),
            qtype: "Temporal".into(),
            question: q.into(),
            answer: answer.into(),
            options: options.map(|o| o.into_iter().map(String::from).collect()),
        }
    }

    #[test]
    fn one_video_four_records() {
        let recs = assemble(
            &[asset("v")],
            &[level3("v", "A dog runs.")],
            &[
                pair("v", "What runs?", None, "A dog."),
                pair("v", "Where?", None, "Outside."),
                pair("v", "Which animal?", Some(vec!["Cat.", "Bird.", "Dog.", "Fish."]), "Dog."),
            ],
            &InstructionTemplates::default(),
        )
        .unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[0].task, Task::Caption);
        assert_eq!(recs[0].response(), "A dog runs.");
        assert!(recs[0].conversations[0].value.starts_with("<video>\n"));
        let mc = &recs[3];
        assert_eq!(mc.task, Task::MultiChoice);
        assert!(mc.response().starts_with("C."));
        assert!(mc.conversations[0].value.contains("\nA. Cat.\nB. Bird.\nC. Dog.\nD. Fish."));
        recs.iter().for_each(|r| r.validate().unwrap());

        let again = assemble(
            &[asset("v")],
            &[level3("v", "A dog runs.")],
            &[
                pair("v", "What runs?", None, "A dog."),
                pair("v", "Where?", None, "Outside."),
                pair("v", "Which animal?", Some(vec!["Cat.", "Bird.", "Dog.", "Fish."]), "Dog."),
            ],
            &InstructionTemplates::default(),
        )
        .unwrap();
        assert_eq!(recs, again);
    }

    #[test]
    fn dangling_references() {
        let t = InstructionTemplates::default();
        assert!(matches!(
            assemble(&[asset("v")], &[], &[pair("v", "q", None, "a")], &t),
            Err(Error::DanglingAsset(_))
        ));
        assert!(matches!(
            assemble(&[asset("v")], &[level3("w", "x")], &[], &t),
            Err(Error::DanglingAsset(_))
        ));
    }

    #[test]
    fn duplicate_questions_rejected() {
        let r = assemble(
            &[asset("v")],
            &[level3("v", "x")],
            &[pair("v", "Same?", None, "a"), pair("v", "Same?", None, "b")],
            &InstructionTemplates::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn json_round_trip() {
        let recs = assemble(
            &[asset("v")],
            &[level3("v", "Line one.\n\"Quoted\" line two.")],
            &[],
            &InstructionTemplates::default(),
        )
        .unwrap();
        let line = serde_json::to_string(&recs[0]).unwrap();
        let back: InstructionRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, recs[0]);
    }

    #[test]
    fn empty_stats() {
        let s = compute_stats(Vec::<InstructionRecord>::new());
        assert_eq!(s.totals.total(), 0);
        assert_eq!(s.records, 0);
        assert_eq!(s.duration_histogram.total(), 0);
    }

    #[test]
    fn stats_histograms() {
        let recs = assemble(
            &[asset("v"), VideoAsset { duration: 5.0, ..asset("w") }],
            &[level3("v", "one two three"), level3("w", "a b c d e f g h i j k l")],
            &[pair("v", "q?", None, "a")],
            &InstructionTemplates::default(),
        )
        .unwrap();
        let s = compute_stats(&recs);
        assert_eq!(s.videos, 2);
        assert_eq!(s.duration_histogram.counts, vec![1, 0, 0, 0, 1]);
        assert_eq!(s.caption_word_histogram.counts, vec![1, 1]);
        assert_eq!(s.totals, TaskCounts { caption: 2, open_ended: 1, multi_choice: 0 });
        assert!(s.to_table().contains("VIDAL"));
    }
}
