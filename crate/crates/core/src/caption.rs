//! Three-level recurrent video description.
//!
//! A video is split into 10 s clips. Each clip gets a level-1 description
//! conditioned on its frames, the level-1 descriptions not yet folded into a
//! summary, and the latest level-2 summary. After every third complete clip
//! a level-2 summary is written from those three descriptions plus the
//! previous summary. At the end a single level-3 description is written from
//! whatever level-1s are still pending and the latest summary.
//!
//! [`build_schedule`] materializes the event order, [`CaptionState`] holds
//! the recurrence, and [`Captioner`] drives a backend through it.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::annotator::{AnnotateError, AnnotationBackend, AnnotationRequest, EncodedImage, RequestKind};
use crate::error::{Error, Result};
use crate::media::{FrameSequence, RgbFrame};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Clip,
    Summary,
    Video,
}

impl Level {
    pub fn number(self) -> u8 {
        match self {
            Level::Clip => 1,
            Level::Summary => 2,
            Level::Video => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Level::Clip),
            2 => Some(Level::Summary),
            3 => Some(Level::Video),
            _ => None,
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        Level::from_number(n).ok_or_else(|| serde::de::Error::custom(format!("bad level {n}")))
    }
}

/// `L<level>#<index>`, with 1-based indices per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CaptionId {
    pub level: Level,
    pub index: usize,
}

impl CaptionId {
    pub fn new(level: Level, index: usize) -> Self {
        CaptionId { level, index }
    }
}

impl fmt::Display for CaptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}#{}", self.level.number(), self.index)
    }
}

impl FromStr for CaptionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("bad caption id `{s}`"));
        let rest = s.strip_prefix('L').ok_or_else(bad)?;
        let (lvl, idx) = rest.split_once('#').ok_or_else(bad)?;
        let level = lvl.parse().ok().and_then(Level::from_number).ok_or_else(bad)?;
        let index = idx.parse().map_err(|_| bad())?;
        Ok(CaptionId { level, index })
    }
}

impl Serialize for CaptionId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CaptionId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open `[start, end)` in seconds; serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

impl From<[f64; 2]> for Interval {
    fn from([start, end]: [f64; 2]) -> Self {
        Interval { start, end }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.start, i.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    /// Level-1 clip length, seconds.
    pub clip_len: f64,
    /// Complete level-1 clips per level-2 summary.
    pub summary_period: usize,
    /// Final partial clips shorter than this merge into the previous clip.
    pub min_tail: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            clip_len: 10.0,
            summary_period: 3,
            min_tail: 1.0,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_len > 0.0) {
            return Err(Error::config("caption.clip_len", "must be > 0"));
        }
        if self.summary_period == 0 {
            return Err(Error::config("caption.summary_period", "must be >= 1"));
        }
        if !(self.min_tail >= 0.0) || self.min_tail >= self.clip_len {
            return Err(Error::config("caption.min_tail", "must be in [0, clip_len)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEvent {
    pub id: CaptionId,
    pub interval: Interval,
}

/// Every caption to generate for one video, in generation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSchedule {
    pub duration: f64,
    pub params: ScheduleParams,
    pub events: Vec<ScheduleEvent>,
}

impl ClipSchedule {
    pub fn count(&self, level: Level) -> usize {
        self.events.iter().filter(|e| e.id.level == level).count()
    }
}

pub fn build_schedule(duration: f64, params: &ScheduleParams) -> Result<ClipSchedule> {
    params.validate()?;
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidInput(format!(
            "caption schedule needs duration > 0, got {duration}"
        )));
    }
    let clip = params.clip_len;
    let full = ((duration + EPS) / clip).floor() as usize;
    let tail = duration - full as f64 * clip;
    let mut clips: Vec<Interval> = (0..full)
        .map(|k| Interval::new(k as f64 * clip, (k + 1) as f64 * clip))
        .collect();
    if tail > EPS {
        if tail + EPS >= params.min_tail || clips.is_empty() {
            clips.push(Interval::new(full as f64 * clip, duration));
        } else if let Some(last) = clips.last_mut() {
            last.end = duration;
        }
    }

    let mut events = Vec::new();
    let mut complete_run = 0;
    let mut summaries = 0;
    for (k, iv) in clips.iter().enumerate() {
        events.push(ScheduleEvent {
            id: CaptionId::new(Level::Clip, k + 1),
            interval: *iv,
        });
        if iv.len() + EPS >= clip {
            complete_run += 1;
        }
        if complete_run == params.summary_period {
            complete_run = 0;
            summaries += 1;
            events.push(ScheduleEvent {
                id: CaptionId::new(Level::Summary, summaries),
                interval: Interval::new(0.0, iv.end),
            });
        }
    }
    events.push(ScheduleEvent {
        id: CaptionId::new(Level::Video, 1),
        interval: Interval::new(0.0, duration),
    });
    Ok(ClipSchedule {
        duration,
        params: *params,
        events,
    })
}

/// What a caption was conditioned on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContextDigest {
    pub captions: Vec<CaptionId>,
    #[serde(default)]
    pub frame_timestamps: Vec<f64>,
}

/// One generated description, as persisted per video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    #[serde(skip)]
    pub asset_id: String,
    pub level: Level,
    pub index: usize,
    pub interval: Interval,
    pub text: String,
    pub context_digest: ContextDigest,
}

impl Caption {
    pub fn id(&self) -> CaptionId {
        CaptionId::new(self.level, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level1Context {
    pub interval: Interval,
    pub frames: Vec<(f64, RgbFrame)>,
    pub pending: Vec<(CaptionId, String)>,
    pub latest_level2: Option<(CaptionId, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryContext {
    pub pending: Vec<(CaptionId, String)>,
    pub latest_level2: Option<(CaptionId, String)>,
}

/// Recurrence state for one video.
#[derive(Debug, Clone)]
pub struct CaptionState {
    pub asset_id: String,
    /// 0-based index of the next level-1 clip.
    pub clip_index: usize,
    pub pending_level1: Vec<Caption>,
    pub latest_level2: Option<Caption>,
    pub completed: bool,
    schedule: ClipSchedule,
    cursor: usize,
    captions: Vec<Caption>,
}

fn labelled(c: &Caption) -> (CaptionId, String) {
    (c.id(), c.text.clone())
}

impl CaptionState {
    pub fn new(asset_id: impl Into<String>, schedule: ClipSchedule) -> Self {
        CaptionState {
            asset_id: asset_id.into(),
            clip_index: 0,
            pending_level1: Vec::new(),
            latest_level2: None,
            completed: false,
            schedule,
            cursor: 0,
            captions: Vec::new(),
        }
    }

    pub fn schedule(&self) -> &ClipSchedule {
        &self.schedule
    }

    pub fn next_event(&self) -> Option<&ScheduleEvent> {
        self.schedule.events.get(self.cursor)
    }

    pub fn captions(&self) -> &[Caption] {
        &self.captions
    }

    pub fn into_captions(self) -> Vec<Caption> {
        self.captions
    }

    fn expect_next(&self, level: Level) -> Result<ScheduleEvent> {
        match self.next_event() {
            Some(e) if e.id.level == level => Ok(*e),
            Some(e) => Err(Error::InvalidInput(format!(
                "next scheduled caption is {}, not a level-{} caption",
                e.id,
                level.number()
            ))),
            None => Err(Error::InvalidInput("caption schedule already exhausted".into())),
        }
    }

    /// Frames of the current clip, the pending level-1 texts and the latest
    /// level-2 text.
    pub fn level1_context(&self, frames: &FrameSequence) -> Result<Level1Context> {
        let ev = self.expect_next(Level::Clip)?;
        Ok(Level1Context {
            interval: ev.interval,
            frames: frames.clip(ev.interval.start, ev.interval.end)?,
            pending: self.pending_level1.iter().map(labelled).collect(),
            latest_level2: self.latest_level2.as_ref().map(labelled),
        })
    }

    /// The last three level-1 texts in order, plus the previous level-2.
    pub fn level2_context(&self) -> Result<SummaryContext> {
        self.expect_next(Level::Summary)?;
        let want = self.schedule.params.summary_period;
        if self.pending_level1.len() != want {
            return Err(Error::InvalidInput(format!(
                "level-2 summary needs {want} pending level-1 captions, have {}",
                self.pending_level1.len()
            )));
        }
        Ok(SummaryContext {
            pending: self.pending_level1.iter().map(labelled).collect(),
            latest_level2: self.latest_level2.as_ref().map(labelled),
        })
    }

    /// Pending level-1 texts and the latest level-2, once everything else is done.
    pub fn level3_context(&self) -> Result<SummaryContext> {
        self.expect_next(Level::Video)?;
        Ok(SummaryContext {
            pending: self.pending_level1.iter().map(labelled).collect(),
            latest_level2: self.latest_level2.as_ref().map(labelled),
        })
    }

    /// Record the caption for the next scheduled event and advance.
    pub fn apply(&mut self, text: String, context_digest: ContextDigest) -> Result<&Caption> {
        let ev = *self
            .next_event()
            .ok_or_else(|| Error::InvalidInput("caption schedule already exhausted".into()))?;
        let caption = Caption {
            asset_id: self.asset_id.clone(),
            level: ev.id.level,
            index: ev.id.index,
            interval: ev.interval,
            text,
            context_digest,
        };
        self.advance(caption);
        Ok(self.captions.last().expect("just pushed"))
    }

    fn advance(&mut self, caption: Caption) {
        match caption.level {
            Level::Clip => {
                self.pending_level1.push(caption.clone());
                self.clip_index += 1;
            }
            Level::Summary => {
                self.pending_level1.clear();
                self.latest_level2 = Some(caption.clone());
            }
            Level::Video => self.completed = true,
        }
        self.captions.push(caption);
        self.cursor += 1;
    }

    /// Re-apply previously persisted captions. They must be a prefix of the
    /// schedule.
    pub fn replay(&mut self, captions: &[Caption]) -> Result<()> {
        for c in captions {
            let ev = self.next_event().copied().ok_or_else(|| {
                Error::InvalidInput(format!("persisted caption {} is past the schedule", c.id()))
            })?;
            let same_span = (ev.interval.start - c.interval.start).abs() < 1e-6
                && (ev.interval.end - c.interval.end).abs() < 1e-6;
            if ev.id != c.id() || !same_span {
                return Err(Error::InvalidInput(format!(
                    "persisted caption {} does not match scheduled {}",
                    c.id(),
                    ev.id
                )));
            }
            let mut c = c.clone();
            c.asset_id = self.asset_id.clone();
            self.advance(c);
        }
        Ok(())
    }
}

/// Per-level prompt templates with `{frames}`, `{pending_level1}` and
/// `{latest_level2}` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionPrompts {
    pub system: String,
    pub level1: String,
    pub level2: String,
    pub level3: String,
}

impl Default for CaptionPrompts {
    fn default() -> Self {
        CaptionPrompts {
            system: include_str!("../prompts/caption_system.txt").to_string(),
            level1: include_str!("../prompts/caption_level1.txt").to_string(),
            level2: include_str!("../prompts/caption_level2.txt").to_string(),
            level3: include_str!("../prompts/caption_level3.txt").to_string(),
        }
    }
}

impl CaptionPrompts {
    /// Load `caption_system.txt` and `caption_level{1,2,3}.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let prompts = CaptionPrompts {
            system: read("caption_system.txt")?,
            level1: read("caption_level1.txt")?,
            level2: read("caption_level2.txt")?,
            level3: read("caption_level3.txt")?,
        };
        prompts.validate()?;
        Ok(prompts)
    }

    pub fn validate(&self) -> Result<()> {
        let need = |tpl: &str, name: &str, slots: &[&str]| {
            for s in slots {
                if !tpl.contains(s) {
                    return Err(Error::config(
                        format!("caption.prompts.{name}"),
                        format!("template lacks slot {s}"),
                    ));
                }
            }
            Ok(())
        };
        need(&self.level1, "level1", &["{frames}", "{pending_level1}", "{latest_level2}"])?;
        need(&self.level2, "level2", &["{pending_level1}", "{latest_level2}"])?;
        need(&self.level3, "level3", &["{pending_level1}", "{latest_level2}"])?;
        Ok(())
    }
}

fn fmt_secs(t: f64) -> String {
    if (t - t.round()).abs() < 1e-9 {
        format!("{}s", t.round() as i64)
    } else {
        format!("{t:.2}s")
    }
}

fn render_pending(pending: &[(CaptionId, String)], intervals: &[Interval]) -> String {
    if pending.is_empty() {
        return "(none)".into();
    }
    pending
        .iter()
        .zip(intervals)
        .map(|((_, text), iv)| format!("[{} - {}] {}", fmt_secs(iv.start), fmt_secs(iv.end), text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_latest(latest: &Option<(CaptionId, String)>) -> String {
    latest
        .as_ref()
        .map_or_else(|| "(none)".into(), |(_, t)| t.trim().to_string())
}

fn fill(template: &str, frames: &str, pending: &str, latest: &str) -> String {
    template
        .replace("{frames}", frames)
        .replace("{pending_level1}", pending)
        .replace("{latest_level2}", latest)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptionSettings {
    pub schedule: ScheduleParams,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for CaptionSettings {
    fn default() -> Self {
        CaptionSettings {
            schedule: ScheduleParams::default(),
            max_tokens: 1024,
            temperature: 0.7,
        }
    }
}

/// Captioning stopped early. `completed` holds every caption produced
/// before the failure, ready to be passed back as `resume`.
#[derive(Debug)]
pub struct CaptionFailure {
    pub completed: Vec<Caption>,
    pub error: Error,
}

impl fmt::Display for CaptionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "captioning failed after {} captions: {}", self.completed.len(), self.error)
    }
}

impl std::error::Error for CaptionFailure {}

pub struct Captioner<'a, B: ?Sized> {
    pub backend: &'a B,
    pub prompts: &'a CaptionPrompts,
    pub settings: CaptionSettings,
}

impl<'a, B: AnnotationBackend + ?Sized> Captioner<'a, B> {
    pub fn new(backend: &'a B, prompts: &'a CaptionPrompts, settings: CaptionSettings) -> Self {
        Captioner {
            backend,
            prompts,
            settings,
        }
    }

    /// Caption one video end to end. `resume` holds captions persisted by an
    /// earlier, interrupted run; `on_caption` sees each newly produced caption
    /// before the next request is made.
    pub fn run(
        &self,
        asset_id: &str,
        duration: f64,
        frames: &FrameSequence,
        resume: &[Caption],
        on_caption: &mut dyn FnMut(&Caption) -> Result<()>,
    ) -> std::result::Result<Vec<Caption>, CaptionFailure> {
        let fail = |completed: Vec<Caption>, error: Error| CaptionFailure { completed, error };
        let schedule = build_schedule(duration, &self.settings.schedule)
            .map_err(|e| fail(Vec::new(), e))?;
        let mut state = CaptionState::new(asset_id, schedule);
        state
            .replay(resume)
            .map_err(|e| fail(Vec::new(), e))?;
        while let Some(ev) = state.next_event().copied() {
            match self.step(&mut state, ev, frames) {
                Ok(()) => {
                    let c = state.captions().last().expect("step appended a caption");
                    if let Err(e) = on_caption(c) {
                        return Err(fail(state.into_captions(), e));
                    }
                }
                Err(e) => return Err(fail(state.into_captions(), e)),
            }
        }
        Ok(state.into_captions())
    }

    fn request(&self, user: String, tag: String, level: Level, images: Vec<EncodedImage>) -> AnnotationRequest {
        AnnotationRequest {
            system: self.prompts.system.clone(),
            user,
            images,
            max_tokens: self.settings.max_tokens,
            temperature: self.settings.temperature,
            tag,
            kind: RequestKind::Caption {
                level: level.number(),
            },
        }
    }

    fn step(&self, state: &mut CaptionState, ev: ScheduleEvent, frames: &FrameSequence) -> Result<()> {
        let tag = format!("{}/{}", state.asset_id, ev.id);
        let pending_intervals: Vec<Interval> =
            state.pending_level1.iter().map(|c| c.interval).collect();
        let (user, images, digest) = match ev.id.level {
            Level::Clip => {
                let ctx = state.level1_context(frames)?;
                let stamps: Vec<f64> = ctx.frames.iter().map(|(t, _)| *t).collect();
                let frame_desc = describe_frames(&ctx.interval, &stamps, frames.fps);
                let user = fill(
                    &self.prompts.level1,
                    &frame_desc,
                    &render_pending(&ctx.pending, &pending_intervals),
                    &render_latest(&ctx.latest_level2),
                );
                let images = ctx
                    .frames
                    .iter()
                    .map(|(_, f)| EncodedImage::png(f.encode_png()))
                    .collect();
                let digest = ContextDigest {
                    captions: context_ids(&ctx.pending, &ctx.latest_level2),
                    frame_timestamps: stamps,
                };
                (user, images, digest)
            }
            Level::Summary | Level::Video => {
                let ctx = if ev.id.level == Level::Summary {
                    state.level2_context()?
                } else {
                    state.level3_context()?
                };
                let template = if ev.id.level == Level::Summary {
                    &self.prompts.level2
                } else {
                    &self.prompts.level3
                };
                let user = fill(
                    template,
                    "",
                    &render_pending(&ctx.pending, &pending_intervals),
                    &render_latest(&ctx.latest_level2),
                );
                let digest = ContextDigest {
                    captions: context_ids(&ctx.pending, &ctx.latest_level2),
                    frame_timestamps: Vec::new(),
                };
                (user, Vec::new(), digest)
            }
        };
        let req = self.request(user, tag, ev.id.level, images);
        let text = self
            .backend
            .complete(&req)
            .map_err(|e: AnnotateError| Error::Annotate(e))?;
        state.apply(text.trim().to_string(), digest)?;
        Ok(())
    }
}

fn context_ids(pending: &[(CaptionId, String)], latest: &Option<(CaptionId, String)>) -> Vec<CaptionId> {
    pending
        .iter()
        .map(|(id, _)| *id)
        .chain(latest.iter().map(|(id, _)| *id))
        .collect()
}

fn describe_frames(iv: &Interval, stamps: &[f64], fps: f64) -> String {
    let list = stamps.iter().map(|t| fmt_secs(*t)).collect::<Vec<_>>().join(", ");
    format!(
        "{} frames sampled at {} fps covering {} to {} (timestamps: {})",
        stamps.len(),
        fps,
        fmt_secs(iv.start),
        fmt_secs(iv.end),
        list
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::MockBackend;

    fn ids(xs: &[(CaptionId, String)]) -> Vec<String> {
        xs.iter().map(|(id, _)| id.to_string()).collect()
    }

    fn schedule(d: f64) -> ClipSchedule {
        build_schedule(d, &ScheduleParams::default()).unwrap()
    }

    fn tiny_frames(d: f64) -> FrameSequence {
        let n = crate::media::expected_frame_count(d, 1.0);
        let frames = (0..n).map(|i| RgbFrame::filled(1, 1, [i as u8, 0, 0])).collect();
        FrameSequence::from_frames("v", 1.0, d, frames).unwrap()
    }

    /// Drive the state machine with placeholder texts, checking a context
    /// at the requested event.
    fn drive_until(d: f64, stop: CaptionId) -> (CaptionState, FrameSequence) {
        let frames = tiny_frames(d);
        let mut st = CaptionState::new("v", schedule(d));
        while let Some(ev) = st.next_event().copied() {
            if ev.id == stop {
                return (st, frames);
            }
            st.apply(ev.id.to_string(), ContextDigest::default()).unwrap();
        }
        panic!("{stop} not in schedule");
    }

    #[test]
    fn schedule_95s() {
        let s = schedule(95.0);
        assert_eq!(s.count(Level::Clip), 10);
        assert_eq!(s.count(Level::Summary), 3);
        assert_eq!(s.count(Level::Video), 1);
        let l1: Vec<&ScheduleEvent> = s.events.iter().filter(|e| e.id.level == Level::Clip).collect();
        assert_eq!(l1.last().unwrap().interval, Interval::new(90.0, 95.0));
        let order: Vec<String> = s.events.iter().map(|e| e.id.to_string()).collect();
        assert_eq!(&order[..5], &["L1#1", "L1#2", "L1#3", "L2#1", "L1#4"]);
        assert_eq!(order.last().unwrap(), "L3#1");
        assert!(s.events.windows(2).all(|w| w[0].interval.end <= w[1].interval.end + 1e-9));
    }

    #[test]
    fn schedule_small_and_aligned() {
        let s = schedule(10.0);
        assert_eq!((s.count(Level::Clip), s.count(Level::Summary), s.count(Level::Video)), (1, 0, 1));
        let s = schedule(90.0);
        assert_eq!((s.count(Level::Clip), s.count(Level::Summary)), (9, 3));
        let l2_last = s.events.iter().filter(|e| e.id.level == Level::Summary).last().unwrap();
        assert_eq!(l2_last.interval.end, 90.0);
    }

    #[test]
    fn short_tail_merges() {
        let s = schedule(30.5);
        let l1: Vec<Interval> = s.events.iter().filter(|e| e.id.level == Level::Clip).map(|e| e.interval).collect();
        assert_eq!(l1.len(), 3);
        assert_eq!(l1[2], Interval::new(20.0, 30.5));
        assert_eq!(s.count(Level::Summary), 1);
        // sub-second video still gets one clip
        let s = schedule(0.4);
        assert_eq!(s.count(Level::Clip), 1);
        assert!(build_schedule(0.0, &ScheduleParams::default()).is_err());
        assert!(build_schedule(-1.0, &ScheduleParams::default()).is_err());
    }

    #[test]
    fn level1_context_examples() {
        let (st, frames) = drive_until(95.0, CaptionId::new(Level::Clip, 1));
        let ctx = st.level1_context(&frames).unwrap();
        assert_eq!(ctx.frames.len(), 10);
        assert!(ctx.pending.is_empty() && ctx.latest_level2.is_none());

        let (st, frames) = drive_until(95.0, CaptionId::new(Level::Clip, 5));
        let ctx = st.level1_context(&frames).unwrap();
        assert_eq!(ctx.interval, Interval::new(40.0, 50.0));
        assert_eq!(ctx.frames.first().unwrap().0, 40.0);
        assert_eq!(ctx.frames.len(), 10);
        assert_eq!(ids(&ctx.pending), vec!["L1#4"]);
        assert_eq!(ctx.latest_level2.unwrap().0.to_string(), "L2#1");

        let (st, frames) = drive_until(95.0, CaptionId::new(Level::Clip, 4));
        let ctx = st.level1_context(&frames).unwrap();
        assert_eq!(ctx.interval, Interval::new(30.0, 40.0));
        assert!(ctx.pending.is_empty());
        assert_eq!(ctx.latest_level2.unwrap().0.to_string(), "L2#1");
    }

    #[test]
    fn level2_context_examples() {
        let (st, _) = drive_until(95.0, CaptionId::new(Level::Summary, 1));
        let ctx = st.level2_context().unwrap();
        assert_eq!(ids(&ctx.pending), vec!["L1#1", "L1#2", "L1#3"]);
        assert!(ctx.latest_level2.is_none());

        let (st, _) = drive_until(60.0, CaptionId::new(Level::Summary, 2));
        let ctx = st.level2_context().unwrap();
        assert_eq!(ids(&ctx.pending), vec!["L1#4", "L1#5", "L1#6"]);
        assert_eq!(ctx.latest_level2.unwrap().0.to_string(), "L2#1");

        // wrong phase
        let (st, _) = drive_until(95.0, CaptionId::new(Level::Clip, 2));
        assert!(st.level2_context().is_err());
    }

    #[test]
    fn level3_context_examples() {
        let (st, _) = drive_until(95.0, CaptionId::new(Level::Video, 1));
        let ctx = st.level3_context().unwrap();
        assert_eq!(ids(&ctx.pending), vec!["L1#10"]);
        assert_eq!(ctx.latest_level2.unwrap().0.to_string(), "L2#3");

        let (st, _) = drive_until(25.0, CaptionId::new(Level::Video, 1));
        let ctx = st.level3_context().unwrap();
        assert_eq!(ids(&ctx.pending), vec!["L1#1", "L1#2", "L1#3"]);
        assert!(ctx.latest_level2.is_none());

        let (st, _) = drive_until(90.0, CaptionId::new(Level::Video, 1));
        let ctx = st.level3_context().unwrap();
        assert!(ctx.pending.is_empty());
        assert_eq!(ctx.latest_level2.unwrap().0.to_string(), "L2#3");

        let (st, _) = drive_until(95.0, CaptionId::new(Level::Clip, 10));
        assert!(st.level3_context().is_err());
    }

    #[test]
    fn caption_id_round_trip() {
        let id: CaptionId = "L2#13".parse().unwrap();
        assert_eq!(id, CaptionId::new(Level::Summary, 13));
        assert!("L4#1".parse::<CaptionId>().is_err());
        assert!("X1#1".parse::<CaptionId>().is_err());
    }

    #[test]
    fn run_with_mock_counts() {
        let backend = MockBackend::new(7);
        let prompts = CaptionPrompts::default();
        let cap = Captioner::new(&backend, &prompts, CaptionSettings::default());
        let out = cap.run("v", 10.0, &tiny_frames(10.0), &[], &mut |_| Ok(())).unwrap();
        assert_eq!(out.len(), 2);
        let out = cap.run("v", 95.0, &tiny_frames(95.0), &[], &mut |_| Ok(())).unwrap();
        assert_eq!(out.len(), 14);
        assert_eq!(out[0].context_digest.frame_timestamps.len(), 10);
        assert!(out[3].context_digest.frame_timestamps.is_empty());
    }

    #[test]
    fn prompt_templates_have_slots() {
        CaptionPrompts::default().validate().unwrap();
        let mut p = CaptionPrompts::default();
        p.level1 = "no slots".into();
        assert!(p.validate().is_err());
    }

    #[test]
    fn caption_jsonl_shape() {
        let c = Caption {
            asset_id: "v".into(),
            level: Level::Summary,
            index: 2,
            interval: Interval::new(0.0, 60.0),
            text: "t".into(),
            context_digest: ContextDigest {
                captions: vec![CaptionId::new(Level::Clip, 4)],
                frame_timestamps: vec![],
            },
        };
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        assert_eq!(v["level"], 2);
        assert_eq!(v["interval"], serde_json::json!([0.0, 60.0]));
        assert_eq!(v["context_digest"]["captions"], serde_json::json!(["L1#4"]));
        let back: Caption = serde_json::from_value(v).unwrap();
        assert_eq!(back.id(), c.id());
    }
}
