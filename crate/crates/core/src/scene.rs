//! Content-cut detection and the dynamic-video filter chain.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{FrameSequence, RgbFrame, VideoAsset};

pub const DEFAULT_THRESHOLD: f64 = 27.0;
pub const DEFAULT_MIN_SCENE_LEN: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutParams {
    pub threshold: f64,
    /// Minimum frames between two consecutive cuts.
    pub min_scene_len: usize,
}

impl Default for CutParams {
    fn default() -> Self {
        CutParams {
            threshold: DEFAULT_THRESHOLD,
            min_scene_len: DEFAULT_MIN_SCENE_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnalysis {
    pub asset_id: String,
    /// Seconds, ascending, each strictly inside the video.
    pub cut_timestamps: Vec<f64>,
    pub scene_count: usize,
    /// Scenes per second of video.
    pub dynamism_ratio: f64,
}

/// 8-bit HSV with hue in [0, 180), matching the common OpenCV layout.
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> [u8; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let v = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = v - min;
    let s = if v == 0.0 { 0.0 } else { 255.0 * delta / v };
    let h = if delta == 0.0 {
        0.0
    } else if v == r {
        60.0 * (g - b) / delta
    } else if v == g {
        120.0 + 60.0 * (b - r) / delta
    } else {
        240.0 + 60.0 * (r - g) / delta
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    [
        (h / 2.0).round().min(179.0) as u8,
        s.round() as u8,
        v as u8,
    ]
}

fn hsv_planes(frame: &RgbFrame) -> Vec<[u8; 3]> {
    frame.pixels().map(rgb_to_hsv).collect()
}

fn hsv_difference(a: &[[u8; 3]], b: &[[u8; 3]]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let mut sums = [0u64; 3];
    for (pa, pb) in a.iter().zip(b) {
        for c in 0..3 {
            sums[c] += pa[c].abs_diff(pb[c]) as u64;
        }
    }
    let n = a.len() as f64;
    sums.iter().map(|&s| s as f64 / n).sum::<f64>() / 3.0
}

/// Mean absolute per-pixel difference, averaged over the H, S and V channels.
pub fn frame_difference(a: &RgbFrame, b: &RgbFrame) -> f64 {
    hsv_difference(&hsv_planes(a), &hsv_planes(b))
}

/// Declare a cut at frame `k` when its difference from frame `k-1` exceeds
/// the threshold and at least `min_scene_len` frames have passed since the
/// previous cut. The first cut is not length-limited.
pub fn detect_cuts(seq: &FrameSequence, params: &CutParams) -> Result<SceneAnalysis> {
    if seq.is_empty() {
        return Err(Error::InvalidInput("empty frame sequence".into()));
    }
    if !(params.threshold > 0.0) {
        return Err(Error::InvalidInput("cut threshold must be > 0".into()));
    }
    if params.min_scene_len == 0 {
        return Err(Error::InvalidInput("min_scene_len must be >= 1".into()));
    }
    let mut cut_frames = Vec::new();
    let mut prev = hsv_planes(seq.frame(0)?.as_ref());
    for k in 1..seq.len() {
        let cur = hsv_planes(seq.frame(k)?.as_ref());
        let score = hsv_difference(&prev, &cur);
        let spaced = cut_frames
            .last()
            .map_or(true, |&last: &usize| k - last >= params.min_scene_len);
        if score > params.threshold && spaced {
            cut_frames.push(k);
        }
        prev = cur;
    }
    let cut_timestamps: Vec<f64> = cut_frames.iter().map(|&k| seq.timestamp(k)).collect();
    let scene_count = cut_timestamps.len() + 1;
    let duration = if seq.duration > 0.0 {
        seq.duration
    } else {
        seq.len() as f64 / seq.fps
    };
    Ok(SceneAnalysis {
        asset_id: seq.asset_id.clone(),
        cut_timestamps,
        scene_count,
        dynamism_ratio: scene_count as f64 / duration,
    })
}

/// One step of a filter chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterRule {
    /// Reorder survivors by descending view count.
    SortByViews,
    /// Keep videos with strictly more than `min` scenes.
    MinScenes { min: usize },
    /// Keep durations within `[lo, hi]` seconds, both ends inclusive.
    DurationRange { lo: f64, hi: f64 },
    /// Keep scene/duration ratios at or below `max`.
    MaxSceneRatio { max: f64 },
    /// Keep videos whose shorter side is strictly above `min` pixels.
    MinResolution { min: u32 },
    /// Keep the first `cap` survivors of every category.
    PerCategoryCap { cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    SortByViews,
    MinScenes,
    DurationRange,
    MaxSceneRatio,
    MinResolution,
    PerCategoryCap,
}

impl FilterRule {
    pub fn kind(&self) -> FilterKind {
        match self {
            FilterRule::SortByViews => FilterKind::SortByViews,
            FilterRule::MinScenes { .. } => FilterKind::MinScenes,
            FilterRule::DurationRange { .. } => FilterKind::DurationRange,
            FilterRule::MaxSceneRatio { .. } => FilterKind::MaxSceneRatio,
            FilterRule::MinResolution { .. } => FilterKind::MinResolution,
            FilterRule::PerCategoryCap { .. } => FilterKind::PerCategoryCap,
        }
    }

    pub fn needs_analysis(&self) -> bool {
        matches!(
            self,
            FilterRule::MinScenes { .. } | FilterRule::MaxSceneRatio { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        match *self {
            FilterRule::DurationRange { lo, hi } if !(lo < hi) => {
                bad(format!("duration range needs lo < hi, got [{lo}, {hi}]"))
            }
            FilterRule::MaxSceneRatio { max } if !(max >= 0.0) => {
                bad(format!("scene ratio cap must be >= 0, got {max}"))
            }
            _ => Ok(()),
        }
    }

    fn name(&self) -> &'static str {
        match self.kind() {
            FilterKind::SortByViews => "views",
            FilterKind::MinScenes => "scene_count",
            FilterKind::DurationRange => "duration",
            FilterKind::MaxSceneRatio => "scene_ratio",
            FilterKind::MinResolution => "min_dimension",
            FilterKind::PerCategoryCap => "category_rank",
        }
    }
}

/// Scenes greater than 2, duration 5-180 s, ratio at most 0.5, shorter side above 480.
pub fn standard_chain() -> Vec<FilterRule> {
    vec![
        FilterRule::MinScenes { min: 2 },
        FilterRule::DurationRange { lo: 5.0, hi: 180.0 },
        FilterRule::MaxSceneRatio { max: 0.5 },
        FilterRule::MinResolution { min: 480 },
    ]
}

/// The standard chain bracketed by view-count ordering and a per-category cap of 50.
pub fn shorts_chain() -> Vec<FilterRule> {
    let mut chain = vec![FilterRule::SortByViews];
    chain.extend(standard_chain());
    chain.push(FilterRule::PerCategoryCap { cap: 50 });
    chain
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub asset_id: String,
    pub accepted: bool,
    pub failed_rule: Option<FilterKind>,
    pub measurements: BTreeMap<String, f64>,
}

/// An asset together with its scene analysis, when one was computed.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub asset: &'a VideoAsset,
    pub analysis: Option<&'a SceneAnalysis>,
}

/// Run `chain` over the whole corpus. Rules apply in order to the current
/// survivors; the first rule an asset fails is recorded. Verdicts come back
/// in input order.
pub fn apply_filters(candidates: &[Candidate<'_>], chain: &[FilterRule]) -> Result<Vec<FilterVerdict>> {
    for rule in chain {
        rule.validate()?;
    }
    let mut verdicts: Vec<FilterVerdict> = candidates
        .iter()
        .map(|c| FilterVerdict {
            asset_id: c.asset.id.clone(),
            accepted: true,
            failed_rule: None,
            measurements: BTreeMap::new(),
        })
        .collect();
    let mut survivors: Vec<usize> = (0..candidates.len()).collect();

    for rule in chain {
        match rule {
            FilterRule::SortByViews => {
                for &i in &survivors {
                    let a = candidates[i].asset;
                    let views = a
                        .view_count
                        .ok_or_else(|| Error::MissingViewCount(a.id.clone()))?;
                    verdicts[i].measurements.insert(rule.name().into(), views as f64);
                }
                // stable: ties keep input order
                survivors.sort_by_key(|&i| std::cmp::Reverse(candidates[i].asset.view_count));
            }
            FilterRule::PerCategoryCap { cap } => {
                let mut seen: HashMap<Option<&str>, usize> = HashMap::new();
                survivors.retain(|&i| {
                    let rank = seen
                        .entry(candidates[i].asset.category.as_deref())
                        .or_insert(0);
                    *rank += 1;
                    verdicts[i]
                        .measurements
                        .insert(rule.name().into(), *rank as f64);
                    if *rank > *cap {
                        reject(&mut verdicts[i], rule.kind());
                        false
                    } else {
                        true
                    }
                });
            }
            _ => {
                let mut kept = Vec::with_capacity(survivors.len());
                for &i in &survivors {
                    let (value, pass) = evaluate(rule, &candidates[i])?;
                    verdicts[i].measurements.insert(rule.name().into(), value);
                    if pass {
                        kept.push(i);
                    } else {
                        reject(&mut verdicts[i], rule.kind());
                    }
                }
                survivors = kept;
            }
        }
    }
    Ok(verdicts)
}

fn reject(v: &mut FilterVerdict, kind: FilterKind) {
    v.accepted = false;
    v.failed_rule = Some(kind);
}

fn evaluate(rule: &FilterRule, c: &Candidate<'_>) -> Result<(f64, bool)> {
    let analysis = || {
        c.analysis
            .ok_or_else(|| Error::MissingAnalysis(c.asset.id.clone()))
    };
    Ok(match *rule {
        FilterRule::MinScenes { min } => {
            let n = analysis()?.scene_count;
            (n as f64, n > min)
        }
        FilterRule::DurationRange { lo, hi } => {
            let d = c.asset.duration;
            (d, d >= lo && d <= hi)
        }
        FilterRule::MaxSceneRatio { max } => {
            let a = analysis()?;
            // ratio against the manifest duration, so it agrees with DurationRange
            let ratio = if c.asset.duration > 0.0 {
                a.scene_count as f64 / c.asset.duration
            } else {
                a.dynamism_ratio
            };
            (ratio, ratio <= max)
        }
        FilterRule::MinResolution { min } => {
            let d = c.asset.width.min(c.asset.height);
            (d as f64, d > min)
        }
        FilterRule::SortByViews | FilterRule::PerCategoryCap { .. } => {
            unreachable!("global rules are handled by apply_filters")
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Source;

    fn seq_of(frames: Vec<RgbFrame>) -> FrameSequence {
        let n = frames.len() as f64;
        FrameSequence::from_frames("v", 1.0, n, frames).unwrap()
    }

    fn black() -> RgbFrame {
        RgbFrame::filled(4, 4, [0, 0, 0])
    }

    fn white() -> RgbFrame {
        RgbFrame::filled(4, 4, [255, 255, 255])
    }

    #[test]
    fn hsv_reference_points() {
        assert_eq!(rgb_to_hsv([0, 0, 0]), [0, 0, 0]);
        assert_eq!(rgb_to_hsv([255, 255, 255]), [0, 0, 255]);
        assert_eq!(rgb_to_hsv([255, 0, 0]), [0, 255, 255]);
        assert_eq!(rgb_to_hsv([0, 255, 0]), [60, 255, 255]);
        assert_eq!(rgb_to_hsv([0, 0, 255]), [120, 255, 255]);
    }

    #[test]
    fn identical_frames_have_no_cuts() {
        let a = detect_cuts(&seq_of(vec![black(); 30]), &CutParams::default()).unwrap();
        assert!(a.cut_timestamps.is_empty());
        assert_eq!(a.scene_count, 1);
    }

    #[test]
    fn black_to_white_is_one_cut() {
        // H and S stay 0, V jumps by 255: score = 255 / 3 = 85
        assert!((frame_difference(&black(), &white()) - 85.0).abs() < 1e-12);
        let mut frames = vec![black(); 20];
        frames.extend(vec![white(); 20]);
        let a = detect_cuts(&seq_of(frames), &CutParams::default()).unwrap();
        assert_eq!(a.cut_timestamps, vec![20.0]);
        assert_eq!(a.scene_count, 2);
    }

    #[test]
    fn min_scene_len_suppresses_every_other_candidate() {
        let frames: Vec<RgbFrame> = (0..12)
            .map(|i| if i % 2 == 0 { black() } else { white() })
            .collect();
        let params = CutParams {
            threshold: 27.0,
            min_scene_len: 2,
        };
        let a = detect_cuts(&seq_of(frames), &params).unwrap();
        // brute force: every k in 1..12 is a candidate; keep k if >= 2 after the last kept
        let mut expected = Vec::new();
        for k in 1..12usize {
            if expected.last().map_or(true, |&l: &usize| k - l >= 2) {
                expected.push(k);
            }
        }
        let expected: Vec<f64> = expected.into_iter().map(|k| k as f64).collect();
        assert_eq!(a.cut_timestamps, expected);
        assert_eq!(a.cut_timestamps, vec![1.0, 3.0, 5.0, 7.0, 9.0, 11.0]);
    }

    #[test]
    fn empty_and_bad_params() {
        assert!(detect_cuts(&seq_of(vec![black()]), &CutParams { threshold: 0.0, min_scene_len: 1 }).is_err());
        assert!(detect_cuts(&seq_of(vec![black()]), &CutParams { threshold: 1.0, min_scene_len: 0 }).is_err());
    }

    fn asset(id: &str, duration: f64, w: u32, h: u32) -> VideoAsset {
        VideoAsset {
            id: id.into(),
            source: Source::Vidal,
            uri: format!("{id}.mp4"),
            duration,
            width: w,
            height: h,
            view_count: Some(0),
            category: Some("c".into()),
        }
    }

    fn analysis(id: &str, scenes: usize, duration: f64) -> SceneAnalysis {
        SceneAnalysis {
            asset_id: id.into(),
            cut_timestamps: (1..scenes).map(|i| i as f64).collect(),
            scene_count: scenes,
            dynamism_ratio: scenes as f64 / duration,
        }
    }

    fn run_one(a: &VideoAsset, s: &SceneAnalysis, chain: &[FilterRule]) -> FilterVerdict {
        apply_filters(
            &[Candidate {
                asset: a,
                analysis: Some(s),
            }],
            chain,
        )
        .unwrap()
        .remove(0)
    }

    #[test]
    fn two_scenes_fail_min_scenes() {
        let a = asset("a", 60.0, 720, 1280);
        let v = run_one(&a, &analysis("a", 2, 60.0), &standard_chain());
        assert_eq!(v.failed_rule, Some(FilterKind::MinScenes));
        assert!(!v.accepted);
    }

    #[test]
    fn short_video_fails_duration() {
        let a = asset("a", 4.0, 720, 1280);
        let v = run_one(&a, &analysis("a", 3, 4.0), &standard_chain());
        assert_eq!(v.failed_rule, Some(FilterKind::DurationRange));
    }

    #[test]
    fn dense_cuts_fail_ratio() {
        let a = asset("a", 15.0, 720, 1280);
        let v = run_one(&a, &analysis("a", 10, 15.0), &standard_chain());
        assert_eq!(v.failed_rule, Some(FilterKind::MaxSceneRatio));
        assert!((v.measurements["scene_ratio"] - 10.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn empty_chain_accepts_all() {
        let a = asset("a", 1.0, 1, 1);
        let v = apply_filters(&[Candidate { asset: &a, analysis: None }], &[]).unwrap();
        assert!(v[0].accepted);
    }

    #[test]
    fn category_cap_keeps_top_views() {
        let assets: Vec<VideoAsset> = (0..120)
            .map(|i| {
                let mut a = asset(&format!("v{i}"), 60.0, 720, 1280);
                a.view_count = Some((i * 7919 % 1000) as u64);
                a
            })
            .collect();
        let cands: Vec<Candidate> = assets
            .iter()
            .map(|a| Candidate { asset: a, analysis: None })
            .collect();
        let chain = [FilterRule::SortByViews, FilterRule::PerCategoryCap { cap: 50 }];
        let v = apply_filters(&cands, &chain).unwrap();
        let kept: Vec<u64> = v
            .iter()
            .zip(&assets)
            .filter(|(v, _)| v.accepted)
            .map(|(_, a)| a.view_count.unwrap())
            .collect();
        assert_eq!(kept.len(), 50);
        let mut all: Vec<u64> = assets.iter().map(|a| a.view_count.unwrap()).collect();
        all.sort_unstable_by(|a, b| b.cmp(a));
        let min_kept = *kept.iter().min().unwrap();
        assert!(min_kept >= all[49]);
        assert!(v
            .iter()
            .filter(|v| !v.accepted)
            .all(|v| v.failed_rule == Some(FilterKind::PerCategoryCap)));
    }

    #[test]
    fn missing_inputs_are_errors() {
        let mut a = asset("a", 10.0, 720, 1280);
        let c = [Candidate { asset: &a, analysis: None }];
        assert!(matches!(
            apply_filters(&c, &[FilterRule::MinScenes { min: 2 }]),
            Err(Error::MissingAnalysis(_))
        ));
        a.view_count = None;
        let c = [Candidate { asset: &a, analysis: None }];
        assert!(matches!(
            apply_filters(&c, &[FilterRule::SortByViews]),
            Err(Error::MissingViewCount(_))
        ));
        assert!(apply_filters(&c, &[FilterRule::DurationRange { lo: 5.0, hi: 5.0 }]).is_err());
    }
}
