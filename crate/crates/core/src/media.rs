//! Manifest loading and frame extraction.
//!
//! Decoding is delegated to an external command; frames come back as
//! `frame_%06d` image files in a scratch directory and are loaded lazily, one
//! clip at a time.

use std::borrow::Cow;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tempfile::TempDir;

use crate::error::{Error, Result};
use crate::jsonl;

/// Env var overriding the frame scratch directory.
pub const TMPDIR_ENV: &str = "VIDFORGE_TMPDIR";

/// The ten source datasets the video pool is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "HD-VILA", alias = "HD-VILA-100M")]
    HdVila,
    #[serde(rename = "InternVid", alias = "InternVid-10M")]
    InternVid,
    #[serde(rename = "VidOR")]
    VidOr,
    #[serde(rename = "VIDAL")]
    Vidal,
    #[serde(rename = "YouCook2")]
    YouCook2,
    #[serde(rename = "Charades")]
    Charades,
    #[serde(rename = "ActivityNet")]
    ActivityNet,
    #[serde(rename = "Kinetics-700")]
    Kinetics700,
    #[serde(rename = "SthSth-v2", alias = "Sthsth2")]
    SthSthV2,
    #[serde(rename = "Ego4D", alias = "Ego4d")]
    Ego4D,
}

impl Source {
    pub const ALL: [Source; 10] = [
        Source::HdVila,
        Source::InternVid,
        Source::VidOr,
        Source::Vidal,
        Source::YouCook2,
        Source::Charades,
        Source::ActivityNet,
        Source::Kinetics700,
        Source::SthSthV2,
        Source::Ego4D,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Source::HdVila => "HD-VILA",
            Source::InternVid => "InternVid",
            Source::VidOr => "VidOR",
            Source::Vidal => "VIDAL",
            Source::YouCook2 => "YouCook2",
            Source::Charades => "Charades",
            Source::ActivityNet => "ActivityNet",
            Source::Kinetics700 => "Kinetics-700",
            Source::SthSthV2 => "SthSth-v2",
            Source::Ego4D => "Ego4D",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidInput(format!("unknown source dataset `{s}`")))
    }
}

/// One source video and its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAsset {
    pub id: String,
    pub source: Source,
    pub uri: String,
    /// Seconds.
    pub duration: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub view_count: Option<u64>,
    #[serde(default)]
    pub category: Option<String>,
}

impl VideoAsset {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "duration must be >= 0, got {}",
                self.duration
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Line shape before invariant checks, so bad values become rejections
/// instead of parse errors.
#[derive(Deserialize)]
struct RawAsset {
    id: String,
    source: String,
    uri: String,
    duration: f64,
    width: i64,
    height: i64,
    #[serde(default)]
    view_count: Option<i64>,
    #[serde(default)]
    category: Option<String>,
}

impl RawAsset {
    fn into_asset(self) -> std::result::Result<VideoAsset, String> {
        let source: Source = self.source.parse().map_err(|e: Error| e.to_string())?;
        let dim = |v: i64, name: &str| {
            u32::try_from(v)
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| format!("{name} must be a positive integer, got {v}"))
        };
        let view_count = match self.view_count {
            Some(v) if v < 0 => return Err(format!("view_count must be >= 0, got {v}")),
            Some(v) => Some(v as u64),
            None => None,
        };
        let asset = VideoAsset {
            id: self.id,
            source,
            uri: self.uri,
            duration: self.duration,
            width: dim(self.width, "width")?,
            height: dim(self.height, "height")?,
            view_count,
            category: self.category,
        };
        asset.validate().map_err(|e| e.to_string())?;
        Ok(asset)
    }
}

/// A manifest line that parsed but failed the asset invariants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct Manifest {
    pub assets: Vec<VideoAsset>,
    pub rejections: Vec<Rejection>,
}

/// Load a JSONL manifest. Unknown fields are ignored; lines that violate
/// asset invariants are reported in `rejections`.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let mut out = Manifest::default();
    for (line, text) in jsonl::complete_lines_including_tail(path)? {
        let raw: RawAsset = serde_json::from_str(&text).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let id = raw.id.clone();
        match raw.into_asset() {
            Ok(a) => out.assets.push(a),
            Err(reason) => out.rejections.push(Rejection { line, id, reason }),
        }
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, assets: &[VideoAsset]) -> Result<()> {
    jsonl::write_atomic(path, assets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub fps: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec { fps: 1.0 }
    }
}

impl SamplingSpec {
    pub fn new(fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps must be > 0, got {fps}")));
        }
        Ok(SamplingSpec { fps })
    }

    /// Frames the decoder is expected to emit for `duration` seconds.
    pub fn expected_frames(&self, duration: f64) -> usize {
        expected_frame_count(duration, self.fps)
    }
}

/// `ceil(duration * fps)`, at least one frame, tolerant of float noise.
pub fn expected_frame_count(duration: f64, fps: f64) -> usize {
    let n = (duration * fps - 1e-9).ceil();
    if n < 1.0 {
        1
    } else {
        n as usize
    }
}

/// An H x W x 3 RGB byte grid.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl fmt::Debug for RgbFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RgbFrame({}x{})", self.width, self.height)
    }
}

impl RgbFrame {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        RgbFrame {
            width,
            height,
            data,
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Frame {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.into_rgb8();
        Ok(RgbFrame {
            width: rgb.width(),
            height: rgb.height(),
            data: rgb.into_raw(),
        })
    }

    /// PNG bytes, used for attaching frames to annotation requests.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        image::write_buffer_with_format(
            &mut std::io::Cursor::new(&mut out),
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .expect("in-memory PNG encoding of a valid RGB buffer");
        out
    }
}

#[derive(Debug, Clone)]
enum FrameStore {
    InMemory(Vec<RgbFrame>),
    OnDisk {
        // Keeps the scratch directory alive as long as any clone of the sequence.
        _scratch: Option<Arc<TempDir>>,
        paths: Vec<PathBuf>,
    },
}

/// Frames sampled from one asset at a fixed rate. Frame `k` sits at `k / fps`.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub asset_id: String,
    pub fps: f64,
    /// Seconds covered by the source video.
    pub duration: f64,
    pub width: u32,
    pub height: u32,
    store: FrameStore,
}

impl FrameSequence {
    pub fn from_frames(
        asset_id: impl Into<String>,
        fps: f64,
        duration: f64,
        frames: Vec<RgbFrame>,
    ) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("frame sequence is empty".into()))?;
        let (width, height) = (first.width, first.height);
        if let Some(bad) = frames
            .iter()
            .position(|f| f.width != width || f.height != height)
        {
            return Err(Error::InvalidInput(format!(
                "frame {bad} is {:?}, expected {width}x{height}",
                frames[bad]
            )));
        }
        SamplingSpec::new(fps)?;
        Ok(FrameSequence {
            asset_id: asset_id.into(),
            fps,
            duration,
            width,
            height,
            store: FrameStore::InMemory(frames),
        })
    }

    /// Wrap a directory of `frame_*` files. Dimensions are checked from the
    /// file headers without decoding pixels.
    pub fn from_dir(
        asset_id: impl Into<String>,
        fps: f64,
        duration: f64,
        dir: &Path,
        scratch: Option<Arc<TempDir>>,
    ) -> Result<Self> {
        let asset_id = asset_id.into();
        let paths = list_frame_files(dir)?;
        let first = paths
            .first()
            .ok_or_else(|| Error::NoFrames(asset_id.clone()))?;
        let (width, height) = image_dims(first)?;
        for p in &paths[1..] {
            let dims = image_dims(p)?;
            if dims != (width, height) {
                return Err(Error::Frame {
                    path: p.clone(),
                    message: format!("is {}x{}, expected {width}x{height}", dims.0, dims.1),
                });
            }
        }
        Ok(FrameSequence {
            asset_id,
            fps,
            duration,
            width,
            height,
            store: FrameStore::OnDisk {
                _scratch: scratch,
                paths,
            },
        })
    }

    pub fn len(&self) -> usize {
        match &self.store {
            FrameStore::InMemory(f) => f.len(),
            FrameStore::OnDisk { paths, .. } => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        index as f64 / self.fps
    }

    pub fn timestamps(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.timestamp(i)).collect()
    }

    pub fn frame(&self, index: usize) -> Result<Cow<'_, RgbFrame>> {
        match &self.store {
            FrameStore::InMemory(f) => f
                .get(index)
                .map(Cow::Borrowed)
                .ok_or_else(|| Error::InvalidInput(format!("frame index {index} out of range"))),
            FrameStore::OnDisk { paths, .. } => {
                let p = paths.get(index).ok_or_else(|| {
                    Error::InvalidInput(format!("frame index {index} out of range"))
                })?;
                RgbFrame::load(p).map(Cow::Owned)
            }
        }
    }

    /// Indices of frames whose timestamp falls in `[start, end)`.
    pub fn indices_in(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let eps = 1e-9;
        let lo = ((start * self.fps) - eps).ceil().max(0.0) as usize;
        let hi = ((end * self.fps) - eps).ceil().max(0.0) as usize;
        lo.min(self.len())..hi.min(self.len())
    }

    /// Decode the frames of one clip.
    pub fn clip(&self, start: f64, end: f64) -> Result<Vec<(f64, RgbFrame)>> {
        self.indices_in(start, end)
            .map(|i| Ok((self.timestamp(i), self.frame(i)?.into_owned())))
            .collect()
    }
}

fn image_dims(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|e| Error::Frame {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("frame_"))
        })
        .collect();
    // frame_%06d names sort in timestamp order
    paths.sort();
    Ok(paths)
}

/// Decoder command template with `{input}`, `{outdir}` and `{fps}` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderCommand {
    argv: Vec<String>,
}

impl DecoderCommand {
    pub const PLACEHOLDERS: [&'static str; 3] = ["{input}", "{outdir}", "{fps}"];

    pub fn parse(template: &str) -> Result<Self> {
        let argv = shell_words::split(template)
            .map_err(|e| Error::config("decoder.command", e.to_string()))?;
        if argv.is_empty() {
            return Err(Error::config("decoder.command", "empty command"));
        }
        for ph in Self::PLACEHOLDERS {
            if !argv.iter().any(|a| a.contains(ph)) {
                return Err(Error::config(
                    "decoder.command",
                    format!("missing placeholder {ph}"),
                ));
            }
        }
        Ok(DecoderCommand { argv })
    }

    fn render(&self, input: &str, outdir: &Path, fps: f64) -> Vec<String> {
        let outdir = outdir.to_string_lossy();
        let fps = format_fps(fps);
        self.argv
            .iter()
            .map(|a| {
                a.replace("{input}", input)
                    .replace("{outdir}", &outdir)
                    .replace("{fps}", &fps)
            })
            .collect()
    }
}

fn format_fps(fps: f64) -> String {
    if fps.fract() == 0.0 {
        format!("{}", fps as u64)
    } else {
        format!("{fps}")
    }
}

/// Scratch root: `$VIDFORGE_TMPDIR` if set, else the system temp dir.
pub fn scratch_root() -> PathBuf {
    std::env::var_os(TMPDIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir)
}

/// Run the decoder for one asset and wrap its output frames.
pub fn extract_frames(
    asset: &VideoAsset,
    spec: &SamplingSpec,
    decoder: &DecoderCommand,
) -> Result<FrameSequence> {
    let root = scratch_root();
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let scratch = tempfile::Builder::new()
        .prefix("vidforge-frames-")
        .tempdir_in(&root)
        .map_err(|e| Error::io(&root, e))?;
    let argv = decoder.render(&asset.uri, scratch.path(), spec.fps);
    log::debug!("decoding {}: {:?}", asset.id, argv);
    let output = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .output()
        .map_err(|e| Error::Decoder {
            status: format!("spawn {}", argv[0]),
            stderr: e.to_string(),
        })?;
    if !output.status.success() {
        return Err(Error::Decoder {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    let dir = scratch.path().to_path_buf();
    let seq = FrameSequence::from_dir(
        asset.id.clone(),
        spec.fps,
        asset.duration,
        &dir,
        Some(Arc::new(scratch)),
    )?;
    let expected = spec.expected_frames(asset.duration);
    if seq.len().abs_diff(expected) > 1 {
        log::warn!(
            "{}: decoder emitted {} frames, expected {} (+-1)",
            asset.id,
            seq.len(),
            expected
        );
    }
    Ok(seq)
}
