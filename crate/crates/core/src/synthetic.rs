//! Synthetic videos for running the pipeline without real media.
//!
//! A synthetic video is a small JSON document: frame size, duration, and a
//! list of timed segments each drawn with a solid color or a block pattern.
//! `vidforge synth-render` turns one into `frame_%06d.ppm` files, so it can
//! stand in for a real decoder command.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{expected_frame_count, FrameSequence, RgbFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Solid { rgb: [u8; 3] },
    /// Square blocks of side `block` cycling through `colors` in raster order.
    Blocks { block: u32, colors: Vec<[u8; 3]> },
}

impl Pattern {
    fn pixel(&self, x: u32, y: u32, width: u32) -> [u8; 3] {
        match self {
            Pattern::Solid { rgb } => *rgb,
            Pattern::Blocks { block, colors } => {
                if colors.is_empty() {
                    return [0; 3];
                }
                let b = (*block).max(1);
                let per_row = width.div_ceil(b);
                let idx = (y / b) * per_row + x / b;
                colors[idx as usize % colors.len()]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Segment start in seconds; it lasts until the next segment starts.
    pub start: f64,
    pub pattern: Pattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    pub width: u32,
    pub height: u32,
    pub duration: f64,
    pub segments: Vec<Segment>,
}

impl SyntheticVideo {
    pub fn solid(width: u32, height: u32, duration: f64, rgb: [u8; 3]) -> Self {
        SyntheticVideo {
            width,
            height,
            duration,
            segments: vec![Segment {
                start: 0.0,
                pattern: Pattern::Solid { rgb },
            }],
        }
    }

    /// Solid-color scenes with hard cuts at the given times.
    pub fn with_cuts(width: u32, height: u32, duration: f64, cuts: &[f64]) -> Self {
        let palette = PALETTE;
        let mut segments = vec![Segment {
            start: 0.0,
            pattern: Pattern::Solid { rgb: palette[0] },
        }];
        for (i, &c) in cuts.iter().enumerate() {
            segments.push(Segment {
                start: c,
                pattern: Pattern::Solid {
                    rgb: palette[(i + 1) % palette.len()],
                },
            });
        }
        SyntheticVideo {
            width,
            height,
            duration,
            segments,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: SyntheticVideo = serde_json::from_str(&text)?;
        v.validate()?;
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("synthetic video needs positive size".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidInput("synthetic video needs duration > 0".into()));
        }
        if self.segments.is_empty() {
            return Err(Error::InvalidInput("synthetic video has no segments".into()));
        }
        Ok(())
    }

    fn pattern_at(&self, t: f64) -> &Pattern {
        &self
            .segments
            .iter()
            .rev()
            .find(|s| s.start <= t + 1e-9)
            .unwrap_or(&self.segments[0])
            .pattern
    }

    pub fn render_frame(&self, t: f64) -> RgbFrame {
        let pattern = self.pattern_at(t);
        let mut data = Vec::with_capacity(self.width as usize * self.height as usize * 3);
        for y in 0..self.height {
            for x in 0..self.width {
                data.extend_from_slice(&pattern.pixel(x, y, self.width));
            }
        }
        RgbFrame {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn frame_count(&self, fps: f64) -> usize {
        expected_frame_count(self.duration, fps)
    }

    /// Write `frame_000001.ppm`, ... (1-based, like common decoders) into `outdir`.
    pub fn render_to_dir(&self, outdir: &Path, fps: f64) -> Result<usize> {
        fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
        let n = self.frame_count(fps);
        for k in 0..n {
            let frame = self.render_frame(k as f64 / fps);
            let path = outdir.join(format!("frame_{:06}.ppm", k + 1));
            write_ppm(&path, &frame)?;
        }
        Ok(n)
    }

    pub fn to_sequence(&self, asset_id: &str, fps: f64) -> Result<FrameSequence> {
        let frames = (0..self.frame_count(fps))
            .map(|k| self.render_frame(k as f64 / fps))
            .collect();
        FrameSequence::from_frames(asset_id, fps, self.duration, frames)
    }
}

/// Colors far apart in hue and value, so neighbouring scenes always differ
/// well above the default cut threshold.
pub const PALETTE: [[u8; 3]; 6] = [
    [0, 0, 0],
    [255, 255, 255],
    [200, 30, 30],
    [20, 40, 220],
    [240, 220, 20],
    [20, 200, 60],
];

pub fn write_ppm(path: &Path, frame: &RgbFrame) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(f, "P6\n{} {}\n255\n", frame.width, frame.height).map_err(|e| Error::io(path, e))?;
    f.write_all(&frame.data).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = SyntheticVideo {
            width: 7,
            height: 5,
            duration: 1.0,
            segments: vec![Segment {
                start: 0.0,
                pattern: Pattern::Blocks {
                    block: 2,
                    colors: vec![[1, 2, 3], [250, 0, 9]],
                },
            }],
        };
        let frame = v.render_frame(0.0);
        let p = dir.path().join("frame_000001.ppm");
        write_ppm(&p, &frame).unwrap();
        assert_eq!(RgbFrame::load(&p).unwrap(), frame);
    }

    #[test]
    fn frame_counts_follow_ceiling() {
        let dir = tempfile::tempdir().unwrap();
        let v = SyntheticVideo::solid(2, 2, 0.5, [9, 9, 9]);
        assert_eq!(v.render_to_dir(dir.path(), 1.0).unwrap(), 1);
        let v = SyntheticVideo::solid(2, 2, 95.0, [9, 9, 9]);
        assert_eq!(v.frame_count(1.0), 95);
    }

    #[test]
    fn cuts_switch_patterns() {
        let v = SyntheticVideo::with_cuts(2, 2, 10.0, &[4.0]);
        assert_ne!(v.render_frame(3.0), v.render_frame(4.0));
        assert_eq!(v.render_frame(4.0), v.render_frame(9.0));
    }
}
