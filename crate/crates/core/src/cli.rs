//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{BackendKind, PipelineConfig};
use crate::error::{Error, Result};
use crate::media::{write_manifest, Source, VideoAsset};
use crate::pipeline::Pipeline;
use crate::repplan::{build_plan, max_frames_under_budget, Convention, RepConfig};
use crate::synthetic::SyntheticVideo;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_STAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vidforge", version, about = "Video instruction-data synthesis pipeline")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect scenes and apply the filter chains.
    Filter(RunArgs),
    /// Generate level-1/2/3 captions for accepted videos.
    Caption(RunArgs),
    /// Generate, filter and convert question-answer pairs.
    Qa(RunArgs),
    /// Bind captions and pairs into the instruction dataset.
    Assemble(RunArgs),
    /// Corpus statistics of the assembled dataset.
    Stats(RunArgs),
    /// All stages in order, resuming completed work.
    Run(RunArgs),
    /// Token counts and slow/fast layout for a video representation.
    PlanTokens(PlanArgs),
    /// Write a small synthetic corpus with a config that uses the mock backend.
    DemoCorpus(DemoArgs),
    /// Render a synthetic video to numbered frames; usable as a decoder command.
    #[command(hide = true)]
    SynthRender(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fps: Option<f64>,
    /// mock or remote
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<BackendKind>,
}

fn parse_backend(s: &str) -> std::result::Result<BackendKind, String> {
    match s {
        "mock" => Ok(BackendKind::Mock),
        "remote" => Ok(BackendKind::Remote),
        _ => Err(format!("unknown backend `{s}` (expected mock or remote)")),
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long = "T")]
    pub frames: u64,
    #[arg(long = "M")]
    pub tokens_per_frame: u64,
    #[arg(long = "s", default_value_t = 1)]
    pub slow_stride: u64,
    #[arg(long = "p", default_value_t = 2)]
    pub pool_stride: u64,
    /// literal, grid, or both
    #[arg(long, default_value = "both")]
    pub convention: String,
    /// Also report the largest frame count fitting this many tokens.
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Directory to create.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub outdir: PathBuf,
    #[arg(long)]
    pub fps: f64,
}

impl RunArgs {
    pub fn load_config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
        if let Some(m) = &self.manifest {
            cfg.manifest = cwd.join(m);
        }
        if let Some(o) = &self.output {
            cfg.output_dir = cwd.join(o);
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.fps {
            cfg.sampling.fps = f;
        }
        if let Some(b) = self.backend {
            cfg.backend.kind = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
pub struct PlanRow {
    pub convention: Convention,
    pub tokens_slow: u64,
    pub tokens_fast: u64,
    pub slow_frames: usize,
    pub fast_frames: usize,
    pub total: u64,
    pub layout: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_frames: Option<u64>,
}

pub fn plan_rows(args: &PlanArgs) -> Result<Vec<PlanRow>> {
    let conventions: Vec<Convention> = if args.convention.eq_ignore_ascii_case("both") {
        Convention::ALL.to_vec()
    } else {
        vec![args.convention.parse()?]
    };
    let cfg = RepConfig::new(args.frames, args.tokens_per_frame, args.slow_stride, args.pool_stride);
    conventions
        .into_iter()
        .map(|conv| {
            let plan = build_plan(&cfg, conv)?;
            let max_frames = args
                .budget
                .map(|b| {
                    max_frames_under_budget(cfg.tokens_per_frame, cfg.slow_stride, cfg.pool_stride, b, conv)
                })
                .transpose()?;
            Ok(PlanRow {
                convention: conv,
                tokens_slow: plan.tokens_slow,
                tokens_fast: plan.tokens_fast,
                slow_frames: plan.slow_indices.len(),
                fast_frames: plan.fast_indices.len(),
                total: plan.total,
                layout: plan.layout(),
                max_frames,
            })
        })
        .collect()
}

fn print_plan(rows: &[PlanRow]) {
    println!(
        "{:<8} {:>10} {:>10} {:>6} {:>6} {:>8} {:>10}",
        "conv", "tok/slow", "tok/fast", "slow", "fast", "total", "max T"
    );
    for r in rows {
        println!(
            "{:<8} {:>10} {:>10} {:>6} {:>6} {:>8} {:>10}",
            r.convention.name(),
            r.tokens_slow,
            r.tokens_fast,
            r.slow_frames,
            r.fast_frames,
            r.total,
            r.max_frames.map_or("-".to_string(), |t| t.to_string())
        );
    }
    if let Some(r) = rows.first() {
        println!("layout  {}", r.layout);
    }
}

/// Durations and cut times of the demo videos.
pub const DEMO_VIDEOS: [(&str, Source, f64, &[f64]); 3] = [
    ("demo-short", Source::Charades, 10.0, &[3.0, 6.0]),
    ("demo-medium", Source::YouCook2, 35.0, &[5.0, 12.0, 20.0, 28.0]),
    ("demo-long", Source::ActivityNet, 95.0, &[10.0, 25.0, 40.0, 60.0, 80.0]),
];
pub const DEMO_SIZE: u32 = 488;

/// Write synthetic videos, a manifest and a mock-backend config into `dir`.
/// `exe` is the binary that provides `synth-render`. Returns the config path.
pub fn write_demo_corpus(dir: &Path, exe: &Path, seed: u64) -> Result<PathBuf> {
    let videos = dir.join("videos");
    std::fs::create_dir_all(&videos).map_err(|e| Error::io(&videos, e))?;
    let mut assets = Vec::new();
    for (id, source, duration, cuts) in DEMO_VIDEOS {
        let spec = SyntheticVideo::with_cuts(DEMO_SIZE, DEMO_SIZE, duration, cuts);
        let rel = format!("videos/{id}.json");
        spec.save(&dir.join(&rel))?;
        assets.push(VideoAsset {
            id: id.into(),
            source,
            uri: rel,
            duration,
            width: DEMO_SIZE,
            height: DEMO_SIZE,
            view_count: None,
            category: None,
        });
    }
    write_manifest(&dir.join("manifest.jsonl"), &assets)?;

    let mut cfg = PipelineConfig {
        manifest: "manifest.jsonl".into(),
        output_dir: "out".into(),
        seed,
        workers: 3,
        ..Default::default()
    };
    cfg.sampling.decoder = format!(
        "{} synth-render --input {{input}} --outdir {{outdir}} --fps {{fps}}",
        shell_words::quote(&exe.to_string_lossy())
    );
    let path = dir.join("vidforge.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce()) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        text();
    }
    Ok(())
}

fn print_kv<T: Serialize>(value: &T) {
    let v = serde_json::to_value(value).unwrap_or_default();
    if let Some(map) = v.as_object() {
        for (k, v) in map {
            match v {
                serde_json::Value::Object(_) | serde_json::Value::Array(_) => {}
                other => println!("{k:<20} {other}"),
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let json = cli.json;
    match &cli.command {
        Command::Filter(a) => {
            let s = Pipeline::new(a.load_config()?)?.run_filter()?;
            emit(json, &s, || print_kv(&s))
        }
        Command::Caption(a) => {
            let s = Pipeline::new(a.load_config()?)?.run_caption()?;
            emit(json, &s, || print_kv(&s))
        }
        Command::Qa(a) => {
            let s = Pipeline::new(a.load_config()?)?.run_qa()?;
            emit(json, &s, || print_kv(&s))
        }
        Command::Assemble(a) => {
            let s = Pipeline::new(a.load_config()?)?.run_assemble()?;
            emit(json, &s, || print_kv(&s))
        }
        Command::Stats(a) => {
            let s = Pipeline::new(a.load_config()?)?.run_stats()?;
            emit(json, &s, || print!("{}", s.to_table()))
        }
        Command::Run(a) => {
            let p = Pipeline::new(a.load_config()?)?;
            let s = p.run()?;
            emit(json, &s, || {
                println!("filter   {} of {} accepted", s.filter.accepted, s.filter.assets);
                println!(
                    "caption  {} videos, {} new captions",
                    s.caption.videos, s.caption.new_captions
                );
                println!(
                    "qa       {} open-ended, {} multiple-choice, {} duplicates and {} hedged answers dropped",
                    s.qa.open_ended, s.qa.multi_choice, s.qa.dropped_duplicate, s.qa.dropped_blacklist
                );
                println!(
                    "dataset  {} records in {}",
                    s.assemble.records,
                    p.paths().dataset().display()
                );
            })
        }
        Command::PlanTokens(a) => {
            let rows = plan_rows(a)?;
            emit(json, &rows, || print_plan(&rows))
        }
        Command::DemoCorpus(a) => {
            let exe = std::env::current_exe().map_err(|e| Error::io("current_exe", e))?;
            let cfg = write_demo_corpus(&a.dir, &exe, a.seed)?;
            emit(json, &serde_json::json!({ "config": cfg }), || {
                println!("wrote {}", cfg.display())
            })
        }
        Command::SynthRender(a) => {
            let video = SyntheticVideo::load(&a.input)?;
            let n = video.render_to_dir(&a.outdir, a.fps)?;
            log::debug!("rendered {n} frames");
            Ok(())
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_STAGE
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if cli.json {
                println!(
                    "{}",
                    serde_json::json!({"error": e.to_string(), "validation": e.is_validation()})
                );
            }
            eprintln!("error: {e}");
            if let Error::StageFailed { failures, .. } = &e {
                for f in failures.iter().skip(1) {
                    eprintln!("  also: {f}");
                }
            }
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_tokens_both_conventions() {
        let cli = Cli::try_parse_from(["vidforge", "plan-tokens", "--T", "32", "--M", "729", "--s", "1", "--p", "2"]).unwrap();
        let Command::PlanTokens(a) = cli.command else { panic!() };
        let rows = plan_rows(&a).unwrap();
        assert_eq!(rows[0].total, 5824);
        assert_eq!(rows[1].total, 5408);
    }

    #[test]
    fn bad_convention_is_validation() {
        let cli = Cli::try_parse_from(["vidforge", "plan-tokens", "--T", "4", "--M", "729", "--convention", "diag"]).unwrap();
        let err = execute(&cli).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_VALIDATION);
    }

    #[test]
    fn clap_errors_map_to_validation() {
        assert_eq!(main_with_args(["vidforge", "plan-tokens"]), EXIT_VALIDATION);
        assert_eq!(main_with_args(["vidforge", "--help"]), EXIT_OK);
    }
}
