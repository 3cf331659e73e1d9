//! `vcmr` — residual SIFT keypoint codec pipeline.
//!
//! Subcommands compose the library modules into reproducible runs: generate
//! synthetic frames, extract keypoints, degrade frames, match keypoint
//! sets, encode/decode residual streams, and sweep QP operating points into
//! CSV/JSON statistics. All outputs are byte-deterministic for a given
//! command line, regardless of `--jobs`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use vcmr_core::analysis::{
    fit_l_vs_qp, spearman_rho, summarize_run, FitResult, FrameResult, RunStats, CSV_HEADER,
};
use vcmr_core::correspondence::{match_sets, MatchConfig, MatchReport, SameRule};
use vcmr_core::degrade::io::{load_external_sequence, read_frame, write_pgm, CodingType};
use vcmr_core::degrade::{degrade_frame, DegradeParams};
use vcmr_core::image::Image;
use vcmr_core::keypoint::KeypointSet;
use vcmr_core::residual::{
    decode_merge, encode_residual,
    wire::{deserialize, frame_wire_size, serialize},
    CodecConfig, ResidualStream, ToleranceMode,
};
use vcmr_core::sift::{extract_keypoints, SiftParams};
use vcmr_core::synth::textured_frame;

#[derive(Parser)]
#[command(name = "vcmr", version, about = "Residual SIFT keypoint codec")]
struct Cli {
    /// Worker threads for per-frame work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic frame sequence as PGM files.
    Gen(GenArgs),
    /// Detect keypoints and write them as JSON.
    Extract(ExtractArgs),
    /// Apply the block-DCT compression surrogate to frames.
    Degrade(DegradeArgs),
    /// Match two keypoint JSON files frame by frame.
    Match(MatchArgs),
    /// Encode the residual stream for an (original, decoded) sequence pair.
    Encode(EncodeArgs),
    /// Reconstruct original keypoints from decoded frames plus a residual.
    Decode(DecodeArgs),
    /// Run the full pipeline over a QP sweep and emit statistics.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SiftFlags {
    /// DoG layers per octave.
    #[arg(long, default_value_t = 3)]
    layers: u32,
    /// Base blur level in samples.
    #[arg(long, default_value_t = 1.6)]
    base_sigma: f32,
    #[arg(long, default_value_t = 0.04)]
    contrast_threshold: f32,
    #[arg(long, default_value_t = 10.0)]
    edge_threshold: f32,
    #[arg(long, default_value_t = 5)]
    border: u32,
    #[arg(long)]
    max_octaves: Option<u32>,
    /// Add a doubled-resolution first octave.
    #[arg(long)]
    upsample: bool,
}

impl SiftFlags {
    fn params(&self) -> SiftParams {
        SiftParams {
            layers_per_octave: self.layers,
            base_sigma: self.base_sigma,
            contrast_threshold: self.contrast_threshold,
            edge_threshold: self.edge_threshold,
            border: self.border,
            max_octaves: self.max_octaves,
            upsample: self.upsample,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SameRuleFlag {
    /// One sample in one direction only.
    Literal,
    /// Chebyshev distance at most one.
    Chebyshev1,
}

#[derive(Args)]
struct MatchFlags {
    /// Candidate window half-width in samples.
    #[arg(long, default_value_t = 3)]
    window_radius: u32,
    /// Relative tolerance for size and response.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    /// Circular orientation tolerance in degrees.
    #[arg(long = "orientation-tol", default_value_t = 18.0)]
    orientation_tol: f64,
    #[arg(long, value_enum, default_value_t = SameRuleFlag::Literal)]
    same_rule: SameRuleFlag,
}

impl MatchFlags {
    fn config(&self) -> Result<MatchConfig> {
        let cfg = MatchConfig {
            window_radius: self.window_radius,
            tolerance: self.tolerance,
            orientation_tolerance: self.orientation_tol,
            same_rule: match self.same_rule {
                SameRuleFlag::Literal => SameRule::Literal,
                SameRuleFlag::Chebyshev1 => SameRule::Chebyshev1,
            },
            ..MatchConfig::default()
        };
        cfg.validate().map_err(|e| anyhow::anyhow!(e))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExtractArgs {
    /// Image files, or a single directory of frame_NNNN.(pgm|png).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output JSON file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    sift: SiftFlags,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    qp: u8,
    #[arg(long, default_value_t = 8)]
    block: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    orig: PathBuf,
    dec: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    matching: MatchFlags,
}

#[derive(Args)]
struct EncodeArgs {
    /// Original frames (directory or files).
    #[arg(long, required = true, num_args = 1..)]
    orig: Vec<PathBuf>,
    /// Decoded frames (directory or files).
    #[arg(long, required = true, num_args = 1..)]
    dec: Vec<PathBuf>,
    /// Residual stream output (.vcmr).
    #[arg(long)]
    out: PathBuf,
    /// Optional per-frame statistics CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// QP tag recorded in the CSV (the codec itself never needs it).
    #[arg(long, default_value_t = 0)]
    qp: u8,
    /// Correct every exactly-differing parameter.
    #[arg(long)]
    lossless: bool,
    #[command(flatten)]
    matching: MatchFlags,
    #[command(flatten)]
    sift: SiftFlags,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long, required = true, num_args = 1..)]
    dec: Vec<PathBuf>,
    #[arg(long)]
    residual: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    sift: SiftFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, required = true, num_args = 1..)]
    orig: Vec<PathBuf>,
    /// Surrogate QP list, e.g. `--qp 17,22,27`.
    #[arg(long, value_delimiter = ',')]
    qp: Vec<u8>,
    /// Externally decoded frames per QP, e.g. `--external 32=path/to/dir`
    /// (repeatable). Overrides the surrogate.
    #[arg(long)]
    external: Vec<String>,
    #[arg(long, default_value_t = 8)]
    block: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lossless: bool,
    #[command(flatten)]
    matching: MatchFlags,
    #[command(flatten)]
    sift: SiftFlags,
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let threads = jobs.max(1);
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            report_error(&anyhow::anyhow!(e));
            std::process::exit(1);
        }
    }
    if let Err(e) = run(cli.command) {
        report_error(&e);
        std::process::exit(1);
    }
}

fn report_error(e: &anyhow::Error) {
    let payload = serde_json::json!({ "error": format!("{e:#}") });
    eprintln!("{payload}");
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(args) => cmd_gen(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Degrade(args) => cmd_degrade(args),
        Command::Match(args) => cmd_match(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

/// Load frames from one directory (with optional manifest tags) or from an
/// explicit file list.
fn load_frames(inputs: &[PathBuf]) -> Result<(Vec<Image>, Vec<Option<CodingType>>)> {
    if inputs.len() == 1 && inputs[0].is_dir() {
        let seq = load_external_sequence(&inputs[0])
            .with_context(|| format!("loading sequence from {}", inputs[0].display()))?;
        return Ok((seq.frames, seq.coding_types));
    }
    let mut frames = Vec::with_capacity(inputs.len());
    for path in inputs {
        frames.push(read_frame(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let tags = vec![None; frames.len()];
    Ok((frames, tags))
}

fn check_same_dimensions(orig: &[Image], dec: &[Image]) -> Result<()> {
    for (i, (o, d)) in orig.iter().zip(dec).enumerate() {
        if o.width() != d.width() || o.height() != d.height() {
            bail!(
                "frame {i}: decoded is {}x{}, original is {}x{}",
                d.width(),
                d.height(),
                o.width(),
                o.height()
            );
        }
    }
    Ok(())
}

fn extract_all(frames: &[Image], params: &SiftParams) -> Result<Vec<KeypointSet>> {
    frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            extract_keypoints(frame, params)
                .map(|set| set.with_frame_id(i as u64))
                .map_err(anyhow::Error::from)
        })
        .collect()
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    for i in 0..args.frames {
        let frame = textured_frame(args.width, args.height, &mut rng);
        write_pgm(&args.out.join(format!("frame_{i:04}.pgm")), &frame)?;
    }
    println!("wrote {} frames to {}", args.frames, args.out.display());
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    let params = args.sift.params();
    let (frames, _) = load_frames(&args.inputs)?;
    let sets = extract_all(&frames, &params)?;
    write_json(args.out.as_deref(), &sets)
}

fn cmd_degrade(args: DegradeArgs) -> Result<()> {
    let params = DegradeParams {
        qp: args.qp,
        block: args.block,
    };
    let (frames, _) = load_frames(&args.inputs)?;
    fs::create_dir_all(&args.out)?;
    let degraded: Result<Vec<Image>, _> = frames
        .par_iter()
        .map(|frame| degrade_frame(frame, &params))
        .collect();
    for (i, frame) in degraded?.iter().enumerate() {
        write_pgm(&args.out.join(format!("frame_{i:04}.pgm")), frame)?;
    }
    println!("wrote {} frames to {}", frames.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct FrameMatchJson {
    frame: u64,
    same: usize,
    moved: usize,
    #[serde(flatten)]
    report: MatchReport,
}

fn read_keypoint_json(path: &Path) -> Result<Vec<KeypointSet>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sets: Vec<KeypointSet> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // external dumps may not be canonically ordered
    Ok(sets
        .into_iter()
        .map(|s| KeypointSet::from_keypoints(s.frame_id, s.keypoints))
        .collect())
}

fn cmd_match(args: MatchArgs) -> Result<()> {
    let cfg = args.matching.config()?;
    let orig = read_keypoint_json(&args.orig)?;
    let dec = read_keypoint_json(&args.dec)?;
    if orig.len() != dec.len() {
        bail!(
            "keypoint files cover {} vs {} frames",
            orig.len(),
            dec.len()
        );
    }
    let reports: Vec<FrameMatchJson> = orig
        .iter()
        .zip(&dec)
        .map(|(o, d)| {
            let report = match_sets(o, d, &cfg);
            FrameMatchJson {
                frame: o.frame_id,
                same: report.count(vcmr_core::correspondence::Category::Same),
                moved: report.count(vcmr_core::correspondence::Category::Moved),
                report,
            }
        })
        .collect();
    write_json(args.out.as_deref(), &reports)
}

fn codec_config(lossless: bool, matching: &MatchFlags) -> Result<CodecConfig> {
    let match_config = matching.config()?;
    Ok(if lossless {
        CodecConfig {
            mode: ToleranceMode::Lossless,
            match_config: MatchConfig {
                tolerance: 0.0,
                orientation_tolerance: 0.0,
                ..match_config
            },
        }
    } else {
        CodecConfig::tolerant(match_config)
    })
}

fn cmd_encode(args: EncodeArgs) -> Result<()> {
    let params = args.sift.params();
    let cfg = codec_config(args.lossless, &args.matching)?;
    let (orig_frames, _) = load_frames(&args.orig)?;
    let (dec_frames, tags) = load_frames(&args.dec)?;
    if orig_frames.len() != dec_frames.len() {
        bail!(
            "original and decoded sequences differ in length: {} vs {}",
            orig_frames.len(),
            dec_frames.len()
        );
    }
    check_same_dimensions(&orig_frames, &dec_frames)?;
    let orig_sets = extract_all(&orig_frames, &params)?;
    let dec_sets = extract_all(&dec_frames, &params)?;

    let mut frames = Vec::with_capacity(orig_sets.len());
    let mut rows = Vec::with_capacity(orig_sets.len());
    for ((orig, dec), tag) in orig_sets.iter().zip(&dec_sets).zip(&tags) {
        let report = match_sets(orig, dec, &cfg.match_config);
        let residual = encode_residual(orig, dec, &cfg)?;
        let bytes = frame_wire_size(&residual);
        let mut row = FrameResult::from_run(args.qp, orig, dec, &report, &residual, bytes);
        row.coding_type = *tag;
        rows.push(row);
        frames.push(residual);
    }

    let stream = ResidualStream::new(&cfg, frames);
    let bytes = serialize(&stream);
    fs::write(&args.out, &bytes).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(csv_path) = &args.csv {
        let mut csv = String::from(CSV_HEADER);
        csv.push('\n');
        for row in &rows {
            csv.push_str(&row.csv_row());
            csv.push('\n');
        }
        fs::write(csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    }
    println!(
        "encoded {} frames, {} bytes to {}",
        stream.frames.len(),
        bytes.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let params = args.sift.params();
    let (dec_frames, _) = load_frames(&args.dec)?;
    let dec_sets = extract_all(&dec_frames, &params)?;
    let bytes =
        fs::read(&args.residual).with_context(|| format!("reading {}", args.residual.display()))?;
    let stream = deserialize(&bytes)?;

    let mut merged = Vec::with_capacity(stream.frames.len());
    for frame in &stream.frames {
        let index = usize::try_from(frame.frame_id)?;
        let dec = dec_sets
            .get(index)
            .with_context(|| format!("residual frame {index} beyond decoded sequence"))?;
        merged.push(decode_merge(dec, frame)?);
    }
    write_json(args.out.as_deref(), &merged)
}

#[derive(Serialize)]
struct SweepSummary {
    mode: ToleranceMode,
    tolerance: f64,
    orientation_tolerance: f64,
    runs: Vec<RunStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spearman_rho_l_vs_qp: Option<f64>,
}

enum SweepSource {
    Surrogate { qps: Vec<u8>, block: usize },
    External(BTreeMap<u8, PathBuf>),
}

fn parse_external(specs: &[String]) -> Result<BTreeMap<u8, PathBuf>> {
    let mut map = BTreeMap::new();
    for spec in specs {
        let (qp, dir) = spec
            .split_once('=')
            .with_context(|| format!("--external expects QP=DIR, got {spec}"))?;
        let qp: u8 = qp.parse().with_context(|| format!("bad QP in {spec}"))?;
        if map.insert(qp, PathBuf::from(dir)).is_some() {
            bail!("duplicate --external entry for qp {qp}");
        }
    }
    Ok(map)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let params = args.sift.params();
    let cfg = codec_config(args.lossless, &args.matching)?;
    let source = if args.external.is_empty() {
        if args.qp.is_empty() {
            bail!("--qp list (or --external entries) required");
        }
        let mut qps = args.qp.clone();
        qps.sort_unstable();
        qps.dedup();
        SweepSource::Surrogate {
            qps,
            block: args.block,
        }
    } else {
        SweepSource::External(parse_external(&args.external)?)
    };

    let (orig_frames, _) = load_frames(&args.orig)?;
    let orig_sets = extract_all(&orig_frames, &params)?;
    fs::create_dir_all(&args.out)?;

    let mut runs: Vec<RunStats> = Vec::new();
    match source {
        SweepSource::Surrogate { qps, block } => {
            for qp in qps {
                let degrade_params = DegradeParams { qp, block };
                let decoded: Result<Vec<Image>, _> = orig_frames
                    .par_iter()
                    .map(|f| degrade_frame(f, &degrade_params))
                    .collect();
                let dec_sets = extract_all(&decoded?, &params)?;
                runs.push(run_stats_for(qp, &orig_sets, &dec_sets, &None, &cfg)?);
            }
        }
        SweepSource::External(map) => {
            for (qp, dir) in map {
                let seq = load_external_sequence(&dir)
                    .with_context(|| format!("loading --external {qp}={}", dir.display()))?;
                if seq.frames.len() != orig_frames.len() {
                    bail!(
                        "external qp {qp}: {} frames but original has {}",
                        seq.frames.len(),
                        orig_frames.len()
                    );
                }
                check_same_dimensions(&orig_frames, &seq.frames)
                    .with_context(|| format!("--external {qp}"))?;
                let dec_sets = extract_all(&seq.frames, &params)?;
                let tags = Some(seq.coding_types);
                runs.push(run_stats_for(qp, &orig_sets, &dec_sets, &tags, &cfg)?);
            }
        }
    }

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for run in &runs {
        for frame in &run.frames {
            csv.push_str(&frame.csv_row());
            csv.push('\n');
        }
    }
    let csv_path = args.out.join("run.csv");
    fs::write(&csv_path, csv)?;

    let points: Vec<(f64, f64)> = runs.iter().map(|r| (r.qp as f64, r.mean_l)).collect();
    let distinct_qps = {
        let mut qs: Vec<u8> = runs.iter().map(|r| r.qp).collect();
        qs.dedup();
        qs.len()
    };
    let (fit, rho) = if distinct_qps >= 2 {
        (Some(fit_l_vs_qp(&points)?), Some(spearman_rho(&points)))
    } else {
        (None, None)
    };

    let summary = SweepSummary {
        mode: cfg.mode,
        tolerance: cfg.match_config.tolerance,
        orientation_tolerance: cfg.match_config.orientation_tolerance,
        runs,
        fit,
        spearman_rho_l_vs_qp: rho,
    };
    let summary_path = args.out.join("summary.json");
    write_json(Some(&summary_path), &summary)?;
    println!(
        "wrote {} and {}",
        csv_path.display(),
        summary_path.display()
    );
    Ok(())
}

fn run_stats_for(
    qp: u8,
    orig_sets: &[KeypointSet],
    dec_sets: &[KeypointSet],
    tags: &Option<Vec<Option<CodingType>>>,
    cfg: &CodecConfig,
) -> Result<RunStats> {
    let mut rows = Vec::with_capacity(orig_sets.len());
    for (i, (orig, dec)) in orig_sets.iter().zip(dec_sets).enumerate() {
        let report = match_sets(orig, dec, &cfg.match_config);
        let residual = encode_residual(orig, dec, cfg)?;
        let bytes = frame_wire_size(&residual);
        let mut row = FrameResult::from_run(qp, orig, dec, &report, &residual, bytes);
        if let Some(tags) = tags {
            row.coding_type = tags[i];
        }
        rows.push(row);
    }
    Ok(summarize_run(rows)?)
}
