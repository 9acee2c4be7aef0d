//! Command-line driver. Exit codes: 0 on success, 1 on usage errors, 2 on
//! data errors; messages go to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::applications::{detect_vp, kmeans_cluster, rank_symmetry_axes, retrieve, RetrievalEntry};
use crate::arrangement::hiou;
use crate::candidates::{enumerate_combinations, generate_candidate_grid, nms_select, Combination};
use crate::error::Error;
use crate::geometry::{polar_to_segment, Frame, Grid, Line};
use crate::grouping::{grouping_forward, sinusoidal_pe, RegionQuerySet};
use crate::io::{self, AnnotationRecord, Config, GrayImage};
use crate::maps::{binary_mask, line_collection_map, positional_embedding};
use crate::scoring::{
    box_resample, detect_combination, gradient_magnitude, normalize, search_best_combination, HeuristicScorer,
    OracleScorer, Scorer, SearchConstraint,
};
use crate::synth::{random_scene, simulate_detector, synth_scene, SceneParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(message: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(message.into()))
}

#[derive(Debug, Parser)]
#[command(name = "semline", version, about = "Semantic line combination detection")]
struct Cli {
    /// `key = value` file with thresholds; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic scene: <out>.pgm, <out>.json (ground truth) and
    /// <out>.csv (simulated detector output).
    Synth(SynthArgs),
    /// Write the empty (ρ, θ) candidate grid as CSV.
    Candidates(CandidatesArgs),
    /// Reduce a candidate CSV to K reliable lines.
    Nms(NmsArgs),
    /// Score every combination of a line set on an image.
    Score(ScoreArgs),
    /// Full pipeline: candidates to the best combination.
    Detect(DetectArgs),
    /// Harmony IoU between two annotation files.
    Hiou(HiouArgs),
    /// Vanishing point from the best pair of lines.
    Vp(LinesArgs),
    /// Rank lines as symmetry axes.
    Symmetry(LinesArgs),
    /// Nearest compositions in a retrieval index.
    Retrieve(RetrieveArgs),
    /// Build a retrieval index from annotation files.
    Embed(EmbedArgs),
    /// Print the region membership grid of the grouping module.
    Group(GroupArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerKind {
    Oracle,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    All,
    Pairs,
    Singletons,
}

impl From<Mode> for SearchConstraint {
    fn from(m: Mode) -> Self {
        match m {
            Mode::All => SearchConstraint::All,
            Mode::Pairs => SearchConstraint::Pairs,
            Mode::Singletons => SearchConstraint::Singletons,
        }
    }
}

fn parse_frame(s: &str) -> std::result::Result<Frame, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH, e.g. 480x320")?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width `{w}`"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height `{h}`"))?;
    Frame::new(w, h).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct ScorerArgs {
    #[arg(long, value_enum, default_value = "heuristic")]
    scorer: ScorerKind,
    /// Ground-truth annotation; required by the oracle scorer.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Side of the square scoring grid.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_frame, default_value = "480x480")]
    frame: Frame,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exact number of ground-truth lines (1 to 4); random when omitted.
    #[arg(long)]
    lines: Option<usize>,
    #[arg(long, default_value_t = 4)]
    distractors: usize,
    /// Minimum intensity difference between adjacent cells.
    #[arg(long, default_value_t = 30.0)]
    gap: f64,
    /// Standard deviation of the pixel noise.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long)]
    n_rho: Option<usize>,
    #[arg(long)]
    n_theta: Option<usize>,
    /// Output path prefix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CandidatesArgs {
    #[arg(long, value_parser = parse_frame)]
    frame: Frame,
    #[arg(long)]
    n_rho: Option<usize>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NmsArgs {
    candidates: PathBuf,
    #[arg(long, value_parser = parse_frame)]
    frame: Frame,
    #[arg(long)]
    k: Option<usize>,
    /// NMS suppression distance.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    image: PathBuf,
    /// Annotation holding the reliable lines.
    lines: PathBuf,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long, value_enum, default_value = "all")]
    mode: Mode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    image: PathBuf,
    candidates: PathBuf,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long, value_enum, default_value = "all")]
    mode: Mode,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Also write the full score report here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HiouArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Debug, Args)]
struct LinesArgs {
    image: PathBuf,
    lines: PathBuf,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[arg(long)]
    index: PathBuf,
    /// Identifier of the query entry within the index.
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// Minimum composition score of returned entries.
    #[arg(long)]
    threshold: Option<f64>,
    /// Also print k-means cluster labels with this many clusters.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(required = true)]
    annotations: Vec<PathBuf>,
    /// Number of line channels; annotations may hold at most this many lines.
    #[arg(long)]
    k: Option<usize>,
    /// Composition score stored with each entry.
    #[arg(long, default_value_t = 1.0)]
    score: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GroupArgs {
    image: PathBuf,
    lines: PathBuf,
    #[arg(long, default_value_t = 4)]
    regions: usize,
    #[arg(long, default_value_t = 3)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    grid: Option<usize>,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    run_cli_with(argv, &mut stdout, &mut stderr)
}

/// As [`run_cli`], with explicit output streams.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(a, &config, out),
        Command::Candidates(a) => cmd_candidates(a, &config, out),
        Command::Nms(a) => cmd_nms(a, &config, out),
        Command::Score(a) => cmd_score(a, &config, out),
        Command::Detect(a) => cmd_detect(a, &config, out),
        Command::Hiou(a) => cmd_hiou(a, out),
        Command::Vp(a) => cmd_vp(a, &config, out),
        Command::Symmetry(a) => cmd_symmetry(a, &config, out),
        Command::Retrieve(a) => cmd_retrieve(a, &config, out),
        Command::Embed(a) => cmd_embed(a, &config, out),
        Command::Group(a) => cmd_group(a, &config, out),
    }
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => io::write_atomic(p, text.as_bytes())?,
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io(Path::new("<stdout>"), e))?,
    }
    Ok(())
}

fn image_frame(image: &GrayImage) -> CliResult<Frame> {
    Ok(Frame::new(image.width(), image.height())?)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

/// Loads an annotation and checks it was made for `frame`.
fn lines_for_frame(path: &Path, frame: &Frame) -> CliResult<Vec<Line>> {
    let rec = io::load_annotation(path)?;
    if rec.width != frame.width() || rec.height != frame.height() {
        return Err(Error::InvariantViolation {
            record: rec.image_id,
            message: format!(
                "annotation is {}x{} but the image is {}x{}",
                rec.width,
                rec.height,
                frame.width(),
                frame.height()
            ),
        }
        .into());
    }
    Ok(rec.polar_lines()?)
}

fn build_scorer(args: &ScorerArgs, config: &Config, image: &GrayImage, frame: &Frame) -> CliResult<Box<dyn Scorer>> {
    match args.scorer {
        ScorerKind::Oracle => {
            let Some(gt) = &args.gt else {
                return usage("--scorer oracle needs --gt <annotation>");
            };
            let gt_lines = lines_for_frame(gt, frame)?;
            Ok(Box::new(OracleScorer::new(&gt_lines, frame)?))
        }
        ScorerKind::Heuristic => {
            let side = args.grid.unwrap_or(config.grid);
            if side == 0 {
                return usage("--grid must be positive");
            }
            Ok(Box::new(HeuristicScorer::new(
                image,
                frame,
                Grid::new(side, side),
                config.heuristic_weights(),
            )?))
        }
    }
}

fn cmd_synth(a: SynthArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    let (min_lines, max_lines) = match a.lines {
        Some(n) if (1..=crate::synth::MAX_SYNTH_LINES).contains(&n) => (n, n),
        Some(n) => return usage(format!("--lines {n} is outside 1..=4")),
        None => (1, crate::synth::MAX_SYNTH_LINES),
    };
    let params = SceneParams {
        width: a.frame.width(),
        height: a.frame.height(),
        min_lines,
        max_lines,
        distractors: a.distractors,
        min_gap: a.gap,
        noise_sigma: a.sigma,
        ..SceneParams::default()
    };
    let scene = random_scene(&params, a.seed)?;
    let (image, gt) = synth_scene(&scene.spec)?;
    let name = stem(&a.out);
    let record = AnnotationRecord::from_lines(name, &a.frame, &gt)?;
    let cands = simulate_detector(
        &a.frame,
        &scene.anchors(),
        a.n_rho.unwrap_or(config.n_rho),
        a.n_theta.unwrap_or(config.n_theta),
        a.seed,
    )?;
    let with_ext = |ext: &str| {
        let mut p = a.out.clone().into_os_string();
        p.push(ext);
        PathBuf::from(p)
    };
    io::write_pgm(&with_ext(".pgm"), &image)?;
    io::save_annotations(&with_ext(".json"), &[record])?;
    io::save_candidates(&with_ext(".csv"), &cands)?;
    emit(
        out,
        None,
        &format!("{} gt lines, {} distractors\n", gt.len(), scene.distractors.len()),
    )
}

fn cmd_candidates(a: CandidatesArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    let cands = generate_candidate_grid(
        a.n_rho.unwrap_or(config.n_rho),
        a.n_theta.unwrap_or(config.n_theta),
        &a.frame,
    )?;
    emit(out, a.out.as_deref(), &io::candidates_to_csv(&cands))
}

fn cmd_nms(a: NmsArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    let cands = io::load_candidates(&a.candidates, &a.frame)?;
    let reliable = nms_select(
        &cands,
        a.k.unwrap_or(config.k),
        a.threshold.unwrap_or(config.nms_threshold),
    )?;
    let lines: Vec<Line> = reliable.iter().map(|r| r.line).collect();
    let record = AnnotationRecord::from_lines(stem(&a.candidates), &a.frame, &lines)?;
    emit(out, a.out.as_deref(), &io::annotations_to_json(&[record]))
}

fn cmd_score(a: ScoreArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    let image = io::read_image(&a.image)?;
    let frame = image_frame(&image)?;
    let reliable = lines_for_frame(&a.lines, &frame)?;
    let scorer = build_scorer(&a.scorer, config, &image, &frame)?;
    let report = search_best_combination(&reliable, scorer.as_ref(), a.mode.into())?;
    emit(out, a.out.as_deref(), &io::score_report_to_csv(&report))
}

fn cmd_detect(a: DetectArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    let image = io::read_image(&a.image)?;
    let frame = image_frame(&image)?;
    let cands = io::load_candidates(&a.candidates, &frame)?;
    let scorer = build_scorer(&a.scorer, config, &image, &frame)?;
    let detection = detect_combination(
        &cands,
        a.k.unwrap_or(config.k),
        a.threshold.unwrap_or(config.nms_threshold),
        scorer.as_ref(),
        a.mode.into(),
    )?;
    if let Some(p) = &a.report {
        io::save_score_report(p, &detection.report)?;
    }
    let record = AnnotationRecord::from_lines(stem(&a.image), &frame, &detection.lines())?;
    emit(out, a.out.as_deref(), &io::annotations_to_json(&[record]))
}

fn cmd_hiou(a: HiouArgs, out: &mut dyn Write) -> CliResult<()> {
    let ra = io::load_annotation(&a.a)?;
    let rb = io::load_annotation(&a.b)?;
    if (ra.width, ra.height) != (rb.width, rb.height) {
        return Err(Error::ShapeMismatch(format!(
            "annotations are {}x{} and {}x{}",
            ra.width, ra.height, rb.width, rb.height
        ))
        .into());
    }
    let value = hiou(&ra.polar_lines()?, &rb.polar_lines()?, &ra.frame()?)?;
    emit(out, None, &format!("{value:.6}\n"))
}

fn cmd_vp(a: LinesArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    let image = io::read_image(&a.image)?;
    let frame = image_frame(&image)?;
    let reliable = lines_for_frame(&a.lines, &frame)?;
    let scorer = build_scorer(&a.scorer, config, &image, &frame)?;
    let vp = detect_vp(&reliable, scorer.as_ref())?;
    let (x, y) = frame.to_top_left(vp.point);
    emit(
        out,
        a.out.as_deref(),
        &format!(
            "x\ty\tline_a\tline_b\tscore\n{x:.6}\t{y:.6}\t{}\t{}\t{:.6}\n",
            vp.pair.0, vp.pair.1, vp.score
        ),
    )
}

fn cmd_symmetry(a: LinesArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    let image = io::read_image(&a.image)?;
    let frame = image_frame(&image)?;
    let reliable = lines_for_frame(&a.lines, &frame)?;
    let scorer = build_scorer(&a.scorer, config, &image, &frame)?;
    let mut text = String::from("rank\tline\tscore\tx1\ty1\tx2\ty2\n");
    for (rank, axis) in rank_symmetry_axes(&reliable, scorer.as_ref())?.iter().enumerate() {
        let s = polar_to_segment(axis.line, &frame)?;
        let (x1, y1) = frame.to_top_left(s.p0);
        let (x2, y2) = frame.to_top_left(s.p1);
        text.push_str(&format!(
            "{}\t{}\t{:.6}\t{x1:.3}\t{y1:.3}\t{x2:.3}\t{y2:.3}\n",
            rank + 1,
            axis.index,
            axis.score
        ));
    }
    emit(out, a.out.as_deref(), &text)
}

fn cmd_retrieve(a: RetrieveArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    if a.top_k == 0 {
        return usage("--top-k must be at least 1");
    }
    let index = io::load_index(&a.index)?;
    let Some(query) = index.iter().find(|e| e.identifier == a.query).cloned() else {
        return Err(Error::InvariantViolation {
            record: a.query,
            message: "not present in the index".into(),
        }
        .into());
    };
    let others: Vec<RetrievalEntry> = index
        .iter()
        .filter(|e| e.identifier != query.identifier)
        .cloned()
        .collect();
    let hits = retrieve(
        &query,
        &others,
        a.threshold.unwrap_or(config.retrieval_threshold),
        a.top_k,
    )?;
    let mut text = String::from("rank\tidentifier\tdistance\n");
    for (i, h) in hits.iter().enumerate() {
        text.push_str(&format!("{}\t{}\t{:.6}\n", i + 1, h.identifier, h.distance));
    }
    if let Some(k) = a.clusters {
        let vectors: Vec<Vec<f64>> = index.iter().map(|e| e.embedding.clone()).collect();
        let clusters = kmeans_cluster(&vectors, k, a.seed, 100)?;
        text.push_str("\nidentifier\tcluster\n");
        for (e, c) in index.iter().zip(&clusters.assignments) {
            text.push_str(&format!("{}\t{c}\n", e.identifier));
        }
    }
    emit(out, None, &text)
}

/// Positional embedding of an annotation's lines, padded to `k` channels.
pub fn annotation_embedding(record: &AnnotationRecord, k: usize, grid: Grid, pool: usize) -> crate::Result<Vec<f64>> {
    let frame = record.frame()?;
    let mut lines = record.polar_lines()?;
    if lines.len() > k {
        return Err(Error::TooManyLines {
            count: lines.len(),
            limit: k,
        });
    }
    let n = lines.len();
    // Padding channels are excluded from the combination and stay zero.
    lines.resize(k, Line::new(0.0, 0.0));
    let combo = Combination::new((1u32 << n) - 1, k)?;
    positional_embedding(&line_collection_map(&lines, combo, grid, &frame)?, pool)
}

fn cmd_embed(a: EmbedArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.score) {
        return usage("--score must lie in [0, 1]");
    }
    let k = a.k.unwrap_or(config.k);
    let grid = Grid::new(config.grid, config.grid);
    let mut entries = Vec::new();
    for path in &a.annotations {
        for rec in io::load_annotations(path)? {
            entries.push(RetrievalEntry {
                embedding: annotation_embedding(&rec, k, grid, config.pool)?,
                identifier: rec.image_id,
                composition_score: a.score,
            });
        }
    }
    emit(out, a.out.as_deref(), &io::index_to_text(&entries))
}

fn cmd_group(a: GroupArgs, config: &Config, out: &mut dyn Write) -> CliResult<()> {
    if a.regions == 0 || a.regions > 36 {
        return usage("--regions must lie in 1..=36");
    }
    if a.steps == 0 {
        return usage("--steps must be at least 1");
    }
    let image = io::read_image(&a.image)?;
    let frame = image_frame(&image)?;
    let lines = lines_for_frame(&a.lines, &frame)?;
    let side = a.grid.unwrap_or(config.grid);
    if side == 0 {
        return usage("--grid must be positive");
    }
    let grid = Grid::new(side, side);

    // Four feature channels per cell: normalized intensity, gradient
    // magnitude, line mask, and the mean side over the included lines.
    let intensity = normalize(&box_resample(&image, grid));
    let gradient = gradient_magnitude(&intensity, grid);
    let k = lines.len().max(1);
    let padded: Vec<Line> = if lines.is_empty() {
        vec![Line::new(0.0, 0.0)]
    } else {
        lines.clone()
    };
    let combo = Combination::new((1u32 << lines.len()) - 1, k)?;
    let mask = binary_mask(&padded, combo, grid, &frame)?;
    let sides = line_collection_map(&padded, combo, grid, &frame)?.to_matrix();
    let features = Array2::from_shape_fn((grid.len(), 4), |(i, c)| match c {
        0 => intensity[i],
        1 => gradient[i],
        2 => f64::from(mask.data[i]),
        _ => sides.row(i).sum() / k as f64,
    });
    let positional = sinusoidal_pe(grid, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let queries = Array2::from_shape_fn((a.regions, 4), |_| rng.random_range(-1.0..1.0));
    let regions = RegionQuerySet {
        queries,
        u_q: Array2::eye(4),
        u_k: Array2::eye(4),
        u_v: Array2::eye(4),
        tau: 2.0,
    };
    let output = grouping_forward(&regions, &features, &positional, a.steps)?;
    let symbols: Vec<char> = "0123456789abcdefghijklmnopqrstuvwxyz".chars().collect();
    let mut text = String::with_capacity(grid.len() + grid.h);
    for r in 0..grid.h {
        for c in 0..grid.w {
            text.push(symbols[output.membership[r * grid.w + c]]);
        }
        text.push('\n');
    }
    emit(out, None, &text)
}

/// Number of combinations the `score` and `detect` subcommands evaluate for
/// `k` lines under `mode`.
pub fn combination_count(k: usize, constraint: SearchConstraint) -> crate::Result<usize> {
    Ok(enumerate_combinations(k)?
        .into_iter()
        .filter(|c| constraint.admits(*c))
        .count())
}
