//! File formats: binary PGM/PPM images, JSON line annotations, candidate
//! and score-report CSVs, the retrieval index, and `key = value` config.
//!
//! Every writer goes through [`write_atomic`] (temp file, then rename).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::applications::RetrievalEntry;
use crate::arrangement::MAX_HIOU_LINES;
use crate::candidates::{CandidateSet, Offset};
use crate::error::{Error, Result};
use crate::geometry::{polar_to_segment, segment_to_polar, Frame, Line};
use crate::scoring::ScoreReport;

/// Endpoints may sit at most this far (in pixels) from the image boundary.
pub const BOUNDARY_TOLERANCE_PX: f64 = 0.5;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp: PathBuf = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Images

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::BadImage(format!(
                "{} bytes for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// Splits a PNM header into its whitespace-separated tokens, skipping
/// `#` comments, and returns the offset of the raster.
fn pnm_header(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    Some((tokens, i + 1))
}

/// Decodes binary PGM (`P5`) or PPM (`P6`); color is reduced to luma with
/// `0.299 R + 0.587 G + 0.114 B`.
pub fn decode_pnm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |m: &str| Error::BadImage(m.to_string());
    let (tokens, start) = pnm_header(bytes, 4).ok_or_else(|| bad("truncated header"))?;
    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported magic `{other}` (need P5 or P6)"))),
    };
    let parse = |s: &str| s.parse::<u32>().map_err(|_| bad(&format!("bad header number `{s}`")));
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return Err(bad(&format!("only 8-bit images are supported (maxval {maxval})")));
    }
    let n = width as usize * height as usize;
    let raster = bytes
        .get(start..start + n * channels)
        .ok_or_else(|| bad("raster shorter than header promises"))?;
    let data = if channels == 1 {
        raster.to_vec()
    } else {
        raster
            .chunks_exact(3)
            .map(|px| {
                let y = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
                y.round().clamp(0.0, 255.0) as u8
            })
            .collect()
    };
    GrayImage::new(width, height, data)
}

pub fn read_image(path: &Path) -> Result<GrayImage> {
    decode_pnm(&read_bytes(path)?).map_err(|e| match e {
        Error::BadImage(m) => Error::BadImage(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    write_atomic(path, &image.to_pgm())
}

// ---------------------------------------------------------------------------
// Annotations

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionClass {
    Horizontal,
    Vertical,
    Diagonal,
    Triangle,
    Symmetric,
    Low,
    Front,
}

/// One annotated image: semantic lines as endpoint quadruples `(x1, y1,
/// x2, y2)` in top-left pixel coordinates, with the image spanning
/// `[0, width] x [0, height]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub lines: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composition_class: Option<CompositionClass>,
}

fn boundary_distance(x: f64, y: f64, w: f64, h: f64) -> f64 {
    if (0.0..=w).contains(&x) && (0.0..=h).contains(&y) {
        x.min(w - x).min(y).min(h - y)
    } else {
        let dx = (-x).max(x - w).max(0.0);
        let dy = (-y).max(y - h).max(0.0);
        dx.hypot(dy)
    }
}

impl AnnotationRecord {
    /// Builds a record from lines in centered polar form.
    pub fn from_lines(image_id: impl Into<String>, frame: &Frame, lines: &[Line]) -> Result<Self> {
        let lines = lines
            .iter()
            .map(|l| {
                let s = polar_to_segment(*l, frame)?;
                let (x1, y1) = frame.to_top_left(s.p0);
                let (x2, y2) = frame.to_top_left(s.p1);
                Ok([x1, y1, x2, y2])
            })
            .collect::<Result<Vec<_>>>()?;
        let record = Self {
            image_id: image_id.into(),
            width: frame.width(),
            height: frame.height(),
            lines,
            composition_class: None,
        };
        record.validate()?;
        Ok(record)
    }

    fn violation(&self, message: String) -> Error {
        Error::InvariantViolation {
            record: self.image_id.clone(),
            message,
        }
    }

    pub fn frame(&self) -> Result<Frame> {
        Frame::new(self.width, self.height).map_err(|e| self.violation(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.frame()?;
        if self.lines.len() > MAX_HIOU_LINES {
            return Err(self.violation(format!(
                "{} lines exceed the limit of {MAX_HIOU_LINES}",
                self.lines.len()
            )));
        }
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        for (i, q) in self.lines.iter().enumerate() {
            if q.iter().any(|v| !v.is_finite()) {
                return Err(self.violation(format!("line {i} has a non-finite coordinate")));
            }
            for (x, y) in [(q[0], q[1]), (q[2], q[3])] {
                let d = boundary_distance(x, y, w, h);
                if d > BOUNDARY_TOLERANCE_PX {
                    return Err(self.violation(format!(
                        "line {i} endpoint ({x}, {y}) is {d:.3} px from the image boundary"
                    )));
                }
            }
            if q[0] == q[2] && q[1] == q[3] {
                return Err(self.violation(format!("line {i} has coincident endpoints")));
            }
        }
        Ok(())
    }

    /// The annotated lines in centered polar form.
    pub fn polar_lines(&self) -> Result<Vec<Line>> {
        let frame = self.frame()?;
        self.lines
            .iter()
            .map(|q| {
                let p0 = frame.from_top_left(q[0], q[1]);
                let p1 = frame.from_top_left(q[2], q[3]);
                segment_to_polar(p0, p1).map_err(|e| self.violation(e.to_string()))
            })
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnnotationDocument {
    One(AnnotationRecord),
    Many(Vec<AnnotationRecord>),
}

/// Parses an annotation document: a single record or an array of records.
pub fn parse_annotations(text: &str, origin: &str) -> Result<Vec<AnnotationRecord>> {
    // Parse into a Value first so syntax errors keep their location; the
    // untagged enum would otherwise collapse every error into one message.
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e.line(), "document", e.to_string()))?;
    let records = match serde_json::from_value::<AnnotationDocument>(value.clone()) {
        Ok(AnnotationDocument::One(r)) => vec![r],
        Ok(AnnotationDocument::Many(rs)) => rs,
        Err(_) => {
            // Re-run the typed parse to get a message naming the bad field.
            let err = if value.is_array() {
                serde_json::from_str::<Vec<AnnotationRecord>>(text).err()
            } else {
                serde_json::from_str::<AnnotationRecord>(text).err()
            };
            let (line, message) = err
                .map(|e| (e.line(), e.to_string()))
                .unwrap_or((1, "malformed record".into()));
            let field = message
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "record".into());
            return Err(Error::parse(origin, line, field, message));
        }
    };
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    parse_annotations(&read_text(path)?, &path.display().to_string())
}

/// Loads a file that must hold exactly one record.
pub fn load_annotation(path: &Path) -> Result<AnnotationRecord> {
    let mut records = load_annotations(path)?;
    if records.len() != 1 {
        return Err(Error::parse(
            path.display().to_string(),
            1,
            "document",
            format!("expected one record, found {}", records.len()),
        ));
    }
    Ok(records.remove(0))
}

pub fn annotations_to_json(records: &[AnnotationRecord]) -> String {
    let mut text = if records.len() == 1 {
        serde_json::to_string_pretty(&records[0])
    } else {
        serde_json::to_string_pretty(records)
    }
    .expect("annotation records always serialize");
    text.push('\n');
    text
}

pub fn save_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    for r in records {
        r.validate()?;
    }
    write_atomic(path, annotations_to_json(records).as_bytes())
}

// ---------------------------------------------------------------------------
// Candidates CSV

pub const CANDIDATE_HEADER: &str = "rho,theta,prob,d_rho,d_theta";

pub fn candidates_to_csv(candidates: &CandidateSet) -> String {
    let mut out = String::with_capacity(candidates.len() * 48);
    out.push_str(CANDIDATE_HEADER);
    out.push('\n');
    for ((l, p), o) in candidates
        .lines()
        .iter()
        .zip(candidates.probs())
        .zip(candidates.offsets())
    {
        let _ = writeln!(out, "{},{},{},{},{}", l.rho(), l.theta(), p, o.d_rho, o.d_theta);
    }
    out
}

pub fn parse_candidates(text: &str, frame: &Frame, origin: &str) -> Result<CandidateSet> {
    let mut rows = text.lines().enumerate();
    match rows.next() {
        Some((_, h)) if h.trim_end_matches('\r') == CANDIDATE_HEADER => {}
        _ => {
            return Err(Error::parse(
                origin,
                1,
                "header",
                format!("expected `{CANDIDATE_HEADER}`"),
            ));
        }
    }
    let names: Vec<&str> = CANDIDATE_HEADER.split(',').collect();
    let (mut lines, mut probs, mut offsets) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in rows {
        let row = row.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::parse(
                origin,
                i + 1,
                "row",
                format!("expected {} fields, found {}", names.len(), fields.len()),
            ));
        }
        let mut vals = [0.0; 5];
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(origin, i + 1, names[k], format!("`{f}` is not a finite number")))?;
        }
        if !(0.0..=1.0).contains(&vals[2]) {
            return Err(Error::parse(
                origin,
                i + 1,
                "prob",
                format!("{} is outside [0, 1]", vals[2]),
            ));
        }
        lines.push(Line::new(vals[0], vals[1]));
        probs.push(vals[2]);
        offsets.push(Offset::new(vals[3], vals[4]));
    }
    CandidateSet::new(*frame, lines, probs, offsets)
}

pub fn load_candidates(path: &Path, frame: &Frame) -> Result<CandidateSet> {
    parse_candidates(&read_text(path)?, frame, &path.display().to_string())
}

pub fn save_candidates(path: &Path, candidates: &CandidateSet) -> Result<()> {
    write_atomic(path, candidates_to_csv(candidates).as_bytes())
}

// ---------------------------------------------------------------------------
// Score report CSV

pub const SCORE_REPORT_HEADER: &str = "combo_id,mask_bits,score,rank";

pub fn score_report_to_csv(report: &ScoreReport) -> String {
    let mut out = String::new();
    out.push_str(SCORE_REPORT_HEADER);
    out.push('\n');
    for (rank, rec) in report.ranked() {
        let _ = writeln!(
            out,
            "{},{},{:.6},{}",
            rec.combo.id(),
            rec.combo.mask_bits(),
            rec.score,
            rank
        );
    }
    out
}

pub fn save_score_report(path: &Path, report: &ScoreReport) -> Result<()> {
    write_atomic(path, score_report_to_csv(report).as_bytes())
}

// ---------------------------------------------------------------------------
// Retrieval index

pub fn index_to_text(entries: &[RetrievalEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let vector: Vec<String> = e.embedding.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}\t{}\t{}", e.identifier, e.composition_score, vector.join(","));
    }
    out
}

pub fn parse_index(text: &str, origin: &str) -> Result<Vec<RetrievalEntry>> {
    let mut entries: Vec<RetrievalEntry> = Vec::new();
    for (i, row) in text.lines().enumerate() {
        let row = row.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let parts: Vec<&str> = row.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::parse(
                origin,
                i + 1,
                "record",
                "expected identifier<TAB>score<TAB>vector",
            ));
        }
        let score: f64 = parts[1]
            .parse()
            .ok()
            .filter(|s: &f64| (0.0..=1.0).contains(s))
            .ok_or_else(|| {
                Error::parse(
                    origin,
                    i + 1,
                    "score",
                    format!("`{}` is not a score in [0, 1]", parts[1]),
                )
            })?;
        let embedding = parts[2]
            .split(',')
            .enumerate()
            .map(|(k, v)| {
                v.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::parse(
                        origin,
                        i + 1,
                        format!("v{}", k + 1),
                        format!("`{v}` is not a finite number"),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = entries.first() {
            if first.embedding.len() != embedding.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.embedding.len(),
                    found: embedding.len(),
                });
            }
        }
        entries.push(RetrievalEntry {
            identifier: parts[0].to_string(),
            embedding,
            composition_score: score,
        });
    }
    Ok(entries)
}

pub fn load_index(path: &Path) -> Result<Vec<RetrievalEntry>> {
    parse_index(&read_text(path)?, &path.display().to_string())
}

pub fn save_index(path: &Path, entries: &[RetrievalEntry]) -> Result<()> {
    write_atomic(path, index_to_text(entries).as_bytes())
}

// ---------------------------------------------------------------------------
// Config

/// Tunable thresholds. Values come from defaults, then a config file, then
/// command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub k: usize,
    pub n_rho: usize,
    pub n_theta: usize,
    pub grid: usize,
    pub pool: usize,
    pub nms_threshold: f64,
    pub retrieval_threshold: f64,
    pub w_edge: f64,
    pub w_region: f64,
    pub w_penalty: f64,
}

impl Default for Config {
    fn default() -> Self {
        use crate::candidates::{DEFAULT_K, DEFAULT_NMS_THRESHOLD, DEFAULT_N_RHO, DEFAULT_N_THETA};
        let w = crate::scoring::HeuristicWeights::default();
        Self {
            k: DEFAULT_K,
            n_rho: DEFAULT_N_RHO,
            n_theta: DEFAULT_N_THETA,
            grid: crate::maps::DEFAULT_GRID.h,
            pool: crate::maps::DEFAULT_POOL,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
            retrieval_threshold: crate::applications::DEFAULT_SCORE_THRESHOLD,
            w_edge: w.edge,
            w_region: w.region,
            w_penalty: w.penalty,
        }
    }
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "line", "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(origin, i + 1, key, format!("`{value}` is not a number")))
            };
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::parse(origin, i + 1, key, format!("`{value}` is not a non-negative integer")))
            };
            match key {
                "k" => cfg.k = int()?,
                "n_rho" => cfg.n_rho = int()?,
                "n_theta" => cfg.n_theta = int()?,
                "grid" => cfg.grid = int()?,
                "pool" => cfg.pool = int()?,
                "nms_threshold" => cfg.nms_threshold = num()?,
                "retrieval_threshold" => cfg.retrieval_threshold = num()?,
                "w_edge" => cfg.w_edge = num()?,
                "w_region" => cfg.w_region = num()?,
                "w_penalty" => cfg.w_penalty = num()?,
                other => return Err(Error::parse(origin, i + 1, other, "unknown key")),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn heuristic_weights(&self) -> crate::scoring::HeuristicWeights {
        crate::scoring::HeuristicWeights {
            edge: self.w_edge,
            region: self.w_region,
            penalty: self.w_penalty,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        assert_eq!(decode_pnm(&img.to_pgm()).unwrap(), img);
    }

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[7, 9]);
    }

    #[test]
    fn ppm_to_luma() {
        let mut bytes = b"P6 2 1 255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 10, 20, 30]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[76, 18]);
    }

    #[test]
    fn pnm_errors() {
        assert!(matches!(decode_pnm(b"P2 1 1 255\n0"), Err(Error::BadImage(_))));
        assert!(matches!(decode_pnm(b"P5 4 4 255\n\x00"), Err(Error::BadImage(_))));
        assert!(matches!(decode_pnm(b"P5 1 1 65535\n\x00\x00"), Err(Error::BadImage(_))));
    }

    fn record(lines: Vec<[f64; 4]>) -> String {
        serde_json::json!({"image_id": "a", "width": 100, "height": 80, "lines": lines}).to_string()
    }

    #[test]
    fn minimal_record() {
        let recs = parse_annotations(&record(vec![[0.0, 40.0, 100.0, 40.0]]), "t").unwrap();
        assert_eq!(recs.len(), 1);
        let lines = recs[0].polar_lines().unwrap();
        assert!((lines[0].rho()).abs() < 1e-12);
        assert!((lines[0].theta() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn empty_lines_are_valid() {
        let recs = parse_annotations(&record(vec![]), "t").unwrap();
        assert!(recs[0].lines.is_empty());
    }

    #[test]
    fn off_boundary_endpoint_rejected() {
        let err = parse_annotations(&record(vec![[3.0, 40.0, 100.0, 40.0]]), "t").unwrap_err();
        assert!(matches!(err, Error::InvariantViolation { ref record, .. } if record == "a"));
        // Within half a pixel is fine.
        assert!(parse_annotations(&record(vec![[0.4, 40.0, 100.2, 40.0]]), "t").is_ok());
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = parse_annotations("{\"image_id\": \"a\",\n \"width\": 10}", "f.json").unwrap_err();
        match err {
            Error::Parse { field, .. } => assert_eq!(field, "height"),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_annotations("{\n\n oops", "f.json").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn composition_class_round_trip() {
        let frame = Frame::new(100, 80).unwrap();
        let mut r = AnnotationRecord::from_lines("b", &frame, &[Line::new(5.0, 0.4)]).unwrap();
        r.composition_class = Some(CompositionClass::Diagonal);
        let text = annotations_to_json(std::slice::from_ref(&r));
        assert!(text.contains("\"diagonal\""));
        assert_eq!(parse_annotations(&text, "t").unwrap(), vec![r]);
    }

    #[test]
    fn candidates_csv() {
        let frame = Frame::new(100, 100).unwrap();
        let text = "rho,theta,prob,d_rho,d_theta\n1.5,0.25,0.9,0.5,-0.01\n-3,2,0,0,0\n";
        let c = parse_candidates(text, &frame, "c.csv").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.probs(), &[0.9, 0.0]);
        assert_eq!(candidates_to_csv(&c), text);

        let err = parse_candidates("rho,theta,prob,d_rho,d_theta\n1,2,x,0,0\n", &frame, "c.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, ref field, .. } if field == "prob"));
        assert!(parse_candidates("rho,theta\n", &frame, "c.csv").is_err());
        assert!(parse_candidates("rho,theta,prob,d_rho,d_theta\n1,2,1.5,0,0\n", &frame, "c.csv").is_err());
    }

    #[test]
    fn index_text() {
        let text = "a\t0.9\t1,2,3\nb\t0.5\t0,0,1\n";
        let idx = parse_index(text, "i").unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(index_to_text(&idx), text);
        assert!(matches!(
            parse_index("a\t0.9\t1,2\nb\t0.9\t1\n", "i"),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(parse_index("a\tx\t1\n", "i"), Err(Error::Parse { .. })));
    }

    #[test]
    fn config_overrides() {
        let cfg = Config::parse(
            "# thresholds\nk = 6\nnms_threshold = 0.1 # looser\n\nw_penalty=0.5\n",
            "c",
        )
        .unwrap();
        assert_eq!(cfg.k, 6);
        assert_eq!(cfg.nms_threshold, 0.1);
        assert_eq!(cfg.w_penalty, 0.5);
        assert_eq!(cfg.retrieval_threshold, 0.75);
        assert!(matches!(Config::parse("bogus = 1", "c"), Err(Error::Parse { .. })));
        assert!(Config::parse("k = -1", "c").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
