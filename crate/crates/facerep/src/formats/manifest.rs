//! Face manifests: one tab-separated record per line,
//!
//! ```text
//! path  subject  x1  y1  x2  y2  mirrored
//! ```
//!
//! with `mirrored` 0 or 1 meaning "flip horizontally after alignment". An
//! optional `# canonical SIZE Q1X Q1Y Q2X Q2Y` line records the crop layout;
//! it defaults to the 100x100 layout. Records whose two landmarks coincide
//! are set aside rather than rejected so callers can skip and report them.

use facerep_core::faceproc::{AlignConfig, FaceRecord, LandmarkPair, Manifest, Point};

use super::{content_lines, parse_flag, parse_num, ParseError};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestFile {
    pub manifest: Manifest,
    /// `(line, path)` of records with coincident landmarks.
    pub rejected: Vec<(usize, String)>,
}

fn parse_canonical(n: usize, rest: &str) -> Result<AlignConfig, ParseError> {
    let f: Vec<&str> = rest.split_whitespace().collect();
    if f.len() != 5 {
        return Err(ParseError::new(n, "canonical line needs SIZE Q1X Q1Y Q2X Q2Y"));
    }
    let c = AlignConfig {
        size: parse_num(n, f[0], "crop size")?,
        q1: Point::new(parse_num(n, f[1], "q1 x")?, parse_num(n, f[2], "q1 y")?),
        q2: Point::new(parse_num(n, f[3], "q2 x")?, parse_num(n, f[4], "q2 y")?),
    };
    c.validate().map_err(|e| ParseError::new(n, e.to_string()))?;
    Ok(c)
}

pub fn parse_manifest(text: &str) -> Result<ManifestFile, ParseError> {
    let mut canonical = AlignConfig::default();
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim().strip_prefix("# canonical ") {
            canonical = parse_canonical(i + 1, rest)?;
        }
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (n, line) in content_lines(text) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(ParseError::new(n, format!("expected 7 tab-separated fields, found {}", f.len())));
        }
        if f[0].is_empty() || f[1].is_empty() {
            return Err(ParseError::new(n, "empty path or subject"));
        }
        let mut c = [0.0f64; 4];
        for (k, v) in c.iter_mut().enumerate() {
            *v = parse_num(n, f[2 + k], "landmark coordinate")?;
            if !v.is_finite() {
                return Err(ParseError::new(n, "non-finite landmark coordinate"));
            }
        }
        let mirrored = parse_flag(n, f[6], "mirrored flag")?;
        match LandmarkPair::new(Point::new(c[0], c[1]), Point::new(c[2], c[3])) {
            Ok(landmarks) => records.push(FaceRecord {
                path: f[0].to_string(),
                subject: f[1].to_string(),
                landmarks,
                mirrored,
            }),
            Err(_) => rejected.push((n, f[0].to_string())),
        }
    }
    Ok(ManifestFile {
        manifest: Manifest::new(records, canonical),
        rejected,
    })
}

pub fn format_manifest(manifest: &Manifest) -> String {
    let c = manifest.canonical;
    let mut out = format!("# canonical {} {} {} {} {}\n", c.size, c.q1.x, c.q1.y, c.q2.x, c.q2.y);
    for r in manifest.records() {
        let l = r.landmarks;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.path,
            r.subject,
            l.p1.x,
            l.p1.y,
            l.p2.x,
            l.p2.y,
            u8::from(r.mirrored)
        ));
    }
    out
}
