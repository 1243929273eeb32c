//! Forge inputs as JSON lines.
//!
//! A photo line is
//! `{"id": "p1", "image": "p1.jpg", "faces": [{"id": "f0", "embedding": [..], "landmarks": [x1, y1, x2, y2]}], "tags": ["c7"]}`
//! where `image` and `landmarks` are optional. A seed line is
//! `{"id": "c7", "name": "Some Name", "seeds": [[..], ..]}`. External name
//! lists hold one name per line. Forge settings are `key = value` lines
//! with keys `threshold`, `aggregation` (`max` or `mean`), `min_images`,
//! `max_distance` and `report_lowest`.

use facerep_core::faceproc::{LandmarkPair, Point};
use facerep_core::forge::{Aggregation, CelebritySeed, Face, ForgeConfig, Photo};
use serde::{Deserialize, Serialize};

use super::{key_values, parse_num, ParseError};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaceLine {
    id: String,
    embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    landmarks: Option<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhotoLine {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    faces: Vec<FaceLine>,
    tags: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedLine {
    id: String,
    name: String,
    seeds: Vec<Vec<f64>>,
}

fn json_lines<T: for<'de> Deserialize<'de>>(text: &str) -> impl Iterator<Item = Result<(usize, T), ParseError>> + '_ {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| ParseError::new(i + 1, e.to_string()))
        })
}

pub fn parse_photos(text: &str) -> Result<Vec<Photo>, ParseError> {
    json_lines::<PhotoLine>(text)
        .map(|r| {
            let (n, p) = r?;
            let faces = p
                .faces
                .into_iter()
                .map(|f| {
                    let landmarks = f
                        .landmarks
                        .map(|[x1, y1, x2, y2]| LandmarkPair::new(Point::new(x1, y1), Point::new(x2, y2)))
                        .transpose()
                        .map_err(|e| ParseError::new(n, format!("face {}: {e}", f.id)))?;
                    Ok(Face {
                        id: f.id,
                        embedding: f.embedding,
                        landmarks,
                    })
                })
                .collect::<Result<_, ParseError>>()?;
            Ok(Photo {
                id: p.id,
                image: p.image,
                faces,
                tags: p.tags,
            })
        })
        .collect()
}

pub fn format_photos(photos: &[Photo]) -> String {
    let mut out = String::new();
    for p in photos {
        let line = PhotoLine {
            id: p.id.clone(),
            image: p.image.clone(),
            faces: p
                .faces
                .iter()
                .map(|f| FaceLine {
                    id: f.id.clone(),
                    embedding: f.embedding.clone(),
                    landmarks: f.landmarks.map(|l| [l.p1.x, l.p1.y, l.p2.x, l.p2.y]),
                })
                .collect(),
            tags: p.tags.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_seeds(text: &str) -> Result<Vec<CelebritySeed>, ParseError> {
    json_lines::<SeedLine>(text)
        .map(|r| {
            let (_, s) = r?;
            Ok(CelebritySeed {
                id: s.id,
                name: s.name,
                seeds: s.seeds,
            })
        })
        .collect()
}

pub fn format_seeds(seeds: &[CelebritySeed]) -> String {
    let mut out = String::new();
    for s in seeds {
        let line = SeedLine {
            id: s.id.clone(),
            name: s.name.clone(),
            seeds: s.seeds.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

/// One name per line; surrounding whitespace and blank lines are dropped.
pub fn parse_names(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// Applies the settings in `text` on top of `base`.
pub fn parse_forge_config(text: &str, base: ForgeConfig) -> Result<ForgeConfig, ParseError> {
    let map = key_values(
        text,
        &["threshold", "aggregation", "min_images", "max_distance", "report_lowest"],
    )?;
    let mut c = base;
    for (k, (n, v)) in map {
        match k {
            "threshold" => c.threshold = parse_num(n, v, k)?,
            "min_images" => c.min_images = parse_num(n, v, k)?,
            "max_distance" => c.max_distance = parse_num(n, v, k)?,
            "report_lowest" => c.report_lowest = parse_num(n, v, k)?,
            _ => c.aggregation = parse_aggregation(v).map_err(|m| ParseError::new(n, m))?,
        }
    }
    Ok(c)
}

pub fn parse_aggregation(s: &str) -> Result<Aggregation, String> {
    match s.trim() {
        "max" => Ok(Aggregation::Max),
        "mean" => Ok(Aggregation::Mean),
        other => Err(format!("aggregation must be max or mean, not {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use facerep_core::forge::{annotated_world, AnnotatedWorldConfig};

    #[test]
    fn world_round_trips() {
        let cfg = AnnotatedWorldConfig {
            photos: 20,
            identities: 5,
            dim: 4,
            ..AnnotatedWorldConfig::default()
        };
        let w = annotated_world(&cfg, 1);
        assert_eq!(parse_photos(&format_photos(&w.photos)).unwrap(), w.photos);
        assert_eq!(parse_seeds(&format_seeds(&w.seeds)).unwrap(), w.seeds);
    }

    #[test]
    fn photo_details() {
        let text = "\n{\"id\":\"p\",\"image\":\"p.jpg\",\"faces\":[{\"id\":\"f\",\"embedding\":[1,0],\"landmarks\":[1,2,3,4]}],\"tags\":[\"c\"]}\n";
        let p = parse_photos(text).unwrap();
        assert_eq!(p[0].image.as_deref(), Some("p.jpg"));
        assert_eq!(p[0].faces[0].landmarks.unwrap().p2, Point::new(3.0, 4.0));
        assert_eq!(parse_photos(&format_photos(&p)).unwrap(), p);
        let bad = "{\"id\":\"p\",\"faces\":[{\"id\":\"f\",\"embedding\":[1],\"landmarks\":[1,1,1,1]}],\"tags\":[]}";
        assert_eq!(parse_photos(bad).unwrap_err().line, 1);
        assert_eq!(parse_photos("{\"id\":1}").unwrap_err().line, 1);
        assert_eq!(parse_names(" Ann Lee \n\nBo\n"), vec!["Ann Lee", "Bo"]);
    }

    #[test]
    fn forge_config() {
        let c = parse_forge_config("threshold = 0.3\naggregation = mean\nmin_images=2\n", ForgeConfig::default()).unwrap();
        assert_eq!(c.threshold, 0.3);
        assert_eq!(c.aggregation, Aggregation::Mean);
        assert_eq!(c.min_images, 2);
        assert_eq!(c.max_distance, 0);
        assert_eq!(parse_forge_config("aggregation = median\n", ForgeConfig::default()).unwrap_err().line, 1);
    }
}
