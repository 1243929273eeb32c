//! Protocol lists. Ids refer to rows of an embedding table.
//!
//! Pair lists are tab-separated `fold  id_a  id_b  label` lines, `label`
//! being 1 (same subject) or 0. The LFW `pairs.txt` layout is also accepted:
//! a `FOLDS N` header, then per fold N `name i j` genuine lines followed by N
//! `name1 i name2 j` impostor lines, with ids expanded to `name/name_000i`.
//!
//! BLUFR trial lists are `trial  role  id` lines with `role` one of `train`,
//! `test`, `gallery` or `probe`. Video lists are `fold  label  a  b` lines
//! whose `a` and `b` are comma-separated frame ids.

use std::collections::BTreeMap;

use super::{content_lines, parse_flag, parse_num, ParseError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRef {
    pub a: String,
    pub b: String,
    pub genuine: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrialRef {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub gallery: Vec<String>,
    pub probes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoRef {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub genuine: bool,
}

fn fields(n: usize, line: &str, k: usize) -> Result<Vec<&str>, ParseError> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != k {
        return Err(ParseError::new(n, format!("expected {k} tab-separated fields, found {}", f.len())));
    }
    if f.iter().any(|x| x.is_empty()) {
        return Err(ParseError::new(n, "empty field"));
    }
    Ok(f)
}

fn lfw_id(n: usize, name: &str, index: &str) -> Result<String, ParseError> {
    let i: usize = parse_num(n, index, "image number")?;
    Ok(format!("{name}/{name}_{i:04}"))
}

fn parse_lfw(lines: &[(usize, &str)], folds: usize, per: usize) -> Result<Vec<Vec<PairRef>>, ParseError> {
    let body = &lines[1..];
    if body.len() != folds * 2 * per {
        let n = body.last().map_or(lines[0].0, |l| l.0);
        return Err(ParseError::new(
            n,
            format!("header announces {} pairs, file has {}", folds * 2 * per, body.len()),
        ));
    }
    body.chunks(2 * per)
        .map(|fold| {
            fold.iter()
                .enumerate()
                .map(|(k, &(n, line))| {
                    let f: Vec<&str> = line.split_whitespace().collect();
                    if k < per {
                        match f[..] {
                            [name, i, j] => Ok(PairRef {
                                a: lfw_id(n, name, i)?,
                                b: lfw_id(n, name, j)?,
                                genuine: true,
                            }),
                            _ => Err(ParseError::new(n, "expected name i j")),
                        }
                    } else {
                        match f[..] {
                            [n1, i, n2, j] => Ok(PairRef {
                                a: lfw_id(n, n1, i)?,
                                b: lfw_id(n, n2, j)?,
                                genuine: false,
                            }),
                            _ => Err(ParseError::new(n, "expected name1 i name2 j")),
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Folds in ascending order of their numbers.
pub fn parse_pairs(text: &str) -> Result<Vec<Vec<PairRef>>, ParseError> {
    let lines: Vec<(usize, &str)> = content_lines(text).collect();
    if let Some(&(_, first)) = lines.first() {
        let h: Vec<&str> = first.split_whitespace().collect();
        if h.len() == 2 {
            if let (Ok(folds), Ok(per)) = (h[0].parse(), h[1].parse()) {
                return parse_lfw(&lines, folds, per);
            }
        }
    }
    let mut folds: BTreeMap<usize, Vec<PairRef>> = BTreeMap::new();
    for (n, line) in lines {
        let f = fields(n, line, 4)?;
        folds.entry(parse_num(n, f[0], "fold")?).or_default().push(PairRef {
            a: f[1].to_string(),
            b: f[2].to_string(),
            genuine: parse_flag(n, f[3], "label")?,
        });
    }
    Ok(folds.into_values().collect())
}

pub fn format_pairs(folds: &[Vec<PairRef>]) -> String {
    let mut out = String::new();
    for (k, fold) in folds.iter().enumerate() {
        for p in fold {
            out.push_str(&format!("{k}\t{}\t{}\t{}\n", p.a, p.b, u8::from(p.genuine)));
        }
    }
    out
}

pub fn parse_blufr(text: &str) -> Result<Vec<TrialRef>, ParseError> {
    let mut trials: BTreeMap<usize, TrialRef> = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let f = fields(n, line, 3)?;
        let t = trials.entry(parse_num(n, f[0], "trial")?).or_default();
        let list = match f[1] {
            "train" => &mut t.train,
            "test" => &mut t.test,
            "gallery" => &mut t.gallery,
            "probe" => &mut t.probes,
            r => return Err(ParseError::new(n, format!("unknown role {r:?}"))),
        };
        list.push(f[2].to_string());
    }
    Ok(trials.into_values().collect())
}

pub fn format_blufr(trials: &[TrialRef]) -> String {
    let mut out = String::new();
    for (k, t) in trials.iter().enumerate() {
        for (role, ids) in [("train", &t.train), ("test", &t.test), ("gallery", &t.gallery), ("probe", &t.probes)] {
            for id in ids {
                out.push_str(&format!("{k}\t{role}\t{id}\n"));
            }
        }
    }
    out
}

pub fn parse_video(text: &str) -> Result<Vec<Vec<VideoRef>>, ParseError> {
    let mut folds: BTreeMap<usize, Vec<VideoRef>> = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let f = fields(n, line, 4)?;
        let frames = |s: &str| -> Result<Vec<String>, ParseError> {
            let v: Vec<String> = s.split(',').map(|x| x.trim().to_string()).collect();
            if v.iter().any(String::is_empty) {
                return Err(ParseError::new(n, "empty frame id"));
            }
            Ok(v)
        };
        folds.entry(parse_num(n, f[0], "fold")?).or_default().push(VideoRef {
            genuine: parse_flag(n, f[1], "label")?,
            a: frames(f[2])?,
            b: frames(f[3])?,
        });
    }
    Ok(folds.into_values().collect())
}

pub fn format_video(folds: &[Vec<VideoRef>]) -> String {
    let mut out = String::new();
    for (k, fold) in folds.iter().enumerate() {
        for v in fold {
            out.push_str(&format!("{k}\t{}\t{}\t{}\n", u8::from(v.genuine), v.a.join(","), v.b.join(",")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_pairs() {
        let text = "1\ta\tb\t0\n0\ta\tc\t1\n1\tc\td\t1\n";
        let folds = parse_pairs(text).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0], vec![PairRef { a: "a".into(), b: "c".into(), genuine: true }]);
        assert_eq!(parse_pairs(&format_pairs(&folds)).unwrap(), folds);
        assert_eq!(parse_pairs("0\ta\tb\n").unwrap_err().line, 1);
        assert_eq!(parse_pairs("0\ta\tb\tmaybe\n").unwrap_err().line, 1);
    }

    #[test]
    fn lfw_layout() {
        let text = "2\t1\nAl_Gore\t1\t3\nAl_Gore\t2\tBo_Li\t1\nBo_Li\t1\t2\nCy\t4\tAl_Gore\t1\n";
        let folds = parse_pairs(text).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0][0].a, "Al_Gore/Al_Gore_0001");
        assert_eq!(folds[0][0].b, "Al_Gore/Al_Gore_0003");
        assert!(folds[0][0].genuine);
        assert_eq!(folds[1][1].a, "Cy/Cy_0004");
        assert!(!folds[1][1].genuine);
        assert!(parse_pairs("2\t1\nA\t1\t2\n").is_err());
    }

    #[test]
    fn blufr_and_video() {
        let text = "0\ttrain\tx\n0\tgallery\ty\n1\tprobe\tz\n0\ttest\tw\n";
        let t = parse_blufr(text).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].train, vec!["x"]);
        assert_eq!(t[1].probes, vec!["z"]);
        assert_eq!(parse_blufr(&format_blufr(&t)).unwrap(), t);
        assert_eq!(parse_blufr("0\tjudge\tx\n").unwrap_err().line, 1);

        let v = parse_video("0\t1\ta,b\tc\n0\t0\td\te,f\n").unwrap();
        assert_eq!(v[0][0].a, vec!["a", "b"]);
        assert_eq!(parse_video(&format_video(&v)).unwrap(), v);
        assert!(parse_video("0\t1\ta,,b\tc\n").is_err());
    }
}
