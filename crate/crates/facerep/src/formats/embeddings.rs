//! Embedding tables: one vector per line, the id followed by its values, all
//! tab-separated. Every vector in a file has the same dimension.

use std::collections::HashMap;

use super::{content_lines, parse_num, ParseError};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Embeddings {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

/// `dir/name.ext` becomes `dir/name`; ids without an extension are unchanged.
pub fn strip_extension(id: &str) -> &str {
    let base = id.rfind('/').map_or(0, |i| i + 1);
    match id[base..].rfind('.') {
        Some(dot) if dot > 0 => &id[..base + dot],
        _ => id,
    }
}

impl Embeddings {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(Vec::len)
    }

    /// Maps ids to row indices. Each row is reachable by its exact id and, if
    /// unambiguous, by the id with its file extension removed.
    pub fn index(&self) -> Result<HashMap<String, usize>, String> {
        let mut exact = HashMap::with_capacity(self.len());
        for (i, id) in self.ids.iter().enumerate() {
            if exact.insert(id.clone(), i).is_some() {
                return Err(format!("duplicate embedding id {id:?}"));
            }
        }
        let mut stripped: HashMap<String, Option<usize>> = HashMap::new();
        for (i, id) in self.ids.iter().enumerate() {
            let s = strip_extension(id);
            if s != id {
                stripped
                    .entry(s.to_string())
                    .and_modify(|e| *e = None)
                    .or_insert(Some(i));
            }
        }
        for (s, i) in stripped {
            if let Some(i) = i {
                exact.entry(s).or_insert(i);
            }
        }
        Ok(exact)
    }
}

pub fn parse_embeddings(text: &str) -> Result<Embeddings, ParseError> {
    let mut e = Embeddings::default();
    for (n, line) in content_lines(text) {
        let mut f = line.split('\t');
        let id = f.next().unwrap_or_default();
        if id.is_empty() {
            return Err(ParseError::new(n, "empty id"));
        }
        let v = f
            .map(|x| {
                let v: f64 = parse_num(n, x, "embedding value")?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ParseError::new(n, "non-finite embedding value"))
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if v.is_empty() {
            return Err(ParseError::new(n, "no values"));
        }
        if let Some(d) = e.dim() {
            if v.len() != d {
                return Err(ParseError::new(n, format!("dimension {} differs from {d}", v.len())));
            }
        }
        e.ids.push(id.to_string());
        e.vectors.push(v);
    }
    Ok(e)
}

pub fn format_embeddings(e: &Embeddings) -> String {
    let mut out = String::new();
    for (id, v) in e.ids.iter().zip(&e.vectors) {
        out.push_str(id);
        for x in v {
            out.push('\t');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stripping() {
        assert_eq!(strip_extension("a/b/c.pgm"), "a/b/c");
        assert_eq!(strip_extension("a.b/c"), "a.b/c");
        assert_eq!(strip_extension(".hidden"), ".hidden");
        assert_eq!(strip_extension("x.tar.gz"), "x.tar");
    }

    #[test]
    fn index_and_errors() {
        let e = parse_embeddings("a/1.pgm\t1\t2\nb/1.jpg\t3\t4\nb/1.png\t5\t6\n").unwrap();
        let idx = e.index().unwrap();
        assert_eq!(idx["a/1"], 0);
        assert_eq!(idx["b/1.png"], 2);
        assert!(!idx.contains_key("b/1"));
        assert_eq!(parse_embeddings("a\t1\nb\t1\t2\n").unwrap_err().line, 2);
        assert_eq!(parse_embeddings("a\n").unwrap_err().line, 1);
        assert_eq!(parse_embeddings("a\tNaN\n").unwrap_err().line, 1);
        assert!(parse_embeddings("a\t1\na\t2\n").unwrap().index().is_err());
    }

    proptest! {
        #[test]
        fn values_round_trip_exactly(v in proptest::collection::vec(-1e300f64..1e300, 1..6)) {
            let e = Embeddings { ids: vec!["x".into()], vectors: vec![v] };
            prop_assert_eq!(parse_embeddings(&format_embeddings(&e)).unwrap(), e);
        }
    }
}
