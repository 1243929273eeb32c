//! Name normalization, Levenshtein distance and deduplication against an
//! external name list.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Strips diacritics, lowercases and collapses runs of whitespace.
pub fn normalize_name(name: &str) -> String {
    let stripped: String = name.nfd().filter(|c| !is_combining_mark(*c)).collect();
    let lower = stripped.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Levenshtein distance between the normalized forms, counted in chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = normalize_name(a).chars().collect();
    let b: Vec<char> = normalize_name(b).chars().collect();
    levenshtein(&a, &b)
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = Vec::with_capacity(b.len() + 1);
    for (i, ca) in a.iter().enumerate() {
        cur.clear();
        cur.push(i + 1);
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur.push(sub.min(prev[j + 1] + 1).min(cur[j] + 1));
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Indices (ascending) of internal names within `max_distance` of any
/// external name.
pub fn dedup_against(internal: &[String], external: &[String], max_distance: usize) -> Vec<usize> {
    if max_distance == 0 {
        let ext: BTreeSet<String> = external.iter().map(|n| normalize_name(n)).collect();
        return internal
            .iter()
            .enumerate()
            .filter(|(_, n)| ext.contains(&normalize_name(n)))
            .map(|(i, _)| i)
            .collect();
    }
    let ext: Vec<Vec<char>> = external
        .iter()
        .map(|n| normalize_name(n).chars().collect())
        .collect();
    internal
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            let a: Vec<char> = normalize_name(n).chars().collect();
            ext.iter()
                .any(|b| a.len().abs_diff(b.len()) <= max_distance && levenshtein(&a, b) <= max_distance)
        })
        .map(|(i, _)| i)
        .collect()
}
