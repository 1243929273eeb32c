//! Training schedules as `key = value` lines. Keys not given keep their
//! defaults; when `batch_size` is given, the pair and subject counts default
//! to values derived from it. `milestones` is a comma-separated list of
//! epochs and may be empty to select the default quarter points.

use std::collections::BTreeMap;

use facerep_core::trainer::TrainingSchedule;

use super::{content_lines, parse_num, ParseError};

const KEYS: [&str; 15] = [
    "lr_initial",
    "lr_final",
    "alpha_initial",
    "alpha_final",
    "milestones",
    "decay_conv",
    "decay_fc",
    "momentum",
    "batch_size",
    "epochs",
    "seed",
    "margin",
    "positives_per_batch",
    "negatives_per_batch",
    "subjects_per_batch",
];

/// Splits `key = value` lines, rejecting unknown and repeated keys.
pub(crate) fn key_values<'a>(text: &'a str, known: &[&str]) -> Result<BTreeMap<&'a str, (usize, &'a str)>, ParseError> {
    let mut map = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ParseError::new(n, "expected key = value"))?;
        let k = k.trim();
        if !known.contains(&k) {
            return Err(ParseError::new(n, format!("unknown key {k:?}")));
        }
        if map.insert(k, (n, v.trim())).is_some() {
            return Err(ParseError::new(n, format!("repeated key {k:?}")));
        }
    }
    Ok(map)
}

pub fn parse_schedule(text: &str) -> Result<TrainingSchedule, ParseError> {
    let map = key_values(text, &KEYS)?;
    let get = |k: &str| map.get(k).copied();
    let mut s = match get("batch_size") {
        Some((n, v)) => TrainingSchedule::with_batch_size(parse_num(n, v, "batch_size")?),
        None => TrainingSchedule::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some((n, v)) = get(stringify!($field)) {
                s.$field = parse_num(n, v, stringify!($field))?;
            }
        )*};
    }
    set!(
        lr_initial,
        lr_final,
        alpha_initial,
        alpha_final,
        decay_conv,
        decay_fc,
        momentum,
        epochs,
        seed,
        margin,
        positives_per_batch,
        negatives_per_batch,
        subjects_per_batch
    );
    if let Some((n, v)) = get("milestones") {
        s.milestones = v
            .split(',')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(|m| parse_num(n, m, "milestone"))
            .collect::<Result<_, _>>()?;
    }
    s.validate().map_err(|e| ParseError::new(0, e.to_string()))?;
    Ok(s)
}

pub fn format_schedule(s: &TrainingSchedule) -> String {
    let milestones: Vec<String> = s.milestones.iter().map(|m| m.to_string()).collect();
    format!(
        "lr_initial = {}\nlr_final = {}\nalpha_initial = {}\nalpha_final = {}\nmilestones = {}\n\
         decay_conv = {}\ndecay_fc = {}\nmomentum = {}\nbatch_size = {}\nepochs = {}\nseed = {}\n\
         margin = {}\npositives_per_batch = {}\nnegatives_per_batch = {}\nsubjects_per_batch = {}\n",
        s.lr_initial,
        s.lr_final,
        s.alpha_initial,
        s.alpha_final,
        milestones.join(","),
        s.decay_conv,
        s.decay_fc,
        s.momentum,
        s.batch_size,
        s.epochs,
        s.seed,
        s.margin,
        s.positives_per_batch,
        s.negatives_per_batch,
        s.subjects_per_batch
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        assert_eq!(parse_schedule("").unwrap(), TrainingSchedule::default());
        let s = parse_schedule("batch_size = 16\nepochs=3\nmilestones = 1, 2\n# note\nseed = 7\n").unwrap();
        assert_eq!(s.positives_per_batch, 4);
        assert_eq!(s.subjects_per_batch, 8);
        assert_eq!(s.milestones, vec![1, 2]);
        assert_eq!(s.seed, 7);
        let text = format_schedule(&s);
        assert_eq!(parse_schedule(&text).unwrap(), s);
        assert_eq!(format_schedule(&parse_schedule(&text).unwrap()), text);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(parse_schedule("epochs = 1\nlearning = 2\n").unwrap_err().line, 2);
        assert_eq!(parse_schedule("epochs = 1\nepochs = 2\n").unwrap_err().line, 2);
        assert_eq!(parse_schedule("epochs = x\n").unwrap_err().line, 1);
        assert_eq!(parse_schedule("momentum = 1.5\n").unwrap_err().line, 0);
    }
}
