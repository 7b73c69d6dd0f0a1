//! Reply parsing against a query's closed option set.
//!
//! Templates request a fenced final line ("Answer: <option>"); when a model
//! drifts from that format the fallback is a case-insensitive longest match
//! of an option name on word boundaries anywhere in the reply.

use super::{AnswerPayload, BackendError, Query, QueryKind};
use crate::globalize::Relation;

/// Parse a raw reply into the query's payload shape.
pub fn parse_answer(query: &Query, raw: &str) -> Result<AnswerPayload, BackendError> {
    let invalid = || BackendError::InvalidAnswer {
        attempts: 0,
        raw: raw.to_string(),
    };
    match &query.kind {
        QueryKind::MultiChoice { items, options, .. } => {
            if items.len() == 1 {
                let choice = match_option(raw, options).ok_or_else(invalid)?;
                Ok(AnswerPayload::Choices(vec![choice]))
            } else {
                let choices = parse_numbered(raw, items.len(), options).ok_or_else(invalid)?;
                Ok(AnswerPayload::Choices(choices))
            }
        }
        QueryKind::MultiLabel { options, .. } => {
            let mut found: Vec<String> = options
                .iter()
                .filter(|o| contains_word(&raw.to_lowercase(), &o.to_lowercase()))
                .cloned()
                .collect();
            found.dedup();
            // "none" is requested for an empty answer; any reply is valid as
            // a (possibly empty) subset.
            Ok(AnswerPayload::Labels(found))
        }
        QueryKind::Presence { .. } | QueryKind::SameObject { .. } => {
            let yes_no = vec!["yes".to_string(), "no".to_string()];
            let choice = match_option(raw, &yes_no).ok_or_else(invalid)?;
            Ok(AnswerPayload::YesNo(choice == "yes"))
        }
        QueryKind::PairOrder { ternary, .. } => {
            let mut opts = vec!["first".to_string(), "second".to_string()];
            if *ternary {
                opts.push("equal".to_string());
                opts.push("same".to_string());
            }
            let choice = match_option(raw, &opts).ok_or_else(invalid)?;
            Ok(AnswerPayload::Relation(match choice.as_str() {
                "first" => Relation::Greater,
                "second" => Relation::Less,
                _ => Relation::Equal,
            }))
        }
    }
}

/// Pick an option out of a reply: an explicit "Answer:" line wins, otherwise
/// the longest option name found on word boundaries (case-insensitive).
/// Ties go to option-list order.
pub fn match_option(raw: &str, options: &[String]) -> Option<String> {
    let lower = raw.to_lowercase();
    // Last "answer:" line, matched exactly after trimming punctuation.
    for line in lower.lines().rev() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("answer:") {
            let cleaned = rest.trim().trim_matches(|c: char| !c.is_alphanumeric());
            for opt in options {
                if cleaned == opt.to_lowercase() {
                    return Some(opt.clone());
                }
            }
        }
    }
    let mut best: Option<&String> = None;
    for opt in options {
        if contains_word(&lower, &opt.to_lowercase())
            && best.map_or(true, |b| opt.len() > b.len())
        {
            best = Some(opt);
        }
    }
    best.cloned()
}

/// Parse "N: option" lines for a batched query; every item index 1..=n must
/// resolve exactly once.
fn parse_numbered(raw: &str, n: usize, options: &[String]) -> Option<Vec<String>> {
    let mut out: Vec<Option<String>> = vec![None; n];
    for line in raw.lines() {
        let line = line.trim().trim_start_matches("answer:").trim();
        let Some((head, rest)) = line.split_once(':') else {
            continue;
        };
        let head = head.trim().trim_start_matches(|c: char| !c.is_ascii_digit());
        let Ok(idx) = head.trim().parse::<usize>() else {
            continue;
        };
        if idx == 0 || idx > n {
            continue;
        }
        let choice = match_option(rest, options)?;
        if out[idx - 1].is_some() {
            return None; // duplicated index: positional mismatch
        }
        out[idx - 1] = Some(choice);
    }
    out.into_iter().collect()
}

/// Case-folded needle occurrence bounded by non-alphanumeric characters.
fn contains_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let hay = haystack.as_bytes();
    let mut start = 0usize;
    while let Some(pos) = haystack[start..].find(needle) {
        let at = start + pos;
        let end = at + needle.len();
        let left_ok = at == 0 || !is_wordish(hay[at - 1]);
        let right_ok = end >= hay.len() || !is_wordish(hay[end]);
        if left_ok && right_ok {
            return true;
        }
        start = at + 1;
        if start >= haystack.len() {
            break;
        }
    }
    false
}

fn is_wordish(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn opts(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn longest_boundary_match_wins() {
        let options = opts(&["cat", "dog", "sheepdog"]);
        assert_eq!(match_option("It is a dog.", &options), Some("dog".into()));
        assert_eq!(
            match_option("clearly a SHEEPDOG here", &options),
            Some("sheepdog".into())
        );
        assert_eq!(match_option("a catalog of items", &options), None);
        assert_eq!(match_option("no animal at all", &options), None);
    }

    #[test]
    fn answer_line_has_priority() {
        let options = opts(&["cat", "dog"]);
        let raw = "The image shows a dog chasing something.\nAnswer: cat";
        assert_eq!(match_option(raw, &options), Some("cat".into()));
    }

    #[test]
    fn numbered_batch_parses_positionally() {
        let options = opts(&["sky", "grass", "water"]);
        let raw = "1: sky\n2: grass\n3: sky";
        assert_eq!(
            parse_numbered(raw, 3, &options),
            Some(vec!["sky".into(), "grass".into(), "sky".into()])
        );
        assert_eq!(parse_numbered("1: sky\n2: grass", 3, &options), None);
        assert_eq!(parse_numbered("1: sky\n1: grass\n3: x", 3, &options), None);
    }

    #[test]
    fn pair_order_ternary_accepts_same() {
        let query = Query {
            image_id: "i".into(),
            template_id: "t".into(),
            kind: QueryKind::PairOrder {
                a_images: vec![],
                b_images: vec![],
                a: super::super::RegionSpec::FullImage,
                b: super::super::RegionSpec::FullImage,
                axis: crate::globalize::Axis::X,
                ternary: true,
            },
        };
        let ans = parse_answer(&query, "They look the same to me").unwrap();
        assert_eq!(ans, AnswerPayload::Relation(Relation::Equal));
        let ans = parse_answer(&query, "Answer: first").unwrap();
        assert_eq!(ans, AnswerPayload::Relation(Relation::Greater));
    }

    #[test]
    fn multilabel_collects_subset() {
        let query = Query {
            image_id: "i".into(),
            template_id: "t".into(),
            kind: QueryKind::MultiLabel {
                images: vec![],
                region: super::super::RegionSpec::FullImage,
                options: Arc::new(opts(&["person", "car", "dog"])),
            },
        };
        let ans = parse_answer(&query, "I can see a person and a dog.").unwrap();
        assert_eq!(ans, AnswerPayload::Labels(opts(&["person", "dog"])));
        let none = parse_answer(&query, "none").unwrap();
        assert_eq!(none, AnswerPayload::Labels(vec![]));
    }
}
