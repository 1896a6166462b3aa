use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::Sentence;
use crate::error::{Error, Result};

/// Tag id reserved for `O`.
pub const OUTSIDE: usize = 0;

/// A labelled span `[start, end)`; `label` indexes the event types of a [`TagSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

/// BI/O tag inventory: `O` plus `B-t`/`I-t` for every event type.
///
/// Ids are `0` for `O`, `1 + 2k` for `B-t_k` and `2 + 2k` for `I-t_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSet {
    event_types: Vec<String>,
    type_index: BTreeMap<String, usize>,
}

impl TagSet {
    pub fn new<I, S>(event_types: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut types = Vec::new();
        let mut type_index = BTreeMap::new();
        for t in event_types {
            let t = t.into();
            if t.is_empty() || t == "O" {
                return Err(Error::Argument(format!("invalid event type `{t}`")));
            }
            if type_index.insert(t.clone(), types.len()).is_some() {
                return Err(Error::Argument(format!("duplicate event type `{t}`")));
            }
            types.push(t);
        }
        Ok(TagSet {
            event_types: types,
            type_index,
        })
    }

    /// Number of tags, `2·N + 1`.
    pub fn len(&self) -> usize {
        2 * self.event_types.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn event_types(&self) -> &[String] {
        &self.event_types
    }

    pub fn type_id(&self, event_type: &str) -> Result<usize> {
        self.type_index
            .get(event_type)
            .copied()
            .ok_or_else(|| Error::Vocabulary {
                kind: "event type",
                value: event_type.to_string(),
            })
    }

    pub fn begin(type_id: usize) -> usize {
        1 + 2 * type_id
    }

    pub fn inside(type_id: usize) -> usize {
        2 + 2 * type_id
    }

    pub fn tag_name(&self, id: usize) -> Option<String> {
        if id == OUTSIDE {
            return Some("O".to_string());
        }
        let t = self.event_types.get((id - 1) / 2)?;
        let prefix = if id % 2 == 1 { "B" } else { "I" };
        Some(format!("{prefix}-{t}"))
    }

    pub fn tag_id(&self, tag: &str) -> Result<usize> {
        if tag == "O" {
            return Ok(OUTSIDE);
        }
        let unknown = || Error::Vocabulary {
            kind: "tag",
            value: tag.to_string(),
        };
        let (prefix, t) = tag.split_once('-').ok_or_else(unknown)?;
        let k = self.type_index.get(t).copied().ok_or_else(unknown)?;
        match prefix {
            "B" => Ok(Self::begin(k)),
            "I" => Ok(Self::inside(k)),
            _ => Err(unknown()),
        }
    }

    /// Encodes spans as tag ids over a sequence of length `n`.
    pub fn encode_spans(&self, spans: &[Span], n: usize) -> Result<Vec<usize>> {
        let mut tags = vec![OUTSIDE; n];
        for s in spans {
            if s.label >= self.event_types.len() || s.start >= s.end || s.end > n {
                return Err(Error::Argument(format!("span {s:?} invalid for length {n}")));
            }
            tags[s.start] = Self::begin(s.label);
            for t in &mut tags[s.start + 1..s.end] {
                *t = Self::inside(s.label);
            }
        }
        Ok(tags)
    }

    /// Gold tag ids of a sentence.
    pub fn tags_for(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        let spans = self.spans_for(sentence)?;
        self.encode_spans(&spans, sentence.len())
    }

    pub fn spans_for(&self, sentence: &Sentence) -> Result<Vec<Span>> {
        sentence
            .triggers
            .iter()
            .map(|t| {
                Ok(Span {
                    start: t.start,
                    end: t.end,
                    label: self.type_id(&t.event_type)?,
                })
            })
            .collect()
    }

    /// Decodes tag ids into spans. An `I-t` that does not continue a span of
    /// the same type opens a new one.
    pub fn decode(&self, tags: &[usize]) -> Vec<Span> {
        let mut spans = Vec::new();
        let mut open: Option<Span> = None;
        for (i, &tag) in tags.iter().enumerate() {
            let kind = if tag == OUTSIDE || tag >= self.len() {
                None
            } else {
                Some(((tag - 1) / 2, tag % 2 == 1))
            };
            match (kind, open.as_mut()) {
                (Some((label, false)), Some(span)) if span.label == label && span.end == i => {
                    span.end = i + 1;
                }
                (Some((label, _)), _) => {
                    spans.extend(open.take());
                    open = Some(Span {
                        start: i,
                        end: i + 1,
                        label,
                    });
                }
                (None, _) => spans.extend(open.take()),
            }
        }
        spans.extend(open);
        spans
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn types(n: usize) -> TagSet {
        TagSet::new((0..n).map(|i| format!("T{i}"))).unwrap()
    }

    #[test]
    fn tag_count() {
        assert_eq!(types(33).len(), 67);
        assert_eq!(types(0).len(), 1);
    }

    #[test]
    fn names_round_trip() {
        let ts = types(4);
        for id in 0..ts.len() {
            let name = ts.tag_name(id).unwrap();
            assert_eq!(ts.tag_id(&name).unwrap(), id);
        }
        assert_eq!(ts.tag_name(ts.len()), None);
        assert!(ts.tag_id("B-nope").is_err());
        assert!(ts.tag_id("X-T0").is_err());
    }

    #[test]
    fn unknown_event_type() {
        assert!(matches!(types(2).type_id("Meet"), Err(Error::Vocabulary { .. })));
    }

    #[test]
    fn duplicates_rejected() {
        assert!(TagSet::new(["A", "A"]).is_err());
        assert!(TagSet::new(["O"]).is_err());
    }

    #[test]
    fn no_triggers_all_outside() {
        assert_eq!(types(3).encode_spans(&[], 4).unwrap(), vec![0; 4]);
    }

    #[test]
    fn stray_inside_opens_span() {
        let ts = types(2);
        let spans = ts.decode(&[TagSet::inside(1), TagSet::inside(1), TagSet::inside(0), 0]);
        assert_eq!(
            spans,
            vec![
                Span { start: 0, end: 2, label: 1 },
                Span { start: 2, end: 3, label: 0 }
            ]
        );
    }

    fn spans_strategy() -> impl Strategy<Value = (usize, Vec<Span>)> {
        (1usize..30).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 1usize..4, 0usize..5), 0..8).prop_map(move |raw| {
                let mut spans: Vec<Span> = Vec::new();
                let mut sorted = raw;
                sorted.sort();
                for (start, len, label) in sorted {
                    let end = (start + len).min(n);
                    if spans.last().map_or(true, |s| s.end <= start) {
                        spans.push(Span { start, end, label });
                    }
                }
                (n, spans)
            })
        })
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip((n, spans) in spans_strategy()) {
            let ts = types(5);
            let tags = ts.encode_spans(&spans, n).unwrap();
            prop_assert_eq!(ts.decode(&tags), spans);
        }
    }
}
