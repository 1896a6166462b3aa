use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Syntactic head of a token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Attached to the artificial ROOT (wire value 0).
    Root,
    /// Attached to another token, 0-based.
    Token(usize),
    /// The head was cut away by truncation.
    Detached,
}

/// Gold trigger span `[start, end)` with its event type.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Trigger {
    pub start: usize,
    pub end: usize,
    pub event_type: String,
}

impl Trigger {
    pub fn new(start: usize, end: usize, event_type: impl Into<String>) -> Self {
        Trigger {
            start,
            end,
            event_type: event_type.into(),
        }
    }
}

/// A tokenized, parsed sentence with gold triggers.
#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub entity_tags: Vec<String>,
    pub heads: Vec<Head>,
    pub dep_labels: Vec<String>,
    pub triggers: Vec<Trigger>,
}

impl Sentence {
    /// Builds a sentence from 1-based wire heads (0 = ROOT) and validates it.
    pub fn from_wire(
        tokens: Vec<String>,
        entity_tags: Vec<String>,
        dep_head: &[usize],
        dep_labels: Vec<String>,
        triggers: Vec<Trigger>,
    ) -> Result<Self> {
        let n = tokens.len();
        if dep_head.len() != n {
            return Err(Error::invalid(
                "dep_head",
                format!("{} heads for {n} tokens", dep_head.len()),
            ));
        }
        let mut heads = Vec::with_capacity(n);
        for (i, &h) in dep_head.iter().enumerate() {
            heads.push(match h {
                0 => Head::Root,
                h if h > n => {
                    return Err(Error::invalid(
                        "dep_head",
                        format!("head {h} of token {} exceeds length {n}", i + 1),
                    ))
                }
                h => Head::Token(h - 1),
            });
        }
        let roots = heads.iter().filter(|h| **h == Head::Root).count();
        if roots != 1 {
            return Err(Error::invalid(
                "dep_head",
                format!("expected exactly one ROOT head, found {roots}"),
            ));
        }
        let s = Sentence {
            tokens,
            entity_tags,
            heads,
            dep_labels,
            triggers,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the token attached to ROOT, if it survived truncation.
    pub fn root(&self) -> Option<usize> {
        self.heads.iter().position(|h| *h == Head::Root)
    }

    /// Wire-format heads, or `None` when a token is detached.
    pub fn wire_heads(&self) -> Option<Vec<usize>> {
        self.heads
            .iter()
            .map(|h| match h {
                Head::Root => Some(0),
                Head::Token(i) => Some(i + 1),
                Head::Detached => None,
            })
            .collect()
    }

    /// Checks the structural invariants. At most one token may be attached to
    /// ROOT; zero is only allowed once truncation detached some token.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if self.entity_tags.len() != n {
            return Err(Error::invalid(
                "entity_tags",
                format!("{} tags for {n} tokens", self.entity_tags.len()),
            ));
        }
        if self.heads.len() != n {
            return Err(Error::invalid(
                "dep_head",
                format!("{} heads for {n} tokens", self.heads.len()),
            ));
        }
        if self.dep_labels.len() != n {
            return Err(Error::invalid(
                "dep_label",
                format!("{} labels for {n} tokens", self.dep_labels.len()),
            ));
        }
        let mut roots = 0;
        let mut detached = false;
        for (i, h) in self.heads.iter().enumerate() {
            match *h {
                Head::Root => roots += 1,
                Head::Detached => detached = true,
                Head::Token(j) if j >= n => {
                    return Err(Error::invalid(
                        "dep_head",
                        format!("head {} of token {} exceeds length {n}", j + 1, i + 1),
                    ))
                }
                Head::Token(j) if j == i => {
                    return Err(Error::invalid(
                        "dep_head",
                        format!("token {} is its own head", i + 1),
                    ))
                }
                Head::Token(_) => {}
            }
        }
        if roots > 1 || (roots == 0 && !detached && n > 0) {
            return Err(Error::invalid(
                "dep_head",
                format!("expected exactly one ROOT head, found {roots}"),
            ));
        }
        let mut prev_end = 0;
        for t in &self.triggers {
            if t.start >= t.end || t.end > n {
                return Err(Error::invalid(
                    "triggers",
                    format!("span ({}, {}) out of bounds for length {n}", t.start, t.end),
                ));
            }
            if t.start < prev_end {
                return Err(Error::invalid(
                    "triggers",
                    format!("span ({}, {}) overlaps or is out of order", t.start, t.end),
                ));
            }
            prev_end = t.end;
        }
        Ok(())
    }

    /// Cuts the sentence to `max_len` tokens. Edges touching a cut token and
    /// triggers reaching past the cut are dropped. Returns whether anything
    /// was removed.
    pub fn truncate(&mut self, max_len: usize) -> bool {
        if self.tokens.len() <= max_len {
            return false;
        }
        self.tokens.truncate(max_len);
        self.entity_tags.truncate(max_len);
        self.dep_labels.truncate(max_len);
        self.heads.truncate(max_len);
        for h in &mut self.heads {
            if let Head::Token(j) = *h {
                if j >= max_len {
                    *h = Head::Detached;
                }
            }
        }
        self.triggers.retain(|t| t.end <= max_len);
        true
    }

    /// Undirected dependency edges `(head, dependent, label)`, 0-based;
    /// the ROOT attachment is not included.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &str)> + '_ {
        self.heads
            .iter()
            .zip(&self.dep_labels)
            .enumerate()
            .filter_map(|(d, (h, l))| match h {
                Head::Token(h) => Some((*h, d, l.as_str())),
                _ => None,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(|w| w.to_string()).collect()
    }

    #[test]
    fn minimal_record() {
        let s = Sentence::from_wire(
            words("Putin visited Bush"),
            words("B-PER O B-PER"),
            &[2, 0, 2],
            words("nsubj root dobj"),
            vec![Trigger::new(1, 2, "Meet")],
        )
        .unwrap();
        assert_eq!(s.root(), Some(1));
        assert_eq!(s.edges().count(), 2);
        assert_eq!(s.wire_heads().unwrap(), vec![2, 0, 2]);
    }

    #[test]
    fn head_out_of_bounds() {
        let err = Sentence::from_wire(
            words("a b c"),
            words("O O O"),
            &[5, 0, 2],
            words("x root y"),
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { field: "dep_head", .. }));
    }

    #[test]
    fn root_count_and_self_loop() {
        let two_roots = Sentence::from_wire(words("a b"), words("O O"), &[0, 0], words("r r"), vec![]);
        assert!(two_roots.is_err());
        let own = Sentence::from_wire(words("a b"), words("O O"), &[0, 2], words("r x"), vec![]);
        assert!(own.is_err());
    }

    #[test]
    fn field_lengths_named() {
        let err = Sentence::from_wire(words("a b"), words("O"), &[0, 1], words("r x"), vec![]).unwrap_err();
        assert!(matches!(err, Error::Validation { field: "entity_tags", .. }));
    }

    #[test]
    fn bad_triggers() {
        let mk = |t: Vec<Trigger>| Sentence::from_wire(words("a b c"), words("O O O"), &[0, 1, 1], words("r x y"), t);
        assert!(mk(vec![Trigger::new(2, 4, "E")]).is_err());
        assert!(mk(vec![Trigger::new(1, 1, "E")]).is_err());
        assert!(mk(vec![Trigger::new(0, 2, "E"), Trigger::new(1, 3, "E")]).is_err());
        assert!(mk(vec![Trigger::new(2, 3, "E"), Trigger::new(0, 1, "E")]).is_err());
        assert!(mk(vec![Trigger::new(0, 1, "E"), Trigger::new(1, 3, "F")]).is_ok());
    }

    #[test]
    fn truncation_drops_edges_and_triggers() {
        let mut s = Sentence::from_wire(
            words("a b c d"),
            words("O O O O"),
            &[4, 1, 2, 0],
            words("x y z root"),
            vec![Trigger::new(1, 2, "E"), Trigger::new(2, 4, "F")],
        )
        .unwrap();
        assert!(s.truncate(3));
        assert_eq!(s.len(), 3);
        assert_eq!(s.heads, vec![Head::Detached, Head::Token(0), Head::Token(1)]);
        assert_eq!(s.root(), None);
        assert_eq!(s.triggers, vec![Trigger::new(1, 2, "E")]);
        s.validate().unwrap();
        assert!(s.wire_heads().is_none());
        assert!(!s.truncate(3));
    }
}
