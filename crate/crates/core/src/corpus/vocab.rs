use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// String ↔ id map with reserved padding and unknown ids. Ids follow first
/// occurrence order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    items: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut v = Vocab {
            items: Vec::new(),
            index: BTreeMap::new(),
        };
        v.insert(PAD_TOKEN);
        v.insert(UNK_TOKEN);
        v
    }
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build<'a, I: IntoIterator<Item = &'a str>>(items: I) -> Self {
        let mut v = Self::new();
        for item in items {
            v.insert(item);
        }
        v
    }

    /// Restores a vocabulary from its saved item list.
    pub fn from_items(items: Vec<String>) -> Result<Self> {
        if items.first().map(String::as_str) != Some(PAD_TOKEN) || items.get(1).map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::invalid("vocab", "must start with <pad>, <unk>"));
        }
        let mut index = BTreeMap::new();
        for (i, it) in items.iter().enumerate() {
            if index.insert(it.clone(), i).is_some() {
                return Err(Error::invalid("vocab", format!("duplicate entry `{it}`")));
            }
        }
        Ok(Vocab { items, index })
    }

    pub fn insert(&mut self, item: &str) -> usize {
        if let Some(&id) = self.index.get(item) {
            return id;
        }
        let id = self.items.len();
        self.items.push(item.to_string());
        self.index.insert(item.to_string(), id);
        id
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    /// Id of `item`, falling back to [`UNK`].
    pub fn id(&self, item: &str) -> usize {
        self.get(item).unwrap_or(UNK)
    }

    pub fn item(&self, id: usize) -> Option<&str> {
        self.items.get(id).map(String::as_str)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_and_unknowns() {
        let v = Vocab::build(["a", "b", "a"]);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(v.item(PAD), Some(PAD_TOKEN));
    }

    #[test]
    fn restore_is_stable() {
        let v = Vocab::build(["x", "y"]);
        let w = Vocab::from_items(v.items().to_vec()).unwrap();
        assert_eq!(v, w);
        assert!(Vocab::from_items(alloc::vec!["x".to_string()]).is_err());
    }
}
