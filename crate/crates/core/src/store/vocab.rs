use std::collections::{HashMap, HashSet};

/// Bidirectional string ↔ dense id map with stop-word flags and frequencies.
///
/// Stop words stay in the vocabulary and are only flagged, so token
/// offsets into a document never shift.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
    stop: Vec<bool>,
    freq: Vec<u64>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Returns the id of `name`, inserting it if absent.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        self.stop.push(false);
        self.freq.push(0);
        id
    }

    /// Inserts a new name; `None` if it was already present.
    pub fn insert_new(&mut self, name: &str) -> Option<u32> {
        if self.index.contains_key(name) {
            return None;
        }
        Some(self.intern(name))
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn mark_stop_words(&mut self, stop_words: &HashSet<String>) {
        for (flag, name) in self.stop.iter_mut().zip(&self.names) {
            *flag = stop_words.contains(name) || stop_words.contains(&name.to_lowercase());
        }
    }

    pub fn is_stop(&self, id: u32) -> bool {
        self.stop.get(id as usize).copied().unwrap_or(false)
    }

    pub fn freq(&self, id: u32) -> u64 {
        self.freq.get(id as usize).copied().unwrap_or(0)
    }

    pub fn set_freq(&mut self, id: u32, count: u64) {
        if let Some(f) = self.freq.get_mut(id as usize) {
            *f = count;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_flags() {
        let mut v = Vocab::new();
        let a = v.intern("the");
        let b = v.intern("Paris");
        assert_eq!(v.intern("the"), a);
        assert_eq!(v.name(b), Some("Paris"));
        assert_eq!(v.get("Paris"), Some(b));
        assert_eq!(v.insert_new("the"), None);
        let stops: HashSet<String> = ["the".to_string()].into();
        v.mark_stop_words(&stops);
        assert!(v.is_stop(a));
        assert!(!v.is_stop(b));
        assert_eq!(v.len(), 2);
    }
}
