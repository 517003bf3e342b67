use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::representation::SaxWord;
use crate::scalar::Scalar;

/// Occurrence counts of SAX words in the reference group.
#[derive(Clone, Debug, Default)]
pub struct FrequencyTable {
    counts: HashMap<SaxWord, usize>,
    members: BTreeMap<u64, SaxWord>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> usize {
        self.members.len()
    }

    pub fn count(&self, word: &SaxWord) -> usize {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn insert(&mut self, id: u64, word: SaxWord) -> Result<()> {
        if self.members.contains_key(&id) {
            return Err(Error::Consistency(format!("id {id} already counted")));
        }
        *self.counts.entry(word.clone()).or_insert(0) += 1;
        self.members.insert(id, word);
        Ok(())
    }

    pub fn remove(&mut self, id: u64) -> Result<()> {
        let word = self
            .members
            .remove(&id)
            .ok_or_else(|| Error::Consistency(format!("id {id} is not counted")))?;
        match self.counts.get_mut(&word) {
            Some(c) if *c > 1 => *c -= 1,
            Some(_) => {
                self.counts.remove(&word);
            }
            None => return Err(Error::Consistency(format!("word {word} missing from table"))),
        }
        Ok(())
    }

    /// `|R| / (f(x) + 1)`.
    pub fn score<F: Scalar>(&self, word: &SaxWord) -> Result<F> {
        freq_score(self.count(word), self.total())
    }

    /// Reference score of every member, ascending id order: `|R| / f(x_i)`,
    /// the score `x_i` gets against the other members at the group size a
    /// newcomer is scored with. Ties with an incoming copy of a dominant word
    /// therefore never rank the newcomer above the members.
    pub fn member_scores<F: Scalar>(&self) -> Vec<F> {
        let size = F::of(self.total() as f64);
        self.members
            .values()
            .map(|w| size / F::of(self.count(w) as f64))
            .collect()
    }

    /// Member words in ascending id order.
    pub fn words(&self) -> impl Iterator<Item = &SaxWord> + '_ {
        self.members.values()
    }

    /// Counts rebuilt from the member list.
    pub fn recount(&self) -> HashMap<SaxWord, usize> {
        let mut counts = HashMap::new();
        for w in self.members.values() {
            *counts.entry(w.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn counts(&self) -> &HashMap<SaxWord, usize> {
        &self.counts
    }
}

/// Frequency nonconformity from a raw count and group size.
pub fn freq_score<F: Scalar>(frequency: usize, group_size: usize) -> Result<F> {
    if group_size == 0 {
        return Err(Error::DegenerateGroup("frequency table is empty".into()));
    }
    Ok(F::of(group_size as f64) / F::of((frequency + 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freq_examples() {
        assert_eq!(freq_score::<f64>(0, 10).unwrap(), 10.0);
        assert_eq!(freq_score::<f64>(4, 10).unwrap(), 2.0);
        let s: f64 = freq_score(7, 7).unwrap();
        assert!(s < 1.0 && (s - 7.0 / 8.0).abs() < 1e-15);
        assert!(freq_score::<f64>(0, 0).is_err());
    }

    #[test]
    fn insert_remove_keeps_counts() {
        let mut t = FrequencyTable::new();
        let a = SaxWord(vec![0, 1]);
        let b = SaxWord(vec![1, 1]);
        t.insert(1, a.clone()).unwrap();
        t.insert(2, a.clone()).unwrap();
        t.insert(3, b.clone()).unwrap();
        assert_eq!(t.count(&a), 2);
        t.remove(1).unwrap();
        assert_eq!(t.count(&a), 1);
        t.remove(3).unwrap();
        assert_eq!(t.count(&b), 0);
        assert_eq!(t.distinct(), 1);
        assert_eq!(t.recount(), *t.counts());
        assert!(t.remove(3).is_err());
    }
}
