//! Vocabularies and labeled event sequences.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense event-type id. Id 0 is the sequence-start marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u32);

/// Dense label id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub u32);

impl EventId {
    pub const START: EventId = EventId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl LabelId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for EventId {
    fn from(i: usize) -> Self {
        EventId(i as u32)
    }
}

impl From<usize> for LabelId {
    fn from(i: usize) -> Self {
        LabelId(i as u32)
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "y{}", self.0)
    }
}

/// Ordered list of unique names; position is the id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Duplicate(format!("vocabulary name `{n}`")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;
    fn try_from(names: Vec<String>) -> Result<Self> {
        Vocab::new(names)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.names
    }
}

/// Event vocabulary; id 0 is reserved for the start marker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vocab", into = "Vocab")]
pub struct EventVocab(Vocab);

pub const START_MARKER: &str = "<s>";

impl EventVocab {
    pub fn new(names: Vec<String>) -> Result<Self> {
        Vocab::new(names)?.try_into()
    }

    /// `size` ids: the start marker followed by `x1 .. x{size-1}`.
    pub fn synthetic(size: usize) -> Self {
        let names = std::iter::once(START_MARKER.to_string())
            .chain((1..size).map(|i| format!("x{i}")))
            .collect();
        Self::new(names).expect("generated names are unique")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, id: EventId) -> &str {
        self.0.name(id.index())
    }

    pub fn id(&self, name: &str) -> Option<EventId> {
        self.0.id(name).map(EventId::from)
    }

    pub fn contains(&self, id: EventId) -> bool {
        id.index() < self.len()
    }
}

impl TryFrom<Vocab> for EventVocab {
    type Error = Error;
    fn try_from(v: Vocab) -> Result<Self> {
        if v.is_empty() || v.name(0) != START_MARKER {
            return Err(Error::InvalidSpec(format!(
                "event vocabulary must start with the `{START_MARKER}` marker"
            )));
        }
        Ok(EventVocab(v))
    }
}

impl From<EventVocab> for Vocab {
    fn from(v: EventVocab) -> Self {
        v.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVocab(Vocab);

impl LabelVocab {
    pub fn new(names: Vec<String>) -> Result<Self> {
        Ok(LabelVocab(Vocab::new(names)?))
    }

    pub fn synthetic(size: usize) -> Self {
        let width = size.saturating_sub(1).to_string().len();
        let names = (0..size).map(|i| format!("y{i:0width$}")).collect();
        Self::new(names).expect("generated names are unique")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, id: LabelId) -> &str {
        self.0.name(id.index())
    }

    pub fn id(&self, name: &str) -> Option<LabelId> {
        self.0.id(name).map(LabelId::from)
    }
}

/// A timestamped event sequence with its binary label vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub id: String,
    pub events: Vec<(EventId, f64)>,
    pub labels: Vec<bool>,
}

impl LabeledSequence {
    /// Builds and validates a sequence.
    pub fn new(id: impl Into<String>, events: Vec<(EventId, f64)>, labels: Vec<bool>) -> Result<Self> {
        let seq = Self {
            id: id.into(),
            events,
            labels,
        };
        seq.check_shape()?;
        Ok(seq)
    }

    fn check_shape(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidSequence {
            id: self.id.clone(),
            reason,
        };
        match self.events.first() {
            None => return Err(invalid("empty event list".into())),
            Some((e, _)) if *e != EventId::START => {
                return Err(invalid("first event is not the start marker".into()))
            }
            _ => {}
        }
        let mut prev = 0.0;
        for (k, &(_, t)) in self.events.iter().enumerate() {
            if !(t >= prev) || !t.is_finite() {
                return Err(invalid(format!("timestamp at position {k} is negative or decreasing")));
            }
            prev = t;
        }
        Ok(())
    }

    /// Checks ids against the vocabulary sizes.
    pub fn validate(&self, n_events: usize, n_labels: usize) -> Result<()> {
        self.check_shape()?;
        if let Some(&(e, _)) = self.events.iter().find(|(e, _)| e.index() >= n_events) {
            return Err(Error::UnknownEvent(e.index()));
        }
        if self.labels.len() != n_labels {
            return Err(Error::InvalidSequence {
                id: self.id.clone(),
                reason: format!(
                    "label vector has length {}, expected {n_labels}",
                    self.labels.len()
                ),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn event_ids(&self) -> Vec<EventId> {
        self.events.iter().map(|&(e, _)| e).collect()
    }

    pub fn positive_labels(&self) -> Vec<LabelId> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(j, _)| LabelId::from(j))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_rejects_duplicates() {
        assert!(Vocab::new(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn event_vocab_requires_marker() {
        assert!(EventVocab::new(vec!["a".into()]).is_err());
        let v = EventVocab::synthetic(4);
        assert_eq!(v.name(EventId(0)), START_MARKER);
        assert_eq!(v.id("x3"), Some(EventId(3)));
    }

    #[test]
    fn sequence_invariants() {
        let ok = LabeledSequence::new("a", vec![(EventId(0), 0.0), (EventId(2), 1.5)], vec![true]);
        assert!(ok.is_ok());
        let no_marker = LabeledSequence::new("b", vec![(EventId(1), 0.0)], vec![]);
        assert!(no_marker.is_err());
        let backwards =
            LabeledSequence::new("c", vec![(EventId(0), 2.0), (EventId(1), 1.0)], vec![]);
        assert!(backwards.is_err());
        assert!(LabeledSequence::new("d", vec![], vec![]).is_err());
    }
}
