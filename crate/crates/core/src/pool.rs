//! Stream records and the unlabeled/labeled pool pair.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{HiddenLabel, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u64);

/// Per-entity sliding-window aggregates attached during ingestion.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Profile {
    pub count_1h: f64,
    pub amount_1h: f64,
    pub count_24h: f64,
    pub amount_24h: f64,
}

impl Profile {
    pub const WIDTH: usize = 4;

    pub fn as_array(&self) -> [f64; Self::WIDTH] {
        [self.count_1h, self.amount_1h, self.count_24h, self.amount_24h]
    }
}

/// One raw stream record. The ground-truth label is sealed; see
/// [`Oracle`](crate::oracle::Oracle).
#[derive(Clone, Debug)]
pub struct Event {
    pub event_id: EventId,
    /// Epoch milliseconds.
    pub timestamp: i64,
    pub entity_id: EntityId,
    pub amount: f64,
    pub categoricals: Vec<String>,
    pub numericals: Vec<f64>,
    pub profile: Profile,
    true_label: HiddenLabel,
}

impl Event {
    pub fn new(
        event_id: EventId,
        timestamp: i64,
        entity_id: EntityId,
        amount: f64,
        categoricals: Vec<String>,
        numericals: Vec<f64>,
        label: Label,
    ) -> Self {
        Self {
            event_id,
            timestamp,
            entity_id,
            amount,
            categoricals,
            numericals,
            profile: Profile::default(),
            true_label: HiddenLabel::seal(label),
        }
    }

    pub(crate) fn hidden_label(&self) -> HiddenLabel {
        self.true_label
    }

    /// Replaces the sealed label. Only meant for building counterfactual
    /// streams in tests and generators.
    pub fn reseal(&mut self, label: Label) {
        self.true_label = HiddenLabel::seal(label);
    }
}

/// Dense representation of an event after preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub event_id: EventId,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PoolEntry {
    pub event: Event,
    pub features: FeatureVector,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub negative: usize,
    pub positive: usize,
}

impl LabelCounts {
    pub fn both_classes(&self) -> bool {
        self.negative > 0 && self.positive > 0
    }

    pub fn total(&self) -> usize {
        self.negative + self.positive
    }
}

/// Events chosen for labeling, best first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuerySet {
    pub event_ids: Vec<EventId>,
    pub scores: Vec<f64>,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.event_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_ids.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PoolError {
    #[error("event id {0} is already present in the pool")]
    DuplicateId(EventId),
    #[error("event id {0} is not in the unlabeled pool")]
    StaleQuery(EventId),
    #[error("event id {0} appears more than once in the query")]
    DuplicateInQuery(EventId),
    #[error("query has {ids} ids but {labels} labels were supplied")]
    LabelCountMismatch { ids: usize, labels: usize },
}

/// The growing unlabeled pool and the labeled pool.
///
/// Every event ever ingested lives in `entries` in ingestion order; an index
/// by id gives O(log n) membership checks.
#[derive(Clone, Debug, Default)]
pub struct PoolPair {
    entries: Vec<PoolEntry>,
    labels: Vec<Option<Label>>,
    index: BTreeMap<EventId, usize>,
    unlabeled: Vec<usize>,
    labeled: Vec<usize>,
    counts: LabelCounts,
}

impl PoolPair {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends events to the unlabeled pool in timestamp order. The batch is
    /// rejected as a whole if any id is already known.
    pub fn ingest(&mut self, mut events: Vec<(Event, FeatureVector)>) -> Result<(), PoolError> {
        let mut seen = BTreeMap::new();
        for (e, _) in &events {
            if self.index.contains_key(&e.event_id) || seen.insert(e.event_id, ()).is_some() {
                return Err(PoolError::DuplicateId(e.event_id));
            }
        }
        events.sort_by_key(|(e, _)| e.timestamp);
        for (event, features) in events {
            let pos = self.entries.len();
            self.index.insert(event.event_id, pos);
            self.entries.push(PoolEntry { event, features });
            self.labels.push(None);
            self.unlabeled.push(pos);
        }
        Ok(())
    }

    /// Moves queried events to the labeled pool with their revealed labels.
    /// Validation happens before any mutation.
    pub fn move_to_labeled(&mut self, query: &QuerySet, labels: &[Label]) -> Result<(), PoolError> {
        if query.event_ids.len() != labels.len() {
            return Err(PoolError::LabelCountMismatch {
                ids: query.event_ids.len(),
                labels: labels.len(),
            });
        }
        let mut positions = Vec::with_capacity(labels.len());
        let mut seen = BTreeMap::new();
        for id in &query.event_ids {
            let pos = match self.index.get(id) {
                Some(&p) if self.labels[p].is_none() => p,
                _ => return Err(PoolError::StaleQuery(*id)),
            };
            if seen.insert(*id, ()).is_some() {
                return Err(PoolError::DuplicateInQuery(*id));
            }
            positions.push(pos);
        }
        for (&pos, &label) in positions.iter().zip(labels) {
            self.labels[pos] = Some(label);
            self.labeled.push(pos);
            match label {
                Label::Negative => self.counts.negative += 1,
                Label::Positive => self.counts.positive += 1,
            }
        }
        let labels = &self.labels;
        self.unlabeled.retain(|&p| labels[p].is_none());
        Ok(())
    }

    pub fn label_counts(&self) -> LabelCounts {
        self.counts
    }

    pub fn unlabeled_len(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn labeled_len(&self) -> usize {
        self.labeled.len()
    }

    pub fn total_len(&self) -> usize {
        self.entries.len()
    }

    /// Unlabeled entries in ingestion order.
    pub fn unlabeled(&self) -> impl ExactSizeIterator<Item = &PoolEntry> + '_ {
        self.unlabeled.iter().map(move |&p| &self.entries[p])
    }

    /// Labeled entries in labeling order, with their revealed labels.
    pub fn labeled(&self) -> impl ExactSizeIterator<Item = (&PoolEntry, Label)> + '_ {
        self.labeled
            .iter()
            .map(move |&p| (&self.entries[p], self.labels[p].expect("labeled entry without label")))
    }

    pub fn get(&self, id: EventId) -> Option<&PoolEntry> {
        self.index.get(&id).map(|&p| &self.entries[p])
    }

    pub fn is_unlabeled(&self, id: EventId) -> bool {
        matches!(self.index.get(&id), Some(&p) if self.labels[p].is_none())
    }

    pub fn is_labeled(&self, id: EventId) -> bool {
        matches!(self.index.get(&id), Some(&p) if self.labels[p].is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(ids: core::ops::Range<u64>) -> Vec<(Event, FeatureVector)> {
        ids.map(|i| {
            let e = Event::new(EventId(i), i as i64, EntityId(i % 3), 1.0, Vec::new(), Vec::new(), Label::Negative);
            let f = FeatureVector { event_id: EventId(i), values: alloc::vec![i as f64] };
            (e, f)
        })
        .collect()
    }

    fn query(ids: &[u64]) -> QuerySet {
        QuerySet { event_ids: ids.iter().map(|&i| EventId(i)).collect(), scores: alloc::vec![0.0; ids.len()] }
    }

    #[test]
    fn ingest_into_empty_pool() {
        let mut pool = PoolPair::new();
        pool.ingest(batch(0..3)).unwrap();
        assert_eq!((pool.unlabeled_len(), pool.labeled_len()), (3, 0));
    }

    #[test]
    fn ingest_adds_to_existing_sizes() {
        let mut pool = PoolPair::new();
        pool.ingest(batch(0..7)).unwrap();
        pool.move_to_labeled(&query(&[0, 1]), &[Label::Negative; 2]).unwrap();
        pool.ingest(batch(7..17)).unwrap();
        assert_eq!((pool.unlabeled_len(), pool.labeled_len()), (15, 2));
    }

    #[test]
    fn ingest_rejects_labeled_duplicate() {
        let mut pool = PoolPair::new();
        pool.ingest(batch(0..3)).unwrap();
        pool.move_to_labeled(&query(&[1]), &[Label::Negative]).unwrap();
        assert_eq!(pool.ingest(batch(1..2)), Err(PoolError::DuplicateId(EventId(1))));
        assert_eq!(pool.total_len(), 3);
    }

    #[test]
    fn ingest_sorts_by_timestamp() {
        let mut pool = PoolPair::new();
        let mut b = batch(0..4);
        b.reverse();
        pool.ingest(b).unwrap();
        let ts: Vec<i64> = pool.unlabeled().map(|e| e.event.timestamp).collect();
        assert_eq!(ts, [0, 1, 2, 3]);
    }

    #[test]
    fn full_drain_and_partial_move() {
        let mut pool = PoolPair::new();
        pool.ingest(batch(0..100)).unwrap();
        let ids: Vec<u64> = (0..100).collect();
        pool.move_to_labeled(&query(&ids), &[Label::Negative; 100]).unwrap();
        assert_eq!((pool.unlabeled_len(), pool.labeled_len()), (0, 100));

        let mut pool = PoolPair::new();
        pool.ingest(batch(0..250)).unwrap();
        let first: Vec<u64> = (0..50).collect();
        pool.move_to_labeled(&query(&first), &[Label::Negative; 50]).unwrap();
        let next: Vec<u64> = (100..200).collect();
        pool.move_to_labeled(&query(&next), &[Label::Negative; 100]).unwrap();
        assert_eq!((pool.unlabeled_len(), pool.labeled_len()), (100, 150));
    }

    #[test]
    fn stale_query_is_rejected_without_mutation() {
        let mut pool = PoolPair::new();
        pool.ingest(batch(0..5)).unwrap();
        pool.move_to_labeled(&query(&[2]), &[Label::Positive]).unwrap();
        let err = pool.move_to_labeled(&query(&[1, 2]), &[Label::Negative; 2]);
        assert_eq!(err, Err(PoolError::StaleQuery(EventId(2))));
        assert!(pool.is_unlabeled(EventId(1)));
        assert_eq!(pool.labeled_len(), 1);
        assert_eq!(
            pool.move_to_labeled(&query(&[9]), &[Label::Negative]),
            Err(PoolError::StaleQuery(EventId(9)))
        );
        assert_eq!(
            pool.move_to_labeled(&query(&[3, 3]), &[Label::Negative; 2]),
            Err(PoolError::DuplicateInQuery(EventId(3)))
        );
    }

    #[test]
    fn label_counts_track_moves() {
        let mut pool = PoolPair::new();
        assert_eq!(pool.label_counts(), LabelCounts::default());
        pool.ingest(batch(0..1000)).unwrap();
        pool.move_to_labeled(&query(&[0, 1, 2]), &[Label::Negative, Label::Negative, Label::Positive])
            .unwrap();
        assert_eq!(pool.label_counts(), LabelCounts { negative: 2, positive: 1 });

        let mut pool = PoolPair::new();
        pool.ingest(batch(0..1000)).unwrap();
        let ids: Vec<u64> = (0..1000).collect();
        pool.move_to_labeled(&query(&ids), &[Label::Negative; 1000]).unwrap();
        let c = pool.label_counts();
        assert_eq!((c.negative, c.positive), (1000, 0));
        assert!(!c.both_classes());
    }
}
