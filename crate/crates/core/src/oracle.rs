//! Label gating. Ground truth travels inside each [`Event`](crate::pool::Event)
//! as a [`HiddenLabel`] whose content is readable only through an [`Oracle`],
//! which keeps a ledger of every reveal.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::pool::Event;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    #[inline]
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }
}

impl From<bool> for Label {
    fn from(b: bool) -> Self {
        if b {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// Ground truth sealed inside an event.
#[derive(Clone, Copy)]
pub struct HiddenLabel(Label);

impl HiddenLabel {
    pub fn seal(label: Label) -> Self {
        HiddenLabel(label)
    }
}

impl fmt::Debug for HiddenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("HiddenLabel(..)")
    }
}

/// The only reader of [`HiddenLabel`]s. `reveals` counts every label read.
#[derive(Debug, Default)]
pub struct Oracle {
    reveals: u64,
}

impl Oracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn label(&mut self, event: &Event) -> Label {
        self.reveals += 1;
        event.hidden_label().0
    }

    pub fn label_all<'a, I>(&mut self, events: I) -> Vec<Label>
    where
        I: IntoIterator<Item = &'a Event>,
    {
        events.into_iter().map(|e| self.label(e)).collect()
    }

    pub fn reveals(&self) -> u64 {
        self.reveals
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{EntityId, EventId};

    fn ev(id: u64, label: Label) -> Event {
        Event::new(EventId(id), id as i64, EntityId(0), 1.0, Vec::new(), Vec::new(), label)
    }

    #[test]
    fn reveals_in_order_and_counts() {
        let events = [ev(1, Label::Negative), ev(2, Label::Negative), ev(3, Label::Positive)];
        let mut oracle = Oracle::new();
        let labels = oracle.label_all(events.iter());
        assert_eq!(labels, [Label::Negative, Label::Negative, Label::Positive]);
        assert_eq!(oracle.reveals(), 3);
        assert!(oracle.label_all(core::iter::empty()).is_empty());
    }

    #[test]
    fn ledger_accumulates_across_batches() {
        let batch: Vec<Event> = (0..100).map(|i| ev(i, Label::Negative)).collect();
        let mut oracle = Oracle::new();
        oracle.label_all(batch.iter());
        oracle.label_all(batch.iter());
        assert_eq!(oracle.reveals(), 200);
    }

    #[test]
    fn debug_does_not_leak() {
        let s = alloc::format!("{:?}", HiddenLabel::seal(Label::Positive));
        assert!(!s.contains("Positive"));
    }
}
