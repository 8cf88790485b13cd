use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{EvaluationError, Result};
use crate::dataset_io::LabelSeries;

/// Sorted, disjoint, non-empty half-open intervals `[start, end)` within
/// `[0, len)`. Adjacent intervals are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventList {
    events: Vec<Range<usize>>,
    len: usize,
}

impl EventList {
    pub fn new(events: Vec<Range<usize>>, len: usize) -> Result<Self> {
        let mut prev_end = 0;
        for e in &events {
            if e.start >= e.end || e.start < prev_end || e.end > len {
                return Err(EvaluationError::InvalidEvent {
                    start: e.start,
                    end: e.end,
                    len,
                });
            }
            prev_end = e.end;
        }
        Ok(Self { events, len })
    }

    pub fn events(&self) -> &[Range<usize>] {
        &self.events
    }

    /// Series length the events live in.
    pub fn series_len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Joins events that touch.
    pub fn merged(&self) -> Self {
        let mut out: Vec<Range<usize>> = Vec::with_capacity(self.events.len());
        for e in &self.events {
            match out.last_mut() {
                Some(last) if last.end == e.start => last.end = e.end,
                _ => out.push(e.clone()),
            }
        }
        Self {
            events: out,
            len: self.len,
        }
    }
}

/// Maximal runs of 1s.
pub fn to_events(labels: &LabelSeries) -> EventList {
    let mut events = Vec::new();
    let mut start = None;
    for (t, &l) in labels.as_slice().iter().enumerate() {
        match (l, start) {
            (1, None) => start = Some(t),
            (0, Some(s)) => {
                events.push(s..t);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        events.push(s..labels.len());
    }
    EventList {
        events,
        len: labels.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(v: &[u8]) -> Vec<Range<usize>> {
        to_events(&LabelSeries::new(v.to_vec()).unwrap()).events
    }

    #[test]
    fn runs() {
        assert_eq!(ev(&[0, 1, 1, 0, 1]), vec![1..3, 4..5]);
        assert!(ev(&[0, 0, 0]).is_empty());
        assert_eq!(ev(&[1, 1, 1, 1, 1]), vec![0..5]);
    }

    #[test]
    fn validation() {
        assert!(EventList::new(vec![0..2, 2..4], 4).is_ok());
        assert!(EventList::new(vec![0..2, 1..4], 4).is_err());
        assert!(EventList::new(vec![3..3], 4).is_err());
        assert!(EventList::new(vec![2..5], 4).is_err());
        assert!(EventList::new(vec![2..3, 0..1], 4).is_err());
    }

    #[test]
    fn merge_adjacent() {
        let e = EventList::new(vec![0..2, 2..4, 6..7], 10).unwrap();
        assert_eq!(e.merged().events(), &[0..4, 6..7]);
    }
}
