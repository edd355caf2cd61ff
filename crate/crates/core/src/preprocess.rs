//! Background-event dictionary.
//!
//! Any event type observed while the system is idle is treated as background
//! activity and removed, in every occurrence, from the traces under analysis.

use std::collections::BTreeSet;

use log::warn;

use crate::trace::{CallPair, EventSequence, SymbolId, SymbolTable};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BackgroundDictionary {
    symbols: BTreeSet<SymbolId>,
}

impl BackgroundDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Union of the symbols of all idle traces.
    pub fn build(idle: &[EventSequence]) -> Self {
        let symbols = idle
            .iter()
            .flat_map(|seq| seq.symbols().iter().copied())
            .collect();
        BackgroundDictionary { symbols }
    }

    pub fn from_symbols(symbols: impl IntoIterator<Item = SymbolId>) -> Self {
        BackgroundDictionary {
            symbols: symbols.into_iter().collect(),
        }
    }

    pub fn contains(&self, symbol: SymbolId) -> bool {
        self.symbols.contains(&symbol)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> impl Iterator<Item = SymbolId> + '_ {
        self.symbols.iter().copied()
    }

    /// Removes background events from `seq`, keeping the rest in order.
    pub fn filter(&self, seq: &EventSequence) -> EventSequence {
        if self.symbols.is_empty() {
            return seq.clone();
        }
        let out = seq.retain_symbols(|s| !self.contains(s));
        if out.is_empty() && !seq.is_empty() {
            warn!(
                "every event of a {:?} trace is a background event; the filtered trace is empty",
                seq.label()
            );
        }
        out
    }

    /// Dictionary symbols that also occur in `traces`.
    ///
    /// These are workload events hidden by the per-symbol policy; callers
    /// should surface them.
    pub fn overlap(&self, traces: &[EventSequence]) -> BTreeSet<SymbolId> {
        traces
            .iter()
            .flat_map(|t| t.symbols().iter().copied())
            .filter(|s| self.contains(*s))
            .collect()
    }

    /// The persisted form: a list of `[sender, service]` pairs.
    pub fn to_pairs(&self, table: &SymbolTable) -> Vec<(String, String)> {
        self.symbols
            .iter()
            .filter_map(|&s| table.pair(s))
            .map(|p| (p.sender.clone(), p.service.clone()))
            .collect()
    }

    /// Rebuilds a dictionary from persisted pairs, registering them in `table`.
    pub fn from_pairs(pairs: &[(String, String)], table: &mut SymbolTable) -> Self {
        let symbols = pairs
            .iter()
            .map(|(sender, service)| table.register(&CallPair::new(sender.clone(), service.clone())))
            .collect();
        BackgroundDictionary { symbols }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Event, Layer, TraceLabel};

    fn seq_of(names: &[&str], table: &mut SymbolTable) -> EventSequence {
        let events = names
            .iter()
            .enumerate()
            .map(|(i, n)| Event {
                trace_id: "t".into(),
                sender: "svc".into(),
                service: (*n).into(),
                start: 1 + i as u64,
                duration: 1,
                layer: Layer::Internal,
            })
            .collect();
        EventSequence::from_events(events, TraceLabel::FaultFree, table)
    }

    #[test]
    fn dictionary_is_the_union_of_idle_symbols() {
        let mut t = SymbolTable::new();
        // ids: a=0, b=1, c=2
        let idle1 = seq_of(&["a", "b"], &mut t);
        let idle2 = seq_of(&["b", "c"], &mut t);
        let dict = BackgroundDictionary::build(&[idle1, idle2]);
        let ids: Vec<u32> = dict.symbols().map(|s| s.0).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert!(BackgroundDictionary::build(&[]).is_empty());
    }

    #[test]
    fn filter_removes_every_occurrence() {
        let mut t = SymbolTable::new();
        let s = seq_of(&["p", "q", "r", "q"], &mut t);
        let dict = BackgroundDictionary::from_symbols([SymbolId(1)]);
        let out = dict.filter(&s);
        assert_eq!(out.symbols(), &[SymbolId(0), SymbolId(2)]);
        assert_eq!(BackgroundDictionary::new().filter(&s), s);
    }

    #[test]
    fn filtering_a_pure_background_trace_yields_empty() {
        let mut t = SymbolTable::new();
        let s = seq_of(&["p", "p"], &mut t);
        let dict = BackgroundDictionary::build(std::slice::from_ref(&s));
        assert!(dict.filter(&s).is_empty());
        assert_eq!(dict.overlap(&[s]).len(), 1);
    }

    #[test]
    fn pairs_round_trip_through_the_table() {
        let mut t = SymbolTable::new();
        let s = seq_of(&["x", "y"], &mut t);
        let dict = BackgroundDictionary::build(&[s]);
        let pairs = dict.to_pairs(&t);
        assert_eq!(pairs[0], ("svc".to_string(), "x".to_string()));
        let back = BackgroundDictionary::from_pairs(&pairs, &mut t);
        assert_eq!(back, dict);
    }
}
