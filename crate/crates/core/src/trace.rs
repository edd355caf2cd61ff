//! Trace data model and span-file ingestion.
//!
//! A span file is JSON Lines: one object per communication-API call with the
//! keys `trace_id`, `sender`, `service`, `start_us`, `duration_us` and `layer`
//! (`"client"` or `"internal"`). Unknown keys are ignored.
//!
//! Every distinct `(sender, service)` pair becomes one [`SymbolId`]; a trace
//! becomes a string over that alphabet.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the system issued the call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Client,
    Internal,
}

/// The identity of an event type: who called which remote service.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallPair {
    pub sender: String,
    pub service: String,
}

impl CallPair {
    pub fn new(sender: impl Into<String>, service: impl Into<String>) -> Self {
        CallPair {
            sender: sender.into(),
            service: service.into(),
        }
    }
}

impl fmt::Display for CallPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.sender, self.service)
    }
}

/// One call to a communication API, collapsed from its begin/end probes.
///
/// The serde representation is exactly one span-file record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub trace_id: String,
    pub sender: String,
    pub service: String,
    #[serde(rename = "start_us")]
    pub start: u64,
    #[serde(rename = "duration_us")]
    pub duration: u64,
    pub layer: Layer,
}

impl Event {
    pub fn pair(&self) -> CallPair {
        CallPair::new(self.sender.clone(), self.service.clone())
    }

    fn validate(&self) -> std::result::Result<(), &'static str> {
        if self.start == 0 {
            return Err("start_us must be positive");
        }
        if self.sender.is_empty() {
            return Err("sender must be non-empty");
        }
        if self.service.is_empty() {
            return Err("service must be non-empty");
        }
        Ok(())
    }
}

/// Compact identifier of a [`CallPair`] within one [`SymbolTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolId(pub u32);

impl SymbolId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Bijection between call pairs and dense symbol ids, assigned in first-seen
/// order. Ids are never reused.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CallPair>", into = "Vec<CallPair>")]
pub struct SymbolTable {
    pairs: Vec<CallPair>,
    index: HashMap<CallPair, SymbolId>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Returns the id of `pair`, assigning the next free id if it is new.
    pub fn register(&mut self, pair: &CallPair) -> SymbolId {
        if let Some(&id) = self.index.get(pair) {
            return id;
        }
        let id = SymbolId(self.pairs.len() as u32);
        self.pairs.push(pair.clone());
        self.index.insert(pair.clone(), id);
        id
    }

    pub fn lookup(&self, pair: &CallPair) -> Option<SymbolId> {
        self.index.get(pair).copied()
    }

    pub fn pair(&self, id: SymbolId) -> Option<&CallPair> {
        self.pairs.get(id.index())
    }

    /// Encodes events into symbols, registering unseen pairs.
    pub fn encode(&mut self, events: &[Event]) -> Vec<SymbolId> {
        events.iter().map(|e| self.register(&e.pair())).collect()
    }

    /// Decodes symbols back to their pairs. `None` if any id is unassigned.
    pub fn decode(&self, symbols: &[SymbolId]) -> Option<Vec<&CallPair>> {
        symbols.iter().map(|&s| self.pair(s)).collect()
    }

    /// Human-readable name of a symbol, falling back to the raw id.
    pub fn name(&self, id: SymbolId) -> String {
        match self.pair(id) {
            Some(p) => p.to_string(),
            None => id.to_string(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SymbolId, &CallPair)> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (SymbolId(i as u32), p))
    }
}

impl From<SymbolTable> for Vec<CallPair> {
    fn from(table: SymbolTable) -> Self {
        table.pairs
    }
}

impl TryFrom<Vec<CallPair>> for SymbolTable {
    type Error = String;

    fn try_from(pairs: Vec<CallPair>) -> std::result::Result<Self, Self::Error> {
        let mut table = SymbolTable::new();
        for pair in &pairs {
            if table.lookup(pair).is_some() {
                return Err(format!("duplicate symbol-table entry {pair}"));
            }
            table.register(pair);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLabel {
    FaultFree,
    FaultInjected,
    Idle,
}

/// A trace ordered by collector timestamp, with its symbol rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSequence {
    label: TraceLabel,
    events: Vec<Event>,
    symbols: Vec<SymbolId>,
}

impl EventSequence {
    /// Sorts `events` by start timestamp (ties by sender, service, then input
    /// order) and encodes them against `table`.
    pub fn from_events(mut events: Vec<Event>, label: TraceLabel, table: &mut SymbolTable) -> Self {
        events.sort_by(|a, b| {
            (a.start, &a.sender, &a.service).cmp(&(b.start, &b.sender, &b.service))
        });
        let symbols = table.encode(&events);
        EventSequence {
            label,
            events,
            symbols,
        }
    }

    pub fn label(&self) -> TraceLabel {
        self.label
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn symbols(&self) -> &[SymbolId] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Keeps the events whose symbol satisfies `keep`, preserving order.
    pub fn retain_symbols(&self, mut keep: impl FnMut(SymbolId) -> bool) -> EventSequence {
        let (events, symbols) = self
            .events
            .iter()
            .zip(&self.symbols)
            .filter(|(_, &s)| keep(s))
            .map(|(e, &s)| (e.clone(), s))
            .unzip();
        EventSequence {
            label: self.label,
            events,
            symbols,
        }
    }
}

/// Parses span records from `reader`. `origin` names the source in errors.
pub fn parse_spans(reader: impl BufRead, origin: &str) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            origin: origin.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line).map_err(|e| Error::Parse {
            origin: origin.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        event.validate().map_err(|msg| Error::Parse {
            origin: origin.to_string(),
            line: line_no,
            message: msg.to_string(),
        })?;
        events.push(event);
    }
    if events.is_empty() {
        return Err(Error::EmptyTrace {
            origin: origin.to_string(),
        });
    }
    Ok(events)
}

/// Reads every record of a span file.
pub fn read_spans(path: &Path) -> Result<Vec<Event>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_spans(BufReader::new(file), &path.display().to_string())
}

/// Reads a span file into a sorted, symbolized sequence.
pub fn ingest_spans(path: &Path, label: TraceLabel, table: &mut SymbolTable) -> Result<EventSequence> {
    let events = read_spans(path)?;
    Ok(EventSequence::from_events(events, label, table))
}

/// Writes events as span records, one JSON object per line.
pub fn write_spans(events: &[Event], mut out: impl Write) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Loads many span files against one table.
///
/// Files are parsed in parallel, then registered in file-name order so the
/// resulting ids do not depend on the order `paths` arrive in. The returned
/// sequences follow that sorted order.
pub fn load_trace_files(
    paths: &[PathBuf],
    label: TraceLabel,
    table: &mut SymbolTable,
) -> Result<Vec<(PathBuf, EventSequence)>> {
    let mut sorted: Vec<PathBuf> = paths.to_vec();
    sorted.sort();
    let parsed: Vec<Vec<Event>> = sorted
        .par_iter()
        .map(|p| read_spans(p))
        .collect::<Result<_>>()?;
    Ok(sorted
        .into_iter()
        .zip(parsed)
        .map(|(path, events)| {
            let seq = EventSequence::from_events(events, label, table);
            (path, seq)
        })
        .collect())
}

/// Fault-free and idle traces sharing one symbol table.
#[derive(Debug, Clone)]
pub struct TraceSet {
    pub training: Vec<EventSequence>,
    pub idle: Vec<EventSequence>,
    pub symbol_table: SymbolTable,
}

impl TraceSet {
    /// Loads training traces first, then idle traces, into a fresh table.
    pub fn load(training: &[PathBuf], idle: &[PathBuf]) -> Result<Self> {
        let mut symbol_table = SymbolTable::new();
        let training = load_trace_files(training, TraceLabel::FaultFree, &mut symbol_table)?
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        let idle = load_trace_files(idle, TraceLabel::Idle, &mut symbol_table)?
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        Ok(TraceSet {
            training,
            idle,
            symbol_table,
        })
    }

    /// One trace becomes the reference and at least one trains the model.
    pub fn ensure_classifiable(&self) -> Result<()> {
        if self.training.len() < 2 {
            return Err(Error::InsufficientTraining {
                needed: 2,
                have: self.training.len(),
            });
        }
        Ok(())
    }
}
