//! Variable-order Markov model trained with Prediction by Partial Matching,
//! escape method C (PPM-C).
//!
//! Training counts, for every position `i` of every training sequence and
//! every `k` in `0..=min(i, D)`, one occurrence of `x[i]` after the length-`k`
//! context `x[i-k..i]`. Contexts live in a suffix trie: the root is the empty
//! context and the child of a node under symbol `s` prepends `s` to it.
//!
//! Prediction starts at the longest stored suffix of the query context (at
//! most `D` symbols) and walks towards the empty context. In a context with
//! `t` total occurrences over `q` distinct successors, method C gives a seen
//! symbol `count / (t + q)` and the escape `q / (t + q)`. Below the empty
//! context sits a uniform distribution over the alphabet.
//!
//! Two variants are provided, both exactly normalized:
//!
//! * [`EscapePolicy::Exclusion`] (default): symbols predicted by a longer
//!   context are excluded from every shorter one, and the final uniform
//!   distribution covers only the symbols never seen along the way. A context
//!   whose successors cover every remaining symbol has nothing to escape to,
//!   so it assigns `count / t` with no escape.
//! * [`EscapePolicy::Blended`]: no exclusion; every level interpolates,
//!   `P_k(σ) = (count(σ) + q · P_{k-1}(σ)) / (t + q)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{EventSequence, Layer, SymbolId};

/// Upper bound applied to an estimated order unless configured otherwise.
pub const DEFAULT_ORDER_CAP: usize = 64;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapePolicy {
    #[default]
    Exclusion,
    Blended,
}

/// The maximal model order inferred from client requests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub d: usize,
    /// Longest request segment of each trace that has client events.
    pub per_request_max: Vec<usize>,
}

impl OrderEstimate {
    pub fn capped(&self, cap: usize) -> usize {
        self.d.min(cap)
    }
}

/// Longest run of events from one client-layer event up to (excluding) the
/// next one, over all traces. Events before a trace's first client event
/// belong to no request.
pub fn estimate_order(training: &[EventSequence]) -> Result<OrderEstimate> {
    let mut per_request_max = Vec::new();
    for seq in training {
        let clients: Vec<usize> = seq
            .events()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.layer == Layer::Client)
            .map(|(i, _)| i)
            .collect();
        if clients.is_empty() {
            continue;
        }
        let longest = clients
            .iter()
            .enumerate()
            .map(|(n, &start)| clients.get(n + 1).copied().unwrap_or(seq.len()) - start)
            .max()
            .unwrap_or(0);
        per_request_max.push(longest);
    }
    match per_request_max.iter().max() {
        Some(&d) => Ok(OrderEstimate {
            d: d.max(1),
            per_request_max,
        }),
        None => Err(Error::NoClientEvents),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextNode {
    /// Successor counts, sorted by symbol.
    counts: Vec<(SymbolId, u64)>,
    total: u64,
    /// Longer contexts, keyed by the symbol they prepend; sorted.
    children: Vec<(SymbolId, u32)>,
}

impl ContextNode {
    fn child(&self, sym: SymbolId) -> Option<usize> {
        self.children
            .binary_search_by_key(&sym, |&(s, _)| s)
            .ok()
            .map(|i| self.children[i].1 as usize)
    }

    fn bump(&mut self, sym: SymbolId) {
        match self.counts.binary_search_by_key(&sym, |&(s, _)| s) {
            Ok(i) => self.counts[i].1 += 1,
            Err(i) => self.counts.insert(i, (sym, 1)),
        }
        self.total += 1;
    }

    fn count(&self, sym: SymbolId) -> u64 {
        self.counts
            .binary_search_by_key(&sym, |&(s, _)| s)
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }
}

/// Occurrence statistics of one stored context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextStats {
    pub counts: BTreeMap<SymbolId, u64>,
    pub total: u64,
    pub distinct: usize,
}

/// A trained PPM-C predictor. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct PpmModel {
    max_order: usize,
    alphabet_size: usize,
    escape: EscapePolicy,
    trained_on: usize,
    nodes: Vec<ContextNode>,
}

impl PpmModel {
    /// Counts every context of length `0..=max_order` in `sequences`.
    pub fn train<S: AsRef<[SymbolId]>>(
        sequences: &[S],
        max_order: usize,
        alphabet_size: usize,
        escape: EscapePolicy,
    ) -> Result<Self> {
        if alphabet_size == 0 {
            return Err(Error::EmptyAlphabet);
        }
        if sequences.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        for seq in sequences {
            if let Some(&bad) = seq.as_ref().iter().find(|s| s.index() >= alphabet_size) {
                return Err(Error::SymbolOutOfRange {
                    symbol: bad,
                    alphabet_size,
                });
            }
        }
        let mut model = PpmModel {
            max_order,
            alphabet_size,
            escape,
            trained_on: sequences.len(),
            nodes: vec![ContextNode::default()],
        };
        for seq in sequences {
            let seq = seq.as_ref();
            for (i, &sym) in seq.iter().enumerate() {
                let mut node = 0;
                model.nodes[0].bump(sym);
                for k in 1..=i.min(max_order) {
                    node = model.child_or_insert(node, seq[i - k]);
                    model.nodes[node].bump(sym);
                }
            }
        }
        model.renumber_depth_first();
        Ok(model)
    }

    /// Lays the arena out in depth-first pre-order (children by symbol), the
    /// same order the serialized form uses.
    fn renumber_depth_first(&mut self) {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            order.push(id);
            stack.extend(self.nodes[id].children.iter().rev().map(|&(_, c)| c as usize));
        }
        let mut new_id = vec![0u32; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new as u32;
        }
        let mut old_nodes: Vec<Option<ContextNode>> = std::mem::take(&mut self.nodes).into_iter().map(Some).collect();
        self.nodes = order
            .iter()
            .map(|&old| {
                let mut node = old_nodes[old].take().expect("each node visited once");
                for child in &mut node.children {
                    child.1 = new_id[child.1 as usize];
                }
                node
            })
            .collect();
    }

    fn child_or_insert(&mut self, node: usize, sym: SymbolId) -> usize {
        match self.nodes[node]
            .children
            .binary_search_by_key(&sym, |&(s, _)| s)
        {
            Ok(i) => self.nodes[node].children[i].1 as usize,
            Err(i) => {
                let id = self.nodes.len();
                self.nodes.push(ContextNode::default());
                self.nodes[node].children.insert(i, (sym, id as u32));
                id
            }
        }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn escape(&self) -> EscapePolicy {
        self.escape
    }

    pub fn trained_on(&self) -> usize {
        self.trained_on
    }

    /// Number of stored contexts, the empty context included.
    pub fn context_count(&self) -> usize {
        self.nodes.len()
    }

    /// Statistics of `context` exactly as given (no truncation).
    pub fn context_stats(&self, context: &[SymbolId]) -> Option<ContextStats> {
        let mut node = 0;
        for &s in context.iter().rev() {
            node = self.nodes[node].child(s)?;
        }
        let n = &self.nodes[node];
        Some(ContextStats {
            counts: n.counts.iter().copied().collect(),
            total: n.total,
            distinct: n.counts.len(),
        })
    }

    /// Nodes for the stored suffixes of `context`, shortest first.
    fn suffix_path(&self, context: &[SymbolId]) -> Vec<usize> {
        let start = context.len().saturating_sub(self.max_order);
        let mut path = vec![0];
        let mut node = 0;
        for &s in context[start..].iter().rev() {
            match self.nodes[node].child(s) {
                Some(c) => {
                    path.push(c);
                    node = c;
                }
                None => break,
            }
        }
        path
    }

    /// `P̂(symbol | context)`. Only the last `max_order` symbols of the
    /// context matter. Always in `(0, 1]`.
    ///
    /// Panics if `symbol` is outside the alphabet.
    pub fn predict(&self, context: &[SymbolId], symbol: SymbolId) -> f64 {
        assert!(
            symbol.index() < self.alphabet_size,
            "symbol {symbol} outside alphabet of {}",
            self.alphabet_size
        );
        let path = self.suffix_path(context);
        match self.escape {
            EscapePolicy::Exclusion => self.predict_excluding(&path, symbol),
            EscapePolicy::Blended => self.predict_blended(&path, symbol),
        }
    }

    fn predict_excluding(&self, path: &[usize], symbol: SymbolId) -> f64 {
        let mut excluded = vec![false; self.alphabet_size];
        let mut n_excluded = 0usize;
        let mut mass = 1.0;
        for &id in path.iter().rev() {
            let node = &self.nodes[id];
            let mut total = 0u64;
            let mut distinct = 0usize;
            let mut hit = None;
            for &(s, c) in &node.counts {
                if !excluded[s.index()] {
                    total += c;
                    distinct += 1;
                    if s == symbol {
                        hit = Some(c);
                    }
                }
            }
            if distinct == 0 {
                continue;
            }
            let covers_rest = n_excluded + distinct == self.alphabet_size;
            let denom = if covers_rest {
                total as f64
            } else {
                (total + distinct as u64) as f64
            };
            if let Some(c) = hit {
                return mass * c as f64 / denom;
            }
            debug_assert!(!covers_rest);
            mass *= distinct as f64 / denom;
            for &(s, _) in &node.counts {
                if !excluded[s.index()] {
                    excluded[s.index()] = true;
                    n_excluded += 1;
                }
            }
        }
        mass / (self.alphabet_size - n_excluded) as f64
    }

    fn predict_blended(&self, path: &[usize], symbol: SymbolId) -> f64 {
        let mut p = 1.0 / self.alphabet_size as f64;
        for &id in path {
            let node = &self.nodes[id];
            let distinct = node.counts.len() as f64;
            p = (node.count(symbol) as f64 + distinct * p) / (node.total as f64 + distinct);
        }
        p
    }

    /// The whole predictive distribution for `context`, indexed by symbol id.
    pub fn distribution(&self, context: &[SymbolId]) -> Vec<f64> {
        (0..self.alphabet_size)
            .map(|s| self.predict(context, SymbolId(s as u32)))
            .collect()
    }

    /// Average log-loss in bits:
    /// `-(1/T) Σ log2 P̂(x_i | x_1..x_{i-1})`, contexts truncated to `D`.
    pub fn log_loss(&self, test: &[SymbolId]) -> Result<f64> {
        if test.is_empty() {
            return Err(Error::EmptyTestSequence);
        }
        if let Some(&bad) = test.iter().find(|s| s.index() >= self.alphabet_size) {
            return Err(Error::SymbolOutOfRange {
                symbol: bad,
                alphabet_size: self.alphabet_size,
            });
        }
        let bits: f64 = test
            .iter()
            .enumerate()
            .map(|(i, &sym)| {
                let ctx = &test[i.saturating_sub(self.max_order)..i];
                self.predict(ctx, sym).log2()
            })
            .sum();
        // `+ 0.0` turns a negative zero into zero.
        Ok(-bits / test.len() as f64 + 0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        PpmModel::try_from(file)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ContextRecord {
    context: Vec<SymbolId>,
    total: u64,
    counts: Vec<(SymbolId, u64)>,
}

/// Versioned on-disk form: one record per context, depth-first.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    max_order: usize,
    alphabet_size: usize,
    escape: EscapePolicy,
    trained_on: usize,
    contexts: Vec<ContextRecord>,
}

impl From<PpmModel> for ModelFile {
    fn from(model: PpmModel) -> Self {
        let mut contexts = Vec::with_capacity(model.nodes.len());
        // (node, reversed context)
        let mut stack = vec![(0usize, Vec::<SymbolId>::new())];
        while let Some((id, rev)) = stack.pop() {
            let node = &model.nodes[id];
            contexts.push(ContextRecord {
                context: rev.iter().rev().copied().collect(),
                total: node.total,
                counts: node.counts.clone(),
            });
            for &(sym, child) in node.children.iter().rev() {
                let mut r = rev.clone();
                r.push(sym);
                stack.push((child as usize, r));
            }
        }
        ModelFile {
            version: FORMAT_VERSION,
            max_order: model.max_order,
            alphabet_size: model.alphabet_size,
            escape: model.escape,
            trained_on: model.trained_on,
            contexts,
        }
    }
}

impl TryFrom<ModelFile> for PpmModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.version != FORMAT_VERSION {
            return Err(Error::UnsupportedModelVersion(file.version));
        }
        if file.alphabet_size == 0 {
            return Err(Error::EmptyAlphabet);
        }
        let corrupt = |msg: String| Error::CorruptModel(msg);
        let mut model = PpmModel {
            max_order: file.max_order,
            alphabet_size: file.alphabet_size,
            escape: file.escape,
            trained_on: file.trained_on,
            nodes: vec![ContextNode::default()],
        };
        let mut seen_root = false;
        for rec in file.contexts {
            if rec.context.len() > model.max_order {
                return Err(corrupt(format!("context {:?} longer than the order", rec.context)));
            }
            if rec.counts.is_empty() {
                return Err(corrupt(format!("context {:?} has no successors", rec.context)));
            }
            if rec.counts.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(corrupt(format!("context {:?} counts are not sorted", rec.context)));
            }
            let sum: u64 = rec.counts.iter().map(|&(_, c)| c).sum();
            if sum != rec.total || rec.counts.iter().any(|&(_, c)| c == 0) {
                return Err(corrupt(format!("context {:?} counts do not add up", rec.context)));
            }
            let symbols_ok = rec
                .counts
                .iter()
                .map(|&(s, _)| s)
                .chain(rec.context.iter().copied())
                .all(|s| s.index() < model.alphabet_size);
            if !symbols_ok {
                return Err(corrupt(format!("context {:?} uses unknown symbols", rec.context)));
            }
            let mut node = 0;
            let depth = rec.context.len();
            for (n, &s) in rec.context.iter().rev().enumerate() {
                node = if n + 1 == depth {
                    if model.nodes[node].child(s).is_some() {
                        return Err(corrupt(format!("duplicate context {:?}", rec.context)));
                    }
                    model.child_or_insert(node, s)
                } else {
                    model.nodes[node]
                        .child(s)
                        .ok_or_else(|| corrupt(format!("context {:?} precedes its suffix", rec.context)))?
                };
            }
            if depth == 0 {
                if seen_root {
                    return Err(corrupt("duplicate empty context".into()));
                }
                seen_root = true;
            }
            model.nodes[node].counts = rec.counts;
            model.nodes[node].total = rec.total;
        }
        if !seen_root {
            return Err(corrupt("missing empty context".into()));
        }
        Ok(model)
    }
}
