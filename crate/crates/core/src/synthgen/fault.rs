//! Trace-level signatures of injected faults.
//!
//! | kind | effect on the trace |
//! |---|---|
//! | `ThrowException` | rest of the block truncated, error call inserted |
//! | `WrongReturnValue`, `WrongParameterValue` | calls substituted by corrupted variants, optionally the next block's internal calls omitted |
//! | `Delay` | durations inflated, optionally the call moved later |

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    background_positions, baseline_slots, to_events, GeneratedTrace, GroundTruth, MissingEvent, Origin, Slot,
    WorkloadTemplate, DURATION_US,
};
use crate::error::{Error, Result};
use crate::trace::{CallPair, Layer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    ThrowException,
    WrongReturnValue,
    WrongParameterValue,
    Delay,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [
        FaultKind::ThrowException,
        FaultKind::WrongReturnValue,
        FaultKind::WrongParameterValue,
        FaultKind::Delay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::ThrowException => "throw_exception",
            FaultKind::WrongReturnValue => "wrong_return_value",
            FaultKind::WrongParameterValue => "wrong_parameter_value",
            FaultKind::Delay => "delay",
        }
    }
}

fn one() -> usize {
    1
}

fn default_delay_factor() -> f64 {
    10.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub block: usize,
    /// `0` is the client call, `k > 0` the k-th internal call of the block.
    pub event: usize,
    /// Exceptions: how many following block events to drop; `None` drops the
    /// whole remainder.
    #[serde(default)]
    pub truncate: Option<usize>,
    /// Exceptions: number of error calls inserted.
    #[serde(default = "one")]
    pub error_symbols: usize,
    /// Wrong values: number of consecutive block events corrupted.
    #[serde(default = "one")]
    pub span: usize,
    /// Wrong values: also omit the internal calls of the next block.
    #[serde(default)]
    pub propagate: bool,
    #[serde(default = "default_delay_factor")]
    pub delay_factor: f64,
    /// Delays: move the delayed call this many positions later.
    #[serde(default)]
    pub reorder_window: usize,
    /// `false` models an injection that never triggered.
    #[serde(default = "yes")]
    pub manifests: bool,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, block: usize, event: usize) -> Self {
        FaultSpec {
            kind,
            block,
            event,
            truncate: None,
            error_symbols: 1,
            span: 1,
            propagate: false,
            delay_factor: default_delay_factor(),
            reorder_window: 0,
            manifests: true,
        }
    }

    pub fn validate(&self, template: &WorkloadTemplate) -> Result<()> {
        let block = template.blocks.get(self.block).ok_or(Error::InjectionPoint {
            block: self.block,
            event: self.event,
        })?;
        if self.event >= block.event_count() {
            return Err(Error::InjectionPoint {
                block: self.block,
                event: self.event,
            });
        }
        if !self.delay_factor.is_finite() || self.delay_factor < 1.0 {
            return Err(Error::InvalidFault(format!(
                "delay_factor must be at least 1, got {}",
                self.delay_factor
            )));
        }
        Ok(())
    }
}

/// A uniformly random injection point for `kind` with default effects.
pub fn sample_fault(template: &WorkloadTemplate, kind: FaultKind, rng: &mut impl Rng) -> FaultSpec {
    let block = rng.random_range(0..template.blocks.len());
    let event = rng.random_range(0..template.blocks[block].event_count());
    FaultSpec::new(kind, block, event)
}

fn injected(sender: &str, service: String, layer: Layer) -> Slot {
    Slot {
        pair: CallPair::new(sender, service),
        layer,
        duration: DURATION_US,
        origin: Origin::Injected,
    }
}

/// The fault-free trace for `seed` with `fault` applied.
///
/// The baseline is exactly [`super::generate_fault_free`] for the same seed
/// and noise, so the ground truth can be checked by reconstruction.
pub fn inject_fault(template: &WorkloadTemplate, fault: &FaultSpec, seed: u64, noise: f64) -> Result<GeneratedTrace> {
    fault.validate(template)?;
    let mut base = baseline_slots(template, seed, noise);
    let trace_id = format!("{}-fault-{seed}", template.name);
    if !fault.manifests {
        return Ok(GeneratedTrace {
            events: to_events(&base, &trace_id),
            truth: GroundTruth {
                background: background_positions(&base),
                ..GroundTruth::default()
            },
        });
    }

    let block_of = |s: &Slot| match s.origin {
        Origin::Workload { block, .. } => Some(block),
        _ => None,
    };
    let at = base
        .iter()
        .position(|s| {
            s.origin
                == Origin::Workload {
                    block: fault.block,
                    event: fault.event,
                }
        })
        .expect("validated injection point is present in the baseline");
    // Positions of the block's events after the injection point, in trace order.
    let tail: Vec<usize> = (at + 1..base.len())
        .filter(|&i| block_of(&base[i]) == Some(fault.block))
        .collect();

    let mut removed = BTreeSet::new();
    let mut after: BTreeMap<usize, Vec<Slot>> = BTreeMap::new();
    let target = base[at].clone();
    match fault.kind {
        FaultKind::ThrowException => {
            let n = fault.truncate.unwrap_or(tail.len()).min(tail.len());
            removed.extend(&tail[..n]);
            let errors = (0..fault.error_symbols)
                .map(|k| {
                    let suffix = if k == 0 { "!exception".to_string() } else { format!("!exception#{k}") };
                    injected(&target.pair.sender, format!("{}{suffix}", target.pair.service), Layer::Internal)
                })
                .collect();
            after.insert(at, errors);
        }
        FaultKind::WrongReturnValue | FaultKind::WrongParameterValue => {
            let suffix = match fault.kind {
                FaultKind::WrongReturnValue => "!corrupt",
                _ => "!invalid",
            };
            let span = fault.span.max(1);
            for &i in std::iter::once(&at).chain(&tail).take(span) {
                removed.insert(i);
                let s = &base[i];
                after.insert(i, vec![injected(&s.pair.sender, format!("{}{suffix}", s.pair.service), s.layer)]);
            }
            if fault.propagate {
                let next = fault.block + 1;
                removed.extend(base.iter().enumerate().filter_map(|(i, s)| match s.origin {
                    Origin::Workload { block, event } if block == next && event > 0 => Some(i),
                    _ => None,
                }));
            }
        }
        FaultKind::Delay => {
            let factor = fault.delay_factor;
            for &i in std::iter::once(&at).chain(&tail) {
                base[i].duration = (base[i].duration as f64 * factor).round() as u64;
            }
            let to = (at + fault.reorder_window).min(base.len() - 1);
            if to > at {
                removed.insert(at);
                let mut moved = base[at].clone();
                moved.origin = Origin::Injected;
                after.insert(to, vec![moved]);
            }
        }
    }

    let mut slots = Vec::with_capacity(base.len() + 2);
    let mut missing = Vec::new();
    for (i, slot) in base.iter().enumerate() {
        if removed.contains(&i) {
            missing.push(MissingEvent {
                baseline_position: i,
                pair: slot.pair.clone(),
            });
        } else {
            slots.push(slot.clone());
        }
        if let Some(extra) = after.remove(&i) {
            slots.extend(extra);
        }
    }
    let spurious = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.origin == Origin::Injected)
        .map(|(i, _)| i)
        .collect();
    Ok(GeneratedTrace {
        events: to_events(&slots, &trace_id),
        truth: GroundTruth {
            manifests: true,
            spurious,
            missing,
            background: background_positions(&slots),
        },
    })
}
