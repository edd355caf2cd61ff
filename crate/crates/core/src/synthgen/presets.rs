//! Procedurally built workloads sized like three cloud-management campaigns:
//! instance deployment (DEPL), network management (NET) and storage
//! management (STO).
//!
//! Each preset is expanded from a [`PresetShape`] with a fixed seed, so the
//! same name always yields the same template.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, BackgroundSpec, Block, WorkloadTemplate};
use crate::error::{Error, Result};
use crate::trace::CallPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Depl,
    Net,
    Sto,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Depl, Preset::Net, Preset::Sto];

    pub fn shape(self) -> PresetShape {
        match self {
            Preset::Depl => PresetShape {
                name: "depl",
                client_ops: 6,
                internal_symbols: 44,
                background_pairs: 3,
                blocks: 12,
                workload_events: 240,
                background_rate: 1.0,
                commutable_per_block: 2,
                seed: 0xDE91,
            },
            Preset::Net => PresetShape {
                name: "net",
                client_ops: 5,
                internal_symbols: 29,
                background_pairs: 3,
                blocks: 10,
                workload_events: 210,
                background_rate: 2.0 / 3.0,
                commutable_per_block: 2,
                seed: 0x0E7,
            },
            Preset::Sto => PresetShape {
                name: "sto",
                client_ops: 4,
                internal_symbols: 27,
                background_pairs: 3,
                blocks: 4,
                workload_events: 80,
                background_rate: 5.0 / 3.0,
                commutable_per_block: 2,
                seed: 0x570,
            },
        }
    }

    pub fn template(self) -> WorkloadTemplate {
        self.shape().build()
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "depl" => Ok(Preset::Depl),
            "net" => Ok(Preset::Net),
            "sto" => Ok(Preset::Sto),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

/// Looks a preset up by name (`depl`, `net` or `sto`).
pub fn preset(name: &str) -> Result<WorkloadTemplate> {
    Ok(name.parse::<Preset>()?.template())
}

/// Size parameters of a procedurally generated workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetShape {
    pub name: &'static str,
    /// Distinct client calls; blocks cycle through them.
    pub client_ops: usize,
    /// Distinct internal calls; each is used at least once.
    pub internal_symbols: usize,
    pub background_pairs: usize,
    pub blocks: usize,
    /// Client plus internal events per trace.
    pub workload_events: usize,
    /// Expected occurrences of each background pair per trace.
    pub background_rate: f64,
    pub commutable_per_block: usize,
    pub seed: u64,
}

const COMPONENTS: [&str; 8] = [
    "nova-api",
    "nova-scheduler",
    "nova-compute",
    "neutron-server",
    "neutron-agent",
    "glance-api",
    "cinder-volume",
    "keystone",
];

const VERBS: [&str; 8] = ["get", "list", "create", "update", "bind", "attach", "notify", "sync"];

impl PresetShape {
    pub fn unique_symbols(&self) -> usize {
        self.client_ops + self.internal_symbols + self.background_pairs
    }

    pub fn expected_length(&self) -> f64 {
        self.workload_events as f64 + self.background_rate * self.background_pairs as f64
    }

    pub fn build(&self) -> WorkloadTemplate {
        assert!(self.blocks >= 1 && self.client_ops >= 1);
        let internal_slots = self.workload_events - self.blocks;
        assert!(internal_slots >= self.internal_symbols);
        let mut rng = seeded_rng(self.seed);

        let clients: Vec<CallPair> = (0..self.client_ops)
            .map(|k| CallPair::new("client", format!("{}-api.{}{k}", self.name, VERBS[k % VERBS.len()])))
            .collect();
        let internal: Vec<CallPair> = (0..self.internal_symbols)
            .map(|k| {
                let sender = COMPONENTS[k % COMPONENTS.len()];
                let callee = COMPONENTS[(k * 3 + 1) % COMPONENTS.len()];
                let verb = VERBS[(k / COMPONENTS.len()) % VERBS.len()];
                CallPair::new(sender, format!("{callee}.{verb}_{k:02}"))
            })
            .collect();

        // Every internal symbol once, the rest drawn uniformly, then shuffled.
        let mut pool: Vec<usize> = (0..self.internal_symbols).collect();
        pool.extend((self.internal_symbols..internal_slots).map(|_| rng.random_range(0..self.internal_symbols)));
        pool.shuffle(&mut rng);
        separate_repeats(&mut pool, &mut rng);

        // Block sizes vary by up to a quarter around the mean.
        let mean = internal_slots / self.blocks;
        let spread = (mean / 4).max(1);
        let mut sizes: Vec<usize> = (0..self.blocks)
            .map(|_| rng.random_range(mean.saturating_sub(spread).max(1)..=mean + spread))
            .collect();
        let total: usize = sizes.iter().sum();
        // Settle the remainder one event at a time to keep sizes balanced.
        let mut diff = internal_slots as isize - total as isize;
        let mut k = 0;
        while diff != 0 {
            let i = k % self.blocks;
            if diff > 0 {
                sizes[i] += 1;
                diff -= 1;
            } else if sizes[i] > 1 {
                sizes[i] -= 1;
                diff += 1;
            }
            k += 1;
        }

        let mut blocks = Vec::with_capacity(self.blocks);
        let mut offset = 0;
        for (b, &size) in sizes.iter().enumerate() {
            let ids = &pool[offset..offset + size];
            offset += size;
            let commutable = pick_commutable(ids, self.commutable_per_block, &mut rng);
            blocks.push(Block {
                client: clients[b % clients.len()].clone(),
                internal: ids.iter().map(|&i| internal[i].clone()).collect(),
                commutable,
            });
        }

        let background = (0..self.background_pairs)
            .map(|k| BackgroundSpec {
                pair: CallPair::new(
                    ["nova-conductor", "neutron-dhcp", "cinder-scheduler"][k % 3],
                    format!("periodic.{}_{k}", ["heartbeat", "report_state", "sync_power"][k % 3]),
                ),
                rate: self.background_rate,
            })
            .collect();

        WorkloadTemplate {
            name: self.name.to_string(),
            blocks,
            background,
        }
    }
}

/// Breaks up equal neighbours so that no swap is a no-op.
fn separate_repeats(pool: &mut [usize], rng: &mut impl Rng) {
    let n = pool.len();
    for i in 1..n {
        let mut tries = 0;
        while pool[i] == pool[i - 1] && tries < 1000 {
            let j = rng.random_range(0..n);
            let fits = |v: usize, at: usize, p: &[usize]| {
                (at == 0 || p[at - 1] != v) && (at + 1 >= n || p[at + 1] != v)
            };
            if j != i && fits(pool[j], i, pool) && fits(pool[i], j, pool) {
                pool.swap(i, j);
            }
            tries += 1;
        }
    }
}

/// Up to `count` non-overlapping adjacent pairs of distinct symbols.
fn pick_commutable(ids: &[usize], count: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut candidates: Vec<usize> = (0..ids.len().saturating_sub(1)).filter(|&i| ids[i] != ids[i + 1]).collect();
    candidates.shuffle(rng);
    let mut chosen: Vec<usize> = Vec::new();
    for i in candidates {
        if chosen.len() == count {
            break;
        }
        if chosen.iter().all(|&c| c.abs_diff(i) >= 2) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| (i, i + 1)).collect()
}
