use std::collections::BTreeSet;

use tracelens::synthgen::{
    generate_fault_free, generate_idle, inject_fault, FaultKind, FaultSpec, Preset, WorkloadTemplate, DEFAULT_NOISE,
};
use tracelens::trace::CallPair;

/// Unique event types and mean fault-free length observed for the three
/// workloads of the OpenStack campaign.
const WORKLOAD_TABLE: [(Preset, usize, f64); 3] =
    [(Preset::Depl, 53, 243.0), (Preset::Net, 37, 212.0), (Preset::Sto, 34, 85.0)];

#[test]
fn presets_match_the_workload_table() {
    for (preset, unique, mean_len) in WORKLOAD_TABLE {
        let t = preset.template();
        let traces: Vec<Vec<CallPair>> = (0..500).map(|s| generate_fault_free(&t, s, DEFAULT_NOISE).pairs()).collect();
        let seen: BTreeSet<&CallPair> = traces.iter().flatten().collect();
        assert_eq!(seen.len(), unique, "{preset:?}");
        let mean = traces.iter().map(Vec::len).sum::<usize>() as f64 / traces.len() as f64;
        assert!((mean - mean_len).abs() <= 0.1 * mean_len, "{preset:?}: mean length {mean}");
    }
}

fn without_background(mut t: WorkloadTemplate) -> WorkloadTemplate {
    t.background.clear();
    t
}

#[test]
fn zero_noise_ignores_the_seed() {
    for p in Preset::ALL {
        let t = without_background(p.template());
        let first = generate_fault_free(&t, 0, 0.0).pairs();
        assert_eq!(first, t.canonical());
        for seed in 1..20 {
            assert_eq!(generate_fault_free(&t, seed, 0.0).pairs(), first);
        }
    }
}

#[test]
fn idle_counts_follow_the_poisson_mean() {
    let t = Preset::Net.template();
    let length = 4.0;
    let seeds = 1000u64;
    for spec in &t.background {
        let total: usize = (0..seeds)
            .map(|s| {
                generate_idle(&t, s, length)
                    .events
                    .iter()
                    .filter(|e| e.pair() == spec.pair)
                    .count()
            })
            .sum();
        let lambda = spec.rate * length * seeds as f64;
        let sigma = lambda.sqrt();
        assert!(
            (total as f64 - lambda).abs() <= 3.0 * sigma,
            "{}: {total} events, expected {lambda} +- {}",
            spec.pair,
            3.0 * sigma
        );
    }
}

#[test]
fn idle_without_background_is_empty() {
    let t = without_background(Preset::Sto.template());
    for seed in 0..10 {
        assert!(generate_idle(&t, seed, 100.0).events.is_empty());
    }
}

#[test]
fn generation_is_reproducible() {
    let t = Preset::Depl.template();
    assert_eq!(generate_fault_free(&t, 9, 0.2), generate_fault_free(&t, 9, 0.2));
    let f = FaultSpec::new(FaultKind::WrongReturnValue, 3, 2);
    assert_eq!(inject_fault(&t, &f, 9, 0.2).unwrap(), inject_fault(&t, &f, 9, 0.2).unwrap());
}

#[test]
fn exception_on_a_preset_truncates_its_block() {
    let t = without_background(Preset::Depl.template());
    let (block, event) = (2, 1);
    let g = inject_fault(&t, &FaultSpec::new(FaultKind::ThrowException, block, event), 0, 0.0).unwrap();

    let b = &t.blocks[block];
    let start: usize = t.blocks[..block].iter().map(|b| b.event_count()).sum();
    let cut = start + event + 1;
    let tail = start + b.event_count();
    let canon = t.canonical();
    let mut want: Vec<CallPair> = canon[..cut].to_vec();
    want.extend(g.spurious_pairs());
    want.extend_from_slice(&canon[tail..]);
    assert_eq!(g.pairs(), want);
    assert_eq!(g.spurious_pairs().len(), 1);
    assert_eq!(g.missing_pairs(), canon[cut..tail].to_vec());
}
