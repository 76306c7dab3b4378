//! Property tests for the simulator's structural invariants.

use proptest::prelude::*;

use sidle_core::protocol::sidle::{
    premiership, propose_election_delay, run_cell_election, select_premier_leader,
    PremiershipInputs,
};
use sidle_core::protocol::{AggregateRecord, ChannelStat};
use sidle_core::sim::rng::RngStream;
use sidle_core::topology::{generate_hex_mesh, CellId, NodeId, TopologyConfig};
use sidle_core::{Battery, PathLossParams, RadioCostModel};

fn inputs_strategy() -> impl Strategy<Value = PremiershipInputs> {
    (0i64..=10, 0i64..=20, 0i64..=20, 0i64..=10).prop_map(|(re, ng, pl, ss)| PremiershipInputs {
        re,
        ng,
        pl,
        ss,
    })
}

proptest! {
    /// Raising any single premiership input never lowers the score.
    #[test]
    fn premiership_is_monotone_in_every_input(base in inputs_strategy()) {
        let score = premiership(&base);
        let bumps = [
            PremiershipInputs { re: (base.re + 1).min(10), ..base },
            PremiershipInputs { ng: base.ng + 1, ..base },
            PremiershipInputs { pl: base.pl + 1, ..base },
            PremiershipInputs { ss: (base.ss + 1).min(10), ..base },
        ];
        for bumped in bumps {
            prop_assert!(premiership(&bumped) >= score);
        }
    }

    /// Adding a constant to every candidate's Pl never changes the winner.
    #[test]
    fn argmax_is_invariant_under_constant_pl_shifts(
        candidates in prop::collection::vec(inputs_strategy(), 1..8),
        shift in 0i64..50,
    ) {
        let tagged: Vec<(NodeId, PremiershipInputs)> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (NodeId(i as u32), *c))
            .collect();
        let shifted: Vec<(NodeId, PremiershipInputs)> = tagged
            .iter()
            .map(|(id, c)| (*id, PremiershipInputs { pl: c.pl + shift, ..*c }))
            .collect();
        prop_assert_eq!(
            select_premier_leader(&tagged).unwrap(),
            select_premier_leader(&shifted).unwrap()
        );
    }

    /// Elections terminate with a winner drawn from the candidate set.
    #[test]
    fn elections_always_terminate_with_a_candidate(
        n in 1usize..12,
        seed in 0u64..500,
        delay_max in 0u32..64,
    ) {
        let ids: Vec<NodeId> = (0..n as u32).map(NodeId).collect();
        let mut rng = RngStream::new(seed, "election-delay").rng();
        let outcome = run_cell_election(&ids, delay_max, 1023, |_, max| {
            propose_election_delay(&mut rng, max)
        }).unwrap();
        prop_assert!(ids.contains(&outcome.winner));
        prop_assert!(outcome.restarts <= 50);
    }

    /// Batteries stay inside [0, capacity] under any operation sequence.
    #[test]
    fn battery_bounds_hold_under_mixed_operations(
        capacity in 0.1f64..100.0,
        ops in prop::collection::vec((0.0f64..10.0, proptest::bool::ANY), 1..100),
    ) {
        let mut battery = Battery::new(capacity, 0.05);
        let mut removed = 0.0;
        for (amount, is_drain) in ops {
            if is_drain {
                battery.drain(amount, &mut removed).unwrap();
            } else {
                battery.harvest(amount * 10.0, 0.7);
            }
            prop_assert!(battery.residual_j >= 0.0);
            prop_assert!(battery.residual_j <= capacity);
            let norm = battery.normalized_residual();
            prop_assert!((0..=10).contains(&norm));
        }
    }

    /// tx cost strictly grows with distance for non-empty payloads.
    #[test]
    fn tx_cost_is_strictly_increasing_in_distance(
        payload in 1u32..4096,
        d1 in 0.0f64..999.0,
        delta in 0.1f64..500.0,
    ) {
        let m = RadioCostModel::default();
        prop_assert!(m.tx_cost(payload, d1) < m.tx_cost(payload, d1 + delta));
    }

    /// Normalized signal strength stays on the 0..10 integer scale.
    #[test]
    fn normalized_ss_is_always_in_range(rssi in -200.0f64..20.0) {
        let p = PathLossParams::default();
        prop_assert!((0..=10).contains(&p.normalized_ss(rssi)));
    }

    /// Generated topologies always satisfy the partition and channel-plan
    /// invariants, and regeneration is bit-identical.
    #[test]
    fn hex_mesh_invariants_hold_for_any_valid_config(
        clusters in 1u32..5,
        npc in 1u32..6,
        jitter in 0.0f64..0.49,
        seed in 0u64..1000,
    ) {
        let cfg = TopologyConfig {
            clusters,
            nodes_per_cell: npc,
            cell_radius_m: 60.0,
            jitter,
            seed,
        };
        let a = generate_hex_mesh(&cfg).unwrap();
        a.check_invariants().unwrap();
        let b = generate_hex_mesh(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.nodes.len() as u32, clusters * 7 * npc);
    }

    /// Merging aggregate records preserves counts and min/max bounds.
    #[test]
    fn record_merge_is_count_additive_and_bound_preserving(
        xs in prop::collection::vec(15.0f32..30.0, 1..20),
        ys in prop::collection::vec(15.0f32..30.0, 1..20),
    ) {
        let mut a = AggregateRecord::new(CellId(0), 0, 1);
        let mut b = AggregateRecord::new(CellId(1), 0, 1);
        let mut stat_a = ChannelStat::empty();
        for &x in &xs { stat_a.observe(x); }
        let mut stat_b = ChannelStat::empty();
        for &y in &ys { stat_b.observe(y); }
        a.stats[0] = stat_a;
        a.source_count = 1;
        b.stats[0] = stat_b;
        b.source_count = 1;
        a.merge(&b);
        prop_assert_eq!(a.stats[0].count as usize, xs.len() + ys.len());
        prop_assert_eq!(a.source_count, 2);
        let global_min = xs.iter().chain(ys.iter()).cloned().fold(f32::INFINITY, f32::min);
        let global_max = xs.iter().chain(ys.iter()).cloned().fold(f32::NEG_INFINITY, f32::max);
        prop_assert_eq!(a.stats[0].min, global_min);
        prop_assert_eq!(a.stats[0].max, global_max);
        prop_assert!(a.cells.contains(&CellId(0)) && a.cells.contains(&CellId(1)));
    }
}
