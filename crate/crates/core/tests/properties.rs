use std::sync::Arc;

use ndarray::Array2;
use oran_core::agents::distribution::MultiCategorical;
use oran_core::encoder::{EncoderConfig, GraphEncoder, GraphObs, EDGE_FEATURES, NODE_FEATURES};
use oran_core::environment::{ActionSpace, EnvConfig, Environment};
use oran_core::evaluator::{self, reward};
use oran_core::oracle::{enumerate_optimal, DEFAULT_LIMIT};
use oran_core::splitmodel::{catalog, CostParams};
use oran_core::substrate::{generate_topology, parse_topology, serialize_topology, LinkKind, TopologySpec};
use oran_core::traffic::{initial_requests, SessionConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec() -> impl Strategy<Value = TopologySpec> {
    (1usize..7, 1usize..4, 1usize..4, 0.0f64..=1.0, any::<u64>())
        .prop_map(|(n, d, c, p, seed)| TopologySpec::new(n, d, c, p, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_topologies_are_deterministic_connected_and_in_range(spec in spec()) {
        let g = generate_topology(&spec).unwrap();
        prop_assert_eq!(&g, &generate_topology(&spec).unwrap());
        for r in 0..g.n_rh() {
            let reachable = (0..g.n_es()).any(|d| (0..g.n_rc()).any(|c| g.path_exists(r, g.es_id(d), g.rc_id(c)).unwrap()));
            prop_assert!(reachable, "RH {} has no path", r);
        }
        for l in g.links() {
            if l.kind == LinkKind::RhRc {
                prop_assert_eq!(l.bandwidth, spec.direct_bandwidth_gbps);
                prop_assert!(spec.direct_delay_ms.contains(l.delay));
            } else {
                prop_assert!(spec.link_bandwidth_gbps.contains(l.bandwidth));
                prop_assert!(spec.link_delay_ms.contains(l.delay));
            }
        }
        prop_assert_eq!(parse_topology(&serialize_topology(&g)).unwrap(), g);
    }

    #[test]
    fn reward_is_bounded_and_decreasing(n in 1usize..64, fail in 0usize..128, j in 0.0f64..1e7, dj in 1e-6f64..1e3) {
        let n_fail = fail.min(2 * n);
        let r = reward(n_fail, j, false, n);
        prop_assert!((-1.0..=1.0).contains(&r));
        if n_fail == 0 {
            prop_assert!(r > 0.0 && r <= 1.0);
            prop_assert!(reward(0, j + dj, false, n) < r);
        } else {
            prop_assert!(r < 0.0);
        }
        prop_assert_eq!(reward(n_fail, j, true, n), -1.0);
    }

    #[test]
    fn masked_probabilities_are_exactly_zero(
        logits in prop::collection::vec(-30.0f64..30.0, 12),
        mask in prop::collection::vec(any::<bool>(), 12),
        seed in any::<u64>(),
    ) {
        let sizes = [4, 3, 5];
        let mut mask = mask;
        // Keep one entry allowed per head.
        mask[0] = true;
        mask[4] = true;
        mask[7] = true;
        let dist = MultiCategorical::new(&logits, &sizes, Some(&mask)).unwrap();
        let mut off = 0;
        for (h, &n) in sizes.iter().enumerate() {
            let p = dist.head_probs(h);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..n {
                if !mask[off + k] {
                    prop_assert_eq!(p[k], 0.0);
                }
            }
            off += n;
        }
        let a = dist.sample(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(dist.log_prob(&a).is_finite());
        let mut grad = vec![0.0; 12];
        dist.accumulate_grad(&a, 1.3, 0.7, &mut grad);
        for (g, &m) in grad.iter().zip(&mask) {
            if !m {
                prop_assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn episode_reward_is_at_most_the_slot_count(seed in any::<u64>(), topo in 0u64..50) {
        let g = Arc::new(generate_topology(&TopologySpec::new(4, 2, 2, 0.3, topo)).unwrap());
        let mut cfg = EnvConfig::default();
        cfg.session.episode_length = 24;
        let mut env = Environment::new(g, Arc::new(cfg), seed).unwrap();
        let mask = env.mask().clone();
        let sizes = mask.head_sizes().to_vec();
        let dist = MultiCategorical::new(&vec![0.0; mask.flat().len()], &sizes, Some(mask.flat())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        let slots = loop {
            let st = env.step(&dist.sample(&mut rng)).unwrap();
            prop_assert!(st.reward <= 1.0);
            prop_assert_eq!(st.observation.flat.len(), env.observation_len());
            total += st.reward;
            if st.done() {
                break st.info.slot;
            }
        };
        prop_assert!(total <= slots as f64);
    }

    #[test]
    fn no_allocation_beats_the_exact_optimum(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = TopologySpec::new(rng.random_range(1..=3), rng.random_range(1..=2), rng.random_range(1..=2), 0.4, seed);
        let g = generate_topology(&spec).unwrap();
        let reqs = initial_requests(g.n_rh(), &SessionConfig::default(), &mut rng);
        let (cat, params) = (catalog(), CostParams::default());
        let res = enumerate_optimal(&g, &reqs, None, &cat, &params, DEFAULT_LIMIT).unwrap();
        let space = ActionSpace::for_graph(&g);
        let heads = space.head_sizes();
        let mut feasible = 0u64;
        let mut a = vec![0; heads.len()];
        'outer: loop {
            let alloc = space.decode(&a).unwrap();
            let ev = evaluator::evaluate(None, &alloc, &reqs, &g, &cat, &params).unwrap();
            if ev.report.is_strictly_feasible() {
                feasible += 1;
                let best = res.best_cost.as_ref().expect("a feasible allocation exists").total;
                prop_assert!(ev.cost.unwrap().total >= best - 1e-9);
            }
            for h in (0..heads.len()).rev() {
                a[h] += 1;
                if a[h] < heads[h] {
                    continue 'outer;
                }
                a[h] = 0;
            }
            break;
        }
        prop_assert_eq!(feasible, res.feasible_count);
    }
}

#[test]
fn order_feature_breaks_permutation_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let enc = GraphEncoder::new(&EncoderConfig { embed_dim: 8, hidden: 16, n_layers: 2 }, &mut rng);
    // A path 0-1-2 whose nodes differ only in their order feature.
    let mut nf = Array2::zeros((3, NODE_FEATURES));
    for i in 0..3 {
        nf[[i, 0]] = 0.5;
        nf[[i, 1]] = i as f64 / 3.0;
    }
    let edges = vec![(0, 1), (1, 0), (1, 2), (2, 1)];
    let ef = Array2::from_elem((4, EDGE_FEATURES), 0.2);
    let obs = GraphObs { node_features: nf.clone(), edges: edges.clone(), edge_features: ef.clone() };
    // Swap the order values of the middle and an end node.
    let mut swapped = nf;
    swapped[[0, 1]] = 1.0 / 3.0;
    swapped[[1, 1]] = 0.0;
    let moved = GraphObs { node_features: swapped, edges, edge_features: ef };
    let diff = &enc.encode(&obs) - &enc.encode(&moved);
    assert!(diff.iter().any(|v| v.abs() > 1e-9));
}
