use super::*;
use crate::infra::build_fleet;
use crate::seeding::stream;
use rand::Rng;

fn participant<R: Rng>(dim: usize, rng: &mut R, fingerprint: Vec<f64>) -> Participant {
    let v = |rng: &mut R| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let actor = v(rng);
    Participant {
        actor_start: actor.clone(),
        actor,
        critic: v(rng),
        critic_grad: v(rng),
        fingerprint,
        tracker: TrackingVariable::zeros(dim),
        adversary: AdversarySpec::HONEST,
    }
}

fn near(base: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    base.iter().map(|b| b + rng.random_range(-0.01..0.01)).collect()
}

fn star(m: usize) -> Topology {
    let mut lists: Vec<Vec<usize>> = vec![(1..m).collect()];
    lists.extend((1..m).map(|_| vec![0]));
    Topology::from_lists(lists, m - 1).unwrap()
}

#[test]
fn consensus_is_a_fixed_point_for_actor() {
    let fleet = build_fleet(4, 1).unwrap();
    let mut rng = stream(1, 0, 0);
    let base = participant(6, &mut rng, vec![0.5; 12]);
    let mut ps = vec![base.clone(); 4];
    let mut topo = build_topology(&fleet, 3, 3, &mut rng).unwrap();
    gossip_round(&mut ps, &mut topo, &fleet, &MixingRule::FULL, &FederationConfig::default(), 0, &mut rng).unwrap();
    for p in &ps {
        for (a, b) in p.actor.iter().zip(&base.actor) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn reversed_neighbor_is_flagged_end_to_end() {
    let fleet = build_fleet(6, 2).unwrap();
    let mut rng = stream(2, 0, 0);
    let g: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut ps: Vec<Participant> = (0..6).map(|_| { let f = near(&g, &mut rng); participant(4, &mut rng, f) }).collect();
    ps[5].adversary = AdversarySpec {
        mode: AdversaryMode::GradientReversal,
        intensity: 1.0,
    };
    let mut topo = star(6);
    let records =
        gossip_round(&mut ps, &mut topo, &fleet, &MixingRule::FULL, &FederationConfig::default(), 0, &mut rng).unwrap();
    assert_eq!(records[0].flagged, vec![5]);
    assert_eq!(records[0].survivors, vec![1, 2, 3, 4]);
    assert_eq!(records[0].detection_counts(|j| j == 5), (1, 0, 0));
}

#[test]
fn total_drop_isolates_the_silo() {
    let fleet = build_fleet(4, 3).unwrap();
    let mut rng = stream(3, 0, 0);
    let mut ps: Vec<Participant> = (0..4).map(|_| participant(5, &mut rng, vec![1.0; 12])).collect();
    for p in ps.iter_mut().skip(1) {
        p.adversary = AdversarySpec {
            mode: AdversaryMode::IntermittentDrop,
            intensity: 1.0,
        };
    }
    let before = ps[0].clone();
    let mut topo = star(4);
    let rec = gossip_round(&mut ps, &mut topo, &fleet, &MixingRule::FULL, &FederationConfig::default(), 0, &mut rng).unwrap();
    assert!(rec[0].received.is_empty());
    assert_eq!(ps[0].actor, before.actor);
    // Alone, the robust gradient is the local one and y tracks it directly.
    assert_eq!(ps[0].tracker.y, before.critic_grad);
}

#[test]
fn dropped_neighbors_never_contribute() {
    let fleet = build_fleet(3, 4).unwrap();
    let mut rng = stream(4, 0, 0);
    let mut ps: Vec<Participant> = (0..3).map(|_| participant(5, &mut rng, vec![1.0; 12])).collect();
    let mut reference = ps.clone();
    reference.truncate(2);
    ps[2].adversary = AdversarySpec {
        mode: AdversaryMode::IntermittentDrop,
        intensity: 1.0,
    };
    ps[2].actor = vec![1e6; 5];
    let mut topo = Topology::from_lists(vec![vec![1, 2], vec![0], vec![0]], 2).unwrap();
    let mut ref_topo = Topology::from_lists(vec![vec![1], vec![0]], 2).unwrap();
    let ref_fleet = build_fleet(2, 4).unwrap();
    let cfg = FederationConfig::default();
    gossip_round(&mut ps, &mut topo, &fleet, &MixingRule::FULL, &cfg, 0, &mut stream(9, 0, 0)).unwrap();
    gossip_round(&mut reference, &mut ref_topo, &ref_fleet, &MixingRule::FULL, &cfg, 0, &mut stream(9, 0, 0)).unwrap();
    assert_eq!(ps[0].actor, reference[0].actor);
    assert_eq!(ps[0].critic, reference[0].critic);
}

#[test]
fn actor_mix_stays_in_coordinate_hull() {
    let fleet = build_fleet(6, 5).unwrap();
    let mut rng = stream(5, 0, 0);
    for _ in 0..20 {
        let mut ps: Vec<Participant> = (0..6)
            .map(|_| {
                let f: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
                participant(8, &mut rng, f)
            })
            .collect();
        let before = ps.clone();
        let mut topo = star(6);
        for rule in [MixingRule::FULL, MixingRule { actor: ActorMix::Replace, ..MixingRule::FULL }] {
            let mut run = before.clone();
            gossip_round(&mut run, &mut topo, &fleet, &rule, &FederationConfig::default(), 0, &mut rng).unwrap();
            for k in 0..8 {
                let lo = before.iter().map(|p| p.actor[k]).fold(f64::INFINITY, f64::min);
                let hi = before.iter().map(|p| p.actor[k]).fold(f64::NEG_INFINITY, f64::max);
                assert!(run[0].actor[k] >= lo - 1e-12 && run[0].actor[k] <= hi + 1e-12);
            }
        }
        ps.clear();
    }
}

#[test]
fn degree_bound_survives_neighbor_optimization() {
    let fleet = build_fleet(12, 6).unwrap();
    let mut rng = stream(6, 0, 0);
    let mut topo = build_topology(&fleet, 3, 4, &mut rng).unwrap();
    let mut ps: Vec<Participant> = (0..12).map(|_| participant(3, &mut rng, vec![1.0; 12])).collect();
    let mut swaps = 0;
    for round in 0..30 {
        let rec = gossip_round(&mut ps, &mut topo, &fleet, &MixingRule::FULL, &FederationConfig::default(), round, &mut rng)
            .unwrap();
        swaps += rec.iter().filter(|r| r.swap.is_some()).count();
        for i in 0..12 {
            let ids = topo.ids(i);
            assert!(ids.len() <= 3 && !ids.contains(&i));
            let mut dedup = ids.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), ids.len());
        }
    }
    assert!(swaps > 0);
}

#[test]
fn protocol_log_round_trips() {
    let fleet = build_fleet(4, 7).unwrap();
    let mut rng = stream(7, 0, 0);
    let mut ps: Vec<Participant> = (0..4).map(|_| participant(3, &mut rng, vec![0.3; 12])).collect();
    let mut topo = build_topology(&fleet, 3, 3, &mut rng).unwrap();
    let rec = gossip_round(&mut ps, &mut topo, &fleet, &MixingRule::FULL, &FederationConfig::default(), 4, &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("protocol.jsonl");
    write_protocol_log(std::fs::File::create(&path).unwrap(), &rec).unwrap();
    assert_eq!(read_protocol_log(&path).unwrap(), rec);
    std::fs::write(&path, "{}\n").unwrap();
    assert!(matches!(read_protocol_log(&path), Err(crate::Error::Parse { line: 1, .. })));
}

#[test]
fn ring_tracking_reaches_average() {
    let mut rng = stream(8, 0, 0);
    let grads: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let avg: Vec<f64> = (0..3).map(|k| grads.iter().map(|g| g[k]).sum::<f64>() / 6.0).collect();
    let mut ring = RingTracker::ring(6, 3);
    for _ in 0..200 {
        ring.step(&grads).unwrap();
    }
    for t in &ring.trackers {
        for k in 0..3 {
            assert!((t.y[k] - avg[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn complete_graph_conserves_gradient_mass() {
    let mut rng = stream(9, 0, 0);
    let grads: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut net = RingTracker::new((0..4).map(|i| (0..4).filter(|&j| j != i).collect()).collect(), 2);
    net.step(&grads).unwrap();
    for k in 0..2 {
        let y: f64 = net.trackers.iter().map(|t| t.y[k]).sum();
        let g: f64 = grads.iter().map(|g| g[k]).sum();
        assert!((y - g).abs() < 1e-12);
    }
    net.step(&grads).unwrap();
    assert!(net.trackers.iter().all(|t| t.y.iter().zip(&net.trackers[0].y).all(|(a, b)| (a - b).abs() < 1e-12)));
}

#[test]
fn config_validation_names_the_field() {
    let cfg = FederationConfig {
        nu: 0.0,
        ..FederationConfig::default()
    };
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("federation.nu"), "{err}");
}
