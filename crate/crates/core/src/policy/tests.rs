use super::*;
use crate::seeding::stream;
use rand::Rng;

fn random_feats<R: Rng>(n: usize, rng: &mut R) -> FeatureVectors {
    let v = |d: usize, rng: &mut R| (0..d).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>();
    let task = v(TASK_DIM, rng);
    let global = v(GLOBAL_DIM, rng);
    let mut state = task.clone();
    state.extend_from_slice(&global);
    FeatureVectors {
        resources: (0..n).map(|_| v(RESOURCE_DIM, rng)).collect(),
        task,
        global,
        state,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn zero_fusion_scores_zero_and_zero_fingerprint() {
    let mut rng = stream(1, 0, 0);
    let mut p = ActorParams::init(16, &mut rng);
    let mut flat = p.flat();
    let n = flat.len();
    for v in &mut flat[n - 64..] {
        *v = 0.0;
    }
    p.set_flat(&flat).unwrap();
    let f = random_feats(5, &mut rng);
    let (scores, tape) = p.forward(&f).unwrap();
    assert!(scores.iter().all(|s| *s == 0.0));
    assert!(p.fingerprint_contribution(&tape, 2).unwrap().iter().all(|g| *g == 0.0));
}

#[test]
fn identical_candidates_score_identically() {
    let mut rng = stream(2, 0, 0);
    let p = ActorParams::init(16, &mut rng);
    let mut f = random_feats(3, &mut rng);
    f.resources[2] = f.resources[0].clone();
    let (s, _) = p.forward(&f).unwrap();
    assert_eq!(s[0], s[2]);
    assert_eq!(p.score(&f, 1).unwrap(), s[1]);
}

#[test]
fn one_params_value_scores_any_silo_size() {
    let mut rng = stream(3, 0, 0);
    let p = ActorModel::Scoring(ActorParams::init(32, &mut rng));
    let count = p.param_count();
    for n in [3, 14] {
        let f = random_feats(n, &mut rng);
        assert_eq!(p.forward(&f).unwrap().scores.len(), n);
    }
    assert_eq!(p.param_count(), count);
}

#[test]
fn act_forced_and_uniform_cases() {
    let mut rng = stream(4, 0, 0);
    let p = ActorModel::Scoring(ActorParams::init(8, &mut rng));
    let f = random_feats(4, &mut rng);
    let (d, _) = act(&p, &f, &[false, false, true, false], ActMode::Sample, &mut rng).unwrap();
    assert_eq!(d.action, 2);
    assert_eq!(d.log_prob, 0.0);
    assert_eq!(d.probs[2], 1.0);
    let mut same = f.clone();
    for r in &mut same.resources {
        *r = f.resources[0].clone();
    }
    let (d, _) = act(&p, &same, &[true, true, false, true], ActMode::Sample, &mut rng).unwrap();
    for (i, pr) in d.probs.iter().enumerate() {
        let expected = if i == 2 { 0.0 } else { 1.0 / 3.0 };
        assert!((pr - expected).abs() < 1e-12);
    }
    assert!((d.log_prob.exp() - d.probs[d.action]).abs() < 1e-12);
}

#[test]
fn permuting_candidates_permutes_probabilities() {
    let mut rng = stream(5, 0, 0);
    let p = ActorModel::Scoring(ActorParams::init(16, &mut rng));
    let f = random_feats(5, &mut rng);
    let perm = [3, 0, 4, 1, 2];
    let mut g = f.clone();
    g.resources = perm.iter().map(|&i| f.resources[i].clone()).collect();
    let mask = [true; 5];
    let (a, _) = act(&p, &f, &mask, ActMode::Greedy, &mut rng).unwrap();
    let (b, _) = act(&p, &g, &mask, ActMode::Greedy, &mut rng).unwrap();
    for (j, &i) in perm.iter().enumerate() {
        assert!((b.probs[j] - a.probs[i]).abs() < 1e-12);
    }
}

#[test]
fn fingerprint_matches_finite_differences_and_ignores_others() {
    let mut rng = stream(6, 0, 0);
    for _ in 0..10 {
        let p = ActorParams::init(12, &mut rng);
        let f = random_feats(4, &mut rng);
        let (_, tape) = p.forward(&f).unwrap();
        let g = p.fingerprint_contribution(&tape, 1).unwrap();
        for k in 0..RESOURCE_DIM {
            let h = 1e-5;
            let mut up = f.clone();
            up.resources[1][k] += h;
            let mut dn = f.clone();
            dn.resources[1][k] -= h;
            let (su, sd, s0) = (p.score(&up, 1).unwrap(), p.score(&dn, 1).unwrap(), p.score(&f, 1).unwrap());
            if ((su - s0) / h - (s0 - sd) / h).abs() > 1e-4 {
                continue;
            }
            assert!(rel_err(g[k], (su - sd) / (2.0 * h)) < 1e-5);
        }
        let mut other = f.clone();
        other.resources[3] = vec![0.9; RESOURCE_DIM];
        let (_, t2) = p.forward(&other).unwrap();
        assert_eq!(p.fingerprint_contribution(&t2, 1).unwrap(), g);
    }
}

#[test]
fn stale_actor_tape_rejected() {
    let mut rng = stream(7, 0, 0);
    let mut p = ActorParams::init(8, &mut rng);
    let f = random_feats(2, &mut rng);
    let (_, tape) = p.forward(&f).unwrap();
    let flat = p.flat();
    p.set_flat(&flat).unwrap();
    assert!(p.fingerprint_contribution(&tape, 0).is_err());
    assert!(p.backward(&tape, &[1.0, 0.0]).is_err());
}

#[test]
fn critic_constant_head_and_determinism() {
    let mut rng = stream(8, 0, 0);
    let mut c = CriticParams::init(16, &mut rng);
    let mut flat = c.flat();
    let n = flat.len();
    for v in &mut flat[n - 17..n - 1] {
        *v = 0.0;
    }
    flat[n - 1] = 0.75;
    c.set_flat(&flat).unwrap();
    let s = random_feats(1, &mut rng).state;
    assert_eq!(c.value(&s).unwrap(), 0.75);
    let c2 = CriticParams::init(16, &mut rng);
    assert_eq!(c2.value(&s).unwrap(), c2.value(&s).unwrap());
}

#[test]
fn fixed_head_masks_padding_and_fingerprint_matches_fd() {
    let mut rng = stream(9, 0, 0);
    let p = FixedHeadParams::init(16, 6, &mut rng);
    let f = random_feats(4, &mut rng);
    let (scores, tape) = p.forward(&f).unwrap();
    assert_eq!(scores.len(), 4);
    let g = p.fingerprint_contribution(&tape, 2).unwrap();
    assert_eq!(g.len(), RESOURCE_DIM);
    let too_many = random_feats(7, &mut rng);
    assert!(p.forward(&too_many).is_err());
    for k in 0..RESOURCE_DIM {
        let h = 1e-5;
        let mut up = f.clone();
        up.resources[2][k] += h;
        let mut dn = f.clone();
        dn.resources[2][k] -= h;
        let su = p.forward(&up).unwrap().0[2];
        let sd = p.forward(&dn).unwrap().0[2];
        if ((su - scores[2]) - (scores[2] - sd)).abs() / h > 1e-4 {
            continue;
        }
        assert!(rel_err(g[k], (su - sd) / (2.0 * h)) < 1e-5);
    }
}
