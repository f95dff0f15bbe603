use hjarl_core::rl::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, with a floor so an all-zero pair compares equal.
fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn central_difference(params: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let keep = p[i];
            p[i] = keep + EPS;
            let up = f(&p);
            p[i] = keep - EPS;
            let down = f(&p);
            p[i] = keep;
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

#[test]
fn backward_matches_central_differences_on_random_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..100 {
        let depth = rng.random_range(0..3);
        let mut sizes = vec![rng.random_range(1..6)];
        for _ in 0..depth {
            sizes.push(rng.random_range(1..9));
        }
        sizes.push(rng.random_range(1..4));
        if k == 0 {
            sizes = vec![4, 64, 64, 1];
        }
        let net = Mlp::random(sizes.clone(), 1.0, &mut rng).unwrap();
        let rows = rng.random_range(1..5);
        let input = random_matrix(&mut rng, rows, sizes[0]);
        let weights = random_matrix(&mut rng, rows, *sizes.last().unwrap());
        let analytic = net.backward(input.view(), weights.view()).unwrap();
        let numeric = central_difference(net.params(), |p| {
            let m = Mlp::from_params(sizes.clone(), p.to_vec()).unwrap();
            (&m.forward_batch(input.view()).unwrap() * &weights).sum()
        });
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "net {k} {sizes:?}: relative error {err}");
    }
}

#[test]
fn ppo_loss_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for k in 0..30 {
        let (obs_dim, act_dim, rows) = (4, 2, 16);
        let policy = GaussianPolicy::random(obs_dim, &[8, 8], act_dim, -0.5, &mut rng).unwrap();
        let critic = Mlp::random(vec![obs_dim, 8, 8, 1], 1.0, &mut rng).unwrap();
        let obs = random_matrix(&mut rng, rows, obs_dim);
        let acts = random_matrix(&mut rng, rows, act_dim);
        // old log-probs near the current ones keep most ratios inside the clip band but
        // leave some outside, so both branches are exercised
        let old: Vec<f64> = (0..rows)
            .map(|r| {
                let lp = policy.log_prob(&obs.row(r).to_vec(), &acts.row(r).to_vec()).unwrap();
                lp + rng.random_range(-0.4..0.4)
            })
            .collect();
        let adv: Vec<f64> = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ret: Vec<f64> = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
        let config = PpoConfig {
            entropy_coef: if k % 2 == 0 { 0.0 } else { 0.01 },
            ..PpoConfig::default()
        };
        let g = loss_gradients(&policy, &critic, obs.view(), acts.view(), &old, &adv, &ret, &config).unwrap();

        let sizes = policy.mean.sizes().to_vec();
        let n_mean = policy.mean.params().len();
        let mut flat = policy.mean.params().to_vec();
        flat.extend_from_slice(&policy.log_std);
        let numeric = central_difference(&flat, |p| {
            let mean = Mlp::from_params(sizes.clone(), p[..n_mean].to_vec()).unwrap();
            let pol = GaussianPolicy {
                mean,
                log_std: p[n_mean..].to_vec(),
            };
            loss_gradients(&pol, &critic, obs.view(), acts.view(), &old, &adv, &ret, &config)
                .unwrap()
                .policy_loss
        });
        let err = relative_error(&g.policy_grad, &numeric);
        assert!(err < 1e-4, "policy case {k}: relative error {err}");

        let csizes = critic.sizes().to_vec();
        let numeric = central_difference(critic.params(), |p| {
            let c = Mlp::from_params(csizes.clone(), p.to_vec()).unwrap();
            config.value_coef
                * loss_gradients(&policy, &c, obs.view(), acts.view(), &old, &adv, &ret, &config)
                    .unwrap()
                    .value_loss
        });
        let err = relative_error(&g.critic_grad, &numeric);
        assert!(err < 1e-4, "critic case {k}: relative error {err}");
    }
}

#[test]
fn gae_hand_tapes() {
    // γ = 1, λ = 1, unit rewards, zero values, terminal end: Monte-Carlo returns (3, 2, 1)
    let (a, r) = gae(&[1.0, 1.0, 1.0], &[0.0; 4], &[false, false, true], 1.0, 1.0).unwrap();
    assert_eq!(a, vec![3.0, 2.0, 1.0]);
    assert_eq!(r, vec![3.0, 2.0, 1.0]);

    // λ = 0 gives the one-step TD errors
    let v = [0.5, -1.0, 2.0, 4.0];
    let rw = [1.0, 2.0, 3.0];
    let (a, _) = gae(&rw, &v, &[false, false, false], 0.9, 0.0).unwrap();
    let td: Vec<f64> = (0..3).map(|t| rw[t] + 0.9 * v[t + 1] - v[t]).collect();
    assert_eq!(a, td);

    // λ = 1, γ < 1: discounted return minus the baseline, bootstrapped at the cut
    let g = 0.5;
    let (a, r) = gae(&rw, &v, &[false, false, false], g, 1.0).unwrap();
    let mc2 = 3.0 + g * 4.0;
    let mc1 = 2.0 + g * mc2;
    let mc0 = 1.0 + g * mc1;
    let expect = [mc0 - 0.5, mc1 + 1.0, mc2 - 2.0];
    for t in 0..3 {
        assert!((a[t] - expect[t]).abs() < 1e-12);
        assert!((r[t] - (expect[t] + v[t])).abs() < 1e-12);
    }

    // single step with V ≡ 0
    let (a, _) = gae(&[-7.5], &[0.0, 0.0], &[true], 0.99, 0.95).unwrap();
    assert_eq!(a, vec![-7.5]);
}

fn small_batch(policy: &GaussianPolicy, rng: &mut ChaCha8Rng, n: usize) -> Batch {
    let mut batch = Batch::default();
    for _ in 0..n {
        let o: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, lp) = policy.sample(&o, rng).unwrap();
        batch.observations.push(o);
        batch.actions.push(a);
        batch.log_probs.push(lp);
        batch.advantages.push(rng.random_range(-1.0..1.0));
        batch.returns.push(rng.random_range(-1.0..1.0));
    }
    batch
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn first_minibatch_ratio_is_one(seed in any::<u64>(), n in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::random(3, &[16], 2, -0.5, &mut rng).unwrap();
        let critic = Mlp::random(vec![3, 16, 1], 1.0, &mut rng).unwrap();
        let batch = small_batch(&policy, &mut rng, n);
        let config = PpoConfig::default();
        let mut learner = Learner::new(policy, critic, &config);
        let stats = ppo_update(&mut learner, &batch, &config, &mut rng).unwrap();
        prop_assert!((stats.first_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gae_returns_equal_advantage_plus_value(
        rewards in prop::collection::vec(-10.0..10.0f64, 1..30),
        seed in any::<u64>(),
        gamma in 0.0..=1.0f64,
        lambda in 0.0..=1.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rewards.len();
        let values: Vec<f64> = (0..=n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut terminals = vec![false; n];
        terminals[n - 1] = rng.random();
        let (a, r) = gae(&rewards, &values, &terminals, gamma, lambda).unwrap();
        for t in 0..n {
            prop_assert!((r[t] - a[t] - values[t]).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_advantages_leave_the_policy_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let policy = GaussianPolicy::random(3, &[16], 2, -0.5, &mut rng).unwrap();
    let critic = Mlp::random(vec![3, 16, 1], 1.0, &mut rng).unwrap();
    let mut batch = small_batch(&policy, &mut rng, 100);
    batch.advantages.iter_mut().for_each(|a| *a = 0.0);
    let config = PpoConfig {
        normalize_advantages: false,
        ..PpoConfig::default()
    };
    let mut learner = Learner::new(policy.clone(), critic.clone(), &config);
    ppo_update(&mut learner, &batch, &config, &mut rng).unwrap();
    assert_eq!(learner.policy, policy);
    assert_ne!(learner.critic, critic);
}
