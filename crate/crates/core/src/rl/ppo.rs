use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{select_rows, Adam, Mlp};
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal Gaussian policy with a network mean and a state-independent log-std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(mean: Mlp, log_std: Vec<f64>) -> Result<Self> {
        if log_std.len() != mean.output_dim() {
            return Err(Error::Shape(format!(
                "log-std has {} entries for a {}-D action",
                log_std.len(),
                mean.output_dim()
            )));
        }
        let mut p = Self { mean, log_std };
        p.clamp_log_std();
        Ok(p)
    }

    pub fn random<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Self::new(Mlp::random(sizes, 0.01, rng)?, vec![init_log_std; action_dim])
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn clamp_log_std(&mut self) {
        for v in &mut self.log_std {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward(obs)
    }

    /// Samples an action and returns it with its log-probability.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mu = self.mean.forward(obs)?;
        let action: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = log_prob(&mu, &self.log_std, &action);
        Ok((action, lp))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        Ok(log_prob(&self.mean.forward(obs)?, &self.log_std, action))
    }
}

pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let z = (action[i] - mean[i]) / log_std[i].exp();
        lp += -0.5 * z * z - log_std[i] - 0.5 * LN_2PI;
    }
    lp
}

/// Generalised advantage estimates for one trajectory. `values` holds `V(s_0..s_T)`, one
/// more entry than `rewards`; `terminals[t]` cuts both the bootstrap of `V(s_{t+1})` and
/// the λ recursion.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    terminals: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 || terminals.len() != n {
        return Err(Error::Shape(format!(
            "GAE needs {n} terminals and {} values, got {} and {}",
            n + 1,
            terminals.len(),
            values.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub adam_betas: [f64; 2],
    pub epochs: usize,
    pub minibatch: usize,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.0,
            lr: 3e-4,
            adam_betas: [0.9, 0.999],
            epochs: 10,
            minibatch: 64,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.clip > 0.0
            && self.value_coef >= 0.0
            && self.entropy_coef >= 0.0
            && self.lr >= 0.0
            && self.adam_betas.iter().all(|b| (0.0..1.0).contains(b))
            && self.epochs > 0
            && self.minibatch > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid PPO settings {self:?}")))
        }
    }
}

/// A flattened rollout batch ready for an update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// A policy, its critic and their optimiser states.
#[derive(Clone, Debug)]
pub struct Learner {
    pub policy: GaussianPolicy,
    pub critic: Mlp,
    policy_opt: Adam,
    critic_opt: Adam,
}

impl Learner {
    pub fn new(policy: GaussianPolicy, critic: Mlp, config: &PpoConfig) -> Self {
        let n = policy.mean.params().len() + policy.log_std.len();
        let [b1, b2] = config.adam_betas;
        Self {
            policy_opt: Adam::new(n, config.lr, b1, b2),
            critic_opt: Adam::new(critic.params().len(), config.lr, b1, b2),
            policy,
            critic,
        }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?[0])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Mean probability ratio over the first minibatch of the first epoch.
    pub first_ratio: f64,
}

/// Minibatch losses and their exact parameter gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    /// `−mean(min(ρA, clip(ρ)A)) − entropy_coef · Σ log σ`.
    pub policy_loss: f64,
    /// Mean squared error of the critic against the returns.
    pub value_loss: f64,
    /// Gradient of `policy_loss` w.r.t. the mean-network parameters followed by log-std.
    pub policy_grad: Vec<f64>,
    /// Gradient of `value_coef · value_loss` w.r.t. the critic parameters.
    pub critic_grad: Vec<f64>,
    pub ratio_sum: f64,
    pub kl_sum: f64,
    pub clipped: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn loss_gradients(
    policy: &GaussianPolicy,
    critic: &Mlp,
    obs: ArrayView2<'_, f64>,
    actions: ArrayView2<'_, f64>,
    old_log_probs: &[f64],
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
) -> Result<LossGradients> {
    let rows = obs.nrows();
    if actions.nrows() != rows || old_log_probs.len() != rows || advantages.len() != rows || returns.len() != rows {
        return Err(Error::Shape("minibatch columns have different lengths".into()));
    }
    if rows == 0 {
        return Err(Error::Config("empty minibatch".into()));
    }
    let b = rows as f64;
    let act_dim = policy.action_dim();
    let n_mean = policy.mean.params().len();
    let mut out = LossGradients {
        policy_loss: 0.0,
        value_loss: 0.0,
        policy_grad: vec![0.0; n_mean + act_dim],
        critic_grad: vec![0.0; critic.params().len()],
        ratio_sum: 0.0,
        kl_sum: 0.0,
        clipped: 0,
    };

    let pcache = policy.mean.forward_cached(obs)?;
    let mu = pcache.output();
    let log_std = &policy.log_std;
    let inv_var: Vec<f64> = log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    let mut dmu = Array2::<f64>::zeros(mu.dim());
    for r in 0..rows {
        let mut lp = 0.0;
        for j in 0..act_dim {
            let z = (actions[[r, j]] - mu[[r, j]]) * inv_var[j].sqrt();
            lp += -0.5 * z * z - log_std[j] - 0.5 * LN_2PI;
        }
        let adv = advantages[r];
        let ratio = (lp - old_log_probs[r]).exp();
        let clipped = ratio.clamp(1.0 - config.clip, 1.0 + config.clip);
        out.policy_loss -= (ratio * adv).min(clipped * adv) / b;
        out.ratio_sum += ratio;
        out.kl_sum += old_log_probs[r] - lp;
        if (ratio - 1.0).abs() > config.clip {
            out.clipped += 1;
        }
        // ∂(−surrogate)/∂logπ is nonzero only when the unclipped branch is active
        let active = if adv >= 0.0 {
            ratio <= 1.0 + config.clip
        } else {
            ratio >= 1.0 - config.clip
        };
        if active {
            let g = -adv * ratio / b;
            for j in 0..act_dim {
                let diff = actions[[r, j]] - mu[[r, j]];
                dmu[[r, j]] = g * diff * inv_var[j];
                out.policy_grad[n_mean + j] += g * (diff * diff * inv_var[j] - 1.0);
            }
        }
    }
    for j in 0..act_dim {
        // entropy Σ log σ + const enters the loss with a minus sign
        out.policy_loss -= config.entropy_coef * log_std[j];
        out.policy_grad[n_mean + j] -= config.entropy_coef;
    }
    policy.mean.backward_cached(&pcache, dmu.view(), &mut out.policy_grad[..n_mean])?;

    let vcache = critic.forward_cached(obs)?;
    let v = vcache.output();
    let mut dv = Array2::<f64>::zeros(v.dim());
    for r in 0..rows {
        let err = v[[r, 0]] - returns[r];
        out.value_loss += err * err / b;
        dv[[r, 0]] = config.value_coef * 2.0 * err / b;
    }
    critic.backward_cached(&vcache, dv.view(), &mut out.critic_grad)?;
    Ok(out)
}

/// Clipped-surrogate PPO update of both networks. On a non-finite loss the learner is left
/// untouched and a numerical error is returned.
pub fn ppo_update<R: Rng + ?Sized>(
    learner: &mut Learner,
    batch: &Batch,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    if batch.is_empty() {
        return Err(Error::Config("PPO update on an empty batch".into()));
    }
    let n = batch.len();
    let obs_dim = learner.policy.mean.input_dim();
    let act_dim = learner.policy.action_dim();
    let obs = super::mlp::stack_rows(&batch.observations, obs_dim)?;
    let acts = super::mlp::stack_rows(&batch.actions, act_dim)?;
    let mut adv = batch.advantages.clone();
    if config.normalize_advantages && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt() + 1e-8;
        adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }

    let backup = learner.clone();
    let mut stats = PpoStats::default();
    let mut count = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let n_mean = learner.policy.mean.params().len();

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        for (mb, idx) in order.chunks(config.minibatch).enumerate() {
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let g = loss_gradients(
                &learner.policy,
                &learner.critic,
                select_rows(&obs, idx).view(),
                select_rows(&acts, idx).view(),
                &pick(&batch.log_probs),
                &pick(&adv),
                &pick(&batch.returns),
                config,
            )?;
            if !(g.policy_loss.is_finite() && g.value_loss.is_finite())
                || g.policy_grad.iter().chain(&g.critic_grad).any(|x| !x.is_finite())
            {
                *learner = backup;
                return Err(Error::Numerical(format!(
                    "non-finite PPO loss (policy {}, value {}) in epoch {epoch}",
                    g.policy_loss, g.value_loss
                )));
            }
            if epoch == 0 && mb == 0 {
                stats.first_ratio = g.ratio_sum / idx.len() as f64;
            }
            stats.policy_loss += g.policy_loss;
            stats.value_loss += g.value_loss;
            stats.approx_kl += g.kl_sum;
            stats.clip_fraction += g.clipped as f64;
            count += idx.len();

            let mut flat: Vec<f64> = learner.policy.mean.params().to_vec();
            flat.extend_from_slice(&learner.policy.log_std);
            learner.policy_opt.step(&mut flat, &g.policy_grad);
            learner.policy.mean.params_mut().copy_from_slice(&flat[..n_mean]);
            learner.policy.log_std.copy_from_slice(&flat[n_mean..]);
            learner.policy.clamp_log_std();
            let mut cparams = learner.critic.params().to_vec();
            learner.critic_opt.step(&mut cparams, &g.critic_grad);
            learner.critic.params_mut().copy_from_slice(&cparams);
        }
    }
    let updates = (config.epochs * n.div_ceil(config.minibatch)) as f64;
    stats.policy_loss /= updates;
    stats.value_loss /= updates;
    stats.approx_kl /= count as f64;
    stats.clip_fraction /= count as f64;
    Ok(stats)
}

/// Critic values for a set of observations.
pub fn batch_values(critic: &Mlp, observations: &[Vec<f64>]) -> Result<Vec<f64>> {
    if observations.is_empty() {
        return Ok(Vec::new());
    }
    let m = super::mlp::stack_rows(observations, critic.input_dim())?;
    Ok(critic.forward_batch(m.view())?.index_axis(Axis(1), 0).to_vec())
}
