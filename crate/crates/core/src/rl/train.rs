use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::ppo::{batch_values, gae, ppo_update, Batch, GaussianPolicy, Learner, PpoConfig, PpoStats};
use crate::adversary::{sample_level, CurriculumSchedule};
use crate::envs::{Env, Normalization, Opponent, Outcome};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    /// PPO against HJ adversaries drawn from the level curriculum.
    #[default]
    Hjarl,
    /// PPO with no adversary.
    Ppo,
    /// Alternating protagonist/adversary PPO with one learned adversary.
    Rarl,
    /// A population of learned adversaries, one drawn per episode.
    Rap,
}

impl TrainerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainerKind::Hjarl => "hjarl",
            TrainerKind::Ppo => "ppo",
            TrainerKind::Rarl => "rarl",
            TrainerKind::Rap => "rap",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: TrainerKind,
    pub total_steps: u64,
    pub steps_per_update: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Multiplies rewards before advantage estimation; curves report unscaled rewards.
    pub reward_scale: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Population size for `rap`.
    pub adversaries: usize,
    /// Steps between intermediate checkpoints; 0 keeps only the initial and final ones.
    pub checkpoint_interval: u64,
    pub ppo: PpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: TrainerKind::Hjarl,
            total_steps: 1_000_000,
            steps_per_update: 4096,
            gamma: 0.99,
            lambda: 0.95,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            reward_scale: 1.0,
            beta_start: -2.0,
            beta_end: 2.0,
            adversaries: 3,
            checkpoint_interval: 0,
            ppo: PpoConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        let ok = self.steps_per_update > 0
            && (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.lambda)
            && !self.hidden.contains(&0)
            && self.reward_scale > 0.0
            && self.beta_start.is_finite()
            && self.beta_end.is_finite()
            && (self.kind != TrainerKind::Rap || self.adversaries > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid trainer settings {self:?}")))
        }
    }

    fn schedule(&self) -> CurriculumSchedule {
        CurriculumSchedule {
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            total_steps: self.total_steps.max(1),
        }
    }

    fn adversary_count(&self) -> usize {
        match self.kind {
            TrainerKind::Hjarl | TrainerKind::Ppo => 0,
            TrainerKind::Rarl => 1,
            TrainerKind::Rap => self.adversaries,
        }
    }
}

/// A policy and its critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub policy: GaussianPolicy,
    pub critic: Mlp,
}

impl AgentParams {
    fn random(obs_dim: usize, action_dim: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let policy = GaussianPolicy::random(obs_dim, &config.hidden, action_dim, config.init_log_std, rng)?;
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let critic = Mlp::random(sizes, 1.0, rng)?;
        Ok(Self { policy, critic })
    }

    /// Critic value of a raw (unnormalised) state.
    pub fn value(&self, normalization: &Normalization, state: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(&normalization.apply(state))?[0])
    }

    /// Deterministic (mean) action for a raw state.
    pub fn act(&self, normalization: &Normalization, state: &[f64]) -> Result<Vec<f64>> {
        self.policy.mean_action(&normalization.apply(state))
    }
}

/// Everything needed to resume training or evaluate a policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: TrainerKind,
    pub steps: u64,
    pub updates: u64,
    pub normalization: Normalization,
    pub protagonist: AgentParams,
    pub adversaries: Vec<AgentParams>,
}

impl Checkpoint {
    /// A freshly initialised agent for `env`.
    pub fn initial<E: Env + ?Sized>(env: &E, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let protagonist = AgentParams::random(env.observation_dim(), env.action_dim(), config, rng)?;
        let adversaries = (0..config.adversary_count())
            .map(|_| AgentParams::random(env.observation_dim(), env.adversary_dim(), config, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            kind: config.kind,
            steps: 0,
            updates: 0,
            normalization: env.normalization(),
            protagonist,
            adversaries,
        })
    }
}

/// One row of the training curve, written after every update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub mean_reward: f64,
    pub episode_len: f64,
    pub kl: f64,
    pub clip_frac: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurveRow>,
}

#[derive(Default)]
struct Trajectory {
    obs: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    /// Observation after the final step when the episode was cut by the step limit.
    bootstrap: Option<Vec<f64>>,
}

struct Episode {
    protagonist: Trajectory,
    adversary: Option<(usize, Trajectory)>,
    total_reward: f64,
    length: usize,
}

fn run_episode<E: Env + ?Sized>(
    env: &mut E,
    checkpoint: &Checkpoint,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    let norm = &checkpoint.normalization;
    env.reset(rng)?;
    let schedule = config.schedule();
    let (level, adversary) = match config.kind {
        TrainerKind::Ppo => (None, None),
        TrainerKind::Hjarl => {
            let n = env.hj_levels();
            let progress = schedule.progress(checkpoint.steps);
            (Some(sample_level(&schedule, progress, n, rng)), None)
        }
        TrainerKind::Rarl => (None, Some(0)),
        TrainerKind::Rap => (None, Some(rng.random_range(0..checkpoint.adversaries.len()))),
    };
    let mut pro = Trajectory::default();
    let mut adv = Trajectory::default();
    let mut total = 0.0;
    loop {
        let obs = norm.apply(env.state());
        let (action, lp) = checkpoint.protagonist.policy.sample(&obs, rng)?;
        let adv_action = match adversary {
            Some(k) => Some(checkpoint.adversaries[k].policy.sample(&obs, rng)?),
            None => None,
        };
        let opponent = match (&adv_action, level) {
            (Some((a, _)), _) => Opponent::Learned(a),
            (None, Some(level)) => Opponent::Hj { level },
            (None, None) => Opponent::Passive,
        };
        let t = env.step(&action, opponent, rng)?;
        if !t.reward.is_finite() {
            return Err(Error::Numerical("non-finite reward".into()));
        }
        total += t.reward;
        let r = t.reward * config.reward_scale;
        pro.obs.push(obs.clone());
        pro.actions.push(action);
        pro.log_probs.push(lp);
        pro.rewards.push(r);
        if let Some((a, lp)) = adv_action {
            adv.obs.push(obs);
            adv.actions.push(a);
            adv.log_probs.push(lp);
            adv.rewards.push(-r);
        }
        if t.terminal() {
            if t.outcome == Outcome::Timeout {
                let next = norm.apply(env.state());
                pro.bootstrap = Some(next.clone());
                if adversary.is_some() {
                    adv.bootstrap = Some(next);
                }
            }
            break;
        }
    }
    let length = pro.rewards.len();
    Ok(Episode {
        protagonist: pro,
        adversary: adversary.map(|k| (k, adv)),
        total_reward: total,
        length,
    })
}

fn build_batch<'a>(
    critic: &Mlp,
    trajectories: impl Iterator<Item = &'a Trajectory>,
    gamma: f64,
    lambda: f64,
) -> Result<Batch> {
    let mut batch = Batch::default();
    for traj in trajectories {
        let mut values = batch_values(critic, &traj.obs)?;
        let end = match &traj.bootstrap {
            Some(obs) => critic.forward(obs)?[0],
            None => 0.0,
        };
        values.push(end);
        let mut terminals = vec![false; traj.rewards.len()];
        if let Some(last) = terminals.last_mut() {
            *last = traj.bootstrap.is_none();
        }
        let (adv, ret) = gae(&traj.rewards, &values, &terminals, gamma, lambda)?;
        batch.observations.extend(traj.obs.iter().cloned());
        batch.actions.extend(traj.actions.iter().cloned());
        batch.log_probs.extend_from_slice(&traj.log_probs);
        batch.advantages.extend(adv);
        batch.returns.extend(ret);
    }
    Ok(batch)
}

/// Trains `env`'s protagonist with the configured trainer until `config.total_steps`
/// environment steps have been collected. `on_checkpoint` sees the initial agent, every
/// intermediate checkpoint and the final one.
pub fn train<E: Env + ?Sized>(
    env: &mut E,
    config: &TrainConfig,
    resume: Option<Checkpoint>,
    rng: &mut ChaCha8Rng,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<TrainReport> {
    config.validate()?;
    if config.kind == TrainerKind::Hjarl && env.hj_levels() == 0 {
        return Err(Error::Config("the hjarl trainer needs a value-function buffer".into()));
    }
    let mut checkpoint = match resume {
        Some(c) => {
            if c.kind != config.kind || c.adversaries.len() != config.adversary_count() {
                return Err(Error::Config(format!(
                    "checkpoint from a {} run cannot resume a {} run",
                    c.kind.as_str(),
                    config.kind.as_str()
                )));
            }
            if c.protagonist.policy.mean.input_dim() != env.observation_dim()
                || c.protagonist.policy.action_dim() != env.action_dim()
            {
                return Err(Error::Config("checkpoint does not match the environment".into()));
            }
            c
        }
        None => Checkpoint::initial(env, config, rng)?,
    };
    let mut pro = Learner::new(checkpoint.protagonist.policy.clone(), checkpoint.protagonist.critic.clone(), &config.ppo);
    let mut advs: Vec<Learner> = checkpoint
        .adversaries
        .iter()
        .map(|a| Learner::new(a.policy.clone(), a.critic.clone(), &config.ppo))
        .collect();

    if checkpoint.steps == 0 {
        on_checkpoint(&checkpoint)?;
    }
    let mut curve = Vec::new();
    let mut next_save = match config.checkpoint_interval {
        0 => u64::MAX,
        k => (checkpoint.steps / k + 1) * k,
    };

    while checkpoint.steps < config.total_steps {
        let mut episodes = Vec::new();
        let mut collected = 0;
        while collected < config.steps_per_update {
            let ep = run_episode(env, &checkpoint, config, rng)?;
            collected += ep.length;
            checkpoint.steps += ep.length as u64;
            episodes.push(ep);
        }

        let adversary_turn = config.kind == TrainerKind::Rarl && checkpoint.updates % 2 == 1;
        let mut stats = PpoStats::default();
        if !adversary_turn {
            let batch = build_batch(
                &pro.critic,
                episodes.iter().map(|e| &e.protagonist),
                config.gamma,
                config.lambda,
            )?;
            stats = ppo_update(&mut pro, &batch, &config.ppo, rng)?;
        }
        if config.kind == TrainerKind::Rap || adversary_turn {
            for (k, learner) in advs.iter_mut().enumerate() {
                let mine: Vec<&Trajectory> = episodes
                    .iter()
                    .filter_map(|e| e.adversary.as_ref())
                    .filter(|(j, _)| *j == k)
                    .map(|(_, t)| t)
                    .collect();
                if mine.is_empty() {
                    continue;
                }
                let batch = build_batch(&learner.critic, mine.into_iter(), config.gamma, config.lambda)?;
                let s = ppo_update(learner, &batch, &config.ppo, rng)?;
                if adversary_turn {
                    stats = s;
                }
            }
        }
        checkpoint.updates += 1;
        checkpoint.protagonist = AgentParams {
            policy: pro.policy.clone(),
            critic: pro.critic.clone(),
        };
        for (slot, l) in checkpoint.adversaries.iter_mut().zip(&advs) {
            *slot = AgentParams {
                policy: l.policy.clone(),
                critic: l.critic.clone(),
            };
        }

        let n = episodes.len() as f64;
        curve.push(CurveRow {
            step: checkpoint.steps,
            mean_reward: episodes.iter().map(|e| e.total_reward).sum::<f64>() / n,
            episode_len: episodes.iter().map(|e| e.length as f64).sum::<f64>() / n,
            kl: stats.approx_kl,
            clip_frac: stats.clip_fraction,
        });

        if checkpoint.steps >= next_save && checkpoint.steps < config.total_steps {
            on_checkpoint(&checkpoint)?;
            let k = config.checkpoint_interval;
            next_save = (checkpoint.steps / k + 1) * k;
        }
    }
    if !curve.is_empty() {
        on_checkpoint(&checkpoint)?;
    }
    Ok(TrainReport { checkpoint, curve })
}

/// A fresh generator for training from an integer seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
