//! Deterministic policy-gradient learner: replay memory, actor and critic
//! with target copies, and the episodic training loop.

use std::io::Write;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::AgentConfig;
use crate::env::Env;
use crate::error::{Error, Result};
use crate::nn::{soft_update, Activation, Adam, LayerSpec, MlpParameters};
use crate::rng::{derive_indexed, derive_seed, SimRng};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Half-width of the uniform init of both output layers.
const OUTPUT_INIT_SCALE: f64 = 3e-3;

/// What the learner needs from an environment.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Start an episode; returns the first observation.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Apply a normalized action; returns `(next_observation, reward, done)`.
    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)>;
}

impl Environment for Env {
    fn observation_dim(&self) -> usize {
        self.scenario().system().observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.scenario().system().action_dim()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        Env::reset(self, seed);
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
        let out = Env::step(self, action)?;
        Ok((self.observation(), out.reward, out.done))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action_raw: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub terminal: bool,
}

/// A sampled mini-batch laid out row-wise.
#[derive(Debug, Clone)]
pub struct Batch {
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_observations: Array2<f64>,
    pub terminal: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Batch> {
        let first = items.first().ok_or_else(|| Error::usage("empty batch"))?;
        let (n, od, ad) = (items.len(), first.observation.len(), first.action_raw.len());
        let mut batch = Batch {
            observations: Array2::zeros((n, od)),
            actions: Array2::zeros((n, ad)),
            rewards: Array1::zeros(n),
            next_observations: Array2::zeros((n, od)),
            terminal: Vec::with_capacity(n),
        };
        for (i, t) in items.iter().enumerate() {
            if t.observation.len() != od || t.next_observation.len() != od || t.action_raw.len() != ad {
                return Err(Error::usage("transition dimensions differ within a batch"));
            }
            batch.observations.row_mut(i).assign(&Array1::from(t.observation.clone()));
            batch.actions.row_mut(i).assign(&Array1::from(t.action_raw.clone()));
            batch.next_observations.row_mut(i).assign(&Array1::from(t.next_observation.clone()));
            batch.rewards[i] = t.reward;
            batch.terminal.push(t.terminal);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed-capacity ring of transitions; the oldest is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement from the filled region.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch> {
        if self.items.is_empty() {
            return Err(Error::usage("sampling from an empty replay buffer"));
        }
        let picks: Vec<&Transition> = (0..size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect();
        Batch::from_transitions(&picks)
    }
}

pub fn actor_network<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> MlpParameters {
    let mut specs: Vec<LayerSpec> = hidden
        .iter()
        .map(|&w| LayerSpec {
            output_dim: w,
            activation: Activation::Relu,
            layer_norm: false,
            init_scale: None,
        })
        .collect();
    specs.push(LayerSpec {
        output_dim: act_dim,
        activation: Activation::Tanh,
        layer_norm: false,
        init_scale: Some(OUTPUT_INIT_SCALE),
    });
    MlpParameters::new(obs_dim, &specs, rng)
}

/// Critic on the concatenated `[observation, action]`; the first hidden
/// layer is normalized.
pub fn critic_network<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> MlpParameters {
    let mut specs: Vec<LayerSpec> = hidden
        .iter()
        .enumerate()
        .map(|(i, &w)| LayerSpec {
            output_dim: w,
            activation: Activation::Relu,
            layer_norm: i == 0,
            init_scale: None,
        })
        .collect();
    specs.push(LayerSpec {
        output_dim: 1,
        activation: Activation::Identity,
        layer_norm: false,
        init_scale: Some(OUTPUT_INIT_SCALE),
    });
    MlpParameters::new(obs_dim + act_dim, &specs, rng)
}

fn critic_input(obs: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs.view(), actions.view()]).expect("batch rows agree")
}

pub fn actor_forward(actor: &MlpParameters, observation: &[f64]) -> Result<Vec<f64>> {
    actor.forward_one(observation)
}

pub fn critic_forward(critic: &MlpParameters, observation: &[f64], action: &[f64]) -> Result<f64> {
    let input: Vec<f64> = observation.iter().chain(action).copied().collect();
    Ok(critic.forward_one(&input)?[0])
}

/// `Y = r + gamma * Q'(s', clip(pi'(s') + xi'))`, with `Y = r` at terminals.
pub fn td_targets<R: Rng + ?Sized>(
    batch: &Batch,
    target_actor: &MlpParameters,
    target_critic: &MlpParameters,
    gamma: f64,
    target_noise_std: f64,
    rng: &mut R,
) -> Result<Array1<f64>> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let mut next_actions = target_actor.forward(batch.next_observations.view())?;
    if target_noise_std > 0.0 {
        let normal = Normal::new(0.0, target_noise_std).map_err(|e| Error::domain(e.to_string()))?;
        next_actions.mapv_inplace(|a| (a + normal.sample(rng)).clamp(-1.0, 1.0));
    }
    let q_next = target_critic.forward(critic_input(&batch.next_observations, &next_actions).view())?;
    Ok(Array1::from_shape_fn(batch.len(), |i| {
        if batch.terminal[i] || gamma == 0.0 {
            batch.rewards[i]
        } else {
            batch.rewards[i] + gamma * q_next[[i, 0]]
        }
    }))
}

/// One Adam step on the mean squared TD error; returns the pre-step loss.
pub fn critic_update(
    critic: &mut MlpParameters,
    opt: &mut Adam,
    batch: &Batch,
    targets: &Array1<f64>,
    lr: f64,
) -> Result<f64> {
    let n = batch.len();
    if targets.len() != n {
        return Err(Error::usage("targets and batch differ in length"));
    }
    let cache = critic.forward_cached(critic_input(&batch.observations, &batch.actions).view())?;
    let q = cache.output().column(0).to_owned();
    let err = &q - targets;
    let loss = err.mapv(|e| e * e).sum() / n as f64;
    let upstream = (err * (2.0 / n as f64)).insert_axis(Axis(1));
    let grads = critic.param_gradients(&cache, &upstream);
    opt.step(critic, &grads, lr);
    Ok(loss)
}

/// Gradient of `mean Q(s, pi(s))` with respect to the actor parameters,
/// together with the objective value. The critic is only read.
pub fn actor_objective_gradient(
    actor: &MlpParameters,
    critic: &MlpParameters,
    observations: &Array2<f64>,
) -> Result<(f64, MlpParameters)> {
    actor_chain_rule(actor, observations, |actions| critic_action_gradient(critic, observations, actions))
}

/// `mean Q(s, a)` over rows and its gradient with respect to `a`.
fn critic_action_gradient(
    critic: &MlpParameters,
    observations: &Array2<f64>,
    actions: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    let n = observations.nrows();
    let cache = critic.forward_cached(critic_input(observations, actions).view())?;
    let objective = cache.output().sum() / n as f64;
    let upstream = Array2::from_elem((n, 1), 1.0 / n as f64);
    let d_input = critic.input_gradient(&cache, &upstream);
    Ok((objective, d_input.slice(s![.., observations.ncols()..]).to_owned()))
}

/// Chain `dQ/da` from `q_grad` through the actor.
pub fn actor_chain_rule<F>(actor: &MlpParameters, observations: &Array2<f64>, q_grad: F) -> Result<(f64, MlpParameters)>
where
    F: FnOnce(&Array2<f64>) -> Result<(f64, Array2<f64>)>,
{
    let cache = actor.forward_cached(observations.view())?;
    let (objective, d_action) = q_grad(cache.output())?;
    let grads = actor.param_gradients(&cache, &d_action);
    Ok((objective, grads))
}

/// One Adam ascent step on an objective whose action gradient is given by
/// `q_grad`; returns the pre-step objective.
pub fn actor_ascent_step<F>(
    actor: &mut MlpParameters,
    opt: &mut Adam,
    observations: &Array2<f64>,
    q_grad: F,
    lr: f64,
) -> Result<f64>
where
    F: FnOnce(&Array2<f64>) -> Result<(f64, Array2<f64>)>,
{
    if observations.nrows() == 0 {
        return Err(Error::usage("empty batch"));
    }
    let (objective, mut grads) = actor_chain_rule(actor, observations, q_grad)?;
    for g in grads.buffers_mut() {
        g.iter_mut().for_each(|v| *v = -*v);
    }
    opt.step(actor, &grads, lr);
    Ok(objective)
}

/// One Adam ascent step on `mean Q(s, pi(s))`; returns the pre-step objective.
pub fn actor_update(
    actor: &mut MlpParameters,
    opt: &mut Adam,
    critic: &MlpParameters,
    batch: &Batch,
    lr: f64,
) -> Result<f64> {
    let obs = &batch.observations;
    actor_ascent_step(actor, opt, obs, |a| critic_action_gradient(critic, obs, a), lr)
}

/// `pi(s)` plus Gaussian exploration noise, clipped to `[-1, 1]`.
pub fn act<R: Rng + ?Sized>(actor: &MlpParameters, observation: &[f64], noise_std: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(noise_std >= 0.0) {
        return Err(Error::domain(format!("noise std {noise_std} is negative")));
    }
    let mut a = actor_forward(actor, observation)?;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::domain(e.to_string()))?;
        for v in &mut a {
            *v = (*v + normal.sample(rng)).clamp(-1.0, 1.0);
        }
    }
    Ok(a)
}

/// Actor, critic, their target copies, and both optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub config: AgentConfig,
    pub observation_dim: usize,
    pub action_dim: usize,
    pub actor: MlpParameters,
    pub critic: MlpParameters,
    pub target_actor: MlpParameters,
    pub target_critic: MlpParameters,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl Agent {
    pub fn new(observation_dim: usize, action_dim: usize, config: AgentConfig, seed: u64) -> Self {
        let mut rng = SimRng::new(derive_seed(seed, "init"));
        let actor = actor_network(observation_dim, action_dim, &config.hidden_widths, &mut rng);
        let critic = critic_network(observation_dim, action_dim, &config.hidden_widths, &mut rng);
        Agent {
            observation_dim,
            action_dim,
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: Adam::new(&actor),
            critic_opt: Adam::new(&critic),
            actor,
            critic,
            config,
        }
    }

    /// Greedy action.
    pub fn policy(&self, observation: &[f64]) -> Result<Vec<f64>> {
        actor_forward(&self.actor, observation)
    }

    pub fn act<R: Rng + ?Sized>(&self, observation: &[f64], noise_std: f64, rng: &mut R) -> Result<Vec<f64>> {
        act(&self.actor, observation, noise_std, rng)
    }

    /// Critic update, actor update, and both soft updates on one batch.
    /// Returns the critic loss before the step.
    pub fn update_round<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64> {
        let cfg = &self.config;
        let targets = td_targets(
            batch,
            &self.target_actor,
            &self.target_critic,
            cfg.discount,
            cfg.target_noise_std,
            rng,
        )?;
        let loss = critic_update(&mut self.critic, &mut self.critic_opt, batch, &targets, cfg.learning_rate)?;
        actor_update(&mut self.actor, &mut self.actor_opt, &self.critic, batch, cfg.learning_rate)?;
        soft_update(&mut self.target_critic, &self.critic, cfg.soft_update_tau);
        soft_update(&mut self.target_actor, &self.actor, cfg.soft_update_tau);
        Ok(loss)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            agent: self.clone(),
        };
        let text = serde_json::to_string(&doc)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Agent> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Checkpoint = serde_json::from_str(&text)?;
        if doc.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::usage(format!(
                "checkpoint format {} is not supported (expected {})",
                doc.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        let a = doc.agent;
        for net in [&a.actor, &a.critic, &a.target_actor, &a.target_critic] {
            net.validate()?;
        }
        if a.actor.input_dim() != a.observation_dim
            || a.actor.output_dim() != a.action_dim
            || a.critic.input_dim() != a.observation_dim + a.action_dim
        {
            return Err(Error::usage("checkpoint network shapes do not match its dimensions"));
        }
        Ok(a)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    agent: Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub moving_avg_100: f64,
    pub noise_std: f64,
    /// Mean pre-step critic loss over the episode's update rounds; NaN if none ran.
    pub critic_loss: f64,
}

pub fn write_train_log<W: Write>(rows: &[TrainLogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<train log>", e))?;
    Ok(())
}

pub fn read_train_log(path: &Path) -> Result<Vec<TrainLogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Exploration std for episode `episode` (0-based) of `episodes`, decaying
/// linearly from the start to the end value.
pub fn noise_schedule(cfg: &AgentConfig, episode: usize, episodes: usize) -> f64 {
    let frac = if episodes <= 1 {
        0.0
    } else {
        episode as f64 / (episodes - 1) as f64
    };
    cfg.noise_std_start + (cfg.noise_std_end - cfg.noise_std_start) * frac
}

/// Seed of the environment draw for a training episode.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    derive_indexed(seed, "train-episode", episode as u64)
}

/// Run `episodes` episodes, storing every transition and running update
/// rounds after each episode once the buffer holds a full batch.
pub fn train<E: Environment>(
    env: &mut E,
    config: &AgentConfig,
    episodes: usize,
    seed: u64,
    episode_length_hint: usize,
) -> Result<(Agent, Vec<TrainLogRow>)> {
    config.validate()?;
    let mut agent = Agent::new(env.observation_dim(), env.action_dim(), config.clone(), seed);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut explore = SimRng::new(derive_seed(seed, "explore"));
    let mut sampler = SimRng::new(derive_seed(seed, "replay"));
    let rounds = config.updates_per_episode.unwrap_or(episode_length_hint).max(1);
    let mut log = Vec::with_capacity(episodes);
    let mut returns = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let noise = noise_schedule(config, e, episodes);
        let mut obs = env.reset(episode_seed(seed, e));
        let mut total = 0.0;
        loop {
            let action = agent.act(&obs, noise, &mut explore)?;
            let (next, reward, done) = env.step(&action)?;
            total += reward;
            buffer.push(Transition {
                observation: obs,
                action_raw: action,
                reward: reward * config.reward_scale,
                next_observation: next.clone(),
                terminal: done,
            });
            obs = next;
            if done {
                break;
            }
        }
        let mut loss_sum = 0.0;
        let mut ran = 0usize;
        if buffer.len() >= config.batch_size {
            for _ in 0..rounds {
                let batch = buffer.sample(config.batch_size, &mut sampler)?;
                loss_sum += agent.update_round(&batch, &mut sampler)?;
                ran += 1;
            }
        }
        returns.push(total);
        let window = &returns[returns.len().saturating_sub(100)..];
        log.push(TrainLogRow {
            episode: e + 1,
            episode_return: total,
            moving_avg_100: window.iter().sum::<f64>() / window.len() as f64,
            noise_std: noise,
            critic_loss: if ran == 0 { f64::NAN } else { loss_sum / ran as f64 },
        });
    }
    Ok((agent, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    use crate::nn::Layer;

    fn small_config() -> AgentConfig {
        AgentConfig {
            hidden_widths: vec![16, 16],
            batch_size: 8,
            buffer_capacity: 100,
            ..AgentConfig::default()
        }
    }

    fn transition(tag: f64, terminal: bool) -> Transition {
        Transition {
            observation: vec![tag, 0.0],
            action_raw: vec![0.5],
            reward: tag,
            next_observation: vec![tag, 1.0],
            terminal,
        }
    }

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(transition(i as f64, false));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        assert!(!rewards.contains(&0.0) && !rewards.contains(&1.0));
        let mut rng = SimRng::new(0);
        let batch = buf.sample(50, &mut rng).unwrap();
        assert!(batch.rewards.iter().all(|r| [2.0, 3.0, 4.0].contains(r)));
    }

    #[test]
    fn sampling_never_reads_unwritten_slots() {
        let mut buf = ReplayBuffer::new(100);
        buf.push(transition(7.0, false));
        let batch = buf.sample(20, &mut SimRng::new(1)).unwrap();
        assert!(batch.rewards.iter().all(|&r| r == 7.0));
        assert!(ReplayBuffer::new(4).sample(1, &mut SimRng::new(1)).is_err());
    }

    #[test]
    fn actor_outputs_stay_bounded() {
        let mut rng = SimRng::new(3);
        let mut actor = actor_network(4, 3, &[8], &mut rng);
        for b in actor.buffers_mut() {
            b.iter_mut().for_each(|v| *v *= 50.0);
        }
        let y = actor_forward(&actor, &[10.0, -10.0, 5.0, 3.0]).unwrap();
        assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(y, actor_forward(&actor, &[10.0, -10.0, 5.0, 3.0]).unwrap());
    }

    #[test]
    fn critic_hand_example() {
        // one hidden unit: normalization of a single value gives its bias
        let critic = MlpParameters {
            layers: vec![
                Layer {
                    weights: array![[1.0, 1.0]],
                    biases: array![0.0],
                    norm: Some(crate::nn::LayerNorm {
                        gain: array![2.0],
                        bias: array![0.5],
                    }),
                    activation: Activation::Relu,
                },
                Layer {
                    weights: array![[3.0]],
                    biases: array![-1.0],
                    norm: None,
                    activation: Activation::Identity,
                },
            ],
        };
        assert_relative_eq!(critic_forward(&critic, &[0.2], &[0.7]).unwrap(), 0.5, max_relative = 1e-12);
    }

    fn linear(w: f64, b: f64, act: Activation) -> MlpParameters {
        MlpParameters {
            layers: vec![Layer {
                weights: array![[w]],
                biases: array![b],
                norm: None,
                activation: act,
            }],
        }
    }

    #[test]
    fn td_target_examples() {
        let mut buf = ReplayBuffer::new(4);
        buf.push(Transition {
            observation: vec![0.5],
            action_raw: vec![0.1],
            reward: 2.0,
            next_observation: vec![0.3],
            terminal: false,
        });
        let batch = buf.sample(1, &mut SimRng::new(0)).unwrap();
        let actor = linear(1.0, 0.0, Activation::Tanh);
        let critic = MlpParameters {
            layers: vec![Layer {
                weights: array![[2.0, -1.0]],
                biases: array![0.25],
                norm: None,
                activation: Activation::Identity,
            }],
        };
        let mut rng = SimRng::new(0);
        let y = td_targets(&batch, &actor, &critic, 0.9, 0.0, &mut rng).unwrap();
        let q = 2.0 * 0.3 - 0.3f64.tanh() + 0.25;
        assert_relative_eq!(y[0], 2.0 + 0.9 * q, max_relative = 1e-14);
        assert_eq!(td_targets(&batch, &actor, &critic, 0.0, 0.0, &mut rng).unwrap()[0], 2.0);
        let mut terminal = batch.clone();
        terminal.terminal[0] = true;
        assert_eq!(td_targets(&terminal, &actor, &critic, 0.9, 0.0, &mut rng).unwrap()[0], 2.0);
    }

    #[test]
    fn critic_update_hand_example() {
        let mut buf = ReplayBuffer::new(1);
        buf.push(Transition {
            observation: vec![1.0],
            action_raw: vec![0.0],
            reward: 0.0,
            next_observation: vec![0.0],
            terminal: true,
        });
        let batch = buf.sample(1, &mut SimRng::new(0)).unwrap();
        let mut critic = MlpParameters {
            layers: vec![Layer {
                weights: array![[0.5, 0.0]],
                biases: array![0.0],
                norm: None,
                activation: Activation::Identity,
            }],
        };
        let mut opt = Adam::new(&critic);
        let targets = array![2.0];
        let loss = critic_update(&mut critic, &mut opt, &batch, &targets, 0.01).unwrap();
        assert_relative_eq!(loss, 2.25, max_relative = 1e-14);
        // dL/dw = 2 (0.5 - 2) * 1 < 0, so the weight moves up
        assert!(critic.layers[0].weights[[0, 0]] > 0.5);

        let mut exact = critic.clone();
        let q = critic_forward(&exact, &[1.0], &[0.0]).unwrap();
        let before = exact.clone();
        let mut opt = Adam::new(&exact);
        let loss = critic_update(&mut exact, &mut opt, &batch, &array![q], 0.01).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(exact, before);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = SimRng::new(seed);
            let mut actor = actor_network(3, 2, &[5, 4], &mut rng);
            let critic = critic_network(3, 2, &[6, 5], &mut rng);
            for b in actor.buffers_mut() {
                b.iter_mut().for_each(|v| *v *= 20.0);
            }
            let obs = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
            let (_, grads) = actor_objective_gradient(&actor, &critic, &obs).unwrap();
            let h = 1e-5;
            let analytic = grads.buffers().concat();
            let mut probe = actor.clone();
            let mut idx = 0;
            for b in 0..actor.buffers().len() {
                for i in 0..actor.buffers()[b].len() {
                    let orig = actor.buffers()[b][i];
                    probe.buffers_mut()[b][i] = orig + h;
                    let up = actor_objective_gradient(&probe, &critic, &obs).unwrap().0;
                    probe.buffers_mut()[b][i] = orig - h;
                    let down = actor_objective_gradient(&probe, &critic, &obs).unwrap().0;
                    probe.buffers_mut()[b][i] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let a = analytic[idx];
                    assert!((a - fd).abs() <= 1e-4 * a.abs().max(fd.abs()).max(1e-6), "{a} vs {fd}");
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn flat_critic_leaves_actor_unchanged() {
        let mut rng = SimRng::new(9);
        let mut actor = actor_network(2, 1, &[4], &mut rng);
        let mut critic = critic_network(2, 1, &[4], &mut rng);
        for b in critic.buffers_mut() {
            b.fill(0.0);
        }
        let mut buf = ReplayBuffer::new(4);
        buf.push(transition(0.3, false));
        let batch = buf.sample(4, &mut rng).unwrap();
        let before = actor.clone();
        let mut opt = Adam::new(&actor);
        actor_update(&mut actor, &mut opt, &critic, &batch, 1e-2).unwrap();
        assert_eq!(actor, before);
    }

    #[test]
    fn actor_climbs_a_known_quadratic() {
        // Q(s, a) = -(a - a*)^2 in closed form
        const LR: f64 = 1e-3;
        let a_star = 0.4;
        let mut rng = SimRng::new(4);
        let mut actor = actor_network(1, 1, &[8], &mut rng);
        let mut opt = Adam::new(&actor);
        let obs = Array2::from_shape_fn((16, 1), |(i, _)| 0.4 + i as f64 / 80.0);
        let q_grad = |a: &Array2<f64>| {
            let n = a.nrows() as f64;
            let q = -a.mapv(|v| (v - a_star) * (v - a_star)).sum() / n;
            Ok((q, a.mapv(|v| -2.0 * (v - a_star) / n)))
        };
        let mut last = f64::NEG_INFINITY;
        for _ in 0..200 {
            let now = actor_ascent_step(&mut actor, &mut opt, &obs, q_grad, LR).unwrap();
            assert!(now >= last - 1e-12, "{now} < {last}");
            last = now;
        }
        let a = actor.forward(obs.view()).unwrap();
        assert!(a.iter().all(|v| (v - a_star).abs() < 0.02), "{a:?}");
    }

    #[test]
    fn act_noise_behaviour() {
        let mut rng = SimRng::new(5);
        let actor = actor_network(2, 3, &[4], &mut rng);
        let obs = [0.2, 0.4];
        let mean = actor_forward(&actor, &obs).unwrap();
        assert_eq!(act(&actor, &obs, 0.0, &mut rng).unwrap(), mean);
        let std = 0.1;
        let draws: Vec<f64> = (0..10_000).map(|_| act(&actor, &obs, std, &mut rng).unwrap()[0] - mean[0]).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let s = (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
        assert!((s - std).abs() < 0.05 * std, "{s}");
        for _ in 0..1000 {
            assert!(act(&actor, &obs, 3.0, &mut rng).unwrap().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert!(act(&actor, &obs, -1.0, &mut rng).is_err());
    }

    /// One-step bandit: reward `1 - (a - 0.3)^2`, observation constant.
    struct Bandit {
        done: bool,
    }

    impl Environment for Bandit {
        fn observation_dim(&self) -> usize {
            1
        }

        fn action_dim(&self) -> usize {
            1
        }

        fn reset(&mut self, _seed: u64) -> Vec<f64> {
            self.done = false;
            vec![1.0]
        }

        fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
            if self.done {
                return Err(Error::usage("done"));
            }
            self.done = true;
            Ok((vec![1.0], 1.0 - (action[0] - 0.3).powi(2), true))
        }
    }

    #[test]
    fn short_run_skips_updates() {
        let (_, log) = train(&mut Bandit { done: false }, &small_config(), 1, 0, 1).unwrap();
        assert_eq!(log.len(), 1);
        assert!(log[0].critic_loss.is_nan());
        assert_eq!(log[0].moving_avg_100, log[0].episode_return);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_config();
        let (a1, l1) = train(&mut Bandit { done: false }, &cfg, 30, 7, 1).unwrap();
        let (a2, l2) = train(&mut Bandit { done: false }, &cfg, 30, 7, 1).unwrap();
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        write_train_log(&l1, &mut b1).unwrap();
        write_train_log(&l2, &mut b2).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(a1, a2);
    }

    #[test]
    fn bandit_reaches_its_optimum() {
        let cfg = AgentConfig {
            hidden_widths: vec![32, 32],
            batch_size: 32,
            buffer_capacity: 2000,
            learning_rate: 1e-3,
            soft_update_tau: 0.01,
            discount: 0.0,
            noise_std_start: 0.3,
            noise_std_end: 0.01,
            updates_per_episode: Some(4),
            ..AgentConfig::default()
        };
        let (agent, log) = train(&mut Bandit { done: false }, &cfg, 600, 3, 1).unwrap();
        let final_avg = log.last().unwrap().moving_avg_100;
        assert!(final_avg >= 0.95, "moving average {final_avg}");
        let a = agent.policy(&[1.0]).unwrap()[0];
        assert!((a - 0.3).abs() < 0.1, "{a}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        let agent = Agent::new(4, 2, small_config(), 1);
        agent.save(&path).unwrap();
        assert_eq!(Agent::load(&path).unwrap(), agent);
        let text = std::fs::read_to_string(&path).unwrap().replacen("\"format_version\":1", "\"format_version\":9", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(Agent::load(&path), Err(Error::Usage(_))));
    }

    #[test]
    fn train_log_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let (_, log) = train(&mut Bandit { done: false }, &small_config(), 12, 2, 1).unwrap();
        write_train_log(&log, std::fs::File::create(&path).unwrap()).unwrap();
        let back = read_train_log(&path).unwrap();
        assert_eq!(back.len(), 12);
        for (a, b) in log.iter().zip(&back) {
            assert_eq!(a.episode, b.episode);
            assert_eq!(a.episode_return, b.episode_return);
            assert!(a.critic_loss == b.critic_loss || (a.critic_loss.is_nan() && b.critic_loss.is_nan()));
        }
    }

    #[test]
    fn noise_decays_linearly() {
        let cfg = AgentConfig::default();
        assert_eq!(noise_schedule(&cfg, 0, 11), 0.2);
        assert_relative_eq!(noise_schedule(&cfg, 10, 11), 0.01, max_relative = 1e-12);
        assert_relative_eq!(noise_schedule(&cfg, 5, 11), 0.105, max_relative = 1e-12);
    }
}
