use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{AgentConfig, LogStdMode};
use super::policy::{ActMode, PolicyModel};
use crate::cmdp::{estimate_cost_rates, Environment, StepOutcome, TaskSpec};
use crate::error::{config_err, Error, Result};
use crate::multipliers::{Lambdas, MultiplierBank, MultiplierConfig, MultiplierMode};
use crate::numcore::{soft_update, Activation, AdamHyper, AdamState, DenseNet, Matrix};
use crate::replay::{ReplayBuffer, TransitionRecord};

/// Online and target twins for one critic head.
#[derive(Clone, Debug)]
pub struct CriticPair {
    pub online: [DenseNet<f64>; 2],
    pub target: [DenseNet<f64>; 2],
    adam: [AdamState<f64>; 2],
}

impl CriticPair {
    fn new(input: usize, hidden: &[usize], lr: f64, seeds: [u64; 2], stream: u64) -> Result<Self> {
        let sizes: Vec<usize> = std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let make = |j: usize| -> Result<DenseNet<f64>> {
            let mut net = DenseNet::zeros(&sizes, Activation::Relu, false)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seeds[j]);
            rng.set_stream(stream + j as u64);
            net.init_uniform(&mut rng);
            Ok(net)
        };
        let online = [make(0)?, make(1)?];
        let n = online[0].params().len();
        let hyper = AdamHyper::with_learning_rate(lr);
        Ok(Self {
            target: online.clone(),
            online,
            adam: [AdamState::new(n, hyper), AdamState::new(n, hyper)],
        })
    }

    /// Elementwise `min(Q₁, Q₂)` of the target twins.
    pub fn target_min(&self, x: &Matrix<f64>) -> Vec<f64> {
        let q1 = self.target[0].forward_batch(x);
        let q2 = self.target[1].forward_batch(x);
        q1.as_slice()
            .iter()
            .zip(q2.as_slice())
            .map(|(a, b)| a.min(*b))
            .collect()
    }

    pub fn online_min(&self, x: &Matrix<f64>) -> Vec<f64> {
        let q1 = self.online[0].forward_batch(x);
        let q2 = self.online[1].forward_batch(x);
        q1.as_slice()
            .iter()
            .zip(q2.as_slice())
            .map(|(a, b)| a.min(*b))
            .collect()
    }

    /// One Adam step per twin on the mean-squared error against `targets`.
    /// Returns the pre-step loss of each twin.
    pub fn regress(&mut self, x: &Matrix<f64>, targets: &[f64]) -> Result<[f64; 2]> {
        let n = targets.len() as f64;
        let mut losses = [0.0; 2];
        for j in 0..2 {
            let net = &self.online[j];
            let cache = net.forward_cached(x.clone());
            let q = cache.output().as_slice();
            let mut up = Matrix::zeros(targets.len(), 1);
            let mut loss = 0.0;
            for (i, (qi, yi)) in q.iter().zip(targets).enumerate() {
                let diff = qi - yi;
                loss += diff * diff;
                up.set(i, 0, 2.0 * diff / n);
            }
            loss /= n;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("critic loss is {loss}")));
            }
            let mut grads = vec![0.0; net.params().len()];
            net.backward_batch(&cache, &up, &mut grads, false);
            self.adam[j].step(self.online[j].params_mut(), &grads)?;
            losses[j] = loss;
        }
        Ok(losses)
    }

    pub fn soft_update_targets(&mut self, tau: f64) {
        for j in 0..2 {
            soft_update(self.target[j].params_mut(), self.online[j].params(), tau);
        }
    }
}

/// A uniformly sampled minibatch laid out as matrices.
#[derive(Clone, Debug)]
pub struct Batch {
    pub observations: Matrix<f64>,
    pub actions: Matrix<f64>,
    pub next_observations: Matrix<f64>,
    /// `rewards[h][i]`: reward for head 0, indicator for heads ≥ 1.
    pub rewards: Vec<Vec<f64>>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_records(records: &[&TransitionRecord], heads: usize) -> Self {
        let obs: Vec<&[f64]> = records.iter().map(|r| r.observation.as_slice()).collect();
        let act: Vec<&[f64]> = records.iter().map(|r| r.action.as_slice()).collect();
        let next: Vec<&[f64]> = records.iter().map(|r| r.next_observation.as_slice()).collect();
        let rewards = (0..heads)
            .map(|h| {
                records
                    .iter()
                    .map(|r| {
                        if h == 0 {
                            r.reward
                        } else {
                            f64::from(r.indicators[h - 1])
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            observations: Matrix::from_rows(&obs),
            actions: Matrix::from_rows(&act),
            next_observations: Matrix::from_rows(&next),
            rewards,
            done: records.iter().map(|r| r.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }
}

/// Regression target `r + (1 − done)·γ·(−α·log π(a'|s') + min_j Q_target,j(s', a'))`.
pub fn regression_target(reward: f64, done: bool, gamma: f64, alpha: f64, next_log_prob: f64, next_min_q: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (-alpha * next_log_prob + next_min_q)
    }
}

/// Value and gradients of the policy ascent objective.
#[derive(Clone, Debug)]
pub struct PolicyObjective {
    pub value: f64,
    pub net_grad: Vec<f64>,
    pub log_std_grad: Vec<f64>,
}

/// Losses produced by one gradient step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateLosses {
    /// Per head, per twin mean-squared error.
    pub critic: Vec<[f64; 2]>,
    /// Negated policy objective.
    pub policy: f64,
}

/// What happened during one environment step of training.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub step: u64,
    pub outcome: StepOutcome,
    pub losses: Option<UpdateLosses>,
    /// Batch rates used for a multiplier update on this step.
    pub multiplier_rates: Option<Vec<f64>>,
}

/// Soft actor-critic with one twin critic per head (reward, behavioral
/// constraints, success) and a Lagrange multiplier bank.
#[derive(Clone, Debug)]
pub struct SacLagrangian {
    config: AgentConfig,
    task: TaskSpec,
    event_map: Vec<usize>,
    policy: PolicyModel,
    policy_adam: AdamState<f64>,
    log_std_adam: AdamState<f64>,
    critics: Vec<CriticPair>,
    bank: MultiplierBank<f64>,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: u64,
    current_obs: Option<Vec<f64>>,
    last_losses: Option<UpdateLosses>,
}

const POLICY_STREAM: u64 = 1;
const CRITIC_STREAM: u64 = 1000;

impl SacLagrangian {
    /// Builds an agent for an environment exposing `event_names`.
    ///
    /// Network initialisation draws from per-network streams derived from
    /// `seed`, so head 0 and the policy start identically whatever the number
    /// of constraint heads.
    pub fn new(
        config: AgentConfig,
        task: TaskSpec,
        multipliers: &MultiplierConfig,
        obs_dim: usize,
        action_dim: usize,
        event_names: &[String],
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        task.validate()?;
        if multipliers.learning_rate <= 0.0 {
            return Err(config_err("multiplier learning rate must be positive"));
        }
        let event_map = task.bind_events(event_names)?;
        let mut policy = PolicyModel::new(obs_dim, action_dim, &config.policy_hidden, config.log_std_mode)?;
        let mut prng = ChaCha8Rng::seed_from_u64(seed);
        prng.set_stream(POLICY_STREAM);
        policy.init(&mut prng);
        let critics = (0..task.num_heads())
            .map(|h| {
                CriticPair::new(
                    obs_dim + action_dim,
                    &config.critic_hidden,
                    config.learning_rate,
                    [seed, seed],
                    CRITIC_STREAM + 2 * h as u64,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let hyper = AdamHyper::with_learning_rate(config.learning_rate);
        Ok(Self {
            policy_adam: AdamState::new(policy.net().params().len(), hyper),
            log_std_adam: AdamState::new(action_dim, hyper),
            policy,
            critics,
            bank: MultiplierBank::new(task.num_multipliers(), multipliers),
            buffer: ReplayBuffer::new(config.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(seed),
            env_steps: 0,
            current_obs: None,
            last_losses: None,
            event_map,
            config,
            task,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn policy(&self) -> &PolicyModel {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut PolicyModel {
        &mut self.policy
    }

    pub fn critics(&self) -> &[CriticPair] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [CriticPair] {
        &mut self.critics
    }

    pub fn bank(&self) -> &MultiplierBank<f64> {
        &self.bank
    }

    pub fn bank_mut(&mut self) -> &mut MultiplierBank<f64> {
        &mut self.bank
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn lambdas(&self) -> Lambdas<f64> {
        self.bank.lambdas()
    }

    pub fn last_losses(&self) -> Option<&UpdateLosses> {
        self.last_losses.as_ref()
    }

    /// Task-ordered indicators selected from an environment event vector.
    pub fn indicators(&self, events: &[u8]) -> Vec<u8> {
        self.event_map.iter().map(|&i| events[i]).collect()
    }

    pub fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<Vec<f64>> {
        self.policy.act(observation, mode, &mut self.rng)
    }

    /// One environment interaction followed by the scheduled agent and
    /// multiplier updates.
    pub fn train_step<E: Environment + ?Sized>(&mut self, env: &mut E) -> Result<StepReport> {
        let obs = match self.current_obs.take() {
            Some(o) => o,
            None => env.reset(None),
        };
        let mode = if (self.env_steps as usize) < self.config.random_steps {
            ActMode::Random
        } else {
            ActMode::Explore
        };
        let action = self.policy.act(&obs, mode, &mut self.rng)?;
        let outcome = env.step(&action);
        self.buffer.push(TransitionRecord {
            observation: obs,
            action,
            reward: outcome.reward,
            next_observation: outcome.observation.clone(),
            indicators: self.indicators(&outcome.events),
            done: outcome.terminal,
        });
        self.env_steps += 1;
        if !outcome.episode_over() {
            self.current_obs = Some(outcome.observation.clone());
        }

        let mut losses = None;
        if self.env_steps.is_multiple_of(self.config.update_period as u64)
            && self.buffer.len() >= self.config.warmup_threshold()
        {
            for _ in 0..self.config.gradient_steps {
                losses = Some(self.gradient_step()?);
            }
            self.last_losses = losses.clone();
        }

        let mut multiplier_rates = None;
        if !self.bank.is_empty()
            && self.env_steps.is_multiple_of(self.config.multiplier_period as u64)
            && self.buffer.len() >= self.config.multiplier_batch
        {
            let window: Vec<&[u8]> = self
                .buffer
                .sample_last(self.config.multiplier_batch)?
                .into_iter()
                .map(|r| r.indicators.as_slice())
                .collect();
            let rates: Vec<f64> = estimate_cost_rates(&window)?;
            self.bank.update(&rates, &self.task)?;
            multiplier_rates = Some(rates);
        }

        Ok(StepReport {
            step: self.env_steps,
            outcome,
            losses,
            multiplier_rates,
        })
    }

    fn standard_normal(&mut self, rows: usize, cols: usize) -> Matrix<f64> {
        let data = (0..rows * cols).map(|_| self.rng.sample(StandardNormal)).collect();
        Matrix::from_vec(rows, cols, data)
    }

    /// Critic updates for every head, target tracking, then one policy ascent step.
    pub fn gradient_step(&mut self) -> Result<UpdateLosses> {
        let n = self.config.batch_size;
        let idx = self.buffer.sample_uniform_indices(n, &mut self.rng)?;
        let records: Vec<&TransitionRecord> = idx.iter().map(|&i| self.buffer.slot(i)).collect();
        let batch = Batch::from_records(&records, self.task.num_heads());

        let next_noise = self.standard_normal(n, self.policy.action_dim());
        let critic = self.critic_update(&batch, next_noise)?;

        let noise = self.standard_normal(n, self.policy.action_dim());
        let weights = self.bank.lambdas().head_weights(&self.task);
        let objective = self.policy_objective(&batch.observations, noise, &weights);
        self.apply_policy_ascent(&objective)?;
        Ok(UpdateLosses {
            critic,
            policy: -objective.value,
        })
    }

    /// Q-targets for head `h` given next actions and their log-probabilities.
    pub fn compute_q_targets(
        &self,
        batch: &Batch,
        head: usize,
        next_actions: &Matrix<f64>,
        next_log_probs: &[f64],
    ) -> Vec<f64> {
        let gamma = self.task.head_discounts()[head];
        let x_next = batch.next_observations.hconcat(next_actions);
        let min_q = self.critics[head].target_min(&x_next);
        (0..batch.len())
            .map(|i| {
                regression_target(
                    batch.rewards[head][i],
                    batch.done[i],
                    gamma,
                    self.config.entropy_coef,
                    next_log_probs[i],
                    min_q[i],
                )
            })
            .collect()
    }

    /// Regresses every head's twins on its targets, then soft-updates targets.
    pub fn critic_update(&mut self, batch: &Batch, next_noise: Matrix<f64>) -> Result<Vec<[f64; 2]>> {
        let next = self.policy.sample(batch.next_observations.clone(), next_noise);
        let x = batch.observations.hconcat(&batch.actions);
        let mut losses = Vec::with_capacity(self.critics.len());
        for h in 0..self.critics.len() {
            let targets = self.compute_q_targets(batch, h, &next.actions, &next.log_probs);
            let pair = &mut self.critics[h];
            losses.push(pair.regress(&x, &targets)?);
            pair.soft_update_targets(self.config.tau);
        }
        Ok(losses)
    }

    /// Ascent objective `mean_i[−α·log π(a_i|s_i) + Σ_h w_h·min_j Q_h,j(s_i, a_i)]`
    /// with reparameterized actions, and its gradient w.r.t. the policy.
    /// Critic parameters are treated as constants.
    pub fn policy_objective(&self, observations: &Matrix<f64>, noise: Matrix<f64>, weights: &[f64]) -> PolicyObjective {
        assert_eq!(weights.len(), self.critics.len(), "one weight per head");
        let n = observations.rows();
        let nf = n as f64;
        let obs_dim = observations.cols();
        let d = self.policy.action_dim();
        let alpha = self.config.entropy_coef;
        let sample = self.policy.sample(observations.clone(), noise);
        let xa = observations.hconcat(&sample.actions);

        let mut value = -alpha * sample.log_probs.iter().sum::<f64>() / nf;
        let mut d_actions = Matrix::zeros(n, d);
        for (pair, &w) in self.critics.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let caches = [
                pair.online[0].forward_cached(xa.clone()),
                pair.online[1].forward_cached(xa.clone()),
            ];
            let q1 = caches[0].output().as_slice();
            let q2 = caches[1].output().as_slice();
            let mut ups = [Matrix::zeros(n, 1), Matrix::zeros(n, 1)];
            for i in 0..n {
                let j = usize::from(q2[i] < q1[i]);
                value += w * q1[i].min(q2[i]) / nf;
                ups[j].set(i, 0, w / nf);
            }
            for j in 0..2 {
                let dx = pair.online[j].input_gradient(&caches[j], &ups[j]);
                for i in 0..n {
                    for (da, g) in d_actions.row_mut(i).iter_mut().zip(&dx.row(i)[obs_dim..]) {
                        *da += *g;
                    }
                }
            }
        }
        let d_log_probs = vec![-alpha / nf; n];
        let grads = self.policy.backward(&sample, &d_actions, &d_log_probs);
        PolicyObjective {
            value,
            net_grad: grads.net,
            log_std_grad: grads.global_log_std,
        }
    }

    fn apply_policy_ascent(&mut self, objective: &PolicyObjective) -> Result<()> {
        if !objective.value.is_finite() {
            return Err(Error::Divergence(format!("policy objective is {}", objective.value)));
        }
        let neg: Vec<f64> = objective.net_grad.iter().map(|g| -g).collect();
        self.policy_adam.step(self.policy.net_mut().params_mut(), &neg)?;
        if self.policy.mode() == LogStdMode::Global {
            let neg: Vec<f64> = objective.log_std_grad.iter().map(|g| -g).collect();
            self.log_std_adam.step(self.policy.global_log_std_mut(), &neg)?;
        }
        Ok(())
    }
}

/// Agent checkpoints hold weights only (optimizer moments are not saved).
///
/// | field               | type |
/// |---------------------|------|
/// | magic               | 8 bytes `CMDPAGT\x01` |
/// | network count       | u32 |
/// | networks            | policy, then per head online₁, online₂, target₁, target₂ (network blocks) |
/// | log-std mode        | u8, 0 = state dependent, 1 = global |
/// | global log-std      | u32 d, d × f64 |
/// | multiplier mode     | u8, 0 = normalized, 1 = unnormalized |
/// | multiplier params   | u32 M, M × f64 |
pub const AGENT_MAGIC: &[u8; 8] = b"CMDPAGT\x01";

impl SacLagrangian {
    pub fn save_weights<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        use crate::numcore::checkpoint::write_net;
        w.write_all(AGENT_MAGIC)?;
        w.write_all(&((1 + 4 * self.critics.len()) as u32).to_le_bytes())?;
        write_net(self.policy.net(), w)?;
        for pair in &self.critics {
            for net in pair.online.iter().chain(&pair.target) {
                write_net(net, w)?;
            }
        }
        w.write_all(&[match self.policy.mode() {
            LogStdMode::StateDependent => 0u8,
            LogStdMode::Global => 1u8,
        }])?;
        w.write_all(&(self.policy.global_log_std().len() as u32).to_le_bytes())?;
        for v in self.policy.global_log_std() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[match self.bank.mode() {
            MultiplierMode::Normalized => 0u8,
            MultiplierMode::Unnormalized => 1u8,
        }])?;
        w.write_all(&(self.bank.len() as u32).to_le_bytes())?;
        for v in self.bank.params() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Replaces all weights and multipliers with those of a checkpoint written
    /// by an agent of identical shape.
    pub fn load_weights<R: std::io::Read>(&mut self, r: &mut R) -> Result<()> {
        use crate::numcore::checkpoint::{read_f64, read_net, read_u32, read_u8};
        let bad = |m: String| Error::Checkpoint(m);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != AGENT_MAGIC {
            return Err(bad(format!("bad agent magic {magic:?}")));
        }
        let count = read_u32(r)? as usize;
        if count != 1 + 4 * self.critics.len() {
            return Err(bad(format!(
                "checkpoint has {count} networks, agent has {}",
                1 + 4 * self.critics.len()
            )));
        }
        let mut nets: Vec<DenseNet<f64>> = Vec::with_capacity(count);
        for _ in 0..count {
            nets.push(read_net(r)?);
        }
        let mode = match read_u8(r)? {
            0 => LogStdMode::StateDependent,
            1 => LogStdMode::Global,
            b => return Err(bad(format!("unknown log-std mode tag {b}"))),
        };
        let d = read_u32(r)? as usize;
        if d != self.policy.action_dim() || mode != self.policy.mode() {
            return Err(bad("policy head does not match this agent".into()));
        }
        let log_std = (0..d).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let mmode = match read_u8(r)? {
            0 => MultiplierMode::Normalized,
            1 => MultiplierMode::Unnormalized,
            b => return Err(bad(format!("unknown multiplier mode tag {b}"))),
        };
        let m = read_u32(r)? as usize;
        if m != self.bank.len() {
            return Err(bad(format!(
                "checkpoint has {m} multipliers, agent has {}",
                self.bank.len()
            )));
        }
        let params = (0..m).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;

        let same_shape = |a: &DenseNet<f64>, b: &DenseNet<f64>| {
            a.sizes() == b.sizes() && a.activations() == b.activations() && a.layer_norm_first() == b.layer_norm_first()
        };
        let mut it = nets.into_iter();
        let policy_net = it.next().expect("policy network");
        if !same_shape(&policy_net, self.policy.net()) {
            return Err(bad("policy network shape mismatch".into()));
        }
        let mut critics = self.critics.clone();
        for pair in &mut critics {
            for slot in pair.online.iter_mut().chain(pair.target.iter_mut()) {
                let net = it.next().expect("critic network");
                if !same_shape(&net, slot) {
                    return Err(bad("critic network shape mismatch".into()));
                }
                *slot = net;
            }
        }
        *self.policy.net_mut() = policy_net;
        self.policy.global_log_std_mut().copy_from_slice(&log_std);
        self.critics = critics;
        self.bank = MultiplierBank::with_params(mmode, params, self.bank.adam().hyper.learning_rate);
        Ok(())
    }
}
