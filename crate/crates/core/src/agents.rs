//! Value-based learners over option transitions.
//!
//! Each SMDP learner (SDQN, SDDQN, SBCQ) has an MDP baseline (DQN, DDQN,
//! BCQ) that differs from it only in bootstrapping with `gamma` instead of
//! `gamma^k`.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::approx::{sync_target, Adam, Mlp, Sample, SyncMode};
use crate::config::{RunConfig, TargetSync};
use crate::data::OptionDataset;
use crate::error::{Error, Result};
use crate::gridworld::{encode, rollout, EnvVariant, Episode, GridState, GridWorld};
use crate::returns::{bootstrap_target, discounted_return, ClipBounds, Discounting};
use crate::scalar::Scalar;
use crate::seeding::{SeedStreams, Stream};
use crate::tabular::argmax;
use crate::types::{OptionTransition, GRID_OPTIONS, NUM_OPTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Sdqn,
    Sddqn,
    Sbcq,
    Dqn,
    Ddqn,
    Bcq,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Sdqn,
        Algorithm::Sddqn,
        Algorithm::Sbcq,
        Algorithm::Dqn,
        Algorithm::Ddqn,
        Algorithm::Bcq,
    ];
    pub const SMDP: [Algorithm; 3] = [Algorithm::Sdqn, Algorithm::Sddqn, Algorithm::Sbcq];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sdqn => "sdqn",
            Algorithm::Sddqn => "sddqn",
            Algorithm::Sbcq => "sbcq",
            Algorithm::Dqn => "dqn",
            Algorithm::Ddqn => "ddqn",
            Algorithm::Bcq => "bcq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
    }

    pub fn uses_smdp_discounting(self) -> bool {
        matches!(self, Algorithm::Sdqn | Algorithm::Sddqn | Algorithm::Sbcq)
    }

    pub fn discounting(self) -> Discounting {
        if self.uses_smdp_discounting() {
            Discounting::Smdp
        } else {
            Discounting::Mdp
        }
    }

    /// Action selection by the main net, evaluation by the target net.
    pub fn is_double(self) -> bool {
        !matches!(self, Algorithm::Sdqn | Algorithm::Dqn)
    }

    pub fn is_batch_constrained(self) -> bool {
        matches!(self, Algorithm::Sbcq | Algorithm::Bcq)
    }

    /// The MDP baseline of an SMDP learner and vice versa.
    pub fn counterpart(self) -> Self {
        match self {
            Algorithm::Sdqn => Algorithm::Dqn,
            Algorithm::Sddqn => Algorithm::Ddqn,
            Algorithm::Sbcq => Algorithm::Bcq,
            Algorithm::Dqn => Algorithm::Sdqn,
            Algorithm::Ddqn => Algorithm::Sddqn,
            Algorithm::Bcq => Algorithm::Sbcq,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|l| (*l - m).exp()).collect();
    let total: T = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Behavioral cloning network: state to per-option probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorCloner<T> {
    pub net: Mlp<T>,
}

impl<T: Scalar> BehaviorCloner<T> {
    pub fn new(net: Mlp<T>) -> Self {
        Self { net }
    }

    pub fn probabilities(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.net.forward(x)?))
    }

    /// Options whose relative probability at `x` exceeds `tau`; the full set
    /// when nothing passes.
    pub fn allowed(&self, x: &[T], tau: T) -> Result<Vec<usize>> {
        let mask = bcq_mask(&self.probabilities(x)?, tau)?;
        if mask.is_empty() {
            Ok((0..self.net.output_dim()).collect())
        } else {
            Ok(mask)
        }
    }

    /// Mean cross-entropy over `(x, option)` pairs and its gradient.
    pub fn loss_and_gradient(&self, batch: &[(&[T], usize)]) -> Result<(T, Vec<T>)> {
        if batch.is_empty() {
            return Err(Error::EmptyMinibatch);
        }
        let n = T::lit(batch.len() as f64);
        let mut grad = vec![T::zero(); self.net.params().len()];
        let mut loss = T::zero();
        for &(x, option) in batch {
            let trace = self.net.forward_trace(x)?;
            let mut d = softmax(trace.output());
            if option >= d.len() {
                return Err(Error::UnknownOption(option));
            }
            loss = loss - d[option].max(T::min_positive_value()).ln();
            d[option] = d[option] - T::one();
            d.iter_mut().for_each(|v| *v = *v / n);
            self.net.backward(&trace, &d, &mut grad);
        }
        Ok((loss / n, grad))
    }
}

/// Ids whose ratio `p_i / max_j p_j` exceeds `tau`.
pub fn bcq_mask<T: Scalar>(probabilities: &[T], tau: T) -> Result<Vec<usize>> {
    if probabilities
        .iter()
        .any(|p| !p.is_finite() || *p < T::zero())
    {
        return Err(Error::InvalidProbabilities);
    }
    let max = probabilities.iter().cloned().fold(T::zero(), T::max);
    if max <= T::zero() {
        return Err(Error::InvalidProbabilities);
    }
    Ok(probabilities
        .iter()
        .enumerate()
        .filter(|(_, p)| **p / max > tau)
        .map(|(i, _)| i)
        .collect())
}

fn argmax_over<T: Scalar>(values: &[T], allowed: &[usize]) -> usize {
    let mut best = allowed[0];
    for &i in &allowed[1..] {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

/// Hyperparameters every target rule needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetParams<T> {
    pub gamma: T,
    pub tau: T,
    pub clip: Option<ClipBounds<T>>,
}

impl<T: Scalar> TargetParams<T> {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        Ok(Self {
            gamma: T::lit(config.gamma),
            tau: T::lit(config.bcq_threshold),
            clip: config
                .clip
                .map(|c| ClipBounds::new(T::lit(c.min), T::lit(c.max)))
                .transpose()?,
        })
    }
}

/// Regression target of every transition in `batch`.
pub fn compute_targets<T: Scalar>(
    algo: Algorithm,
    batch: &[&OptionTransition<T>],
    main: &Mlp<T>,
    target: &Mlp<T>,
    params: &TargetParams<T>,
    cloner: Option<&BehaviorCloner<T>>,
) -> Result<Vec<T>> {
    if algo.is_batch_constrained() && cloner.is_none() {
        return Err(Error::MissingCloner(algo.name()));
    }
    let all: Vec<usize> = (0..target.output_dim()).collect();
    batch
        .iter()
        .map(|t| {
            if t.k == 0 {
                return Err(Error::ZeroDuration);
            }
            let discount = algo.discounting().factor(params.gamma, t.k);
            if t.terminal {
                return bootstrap_target(t.rho, discount, true, T::zero(), params.clip);
            }
            let evaluated = target.forward(&t.x_next)?;
            let next = if algo.is_double() {
                let selector = main.forward(&t.x_next)?;
                let allowed = match cloner {
                    Some(c) if algo.is_batch_constrained() => c.allowed(&t.x_next, params.tau)?,
                    _ => all.clone(),
                };
                let choice = argmax_over(&selector, &allowed);
                debug_assert!(allowed.contains(&choice));
                evaluated[choice]
            } else {
                evaluated[argmax(&evaluated)]
            };
            bootstrap_target(t.rho, discount, false, next, params.clip)
        })
        .collect()
}

/// Epsilon-greedy option choice. Exploration is uniform over all options for
/// every algorithm; batch-constrained learners restrict only the greedy
/// choice to the cloner's mask.
pub fn act<T: Scalar, R: Rng + ?Sized>(
    algo: Algorithm,
    net: &Mlp<T>,
    cloner: Option<&BehaviorCloner<T>>,
    tau: T,
    x: &[T],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if algo.is_batch_constrained() && cloner.is_none() {
        return Err(Error::MissingCloner(algo.name()));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Ok(rng.gen_range(0..net.output_dim()));
    }
    let allowed = match cloner {
        Some(c) if algo.is_batch_constrained() => c.allowed(x, tau)?,
        _ => (0..net.output_dim()).collect(),
    };
    let choice = argmax_over(&net.forward(x)?, &allowed);
    debug_assert!(allowed.contains(&choice));
    Ok(choice)
}

/// Greedy rollout of a learned policy.
pub fn evaluate_policy<T: Scalar>(
    algo: Algorithm,
    net: &Mlp<T>,
    cloner: Option<&BehaviorCloner<T>>,
    tau: T,
    variant: &EnvVariant,
    start: GridState,
    max_options: usize,
) -> Result<Episode> {
    let mut unused = rand::rngs::mock::StepRng::new(0, 0);
    rollout(variant, start, max_options, |s| {
        act(algo, net, cloner, tau, &encode::<T>(s), 0.0, &mut unused)
    })
}

fn network_sizes(input: usize, config: &RunConfig) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(&config.hidden_sizes);
    sizes.push(NUM_OPTIONS);
    sizes
}

fn sync_mode<T: Scalar>(sync: TargetSync) -> Option<SyncMode<T>> {
    match sync {
        TargetSync::Lump { .. } => None,
        TargetSync::Polyak { kappa } => Some(SyncMode::Polyak(T::lit(kappa))),
    }
}

/// Main net, target net and optimizer with the sync policy of a run.
struct Learner<T> {
    algo: Algorithm,
    main: Mlp<T>,
    target: Mlp<T>,
    opt: Adam<T>,
    sync: TargetSync,
    params: TargetParams<T>,
    steps: u64,
}

impl<T: Scalar> Learner<T> {
    fn new<R: Rng>(algo: Algorithm, input: usize, config: &RunConfig, init: &mut R) -> Result<Self> {
        let main = Mlp::new(&network_sizes(input, config), init)?;
        let target = main.clone();
        let opt = Adam::for_net(&main, T::lit(config.learning_rate));
        Ok(Self {
            algo,
            main,
            target,
            opt,
            sync: config.target_sync,
            params: TargetParams::from_config(config)?,
            steps: 0,
        })
    }

    /// One descent step on the summed squared TD error; returns that sum.
    fn train_step(
        &mut self,
        batch: &[&OptionTransition<T>],
        cloner: Option<&BehaviorCloner<T>>,
    ) -> Result<T> {
        let targets = compute_targets(self.algo, batch, &self.main, &self.target, &self.params, cloner)?;
        let samples: Vec<Sample<T>> = batch
            .iter()
            .zip(&targets)
            .map(|(t, y)| Sample {
                x: &t.x,
                option: t.option,
                target: *y,
            })
            .collect();
        let (loss, grad) = self.main.loss_and_gradient(&samples)?;
        self.opt.step(&mut self.main, &grad)?;
        self.steps += 1;
        match self.sync {
            TargetSync::Lump { period } if self.steps % period == 0 => {
                sync_target(&self.main, &mut self.target, SyncMode::Lump)?
            }
            TargetSync::Lump { .. } => {}
            TargetSync::Polyak { .. } => {
                let mode = sync_mode(self.sync).expect("polyak mode");
                sync_target(&self.main, &mut self.target, mode)?
            }
        }
        Ok(loss)
    }

    /// Mean squared TD error with targets from the current nets.
    fn td_error(&self, data: &[OptionTransition<T>], cloner: Option<&BehaviorCloner<T>>) -> Result<T> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let refs: Vec<&OptionTransition<T>> = data.iter().collect();
        let targets = compute_targets(self.algo, &refs, &self.main, &self.target, &self.params, cloner)?;
        let samples: Vec<Sample<T>> = data
            .iter()
            .zip(&targets)
            .map(|(t, y)| Sample {
                x: &t.x,
                option: t.option,
                target: *y,
            })
            .collect();
        Ok(self.main.loss(&samples)? / T::lit(data.len() as f64))
    }
}

/// Fits a cloner to the logged options of `dataset` with minibatch
/// cross-entropy descent.
pub fn train_cloner<T: Scalar>(dataset: &OptionDataset<T>, config: &RunConfig) -> Result<BehaviorCloner<T>> {
    config.validate()?;
    let data = &dataset.transitions;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = SeedStreams::new(config.seed).rng(Stream::Cloner);
    let mut cloner = BehaviorCloner::new(Mlp::new(&network_sizes(data[0].x.len(), config), &mut rng)?);
    let mut opt = Adam::for_net(&cloner.net, T::lit(config.cloner_learning_rate));
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..config.cloner_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.minibatch_size) {
            let batch: Vec<(&[T], usize)> = chunk
                .iter()
                .map(|&i| (&data[i].x[..], data[i].option))
                .collect();
            let (_, grad) = cloner.loss_and_gradient(&batch)?;
            opt.step(&mut cloner.net, &grad)?;
        }
    }
    Ok(cloner)
}

/// Per-epoch record of an offline run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport<T> {
    pub epoch: usize,
    /// Mean squared TD error over the epoch's minibatches.
    pub train_loss: T,
    pub validation_loss: Option<T>,
    pub gradient_steps: u64,
}

#[derive(Debug, Clone)]
pub struct OfflineRun<T> {
    pub algo: Algorithm,
    pub final_net: Mlp<T>,
    pub target_net: Mlp<T>,
    /// Net of the epoch with the lowest validation loss (final net without
    /// validation data).
    pub best_net: Mlp<T>,
    pub best_epoch: usize,
    pub epochs: Vec<EpochReport<T>>,
    pub cloner: Option<BehaviorCloner<T>>,
}

/// Index of the smallest loss, earliest on ties.
pub fn best_epoch<T: Scalar>(losses: &[T]) -> Option<usize> {
    (!losses.is_empty()).then(|| {
        let mut best = 0;
        for (i, l) in losses.iter().enumerate() {
            if *l < losses[best] {
                best = i;
            }
        }
        best
    })
}

/// Offline training over fixed data: each epoch consumes the whole dataset
/// in uniformly drawn minibatches without replacement.
pub fn train_offline<T: Scalar>(
    algo: Algorithm,
    train: &OptionDataset<T>,
    validation: Option<&OptionDataset<T>>,
    config: &RunConfig,
) -> Result<OfflineRun<T>> {
    train_offline_with(algo, train, validation, config, |_, _| Ok(()))
}

/// [`train_offline`] with a callback after every epoch, given the report
/// and the main net at that point.
pub fn train_offline_with<T, F>(
    algo: Algorithm,
    train: &OptionDataset<T>,
    validation: Option<&OptionDataset<T>>,
    config: &RunConfig,
    mut on_epoch: F,
) -> Result<OfflineRun<T>>
where
    T: Scalar,
    F: FnMut(&EpochReport<T>, &Mlp<T>) -> Result<()>,
{
    config.validate()?;
    let data = &train.transitions;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for t in data {
        t.validate()?;
    }
    let streams = SeedStreams::new(config.seed);
    let cloner = if algo.is_batch_constrained() {
        Some(train_cloner(train, config)?)
    } else {
        None
    };
    let mut learner = Learner::new(algo, data[0].x.len(), config, &mut streams.rng(Stream::Init))?;
    let mut sampling = streams.rng(Stream::Sampling);
    let mut pool: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(T, usize, Mlp<T>)> = None;

    for epoch in 0..config.epochs {
        // Shuffle-then-chunk draws uniform minibatches without replacement
        // until the working copy of the data is empty.
        pool.shuffle(&mut sampling);
        let mut total = T::zero();
        for chunk in pool.chunks(config.minibatch_size) {
            let batch: Vec<&OptionTransition<T>> = chunk.iter().map(|&i| &data[i]).collect();
            total = total + learner.train_step(&batch, cloner.as_ref())?;
        }
        let validation_loss = validation
            .map(|v| learner.td_error(&v.transitions, cloner.as_ref()))
            .transpose()?;
        let report = EpochReport {
            epoch,
            train_loss: total / T::lit(data.len() as f64),
            validation_loss,
            gradient_steps: learner.steps,
        };
        if let Some(v) = validation_loss {
            if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                best = Some((v, epoch, learner.main.clone()));
            }
        }
        on_epoch(&report, &learner.main)?;
        epochs.push(report);
    }

    let (best_epoch, best_net) = match best {
        Some((_, e, net)) => (e, net),
        None => (config.epochs - 1, learner.main.clone()),
    };
    Ok(OfflineRun {
        algo,
        final_net: learner.main,
        target_net: learner.target,
        best_net,
        best_epoch,
        epochs,
        cloner,
    })
}

/// Greedy evaluation episode recorded during online training.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    /// Training episodes completed before this evaluation.
    pub episode: usize,
    pub env_steps: u64,
    pub undiscounted_return: f64,
    pub discounted_return: f64,
}

#[derive(Debug, Clone)]
pub struct OnlineRun<T> {
    pub algo: Algorithm,
    pub main: Mlp<T>,
    pub target: Mlp<T>,
    pub cloner: Option<BehaviorCloner<T>>,
    pub evaluations: Vec<EvalPoint>,
    pub episodes: usize,
    pub env_steps: u64,
}

/// Online training with epsilon-greedy interaction and a FIFO replay of
/// option transitions. One gradient step per environment step once the
/// replay holds a minibatch; a greedy evaluation episode from the default
/// start after every `eval_every_episodes` training episodes.
pub fn train_online<T: Scalar>(algo: Algorithm, variant: &EnvVariant, config: &RunConfig) -> Result<OnlineRun<T>> {
    config.validate()?;
    let streams = SeedStreams::new(config.seed);
    let input = crate::gridworld::ENCODING_LEN;
    let mut learner = Learner::<T>::new(algo, input, config, &mut streams.rng(Stream::Init))?;
    let mut explore = streams.rng(Stream::Exploration);
    let mut sampling = streams.rng(Stream::Sampling);
    let mut cloner_rng = streams.rng(Stream::Cloner);
    let (mut cloner, mut cloner_opt) = if algo.is_batch_constrained() {
        let c = BehaviorCloner::new(Mlp::new(&network_sizes(input, config), &mut cloner_rng)?);
        let opt = Adam::for_net(&c.net, T::lit(config.cloner_learning_rate));
        (Some(c), Some(opt))
    } else {
        (None, None)
    };
    let gamma = T::lit(variant.gamma);
    let tau = T::lit(config.bcq_threshold);
    let mut replay: VecDeque<OptionTransition<T>> = VecDeque::with_capacity(config.replay_capacity);
    let mut env = GridWorld::new(*variant);
    let mut evaluations = Vec::new();
    let mut steps = 0u64;
    let mut episodes = 0usize;

    let evaluate = |learner: &Learner<T>, cloner: Option<&BehaviorCloner<T>>, episodes, steps| -> Result<EvalPoint> {
        let ep = evaluate_policy(
            algo,
            &learner.main,
            cloner,
            tau,
            variant,
            GridState::default_start(),
            config.max_episode_options,
        )?;
        Ok(EvalPoint {
            episode: episodes,
            env_steps: steps,
            undiscounted_return: ep.undiscounted_return,
            discounted_return: ep.discounted_return,
        })
    };

    while steps < config.online_steps {
        let mut state = env.reset(None, config.seed)?;
        for _ in 0..config.max_episode_options {
            let x = encode::<T>(&state);
            let option = act(algo, &learner.main, cloner.as_ref(), tau, &x, config.epsilon.value(steps), &mut explore)?;
            let out = env.step(&GRID_OPTIONS[option])?;
            let rewards: Vec<T> = out.rewards.iter().map(|r| T::lit(*r)).collect();
            if replay.len() == config.replay_capacity {
                replay.pop_front();
            }
            replay.push_back(OptionTransition {
                x,
                option,
                rho: discounted_return(&rewards, gamma)?,
                x_next: encode(&out.next_state),
                k: out.k,
                terminal: out.terminal,
            });
            state = out.next_state;
            steps += 1;

            if replay.len() >= config.minibatch_size {
                let batch: Vec<&OptionTransition<T>> = (0..config.minibatch_size)
                    .map(|_| &replay[sampling.gen_range(0..replay.len())])
                    .collect();
                if let (Some(c), Some(opt)) = (cloner.as_mut(), cloner_opt.as_mut()) {
                    let pairs: Vec<(&[T], usize)> = batch.iter().map(|t| (&t.x[..], t.option)).collect();
                    let (_, grad) = c.loss_and_gradient(&pairs)?;
                    opt.step(&mut c.net, &grad)?;
                }
                learner.train_step(&batch, cloner.as_ref())?;
            }
            if out.terminal || steps >= config.online_steps {
                break;
            }
        }
        episodes += 1;
        if episodes % config.eval_every_episodes == 0 {
            evaluations.push(evaluate(&learner, cloner.as_ref(), episodes, steps)?);
        }
    }
    evaluations.push(evaluate(&learner, cloner.as_ref(), episodes, steps)?);

    Ok(OnlineRun {
        algo,
        main: learner.main,
        target: learner.target,
        cloner,
        evaluations,
        episodes,
        env_steps: steps,
    })
}
