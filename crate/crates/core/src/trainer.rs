//! PPO optimization of the rule policy on one task, with inter-task
//! consolidation (a Fisher-weighted quadratic pull toward previous tasks'
//! parameters) and intra-task consolidation (a KL pull toward the task's
//! elite snapshot) added to the loss.

use ndarray::Array1;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::rc::Rc;

use crate::ad::{Tape, Var};
use crate::engine::{run_episode, EpisodeConfig, FlaState, StepRecord, Trajectory};
use crate::error::{Error, Result};
use crate::expr::NodeKind;
use crate::policy::{
    reference_log_probs, rescore_on_tape, DecodeMode, NeuralPolicy, PolicyParams, PolicyVars,
};
use crate::problems::{sample_problem, TaskSpec};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub update_epochs: usize,
    pub grad_clip: f64,
    /// Subtract each episode's mean advantage before batch normalization.
    /// Removes the per-problem difficulty offset the state features cannot
    /// encode; useful at small batch sizes.
    pub center_advantages_per_episode: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_eps: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            update_epochs: 3,
            grad_clip: 0.5,
            center_advantages_per_episode: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Which batch statistic decides elite updates: cumulative episode rewards
/// (the pseudocode reading) or negated final objectives (the prose reading).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EliteStatistic {
    RewardSum,
    FinalObjective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Inter-task consolidation weight.
    pub alpha: f64,
    /// Intra-task consolidation weight.
    pub beta: f64,
    pub epochs_per_task: usize,
    /// Problems sampled per epoch (M).
    pub episodes_per_epoch: usize,
    pub elite_statistic: EliteStatistic,
    /// Evaluation-checkpoint cadence in epochs for forgetting curves.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            beta: 1.0,
            epochs_per_task: 100,
            episodes_per_epoch: 320,
            elite_statistic: EliteStatistic::RewardSum,
            checkpoint_every: 10,
        }
    }
}

/// Frozen parameter snapshot and per-parameter importance for one task.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskMemory {
    pub task_index: usize,
    pub theta_star: Vec<f64>,
    pub importance: Vec<f64>,
}

/// Best-so-far policy within the current task.
#[derive(Clone, Debug)]
pub struct EliteSnapshot {
    pub params: PolicyParams,
    pub r_hat: f64,
}

impl EliteSnapshot {
    pub fn fresh(params: &PolicyParams) -> Self {
        EliteSnapshot {
            params: params.clone(),
            r_hat: f64::NEG_INFINITY,
        }
    }
}

/// Elite update rule: replace on `mean_performance >= r_hat` (ties update).
pub fn maybe_update_elite(
    elite: EliteSnapshot,
    params: &PolicyParams,
    mean_performance: f64,
) -> EliteSnapshot {
    if mean_performance >= elite.r_hat {
        EliteSnapshot {
            params: params.clone(),
            r_hat: mean_performance,
        }
    } else {
        elite
    }
}

/// The elite-comparison statistic of one batch.
pub fn batch_performance(trajs: &[Trajectory], stat: EliteStatistic) -> f64 {
    let n = trajs.len().max(1) as f64;
    match stat {
        EliteStatistic::RewardSum => trajs.iter().map(|t| t.episode_return).sum::<f64>() / n,
        EliteStatistic::FinalObjective => trajs.iter().map(|t| -t.final_best).sum::<f64>() / n,
    }
}

/// Sample `m` problems from the task and run one sampling-mode episode each.
/// Episode seeds derive from `rng` up front, so the collection order is
/// deterministic and episodes can run in parallel.
pub fn collect_batch(
    params: &PolicyParams,
    task: &TaskSpec,
    m: usize,
    episode_cfg: &EpisodeConfig,
    stat: EliteStatistic,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Trajectory>, f64)> {
    if m == 0 {
        return Err(Error::contract("collect_batch: M must be >= 1"));
    }
    let seeds: Vec<(u64, u64)> = (0..m).map(|_| (rng.next_u64(), rng.next_u64())).collect();
    let trajs: Result<Vec<Trajectory>> = seeds
        .into_par_iter()
        .map(|(problem_seed, episode_seed)| {
            let mut prng = ChaCha8Rng::seed_from_u64(problem_seed);
            let mut problem = sample_problem(task, &mut prng)?;
            let mut policy = NeuralPolicy {
                params,
                mode: DecodeMode::Sample,
            };
            run_episode(
                &mut problem,
                &mut policy,
                episode_cfg,
                &mut ChaCha8Rng::seed_from_u64(episode_seed),
            )
        })
        .collect();
    let trajs = trajs?;
    let perf = batch_performance(&trajs, stat);
    Ok((trajs, perf))
}

/// GAE(gamma, lambda) advantages and value targets for one trajectory. The
/// horizon end is treated as terminal (zero bootstrap value).
pub fn gae_advantages(traj: &Trajectory, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = traj.steps.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for k in (0..n).rev() {
        let v_next = if k + 1 < n {
            traj.steps[k + 1].value_estimate
        } else {
            0.0
        };
        let delta = traj.steps[k].reward + gamma * v_next - traj.steps[k].value_estimate;
        acc = delta + gamma * lambda * acc;
        adv[k] = acc;
    }
    let returns = adv
        .iter()
        .zip(traj.steps.iter())
        .map(|(a, s)| a + s.value_estimate)
        .collect();
    (adv, returns)
}

struct BatchItem<'a> {
    traj_index: usize,
    step_index: usize,
    step: &'a StepRecord,
    old_log_prob: f64,
    advantage: f64,
    value_target: f64,
}

/// Flatten trajectories into per-step items with batch-normalized
/// advantages.
fn prepare_batch<'a>(trajs: &'a [Trajectory], ppo: &PpoConfig) -> Result<Vec<BatchItem<'a>>> {
    let mut items = Vec::new();
    for (ti, traj) in trajs.iter().enumerate() {
        let (mut adv, ret) = gae_advantages(traj, ppo.gamma, ppo.lambda);
        if ppo.center_advantages_per_episode && !adv.is_empty() {
            let m = adv.iter().sum::<f64>() / adv.len() as f64;
            for a in &mut adv {
                *a -= m;
            }
        }
        for (k, step) in traj.steps.iter().enumerate() {
            items.push(BatchItem {
                traj_index: ti,
                step_index: k,
                step,
                old_log_prob: step.log_probs.iter().sum(),
                advantage: adv[k],
                value_target: ret[k],
            });
        }
    }
    if items.is_empty() {
        return Err(Error::contract("ppo batch is empty"));
    }
    let n = items.len() as f64;
    let mean = items.iter().map(|i| i.advantage).sum::<f64>() / n;
    let var = items
        .iter()
        .map(|i| (i.advantage - mean) * (i.advantage - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    for item in &mut items {
        item.advantage = (item.advantage - mean) / (std + 1e-8);
    }
    Ok(items)
}

/// Clipped-surrogate term for one sample; exposed for direct formula tests.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    unclipped.min(clipped)
}

/// Loss component values of one update step.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub ppo: f64,
    pub inter: f64,
    pub intra: f64,
    pub total: f64,
}

/// Per-decision reference log-probs of the elite policy for a whole batch,
/// grouped as trajectories of steps.
type EliteRefs = Vec<Vec<Vec<Rc<Array1<f64>>>>>;

fn elite_references(elite: &PolicyParams, trajs: &[Trajectory]) -> Result<EliteRefs> {
    trajs
        .iter()
        .map(|traj| {
            traj.steps
                .iter()
                .map(|s| reference_log_probs(elite, &s.state, &s.nodes))
                .collect()
        })
        .collect()
}

/// Build the total differentiable loss for one update step:
/// clipped-surrogate actor loss + value loss + entropy bonus, plus the
/// intra-task KL term when `beta > 0`. Returns the loss var and the
/// component values (ppo, intra).
fn build_loss(
    tape: &mut Tape,
    pv: &PolicyVars,
    params: &PolicyParams,
    trajs: &[Trajectory],
    elite_refs: Option<&EliteRefs>,
    ppo: &PpoConfig,
    beta: f64,
) -> Result<(Var, f64, f64)> {
    let items = prepare_batch(trajs, ppo)?;

    let mut surrogate_terms = Vec::with_capacity(items.len());
    let mut value_terms = Vec::with_capacity(items.len());
    let mut entropy_terms = Vec::with_capacity(items.len());
    // Per-trajectory KL terms: summed within a trajectory, averaged across.
    let mut kl_sums: Vec<Vec<Var>> = vec![Vec::new(); trajs.len()];

    for item in &items {
        let r = rescore_on_tape(tape, pv, params, &item.step.state, &item.step.nodes)?;
        let shifted = tape.add_const(r.log_prob, -item.old_log_prob);
        let ratio = tape.exp(shifted);
        let unclipped = tape.scale(ratio, item.advantage);
        let clipped_ratio = tape.clamp(ratio, 1.0 - ppo.clip_eps, 1.0 + ppo.clip_eps);
        let clipped = tape.scale(clipped_ratio, item.advantage);
        surrogate_terms.push(tape.min2(unclipped, clipped));

        let diff = tape.add_const(r.value, -item.value_target);
        value_terms.push(tape.sqr(diff));
        entropy_terms.push(r.entropy);

        if beta > 0.0 {
            let refs = elite_refs.expect("elite refs required when beta > 0");
            let step_refs = &refs[item.traj_index][item.step_index];
            for (d, lq) in r.decisions.iter().zip(step_refs.iter()) {
                let kl = tape.kl_from_log_probs(d.log_probs, lq.clone(), d.mask.clone());
                kl_sums[item.traj_index].push(kl);
            }
        }
    }

    let mean_surr = tape.mean(surrogate_terms);
    let actor = tape.neg(mean_surr);
    let mean_value = tape.mean(value_terms);
    let value_loss = tape.scale(mean_value, ppo.value_coef);
    let mean_ent = tape.mean(entropy_terms);
    let ent_loss = tape.scale(mean_ent, -ppo.entropy_coef);
    let a1 = tape.add(actor, value_loss);
    let ppo_var = tape.add(a1, ent_loss);
    let ppo_value = tape.scalar(ppo_var);

    if beta > 0.0 {
        let per_traj: Vec<Var> = kl_sums.into_iter().map(|terms| tape.sum(terms)).collect();
        let kl_mean = tape.mean(per_traj);
        let intra_value = tape.scalar(kl_mean);
        let weighted = tape.scale(kl_mean, beta);
        let total = tape.add(ppo_var, weighted);
        Ok((total, ppo_value, intra_value))
    } else {
        Ok((ppo_var, ppo_value, 0.0))
    }
}

/// PPO loss value for a batch (actor + value + entropy terms).
pub fn ppo_loss(params: &PolicyParams, trajs: &[Trajectory], ppo: &PpoConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let pv = params.leaves(&mut tape);
    let (loss, _, _) = build_loss(&mut tape, &pv, params, trajs, None, ppo, 0.0)?;
    Ok(tape.scalar(loss))
}

/// PPO loss and its gradient with respect to theta.
pub fn ppo_loss_grad(
    params: &PolicyParams,
    trajs: &[Trajectory],
    ppo: &PpoConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let pv = params.leaves(&mut tape);
    let (loss, _, _) = build_loss(&mut tape, &pv, params, trajs, None, ppo, 0.0)?;
    let grads = tape.backward(loss);
    Ok((tape.scalar(loss), params.flat_grad(&grads, &pv)))
}

/// Diagonal Fisher approximation from per-step log-prob gradients:
/// per parameter, `(1/|J|) sum_tau (1/|tau|) sum_k g_k^2`.
pub fn importance_from_grads(per_traj_grads: &[Vec<Vec<f64>>], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let n_traj = per_traj_grads.len().max(1) as f64;
    for traj in per_traj_grads {
        if traj.is_empty() {
            continue;
        }
        let inv_len = 1.0 / traj.len() as f64;
        for g in traj {
            for (a, v) in acc.iter_mut().zip(g.iter()) {
                *a += inv_len * v * v;
            }
        }
    }
    for a in &mut acc {
        *a /= n_traj;
    }
    acc
}

/// Fisher importance of `params` on a set of trajectories.
pub fn ewc_importance(params: &PolicyParams, trajs: &[Trajectory]) -> Result<Vec<f64>> {
    if trajs.is_empty() {
        return Err(Error::contract("ewc_importance: empty trajectory set"));
    }
    let per_traj: Result<Vec<Vec<Vec<f64>>>> = trajs
        .par_iter()
        .map(|traj| {
            traj.steps
                .iter()
                .map(|s| {
                    crate::policy::action_log_prob_grad(params, &s.state, &s.nodes)
                        .map(|(_, g)| g)
                })
                .collect()
        })
        .collect();
    Ok(importance_from_grads(&per_traj?, params.len()))
}

/// Inter-task consolidation penalty: `(1/i) sum_j sum_p O_j (t - t*_j)^2`.
/// Zero by definition when no previous tasks exist.
pub fn ewc_penalty(params: &PolicyParams, memories: &[TaskMemory]) -> f64 {
    if memories.is_empty() {
        return 0.0;
    }
    let inv = 1.0 / memories.len() as f64;
    let mut total = 0.0;
    for mem in memories {
        debug_assert_eq!(mem.theta_star.len(), params.theta.len());
        for ((t, ts), om) in params
            .theta
            .iter()
            .zip(mem.theta_star.iter())
            .zip(mem.importance.iter())
        {
            let d = t - ts;
            total += om * d * d;
        }
    }
    inv * total
}

/// Analytic gradient of [`ewc_penalty`].
pub fn ewc_penalty_grad(params: &PolicyParams, memories: &[TaskMemory]) -> Vec<f64> {
    let mut grad = vec![0.0; params.theta.len()];
    if memories.is_empty() {
        return grad;
    }
    let inv = 1.0 / memories.len() as f64;
    for mem in memories {
        for (k, (t, ts)) in params.theta.iter().zip(mem.theta_star.iter()).enumerate() {
            grad[k] += inv * 2.0 * mem.importance[k] * (t - ts);
        }
    }
    grad
}

/// Intra-task consolidation penalty: delegates to the policy KL over the
/// batch's states and token sequences.
pub fn ebc_penalty(
    params: &PolicyParams,
    elite: &PolicyParams,
    trajs: &[Trajectory],
) -> Result<f64> {
    let seqs: Vec<Vec<(FlaState, Vec<NodeKind>)>> = trajs
        .iter()
        .map(|t| {
            t.steps
                .iter()
                .map(|s| (s.state, s.nodes.clone()))
                .collect()
        })
        .collect();
    crate::policy::kl_divergence(params, elite, &seqs)
}

/// EBC penalty and its gradient with respect to theta.
pub fn ebc_penalty_grad(
    params: &PolicyParams,
    elite: &PolicyParams,
    trajs: &[Trajectory],
) -> Result<(f64, Vec<f64>)> {
    let refs = elite_references(elite, trajs)?;
    let mut tape = Tape::new();
    let pv = params.leaves(&mut tape);
    let mut per_traj = Vec::new();
    for (traj, traj_refs) in trajs.iter().zip(refs.iter()) {
        let mut terms = Vec::new();
        for (step, step_refs) in traj.steps.iter().zip(traj_refs.iter()) {
            let r = rescore_on_tape(&mut tape, &pv, params, &step.state, &step.nodes)?;
            for (d, lq) in r.decisions.iter().zip(step_refs.iter()) {
                terms.push(tape.kl_from_log_probs(d.log_probs, lq.clone(), d.mask.clone()));
            }
        }
        per_traj.push(tape.sum(terms));
    }
    let kl = tape.mean(per_traj);
    let grads = tape.backward(kl);
    Ok((tape.scalar(kl), params.flat_grad(&grads, &pv)))
}

/// First-order optimizer over the flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimConfig, dim: usize) -> Self {
        Optimizer {
            cfg,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (t, g) in theta.iter_mut().zip(grad.iter()) {
                    *t -= self.cfg.learning_rate * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let b1 = self.cfg.beta1;
                let b2 = self.cfg.beta2;
                let bc1 = 1.0 - b1.powi(self.t as i32);
                let bc2 = 1.0 - b2.powi(self.t as i32);
                for k in 0..theta.len() {
                    self.m[k] = b1 * self.m[k] + (1.0 - b1) * grad[k];
                    self.v[k] = b2 * self.v[k] + (1.0 - b2) * grad[k] * grad[k];
                    let mhat = self.m[k] / bc1;
                    let vhat = self.v[k] / bc2;
                    theta[k] -= self.cfg.learning_rate * mhat / (vhat.sqrt() + self.cfg.eps);
                }
            }
        }
    }
}

/// Clip the gradient to a maximum global L2 norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

/// One epoch row of the machine-readable training log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub task_index: usize,
    pub epoch: usize,
    pub mean_return: f64,
    pub elite_stat: f64,
    pub r_hat: f64,
    pub loss_ppo: f64,
    pub loss_inter: f64,
    pub loss_intra: f64,
}

/// Everything `train_task` needs beyond the parameters.
pub struct TaskRun<'a> {
    pub task: &'a TaskSpec,
    pub task_index: usize,
    pub episode_cfg: &'a EpisodeConfig,
    pub ppo: &'a PpoConfig,
    pub optim: &'a OptimConfig,
    pub train: &'a TrainConfig,
}

/// Output of one task's training: the updated parameters stay in `params`;
/// the memory is the task's EWC snapshot, computed from the final epoch's
/// trajectories.
pub struct TaskOutcome {
    pub memory: TaskMemory,
    pub logs: Vec<EpochLog>,
    /// (epoch, params) snapshots on the checkpoint cadence.
    pub epoch_snapshots: Vec<(usize, PolicyParams)>,
}

/// Train `params` on one task: per epoch collect a batch, refresh the elite
/// (compared before updating, ties update), then take PPO + consolidation
/// gradient steps. After the final epoch the Fisher importance is computed
/// from that epoch's trajectories.
pub fn train_task(
    params: &mut PolicyParams,
    memories: &[TaskMemory],
    run: &TaskRun<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<TaskOutcome> {
    let cfg = run.train;
    if cfg.alpha < 0.0 || cfg.beta < 0.0 {
        return Err(Error::config("consolidation weights must be >= 0"));
    }
    let mut elite = EliteSnapshot::fresh(params);
    let mut optimizer = Optimizer::new(run.optim.clone(), params.len());
    let mut logs = Vec::new();
    let mut epoch_snapshots = Vec::new();
    let mut last_trajs: Vec<Trajectory> = Vec::new();

    for epoch in 0..cfg.epochs_per_task {
        let (trajs, perf) = collect_batch(
            params,
            run.task,
            cfg.episodes_per_epoch,
            run.episode_cfg,
            cfg.elite_statistic,
            rng,
        )?;
        elite = maybe_update_elite(elite, params, perf);

        let mut parts = LossParts::default();
        for _ in 0..run.ppo.update_epochs {
            let elite_refs = if cfg.beta > 0.0 {
                Some(elite_references(&elite.params, &trajs)?)
            } else {
                None
            };
            let mut tape = Tape::new();
            let pv = params.leaves(&mut tape);
            let (loss, ppo_value, intra_value) = build_loss(
                &mut tape,
                &pv,
                params,
                &trajs,
                elite_refs.as_ref(),
                run.ppo,
                cfg.beta,
            )?;
            let grads = tape.backward(loss);
            let mut grad = params.flat_grad(&grads, &pv);

            let inter_value = if cfg.alpha > 0.0 {
                let pen = ewc_penalty(params, memories);
                let pen_grad = ewc_penalty_grad(params, memories);
                for (g, pg) in grad.iter_mut().zip(pen_grad.iter()) {
                    *g += cfg.alpha * pg;
                }
                pen
            } else {
                0.0
            };

            let total = ppo_value + cfg.alpha * inter_value + cfg.beta * intra_value;
            if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!(
                    "non-finite loss {total} at task {} epoch {epoch}",
                    run.task_index
                )));
            }
            clip_grad_norm(&mut grad, run.ppo.grad_clip);
            optimizer.step(&mut params.theta, &grad);
            parts = LossParts {
                ppo: ppo_value,
                inter: inter_value,
                intra: intra_value,
                total,
            };
        }

        logs.push(EpochLog {
            task_index: run.task_index,
            epoch,
            mean_return: trajs.iter().map(|t| t.episode_return).sum::<f64>()
                / trajs.len() as f64,
            elite_stat: perf,
            r_hat: elite.r_hat,
            loss_ppo: parts.ppo,
            loss_inter: parts.inter,
            loss_intra: parts.intra,
        });
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            epoch_snapshots.push((epoch + 1, params.clone()));
        }
        last_trajs = trajs;
    }

    let importance = if last_trajs.is_empty() {
        vec![0.0; params.len()]
    } else {
        ewc_importance(params, &last_trajs)?
    };
    Ok(TaskOutcome {
        memory: TaskMemory {
            task_index: run.task_index,
            theta_star: params.theta.clone(),
            importance,
        },
        logs,
        epoch_snapshots,
    })
}

/// Deterministic batch seed stream per (base seed, salt, task index).
pub fn batch_rng(base: u64, task_index: usize, salt: &str) -> ChaCha8Rng {
    seed::rng(base, salt, task_index as u64)
}
