//! One optimization episode: population bookkeeping, landscape-state
//! features, reward, and trajectory recording.
//!
//! Per iteration the policy emits one rule tree which is applied to every
//! individual (each with its own peer draws), candidates are clamped to the
//! box bounds and greedily selected one-to-one as in canonical DE, and the
//! guide advances one generation from the same previous population for the
//! reward's distance term. The learner and the guide consume independent
//! RNG streams split off the episode seed.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, ExprTree, NodeKind, PopulationView};
use crate::guide::{EvalMode, GuideConfig, GuideState};
use crate::problems::ProblemInstance;

/// Incumbent solutions and episode bookkeeping.
#[derive(Clone, Debug)]
pub struct PopulationState {
    pub positions: Array2<f64>,
    pub objectives: Array1<f64>,
    pub personal_bests: Array2<f64>,
    pub personal_best_objs: Array1<f64>,
    pub velocities: Array2<f64>,
    pub best_so_far_pos: Array1<f64>,
    pub best_so_far_obj: f64,
    pub worst_so_far_pos: Array1<f64>,
    pub worst_so_far_obj: f64,
    pub iter: usize,
    pub stagnation_counter: usize,
    pub improved_flag: bool,
    /// f(x*) of the initial population; denominator of the reward ratio.
    pub initial_best_obj: f64,
    /// Objective std of the initial population; FLA normalizer.
    pub initial_obj_std: f64,
    pub f_opt: f64,
    pub bounds: (f64, f64),
}

impl PopulationState {
    pub fn pop_size(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn view(&self) -> PopulationView<'_> {
        PopulationView {
            positions: self.positions.view(),
            personal_bests: self.personal_bests.view(),
            velocities: self.velocities.view(),
            best_so_far: self.best_so_far_pos.view(),
            worst_so_far: self.worst_so_far_pos.view(),
        }
    }
}

/// The nine normalized landscape metrics used as the RL state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaState(pub [f64; 9]);

impl FlaState {
    pub fn as_slice(&self) -> &[f64; 9] {
        &self.0
    }

    pub fn to_array(&self) -> Array1<f64> {
        Array1::from_vec(self.0.to_vec())
    }
}

/// One decision produced by a policy for a given state.
#[derive(Clone, Debug)]
pub struct Decision {
    pub tree: ExprTree,
    /// Per-decision-point log-probs (token, then omega/eps for constants).
    pub log_probs: Vec<f64>,
    pub entropy: f64,
    pub value: f64,
}

/// Anything that can emit one rule tree per iteration.
pub trait RulePolicy {
    fn decide(&mut self, state: &FlaState, rng: &mut ChaCha8Rng) -> Decision;
}

/// A frozen rule applied every iteration; log-probs empty, value zero.
pub struct FixedRulePolicy {
    pub tree: ExprTree,
}

impl FixedRulePolicy {
    pub fn new(tree: ExprTree) -> Self {
        assert!(tree.validate(), "fixed rule must be a valid tree");
        FixedRulePolicy { tree }
    }
}

impl RulePolicy for FixedRulePolicy {
    fn decide(&mut self, _state: &FlaState, _rng: &mut ChaCha8Rng) -> Decision {
        Decision {
            tree: self.tree.clone(),
            log_probs: Vec::new(),
            entropy: 0.0,
            value: 0.0,
        }
    }
}

/// One recorded environment step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: FlaState,
    /// Prefix text of the rule; always re-parses to `nodes`.
    pub rule: String,
    /// Preorder token sequence including constant parameters.
    pub nodes: Vec<NodeKind>,
    pub log_probs: Vec<f64>,
    pub reward: f64,
    pub value_estimate: f64,
    pub next_state: FlaState,
}

/// One optimization episode's record.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub episode_return: f64,
    pub final_best: f64,
}

impl Trajectory {
    /// Serialize as line-delimited JSON, one [`StepRecord`] per line.
    pub fn write_steps<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Read back a step stream; the episode return is recomputed.
    pub fn read_steps<R: std::io::BufRead>(r: R) -> Result<Vec<StepRecord>> {
        let mut steps = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str(&line)?);
        }
        Ok(steps)
    }
}

/// Which printed form of the reward to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    /// Verbatim: ratio + distance term.
    Paper,
    /// Improvement-oriented: (1 - ratio) - distance term.
    Descent,
}

/// Uniform initialization plus full bookkeeping at iteration 0.
pub fn init_population(
    p: &mut ProblemInstance,
    pop_size: usize,
    rng: &mut impl Rng,
) -> Result<PopulationState> {
    if pop_size < 2 {
        return Err(Error::config("population needs at least 2 individuals"));
    }
    if p.remaining_budget() < pop_size as u64 {
        return Err(Error::config(format!(
            "budget {} cannot even initialize {} individuals",
            p.remaining_budget(),
            pop_size
        )));
    }
    let (lb, ub) = p.bounds;
    let dim = p.dim;
    let mut positions = Array2::<f64>::zeros((pop_size, dim));
    for i in 0..pop_size {
        for d in 0..dim {
            positions[(i, d)] = rng.gen_range(lb..=ub);
        }
    }
    let mut objectives = Array1::<f64>::zeros(pop_size);
    for i in 0..pop_size {
        objectives[i] = p.evaluate(positions.row(i))?;
    }
    let best_idx = argmin(&objectives);
    let worst_idx = argmax(&objectives);
    let mean = objectives.mean().unwrap();
    let var = objectives.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / pop_size as f64;

    Ok(PopulationState {
        personal_bests: positions.clone(),
        personal_best_objs: objectives.clone(),
        velocities: Array2::zeros((pop_size, dim)),
        best_so_far_pos: positions.row(best_idx).to_owned(),
        best_so_far_obj: objectives[best_idx],
        worst_so_far_pos: positions.row(worst_idx).to_owned(),
        worst_so_far_obj: objectives[worst_idx],
        iter: 0,
        stagnation_counter: 0,
        improved_flag: true,
        initial_best_obj: objectives[best_idx],
        initial_obj_std: var.sqrt(),
        f_opt: p.f_opt,
        bounds: p.bounds,
        positions,
        objectives,
    })
}

fn argmin(v: &Array1<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

fn argmax(v: &Array1<f64>) -> usize {
    let mut worst = 0;
    for i in 1..v.len() {
        if v[i] > v[worst] {
            worst = i;
        }
    }
    worst
}

fn euclid(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The nine FLA metrics, each normalized to [0, 1]:
/// (i) mean pairwise distance, (ii) mean distance to the current-iteration
/// best, (iii) mean distance to the best-so-far, (iv) mean objective gap to
/// the best-so-far, (v) mean objective gap to the current best, (vi)
/// objective std, (vii) remaining-iteration fraction, (viii) stagnation
/// fraction, (ix) improved flag. Distances are scaled by the search-space
/// diameter, objective gaps by the initial best gap, the std by the initial
/// std.
pub fn fla_state(pop: &PopulationState, h: usize) -> FlaState {
    let n = pop.pop_size();
    let dim = pop.dim() as f64;
    let (lb, ub) = pop.bounds;
    let diameter = dim.sqrt() * (ub - lb);

    let mut pairwise = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            pairwise += euclid(pop.positions.row(i), pop.positions.row(j));
            pairs += 1;
        }
    }
    let m1 = if pairs > 0 { pairwise / pairs as f64 / diameter } else { 0.0 };

    let cur_best = argmin(&pop.objectives);
    let m2 = (0..n)
        .map(|i| euclid(pop.positions.row(i), pop.positions.row(cur_best)))
        .sum::<f64>()
        / n as f64
        / diameter;
    let m3 = (0..n)
        .map(|i| euclid(pop.positions.row(i), pop.best_so_far_pos.view()))
        .sum::<f64>()
        / n as f64
        / diameter;

    let gap_denom = pop.initial_best_obj - pop.f_opt;
    let norm_gap = |g: f64| {
        if gap_denom > 0.0 {
            (g / gap_denom).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let m4 = norm_gap(
        pop.objectives.iter().map(|f| f - pop.best_so_far_obj).sum::<f64>() / n as f64,
    );
    let cur_best_obj = pop.objectives[cur_best];
    let m5 = norm_gap(pop.objectives.iter().map(|f| f - cur_best_obj).sum::<f64>() / n as f64);

    let mean = pop.objectives.mean().unwrap();
    let std = (pop.objectives.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n as f64)
        .sqrt();
    let m6 = if pop.initial_obj_std > 0.0 {
        (std / pop.initial_obj_std).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let (m7, m8) = if h > 0 {
        (
            ((h as f64 - pop.iter as f64) / h as f64).clamp(0.0, 1.0),
            (pop.stagnation_counter as f64 / h as f64).clamp(0.0, 1.0),
        )
    } else {
        (1.0, 0.0)
    };
    let m9 = if pop.improved_flag { 1.0 } else { 0.0 };

    FlaState([m1, m2, m3, m4, m5, m6, m7, m8, m9])
}

/// Max-min population distance: `max_{x in X} min_{x' in X'} ||x - x'||`.
pub fn population_distance(x: ArrayView2<'_, f64>, x_guide: ArrayView2<'_, f64>) -> f64 {
    assert!(x.nrows() > 0 && x_guide.nrows() > 0, "empty population");
    assert_eq!(x.ncols(), x_guide.ncols(), "dimension mismatch");
    let mut worst = 0.0f64;
    for i in 0..x.nrows() {
        let mut closest = f64::INFINITY;
        for j in 0..x_guide.nrows() {
            closest = closest.min(euclid(x.row(i), x_guide.row(j)));
        }
        worst = worst.max(closest);
    }
    worst
}

/// Per-iteration reward. The `paper` variant is the printed form
/// `ratio + d/(ub - lb)`; the `descent` variant rewards improvement,
/// `(1 - ratio) - d/(ub - lb)`. A degenerate episode (already optimal at
/// initialization) defines the ratio as 0.
pub fn reward(
    pop: &PopulationState,
    x_guide: ArrayView2<'_, f64>,
    p: &ProblemInstance,
    variant: RewardVariant,
) -> f64 {
    let denom = pop.initial_best_obj - p.f_opt;
    let ratio = if denom > 0.0 {
        (pop.best_so_far_obj - p.f_opt) / denom
    } else {
        0.0
    };
    let (lb, ub) = p.bounds;
    let dist = population_distance(pop.positions.view(), x_guide) / (ub - lb);
    match variant {
        RewardVariant::Paper => ratio + dist,
        RewardVariant::Descent => (1.0 - ratio) - dist,
    }
}

/// Episode-level knobs shared by training and evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub pop_size: usize,
    pub horizon: usize,
    pub reward_variant: RewardVariant,
    pub guide: GuideConfig,
}

/// Run one full episode. The provided `rng` is consumed for exactly two
/// seeds: the learner stream (initialization, policy sampling, peer draws)
/// and the guide stream.
pub fn run_episode(
    p: &mut ProblemInstance,
    policy: &mut dyn RulePolicy,
    cfg: &EpisodeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    run_episode_observed(p, policy, cfg, rng, |_, _| {})
}

/// As [`run_episode`], invoking `observe(iteration, population)` after
/// initialization (iteration 0) and after every completed iteration.
pub fn run_episode_observed(
    p: &mut ProblemInstance,
    policy: &mut dyn RulePolicy,
    cfg: &EpisodeConfig,
    rng: &mut ChaCha8Rng,
    mut observe: impl FnMut(usize, &PopulationState),
) -> Result<Trajectory> {
    let h = cfg.horizon;
    let pop_size = cfg.pop_size;
    let needed = pop_size as u64 * (h as u64 + 1);
    if p.fe_budget < needed {
        return Err(Error::config(format!(
            "fe_budget {} < pop_size * (H + 1) = {}",
            p.fe_budget, needed
        )));
    }
    let learner_seed = rng.next_u64();
    let guide_seed = rng.next_u64();
    let mut lrng = ChaCha8Rng::seed_from_u64(learner_seed);
    let mut guide = GuideState::new(cfg.guide.clone(), ChaCha8Rng::seed_from_u64(guide_seed));

    let mut pop = init_population(p, pop_size, &mut lrng)?;
    let (lb, ub) = pop.bounds;
    let mut steps = Vec::with_capacity(h);
    observe(0, &pop);

    for k in 1..=h {
        let state = fla_state(&pop, h);
        let decision = policy.decide(&state, &mut lrng);
        debug_assert!(decision.tree.validate());

        // Guide generation from the same previous population; shadow evals.
        let guide_step = guide.step(pop.positions.view(), pop.objectives.view(), p, EvalMode::Shadow)?;

        // Build all candidates synchronously from X_{k-1}.
        let n = pop.pop_size();
        let mut trials = Array2::<f64>::zeros((n, pop.dim()));
        {
            let view = pop.view();
            for i in 0..n {
                let cand = expr::evaluate(&decision.tree, &view, i, &mut lrng)?;
                for (d, v) in cand.iter().enumerate() {
                    trials[(i, d)] = v.clamp(lb, ub);
                }
            }
        }

        // Evaluate, track best/worst over everything seen, select greedily.
        let prev_best = pop.best_so_far_obj;
        let mut trial_objs = Array1::<f64>::zeros(n);
        for i in 0..n {
            let f = p.evaluate(trials.row(i))?;
            trial_objs[i] = f;
            if f < pop.best_so_far_obj {
                pop.best_so_far_obj = f;
                pop.best_so_far_pos.assign(&trials.row(i));
            }
            if f > pop.worst_so_far_obj {
                pop.worst_so_far_obj = f;
                pop.worst_so_far_pos.assign(&trials.row(i));
            }
        }
        for i in 0..n {
            if trial_objs[i] <= pop.objectives[i] {
                let old = pop.positions.row(i).to_owned();
                let new = trials.row(i);
                for d in 0..pop.dim() {
                    pop.velocities[(i, d)] = new[d] - old[d];
                }
                pop.positions.row_mut(i).assign(&new);
                pop.objectives[i] = trial_objs[i];
                if trial_objs[i] < pop.personal_best_objs[i] {
                    pop.personal_best_objs[i] = trial_objs[i];
                    pop.personal_bests.row_mut(i).assign(&new);
                }
            } else {
                for d in 0..pop.dim() {
                    pop.velocities[(i, d)] = 0.0;
                }
            }
        }
        pop.iter += 1;
        pop.improved_flag = pop.best_so_far_obj < prev_best;
        pop.stagnation_counter = if pop.improved_flag {
            0
        } else {
            pop.stagnation_counter + 1
        };
        debug_assert!(pop.best_so_far_obj <= prev_best);
        debug_assert!(pop.positions.iter().all(|v| (lb..=ub).contains(v)));
        observe(k, &pop);

        let r = reward(&pop, guide_step.positions.view(), p, cfg.reward_variant);
        let next_state = fla_state(&pop, h);
        steps.push(StepRecord {
            state,
            rule: decision.tree.to_prefix(),
            nodes: decision.tree.nodes().to_vec(),
            log_probs: decision.log_probs,
            reward: r,
            value_estimate: decision.value,
            next_state,
        });
    }

    let episode_return = steps.iter().map(|s| s.reward).sum();
    Ok(Trajectory {
        steps,
        episode_return,
        final_best: pop.best_so_far_obj,
    })
}
