//! Evaluation protocol and reporting: greedy-decode test runs on dedicated
//! seed streams, the shared worst-value registry that anchors objective
//! normalization, rank tables, forgetting curves, and the alpha/beta grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::config::Config;
use crate::engine::run_episode;
use crate::error::{Error, Result};
use crate::expr::ExprTree;
use crate::guide::run_guide_episode;
use crate::lifelong::{run_lifelong, Regime, RunManifest, TaskOrder};
use crate::policy::{Checkpoint, DecodeMode, NeuralPolicy, PolicyParams};
use crate::problems::{normalize_objective, sample_problem, Category, TaskSpec};
use crate::seed;

/// Raw outcome of evaluating one method on one task: per-problem function
/// ids and final objectives (normalization happens later, once the full
/// comparison pool exists).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskEval {
    pub task_label: String,
    pub function_ids: Vec<u8>,
    pub raw_objectives: Vec<f64>,
}

/// One method's evaluation across a task sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodEval {
    pub name: String,
    pub per_task: Vec<TaskEval>,
}

/// Per-function worst raw value over every compared run; the denominator
/// registry for objective normalization. Instances put their optimum at 0,
/// so `f_opt` is 0 throughout.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FWorstRegistry {
    pub worst: BTreeMap<u8, f64>,
}

impl FWorstRegistry {
    pub fn observe(&mut self, function_id: u8, raw: f64) {
        let e = self.worst.entry(function_id).or_insert(f64::NEG_INFINITY);
        if raw > *e {
            *e = raw;
        }
    }

    pub fn observe_all(&mut self, evals: &[MethodEval]) {
        for m in evals {
            for t in &m.per_task {
                for (id, raw) in t.function_ids.iter().zip(t.raw_objectives.iter()) {
                    self.observe(*id, *raw);
                }
            }
        }
    }

    /// Normalized objective in [0, 1]; 1 when every observed run hit the
    /// optimum exactly (degenerate pool).
    pub fn normalize(&self, function_id: u8, raw: f64) -> Result<f64> {
        let worst = self
            .worst
            .get(&function_id)
            .copied()
            .ok_or_else(|| Error::contract(format!("no pool entry for function {function_id}")))?;
        if worst <= 0.0 {
            return Ok(1.0);
        }
        normalize_objective(raw, worst, 0.0)
    }
}

/// Evaluate a parameter snapshot on `n` freshly sampled problems of a task
/// using greedy decoding and a dedicated evaluation seed stream.
pub fn evaluate_params(
    params: &PolicyParams,
    config: &Config,
    task: &TaskSpec,
    n: usize,
    eval_seed: u64,
) -> Result<TaskEval> {
    let label = task_label(task);
    let episode_cfg = config.episode_config();
    let salt_problem = format!("eval-problem-{label}");
    let salt_episode = format!("eval-episode-{label}");
    let results: Result<Vec<(u8, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut prng = seed::rng(eval_seed, &salt_problem, i as u64);
            let mut problem = sample_problem(task, &mut prng)?;
            let mut policy = NeuralPolicy {
                params,
                mode: DecodeMode::Greedy,
            };
            let mut erng = seed::rng(eval_seed, &salt_episode, i as u64);
            let traj = run_episode(&mut problem, &mut policy, &episode_cfg, &mut erng)?;
            Ok((problem.function_id, traj.final_best))
        })
        .collect();
    let results = results?;
    Ok(TaskEval {
        task_label: label,
        function_ids: results.iter().map(|(id, _)| *id).collect(),
        raw_objectives: results.iter().map(|(_, v)| *v).collect(),
    })
}

/// Evaluate a checkpoint file; refuses when its config hash does not match.
pub fn evaluate_model(
    checkpoint: &Path,
    config: &Config,
    task: &TaskSpec,
    n: usize,
    eval_seed: u64,
) -> Result<TaskEval> {
    let params = Checkpoint::load(checkpoint)?.into_params(Some(&config.hash()))?;
    evaluate_params(&params, config, task, n, eval_seed)
}

/// Guide-DE baseline on the same evaluation problem stream.
pub fn evaluate_guide(
    config: &Config,
    task: &TaskSpec,
    n: usize,
    eval_seed: u64,
) -> Result<TaskEval> {
    let label = task_label(task);
    let salt_problem = format!("eval-problem-{label}");
    let salt_guide = format!("eval-guide-{label}");
    let results: Result<Vec<(u8, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut prng = seed::rng(eval_seed, &salt_problem, i as u64);
            let mut problem = sample_problem(task, &mut prng)?;
            let mut grng = seed::rng(eval_seed, &salt_guide, i as u64);
            let best = run_guide_episode(
                &mut problem,
                config.horizon(),
                config.episode.pop_size,
                &config.guide,
                &mut grng,
            )?;
            Ok((problem.function_id, best))
        })
        .collect();
    let results = results?;
    Ok(TaskEval {
        task_label: label,
        function_ids: results.iter().map(|(id, _)| *id).collect(),
        raw_objectives: results.iter().map(|(_, v)| *v).collect(),
    })
}

fn task_label(task: &TaskSpec) -> String {
    task.categories
        .iter()
        .map(|c| c.tag())
        .collect::<Vec<_>>()
        .join("+")
}

/// Rank table across methods: per-task mean normalized objectives, per-task
/// ranks (1 = best, ties averaged), and the per-method average rank.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankTable {
    pub task_labels: Vec<String>,
    pub methods: Vec<String>,
    pub mean_normalized: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub avg_rank: Vec<f64>,
    pub f_worst: FWorstRegistry,
    /// Evaluation provenance: problems per task and the seed stream.
    pub n_problems: usize,
    pub eval_seed: u64,
}

/// Average ranks for a column of scores where larger is better.
pub fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut pos = 0;
    while pos < n {
        let mut end = pos;
        while end + 1 < n && scores[order[end + 1]] == scores[order[pos]] {
            end += 1;
        }
        // positions pos..=end share the average rank
        let avg = (pos + 1 + end + 1) as f64 / 2.0;
        for k in pos..=end {
            ranks[order[k]] = avg;
        }
        pos = end + 1;
    }
    ranks
}

/// Build the rank table. All methods must have been evaluated on identical
/// problem sets (same task labels and function-id sequences).
pub fn build_rank_table(methods: &[MethodEval]) -> Result<RankTable> {
    build_rank_table_with_provenance(methods, 0, 0)
}

/// As [`build_rank_table`], recording the evaluation seed and problem count
/// in the report.
pub fn build_rank_table_with_provenance(
    methods: &[MethodEval],
    n_problems: usize,
    eval_seed: u64,
) -> Result<RankTable> {
    if methods.len() < 2 {
        return Err(Error::contract("rank table needs at least 2 methods"));
    }
    let first = &methods[0];
    for m in methods.iter().skip(1) {
        if m.per_task.len() != first.per_task.len() {
            return Err(Error::contract("methods cover different task sets"));
        }
        for (a, b) in m.per_task.iter().zip(first.per_task.iter()) {
            if a.task_label != b.task_label || a.function_ids != b.function_ids {
                return Err(Error::contract("methods evaluated on different problem sets"));
            }
        }
    }

    let mut pool = FWorstRegistry::default();
    pool.observe_all(methods);

    let n_tasks = first.per_task.len();
    let mut mean_normalized = vec![vec![0.0; n_tasks]; methods.len()];
    for (mi, m) in methods.iter().enumerate() {
        for (ti, t) in m.per_task.iter().enumerate() {
            let mut acc = 0.0;
            for (id, raw) in t.function_ids.iter().zip(t.raw_objectives.iter()) {
                acc += pool.normalize(*id, *raw)?;
            }
            mean_normalized[mi][ti] = acc / t.raw_objectives.len().max(1) as f64;
        }
    }

    let mut ranks = vec![vec![0.0; n_tasks]; methods.len()];
    for ti in 0..n_tasks {
        let column: Vec<f64> = (0..methods.len()).map(|mi| mean_normalized[mi][ti]).collect();
        let col_ranks = average_ranks(&column);
        for (mi, r) in col_ranks.into_iter().enumerate() {
            ranks[mi][ti] = r;
        }
    }
    let avg_rank = ranks
        .iter()
        .map(|row| row.iter().sum::<f64>() / n_tasks as f64)
        .collect();

    Ok(RankTable {
        task_labels: first.per_task.iter().map(|t| t.task_label.clone()).collect(),
        methods: methods.iter().map(|m| m.name.clone()).collect(),
        mean_normalized,
        ranks,
        avg_rank,
        f_worst: pool,
        n_problems,
        eval_seed,
    })
}

/// One long-form row of a forgetting-curve dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveRow {
    /// Training epochs completed across the whole schedule.
    pub epoch: usize,
    pub task_label: String,
    pub mean_normalized: f64,
}

/// Evaluate every intermediate checkpoint of a run on every task of its
/// order. Normalization pools the worst value over everything evaluated
/// here.
pub fn forgetting_curves(
    manifest: &RunManifest,
    config: &Config,
    n: usize,
    eval_seed: u64,
) -> Result<Vec<CurveRow>> {
    let cats: Vec<Category> = manifest
        .order
        .iter()
        .map(|t| Category::from_tag(t).ok_or_else(|| Error::config(format!("bad tag {t}"))))
        .collect::<Result<_>>()?;
    let tasks: Vec<TaskSpec> = cats.iter().map(|&c| config.task(c)).collect();

    // (global epoch, checkpoint path)
    let mut points = Vec::new();
    for entry in &manifest.tasks {
        let base = entry.index * manifest.epochs_per_task;
        for (epoch, rel) in &entry.epoch_checkpoints {
            points.push((base + epoch, manifest.checkpoint_path(rel)));
        }
        points.push((
            base + manifest.epochs_per_task,
            manifest.checkpoint_path(&entry.final_checkpoint),
        ));
    }
    points.sort_by_key(|(e, _)| *e);
    points.dedup_by_key(|(e, _)| *e);

    let mut raw_rows: Vec<(usize, TaskEval)> = Vec::new();
    for (epoch, path) in &points {
        let params = Checkpoint::load(path)?.into_params(Some(&manifest.config_hash))?;
        for task in &tasks {
            raw_rows.push((*epoch, evaluate_params(&params, config, task, n, eval_seed)?));
        }
    }

    let mut pool = FWorstRegistry::default();
    for (_, te) in &raw_rows {
        for (id, raw) in te.function_ids.iter().zip(te.raw_objectives.iter()) {
            pool.observe(*id, *raw);
        }
    }
    raw_rows
        .into_iter()
        .map(|(epoch, te)| {
            let mut acc = 0.0;
            for (id, raw) in te.function_ids.iter().zip(te.raw_objectives.iter()) {
                acc += pool.normalize(*id, *raw)?;
            }
            Ok(CurveRow {
                epoch,
                task_label: te.task_label,
                mean_normalized: acc / te.raw_objectives.len().max(1) as f64,
            })
        })
        .collect()
}

pub fn write_curves_csv(rows: &[CurveRow], mut w: impl std::io::Write) -> Result<()> {
    writeln!(w, "epoch,task,mean_normalized")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.epoch, r.task_label, r.mean_normalized)?;
    }
    Ok(())
}

/// One cell of the alpha/beta sensitivity grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    /// Mean over repeats of the final model's all-task mean normalized
    /// objective.
    pub mean_performance: f64,
    pub seeds: Vec<u64>,
}

/// Train the consolidated regime on every (alpha, beta) cell, `repeats`
/// seeded runs each, and score the final models across all tasks of the
/// order. Normalization pools every evaluation in the sweep.
pub fn sensitivity_sweep(
    alphas: &[f64],
    betas: &[f64],
    order: &TaskOrder,
    repeats: usize,
    base_seed: u64,
    config: &Config,
    out_dir: &Path,
) -> Result<Vec<SweepCell>> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::config("sweep grids must be non-empty"));
    }
    let tasks: Vec<TaskSpec> = order.0.iter().map(|&c| config.task(c)).collect();
    // Collect raw evaluations per cell/repeat, then normalize over the pool.
    struct CellRaw {
        alpha: f64,
        beta: f64,
        seeds: Vec<u64>,
        evals: Vec<TaskEval>,
    }
    let mut cells: Vec<CellRaw> = Vec::new();
    for &alpha in alphas {
        for &beta in betas {
            let mut cfg = config.clone();
            cfg.train.alpha = alpha;
            cfg.train.beta = beta;
            let cell_dir = out_dir.join(format!("a{alpha}-b{beta}"));
            let mut seeds = Vec::new();
            let mut evals = Vec::new();
            for r in 0..repeats {
                let run_seed = seed::derive(base_seed, "sweep-run", r as u64);
                seeds.push(run_seed);
                let manifest =
                    run_lifelong(order, Regime::Consolidated, &cfg, run_seed, &cell_dir)?;
                let params = Checkpoint::load(&manifest.final_checkpoint_path()?)?
                    .into_params(Some(&cfg.hash()))?;
                for task in &tasks {
                    evals.push(evaluate_params(
                        &params,
                        &cfg,
                        task,
                        cfg.eval.n_problems,
                        seed::derive(base_seed, "sweep-eval", r as u64),
                    )?);
                }
            }
            cells.push(CellRaw {
                alpha,
                beta,
                seeds,
                evals,
            });
        }
    }

    let mut pool = FWorstRegistry::default();
    for c in &cells {
        for te in &c.evals {
            for (id, raw) in te.function_ids.iter().zip(te.raw_objectives.iter()) {
                pool.observe(*id, *raw);
            }
        }
    }
    cells
        .into_iter()
        .map(|c| {
            let mut acc = 0.0;
            let mut count = 0usize;
            for te in &c.evals {
                for (id, raw) in te.function_ids.iter().zip(te.raw_objectives.iter()) {
                    acc += pool.normalize(*id, *raw)?;
                    count += 1;
                }
            }
            Ok(SweepCell {
                alpha: c.alpha,
                beta: c.beta,
                mean_performance: acc / count.max(1) as f64,
                seeds: c.seeds,
            })
        })
        .collect()
}

pub fn write_sweep_csv(cells: &[SweepCell], mut w: impl std::io::Write) -> Result<()> {
    writeln!(w, "alpha,beta,mean_performance")?;
    for c in cells {
        writeln!(w, "{},{},{}", c.alpha, c.beta, c.mean_performance)?;
    }
    Ok(())
}

/// Rules a checkpoint emits along one greedy evaluation episode: pairs of
/// (iteration, prefix-notation rule).
pub fn export_rules(
    checkpoint: &Path,
    config: &Config,
    category: Category,
    eval_seed: u64,
) -> Result<Vec<(usize, String)>> {
    let params = Checkpoint::load(checkpoint)?.into_params(Some(&config.hash()))?;
    let task = config.task(category);
    let mut prng = seed::rng(eval_seed, "export-problem", 0);
    let mut problem = sample_problem(&task, &mut prng)?;
    let mut policy = NeuralPolicy {
        params: &params,
        mode: DecodeMode::Greedy,
    };
    let mut erng = seed::rng(eval_seed, "export-episode", 0);
    let traj = run_episode(&mut problem, &mut policy, &config.episode_config(), &mut erng)?;
    Ok(traj
        .steps
        .iter()
        .enumerate()
        .map(|(k, s)| {
            debug_assert_eq!(ExprTree::parse(&s.rule).unwrap().nodes(), &s.nodes[..]);
            (k + 1, s.rule.clone())
        })
        .collect())
}
