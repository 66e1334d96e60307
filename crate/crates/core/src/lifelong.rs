//! Task schedules and training regimes over the non-stationary sequence of
//! problem distributions.
//!
//! Regimes: `consolidated` trains with both consolidation losses and
//! accumulating task memories; `fine-tuning` is the same loop with both
//! weights zero and no memories; `restart` re-initializes per task;
//! `all-task` trains once on problems drawn uniformly across every
//! category's functions; `only-inter` and `only-intra` are the ablations.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::policy::{Checkpoint, PolicyParams};
use crate::problems::Category;
use crate::seed;
use crate::trainer::{train_task, TaskMemory, TaskRun, TrainConfig};

/// Training regime tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Both consolidation mechanisms active; memories accumulate.
    Consolidated,
    FineTuning,
    Restart,
    AllTask,
    OnlyInter,
    OnlyIntra,
}

impl Regime {
    pub const ALL: [Regime; 6] = [
        Regime::Consolidated,
        Regime::FineTuning,
        Regime::Restart,
        Regime::AllTask,
        Regime::OnlyInter,
        Regime::OnlyIntra,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Regime::Consolidated => "consolidated",
            Regime::FineTuning => "fine-tuning",
            Regime::Restart => "restart",
            Regime::AllTask => "all-task",
            Regime::OnlyInter => "only-inter",
            Regime::OnlyIntra => "only-intra",
        }
    }

    pub fn from_tag(s: &str) -> Option<Regime> {
        match s {
            "consolidated" => Some(Regime::Consolidated),
            "fine-tuning" | "fine_tuning" => Some(Regime::FineTuning),
            "restart" => Some(Regime::Restart),
            "all-task" | "all_task" => Some(Regime::AllTask),
            "only-inter" | "only_inter" => Some(Regime::OnlyInter),
            "only-intra" | "only_intra" => Some(Regime::OnlyIntra),
            _ => None,
        }
    }

    /// Effective consolidation weights given the configured (alpha, beta).
    pub fn weights(self, alpha: f64, beta: f64) -> (f64, f64) {
        match self {
            Regime::Consolidated => (alpha, beta),
            Regime::FineTuning | Regime::Restart | Regime::AllTask => (0.0, 0.0),
            Regime::OnlyInter => (alpha, 0.0),
            Regime::OnlyIntra => (0.0, beta),
        }
    }

    /// Whether task memories accumulate across tasks.
    pub fn keeps_memories(self) -> bool {
        matches!(self, Regime::Consolidated | Regime::OnlyInter)
    }

    /// Whether parameters are re-initialized at every task boundary.
    pub fn restarts(self) -> bool {
        matches!(self, Regime::Restart)
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// An ordered sequence of category tasks. The three reference orders are
/// built in; arbitrary (even partial) sequences are accepted for desk runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskOrder(pub Vec<Category>);

impl TaskOrder {
    /// The three built-in full orders.
    pub fn builtin(index: usize) -> Option<TaskOrder> {
        use Category::*;
        match index {
            0 => Some(TaskOrder(vec![UniModal, Basic, Hybrid, Composition])),
            1 => Some(TaskOrder(vec![Composition, UniModal, Basic, Hybrid])),
            2 => Some(TaskOrder(vec![UniModal, Composition, Hybrid, Basic])),
            _ => None,
        }
    }

    /// Parse either a built-in index ("0".."2") or a comma list of category
    /// tags ("U,B,C" or "uni_modal,basic").
    pub fn parse(s: &str) -> Result<TaskOrder> {
        if let Ok(idx) = s.parse::<usize>() {
            return Self::builtin(idx)
                .ok_or_else(|| Error::config(format!("no built-in order {idx}")));
        }
        let cats: Option<Vec<Category>> = s.split(',').map(|t| Category::from_tag(t.trim())).collect();
        let cats = cats.ok_or_else(|| Error::config(format!("bad task order `{s}`")))?;
        if cats.is_empty() {
            return Err(Error::config("empty task order"));
        }
        Ok(TaskOrder(cats))
    }

    /// Short label for run directories, e.g. "ubhc".
    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|c| c.tag().chars().next().unwrap())
            .collect()
    }

    pub fn is_full_permutation(&self) -> bool {
        if self.0.len() != 4 {
            return false;
        }
        Category::ALL.iter().all(|c| self.0.contains(c))
    }
}

/// Reference to one task's checkpoints inside a run directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskManifestEntry {
    pub index: usize,
    pub category: String,
    pub final_checkpoint: String,
    /// (epoch-within-task, relative path) on the checkpoint cadence.
    pub epoch_checkpoints: Vec<(usize, String)>,
    /// Number of task memories held after this task finished.
    pub memories_after: usize,
}

/// Everything needed to reproduce and evaluate one lifelong run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub regime: String,
    pub order: Vec<String>,
    pub seed: u64,
    pub config_hash: String,
    pub alpha: f64,
    pub beta: f64,
    pub epochs_per_task: usize,
    pub tasks: Vec<TaskManifestEntry>,
    pub train_log: String,
    pub config_file: String,
    /// Directory the relative paths resolve against; set on save/load.
    #[serde(skip)]
    pub run_dir: PathBuf,
}

impl RunManifest {
    pub fn save(&self) -> Result<()> {
        let file = std::fs::File::create(self.run_dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(run_dir: &Path) -> Result<RunManifest> {
        let file = std::fs::File::open(run_dir.join("manifest.json"))?;
        let mut m: RunManifest = serde_json::from_reader(std::io::BufReader::new(file))?;
        m.run_dir = run_dir.to_path_buf();
        Ok(m)
    }

    pub fn config(&self) -> Result<Config> {
        Config::load(&self.run_dir.join(&self.config_file))
    }

    pub fn final_checkpoint_path(&self) -> Result<PathBuf> {
        let last = self
            .tasks
            .last()
            .ok_or_else(|| Error::contract("manifest has no tasks"))?;
        Ok(self.run_dir.join(&last.final_checkpoint))
    }

    pub fn checkpoint_path(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }
}

/// Run one full lifelong schedule and write checkpoints, the training log,
/// and the manifest under `out_dir`.
pub fn run_lifelong(
    order: &TaskOrder,
    regime: Regime,
    config: &Config,
    run_seed: u64,
    out_dir: &Path,
) -> Result<RunManifest> {
    config.validate()?;
    let (alpha, beta) = regime.weights(config.train.alpha, config.train.beta);
    let hash = config.hash();

    let run_dir = out_dir.join(format!("{}-{}-s{}", regime.tag(), order.label(), run_seed));
    let ck_dir = run_dir.join("checkpoints");
    std::fs::create_dir_all(&ck_dir)?;
    config.save(&run_dir.join("config.toml"))?;

    let log_path = run_dir.join("train_log.jsonl");
    let mut log_file = std::io::BufWriter::new(std::fs::File::create(&log_path)?);

    let mut params = PolicyParams::init(
        config.policy.clone(),
        &mut seed::rng(run_seed, "init", 0),
    );
    let mut memories: Vec<TaskMemory> = Vec::new();
    let mut entries = Vec::new();

    // The all-task regime trains once on the union distribution; the others
    // walk the task order.
    let schedule: Vec<(usize, Option<Category>)> = if regime == Regime::AllTask {
        vec![(0, None)]
    } else {
        order.0.iter().copied().enumerate().map(|(i, c)| (i, Some(c))).collect()
    };

    for (task_index, category) in schedule {
        if regime.restarts() && task_index > 0 {
            params = PolicyParams::init(
                config.policy.clone(),
                &mut seed::rng(run_seed, "init", task_index as u64),
            );
        }
        let task = match category {
            Some(c) => config.task(c),
            None => config.all_task(),
        };
        let train_cfg = TrainConfig {
            alpha,
            beta,
            ..config.train.clone()
        };
        let run = TaskRun {
            task: &task,
            task_index,
            episode_cfg: &config.episode_config(),
            ppo: &config.ppo,
            optim: &config.optim,
            train: &train_cfg,
        };
        let mut task_rng: ChaCha8Rng = seed::rng(run_seed, "train", task_index as u64);
        let outcome = train_task(&mut params, &memories, &run, &mut task_rng)?;

        for log in &outcome.logs {
            serde_json::to_writer(&mut log_file, log)?;
            log_file.write_all(b"\n")?;
        }

        let mut epoch_checkpoints = Vec::new();
        for (epoch, snapshot) in &outcome.epoch_snapshots {
            let rel = format!("checkpoints/task{task_index}_epoch{epoch}.json");
            Checkpoint::from_params(snapshot, &hash).save(&run_dir.join(&rel))?;
            epoch_checkpoints.push((*epoch, rel));
        }
        let final_rel = format!("checkpoints/task{task_index}_final.json");
        Checkpoint::from_params(&params, &hash).save(&run_dir.join(&final_rel))?;

        if regime.keeps_memories() {
            memories.push(outcome.memory);
        }
        entries.push(TaskManifestEntry {
            index: task_index,
            category: category.map(|c| c.tag().to_string()).unwrap_or_else(|| "all".into()),
            final_checkpoint: final_rel,
            epoch_checkpoints,
            memories_after: memories.len(),
        });
    }
    log_file.flush()?;

    let manifest = RunManifest {
        regime: regime.tag().to_string(),
        order: order.0.iter().map(|c| c.tag().to_string()).collect(),
        seed: run_seed,
        config_hash: hash,
        alpha,
        beta,
        epochs_per_task: config.train.epochs_per_task,
        tasks: entries,
        train_log: "train_log.jsonl".into(),
        config_file: "config.toml".into(),
        run_dir,
    };
    manifest.save()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RewardVariant;
    use crate::trainer::EliteStatistic;

    /// Tiny desk config for schedule tests.
    pub(crate) fn desk_config() -> Config {
        let mut c = Config::default();
        c.problem.dim = 2;
        c.problem.fe_budget = 50;
        c.episode.pop_size = 5;
        c.episode.reward_variant = RewardVariant::Descent;
        c.policy.hidden = 8;
        c.train.epochs_per_task = 2;
        c.train.episodes_per_epoch = 2;
        c.train.checkpoint_every = 1;
        c.train.elite_statistic = EliteStatistic::RewardSum;
        c.ppo.update_epochs = 1;
        c
    }

    #[test]
    fn builtin_orders_are_the_three_reference_permutations() {
        use Category::*;
        assert_eq!(
            TaskOrder::builtin(0).unwrap().0,
            vec![UniModal, Basic, Hybrid, Composition]
        );
        assert_eq!(
            TaskOrder::builtin(1).unwrap().0,
            vec![Composition, UniModal, Basic, Hybrid]
        );
        assert_eq!(
            TaskOrder::builtin(2).unwrap().0,
            vec![UniModal, Composition, Hybrid, Basic]
        );
        assert!(TaskOrder::builtin(3).is_none());
        for i in 0..3 {
            assert!(TaskOrder::builtin(i).unwrap().is_full_permutation());
        }
    }

    #[test]
    fn order_parsing_accepts_indices_and_tag_lists() {
        assert_eq!(TaskOrder::parse("1").unwrap(), TaskOrder::builtin(1).unwrap());
        let o = TaskOrder::parse("U,B").unwrap();
        assert_eq!(o.0, vec![Category::UniModal, Category::Basic]);
        assert_eq!(o.label(), "ub");
        assert!(!o.is_full_permutation());
        assert!(TaskOrder::parse("U,Q").is_err());
        assert!(TaskOrder::parse("7").is_err());
    }

    #[test]
    fn regime_weights_and_memory_rules() {
        assert_eq!(Regime::Consolidated.weights(1.0, 2.0), (1.0, 2.0));
        assert_eq!(Regime::FineTuning.weights(1.0, 2.0), (0.0, 0.0));
        assert_eq!(Regime::OnlyInter.weights(1.0, 2.0), (1.0, 0.0));
        assert_eq!(Regime::OnlyIntra.weights(1.0, 2.0), (0.0, 2.0));
        assert!(Regime::Consolidated.keeps_memories());
        assert!(Regime::OnlyInter.keeps_memories());
        for r in [Regime::FineTuning, Regime::Restart, Regime::AllTask, Regime::OnlyIntra] {
            assert!(!r.keeps_memories());
        }
        for r in Regime::ALL {
            assert_eq!(Regime::from_tag(r.tag()), Some(r));
        }
    }

    #[test]
    fn lifelong_run_writes_manifest_checkpoints_and_logs() {
        let config = desk_config();
        let dir = tempfile::tempdir().unwrap();
        let order = TaskOrder::parse("U,B").unwrap();
        let manifest =
            run_lifelong(&order, Regime::Consolidated, &config, 3, dir.path()).unwrap();
        assert_eq!(manifest.tasks.len(), 2);
        assert_eq!(manifest.tasks[0].memories_after, 1);
        assert_eq!(manifest.tasks[1].memories_after, 2);
        // Reload and check checkpoints resolve and reload bit-exactly.
        let loaded = RunManifest::load(&manifest.run_dir).unwrap();
        assert_eq!(loaded.regime, "consolidated");
        let ck = Checkpoint::load(&loaded.final_checkpoint_path().unwrap()).unwrap();
        let params = ck.into_params(Some(&config.hash())).unwrap();
        assert!(params.theta.iter().all(|v| v.is_finite()));
        let log = std::fs::read_to_string(manifest.run_dir.join(&loaded.train_log)).unwrap();
        assert_eq!(log.lines().count(), 4); // 2 tasks x 2 epochs
        let cfg_back = loaded.config().unwrap();
        assert_eq!(cfg_back.hash(), config.hash());
    }

    #[test]
    fn restart_reinitializes_and_keeps_no_memories() {
        let config = desk_config();
        let dir = tempfile::tempdir().unwrap();
        let order = TaskOrder::parse("U,B").unwrap();
        let manifest = run_lifelong(&order, Regime::Restart, &config, 4, dir.path()).unwrap();
        assert!(manifest.tasks.iter().all(|t| t.memories_after == 0));
        // Task-0 and task-1 initializations come from different seed streams;
        // compare first-epoch checkpoints to confirm they are unrelated.
        let ck0 = Checkpoint::load(
            &manifest.checkpoint_path(&manifest.tasks[0].epoch_checkpoints[0].1),
        )
        .unwrap();
        let ck1 = Checkpoint::load(
            &manifest.checkpoint_path(&manifest.tasks[1].epoch_checkpoints[0].1),
        )
        .unwrap();
        assert_ne!(ck0.values, ck1.values);
    }

    #[test]
    fn one_task_consolidated_equals_only_intra() {
        // With no previous tasks the inter-task penalty is identically zero,
        // so a 1-task consolidated run must match only-intra bit for bit.
        let config = desk_config();
        let dir = tempfile::tempdir().unwrap();
        let order = TaskOrder::parse("U").unwrap();
        let a = run_lifelong(&order, Regime::Consolidated, &config, 5, dir.path()).unwrap();
        let b = run_lifelong(&order, Regime::OnlyIntra, &config, 5, dir.path()).unwrap();
        let ck_a = Checkpoint::load(&a.final_checkpoint_path().unwrap()).unwrap();
        let ck_b = Checkpoint::load(&b.final_checkpoint_path().unwrap()).unwrap();
        assert_eq!(ck_a.values, ck_b.values);
    }

    #[test]
    fn all_task_trains_a_single_phase() {
        let config = desk_config();
        let dir = tempfile::tempdir().unwrap();
        let order = TaskOrder::builtin(0).unwrap();
        let manifest = run_lifelong(&order, Regime::AllTask, &config, 6, dir.path()).unwrap();
        assert_eq!(manifest.tasks.len(), 1);
        assert_eq!(manifest.tasks[0].category, "all");
    }
}
