use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use metabbo::config::Config;
use metabbo::harness::{
    build_rank_table_with_provenance, evaluate_guide, evaluate_model, export_rules, forgetting_curves,
    sensitivity_sweep, write_curves_csv, write_sweep_csv, MethodEval,
};
use metabbo::lifelong::{run_lifelong, Regime, RunManifest, TaskOrder};
use metabbo::problems::Category;

#[derive(Parser)]
#[command(
    name = "metabbo",
    about = "Lifelong training of symbolic update-rule policies for black-box optimizers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one lifelong training schedule and write a run directory.
    Train {
        /// consolidated | fine-tuning | restart | all-task | only-inter | only-intra
        #[arg(long)]
        regime: String,
        /// Built-in order index (0..2) or a category list like "U,B,H,C".
        #[arg(long, default_value = "0")]
        order: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on freshly sampled problems of one category.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// uni_modal | basic | hybrid | composition
        #[arg(long)]
        category: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rank several run manifests (plus optionally the guide baseline) on
    /// the first manifest's task order.
    Compare {
        /// Run directories containing manifest.json.
        #[arg(long, num_args = 1.., required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Add the guide-DE baseline row.
        #[arg(long, default_value_t = false)]
        include_guide: bool,
        /// Output JSON path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forgetting curves: evaluate every intermediate checkpoint of a run
    /// on every task of its order; long-form CSV.
    Curves {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Alpha/beta sensitivity grid over repeated consolidated runs.
    Sweep {
        /// Comma-separated alpha grid, e.g. "0.1,1,10".
        #[arg(long, default_value = "0.1,1,10")]
        alpha: String,
        #[arg(long, default_value = "0.1,1,10")]
        beta: String,
        #[arg(long, default_value = "0")]
        order: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "sweep")]
        out_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the rules a checkpoint emits along one greedy episode.
    ExportRules {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<Config> {
    let cfg = match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => Config::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_category(s: &str) -> anyhow::Result<Category> {
    Category::from_tag(s).with_context(|| format!("unknown category `{s}`"))
}

fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad grid value `{t}`"))
        })
        .collect()
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train {
            regime,
            order,
            seed,
            config,
            out,
        } => {
            let regime =
                Regime::from_tag(&regime).with_context(|| format!("unknown regime `{regime}`"))?;
            let order = TaskOrder::parse(&order)?;
            let cfg = load_config(&config)?;
            let manifest = run_lifelong(&order, regime, &cfg, seed, &out)?;
            println!("{}", manifest.run_dir.display());
        }
        Command::Evaluate {
            checkpoint,
            category,
            n,
            seed,
            config,
        } => {
            let cfg = load_config(&config)?;
            let task = cfg.task(parse_category(&category)?);
            let n = n.unwrap_or(cfg.eval.n_problems);
            let result = evaluate_model(&checkpoint, &cfg, &task, n, seed)?;
            serde_json::to_writer_pretty(std::io::stdout().lock(), &result)?;
            println!();
        }
        Command::Compare {
            manifests,
            n,
            seed,
            include_guide,
            out,
        } => {
            if manifests.is_empty() {
                bail!("need at least one manifest");
            }
            let loaded: Vec<RunManifest> = manifests
                .iter()
                .map(|p| RunManifest::load(p))
                .collect::<Result<_, _>>()?;
            let cfg = loaded[0].config()?;
            for m in &loaded {
                if m.config_hash != loaded[0].config_hash {
                    bail!(
                        "manifest {} was produced under a different config",
                        m.run_dir.display()
                    );
                }
                if m.order != loaded[0].order {
                    bail!("manifests disagree on the task order");
                }
            }
            let n = n.unwrap_or(cfg.eval.n_problems);
            let tasks: Vec<_> = loaded[0]
                .order
                .iter()
                .map(|t| parse_category(t).map(|c| cfg.task(c)))
                .collect::<Result<_, _>>()?;

            let mut methods = Vec::new();
            for m in &loaded {
                let ck = m.final_checkpoint_path()?;
                let per_task = tasks
                    .iter()
                    .map(|t| evaluate_model(&ck, &cfg, t, n, seed))
                    .collect::<Result<_, _>>()?;
                methods.push(MethodEval {
                    name: format!("{}-s{}", m.regime, m.seed),
                    per_task,
                });
            }
            if include_guide {
                let per_task = tasks
                    .iter()
                    .map(|t| evaluate_guide(&cfg, t, n, seed))
                    .collect::<Result<_, _>>()?;
                methods.push(MethodEval {
                    name: "guide-DE".into(),
                    per_task,
                });
            }
            let table = build_rank_table_with_provenance(&methods, n, seed)?;
            match out {
                Some(p) => serde_json::to_writer_pretty(std::fs::File::create(p)?, &table)?,
                None => {
                    serde_json::to_writer_pretty(std::io::stdout().lock(), &table)?;
                    println!();
                }
            }
        }
        Command::Curves {
            manifest,
            n,
            seed,
            out,
        } => {
            let m = RunManifest::load(&manifest)?;
            let cfg = m.config()?;
            let n = n.unwrap_or(cfg.eval.n_problems);
            let rows = forgetting_curves(&m, &cfg, n, seed)?;
            match out {
                Some(p) => write_curves_csv(&rows, std::fs::File::create(p)?)?,
                None => write_curves_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Sweep {
            alpha,
            beta,
            order,
            repeats,
            seed,
            config,
            out_dir,
            out,
        } => {
            let cfg = load_config(&config)?;
            let order = TaskOrder::parse(&order)?;
            let cells = sensitivity_sweep(
                &parse_grid(&alpha)?,
                &parse_grid(&beta)?,
                &order,
                repeats,
                seed,
                &cfg,
                &out_dir,
            )?;
            match out {
                Some(p) => write_sweep_csv(&cells, std::fs::File::create(p)?)?,
                None => write_sweep_csv(&cells, std::io::stdout().lock())?,
            }
        }
        Command::ExportRules {
            checkpoint,
            category,
            seed,
            config,
        } => {
            let cfg = load_config(&config)?;
            let rules = export_rules(&checkpoint, &cfg, parse_category(&category)?, seed)?;
            for (k, rule) in rules {
                println!("{k}\t{rule}");
            }
        }
    }
    Ok(())
}
