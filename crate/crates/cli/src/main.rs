use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use forkpoint::forge::{self, build_samples, emit_dataset, reject_filter, rft_records};
use forkpoint::fork::{detect_fork_points, pair_group, DetectConfig};
use forkpoint::pipeline::{run_pipeline, PipelineConfig};
use forkpoint::rl::{clipped_surrogate, gae, grpo_advantages, ClipConfig};
use forkpoint::sim::{fault_policy, optimal_policy, perturb_task, scripted_rollout, TEMPLATES};
use forkpoint::trajectory::{group_by_task, load_archive_root, load_trajectory, save_trajectory};

/// Fork-point curation for GUI-agent trajectory groups.
#[derive(Parser)]
#[command(name = "forkpoint", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulator utilities.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Keep only successful trajectories and emit the rejection fine-tuning corpus.
    Filter(FilterArgs),
    /// Find fork points between one successful and one failed trajectory.
    Detect(DetectArgs),
    /// Pair every group under an archive root and emit corrective samples.
    Forge(ForgeArgs),
    /// Run simulate, filter, detect and forge end to end from a config file.
    Pipeline(PipelineArgs),
    /// Reference advantage and surrogate-objective calculations.
    Advantage(AdvantageArgs),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Roll out a scripted policy and write the trajectory archive.
    Run(SimRunArgs),
    /// List registered task templates and their parameter ranges.
    Templates,
}

#[derive(Args)]
struct SimRunArgs {
    /// Task template (`maze` or `toggle`).
    #[arg(long)]
    template: String,
    /// Seed the task parameters are drawn from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inject one wrong action at this step; the run then fails.
    #[arg(long)]
    fault_step: Option<usize>,
    /// Trajectory id; defaults to `<task_id>-opt` or `<task_id>-fault<k>`.
    #[arg(long)]
    id: Option<String>,
    /// Archive directory to create.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    /// Directory holding one archive per trajectory.
    #[arg(long)]
    archives: PathBuf,
    /// Where to write the per-step RFT corpus (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Number of previous steps included in each prompt's history.
    #[arg(long, default_value_t = forge::DEFAULT_HISTORY_WINDOW)]
    history_window: usize,
}

#[derive(Args)]
struct DetectArgs {
    /// Archive of the successful (teacher) trajectory.
    #[arg(long)]
    success: PathBuf,
    /// Archive of the failed trajectory.
    #[arg(long)]
    failed: PathBuf,
    /// Pipeline TOML whose [match] and [preprocess] sections override the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the match set here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ForgeArgs {
    /// Directory holding one archive per trajectory; groups are formed by task id.
    #[arg(long)]
    archives: PathBuf,
    /// Where to write the corrective-sample corpus (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Pipeline TOML supplying [match], [preprocess] and [forge] settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline TOML (tasks, rollout, preprocess, match, forge, clip).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for archives, corpora and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["grpo", "gae", "surrogate"])))]
struct AdvantageArgs {
    /// Group-normalised advantages for these comma-separated rewards (needs at least 2).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    grpo: Option<Vec<f64>>,
    /// Generalized advantage estimation over --rewards and --values.
    #[arg(long, requires_all = ["rewards", "values"])]
    gae: bool,
    /// Mean clipped surrogate over --ratios and --advantages.
    #[arg(long, requires_all = ["ratios", "advantages"])]
    surrogate: bool,
    /// Per-step rewards for --gae.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    rewards: Option<Vec<f64>>,
    /// Per-state values for --gae, one more than rewards (last is the bootstrap value).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    values: Option<Vec<f64>>,
    /// Discount factor for --gae.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Trace-decay factor for --gae.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Importance ratios for --surrogate.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    ratios: Option<Vec<f64>>,
    /// Advantages for --surrogate.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    advantages: Option<Vec<f64>>,
    /// Lower clip offset: ratios are clipped at 1 - eps_low.
    #[arg(long, default_value_t = ClipConfig::default().eps_low)]
    eps_low: f64,
    /// Upper clip offset: ratios are clipped at 1 + eps_high.
    #[arg(long, default_value_t = ClipConfig::default().eps_high)]
    eps_high: f64,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => forge::write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn sim_run(a: SimRunArgs) -> Result<()> {
    let task = perturb_task(&a.template, a.seed)?;
    let (policy, default_id) = match a.fault_step {
        Some(k) => (fault_policy(&task, k)?, format!("{}-fault{k}", task.task_id)),
        None => (optimal_policy(&task)?, format!("{}-opt", task.task_id)),
    };
    let id = a.id.unwrap_or(default_id);
    let traj = scripted_rollout(&task, &policy, &id)?;
    save_trajectory(&traj, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    emit(
        &json!({
            "trajectory_id": traj.trajectory_id,
            "task": task,
            "verdict": traj.verdict,
            "steps": traj.len(),
            "fault_step": a.fault_step,
            "archive": a.out,
        }),
        None,
    )
}

fn filter(a: FilterArgs) -> Result<()> {
    let trajs = load_archive_root(&a.archives)?;
    let total = trajs.len();
    let kept = reject_filter(trajs);
    let records = rft_records(&kept, a.history_window);
    let root = a.archives.to_string_lossy();
    forge::write_jsonl(&records, &root, &a.out)?;
    emit(
        &json!({
            "trajectories": total,
            "kept": kept.iter().map(|t| &t.trajectory_id).collect::<Vec<_>>(),
            "records": records.len(),
            "out": a.out,
        }),
        None,
    )
}

fn detect(a: DetectArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?.detect();
    let succ = load_trajectory(&a.success).with_context(|| format!("loading {}", a.success.display()))?;
    let fail = load_trajectory(&a.failed).with_context(|| format!("loading {}", a.failed.display()))?;
    let set = detect_fork_points(&succ, &fail, &cfg)?;
    emit(&set, a.out.as_deref())
}

fn forge_cmd(a: ForgeArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let detect_cfg: DetectConfig = cfg.detect();
    let groups = group_by_task(load_archive_root(&a.archives)?)?;
    let mut samples = Vec::new();
    let mut fork_points = 0;
    for g in &groups {
        let pairing = pair_group(g, &detect_cfg).with_context(|| format!("task {}", g.task_id()))?;
        fork_points += pairing.values().map(|s| s.matches.len()).sum::<usize>();
        samples.extend(build_samples(&pairing, g, cfg.forge.history_window)?);
    }
    samples.sort_by(|x, y| {
        (&x.task_id, &x.failed_trajectory_id, x.fork_failed_step).cmp(&(
            &y.task_id,
            &y.failed_trajectory_id,
            y.fork_failed_step,
        ))
    });
    let root = a.archives.to_string_lossy();
    let n = emit_dataset(&samples, &root, &a.out)?;
    emit(
        &json!({"groups": groups.len(), "fork_points_found": fork_points, "samples_emitted": n, "out": a.out}),
        None,
    )
}

fn advantage(a: AdvantageArgs) -> Result<()> {
    let value = if let Some(rewards) = &a.grpo {
        let out = grpo_advantages(rewards)?;
        json!({"advantages": out.advantages, "degenerate": out.degenerate})
    } else if a.gae {
        let (Some(r), Some(v)) = (&a.rewards, &a.values) else {
            bail!("--gae needs --rewards and --values")
        };
        json!({"advantages": gae(r, v, a.gamma, a.lambda)?})
    } else {
        let (Some(r), Some(adv)) = (&a.ratios, &a.advantages) else {
            bail!("--surrogate needs --ratios and --advantages")
        };
        let cfg = ClipConfig {
            eps_low: a.eps_low,
            eps_high: a.eps_high,
        };
        json!({"objective": clipped_surrogate(r, adv, &cfg)?})
    };
    emit(&value, a.out.as_deref())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sim(SimCommand::Run(a)) => sim_run(a),
        Command::Sim(SimCommand::Templates) => emit(&TEMPLATES, None),
        Command::Filter(a) => filter(a),
        Command::Detect(a) => detect(a),
        Command::Forge(a) => forge_cmd(a),
        Command::Pipeline(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            let report = run_pipeline(&cfg, &a.out, a.jobs)?;
            emit(&report, None)
        }
        Command::Advantage(a) => advantage(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn advantage_modes_are_exclusive() {
        assert!(Cli::try_parse_from(["forkpoint", "advantage", "--grpo", "1,0", "--gae"]).is_err());
        assert!(Cli::try_parse_from(["forkpoint", "advantage"]).is_err());
        assert!(Cli::try_parse_from(["forkpoint", "advantage", "--grpo=-1,0.5"]).is_ok());
        assert!(Cli::try_parse_from(["forkpoint", "advantage", "--gae", "--rewards", "1"]).is_err());
    }
}
