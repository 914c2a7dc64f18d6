//! End-to-end curation run: perturb seed tasks, roll out scripted groups,
//! keep successes for the RFT corpus, pair failures with the group teacher,
//! and forge the GRSD corpus.
//!
//! Output layout under the run directory:
//!
//! ```text
//! archives/<trajectory_id>/manifest.json + frames/NNN.pgm
//! rft.jsonl     header line, then one record per successful step
//! grsd.jsonl    header line, then one corrective sample per line
//! report.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forge::{self, build_samples, reject_filter, rft_records, write_atomic, CorrectiveSample, RftRecord};
use crate::fork::{pair_group, DetectConfig, ForkError};
use crate::imaging::{MatchConfig, PreprocessConfig};
use crate::rl::ClipConfig;
use crate::sim::rng::SeededRng;
use crate::sim::{
    fault_policy, fault_steps, optimal_policy, perturb_task, scripted_rollout_with, template, SimError,
    DEFAULT_MAX_TURNS,
};
use crate::trajectory::{save_trajectory, ArchiveError, GroupError, GroupRollout, Trajectory};

const STREAM_FAULTS: u64 = 0x6661_756c;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSource {
    pub template: String,
    pub count: usize,
    #[serde(default)]
    pub seed_start: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    /// Rollouts per task (G).
    pub group_size: usize,
    /// How many of the G rollouts get an injected mistake.
    pub faulty_per_group: usize,
    pub max_turns: usize,
    /// Seeds which rollouts are faulty and at which step.
    pub fault_seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            faulty_per_group: 4,
            max_turns: DEFAULT_MAX_TURNS,
            fault_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeConfig {
    pub history_window: usize,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            history_window: forge::DEFAULT_HISTORY_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tasks: Vec<TaskSource>,
    pub rollout: RolloutConfig,
    pub preprocess: PreprocessConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub forge: ForgeConfig,
    pub clip: ClipConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tasks: vec![TaskSource {
                template: "maze".into(),
                count: 10,
                seed_start: 0,
            }],
            rollout: RolloutConfig::default(),
            preprocess: PreprocessConfig::default(),
            matching: MatchConfig::default(),
            forge: ForgeConfig::default(),
            clip: ClipConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let err = |detail: String| PipelineError::Config {
            path: path.to_path_buf(),
            detail,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_toml(&text).map_err(err)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn detect(&self) -> DetectConfig {
        DetectConfig {
            matching: self.matching,
            preprocess: self.preprocess,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for t in &self.tasks {
            template(&t.template).map_err(|e| format!("tasks: {e}"))?;
        }
        let r = &self.rollout;
        if r.group_size == 0 {
            return Err("rollout.group_size must be at least 1".into());
        }
        if r.faulty_per_group > r.group_size {
            return Err(format!(
                "rollout.faulty_per_group ({}) exceeds rollout.group_size ({})",
                r.faulty_per_group, r.group_size
            ));
        }
        if r.max_turns == 0 {
            return Err("rollout.max_turns must be positive".into());
        }
        self.detect().validate().map_err(|e| e.to_string())?;
        self.clip.validate().map_err(|e| format!("clip: {e}"))?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config {path}: {detail}")]
    Config { path: PathBuf, detail: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("task {task_id}: {source}")]
    Sim {
        task_id: String,
        #[source]
        source: SimError,
    },
    #[error("task {task_id}: {source}")]
    Fork {
        task_id: String,
        #[source]
        source: ForkError,
    },
    #[error("task {task_id}: {source}")]
    Group {
        task_id: String,
        #[source]
        source: GroupError,
    },
    #[error(transparent)]
    Forge(#[from] forge::ForgeError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub tasks_run: usize,
    pub groups: usize,
    pub successes: usize,
    pub failures: usize,
    /// Teacher per task, `null` where the group had no success.
    pub teacher_ids: BTreeMap<String, Option<String>>,
    pub fork_points_found: usize,
    pub samples_emitted: usize,
    pub rft_records: usize,
    /// Per task: failed step index -> number of fork matches at that step.
    pub fork_histograms: BTreeMap<String, BTreeMap<usize, usize>>,
}

struct TaskOutcome {
    task_id: String,
    trajectories: Vec<Trajectory>,
    teacher: Option<String>,
    fork_points: usize,
    histogram: BTreeMap<usize, usize>,
    samples: Vec<CorrectiveSample>,
    rft: Vec<RftRecord>,
}

/// Rolls out one group: `group_size` copies of the optimal policy, of which
/// `faulty_per_group` (chosen by the fault seed) carry one mistake.
pub fn rollout_group(
    template_id: &str,
    seed: u64,
    cfg: &RolloutConfig,
) -> Result<(String, GroupRollout), PipelineError> {
    let task = perturb_task(template_id, seed).map_err(|source| PipelineError::Sim {
        task_id: format!("{template_id}-{seed}"),
        source,
    })?;
    let sim_err = |source| PipelineError::Sim {
        task_id: task.task_id.clone(),
        source,
    };
    let optimal = optimal_policy(&task).map_err(sim_err)?;
    let steps = fault_steps(&task).map_err(sim_err)?;

    let mut rng = SeededRng::new(cfg.fault_seed ^ seed.rotate_left(32), STREAM_FAULTS);
    let mut order: Vec<usize> = (0..cfg.group_size).collect();
    // partial Fisher-Yates: the first `faulty_per_group` slots are faulty
    for i in 0..cfg.faulty_per_group.min(order.len()) {
        let j = i + rng.below((order.len() - i) as u32) as usize;
        order.swap(i, j);
    }
    let mut fault_at = vec![None; cfg.group_size];
    for &g in &order[..cfg.faulty_per_group] {
        if !steps.is_empty() {
            fault_at[g] = Some(steps.start + rng.below(steps.len() as u32) as usize);
        }
    }

    let mut trajs = Vec::with_capacity(cfg.group_size);
    for (g, k) in fault_at.into_iter().enumerate() {
        let policy = match k {
            Some(k) => fault_policy(&task, k).map_err(sim_err)?,
            None => optimal.clone(),
        };
        let id = format!("{}-r{g}", task.task_id);
        trajs.push(scripted_rollout_with(&task, &policy, &id, cfg.max_turns).map_err(sim_err)?);
    }
    let group = GroupRollout::new(&task.task_id, &task.instruction, trajs).map_err(|source| PipelineError::Group {
        task_id: task.task_id.clone(),
        source,
    })?;
    Ok((task.task_id, group))
}

fn run_task(template_id: &str, seed: u64, cfg: &PipelineConfig) -> Result<TaskOutcome, PipelineError> {
    let (task_id, group) = rollout_group(template_id, seed, &cfg.rollout)?;
    let pairing = pair_group(&group, &cfg.detect()).map_err(|source| PipelineError::Fork {
        task_id: task_id.clone(),
        source,
    })?;
    let mut histogram = BTreeMap::new();
    for m in pairing.values().flat_map(|s| &s.matches) {
        *histogram.entry(m.failed_step).or_insert(0) += 1;
    }
    let fork_points = pairing.values().map(|s| s.matches.len()).sum();
    let samples = build_samples(&pairing, &group, cfg.forge.history_window)?;
    let teacher = crate::fork::select_teacher(&group).map(|t| t.trajectory_id.clone());
    let trajectories = group.trajectories().to_vec();
    let rft = rft_records(&reject_filter(trajectories.clone()), cfg.forge.history_window);
    Ok(TaskOutcome {
        task_id,
        trajectories,
        teacher,
        fork_points,
        histogram,
        samples,
        rft,
    })
}

/// Runs the whole pipeline with at most `jobs` worker threads (0 means one
/// per core). Nothing is written until every task has succeeded, and each
/// output is renamed into place whole.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path, jobs: usize) -> Result<PipelineReport, PipelineError> {
    cfg.validate().map_err(PipelineError::InvalidConfig)?;
    let jobs_list: Vec<(String, u64)> = cfg
        .tasks
        .iter()
        .flat_map(|t| (0..t.count as u64).map(move |i| (t.template.clone(), t.seed_start + i)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    let mut outcomes: Vec<TaskOutcome> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|(t, seed)| run_task(t, *seed, cfg))
            .collect::<Result<_, _>>()
    })?;
    outcomes.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    let mut report = PipelineReport {
        tasks_run: outcomes.len(),
        groups: outcomes.len(),
        successes: 0,
        failures: 0,
        teacher_ids: BTreeMap::new(),
        fork_points_found: 0,
        samples_emitted: 0,
        rft_records: 0,
        fork_histograms: BTreeMap::new(),
    };
    let mut samples = Vec::new();
    let mut rft = Vec::new();
    for o in &mut outcomes {
        let wins = o.trajectories.iter().filter(|t| t.is_success()).count();
        report.successes += wins;
        report.failures += o.trajectories.len() - wins;
        report.teacher_ids.insert(o.task_id.clone(), o.teacher.clone());
        report.fork_points_found += o.fork_points;
        report
            .fork_histograms
            .insert(o.task_id.clone(), std::mem::take(&mut o.histogram));
        samples.append(&mut o.samples);
        rft.append(&mut o.rft);
    }
    samples.sort_by(|a, b| {
        (&a.task_id, &a.failed_trajectory_id, a.fork_failed_step).cmp(&(
            &b.task_id,
            &b.failed_trajectory_id,
            b.fork_failed_step,
        ))
    });
    report.samples_emitted = samples.len();
    report.rft_records = rft.len();

    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;

    // Archives go to a scratch directory first and replace the old tree in
    // one rename.
    let archives = out_dir.join("archives");
    let staging = tempfile::Builder::new()
        .prefix(".archives-")
        .tempdir_in(out_dir)
        .map_err(io(out_dir))?;
    for t in outcomes.iter().flat_map(|o| &o.trajectories) {
        save_trajectory(t, &staging.path().join(&t.trajectory_id))?;
    }
    if archives.exists() {
        fs::remove_dir_all(&archives).map_err(io(&archives))?;
    }
    fs::rename(staging.keep(), &archives).map_err(io(&archives))?;

    forge::write_jsonl(&rft, "archives", &out_dir.join("rft.jsonl"))?;
    forge::emit_dataset(&samples, "archives", &out_dir.join("grsd.jsonl"))?;
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    let report_path = out_dir.join("report.json");
    write_atomic(&report_path, &json).map_err(io(&report_path))?;
    Ok(report)
}
