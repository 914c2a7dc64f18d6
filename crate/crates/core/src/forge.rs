//! Corrective sample construction and the corpora built from rollouts.
//!
//! A fork match `(j, i*)` becomes one supervised sample: the prompt is the
//! failed trajectory's context at step `j` and the target is the teacher's
//! verbatim response at step `i*`. Samples are written as JSONL behind a
//! one-line header naming the archive root that frame paths resolve against.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fork::MatchSet;
use crate::trajectory::{history_window, GroupRollout, HistoryEntry, Trajectory, Verdict};

pub use crate::sim::{perturb_task, TaskInstance};

pub const DEFAULT_HISTORY_WINDOW: usize = 30;
pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("pairing refers to trajectory `{0}`, which is not in the group")]
    DanglingTrajectory(String),
    #[error("match ({failed_step}, {teacher_step}) is outside trajectory `{trajectory_id}`")]
    DanglingStep {
        trajectory_id: String,
        failed_step: usize,
        teacher_step: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {detail}")]
    BadHeader { path: PathBuf, detail: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("a sample needs at least one response token")]
    EmptyResponse,
    #[error("{found} log-probabilities for a {expected}-token sample")]
    LengthMismatch { expected: usize, found: usize },
    #[error("response log-probability at position {position} is {value}, not a finite value <= 0")]
    InvalidLogprob { position: usize, value: f64 },
}

/// Structured prompt; rendering it for a particular model is the trainer's job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prompt {
    pub instruction: String,
    pub history: Vec<HistoryEntry>,
    /// Frame path relative to the archive root.
    pub current_observation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectiveSample {
    pub task_id: String,
    pub failed_trajectory_id: String,
    pub teacher_trajectory_id: String,
    pub fork_failed_step: usize,
    pub fork_teacher_step: usize,
    pub ssim: f64,
    pub prompt: Prompt,
    pub response: String,
}

/// Prompt for step `t` of `traj`, with frame paths rooted at the trajectory's
/// archive directory (`{trajectory_id}/frames/...`).
pub fn prompt_at(traj: &Trajectory, t: usize, h: usize) -> Option<Prompt> {
    let ctx = history_window(traj, t, h).ok()?;
    let root = |p: &str| format!("{}/{p}", traj.trajectory_id);
    Some(Prompt {
        instruction: traj.instruction.clone(),
        history: ctx
            .entries
            .into_iter()
            .map(|e| HistoryEntry {
                action: e.action,
                observation: root(&e.observation),
            })
            .collect(),
        current_observation: root(&traj.steps[t].observation),
    })
}

/// One sample per fork match, skipping matches where the failed step already
/// produced the teacher's exact response.
pub fn build_samples(
    pairing: &BTreeMap<String, MatchSet>,
    group: &GroupRollout,
    h: usize,
) -> Result<Vec<CorrectiveSample>, ForgeError> {
    let mut out = Vec::new();
    for (failed_id, set) in pairing {
        let fail = group
            .get(failed_id)
            .ok_or_else(|| ForgeError::DanglingTrajectory(failed_id.clone()))?;
        let teacher = group
            .get(&set.teacher_trajectory_id)
            .ok_or_else(|| ForgeError::DanglingTrajectory(set.teacher_trajectory_id.clone()))?;
        for m in &set.matches {
            let dangling = || ForgeError::DanglingStep {
                trajectory_id: failed_id.clone(),
                failed_step: m.failed_step,
                teacher_step: m.teacher_step,
            };
            let failed_step = fail.steps.get(m.failed_step).ok_or_else(dangling)?;
            let teacher_step = teacher.steps.get(m.teacher_step).ok_or_else(dangling)?;
            if failed_step.response_text == teacher_step.response_text {
                continue;
            }
            out.push(CorrectiveSample {
                task_id: group.task_id().to_string(),
                failed_trajectory_id: fail.trajectory_id.clone(),
                teacher_trajectory_id: teacher.trajectory_id.clone(),
                fork_failed_step: m.failed_step,
                fork_teacher_step: m.teacher_step,
                ssim: m.ssim,
                prompt: prompt_at(fail, m.failed_step, h).ok_or_else(dangling)?,
                response: teacher_step.response_text.clone(),
            });
        }
    }
    Ok(out)
}

/// Marks the response tokens of a `prompt ++ response` sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossMask {
    prompt_tokens: usize,
    response_tokens: usize,
}

impl LossMask {
    pub fn new(prompt_tokens: usize, response_tokens: usize) -> Result<Self, LossError> {
        if response_tokens == 0 {
            return Err(LossError::EmptyResponse);
        }
        Ok(Self {
            prompt_tokens,
            response_tokens,
        })
    }

    pub fn prompt_tokens(&self) -> usize {
        self.prompt_tokens
    }

    pub fn response_tokens(&self) -> usize {
        self.response_tokens
    }

    pub fn len(&self) -> usize {
        self.prompt_tokens + self.response_tokens
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len()).map(|p| p >= self.prompt_tokens).collect()
    }
}

/// Response-only negative log-likelihood, averaged over response tokens.
/// Prompt positions are never read.
pub fn grsd_loss(per_token_logprobs: &[f64], mask: &LossMask) -> Result<f64, LossError> {
    if per_token_logprobs.len() != mask.len() {
        return Err(LossError::LengthMismatch {
            expected: mask.len(),
            found: per_token_logprobs.len(),
        });
    }
    let mut sum = 0.0;
    for (offset, &lp) in per_token_logprobs[mask.prompt_tokens..].iter().enumerate() {
        if !(lp.is_finite() && lp <= 0.0) {
            return Err(LossError::InvalidLogprob {
                position: mask.prompt_tokens + offset,
                value: lp,
            });
        }
        sum += lp;
    }
    // subtracting from zero keeps an all-zero response at +0.0 rather than -0.0
    Ok(0.0 - sum / mask.response_tokens as f64)
}

/// Keeps the successful trajectories, in order.
pub fn reject_filter(trajs: Vec<Trajectory>) -> Vec<Trajectory> {
    trajs.into_iter().filter(|t| t.verdict == Verdict::Success).collect()
}

/// One record per step of a successful trajectory, for rejection fine-tuning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RftRecord {
    pub task_id: String,
    pub trajectory_id: String,
    pub step: usize,
    pub prompt: Prompt,
    pub response: String,
}

pub fn rft_records(trajs: &[Trajectory], h: usize) -> Vec<RftRecord> {
    trajs
        .iter()
        .filter(|t| t.verdict == Verdict::Success)
        .flat_map(|t| {
            t.steps.iter().map(move |s| RftRecord {
                task_id: t.task_id.clone(),
                trajectory_id: t.trajectory_id.clone(),
                step: s.index,
                prompt: prompt_at(t, s.index, h).expect("index within trajectory"),
                response: s.response_text.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub archive_root: String,
}

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn jsonl<T: Serialize>(archive_root: &str, records: &[T]) -> Vec<u8> {
    let header = DatasetHeader {
        format_version: DATASET_FORMAT_VERSION,
        archive_root: archive_root.to_string(),
    };
    let mut buf = serde_json::to_vec(&header).expect("header serializes");
    buf.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    buf
}

/// Writes the header line then one sample per line. Returns the number of
/// sample lines.
pub fn emit_dataset(samples: &[CorrectiveSample], archive_root: &str, out: &Path) -> Result<usize, ForgeError> {
    write_jsonl(samples, archive_root, out)
}

pub fn write_jsonl<T: Serialize>(records: &[T], archive_root: &str, out: &Path) -> Result<usize, ForgeError> {
    write_atomic(out, &jsonl(archive_root, records)).map_err(|source| ForgeError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(records.len())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(DatasetHeader, Vec<T>), ForgeError> {
    let io = |source| ForgeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(fs::File::open(path).map_err(io)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| ForgeError::BadHeader {
        path: path.to_path_buf(),
        detail: "file is empty".into(),
    })?;
    let header: DatasetHeader = serde_json::from_str(&first.map_err(io)?).map_err(|source| ForgeError::Parse {
        path: path.to_path_buf(),
        line: 1,
        source,
    })?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(ForgeError::BadHeader {
            path: path.to_path_buf(),
            detail: format!("unsupported format_version {}", header.format_version),
        });
    }
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        records.push(serde_json::from_str(&line).map_err(|source| ForgeError::Parse {
            path: path.to_path_buf(),
            line: n + 2,
            source,
        })?);
    }
    Ok((header, records))
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<CorrectiveSample>), ForgeError> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fork::{pair_group, DetectConfig, ForkMatch};
    use crate::sim::{fault_policy, optimal_policy, parse_tool_call, scripted_rollout};
    use crate::trajectory::tests::sample_trajectory;
    use proptest::prelude::*;

    fn toggle_group(seed: u64, fault_step: usize) -> GroupRollout {
        let task = perturb_task("toggle", seed).unwrap();
        let good = scripted_rollout(&task, &optimal_policy(&task).unwrap(), "a-good").unwrap();
        let bad = scripted_rollout(&task, &fault_policy(&task, fault_step).unwrap(), "b-bad").unwrap();
        GroupRollout::new(&task.task_id, &task.instruction, vec![good, bad]).unwrap()
    }

    #[test]
    fn first_step_correction() {
        let group = toggle_group(0, 0);
        let pairing = pair_group(&group, &DetectConfig::default()).unwrap();
        let samples = build_samples(&pairing, &group, DEFAULT_HISTORY_WINDOW).unwrap();
        let s = &samples[0];
        assert_eq!((s.fork_failed_step, s.fork_teacher_step), (0, 0));
        assert!(s.prompt.history.is_empty());
        assert_eq!(s.prompt.current_observation, "b-bad/frames/000.pgm");
        let Some(crate::trajectory::Action::Swipe { y, y2, .. }) = parse_tool_call(&s.response) else {
            panic!("teacher response is not a swipe: {}", s.response)
        };
        assert!(y2 > y, "teacher swipes down");
        let bad = group.get("b-bad").unwrap();
        assert!(matches!(
            bad.steps[0].action,
            crate::trajectory::Action::Swipe { y, y2, .. } if y2 < y
        ));
    }

    #[test]
    fn maze_fork_carries_failed_context() {
        let task = perturb_task("maze", 42).unwrap();
        let opt = optimal_policy(&task).unwrap();
        let k = opt.base.len() - 2;
        let good = scripted_rollout(&task, &opt, "good").unwrap();
        let bad = scripted_rollout(&task, &fault_policy(&task, k).unwrap(), "bad").unwrap();
        let group = GroupRollout::new(&task.task_id, &task.instruction, vec![good.clone(), bad.clone()]).unwrap();
        let pairing = pair_group(&group, &DetectConfig::default()).unwrap();
        let samples = build_samples(&pairing, &group, 3).unwrap();
        let s = samples.iter().find(|s| s.fork_failed_step == k).unwrap();
        assert_eq!(s.response, good.steps[k].response_text);
        assert_eq!(parse_tool_call(&s.response), Some(opt.base[k].clone()));
        assert_eq!(s.prompt.history.len(), k.min(3));
        let last = s.prompt.history.last().unwrap();
        assert_eq!(last.observation, format!("bad/frames/{:03}.pgm", k - 1));
    }

    #[test]
    fn identical_responses_are_dropped() {
        let t = sample_trajectory(3);
        let mut f = t.clone();
        f.trajectory_id = "f".into();
        f.verdict = Verdict::Failure;
        let group = GroupRollout::new(&t.task_id, &t.instruction, vec![t.clone(), f]).unwrap();
        let mut pairing = BTreeMap::new();
        pairing.insert(
            "f".to_string(),
            MatchSet {
                teacher_trajectory_id: t.trajectory_id.clone(),
                failed_trajectory_id: "f".into(),
                matches: vec![ForkMatch {
                    failed_step: 2,
                    teacher_step: 2,
                    ssim: 1.0,
                }],
            },
        );
        assert!(build_samples(&pairing, &group, 30).unwrap().is_empty());

        pairing.get_mut("f").unwrap().teacher_trajectory_id = "ghost".into();
        assert!(matches!(
            build_samples(&pairing, &group, 30),
            Err(ForgeError::DanglingTrajectory(id)) if id == "ghost"
        ));
    }

    #[test]
    fn loss_examples() {
        let m = LossMask::new(0, 2).unwrap();
        assert_eq!(grsd_loss(&[-1.0, -1.0], &m), Ok(1.0));
        let m = LossMask::new(1, 2).unwrap();
        assert_eq!(grsd_loss(&[-0.5, -1.0, -3.0], &m), Ok(2.0));
        assert_eq!(m.bits(), [false, true, true]);
        assert_eq!(LossMask::new(4, 0), Err(LossError::EmptyResponse));
        assert!(matches!(grsd_loss(&[-1.0], &m), Err(LossError::LengthMismatch { .. })));
        assert!(matches!(
            grsd_loss(&[0.0, 0.5, -1.0], &m),
            Err(LossError::InvalidLogprob { position: 1, .. })
        ));
        let zero = grsd_loss(&[-7.0, 0.0, 0.0], &m).unwrap();
        assert!(zero == 0.0 && zero.is_sign_positive());
    }

    #[test]
    fn reject_filter_keeps_successes_in_order() {
        let mk = |id: &str, v| {
            let mut t = sample_trajectory(2);
            t.trajectory_id = id.into();
            t.verdict = v;
            t
        };
        let out = reject_filter(vec![
            mk("a", Verdict::Success),
            mk("b", Verdict::Failure),
            mk("c", Verdict::Success),
        ]);
        let ids: Vec<_> = out.iter().map(|t| t.trajectory_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert!(reject_filter(vec![]).is_empty());
        assert!(reject_filter(vec![mk("x", Verdict::Failure)]).is_empty());
        assert_eq!(reject_filter(out.clone()), out);
    }

    #[test]
    fn dataset_round_trip_and_determinism() {
        let group = toggle_group(3, 1);
        let pairing = pair_group(&group, &DetectConfig::default()).unwrap();
        let samples = build_samples(&pairing, &group, 30).unwrap();
        assert!(!samples.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        assert_eq!(emit_dataset(&samples, "archives", &a).unwrap(), samples.len());
        emit_dataset(&samples, "archives", &b).unwrap();
        let bytes = fs::read(&a).unwrap();
        assert_eq!(bytes, fs::read(&b).unwrap());
        assert_eq!(bytes.iter().filter(|&&c| c == b'\n').count(), samples.len() + 1);
        let (header, back) = read_dataset(&a).unwrap();
        assert_eq!(header.archive_root, "archives");
        assert_eq!(back, samples);

        let empty = dir.path().join("empty.jsonl");
        assert_eq!(emit_dataset(&[], "archives", &empty).unwrap(), 0);
        assert_eq!(fs::read_to_string(&empty).unwrap().lines().count(), 1);
    }

    #[test]
    fn rft_records_cover_successful_steps() {
        let group = toggle_group(2, 0);
        let recs = rft_records(group.trajectories(), 30);
        let good = group.get("a-good").unwrap();
        assert_eq!(recs.len(), good.len());
        assert!(recs.iter().all(|r| r.trajectory_id == "a-good"));
        assert_eq!(recs[1].prompt.history.len(), 1);
    }

    proptest! {
        #[test]
        fn loss_ignores_prompt_positions(
            prompt in proptest::collection::vec(-50.0f64..50.0, 0..16),
            other in proptest::collection::vec(-50.0f64..50.0, 16),
            response in proptest::collection::vec(-20.0f64..=0.0, 1..16),
        ) {
            let mask = LossMask::new(prompt.len(), response.len()).unwrap();
            let a: Vec<f64> = prompt.iter().chain(&response).copied().collect();
            let b: Vec<f64> = other[..prompt.len()].iter().chain(&response).copied().collect();
            let la = grsd_loss(&a, &mask).unwrap();
            prop_assert_eq!(la, grsd_loss(&b, &mask).unwrap());
            prop_assert!(la >= 0.0);
            prop_assert_eq!(mask.bits().iter().filter(|&&m| m).count(), response.len());
        }
    }
}
