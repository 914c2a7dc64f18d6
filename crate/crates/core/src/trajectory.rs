//! Trajectory data model, the on-disk archive format and history windows.
//!
//! An archive is one directory per trajectory:
//!
//! ```text
//! <archive>/manifest.json
//! <archive>/frames/000.pgm
//! <archive>/frames/001.pgm
//! ...
//! ```
//!
//! `manifest.json` carries `"format_version": 1` plus the trajectory fields;
//! each step names its frame by a path relative to the archive directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pnm::{Frame, PnmError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// One entry of the mobile action space. Coordinates are absolute pixels in
/// the frame's native resolution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", from = "ActionRepr")]
pub enum Action {
    Click { x: u32, y: u32 },
    LongPress { x: u32, y: u32 },
    Swipe { x: u32, y: u32, x2: u32, y2: u32 },
    OpenApp { app_name: String },
    InputText { text: String },
    KeyboardEnter,
    NavigateBack,
    NavigateHome,
    Wait,
    Status { goal_status: String },
    Answer { text: String },
}

// Serde ignores `deny_unknown_fields` on unit variants of an internally
// tagged enum, so parsing goes through a mirror whose parameterless kinds are
// empty struct variants.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ActionRepr {
    Click { x: u32, y: u32 },
    LongPress { x: u32, y: u32 },
    Swipe { x: u32, y: u32, x2: u32, y2: u32 },
    OpenApp { app_name: String },
    InputText { text: String },
    KeyboardEnter {},
    NavigateBack {},
    NavigateHome {},
    Wait {},
    Status { goal_status: String },
    Answer { text: String },
}

impl From<ActionRepr> for Action {
    fn from(r: ActionRepr) -> Self {
        match r {
            ActionRepr::Click { x, y } => Action::Click { x, y },
            ActionRepr::LongPress { x, y } => Action::LongPress { x, y },
            ActionRepr::Swipe { x, y, x2, y2 } => Action::Swipe { x, y, x2, y2 },
            ActionRepr::OpenApp { app_name } => Action::OpenApp { app_name },
            ActionRepr::InputText { text } => Action::InputText { text },
            ActionRepr::KeyboardEnter {} => Action::KeyboardEnter,
            ActionRepr::NavigateBack {} => Action::NavigateBack,
            ActionRepr::NavigateHome {} => Action::NavigateHome,
            ActionRepr::Wait {} => Action::Wait,
            ActionRepr::Status { goal_status } => Action::Status { goal_status },
            ActionRepr::Answer { text } => Action::Answer { text },
        }
    }
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Click { .. } => "click",
            Action::LongPress { .. } => "long_press",
            Action::Swipe { .. } => "swipe",
            Action::OpenApp { .. } => "open_app",
            Action::InputText { .. } => "input_text",
            Action::KeyboardEnter => "keyboard_enter",
            Action::NavigateBack => "navigate_back",
            Action::NavigateHome => "navigate_home",
            Action::Wait => "wait",
            Action::Status { .. } => "status",
            Action::Answer { .. } => "answer",
        }
    }

    pub fn is_status(&self) -> bool {
        matches!(self, Action::Status { .. })
    }

    /// Every pixel coordinate the action references, as (x, y) points.
    pub fn points(&self) -> Vec<(u32, u32)> {
        match *self {
            Action::Click { x, y } | Action::LongPress { x, y } => vec![(x, y)],
            Action::Swipe { x, y, x2, y2 } => vec![(x, y), (x2, y2)],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Success,
    Failure,
}

impl Verdict {
    /// Binary trajectory-level reward.
    pub fn reward(self) -> f64 {
        match self {
            Verdict::Success => 1.0,
            Verdict::Failure => 0.0,
        }
    }
}

/// Observation, action and model response at step `index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub index: usize,
    /// Frame path relative to the archive directory.
    pub observation: String,
    pub frame: Frame,
    pub action: Action,
    /// Verbatim model output for the step (reasoning plus tool call).
    pub response_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub trajectory_id: String,
    pub task_id: String,
    pub instruction: String,
    pub verdict: Verdict,
    pub frame_width: usize,
    pub frame_height: usize,
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// Index of the last step, `None` for an empty trajectory.
    pub fn final_step_index(&self) -> Option<usize> {
        self.steps.len().checked_sub(1)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_success(&self) -> bool {
        self.verdict == Verdict::Success
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    EmptyTrajectory,
    NonContiguousIndex,
    StatusBeforeFinalStep,
    CoordinateOutOfBounds,
    FrameDimensionMismatch,
    UnsafeObservationPath,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::EmptyTrajectory => "empty trajectory",
            Rule::NonContiguousIndex => "non-contiguous index",
            Rule::StatusBeforeFinalStep => "status before final step",
            Rule::CoordinateOutOfBounds => "coordinate out of bounds",
            Rule::FrameDimensionMismatch => "frame dimension mismatch",
            Rule::UnsafeObservationPath => "unsafe observation path",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Position of the offending step in `steps`, if the rule is step-local.
    pub step: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(step) => write!(f, "step {step}: {} ({})", self.rule, self.detail),
            None => write!(f, "{} ({})", self.rule, self.detail),
        }
    }
}

/// Checks every structural invariant and returns the violations found.
/// An empty list means the trajectory is well formed.
pub fn validate_trajectory(traj: &Trajectory) -> Vec<Violation> {
    let mut out = Vec::new();
    if traj.steps.is_empty() {
        out.push(Violation {
            step: None,
            rule: Rule::EmptyTrajectory,
            detail: "trajectory has no steps".into(),
        });
        return out;
    }
    let last = traj.steps.len() - 1;
    for (pos, step) in traj.steps.iter().enumerate() {
        let expected = if pos == 0 { 0 } else { traj.steps[pos - 1].index + 1 };
        if step.index != expected {
            out.push(Violation {
                step: Some(step.index),
                rule: Rule::NonContiguousIndex,
                detail: format!("expected index {expected}, found {}", step.index),
            });
        }
        if step.action.is_status() && pos != last {
            out.push(Violation {
                step: Some(step.index),
                rule: Rule::StatusBeforeFinalStep,
                detail: format!("status action at position {pos} of {}", last + 1),
            });
        }
        for (x, y) in step.action.points() {
            if x as usize >= traj.frame_width || y as usize >= traj.frame_height {
                out.push(Violation {
                    step: Some(step.index),
                    rule: Rule::CoordinateOutOfBounds,
                    detail: format!("({x}, {y}) outside {}x{} frame", traj.frame_width, traj.frame_height),
                });
            }
        }
        if step.frame.width() != traj.frame_width || step.frame.height() != traj.frame_height {
            out.push(Violation {
                step: Some(step.index),
                rule: Rule::FrameDimensionMismatch,
                detail: format!(
                    "frame is {}x{}, manifest declares {}x{}",
                    step.frame.width(),
                    step.frame.height(),
                    traj.frame_width,
                    traj.frame_height
                ),
            });
        }
        if !is_safe_relative(&step.observation) {
            out.push(Violation {
                step: Some(step.index),
                rule: Rule::UnsafeObservationPath,
                detail: format!("{:?} must be a relative path inside the archive", step.observation),
            });
        }
    }
    out
}

fn is_safe_relative(path: &str) -> bool {
    !path.is_empty() && Path::new(path).components().all(|c| matches!(c, Component::Normal(_)))
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("missing manifest {0}")]
    MissingManifest(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("schema violation in {path}: {source}")]
    Schema { path: PathBuf, source: serde_json::Error },
    #[error("{path}: unsupported format_version {found}")]
    UnsupportedVersion { path: PathBuf, found: u32 },
    #[error("missing frame {0}")]
    MissingFrame(PathBuf),
    #[error("corrupt frame {path}: {source}")]
    CorruptFrame { path: PathBuf, source: PnmError },
    #[error("invalid trajectory {path}: {}", join_violations(.violations))]
    Invalid { path: PathBuf, violations: Vec<Violation> },
}

fn join_violations(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    trajectory_id: String,
    task_id: String,
    instruction: String,
    verdict: Verdict,
    frame_width: usize,
    frame_height: usize,
    steps: Vec<ManifestStep>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestStep {
    index: usize,
    observation: String,
    action: Action,
    response_text: String,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a trajectory archive and checks every invariant.
pub fn load_trajectory(archive_dir: &Path) -> Result<Trajectory, ArchiveError> {
    let manifest_path = archive_dir.join(MANIFEST_FILE);
    let raw = match fs::read(&manifest_path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ArchiveError::MissingManifest(manifest_path)),
        Err(e) => return Err(io_err(&manifest_path)(e)),
    };
    let manifest: Manifest = serde_json::from_slice(&raw).map_err(|source| ArchiveError::Schema {
        path: manifest_path.clone(),
        source,
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ArchiveError::UnsupportedVersion {
            path: manifest_path,
            found: manifest.format_version,
        });
    }

    let mut steps = Vec::with_capacity(manifest.steps.len());
    for step in manifest.steps {
        if !is_safe_relative(&step.observation) {
            return Err(ArchiveError::Invalid {
                path: manifest_path,
                violations: vec![Violation {
                    step: Some(step.index),
                    rule: Rule::UnsafeObservationPath,
                    detail: format!("{:?}", step.observation),
                }],
            });
        }
        let frame_path = archive_dir.join(&step.observation);
        let bytes = match fs::read(&frame_path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ArchiveError::MissingFrame(frame_path)),
            Err(e) => return Err(io_err(&frame_path)(e)),
        };
        let frame = Frame::decode(&bytes).map_err(|source| ArchiveError::CorruptFrame {
            path: frame_path.clone(),
            source,
        })?;
        steps.push(Step {
            index: step.index,
            observation: step.observation,
            frame,
            action: step.action,
            response_text: step.response_text,
        });
    }

    let traj = Trajectory {
        trajectory_id: manifest.trajectory_id,
        task_id: manifest.task_id,
        instruction: manifest.instruction,
        verdict: manifest.verdict,
        frame_width: manifest.frame_width,
        frame_height: manifest.frame_height,
        steps,
    };
    let violations = validate_trajectory(&traj);
    if !violations.is_empty() {
        return Err(ArchiveError::Invalid {
            path: manifest_path,
            violations,
        });
    }
    Ok(traj)
}

/// Writes `traj` as an archive under `archive_dir`, creating directories as
/// needed. Invalid trajectories are refused.
pub fn save_trajectory(traj: &Trajectory, archive_dir: &Path) -> Result<(), ArchiveError> {
    let manifest_path = archive_dir.join(MANIFEST_FILE);
    let violations = validate_trajectory(traj);
    if !violations.is_empty() {
        return Err(ArchiveError::Invalid {
            path: manifest_path,
            violations,
        });
    }
    fs::create_dir_all(archive_dir).map_err(io_err(archive_dir))?;
    for step in &traj.steps {
        let frame_path = archive_dir.join(&step.observation);
        if let Some(parent) = frame_path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&frame_path, step.frame.encode()).map_err(io_err(&frame_path))?;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        trajectory_id: traj.trajectory_id.clone(),
        task_id: traj.task_id.clone(),
        instruction: traj.instruction.clone(),
        verdict: traj.verdict,
        frame_width: traj.frame_width,
        frame_height: traj.frame_height,
        steps: traj
            .steps
            .iter()
            .map(|s| ManifestStep {
                index: s.index,
                observation: s.observation.clone(),
                action: s.action.clone(),
                response_text: s.response_text.clone(),
            })
            .collect(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|source| ArchiveError::Schema {
        path: manifest_path.clone(),
        source,
    })?;
    json.push(b'\n');
    fs::write(&manifest_path, json).map_err(io_err(&manifest_path))
}

/// Loads every archive directly below `root` (directories holding a
/// manifest), ordered by directory name.
pub fn load_archive_root(root: &Path) -> Result<Vec<Trajectory>, ArchiveError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let path = entry.path();
        if path.is_dir() && path.join(MANIFEST_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    dirs.iter().map(|d| load_trajectory(d)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: Action,
    pub observation: String,
}

/// The `h` most recent (action, observation) pairs preceding a step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryContext {
    pub window_size: usize,
    pub entries: Vec<HistoryEntry>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("step {t} out of range for trajectory with {len} steps")]
pub struct StepOutOfRange {
    pub t: usize,
    pub len: usize,
}

/// History for step `t`: steps `max(0, t - h) .. t`, oldest first. Step `t`
/// itself is never included.
pub fn history_window(traj: &Trajectory, t: usize, h: usize) -> Result<HistoryContext, StepOutOfRange> {
    if t >= traj.steps.len() {
        return Err(StepOutOfRange {
            t,
            len: traj.steps.len(),
        });
    }
    let entries = traj.steps[t.saturating_sub(h)..t]
        .iter()
        .map(|s| HistoryEntry {
            action: s.action.clone(),
            observation: s.observation.clone(),
        })
        .collect();
    Ok(HistoryContext {
        window_size: h,
        entries,
    })
}

/// G rollouts of the same task instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupRollout {
    task_id: String,
    instruction: String,
    trajectories: Vec<Trajectory>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("trajectory {trajectory_id} belongs to task {found:?}, group is {expected:?}")]
    TaskMismatch {
        trajectory_id: String,
        expected: String,
        found: String,
    },
    #[error("trajectory {trajectory_id} has a different instruction than its group")]
    InstructionMismatch { trajectory_id: String },
    #[error("duplicate trajectory id {0}")]
    DuplicateId(String),
}

impl GroupRollout {
    pub fn new(
        task_id: impl Into<String>,
        instruction: impl Into<String>,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self, GroupError> {
        let task_id = task_id.into();
        let instruction = instruction.into();
        let mut seen = std::collections::BTreeSet::new();
        for t in &trajectories {
            if t.task_id != task_id {
                return Err(GroupError::TaskMismatch {
                    trajectory_id: t.trajectory_id.clone(),
                    expected: task_id,
                    found: t.task_id.clone(),
                });
            }
            if t.instruction != instruction {
                return Err(GroupError::InstructionMismatch {
                    trajectory_id: t.trajectory_id.clone(),
                });
            }
            if !seen.insert(t.trajectory_id.as_str()) {
                return Err(GroupError::DuplicateId(t.trajectory_id.clone()));
            }
        }
        Ok(Self {
            task_id,
            instruction,
            trajectories,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn get(&self, trajectory_id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.trajectory_id == trajectory_id)
    }
}

/// Buckets trajectories into groups by task id, ordered by task id; input
/// order is kept within each group.
pub fn group_by_task(trajs: Vec<Trajectory>) -> Result<Vec<GroupRollout>, GroupError> {
    let mut buckets: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for t in trajs {
        buckets.entry(t.task_id.clone()).or_default().push(t);
    }
    buckets
        .into_iter()
        .map(|(task_id, members)| {
            let instruction = members[0].instruction.clone();
            GroupRollout::new(task_id, instruction, members)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn gray_frame(w: usize, h: usize, fill: u8) -> Frame {
        Frame::gray(w, h, vec![fill; w * h]).unwrap()
    }

    pub(crate) fn sample_trajectory(n: usize) -> Trajectory {
        let steps = (0..n)
            .map(|i| Step {
                index: i,
                observation: format!("frames/{i:03}.pgm"),
                frame: gray_frame(16, 24, (i * 40) as u8),
                action: if i + 1 == n {
                    Action::Status {
                        goal_status: "success".into(),
                    }
                } else {
                    Action::Click {
                        x: i as u32,
                        y: 2 * i as u32,
                    }
                },
                response_text: format!("thinking about step {i}\n<tool_call>...</tool_call>"),
            })
            .collect();
        Trajectory {
            trajectory_id: "traj-a".into(),
            task_id: "task-1".into(),
            instruction: "do the thing".into(),
            verdict: Verdict::Success,
            frame_width: 16,
            frame_height: 24,
            steps,
        }
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let traj = sample_trajectory(3);
        save_trajectory(&traj, dir.path()).unwrap();
        let back = load_trajectory(dir.path()).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn missing_manifest_and_frame_are_reported_with_path() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_trajectory(dir.path()),
            Err(ArchiveError::MissingManifest(_))
        ));

        let traj = sample_trajectory(3);
        save_trajectory(&traj, dir.path()).unwrap();
        let gone = dir.path().join("frames/001.pgm");
        fs::remove_file(&gone).unwrap();
        match load_trajectory(dir.path()) {
            Err(ArchiveError::MissingFrame(p)) => assert_eq!(p, gone),
            other => panic!("expected missing frame, got {other:?}"),
        }
    }

    #[test]
    fn maxval_other_than_255_is_a_corrupt_frame() {
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(&sample_trajectory(2), dir.path()).unwrap();
        let path = dir.path().join("frames/000.pgm");
        let mut bytes = b"P5\n16 24\n127\n".to_vec();
        bytes.extend(std::iter::repeat_n(0, 16 * 24));
        fs::write(&path, bytes).unwrap();
        match load_trajectory(dir.path()) {
            Err(ArchiveError::CorruptFrame { path: p, source }) => {
                assert_eq!(p, path);
                assert!(matches!(source, PnmError::UnsupportedMaxval(127)));
            }
            other => panic!("expected corrupt frame, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(&sample_trajectory(2), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap();

        fs::write(&path, text.replace("\"verdict\"", "\"verdikt\"")).unwrap();
        let err = load_trajectory(dir.path()).unwrap_err();
        assert!(matches!(err, ArchiveError::Schema { .. }));
        assert!(err.to_string().contains("verdikt"), "{err}");

        // a click without coordinates
        let broken = text.replacen("\"x\": 0,", "", 1);
        fs::write(&path, broken).unwrap();
        let err = load_trajectory(dir.path()).unwrap_err();
        assert!(err.to_string().contains("`x`"), "{err}");

        // extra parameter on a parameterless kind
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut v = v;
        v["steps"][0]["action"] = serde_json::json!({"kind": "wait", "x": 3});
        fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
        assert!(matches!(load_trajectory(dir.path()), Err(ArchiveError::Schema { .. })));

        v["steps"][0]["action"] = serde_json::json!({"kind": "wait"});
        v["format_version"] = serde_json::json!(2);
        fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
        assert!(matches!(
            load_trajectory(dir.path()),
            Err(ArchiveError::UnsupportedVersion { found: 2, .. })
        ));
    }

    #[test]
    fn rgb_frames_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let mut traj = sample_trajectory(2);
        traj.steps[1].frame = Frame::rgb(16, 24, vec![7; 16 * 24 * 3]).unwrap();
        traj.steps[1].observation = "frames/001.ppm".into();
        save_trajectory(&traj, dir.path()).unwrap();
        let back = load_trajectory(dir.path()).unwrap();
        assert_eq!(back.steps[1].frame.channels(), crate::pnm::Channels::Rgb);
        assert_eq!(back, traj);
    }

    #[test]
    fn validation_examples() {
        assert!(validate_trajectory(&sample_trajectory(4)).is_empty());

        let mut gap = sample_trajectory(3);
        gap.steps[2].index = 3;
        let v = validate_trajectory(&gap);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::NonContiguousIndex);
        assert_eq!(v[0].step, Some(3));

        let mut early = sample_trajectory(4);
        early.steps[1].action = Action::Status {
            goal_status: "success".into(),
        };
        let v = validate_trajectory(&early);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::StatusBeforeFinalStep);
        assert_eq!(v[0].step, Some(1));

        let mut empty = sample_trajectory(1);
        empty.steps.clear();
        assert_eq!(validate_trajectory(&empty)[0].rule, Rule::EmptyTrajectory);
    }

    #[test]
    fn unsafe_paths_are_rejected() {
        let mut t = sample_trajectory(2);
        t.steps[0].observation = "../outside.pgm".into();
        let v = validate_trajectory(&t);
        assert_eq!(v[0].rule, Rule::UnsafeObservationPath);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            save_trajectory(&t, dir.path()),
            Err(ArchiveError::Invalid { .. })
        ));
    }

    #[test]
    fn history_window_examples() {
        let traj = sample_trajectory(8);
        let ctx = history_window(&traj, 5, 2).unwrap();
        assert_eq!(ctx.entries.len(), 2);
        assert_eq!(ctx.entries[0].observation, "frames/003.pgm");
        assert_eq!(ctx.entries[1].observation, "frames/004.pgm");

        assert!(history_window(&traj, 0, 30).unwrap().entries.is_empty());

        let ctx = history_window(&traj, 2, 30).unwrap();
        let obs: Vec<_> = ctx.entries.iter().map(|e| e.observation.as_str()).collect();
        assert_eq!(obs, ["frames/000.pgm", "frames/001.pgm"]);

        assert_eq!(history_window(&traj, 8, 2), Err(StepOutOfRange { t: 8, len: 8 }));
    }

    #[test]
    fn group_membership_is_checked() {
        let a = sample_trajectory(2);
        let mut b = sample_trajectory(2);
        b.trajectory_id = "traj-b".into();
        assert!(GroupRollout::new("task-1", "do the thing", vec![a.clone(), b.clone()]).is_ok());
        b.task_id = "task-2".into();
        assert!(matches!(
            GroupRollout::new("task-1", "do the thing", vec![a.clone(), b]),
            Err(GroupError::TaskMismatch { .. })
        ));
        assert!(matches!(
            GroupRollout::new("task-1", "do the thing", vec![a.clone(), a]),
            Err(GroupError::DuplicateId(_))
        ));
    }
}
