//! Fork point detection between a successful and a failed trajectory of the
//! same task, and teacher selection for a rollout group.
//!
//! Scanning failed steps `j = 0..=T-` with a running lower bound `i_min` on
//! successful steps:
//!
//! 1. *Transition alignment.* If some `i >= i_min` (smallest first, with both
//!    successors present) has `Same(o+_i, o-_j)` and `Same(o+_{i+1}, o-_{j+1})`,
//!    set `i_min = i + 1` and move on.
//! 2. *Teacher selection.* Otherwise collect every `i >= i_min` where
//!    `Same(o+_i, o-_j)` and `Diverge(i, j)`. If any exist, keep the one with
//!    the highest SSIM (smallest `i` on exact ties), record `(j, i)` and set
//!    `i_min = i`.
//!
//! `Diverge(i, j)` is true at either trajectory's last step, otherwise when
//! the successor screens have SSIM below `theta`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{preprocess, ImageError, MatchConfig, MatchStats, PreparedThumbnail, PreprocessConfig};
use crate::trajectory::{validate_trajectory, GroupRollout, Trajectory, Violation};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub preprocess: PreprocessConfig,
}

impl DetectConfig {
    pub fn validate(&self) -> Result<(), ImageError> {
        self.matching.validate()?;
        self.preprocess.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForkMatch {
    pub failed_step: usize,
    pub teacher_step: usize,
    /// SSIM between the teacher and failed observations at the fork.
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub teacher_trajectory_id: String,
    pub failed_trajectory_id: String,
    pub matches: Vec<ForkMatch>,
}

impl MatchSet {
    /// Ordering violations: failed steps must strictly increase, teacher steps
    /// must never decrease.
    pub fn ordering_violations(&self) -> Vec<String> {
        self.matches
            .windows(2)
            .filter_map(|w| {
                if w[1].failed_step <= w[0].failed_step {
                    Some(format!("failed step {} follows {}", w[1].failed_step, w[0].failed_step))
                } else if w[1].teacher_step < w[0].teacher_step {
                    Some(format!(
                        "teacher step {} follows {} (monotonicity)",
                        w[1].teacher_step, w[0].teacher_step
                    ))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn contains(&self, failed_step: usize, teacher_step: usize) -> bool {
        self.matches
            .iter()
            .any(|m| m.failed_step == failed_step && m.teacher_step == teacher_step)
    }
}

#[derive(Debug, Error)]
pub enum ForkError {
    #[error("task mismatch: {succ:?} vs {fail:?}")]
    TaskMismatch { succ: String, fail: String },
    #[error("trajectory {trajectory_id} is invalid: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTrajectory {
        trajectory_id: String,
        violations: Vec<Violation>,
    },
    #[error("step index ({i}, {j}) out of range for trajectories ending at ({last_succ}, {last_fail})")]
    StepOutOfRange {
        i: usize,
        j: usize,
        last_succ: usize,
        last_fail: usize,
    },
    #[error("trajectory {trajectory_id}: {source}")]
    Image { trajectory_id: String, source: ImageError },
}

/// A trajectory with every observation preprocessed and hashed.
#[derive(Debug, Clone)]
pub struct PreparedTrajectory<'a> {
    trajectory: &'a Trajectory,
    frames: Vec<PreparedThumbnail>,
}

impl<'a> PreparedTrajectory<'a> {
    pub fn new(trajectory: &'a Trajectory, cfg: &DetectConfig) -> Result<Self, ForkError> {
        let violations = validate_trajectory(trajectory);
        if !violations.is_empty() {
            return Err(ForkError::InvalidTrajectory {
                trajectory_id: trajectory.trajectory_id.clone(),
                violations,
            });
        }
        let frames = trajectory
            .steps
            .iter()
            .map(|s| preprocess(&s.frame, &cfg.preprocess).map(|t| PreparedThumbnail::new(t, &cfg.matching)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| ForkError::Image {
                trajectory_id: trajectory.trajectory_id.clone(),
                source,
            })?;
        Ok(Self { trajectory, frames })
    }

    pub fn trajectory(&self) -> &'a Trajectory {
        self.trajectory
    }

    pub fn thumbnails(&self) -> &[PreparedThumbnail] {
        &self.frames
    }

    fn last(&self) -> usize {
        self.frames.len() - 1
    }
}

/// Memoised pairwise comparisons between one successful and one failed
/// trajectory.
struct PairScorer<'p, 'a> {
    succ: &'p PreparedTrajectory<'a>,
    fail: &'p PreparedTrajectory<'a>,
    cfg: &'p MatchConfig,
    stats: &'p MatchStats,
    ssim_memo: HashMap<(usize, usize), f64>,
    same_memo: HashMap<(usize, usize), bool>,
}

impl<'p, 'a> PairScorer<'p, 'a> {
    fn new(
        succ: &'p PreparedTrajectory<'a>,
        fail: &'p PreparedTrajectory<'a>,
        cfg: &'p MatchConfig,
        stats: &'p MatchStats,
    ) -> Self {
        Self {
            succ,
            fail,
            cfg,
            stats,
            ssim_memo: HashMap::new(),
            same_memo: HashMap::new(),
        }
    }

    fn image_err(&self, source: ImageError) -> ForkError {
        ForkError::Image {
            trajectory_id: self.fail.trajectory.trajectory_id.clone(),
            source,
        }
    }

    fn ssim(&mut self, i: usize, j: usize) -> Result<f64, ForkError> {
        if let Some(&s) = self.ssim_memo.get(&(i, j)) {
            return Ok(s);
        }
        let s = crate::imaging::ssim_observed(
            &self.succ.frames[i].thumbnail,
            &self.fail.frames[j].thumbnail,
            self.cfg,
            self.stats,
        )
        .map_err(|e| self.image_err(e))?;
        self.ssim_memo.insert((i, j), s);
        Ok(s)
    }

    fn same(&mut self, i: usize, j: usize) -> Result<bool, ForkError> {
        if let Some(&v) = self.same_memo.get(&(i, j)) {
            return Ok(v);
        }
        self.stats.record_hash_comparison();
        let hash_sim = self.succ.frames[i].hash.similarity(&self.fail.frames[j].hash);
        let v = if hash_sim < self.cfg.hash_prefilter_threshold {
            self.stats.record_prefilter_rejection();
            false
        } else {
            self.ssim(i, j)? >= self.cfg.theta
        };
        self.same_memo.insert((i, j), v);
        Ok(v)
    }

    fn diverge(&mut self, i: usize, j: usize) -> Result<bool, ForkError> {
        if i == self.succ.last() || j == self.fail.last() {
            return Ok(true);
        }
        Ok(self.ssim(i + 1, j + 1)? < self.cfg.theta)
    }
}

fn check_pair(succ: &Trajectory, fail: &Trajectory) -> Result<(), ForkError> {
    if succ.task_id != fail.task_id {
        return Err(ForkError::TaskMismatch {
            succ: succ.task_id.clone(),
            fail: fail.task_id.clone(),
        });
    }
    Ok(())
}

/// Whether successful step `i` and failed step `j` lead to different next
/// screens (always true at either trajectory's final step).
pub fn diverge(
    i: usize,
    j: usize,
    succ: &Trajectory,
    fail: &Trajectory,
    cfg: &DetectConfig,
) -> Result<bool, ForkError> {
    let (last_succ, last_fail) = match (succ.final_step_index(), fail.final_step_index()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(ForkError::StepOutOfRange {
                i,
                j,
                last_succ: 0,
                last_fail: 0,
            })
        }
    };
    if i > last_succ || j > last_fail {
        return Err(ForkError::StepOutOfRange {
            i,
            j,
            last_succ,
            last_fail,
        });
    }
    if i == last_succ || j == last_fail {
        return Ok(true);
    }
    let thumb = |t: &Trajectory, k: usize| {
        preprocess(&t.steps[k].frame, &cfg.preprocess).map_err(|source| ForkError::Image {
            trajectory_id: t.trajectory_id.clone(),
            source,
        })
    };
    let a = thumb(succ, i + 1)?;
    let b = thumb(fail, j + 1)?;
    let s = crate::imaging::ssim(&a, &b, &cfg.matching).map_err(|source| ForkError::Image {
        trajectory_id: fail.trajectory_id.clone(),
        source,
    })?;
    Ok(s < cfg.matching.theta)
}

pub fn detect_fork_points(succ: &Trajectory, fail: &Trajectory, cfg: &DetectConfig) -> Result<MatchSet, ForkError> {
    detect_fork_points_observed(succ, fail, cfg, &MatchStats::new())
}

pub fn detect_fork_points_observed(
    succ: &Trajectory,
    fail: &Trajectory,
    cfg: &DetectConfig,
    stats: &MatchStats,
) -> Result<MatchSet, ForkError> {
    check_pair(succ, fail)?;
    let s = PreparedTrajectory::new(succ, cfg)?;
    let f = PreparedTrajectory::new(fail, cfg)?;
    detect_prepared(&s, &f, &cfg.matching, stats)
}

/// Fork detection over already-prepared trajectories, so a teacher's
/// thumbnails can be shared across many failed trajectories.
pub fn detect_prepared(
    succ: &PreparedTrajectory<'_>,
    fail: &PreparedTrajectory<'_>,
    cfg: &MatchConfig,
    stats: &MatchStats,
) -> Result<MatchSet, ForkError> {
    check_pair(succ.trajectory, fail.trajectory)?;
    let last_succ = succ.last();
    let last_fail = fail.last();
    let mut scorer = PairScorer::new(succ, fail, cfg, stats);
    let mut matches = Vec::new();
    let mut i_min = 0usize;

    for j in 0..=last_fail {
        if j < last_fail {
            let mut aligned = None;
            for i in i_min..last_succ {
                if scorer.same(i, j)? && scorer.same(i + 1, j + 1)? {
                    aligned = Some(i);
                    break;
                }
            }
            if let Some(i) = aligned {
                i_min = i + 1;
                continue;
            }
        }

        let mut best: Option<(f64, usize)> = None;
        for i in i_min..=last_succ {
            if !scorer.same(i, j)? || !scorer.diverge(i, j)? {
                continue;
            }
            let score = scorer.ssim(i, j)?;
            // ascending i with a strict comparison keeps the smallest i on ties
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, i));
            }
        }
        if let Some((ssim, i)) = best {
            matches.push(ForkMatch {
                failed_step: j,
                teacher_step: i,
                ssim,
            });
            i_min = i;
        }
    }

    Ok(MatchSet {
        teacher_trajectory_id: succ.trajectory.trajectory_id.clone(),
        failed_trajectory_id: fail.trajectory.trajectory_id.clone(),
        matches,
    })
}

/// The successful trajectory with the fewest steps; ties go to the
/// lexicographically smallest id.
pub fn select_teacher(group: &GroupRollout) -> Option<&Trajectory> {
    group.trajectories().iter().filter(|t| t.is_success()).min_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then_with(|| a.trajectory_id.cmp(&b.trajectory_id))
    })
}

/// Pairs every failed trajectory of the group with the group's teacher.
/// Groups without a success or without a failure yield an empty map.
pub fn pair_group(group: &GroupRollout, cfg: &DetectConfig) -> Result<BTreeMap<String, MatchSet>, ForkError> {
    pair_group_observed(group, cfg, &MatchStats::new())
}

pub fn pair_group_observed(
    group: &GroupRollout,
    cfg: &DetectConfig,
    stats: &MatchStats,
) -> Result<BTreeMap<String, MatchSet>, ForkError> {
    let Some(teacher) = select_teacher(group) else {
        return Ok(BTreeMap::new());
    };
    let failures: Vec<&Trajectory> = group.trajectories().iter().filter(|t| !t.is_success()).collect();
    if failures.is_empty() {
        return Ok(BTreeMap::new());
    }
    let teacher = PreparedTrajectory::new(teacher, cfg)?;
    failures
        .par_iter()
        .map(|fail| {
            let f = PreparedTrajectory::new(fail, cfg)?;
            let set = detect_prepared(&teacher, &f, &cfg.matching, stats)?;
            Ok((fail.trajectory_id.clone(), set))
        })
        .collect()
}
