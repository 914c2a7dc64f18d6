//! Scripted policies and rollouts. A policy is a fixed action list, with an
//! optional single substitution that injects a mistake at a known step.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::trajectory::{Action, Step, Trajectory, Verdict};

use super::maze::Direction;
use super::render::{maze_button, tile_rect};
use super::toggle::Screen;
use super::{build_env, build_env_with, render, step, verify, EnvState, SimError, TaskInstance, World};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub base: Vec<Action>,
    /// Replaces `base[k]` with the given action.
    pub fault: Option<(usize, Action)>,
}

impl ScriptedPolicy {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.base.is_empty() {
            return Err(SimError::InvalidPolicy("empty action list".into()));
        }
        if let Some((k, _)) = &self.fault {
            if *k >= self.base.len() {
                return Err(SimError::InvalidPolicy(format!(
                    "fault step {k} beyond {} base actions",
                    self.base.len()
                )));
            }
        }
        Ok(())
    }

    pub fn action_at(&self, t: usize) -> Option<&Action> {
        match &self.fault {
            Some((k, a)) if *k == t => Some(a),
            _ => self.base.get(t),
        }
    }

    pub fn fault_step(&self) -> Option<usize> {
        self.fault.as_ref().map(|(k, _)| *k)
    }
}

fn press(d: Direction) -> Action {
    let (x, y) = maze_button(d).center();
    Action::Click { x, y }
}

fn tap_tile(slot: usize) -> Action {
    let (x, y) = tile_rect(slot).center();
    Action::Click { x, y }
}

const SWIPE_DOWN: Action = Action::Swipe {
    x: 128,
    y: 120,
    x2: 128,
    y2: 400,
};
const SWIPE_UP: Action = Action::Swipe {
    x: 128,
    y: 400,
    x2: 128,
    y2: 120,
};

fn complete() -> Action {
    Action::Status {
        goal_status: "complete".into(),
    }
}

/// The shortest action list that solves the task, ending with a status
/// action.
pub fn optimal_policy(task: &TaskInstance) -> Result<ScriptedPolicy, SimError> {
    let env = build_env(task)?;
    let mut base = match &env.world {
        World::Maze(w) => w
            .grid
            .path(w.agent, w.goal)
            .ok_or_else(|| SimError::InvalidPolicy("goal unreachable".into()))?
            .into_iter()
            .map(press)
            .collect(),
        World::Toggle(w) => {
            let mut acts = vec![SWIPE_DOWN, tap_tile(w.tile_slot)];
            if task.text("target_state")? == "off" {
                acts.push(tap_tile(w.tile_slot));
            }
            acts
        }
    };
    base.push(complete());
    Ok(ScriptedPolicy { base, fault: None })
}

/// Steps at which [`fault_policy`] can inject a mistake: every step before
/// the final status action.
pub fn fault_steps(task: &TaskInstance) -> Result<Range<usize>, SimError> {
    Ok(0..optimal_policy(task)?.base.len() - 1)
}

/// The optimal policy with one wrong action at step `k`, chosen so the
/// rollout fails.
///
/// Maze faults prefer a press into a wall (the agent stays put, as in a
/// blocked move), then another open direction, then a premature status.
/// Toggle faults swipe the wrong way at step 0 and tap a neighbouring tile
/// later on.
pub fn fault_policy(task: &TaskInstance, k: usize) -> Result<ScriptedPolicy, SimError> {
    let optimal = optimal_policy(task)?;
    if k + 1 >= optimal.base.len() {
        return Err(SimError::InvalidPolicy(format!(
            "fault step {k} must precede the final status step {}",
            optimal.base.len() - 1
        )));
    }
    let mut env = build_env(task)?;
    for a in &optimal.base[..k] {
        env = step(&env, a)?.0;
    }
    let candidates: Vec<Action> = match &env.world {
        World::Maze(w) => {
            let mut dirs: Vec<Direction> = Direction::ALL
                .into_iter()
                .filter(|&d| press(d) != optimal.base[k])
                .collect();
            dirs.sort_by_key(|&d| !w.is_blocked(d));
            dirs.into_iter().map(press).chain([complete()]).collect()
        }
        World::Toggle(w) => {
            let wrong = if k == 0 {
                SWIPE_UP
            } else {
                tap_tile((w.tile_slot + 1) % 4)
            };
            vec![wrong, complete()]
        }
    };
    for fault in candidates {
        let policy = ScriptedPolicy {
            base: optimal.base.clone(),
            fault: Some((k, fault)),
        };
        if scripted_rollout(task, &policy, "probe")?.verdict == Verdict::Failure {
            return Ok(policy);
        }
    }
    Err(SimError::InvalidPolicy(format!("no failing fault at step {k}")))
}

fn tool_call(action: &Action) -> String {
    let json = serde_json::to_string(action).expect("actions serialize");
    format!("<tool_call>\n{json}\n</tool_call>")
}

/// Recovers the action from the last tool call in a response.
pub fn parse_tool_call(response: &str) -> Option<Action> {
    let start = response.rfind("<tool_call>")? + "<tool_call>".len();
    let end = start + response[start..].find("</tool_call>")?;
    serde_json::from_str(response[start..end].trim()).ok()
}

/// Deterministic stand-in for model output: reasoning about the current
/// state followed by the tool call. `faulty` marks the injected mistake,
/// which carries its own line of reasoning.
pub fn response_text(env: &EnvState, action: &Action, faulty: bool) -> String {
    let thought = match (&env.world, action) {
        (_, Action::Status { .. }) => "The screen shows the requested state, so the task is complete.".to_string(),
        (World::Maze(w), Action::Click { x, y }) => match super::button_at(*x, *y) {
            Some(d) if faulty => format!(
                "The agent is at row {}, column {}. Going {} looks like a shortcut toward the goal, so I press the {} arrow.",
                w.agent.0,
                w.agent.1,
                d.name(),
                d.name()
            ),
            Some(d) => format!(
                "The agent is at row {}, column {} and the goal is at row {}, column {}. The open corridor continues {}, so I press the {} arrow.",
                w.agent.0,
                w.agent.1,
                w.goal.0,
                w.goal.1,
                d.name(),
                d.name()
            ),
            None => "Nothing to press here, I will tap the board and look again.".to_string(),
        },
        (World::Toggle(w), _) => {
            let screen = match w.screen {
                Screen::Home => "the home screen",
                Screen::QuickSettings => "the quick settings shade",
                Screen::SettingsPage => "a settings list",
            };
            let plan = match action {
                Action::Swipe { y, y2, .. } if faulty && y2 < y => {
                    "Swiping up should reveal the system toggles.".to_string()
                }
                Action::Swipe { y, y2, .. } if y2 > y => {
                    "A downward swipe opens the notification shade with the Bluetooth tile.".to_string()
                }
                Action::Swipe { .. } => "I will swipe to look for the toggle.".to_string(),
                Action::Click { .. } if faulty => "This tile looks like the Bluetooth switch, I will tap it.".to_string(),
                Action::Click { .. } => {
                    let next = if w.bluetooth { "off" } else { "on" };
                    format!("Tapping the Bluetooth tile turns it {next}.")
                }
                _ => "I will wait for the screen to settle.".to_string(),
            };
            format!("I am on {screen}. {plan}")
        }
        (World::Maze(_), _) => "I will wait and look at the board again.".to_string(),
    };
    format!("{thought}\n{}", tool_call(action))
}

/// Runs `policy` on a fresh environment and records every step.
pub fn scripted_rollout(
    task: &TaskInstance,
    policy: &ScriptedPolicy,
    trajectory_id: &str,
) -> Result<Trajectory, SimError> {
    scripted_rollout_with(task, policy, trajectory_id, super::DEFAULT_MAX_TURNS)
}

pub fn scripted_rollout_with(
    task: &TaskInstance,
    policy: &ScriptedPolicy,
    trajectory_id: &str,
    max_turns: usize,
) -> Result<Trajectory, SimError> {
    policy.validate()?;
    let mut env = build_env_with(task, max_turns)?;
    let mut frame = render(&env);
    let mut steps = Vec::new();
    let mut t = 0;
    while let Some(action) = policy.action_at(t) {
        if env.is_terminal() {
            break;
        }
        let faulty = policy.fault_step() == Some(t);
        steps.push(Step {
            index: t,
            observation: format!("frames/{t:03}.pgm"),
            frame,
            action: action.clone(),
            response_text: response_text(&env, action, faulty),
        });
        (env, frame) = step(&env, action)?;
        t += 1;
    }
    Ok(Trajectory {
        trajectory_id: trajectory_id.into(),
        task_id: task.task_id.clone(),
        instruction: task.instruction.clone(),
        verdict: verify(&env, task)?,
        frame_width: env.frame_width,
        frame_height: env.frame_height,
        steps,
    })
}
