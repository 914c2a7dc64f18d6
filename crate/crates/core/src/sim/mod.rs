//! Deterministic GUI environments for generating trajectory groups with
//! known divergence points.
//!
//! Two templates are registered, `maze` and `toggle`; see `docs/sim.md` for
//! screen geometry and the parameter ranges. Environments are plain values:
//! [`step`] takes a state and returns the next one with its rendered frame.

pub mod maze;
mod policy;
pub mod render;
pub mod rng;
mod task;
pub mod toggle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pnm::Frame;
use crate::trajectory::{Action, Verdict};

pub use policy::{
    fault_policy, fault_steps, optimal_policy, parse_tool_call, response_text, scripted_rollout, scripted_rollout_with,
    ScriptedPolicy,
};
pub use task::{perturb_task, template, ParamValue, TaskInstance, TemplateSpec, TEMPLATES};

use maze::{Direction, MazeWorld};
use render::{maze_button, render_maze, render_toggle, tile_rect, FRAME_HEIGHT, FRAME_WIDTH};
use toggle::{Screen, ToggleWorld};

pub const DEFAULT_MAX_TURNS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` requires parameter `{name}`")]
    MissingParameter { template: String, name: String },
    #[error("parameter `{name}`: {detail}")]
    BadParameter { name: String, detail: String },
    #[error("episode already ended")]
    Terminated,
    #[error("point ({x}, {y}) lies outside the {width}x{height} frame")]
    OutOfFrame {
        x: u32,
        y: u32,
        width: usize,
        height: usize,
    },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum World {
    Maze(MazeWorld),
    Toggle(ToggleWorld),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub world: World,
    pub step_count: usize,
    pub max_turns: usize,
    /// Set once a status action has been taken.
    pub ended: bool,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl EnvState {
    pub fn is_terminal(&self) -> bool {
        self.ended || self.step_count >= self.max_turns
    }
}

pub fn build_env(task: &TaskInstance) -> Result<EnvState, SimError> {
    build_env_with(task, DEFAULT_MAX_TURNS)
}

pub fn build_env_with(task: &TaskInstance, max_turns: usize) -> Result<EnvState, SimError> {
    let world = match task.template_id.as_str() {
        "maze" => {
            let side = task.int("side")?;
            if !(side >= 5 && side % 2 == 1 && side as usize * render::MAZE_CELL <= FRAME_WIDTH) {
                return Err(SimError::BadParameter {
                    name: "side".into(),
                    detail: format!("{side} is not an odd side that fits the frame"),
                });
            }
            let seed = task.int("layout_seed")?;
            let seed = u64::try_from(seed).map_err(|_| SimError::BadParameter {
                name: "layout_seed".into(),
                detail: "must be non-negative".into(),
            })?;
            let grid = maze::carve(side as usize, seed);
            let goal = (task.int("goal_row")?, task.int("goal_col")?);
            let goal_cell = (goal.0.max(0) as usize, goal.1.max(0) as usize);
            if goal.0 < 0 || goal.1 < 0 || !grid.is_open(goal_cell) || goal_cell == maze::START {
                return Err(SimError::BadParameter {
                    name: "goal_row/goal_col".into(),
                    detail: format!("({}, {}) is not an open cell away from the start", goal.0, goal.1),
                });
            }
            World::Maze(MazeWorld {
                grid,
                agent: maze::START,
                goal: goal_cell,
            })
        }
        "toggle" => {
            let slot = task.int("tile_slot")?;
            if !(0..4).contains(&slot) {
                return Err(SimError::BadParameter {
                    name: "tile_slot".into(),
                    detail: format!("{slot} is not in 0..=3"),
                });
            }
            target_on(task)?;
            World::Toggle(ToggleWorld::new(slot as usize))
        }
        other => return Err(SimError::UnknownTemplate(other.into())),
    };
    Ok(EnvState {
        world,
        step_count: 0,
        max_turns,
        ended: false,
        frame_width: FRAME_WIDTH,
        frame_height: FRAME_HEIGHT,
    })
}

fn target_on(task: &TaskInstance) -> Result<bool, SimError> {
    match task.text("target_state")? {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(SimError::BadParameter {
            name: "target_state".into(),
            detail: format!("`{other}` is neither on nor off"),
        }),
    }
}

/// Pure function of the state.
pub fn render(env: &EnvState) -> Frame {
    match &env.world {
        World::Maze(w) => render_maze(w),
        World::Toggle(w) => render_toggle(w),
    }
}

/// Which arrow button, if any, a click lands on.
pub fn button_at(x: u32, y: u32) -> Option<Direction> {
    Direction::ALL.into_iter().find(|&d| maze_button(d).contains(x, y))
}

pub fn step(env: &EnvState, action: &Action) -> Result<(EnvState, Frame), SimError> {
    if env.is_terminal() {
        return Err(SimError::Terminated);
    }
    for (x, y) in action.points() {
        if x as usize >= env.frame_width || y as usize >= env.frame_height {
            return Err(SimError::OutOfFrame {
                x,
                y,
                width: env.frame_width,
                height: env.frame_height,
            });
        }
    }
    let mut next = env.clone();
    next.step_count += 1;
    match (&mut next.world, action) {
        (_, Action::Status { .. }) => next.ended = true,
        (World::Maze(w), Action::Click { x, y }) => {
            if let Some(d) = button_at(*x, *y) {
                w.apply(d);
            }
        }
        (World::Toggle(w), Action::Swipe { y, y2, .. }) if w.screen == Screen::Home => {
            if y2 > y {
                w.screen = Screen::QuickSettings;
            } else if y2 < y {
                w.screen = Screen::SettingsPage;
            }
        }
        (World::Toggle(w), Action::Click { x, y })
            if w.screen == Screen::QuickSettings && tile_rect(w.tile_slot).contains(*x, *y) =>
        {
            w.flip();
        }
        // everything else behaves as a wait
        _ => {}
    }
    let frame = render(&next);
    Ok((next, frame))
}

pub fn verify(env: &EnvState, task: &TaskInstance) -> Result<Verdict, SimError> {
    let ok = match &env.world {
        World::Maze(w) => w.agent == w.goal,
        World::Toggle(w) => w.satisfies(target_on(task)?),
    };
    Ok(if ok { Verdict::Success } else { Verdict::Failure })
}
