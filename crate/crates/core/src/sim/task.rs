use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::maze;
use super::rng::{SeededRng, STREAM_TASK};
use super::SimError;

/// A task parameter value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Text(String),
}

/// A concrete task drawn from a template. Reconstructible from
/// `(template_id, rng_seed)` through [`perturb_task`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskInstance {
    pub task_id: String,
    pub template_id: String,
    pub instruction: String,
    pub parameters: BTreeMap<String, ParamValue>,
    pub rng_seed: u64,
}

impl TaskInstance {
    pub fn int(&self, name: &str) -> Result<i64, SimError> {
        match self.parameters.get(name) {
            Some(ParamValue::Int(v)) => Ok(*v),
            Some(ParamValue::Text(_)) => Err(SimError::BadParameter {
                name: name.into(),
                detail: "expected an integer".into(),
            }),
            None => Err(SimError::MissingParameter {
                template: self.template_id.clone(),
                name: name.into(),
            }),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str, SimError> {
        match self.parameters.get(name) {
            Some(ParamValue::Text(v)) => Ok(v),
            Some(ParamValue::Int(_)) => Err(SimError::BadParameter {
                name: name.into(),
                detail: "expected a string".into(),
            }),
            None => Err(SimError::MissingParameter {
                template: self.template_id.clone(),
                name: name.into(),
            }),
        }
    }
}

/// A registered simulator template and the ranges its parameters are drawn
/// from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TemplateSpec {
    pub id: &'static str,
    pub description: &'static str,
    pub parameters: &'static [(&'static str, &'static str)],
}

pub const TEMPLATES: &[TemplateSpec] = &[
    TemplateSpec {
        id: "maze",
        description: "move an agent through a block maze to a goal cell with four arrow buttons",
        parameters: &[
            ("side", "7 or 9 (odd grid side in cells)"),
            ("layout_seed", "0..2^32, seeds the randomized depth-first carve"),
            ("goal_row, goal_col", "an open cell at path distance 4..=29 from (1, 1)"),
        ],
    },
    TemplateSpec {
        id: "toggle",
        description: "switch Bluetooth through the quick settings shade",
        parameters: &[
            (
                "target_state",
                "\"on\" or \"off\"; off means turn it on first, then off",
            ),
            (
                "tile_slot",
                "0..=3, position of the Bluetooth tile in the 2x2 shade grid",
            ),
        ],
    },
];

pub fn template(id: &str) -> Result<&'static TemplateSpec, SimError> {
    TEMPLATES
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| SimError::UnknownTemplate(id.into()))
}

/// Draws a task instance from a template. Same inputs, same instance.
pub fn perturb_task(template_id: &str, seed: u64) -> Result<TaskInstance, SimError> {
    template(template_id)?;
    let mut rng = SeededRng::new(seed, STREAM_TASK);
    let mut parameters = BTreeMap::new();
    let instruction = match template_id {
        "maze" => {
            let side = *rng.pick(&[7usize, 9]);
            let layout_seed = rng.next_u32() as u64;
            let grid = maze::carve(side, layout_seed);
            let candidates = maze::goal_candidates(&grid);
            let (gr, gc) = *rng.pick(&candidates);
            parameters.insert("side".into(), ParamValue::Int(side as i64));
            parameters.insert("layout_seed".into(), ParamValue::Int(layout_seed as i64));
            parameters.insert("goal_row".into(), ParamValue::Int(gr as i64));
            parameters.insert("goal_col".into(), ParamValue::Int(gc as i64));
            format!("Move the agent to the goal at row {gr}, column {gc} using the arrow buttons.")
        }
        "toggle" => {
            let target = *rng.pick(&["on", "off"]);
            let slot = rng.below(4);
            parameters.insert("target_state".into(), ParamValue::Text(target.into()));
            parameters.insert("tile_slot".into(), ParamValue::Int(slot as i64));
            match target {
                "on" => "Turn on the Bluetooth.".to_string(),
                _ => "Turn on the Bluetooth first and then turn it off.".to_string(),
            }
        }
        _ => unreachable!("template() accepted an unhandled id"),
    };
    Ok(TaskInstance {
        task_id: format!("{template_id}-{seed}"),
        template_id: template_id.into(),
        instruction,
        parameters,
        rng_seed: seed,
    })
}
