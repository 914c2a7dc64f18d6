//! Block mazes: walls and passages share one grid of square cells. Rooms sit
//! at odd coordinates and a randomized depth-first carve opens the wall
//! between neighbouring rooms, giving a perfect maze (one path between any
//! two open cells).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::rng::{SeededRng, STREAM_LAYOUT};

pub const START: (usize, usize) = (1, 1);
pub const MIN_GOAL_DISTANCE: usize = 4;
/// One turn is reserved for the final status action.
pub const MAX_GOAL_DISTANCE: usize = 29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

/// Square grid; `true` marks an open cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub side: usize,
    pub open: Vec<bool>,
}

impl Grid {
    pub fn is_open(&self, (r, c): (usize, usize)) -> bool {
        r < self.side && c < self.side && self.open[r * self.side + c]
    }

    pub fn neighbour(&self, (r, c): (usize, usize), d: Direction) -> Option<(usize, usize)> {
        let (dr, dc) = d.delta();
        let r = r.checked_add_signed(dr)?;
        let c = c.checked_add_signed(dc)?;
        self.is_open((r, c)).then_some((r, c))
    }

    /// Path distance from `from` to every cell (`None` for walls and
    /// unreachable cells).
    pub fn distances(&self, from: (usize, usize)) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.side * self.side];
        if !self.is_open(from) {
            return dist;
        }
        dist[from.0 * self.side + from.1] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell.0 * self.side + cell.1].unwrap();
            for dir in Direction::ALL {
                if let Some(next) = self.neighbour(cell, dir) {
                    let slot = &mut dist[next.0 * self.side + next.1];
                    if slot.is_none() {
                        *slot = Some(d + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
        dist
    }

    /// Moves along the unique path from `from` to `to`.
    pub fn path(&self, from: (usize, usize), to: (usize, usize)) -> Option<Vec<Direction>> {
        // walk back from the goal along strictly decreasing distance
        let dist = self.distances(from);
        let mut at = to;
        let mut d = dist[to.0 * self.side + to.1]?;
        let mut moves = Vec::with_capacity(d);
        while d > 0 {
            let (dir, prev) = Direction::ALL
                .iter()
                .filter_map(|&dir| {
                    let prev = self.neighbour(at, dir)?;
                    (dist[prev.0 * self.side + prev.1] == Some(d - 1)).then_some((dir, prev))
                })
                .next()?;
            let back = match dir {
                Direction::Up => Direction::Down,
                Direction::Down => Direction::Up,
                Direction::Left => Direction::Right,
                Direction::Right => Direction::Left,
            };
            moves.push(back);
            at = prev;
            d -= 1;
        }
        moves.reverse();
        Some(moves)
    }
}

pub fn carve(side: usize, layout_seed: u64) -> Grid {
    let mut rng = SeededRng::new(layout_seed, STREAM_LAYOUT);
    let mut open = vec![false; side * side];
    open[START.0 * side + START.1] = true;
    let mut stack = vec![START];
    while let Some(&(r, c)) = stack.last() {
        let unvisited: Vec<(usize, usize)> = Direction::ALL
            .iter()
            .filter_map(|d| {
                let (dr, dc) = d.delta();
                let nr = r.checked_add_signed(2 * dr)?;
                let nc = c.checked_add_signed(2 * dc)?;
                (nr < side - 1 && nc < side - 1 && !open[nr * side + nc]).then_some((nr, nc))
            })
            .collect();
        if unvisited.is_empty() {
            stack.pop();
            continue;
        }
        let (nr, nc) = *rng.pick(&unvisited);
        open[(r + nr) / 2 * side + (c + nc) / 2] = true;
        open[nr * side + nc] = true;
        stack.push((nr, nc));
    }
    Grid { side, open }
}

/// Open cells at an admissible distance from the start, row-major.
pub fn goal_candidates(grid: &Grid) -> Vec<(usize, usize)> {
    let dist = grid.distances(START);
    (0..grid.side * grid.side)
        .filter(|&i| matches!(dist[i], Some(d) if (MIN_GOAL_DISTANCE..=MAX_GOAL_DISTANCE).contains(&d)))
        .map(|i| (i / grid.side, i % grid.side))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MazeWorld {
    pub grid: Grid,
    pub agent: (usize, usize),
    pub goal: (usize, usize),
}

impl MazeWorld {
    /// Moves the agent one cell unless a wall is in the way. Returns whether
    /// the agent moved.
    pub fn apply(&mut self, d: Direction) -> bool {
        match self.grid.neighbour(self.agent, d) {
            Some(next) => {
                self.agent = next;
                true
            }
            None => false,
        }
    }

    pub fn is_blocked(&self, d: Direction) -> bool {
        self.grid.neighbour(self.agent, d).is_none()
    }
}
