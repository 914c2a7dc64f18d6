//! Frame rendering. Every frame is 256x512 8-bit grayscale with a flat
//! 48-row status bar, so the preprocessing crop has something to remove.
//!
//! Screens are drawn with large textured regions rather than thin outlines:
//! after the 4x downsample only big structures survive, and each distinct
//! state has to land below the SSIM threshold against every other state.

use crate::pnm::Frame;

use super::maze::{Direction, MazeWorld};
use super::toggle::{Screen, ToggleWorld};

pub const FRAME_WIDTH: usize = 256;
pub const FRAME_HEIGHT: usize = 512;
pub const STATUS_BAR_ROWS: usize = 48;
pub const STATUS_BAR_VALUE: u8 = 32;

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub const fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    pub fn center(&self) -> (u32, u32) {
        ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)
    }
}

pub const MAZE_CELL: usize = 24;
pub const MAZE_TOP: usize = 64;

pub fn maze_button(d: Direction) -> Rect {
    match d {
        Direction::Up => Rect::new(96, 336, 160, 384),
        Direction::Left => Rect::new(24, 392, 88, 440),
        Direction::Right => Rect::new(168, 392, 232, 440),
        Direction::Down => Rect::new(96, 448, 160, 496),
    }
}

/// Quick-settings tile slots, row-major in a 2x2 grid.
pub fn tile_rect(slot: usize) -> Rect {
    let (col, row) = ((slot % 2) as u32, (slot / 2) as u32);
    Rect::new(16 + col * 120, 80 + row * 120, 120 + col * 120, 184 + row * 120)
}

struct Canvas {
    px: Vec<u8>,
}

impl Canvas {
    fn new(background: u8) -> Self {
        let mut px = vec![background; FRAME_WIDTH * FRAME_HEIGHT];
        px[..STATUS_BAR_ROWS * FRAME_WIDTH].fill(STATUS_BAR_VALUE);
        Self { px }
    }

    fn fill(&mut self, r: Rect, v: u8) {
        for y in r.y0 as usize..(r.y1 as usize).min(FRAME_HEIGHT) {
            let row = &mut self.px[y * FRAME_WIDTH..(y + 1) * FRAME_WIDTH];
            row[r.x0 as usize..(r.x1 as usize).min(FRAME_WIDTH)].fill(v);
        }
    }

    /// Checkerboard anchored to the frame origin, so overlapping fills agree.
    fn checker(&mut self, r: Rect, square: usize, a: u8, b: u8) {
        for y in r.y0 as usize..(r.y1 as usize).min(FRAME_HEIGHT) {
            for x in r.x0 as usize..(r.x1 as usize).min(FRAME_WIDTH) {
                self.px[y * FRAME_WIDTH + x] = if (x / square + y / square).is_multiple_of(2) {
                    a
                } else {
                    b
                };
            }
        }
    }

    fn frame(self) -> Frame {
        Frame::gray(FRAME_WIDTH, FRAME_HEIGHT, self.px).expect("canvas has frame dimensions")
    }
}

fn arrow(c: &mut Canvas, d: Direction) {
    let r = maze_button(d);
    c.fill(r, 96);
    let (cx, cy) = r.center();
    // a bar pointing away from the button centre
    let bar = match d {
        Direction::Up => Rect::new(cx - 4, r.y0 + 6, cx + 4, cy + 4),
        Direction::Down => Rect::new(cx - 4, cy - 4, cx + 4, r.y1 - 6),
        Direction::Left => Rect::new(r.x0 + 8, cy - 4, cx + 4, cy + 4),
        Direction::Right => Rect::new(cx - 4, cy - 4, r.x1 - 8, cy + 4),
    };
    c.fill(bar, 235);
}

pub fn render_maze(w: &MazeWorld) -> Frame {
    let mut c = Canvas::new(200);
    let n = w.grid.side;
    let left = (FRAME_WIDTH - n * MAZE_CELL) / 2;
    let cell = |r: usize, col: usize| {
        Rect::new(
            (left + col * MAZE_CELL) as u32,
            (MAZE_TOP + r * MAZE_CELL) as u32,
            (left + (col + 1) * MAZE_CELL) as u32,
            (MAZE_TOP + (r + 1) * MAZE_CELL) as u32,
        )
    };
    for r in 0..n {
        for col in 0..n {
            c.fill(cell(r, col), if w.grid.is_open((r, col)) { 236 } else { 56 });
        }
    }
    let g = cell(w.goal.0, w.goal.1);
    c.fill(g, 150);
    c.fill(Rect::new(g.x0 + 8, g.y0 + 8, g.x1 - 8, g.y1 - 8), 110);

    // Row and column bands through the agent make every position change move
    // a frame-wide textured stripe.
    let a = cell(w.agent.0, w.agent.1);
    let bottom = (MAZE_TOP + n * MAZE_CELL + 8) as u32;
    c.checker(Rect::new(0, a.y0, FRAME_WIDTH as u32, a.y1), 8, 16, 240);
    c.checker(Rect::new(a.x0, (MAZE_TOP - 8) as u32, a.x1, bottom), 8, 16, 240);
    c.fill(Rect::new(a.x0 + 3, a.y0 + 3, a.x1 - 3, a.y1 - 3), 0);
    c.fill(Rect::new(a.x0 + 8, a.y0 + 8, a.x1 - 8, a.y1 - 8), 128);

    for d in Direction::ALL {
        arrow(&mut c, d);
    }
    c.frame()
}

pub fn render_toggle(w: &ToggleWorld) -> Frame {
    match w.screen {
        Screen::Home => {
            let mut c = Canvas::new(170);
            for row in 0..5u32 {
                for col in 0..4u32 {
                    let v = 40 + ((row * 4 + col) * 37 % 180) as u8;
                    c.fill(
                        Rect::new(24 + col * 56, 72 + row * 64, 64 + col * 56, 112 + row * 64),
                        v,
                    );
                }
            }
            c.fill(Rect::new(0, 440, FRAME_WIDTH as u32, 512), 110);
            c.frame()
        }
        Screen::QuickSettings => {
            let mut c = Canvas::new(36);
            for slot in 0..4 {
                let r = tile_rect(slot);
                let bluetooth = slot == w.tile_slot;
                if bluetooth && w.bluetooth {
                    c.checker(r, 8, 20, 250);
                } else {
                    c.fill(r, 120);
                }
                let (cx, cy) = r.center();
                if bluetooth {
                    c.fill(Rect::new(cx - 6, cy - 30, cx + 6, cy + 30), 230);
                } else {
                    c.fill(Rect::new(cx - 30, cy - 6, cx + 30, cy + 6), 70);
                }
            }
            c.fill(Rect::new(16, 330, 240, 350), 200);
            c.frame()
        }
        Screen::SettingsPage => {
            let mut c = Canvas::new(245);
            for i in 0..8u32 {
                let y = 64 + i * 54;
                c.fill(Rect::new(16, y, 56, y + 40), 60);
                c.fill(Rect::new(72, y + 8, 232, y + 32), 180);
            }
            c.frame()
        }
    }
}
