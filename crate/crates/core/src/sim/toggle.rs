use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Screen {
    Home,
    QuickSettings,
    SettingsPage,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToggleWorld {
    pub screen: Screen,
    pub bluetooth: bool,
    /// Flag value after each flip, oldest first.
    pub history: Vec<bool>,
    pub tile_slot: usize,
}

impl ToggleWorld {
    pub fn new(tile_slot: usize) -> Self {
        Self {
            screen: Screen::Home,
            bluetooth: false,
            history: Vec::new(),
            tile_slot,
        }
    }

    pub fn flip(&mut self) {
        self.bluetooth = !self.bluetooth;
        self.history.push(self.bluetooth);
    }

    /// "off" asks for on-then-off: the flag must have been on at some point
    /// and end off. "on" only needs the final flag on.
    pub fn satisfies(&self, target_on: bool) -> bool {
        if target_on {
            self.bluetooth
        } else {
            !self.bluetooth && self.history.contains(&true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_then_off_rule() {
        let mut w = ToggleWorld::new(0);
        assert!(!w.satisfies(false), "never turned on");
        w.flip();
        assert!(w.satisfies(true));
        assert!(!w.satisfies(false));
        w.flip();
        assert!(w.satisfies(false));
        assert!(!w.satisfies(true));
        assert_eq!(w.history, [true, false]);
    }
}
