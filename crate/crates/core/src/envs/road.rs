//! RoadLite: top-down driving on a scrolling road with hostile and bonus cars.
//!
//! Lateral positions live in pixels relative to the road centre at the
//! dynamics level's width. Rendering under another level's skin rescales
//! them by the ratio of half-widths.

use alloc::vec::Vec;

use super::canvas::{Canvas, Frame, Rgb, FRAME_SIZE};
use super::{Action, DynamicsRng};

pub const CAR_W: i32 = 6;
pub const CAR_H: i32 = 8;
pub const PLAYER_Y: i32 = 70;
pub const PLAYER_SPEED: i32 = 2;
pub const SCROLL: i32 = 2;
pub const TRACK_ROWS: u32 = 1000;
pub const PROGRESS_REWARD: f32 = 0.1;
pub const BONUS_REWARD: f32 = 10.0;
pub const SPAWN_Y: i32 = -CAR_H;
pub const BONUS_PER_MILLE: u64 = 250;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObstacleKind {
    Hostile,
    Bonus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Obstacle {
    pub lateral: i32,
    pub y: i32,
    pub kind: ObstacleKind,
}

/// Per-level constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSpec {
    pub half_width: i32,
    /// Spawn probability per step, in 1/1000.
    pub spawn_per_mille: u64,
    /// Peak lateral swing of the drawn road centre, pixels.
    pub curve_amplitude: f64,
    pub grass: Rgb,
    pub grass_alt: Rgb,
    pub road: Rgb,
    pub edge: Rgb,
}

pub const LEVELS: [LevelSpec; 4] = [
    LevelSpec {
        half_width: 24,
        spawn_per_mille: 45,
        curve_amplitude: 0.0,
        grass: Rgb(40, 140, 40),
        grass_alt: Rgb(40, 140, 40),
        road: Rgb(100, 100, 100),
        edge: Rgb(220, 220, 220),
    },
    LevelSpec {
        half_width: 20,
        spawn_per_mille: 60,
        curve_amplitude: 0.0,
        grass: Rgb(194, 160, 90),
        grass_alt: Rgb(176, 144, 80),
        road: Rgb(70, 70, 84),
        edge: Rgb(230, 200, 40),
    },
    LevelSpec {
        half_width: 14,
        spawn_per_mille: 55,
        curve_amplitude: 8.0,
        grass: Rgb(30, 60, 150),
        grass_alt: Rgb(40, 80, 170),
        road: Rgb(120, 110, 100),
        edge: Rgb(240, 240, 240),
    },
    LevelSpec {
        half_width: 18,
        spawn_per_mille: 70,
        curve_amplitude: 10.0,
        grass: Rgb(90, 70, 40),
        grass_alt: Rgb(120, 96, 54),
        road: Rgb(88, 88, 88),
        edge: Rgb(200, 60, 60),
    },
];

pub fn level_spec(level: u8) -> &'static LevelSpec {
    &LEVELS[(level.clamp(1, 4) - 1) as usize]
}

pub const PLAYER: Rgb = Rgb(60, 120, 230);
pub const HOSTILE: Rgb = Rgb(230, 40, 40);
pub const BONUS: Rgb = Rgb(250, 230, 60);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoadState {
    pub level: u8,
    pub player: i32,
    /// Rows advanced so far.
    pub distance: u32,
    pub obstacles: Vec<Obstacle>,
    pub step: u32,
    pub global_step: u64,
    pub rng: DynamicsRng,
}

impl RoadState {
    pub fn new(level: u8, seed: u64, global_step: u64) -> Self {
        RoadState {
            level,
            player: 0,
            distance: 0,
            obstacles: Vec::new(),
            step: 0,
            global_step,
            rng: DynamicsRng::new(seed),
        }
    }

    pub fn half_width(&self) -> i32 {
        level_spec(self.level).half_width
    }

    /// Advances one tick; returns `(reward, episode_over)`.
    pub fn advance(&mut self, action: Action) -> (f32, bool) {
        self.step += 1;
        self.global_step += 1;
        match action {
            Action::Left => self.player -= PLAYER_SPEED,
            Action::Right => self.player += PLAYER_SPEED,
            Action::Noop => {}
        }
        self.distance += 1;
        let mut reward = PROGRESS_REWARD;
        for o in &mut self.obstacles {
            o.y += SCROLL;
        }
        self.obstacles.retain(|o| o.y < FRAME_SIZE as i32);
        self.spawn();

        let hw = self.half_width();
        if self.player.abs() + CAR_W / 2 > hw {
            return (reward, true);
        }
        let mut crashed = false;
        let player = self.player;
        self.obstacles.retain(|o| {
            let hit = (o.lateral - player).abs() < CAR_W && (o.y - PLAYER_Y).abs() < CAR_H;
            if !hit {
                return true;
            }
            match o.kind {
                ObstacleKind::Hostile => {
                    crashed = true;
                    true
                }
                ObstacleKind::Bonus => {
                    reward += BONUS_REWARD;
                    false
                }
            }
        });
        (reward, crashed || self.distance >= TRACK_ROWS)
    }

    fn spawn(&mut self) {
        let spec = level_spec(self.level);
        let crowded = self.obstacles.iter().any(|o| o.y < SPAWN_Y + 2 * CAR_H);
        if crowded || self.rng.below(1000) >= spec.spawn_per_mille {
            return;
        }
        let span = (spec.half_width - CAR_W / 2) as u64;
        let lateral = self.rng.below(2 * span + 1) as i32 - span as i32;
        let kind = if self.rng.below(1000) < BONUS_PER_MILLE { ObstacleKind::Bonus } else { ObstacleKind::Hostile };
        self.obstacles.push(Obstacle { lateral, y: SPAWN_Y, kind });
    }
}

/// Drawn road centre at screen row `y`.
fn centre(spec: &LevelSpec, scroll: u64, y: i32) -> f64 {
    let base = FRAME_SIZE as f64 / 2.0;
    if spec.curve_amplitude == 0.0 {
        return base;
    }
    let phase = (scroll as f64 + (FRAME_SIZE as i32 - y) as f64) / 120.0;
    base + spec.curve_amplitude * libm::sin(core::f64::consts::TAU * phase)
}

/// Renders `state` with the look (width, palette, curvature) of `skin_level`.
pub fn render(state: &RoadState, skin_level: u8) -> Frame {
    let skin = level_spec(skin_level);
    let scale = skin.half_width as f64 / state.half_width() as f64;
    let scroll = state.distance as u64 * SCROLL as u64;
    let mut cv = Canvas::new(skin.grass);
    for y in 0..FRAME_SIZE as i32 {
        // scrolling texture stripes in the verge
        if skin.grass_alt != skin.grass && ((y as i64 - scroll as i64).rem_euclid(12)) < 4 {
            cv.rect(0, y, FRAME_SIZE as i32, 1, skin.grass_alt);
        }
        let c = centre(skin, scroll, y);
        let left = libm::round(c - skin.half_width as f64) as i32;
        let right = libm::round(c + skin.half_width as f64) as i32;
        cv.rect(left, y, right - left, 1, skin.road);
        cv.put(left - 1, y, skin.edge);
        cv.put(right, y, skin.edge);
        if (y as i64 - scroll as i64).rem_euclid(10) < 5 {
            cv.put(libm::round(c) as i32, y, skin.edge);
        }
    }
    let mut car = |lateral: i32, y: i32, color: Rgb| {
        let mid = centre(skin, scroll, y + CAR_H / 2) + lateral as f64 * scale;
        let x = libm::round(mid - CAR_W as f64 / 2.0) as i32;
        cv.rect(x, y, CAR_W, CAR_H, color);
    };
    for o in &state.obstacles {
        car(o.lateral, o.y, if o.kind == ObstacleKind::Hostile { HOSTILE } else { BONUS });
    }
    car(state.player, PLAYER_Y, PLAYER);
    cv.finish()
}
