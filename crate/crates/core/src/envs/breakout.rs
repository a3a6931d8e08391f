//! BreakoutLite: paddle, auto-served ball, 6×12 brick wall, three lives.

use super::canvas::{Canvas, Frame, Rgb};
use super::{Action, DynamicsRng};

pub const BRICK_ROWS: usize = 6;
pub const BRICK_COLS: usize = 12;
pub const BRICK_W: i32 = 6;
pub const BRICK_H: i32 = 3;
pub const BRICK_TOP: i32 = 16;
pub const PLAY_LEFT: i32 = 6;
pub const PLAY_RIGHT: i32 = 78;
pub const PLAY_TOP: i32 = 8;
pub const PADDLE_Y: i32 = 74;
pub const PADDLE_W: i32 = 12;
pub const PADDLE_H: i32 = 2;
pub const PADDLE_SPEED: i32 = 3;
pub const BALL: i32 = 2;
pub const SERVE_Y: i32 = 40;
pub const LIVES: u8 = 3;
pub const TICKS_PER_STEP: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ball {
    pub x: i32,
    pub y: i32,
    pub vx: i32,
    pub vy: i32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BreakoutState {
    pub paddle_x: i32,
    pub ball: Ball,
    /// Row-major occupancy, row 0 at the top.
    pub bricks: [[bool; BRICK_COLS]; BRICK_ROWS],
    pub lives: u8,
    pub step: u32,
    pub global_step: u64,
    pub rng: DynamicsRng,
}

impl BreakoutState {
    pub fn new(seed: u64, global_step: u64) -> Self {
        let mut rng = DynamicsRng::new(seed);
        let ball = serve(&mut rng);
        BreakoutState {
            paddle_x: (PLAY_LEFT + PLAY_RIGHT - PADDLE_W) / 2,
            ball,
            bricks: [[true; BRICK_COLS]; BRICK_ROWS],
            lives: LIVES,
            step: 0,
            global_step,
            rng,
        }
    }

    pub fn bricks_left(&self) -> usize {
        self.bricks.iter().flatten().filter(|&&b| b).count()
    }

    /// Advances one agent step ([`TICKS_PER_STEP`] physics ticks under the
    /// same action); returns `(reward, out_of_lives)`.
    pub fn advance(&mut self, action: Action) -> (f32, bool) {
        self.step += 1;
        self.global_step += 1;
        let mut reward = 0.0;
        for _ in 0..TICKS_PER_STEP {
            let (r, over) = self.tick(action);
            reward += r;
            if over {
                return (reward, true);
            }
        }
        (reward, false)
    }

    fn tick(&mut self, action: Action) -> (f32, bool) {
        match action {
            Action::Left => self.paddle_x -= PADDLE_SPEED,
            Action::Right => self.paddle_x += PADDLE_SPEED,
            Action::Noop => {}
        }
        self.paddle_x = self.paddle_x.clamp(PLAY_LEFT, PLAY_RIGHT - PADDLE_W);

        let b = &mut self.ball;
        b.x += b.vx;
        if b.x < PLAY_LEFT {
            b.x = 2 * PLAY_LEFT - b.x;
            b.vx = -b.vx;
        } else if b.x + BALL > PLAY_RIGHT {
            b.x = 2 * (PLAY_RIGHT - BALL) - b.x;
            b.vx = -b.vx;
        }
        let prev_bottom = b.y + BALL;
        b.y += b.vy;
        if b.y < PLAY_TOP {
            b.y = 2 * PLAY_TOP - b.y;
            b.vy = -b.vy;
        }

        let mut reward = 0.0;
        if let Some((r, c)) = self.hit_brick() {
            self.bricks[r][c] = false;
            self.ball.vy = -self.ball.vy;
            reward = 1.0;
            if self.bricks_left() == 0 {
                self.bricks = [[true; BRICK_COLS]; BRICK_ROWS];
            }
        }

        let b = &mut self.ball;
        let overlaps_paddle = b.x + BALL > self.paddle_x && b.x < self.paddle_x + PADDLE_W;
        if b.vy > 0 && prev_bottom <= PADDLE_Y && b.y + BALL > PADDLE_Y && overlaps_paddle {
            b.y = PADDLE_Y - BALL;
            b.vy = -b.vy;
            let rel = b.x + BALL / 2 - self.paddle_x;
            b.vx = match rel {
                i32::MIN..=2 => -2,
                3..=5 => -1,
                6..=8 => 1,
                _ => 2,
            };
        }

        if self.ball.y >= super::canvas::FRAME_SIZE as i32 {
            self.lives -= 1;
            if self.lives == 0 {
                return (reward, true);
            }
            self.ball = serve(&mut self.rng);
        }
        (reward, false)
    }

    fn hit_brick(&self) -> Option<(usize, usize)> {
        let b = &self.ball;
        for r in (0..BRICK_ROWS).rev() {
            let y = BRICK_TOP + r as i32 * BRICK_H;
            if b.y + BALL <= y || b.y >= y + BRICK_H {
                continue;
            }
            for c in 0..BRICK_COLS {
                let x = PLAY_LEFT + c as i32 * BRICK_W;
                if self.bricks[r][c] && b.x + BALL > x && b.x < x + BRICK_W {
                    return Some((r, c));
                }
            }
        }
        None
    }
}

fn serve(rng: &mut DynamicsRng) -> Ball {
    let x = PLAY_LEFT + rng.below((PLAY_RIGHT - PLAY_LEFT - BALL + 1) as u64) as i32;
    let vx = [-2, -1, 1, 2][rng.below(4) as usize];
    Ball { x, y: SERVE_Y, vx, vy: 2 }
}

/// Visual variants of BreakoutLite. Only the background decoration differs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BreakoutVariant {
    Source,
    ConstRect,
    MovingSquare,
    GreenLines,
    Diagonals,
}

impl BreakoutVariant {
    pub const ALL: [BreakoutVariant; 5] = [
        BreakoutVariant::Source,
        BreakoutVariant::ConstRect,
        BreakoutVariant::MovingSquare,
        BreakoutVariant::GreenLines,
        BreakoutVariant::Diagonals,
    ];

    pub const TARGETS: [BreakoutVariant; 4] = [
        BreakoutVariant::ConstRect,
        BreakoutVariant::MovingSquare,
        BreakoutVariant::GreenLines,
        BreakoutVariant::Diagonals,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BreakoutVariant::Source => "source",
            BreakoutVariant::ConstRect => "const-rect",
            BreakoutVariant::MovingSquare => "moving-square",
            BreakoutVariant::GreenLines => "green-lines",
            BreakoutVariant::Diagonals => "diagonals",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.id() == id)
    }
}

pub const BACKGROUND: Rgb = Rgb(0, 0, 0);
pub const WALL: Rgb = Rgb(142, 142, 142);
pub const PADDLE: Rgb = Rgb(200, 72, 72);
pub const BALL_COLOR: Rgb = Rgb(236, 236, 236);
pub const BRICK_COLORS: [Rgb; BRICK_ROWS] = [
    Rgb(200, 72, 72),
    Rgb(198, 108, 58),
    Rgb(180, 122, 48),
    Rgb(162, 162, 42),
    Rgb(72, 160, 72),
    Rgb(66, 72, 200),
];

/// Decorative elements, in frame pixels.
pub mod decor {
    use super::Rgb;

    /// `(x, y, w, h)` of the constant rectangle; brick sized.
    pub const RECT: (i32, i32, i32, i32) = (39, 50, 6, 3);
    pub const RECT_COLOR: Rgb = Rgb(236, 236, 236);
    /// Top-left corners of the moving square's three stations.
    pub const SQUARE_STATIONS: [(i32, i32); 3] = [(14, 46), (39, 56), (62, 42)];
    pub const SQUARE: i32 = 6;
    pub const SQUARE_COLOR: Rgb = Rgb(236, 236, 236);
    pub const SQUARE_PERIOD: u64 = 1000;
    /// `(x0, x1, y)` horizontal segments, one pixel thick.
    pub const GREEN_LINES: [(i32, i32, i32); 5] =
        [(10, 52, 38), (30, 76, 46), (8, 34, 55), (44, 72, 62), (20, 60, 69)];
    pub const GREEN: Rgb = Rgb(72, 200, 72);
    /// Bounding box `(x0, y0, x1, y1)` of the diagonal hatching.
    pub const DIAGONAL_REGION: (i32, i32, i32, i32) = (6, 36, 32, 72);
    pub const DIAGONAL_PITCH: i32 = 6;
    pub const DIAGONAL_COLOR: Rgb = Rgb(150, 90, 190);
}

/// Station index of the moving square after `global_step` environment steps.
pub fn square_station(global_step: u64) -> usize {
    ((global_step / decor::SQUARE_PERIOD) % 3) as usize
}

pub fn render(state: &BreakoutState, variant: BreakoutVariant) -> Frame {
    let mut cv = Canvas::new(BACKGROUND);
    match variant {
        BreakoutVariant::Source => {}
        BreakoutVariant::ConstRect => {
            let (x, y, w, h) = decor::RECT;
            cv.rect(x, y, w, h, decor::RECT_COLOR);
        }
        BreakoutVariant::MovingSquare => {
            let (x, y) = decor::SQUARE_STATIONS[square_station(state.global_step)];
            cv.rect(x, y, decor::SQUARE, decor::SQUARE, decor::SQUARE_COLOR);
        }
        BreakoutVariant::GreenLines => {
            for (x0, x1, y) in decor::GREEN_LINES {
                cv.rect(x0, y, x1 - x0, 1, decor::GREEN);
            }
        }
        BreakoutVariant::Diagonals => {
            let (x0, y0, x1, y1) = decor::DIAGONAL_REGION;
            for y in y0..y1 {
                for x in x0..x1 {
                    if (x + y).rem_euclid(decor::DIAGONAL_PITCH) == 0 {
                        cv.put(x, y, decor::DIAGONAL_COLOR);
                    }
                }
            }
        }
    }
    cv.rect(PLAY_LEFT - 3, PLAY_TOP - 3, PLAY_RIGHT - PLAY_LEFT + 6, 3, WALL);
    cv.rect(PLAY_LEFT - 3, PLAY_TOP, 3, 84 - PLAY_TOP, WALL);
    cv.rect(PLAY_RIGHT, PLAY_TOP, 3, 84 - PLAY_TOP, WALL);
    for (r, row) in state.bricks.iter().enumerate() {
        for (c, &present) in row.iter().enumerate() {
            if present {
                let x = PLAY_LEFT + c as i32 * BRICK_W;
                cv.rect(x, BRICK_TOP + r as i32 * BRICK_H, BRICK_W, BRICK_H, BRICK_COLORS[r]);
            }
        }
    }
    cv.rect(state.paddle_x, PADDLE_Y, PADDLE_W, PADDLE_H, PADDLE);
    cv.rect(state.ball.x, state.ball.y, BALL, BALL, BALL_COLOR);
    cv.finish()
}
