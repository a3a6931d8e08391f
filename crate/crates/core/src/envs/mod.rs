//! Seedable pixel games, their visual skins, and observation preprocessing.
//!
//! Dynamics and rendering are separated: a [`GameState`] evolves the same way
//! whatever skin is used to draw it, so re-rendering a state under another
//! skin is an exact ground-truth translation.

pub mod breakout;
pub mod canvas;
pub mod preprocess;
pub mod road;

use alloc::format;

use crate::error::{Error, Result};
use crate::numerics::derive_seed;

pub use breakout::{BreakoutState, BreakoutVariant};
pub use canvas::{Frame, Rgb, FRAME_SIZE};
pub use preprocess::{preprocess, FrameStack, Observation, STACK};
pub use road::RoadState;

/// Discrete action set shared by both games.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Noop = 0,
    Left = 1,
    Right = 2,
}

pub const ACTION_COUNT: usize = 3;

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [Action::Noop, Action::Left, Action::Right];

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::Contract(format!("action {index} outside 0..{ACTION_COUNT}")))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Splitmix64 stream used inside game dynamics. Kept separate from the
/// agent's RNG so dynamics never depend on how many samples a policy draws.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DynamicsRng(u64);

impl DynamicsRng {
    pub fn new(seed: u64) -> Self {
        DynamicsRng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw from `0..n` (`n > 0`).
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Game {
    Breakout,
    Road,
}

/// How a state is drawn: a Breakout variant or a RoadLite level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Skin {
    Breakout(BreakoutVariant),
    Road(u8),
}

impl Skin {
    pub fn game(self) -> Game {
        match self {
            Skin::Breakout(_) => Game::Breakout,
            Skin::Road(_) => Game::Road,
        }
    }

    /// Parses `source`, `const-rect`, … for Breakout or `level1`…`level4` for RoadLite.
    pub fn from_id(id: &str) -> Result<Self> {
        if let Some(v) = BreakoutVariant::from_id(id) {
            return Ok(Skin::Breakout(v));
        }
        let level = id
            .strip_prefix("level")
            .and_then(|n| n.parse::<u8>().ok())
            .ok_or_else(|| Error::Config(format!("unknown variant id `{id}`")))?;
        let skin = Skin::Road(level);
        skin.validate()?;
        Ok(skin)
    }

    pub fn id(self) -> alloc::string::String {
        match self {
            Skin::Breakout(v) => v.id().into(),
            Skin::Road(l) => format!("level{l}"),
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Skin::Road(l) if !(1..=4).contains(&l) => Err(Error::Config(format!("unknown road level {l}"))),
            _ => Ok(()),
        }
    }
}

pub const DEFAULT_MAX_STEPS: u32 = 10_000;

/// Which game to play and how it looks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnvConfig {
    /// For RoadLite the level also selects the dynamics (width, density).
    pub skin: Skin,
    pub max_steps: u32,
}

impl EnvConfig {
    pub fn new(skin: Skin) -> Self {
        EnvConfig { skin, max_steps: DEFAULT_MAX_STEPS }
    }

    pub fn breakout(variant: BreakoutVariant) -> Self {
        Self::new(Skin::Breakout(variant))
    }

    pub fn road(level: u8) -> Self {
        Self::new(Skin::Road(level))
    }

    pub fn with_max_steps(mut self, max_steps: u32) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn game(&self) -> Game {
        self.skin.game()
    }

    /// The same dynamics drawn in the source look (Breakout `source`, RoadLite level 1).
    pub fn source_skin(&self) -> Skin {
        match self.skin {
            Skin::Breakout(_) => Skin::Breakout(BreakoutVariant::Source),
            Skin::Road(_) => Skin::Road(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GameState {
    Breakout(BreakoutState),
    Road(RoadState),
}

impl GameState {
    pub fn game(&self) -> Game {
        match self {
            GameState::Breakout(_) => Game::Breakout,
            GameState::Road(_) => Game::Road,
        }
    }

    /// Steps taken in the current episode.
    pub fn step_count(&self) -> u32 {
        match self {
            GameState::Breakout(s) => s.step,
            GameState::Road(s) => s.step,
        }
    }

    /// Lives remaining; games without lives always report one.
    pub fn lives(&self) -> u8 {
        match self {
            GameState::Breakout(s) => s.lives,
            GameState::Road(_) => 1,
        }
    }

    /// Steps taken since the environment was created, across episodes.
    pub fn global_step(&self) -> u64 {
        match self {
            GameState::Breakout(s) => s.global_step,
            GameState::Road(s) => s.global_step,
        }
    }
}

/// Initial state for `seed`, with the global step counter starting at `global_step`.
pub fn reset_at(config: &EnvConfig, seed: u64, global_step: u64) -> Result<(GameState, Frame)> {
    config.skin.validate()?;
    let state = match config.skin {
        Skin::Breakout(_) => GameState::Breakout(BreakoutState::new(seed, global_step)),
        Skin::Road(level) => GameState::Road(RoadState::new(level, seed, global_step)),
    };
    let frame = render_variant(&state, config.skin)?;
    Ok((state, frame))
}

pub fn reset(config: &EnvConfig, seed: u64) -> Result<(GameState, Frame)> {
    reset_at(config, seed, 0)
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub frame: Frame,
    pub reward: f32,
    pub terminal: bool,
    /// A life was lost (always set together with a terminal crash).
    pub life_lost: bool,
}

/// Advances `state` by one action and renders the result under `config.skin`.
pub fn step(config: &EnvConfig, state: &mut GameState, action: usize) -> Result<Transition> {
    let action = Action::from_index(action)?;
    let lives = state.lives();
    let (reward, over) = match state {
        GameState::Breakout(s) => s.advance(action),
        GameState::Road(s) => s.advance(action),
    };
    let terminal = over || state.step_count() >= config.max_steps;
    let life_lost = over || state.lives() < lives;
    let frame = render_variant(state, config.skin)?;
    Ok(Transition { frame, reward, terminal, life_lost })
}

/// Draws `state` with `skin`. Pure in `(state, skin)`.
pub fn render_variant(state: &GameState, skin: Skin) -> Result<Frame> {
    skin.validate()?;
    match (state, skin) {
        (GameState::Breakout(s), Skin::Breakout(v)) => Ok(breakout::render(s, v)),
        (GameState::Road(s), Skin::Road(l)) => Ok(road::render(s, l)),
        _ => Err(Error::Config(format!("skin {} does not fit a {:?} state", skin.id(), state.game()))),
    }
}

/// Ground-truth translation: the state as it would look under `to`.
pub fn oracle_translate(state: &GameState, from: Skin, to: Skin) -> Result<Frame> {
    if from.game() != state.game() {
        return Err(Error::Config(format!("skin {} does not fit a {:?} state", from.id(), state.game())));
    }
    render_variant(state, to)
}

/// Episodic wrapper: reseeds each episode from a base seed and carries the
/// global step counter (which drives the moving-square schedule) across resets.
#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
    seed: u64,
    episode: u64,
    state: GameState,
    frame: Frame,
    score: f32,
}

impl Env {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        let (state, frame) = reset_at(&config, derive_seed(seed, 0), 0)?;
        Ok(Env { config, seed, episode: 0, state, frame, score: 0.0 })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// Score accumulated in the running episode.
    pub fn score(&self) -> f32 {
        self.score
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    /// Starts the next episode; returns its first frame.
    pub fn reset(&mut self) -> Result<&Frame> {
        self.episode += 1;
        let (state, frame) = reset_at(&self.config, derive_seed(self.seed, self.episode), self.state.global_step())?;
        self.state = state;
        self.frame = frame;
        self.score = 0.0;
        Ok(&self.frame)
    }

    pub fn step(&mut self, action: usize) -> Result<Transition> {
        let t = step(&self.config, &mut self.state, action)?;
        self.frame = t.frame.clone();
        self.score += t.reward;
        Ok(t)
    }
}
