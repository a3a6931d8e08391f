//! Run configuration: a flat `key = value` file checked against a closed
//! schema, with command-line overrides applied on top.

use std::collections::BTreeMap;
use std::fmt;

use transferlab_core::agent::{ActMode, FinetuneSetting};
use transferlab_core::envs::{BreakoutVariant, Game, Skin};
use transferlab_core::translate::SharingMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Bool,
    Text,
    Game,
    Variant,
    Mode,
    Setting,
    Sharing,
}

pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, kind: Kind, default: &'static str, help: &'static str) -> Key {
    Key { name, kind, default, help }
}

/// Every accepted key. Hyperparameter names follow the usual table wording.
pub const SCHEMA: &[Key] = &[
    key("game", Kind::Game, "breakout", "breakout | road"),
    key("variant", Kind::Variant, "source", "breakout: source, const-rect, moving-square, green-lines, diagonals; road: level1..level4"),
    key("seed", Kind::Int, "0", "root seed; every stream is derived from it"),
    key("max episode steps", Kind::Int, "10000", "episode cut-off"),
    key("state size", Kind::Int, "84", "side of the square grayscale observation"),
    key("# actor learners", Kind::Int, "8", "parallel environments"),
    key("discount rate", Kind::Float, "0.99", "gamma"),
    key("RMSprop learning rate", Kind::Float, "0.0007", "A2C step size"),
    key("step-returns", Kind::Int, "20", "rollout length per update"),
    key("entropy regularization weight", Kind::Float, "0.01", "alpha"),
    key("value loss weight", Kind::Float, "0.5", "weight of the squared value error"),
    key("max gradient norm", Kind::Float, "0.5", "global clip; 0 disables"),
    key("life loss cuts return", Kind::Bool, "true", "treat a lost life as the end of the bootstrapped return"),
    key("frame budget", Kind::Int, "2000000", "environment steps summed over workers"),
    key("update budget", Kind::Int, "0", "optimizer updates; 0 means unlimited"),
    key("report every", Kind::Int, "100", "updates between metrics rows"),
    key("finetune setting", Kind::Setting, "full-ft", "from-scratch, full-ft, random-output, partial-ft, partial-random-ft"),
    key("frames per domain", Kind::Int, "5000", "frames collected per dataset"),
    key("GAN iterations", Kind::Int, "20000", "translator updates"),
    key("Adam learning rate", Kind::Float, "0.0001", "translator step size"),
    key("cycle weight", Kind::Float, "10", "lambda of the cycle term"),
    key("sharing mode", Kind::Sharing, "shared-inner", "shared-inner | independent"),
    key("evaluate every", Kind::Int, "1000", "translator iterations between checkpoint evaluations"),
    key("selection episodes", Kind::Int, "10", "episodes per checkpoint evaluation"),
    key("evaluation episodes", Kind::Int, "30", "episodes for eval-transfer"),
    key("evaluation mode", Kind::Mode, "deterministic", "deterministic | stochastic"),
    key("translator", Kind::Text, "identity", "identity | oracle | path to a translator checkpoint"),
    key("trajectories", Kind::Int, "5", "demonstration episodes"),
    key("beta_1", Kind::Float, "0.75", "demonstration filter threshold"),
    key("beta_2", Kind::Float, "0.6", "off-policy gate threshold"),
    key("Supervised_Iterations", Kind::Int, "500", "pretraining batches"),
    key("SGD learning rate", Kind::Float, "0.0007", "imitation step size"),
    key("SGD momentum", Kind::Float, "0.9", "imitation momentum"),
    key("b", Kind::Int, "4", "imitation batch size"),
    key("op_interval", Kind::Int, "100", "updates between off-policy opportunities"),
    key("policy", Kind::Text, "", "policy checkpoint to read"),
    key("source frames", Kind::Text, "", "RLGF dataset of the source skin"),
    key("target frames", Kind::Text, "", "RLGF dataset of the target skin"),
    key("demos", Kind::Text, "", "demonstration checkpoint"),
    key("output", Kind::Text, "", "artefact to write"),
    key("metrics", Kind::Text, "", "metrics CSV to append to"),
    key("report", Kind::Text, "", "evaluation report CSV to write"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

pub fn schema_key(name: &str) -> Option<&'static Key> {
    SCHEMA.iter().find(|k| k.name == name)
}

fn check_value(k: &Key, v: &str) -> Result<()> {
    let ok = match k.kind {
        Kind::Float => v.parse::<f64>().is_ok_and(f64::is_finite),
        Kind::Int => v.parse::<u64>().is_ok(),
        Kind::Bool => matches!(v, "true" | "false"),
        Kind::Text => true,
        Kind::Game => matches!(v, "breakout" | "road"),
        Kind::Variant => Skin::from_id(v).is_ok(),
        Kind::Mode => matches!(v, "deterministic" | "stochastic"),
        Kind::Setting => FinetuneSetting::from_id(v).is_some(),
        Kind::Sharing => SharingMode::from_id(v).is_some(),
    };
    if ok {
        Ok(())
    } else {
        err(format!("`{}` = `{v}` is not valid ({})", k.name, k.help))
    }
}

/// Validated configuration; every schema key has a value.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: SCHEMA.iter().map(|k| (k.name, k.default.to_string())).collect() }
    }
}

impl RunConfig {
    /// Parses `key = value` lines. A line starting with `#` is a comment unless
    /// it assigns a schema key (`# actor learners` begins with one).
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            let assigns_key = line.split_once('=').is_some_and(|(k, _)| schema_key(k.trim()).is_some());
            if line.is_empty() || (line.starts_with('#') && !assigns_key) {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", n + 1));
            };
            let k = k.trim();
            if seen.insert(k.to_string(), n).is_some() {
                return err(format!("line {}: `{k}` given twice", n + 1));
            }
            cfg.set(k, v.trim()).map_err(|e| ConfigError(format!("line {}: {e}", n + 1)))?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let Some(k) = schema_key(name) else {
            return err(format!("unknown key `{name}`"));
        };
        check_value(k, value)?;
        self.values.insert(k.name, value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides, then re-checks cross-key constraints.
    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for p in pairs {
            let Some((k, v)) = p.split_once('=') else {
                return err(format!("override `{p}` is not `key=value`"));
            };
            self.set(k.trim(), v.trim())?;
        }
        self.check()
    }

    /// Cross-key constraints.
    pub fn check(&self) -> Result<()> {
        let skin = self.skin_unchecked()?;
        if skin.game() != self.game() {
            return err(format!("variant `{}` does not belong to game `{}`", self.text("variant"), self.text("game")));
        }
        for k in ["# actor learners", "step-returns", "state size", "report every", "b", "op_interval", "max episode steps"] {
            if self.int(k) == 0 {
                return err(format!("`{k}` must be positive"));
            }
        }
        Ok(())
    }

    pub fn text(&self, name: &str) -> &str {
        self.values.get(name).unwrap_or_else(|| panic!("`{name}` is not a schema key"))
    }

    /// Path-like value, `None` when empty.
    pub fn path(&self, name: &str) -> Option<&str> {
        Some(self.text(name)).filter(|s| !s.is_empty())
    }

    pub fn float(&self, name: &str) -> f64 {
        self.text(name).parse().expect("validated on set")
    }

    pub fn int(&self, name: &str) -> u64 {
        self.text(name).parse().expect("validated on set")
    }

    pub fn flag(&self, name: &str) -> bool {
        self.text(name) == "true"
    }

    pub fn game(&self) -> Game {
        if self.text("game") == "road" {
            Game::Road
        } else {
            Game::Breakout
        }
    }

    fn skin_unchecked(&self) -> Result<Skin> {
        Skin::from_id(self.text("variant")).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn skin(&self) -> Skin {
        self.skin_unchecked().expect("validated on set")
    }

    /// Source skin of the configured game.
    pub fn source_skin(&self) -> Skin {
        match self.game() {
            Game::Breakout => Skin::Breakout(BreakoutVariant::Source),
            Game::Road => Skin::Road(1),
        }
    }

    pub fn mode(&self) -> ActMode {
        if self.text("evaluation mode") == "stochastic" {
            ActMode::Stochastic
        } else {
            ActMode::Deterministic
        }
    }

    pub fn setting(&self) -> FinetuneSetting {
        FinetuneSetting::from_id(self.text("finetune setting")).expect("validated on set")
    }

    pub fn sharing(&self) -> SharingMode {
        SharingMode::from_id(self.text("sharing mode")).expect("validated on set")
    }

    /// Every entry, in schema order, as `key = value` lines.
    pub fn render(&self) -> String {
        SCHEMA.iter().map(|k| format!("{} = {}\n", k.name, self.text(k.name))).collect()
    }
}
