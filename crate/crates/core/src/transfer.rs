//! Zero-shot transfer: play the target skin through a frame translator and
//! pick translator checkpoints by the score the policy achieves.

use alloc::vec::Vec;

use crate::agent::{play_episodes, ActMode};
use crate::envs::{oracle_translate, EnvConfig, Frame, GameState};
use crate::error::{contract, Result};
use crate::numerics::{Architecture, NetworkParams};
use crate::translate::{Direction, TranslatorPair};

/// Maps target frames to what the policy sees.
#[derive(Clone, Copy, Debug)]
pub enum Translator<'a> {
    /// Frames pass unchanged.
    Identity,
    /// Exact re-render of the underlying state in the source skin.
    Oracle,
    /// A learned target→source generator.
    Learned(&'a TranslatorPair),
}

impl Translator<'_> {
    pub fn apply(&self, env: &EnvConfig, state: &GameState, frame: &Frame) -> Result<Frame> {
        match self {
            Translator::Identity => Ok(frame.clone()),
            Translator::Oracle => oracle_translate(state, env.skin, env.source_skin()),
            Translator::Learned(pair) => pair.translate(frame, Direction::TargetToSource),
        }
    }
}

/// Scores of one evaluation run.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub checkpoint: u64,
    pub scores: Vec<f32>,
    pub mean: f32,
    /// Environment steps over all episodes.
    pub frames: u64,
}

impl EvalReport {
    pub fn episodes(&self) -> usize {
        self.scores.len()
    }
}

/// Plays `episodes` episodes on `env`, translating every frame before the
/// policy sees it; scores are the environment's own rewards.
#[allow(clippy::too_many_arguments)]
pub fn eval_with_translation(
    arch: &Architecture,
    params: &NetworkParams,
    translator: Translator<'_>,
    env: &EnvConfig,
    episodes: usize,
    mode: ActMode,
    seed: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(contract("evaluation needs at least one episode"));
    }
    let records = play_episodes(arch, params, env, episodes, mode, seed, &mut |s, f| translator.apply(env, s, f))?;
    let scores: Vec<f32> = records.iter().map(|r| r.score).collect();
    let mean = scores.iter().sum::<f32>() / scores.len() as f32;
    Ok(EvalReport { checkpoint: 0, scores, mean, frames: records.iter().map(|r| r.length).sum() })
}

/// Index of the earliest report with the highest mean.
pub fn earliest_best(reports: &[EvalReport]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        if best.is_none_or(|b| r.mean > reports[b].mean) {
            best = Some(i);
        }
    }
    best
}

/// Evaluation settings for checkpoint selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionConfig {
    /// Evaluate every this-many-th checkpoint of the stream.
    pub eval_every: usize,
    pub episodes: usize,
    pub mode: ActMode,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { eval_every: 1, episodes: 10, mode: ActMode::Deterministic, seed: 0 }
    }
}

/// Running selection over a checkpoint stream; keeps only the best pair.
pub struct CheckpointSelector<'p> {
    arch: &'p Architecture,
    params: &'p NetworkParams,
    env: EnvConfig,
    config: SelectionConfig,
    seen: usize,
    reports: Vec<EvalReport>,
    best: Option<(usize, TranslatorPair)>,
}

impl<'p> CheckpointSelector<'p> {
    pub fn new(arch: &'p Architecture, params: &'p NetworkParams, env: EnvConfig, config: SelectionConfig) -> Self {
        CheckpointSelector { arch, params, env, config, seen: 0, reports: Vec::new(), best: None }
    }

    /// Offers the next checkpoint; returns its report if it was evaluated.
    pub fn offer(&mut self, id: u64, pair: &TranslatorPair) -> Result<Option<&EvalReport>> {
        self.seen += 1;
        if self.seen % self.config.eval_every.max(1) != 0 {
            return Ok(None);
        }
        let c = &self.config;
        let mut report = eval_with_translation(self.arch, self.params, Translator::Learned(pair), &self.env, c.episodes, c.mode, c.seed)?;
        report.checkpoint = id;
        self.reports.push(report);
        let idx = self.reports.len() - 1;
        if earliest_best(&self.reports) == Some(idx) {
            self.best = Some((idx, pair.clone()));
        }
        Ok(self.reports.last())
    }

    pub fn reports(&self) -> &[EvalReport] {
        &self.reports
    }

    /// Best checkpoint id, its pair and all reports in stream order.
    pub fn finish(self) -> Option<(u64, TranslatorPair, Vec<EvalReport>)> {
        let (idx, pair) = self.best?;
        let id = self.reports[idx].checkpoint;
        Some((id, pair, self.reports))
    }
}

/// Evaluates a stream of `(id, pair)` checkpoints and returns the earliest
/// one with the best mean score, together with every report.
pub fn select_checkpoint<'a>(
    checkpoints: impl IntoIterator<Item = (u64, &'a TranslatorPair)>,
    arch: &Architecture,
    params: &NetworkParams,
    env: &EnvConfig,
    config: SelectionConfig,
) -> Result<(u64, Vec<EvalReport>)> {
    let mut selector = CheckpointSelector::new(arch, params, *env, config);
    for (id, pair) in checkpoints {
        selector.offer(id, pair)?;
    }
    let (id, _, reports) = selector.finish().ok_or_else(|| contract("no checkpoint was evaluated"))?;
    Ok((id, reports))
}
