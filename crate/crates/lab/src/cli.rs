//! Command line: one subcommand per pipeline stage.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{error::ErrorKind, Parser, Subcommand};
use transferlab_core::agent::{
    apply_finetune_setting, init_policy, policy_architecture, train_a2c, A2cConfig, Budget, Control, LossWeights,
    PolicyShape, Progress,
};
use transferlab_core::envs::{EnvConfig, Game, Skin, STACK};
use transferlab_core::imitation::{collect_demonstrations, measure_reference_score, pretrain, train_il, GateState, IlConfig};
use transferlab_core::numerics::{Architecture, Init, NetworkParams, OptimizerKind};
use transferlab_core::transfer::{eval_with_translation, CheckpointSelector, SelectionConfig, Translator};
use transferlab_core::translate::{train_translator, Domain, FrameDataset, TranslatorConfig, TranslatorPair, TranslatorShape};

use crate::checkpoint::{load_demos, load_translator, save_demos, save_translator, PolicyCheckpoint};
use crate::config::RunConfig;
use crate::frames::{load_frames, save_frames};
use crate::metrics::{write_eval_reports, MetricsRecord, MetricsWriter};

#[derive(Parser, Debug)]
#[command(name = "transferlab", version, about = "Visual transfer laboratory: A2C agents, frame translators and imitation", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an A2C policy on the game's source skin.
    TrainSource(StageArgs),
    /// Record frames of one skin under a random policy (RLGF file).
    CollectFrames(StageArgs),
    /// Train a frame translator between two datasets, selecting checkpoints by task score.
    TrainGan(StageArgs),
    /// Evaluate a policy on a skin through a translator.
    EvalTransfer(StageArgs),
    /// Gather filtered demonstrations through a translator.
    CollectDemos(StageArgs),
    /// Pretrain on demonstrations, then run gated A2C.
    TrainIl(StageArgs),
    /// Continue training a source policy on a target skin under a fine-tuning setting.
    Finetune(StageArgs),
    /// Train a fresh policy directly on the configured skin.
    BaselineScratch(StageArgs),
}

/// Flags shared by every stage. Precedence: config file < `--set` < named flags.
#[derive(clap::Args, Debug)]
struct StageArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    game: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// identity | oracle | translator checkpoint path.
    #[arg(long)]
    translator: Option<String>,
    /// Fine-tuning setting.
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    demos: Option<String>,
    #[arg(long)]
    source_frames: Option<String>,
    #[arg(long)]
    target_frames: Option<String>,
    /// Frame budget for training stages.
    #[arg(long)]
    frames: Option<u64>,
    /// Frames per dataset for collect-frames.
    #[arg(long)]
    count: Option<u64>,
    /// Translator iterations.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    report: Option<String>,
}

impl StageArgs {
    fn flag_overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("{k}={v}"));
            }
        };
        put("game", self.game.clone());
        put("variant", self.variant.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("translator", self.translator.clone());
        put("finetune setting", self.setting.clone());
        put("policy", self.policy.clone());
        put("demos", self.demos.clone());
        put("source frames", self.source_frames.clone());
        put("target frames", self.target_frames.clone());
        put("frame budget", self.frames.map(|v| v.to_string()));
        put("frames per domain", self.count.map(|v| v.to_string()));
        put("GAN iterations", self.iterations.map(|v| v.to_string()));
        put("evaluation episodes", self.episodes.map(|v| v.to_string()));
        put("output", self.out.clone());
        put("metrics", self.metrics.clone());
        put("report", self.report.clone());
        out
    }

    fn build_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RunConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        // a variant flag alone implies its game
        if let Some(v) = &self.variant {
            if self.game.is_none() && !self.set.iter().any(|s| s.trim_start().starts_with("game")) {
                if let Ok(skin) = Skin::from_id(v) {
                    let game = if skin.game() == Game::Road { "road" } else { "breakout" };
                    cfg.set("game", game)?;
                    cfg.set("variant", v)?;
                }
            }
        }
        cfg.apply_overrides(self.set.iter().map(String::as_str))?;
        let mut flags = self.flag_overrides();
        // a game flag alone switches to that game's source skin
        if let (Some(game), None) = (&self.game, &self.variant) {
            let current = Skin::from_id(cfg.text("variant")).ok().map(|s| s.game());
            let wanted = if game == "road" { Game::Road } else { Game::Breakout };
            if current != Some(wanted) {
                flags.push(format!("variant={}", if wanted == Game::Road { "level1" } else { "source" }));
            }
        }
        cfg.apply_overrides(flags.iter().map(String::as_str))?;
        Ok(cfg)
    }
}

impl Command {
    fn parts(&self) -> (&'static str, &StageArgs) {
        match self {
            Command::TrainSource(a) => ("train-source", a),
            Command::CollectFrames(a) => ("collect-frames", a),
            Command::TrainGan(a) => ("train-gan", a),
            Command::EvalTransfer(a) => ("eval-transfer", a),
            Command::CollectDemos(a) => ("collect-demos", a),
            Command::TrainIl(a) => ("train-il", a),
            Command::Finetune(a) => ("finetune", a),
            Command::BaselineScratch(a) => ("baseline-scratch", a),
        }
    }
}

/// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let (name, args) = cli.command.parts();
    let cfg = match args.build_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    match dispatch(name, &cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {name}: {e:#}");
            2
        }
    }
}

fn dispatch(name: &str, cfg: &RunConfig) -> Result<()> {
    match name {
        "train-source" => train_source(cfg),
        "collect-frames" => collect_frames(cfg),
        "train-gan" => train_gan(cfg),
        "eval-transfer" => eval_transfer(cfg),
        "collect-demos" => collect_demos(cfg),
        "train-il" => train_il_stage(cfg),
        "finetune" => finetune(cfg),
        "baseline-scratch" => baseline_scratch(cfg),
        other => bail!("unknown stage {other}"),
    }
}

fn need<'a>(cfg: &'a RunConfig, key: &str) -> Result<&'a Path> {
    cfg.path(key).map(Path::new).with_context(|| format!("`{key}` must be set"))
}

pub fn env_config(cfg: &RunConfig, skin: Skin) -> EnvConfig {
    EnvConfig::new(skin).with_max_steps(cfg.int("max episode steps").min(u32::MAX as u64) as u32)
}

pub fn a2c_config(cfg: &RunConfig) -> A2cConfig {
    let workers = cfg.int("# actor learners") as usize;
    let clip = cfg.float("max gradient norm");
    A2cConfig {
        workers,
        n_steps: cfg.int("step-returns") as usize,
        gamma: cfg.float("discount rate") as f32,
        learning_rate: cfg.float("RMSprop learning rate"),
        optimizer: OptimizerKind::RMSPROP,
        weights: LossWeights {
            entropy: cfg.float("entropy regularization weight") as f32,
            value: cfg.float("value loss weight") as f32,
            max_grad_norm: (clip > 0.0).then_some(clip),
        },
        reward_window: workers,
        life_loss_cuts_return: cfg.flag("life loss cuts return"),
        seed: cfg.int("seed"),
    }
}

pub fn budget(cfg: &RunConfig) -> Budget {
    let updates = cfg.int("update budget");
    Budget {
        max_updates: if updates == 0 { u64::MAX } else { updates },
        max_frames: cfg.int("frame budget"),
        report_every: cfg.int("report every"),
    }
}

pub fn policy_shape(cfg: &RunConfig) -> PolicyShape {
    PolicyShape { obs_size: cfg.int("state size") as usize, ..PolicyShape::default() }
}

/// Progress sink writing metrics rows and a console line.
struct Recorder {
    writer: Option<MetricsWriter>,
    start: Instant,
    failure: Option<anyhow::Error>,
}

impl Recorder {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let writer = cfg.path("metrics").map(|p| MetricsWriter::open(Path::new(p))).transpose()?;
        Ok(Recorder { writer, start: Instant::now(), failure: None })
    }

    fn record(&mut self, p: &Progress) -> Control {
        let row = MetricsRecord::from_progress(self.start.elapsed().as_secs_f64(), p);
        eprintln!("frames {:>9}  updates {:>7}  mean {:>8.2}  episodes {}", p.frames, p.updates, p.mean_reward, p.episodes);
        if let Some(w) = &mut self.writer {
            if let Err(e) = w.write(&row) {
                self.failure = Some(e.into());
                return Control::Stop;
            }
        }
        Control::Continue
    }

    fn finish(self) -> Result<()> {
        self.failure.map_or(Ok(()), Err)
    }
}

fn train_policy(cfg: &RunConfig, skin: Skin, arch: Architecture, params: NetworkParams) -> Result<NetworkParams> {
    let env = env_config(cfg, skin);
    let mut rec = Recorder::new(cfg)?;
    let (params, progress) = train_a2c(&env, arch, params, a2c_config(cfg), budget(cfg), &mut |p| rec.record(p))?;
    rec.finish()?;
    eprintln!("done: {} frames, {} updates, mean reward {:.2}", progress.frames, progress.updates, progress.mean_reward);
    Ok(params)
}

fn save_policy(cfg: &RunConfig, shape: PolicyShape, params: NetworkParams) -> Result<()> {
    let out = need(cfg, "output")?;
    PolicyCheckpoint { shape, params }.save(out).with_context(|| format!("writing {}", out.display()))
}

fn train_source(cfg: &RunConfig) -> Result<()> {
    let skin = cfg.skin();
    ensure!(skin == cfg.source_skin(), "train-source runs on the source skin; use baseline-scratch for `{}`", skin.id());
    baseline_scratch(cfg)
}

fn baseline_scratch(cfg: &RunConfig) -> Result<()> {
    need(cfg, "output")?;
    let shape = policy_shape(cfg);
    let arch = policy_architecture(&shape)?;
    let params = init_policy(&arch, cfg.int("seed"))?;
    let params = train_policy(cfg, cfg.skin(), arch, params)?;
    save_policy(cfg, shape, params)
}

fn load_policy(cfg: &RunConfig) -> Result<(PolicyCheckpoint, Architecture)> {
    let path = need(cfg, "policy")?;
    let ckpt = PolicyCheckpoint::load(path).with_context(|| format!("reading {}", path.display()))?;
    let arch = ckpt.architecture()?;
    Ok((ckpt, arch))
}

fn finetune(cfg: &RunConfig) -> Result<()> {
    need(cfg, "output")?;
    let (source, arch) = load_policy(cfg)?;
    let params = apply_finetune_setting(&source.params, &arch, cfg.setting(), cfg.int("seed"))?;
    let params = train_policy(cfg, cfg.skin(), arch, params)?;
    save_policy(cfg, source.shape, params)
}

fn collect_frames(cfg: &RunConfig) -> Result<()> {
    let out = need(cfg, "output")?;
    let skin = cfg.skin();
    let domain = if skin == cfg.source_skin() { Domain::Source } else { Domain::Target };
    let count = cfg.int("frames per domain") as usize;
    let data = transferlab_core::translate::collect_frames(&env_config(cfg, skin), domain, count, cfg.int("seed"))?;
    save_frames(out, &data.frames)?;
    eprintln!("wrote {} {} frames to {}", data.len(), skin.id(), out.display());
    Ok(())
}

fn dataset(cfg: &RunConfig, key: &str, domain: Domain, skin: Skin) -> Result<FrameDataset> {
    let path = need(cfg, key)?;
    let frames = load_frames(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(!frames.is_empty(), "{} holds no frames", path.display());
    Ok(FrameDataset { domain, frames, env: env_config(cfg, skin), seed: cfg.int("seed") })
}

fn train_gan(cfg: &RunConfig) -> Result<()> {
    let out = need(cfg, "output")?;
    let source = dataset(cfg, "source frames", Domain::Source, cfg.source_skin())?;
    let target = dataset(cfg, "target frames", Domain::Target, cfg.skin())?;
    let dims = source.frames[0].shape().to_vec();
    ensure!(target.frames[0].shape() == dims.as_slice(), "source and target frames differ in shape");
    let shape = TranslatorShape { channels: dims[0], height: dims[1], width: dims[2], ..TranslatorShape::default() };
    let init = if cfg.game() == Game::Road { Init::Orthogonal } else { Init::Xavier };
    let mut pair = TranslatorPair::new(&shape, cfg.sharing(), init, init, cfg.int("seed"))?;
    let tcfg = TranslatorConfig {
        iterations: cfg.int("GAN iterations"),
        checkpoint_interval: cfg.int("evaluate every").max(1),
        lambda_cyc: cfg.float("cycle weight") as f32,
        learning_rate: cfg.float("Adam learning rate"),
        seed: cfg.int("seed"),
    };
    let policy = cfg.path("policy").map(|_| load_policy(cfg)).transpose()?;
    let sel_cfg = SelectionConfig { eval_every: 1, episodes: cfg.int("selection episodes") as usize, mode: cfg.mode(), seed: cfg.int("seed") };
    let mut selector = policy.as_ref().map(|(p, arch)| CheckpointSelector::new(arch, &p.params, env_config(cfg, cfg.skin()), sel_cfg));
    train_translator(&mut pair, &source, &target, &tcfg, &mut |it, p, l| {
        let score = match &mut selector {
            Some(s) => s.offer(it, p)?.map(|r| format!("  score {:.2}", r.mean)).unwrap_or_default(),
            None => String::new(),
        };
        eprintln!("iteration {it:>7}  d1 {:.4}  d2 {:.4}  adv {:.4}  cycle {:.4}{score}", l.d1, l.d2, l.adversarial, l.cycle);
        Ok(Control::Continue)
    })?;
    let best = match selector.and_then(|s| s.finish()) {
        Some((id, best, reports)) => {
            eprintln!("selected checkpoint {id}");
            if let Some(r) = cfg.path("report") {
                write_eval_reports(Path::new(r), &reports)?;
            }
            best
        }
        None => pair,
    };
    save_translator(out, &best, &shape)?;
    Ok(())
}

fn with_translator<T>(cfg: &RunConfig, f: impl FnOnce(Translator<'_>) -> Result<T>) -> Result<T> {
    match cfg.text("translator") {
        "identity" => f(Translator::Identity),
        "oracle" => f(Translator::Oracle),
        path => {
            let (pair, _) = load_translator(Path::new(path)).with_context(|| format!("reading translator {path}"))?;
            f(Translator::Learned(&pair))
        }
    }
}

fn eval_transfer(cfg: &RunConfig) -> Result<()> {
    let (policy, arch) = load_policy(cfg)?;
    let env = env_config(cfg, cfg.skin());
    let episodes = cfg.int("evaluation episodes") as usize;
    let report = with_translator(cfg, |t| Ok(eval_with_translation(&arch, &policy.params, t, &env, episodes, cfg.mode(), cfg.int("seed"))?))?;
    println!("{} via {}: mean {:.3} over {} episodes ({} frames)", cfg.skin().id(), cfg.text("translator"), report.mean, report.episodes(), report.frames);
    if let Some(r) = cfg.path("report") {
        write_eval_reports(Path::new(r), std::slice::from_ref(&report))?;
    }
    Ok(())
}

fn gate(cfg: &RunConfig, reference: f32) -> GateState {
    GateState {
        beta1: cfg.float("beta_1") as f32,
        beta2: cfg.float("beta_2") as f32,
        reference,
        op_interval: cfg.int("op_interval"),
    }
}

fn collect_demos(cfg: &RunConfig) -> Result<()> {
    let out = need(cfg, "output")?;
    let (policy, arch) = load_policy(cfg)?;
    let env = env_config(cfg, cfg.skin());
    let seed = cfg.int("seed");
    let collection = with_translator(cfg, |t| {
        let reference = measure_reference_score(&arch, &policy.params, t, &env, seed)?;
        eprintln!("reference score {reference}");
        let gamma = cfg.float("discount rate") as f32;
        Ok(collect_demonstrations(&arch, &policy.params, t, &env, cfg.int("trajectories") as usize, &gate(cfg, reference), gamma, seed)?)
    })?;
    for (s, k) in collection.scores.iter().zip(&collection.kept) {
        eprintln!("trajectory score {s:.2} {}", if *k { "kept" } else { "discarded" });
    }
    if collection.all_filtered() {
        eprintln!("warning: every trajectory was filtered out; the demonstration buffer is empty");
    }
    save_demos(out, &collection.buffer)?;
    Ok(())
}

fn train_il_stage(cfg: &RunConfig) -> Result<()> {
    need(cfg, "output")?;
    let path = need(cfg, "demos")?;
    let demos = load_demos(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(!demos.is_empty(), "{} holds no demonstrations", path.display());
    let shape = policy_shape(cfg);
    let expect = [STACK, shape.obs_size, shape.obs_size];
    ensure!(demos.observations[0].shape() == expect, "demonstrations have shape {:?}, policy expects {expect:?}", demos.observations[0].shape());
    let arch = policy_architecture(&shape)?;
    let seed = cfg.int("seed");
    let il = IlConfig {
        batch_size: cfg.int("b") as usize,
        learning_rate: cfg.float("SGD learning rate"),
        momentum: cfg.float("SGD momentum"),
        supervised_iterations: cfg.int("Supervised_Iterations"),
        seed,
    };
    let params = pretrain(&arch, init_policy(&arch, seed)?, &demos, &il)?;
    let env = env_config(cfg, cfg.skin());
    let mut rec = Recorder::new(cfg)?;
    let outcome = train_il(&env, arch, params, &demos, &gate(cfg, demos.reference), a2c_config(cfg), &il, budget(cfg), &mut |p| rec.record(p))?;
    rec.finish()?;
    eprintln!("done: {} frames, {} off-policy batches", outcome.progress.frames, outcome.off_policy_updates.len());
    save_policy(cfg, shape, outcome.params)
}
