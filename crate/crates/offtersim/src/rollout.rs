//! Episode driver shared by `rollout` and `eval`, in-process or over the wire.

use std::io::Write;
use std::path::PathBuf;

use offtersim_core::{
    aggregate, derive_seed, ActionMode, AggregateReport, DoneReason, EnvAction, Environment, EpisodeConfig,
    FrenetState, MetricsReport, ObservationMode, RewardTerms,
};
use offtersim_core::env::RunLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::client::Client;
use crate::error::CliError;
use crate::protocol::{EpisodeParams, ShieldLog, WireAction};

const RANDOM_POLICY_SALT: u64 = 0x5EED_0FAC_7100_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Built-in expert, in process.
    Expert,
    /// Uniform random commands from a seeded stream, in process.
    Random,
    /// Expert actions relayed through a running server.
    Remote,
}

#[derive(Debug, Clone)]
pub struct RolloutOptions {
    pub seed: u64,
    pub episodes: usize,
    pub policy: PolicyKind,
    pub out: Option<PathBuf>,
    pub server: String,
    pub config: EpisodeConfig,
}

#[derive(Debug, Clone)]
pub struct RolloutSummary {
    pub reports: Vec<MetricsReport>,
    pub aggregate: AggregateReport,
    /// Some episode ended on a simulation fault.
    pub faulted: bool,
    pub label: RunLabel,
}

/// What a driver reports after each step.
#[derive(Debug, Clone)]
pub struct Transition {
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
    pub reason: Option<DoneReason>,
    pub shield: ShieldLog,
    pub frenet: FrenetState,
    pub metrics: Option<MetricsReport>,
    pub expert: Option<EnvAction>,
}

pub struct Start {
    pub params: EpisodeParams,
    pub expert: Option<EnvAction>,
}

/// An environment reachable in process or through the protocol.
pub trait Driver {
    fn reset(&mut self, seed: u64) -> Result<Start, CliError>;
    fn step(&mut self, action: &EnvAction) -> Result<Transition, CliError>;
}

pub struct Local(pub Environment);

impl Driver for Local {
    fn reset(&mut self, seed: u64) -> Result<Start, CliError> {
        let env = &mut self.0;
        env.reset(seed)?;
        let terrain = env.terrain()?;
        let params = EpisodeParams {
            seed,
            terrain: terrain.params().clone(),
            vehicle: env.vehicle_params()?.clone(),
            trail_length: terrain.trail_length(),
        };
        Ok(Start { params, expert: Some(env.expert_env_action()?) })
    }

    fn step(&mut self, action: &EnvAction) -> Result<Transition, CliError> {
        let r = self.0.step(action)?;
        Ok(Transition {
            reward: r.reward,
            terms: r.info.terms,
            done: r.done,
            reason: r.reason,
            shield: ShieldLog::from(&r.info.shield),
            frenet: r.observation.frenet,
            metrics: if r.done { Some(self.0.finalize_metrics()?) } else { None },
            expert: if r.done { None } else { Some(self.0.expert_env_action()?) },
        })
    }
}

pub struct Remote {
    client: Client,
    env_id: u64,
}

impl Remote {
    /// Connects and creates a server-side environment running `config`.
    pub fn open(addr: &str, config: &EpisodeConfig) -> Result<Self, CliError> {
        let mut client = Client::connect(addr)?;
        let overrides = serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?;
        let made = client.make(None, Some(overrides))?;
        let env_id = made.env_id.ok_or_else(|| CliError::Io("make response without env_id".into()))?;
        Ok(Self { client, env_id })
    }

    pub fn client(&mut self) -> &mut Client {
        &mut self.client
    }

    pub fn env_id(&self) -> u64 {
        self.env_id
    }
}

fn wire_expert(a: Option<WireAction>) -> Result<Option<EnvAction>, CliError> {
    a.map(|w| w.to_env().map_err(CliError::Io)).transpose()
}

impl Driver for Remote {
    fn reset(&mut self, seed: u64) -> Result<Start, CliError> {
        let r = self.client.reset(self.env_id, Some(seed))?;
        let params = r.episode.ok_or_else(|| CliError::Io("reset response without episode".into()))?;
        Ok(Start { params, expert: wire_expert(r.info.and_then(|i| i.expert_action))? })
    }

    fn step(&mut self, action: &EnvAction) -> Result<Transition, CliError> {
        let r = self.client.step(self.env_id, WireAction::from(*action))?;
        let missing = |what: &str| CliError::Io(format!("step response without {what}"));
        let info = r.info.ok_or_else(|| missing("info"))?;
        Ok(Transition {
            reward: r.reward.ok_or_else(|| missing("reward"))?,
            terms: r.reward_terms.ok_or_else(|| missing("reward_terms"))?,
            done: r.done.ok_or_else(|| missing("done"))?,
            reason: r.done_reason,
            shield: info.shield.ok_or_else(|| missing("shield"))?,
            frenet: r.observation.ok_or_else(|| missing("observation"))?.frenet,
            metrics: r.metrics,
            expert: wire_expert(info.expert_action)?,
        })
    }
}

fn random_action(rng: &mut ChaCha8Rng, mode: ActionMode) -> EnvAction {
    let throttle = rng.random::<f64>();
    let brake = if rng.random::<f64>() < 0.1 { rng.random::<f64>() } else { 0.0 };
    match mode {
        ActionMode::Continuous => EnvAction::continuous(rng.random_range(-1.0..=1.0), throttle, brake),
        ActionMode::Discrete { n } => EnvAction::discrete(rng.random_range(0..n), throttle, brake),
    }
}

pub fn run_label(config: &EpisodeConfig) -> RunLabel {
    RunLabel {
        index: 1,
        privileged: config.observation_mode != ObservationMode::Depth,
        discrete: matches!(config.action_mode, ActionMode::Discrete { .. }),
        cbf: config.shield.enabled,
        pretrain: None,
    }
}

fn emit(log: &mut Option<Box<dyn Write>>, value: &serde_json::Value) -> Result<(), CliError> {
    if let Some(w) = log {
        serde_json::to_writer(&mut *w, value).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Runs one episode through `driver`, logging header, steps and metrics.
pub fn run_episode(
    driver: &mut dyn Driver,
    opts: &RolloutOptions,
    episode: usize,
    log: &mut Option<Box<dyn Write>>,
) -> Result<(MetricsReport, Option<DoneReason>), CliError> {
    let seed = derive_seed(opts.seed, episode as u64);
    let start = driver.reset(seed)?;
    emit(
        log,
        &json!({
            "type": "header",
            "episode": episode,
            "seed": seed,
            "policy": opts.policy,
            "action_mode": opts.config.action_mode,
            "observation_mode": opts.config.observation_mode,
            "shield": opts.config.shield.enabled,
            "params": start.params,
        }),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ RANDOM_POLICY_SALT);
    let mut expert = start.expert;
    let mut t = 0usize;
    loop {
        let action = match opts.policy {
            PolicyKind::Random => random_action(&mut rng, opts.config.action_mode),
            PolicyKind::Expert | PolicyKind::Remote => {
                expert.ok_or_else(|| CliError::Fault("no expert action available".into()))?
            }
        };
        let tr = driver.step(&action)?;
        t += 1;
        emit(
            log,
            &json!({
                "type": "step",
                "t": t,
                "action": WireAction::from(action),
                "u_safe": tr.shield.u_safe,
                "shield": tr.shield,
                "frenet": tr.frenet,
                "reward": tr.reward,
                "reward_terms": tr.terms,
                "done": tr.done,
                "done_reason": tr.reason,
            }),
        )?;
        if tr.done {
            let report = tr.metrics.ok_or_else(|| CliError::Io("episode ended without metrics".into()))?;
            emit(log, &json!({"type": "metrics", "episode": episode, "report": report}))?;
            return Ok((report, tr.reason));
        }
        expert = tr.expert;
    }
}

pub fn open_log(out: &Option<PathBuf>) -> Result<Option<Box<dyn Write>>, CliError> {
    match out {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok(Some(Box::new(std::io::BufWriter::new(f))))
        }
        None => Ok(None),
    }
}

pub fn rollout(opts: &RolloutOptions) -> Result<RolloutSummary, CliError> {
    opts.config.validate()?;
    let mut log = open_log(&opts.out)?;
    let mut driver: Box<dyn Driver> = match opts.policy {
        PolicyKind::Remote => Box::new(Remote::open(&opts.server, &opts.config)?),
        _ => Box::new(Local(Environment::new(opts.config.clone())?)),
    };
    let mut reports = Vec::with_capacity(opts.episodes);
    let mut faulted = false;
    for k in 0..opts.episodes {
        let (report, reason) = run_episode(driver.as_mut(), opts, k, &mut log)?;
        faulted |= reason == Some(DoneReason::Fault);
        reports.push(report);
    }
    let agg = aggregate(&reports);
    emit(&mut log, &json!({"type": "aggregate", "report": agg}))?;
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    Ok(RolloutSummary { aggregate: agg, reports, faulted, label: run_label(&opts.config) })
}
