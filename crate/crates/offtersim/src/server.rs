//! Multi-connection TCP server hosting environments by `env_id`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;

use offtersim_core::{DoneReason, Environment, EpisodeConfig};
use serde_json::Value;

use crate::config::apply_overrides;
use crate::protocol::{parse_request, EpisodeParams, Request, Response, ShieldLog, WireAction, WireInfo, WireObservation, VERSION};

struct Slot {
    env: Environment,
    owner: u64,
    default_seed: u64,
    faulted: Option<String>,
}

struct Shared {
    base: EpisodeConfig,
    max_envs: usize,
    envs: Mutex<HashMap<u64, Arc<Mutex<Slot>>>>,
    next_env: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, max_envs: usize, base: EpisodeConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let shared = Arc::new(Shared {
            base,
            max_envs,
            envs: Mutex::new(HashMap::new()),
            next_env: AtomicU64::new(0),
        });
        Ok(Self { listener, shared })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the listener fails; one thread per connection.
    pub fn run(self) -> std::io::Result<()> {
        let conn_ids = AtomicU64::new(0);
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            };
            let shared = Arc::clone(&self.shared);
            let conn = conn_ids.fetch_add(1, Ordering::Relaxed);
            thread::spawn(move || serve_connection(stream, &shared, conn));
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> thread::JoinHandle<std::io::Result<()>> {
        thread::spawn(move || self.run())
    }
}

fn serve_connection(stream: TcpStream, shared: &Shared, conn: u64) {
    let _ = stream.set_nodelay(true);
    let reader = match stream.try_clone() {
        Ok(s) => BufReader::new(s),
        Err(_) => return,
    };
    let mut writer = BufWriter::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let response = shared.dispatch(conn, &line);
        if writeln!(writer, "{}", response.to_line()).and_then(|_| writer.flush()).is_err() {
            break;
        }
    }
    lock(&shared.envs).retain(|_, slot| lock(slot).owner != conn);
}

impl Shared {
    fn dispatch(&self, conn: u64, line: &str) -> Response {
        let req = match parse_request(line) {
            Ok(r) => r,
            Err(resp) => return resp,
        };
        match req.cmd.as_str() {
            "ping" => Response { version: Some(VERSION.into()), ..Response::ok(req.env_id) },
            "make" => self.make(conn, &req),
            "reset" => self.with_env(conn, &req, reset),
            "step" => self.with_env(conn, &req, step),
            "close" => self.close(conn, &req),
            other => Response::error(req.env_id, format!("unknown cmd `{other}`")),
        }
    }

    fn make(&self, conn: u64, req: &Request) -> Response {
        let config = match apply_overrides(&self.base, req.config.as_ref().unwrap_or(&Value::Object(Default::default()))) {
            Ok(c) => c,
            Err(e) => return Response::error(req.env_id, e.to_string()),
        };
        let env = match Environment::new(config) {
            Ok(e) => e,
            Err(e) => return Response::error(req.env_id, e.to_string()),
        };
        let config_json = serde_json::to_value(env.config()).ok();
        let mut envs = lock(&self.envs);
        if envs.len() >= self.max_envs {
            return Response::error(req.env_id, format!("max_envs ({}) reached", self.max_envs));
        }
        let id = match req.env_id {
            Some(id) if envs.contains_key(&id) => {
                return Response::error(req.env_id, format!("env_id {id} already exists"));
            }
            Some(id) => id,
            None => loop {
                let id = self.next_env.fetch_add(1, Ordering::Relaxed);
                if !envs.contains_key(&id) {
                    break id;
                }
            },
        };
        let slot = Slot { env, owner: conn, default_seed: req.seed.unwrap_or(0), faulted: None };
        envs.insert(id, Arc::new(Mutex::new(slot)));
        Response { version: Some(VERSION.into()), config: config_json, ..Response::ok(Some(id)) }
    }

    fn close(&self, conn: u64, req: &Request) -> Response {
        let Some(id) = req.env_id else {
            return Response::error(None, "close needs env_id");
        };
        let mut envs = lock(&self.envs);
        match envs.get(&id) {
            Some(slot) if lock(slot).owner == conn => {
                envs.remove(&id);
                Response::ok(Some(id))
            }
            _ => Response::error(Some(id), format!("unknown env_id {id}")),
        }
    }

    fn with_env(&self, conn: u64, req: &Request, f: fn(&mut Slot, &Request, u64) -> Response) -> Response {
        let Some(id) = req.env_id else {
            return Response::error(None, format!("{} needs env_id", req.cmd));
        };
        let slot = match lock(&self.envs).get(&id) {
            Some(s) => Arc::clone(s),
            None => return Response::error(Some(id), format!("unknown env_id {id}")),
        };
        let mut slot = lock(&slot);
        if slot.owner != conn {
            return Response::error(Some(id), format!("unknown env_id {id}"));
        }
        if let Some(msg) = &slot.faulted {
            return Response::error(Some(id), format!("env_id {id} is faulted: {msg}"));
        }
        match catch_unwind(AssertUnwindSafe(|| f(&mut slot, req, id))) {
            Ok(resp) => resp,
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".into());
                slot.faulted = Some(msg.clone());
                Response::error(Some(id), format!("environment crashed: {msg}"))
            }
        }
    }
}

fn expert_action(env: &Environment) -> Option<WireAction> {
    env.expert_env_action().ok().map(WireAction::from)
}

fn reset(slot: &mut Slot, req: &Request, id: u64) -> Response {
    let seed = req.seed.unwrap_or(slot.default_seed);
    let env = &mut slot.env;
    let obs = match env.reset(seed) {
        Ok(o) => o,
        Err(e) => return Response::error(Some(id), e.to_string()),
    };
    let (Ok(terrain), Ok(vehicle)) = (env.terrain(), env.vehicle_params()) else {
        return Response::error(Some(id), "reset produced no episode");
    };
    let episode = EpisodeParams {
        seed,
        terrain: terrain.params().clone(),
        vehicle: vehicle.clone(),
        trail_length: terrain.trail_length(),
    };
    Response {
        observation: Some(WireObservation::encode(&obs)),
        episode: Some(episode),
        done: Some(false),
        info: Some(WireInfo { expert_action: expert_action(env), ..Default::default() }),
        ..Response::ok(Some(id))
    }
}

fn step(slot: &mut Slot, req: &Request, id: u64) -> Response {
    let action = match req.action.as_ref().map(WireAction::to_env) {
        Some(Ok(a)) => a,
        Some(Err(e)) => return Response::error(Some(id), e),
        None => return Response::error(Some(id), "step needs an action"),
    };
    let r = match slot.env.step(&action) {
        Ok(r) => r,
        Err(e) => return Response::error(Some(id), e.to_string()),
    };
    if r.reason == Some(DoneReason::Fault) {
        slot.faulted = r.info.fault.clone().or_else(|| Some("simulation fault".into()));
    }
    let env = &slot.env;
    let info = WireInfo {
        step: r.info.step,
        shield: Some(ShieldLog::from(&r.info.shield)),
        applied: Some(r.info.applied),
        collided: r.info.collided,
        fault: r.info.fault.clone(),
        expert_action: if r.done { None } else { expert_action(env) },
    };
    Response {
        observation: Some(WireObservation::encode(&r.observation)),
        reward: Some(r.reward),
        reward_terms: Some(r.info.terms),
        done: Some(r.done),
        done_reason: r.reason,
        metrics: if r.done { env.finalize_metrics().ok() } else { None },
        info: Some(info),
        ..Response::ok(Some(id))
    }
}
