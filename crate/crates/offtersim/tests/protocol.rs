use std::net::SocketAddr;

use offtersim::client::Client;
use offtersim::protocol::{parse_request, Request, Response, WireAction, WireObservation, VERSION};
use offtersim_core::{EnvAction, Environment, EpisodeConfig, ObservationMode};
use serde_json::json;

fn test_config() -> EpisodeConfig {
    let mut cfg = EpisodeConfig::default();
    cfg.terrain.grid_size = 256;
    cfg
}

fn server(max_envs: usize) -> SocketAddr {
    let s = offtersim::server::Server::bind("127.0.0.1:0", max_envs, test_config()).unwrap();
    let addr = s.local_addr().unwrap();
    s.spawn();
    addr
}

fn scripted(k: usize) -> EnvAction {
    EnvAction::continuous((k as f64 * 0.13).sin() * 0.8, 0.6, if k % 17 == 0 { 0.3 } else { 0.0 })
}

#[test]
fn ping_reports_version() {
    let mut c = Client::connect(server(4)).unwrap();
    let r = c.ping().unwrap();
    assert!(r.ok);
    assert_eq!(r.version.as_deref(), Some(VERSION));
}

#[test]
fn repeated_reset_is_byte_identical() {
    let mut c = Client::connect(server(4)).unwrap();
    let made = c.make(Some(9), None).unwrap();
    assert_eq!(made.version.as_deref(), Some(VERSION));
    assert!(made.config.is_some());
    let id = made.env_id.unwrap();
    let line = format!(r#"{{"cmd":"reset","env_id":{id}}}"#);
    let a = c.send_line(&line).unwrap();
    let b = c.send_line(&line).unwrap();
    assert_eq!(a, b);
    let r: Response = serde_json::from_str(&a).unwrap();
    assert_eq!(r.episode.unwrap().seed, 9);
}

#[test]
fn remote_rewards_match_in_process() {
    let mut c = Client::connect(server(4)).unwrap();
    let id = c.make(None, None).unwrap().env_id.unwrap();
    let remote_obs = c.reset(id, Some(21)).unwrap().observation.unwrap().decode().unwrap();
    let mut env = Environment::new(test_config()).unwrap();
    let local_obs = env.reset(21).unwrap();
    assert_eq!(remote_obs, local_obs);
    for k in 0..100 {
        let r = c.step(id, WireAction::from(scripted(k))).unwrap();
        let l = env.step(&scripted(k)).unwrap();
        assert!((r.reward.unwrap() - l.reward).abs() <= 1e-9, "step {k}");
        assert_eq!(r.reward_terms.unwrap(), l.info.terms);
        assert_eq!(r.done.unwrap(), l.done);
        if l.done {
            break;
        }
    }
}

#[test]
fn error_paths() {
    let mut c = Client::connect(server(2)).unwrap();
    let malformed: Response = serde_json::from_str(&c.send_line("{not json").unwrap()).unwrap();
    assert!(!malformed.ok && malformed.error.unwrap().contains("malformed"));
    let unknown_env: Response =
        serde_json::from_str(&c.send_line(r#"{"cmd":"step","env_id":77,"action":{"steer":0,"throttle":0}}"#).unwrap())
            .unwrap();
    assert!(!unknown_env.ok);
    assert_eq!(unknown_env.env_id, Some(77));
    assert!(unknown_env.error.unwrap().contains("unknown env_id"));
    let unknown_cmd = c.request(&Request::new("fly")).unwrap();
    assert!(!unknown_cmd.ok && unknown_cmd.error.unwrap().contains("unknown cmd"));
    let bad_config = c.make(None, Some(json!({"no_such_key": 1})));
    assert!(matches!(bad_config, Err(offtersim::CliError::Config(_))));

    let id = c.make(None, None).unwrap().env_id.unwrap();
    let early = c.request(&Request { action: Some(WireAction::default()), ..Request::new("step").env(id) }).unwrap();
    assert!(!early.ok);
    c.make(None, None).unwrap();
    let full = c.make(None, None);
    assert!(matches!(full, Err(offtersim::CliError::Fault(m)) if m.contains("max_envs")));
    c.close(id).unwrap();
    c.make(None, None).unwrap();
    // the connection is still usable after every error
    assert!(c.ping().unwrap().ok);
}

#[test]
fn environments_are_private_to_their_connection() {
    let addr = server(8);
    let mut a = Client::connect(addr).unwrap();
    let mut b = Client::connect(addr).unwrap();
    let id = a.make(None, None).unwrap().env_id.unwrap();
    assert!(b.reset(id, Some(1)).is_err());
    assert!(a.reset(id, Some(1)).is_ok());
}

#[test]
fn faulted_env_does_not_affect_siblings() {
    let mut c = Client::connect(server(8)).unwrap();
    // unbounded acceleration overflows the state on the first step
    let blowup = json!({"vehicle": {"m": {"min": 1e-300, "max": 1e-300}, "k_throttle": {"min": 1e300, "max": 1e300}}});
    let bad = c.make(None, Some(blowup)).unwrap().env_id.unwrap();
    let good = c.make(None, None).unwrap().env_id.unwrap();
    c.reset(bad, Some(3)).unwrap();
    c.reset(good, Some(3)).unwrap();
    let r = c.step(bad, WireAction::from(EnvAction::continuous(0.0, 1.0, 0.0))).unwrap();
    assert_eq!(r.done, Some(true));
    assert!(r.info.unwrap().fault.is_some());
    let again = c.reset(bad, Some(3));
    assert!(matches!(again, Err(offtersim::CliError::Fault(m)) if m.contains("faulted")));
    for k in 0..10 {
        assert!(c.step(good, WireAction::from(scripted(k))).unwrap().ok);
    }
}

#[test]
fn responses_follow_request_order() {
    let mut c = Client::connect(server(4)).unwrap();
    let ids: Vec<u64> = (0..3).map(|_| c.make(None, None).unwrap().env_id.unwrap()).collect();
    for &id in &ids {
        c.reset(id, Some(id)).unwrap();
    }
    for k in 0..5 {
        for &id in &ids {
            let r = c.step(id, WireAction::from(scripted(k))).unwrap();
            assert_eq!(r.env_id, Some(id));
        }
    }
}

#[test]
fn wire_observation_round_trip() {
    let mut cfg = test_config();
    cfg.observation_mode = ObservationMode::Both;
    cfg.camera.width = 20;
    cfg.camera.height = 10;
    cfg.imu_noise = 0.3;
    let mut env = Environment::new(cfg).unwrap();
    env.reset(4).unwrap();
    let obs = env.step(&scripted(0)).unwrap().observation;
    let line = serde_json::to_string(&WireObservation::encode(&obs)).unwrap();
    let back: WireObservation = serde_json::from_str(&line).unwrap();
    assert_eq!(back.decode().unwrap(), obs);
}

#[test]
fn request_parsing() {
    let r = parse_request(r#"{"cmd":"step","env_id":2,"action":{"steer_index":3,"throttle":0.5,"brake":0}}"#).unwrap();
    assert_eq!(r.env_id, Some(2));
    assert_eq!(r.action.unwrap().to_env().unwrap(), EnvAction::discrete(3, 0.5, 0.0));
    assert_eq!(parse_request("7").unwrap_err().ok, false);
}
