//! Blocking client for the wire protocol.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};

use serde_json::Value;

use crate::error::CliError;
use crate::protocol::{Request, Response, WireAction};

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, CliError> {
        let stream = TcpStream::connect(addr).map_err(|e| CliError::Io(format!("cannot connect: {e}")))?;
        let _ = stream.set_nodelay(true);
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self { reader, writer: stream })
    }

    /// Sends one raw line and returns the raw response line.
    pub fn send_line(&mut self, line: &str) -> Result<String, CliError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut out = String::new();
        if self.reader.read_line(&mut out)? == 0 {
            return Err(CliError::Io("server closed the connection".into()));
        }
        while out.ends_with('\n') || out.ends_with('\r') {
            out.pop();
        }
        Ok(out)
    }

    pub fn request(&mut self, req: &Request) -> Result<Response, CliError> {
        let line = serde_json::to_string(req).map_err(|e| CliError::Io(e.to_string()))?;
        let reply = self.send_line(&line)?;
        serde_json::from_str(&reply).map_err(|e| CliError::Io(format!("bad response from server: {e}")))
    }

    /// Like `request`, but a `ok: false` reply becomes an error.
    pub fn call(&mut self, req: &Request) -> Result<Response, CliError> {
        let resp = self.request(req)?;
        if resp.ok {
            return Ok(resp);
        }
        let msg = resp.error.unwrap_or_default();
        Err(if msg.starts_with("config") { CliError::Config(msg) } else { CliError::Fault(msg) })
    }

    pub fn ping(&mut self) -> Result<Response, CliError> {
        self.call(&Request::new("ping"))
    }

    pub fn make(&mut self, seed: Option<u64>, config: Option<Value>) -> Result<Response, CliError> {
        self.call(&Request { seed, config, ..Request::new("make") })
    }

    pub fn reset(&mut self, env_id: u64, seed: Option<u64>) -> Result<Response, CliError> {
        self.call(&Request { seed, ..Request::new("reset").env(env_id) })
    }

    pub fn step(&mut self, env_id: u64, action: WireAction) -> Result<Response, CliError> {
        self.call(&Request { action: Some(action), ..Request::new("step").env(env_id) })
    }

    pub fn close(&mut self, env_id: u64) -> Result<Response, CliError> {
        self.call(&Request::new("close").env(env_id))
    }
}
