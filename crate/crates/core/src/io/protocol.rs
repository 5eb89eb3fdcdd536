//! Length-prefixed JSON control protocol.
//!
//! Every frame is a 4-byte big-endian body length followed by a UTF-8 JSON
//! body. Requests carry `cmd` (`reset`, `step` or `close`); each request gets
//! exactly one response. Image observations travel as base64 of the raw
//! bytes, slot-major then row-major, one byte per pixel.

use std::io::{self, Read, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::env::{Env, EpisodeConfig, StepInfo};
use crate::error::{Error, Result};
use crate::observation::Observation;

/// Largest body accepted (bytes).
pub const MAX_FRAME: usize = 64 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Reset { config: Box<EpisodeConfig> },
    Step { actions: Vec<f64> },
    Close,
}

/// Observation as sent over the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireObservation {
    /// `image` or `vector`.
    pub kind: String,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl WireObservation {
    pub fn encode(obs: &Observation) -> Self {
        match obs {
            Observation::Image { data, .. } => Self {
                kind: "image".into(),
                shape: obs.shape(),
                data: Some(STANDARD.encode(data)),
                values: None,
            },
            Observation::Vector { values } => Self {
                kind: "vector".into(),
                shape: obs.shape(),
                data: None,
                values: Some(values.clone()),
            },
        }
    }

    pub fn decode(&self) -> Result<Observation> {
        match (self.kind.as_str(), &self.data, &self.values) {
            ("image", Some(data), _) => {
                let bytes = STANDARD
                    .decode(data)
                    .map_err(|e| Error::Protocol(format!("bad base64 tensor: {e}")))?;
                let expected: usize = self.shape.iter().product();
                if bytes.len() != expected || self.shape.len() != 3 {
                    return Err(Error::Protocol(format!(
                        "tensor of {} bytes does not match shape {:?}",
                        bytes.len(),
                        self.shape
                    )));
                }
                Ok(Observation::Image {
                    stack: self.shape[0],
                    data: bytes,
                })
            }
            ("vector", _, Some(values)) => Ok(Observation::Vector { values: values.clone() }),
            (kind, _, _) => Err(Error::Protocol(format!("cannot decode a `{kind}` observation"))),
        }
    }
}

/// One response frame. Successful reset/step responses carry every field but
/// `error`; a close acknowledgement carries only `done`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs: Option<WireObservation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<StepInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn error(message: impl Into<String>) -> Self {
        Self {
            error: Some(message.into()),
            ..Self::default()
        }
    }

    fn step(obs: &Observation, reward: f64, done: bool, info: StepInfo) -> Self {
        Self {
            obs: Some(WireObservation::encode(obs)),
            reward: Some(reward),
            done: Some(done),
            info: Some(info),
            error: None,
        }
    }
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> Result<()> {
    let len = u32::try_from(body.len()).map_err(|_| Error::Protocol("frame too large".into()))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

/// Outcome of reading one frame.
#[derive(Debug, PartialEq)]
pub enum Frame {
    Body(Vec<u8>),
    /// The length prefix exceeded [`MAX_FRAME`]; the body was skipped.
    Oversized(usize),
    /// The peer closed the stream between frames.
    Eof,
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(Frame::Eof),
            Ok(0) => return Err(Error::Protocol("stream ended inside a length prefix".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        io::copy(&mut r.take(len as u64), &mut io::sink())?;
        return Ok(Frame::Oversized(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)
        .map_err(|_| Error::Protocol("stream ended inside a frame body".into()))?;
    Ok(Frame::Body(body))
}

fn send<W: Write>(w: &mut W, resp: &Response) -> Result<()> {
    write_frame(w, &serde_json::to_vec(resp)?)
}

/// Episode state of one connection.
#[derive(Default)]
pub struct Session {
    env: Option<Env>,
}

impl Session {
    pub fn handle(&mut self, req: Request) -> Response {
        match req {
            Request::Reset { config } => match Env::reset(*config) {
                Ok((env, obs)) => {
                    let info = env.info();
                    self.env = Some(env);
                    Response::step(&obs, 0.0, false, info)
                }
                Err(e) => Response::error(e.to_string()),
            },
            Request::Step { actions } => match &mut self.env {
                None => Response::error("step before reset"),
                Some(env) => match env.step(&actions) {
                    Ok(r) => Response::step(&r.observation, r.reward, r.done, r.info),
                    Err(e) => Response::error(e.to_string()),
                },
            },
            Request::Close => {
                self.env = None;
                Response {
                    done: Some(true),
                    ..Response::default()
                }
            }
        }
    }
}

/// Serves one client until it sends `close` or closes the stream.
pub fn serve<R: Read, W: Write>(mut reader: R, mut writer: W) -> Result<()> {
    let mut session = Session::default();
    loop {
        let body = match read_frame(&mut reader)? {
            Frame::Eof => return Ok(()),
            Frame::Oversized(n) => {
                send(
                    &mut writer,
                    &Response::error(format!("frame of {n} bytes exceeds {MAX_FRAME}")),
                )?;
                continue;
            }
            Frame::Body(b) => b,
        };
        let req: Request = match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => {
                send(&mut writer, &Response::error(format!("malformed request: {e}")))?;
                continue;
            }
        };
        let close = req == Request::Close;
        send(&mut writer, &session.handle(req))?;
        if close {
            return Ok(());
        }
    }
}

/// Accepts connections on a Unix socket, one worker thread per connection.
#[cfg(unix)]
pub fn serve_unix(path: &std::path::Path) -> Result<()> {
    let listener = std::os::unix::net::UnixListener::bind(path)?;
    for stream in listener.incoming() {
        let stream = stream?;
        std::thread::spawn(move || {
            let reader = stream.try_clone()?;
            serve(reader, stream)
        });
    }
    Ok(())
}

/// Blocking client over any byte stream.
pub struct Client<R: Read, W: Write> {
    reader: R,
    writer: W,
}

impl<R: Read, W: Write> Client<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader, writer }
    }

    pub fn request(&mut self, req: &Request) -> Result<Response> {
        write_frame(&mut self.writer, &serde_json::to_vec(req)?)?;
        match read_frame(&mut self.reader)? {
            Frame::Body(b) => Ok(serde_json::from_slice(&b)?),
            Frame::Eof => Err(Error::Protocol("server closed the stream".into())),
            Frame::Oversized(n) => Err(Error::Protocol(format!("response of {n} bytes is too large"))),
        }
    }

    pub fn reset(&mut self, config: &EpisodeConfig) -> Result<Response> {
        self.request(&Request::Reset {
            config: Box::new(config.clone()),
        })
    }

    pub fn step(&mut self, actions: &[f64]) -> Result<Response> {
        self.request(&Request::Step {
            actions: actions.to_vec(),
        })
    }

    pub fn close(&mut self) -> Result<Response> {
        self.request(&Request::Close)
    }
}
