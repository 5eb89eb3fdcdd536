use std::io::Write;
use std::os::unix::net::UnixStream;
use std::thread::JoinHandle;
use std::time::Duration;

use mixtraffic::env::{Env, EnvKind, EpisodeConfig};
use mixtraffic::io::protocol::{
    read_frame, serve, serve_unix, write_frame, Client, Frame, Request, Response, MAX_FRAME,
};

fn spawn_server() -> (UnixStream, JoinHandle<mixtraffic::Result<()>>) {
    let (server, client) = UnixStream::pair().unwrap();
    let handle = std::thread::spawn(move || {
        let reader = server.try_clone()?;
        serve(reader, server)
    });
    (client, handle)
}

fn raw_request(stream: &mut UnixStream, body: &[u8]) -> Response {
    write_frame(stream, body).unwrap();
    match read_frame(stream).unwrap() {
        Frame::Body(b) => serde_json::from_slice(&b).unwrap(),
        other => panic!("unexpected {other:?}"),
    }
}

fn short(env: EnvKind) -> EpisodeConfig {
    let mut cfg = EpisodeConfig::default_for(env);
    cfg.horizon = 5;
    cfg.warmup = cfg.warmup.min(50);
    cfg
}

#[test]
fn malformed_requests_keep_the_connection_alive() {
    let (mut stream, handle) = spawn_server();
    let r = raw_request(&mut stream, b"{not json");
    assert!(r.error.unwrap().starts_with("malformed request"));
    let r = raw_request(&mut stream, br#"{"cmd":"fly"}"#);
    assert!(r.error.is_some());
    let cfg = serde_json::to_vec(&Request::Reset {
        config: Box::new(short(EnvKind::Ring)),
    })
    .unwrap();
    let r = raw_request(&mut stream, &cfg);
    assert_eq!((r.reward, r.done, r.error), (Some(0.0), Some(false), None));
    assert_eq!(r.obs.unwrap().shape, vec![1, 84, 84]);
    let r = raw_request(&mut stream, br#"{"cmd":"close"}"#);
    assert_eq!(r.done, Some(true));
    handle.join().unwrap().unwrap();
}

#[test]
fn oversized_frames_are_skipped() {
    let (mut stream, handle) = spawn_server();
    let n = MAX_FRAME + 1;
    let writer = {
        let mut s = stream.try_clone().unwrap();
        std::thread::spawn(move || {
            s.write_all(&(n as u32).to_be_bytes()).unwrap();
            s.write_all(&vec![b' '; n]).unwrap();
        })
    };
    let r = match read_frame(&mut stream).unwrap() {
        Frame::Body(b) => serde_json::from_slice::<Response>(&b).unwrap(),
        other => panic!("{other:?}"),
    };
    writer.join().unwrap();
    assert!(r.error.unwrap().contains("exceeds"));
    let r = raw_request(&mut stream, br#"{"cmd":"step","actions":[0.0]}"#);
    assert!(r.error.unwrap().contains("before reset"));
    drop(stream);
    handle.join().unwrap().unwrap();
}

#[test]
fn errors_come_back_as_responses() {
    let (stream, handle) = spawn_server();
    let mut client = Client::new(stream.try_clone().unwrap(), stream);
    let mut bad = short(EnvKind::Merge);
    bad.dt = 0.0;
    assert!(client.reset(&bad).unwrap().error.unwrap().contains("dt"));
    client.reset(&short(EnvKind::Merge)).unwrap();
    let r = client.step(&[0.0; 2]).unwrap();
    assert!(r.error.unwrap().contains("expects 5"));
    let r = client.step(&[f64::NAN; 5]).unwrap();
    assert!(r.error.is_some());
    for _ in 0..5 {
        assert!(client.step(&[0.0; 5]).unwrap().error.is_none());
    }
    let r = client.step(&[0.0; 5]).unwrap();
    assert!(r.error.unwrap().contains("finished"));
    assert_eq!(client.close().unwrap().done, Some(true));
    handle.join().unwrap().unwrap();
}

#[test]
fn every_environment_matches_in_process_execution() {
    let (stream, handle) = spawn_server();
    let mut client = Client::new(stream.try_clone().unwrap(), stream);
    for env in [
        EnvKind::Ring,
        EnvKind::FigureEight,
        EnvKind::Intersection,
        EnvKind::Merge,
        EnvKind::Bottleneck,
    ] {
        let mut cfg = short(env);
        cfg.horizon = 60;
        let (mut local, obs) = Env::reset(cfg.clone()).unwrap();
        let r = client.reset(&cfg).unwrap();
        assert_eq!(r.obs.unwrap().decode().unwrap(), obs);
        let mut done = false;
        let mut k = 0;
        while !done {
            let a: Vec<f64> = (0..cfg.agents).map(|s| 0.5 * ((k + s) as f64).cos()).collect();
            let l = local.step(&a).unwrap();
            let r = client.step(&a).unwrap();
            assert_eq!(r.reward.unwrap().to_bits(), l.reward.to_bits());
            assert_eq!(r.info.unwrap(), l.info);
            assert_eq!(r.obs.unwrap().decode().unwrap(), l.observation);
            done = r.done.unwrap();
            assert_eq!(done, l.done);
            k += 1;
        }
        assert_eq!(k, 60);
    }
    client.close().unwrap();
    handle.join().unwrap().unwrap();
}

#[test]
fn unix_socket_serves_independent_connections() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.sock");
    let p = path.clone();
    std::thread::spawn(move || serve_unix(&p));
    let connect = || {
        for _ in 0..200 {
            if let Ok(s) = UnixStream::connect(&path) {
                return s;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        panic!("server did not start");
    };
    let (a, b) = (connect(), connect());
    let mut ca = Client::new(a.try_clone().unwrap(), a);
    let mut cb = Client::new(b.try_clone().unwrap(), b);
    ca.reset(&short(EnvKind::FigureEight)).unwrap();
    cb.reset(&short(EnvKind::Ring)).unwrap();
    let ra = ca.step(&[0.1]).unwrap();
    let rb = cb.step(&[0.1]).unwrap();
    assert_eq!(ra.info.unwrap().vehicles, 14);
    assert_eq!(rb.info.unwrap().vehicles, 22);
    ca.close().unwrap();
    assert!(cb.step(&[0.1]).unwrap().error.is_none());
}
