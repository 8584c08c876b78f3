use std::io::{BufRead, BufReader};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use serde_json::Value;
use stormnet_core::scenario::{run_scenario, RunOptions};
use stormnet_core::telemetry::Credentials;
use stormnet_core::{Datastore, Gateway, Scenario};
use stormnet_server::{serve_scenario, AppState, Clock, CorsPolicy, ServeOptions, Server};

fn operator() -> Credentials {
    Credentials::new("operator", "op")
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(Duration::from_secs(30)).build().unwrap()
}

#[test]
fn stream_carries_every_point_and_alert_once() {
    let gateway = Gateway::new(Datastore::new());
    gateway.add_user(&operator());
    let state = AppState::new(gateway.clone(), Clock::Wall);
    let hub = state.hub.clone();
    let server = Server::start(state, "127.0.0.1:0".parse().unwrap(), &CorsPolicy::default()).unwrap();
    let base = format!("http://{}/api/v1", server.addr());
    let auth = operator().to_basic_header();

    let resp = client().get(format!("{base}/stream")).header("authorization", &auth).send().unwrap();
    assert_eq!(resp.status(), 200);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut event = String::new();
        for line in BufReader::new(resp).lines() {
            let Ok(line) = line else { return };
            if let Some(name) = line.strip_prefix("event: ") {
                event = name.to_owned();
            } else if let Some(data) = line.strip_prefix("data: ") {
                let v: Value = serde_json::from_str(data).unwrap();
                if tx.send((event.clone(), v)).is_err() {
                    return;
                }
            }
        }
    });
    // the handler registers the subscriber before the response starts
    while hub.subscriber_count() == 0 {
        thread::sleep(Duration::from_millis(5));
    }

    let n = 200;
    let writers: Vec<_> = (0..4)
        .map(|w| {
            let (base, auth) = (base.clone(), auth.clone());
            thread::spawn(move || {
                let c = client();
                for i in 0..n / 4 {
                    let body = format!("depth,node=w{w} value={i} {i}\n");
                    let r = c.post(format!("{base}/write")).header("authorization", &auth).body(body).send().unwrap();
                    assert_eq!(r.status(), 200);
                }
            })
        })
        .collect();
    for w in writers {
        w.join().unwrap();
    }
    gateway.store().persist_alert(stormnet_core::subscription::Alert {
        fired_at: 5,
        severity: stormnet_core::subscription::Severity::Info,
        subject: "w0".into(),
        message: "done".into(),
        subscription: "test".into(),
    });

    let mut points = std::collections::BTreeSet::new();
    loop {
        let (event, v) = rx.recv_timeout(Duration::from_secs(10)).expect("stream stalled");
        match event.as_str() {
            "point" => {
                assert_eq!(v["type"], "point");
                let key = (v["series"].as_str().unwrap().to_owned(), v["timestamp"].as_i64().unwrap());
                assert!(points.insert(key), "point delivered twice");
            }
            "alert" => {
                assert_eq!(v["message"], "done");
                break;
            }
            other => panic!("unexpected event {other}"),
        }
    }
    assert_eq!(points.len(), n);
    drop(server);
}

#[test]
fn serve_mode_matches_headless_under_concurrent_reads() {
    let s = Scenario::builtin("command-loop").unwrap();
    let headless = run_scenario(&s, RunOptions::default()).unwrap();

    let options = ServeOptions {
        listen: "127.0.0.1:0".parse().unwrap(),
        // 12 simulated hours in about 1.5 s
        compression: 3e4,
        operator: Some(operator()),
        cors: CorsPolicy::default(),
    };
    let done = Arc::new(AtomicBool::new(false));
    let mut readers = Vec::new();
    let (report, server) = serve_scenario(&s, RunOptions::default(), &options, |addr| {
        for k in 0..3 {
            let done = done.clone();
            let base = format!("http://{addr}/api/v1");
            readers.push(thread::spawn(move || {
                let c = client();
                let auth = operator().to_basic_header();
                let paths = ["/nodes", "/alerts?since=0", "/commands/tank_ctl?peek=true", "/query?series=tank_ctl.depth"];
                let mut ok = 0;
                while !done.load(Ordering::SeqCst) {
                    let r = c.get(format!("{base}{}", paths[(ok + k) % paths.len()])).header("authorization", &auth).send();
                    if let Ok(r) = r {
                        assert!(r.status() == 200 || r.status() == 404, "{}", r.status());
                        ok += 1;
                    }
                }
                ok
            }));
        }
    })
    .unwrap();
    done.store(true, Ordering::SeqCst);
    let served: usize = readers.into_iter().map(|r| r.join().unwrap()).sum();
    drop(server);
    assert!(served > 0, "no request got through while the run was live");
    assert_eq!(report.bundle, headless.bundle);
}
