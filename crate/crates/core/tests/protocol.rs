use proptest::prelude::*;
use stormnet_core::datastore::{Datastore, Point};
use stormnet_core::gateway::Gateway;
use stormnet_core::hydro::Quantity;
use stormnet_core::node::{NodeConfig, PowerModel, SensorBinding};
use stormnet_core::telemetry::{
    decode_points, encode_points, Credentials, Delivery, Link, LinkModel, OutageWindow, WireBody, WireMessage,
};

fn ident() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_]{1,12}"
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn point() -> impl Strategy<Value = Point> {
    (ident(), ident(), any::<i64>(), finite()).prop_map(|(n, s, t, v)| Point::new(&n, &s, t, v))
}

fn batch() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(point(), 0..24)
}

fn node(id: &str) -> NodeConfig {
    NodeConfig {
        node_id: id.into(),
        description: String::new(),
        location: None,
        sampling_interval_min: 5.0,
        awake_window_s: 10.0,
        sensors: vec![SensorBinding { id: "depth".into(), element: "pond".into(), quantity: Quantity::Depth, enabled: true }],
        valve: None,
        password: Some("secret".into()),
        interval_bounds: None,
        buffer_capacity: 64,
        power: PowerModel::default(),
        first_wake_offset_min: 0.0,
    }
}

fn seeded_gateway() -> Gateway {
    let g = Gateway::new(Datastore::new());
    g.register_node(&node("n1"));
    let c = Credentials::new("n1", "secret");
    g.write(Some(&c), "depth,node=n1 value=0.25 1000\ndepth,node=n1 value=0.5 2000\n").unwrap();
    g.store().enqueue_command("n1", stormnet_core::CommandKind::SetValve(0.5), 1500);
    g
}

/// Ways to break exactly one line of an otherwise valid batch.
fn corrupt(line: &str, how: usize) -> String {
    match how % 6 {
        0 => line.replacen(",node=", ",nod=", 1),
        1 => line.replacen(" value=", " value=x", 1),
        2 => format!("{line}ms"),
        3 => line.replacen(",node=", ",node=bad-id", 1),
        4 => line.replacen(" value=", " value=NaN", 1).replacen("NaN", "nan", 1),
        _ => " ".to_owned(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn decode_inverts_encode(points in batch()) {
        let text = encode_points(&points);
        prop_assert!(text.is_empty() || text.ends_with('\n'));
        let back = decode_points(&text).unwrap();
        prop_assert_eq!(back.len(), points.len());
        for (a, b) in back.iter().zip(&points) {
            prop_assert_eq!(&a.series, &b.series);
            prop_assert_eq!(a.timestamp, b.timestamp);
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
        // and the encoding is canonical
        prop_assert_eq!(encode_points(&back), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn malformed_line_rejects_the_whole_batch(points in prop::collection::vec(point(), 1..16), which in any::<prop::sample::Index>(), how in 0usize..6) {
        let g = seeded_gateway();
        let before = g.store().snapshot();
        let text = encode_points(&points);
        let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
        let i = which.index(lines.len());
        lines[i] = corrupt(&lines[i], how);
        let body = lines.join("\n") + "\n";
        let e = g.write(Some(&Credentials::new("n1", "secret")), &body).unwrap_err();
        prop_assert_eq!(e.status(), 400);
        prop_assert_eq!(g.store().snapshot(), before);
    }

    #[test]
    fn bad_credentials_leave_the_store_untouched(points in batch(), user in ident(), pass in "[ -~]{0,12}") {
        prop_assume!(!(user == "n1" && pass == "secret"));
        let g = seeded_gateway();
        let before = g.store().snapshot();
        let text = encode_points(&points);
        for creds in [None, Some(Credentials::new(user.clone(), pass.clone()))] {
            prop_assert_eq!(g.write(creds.as_ref(), &text).unwrap_err().status(), 401);
            let msgs = [
                WireMessage::request("n1", creds.clone(), WireBody::WritePoints { payload: text.clone() }),
                WireMessage::request("n1", creds.clone(), WireBody::FetchCommands),
            ];
            for m in msgs {
                prop_assert_eq!(g.handle(&m, 5000).body, WireBody::AuthError);
            }
        }
        prop_assert_eq!(g.store().snapshot(), before);
    }

    #[test]
    fn link_delivers_in_send_order_per_direction(
        seed in any::<u64>(),
        loss in 0.0f64..0.9,
        latency in 0u64..2000,
        jitter in 0u64..5000,
        gaps in prop::collection::vec((0i64..3000, any::<bool>(), 0usize..3), 1..200),
    ) {
        let model = LinkModel { base_latency_ms: latency, latency_jitter_ms: jitter, loss_probability: loss, ..Default::default() };
        let mut link = Link::new(model, seed);
        let mut last = std::collections::BTreeMap::new();
        let mut now = 0;
        for (gap, uplink, n) in gaps {
            now += gap;
            let id = format!("n{n}");
            let msg = if uplink {
                WireMessage::request(&id, None, WireBody::FetchCommands)
            } else {
                WireMessage::response(&id, WireBody::WriteAck { written: 0 })
            };
            if let Delivery::Delivered { at } = link.transmit(&msg, now) {
                prop_assert!(at >= now + latency as i64);
                let prev = last.insert((id, uplink), at).unwrap_or(i64::MIN);
                prop_assert!(at >= prev, "delivery reordered");
            }
        }
    }

    #[test]
    fn link_outcomes_depend_only_on_seed_and_schedule(
        seed in any::<u64>(),
        sends in prop::collection::vec((0i64..100_000, 0usize..4), 1..100),
    ) {
        let model = LinkModel {
            loss_probability: 0.3,
            outage_windows: vec![OutageWindow { start: 20_000, end: 40_000, nodes: None }],
            ..Default::default()
        };
        let run = || {
            let mut link = Link::new(model.clone(), seed);
            let mut sorted = sends.clone();
            sorted.sort();
            sorted
                .iter()
                .map(|&(t, n)| link.transmit(&WireMessage::request(&format!("n{n}"), None, WireBody::FetchCommands), t))
                .collect::<Vec<_>>()
        };
        let a = run();
        prop_assert_eq!(&a, &run());
        let mut sorted = sends.clone();
        sorted.sort();
        for (d, (t, _)) in a.iter().zip(&sorted) {
            if (20_000..40_000).contains(t) {
                prop_assert_eq!(*d, Delivery::Dropped);
            }
        }
    }
}

#[test]
fn wire_messages_roundtrip_through_json() {
    let c = Credentials::new("n1", "secret");
    let msgs = [
        WireMessage::request("n1", Some(c.clone()), WireBody::WritePoints { payload: "depth,node=n1 value=1 2\n".into() }),
        WireMessage::request("n1", Some(c), WireBody::FetchCommands),
        WireMessage::response("n1", WireBody::AuthError),
        WireMessage::response("n1", WireBody::BadRequest { line: Some(3), message: "bad".into() }),
    ];
    for m in msgs {
        assert_eq!(WireMessage::from_json(&m.to_json()).unwrap(), m);
    }
}

#[test]
fn basic_header_roundtrips() {
    let c = Credentials::new("pond_valve", "p:w");
    let h = c.to_basic_header();
    assert!(h.starts_with("Basic "));
    assert_eq!(Credentials::from_basic_header(&h), Some(c));
    assert_eq!(Credentials::from_basic_header("Bearer abc"), None);
}
