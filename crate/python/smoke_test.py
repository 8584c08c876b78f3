"""Smoke test for the stormnet Python extension.

Build and install first:  pip install maturin && maturin develop -m crates/py/Cargo.toml
"""

import tempfile
from pathlib import Path

import stormnet


def check_scenarios():
    names = stormnet.Scenario.builtin_names()
    assert "command-loop" in names, names
    s = stormnet.Scenario.builtin("command-loop")
    assert s.duration_hours == 12
    assert len(s.config_hash()) == 64

    a = s.run(seed=7)
    b = s.run(seed=7)
    assert a.metrics() == b.metrics()
    m = a.metrics()
    assert m["seed"] == 7 and m["commands"] == 7, m
    assert a.metric("mass_imbalance_rel") <= 1e-6
    assert a.passed

    times, depth = a.plant_column("tank.depth_m")
    assert len(times) == len(depth) > 0
    assert a.series("tank_ctl.depth"), "no stored depth points"

    with tempfile.TemporaryDirectory() as d:
        a.write_bundle(d)
        written = sorted(p.name for p in Path(d).iterdir())
        assert "metrics.json" in written and "manifest.json" in written, written


def check_gateway():
    gw = stormnet.Gateway()
    gw.add_user("operator", "op")
    gw.register_node({
        "node_id": "pond_ctl",
        "sampling_interval_min": 5.0,
        "sensors": [{"id": "depth", "element": "pond", "quantity": "depth"}],
        "valve": "pond",
        "password": "pw",
    })
    node = ("pond_ctl", "pw")
    op = ("operator", "op")

    body = stormnet.encode_points([("pond_ctl", "depth", 1000, 0.25), ("pond_ctl", "depth", 2000, 0.5)])
    assert stormnet.decode_points(body)[1] == ("pond_ctl", "depth", 2000, 0.5)
    assert gw.write(node, body) == 2
    assert gw.query(op, "pond_ctl.depth") == [(1000, 0.25), (2000, 0.5)]

    for bad in (None, ("pond_ctl", "nope")):
        try:
            gw.write(bad, body)
        except stormnet.ApiError as e:
            assert e.args[0] == 401
        else:
            raise AssertionError("write without valid credentials succeeded")
    try:
        gw.write(node, "depth,node=pond_ctl value=1 3000\ngarbage\n")
    except stormnet.ApiError as e:
        assert e.args[0] == 400
    assert gw.point_count() == 2

    cid = gw.set_valve(op, "pond_ctl", 0.4, 5000)
    assert gw.list_commands(op, "pond_ctl")[0]["state"] == "pending"
    delivered = gw.fetch_commands(node, "pond_ctl", 6000)
    assert [c["id"] for c in delivered] == [cid]
    assert delivered[0]["kind"] == "set_valve" and delivered[0]["payload"] == 0.4, delivered
    first = gw.ack(node, "pond_ctl", cid, {"outcome": "applied"}, 7000)
    again = gw.ack(node, "pond_ctl", cid, {"outcome": "applied"}, 8000)
    assert first["transitioned"] and not again["transitioned"]
    assert gw.nodes(op, 9000)[0]["node_id"] == "pond_ctl"


if __name__ == "__main__":
    check_scenarios()
    check_gateway()
    print("stormnet smoke test passed")
