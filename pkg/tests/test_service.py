"""Session service: core message handling and websocket loopback."""
import json

import numpy as np
import pytest
from starlette.testclient import TestClient
from starlette.websockets import WebSocketDisconnect

from symskill.checkpoint import _encode
from symskill.config import preset
from symskill.policy import make_bundle
from symskill.service import SkillSession, make_app, registry_payload
from symskill.skills import (PriorState, SkillCommand, mirror_skill,
                             sample_skills)


@pytest.fixture(scope="module")
def setup():
    reg = preset("mixed").registry()
    bundle = make_bundle(reg, hidden=(16,), critic_hidden=(16,),
                         usd_hidden=(16,), seed=0)
    return bundle, PriorState.initial(reg), reg


def fresh_session(setup, seed=3):
    bundle, prior, _ = setup
    return SkillSession(bundle, prior, seed=seed)


def send(session, **msg):
    return session.handle(json.dumps(msg))


def test_registry_payload_has_mirror_tables(setup):
    _, _, reg = setup
    payload = registry_payload(reg)
    assert payload["num_weights"] == reg.num_factors + 1
    rng = np.random.default_rng(0)
    for f, fd in zip(reg.factors, payload["factors"]):
        assert set(fd["mirror_tables"]) == {"1", "2", "3", "4"}
        z = rng.normal(size=f.dim)
        for k in (1, 2, 3, 4):
            M = np.asarray(fd["mirror_tables"][str(k)])
            assert np.allclose(z @ M, mirror_skill(k, f, z), atol=1e-12)


def test_malformed_then_continues(setup):
    s = fresh_session(setup)
    (err,) = s.handle("{not json")
    assert err["type"] == "error" and err["code"] == 400
    (err,) = s.handle(json.dumps(["list", "not", "object"]))
    assert err["code"] == 400
    assert send(s, type="resample") == []


def test_unknown_type_is_400_analog(setup):
    s = fresh_session(setup)
    (err,) = send(s, type="warp_drive")
    assert err["type"] == "error"
    assert err["code"] == 400
    assert "warp_drive" in err["detail"]


def test_hello_returns_registry(setup):
    s = fresh_session(setup)
    (reply,) = send(s, type="hello")
    assert reply["type"] == "registry"
    assert [f["name"] for f in reply["factors"]] == ["position",
                                                     "heading_rate"]
    assert reply["step_hz"] == 50 and reply["broadcast_hz"] == 10


def test_hello_registry_mismatch_reason(setup):
    s = fresh_session(setup)
    (err,) = send(s, type="hello",
                  registry={"factors": [{"name": "position", "dim": 2},
                                        {"name": "heading_rate", "dim": 9}]})
    assert err["code"] == 409
    assert "heading_rate" in err["detail"] and "dim" in err["detail"]
    ok = send(s, type="hello",
              registry={"factors": [
                  {"name": "position", "dim": 2, "algorithm": "metra"},
                  {"name": "heading_rate", "algorithm": "diayn"}]})
    assert ok[0]["type"] == "registry"


def test_set_skill_projects_onto_simplex(setup):
    s = fresh_session(setup)
    assert send(s, type="set_skill", factor="heading_rate",
                values=[4.0, -1.0, 0.5, 0.0]) == []
    applied = s.state_message()["applied_z"]["heading_rate"]
    assert applied == pytest.approx([1.0, 0.0, 0.0, 0.0])
    assert abs(sum(applied) - 1.0) < 1e-9
    assert min(applied) >= 0.0


def test_set_skill_projects_metra_norm_band(setup):
    bundle, prior, reg = setup
    s = fresh_session(setup)
    send(s, type="set_skill", factor="position", values=[30.0, 40.0])
    applied = np.asarray(s.state_message()["applied_z"]["position"])
    lo = prior.norm_lo["position"]
    hi = prior.norm_hi["position"]
    n = np.linalg.norm(applied)
    assert lo - 1e-9 <= n <= hi + 1e-9
    # direction preserved
    assert np.allclose(applied / n, [0.6, 0.8])


def test_set_skill_bad_requests(setup):
    s = fresh_session(setup)
    before = s.z_cat.copy()
    (e1,) = send(s, type="set_skill", factor="nope", values=[1, 0, 0, 0])
    (e2,) = send(s, type="set_skill", factor="position", values=[1, 0, 0])
    (e3,) = send(s, type="set_skill", factor="position",
                 values=[float("nan"), 0.0])
    (e4,) = send(s, type="set_skill", factor="position", values="wat")
    for e in (e1, e2, e3, e4):
        assert e["type"] == "error" and e["code"] == 400
    assert np.array_equal(s.z_cat, before)


def test_set_weights_normalizes_and_zero_rejected(setup):
    s = fresh_session(setup)
    assert send(s, type="set_weights", values=[3.0, -4.0, 0.0]) == []
    assert np.allclose(s.lam, [0.6, 0.8, 0.0])
    (err,) = send(s, type="set_weights", values=[0.0, 0.0, 0.0])
    assert err["type"] == "error"
    assert np.allclose(s.lam, [0.6, 0.8, 0.0])


def test_applied_command_always_valid(setup):
    bundle, prior, reg = setup
    s = fresh_session(setup)
    barrage = [
        {"type": "set_skill", "factor": "heading_rate",
         "values": [-5, 12, 0.1, 3]},
        {"type": "set_skill", "factor": "position", "values": [0.0, 0.0]},
        {"type": "set_weights", "values": [100.0, 1e-9, 5.0]},
        {"type": "resample"},
        {"type": "set_skill", "factor": "position", "values": [1e-13, 0]},
        {"type": "set_weights", "values": [0, 0, 1]},
    ]
    for msg in barrage:
        s.handle(json.dumps(msg))
        SkillCommand(zs=reg.split(s.z_cat), lam=s.lam).validate(reg, prior)
        for _ in range(3):
            s.tick()


def test_resample_matches_direct_sampling_chi_square(setup):
    """Argmax-bin histograms of service resamples vs direct prior draws
    on the 4-way simplex factor; two-sample chi-square at p=0.001."""
    bundle, prior, reg = setup
    s = fresh_session(setup, seed=11)
    n = 600
    lo = reg.offsets[1]
    service_draws = np.empty((n, 4))
    for i in range(n):
        send(s, type="resample")
        service_draws[i] = s.z_cat[lo:lo + 4]
    rng = np.random.default_rng(999)
    direct = sample_skills(prior, reg, rng, n)[:, lo:lo + 4]

    a = np.bincount(np.argmax(service_draws, axis=1), minlength=4)
    b = np.bincount(np.argmax(direct, axis=1), minlength=4)
    chi2 = float((((a - b) ** 2) / np.maximum(a + b, 1)).sum())
    assert chi2 < 16.27, (a.tolist(), b.tolist(), chi2)
    # the metra factor stays inside the prior's norm band
    zp = service_draws  # noqa: F841
    pos = np.array([s2[:2] for s2 in [s.z_cat]])
    assert prior.norm_lo["position"] - 1e-9 <= np.linalg.norm(
        s.z_cat[:2]) <= prior.norm_hi["position"] + 1e-9


def test_pause_freezes_time_broadcasts_continue(setup):
    s = fresh_session(setup)
    for _ in range(5):
        s.tick()
    t0 = s.t
    assert t0 > 0.0
    send(s, type="pause")
    due = [s.tick() for _ in range(10)]
    assert s.t == t0
    assert due.count(True) == 2
    assert s.state_message()["paused"] is True
    send(s, type="resume")
    s.tick()
    assert s.t > t0


def test_reset_zeroes_clock_keeps_command(setup):
    s = fresh_session(setup)
    send(s, type="set_weights", values=[1.0, 0.0, 0.0])
    for _ in range(7):
        s.tick()
    z_before = s.z_cat.copy()
    send(s, type="reset")
    assert s.t == 0.0 and s.sim_steps == 0
    assert np.array_equal(s.z_cat, z_before)
    assert np.allclose(s.lam, [1.0, 0.0, 0.0])
    row = np.asarray(s.state_message()["state"])
    assert np.allclose(row[:2], 0.0)  # back at the origin


def test_state_message_schema(setup):
    s = fresh_session(setup)
    for _ in range(3):
        s.tick()
    m = s.state_message()
    assert m["type"] == "state"
    assert set(m) == {"type", "t", "step", "paused", "state",
                      "factor_states", "applied_z", "applied_lam",
                      "scores", "rewards"}
    assert len(m["state"]) == 10
    assert set(m["factor_states"]) == {"position", "heading_rate"}
    assert m["factor_states"]["position"] == [m["state"][0], m["state"][1]]
    assert m["factor_states"]["heading_rate"] == [m["state"][6]]
    assert len(m["applied_lam"]) == 3
    assert set(m["rewards"]) == {"position", "heading_rate", "style", "reg"}
    assert all(np.isfinite(v) for v in m["scores"].values())
    json.dumps(m)  # wire-serializable


def test_session_never_mutates_bundle(setup):
    bundle, prior, reg = setup
    before = json.dumps(_encode(bundle.state_dict()), sort_keys=True)
    s = SkillSession(bundle, prior, seed=5)
    for i in range(120):
        if i % 17 == 0:
            send(s, type="resample")
        if i % 29 == 0:
            send(s, type="set_skill", factor="position", values=[5.0, 5.0])
        s.tick()
    after = json.dumps(_encode(bundle.state_dict()), sort_keys=True)
    assert before == after


# -- websocket loopback ------------------------------------------------------


@pytest.fixture(scope="module")
def client(setup):
    bundle, prior, _ = setup
    app = make_app(bundle, prior, time_scale=50.0)
    with TestClient(app) as c:
        yield c


def recv_states(ws, n):
    out = []
    while len(out) < n:
        m = json.loads(ws.receive_text())
        if m["type"] == "state":
            out.append(m)
    return out


def test_ws_discovery_and_handshake(client):
    r = client.get("/")
    assert r.status_code == 200
    assert r.json()["service"] == "symskill-session"
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "resample"}))
        pre = json.loads(ws.receive_text())
        assert pre["type"] == "error" and "hello" in pre["detail"]
        ws.send_text(json.dumps({"type": "hello"}))
        reg = json.loads(ws.receive_text())
        assert reg["type"] == "registry"
        assert [f["name"] for f in reg["factors"]] == ["position",
                                                       "heading_rate"]
        s1, s2 = recv_states(ws, 2)
        assert s2["t"] > s1["t"]
        assert len(s1["state"]) == 10


def test_ws_set_skill_reflected_within_two_frames(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "hello"}))
        ws.receive_text()
        recv_states(ws, 2)  # stream established
        ws.send_text(json.dumps({"type": "set_skill",
                                 "factor": "heading_rate",
                                 "values": [9, 0, 0, 0]}))
        frames = recv_states(ws, 2)
        applied = [f["applied_z"]["heading_rate"] for f in frames]
        assert applied[-1] == pytest.approx([1.0, 0.0, 0.0, 0.0]), applied


def test_ws_zero_weights_rejected_previous_kept(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "hello"}))
        ws.receive_text()
        ws.send_text(json.dumps({"type": "set_weights",
                                 "values": [3, 4, 0]}))
        # wait until the valid weights are applied
        while True:
            m = json.loads(ws.receive_text())
            if m["type"] == "state" and m["applied_lam"] == pytest.approx(
                    [0.6, 0.8, 0.0]):
                break
        ws.send_text(json.dumps({"type": "set_weights",
                                 "values": [0, 0, 0]}))
        got_error = False
        states = []
        while len(states) < 3:
            m = json.loads(ws.receive_text())
            if m["type"] == "error":
                got_error = True
            elif m["type"] == "state":
                states.append(m)
        assert got_error
        for st in states:
            assert st["applied_lam"] == pytest.approx([0.6, 0.8, 0.0])


def test_ws_pause_freezes_sim_time(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "hello"}))
        ws.receive_text()
        recv_states(ws, 1)
        ws.send_text(json.dumps({"type": "pause"}))
        while True:
            m = json.loads(ws.receive_text())
            if m["type"] == "state" and m["paused"]:
                break
        frozen = [m] + recv_states(ws, 3)
        assert len({f["t"] for f in frozen}) == 1
        ws.send_text(json.dumps({"type": "resume"}))
        while True:
            m = json.loads(ws.receive_text())
            if m["type"] == "state" and not m["paused"]:
                break
        assert recv_states(ws, 1)[0]["t"] > frozen[0]["t"]


def test_ws_malformed_midstream_continues(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "hello"}))
        ws.receive_text()
        ws.send_text("{broken")
        got_error = False
        for _ in range(30):
            m = json.loads(ws.receive_text())
            if m["type"] == "error":
                got_error = True
                break
        assert got_error
        assert recv_states(ws, 2)[-1]["t"] > 0


def test_ws_registry_mismatch_refuses_connection(client):
    with pytest.raises(WebSocketDisconnect) as exc_info:
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps({
                "type": "hello",
                "registry": {"factors": [{"name": "position"},
                                         {"name": "bogus"}]}}))
            m = json.loads(ws.receive_text())
            assert m["type"] == "error" and m["code"] == 409
            assert "bogus" in m["detail"]
            ws.receive_text()
    assert exc_info.value.code == 1008
