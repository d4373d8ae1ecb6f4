"""Live skill-commanding session service.

Loads a frozen policy bundle, steps one simulated agent in real time, and
exposes a line-oriented JSON message protocol over a websocket so an
operator can command per-factor skills and factor weights while watching
state broadcasts. One independent session per connection. The wire format
is documented field by field in docs/protocol.md.
"""
from __future__ import annotations

import asyncio
import collections
import json

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import heads
from .env import EnvConfig, PointQuadEnv, StyleRegConfig
from .errors import ConfigError
from .mirrors import MIRROR_IDS
from .ppo import _factor_rewards
from .skills import (PriorState, mirror_skill, project_skill, project_weights,
                     sample_skills)

DEFAULT_PORT = 8765
STEP_HZ = 50
BROADCAST_HZ = 10
OUT_QUEUE_MAX = 32


def mirror_table(factor, k: int) -> list:
    """Matrix M with mirror_skill(k, f, z) == z @ M for this factor. Both
    mirror families act linearly on the skill vector, so the basis images
    determine the map exactly."""
    eye = np.eye(factor.dim)
    rows = [mirror_skill(k, factor, eye[i]).tolist() for i in range(factor.dim)]
    return rows


def registry_payload(registry) -> dict:
    d = registry.to_registry_dict()
    for f, fd in zip(registry.factors, d["factors"]):
        fd["mirror_tables"] = {str(k): mirror_table(f, k) for k in MIRROR_IDS}
    return d


def _err(code: int, detail: str) -> dict:
    return {"type": "error", "code": int(code), "detail": str(detail)}


class SkillSession:
    """Transport-agnostic session core: holds the env, the applied command,
    and per-step telemetry. The transport drives tick() at the step rate and
    forwards client frames into handle()."""

    def __init__(self, bundle, prior: PriorState, *, env_cfg=None,
                 style_cfg=None, seed: int = 0, step_hz: int = STEP_HZ,
                 broadcast_hz: int = BROADCAST_HZ):
        self.bundle = bundle
        self.prior = prior
        self.registry = bundle.registry
        self.env_cfg = (env_cfg or EnvConfig()).validate()
        self.style_cfg = (style_cfg or StyleRegConfig()).validate()
        self.env = PointQuadEnv(1, cfg=self.env_cfg, style=self.style_cfg,
                                seed=seed, auto_reset=True, curriculum=False)
        self.rng = np.random.default_rng(seed)
        self.dt = 1.0 / float(step_hz)
        self.per_broadcast = max(1, int(round(step_hz / broadcast_hz)))
        self.z_cat = sample_skills(prior, self.registry, self.rng, 1)[0]
        m = self.registry.num_factors + 1
        self.lam = np.full(m, 1.0 / np.sqrt(m))
        self.t = 0.0
        self.sim_steps = 0
        self.tick_count = 0
        self.paused = False
        self.scores = {f.name: 0.0 for f in self.registry.factors}
        self.rewards = {"style": 0.0, "reg": 0.0,
                        **{f.name: 0.0 for f in self.registry.factors}}

    # -- protocol ----------------------------------------------------------

    def registry_message(self) -> dict:
        return {"type": "registry", **registry_payload(self.registry),
                "step_hz": int(round(1.0 / self.dt)),
                "broadcast_hz": int(round(1.0 / (self.dt * self.per_broadcast))),
                "dt": self.env_cfg.dt}

    def check_hello(self, msg: dict) -> str | None:
        """Mismatch reason when the client's expected registry disagrees
        with the bundle, else None. A hello without a registry is accepted."""
        want = msg.get("registry")
        if want is None:
            return None
        if not isinstance(want, dict) or not isinstance(
                want.get("factors"), list):
            return "hello registry must be an object with a 'factors' list"
        ours = {f.name: f for f in self.registry.factors}
        theirs = want["factors"]
        if len(theirs) != len(ours):
            return (f"registry mismatch: client expects {len(theirs)} "
                    f"factors, bundle has {len(ours)}")
        for fd in theirs:
            if not isinstance(fd, dict) or "name" not in fd:
                return "registry mismatch: factor entries need a 'name'"
            f = ours.get(fd["name"])
            if f is None:
                return f"registry mismatch: bundle has no factor '{fd['name']}'"
            for key, have in (("dim", f.dim), ("algorithm", f.algorithm),
                              ("mirror", f.mirror),
                              ("state_slice", list(f.state_slice))):
                if key in fd and fd[key] != have:
                    return (f"registry mismatch: factor '{f.name}' {key} is "
                            f"{have!r}, client expects {fd[key]!r}")
        return None

    def handle(self, text: str) -> list[dict]:
        """Apply one client frame; returns immediate replies. State changes
        (applied z, lam, pause flag) show up in subsequent broadcasts."""
        try:
            msg = json.loads(text)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return [_err(400, f"malformed message: {exc}")]
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            return [_err(400, "message must be a JSON object with a string "
                              "'type' field")]
        kind = msg["type"]
        if kind == "hello":
            reason = self.check_hello(msg)
            if reason:
                return [_err(409, reason)]
            return [self.registry_message()]
        if kind == "set_skill":
            return self._set_skill(msg)
        if kind == "set_weights":
            return self._set_weights(msg)
        if kind == "resample":
            self.z_cat = sample_skills(self.prior, self.registry, self.rng,
                                       1)[0]
            return []
        if kind == "reset":
            self.env.reset_all()
            self.t = 0.0
            self.sim_steps = 0
            return []
        if kind == "pause":
            self.paused = True
            return []
        if kind == "resume":
            self.paused = False
            return []
        return [_err(400, f"unknown message type {kind!r}")]

    def _parse_values(self, msg: dict, length: int):
        values = msg.get("values")
        try:
            v = np.asarray(values, dtype=np.float64)
        except (TypeError, ValueError):
            return None, _err(400, "'values' must be a numeric list")
        if v.shape != (length,):
            return None, _err(400, f"'values' must have length {length}, "
                                   f"got shape {v.shape}")
        if not np.isfinite(v).all():
            return None, _err(400, "'values' must be finite")
        return v, None

    def _set_skill(self, msg: dict) -> list[dict]:
        name = msg.get("factor")
        idx = next((i for i, f in enumerate(self.registry.factors)
                    if f.name == name), None)
        if idx is None:
            return [_err(400, f"unknown factor {name!r}")]
        f = self.registry.factors[idx]
        v, err = self._parse_values(msg, f.dim)
        if err:
            return [err]
        lo = self.registry.offsets[idx]
        self.z_cat = self.z_cat.copy()
        self.z_cat[lo:lo + f.dim] = project_skill(f, self.prior, v)
        return []

    def _set_weights(self, msg: dict) -> list[dict]:
        v, err = self._parse_values(msg, self.registry.num_factors + 1)
        if err:
            return [err]
        try:
            self.lam = project_weights(v)
        except ConfigError as exc:
            return [_err(400, str(exc))]
        return []

    # -- simulation --------------------------------------------------------

    def tick(self) -> bool:
        """One step-rate tick. Returns True when a broadcast is due. Paused
        sessions keep broadcasting the frozen state."""
        self.tick_count += 1
        if not self.paused:
            self._sim_step()
        return self.tick_count % self.per_broadcast == 0

    def _sim_step(self) -> None:
        s = self.env.states.copy()
        a = self.bundle.mean_action(s, self.z_cat[None], self.lam[None])
        res = self.env.step(a)
        s2 = res.next_states
        zs = self.registry.split(self.z_cat[None])
        r_f = _factor_rewards(self.bundle, self.prior, s, a, s2, zs)
        for f, z_i, r in zip(self.registry.factors, zs, r_f):
            model = self.bundle.models[f.name]
            if f.algorithm == "metra":
                c = heads.cosine_rows(model.delta_phi(s, s2), np.asarray(z_i))
            else:
                c = heads.cosine_rows(np.asarray(z_i), model.posterior_mean(s2))
            self.scores[f.name] = float(c[0])
            self.rewards[f.name] = float(r[0])
        self.rewards["style"] = float(res.r_style[0])
        self.rewards["reg"] = float(res.r_reg[0])
        self.t += self.env_cfg.dt
        self.sim_steps += 1

    def state_message(self) -> dict:
        row = self.env.states[0]
        factor_states = {
            f.name: [float(row[j]) for j in f.state_slice]
            for f in self.registry.factors
        }
        applied_z = {}
        for i, f in enumerate(self.registry.factors):
            lo = self.registry.offsets[i]
            applied_z[f.name] = [float(v) for v in self.z_cat[lo:lo + f.dim]]
        return {
            "type": "state",
            "t": self.t,
            "step": self.sim_steps,
            "paused": self.paused,
            "state": [float(v) for v in row],
            "factor_states": factor_states,
            "applied_z": applied_z,
            "applied_lam": [float(v) for v in self.lam],
            "scores": dict(self.scores),
            "rewards": dict(self.rewards),
        }


def make_app(bundle, prior, *, env_cfg=None, style_cfg=None, seed: int = 0,
             step_hz: int = STEP_HZ, broadcast_hz: int = BROADCAST_HZ,
             time_scale: float = 1.0):
    """FastAPI app with the websocket session endpoint at /ws.

    time_scale > 1 runs the stepping loop faster than real time (test use);
    the sim-time semantics are unchanged.
    """
    app = FastAPI(title="symskill session service")

    @app.get("/")
    async def root():
        return {"service": "symskill-session", "endpoint": "/ws",
                "registry": registry_payload(bundle.registry)}

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        session = SkillSession(bundle, prior, env_cfg=env_cfg,
                               style_cfg=style_cfg, seed=seed,
                               step_hz=step_hz, broadcast_hz=broadcast_hz)
        # handshake: the session starts only after a hello is accepted
        while True:
            raw = await websocket.receive_text()
            try:
                kind = json.loads(raw).get("type")
            except (json.JSONDecodeError, AttributeError):
                kind = None
            if kind != "hello":
                await websocket.send_text(json.dumps(
                    _err(400, "handshake requires a hello message first")))
                continue
            replies = session.handle(raw)
            for rep in replies:
                await websocket.send_text(json.dumps(rep))
            if any(r.get("type") == "error" for r in replies):
                await websocket.close(code=1008)
                return
            break

        in_q: asyncio.Queue = asyncio.Queue()
        out_q: collections.deque = collections.deque(maxlen=OUT_QUEUE_MAX)
        wakeup = asyncio.Event()

        def push(m: dict) -> None:
            # deque maxlen drops the oldest frame on backpressure
            out_q.append(m)
            wakeup.set()

        async def reader():
            while True:
                await in_q.put(await websocket.receive_text())

        async def stepper():
            loop = asyncio.get_running_loop()
            dt_wall = session.dt / float(time_scale)
            nxt = loop.time()
            while True:
                nxt += dt_wall
                while not in_q.empty():
                    for rep in session.handle(in_q.get_nowait()):
                        push(rep)
                if session.tick():
                    push(session.state_message())
                delay = nxt - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    nxt = loop.time()
                    await asyncio.sleep(0)

        async def writer():
            while True:
                await wakeup.wait()
                wakeup.clear()
                while out_q:
                    await websocket.send_text(json.dumps(out_q.popleft()))

        def _retrieve(task: asyncio.Task) -> None:
            if not task.cancelled():
                task.exception()

        tasks = [asyncio.create_task(c())
                 for c in (reader, stepper, writer)]
        for t in tasks:
            t.add_done_callback(_retrieve)
        try:
            done, _ = await asyncio.wait(tasks,
                                         return_when=asyncio.FIRST_COMPLETED)
            for t in done:
                exc = t.exception()
                # disconnects and send-into-closing-socket races end the
                # session; anything else is a real bug and must surface
                if exc is not None and not isinstance(
                        exc, (WebSocketDisconnect, RuntimeError)):
                    raise exc
        finally:
            # no awaits here: teardown may run under host cancellation
            for t in tasks:
                t.cancel()

    return app


def _configs_from_extras(extras: dict):
    cfg_d = (extras or {}).get("config")
    if cfg_d:
        try:
            from .config import RunConfig
            cfg = RunConfig.from_dict(cfg_d)
            return cfg.env, cfg.effective_style()
        except ConfigError:
            pass
    return EnvConfig(), StyleRegConfig()


def serve(bundle_path, *, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
          seed: int = 0, time_scale: float = 1.0) -> None:
    """Blocking entry point used by the CLI serve subcommand."""
    import uvicorn

    from .training import load_inference

    bundle, prior, extras = load_inference(bundle_path)
    env_cfg, style_cfg = _configs_from_extras(extras)
    app = make_app(bundle, prior, env_cfg=env_cfg, style_cfg=style_cfg,
                   seed=seed, time_scale=time_scale)
    names = ", ".join(f.name for f in bundle.registry.factors)
    print(f"session service: factors [{names}] on ws://{host}:{port}/ws")
    uvicorn.run(app, host=host, port=port, log_level="warning")
