"""Wire-protocol conformance against the shared fixture file.

docs/protocol_fixtures.json is the contract both ends test against: this
suite drives the service's message handler with every fixture frame, and the
operator panel's test suite (frontend/test/protocol.test.ts) checks its
client schemas against the same file. Keeping one fixture ensures the two
sides cannot drift apart silently.
"""
import json
from pathlib import Path

import jsonschema
import pytest

from symskill.config import preset
from symskill.policy import make_bundle
from symskill.service import SkillSession
from symskill.skills import PriorState

FIXTURE_PATH = Path(__file__).parent.parent / "docs" / "protocol_fixtures.json"
FIX = json.loads(FIXTURE_PATH.read_text())


@pytest.fixture()
def session():
    reg = preset("mixed").registry()
    bundle = make_bundle(reg, hidden=(8,), critic_hidden=(8,), usd_hidden=(8,),
                         seed=0)
    return SkillSession(bundle, PriorState.initial(reg), seed=1)


def replies_for(session, frame):
    return session.handle(json.dumps(frame))


def test_valid_client_frames_draw_no_error(session):
    for entry in FIX["client_to_server"]["valid"]:
        replies = replies_for(session, entry["frame"])
        errors = [r for r in replies if r.get("type") == "error"]
        assert errors == [], (entry, errors)


def test_schema_invalid_client_frames_rejected(session):
    for entry in FIX["client_to_server"]["schema_invalid"]:
        (reply,) = replies_for(session, entry["frame"])
        assert reply["type"] == "error", entry
        assert reply["code"] == entry["code"], (entry, reply)


def test_semantic_error_frames_rejected_with_code(session):
    for entry in FIX["client_to_server"]["semantic_error"]:
        (reply,) = replies_for(session, entry["frame"])
        assert reply["type"] == "error", entry
        assert reply["code"] == entry["code"], (entry, reply)


def test_tolerated_frames_draw_no_error(session):
    """Frames the client's strict schemas refuse but the server accepts:
    the liberal-accept side of the contract."""
    for entry in FIX["client_to_server"]["client_rejects_server_tolerates"]:
        replies = replies_for(session, entry["frame"])
        assert [r for r in replies if r.get("type") == "error"] == [], entry


def _schema_for(frame):
    kind = frame.get("type") if isinstance(frame, dict) else None
    return FIX["server_schema"].get(kind)


def test_server_fixture_frames_match_schema():
    for entry in FIX["server_to_client"]["valid"]:
        schema = _schema_for(entry["frame"])
        assert schema is not None, entry
        jsonschema.validate(entry["frame"], schema)
    for entry in FIX["server_to_client"]["schema_invalid"]:
        schema = _schema_for(entry["frame"])
        if schema is None:
            continue  # unknown type: nothing to validate against
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(entry["frame"], schema)


def test_live_frames_validate_under_shared_schema(session):
    (reg_msg,) = replies_for(session, {"type": "hello"})
    jsonschema.validate(reg_msg, FIX["server_schema"]["registry"])
    for _ in range(7):
        session.tick()
    jsonschema.validate(session.state_message(), FIX["server_schema"]["state"])
    (err,) = replies_for(session, {"type": "set_weights", "values": [0, 0, 0]})
    jsonschema.validate(err, FIX["server_schema"]["error"])
    # every emitted frame stays plain JSON (no NaN/Infinity leaks)
    json.loads(json.dumps([reg_msg, session.state_message(), err],
                          allow_nan=False))
