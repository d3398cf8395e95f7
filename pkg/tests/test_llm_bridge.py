import itertools
import json
import socket
import tempfile
import threading
import time
import unittest
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import yaml

from src.errors import (
    BankTooSmall,
    ConfigError,
    CorruptFile,
    EndpointUnreachable,
    FingerprintMismatch,
    HttpStatus,
    LlmTimeout,
    StubKeyMissing,
    Unparseable,
)
from src.llm.client import Backend, LlmConfig, StubMode, complete, complete_many, load_stub_script
from src.llm.parser import ParsePath, parse_response
from src.llm.prompt import (
    ShotKind,
    ShotMode,
    build_prompt,
    exemplar_instance,
    narrative_for,
    render_answer,
    signed_ranking,
)
from tests.fixtures import TRAINING, small_thesaurus


def _closed_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class PromptTestCase(unittest.TestCase):
    def setUp(self):
        self.thesaurus, _, _ = small_thesaurus()
        self.target = self.thesaurus.exemplars[0]
        self.instance = exemplar_instance(self.thesaurus, self.target)


class TestShotMode(unittest.TestCase):
    def test_labels(self):
        self.assertEqual(ShotMode.parse("zero").label, "zero-shot")
        self.assertEqual(ShotMode.parse("FEW", 4).n_shots, 4)

    def test_few_shot_bounds(self):
        with self.assertRaises(ConfigError):
            ShotMode(ShotKind.FEW, k=11)


class TestBuildPrompt(PromptTestCase):
    def test_zero_shot(self):
        bundle = build_prompt(self.thesaurus, self.instance, ShotMode(), seed=0)
        self.assertEqual(bundle.shots, ())
        self.assertTrue(bundle.user_text.startswith("### Explain this instance"))
        self.assertIn("Test records from a wearable study.", bundle.system_text)
        self.assertIn("RANKING:", bundle.system_text)
        self.assertEqual(bundle.feature_names, TRAINING)
        self.assertEqual([m["role"] for m in bundle.messages()], ["system", "user"])

    def test_few_shot_excludes_the_target(self):
        bundle = build_prompt(self.thesaurus, self.instance, ShotMode(ShotKind.FEW, k=3), seed=5)
        ids = [s.instance_id for s in bundle.shots]
        self.assertEqual(len(set(ids)), 3)
        self.assertNotIn(self.target.instance_id, ids)
        self.assertIn("### Example 3", bundle.user_text)
        again = build_prompt(self.thesaurus, self.instance, ShotMode(ShotKind.FEW, k=3), seed=5)
        self.assertEqual(bundle, again)

    def test_one_shot(self):
        bundle = build_prompt(self.thesaurus, self.instance, ShotMode(ShotKind.ONE), seed=0)
        self.assertEqual(len(bundle.shots), 1)
        self.assertEqual(bundle.to_dict()["mode"], "one-shot")

    def test_bank_too_small(self):
        with self.assertRaises(BankTooSmall):
            build_prompt(self.thesaurus, self.instance, ShotMode(ShotKind.FEW, k=8), seed=0)

    def test_validation_features_never_reach_the_prompt(self):
        leaky = replace(self.instance, features=self.instance.features + (("stress_score", 55.0),))
        bundle = build_prompt(self.thesaurus, leaky, ShotMode(), seed=0)
        self.assertNotIn("stress_score", bundle.user_text)

    def test_foreign_dataset(self):
        foreign = replace(self.instance, fingerprint=replace(self.instance.fingerprint, n_rows=3))
        with self.assertRaises(FingerprintMismatch):
            build_prompt(self.thesaurus, foreign, ShotMode(), seed=0)

    def test_token_estimate_grows_with_the_shot_count(self):
        modes = [ShotMode(), ShotMode(ShotKind.ONE), ShotMode(ShotKind.FEW, k=3), ShotMode(ShotKind.FEW, k=5)]
        estimates = [build_prompt(self.thesaurus, self.instance, m, seed=2).token_estimate for m in modes]
        self.assertEqual(estimates, sorted(set(estimates)))


class TestParser(unittest.TestCase):
    def test_structured_block(self):
        text = "RANKING:\n1. steps: +\n2. resting heart rate: -\nEXPLANATION:\nWalking matters most."
        parsed = parse_response(text, TRAINING)
        self.assertEqual(parsed.technical_ranking, (("steps", "+"), ("resting_heart_rate", "-")))
        self.assertEqual(parsed.narrative, "Walking matters most.")
        self.assertEqual(parsed.parse_path, ParsePath.STRUCTURED)

    def test_unknown_names_are_skipped(self):
        parsed = parse_response("RANKING:\n1. weight: +\n2. steps: -\n", TRAINING)
        self.assertEqual(parsed.technical_ranking, (("steps", "-"),))

    def test_free_text_scan(self):
        text = "Higher steps put this person here. Sleep duration was lower than usual."
        parsed = parse_response(text, TRAINING)
        self.assertEqual(parsed.technical_ranking, (("steps", "+"), ("sleep_duration", "-")))
        self.assertEqual(parsed.parse_path, ParsePath.FALLBACK)

    def test_unparseable(self):
        for text in ("", "   ", "Nothing relevant here."):
            with self.assertRaises(Unparseable):
                parse_response(text, TRAINING)

    def test_rendered_answers_parse_back(self):
        for order in itertools.permutations(TRAINING):
            for signs in itertools.product("+-", repeat=len(order)):
                ranking = tuple(zip(order, signs))
                narrative = narrative_for(ranking, "active", {})
                parsed = parse_response(render_answer(ranking, narrative), TRAINING)
                self.assertEqual(parsed.technical_ranking, ranking)
                self.assertEqual(parsed.narrative, narrative)
                self.assertEqual(parsed.parse_path, ParsePath.STRUCTURED)


class TestStubs(PromptTestCase):
    def test_echo_returns_the_reference_ranking(self):
        bundle = build_prompt(self.thesaurus, self.instance, ShotMode(), seed=0)
        completion = complete(LlmConfig(stub_mode=StubMode.ECHO), bundle)
        parsed = parse_response(completion.text, bundle.feature_names)
        self.assertEqual(parsed.technical_ranking, signed_ranking(self.target.explanation))
        self.assertEqual(completion.backend, "stub:echo")

    def test_reverse(self):
        bundle = build_prompt(self.thesaurus, self.instance, ShotMode(), seed=0)
        parsed = parse_response(complete(LlmConfig(stub_mode=StubMode.REVERSE), bundle).text, bundle.feature_names)
        self.assertEqual(parsed.technical_ranking, signed_ranking(self.target.explanation)[::-1])

    def test_context_without_shots_is_alphabetical(self):
        bundle = build_prompt(self.thesaurus, self.instance, ShotMode(), seed=0)
        parsed = parse_response(complete(LlmConfig(stub_mode=StubMode.CONTEXT), bundle).text, bundle.feature_names)
        self.assertEqual(parsed.features, sorted(TRAINING))

    def test_echo_without_reference(self):
        bundle = replace(build_prompt(self.thesaurus, self.instance, ShotMode(), seed=0), reference=None)
        with self.assertRaises(StubKeyMissing):
            complete(LlmConfig(stub_mode=StubMode.ECHO), bundle)

    def test_scripted(self):
        bundle = build_prompt(self.thesaurus, self.instance, ShotMode(), seed=0)
        with tempfile.TemporaryDirectory() as tmp:
            p = Path(tmp) / "stub.json"
            p.write_text(json.dumps({bundle.instance_id: "RANKING:\n1. steps: +\n"}))
            script = load_stub_script(p)
        cfg = LlmConfig(stub_mode=StubMode.SCRIPTED)
        self.assertEqual(complete(cfg, bundle, script).text, "RANKING:\n1. steps: +\n")
        with self.assertRaises(StubKeyMissing):
            complete(cfg, bundle, {})

    def test_scripted_from_yaml(self):
        with tempfile.TemporaryDirectory() as tmp:
            p = Path(tmp) / "stub.yaml"
            p.write_text(yaml.safe_dump({"p00@2021-01-01T00:00:00Z": "RANKING:\n1. steps: -\n"}))
            self.assertEqual(load_stub_script(p), {"p00@2021-01-01T00:00:00Z": "RANKING:\n1. steps: -\n"})
            bad = Path(tmp) / "bad.yml"
            bad.write_text("- just\n- a list\n")
            with self.assertRaises(CorruptFile):
                load_stub_script(bad)

    def test_many_keeps_input_order(self):
        bundles = [
            build_prompt(self.thesaurus, exemplar_instance(self.thesaurus, e), ShotMode(), seed=0)
            for e in self.thesaurus.exemplars[:4]
        ]
        out = complete_many(LlmConfig(concurrency=2), bundles)
        for bundle, completion in zip(bundles, out):
            parsed = parse_response(completion.text, bundle.feature_names)
            self.assertEqual(parsed.technical_ranking, signed_ranking(bundle.reference))

    def test_negative_temperature(self):
        with self.assertRaises(ConfigError):
            LlmConfig(temperature=-0.1)


class _ScriptedHandler(BaseHTTPRequestHandler):
    """Replies from the server's `script` queue: (status, body, delay seconds)."""

    def do_POST(self):  # noqa: N802
        length = int(self.headers.get("Content-Length", 0))
        self.server.requests.append(json.loads(self.rfile.read(length) or b"{}"))
        status, body, delay = self.server.script.pop(0) if self.server.script else (500, "", 0.0)
        if delay:
            time.sleep(delay)
        payload = body.encode("utf-8") if isinstance(body, str) else json.dumps(body).encode("utf-8")
        try:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
        except OSError:
            # client already gave up
            return

    def log_message(self, format, *args):  # noqa: A002
        return


def _completion_body(content):
    return {"choices": [{"message": {"content": content}}], "usage": {"total_tokens": 12}}


class TestHttpBackend(PromptTestCase):
    def setUp(self):
        super().setUp()
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _ScriptedHandler)
        self.httpd.script = []
        self.httpd.requests = []
        threading.Thread(target=self.httpd.serve_forever, name="llm-stub-server", daemon=True).start()
        host, port = self.httpd.server_address
        self.bundle = build_prompt(self.thesaurus, self.instance, ShotMode(), seed=0)
        self.cfg = LlmConfig(
            model_name="m",
            backend=Backend.HTTP,
            endpoint_url=f"http://{host}:{port}/v1",
            max_retries=2,
            backoff=0.0,
            timeout=2.0,
        )

    def tearDown(self):
        self.httpd.shutdown()
        self.httpd.server_close()

    def test_retries_server_errors(self):
        self.httpd.script = [(500, "busy", 0.0), (503, "", 0.0), (200, _completion_body("RANKING:\n1. steps: +"), 0.0)]
        completion = complete(self.cfg, self.bundle)
        self.assertEqual(completion.retries, 2)
        self.assertEqual(completion.text, "RANKING:\n1. steps: +")
        self.assertEqual(completion.usage, {"total_tokens": 12})
        self.assertEqual(len(self.httpd.requests), 3)
        self.assertEqual(self.httpd.requests[-1]["model"], "m")
        self.assertEqual(self.httpd.requests[-1]["messages"], self.bundle.messages())

    def test_client_error_is_not_retried(self):
        self.httpd.script = [(404, "no model", 0.0)]
        with self.assertRaises(HttpStatus) as ctx:
            complete(self.cfg, self.bundle)
        self.assertEqual(ctx.exception.code, 404)
        self.assertEqual(len(self.httpd.requests), 1)

    def test_rate_limit_is_retried(self):
        self.httpd.script = [(429, "slow down", 0.0), (200, _completion_body("RANKING:\n1. steps: -"), 0.0)]
        completion = complete(self.cfg, self.bundle)
        self.assertEqual(completion.attempts, 2)

    def test_gives_up_after_the_retry_budget(self):
        self.httpd.script = [(503, "", 0.0)] * 5
        with self.assertRaises(HttpStatus) as ctx:
            complete(self.cfg, self.bundle)
        self.assertEqual(ctx.exception.code, 503)
        self.assertEqual(len(self.httpd.requests), 3)

    def test_negative_backoff(self):
        with self.assertRaises(ConfigError):
            replace(self.cfg, backoff=-1.0)

    def test_timeout_after_all_attempts(self):
        self.httpd.script = [(200, _completion_body("late"), 1.0)] * 3
        cfg = replace(self.cfg, timeout=0.2, max_retries=1)
        with self.assertRaises(LlmTimeout):
            complete(cfg, self.bundle)

    def test_malformed_body(self):
        self.httpd.script = [(200, {"choices": []}, 0.0)]
        with self.assertRaises(HttpStatus):
            complete(self.cfg, self.bundle)

    def test_unreachable_endpoint(self):
        cfg = replace(self.cfg, endpoint_url=f"http://127.0.0.1:{_closed_port()}/v1", max_retries=1)
        with self.assertRaises(EndpointUnreachable):
            complete(cfg, self.bundle)


if __name__ == "__main__":
    unittest.main()
