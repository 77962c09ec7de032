import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from radioscope import (
    CapabilityError,
    DetectionInterrupted,
    RemoteModel,
    SamplingConfig,
    SecretKey,
    WatermarkConfig,
    build_filter,
    combine_distributions,
    contaminated_student,
    derive_run_key,
    detect_closed,
    detect_open,
    generate_corpus,
    mia_detect,
    parse_scenario,
    run_detection,
    run_scenario,
    train_ngram,
)
from radioscope.pipelines import DetectionReport, pvalue_for

KEY = SecretKey(0xFEED)


def wm_cfg(vocab=64, **kw):
    return WatermarkConfig("kgw", KEY, vocab, k=2, gamma=0.25, delta=3.0, **kw)


@pytest.fixture(scope="module")
def contaminated(teacher64):
    cfg = wm_cfg()
    student, train_docs, supervised = contaminated_student(
        teacher64, cfg, 1.0, n_docs=60, doc_len=300, order=3,
        sampling=SamplingConfig(seed=21))
    return cfg, student, train_docs, supervised


@pytest.fixture(scope="module")
def clean_student(teacher64):
    student, _, _ = contaminated_student(
        teacher64, None, 0.0, n_docs=60, doc_len=300, order=3,
        sampling=SamplingConfig(seed=22))
    return student


class TestDetectOpen:
    def test_contaminated_student_detected(self, teacher64, contaminated):
        cfg, student, _, _ = contaminated
        report = run_detection(student, teacher64, cfg, "open", n_docs=15,
                               doc_len=300, sampling=SamplingConfig(seed=23))
        assert report.log10_p < -10
        assert report.n_scored > 1000

    def test_pvalue_recomputable(self, teacher64, contaminated):
        cfg, student, _, _ = contaminated
        report = run_detection(student, teacher64, cfg, "open", n_docs=5,
                               doc_len=200, sampling=SamplingConfig(seed=24))
        p, log10_p = pvalue_for(report.score, report.n_scored, cfg)
        assert report.p_value == p
        assert report.log10_p == log10_p

    def test_clean_student_not_flagged(self, teacher64, clean_student):
        report = run_detection(clean_student, teacher64, wm_cfg(), "open",
                               n_docs=15, doc_len=300,
                               sampling=SamplingConfig(seed=25))
        assert report.p_value > 1e-3

    def test_all_windows_repeated_from_prefix_scores_nothing(self, clean_student):
        cfg = wm_cfg()
        # prefix contains every window of the scored tail
        doc = {"tokens": [1, 2, 1, 2, 1, 2, 1], "prompt_len": 3}
        report = detect_open(clean_student, [doc], cfg)
        assert report.n_scored == 0
        assert report.p_value == 1.0
        assert report.inconclusive

    def test_without_logits_capability_error(self):
        remote = RemoteModel("http://127.0.0.1:9/")
        with pytest.raises(CapabilityError):
            detect_open(remote, [[1, 2, 3]], wm_cfg())

    def test_greedy_cache_does_not_change_result(self, teacher64, contaminated):
        cfg, student, _, _ = contaminated
        docs = generate_corpus(teacher64, 5, 150, SamplingConfig(seed=26),
                               wm=cfg)
        a = detect_open(student, docs, cfg)
        b = detect_open(student, docs, cfg, greedy_cache={})
        assert a.score == b.score
        assert a.n_scored == b.n_scored

    def test_budget_truncates(self, teacher64, contaminated):
        cfg, student, _, _ = contaminated
        docs = generate_corpus(teacher64, 5, 150, SamplingConfig(seed=27),
                               wm=cfg)
        small = detect_open(student, docs, cfg, budget=50)
        assert small.n_scored == 50


class TestDetectClosed:
    def test_watermarked_teacher_flags_itself(self, teacher64):
        cfg = wm_cfg()
        # generate watermarked text, score it directly via empty-model path
        docs = generate_corpus(teacher64, 10, 300, SamplingConfig(seed=30),
                               wm=cfg)
        completions = [d["tokens"][3:] for d in docs]
        prompts = [d["tokens"][:3] for d in docs]
        report = detect_closed(teacher64, prompts, cfg, completions=completions)
        assert report.n_scored >= 1000
        assert report.log10_p < -6

    def test_prompt_windows_excluded(self, clean_student):
        cfg = wm_cfg()
        prompts = [[1, 2, 3, 4]]
        completions = [[1, 2, 9, 9]]
        report = detect_closed(clean_student, prompts, cfg,
                               completions=completions)
        admitted_windows = report.dedup_stats
        # (1,2) occurs in the prompt so (2,?) after seeing 1,2 in completion
        # region is eligible, but the (1,2)->9 tuple window (1,2) is blocked
        assert report.n_scored < admitted_windows[0]

    def test_empty_prompts_rejected(self, clean_student):
        with pytest.raises(ValueError):
            detect_closed(clean_student, [], wm_cfg())

    def test_no_dedup_warns_and_collapses(self, teacher64, clean_student):
        cfg = wm_cfg()
        wm_prompts = [d["tokens"] for d in
                      generate_corpus(teacher64, 15, 200,
                                      SamplingConfig(seed=31), wm=cfg)]
        with pytest.warns(UserWarning, match="NOT valid"):
            report = detect_closed(clean_student, wm_prompts, cfg, dedup=False,
                                   sampling=SamplingConfig(seed=32,
                                                           max_tokens=50))
        assert report.p_value < 1e-3  # spurious: the student is clean
        assert not report.dedup_applied

    def test_filter_reduces_and_reports(self, teacher64, contaminated):
        cfg, student, train_docs, supervised = contaminated
        phi = build_filter([d["tokens"] for d in supervised], cfg.k)
        sampling = SamplingConfig(seed=33, max_tokens=150)
        prompts = [d["tokens"][:8] for d in
                   generate_corpus(teacher64, 10, 20, SamplingConfig(seed=34))]
        unfiltered = detect_closed(student, prompts, cfg, sampling=sampling)
        filtered = detect_closed(student, prompts, cfg, phi=phi,
                                 sampling=sampling)
        assert filtered.n_scored <= unfiltered.n_scored
        size, hit_rate = filtered.filter_stats
        assert size == len(phi)
        assert 0.0 <= hit_rate <= 1.0

    def test_inconclusive_when_nothing_eligible(self, clean_student):
        cfg = wm_cfg()
        # completion repeats the prompt verbatim: every window blocked
        report = detect_closed(clean_student, [[1, 1, 1]], cfg,
                               completions=[[1, 1, 1, 1, 1, 1]])
        assert report.n_scored == 0
        assert report.inconclusive
        assert report.p_value == 1.0


class TestRemoteClosed:
    def test_remote_failure_carries_partial_report(self):
        class FailingHandler(BaseHTTPRequestHandler):
            def do_POST(self):
                self.send_response(500)
                self.send_header("Content-Length", "0")
                self.end_headers()

            def log_message(self, *args):
                pass

        httpd = HTTPServer(("127.0.0.1", 0), FailingHandler)
        threading.Thread(target=httpd.serve_forever, daemon=True).start()
        try:
            remote = RemoteModel(f"http://127.0.0.1:{httpd.server_port}/",
                                 max_retries=1, backoff=0.01)
            with pytest.raises(DetectionInterrupted) as excinfo:
                detect_closed(remote, [[1, 2, 3]], wm_cfg(),
                              sampling=SamplingConfig(max_tokens=5))
            assert excinfo.value.partial.inconclusive
        finally:
            httpd.shutdown()

    def test_remote_happy_path(self):
        class EchoHandler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.dumps({"token": 7}).encode()
                self.send_response(200)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        httpd = HTTPServer(("127.0.0.1", 0), EchoHandler)
        threading.Thread(target=httpd.serve_forever, daemon=True).start()
        try:
            remote = RemoteModel(f"http://127.0.0.1:{httpd.server_port}/")
            report = detect_closed(remote, [[1, 2, 3]], wm_cfg(),
                                   sampling=SamplingConfig(max_tokens=10))
            assert report.n_scored > 0
        finally:
            httpd.shutdown()


class TestMIA:
    def make_docs(self, teacher, n, seed):
        docs = generate_corpus(teacher, n, 120, SamplingConfig(seed=seed))
        return [{**d, "text": " ".join(map(str, d["tokens"]))} for d in docs]

    def test_identical_sets_not_flagged(self, teacher64, clean_student):
        docs = self.make_docs(teacher64, 30, 40)
        d, p, report = mia_detect(clean_student, docs, docs)
        assert d == 0.0
        assert p == pytest.approx(1.0)

    def test_memorizing_student_flagged(self, teacher64):
        train = self.make_docs(teacher64, 60, 41)
        fresh = self.make_docs(teacher64, 60, 42)
        student = train_ngram([d["tokens"] for d in train], order=5,
                              smoothing_lambda=0.01, vocab_size=64)
        _, p, _ = mia_detect(student, train, fresh)
        assert p < 1e-3

    def test_missing_text_excluded_with_count(self, teacher64, clean_student):
        docs = self.make_docs(teacher64, 10, 43)
        broken = [dict(d) for d in docs]
        for d in broken[:4]:
            del d["text"]
        _, _, report = mia_detect(clean_student, broken, docs)
        assert report["skipped"] == 4
        assert report["n_candidate"] == 6

    def test_all_text_missing_rejected(self, clean_student):
        with pytest.raises(ValueError):
            mia_detect(clean_student, [{"tokens": [1, 2]}],
                       [{"tokens": [3, 4], "text": "3 4"}])


class TestCombine:
    def fake(self, p, corpus_id=None):
        meta = {"corpus_id": corpus_id} if corpus_id else {}
        return DetectionReport("kgw", "open", "supervised", 100, 30.0, p,
                               float(np.log10(p)), meta=meta)

    def test_single_report_identity(self):
        p, _ = combine_distributions([self.fake(0.23)])
        assert p == pytest.approx(0.23, rel=1e-9)

    def test_pair_example(self):
        p, _ = combine_distributions([self.fake(0.1), self.fake(0.1)])
        assert p == pytest.approx(0.0560517, abs=1e-6)

    def test_combined_below_min_for_small_ps(self):
        ps = [0.05, 0.04, 0.06, 0.03, 0.05]
        combined, _ = combine_distributions([self.fake(p) for p in ps])
        assert combined < min(ps)

    def test_overlap_warning(self):
        reports = [self.fake(0.1, "corpus-a"), self.fake(0.2, "corpus-a")]
        with pytest.warns(UserWarning, match="share a corpus"):
            combine_distributions(reports)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            combine_distributions([])


class TestScenario:
    def write(self, tmp_path, text):
        path = tmp_path / "s.scn"
        path.write_text(text)
        return path

    def test_missing_scenario_key(self, tmp_path):
        with pytest.raises(ValueError, match="scenario"):
            parse_scenario(self.write(tmp_path, "k = 2\n"))

    def test_line_level_error(self, tmp_path):
        path = self.write(tmp_path, "scenario = rho_sweep\nk : 2\n")
        with pytest.raises(ValueError, match=r":2:"):
            parse_scenario(path)

    def test_unknown_key(self, tmp_path):
        path = self.write(tmp_path, "scenario = rho_sweep\nbogus = 1\n")
        with pytest.raises(ValueError, match="bogus"):
            parse_scenario(path)

    def test_unknown_mode(self, tmp_path):
        path = self.write(tmp_path, "scenario = rho_sweep\nmodes = sideways\n")
        with pytest.raises(ValueError, match="sideways"):
            parse_scenario(path)

    def test_defaults_and_lists(self, tmp_path):
        path = self.write(tmp_path,
                          "scenario = k_sweep\nk_values = 1, 2\n# comment\n")
        spec = parse_scenario(path)
        assert spec["k_values"] == [1, 2]
        assert spec["gamma"] == 0.25

    def test_rho_sweep_end_to_end(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "scenario = rho_sweep",
            "rho = 0, 1.0",
            "repetitions = 2",
            "n_docs = 30",
            "doc_len = 120",
            "detect_docs = 8",
            "detect_len = 120",
            "vocab_size = 32",
            "modes = open",
        ]) + "\n")
        out = run_scenario(path, tmp_path / "out")
        rows = (out / "results.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 4  # header + 2 values x 2 reps
        assert (out / "summary.svg").read_text().startswith("<svg")
        # contaminated rows must dominate the clean ones
        import csv

        with open(out / "results.csv") as f:
            data = list(csv.DictReader(f))
        lo = [float(r["log10_p"]) for r in data if r["value"] == "0.0"]
        hi = [float(r["log10_p"]) for r in data if r["value"] == "1.0"]
        assert max(hi) < min(lo)

    def test_purification_weakens_signal(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "scenario = purification",
            "repetitions = 1",
            "n_docs = 40",
            "doc_len = 150",
            "detect_docs = 10",
            "detect_len = 150",
            "vocab_size = 32",
            "modes = open",
        ]) + "\n")
        out = run_scenario(path, tmp_path / "out")
        import csv

        with open(out / "results.csv") as f:
            data = {r["phase"]: float(r["log10_p"]) for r in csv.DictReader(f)}
        assert data["post"] > data["pre"]

    def test_shipped_demo_runs_quickly(self, tmp_path):
        import time
        from pathlib import Path

        spec = Path(__file__).parents[1] / "docs" / "examples" / "demo.scn"
        t0 = time.time()
        out = run_scenario(spec, tmp_path / "demo")
        assert (out / "results.csv").exists()
        assert (out / "summary.svg").exists()
        assert time.time() - t0 < 600

    def test_run_keys_are_independent(self):
        keys = {derive_run_key(5, i).s for i in range(50)}
        assert len(keys) == 50
