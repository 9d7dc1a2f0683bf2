from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laborcast.data_pipeline import (INDICATORS, INDUSTRIES, FixtureTransport, HttpTransport, Observation,
                                     SeriesRequest, TimeSeriesPanel, assemble_panel, chunk_years,
                                     compute_stats, fetch_many, fetch_series, get_industry,
                                     interpolate_on_grid, interpolate_weekly, make_windows, parse_response,
                                     prepare_panel, read_panel_csv, reconstruct_levels, reference_week,
                                     repair_missing, window_count, write_panel_csv)
from laborcast.data_pipeline.bls import build_payload, default_fixture_dir
from laborcast.data_pipeline.panel import WEEK, panel_to_csv
from laborcast.errors import (DataError, DegenerateFeatureError, InsufficientDataError, ParseError,
                              RemoteError, TransportError)
from laborcast.synthetic import fixture_documents, seasonal_panel

SID = "CES2000000001"


def doc_for(rows, sid=SID, status="REQUEST_SUCCEEDED", message=()):
    return {"status": status, "message": list(message),
            "Results": {"series": [{"seriesID": sid, "data": rows}]}}


class StubBLS:
    """Local HTTP server answering like the BLS v2 endpoint from fixture docs."""

    def __init__(self, docs, fail_first: int = 0, status: int = 200):
        self.docs, self.requests = docs, []
        self.fail_first, self.status = fail_first, status
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                stub.requests.append(body)
                if stub.fail_first > 0:
                    stub.fail_first -= 1
                    self.send_response(503)
                    self.end_headers()
                    return
                if stub.status != 200:
                    self.send_response(stub.status)
                    self.end_headers()
                    return
                first, last = int(body["startyear"]), int(body["endyear"])
                series = []
                for sid in body["seriesid"]:
                    rows = [r for r in stub.docs.get(sid, {"Results": {"series": [{"data": []}]}})
                            ["Results"]["series"][0]["data"] if first <= int(r["year"]) <= last]
                    series.append({"seriesID": sid, "data": rows})
                out = json.dumps({"status": "REQUEST_SUCCEEDED", "message": [],
                                  "Results": {"series": series}}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(out)))
                self.end_headers()
                self.wfile.write(out)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}/"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture(scope="module")
def docs():
    return fixture_documents()


class TestParse:
    def test_triples(self):
        rows = [{"year": "2024", "period": "M02", "value": "1.5"},
                {"year": "2024", "period": "M01", "value": "-"},
                {"year": "2023", "period": "M13", "value": "9"}]
        assert parse_response(doc_for(rows), SID) == [Observation(2024, "M01", None),
                                                      Observation(2024, "M02", 1.5)]

    def test_empty_series(self):
        assert parse_response(doc_for([]), SID) == []

    def test_remote_error(self):
        with pytest.raises(RemoteError, match="daily threshold"):
            parse_response(doc_for([], status="REQUEST_NOT_PROCESSED", message=["daily threshold"]), SID)

    @pytest.mark.parametrize("bad", [[], {"status": "REQUEST_SUCCEEDED"},
                                     doc_for([{"year": "x", "period": "M01", "value": "1"}]),
                                     doc_for([{"year": "2020", "period": "M01", "value": "abc"}])])
    def test_malformed(self, bad):
        with pytest.raises(ParseError):
            parse_response(bad, SID)

    def test_payload_fields(self):
        p = build_payload([SID], 2006, 2015, "k")
        assert p == {"seriesid": [SID], "startyear": "2006", "endyear": "2015", "registrationkey": "k"}

    def test_request_validation_and_key_hidden(self):
        with pytest.raises(ValueError):
            SeriesRequest(SID, 2020, 2019)
        with pytest.raises(ValueError):
            SeriesRequest("", 2020, 2021)
        assert "SECRET" not in repr(SeriesRequest(SID, 2020, 2021, "SECRET"))


class TestChunking:
    def test_chunks_cover_range(self):
        assert chunk_years(2006, 2024, 10) == [(2006, 2015), (2016, 2024)]
        assert chunk_years(2006, 2024, 20) == [(2006, 2024)]
        assert chunk_years(2020, 2020, 3) == [(2020, 2020)]

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1990, 2030), st.integers(0, 40), st.integers(1, 20))
    def test_partition(self, start, span, size):
        chunks = chunk_years(start, start + span, size)
        years = [y for a, b in chunks for y in range(a, b + 1)]
        assert years == list(range(start, start + span + 1))
        assert all(b - a + 1 <= size for a, b in chunks)

    def test_fetch_2006_2024_no_duplicates(self, docs):
        sid = get_industry("construction").series_ids()["employees_k"]
        with StubBLS(docs) as stub:
            obs = fetch_series(SeriesRequest(sid, 2006, 2024, "k"), HttpTransport(stub.url, backoff=0), 10)
        assert [(r["startyear"], r["endyear"]) for r in stub.requests] == [("2006", "2015"), ("2016", "2024")]
        keys = [(o.year, o.period) for o in obs]
        assert len(keys) == len(set(keys)) == 19 * 12
        assert keys == sorted(keys)
        # boundary months on both sides of the chunk split
        assert (2015, "M12") in keys and (2016, "M01") in keys


class TestHttp:
    def test_stub_matches_fixture(self, docs):
        sid = get_industry("financial").series_ids()["hires_k"]
        with StubBLS(docs) as stub:
            got = fetch_series(SeriesRequest(sid, 2010, 2012), HttpTransport(stub.url, backoff=0))
        expect = parse_response(docs[sid], sid)
        assert got == [o for o in expect if 2010 <= o.year <= 2012]

    def test_empty_series_not_error(self):
        with StubBLS({}) as stub:
            assert fetch_series(SeriesRequest("NOPE", 2010, 2012), HttpTransport(stub.url, backoff=0)) == []

    def test_retries_then_succeeds(self, docs):
        with StubBLS(docs, fail_first=2) as stub:
            obs = fetch_series(SeriesRequest(SID, 2020, 2020), HttpTransport(stub.url, retries=3, backoff=0))
        assert len(stub.requests) == 3 and len(obs) == 12

    def test_transport_error_reports_retries(self, docs):
        with StubBLS(docs, fail_first=10) as stub:
            with pytest.raises(TransportError) as info:
                fetch_series(SeriesRequest(SID, 2020, 2020), HttpTransport(stub.url, retries=2, backoff=0))
        assert info.value.retries == 2 and len(stub.requests) == 3

    def test_client_error_not_retried(self, docs):
        with StubBLS(docs, status=404) as stub:
            with pytest.raises(TransportError):
                fetch_series(SeriesRequest(SID, 2020, 2020), HttpTransport(stub.url, retries=3, backoff=0))
        assert len(stub.requests) == 1

    def test_key_never_logged(self, docs, caplog):
        with caplog.at_level(logging.DEBUG):
            with StubBLS(docs) as stub:
                fetch_series(SeriesRequest(SID, 2020, 2021, "SECRET-KEY"), HttpTransport(stub.url, backoff=0))
        assert stub.requests[0]["registrationkey"] == "SECRET-KEY"
        assert "SECRET-KEY" not in caplog.text

    def test_fetch_many_parallel(self, docs):
        ids = list(get_industry("information").series_ids().values())
        with StubBLS(docs) as stub:
            out = fetch_many([SeriesRequest(s, 2018, 2019) for s in ids], HttpTransport(stub.url, backoff=0),
                             max_workers=4, min_interval=0.001)
        assert set(out) == set(ids) and all(len(v) == 24 for v in out.values())


class TestFixtureTransport:
    def test_bundled_fixtures_cover_catalog(self):
        root = default_fixture_dir()
        for ind in INDUSTRIES:
            for sid in ind.series_ids().values():
                assert (root / f"{sid}.json").exists(), sid

    def test_records_calls_without_key(self):
        t = FixtureTransport(default_fixture_dir())
        fetch_series(SeriesRequest(SID, 2008, 2024, "SECRET"), t, 10)
        assert len(t.calls) == 2 and all("registrationkey" not in c for c in t.calls)

    def test_missing_fixture_is_empty(self, tmp_path):
        assert fetch_series(SeriesRequest("NOPE", 2008, 2009), FixtureTransport(tmp_path)) == []


class TestInterpolation:
    def test_hand_oracle(self):
        np.testing.assert_array_equal(interpolate_on_grid([0, 4], [100, 104], 5), [100, 101, 102, 103, 104])

    def test_constant(self):
        obs = [Observation(2020, f"M{m:02d}", 7.0) for m in range(1, 13)]
        w = interpolate_weekly(obs)
        assert np.all(w.values == 7.0)

    def test_anchors_exact(self, rng):
        obs = [Observation(2019 + (m - 1) // 12, f"M{(m - 1) % 12 + 1:02d}", float(v))
               for m, v in zip(range(1, 25), rng.uniform(100, 200, 24))]
        w = interpolate_weekly(obs)
        for o in obs:
            i = int((reference_week(o.year, o.month) - w.timestamps[0]) // WEEK)
            assert w.values[i] == o.value and w.is_anchor[i]
        assert np.all(np.diff(w.timestamps) == WEEK)

    def test_idempotent_on_weekly_grid(self, rng):
        vals = rng.standard_normal(30)
        np.testing.assert_array_equal(interpolate_on_grid(np.arange(30), vals, 30), vals)

    def test_too_few_points(self):
        with pytest.raises(InsufficientDataError):
            interpolate_weekly([Observation(2020, "M01", 1.0)])

    def test_missing_month_leaves_gap(self):
        obs = [Observation(2020, "M01", 1.0), Observation(2020, "M02", None), Observation(2020, "M03", 3.0)]
        w = interpolate_weekly(obs)
        assert np.isnan(w.values[1:-1]).all() and w.values[0] == 1.0 and w.values[-1] == 3.0

    def test_reference_week_is_monday_containing_12th(self):
        for y, m in [(2024, 12), (2020, 2), (2008, 3)]:
            d = reference_week(y, m)
            assert d.astype("datetime64[D]").item().weekday() == 0
            assert 0 <= (np.datetime64(f"{y}-{m:02d}-12") - d).astype(int) <= 6


def tiny_panel(col0):
    n = len(col0)
    values = np.tile(np.arange(1.0, 8.0), (n, 1))
    values[:, 0] = col0
    stamps = np.datetime64("2020-01-06") + WEEK * np.arange(n)
    return TimeSeriesPanel("construction", stamps, values, np.zeros(values.shape, dtype=bool))


class TestRepair:
    def test_midpoint(self):
        out = repair_missing(tiny_panel([1.0, np.nan, 3.0]))
        np.testing.assert_array_equal(out.values[:, 0], [1, 2, 3])
        assert out.interpolated[:, 0].tolist() == [False, True, False]

    def test_leading(self):
        out = repair_missing(tiny_panel([np.nan, 5.0, 5.0]))
        np.testing.assert_array_equal(out.values[:, 0], [5, 5, 5])
        assert out.interpolated[0, 0]

    def test_no_gaps_identity(self):
        p = tiny_panel([1.0, 2.0, 4.0])
        out = repair_missing(p)
        np.testing.assert_array_equal(out.values, p.values)
        assert not out.interpolated.any()

    def test_all_missing_names_column(self):
        with pytest.raises(DataError, match="employees_k"):
            repair_missing(tiny_panel([np.nan, np.nan]))


class TestPanel:
    def test_all_ten_sectors_audit(self, docs, tmp_path):
        t = FixtureTransport(default_fixture_dir())
        for ind in INDUSTRIES:
            series = {}
            for name, sid in ind.series_ids().items():
                series[name] = fetch_series(SeriesRequest(sid, 2008, 2024), t)
            panel = prepare_panel(ind.slug, series, (2008, 3), (2024, 12))
            panel.audit()
            assert panel.timestamps[0] == reference_week(2008, 3)
            assert panel.timestamps[-1] == reference_week(2024, 12)
            assert np.isfinite(panel.values).all()

    def test_assemble_flags_interpolated(self):
        months = [(2020, m) for m in range(1, 7)]
        series = {name: [Observation(y, f"M{m:02d}", 10.0 + m) for y, m in months] for name in INDICATORS}
        panel = assemble_panel("construction", series, (2020, 1), (2020, 6))
        anchors = [int((reference_week(y, m) - panel.timestamps[0]) // WEEK) for y, m in months]
        assert not panel.interpolated[anchors].any()
        assert panel.interpolated.sum() == (len(panel) - len(anchors)) * len(INDICATORS)

    def test_audit_catches_violations(self):
        p = tiny_panel([1.0, 2.0, 3.0])
        p.values[1, 3] = 150.0
        with pytest.raises(DataError, match="unemp_rate"):
            p.audit()
        q = tiny_panel([1.0, -2.0, 3.0])
        with pytest.raises(DataError, match="negative"):
            q.audit()

    def test_csv_round_trip(self, tmp_path):
        p = seasonal_panel("manufacturing", 50, seed=3)
        p.interpolated[3, 2] = True
        path = write_panel_csv(tmp_path / "p.csv", p)
        back = read_panel_csv(path)["manufacturing"]
        np.testing.assert_array_equal(back.values, p.values)
        np.testing.assert_array_equal(back.interpolated, p.interpolated)
        np.testing.assert_array_equal(back.timestamps, p.timestamps)
        schema, header = path.read_text().splitlines()[:2]
        assert schema == "# schema: laborcast.panel v1"
        assert header == ("week_start,industry,employees_k,avg_hours,avg_earnings,unemp_rate,"
                          "openings_k,hires_k,separations_k,interpolated_mask")

    def test_csv_combined(self, tmp_path):
        a, b = seasonal_panel("construction", 20, 1), seasonal_panel("information", 20, 2)
        path = write_panel_csv(tmp_path / "all.csv", [a, b])
        assert set(read_panel_csv(path)) == {"construction", "information"}
        assert panel_to_csv([a, b]) == path.read_text()


class TestWindows:
    def test_boundary_one_window(self):
        p = seasonal_panel("construction", 35, seed=1)
        assert len(make_windows(p, 28, 7, 0)) == 1

    def test_count_formula(self):
        p = seasonal_panel("construction", 39, seed=1)
        assert len(make_windows(p, 28, 7, 0)) == 5 == window_count(39, 28, 7)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            make_windows(seasonal_panel("construction", 34, seed=1), 28, 7, 0)

    def test_training_span_normalized(self):
        p = seasonal_panel("construction", 200, seed=1)
        b = make_windows(p, 28, 7, 0, stats_span=(0, 120))
        norm = b.stats.normalize_features(p.values[:120])
        np.testing.assert_allclose(norm.mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(norm.std(axis=0), 1, atol=1e-9)

    def test_stats_ignore_later_rows(self):
        p = seasonal_panel("construction", 200, seed=1)
        a = compute_stats(p, 0, (0, 120))
        q = seasonal_panel("construction", 200, seed=1)
        q.values[120:] *= 50
        assert compute_stats(q, 0, (0, 120)) == a

    def test_degenerate_feature(self):
        p = seasonal_panel("construction", 60, seed=1)
        p.values[:, 4] = 3.0
        with pytest.raises(DegenerateFeatureError, match="openings_k"):
            make_windows(p, 28, 7, 0)

    def test_targets_after_inputs_and_changes(self):
        p = seasonal_panel("construction", 80, seed=1)
        b = make_windows(p, 10, 3, 0)
        for i in range(len(b)):
            assert max(b.input_rows(i)) < min(b.target_rows(i))
            rows = list(b.target_rows(i))
            raw = p.values[rows, 0] - p.values[[r - 1 for r in rows], 0]
            np.testing.assert_allclose(b.stats.denormalize_target(b.targets[i]), raw, atol=1e-9)

    def test_changes_reconstruct_levels(self):
        p = seasonal_panel("construction", 80, seed=2)
        b = make_windows(p, 10, 3, 0)
        for i in (0, 17, len(b) - 1):
            levels = reconstruct_levels(b.anchor_levels[i], b.stats.denormalize_target(b.targets[i]))
            np.testing.assert_allclose(levels, p.values[list(b.target_rows(i)), 0], atol=1e-9)
