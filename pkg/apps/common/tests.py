import io
import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from pydantic import ValidationError as PydanticValidationError

from apps.common.csvio import CsvReader, check_malformed, parse_floats, parse_timestamps
from apps.common.exceptions import (
    ConfigError,
    ErrorCode,
    ExitCode,
    InputError,
    InputMissingError,
    OdflowError,
    ValidationError,
    config_errors,
    error_record,
)
from apps.common.parallel import map_shards, shard_bounds
from apps.common.schemas import DiagnosticsSchema, StrictSchema
from apps.common.utils import format_count, hash_params, parse_granularity, require_file, write_json

MONDAY = 1301875200.0


class TestCommonUtil:
    def read_all(data: bytes, columns=("a", "b", "c"), chunk_rows=2):
        reader = CsvReader(io.BytesIO(data), list(columns), chunk_rows=chunk_rows, source="test.csv")
        frames = [frame for frame, _ in reader]
        frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=list(columns))
        return reader, frame


class Counters(DiagnosticsSchema):
    n_rows: int = 0
    n_bad: int = 0
    ratio: float = 0.0


class Options(StrictSchema):
    size: int = 1
    name: str


class TestCsvReader(SimpleTestCase):
    def test_well_formed(self):
        data = b"a,b,c\n1,2,3\n 4 ,5,6\n7,8,9\n"
        reader, frame = TestCommonUtil.read_all(data)
        self.assertEqual(list(frame.columns), ["a", "b", "c"])
        self.assertEqual(frame["a"].tolist(), ["1", "4", "7"])
        self.assertEqual(reader.n_lines, 3)
        self.assertEqual(reader.n_malformed, 0)
        self.assertEqual(reader.n_bytes, len(data))

    def test_wrong_field_counts_are_malformed(self):
        data = b"a,b,c\n1,2,3\n1,2\n1,2,3,4\n,,\n"
        reader, frame = TestCommonUtil.read_all(data, chunk_rows=10)
        self.assertEqual(len(frame), 2)
        self.assertEqual(frame.iloc[1].tolist(), ["", "", ""])
        self.assertEqual(reader.n_malformed, 2)
        self.assertEqual(reader.n_lines, 4)

    def test_undecodable_line_is_malformed(self):
        data = b"a,b,c\n" + b"1,2,3\n" * 300 + b"1,\xff,3\n"
        reader, frame = TestCommonUtil.read_all(data, chunk_rows=64)
        self.assertEqual(len(frame), 300)
        self.assertEqual(reader.n_lines, 301)
        self.assertEqual(reader.n_malformed, 1)
        self.assertEqual(reader.n_bytes, len(data))

    def test_header_only(self):
        reader, frame = TestCommonUtil.read_all(b"a,b,c\n")
        self.assertTrue(frame.empty)
        self.assertEqual(reader.n_lines, 0)

    def test_bad_header(self):
        with self.assertRaises(InputError) as ctx:
            TestCommonUtil.read_all(b"a,c,b\n1,2,3\n")
        self.assertEqual(ctx.exception.err_code, ErrorCode.INPUT_MALFORMED)
        self.assertEqual(ctx.exception.exit_code, ExitCode.INPUT)
        self.assertEqual(ctx.exception.data["expected"], "a,b,c")


class TestParsing(SimpleTestCase):
    def test_unix_timestamps(self):
        values = parse_timestamps(pd.Series(["1301875200", "1301875200.5", "noon"]), "unix")
        self.assertEqual(values[0], MONDAY)
        self.assertEqual(values[1], MONDAY + 0.5)
        self.assertTrue(np.isnan(values[2]))

    def test_rfc3339_timestamps(self):
        values = parse_timestamps(
            pd.Series(["2011-04-04T00:00:00Z", "2011-04-04T08:00:00+08:00", "yesterday"]), "rfc3339"
        )
        self.assertEqual(values[0], MONDAY)
        self.assertEqual(values[1], MONDAY)
        self.assertTrue(np.isnan(values[2]))

    def test_unknown_format(self):
        with self.assertRaises(InputError):
            parse_timestamps(pd.Series(["1"]), "epoch-ms")

    def test_floats(self):
        values = parse_floats(pd.Series(["103.8", "", "x"]))
        self.assertEqual(values[0], 103.8)
        self.assertTrue(np.isnan(values[1:]).all())

    def test_malformed_fraction(self):
        check_malformed(1, 100, 0.01, "log.csv")
        check_malformed(0, 0, 0.0, "log.csv")
        with self.assertRaises(InputError) as ctx:
            check_malformed(2, 100, 0.01, "log.csv")
        self.assertEqual(ctx.exception.data, {"malformed": 2, "lines": 100, "max_fraction": 0.01})


class TestParallel(SimpleTestCase):
    def test_shard_bounds(self):
        self.assertEqual(shard_bounds(0, 4), [])
        self.assertEqual(shard_bounds(3, 8), [(0, 1), (1, 2), (2, 3)])
        bounds = shard_bounds(10, 4)
        self.assertEqual(bounds[0][0], 0)
        self.assertEqual(bounds[-1][1], 10)
        self.assertTrue(all(a < b for a, b in bounds))
        self.assertTrue(all(prev[1] == nxt[0] for prev, nxt in zip(bounds, bounds[1:])))

    def test_results_keep_shard_order(self):
        shards = [tuple(range(a, b)) for a, b in shard_bounds(100, 7)]
        serial = map_shards(sum, shards, workers=1)
        pooled = map_shards(sum, shards, workers=3)
        self.assertEqual(serial, pooled)
        self.assertEqual(sum(serial), sum(range(100)))


class TestUtils(SimpleTestCase):
    def test_hash_ignores_key_order(self):
        self.assertEqual(hash_params({"a": 1, "b": [1, 2]}), hash_params({"b": [1, 2], "a": 1}))
        self.assertNotEqual(hash_params({"a": 1}), hash_params({"a": 2}))

    def test_format_count(self):
        self.assertEqual(format_count(3.0), "3")
        self.assertEqual(format_count(1301875200.0), "1301875200")
        self.assertEqual(format_count(0.1), "0.10000000000000001")
        self.assertEqual(float(format_count(2 / 3)), 2 / 3)

    def test_parse_granularity(self):
        self.assertEqual(parse_granularity("1h"), 3600)
        self.assertEqual(parse_granularity("30min"), 1800)
        self.assertEqual(parse_granularity("15m"), 900)
        self.assertEqual(parse_granularity(" 900s "), 900)
        self.assertEqual(parse_granularity(60), 60)
        for value in ("0h", "hourly", "-1s"):
            with self.subTest(value), self.assertRaises(ValidationError):
                parse_granularity(value)

    def test_write_json_is_stable(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(Path(tmp) / "nested" / "out.json", {"b": 1, "a": [0.5]})
            text = path.read_text()
        self.assertEqual(text, '{\n  "a": [\n    0.5\n  ],\n  "b": 1\n}\n')

    def test_require_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(InputMissingError) as ctx:
                require_file(Path(tmp) / "absent.csv")
            # directories are not input files
            with self.assertRaises(InputMissingError):
                require_file(tmp)
        self.assertEqual(ctx.exception.err_code, ErrorCode.INPUT_MISSING)
        self.assertEqual(ctx.exception.exit_code, ExitCode.INPUT)


class TestErrors(SimpleTestCase):
    def test_error_record(self):
        record = error_record(OdflowError(ErrorCode.SHAPE_MISMATCH, "3x3 vs 4x4"))
        self.assertEqual(record, {"status": "failure", "code": "shape-mismatch", "message": "3x3 vs 4x4"})
        record = error_record(ValidationError("top_k", "Must be at least 1"))
        self.assertEqual(record["code"], ErrorCode.INVALID_CONFIG)
        self.assertEqual(record["data"], {"top_k": "Must be at least 1"})

    def test_config_errors(self):
        with self.assertRaises(PydanticValidationError) as ctx:
            Options(size="big", colour="red")
        exc = config_errors(ctx.exception)
        self.assertIsInstance(exc, ConfigError)
        self.assertEqual(exc.exit_code, ExitCode.CONFIG)
        self.assertEqual(exc.data["colour"], "Unknown key")
        self.assertEqual(exc.data["name"], "Required")
        self.assertIn("size", exc.data)

    def test_diagnostics_merge(self):
        merged = Counters(n_rows=3, n_bad=1, ratio=0.5).merge(Counters(n_rows=4))
        self.assertEqual(merged, Counters(n_rows=7, n_bad=1, ratio=0.5))


class TestOdflowCommand(SimpleTestCase):
    def test_input_error_exit_code(self):
        with tempfile.TemporaryDirectory() as tmp:
            stderr = io.StringIO()
            with self.assertRaises(CommandError) as ctx:
                call_command(
                    "od",
                    trips=str(Path(tmp) / "trips.csv"),
                    districts=str(Path(tmp) / "districts.geojson"),
                    out=str(Path(tmp) / "od.csv"),
                    stderr=stderr,
                )
        self.assertEqual(ctx.exception.returncode, ExitCode.INPUT)
        record = json.loads(stderr.getvalue())
        self.assertEqual(record["code"], "input-missing")
        self.assertTrue(record["data"]["path"].endswith("districts.geojson"))

    def test_config_error_exit_code(self):
        stderr = io.StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command("od", trips="t.csv", districts="d.geojson", out="o.csv", granularity="weekly", stderr=stderr)
        self.assertEqual(ctx.exception.returncode, ExitCode.CONFIG)
        self.assertEqual(json.loads(stderr.getvalue())["code"], "invalid-config")
