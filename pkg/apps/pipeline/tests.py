import io
import json
import tempfile
from pathlib import Path

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from apps.common.exceptions import ConfigError, ErrorCode, ExitCode, InputMissingError, OdflowError
from apps.od.files import read_matrices
from apps.pipeline.runner import run_pipeline
from apps.pipeline.schemas import RunConfig
from apps.synth.compare import compare_series
from apps.synth.generate import generate
from apps.synth.schemas import WorldSpec
from apps.synth.utils import write_world

OUTPUTS = [
    "trips.csv",
    "places.csv",
    "place_counts.csv",
    "journeys.csv",
    "od/raw.csv",
    "od/corrected.csv",
    "od/overall.csv",
    "od/public.csv",
    "mode_share.csv",
    "report.json",
]


class TestPipelineUtil:
    def world(tmp, **changes):
        params = {"n_agents": 24, "n_days": 2, "frequent_fraction": 0.5, "seed": 11}
        params.update(changes)
        world = generate(WorldSpec(**params))
        return world, write_world(world, Path(tmp) / "world")

    def config(paths, out_dir, **changes):
        params = {
            "cdr": str(paths["cdr"]),
            "districts": str(paths["districts"]),
            "legs": str(paths["legs"]),
            "stations": str(paths["stations"]),
            "out_dir": str(out_dir),
            "intra_samples": 10_000,
        }
        params.update(changes)
        return RunConfig(**params)


class TestRunPipeline(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.world, cls.paths = TestPipelineUtil.world(cls.tmp.name)
        cls.out_dir = Path(cls.tmp.name) / "run"
        cls.result = run_pipeline(TestPipelineUtil.config(cls.paths, cls.out_dir))

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def test_detected_trips_match_truth(self):
        report = compare_series(self.result.raw, self.world.truth.frequent_overall)
        self.assertEqual(report.relative_error, 0.0)
        self.assertEqual(report.cellwise_l1, 0.0)
        self.assertEqual(report.n_windows_exact, report.n_windows)

    def test_public_matches_truth(self):
        report = compare_series(self.result.public, self.world.truth.public)
        self.assertEqual(report.cellwise_l1, 0.0)

    def test_outputs_written(self):
        for name in OUTPUTS:
            self.assertTrue((self.out_dir / name).is_file(), name)
        raw = read_matrices(self.out_dir / "od" / "raw.csv")
        self.assertEqual(len(raw), len(self.result.raw))
        sidecar = json.loads((self.out_dir / "od" / "raw.json").read_text())
        self.assertEqual(sidecar["metadata"]["config_hash"], self.result.manifest["config_hash"])

    def test_manifest_counts(self):
        manifest = json.loads((self.out_dir / "manifest.json").read_text())
        counts = manifest["counts"]
        self.assertEqual(
            counts["trips_binned"],
            counts["trips_extracted"] - (counts["trips_without_district"] + counts["trips_out_of_window"]),
        )
        self.assertEqual(counts["frequent_users"], self.world.diagnostics.n_frequent)
        self.assertEqual(counts["legs"], self.world.diagnostics.n_legs)
        self.assertEqual(manifest["config"]["out_dir"], str(self.out_dir))
        self.assertEqual(manifest["config_hash"], RunConfig(**manifest["config"]).config_hash)
        measured = manifest["frequent_share"]["measured"]
        self.assertEqual(manifest["frequent_share"]["used"], measured)
        self.assertTrue(0 < measured <= 1)

    def test_rerun_is_byte_identical(self):
        names = OUTPUTS + ["manifest.json", "od/raw.json", "underserved.geojson"]
        before = {name: (self.out_dir / name).read_bytes() for name in names}
        run_pipeline(TestPipelineUtil.config(self.paths, self.out_dir))
        for name in names:
            self.assertEqual(before[name], (self.out_dir / name).read_bytes(), name)

    def test_workers_do_not_change_outputs(self):
        with tempfile.TemporaryDirectory() as tmp:
            sharded = Path(tmp) / "run"
            run_pipeline(TestPipelineUtil.config(self.paths, sharded, workers=3))
            for name in ("trips.csv", "places.csv", "journeys.csv", "od/raw.csv", "od/overall.csv", "mode_share.csv"):
                self.assertEqual((self.out_dir / name).read_bytes(), (sharded / name).read_bytes(), name)
            manifest = json.loads((sharded / "manifest.json").read_text())
        self.assertEqual(manifest["counts"], self.result.manifest["counts"])

    def test_explicit_frequent_share(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = TestPipelineUtil.config(self.paths, Path(tmp), frequent_share=0.5, intra_samples=0)
            result = run_pipeline(cfg)
        self.assertEqual(result.manifest["frequent_share"]["used"], 0.5)
        self.assertIsNone(result.bundle.intra)
        divisor = 0.453 * 1.44 * 0.5
        self.assertAlmostEqual(result.manifest["scaling"]["divisor"], divisor)
        for corrected, overall in zip(result.corrected, result.overall):
            self.assertAlmostEqual(overall.total, corrected.total / divisor)

    def test_no_upscale(self):
        with tempfile.TemporaryDirectory() as tmp:
            result = run_pipeline(TestPipelineUtil.config(self.paths, Path(tmp), upscale=False, intra_samples=0))
        for corrected, overall in zip(result.corrected, result.overall):
            self.assertEqual(overall.total, corrected.total)

    def test_no_frequent_users(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = TestPipelineUtil.config(self.paths, Path(tmp), frequent_threshold_min=0.5)
            with self.assertRaises(OdflowError) as ctx:
                run_pipeline(cfg)
        self.assertEqual(ctx.exception.err_code, ErrorCode.NO_FREQUENT_USERS)
        self.assertEqual(ctx.exception.exit_code, ExitCode.INTERNAL)

    def test_missing_input(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = TestPipelineUtil.config(self.paths, Path(tmp), legs=str(Path(tmp) / "absent.csv"))
            with self.assertRaises(InputMissingError):
                run_pipeline(cfg)


class TestRunConfig(SimpleTestCase):
    def test_defaults_come_from_settings(self):
        cfg = RunConfig.load(overrides={"cdr": "c", "districts": "d", "legs": "l", "stations": "s", "out_dir": "o"})
        self.assertEqual(cfg.delta_d_m, 2000.0)
        self.assertEqual(cfg.delta_t_min, 20.0)
        self.assertEqual(cfg.transfer_min, 45.0)
        self.assertIsNone(cfg.frequent_share)
        self.assertEqual(cfg.windows["morning"], (6, 10))
        self.assertEqual(cfg.workdays, [1, 2, 3, 4, 5])

    @override_settings(ODFLOW={**settings.ODFLOW, "RADIUS_M": 750.0})
    def test_settings_override(self):
        cfg = RunConfig(cdr="c", districts="d", legs="l", stations="s", out_dir="o")
        self.assertEqual(cfg.radius_m, 750.0)

    def test_flags_win_over_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.json"
            path.write_text(
                json.dumps(
                    {
                        "cdr": "c",
                        "districts": "d",
                        "legs": "l",
                        "stations": "s",
                        "out_dir": "o",
                        "delta_t_min": 30,
                        "holidays": ["2011-04-05"],
                    }
                )
            )
            cfg = RunConfig.load(path, {"delta_t_min": 25.0, "radius_m": None, "cdr": "other"})
        self.assertEqual(cfg.delta_t_min, 25.0)
        self.assertEqual(cfg.radius_m, 1000.0)
        self.assertEqual(cfg.cdr, "other")
        self.assertEqual(str(cfg.holidays[0]), "2011-04-05")

    def test_hash_tracks_config(self):
        base = {"cdr": "c", "districts": "d", "legs": "l", "stations": "s", "out_dir": "o"}
        self.assertEqual(RunConfig(**base).config_hash, RunConfig(**base).config_hash)
        self.assertNotEqual(RunConfig(**base).config_hash, RunConfig(**base, delta_d_m=1500).config_hash)

    def test_invalid_values(self):
        base = {"cdr": "c", "districts": "d", "legs": "l", "stations": "s", "out_dir": "o"}
        cases = [
            ({"min_share": 1.5}, "min_share"),
            ({"delta_d_m": 0}, "delta_d_m"),
            ({"workers": 0}, "workers"),
            ({"intra_samples": 50}, "intra_samples"),
            ({"timezone": "Mars/Olympus"}, "timezone"),
            ({"workdays": [0]}, "workdays"),
            ({"windows": {"night": (22, 6)}}, "windows"),
            ({"bogus": 1}, "bogus"),
        ]
        for changes, field_name in cases:
            with self.subTest(field_name), self.assertRaises(ConfigError) as ctx:
                RunConfig.load(overrides={**base, **changes})
            self.assertIn(field_name, ctx.exception.data)
        with self.assertRaises(ConfigError) as ctx:
            RunConfig.load(overrides=base | {"study_start": 10.0, "study_end": 5.0})
        self.assertIn("__root__", ctx.exception.data)
        with self.assertRaises(ConfigError) as ctx:
            RunConfig.load(overrides={"cdr": "c"})
        self.assertEqual(ctx.exception.data["out_dir"], "Required")


class TestRunCommand(SimpleTestCase):
    def test_run(self):
        with tempfile.TemporaryDirectory() as tmp:
            world, paths = TestPipelineUtil.world(tmp, n_agents=10, n_days=1)
            out_dir = Path(tmp) / "run"
            config = Path(tmp) / "run.json"
            config.write_text(json.dumps({"cdr": str(paths["cdr"]), "intra_samples": 0}))
            stdout = io.StringIO()
            call_command(
                "run",
                config=str(config),
                districts=str(paths["districts"]),
                legs=str(paths["legs"]),
                stations=str(paths["stations"]),
                out_dir=str(out_dir),
                granularity="30min",
                window=["morning=6-10", "evening=17-22"],
                stdout=stdout,
            )
            manifest = json.loads((out_dir / "manifest.json").read_text())
            report = json.loads((out_dir / "report.json").read_text())
        self.assertIn("written to", stdout.getvalue())
        self.assertEqual(manifest["config"]["granularity_s"], 1800)
        self.assertEqual(sorted(manifest["config"]["windows"]), ["evening", "morning"])
        self.assertEqual(sorted(report["mode_share"]), ["evening", "morning"])
        self.assertEqual(manifest["counts"]["windows"], 48)

    def test_missing_districts(self):
        with tempfile.TemporaryDirectory() as tmp:
            _, paths = TestPipelineUtil.world(tmp, n_agents=4, n_days=1)
            out_dir = Path(tmp) / "run"
            out_dir.mkdir()
            stderr = io.StringIO()
            with self.assertRaises(CommandError) as ctx:
                call_command(
                    "run",
                    cdr=str(paths["cdr"]),
                    districts=str(Path(tmp) / "absent.geojson"),
                    legs=str(paths["legs"]),
                    stations=str(paths["stations"]),
                    out_dir=str(out_dir),
                    stderr=stderr,
                )
            record = json.loads((out_dir / "error.json").read_text())
        self.assertEqual(ctx.exception.returncode, ExitCode.INPUT)
        self.assertEqual(json.loads(stderr.getvalue())["code"], ErrorCode.INPUT_MISSING)
        self.assertEqual(record["code"], "input-missing")

    def test_unknown_config_key(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = Path(tmp) / "run.json"
            config.write_text(json.dumps({"delta_d": 2000}))
            stderr = io.StringIO()
            with self.assertRaises(CommandError) as ctx:
                call_command("run", config=str(config), stderr=stderr)
        self.assertEqual(ctx.exception.returncode, ExitCode.CONFIG)
        record = json.loads(stderr.getvalue())
        self.assertEqual(record["code"], ErrorCode.INVALID_CONFIG)
        self.assertEqual(record["data"]["delta_d"], "Unknown key")

    def test_bad_window_flag(self):
        stderr = io.StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command("run", window=["morning"], stderr=stderr)
        self.assertEqual(ctx.exception.returncode, ExitCode.CONFIG)
