import numpy as np
import pytest

from tryon_eval.annotations import AnnotationBundle, DenseposeMap, LabelMap, LabelSchema
from tryon_eval.config import EvalConfig
from tryon_eval.errors import (
    DatasetResolutionFailure,
    DuplicateIds,
    EmptyPool,
    SerializationFailure,
)
from tryon_eval.harness import (
    DatasetLayout,
    EvalRecord,
    Manifest,
    MixSpec,
    Report,
    compute_aggregates,
    evaluate_manifest,
    evaluate_pair,
    gen_cross_manifest,
    make_report,
    mix_experiment,
    read_manifest,
    read_report,
    write_manifest,
    write_report,
)

from conftest import make_bundle, make_parse, write_dataset


def config(**kw) -> EvalConfig:
    base = dict(schema=LabelSchema.default(), patch_size=32)
    base.update(kw)
    return EvalConfig(**base)


class TestManifest:
    def test_27_ids_729_pairs(self):
        manifest = gen_cross_manifest([f"s{i:02d}" for i in range(27)])
        assert len(manifest) == 729

    def test_single_id_self_pair(self):
        manifest = gen_cross_manifest(["a"])
        assert manifest.entries == (("a", "a"),)

    def test_two_ids_enumeration(self):
        manifest = gen_cross_manifest(["a", "b"])
        assert manifest.entries == (("a", "a"), ("a", "b"), ("b", "a"), ("b", "b"))

    def test_square_counts(self):
        for n in (1, 2, 5):
            ids = [f"x{i}" for i in range(n)]
            assert len(gen_cross_manifest(ids)) == n * n

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DuplicateIds):
            gen_cross_manifest(["a", "a"])

    def test_duplicate_pairs_rejected(self):
        with pytest.raises(DuplicateIds):
            Manifest(entries=(("a", "b"), ("a", "b")))

    def test_csv_round_trip(self, tmp_path):
        manifest = gen_cross_manifest(["a", "b", "c"])
        path = tmp_path / "m.csv"
        write_manifest(manifest, path)
        assert read_manifest(path).entries == manifest.entries


class TestEvaluatePair:
    def test_identity_pair_zero(self):
        bundle = make_bundle()
        record = evaluate_pair(bundle, bundle, config())
        assert record.status == "ok"
        assert record.sdr_distance == 0.0
        assert record.slpips_value == 0.0
        assert record.style_real == record.style_virtual

    def test_empty_virtual_clothing(self):
        real = make_bundle()
        empty_parse = LabelMap(
            labels=np.zeros((128, 96), dtype=np.uint8), schema=LabelSchema.default()
        )
        virt = AnnotationBundle(
            sample_id="v", image=real.image, keypoints=real.keypoints,
            parse=empty_parse, densepose=real.densepose,
        )
        # default config keeps the real parse for Unused filtering: S-LPIPS
        # still evaluates the (wrong) generated pixels at garment positions
        record = evaluate_pair(real, virt, config())
        assert record.sdr_distance == 1.0
        assert record.slpips_value is not None
        # filtering by the generated image's own parse instead skips the pair
        record_own = evaluate_pair(real, virt, config(unused_filter_source="own"))
        assert record_own.sdr_distance == 1.0
        assert record_own.slpips_value is None
        assert record_own.slpips_skip_reason == "NoActiveNodes"
        assert record_own.status == "ok"

    def test_dimension_mismatch_skips(self):
        real = make_bundle()
        small_dp = DenseposeMap(parts=np.zeros((64, 48), dtype=np.uint8))
        virt = AnnotationBundle(
            sample_id="v", image=real.image, keypoints=real.keypoints,
            parse=real.parse, densepose=small_dp,
        )
        record = evaluate_pair(real, virt, config())
        assert record.status == "skipped"
        assert record.skip_reason == "DimensionMismatch"
        assert record.sdr_distance is None
        assert record.slpips_value is None

    def test_metric_sdr_only(self):
        bundle = make_bundle()
        record = evaluate_pair(bundle, bundle, config(metric="sdr"))
        assert record.sdr_distance == 0.0
        assert record.slpips_value is None
        assert record.slpips_skip_reason is None


class TestEvaluateManifest:
    def test_empty_manifest(self, tmp_path):
        report = evaluate_manifest(
            Manifest(entries=()), DatasetLayout(root=tmp_path), config()
        )
        assert report.records == ()
        assert report.aggregates["n_records"] == 0
        assert report.aggregates["mean_sdr_distance"] is None

    def test_records_match_manifest_order(self, tmp_path):
        ids = ["a", "b"]
        manifest = gen_cross_manifest(ids)
        write_dataset(tmp_path, ids, manifest.entries)
        report = evaluate_manifest(manifest, DatasetLayout(root=tmp_path), config())
        got = [(r.model_id, r.clothing_id) for r in report.records]
        assert got == list(manifest.entries)
        assert all(r.status == "ok" for r in report.records)
        # identity pairs score zero, cross pairs are positive
        for r in report.records:
            if r.model_id == r.clothing_id:
                assert r.sdr_distance == 0.0

    def test_worker_counts_bit_identical(self, tmp_path):
        ids = ["a", "b", "c"]
        manifest = gen_cross_manifest(ids)
        write_dataset(tmp_path / "data", ids, manifest.entries)
        layout = DatasetLayout(root=tmp_path / "data")
        cfg = config()
        paths = {}
        for workers in (1, 2):
            report = evaluate_manifest(manifest, layout, cfg, workers=workers)
            out = tmp_path / f"report_w{workers}.json"
            write_report(report, out, "json")
            paths[workers] = out.read_bytes()
        assert paths[1] == paths[2]

    def test_missing_files_enumerated(self, tmp_path):
        ids = ["a", "b"]
        manifest = gen_cross_manifest(ids)
        write_dataset(tmp_path, ids, manifest.entries)
        victim = tmp_path / "openpose" / "b.json"
        victim.unlink()
        with pytest.raises(DatasetResolutionFailure) as err:
            evaluate_manifest(manifest, DatasetLayout(root=tmp_path), config())
        assert any("b.json" in p for p in err.value.missing)


def ok_record(i, sdr, slp) -> EvalRecord:
    return EvalRecord(
        model_id=f"m{i}", clothing_id=f"c{i}", status="ok",
        sdr_distance=sdr, slpips_value=slp,
    )


class TestMixExperiment:
    def _pools(self, n=10):
        correct = tuple(ok_record(i, 0.1, 0.05) for i in range(n))
        incorrect = tuple(ok_record(i, 0.6, 0.30) for i in range(n))
        return correct, incorrect

    def test_fraction_zero_equals_correct(self):
        correct, incorrect = self._pools()
        rows = mix_experiment(MixSpec(correct=correct, incorrect=incorrect))
        assert rows[0].mean_sdr_distance == pytest.approx(0.1)
        assert rows[0].mean_slpips == pytest.approx(0.05)

    def test_fraction_one_equals_incorrect(self):
        correct, incorrect = self._pools()
        rows = mix_experiment(MixSpec(correct=correct, incorrect=incorrect))
        assert rows[-1].fraction == 1.0
        assert rows[-1].mean_sdr_distance == pytest.approx(0.6)
        assert rows[-1].mean_slpips == pytest.approx(0.30)

    def test_dominating_pool_strictly_increasing(self):
        rng = np.random.default_rng(0)
        n = 20
        correct = tuple(
            ok_record(i, float(rng.uniform(0.0, 0.2)), float(rng.uniform(0.0, 0.1)))
            for i in range(n)
        )
        incorrect = tuple(
            ok_record(i, float(rng.uniform(0.5, 1.0)), float(rng.uniform(0.3, 0.5)))
            for i in range(n)
        )
        rows = mix_experiment(MixSpec(correct=correct, incorrect=incorrect))
        sdr_curve = [r.mean_sdr_distance for r in rows]
        slp_curve = [r.mean_slpips for r in rows]
        assert all(a < b for a, b in zip(sdr_curve, sdr_curve[1:]))
        assert all(a < b for a, b in zip(slp_curve, slp_curve[1:]))

    def test_substitution_sets_nested(self):
        # encode each slot as a power of two; the mean reveals the subset
        n = 6
        correct = tuple(ok_record(i, 0.0, 0.0) for i in range(n))
        incorrect = tuple(ok_record(i, float(2**i), 0.0) for i in range(n))
        fractions = tuple(k / n for k in range(n + 1))
        rows = mix_experiment(
            MixSpec(correct=correct, incorrect=incorrect, fractions=fractions, seed=5)
        )
        subsets = []
        for row in rows:
            total = int(round(row.mean_sdr_distance * n))
            subsets.append({i for i in range(n) if total & (1 << i)})
        for small, big in zip(subsets, subsets[1:]):
            assert small <= big
            assert len(big) == len(small) + 1

    def test_reproducible_for_seed(self):
        correct, incorrect = self._pools()
        a = mix_experiment(MixSpec(correct=correct, incorrect=incorrect, seed=3))
        b = mix_experiment(MixSpec(correct=correct, incorrect=incorrect, seed=3))
        assert a == b

    def test_empty_pool_rejected(self):
        with pytest.raises(EmptyPool):
            MixSpec(correct=(), incorrect=(ok_record(0, 1, 1),))

    def test_unequal_pools_rejected(self):
        with pytest.raises(ValueError):
            MixSpec(
                correct=(ok_record(0, 1, 1),),
                incorrect=(ok_record(0, 1, 1), ok_record(1, 1, 1)),
            )


def sample_records():
    full = EvalRecord(
        model_id="m0", clothing_id="c0", status="ok",
        style_real="Interfered", style_virtual="NonInterfered",
        sdr_distance=0.125,
        sdr_detail={"s_r": 10, "d_r": 20, "sd_r": 5, "s_v": 8, "d_v": 16,
                    "sd_v": 4, "sdr_r": 0.5, "sdr_v": 0.5},
        slpips_value=0.25, slpips_n_nodes=7,
        slpips_per_layer=(0.1, 0.2, 0.25, 0.3, 0.4),
    )
    skipped = EvalRecord(
        model_id="m1", clothing_id="c1", status="skipped",
        skip_reason="DimensionMismatch",
    )
    return (full, skipped)


class TestReportIO:
    def test_json_round_trip(self, tmp_path):
        report = make_report(sample_records(), config())
        path = tmp_path / "report.json"
        write_report(report, path, "json")
        loaded = read_report(path, "json")
        assert loaded.records == report.records
        assert loaded.aggregates == report.aggregates
        assert loaded.config == report.config

    def test_csv_round_trip(self, tmp_path):
        report = make_report(sample_records(), config())
        path = tmp_path / "report.csv"
        write_report(report, path, "csv")
        loaded = read_report(path, "csv")
        assert loaded.records == report.records
        for key, value in report.aggregates.items():
            got = loaded.aggregates[key]
            assert got == pytest.approx(value) if value is not None else got is None

    def test_csv_row_count(self, tmp_path):
        report = make_report(sample_records(), config())
        path = tmp_path / "report.csv"
        write_report(report, path, "csv")
        lines = path.read_text().strip().splitlines()
        assert len(lines) == len(report.records) + 1

    def test_aggregate_tamper_detected(self, tmp_path):
        report = make_report(sample_records(), config())
        path = tmp_path / "report.json"
        write_report(report, path, "json")
        text = path.read_text().replace('"n_ok": 1', '"n_ok": 2')
        path.write_text(text)
        with pytest.raises(SerializationFailure):
            read_report(path, "json")

    def test_skipped_records_carry_no_values(self):
        _, skipped = sample_records()
        assert skipped.sdr_distance is None
        assert skipped.slpips_value is None
        agg = compute_aggregates([skipped])
        assert agg["mean_sdr_distance"] is None
        assert agg["n_skipped"] == 1

    def test_aggregates_equal_mean_of_ok_records(self):
        records = [ok_record(i, 0.1 * i, 0.05 * i) for i in range(7)]
        agg = compute_aggregates(records)
        expected_sdr = sum(0.1 * i for i in range(7)) / 7
        assert abs(agg["mean_sdr_distance"] - expected_sdr) < 1e-12
