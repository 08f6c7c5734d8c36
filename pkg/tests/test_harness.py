"""Harness tests: checkpoint container, synthetic data, run configs,
batch assembly, training loops, verify suites, and the CLI.

Loop tests run miniature configurations (tens of steps, seconds in total)
and check structural invariants plus bitwise rerun determinism; learning
quality is covered by the acceptance suite.
"""

import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from desklm.errors import (
    CheckpointCorruptError,
    CheckpointFormatError,
    CompatibilityError,
    ConfigError,
    InputError,
    NumericsError,
)
from desklm.finetune import (
    KdConfig,
    SmartConfig,
    SmoothingConfig,
    StrategyConfig,
    TaskSpec,
)
from desklm.harness import (
    FINETUNE_BATCH_GRID,
    FINETUNE_LR_GRID,
    SUITES,
    FinetuneParams,
    MetricsWriter,
    RunConfig,
    aggregate_span_scores,
    build_pretrain_batch,
    check_geometry,
    load_checkpoint,
    load_task_data,
    main,
    make_ne_set,
    make_synthetic_choice,
    make_synthetic_classification,
    make_synthetic_corpus,
    make_synthetic_span,
    ne_tag_of,
    pack_choice_batch,
    pack_cls_batch,
    pack_span_batch,
    pair_mode_for,
    pos_tag_of,
    read_checkpoint_metadata,
    run_finetune,
    run_pretrain,
    run_suite,
    save_checkpoint,
    span_em_f1,
    successor,
    write_task_data,
)
from desklm.harness.synth import SynthPattern
from desklm.model.config import (
    CLS_ID,
    FIRST_CONTENT_ID,
    SEP_ID,
    SPECIAL_IDS,
    desk_config,
)
from desklm.optim import LrSchedule, lr_at
from desklm.pretrain import (
    MaskingPolicy,
    PretrainLossWeights,
    desk_schedule,
)
from desklm.tensor import IGNORE_INDEX, ParamStore, Value, as_value


def small_store(seed=0):
    rng = np.random.default_rng(seed)
    params = ParamStore()
    params.add("alpha.weight", Value(rng.normal(size=(3, 4))))
    params.add("beta.bias", Value(rng.normal(size=5)))
    params.add("gamma.cube", Value(rng.normal(size=(2, 2, 2))))
    return params


@pytest.fixture(scope="module")
def synth_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    return make_synthetic_corpus(out, seed=0, n_articles=12, vocab=64)


def pretrain_config(corpus, out, total=10, seed=0, **kw):
    return RunConfig(mode="pretrain", model=desk_config(),
                     schedule=desk_schedule(total), seed=seed,
                     paths={"corpus": corpus, "out": str(out)}, **kw)


# --- checkpoint container ----------------------------------------------------


class TestCheckpoint:
    def test_round_trip_values_are_exact_after_f32_cast(self, tmp_path):
        params = small_store()
        cfg = desk_config()
        path = tmp_path / "a.mzck"
        save_checkpoint(params, cfg, path)
        loaded, loaded_cfg = load_checkpoint(path)
        assert sorted(loaded.names()) == sorted(params.names())
        for name, v in params.items():
            expect = v.data.astype(np.float32).astype(np.float64)
            np.testing.assert_array_equal(loaded[name].data, expect)
            assert loaded[name].data.shape == v.data.shape
        assert loaded_cfg.to_dict() == cfg.to_dict()

    def test_precision_loss_bounded_by_one_f32_ulp(self, tmp_path):
        params = ParamStore()
        vals = np.array([1e-3, 12345.678, -0.1234567891234, 2.0**20 + 0.3])
        params.add("probe.weight", Value(vals))
        path = tmp_path / "a.mzck"
        save_checkpoint(params, desk_config(), path)
        loaded, _ = load_checkpoint(path)
        ulp = np.spacing(np.abs(vals).astype(np.float32)).astype(np.float64)
        assert (np.abs(loaded["probe.weight"].data - vals) <= ulp).all()

    def test_load_save_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.mzck", tmp_path / "b.mzck"
        save_checkpoint(small_store(), desk_config(), a, metadata={"k": 1, "z": "s"})
        params, cfg = load_checkpoint(a)
        save_checkpoint(params, cfg, b, metadata=read_checkpoint_metadata(a))
        assert a.read_bytes() == b.read_bytes()

    def test_metadata_round_trip(self, tmp_path):
        path = tmp_path / "a.mzck"
        meta = {"mode": "pretrain", "seed": 7, "total_steps": 100}
        save_checkpoint(small_store(), desk_config(), path, metadata=meta)
        assert read_checkpoint_metadata(path) == meta

    def test_tensors_stored_in_sorted_name_order(self, tmp_path):
        path = tmp_path / "a.mzck"
        save_checkpoint(small_store(), desk_config(), path)
        blob = path.read_bytes()
        (_, meta_len) = struct.unpack_from("<II", blob, 4)
        off = 12 + meta_len
        names = []
        while off < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            names.append(blob[off : off + name_len].decode())
            off += name_len
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            extents = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank + 4 * int(np.prod(extents))
        assert names == sorted(names)

    def test_bad_magic_is_format_error(self, tmp_path):
        path = tmp_path / "a.mzck"
        save_checkpoint(small_store(), desk_config(), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError, match="magic"):
            load_checkpoint(path)

    def test_unsupported_version_is_format_error(self, tmp_path):
        path = tmp_path / "a.mzck"
        save_checkpoint(small_store(), desk_config(), path)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 4, 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError, match="version"):
            load_checkpoint(path)

    def test_truncated_tensor_names_the_tensor(self, tmp_path):
        path = tmp_path / "a.mzck"
        save_checkpoint(small_store(), desk_config(), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-10])
        # sorted order puts gamma.cube last; its data region loses 10 bytes
        with pytest.raises(CheckpointCorruptError, match="gamma.cube"):
            load_checkpoint(path)

    def test_truncated_metadata_is_corruption(self, tmp_path):
        path = tmp_path / "a.mzck"
        save_checkpoint(small_store(), desk_config(), path)
        blob = path.read_bytes()
        (_, meta_len) = struct.unpack_from("<II", blob, 4)
        path.write_bytes(blob[: 12 + meta_len // 2])
        with pytest.raises(CheckpointCorruptError, match="truncated"):
            load_checkpoint(path)

    def test_garbled_metadata_is_corruption(self, tmp_path):
        path = tmp_path / "a.mzck"
        save_checkpoint(small_store(), desk_config(), path)
        blob = bytearray(path.read_bytes())
        blob[12] = ord("!")
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointCorruptError, match="JSON"):
            load_checkpoint(path)

    def test_duplicate_tensor_name_is_corruption(self, tmp_path):
        params = ParamStore()
        params.add("only.weight", Value(np.ones(2)))
        path = tmp_path / "a.mzck"
        save_checkpoint(params, desk_config(), path)
        blob = path.read_bytes()
        (_, meta_len) = struct.unpack_from("<II", blob, 4)
        body_start = 12 + meta_len
        path.write_bytes(blob + blob[body_start:])
        with pytest.raises(CheckpointCorruptError, match="duplicate"):
            load_checkpoint(path)

    def test_geometry_mismatch_is_compatibility_error(self):
        found = desk_config(hidden=32)
        expected = desk_config(hidden=48)
        with pytest.raises(CompatibilityError, match="hidden"):
            check_geometry(found, expected, "init")

    def test_geometry_match_passes(self):
        check_geometry(desk_config(), desk_config(), "init")


# --- synthetic data ----------------------------------------------------------


class TestSynth:
    def test_same_seed_byte_identical(self, tmp_path):
        a = make_synthetic_corpus(tmp_path / "a", seed=9, n_articles=6, vocab=32)
        b = make_synthetic_corpus(tmp_path / "b", seed=9, n_articles=6, vocab=32)
        for key in ("corpus", "meta"):
            assert open(a[key], "rb").read() == open(b[key], "rb").read()

    def test_different_seed_differs(self, tmp_path):
        a = make_synthetic_corpus(tmp_path / "a", seed=1, n_articles=6, vocab=32)
        b = make_synthetic_corpus(tmp_path / "b", seed=2, n_articles=6, vocab=32)
        assert open(a["corpus"]).read() != open(b["corpus"]).read()

    def test_noiseless_walk_follows_successor_exactly(self, tmp_path):
        paths = make_synthetic_corpus(tmp_path / "c", seed=3, n_articles=5, vocab=32,
                                      noise=0.0)
        meta = json.load(open(paths["meta"]))
        pattern = SynthPattern(**meta["pattern"])
        for line in open(paths["corpus"]):
            ids = np.array([int(t) for t in json.loads(line)["text"].split()])
            np.testing.assert_array_equal(ids[1:], successor(ids[:-1], pattern))

    def test_noisy_walk_mostly_follows_successor(self, synth_corpus):
        meta = json.load(open(synth_corpus["meta"]))
        pattern = SynthPattern(**meta["pattern"])
        hits = total = 0
        for line in open(synth_corpus["corpus"]):
            ids = np.array([int(t) for t in json.loads(line)["text"].split()])
            hits += int((ids[1:] == successor(ids[:-1], pattern)).sum())
            total += len(ids) - 1
        assert hits / total > 0.95  # noise rate is 0.01

    def test_tokens_stay_in_content_range(self, synth_corpus):
        for line in open(synth_corpus["corpus"]):
            ids = np.array([int(t) for t in json.loads(line)["text"].split()])
            assert (ids >= FIRST_CONTENT_ID).all() and (ids < 64).all()

    def test_successor_is_a_bijection(self):
        pattern = SynthPattern(mult=7, offset=3, n_content=60)
        ids = np.arange(FIRST_CONTENT_ID, 64)
        image = successor(ids, pattern)
        assert sorted(image) == sorted(ids)

    def test_tag_functions_are_pure_recomputable(self):
        ids = np.arange(FIRST_CONTENT_ID, 64)
        np.testing.assert_array_equal(pos_tag_of(ids, 8), ids % 8)
        ne_ids = make_ne_set(0, 64)
        assert len(ne_ids) == 15  # quarter of 60 content ids
        assert (np.diff(ne_ids) > 0).all()
        tags = ne_tag_of(ids, ne_ids)
        np.testing.assert_array_equal(tags, np.isin(ids, ne_ids).astype(int))
        np.testing.assert_array_equal(make_ne_set(0, 64), ne_ids)

    def test_vocab_floor_enforced(self, tmp_path):
        with pytest.raises(ConfigError, match=">= 16"):
            make_synthetic_corpus(tmp_path / "v", seed=0, vocab=15)

    def test_classification_labels_recomputable_from_tokens(self):
        records = make_synthetic_classification(5, 40, 64, n_classes=2)
        assert len(records) == 40
        for r in records:
            residues = {t % 2 for t in r["tokens"]}
            assert residues == {r["label"]}

    def test_span_answer_is_the_marker_run(self):
        records = make_synthetic_span(6, 40, 64)
        for r in records:
            marker = r["question"][0]
            passage = np.array(r["passage"])
            inside = passage[r["start"] : r["end"] + 1]
            assert (inside == marker).all()
            outside = np.delete(passage, np.arange(r["start"], r["end"] + 1))
            assert marker not in outside

    def test_choice_marker_appears_only_in_gold_choice(self):
        records = make_synthetic_choice(7, 40, 64, num_choices=3)
        for r in records:
            marker = r["question"][0]
            for k, choice in enumerate(r["choices"]):
                assert (marker in choice) == (k == r["label"])
            assert marker not in r["passage"]

    def test_task_data_round_trip(self, tmp_path):
        records = make_synthetic_classification(1, 8, 64)
        path = tmp_path / "cls.jsonl"
        write_task_data(path, records)
        assert load_task_data(path, "cls") == records

    def test_missing_field_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"tokens": [5], "label": 0}\n{"tokens": [6]}\n')
        with pytest.raises(InputError, match="line 2"):
            load_task_data(path, "cls")

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"tokens": [5], "label": 0}\nnot json\n')
        with pytest.raises(InputError, match="line 2"):
            load_task_data(path, "cls")

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(InputError, match="no records"):
            load_task_data(path, "cls")

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="kind"):
            load_task_data(tmp_path / "x.jsonl", "regression")


# --- run configuration -------------------------------------------------------


class TestRunConfig:
    def base_finetune(self, **kw):
        defaults = dict(mode="finetune", model=desk_config(),
                        task=TaskSpec(kind="classification", num_classes=2, max_len=32))
        defaults.update(kw)
        return RunConfig(**defaults)

    def test_grid_accepts_published_points(self):
        for lr in FINETUNE_LR_GRID:
            for batch in FINETUNE_BATCH_GRID:
                self.base_finetune(finetune=FinetuneParams(lr=lr, batch_size=batch, epochs=3))

    def test_off_grid_lr_rejected(self):
        with pytest.raises(ConfigError, match="grid"):
            self.base_finetune(finetune=FinetuneParams(lr=5e-4))

    def test_off_grid_batch_rejected(self):
        with pytest.raises(ConfigError, match="batch"):
            self.base_finetune(finetune=FinetuneParams(batch_size=7))

    def test_epochs_out_of_range_rejected(self):
        with pytest.raises(ConfigError, match="epochs"):
            self.base_finetune(finetune=FinetuneParams(epochs=9))

    def test_allow_off_grid_overrides(self):
        cfg = self.base_finetune(finetune=FinetuneParams(lr=5e-4, batch_size=7, epochs=9),
                                 allow_off_grid=True)
        assert cfg.finetune.lr == 5e-4

    def test_pretrain_requires_schedule(self):
        with pytest.raises(ConfigError, match="schedule"):
            RunConfig(mode="pretrain", model=desk_config())

    def test_finetune_requires_task(self):
        with pytest.raises(ConfigError, match="task"):
            RunConfig(mode="finetune", model=desk_config())

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError, match="mode"):
            RunConfig(mode="train", model=desk_config())

    def test_json_round_trip(self, tmp_path):
        cfg = RunConfig(
            mode="pretrain", model=desk_config(), schedule=desk_schedule(40),
            seed=3, paths={"corpus": "c.jsonl", "out": "run"},
            loss_weights=PretrainLossWeights(mlm=1.0, nsp=1.0, sop=0.0),
            lr_peak=1e-3, eval_every=20,
        )
        path = tmp_path / "cfg.json"
        cfg.to_json(path)
        again = RunConfig.from_json(path)
        assert again.to_dict() == cfg.to_dict()

    def test_finetune_json_round_trip(self, tmp_path):
        cfg = self.base_finetune(
            strategies=StrategyConfig(kd=KdConfig(enabled=True, weight=0.5, temperature=2.0),
                                      smart=SmartConfig(enabled=True, radius=1e-4),
                                      smoothing=SmoothingConfig(enabled=True, ce_weight=0.7,
                                                                bce_weight=0.3)),
            finetune=FinetuneParams(lr=8e-6, batch_size=24, epochs=4),
        )
        path = tmp_path / "cfg.json"
        cfg.to_json(path)
        again = RunConfig.from_json(path)
        assert again.to_dict() == cfg.to_dict()
        assert again.strategies.kd.enabled
        assert again.strategies.smoothing.bce_weight == 0.3


# --- batch assembly ----------------------------------------------------------


def _windows(rng, n, length):
    from desklm.corpus import Window

    return [Window(article_id=i, start=0,
                   tokens=rng.integers(FIRST_CONTENT_ID, 64, size=length))
            for i in range(n)]


class TestBatching:
    def test_pair_mode_resolution(self):
        assert pair_mode_for(PretrainLossWeights()) == "sop"
        assert pair_mode_for(PretrainLossWeights(nsp=1.0, sop=0.0)) == "nsp"
        assert pair_mode_for(PretrainLossWeights(nsp=0.0, sop=0.0)) is None
        with pytest.raises(ConfigError, match="one pair objective"):
            pair_mode_for(PretrainLossWeights(nsp=1.0, sop=1.0))

    def test_pretrain_batch_structure(self):
        rng = np.random.default_rng(0)
        windows = _windows(rng, 4, 32)
        cfg = desk_config()
        batch = build_pretrain_batch(windows, 32, cfg, MaskingPolicy(seed=1), "sop",
                                     pair_seed_base=100, ne_ids=make_ne_set(0, 64))
        assert batch.token_ids.shape == (4, 32)
        assert (batch.token_ids[:, 0] == CLS_ID).all()
        for j in range(4):
            used = batch.attn_mask[j].astype(bool)
            row = batch.token_ids[j, used]
            assert row[-1] == SEP_ID
            assert (np.asarray(row) == SEP_ID).sum() == 2
            # segment ids switch from 0 to 1 right after the first separator
            first_sep = int(np.where(row == SEP_ID)[0][0])
            segs = batch.segment_ids[j, used]
            assert (segs[: first_sep + 1] == 0).all()
            assert (segs[first_sep + 1 :] == 1).all()
        assert set(np.unique(batch.pair_label)) <= {0, 1}
        batch.validate(cfg)

    def test_labels_only_on_content_positions(self):
        rng = np.random.default_rng(1)
        windows = _windows(rng, 6, 32)
        batch = build_pretrain_batch(windows, 32, desk_config(), MaskingPolicy(seed=2),
                                     "sop", pair_seed_base=0, ne_ids=make_ne_set(0, 64))
        pad = ~batch.attn_mask.astype(bool)
        assert (batch.mlm_labels[pad] == IGNORE_INDEX).all()
        assert (batch.pos_labels[pad] == IGNORE_INDEX).all()
        assert (batch.ne_labels[pad] == IGNORE_INDEX).all()
        # separators carry no tag labels; a masked content token may read as
        # MASK_ID in the corrupted grid, so restrict to CLS/SEP columns
        cls_sep = np.isin(batch.token_ids, [CLS_ID, SEP_ID])
        assert (batch.pos_labels[cls_sep] == IGNORE_INDEX).all()
        assert (batch.ne_labels[cls_sep] == IGNORE_INDEX).all()

    def test_tag_labels_match_recomputation(self):
        rng = np.random.default_rng(3)
        windows = _windows(rng, 4, 32)
        ne_ids = make_ne_set(0, 64)
        batch = build_pretrain_batch(windows, 32, desk_config(), MaskingPolicy(seed=4),
                                     None, pair_seed_base=0, ne_ids=ne_ids)
        # pair_mode None keeps rows in document order: reconstruct each row
        for j, w in enumerate(windows):
            content = w.tokens[:29]
            half = len(content) // 2
            row = np.concatenate(([CLS_ID], content[:half], [SEP_ID], content[half:], [SEP_ID]))
            labeled = batch.pos_labels[j] != IGNORE_INDEX
            np.testing.assert_array_equal(
                batch.pos_labels[j, labeled], pos_tag_of(row, 8)[labeled[: len(row)]])
            np.testing.assert_array_equal(
                batch.ne_labels[j, labeled], ne_tag_of(row, ne_ids)[labeled[: len(row)]])

    def test_mlm_labels_restore_originals(self):
        rng = np.random.default_rng(5)
        windows = _windows(rng, 4, 32)
        batch = build_pretrain_batch(windows, 32, desk_config(), MaskingPolicy(seed=6),
                                     None, pair_seed_base=0, ne_ids=make_ne_set(0, 64))
        for j, w in enumerate(windows):
            content = w.tokens[:29]
            half = len(content) // 2
            row = np.concatenate(([CLS_ID], content[:half], [SEP_ID], content[half:], [SEP_ID]))
            chosen = batch.mlm_labels[j] != IGNORE_INDEX
            np.testing.assert_array_equal(batch.mlm_labels[j, chosen],
                                          row[chosen[: len(row)]])

    def test_nsp_needs_two_windows(self):
        rng = np.random.default_rng(7)
        with pytest.raises(ConfigError, match="at least 2"):
            build_pretrain_batch(_windows(rng, 1, 32), 32, desk_config(),
                                 MaskingPolicy(seed=0), "nsp", pair_seed_base=0,
                                 ne_ids=make_ne_set(0, 64))

    def test_short_seq_len_rejected(self):
        rng = np.random.default_rng(8)
        with pytest.raises(ConfigError, match="seq_len"):
            build_pretrain_batch(_windows(rng, 2, 32), 4, desk_config(),
                                 MaskingPolicy(seed=0), None, pair_seed_base=0,
                                 ne_ids=make_ne_set(0, 64))

    def test_pack_cls_batch(self):
        records = [{"tokens": [5, 6, 7], "label": 1}, {"tokens": [8, 9], "label": 0}]
        batch, labels = pack_cls_batch(records, max_len=16)
        assert batch.token_ids.shape == (2, 5)
        np.testing.assert_array_equal(batch.token_ids[0], [CLS_ID, 5, 6, 7, SEP_ID])
        np.testing.assert_array_equal(batch.token_ids[1], [CLS_ID, 8, 9, SEP_ID, 0])
        np.testing.assert_array_equal(labels, [1, 0])
        np.testing.assert_array_equal(batch.attn_mask[1], [1, 1, 1, 1, 0])

    def test_pack_span_batch_gold_offsets(self):
        records = [{"question": [40], "passage": [10, 11, 12, 13], "start": 1, "end": 2}]
        batch, gold = pack_span_batch(records, max_len=32)
        # row: [CLS] 40 [SEP] 10 11 12 13 [SEP]; passage begins at index 3
        np.testing.assert_array_equal(batch.token_ids[0],
                                      [CLS_ID, 40, SEP_ID, 10, 11, 12, 13, SEP_ID])
        np.testing.assert_array_equal(gold[0], [4, 5])
        assert batch.token_ids[0, gold[0, 0]] == 11

    def test_pack_span_batch_rejects_truncated_gold(self):
        records = [{"question": [40], "passage": list(range(10, 30)), "start": 18, "end": 19}]
        with pytest.raises(InputError, match="packed passage"):
            pack_span_batch(records, max_len=12)

    def test_pack_choice_batch(self):
        records = make_synthetic_choice(0, 3, 64, num_choices=3)
        batch, labels = pack_choice_batch(records, num_choices=3, max_len=32)
        assert batch.token_ids.shape[0] == 9
        assert labels.shape == (3,)
        with pytest.raises(InputError, match="choices"):
            pack_choice_batch(records, num_choices=4, max_len=32)


# --- metric helpers ----------------------------------------------------------


class TestMetrics:
    def test_exact_match(self):
        assert span_em_f1((4, 7), (4, 7)) == (1.0, 1.0)

    def test_disjoint(self):
        assert span_em_f1((0, 1), (5, 6)) == (0.0, 0.0)

    def test_partial_overlap(self):
        em, f1 = span_em_f1((2, 5), (4, 7))
        assert em == 0.0
        assert f1 == pytest.approx(0.5)  # overlap 2, both lengths 4

    def test_containment(self):
        em, f1 = span_em_f1((3, 3), (2, 4))
        assert em == 0.0
        assert f1 == pytest.approx(2 * 1.0 * (1 / 3) / (1.0 + 1 / 3))

    def test_aggregate(self):
        scores = aggregate_span_scores([((1, 2), (1, 2)), ((0, 0), (3, 3))])
        assert scores == {"em": 0.5, "f1": 0.5, "avg_em_f1": 0.5}

    def test_writer_is_deterministic_and_counts(self, tmp_path):
        path = tmp_path / "m.jsonl"
        with MetricsWriter(path) as log:
            log.write({"b": 1, "a": 2})
            log.write({"nested": {"z": 1, "y": 2}})
            assert log.count == 2
        lines = path.read_text().splitlines()
        assert lines[0] == '{"a": 2, "b": 1}'
        assert len(lines) == 2


# --- pretraining loop --------------------------------------------------------


class TestPretrainLoop:
    def test_metrics_log_one_record_per_step(self, synth_corpus, tmp_path):
        cfg = pretrain_config(synth_corpus["corpus"], tmp_path / "run", total=10,
                              eval_every=4)
        result = run_pretrain(cfg)
        lines = [json.loads(l) for l in open(result["metrics"])]
        assert len(lines) == 10
        assert [l["step"] for l in lines] == list(range(10))
        for l in lines:
            assert set(l) == {"step", "stage", "lr", "losses", "eval"}
            assert set(l["losses"]) == {"mlm", "sop", "pos", "ne", "total"}

    def test_lr_column_matches_schedule_oracle(self, synth_corpus, tmp_path):
        cfg = pretrain_config(synth_corpus["corpus"], tmp_path / "run", total=10)
        result = run_pretrain(cfg)
        sched = LrSchedule(cfg.lr_peak, 10, 0.1)
        for l in (json.loads(x) for x in open(result["metrics"])):
            assert l["lr"] == lr_at(l["step"], sched)

    def test_stage_flips_at_boundary(self, synth_corpus, tmp_path):
        cfg = pretrain_config(synth_corpus["corpus"], tmp_path / "run", total=10)
        result = run_pretrain(cfg)
        stages = [json.loads(l)["stage"] for l in open(result["metrics"])]
        assert stages == [1] * 9 + [2]  # boundary at floor(0.9 * 10)

    def test_eval_cadence(self, synth_corpus, tmp_path):
        cfg = pretrain_config(synth_corpus["corpus"], tmp_path / "run", total=10,
                              eval_every=4)
        result = run_pretrain(cfg)
        lines = [json.loads(l) for l in open(result["metrics"])]
        evaluated = [l["step"] for l in lines if l["eval"]]
        assert evaluated == [3, 7, 9]  # every 4th step plus the final one
        assert set(lines[3]["eval"]) == {"mlm_accuracy", "sop_accuracy"}

    def test_rerun_is_bitwise_identical(self, synth_corpus, tmp_path):
        r1 = run_pretrain(pretrain_config(synth_corpus["corpus"], tmp_path / "a", total=8, seed=5))
        r2 = run_pretrain(pretrain_config(synth_corpus["corpus"], tmp_path / "b", total=8, seed=5))
        assert open(r1["checkpoint"], "rb").read() == open(r2["checkpoint"], "rb").read()
        assert open(r1["metrics"]).read() == open(r2["metrics"]).read()

    def test_different_seed_changes_the_run(self, synth_corpus, tmp_path):
        r1 = run_pretrain(pretrain_config(synth_corpus["corpus"], tmp_path / "a", total=8, seed=1))
        r2 = run_pretrain(pretrain_config(synth_corpus["corpus"], tmp_path / "b", total=8, seed=2))
        assert open(r1["checkpoint"], "rb").read() != open(r2["checkpoint"], "rb").read()

    def test_checkpoint_carries_run_metadata(self, synth_corpus, tmp_path):
        result = run_pretrain(pretrain_config(synth_corpus["corpus"], tmp_path / "run",
                                              total=8, seed=4))
        meta = read_checkpoint_metadata(result["checkpoint"])
        assert meta == {"mode": "pretrain", "seed": 4, "total_steps": 8}
        params, cfg = load_checkpoint(result["checkpoint"])
        assert cfg.to_dict() == desk_config().to_dict()
        assert "heads.mlm.bias" in dict(params.items())

    def test_nsp_variant_runs(self, synth_corpus, tmp_path):
        cfg = pretrain_config(synth_corpus["corpus"], tmp_path / "run", total=6,
                              loss_weights=PretrainLossWeights(nsp=1.0, sop=0.0))
        result = run_pretrain(cfg)
        line = json.loads(open(result["metrics"]).readline())
        assert "nsp" in line["losses"] and "sop" not in line["losses"]
        assert "nsp_accuracy" in result["final_eval"]

    def test_non_finite_loss_aborts_with_step(self, synth_corpus, tmp_path, monkeypatch):
        from desklm.harness import pretrain_loop

        monkeypatch.setattr(pretrain_loop, "mlm_loss",
                            lambda *a, **k: as_value(float("nan")))
        cfg = pretrain_config(synth_corpus["corpus"], tmp_path / "run", total=4)
        with pytest.raises(NumericsError, match="step 0.*non-finite"):
            run_pretrain(cfg)

    def test_needs_two_articles(self, tmp_path):
        corpus = tmp_path / "tiny.jsonl"
        corpus.write_text(json.dumps({"text": " ".join(str(i % 60 + 4) for i in range(200))}) + "\n")
        cfg = pretrain_config(str(corpus), tmp_path / "run", total=4)
        with pytest.raises(InputError, match="2 articles"):
            run_pretrain(cfg)

    def test_wrong_mode_rejected(self, synth_corpus, tmp_path):
        cfg = RunConfig(mode="finetune", model=desk_config(),
                        task=TaskSpec(kind="classification", num_classes=2, max_len=32),
                        paths={"corpus": synth_corpus["corpus"], "out": str(tmp_path)})
        with pytest.raises(ConfigError, match="pretrain"):
            run_pretrain(cfg)

    def test_missing_paths_rejected(self, synth_corpus):
        cfg = RunConfig(mode="pretrain", model=desk_config(), schedule=desk_schedule(4))
        with pytest.raises(ConfigError, match="paths"):
            run_pretrain(cfg)

    def test_unknown_grad_transform_rejected(self, synth_corpus, tmp_path):
        cfg = pretrain_config(synth_corpus["corpus"], tmp_path / "run", total=4,
                              grad_transform="clip")
        with pytest.raises(ConfigError, match="transform"):
            run_pretrain(cfg)


# --- fine-tuning loop --------------------------------------------------------


@pytest.fixture(scope="module")
def init_ckpt(synth_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("pre")
    cfg = pretrain_config(synth_corpus["corpus"], out, total=6, eval_every=0)
    return run_pretrain(cfg)["checkpoint"]


def finetune_config(init, data, out, kind="classification", **kw):
    specs = {
        "classification": TaskSpec(kind="classification", num_classes=2, max_len=32),
        "span": TaskSpec(kind="span", max_len=48),
        "multichoice": TaskSpec(kind="multichoice", num_choices=3, max_len=32),
    }
    defaults = dict(mode="finetune", model=desk_config(), task=specs[kind], seed=0,
                    finetune=FinetuneParams(lr=2e-5, batch_size=16, epochs=2),
                    paths={"init": init, "data": str(data), "out": str(out)})
    for key in ("seed", "strategies", "finetune", "eval_batch_rows"):
        if key in kw:
            defaults[key] = kw.pop(key)
    defaults["paths"].update(kw.pop("paths", {}))
    assert not kw, kw
    return RunConfig(**defaults)


@pytest.fixture(scope="module")
def task_files(tmp_path_factory):
    out = tmp_path_factory.mktemp("task_data")
    files = {}
    for kind, make in (("cls", make_synthetic_classification),
                       ("span", make_synthetic_span),
                       ("choice", make_synthetic_choice)):
        path = out / f"{kind}.jsonl"
        write_task_data(path, make(1, 24, 64))
        files[kind] = path
    return files


class TestFinetuneLoop:
    def test_classification_run_shape(self, init_ckpt, task_files, tmp_path):
        cfg = finetune_config(init_ckpt, task_files["cls"], tmp_path / "run")
        result = run_finetune(cfg)
        lines = [json.loads(l) for l in open(result["metrics"])]
        assert len(lines) == 4  # ceil(24/16) * 2 epochs
        assert [l["stage"] for l in lines] == [1, 1, 2, 2]
        for l in lines:
            assert set(l["losses"]) == {"task", "kd", "smart", "total"}
        # epoch-end steps carry an accuracy eval, others none
        assert [bool(l["eval"]) for l in lines] == [False, True, False, True]
        assert "accuracy" in lines[-1]["eval"]
        assert result["transfer"]["loaded"] > 0

    def test_span_run_reports_em_f1(self, init_ckpt, task_files, tmp_path):
        cfg = finetune_config(init_ckpt, task_files["span"], tmp_path / "run", kind="span")
        result = run_finetune(cfg)
        assert set(result["final_eval"]) == {"em", "f1", "avg_em_f1"}

    def test_choice_run(self, init_ckpt, task_files, tmp_path):
        cfg = finetune_config(init_ckpt, task_files["choice"], tmp_path / "run",
                              kind="multichoice")
        result = run_finetune(cfg)
        assert "accuracy" in result["final_eval"]

    def test_rerun_is_bitwise_identical(self, init_ckpt, task_files, tmp_path):
        r1 = run_finetune(finetune_config(init_ckpt, task_files["cls"], tmp_path / "a"))
        r2 = run_finetune(finetune_config(init_ckpt, task_files["cls"], tmp_path / "b"))
        assert open(r1["checkpoint"], "rb").read() == open(r2["checkpoint"], "rb").read()
        assert open(r1["metrics"]).read() == open(r2["metrics"]).read()

    def test_disabled_strategies_match_default_trace(self, init_ckpt, task_files, tmp_path):
        """Explicitly disabled strategies with nonzero weights cannot differ
        from the all-default run."""
        r1 = run_finetune(finetune_config(init_ckpt, task_files["choice"],
                                          tmp_path / "a", kind="multichoice"))
        strat = StrategyConfig(kd=KdConfig(enabled=False, weight=9.0, temperature=3.0),
                               smart=SmartConfig(enabled=False, weight=9.0, radius=1e-2),
                               smoothing=SmoothingConfig(enabled=False, ce_weight=0.1,
                                                         bce_weight=0.9))
        r2 = run_finetune(finetune_config(init_ckpt, task_files["choice"],
                                          tmp_path / "b", kind="multichoice",
                                          strategies=strat))
        assert open(r1["metrics"]).read() == open(r2["metrics"]).read()
        assert open(r1["checkpoint"], "rb").read() == open(r2["checkpoint"], "rb").read()

    def test_kd_and_smart_strategies_engage(self, init_ckpt, task_files, tmp_path):
        strat = StrategyConfig(kd=KdConfig(enabled=True, weight=0.5, temperature=2.0),
                               smart=SmartConfig(enabled=True, weight=0.1))
        cfg = finetune_config(init_ckpt, task_files["cls"], tmp_path / "run",
                              strategies=strat, paths={"teacher": init_ckpt})
        result = run_finetune(cfg)
        lines = [json.loads(l) for l in open(result["metrics"])]
        assert all(l["losses"]["kd"] >= 0.0 for l in lines)
        assert any(l["losses"]["smart"] != 0.0 for l in lines)
        total = lines[0]["losses"]
        assert total["total"] == pytest.approx(
            total["task"] + 0.5 * total["kd"] + 0.1 * total["smart"])

    def test_kd_needs_teacher_path(self, init_ckpt, task_files, tmp_path):
        strat = StrategyConfig(kd=KdConfig(enabled=True))
        cfg = finetune_config(init_ckpt, task_files["cls"], tmp_path / "run",
                              strategies=strat)
        with pytest.raises(ConfigError, match="teacher"):
            run_finetune(cfg)

    def test_teacher_geometry_mismatch_rejected(self, init_ckpt, task_files, tmp_path):
        from desklm.model.encoder import init_parameters

        odd = desk_config(hidden=16, heads=2)
        bad_teacher = tmp_path / "teacher.mzck"
        save_checkpoint(init_parameters(odd, seed=0), odd, bad_teacher)
        strat = StrategyConfig(kd=KdConfig(enabled=True))
        cfg = finetune_config(init_ckpt, task_files["cls"], tmp_path / "run",
                              strategies=strat, paths={"teacher": str(bad_teacher)})
        with pytest.raises(CompatibilityError, match="teacher"):
            run_finetune(cfg)

    def test_init_geometry_mismatch_rejected(self, task_files, tmp_path):
        from desklm.model.encoder import init_parameters

        odd = desk_config(hidden=16, heads=2)
        bad_init = tmp_path / "init.mzck"
        save_checkpoint(init_parameters(odd, seed=0), odd, bad_init)
        cfg = finetune_config(str(bad_init), task_files["cls"], tmp_path / "run")
        with pytest.raises(CompatibilityError, match="init"):
            run_finetune(cfg)

    def test_augmentation_extends_the_epoch(self, init_ckpt, task_files, tmp_path):
        import dataclasses

        from desklm.finetune import AugmentationConfig

        extra = tmp_path / "extra.jsonl"
        write_task_data(extra, make_synthetic_classification(2, 24, 64))
        strat = StrategyConfig(augmentation=AugmentationConfig(extra_paths=(str(extra),)))
        cfg = finetune_config(init_ckpt, task_files["cls"], tmp_path / "run",
                              strategies=strat)
        result = run_finetune(cfg)
        lines = open(result["metrics"]).read().splitlines()
        assert len(lines) == 6  # ceil(48/16) * 2 epochs

    def test_separate_eval_data_is_used(self, init_ckpt, task_files, tmp_path):
        eval_path = tmp_path / "eval.jsonl"
        write_task_data(eval_path, make_synthetic_classification(9, 12, 64))
        cfg = finetune_config(init_ckpt, task_files["cls"], tmp_path / "run",
                              paths={"eval": str(eval_path)})
        result = run_finetune(cfg)
        assert "accuracy" in result["final_eval"]

    def test_non_finite_loss_aborts_with_step(self, init_ckpt, task_files, tmp_path,
                                              monkeypatch):
        from desklm.harness import finetune_loop

        monkeypatch.setattr(finetune_loop, "cross_entropy",
                            lambda *a, **k: as_value(float("inf")))
        cfg = finetune_config(init_ckpt, task_files["cls"], tmp_path / "run")
        with pytest.raises(NumericsError, match="step 0.*non-finite"):
            run_finetune(cfg)


# --- verify suites -----------------------------------------------------------


class TestVerifySuites:
    @pytest.mark.parametrize("name", sorted(SUITES))
    def test_suite_passes(self, name):
        report = run_suite(name)
        assert report["suite"] == name
        assert report["passed"] is True
        assert report["checks"]
        for check in report["checks"]:
            assert set(check) == {"name", "passed", "detail"}
            assert check["passed"] is True

    def test_unknown_suite_rejected(self):
        with pytest.raises(ConfigError, match="unknown verify suite"):
            run_suite("everything")


# --- command line ------------------------------------------------------------


class TestCli:
    def test_console_script_installed(self):
        out = subprocess.run(["desklm", "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        assert "pretrain" in out.stdout

    def test_synth_then_pretrain_then_finetune(self, tmp_path, capsys):
        assert main(["synth", "--seed", "3", "--out", str(tmp_path / "s"),
                     "--articles", "12", "--cls", "24"]) == 0
        cfg = RunConfig(mode="pretrain", model=desk_config(), schedule=desk_schedule(6),
                        paths={"corpus": str(tmp_path / "s" / "corpus.jsonl")})
        cfg.to_json(tmp_path / "pre.json")
        assert main(["pretrain", "--config", str(tmp_path / "pre.json"),
                     "--seed", "2", "--out", str(tmp_path / "pre")]) == 0
        meta = read_checkpoint_metadata(tmp_path / "pre" / "checkpoint.mzck")
        assert meta["seed"] == 2
        assert main(["finetune", "--task", "cls",
                     "--init", str(tmp_path / "pre" / "checkpoint.mzck"),
                     "--data", str(tmp_path / "s" / "cls.jsonl"),
                     "--out", str(tmp_path / "ft"), "--epochs", "2"]) == 0
        assert (tmp_path / "ft" / "finetuned.mzck").exists()
        capsys.readouterr()

    def test_cli_reruns_are_bitwise_identical(self, tmp_path, capsys):
        main(["synth", "--seed", "8", "--out", str(tmp_path / "s"),
              "--articles", "10", "--cls", "16"])
        cfg = RunConfig(mode="pretrain", model=desk_config(), schedule=desk_schedule(5),
                        paths={"corpus": str(tmp_path / "s" / "corpus.jsonl")})
        cfg.to_json(tmp_path / "pre.json")
        for out in ("p1", "p2"):
            assert main(["pretrain", "--config", str(tmp_path / "pre.json"),
                         "--seed", "6", "--out", str(tmp_path / out)]) == 0
        assert ((tmp_path / "p1" / "checkpoint.mzck").read_bytes()
                == (tmp_path / "p2" / "checkpoint.mzck").read_bytes())
        assert ((tmp_path / "p1" / "metrics.jsonl").read_text()
                == (tmp_path / "p2" / "metrics.jsonl").read_text())
        for out in ("f1", "f2"):
            assert main(["finetune", "--task", "cls",
                         "--init", str(tmp_path / "p1" / "checkpoint.mzck"),
                         "--data", str(tmp_path / "s" / "cls.jsonl"),
                         "--out", str(tmp_path / out), "--seed", "4"]) == 0
        assert ((tmp_path / "f1" / "finetuned.mzck").read_bytes()
                == (tmp_path / "f2" / "finetuned.mzck").read_bytes())
        assert ((tmp_path / "f1" / "metrics.jsonl").read_text()
                == (tmp_path / "f2" / "metrics.jsonl").read_text())
        capsys.readouterr()

    def test_synth_reruns_are_byte_identical(self, tmp_path, capsys):
        for out in ("a", "b"):
            assert main(["synth", "--seed", "5", "--out", str(tmp_path / out),
                         "--articles", "8", "--span", "12"]) == 0
        for name in ("corpus.jsonl", "synth_meta.json", "span.jsonl"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())
        capsys.readouterr()

    def test_corpus_modes(self, tmp_path, capsys):
        raw = tmp_path / "raw.jsonl"
        raw.write_text('{"text": "<b>x</b> \\u8edf\\u9ad4 y https://q.zz"}\n'
                       '{"text": "dup"}\n{"text": "dup"}\n')
        assert main(["corpus", "clean", "--in", str(raw), "--out", str(tmp_path / "c.jsonl")]) == 0
        cleaned = [json.loads(l)["text"] for l in open(tmp_path / "c.jsonl")]
        assert cleaned == ["x 軟體 y", "dup", "dup"]
        assert main(["corpus", "convert", "--in", str(tmp_path / "c.jsonl"),
                     "--out", str(tmp_path / "t.jsonl")]) == 0
        converted = [json.loads(l)["text"] for l in open(tmp_path / "t.jsonl")]
        assert converted == ["x 软件 y", "dup", "dup"]
        assert main(["corpus", "dedup", "--in", str(tmp_path / "t.jsonl"),
                     "--out", str(tmp_path / "d.jsonl")]) == 0
        assert len(open(tmp_path / "d.jsonl").read().splitlines()) == 2
        capsys.readouterr()

    def test_corpus_sample_emits_windows(self, tmp_path, capsys):
        text = " ".join(str(i % 60 + 4) for i in range(300))
        raw = tmp_path / "c.jsonl"
        raw.write_text(json.dumps({"text": text}) + "\n" + json.dumps({"text": text + " 9"}) + "\n")
        assert main(["corpus", "sample", "--in", str(raw), "--out", str(tmp_path / "w.jsonl"),
                     "--seed", "3"]) == 0
        windows = [json.loads(l) for l in open(tmp_path / "w.jsonl")]
        assert len(windows) == 4  # two articles, 300 // 128 = 2 windows each
        assert all(len(w["tokens"]) == 128 for w in windows)
        capsys.readouterr()

    def test_verify_exit_codes(self, capsys):
        assert main(["verify", "--suite", "param-count"]) == 0
        assert main(["verify", "--suite", "no-such-suite"]) == 2
        capsys.readouterr()

    def test_missing_input_file_reports_error(self, tmp_path, capsys):
        code = main(["corpus", "clean", "--in", str(tmp_path / "absent.jsonl"),
                     "--out", str(tmp_path / "o.jsonl")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_strategy_name_reports_error(self, init_ckpt, task_files, tmp_path, capsys):
        code = main(["finetune", "--task", "cls", "--init", init_ckpt,
                     "--data", str(task_files["cls"]), "--out", str(tmp_path / "x"),
                     "--strategies", "kd,improvise"])
        assert code == 2
        assert "improvise" in capsys.readouterr().err
