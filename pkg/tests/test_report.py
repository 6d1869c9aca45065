"""Parameter accounting and the two report renderings."""

import pytest

import mlpmoe as m
from mlpmoe.errors import ArgumentError
from mlpmoe.report import COLUMNS


def test_toy_fixture_param_count(toy_checkpoint):
    counts = m.count_params(toy_checkpoint)
    # embed 256*64, per layer: 2 norms (64) + 4 attn (64*64) + gate/up/down
    # (3 * 256*64), final norm 64, head 256*64
    expected = 256 * 64 + 2 * (2 * 64 + 4 * 64 * 64 + 3 * 256 * 64) + 64 + 256 * 64
    assert counts.total == expected == 164160
    assert counts.nonzero == counts.total
    assert counts.added_gates == 0
    assert sorted(counts.per_layer) == [0, 1]


def test_conversion_adds_one_gain_per_branch(toy_checkpoint):
    base = m.count_params(toy_checkpoint)
    for branches in (1, 4, 16):
        counts = m.count_params(m.convert_checkpoint(toy_checkpoint, branches))
        assert counts.total == base.total + 2 * branches
        assert counts.nonzero == base.nonzero + 2 * branches
        assert counts.added_gates == 2 * branches
        for layer in (0, 1):
            assert counts.per_layer[layer] == base.per_layer[layer] + branches


def test_fade_shrinks_nonzero_only(converted_16):
    before = m.count_params(converted_16)
    faded, _ = m.fade_checkpoint(converted_16)
    after = m.count_params(faded)
    assert after.total == before.total
    assert after.nonzero < before.nonzero


def test_param_count_validation():
    with pytest.raises(ArgumentError):
        m.ParamCount(total=10, nonzero=11)


def _result(ppl, seconds):
    return m.EvalResult(proxy_ppl=ppl, token_count=4096, wall_clock_seconds=seconds, tokens_generated=64)


def test_emit_report_columns_and_rounding():
    report = m.emit_report(
        [
            ("Dense", m.ParamCount(1000, 1000), _result(1.083266, 0.1234567)),
            ("Branches-16", m.ParamCount(1032, 800), _result(1.083811, 0.5555555)),
        ]
    )
    assert report["columns"] == list(COLUMNS)
    assert report["columns"][3] == "Proxy PPL ↓"
    assert report["columns"][4] == "Gen Time (s) ↓"
    first, second = report["rows"]
    assert first["Variant"] == "Dense"
    assert first["Total Params"] == 1000
    assert first["Proxy PPL ↓"] == 1.0833
    assert first["Gen Time (s) ↓"] == 0.123
    assert second["Non-zero Params"] == 800
    assert second["Proxy PPL ↓"] == 1.0838
    assert second["Gen Time (s) ↓"] == 0.556


def test_text_and_json_carry_identical_numbers():
    report = m.emit_report(
        [
            ("Dense", m.ParamCount(164160, 164160), _result(260.951222, 0.0405)),
            ("Faded", m.ParamCount(164192, 136000), _result(261.22288, 0.1299)),
        ]
    )
    table = m.render_table(report)
    lines = table.strip().splitlines()
    assert lines[0].split()[0] == "Variant"
    for row, line in zip(report["rows"], lines[2:]):
        cells = line.split()
        assert cells[0] == row["Variant"]
        assert int(cells[1]) == row["Total Params"]
        assert int(cells[2]) == row["Non-zero Params"]
        assert float(cells[3]) == row["Proxy PPL ↓"]
        assert float(cells[4]) == row["Gen Time (s) ↓"]


def test_single_row_table_shape():
    report = m.emit_report([("Dense", m.ParamCount(10, 10), _result(2.0, 0.01))])
    lines = m.render_table(report).strip().splitlines()
    assert len(lines) == 3  # header, rule, one row


def test_empty_report_rejected():
    with pytest.raises(ArgumentError):
        m.emit_report([])
