import json

import numpy as np
import pytest

from relnb.classifier import predict_proba
from relnb.errors import ModelFormatError
from relnb.persist import FORMAT_VERSION, load_model, save_model


def test_round_trip_bit_for_bit(synthetic_fit, tmp_path):
    _, fitted, flat = synthetic_fit
    model = fitted.model
    save_model(model, tmp_path / "m.jsonl")
    back = load_model(tmp_path / "m.jsonl")
    X = model.matrix(flat)[:100]
    assert np.array_equal(predict_proba(model, X), predict_proba(back, X))
    assert back.names == model.names and back.classes == model.classes
    assert back.metadata["seed"] == model.metadata["seed"]
    assert [v.spec for v in back.variables] == [v.spec for v in model.variables]
    save_model(back, tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == (tmp_path / "m.jsonl").read_bytes()


def test_truncated_file_names_missing_section(synthetic_fit, tmp_path):
    _, fitted, _ = synthetic_fit
    save_model(fitted.model, tmp_path / "m.jsonl")
    lines = (tmp_path / "m.jsonl").read_text().splitlines(keepends=True)
    (tmp_path / "cut.jsonl").write_text("".join(lines[:-2]))
    with pytest.raises(ModelFormatError, match="missing section 'end'"):
        load_model(tmp_path / "cut.jsonl")
    (tmp_path / "gap.jsonl").write_text("".join(lines[:1] + lines[2:]))
    with pytest.raises(ModelFormatError, match="missing section 'variable'"):
        load_model(tmp_path / "gap.jsonl")
    (tmp_path / "empty.jsonl").write_text("")
    with pytest.raises(ModelFormatError, match="missing section 'header'"):
        load_model(tmp_path / "empty.jsonl")


def test_future_version_rejected(synthetic_fit, tmp_path):
    _, fitted, _ = synthetic_fit
    save_model(fitted.model, tmp_path / "m.jsonl")
    lines = (tmp_path / "m.jsonl").read_text().splitlines(keepends=True)
    header = json.loads(lines[0])
    header["format_version"] = FORMAT_VERSION + 1
    (tmp_path / "future.jsonl").write_text(json.dumps(header) + "\n" + "".join(lines[1:]))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(tmp_path / "future.jsonl")


def test_garbage_line(tmp_path):
    (tmp_path / "bad.jsonl").write_text("{not json\n")
    with pytest.raises(ModelFormatError, match="line 1"):
        load_model(tmp_path / "bad.jsonl")
