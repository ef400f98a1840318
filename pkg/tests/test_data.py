import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from qkdad import data, deep_svdd as ds, modelio, sim, svdd
from qkdad.errors import EmptyDataError, FormatError, ParseError, ShapeError

GOLDEN_FIELDS = [
    "gate_timing", "pc_setting_1", "pc_setting_2", "pc_setting_3", "pc_setting_4",
    "sifted_key_count", "signal_decoy_detection_ratio", "detection_efficiency_signal",
    "detection_efficiency_decoy", "detection_efficiency_vacuum", "qber_basis_H",
    "qber_basis_V", "qber_basis_D", "qber_basis_A", "qber_overall", "privacy_amp_factor",
]


# -- featurisation -------------------------------------------------------------------------

def test_record_featurization_shape_and_order():
    rec = sim.gen_config_normal(1, sim.SimProfile())[0]
    d = data.featurize_records([rec])
    assert d.features.shape == (1, data.RECORD_WIDTH)
    assert list(data.RECORD_FIELDS) == GOLDEN_FIELDS
    for j, name in enumerate(GOLDEN_FIELDS[5:], start=5):
        assert d.features[0, j] == getattr(rec, name)
    assert d.features[0, 0] == rec.gate_timing
    assert tuple(d.features[0, 1:5]) == rec.pc_settings


def test_window_featurization_copies():
    w = sim.gen_timestamps_normal(10, 400, sim.SimProfile())
    d = data.featurize_windows(w)
    assert d.features.shape == (10, 400)
    np.testing.assert_array_equal(d.features, w)
    d.features[0, 0] = -1.0
    assert w[0, 0] != -1.0


def test_window_dimensions_match_detection_counts():
    for size in data.WINDOW_SIZES:
        assert data.featurize_windows(sim.gen_timestamps_normal(2, size)).dim == size
    assert data.WINDOW_SIZES == (100, 225, 400)


def test_mixed_window_sizes_rejected():
    with pytest.raises(ShapeError):
        data.featurize_windows([np.zeros(100), np.zeros(225)])
    with pytest.raises(EmptyDataError):
        data.featurize_records([])


# -- normaliser --------------------------------------------------------------------------

def test_minmax_examples():
    st_ = data.fit_normalizer(np.array([[0.0, 7.0], [50.0, 7.0], [100.0, 7.0]]))
    z = data.apply_normalizer(st_, np.array([[0.0, 7.0], [50.0, 7.0], [100.0, 7.0], [150.0, 3.0]]))
    np.testing.assert_array_equal(z[:, 0], [0.0, 0.5, 1.0, 1.5])
    np.testing.assert_array_equal(z[:, 1], [0.5] * 4)


def test_zscore_floor():
    st_ = data.fit_normalizer(np.array([[1.0, 2.0], [3.0, 2.0]]), "zscore")
    z = data.apply_normalizer(st_, np.array([[3.0, 2.0]]))
    assert z[0, 0] == 1.0 and z[0, 1] == 0.0


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 5)),
                  elements=st.floats(-1e6, 1e6)),
       st.sampled_from(["minmax", "zscore"]))
def test_normalizer_inverts(x, mode):
    s = data.fit_normalizer(x, mode)
    back = data.invert_normalizer(s, data.apply_normalizer(s, x))
    span = np.ptp(x, axis=0)
    keep = span > 0
    np.testing.assert_allclose(back[:, keep], x[:, keep], rtol=1e-12, atol=1e-12 * np.abs(x).max())


def test_normalizer_ignores_test_rows(rng):
    train = rng.normal(size=(50, 3))
    before = data.fit_normalizer(train)
    test = rng.normal(size=(50, 3)) * 100
    _ = data.apply_normalizer(before, test)
    after = data.fit_normalizer(train)
    np.testing.assert_array_equal(before.shift, after.shift)
    np.testing.assert_array_equal(before.scale, after.scale)


# -- mixing --------------------------------------------------------------------------------

def _ds(n, d=3, v=0.0):
    return data.Dataset(np.full((n, d), v))


def test_mix_balanced():
    m = data.mix_test_set(_ds(500), _ds(500, v=1.0), 3)
    assert len(m) == 1000 and m.labels.sum() == 500
    np.testing.assert_array_equal(m.features[:, 0], m.labels.astype(float))


def test_mix_truncates_to_smaller_class():
    m = data.mix_test_set(_ds(700), _ds(500, v=1.0), 3)
    assert len(m) == 1000 and m.labels.sum() == 500


def test_mix_deterministic_and_checks_dims():
    a = data.Dataset(np.arange(20.0).reshape(10, 2))
    b = data.Dataset(-np.arange(20.0).reshape(10, 2))
    m1, m2 = data.mix_test_set(a, b, 9), data.mix_test_set(a, b, 9)
    np.testing.assert_array_equal(m1.features, m2.features)
    assert not np.array_equal(m1.features, data.mix_test_set(a, b, 10).features)
    with pytest.raises(ShapeError):
        data.mix_test_set(_ds(3, 2), _ds(3, 4), 0)


# -- dataset files -------------------------------------------------------------------------

def test_dataset_round_trip_is_bitwise(tmp_path, rng):
    x = np.r_[rng.normal(size=(20, 5)) * 10.0 ** rng.integers(-300, 300, size=(20, 5)),
              [[0.1, 1 / 3, -0.0, 5e-324, 1.7976931348623157e308]]]
    d = data.Dataset(x, rng.integers(0, 2, size=21), "unit test")
    path = tmp_path / "d.csv"
    data.write_dataset(path, d)
    back = data.read_dataset(path)
    assert back.features.tobytes() == x.tobytes()
    np.testing.assert_array_equal(back.labels, d.labels)
    assert back.provenance == "unit test"


def test_featurized_records_round_trip(tmp_path):
    d = data.featurize_records(sim.gen_config_normal(30), "records")
    data.write_dataset(tmp_path / "r.csv", d)
    assert data.read_dataset(tmp_path / "r.csv").features.tobytes() == d.features.tobytes()


def test_unlabelled_dataset(tmp_path):
    d = data.parse_dataset("# p\nf0,f1\n1,2\n3,4\n")
    assert not d.labelled and d.features.shape == (2, 2)


@pytest.mark.parametrize("text,line", [
    ("# p\nf0,f1\n1,2\n3\n", 4),
    ("# p\nf0,f1\n1,x\n", 3),
    ("# p\nf0,g1\n1,2\n", 2),
    ("# p\nf0,label\n1,2\n", 3),
    ("# p\n", 2),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as err:
        data.parse_dataset(text)
    assert err.value.line == line


def test_invalid_utf8(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_bytes(b"# p\nf0\n1\n\xff\n")
    with pytest.raises(ParseError) as err:
        data.read_dataset(p)
    assert err.value.line == 4


# -- model files ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_models():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(60, 4))
    deep = ds.train(x, ds.TrainConfig(epochs=3, seed=2), "records")
    base = svdd.svdd_fit(x, 0.2, "rbf", iters=100, normalize=True)
    return x, deep, base


def test_model_round_trip(tmp_path, small_models):
    x, deep, base = small_models
    for m, score in ((deep, ds.score_batch), (base, svdd.svdd_score)):
        path = tmp_path / "m.qkd"
        modelio.write_model(path, m)
        back = modelio.read_model(path)
        assert modelio.dumps_model(back) == modelio.dumps_model(m)
        assert score(back, x).tobytes() == score(m, x).tobytes()


def test_model_header_fields(small_models):
    _, deep, _ = small_models
    text = modelio.dumps_model(deep)
    head, body = text.split("\n", 1)
    obj = json.loads(body)
    assert head == "QKDAD1"
    assert obj["format_version"] == 1 and obj["kind"] == "deep"
    assert obj["architecture"] == list(deep.params.layer_dims)


def test_truncated_model(small_models):
    text = modelio.dumps_model(small_models[1])
    for cut in (0, 3, 7, len(text) // 2, len(text) - 2):
        with pytest.raises(FormatError):
            modelio.loads_model(text[:cut])


def test_model_rejections(small_models):
    text = modelio.dumps_model(small_models[1])
    obj = json.loads(text.split("\n", 1)[1])
    with pytest.raises(FormatError):
        modelio.loads_model("QKDAD2\n" + text.split("\n", 1)[1])
    for key, val in (("format_version", 2), ("kind", "tree")):
        bad = dict(obj, **{key: val})
        with pytest.raises(FormatError):
            modelio.loads_model("QKDAD1\n" + json.dumps(bad))
    with pytest.raises(FormatError):
        modelio.loads_model(b"QKDAD1\n\xff\xfe")
