import math

import numpy as np
import pytest

from minielsa.dataset import (
    BIN_EDGES,
    BinCode,
    FEATURE_STATS,
    Dataset,
    SensorRecord,
    apply_scaler,
    bin_power,
    fit_scaler,
    load_ccpp,
    split,
    subsplit_test,
    synth_ccpp,
    write_ccpp,
)
from minielsa.errors import (
    ArgumentError,
    DegenerateFeatureError,
    EmptyDatasetError,
    ParseError,
    SchemaError,
    SizeError,
)


# --- load_ccpp ---------------------------------------------------------


def test_load_hand_written_rows(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("AT,V,AP,RH,PE\n10,40,1000,60,450\n12,42,1001,61,455\n9,39,999,58,440\n")
    ds = load_ccpp(f)
    assert len(ds) == 3
    assert [r.id for r in ds.records] == [0, 1, 2]
    assert ds.records[1].v == 42.0
    assert ds.provenance == "file"


def test_load_semicolon_and_case_insensitive(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("at;v;ap;rh;pe\n10;40;1000;60;450\n")
    ds = load_ccpp(f)
    assert len(ds) == 1 and ds.records[0].pe == 450.0


def test_load_column_order_free(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("PE,RH,AP,V,AT\n450,60,1000,40,10\n")
    r = load_ccpp(f).records[0]
    assert (r.at, r.v, r.ap, r.rh, r.pe) == (10.0, 40.0, 1000.0, 60.0, 450.0)


def test_load_missing_column_names_it(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("AT,V,AP,RH\n10,40,1000,60\n")
    with pytest.raises(SchemaError, match="PE"):
        load_ccpp(f)


def test_load_non_numeric_cell_reports_row(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("AT,V,AP,RH,PE\n10,40,1000,60,450\n10,oops,1000,60,450\n")
    with pytest.raises(ParseError, match="row 3"):
        load_ccpp(f)


def test_load_header_only_is_empty(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("AT,V,AP,RH,PE\n")
    with pytest.raises(EmptyDatasetError):
        load_ccpp(f)


def test_export_round_trip(tmp_path):
    ds = synth_ccpp(25, seed=3)
    out = tmp_path / "out.csv"
    write_ccpp(ds, out)
    back = load_ccpp(out)
    assert len(back) == 25
    np.testing.assert_array_equal(back.features(), ds.features())
    np.testing.assert_array_equal(back.targets(), ds.targets())


# --- synth_ccpp --------------------------------------------------------


def test_synth_deterministic():
    a = synth_ccpp(1, seed=7)
    b = synth_ccpp(1, seed=7)
    assert a.records[0] == b.records[0]
    assert a.provenance == "synthetic(seed=7)"


def test_synth_respects_published_bounds():
    ds = synth_ccpp(9568, seed=1)
    X = ds.features()
    for col, name in enumerate(("AT", "V", "AP", "RH")):
        lo, hi, _ = FEATURE_STATS[name]
        assert X[:, col].min() >= lo and X[:, col].max() <= hi
    # the spot check from the published table
    assert X[:, 2].min() >= 992.89 and X[:, 2].max() <= 1033.30
    pe = ds.targets()
    assert pe.min() >= 420.26 and pe.max() <= 495.76


def test_synth_rh_std_near_published():
    ds = synth_ccpp(10000, seed=3)
    rh_std = ds.features()[:, 3].std()
    assert abs(rh_std - 14.6) <= 0.2 * 14.6


def test_synth_zero_records_rejected():
    with pytest.raises(EmptyDatasetError):
        synth_ccpp(0, seed=1)


# --- split / subsplit --------------------------------------------------


def test_split_sizes_match_floor():
    ds = synth_ccpp(9568, seed=1)
    train, test = split(ds, 0.9, seed=4)
    assert len(train) == 8611 and len(test) == 957


def test_split_deterministic_disjoint_exhaustive():
    ds = synth_ccpp(200, seed=2)
    t1, s1 = split(ds, 0.9, seed=5)
    t2, s2 = split(ds, 0.9, seed=5)
    assert t1.ids().tolist() == t2.ids().tolist()
    assert s1.ids().tolist() == s2.ids().tolist()
    combined = sorted(t1.ids().tolist() + s1.ids().tolist())
    assert combined == list(range(200))


def test_split_two_records():
    ds = synth_ccpp(2, seed=9)
    train, test = split(ds, 0.5, seed=0)
    assert len(train) == 1 and len(test) == 1
    assert train.records[0].id != test.records[0].id


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.5])
def test_split_fraction_domain(fraction):
    ds = synth_ccpp(10, seed=0)
    with pytest.raises(ArgumentError):
        split(ds, fraction, seed=0)


def test_subsplit_sizes():
    ds = synth_ccpp(9568, seed=1)
    _, test = split(ds, 0.9, seed=4)
    shap_ref, validation = subsplit_test(test)
    assert len(shap_ref) == 450 and len(validation) == 507
    # split order preserved: first 450 of the test split
    assert shap_ref.ids().tolist() == test.ids().tolist()[:450]


def test_subsplit_boundary_and_error():
    ds = synth_ccpp(451, seed=1)
    a, b = subsplit_test(Dataset(ds.records, "file"))
    assert len(a) == 450 and len(b) == 1
    with pytest.raises(SizeError, match="shap_ref_size"):
        subsplit_test(Dataset(ds.records[:450], "file"))


# --- scaler ------------------------------------------------------------


def _two_point_dataset():
    return Dataset(
        (
            SensorRecord(0, 10.0, 40.0, 1000.0, 50.0, 450.0),
            SensorRecord(1, 20.0, 44.0, 1010.0, 70.0, 460.0),
        ),
        "file",
    )


def test_scaler_two_point_z_scores():
    sc = fit_scaler(_two_point_dataset())
    Z = apply_scaler(sc, _two_point_dataset())
    np.testing.assert_allclose(Z[:, 0], [-1.0, 1.0])


def test_scaler_train_stats_are_standardized():
    ds = synth_ccpp(500, seed=11)
    sc = fit_scaler(ds)
    Z = apply_scaler(sc, ds)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-9)


def test_scaler_mean_vector_maps_to_zero():
    ds = synth_ccpp(100, seed=12)
    sc = fit_scaler(ds)
    np.testing.assert_allclose(sc.transform(sc.mean[None, :]), 0.0, atol=1e-12)


def test_scaler_round_trip():
    ds = synth_ccpp(300, seed=13)
    sc = fit_scaler(ds)
    X = ds.features()
    back = sc.inverse(sc.transform(X))
    np.testing.assert_allclose(back, X, rtol=1e-9)


def test_scaler_rejects_constant_feature():
    recs = tuple(SensorRecord(i, 5.0, 40.0 + i, 1000.0 + i, 50.0 + i, 450.0) for i in range(5))
    with pytest.raises(DegenerateFeatureError, match="AT"):
        fit_scaler(Dataset(recs, "file"))


# --- bin_power ---------------------------------------------------------


@pytest.mark.parametrize(
    "pe,expected",
    [
        (430.0, BinCode.LOW),
        (439.0, BinCode.NORMAL),  # lower bound inclusive
        (457.999, BinCode.NORMAL),
        (458.0, BinCode.HIGH),
        (477.0, BinCode.SEVERE),
        (495.76, BinCode.SEVERE),
        (420.26, BinCode.LOW),
        (400.0, BinCode.LOW),    # clamps below range
        (500.0, BinCode.SEVERE),  # clamps above range
    ],
)
def test_bin_power_boundaries(pe, expected):
    assert bin_power(pe) is expected


def test_bin_power_rejects_non_finite():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(ArgumentError):
            bin_power(bad)


def test_bin_partition_exactly_one_bin():
    for pe in np.linspace(BIN_EDGES[0] - 5, BIN_EDGES[-1] + 5, 1001):
        code = bin_power(float(pe))
        assert code in (BinCode.LOW, BinCode.NORMAL, BinCode.HIGH, BinCode.SEVERE)


def test_record_rejects_non_finite():
    with pytest.raises(ArgumentError):
        SensorRecord(0, math.nan, 40.0, 1000.0, 50.0, 450.0)
