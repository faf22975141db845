import numpy as np
import pytest

from increlora.numkernel import ShapeError
from increlora.scoring import ImportanceState, raw_score, top_h


def test_raw_score_value():
    assert raw_score(np.array([[1.0, -2.0]]), np.array([[3.0, 1.0]])) == 2.5


def test_raw_score_shape_mismatch():
    with pytest.raises(ShapeError):
        raw_score(np.ones((2, 2)), np.ones((2, 3)))


def test_cold_start_worked_value():
    st = ImportanceState(1)
    st.update_all([1.0])
    assert st.sensitivity[0] == pytest.approx(0.15, abs=1e-15)
    assert st.uncertainty[0] == pytest.approx(0.1275, abs=1e-15)
    assert st.score[0] == pytest.approx(0.019125, abs=1e-12)


def test_negative_score_rejected():
    with pytest.raises(ValueError):
        ImportanceState(2).update(0, -1.0)


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        ImportanceState(2).update_all([1.0])


def test_top_h_ties_prefer_lower_index():
    assert top_h([1.0, 3.0, 3.0, 3.0], 2) == [1, 2]
    assert top_h([0.0, 0.0, 0.0], 1) == [0]


def test_top_h_range():
    with pytest.raises(ValueError):
        top_h([1.0, 2.0], 0)
    with pytest.raises(ValueError):
        top_h([1.0, 2.0], 3)


def test_snapshot_roundtrip():
    st = ImportanceState(3, 0.8, 0.7)
    st.update_all([0.1, 0.5, 0.2])
    back = ImportanceState.restore(st.snapshot())
    assert back.score.tobytes() == st.score.tobytes()
    assert back.step == 1 and back.beta2 == 0.7


def test_smoothing_on_constant_stream():
    st = ImportanceState(1)
    for _ in range(400):
        st.update_all([2.0])
    assert st.sensitivity[0] == pytest.approx(2.0, rel=1e-12)
    assert st.uncertainty[0] < 1e-12
