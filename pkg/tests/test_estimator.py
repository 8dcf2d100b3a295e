import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from meshless_pricing import LRPIPricer, parameter_sets
from meshless_pricing.validation import heston_european


@pytest.fixture(scope="module")
def fitted():
    return LRPIPricer(model=parameter_sets()["test1-european"], nx=32, nz=16, y0=0.0625).fit()


def test_params_round_trip():
    est = LRPIPricer(model=parameter_sets()["test1-european"], nx=48, kernel="C4")
    params = est.get_params()
    assert params["nx"] == 48 and params["kernel"] == "C4" and params["augmentation"] == "quadratic"
    other = clone(est).set_params(nz=24)
    assert other.nz == 24 and other.nx == 48


def test_fit_predict(fitted):
    X = np.array([[9.0, 0.0625], [10.0, 0.0625], [11.0, 0.0625]])
    pred = fitted.predict(X)
    spec = parameter_sets()["test1-european"]
    ref = [heston_european(spec, s, y) for s, y in X]
    np.testing.assert_allclose(pred, ref, atol=5e-3)
    assert fitted.fit_time_ > 0 and fitted.y0_ == 0.0625
    assert fitted.n_features_in_ == 2


def test_y0_from_training_points():
    X = np.array([[10.0, 0.2], [10.0, 0.3], [10.0, 0.25]])
    est = LRPIPricer(model=parameter_sets()["test1-european"], nx=16, nz=8).fit(X)
    assert est.y0_ == pytest.approx(0.25)
    est = LRPIPricer(model=parameter_sets()["test1-european"], nx=16, nz=8).fit()
    assert est.y0_ == pytest.approx(0.16)


def test_input_validation(fitted):
    with pytest.raises(ValueError, match="two columns"):
        fitted.predict(np.ones((3, 3)))
    with pytest.raises(ValueError, match="non-negative"):
        fitted.predict([[-1.0, 0.1]])
    with pytest.raises(ValueError):
        fitted.predict([[np.nan, 0.1]])
    with pytest.raises(ValueError, match="queries"):
        fitted.predict([[100.0, 0.1]])
    with pytest.raises(NotFittedError):
        LRPIPricer(model=parameter_sets()["test1-european"]).predict([[10.0, 0.1]])
    with pytest.raises(TypeError):
        LRPIPricer(model="heston").fit()
    with pytest.raises(TypeError):
        LRPIPricer(model=parameter_sets()["test1-european"], nx=16.5).fit()
    with pytest.raises(ValueError):
        LRPIPricer(model=parameter_sets()["test1-european"], kernel="C8").fit()


def test_module_doctest():
    import doctest

    from meshless_pricing import estimator

    assert doctest.testmod(estimator).failed == 0
