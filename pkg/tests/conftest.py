import numpy as np
import pytest

from hjb_verify.presets import get_preset
from hjb_verify.problem import AssumptionConstants, ProblemSpec


def linear_spec(dim=1, diffusion=1.0, drift=0.0, horizon=1.0, nonlinearity=None, **constants):
    """u_t - diffusion Δu + <drift, Du> + f = 0 with constant coefficients"""
    scale = np.sqrt(diffusion)
    velocity = np.broadcast_to(np.asarray(drift, dtype=float), (dim,))

    def b(x, t):
        return np.broadcast_to(velocity, x.shape).copy()

    def sigma(x, t):
        return np.broadcast_to(scale * np.eye(dim), (x.shape[0], dim, dim)).copy()

    def initial(x):
        return np.zeros(x.shape[0])

    consts = dict(c_b=float(np.max(np.abs(velocity))), c_sigma=scale * np.sqrt(dim), c_s=1.0)
    consts.update(constants)
    return ProblemSpec(space_dim=dim, p=2.0, drift=b, diffusion=sigma, initial=initial, horizon=horizon,
                       constants=AssumptionConstants(**consts), nonlinearity=nonlinearity, name="linear")


@pytest.fixture
def heat_spec():
    return linear_spec()


@pytest.fixture
def power_spec():
    return get_preset("power_model").build()


@pytest.fixture
def lq_spec():
    return get_preset("eq3_lq").build()


@pytest.fixture
def lp_spec():
    return get_preset("lp_deterministic").build()


@pytest.fixture
def briand_spec():
    return get_preset("briand_hu").build()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    monkeypatch.delenv("HJB_OUTPUT_DIR", raising=False)
    return tmp_path / "run"
