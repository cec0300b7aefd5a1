"""Shared builders for randomized network instances."""
import numpy as np
import pytest

from mcris import ReflectionState, ScatteringMatrix, Terminations


def rand_complex(rng, *shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def random_network(rng, n_t, m, n_r, coupling_scale=0.05, link_scale=0.1,
                   unilateral=False):
    """Dense random scattering matrix, scaled to keep feedback loops stable."""
    z = np.zeros
    return ScatteringMatrix(
        s_tt=rand_complex(rng, n_t, n_t, scale=link_scale),
        s_ta=z((n_t, m)) if unilateral else rand_complex(rng, n_t, m, scale=link_scale),
        s_tr=z((n_t, n_r)) if unilateral else rand_complex(rng, n_t, n_r, scale=link_scale),
        s_at=rand_complex(rng, m, n_t, scale=link_scale),
        s_aa=rand_complex(rng, m, m, scale=coupling_scale),
        s_ar=z((m, n_r)) if unilateral else rand_complex(rng, m, n_r, scale=link_scale),
        s_rt=rand_complex(rng, n_r, n_t, scale=link_scale),
        s_ra=rand_complex(rng, n_r, m, scale=link_scale),
        s_rr=rand_complex(rng, n_r, n_r, scale=link_scale),
    )


def random_state(rng, m, insertion_loss=0.9, gamma_max=10.0, max_mag=3.0):
    """Feasible reflection state with magnitudes in [1, max_mag]."""
    mags = rng.uniform(1.0, max_mag, m)
    return ReflectionState(mags / insertion_loss ** 2, rng.uniform(0, 2 * np.pi, m),
                           insertion_loss, gamma_max)


def random_terminations(rng, n_t, n_r, mag=0.5):
    return Terminations(
        mag * rng.uniform(0.2, 1.0, n_t) * np.exp(1j * rng.uniform(0, 2 * np.pi, n_t)),
        mag * rng.uniform(0.2, 1.0, n_r) * np.exp(1j * rng.uniform(0, 2 * np.pi, n_r)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
