import numpy as np
import pytest

from fibrescan import (
    Cube,
    EstimatorConfig,
    RandomStream,
    UniformDirection,
    clt_normalize,
    clt_study,
    default_bandwidth,
)

UNIFORM = UniformDirection()


def _tiny_config():
    return EstimatorConfig(kernel="tricube", intensity=5.0,
                           window=Cube.at_origin(5.0),
                           subwindow=Cube.at_origin(2.0),
                           bandwidth=default_bandwidth(8.0))


def test_requires_ten_replications():
    with pytest.raises(ValueError):
        clt_study(_tiny_config(), UNIFORM, RandomStream(1), replications=5)


def test_deterministic():
    cfg = _tiny_config()
    a, _ = clt_study(cfg, UNIFORM, RandomStream(2), replications=10,
                     norm_replications=20, cov_lattice=27)
    b, _ = clt_study(cfg, UNIFORM, RandomStream(2), replications=10,
                     norm_replications=20, cov_lattice=27)
    assert np.array_equal(a, b)


def test_shared_normalization_reused():
    cfg = _tiny_config()
    norm = clt_normalize(cfg, UNIFORM, RandomStream(3), replications=30,
                         cov_lattice=27)
    stats, used = clt_study(cfg, UNIFORM, RandomStream(4), replications=10, norm=norm)
    assert used is norm
    assert np.all(np.isfinite(stats))


def test_statistics_are_centered_at_small_scale():
    # not a distributional assertion (that is the acceptance suite's job),
    # just a sanity check that the standardization is in the right ballpark
    cfg = _tiny_config()
    stats, norm = clt_study(cfg, UNIFORM, RandomStream(5), replications=20,
                            norm_replications=40, cov_lattice=27)
    assert norm.sigma > 0
    assert abs(np.mean(stats)) < 2.0
    assert 0.05 < np.var(stats, ddof=1) < 20.0
