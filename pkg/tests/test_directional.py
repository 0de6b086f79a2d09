import numpy as np
import pytest
from scipy import stats as scipy_stats

from fibrescan import (
    FisherDirection,
    RandomStream,
    SchladitzDirection,
    SphereGrid,
    UniformDirection,
    WatsonDirection,
    model_from_spec,
    sphere_integrate,
)
from fibrescan.geometry import SphereCells

MODELS = [
    UniformDirection(),
    FisherDirection((0, 0, 1), 2.0),
    FisherDirection((1, 1, 1), 10.0),
    WatsonDirection((0, 0, 1), 2.0),
    SchladitzDirection(2.0),
    SchladitzDirection(0.5, (0, 1, 0)),
]

FINE_GRID = SphereGrid.equal_area(512)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: repr(m.spec()))
def test_density_integrates_to_one(model):
    mass = sphere_integrate(model.density, FINE_GRID)
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_uniform_density_value():
    assert UniformDirection().density([0.0, 0.0, 1.0]) == pytest.approx(1 / (4 * np.pi))


def test_schladitz_beta_one_is_uniform():
    model = SchladitzDirection(1.0)
    dirs = np.array([[0, 0, 1.0], [1.0, 0, 0], [0.6, 0, 0.8]])
    assert np.allclose(model.density(dirs), 1 / (4 * np.pi))


def test_fisher_density_at_mean():
    # closed form kappa e^kappa / (4 pi sinh kappa) at the mean direction
    model = FisherDirection((0, 0, 1), 2.0)
    expected = 2.0 * np.exp(2.0) / (4 * np.pi * np.sinh(2.0))
    assert expected == pytest.approx(0.3242487084376736, abs=1e-12)
    assert model.density([0.0, 0.0, 1.0]) == pytest.approx(expected, rel=1e-12)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        FisherDirection((0, 0, 1), 0.0)
    with pytest.raises(ValueError):
        WatsonDirection((0, 0, 1), -1.0)
    with pytest.raises(ValueError):
        SchladitzDirection(0.0)


class TestSampling:
    @pytest.mark.parametrize("model", MODELS, ids=lambda m: repr(m.spec()))
    def test_unit_norm(self, model):
        out = model.sample(2000, RandomStream(1))
        assert np.all(np.abs(np.sum(out * out, axis=1) - 1.0) <= 1e-12)

    def test_uniform_mean_vector_small(self):
        out = UniformDirection().sample(100_000, RandomStream(2))
        assert np.linalg.norm(out.mean(axis=0)) < 0.02

    def test_fisher_concentration(self):
        model = FisherDirection((0, 0, 1), 50.0)
        out = model.sample(100_000, RandomStream(3))
        assert np.mean(out[:, 2] > 0.9) >= 0.99

    def test_reproducible_streams(self):
        model = WatsonDirection((0, 0, 1), 2.0)
        a = model.sample(100, RandomStream(5, (1, 2)))
        b = model.sample(100, RandomStream(5, (1, 2)))
        c = model.sample(100, RandomStream(5, (1, 3)))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


def _chi2_pvalue(model, samples, n_cells=100):
    cells = SphereCells.with_cells(n_cells)
    masses = cells.masses(model.density)
    counts = np.bincount(cells.assign(samples), minlength=cells.n_cells)
    expected = masses * len(samples)
    # merge low-expectation cells into one bin to keep the test valid
    small = expected < 5
    obs = np.append(counts[~small], counts[small].sum())
    exp = np.append(expected[~small], expected[small].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    exp *= obs.sum() / exp.sum()
    return scipy_stats.chisquare(obs, exp).pvalue


@pytest.mark.parametrize("model", MODELS, ids=lambda m: repr(m.spec()))
def test_goodness_of_fit(model):
    samples = model.sample(100_000, RandomStream(11))
    assert _chi2_pvalue(model, samples) > 0.001


def test_uniform_rotation_invariance():
    samples = UniformDirection().sample(100_000, RandomStream(13))
    # rotate the binning (equivalently the samples) and re-test uniformity
    angle = 0.7
    rot = np.array([
        [np.cos(angle), -np.sin(angle), 0.0],
        [np.sin(angle), np.cos(angle), 0.0],
        [0.0, 0.0, 1.0],
    ])
    tilt = np.array([
        [np.cos(0.4), 0.0, np.sin(0.4)],
        [0.0, 1.0, 0.0],
        [-np.sin(0.4), 0.0, np.cos(0.4)],
    ])
    rotated = samples @ (tilt @ rot).T
    assert _chi2_pvalue(UniformDirection(), rotated) > 0.001


class TestEntropy:
    def test_uniform_analytic(self):
        assert UniformDirection().entropy() == pytest.approx(np.log(4 * np.pi), abs=1e-12)

    def test_uniform_quadrature_route(self):
        val = -sphere_integrate(
            lambda x: UniformDirection().density(x) * np.log(UniformDirection().density(x)),
            FINE_GRID,
        )
        assert val == pytest.approx(np.log(4 * np.pi), abs=1e-6)

    # oracle values computed by independent high-resolution quadrature of
    # the closed-form densities
    @pytest.mark.parametrize(
        "model, expected",
        [
            (FisherDirection((0, 0, 1), 2.0), 2.051614998),
            (FisherDirection((0, 0, 1), 3.0), 1.721873478),
            (FisherDirection((0, 0, 1), 10.0), 0.5352919301),
            (SchladitzDirection(2.0), 2.35524263),
            (WatsonDirection((0, 0, 1), 2.0), 2.329042215),
        ],
    )
    def test_oracle_values(self, model, expected):
        assert model.entropy(FINE_GRID) == pytest.approx(expected, abs=2e-4)

    def test_uniform_is_maximal(self):
        u = UniformDirection().entropy(FINE_GRID)
        for model in MODELS[1:]:
            assert model.entropy(FINE_GRID) < u

    def test_entropy_independent_of_mean_direction(self):
        a = FisherDirection((0, 0, 1), 5.0).entropy(FINE_GRID)
        b = FisherDirection((1, 2, -1), 5.0).entropy(FINE_GRID)
        assert a == pytest.approx(b, abs=5e-4)


class TestModelFromSpec:
    def test_round_trip(self):
        for model in MODELS:
            clone = model_from_spec(model.spec())
            dirs = model.sample(50, RandomStream(17))
            assert np.allclose(clone.density(dirs), model.density(dirs))

    def test_string_shorthand(self):
        assert isinstance(model_from_spec("uniform"), UniformDirection)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            model_from_spec({"family": "bingham"})

    def test_missing_parameter(self):
        with pytest.raises(KeyError):
            model_from_spec({"family": "fisher"})
