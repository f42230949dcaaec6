import math

import numpy as np
import pytest
from scipy import integrate

from posetmc.poset import BinaryState, all_states, flip
from posetmc.targets import (DatasetError, FieldSpec, IsingModel, TabularTarget, VariableSelectionTarget,
                             build_field, crime_dataset_path, lattice_neighbors, load_crime_csv)


def ising_by_edges(model, x):
    """Independent evaluation: explicit double loop over lattice sites."""
    eta = model.eta
    s = float(np.dot(model.alpha, x.bits))
    for r in range(eta):
        for c in range(eta):
            i = r * eta + c
            if c + 1 < eta:
                s += model.lam * x.bits[i] * x.bits[i + 1]
            if r + 1 < eta:
                s += model.lam * x.bits[i] * x.bits[i + eta]
    return s


def test_ising_examples():
    assert IsingModel(1, 0.5, np.array([0.3])).log_mass(BinaryState([1])) == pytest.approx(0.3)
    m = IsingModel(2, 0.5, np.zeros(4))
    assert m.log_mass(BinaryState([1, 1, 1, 1])) == pytest.approx(2.0)
    assert m.log_mass(BinaryState([1, -1, -1, 1])) == pytest.approx(-2.0)
    assert m.log_ratio(BinaryState([1, 1, 1, 1]), 0) == pytest.approx(-2.0)


@pytest.mark.parametrize("eta", [2, 3, 5, 8])
def test_edge_count_and_neighbours(eta):
    m = IsingModel(eta, 0.5, np.zeros(eta * eta))
    assert len(m.edges()) == 2 * eta * (eta - 1)
    nbr, deg = lattice_neighbors(eta)
    assert deg.sum() == 2 * len(m.edges())


def test_ising_matches_edge_enumeration(rng):
    m = IsingModel(4, 0.7, rng.normal(size=16))
    for _ in range(50):
        x = BinaryState(rng.choice([-1, 1], size=16))
        assert m.log_mass(x) == pytest.approx(ising_by_edges(m, x), abs=1e-12)


def test_log_ratio_consistency_random_triples(rng):
    models = [IsingModel(3, 0.5, build_field(FieldSpec(mu=1.0), 3)),
              IsingModel(4, 1.3, rng.normal(size=16), periodic=True),
              TabularTarget(rng.uniform(-3, 3, 64))]
    for t in range(200):
        m = models[t % 3]
        x = BinaryState(rng.choice([-1, 1], size=m.n))
        i = int(rng.integers(m.n))
        assert abs(m.log_ratio(x, i) - (m.log_mass(flip(x, i)) - m.log_mass(x))) < 1e-10
        assert m.log_ratio(x, i) + m.log_ratio(flip(x, i), i) == pytest.approx(0.0, abs=1e-12)


def test_decoupled_limit():
    alpha = np.array([0.2, -0.4, 1.0, 0.0])
    m = IsingModel(2, 1e-300, alpha)
    x = BinaryState([1, -1, -1, 1])
    for i in range(4):
        assert m.log_ratio(x, i) == pytest.approx(-2 * x.bits[i] * alpha[i])


def test_ising_global_flip_symmetry():
    m = IsingModel(2, 0.5, np.zeros(4))
    for x in all_states(4):
        assert m.log_mass(x) == m.log_mass(-x)


def test_ising_rejects_bad_inputs():
    with pytest.raises(ValueError):
        IsingModel(2, -0.5, np.zeros(4))
    with pytest.raises(ValueError):
        IsingModel(2, 0.5, np.zeros(5))
    with pytest.raises(ValueError):
        IsingModel(2, 0.5, np.zeros(4)).log_mass(BinaryState([1, 1, 1]))


def test_build_field_structure():
    a = build_field(FieldSpec(mu=1.0, ell=25, seed=3), 50).reshape(50, 50)
    assert np.all((a[:, :25] > -1.1) & (a[:, :25] < -0.9))
    assert np.all((a[:, 25:] > 0.9) & (a[:, 25:] < 1.1))
    assert np.array_equal(a.ravel(), build_field(FieldSpec(mu=1.0, ell=25, seed=3), 50))
    assert not np.array_equal(a.ravel(), build_field(FieldSpec(mu=1.0, ell=25, seed=4), 50))
    assert np.all(build_field(FieldSpec(mu=0.0, noise_half_width=0.0), 6) == 0.0)
    # default split is floor(eta / 2)
    b = build_field(FieldSpec(mu=2.0, noise_half_width=0.0), 5).reshape(5, 5)
    assert np.all(b[:, :2] == -2.0) and np.all(b[:, 2:] == 2.0)


def test_build_field_rejects_bad_split():
    with pytest.raises(ValueError):
        build_field(FieldSpec(ell=0), 4)
    with pytest.raises(ValueError):
        build_field(FieldSpec(ell=5), 4)


# ----------------------------------------------------------- variable selection


def _synthetic(seed=0, n_obs=9, p=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_obs, p))
    y = 1.0 + X @ np.array([0.8, 0.0, -0.5]) + rng.normal(size=n_obs)
    return X, y


def marginal_by_quadrature(Z, y):
    """log of  int int  (1/sigma) N(y; Z beta, sigma^2 I) dbeta dsigma.

    The coefficient integral uses a tensor Gauss-Hermite rule in whitened
    coordinates (exact for the Gaussian-in-beta integrand up to rounding);
    the scale integral is adaptive quadrature in log sigma.
    """
    n, d = Z.shape
    bhat = np.linalg.lstsq(Z, y, rcond=None)[0]
    L = np.linalg.cholesky(np.linalg.inv(Z.T @ Z))
    nodes, weights = np.polynomial.hermite.hermgauss(3)
    grid = np.array(np.meshgrid(*[nodes] * d, indexing="ij")).reshape(d, -1).T
    wgt = np.prod(np.array(np.meshgrid(*[weights] * d, indexing="ij")).reshape(d, -1).T, axis=1)
    ref = None

    def inner(log_s):
        s = math.exp(log_s)
        betas = bhat + (math.sqrt(2) * s * grid) @ L.T
        rss = np.sum((y[None, :] - betas @ Z.T) ** 2, axis=1)
        loglik = -0.5 * n * math.log(2 * math.pi * s * s) - rss / (2 * s * s)
        # change of variables beta = bhat + sqrt(2) s L z  with Gauss-Hermite weight exp(-|z|^2)
        jac = d * math.log(math.sqrt(2) * s) + float(np.sum(np.log(np.diag(L))))
        return np.sum(wgt * np.exp(loglik + np.sum(grid ** 2, axis=1) + jac - ref))

    rss_hat = float(np.sum((y - Z @ bhat) ** 2))
    ref = -0.5 * n * math.log(2 * math.pi * rss_hat / n) - n / 2
    val, _ = integrate.quad(inner, -8, 6, epsabs=0, epsrel=1e-12, limit=400)
    return math.log(val) + ref


def test_vs_marginal_matches_quadrature():
    X, y = _synthetic()
    t = VariableSelectionTarget(X, y, "uniform")
    Xs = t.design
    closed, quad = [], []
    for x in all_states(3):
        cols = np.flatnonzero(x.bits > 0)
        Z = np.column_stack([np.ones(len(y)), Xs[:, cols]])
        closed.append(t.log_mass(x))
        quad.append(marginal_by_quadrature(Z, y))
    closed, quad = np.array(closed), np.array(quad)
    assert np.max(np.abs((closed - closed[0]) - (quad - quad[0]))) < 1e-6


def test_vs_null_ratio_and_rank_deficiency():
    X, y = _synthetic()
    t = VariableSelectionTarget(X, y)
    x0 = BinaryState([-1, -1, -1])
    assert t.log_mass(x0) - t.log_mass(x0) == 0.0
    dup = np.column_stack([X, X[:, 0]])
    t2 = VariableSelectionTarget(dup, y, standardize=True)
    assert t2.log_mass(BinaryState([1, -1, -1, 1])) == -np.inf
    assert np.isfinite(t2.log_mass(BinaryState([1, -1, -1, -1])))


def test_vs_validation():
    X, y = _synthetic()
    y_bad = y.copy()
    y_bad[2] = np.nan
    with pytest.raises(DatasetError):
        VariableSelectionTarget(X, y_bad)
    with pytest.raises(DatasetError):
        VariableSelectionTarget(X[:4], y[:4])


def test_vs_design_is_standardised():
    X, y = _synthetic()
    t = VariableSelectionTarget(X * 10 + 3, y)
    assert np.allclose(t.design.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(t.design.std(axis=0), 1, atol=1e-12)


def test_lindley_prior_penalises_size():
    X, y = _synthetic()
    u = VariableSelectionTarget(X, y, "uniform")
    li = VariableSelectionTarget(X, y, "lindley")
    x = BinaryState([1, 1, -1])
    expect = -0.5 * (math.log(2 * math.pi) + math.log(len(y))) * 2
    assert li.log_mass(x) - u.log_mass(x) == pytest.approx(expect)


def test_crime_dataset_loads():
    t = load_crime_csv()
    assert t.p == 15 and t.n_obs == 47
    assert t.log_mass_table().size == 2 ** 15
    assert np.all(np.isfinite(t.log_mass_table()))
    raw = load_crime_csv(log_transform=False)
    assert not np.allclose(raw.response, t.response)


def _write(tmp_path, rows, header=None):
    header = header or ",".join(f"c{j}" for j in range(16))
    p = tmp_path / "d.csv"
    p.write_text("\n".join([header] + rows) + "\n")
    return p


def test_crime_loader_errors(tmp_path):
    rng = np.random.default_rng(0)
    good = [",".join(f"{v:.4f}" for v in rng.uniform(1, 2, 16)) for _ in range(20)]
    assert load_crime_csv(_write(tmp_path, good)).p == 15
    with pytest.raises(DatasetError, match="too few"):
        load_crime_csv(_write(tmp_path, good[:15]))
    with pytest.raises(DatasetError, match="too few"):
        load_crime_csv(_write(tmp_path, []))
    with pytest.raises(DatasetError, match="columns"):
        load_crime_csv(_write(tmp_path, good, header="a,b,c"))
    bad = list(good)
    bad[3] = bad[3].replace(bad[3].split(",")[4], "abc", 1)
    with pytest.raises(DatasetError, match=":5: non-numeric"):
        load_crime_csv(_write(tmp_path, bad))
    short = list(good)
    short[0] = ",".join(short[0].split(",")[:10])
    with pytest.raises(DatasetError, match=":2: expected 16"):
        load_crime_csv(_write(tmp_path, short))
    with pytest.raises(DatasetError, match="not found"):
        load_crime_csv(tmp_path / "missing.csv")
    assert crime_dataset_path().exists()


def test_tabular_target_round_trip(rng):
    t = TabularTarget(rng.uniform(-3, 3, 2 ** 6))
    assert abs(t.normalized().sum() - 1.0) < 1e-12
    m = np.zeros(8)
    m[3] = 2.0
    tt = TabularTarget.from_masses(m)
    assert tt.log_mass(BinaryState.from_code(3, 3)) == pytest.approx(math.log(2.0))
    assert tt.log_mass(BinaryState.from_code(0, 3)) == -np.inf
    with pytest.raises(ValueError):
        TabularTarget.from_masses(np.zeros(8))
    with pytest.raises(ValueError):
        TabularTarget.from_masses(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        TabularTarget(np.zeros(2 ** 15))
