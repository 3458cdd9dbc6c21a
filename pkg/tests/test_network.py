import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmdnet.errors import GraphError
from kmdnet.network import (CouplingFunction, Graph, Network, center, complete_graph,
                            disagreement_lyapunov, mean_state, path_graph, random_connected_graph)

COUPLINGS = [CouplingFunction.constant(), CouplingFunction.power_decay(0.25),
             CouplingFunction.power_decay(1.0), CouplingFunction.kuramoto(1.5)]


def two_node(coupling, weight=1.0):
    return Network(Graph(2, [(0, 1, weight)]), coupling)


# ---------------------------------------------------------------- graphs

def test_graph_rejects_bad_edges():
    with pytest.raises(GraphError, match="self-loop"):
        Graph(2, [(0, 0)])
    with pytest.raises(GraphError, match="duplicate"):
        Graph(2, [(0, 1), (1, 0)])
    with pytest.raises(GraphError, match="outside"):
        Graph(2, [(0, 2)])
    with pytest.raises(GraphError, match="non-positive"):
        Graph(2, [(0, 1, 0.0)])


def test_disconnected_graph_names_assumption():
    with pytest.raises(GraphError, match="Assumption 2"):
        Graph(3, [(0, 1)])


@pytest.mark.parametrize("n,m", [(5, 4), (6, 9), (8, 10), (8, 28)])
def test_random_graph_connected_with_exact_edge_count(n, m):
    g = random_connected_graph(n, m, seed=3)
    assert len(g.edges) == m
    assert g.is_connected()
    assert random_connected_graph(n, m, seed=3).edges == g.edges


def test_random_graph_edge_count_bounds():
    with pytest.raises(GraphError):
        random_connected_graph(5, 3, seed=0)
    with pytest.raises(GraphError):
        random_connected_graph(5, 11, seed=0)


# ---------------------------------------------------------------- coupling and Laplacian

def test_constant_path_laplacian():
    net = Network(path_graph(2), CouplingFunction.constant())
    assert np.array_equal(net.laplacian_at([3.0, -7.0]), [[1.0, -1.0], [-1.0, 1.0]])


@pytest.mark.parametrize("alpha", [0.0, 0.25, 0.4, 1.0])
def test_power_decay_weight(alpha):
    net = two_node(CouplingFunction.power_decay(alpha))
    p, q = 0.3, -0.5
    assert -net.laplacian_at([p, q])[0, 1] == pytest.approx(1.0 / (1.0 + (p - q) ** 2) ** alpha)


def test_kuramoto_weight_limit():
    net = two_node(CouplingFunction.kuramoto(2.5))
    assert -net.laplacian_at([0.2, 0.2])[0, 1] == pytest.approx(2.5)
    assert -net.laplacian_at([0.2, -0.2])[0, 1] == pytest.approx(2.5 * np.sin(0.4) / 0.4)


@settings(deadline=None, max_examples=25)
@given(st.integers(2, 7), st.integers(0, 3), st.integers(0, 10_000))
def test_laplacian_rows_and_symmetry(n, k, seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(n - 1, n * (n - 1) // 2 + 1))
    net = Network(random_connected_graph(n, m, seed=seed, weight_range=(0.5, 2.0)), COUPLINGS[k])
    lap = net.laplacian_at(rng.uniform(-1, 1, n))
    assert np.abs(lap.sum(axis=1)).max() <= 1e-12
    assert np.array_equal(lap, lap.T)


@settings(deadline=None, max_examples=25)
@given(st.integers(2, 7), st.integers(0, 3), st.integers(0, 10_000))
def test_field_matches_laplacian_and_conserves_mean(n, k, seed):
    rng = np.random.default_rng(seed)
    net = Network(complete_graph(n), COUPLINGS[k], delta=float(rng.uniform(0.5, 2)))
    x = rng.uniform(-1, 1, n)
    f = net.vector_field(x)
    assert np.allclose(f, -net.laplacian_at(x) @ x, atol=1e-13)
    assert abs(f.sum()) <= 1e-12
    # on the consensus complement the augmentation term vanishes
    y = center(x)
    assert np.allclose(net.disagreement_vector_field(y), center(net.vector_field(x)), atol=1e-13)
    assert np.allclose(net.disagreement_vector_field(y), -net.disagreement_laplacian_at(y) @ y, atol=1e-13)


def test_disagreement_field_examples():
    net = two_node(CouplingFunction.power_decay(0.25))
    assert np.array_equal(net.disagreement_vector_field(np.zeros(2)), np.zeros(2))
    p = 0.3
    f = net.disagreement_vector_field([p, -p])
    assert f[0] == pytest.approx(-2 * p / (1 + 4 * p * p) ** 0.25)


def test_batched_field():
    net = Network(complete_graph(4), CouplingFunction.power_decay(0.5))
    x = np.random.default_rng(0).normal(size=(6, 4))
    assert np.allclose(net.vector_field(x), np.array([net.vector_field(r) for r in x]))


# ---------------------------------------------------------------- linearization

def test_two_node_spectrum():
    _, spec = two_node(CouplingFunction.constant()).jacobian_at_origin()
    assert spec.eigenvalues == pytest.approx([1.0, 2.0])


@pytest.mark.parametrize("gain", [0.2, 1.0, 4.0])
def test_kuramoto_spectrum(gain):
    _, spec = two_node(CouplingFunction.kuramoto(gain)).jacobian_at_origin()
    assert spec.eigenvalues == pytest.approx([1.0, 2.0 * gain])


@settings(deadline=None, max_examples=20)
@given(st.integers(2, 8), st.floats(0.3, 5.0), st.integers(0, 10_000))
def test_spectrum_consensus_first_and_orthonormal(n, delta, seed):
    m = int(np.random.default_rng(seed).integers(n - 1, n * (n - 1) // 2 + 1))
    net = Network(random_connected_graph(n, m, seed=seed, weight_range=(0.2, 3.0)),
                  CouplingFunction.power_decay(0.3), delta=delta)
    jac, spec = net.jacobian_at_origin()
    v = spec.eigenvectors
    assert spec.delta == pytest.approx(delta)
    assert np.allclose(v[:, 0], np.ones(n) / np.sqrt(n))
    assert np.allclose(v.T @ v, np.eye(n), atol=1e-12)
    assert np.allclose(-jac @ v, v * spec.eigenvalues, atol=1e-10)
    assert np.all(np.diff(spec.laplacian_eigenvalues) >= -1e-12)
    # same rates as a generic symmetric eigensolver
    assert np.allclose(np.sort(spec.eigenvalues), np.linalg.eigvalsh(-jac))


def test_spectrum_when_delta_equals_laplacian_rate():
    net = Network(complete_graph(3), CouplingFunction.constant(), delta=3.0)
    _, spec = net.jacobian_at_origin()
    assert spec.eigenvalues == pytest.approx([3.0, 3.0, 3.0])
    assert np.allclose(spec.eigenvectors[:, 0], 1 / np.sqrt(3))
    assert np.allclose(spec.eigenvectors[:, 1:].sum(axis=0), 0.0, atol=1e-12)


def test_jacobian_matches_finite_differences():
    net = Network(random_connected_graph(5, 7, seed=1, weight_range=(0.5, 1.5)),
                  CouplingFunction.kuramoto(0.7), delta=1.3)
    jac, _ = net.jacobian_at_origin()
    h = 1e-6
    fd = np.column_stack([(net.disagreement_vector_field(h * e) - net.disagreement_vector_field(-h * e))
                          / (2 * h) for e in np.eye(5)])
    assert np.allclose(jac, fd, atol=1e-8)


# ---------------------------------------------------------------- helpers

def test_mean_and_center():
    assert np.allclose(center(np.full(4, 2.5)), 0.0)
    assert np.allclose(center([1.0, -1.0]), [1.0, -1.0])
    assert mean_state([0.4, 0.0]) == pytest.approx(0.2)
    assert np.allclose(center([0.4, 0.0]), [0.2, -0.2])


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8))
def test_lyapunov_is_pairwise_disagreement(xs):
    x = np.array(xs)
    naive = 0.5 * sum((a - b) ** 2 for a in x for b in x)
    assert disagreement_lyapunov(x) == pytest.approx(naive, rel=1e-9, abs=1e-9)
