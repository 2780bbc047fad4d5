import numpy as np
import pytest

from landseg.cca import (CcaModel, build_indicator, build_linear_design,
                         build_polynomial_design, build_rbf_design,
                         canonical_variables, cca_fit, project_canonical,
                         rbf_cca, rbf_sigma)
from landseg.errors import ConfigError, DataError, NumericError


def centered(rng, n, p):
    x = rng.normal(size=(n, p))
    return x - x.mean(0)


# ---------------------------------------------------------------------------
# rbf_sigma

def test_rbf_sigma_hand_case():
    y = np.array([[0.0], [2.0]])
    assert np.isclose(rbf_sigma(y, y), np.sqrt((0 + 4 + 4 + 0) / 4))


def test_rbf_sigma_degenerate_error():
    with pytest.raises(NumericError, match="degenerate"):
        rbf_sigma(np.zeros((1, 2)), np.zeros((1, 2)))


def test_rbf_sigma_scale_homogeneity():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(12, 3))
    c = y[:4]
    assert np.isclose(rbf_sigma(3.5 * y, 3.5 * c), 3.5 * rbf_sigma(y, c))


# ---------------------------------------------------------------------------
# designs

def test_rbf_design_values_before_mean_removal():
    y = np.array([[0.0, 0.0], [1.0, 1.0], [3.0, 0.0]])
    sigma = 1.0
    design = build_rbf_design(y, [0, 1], sigma)
    col_means = np.exp(-((y[:, None] - y[None, :2]) ** 2).sum(-1) / 2.0).mean(axis=0)
    raw = design.phi_full + col_means
    assert np.isclose(raw[0, 0], 1.0)  # y_0 == center_0 -> exp(0)
    # distance sqrt(2) = sigma*sqrt(2) -> exp(-1)
    assert np.isclose(raw[0, 1], np.exp(-1.0))
    assert np.all(raw > 0) and np.all(raw <= 1 + 1e-12)


def test_rbf_design_columns_sum_to_zero():
    rng = np.random.default_rng(1)
    y = rng.normal(size=(20, 3))
    design = build_rbf_design(y, np.arange(5), rbf_sigma(y, y[:5]))
    assert np.allclose(design.phi_full.sum(axis=0), 0.0, atol=1e-10)
    assert np.array_equal(design.phi, design.phi_full[:5])


def test_rbf_design_translation_invariance():
    rng = np.random.default_rng(2)
    y = rng.normal(size=(15, 3))
    shift = np.array([5.0, -3.0, 11.0])
    d1 = build_rbf_design(y, np.arange(4), 2.0)
    d2 = build_rbf_design(y + shift, np.arange(4), 2.0)
    assert np.allclose(d1.phi_full, d2.phi_full, atol=1e-12)


def test_linear_design_of_zero_mean_is_identity():
    rng = np.random.default_rng(3)
    y = centered(rng, 10, 3)
    assert np.allclose(build_linear_design(y), y, atol=1e-12)


def test_polynomial_design_column_count():
    rng = np.random.default_rng(4)
    y = rng.normal(size=(8, 3))
    design = build_polynomial_design(y)
    assert design.shape == (8, 9)  # 3 linear + 6 quadratic monomials
    assert np.allclose(design.sum(axis=0), 0.0, atol=1e-10)


def test_indicator_hand_example():
    psi = build_indicator([1, 2], 2)
    assert np.allclose(psi, [[0.5, -0.5], [-0.5, 0.5]])


def test_indicator_rank_deficiency():
    psi = build_indicator([1, 2, 3, 1, 2, 3], 3)
    assert np.linalg.matrix_rank(psi) <= 2


def test_indicator_missing_class():
    with pytest.raises(DataError, match="class 3 has no labeled sample"):
        build_indicator([1, 2, 2], 3)


# ---------------------------------------------------------------------------
# cca_fit

def test_identical_views_give_unit_correlations():
    rng = np.random.default_rng(5)
    phi = centered(rng, 40, 3)
    model = cca_fit(phi, phi, ridge=0.0)
    assert np.all(np.abs(model.correlations - 1.0) <= 1e-6)


def test_independent_views_give_small_rho1():
    rng = np.random.default_rng(6)
    phi = centered(rng, 2000, 2)
    psi = centered(rng, 2000, 2)
    model = cca_fit(phi, psi, ridge=1e-9)
    assert model.correlations[0] < 3.0 / np.sqrt(2000)


def test_whitened_orthogonality_and_pairing():
    rng = np.random.default_rng(7)
    n = 60
    phi = centered(rng, n, 4)
    psi = centered(rng, n, 3)
    psi[:, 0] += 0.5 * phi[:, 0]  # plant one correlated direction
    model = cca_fit(phi, psi)
    c_pp = phi.T @ phi / n + model.ridge * np.eye(4)
    c_ss = psi.T @ psi / n + model.ridge * np.eye(3)
    assert np.allclose(model.a.T @ c_pp @ model.a, np.eye(model.d), atol=1e-6)
    assert np.allclose(model.b.T @ c_ss @ model.b, np.eye(model.d), atol=1e-6)
    # canonical pairs realize the reported correlations under the ridged scale
    u = phi @ model.a
    v = psi @ model.b
    for i in range(model.d):
        rho = (u[:, i] @ v[:, i]) / n
        assert abs(rho - model.correlations[i]) <= 1e-6


def test_correlations_sorted_descending():
    rng = np.random.default_rng(8)
    model = cca_fit(centered(rng, 50, 5), centered(rng, 50, 4))
    assert np.all(np.diff(model.correlations) <= 1e-12)


def brute_force_rho1(phi, psi, ridge, steps=600):
    """Dense-grid maximization of the correlation over unit direction pairs."""
    n, p = phi.shape
    k = psi.shape[1]
    c_pp = phi.T @ phi / n + ridge * np.eye(p)
    c_ss = psi.T @ psi / n + ridge * np.eye(k)
    c_ps = phi.T @ psi / n

    def directions(dim):
        if dim == 1:
            return np.array([[1.0]])
        th = np.linspace(0, np.pi, steps, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)

    best = 0.0
    da = directions(p)
    db = directions(k)
    num = np.abs(da @ c_ps @ db.T)
    den = np.sqrt(np.einsum("id,de,ie->i", da, c_pp, da))[:, None] * \
        np.sqrt(np.einsum("id,de,ie->i", db, c_ss, db))[None, :]
    best = float(np.max(num / den))
    return best


def test_rho1_matches_brute_force_grid():
    rng = np.random.default_rng(9)
    for trial in range(8):
        p = int(rng.integers(1, 3))
        k = int(rng.integers(1, 3))
        n = int(rng.integers(8, 31))
        phi = centered(rng, n, p)
        psi = centered(rng, n, k)
        ridge = 1e-9
        model = cca_fit(phi, psi, ridge=ridge)
        assert abs(model.correlations[0] - brute_force_rho1(phi, psi, ridge)) <= 1e-3


def test_cca_fit_shape_errors():
    rng = np.random.default_rng(10)
    with pytest.raises(DataError):
        cca_fit(rng.normal(size=(5, 2)), rng.normal(size=(6, 2)))
    with pytest.raises(ConfigError):
        cca_fit(centered(rng, 5, 2), centered(rng, 5, 2), ridge=-1.0)


# ---------------------------------------------------------------------------
# projection

def test_project_identity():
    rng = np.random.default_rng(11)
    phi_full = rng.normal(size=(7, 3))
    assert np.array_equal(project_canonical(phi_full, np.eye(3)), phi_full)


def test_project_top_block_consistency():
    rng = np.random.default_rng(12)
    phi_full = rng.normal(size=(9, 4))
    a = rng.normal(size=(4, 2))
    assert np.allclose(project_canonical(phi_full, a)[:3], project_canonical(phi_full[:3], a))


def test_project_hand_product():
    phi = np.array([[1.0, 2.0], [3.0, 4.0]])
    a = np.array([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal(project_canonical(phi, a), [[19, 22], [43, 50]])


def test_project_shape_mismatch():
    with pytest.raises(DataError):
        project_canonical(np.zeros((3, 2)), np.zeros((3, 2)))


# ---------------------------------------------------------------------------
# rbf_cca end to end

def two_blob_embedding(rng, n_per=10, sep=8.0):
    a = rng.normal(size=(n_per, 3)) * 0.3
    b = rng.normal(size=(n_per, 3)) * 0.3
    b[:, 0] += sep
    y = np.vstack([a, b])
    labels = np.array([1] * n_per + [2] * n_per)
    return y, labels


def test_rbf_cca_separates_fully_labeled_blobs():
    rng = np.random.default_rng(13)
    y, labels = two_blob_embedding(rng)
    res = rbf_cca(y, np.arange(20), labels, 2)
    u1 = res.u_full[:, 0]
    side_a, side_b = u1[:10], u1[10:]
    assert (side_a.max() < side_b.min()) or (side_b.max() < side_a.min())
    # the mean-removed indicator has rank K-1 = 1; the null direction is
    # dropped and its column zero-padded
    assert res.effective_dim == 1
    assert res.u_full.shape == (20, 2)
    assert np.all(res.u_full[:, 1] == 0.0)


def test_rbf_cca_row_locality():
    rng = np.random.default_rng(14)
    y, labels = two_blob_embedding(rng, n_per=8)
    labeled = np.array([0, 1, 2, 8, 9, 10])  # three labeled points per blob
    lab = labels[labeled]
    res = rbf_cca(y, labeled, lab, 2)

    # permuting unlabeled rows (labeled positions fixed) permutes the
    # output rows identically
    unlabeled = np.setdiff1d(np.arange(16), labeled)
    perm = np.arange(16)
    perm[unlabeled] = unlabeled[rng.permutation(unlabeled.size)]
    res_p = rbf_cca(y[perm], labeled, lab, 2)
    assert np.allclose(res_p.u_full, res.u_full[perm], atol=1e-10)

    # a duplicated unlabeled point gets an identical output row
    y_dup = y.copy()
    y_dup[-1] = y_dup[-2]
    res_d = rbf_cca(y_dup, labeled, lab, 2)
    assert np.allclose(res_d.u_full[-1], res_d.u_full[-2], atol=1e-12)


def test_argmax_transfer_recovers_labels():
    rng = np.random.default_rng(15)
    y, labels = two_blob_embedding(rng, n_per=12, sep=10.0)
    res = rbf_cca(y, np.arange(24), labels, 2)
    u = res.u_full
    means = np.stack([u[labels == k].mean(0) for k in (1, 2)])
    pred = 1 + np.argmin(((u[:, None] - means[None]) ** 2).sum(-1), axis=1)
    assert np.array_equal(pred, labels)


def test_canonical_variables_validates_inputs():
    rng = np.random.default_rng(16)
    y = rng.normal(size=(10, 3))
    with pytest.raises(ConfigError):
        canonical_variables(y, [0, 1], [1, 2], 2, variant="cubic")
    with pytest.raises(DataError):
        canonical_variables(y, [0, 0], [1, 2], 2)
    with pytest.raises(DataError):
        canonical_variables(y, [0, 99], [1, 2], 2)


def test_linear_and_poly_variants_run():
    rng = np.random.default_rng(17)
    y, labels = two_blob_embedding(rng, n_per=15, sep=6.0)
    for variant in ("linear", "poly"):
        res = canonical_variables(y, np.arange(30), labels, 2, variant=variant)
        assert res.u_full.shape == (30, 2)
        assert res.sigma is None
        assert isinstance(res.model, CcaModel)
