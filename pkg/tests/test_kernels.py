import itertools
import math

import numpy as np
import pytest

from covtune.kernels import (
    ArityError,
    DimensionMismatchError,
    KernelSpec,
    NonPositiveDiagonalError,
    ReweightSet,
    gram,
    kernel_eval,
    m_inner,
    normalize,
    pair_diag,
    pair_matrix,
    reweight,
)


class TestMInner:
    def test_two_vectors(self):
        assert m_inner([(1, 2), (3, 4)]) == 11.0

    def test_all_ones_factor_is_identity(self):
        assert m_inner([(1, 2), (3, 4), (1, 1)]) == 11.0

    def test_single_vector_sums_elements(self):
        assert m_inner([(2, 5)]) == 7.0

    def test_dimension_mismatch_names_offender(self):
        with pytest.raises(DimensionMismatchError, match="vector 2"):
            m_inner([(1, 2), (3, 4), (1, 2, 3)])

    def test_multilinear_in_each_slot(self, rng):
        a, b, c = rng.normal(size=(3, 4))
        lhs = m_inner([2.0 * a, b, c])
        assert lhs == pytest.approx(2.0 * m_inner([a, b, c]), rel=1e-12)


class TestKernelEval:
    def test_linear_three_points(self):
        assert kernel_eval(KernelSpec.linear(), [(1, 1), (2, 0), (3, 5)]) == 6.0

    def test_se_unit_diagonal(self):
        for sigma in (0.1, 1.0, 7.3):
            assert kernel_eval(KernelSpec.se(sigma), [(1, 2), (1, 2)]) == 1.0

    def test_reweighted_linear_single_anchor(self):
        # expanding the double sum by hand: K4((1,0),(1,0),x,x') = x1*x1'
        E = ReweightSet.from_pairs([((1, 0), 1.0)])
        spec = reweight(KernelSpec.linear(), E)
        assert kernel_eval(spec, [(2, 3), (4, 5)]) == pytest.approx(8.0)

    def test_polynomial_closed_form(self):
        assert kernel_eval(KernelSpec.polynomial(2), [(1, 0), (1, 0)]) == 4.0

    def test_reweighted_linear_two_anchors_is_dot_product(self):
        # anchors (1,0),(0,1) with unit coefficients reconstruct <x, x'>
        E = ReweightSet.from_pairs([((1, 0), 1.0), ((0, 1), 1.0)])
        spec = reweight(KernelSpec.linear(), E)
        assert kernel_eval(spec, [(2, 3), (4, 5)]) == pytest.approx(23.0)

    def test_pair_only_kinds_reject_other_arities(self):
        inner = KernelSpec.se(1.0)
        for spec in (KernelSpec.matern12(1.0), KernelSpec.matern32(1.0),
                     KernelSpec.composite(1.0, inner),
                     KernelSpec.mixture((1, 1, 1), (inner, inner, inner))):
            with pytest.raises(ArityError):
                kernel_eval(spec, [(0, 0), (1, 1), (2, 2)])

    def test_permutation_symmetry_free_kinds(self, rng):
        specs = [KernelSpec.linear(), KernelSpec.polynomial(3),
                 KernelSpec.exponential(1.7), KernelSpec.se(0.9)]
        E = ReweightSet.from_pairs(
            [(rng.uniform(-1, 1, 3), rng.normal()) for _ in range(3)])
        specs.append(reweight(KernelSpec.se(0.8), E))
        for spec in specs:
            for m in (2, 3, 4):
                pts = [rng.uniform(-1, 1, 3) for _ in range(m)]
                base = kernel_eval(spec, pts)
                for perm in itertools.permutations(range(m)):
                    val = kernel_eval(spec, [pts[i] for i in perm])
                    assert val == pytest.approx(base, rel=1e-12, abs=1e-15)

    def test_matern_closed_forms(self, rng):
        x, z = rng.normal(size=(2, 3))
        r = float(np.linalg.norm(x - z))
        assert kernel_eval(KernelSpec.matern12(0.7), [x, z]) == pytest.approx(
            math.exp(-r / 0.7))
        s = math.sqrt(3) * r / 0.4
        assert kernel_eval(KernelSpec.matern32(0.4), [x, z]) == pytest.approx(
            (1 + s) * math.exp(-s))

    def test_mixture_is_weighted_sum(self, rng):
        x, z = rng.uniform(-1, 1, (2, 2))
        children = (KernelSpec.se(0.5), KernelSpec.matern12(0.5),
                    KernelSpec.matern32(0.5))
        spec = KernelSpec.mixture((0.2, 0.5, 0.3), children)
        expected = sum(w * kernel_eval(c, [x, z])
                       for w, c in zip((0.2, 0.5, 0.3), children))
        assert kernel_eval(spec, [x, z]) == pytest.approx(expected, rel=1e-14)

    def test_composite_closed_form(self, rng):
        inner = KernelSpec.se(0.3)
        spec = KernelSpec.composite(0.8, inner)
        x, z = rng.uniform(-1, 1, (2, 2))
        kxx = kernel_eval(inner, [x, x])
        kzz = kernel_eval(inner, [z, z])
        kxz = kernel_eval(inner, [x, z])
        expected = math.exp(-(kxx + kzz - 2 * kxz) / (2 * 0.8))
        assert kernel_eval(spec, [x, z]) == pytest.approx(expected, rel=1e-14)
        assert kernel_eval(spec, [x, x]) == pytest.approx(1.0)


class TestNormalize:
    def test_normalized_exponential_value(self):
        spec = normalize(KernelSpec.exponential(1.0))
        val = kernel_eval(spec, [(1, 0), (0, 1)])
        assert val == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_unit_diagonal(self, rng):
        specs = [normalize(KernelSpec.exponential(0.7)),
                 normalize(KernelSpec.polynomial(2)),
                 KernelSpec.se(0.4)]
        E = ReweightSet.from_pairs(
            [(rng.uniform(0, 1, 2), rng.normal()) for _ in range(4)])
        specs.append(normalize(reweight(KernelSpec.se(0.5), E)))
        for spec in specs:
            for _ in range(20):
                x = rng.uniform(0.1, 1, 2)
                assert kernel_eval(spec, [x, x]) == pytest.approx(1.0, abs=1e-12)

    def test_se_equals_normalized_exponential(self, rng):
        # 100 random pairs, dimensions up to 5
        for _ in range(100):
            n = rng.integers(1, 6)
            sigma = float(rng.uniform(0.2, 3.0))
            x, z = rng.uniform(-1, 1, (2, n))
            a = kernel_eval(KernelSpec.se(sigma), [x, z])
            b = kernel_eval(normalize(KernelSpec.exponential(sigma)), [x, z])
            assert abs(a - b) < 1e-12

    def test_nonpositive_diagonal_reports_point(self):
        spec = normalize(KernelSpec.linear())
        with pytest.raises(NonPositiveDiagonalError) as err:
            kernel_eval(spec, [(0.0, 0.0), (1.0, 1.0)])
        assert np.allclose(err.value.point, [0.0, 0.0])

    def test_normalize_then_reweight_rejected(self):
        spec = normalize(KernelSpec.exponential(1.0))
        with pytest.raises(ValueError, match="re-weight"):
            reweight(spec, ReweightSet.from_pairs([((1.0,), 1.0)]))


class TestReweight:
    def test_empty_set_gives_zero_kernel(self):
        spec = reweight(KernelSpec.linear(), ReweightSet.from_pairs([]))
        assert kernel_eval(spec, [(2, 3), (4, 5)]) == 0.0
        assert np.all(pair_matrix(spec, np.eye(2), np.eye(2)) == 0.0)

    def test_single_anchor_gram_is_rank_one(self, rng):
        E = ReweightSet.from_pairs([((1, 0), 1.0)])
        spec = reweight(KernelSpec.linear(), E)
        X = rng.normal(size=(6, 2))
        eig = np.linalg.eigvalsh(gram(spec, X))
        assert sorted(np.abs(eig))[-2] < 1e-10

    def test_illegal_base_kinds(self):
        E = ReweightSet.from_pairs([((1.0, 0.0), 1.0)])
        inner = KernelSpec.se(1.0)
        for spec in (KernelSpec.matern12(1.0),
                     KernelSpec.mixture((1, 0, 0), (inner, inner, inner)),
                     KernelSpec.composite(1.0, inner)):
            with pytest.raises(ValueError):
                reweight(spec, E)

    def test_anchor_dimension_mismatch(self):
        spec = reweight(KernelSpec.linear(),
                        ReweightSet.from_pairs([((1, 0), 1.0)]))
        with pytest.raises(DimensionMismatchError):
            reweight(spec, ReweightSet.from_pairs([((1, 0, 0), 1.0)]))

    def test_nested_reweighting_matches_double_sum(self, rng):
        # two applications expanded by hand through the recursive definition
        base = KernelSpec.exponential(1.3)
        E1 = ReweightSet.from_pairs(
            [(rng.uniform(-1, 1, 2), rng.normal()) for _ in range(3)])
        E2 = ReweightSet.from_pairs(
            [(rng.uniform(-1, 1, 2), rng.normal()) for _ in range(2)])
        spec1 = reweight(base, E1)
        spec12 = reweight(spec1, E2)
        x, z = rng.uniform(-1, 1, (2, 2))
        expected = sum(
            a1 * a2 * kernel_eval(spec1, [p1, p2, x, z])
            for (p1, a1), (p2, a2) in itertools.product(
                zip(E2.points, E2.alphas), repeat=2)
        )
        assert kernel_eval(spec12, [x, z]) == pytest.approx(expected, rel=1e-10)

    def test_nested_reweighting_stays_symmetric_psd(self, rng):
        base = KernelSpec.se(0.6)
        spec = base
        for k in (4, 3):
            E = ReweightSet.from_pairs(
                [(rng.uniform(0, 1, 2), rng.normal()) for _ in range(k)])
            spec = reweight(spec, E)
        X = rng.uniform(0, 1, (15, 2))
        G = gram(spec, X)
        assert np.array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() >= -1e-8


class TestGram:
    def test_se_unit_diagonal(self, rng):
        X = rng.normal(size=(3, 2))
        G = gram(KernelSpec.se(0.5), X)
        assert np.allclose(np.diag(G), 1.0)

    def test_single_point(self):
        G = gram(KernelSpec.polynomial(2), [[1.0, 1.0]], jitter=0.5)
        assert G.shape == (1, 1)
        assert G[0, 0] == pytest.approx((1 + 2) ** 2 + 0.5)

    def test_reweighted_se_gram_psd(self, rng):
        E = ReweightSet.from_pairs(
            [(rng.uniform(0, 1, 5), rng.normal()) for _ in range(10)])
        spec = reweight(KernelSpec.se(0.7), E)
        X = rng.uniform(0, 1, (20, 5))
        assert np.linalg.eigvalsh(gram(spec, X)).min() >= -1e-8

    def test_exact_symmetry_and_jitter(self, rng):
        X = rng.uniform(0, 1, (12, 3))
        E = ReweightSet.from_pairs(
            [(rng.uniform(0, 1, 3), rng.normal()) for _ in range(5)])
        spec = normalize(reweight(KernelSpec.exponential(0.8), E))
        G0 = gram(spec, X)
        G = gram(spec, X, jitter=1e-6)
        assert np.array_equal(G0, G0.T)
        assert np.allclose(G - G0, 1e-6 * np.eye(12))

    def test_negative_jitter_rejected(self, rng):
        with pytest.raises(ValueError):
            gram(KernelSpec.se(1.0), rng.normal(size=(3, 2)), jitter=-1e-9)


class TestPairMatrixConsistency:
    """The vectorised matrix path must agree with scalar evaluation."""

    @pytest.mark.parametrize("build", [
        lambda: KernelSpec.linear(),
        lambda: KernelSpec.polynomial(3),
        lambda: KernelSpec.exponential(0.9),
        lambda: KernelSpec.se(0.6),
        lambda: KernelSpec.matern12(0.8),
        lambda: KernelSpec.matern32(0.8),
        lambda: KernelSpec.mixture((0.3, 0.3, 0.4), (
            KernelSpec.se(0.5), KernelSpec.matern12(0.5), KernelSpec.matern32(0.5))),
        lambda: KernelSpec.composite(0.7, KernelSpec.se(0.5)),
        lambda: normalize(KernelSpec.polynomial(2)),
    ])
    def test_matches_scalar_eval(self, build, rng):
        spec = build()
        A = rng.uniform(0.1, 1, (4, 3))
        B = rng.uniform(0.1, 1, (5, 3))
        M = pair_matrix(spec, A, B)
        for i in range(4):
            for j in range(5):
                assert M[i, j] == pytest.approx(
                    kernel_eval(spec, [A[i], B[j]]), rel=1e-12, abs=1e-14)
        d = pair_diag(spec, A)
        for i in range(4):
            assert d[i] == pytest.approx(
                kernel_eval(spec, [A[i], A[i]]), rel=1e-12, abs=1e-14)

    def test_reweighted_matches_scalar_eval(self, rng):
        for kind in ("linear", "polynomial", "exponential", "se"):
            base = {"linear": KernelSpec.linear(),
                    "polynomial": KernelSpec.polynomial(2),
                    "exponential": KernelSpec.exponential(1.1),
                    "se": KernelSpec.se(0.8)}[kind]
            E = ReweightSet.from_pairs(
                [(rng.uniform(0, 1, 2), rng.normal()) for _ in range(4)])
            spec = reweight(base, E)
            A = rng.uniform(0, 1, (3, 2))
            M = pair_matrix(spec, A, A)
            for i in range(3):
                for j in range(3):
                    assert M[i, j] == pytest.approx(
                        kernel_eval(spec, [A[i], A[j]]), rel=1e-11, abs=1e-14)


class TestSpecValidation:
    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            KernelSpec.polynomial(0)
        with pytest.raises(ValueError):
            KernelSpec.se(0.0)
        with pytest.raises(ValueError):
            KernelSpec.exponential(-1.0)
        with pytest.raises(ValueError):
            KernelSpec.mixture((0, 0, 0), (KernelSpec.se(1),) * 3)
        with pytest.raises(ValueError):
            KernelSpec.mixture((-1, 1, 1), (KernelSpec.se(1),) * 3)

    def test_round_trip_serialization(self, rng):
        E = ReweightSet.from_pairs(
            [(rng.uniform(0, 1, 2), rng.normal()) for _ in range(3)])
        spec = normalize(reweight(KernelSpec.se(0.37), E))
        clone = KernelSpec.from_dict(spec.to_dict())
        x, z = rng.uniform(0, 1, (2, 2))
        assert kernel_eval(clone, [x, z]) == kernel_eval(spec, [x, z])
        comp = KernelSpec.composite(1.2, KernelSpec.mixture(
            (0.5, 0.25, 0.25),
            (KernelSpec.se(1), KernelSpec.matern12(1), KernelSpec.matern32(1))))
        clone2 = KernelSpec.from_dict(comp.to_dict())
        assert kernel_eval(clone2, [x, z]) == kernel_eval(comp, [x, z])
