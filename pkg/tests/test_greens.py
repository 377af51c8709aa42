import math

import numpy as np
import pytest

from basin_metric_lab import greens as gr
from basin_metric_lab import grid as gd
from basin_metric_lab import maps as mc
from basin_metric_lab.errors import BadThreshold, NotPolynomial
from basin_metric_lab.maps import Chart, ComplexPoint

from conftest import full_grid


@pytest.fixture(scope="module")
def escape_grid_zsq(zsq):
    """Basin of infinity for z^2 (complement of the closed unit disk)."""
    return full_grid(zsq, ComplexPoint.infinity(), 256)


@pytest.fixture(scope="module")
def field_zsq(zsq, escape_grid_zsq):
    return gr.greens_function(zsq, escape_grid_zsq)


@pytest.fixture(scope="module")
def field_cantor(zsq_plus_one, cantor_grid_512):
    return gr.greens_function(zsq_plus_one, cantor_grid_512)


class TestPointwise:
    def test_monomial_log_modulus(self, zsq):
        # G = log|z| for z^d outside the unit circle
        assert gr.greens_at(zsq, ComplexPoint.from_plane(2.0)) == pytest.approx(
            math.log(2), abs=1e-9
        )

    def test_bounded_orbit_zero(self, zsq):
        assert gr.greens_at(zsq, ComplexPoint(0.5, 0, Chart.Z)) == 0.0

    def test_iterated_oracle_value(self, zsq_plus_one):
        # Oracle: iterate 2 -> 5 -> 26 -> 677 -> ...; 2^-n log|f^n| stabilizes.
        z = 2.0 + 0j
        for n in range(1, 60):
            z = z * z + 1
            if abs(z) > 1e8:
                break
        want = math.log(abs(z)) / 2**n
        got = gr.greens_at(zsq_plus_one, ComplexPoint.from_plane(2.0))
        assert got == pytest.approx(want, abs=1e-9)
        assert got == pytest.approx(0.8146, abs=1e-3)

    def test_rational_rejected(self, newton3):
        with pytest.raises(NotPolynomial):
            gr.greens_at(newton3, ComplexPoint(0.5, 0, Chart.Z))


class TestField:
    def test_positive_exactly_on_members(self, field_cantor, cantor_grid_512):
        g = field_cantor.values
        mem = cantor_grid_512.membership
        assert (g[mem] > 0).all()
        assert (g[~mem] == 0).all()

    @pytest.mark.parametrize("fixture", ["field_zsq", "field_cantor"])
    def test_functional_equation(self, fixture, request, zsq, zsq_plus_one):
        field = request.getfixturevalue(fixture)
        rmap = zsq if fixture == "field_zsq" else zsq_plus_one
        grid = field.grid
        d = field.degree
        r = grid.resolution
        ax = grid.spec.axis()
        centers = (ax[None, :] + 1j * ax[:, None]).ravel()
        vals = np.concatenate([centers, centers])
        isw = np.concatenate([np.zeros(r * r, bool), np.ones(r * r, bool)])
        eligible = (field.values.reshape(-1) > 1e-3) & np.isfinite(field.values.reshape(-1))
        idx = np.nonzero(eligible)[0]
        rng = np.random.default_rng(3)
        idx = rng.choice(idx, size=min(20000, len(idx)), replace=False)
        g_here = gr.greens_values(rmap, vals[idx], isw[idx], grid.spec.max_iter)
        img_v, img_w = mc.evaluate_array(rmap, vals[idx], isw[idx])
        g_img = gr.greens_values(rmap, img_v, img_w, grid.spec.max_iter)
        err = np.abs(g_img - d * g_here)
        assert (err <= 1e-6).mean() >= 0.99

    def test_level_mapping(self, field_cantor, zsq_plus_one):
        # Cells of band n+1 (>= 2 cells inside the band) map into band n.
        from scipy import ndimage
        field = field_cantor
        grid = field.grid
        t0 = gr.default_top_level(field, zsq_plus_one)
        dec = gr.annulus_decomposition(field, t0, 6)
        r = grid.resolution
        ax = grid.spec.axis()
        ok_total, n_total = 0, 0
        for k in range(2, 7):
            mask = dec.band_index == k
            deep = np.zeros_like(mask)
            for c in (0, 1):
                if mask[c].any():
                    deep[c] = ndimage.distance_transform_edt(mask[c]) >= 2.0
            cy = np.nonzero(deep.reshape(-1))[0]
            if len(cy) == 0:
                continue
            rng = np.random.default_rng(k)
            cy = rng.choice(cy, size=min(2000, len(cy)), replace=False)
            chart, iy, ix = np.unravel_index(cy, (2, r, r))
            vals = ax[ix] + 1j * ax[iy]
            # evaluate_array already returns the preferred-chart coordinates
            img_v, img_w = mc.evaluate_array(zsq_plus_one, vals, chart.astype(bool))
            e, pitch = grid.spec.chart_extent, grid.spec.pitch
            jx = np.clip(((img_v.real + e) / pitch).astype(int), 0, r - 1)
            jy = np.clip(((img_v.imag + e) / pitch).astype(int), 0, r - 1)
            bands = dec.band_index[img_w.astype(int), jy, jx]
            ok_total += int((bands == k - 1).sum())
            n_total += len(cy)
        assert n_total > 0
        assert ok_total / n_total >= 0.99


class TestDecomposition:
    def test_round_annuli_for_monomial(self, zsq, field_zsq):
        dec = gr.annulus_decomposition(field_zsq, math.log(2), 3)
        # Band 1 is the round annulus sqrt(2) < |z| < 2; one component.
        assert len(dec.components_of_band(1)) == 1
        grid = field_zsq.grid
        r = grid.resolution
        in_band = np.nonzero((dec.band_index == 1).reshape(-1))[0]
        pitch = grid.spec.pitch
        for cid in in_band[:: max(1, len(in_band) // 200)]:
            pt = grid.cell_center(int(cid))
            m = abs(pt.as_plane())
            assert math.sqrt(2) - 2 * pitch <= m <= 2 + 2 * pitch

    def test_every_band_single_component_for_monomial(self, field_zsq):
        dec = gr.annulus_decomposition(field_zsq, math.log(2), 4)
        for k in range(1, 5):
            assert len(dec.components_of_band(k)) == 1

    def test_band_count_grows_for_cantor(self, field_cantor, zsq_plus_one):
        t0 = gr.default_top_level(field_cantor, zsq_plus_one)
        dec = gr.annulus_decomposition(field_cantor, t0, 6)
        counts = [len(dec.components_of_band(k)) for k in range(1, 7)]
        assert all(b >= a for a, b in zip(counts, counts[1:]))
        assert counts[-1] > counts[0]

    def test_bad_threshold_empty(self, field_zsq):
        with pytest.raises(BadThreshold):
            gr.annulus_decomposition(field_zsq, 1e9, 2)

    def test_default_top_level_above_critical(self, field_cantor, zsq_plus_one):
        t0 = gr.default_top_level(field_cantor, zsq_plus_one)
        g_crit = gr.greens_at(zsq_plus_one, ComplexPoint(0, 0, Chart.Z))
        assert t0 > g_crit
        capped = gr.default_top_level(field_cantor, zsq_plus_one, base_g=1.0)
        assert capped == pytest.approx(0.8)


class TestCoverage:
    def test_monomial_preimage_lattice_covers(self, zsq, field_zsq, escape_grid_zsq):
        # Preimages of 2 under z^2: the 2^k-th roots of 2, filling each round
        # annulus; every band component (n <= 6) must contain one by depth 8.
        dec = gr.annulus_decomposition(field_zsq, 0.6, 6)
        cells, depths = [], []
        grid = escape_grid_zsq
        for k in range(0, 9):
            n = 2**k
            radius = 2.0 ** (1.0 / n)
            for j in range(n):
                z = radius * complex(math.cos(2 * math.pi * j / n),
                                     math.sin(2 * math.pi * j / n))
                chart, iy, ix = grid.cell_of_point(ComplexPoint.from_plane(z))
                cells.append(grid.cell_id(chart, iy, ix))
                depths.append(k)
        rep = gr.verify_annulus_coverage(dec, np.array(cells), np.array(depths),
                                         base_g=math.log(2))
        assert rep.base_inside_top
        for k, tot, cov, frac in rep.per_level:
            assert tot >= 1 and frac == 1.0

    def test_empty_tree_zero_coverage(self, field_zsq):
        dec = gr.annulus_decomposition(field_zsq, 0.6, 4)
        rep = gr.verify_annulus_coverage(dec, np.zeros(0, np.int64), np.zeros(0, np.int64))
        assert rep.total_fraction == 0.0

    def test_coverage_monotone_in_depth(self, zsq, field_zsq, escape_grid_zsq):
        dec = gr.annulus_decomposition(field_zsq, 0.6, 5)
        grid = escape_grid_zsq
        cells, depths = [], []
        for k in range(0, 7):
            n = 2**k
            radius = 2.0 ** (1.0 / n)
            for j in range(n):
                z = radius * complex(math.cos(2 * math.pi * j / n),
                                     math.sin(2 * math.pi * j / n))
                chart, iy, ix = grid.cell_of_point(ComplexPoint.from_plane(z))
                cells.append(grid.cell_id(chart, iy, ix))
                depths.append(k)
        rep = gr.verify_annulus_coverage(dec, np.array(cells), np.array(depths))
        prev = None
        for depth in range(0, 8):
            fr = [f for _, _, _, f in rep.fractions_at_depth(depth)]
            if prev is not None:
                assert all(b >= a - 1e-12 for a, b in zip(prev, fr))
            prev = fr

    def test_real_tree_coverage_not_decreased_by_depth_doubling(
            self, zsq_plus_one, cantor_grid_512, field_cantor):
        # Oracle for depth monotonicity: rebuild the tree at doubled depth and
        # compare per-level fractions.
        from basin_metric_lab import experiment as ex
        from basin_metric_lab import orbit as ob
        g = cantor_grid_512
        p0 = ex._offset_base(g, ComplexPoint.infinity(), 0.1)
        base_g = gr.greens_at(zsq_plus_one, p0)
        t0 = gr.default_top_level(field_cantor, zsq_plus_one, base_g=base_g)
        dec = gr.annulus_decomposition(field_cantor, t0, 6)
        fracs = {}
        for depth in (6, 12):
            tree = ob.build_backward_tree(zsq_plus_one, p0, depth, g)
            rep = gr.verify_annulus_coverage(dec, tree.cell_ids, tree.depths,
                                             base_g=base_g)
            fracs[depth] = [f for _k, _t, _c, f in rep.per_level]
        assert all(b >= a for a, b in zip(fracs[6], fracs[12]))
        assert all(f == 1.0 for f in fracs[12])

    def test_contour_rows(self, field_zsq):
        dec = gr.annulus_decomposition(field_zsq, math.log(2), 2)
        rows = gr.contour_rows(dec)
        assert len(rows) > 0
        for k, gid, chart, re, im in rows[:10]:
            assert k in (1, 2) and chart in ("Z", "W")
            assert abs(re) <= 1.5 and abs(im) <= 1.5
