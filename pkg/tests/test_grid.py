import math

import numpy as np
import pytest

from basin_metric_lab import grid as gd
from basin_metric_lab import maps as mc
from basin_metric_lab.errors import AttractorNotMember, NotAttracting, NotInBasin
from basin_metric_lab.maps import Chart, ComplexPoint

from conftest import full_grid


class TestGridSpec:
    def test_defaults(self):
        s = gd.GridSpec()
        assert s.resolution == 512 and s.epsilon_attract == 1e-3 and s.max_iter == 2000

    @pytest.mark.parametrize(
        "kw",
        [dict(resolution=32), dict(resolution=10000), dict(epsilon_attract=0.5),
         dict(epsilon_attract=0.0), dict(max_iter=10)],
    )
    def test_invariants_rejected(self, kw):
        with pytest.raises(ValueError):
            gd.GridSpec(**kw)


class TestComputeBasin:
    def test_disk_area_matches_pi(self, disk_grid_512):
        # Basin of 0 under z^2 is the open unit disk; cell-area oracle in chart Z.
        area = disk_grid_512.membership[0].sum() * disk_grid_512.spec.pitch**2
        assert abs(area - math.pi) / math.pi < 0.02

    def test_membership_pointwise(self, disk_grid_512):
        g = disk_grid_512
        c, iy, ix = g.cell_of_point(ComplexPoint(0.5, 0.0, Chart.Z))
        assert g.membership[c, iy, ix]
        c, iy, ix = g.cell_of_point(ComplexPoint(1.2, 0.0, Chart.Z))
        assert not g.membership[c, iy, ix]

    def test_cantor_basin_area_fraction(self, cantor_grid_512):
        # Julia set of z^2+1 is measure-zero dust: spherical fraction > 0.99.
        g = cantor_grid_512
        tot = 0.0
        for c in (0, 1):
            cen = g.centers(c)
            pref = (np.abs(cen) <= 1.0) if c == 0 else (np.abs(cen) < 1.0)
            tot += (g.spherical_cell_area(c) * (g.membership[c] & pref)).sum()
        assert tot / (4 * math.pi) > 0.99

    def test_not_attracting_rejected(self, zsq):
        with pytest.raises(NotAttracting):
            gd.compute_basin(zsq, ComplexPoint(1.0, 0.0, Chart.Z), gd.GridSpec(resolution=64))

    def test_member_centers_converge(self, zsq_minus_half):
        # Spot-check the defining property on a small grid: member centers
        # reach the epsilon ball within max_iter.
        g = full_grid(zsq_minus_half, ComplexPoint((1 - math.sqrt(3)) / 2, 0, Chart.Z), 64)
        p = g.attracting_point
        rng = np.random.default_rng(0)
        ids = np.nonzero(g.membership.reshape(-1))[0]
        for cid in rng.choice(ids, size=50, replace=False):
            pt = g.cell_center(int(cid))
            vals = np.array([pt.value])
            isw = np.array([pt.chart is Chart.W])
            ok = False
            for _ in range(g.spec.max_iter + 1):
                d = mc.chordal_mixed(vals, isw,
                                     np.array([p.value]), np.array([p.chart is Chart.W]))
                if d[0] <= g.spec.epsilon_attract:
                    ok = True
                    break
                vals, isw = mc.evaluate_array(zsq_minus_half, vals, isw)
            assert ok


class TestLabelComponents:
    def test_quadratic_single_component(self, zsq_minus_half):
        p = ComplexPoint((1 - math.sqrt(3)) / 2, 0.0, Chart.Z)
        g = full_grid(zsq_minus_half, p, 512)
        assert g.n_components == 1

    def test_empty_membership_raises(self, disk_grid_256):
        import dataclasses
        empty = dataclasses.replace(
            disk_grid_256, membership=np.zeros_like(disk_grid_256.membership)
        )
        with pytest.raises(AttractorNotMember):
            gd.label_components(empty)

    def test_newton_many_components(self, newton_grid_512, newton3):
        assert newton_grid_512.n_components > 10
        # Oracle: the count keeps growing with resolution (infinitely many
        # components in the limit).
        g1024 = full_grid(newton3, ComplexPoint(1, 0, Chart.Z), 1024)
        assert g1024.n_components > newton_grid_512.n_components

    def test_component_one_contains_attractor(self, newton_grid_512):
        g = newton_grid_512
        c, iy, ix = g.cell_of_point(g.attracting_point)
        assert g.component_id[c, iy, ix] == 1

    def test_labels_contiguous(self, newton_grid_512):
        g = newton_grid_512
        present = np.unique(g.component_id[g.component_id > 0])
        assert present.min() == 1 and present.max() == g.n_components
        assert len(present) == g.n_components

    def test_resolution_stability_of_big_components(self, newton3):
        # Every component with >= 100 cells at res R matches a distinct
        # component at res 2R (located via its deepest-interior cell).
        g1 = full_grid(newton3, ComplexPoint(1, 0, Chart.Z), 256)
        g2 = full_grid(newton3, ComplexPoint(1, 0, Chart.Z), 512)
        big = [c for c in range(1, g1.n_components + 1)
               if g1.component_sizes[c] >= 100]
        matched = []
        flat_edt = g1.edt_chart.reshape(-1)
        flat_comp = g1.component_id.reshape(-1)
        for comp in big:
            cells = g1.component_cells(comp)
            rep = cells[np.argmax(flat_edt[cells])]
            pt = g1.cell_center(int(rep))
            _, comp2 = gd.locate(g2, pt)
            matched.append(comp2)
        assert len(set(matched)) == len(big)


class TestBoundaryDistance:
    def test_disk_center_cell(self, disk_grid_512):
        # Chart-unit distance from the center cell to the unit circle is 1.0;
        # the stored value carries the chordal factor 2/(1+|z|^2) = 2 at 0.
        g = disk_grid_512
        c, iy, ix = g.cell_of_point(ComplexPoint(0, 0, Chart.Z))
        assert g.edt_chart[c, iy, ix] == pytest.approx(1.0, rel=0.02)
        assert g.boundary_dist[c, iy, ix] == pytest.approx(2.0, rel=0.02)

    def test_cell_adjacent_to_boundary(self, disk_grid_512):
        g = disk_grid_512
        pitch = g.spec.pitch
        # A member cell just inside the unit circle on the +re axis.
        c, iy, ix = g.cell_of_point(ComplexPoint(1.0 - pitch / 2, 0.0, Chart.Z))
        assert g.membership[c, iy, ix]
        assert g.edt_chart[c, iy, ix] <= 2.5 * pitch

    def test_querying_non_member_is_error(self, disk_grid_512):
        g = disk_grid_512
        c, iy, ix = g.cell_of_point(ComplexPoint(1.2, 0.0, Chart.Z))
        with pytest.raises(NotInBasin):
            g.boundary_at(g.cell_id(c, iy, ix))

    def test_lipschitz_in_chart_units(self, disk_grid_512):
        # Exact EDT is 1-Lipschitz w.r.t. chart distance between cell centers.
        g = disk_grid_512
        rng = np.random.default_rng(1)
        mem_ids = np.nonzero(g.membership.reshape(-1))[0]
        picks = rng.choice(mem_ids, size=(500, 2), replace=True)
        ax = g.spec.axis()
        for a, b in picks:
            ca, cb = g.cell_of_id(int(a)), g.cell_of_id(int(b))
            if ca[0] != cb[0]:
                continue
            da = g.edt_chart[ca]
            db = g.edt_chart[cb]
            dist = math.hypot(ax[ca[2]] - ax[cb[2]], ax[ca[1]] - ax[cb[1]])
            assert abs(da - db) <= dist + 1e-9

    def test_positive_on_members(self, cantor_grid_512):
        g = cantor_grid_512
        vals = g.boundary_dist[g.membership]
        assert np.isfinite(vals).all() and (vals > 0).all()

    def test_chart_blind_spot_falls_back_to_chordal(self):
        # Julia dust of z^2-5 lies outside the z-chart square entirely, so
        # z-chart cells near the origin need the global nearest-non-member
        # fallback.
        g = full_grid(mc.parse_map([-5, 0, 1], [1]), ComplexPoint.infinity(), 256)
        vals = g.boundary_dist[g.membership]
        assert np.isfinite(vals).all() and (vals > 0).all()


class TestSeamConsistency:
    def test_membership_and_labels_agree_across_charts(self, cantor_grid_512, disk_grid_512,
                                                       newton_grid_512):
        # Corresponding overlap cells >= 2 cells from the membership boundary
        # must agree in membership, and co-member pairs in component id.
        for g in (cantor_grid_512, disk_grid_512, newton_grid_512):
            corr = g.correspondence.reshape(-1)
            mem = g.membership.reshape(-1)
            comp = g.component_id.reshape(-1)
            edt = g.edt_chart.reshape(-1)
            src = np.nonzero(corr >= 0)[0]
            dst = corr[src]
            interior = np.zeros(len(src), bool)
            pitch = g.spec.pitch
            # interior: both own-chart EDTs at least 2 cells (members), or
            # deep non-members (2 cells from any member) via inverted EDT
            from scipy import ndimage
            inv = np.zeros_like(g.edt_chart)
            for c in (0, 1):
                bg = ~g.membership[c]
                if bg.any():
                    inv[c] = ndimage.distance_transform_edt(bg, sampling=pitch)
            invf = inv.reshape(-1)
            depth_src = np.where(mem[src], edt[src], invf[src])
            depth_dst = np.where(mem[dst], edt[dst], invf[dst])
            interior = (depth_src >= 2 * pitch) & (depth_dst >= 2 * pitch)
            s, d = src[interior], dst[interior]
            assert (mem[s] == mem[d]).all()
            both = mem[s] & mem[d]
            assert (comp[s[both]] == comp[d[both]]).all()


class TestForwardInvariance:
    @pytest.mark.parametrize("fixture", ["disk_grid_512", "newton_grid_512"])
    def test_member_images_stay_members(self, fixture, request, zsq, newton3):
        g = request.getfixturevalue(fixture)
        rmap = zsq if fixture == "disk_grid_512" else newton3
        r = g.resolution
        ax = g.spec.axis()
        centers = (ax[None, :] + 1j * ax[:, None]).ravel()
        vals = np.concatenate([centers, centers])
        isw = np.concatenate([np.zeros(r * r, bool), np.ones(r * r, bool)])
        mem = g.membership.reshape(-1)
        # evaluate_array returns preferred-chart coordinates (modulus <= 1)
        out, out_w = mc.evaluate_array(rmap, vals[mem], isw[mem])
        e, pitch = g.spec.chart_extent, g.spec.pitch
        ix = np.clip(((out.real + e) / pitch).astype(int), 0, r - 1)
        iy = np.clip(((out.imag + e) / pitch).astype(int), 0, r - 1)
        chart_idx = out_w.astype(int)
        img_member = g.membership[chart_idx, iy, ix]
        # distance of the image cell to the membership interface, either side
        from scipy import ndimage
        inv = np.zeros_like(g.edt_chart)
        for c in (0, 1):
            bg = ~g.membership[c]
            if bg.any():
                inv[c] = ndimage.distance_transform_edt(bg, sampling=pitch)
        interface_dist = np.where(
            img_member, g.edt_chart[chart_idx, iy, ix], inv[chart_idx, iy, ix]
        )
        away = interface_dist >= 2 * pitch
        frac = img_member[away].mean()
        assert frac >= 0.99


class TestLocate:
    def test_component_one(self, disk_grid_512):
        cid, comp = gd.locate(disk_grid_512, ComplexPoint(0.5, 0.0, Chart.Z))
        assert comp == 1

    def test_outside_raises(self, disk_grid_512):
        with pytest.raises(NotInBasin):
            gd.locate(disk_grid_512, ComplexPoint(2.0, 0.0, Chart.Z).preferred())

    def test_newton_locate_preimage_point(self, newton_grid_512):
        # N(-0.5) = 1, so -0.5 lies in the basin; record its component id.
        cid, comp = gd.locate(newton_grid_512, ComplexPoint(-0.5, 0.0, Chart.Z))
        assert comp >= 1

    def test_determinism(self, zsq):
        a = full_grid(zsq, ComplexPoint(0, 0, Chart.Z), 128)
        b = full_grid(zsq, ComplexPoint(0, 0, Chart.Z), 128)
        assert np.array_equal(a.membership, b.membership)
        assert np.array_equal(a.component_id, b.component_id)
        assert np.array_equal(a.boundary_dist, b.boundary_dist)
