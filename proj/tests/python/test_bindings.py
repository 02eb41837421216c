import itertools
import math

import numpy as np
import pytest

import sgtopo


def test_random_stream_is_reproducible():
    a = sgtopo.RandomStream(5, sgtopo.streams.LAYOUTS)
    b = sgtopo.RandomStream(5, sgtopo.streams.LAYOUTS)
    assert [a.normal() for _ in range(4)] == [b.normal() for _ in range(4)]
    c = sgtopo.RandomStream.deserialize(a.serialize())
    assert c == a
    assert c.uniform(0.0, 1.0) == a.uniform(0.0, 1.0)


def test_uniform_image_gives_the_phase_tensor():
    phase = sgtopo.IsotropicPhase(E=2.0, nu=0.25)
    img = np.ones((8, 8), dtype=np.uint8)
    c = sgtopo.homogenize(img, phase, sgtopo.IsotropicPhase(E=1.0, nu=0.3))
    ref = sgtopo.isotropic_tensor(phase, 2, sgtopo.Hypothesis.PLANE_STRESS).voigt
    assert np.allclose(c.voigt, ref, rtol=1e-8, atol=1e-12)
    # plane stress by hand
    assert c.voigt[0, 0] == pytest.approx(2.0 / (1 - 0.25**2), rel=1e-8)


def test_laminate_bounds():
    stiff = sgtopo.IsotropicPhase(E=10.0, nu=0.0)
    soft = sgtopo.IsotropicPhase(E=1.0, nu=0.0)
    img = np.zeros((16, 16), dtype=np.uint8)
    img[:8, :] = 1
    c = sgtopo.homogenize(img, stiff, soft).voigt
    # layers stacked along the first image axis
    along = sorted([c[0, 0], c[1, 1]])
    assert along[0] == pytest.approx(2.0 / (1 / 10 + 1), rel=1e-2)
    assert along[1] == pytest.approx(5.5, rel=1e-2)


def test_random_field_image_and_catalog():
    gen = sgtopo.RandomFieldGenerator()
    gen.resolution = 16
    img = sgtopo.random_field_image(gen, sgtopo.RandomStream(1, sgtopo.streams.RVE_EXPORT))
    assert img.shape == (16, 16)
    assert set(np.unique(img)) <= {0, 1}
    cat = sgtopo.build_catalog(3, gen, sgtopo.RandomStream(1, sgtopo.streams.CATALOG), threads=1)
    assert len(cat) == 3
    for e in cat.entries:
        assert e.is_positive_definite()
        assert np.allclose(e.voigt, e.voigt.T)


def test_exhaustive_mean_matches_direct_enumeration():
    mesh = sgtopo.MacroMesh.half_beam(3, 1)
    model = sgtopo.MacroModel(mesh)
    cat = sgtopo.MicrostructureCatalog(
        [sgtopo.isotropic_tensor(sgtopo.IsotropicPhase(E=e, nu=0.3)) for e in (1.0, 2.0, 4.0)]
    )
    lib = sgtopo.ElementLibrary(mesh, cat)
    theta = np.linspace(-1.5, 1.5, model.design_size())
    values = [model.evaluate(theta, list(lay), lib, 1.0).objective for lay in itertools.product(range(3), repeat=3)]
    ex = sgtopo.exhaustive_evaluate(model, lib, theta, 1.0)
    assert ex.samples == 27
    assert ex.objective["mean"] == pytest.approx(sum(values) / 27, rel=1e-12)
    assert ex.objective["std"] == pytest.approx(np.std(values, ddof=1), rel=1e-9)
    one = sgtopo.exhaustive_evaluate(model, sgtopo.ElementLibrary(mesh, sgtopo.MicrostructureCatalog.single(cat.entries[0])), theta, 1.0)
    assert one.objective["std"] == 0.0
    assert one.objective["mean"] == values[0]


def test_gradients_match_finite_differences():
    mesh = sgtopo.MacroMesh.half_beam(9, 3)
    model = sgtopo.MacroModel(mesh)
    gen = sgtopo.RandomFieldGenerator()
    gen.resolution = 16
    cat = sgtopo.build_catalog(2, gen, sgtopo.RandomStream(3, sgtopo.streams.CATALOG), threads=1)
    lib = sgtopo.ElementLibrary(mesh, cat)
    rng = np.random.default_rng(0)
    theta = rng.uniform(-1.5, 1.5, model.design_size())
    layout = [int(i) for i in rng.integers(0, 2, mesh.element_count())]
    comps = [int(i) for i in rng.choice(model.design_size(), 8, replace=False)]
    rows, worst = sgtopo.fd_check(model, sgtopo.Functional.STRAIN_ENERGY, theta, layout, lib, comps)
    assert len(rows) == 8
    assert worst < 1e-4
    _, worst_mass = sgtopo.fd_check(model, sgtopo.Functional.MASS, theta, layout, lib, comps)
    assert worst_mass < 1e-5


def test_adam_first_step_is_eta_times_sign():
    st = sgtopo.AdamState()
    st.eta = 0.05
    theta = np.zeros(3)
    h = np.array([2.0, -0.5, 1e-3])
    x = sgtopo.adam_step(st, theta, h, sgtopo.Range(-1.5, 1.5))
    assert np.allclose(x, -0.05 * np.sign(h), rtol=1e-5)


def test_gcmma_scalar_problem():
    # min (t - 1)^2 subject to t - 0.4 <= 0 on [0, 1]
    st = sgtopo.GcmmaState()
    t = np.array([0.9])
    bounds = sgtopo.Range(0.0, 1.0)
    for _ in range(30):
        t_new, kkt, y, restoration = sgtopo.gcmma_step(
            st, t, (t[0] - 1) ** 2, np.array([2 * (t[0] - 1)]), [t[0] - 0.4], [np.array([1.0])], bounds
        )
        if abs(t_new[0] - t[0]) < 1e-12:
            t = t_new
            break
        t = t_new
    assert t[0] == pytest.approx(0.4, abs=1e-4)


def test_config_presets_and_errors():
    c = sgtopo.preset("Ia")
    assert (c.nx, c.ny, c.samples, c.eta) == (120, 40, 4, 0.05)
    assert c.model.mass_target == 0.4
    d = sgtopo.parse_config(c.to_ini())
    assert d.hash() == c.hash()
    c.set("optimizer.eta=0.01")
    assert c.eta == 0.01
    with pytest.raises(sgtopo.ConfigError):
        c.set("optimizer.samples=0")
    with pytest.raises(ValueError, match="line 2"):
        sgtopo.parse_config("[run]\nbogus = 1\n")


def test_tiny_run(tmp_path):
    c = sgtopo.preset("desk")
    c.update(
        [
            "mesh.nx=12",
            "mesh.ny=4",
            "mesh.holes_x=4",
            "mesh.holes_y=2",
            "catalog.count=3",
            "catalog.resolution=16",
            "optimizer.iterations=4",
            "verification.samples=8",
            f"run.output={tmp_path}",
        ]
    )
    r = sgtopo.run(c)
    assert r.exit_code == 0, r.error
    assert r.iterations == 4
    assert len(r.history) == 4
    assert (r.directory / "history.csv").exists()
    assert r.final_mc.samples == 8
    assert math.isfinite(r.final_mc.objective["mean"])
    again = sgtopo.run(c, directory=tmp_path / "again")
    assert again.history == r.history
    assert np.array_equal(again.theta, r.theta)
