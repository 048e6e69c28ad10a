import numpy as np
import pytest
import torch

from picsb.baselines.pinns import (
    CoordinateNet,
    PinnsConfig,
    _Model,
    init_coordinate_net,
    pinns_fit,
    pinns_full_config,
    pinns_problem_for_sample,
)
from picsb.fields import Field, RngStream
from picsb.observation import ObservationSet, observe
from picsb.pde.dataset import load_sample


def closed_form_mlp_count(in_dim, hidden, depth):
    total = in_dim * hidden + hidden
    total += (depth - 1) * (hidden * hidden + hidden)
    total += hidden * 1 + 1
    return total


class TestConfig:
    def test_defaults_match_reference_profile(self):
        cfg = PinnsConfig()
        assert cfg.hidden == 512 and cfg.depth == 6
        assert cfg.n_colloc == 8192
        assert cfg.lam_obs == 1.0 and cfg.lam_phys == 1.0
        assert cfg.learning_rate == 1e-3

    def test_kolmogorov_profile(self):
        cfg = pinns_full_config("kolmogorov")
        assert cfg.hidden == 256 and cfg.depth == 4

    def test_darcy_profile_clips(self):
        cfg = pinns_full_config("darcy")
        assert cfg.clip_norm == 1e-5
        assert cfg.lam_bc == 1.0 and cfg.n_bc == 2048

    def test_invalid_counts_rejected(self):
        with pytest.raises(ValueError):
            PinnsConfig(hidden=0)


class TestCoordinateNet:
    def test_parameter_count_full_size(self):
        net = CoordinateNet(2, 512, 6)
        total = sum(p.numel() for p in net.parameters())
        assert total == closed_form_mlp_count(2, 512, 6)

    def test_init_deterministic(self):
        a = init_coordinate_net(2, PinnsConfig(hidden=8, depth=2), RngStream(1))
        b = init_coordinate_net(2, PinnsConfig(hidden=8, depth=2), RngStream(1))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)


class TestResidualDerivatives:
    def test_burgers_residual_matches_network_fd(self, smoke_burgers):
        s = load_sample(smoke_burgers.sample_dirs("train")[0], "burgers")
        problem = pinns_problem_for_sample("burgers", s)
        net = init_coordinate_net(2, PinnsConfig(hidden=16, depth=2), RngStream(3))
        model = _Model(net, problem)
        pts = RngStream(4).uniform(0.2, 0.8, (5, 2))
        pts_t = torch.from_numpy(pts).requires_grad_(True)
        res = model.residual(pts_t).detach().numpy().ravel()

        nu = s["meta"]["nu_hf"]
        d = 1e-6
        d2 = 1e-4  # second difference needs a larger step against roundoff

        def u(p):
            with torch.no_grad():
                return net(torch.from_numpy(p)).numpy().ravel()

        for k in range(5):
            p = pts[k : k + 1]
            ux = (u(p + [[d, 0]]) - u(p - [[d, 0]])) / (2 * d)
            ut = (u(p + [[0, d]]) - u(p - [[0, d]])) / (2 * d)
            uxx = (u(p + [[d2, 0]]) - 2 * u(p) + u(p - [[d2, 0]])) / d2**2
            fd_res = ut + u(p) * ux - nu * uxx
            assert abs(fd_res[0] - res[k]) / max(abs(fd_res[0]), 1e-8) < 1e-5

    def test_kolmogorov_value_is_laplacian_of_potential(self, tiny_kolmogorov):
        s = load_sample(tiny_kolmogorov.sample_dirs("train")[0], "kolmogorov")
        problem = pinns_problem_for_sample("kolmogorov", s)
        net = init_coordinate_net(5, PinnsConfig(hidden=12, depth=2), RngStream(5))
        model = _Model(net, problem)
        pts = RngStream(6).uniform(0.5, 5.0, (3, 3))
        pts_t = torch.from_numpy(pts).requires_grad_(True)
        w = model.value(pts_t).detach().numpy().ravel()

        d = 1e-5

        def psi(p):
            with torch.no_grad():
                pt = torch.from_numpy(p)
                return model.net(model._features(pt)).numpy().ravel()

        for k in range(3):
            p = pts[k : k + 1]
            p11 = (psi(p + [[d, 0, 0]]) - 2 * psi(p) + psi(p - [[d, 0, 0]])) / d**2
            p22 = (psi(p + [[0, d, 0]]) - 2 * psi(p) + psi(p - [[0, d, 0]])) / d**2
            assert abs((p11 + p22)[0] - w[k]) / max(abs(w[k]), 1e-8) < 1e-4


class TestFit:
    def test_pure_regression_linear_field(self, smoke_burgers):
        # lam_phys = 0 with dense observations of 0.3*xi + 0.1: plain regression
        s = load_sample(smoke_burgers.sample_dirs("train")[0], "burgers")
        meta = s["meta"]
        nx, nt = meta["nx"], meta["nt"]
        xi = np.arange(nx) * meta["h"]
        target = Field(np.outer(0.3 * xi + 0.1, np.ones(nt)), ("space", "time"))
        obs = observe(target, Field(np.ones((nx, nt)), ("space", "time")))
        cfg = PinnsConfig(hidden=32, depth=2, lam_phys=0.0, epochs=800,
                          learning_rate=1e-2)
        problem = pinns_problem_for_sample("burgers", s)
        _, pred = pinns_fit(obs, problem, cfg, RngStream(7))
        rel = np.linalg.norm(pred.values - target.values) / np.linalg.norm(target.values)
        assert rel < 0.01

    def test_empty_observations_rejected(self, smoke_burgers):
        s = load_sample(smoke_burgers.sample_dirs("train")[0], "burgers")
        empty = ObservationSet(
            mask=Field(np.zeros(s["lf"].dims), s["lf"].axis_tags),
            values=Field(np.zeros(s["lf"].dims), s["lf"].axis_tags),
        )
        with pytest.raises(ValueError):
            pinns_fit(empty, pinns_problem_for_sample("burgers", s), PinnsConfig(),
                      RngStream(0))

    def test_darcy_fit_smoke_improves_loss(self, tiny_darcy):
        s = load_sample(tiny_darcy.sample_dirs("train")[0], "darcy")
        cfg = PinnsConfig(hidden=24, depth=2, n_colloc=128, n_bc=64, epochs=120,
                          clip_norm=1e-5, learning_rate=1e-2)
        problem = pinns_problem_for_sample("darcy", s)
        net, pred = pinns_fit(s["obs"], problem, cfg, RngStream(8))
        assert pred.dims == s["lf"].dims
        assert np.all(np.isfinite(pred.values))
