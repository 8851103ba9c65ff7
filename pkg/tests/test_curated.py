import numpy as np
import pytest

from curated import CURATED
from nonlocal_evolution.grid import Trajectory
from nonlocal_evolution.nonlinearity import audit_envelope, eval_phi_all


@pytest.mark.parametrize("name", sorted(CURATED))
def test_curated_envelopes_hold(name):
    spec = CURATED[name]()
    if spec.n_components == 1:
        worst = audit_envelope(spec.P, spec.E[0], spec.tube.fn(0), spec.grid, spec.d,
                               norm_kind=spec.norm_kind)
        assert worst <= 1e-12
        return
    # systems: sample inside the product tube and compare block by block
    rng = np.random.default_rng(7)
    t = spec.grid.nodes
    R = np.stack([spec.tube.values(spec.grid, i) for i in range(spec.n_components)], axis=-1)
    for _ in range(64):
        x = np.empty((len(t), spec.d))
        for i, blk in enumerate(spec.blocks):
            width = blk.stop - blk.start
            dirs = rng.standard_normal((len(t), width))
            dirs /= np.maximum(np.linalg.norm(dirs, axis=1), 1e-300)[:, None]
            x[:, blk] = dirs * (R[:, i] * rng.uniform(0, 1, len(t)))[:, None]
        phi = eval_phi_all(spec.P, Trajectory(spec.grid, x))
        unorm = spec.component_norms(x)
        pnorm = spec.component_norms(phi)
        for i, E in enumerate(spec.E):
            bound = E.delta(t) * E.psi(unorm[:, i])
            assert np.all(pnorm[:, i] <= bound + 1e-12)
