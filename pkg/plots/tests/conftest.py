import numpy as np
import pytest

TAG = "# safesdre-trajectory v1"


def fabricate_csv(
    path,
    n=2,
    q=1,
    m=1,
    steps=40,
    cert=False,
    status="Converged",
    seed=0,
):
    """Write a synthetic trajectory CSV that satisfies schema v1."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 2.0, steps)
    decay = np.exp(-t)[:, None]
    x = decay * rng.uniform(2.0, 4.0, size=n)[None, :]
    z = decay * rng.uniform(-0.2, 0.2, size=q)[None, :] if q else np.zeros((steps, 0))
    u = decay * rng.uniform(-1.0, 1.0, size=m)[None, :]
    h = 1.0 + np.linspace(0.0, 3.0, steps)[:, None]
    gains = np.tile(rng.uniform(-2.0, 2.0, size=m * (n + q)), (steps, 1))

    cols = ["t"]
    cols += [f"x{i+1}" for i in range(n)]
    cols += [f"z{i+1}" for i in range(q)]
    cols += [f"u{i+1}" for i in range(m)]
    cols += ["h_min", "z_consistency"]
    if cert:
        cols += ["W", "W_dot", "min_eig_Q_hat"]
    cols += [f"K{i+1}_{j+1}" for i in range(m) for j in range(n + q)]
    cols += ["status"]

    lines = [TAG, ",".join(cols)]
    for k in range(steps):
        row = [f"{t[k]:.17g}"]
        row += [f"{v:.17g}" for v in x[k]]
        row += [f"{v:.17g}" for v in z[k]]
        row += [f"{v:.17g}" for v in u[k]]
        row += [f"{h[k,0]:.17g}", "1e-09"]
        if cert:
            W = float(np.sum(x[k] ** 2))
            row += [f"{W:.17g}", f"{-W:.17g}", "0.5"]
        row += [f"{v:.17g}" for v in gains[k]]
        row.append(status)
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def csv_pair(tmp_path):
    a = fabricate_csv(tmp_path / "demo__bas_sdre__ic00.csv", seed=1)
    b = fabricate_csv(tmp_path / "demo__bas_lqr__ic00.csv", seed=2)
    return [a, b]


@pytest.fixture
def scenario_yaml(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(
        "name: demo\n"
        "obstacles:\n"
        "  - {center: [2.0, 2.0], radius: 0.5}\n"
        "  - {center: [-1.0, 1.5], radius: 0.3}\n",
        encoding="utf-8",
    )
    return path
