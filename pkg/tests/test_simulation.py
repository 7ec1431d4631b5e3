import numpy as np
import pytest

from safesdre.config import load_config
from safesdre.controllers import make_controller
from safesdre.exceptions import EmptyTrajectory
from safesdre.simulation import (
    Trajectory,
    convergence_and_safety_metrics,
    read_trajectory_csv,
    rollout,
    run_scenario,
    write_trajectory_csv,
)

BOX_2D = {
    "name": "sim",
    "system": {"benchmark": "linear2d"},
    "obstacles": [{"center": [2.0, 2.0], "radius": 0.5}],
    "cost": {"q_diag": [1.0, 1.0], "q_z": 1.0, "r_diag": [1.0]},
    "controllers": ["bas_sdre", "bas_lqr"],
    "integrator": {"dt": 1e-3, "t_final": 8.0},
    "initial_conditions": {"explicit": [[6.0, 2.0]]},
    "log_every": 10,
}


def cfg_with(**over):
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in BOX_2D.items()}
    raw.update(over)
    return load_config(raw)


@pytest.fixture(scope="module")
def setup_2d():
    cfg = cfg_with()
    aug = cfg.build_augmented()
    cost, pcost = cfg.build_costs(aug)
    return cfg, aug, cost, pcost


class TestRollout:
    def test_origin_converges_immediately(self, setup_2d):
        cfg, aug, cost, pcost = setup_2d
        ctrl = make_controller("bas_sdre", aug, cost, pcost, check_care=False)
        traj = rollout(cfg, ctrl, np.zeros(2), aug=aug, cost=cost)
        assert traj.status == "Converged"
        assert traj.t[-1] == 0.0
        assert len(traj) == 1

    def test_safe_convergence_and_consistency(self, setup_2d):
        cfg, aug, cost, pcost = setup_2d
        ctrl = make_controller("bas_sdre", aug, cost, pcost, check_care=False)
        traj = rollout(cfg, ctrl, np.array([6.0, 2.0]), aug=aug, cost=cost)
        assert traj.status == "Converged"
        assert np.min(traj.h_min) > 0.0
        # Exact-residual initialization keeps |z + beta0 - beta(x)| tiny.
        assert np.nanmax(traj.z_consistency) <= 1e-3
        assert traj.z_consistency[0] <= 1e-15
        assert np.linalg.norm(traj.x_bar[-1]) <= cfg.convergence_eps

    def test_unsafe_rollout_halts_at_floor(self, setup_2d):
        cfg, aug, cost, pcost = setup_2d
        ctrl = make_controller("bas_lqr", aug, cost, pcost)
        traj = rollout(cfg, ctrl, np.array([6.0, 3.0]), aug=aug, cost=cost)
        assert traj.status == "Unsafe"
        assert traj.h_min[-1] <= cfg.h_floor

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_unsafe_rollout_blows_up_barrier_state(self):
        # With the overflow floor disabled the barrier state must exceed
        # 1e3 by the violation step (boundedness <-> safety). The barrier
        # blow-up can trip the divergence guard in the same step the
        # boundary is crossed, so only the z magnitude is pinned.
        # dt must resolve the barrier layer ahead of the boundary, or the
        # integrator jumps it in a single step; 1e-4 pins the last safe
        # sample inside h < 3e-4 where 1/h > 1e3.
        cfg = cfg_with(
            h_floor=0.0, log_every=1, integrator={"dt": 1e-4, "t_final": 8.0}
        )
        aug = cfg.build_augmented()
        cost, pcost = cfg.build_costs(aug)
        ctrl = make_controller("bas_lqr", aug, cost, pcost)
        traj = rollout(cfg, ctrl, np.array([6.0, 3.0]), aug=aug, cost=cost)
        assert traj.status in ("Unsafe", "Timeout")
        if np.any(traj.h_min <= 0.0):
            violation = int(np.argmax(traj.h_min <= 0.0))
        else:
            violation = len(traj) - 1
        assert np.nanmax(np.abs(traj.z[: violation + 1])) > 1e3
        # The matching normal-mode rollout is flagged Unsafe.
        normal = rollout(cfg_with(), ctrl, np.array([6.0, 3.0]), aug=aug, cost=cost)
        assert normal.status == "Unsafe"

    def test_timeout_when_horizon_too_short(self, setup_2d):
        _, aug, cost, pcost = setup_2d
        cfg = cfg_with(integrator={"dt": 1e-3, "t_final": 0.05})
        ctrl = make_controller("bas_sdre", aug, cost, pcost, check_care=False)
        traj = rollout(cfg, ctrl, np.array([6.0, 2.0]), aug=aug, cost=cost)
        assert traj.status == "Timeout"
        assert traj.t[-1] == pytest.approx(0.05)

    def test_rk4_order_with_continuous_feedback(self, setup_2d):
        # Halving dt must shrink the one-sided defect ~16x; measured as a
        # log-log slope against a fine-step reference, continuous feedback
        # so the integrated vector field does not change with dt.
        _, aug, cost, pcost = setup_2d
        ctrl = make_controller("bas_lqr", aug, cost, pcost)
        x0 = np.array([4.0, -1.0])

        def final_state(dt):
            cfg = cfg_with(
                integrator={"dt": dt, "t_final": 1.0, "control_update": "continuous"},
                convergence_eps=1e-12,
                log_every=1000000,
            )
            traj = rollout(cfg, ctrl, x0, aug=aug, cost=cost)
            assert traj.status == "Timeout"  # ran the full |horizon
            return traj.x_bar[-1]

        ref = final_state(2.5e-4)
        dts = np.array([4e-3, 2e-3, 1e-3])
        errs = np.array([np.linalg.norm(final_state(dt) - ref) for dt in dts])
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert slope >= 3.5

    def test_log_decimation_keeps_terminal_row(self, setup_2d):
        cfg, aug, cost, pcost = setup_2d
        ctrl = make_controller("bas_sdre", aug, cost, pcost, check_care=False)
        traj = rollout(cfg, ctrl, np.array([6.0, 2.0]), aug=aug, cost=cost)
        steps = np.diff(traj.t)[:-1]
        assert np.allclose(steps, cfg.dt * cfg.log_every)
        assert np.linalg.norm(traj.x_bar[-1]) <= cfg.convergence_eps


class TestMetrics:
    def test_metrics_fields(self, setup_2d):
        cfg, aug, cost, pcost = setup_2d
        ctrl = make_controller("bas_sdre", aug, cost, pcost, check_care=False)
        traj = rollout(cfg, ctrl, np.array([6.0, 2.0]), aug=aug, cost=cost)
        met = convergence_and_safety_metrics(traj)
        assert met.status == "Converged"
        assert met.settling_time <= cfg.t_final
        assert met.min_h > 0
        assert met.peak_abs_z > 0
        assert met.peak_u > 0
        assert np.isfinite(met.gain_rate)

    def test_unsafe_metrics(self, setup_2d):
        cfg, aug, cost, pcost = setup_2d
        ctrl = make_controller("bas_lqr", aug, cost, pcost)
        traj = rollout(cfg, ctrl, np.array([6.0, 3.0]), aug=aug, cost=cost)
        met = convergence_and_safety_metrics(traj)
        assert met.min_h <= cfg.h_floor
        assert np.isnan(met.settling_time)

    def test_gain_continuity_flagging(self, setup_2d):
        # No chattering along a smooth run: the logged gain rate is finite
        # and stays under a generous bound; a tiny bound raises the flag.
        cfg, aug, cost, pcost = setup_2d
        ctrl = make_controller("bas_sdre", aug, cost, pcost, check_care=False)
        traj = rollout(cfg, ctrl, np.array([6.0, 2.0]), aug=aug, cost=cost)
        met = convergence_and_safety_metrics(traj, gain_rate_bound=1e3)
        assert not met.gain_flagged
        met_tight = convergence_and_safety_metrics(traj, gain_rate_bound=1e-9)
        assert met_tight.gain_flagged

    def test_gain_departure_correlates_with_proximity(self, setup_2d):
        # The point-wise gain drifts from the fixed gain as the obstacle
        # nears: corr(||K - K_lqr||, 1/h) > 0 along the run.
        cfg, aug, cost, pcost = setup_2d
        sdre = make_controller("bas_sdre", aug, cost, pcost, check_care=False)
        lqr = make_controller("bas_lqr", aug, cost, pcost)
        traj = rollout(cfg, sdre, np.array([6.0, 2.0]), aug=aug, cost=cost)
        dev = np.linalg.norm(traj.gains - lqr.fixed_gain.reshape(-1), axis=1)
        corr = np.corrcoef(dev, 1.0 / traj.h_min)[0, 1]
        assert corr > 0.0

    def test_empty_rejected(self):
        traj = Trajectory(
            t=np.zeros(0), x_bar=np.zeros((0, 3)), u=np.zeros((0, 1)),
            gains=np.zeros((0, 3)), h_min=np.zeros(0), z_consistency=np.zeros(0),
            W=None, W_dot=None, min_eig_Q_hat=None, status="Timeout",
            n=2, q=1, m=1,
        )
        with pytest.raises(EmptyTrajectory):
            convergence_and_safety_metrics(traj)


class TestCsvRoundTrip:
    def test_round_trip_exact(self, setup_2d, tmp_path):
        cfg, aug, cost, pcost = setup_2d
        ctrl = make_controller("bas_sdre", aug, cost, pcost, check_care=False)
        traj = rollout(cfg, ctrl, np.array([6.0, 2.0]), aug=aug, cost=cost)
        path = write_trajectory_csv(traj, tmp_path / "t.csv")
        back = read_trajectory_csv(path)
        assert back.status == traj.status
        assert (back.n, back.q, back.m) == (2, 1, 1)
        # 17 significant digits round-trip doubles exactly.
        assert np.array_equal(back.t, traj.t)
        assert np.array_equal(back.x_bar, traj.x_bar)
        assert np.array_equal(back.gains, traj.gains)

    def test_schema_tag_required(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,x1\n0,1\n", encoding="utf-8")
        with pytest.raises(EmptyTrajectory, match="schema"):
            read_trajectory_csv(bad)

    def test_header_pattern_enforced(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(
            "# safesdre-trajectory v1\nt,x1,qq,status\n0,1,2,ok\n", encoding="utf-8"
        )
        with pytest.raises(EmptyTrajectory, match="header"):
            read_trajectory_csv(bad)

    def test_no_rows_rejected(self, setup_2d, tmp_path):
        bad = tmp_path / "empty.csv"
        bad.write_text(
            "# safesdre-trajectory v1\n"
            "t,x1,x2,z1,u1,h_min,z_consistency,K1_1,K1_2,K1_3,status\n",
            encoding="utf-8",
        )
        with pytest.raises(EmptyTrajectory, match="no data rows"):
            read_trajectory_csv(bad)


class TestRunScenario:
    def test_summary_shape_and_files(self, tmp_path):
        cfg = cfg_with()
        summary = run_scenario(cfg, out_dir=tmp_path / "out")
        assert len(summary.rows) == 2  # 2 controllers x 1 initial condition
        assert summary.summary_csv.exists()
        assert summary.summary_txt.exists()
        for row in summary.rows:
            assert (tmp_path / "out" / f"sim__{row.controller}__ic00.csv").exists()

    def test_empty_controller_list(self, tmp_path):
        cfg = cfg_with(controllers=[])
        summary = run_scenario(cfg, out_dir=tmp_path / "out")
        assert summary.rows == []
        assert summary.all_converged_safe

    def test_bit_identical_reruns(self, tmp_path):
        cfg = cfg_with()
        a = run_scenario(cfg, out_dir=tmp_path / "a")
        b = run_scenario(cfg, out_dir=tmp_path / "b")
        for ra, rb in zip(a.rows, b.rows):
            pa = tmp_path / "a" / f"sim__{ra.controller}__ic00.csv"
            pb = tmp_path / "b" / f"sim__{rb.controller}__ic00.csv"
            assert pa.read_bytes() == pb.read_bytes()
        assert (tmp_path / "a" / "summary.csv").read_text().replace("a/", "") == (
            tmp_path / "b" / "summary.csv"
        ).read_text().replace("b/", "")

    def test_parallel_jobs_match_serial(self, tmp_path):
        cfg = cfg_with()
        serial = run_scenario(cfg, out_dir=tmp_path / "s")
        parallel = run_scenario(cfg, out_dir=tmp_path / "p", jobs=2)
        for rs, rp in zip(serial.rows, parallel.rows):
            assert rs.status == rp.status
            assert rs.min_h == rp.min_h
            ps = tmp_path / "s" / f"sim__{rs.controller}__ic00.csv"
            pp = tmp_path / "p" / f"sim__{rp.controller}__ic00.csv"
            assert ps.read_bytes() == pp.read_bytes()
