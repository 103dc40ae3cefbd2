"""Acceptance suite: one test per criterion, each printing a PASS line.

Criterion 5 trains LTC NCP-19 and CT-RNN fully-64 end to end on a shared
40-episode dataset and evaluates them closed loop; its artifacts (metric
reports in the reference table layouts, the non-gating trend report) are
written to acceptance_report/ at the repo root.  Run with `pytest -s` to
see the per-criterion lines while they happen.
"""

import hashlib
import json
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import ALL_KINDS, PARAM_FIELDS, params_dict, random_net
from liquidlab import kernels
from liquidlab.config import load_config
from liquidlab.dynamics import (electrical_derivative,
                                electrical_rearranged_derivative,
                                ltc_derivative)
from liquidlab.harness import (eval_closed_loop, generate_experiment_dataset,
                               saliency_battery, train_experiment,
                               wiring_label, write_report_csv)
from liquidlab.metrics import (crash_likelihood, lipschitz, mse, ssim,
                               trajectory_similarity, weighted_mse)
from liquidlab.params import init_params
from liquidlab.policy import Policy
from liquidlab.solver import SolverConfig
from liquidlab.trainer import TrainConfig
from liquidlab.wiring import (WiringConfig, build_fully_connected, build_ncp,
                              compile_edges, count_parameters)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "liquidlab",
                          "configs")
REPORT_DIR = os.path.join(os.path.dirname(__file__), "..",
                          "acceptance_report")


def _announce(criterion, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# ---------------------------------------------------------------------------
# Criterion 1: Table reproduction (exact integers, < 1 s)
# ---------------------------------------------------------------------------

def test_criterion_1_parameter_budgets():
    t0 = time.time()
    ncp19 = load_config(os.path.join(CONFIG_DIR, "ltc_ncp19.json")) \
        .build_wiring()
    ncp64 = load_config(os.path.join(CONFIG_DIR, "ctrnn_ncp64.json")) \
        .build_wiring()
    fully19 = build_fully_connected(19, 64)
    fully64 = build_fully_connected(64, 64)
    checks = [
        (count_parameters(ncp19, "ltc"), 1833),
        (count_parameters(fully19, "ltc"), 6365),
        (count_parameters(ncp19, "ctrnn"), 482),
        (count_parameters(ncp64, "ctrnn"), 1828),
        (count_parameters(fully64, "ctrnn"), 8320),
        (fully19.n_synapses, 1577),
        (fully64.n_synapses, 8192),
        (ncp19.n_synapses, 444),
        (ncp64.n_synapses, 1700),
    ]
    ok = all(got == want for got, want in checks)
    _announce(1, ok and time.time() - t0 < 1.0,
              f"parameter counts {[g for g, _ in checks[:5]]}, synapse "
              f"totals {[g for g, _ in checks[5:]]} "
              f"({time.time() - t0:.2f} s)")


# ---------------------------------------------------------------------------
# Criterion 2: gradient suite (< 2 min)
# ---------------------------------------------------------------------------

def _loss_and_grads(kind, p, ei, u_seq, labels, solver, motor):
    pd = params_dict(p)
    xs = kernels.seq_forward(kind, solver.method, ei, pd, u_seq,
                             np.zeros((u_seq.shape[0], ei.n_neurons)),
                             solver.dt, solver.unfold_steps)
    out = xs[:, solver.unfold_steps::solver.unfold_steps][..., motor]
    loss = float(np.mean((out - labels) ** 2))
    d_frames = np.zeros((u_seq.shape[0], u_seq.shape[1], ei.n_neurons))
    d_frames[..., motor] = 2.0 * (out - labels) / out.size
    grads, _ = kernels.seq_backward(kind, solver.method, ei, pd, u_seq, xs,
                                    d_frames, solver.dt, solver.unfold_steps)
    return loss, grads


def test_criterion_2_gradient_suite():
    t0 = time.time()
    solver = SolverConfig(unfold_steps=2)
    h = 1e-4  # roundoff floor ~3e-13 keeps 1e-4 rel error meaningful at 1e-8
    worst = 0.0
    checked = 0
    for kind in ALL_KINDS:
        for case in range(50):
            graph, ei, p = random_net(kind, 10_000 + case, max_neurons=8)
            rng = np.random.default_rng((1, case))
            n_frames = int(rng.integers(2, 6))  # T <= 5
            u_seq = rng.uniform(-1, 1, (1, n_frames, ei.n_inputs))
            labels = rng.uniform(-0.3, 0.3, (1, n_frames))
            motor = graph.motor_indices[0]
            _, grads = _loss_and_grads(kind, p, ei, u_seq, labels, solver,
                                       motor)

            def loss_of(q):
                return _loss_and_grads(kind, q, ei, u_seq, labels, solver,
                                       motor)[0]

            for field in p.trainable_fields():
                arr = getattr(p, field)
                for i in range(arr.size):
                    an = grads[field][i]
                    if abs(an) <= 1e-8:
                        continue
                    q = p.copy()
                    getattr(q, field)[i] += h
                    up = loss_of(q)
                    getattr(q, field)[i] -= 2 * h
                    down = loss_of(q)
                    fd = (up - down) / (2 * h)
                    rel = abs(an - fd) / max(abs(an), abs(fd))
                    worst = max(worst, rel)
                    checked += 1
                    assert rel <= 1e-4, \
                        f"{kind} case {case} {field}[{i}]: rel {rel:.2e}"
    elapsed = time.time() - t0
    _announce(2, elapsed < 120 and checked > 1000,
              f"{checked} parameter gradients across 200 nets, worst "
              f"relative error {worst:.2e} ({elapsed:.0f} s)")


# ---------------------------------------------------------------------------
# Criterion 3: dynamics invariants (1000-case suites, < 2 min)
# ---------------------------------------------------------------------------

def test_criterion_3_dynamics_invariants():
    t0 = time.time()
    rng = np.random.default_rng(2024)

    # (a) plain vs rearranged electrical form, |e_leak| >= 0.1
    worst_identity = 0.0
    for case in range(1000):
        graph, ei, p = random_net("electrical", 20_000 + case, max_neurons=6)
        p.e_leak[:] = np.sign(p.e_leak + 1e-12) * np.maximum(
            np.abs(p.e_leak), 0.1)
        x = rng.uniform(-0.8, 0.8, ei.n_neurons)
        u = rng.uniform(-1, 1, ei.n_inputs)
        diff = np.abs(electrical_derivative(x, u, p, ei)
                      - electrical_rearranged_derivative(x, u, p, ei)).max()
        worst_identity = max(worst_identity, diff)
        assert diff < 1e-10

    # (b) hull sign conditions, LTC and electrical
    for case in range(1000):
        kind = "ltc" if case % 2 == 0 else "electrical"
        graph, ei, p = random_net(kind, 30_000 + case, max_neurons=6)
        u = rng.uniform(-1, 1, ei.n_inputs)
        x = rng.uniform(-1, 1, ei.n_neurons)
        i = int(rng.integers(ei.n_neurons))
        inc = np.where(ei.dst == i)[0]
        if kind == "ltc":
            hull = np.concatenate([[p.e_leak[i]], p.syn_e[inc]])
        else:
            y = np.concatenate([x, u])
            hull = np.concatenate([[p.e_leak[i]], y[ei.src_y[inc]]])
        x[i] = hull.max() + rng.uniform(0, 0.5)
        fn = ltc_derivative if kind == "ltc" else electrical_derivative
        assert fn(x, u, p, ei)[i] <= 1e-12
        x[i] = hull.min() - rng.uniform(0, 0.5)
        assert fn(x, u, p, ei)[i] >= -1e-12

    # (c) semi-implicit SLTC bound |x| <= max(|x0|, |e_leak| / S(g_leak))
    from liquidlab.autodiff import logistic
    for wiring_case in range(100):
        graph, ei, p = random_net("sltc", 40_000 + wiring_case,
                                  max_neurons=6)
        pd = params_dict(p)
        batch = 10  # 100 wirings x 10 rollouts = 1000 cases
        u_seq = rng.uniform(-1, 1, (batch, 60, ei.n_inputs))
        x0 = rng.uniform(-1, 1, (batch, ei.n_neurons))
        xs = kernels.seq_forward("sltc", "semi-implicit-euler", ei, pd,
                                 u_seq, x0, 1 / 30, 2)
        bound = np.maximum(np.abs(x0)[:, None, :],
                           (np.abs(p.e_leak) / logistic(p.g_leak))[None, None])
        assert np.all(np.abs(xs) <= bound * (1 + 1e-12) + 1e-15)

    # (d) explicit-Euler convergence order: halving dt halves the error
    ratios = []
    for wiring_case in range(100):
        kind = ALL_KINDS[wiring_case % 4]
        graph, ei, p = random_net(kind, 50_000 + wiring_case, max_neurons=6)
        pd = params_dict(p)
        batch = 10
        u_seq = 0.6 * np.sin(
            rng.uniform(0, 2 * np.pi, (batch, 3, ei.n_inputs))
            + np.linspace(0, 2, 3)[None, :, None])
        x0 = rng.uniform(-0.3, 0.3, (batch, ei.n_neurons))

        def frames_at(unfold):
            xs = kernels.seq_forward(kind, "explicit-euler", ei, pd, u_seq,
                                     x0, 1.0, unfold)
            return xs[:, unfold::unfold]

        ref = frames_at(512)
        err_a = np.linalg.norm((frames_at(16) - ref).reshape(batch, -1),
                               axis=1)
        err_b = np.linalg.norm((frames_at(32) - ref).reshape(batch, -1),
                               axis=1)
        ratio = err_a / err_b
        ratios.extend(ratio.tolist())
        assert np.all((ratio >= 1.5) & (ratio <= 2.5)), \
            f"wiring {wiring_case}: ratios {ratio}"

    elapsed = time.time() - t0
    _announce(3, elapsed < 120,
              f"identity <= {worst_identity:.1e}, hull signs ok, SLTC bound "
              f"ok, Euler ratio in [{min(ratios):.2f}, {max(ratios):.2f}] "
              f"({elapsed:.0f} s)")


# ---------------------------------------------------------------------------
# Criterion 4: metric oracles (< 30 s)
# ---------------------------------------------------------------------------

def test_criterion_4_metric_oracles():
    t0 = time.time()
    rng = np.random.default_rng(7)

    assert mse(np.ones(5), np.ones(5)) == 0.0
    assert mse(np.full(8, 0.5), np.zeros(8)) == pytest.approx(0.25)
    a, b = rng.standard_normal(64), rng.standard_normal(64)
    assert mse(a, b) == pytest.approx(
        sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)) / 64, rel=1e-12)

    label = np.full(20, -0.04)
    pred = label + rng.normal(0, 0.02, 20)
    assert weighted_mse(pred, label) == pytest.approx(mse(pred, label),
                                                      rel=1e-12)
    flat = np.zeros(20)
    flat[:2] = 0.1
    noisy = flat.copy()
    noisy[10:] = 0.3
    assert weighted_mse(noisy, flat) < 1e-3 * mse(noisy, flat)

    assert lipschitz(np.full(9, 0.2), 0.1) == 0.0
    assert lipschitz(np.arange(6) * 0.03, 0.05) == pytest.approx(0.6)

    # SSIM vs the window-by-window hand computation on 8x8 fixtures
    def oracle(x, y):
        vals = []
        for oy in range(x.shape[0] - 6):
            for ox in range(x.shape[1] - 6):
                wa, wb = x[oy:oy + 7, ox:ox + 7], y[oy:oy + 7, ox:ox + 7]
                ma, mb_ = wa.mean(), wb.mean()
                va = (wa ** 2).mean() - ma ** 2
                vb = (wb ** 2).mean() - mb_ ** 2
                cov = (wa * wb).mean() - ma * mb_
                vals.append(((2 * ma * mb_ + 1e-4) * (2 * cov + 9e-4))
                            / ((ma ** 2 + mb_ ** 2 + 1e-4)
                               * (va + vb + 9e-4)))
        return float(np.mean(vals))

    worst = 0.0
    for _ in range(20):
        x = rng.uniform(0, 1, (8, 8))
        y = np.clip(x + rng.normal(0, 0.3, (8, 8)), 0, 1)
        worst = max(worst, abs(ssim(x, y) - oracle(x, y)))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    assert worst < 1e-10

    class E:
        def __init__(self, crashed, d=(0.0,)):
            self.crashed = crashed
            self.d = np.asarray(d)

    assert crash_likelihood([E(False)] * 4) == 0.0
    assert crash_likelihood([E(True)] * 3) == 1.0
    assert crash_likelihood([E(True), E(True)] + [E(False)] * 6) == 0.25

    series = rng.standard_normal(40)
    assert trajectory_similarity(E(False, series), E(False, series)) \
        == pytest.approx(1.0)

    elapsed = time.time() - t0
    _announce(4, elapsed < 30,
              f"metric examples and SSIM oracle (max diff {worst:.1e}) "
              f"({elapsed:.1f} s)")


# ---------------------------------------------------------------------------
# Criterion 5 + 6: desk-scale closed-loop experiment and trend report
# ---------------------------------------------------------------------------

NOISE_VARIANCES = (0.0, 0.1, 0.2)


def _acceptance_config(name):
    cfg = load_config(os.path.join(CONFIG_DIR, f"acceptance_{name}.json"))
    return cfg


@pytest.fixture(scope="module")
def desk_experiment():
    os.makedirs(REPORT_DIR, exist_ok=True)
    results = {}
    dataset = None
    t_start = time.time()
    for name in ("ltc_ncp19", "ctrnn_fully64"):
        cfg = _acceptance_config(name)
        if dataset is None:
            t0 = time.time()
            dataset = generate_experiment_dataset(cfg)
            print(f"[criterion 5] dataset: {len(dataset)} episodes "
                  f"({time.time() - t0:.0f} s)")
        t0 = time.time()
        bundle, history = train_experiment(cfg, dataset)
        print(f"[criterion 5] trained {name}: best val "
              f"{min(history.val_loss):.5f} ({time.time() - t0:.0f} s)")
        policy = Policy.from_checkpoint(bundle)
        t0 = time.time()
        reports, episodes = eval_closed_loop(policy, cfg)
        print(f"[criterion 5] evaluated {name} ({time.time() - t0:.0f} s)")
        # saliency robustness on held-out frames (first eval track, expert)
        frames = dataset[-1].frames[:40].astype(np.float64) / 255.0
        sal = saliency_battery(policy, frames, NOISE_VARIANCES,
                               seed=cfg.eval.seed)
        results[name] = {"config": cfg, "bundle": bundle, "policy": policy,
                         "reports": reports, "episodes": episodes,
                         "saliency": sal, "history": history}
        write_report_csv(os.path.join(REPORT_DIR, f"{name}_report.csv"),
                         reports, cfg)
    print(f"[criterion 5] total experiment time {time.time() - t_start:.0f} s")
    _write_trends(results)
    return results


def _write_trends(results):
    """Criterion 6: Lipschitz / activity-correlation / trajectory-similarity
    trends per condition, in the reference table layout (non-gating)."""
    lines = ["# trend report (non-gating): desk-scale analogs of the "
             "reference tables",
             "model,wiring,theme,noise_variance,crash_likelihood,"
             "lipschitz_mean,lipschitz_std,activity_corr_mean,"
             "activity_corr_std,traj_similarity_mean,traj_similarity_std,"
             "saliency_ssim_mean"]
    for name, res in results.items():
        sal = res["saliency"]
        for rep in res["reports"]:
            s = sal[rep.noise_variance].mean()
            cells = [rep.model, rep.wiring, rep.theme,
                     repr(float(rep.noise_variance)),
                     repr(float(rep.crash_likelihood))]
            for stat in (rep.lipschitz, rep.activity_correlation,
                         rep.trajectory_similarity):
                cells += ([repr(stat.mean), repr(stat.std)] if stat
                          else ["", ""])
            cells.append(repr(float(s)))
            lines.append(",".join(cells))
    path = os.path.join(REPORT_DIR, "trends.csv")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"[criterion 6] trend report written to {path}")


def test_criterion_5a_ltc_ncp19_noise_free_crash_zero(desk_experiment):
    res = desk_experiment["ltc_ncp19"]
    rates = {(r.theme, r.noise_variance): r.crash_likelihood
             for r in res["reports"]}
    clean = [v for (theme, var), v in rates.items() if var == 0.0]
    _announce("5a", all(v == 0.0 for v in clean),
              f"LTC NCP-19 noise-free crash likelihood per theme: {clean}")


def test_criterion_5b_crash_monotone_in_noise(desk_experiment):
    ok = True
    detail = []
    for name, res in desk_experiment.items():
        rates = {(r.theme, r.noise_variance): r.crash_likelihood
                 for r in res["reports"]}
        for theme in res["config"].data.themes:
            seq = [rates[(theme, v)] for v in NOISE_VARIANCES]
            detail.append(f"{name}/{theme}: {seq}")
            ok = ok and all(a <= b for a, b in zip(seq, seq[1:]))
    _announce("5b", ok, "crash likelihood non-decreasing in noise; "
              + "; ".join(detail))


def test_criterion_5c_saliency_ssim_non_increasing(desk_experiment):
    ok = True
    detail = []
    for name, res in desk_experiment.items():
        means = [res["saliency"][v].mean() for v in NOISE_VARIANCES]
        detail.append(f"{name}: {[f'{m:.3f}' for m in means]}")
        ok = ok and all(a >= b - 1e-12 for a, b in zip(means, means[1:]))
    _announce("5c", ok, "mean saliency SSIM non-increasing; "
              + "; ".join(detail))


def test_criterion_6_trend_report(desk_experiment):
    path = os.path.join(REPORT_DIR, "trends.csv")
    ok = os.path.exists(path)
    rows = open(path).read().strip().split("\n")
    _announce(6, ok and len(rows) >= 13,
              f"{len(rows) - 2} condition rows in {path} (non-gating trends)")


# ---------------------------------------------------------------------------
# Criterion 7: byte-identical reruns of every command
# ---------------------------------------------------------------------------

def _tree_digest(root):
    digest = hashlib.sha256()
    for base, _, files in sorted(os.walk(root)):
        for fname in sorted(files):
            p = os.path.join(base, fname)
            digest.update(os.path.relpath(p, root).encode())
            digest.update(open(p, "rb").read())
    return digest.hexdigest()


def test_criterion_7_reproducibility(tmp_path):
    from liquidlab.cli import main
    t0 = time.time()
    cfg_blob = {
        "name": "repro", "model_kind": "sltc", "wiring_kind": "ncp",
        "ncp": {"n_sensory": 8, "n_inter": 4, "n_command": 3, "n_motor": 1,
                "sensory_fanout": 2, "inter_fanout": 2,
                "command_recurrence": 3, "motor_fanin": 2, "seed": 5},
        "conv": {"n_features": 8,
                 "layers": [{"out_channels": 4, "kernel": 5, "stride": 2,
                             "activation": "tanh"},
                            {"out_channels": 6, "kernel": 3, "stride": 2,
                             "activation": "tanh"}]},
        "train": {"sequence_length": 10, "batch_size": 8, "epochs": 2,
                  "lr0": 1e-3, "weight_decay": 1e-6, "seed": 1,
                  "window_stride": 10, "val_fraction": 0.34, "augment": True,
                  "selection": "min-val",
                  "solver": {"method": "semi-implicit-euler", "dt": 1 / 30,
                             "unfold_steps": 2}},
        "data": {"n_episodes": 3, "themes": ["summer", "winter"], "seed": 44,
                 "recovery_fraction": 0.4, "episode_frames": 40},
        "eval": {"episodes": 2, "noise_variances": [0.0, 0.1], "seed": 77,
                 "max_steps": 60, "save_frames": True},
    }
    cfg = tmp_path / "repro.json"
    cfg.write_text(json.dumps(cfg_blob, indent=1, sort_keys=True))

    digests = []
    for run in ("one", "two"):
        root = tmp_path / run
        os.makedirs(root)
        assert main(["gen-data", "--config", str(cfg),
                     "--out", str(root / "data")]) == 0
        assert main(["train", "--config", str(cfg),
                     "--data", str(root / "data"),
                     "--out", str(root / "model.llck")]) == 0
        assert main(["eval", "--config", str(cfg),
                     "--checkpoint", str(root / "model.llck"),
                     "--out", str(root / "eval")]) == 0
        assert main(["saliency", "--config", str(cfg),
                     "--checkpoint", str(root / "model.llck"),
                     "--frames", str(root / "data" / "ep0000" / "frames.bin"),
                     "--max-frames", "3", "--out", str(root / "sal")]) == 0
        assert main(["activity", "--config", str(cfg),
                     "--checkpoint", str(root / "model.llck"),
                     "--track-seed", "3",
                     "--out", str(root / "activity.csv")]) == 0
        digests.append(_tree_digest(root))
    _announce(7, digests[0] == digests[1],
              f"all five commands byte-identical across reruns "
              f"(digest {digests[0][:12]}, {time.time() - t0:.0f} s)")
