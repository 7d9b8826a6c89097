"""Acceptance gate: nine numbered end-to-end criteria.

Criteria 1-4 and 7 check kernels and metric arithmetic against independent
oracles (finite differences, brute-force averaging, frozen values).
Criteria 5, 6 and 8 share one desk-scale experiment, run once per seed by
the module fixture below on a configuration that was calibrated offline and
is frozen here verbatim.  Criterion 9 drives the command line twice and
compares the artifacts byte for byte.

Each test computes every part of its criterion before judging, records one
PASS/FAIL summary line (printed after the run by the conftest hook), and
only then asserts.
"""

import dataclasses
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from fcu import config, data, experiment, federation, fourier, metrics, nn, spectral, streams
from fcu import unlearn as unlearning

# --------------------------------------------------------------------------
# the frozen desk-scale experiment (criteria 5, 6, 8)

DESK_SEEDS = (3, 4, 6)
DESK_TARGETS = {3: 2, 4: 4, 6: 1}
PROBE_EVERY = 20  # unlearning-trajectory probe stride for the ablation


def desk_config(seed: int) -> config.RunConfig:
    """Five clients on 5,000 biased synthetic samples; calibrated once, then pinned."""
    return config.RunConfig(
        seed=seed,
        target_client=DESK_TARGETS[seed],
        out_dir="unused",
        post_rounds=10,
        data=config.DataConfig(
            source="synthetic",
            classes=2,
            features=8,
            samples_per_class=2500,
            separation=3.0,
            noise=1.0,
            client_bias_scale=2.5,
        ),
        model=config.ModelConfig(hidden=(16, 16)),
        federation=federation.FederationConfig(
            n_clients=5,
            rounds=600,  # many brief rounds: the small net needs them at lr 1e-4
            local_iterations=20,
            learning_rate=1e-4,
            batch_size=64,
            dirichlet_alpha=1.0,
        ),
        unlearn=unlearning.UnlearnConfig(
            temperature=0.5,
            iterations=100,
            fgmp_interval=10,
            learning_rate=1.1e-3,  # step size matched to the desk net's scale
            blend_ratio=0.5,
            batch_size=64,
        ),
    )


def qualifying_target(seed: int) -> tuple[float, int] | None:
    """Most balanced minority shard for one seed, or None if the seed has none.

    The desk seeds are the first three whose partition contains a shard with
    300..900 of the 3,500 training rows and class imbalance |n0-n1|/n at most
    0.2; that shard's owner is the departing client (ties to the lowest id).
    Contrastive unlearning pushes every forgotten feature the same way, so
    forgetting is only measurable on a shard holding both classes in
    comparable numbers.  The rule reads the partition alone, never outcomes.
    """
    cfg = desk_config(DESK_SEEDS[0])
    full = data.generate_synthetic(cfg.data.synthetic_spec(), seed=[seed, streams.DATA])
    train, _, _ = data.split_712(full, seed=[seed, streams.SPLIT])
    shards = federation.dirichlet_partition(
        train, cfg.federation.n_clients, cfg.federation.dirichlet_alpha,
        seed=[seed, streams.PARTITION],
    )
    best = None
    for k, shard in enumerate(shards):
        hist = shard.class_histogram()
        imbalance = abs(int(hist[0]) - int(hist[1])) / len(shard)
        if 300 <= len(shard) <= 900 and imbalance <= 0.2:
            if best is None or imbalance < best[0]:
                best = (imbalance, k)
    return best


def test_desk_seeds_follow_partition_rule():
    hits = []
    seed = 1
    while len(hits) < len(DESK_SEEDS):
        best = qualifying_target(seed)
        if best is not None:
            hits.append((seed, best[1]))
        seed += 1
    assert tuple(s for s, _ in hits) == DESK_SEEDS
    assert dict(hits) == DESK_TARGETS


@pytest.fixture(scope="module")
def desk():
    """Origin, retrain, finetune, unlearn(+ablation), post; once per desk seed."""
    wall = time.perf_counter()
    runs = {}
    for seed in DESK_SEEDS:
        cfg = desk_config(seed)
        exp = experiment.build_experiment(cfg)

        origin = federation.fl_train(
            exp.template, exp.clients, cfg.federation, initial=exp.initial_params()
        )

        before = exp.forget_data.access_count
        retrain = federation.retrain_baseline(
            exp.template, exp.clients, cfg.federation, cfg.target_client
        )
        audit_retrain = exp.forget_data.access_count - before

        finetune = federation.finetune_baseline(
            exp.template, origin.model.params, exp.clients, cfg.federation,
            cfg.target_client, cfg.post_rounds,
        )

        downgraded = exp.template.with_params(exp.initial_params())
        trajectories = {}
        unlearned = None
        for blend_on in (True, False):
            points: list[tuple[int, float]] = []
            ucfg = cfg.unlearn if blend_on else dataclasses.replace(
                cfg.unlearn, fgmp_enabled=False
            )
            result = unlearning.local_unlearn(
                origin.model, downgraded, exp.forget_data, ucfg,
                probe=lambda it, m, acc=points: acc.append(
                    (it, metrics.accuracy(m, exp.test))
                ),
                probe_every=PROBE_EVERY,
            )
            trajectories[blend_on] = points
            if blend_on:
                unlearned = result

        before = exp.forget_data.access_count
        post = federation.post_train(
            exp.template, unlearned.model.params, exp.clients, cfg.federation,
            cfg.target_client, cfg.post_rounds,
        )
        audit_post = exp.forget_data.access_count - before

        runs[seed] = {
            "rows": {
                "origin": experiment.evaluate(origin.model, exp, "origin", origin.elapsed_seconds),
                "retrain": experiment.evaluate(retrain.model, exp, "retrain", retrain.elapsed_seconds, gap=0.0),
                "finetune": experiment.evaluate(finetune.model, exp, "finetune", finetune.elapsed_seconds),
                "fcu": experiment.evaluate(
                    post.model, exp, "fcu", unlearned.elapsed_seconds + post.elapsed_seconds
                ),
            },
            "times": {
                "retrain": retrain.elapsed_seconds,
                "unlearn": unlearned.elapsed_seconds,
                "post": post.elapsed_seconds,
            },
            "audits": (audit_retrain, audit_post),
            "traj_on": trajectories[True],
            "traj_off": trajectories[False],
        }
    return {"runs": runs, "wall_seconds": time.perf_counter() - wall}


# --------------------------------------------------------------------------
# criterion 1: numerical kernels

KERNEL_SIZES = [
    (1, 1), (2, 3), (4, 4), (5, 7), (8, 8), (12, 16), (13, 13),
    (16, 16), (17, 31), (24, 24), (32, 33), (48, 17), (63, 64), (64, 64),
]


def test_criterion_1_numerical_kernels():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260814)
    worst_rt = worst_parseval = worst_ap = 0.0
    for rows, cols in KERNEL_SIZES:
        m = rng.standard_normal((rows, cols))
        f = fourier.fft2(m)
        rt = np.linalg.norm(fourier.ifft2(f) - m) / np.linalg.norm(m)
        worst_rt = max(worst_rt, rt)
        energy = float(np.sum(m * m))
        spectral_energy = float(np.sum(np.abs(f) ** 2)) / (rows * cols)
        worst_parseval = max(worst_parseval, abs(spectral_energy - energy) / energy)
        c = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
        back = spectral.recompose(spectral.decompose(c))
        worst_ap = max(worst_ap, float(np.max(np.abs(back - c))) / float(np.max(np.abs(c))))

    popcount_misses = 0
    for rows in range(1, 33):
        for cols in range(1, 33):
            for ratio in (0.0, 0.25, 0.5, 0.75, 1.0):
                want = int(np.floor(ratio * rows)) * int(np.floor(ratio * cols))
                if spectral.build_mask(rows, cols, ratio).popcount() != want:
                    popcount_misses += 1
    elapsed = time.perf_counter() - t0

    ok = (
        worst_rt <= 1e-9 and worst_parseval <= 1e-8 and worst_ap <= 1e-9
        and popcount_misses == 0 and elapsed < 10.0
    )
    record_criterion(
        "criterion 1", ok,
        f"fft round trip {worst_rt:.1e} (<=1e-9), Parseval {worst_parseval:.1e} (<=1e-8), "
        f"amplitude/phase {worst_ap:.1e}, popcount misses {popcount_misses}/5120, "
        f"{elapsed:.1f}s of 10s",
    )
    assert worst_rt <= 1e-9
    assert worst_parseval <= 1e-8
    assert worst_ap <= 1e-9
    assert popcount_misses == 0
    assert elapsed < 10.0


# --------------------------------------------------------------------------
# criterion 2: gradients against central finite differences


def central_diff(fn, arr, h=1e-6):
    grad = np.zeros_like(arr)
    flat, gflat = arr.ravel(), grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        hi = fn()
        flat[i] = keep - h
        lo = fn()
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad


def relu_gap(model, x) -> float:
    """Smallest |pre-activation| at any rectifier for this input batch.

    At a kink the loss has no two-sided derivative, so difference quotients
    there are meaningless; inputs are redrawn until every rectifier sits a
    safe distance from zero.
    """
    nn.forward(model, x, train=True)
    gaps = [
        float(np.min(np.abs(entry["pre"])))
        for entry, spec in zip(model._cache, model.layers)
        if spec.activation == "relu"
    ]
    return min(gaps) if gaps else float("inf")


def test_criterion_2_gradient_checks():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    worst = 0.0  # max |analytic - numeric| / max(1e-6, 1e-4 |numeric|)

    def compare(analytic, numeric):
        nonlocal worst
        allowance = np.maximum(1e-6, 1e-4 * np.abs(numeric))
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / allowance)))

    for i in range(100):
        if i % 5 == 0:  # every fifth net keeps a convolution in the loop
            model = nn.build_conv_model(
                (1, 4, 4), conv_channels=int(rng.integers(1, 3)), kernel=(2, 2),
                hidden=(3,), n_classes=2, seed=1000 + i,
            )
        else:
            depth = int(rng.integers(1, 3))
            hidden = tuple(int(w) for w in rng.integers(3, 7, size=depth))
            model = nn.build_dense_model(
                int(rng.integers(2, 6)), hidden, int(rng.integers(2, 5)), seed=1000 + i
            )
        batch = int(rng.integers(1, 4))
        x = rng.standard_normal((batch, model.in_dim))
        while relu_gap(model, x) < 1e-4:
            x = rng.standard_normal((batch, model.in_dim))
        y = rng.integers(0, model.n_classes, size=batch)
        feat_dim = model.layers[model.feature_index].out_dim
        r = rng.standard_normal((batch, feat_dim))  # exercises the feature tap too

        def loss_fn():
            out = nn.forward(model, x)
            return nn.cross_entropy(out.logits, y)[0] + float(np.sum(out.features * r))

        out = nn.forward(model, x, train=True)
        _, grad_logits = nn.cross_entropy(out.logits, y)
        grads = nn.backward(model, grad_logits, grad_features=r)
        for name in model.params.names:
            compare(grads[name], central_diff(loss_fn, model.params.entries[name]))

    for i in range(100):
        batch = int(rng.integers(1, 5))
        dim = int(rng.integers(2, 7))
        tau = float(rng.choice([0.25, 0.5, 1.0]))
        shape = (dim,) if batch == 1 and i % 3 == 0 else (batch, dim)
        z = rng.standard_normal(shape)
        z_down = rng.standard_normal(shape)
        z_tr = rng.standard_normal(shape)
        analytic = unlearning.mcu_loss_grad(z, z_down, z_tr, tau)
        numeric = central_diff(lambda: unlearning.mcu_loss(z, z_down, z_tr, tau), z)
        compare(analytic, numeric)

    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 60.0
    record_criterion(
        "criterion 2", ok,
        f"max error/allowance {worst:.3f} (<=1) over 100 backward + 100 contrastive "
        f"instances, {elapsed:.1f}s of 60s",
    )
    assert worst <= 1.0
    assert elapsed < 60.0


# --------------------------------------------------------------------------
# criterion 3: amplitude-blend identities


def test_criterion_3_blend_identities():
    rng = np.random.default_rng(5150)
    shapes = [(9,), (16,), (5, 8), (12, 12), (16, 16), (2, 3, 2, 2)]
    ratios = (0.0, 0.25, 0.5, 0.75, 1.0)
    worst_self = worst_zero = worst_idem = 0.0
    for shape in shapes:
        work = rng.standard_normal(shape)
        ref = rng.standard_normal(shape)
        worst_zero = max(
            worst_zero, float(np.max(np.abs(spectral.fgmp_blend(ref, work, 0.0) - work)))
        )
        for ratio in ratios:
            same = spectral.fgmp_blend(work, work, ratio)
            worst_self = max(worst_self, float(np.max(np.abs(same - work))))
            once = spectral.fgmp_blend(ref, work, ratio)
            twice = spectral.fgmp_blend(ref, once, ratio)
            worst_idem = max(worst_idem, float(np.max(np.abs(twice - once))))

    # same identities through the whole-parameter-set path, conv layers included
    p_ref = nn.build_conv_model((1, 4, 4), 2, (2, 2), (5,), 2, seed=1).params
    p_work = nn.build_conv_model((1, 4, 4), 2, (2, 2), (5,), 2, seed=2).params
    once = spectral.fgmp_apply(p_ref, p_work, 0.5)
    twice = spectral.fgmp_apply(p_ref, once, 0.5)
    for name in once.names:
        worst_idem = max(worst_idem, float(np.max(np.abs(twice[name] - once[name]))))
        held = spectral.fgmp_apply(p_ref, p_ref, 0.5)
        worst_self = max(worst_self, float(np.max(np.abs(held[name] - p_ref[name]))))

    ok = worst_self <= 1e-9 and worst_zero <= 1e-9 and worst_idem <= 1e-8
    record_criterion(
        "criterion 3", ok,
        f"blend(w,w,r) drift {worst_self:.1e} (<=1e-9), ratio-0 drift {worst_zero:.1e} "
        f"(<=1e-9), re-blend drift {worst_idem:.1e} (<=1e-8)",
    )
    assert worst_self <= 1e-9
    assert worst_zero <= 1e-9
    assert worst_idem <= 1e-8


# --------------------------------------------------------------------------
# criterion 4: aggregation algebra


def test_criterion_4_aggregation_algebra():
    rng = np.random.default_rng(909)
    template = nn.build_dense_model(3, (4,), 2, seed=0)
    worst_mean = worst_weight = 0.0
    permutation_exact = True
    for trial in range(30):
        k = int(rng.integers(2, 7))
        sets = [nn.init_params(template.layers, [trial, j]) for j in range(k)]
        sizes = [int(s) for s in rng.integers(1, 200, size=k)]
        exclude = int(rng.integers(0, k)) if trial % 2 else None
        got = federation.fedavg_aggregate(sets, sizes, exclude=exclude)

        keep = [i for i in range(k) if i != exclude]
        total = sum(sizes[i] for i in keep)
        worst_weight = max(worst_weight, abs(sum(sizes[i] / total for i in keep) - 1.0))
        for name in got.names:
            oracle = sum(sizes[i] * sets[i][name] for i in keep) / total
            worst_mean = max(worst_mean, float(np.max(np.abs(got[name] - oracle))))

        order = rng.permutation(k)
        mapped = None if exclude is None else int(np.where(order == exclude)[0][0])
        shuffled = federation.fedavg_aggregate(
            [sets[i] for i in order], [sizes[i] for i in order], exclude=mapped
        )
        permutation_exact &= all(
            np.array_equal(got[name], shuffled[name]) for name in got.names
        )

    ok = worst_mean <= 1e-12 and worst_weight <= 1e-12 and permutation_exact
    record_criterion(
        "criterion 4", ok,
        f"vs brute-force mean {worst_mean:.1e} (<=1e-12), weight-sum drift "
        f"{worst_weight:.1e} (<=1e-12), permutation bit-exact={permutation_exact}",
    )
    assert worst_mean <= 1e-12
    assert worst_weight <= 1e-12
    assert permutation_exact


# --------------------------------------------------------------------------
# criteria 5, 6, 8: the desk-scale experiment


def test_criterion_5_desk_scale_end_to_end(desk):
    ordered = 0
    drifts, speedups = [], []
    for seed in DESK_SEEDS:
        run = desk["runs"][seed]
        err = {m: r.error_f for m, r in run["rows"].items()}
        d_fcu = abs(err["fcu"] - err["retrain"])
        if d_fcu < abs(err["origin"] - err["retrain"]) and d_fcu < abs(err["finetune"] - err["retrain"]):
            ordered += 1
        drifts.append(abs(run["rows"]["origin"].accuracy - run["rows"]["fcu"].accuracy))
        t = run["times"]
        speedups.append(t["retrain"] / (t["unlearn"] + t["post"]))
    wall = desk["wall_seconds"]

    ok = ordered >= 2 and max(drifts) <= 3.0 and min(speedups) >= 5.0 and wall < 600.0
    record_criterion(
        "criterion 5", ok,
        f"(a) forget error closest to retrain on {ordered}/3 seeds (need >=2); "
        f"(b) max test-accuracy drift {max(drifts):.2f} of 3.00 points; "
        f"(c) min speedup {min(speedups):.1f}x of 5x, experiment wall {wall:.0f}s of 600s",
    )
    assert ordered >= 2, f"forget-error ordering held on {ordered}/3 seeds"
    assert max(drifts) <= 3.0, f"accuracy drifts {drifts}"
    assert min(speedups) >= 5.0, f"speedups {speedups}"
    assert wall < 600.0


def test_criterion_6_blend_ablation(desk):
    finals_on, finals_off = [], []
    for seed in DESK_SEEDS:
        run = desk["runs"][seed]
        it_on, acc_on = run["traj_on"][-1]
        it_off, acc_off = run["traj_off"][-1]
        assert it_on == it_off == desk_config(seed).unlearn.iterations
        finals_on.append(acc_on)
        finals_off.append(acc_off)
    mean_on = float(np.mean(finals_on))
    mean_off = float(np.mean(finals_off))

    ok = mean_on >= mean_off
    record_criterion(
        "criterion 6", ok,
        f"mean test accuracy after {desk_config(DESK_SEEDS[0]).unlearn.iterations} "
        f"unlearning iterations: {mean_on:.2f} with blending vs {mean_off:.2f} without",
    )
    assert mean_on >= mean_off, (finals_on, finals_off)


def test_criterion_8_exclusion_audit(desk):
    audits = {seed: desk["runs"][seed]["audits"] for seed in DESK_SEEDS}
    ok = all(a == (0, 0) for a in audits.values())
    record_criterion(
        "criterion 8", ok,
        f"forgotten-shard reads during (retrain, post-training) per seed: {audits}",
    )
    assert ok, audits


# --------------------------------------------------------------------------
# criterion 7: gap arithmetic on frozen reference pairs


def test_criterion_7_gap_arithmetic():
    pairs = {(11.37, 12.28): -0.9, (6.59, 12.28): -5.7}
    got = {p: metrics.efficacy_gap(*p) for p in pairs}
    ok = all(got[p] == want for p, want in pairs.items())
    record_criterion("criterion 7", ok, f"one-decimal signed gaps {got}")
    for p, want in pairs.items():
        assert got[p] == want


# --------------------------------------------------------------------------
# criterion 9: command-line runs are bit-reproducible

TINY_INI = """\
[run]
seed = 11
target_client = 0
out_dir = {out}

[data]
classes = 2
features = 4
samples_per_class = 60
separation = 3.0
noise = 0.7
client_bias_scale = 1.2

[model]
hidden = 8

[federation]
clients = 3
rounds = 2
local_iterations = 3
learning_rate = 1e-3
batch_size = 16
dirichlet_alpha = 2.0

[unlearn]
iterations = 6
fgmp_interval = 3
learning_rate = 1e-3
batch_size = 16

[post_train]
rounds = 2
"""


def _cli(*argv):
    return subprocess.run(
        [sys.executable, "-m", "fcu.cli", *argv],
        capture_output=True, text=True, timeout=600,
    )


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


def _report_sans_runtime(path: Path) -> dict:
    doc = json.loads(path.read_text())
    for row in doc["reports"]:
        row.pop("runtime_seconds")
    return doc


def test_criterion_9_command_reproducibility(tmp_path):
    outs = []
    for tag in ("first", "second"):
        out = tmp_path / tag
        ini = tmp_path / f"{tag}.ini"
        ini.write_text(TINY_INI.format(out=out))
        for command in ("train", "retrain"):
            proc = _cli(command, "--config", str(ini))
            assert proc.returncode == 0, proc.stderr
        proc = _cli("unlearn", "--config", str(ini), "--checkpoint", str(out / "m_tr"))
        assert proc.returncode == 0, proc.stderr
        outs.append(out)

    first, second = outs
    checkpoints = ("m_tr", "m_retrain", "m_un", "m_un_final")
    identical = all(
        _tree_bytes(first / name) == _tree_bytes(second / name) for name in checkpoints
    )
    reports = ("report_origin.json", "report_retrain.json", "report_fcu.json")
    same_reports = all(
        _report_sans_runtime(first / name) == _report_sans_runtime(second / name)
        for name in reports
    )

    ok = identical and same_reports
    record_criterion(
        "criterion 9", ok,
        f"train/retrain/unlearn run twice: checkpoints byte-identical={identical}, "
        f"reports identical besides runtime={same_reports}",
    )
    assert identical
    assert same_reports
