"""End-to-end acceptance criteria, one test (and one PASS/FAIL line) each."""
import math
import time

import numpy as np
import pytest

from fedhe import baselines, datakit, explain, fedsim, fedwire, hecore, metrics, nnet
from fedhe.fedsim import FedConfig
from fedhe.nnet import MlpSpec, TrainConfig

from wire_helpers import run_session


def _median_time(fn, repeats=3):
    ts, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts)), out


@pytest.fixture(scope="module")
def he_run():
    """Plaintext and encrypted training of the 3-hidden-layer classifier on a 500x20 fixture."""
    t = datakit.preprocess(datakit.make_binary_target(datakit.synth("bcbase_like", 700, seed=11), "med_anxiety"))
    x, y = t.xy()
    x = datakit.Standardizer().fit_transform(x[:500, :20])
    y = y[:500]
    spec = MlpSpec.classifier(20, (64, 32, 16))
    cfg = TrainConfig(learning_rate=0.01, batch_size=128, epochs=30, optimizer="sgd", seed=4)
    key = hecore.keygen(hecore.KeyGenConfig(seed=8))
    rng = np.random.default_rng(21)
    init = nnet.init_weights(spec, cfg.seed)

    start = time.perf_counter()
    t0 = time.perf_counter()
    w_plain, _ = nnet.train(spec, (x, y), cfg, init=init)
    train_plain = time.perf_counter() - t0

    enc_w = nnet.encrypt_weights(init, key, rng)
    ex = hecore.encrypt_array(key, x, rng)
    ey = hecore.encrypt_array(key, y[:, None], rng)
    basis = hecore.SlotBasis(hecore.encrypt(key, 0.0, rng))
    t0 = time.perf_counter()
    w_enc, _ = nnet.train(spec, (ex, ey), cfg, init=enc_w, basis=basis)
    train_enc = time.perf_counter() - t0

    infer_plain, p_plain = _median_time(lambda: nnet.forward(spec, w_plain, x))
    infer_enc, p_enc = _median_time(lambda: nnet.forward(spec, w_enc, ex))
    return dict(y=y, p_plain=np.asarray(p_plain)[:, 0], p_enc=hecore.decrypt_array(key, p_enc)[:, 0],
                train_plain=train_plain, train_enc=train_enc, infer_plain=infer_plain, infer_enc=infer_enc,
                elapsed=time.perf_counter() - start)


def test_c01_encrypted_training_matches_plaintext(he_run, criterion):
    r = he_run
    pred_diff = float(np.max(np.abs(r["p_plain"] - r["p_enc"])))
    rep_plain = metrics.classification_report(r["y"], (r["p_plain"] >= 0.5).astype(float)).as_dict()
    rep_enc = metrics.classification_report(r["y"], (r["p_enc"] >= 0.5).astype(float)).as_dict()
    rep_diff = max(abs(rep_plain[k] - rep_enc[k]) for k in rep_plain)
    ok = pred_diff <= 1e-6 and rep_diff <= 1e-6 and r["elapsed"] <= 600
    criterion(1, "HE training equals plaintext", ok,
              f"max |pred diff| {pred_diff:.2e}, max report diff {rep_diff:.2e}, {r['elapsed']:.0f}s")
    assert ok


def test_c02_encryption_overhead(he_run, criterion):
    r = he_run
    train_factor = r["train_enc"] / r["train_plain"]
    infer_factor = r["infer_enc"] / r["infer_plain"]
    ok = train_factor >= 5 and infer_factor >= 5
    criterion(2, "HE overhead >= 5x", ok, f"train {train_factor:.1f}x, inference {infer_factor:.1f}x")
    assert ok


def _signed_log_uniform(rng, n):
    return rng.choice([-1.0, 1.0], size=n) * 10.0 ** rng.uniform(-3, 3, size=n)


def test_c03_homomorphism_suite(criterion):
    key = hecore.keygen(hecore.KeyGenConfig(seed=17))
    rng = np.random.default_rng(99)
    # 1000 pairs from [-10, 10] plus 1000 spread over six orders of magnitude
    a = np.concatenate([rng.uniform(-10, 10, 1000), _signed_log_uniform(rng, 1000)])
    b = np.concatenate([rng.uniform(-10, 10, 1000), _signed_log_uniform(rng, 1000)])
    oracles = {"add": lambda u, v: u + v, "sub": lambda u, v: u - v,
               "mul": lambda u, v: u * v, "div": lambda u, v: u / v}
    worst_ring = 0.0
    for op, f in oracles.items():
        for u, v in zip(a, b):
            got = hecore.decrypt(key, hecore.cipher_arith(hecore.encrypt(key, u, rng), hecore.encrypt(key, v, rng), op))
            worst_ring = max(worst_ring, abs(got - f(u, v)) / abs(f(u, v)))

    fns = {"tanh": math.tanh, "sigmoid": lambda v: 1.0 / (1.0 + math.exp(-v)), "relu": lambda v: max(v, 0.0)}
    xs = rng.uniform(-20, 20, size=1000)
    worst_fn = 0.0
    for name, f in fns.items():
        for v in xs:
            got = hecore.decrypt(key, hecore.apply_fn(hecore.encrypt(key, v, rng), name))
            want = f(v)
            # relative error, absolute where the true value is exactly zero
            worst_fn = max(worst_fn, abs(got - want) / abs(want) if want != 0 else abs(got))

    worst_deg = 0.0
    for m in rng.uniform(-3, 3, size=200):
        c = hecore.Ciphertext(m * key._proj_m + (m + 1e-9) * key._proj_r)
        for name, f in fns.items():
            worst_deg = max(worst_deg, abs(hecore.decrypt(key, hecore.apply_fn(c, name)) - f(m)))
        worst_deg = max(worst_deg, abs(hecore.decrypt(key, c * c) - m * m),
                        abs(hecore.decrypt(key, c + c) - 2 * m))

    ok = worst_ring <= 1e-9 and worst_fn <= 1e-8 and worst_deg <= 1e-6
    criterion(3, "homomorphism suite", ok,
              f"ring {worst_ring:.1e}, activations {worst_fn:.1e}, near-degenerate {worst_deg:.1e}")
    assert ok


def test_c04_constant_negative_classifier_row(criterion):
    y = np.array([0.0] * 698 + [1.0] * 302)
    x = np.zeros((1000, 1))
    pred = baselines.ConstantClassifier(0.0).fit(x, y).predict(x)
    r = metrics.classification_report(y, pred)
    ok = (r.acc == 0.698 and r.prec_pos == 0 and r.rec_pos == 0 and r.rec_neg == 1.0
          and abs(r.f1_macro - 0.411) <= 0.0005 and abs(r.prec_neg - 0.698) <= 0.0005)
    criterion(4, "constant-negative classifier row", ok,
              f"acc {r.acc:.3f}, f1 {r.f1_macro:.3f}, prec- {r.prec_neg:.3f}, rec- {r.rec_neg:.3f}")
    assert ok


def _regression_fixtures():
    orb = datakit.synth("orb_like", 400, seed=3)
    out = {}
    for n, m in ((30, 60), (60, 120), (0, 36)):
        out[f"orb-{n}-{m}"] = datakit.preprocess(datakit.slice_orb(orb, n, m)).xy()
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 5))
    out["linear-toy"] = (x, 3.0 + x @ np.array([1.5, -2.0, 0.0, 0.5, 0.0]) + 0.2 * rng.normal(size=200))
    return out


def test_c05_dummy_regressor_never_beats_the_mean(criterion):
    worst_r2, pcs = -math.inf, []
    for name, data in _regression_fixtures().items():
        for seed in (0, 1):
            res = metrics.cross_validate(baselines.DummyRegressor, data, folds=10, task="regression", seed=seed)
            worst_r2 = max(worst_r2, max(r.r2 for r in res.per_fold))
            pcs += [r.pc for r in res.per_fold] + [res.mean.pc]
    ok = worst_r2 <= 0 and all(math.isnan(p) for p in pcs)
    criterion(5, "DUMMY R2 <= 0 on every fold, PC undefined", ok, f"max fold R2 {worst_r2:.4f}")
    assert ok


class _Scaled:
    def __init__(self, model):
        self.model = model

    def fit(self, x, y):
        self.sc = datakit.Standardizer().fit(x)
        self.model.fit(self.sc.transform(x), y)
        return self

    def predict(self, x):
        return self.model.predict(self.sc.transform(x))


def test_c06_lasso_beats_dummy(criterion):
    data = datakit.preprocess(datakit.slice_orb(datakit.synth("orb_like", 400, seed=0), 30, 60)).xy()

    def mae(kind):
        factory = lambda: _Scaled(baselines.make_model(baselines.BaselineSpec(kind)))
        return metrics.cross_validate(factory, data, folds=10, task="regression", seed=0).mean.mae

    dummy, lasso = mae("dummy"), mae("lasso")
    gain = 1.0 - lasso / dummy
    ok = gain >= 0.05
    criterion(6, "LASSO MAE at least 5% below DUMMY", ok, f"DUMMY {dummy:.3f}, LASSO {lasso:.3f}, gain {gain:.1%}")
    assert ok


def test_c07_federated_sanity(criterion):
    start = time.perf_counter()
    table = datakit.preprocess(datakit.make_binary_target(datakit.synth("bcbase_like", 2000, seed=1), "med_anxiety"))
    x, y = table.xy()
    xs = datakit.Standardizer().fit_transform(x)
    spec = MlpSpec.classifier(x.shape[1])
    train_cfg = TrainConfig(epochs=200, seed=0)

    central, _ = nnet.train(spec, (xs, y), train_cfg)
    inc = fedsim.train_federated(spec, [(xs, y)], FedConfig(k=1, mode="incremental", train=train_cfg))
    con = fedsim.train_federated(spec, [(xs, y)], FedConfig(k=1, mode="semi_concurrent", rounds=1,
                                                            per_node_epochs=200, train=train_cfg))
    exact = inc.final.equal(central) and con.final.equal(central)

    # INC-k already makes as many SGD steps as centralized training; CON-k gets the same step budget
    # by scaling its per-round epochs with k (the library default gives it 1/k of the steps)
    base = FedConfig(k=1, train=train_cfg)
    grid = fedsim.crossval_federated((x, y), spec, base, folds=10, ks=(2, 3, 4), modes=("incremental",))
    cen = grid.row("centralized", 1)["f1_macro"]
    spread = []
    for k in (2, 3, 4):
        con = fedsim.crossval_federated((x, y), spec, base, folds=10, ks=(k,), modes=("semi_concurrent",),
                                        include_centralized=False,
                                        mode_configs={"semi_concurrent": {"rounds": 10, "per_node_epochs": 20 * k}})
        f_inc = grid.row("incremental", k)["f1_macro"]
        f_con = con.row("semi_concurrent", k)["f1_macro"]
        spread += [abs(f_inc - cen), abs(f_con - cen), abs(f_inc - f_con)]
    elapsed = time.perf_counter() - start
    ok = exact and max(spread) <= 0.05 and elapsed <= 900
    criterion(7, "federated sanity", ok,
              f"k=1 bit-exact {exact}, CEN f1 {cen:.3f}, max gap {max(spread):.3f} at equal step budget, {elapsed:.0f}s")
    assert ok


def test_c08_gradient_check(criterion):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        n_in = int(rng.integers(1, 6))
        hidden = tuple(int(h) for h in rng.integers(1, 7, size=rng.integers(1, 4)))
        if rng.random() < 0.5:
            spec = MlpSpec((n_in, *hidden, 1), str(rng.choice(["relu", "tanh"])), "sigmoid", "cross_entropy")
            y = rng.integers(0, 2, size=12).astype(float)
        else:
            spec = MlpSpec((n_in, *hidden, 1), str(rng.choice(["relu", "tanh"])), "linear", "mse")
            y = rng.normal(size=12)
        # random biases too: zero biases put dead ReLU units exactly on the kink
        shapes = nnet.init_weights(spec, i).shapes
        w = nnet.Weights.from_flat(shapes, rng.normal(size=sum(int(np.prod(s)) for s in shapes)))
        x = rng.normal(size=(12, n_in))
        worst = max(worst, nnet.grad_check(spec, w, x, y))
    ok = worst < 1e-4
    criterion(8, "backprop vs finite differences", ok, f"max rel err {worst:.1e} over 100 networks")
    assert ok


def test_c09_explainability(criterion):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(400, 6))
    coef, b0 = np.array([0.8, -1.3, 0.0, 2.1, 0.4, -0.05]), 1.7
    model = lambda z: b0 + np.asarray(z) @ coef
    sur = explain.fit_surrogate(model, x, kind="linear", task="regression")
    coef_err = max(float(np.max(np.abs(sur.coef - coef))), abs(sur.intercept - b0))

    means = x.mean(axis=0)
    completeness = 0.0
    for row in x[:100]:
        att = explain.attribute(sur, row, means)
        completeness = max(completeness, abs(att.prediction - float(sur.raw(row)[0])))

    y = 4.0 * x[:, 2] + 0.3 * rng.normal(size=400)
    fitted = baselines.make_model(baselines.BaselineSpec("linear")).fit(x, y)
    imp = explain.permutation_importance(fitted.predict, (x, y), "r2", seed=0)
    top = explain.top_features(imp, 1)[0]

    ok = coef_err <= 1e-6 and sur.fidelity >= 0.999 and completeness <= 1e-9 and top == "x2"
    criterion(9, "explainability", ok,
              f"coef err {coef_err:.1e}, fidelity {sur.fidelity:.4f}, completeness {completeness:.1e}, top {top}")
    assert ok


def test_c10_networked_run_matches_simulation(criterion):
    t = datakit.preprocess(datakit.make_binary_target(datakit.synth("bcbase_like", 300, seed=2), "med_anxiety"))
    x, y = t.xy()
    x = datakit.Standardizer().fit_transform(x)
    parts = fedsim._split_indices(y, 3, "classification", 0)
    shards = [(x[p], y[p]) for p in parts]
    spec = MlpSpec.classifier(x.shape[1], (16, 8))
    cfg = FedConfig(k=3, mode="semi_concurrent", rounds=3, per_node_epochs=2, train=TrainConfig(seed=6))

    frames = []
    run, _, errors = run_session(spec, cfg, shards, capture=lambda where, frame: frames.append(frame))
    ref = fedsim.train_federated(spec, shards, cfg)
    equal = not errors and len(run.global_weights) == len(ref.global_weights) and \
        all(a.equal(b) for a, b in zip(run.global_weights, ref.global_weights))

    traffic = b"".join(frames)
    # integer-valued cells (0, 1, ...) also occur as ordinary numbers in any frame, so scan the distinctive ones
    cells = {repr(float(v)) for sx, _ in shards for v in sx.ravel() if float(v) != round(float(v))}
    leaked = [c for c in cells if f'"{c}"'.encode() in traffic]
    ok = equal and not leaked and len(cells) > 1000
    criterion(10, "networked CON-3 equals simulation, no cells on the wire", ok,
              f"bit-exact {equal}, {len(frames)} frames, {len(cells)} cell values scanned, {len(leaked)} found")
    assert ok


def test_c11_dp_mechanism(criterion):
    n = 100_000
    schema = [datakit.ColumnSchema("v", "numeric"), datakit.ColumnSchema("y", "numeric", role="target")]
    table = datakit.Table(schema, {"v": np.zeros(n), "y": np.zeros(n)})
    sens, eps = 2.0, 0.5
    noisy = datakit.dp_noise(table, datakit.DpConfig(eps, sens), seed=3)
    mean_abs = float(np.mean(np.abs(noisy["v"])))
    rel = abs(mean_abs - sens / eps) / (sens / eps)
    identity = datakit.dp_noise(table, datakit.DpConfig(math.inf, sens), seed=3)
    target_untouched = np.array_equal(noisy["y"], table["y"])
    ok = rel <= 0.05 and identity is table and target_untouched
    criterion(11, "Laplace noise scale and epsilon=inf identity", ok,
              f"mean |noise| {mean_abs:.4f} vs {sens / eps:.4f} ({rel:.2%})")
    assert ok


def _brute_classification(t, p):
    tp = tn = fp = fn = 0
    for a, b in zip(t, p):
        if a == 1 and b == 1:
            tp += 1
        elif a == 0 and b == 0:
            tn += 1
        elif a == 0:
            fp += 1
        else:
            fn += 1

    def div(u, v):
        return u / v if v else 0.0

    pp, rp, pn, rn = div(tp, tp + fp), div(tp, tp + fn), div(tn, tn + fn), div(tn, tn + fp)
    f1p = div(2 * pp * rp, pp + rp)
    f1n = div(2 * pn * rn, pn + rn)
    return (tp, tn, fp, fn), dict(acc=(tp + tn) / len(t), f1_pos=f1p, f1_macro=(f1p + f1n) / 2,
                                  prec_pos=pp, rec_pos=rp, prec_neg=pn, rec_neg=rn,
                                  prec_macro=(pp + pn) / 2, rec_macro=(rp + rn) / 2)


def _brute_regression(t, p):
    n = len(t)
    mt, mp = sum(t) / n, sum(p) / n
    ss_res = sum((a - b) ** 2 for a, b in zip(t, p))
    ss_tot = sum((a - mt) ** 2 for a in t)
    ss_p = sum((b - mp) ** 2 for b in p)
    cov = sum((a - mt) * (b - mp) for a, b in zip(t, p))
    return dict(mae=sum(abs(a - b) for a, b in zip(t, p)) / n, mse=ss_res / n,
                r2=1 - ss_res / ss_tot, pc=cov / math.sqrt(ss_tot * ss_p))


def test_c12_metrics_oracle(criterion):
    rng = np.random.default_rng(7)
    counts_exact, worst = True, 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 60))
        t = rng.integers(0, 2, size=n).astype(float)
        p = rng.integers(0, 2, size=n).astype(float)
        counts, want = _brute_classification(t.tolist(), p.tolist())
        c = metrics.ConfusionCounts.from_labels(t, p)
        counts_exact &= (c.tp, c.tn, c.fp, c.fn) == counts
        got = metrics.classification_report(t, p).as_dict()
        worst = max(worst, max(abs(got[k] - want[k]) for k in want))

        tr = rng.normal(size=n) * rng.uniform(0.1, 10)
        pr = tr + rng.normal(size=n) * rng.uniform(0.1, 10)
        got = metrics.regression_report(tr, pr).as_dict()
        want = _brute_regression(tr.tolist(), pr.tolist())
        worst = max(worst, max(abs(got[k] - want[k]) / max(1.0, abs(want[k])) for k in want))
    ok = counts_exact and worst <= 1e-12
    criterion(12, "metrics match a brute-force oracle", ok, f"counts exact {counts_exact}, max err {worst:.1e}")
    assert ok
