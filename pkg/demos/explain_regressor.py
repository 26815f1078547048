"""Baselines on a QoL regression slice, then a surrogate explanation of the best one."""
from fedhe import baselines, datakit, explain, metrics

orb = datakit.synth("orb_like", 500, seed=0)
table = datakit.preprocess(datakit.slice_orb(orb, 30, 60))
x, y = table.xy()
names = table.feature_names()
x = datakit.Standardizer().fit_transform(x)

for kind in ("dummy", "linear", "ridge", "lasso", "knn_reg"):
    res = metrics.cross_validate(lambda: baselines.make_model(baselines.BaselineSpec(kind)), (x, y), 5, "regression")
    m = res.mean
    print(f"{kind:<8} MAE {m.mae:6.3f}  MSE {m.mse:7.3f}  R2 {m.r2:6.3f}  PC {m.pc:6.3f}")

model = baselines.make_model(baselines.BaselineSpec("lasso")).fit(x, y)
sur = explain.fit_surrogate(model.predict, x, kind="linear", task="regression")
sur.feature_names = names
print("surrogate fidelity:", round(sur.fidelity, 4))
att = explain.attribute(sur, x[0], x.mean(axis=0))
print("top contributions for the first patient:")
for name, value, contrib in att.ranked()[:5]:
    print(f"  {name:<16} {contrib:+.3f}")
imp = explain.permutation_importance(model.predict, (x, y), "r2", seed=0, repeats=3)
print("most important:", [names[int(k[1:])] for k in explain.top_features(imp, 5)])
