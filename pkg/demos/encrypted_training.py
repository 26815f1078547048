"""Train the same classifier on plaintext and on MORE ciphertexts and compare."""
import time

import numpy as np

from fedhe import datakit, hecore, metrics, nnet

table = datakit.preprocess(datakit.make_binary_target(datakit.synth("bcbase_like", 600, seed=1), "med_anxiety"))
x, y = table.xy()
x = datakit.Standardizer().fit_transform(x[:, :20])
spec = nnet.MlpSpec.classifier(x.shape[1])
cfg = nnet.TrainConfig(epochs=30, seed=0)

# a ciphertext is a 2x2 matrix; its eigenvalues are the plaintext and a random companion
key = hecore.keygen(hecore.KeyGenConfig(seed=7))
rng = np.random.default_rng(0)
c = hecore.encrypt(key, 0.25, rng)
print("ciphertext of 0.25:\n", c.c)
print("sigmoid under encryption:", hecore.decrypt(key, hecore.apply_fn(c, "sigmoid")))

t0 = time.perf_counter()
w_plain, _ = nnet.train(spec, (x, y), cfg)
t_plain = time.perf_counter() - t0

t0 = time.perf_counter()
w_enc, _ = nnet.train_encrypted(spec, x, y, cfg, key, rng)
t_enc = time.perf_counter() - t0

p_plain = np.asarray(nnet.forward(spec, w_plain, x))[:, 0]
p_enc = hecore.decrypt_array(key, nnet.forward(spec, w_enc, hecore.encrypt_array(key, x, rng)))[:, 0]
print(f"max |plaintext - decrypted| prediction: {np.max(np.abs(p_plain - p_enc)):.2e}")
print(f"training time: plaintext {t_plain:.2f}s, encrypted {t_enc:.2f}s ({t_enc / t_plain:.0f}x)")
print("macro-F1:", round(metrics.classification_report(y, (p_enc >= 0.5).astype(float)).f1_macro, 3))
