import sys, time
from numgpt.bpe import bpe_train
from numgpt.config import TrainConfig
from numgpt.embedding import NumeralEmbedConfig
from numgpt.model import ModelConfig, NumGPT
from numgpt.tasks import gen_gnc
from numgpt.train import encode_samples, train, eval_classification

mode, lr, epochs = sys.argv[1], float(sys.argv[2]), int(sys.argv[3])
train_s, test_s = gen_gnc(per_template=500, seed=0)   # 8000/2000
vocab = bpe_train([s.text for s in train_s], vocab_size=2048)
cfg = ModelConfig(n_layers=4, n_heads=4, d_h=128, vocab_size=2048, max_seq_len=128,
                  numeral=NumeralEmbedConfig(d=32, sigma=0.5), mode=mode)
model = NumGPT(cfg, seed=0)
seqs, labels = encode_samples(train_s, vocab, mode, "classification", 128)
t0 = time.perf_counter()
res = train(model, seqs, labels, TrainConfig(objective="classification", epochs=epochs, batch_size=64, learning_rate=lr, seed=0))
tseqs, tlabels = encode_samples(test_s, vocab, mode, "classification", 128)
ev = eval_classification(model, tseqs, tlabels)
print(f"mode={mode} lr={lr} epochs={epochs} time={time.perf_counter()-t0:.0f}s")
print("losses:", [round(l,4) for l in res.epoch_losses])
print("test:", ev)
