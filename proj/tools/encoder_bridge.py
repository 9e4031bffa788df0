#!/usr/bin/env python3
"""Runs frozen pretrained encoders for verifuse.

Requests and responses are the binary formats used by the C++ side:
  encode-text   tokens.bin  -> features.bin (768-d pooled output)
  encode-image  images.bin  -> features.bin (1536-d penultimate output)
  export-vocab  writes <model>/vocab.txt from the checkpoint's tokenizer
  make-random   writes a randomly initialised checkpoint (offline testing only)

Checkpoint layout under <model>:
  bert_base / albert_base: a HuggingFace model directory (config.json + weights)
  inception_resnet_v2:     model.keras, or weights.h5 for the Keras application
"""

import argparse
import json
import os
import struct
import sys

import numpy as np


def read_header(f):
    return json.loads(f.readline().decode("utf-8"))


def write_features(path, vectors, fingerprint, modality):
    vectors = np.asarray(vectors, dtype="<f4")
    count, dim = vectors.shape
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        header = {"count": count, "dim": dim, "fingerprint": fingerprint, "modality": modality}
        f.write((json.dumps(header, separators=(",", ":")) + "\n").encode("utf-8"))
        for i in range(count):
            rid = str(i).encode("utf-8")
            f.write(struct.pack("<I", len(rid)))
            f.write(rid)
            f.write(vectors[i].tobytes())
    os.replace(tmp, path)


def encode_text(args):
    import torch
    from transformers import AutoModel

    with open(args.input, "rb") as f:
        h = read_header(f)
        n, length = h["count"], h["max_len"]
        raw = np.frombuffer(f.read(), dtype="<u4").astype(np.int64)
    if raw.size != n * 3 * length:
        sys.exit("token request is truncated")
    raw = raw.reshape(n, 3, length)
    model = AutoModel.from_pretrained(args.model, local_files_only=True)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    out = []
    with torch.no_grad():
        for s in range(0, n, args.batch):
            chunk = torch.from_numpy(raw[s : s + args.batch])
            res = model(input_ids=chunk[:, 0], attention_mask=chunk[:, 1], token_type_ids=chunk[:, 2])
            out.append(res.pooler_output.float().numpy())
    vectors = np.concatenate(out) if out else np.zeros((0, 768), "f4")
    write_features(args.output, vectors, args.backend, "text")


def load_inception(model_dir):
    import tensorflow as tf

    full = os.path.join(model_dir, "model.keras")
    if os.path.exists(full):
        return tf.keras.models.load_model(full, compile=False)
    model = tf.keras.applications.InceptionResNetV2(include_top=False, weights=None, pooling="avg",
                                                    input_shape=(299, 299, 3))
    model.load_weights(os.path.join(model_dir, "weights.h5"))
    return model


def encode_image(args):
    with open(args.input, "rb") as f:
        h = read_header(f)
        n = h["count"]
        lo, hi = h["range"]
        px = np.frombuffer(f.read(), dtype="<f4")
    if px.size != n * h["height"] * h["width"] * 3:
        sys.exit("image request is truncated")
    px = px.reshape(n, h["height"], h["width"], 3)
    # The network expects [-1, 1].
    px = (px - lo) / (hi - lo) * 2.0 - 1.0
    model = load_inception(args.model)
    model.trainable = False
    vectors = model.predict(px, batch_size=args.batch, verbose=0) if n else np.zeros((0, 1536), "f4")
    write_features(args.output, vectors.reshape(n, -1), args.backend, "image")


def export_vocab(args):
    from transformers import AutoTokenizer

    tok = AutoTokenizer.from_pretrained(args.model, local_files_only=True)
    vocab = sorted(tok.get_vocab().items(), key=lambda kv: kv[1])
    with open(os.path.join(args.model, "vocab.txt"), "w", encoding="utf-8") as f:
        for token, _ in vocab:
            f.write(token + "\n")


def make_random(args):
    os.makedirs(args.model, exist_ok=True)
    if args.backend in ("bert_base", "albert_base"):
        from transformers import AlbertConfig, AlbertModel, BertConfig, BertModel

        specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        words = [chr(c) for c in range(ord("a"), ord("z") + 1)] + [f"w{i}" for i in range(995)]
        vocab = specials + words
        if args.backend == "bert_base":
            model = BertModel(BertConfig(vocab_size=len(vocab)))
        else:
            model = AlbertModel(AlbertConfig(vocab_size=len(vocab), hidden_size=768, num_attention_heads=12,
                                             intermediate_size=3072))
        model.save_pretrained(args.model)
        with open(os.path.join(args.model, "vocab.txt"), "w", encoding="utf-8") as f:
            f.write("\n".join(vocab) + "\n")
    else:
        import tensorflow as tf

        model = tf.keras.applications.InceptionResNetV2(include_top=False, weights=None, pooling="avg",
                                                        input_shape=(299, 299, 3))
        model.save(os.path.join(args.model, "model.keras"))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=["encode-text", "encode-image", "export-vocab", "make-random"])
    ap.add_argument("--backend", required=True, choices=["bert_base", "albert_base", "inception_resnet_v2"])
    ap.add_argument("--model", required=True)
    ap.add_argument("--input")
    ap.add_argument("--output")
    ap.add_argument("--batch", type=int, default=16)
    args = ap.parse_args()
    {"encode-text": encode_text, "encode-image": encode_image, "export-vocab": export_vocab,
     "make-random": make_random}[args.command](args)


if __name__ == "__main__":
    main()
