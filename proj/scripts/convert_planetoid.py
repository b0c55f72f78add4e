#!/usr/bin/env python3
"""Convert a Planetoid benchmark distribution into a flatgraph dataset directory.

Input: the eight files of the public distribution for one dataset,
    ind.<name>.x ind.<name>.tx ind.<name>.allx
    ind.<name>.y ind.<name>.ty ind.<name>.ally
    ind.<name>.graph ind.<name>.test.index
(as shipped at https://github.com/kimiyoung/planetoid, also mirrored by most
graph learning libraries).

Output layout (see the repository README):
    <out>/meta.json
    <out>/features.f64       float64 little-endian, row-major
    <out>/edges.tsv          one undirected edge per line
    <out>/labels.txt         one class id per line
    <out>/splits/planetoid.json

Usage:
    python3 scripts/convert_planetoid.py --in /path/to/planetoid/data \
        --name cora --out data/cora

Requires numpy and scipy (the .x files are pickled scipy sparse matrices).
"""

import argparse
import json
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def load_pickle(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--in", dest="indir", required=True,
                    help="directory with the ind.<name>.* files")
    ap.add_argument("--name", required=True, choices=["cora", "citeseer", "pubmed"])
    ap.add_argument("--out", required=True, help="output dataset directory")
    args = ap.parse_args()

    def p(suffix):
        return os.path.join(args.indir, f"ind.{args.name}.{suffix}")

    x = load_pickle(p("x"))          # sparse [n_train x F]
    tx = load_pickle(p("tx"))        # sparse [n_test x F]
    allx = load_pickle(p("allx"))    # sparse [n_train+n_unlabeled x F]
    y = load_pickle(p("y"))          # one-hot [n_train x C]
    ty = load_pickle(p("ty"))        # one-hot [n_test x C]
    ally = load_pickle(p("ally"))    # one-hot
    graph = load_pickle(p("graph"))  # dict vertex -> neighbor list
    test_idx = np.loadtxt(p("test.index"), dtype=np.int64)

    test_sorted = np.sort(test_idx)
    num_vertices = int(max(test_sorted.max() + 1, allx.shape[0] + tx.shape[0]))

    # citeseer has isolated test vertices missing from the index file; give
    # them zero features and propagate the nearest listed label row
    full_range = np.arange(test_sorted.min(), test_sorted.max() + 1)
    features = sp.lil_matrix((num_vertices, allx.shape[1]), dtype=np.float64)
    features[: allx.shape[0]] = allx.todense()
    tx_full = sp.lil_matrix((len(full_range), tx.shape[1]), dtype=np.float64)
    ty_full = np.zeros((len(full_range), ty.shape[1]))
    pos = test_idx - test_sorted.min()
    tx_full[pos] = tx.todense()
    ty_full[pos] = ty
    features[test_sorted.min():test_sorted.max() + 1] = tx_full.todense()

    labels_onehot = np.zeros((num_vertices, ally.shape[1]))
    labels_onehot[: ally.shape[0]] = ally
    labels_onehot[test_sorted.min():test_sorted.max() + 1] = ty_full
    # isolated vertices keep an all-zero row; assign class 0 so every line is
    # a valid id (they are never part of any split)
    labels = labels_onehot.argmax(axis=1).astype(np.int64)

    os.makedirs(args.out, exist_ok=True)
    os.makedirs(os.path.join(args.out, "splits"), exist_ok=True)

    dense = np.asarray(features.todense(), dtype="<f8")
    dense.tofile(os.path.join(args.out, "features.f64"))

    edges = set()
    for src, nbrs in graph.items():
        for dst in nbrs:
            if src == dst:
                continue
            edges.add((min(src, dst), max(src, dst)))
    with open(os.path.join(args.out, "edges.tsv"), "w") as f:
        for src, dst in sorted(edges):
            f.write(f"{src}\t{dst}\n")

    with open(os.path.join(args.out, "labels.txt"), "w") as f:
        for v in labels:
            f.write(f"{int(v)}\n")

    meta = {
        "num_vertices": num_vertices,
        "num_features": int(allx.shape[1]),
        "num_classes": int(ally.shape[1]),
        "multilabel": False,
    }
    with open(os.path.join(args.out, "meta.json"), "w") as f:
        json.dump(meta, f)
        f.write("\n")

    n_train = y.shape[0]
    split = {
        "kind": "planetoid",
        "seed": 0,
        "train": list(range(n_train)),
        "val": list(range(n_train, n_train + 500)),
        "test": [int(v) for v in test_sorted],
    }
    with open(os.path.join(args.out, "splits", "planetoid.json"), "w") as f:
        json.dump(split, f)
        f.write("\n")

    print(f"{args.name}: {num_vertices} vertices, {len(edges)} undirected edges, "
          f"{meta['num_classes']} classes -> {args.out}")


if __name__ == "__main__":
    sys.exit(main())
