#!/usr/bin/env python3
"""Regenerates the binary fixtures under tests/data (needs numpy, scipy, onnx)."""

import json
import pathlib

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper
from scipy.io import savemat

DATA = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"


def mat_fixtures():
    rf = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    savemat(DATA / "rf_plain.mat", {"rf": rf}, do_compression=False)
    savemat(DATA / "rf_compressed.mat", {"rf": rf}, do_compression=True)
    savemat(
        DATA / "mixed_types.mat",
        {
            "counts": np.array([[-3, 7, 32767]], dtype=np.int16),
            "gain": np.array([[0.5], [1.5]], dtype=np.float32),
            "meta": {"probe": np.array([[1.0]])},
            "iq": np.array([[1 + 2j, 3 - 1j]]),
            "cube": np.zeros((2, 2, 2)),
        },
        do_compression=False,
    )

    rng = np.random.default_rng(7)
    rows, cols = 96, 80
    roi = np.zeros((rows, cols))
    roi[30:60, 20:50] = 1.0
    roi2 = np.zeros((rows, cols))
    roi2[25:55, 30:55] = 1.0
    savemat(
        DATA / "lesion.mat",
        {
            "rf1": rng.standard_normal((rows, cols)),
            "rf2": rng.standard_normal((rows, cols)),
            "roi1": roi,
            "roi2": roi2,
        },
        do_compression=True,
    )


def onnx_fixture():
    # Global average pool over each channel, then a 3 -> 4 dense layer:
    # out[j] = sum_c W[j][c] * mean_c + bias[j], W[j][c] = (c + 1) * (j + 1) / 10.
    weight = np.array([[(c + 1) * (j + 1) / 10.0 for c in range(3)] for j in range(4)], dtype=np.float32)
    bias = np.array([0.5 * j for j in range(4)], dtype=np.float32)
    graph = helper.make_graph(
        [
            helper.make_node("GlobalAveragePool", ["input"], ["pooled"]),
            helper.make_node("Flatten", ["pooled"], ["flat"], axis=1),
            helper.make_node("Gemm", ["flat", "W", "B"], ["features"], transB=1),
        ],
        "tiny_tap",
        [helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 3, 32, 32])],
        [helper.make_tensor_value_info("features", TensorProto.FLOAT, [1, 4])],
        [numpy_helper.from_array(weight, "W"), numpy_helper.from_array(bias, "B")],
    )
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 11)])
    model.ir_version = 6
    onnx.checker.check_model(model)
    onnx.save(model, DATA / "tiny.onnx")
    manifest = {
        "extractor_id": "tiny",
        "source_network": "synthetic",
        "tap": "global average pool + dense",
        "input_size": 32,
        "preprocess": "baseline",
        "expected_dim": 4,
        "model_file": "tiny.onnx",
    }
    (DATA / "tiny.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    mat_fixtures()
    onnx_fixture()
