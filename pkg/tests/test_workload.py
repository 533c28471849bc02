import itertools

import numpy as np
import pytest

from cimcost import (
    OpNode,
    WeightTensor,
    WorkloadError,
    mac_count,
    parse_workload,
    reshape_weight,
    reshaped_dims,
    row_index,
)

CHANNEL_MAJOR = ("C_in", "K_h", "K_w")
KERNEL_MAJOR = ("K_h", "K_w", "C_in")


def conv_node(**overrides):
    dims = {"C_out": 64, "C_in": 3, "K_h": 3, "K_w": 3, "H_out": 32, "W_out": 32}
    dims.update(overrides)
    return OpNode(id="c", kind="conv", dims=dims)


def test_single_fc_minimal_graph():
    g = parse_workload(
        {"nodes": [{"id": "fc1", "kind": "fc", "dims": {"M_in": 64, "M_out": 32}}]}
    )
    assert len(g.nodes) == 1
    assert g.edges == []
    assert g.topo_order == ("fc1",)


def test_chain_topo_matches_listing():
    g = parse_workload(
        {
            "nodes": [
                {"id": "conv", "kind": "conv", "dims": conv_node().dims},
                {"id": "act", "kind": "activation", "dims": {"count": 10}, "inputs": ["conv"]},
                {"id": "fc", "kind": "fc", "dims": {"M_in": 8, "M_out": 4}, "inputs": ["act"]},
            ]
        }
    )
    assert len(g.nodes) == 3
    assert len(g.edges) == 2
    assert g.topo_order == ("conv", "act", "fc")


def test_dangling_input_rejected():
    with pytest.raises(WorkloadError, match="dangling input id 'x9'"):
        parse_workload(
            {"nodes": [{"id": "a", "kind": "activation", "dims": {"count": 1}, "inputs": ["x9"]}]}
        )


def test_cycle_rejected():
    with pytest.raises(WorkloadError, match="cycle"):
        parse_workload(
            {
                "nodes": [
                    {"id": "a", "kind": "activation", "dims": {"count": 1}, "inputs": ["b"]},
                    {"id": "b", "kind": "activation", "dims": {"count": 1}, "inputs": ["a"]},
                ]
            }
        )


def test_missing_extent_rejected():
    with pytest.raises(WorkloadError, match="missing extent"):
        OpNode(id="c", kind="conv", dims={"C_out": 4})


def test_reshaped_dims_conv_channel_major():
    assert reshaped_dims(conv_node(), CHANNEL_MAJOR) == (27, 64)


def test_reshaped_dims_fc():
    node = OpNode(id="f", kind="fc", dims={"M_in": 512, "M_out": 100})
    assert reshaped_dims(node, CHANNEL_MAJOR) == (512, 100)


def test_reshaped_dims_unknown_extent():
    with pytest.raises(WorkloadError, match="lacks"):
        reshaped_dims(conv_node(), ("C_in", "K_h", "K_w", "D"))


def test_kernel_major_same_dims_different_permutation():
    # expected flattened index of each (c, kh, kw) triple, by enumeration
    node = conv_node()
    assert reshaped_dims(node, KERNEL_MAJOR) == (27, 64)
    seen_channel, seen_kernel = set(), set()
    for c, kh, kw in itertools.product(range(3), range(3), range(3)):
        coords = {"C_in": c, "K_h": kh, "K_w": kw}
        idx_ch = row_index(node, CHANNEL_MAJOR, coords)
        idx_k = row_index(node, KERNEL_MAJOR, coords)
        assert idx_ch == (c * 3 + kh) * 3 + kw
        assert idx_k == (kh * 3 + kw) * 3 + c
        seen_channel.add(idx_ch)
        seen_kernel.add(idx_k)
    # both orders induce a bijection onto the row range
    assert seen_channel == set(range(27))
    assert seen_kernel == set(range(27))


def test_reshape_weight_follows_flatten_order(rng):
    node = conv_node(C_out=4, C_in=2, K_h=2, K_w=2)
    w = WeightTensor(id="w", shape=(4, 2, 2, 2), values=rng.normal(size=(4, 2, 2, 2)))
    m_ch = reshape_weight(w, node, CHANNEL_MAJOR)
    m_k = reshape_weight(w, node, KERNEL_MAJOR)
    assert m_ch.shape == (8, 4)
    for c, kh, kw in itertools.product(range(2), range(2), range(2)):
        coords = {"C_in": c, "K_h": kh, "K_w": kw}
        for co in range(4):
            assert m_ch[row_index(node, CHANNEL_MAJOR, coords), co] == w.values[co, c, kh, kw]
            assert m_k[row_index(node, KERNEL_MAJOR, coords), co] == w.values[co, c, kh, kw]


def test_reshape_preserves_element_count():
    node = conv_node(C_out=10, C_in=5, K_h=3, K_w=2)
    M, N = reshaped_dims(node, CHANNEL_MAJOR)
    assert M * N == 10 * 5 * 3 * 2


def test_mac_counts():
    assert mac_count(conv_node(C_out=2, C_in=3, K_h=3, K_w=3, H_out=4, W_out=4)) == 864
    assert mac_count(OpNode(id="f", kind="fc", dims={"M_in": 512, "M_out": 100})) == 51200
    dw = OpNode(
        id="d",
        kind="depthwise_conv",
        dims={"C_in": 8, "K_h": 3, "K_w": 3, "H_out": 2, "W_out": 2},
    )
    assert mac_count(dw) == 288


def test_mac_count_unsupported_kind():
    with pytest.raises(WorkloadError):
        mac_count(OpNode(id="p", kind="pool", dims={"count": 3}))


def test_weight_payload_length_checked():
    with pytest.raises(WorkloadError, match="payload length"):
        WeightTensor(id="w", shape=(2, 2), values=np.zeros(3))


def test_weight_bitwidth_checked():
    with pytest.raises(WorkloadError, match="bitwidth"):
        WeightTensor(id="w", shape=(2, 2), element_bitwidth=7)
