import pytest

import tasklens


@pytest.fixture(scope="module")
def unet(tmp_path_factory):
    out = tmp_path_factory.mktemp("pkg") / "unet"
    tasklens.write_fixture("unet", out)
    return out


@pytest.fixture(scope="module")
def unet_plus(tmp_path_factory):
    out = tmp_path_factory.mktemp("pkg") / "unet-plus"
    tasklens.write_fixture("unet-plus", out)
    return out


def test_graph_and_hash(unet):
    g = tasklens.graph(unet)
    assert len(g["tasks"]) == 51
    assert len(tasklens.graph_hash(unet)) == 64


def test_percent_helpers():
    assert tasklens.round_percent(tasklens.percent_delta(401.21, 106.21)) == 73.53
    with pytest.raises(tasklens.TasklensError):
        tasklens.percent_delta(0.0, 1.0)


def test_simulate_preset(unet):
    sim = tasklens.simulate(unet, {"preset": "int8-io-kernel"})
    assert sim["summary_opt"]["total_latency"] < sim["summary_base"]["total_latency"]
    assert len(sim["per_task"]) == 51
    empty = tasklens.simulate(unet)
    assert empty["summary_opt"] == empty["summary_base"]


def test_metrics_and_options(unet):
    m = tasklens.metrics(unet, {"preset": "prune-50"})
    assert len(m["rows"]) == 51
    assert "delta" in m["rows"][0]
    conv = next(t["id"] for t in tasklens.graph(unet)["tasks"] if t["kind"] == "conv2d")
    opts = tasklens.options(unet, conv)
    assert len(opts) == 48
    savings = [o["latency_savings"] for o in opts]
    assert savings == sorted(savings, reverse=True)


def test_plan_and_diff(unet, unet_plus):
    base = tasklens.simulate(unet)["summary_base"]["total_latency"]
    plan = tasklens.plan_to_budget(unet, base * 0.9)
    assert plan["status"] == "met"
    assert plan["latency"] <= base * 0.9
    d = tasklens.diff(unet, unet_plus)
    assert len(d["added"]) == 2
    assert d["removed"] == []


def test_layout(unet):
    lay = tasklens.layout(unet)
    layer = {n["task"]: n["layer"] for n in lay["nodes"]}
    assert all(layer[e["from"]] < layer[e["to"]] for e in lay["edges"])


def test_errors_are_typed(tmp_path):
    with pytest.raises(tasklens.TasklensError, match="Io|NotFound"):
        tasklens.graph(tmp_path / "missing")
    with pytest.raises(tasklens.TasklensError):
        tasklens.write_fixture("nope", tmp_path / "x")
