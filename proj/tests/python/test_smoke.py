import os

import pytest

import trajattn


@pytest.fixture()
def tiny_config():
    cfg = trajattn.ExperimentConfig()
    cfg.world_extent = 48.0
    cfg.model_horizon = 4
    cfg.image_size = 16
    cfg.conv_channels = [6, 12]
    cfg.hidden_size = 24
    cfg.action_embed_size = 8
    cfg.collect_samples = 80
    cfg.collect_episode_steps = 40
    cfg.epochs = 2
    cfg.batch_size = 16
    cfg.plan_rollouts = 16
    cfg.plan_elites = 4
    cfg.eval_episodes = 1
    cfg.eval_episode_steps = 5
    cfg.export_samples = 2
    cfg.seeds = [0]
    cfg.validate()
    return cfg


def test_gradient_check():
    assert trajattn.gradient_check(seed=3) < 1e-6


def test_config_round_trip(tiny_config):
    text = trajattn.serialize_config(tiny_config)
    again = trajattn.parse_config(text)
    assert trajattn.serialize_config(again) == text
    assert trajattn.config_hash(again) == trajattn.config_hash(tiny_config)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown keys"):
        trajattn.parse_config("[world]\nmoon_gravity = 1.6\n")


def test_pipeline_end_to_end(tiny_config, tmp_path):
    out = str(tmp_path)
    trajattn.gen_world(tiny_config, 7, out)
    world = trajattn.load_world(os.path.join(out, "world.bin"))
    swapped = trajattn.swap_terrain(world)
    assert world.num_classes == 2
    assert not world.swapped and swapped.swapped
    assert world.config_hash == trajattn.config_hash(tiny_config)

    trajattn.collect(tiny_config, os.path.join(out, "world.bin"), 7, out)
    info = trajattn.dataset_info(os.path.join(out, "dataset.bin"))
    assert info["num_samples"] == 80
    assert info["heads"] == ["terrain", "collision", "delta_pos"]

    summary = trajattn.train(tiny_config, os.path.join(out, "dataset.bin"), "trajectory", 0, out)
    assert os.path.exists(summary["checkpoint"])
    assert 0.0 <= summary["best_val_accuracy"] <= 1.0

    metrics = trajattn.eval_offline(
        tiny_config, os.path.join(out, "dataset.bin"), summary["checkpoint"], "trajectory", out
    )
    assert 0.0 <= metrics["terrain.accuracy"] <= 1.0
    assert metrics["attention.fidelity"] >= 0.0

    returns = trajattn.eval_onpolicy(
        tiny_config, os.path.join(out, "world.bin"), summary["checkpoint"], "trajectory", 0, out
    )
    assert returns["planner_train"] > 0.0

    trajattn.export_attention(
        tiny_config, os.path.join(out, "dataset.bin"), summary["checkpoint"], "trajectory", out
    )
    overlays = [n for n in os.listdir(out) if n.endswith(".ppm")]
    assert len(overlays) == 2


def test_training_is_deterministic(tiny_config, tmp_path):
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    trajattn.gen_world(tiny_config, 7, out_a)
    trajattn.collect(tiny_config, os.path.join(out_a, "world.bin"), 7, out_a)
    dataset = os.path.join(out_a, "dataset.bin")
    first = trajattn.train(tiny_config, dataset, "none", 1, out_a)
    second = trajattn.train(tiny_config, dataset, "none", 1, out_b)
    with open(first["metrics"], "rb") as f_a, open(second["metrics"], "rb") as f_b:
        assert f_a.read() == f_b.read()
    with open(first["checkpoint"], "rb") as f_a, open(second["checkpoint"], "rb") as f_b:
        assert f_a.read() == f_b.read()
