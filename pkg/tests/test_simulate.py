import json
import random

import pytest

from sotifkit.entropy import EntropyConfig, quantify_frame
from sotifkit.errors import InvariantViolation, ParseError
from sotifkit.merge import MergeConfig, merge_frame
from sotifkit.simulate import SimConfig, SimulatedFrame, SubsetSpec, _poisson, generate


class TestConfig:
    def test_defaults(self):
        config = SimConfig()
        assert config.frames == 100
        assert config.class_count == 11
        assert config.ensemble_size == 5
        assert config.untagged_weight == 1.0  # auto-set when no subsets

    def test_untagged_weight_kept_when_subsets_present(self):
        config = SimConfig(subsets=(SubsetSpec(path="environment/rain/natural"),))
        assert config.untagged_weight == 0.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"frames": -1},
            {"class_count": 1},
            {"min_objects": 4, "max_objects": 2},
            {"hard_rate": 1.5},
            {"jitter": 0.5},
            {"prob_noise": 0.9},
            {"ghost_rate": -1.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(InvariantViolation):
            SimConfig(**kwargs)

    def test_subset_spec_validates_path(self):
        with pytest.raises(InvariantViolation):
            SubsetSpec(path="weather/rain")

    def test_json_round_trip(self):
        config = SimConfig(
            seed=7,
            frames=12,
            subsets=(SubsetSpec(path="object/uncommon", weight=2.0, detect_scale=0.8),),
            untagged_weight=1.0,
        )
        again = SimConfig.from_json(json.dumps(config.to_json()))
        assert again == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ParseError, match="unknown config keys"):
            SimConfig.from_json('{"frames": 5, "fog": true}')

    def test_bad_json_rejected(self):
        with pytest.raises(ParseError):
            SimConfig.from_json("{not json")
        with pytest.raises(ParseError):
            SimConfig.from_json("[1, 2]")


class TestPoisson:
    def test_zero_mean_is_always_zero(self):
        rng = random.Random(0)
        assert all(_poisson(rng, 0.0) == 0 for _ in range(100))

    def test_mean_roughly_respected(self):
        rng = random.Random(1)
        draws = [_poisson(rng, 2.0) for _ in range(4000)]
        assert 1.8 < sum(draws) / len(draws) < 2.2


class TestGenerate:
    def test_seed_determinism(self):
        config = SimConfig(seed=42, frames=8)
        assert generate(config) == generate(config)

    def test_seed_changes_output(self):
        base = SimConfig(seed=1, frames=8)
        other = SimConfig(seed=2, frames=8)
        assert generate(base) != generate(other)

    def test_shapes(self):
        config = SimConfig(seed=3, frames=5, ensemble_size=3)
        frames = generate(config)
        assert len(frames) == 5
        for sim in frames:
            assert isinstance(sim, SimulatedFrame)
            assert len(sim.per_model) == 3
            assert 1 <= len(sim.frame.ground_truth) <= 6
            for model_index, detections in enumerate(sim.per_model):
                for order, det in enumerate(detections):
                    assert det.model_index == model_index
                    assert det.source_order == order
                    assert len(det.class_probs) == config.class_count

    def test_frame_ids_are_sorted_and_unique(self):
        frames = generate(SimConfig(seed=4, frames=12))
        ids = [sim.frame.frame_id for sim in frames]
        assert ids == sorted(ids)
        assert len(set(ids)) == len(ids)

    def test_noiseless_fixed_point(self):
        config = SimConfig(
            seed=5,
            frames=6,
            detect_prob_easy=1.0,
            detect_prob_hard=1.0,
            jitter=0.0,
            confusion=0.0,
            prob_noise=0.0,
            diffuse_rate=0.0,
            ghost_rate=0.0,
        )
        entropy_config = EntropyConfig(class_count=config.class_count)
        for sim in generate(config):
            merged = merge_frame(list(sim.per_model), MergeConfig())
            assert len(merged) == len(sim.frame.ground_truth)
            quantified = quantify_frame(merged, entropy_config)
            gt_boxes = [
                (o.box.x, o.box.y, o.box.w, o.box.h) for o in sim.frame.ground_truth
            ]
            for q in quantified:
                assert q.d == config.ensemble_size
                assert q.h_star == 0.0 and q.h == 0.0 and q.warned is False
                assert set(q.fused_probs) <= {0.0, 1.0}
                # the representative box is the member mean, so averaging T
                # identical boxes may drift by an ulp
                mine = (q.box.x, q.box.y, q.box.w, q.box.h)
                assert any(
                    all(m == pytest.approx(g, rel=1e-12) for m, g in zip(mine, box))
                    for box in gt_boxes
                )

    def test_hard_rate_extremes(self):
        all_hard = generate(SimConfig(seed=6, frames=4, hard_rate=1.0))
        assert all(
            o.hard == 1 for sim in all_hard for o in sim.frame.ground_truth
        )
        none_hard = generate(SimConfig(seed=6, frames=4, hard_rate=0.0))
        assert all(
            o.hard == 0 for sim in none_hard for o in sim.frame.ground_truth
        )

    def test_subset_tags_assigned(self):
        config = SimConfig(
            seed=7,
            frames=40,
            subsets=(
                SubsetSpec(path="environment/rain/natural", weight=1.0),
                SubsetSpec(path="object/uncommon", weight=1.0),
            ),
            untagged_weight=1.0,
        )
        tags = {
            None if sim.frame.subset is None else sim.frame.subset.primary
            for sim in generate(config)
        }
        assert tags == {None, "environment", "object"}

    def test_detect_scale_thins_votes(self):
        weak = SimConfig(
            seed=8,
            frames=60,
            ghost_rate=0.0,
            subsets=(SubsetSpec(path="object/uncommon", weight=1.0, detect_scale=0.3),),
            untagged_weight=1.0,
        )
        per_tag = {"tagged": [0, 0], "plain": [0, 0]}  # [detections, frames]
        for sim in generate(weak):
            key = "plain" if sim.frame.subset is None else "tagged"
            per_tag[key][0] += sum(len(m) for m in sim.per_model)
            per_tag[key][1] += 1
        tagged_rate = per_tag["tagged"][0] / per_tag["tagged"][1]
        plain_rate = per_tag["plain"][0] / per_tag["plain"][1]
        assert tagged_rate < plain_rate

    def test_zero_frames(self):
        assert generate(SimConfig(seed=9, frames=0)) == []

    def test_ghosts_add_detections(self):
        quiet = SimConfig(seed=10, frames=10, ghost_rate=0.0)
        noisy = SimConfig(seed=10, frames=10, ghost_rate=3.0)
        count = lambda frames: sum(len(m) for sim in frames for m in sim.per_model)
        assert count(generate(noisy)) > count(generate(quiet))
