import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sotifkit.errors import ParseError
from sotifkit.formats import (
    EnsembleDetections,
    load_frame_detections,
    parse_coco_ext,
    parse_detection_file,
    parse_yolo_ext,
    write_coco_ext,
    write_detection_file,
    write_yolo_ext,
)
from sotifkit.types import BoundingBox, CategorySet, Detection, Frame, GroundTruthObject, SubsetTag

CATS = CategorySet.default()


def make_gt(x, y, w, h, category=0, hard=0):
    return GroundTruthObject(category=category, box=BoundingBox(x=x, y=y, w=w, h=h), hard=hard)


class TestYolo:
    def test_parse_single_line(self):
        objects = parse_yolo_ext("0 0.500000 0.500000 0.250000 0.500000 1\n", 1280, 720, CATS)
        assert len(objects) == 1
        obj = objects[0]
        assert obj.category == 0
        assert obj.hard == 1
        assert obj.box.x == pytest.approx(1280 * (0.5 - 0.125))
        assert obj.box.w == pytest.approx(320.0)
        assert obj.box.h == pytest.approx(360.0)

    def test_blank_lines_skipped(self):
        text = "\n0 0.5 0.5 0.2 0.2 0\n\n"
        assert len(parse_yolo_ext(text, 100, 100, CATS)) == 1

    @pytest.mark.parametrize(
        "line,fragment",
        [
            ("0 0.5 0.5 0.2 0.2", "6 fields"),
            ("0 0.5 0.5 0.2 0.2 0 7", "6 fields"),
            ("x 0.5 0.5 0.2 0.2 0", "not an integer"),
            ("99 0.5 0.5 0.2 0.2 0", "outside"),
            ("0 1.5 0.5 0.2 0.2 0", "outside [0, 1]"),
            ("0 0.5 0.5 0.2 0.2 2", "f_h"),
            ("0 0.5 0.5 0.0 0.2 0", "positive"),
        ],
    )
    def test_malformed_lines(self, line, fragment):
        with pytest.raises(ParseError) as err:
            parse_yolo_ext(line + "\n", 100, 100, CATS, source="labels.txt")
        assert fragment in str(err.value)
        assert "labels.txt:1" in str(err.value)

    def test_line_numbers_in_errors(self):
        text = "0 0.5 0.5 0.2 0.2 0\nbroken\n"
        with pytest.raises(ParseError) as err:
            parse_yolo_ext(text, 100, 100, CATS, source="f.txt")
        assert err.value.line == 2

    def test_write_fixed_format(self):
        obj = make_gt(160.0, 90.0, 320.0, 180.0, category=3, hard=1)
        text = write_yolo_ext([obj], 1280, 720)
        assert text == "3 0.250000 0.250000 0.250000 0.250000 1\n"

    @given(
        st.lists(
            st.tuples(
                st.integers(0, 10),
                st.floats(0.05, 0.9),
                st.floats(0.05, 0.9),
                st.floats(0.01, 0.1),
                st.floats(0.01, 0.1),
                st.integers(0, 1),
            ),
            max_size=8,
        )
    )
    def test_round_trip_within_half_pixel(self, raw):
        width, height = 1920, 1080
        objects = [
            make_gt(
                x=min(x, 1.0 - w) * width,
                y=min(y, 1.0 - h) * height,
                w=w * width,
                h=h * height,
                category=c,
                hard=hard,
            )
            for c, x, y, w, h, hard in raw
        ]
        text = write_yolo_ext(objects, width, height)
        parsed = parse_yolo_ext(text, width, height, CATS)
        assert len(parsed) == len(objects)
        for before, after in zip(objects, parsed):
            assert after.category == before.category
            assert after.hard == before.hard
            for attr in ("x", "y", "w", "h"):
                assert abs(getattr(after.box, attr) - getattr(before.box, attr)) < 0.5


class TestCoco:
    def _frames(self):
        return [
            Frame(
                frame_id="a",
                width=1280,
                height=720,
                ground_truth=(make_gt(10, 10, 100, 50, category=2, hard=1),),
                subset=SubsetTag.parse("environment/rain/natural"),
            ),
            Frame(
                frame_id="b",
                width=640,
                height=480,
                ground_truth=(make_gt(5, 5, 20, 20), make_gt(100, 100, 30, 30, category=10)),
                subset=None,
            ),
        ]

    def test_round_trip(self):
        document = write_coco_ext(self._frames(), CATS)
        frames, warnings = parse_coco_ext(document, CATS)
        assert warnings == []
        assert [f.frame_id for f in frames] == ["a", "b"]
        assert frames[0].subset.path == "environment/rain/natural"
        assert frames[0].ground_truth[0].hard == 1
        assert frames[1].subset is None
        assert frames[1].ground_truth[1].category == 10

    def test_missing_hard_defaults_with_warning(self):
        document = write_coco_ext(self._frames(), CATS)
        del document["annotations"][0]["hard"]
        frames, warnings = parse_coco_ext(document, CATS, source="x.json")
        assert len(warnings) == 1
        assert "defaulting to 0" in warnings[0]
        assert frames[0].ground_truth[0].hard == 0

    def test_category_mismatch_is_error(self):
        document = write_coco_ext(self._frames(), CATS)
        document["categories"][0]["name"] = "banana"
        with pytest.raises(ParseError):
            parse_coco_ext(document, CATS)
        document = write_coco_ext(self._frames(), CATS)
        document["categories"].pop()
        with pytest.raises(ParseError):
            parse_coco_ext(document, CATS)

    def test_bad_documents(self):
        with pytest.raises(ParseError):
            parse_coco_ext("{not json", CATS)
        with pytest.raises(ParseError):
            parse_coco_ext({"images": []}, CATS)

    def test_unknown_image_reference(self):
        document = write_coco_ext(self._frames(), CATS)
        document["annotations"][0]["image_id"] = 999
        with pytest.raises(ParseError) as err:
            parse_coco_ext(document, CATS)
        assert "unknown image" in str(err.value)

    def test_bad_hard_value(self):
        document = write_coco_ext(self._frames(), CATS)
        document["annotations"][0]["hard"] = 3
        with pytest.raises(ParseError):
            parse_coco_ext(document, CATS)


class TestDetectionFiles:
    def _detections(self):
        return [
            Detection(
                box=BoundingBox(x=10.0, y=20.0, w=30.0, h=40.0),
                class_probs=(0.9, 0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                objectness=0.8,
                model_index=2,
                source_order=0,
            ),
            Detection(
                box=BoundingBox(x=50.0, y=60.0, w=20.0, h=10.0),
                class_probs=(0.0, 0.0, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1),
                objectness=0.6,
                model_index=2,
                source_order=1,
            ),
        ]

    def test_round_trip_preserves_order_and_values(self):
        text = write_detection_file(self._detections())
        parsed = parse_detection_file(text, 2, 11)
        assert len(parsed) == 2
        assert parsed[0].source_order == 0
        assert parsed[1].source_order == 1
        assert parsed[0].winning_label == 0
        assert parsed[1].winning_label == 2
        assert parsed[0].box.x == 10.0
        assert parsed[1].objectness == 0.6

    def test_errors_name_model_and_record(self):
        bad = json.dumps([{"bbox": [0, 0, 10, 10], "objectness": 0.5, "class_probs": [1.0]}])
        with pytest.raises(ParseError) as err:
            parse_detection_file(bad, 3, 11, source="det.json")
        message = str(err.value)
        assert "model 3" in message
        assert "record 0" in message

    def test_rejects_non_array(self):
        with pytest.raises(ParseError):
            parse_detection_file("{}", 0, 11)

    def test_rejects_invalid_probability(self):
        bad = json.dumps(
            [{"bbox": [0, 0, 10, 10], "objectness": 0.5, "class_probs": [2.0] + [0.0] * 10}]
        )
        with pytest.raises(ParseError):
            parse_detection_file(bad, 0, 11)


class TestEnsembleLoading:
    def test_missing_model_file_is_empty_list(self, tmp_path):
        root = tmp_path / "detections"
        (root / "model_0").mkdir(parents=True)
        (root / "model_0" / "f1.json").write_text(
            write_detection_file(
                [
                    Detection(
                        box=BoundingBox(x=0.0, y=0.0, w=5.0, h=5.0),
                        class_probs=(1.0,) + (0.0,) * 10,
                        objectness=1.0,
                        model_index=0,
                        source_order=0,
                    )
                ]
            )
        )
        ensemble = load_frame_detections(root, "f1", 3, 11)
        assert ensemble.t_count == 3
        assert len(ensemble.per_model[0]) == 1
        assert ensemble.per_model[1] == []
        assert ensemble.per_model[2] == []

    def test_wrong_slot_rejected(self):
        det = Detection(
            box=BoundingBox(x=0.0, y=0.0, w=5.0, h=5.0),
            class_probs=(1.0,),
            objectness=1.0,
            model_index=1,
            source_order=0,
        )
        with pytest.raises(Exception):
            EnsembleDetections("f", [[det]])
