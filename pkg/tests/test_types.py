import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sotifkit.errors import InvariantViolation
from sotifkit.types import (
    DEFAULT_CATEGORY_NAMES,
    SUBSET_TABLE,
    BoundingBox,
    CategorySet,
    Detection,
    Frame,
    GroundTruthObject,
    SubsetTag,
    iou,
)

from reference import ref_iou

boxes = st.builds(
    BoundingBox,
    x=st.floats(-500, 2000),
    y=st.floats(-500, 2000),
    w=st.floats(0.5, 800),
    h=st.floats(0.5, 800),
)


class TestBoundingBox:
    def test_derived_coordinates(self):
        box = BoundingBox(x=10.0, y=20.0, w=30.0, h=40.0)
        assert (box.x2, box.y2) == (40.0, 60.0)
        assert box.area == 1200.0

    @pytest.mark.parametrize("w,h", [(0.0, 10.0), (10.0, 0.0), (-1.0, 5.0), (5.0, -2.0)])
    def test_rejects_degenerate_sizes(self, w, h):
        with pytest.raises(InvariantViolation):
            BoundingBox(x=0.0, y=0.0, w=w, h=h)

    def test_rejects_non_finite(self):
        with pytest.raises(InvariantViolation):
            BoundingBox(x=math.nan, y=0.0, w=1.0, h=1.0)
        with pytest.raises(InvariantViolation):
            BoundingBox(x=0.0, y=0.0, w=math.inf, h=1.0)


class TestIou:
    def test_identical_boxes(self):
        box = BoundingBox(x=5.0, y=5.0, w=10.0, h=10.0)
        assert iou(box, box) == 1.0

    def test_disjoint_boxes(self):
        a = BoundingBox(x=0.0, y=0.0, w=10.0, h=10.0)
        b = BoundingBox(x=20.0, y=20.0, w=10.0, h=10.0)
        assert iou(a, b) == 0.0

    def test_known_overlap(self):
        a = BoundingBox(x=0.0, y=0.0, w=10.0, h=10.0)
        b = BoundingBox(x=5.0, y=0.0, w=10.0, h=10.0)
        # intersection 50, union 150
        assert iou(a, b) == pytest.approx(1.0 / 3.0)

    def test_touching_edges_do_not_overlap(self):
        a = BoundingBox(x=0.0, y=0.0, w=10.0, h=10.0)
        b = BoundingBox(x=10.0, y=0.0, w=10.0, h=10.0)
        assert iou(a, b) == 0.0

    @given(a=boxes, b=boxes)
    def test_symmetry_bounds_and_reference(self, a, b):
        value = iou(a, b)
        assert 0.0 <= value <= 1.0
        assert value == iou(b, a)
        expected = ref_iou((a.x, a.y, a.w, a.h), (b.x, b.y, b.w, b.h))
        assert value == pytest.approx(expected, abs=1e-12)


class TestCategorySet:
    def test_default_is_the_eleven_road_users(self):
        cats = CategorySet.default()
        assert cats.count == 11
        assert cats.names == DEFAULT_CATEGORY_NAMES
        assert cats.label(8) == "traffic sign"
        assert cats.index("person") == 6

    def test_generic(self):
        cats = CategorySet.generic(3)
        assert cats.count == 3
        assert len({*cats.names}) == 3

    def test_rejects_duplicates_and_empty(self):
        with pytest.raises(InvariantViolation):
            CategorySet(names=("car", "car"))
        with pytest.raises(InvariantViolation):
            CategorySet(names=())
        with pytest.raises(InvariantViolation):
            CategorySet(names=("car", ""))

    def test_unknown_lookups(self):
        cats = CategorySet.default()
        with pytest.raises(InvariantViolation):
            cats.label(11)
        with pytest.raises(InvariantViolation):
            cats.index("submarine")


class TestSubsetTag:
    def test_parse_full_path(self):
        tag = SubsetTag.parse("environment/rain/natural")
        assert (tag.primary, tag.secondary, tag.tertiary) == ("environment", "rain", "natural")
        assert tag.path == "environment/rain/natural"

    def test_object_common_requires_tertiary_absence_for_uncommon(self):
        tag = SubsetTag.parse("object/uncommon")
        assert tag.tertiary is None
        with pytest.raises(InvariantViolation):
            SubsetTag.parse("object/uncommon/natural")

    def test_every_table_path_parses(self):
        for primary, secondaries in SUBSET_TABLE.items():
            for secondary, tertiaries in secondaries.items():
                if tertiaries:
                    for tertiary in tertiaries:
                        path = f"{primary}/{secondary}/{tertiary}"
                        assert SubsetTag.parse(path).path == path
                else:
                    path = f"{primary}/{secondary}"
                    assert SubsetTag.parse(path).path == path

    @pytest.mark.parametrize(
        "path",
        ["", "weather/rain/natural", "environment/fog/natural", "environment/rain",
         "environment/rain/synthetic", "object/common"],
    )
    def test_rejects_unknown_paths(self, path):
        with pytest.raises(InvariantViolation):
            SubsetTag.parse(path)


class TestDetection:
    def _make(self, probs, objectness=0.8):
        return Detection(
            box=BoundingBox(x=0.0, y=0.0, w=10.0, h=10.0),
            class_probs=tuple(probs),
            objectness=objectness,
            model_index=0,
            source_order=0,
        )

    def test_winning_label_and_score(self):
        det = self._make([0.1, 0.7, 0.2], objectness=0.5)
        assert det.winning_label == 1
        assert det.score == pytest.approx(0.35)

    def test_winning_label_tie_takes_first(self):
        det = self._make([0.4, 0.4, 0.1])
        assert det.winning_label == 0

    def test_rejects_bad_probabilities(self):
        with pytest.raises(InvariantViolation):
            self._make([0.5, 1.2])
        with pytest.raises(InvariantViolation):
            self._make([-0.1, 0.5])
        with pytest.raises(InvariantViolation):
            self._make([])

    def test_rejects_bad_objectness(self):
        with pytest.raises(InvariantViolation):
            self._make([0.5], objectness=1.5)

    def test_rejects_negative_model_index(self):
        with pytest.raises(InvariantViolation):
            Detection(
                box=BoundingBox(x=0.0, y=0.0, w=1.0, h=1.0),
                class_probs=(1.0,),
                objectness=1.0,
                model_index=-1,
                source_order=0,
            )


class TestFrame:
    def test_rejects_bad_size(self):
        with pytest.raises(InvariantViolation):
            Frame(frame_id="f", width=0, height=100, ground_truth=(), subset=None)

    def test_ground_truth_flags(self):
        with pytest.raises(InvariantViolation):
            GroundTruthObject(
                category=0, box=BoundingBox(x=0.0, y=0.0, w=1.0, h=1.0), hard=2
            )
