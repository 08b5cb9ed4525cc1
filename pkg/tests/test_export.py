from fractions import Fraction

import pytest
from PIL import Image

from wheatai.errors import DimensionMismatch, SchemaMismatch
from wheatai.export import (
    CSV_SCHEMAS,
    OverlayStyle,
    category_colors,
    encode_png,
    export_crops,
    format_cell,
    plot_id_for,
    render_overlay,
    write_results_csv,
)
from wheatai.geom import OrientedBox
from wheatai.infer import Detection, DetectionSet
from wheatai.pipelines import ImageOutput, ImageResult, JobResult


def det_set(boxes, categories=None, image="img01.jpg", width=320, height=240):
    dets = []
    for i, b in enumerate(boxes):
        cat = categories[i] if categories else "spike"
        dets.append(Detection(OrientedBox(*b), cat, 0.9, source_index=i))
    return DetectionSet(image, width, height, tuple(dets))


def fdk_result(rows_by_image):
    images = []
    for filename, rows in rows_by_image.items():
        images.append(
            ImageResult(
                image_id=filename,
                filename=filename,
                output=ImageOutput(records=tuple(rows)),
            )
        )
    return JobResult("fdk", tuple(images))


FDK_ROW = {
    "total_kernels": 100,
    "damaged_kernels": 13,
    "fdk_ratio": Fraction(13, 100),
    "area_weighted_ratio": None,
}


class TestCsv:
    def test_rows_and_header(self, tmp_path):
        result = fdk_result({"a_1.jpg": [FDK_ROW], "b_2.jpg": [dict(FDK_ROW, damaged_kernels=7, fdk_ratio=Fraction(7, 100))]})
        path = tmp_path / "fdk.csv"
        n = write_results_csv(result, "fdk", path)
        lines = path.read_text("utf-8").split("\n")
        assert n == 2
        assert lines[0] == "image,plot_id,total_kernels,damaged_kernels,fdk_ratio,area_weighted_ratio"
        assert lines[1] == "a_1.jpg,a,100,13,0.13,"
        assert lines[2] == "b_2.jpg,b,100,7,0.07,"
        assert lines[3] == ""

    def test_empty_result_header_only(self, tmp_path):
        path = tmp_path / "fdk.csv"
        n = write_results_csv(JobResult("fdk", ()), "fdk", path)
        assert n == 0
        assert path.read_text("utf-8") == "image,plot_id,total_kernels,damaged_kernels,fdk_ratio,area_weighted_ratio\n"

    def test_plot_id_convention(self):
        assert plot_id_for("SD2024-017_1.jpg") == "SD2024-017"
        assert plot_id_for("plain.png") == "plain"
        assert plot_id_for("a_b_c.jpeg") == "a"

    def test_rows_sorted_by_filename(self, tmp_path):
        result = fdk_result({"z_9.jpg": [FDK_ROW], "a_1.jpg": [FDK_ROW]})
        path = tmp_path / "fdk.csv"
        write_results_csv(result, "fdk", path)
        lines = path.read_text("utf-8").splitlines()
        assert lines[1].startswith("a_1.jpg")
        assert lines[2].startswith("z_9.jpg")

    def test_schema_mismatch(self, tmp_path):
        bad = fdk_result({"a.jpg": [{"bogus": 1}]})
        with pytest.raises(SchemaMismatch):
            write_results_csv(bad, "fdk", tmp_path / "x.csv")

    def test_unknown_table(self, tmp_path):
        with pytest.raises(SchemaMismatch):
            write_results_csv(JobResult("fdk", ()), "fdk", tmp_path / "x.csv", table="summary")

    def test_failed_images_omitted(self, tmp_path):
        images = (
            ImageResult("a.jpg", "a.jpg", output=ImageOutput(records=(FDK_ROW,))),
            ImageResult("b.jpg", "b.jpg", error="missing_prediction"),
        )
        path = tmp_path / "fdk.csv"
        assert write_results_csv(JobResult("fdk", images), "fdk", path) == 1

    def test_deterministic_bytes(self, tmp_path):
        result = fdk_result({"a_1.jpg": [FDK_ROW]})
        p1, p2 = tmp_path / "1.csv", tmp_path / "2.csv"
        write_results_csv(result, "fdk", p1)
        write_results_csv(result, "fdk", p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_all_schemas_have_image_and_plot_id(self):
        for pid, tables in CSV_SCHEMAS.items():
            assert tables["records"][:2] == ("image", "plot_id")
            if tables["summary"]:
                assert tables["summary"][:2] == ("image", "plot_id")


class TestFormatCell:
    def test_values(self):
        assert format_cell(None) == ""
        assert format_cell(True) == "true"
        assert format_cell(False) == "false"
        assert format_cell(12) == "12"
        assert format_cell(Fraction(7, 30)) == "0.233333"
        assert format_cell(0.123456789) == "0.123457"
        assert format_cell(10.0) == "10"
        assert format_cell("healthy") == "healthy"


class TestOverlay:
    def test_dims_preserved(self):
        img = Image.new("RGB", (320, 240), (255, 255, 255))
        out = render_overlay(img, det_set([(100, 100, 60, 20, 0.4)]))
        assert out.size == (320, 240)
        assert out is not img

    def test_dimension_mismatch(self):
        img = Image.new("RGB", (100, 100))
        with pytest.raises(DimensionMismatch):
            render_overlay(img, det_set([(10, 10, 5, 5, 0)]))

    def test_deterministic_bytes(self):
        dets = det_set([(100, 100, 60, 20, 0.4), (200, 150, 50, 18, -0.2)], ["healthy", "damaged"])
        img = Image.new("RGB", (320, 240), (250, 250, 250))
        a = encode_png(render_overlay(img, dets))
        b = encode_png(render_overlay(img, dets))
        assert a == b

    def test_colors_assigned_by_sorted_category(self):
        dets = det_set([(10, 10, 5, 5, 0), (20, 20, 5, 5, 0)], ["healthy", "damaged"])
        colors = category_colors(dets)
        assert list(colors) == ["damaged", "healthy"]
        assert colors["damaged"] != colors["healthy"]

    def test_box_past_edge_clipped_not_fatal(self):
        img = Image.new("RGB", (320, 240), (255, 255, 255))
        out = render_overlay(img, det_set([(310, 120, 80, 30, 0.2)]))
        assert out.size == (320, 240)

    def test_something_was_drawn(self):
        img = Image.new("RGB", (320, 240), (255, 255, 255))
        out = render_overlay(img, det_set([(160, 120, 100, 40, 0.3)]))
        assert out.tobytes() != img.convert("RGB").tobytes()


class TestCrops:
    def test_names_and_padding(self, tmp_path):
        img = Image.new("RGB", (320, 240), (255, 255, 255))
        dets = det_set([(160, 120, 100, 40, 0.0)], image="img01.jpg")
        paths = export_crops(img, dets, tmp_path, padding=0.1)
        assert [p.name for p in paths] == ["img01_det0.png"]
        with Image.open(paths[0]) as crop:
            # 100 x 40 box padded 10 % per side -> 120 x 48 window
            assert crop.size == (120, 48)

    def test_corner_box_clamped(self, tmp_path):
        img = Image.new("RGB", (320, 240), (255, 255, 255))
        dets = det_set([(5, 5, 40, 40, 0.0)])
        paths = export_crops(img, dets, tmp_path)
        assert len(paths) == 1
        with Image.open(paths[0]) as crop:
            assert crop.size[0] <= 30 and crop.size[1] <= 30

    def test_zero_detections(self, tmp_path):
        img = Image.new("RGB", (320, 240))
        assert export_crops(img, det_set([]), tmp_path) == []
        assert list(tmp_path.iterdir()) == []
