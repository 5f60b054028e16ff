import numpy as np
import pytest

from services.csv_service import loss_history_frame, read_frame, write_frame
from services.exceptions import ContractViolationError, NotFoundError
from services.file_service import overlay, read_pfm, read_pnm, to_uint8, write_pfm, write_pgm, write_ppm
from services.optimizer_service import LossRecord


def test_pfm_header_and_row_order(tmp_path):
    grid = np.arange(12, dtype=np.float64).reshape(3, 4)
    path = tmp_path / "grid.pfm"
    write_pfm(path, grid)
    data = path.read_bytes()
    header = b"Pf\n4 3\n-1.0\n"
    assert data.startswith(header)
    first_row = np.frombuffer(data, dtype="<f4", count=4, offset=len(header))
    assert np.array_equal(first_row, grid[-1])
    assert np.array_equal(read_pfm(path), grid)


def test_pfm_keeps_float32_precision(tmp_path):
    grid = np.random.default_rng(0).uniform(0.5, 20.0, (5, 6))
    write_pfm(tmp_path / "d.pfm", grid)
    np.testing.assert_allclose(read_pfm(tmp_path / "d.pfm"), grid, rtol=1e-6)


def test_pfm_writer_rejects_vector_grids(tmp_path):
    with pytest.raises(ContractViolationError):
        write_pfm(tmp_path / "bad.pfm", np.zeros((2, 2, 3)))


def test_missing_files_raise_not_found(tmp_path):
    with pytest.raises(NotFoundError):
        read_pfm(tmp_path / "absent.pfm")
    with pytest.raises(NotFoundError):
        read_pnm(tmp_path / "absent.pgm")
    with pytest.raises(NotFoundError):
        read_frame(tmp_path / "absent.csv")


def test_pgm_intensity_and_label_encodings(tmp_path):
    write_pgm(tmp_path / "i.pgm", np.array([[0.0, 0.5, 1.0, 2.0]]))
    assert np.array_equal(read_pnm(tmp_path / "i.pgm"), [[0, 128, 255, 255]])

    write_pgm(tmp_path / "m.pgm", np.array([[0, 1], [1, 0]], dtype=np.uint8), scale=255)
    assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n2 2\n255\n")
    assert np.array_equal(read_pnm(tmp_path / "m.pgm"), [[0, 255], [255, 0]])


def test_ppm_round_trip_of_overlay(tmp_path):
    image = np.zeros((2, 3))
    band = np.array([[1, 0, 0], [0, 0, 0]])
    fg = np.array([[0, 0, 1], [0, 0, 0]])
    rgb = overlay(image, band, fg)
    write_ppm(tmp_path / "o.ppm", rgb)
    raster = read_pnm(tmp_path / "o.ppm")
    assert raster.shape == (2, 3, 3)
    assert tuple(raster[0, 0]) == (102, 0, 0)
    assert tuple(raster[0, 2]) == (0, 102, 0)
    assert tuple(raster[1, 1]) == (0, 0, 0)


def test_to_uint8_rounds_and_clips():
    assert np.array_equal(to_uint8(np.array([-1.0, 0.002, 0.998, 3.0])), [0, 1, 254, 255])


def test_csv_columns_and_float_format(tmp_path):
    history = [LossRecord(0, 0.1, 0.05, 1.0 / 3.0, 0.0), LossRecord(1, 0.09, 0.04, 0.25, 0.0)]
    path = write_frame(loss_history_frame(history), tmp_path / "loss.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "step,total,pe,smooth,triplet"
    assert lines[1] == "0,0.1,0.05,0.333333333333,0"
    df = read_frame(path, columns=["step", "total"])
    assert list(df["step"]) == [0, 1]
    with pytest.raises(ContractViolationError):
        read_frame(path, columns=["missing"])


def test_output_paths_stay_inside_the_run_directory(tmp_path):
    from services.exceptions import FileAccessError
    from services.validators import resolve_output_path

    assert resolve_output_path(tmp_path, "left.pgm") == (tmp_path / "left.pgm").resolve()
    with pytest.raises(FileAccessError):
        resolve_output_path(tmp_path, "../escape.pgm")
