import numpy as np
import pytest
from PIL import Image

from extractor import ExtractionSpec, extract_layer_activations
from extractor.cli import app

# interop is the whole point: the files must load through the matching
# pipeline's own reader
from vpr.features import load_feature_set


@pytest.fixture(scope="module")
def image_dir(tmp_path_factory):
    """Four distinct images created out of filename order on purpose.

    Each image's pixels come from a generator seeded with its frame
    index, so every frame is identifiable by content and order mixups
    are detectable.
    """
    d = tmp_path_factory.mktemp("imgs")
    names = ["c_frame.png", "a_frame.png", "d_frame.png", "b_frame.png"]
    order = sorted(range(len(names)), key=lambda i: names[i])
    for idx, name in enumerate(names):
        frame_index = order.index(idx)
        rng = np.random.default_rng(frame_index)
        arr = rng.integers(0, 256, size=(96, 128, 3), dtype=np.uint8)
        Image.fromarray(arr, mode="RGB").save(d / name)
    return d


def spec_for(image_dir, out, **kwargs):
    defaults = dict(weights="random", seed=0, batch_size=4)
    defaults.update(kwargs)
    return ExtractionSpec(images_dir=str(image_dir), out_path=str(out), **defaults)


class TestOutputFormat:
    def test_loads_through_pipeline_reader(self, image_dir, tmp_path):
        out = tmp_path / "l14.feat"
        count, dim = extract_layer_activations(spec_for(image_dir, out, layer=14))
        assert (count, dim) == (4, 9216)
        fs = load_feature_set(out)
        assert fs.count == 4
        assert fs.dim == 9216
        assert fs.layer_tag == 14
        assert fs.dtype == "float32"
        assert np.all(np.isfinite(fs.frames))

    @pytest.mark.parametrize("layer,dim", [(13, 12544), (16, 4096), (21, 1000)])
    def test_layer_selects_dimension(self, image_dir, tmp_path, layer, dim):
        out = tmp_path / f"l{layer}.feat"
        assert extract_layer_activations(spec_for(image_dir, out, layer=layer)) == (4, dim)
        assert load_feature_set(out).dim == dim

    def test_quantized_output(self, image_dir, tmp_path):
        out = tmp_path / "q.feat"
        extract_layer_activations(spec_for(image_dir, out, layer=14, quantize_u16=True))
        fs = load_feature_set(out)
        assert fs.dtype == "uint16"
        assert fs.frames.min() >= 0.0 and fs.frames.max() == 65535.0
        assert fs.count == 4 and fs.dim == 9216


class TestDeterminism:
    def test_reruns_bit_identical(self, image_dir, tmp_path):
        a, b = tmp_path / "a.feat", tmp_path / "b.feat"
        extract_layer_activations(spec_for(image_dir, a, layer=14, seed=3))
        extract_layer_activations(spec_for(image_dir, b, layer=14, seed=3))
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_random_weights(self, image_dir, tmp_path):
        a, b = tmp_path / "a.feat", tmp_path / "b.feat"
        extract_layer_activations(spec_for(image_dir, a, layer=14, seed=0))
        extract_layer_activations(spec_for(image_dir, b, layer=14, seed=1))
        assert a.read_bytes() != b.read_bytes()


class TestFrameOrder:
    def test_rows_follow_filename_order(self, image_dir, tmp_path):
        out = tmp_path / "all.feat"
        # batch of one on both sides so each row is computed identically
        extract_layer_activations(spec_for(image_dir, out, layer=14, batch_size=1))
        combined = load_feature_set(out)
        from extractor.activations import list_images

        for row, path in enumerate(list_images(image_dir)):
            solo_dir = tmp_path / f"solo{row}"
            solo_dir.mkdir()
            data = (image_dir / path.split("/")[-1]).read_bytes()
            (solo_dir / "only.png").write_bytes(data)
            solo_out = tmp_path / f"solo{row}.feat"
            extract_layer_activations(spec_for(solo_dir, solo_out, layer=14, batch_size=1))
            solo = load_feature_set(solo_out)
            assert np.array_equal(combined.frames[row], solo.frames[0]), (
                f"row {row} does not match frame {path}"
            )


class TestErrors:
    def test_layer_out_of_range(self, image_dir, tmp_path):
        for layer in (0, 22, -3):
            with pytest.raises(ValueError):
                spec_for(image_dir, tmp_path / "x.feat", layer=layer)

    def test_unreadable_image_fails_fast_by_default(self, image_dir, tmp_path):
        broken_dir = tmp_path / "broken"
        broken_dir.mkdir()
        (broken_dir / "ok.png").write_bytes((image_dir / "a_frame.png").read_bytes())
        (broken_dir / "bad.png").write_bytes(b"not an image at all")
        with pytest.raises(ValueError, match="bad.png"):
            extract_layer_activations(spec_for(broken_dir, tmp_path / "x.feat", layer=14))

    def test_skip_unreadable_warns_and_continues(self, image_dir, tmp_path, capsys):
        broken_dir = tmp_path / "broken"
        broken_dir.mkdir()
        (broken_dir / "ok.png").write_bytes((image_dir / "a_frame.png").read_bytes())
        (broken_dir / "bad.png").write_bytes(b"not an image at all")
        count, _ = extract_layer_activations(
            spec_for(broken_dir, tmp_path / "x.feat", layer=14, skip_unreadable=True)
        )
        assert count == 1
        assert "bad.png" in capsys.readouterr().err

    def test_empty_directory_is_an_error(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(ValueError):
            extract_layer_activations(spec_for(empty, tmp_path / "x.feat", layer=14))

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            extract_layer_activations(
                spec_for(tmp_path / "nowhere", tmp_path / "x.feat", layer=14)
            )


class TestCli:
    def test_end_to_end(self, image_dir, tmp_path, capsys):
        out = tmp_path / "cli.feat"
        code = app(["--images", str(image_dir), "--layer", "14", "--out", str(out),
                    "--weights", "random", "--seed", "0"])
        assert code == 0
        assert "4 frames of dim 9216" in capsys.readouterr().out
        assert load_feature_set(out).count == 4

    def test_bad_layer_exits_two(self, image_dir, tmp_path, capsys):
        code = app(["--images", str(image_dir), "--layer", "99",
                    "--out", str(tmp_path / "x.feat"), "--weights", "random"])
        assert code == 2
        capsys.readouterr()

    def test_unknown_flag_exits_one(self, capsys):
        assert app(["--bogus"]) == 1
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        assert app(["--help"]) == 0
        capsys.readouterr()

    def test_missing_weights_file_exits_two(self, image_dir, tmp_path, capsys):
        code = app(["--images", str(image_dir), "--layer", "14",
                    "--out", str(tmp_path / "x.feat"),
                    "--weights", str(tmp_path / "no_such.pt")])
        assert code == 2
        capsys.readouterr()
