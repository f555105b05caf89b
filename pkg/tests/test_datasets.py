"""Tests for corpora, augmentation, datasets and image files."""

import numpy as np
import pytest

from automap.artifacts import read_container
from automap.datasets import (
    Corpus,
    augment_corpus_tile_crop,
    augment_rot90,
    augment_tile_crop,
    box_downsample,
    build_dataset,
    centre_crop_square,
    load_corpus,
    load_corpus_file,
    load_dataset,
    noise_corpus,
    preprocess_corpus,
    save_corpus,
    save_dataset,
    synth_corpus,
)
from automap.encoders import make_encoding
from automap.errors import (
    ArtifactMismatchError,
    ConfigurationError,
    DimensionError,
    IngestionError,
)
from automap.imageio import encode_pgm, read_pgm, write_image_with_sidecar


def _write_raw_pgm(path, pixels):
    height, width = pixels.shape
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode() + pixels.astype(np.uint8).tobytes())


class TestSynthCorpus:
    """Test procedural corpora."""

    def test_deterministic(self):
        """Test the same seed gives bit-identical corpora."""
        first = synth_corpus(8, 16, seed=1)
        second = synth_corpus(8, 16, seed=1)
        assert np.array_equal(first.images, second.images)
        assert first.provenance == "synth:n=16:seed=1"

    def test_seeds_differ(self):
        """Test different seeds give different corpora."""
        assert not np.array_equal(synth_corpus(2, 8, 1).images, synth_corpus(2, 8, 2).images)

    def test_normalization(self, small_corpus):
        """Test zero mean per image and unit max-abs overall."""
        np.testing.assert_allclose(small_corpus.images.mean(axis=(1, 2)), 0, atol=1e-9)
        assert np.abs(small_corpus.images).max() == pytest.approx(1.0, abs=1e-12)

    def test_structured(self, small_corpus):
        """Test every image has at least two intensity levels."""
        for img in small_corpus.images:
            assert np.unique(img).size >= 2

    def test_bad_count(self):
        """Test a non-positive count is rejected."""
        with pytest.raises(ConfigurationError):
            synth_corpus(0, 8, seed=1)

    def test_noise_corpus(self):
        """Test the noise corpus obeys the same normalization."""
        corpus = noise_corpus(4, 8, seed=5)
        assert len(corpus) == 4
        assert corpus.provenance.startswith("noise:")
        assert np.abs(corpus.images).max() == pytest.approx(1.0)

    def test_constant_images_stay_finite(self):
        """Test an all-constant corpus preprocesses to zeros with scale 1."""
        corpus = preprocess_corpus(np.full((2, 8, 8), 3.0), "const")
        assert not corpus.images.any()
        assert corpus.normalization_scale == 1.0

    def test_corpus_rejects_non_square(self):
        """Test Corpus checks its image shape."""
        with pytest.raises(DimensionError):
            Corpus(np.zeros((2, 8, 6)), "bad", 1.0)


class TestLoadCorpus:
    """Test PGM ingestion."""

    def test_constant_pgm_is_zero(self, tmp_path):
        """Test a constant image becomes all zeros after mean subtraction."""
        _write_raw_pgm(tmp_path / "a.pgm", np.full((32, 32), 120))
        corpus = load_corpus(tmp_path, 8)
        assert corpus.n == 8
        assert not corpus.images.any()

    def test_bright_pixel_lands_in_centre_cell(self):
        """Test a 2x box filter maps the centre pixel to its cell."""
        img = np.zeros((16, 16))
        img[8, 8] = 1.0
        small = box_downsample(img, 8)
        assert np.unravel_index(np.argmax(small), small.shape) == (4, 4)
        assert small[4, 4] == pytest.approx(0.25)

    def test_centre_crop(self):
        """Test the crop keeps the centred min(height, width) square."""
        img = np.arange(6 * 10).reshape(6, 10)
        crop = centre_crop_square(img)
        assert crop.shape == (6, 6)
        assert crop[0, 0] == img[0, 2]

    def test_sorted_by_name(self, tmp_path):
        """Test files are read in sorted name order."""
        _write_raw_pgm(tmp_path / "b.pgm", np.eye(16) * 200)
        _write_raw_pgm(tmp_path / "a.pgm", np.tri(16) * 200)
        corpus = load_corpus(tmp_path, 8)
        assert len(corpus) == 2
        assert corpus.images[0][7, 0] != corpus.images[0][0, 7]

    def test_empty_directory(self, tmp_path):
        """Test an empty directory is an ingestion error."""
        with pytest.raises(IngestionError, match="No PGM"):
            load_corpus(tmp_path, 8)

    def test_missing_directory(self, tmp_path):
        """Test a missing directory is an ingestion error."""
        with pytest.raises(IngestionError):
            load_corpus(tmp_path / "nope", 8)

    def test_too_small(self, tmp_path):
        """Test images smaller than 2n are rejected."""
        _write_raw_pgm(tmp_path / "a.pgm", np.zeros((10, 10)))
        with pytest.raises(IngestionError, match="needs side"):
            load_corpus(tmp_path, 8)

    def test_not_pgm(self, tmp_path):
        """Test a non-P5 file is rejected."""
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
        with pytest.raises(IngestionError, match="P5"):
            read_pgm(path)

    def test_truncated(self, tmp_path):
        """Test a short pixel block is rejected."""
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(5))
        with pytest.raises(IngestionError, match="truncated"):
            read_pgm(path)

    def test_sixteen_bit_rejected(self, tmp_path):
        """Test a 16-bit P5 file is not accepted as 8-bit."""
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n2 1\n65535\n" + bytes([1, 0, 2, 0]))
        with pytest.raises(IngestionError, match="8-bit|malformed"):
            read_pgm(path)

    def test_encoded_header(self):
        """Test written files carry a standard P5 header and one byte per pixel."""
        data = encode_pgm(np.arange(6.0).reshape(2, 3))
        assert data.startswith(b"P5")
        assert data[-6:] == bytes([0, 51, 102, 153, 204, 255])

    def test_header_comment(self, tmp_path):
        """Test '#' comments in the header are skipped."""
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n# made by hand\n2 1\n255\n" + bytes([7, 9]))
        np.testing.assert_array_equal(read_pgm(path), [[7.0, 9.0]])

    def test_write_read(self, tmp_path, rng):
        """Test written PGMs read back min-max scaled with a float sidecar."""
        img = rng.standard_normal((8, 8))
        pgm, sidecar = write_image_with_sidecar(tmp_path / "x.pgm", img)
        pixels = read_pgm(pgm)
        assert pixels.min() == 0 and pixels.max() == 255
        np.testing.assert_array_equal(np.fromfile(sidecar, dtype="<f8").reshape(8, 8), img)

    def test_constant_pgm_bytes(self):
        """Test a constant image encodes as zeros."""
        data = encode_pgm(np.ones((4, 4)))
        assert data.endswith(bytes(16))


class TestAugment:
    """Test rotation and mirror-tile augmentation."""

    def test_rot90_cardinality(self, small_corpus):
        """Test each image yields four rotations."""
        assert len(augment_rot90(small_corpus)) == 4 * len(small_corpus)

    def test_rot90_inverse(self, small_corpus):
        """Test rotating the 90 degree copy back recovers the original."""
        first = Corpus(small_corpus.images[:1], "one", 1.0)
        rotated = augment_rot90(first)
        np.testing.assert_array_equal(np.rot90(rotated.images[1], -1), first.images[0])

    def test_rot90_symmetric(self):
        """Test a rotationally symmetric image gives identical copies."""
        img = np.zeros((8, 8))
        img[2:6, 2:6] = 1.0
        rotated = augment_rot90(Corpus(img[None], "sym", 1.0))
        for copy in rotated.images:
            np.testing.assert_array_equal(copy, img)

    def test_tile_identity(self, rng):
        """Test offset (0, 0) is the identity."""
        img = rng.standard_normal((8, 8))
        np.testing.assert_array_equal(augment_tile_crop(img, rng, offset=(0, 0)), img)

    def test_tile_far_corner(self, rng):
        """Test offset (n, n) is the doubly flipped quadrant."""
        img = rng.standard_normal((8, 8))
        np.testing.assert_array_equal(
            augment_tile_crop(img, rng, offset=(8, 8)), np.flipud(np.fliplr(img))
        )

    def test_tile_values_from_input(self, rng):
        """Test random crops only contain input values."""
        img = rng.standard_normal((8, 8))
        values = set(img.ravel().tolist())
        for _ in range(20):
            crop = augment_tile_crop(img, rng)
            assert set(crop.ravel().tolist()) <= values

    def test_tile_bad_offset(self, rng):
        """Test offsets outside [0, n] are rejected."""
        with pytest.raises(ConfigurationError):
            augment_tile_crop(np.zeros((8, 8)), rng, offset=(9, 0))

    def test_corpus_tile_deterministic(self, small_corpus):
        """Test corpus tile crops depend only on the seed."""
        first = augment_corpus_tile_crop(small_corpus, 4)
        second = augment_corpus_tile_crop(small_corpus, 4)
        assert np.array_equal(first.images, second.images)


class TestBuildDataset:
    """Test encoding corpora into training pairs."""

    def test_cartesian_magnitude(self, small_corpus):
        """Test one pair per image with 2n^2 inputs."""
        dataset = build_dataset(small_corpus, make_encoding("cartesian", 8))
        assert len(dataset) == len(small_corpus)
        assert dataset.d_in == 128
        assert np.abs(dataset.inputs).max() == pytest.approx(1.0)
        np.testing.assert_allclose(dataset.targets, np.abs(small_corpus.images).reshape(8, -1))

    def test_radon_real_layout(self, small_corpus):
        """Test Radon inputs have n_angles * n_rays entries."""
        op = make_encoding("radon", 8, n_angles=10, n_rays=15)
        assert build_dataset(small_corpus, op).d_in == 150

    def test_phase_targets(self, small_corpus):
        """Test real and imaginary targets recombine to the magnitude."""
        op = make_encoding("cartesian", 8)
        real = build_dataset(small_corpus, op, "real", phase_seed=3)
        imag = build_dataset(small_corpus, op, "imag", phase_seed=3)
        np.testing.assert_allclose(
            real.targets**2 + imag.targets**2,
            small_corpus.images.reshape(8, -1) ** 2,
            atol=1e-10,
        )
        np.testing.assert_array_equal(real.inputs, imag.inputs)

    def test_unknown_target(self, small_corpus):
        """Test an unknown target mode is rejected."""
        with pytest.raises(ConfigurationError):
            build_dataset(small_corpus, make_encoding("cartesian", 8), "angle")

    def test_phase_target_needs_seed(self, small_corpus):
        """Test non-magnitude targets need phase modulation."""
        with pytest.raises(ConfigurationError, match="phase_seed"):
            build_dataset(small_corpus, make_encoding("cartesian", 8), "real")

    def test_radon_rejects_phase(self, small_corpus):
        """Test phase modulation is refused for the real-valued Radon encoding."""
        with pytest.raises(ConfigurationError, match="radon"):
            build_dataset(small_corpus, make_encoding("radon", 8), phase_seed=1)

    def test_side_mismatch(self, small_corpus):
        """Test corpus and encoding sides must agree."""
        with pytest.raises(DimensionError):
            build_dataset(small_corpus, make_encoding("cartesian", 16))

    def test_misaligned_needs_rng(self, small_corpus):
        """Test misaligned datasets need a shift generator."""
        with pytest.raises(ConfigurationError):
            build_dataset(small_corpus, make_encoding("misaligned", 8))


class TestContainers:
    """Test corpus and dataset files."""

    def test_corpus_round_trip(self, tmp_path, small_corpus):
        """Test a saved corpus loads back identically."""
        path = save_corpus(small_corpus, tmp_path / "c.amcp")
        loaded = load_corpus_file(path)
        assert np.array_equal(loaded.images, small_corpus.images)
        assert loaded.provenance == small_corpus.provenance

    def test_corpus_files_identical(self, tmp_path):
        """Test saving the same corpus twice gives identical bytes."""
        a = save_corpus(synth_corpus(4, 8, 1), tmp_path / "a.amcp")
        b = save_corpus(synth_corpus(4, 8, 1), tmp_path / "b.amcp")
        assert a.read_bytes() == b.read_bytes()

    def test_dataset_round_trip(self, tmp_path):
        """Test a saved dataset keeps its arrays and encoding."""
        op = make_encoding("poisson_disc", 16, fraction=0.4, seed=2)
        dataset = build_dataset(synth_corpus(4, 16, seed=1), op)
        loaded = load_dataset(save_dataset(dataset, tmp_path / "d.amds"))
        assert np.array_equal(loaded.inputs, dataset.inputs)
        assert np.array_equal(loaded.targets, dataset.targets)
        assert loaded.encoding == op
        assert loaded.sensor_scale == dataset.sensor_scale

    def test_wrong_magic(self, tmp_path, small_corpus):
        """Test reading a corpus as a dataset fails."""
        path = save_corpus(small_corpus, tmp_path / "c.amcp")
        with pytest.raises(ArtifactMismatchError):
            load_dataset(path)

    def test_metadata_is_json(self, tmp_path, small_corpus):
        """Test the container header carries the corpus metadata."""
        path = save_corpus(small_corpus, tmp_path / "c.amcp")
        _, meta, _ = read_container(path, b"AMCP", 1)
        assert meta["count"] == 8 and meta["n"] == 8
