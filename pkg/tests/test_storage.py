import struct

import numpy as np
import pytest

from storage import (
    BadMagicError,
    Checkpoint,
    ChecksumError,
    ManifestEntry,
    SAMPLE_HEADER,
    TruncatedSampleError,
    VersionMismatchError,
    decode_checkpoint,
    decode_sample,
    encode_checkpoint,
    encode_sample,
    load_checkpoint,
    read_manifest,
    read_sample,
    save_checkpoint,
    write_manifest,
    write_sample,
)


@pytest.fixture
def sample(tiny_samples):
    return tiny_samples[3]


@pytest.fixture
def checkpoint(rng):
    return Checkpoint(
        config_hash="0123456789abcdef",
        epoch=3,
        tensors={
            "param.weight": rng.normal(size=(4, 3)).astype(np.float32),
            "param.bias": np.zeros(3, dtype=np.float32),
            "optim.m.weight": rng.normal(size=(4, 3)),
            "scalar": np.array(7, dtype=np.int64),
        },
        meta={"optimizer_step": 12, "rng_state": {"state": 5}},
    )


class TestSampleContainer:
    def test_file_round_trip_is_bitwise(self, sample, tmp_path):
        path = str(tmp_path / "s.casp")
        write_sample(sample, path)
        loaded = read_sample(path)
        assert loaded.equals(sample)
        assert loaded.resolution == sample.resolution

    def test_header_layout(self, sample):
        blob = encode_sample(sample)
        magic, version, _, height, width, ti, to, fs, fd, res, row, col = SAMPLE_HEADER.unpack_from(blob)
        assert magic == b"CASP" and version == 1
        assert (height, width, ti, to, fs, fd) == (32, 32, 3, 12, 5, 9)
        assert (res, row, col) == (1.0, 26.0, 16.0)

    def test_bad_magic(self, sample):
        blob = bytearray(encode_sample(sample))
        blob[:4] = b"NOPE"
        with pytest.raises(BadMagicError):
            decode_sample(bytes(blob))

    def test_version_mismatch(self, sample):
        blob = bytearray(encode_sample(sample))
        struct.pack_into("<H", blob, 4, 2)
        with pytest.raises(VersionMismatchError):
            decode_sample(bytes(blob))

    def test_truncated(self, sample):
        blob = encode_sample(sample)
        with pytest.raises(TruncatedSampleError):
            decode_sample(blob[:-10])
        with pytest.raises(TruncatedSampleError):
            decode_sample(blob[:10])

    def test_corrupted_checksum(self, sample, tmp_path):
        blob = bytearray(encode_sample(sample))
        blob[-1] ^= 0xFF
        path = tmp_path / "bad.casp"
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumError):
            read_sample(str(path))

    def test_corrupted_payload(self, sample):
        blob = bytearray(encode_sample(sample))
        blob[SAMPLE_HEADER.size + 5] ^= 0x01
        with pytest.raises(ChecksumError):
            decode_sample(bytes(blob))

    def test_encoding_is_stable(self, sample):
        assert encode_sample(sample) == encode_sample(decode_sample(encode_sample(sample)))


class TestManifest:
    def test_relative_paths_resolve_against_manifest(self, tmp_path):
        entries = [
            ManifestEntry("train/00000_fork.casp", "fork", 11, "train"),
            ManifestEntry("eval/00000_curve.casp", "curve", 12, "eval"),
        ]
        path = tmp_path / "manifest.jsonl"
        write_manifest(entries, str(path))
        loaded = read_manifest(str(path))
        assert [e.kind for e in loaded] == ["fork", "curve"]
        assert loaded[0].path == str(tmp_path / "train" / "00000_fork.casp")

    def test_split_filter(self, tmp_path):
        entries = [ManifestEntry(f"s{i}.casp", "straight", i, "eval" if i % 3 == 0 else "train") for i in range(7)]
        path = str(tmp_path / "m.jsonl")
        write_manifest(entries, path)
        assert [e.seed for e in read_manifest(path, split="eval")] == [0, 3, 6]

    def test_sorted_keys(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_manifest([ManifestEntry("a.casp", "curve", 1)], str(path))
        assert path.read_text() == '{"kind": "curve", "path": "a.casp", "seed": 1, "split": "train"}\n'

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_manifest(str(tmp_path / "none.jsonl"))


class TestCheckpoint:
    def test_round_trip(self, checkpoint, tmp_path):
        path = str(tmp_path / "c.ckpt")
        save_checkpoint(checkpoint, path)
        loaded = load_checkpoint(path)
        assert loaded.config_hash == checkpoint.config_hash and loaded.epoch == 3
        assert loaded.meta == checkpoint.meta
        assert list(loaded.tensors) == list(checkpoint.tensors)
        for name, array in checkpoint.tensors.items():
            assert loaded.tensors[name].dtype == array.dtype
            np.testing.assert_array_equal(loaded.tensors[name], array)

    def test_save_load_save_is_idempotent(self, checkpoint, tmp_path):
        first, second = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(checkpoint, str(first))
        save_checkpoint(load_checkpoint(str(first)), str(second))
        assert first.read_bytes() == second.read_bytes()
        assert not (tmp_path / "a.ckpt.tmp").exists()

    def test_magic_and_checksum(self, checkpoint):
        blob = bytearray(encode_checkpoint(checkpoint))
        assert bytes(blob[:8]) == b"CASPCKPT"
        blob[-5] ^= 0x10
        with pytest.raises(ChecksumError):
            decode_checkpoint(bytes(blob))
        with pytest.raises(BadMagicError):
            decode_checkpoint(b"XXXX" + bytes(blob[4:]))

    def test_version_and_truncation(self, checkpoint):
        blob = bytearray(encode_checkpoint(checkpoint))
        with pytest.raises(TruncatedSampleError):
            decode_checkpoint(bytes(blob[:-20]))
        struct.pack_into("<H", blob, 8, 9)
        with pytest.raises(VersionMismatchError):
            decode_checkpoint(bytes(blob))
