"""Environment-variable contracts: worker caps and backend forcing."""

import subprocess
import sys

import numpy as np
import pytest

from pose3d.cli import DataConfig, _preprocess_clips, _worker_count
from pose3d.errors import ConfigError
from pose3d.synthetic import SyntheticSceneSpec, make_clip


@pytest.fixture
def clips():
    spec = SyntheticSceneSpec(seed=3, image_size=32)
    return [make_clip(spec, i, 24) for i in range(4)]


class TestThreadCap:
    def test_worker_count_capped_by_env(self, monkeypatch):
        monkeypatch.setenv("POSE3D_THREADS", "2")
        assert _worker_count(16) <= 2

    def test_bad_value_rejected(self, monkeypatch):
        monkeypatch.setenv("POSE3D_THREADS", "many")
        with pytest.raises(ConfigError):
            _worker_count(4)

    def test_parallel_preprocessing_matches_serial(self, clips, monkeypatch):
        data = DataConfig(max_windows_per_clip=2)
        monkeypatch.setenv("POSE3D_THREADS", "1")
        serial, _ = _preprocess_clips(clips, data, seed=9, resize_to=12,
                                      dtype=np.float64)
        monkeypatch.setenv("POSE3D_THREADS", "4")
        parallel, _ = _preprocess_clips(clips, data, seed=9, resize_to=12,
                                        dtype=np.float64)
        assert len(serial) == len(parallel) > 0
        for a, b in zip(serial, parallel):
            assert a.clip_id == b.clip_id
            assert a.frame_indices == b.frame_indices
            assert a.video.numpy().tobytes() == b.video.numpy().tobytes()
            assert a.target.numpy().tobytes() == b.target.numpy().tobytes()


class TestBackendEnv:
    def _import_with_backend(self, value):
        return subprocess.run(
            [sys.executable, "-c",
             "from pose3d import backend; print(backend.ACTIVE_BACKEND)"],
            capture_output=True, text=True, env={"POSE3D_BACKEND": value, "PATH": ""},
        )

    def test_numpy_backend_forced(self):
        proc = self._import_with_backend("numpy")
        assert proc.returncode == 0
        assert proc.stdout.strip() == "numpy"

    def test_invalid_backend_rejected(self):
        proc = self._import_with_backend("cuda")
        assert proc.returncode != 0
        assert "POSE3D_BACKEND" in proc.stderr
