import pytest

from cbctus import phantom, segmentation, ussim


@pytest.fixture(scope="session")
def scene():
    return phantom.build_default_phantom()


@pytest.fixture(scope="session")
def probe():
    return ussim.ProbeModel()


@pytest.fixture(scope="session")
def default_volume(scene):
    return phantom.voxelize(scene)


@pytest.fixture(scope="session")
def coarse_volume(scene):
    return phantom.voxelize(scene, dims=(64, 64, 64), spacing=2.0)


@pytest.fixture(scope="session")
def sweep_frames(scene, probe):
    """Full 30-degree fan sweep at 1-degree steps: (poses, frames)."""
    poses = ussim.generate_fan_sweep(ussim.default_fan_sweep_spec())
    frames = [ussim.render_frame(scene, p, probe) for p in poses]
    return poses, frames


@pytest.fixture(scope="session")
def sweep_segmentations(sweep_frames, probe):
    _, frames = sweep_frames
    return [segmentation.segment_frame(f, probe) for f in frames]
