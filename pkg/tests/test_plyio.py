import struct

import numpy as np
import pytest

from conftest import random_rotation
from eigensplat.model import GaussianSet, matrix_to_quat
from eigensplat.plyio import (
    PlyFormatError,
    PlyHeaderError,
    PlyTruncatedError,
    read_ply,
    write_ply,
)


def random_set(n, seed=0, units="mm"):
    rng = np.random.default_rng(seed)
    q = np.array([matrix_to_quat(random_rotation(rng)) for _ in range(n)])
    gs = GaussianSet(rng.standard_normal((n, 3)), rng.uniform(0.01, 1, (n, 3)), q, rng.uniform(size=n), units=units)
    # values representable in float32 make the comparison exact
    for name in ("centers", "scales", "rotations", "opacities"):
        setattr(gs, name, getattr(gs, name).astype(np.float32).astype(np.float64))
    return gs


def same_fields(a, b):
    return all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("centers", "scales", "rotations", "opacities"))


def test_binary_round_trip_bit_exact(tmp_path):
    gs = random_set(100)
    write_ply(gs, tmp_path / "a.ply")
    doc = read_ply(tmp_path / "a.ply")
    assert doc.format == "binary_little_endian"
    assert same_fields(doc.gaussians, gs)
    assert doc.gaussians.units == "mm"
    assert doc.eigenentropy is None


def test_float64_input_round_trip_after_one_quantisation(tmp_path):
    rng = np.random.default_rng(1)
    gs = GaussianSet.from_points(rng.standard_normal((20, 3)), scale=rng.uniform(0.1, 1, 20))
    write_ply(gs, tmp_path / "a.ply")
    once = read_ply(tmp_path / "a.ply").gaussians
    write_ply(once, tmp_path / "b.ply")
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_ascii_round_trip(tmp_path):
    gs = random_set(30, seed=2)
    write_ply(gs, tmp_path / "a.ply", format="ascii")
    back = read_ply(tmp_path / "a.ply").gaussians
    for f in ("centers", "scales", "rotations", "opacities"):
        assert np.allclose(getattr(back, f), getattr(gs, f), rtol=1e-6, atol=0)


def test_property_order_and_entropy_channel(tmp_path):
    gs = random_set(5)
    write_ply(gs, tmp_path / "plain.ply")
    header = (tmp_path / "plain.ply").read_bytes().split(b"end_header")[0].decode()
    props = [ln.split()[-1] for ln in header.splitlines() if ln.startswith("property")]
    assert props == ["x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity"]
    E = np.linspace(0, 1.0986, 5)
    for fmt in ("binary_little_endian", "ascii"):
        write_ply(gs, tmp_path / "e.ply", fmt, eigenentropy=E)
        doc = read_ply(tmp_path / "e.ply")
        assert doc.properties[-1] == "eigenentropy"
        assert np.allclose(doc.eigenentropy, E, rtol=1e-7)
    with pytest.raises(ValueError):
        write_ply(gs, tmp_path / "x.ply", eigenentropy=E[:3])


def test_writes_are_deterministic(tmp_path):
    gs = random_set(50)
    for fmt in ("binary_little_endian", "ascii"):
        write_ply(gs, tmp_path / "1.ply", fmt)
        write_ply(gs, tmp_path / "2.ply", fmt)
        assert (tmp_path / "1.ply").read_bytes() == (tmp_path / "2.ply").read_bytes()


def test_ascii_xyz_only_defaults(tmp_path):
    p = tmp_path / "xyz.ply"
    p.write_text(
        "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n4 5 6\n"
    )
    gs = read_ply(p).gaussians
    assert gs.centers.tolist() == [[1, 2, 3], [4, 5, 6]]
    assert np.all(gs.scales == 1) and np.all(gs.opacities == 1)
    assert gs.rotations.tolist() == [[1, 0, 0, 0]] * 2


def test_extra_elements_and_properties_skipped(tmp_path):
    p = tmp_path / "x.ply"
    head = (
        b"ply\nformat binary_little_endian 1.0\nelement camera 1\nproperty double f\n"
        b"element vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\n"
        b"element face 0\nproperty list uchar int vertex_indices\nend_header\n"
    )
    body = struct.pack("<d", 5.0) + struct.pack("<fffB", 1, 2, 3, 9) + struct.pack("<fffB", 4, 5, 6, 9)
    p.write_bytes(head + body)
    assert read_ply(p).gaussians.centers.tolist() == [[1, 2, 3], [4, 5, 6]]


def test_truncated_body(tmp_path):
    gs = random_set(10)
    write_ply(gs, tmp_path / "a.ply")
    data = (tmp_path / "a.ply").read_bytes()
    (tmp_path / "t.ply").write_bytes(data[:-7])
    with pytest.raises(PlyTruncatedError, match="unexpected end of vertex data"):
        read_ply(tmp_path / "t.ply")
    write_ply(gs, tmp_path / "b.ply", "ascii")
    lines = (tmp_path / "b.ply").read_text().splitlines()
    (tmp_path / "bt.ply").write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(PlyTruncatedError):
        read_ply(tmp_path / "bt.ply")


@pytest.mark.parametrize(
    "text",
    [
        "plx\nformat ascii 1.0\nend_header\n",
        "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n",
        "ply\nformat ascii 2.0\nelement vertex 0\nproperty float x\nend_header\n",
        "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n",
        "ply\nformat ascii 1.0\nelement vertex 1\nproperty quad x\nend_header\n",
    ],
)
def test_malformed_headers(tmp_path, text):
    p = tmp_path / "m.ply"
    p.write_text(text)
    with pytest.raises(PlyHeaderError) as exc:
        read_ply(p)
    assert exc.value.code == "malformed_header"


def test_big_endian_rejected(tmp_path):
    p = tmp_path / "be.ply"
    p.write_bytes(b"ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\n"
                  b"property float y\nproperty float z\nend_header\n" + struct.pack(">fff", 1, 2, 3))
    with pytest.raises(PlyFormatError) as exc:
        read_ply(p)
    assert exc.value.code == "unsupported_format"
    codes = {PlyHeaderError.code, PlyTruncatedError.code, PlyFormatError.code}
    assert len(codes) == 3
