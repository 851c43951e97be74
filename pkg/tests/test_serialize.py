import struct

import numpy as np
import pytest

from fabhe import ckks
from fabhe import serialize as ser
from fabhe.params import SchemeParams


@pytest.fixture(scope="module")
def setup():
    p = SchemeParams(N=2 ** 8, logq=30, L=3, dnum=2, delta=2.0 ** 25)
    ks = ckks.keygen(p, 3, rotations=(1,))
    return p, ks


def objects(ks):
    ct = ckks.encrypt_values(np.arange(8) / 8, ks, rng=np.random.default_rng(0))
    return {"ciphertext": ct, "switching_key": ks.relin, "public_key": ks.pk, "secret_key": ks.sk}


@pytest.mark.parametrize("kind", list(ser.KINDS))
def test_roundtrip_is_byte_identical(setup, kind):
    p, ks = setup
    obj = objects(ks)[kind]
    blob = ser.dumps(obj, p)
    back, p2 = ser.loads(blob)
    assert ser.dumps(back, p2) == blob
    assert ser.read_header(blob)[0] == kind
    assert p2.describe() == p.describe()


def test_ciphertext_still_decrypts(setup):
    p, ks = setup
    ct = objects(ks)["ciphertext"]
    back, _ = ser.loads(ser.dumps(ct, p), p)
    assert np.array_equal(ckks.decrypt_values(back, ks.sk), ckks.decrypt_values(ct, ks.sk))


def test_compressed_key_is_half(setup):
    p, _ = setup
    full = ckks.keygen(p, 3, compressed=False)
    small = ckks.keygen(p, 3, compressed=True)
    a, b = len(ser.dumps(full.relin, p)), len(ser.dumps(small.relin, p))
    assert b < a and abs(2 * b - a) < 1024
    back, _ = ser.loads(ser.dumps(small.relin, p))
    for x, y in zip(back.a, small.relin.a):
        assert np.array_equal(x.data, y.data)


def test_file_helpers(setup, tmp_path):
    p, ks = setup
    n = ser.save(tmp_path / "pk.fab", ks.pk, p)
    assert (tmp_path / "pk.fab").stat().st_size == n
    obj, _ = ser.load(tmp_path / "pk.fab", p)
    assert np.array_equal(obj.b.data, ks.pk.b.data)


def test_errors(setup):
    p, ks = setup
    blob = ser.dumps(ks.pk, p)
    with pytest.raises(ser.BadMagic):
        ser.loads(b"XXXX" + blob[4:])
    with pytest.raises(ser.BadMagic):
        ser.loads(b"FA")
    with pytest.raises(ser.BadVersion):
        ser.loads(blob[:4] + struct.pack("<I", 9) + blob[8:])
    with pytest.raises(ser.FormatError):
        ser.loads(blob[:8] + struct.pack("<I", 77) + blob[12:])
    with pytest.raises(ser.Truncated):
        ser.loads(blob[:-5])
    with pytest.raises(ser.FormatError):
        ser.loads(blob + b"\0")
    other = SchemeParams(N=2 ** 8, logq=30, L=4, dnum=2, delta=2.0 ** 25)
    with pytest.raises(ser.ParamsMismatch):
        ser.loads(blob, other)
    with pytest.raises(TypeError):
        ser.dumps(object(), p)


def test_errors_are_value_errors():
    assert issubclass(ser.Truncated, ValueError)
    assert len({ser.BadMagic, ser.BadVersion, ser.Truncated, ser.ParamsMismatch}) == 4
