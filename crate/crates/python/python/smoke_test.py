import hashlib

import dlacb


def main():
    assert dlacb.sha256_hex(b"abc") == hashlib.sha256(b"abc").hexdigest()

    scores = dlacb.forward([64, 32, 16, 4], 7, [1.0, 0.0] * 32)
    assert len(scores) == 4 and all(0.0 < s < 1.0 for s in scores)

    world = dlacb.World(3, 20, 10, 42)
    reports = world.scenarios()
    assert [r[2] for r in reports] == [
        "Denied(Unauthenticated)",
        "Denied(ModelDenied)",
        "Denied(PolicyDenied)",
        "Allowed",
    ], reports
    assert all(r[3] for r in reports)

    verdict = world.request(0, 10_000, "read")
    assert verdict == "Denied(WrongResource)", verdict
    assert world.verify_log()
    assert world.height() > 0

    try:
        world.request(0, 0, "fly")
    except ValueError:
        pass
    else:
        raise AssertionError("bad operation accepted")
    print("smoke test ok")


if __name__ == "__main__":
    main()
