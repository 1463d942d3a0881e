"""Smoke test for the cseflow Python extension.

Build and install first, e.g. ``maturin develop -m crates/py/Cargo.toml``,
then run ``python python/smoke_test.py`` from the repository root.
"""

import json
import math
import pathlib
import tempfile

import cseflow

ROOT = pathlib.Path(__file__).resolve().parent.parent


def check_hashing():
    assert cseflow.hash_artifact(b"") == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert cseflow.hash_artifact(b"abc") == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )


def check_solver():
    p = cseflow.CahnHilliardParams(nx=32, ny=32, n_steps=200, snapshot_interval=50)
    assert math.isclose(cseflow.g_chem(0.5, p), math.log(0.5) + 0.75, rel_tol=1e-14)
    assert cseflow.mobility(0.5, p) == 0.25

    field = cseflow.ch_init(p)
    assert (field.nx, field.ny, len(field)) == (32, 32, 1024)
    stepped = cseflow.ch_step(field, p)
    assert abs(stepped.sum() - field.sum()) < 1e-10

    samples, final = cseflow.run_simulation(p)
    assert [s[0] for s in samples] == [0, 50, 100, 150, 200]
    energies = [s[2] for s in samples]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert abs(final.mean() - field.mean()) < 1e-12
    assert final.to_pgm().startswith(b"P5\n32 32\n255\n")

    uniform = cseflow.Field.uniform(8, 8, 0.5)
    g = cseflow.total_free_energy(uniform, cseflow.CahnHilliardParams(nx=8, ny=8))
    assert math.isclose(g, 64 * (math.log(0.5) + 0.75), rel_tol=1e-12)

    try:
        cseflow.CahnHilliardParams(bogus=1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown parameter accepted")


def check_data():
    table = cseflow.LookupTable.from_csv("x,y\n0,1\n2,3\n")
    assert table.knots == [(0.0, 1.0), (2.0, 3.0)]
    assert table.interpolate(1.0) == 2.0
    try:
        table.interpolate(5.0)
    except ValueError:
        pass
    else:
        raise AssertionError("extrapolation accepted")
    assert cseflow.time_average_objective([(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], 2.0) == 1.0


def check_model_and_description():
    scalar = json.dumps({"name": "a", "type": "scalar", "unit": "K"})
    other = json.dumps({"name": "b", "type": "scalar", "unit": "s"})
    assert cseflow.ports_compatible(scalar, scalar)
    assert not cseflow.ports_compatible(scalar, other)

    manifest = (ROOT / "components" / "cahn-hilliard" / "component.json").read_text()
    assert cseflow.validate_manifest(manifest) == []
    broken = json.loads(manifest)
    broken["version"] = "one"
    assert any(path == "version" for path, _ in cseflow.validate_manifest(json.dumps(broken)))

    html = cseflow.render_markdown("# Title\n\n`x<y`")
    assert "<h1>Title</h1>" in html and "x&lt;y" in html
    assert f"<title>{cseflow.DEFAULT_WORKFLOW_TITLE}</title>" in html


def check_workflow():
    with tempfile.TemporaryDirectory() as tmp:
        inputs = json.dumps({"nx": 16, "ny": 16, "n_steps": 40, "snapshot_interval": 20})
        record = json.loads(
            cseflow.run_workflow(str(ROOT / "components"), ["cahn-hilliard"], inputs, tmp)
        )
        assert record["status"] == "Completed"
        on_disk = json.loads((pathlib.Path(tmp) / "run_record.json").read_text())
        assert on_disk == record
        for rel, digest in record["stages"][0]["artifacts"].items():
            data = (pathlib.Path(tmp) / rel).read_bytes()
            assert cseflow.hash_artifact(data) == digest
    assert cseflow.run_cli(["--help"]) == 0


if __name__ == "__main__":
    check_hashing()
    check_solver()
    check_data()
    check_model_and_description()
    check_workflow()
    print(f"cseflow {cseflow.__version__}: smoke test passed")
