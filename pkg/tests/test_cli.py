import numpy as np
import pytest

from cr_transport.benchmarks import make_rows
from cr_transport.cli import main, parse_args
from cr_transport.cr_space import CRFunction
from cr_transport.mesh import build_uniform_mesh, refine_half, write_mesh
from cr_transport.output import CSV_HEADER, read_csv, write_csv, write_vtk
from cr_transport.reconstruction import reconstruct


def test_run_writes_outputs(tmp_path, capsys):
    args = ["run", "--case", "inflow", "--n", "6", "--t-final", "0.05", "--out", str(tmp_path)]
    assert main(args) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "inflow_fct-global_n6.csv" in names and "inflow_fct-global_n6.vtk" in names
    first = (tmp_path / "inflow_fct-global_n6.csv").read_bytes()
    assert main(args) == 0
    assert (tmp_path / "inflow_fct-global_n6.csv").read_bytes() == first
    assert "L2=" in capsys.readouterr().out


def test_converge_table(tmp_path, capsys):
    assert main(["converge", "--case", "inflow", "--n", "4,8", "--t-final", "0.05",
                 "--formats", "csv", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "inflow_fct-global_convergence.csv")
    assert len(rows) == 2 and rows[0].rate is None and rows[1].rate is not None


@pytest.mark.parametrize("args", [
    ["fly"],
    ["run", "--case", "vortex"],
    ["run", "--limiter", "tvd"],
    ["run", "--cfl", "1.5"],
    ["run", "--reduce-factor", "1.0"],
    ["run", "--n", "0"],
    ["run", "--formats", "png"],
    ["converge", "--n", "20"],
])
def test_usage_errors(args, capsys):
    assert main(args) == 2


def test_missing_mesh_file(tmp_path, capsys):
    assert main(["run", "--mesh-file", str(tmp_path / "none.txt"), "--out", str(tmp_path)]) == 2


def test_audit_exit_codes(tmp_path, capsys):
    base = ["audit", "--case", "solid-body", "--n", "16", "--t-final", "0.05", "--out", str(tmp_path)]
    assert main(base + ["--limiter", "low-order"]) == 0
    assert main(base + ["--limiter", "galerkin"]) == 3
    assert "violated" in capsys.readouterr().err


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\ncase = swirling\nlimiter = greedy\nn = 4,8\ncfl = 0.25\n")
    spec = parse_args(["converge", "--config", str(cfg), "--limiter", "fct-local"])
    assert spec.case == "swirling" and spec.ns == [4, 8]
    assert spec.limiter == "fct-local" and spec.cfl == 0.25
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["run", "--config", str(bad)]) == 2


def test_mesh_file_mode(tmp_path):
    path = tmp_path / "m.txt"
    write_mesh(build_uniform_mesh((0, 1, 0, 1), 4), path)
    assert main(["run", "--case", "swirling", "--mesh-file", str(path), "--t-final", "0.05",
                 "--formats", "vtk", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "swirling_fct-global_mesh.vtk").exists()


def test_csv_round_trip(tmp_path):
    rows = make_rows([0.1, 0.05, 0.025], [2e-2, 5e-3, 1.3e-3], [0.1, 0.04, 0.02])
    path = tmp_path / "t.csv"
    write_csv(rows, path, ["note"])
    text = path.read_text().splitlines()
    assert text[0] == "# note" and text[1] == ",".join(CSV_HEADER)
    back = read_csv(path)
    for a, b in zip(rows, back):
        assert b.h == pytest.approx(a.h, rel=1e-5) and b.l2 == pytest.approx(a.l2, rel=1e-5)
        assert (a.rate is None) == (b.rate is None)


def test_vtk_counts(tmp_path, two_cells):
    u = CRFunction(two_cells, np.arange(two_cells.n_edges, dtype=float))
    path = tmp_path / "u.vtk"
    write_vtk(u, path)
    text = path.read_text()
    assert "POINTS 6 double" in text and "CELLS 2 8" in text and "POINT_DATA 6" in text
    rec = reconstruct(u, refine_half(two_cells))
    write_vtk(rec, tmp_path / "r.vtk")
    text = (tmp_path / "r.vtk").read_text()
    assert "POINTS 9 double" in text and "CELLS 8 32" in text


def test_unwritable_output(tmp_path):
    rows = make_rows([0.1, 0.05], [1.0, 0.25])
    with pytest.raises(OSError):
        write_csv(rows, tmp_path / "missing" / "t.csv")
