import runpy
from pathlib import Path


def test_benchmark_runs(capsys):
    mod = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"))
    mod["run"](1)
    out = capsys.readouterr().out
    assert "element_matrices_2d" in out and "combine_3d" in out
