"""Acceptance criteria, one test per criterion.

Each criterion prints a PASS line once every assertion in it has held
(run with `pytest tests/test_acceptance.py -v -s` to see them); a failure
surfaces as a normal pytest failure for that criterion.
"""

import random
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from taskbench import als as als_mod
from taskbench import energy as energy_mod
from taskbench import heat1d as heat_mod
from taskbench import jacobi2d as jac
from taskbench import membench as mem
from taskbench import netlayer as net
from taskbench.report import render_dat
from taskbench.taskgraph import WorkerPool


def _ok(n, text):
    print(f"\nACCEPTANCE {n:2d} PASS: {text}")


def test_criterion_01_scalar_vector_bitwise_equivalence():
    rng = random.Random(101)
    t0 = time.perf_counter()
    for case in range(200):
        width = rng.choice([2, 4])
        precision = rng.choice(["double", "single"])
        rows = rng.randint(8, 128)
        # cols in [8, 128] with the interior divisible by the lane width
        chunk = rng.randint(-(-6 // width), (128 - 2) // width)
        cols = width * chunk + 2
        steps = rng.randint(1, 100)

        g = jac.Grid2D.random(rows, cols, precision, seed=case)
        sg = [g.copy(), g.copy()]
        vg = [jac.pack_vns(g, width), jac.pack_vns(g, width)]
        for t in range(steps):
            jac.step_scalar(sg[t % 2], sg[(t + 1) % 2])
            jac.step_vns(vg[t % 2], vg[(t + 1) % 2])
        scalar = sg[steps % 2].data
        vector = jac.unpack_vns(vg[steps % 2]).data
        assert np.array_equal(scalar, vector), (
            f"mismatch: {rows}x{cols} {precision} W={width} steps={steps}"
        )
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, f"equivalence battery took {elapsed:.1f}s"
    _ok(1, f"200 random grids scalar==vector at 0 ulp in {elapsed:.1f}s")


def test_criterion_02_decomposition_invariance():
    t0 = time.perf_counter()
    # jacobi: core counts and strip heights
    reference = None
    for cores, strips in [(1, None), (2, None), (4, None), (2, 5), (4, 9)]:
        cfg = jac.JacobiConfig(
            rows=48, cols=50, timesteps=20, core_counts=[cores], strips=strips, keep_grids=True
        )
        final = jac.run_jacobi(cfg).final_grids[cores].data
        if reference is None:
            reference = final
        else:
            assert np.array_equal(final, reference)

    # heat: localities x threads x transports on 100k points, 100 steps
    u0 = heat_mod.default_field(100_000)
    params = heat_mod.HeatParams()
    ref = heat_mod.sequential_heat(u0, params, 100)
    for transport in ("inproc", "tcp"):
        for localities in (1, 2, 3, 4):
            for threads in (1, 4):
                out, _ = heat_mod.run_heat_once(
                    u0, params, 100, localities, threads_per_node=threads, transport=transport
                )
                assert np.array_equal(out, ref), (
                    f"heat mismatch: {transport} n={localities} threads={threads}"
                )
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"decomposition battery took {elapsed:.1f}s"
    _ok(2, f"jacobi and heat fields bit-identical across decompositions in {elapsed:.1f}s")


def test_criterion_03_heat_equation_properties():
    params = heat_mod.HeatParams()  # k*dt/dx^2 = 0.5 exactly

    # constant-field fixed point, exact
    const = np.full(10_000, 4.25)
    assert np.array_equal(heat_mod.sequential_heat(const, params, 100), const)
    out, _ = heat_mod.run_heat_once(const, params, 100, 4)
    assert np.array_equal(out, const)

    # periodic-sum conservation within 1e-9 relative on 1e6 points x 100 steps
    rng = np.random.default_rng(103)
    u0 = rng.random(1_000_000)
    total0 = float(np.sum(u0))
    total1 = float(np.sum(heat_mod.sequential_heat(u0, params, 100)))
    assert abs(total1 - total0) / abs(total0) < 1e-9

    # max principle on 1,000 random initializations
    for _ in range(1000):
        u = rng.standard_normal(int(rng.integers(3, 128)))
        lo, hi = u.min(), u.max()
        stepped = heat_mod.sequential_heat(u, params, 3)
        assert stepped.min() >= lo and stepped.max() <= hi
    _ok(3, "fixed point exact, sum conserved to 1e-9, max principle on 1000 fields")


def test_criterion_04_roofline_arithmetic():
    assert jac.expected_peak(2.4e9, jac.RooflineParams(24.0)) == 1.0e8
    assert jac.FLOPS_PER_LUP == 4
    assert 1.0e8 * jac.FLOPS_PER_LUP == 4.0e8

    cfg = jac.JacobiConfig(rows=16, cols=18, timesteps=2, core_counts=[1, 2])
    report = jac.jacobi_report(cfg, jac.run_jacobi(cfg), {1: 2.4e9, 2: 2.4e9})
    for row in report.rows:
        metrics = row["metrics"]
        assert metrics["expected_peak_mlups_24B"]["value"] == 100.0
        assert metrics["expected_peak_mlups_16B"]["value"] == 150.0
    single = jac.expected_peak_conventions(2.4e9, "single")
    assert single["write_allocate"] == 2.0e8 and single["read_write"] == 3.0e8
    _ok(4, "expected peak exact; both bytes/LUP conventions reported side by side")


def test_criterion_05_stream_validity_at_10m():
    cfg = mem.StreamConfig(n_elements=10_000_000, n_trials=2, core_counts=[1, 2])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = mem.run_stream(cfg)
    a, b, c = res.arrays
    assert mem.validate_stream(a, b, c, cfg) < 1e-13
    assert res.bytes_per_sweep == 240_000_000
    single = a.copy()
    # run the single-core count alone and compare contents
    cfg1 = mem.StreamConfig(n_elements=10_000_000, n_trials=1, core_counts=[1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res1 = mem.run_stream(cfg1)
    assert np.array_equal(res1.arrays[0], single)
    _ok(5, "10M-double TRIAD: validated < 1e-13, 240,000,000 B/sweep, cores agree")


def test_criterion_06_als_convergence_and_monotonicity():
    t0 = time.perf_counter()
    # noiseless fully observed rank-2 20x30, k=2, lambda=1e-9
    rng = np.random.default_rng(106)
    U0 = rng.random((20, 2)) + 0.5
    V0 = rng.random((2, 30)) + 0.5
    full = U0 @ V0
    R = als_mod.RatingsMatrix.from_observations(
        [(u, i, full[u, i]) for u in range(20) for i in range(30)]
    )
    model = als_mod.als_fit(R, k=2, lam=1e-9, n_sweeps=50)
    assert als_mod.rmse(model, R) < 1e-6

    # regularized loss non-increasing across every half-sweep, 20 instances
    for seed in range(20):
        inst_rng = np.random.default_rng(seed)
        obs = [
            (u, i, float(inst_rng.uniform(1.0, 5.0)))
            for u in range(15)
            for i in range(12)
            if inst_rng.random() < 0.35
        ]
        inst = als_mod.RatingsMatrix.from_observations(obs, n_users=15, n_items=12)
        trace = als_mod.als_fit(inst, k=3, lam=0.1, n_sweeps=5, seed=seed).loss_trace
        for earlier, later in zip(trace, trace[1:]):
            assert later <= earlier * (1 + 1e-12)

    # parallel vs sequential loss traces within 1e-10 relative
    R2 = als_mod.RatingsMatrix.from_observations(
        [(u, i, float((u * 7 + i * 3) % 5 + 1)) for u in range(30) for i in range(25) if (u + i) % 3]
    )
    seq = als_mod.als_fit(R2, k=4, lam=0.1, n_sweeps=4).loss_trace
    with WorkerPool(4) as pool:
        par = als_mod.als_fit(R2, k=4, lam=0.1, n_sweeps=4, pool=pool).loss_trace
    for a_val, b_val in zip(seq, par):
        assert abs(a_val - b_val) <= 1e-10 * abs(a_val)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    _ok(6, f"ALS recovery, monotone loss, parallel==sequential in {elapsed:.1f}s")


def test_criterion_07_movielens_ingestion(tmp_path):
    rng = random.Random(107)
    rows = []
    expected = {}  # independent last-wins oracle
    dup_count = 0
    for _ in range(1000):
        user = rng.randint(1, 60)
        item = rng.choice([2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37])
        rating = rng.choice([0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0])
        rows.append(f"{user},{item},{rating},{rng.randint(0, 10**9)}")
        if (user, item) in expected:
            dup_count += 1
        expected[(user, item)] = rating
    path = tmp_path / "ratings.csv"
    path.write_text("userId,movieId,rating,timestamp\n" + "\n".join(rows) + "\n")

    R = als_mod.load_ratings(path)
    assert R.n_observations == len(expected)
    assert R.duplicate_count == dup_count
    assert R.n_users == len({u for u, _ in expected})
    assert R.n_items == len({i for _, i in expected})
    for (raw_u, raw_i), rating in expected.items():
        u = R.user_id_map[raw_u]
        i = R.item_id_map[raw_i]
        pos = np.searchsorted(R.user_items[u], i)
        assert R.user_ratings[u][pos] == rating

    # max_lines truncation honors data rows only
    R100 = als_mod.load_ratings(path, max_lines=100)
    oracle100 = {}
    for line in rows[:100]:
        u_txt, i_txt, r_txt, _ = line.split(",")
        oracle100[(int(u_txt), int(i_txt))] = float(r_txt)
    assert R100.n_observations == len(oracle100)
    _ok(7, "1000-row synthetic MovieLens file: counts, last-wins, truncation exact")


def test_criterion_08_wire_format_and_four_process_tcp(tmp_path):
    golden = bytes(
        [0x0D, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xF0, 0x3F]
    )
    assert net.encode_frame(0, 0, [1.0]) == golden

    rng = random.Random(108)
    nprng = np.random.default_rng(108)
    for _ in range(10_000):
        step = rng.randrange(0, 2**32)
        direction = rng.choice(["left", "right"])
        payload = nprng.standard_normal(rng.randint(1, 6))
        frame, used = net.decode_frame(net.encode_frame(step, direction, payload))
        assert used == 13 + 8 * len(payload)
        assert frame.step == step and frame.direction == direction
        assert np.array_equal(frame.payload, payload)

    # 4 OS processes over localhost TCP against the sequential oracle
    points, steps = 20_000, 40
    ports = [29911, 29912, 29913, 29914]
    peers = ",".join(f"127.0.0.1:{p}" for p in ports)
    procs = []
    fields = [tmp_path / f"field_{r}.npy" for r in range(4)]
    for r in range(4):
        procs.append(
            subprocess.Popen(
                [
                    sys.executable, "-m", "taskbench.cli", "heat1d",
                    "--transport", "tcp",
                    "--listen", f"127.0.0.1:{ports[r]}",
                    "--peers", peers,
                    "--points", str(points),
                    "--steps", str(steps),
                    "--dump-field", str(fields[r]),
                    "--output", str(tmp_path / f"report_{r}.json"),
                ],
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
        )
    for proc in procs:
        _, err = proc.communicate(timeout=120)
        assert proc.returncode == 0, err.decode()
    got = np.concatenate([np.load(f) for f in fields])
    ref = heat_mod.sequential_heat(heat_mod.default_field(points), heat_mod.HeatParams(), steps)
    assert np.array_equal(got, ref)
    _ok(8, "golden frame exact, 10k round-trips, 4-process TCP run matches oracle")


def test_criterion_09_energy_model():
    assert energy_mod.cost_cents(1000, 3600, 8.2) == 8.2
    hand = 3.7 * 100 / 3_600_000.0 * 8.2  # stated rounded: 8.4278e-4
    got = energy_mod.cost_cents(3.7, 100, 8.2)
    assert abs(got - hand) / hand < 1e-9
    assert abs(got - 8.4278e-4) / 8.4278e-4 < 1e-4
    assert energy_mod.BUILTIN_PROFILES["pi3b"].watts == 3.7
    assert energy_mod.BUILTIN_PROFILES["pi3bplus"].watts == 5.1
    assert energy_mod.BUILTIN_PROFILES["pi4"].watts == 6.4
    _ok(9, "cost arithmetic exact; built-in wattages 3.7 / 5.1 / 6.4")


def test_criterion_10_experiment_shape_reproduction(tmp_path):
    t0 = time.perf_counter()
    strong = heat_mod.run_scaling(
        heat_mod.ScalingConfig(
            mode="strong", base_points=1_000_000, timesteps=100, node_counts=[1, 2, 3, 4]
        )
    )
    weak = heat_mod.run_scaling(
        heat_mod.ScalingConfig(
            mode="weak", base_points=1_000_000, timesteps=100, node_counts=[1, 2, 3, 4]
        )
    )
    for name, report in (("strong", strong), ("weak", weak)):
        path = tmp_path / f"{name}.dat"
        path.write_text(render_dat(report))
        data = np.loadtxt(path)  # gnuplot-loadable: node count then metrics
        assert data.shape[0] == 4
        assert data[:, 0].tolist() == [1.0, 2.0, 3.0, 4.0]
    weak_points = [r["metrics"]["points"]["value"] for r in weak.rows]
    assert weak_points == [1_000_000, 2_000_000, 3_000_000, 4_000_000]

    cfg = jac.JacobiConfig(rows=128, cols=130, timesteps=10, core_counts=[1, 2, 4])
    report = jac.jacobi_report(cfg, jac.run_jacobi(cfg), {1: 2.4e9, 2: 2.2e9, 4: 2.0e9})
    jpath = tmp_path / "jacobi.dat"
    jpath.write_text(render_dat(report))
    with open(jpath) as fh:
        header = fh.readline().strip()
    columns = header.lstrip("# ").split()
    assert columns[0] == "cores"
    assert "mlups" in columns
    assert "expected_peak_mlups_24B" in columns and "expected_peak_mlups_16B" in columns
    data = np.loadtxt(jpath)
    assert data.shape == (3, len(columns))
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    _ok(10, f"scaling sweeps and stencil report emit gnuplot dat files in {elapsed:.1f}s")
