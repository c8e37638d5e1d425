"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown under "acceptance criteria" in the
terminal summary) and then asserts the same condition.
"""
import time

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from builders import frame_stream, meta, pose_stream, sequence, session
from g0forge.assembly import MixManifest, interpolate_at, read_playback
from g0forge.cli import main
from g0forge.episodes import compute_stats
from g0forge.kinematics import forward_kinematics, jacobian, solve_ik
from g0forge.pipeline import PipelineConfig, StageContext, list_episodes, load_report, load_trajectory
from g0forge.quality import blur_score, downsample_stationary, stationary_spans
from g0forge.retarget import HARD_FAILURES
from g0forge.sync import FRAME_GAP, align_streams, tick_grid
from g0forge.synthetic.catalog import throughput_block, write_catalog
from g0forge.transforms import axis_angle_quat, quat_angle, slerp

QUICK = settings(max_examples=150, deadline=None, database=None)


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def cli(*argv):
    return main([str(a) for a in argv])


# --- 1. IK accuracy


def ik_success(model, arm, link, rng, n=1000):
    """Targets from FK of uniform configurations; seeds within 0.1 rad of the truth (warm start)."""
    ok = 0
    for _ in range(n):
        q = rng.uniform(model.lower_limits, model.upper_limits)
        target = forward_kinematics(model, q, link)
        d = rng.normal(size=model.dof)
        d *= rng.uniform(0, 0.1) / np.linalg.norm(d)
        res = solve_ik(model, target, arm, q + d)
        ok += bool(res.converged and res.position_error <= 0.004)
    return ok / n


def test_criterion_1_ik_accuracy(planar, arm6, acceptance):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    rates = {"planar": ik_success(planar, "main", "tool", rng), "arm6": ik_success(arm6, "main", "tcp", rng)}
    elapsed = time.perf_counter() - t0
    ok = min(rates.values()) >= 0.99 and elapsed < 5.0
    acceptance(1, ok, f"success {rates}, {elapsed:.2f} s")
    assert ok


# --- 2. Jacobian vs finite differences


def fd_jacobian(model, q, link, h=1e-6):
    J = np.zeros((6, model.dof))
    for i in range(model.dof):
        dq = np.zeros(model.dof)
        dq[i] = h
        plus, minus = forward_kinematics(model, q + dq, link), forward_kinematics(model, q - dq, link)
        J[:3, i] = (np.array(plus.translation) - np.array(minus.translation)) / (2 * h)
        rel = Rotation.from_quat(np.roll(plus.rotation, -1)) * Rotation.from_quat(np.roll(minus.rotation, -1)).inv()
        J[3:, i] = rel.as_rotvec() / (2 * h)
    return J


def test_criterion_2_jacobian(arm6, acceptance):
    rng = np.random.default_rng(7)

    def run():
        worst = 0.0
        for _ in range(100):
            q = rng.uniform(arm6.lower_limits, arm6.upper_limits)
            worst = max(worst, float(np.max(np.abs(jacobian(arm6, q, "tcp") - fd_jacobian(arm6, q, "tcp")))))
        return worst

    worst, elapsed = timed(run)
    ok = worst <= 1e-5 and elapsed < 1.0
    acceptance(2, ok, f"max |J - J_fd| = {worst:.2e} over 100 configurations, {elapsed:.2f} s")
    assert ok


# --- 3. validity rate and defect attribution


def test_criterion_3_validity(processed, acceptance):
    eps = list_episodes(processed["store"])
    rate = compute_stats(eps).validity_rate
    predicted = {}
    for ep in eps:
        if not ep.valid:
            counts = load_report(processed["store"] / ep.episode_id).counts
            hard = {k: counts[k] for k in HARD_FAILURES if counts[k]}
            predicted[ep.episode_id] = max(hard, key=hard.get) if hard else None
    truth = processed["defects"]
    hits = sum(predicted.get(s) == r for s, r in truth.items())
    precision = hits / len(predicted) if predicted else 0.0
    recall = hits / len(truth)
    ok = (processed["code"] == 0 and rate == 0.85 and precision == 1.0 and recall == 1.0
          and processed["elapsed"] < 60.0)
    acceptance(3, ok, f"validity {rate}, precision {precision:.2f}, recall {recall:.2f}, "
                      f"process {processed['elapsed']:.1f} s, attributed {predicted}")
    assert ok


# --- 4. mixing compositions


def test_criterion_4_mixing(tmp_path, acceptance, capsys):
    store = write_catalog(tmp_path / "catalog", 500, 500)
    wanted = [("pure_real", 0, 500, "0:500", 500), ("augmentation", 500, 500, "1:1", 1000),
              ("substitution", 500, 50, "10:1", 550)]
    t0 = time.perf_counter()
    results = []
    for strategy, n_f, n_r, ratio, total in wanted:
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{strategy}_{run}.json"
            code = cli("mix", store, "--strategy", strategy, "--robot-free", n_f, "--real", n_r, "--seed", 17,
                       "--out", out)
            outs.append((code, out))
        m = MixManifest.load(outs[0][1])
        same = outs[0][1].read_bytes() == outs[1][1].read_bytes()
        results.append(all(c == 0 for c, _ in outs) and same and m.ratio == ratio and m.total == total
                       and m.counts == {"robot_free": n_f, "real_robot": n_r})
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    ok = all(results) and elapsed < 5.0
    acceptance(4, ok, f"{dict(zip([w[0] for w in wanted], results))}, {elapsed:.2f} s for six manifests")
    assert ok


# --- 5. throughput


def test_criterion_5_throughput(acceptance):
    stats, elapsed = timed(compute_stats, throughput_block())
    peak = stats.peak_episodes_per_hour
    ok = abs(peak - 93.2) <= 0.05 and elapsed < 0.5
    acceptance(5, ok, f"peak {peak:.4f} episodes/hour (span {stats.blocks[0]['span_s']:.2f} s)")
    assert ok


# --- 6. replay fidelity


def replay_deviation(pb, traj, model, base):
    """Independent check of a written playback file: FK of each row vs the interpolated TCP path."""
    grid = pb.rows[:, 0]
    n_j = pb.joints_per_arm
    worst = 0.0
    targets = {a: interpolate_at(traj.times, traj.tcp_positions(a), grid) for a in pb.arms}
    for g, row in enumerate(pb.rows):
        q = np.array(base, dtype=float)
        for i, a in enumerate(pb.arms):
            q[model.arm_columns(a)] = row[1 + i * n_j: 1 + (i + 1) * n_j]
        for a in pb.arms:
            p = np.array(forward_kinematics(model, q, model.ee_link(a)).translation)
            worst = max(worst, float(np.linalg.norm(p - targets[a][g])))
    return worst


def test_criterion_6_replay(processed, tmp_path, acceptance, capsys):
    ctx = StageContext.from_config(PipelineConfig.load(processed["config"]))
    worst, failures, n = 0.0, [], 0
    for ep in list_episodes(processed["store"]):
        if not ep.valid:
            continue
        n += 1
        d = processed["store"] / ep.episode_id
        out = tmp_path / f"{ep.episode_id}.csv"
        code = cli("--config", processed["config"], "export-playback", d, "--hz", 50, "--out", out)
        if code != 0:
            failures.append(ep.episode_id)
            continue
        worst = max(worst, replay_deviation(read_playback(out), load_trajectory(d), ctx.model,
                                            ctx.profile.home_config))
    capsys.readouterr()
    ok = n == 17 and not failures and worst <= 0.004
    acceptance(6, ok, f"{n} valid episodes at 50 Hz, worst deviation {worst * 1000:.3f} mm, failures {failures}")
    assert ok


# --- 7. filter invariants

images = arrays(np.float64, st.tuples(st.integers(3, 16), st.integers(3, 16)), elements=st.floats(0, 255))


@QUICK
@given(images, st.floats(-100, 100))
def blur_offset_invariant(img, c):
    a, b = blur_score(img), blur_score(img + c)
    assert abs(b - a) <= 1e-9 * max(abs(a), 1e-3)


@QUICK
@given(images, st.floats(0.1, 10))
def blur_contrast_quadratic(img, alpha):
    a = blur_score(img)
    assert abs(blur_score(alpha * img) - alpha * alpha * a) <= 1e-9 * max(alpha * alpha * a, 1e-3)


@st.composite
def hold_sequences(draw):
    pieces = draw(st.lists(st.tuples(st.booleans(), st.integers(1, 60)), min_size=1, max_size=8))
    step = draw(st.floats(0.003, 0.02))
    path = [0.0]
    for moving, length in pieces:
        path += [path[-1] + step * moving * (i + 1) for i in range(length)]
    path = np.array(path)
    pos = np.column_stack([path, np.zeros_like(path), np.zeros_like(path)])
    return sequence({"left": pos, "right": -pos}), draw(st.integers(2, 20)), draw(st.integers(1, 20))


@QUICK
@given(hold_sequences())
def spans_and_downsampling(case):
    seq, window, period = case
    spans = stationary_spans(seq, window, 0.002)
    assert all(a.end_tick < b.start_tick for a, b in zip(spans, spans[1:]))
    out = downsample_stationary(seq, spans, period)
    kept = {tk.index for tk in out.ticks}
    assert all(s.start_tick in kept and s.end_tick in kept for s in spans)
    assert out.ticks[0].index == seq.ticks[0].index and out.ticks[-1].index == seq.ticks[-1].index
    again = downsample_stationary(out, stationary_spans(out, window, 0.002), period)
    assert again.ticks == out.ticks


def run_properties(*props):
    failed = []
    for prop in props:
        try:
            prop()
        except AssertionError:
            failed.append(prop.__name__)
    return failed


def test_criterion_7_filter_invariants(acceptance):
    failed, elapsed = timed(run_properties, blur_offset_invariant, blur_contrast_quadratic, spans_and_downsampling)
    ok = not failed and elapsed < 10.0
    acceptance(7, ok, f"blur offset/contrast, span disjointness, endpoints, idempotence; "
                      f"failed {failed}, {elapsed:.2f} s")
    assert ok


# --- 8. sync properties

quats = st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 0.1)


@QUICK
@given(st.integers(0, 2 ** 32 - 1))
def knot_identity(seed):
    rng = np.random.default_rng(seed)
    t = tick_grid(0.0, 1.0, 30.0)
    q = rng.normal(size=(len(t), 4))
    left = pose_stream(t, rng.normal(size=(len(t), 3)), q / np.linalg.norm(q, axis=1, keepdims=True))
    right = pose_stream(t, rng.normal(size=(len(t), 3)))
    seq = align_streams(session(left, right, {"ego": frame_stream(t)}), 30.0)
    assert all(tk.poses["left"] is left[k] and tk.poses["right"] is right[k] for k, tk in enumerate(seq.ticks))


@QUICK
@given(quats, quats, st.floats(0, 1))
def slerp_unit_and_midpoint(a, b, u):
    a = np.array(a) / np.linalg.norm(a)
    b = np.array(b) / np.linalg.norm(b)
    assert abs(np.linalg.norm(slerp(a, b, u)) - 1.0) < 1e-12
    mid = slerp(a, b, 0.5)
    assert abs(quat_angle(a, mid) - quat_angle(mid, b)) < 1e-7
    assert abs(quat_angle(a, mid) - quat_angle(a, b) / 2) < 1e-7


def frame_bound(jitter_seed):
    """120 Hz poses, 30 Hz video with up to 1/240 s of timestamp jitter, 30 Hz ticks."""
    rng = np.random.default_rng(jitter_seed)
    pose_t = np.arange(1201) / 120.0
    video_t = np.arange(301) / 30.0
    video_t[1:-1] += rng.uniform(-1 / 240, 1 / 240, 299)
    s = session(pose_stream(pose_t), pose_stream(pose_t), {"ego": frame_stream(video_t)}, meta(120.0, 30.0))
    seq = align_streams(s, 30.0)
    assert all(FRAME_GAP not in tk.flags for tk in seq.ticks)
    return max(abs(tk.frames["ego"].t - tk.t) for tk in seq.ticks)


def test_criterion_8_sync(acceptance):
    t0 = time.perf_counter()
    failed = run_properties(knot_identity, slerp_unit_and_midpoint)
    a45 = axis_angle_quat((0, 0, 1), np.pi / 2)
    mid_ok = abs(quat_angle(slerp(np.array([1.0, 0, 0, 0]), a45, 0.5), axis_angle_quat((0, 0, 1), np.pi / 4))) < 1e-12
    bound = max(frame_bound(0), frame_bound(1))
    elapsed = time.perf_counter() - t0
    ok = not failed and mid_ok and bound <= 1 / 240 + 1e-12 and elapsed < 5.0
    acceptance(8, ok, f"failed {failed}, 90-degree midpoint {mid_ok}, frame offset {bound * 1000:.3f} ms "
                      f"(bound {1000 / 240:.3f} ms), {elapsed:.2f} s")
    assert ok


# --- 9. determinism


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(processed, tmp_path, acceptance, capsys):
    store_b = tmp_path / "store_b"
    code = cli("--config", processed["config"], "process", processed["config"].parent / "sessions",
               "--store", store_b)
    runs = []
    for store, tag in ((processed["store"], "a"), (store_b, "b")):
        m = tmp_path / f"manifest_{tag}.json"
        cli("mix", store, "--strategy", "pure_robot_free", "--robot-free", 17, "--real", 0, "--seed", 5, "--out", m)
        cli("export-shards", m, "--store", store, "--out", tmp_path / f"shards_{tag}", "--shard-size", 5)
        runs.append((tree_bytes(store), m.read_bytes(), tree_bytes(tmp_path / f"shards_{tag}")))
    capsys.readouterr()
    (sa, ma, sha), (sb, mb, shb) = runs
    n_files = len(sa) + 1 + len(sha)
    ok = code == 0 and sa == sb and ma == mb and sha == shb and len(sha) == 8
    reports = sum(k.endswith("report.json") for k in sa)
    acceptance(9, ok, f"{n_files} files compared ({len(sa)} store files incl. {reports} reports, "
                      f"manifest, {len(sha)} shard files)")
    assert ok
