import math

import numpy as np
import pytest

from qwop_evolve.genome import ControlEvent, ControlTimeline, Genome, KeyMask, decode
from qwop_evolve.physics import (
    LINKS, Outcome, WorldConfig, check_termination, diagnostics, dump_world_config,
    init_runner, load_world_config, run_episode, step,
)
from qwop_evolve.physics.runner import JOINTS, reported_distance, schedule_arrays

CFG = WorldConfig()
IDLE = ControlTimeline((ControlEvent(KeyMask.NONE, 150),))


def test_config_validation():
    with pytest.raises(ValueError):
        WorldConfig(dt=0)
    with pytest.raises(ValueError):
        WorldConfig(torso_mass=-1)
    with pytest.raises(ValueError):
        WorldConfig(finish_distance=0)
    with pytest.raises(ValueError):
        WorldConfig(knee_min=0.1)
    assert CFG.step_us == 5000


def test_config_file_round_trip(tmp_path):
    cfg = CFG.replace(gravity=9.0, substeps=3, friction=0.5)
    p = tmp_path / "w.ini"
    p.write_text(dump_world_config(cfg))
    assert load_world_config(p) == cfg
    p.write_text("[world]\ndt = 0.004\n")
    assert load_world_config(p) == CFG.replace(dt=0.004)
    p.write_text("[world]\nbogus = 1\n")
    with pytest.raises(ValueError, match="bogus"):
        load_world_config(p)


def test_init_runner_standing_pose():
    s = init_runner(CFG)
    assert s.torso_x == 0.0
    assert s.sim_clock == 0.0
    assert not s.vel.any() and not s.angvel.any()
    d = diagnostics(s, CFG)
    assert d.joint_gap < 1e-12
    assert d.penetration == 0.0
    assert d.limit_overshoot == 0.0
    assert np.allclose(s.joint_angles(CFG), 0.0)
    assert s.pos.shape == (len(LINKS), 2)


def test_passive_stand_short_horizon():
    s = init_runner(CFG)
    for _ in range(100):
        s = step(s, KeyMask.NONE, CFG)
    assert abs(s.torso_x) < 0.5
    assert check_termination(s, CFG, 45.0) is Outcome.RUNNING
    assert s.sim_clock == pytest.approx(0.5)


def test_equilibrium_changes_little_per_step():
    s = init_runner(CFG)
    for _ in range(400):
        s = step(s, KeyMask.NONE, CFG)
    t = step(s, KeyMask.NONE, CFG)
    assert np.abs(t.pos - s.pos).max() < 1e-4
    assert np.abs(t.angle - s.angle).max() < 1e-3


@pytest.mark.parametrize("key, joint", [
    (KeyMask.Q, "l_hip"), (KeyMask.W, "r_hip"), (KeyMask.O, "l_knee"), (KeyMask.P, "r_knee"),
])
def test_each_key_drives_its_joint(key, joint):
    s = init_runner(CFG)
    a = step(s, key, CFG).joint_angles(CFG)
    b = step(s, KeyMask.NONE, CFG).joint_angles(CFG)
    j = JOINTS.index(joint)
    assert a[j] != b[j]
    # hips flex forward (positive), knees fold back (negative)
    assert (a[j] - b[j]) * (1 if "hip" in joint else -1) > 0


def test_step_is_pure_and_deterministic():
    s = init_runner(CFG)
    before = s.copy()
    a = step(s, KeyMask.Q | KeyMask.P, CFG)
    b = step(s, KeyMask.Q | KeyMask.P, CFG)
    assert np.array_equal(s.pos, before.pos)
    assert np.array_equal(a.pos, b.pos) and np.array_equal(a.angle, b.angle)
    assert np.array_equal(a.vel, b.vel) and np.array_equal(a.angvel, b.angvel)


def test_step_rejects_non_finite():
    s = init_runner(CFG)
    s.pos[0, 0] = np.nan
    with pytest.raises(ValueError):
        step(s, KeyMask.NONE, CFG)


def test_termination_fell_when_torso_on_ground():
    s = init_runner(CFG)
    s.angle[0] = math.pi / 2
    s.pos[0] = (0.0, 0.0)
    assert check_termination(s, CFG, 45.0) is Outcome.FELL


def test_termination_won_and_timed_out():
    s = init_runner(CFG)
    s.pos[:, 0] += 100.0
    assert check_termination(s, CFG, 45.0) is Outcome.WON
    s = init_runner(CFG)
    s.pos[:, 0] += 40.0
    s.steps = 9000
    assert check_termination(s, CFG, 45.0) is Outcome.TIMED_OUT


def test_fell_beats_won():
    s = init_runner(CFG)
    s.angle[0] = math.pi / 2
    s.pos[0] = (100.0, 0.0)
    assert check_termination(s, CFG, 45.0) is Outcome.FELL


def test_reported_distance_rules():
    assert reported_distance(-2.0, Outcome.FELL, CFG) == 0.0
    assert reported_distance(3.14, Outcome.FELL, CFG) == 3.1
    assert reported_distance(99.97, Outcome.TIMED_OUT, CFG) == 99.9
    assert reported_distance(100.04, Outcome.WON, CFG) == 100.0
    assert reported_distance(float("nan"), Outcome.FELL, CFG) == 0.0


def test_idle_episode_times_out_in_place():
    res, stats = run_episode(IDLE, CFG, 45.0, stats=True)
    assert res.outcome is Outcome.TIMED_OUT
    assert res.elapsed_s == 45.0 and res.steps == 9000
    assert abs(res.torso_x) < 1.0
    assert stats.finite and stats.max_penetration <= CFG.contact_tolerance


def test_episode_trace_and_determinism(rng):
    from qwop_evolve.genome import random_genome
    g = random_genome("bmd", rng)
    r1, t1 = run_episode(decode(g), CFG, 10.0, trace=True)
    r2, t2 = run_episode(decode(g), CFG, 10.0, trace=True)
    assert r1 == r2
    assert np.array_equal(t1.poses, t2.poses) and np.array_equal(t1.masks, t2.masks)
    assert len(t1) == r1.steps
    assert r1.steps * CFG.dt == pytest.approx(r1.elapsed_s)
    assert r1.elapsed_s <= 10.0
    assert t1.poses[-1, 0, 0] == r1.torso_x


def test_mask_schedule_fidelity():
    # 117 ms then 433 ms: steps start at 0, 5, ..., so the first event covers 24 steps
    tl = decode(Genome("bmd", (("L", 117), ("F", 433))))
    _, trace = run_episode(tl, CFG, 2.0, trace=True)
    masks = trace.masks
    assert (masks[:24] == int(KeyMask.W)).all()
    assert masks[24] == int(KeyMask.Q | KeyMask.O)
    # the loop restarts after 550 ms = 110 steps, with no inserted gap
    assert (masks[24:110] == int(KeyMask.Q | KeyMask.O)).all()
    assert masks[110] == int(KeyMask.W)


def test_schedule_arrays_and_empty_timeline():
    masks, ends = schedule_arrays(decode(Genome("ks", "QW")))
    assert list(masks) == [8, 0, 4]
    assert list(ends) == [150_000, 200_000, 350_000]
    with pytest.raises(ValueError):
        run_episode(ControlTimeline(()), CFG)


def test_trace_text_format():
    _, trace = run_episode(decode(Genome("bm", "HAP")), CFG, 0.05, trace=True)
    lines = trace.to_text().splitlines()
    assert lines[0].startswith("# step, t_s, mask")
    assert len(lines) == 1 + 10
    first = lines[1].split(", ")
    assert first[:3] == ["1", "0.005", "1000"]
    assert len(first) == 3 + 3 * len(LINKS)


def test_random_genomes_mostly_fall_fast(rng):
    from qwop_evolve.genome import random_genome
    results = [run_episode(decode(random_genome("bm", rng)), CFG, 45.0) for _ in range(100)]
    assert sum(r.distance_m < 10 for r in results) >= 80
    assert sum(r.outcome is Outcome.FELL and r.elapsed_s < 10 for r in results) >= 50
