"""Top-level acceptance checks, one test per pinned criterion. Each prints a
single PASS line with its measured numbers (visible with -s or -rA)."""

import itertools
import json
import math
import time

import numpy as np
import scipy.integrate
import scipy.stats

from setscene import autodiff as ad
from setscene import cli
from setscene import distributions as ds
from setscene import evaluation as ev
from setscene import inference as inf
from setscene import model as md
from setscene import scenes as sc
from setscene import training as tr


def _report(name, detail):
    print(f"[{name}] PASS  {detail}")


def _distribution_fields(params, contexts, grid):
    """Category logits and raw mixture params for a batch of orderings of
    the same scene; rows must agree for an order-free model.

    contexts: (cats (B,M), sizes (B,M,3), locs (B,M,3), oris (B,M)).
    Returns one (B, F) float32 matrix of every distribution field."""
    cats, sizes, locs, oris = contexts
    b = cats.shape[0]
    feat = md.encode_layouts(params, np.repeat(grid[None], b, axis=0))
    ctx = md.encode_objects(params, cats, sizes, locs, oris)
    q = md.transformer_query(params, feat, ctx)
    cols = [md.category_logits(params, q).data]
    zeros3 = np.zeros((b, 3))
    for c in range(params.config.n_categories):
        cidx = np.full(b, c)
        cols.append(md.location_raw(params, q, cidx).data.reshape(b, -1))
        # chain heads probed at a fixed location/orientation
        cols.append(md.orientation_raw(params, q, cidx, zeros3).data)
        cols.append(md.size_raw(params, q, cidx, zeros3,
                                np.zeros(b)).data.reshape(b, -1))
    return np.concatenate(cols, axis=1)


def _ordering_batch(scene, params, n_orderings, rng):
    prep = tr.prepare_scene(scene, params.config)
    m = len(prep.categories)
    perms = [rng.permutation(m) for _ in range(n_orderings)]
    cats = np.stack([prep.categories[p] for p in perms])
    sizes = np.stack([prep.sizes[p] for p in perms])
    locs = np.stack([prep.locations[p] for p in perms])
    oris = np.stack([prep.orientations[p] for p in perms])
    return (cats, sizes, locs, oris), prep.grid


def _ordering_spread(params, scenes, seed):
    """Max field disagreement across 20 orderings, per scene."""
    rng = np.random.default_rng(seed)
    spreads = []
    for scene in scenes:
        contexts, grid = _ordering_batch(scene, params, 20, rng)
        fields = _distribution_fields(params, contexts, grid)
        spreads.append(float(np.abs(fields - fields[0]).max()))
    return np.array(spreads)


def test_criterion_1_permutation_invariance(toy_holdout_scenes):
    t0 = time.perf_counter()
    params = md.init_parameters(md.ModelConfig(n_categories=3), seed=0,
                                dtype=np.float32)
    spreads = _ordering_spread(params, toy_holdout_scenes[:50], seed=101)
    elapsed = time.perf_counter() - t0
    assert spreads.max() < 1e-5, f"worst ordering spread {spreads.max():.3g}"
    assert elapsed < 60.0
    _report("criterion 1  permutation invariance",
            f"max spread {spreads.max():.2e} over 50 scenes x 20 orderings "
            f"in {elapsed:.1f}s")


def test_criterion_2_positional_ablation_breaks_invariance(toy_holdout_scenes):
    cfg = md.ModelConfig(n_categories=3,
                         ordering_mode="permuted_with_positions")
    params = md.init_parameters(cfg, seed=0, dtype=np.float32)
    spreads = _ordering_spread(params, toy_holdout_scenes[:50], seed=101)
    broken = float(np.mean(spreads > 1e-3))
    assert broken >= 0.9, f"only {broken:.0%} of scenes vary across orderings"
    _report("criterion 2  positional ablation",
            f"{broken:.0%} of scenes exceed 1e-3 spread (median "
            f"{np.median(spreads):.3g})")


def test_criterion_3_end_to_end_gradient(toy_holdout_scenes):
    t0 = time.perf_counter()
    params = md.init_parameters(md.ModelConfig(n_categories=3), seed=3,
                                dtype=np.float64)
    rng = np.random.default_rng(7)
    for t in params.tensors.values():
        t.data += rng.normal(0.0, 0.05, size=t.data.shape)
    scene = toy_holdout_scenes[0].copy()
    scene.objects = scene.objects[:2]
    prep = tr.prepare_scene(scene, params.config)
    rows = [(prep, np.asarray(perm), t)
            for perm in itertools.permutations(range(2)) for t in range(3)]

    def loss():
        _, mean = tr.batch_nll(params, rows)
        return mean

    out = loss()
    out.backward()
    grads = {n: t.grad.copy() for n, t in params.tensors.items()}
    h = 1e-6
    worst = 0.0
    for name, tensor in sorted(params.tensors.items()):
        v = rng.standard_normal(tensor.data.shape)
        v /= np.linalg.norm(v)
        base = tensor.data.copy()
        tensor.data[...] = base + h * v
        hi = float(loss().data)
        tensor.data[...] = base - h * v
        lo = float(loss().data)
        tensor.data[...] = base
        fd = (hi - lo) / (2 * h)
        an = float(np.sum(grads[name] * v))
        rel = abs(fd - an) / max(1.0, abs(fd))
        worst = max(worst, rel)
        assert rel < 1e-4, f"{name}: fd={fd} analytic={an} rel={rel:.3g}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    _report("criterion 3  end-to-end gradients",
            f"{len(params.tensors)} tensors, worst rel err {worst:.2e}, "
            f"{elapsed:.0f}s")


def test_criterion_4_monte_carlo_objective(toy_holdout_scenes):
    params = md.init_parameters(md.ModelConfig(n_categories=3), seed=0,
                                dtype=np.float32)
    scene = toy_holdout_scenes[3].copy()
    scene.objects = scene.objects[:3]
    exact = tr.exhaustive_scene_nll(params, scene)  # 6 perms x 4 prefixes
    prep = tr.prepare_scene(scene, params.config)
    rng = np.random.default_rng(1)
    draws = [tr.draw_example(rng, 3, "permutation_invariant")
             for _ in range(50_000)]
    vals = []
    for k in range(0, len(draws), 1000):
        vec, _ = tr.batch_nll(params, [(prep, p, t) for p, t in draws[k:k + 1000]])
        vals.append(vec.data.astype(np.float64))
    vals = np.concatenate(vals)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    gap = abs(vals.mean() - exact)
    assert gap < 3 * se, f"MC mean {vals.mean():.6f} vs exact {exact:.6f}, se {se:.2g}"
    _report("criterion 4  Monte-Carlo objective",
            f"|{vals.mean():.5f} - {exact:.5f}| = {gap:.2e} < 3se = {3*se:.2e}")


def test_criterion_5_distribution_kernels():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        d = ds.mixture_from_raw(rng.standard_normal(30))
        lo = float(d.means.min() - 40 * d.scales.max())
        hi = float(d.means.max() + 40 * d.scales.max())
        integral, _ = scipy.integrate.quad(
            lambda x: math.exp(ds.logistic_mixture_log_prob(x, d)), lo, hi,
            points=list(d.means), limit=200)
        worst = max(worst, abs(integral - 1.0))
    assert worst < 1e-6

    d = ds.mixture_from_raw(np.random.default_rng(3).standard_normal(30))
    rng = np.random.default_rng(5)
    samples = np.array([ds.logistic_mixture_sample(d, rng) for _ in range(10_000)])
    stat = scipy.stats.kstest(samples, lambda x: ds.logistic_mixture_cdf(x, d))
    assert stat.pvalue > 0.01, f"KS pvalue {stat.pvalue}"
    _report("criterion 5  distribution kernels",
            f"max |integral-1| {worst:.2e}; KS p={stat.pvalue:.3f}")


def test_criterion_6_toy_learning(trained_toy, toy_holdout_scenes):
    params = trained_toy
    budget_used = params.metadata["train_wall_seconds"]
    assert budget_used < 900.0, f"training took {budget_used:.0f}s"
    assert params.metadata["train_iterations"] <= 5000

    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    generated = []
    truncated = 0
    for scene in toy_holdout_scenes:
        res = inf.synthesize(scene.floor_polygon, params, rng)
        generated.append(res.scene)
        truncated += res.truncated
    gen_seconds = time.perf_counter() - t0

    kl = ev.category_kl(generated, toy_holdout_scenes, 3)
    assert kl < 0.05, f"category KL {kl:.4f}"

    with_table = ok_chairs = inside = total = 0
    for s in generated:
        if s.objects:
            locs = np.array([o.location for o in s.objects])
            total += len(s.objects)
            inside += int(sc.points_in_polygon(locs[:, 0], locs[:, 2],
                                               s.floor_polygon).sum())
        tables = [o for o in s.objects if o.category == 0]
        if tables:
            with_table += 1
            t = tables[0]
            near = [o for o in s.objects if o.category == 1 and
                    math.hypot(o.location[0] - t.location[0],
                               o.location[2] - t.location[2]) <= 1.2]
            ok_chairs += len(near) >= 2
    chair_rate = ok_chairs / max(1, with_table)
    inside_rate = inside / max(1, total)

    assert truncated == 0, f"{truncated}/500 generations hit the cap"
    assert chair_rate >= 0.90, f"chairs-near-table rate {chair_rate:.1%}"
    assert inside_rate >= 0.99, f"centroids-inside rate {inside_rate:.2%}"
    _report("criterion 6  toy learning",
            f"KL {kl:.4f}; chairs {chair_rate:.1%}; inside {inside_rate:.2%}; "
            f"0 truncated; train {budget_used:.0f}s + gen {gen_seconds:.0f}s")


def test_criterion_7_anomaly_pipeline(trained_toy, toy_holdout_scenes):
    params = trained_toy
    rng = np.random.default_rng(7)
    flagged = improved = 0
    trials = 200
    for i in range(trials):
        scene = toy_holdout_scenes[i % len(toy_holdout_scenes)].copy()
        j = int(rng.integers(0, len(scene.objects)))
        scene.objects[j].location = scene.objects[j].location + \
            np.array([10.0, 0.0, 10.0])
        _, report = inf.detect_and_correct(scene, params, rng)
        if report.flagged == [j]:
            flagged += 1
            rec = report.corrections[0]
            improved += rec.new_log_likelihood > rec.old_log_likelihood
    flag_rate = flagged / trials
    improve_rate = improved / max(1, flagged)
    assert flag_rate >= 0.80, f"flag rate {flag_rate:.1%}"
    assert improve_rate >= 0.95, f"improvement rate {improve_rate:.1%}"
    _report("criterion 7  anomaly pipeline",
            f"flagged {flag_rate:.1%}, improved {improve_rate:.1%} "
            f"({trials} planted outliers)")


def test_criterion_8_suggestion_contract(trained_toy, toy_holdout_scenes):
    params = trained_toy
    rng = np.random.default_rng(11)
    accepted = violations = 0
    for i in range(1000):
        scene = toy_holdout_scenes[i % len(toy_holdout_scenes)].copy()
        scene.objects = scene.objects[:1]
        lo = scene.floor_polygon.min(axis=0)
        hi = scene.floor_polygon.max(axis=0)
        box = np.array([[lo[0], hi[0]], [0.0, 3.0], [lo[1], hi[1]]])
        out = inf.suggest(scene, box, params, rng)
        if out is not None:
            accepted += 1
            ok = np.all((box[:, 0] <= out.location)
                        & (out.location <= box[:, 1]))
            violations += not ok
    assert violations == 0, f"{violations} accepted suggestions out of box"
    assert accepted > 0

    rng = np.random.default_rng(9)
    nothing = 0
    for i in range(100):
        scene = toy_holdout_scenes[i]
        t = next(o for o in scene.objects if o.category == 0)
        box = np.array([[t.location[0] - 0.1, t.location[0] + 0.1],
                        [0.0, 1.2],
                        [t.location[2] - 0.1, t.location[2] + 0.1]])
        nothing += inf.suggest(scene, box, params, rng) is None
    assert nothing >= 70, f"only {nothing}/100 occluded boxes gave Nothing"
    _report("criterion 8  suggestion contract",
            f"{accepted}/1000 accepted all in box; occluded Nothing "
            f"{nothing}/100")


def test_criterion_9_checkpoint_and_cli_determinism(trained_toy,
                                                    trained_ckpt_path,
                                                    tmp_path):
    params = trained_toy
    # bit-exact round trip
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    md.save_checkpoint(params, p1)
    loaded = md.load_checkpoint(p1)
    for name, tensor in params.tensors.items():
        np.testing.assert_array_equal(tensor.data,
                                      loaded.tensors[name].data)
    md.save_checkpoint(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()

    floor = tmp_path / "floor.json"
    floor.write_text(json.dumps({"floor_polygon":
                                 [[-1.8, -1.8], [1.8, -1.8],
                                  [1.8, 1.8], [-1.8, 1.8]]}))
    outs = []
    for name in ("s1.json", "s2.json"):
        out = tmp_path / name
        rc = cli.main(["synthesize", "--ckpt", str(trained_ckpt_path),
                       "--floor", str(floor), "--seed", "123",
                       "--out", str(out)])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    scene = sc.scene_from_json(json.loads(outs[0]))
    assert scene.objects
    _report("criterion 9  checkpoint + CLI determinism",
            f"round trip bit-exact; seeded synthesis byte-identical "
            f"({len(scene.objects)} objects)")
