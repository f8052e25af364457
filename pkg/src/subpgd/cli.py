"""Command line entry points: train, attack, sweep, verify, plot.

Each run takes one JSON config file plus optional --set dotted overrides,
writes its artifacts under out_dir, and drops a manifest JSON recording the
resolved config, seeds, package version, and wall-clock time. Diagnostics go
to stderr; result data goes to files (attack also prints its trace, which is
the point of that subcommand).
"""

import argparse
import json
import math
import os
import sys
import time

DATA_DIR_ENV = "SUBPGD_DATA_DIR"


def _fail(msg):
    print(f"error: {msg}", file=sys.stderr)
    raise SystemExit(2)


def _say(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# config plumbing

def _load_config(path, overrides):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        _fail(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        _fail(f"config is not valid JSON: {path}: {e}")
    if not isinstance(cfg, dict):
        _fail("config root must be a JSON object")
    for item in overrides or []:
        if "=" not in item:
            _fail(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                _fail(f"--set {key}: {part} is not an object")
        node[parts[-1]] = value
    return cfg


def _section(cfg, name, required_keys=(), optional_keys=(), required=True):
    if name not in cfg:
        if required:
            _fail(f"config is missing the {name!r} section")
        return None
    sec = cfg[name]
    if not isinstance(sec, dict):
        _fail(f"config section {name!r} must be an object")
    missing = [k for k in required_keys if k not in sec]
    unknown = [k for k in sec if k not in set(required_keys) | set(optional_keys)]
    if missing:
        _fail(f"config section {name!r} is missing keys: {', '.join(missing)}")
    if unknown:
        _fail(f"config section {name!r} has unknown keys: {', '.join(unknown)}")
    return sec


def _check_root_keys(cfg, allowed):
    unknown = [k for k in cfg if k not in allowed]
    if unknown:
        _fail(f"config has unknown top-level keys: {', '.join(unknown)}")


def _apply_parallel(cfg):
    par = cfg.get("parallel")
    if par is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(int(par))


def _out_dir(cfg):
    out = cfg.get("out_dir", "results")
    os.makedirs(out, exist_ok=True)
    return out


def _manifest(path, command, cfg, outputs, started, extra=None):
    from . import __version__
    doc = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "outputs": sorted(outputs),
        "wall_clock_s": round(time.perf_counter() - started, 3),
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
    return path


def _load_dataset(sec):
    from .models import load_idx, synth_gaussian_dataset
    kind = sec.get("kind")
    if kind == "synthetic":
        return synth_gaussian_dataset(
            n=int(sec["n"]), per_class=int(sec["per_class"]),
            separation=float(sec["separation"]), seed=int(sec.get("seed", 0)),
            noise_sigma=float(sec.get("noise_sigma", 0.05)))
    if kind == "mnist":
        base = sec.get("dir") or os.environ.get(DATA_DIR_ENV)
        if not base:
            _fail(f"mnist dataset needs a 'dir' key or {DATA_DIR_ENV} set "
                  "(run scripts/fetch_mnist.py first)")
        split = sec.get("split", "train")
        if split not in ("train", "val"):
            _fail(f"mnist split must be train or val, got {split!r}")
        images = os.path.join(base, f"{split}-images-idx3-ubyte")
        labels = os.path.join(base, f"{split}-labels-idx1-ubyte")
        for p in (images, labels):
            if not os.path.exists(p):
                _fail(f"dataset file missing: {p} (run scripts/fetch_mnist.py)")
        return load_idx(images, labels)
    _fail(f"unknown dataset kind {kind!r}")


_DATASET_KEYS = dict(required_keys=("kind",),
                     optional_keys=("n", "per_class", "separation", "seed",
                                    "noise_sigma", "dir", "split"))


def _build_attack_config(sec, defaults_seed=0):
    from .attack import AttackConfig
    from .geometry import NormSpec
    return AttackConfig(
        norm=NormSpec.parse(sec.get("p", "inf")),
        epsilon=float(sec["epsilon"]),
        steps=int(sec.get("steps", 16)),
        step_rule=sec.get("step_rule", "normalized"),
        step_multiplier=float(sec.get("step_multiplier", 2.0)),
        step_size=sec.get("step_size"),
        box_clip=bool(sec.get("box_clip", True)),
        projection_mode=sec.get("projection_mode", "radial"),
        record_trace=True,
        seed=int(sec.get("seed", defaults_seed)))


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args):
    started = time.perf_counter()
    cfg = _load_config(args.config, args.set)
    _check_root_keys(cfg, {"parallel", "out_dir", "dataset", "val_dataset",
                           "model", "train"})
    _apply_parallel(cfg)
    from .models import (LinearClassifier, MlpClassifier, TrainConfig,
                         save_model, train_sgd)
    import numpy as np
    data_sec = _section(cfg, "dataset", **_DATASET_KEYS)
    val_sec = _section(cfg, "val_dataset", required=False, **_DATASET_KEYS)
    model_sec = _section(cfg, "model", required_keys=("kind",),
                         optional_keys=("hidden", "seed"))
    train_sec = _section(cfg, "train", optional_keys=(
        "lr", "momentum", "batch_size", "epochs", "weight_decay", "lr_drop",
        "plateau_patience", "plateau_min_gain", "seed", "val_fraction"))

    data = _load_dataset(data_sec)
    val = _load_dataset(val_sec) if val_sec else None
    frac = train_sec.get("val_fraction")
    if val is None and frac:
        from .seeding import derive_rng
        k = int(len(data) * float(frac))
        order = derive_rng(int(train_sec.get("seed", 0)), 777).permutation(len(data))
        val, data = data.subset(order[:k]), data.subset(order[k:])

    kind = model_sec["kind"]
    if kind == "linear":
        if data.num_classes != 2:
            _fail("linear model is binary; dataset has more classes")
        model = LinearClassifier(w=np.zeros(data.n), b=0.0)
    elif kind == "mlp":
        hidden = [int(h) for h in model_sec.get("hidden", [256, 256])]
        model = MlpClassifier.init([data.n] + hidden + [data.num_classes],
                                   seed=int(model_sec.get("seed", 0)))
    else:
        _fail(f"unknown model kind {kind!r}")

    tc = TrainConfig(**{k: v for k, v in train_sec.items() if k != "val_fraction"})
    _say(f"training {kind} on {len(data)} points"
         + (f" (val {len(val)})" if val is not None else ""))
    result = train_sgd(model, data, val, tc)
    out = _out_dir(cfg)
    ckpt = os.path.join(out, "model.npz")
    save_model(model, ckpt)
    _say(f"best accuracy {result.best_val_acc:.4f} -> {ckpt}")
    manifest = _manifest(os.path.join(out, "train-manifest.json"), "train", cfg,
                         [ckpt], started,
                         extra={"best_accuracy": result.best_val_acc,
                                "final_accuracy": result.final_val_acc,
                                "epochs_run": result.epochs_run})
    _say(f"manifest -> {manifest}")
    return 0


def cmd_attack(args):
    started = time.perf_counter()
    cfg = _load_config(args.config, args.set)
    _check_root_keys(cfg, {"parallel", "out_dir", "dataset", "checkpoint", "attack"})
    _apply_parallel(cfg)
    from .attack import pgd_attack
    from .models import load_model
    from .seeding import derive_rng
    from .subspace import sample_basis_subset, sample_grassmannian
    data_sec = _section(cfg, "dataset", **_DATASET_KEYS)
    atk_sec = _section(cfg, "attack", required_keys=("epsilon", "d"),
                       optional_keys=("p", "steps", "step_rule", "step_multiplier",
                                      "step_size", "box_clip", "projection_mode",
                                      "index", "sampler", "seed"))
    ckpt = cfg.get("checkpoint") or _fail("config needs a 'checkpoint' path")
    model = load_model(ckpt)
    data = _load_dataset(data_sec)
    index = int(atk_sec.get("index", 0))
    if not (0 <= index < len(data)):
        _fail(f"attack.index {index} out of range for dataset of {len(data)}")
    acfg = _build_attack_config(atk_sec)
    d = int(atk_sec["d"])
    sampler_name = atk_sec.get("sampler", "basis")
    if sampler_name == "basis":
        sampler = sample_basis_subset
    elif sampler_name == "grassmannian":
        sampler = sample_grassmannian
        if acfg.norm.p != 2:
            _fail("grassmannian sampling requires p = 2")
    else:
        _fail(f"unknown sampler {sampler_name!r}")
    x, y = data.inputs[index], int(data.labels[index])
    V = sampler(data.n, d, derive_rng(acfg.seed, index))
    out = pgd_attack(model, x, y, V, acfg)
    print(f"# index={index} label={y} d={d} p={acfg.norm.label} "
          f"eps={acfg.epsilon:g} steps={acfg.steps}")
    print("step,loss,norm,support")
    for rec in out.trace:
        print(f"{rec.step},{rec.loss:.6g},{rec.norm:.6g},{rec.support}")
    print(f"# success={out.success} final_norm={out.norm:.6g}")
    outd = _out_dir(cfg)
    trace_path = os.path.join(outd, "attack-trace.csv")
    with open(trace_path, "w") as f:
        f.write("step,loss,norm,support\n")
        for rec in out.trace:
            f.write(f"{rec.step},{rec.loss!r},{rec.norm!r},{rec.support}\n")
    manifest = _manifest(os.path.join(outd, "attack-manifest.json"), "attack",
                         cfg, [trace_path], started,
                         extra={"success": out.success, "final_norm": out.norm,
                                "final_loss": out.loss})
    _say(f"trace -> {trace_path}")
    _say(f"manifest -> {manifest}")
    return 0


def cmd_sweep(args):
    started = time.perf_counter()
    cfg = _load_config(args.config, args.set)
    _check_root_keys(cfg, {"parallel", "out_dir", "dataset", "checkpoint", "sweep"})
    _apply_parallel(cfg)
    from .geometry import NormSpec
    from .models import load_model
    from .sweep import SweepConfig, log_grid, reparametrize, run_sweep, write_csv, write_svg
    data_sec = _section(cfg, "dataset", **_DATASET_KEYS)
    sw_sec = _section(cfg, "sweep", required_keys=("p", "eps", "d_grid"),
                      optional_keys=("sampler", "mode", "steps", "step_rule",
                                     "step_multiplier", "box_clip",
                                     "projection_mode", "subsample", "seed",
                                     "reparam"))
    ckpt = cfg.get("checkpoint") or _fail("config needs a 'checkpoint' path")
    model = load_model(ckpt)
    data = _load_dataset(data_sec)
    eps = sw_sec["eps"]
    if isinstance(eps, dict):
        extra = set(eps) - {"lo", "hi", "k"}
        if extra:
            _fail(f"sweep.eps has unknown keys: {', '.join(sorted(extra))}")
        eps_grid = tuple(log_grid(float(eps["lo"]), float(eps["hi"]), int(eps["k"])))
    else:
        eps_grid = tuple(float(e) for e in eps)
    try:
        scfg = SweepConfig(
            norm=NormSpec.parse(sw_sec["p"]), eps_grid=eps_grid,
            d_grid=tuple(int(d) for d in sw_sec["d_grid"]),
            sampler=sw_sec.get("sampler", "basis"),
            mode=sw_sec.get("mode", "pgd"), steps=int(sw_sec.get("steps", 16)),
            step_rule=sw_sec.get("step_rule", "normalized"),
            step_multiplier=float(sw_sec.get("step_multiplier", 2.0)),
            box_clip=bool(sw_sec.get("box_clip", True)),
            projection_mode=sw_sec.get("projection_mode", "radial"),
            subsample=sw_sec.get("subsample"),
            master_seed=int(sw_sec.get("seed", 0)))
        if scfg.d_grid[-1] > data.n:
            _fail(f"d grid reaches {scfg.d_grid[-1]} but inputs have "
                  f"dimension {data.n}")
        _say(f"sweep {scfg.mode} p={scfg.norm.label} over "
             f"{len(scfg.d_grid)}x{len(scfg.eps_grid)} cells, "
             f"{scfg.subsample or len(data)} points each")
        result = run_sweep(model, data, scfg)
    except ValueError as e:
        _fail(str(e))
    outd = _out_dir(cfg)
    tag = f"{scfg.mode}-p{scfg.norm.label}"
    outputs = []
    csv_path = os.path.join(outd, f"sweep-{tag}.csv")
    write_csv(result, csv_path)
    outputs.append(csv_path)
    modes = sw_sec.get("reparam", ["none", "power"])
    scores = {}
    for mode in modes:
        try:
            rep = reparametrize(result, mode)
        except ValueError as e:
            _say(f"reparam {mode!r} skipped: {e}")
            continue
        scores[mode] = rep.score
        svg_path = os.path.join(outd, f"sweep-{tag}-{mode}.svg")
        write_svg(rep, svg_path, ambient_dim=data.n,
                  title=f"p={scfg.norm.label} {scfg.mode}, reparam={mode}",
                  xlabel="eps" if mode == "none" else "rescaled eps")
        outputs.append(svg_path)
        _say(f"reparam {mode}: collapse score {rep.score:.4f}")
    manifest = _manifest(os.path.join(outd, f"sweep-{tag}-manifest.json"),
                         "sweep", cfg, outputs, started,
                         extra={"collapse_scores": scores,
                                "fingerprint": result.fingerprint})
    _say(f"artifacts -> {outd}")
    _say(f"manifest -> {manifest}")
    return 0


def cmd_plot(args):
    from .sweep import read_csv, write_svg
    table = read_csv(args.csv)
    write_svg(table.curves(), args.out, ambient_dim=args.ambient_dim,
              title=args.title, xlabel=args.xlabel)
    _say(f"svg -> {args.out}")
    return 0


def _verify_checks(suites):
    import numpy as np
    from .geometry import INF
    from .models import LinearClassifier
    from .seeding import derive_rng
    from .subspace import sample_basis_subset, sample_grassmannian
    from .theory import (halfnormal_quantile, margin_bruteforce,
                         margin_closed_form, normal_cdf, normal_quantile,
                         scaling_ratio_exact, scaling_ratio_mc)
    checks = []

    def add(name, observed, expected, tol):
        checks.append({"name": name, "observed": observed, "expected": expected,
                       "tol": tol, "pass": bool(abs(observed - expected) <= tol)})

    if "lemma1" in suites:
        rng = np.random.default_rng(100)
        worst = 0.0
        done = 0
        while done < 200:
            n = int(rng.integers(2, 9))
            d = int(rng.integers(1, min(3, n) + 1))
            w = rng.standard_normal(n)
            b = float(rng.standard_normal() * 0.2)
            x = rng.uniform(0.0, 1.0, n)
            V = sample_basis_subset(n, d, rng)
            for p in (1.0, 2.0, INF):
                closed = margin_closed_form(w, b, x, V, p).margin
                if not math.isfinite(closed) or closed < 1e-9:
                    continue
                brute = margin_bruteforce(w, b, x, V, p)
                worst = max(worst, abs(closed - brute) / closed)
            done += 1
        add("margin closed-form vs brute-force over 200 instances, "
            "worst relative deviation", worst, 0.0, 1e-2)
    if "scaling-exact" in suites:
        rng = np.random.default_rng(101)
        worst = 0.0
        for _ in range(5):
            for n in range(1, 9):
                w = rng.standard_normal(n)
                for d in range(1, n + 1):
                    for q in (1, 2):
                        worst = max(worst, abs(scaling_ratio_exact(w, d, q) - d / n))
        add("subset scaling ratio vs d/n, exact enumeration", worst, 0.0, 1e-12)
    if "scaling-mc" in suites:
        rng = np.random.default_rng(102)
        w = rng.standard_normal(64)
        for name, sampler, q in (("basis", sample_basis_subset, 1),
                                 ("grassmannian", sample_grassmannian, 2)):
            for d in (4, 16):
                est = scaling_ratio_mc(w, d, q, sampler, trials=2000, seed=103)
                add(f"monte-carlo scaling mean, {name} d={d} q={q}",
                    est.mean, d / 64, 0.05 * d / 64 + 3 * est.std_error)
    if "quantiles" in suites:
        add("normal quantile at 1 - 1/(3*224^2)",
            normal_quantile(1.0 - 1.0 / (3 * 224 ** 2)), 4.36, 0.01)
        worst = max(abs(normal_cdf(normal_quantile(u)) - u)
                    for u in np.linspace(1e-6, 1 - 1e-6, 201))
        add("quantile/cdf round trip, worst |Phi(Phi^-1(u)) - u|", worst, 0.0, 1e-9)
        add("half-normal median", halfnormal_quantile(0.5),
            0.6744897501960817, 1e-9)
    return checks


def cmd_verify(args):
    started = time.perf_counter()
    all_suites = ("lemma1", "scaling-exact", "scaling-mc", "quantiles")
    suites = all_suites if args.suite == "all" else (args.suite,)
    checks = _verify_checks(suites)
    report = {"suites": list(suites), "checks": checks,
              "all_pass": all(c["pass"] for c in checks),
              "wall_clock_s": round(time.perf_counter() - started, 3)}
    with open(args.out, "w") as f:
        json.dump(report, f, indent=2)
    for c in checks:
        status = "ok " if c["pass"] else "FAIL"
        _say(f"[{status}] {c['name']}: observed {c['observed']:.6g}, "
             f"expected {c['expected']:.6g} (tol {c['tol']:.2g})")
    _say(f"report -> {args.out}")
    return 0 if report["all_pass"] else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="subpgd",
        description="subspace-constrained PGD attacks and scaling sweeps")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("train", cmd_train), ("attack", cmd_attack),
                     ("sweep", cmd_sweep)):
        sp = subs.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config entry (dotted keys, JSON values)")
        sp.set_defaults(fn=fn)

    sp = subs.add_parser("verify", help="run built-in numerical self-checks")
    sp.add_argument("--suite", default="all",
                    choices=["all", "lemma1", "scaling-exact", "scaling-mc",
                             "quantiles"])
    sp.add_argument("--out", default="verify-report.json")
    sp.set_defaults(fn=cmd_verify)

    sp = subs.add_parser("plot", help="re-render an SVG from a sweep CSV")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--ambient-dim", type=int, default=None)
    sp.add_argument("--title", default="success rate vs budget")
    sp.add_argument("--xlabel", default="rescaled eps")
    sp.set_defaults(fn=cmd_plot)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, FloatingPointError) as e:
        _fail(str(e))


if __name__ == "__main__":
    raise SystemExit(main())
