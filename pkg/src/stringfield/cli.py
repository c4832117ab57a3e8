"""Command-line surface tying the library into reproducible runs.

Commands read a flat key=value config file (comments with #). Exit codes:
0 success or all checks passed, 1 usage or config error, 2 a verification
check failed, 3 a runtime error inside an otherwise valid run.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .core import (
    ExtendedPoint,
    PairBatch,
    Plate,
    PlateGeometry,
    PointCloud,
    StringParams,
    validate_geometry,
)
from .datasets import make_gaussian, make_swiss_roll, read_cloud, write_cloud
from .plans import PlanKind, pair_clouds, sample_pairs
from .sampling import ModelField, OracleField, transfer, write_traces
from .superpose import normalize_field, superpose_field
from .training import TrainConfig, load_model, save_model, train, write_loss_history
from . import verify as verify_mod

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    pass


class CheckFailure(RuntimeError):
    pass


_CONFIG_SCHEMA = {
    "D": int,
    "L": float,
    "sigma0": float,
    "d": float,
    "plan": str,
    "batch": int,
    "seed": int,
    "source": str,
    "target": str,
    "steps": int,
    "iters": int,
    "warmup": int,
    "lr": float,
    "hidden": str,
    "noise": str,
    "ema_decay": float,
    "traces": int,
    "verify_n": int,
    "loss_out": str,
}

_REQUIRED = ("D", "L", "sigma0", "d")


def parse_config(path) -> dict:
    cfg = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                cfg[key] = _CONFIG_SCHEMA[key](value)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: key {key!r} expects {_CONFIG_SCHEMA[key].__name__}, "
                    f"got {value!r}"
                ) from None
    return cfg


def require_keys(cfg, keys):
    for key in keys:
        if key not in cfg:
            raise ConfigError(f"missing required config key {key!r}")


def geometry_from(cfg):
    require_keys(cfg, _REQUIRED)
    geometry = PlateGeometry(data_dim=cfg["D"], gap=cfg["L"])
    params = StringParams(sigma0=cfg["sigma0"], d=cfg["d"])
    validate_geometry(geometry, params)
    return geometry, params


def plan_from(cfg):
    name = cfg.get("plan", "independent")
    try:
        return PlanKind(name)
    except ValueError:
        raise ConfigError(
            f"plan must be one of {[k.value for k in PlanKind]}, got {name!r}"
        ) from None


def _load_clouds(cfg, geometry, seed):
    """Clouds from the configured paths, or the synthetic 2D toy task."""
    if "source" in cfg and "target" in cfg:
        return read_cloud(cfg["source"], plate=Plate.SOURCE), read_cloud(
            cfg["target"], plate=Plate.TARGET
        )
    if geometry.data_dim != 2:
        raise ConfigError("source/target paths are required unless D=2 (synthetic toy task)")
    n = cfg.get("verify_n", 2048)
    return (
        make_gaussian(n, 2, seed=seed + 11, plate=Plate.SOURCE),
        make_swiss_roll(n, noise_sd=0.05, seed=seed + 12, plate=Plate.TARGET),
    )


def cmd_field_eval(args):
    cfg = parse_config(args.config)
    geometry, params = geometry_from(cfg)
    require_keys(cfg, ("batch",))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    try:
        coords = [float(tok) for tok in args.at.split(",")]
    except ValueError:
        raise ConfigError(f"--at expects comma-separated reals, got {args.at!r}") from None
    if len(coords) != geometry.data_dim + 1:
        raise ConfigError(
            f"--at expects {geometry.data_dim + 1} coordinates (x0..x{geometry.data_dim - 1},z), "
            f"got {len(coords)}"
        )
    source, target = _load_clouds(cfg, geometry, seed)
    batch = sample_pairs(source, target, cfg["batch"], plan_from(cfg), seed, geometry)
    point = ExtendedPoint(x=np.array(coords[:-1]), z=coords[-1])
    field = superpose_field(point, batch, params)
    unit = normalize_field(field)
    print(f"seed={seed}")
    print("components=" + ",".join(repr(v) for v in field.v))
    print(f"magnitude={field.norm()!r}")
    print("direction=" + ",".join(repr(v) for v in unit.v))
    if point.z < 0 or point.z > geometry.gap:
        print("note=caged (outside the plate gap, field is identically zero)")
    elif unit.degenerate:
        print("note=degenerate (field magnitude below the normalization floor)")
    return EXIT_OK


def cmd_train(args):
    cfg = parse_config(args.config)
    geometry, params = geometry_from(cfg)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    source, target = _load_clouds(cfg, geometry, seed)
    hidden = tuple(int(tok) for tok in cfg.get("hidden", "256,256,256").split(","))
    config = TrainConfig(
        geometry=geometry,
        params=params,
        batch=cfg.get("batch", 1024),
        learning_rate=cfg.get("lr", 2e-4),
        total_iterations=cfg.get("iters", 10_000),
        warmup_iterations=cfg.get("warmup", 5_000),
        plan=plan_from(cfg),
        noise_mode=cfg.get("noise", "none"),
        seed=seed,
        hidden=hidden,
        ema_decay=cfg.get("ema_decay", 0.99),
    )
    model, history = train(source, target, config)
    save_model(args.out, model, extra_header={"seed": seed, "gap": geometry.gap})
    loss_path = cfg.get("loss_out", args.out + ".loss.csv")
    write_loss_history(loss_path, history, seed=seed)
    print(f"checkpoint={args.out}")
    print(f"loss_history={loss_path}")
    print(f"final_loss={history[-1, 1]!r}")
    return EXIT_OK


def cmd_sample(args):
    cfg = parse_config(args.config)
    geometry, params = geometry_from(cfg)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    model, header = load_model(args.model)
    source = read_cloud(args.infile, plate=Plate.SOURCE)
    steps = args.steps if args.steps is not None else cfg.get("steps", 100)
    field = ModelField(model=model, gap=header.get("gap", geometry.gap))
    terminal, traces = transfer(source, field, steps, record_paths=False)
    write_cloud(args.out, terminal, seed=seed)
    bad = sum(1 for t in traces if t.status != "completed")
    print(f"out={args.out}")
    print(f"steps={steps}")
    print(f"flagged_traces={bad}")
    return EXIT_OK


def cmd_trace(args):
    cfg = parse_config(args.config)
    geometry, params = geometry_from(cfg)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    source = read_cloud(args.infile, plate=Plate.SOURCE)
    steps = args.steps if args.steps is not None else cfg.get("steps", 100)
    if args.model is not None:
        model, header = load_model(args.model)
        field = ModelField(model=model, gap=header.get("gap", geometry.gap))
    else:
        require_keys(cfg, ("batch",))
        src_cloud, tgt_cloud = _load_clouds(cfg, geometry, seed)
        batch = sample_pairs(src_cloud, tgt_cloud, cfg["batch"], plan_from(cfg), seed, geometry)
        field = OracleField(batch=batch, params=params)
    _, traces = transfer(source, field, steps, record_paths=True)
    write_traces(args.out, traces, seed=seed)
    print(f"out={args.out}")
    print(f"traces={len(traces)}")
    return EXIT_OK


def _verify_suite(names, cfg, geometry, params, seed):
    checks = []
    L = geometry.gap
    if "flux" in names:
        batch_sym = _single_pair(geometry)
        heights = [round(0.05 * i * L, 12) for i in range(1, 20)]
        report = verify_mod.flux_profile(batch_sym, params, heights)
        expected = 2.0 * np.pi if geometry.data_dim == 2 else np.sqrt(2.0 * np.pi)
        err = max(abs(v - expected * params.sigma0 ** 0) / expected for v in report.flux_values) \
            if geometry.data_dim == 2 else None
        passed = report.relative_spread <= 1e-3
        measured = {"relative_spread": report.relative_spread,
                    "flux_mean": float(np.mean(report.flux_values))}
        threshold = {"relative_spread": 1e-3}
        if geometry.data_dim == 2 and params.sigma0 == 1.0:
            measured["max_rel_err_vs_2pi"] = err
            threshold["max_rel_err_vs_2pi"] = 1e-3
            passed = passed and err <= 1e-3
        checks.append(verify_mod.CheckResult(
            name="flux", params={"planes": len(heights), "L": L, "d": params.d},
            measured=measured, threshold=threshold, passed=passed))
    if "caging" in names:
        checks.append(verify_mod.check_caging(params, geometry, fuzz_count=cfg.get("traces", 100_000),
                                              rng_seed=seed))
    if "straightness" in names:
        if params.d < L / 2:
            checks.append(verify_mod.check_straightness(_single_pair(geometry), params))
        else:
            checks.append(verify_mod.check_straightness(
                _single_pair(geometry), StringParams(sigma0=params.sigma0, d=0.45 * L)))
    if "transfer" in names:
        checks.append(_oracle_transfer_check(cfg, geometry, params, seed))
    if "efm-contrast" in names:
        traces = cfg.get("traces", 20_000)
        outcome = verify_mod.efm_coverage_experiment(traces=traces, rng_seed=seed)
        checks.append(verify_mod.CheckResult(
            name="efm-contrast",
            params=outcome["params"],
            measured={
                "forward_only_energy_distance": outcome["forward_only"]["energy_distance"],
                "full_map_energy_distance": outcome["full_map"]["energy_distance"],
            },
            threshold={"ordering": "forward_only > full_map"},
            passed=outcome["forward_worse"],
        ))
    return checks


def _single_pair(geometry):
    zero = np.zeros((1, geometry.data_dim))
    return PairBatch(source_x=zero, target_x=zero, geometry=geometry)


def _oracle_transfer_check(cfg, geometry, params, seed):
    n = cfg.get("verify_n", 2048)
    steps = cfg.get("steps", 1000)
    source = make_gaussian(n, 2, seed=seed + 1, plate=Plate.SOURCE)
    target_all = make_swiss_roll(2 * n, noise_sd=0.05, seed=seed + 2, plate=Plate.TARGET)
    train_target = PointCloud(points=target_all.points[:n], plate=Plate.TARGET)
    held_out = target_all.points[n:]
    batch = pair_clouds(source, train_target, PlanKind.MINIBATCH_OT, seed, geometry)
    field = OracleField(batch=batch, params=params)
    terminal, _ = transfer(source, field, steps, record_paths=False)
    measured = verify_mod.energy_distance(terminal.points, held_out)
    bar = 3.0 * verify_mod.same_law_threshold(target_all.points, n, n, reps=100, rng_seed=seed + 3)
    return verify_mod.CheckResult(
        name="oracle-transfer",
        params={"n": n, "steps": steps, "L": geometry.gap, "d": params.d},
        measured={"energy_distance": measured},
        threshold={"energy_distance": bar},
        passed=measured < bar,
    )


def cmd_verify(args):
    cfg = parse_config(args.config)
    geometry, params = geometry_from(cfg)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    all_names = ["flux", "caging", "straightness", "transfer", "efm-contrast"]
    names = all_names if args.suite == "all" else [args.suite]
    checks = _verify_suite(names, cfg, geometry, params, seed)
    verify_mod.write_report(args.out, checks, seed=seed)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: measured={c.measured} threshold={c.threshold}")
    print(f"report={args.out}")
    if not all(c.passed for c in checks):
        raise CheckFailure("one or more verification checks failed")
    return EXIT_OK


def cmd_compare_efm(args):
    cfg = parse_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    traces = cfg.get("traces", 20_000)
    outcome = verify_mod.efm_coverage_experiment(traces=traces, rng_seed=seed)
    check = verify_mod.CheckResult(
        name="efm-contrast",
        params=outcome["params"],
        measured={
            "forward_only_energy_distance": outcome["forward_only"]["energy_distance"],
            "full_map_energy_distance": outcome["full_map"]["energy_distance"],
            "forward_only_wrong_plane": outcome["forward_only"]["wrong_plane"],
            "full_map_escapes": outcome["full_map"]["escapes"],
        },
        threshold={"ordering": "forward_only > full_map"},
        passed=outcome["forward_worse"],
    )
    verify_mod.write_report(args.out, [check], seed=seed)
    print(f"forward_only={outcome['forward_only']['energy_distance']!r}")
    print(f"full_map={outcome['full_map']['energy_distance']!r}")
    print(f"report={args.out}")
    if not check.passed:
        raise CheckFailure("forward-only transfer did not come out worse")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="stringfield", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap for internal worker threads (informational; the "
                             "vectorized kernels run single-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field-eval", help="evaluate the superposed field at one point")
    p.add_argument("--config", required=True)
    p.add_argument("--at", required=True, help="comma-separated x0,..,z")
    p.set_defaults(func=cmd_field_eval)

    p = sub.add_parser("train", help="fit the field regressor")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="transfer a cloud with a trained model")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("trace", help="dump integration traces as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None, help="checkpoint; defaults to the oracle field")
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("verify", help="run a verification suite and write a JSON report")
    p.add_argument("--config", required=True)
    p.add_argument("--suite", required=True,
                   choices=["all", "flux", "caging", "straightness", "transfer", "efm-contrast"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare-efm", help="forward-only vs full-map electrostatic contrast")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare_efm)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit 3
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
