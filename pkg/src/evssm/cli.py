"""Single command-line entry point for the library's tools.

Exit codes: 0 success, 1 usage error, 2 runtime error. Subcommands only write
to paths given via --out; everything else goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import events as ev
from . import regfreq, ssm, trainer
from .discretize import discretize_ssm
from .hippo import ContinuousDiagSSM, init_ssm, legs_matrix, legs_normal
from .numerics import fft_convolve, log_grid
from .regfreq import H2Config, h2_tail_norm
from .scan import scan_parallel, scan_sequential
from .ssm import BandlimitConfig
from .trainer import ToyTask, TrainConfig, duty_trainer_preset


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract here is 1 for usage errors
    def error(self, message):
        raise UsageError(message)


class ConfigError(ValueError):
    pass


def _cfg_get(cfg: dict, path: str, typ, default=None, required=False):
    cur = cfg
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required:
                raise ConfigError(f"config field '{path}' is required")
            return default
        cur = cur[part]
    if typ is float and isinstance(cur, int):
        cur = float(cur)
    if not isinstance(cur, typ):
        raise ConfigError(f"config field '{path}': expected {typ.__name__}, got {type(cur).__name__}")
    return cur


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def system_from_config(cfg: dict) -> ContinuousDiagSSM:
    """Build a ContinuousDiagSSM from either an explicit system block or init params."""
    if "system" in cfg:
        sy = cfg["system"]
        for key in ("lambda_re", "lambda_im", "b_re", "c_re", "log_delta"):
            if key not in sy:
                raise ConfigError(f"config field 'system.{key}' is required")
        lam = np.asarray(sy["lambda_re"], dtype=np.float64) + 1j * np.asarray(sy["lambda_im"], dtype=np.float64)
        b = np.asarray(sy["b_re"], dtype=np.float64) + 1j * np.asarray(sy.get("b_im", np.zeros_like(sy["b_re"])), dtype=np.float64)
        c = np.asarray(sy["c_re"], dtype=np.float64) + 1j * np.asarray(sy.get("c_im", np.zeros_like(sy["c_re"])), dtype=np.float64)
        d = np.asarray(sy.get("d", np.zeros(c.shape[0])), dtype=np.float64)
        log_delta = np.asarray(sy["log_delta"], dtype=np.float64)
        return ContinuousDiagSSM(lam=lam, b_tilde=b, c_tilde=c, d=d, log_delta=log_delta)
    return init_ssm(
        p=_cfg_get(cfg, "ssm.p", int, 32),
        h=_cfg_get(cfg, "ssm.h", int, 16),
        j=_cfg_get(cfg, "ssm.j", int, 1),
        seed=_cfg_get(cfg, "ssm.seed", int, 0),
        delta_min=_cfg_get(cfg, "ssm.delta_min", float, 0.001),
        delta_max=_cfg_get(cfg, "ssm.delta_max", float, 0.1),
    )


def bandlimit_from_config(cfg: dict) -> BandlimitConfig | None:
    if "bandlimit" not in cfg:
        return None
    return BandlimitConfig(
        alpha=_cfg_get(cfg, "bandlimit.alpha", float, required=True),
        enabled=_cfg_get(cfg, "bandlimit.enabled", bool, True),
    )


def h2_from_config(cfg: dict, lam=None) -> H2Config | None:
    if "h2" not in cfg:
        return None
    omega_max = _cfg_get(cfg, "h2.omega_max", float, 0.0)
    if omega_max <= 0.0:
        if lam is None:
            raise ConfigError("config field 'h2.omega_max' is required without a system")
        omega_max = regfreq.default_omega_max(lam)
    return H2Config(
        omega_min=_cfg_get(cfg, "h2.omega_min", float, required=True),
        omega_max=omega_max,
        n_points=_cfg_get(cfg, "h2.n_points", int, 4096),
        weight=_cfg_get(cfg, "h2.weight", float, 1e-2),
        squared=_cfg_get(cfg, "h2.squared", bool, True),
    )


def _cmd_hippo_dump(args) -> int:
    legs = legs_matrix(args.n)
    normal = legs_normal(args.n)
    if args.format == "json":
        payload = json.dumps(
            {
                "a_legs": legs.a.tolist(),
                "b_legs": legs.b.tolist(),
                "a_normal": normal.a_normal.tolist(),
                "p": normal.p.tolist(),
            },
            indent=2,
        )
    else:
        lines = ["# a_legs"]
        lines += [",".join(f"{v:.12g}" for v in row) for row in legs.a]
        lines.append("# b_legs")
        lines.append(",".join(f"{v:.12g}" for v in legs.b))
        lines.append("# a_normal")
        lines += [",".join(f"{v:.12g}" for v in row) for row in normal.a_normal]
        lines.append("# p")
        lines.append(",".join(f"{v:.12g}" for v in normal.p))
        payload = "\n".join(lines)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    return 0


def _cmd_kernel(args) -> int:
    cfg = load_config(args.config)
    system = system_from_config(cfg)
    bl = bandlimit_from_config(cfg)
    kernel = ssm.materialize_kernel(system, args.len, rate=args.rate, bandlimit=bl)
    m, u = kernel.shape[1], kernel.shape[2]
    header = "lag," + ",".join(f"y{i}_u{j}" for i in range(m) for j in range(u))
    rows = [header]
    for lag in range(kernel.shape[0]):
        rows.append(f"{lag}," + ",".join(f"{v:.10g}" for v in kernel[lag].reshape(-1)))
    text = "\n".join(rows) + "\n"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"wrote {kernel.shape[0]} lags x {m * u} channel pairs to {args.out}")
    return 0


def _cmd_scan_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    a = np.exp(-rng.uniform(0.01, 0.2, (args.len, args.states))) * np.exp(
        1j * rng.uniform(-0.5, 0.5, (args.len, args.states))
    )
    bu = (rng.standard_normal((args.len, args.states)) + 1j * rng.standard_normal((args.len, args.states))).astype(
        np.complex128
    )
    print("impl,threads,len,states,seconds,elems_per_sec")
    t0 = time.perf_counter()
    seq = scan_sequential(a, bu)
    t_seq = time.perf_counter() - t0
    print(f"sequential,1,{args.len},{args.states},{t_seq:.6f},{args.len * args.states / t_seq:.3e}")
    for threads in args.threads:
        t0 = time.perf_counter()
        par = scan_parallel(a, bu, threads=threads, min_parallel_len=1024)
        t_par = time.perf_counter() - t0
        err = np.max(np.abs(par - seq)) / max(np.max(np.abs(seq)), 1e-300)
        print(f"parallel,{threads},{args.len},{args.states},{t_par:.6f},{args.len * args.states / t_par:.3e}")
        if err > 1e-10:
            print(f"warning: parallel/sequential mismatch {err:.2e}", file=sys.stderr)
    return 0


def _cmd_h2(args) -> int:
    cfg = load_config(args.config)
    system = system_from_config(cfg)
    omega_min = args.omega_min if args.omega_min is not None else _cfg_get(cfg, "h2.omega_min", float, 1.0)
    omega_max = args.omega_max if args.omega_max is not None else _cfg_get(
        cfg, "h2.omega_max", float, regfreq.default_omega_max(system.lam)
    )
    n = args.n if args.n is not None else _cfg_get(cfg, "h2.n_points", int, 4096)
    h2cfg = H2Config(omega_min=omega_min, omega_max=omega_max, n_points=n)
    norm = h2_tail_norm(system, h2cfg)
    print(f"h2_tail_norm {norm:.8f}")
    if args.out:
        grid = log_grid(omega_min, omega_max, n)
        gsq = regfreq.frequency_response_sq(system, grid)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("omega,frobenius_sq\n")
            for w, v in zip(grid, gsq):
                fh.write(f"{w:.10g},{v:.10g}\n")
    return 0


def _cmd_events_synth(args) -> int:
    field, times = ev.make_scene(args.scene, steps=args.steps)
    stream = ev.synthesize_events(field, times, args.threshold)
    payload = ev.serialize_events(stream, fmt=args.format)
    with open(args.out, "wb") as fh:
        fh.write(payload)
    print(f"scene '{args.scene}': {len(stream)} events, sensor {stream.width}x{stream.height}, wrote {args.out}")
    return 0


def _cmd_events_bin(args) -> int:
    with open(args.infile, "rb") as fh:
        data = fh.read()
    stream = ev.parse_events(data, args.format, args.width, args.height, polarity_zero_one=args.polarity_zero_one)
    tensors = ev.bin_events(stream, window_us=args.window_us, t_bins=args.bins)
    ev.save_binned(args.out, tensors)
    total = sum(int(t.counts.sum()) for t in tensors)
    print(f"{len(stream)} events -> {len(tensors)} windows ({total} counted), wrote {args.out}")
    return 0


def _cmd_events_filter(args) -> int:
    boxes = []
    with open(args.infile, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("x,"):
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ev.EventFormatError(f"line {lineno}: expected x,y,w,h,cls")
            boxes.append(ev.BBox(float(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]), int(parts[4])))
    if args.profile == "custom":
        if args.min_side is None or args.min_diag is None:
            raise UsageError("--profile custom requires --min-side and --min-diag")
        profile = ev.FilterProfile(min_side=args.min_side, min_diag=args.min_diag)
    else:
        profile = args.profile
    kept = ev.filter_bboxes(boxes, profile)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("x,y,w,h,cls\n")
        for b in kept:
            fh.write(f"{b.x:g},{b.y:g},{b.w:g},{b.h:g},{b.cls}\n")
    print(f"kept {len(kept)} of {len(boxes)} boxes")
    return 0


def _task_from_config(cfg: dict, kind: str) -> ToyTask:
    return ToyTask(
        kind=kind,
        base_rate_hz=_cfg_get(cfg, "task.base_rate_hz", float, 100.0),
        seq_len=_cfg_get(cfg, "task.seq_len", int, 256),
        n_classes=_cfg_get(cfg, "task.n_classes", int, 3),
        noise_std=_cfg_get(cfg, "task.noise_std", float, 0.1),
        seed=_cfg_get(cfg, "task.seed", int, 0),
    )


def _train_config_from(cfg: dict, lam=None) -> TrainConfig:
    base = duty_trainer_preset()
    return TrainConfig(
        batch=_cfg_get(cfg, "trainer.batch", int, base.batch),
        mixed_fraction=_cfg_get(cfg, "trainer.mixed_fraction", float, base.mixed_fraction),
        lr=_cfg_get(cfg, "trainer.lr", float, base.lr),
        steps=_cfg_get(cfg, "trainer.steps", int, base.steps),
        h2=h2_from_config(cfg, lam),
        bandlimit=bandlimit_from_config(cfg),
        seed=_cfg_get(cfg, "trainer.seed", int, 0),
        state_size=_cfg_get(cfg, "ssm.p", int, base.state_size),
        width=_cfg_get(cfg, "ssm.h", int, base.width),
        blocks=_cfg_get(cfg, "ssm.j", int, base.blocks),
        n_layers=_cfg_get(cfg, "trainer.n_layers", int, base.n_layers),
        tbptt_chunks=_cfg_get(cfg, "trainer.tbptt_chunks", int, base.tbptt_chunks),
        rule=_cfg_get(cfg, "discretization", str, "bilinear"),
        n_train=_cfg_get(cfg, "trainer.n_train", int, base.n_train),
        delta_min=_cfg_get(cfg, "ssm.delta_min", float, base.delta_min),
        delta_max=_cfg_get(cfg, "ssm.delta_max", float, base.delta_max),
    )


_TASK_KINDS = {"duty": "duty-cycle-classification", "smooth": "smoothed-target-regression"}


def _cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    task = _task_from_config(cfg, _TASK_KINDS[args.task])
    tcfg = _train_config_from(cfg)
    result = trainer.train(args.model, task, tcfg)
    trainer.save_model(args.out, result)
    print(f"trained {args.model} for {tcfg.steps} steps, final loss {result.loss_curve[-1]:.4f}, wrote {args.out}")
    return 0


def _cmd_eval_sweep(args) -> int:
    result = trainer.load_model(args.model)
    multipliers = [float(r) for r in args.rates.split(",")]
    deploy = [result.task.base_rate_hz * m for m in multipliers]
    report = trainer.eval_frequency_sweep(result, deploy, n_eval=args.n_eval)
    text = report.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    print(f"performance_drop {report.performance_drop:.6f}")
    return 0


def _selftest_suites():
    import numpy as np

    from .hippo import diagonalize_normal

    def nplr():
        for n in (1, 2, 3, 8, 24):
            legs = legs_matrix(n)
            normal = legs_normal(n)
            resid = np.abs(legs.a - (normal.a_normal - np.outer(normal.p, normal.p))).max()
            if resid > 1e-12:
                return f"residual {resid:.2e} at n={n}"
        return None

    def spectrum():
        for n in (2, 4, 16):
            lam, _ = diagonalize_normal(legs_normal(n))
            dev = np.abs(lam.real + 0.5).max()
            if dev > 1e-9:
                return f"Re(lam) off -1/2 by {dev:.2e} at n={n}"
        return None

    def scan_oracle():
        rng = np.random.default_rng(7)
        for length in (1, 2, 5, 33, 257):
            a = rng.standard_normal((length, 4)) * 0.4 + 1j * rng.standard_normal((length, 4)) * 0.4
            bu = rng.standard_normal((length, 4)) + 1j * rng.standard_normal((length, 4))
            seq = scan_sequential(a, bu)
            par = scan_parallel(a, bu)
            err = np.max(np.abs(par - seq)) / max(np.max(np.abs(seq)), 1e-300)
            if err > 1e-12:
                return f"rel err {err:.2e} at L={length}"
        return None

    def duality():
        system = init_ssm(8, 3, seed=11)
        rng = np.random.default_rng(3)
        u = rng.standard_normal((96, 3))
        rec = ssm.apply_recurrent(system, u).y
        conv = ssm.apply_convolutional(system, u)
        err = np.max(np.abs(rec - conv)) / max(np.max(np.abs(rec)), 1e-300)
        return None if err <= 1e-8 else f"rel err {err:.2e}"

    def h2_closed_form():
        scalar = ContinuousDiagSSM(
            lam=np.array([-1.0 + 0j]),
            b_tilde=np.array([[1.0 + 0j]]),
            c_tilde=np.array([[1.0 + 0j]]),
            d=np.zeros(1),
            log_delta=np.log(np.array([0.01])),
        )
        val = h2_tail_norm(scalar, H2Config(omega_min=1.0, omega_max=1e6, n_points=200_000))
        return None if abs(val - 0.5) < 1e-3 else f"got {val:.6f}, want 0.5"

    return [
        ("nplr_identity", nplr),
        ("hippo_spectrum", spectrum),
        ("scan_oracle", scan_oracle),
        ("conv_recurrence_duality", duality),
        ("h2_closed_form", h2_closed_form),
    ]


def _cmd_selftest(_args) -> int:
    failures = 0
    for name, fn in _selftest_suites():
        msg = fn()
        if msg is None:
            print(f"PASS {name}")
        else:
            print(f"FAIL {name}: {msg}")
            failures += 1
    return 0 if failures == 0 else 2


def build_parser() -> _Parser:
    parser = _Parser(prog="evssm", description=__doc__)
    parser.add_argument("--threads", type=int, default=None, help="cap internal parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    p_hippo = sub.add_parser("hippo", help="HiPPO matrix tools")
    hippo_sub = p_hippo.add_subparsers(dest="subcommand", required=True)
    p_dump = hippo_sub.add_parser("dump", help="emit HiPPO matrices for inspection")
    p_dump.add_argument("--n", type=int, required=True)
    p_dump.add_argument("--format", choices=("json", "csv"), default="json")
    p_dump.add_argument("--out", default=None)
    p_dump.set_defaults(func=_cmd_hippo_dump)

    p_kernel = sub.add_parser("kernel", help="dump the materialized convolution kernel as CSV")
    p_kernel.add_argument("--config", required=True)
    p_kernel.add_argument("--len", type=int, required=True)
    p_kernel.add_argument("--rate", type=float, default=1.0)
    p_kernel.add_argument("--out", required=True)
    p_kernel.set_defaults(func=_cmd_kernel)

    p_scan = sub.add_parser("scan", help="scan tools")
    scan_sub = p_scan.add_subparsers(dest="subcommand", required=True)
    p_bench = scan_sub.add_parser("bench", help="sequential vs parallel scan throughput (CSV)")
    p_bench.add_argument("--len", type=int, default=1 << 16)
    p_bench.add_argument("--states", type=int, default=32)
    p_bench.add_argument("--threads", type=int, nargs="+", default=[1, 4, 8])
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=_cmd_scan_bench)

    p_h2 = sub.add_parser("h2", help="print the H2 tail norm of a configured system")
    p_h2.add_argument("--config", required=True)
    p_h2.add_argument("--omega-min", type=float, default=None)
    p_h2.add_argument("--omega-max", type=float, default=None)
    p_h2.add_argument("--n", type=int, default=None)
    p_h2.add_argument("--out", default=None, help="CSV of ||G(jw)||_F^2 samples")
    p_h2.set_defaults(func=_cmd_h2)

    p_events = sub.add_parser("events", help="event-camera tools")
    ev_sub = p_events.add_subparsers(dest="subcommand", required=True)
    p_synth = ev_sub.add_parser("synth", help="synthesize events from an analytic scene")
    p_synth.add_argument("--scene", choices=("ramp", "blink", "moving-bar"), required=True)
    p_synth.add_argument("--threshold", type=float, default=0.3)
    p_synth.add_argument("--steps", type=int, default=None)
    p_synth.add_argument("--format", choices=("binary", "csv"), default="binary")
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=_cmd_events_synth)
    p_bin = ev_sub.add_parser("bin", help="bin an event file into stacked histograms")
    p_bin.add_argument("--in", dest="infile", required=True)
    p_bin.add_argument("--format", choices=("binary", "csv"), default="binary")
    p_bin.add_argument("--width", type=int, required=True)
    p_bin.add_argument("--height", type=int, required=True)
    p_bin.add_argument("--window-us", type=int, default=50_000)
    p_bin.add_argument("--bins", type=int, default=10)
    p_bin.add_argument("--polarity-zero-one", action="store_true")
    p_bin.add_argument("--out", required=True)
    p_bin.set_defaults(func=_cmd_events_bin)
    p_filter = ev_sub.add_parser("filter", help="apply dataset bbox filter rules")
    p_filter.add_argument("--in", dest="infile", required=True)
    p_filter.add_argument("--profile", choices=("gen1", "mpx1", "custom"), default="gen1")
    p_filter.add_argument("--min-side", type=float, default=None)
    p_filter.add_argument("--min-diag", type=float, default=None)
    p_filter.add_argument("--out", required=True)
    p_filter.set_defaults(func=_cmd_events_filter)

    p_train = sub.add_parser("train", help="train a toy model")
    p_train.add_argument("--task", choices=tuple(_TASK_KINDS), required=True)
    p_train.add_argument("--model", choices=("ssm", "rnn"), required=True)
    p_train.add_argument("--config", default=None)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluation tools")
    eval_sub = p_eval.add_subparsers(dest="subcommand", required=True)
    p_sweep = eval_sub.add_parser("sweep", help="frequency sweep of a trained model")
    p_sweep.add_argument("--model", required=True)
    p_sweep.add_argument("--rates", default="1,2,4", help="deploy-rate multipliers of the base rate")
    p_sweep.add_argument("--n-eval", type=int, default=60)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=_cmd_eval_sweep)

    p_self = sub.add_parser("selftest", help="run the built-in oracle suites")
    p_self.set_defaults(func=_cmd_selftest)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
