"""Command-line surface: train / eval / oracle / segment / serve / report.

Every command takes ``--config <path>`` plus any number of
``--set section.key=value`` overrides and is deterministic given the
config and its seeds (wall-clock fields excepted).

Exit codes: 0 success, 1 verification failure (oracle), 2 config error,
3 data or checkpoint error, 4 environment error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .checkpoint import CheckpointError, load_network, save_network
from .config import ConfigError, RunConfig, load_config
from .data import DataError, load_images, load_vectors, split, synth_blob_task
from .inference import (
    ClampSet,
    StateSpaceTooLarge,
    enumerate_posterior,
    gibbs_clamped,
    iou,
    marginal_to_gray,
    max_marginal_decide,
    mc_marginals,
)
from .learning import TrainConfig, evaluate_metric, train, write_metrics_csv
from .model import Network, require_valid
from .pnm import PnmError, read_pnm, write_pgm
from .propagation import forward_deterministic
from .rng import RngStream
from .units import sigmoid

__all__ = ["main"]


def _dataset(cfg: RunConfig):
    """(train_pairs, test_pairs, dataset) from the [data] section."""
    kind = cfg.get("data", "kind")
    if kind == "csv":
        data = load_vectors(cfg.get("data", "path"),
                            label_count=cfg.get("data", "label_count"),
                            header=cfg.get("data", "header"))
    elif kind == "images":
        data = load_images(cfg.get("data", "path"))
    elif kind == "blobs":
        data = synth_blob_task(cfg.get("data", "blob_count"),
                               cfg.get("data", "blob_height"),
                               cfg.get("data", "blob_width"),
                               cfg.get("data", "blob_seed"))
    else:
        raise ConfigError(f"[data] kind must be csv, images, or blobs, got {kind!r}")
    train_count = cfg.get("data", "train_count")
    if train_count > 0:
        tr, te = split(data, train_count, cfg.get("data", "split_seed"))
        return tr.pairs(), te.pairs(), data
    return data.pairs(), None, data


def _train_config(cfg: RunConfig, mode: str) -> TrainConfig:
    return TrainConfig(
        mode=mode,
        step_size=cfg.get("train", "step_size"),
        iterations=cfg.get("train", "iterations"),
        batch_size=cfg.get("train", "batch_size"),
        seed=cfg.get("train", "seed"),
        eval_period=cfg.get("train", "eval_period"),
        eval_samples=cfg.get("train", "eval_samples"),
        lb_samples=cfg.get("train", "lb_samples"),
        momentum=cfg.get("train", "momentum"),
        weight_decay=cfg.get("train", "weight_decay"),
        metric=cfg.get("train", "metric"),
    )


def _with_mode_suffix(name: str, mode: str) -> str:
    stem, ext = os.path.splitext(name)
    return f"{stem}.{mode}{ext}"


def _out(cfg: RunConfig, name: str) -> str:
    outdir = cfg.get("output", "dir")
    os.makedirs(outdir, exist_ok=True)
    return os.path.join(outdir, name)


def cmd_train(cfg: RunConfig) -> int:
    spec = cfg.network_spec()
    require_valid(spec)
    train_pairs, test_pairs, _ = _dataset(cfg)
    mode = cfg.get("train", "mode")
    modes = ("ebp", "bn") if mode == "paired" else (mode,)
    seed = cfg.get("train", "seed")
    scale = cfg.get("network", "init_scale")
    paired = len(modes) > 1

    csvs = {}
    for m in modes:
        net = Network.initialize(spec, RngStream(seed), scale=scale)
        tc = _train_config(cfg, m)
        rows = train(net, train_pairs, tc, RngStream(seed).substream(1),
                     test_data=test_pairs)
        ckpt_name = cfg.get("output", "checkpoint")
        metrics_name = cfg.get("output", "metrics")
        if paired:
            ckpt_name = _with_mode_suffix(ckpt_name, m)
            metrics_name = _with_mode_suffix(metrics_name, m)
        ckpt_path = _out(cfg, ckpt_name)
        metrics_path = _out(cfg, metrics_name)
        save_network(net, ckpt_path)
        if os.path.exists(metrics_path):
            os.remove(metrics_path)
        write_metrics_csv(metrics_path, rows)
        csvs[m] = metrics_path
        if rows:
            last = rows[-1]
            print(f"{m}: iter={last['iter']} train={last['train_metric']:.4f} "
                  f"test={last['test_metric']:.4f} checkpoint={ckpt_path}")
        else:
            print(f"{m}: 0 iterations, checkpoint={ckpt_path}")

    if cfg.get("output", "figures") and any(csvs.values()):
        from .report import plot_learning_curves

        fig_path = _out(cfg, "learning_curves.png")
        plot_learning_curves(csvs, fig_path, metric_name=cfg.get("train", "metric"))
        print(f"figure: {fig_path}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    mode = cfg.get("train", "mode")
    modes = ("ebp", "bn") if mode == "paired" else (mode,)
    train_pairs, test_pairs, _ = _dataset(cfg)
    metric = cfg.get("train", "metric")
    paired = len(modes) > 1
    for m in modes:
        name = cfg.get("output", "checkpoint")
        if paired:
            name = _with_mode_suffix(name, m)
        path = os.path.join(cfg.get("output", "dir"), name)
        net = load_network(path)
        rng = RngStream(cfg.get("inference", "seed"))
        tr = evaluate_metric(net, train_pairs, m, metric,
                             cfg.get("train", "eval_samples"), rng.substream(0))
        te = float("nan")
        if test_pairs:
            te = evaluate_metric(net, test_pairs, m, metric,
                                 cfg.get("train", "eval_samples"), rng.substream(1))
        print(f"{m}: train_{metric}={tr:.4f} test_{metric}={te:.4f} gap={tr - te:.4f}")
    return 0


def cmd_oracle(cfg: RunConfig) -> int:
    """Enumeration-versus-sampling verification suite on random tiny nets."""
    from .learning import bn_output_gradient
    from .model import Assignment, energy
    from .propagation import forward_sample
    import itertools
    import math

    o = cfg.values["oracle"]
    failures = 0

    def report(name: str, err: float, tol: float) -> None:
        nonlocal failures
        ok = err <= tol
        failures += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'} {name}: max_err={err:.3e} tol={tol:.0e}")

    for i in range(o["nets"]):
        from .model import Dense, LayerSpec, NetworkSpec
        from .units import SIGMOID

        spec = NetworkSpec(o["inputs"], (
            LayerSpec(SIGMOID, o["hidden"], Dense((0,))),
            LayerSpec(SIGMOID, o["hidden"], Dense((1,))),
            LayerSpec(SIGMOID, o["outputs"], Dense((2,))),
        ))
        net = Network.initialize(spec, RngStream(o["seed"] + i), scale=o["scale"])
        x = np.asarray(RngStream(o["seed"] + i).substream(1).uniform_range(-1.5, 1.5, o["inputs"]))
        table = enumerate_posterior(net, x)
        exact = table.output_marginals()

        report(f"net{i} normalization |sum-1|",
               abs(table.total_probability - 1.0), 1e-12)

        field = mc_marginals(net, x, o["samples"], RngStream(o["seed"] + 100 + i))
        report(f"net{i} sampler vs enumeration",
               float(np.abs(field.outputs - exact).max()), o["tol"])

        gf = gibbs_clamped(net, x, ClampSet({}), o["gibbs_burn_in"],
                           o["gibbs_sweeps"], o["gibbs_thinning"],
                           RngStream(o["seed"] + 200 + i))
        report(f"net{i} gibbs vs enumeration",
               float(np.abs(gf.outputs - exact).max()), o["gibbs_tol"])

        trace = forward_sample(net, x, RngStream(o["seed"] + 300 + i))
        asn = Assignment(x, list(trace.raw[:-1]), trace.raw[-1])
        joint = table.joint_distribution()
        key = tuple(tuple(float(v) for v in r) for r in trace.raw)
        report(f"net{i} energy identity",
               abs(math.exp(-energy(net, asn)) - joint[key]), 1e-12)

        y = np.asarray(RngStream(o["seed"] + 400 + i).integers(0, 2, o["outputs"]),
                       dtype=float)
        report(f"net{i} jensen direction (bound - loglik)",
               max(0.0, table.jensen_lower_bound(y) - table.log_likelihood(y)), 1e-12)

        # expected stochastic output gradient vs the bound's exact gradient
        M = spec.layer_count
        wiring = net.wirings[M]
        expect = np.zeros_like(net.weights[M])
        exact_g = np.zeros_like(net.weights[M])
        for states, p in table.hidden_weights():
            a = net.preactivations(M, states)
            z = states[M - 1]
            for yp in itertools.product((0.0, 1.0), repeat=o["outputs"]):
                p_y = np.prod([sigmoid(a[v]) if yp[v] == 1.0 else 1.0 - sigmoid(a[v])
                               for v in range(o["outputs"])])
                for v in range(o["outputs"]):
                    sl = slice(wiring.indptr[v], wiring.indptr[v + 1])
                    expect[sl] += p * p_y * bn_output_gradient(y[v], yp[v], z)[:-1]
            for v in range(o["outputs"]):
                sl = slice(wiring.indptr[v], wiring.indptr[v + 1])
                exact_g[sl] += p * (y[v] - sigmoid(a[v])) * z
        denom = max(float(np.abs(exact_g).max()), 1e-12)
        report(f"net{i} gradient unbiasedness (rel)",
               float(np.abs(expect - exact_g).max()) / denom, 1e-10)

    print(f"{'all checks passed' if failures == 0 else f'{failures} checks FAILED'}")
    return 0 if failures == 0 else 1


def _load_segment_inputs(cfg: RunConfig):
    image_path = cfg.get("segment", "image")
    index = cfg.get("segment", "image_index")
    mask = None
    if image_path:
        img = read_pnm(image_path)
        if img.ndim != 3:
            raise DataError(f"{image_path}: segment needs a color PPM image")
        image = img.astype(float) / 255.0
        mask_path = cfg.get("segment", "mask")
        if mask_path:
            mask = (read_pnm(mask_path) >= 128).astype(float)
    elif index >= 0:
        _, _, data = _dataset(cfg)
        if index >= len(data):
            raise DataError(f"[segment] image_index {index} out of range "
                            f"(dataset has {len(data)} images)")
        image = data.images[index]
        mask = data.masks[index]
    else:
        raise ConfigError("[segment] needs image=<path.ppm> or image_index=<n>")
    return image, mask


def _marginals_for(net: Network, x: np.ndarray, cfg: RunConfig):
    if cfg.get("segment", "mode") == "deterministic":
        trace = forward_deterministic(net, x)
        kind = net.spec.layers[-1].kind
        factor = 2.0 if kind.variant == "tanh" else 1.0
        return sigmoid(factor * np.asarray(trace.output_preactivations))
    field = mc_marginals(net, x, cfg.get("inference", "samples"),
                         RngStream(cfg.get("inference", "seed")))
    return field.outputs


def _clamps_from_scribbles(path: str, shape: tuple[int, int]) -> ClampSet:
    """Scribble PGM: 0 clamps background, 255 clamps foreground, anything
    else (canonically 128) leaves the pixel free."""
    img = read_pnm(path)
    if img.ndim != 2:
        raise DataError(f"{path}: scribbles must be a grayscale PGM")
    if img.shape != shape:
        raise DataError(f"{path}: scribble size {img.shape} does not match "
                        f"model grid {shape}")
    clamps = {}
    flat = img.reshape(-1)
    for i, v in enumerate(flat):
        if v == 0:
            clamps[i] = 0.0
        elif v == 255:
            clamps[i] = 1.0
    return ClampSet(clamps)


def cmd_segment(cfg: RunConfig) -> int:
    ckpt = os.path.join(cfg.get("output", "dir"), cfg.get("output", "checkpoint"))
    net = load_network(ckpt)
    conn = net.spec.layers[-1].conn
    if not hasattr(conn, "grid"):
        raise ConfigError("segment needs a model with a gridded output layer")
    h, w = conn.grid
    image, gt_mask = _load_segment_inputs(cfg)
    if image.shape != (h, w, 3):
        raise DataError(f"image shape {image.shape} does not match model "
                        f"input {(h, w, 3)}")
    x = image.reshape(-1)
    out_kind = net.spec.layers[-1].kind

    probs = _marginals_for(net, x, cfg)
    write_pgm(_out(cfg, "marginal.pgm"), marginal_to_gray(probs).reshape(h, w))
    decision = max_marginal_decide(probs, out_kind)
    write_pgm(_out(cfg, "decision.pgm"),
              (decision.reshape(h, w) == 1.0).astype(np.uint8) * 255)
    print(f"marginal: {_out(cfg, 'marginal.pgm')}")

    scribbles = cfg.get("segment", "scribbles")
    if scribbles:
        clamp = _clamps_from_scribbles(scribbles, (h, w))
        field = gibbs_clamped(net, x, clamp,
                              cfg.get("inference", "burn_in"),
                              cfg.get("inference", "sweeps"),
                              cfg.get("inference", "thinning"),
                              RngStream(cfg.get("inference", "seed")))
        write_pgm(_out(cfg, "clamped_marginal.pgm"),
                  marginal_to_gray(field.outputs).reshape(h, w))
        cdec = max_marginal_decide(field.outputs, out_kind)
        write_pgm(_out(cfg, "clamped_decision.pgm"),
                  (cdec.reshape(h, w) == 1.0).astype(np.uint8) * 255)
        print(f"clamped marginal: {_out(cfg, 'clamped_marginal.pgm')}")

    sigmas = cfg.get("segment", "noise_sigmas")
    radii = cfg.get("segment", "blur_radii")
    if sigmas or radii:
        if gt_mask is None:
            raise ConfigError("[segment] noise sweeps need a ground-truth mask")
        noise_rng = RngStream(cfg.get("segment", "noise_seed"))
        rows = []
        for kind_name, levels in (("sigma", sigmas), ("blur", radii)):
            for j, level in enumerate(levels):
                if kind_name == "sigma":
                    noisy = image + noise_rng.substream(0, j).normal(level, image.shape)
                else:
                    from scipy.ndimage import gaussian_filter

                    noisy = gaussian_filter(image, sigma=(level, level, 0.0))
                noisy = np.clip(noisy, 0.0, 1.0)
                probs = _marginals_for(net, noisy.reshape(-1), cfg)
                tag = f"{kind_name}_{j}"
                write_pgm(_out(cfg, f"marginal_{tag}.pgm"),
                          marginal_to_gray(probs).reshape(h, w))
                dec = max_marginal_decide(probs, out_kind) == 1.0
                rows.append({"kind": kind_name, "level": level,
                             "iou": iou(dec.reshape(h, w), gt_mask)})
        noise_csv = _out(cfg, "noise.csv")
        with open(noise_csv, "w", encoding="ascii") as fh:
            fh.write("kind,level,iou\n")
            for r in rows:
                fh.write(f"{r['kind']},{r['level']},{r['iou']}\n")
        print(f"noise sweep: {noise_csv}")
        if cfg.get("output", "figures"):
            from .report import plot_noise_curves

            mode = cfg.get("segment", "mode")
            label = "ebp" if mode == "deterministic" else "bn"
            plot_noise_curves({label: noise_csv}, _out(cfg, "noise_curves.png"))
    return 0


def cmd_serve(cfg: RunConfig) -> int:
    import socket

    import uvicorn

    from .service import build_app

    host = cfg.get("serve", "host")
    port = cfg.get("serve", "port")
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        print(f"cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return 4
    finally:
        probe.close()

    app = build_app(cfg)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except KeyboardInterrupt:
        pass
    return 0


def cmd_report(cfg: RunConfig) -> int:
    from .report import plot_learning_curves, plot_noise_curves

    outdir = cfg.get("output", "dir")
    if not os.path.isdir(outdir):
        raise DataError(f"output dir {outdir} does not exist")
    metric_csvs = {}
    for name in sorted(os.listdir(outdir)):
        if name.startswith(os.path.splitext(cfg.get("output", "metrics"))[0]) \
                and name.endswith(".csv"):
            label = name.split(".")[-2] if name.count(".") > 1 else "run"
            metric_csvs[label] = os.path.join(outdir, name)
    made = []
    if metric_csvs:
        path = os.path.join(outdir, "learning_curves.png")
        plot_learning_curves(metric_csvs, path, metric_name=cfg.get("train", "metric"))
        made.append(path)
    noise_csv = os.path.join(outdir, "noise.csv")
    if os.path.exists(noise_csv):
        path = os.path.join(outdir, "noise_curves.png")
        plot_noise_curves({"run": noise_csv}, path)
        made.append(path)
    if not made:
        raise DataError(f"no CSV outputs found under {outdir}")
    for p in made:
        print(f"figure: {p}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "oracle": cmd_oracle,
    "segment": cmd_segment,
    "serve": cmd_serve,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="stochnet",
        description="layered stochastic network experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="section.key=value")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.overrides)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StateSpaceTooLarge as exc:
        print(f"refusing: {exc}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError, PnmError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
