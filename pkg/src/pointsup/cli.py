"""Command-line entry points: simulate, render, train-toy, budget, serve."""

import argparse
import json
import sys

import numpy as np

from . import budget as budget_mod
from . import trainer as trainer_mod
from .head import FeatureGrid, FourierEncoding, HeadArch, PointHeadParams
from .masks import load_dataset
from .render import RenderConfig, render
from .simulate import save_points, simulate_dataset
from .tensorio import load_tensor, save_tensor
from . import _kernels


def _cmd_simulate(args):
    dataset = load_dataset(args.dataset)
    coll = simulate_dataset(
        dataset,
        args.points,
        args.seed,
        noise_mode=args.noise or "none",
        noise_rate=args.rate if args.noise else 0.0,
    )
    save_points(coll, args.out)
    print(f"wrote {coll.total_points()} points for {len(coll.annotations)} instances to {args.out}")


def _head_point_fn_from_files(params_path, features_path):
    flat, _, meta = load_tensor(params_path, expect_kind="point-head-params")
    arch = HeadArch.from_dict(meta["arch"])
    params = PointHeadParams(flat, arch)
    feats, _, _ = load_tensor(features_path, expect_kind="feature-grid")
    fgrid = FeatureGrid(feats)
    coord_mode = meta.get("coord_mode", "pe")
    enc = None
    if coord_mode == "pe":
        enc = FourierEncoding(meta.get("pe_m", 64), meta.get("pe_sigma", 1.0), meta.get("pe_seed", 0))

    def point_fn(coords):
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        px = coords[:, 0] * fgrid.width - 0.5
        py = coords[:, 1] * fgrid.height - 0.5
        x = np.empty((len(coords), fgrid.channels))
        for c in range(fgrid.channels):
            x[:, c] = _kernels.bilinear_gather(fgrid.values[c], px, py)
        rel = coords - 0.5
        if coord_mode == "pe":
            x = np.concatenate([x, enc.encode(rel)], axis=1)
        elif coord_mode == "rel":
            x = np.concatenate([x, rel], axis=1)
        z = _kernels.mlp_forward(params.flat, arch.dims, x)
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))

    return point_fn


def _cmd_render(args):
    from PIL import Image

    point_fn = _head_point_fn_from_files(args.params, args.features)
    cfg = RenderConfig(start_res=args.start, target_res=args.target, n_select=args.nsel)
    grid, evals = render(point_fn, cfg)
    mask = (grid.values > 0.5).astype(np.uint8) * 255
    Image.fromarray(mask, mode="L").save(args.out)
    if args.probs:
        save_tensor(args.probs, grid.values, "probability-grid", {"evals": evals})
    print(f"rendered {cfg.target_res}x{cfg.target_res} mask with {evals} head evaluations -> {args.out}")


def _cmd_train_toy(args):
    suite = trainer_mod.generate_suite(args.instances, args.suite_seed)
    cfg = trainer_mod.TrainConfig(steps=args.steps, n_points=args.points, augment=args.augment)
    seeds = tuple(range(args.seeds))
    if args.ablations:
        rows, summary = trainer_mod.run_ablations(suite, seeds, cfg)
        print(json.dumps({k: v for k, v in summary.items() if k != "means"}))
    elif args.sweep:
        rows = trainer_mod.run_point_sweep(suite, point_seeds=seeds, cfg=cfg)
    else:
        rows = trainer_mod.run_point_sweep(suite, n_list=(args.points,), point_seeds=seeds, cfg=cfg)
    trainer_mod.write_results_csv(rows, args.out)
    print(f"wrote {len(rows)} result rows to {args.out}")
    if args.dump_head:
        _dump_head(suite[0], cfg, args.dump_head)


def _dump_head(instance, cfg, out_dir):
    """Train one instance and write head.bin + features.bin for `render`."""
    import os

    trained = trainer_mod.train_instance(instance, cfg)
    os.makedirs(out_dir, exist_ok=True)
    bx, by = int(instance.bbox.x), int(instance.bbox.y)
    bw, bh = int(instance.bbox.w), int(instance.bbox.h)
    crop = instance.fgrid.values[:, by : by + bh, bx : bx + bw]
    meta = {
        "arch": trained.params.arch.to_dict(),
        "coord_mode": cfg.coord_mode,
        "pe_m": cfg.pe_m,
        "pe_sigma": cfg.pe_sigma,
        "pe_seed": cfg.train_seed,
    }
    save_tensor(os.path.join(out_dir, "head.bin"), trained.params.flat, "point-head-params", meta)
    save_tensor(os.path.join(out_dir, "features.bin"), crop, "feature-grid", {})
    print(f"dumped head.bin and features.bin to {out_dir}")


def _cmd_budget(args):
    params = budget_mod.BudgetParams(
        t_category=args.t_category,
        t_spotting=args.t_spotting,
        t_box=args.t_box,
        t_point=args.t_point,
        t_mask=args.t_mask,
    )
    kinds = {
        "box": budget_mod.SupervisionKind.box(),
        "mask": budget_mod.SupervisionKind.mask(),
        "points": budget_mod.SupervisionKind.points(args.points),
    }
    report = {
        "params": vars(params) | {"t_stages": params.t_stages},
        "per_instance_seconds": {
            name: budget_mod.per_instance_time(kind, params) for name, kind in kinds.items()
        },
        "per_instance_seconds_no_stages": {
            name: budget_mod.per_instance_time(kind, params, include_spotting=False)
            for name, kind in kinds.items()
        },
        "dataset_days": {
            name: budget_mod.dataset_time(kind, args.instances, params) for name, kind in kinds.items()
        },
    }
    if args.break_even:
        lo, hi = budget_mod.break_even_interval(args.f_box, args.f_mask, args.f_point, params, args.points)
        report["break_even_seconds"] = {"low": lo, "high": hi if hi != float("inf") else None}
    json.dump(report, sys.stdout, indent=2)
    print()


def _cmd_serve(args):
    from .service import make_server

    dataset = load_dataset(args.dataset)
    server = make_server(dataset, args.root, args.port, data_dir=args.data_dir, ui_dir=args.ui)
    host, port = server.server_address
    print(
        f"serving dataset {dataset.dataset_id} on http://{host}:{port} (kernels: {_kernels.BACKEND})",
        flush=True,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


def build_parser():
    p = argparse.ArgumentParser(prog="pointsup", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate point annotations from a mask dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--points", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise", choices=["random", "boundary"])
    s.add_argument("--rate", type=float, default=0.05)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("render", help="render a mask from saved head params + features")
    s.add_argument("--params", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--start", type=int, default=28)
    s.add_argument("--target", type=int, default=224)
    s.add_argument("--nsel", type=int, default=784)
    s.add_argument("--probs", help="also dump the probability grid to this file")
    s.set_defaults(func=_cmd_render)

    s = sub.add_parser("train-toy", help="run desk-scale training experiments")
    s.add_argument("--suite-seed", type=int, default=0)
    s.add_argument("--instances", type=int, default=100)
    s.add_argument("--sweep", action="store_true", help="sweep the point budget")
    s.add_argument("--ablations", action="store_true", help="coord/noise/augment grid")
    s.add_argument("--points", type=int, default=10)
    s.add_argument("--steps", type=int, default=600)
    s.add_argument("--seeds", type=int, default=5)
    s.add_argument("--augment", action="store_true")
    s.add_argument("--dump-head", help="write head.bin/features.bin for the first instance")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_train_toy)

    s = sub.add_parser("budget", help="annotation-time arithmetic report")
    s.add_argument("--instances", type=int, default=849949)
    s.add_argument("--points", type=int, default=10)
    s.add_argument("--t-category", type=float, default=28.8, dest="t_category")
    s.add_argument("--t-spotting", type=float, default=14.4, dest="t_spotting")
    s.add_argument("--t-box", type=float, default=7.0, dest="t_box")
    s.add_argument("--t-point", type=float, default=0.9, dest="t_point")
    s.add_argument("--t-mask", type=float, default=79.2, dest="t_mask")
    s.add_argument("--break-even", action="store_true", dest="break_even")
    s.add_argument("--f-box", type=float, default=1.0, dest="f_box")
    s.add_argument("--f-mask", type=float, default=0.4, dest="f_mask")
    s.add_argument("--f-point", type=float, default=0.5, dest="f_point")
    s.set_defaults(func=_cmd_budget)

    s = sub.add_parser("serve", help="start the annotation workbench backend")
    s.add_argument("--dataset", required=True)
    s.add_argument("--root", required=True, help="directory holding the image files")
    s.add_argument("--port", type=int, default=8080)
    s.add_argument("--data-dir", dest="data_dir")
    s.add_argument("--ui", help="serve a built frontend from this directory")
    s.set_defaults(func=_cmd_serve)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
