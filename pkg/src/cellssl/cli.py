"""Command-line entry point.

Subcommands cover the full pipeline: ``lift`` and ``wl-compare`` for the
structural layer, ``pretrain`` / ``embed`` / ``probe`` / ``trim-study``
for training and evaluation, ``gradcheck`` and ``bilevel-check`` as
self-tests, and ``bench`` to compare the compiled and pure cycle kernels.

Data goes to stdout, logs to stderr.  Exit codes: 0 success, 1 usage
error, 2 data error, 3 check failure.  Run directories receive the fully
resolved key=value config, so a run can be reproduced bit-exactly from
its own output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time

import numpy as np

from . import __version__, diffcore as dc
from .bilevel import BilevelConfig, alternating_train, hypergradient, lookahead_step
from .ccnn import CCNNConfig, CCNNParams, init_ccnn_params
from .contrastive import LossConfig, NoiseConfig
from .graph_io import DataError, Dataset, Graph, parse_edge_list, parse_tu_dataset
from .lift import build_neighborhoods, cycle_kernel_name, dump_complex, lift_graph
from .pipeline import init_model, make_batches, pack_all, prepare_items
from .probe import ProbeConfig, linear_probe_cv, embed_dataset, random_trim_study, semi_supervised_probe
from .scheduler import SchedulerParams
from .synth import mutag_like_dataset, planted_redundancy_dataset, sparse_random_dataset
from .wl import cwl_pair, distinguishes, wl_pair

log = logging.getLogger("cellssl")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3


@dataclasses.dataclass
class RunConfig:
    """Fully resolved run settings; defaults follow the shipped recipe."""

    seed: int = 0
    ring_size: int = 6
    eta: float = 0.1
    rho: float = 0.2
    zeta: float = 1.0
    layers: int = 3
    hidden_dim: int = 32
    proj_dim: int = 96
    epochs: int = 20
    batch_size: int = 128
    lr: float = 1e-3
    alpha: float = 1e-3
    beta: float = 1e-3
    outer_lr: float = 1e-3
    bilevel_mode: str = "second-order"
    normalize: bool = True
    feature_scheme: str = "auto"
    include_positive: bool = False
    threads: int = 1

    def ccnn(self) -> CCNNConfig:
        return CCNNConfig(num_layers=self.layers, hidden_dim=self.hidden_dim,
                          proj_dim=self.proj_dim, normalize=self.normalize)

    def loss(self) -> LossConfig:
        return LossConfig(rho=self.rho, batch_size=self.batch_size,
                          include_positive=self.include_positive)

    def noise(self) -> NoiseConfig:
        return NoiseConfig(eta=self.eta, seed=self.seed)

    def bilevel(self) -> BilevelConfig:
        return BilevelConfig(alpha=self.alpha, beta=self.beta,
                             outer_lr=self.outer_lr, mode=self.bilevel_mode)

    def to_text(self) -> str:
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            lines.append(f"{f.name}={getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        defaults = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"config line {lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in types:
                raise DataError(f"config line {lineno}: unknown key {key!r}")
            current = getattr(defaults, key)
            if isinstance(current, bool):
                kwargs[key] = value.strip().lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                kwargs[key] = int(value)
            elif isinstance(current, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value.strip()
        return cls(**kwargs)


def _load_dataset(args) -> Dataset:
    if args.fixture:
        if args.fixture == "mutag-like":
            return mutag_like_dataset(seed=args.fixture_seed)
        if args.fixture == "planted":
            return planted_redundancy_dataset(seed=args.fixture_seed)
        if args.fixture.startswith("sparse-"):
            avg = int(args.fixture.split("-")[1])
            return sparse_random_dataset(args.fixture, 100, avg, seed=args.fixture_seed)
        raise DataError(f"unknown fixture {args.fixture!r}")
    if not args.dataset or not args.name:
        raise DataError("need --dataset DIR and --name NAME, or --fixture")
    return parse_tu_dataset(args.dataset, args.name)


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="directory with TU-layout files")
    p.add_argument("--name", help="dataset name (file prefix)")
    p.add_argument("--fixture", help="bundled synthetic dataset (mutag-like, planted)")
    p.add_argument("--fixture-seed", type=int, default=0)


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = RunConfig.from_text(fh.read())
    for f in dataclasses.fields(RunConfig):
        flag = f.name.replace("_", "-")
        value = getattr(args, f.name, None)
        if value is not None:
            cfg = dataclasses.replace(cfg, **{f.name: value})
        del flag
    return cfg


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            p.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes"),
                           default=None, metavar="BOOL")
        else:
            p.add_argument(flag, type=type(f.default), default=None)


# ---------------------------------------------------------------------------
# subcommands


def cmd_lift(args) -> int:
    if os.path.isdir(args.input):
        if not args.name:
            raise DataError("lifting a TU directory needs --name")
        dataset = parse_tu_dataset(args.input, args.name)
        graphs = list(dataset.graphs)
    else:
        graphs = [parse_edge_list(args.input)]
    total = [0, 0, 0]
    for gi, g in enumerate(graphs):
        x = lift_graph(g, args.ring_size)
        total[0] += x.n0
        total[1] += x.n1
        total[2] += x.n2
        print(f"graph {gi}: N0={x.n0} N1={x.n1} N2={x.n2}")
        if args.dump:
            sys.stdout.write(dump_complex(x))
    if len(graphs) > 1:
        print(f"total: N0={total[0]} N1={total[1]} N2={total[2]}")
    return EXIT_OK


def cmd_wl_compare(args) -> int:
    base = os.path.dirname(os.path.abspath(args.pairs_file))
    print("pair_id\twl_distinguishes\tcwl_distinguishes\titerations")
    with open(args.pairs_file, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"{args.pairs_file}:{lineno}: expected two paths")
            g1 = parse_edge_list(os.path.join(base, parts[0]))
            g2 = parse_edge_list(os.path.join(base, parts[1]))
            h1, h2, _ = wl_pair(g1, g2)
            wl_d = distinguishes(h1, h2)
            x1 = lift_graph(g1, args.ring_size)
            x2 = lift_graph(g2, args.ring_size)
            c1, c2, iters = cwl_pair(x1, x2)
            cwl_d = distinguishes(c1, c2)
            print(f"{lineno}\t{int(wl_d)}\t{int(cwl_d)}\t{iters}")
    return EXIT_OK


def _run_dir_paths(out: str) -> dict[str, str]:
    return {
        "config": os.path.join(out, "config.txt"),
        "encoder": os.path.join(out, "encoder.ckpt"),
        "projector": os.path.join(out, "projector.ckpt"),
        "scheduler": os.path.join(out, "scheduler.ckpt"),
        "train_log": os.path.join(out, "train.log"),
        "meta_log": os.path.join(out, "meta.log"),
    }


def cmd_pretrain(args) -> int:
    cfg = _config_from_args(args)
    dataset = _load_dataset(args)
    os.makedirs(args.out, exist_ok=True)
    paths = _run_dir_paths(args.out)
    with open(paths["config"], "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())
    items = prepare_items(dataset, cfg.ring_size, cfg.feature_scheme, cfg.threads)
    in_dim = items[0][2][0].dim
    params, sp = init_model(cfg.ccnn(), in_dim, cfg.seed)
    train_lines: list[str] = []
    meta_lines: list[str] = []

    def log_fn(line: str) -> None:
        (meta_lines if line.split()[1] == "2" else train_lines).append(line)
        print(line, file=sys.stderr)

    if cfg.epochs > 0:
        # one shuffled batching per epoch pair keeps runs reproducible
        batches_per_epoch = [
            make_batches(items, cfg.batch_size, cfg.seed, epoch) for epoch in range(cfg.epochs)
        ]
        from .contrastive import train_epoch_standard
        from .bilevel import meta_epoch
        from .diffcore import Adam

        opt_enc, opt_proj = Adam(lr=cfg.lr), Adam(lr=cfg.lr)
        opt_sched = Adam(lr=cfg.outer_lr)
        for epoch in range(cfg.epochs):
            batches = batches_per_epoch[epoch]
            train_epoch_standard(batches, params, sp, cfg.ccnn(), cfg.loss(), cfg.noise(),
                                 cfg.zeta, opt_enc, opt_proj, epoch,
                                 log_fn=lambda line, e=epoch: log_fn(f"{e} 1 {line}"))
            meta_epoch(batches, params, sp, cfg.ccnn(), cfg.loss(), cfg.noise(), cfg.zeta,
                       cfg.bilevel(), opt_sched, epoch, log_fn=log_fn)
    params.encoder.save(paths["encoder"])
    params.projector.save(paths["projector"])
    sp.store.save(paths["scheduler"])
    with open(paths["train_log"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(train_lines) + ("\n" if train_lines else ""))
    with open(paths["meta_log"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(meta_lines) + ("\n" if meta_lines else ""))
    print(f"run written to {args.out}")
    return EXIT_OK


def _load_run(run_dir: str) -> tuple[RunConfig, CCNNParams, SchedulerParams]:
    paths = _run_dir_paths(run_dir)
    with open(paths["config"], "r", encoding="utf-8") as fh:
        cfg = RunConfig.from_text(fh.read())
    from .diffcore import ParameterStore

    enc = ParameterStore.load(paths["encoder"], "encoder")
    proj = ParameterStore.load(paths["projector"], "projector")
    sched = ParameterStore.load(paths["scheduler"], "scheduler")
    return cfg, CCNNParams(enc, proj), SchedulerParams(sched)


def cmd_embed(args) -> int:
    cfg, params, _ = _load_run(args.run)
    dataset = _load_dataset(args)
    items = prepare_items(dataset, cfg.ring_size, cfg.feature_scheme, cfg.threads)
    emb = embed_dataset(pack_all(items), params, cfg.ccnn())
    for gi in range(emb.shape[0]):
        print("\t".join([str(gi)] + [f"{v:.10g}" for v in emb[gi]]))
    return EXIT_OK


def _read_embeddings(path: str) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                rows.append([float(v) for v in parts[1:]])
    return np.array(rows)


def cmd_probe(args) -> int:
    dataset = _load_dataset(args)
    emb = _read_embeddings(args.embeddings)
    if emb.shape[0] != len(dataset.graphs):
        raise DataError(f"{emb.shape[0]} embeddings for {len(dataset.graphs)} graphs")
    pcfg = ProbeConfig(folds=args.folds, seeds=args.seeds,
                       label_fraction=args.label_fraction)
    fn = semi_supervised_probe if args.protocol == "semi" else linear_probe_cv
    mean, std, rows = fn(emb, dataset.labels(), pcfg, base_seed=args.seed or 0)
    print("dataset\tprotocol\tseed\tfold\taccuracy")
    for seed, fold, acc in rows:
        print(f"{dataset.name}\t{args.protocol}\t{seed}\t{fold}\t{acc:.6f}")
    print(f"# mean {mean:.6f} std {std:.6f}", file=sys.stderr)
    return EXIT_OK


def cmd_trim_study(args) -> int:
    cfg, params, _ = _load_run(args.run)
    dataset = _load_dataset(args)
    items = prepare_items(dataset, cfg.ring_size, cfg.feature_scheme, cfg.threads)
    ratios = [float(r) for r in args.ratios.split(",") if r]
    pcfg = ProbeConfig(folds=args.folds, seeds=1)
    result = random_trim_study(pack_all(items), params, cfg.ccnn(), dataset.labels(),
                               ratios, args.trials, pcfg, seed=args.seed or 0)
    sys.stdout.write(result.to_tsv())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import full_pipeline_gradcheck

    worst = full_pipeline_gradcheck(trials=args.trials, seed=args.seed or 0)
    print(f"max relative error over {args.trials} trials: {worst:.3e}")
    if worst >= args.tolerance:
        print(f"FAIL: exceeds tolerance {args.tolerance}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_bilevel_check(args) -> int:
    from .checks import toy_bilevel_check

    worst = toy_bilevel_check(trials=args.trials, seed=args.seed or 0)
    print(f"max deviation from analytic hypergradient: {worst:.3e}")
    if worst >= args.tolerance:
        print(f"FAIL: exceeds tolerance {args.tolerance}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import _cycles

    try:
        from . import _fastcycles
    except ImportError:
        _fastcycles = None
    rng = np.random.default_rng(args.seed or 0)
    sizes = [int(s) for s in args.sizes.split(",")]
    print("nodes\tedges\tcycles\tpython_s\tcython_s\tspeedup")
    for n in sizes:
        g = sparse_random_dataset("bench", 1, n, seed=int(rng.integers(0, 2**31))).graphs[0]
        indptr, indices = g.neighbor_csr()
        t0 = time.perf_counter()
        for _ in range(args.repeat):
            ref = _cycles.chordless_cycles(g.num_nodes, indptr, indices, args.ring_size)
        t_py = (time.perf_counter() - t0) / args.repeat
        if _fastcycles is not None:
            t0 = time.perf_counter()
            for _ in range(args.repeat):
                fast = _fastcycles.chordless_cycles(g.num_nodes, indptr, indices, args.ring_size)
            t_cy = (time.perf_counter() - t0) / args.repeat
            if sorted(ref) != sorted(fast):
                print("FAIL: kernels disagree", file=sys.stderr)
                return EXIT_CHECK
            print(f"{g.num_nodes}\t{g.num_edges}\t{len(ref)}\t{t_py:.6f}\t{t_cy:.6f}\t{t_py / t_cy:.1f}x")
        else:
            print(f"{g.num_nodes}\t{g.num_edges}\t{len(ref)}\t{t_py:.6f}\tn/a\tn/a")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cellssl", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lift", help="lift graphs and print cell counts")
    p.add_argument("--input", required=True, help="edge-list file or TU directory")
    p.add_argument("--name", help="dataset name when --input is a directory")
    p.add_argument("--ring-size", type=int, default=6)
    p.add_argument("--dump", action="store_true", help="print the cell dump")
    p.set_defaults(fn=cmd_lift)

    p = sub.add_parser("wl-compare", help="WL vs cellular WL on graph pairs")
    p.add_argument("--pairs-file", required=True)
    p.add_argument("--ring-size", type=int, default=6)
    p.set_defaults(fn=cmd_wl_compare)

    p = sub.add_parser("pretrain", help="contrastive pretraining with trimming")
    _add_dataset_args(p)
    _add_config_args(p)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("embed", help="write per-graph embeddings from a run")
    _add_dataset_args(p)
    p.add_argument("--run", required=True, help="pretrain output directory")
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("probe", help="linear or semi-supervised probing")
    _add_dataset_args(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--protocol", choices=("linear", "semi"), default="linear")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--label-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("trim-study", help="random 2-cell trimming study")
    _add_dataset_args(p)
    p.add_argument("--run", required=True)
    p.add_argument("--ratios", default="0,0.1,0.2,0.3,0.4,0.5")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_trim_study)

    p = sub.add_parser("gradcheck", help="finite-difference check of the pipeline")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bilevel-check", help="analytic toy hypergradient check")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_bilevel_check)

    p = sub.add_parser("bench", help="compare cycle kernels")
    p.add_argument("--sizes", default="50,100,200")
    p.add_argument("--ring-size", type=int, default=6)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_bench)

    return ap


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else EXIT_OK
    try:
        return args.fn(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
