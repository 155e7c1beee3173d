"""``pu`` command-line tool.

Subcommands: stats, rn, eval, rank, synth, compare. Every subcommand accepts
``--config FILE`` holding flat ``key = value`` lines whose keys are the long
option names (``n-f``, ``outer-folds``, ...); flags on the command line win.
Every artifact carries a manifest with the resolved configuration: JSON
outputs embed it under ``"manifest"``, CSV/text outputs get a
``<file>.manifest.json`` sidecar. Manifests contain no timestamps or worker
counts, so identical inputs give byte-identical artifacts.

Exit status: 0 success, 2 usage error, 3 I/O error, 4 domain error; failures
print one JSON line ``{"error": <category>, "message": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import default_workers
from .dataset import Format, compute_stats, dumps_dataset, load_dataset, partition_pu
from .ensemble import BoostParams, ForestParams, train_classifier
from .errors import PUError
from .pipeline import PROTOCOL_GRID, PROTOCOL_SEEDS, CVConfig, MetricsReport, compare_methods, format_grid, nested_cv, parse_grid
from .ranking import RankConfig, rank_candidates
from .rn_select import RNParams, knn_feature_filter, reliable_negatives, resolve_n_f
from .similarity import pairwise_matrix
from .synth import SynthConfig, config_dict, generate, truth_csv

log = logging.getLogger("knnpu")

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DOMAIN = 4


class UsageError(Exception):
    category = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


def _seeds(text: str) -> tuple:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _grid(text: str) -> tuple:
    try:
        return parse_grid(text)
    except (PUError, ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _n_f(text: str):
    if text in ("all", "auto"):
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("n-f must be an integer, 'all' or 'auto'") from None


def _max_depth(text: str):
    return None if text in ("none", "None", "unlimited") else int(text)


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(command: str, config: dict, inputs=()) -> dict:
    return {
        "tool": "knnpu",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": [{"path": str(p), "sha256": _file_digest(p)} for p in inputs],
    }


def _write(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_with_sidecar(path, text: str, man: dict) -> None:
    _write(path, text)
    if path is not None and str(path) != "-":
        Path(f"{path}.manifest.json").write_text(json.dumps(man, indent=2) + "\n", encoding="utf-8")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _add_classifier_args(p):
    p.add_argument("--classifier", choices=("brf", "gbt"), default="brf")
    p.add_argument("--trees", type=int, default=ForestParams.n_trees, help="forest size")
    p.add_argument("--max-features", default="sqrt", help="features per split: sqrt, all or a count")
    p.add_argument("--stages", type=int, default=BoostParams.n_stages, help="boosting stages")
    p.add_argument("--depth", type=_max_depth, default=None,
                   help="max tree depth (forest default unlimited, boosting default 6)")
    p.add_argument("--lr", type=float, default=BoostParams.learning_rate, help="boosting learning rate")
    p.add_argument("--pos-weight", type=float, default=None, help="boosting positive weight (default n_neg/n_pos)")
    p.add_argument("--n-f", type=_n_f, default="auto", help="KNN feature filter size")


def _classifier_params(a):
    mf = a.max_features
    mf = mf if mf in ("sqrt", "all") else int(mf)
    forest = ForestParams(n_trees=a.trees, max_depth=a.depth, max_features=mf)
    boost = BoostParams(n_stages=a.stages, max_depth=a.depth if a.depth is not None else BoostParams.max_depth,
                        learning_rate=a.lr, pos_weight=a.pos_weight)
    return forest, boost


def _nf_value(a):
    return None if a.n_f == "auto" else a.n_f


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pu", description="Two-step PU learning with KNN reliable negatives.")
    parser.add_argument("--version", action="version", version=f"knnpu {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key = value defaults file")
        p.add_argument("--workers", type=int, default=None, help="parallel workers (default $PU_WORKERS or 1)")
        p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("stats", help="print dataset statistics as JSON")
    p.add_argument("dataset")
    p.add_argument("--format", choices=[f.value for f in Format], default=None)
    common(p)

    p = sub.add_parser("rn", help="select reliable negatives on the full dataset")
    p.add_argument("dataset")
    p.add_argument("--format", choices=[f.value for f in Format], default=None)
    p.add_argument("--k", type=int, required=False, default=None)
    p.add_argument("--t", default=None, help="threshold, e.g. 0.8 or 4/5")
    p.add_argument("--seed", type=int, default=PROTOCOL_SEEDS[0], help="seed for the feature-filter model")
    p.add_argument("--trace", help="per-entity trace CSV")
    p.add_argument("--out", help="file for the reliable-negative id list (default stdout)")
    _add_classifier_args(p)
    common(p)

    p = sub.add_parser("eval", help="nested cross-validation report")
    p.add_argument("dataset")
    p.add_argument("--format", choices=[f.value for f in Format], default=None)
    p.add_argument("--mode", choices=("naive", "pu"), default="pu")
    p.add_argument("--grid", type=_grid, default=PROTOCOL_GRID, help="k:t pairs, e.g. 3:2/3,3:1")
    p.add_argument("--seeds", type=_seeds, default=PROTOCOL_SEEDS)
    p.add_argument("--outer-folds", type=int, default=10)
    p.add_argument("--inner-folds", type=int, default=5)
    p.add_argument("--inner-metric", choices=("f1", "auc"), default="f1")
    p.add_argument("--unstratified", action="store_true")
    p.add_argument("--out", help="report JSON path (default stdout)")
    _add_classifier_args(p)
    common(p)

    p = sub.add_parser("rank", help="seed-averaged candidate ranking")
    p.add_argument("dataset")
    p.add_argument("--format", choices=[f.value for f in Format], default=None)
    p.add_argument("--mode", choices=("naive", "pu"), default="pu")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--t", default=None)
    p.add_argument("--grid", type=_grid, default=PROTOCOL_GRID, help="searched when --k/--t are absent")
    p.add_argument("--inner-folds", type=int, default=5)
    p.add_argument("--inner-metric", choices=("f1", "auc"), default="f1")
    p.add_argument("--top", default="all", help="number of candidates or 'all'")
    p.add_argument("--seeds", type=_seeds, default=PROTOCOL_SEEDS)
    p.add_argument("--out", help="ranking CSV path (default stdout)")
    p.add_argument("--save-model", help="directory to store one model file per seed")
    p.add_argument("--reuse-model", help="directory of saved models to score with instead of training")
    _add_classifier_args(p)
    common(p)

    p = sub.add_parser("synth", help="generate a synthetic SCAR dataset")
    p.add_argument("--n", type=int, default=SynthConfig.n_entities)
    p.add_argument("--features", type=int, default=SynthConfig.n_features)
    p.add_argument("--pos-frac", type=float, default=SynthConfig.positive_fraction)
    p.add_argument("--c", type=float, default=SynthConfig.label_frequency)
    p.add_argument("--sep", type=float, default=SynthConfig.cluster_separation)
    p.add_argument("--noise", type=float, default=SynthConfig.noise_rate)
    p.add_argument("--informative", type=float, default=SynthConfig.informative_fraction)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=[f.value for f in Format], default="dense")
    p.add_argument("--out", required=False, default=None)
    p.add_argument("--truth", default=None, help="ground-truth CSV (keep away from the pipeline)")
    common(p)

    p = sub.add_parser("compare", help="paired t-test between two eval reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out", default=None)
    common(p)
    return parser


def _apply_config_file(parser, argv):
    """Re-parse with config-file values installed as subparser defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        values = read_config_file(args.config)
    except OSError as exc:
        raise OSError(f"cannot read config file: {exc}") from exc
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in actions or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for '{args.command}'")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        else:
            defaults[key] = raw
        if action.required:
            action.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _workers(a) -> int:
    return a.workers if a.workers is not None else default_workers()


def cmd_stats(a) -> None:
    ds = load_dataset(a.dataset, a.format)
    st = compute_stats(ds)
    out = st.as_dict()
    out["sparsity_percent"] = round(st.sparsity_percent, 2)
    out["sparsity_percent_exact"] = st.sparsity_percent
    out["manifest"] = manifest("stats", {"format": a.format or "auto"}, [a.dataset])
    _write(None, _dump_json(out))


def cmd_rn(a) -> None:
    if a.k is None or a.t is None:
        raise UsageError("rn needs --k and --t")
    ds = load_dataset(a.dataset, a.format)
    params = RNParams(a.k, a.t, _nf_value(a))
    n_f = resolve_n_f(params.n_f, ds.n_features)
    forest, boost = _classifier_params(a)
    subset = None
    if n_f != "all" and n_f < ds.n_features:
        model = train_classifier(a.classifier, ds.features, ds.labels,
                                 forest if a.classifier == "brf" else boost, a.seed)
        subset = knn_feature_filter(model, n_f, ds.n_features)
    P, U = partition_pu(ds)
    res = reliable_negatives(P, U, pairwise_matrix(ds, subset), params)
    config = {"k": params.k, "t": str(params.t), "n_f": n_f,
              "subset": "all" if subset is None else subset.tag}
    if subset is not None:
        config.update(classifier=a.classifier, seed=a.seed)
    man = manifest("rn", config, [a.dataset])
    _write_with_sidecar(a.out, "".join(f"{ds.ids[i]}\n" for i in res.reliable_negatives), man)
    if a.trace:
        lines = ["id,neighbour_ids,unlabelled_fraction,nearest_label,admitted,tied"]
        for row in res.trace_rows(ds.ids):
            lines.append(",".join([
                row["id"], ";".join(row["neighbour_ids"]), repr(row["unlabelled_fraction"]),
                row["nearest_label"], str(row["admitted"]).lower(), str(row["tied"]).lower(),
            ]))
        _write_with_sidecar(a.trace, "\n".join(lines) + "\n", man)
    log.info("%d reliable negatives out of %d unlabelled", len(res), U.size)


def cmd_eval(a) -> None:
    ds = load_dataset(a.dataset, a.format)
    forest, boost = _classifier_params(a)
    cfg = CVConfig(
        mode=a.mode, classifier=a.classifier, forest=forest, boost=boost, n_f=_nf_value(a),
        outer_folds=a.outer_folds, inner_folds=a.inner_folds, pu_grid=a.grid,
        seeds=a.seeds, inner_metric=a.inner_metric, stratified=not a.unstratified,
    )
    report = nested_cv(ds, cfg, workers=_workers(a))
    doc = report.to_dict()
    doc["config"]["n_f_resolved"] = resolve_n_f(cfg.n_f, ds.n_features)
    doc["manifest"] = manifest("eval", doc["config"], [a.dataset])
    _write(a.out, _dump_json(doc))
    m = report.mean
    log.info("mean F1 %.4f  G-Mean %.4f  AUC %s", m.f1, m.g_mean, m.auc_roc)


def cmd_rank(a) -> None:
    ds = load_dataset(a.dataset, a.format)
    forest, boost = _classifier_params(a)
    cfg = RankConfig(
        mode=a.mode, classifier=a.classifier, forest=forest, boost=boost, n_f=_nf_value(a),
        seeds=a.seeds, k=a.k, t=a.t, pu_grid=a.grid, inner_folds=a.inner_folds,
        inner_metric=a.inner_metric,
    )
    top = a.top if a.top == "all" else int(a.top)
    model_dir = a.reuse_model or a.save_model
    ranking = rank_candidates(ds, cfg, top, workers=_workers(a), model_dir=model_dir,
                              reuse_models=a.reuse_model is not None)
    config = cfg.to_dict()
    config["top"] = top
    config["n_f_resolved"] = resolve_n_f(cfg.n_f, ds.n_features)
    if a.reuse_model:
        config["reused_models"] = str(a.reuse_model)
    config["chosen"] = {str(s): [k, str(t)] for s, (k, t) in ranking.chosen.items()}
    config["rn_sizes"] = {str(s): n for s, n in ranking.rn_sizes.items()}
    _write_with_sidecar(a.out, ranking.to_csv(), manifest("rank", config, [a.dataset]))


def cmd_synth(a) -> None:
    cfg = SynthConfig(n_entities=a.n, n_features=a.features, positive_fraction=a.pos_frac,
                      label_frequency=a.c, cluster_separation=a.sep, noise_rate=a.noise,
                      informative_fraction=a.informative, seed=a.seed)
    sd = generate(cfg)
    man = manifest("synth", config_dict(cfg))
    _write_with_sidecar(a.out, dumps_dataset(sd.pu_view, a.format), man)
    if a.truth:
        _write_with_sidecar(a.truth, truth_csv(sd), man)


def _load_report(path) -> MetricsReport:
    try:
        return MetricsReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path} is not an eval report: {exc}") from None


def cmd_compare(a) -> None:
    ra, rb = _load_report(a.report_a), _load_report(a.report_b)
    out = {"comparison": compare_methods(ra, rb),
           "manifest": manifest("compare", {}, [a.report_a, a.report_b])}
    _write(a.out, _dump_json(out))


COMMANDS = {
    "stats": cmd_stats, "rn": cmd_rn, "eval": cmd_eval,
    "rank": cmd_rank, "synth": cmd_synth, "compare": cmd_compare,
}


def _fail(category: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")
    return code


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except UsageError as exc:
        return _fail("UsageError", str(exc), EXIT_USAGE)
    except OSError as exc:
        return _fail("IoError", str(exc), EXIT_IO)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("UsageError", str(exc), EXIT_USAGE)
    except PUError as exc:
        return _fail(exc.category, str(exc), EXIT_DOMAIN)
    except OSError as exc:
        return _fail("IoError", str(exc), EXIT_IO)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
