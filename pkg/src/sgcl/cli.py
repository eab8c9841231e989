"""Command-line entry point: ``sgcl <command> [options]``.

Options may also come from a ``key=value`` config file (``--config``, or
``./sgcl.conf`` when present). Keys are option names with dashes replaced
by underscores; command-line flags win over the file, and ``SGCL_SEED``
supplies the seed when neither sets one.
"""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .analytics import (cka_matrix, diagonal_dominance, energy_binary_gnn, energy_from_counts,
                        energy_full_precision, energy_spikegcl, sparsity)
from .contrastive import ContrastConfig
from .encoder import concat_pool, encode, load_embedding, save_embedding
from .errors import (ConfigError, DataError, DegenerateError, DimensionError, NumericError,
                     UndefinedSimilarityError, UsageError, VerificationError)
from .graph import load_graph, load_labels
from .neurons import NeuronConfig
from .ops import OptimConfig
from .probe import evaluate_trials
from .synthetic import sbm
from .theory import random_instance, verify_bound
from .training import (TrainConfig, TrainHistory, View, embed, grad_norm_probe, load_checkpoint,
                       save_checkpoint, train)

logger = logging.getLogger("sgcl")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3, 4
DEFAULT_CONFIG = "sgcl.conf"


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS threads; 1 gives bit-reproducible runs")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _model_options(p, v_threshold=5e-3, t_steps=8, neuron="plif"):
    p.add_argument("--T", dest="t_steps", type=int, default=t_steps)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--neuron", default=neuron)
    p.add_argument("--v-threshold", type=float, default=v_threshold)
    p.add_argument("--reset", dest="reset_mode", default="by_subtraction")
    p.add_argument("--tau-m", type=float, default=1.0)
    p.add_argument("--alpha", dest="surrogate_alpha", type=float, default=2.0)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--edge-drop", type=float, default=0.5)
    p.add_argument("--block-size", type=int, default=1)


def build_parser():
    parser = _Parser(prog="sgcl", description="Spiking graph contrastive learning toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train an encoder and write model, embeddings, history")
    _common(p)
    p.add_argument("--data", required=True, help="CSV dataset directory")
    p.add_argument("--out", default="run", help="output directory")
    _model_options(p)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", dest="learning_rate", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--detach-mode", default="state")

    p = sub.add_parser("embed", help="write binary embeddings for a dataset")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="embeddings.sgcb")

    p = sub.add_parser("eval", help="linear-probe accuracy over random splits")
    _common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--ratios", type=_float_list, default=(0.1, 0.1, 0.8))
    p.add_argument("--stratified", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--probe-epochs", type=int, default=300)
    p.add_argument("--probe-lr", type=float, default=0.1)
    p.add_argument("--per-trial-csv", help="write one row per trial here")

    p = sub.add_parser("verify-theorem", help="check the firing-rate approximation bound")
    _common(p)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--dmax", type=int, default=10)
    p.add_argument("--L", dest="layers", type=int, default=2)
    p.add_argument("--d", dest="features", type=int, default=64)
    p.add_argument("--k", dest="width", type=int, default=8)
    p.add_argument("--T", dest="t_list", type=_int_list, default=[8, 16, 32, 64])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--scale", type=float, default=0.5, help="oracle weight scale")
    p.add_argument("--v-threshold", type=float, default=1.0)
    p.add_argument("--reset", dest="reset_mode", default="by_subtraction")
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = sub.add_parser("energy", help="theoretical energy report as JSON")
    _common(p)
    p.add_argument("--from-history", help="history CSV written by train")
    p.add_argument("--checkpoint")
    p.add_argument("--data")

    p = sub.add_parser("cka", help="feature-group / spike-step CKA")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--matrix", help="write the T x T matrix as CSV here")

    p = sub.add_parser("grad-probe", help="per-step first-layer gradient norms as CSV")
    _common(p)
    p.add_argument("--data", help="CSV dataset directory (default: synthetic SBM)")
    _model_options(p, v_threshold=0.5, t_steps=30, neuron="if")
    p.add_argument("--isolate", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", help="CSV path (default: stdout)")
    return parser


def _option_table(parser):
    """dest -> (option string, is_boolean) for every subcommand."""
    table = {}
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in sub.choices.items():
        opts = {}
        for action in sp._actions:
            if action.option_strings and action.dest not in ("help", "config"):
                opts[action.dest] = (action.option_strings[0],
                                     isinstance(action, argparse.BooleanOptionalAction))
        table[name] = opts
    return table


def read_config(path):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _config_tokens(command, config, table):
    known = set().union(*table.values())
    unknown = sorted(set(config) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    tokens = []
    for key, value in config.items():
        if key not in table[command]:
            continue
        flag, boolean = table[command][key]
        if boolean:
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"config key {key} expects a boolean, got {value!r}")
            on = value.lower() in ("true", "1", "yes")
            tokens.append(flag if on else "--no-" + flag[2:])
        else:
            tokens.append(f"{flag}={value}")
    return tokens


def parse_args(argv):
    parser = build_parser()
    argv = list(argv)
    if not argv or argv[0].startswith("-"):
        parser.parse_args(argv)  # prints help or raises for a missing command
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[1:])
    path = known.config
    if path is None and Path(DEFAULT_CONFIG).is_file():
        path = DEFAULT_CONFIG
    tokens = []
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} does not exist")
        tokens = _config_tokens(argv[0], read_config(path), _option_table(parser))
    args = parser.parse_args([argv[0], *tokens, *argv[1:]])
    if args.seed is None:
        env = os.environ.get("SGCL_SEED")
        try:
            args.seed = int(env) if env is not None else 0
        except ValueError as exc:
            raise ConfigError(f"SGCL_SEED must be an integer, got {env!r}") from exc
    return args


def train_config(args):
    return TrainConfig(
        t_steps=args.t_steps, block_size=args.block_size, epochs=args.epochs,
        optim=OptimConfig(learning_rate=args.learning_rate, weight_decay=args.weight_decay),
        contrast=ContrastConfig(margin=args.margin, edge_drop_p=args.edge_drop, seed=args.seed),
        neuron=_neuron_config(args), depth=args.depth, hidden=args.hidden,
        early_stop_patience=args.patience, seed=args.seed, detach_mode=args.detach_mode)


def _neuron_config(args):
    return NeuronConfig(kind=args.neuron, v_threshold=args.v_threshold,
                        reset_mode=args.reset_mode, tau_m=args.tau_m,
                        surrogate_alpha=args.surrogate_alpha)


def _require_file(path, what):
    if path is None or not Path(path).is_file():
        raise DataError(f"{what} {path} not found")
    return path


def cmd_train(args):
    cfg = train_config(args)
    g = load_graph(args.data)
    params, pred, history = train(g, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.sgcl", params, pred, cfg)
    view = View.build(g, cfg.t_steps)
    spikes = encode(g, view.coeffs, view.groups, params)
    save_embedding(out / "embeddings.sgcb", concat_pool(spikes))
    history.to_csv(out / "history.csv")
    print(f"final_loss={history.epoch_losses()[-1]:.6f} sparsity={sparsity(spikes):.4f}")
    return EXIT_OK


def cmd_embed(args):
    params, _, _ = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    g = load_graph(args.data)
    save_embedding(args.out, embed(g, params))
    return EXIT_OK


def cmd_eval(args):
    z = load_embedding(_require_file(args.embeddings, "embeddings file"))
    labels = load_labels(_require_file(args.labels, "labels file"))
    if labels.size != z.num_nodes:
        raise DimensionError(f"{labels.size} labels for {z.num_nodes} embeddings")
    report = evaluate_trials(z, labels, args.trials, args.ratios, args.stratified, args.seed,
                             args.probe_epochs, args.probe_lr)
    if args.per_trial_csv:
        with open(args.per_trial_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["trial", "seed", "val_acc", "test_acc"])
            writer.writeheader()
            writer.writerows(report["trials"])
    print(json.dumps({"mean_acc": report["mean_acc"], "std_acc": report["std_acc"],
                      "trials": len(report["trials"])}))
    return EXIT_OK


VERIFY_FIELDS = ("seed", "T", "N", "D", "nu", "kappa", "max_error", "bound", "pass")


def cmd_verify_theorem(args):
    if args.reset_mode != "by_subtraction":
        raise UsageError("verify-theorem requires --reset by_subtraction: the approximation "
                         "bound relies on reset by subtraction")
    rows, failed = [], []
    for seed in range(args.seed, args.seed + args.seeds):
        g, oracle = random_instance(seed, args.n, args.dmax, args.layers, args.features,
                                    args.width, args.scale)
        for t in args.t_list:
            rep = verify_bound(g, oracle, t, args.v_threshold)
            row = {"seed": seed, "T": t, "N": rep.num_nodes, "D": rep.max_degree,
                   "nu": f"{rep.nu:.6g}", "kappa": f"{rep.kappa:.6g}",
                   "max_error": f"{rep.max_error:.6g}", "bound": f"{rep.bound:.6g}",
                   "pass": int(rep.ok)}
            rows.append(row)
            if not rep.ok:
                failed.append(row)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=VERIFY_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()
    if failed:
        raise VerificationError("bound violated: " + "; ".join(
            ",".join(str(r[k]) for k in VERIFY_FIELDS) for r in failed))
    return EXIT_OK


def energy_from_history(history):
    """Energy of the last recorded epoch, recomputed from logged spike counts."""
    if not history.rows:
        raise DataError("history has no rows")
    last = max(r["epoch"] for r in history.rows)
    rows = [r for r in history.rows if r["epoch"] == last]
    macs = sum(r["n_nodes"] * r["in_width"] for r in rows)
    return energy_from_counts(macs, sum(r["spikes"] for r in rows))


def cmd_energy(args):
    if args.from_history:
        hist = TrainHistory.from_csv(_require_file(args.from_history, "history file"))
        print(json.dumps(energy_from_history(hist).to_dict()))
        return EXIT_OK
    if not (args.checkpoint and args.data):
        raise ConfigError("energy needs --from-history, or --checkpoint with --data")
    params, _, cfg = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    g = load_graph(args.data)
    view = View.build(g, cfg.t_steps)
    spikes = encode(g, view.coeffs, view.groups, params)
    rep = energy_spikegcl(g.num_nodes, g.num_features, cfg.t_steps, spikes.spike_counts())
    width = cfg.t_steps * cfg.hidden
    out = rep.to_dict()
    out["sparsity"] = sparsity(spikes)
    out["binary_gnn_mj"] = energy_binary_gnn(g.num_nodes, g.num_entries, width, cfg.depth)
    out["full_precision_mj"] = energy_full_precision(g.num_nodes, g.num_entries,
                                                     g.num_features, width, cfg.depth)
    print(json.dumps(out))
    return EXIT_OK


def cmd_cka(args):
    params, _, cfg = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    g = load_graph(args.data)
    view = View.build(g, cfg.t_steps)
    spikes = encode(g, view.coeffs, view.groups, params)
    m = cka_matrix(view.groups, [spikes.step(t) for t in range(cfg.t_steps)])
    if args.matrix:
        np.savetxt(args.matrix, m, delimiter=",", fmt="%.6g")
    diag = np.diag(m)
    off = m[~np.eye(m.shape[0], dtype=bool)]
    print(json.dumps({
        "t_steps": cfg.t_steps,
        "diagonal_dominance": diagonal_dominance(m),
        "mean_diagonal": float(np.nanmean(diag)) if np.any(~np.isnan(diag)) else None,
        "mean_off_diagonal": float(np.nanmean(off)) if np.any(~np.isnan(off)) else None,
    }))
    return EXIT_OK


def cmd_grad_probe(args):
    args.epochs, args.learning_rate, args.weight_decay = 1, 1e-3, 0.0
    args.patience, args.detach_mode = 1, "state"
    cfg = train_config(args)
    g = load_graph(args.data) if args.data else sbm(n=200, d=64, seed=args.seed)
    norms = grad_norm_probe(g, cfg, args.isolate)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["step", "norm"])
        for t, n in enumerate(norms, 1):
            writer.writerow([t, f"{n:.9g}"])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "embed": cmd_embed, "eval": cmd_eval,
    "verify-theorem": cmd_verify_theorem, "energy": cmd_energy, "cka": cmd_cka,
    "grad-probe": cmd_grad_probe,
}


def exit_code(exc):
    if isinstance(exc, VerificationError):
        return EXIT_VERIFY
    if isinstance(exc, (NumericError, UndefinedSimilarityError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, DimensionError, DegenerateError, OSError)):
        return EXIT_DATA
    return EXIT_CONFIG


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {args.threads}")
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.command](args)
    except (ConfigError, UsageError, DataError, DimensionError, DegenerateError, OSError,
            NumericError, UndefinedSimilarityError, VerificationError) as exc:
        print(f"sgcl: error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
