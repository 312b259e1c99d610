"""Command-line front door for sampling, empirical measures, rates, and Gibbs runs.

Every run is fully determined by its flags and seed: outputs are written with
sorted keys and fixed separators, and each output file embeds the library
version plus a hash of the echoed configuration, so identical invocations
produce byte-identical artifacts.  Structured data is JSON; tabular reports
are CSV.  The process exits 0 only when every requested check passes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from typing import Dict, List, Optional, Tuple

from . import __version__
from .gibbs import GibbsProblem, conditional_mc, solve
from .measures import (
    DegreeLaw,
    DepthChain,
    TreeMeasure,
    is_admissible,
    mtp_check,
    pair_measure,
    size_bias,
)
from .empirical import component_measure, neighborhood_measure
from .rates import (
    ReferenceLaw,
    combinatorial_rate,
    component_rate,
    extension_chain,
    intermediate_rate,
)
from .samplers import (
    MarkedGraph,
    ModelConfig,
    assign_marks,
    make_rng,
    sample_cm,
    sample_er,
    sample_fe,
    sample_ugwt,
)
from .trees import canonicalize, split_at_child

DEFAULT_TOL = 1e-9


# ---------------------------------------------------------------- serialization


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _with_meta(payload: dict, config: dict) -> dict:
    out = dict(payload)
    out["config"] = config
    out["config_hash"] = _config_hash(config)
    out["version"] = __version__
    return out

def _write_json(path: str, payload: dict, config: dict) -> None:
    blob = json.dumps(_with_meta(payload, config), sort_keys=True,
                      separators=(",", ":"))
    with open(path, "w") as f:
        f.write(blob + "\n")


def _write_csv(path: str, rows: List[List], config: dict) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["#config_hash", _config_hash(config)])
        w.writerow(["#version", __version__])
        for row in rows:
            w.writerow(row)


def _measure_csv_rows(m: TreeMeasure) -> List[List]:
    rows: List[List] = [["encoding", "weight"]]
    for t, w in m.items():
        rows.append([t.encoding.hex(), repr(w)])
    rows.append(["__non_tree_mass__", repr(m.non_tree_mass)])
    return rows


def _load_value(text: str):
    """A flag value: path to a JSON file, or an inline JSON literal."""
    if os.path.exists(text):
        with open(text) as f:
            return json.load(f)
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise SystemExit(f"cannot parse {text!r}: not a file or JSON literal")


def _parse_alpha(value) -> DegreeLaw:
    obj = _load_value(value) if isinstance(value, str) else value
    if not isinstance(obj, dict):
        raise SystemExit("alpha must be a JSON object mapping degree to weight")
    return DegreeLaw({int(k): float(v) for k, v in obj.items()})


def _parse_vector(value) -> Tuple[float, ...]:
    obj = _load_value(value) if isinstance(value, str) else value
    return tuple(float(x) for x in obj)


def _parse_matrix(value) -> Tuple[Tuple[float, ...], ...]:
    obj = _load_value(value) if isinstance(value, str) else value
    return tuple(tuple(float(x) for x in row) for row in obj)


def _load_levels(value) -> List[TreeMeasure]:
    obj = _load_value(value)
    if isinstance(obj, dict) and "levels" in obj:
        return [TreeMeasure.from_obj(o) for o in obj["levels"]]
    if isinstance(obj, dict) and "measure" in obj:
        return [TreeMeasure.from_obj(obj["measure"])]
    return [TreeMeasure.from_obj(obj)]


def _structured_error(message: str, kind: str) -> int:
    print(json.dumps({"error": {"type": kind, "message": message}},
                     sort_keys=True))
    return 2


# ---------------------------------------------------------------- subcommands


def cmd_sample(args) -> int:
    config = {
        "subcommand": "sample",
        "ensemble": args.ensemble.upper(),
        "n": args.n,
        "nu": list(_parse_vector(args.nu)),
        "xi": [list(r) for r in _parse_matrix(args.xi)],
        "alpha": {str(k): v for k, v in _parse_alpha(args.alpha).items()}
        if args.alpha else None,
        "kappa": args.kappa,
        "m": args.m,
        "seed": args.seed,
    }
    nu = _parse_vector(args.nu)
    xi = _parse_matrix(args.xi)
    ens = args.ensemble.upper()
    rng = make_rng(args.seed)
    if ens == "CM":
        if not args.alpha:
            return _structured_error("CM sampling needs --alpha", "bad_config")
        cfg = ModelConfig(ensemble="CM", nu=nu, xi=xi, seed=args.seed,
                          alpha=_parse_alpha(args.alpha))
        g = sample_cm(args.n, cfg, rng)
    elif ens == "FE":
        if args.m is None and args.kappa is None:
            return _structured_error("FE sampling needs --m or --kappa", "bad_config")
        m = args.m if args.m is not None else int(round(args.n * args.kappa / 2.0))
        g = sample_fe(args.n, m, rng)
    elif ens == "ER":
        if args.kappa is None:
            return _structured_error("ER sampling needs --kappa", "bad_config")
        g = sample_er(args.n, args.kappa, rng)
    else:
        return _structured_error(f"unknown ensemble {args.ensemble!r}", "bad_config")
    g = assign_marks(g, nu, xi, rng)
    _write_json(args.out, {"graph": g.to_obj(), "n": g.n}, config)
    print(f"wrote {args.out} ({g.n} vertices, {len(g.edges)} edges)")
    return 0


def _load_graph(path: str) -> MarkedGraph:
    obj = _load_value(path)
    if isinstance(obj, dict) and "graph" in obj:
        obj = obj["graph"]
    return MarkedGraph.from_obj(obj)


def cmd_empirical(args) -> int:
    config = {
        "subcommand": "empirical",
        "graph": args.graph,
        "depth": args.depth,
        "out_prefix": args.out_prefix,
    }
    g = _load_graph(args.graph)
    outputs = []
    L = neighborhood_measure(g)
    _write_json(f"{args.out_prefix}_L.json", {"measure": L.to_obj()}, config)
    _write_csv(f"{args.out_prefix}_L.csv", _measure_csv_rows(L), config)
    outputs.append(f"{args.out_prefix}_L.json")
    for h in range(1, args.depth + 1):
        U = component_measure(g, h)
        _write_json(f"{args.out_prefix}_U{h}.json", {"measure": U.to_obj()}, config)
        _write_csv(f"{args.out_prefix}_U{h}.csv", _measure_csv_rows(U), config)
        outputs.append(f"{args.out_prefix}_U{h}.json")
    print("wrote " + ", ".join(outputs))
    return 0


def cmd_rate(args) -> int:
    config = {
        "subcommand": "rate",
        "ensemble": args.ensemble,
        "depth": args.depth,
        "input": args.input,
        "law": args.law,
        "beta": args.beta,
        "kappa": args.kappa,
        "form": args.form,
    }
    levels = _load_levels(args.input)
    law = ReferenceLaw.from_obj(_load_value(args.law))
    beta = args.beta if args.beta is not None else levels[0].mean_degree()
    ensemble = args.ensemble.upper() if args.ensemble else None
    forms = {
        "component": component_rate,
        "intermediate": intermediate_rate,
        "combinatorial": combinatorial_rate,
    }
    wanted = list(forms) if args.form == "all" else [args.form]
    reports = {}
    try:
        for name in wanted:
            reports[name] = forms[name](
                levels, beta, law, ensemble=ensemble, kappa=args.kappa,
                depth=args.depth,
            )
    except ValueError as e:
        return _structured_error(str(e), "rate_error")
    payload = {"reports": {k: r.to_obj() for k, r in reports.items()}}
    if len(reports) > 1:
        vals = [r.value for r in reports.values()]
        finite = all(math.isfinite(v) for v in vals)
        payload["agreement"] = {
            "max_spread": (max(vals) - min(vals)) if finite
            else (0.0 if len(set(vals)) == 1 else math.inf),
            "values": {k: r.value for k, r in reports.items()},
        }
    _write_json(args.report, payload, config)
    for k, r in reports.items():
        print(f"{k}: value={r.value!r}")
    print(f"wrote {args.report}")
    return 0


def _pair_from_size_bias(level: TreeMeasure, h: int):
    """Pair law reassembled from the size-biased law with a uniform child cut."""
    sb = size_bias(level)
    acc: Dict[Tuple, List[float]] = {}
    for t, w in sb.items():
        d = t.root_degree
        for i in range(d):
            branch, rest = split_at_child(t, i)
            key = (branch.truncated(h - 1), rest.truncated(h - 1))
            acc.setdefault(key, []).append(w / d)
    return {k: math.fsum(ws) for k, ws in acc.items()}


def cmd_verify(args) -> int:
    config = {
        "subcommand": "verify",
        "input": args.input,
        "law": args.law,
        "ensemble": args.ensemble,
        "depth": args.depth,
        "kappa": args.kappa,
        "tol": args.tol,
    }
    tol = args.tol
    levels = _load_levels(args.input)
    depth = args.depth if args.depth is not None else len(levels)
    rows: List[dict] = []

    def add(check: str, detail: str, residual: float, row_tol: float) -> None:
        rows.append({
            "check": check,
            "detail": detail,
            "residual": residual,
            "tol": row_tol,
            "status": "PASS" if residual <= row_tol else "FAIL",
        })

    for h, level in enumerate(levels, start=1):
        mass = math.fsum(w for _, w in level.items()) + level.non_tree_mass
        add("normalization", f"level {h}", abs(mass - 1.0), tol)
        add("tree_support", f"level {h}", level.non_tree_mass, tol)
    if len(levels) >= 2:
        chain = DepthChain(levels)
        add("chain_consistency", f"levels 1..{len(levels)}",
            chain.truncation_defect(), tol)
    for h, level in enumerate(levels, start=1):
        if level.non_tree_mass > tol or level.mean_degree() <= 0:
            continue
        pm = pair_measure(level, h)
        _, defect = is_admissible(pm)
        add("admissibility", f"level {h}", defect, tol)
        recon = _pair_from_size_bias(level, h)
        drift = 0.5 * math.fsum(
            abs(pm.get(*k) - recon.get(k, 0.0))
            for k in set(recon) | {k for k, _ in pm.items()}
        )
        add("pair_size_bias", f"level {h}", drift, tol)
    deepest = levels[-1]
    try:
        add("mass_transport", f"level {len(levels)}",
            mtp_check(deepest, len(levels)), tol)
    except ValueError as e:
        add("mass_transport", str(e), math.inf, tol)
    if args.law:
        law = ReferenceLaw.from_obj(_load_value(args.law))
        beta = levels[0].mean_degree()
        ensemble = args.ensemble.upper() if args.ensemble else None
        try:
            rc = component_rate(levels, beta, law, ensemble=ensemble,
                                kappa=args.kappa, depth=depth)
            ri = intermediate_rate(levels, beta, law, ensemble=ensemble,
                                   kappa=args.kappa, depth=depth)
            rm = combinatorial_rate(levels, beta, law, ensemble=ensemble,
                                    kappa=args.kappa, depth=depth)
            vals = [rc.value, ri.value, rm.value]
            if all(math.isfinite(v) for v in vals):
                add("three_form_agreement", f"depth {depth}",
                    max(vals) - min(vals), max(tol, 1e-8))
            else:
                add("three_form_agreement", f"depth {depth}",
                    0.0 if len(set(vals)) == 1 else math.inf, max(tol, 1e-8))
        except ValueError as e:
            add("three_form_agreement", str(e), math.inf, max(tol, 1e-8))
    all_pass = all(r["status"] == "PASS" for r in rows)
    payload = {"rows": rows, "all_pass": all_pass}
    if args.report:
        _write_json(args.report, payload, config)
        _write_csv(
            os.path.splitext(args.report)[0] + ".csv",
            [["check", "detail", "residual", "tol", "status"]]
            + [[r["check"], r["detail"], repr(r["residual"]), repr(r["tol"]),
                r["status"]] for r in rows],
            config,
        )
    for r in rows:
        print(f"{r['status']} {r['check']} [{r['detail']}] "
              f"residual={r['residual']:.3e}")
    print("ALL PASS" if all_pass else "FAILURES PRESENT")
    return 0 if all_pass else 1


def cmd_gibbs(args) -> int:
    config = {
        "subcommand": "gibbs",
        "alpha": {str(k): v for k, v in _parse_alpha(args.alpha).items()},
        "nu": list(_parse_vector(args.nu)),
        "hfun": list(_parse_vector(args.hfun)),
        "c": args.c,
        "delta": args.delta,
        "n": args.n,
        "samples": args.samples,
        "seed": args.seed,
    }
    try:
        problem = GibbsProblem(
            _parse_alpha(args.alpha),
            _parse_vector(args.nu),
            _parse_vector(args.hfun),
            args.c,
            args.delta,
        )
        solution = solve(problem)
    except ValueError as e:
        return _structured_error(str(e), "hypothesis_violation")
    sol_path = f"{args.out_prefix}_solution.json"
    _write_json(sol_path, {"solution": solution.to_obj()}, config)
    print(f"lambda={solution.lam!r} value={solution.value!r}")
    print(f"wrote {sol_path}")
    if args.samples <= 0:
        print("mc skipped (samples=0)")
        return 0
    try:
        rep = conditional_mc(
            problem, args.n, args.samples, make_rng(args.seed),
            solution=solution,
        )
    except (ValueError, RuntimeError) as e:
        return _structured_error(str(e), "mc_error")
    mc_path = f"{args.out_prefix}_mc.csv"
    rows: List[List] = [["key", "value"]]
    obj = rep.to_obj()
    for key in ("n", "delta", "threshold", "draws", "accepted",
                "acceptance_rate", "joint_tv", "joint_se", "leaf_tv",
                "leaf_se", "degree_marginal_exact", "fast_path"):
        rows.append([key, repr(obj[key])])
    for cell, w in sorted(rep.joint_emp.items()):
        rows.append([f"joint:{cell[0]},{cell[1]}", repr(w)])
    for x, w in sorted(rep.leaf_emp.items()):
        rows.append([f"leaf:{x}", repr(w)])
    _write_csv(mc_path, rows, config)
    print(f"accepted={rep.accepted} acceptance_rate={rep.acceptance_rate!r} "
          f"joint_tv={rep.joint_tv!r}")
    print(f"wrote {mc_path}")
    return 0


def cmd_extend(args) -> int:
    config = {
        "subcommand": "extend",
        "input": args.input,
        "depth": args.depth,
        "samples": args.samples,
        "seed": args.seed,
    }
    levels = _load_levels(args.input)
    rho = levels[-1]
    h = rho.depth_bound
    if args.samples > 0:
        rng = make_rng(args.seed)
        counts: Dict = {}
        for _ in range(args.samples):
            t = canonicalize(sample_ugwt(rho, h, args.depth, rng))
            counts[t] = counts.get(t, 0) + 1
        out = TreeMeasure(
            {t: c / args.samples for t, c in counts.items()}, 0.0, args.depth
        )
        payload = {"measure": out.to_obj(), "mode": "sampled"}
    else:
        chain = extension_chain(rho, args.depth)
        payload = {
            "levels": [chain.level(i).to_obj() for i in range(1, len(chain) + 1)],
            "mode": "exact",
        }
    _write_json(args.out, payload, config)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="graphld",
        description="Marked sparse random graphs: sampling, local empirical "
                    "measures, large-deviation rates, Gibbs conditioning.",
    )
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("sample", help="sample a marked graph")
    s.add_argument("--ensemble", required=True, choices=["cm", "fe", "er"])
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--nu", default="[1.0]", help="vertex mark law (JSON or file)")
    s.add_argument("--xi", default="[[1.0]]", help="edge mark pair law")
    s.add_argument("--alpha", help="degree law for cm (JSON object or file)")
    s.add_argument("--kappa", type=float, help="mean degree for er/fe")
    s.add_argument("--m", type=int, help="edge count for fe")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("empirical", help="neighborhood + component measures")
    s.add_argument("--graph", required=True)
    s.add_argument("--depth", type=int, default=1)
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_empirical)

    s = sub.add_parser("rate", help="evaluate the rate representations")
    s.add_argument("--ensemble", choices=["cm", "fe", "er"])
    s.add_argument("--depth", type=int)
    s.add_argument("--input", required=True, help="measure or level list JSON")
    s.add_argument("--law", required=True, help="reference law JSON")
    s.add_argument("--beta", type=float)
    s.add_argument("--kappa", type=float)
    s.add_argument("--form", default="all",
                   choices=["all", "component", "intermediate", "combinatorial"])
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_rate)

    s = sub.add_parser("verify", help="normalization/admissibility/MTP/rate checks")
    s.add_argument("--input", required=True)
    s.add_argument("--law")
    s.add_argument("--ensemble", choices=["cm", "fe", "er"])
    s.add_argument("--depth", type=int)
    s.add_argument("--kappa", type=float)
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--report")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("gibbs", help="solve the conditioning problem + MC check")
    s.add_argument("--alpha", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--hfun", required=True)
    s.add_argument("--c", type=float, required=True)
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--n", type=int, default=40)
    s.add_argument("--samples", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-prefix", default="gibbs")
    s.set_defaults(func=cmd_gibbs)

    s = sub.add_parser("extend", help="deeper laws from a depth-h law")
    s.add_argument("--input", required=True)
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--samples", type=int, default=0,
                   help="0: exact extension chain; >0: tree samples")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extend)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
