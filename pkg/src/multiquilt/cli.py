"""Command line entry point.

Every command writes one JSON record holding the tool version, the command
name, the full option set and the seed next to the result.  Keys are sorted and
nothing time-dependent is recorded, so equal options give equal bytes.

Exit codes: 0 success, 1 domain error (a JSON error record goes to stderr and
to ``--out`` when given), 2 usage error.
"""
from __future__ import annotations

import json
import math
import sys
from importlib import resources

import click

from . import __version__
from . import ainfty as A
from . import floer_numerics as F
from . import moduli as M
from . import surfaces as S
from . import trees as T

SCHEMA = 1
DOMAIN_ERRORS = (T.TreeError, M.ModuliError, S.SurfaceError, A.AlgebraError, F.NumericsError,
                 json.JSONDecodeError, KeyError)


class DomainFailure(Exception):
    """A check ran and failed; reported like a domain error."""


def _clean(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _clean(x.item())
    return x


def _record(command: str, config: dict, result) -> str:
    rec = {
        "tool": "multiquilt",
        "version": __version__,
        "schema": SCHEMA,
        "command": command,
        "config": _clean(config),
        "seed": config.get("seed"),
        "result": _clean(result),
    }
    return json.dumps(rec, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _run(ctx: click.Context, fn):
    """Call ``fn`` and turn domain errors into exit code 1."""
    params = dict(ctx.params)
    out = params.get("out")
    try:
        result = fn()
    except (DomainFailure, *DOMAIN_ERRORS) as exc:
        err = {"type": type(exc).__name__, "message": str(exc)}
        text = _record(ctx.info_name, params, None).rstrip("\n")
        rec = json.loads(text)
        rec["error"] = err
        body = json.dumps(rec, sort_keys=True, indent=2) + "\n"
        click.echo(body, err=True, nl=False)
        if out:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(body)
        ctx.exit(1)
    _emit(_record(ctx.info_name, params, result), out)


def _read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_columns(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


out_option = click.option("--out", type=click.Path(dir_okay=False, writable=True),
                          help="Write the JSON record here instead of stdout.")
in_file = click.Path(exists=True, dir_okay=False, readable=True)


@click.group()
@click.version_option(__version__, prog_name="multiquilt")
@click.option("--config", type=in_file,
              help="JSON file mapping command names to option defaults.")
@click.pass_context
def cli(ctx: click.Context, config):
    """Multiplihedra, quilted surfaces, A-infinity checks and gluing numerics."""
    if config:
        try:
            data = _read_json(config)
        except json.JSONDecodeError as exc:
            raise click.BadParameter(f"config is not JSON: {exc}", param_hint="--config")
        ctx.default_map = {k.replace("_", "-"): v for k, v in data.items()}


# ---------------------------------------------------------------------------
# combinatorics

@cli.command("enumerate")
@click.option("--d", "d", type=click.IntRange(1, 9), required=True, help="Number of leaves.")
@click.option("--uncolored", is_flag=True, help="Plain ribbon trees instead of colored ones.")
@out_option
@click.pass_context
def enumerate_cmd(ctx, d, uncolored, out):
    """List all strata for d leaves."""
    def go():
        if uncolored and d < 2:
            raise T.TreeError("no stable uncolored tree with fewer than 2 leaves")
        strata = T.enumerate_strata(d, colored=not uncolored)
        rows = []
        for t in strata:
            lab = M._label_str(T.facet_label(t)) if not uncolored else None
            rows.append({"tree": str(t), "dim": T.stratum_dim(t), "label": lab})
        dims = [r["dim"] for r in rows]
        counts = [dims.count(k) for k in range(max(dims) + 1)]
        return {"count": len(rows), "counts_by_dim": counts, "strata": rows}
    _run(ctx, go)


@cli.command("faces")
@click.option("--d", "d", type=click.IntRange(1, M.MAX_LATTICE_D), required=True)
@out_option
@click.pass_context
def faces_cmd(ctx, d, out):
    """Face lattice of the colored strata."""
    _run(ctx, lambda: M.face_lattice(d).to_dict())


@cli.command("relations")
@click.option("--tree", "tree_path", type=in_file, required=True, help="Tree JSON.")
@out_option
@click.pass_context
def relations_cmd(ctx, tree_path, out):
    """Linear relations cutting out the admissible lengths of a tree."""
    def go():
        tree = T.from_dict(_read_json(tree_path))
        diags = T.validate(tree)
        if diags:
            raise T.TreeError("; ".join(diags))
        rs = M.relations(tree)
        return {"tree": str(tree), "edges": [list(e) for e in rs.variables], "rank": rs.rank,
                "equations": rs.describe(), "cone_dim": M.cone_dim(tree)}
    _run(ctx, go)


@cli.command("glue")
@click.option("--type", "kind", type=click.Choice(["1", "2"]), required=True)
@click.option("--delta", type=float, required=True, help="Gluing parameter in (0, 1).")
@click.option("--lower", "lower", type=in_file, required=True, help="Lower metric tree.")
@click.option("--upper", "upper", type=in_file, multiple=True, required=True,
              help="Upper metric tree(s); repeat for Type 2.")
@click.option("--leaf", type=int, default=None,
              help="Type 1: leaf of the lower tree to glue at, counted from 1.")
@out_option
@click.pass_context
def glue_cmd(ctx, kind, delta, lower, upper, leaf, out):
    """Glue metric trees along a Type 1 or Type 2 facet."""
    def go():
        g = M.GluingParameter(delta)
        r_lo = M.metric_from_dict(_read_json(lower))
        parts = [M.metric_from_dict(_read_json(p)) for p in upper]
        if kind == "1":
            if leaf is None or len(parts) != 1:
                raise M.ModuliError("Type 1 needs --leaf and exactly one --upper")
            glued = M.glue_type1(r_lo, parts[0], leaf - 1, g)
        else:
            glued = M.glue_type2(r_lo, parts, g)
        return {"R": g.R, "tree": str(glued.tree), "metric_tree": glued.to_dict(),
                "admissible": M.is_admissible(glued)}
    _run(ctx, go)


@cli.command("surface")
@click.option("--tree", "tree_path", type=in_file, required=True, help="Metric tree JSON.")
@click.option("--svg", type=click.Path(dir_okay=False, writable=True), help="Also write SVG here.")
@click.option("--clip", type=click.FloatRange(min=0, min_open=True), default=10.0, show_default=True,
              help="Draw infinite ends up to this |s|.")
@out_option
@click.pass_context
def surface_cmd(ctx, tree_path, svg, clip, out):
    """Quilted surface of a metric tree."""
    def go():
        mt = M.metric_from_dict(_read_json(tree_path))
        surf = S.surface_from_colored_tree(mt) if mt.tree.quilted else S.surface_from_tree(mt)
        if svg:
            with open(svg, "wb") as fh:
                fh.write(S.export(surf, "svg", clip=clip))
        return S.to_dict(surf)
    _run(ctx, go)


# ---------------------------------------------------------------------------
# algebra

def bundled_dga_path():
    return resources.files("multiquilt").joinpath("data/exterior_dga.json")


@cli.command("ainfty-check")
@click.option("--a", "a_path", type=in_file, help="A-infinity data (source).")
@click.option("--b", "b_path", type=in_file, help="Functor target (default: the source).")
@click.option("--functor", "f_path", type=in_file, help="Functor data.")
@click.option("--identity", is_flag=True, help="Check the identity functor of --a.")
@click.option("--example", is_flag=True, help="Use the bundled exterior-algebra dga as --a.")
@click.option("--dmax", type=click.IntRange(1, 8), default=3, show_default=True)
@click.option("--mod2", is_flag=True, help="Reduce coefficients mod 2 and drop signs.")
@out_option
@click.pass_context
def ainfty_cmd(ctx, a_path, b_path, f_path, identity, example, dmax, mod2, out):
    """Check A-infinity and functor relations up to arity dmax."""
    if not a_path and not example:
        raise click.UsageError("give --a or --example")
    if b_path and not f_path:
        raise click.UsageError("--b needs --functor")

    def go():
        if example:
            data = A.algebra_from_dict(json.loads(bundled_dga_path().read_text(encoding="utf-8")))
        else:
            data = A.algebra_from_dict(_read_json(a_path))
        res = {"algebra": {str(k): str(v) for k, v in A.check_ainfty(data, dmax, mod2).items()}}
        if not mod2:
            res["bar"] = {str(k): str(v) for k, v in A.check_bar(data, dmax).items()}
        target, fun = None, None
        if identity:
            target, fun = data, A.identity_functor(data)
        elif f_path:
            target = A.algebra_from_dict(_read_json(b_path)) if b_path else data
            fun = A.functor_from_dict(_read_json(f_path), data, target)
        if fun is not None:
            res["target"] = {str(k): str(v) for k, v in A.check_ainfty(target, dmax, mod2).items()}
            res["functor"] = {str(k): str(v)
                              for k, v in A.check_functor(data, target, fun, dmax, mod2).items()}
        bad = [name for name, vals in res.items() if any(v != "0" for v in vals.values())]
        res["holds"] = not bad
        if bad:
            raise DomainFailure("nonzero residual in " + ", ".join(bad) + ": " + json.dumps(res, sort_keys=True))
        return res
    _run(ctx, go)


# ---------------------------------------------------------------------------
# numerics

def _problem(alpha, eta, p):
    return F.StripProblem(alpha, F.cubic_hamiltonian(eta) if eta else (), p)


def _modes(items):
    out = {}
    for item in items:
        k, _, c = item.partition(":")
        try:
            out[int(k)] = float(c)
        except ValueError:
            raise click.BadParameter(f"mode must look like k:c, got {item!r}", param_hint="--mode")
    return out


def _pieces(alpha, amplitude, hs, nt, reach, problem):
    lo = F.discrete_modes(alpha, {-1: amplitude}, F.Grid.spaced(-2.0, reach, hs, nt))
    up = F.discrete_modes(alpha, {0: amplitude}, F.Grid.spaced(-reach, 2.0, hs, nt))
    if problem.hamiltonian:
        lo, up = F.correct(problem, lo), F.correct(problem, up)
    return lo, up


alpha_option = click.option("--alpha", type=float, default=math.pi / 2, show_default=True,
                            help="Angle of the second boundary line.")
grid_options = [
    click.option("--hs", type=click.FloatRange(min=0, min_open=True), default=0.1, show_default=True),
    click.option("--nt", type=click.IntRange(8, None), default=9, show_default=True),
]


def _grid_opts(fn):
    for opt in reversed(grid_options):
        fn = opt(fn)
    return fn


@cli.command("decay")
@alpha_option
@click.option("--mode", "modes", multiple=True, default=("0:1",), show_default=True,
              help="Mode k with coefficient c as k:c; repeatable.")
@click.option("--S", "S", type=click.FloatRange(min=0, min_open=True), default=4.0, show_default=True)
@click.option("--hs", type=click.FloatRange(min=0, min_open=True), default=0.05, show_default=True)
@click.option("--nt", type=click.IntRange(8, None), default=17, show_default=True)
@click.option("--T", "Ts", type=float, multiple=True, default=(1.0, 2.0, 3.0), show_default=True)
@click.option("--kappa", type=float, default=None, help="Decay rate for quantization (default: fitted).")
@click.option("--plot-data", type=click.Path(dir_okay=False, writable=True), help="Columns s f(s).")
@out_option
@click.pass_context
def decay_cmd(ctx, alpha, modes, S, hs, nt, Ts, kappa, plot_data, out):
    """Energy decay, convexity and quantization for a sum of exact modes."""
    def go():
        coeffs = _modes(modes)
        F.StripProblem(alpha)
        u = F.exact_modes(alpha, coeffs, F.Grid.spaced(-S, S, hs, nt))
        prof = F.energy_profile(u)
        k = prof.kappa if kappa is None else kappa
        quant = []
        for T_ in Ts:
            ET, bound = F.check_quantization(u, T_, k)
            quant.append({"T": T_, "E_T": ET, "bound": bound, "holds": ET <= bound})
        if plot_data:
            _write_columns(plot_data, ["s", "f"], zip(u.grid.s, prof.f))
        return {"kappa_fit": prof.kappa, "window": list(prof.window), "energy": prof.E,
                "convexity_min": F.check_convexity(u), "quantization": quant,
                "mode_rates": {str(j): abs(F.mode_rate(alpha, j)) for j in sorted(coeffs)}}
    _run(ctx, go)


@cli.command("preglue")
@alpha_option
@click.option("--R", "Rs", type=float, multiple=True, default=(6.0, 8.0, 10.0, 12.0, 14.0),
              show_default=True)
@click.option("--amplitude", type=float, default=0.02, show_default=True)
@click.option("--eta", type=float, default=0.0, show_default=True)
@click.option("--p", type=float, default=4.0, show_default=True)
@_grid_opts
@click.option("--plot-data", type=click.Path(dir_okay=False, writable=True), help="Columns R eps(R).")
@out_option
@click.pass_context
def preglue_cmd(ctx, alpha, Rs, amplitude, eta, p, hs, nt, plot_data, out):
    """Pregluing error as a function of the gluing length."""
    def go():
        prob = _problem(alpha, eta, p)
        lo, up = _pieces(alpha, amplitude, hs, nt, max(Rs) / 2 + 1, prob)
        rows = [{"R": R, "eps": F.residual(prob, F.preglue(lo, up, R))[1]} for R in Rs]
        res = {"rows": rows}
        if len(Rs) >= 2 and all(r["eps"] > 0 for r in rows):
            import numpy as np
            res["log_slope"] = float(np.polyfit(list(Rs), [math.log(r["eps"]) for r in rows], 1)[0])
        if plot_data:
            _write_columns(plot_data, ["R", "eps"], [(r["R"], r["eps"]) for r in rows])
        return res
    _run(ctx, go)


@cli.command("glue-newton")
@alpha_option
@click.option("--R", "Rs", type=float, multiple=True, default=(8.0, 10.0, 12.0), show_default=True)
@click.option("--eta", type=float, default=F.DEFAULT_ETA, show_default=True)
@click.option("--amplitude", type=float, default=0.02, show_default=True)
@click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=1e-10, show_default=True)
@click.option("--p", type=float, default=4.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--samples", type=click.IntRange(0, None), default=10, show_default=True,
              help="Quadratic-estimate samples per run.")
@_grid_opts
@out_option
@click.pass_context
def glue_newton_cmd(ctx, alpha, Rs, eta, amplitude, tol, p, seed, samples, hs, nt, out):
    """Newton gluing with the implicit-function-theorem bound."""
    def go():
        prob = _problem(alpha, eta, p)
        lo, up = _pieces(alpha, amplitude, hs, nt, max(Rs) / 2 + 1, prob)
        reports = []
        for R in Rs:
            _, rep = F.newton_glue(prob, F.preglue(lo, up, R), tol=tol, R=R,
                                   quadratic_samples=samples, seed=seed)
            reports.append(rep.to_dict())
        Cs = [r["C_hat"] for r in reports]
        return {"runs": reports, "C_spread": (max(Cs) - min(Cs)) / min(Cs)}
    _run(ctx, go)


@cli.command("embed")
@click.option("--S", "Ss", type=float, multiple=True, default=(2.0, 4.0, 8.0, 16.0, 32.0, 64.0),
              show_default=True)
@click.option("--p", type=float, default=4.0, show_default=True)
@click.option("--trials", type=click.IntRange(1, None), default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--hs", type=click.FloatRange(min=0, min_open=True), default=0.1, show_default=True)
@click.option("--nt", type=click.IntRange(8, None), default=17, show_default=True)
@click.option("--plot-data", type=click.Path(dir_okay=False, writable=True), help="Columns S ratio.")
@out_option
@click.pass_context
def embed_cmd(ctx, Ss, p, trials, seed, hs, nt, plot_data, out):
    """Empirical sup / W^{1,p} ratios on strips of growing length."""
    def go():
        rows = [{"S": S_, "ratio": F.embedding_constant(S_, p, trials, seed, hs, nt)} for S_ in Ss]
        if plot_data:
            _write_columns(plot_data, ["S", "ratio"], [(r["S"], r["ratio"]) for r in rows])
        return {"rows": rows}
    _run(ctx, go)


@cli.command("surject")
@alpha_option
@click.option("--R", "Rs", type=float, multiple=True, default=(8.0, 9.0, 10.0, 11.0, 12.0),
              show_default=True)
@click.option("--eta", type=float, default=F.DEFAULT_ETA, show_default=True)
@click.option("--amplitude", type=float, default=0.02, show_default=True)
@click.option("--eps", type=click.FloatRange(min=0, min_open=True), default=0.01, show_default=True)
@click.option("--candidates", type=click.IntRange(0, None), default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--p", type=float, default=4.0, show_default=True)
@_grid_opts
@out_option
@click.pass_context
def surject_cmd(ctx, alpha, Rs, eta, amplitude, eps, candidates, seed, p, hs, nt, out):
    """Newton solutions seeded near preglued curves versus the glued family."""
    def go():
        prob = _problem(alpha, eta, p)
        lo, up = _pieces(alpha, amplitude, hs, nt, max(Rs) / 2 + 1, prob)
        rep = F.surjectivity_probe(prob, F.BrokenPair(lo, up, 3), list(Rs), eps, candidates, seed)
        return rep.to_dict()
    _run(ctx, go)


def main(argv=None):
    return cli.main(args=argv, prog_name="multiquilt")


if __name__ == "__main__":
    sys.exit(main())
