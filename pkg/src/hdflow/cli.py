"""Command-line front end.

Every subcommand reads canonical JSON, writes canonical JSON, and keeps
the determinism contract: identical (command, input, seed) always
produce identical output bytes.  Exit codes are 0 when every asserted
invariant holds, 1 when a mathematical invariant fails on well-formed
input, and 2 for malformed documents or unusable flags; contract
failures are reported as machine-readable error objects carrying a
location path.  The HDF_BUDGET environment variable supplies a default
search budget when --budget is absent.
"""

import functools
import os
import random

import click

from . import corpus, serialize
from .cartier import (
    inverse_cartier_1,
    lifting_change_transport,
    ov_sign_check,
    p_curvature,
    p_curvature_prediction,
)
from .errors import HdflowError
from .filtration import is_higgs_semistable, simpson_filtration
from .flow import FlowPolicy, detect_period, run_flow
from .graded import grade, is_transversal
from .serialize import (
    SchemaError,
    canonical_bytes,
    error_object,
    filtration_to_json,
    flat_from_json,
    flow_trace_to_json,
    graded_from_json,
    graded_to_json,
    higgs_from_json,
    lifting_from_json,
    matrix_from_json,
    matrix_to_json,
    parse_bytes,
    require_tag,
    run_manifest,
    sha256_hex,
    witt_tuple_from_json,
    write_atomic,
)
from .witt import (
    adapted_dr_matrix,
    filtration_steps_from_flag,
    gamma_relations_check,
    gn_construct,
    sharp_construct,
    w2_flow_step,
)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONTRACT = 2


# ---------------------------------------------------------------------------
# shared plumbing


def _print_doc(doc):
    click.echo(canonical_bytes(doc).decode("ascii"), nl=False)


def _fail(code, message, location, exit_code):
    _print_doc(error_object(code, message, location))
    raise SystemExit(exit_code)


def _read_input(path):
    try:
        with open(path, "rb") as handle:
            return handle.read()
    except OSError as err:
        _fail("contract", "cannot read input: %s" % err, "args/input", EXIT_CONTRACT)


def _parse_doc(data):
    try:
        return parse_bytes(data)
    except SchemaError as err:
        _fail("contract", err.message, err.path, EXIT_CONTRACT)


def _load(doc, loader):
    try:
        return loader(doc)
    except SchemaError as err:
        _fail("contract", err.message, err.path, EXIT_CONTRACT)


def _resolve_budget(budget):
    if budget is not None:
        return budget
    env = os.environ.get("HDF_BUDGET")
    if env:
        try:
            return int(env)
        except ValueError:
            _fail(
                "contract",
                "HDF_BUDGET must be an integer, found %r" % env,
                "env/HDF_BUDGET",
                EXIT_CONTRACT,
            )
    return None


def _base_params(**updates):
    """The manifest parameter block: every slot present, unused slots null."""
    params = {
        "p": None,
        "modulus_power": None,
        "field_degree": None,
        "steps": None,
        "policy": None,
        "seed": None,
        "budget": None,
    }
    params.update(updates)
    return params


def _emit(doc, out_path, command, input_bytes, parameters, checks):
    """Write the artifact (stdout without --out, atomic file with it) and
    its manifest alongside the file."""
    if out_path:
        write_atomic(out_path, canonical_bytes(doc))
        manifest = run_manifest(
            command,
            sha256_hex(input_bytes) if input_bytes is not None else None,
            parameters,
            [out_path],
            checks,
        )
        write_atomic(out_path + ".manifest.json", canonical_bytes(manifest))
    else:
        _print_doc(doc)


def _guard(fn):
    """Map mathematical failures on well-formed input to exit code 1."""

    @functools.wraps(fn)
    def inner(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (HdflowError, AssertionError) as err:
            _fail(
                "invariant",
                "%s: %s" % (type(err).__name__, err),
                "/",
                EXIT_INVARIANT,
            )

    return inner


def _flatten_checks(entries):
    out = []
    for name, passed, counterexample in entries:
        out.append((name, passed, counterexample))
    return out


# ---------------------------------------------------------------------------
# command group


@click.group()
def main():
    """Exact Higgs-de Rham flow computations on the line."""


@main.group()
def flow():
    """Run flows and inspect their traces."""


@main.group()
def cartier():
    """Characteristic-p inverse Cartier transform."""


@main.group()
def filtration():
    """Canonical filtration search."""


@main.group()
def witt():
    """Truncated-Witt lifting stage."""


# ---------------------------------------------------------------------------
# flow run


class _SpanSpec:
    def __init__(self, basis0):
        self.basis = (basis0,)


class _FiltrationSpec:
    def __init__(self, steps):
        self.steps = tuple(steps)


def _flow_input(doc):
    """Accept a bare graded document, or a wrapper that adds one supplied
    filtration per step as chart-0 span matrices."""
    kind = require_tag(doc, None)
    if kind == "graded_higgs":
        return graded_from_json(doc), ()
    if kind != "flow_input":
        raise SchemaError(
            "flow run expects a 'graded_higgs' or 'flow_input' document",
            "/type",
        )
    G = graded_from_json(serialize._field(doc, "graded", "/"), "/graded")
    raw = serialize._field(doc, "filtrations", "/", list)
    ring = G.domain
    specs = []
    for i, fil in enumerate(raw):
        here = "/filtrations/%d" % i
        steps_raw = serialize._field(fil, "steps", here, list)
        steps = [
            _SpanSpec(
                matrix_from_json(ring, cols, "%s/steps/%d" % (here, j))
            )
            for j, cols in enumerate(steps_raw)
        ]
        specs.append(_FiltrationSpec(steps))
    return G, tuple(specs)


def _trace_certificates(trace, rule):
    """Per-step invariant recomputation, independent of the flow engine's
    own in-line assertions."""
    p = trace.stages[0].higgs.domain.p
    certs = []
    all_ok = True
    for i, stage in enumerate(trace.stages):
        if stage.flat is None:
            certs.append(None)
            continue
        entry = {}
        try:
            stage.flat.validate()
            entry["transform_valid"] = True
        except (HdflowError, ValueError):
            entry["transform_valid"] = False
        entry["p_curvature_pullback"] = p_curvature(
            stage.flat
        ) == p_curvature_prediction(stage.higgs.total())
        entry["filtration_transversal"] = is_transversal(
            stage.flat, stage.filtration
        )
        if stage.higgs.curve.is_projective:
            entry["degree_scaling"] = (
                trace.stages[i + 1].degree == p * stage.degree
            )
        if rule == "canonical":
            entry["graded_semistable"] = is_higgs_semistable(
                trace.stages[i + 1].higgs
            )[0]
        all_ok = all_ok and all(entry.values())
        certs.append(entry)
    return certs, all_ok


@flow.command("run")
@click.option("--input", "input_path", required=True, help="graded Higgs JSON")
@click.option("--steps", type=int, default=1, show_default=True)
@click.option(
    "--policy",
    type=click.Choice(["canonical", "supplied"]),
    default="canonical",
    show_default=True,
)
@click.option("--field-degree", type=int, default=1, show_default=True)
@click.option("--budget", type=int, default=None)
@click.option("--out", "out_path", default=None)
@_guard
def flow_run(input_path, steps, policy, field_degree, budget, out_path):
    """Iterate the flow and emit the trace with per-step certificates."""
    if steps < 1:
        _fail("contract", "--steps must be positive", "args/steps", EXIT_CONTRACT)
    if field_degree < 1:
        _fail(
            "contract",
            "--field-degree must be positive",
            "args/field-degree",
            EXIT_CONTRACT,
        )
    data = _read_input(input_path)
    G, fil_specs = _load(_parse_doc(data), _flow_input)
    if policy == "supplied" and len(fil_specs) < steps:
        _fail(
            "contract",
            "supplied policy needs one filtration per step (%d given, %d needed)"
            % (len(fil_specs), steps),
            "/filtrations",
            EXIT_CONTRACT,
        )
    policy_obj = FlowPolicy(
        rule=policy,
        max_steps=steps,
        field_degree=field_degree,
        filtrations=fil_specs,
    )
    trace = run_flow(G, policy_obj)
    budget_value = _resolve_budget(budget)
    if budget_value is not None:
        trace.periodicity = detect_period(trace, field_degree, budget=budget_value)
    certs, all_ok = _trace_certificates(trace, policy)
    doc = flow_trace_to_json(trace, certs)
    checks = []
    for i, entry in enumerate(certs):
        if entry is None:
            continue
        for name, passed in sorted(entry.items()):
            checks.append(
                (
                    "step-%d/%s" % (i, name),
                    passed,
                    None if passed else {"stage": i, "check": name},
                )
            )
    params = _base_params(
        p=G.domain.p,
        modulus_power=G.domain.m,
        field_degree=field_degree,
        steps=steps,
        policy=policy,
        budget=budget_value,
    )
    _emit(doc, out_path, ["flow", "run"], data, params, checks)
    raise SystemExit(EXIT_OK if all_ok else EXIT_INVARIANT)


# ---------------------------------------------------------------------------
# cartier apply


def _cartier_input(doc):
    kind = require_tag(doc, None)
    if kind == "higgs_bundle":
        return higgs_from_json(doc), None
    if kind != "cartier_input":
        raise SchemaError(
            "cartier apply expects a 'higgs_bundle' or 'cartier_input' document",
            "/type",
        )
    H = higgs_from_json(serialize._field(doc, "higgs", "/"), "/higgs")
    raw = serialize._field(doc, "lifting", "/")
    lifting = None if raw is None else lifting_from_json(raw, "/lifting")
    return H, lifting


@cartier.command("apply")
@click.option("--input", "input_path", required=True, help="Higgs bundle JSON")
@click.option("--out", "out_path", default=None)
@_guard
def cartier_apply(input_path, out_path):
    """Inverse transform of a nilpotent Higgs bundle, with validation."""
    data = _read_input(input_path)
    H, lifting = _load(_parse_doc(data), _cartier_input)
    flat = inverse_cartier_1(H, lifting=lifting)
    p = H.bundle.domain.p
    validation = {
        "degree": flat.bundle.degree(),
        "p_curvature_pullback": p_curvature(flat) == p_curvature_prediction(H),
    }
    if H.bundle.curve.is_projective:
        validation["degree_scaling"] = (
            flat.bundle.degree() == p * H.bundle.degree()
        )
    doc = {
        "schema": serialize.SCHEMA,
        "type": "cartier_output",
        "flat": serialize.flat_to_json(flat),
        "validation": validation,
    }
    checks = [
        (name, value, None)
        for name, value in sorted(validation.items())
        if isinstance(value, bool)
    ]
    ok = all(passed for _, passed, _ in checks)
    params = _base_params(p=p, modulus_power=H.bundle.domain.m)
    _emit(doc, out_path, ["cartier", "apply"], data, params, checks)
    raise SystemExit(EXIT_OK if ok else EXIT_INVARIANT)


# ---------------------------------------------------------------------------
# filtration compute


@filtration.command("compute")
@click.option("--input", "input_path", required=True, help="flat bundle JSON")
@click.option("--budget", type=int, default=None)
@click.option("--out", "out_path", default=None)
@_guard
def filtration_compute(input_path, budget, out_path):
    """Canonical filtration by iterated descent, with its iteration log."""
    data = _read_input(input_path)
    flat = _load(_parse_doc(data), flat_from_json)
    budget_value = _resolve_budget(budget)
    if budget_value is not None:
        fil, log = simpson_filtration(flat, budget=budget_value)
    else:
        fil, log = simpson_filtration(flat)
    graded = grade(flat, fil).graded
    certificates = {
        "gr_semistable": is_higgs_semistable(graded)[0],
        "filtration_transversal": is_transversal(flat, fil),
    }
    doc = {
        "schema": serialize.SCHEMA,
        "type": "filtration_output",
        "filtration": filtration_to_json(fil),
        "log": [
            {
                "mu_max": serialize.fraction_to_json(rec.mu_max),
                "r_max": rec.r_max,
                "level": rec.level,
            }
            for rec in log
        ],
        "certificates": certificates,
    }
    checks = [(name, value, None) for name, value in sorted(certificates.items())]
    ok = all(passed for _, passed, _ in checks)
    params = _base_params(
        p=flat.bundle.domain.p,
        modulus_power=flat.bundle.domain.m,
        budget=budget_value,
    )
    _emit(doc, out_path, ["filtration", "compute"], data, params, checks)
    raise SystemExit(EXIT_OK if ok else EXIT_INVARIANT)


# ---------------------------------------------------------------------------
# witt lift / witt flow-step


@witt.command("lift")
@click.option("--input", "input_path", required=True, help="lifting tuple JSON")
@click.option("--modulus-power", type=int, default=None)
@click.option("--out", "out_path", default=None)
@_guard
def witt_lift(input_path, modulus_power, out_path):
    """Lift the tuple to its twisted flat module, two ways, and compare."""
    data = _read_input(input_path)
    tup = _load(_parse_doc(data), witt_tuple_from_json)
    if modulus_power is not None and modulus_power != tup.n:
        _fail(
            "contract",
            "--modulus-power %d does not match the document modulus %d"
            % (modulus_power, tup.n),
            "/m",
            EXIT_CONTRACT,
        )
    tw = gn_construct(tup)
    sharp = sharp_construct(tup)
    certificates = {
        "carry_construction_agrees": tw.lift == sharp.lift
        and tw.module.matrix == sharp.module.matrix
    }
    doc = {
        "schema": serialize.SCHEMA,
        "type": "witt_lift_output",
        "p": tup.p,
        "m": tup.n,
        "ranks": list(tup.ranks),
        "adapted": matrix_to_json(adapted_dr_matrix(tup)) if tup.n > 1 else None,
        "lift": matrix_to_json(tw.lift),
        "twisted": matrix_to_json(tw.module.matrix),
        "certificates": certificates,
    }
    checks = [(name, value, None) for name, value in sorted(certificates.items())]
    ok = all(passed for _, passed, _ in checks)
    params = _base_params(p=tup.p, modulus_power=tup.n)
    _emit(doc, out_path, ["witt", "lift"], data, params, checks)
    raise SystemExit(EXIT_OK if ok else EXIT_INVARIANT)


@witt.command("flow-step")
@click.option("--input", "input_path", required=True, help="lifting tuple JSON")
@click.option("--out", "out_path", default=None)
@_guard
def witt_flow_step(input_path, out_path):
    """One flow step at modulus p^2 along the canonical flag filtration."""
    data = _read_input(input_path)
    tup = _load(_parse_doc(data), witt_tuple_from_json)
    if tup.n != 2:
        _fail(
            "contract",
            "flow-step runs at modulus power 2, document has %d" % tup.n,
            "/m",
            EXIT_CONTRACT,
        )
    steps = filtration_steps_from_flag(tup, tup.ring)
    step = w2_flow_step(tup, steps)
    doc = {
        "schema": serialize.SCHEMA,
        "type": "witt_flow_step_output",
        "p": tup.p,
        "m": tup.n,
        "ranks": list(step.ranks),
        "flat": matrix_to_json(step.flat.A[0]),
        "theta_next": [matrix_to_json(M) for M in step.theta_next],
        "psi": [matrix_to_json(M) for M in step.psi]
        if step.psi is not None
        else None,
        "periodic": bool(step.periodic),
        "certificates": dict(step.certificates),
    }
    checks = [
        (name, value, None)
        for name, value in sorted(step.certificates.items())
        if isinstance(value, bool)
    ]
    params = _base_params(p=tup.p, modulus_power=tup.n)
    _emit(doc, out_path, ["witt", "flow-step"], data, params, checks)
    raise SystemExit(EXIT_OK)


# ---------------------------------------------------------------------------
# check suites


def _suite_cocycle(rng, p_opt, m_opt, budget):
    """Transport between transforms at three atlases composes exactly."""
    primes = (p_opt,) if p_opt else (3, 5, 7)
    checks = []
    for trial in range(12):
        p = primes[trial % len(primes)]
        rank = rng.randint(2, 3)
        curve_kind = "P1" if trial % 2 == 0 else "A1"
        H = corpus.random_nilpotent_higgs(rng, p, rank, curve=curve_kind)
        curve = H.bundle.curve
        lifts = [corpus.random_lifting(rng, curve) for _ in range(3)]
        t12, _, _ = lifting_change_transport(H, lifts[0], lifts[1])
        t23, _, _ = lifting_change_transport(H, lifts[1], lifts[2])
        t13, _, _ = lifting_change_transport(H, lifts[0], lifts[2])
        ok = t13.phi == t23.compose(t12).phi
        checks.append(
            (
                "cocycle-%02d" % trial,
                ok,
                None if ok else {"trial": trial, "p": p, "curve": curve_kind},
            )
        )
    return checks


def _suite_gamma_relations(rng, p_opt, m_opt, budget):
    """The six divided-operator relations on random lifted tuples."""
    p = p_opt if p_opt else 3
    n = m_opt if m_opt else 2
    if p == 3:
        shapes = ((1, 1), (2, 1), (1, 2))
    else:
        shapes = ((1, 1), (2, 1), (1, 1, 1))
    checks = []
    for trial in range(6):
        ranks = shapes[trial % len(shapes)]
        tup = corpus.random_witt_tuple(rng, p, n, ranks)
        tw = gn_construct(tup)
        relations = gamma_relations_check(tw, rng=rng)
        for name in sorted(relations):
            ok = relations[name]
            checks.append(
                (
                    "gamma-%s-%02d" % (name, trial),
                    ok,
                    None if ok else {"trial": trial, "ranks": list(ranks)},
                )
            )
    return checks


def _suite_p_curvature(rng, p_opt, m_opt, budget):
    """Transform p-curvature equals the pulled-back field, fixed sign."""
    primes = (p_opt,) if p_opt else (3, 5, 7)
    checks = []
    for trial in range(10):
        p = primes[trial % len(primes)]
        rank = rng.randint(1, 3)
        curve_kind = "P1" if trial % 2 == 0 else "A1"
        H = corpus.random_nilpotent_higgs(rng, p, rank, curve=curve_kind)
        flat = inverse_cartier_1(H)
        ok = p_curvature(flat) == p_curvature_prediction(H)
        checks.append(
            (
                "p-curvature-%02d" % trial,
                ok,
                None if ok else {"trial": trial, "p": p, "curve": curve_kind},
            )
        )
    return checks


def _suite_degree_scaling(rng, p_opt, m_opt, budget):
    """One transform multiplies the degree by p."""
    primes = (p_opt,) if p_opt else (3, 5, 7)
    checks = []
    for trial in range(10):
        p = primes[trial % len(primes)]
        rank = rng.randint(1, 4)
        weight = rng.randint(0 if rank == 1 else 1, min(p - 2, rank - 1))
        params = corpus.CorpusParams(
            p=p,
            rank=rank,
            weight=weight,
            count=1,
            seed=rng.randrange(2**30),
        )
        G = corpus.generate(params)[0]
        flat = inverse_cartier_1(G.total())
        ok = flat.bundle.degree() == p * G.degree()
        checks.append(
            (
                "degree-scaling-%02d" % trial,
                ok,
                None
                if ok
                else {"trial": trial, "p": p, "degree": G.degree()},
            )
        )
    return checks


def _suite_ov_sign(rng, p_opt, m_opt, budget):
    """The frozen sign convention against its mirror, both code paths."""
    primes = (p_opt,) if p_opt else (3, 5, 7)
    checks = []
    for trial in range(10):
        p = primes[trial % len(primes)]
        rank = rng.randint(1, 3)
        curve_kind = "P1" if trial % 2 == 0 else "A1"
        H = corpus.random_nilpotent_higgs(rng, p, rank, curve=curve_kind)
        lifting = corpus.random_lifting(rng, H.bundle.curve) if trial % 3 else None
        report = ov_sign_check(H, lifting=lifting)
        ok = report.passed
        checks.append(
            (
                "ov-sign-%02d" % trial,
                ok,
                None if ok else {"trial": trial, "p": p, "curve": curve_kind},
            )
        )
    return checks


SUITES = {
    "cocycle": _suite_cocycle,
    "gamma-relations": _suite_gamma_relations,
    "p-curvature": _suite_p_curvature,
    "degree-scaling": _suite_degree_scaling,
    "ov-sign": _suite_ov_sign,
}


@main.command("check")
@click.option("--suite", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--p", "p_opt", type=int, default=None)
@click.option("--modulus-power", type=int, default=None)
@click.option("--budget", type=int, default=None)
@click.option("--out", "out_path", default=None)
@_guard
def check(suite, seed, p_opt, modulus_power, budget, out_path):
    """Run one named invariant suite, deterministically in the seed."""
    if suite not in SUITES:
        _fail(
            "contract",
            "unknown suite '%s'; available: %s"
            % (suite, ", ".join(sorted(SUITES))),
            "args/suite",
            EXIT_CONTRACT,
        )
    if p_opt is not None and p_opt not in corpus.ALLOWED_PRIMES:
        _fail(
            "contract",
            "--p must be one of %s" % (corpus.ALLOWED_PRIMES,),
            "args/p",
            EXIT_CONTRACT,
        )
    budget_value = _resolve_budget(budget)
    rng = random.Random(seed)
    entries = SUITES[suite](rng, p_opt, modulus_power, budget_value)
    failed = [e for e in entries if not e[1]]
    doc = {
        "schema": serialize.SCHEMA,
        "type": "check_report",
        "suite": suite,
        "seed": seed,
        "counts": {"passed": len(entries) - len(failed), "failed": len(failed)},
        "checks": [
            {"name": name, "passed": passed, "counterexample": counterexample}
            for name, passed, counterexample in entries
        ],
    }
    params = _base_params(
        p=p_opt, modulus_power=modulus_power, seed=seed, budget=budget_value
    )
    _emit(doc, out_path, ["check"], None, params, _flatten_checks(entries))
    raise SystemExit(EXIT_OK if not failed else EXIT_INVARIANT)


# ---------------------------------------------------------------------------
# gen-corpus


@main.command("gen-corpus")
@click.option("--p", type=int, required=True)
@click.option("--rank", type=int, required=True)
@click.option("--weight", type=int, required=True)
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--curve", type=click.Choice(["P1", "A1"]), default="P1", show_default=True
)
@click.option("--out", "out_path", default=None)
@_guard
def gen_corpus(p, rank, weight, count, seed, curve, out_path):
    """Generate a reproducible corpus of valid graded Higgs bundles."""
    try:
        params = corpus.CorpusParams(
            p=p, rank=rank, weight=weight, count=count, seed=seed, curve=curve
        )
    except corpus.CorpusParamError as err:
        _fail("contract", str(err), "args", EXIT_CONTRACT)
    instances = corpus.generate(params)
    doc = {
        "schema": serialize.SCHEMA,
        "type": "corpus",
        "params": {
            "p": p,
            "rank": rank,
            "weight": weight,
            "count": count,
            "seed": seed,
            "curve": curve,
            "max_exp": params.max_exp,
        },
        "instances": [graded_to_json(G) for G in instances],
    }
    checks = [
        (
            "instance-%02d-valid" % i,
            True,
            None,
        )
        for i in range(len(instances))
    ]
    manifest_params = _base_params(p=p, seed=seed)
    manifest_params["rank"] = rank
    manifest_params["weight"] = weight
    manifest_params["count"] = count
    manifest_params["curve"] = curve
    _emit(doc, out_path, ["gen-corpus"], None, manifest_params, checks)
    raise SystemExit(EXIT_OK)


if __name__ == "__main__":
    main()
