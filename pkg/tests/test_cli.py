"""Tests for the command line: exit-code contract, located error objects,
spec'd example behaviors, byte determinism, and the reparse property."""

import json
import random

import pytest
from click.testing import CliRunner

from hdflow.cli import main
from hdflow.corpus import CorpusParams, generate, random_witt_tuple
from hdflow.cartier import inverse_cartier_1
from hdflow.bundles import Bundle, HiggsBundle
from hdflow.curves import ProjectiveLine
from hdflow.graded import GradedHiggsBundle
from hdflow.ringmath import LaurentPoly, RingMatrix, Zmod
from hdflow.serialize import (
    canonical_bytes,
    flat_to_json,
    graded_from_json,
    graded_to_json,
    higgs_to_json,
    load_document,
    parse_bytes,
    witt_tuple_to_json,
)

from test_witt import one_periodic_unit_tuple


runner = CliRunner()


def invoke(args, **kwargs):
    return runner.invoke(main, args, **kwargs)


def write_doc(tmp_path, name, doc):
    path = tmp_path / name
    path.write_bytes(canonical_bytes(doc))
    return str(path)


def trivial_graded_doc(p=3, rank=2):
    ring = Zmod(p, 1)
    curve = ProjectiveLine(ring)
    return graded_to_json(GradedHiggsBundle([Bundle.free(curve, rank)], ()))


def line_graded_doc(p=3, a=1):
    ring = Zmod(p, 1)
    curve = ProjectiveLine(ring)
    return graded_to_json(GradedHiggsBundle([Bundle.line(curve, a)], ()))


# -- flow run ----------------------------------------------------------------


def test_flow_run_trivial_constant_trace(tmp_path):
    path = write_doc(tmp_path, "triv.json", trivial_graded_doc())
    result = invoke(["flow", "run", "--input", path, "--steps", "2"])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["type"] == "flow_trace"
    assert [s["degree"] for s in doc["stages"]] == [0, 0, 0]
    assert doc["period"] == {"preperiod": 0, "period": 1}
    for stage in doc["stages"][:-1]:
        assert stage["certificates"]["degree_scaling"]
        assert stage["certificates"]["p_curvature_pullback"]
    assert doc["stages"][-1]["certificates"] is None


def test_flow_run_degree_one_grows_without_period(tmp_path):
    path = write_doc(tmp_path, "line.json", line_graded_doc(p=3, a=1))
    result = invoke(["flow", "run", "--input", path, "--steps", "2"])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert [s["degree"] for s in doc["stages"]] == [1, 3, 9]
    assert doc["period"] is None


def test_flow_run_malformed_json_located(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{broken")
    result = invoke(["flow", "run", "--input", str(path)])
    assert result.exit_code == 2
    err = json.loads(result.output)
    assert err["type"] == "error"
    assert err["code"] == "contract"
    assert err["location"] == "/"


def test_flow_run_wrong_document_type(tmp_path):
    ring = Zmod(3, 1)
    H = HiggsBundle.zero(Bundle.free(ProjectiveLine(ring), 2))
    path = write_doc(tmp_path, "higgs.json", higgs_to_json(H))
    result = invoke(["flow", "run", "--input", path])
    assert result.exit_code == 2
    assert json.loads(result.output)["location"] == "/type"


def test_flow_run_missing_field_located(tmp_path):
    doc = trivial_graded_doc()
    del doc["pieces"]
    path = write_doc(tmp_path, "broken.json", doc)
    result = invoke(["flow", "run", "--input", path])
    assert result.exit_code == 2
    assert json.loads(result.output)["location"] == "/pieces"


def test_flow_run_supplied_policy_needs_filtrations(tmp_path):
    path = write_doc(tmp_path, "triv.json", trivial_graded_doc())
    result = invoke(
        ["flow", "run", "--input", path, "--policy", "supplied"]
    )
    assert result.exit_code == 2
    assert json.loads(result.output)["location"] == "/filtrations"


def test_flow_run_supplied_trivial_filtration(tmp_path):
    doc = {
        "schema": "hdf/1",
        "type": "flow_input",
        "graded": trivial_graded_doc(),
        "filtrations": [{"steps": []}],
    }
    path = write_doc(tmp_path, "supplied.json", doc)
    result = invoke(
        ["flow", "run", "--input", path, "--policy", "supplied", "--steps", "1"]
    )
    assert result.exit_code == 0
    out = json.loads(result.output)
    assert [s["degree"] for s in out["stages"]] == [0, 0]


def test_flow_run_writes_artifact_and_manifest(tmp_path):
    path = write_doc(tmp_path, "triv.json", trivial_graded_doc())
    out = str(tmp_path / "trace.json")
    result = invoke(["flow", "run", "--input", path, "--out", out])
    assert result.exit_code == 0
    assert result.output == ""
    trace = json.loads(open(out).read())
    assert trace["type"] == "flow_trace"
    manifest = json.loads(open(out + ".manifest.json").read())
    assert manifest["command"] == ["flow", "run"]
    assert manifest["parameters"]["p"] == 3
    assert manifest["parameters"]["policy"] == "canonical"
    assert manifest["outputs"] == [out]
    assert all(c["passed"] for c in manifest["checks"])
    first = open(out, "rb").read(), open(out + ".manifest.json", "rb").read()
    invoke(["flow", "run", "--input", path, "--out", out])
    second = open(out, "rb").read(), open(out + ".manifest.json", "rb").read()
    assert first == second


def test_flow_run_bad_flags(tmp_path):
    path = write_doc(tmp_path, "triv.json", trivial_graded_doc())
    assert invoke(["flow", "run", "--input", path, "--steps", "0"]).exit_code == 2
    assert (
        invoke(
            ["flow", "run", "--input", path, "--policy", "sideways"]
        ).exit_code
        == 2
    )
    assert invoke(["flow", "run", "--input", str(tmp_path / "no.json")]).exit_code == 2


# -- cartier apply -----------------------------------------------------------


def test_cartier_apply_validates_transform(tmp_path):
    G = generate(CorpusParams(p=3, rank=2, weight=1, count=1, seed=4))[0]
    path = write_doc(tmp_path, "h.json", higgs_to_json(G.total()))
    result = invoke(["cartier", "apply", "--input", path])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["type"] == "cartier_output"
    assert doc["validation"]["degree_scaling"] is True
    assert doc["validation"]["p_curvature_pullback"] is True
    assert doc["validation"]["degree"] == 3 * G.degree()
    assert load_document(doc["flat"]).bundle.rank == 2


def test_cartier_apply_with_explicit_lifting(tmp_path):
    from hdflow.corpus import random_lifting
    from hdflow.serialize import lifting_to_json

    G = generate(CorpusParams(p=3, rank=2, weight=1, count=1, seed=6))[0]
    H = G.total()
    lifting = random_lifting(random.Random(2), H.bundle.curve)
    doc = {
        "schema": "hdf/1",
        "type": "cartier_input",
        "higgs": higgs_to_json(H),
        "lifting": lifting_to_json(lifting),
    }
    path = write_doc(tmp_path, "ci.json", doc)
    result = invoke(["cartier", "apply", "--input", path])
    assert result.exit_code == 0
    assert json.loads(result.output)["validation"]["p_curvature_pullback"]


def test_cartier_apply_rejects_non_nilpotent(tmp_path):
    from hdflow.curves import AffineLine

    ring = Zmod(3, 1)
    E = Bundle.free(AffineLine(ring), 1)
    H = HiggsBundle(E, (RingMatrix(ring, [[LaurentPoly.one(ring)]]),))
    path = write_doc(tmp_path, "nn.json", higgs_to_json(H))
    result = invoke(["cartier", "apply", "--input", path])
    assert result.exit_code == 1
    assert json.loads(result.output)["code"] == "invariant"


# -- filtration compute ------------------------------------------------------


def test_filtration_compute_semistable(tmp_path):
    ring = Zmod(3, 1)
    G = GradedHiggsBundle([Bundle.free(ProjectiveLine(ring), 2)], ())
    flat = inverse_cartier_1(G.total())
    path = write_doc(tmp_path, "flat.json", flat_to_json(flat))
    result = invoke(["filtration", "compute", "--input", path])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["certificates"] == {
        "filtration_transversal": True,
        "gr_semistable": True,
    }
    assert doc["log"] == []


def test_filtration_compute_refuses_unstable(tmp_path):
    ring = Zmod(3, 1)
    H = HiggsBundle.zero(Bundle.sum_of_lines(ProjectiveLine(ring), (0, 1)))
    flat = inverse_cartier_1(H)
    assert flat.bundle.splitting_type() == [3, 0]
    path = write_doc(tmp_path, "unstable.json", flat_to_json(flat))
    result = invoke(["filtration", "compute", "--input", path])
    assert result.exit_code == 1
    err = json.loads(result.output)
    assert err["code"] == "invariant"
    assert "NotNablaSemistable" in err["message"]


def test_filtration_compute_env_budget(tmp_path, monkeypatch):
    ring = Zmod(3, 1)
    G = GradedHiggsBundle([Bundle.free(ProjectiveLine(ring), 2)], ())
    flat = inverse_cartier_1(G.total())
    path = write_doc(tmp_path, "flat.json", flat_to_json(flat))
    monkeypatch.setenv("HDF_BUDGET", "junk")
    result = invoke(["filtration", "compute", "--input", path])
    assert result.exit_code == 2
    assert json.loads(result.output)["location"] == "env/HDF_BUDGET"
    monkeypatch.setenv("HDF_BUDGET", "100000")
    result = invoke(["filtration", "compute", "--input", path])
    assert result.exit_code == 0


# -- witt subcommands --------------------------------------------------------


def test_witt_lift_agrees_across_constructions(tmp_path):
    tup = random_witt_tuple(random.Random(31), 3, 2, (1, 1))
    path = write_doc(tmp_path, "tup.json", witt_tuple_to_json(tup))
    result = invoke(["witt", "lift", "--input", path])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["type"] == "witt_lift_output"
    assert doc["certificates"]["carry_construction_agrees"] is True
    assert doc["m"] == 2 and doc["p"] == 3
    assert doc["adapted"] is not None


def test_witt_lift_modulus_flag_mismatch(tmp_path):
    tup = random_witt_tuple(random.Random(32), 3, 2, (1, 1))
    path = write_doc(tmp_path, "tup.json", witt_tuple_to_json(tup))
    result = invoke(
        ["witt", "lift", "--input", path, "--modulus-power", "3"]
    )
    assert result.exit_code == 2
    assert json.loads(result.output)["location"] == "/m"


def test_witt_flow_step_one_periodic_example(tmp_path):
    ring = Zmod(3, 2)
    tup = one_periodic_unit_tuple(ring)
    path = write_doc(tmp_path, "unit.json", witt_tuple_to_json(tup))
    result = invoke(["witt", "flow-step", "--input", path])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["periodic"] is True
    assert doc["certificates"]["baseline"] == "canonical"
    assert doc["certificates"]["psi_grade0_identity"] is True
    assert doc["theta_next"] == [[[[[2, 1]]]]]
    assert doc["psi"] == [[[[[0, 1]]]], [[[[2, 1]]]]]


def test_witt_flow_step_needs_level_two(tmp_path):
    tup = random_witt_tuple(random.Random(33), 3, 1, (1, 1))
    path = write_doc(tmp_path, "tup1.json", witt_tuple_to_json(tup))
    result = invoke(["witt", "flow-step", "--input", path])
    assert result.exit_code == 2
    assert json.loads(result.output)["location"] == "/m"


# -- check -------------------------------------------------------------------


def test_check_suites_pass():
    for suite in (
        "cocycle",
        "gamma-relations",
        "p-curvature",
        "degree-scaling",
        "ov-sign",
    ):
        result = invoke(["check", "--suite", suite, "--seed", "3"])
        assert result.exit_code == 0, (suite, result.output)
        doc = json.loads(result.output)
        assert doc["counts"]["failed"] == 0
        assert doc["counts"]["passed"] == len(doc["checks"])
        assert doc["suite"] == suite


def test_check_unknown_suite():
    result = invoke(["check", "--suite", "nonsense"])
    assert result.exit_code == 2
    err = json.loads(result.output)
    assert err["location"] == "args/suite"
    assert "cocycle" in err["message"]


def test_check_rejects_unsupported_prime():
    result = invoke(["check", "--suite", "cocycle", "--p", "4"])
    assert result.exit_code == 2
    assert json.loads(result.output)["location"] == "args/p"


def test_check_deterministic_given_seed():
    a = invoke(["check", "--suite", "gamma-relations", "--seed", "12"])
    b = invoke(["check", "--suite", "gamma-relations", "--seed", "12"])
    assert a.output == b.output
    c = invoke(["check", "--suite", "gamma-relations", "--seed", "13"])
    assert c.exit_code == 0
    assert a.output != c.output


def test_check_prime_restriction_applies():
    result = invoke(["check", "--suite", "p-curvature", "--seed", "1", "--p", "5"])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["counts"]["failed"] == 0


# -- gen-corpus --------------------------------------------------------------


def test_gen_corpus_example_parameters():
    result = invoke(
        [
            "gen-corpus",
            "--p", "3", "--rank", "2", "--weight", "1",
            "--count", "10", "--seed", "7",
        ]
    )
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["type"] == "corpus"
    assert len(doc["instances"]) == 10
    for inst in doc["instances"]:
        G = graded_from_json(inst)
        G.validate()
        assert G.rank == 2


def test_gen_corpus_rank4_nilpotency():
    result = invoke(
        [
            "gen-corpus",
            "--p", "5", "--rank", "4", "--weight", "3",
            "--count", "5", "--seed", "1",
        ]
    )
    assert result.exit_code == 0
    for inst in json.loads(result.output)["instances"]:
        H = graded_from_json(inst).total()
        assert H.nilpotency_index() <= 4


def test_gen_corpus_rejects_excess_weight():
    result = invoke(
        ["gen-corpus", "--p", "3", "--rank", "3", "--weight", "2"]
    )
    assert result.exit_code == 2
    assert json.loads(result.output)["code"] == "contract"


def test_gen_corpus_deterministic():
    args = [
        "gen-corpus",
        "--p", "7", "--rank", "3", "--weight", "2",
        "--count", "4", "--seed", "21",
    ]
    assert invoke(args).output == invoke(args).output


# -- the reparse property ----------------------------------------------------


def test_emitted_documents_reparse(tmp_path):
    """Every emitted document parses back and passes its type's loader."""
    outputs = []
    path = write_doc(tmp_path, "triv.json", trivial_graded_doc())
    outputs.append(invoke(["flow", "run", "--input", path]).output)
    G = generate(CorpusParams(p=3, rank=2, weight=1, count=1, seed=4))[0]
    hp = write_doc(tmp_path, "h.json", higgs_to_json(G.total()))
    outputs.append(invoke(["cartier", "apply", "--input", hp]).output)
    outputs.append(invoke(["check", "--suite", "cocycle", "--seed", "1"]).output)
    outputs.append(
        invoke(
            ["gen-corpus", "--p", "3", "--rank", "2", "--weight", "1",
             "--count", "2", "--seed", "3"]
        ).output
    )
    for text in outputs:
        doc = parse_bytes(text.encode())
        assert doc["schema"] == "hdf/1"
        if doc["type"] == "flow_trace":
            for stage in doc["stages"]:
                G2 = graded_from_json(stage["higgs"])
                G2.validate()
                if stage["transform"] is not None:
                    load_document(stage["transform"])
        elif doc["type"] == "cartier_output":
            load_document(doc["flat"])
        elif doc["type"] == "corpus":
            for inst in doc["instances"]:
                graded_from_json(inst).validate()
